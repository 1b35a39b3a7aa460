use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::generator::{fd_matrix_partials, GeneratorSpec, GuardFn, MatrixFn, MatrixPartialsFn, PrimalCoords};
use crate::numeric::{self, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signature {
    /// Positive definite everywhere.
    Riemannian,
    /// Non-degenerate but possibly indefinite.
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSource {
    /// G = ∇²ψ of a generator.
    Generator,
    UserSupplied,
}

/// A field of fundamental matrices G(ξ).
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    fundamental: MatrixFn,
    partials: Option<MatrixPartialsFn>,
    signature: Signature,
    source: MetricSource,
    domain: Option<GuardFn>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("dim", &self.dim)
            .field("signature", &self.signature)
            .field("source", &self.source)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl MetricField {
    /// User-supplied Riemannian metric.
    pub fn new<F>(dim: usize, fundamental: F) -> Self
    where
        F: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        assert!(dim > 0, "metric dimension must be positive");
        MetricField {
            dim,
            fundamental: Arc::new(fundamental),
            partials: None,
            signature: Signature::Riemannian,
            source: MetricSource::UserSupplied,
            domain: None,
        }
    }

    pub fn euclidean(dim: usize) -> Self {
        MetricField::new(dim, move |_| Matrix::identity(dim, dim))
            .with_partials(move |_| vec![Matrix::zeros(dim, dim); dim])
    }

    /// Hessian metric G = ∇²ψ, sharing the generator's domain and, when
    /// present, its analytic third derivatives.
    pub fn from_generator(gen: &GeneratorSpec) -> Self {
        let g1 = gen.clone();
        let g2 = gen.clone();
        let mut m = MetricField::new(gen.dim(), move |x| g1.hessian_unchecked(x))
            .with_domain(move |x| g2.in_domain(x));
        if gen.has_analytic_third() {
            let g3 = gen.clone();
            m = m.with_partials(move |x| g3.hessian_partials_unchecked(x));
        }
        m.source = MetricSource::Generator;
        m
    }

    pub fn with_signature(mut self, signature: Signature) -> Self {
        self.signature = signature;
        self
    }

    /// Analytic partials ∂_l G for l = 0..dim.
    pub fn with_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    {
        self.partials = Some(Arc::new(f));
        self
    }

    pub fn with_domain<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(f));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn source(&self) -> MetricSource {
        self.source
    }

    pub fn in_domain(&self, xi: &Vector) -> bool {
        xi.len() == self.dim && numeric::all_finite(xi) && self.domain.as_ref().is_none_or(|g| g(xi))
    }

    pub(crate) fn guard(&self, xi: &Vector) -> Result<()> {
        check_dim(self.dim, xi.len())?;
        if self.in_domain(xi) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                point: xi.as_slice().to_vec(),
            })
        }
    }

    /// Raw G(ξ), no validation.
    pub fn matrix_unchecked(&self, xi: &Vector) -> Matrix {
        (self.fundamental)(xi)
    }

    /// G(ξ), validated: symmetric within 1e-12, non-degenerate, and positive
    /// definite when the signature is Riemannian.
    pub fn matrix(&self, p: &PrimalCoords) -> Result<Matrix> {
        self.guard(&p.0)?;
        let g = self.matrix_unchecked(&p.0);
        if g.nrows() != self.dim || g.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: g.nrows(),
            });
        }
        if !g.iter().all(|v| v.is_finite()) || numeric::asymmetry(&g) > 1e-12 {
            return Err(Error::Invalid(format!("fundamental matrix at {:?} is not finite and symmetric", p.as_slice())));
        }
        if numeric::checked_inverse(&g).is_none() {
            return Err(Error::DegenerateMetric { point: p.to_vec() });
        }
        if self.signature == Signature::Riemannian {
            let min_eigenvalue = numeric::min_eigenvalue(&g);
            if min_eigenvalue <= 0.0 {
                return Err(Error::IndefiniteMetric { min_eigenvalue });
            }
        }
        Ok(g)
    }

    /// ∂_l G(ξ) for each coordinate l.
    pub fn partials_unchecked(&self, xi: &Vector) -> Vec<Matrix> {
        match &self.partials {
            Some(f) => f(xi),
            None => fd_matrix_partials(xi, |x| self.matrix_unchecked(x), |x| self.in_domain(x)),
        }
    }

    pub(crate) fn inverse_at(&self, xi: &Vector) -> Result<(Matrix, Matrix)> {
        let g = self.matrix_unchecked(xi);
        let inv = numeric::checked_inverse(&g).ok_or_else(|| Error::DegenerateMetric {
            point: xi.as_slice().to_vec(),
        })?;
        Ok((g, inv))
    }

    /// g(u, v) = uᵀ G(ξ) v
    pub fn inner(&self, p: &PrimalCoords, u: &Vector, v: &Vector) -> Result<f64> {
        check_dim(self.dim, u.len())?;
        check_dim(self.dim, v.len())?;
        let g = self.matrix(p)?;
        Ok(u.dot(&(g * v)))
    }
}

/// A tangent vector v = v^i ∂_i attached to a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: PrimalCoords,
    pub components: Vector,
}

impl TangentVector {
    pub fn new(base: impl Into<Vec<f64>>, components: impl Into<Vec<f64>>) -> Self {
        TangentVector {
            base: PrimalCoords::new(base),
            components: Vector::from_vec(components.into()),
        }
    }
}

/// Connection coefficients Γ^k_{ij}, stored with exact symmetry in (i, j).
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Γ^k_{ij}
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    /// a^k = Γ^k_{ij} v^i v^j
    pub fn contract(&self, v: &Vector) -> Vector {
        let n = self.dim;
        Vector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += self.get(k, i, j) * v[i] * v[j];
                }
            }
            s
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn from_parts(inverse: &Matrix, partials: &[Matrix]) -> Self {
        let n = inverse.nrows();
        let mut data = vec![0.0; n * n * n];
        for i in 0..n {
            for j in i..n {
                for k in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        let lowered = partials[i][(j, l)] + partials[j][(i, l)] - partials[l][(i, j)];
                        s += inverse[(k, l)] * lowered;
                    }
                    let v = 0.5 * s;
                    data[(k * n + i) * n + j] = v;
                    data[(k * n + j) * n + i] = v;
                }
            }
        }
        Christoffel { dim: n, data }
    }
}

/// Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij}).
pub fn christoffel(metric: &MetricField, p: &PrimalCoords) -> Result<Christoffel> {
    metric.guard(&p.0)?;
    christoffel_unchecked(metric, &p.0)
}

pub(crate) fn christoffel_unchecked(metric: &MetricField, xi: &Vector) -> Result<Christoffel> {
    let (_, inv) = metric.inverse_at(xi)?;
    Ok(Christoffel::from_parts(&inv, &metric.partials_unchecked(xi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentKind {
    Spacelike,
    Lightlike,
    Timelike,
}

/// Sign of g(v, v) with a 1e-12 band around zero.
pub fn classify_tangent(metric: &MetricField, v: &TangentVector) -> Result<TangentKind> {
    classify_tangent_with(metric, v, 1e-12)
}

pub fn classify_tangent_with(metric: &MetricField, v: &TangentVector, tolerance: f64) -> Result<TangentKind> {
    metric.guard(&v.base.0)?;
    check_dim(metric.dim(), v.components.len())?;
    let g = metric.matrix_unchecked(&v.base.0);
    let q = v.components.dot(&(g * &v.components));
    Ok(if q > tolerance {
        TangentKind::Spacelike
    } else if q < -tolerance {
        TangentKind::Timelike
    } else {
        TangentKind::Lightlike
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{FamilyKind, FamilySpec};
    use crate::numeric::sigmoid;
    use approx::assert_abs_diff_eq;

    fn exp_metric() -> MetricField {
        MetricField::new(1, |x| Matrix::from_element(1, 1, x[0].exp()))
    }

    #[test]
    fn euclidean_christoffel_vanishes() {
        let c = christoffel(&MetricField::euclidean(3), &PrimalCoords::new([1.0, -2.0, 0.5])).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        // Constant metric without analytic partials: differences cancel exactly.
        let m = MetricField::new(2, |_| Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]));
        let c = christoffel(&m, &PrimalCoords::new([0.3, 0.1])).unwrap();
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn exponential_metric_christoffel() {
        for &x in &[-1.0, 0.0, 2.0] {
            let c = christoffel(&exp_metric(), &PrimalCoords::new([x])).unwrap();
            assert_abs_diff_eq!(c.get(0, 0, 0), 0.5, epsilon = 1e-7);
        }
    }

    #[test]
    fn bernoulli_christoffel() {
        let g = FamilySpec::new(FamilyKind::BernoulliProduct, 1).log_partition();
        let m = MetricField::from_generator(&g);
        let c = christoffel(&m, &PrimalCoords::new([0.0])).unwrap();
        assert_abs_diff_eq!(c.get(0, 0, 0), 0.0, epsilon = 1e-15);
        let x = 0.8;
        let c = christoffel(&m, &PrimalCoords::new([x])).unwrap();
        assert_abs_diff_eq!(c.get(0, 0, 0), 0.5 * (1.0 - 2.0 * sigmoid(x)), epsilon = 1e-12);
        // Same value through finite differences of the Hessian.
        let fd = MetricField::new(1, move |p| g.hessian_unchecked(p));
        let c2 = christoffel(&fd, &PrimalCoords::new([x])).unwrap();
        assert_abs_diff_eq!(c2.get(0, 0, 0), c.get(0, 0, 0), epsilon = 1e-8);
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices() {
        let m = MetricField::new(3, |x| {
            Matrix::from_row_slice(
                3,
                3,
                &[
                    2.0 + x[0].sin(), 0.3 * x[1], 0.1 * x[2] * x[0],
                    0.3 * x[1], 3.0 + x[2] * x[2], 0.2,
                    0.1 * x[2] * x[0], 0.2, 1.5 + x[0].exp(),
                ],
            )
        });
        let c = christoffel(&m, &PrimalCoords::new([0.4, -0.2, 0.9])).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(c.get(k, i, j), c.get(k, j, i));
                }
            }
        }
    }

    #[test]
    fn singular_metric_is_degenerate() {
        let m = MetricField::new(2, |_| Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let err = christoffel(&m, &PrimalCoords::new([0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateMetric { .. }));
        assert!(matches!(m.matrix(&PrimalCoords::new([0.0, 0.0])), Err(Error::DegenerateMetric { .. })));
    }

    #[test]
    fn riemannian_metric_must_be_definite() {
        let mink = MetricField::new(2, |_| Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0])));
        assert!(matches!(
            mink.matrix(&PrimalCoords::new([0.0, 0.0])),
            Err(Error::IndefiniteMetric { .. })
        ));
        let mink = mink.with_signature(Signature::Pseudo);
        assert!(mink.matrix(&PrimalCoords::new([0.0, 0.0])).is_ok());
    }

    #[test]
    fn classification_examples() {
        let e = MetricField::euclidean(2);
        assert_eq!(classify_tangent(&e, &TangentVector::new([0.0, 0.0], [1.0, 0.0])).unwrap(), TangentKind::Spacelike);
        assert_eq!(classify_tangent(&e, &TangentVector::new([0.0, 0.0], [0.0, 0.0])).unwrap(), TangentKind::Lightlike);
        let mink = MetricField::new(2, |_| Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0])))
            .with_signature(Signature::Pseudo);
        assert_eq!(classify_tangent(&mink, &TangentVector::new([0.0, 0.0], [1.0, 1.0])).unwrap(), TangentKind::Lightlike);
        assert_eq!(classify_tangent(&mink, &TangentVector::new([0.0, 0.0], [0.5, 1.0])).unwrap(), TangentKind::Timelike);
        assert_eq!(classify_tangent(&mink, &TangentVector::new([0.0, 0.0], [1.0, 0.5])).unwrap(), TangentKind::Spacelike);
    }
}
