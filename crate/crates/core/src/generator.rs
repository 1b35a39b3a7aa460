//! Strictly convex generators and their Legendre transformation.
//!
//! A [`GeneratorSpec`] bundles a potential ψ on an open convex domain with
//! optional analytic derivatives. Missing derivatives fall back to central
//! finite differences. The gradient map ξ ↦ ∇ψ(ξ) defines the dual chart and
//! is inverted by damped Newton iteration, which gives the Legendre dual
//! function ψ*(ξ*) = ξ·ξ* − ψ(ξ) at the paired point.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::numeric::{self, fd_step, Matrix, Vector, GRADIENT_STEP, HESSIAN_STEP};

pub type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
/// Partial derivatives of a matrix field: entry `l` holds ∂_l M.
pub type MatrixPartialsFn = Arc<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>;
pub type GuardFn = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;

/// Point in the primal (ξ) chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalCoords(pub Vector);

/// Point in the dual (ξ*) chart.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCoords(pub Vector);

macro_rules! coords_impl {
    ($t:ident) => {
        impl $t {
            pub fn new(v: impl Into<Vec<f64>>) -> Self {
                $t(Vector::from_vec(v.into()))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn vector(&self) -> &Vector {
                &self.0
            }

            pub fn as_slice(&self) -> &[f64] {
                self.0.as_slice()
            }

            pub fn to_vec(&self) -> Vec<f64> {
                self.0.as_slice().to_vec()
            }
        }

        impl From<Vec<f64>> for $t {
            fn from(v: Vec<f64>) -> Self {
                $t(Vector::from_vec(v))
            }
        }

        impl From<Vector> for $t {
            fn from(v: Vector) -> Self {
                $t(v)
            }
        }
    };
}

coords_impl!(PrimalCoords);
coords_impl!(DualCoords);

/// Controls for the Newton inversion of the gradient map.
#[derive(Debug, Clone)]
pub struct LegendreOptions {
    /// Starting point; defaults to the generator's reference point.
    pub hint: Option<Vector>,
    /// Relative residual tolerance: stop once |∇ψ(ξ) − ξ*| ≤ tol·(1 + |ξ*|).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for LegendreOptions {
    fn default() -> Self {
        LegendreOptions {
            hint: None,
            tolerance: 1e-10,
            max_iterations: 100,
            max_halvings: 60,
        }
    }
}

impl LegendreOptions {
    pub fn with_hint(hint: Vector) -> Self {
        LegendreOptions {
            hint: Some(hint),
            ..Default::default()
        }
    }
}

/// Pointwise health report for a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorDiagnostics {
    pub hessian_asymmetry: f64,
    pub min_eigenvalue: f64,
    /// Max relative deviation between the gradient and central differences of ψ.
    pub gradient_fd_error: f64,
}

/// A strictly convex potential ψ over an open convex domain.
#[derive(Clone)]
pub struct GeneratorSpec {
    dim: usize,
    value: ScalarFn,
    gradient: Option<VectorFn>,
    hessian: Option<MatrixFn>,
    third: Option<MatrixPartialsFn>,
    domain: Option<GuardFn>,
    reference: Vector,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .field("analytic_third", &self.third.is_some())
            .field("guarded", &self.domain.is_some())
            .finish()
    }
}

impl GeneratorSpec {
    /// Generator from its value alone; derivatives come from finite differences.
    pub fn new<F>(dim: usize, value: F) -> Self
    where
        F: Fn(&Vector) -> f64 + Send + Sync + 'static,
    {
        assert!(dim > 0, "generator dimension must be positive");
        GeneratorSpec {
            dim,
            value: Arc::new(value),
            gradient: None,
            hessian: None,
            third: None,
            domain: None,
            reference: Vector::zeros(dim),
        }
    }

    pub fn with_gradient<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(f));
        self
    }

    pub fn with_hessian<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(f));
        self
    }

    /// Third derivatives, returned as the partials ∂_l ∇²ψ for l = 0..dim.
    pub fn with_third_derivative<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static,
    {
        self.third = Some(Arc::new(f));
        self
    }

    /// Predicate marking the open convex domain. Non-finite points are always
    /// rejected, with or without a guard.
    pub fn with_domain<F>(mut self, f: F) -> Self
    where
        F: Fn(&Vector) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(f));
        self
    }

    /// Interior point used to start Newton inversions (defaults to zero).
    pub fn with_reference(mut self, reference: Vector) -> Self {
        assert_eq!(reference.len(), self.dim);
        self.reference = reference;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reference(&self) -> &Vector {
        &self.reference
    }

    pub fn has_analytic_third(&self) -> bool {
        self.third.is_some()
    }

    pub fn in_domain(&self, xi: &Vector) -> bool {
        xi.len() == self.dim
            && numeric::all_finite(xi)
            && self.domain.as_ref().is_none_or(|g| g(xi))
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

    /// ψ(ξ) without a domain check.
    pub fn value_unchecked(&self, xi: &Vector) -> f64 {
        (self.value)(xi)
    }

    pub fn gradient_unchecked(&self, xi: &Vector) -> Vector {
        match &self.gradient {
            Some(g) => g(xi),
            None => self.fd_gradient(xi),
        }
    }

    /// Symmetrized Hessian without a domain check.
    pub fn hessian_unchecked(&self, xi: &Vector) -> Matrix {
        let h = match &self.hessian {
            Some(h) => h(xi),
            None => self.fd_hessian(xi),
        };
        numeric::symmetrize(&h)
    }

    /// Partials ∂_l ∇²ψ; analytic when supplied, else central differences of
    /// the Hessian.
    pub fn hessian_partials_unchecked(&self, xi: &Vector) -> Vec<Matrix> {
        if let Some(t) = &self.third {
            return t(xi).iter().map(numeric::symmetrize).collect();
        }
        fd_matrix_partials(xi, |x| self.hessian_unchecked(x), |x| self.in_domain(x))
    }

    pub fn value(&self, p: &PrimalCoords) -> Result<f64> {
        self.guard(&p.0)?;
        Ok(self.value_unchecked(&p.0))
    }

    pub fn gradient(&self, p: &PrimalCoords) -> Result<Vector> {
        self.guard(&p.0)?;
        Ok(self.gradient_unchecked(&p.0))
    }

    pub fn hessian(&self, p: &PrimalCoords) -> Result<Matrix> {
        self.guard(&p.0)?;
        Ok(self.hessian_unchecked(&p.0))
    }

    /// Central difference gradient of ψ, step 1e-6·(1+|ξ_i|).
    pub fn fd_gradient(&self, xi: &Vector) -> Vector {
        Vector::from_fn(self.dim, |i, _| {
            let mut h = fd_step(GRADIENT_STEP, xi[i]);
            loop {
                let mut plus = xi.clone();
                let mut minus = xi.clone();
                plus[i] += h;
                minus[i] -= h;
                if (self.in_domain(&plus) && self.in_domain(&minus)) || h < 1e-14 {
                    return ((self.value)(&plus) - (self.value)(&minus)) / (2.0 * h);
                }
                h *= 0.5;
            }
        })
    }

    /// Finite-difference Hessian, step 1e-4·(1+|ξ_i|). Differences the
    /// analytic gradient when one exists, otherwise ψ itself.
    pub fn fd_hessian(&self, xi: &Vector) -> Matrix {
        let n = self.dim;
        let h: Vec<f64> = (0..n).map(|i| fd_step(HESSIAN_STEP, xi[i])).collect();
        let shifted = |pairs: &[(usize, f64)]| {
            let mut x = xi.clone();
            for &(i, d) in pairs {
                x[i] += d;
            }
            x
        };
        let mut out = Matrix::zeros(n, n);
        if let Some(g) = &self.gradient {
            for j in 0..n {
                let col = (g(&shifted(&[(j, h[j])])) - g(&shifted(&[(j, -h[j])]))) / (2.0 * h[j]);
                out.set_column(j, &col);
            }
            return numeric::symmetrize(&out);
        }
        let f = &self.value;
        let f0 = f(xi);
        for i in 0..n {
            out[(i, i)] = (f(&shifted(&[(i, h[i])])) - 2.0 * f0 + f(&shifted(&[(i, -h[i])])))
                / (h[i] * h[i]);
            for j in (i + 1)..n {
                let v = (f(&shifted(&[(i, h[i]), (j, h[j])]))
                    - f(&shifted(&[(i, h[i]), (j, -h[j])]))
                    - f(&shifted(&[(i, -h[i]), (j, h[j])]))
                    + f(&shifted(&[(i, -h[i]), (j, -h[j])])))
                    / (4.0 * h[i] * h[j]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// ξ* = ∇ψ(ξ).
    pub fn to_dual(&self, p: &PrimalCoords) -> Result<DualCoords> {
        Ok(DualCoords(self.gradient(p)?))
    }

    pub fn from_dual(&self, d: &DualCoords) -> Result<PrimalCoords> {
        self.from_dual_with(d, &LegendreOptions::default())
    }

    /// Solves ∇ψ(ξ) = ξ* by damped Newton iteration.
    ///
    /// Each Newton step is halved until the candidate stays in the domain and
    /// the residual decreases.
    pub fn from_dual_with(&self, d: &DualCoords, opts: &LegendreOptions) -> Result<PrimalCoords> {
        check_dim(self.dim, d.dim())?;
        let target = &d.0;
        if !numeric::all_finite(target) {
            return Err(Error::InversionFailure {
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
        let mut xi = match &opts.hint {
            Some(h) if self.in_domain(h) => h.clone(),
            _ => {
                if !self.in_domain(&self.reference) {
                    return Err(Error::Invalid(
                        "generator reference point is outside its domain".into(),
                    ));
                }
                self.reference.clone()
            }
        };
        let tol = opts.tolerance * (1.0 + target.norm());
        let mut residual = self.gradient_unchecked(&xi) - target;
        let mut rnorm = residual.norm();
        for iter in 0..opts.max_iterations {
            if rnorm <= tol {
                return Ok(PrimalCoords(xi));
            }
            let hess = self.hessian_unchecked(&xi);
            let step = numeric::solve(&hess, &(-&residual)).ok_or(Error::InversionFailure {
                iterations: iter,
                residual: rnorm,
            })?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let candidate = &xi + &step * scale;
                if self.in_domain(&candidate) {
                    let r = self.gradient_unchecked(&candidate) - target;
                    let n = r.norm();
                    if n.is_finite() && (n < rnorm || n <= tol) {
                        xi = candidate;
                        residual = r;
                        rnorm = n;
                        accepted = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(Error::InversionFailure {
                    iterations: iter,
                    residual: rnorm,
                });
            }
        }
        if rnorm <= tol {
            Ok(PrimalCoords(xi))
        } else {
            Err(Error::InversionFailure {
                iterations: opts.max_iterations,
                residual: rnorm,
            })
        }
    }

    /// Legendre dual value ψ*(ξ*) = max_ξ (ξ·ξ* − ψ(ξ)), attained at the
    /// inverted point.
    pub fn dual_value(&self, d: &DualCoords) -> Result<f64> {
        self.dual_value_with(d, &LegendreOptions::default())
    }

    pub fn dual_value_with(&self, d: &DualCoords, opts: &LegendreOptions) -> Result<f64> {
        let xi = self.from_dual_with(d, opts)?;
        Ok(xi.0.dot(&d.0) - self.value_unchecked(&xi.0))
    }

    /// ψ* as a generator over the dual chart. Its gradient is the inverse
    /// gradient map and its Hessian the inverse of ∇²ψ at the paired point.
    /// Failed inversions surface as NaN values and an out-of-domain guard.
    pub fn legendre_dual(&self) -> GeneratorSpec {
        let n = self.dim;
        let g1 = self.clone();
        let g2 = self.clone();
        let g3 = self.clone();
        let g4 = self.clone();
        let reference = if self.in_domain(&self.reference) {
            self.gradient_unchecked(&self.reference)
        } else {
            Vector::zeros(n)
        };
        GeneratorSpec::new(n, move |xs| {
            g1.dual_value(&DualCoords(xs.clone())).unwrap_or(f64::NAN)
        })
        .with_gradient(move |xs| match g2.from_dual(&DualCoords(xs.clone())) {
            Ok(p) => p.0,
            Err(_) => Vector::from_element(n, f64::NAN),
        })
        .with_hessian(move |xs| {
            g3.from_dual(&DualCoords(xs.clone()))
                .ok()
                .and_then(|p| numeric::checked_inverse(&g3.hessian_unchecked(&p.0)))
                .unwrap_or_else(|| Matrix::from_element(n, n, f64::NAN))
        })
        .with_domain(move |xs| g4.from_dual(&DualCoords(xs.clone())).is_ok())
        .with_reference(reference)
    }

    /// Symmetry, convexity and gradient consistency at one point.
    pub fn diagnostics(&self, p: &PrimalCoords) -> Result<GeneratorDiagnostics> {
        self.guard(&p.0)?;
        let raw = match &self.hessian {
            Some(h) => h(&p.0),
            None => self.fd_hessian(&p.0),
        };
        let grad = self.gradient_unchecked(&p.0);
        let fd = self.fd_gradient(&p.0);
        let gradient_fd_error = (&grad - &fd)
            .iter()
            .zip(grad.iter())
            .map(|(d, g)| d.abs() / (1.0 + g.abs()))
            .fold(0.0, f64::max);
        Ok(GeneratorDiagnostics {
            hessian_asymmetry: numeric::asymmetry(&raw),
            min_eigenvalue: numeric::min_eigenvalue(&raw),
            gradient_fd_error,
        })
    }
}

/// Central differences of a matrix field, step 1e-4·(1+|ξ_l|), shrinking the
/// step when a probe leaves the domain.
pub(crate) fn fd_matrix_partials(
    xi: &Vector,
    field: impl Fn(&Vector) -> Matrix,
    in_domain: impl Fn(&Vector) -> bool,
) -> Vec<Matrix> {
    (0..xi.len())
        .map(|l| {
            let mut h = fd_step(HESSIAN_STEP, xi[l]);
            loop {
                let mut plus = xi.clone();
                let mut minus = xi.clone();
                plus[l] += h;
                minus[l] -= h;
                if (in_domain(&plus) && in_domain(&minus)) || h < 1e-12 {
                    return (field(&plus) - field(&minus)) / (2.0 * h);
                }
                h *= 0.5;
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{sigmoid, softplus};
    use approx::assert_abs_diff_eq;

    fn quadratic(dim: usize) -> GeneratorSpec {
        GeneratorSpec::new(dim, |x| 0.5 * x.norm_squared())
            .with_gradient(|x| x.clone())
            .with_hessian(move |x| Matrix::identity(x.len(), x.len()))
    }

    fn logistic() -> GeneratorSpec {
        GeneratorSpec::new(1, |x| softplus(x[0]))
            .with_gradient(|x| Vector::from_element(1, sigmoid(x[0])))
            .with_hessian(|x| {
                let s = sigmoid(x[0]);
                Matrix::from_element(1, 1, s * (1.0 - s))
            })
    }

    fn exponential() -> GeneratorSpec {
        GeneratorSpec::new(1, |x| x[0].exp())
            .with_gradient(|x| x.map(f64::exp))
            .with_hessian(|x| Matrix::from_element(1, 1, x[0].exp()))
    }

    #[test]
    fn to_dual_examples() {
        let d = quadratic(2).to_dual(&PrimalCoords::new([3.0, 4.0])).unwrap();
        assert_eq!(d.as_slice(), &[3.0, 4.0]);
        let d = logistic().to_dual(&PrimalCoords::new([3f64.ln()])).unwrap();
        assert_abs_diff_eq!(d.0[0], 0.75, epsilon = 1e-15);
        let d = exponential().to_dual(&PrimalCoords::new([0.0])).unwrap();
        assert_abs_diff_eq!(d.0[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn from_dual_examples() {
        let p = quadratic(2).from_dual(&DualCoords::new([3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(p.0[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.0[1], 4.0, epsilon = 1e-12);
        let p = exponential().from_dual(&DualCoords::new([1.0])).unwrap();
        assert_abs_diff_eq!(p.0[0], 0.0, epsilon = 1e-10);
        let p = logistic().from_dual(&DualCoords::new([0.5])).unwrap();
        assert_abs_diff_eq!(p.0[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn dual_value_examples() {
        let v = quadratic(1).dual_value(&DualCoords::new([3.0])).unwrap();
        assert_abs_diff_eq!(v, 4.5, epsilon = 1e-12);
        let v = exponential().dual_value(&DualCoords::new([1.0])).unwrap();
        assert_abs_diff_eq!(v, -1.0, epsilon = 1e-10);
        let v = logistic().dual_value(&DualCoords::new([0.5])).unwrap();
        assert_abs_diff_eq!(v, -std::f64::consts::LN_2, epsilon = 1e-10);
    }

    #[test]
    fn far_targets_need_damping() {
        let p = exponential().from_dual(&DualCoords::new([100.0])).unwrap();
        assert_abs_diff_eq!(p.0[0], 100f64.ln(), epsilon = 1e-10);
        let p = logistic().from_dual(&DualCoords::new([1e-6])).unwrap();
        assert_abs_diff_eq!(p.0[0], (1e-6f64 / (1.0 - 1e-6)).ln(), epsilon = 1e-6);
    }

    #[test]
    fn outside_gradient_image_fails() {
        let err = exponential().from_dual(&DualCoords::new([-1.0])).unwrap_err();
        assert!(matches!(err, Error::InversionFailure { .. }));
        let err = logistic().from_dual(&DualCoords::new([1.5])).unwrap_err();
        assert!(matches!(err, Error::InversionFailure { .. }));
    }

    #[test]
    fn domain_guard_is_enforced() {
        let g = GeneratorSpec::new(1, |x| -x[0].ln())
            .with_domain(|x| x[0] > 0.0)
            .with_reference(Vector::from_element(1, 1.0));
        let err = g.to_dual(&PrimalCoords::new([-1.0])).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { .. }));
        // ψ = −log ξ has ∇ψ = −1/ξ; invert ξ* = −4 → ξ = 0.25.
        let p = g.from_dual(&DualCoords::new([-4.0])).unwrap();
        assert_abs_diff_eq!(p.0[0], 0.25, epsilon = 1e-8);
        assert!(g.to_dual(&PrimalCoords::new([f64::NAN])).is_err());
    }

    #[test]
    fn finite_difference_fallbacks_agree_with_analytic() {
        let fd = GeneratorSpec::new(2, |x| x[0].exp() + softplus(x[1]) + 0.3 * x[0] * x[1]);
        let xi = Vector::from_vec(vec![0.4, -0.7]);
        let grad = fd.gradient_unchecked(&xi);
        let expect = [0.4f64.exp() + 0.3 * -0.7, sigmoid(-0.7) + 0.3 * 0.4];
        for i in 0..2 {
            assert!((grad[i] - expect[i]).abs() < 1e-8);
        }
        let h = fd.hessian_unchecked(&xi);
        let s = sigmoid(-0.7);
        assert!((h[(0, 0)] - 0.4f64.exp()).abs() < 1e-6);
        assert!((h[(1, 1)] - s * (1.0 - s)).abs() < 1e-6);
        assert!((h[(0, 1)] - 0.3).abs() < 1e-6);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn diagnostics_flag_nonconvexity() {
        let g = GeneratorSpec::new(1, |x| -x[0] * x[0]);
        let d = g.diagnostics(&PrimalCoords::new([0.3])).unwrap();
        assert!(d.min_eigenvalue < 0.0);
        let d = logistic().diagnostics(&PrimalCoords::new([0.3])).unwrap();
        assert!(d.min_eigenvalue > 0.0);
        assert!(d.gradient_fd_error < 1e-5);
        assert!(d.hessian_asymmetry <= 1e-12);
    }

    #[test]
    fn legendre_dual_generator_inverts_charts() {
        let g = logistic();
        let dual = g.legendre_dual();
        let xs = Vector::from_element(1, 0.3);
        assert!(dual.in_domain(&xs));
        assert!(!dual.in_domain(&Vector::from_element(1, 1.2)));
        let back = dual.gradient_unchecked(&xs);
        assert_abs_diff_eq!(back[0], (0.3f64 / 0.7).ln(), epsilon = 1e-9);
        let h = dual.hessian_unchecked(&xs);
        assert_abs_diff_eq!(h[(0, 0)], 1.0 / (0.3 * 0.7), epsilon = 1e-8);
    }
}
