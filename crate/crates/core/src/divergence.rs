//! Bregman divergences and the metric they induce.
//!
//! Orientation: D_ψ[P‖Q] = ψ(ξ_P) − ψ(ξ_Q) − ∇ψ(ξ_Q)·(ξ_P − ξ_Q), which is the
//! form that agrees with the mixed representation
//! D_ψ[P‖Q] = ψ(ξ_P) + ψ*(ξ*_Q) − ξ_P·ξ*_Q.

use crate::error::{check_dim, Error, Result};
use crate::generator::{DualCoords, GeneratorSpec, LegendreOptions, PrimalCoords};
use crate::numeric::{self, Matrix, Vector};

/// Which argument order a [`DivergencePair`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// D_ψ[P‖Q]
    Primal,
    /// D*_ψ[P‖Q] = D_ψ[Q‖P]
    Dual,
}

/// A generator together with a divergence orientation.
#[derive(Debug, Clone)]
pub struct DivergencePair {
    pub gen: GeneratorSpec,
    pub orientation: Orientation,
}

impl DivergencePair {
    pub fn new(gen: GeneratorSpec, orientation: Orientation) -> Self {
        DivergencePair { gen, orientation }
    }

    pub fn eval(&self, p: &PrimalCoords, q: &PrimalCoords) -> Result<f64> {
        match self.orientation {
            Orientation::Primal => bregman(&self.gen, p, q),
            Orientation::Dual => dual_bregman(&self.gen, p, q),
        }
    }

    pub fn flipped(&self) -> Self {
        let orientation = match self.orientation {
            Orientation::Primal => Orientation::Dual,
            Orientation::Dual => Orientation::Primal,
        };
        DivergencePair {
            gen: self.gen.clone(),
            orientation,
        }
    }
}

/// Symmetric positive definite matrix G(ξ) of a local quadratic form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: Matrix,
}

impl QuadraticForm {
    /// Validates symmetry (1e-12 relative) and positive definiteness.
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Invalid("quadratic form must be square".into()));
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::ConvexityViolation {
                min_eigenvalue: f64::NAN,
            });
        }
        if numeric::asymmetry(&matrix) > 1e-12 {
            return Err(Error::Invalid("quadratic form is not symmetric".into()));
        }
        let min_eigenvalue = numeric::min_eigenvalue(&matrix);
        if matrix.clone().cholesky().is_none() || min_eigenvalue <= 0.0 {
            return Err(Error::ConvexityViolation { min_eigenvalue });
        }
        Ok(QuadraticForm { matrix })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// vᵀ G v
    pub fn eval(&self, v: &Vector) -> f64 {
        v.dot(&(&self.matrix * v))
    }

    pub fn inverse(&self) -> Matrix {
        self.matrix
            .clone()
            .cholesky()
            .expect("validated positive definite")
            .inverse()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        numeric::min_eigenvalue(&self.matrix)
    }
}

/// D_ψ[P‖Q] = ψ(ξ_P) − ψ(ξ_Q) − ∇ψ(ξ_Q)·(ξ_P − ξ_Q).
pub fn bregman(gen: &GeneratorSpec, p: &PrimalCoords, q: &PrimalCoords) -> Result<f64> {
    gen.guard(&p.0)?;
    gen.guard(&q.0)?;
    if p.0 == q.0 {
        return Ok(0.0);
    }
    let grad_q = gen.gradient_unchecked(&q.0);
    let d = gen.value_unchecked(&p.0) - gen.value_unchecked(&q.0) - grad_q.dot(&(&p.0 - &q.0));
    // Rounding can push a vanishing divergence a few ulps below zero.
    Ok(d.max(0.0))
}

/// D*_ψ[P‖Q] = D_ψ[Q‖P].
pub fn dual_bregman(gen: &GeneratorSpec, p: &PrimalCoords, q: &PrimalCoords) -> Result<f64> {
    bregman(gen, q, p)
}

/// Bregman divergence of ψ* written in dual coordinates,
/// D_ψ*[P‖Q] = ψ*(ξ*_P) − ψ*(ξ*_Q) − ∇ψ*(ξ*_Q)·(ξ*_P − ξ*_Q),
/// with ψ* evaluated through Newton inversion.
pub fn bregman_in_dual_chart(
    gen: &GeneratorSpec,
    p_dual: &DualCoords,
    q_dual: &DualCoords,
    opts: &LegendreOptions,
) -> Result<f64> {
    let xi_p = gen.from_dual_with(p_dual, opts)?;
    let xi_q = gen.from_dual_with(q_dual, opts)?;
    let star_p = xi_p.0.dot(&p_dual.0) - gen.value_unchecked(&xi_p.0);
    let star_q = xi_q.0.dot(&q_dual.0) - gen.value_unchecked(&xi_q.0);
    Ok(star_p - star_q - xi_q.0.dot(&(&p_dual.0 - &q_dual.0)))
}

/// ψ(ξ_P) + ψ*(ξ*_Q) − ξ_P·ξ*_Q
pub fn mixed_bregman(gen: &GeneratorSpec, p: &PrimalCoords, q_dual: &DualCoords) -> Result<f64> {
    mixed_bregman_with(gen, p, q_dual, &LegendreOptions::default())
}

pub fn mixed_bregman_with(
    gen: &GeneratorSpec,
    p: &PrimalCoords,
    q_dual: &DualCoords,
    opts: &LegendreOptions,
) -> Result<f64> {
    gen.guard(&p.0)?;
    let psi_star = gen.dual_value_with(q_dual, opts)?;
    Ok(gen.value_unchecked(&p.0) + psi_star - p.0.dot(&q_dual.0))
}

/// g_P = ∇²ψ(ξ_P).
pub fn induced_metric(gen: &GeneratorSpec, p: &PrimalCoords) -> Result<QuadraticForm> {
    QuadraticForm::new(gen.hessian(p)?)
}

/// ½ dξᵀ G(ξ_P) dξ, half the squared line element.
pub fn local_quadratic(gen: &GeneratorSpec, p: &PrimalCoords, dxi: &Vector) -> Result<f64> {
    check_dim(gen.dim(), dxi.len())?;
    gen.guard(&(&p.0 + dxi))?;
    Ok(0.5 * induced_metric(gen, p)?.eval(dxi))
}

/// Tolerances for [`kl_discrete_with`].
#[derive(Debug, Clone, Copy)]
pub struct KlOptions {
    /// Allowed deviation of each probability vector's sum from 1.
    pub normalization: f64,
}

impl Default for KlOptions {
    fn default() -> Self {
        KlOptions {
            normalization: 1e-9,
        }
    }
}

/// Σ p_i log(p_i/q_i) with 0·log 0 = 0. Support violations return `+∞`.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    kl_discrete_with(p, q, KlOptions::default())
}

pub fn kl_discrete_with(p: &[f64], q: &[f64], opts: KlOptions) -> Result<f64> {
    check_dim(p.len(), q.len())?;
    for (name, v) in [("p", p), ("q", q)] {
        if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::Invalid(format!("{name} has invalid probability {x}")));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > opts.normalization {
            return Err(Error::Invalid(format!("{name} sums to {s}, not 1")));
        }
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{FamilyKind, FamilySpec};
    use approx::assert_abs_diff_eq;

    fn euclid() -> GeneratorSpec {
        FamilySpec::new(FamilyKind::Euclidean, 2).log_partition()
    }

    fn bernoulli() -> GeneratorSpec {
        FamilySpec::new(FamilyKind::BernoulliProduct, 1).log_partition()
    }

    fn poisson() -> GeneratorSpec {
        FamilySpec::new(FamilyKind::PoissonProduct, 1).log_partition()
    }

    // Independent two-outcome sum, written out longhand.
    fn two_point_kl(a: f64, b: f64) -> f64 {
        a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln()
    }

    #[test]
    fn bregman_examples() {
        let g = euclid();
        let v = bregman(&g, &PrimalCoords::new([0.0, 0.0]), &PrimalCoords::new([3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(v, 12.5, epsilon = 1e-12);
        let p = PrimalCoords::new([0.3, -1.2]);
        assert_eq!(bregman(&g, &p, &p).unwrap(), 0.0);

        let b = bernoulli();
        let p = PrimalCoords::new([3f64.ln()]);
        let q = PrimalCoords::new([0.0]);
        let v = bregman(&b, &p, &q).unwrap();
        assert_abs_diff_eq!(v, two_point_kl(0.5, 0.75), epsilon = 1e-14);
        assert_abs_diff_eq!(v, 0.143841, epsilon = 1e-6);
    }

    #[test]
    fn dual_bregman_examples() {
        let g = euclid();
        let v = dual_bregman(&g, &PrimalCoords::new([0.0, 0.0]), &PrimalCoords::new([3.0, 4.0]))
            .unwrap();
        assert_abs_diff_eq!(v, 12.5, epsilon = 1e-12);
        let b = bernoulli();
        let v = dual_bregman(&b, &PrimalCoords::new([3f64.ln()]), &PrimalCoords::new([0.0])).unwrap();
        assert_abs_diff_eq!(v, two_point_kl(0.75, 0.5), epsilon = 1e-14);
        assert_abs_diff_eq!(v, 0.130812, epsilon = 1e-6);
    }

    #[test]
    fn mixed_examples() {
        let g = euclid();
        let v = mixed_bregman(&g, &PrimalCoords::new([0.0, 0.0]), &DualCoords::new([3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(v, 12.5, epsilon = 1e-10);
        let b = bernoulli();
        let p = PrimalCoords::new([3f64.ln()]);
        let same = b.to_dual(&p).unwrap();
        assert_abs_diff_eq!(mixed_bregman(&b, &p, &same).unwrap(), 0.0, epsilon = 1e-12);
        let v = mixed_bregman(&b, &p, &DualCoords::new([0.5])).unwrap();
        let expect = 4f64.ln() - 2f64.ln() - 0.5 * 3f64.ln();
        assert_abs_diff_eq!(v, expect, epsilon = 1e-10);
        assert_abs_diff_eq!(v, 0.143841, epsilon = 1e-6);
    }

    #[test]
    fn dual_chart_bregman_equals_swapped() {
        let b = FamilySpec::new(FamilyKind::BernoulliProduct, 2).log_partition();
        let p = PrimalCoords::new([0.4, -1.1]);
        let q = PrimalCoords::new([-0.8, 0.9]);
        let via_dual = bregman_in_dual_chart(
            &b,
            &b.to_dual(&p).unwrap(),
            &b.to_dual(&q).unwrap(),
            &LegendreOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(via_dual, dual_bregman(&b, &p, &q).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn induced_metric_examples() {
        let m = induced_metric(&euclid(), &PrimalCoords::new([5.0, -2.0])).unwrap();
        assert_eq!(m.matrix(), &Matrix::identity(2, 2));
        let m = induced_metric(&bernoulli(), &PrimalCoords::new([0.0])).unwrap();
        assert_abs_diff_eq!(m.matrix()[(0, 0)], 0.25, epsilon = 1e-15);
        let m = induced_metric(&poisson(), &PrimalCoords::new([0.0])).unwrap();
        assert_abs_diff_eq!(m.matrix()[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn induced_metric_rejects_nonconvex() {
        let g = GeneratorSpec::new(1, |x| x[0].powi(3));
        let err = induced_metric(&g, &PrimalCoords::new([-1.0])).unwrap_err();
        assert!(matches!(err, Error::ConvexityViolation { .. }));
    }

    #[test]
    fn local_quadratic_examples() {
        let v = local_quadratic(&euclid(), &PrimalCoords::new([1.0, 1.0]), &Vector::from_vec(vec![0.1, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(v, 0.005, epsilon = 1e-15);
        let v = local_quadratic(&bernoulli(), &PrimalCoords::new([0.0]), &Vector::from_element(1, 0.1)).unwrap();
        assert_abs_diff_eq!(v, 0.00125, epsilon = 1e-15);

        let b = bernoulli();
        let p = PrimalCoords::new([0.0]);
        let dxi = Vector::from_element(1, 1e-4);
        let q = PrimalCoords(&p.0 + &dxi);
        let ratio = bregman(&b, &p, &q).unwrap() / local_quadratic(&b, &p, &dxi).unwrap();
        assert!((ratio - 1.0).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_discrete(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let v = kl_discrete(&[0.5, 0.5], &[0.75, 0.25]).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.143841, epsilon = 1e-6);
        let v = kl_discrete(&[0.75, 0.25], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(v, 0.130812, epsilon = 1e-6);
    }

    #[test]
    fn kl_support_and_validation() {
        assert_eq!(kl_discrete(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(kl_discrete(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
        assert!(matches!(kl_discrete(&[0.5, 0.6], &[0.5, 0.5]), Err(Error::Invalid(_))));
        assert!(matches!(kl_discrete(&[1.2, -0.2], &[0.5, 0.5]), Err(Error::Invalid(_))));
        assert!(matches!(kl_discrete(&[1.0], &[0.5, 0.5]), Err(Error::DimensionMismatch { .. })));
        assert!(kl_discrete_with(&[0.5, 0.50001], &[0.5, 0.5], KlOptions { normalization: 1e-3 }).is_ok());
    }

    #[test]
    fn divergence_pair_orientation() {
        let pair = DivergencePair::new(bernoulli(), Orientation::Primal);
        let p = PrimalCoords::new([1.0]);
        let q = PrimalCoords::new([-0.5]);
        let forward = pair.eval(&p, &q).unwrap();
        let backward = pair.flipped().eval(&p, &q).unwrap();
        assert_eq!(backward, bregman(&pair.gen, &q, &p).unwrap());
        assert!(forward != backward);
    }
}
