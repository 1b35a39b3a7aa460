//! Concrete exponential families and their closed-form KL divergences.
//!
//! Each family's log-partition function is a generator whose primal chart is
//! the natural parameter and whose dual chart is the mean parameter. The KL
//! routines here are written directly from the densities and serve as an
//! independent check on the Bregman machinery:
//! D_ψ[θ_P‖θ_Q] = KL(p_{θ_Q}‖p_{θ_P}).

use crate::error::{check_dim, Error, Result};
use crate::generator::{DualCoords, GeneratorSpec, PrimalCoords};
use crate::numeric::{sigmoid, softplus, Matrix, Vector};

#[derive(Debug, Clone)]
pub enum FamilyKind {
    Euclidean,
    BernoulliProduct,
    PoissonProduct,
    /// Independent Gaussians sharing a known variance; ξ = μ/σ².
    GaussianFixedVariance { variance: f64 },
    Custom(GeneratorSpec),
}

impl FamilyKind {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Euclidean => "euclidean",
            FamilyKind::BernoulliProduct => "bernoulli_product",
            FamilyKind::PoissonProduct => "poisson_product",
            FamilyKind::GaussianFixedVariance { .. } => "gaussian_fixed_variance",
            FamilyKind::Custom(_) => "custom",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub dim: usize,
}

/// Tail mass below which the Poisson KL summation stops.
pub const POISSON_TAIL_MASS: f64 = 1e-14;

impl FamilySpec {
    /// Panics on an invalid combination; use [`FamilySpec::try_new`] for
    /// untrusted input.
    pub fn new(kind: FamilyKind, dim: usize) -> Self {
        Self::try_new(kind, dim).expect("invalid family specification")
    }

    pub fn try_new(kind: FamilyKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("family dimension must be at least 1".into()));
        }
        match &kind {
            FamilyKind::GaussianFixedVariance { variance } if !(*variance > 0.0 && variance.is_finite()) => {
                return Err(Error::Invalid(format!("variance must be positive, got {variance}")));
            }
            FamilyKind::Custom(g) => check_dim(dim, g.dim())?,
            _ => {}
        }
        Ok(FamilySpec { kind, dim })
    }

    pub fn log_partition(&self) -> GeneratorSpec {
        let n = self.dim;
        match self.kind {
            FamilyKind::Euclidean => GeneratorSpec::new(n, |x| 0.5 * x.norm_squared())
                .with_gradient(|x| x.clone())
                .with_hessian(move |_| Matrix::identity(n, n))
                .with_third_derivative(move |_| vec![Matrix::zeros(n, n); n]),
            FamilyKind::BernoulliProduct => GeneratorSpec::new(n, |x| x.iter().map(|&v| softplus(v)).sum())
                .with_gradient(|x| x.map(sigmoid))
                .with_hessian(|x| {
                    Matrix::from_diagonal(&x.map(|v| {
                        let s = sigmoid(v);
                        s * (1.0 - s)
                    }))
                })
                .with_third_derivative(move |x| {
                    diagonal_partials(n, x, |v| {
                        let s = sigmoid(v);
                        s * (1.0 - s) * (1.0 - 2.0 * s)
                    })
                }),
            FamilyKind::PoissonProduct => GeneratorSpec::new(n, |x| x.iter().map(|v| v.exp()).sum())
                .with_gradient(|x| x.map(f64::exp))
                .with_hessian(|x| Matrix::from_diagonal(&x.map(f64::exp)))
                .with_third_derivative(move |x| diagonal_partials(n, x, f64::exp)),
            FamilyKind::GaussianFixedVariance { variance } => {
                GeneratorSpec::new(n, move |x| 0.5 * variance * x.norm_squared())
                    .with_gradient(move |x| x * variance)
                    .with_hessian(move |_| Matrix::identity(n, n) * variance)
                    .with_third_derivative(move |_| vec![Matrix::zeros(n, n); n])
            }
            FamilyKind::Custom(ref g) => g.clone(),
        }
    }

    /// Mean parameters: probabilities, rates or means.
    pub fn natural_to_mean(&self, xi: &PrimalCoords) -> Result<DualCoords> {
        check_dim(self.dim, xi.dim())?;
        self.log_partition().to_dual(xi)
    }

    pub fn mean_to_natural(&self, mu: &DualCoords) -> Result<PrimalCoords> {
        check_dim(self.dim, mu.dim())?;
        self.log_partition().from_dual(mu)
    }

    /// KL(p_a‖p_b) computed from the densities, not from ψ.
    ///
    /// Custom families have no density, so this returns an error for them.
    pub fn kl_oracle(&self, a: &PrimalCoords, b: &PrimalCoords) -> Result<f64> {
        check_dim(self.dim, a.dim())?;
        check_dim(self.dim, b.dim())?;
        let pairs = a.as_slice().iter().zip(b.as_slice());
        match self.kind {
            FamilyKind::Euclidean => Ok(0.5 * (&a.0 - &b.0).norm_squared()),
            FamilyKind::BernoulliProduct => Ok(pairs
                .map(|(&xa, &xb)| {
                    let (pa, pb) = (bernoulli_probs(xa), bernoulli_probs(xb));
                    pa.iter()
                        .zip(pb.iter())
                        .filter(|(p, _)| **p > 0.0)
                        .map(|(p, q)| p * (p / q).ln())
                        .sum::<f64>()
                })
                .sum()),
            FamilyKind::PoissonProduct => Ok(pairs
                .map(|(&xa, &xb)| poisson_kl_by_summation(xa.exp(), xb.exp(), POISSON_TAIL_MASS).0)
                .sum()),
            FamilyKind::GaussianFixedVariance { variance } => {
                let mu_a = &a.0 * variance;
                let mu_b = &b.0 * variance;
                Ok(0.5 * (mu_a - mu_b).norm_squared() / variance)
            }
            FamilyKind::Custom(_) => Err(Error::Invalid(
                "custom generators have no closed-form KL".into(),
            )),
        }
    }
}

fn diagonal_partials(n: usize, x: &Vector, third: impl Fn(f64) -> f64) -> Vec<Matrix> {
    (0..n)
        .map(|l| {
            let mut m = Matrix::zeros(n, n);
            m[(l, l)] = third(x[l]);
            m
        })
        .collect()
}

/// Outcome probabilities (P(0), P(1)) of a Bernoulli with logit ξ.
fn bernoulli_probs(xi: f64) -> [f64; 2] {
    let one = sigmoid(xi);
    let zero = sigmoid(-xi);
    [zero, one]
}

/// Σ_k p_a(k) log(p_a(k)/p_b(k)) over Poisson outcomes, stopping once the
/// remaining p_a tail mass drops below `tail_mass` (and k is past the mode).
/// Returns the sum and the number of terms used.
pub fn poisson_kl_by_summation(rate_a: f64, rate_b: f64, tail_mass: f64) -> (f64, usize) {
    let (la, lb) = (rate_a.ln(), rate_b.ln());
    let mut log_pa = -rate_a;
    let mut log_pb = -rate_b;
    let mut mass = 0.0;
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        let pa = log_pa.exp();
        sum += pa * (log_pa - log_pb);
        mass += pa;
        k += 1;
        if (k as f64) > rate_a && 1.0 - mass < tail_mass {
            break;
        }
        // Guard against accumulated rounding in `mass` never reaching the bound.
        if (k as f64) > rate_a + 60.0 * (rate_a.sqrt() + 1.0) {
            break;
        }
        let lk = (k as f64).ln();
        log_pa += la - lk;
        log_pb += lb - lk;
    }
    (sum, k)
}

/// Poisson KL summed over exactly `terms` outcomes k = 0..terms.
pub fn poisson_kl_truncated(rate_a: f64, rate_b: f64, terms: usize) -> f64 {
    let (la, lb) = (rate_a.ln(), rate_b.ln());
    let mut log_pa = -rate_a;
    let mut log_pb = -rate_b;
    let mut sum = 0.0;
    for k in 0..terms {
        if k > 0 {
            let lk = (k as f64).ln();
            log_pa += la - lk;
            log_pb += lb - lk;
        }
        sum += log_pa.exp() * (log_pa - log_pb);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::bregman;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_partition_examples() {
        let b = FamilySpec::new(FamilyKind::BernoulliProduct, 1).log_partition();
        // Normalizer of two outcomes at ξ = 0: e^0 + e^0.
        assert_abs_diff_eq!(b.value(&PrimalCoords::new([0.0])).unwrap(), (1.0f64 + 1.0).ln(), epsilon = 1e-15);
        let p = FamilySpec::new(FamilyKind::PoissonProduct, 1).log_partition();
        assert_abs_diff_eq!(p.value(&PrimalCoords::new([0.0])).unwrap(), 1.0, epsilon = 1e-15);
        let e = FamilySpec::new(FamilyKind::Euclidean, 2).log_partition();
        assert_eq!(e.value(&PrimalCoords::new([3.0, 4.0])).unwrap(), 12.5);
    }

    #[test]
    fn natural_to_mean_examples() {
        let b = FamilySpec::new(FamilyKind::BernoulliProduct, 1);
        assert_eq!(b.natural_to_mean(&PrimalCoords::new([0.0])).unwrap().as_slice(), &[0.5]);
        let p = FamilySpec::new(FamilyKind::PoissonProduct, 1);
        assert_eq!(p.natural_to_mean(&PrimalCoords::new([0.0])).unwrap().as_slice(), &[1.0]);
        let e = FamilySpec::new(FamilyKind::Euclidean, 3);
        let x = PrimalCoords::new([1.0, -2.0, 0.5]);
        assert_eq!(e.natural_to_mean(&x).unwrap().0, x.0);
        let g = FamilySpec::new(FamilyKind::GaussianFixedVariance { variance: 2.0 }, 1);
        assert_eq!(g.natural_to_mean(&PrimalCoords::new([1.5])).unwrap().as_slice(), &[3.0]);
    }

    #[test]
    fn mean_to_natural_round_trip() {
        let b = FamilySpec::new(FamilyKind::BernoulliProduct, 2);
        let xi = b.mean_to_natural(&DualCoords::new([0.2, 0.9])).unwrap();
        assert_abs_diff_eq!(xi.0[0], (0.2f64 / 0.8).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(xi.0[1], 9f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn kl_oracle_examples() {
        let g = FamilySpec::new(FamilyKind::GaussianFixedVariance { variance: 1.0 }, 1);
        assert_abs_diff_eq!(
            g.kl_oracle(&PrimalCoords::new([0.0]), &PrimalCoords::new([1.0])).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let b = FamilySpec::new(FamilyKind::BernoulliProduct, 1);
        let v = b.kl_oracle(&PrimalCoords::new([0.0]), &PrimalCoords::new([3f64.ln()])).unwrap();
        assert_abs_diff_eq!(v, 0.143841, epsilon = 1e-6);
        for fam in [FamilyKind::BernoulliProduct, FamilyKind::PoissonProduct, FamilyKind::Euclidean] {
            let f = FamilySpec::new(fam, 2);
            let x = PrimalCoords::new([0.3, -0.4]);
            assert_abs_diff_eq!(f.kl_oracle(&x, &x).unwrap(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn poisson_truncation_is_converged() {
        for &(a, b) in &[(0.2, 3.0), (1.0, 1.5), (7.0, 0.4), (40.0, 35.0)] {
            let (v, terms) = poisson_kl_by_summation(a, b, POISSON_TAIL_MASS);
            let doubled = poisson_kl_truncated(a, b, 2 * terms);
            assert!((v - doubled).abs() < 1e-12, "{a} {b}: {v} vs {doubled}");
            // Closed form λa log(λa/λb) − λa + λb as a sanity check.
            let closed = a * (a / b).ln() - a + b;
            assert!((v - closed).abs() < 1e-10 * (1.0 + closed));
        }
    }

    #[test]
    fn bregman_matches_swapped_kl() {
        let fams = [
            FamilySpec::new(FamilyKind::BernoulliProduct, 2),
            FamilySpec::new(FamilyKind::PoissonProduct, 2),
            FamilySpec::new(FamilyKind::GaussianFixedVariance { variance: 0.7 }, 2),
        ];
        let a = PrimalCoords::new([0.5, -1.0]);
        let b = PrimalCoords::new([-0.3, 1.2]);
        for f in &fams {
            let g = f.log_partition();
            assert_abs_diff_eq!(bregman(&g, &a, &b).unwrap(), f.kl_oracle(&b, &a).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(FamilySpec::try_new(FamilyKind::Euclidean, 0).is_err());
        assert!(FamilySpec::try_new(FamilyKind::GaussianFixedVariance { variance: 0.0 }, 1).is_err());
        let g = FamilySpec::new(FamilyKind::Euclidean, 3).log_partition();
        assert!(FamilySpec::try_new(FamilyKind::Custom(g), 2).is_err());
    }
}
