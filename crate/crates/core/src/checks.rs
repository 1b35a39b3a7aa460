//! Seeded invariant suites over a generator: Legendre involution and
//! biconjugation, metric duality, the mixed form, Pythagoras for projection
//! triangles, projection optimality, Bregman–KL agreement, conservation along
//! geodesics, the line-element limit and the distance axioms.
//!
//! Suites are independent and run on their own threads; reports come back
//! sorted by name so the output does not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::divergence::{bregman, mixed_bregman};
use crate::dually_flat::{
    dual_geodesic_projection, dual_orthogonality_defect, dual_pythagoras_residual, geodesic_projection,
    orthogonality_defect, probe_triangle, pythagoras_residual, AffineSubmanifold, Chart, Triangle,
};
use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::generator::{DualCoords, GeneratorSpec, LegendreOptions, PrimalCoords};
use crate::numeric::{self, Matrix, Vector};
use crate::riemannian::{
    distance_with, geodesic_shoot, hamiltonian_flow, MetricField, PhasePoint, ShootingOptions, TangentVector,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub max_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
    /// First numerical error hit, if any; a suite with an error fails.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub seed: u64,
    /// Random points (or pairs, triangles) per suite.
    pub samples: usize,
    /// Half-width of the sampling box around the generator's reference point.
    pub radius: f64,
    /// RK4 step for the conservation suite.
    pub step: f64,
    /// Replaces every suite's own tolerance when set.
    pub tolerance: Option<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seed: 0x5eed,
            samples: 20,
            radius: 1.5,
            step: 1e-3,
            tolerance: None,
        }
    }
}

pub const SUITE_NAMES: [&str; 10] = [
    "biconjugation",
    "bregman_kl",
    "conservation",
    "distance_axioms",
    "legendre_involution",
    "line_element",
    "metric_duality",
    "mixed_representation",
    "projection_optimality",
    "pythagoras",
];

/// Uniform point in the box around the reference, redrawn until it lies in
/// the domain with a positive definite Hessian.
pub fn sample_point(gen: &GeneratorSpec, rng: &mut impl Rng, radius: f64) -> Result<PrimalCoords> {
    for _ in 0..1000 {
        let x = Vector::from_iterator(
            gen.dim(),
            gen.reference().iter().map(|c| c + rng.random_range(-radius..radius)),
        );
        if gen.in_domain(&x) && numeric::min_eigenvalue(&gen.hessian_unchecked(&x)) > 0.0 {
            return Ok(PrimalCoords(x));
        }
    }
    Err(Error::Invalid("could not sample a point in the generator domain".into()))
}

fn unit_vector(n: usize, rng: &mut impl Rng) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 0.1 && norm <= 1.0 {
            return v / norm;
        }
    }
}

fn seed_for(name: &str, seed: u64) -> u64 {
    // FNV-1a over the suite name keeps streams fixed per suite.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed
}

struct Tally {
    max: f64,
    samples: usize,
}

impl Tally {
    fn new() -> Self {
        Tally { max: 0.0, samples: 0 }
    }

    fn add(&mut self, r: f64) {
        self.samples += 1;
        // NaN propagates as a failure.
        self.max = if r.is_nan() || self.max.is_nan() { f64::NAN } else { self.max.max(r) };
    }
}

/// The generator every suite runs on, plus the family when densities exist.
#[derive(Clone)]
pub struct Subject {
    pub gen: GeneratorSpec,
    pub family: Option<FamilySpec>,
}

impl Subject {
    pub fn from_family(family: FamilySpec) -> Self {
        Subject {
            gen: family.log_partition(),
            family: Some(family),
        }
    }

    pub fn from_generator(gen: GeneratorSpec) -> Self {
        Subject { gen, family: None }
    }
}

fn run_one(name: &str, subject: &Subject, opts: &CheckOptions) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(name, opts.seed));
    let mut tally = Tally::new();
    let (tolerance, outcome) = match name {
        "legendre_involution" => (1e-8, legendre_involution(subject, opts, &mut rng, &mut tally)),
        "biconjugation" => (1e-7, biconjugation(subject, opts, &mut rng, &mut tally)),
        "metric_duality" => (1e-5, metric_duality(subject, opts, &mut rng, &mut tally)),
        "mixed_representation" => (1e-9, mixed_representation(subject, opts, &mut rng, &mut tally)),
        "pythagoras" => (1e-7, pythagoras(subject, opts, &mut rng, &mut tally)),
        "projection_optimality" => (1e-7, projection_optimality(subject, opts, &mut rng, &mut tally)),
        "bregman_kl" => (1e-8, bregman_kl(subject, opts, &mut rng, &mut tally)),
        "conservation" => (1e-6, conservation(subject, opts, &mut rng, &mut tally)),
        "line_element" => (1e-6, line_element(subject, opts, &mut rng, &mut tally)),
        "distance_axioms" => (1e-6, distance_axioms(subject, opts, &mut rng, &mut tally)),
        other => (0.0, Err(Error::Invalid(format!("unknown suite {other}")))),
    };
    let tolerance = opts.tolerance.unwrap_or(tolerance);
    let error = outcome.err().map(|e| e.to_string());
    SuiteReport {
        name: name.to_string(),
        passed: error.is_none() && tally.max <= tolerance,
        max_residual: tally.max,
        tolerance,
        samples: tally.samples,
        error,
    }
}

/// Runs every suite concurrently; reports are sorted by suite name.
pub fn run_suites(subject: &Subject, opts: &CheckOptions) -> Vec<SuiteReport> {
    run_selected(subject, opts, &SUITE_NAMES)
}

pub fn run_selected(subject: &Subject, opts: &CheckOptions, names: &[&str]) -> Vec<SuiteReport> {
    let mut reports: Vec<SuiteReport> = std::thread::scope(|s| {
        let handles: Vec<_> = names
            .iter()
            .map(|name| s.spawn(move || run_one(name, subject, opts)))
            .collect();
        handles
            .into_iter()
            .zip(names)
            .map(|(h, name)| {
                h.join().unwrap_or_else(|_| SuiteReport {
                    name: name.to_string(),
                    passed: false,
                    max_residual: f64::NAN,
                    tolerance: 0.0,
                    samples: 0,
                    error: Some("suite panicked".into()),
                })
            })
            .collect()
    });
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    reports
}

fn legendre_involution(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    for _ in 0..o.samples {
        let p = sample_point(&s.gen, rng, o.radius)?;
        let back = s.gen.from_dual(&s.gen.to_dual(&p)?)?;
        t.add((&back.0 - &p.0).amax() / (1.0 + p.0.amax()));
    }
    Ok(())
}

/// ψ** rebuilt through the numerical conjugate of the numerical conjugate.
fn biconjugation(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let dual = s.gen.legendre_dual();
    for _ in 0..o.samples {
        let p = sample_point(&s.gen, rng, o.radius)?;
        let hint = s.gen.gradient_unchecked(&p.0) + Vector::from_fn(p.dim(), |_, _| rng.random_range(-0.1..0.1));
        let opts = LegendreOptions::with_hint(hint);
        let psi2 = dual.dual_value_with(&DualCoords(p.0.clone()), &opts)?;
        let psi = s.gen.value(&p)?;
        t.add((psi2 - psi).abs() / (1.0 + psi.abs()));
    }
    Ok(())
}

/// G(ξ) times the Jacobian of ξ* ↦ ξ, the latter by central differences of
/// the numerical inverse map.
fn metric_duality(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let n = s.gen.dim();
    for _ in 0..o.samples {
        let p = sample_point(&s.gen, rng, o.radius)?;
        let star = s.gen.to_dual(&p)?;
        let mut jac = Matrix::zeros(n, n);
        for k in 0..n {
            let h = numeric::fd_step(numeric::HESSIAN_STEP, star.0[k]);
            let mut a = star.0.clone();
            let mut b = star.0.clone();
            a[k] += h;
            b[k] -= h;
            let fa = s.gen.from_dual_with(&DualCoords(a), &LegendreOptions::with_hint(p.0.clone()))?;
            let fb = s.gen.from_dual_with(&DualCoords(b), &LegendreOptions::with_hint(p.0.clone()))?;
            jac.set_column(k, &((fa.0 - fb.0) / (2.0 * h)));
        }
        let product = s.gen.hessian(&p)? * jac;
        t.add((product - Matrix::identity(n, n)).amax());
    }
    Ok(())
}

fn mixed_representation(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    for _ in 0..o.samples {
        let p = sample_point(&s.gen, rng, o.radius)?;
        let q = sample_point(&s.gen, rng, o.radius)?;
        let direct = bregman(&s.gen, &p, &q)?;
        let mixed = mixed_bregman(&s.gen, &p, &s.gen.to_dual(&q)?)?;
        t.add((direct - mixed).abs());
    }
    Ok(())
}

fn random_line(gen: &GeneratorSpec, chart: Chart, rng: &mut ChaCha8Rng, radius: f64) -> Result<AffineSubmanifold> {
    let anchor = sample_point(gen, rng, radius)?;
    let offset = match chart {
        Chart::Primal => anchor.0,
        Chart::Dual => gen.to_dual(&anchor)?.0,
    };
    let scale = 0.25 * (1.0 + offset.amax());
    let b = unit_vector(gen.dim(), rng) * scale;
    AffineSubmanifold::new(chart, offset, Matrix::from_column_slice(gen.dim(), 1, b.as_slice()))
}

fn pythagoras_sample(gen: &GeneratorSpec, rng: &mut ChaCha8Rng, radius: f64, t: &mut Tally) -> Result<()> {
    let p = sample_point(gen, rng, radius)?;
    let line = random_line(gen, Chart::Dual, rng, radius)?;
    let proj = geodesic_projection(gen, &p, &line)?;
    let tri = probe_triangle(gen, &p, &line, &proj)?;
    let residual = pythagoras_residual(gen, &tri)?;
    let defect = orthogonality_defect(gen, &tri)?;
    t.add(residual.abs());
    t.add((residual - defect).abs() * 100.0);

    let line = random_line(gen, Chart::Primal, rng, radius)?;
    let proj = dual_geodesic_projection(gen, &p, &line)?;
    let tri: Triangle = probe_triangle(gen, &p, &line, &proj)?;
    let residual = dual_pythagoras_residual(gen, &tri)?;
    let defect = dual_orthogonality_defect(gen, &tri)?;
    t.add(residual.abs());
    // residual = defect is held to 1e-9, a hundredth of the suite tolerance.
    t.add((residual - defect).abs() * 100.0);
    Ok(())
}

fn pythagoras(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    for _ in 0..o.samples {
        pythagoras_sample(&s.gen, rng, o.radius, t)?;
    }
    Ok(())
}

/// Newton projection against random points of the same line, plus the
/// orthogonality condition at the projection.
fn projection_optimality(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let gen = &s.gen;
    for _ in 0..o.samples {
        let p = sample_point(gen, rng, o.radius)?;
        let line = random_line(gen, Chart::Dual, rng, o.radius)?;
        let proj = geodesic_projection(gen, &p, &line)?;
        t.add(proj.orthogonality);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let u = &proj.coordinates + Vector::from_element(1, rng.random_range(-2.0..2.0));
            let Ok(r) = line.point(gen, &u) else { continue };
            let margin = bregman(gen, &p, &r)? - proj.divergence;
            worst = worst.max(-margin);
        }
        // margin ≥ −1e-9 maps onto the 1e-7 suite tolerance.
        t.add(worst * 100.0);
    }
    Ok(())
}

fn bregman_kl(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let Some(family) = &s.family else {
        return Ok(());
    };
    for _ in 0..o.samples {
        let p = sample_point(&s.gen, rng, o.radius)?;
        let q = sample_point(&s.gen, rng, o.radius)?;
        let d = bregman(&s.gen, &p, &q)?;
        let kl = family.kl_oracle(&q, &p)?;
        t.add((d - kl).abs());
    }
    Ok(())
}

fn conservation(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let metric = MetricField::from_generator(&s.gen);
    for _ in 0..o.samples {
        let p = sample_point(&s.gen, rng, o.radius)?;
        let g = s.gen.hessian(&p)?;
        // Unit speed in the metric, so the geodesic moves about one unit.
        let mut v = unit_vector(p.dim(), rng);
        v /= v.dot(&(&g * &v)).sqrt();
        let sol = geodesic_shoot(&metric, &TangentVector { base: p.clone(), components: v.clone() }, 1.0, o.step)?;
        t.add(sol.kinetic_drift());
        let flow = hamiltonian_flow(&metric, &PhasePoint { q: p.0.clone(), p: g * v }, 1.0, o.step)?;
        t.add(flow.energy_drift());
    }
    Ok(())
}

/// Richardson limit of 2D[P‖P+dξ]/ds² from the 1e-3 and 1e-4 scales, and a
/// check that the error at 1e-4 is at most a fifth of the error at 1e-3
/// whenever it stands clear of rounding.
fn line_element(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    for _ in 0..o.samples {
        let p = sample_point(&s.gen, rng, o.radius)?;
        let dir = unit_vector(p.dim(), rng);
        let g = s.gen.hessian(&p)?;
        let ratio = |eps: f64| -> Result<f64> {
            let d = &dir * eps;
            let q = PrimalCoords(&p.0 + &d);
            Ok(2.0 * bregman(&s.gen, &p, &q)? / d.dot(&(&g * &d)))
        };
        let (r3, r4) = (ratio(1e-3)?, ratio(1e-4)?);
        let limit = (10.0 * r4 - r3) / 9.0;
        t.add((limit - 1.0).abs());
        let (e3, e4) = ((r3 - 1.0).abs(), (r4 - 1.0).abs());
        if e4 > 1e-7 && e4 > 0.2 * e3 {
            t.add(f64::INFINITY);
        }
    }
    Ok(())
}

fn distance_axioms(s: &Subject, o: &CheckOptions, rng: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let metric = MetricField::from_generator(&s.gen);
    let shooting = ShootingOptions {
        step: 1e-2,
        ..ShootingOptions::default()
    };
    let radius = 0.5 * o.radius;
    let triples = o.samples.div_ceil(4).max(1);
    for _ in 0..triples {
        let p = sample_point(&s.gen, rng, radius)?;
        let q = sample_point(&s.gen, rng, radius)?;
        let r = sample_point(&s.gen, rng, radius)?;
        let d = |a: &PrimalCoords, b: &PrimalCoords| distance_with(&metric, a, b, &shooting);
        let (pq, qp) = (d(&p, &q)?, d(&q, &p)?);
        let (qr, pr) = (d(&q, &r)?, d(&p, &r)?);
        for v in [pq, qp, qr, pr] {
            if !v.is_finite() {
                return Err(Error::Unreachable { residual: f64::NAN });
            }
        }
        t.add(d(&p, &p)?);
        t.add((pq - qp).abs());
        t.add((pr - pq - qr).max(0.0));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::FamilyKind;

    #[test]
    fn bernoulli_suites_pass() {
        let subject = Subject::from_family(FamilySpec::new(FamilyKind::BernoulliProduct, 2));
        let reports = run_suites(&subject, &CheckOptions::default());
        assert_eq!(reports.len(), SUITE_NAMES.len());
        for r in &reports {
            assert!(r.passed, "{r:?}");
            assert!(r.max_residual < 1e-6, "{r:?}");
        }
        let names: Vec<_> = reports.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, SUITE_NAMES);
    }

    #[test]
    fn reports_are_deterministic() {
        let subject = Subject::from_family(FamilySpec::new(FamilyKind::PoissonProduct, 2));
        let opts = CheckOptions {
            samples: 4,
            ..CheckOptions::default()
        };
        let names = ["mixed_representation", "legendre_involution"];
        let a = run_selected(&subject, &opts, &names);
        let b = run_selected(&subject, &opts, &names);
        assert_eq!(a, b);
        assert_eq!(a[0].name, "legendre_involution");
    }

    #[test]
    fn a_broken_generator_fails_the_kl_suite() {
        // ψ for Bernoulli with a wrong density pairing: the Gaussian oracle.
        let family = FamilySpec::new(FamilyKind::GaussianFixedVariance { variance: 2.0 }, 1);
        let subject = Subject {
            gen: FamilySpec::new(FamilyKind::BernoulliProduct, 1).log_partition(),
            family: Some(family),
        };
        let r = run_selected(&subject, &CheckOptions::default(), &["bregman_kl"]);
        assert!(!r[0].passed);
    }
}
