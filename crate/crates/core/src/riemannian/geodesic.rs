use crate::error::{check_dim, Error, Result};
use crate::generator::PrimalCoords;
use crate::numeric::{self, Matrix, Vector};

use super::metric::{christoffel_unchecked, MetricField, Signature, TangentVector};

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Completed,
    /// A Runge-Kutta stage left the metric's domain; samples stop at the last
    /// completed step.
    LeftDomain,
}

/// Samples of a curve with velocities, usable by [`arc_length`].
pub trait SampledCurve {
    fn times(&self) -> &[f64];
    fn points(&self) -> &[Vector];
    fn velocities(&self) -> &[Vector];
}

/// A curve given by explicit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub times: Vec<f64>,
    pub points: Vec<Vector>,
    pub velocities: Vec<Vector>,
}

impl Polyline {
    /// Samples `position` and `velocity` on `intervals + 1` equally spaced times.
    pub fn sample(
        t0: f64,
        t1: f64,
        intervals: usize,
        position: impl Fn(f64) -> Vector,
        velocity: impl Fn(f64) -> Vector,
    ) -> Self {
        let n = intervals.max(1);
        let times: Vec<f64> = (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect();
        Polyline {
            points: times.iter().map(|&t| position(t)).collect(),
            velocities: times.iter().map(|&t| velocity(t)).collect(),
            times,
        }
    }
}

impl SampledCurve for Polyline {
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn points(&self) -> &[Vector] {
        &self.points
    }
    fn velocities(&self) -> &[Vector] {
        &self.velocities
    }
}

/// Discretized geodesic γ with velocities and the kinetic term g(γ̇, γ̇).
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSolution {
    pub times: Vec<f64>,
    pub points: Vec<Vector>,
    pub velocities: Vec<Vector>,
    pub kinetic: Vec<f64>,
    pub terminal: Terminal,
}

impl GeodesicSolution {
    pub fn endpoint(&self) -> &Vector {
        self.points.last().expect("solutions hold at least one sample")
    }

    pub fn initial_velocity(&self) -> &Vector {
        &self.velocities[0]
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("solutions hold at least one sample")
    }

    /// max_t |K(t) − K(0)| / |K(0)|; absolute when K(0) = 0.
    pub fn kinetic_drift(&self) -> f64 {
        let k0 = self.kinetic[0];
        let scale = if k0 == 0.0 { 1.0 } else { k0.abs() };
        self.kinetic.iter().map(|k| (k - k0).abs() / scale).fold(0.0, f64::max)
    }
}

impl SampledCurve for GeodesicSolution {
    fn times(&self) -> &[f64] {
        &self.times
    }
    fn points(&self) -> &[Vector] {
        &self.points
    }
    fn velocities(&self) -> &[Vector] {
        &self.velocities
    }
}

/// Number of equal RK4 steps covering `[0, t_end]` with spacing at most `step`.
pub(crate) fn step_count(t_end: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Invalid(format!("step must be positive, got {step}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Invalid(format!("t_end must be non-negative, got {t_end}")));
    }
    if t_end == 0.0 {
        return Ok(0);
    }
    Ok(((t_end / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize)
}

enum Stage {
    Ok(Vector, Vector),
    LeftDomain,
}

fn geodesic_rhs(metric: &MetricField, x: &Vector, v: &Vector) -> Result<Stage> {
    if !metric.in_domain(x) {
        return Ok(Stage::LeftDomain);
    }
    let gamma = christoffel_unchecked(metric, x)?;
    Ok(Stage::Ok(v.clone(), -gamma.contract(v)))
}

/// Integrates γ̈^k + Γ^k_{ij} γ̇^i γ̇^j = 0 with classical RK4 on the
/// first-order system (γ, γ̇), using equal steps no longer than `step`.
pub fn geodesic_shoot(metric: &MetricField, start: &TangentVector, t_end: f64, step: f64) -> Result<GeodesicSolution> {
    metric.guard(&start.base.0)?;
    check_dim(metric.dim(), start.components.len())?;
    metric.matrix(&start.base)?;
    let n = step_count(t_end, step)?;
    let h = if n == 0 { 0.0 } else { t_end / n as f64 };

    let kinetic = |x: &Vector, v: &Vector| v.dot(&(metric.matrix_unchecked(x) * v));
    let mut x = start.base.0.clone();
    let mut v = start.components.clone();
    let mut sol = GeodesicSolution {
        times: vec![0.0],
        kinetic: vec![kinetic(&x, &v)],
        points: vec![x.clone()],
        velocities: vec![v.clone()],
        terminal: Terminal::Completed,
    };

    for i in 0..n {
        let t = i as f64 * h;
        let next = (|| -> Result<Option<(Vector, Vector)>> {
            let Stage::Ok(k1x, k1v) = geodesic_rhs(metric, &x, &v)? else { return Ok(None) };
            let Stage::Ok(k2x, k2v) = geodesic_rhs(metric, &(&x + &k1x * (h / 2.0)), &(&v + &k1v * (h / 2.0)))? else {
                return Ok(None);
            };
            let Stage::Ok(k3x, k3v) = geodesic_rhs(metric, &(&x + &k2x * (h / 2.0)), &(&v + &k2v * (h / 2.0)))? else {
                return Ok(None);
            };
            let Stage::Ok(k4x, k4v) = geodesic_rhs(metric, &(&x + &k3x * h), &(&v + &k3v * h))? else {
                return Ok(None);
            };
            let nx = &x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            let nv = &v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
            Ok(Some((nx, nv)))
        })()
        .map_err(|e| match e {
            // The state ran somewhere the metric degenerates numerically.
            Error::DegenerateMetric { .. } => Error::IntegrationFailure { last_time: t },
            e => e,
        })?;
        let Some((nx, nv)) = next else {
            sol.terminal = Terminal::LeftDomain;
            break;
        };
        if !(numeric::all_finite(&nx) && numeric::all_finite(&nv)) {
            return Err(Error::IntegrationFailure { last_time: t });
        }
        if !metric.in_domain(&nx) {
            sol.terminal = Terminal::LeftDomain;
            break;
        }
        x = nx;
        v = nv;
        sol.times.push(if i + 1 == n { t_end } else { (i + 1) as f64 * h });
        sol.kinetic.push(kinetic(&x, &v));
        sol.points.push(x.clone());
        sol.velocities.push(v.clone());
    }
    Ok(sol)
}

/// Controls for [`geodesic_connect`] and [`distance`].
#[derive(Debug, Clone)]
pub struct ShootingOptions {
    /// RK4 step on the unit parameter interval.
    pub step: f64,
    /// Required endpoint error |γ(1) − ξ_q|.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            step: 1e-3,
            tolerance: 1e-7,
            max_iterations: 50,
        }
    }
}

/// Geodesic from `p` to `q` on [0, 1] by Newton shooting on the initial
/// velocity, starting from v₀ = ξ_q − ξ_p.
pub fn geodesic_connect(metric: &MetricField, p: &PrimalCoords, q: &PrimalCoords) -> Result<GeodesicSolution> {
    geodesic_connect_with(metric, p, q, &ShootingOptions::default())
}

pub fn geodesic_connect_with(
    metric: &MetricField,
    p: &PrimalCoords,
    q: &PrimalCoords,
    opts: &ShootingOptions,
) -> Result<GeodesicSolution> {
    metric.guard(&p.0)?;
    metric.guard(&q.0)?;
    let n = metric.dim();
    let target = &q.0;

    // Endpoint mismatch; `None` when the shot leaves the domain or blows up.
    let shoot = |v: &Vector| -> Option<(GeodesicSolution, Vector)> {
        let start = TangentVector {
            base: p.clone(),
            components: v.clone(),
        };
        match geodesic_shoot(metric, &start, 1.0, opts.step) {
            Ok(sol) if sol.terminal == Terminal::Completed => {
                let r = sol.endpoint() - target;
                numeric::all_finite(&r).then_some((sol, r))
            }
            _ => None,
        }
    };

    let mut v = &q.0 - &p.0;
    let (mut sol, mut residual) = shoot(&v).ok_or(Error::Unreachable { residual: f64::INFINITY })?;
    let mut rnorm = residual.norm();
    for _ in 0..opts.max_iterations {
        if rnorm <= opts.tolerance {
            return Ok(sol);
        }
        let mut jac = Matrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * (1.0 + v.norm());
            let mut vp = v.clone();
            vp[j] += h;
            let col = match shoot(&vp) {
                Some((_, r)) => (r - &residual) / h,
                None => {
                    let mut vm = v.clone();
                    vm[j] -= h;
                    let (_, r) = shoot(&vm).ok_or(Error::Unreachable { residual: rnorm })?;
                    (&residual - r) / h
                }
            };
            jac.set_column(j, &col);
        }
        let delta = jac
            .lu()
            .solve(&(-&residual))
            .filter(numeric::all_finite)
            .ok_or(Error::Unreachable { residual: rnorm })?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &v + &delta * scale;
            if let Some((s, r)) = shoot(&cand) {
                let rn = r.norm();
                if rn < rnorm {
                    v = cand;
                    sol = s;
                    residual = r;
                    rnorm = rn;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rnorm <= opts.tolerance {
        Ok(sol)
    } else {
        Err(Error::Unreachable { residual: rnorm })
    }
}

/// ∫ √(γ̇ᵀ G γ̇) dt by composite Simpson quadrature over the sample grid
/// (irregular spacing allowed).
pub fn arc_length(metric: &MetricField, curve: &impl SampledCurve) -> Result<f64> {
    if metric.signature() != Signature::Riemannian {
        return Err(Error::NotRiemannian);
    }
    let (t, x, v) = (curve.times(), curve.points(), curve.velocities());
    if t.len() != x.len() || t.len() != v.len() {
        return Err(Error::Invalid("curve samples have inconsistent lengths".into()));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("curve times must be strictly increasing".into()));
    }
    let speed: Vec<f64> = x
        .iter()
        .zip(v)
        .map(|(xi, vi)| {
            metric.guard(xi)?;
            check_dim(metric.dim(), vi.len())?;
            let q = vi.dot(&(metric.matrix_unchecked(xi) * vi));
            if q < 0.0 {
                Err(Error::Signature { value: q })
            } else {
                Ok(q.sqrt())
            }
        })
        .collect::<Result<_>>()?;
    Ok(simpson(t, &speed))
}

fn simpson(t: &[f64], f: &[f64]) -> f64 {
    let m = t.len();
    if m < 2 {
        return 0.0;
    }
    if m == 2 {
        return 0.5 * (t[1] - t[0]) * (f[0] + f[1]);
    }
    let intervals = m - 1;
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 <= intervals {
        let h0 = t[i + 1] - t[i];
        let h1 = t[i + 2] - t[i + 1];
        let hs = h0 + h1;
        total += hs / 6.0
            * ((2.0 - h1 / h0) * f[i] + hs * hs / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
        i += 2;
    }
    if intervals % 2 == 1 {
        // Last interval: integrate the parabola through the final three samples.
        let k = m - 3;
        let h0 = t[k + 1] - t[k];
        let h1 = t[k + 2] - t[k + 1];
        let alpha = (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
        let beta = (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0);
        let eta = h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
        total += alpha * f[k + 2] + beta * f[k + 1] - eta * f[k];
    }
    total
}

/// Length of the connecting geodesic; `f64::INFINITY` when shooting fails.
pub fn distance(metric: &MetricField, p: &PrimalCoords, q: &PrimalCoords) -> Result<f64> {
    distance_with(metric, p, q, &ShootingOptions::default())
}

pub fn distance_with(metric: &MetricField, p: &PrimalCoords, q: &PrimalCoords, opts: &ShootingOptions) -> Result<f64> {
    if metric.signature() != Signature::Riemannian {
        return Err(Error::NotRiemannian);
    }
    metric.guard(&p.0)?;
    metric.guard(&q.0)?;
    if p.0 == q.0 {
        return Ok(0.0);
    }
    match geodesic_connect_with(metric, p, q, opts) {
        Ok(sol) => arc_length(metric, &sol),
        Err(Error::Unreachable { .. } | Error::IntegrationFailure { .. } | Error::DegenerateMetric { .. }) => {
            Ok(f64::INFINITY)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn exp_metric() -> MetricField {
        MetricField::new(1, |x| Matrix::from_element(1, 1, x[0].exp()))
    }

    #[test]
    fn euclidean_straight_line() {
        let sol = geodesic_shoot(&MetricField::euclidean(2), &TangentVector::new([0.0, 0.0], [1.0, 1.0]), 2.0, 1e-2).unwrap();
        assert_eq!(sol.terminal, Terminal::Completed);
        assert_abs_diff_eq!(sol.endpoint()[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.endpoint()[1], 2.0, epsilon = 1e-12);
        assert_eq!(sol.final_time(), 2.0);
    }

    #[test]
    fn exponential_metric_closed_form() {
        let sol = geodesic_shoot(&exp_metric(), &TangentVector::new([0.0], [2.0]), 1.0, 1e-3).unwrap();
        assert_abs_diff_eq!(sol.endpoint()[0], 2.0 * 2f64.ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(*sol.kinetic.last().unwrap(), 4.0, epsilon = 1e-6);
        assert!(sol.kinetic_drift() < 1e-6);
    }

    #[test]
    fn zero_velocity_is_constant() {
        let m = MetricField::new(2, |x| Matrix::from_diagonal(&x.map(|v| 1.0 + v * v)));
        let sol = geodesic_shoot(&m, &TangentVector::new([0.5, -0.3], [0.0, 0.0]), 1.0, 0.1).unwrap();
        for p in &sol.points {
            assert_eq!(p.as_slice(), &[0.5, -0.3]);
        }
    }

    #[test]
    fn leaves_domain_early() {
        let m = MetricField::euclidean(1).with_domain(|x| x[0] < 1.0);
        let sol = geodesic_shoot(&m, &TangentVector::new([0.0], [1.0]), 3.0, 0.01).unwrap();
        assert_eq!(sol.terminal, Terminal::LeftDomain);
        assert!(sol.final_time() < 1.0 && sol.final_time() > 0.95);
    }

    #[test]
    fn blow_up_is_an_integration_failure() {
        // G = e^{-10x}: Γ = −5, so ẍ = 5ẋ², which blows up at t = 1/(5·v0).
        let m = MetricField::new(1, |x| Matrix::from_element(1, 1, (-10.0 * x[0]).exp()));
        let err = geodesic_shoot(&m, &TangentVector::new([0.0], [100.0]), 1.0, 0.01).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { .. }), "{err:?}");
    }

    #[test]
    fn bad_arguments() {
        let m = MetricField::euclidean(1);
        assert!(geodesic_shoot(&m, &TangentVector::new([0.0], [1.0]), 1.0, 0.0).is_err());
        assert!(geodesic_shoot(&m, &TangentVector::new([0.0], [1.0, 2.0]), 1.0, 0.1).is_err());
        let m = MetricField::euclidean(1).with_domain(|x| x[0] > 0.0);
        assert!(matches!(
            geodesic_shoot(&m, &TangentVector::new([-1.0], [1.0]), 1.0, 0.1),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn connect_examples() {
        let sol = geodesic_connect(&MetricField::euclidean(2), &PrimalCoords::new([0.0, 0.0]), &PrimalCoords::new([3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(sol.initial_velocity()[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.initial_velocity()[1], 4.0, epsilon = 1e-9);

        let sol = geodesic_connect(&exp_metric(), &PrimalCoords::new([0.0]), &PrimalCoords::new([2.0 * 2f64.ln()])).unwrap();
        assert_abs_diff_eq!(sol.initial_velocity()[0], 2.0, epsilon = 1e-5);
        assert!((sol.endpoint()[0] - 2.0 * 2f64.ln()).abs() <= 1e-7);

        let p = PrimalCoords::new([0.7]);
        let sol = geodesic_connect(&exp_metric(), &p, &p).unwrap();
        assert_eq!(arc_length(&exp_metric(), &sol).unwrap(), 0.0);
    }

    #[test]
    fn unreachable_target() {
        let m = MetricField::euclidean(1).with_domain(|x| x[0] < 1.0);
        let far = PrimalCoords::new([0.5]);
        assert!(geodesic_connect(&m, &PrimalCoords::new([0.0]), &far).is_ok());
        // Points separated by a gap in the domain.
        let cut = MetricField::euclidean(1).with_domain(|x| x[0] < 1.0 || x[0] > 2.0);
        let err = geodesic_connect(&cut, &PrimalCoords::new([0.0]), &PrimalCoords::new([3.0])).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
        assert_eq!(distance(&cut, &PrimalCoords::new([0.0]), &PrimalCoords::new([3.0])).unwrap(), f64::INFINITY);
    }

    #[test]
    fn arc_length_examples() {
        let e = MetricField::euclidean(2);
        let seg = Polyline::sample(0.0, 1.0, 10, |t| Vector::from_vec(vec![3.0 * t, 4.0 * t]), |_| Vector::from_vec(vec![3.0, 4.0]));
        assert_abs_diff_eq!(arc_length(&e, &seg).unwrap(), 5.0, epsilon = 1e-12);

        for intervals in [100, 101] {
            let curve = Polyline::sample(0.0, 1.0, intervals, |t| Vector::from_element(1, 2.0 * t), |_| Vector::from_element(1, 2.0));
            assert_abs_diff_eq!(arc_length(&exp_metric(), &curve).unwrap(), 2.0 * (E - 1.0), epsilon = 1e-8);
        }

        let still = Polyline::sample(0.0, 1.0, 4, |_| Vector::from_element(1, 0.3), |_| Vector::zeros(1));
        assert_eq!(arc_length(&exp_metric(), &still).unwrap(), 0.0);
    }

    #[test]
    fn simpson_irregular_grid_is_exact_for_quadratics() {
        let t = [0.0, 0.1, 0.35, 0.5, 0.9, 1.0];
        let g: Vec<f64> = t.iter().map(|x| 1.0 + x - 2.0 * x * x).collect();
        assert_abs_diff_eq!(simpson(&t, &g), 1.0 + 0.5 - 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn arc_length_rejects_pseudo_metrics() {
        let m = MetricField::new(2, |_| Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]))).with_signature(Signature::Pseudo);
        let seg = Polyline::sample(0.0, 1.0, 2, |t| Vector::from_vec(vec![0.0, t]), |_| Vector::from_vec(vec![0.0, 1.0]));
        assert!(matches!(arc_length(&m, &seg), Err(Error::NotRiemannian)));
        assert!(matches!(distance(&m, &PrimalCoords::new([0.0, 0.0]), &PrimalCoords::new([1.0, 0.0])), Err(Error::NotRiemannian)));
    }

    #[test]
    fn distance_examples() {
        let e = MetricField::euclidean(2);
        assert_abs_diff_eq!(distance(&e, &PrimalCoords::new([0.0, 0.0]), &PrimalCoords::new([3.0, 4.0])).unwrap(), 5.0, epsilon = 1e-9);
        assert_eq!(distance(&e, &PrimalCoords::new([1.0, 1.0]), &PrimalCoords::new([1.0, 1.0])).unwrap(), 0.0);
        let d = distance(&exp_metric(), &PrimalCoords::new([0.0]), &PrimalCoords::new([2.0])).unwrap();
        assert_abs_diff_eq!(d, 2.0 * (E - 1.0), epsilon = 1e-6);
    }
}
