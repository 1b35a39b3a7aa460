//! Affine geodesics in both charts, the Pythagorean identity, and projections
//! onto flat submanifolds.
//!
//! With D_ψ[P‖Q] = ψ(ξ_P) + ψ*(ξ*_Q) − ξ_P·ξ*_Q, three points satisfy
//!
//! ```text
//! D[P‖Q] + D[Q‖R] − D[P‖R] = (ξ_P − ξ_Q)·(ξ*_R − ξ*_Q)
//! ```
//!
//! The right side is the metric inner product at Q of the primal geodesic
//! towards P and the dual geodesic towards R, so the residual vanishes
//! exactly when those two geodesics meet orthogonally. Minimizing D[P‖·]
//! over a dual-flat set therefore makes the primal geodesic from P orthogonal
//! to it, and minimizing D[·‖P] over a primal-flat set does the same for the
//! dual geodesic.

use crate::divergence::bregman;
use crate::error::{check_dim, Error, Result};
use crate::generator::{DualCoords, GeneratorSpec, LegendreOptions, PrimalCoords};
use crate::numeric::{self, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// ξ coordinates.
    Primal,
    /// ξ* coordinates.
    Dual,
}

/// {offset + basis·u} in one chart, optionally with box bounds on u.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubmanifold {
    chart: Chart,
    offset: Vector,
    basis: Matrix,
    bounds: Option<Vec<(f64, f64)>>,
}

impl AffineSubmanifold {
    /// `basis` is dim × m with linearly independent columns.
    pub fn new(chart: Chart, offset: Vector, basis: Matrix) -> Result<Self> {
        check_dim(offset.len(), basis.nrows())?;
        if basis.ncols() > basis.nrows() {
            return Err(Error::Invalid("basis has more columns than the ambient dimension".into()));
        }
        if !(numeric::all_finite(&offset) && basis.iter().all(|v| v.is_finite())) {
            return Err(Error::Invalid("submanifold has non-finite entries".into()));
        }
        if basis.ncols() > 0 {
            let sv = basis.clone().svd(false, false).singular_values;
            if sv.min() <= sv.max() * 1e-12 {
                return Err(Error::Invalid("basis columns are linearly dependent".into()));
            }
        }
        Ok(AffineSubmanifold {
            chart,
            offset,
            basis,
            bounds: None,
        })
    }

    /// Convenience constructor from basis vectors given as rows.
    pub fn from_rows(chart: Chart, offset: &[f64], basis_rows: &[Vec<f64>]) -> Result<Self> {
        let n = offset.len();
        for row in basis_rows {
            check_dim(n, row.len())?;
        }
        let basis = Matrix::from_fn(n, basis_rows.len(), |i, j| basis_rows[j][i]);
        Self::new(chart, Vector::from_column_slice(offset), basis)
    }

    /// Open box constraints lo < u_k < hi on the submanifold coordinates.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        check_dim(self.basis.ncols(), bounds.len())?;
        if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Invalid("each bound needs lo < hi".into()));
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn offset(&self) -> &Vector {
        &self.offset
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    pub fn ambient_dim(&self) -> usize {
        self.offset.len()
    }

    /// Number of free coordinates m.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn within_bounds(&self, u: &Vector) -> bool {
        match &self.bounds {
            None => true,
            Some(b) => u.iter().zip(b).all(|(x, (lo, hi))| lo < x && x < hi),
        }
    }

    /// offset + basis·u in the submanifold's own chart.
    pub fn chart_point(&self, u: &Vector) -> Vector {
        &self.offset + &self.basis * u
    }

    /// The point at coordinates u, expressed in the primal chart.
    pub fn point(&self, gen: &GeneratorSpec, u: &Vector) -> Result<PrimalCoords> {
        self.point_with(gen, u, &LegendreOptions::default())
    }

    fn point_with(&self, gen: &GeneratorSpec, u: &Vector, opts: &LegendreOptions) -> Result<PrimalCoords> {
        check_dim(self.dim(), u.len())?;
        check_dim(gen.dim(), self.ambient_dim())?;
        let c = self.chart_point(u);
        match self.chart {
            Chart::Primal => {
                gen.guard(&c)?;
                Ok(PrimalCoords(c))
            }
            Chart::Dual => gen.from_dual_with(&DualCoords(c), opts),
        }
    }

    /// Least-squares coordinates of a chart vector.
    pub fn coordinates_of(&self, chart_vector: &Vector) -> Vector {
        if self.dim() == 0 {
            return Vector::zeros(0);
        }
        let bt = self.basis.transpose();
        let rhs = &bt * (chart_vector - &self.offset);
        numeric::solve(&(&bt * &self.basis), &rhs).unwrap_or_else(|| Vector::zeros(self.dim()))
    }

    /// Whether `p` lies on the submanifold, measured in its chart.
    pub fn contains(&self, gen: &GeneratorSpec, p: &PrimalCoords, tolerance: f64) -> Result<bool> {
        let c = match self.chart {
            Chart::Primal => {
                gen.guard(&p.0)?;
                p.0.clone()
            }
            Chart::Dual => gen.to_dual(p)?.0,
        };
        let u = self.coordinates_of(&c);
        Ok((self.chart_point(&u) - &c).norm() <= tolerance * (1.0 + c.norm()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    pub p: PrimalCoords,
    pub q: PrimalCoords,
    pub r: PrimalCoords,
}

impl Triangle {
    pub fn new(p: PrimalCoords, q: PrimalCoords, r: PrimalCoords) -> Self {
        Triangle { p, q, r }
    }
}

fn check_unit(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("segment parameter {t} outside [0, 1]")))
    }
}

/// (1 − t)ξ_p + tξ_q
pub fn primal_segment(gen: &GeneratorSpec, p: &PrimalCoords, q: &PrimalCoords, t: f64) -> Result<PrimalCoords> {
    check_unit(t)?;
    gen.guard(&p.0)?;
    gen.guard(&q.0)?;
    let at = |s: f64| &p.0 * (1.0 - s) + &q.0 * s;
    let x = at(t);
    if gen.in_domain(&x) {
        return Ok(PrimalCoords(x));
    }
    // Locate the first exit by bisection on [0, t].
    let (mut lo, mut hi) = (0.0, t);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if gen.in_domain(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::SegmentLeavesDomain { exit_parameter: hi })
}

/// Interpolates (1 − t)ξ*_p + tξ*_q and maps back through the Legendre
/// transformation.
pub fn dual_segment(gen: &GeneratorSpec, p: &PrimalCoords, q: &PrimalCoords, t: f64) -> Result<PrimalCoords> {
    check_unit(t)?;
    let dp = gen.to_dual(p)?;
    let dq = gen.to_dual(q)?;
    if t == 0.0 {
        return Ok(p.clone());
    }
    if t == 1.0 {
        return Ok(q.clone());
    }
    let target = DualCoords(&dp.0 * (1.0 - t) + &dq.0 * t);
    let hint = &p.0 * (1.0 - t) + &q.0 * t;
    gen.from_dual_with(&target, &LegendreOptions::with_hint(hint))
}

/// (ξ_P − ξ_Q)·(ξ*_R − ξ*_Q): the inner product at Q between the primal
/// geodesic towards P and the dual geodesic towards R.
pub fn orthogonality_defect(gen: &GeneratorSpec, tri: &Triangle) -> Result<f64> {
    let q_star = gen.to_dual(&tri.q)?;
    let r_star = gen.to_dual(&tri.r)?;
    gen.guard(&tri.p.0)?;
    Ok((&tri.p.0 - &tri.q.0).dot(&(r_star.0 - q_star.0)))
}

/// D[P‖Q] + D[Q‖R] − D[P‖R]; equals [`orthogonality_defect`].
pub fn pythagoras_residual(gen: &GeneratorSpec, tri: &Triangle) -> Result<f64> {
    Ok(bregman(gen, &tri.p, &tri.q)? + bregman(gen, &tri.q, &tri.r)? - bregman(gen, &tri.p, &tri.r)?)
}

/// (ξ_R − ξ_Q)·(ξ*_P − ξ*_Q): the inner product at Q between the dual
/// geodesic towards P and the primal geodesic towards R.
pub fn dual_orthogonality_defect(gen: &GeneratorSpec, tri: &Triangle) -> Result<f64> {
    let p_star = gen.to_dual(&tri.p)?;
    let q_star = gen.to_dual(&tri.q)?;
    gen.guard(&tri.r.0)?;
    Ok((&tri.r.0 - &tri.q.0).dot(&(p_star.0 - q_star.0)))
}

/// D*[P‖Q] + D*[Q‖R] − D*[P‖R]; equals [`dual_orthogonality_defect`].
pub fn dual_pythagoras_residual(gen: &GeneratorSpec, tri: &Triangle) -> Result<f64> {
    Ok(bregman(gen, &tri.q, &tri.p)? + bregman(gen, &tri.r, &tri.q)? - bregman(gen, &tri.r, &tri.p)?)
}

#[derive(Debug, Clone)]
pub struct ProjectionOptions {
    pub max_iterations: usize,
    /// Bound on the scaled orthogonality defect at the returned point.
    pub orthogonality_tolerance: f64,
    /// Reciprocal condition number of the restricted Hessian below which the
    /// result is flagged `near_singular`.
    pub singular_threshold: f64,
    pub legendre: LegendreOptions,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            max_iterations: 100,
            orthogonality_tolerance: 1e-7,
            singular_threshold: 1e-10,
            legendre: LegendreOptions::default(),
        }
    }
}

/// Result of a divergence projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: PrimalCoords,
    /// Submanifold coordinates u of `point`.
    pub coordinates: Vector,
    /// D[P‖π(P)] for the geodesic projection, D[π*(P)‖P] for the dual one.
    pub divergence: f64,
    /// Largest scaled orthogonality defect over the basis directions.
    pub orthogonality: f64,
    pub iterations: usize,
    /// The restricted objective is nearly flat; the minimizer may not be unique.
    pub near_singular: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    /// minimize D[P‖Q]
    Forward,
    /// minimize D[Q‖P]
    Reverse,
}

struct Eval {
    xi: Vector,
    xi_star: Vector,
    value: f64,
    /// Objective gradient with respect to the submanifold's chart coordinates.
    chart_grad: Vector,
}

struct Problem<'a> {
    gen: &'a GeneratorSpec,
    sub: &'a AffineSubmanifold,
    direction: Direction,
    xi_p: Vector,
    xi_star_p: Vector,
    psi_p: f64,
    opts: &'a ProjectionOptions,
}

impl Problem<'_> {
    fn eval(&self, u: &Vector, hint: Option<&Vector>) -> Option<Eval> {
        if !self.sub.within_bounds(u) {
            return None;
        }
        let c = self.sub.chart_point(u);
        let (xi, xi_star) = match self.sub.chart {
            Chart::Primal => {
                if !self.gen.in_domain(&c) {
                    return None;
                }
                let s = self.gen.gradient_unchecked(&c);
                (c, s)
            }
            Chart::Dual => {
                let mut lo = self.opts.legendre.clone();
                if let Some(h) = hint {
                    lo.hint = Some(h.clone());
                }
                let xi = self.gen.from_dual_with(&DualCoords(c.clone()), &lo).ok()?;
                (xi.0, c)
            }
        };
        let psi_q = self.gen.value_unchecked(&xi);
        let (value, chart_grad) = match (self.direction, self.sub.chart) {
            (Direction::Forward, chart) => {
                let value = self.psi_p - psi_q - xi_star.dot(&(&self.xi_p - &xi));
                let e = &xi - &self.xi_p;
                let g = match chart {
                    Chart::Dual => e,
                    Chart::Primal => self.gen.hessian_unchecked(&xi) * e,
                };
                (value, g)
            }
            (Direction::Reverse, chart) => {
                let value = psi_q - self.psi_p - self.xi_star_p.dot(&(&xi - &self.xi_p));
                let e = &xi_star - &self.xi_star_p;
                let g = match chart {
                    Chart::Primal => e,
                    Chart::Dual => numeric::solve(&self.gen.hessian_unchecked(&xi), &e)?,
                };
                (value, g)
            }
        };
        (value.is_finite() && numeric::all_finite(&chart_grad)).then_some(Eval {
            xi,
            xi_star,
            value,
            chart_grad,
        })
    }

    fn grad_u(&self, e: &Eval) -> Vector {
        self.sub.basis.transpose() * &e.chart_grad
    }

    fn hessian_u(&self, u: &Vector, e: &Eval) -> Option<Matrix> {
        let b = &self.sub.basis;
        match (self.direction, self.sub.chart) {
            (Direction::Forward, Chart::Dual) => {
                let ginv = numeric::checked_inverse(&self.gen.hessian_unchecked(&e.xi))?;
                Some(b.transpose() * ginv * b)
            }
            (Direction::Reverse, Chart::Primal) => Some(b.transpose() * self.gen.hessian_unchecked(&e.xi) * b),
            _ => {
                let m = self.sub.dim();
                let mut h = Matrix::zeros(m, m);
                for k in 0..m {
                    let step = numeric::fd_step(numeric::HESSIAN_STEP, u[k]);
                    let mut up = u.clone();
                    let mut um = u.clone();
                    up[k] += step;
                    um[k] -= step;
                    let gp = self.grad_u(&self.eval(&up, Some(&e.xi))?);
                    let gm = self.grad_u(&self.eval(&um, Some(&e.xi))?);
                    h.set_column(k, &((gp - gm) / (2.0 * step)));
                }
                Some(numeric::symmetrize(&h))
            }
        }
    }

    /// Largest |displacement · direction| / (|displacement|·|direction|) over
    /// the basis, where the pairing is the metric inner product between the
    /// geodesic from P and each submanifold direction.
    fn orthogonality(&self, e: &Eval) -> f64 {
        let b = &self.sub.basis;
        let (disp, dirs) = match (self.direction, self.sub.chart) {
            (Direction::Forward, Chart::Dual) => (&self.xi_p - &e.xi, b.clone()),
            (Direction::Forward, Chart::Primal) => (&self.xi_p - &e.xi, self.gen.hessian_unchecked(&e.xi) * b),
            (Direction::Reverse, Chart::Primal) => (&self.xi_star_p - &e.xi_star, b.clone()),
            (Direction::Reverse, Chart::Dual) => (
                &self.xi_star_p - &e.xi_star,
                numeric::checked_inverse(&self.gen.hessian_unchecked(&e.xi))
                    .map(|gi| gi * b)
                    .unwrap_or_else(|| Matrix::from_element(b.nrows(), b.ncols(), f64::NAN)),
            ),
        };
        let dn = disp.norm();
        if dn == 0.0 {
            return 0.0;
        }
        dirs.column_iter()
            .map(|d| disp.dot(&d).abs() / (dn * d.norm()))
            .fold(0.0, f64::max)
    }

    fn failure(&self, reason: &str, e: &Eval, grad: &Vector) -> Error {
        Error::ProjectionFailure {
            reason: reason.to_string(),
            best: e.xi.as_slice().to_vec(),
            gradient_norm: grad.norm(),
        }
    }

    fn solve(&self) -> Result<Projection> {
        let sub = self.sub;
        let own = match sub.chart {
            Chart::Primal => &self.xi_p,
            Chart::Dual => &self.xi_star_p,
        };
        let mut u = sub.coordinates_of(own);
        if let Some(b) = sub.bounds() {
            for (x, (lo, hi)) in u.iter_mut().zip(b) {
                if !(*lo < *x && *x < *hi) {
                    *x = x.clamp(lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo));
                }
            }
        }
        let mut cur = match self.eval(&u, Some(&self.xi_p)) {
            Some(e) => e,
            None => {
                u = Vector::zeros(sub.dim());
                self.eval(&u, None).ok_or_else(|| {
                    Error::Invalid("submanifold offset is outside the generator domain".into())
                })?
            }
        };
        let mut grad = self.grad_u(&cur);
        let mut iterations = 0;
        let mut near_singular = false;
        while iterations < self.opts.max_iterations && sub.dim() > 0 {
            iterations += 1;
            let mut h = self
                .hessian_u(&u, &cur)
                .ok_or_else(|| self.failure("Hessian evaluation left the domain", &cur, &grad))?;
            let eig = h.clone().symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.amax());
            near_singular = lo <= hi * self.opts.singular_threshold;
            if lo <= 0.0 {
                let shift = -lo + 1e-8 * hi.max(1e-300);
                h += Matrix::identity(sub.dim(), sub.dim()) * shift;
            }
            let delta = numeric::solve(&h, &(-&grad))
                .ok_or_else(|| self.failure("singular restricted Hessian", &cur, &grad))?;
            if delta.norm() <= 1e-15 * (1.0 + u.norm()) {
                break;
            }
            let slope = grad.dot(&delta);
            let noise = 64.0 * f64::EPSILON * (1.0 + self.psi_p.abs() + self.xi_p.dot(&self.xi_star_p).abs() + cur.value.abs());
            let mut scale = 1.0;
            let mut accepted = None;
            let mut hit_boundary = false;
            for _ in 0..60 {
                let cand = &u + &delta * scale;
                if !sub.within_bounds(&cand) {
                    hit_boundary = true;
                } else if let Some(e) = self.eval(&cand, Some(&cur.xi)) {
                    // Near the minimum the decrease drops below the rounding noise
                    // of the objective; there a shrinking gradient decides.
                    let sufficient = e.value <= cur.value + 1e-4 * scale * slope;
                    let flat = e.value <= cur.value + noise && self.grad_u(&e).norm() < grad.norm();
                    if sufficient || flat {
                        accepted = Some((cand, e));
                        break;
                    }
                }
                scale *= 0.5;
            }
            match accepted {
                Some((nu, ne)) => {
                    let step = (&nu - &u).norm();
                    u = nu;
                    cur = ne;
                    grad = self.grad_u(&cur);
                    if step <= 1e-14 * (1.0 + u.norm()) {
                        break;
                    }
                }
                None if hit_boundary => {
                    return Err(self.failure("minimizer lies on the submanifold boundary", &cur, &grad));
                }
                // No representable decrease: the iterate sits at the rounding floor.
                None => break,
            }
        }
        let orthogonality = self.orthogonality(&cur);
        if !(orthogonality <= self.opts.orthogonality_tolerance) {
            return Err(self.failure(
                &format!("orthogonality defect {orthogonality:e} after {iterations} iterations"),
                &cur,
                &grad,
            ));
        }
        Ok(Projection {
            point: PrimalCoords(cur.xi),
            coordinates: u,
            divergence: cur.value.max(0.0),
            orthogonality,
            iterations,
            near_singular,
        })
    }
}

fn project(
    gen: &GeneratorSpec,
    p: &PrimalCoords,
    sub: &AffineSubmanifold,
    direction: Direction,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    check_dim(gen.dim(), sub.ambient_dim())?;
    gen.guard(&p.0)?;
    let problem = Problem {
        gen,
        sub,
        direction,
        xi_star_p: gen.gradient_unchecked(&p.0),
        psi_p: gen.value_unchecked(&p.0),
        xi_p: p.0.clone(),
        opts,
    };
    problem.solve()
}

/// The point of `sub` minimizing D_ψ[P‖·], found by Newton iteration on the
/// stationarity conditions in submanifold coordinates. Unique when `sub` is
/// flat in the dual chart.
pub fn geodesic_projection(gen: &GeneratorSpec, p: &PrimalCoords, sub: &AffineSubmanifold) -> Result<Projection> {
    geodesic_projection_with(gen, p, sub, &ProjectionOptions::default())
}

pub fn geodesic_projection_with(
    gen: &GeneratorSpec,
    p: &PrimalCoords,
    sub: &AffineSubmanifold,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    project(gen, p, sub, Direction::Forward, opts)
}

/// The point of `sub` minimizing D_ψ[·‖P] (the dual divergence D*[P‖·]).
/// Unique when `sub` is flat in the primal chart.
pub fn dual_geodesic_projection(gen: &GeneratorSpec, p: &PrimalCoords, sub: &AffineSubmanifold) -> Result<Projection> {
    dual_geodesic_projection_with(gen, p, sub, &ProjectionOptions::default())
}

pub fn dual_geodesic_projection_with(
    gen: &GeneratorSpec,
    p: &PrimalCoords,
    sub: &AffineSubmanifold,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    project(gen, p, sub, Direction::Reverse, opts)
}

/// A third vertex R on `sub`, displaced from the projection along the first
/// basis direction, for checking the Pythagorean relation of a projection.
pub fn probe_triangle(
    gen: &GeneratorSpec,
    p: &PrimalCoords,
    sub: &AffineSubmanifold,
    projection: &Projection,
) -> Result<Triangle> {
    let mut r = projection.point.clone();
    if sub.dim() > 0 {
        let mut delta = 1.0;
        for _ in 0..40 {
            let mut u = projection.coordinates.clone();
            u[0] += delta;
            if sub.within_bounds(&u) {
                if let Ok(pt) = sub.point(gen, &u) {
                    r = pt;
                    break;
                }
            }
            delta *= 0.5;
        }
    }
    Ok(Triangle::new(p.clone(), projection.point.clone(), r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{FamilyKind, FamilySpec};
    use crate::numeric::{logit, sigmoid};
    use approx::assert_abs_diff_eq;

    fn euclid() -> GeneratorSpec {
        FamilySpec::new(FamilyKind::Euclidean, 2).log_partition()
    }

    fn bern(dim: usize) -> GeneratorSpec {
        FamilySpec::new(FamilyKind::BernoulliProduct, dim).log_partition()
    }

    fn pc(v: &[f64]) -> PrimalCoords {
        PrimalCoords::new(v.to_vec())
    }

    #[test]
    fn primal_segment_examples() {
        let g = euclid();
        let (p, q) = (pc(&[0.0, 0.0]), pc(&[2.0, 2.0]));
        assert_eq!(primal_segment(&g, &p, &q, 0.0).unwrap(), p);
        assert_eq!(primal_segment(&g, &p, &q, 1.0).unwrap(), q);
        assert_eq!(primal_segment(&g, &p, &q, 0.5).unwrap(), pc(&[1.0, 1.0]));
        assert!(primal_segment(&g, &p, &q, 1.5).is_err());
    }

    #[test]
    fn primal_segment_reports_exit() {
        // Domain guard with a (non-convex) hole lets us observe the exit parameter.
        let g = FamilySpec::new(FamilyKind::Euclidean, 1)
            .log_partition()
            .with_domain(|x| !(0.4..0.6).contains(&x[0]));
        let err = primal_segment(&g, &pc(&[0.0]), &pc(&[1.0]), 0.5).unwrap_err();
        match err {
            Error::SegmentLeavesDomain { exit_parameter } => assert_abs_diff_eq!(exit_parameter, 0.4, epsilon = 1e-12),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn dual_segment_examples() {
        let g = euclid();
        let (p, q) = (pc(&[0.0, 1.0]), pc(&[2.0, -3.0]));
        for &t in &[0.0, 0.3, 1.0] {
            let a = dual_segment(&g, &p, &q, t).unwrap();
            let b = primal_segment(&g, &p, &q, t).unwrap();
            assert!((a.0 - b.0).amax() < 1e-12);
        }
        let b = bern(1);
        let (p, q) = (pc(&[logit(0.2)]), pc(&[logit(0.8)]));
        assert_eq!(dual_segment(&b, &p, &q, 0.0).unwrap(), p);
        assert_eq!(dual_segment(&b, &p, &q, 1.0).unwrap(), q);
        assert_abs_diff_eq!(dual_segment(&b, &p, &q, 0.5).unwrap().0[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn defect_examples() {
        let g = euclid();
        let tri = Triangle::new(pc(&[0.0, 0.0]), pc(&[1.0, 0.0]), pc(&[1.0, 1.0]));
        assert_eq!(orthogonality_defect(&g, &tri).unwrap(), 0.0);
        assert_eq!(pythagoras_residual(&g, &tri).unwrap(), 0.0);
        let tri = Triangle::new(pc(&[0.0, 0.0]), pc(&[1.0, 0.0]), pc(&[1.0, 0.0]));
        assert_eq!(orthogonality_defect(&g, &tri).unwrap(), 0.0);
        // Collinear: the vertex Q sits between P and R, so the edges QP and QR
        // point in opposite directions.
        let tri = Triangle::new(pc(&[0.0, 0.0]), pc(&[1.0, 0.0]), pc(&[2.0, 0.0]));
        assert_eq!(orthogonality_defect(&g, &tri).unwrap(), -1.0);
        assert_eq!(pythagoras_residual(&g, &tri).unwrap(), -1.0);
        let tri = Triangle::new(pc(&[0.3, 0.3]), pc(&[0.3, 0.3]), pc(&[1.0, 2.0]));
        assert_eq!(pythagoras_residual(&g, &tri).unwrap(), 0.0);
    }

    #[test]
    fn residual_equals_defect_for_bernoulli() {
        let g = bern(2);
        let tri = Triangle::new(pc(&[0.4, -1.0]), pc(&[1.2, 0.3]), pc(&[-0.7, 0.9]));
        let r = pythagoras_residual(&g, &tri).unwrap();
        let d = orthogonality_defect(&g, &tri).unwrap();
        assert_abs_diff_eq!(r, d, epsilon = 1e-12);
        let r = dual_pythagoras_residual(&g, &tri).unwrap();
        let d = dual_orthogonality_defect(&g, &tri).unwrap();
        assert_abs_diff_eq!(r, d, epsilon = 1e-12);
    }

    #[test]
    fn euclidean_projection_onto_axis() {
        let g = euclid();
        let axis = AffineSubmanifold::from_rows(Chart::Primal, &[0.0, 0.0], &[vec![1.0, 0.0]]).unwrap();
        let pr = geodesic_projection(&g, &pc(&[2.0, 3.0]), &axis).unwrap();
        assert!((pr.point.0.clone() - Vector::from_vec(vec![2.0, 0.0])).amax() < 1e-12);
        assert_abs_diff_eq!(pr.divergence, 4.5, epsilon = 1e-12);
        let dual = dual_geodesic_projection(&g, &pc(&[2.0, 3.0]), &axis).unwrap();
        assert!((dual.point.0 - pr.point.0).amax() < 1e-10);
    }

    #[test]
    fn projection_onto_whole_space_is_identity() {
        let g = bern(2);
        let p = pc(&[0.7, -1.3]);
        for chart in [Chart::Primal, Chart::Dual] {
            let whole = AffineSubmanifold::new(chart, Vector::from_vec(vec![0.5, 0.5]), Matrix::identity(2, 2)).unwrap();
            let whole = if chart == Chart::Primal {
                AffineSubmanifold::new(chart, Vector::zeros(2), Matrix::identity(2, 2)).unwrap()
            } else {
                whole
            };
            let a = geodesic_projection(&g, &p, &whole).unwrap();
            assert!((&a.point.0 - &p.0).amax() < 1e-8);
            assert!(a.divergence < 1e-15);
            let b = dual_geodesic_projection(&g, &p, &whole).unwrap();
            assert!((&b.point.0 - &p.0).amax() < 1e-8);
        }
    }

    #[test]
    fn bernoulli_equal_marginals() {
        let g = bern(2);
        let p = pc(&[logit(0.3), logit(0.7)]);
        let diag = AffineSubmanifold::from_rows(Chart::Dual, &[0.0, 0.0], &[vec![1.0, 1.0]])
            .unwrap()
            .with_bounds(vec![(0.0, 1.0)])
            .unwrap();
        let pr = geodesic_projection(&g, &p, &diag).unwrap();
        let mu = g.to_dual(&pr.point).unwrap();
        assert_abs_diff_eq!(mu.0[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(mu.0[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn bernoulli_dual_projection_to_fixed_mean() {
        let g = bern(1);
        let p = pc(&[logit(0.9)]);
        // A single point {μ = 0.5} in the dual chart.
        let point = AffineSubmanifold::new(Chart::Dual, Vector::from_element(1, 0.5), Matrix::zeros(1, 0)).unwrap();
        let pr = dual_geodesic_projection(&g, &p, &point).unwrap();
        assert_abs_diff_eq!(sigmoid(pr.point.0[0]), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn boundary_minimizer_is_a_failure() {
        let g = bern(2);
        let p = pc(&[logit(0.3), logit(0.7)]);
        // Restrict the equal-marginals line to μ ∈ (0.6, 0.9); the minimizer μ = 0.5 is outside.
        let diag = AffineSubmanifold::from_rows(Chart::Dual, &[0.0, 0.0], &[vec![1.0, 1.0]])
            .unwrap()
            .with_bounds(vec![(0.6, 0.9)])
            .unwrap();
        let err = geodesic_projection(&g, &p, &diag).unwrap_err();
        assert!(matches!(err, Error::ProjectionFailure { .. }), "{err:?}");
    }

    #[test]
    fn projection_satisfies_pythagoras() {
        let g = bern(3);
        let p = pc(&[0.9, -0.4, 1.7]);
        let sub = AffineSubmanifold::from_rows(Chart::Dual, &[0.5, 0.5, 0.5], &[vec![0.2, -0.1, 0.05], vec![0.0, 0.1, -0.2]])
            .unwrap();
        let pr = geodesic_projection(&g, &p, &sub).unwrap();
        for u in [[0.3, -0.5], [-1.0, 0.8]] {
            let r = sub.point(&g, &Vector::from_vec(u.to_vec())).unwrap();
            let tri = Triangle::new(p.clone(), pr.point.clone(), r);
            assert!(pythagoras_residual(&g, &tri).unwrap().abs() < 1e-10);
        }
        let tri = probe_triangle(&g, &p, &sub, &pr).unwrap();
        assert!(pythagoras_residual(&g, &tri).unwrap().abs() < 1e-10);

        let flat = AffineSubmanifold::from_rows(Chart::Primal, &[0.0, 0.0, 0.0], &[vec![1.0, 1.0, 0.0]]).unwrap();
        let pr = dual_geodesic_projection(&g, &p, &flat).unwrap();
        let r = flat.point(&g, &Vector::from_element(1, -0.6)).unwrap();
        let tri = Triangle::new(p.clone(), pr.point.clone(), r);
        assert!(dual_pythagoras_residual(&g, &tri).unwrap().abs() < 1e-10);
    }

    #[test]
    fn curved_chart_projections_converge() {
        // Primal-flat set under D[P‖·] and dual-flat set under D[·‖P]: no
        // uniqueness guarantee, but Newton still reaches a stationary point.
        let g = FamilySpec::new(FamilyKind::PoissonProduct, 2).log_partition();
        let p = pc(&[0.5, -0.2]);
        let line = AffineSubmanifold::from_rows(Chart::Primal, &[0.0, 0.0], &[vec![1.0, -1.0]]).unwrap();
        let a = geodesic_projection(&g, &p, &line).unwrap();
        assert!(a.orthogonality < 1e-7);
        let dline = AffineSubmanifold::from_rows(Chart::Dual, &[1.0, 1.0], &[vec![1.0, -1.0]])
            .unwrap()
            .with_bounds(vec![(-0.99, 0.99)])
            .unwrap();
        let b = dual_geodesic_projection(&g, &p, &dline).unwrap();
        assert!(b.orthogonality < 1e-7);
    }

    #[test]
    fn submanifold_validation() {
        assert!(AffineSubmanifold::from_rows(Chart::Primal, &[0.0, 0.0], &[vec![1.0, 1.0], vec![2.0, 2.0]]).is_err());
        assert!(AffineSubmanifold::from_rows(Chart::Primal, &[0.0, 0.0], &[vec![1.0]]).is_err());
        let s = AffineSubmanifold::from_rows(Chart::Primal, &[0.0, 0.0], &[vec![1.0, 0.0]]).unwrap();
        assert!(s.clone().with_bounds(vec![(1.0, 0.0)]).is_err());
        assert!(s.contains(&euclid(), &pc(&[5.0, 0.0]), 1e-12).unwrap());
        assert!(!s.contains(&euclid(), &pc(&[5.0, 0.1]), 1e-12).unwrap());
    }
}
