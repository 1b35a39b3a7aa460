use crate::error::{check_dim, Error, Result};
use crate::numeric::{self, Vector};

use super::geodesic::{step_count, Terminal};
use super::metric::MetricField;

/// Canonical coordinates (q, p) on the cotangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vector,
    pub p: Vector,
}

impl PhasePoint {
    pub fn new(q: impl Into<Vec<f64>>, p: impl Into<Vec<f64>>) -> Self {
        PhasePoint {
            q: Vector::from_vec(q.into()),
            p: Vector::from_vec(p.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    /// ℋ(q, p) at each sample.
    pub energy: Vec<f64>,
    pub terminal: Terminal,
}

impl HamiltonianTrajectory {
    pub fn last(&self) -> &PhasePoint {
        self.states.last().expect("trajectories hold at least one sample")
    }

    /// max_t |ℋ(t) − ℋ(0)| / |ℋ(0)|; absolute when ℋ(0) = 0.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.energy[0];
        let scale = if h0 == 0.0 { 1.0 } else { h0.abs() };
        self.energy.iter().map(|h| (h - h0).abs() / scale).fold(0.0, f64::max)
    }
}

/// ℋ(q, p) = ½ g^{ij}(q) p_i p_j
pub fn hamiltonian(metric: &MetricField, state: &PhasePoint) -> Result<f64> {
    metric.guard(&state.q)?;
    check_dim(metric.dim(), state.p.len())?;
    let (_, inv) = metric.inverse_at(&state.q)?;
    Ok(0.5 * state.p.dot(&(inv * &state.p)))
}

/// (q̇, ṗ) = (G⁻¹p, ½ vᵀ ∂_i G v) with v = G⁻¹p, which equals −∂ℋ/∂q_i
/// through ∂_i(G⁻¹) = −G⁻¹ (∂_i G) G⁻¹.
fn hamilton_rhs(metric: &MetricField, q: &Vector, p: &Vector) -> Result<Option<(Vector, Vector)>> {
    if !metric.in_domain(q) {
        return Ok(None);
    }
    let (_, inv) = metric.inverse_at(q)?;
    let v = inv * p;
    let dp = Vector::from_iterator(
        q.len(),
        metric.partials_unchecked(q).iter().map(|dg| 0.5 * v.dot(&(dg * &v))),
    );
    Ok(Some((v, dp)))
}

/// Integrates Hamilton's equations for the geodesic Hamiltonian with RK4,
/// recording ℋ at every step.
pub fn hamiltonian_flow(metric: &MetricField, start: &PhasePoint, t_end: f64, step: f64) -> Result<HamiltonianTrajectory> {
    let h0 = hamiltonian(metric, start)?;
    let n = step_count(t_end, step)?;
    let h = if n == 0 { 0.0 } else { t_end / n as f64 };
    let mut out = HamiltonianTrajectory {
        times: vec![0.0],
        states: vec![start.clone()],
        energy: vec![h0],
        terminal: Terminal::Completed,
    };
    let (mut q, mut p) = (start.q.clone(), start.p.clone());
    for i in 0..n {
        let t = i as f64 * h;
        let next = (|| -> Result<Option<(Vector, Vector)>> {
            let Some((k1q, k1p)) = hamilton_rhs(metric, &q, &p)? else { return Ok(None) };
            let Some((k2q, k2p)) = hamilton_rhs(metric, &(&q + &k1q * (h / 2.0)), &(&p + &k1p * (h / 2.0)))? else {
                return Ok(None);
            };
            let Some((k3q, k3p)) = hamilton_rhs(metric, &(&q + &k2q * (h / 2.0)), &(&p + &k2p * (h / 2.0)))? else {
                return Ok(None);
            };
            let Some((k4q, k4p)) = hamilton_rhs(metric, &(&q + &k3q * h), &(&p + &k3p * h))? else {
                return Ok(None);
            };
            Ok(Some((
                &q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0),
                &p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0),
            )))
        })()
        .map_err(|e| match e {
            Error::DegenerateMetric { .. } => Error::IntegrationFailure { last_time: t },
            e => e,
        })?;
        let Some((nq, np)) = next else {
            out.terminal = Terminal::LeftDomain;
            break;
        };
        if !(numeric::all_finite(&nq) && numeric::all_finite(&np)) {
            return Err(Error::IntegrationFailure { last_time: t });
        }
        if !metric.in_domain(&nq) {
            out.terminal = Terminal::LeftDomain;
            break;
        }
        q = nq;
        p = np;
        let state = PhasePoint { q: q.clone(), p: p.clone() };
        out.energy.push(hamiltonian(metric, &state)?);
        out.times.push(if i + 1 == n { t_end } else { (i + 1) as f64 * h });
        out.states.push(state);
    }
    Ok(out)
}
