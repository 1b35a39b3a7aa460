//! Small dense linear-algebra and finite-difference helpers shared by the
//! geometry modules.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Central-difference step for first derivatives.
pub const GRADIENT_STEP: f64 = 1e-6;
/// Central-difference step for second derivatives and metric partials.
pub const HESSIAN_STEP: f64 = 1e-4;

pub(crate) fn fd_step(base: f64, x: f64) -> f64 {
    base * (1.0 + x.abs())
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest absolute deviation from symmetry, relative to the largest entry.
pub fn asymmetry(m: &Matrix) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() / scale
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Inverse of a (possibly indefinite) square matrix; `None` when singular or
/// numerically ill-conditioned (max-entry condition estimate above 1e14).
pub fn checked_inverse(m: &Matrix) -> Option<Matrix> {
    if m.nrows() == 0 {
        return Some(Matrix::zeros(0, 0));
    }
    let inv = match m.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => m.clone().try_inverse()?,
    };
    if !inv.iter().all(|v| v.is_finite()) {
        return None;
    }
    let n = m.nrows() as f64;
    if m.amax() * inv.amax() * n > 1e14 {
        return None;
    }
    Some(inv)
}

/// Solves `m x = rhs`, preferring Cholesky and falling back to LU.
pub fn solve(m: &Matrix, rhs: &Vector) -> Option<Vector> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let x = m.clone().lu().solve(rhs)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Sigmoid evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` evaluated without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
