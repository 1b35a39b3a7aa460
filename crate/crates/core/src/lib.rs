//! Dually flat information geometry on top of nalgebra.
//!
//! A [`GeneratorSpec`] wraps a strictly convex potential ψ. From it come the
//! dual coordinates ξ* = ∇ψ(ξ), the Bregman divergence, the Hessian metric and
//! its geodesics, and divergence projections onto flat submanifolds.
//! [`FamilySpec`] supplies the log-partition functions of a few exponential
//! families with closed-form KL divergences to test against.

pub mod checks;
pub mod divergence;
pub mod dually_flat;
pub mod error;
pub mod families;
pub mod generator;
pub mod numeric;
pub mod riemannian;

pub use divergence::{bregman, dual_bregman, kl_discrete, mixed_bregman, DivergencePair, Orientation, QuadraticForm};
pub use dually_flat::{
    dual_geodesic_projection, dual_segment, geodesic_projection, orthogonality_defect, primal_segment,
    pythagoras_residual, AffineSubmanifold, Chart, Projection, Triangle,
};
pub use error::{Error, Result};
pub use families::{FamilyKind, FamilySpec};
pub use generator::{DualCoords, GeneratorSpec, LegendreOptions, PrimalCoords};
pub use numeric::{Matrix, Vector};
pub use riemannian::{MetricField, Signature, TangentVector};
