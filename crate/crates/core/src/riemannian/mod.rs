//! Metric fields, Levi-Civita connection coefficients, geodesics (initial and
//! boundary value), arc length, distance, and the Hamiltonian geodesic flow.

mod geodesic;
mod hamiltonian;
mod metric;

pub use geodesic::{
    arc_length, distance, distance_with, geodesic_connect, geodesic_connect_with, geodesic_shoot,
    GeodesicSolution, Polyline, SampledCurve, ShootingOptions, Terminal,
};
pub use hamiltonian::{hamiltonian, hamiltonian_flow, HamiltonianTrajectory, PhasePoint};
pub use metric::{
    christoffel, classify_tangent, classify_tangent_with, Christoffel, MetricField, MetricSource, Signature,
    TangentKind, TangentVector,
};
