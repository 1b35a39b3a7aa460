//! Executes validated jobs.

use dualflat::checks::{run_suites, CheckOptions, Subject};
use dualflat::dually_flat::{
    dual_geodesic_projection_with, dual_orthogonality_defect, dual_pythagoras_residual, geodesic_projection_with,
    orthogonality_defect, probe_triangle, pythagoras_residual, ProjectionOptions,
};
use dualflat::numeric::min_eigenvalue;
use dualflat::riemannian::{christoffel, distance_with, geodesic_connect_with, geodesic_shoot, ShootingOptions, Terminal};
use dualflat::{
    bregman, dual_bregman, mixed_bregman, Error, GeneratorSpec, Matrix, PrimalCoords, Result, TangentVector,
};

use crate::job::{Command, ProjectionKind, ValidJob};
use crate::output::{
    CheckReport, DistanceReport, DivergenceReport, GeodesicReport, LegendreReport, MetricReport, ProjectReport,
    Report, SuiteRow,
};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 1.0;

fn point(v: &Option<Vec<f64>>) -> PrimalCoords {
    PrimalCoords::new(v.clone().expect("validated job carries this point"))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn generator(job: &ValidJob) -> Result<&GeneratorSpec> {
    job.model
        .generator
        .as_ref()
        .ok_or_else(|| Error::Invalid("this command needs a potential".into()))
}

fn shooting(job: &ValidJob) -> ShootingOptions {
    let defaults = ShootingOptions::default();
    ShootingOptions {
        step: job.spec.arguments.step.unwrap_or(defaults.step),
        tolerance: job.spec.arguments.tolerance.unwrap_or(defaults.tolerance),
        ..defaults
    }
}

pub fn run(job: &ValidJob) -> Result<Report> {
    let args = &job.spec.arguments;
    Ok(match job.spec.command {
        Command::Divergence => {
            let gen = generator(job)?;
            let (p, q) = (point(&args.p), point(&args.q));
            Report::Divergence(DivergenceReport {
                value: bregman(gen, &p, &q)?,
                dual_value: dual_bregman(gen, &p, &q)?,
                mixed_value: mixed_bregman(gen, &p, &gen.to_dual(&q)?)?,
            })
        }
        Command::Legendre => {
            let gen = generator(job)?;
            let p = point(&args.p);
            let dual = gen.to_dual(&p)?;
            let back = gen.from_dual(&dual)?;
            Report::Legendre(LegendreReport {
                primal: p.to_vec(),
                dual: dual.to_vec(),
                potential: gen.value(&p)?,
                dual_potential: gen.dual_value(&dual)?,
                round_trip_error: (back.0 - &p.0).amax(),
            })
        }
        Command::Metric => {
            let p = point(&args.p);
            let g = job.model.metric.matrix(&p)?;
            let gamma = christoffel(&job.model.metric, &p)?;
            let n = p.dim();
            Report::Metric(MetricReport {
                point: p.to_vec(),
                metric: rows(&g),
                min_eigenvalue: min_eigenvalue(&g),
                christoffel: (0..n)
                    .map(|k| (0..n).map(|i| (0..n).map(|j| gamma.get(k, i, j)).collect()).collect())
                    .collect(),
            })
        }
        Command::Geodesic => {
            let p = point(&args.p);
            let sol = match &args.v {
                Some(v) => geodesic_shoot(
                    &job.model.metric,
                    &TangentVector::new(p.to_vec(), v.clone()),
                    args.t_end.unwrap_or(DEFAULT_T_END),
                    args.step.unwrap_or(DEFAULT_STEP),
                )?,
                None => geodesic_connect_with(&job.model.metric, &p, &point(&args.q), &shooting(job))?,
            };
            Report::Geodesic(GeodesicReport {
                terminal: match sol.terminal {
                    Terminal::Completed => "completed",
                    Terminal::LeftDomain => "left_domain",
                },
                points: sol.points.iter().map(|x| x.iter().copied().collect()).collect(),
                velocities: sol.velocities.iter().map(|x| x.iter().copied().collect()).collect(),
                times: sol.times,
                kinetic: sol.kinetic,
            })
        }
        Command::Distance => {
            let d = distance_with(&job.model.metric, &point(&args.p), &point(&args.q), &shooting(job))?;
            Report::Distance(DistanceReport {
                distance: d.is_finite().then_some(d),
                reachable: d.is_finite(),
            })
        }
        Command::Project => {
            let gen = generator(job)?;
            let p = point(&args.p);
            let sub = job.submanifold.as_ref().expect("validated project job has a submanifold");
            let opts = ProjectionOptions {
                orthogonality_tolerance: args.tolerance.unwrap_or(ProjectionOptions::default().orthogonality_tolerance),
                ..ProjectionOptions::default()
            };
            let kind = args.projection.unwrap_or(ProjectionKind::Geodesic);
            let proj = match kind {
                ProjectionKind::Geodesic => geodesic_projection_with(gen, &p, sub, &opts)?,
                ProjectionKind::Dual => dual_geodesic_projection_with(gen, &p, sub, &opts)?,
            };
            let tri = probe_triangle(gen, &p, sub, &proj)?;
            let (defect, residual) = match kind {
                ProjectionKind::Geodesic => (orthogonality_defect(gen, &tri)?, pythagoras_residual(gen, &tri)?),
                ProjectionKind::Dual => (dual_orthogonality_defect(gen, &tri)?, dual_pythagoras_residual(gen, &tri)?),
            };
            Report::Project(ProjectReport {
                projection: match kind {
                    ProjectionKind::Geodesic => "geodesic",
                    ProjectionKind::Dual => "dual",
                },
                projected_dual: gen.to_dual(&proj.point)?.to_vec(),
                projected_point: proj.point.to_vec(),
                coordinates: proj.coordinates.iter().copied().collect(),
                divergence: proj.divergence,
                orthogonality_defect: defect,
                pythagoras_residual: residual,
                probe_point: tri.r.to_vec(),
                iterations: proj.iterations,
                near_singular: proj.near_singular,
            })
        }
        Command::Check => {
            let subject = match &job.model.family {
                Some(f) => Subject::from_family(f.clone()),
                None => Subject::from_generator(generator(job)?.clone()),
            };
            let defaults = CheckOptions::default();
            let opts = CheckOptions {
                seed: args.seed.unwrap_or(defaults.seed),
                samples: args.samples.unwrap_or(defaults.samples),
                radius: args.radius.unwrap_or(defaults.radius),
                step: args.step.unwrap_or(defaults.step),
                tolerance: args.tolerance,
            };
            let suites: Vec<SuiteRow> = run_suites(&subject, &opts)
                .into_iter()
                .map(|s| SuiteRow {
                    max_residual: s.max_residual.is_finite().then_some(s.max_residual),
                    name: s.name,
                    passed: s.passed,
                    tolerance: s.tolerance,
                    samples: s.samples,
                    error: s.error,
                })
                .collect();
            Report::Check(CheckReport {
                manifold: job.model.label.clone(),
                dim: job.model.dim,
                seed: opts.seed,
                passed: suites.iter().all(|s| s.passed),
                suites,
            })
        }
    })
}

/// Short name of an error variant, used in failure documents.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::OutOfDomain { .. } => "out_of_domain",
        Error::SegmentLeavesDomain { .. } => "segment_leaves_domain",
        Error::InversionFailure { .. } => "inversion_failure",
        Error::ConvexityViolation { .. } => "convexity_violation",
        Error::IndefiniteMetric { .. } => "indefinite_metric",
        Error::DegenerateMetric { .. } => "degenerate_metric",
        Error::IntegrationFailure { .. } => "integration_failure",
        Error::Signature { .. } => "signature",
        Error::NotRiemannian => "not_riemannian",
        Error::Unreachable { .. } => "unreachable",
        Error::ProjectionFailure { .. } => "projection_failure",
        Error::Invalid(_) => "invalid",
    }
}
