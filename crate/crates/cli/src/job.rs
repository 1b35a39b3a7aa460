//! Job documents: schema validation, semantic checks and model construction.

use std::sync::{Arc, OnceLock};

use dualflat::dually_flat::{AffineSubmanifold, Chart};
use dualflat::{FamilyKind, FamilySpec, GeneratorSpec, Matrix, MetricField, Vector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::expr::Expr;

pub const JOB_SCHEMA: &str = include_str!("../../../docs/jobspec.schema.json");

pub const COMMANDS: [&str; 7] = ["divergence", "legendre", "metric", "geodesic", "distance", "project", "check"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Divergence,
    Legendre,
    Metric,
    Geodesic,
    Distance,
    Project,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        COMMANDS[self as usize]
    }

    fn needs_potential(self) -> bool {
        matches!(
            self,
            Command::Divergence | Command::Legendre | Command::Project | Command::Check
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Euclidean,
    BernoulliProduct,
    PoissonProduct,
    GaussianFixedVariance,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ManifoldSpec {
    pub family: FamilyName,
    pub dim: usize,
    pub variance: Option<f64>,
    pub potential: Option<String>,
    pub gradient: Option<Vec<String>>,
    pub hessian: Option<Vec<Vec<String>>>,
    pub metric: Option<Vec<Vec<String>>>,
    pub domain: Option<String>,
    pub reference: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Geodesic,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartName {
    Primal,
    Dual,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubmanifoldSpec {
    pub chart: ChartName,
    pub offset: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct Arguments {
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub step: Option<f64>,
    pub tolerance: Option<f64>,
    pub projection: Option<ProjectionKind>,
    pub submanifold: Option<SubmanifoldSpec>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct OutputSpec {
    pub path: Option<String>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct JobSpec {
    pub command: Command,
    pub manifold: ManifoldSpec,
    #[serde(default)]
    pub arguments: Arguments,
    #[serde(default)]
    pub output: OutputSpec,
}

/// One violation, located by a JSON pointer into the job document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// The geometry a job runs on.
#[derive(Clone)]
pub struct Model {
    pub label: String,
    pub dim: usize,
    pub family: Option<FamilySpec>,
    pub generator: Option<GeneratorSpec>,
    pub metric: MetricField,
}

impl Model {
    pub fn in_domain(&self, x: &[f64]) -> bool {
        let v = Vector::from_column_slice(x);
        match &self.generator {
            Some(g) => g.in_domain(&v),
            None => self.metric.in_domain(&v),
        }
    }
}

/// A job that passed every check, with its model built.
#[derive(Clone)]
pub struct ValidJob {
    pub spec: JobSpec,
    pub model: Model,
    pub submanifold: Option<AffineSubmanifold>,
}

fn schema_validator() -> &'static jsonschema::Validator {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    VALIDATOR.get_or_init(|| {
        let schema: Value = serde_json::from_str(JOB_SCHEMA).expect("job schema is valid JSON");
        jsonschema::validator_for(&schema).expect("job schema compiles")
    })
}

/// Parses and validates a job document.
pub fn validate(text: &[u8]) -> Result<ValidJob, Vec<ValidationError>> {
    let value: Value = serde_json::from_slice(text)
        .map_err(|e| vec![ValidationError::new("", format!("not valid JSON: {e}"))])?;
    validate_value(&value)
}

pub fn validate_value(value: &Value) -> Result<ValidJob, Vec<ValidationError>> {
    let mut errors: Vec<ValidationError> = schema_validator()
        .iter_errors(value)
        .map(|e| ValidationError::new(e.instance_path().as_str(), schema_message(&e)))
        .collect();
    if !errors.is_empty() {
        errors.sort_by(|a, b| a.path.cmp(&b.path));
        errors.dedup();
        return Err(errors);
    }
    let spec: JobSpec =
        serde_json::from_value(value.clone()).map_err(|e| vec![ValidationError::new("", e.to_string())])?;
    let mut errors = Vec::new();
    let model = build_model(&spec, &mut errors);
    if let Some(model) = &model {
        check_arguments(&spec, model, &mut errors);
    }
    let submanifold = spec
        .arguments
        .submanifold
        .as_ref()
        .filter(|_| errors.is_empty())
        .and_then(|s| build_submanifold(s, &mut errors));
    match model {
        Some(model) if errors.is_empty() => Ok(ValidJob {
            spec,
            model,
            submanifold,
        }),
        _ => Err(errors),
    }
}

/// Enum violations list every allowed value rather than a truncated sample.
fn schema_message(e: &jsonschema::ValidationError) -> String {
    match e.kind() {
        jsonschema::error::ValidationErrorKind::Enum { options: Value::Array(options) } => {
            let allowed: Vec<String> = options.iter().map(Value::to_string).collect();
            format!("{} is not one of {}", e.instance(), allowed.join(", "))
        }
        _ => e.to_string(),
    }
}

fn compile(src: &str, dim: usize, path: String, errors: &mut Vec<ValidationError>) -> Option<Expr> {
    Expr::compile(src, dim)
        .map_err(|e| errors.push(ValidationError::new(path, e)))
        .ok()
}

fn compile_square(
    rows: &[Vec<String>],
    dim: usize,
    path: &str,
    errors: &mut Vec<ValidationError>,
) -> Option<Vec<Vec<Expr>>> {
    if rows.len() != dim {
        errors.push(ValidationError::new(path, format!("expected {dim} rows, got {}", rows.len())));
        return None;
    }
    let mut out = Vec::with_capacity(dim);
    let mut ok = true;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            errors.push(ValidationError::new(
                format!("{path}/{i}"),
                format!("expected {dim} entries, got {}", row.len()),
            ));
            ok = false;
            continue;
        }
        let compiled: Vec<Option<Expr>> = row
            .iter()
            .enumerate()
            .map(|(j, s)| compile(s, dim, format!("{path}/{i}/{j}"), errors))
            .collect();
        ok &= compiled.iter().all(Option::is_some);
        out.push(compiled.into_iter().flatten().collect());
    }
    ok.then_some(out)
}

fn matrix_of(exprs: &[Vec<Expr>], x: &Vector) -> Matrix {
    let n = exprs.len();
    Matrix::from_fn(n, n, |i, j| exprs[i][j].eval(x.as_slice()).unwrap_or(f64::NAN))
}

fn build_model(spec: &JobSpec, errors: &mut Vec<ValidationError>) -> Option<Model> {
    let m = &spec.manifold;
    let dim = m.dim;
    let start = errors.len();
    if m.family != FamilyName::GaussianFixedVariance && m.variance.is_some() {
        errors.push(ValidationError::new(
            "/manifold/variance",
            "variance applies only to gaussian_fixed_variance",
        ));
    }
    if m.family != FamilyName::Custom {
        for (field, present) in [
            ("potential", m.potential.is_some()),
            ("gradient", m.gradient.is_some()),
            ("hessian", m.hessian.is_some()),
            ("metric", m.metric.is_some()),
            ("domain", m.domain.is_some()),
            ("reference", m.reference.is_some()),
        ] {
            if present {
                errors.push(ValidationError::new(
                    format!("/manifold/{field}"),
                    format!("{field} applies only to the custom family"),
                ));
            }
        }
    }
    let kind = match m.family {
        FamilyName::Euclidean => Some(FamilyKind::Euclidean),
        FamilyName::BernoulliProduct => Some(FamilyKind::BernoulliProduct),
        FamilyName::PoissonProduct => Some(FamilyKind::PoissonProduct),
        FamilyName::GaussianFixedVariance => match m.variance {
            Some(variance) => Some(FamilyKind::GaussianFixedVariance { variance }),
            None => {
                errors.push(ValidationError::new(
                    "/manifold",
                    "gaussian_fixed_variance requires a variance",
                ));
                None
            }
        },
        FamilyName::Custom => None,
    };
    if let Some(kind) = kind {
        if errors.len() > start {
            return None;
        }
        let family = FamilySpec::try_new(kind, dim)
            .map_err(|e| errors.push(ValidationError::new("/manifold", e.to_string())))
            .ok()?;
        let gen = family.log_partition();
        return Some(Model {
            label: m.family_label(),
            dim,
            metric: MetricField::from_generator(&gen),
            generator: Some(gen),
            family: Some(family),
        });
    }
    if m.family != FamilyName::Custom {
        return None;
    }
    build_custom(m, errors)
}

impl ManifoldSpec {
    fn family_label(&self) -> String {
        match self.family {
            FamilyName::Euclidean => "euclidean",
            FamilyName::BernoulliProduct => "bernoulli_product",
            FamilyName::PoissonProduct => "poisson_product",
            FamilyName::GaussianFixedVariance => "gaussian_fixed_variance",
            FamilyName::Custom => "custom",
        }
        .to_string()
    }
}

fn build_custom(m: &ManifoldSpec, errors: &mut Vec<ValidationError>) -> Option<Model> {
    let dim = m.dim;
    let start = errors.len();
    match (&m.potential, &m.metric) {
        (Some(_), Some(_)) => errors.push(ValidationError::new(
            "/manifold",
            "custom manifold takes either a potential or a metric, not both",
        )),
        (None, None) => errors.push(ValidationError::new(
            "/manifold",
            "custom manifold needs a potential or a metric",
        )),
        _ => {}
    }
    if m.potential.is_none() {
        for field in ["gradient", "hessian", "reference"] {
            let present = match field {
                "gradient" => m.gradient.is_some(),
                "hessian" => m.hessian.is_some(),
                _ => m.reference.is_some(),
            };
            if present {
                errors.push(ValidationError::new(
                    format!("/manifold/{field}"),
                    format!("{field} requires a potential"),
                ));
            }
        }
    }
    let domain = m
        .domain
        .as_ref()
        .and_then(|s| compile(s, dim, "/manifold/domain".into(), errors))
        .map(Arc::new);
    let inside = {
        let domain = domain.clone();
        move |x: &Vector| domain.as_ref().is_none_or(|d| d.eval_bool(x.as_slice()).unwrap_or(false))
    };
    if let Some(src) = &m.metric {
        let rows = compile_square(src, dim, "/manifold/metric", errors);
        if errors.len() > start {
            return None;
        }
        let rows = Arc::new(rows?);
        let metric = MetricField::new(dim, move |x| matrix_of(&rows, x)).with_domain(inside);
        return Some(Model {
            label: "custom".into(),
            dim,
            family: None,
            generator: None,
            metric,
        });
    }
    let potential = compile(m.potential.as_deref()?, dim, "/manifold/potential".into(), errors).map(Arc::new);
    let gradient = m.gradient.as_ref().and_then(|g| {
        if g.len() != dim {
            errors.push(ValidationError::new(
                "/manifold/gradient",
                format!("expected {dim} entries, got {}", g.len()),
            ));
            return None;
        }
        let parts: Vec<Option<Expr>> = g
            .iter()
            .enumerate()
            .map(|(i, s)| compile(s, dim, format!("/manifold/gradient/{i}"), errors))
            .collect();
        parts.into_iter().collect::<Option<Vec<_>>>()
    });
    let hessian = m
        .hessian
        .as_ref()
        .and_then(|h| compile_square(h, dim, "/manifold/hessian", errors));
    if let Some(r) = &m.reference {
        if r.len() != dim {
            errors.push(ValidationError::new(
                "/manifold/reference",
                format!("expected {dim} coordinates, got {}", r.len()),
            ));
        } else if !inside(&Vector::from_column_slice(r)) {
            errors.push(ValidationError::new("/manifold/reference", "reference lies outside the domain"));
        }
    }
    if errors.len() > start {
        return None;
    }
    let potential = potential?;
    let mut gen = GeneratorSpec::new(dim, move |x| potential.eval(x.as_slice()).unwrap_or(f64::NAN));
    if let Some(g) = gradient {
        gen = gen.with_gradient(move |x| {
            Vector::from_fn(dim, |i, _| g[i].eval(x.as_slice()).unwrap_or(f64::NAN))
        });
    }
    if let Some(h) = hessian {
        gen = gen.with_hessian(move |x| matrix_of(&h, x));
    }
    if domain.is_some() {
        gen = gen.with_domain(inside);
    }
    if let Some(r) = &m.reference {
        gen = gen.with_reference(Vector::from_column_slice(r));
    }
    Some(Model {
        label: "custom".into(),
        dim,
        metric: MetricField::from_generator(&gen),
        generator: Some(gen),
        family: None,
    })
}

fn check_arguments(spec: &JobSpec, model: &Model, errors: &mut Vec<ValidationError>) {
    let cmd = spec.command;
    let args = &spec.arguments;
    let dim = model.dim;
    if cmd.needs_potential() && model.generator.is_none() {
        errors.push(ValidationError::new(
            "/manifold",
            format!("{} needs a potential; a metric-only manifold supports metric, geodesic and distance", cmd.name()),
        ));
    }
    let require = |present: bool, field: &str, errors: &mut Vec<ValidationError>| {
        if !present {
            errors.push(ValidationError::new(
                format!("/arguments/{field}"),
                format!("{field} is required by {}", cmd.name()),
            ));
        }
    };
    match cmd {
        Command::Divergence | Command::Distance => {
            require(args.p.is_some(), "p", errors);
            require(args.q.is_some(), "q", errors);
        }
        Command::Legendre | Command::Metric => require(args.p.is_some(), "p", errors),
        Command::Geodesic => {
            require(args.p.is_some(), "p", errors);
            if args.v.is_some() == args.q.is_some() {
                errors.push(ValidationError::new(
                    "/arguments",
                    "geodesic takes exactly one of v (initial velocity) or q (target point)",
                ));
            }
        }
        Command::Project => {
            require(args.p.is_some(), "p", errors);
            require(args.submanifold.is_some(), "submanifold", errors);
        }
        Command::Check => {}
    }
    for (field, point, located) in [("p", &args.p, true), ("q", &args.q, true), ("v", &args.v, false)] {
        let Some(point) = point else { continue };
        if point.len() != dim {
            errors.push(ValidationError::new(
                format!("/arguments/{field}"),
                format!("expected {dim} coordinates for this manifold, got {}", point.len()),
            ));
        } else if located && !model.in_domain(point) {
            errors.push(ValidationError::new(
                format!("/arguments/{field}"),
                "point lies outside the manifold domain",
            ));
        }
    }
    if let Some(sub) = &args.submanifold {
        if sub.offset.len() != dim {
            errors.push(ValidationError::new(
                "/arguments/submanifold/offset",
                format!("expected {dim} coordinates, got {}", sub.offset.len()),
            ));
        }
        if sub.basis.len() > dim {
            errors.push(ValidationError::new(
                "/arguments/submanifold/basis",
                format!("at most {dim} basis vectors, got {}", sub.basis.len()),
            ));
        }
        for (i, row) in sub.basis.iter().enumerate() {
            if row.len() != dim {
                errors.push(ValidationError::new(
                    format!("/arguments/submanifold/basis/{i}"),
                    format!("expected {dim} coordinates, got {}", row.len()),
                ));
            }
        }
        if let Some(b) = &sub.bounds {
            if b.len() != sub.basis.len() {
                errors.push(ValidationError::new(
                    "/arguments/submanifold/bounds",
                    format!("expected one interval per basis vector ({}), got {}", sub.basis.len(), b.len()),
                ));
            }
        }
    }
}

fn build_submanifold(sub: &SubmanifoldSpec, errors: &mut Vec<ValidationError>) -> Option<AffineSubmanifold> {
    let chart = match sub.chart {
        ChartName::Primal => Chart::Primal,
        ChartName::Dual => Chart::Dual,
    };
    let built = AffineSubmanifold::from_rows(chart, &sub.offset, &sub.basis).and_then(|s| match &sub.bounds {
        Some(b) => s.with_bounds(b.clone()),
        None => Ok(s),
    });
    built
        .map_err(|e| errors.push(ValidationError::new("/arguments/submanifold", e.to_string())))
        .ok()
}
