use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dualflat_cli::job::{Command, Format, ValidationError, COMMANDS};
use dualflat_cli::run::error_kind;
use dualflat_cli::{run, to_csv, to_json, validate_value, Report};
use serde::Serialize;
use serde_json::{json, Map, Value};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "dualflat", version, about = "Dually flat geometry of convex generators")]
struct Cli {
    #[command(subcommand)]
    command: CommandArg,

    /// Job document (JSON); "-" reads standard input.
    #[arg(long, global = true, value_name = "FILE")]
    spec: Option<PathBuf>,

    /// Write the result here instead of standard output.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Overrides arguments.tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    /// Overrides arguments.step.
    #[arg(long, global = true)]
    step: Option<f64>,

    /// Overrides arguments.p, e.g. --p=0.5,-1.
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "REALS")]
    p: Option<String>,

    /// Overrides arguments.q.
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "REALS")]
    q: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum CommandArg {
    /// Bregman divergence, its dual, and the mixed form.
    Divergence,
    /// Dual coordinates and potentials at a point.
    Legendre,
    /// Metric tensor and Christoffel symbols at a point.
    Metric,
    /// Geodesic from an initial velocity or between two points (CSV polyline by default).
    Geodesic,
    /// Geodesic distance between two points.
    Distance,
    /// Divergence projection onto an affine submanifold.
    Project,
    /// Randomized invariant suites; exits 3 if any fails.
    Check,
}

impl CommandArg {
    fn name(self) -> &'static str {
        match self {
            CommandArg::Divergence => "divergence",
            CommandArg::Legendre => "legendre",
            CommandArg::Metric => "metric",
            CommandArg::Geodesic => "geodesic",
            CommandArg::Distance => "distance",
            CommandArg::Project => "project",
            CommandArg::Check => "check",
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

fn parse_reals(text: &str, path: &str) -> Result<Value, ValidationError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::from)
                .ok_or_else(|| ValidationError {
                    path: path.into(),
                    message: format!("{s:?} is not a finite real number"),
                })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Value::Array)
}

fn read_spec(cli: &Cli) -> Result<Value, Vec<ValidationError>> {
    let fail = |message: String| vec![ValidationError { path: String::new(), message }];
    let path = cli
        .spec
        .as_ref()
        .ok_or_else(|| fail("--spec is required (use - for standard input)".into()))?;
    let mut text = Vec::new();
    if path.as_os_str() == "-" {
        io::stdin().read_to_end(&mut text).map_err(|e| fail(format!("reading standard input: {e}")))?;
    } else {
        text = std::fs::read(path).map_err(|e| fail(format!("reading {}: {e}", path.display())))?;
    }
    serde_json::from_slice(&text).map_err(|e| fail(format!("not valid JSON: {e}")))
}

/// Applies the subcommand and flag overrides to the job document.
fn merge(cli: &Cli, mut doc: Value) -> Result<Value, Vec<ValidationError>> {
    let Some(obj) = doc.as_object_mut() else {
        return Ok(doc);
    };
    let wanted = cli.command.name();
    match obj.get("command").and_then(Value::as_str) {
        Some(given) if COMMANDS.contains(&given) && given != wanted => {
            return Err(vec![ValidationError {
                path: "/command".into(),
                message: format!("job is a {given} job but the subcommand is {wanted}"),
            }]);
        }
        None => {
            obj.insert("command".into(), Value::from(wanted));
        }
        _ => {}
    }
    let mut overrides = Map::new();
    let mut errors = Vec::new();
    for (key, text) in [("p", &cli.p), ("q", &cli.q)] {
        if let Some(text) = text {
            match parse_reals(text, &format!("/arguments/{key}")) {
                Ok(v) => {
                    overrides.insert(key.into(), v);
                }
                Err(e) => errors.push(e),
            }
        }
    }
    if let Some(t) = cli.tolerance {
        overrides.insert("tolerance".into(), json!(t));
    }
    if let Some(s) = cli.step {
        overrides.insert("step".into(), json!(s));
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    if !overrides.is_empty() {
        let args = obj.entry("arguments").or_insert_with(|| Value::Object(Map::new()));
        if let Some(args) = args.as_object_mut() {
            args.extend(overrides);
        }
    }
    Ok(doc)
}

#[derive(Serialize)]
struct ErrorList<'a> {
    errors: &'a [ValidationError],
}

fn emit_validation(errors: &[ValidationError]) -> ExitCode {
    eprintln!("{}", to_json(&ErrorList { errors }));
    ExitCode::from(EXIT_VALIDATION)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let job = match read_spec(&cli).and_then(|doc| merge(&cli, doc)).and_then(|doc| validate_value(&doc)) {
        Ok(job) => job,
        Err(errors) => return emit_validation(&errors),
    };
    let report = match run(&job) {
        Ok(r) => r,
        Err(e) => {
            eprintln!(
                "{}",
                to_json(&json!({ "error": { "kind": error_kind(&e), "message": e.to_string() } }))
            );
            return ExitCode::from(EXIT_NUMERIC);
        }
    };
    let format = match (cli.format, job.spec.output.format) {
        (Some(FormatArg::Csv), _) | (None, Some(Format::Csv)) => Format::Csv,
        (Some(FormatArg::Json), _) | (None, Some(Format::Json)) => Format::Json,
        (None, None) if job.spec.command == Command::Geodesic => Format::Csv,
        (None, None) => Format::Json,
    };
    let text = match format {
        Format::Json => to_json(&report) + "\n",
        Format::Csv => to_csv(&report),
    };
    let out = cli.out.clone().or_else(|| job.spec.output.path.clone().map(PathBuf::from));
    let written = match &out {
        Some(path) => std::fs::write(path, &text).map_err(|e| format!("writing {}: {e}", path.display())),
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(message) = written {
        return emit_validation(&[ValidationError {
            path: "/output/path".into(),
            message,
        }]);
    }
    match report {
        Report::Check(c) if !c.passed => {
            let failed: Vec<&str> = c.suites.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect();
            eprintln!(
                "{}",
                to_json(&json!({ "error": { "kind": "check_failed", "message": format!("failing suites: {}", failed.join(", ")) } }))
            );
            ExitCode::from(EXIT_NUMERIC)
        }
        _ => ExitCode::SUCCESS,
    }
}
