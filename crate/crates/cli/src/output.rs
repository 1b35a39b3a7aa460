//! Result documents and their JSON and CSV renderings.

use std::io;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub value: f64,
    pub dual_value: f64,
    pub mixed_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LegendreReport {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub potential: f64,
    pub dual_potential: f64,
    pub round_trip_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub point: Vec<f64>,
    pub metric: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    /// Γ^k_ij indexed [k][i][j].
    pub christoffel: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicReport {
    pub terminal: &'static str,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub kinetic: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceReport {
    pub distance: Option<f64>,
    pub reachable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectReport {
    pub projection: &'static str,
    pub projected_point: Vec<f64>,
    pub projected_dual: Vec<f64>,
    pub coordinates: Vec<f64>,
    pub divergence: f64,
    pub orthogonality_defect: f64,
    pub pythagoras_residual: f64,
    pub probe_point: Vec<f64>,
    pub iterations: usize,
    pub near_singular: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteRow {
    pub name: String,
    pub passed: bool,
    pub max_residual: Option<f64>,
    pub tolerance: f64,
    pub samples: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub manifold: String,
    pub dim: usize,
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteRow>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Report {
    Divergence(DivergenceReport),
    Legendre(LegendreReport),
    Metric(MetricReport),
    Geodesic(GeodesicReport),
    Distance(DistanceReport),
    Project(ProjectReport),
    Check(CheckReport),
}

/// Formats `x` with 17 significant digits, dropping trailing zeros. Exponent
/// notation is used below 1e-4 and from 1e17 on, as with `%.17g`, but the
/// exponent carries no padding (`1e-8`, not `1e-08`).
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        trim_zeros(&format!("{x:.*}", (16 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

struct G17;

impl serde_json::ser::Formatter for G17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_g17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with fixed field order and `%.17g` floats; non-finite values
/// become null.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17);
    value.serialize(&mut ser).expect("reports serialize");
    String::from_utf8(buf).expect("JSON output is UTF-8")
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

fn table(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with a header row; numbers in shortest round-trip form.
pub fn to_csv(report: &Report) -> String {
    match report {
        Report::Divergence(r) => table(
            vec!["value".into(), "dual_value".into(), "mixed_value".into()],
            vec![vec![num(r.value), num(r.dual_value), num(r.mixed_value)]],
        ),
        Report::Legendre(r) => {
            let n = r.primal.len();
            let mut header = vec!["potential".into(), "dual_potential".into(), "round_trip_error".into()];
            header.extend(indexed("xi", n));
            header.extend(indexed("eta", n));
            let mut row = vec![num(r.potential), num(r.dual_potential), num(r.round_trip_error)];
            row.extend(r.primal.iter().chain(&r.dual).map(|&x| num(x)));
            table(header, vec![row])
        }
        Report::Metric(r) => {
            let rows = r
                .metric
                .iter()
                .enumerate()
                .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &g)| vec![i.to_string(), j.to_string(), num(g)]))
                .collect();
            table(vec!["i".into(), "j".into(), "g".into()], rows)
        }
        Report::Geodesic(r) => {
            let n = r.points.first().map_or(0, Vec::len);
            let mut header = vec!["t".to_string()];
            header.extend(indexed("xi", n));
            header.push("kinetic".into());
            let rows = r
                .times
                .iter()
                .zip(&r.points)
                .zip(&r.kinetic)
                .map(|((&t, p), &k)| {
                    let mut row = vec![num(t)];
                    row.extend(p.iter().map(|&x| num(x)));
                    row.push(num(k));
                    row
                })
                .collect();
            table(header, rows)
        }
        Report::Distance(r) => table(
            vec!["distance".into(), "reachable".into()],
            vec![vec![r.distance.map_or(String::new(), num), r.reachable.to_string()]],
        ),
        Report::Project(r) => {
            let n = r.projected_point.len();
            let mut header: Vec<String> = [
                "projection",
                "divergence",
                "orthogonality_defect",
                "pythagoras_residual",
                "iterations",
                "near_singular",
            ]
            .map(String::from)
            .into();
            header.extend(indexed("xi", n));
            let mut row = vec![
                r.projection.to_string(),
                num(r.divergence),
                num(r.orthogonality_defect),
                num(r.pythagoras_residual),
                r.iterations.to_string(),
                r.near_singular.to_string(),
            ];
            row.extend(r.projected_point.iter().map(|&x| num(x)));
            table(header, vec![row])
        }
        Report::Check(r) => table(
            ["name", "passed", "max_residual", "tolerance", "samples", "error"].map(String::from).into(),
            r.suites
                .iter()
                .map(|s| {
                    vec![
                        s.name.clone(),
                        s.passed.to_string(),
                        s.max_residual.map_or(String::new(), num),
                        num(s.tolerance),
                        s.samples.to_string(),
                        s.error.as_deref().map_or(String::new(), csv_text),
                    ]
                })
                .collect(),
        ),
    }
}
