//! Monte Carlo comparisons, run reports and their JSON/CSV emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use cvqss_core::qpvtq::FidelityReport;
use cvqss_core::threshold::{Scheme, SystemCheck};
use cvqss_core::PlayerSet;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, ParamsFile};
use crate::error::{CliError, CliResult};

/// Bound on every z-score.
pub const Z_BOUND: f64 = 5.0;

/// Analytic against empirical moments of one sampled quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub analytic_mean: f64,
    pub analytic_variance: f64,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    pub samples: usize,
    /// `None` when the analytic variance is zero and the sample disagrees.
    pub z_mean: Option<f64>,
    pub z_variance: Option<f64>,
    pub pass: bool,
}

pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

fn z(diff: f64, se: f64) -> Option<f64> {
    if se > 0.0 {
        Some(diff / se)
    } else if diff.abs() <= 1e-12 {
        Some(0.0)
    } else {
        None
    }
}

/// Gaussian standard errors: `σ/√N` for the mean, `σ²√(2/(N−1))` for the
/// variance.
pub fn compare(
    quantity: &str,
    analytic_mean: f64,
    analytic_variance: f64,
    xs: &[f64],
) -> Comparison {
    let (m, v) = mean_variance(xs);
    let n = xs.len() as f64;
    let z_mean = z(m - analytic_mean, (analytic_variance / n).sqrt());
    let z_variance = z(
        v - analytic_variance,
        analytic_variance * (2.0 / (n - 1.0).max(1.0)).sqrt(),
    );
    let within = |z: Option<f64>| z.is_some_and(|z| z.abs() <= Z_BOUND);
    Comparison {
        quantity: quantity.into(),
        analytic_mean,
        analytic_variance,
        empirical_mean: m,
        empirical_variance: v,
        samples: xs.len(),
        z_mean,
        z_variance,
        pass: within(z_mean) && within(z_variance),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Feasible,
    Infeasible,
    Error,
}

/// Comparisons at one squeezing setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    /// Uniform squeezing; absent when a per-mode vector was used.
    pub r: Option<f64>,
    pub comparisons: Vec<Comparison>,
    /// Largest `|protocol − formula|` over shots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_rate: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub players: PlayerSet,
    pub feasible: bool,
    pub systems: Vec<SystemCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub id: String,
    pub scheme: Scheme,
    pub mode: Mode,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<LadderPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    pub fn failed(id: &str, scheme: Scheme, mode: Mode, err: &CliError) -> Self {
        Self {
            id: id.into(),
            scheme,
            mode,
            status: Status::Error,
            seed: None,
            shots: None,
            points: Vec::new(),
            solve: None,
            error: Some(err.to_string()),
        }
    }

    pub fn table(reports: &[RunReport]) -> Table {
        let mut t = Table::new(&[
            "id",
            "scheme",
            "mode",
            "status",
            "r",
            "quantity",
            "analytic_mean",
            "analytic_variance",
            "empirical_mean",
            "empirical_variance",
            "samples",
            "z_mean",
            "z_variance",
            "pass",
            "error",
        ]);
        for rep in reports {
            let head = [
                rep.id.clone(),
                rep.scheme.to_string(),
                enum_str(&rep.mode),
                enum_str(&rep.status),
            ];
            let err = rep.error.clone().unwrap_or_default();
            let mut wrote = false;
            for p in &rep.points {
                for c in &p.comparisons {
                    let mut row = head.to_vec();
                    row.extend([
                        opt(p.r),
                        c.quantity.clone(),
                        num(c.analytic_mean),
                        num(c.analytic_variance),
                        num(c.empirical_mean),
                        num(c.empirical_variance),
                        c.samples.to_string(),
                        opt(c.z_mean),
                        opt(c.z_variance),
                        c.pass.to_string(),
                        err.clone(),
                    ]);
                    t.rows.push(row);
                    wrote = true;
                }
            }
            if !wrote {
                let mut row = head.to_vec();
                row.extend(std::iter::repeat_n(String::new(), 10));
                row.push(err);
                t.rows.push(row);
            }
        }
        t
    }
}

fn enum_str<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Plain string table for CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| CliError::schema(format!("csv: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// Explicit choice, else the output file's extension, else `default`.
    pub fn resolve(explicit: Option<Format>, out: Option<&Path>, default: Format) -> Format {
        explicit.unwrap_or_else(
            || match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
                Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
                _ => default,
            },
        )
    }
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut s =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::schema(format!("json: {e}")))?;
    s.push(b'\n');
    Ok(s)
}

/// Write to `path`, or stdout when absent.
pub fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|source| CliError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            fs::write(p, bytes).map_err(|source| CliError::Io {
                path: p.to_path_buf(),
                source,
            })
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

/// Emit a value as JSON, or its table as CSV.
pub fn emit<T: Serialize>(
    value: &T,
    table: Option<Table>,
    format: Format,
    out: Option<&Path>,
) -> CliResult<()> {
    let bytes = match (format, table) {
        (Format::Json, _) => to_json(value)?,
        (Format::Csv, Some(t)) => t.to_csv()?,
        (Format::Csv, None) => {
            return Err(CliError::schema(
                "this command has no CSV form; use --format json",
            ))
        }
    };
    write_bytes(out, &bytes)
}
