//! Executing one experiment config.

use std::path::Path;
use std::time::Instant;

use cvqss_core::cpubc::{self, CpubcRun, QuadChoice};
use cvqss_core::cpvtc::{self, CpvtcParams, CpvtcRun};
use cvqss_core::feasibility::FeasibilityResult;
use cvqss_core::qpvtq::{self, QpvtqRun, QuadParams, SecretQumode};
use cvqss_core::threshold::{Scheme, SystemCheck};
use cvqss_core::PlayerSet;

use crate::config::{self, ExperimentConfig, Mode, ParamsFile, Resolved, DEFAULT_SHOTS};
use crate::error::{CliError, CliResult};
use crate::report::{compare, num, opt, LadderPoint, RunReport, SolveOutcome, Status, Table};

/// Per-shot agreement required between the protocol and the closed form.
const IDENTITY_RTOL: f64 = 1e-9;

pub struct RunOutput {
    pub report: RunReport,
    pub samples: Option<Table>,
}

fn check(system: &str, r: &FeasibilityResult) -> SystemCheck {
    SystemCheck {
        system: system.into(),
        feasible: r.is_feasible(),
        certificate: r.certificate.clone(),
    }
}

/// Distributed player modes, 0-based.
fn universe(cfg: &ExperimentConfig, res: &Resolved) -> Vec<usize> {
    if let Some(p) = &res.players {
        return p.clone();
    }
    let m = res.graph.n_modes();
    match cfg.scheme {
        Scheme::Cpvtc => (0..m).collect(),
        _ => (0..m.saturating_sub(1)).collect(),
    }
}

fn subset(cfg: &ExperimentConfig, res: &Resolved) -> CliResult<PlayerSet> {
    let all = universe(cfg, res);
    match &cfg.subset {
        None => Ok(PlayerSet::new(all)),
        Some(s) => match s.modes().iter().find(|m| !all.contains(m)) {
            Some(m) => Err(CliError::schema(format!(
                "config {}: mode {} is not a player mode",
                cfg.id,
                m + 1
            ))),
            None => Ok(s.clone()),
        },
    }
}

fn class_c(cfg: &ExperimentConfig, res: &Resolved) -> CliResult<Vec<f64>> {
    res.params
        .as_ref()
        .and_then(|p| p.c.clone())
        .or_else(|| res.design_c.clone())
        .ok_or_else(|| CliError::schema(format!("config {}: cpvtc needs `c`", cfg.id)))
}

fn known_r(res: &Resolved) -> Option<Vec<f64>> {
    res.params
        .as_ref()
        .and_then(|p| p.r.clone())
        .or_else(|| res.graph_file.r.clone())
}

/// Perfect-reconstruction systems on the config's subset.
pub fn solve(cfg: &ExperimentConfig, res: &Resolved) -> CliResult<SolveOutcome> {
    let set = subset(cfg, res)?;
    let g = &res.graph;
    let r = known_r(res);
    let outcome = match cfg.scheme {
        Scheme::Cpvtc => {
            let c = class_c(cfg, res)?;
            let s = cpvtc::solve_perfect(g, &c, &set)?;
            let params = s.a.clone().zip(s.b.clone()).map(|(a, b)| ParamsFile {
                a: Some(a),
                b: Some(b),
                c: Some(c.clone()),
                r: r.clone(),
                ..ParamsFile::default()
            });
            SolveOutcome {
                feasible: s.is_feasible(),
                systems: vec![check("reconstruction", &s.result)],
                players: set,
                params,
            }
        }
        Scheme::Qpvtq | Scheme::Cpubc => {
            let (x, p) = if cfg.scheme == Scheme::Qpvtq {
                let s = qpvtq::solve_perfect_q(g, &set)?;
                (s.position, s.momentum)
            } else {
                (
                    cpubc::solve_perfect_pub(g, &set, QuadChoice::Position)?,
                    cpubc::solve_perfect_pub(g, &set, QuadChoice::Momentum)?,
                )
            };
            let feasible = x.is_feasible() && p.is_feasible();
            let params = feasible.then(|| ParamsFile {
                a: x.a.clone(),
                b: x.b.clone(),
                a_prime: p.a.clone(),
                b_prime: p.b.clone(),
                r: r.clone(),
                ..ParamsFile::default()
            });
            SolveOutcome {
                feasible,
                systems: vec![check("position", &x.result), check("momentum", &p.result)],
                players: set,
                params,
            }
        }
    };
    Ok(outcome)
}

fn has_coefficients(scheme: Scheme, p: &ParamsFile) -> bool {
    let base = p.a.is_some() && p.b.is_some();
    match scheme {
        Scheme::Cpvtc => base,
        _ => base && p.a_prime.is_some() && p.b_prime.is_some(),
    }
}

/// Squeezing settings to run: the ladder, else the known vector.
fn squeezing_points(
    cfg: &ExperimentConfig,
    res: &Resolved,
    p: &ParamsFile,
) -> CliResult<Vec<(Option<f64>, Vec<f64>)>> {
    let m = res.graph.n_modes();
    if !cfg.ladder.is_empty() {
        return Ok(cfg.ladder.iter().map(|&r| (Some(r), vec![r; m])).collect());
    }
    let r = config::squeezing(p, &res.graph_file)?;
    let uniform = r.first().copied().filter(|r0| r.iter().all(|x| x == r0));
    Ok(vec![(uniform, r)])
}

fn sample_table(cols: &[&str], ladder: bool) -> Table {
    let mut h = Vec::with_capacity(cols.len() + 1);
    if ladder {
        h.push("r");
    }
    h.extend_from_slice(cols);
    Table::new(&h)
}

fn push_row(t: &mut Table, ladder: bool, r: Option<f64>, row: Vec<String>) {
    let mut full = Vec::with_capacity(row.len() + 1);
    if ladder {
        full.push(opt(r));
    }
    full.extend(row);
    t.rows.push(full);
}

fn simulate_cpvtc(
    cfg: &ExperimentConfig,
    res: &Resolved,
    p: &ParamsFile,
    seed: u64,
    shots: usize,
    samples: &mut Table,
) -> CliResult<Vec<LadderPoint>> {
    let gamma = cfg.gamma.unwrap_or(0.0);
    let ladder = !cfg.ladder.is_empty();
    let mut points = Vec::new();
    for (r0, r) in squeezing_points(cfg, res, p)? {
        let params: CpvtcParams = p.cpvtc(r)?;
        let stats = cpvtc::error_stats(&res.graph, &params)?;
        let errors = CpvtcRun::new(&res.graph, &params)?.simulate_errors(gamma, shots, seed)?;
        for (i, e) in errors.iter().enumerate() {
            push_row(samples, ladder, r0, vec![i.to_string(), num(*e)]);
        }
        let cmp = compare("error", stats.bias_slope * gamma, stats.variance, &errors);
        points.push(LadderPoint {
            r: r0,
            pass: cmp.pass,
            comparisons: vec![cmp],
            identity_residual: None,
            fidelity: None,
            keep_rate: None,
        });
    }
    Ok(points)
}

fn simulate_qpvtq(
    cfg: &ExperimentConfig,
    res: &Resolved,
    p: &ParamsFile,
    seed: u64,
    shots: usize,
    samples: &mut Table,
) -> CliResult<Vec<LadderPoint>> {
    let secret = match cfg.secret {
        Some(s) => s,
        None => SecretQumode::new(1.0, 1.0)?,
    };
    let ladder = !cfg.ladder.is_empty();
    let mut points = Vec::new();
    for (r0, r) in squeezing_points(cfg, res, p)? {
        let params: QuadParams = p.quad(r)?;
        let forms = qpvtq::error_forms(&res.graph, &params)?;
        let shots = QpvtqRun::new(&res.graph, &params, &secret)?.simulate(shots, seed)?;
        let mut residual: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for (i, s) in shots.iter().enumerate() {
            residual = residual
                .max((s.protocol_x - s.formula_x).abs())
                .max((s.protocol_p - s.formula_p).abs());
            scale = scale.max(s.protocol_x.abs()).max(s.protocol_p.abs());
            push_row(
                samples,
                ladder,
                r0,
                vec![
                    i.to_string(),
                    num(s.protocol_x),
                    num(s.protocol_p),
                    num(s.formula_x),
                    num(s.formula_p),
                ],
            );
        }
        let ex: Vec<f64> = shots.iter().map(|s| s.protocol_x).collect();
        let ep: Vec<f64> = shots.iter().map(|s| s.protocol_p).collect();
        let comparisons = vec![
            compare("error_x", 0.0, forms.v1, &ex),
            compare("error_p", 0.0, forms.v2, &ep),
        ];
        let identity_ok = residual <= IDENTITY_RTOL * scale;
        points.push(LadderPoint {
            r: r0,
            pass: identity_ok && comparisons.iter().all(|c| c.pass),
            comparisons,
            identity_residual: Some(residual),
            fidelity: Some(qpvtq::fidelity(&secret, forms.v1, forms.v2)?),
            keep_rate: None,
        });
    }
    Ok(points)
}

pub const KEY_COLUMNS: [&str; 7] = [
    "round",
    "dealer_choice",
    "players_choice",
    "kept",
    "dealer_key",
    "players_estimate",
    "error",
];

fn simulate_cpubc(
    cfg: &ExperimentConfig,
    res: &Resolved,
    p: &ParamsFile,
    seed: u64,
    rounds: usize,
    samples: &mut Table,
) -> CliResult<Vec<LadderPoint>> {
    let ladder = !cfg.ladder.is_empty();
    let mut points = Vec::new();
    for (r0, r) in squeezing_points(cfg, res, p)? {
        let params = p.quad(r)?;
        let (vx, vp) = cpubc::error_variances(&res.graph, &params)?;
        let log = CpubcRun::new(&res.graph, &params)?.simulate(rounds, seed)?;
        for s in &log {
            push_row(
                samples,
                ladder,
                r0,
                vec![
                    s.round.to_string(),
                    s.dealer_choice.as_str().into(),
                    s.players_choice.as_str().into(),
                    s.kept.to_string(),
                    num(s.dealer_key),
                    num(s.players_estimate),
                    num(s.error()),
                ],
            );
        }
        let kept = cpubc::sift(&log);
        let errs = |q: QuadChoice| -> Vec<f64> {
            kept.iter()
                .filter(|s| s.dealer_choice == q)
                .map(|s| s.error())
                .collect()
        };
        let flags: Vec<f64> = log.iter().map(|s| if s.kept { 1.0 } else { 0.0 }).collect();
        let mut comparisons = vec![compare("kept", 0.5, 0.25, &flags)];
        for (name, q, v) in [
            ("error_x", QuadChoice::Position, vx),
            ("error_p", QuadChoice::Momentum, vp),
        ] {
            let e = errs(q);
            if e.len() >= 2 {
                comparisons.push(compare(name, 0.0, v, &e));
            }
        }
        points.push(LadderPoint {
            r: r0,
            pass: comparisons.iter().all(|c| c.pass),
            comparisons,
            identity_residual: None,
            fidelity: None,
            keep_rate: Some(kept.len() as f64 / log.len() as f64),
        });
    }
    Ok(points)
}

/// Run without touching the filesystem beyond reading inputs.
pub fn execute(cfg: &ExperimentConfig, base: &Path) -> CliResult<RunOutput> {
    let res = cfg.resolve(base)?;
    let mut report = RunReport {
        id: cfg.id.clone(),
        scheme: cfg.scheme,
        mode: cfg.mode,
        status: Status::Infeasible,
        seed: cfg.seed,
        shots: None,
        points: Vec::new(),
        solve: None,
        error: None,
    };
    if cfg.mode == Mode::Solve {
        let s = solve(cfg, &res)?;
        report.status = if s.feasible {
            Status::Feasible
        } else {
            Status::Infeasible
        };
        report.solve = Some(s);
        return Ok(RunOutput {
            report,
            samples: None,
        });
    }

    let seed = cfg
        .seed
        .ok_or_else(|| CliError::schema("simulate needs a seed"))?;
    let shots = cfg.shots.unwrap_or(DEFAULT_SHOTS);
    report.shots = Some(shots);
    let given = res.params.clone().unwrap_or_default();
    let params = if has_coefficients(cfg.scheme, &given) {
        given
    } else {
        let s = solve(cfg, &res)?;
        let Some(solved) = s.params.clone() else {
            report.solve = Some(s);
            return Ok(RunOutput {
                report,
                samples: None,
            });
        };
        report.solve = Some(s);
        ParamsFile {
            r: given.r.clone().or(solved.r.clone()),
            ..solved
        }
    };

    let ladder = !cfg.ladder.is_empty();
    let mut samples;
    report.points = match cfg.scheme {
        Scheme::Cpvtc => {
            samples = sample_table(&["shot", "error"], ladder);
            let c = params.c.clone().or_else(|| res.design_c.clone());
            let params = ParamsFile {
                c: Some(c.ok_or_else(|| {
                    CliError::schema(format!("config {}: cpvtc needs `c`", cfg.id))
                })?),
                ..params.clone()
            };
            simulate_cpvtc(cfg, &res, &params, seed, shots, &mut samples)?
        }
        Scheme::Qpvtq => {
            samples = sample_table(
                &["shot", "protocol_x", "protocol_p", "formula_x", "formula_p"],
                ladder,
            );
            simulate_qpvtq(cfg, &res, &params, seed, shots, &mut samples)?
        }
        Scheme::Cpubc => {
            samples = sample_table(&KEY_COLUMNS, ladder);
            simulate_cpubc(cfg, &res, &params, seed, shots, &mut samples)?
        }
    };
    report.status = if report.points.iter().all(|p| p.pass) {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(RunOutput {
        report,
        samples: Some(samples),
    })
}

/// Execute, write the configured outputs and log the runtime to stderr.
/// A failed run still leaves a report with `"status": "error"`.
pub fn run_config(cfg: &ExperimentConfig, base: &Path) -> CliResult<RunOutput> {
    let start = Instant::now();
    let result = execute(cfg, base);
    eprintln!("run {}: {:.3} s", cfg.id, start.elapsed().as_secs_f64());
    let report_path = cfg.outputs.report.as_ref().map(|p| base.join(p));
    match result {
        Ok(out) => {
            if let Some(p) = &report_path {
                crate::report::write_bytes(Some(p), &crate::report::to_json(&out.report)?)?;
            }
            if let (Some(p), Some(t)) = (&cfg.outputs.samples, &out.samples) {
                crate::report::write_bytes(Some(&base.join(p)), &t.to_csv()?)?;
            }
            Ok(out)
        }
        Err(e) => {
            if let Some(p) = &report_path {
                let failed = RunReport::failed(&cfg.id, cfg.scheme, cfg.mode, &e);
                crate::report::write_bytes(Some(p), &crate::report::to_json(&failed)?)?;
            }
            Err(e)
        }
    }
}

/// Exit code for a completed run: 1 when a simulated comparison fails.
pub fn exit_code(report: &RunReport) -> i32 {
    match report.status {
        Status::Fail => 1,
        Status::Error => 2,
        _ => 0,
    }
}
