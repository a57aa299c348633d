//! Argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cvqss_core::cpubc::{self, QuadChoice};
use cvqss_core::cpvtc;
use cvqss_core::players::subsets_of_size;
use cvqss_core::qpvtq::{self, SecretQumode};
use cvqss_core::threshold::{
    self, DesignFile, DesignOptions, Scheme, Strategy, DEFAULT_MAX_ATTEMPTS,
};
use cvqss_core::PlayerSet;
use serde::Serialize;

use crate::config::{self, read_json, ExperimentConfig, Mode, Outputs, Source, SweepFile};
use crate::error::{CliError, CliResult};
use crate::report::{emit, write_bytes, Format, RunReport};
use crate::run::{exit_code, run_config};
use crate::sweep::sweep;

#[derive(Debug, Parser)]
#[command(
    name = "cvqss",
    version,
    about = "Continuous-variable graph-state secret sharing simulator"
)]
pub struct Cli {
    /// RNG seed (required by every simulate command).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo shots or rounds.
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format; inferred from the --out extension when absent.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classical secret, private dealer channel, classical player channel.
    #[command(subcommand)]
    Cpvtc(CpvtcCmd),
    /// Quantum secret, private dealer channel, quantum player channel.
    #[command(subcommand)]
    Qpvtq(QpvtqCmd),
    /// Classical key over public dealer channel, classical player channel.
    #[command(subcommand)]
    Cpubc(CpubcCmd),
    /// Design and verify (k, n) threshold graphs.
    #[command(subcommand)]
    Threshold(ThresholdCmd),
    /// Run one experiment config file.
    Run { config: PathBuf },
    /// Run a list of experiment configs and merge their rows.
    Sweep { configs: PathBuf },
}

/// Graph and coefficient inputs shared by the protocol subcommands.
#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Graph file `{"n", "edges": [[i, j, g], …], "r"?}` (1-based).
    #[arg(long, conflicts_with = "design")]
    pub graph: Option<PathBuf>,
    /// Design file from `threshold design`.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Coefficients `{"a", "b", "c", "a_prime", "b_prime", "r"}`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Player subset, 1-based, e.g. `1,3,4`.
    #[arg(long)]
    pub subset: Option<String>,
    /// Uniform squeezing values to step through, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Vec<f64>,
    /// Per-shot CSV output.
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CpvtcCmd {
    /// Closed-form bias slope and error variance.
    Stats(Inputs),
    /// Per-mode squeezing that minimizes the error variance.
    Optimize(Inputs),
    /// Perfect-reconstruction coefficients for a subset.
    Solve(Inputs),
    /// Monte Carlo error against the closed form.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        /// Secret value.
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum QpvtqCmd {
    /// Error variances and reconstruction fidelity.
    Fidelity {
        #[command(flatten)]
        inputs: Inputs,
        /// Secret qumode, e.g. `{"var_x": 1, "var_p": 1}`.
        #[arg(long)]
        secret: Option<String>,
    },
    Solve(Inputs),
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        secret: Option<String>,
    },
    /// Exclusivity between a group and the other players.
    Exclusivity(Inputs),
}

#[derive(Debug, Subcommand)]
pub enum CpubcCmd {
    /// Key rounds with sifting.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        /// Number of rounds (overrides --shots).
        #[arg(long)]
        rounds: Option<usize>,
    },
    Solve {
        #[command(flatten)]
        inputs: Inputs,
        /// Solve only one quadrature system.
        #[arg(long)]
        quad: Option<String>,
    },
    /// Compare feasibility with the quantum scheme on the same graph.
    Duality(Inputs),
}

#[derive(Debug, Subcommand)]
pub enum ThresholdCmd {
    /// Generate and certify a (k, n) design.
    Design {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "structured")]
        strategy: Strategy,
        /// Skip the noise-gain refinement.
        #[arg(long)]
        no_refine: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
        max_attempts: usize,
    },
    /// Re-verify a design file.
    Verify { design: PathBuf },
}

struct Global {
    seed: Option<u64>,
    shots: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

impl Global {
    fn format(&self, default: Format) -> Format {
        Format::resolve(self.format, self.out.as_deref(), default)
    }

    fn emit<T: Serialize>(&self, value: &T) -> CliResult<()> {
        emit(value, None, self.format(Format::Json), self.out.as_deref())
    }

    fn emit_run(&self, report: &RunReport) -> CliResult<()> {
        let table = RunReport::table(std::slice::from_ref(report));
        emit(
            report,
            Some(table),
            self.format(Format::Json),
            self.out.as_deref(),
        )
    }
}

fn experiment(
    scheme: Scheme,
    mode: Mode,
    inputs: &Inputs,
    g: &Global,
) -> CliResult<ExperimentConfig> {
    let subset = inputs
        .subset
        .as_deref()
        .map(PlayerSet::parse_one_based)
        .transpose()?;
    Ok(ExperimentConfig {
        id: "cli".into(),
        scheme,
        mode,
        graph: inputs.graph.clone().map(Source::Path),
        design: inputs.design.clone().map(Source::Path),
        params: inputs.params.clone().map(Source::Path),
        subset,
        secret: None,
        gamma: None,
        shots: g.shots,
        seed: g.seed,
        ladder: inputs.ladder.clone(),
        outputs: Outputs {
            report: None,
            samples: inputs.samples.clone(),
        },
    })
}

/// Run a config built from flags and emit its report.
fn run_flags(cfg: ExperimentConfig, g: &Global) -> CliResult<i32> {
    let out = run_config(&cfg, Path::new(""))?;
    g.emit_run(&out.report)?;
    Ok(exit_code(&out.report))
}

fn need_params(cfg: &ExperimentConfig, res: &config::Resolved) -> CliResult<config::ParamsFile> {
    res.params
        .clone()
        .ok_or_else(|| CliError::schema(format!("{} needs --params", cfg.scheme)))
}

fn parse_secret(s: &Option<String>) -> CliResult<Option<SecretQumode>> {
    s.as_deref().map(config::parse_secret).transpose()
}

#[derive(Serialize)]
struct Stats {
    bias_slope: f64,
    variance: f64,
    optimum: cpvtc::SqueezingOptimum,
}

fn cpvtc_cmd(cmd: CpvtcCmd, g: &Global) -> CliResult<i32> {
    let base = Path::new("");
    match cmd {
        CpvtcCmd::Stats(inputs) => {
            let cfg = experiment(Scheme::Cpvtc, Mode::Solve, &inputs, g)?;
            let res = cfg.resolve(base)?;
            let p = need_params(&cfg, &res)?;
            let params = p.cpvtc(config::squeezing(&p, &res.graph_file)?)?;
            let s = cpvtc::error_stats(&res.graph, &params)?;
            g.emit(&Stats {
                bias_slope: s.bias_slope,
                variance: s.variance,
                optimum: cpvtc::optimal_squeezing(&res.graph, &params.a, &params.b)?,
            })?;
            Ok(0)
        }
        CpvtcCmd::Optimize(inputs) => {
            let cfg = experiment(Scheme::Cpvtc, Mode::Solve, &inputs, g)?;
            let res = cfg.resolve(base)?;
            let p = need_params(&cfg, &res)?;
            let (a, b) = (
                p.a.clone()
                    .ok_or_else(|| CliError::schema("params: missing field `a`"))?,
                p.b.clone()
                    .ok_or_else(|| CliError::schema("params: missing field `b`"))?,
            );
            g.emit(&cpvtc::optimal_squeezing(&res.graph, &a, &b)?)?;
            Ok(0)
        }
        CpvtcCmd::Solve(inputs) => {
            run_flags(experiment(Scheme::Cpvtc, Mode::Solve, &inputs, g)?, g)
        }
        CpvtcCmd::Simulate { inputs, gamma } => {
            let mut cfg = experiment(Scheme::Cpvtc, Mode::Simulate, &inputs, g)?;
            cfg.gamma = gamma;
            run_flags(cfg, g)
        }
    }
}

fn all_subsets(universe: &[usize]) -> Vec<PlayerSet> {
    (1..=universe.len())
        .flat_map(|k| subsets_of_size(universe, k))
        .collect()
}

fn player_modes(res: &config::Resolved) -> Vec<usize> {
    res.players
        .clone()
        .unwrap_or_else(|| (0..res.graph.n_modes().saturating_sub(1)).collect())
}

fn qpvtq_cmd(cmd: QpvtqCmd, g: &Global) -> CliResult<i32> {
    let base = Path::new("");
    match cmd {
        QpvtqCmd::Fidelity { inputs, secret } => {
            let cfg = experiment(Scheme::Qpvtq, Mode::Solve, &inputs, g)?;
            let res = cfg.resolve(base)?;
            let p = need_params(&cfg, &res)?;
            let params = p.quad(config::squeezing(&p, &res.graph_file)?)?;
            let secret = match parse_secret(&secret)? {
                Some(s) => s,
                None => SecretQumode::new(1.0, 1.0)?,
            };
            let forms = qpvtq::error_forms(&res.graph, &params)?;
            g.emit(&qpvtq::fidelity(&secret, forms.v1, forms.v2)?)?;
            Ok(0)
        }
        QpvtqCmd::Solve(inputs) => {
            run_flags(experiment(Scheme::Qpvtq, Mode::Solve, &inputs, g)?, g)
        }
        QpvtqCmd::Simulate { inputs, secret } => {
            let mut cfg = experiment(Scheme::Qpvtq, Mode::Simulate, &inputs, g)?;
            cfg.secret = parse_secret(&secret)?;
            run_flags(cfg, g)
        }
        QpvtqCmd::Exclusivity(inputs) => {
            let cfg = experiment(Scheme::Qpvtq, Mode::Solve, &inputs, g)?;
            let res = cfg.resolve(base)?;
            let universe = player_modes(&res);
            let groups = match &cfg.subset {
                Some(s) => vec![s.clone()],
                None => all_subsets(&universe),
            };
            let reports = groups
                .iter()
                .map(|s| qpvtq::exclusivity_check_within(&res.graph, s, &universe))
                .collect::<cvqss_core::Result<Vec<_>>>()?;
            g.emit(&reports)?;
            Ok(if reports.iter().all(|r| r.holds) {
                0
            } else {
                1
            })
        }
    }
}

fn cpubc_cmd(cmd: CpubcCmd, g: &Global) -> CliResult<i32> {
    let base = Path::new("");
    match cmd {
        CpubcCmd::Simulate { inputs, rounds } => {
            let mut cfg = experiment(Scheme::Cpubc, Mode::Simulate, &inputs, g)?;
            cfg.shots = rounds.or(cfg.shots);
            run_flags(cfg, g)
        }
        CpubcCmd::Solve { inputs, quad: None } => {
            run_flags(experiment(Scheme::Cpubc, Mode::Solve, &inputs, g)?, g)
        }
        CpubcCmd::Solve {
            inputs,
            quad: Some(q),
        } => {
            let quad: QuadChoice = q.parse()?;
            let cfg = experiment(Scheme::Cpubc, Mode::Solve, &inputs, g)?;
            let res = cfg.resolve(base)?;
            let set = cfg
                .subset
                .clone()
                .unwrap_or_else(|| PlayerSet::new(player_modes(&res)));
            g.emit(&cpubc::solve_perfect_pub(&res.graph, &set, quad)?)?;
            Ok(0)
        }
        CpubcCmd::Duality(inputs) => {
            // Either quantum-layout design works: duality compares the two.
            let scheme = match &inputs.design {
                Some(p) => read_json::<DesignFile>(p)?.scheme,
                None => Scheme::Cpubc,
            };
            if scheme == Scheme::Cpvtc {
                return Err(CliError::schema("duality needs a qpvtq or cpubc design"));
            }
            let cfg = experiment(scheme, Mode::Solve, &inputs, g)?;
            let res = cfg.resolve(base)?;
            let groups = match &cfg.subset {
                Some(s) => vec![s.clone()],
                None => all_subsets(&player_modes(&res)),
            };
            let reports = groups
                .iter()
                .map(|s| cpubc::duality_check(&res.graph, s))
                .collect::<cvqss_core::Result<Vec<_>>>()?;
            g.emit(&reports)?;
            Ok(if reports.iter().all(|r| r.holds) {
                0
            } else {
                1
            })
        }
    }
}

fn threshold_cmd(cmd: ThresholdCmd, g: &Global) -> CliResult<i32> {
    match cmd {
        ThresholdCmd::Design {
            scheme,
            k,
            n,
            strategy,
            no_refine,
            max_attempts,
        } => {
            let options = DesignOptions {
                max_attempts,
                refine: !no_refine,
            };
            let seed = g.seed.unwrap_or(0);
            let (d, report) = threshold::design_with(scheme, k, n, strategy, seed, &options)?;
            if let Some(gain) = report.max_noise_gain {
                eprintln!("certified ({k}, {n}) {scheme} design, worst noise gain {gain:.3}");
            }
            g.emit(&DesignFile::new(&d, Some(report)))?;
            Ok(0)
        }
        ThresholdCmd::Verify { design } => {
            let file: DesignFile = read_json(&design)?;
            let report = threshold::verify(&file.to_design()?)?;
            g.emit(&report)?;
            match report.first_failure() {
                Some(msg) if !report.pass => Err(CliError::Verification(msg)),
                _ => Ok(if report.pass { 0 } else { 1 }),
            }
        }
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Command-line `--seed` and `--shots` override config values.
fn apply_overrides(cfg: &mut ExperimentConfig, g: &Global) {
    cfg.seed = g.seed.or(cfg.seed);
    cfg.shots = g.shots.or(cfg.shots);
}

pub fn dispatch(cli: Cli) -> CliResult<i32> {
    let g = Global {
        seed: cli.seed,
        shots: cli.shots,
        out: cli.out,
        format: cli.format,
    };
    match cli.command {
        Command::Cpvtc(c) => cpvtc_cmd(c, &g),
        Command::Qpvtq(c) => qpvtq_cmd(c, &g),
        Command::Cpubc(c) => cpubc_cmd(c, &g),
        Command::Threshold(c) => threshold_cmd(c, &g),
        Command::Run { config } => {
            let mut cfg: ExperimentConfig = read_json(&config)?;
            apply_overrides(&mut cfg, &g);
            let out = run_config(&cfg, &config_dir(&config))?;
            if g.out.is_some() || cfg.outputs.report.is_none() {
                g.emit_run(&out.report)?;
            }
            Ok(exit_code(&out.report))
        }
        Command::Sweep { configs } => {
            let file: SweepFile = read_json(&configs)?;
            let mut list = file.into_configs();
            for c in &mut list {
                apply_overrides(c, &g);
            }
            let outcome = sweep(&list, &config_dir(&configs))?;
            let table = RunReport::table(&outcome.reports);
            match g.format(Format::Csv) {
                Format::Csv => write_bytes(g.out.as_deref(), &table.to_csv()?)?,
                Format::Json => emit(&outcome.reports, None, Format::Json, g.out.as_deref())?,
            }
            Ok(outcome.exit)
        }
    }
}
