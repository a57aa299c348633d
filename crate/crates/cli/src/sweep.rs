//! Running many configs and merging their rows.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::report::RunReport;
use crate::run::{exit_code, run_config};

pub struct SweepOutcome {
    /// In config order; failed children carry `"status": "error"`.
    pub reports: Vec<RunReport>,
    /// Largest child exit code.
    pub exit: i32,
}

pub fn check_ids(configs: &[ExperimentConfig]) -> CliResult<()> {
    if configs.is_empty() {
        return Err(CliError::schema("sweep has no configs"));
    }
    let mut seen = HashSet::new();
    for c in configs {
        if !seen.insert(c.id.as_str()) {
            return Err(CliError::schema(format!("duplicate config id {:?}", c.id)));
        }
    }
    Ok(())
}

pub fn sweep(configs: &[ExperimentConfig], base: &Path) -> CliResult<SweepOutcome> {
    check_ids(configs)?;
    let results: Vec<(RunReport, i32)> = configs
        .par_iter()
        .map(|cfg| match run_config(cfg, base) {
            Ok(out) => {
                let code = exit_code(&out.report);
                (out.report, code)
            }
            Err(e) => {
                eprintln!("run {}: {e}", cfg.id);
                (
                    RunReport::failed(&cfg.id, cfg.scheme, cfg.mode, &e),
                    e.exit_code(),
                )
            }
        })
        .collect();
    let exit = results.iter().map(|(_, c)| *c).max().unwrap_or(0);
    Ok(SweepOutcome {
        reports: results.into_iter().map(|(r, _)| r).collect(),
        exit,
    })
}
