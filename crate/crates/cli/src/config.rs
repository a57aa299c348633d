//! Input files: graphs, parameters, secrets, designs and experiment configs.

use std::fs;
use std::path::{Path, PathBuf};

use cvqss_core::cpvtc::CpvtcParams;
use cvqss_core::qpvtq::{QuadParams, SecretQumode};
use cvqss_core::threshold::{DesignFile, Scheme};
use cvqss_core::{GraphFile, GraphSpec, PlayerSet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))
}

/// Either a path to a JSON file or the object itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    pub fn load(&self, base: &Path) -> CliResult<T> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => read_json(&base.join(p)),
        }
    }
}

/// Union of the coefficient fields used by the three schemes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_prime: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_prime: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

fn need<'a>(v: &'a Option<Vec<f64>>, name: &str) -> CliResult<&'a Vec<f64>> {
    v.as_ref()
        .ok_or_else(|| CliError::schema(format!("params: missing field `{name}`")))
}

/// Squeezing from the params, else from the graph file.
pub fn squeezing(params: &ParamsFile, graph: &GraphFile) -> CliResult<Vec<f64>> {
    params
        .r
        .clone()
        .or_else(|| graph.r.clone())
        .ok_or_else(|| CliError::schema("no squeezing vector `r` in params or graph"))
}

impl ParamsFile {
    pub fn c(&self) -> CliResult<&Vec<f64>> {
        need(&self.c, "c")
    }

    pub fn cpvtc(&self, r: Vec<f64>) -> CliResult<CpvtcParams> {
        Ok(CpvtcParams {
            a: need(&self.a, "a")?.clone(),
            b: need(&self.b, "b")?.clone(),
            c: need(&self.c, "c")?.clone(),
            r,
        })
    }

    pub fn quad(&self, r: Vec<f64>) -> CliResult<QuadParams> {
        Ok(QuadParams {
            a: need(&self.a, "a")?.clone(),
            b: need(&self.b, "b")?.clone(),
            a_prime: need(&self.a_prime, "a_prime")?.clone(),
            b_prime: need(&self.b_prime, "b_prime")?.clone(),
            r,
        })
    }

    pub fn from_cpvtc(p: &CpvtcParams) -> Self {
        Self {
            a: Some(p.a.clone()),
            b: Some(p.b.clone()),
            c: Some(p.c.clone()),
            r: Some(p.r.clone()),
            ..Self::default()
        }
    }

    pub fn from_quad(p: &QuadParams) -> Self {
        Self {
            a: Some(p.a.clone()),
            b: Some(p.b.clone()),
            a_prime: Some(p.a_prime.clone()),
            b_prime: Some(p.b_prime.clone()),
            r: Some(p.r.clone()),
            ..Self::default()
        }
    }
}

pub fn parse_secret(s: &str) -> CliResult<SecretQumode> {
    let secret: SecretQumode =
        serde_json::from_str(s).map_err(|e| CliError::schema(format!("secret: {e}")))?;
    secret.validate()?;
    Ok(secret)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Simulate,
    Solve,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<PathBuf>,
}

/// One experiment. Coefficients come from `params`, or are solved on
/// `subset` when `params` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub scheme: Scheme,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<Source<GraphFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Source<DesignFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Source<ParamsFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<PlayerSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret: Option<SecretQumode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Uniform squeezing values to run in turn, overriding `r`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ladder: Vec<f64>,
    #[serde(default)]
    pub outputs: Outputs,
}

pub const DEFAULT_SHOTS: usize = 10_000;

/// Everything a run needs, resolved from files.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub graph_file: GraphFile,
    pub graph: GraphSpec,
    pub params: Option<ParamsFile>,
    /// `c` carried by a classical design.
    pub design_c: Option<Vec<f64>>,
    pub players: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.id.trim().is_empty() {
            return Err(CliError::schema("config id must be non-empty"));
        }
        if self.graph.is_some() == self.design.is_some() {
            return Err(CliError::schema(format!(
                "config {}: give exactly one of `graph` or `design`",
                self.id
            )));
        }
        if self.mode == Mode::Simulate {
            if self.seed.is_none() {
                return Err(CliError::schema(format!(
                    "config {}: simulate needs a seed",
                    self.id
                )));
            }
            if self.shots == Some(0) {
                return Err(CliError::schema(format!(
                    "config {}: shots must be positive",
                    self.id
                )));
            }
            if self.params.is_none() && self.subset.is_none() {
                return Err(CliError::schema(format!(
                    "config {}: simulate needs `params` or a `subset` to solve on",
                    self.id
                )));
            }
        }
        if self.ladder.iter().any(|r| !r.is_finite()) {
            return Err(CliError::schema(format!(
                "config {}: non-finite ladder value",
                self.id
            )));
        }
        if self.secret.is_some() && self.scheme != Scheme::Qpvtq {
            return Err(CliError::schema(format!(
                "config {}: `secret` only applies to qpvtq",
                self.id
            )));
        }
        Ok(())
    }

    pub fn resolve(&self, base: &Path) -> CliResult<Resolved> {
        self.validate()?;
        let (graph_file, design_c, players) = match (&self.graph, &self.design) {
            (Some(g), _) => (g.load(base)?, None, None),
            (_, Some(d)) => {
                let d = d.load(base)?;
                if d.scheme != self.scheme {
                    return Err(CliError::schema(format!(
                        "config {}: design is for {}, config is for {}",
                        self.id, d.scheme, self.scheme
                    )));
                }
                (
                    d.graph.clone(),
                    d.c.clone(),
                    Some(d.players.modes().to_vec()),
                )
            }
            _ => unreachable!("validated"),
        };
        let graph = graph_file.to_spec()?;
        let params = self.params.as_ref().map(|p| p.load(base)).transpose()?;
        Ok(Resolved {
            graph_file,
            graph,
            params,
            design_c,
            players,
        })
    }
}

/// A sweep file is either a bare list of configs or `{"configs": [...]}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SweepFile {
    List(Vec<ExperimentConfig>),
    Wrapped { configs: Vec<ExperimentConfig> },
}

impl SweepFile {
    pub fn into_configs(self) -> Vec<ExperimentConfig> {
        match self {
            SweepFile::List(v) | SweepFile::Wrapped { configs: v } => v,
        }
    }
}
