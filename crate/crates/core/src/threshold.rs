//! (k, n) threshold designs: construction, certification and restriction.
//!
//! A design is first built for `(k, 2k−1)` and then restricted by handing
//! out only `n` of the player modes. Withheld modes stay in the graph, so
//! every subset system keeps the same columns as in the base design.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning;
use crate::cpubc::{solve_perfect_pub, QuadChoice};
use crate::cpvtc::solve_perfect;
use crate::error::{Error, Result};
use crate::feasibility::{numerical_rank, FeasibilityResult, RankCertificate};
use crate::graph_state::{GraphFile, GraphSpec};
use crate::players::{subsets_of_size, PlayerSet};
use crate::qpvtq::{exclusivity_check_within, solve_perfect_q};

pub const DEFAULT_MAX_ATTEMPTS: usize = 100;
pub const WEIGHT_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub max_attempts: usize,
    /// Lower the finite-squeezing noise gain after certification.
    pub refine: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Cpvtc,
    Qpvtq,
    Cpubc,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Cpvtc, Scheme::Qpvtq, Scheme::Cpubc];

    /// Whether the graph carries an extra dealer mode after the players.
    pub fn has_dealer_mode(&self) -> bool {
        !matches!(self, Scheme::Cpvtc)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Cpvtc => "cpvtc",
            Scheme::Qpvtq => "qpvtq",
            Scheme::Cpubc => "cpubc",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cpvtc" => Ok(Scheme::Cpvtc),
            "qpvtq" => Ok(Scheme::Qpvtq),
            "cpubc" => Ok(Scheme::Cpubc),
            other => Err(Error::InvalidParameter(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Structured,
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Strategy::Random),
            "structured" => Ok(Strategy::Structured),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy {other:?}"
            ))),
        }
    }
}

pub fn check_threshold(k: usize, n: usize) -> Result<()> {
    if k == 0 || 2 * k <= n || k > n {
        Err(Error::InvalidThreshold { k, n })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdDesign {
    pub scheme: Scheme,
    pub k: usize,
    pub n: usize,
    pub graph: GraphSpec,
    pub c: Option<Vec<f64>>,
    /// Distributed player modes (0-based); the rest are withheld.
    pub players: Vec<usize>,
}

impl ThresholdDesign {
    /// Modes that can be held by players, distributed or not.
    pub fn player_mode_count(&self) -> usize {
        if self.scheme.has_dealer_mode() {
            self.graph.n_modes() - 1
        } else {
            self.graph.n_modes()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_threshold(self.k, self.n)?;
        if self.players.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "distributed players",
                expected: self.n,
                found: self.players.len(),
            });
        }
        let limit = self.player_mode_count();
        let set = PlayerSet::new(self.players.clone());
        if set.len() != self.players.len() {
            return Err(Error::InvalidSubset("repeated player mode".into()));
        }
        set.check_within(limit)?;
        match (&self.c, self.scheme) {
            (Some(c), Scheme::Cpvtc) => {
                crate::error::check_len("displacement vector c", limit, c.len())
            }
            (None, Scheme::Cpvtc) => Err(Error::InvalidParameter(
                "a classical private design needs a displacement vector c".into(),
            )),
            (Some(_), _) => Err(Error::InvalidParameter(
                "only classical private designs carry a displacement vector".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemCheck {
    pub system: String,
    pub feasible: bool,
    pub certificate: RankCertificate,
}

impl SystemCheck {
    fn new(system: &str, r: &FeasibilityResult) -> Self {
        Self {
            system: system.into(),
            feasible: r.is_feasible(),
            certificate: r.certificate.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCheck {
    pub players: PlayerSet,
    /// Every system of the scheme is consistent on this subset.
    pub feasible: bool,
    pub systems: Vec<SystemCheck>,
    /// `[G_{J,K} c_J]` for the classical scheme, `G_{J,M∖J}` otherwise.
    pub block_rank: usize,
    pub block_shape: (usize, usize),
    /// Rank of `G_{J,N∖J}` over player modes only (dealer column dropped).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub player_block_rank: Option<usize>,
    /// Largest `e^{2r}·Var` over the systems at uniform squeezing `r`,
    /// using the solved coefficients; absent when infeasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusivitySummary {
    pub group: PlayerSet,
    pub complement: PlayerSet,
    pub group_feasible: bool,
    pub complement_position_feasible: bool,
    pub complement_momentum_feasible: bool,
    pub cross_case: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scheme: Scheme,
    pub k: usize,
    pub n: usize,
    pub threshold_subsets: Vec<SubsetCheck>,
    pub below_threshold_subsets: Vec<SubsetCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusivity: Vec<ExclusivitySummary>,
    pub all_threshold_feasible: bool,
    pub all_below_infeasible: bool,
    pub exclusivity_holds: bool,
    /// Worst noise gain over the threshold subsets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_noise_gain: Option<f64>,
    pub pass: bool,
}

impl VerificationReport {
    /// First violation, for error messages.
    pub fn first_failure(&self) -> Option<String> {
        if let Some(s) = self.threshold_subsets.iter().find(|s| !s.feasible) {
            return Some(format!(
                "subset {} of size {} is infeasible",
                s.players, self.k
            ));
        }
        if let Some(s) = self.below_threshold_subsets.iter().find(|s| s.feasible) {
            return Some(format!(
                "subset {} of size {} is feasible",
                s.players,
                self.k.saturating_sub(1)
            ));
        }
        self.exclusivity
            .iter()
            .find(|e| !e.holds)
            .map(|e| format!("exclusivity fails between {} and {}", e.group, e.complement))
    }
}

fn check_subset(design: &ThresholdDesign, set: &PlayerSet) -> Result<SubsetCheck> {
    let g = &design.graph;
    let m = g.n_modes();
    let rest: Vec<usize> = (0..m).filter(|&l| !set.contains(l)).collect();
    let sq = |b: &Option<Vec<f64>>| b.as_ref().map(|b| b.iter().map(|x| x * x).sum::<f64>());
    let (systems, gains) = match design.scheme {
        Scheme::Cpvtc => {
            let c = design.c.as_deref().unwrap_or(&[]);
            let s = solve_perfect(g, c, set)?;
            (
                vec![SystemCheck::new("reconstruction", &s.result)],
                vec![sq(&s.b)],
            )
        }
        Scheme::Qpvtq | Scheme::Cpubc => {
            let (x, p) = if design.scheme == Scheme::Qpvtq {
                let s = solve_perfect_q(g, set)?;
                (s.position, s.momentum)
            } else {
                (
                    solve_perfect_pub(g, set, QuadChoice::Position)?,
                    solve_perfect_pub(g, set, QuadChoice::Momentum)?,
                )
            };
            (
                vec![
                    SystemCheck::new("position", &x.result),
                    SystemCheck::new("momentum", &p.result),
                ],
                vec![sq(&x.b), sq(&p.b).map(|v| v + 1.0)],
            )
        }
    };
    let noise_gain = gains
        .into_iter()
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max));
    let mut block = g.submatrix(set.modes(), &rest);
    let player_block_rank = if design.scheme == Scheme::Cpvtc {
        let c = design.c.as_deref().unwrap_or(&[]);
        let cols = block.ncols();
        block = block.insert_column(cols, 0.0);
        for (i, &j) in set.modes().iter().enumerate() {
            block[(i, cols)] = c[j];
        }
        None
    } else {
        let players_only: Vec<usize> = rest.iter().copied().filter(|&l| l + 1 < m).collect();
        Some(numerical_rank(&g.submatrix(set.modes(), &players_only)))
    };
    Ok(SubsetCheck {
        players: set.clone(),
        feasible: systems.iter().all(|s| s.feasible),
        systems,
        block_rank: numerical_rank(&block),
        block_shape: block.shape(),
        player_block_rank,
        noise_gain,
    })
}

fn summarize(e: crate::qpvtq::ExclusivityReport) -> ExclusivitySummary {
    ExclusivitySummary {
        group_feasible: e.group_position.is_feasible() && e.group_momentum.is_feasible(),
        complement_position_feasible: e.complement_position.is_feasible(),
        complement_momentum_feasible: e.complement_momentum.is_feasible(),
        cross_case: e.cross_position_momentum || e.cross_momentum_position,
        holds: e.holds,
        group: e.group,
        complement: e.complement,
    }
}

/// Solve every subset of size `k` and `k−1` among the distributed players.
pub fn verify(design: &ThresholdDesign) -> Result<VerificationReport> {
    design.validate()?;
    let universe = {
        let mut p = design.players.clone();
        p.sort_unstable();
        p
    };
    let run = |size: usize| -> Result<Vec<SubsetCheck>> {
        subsets_of_size(&universe, size)
            .par_iter()
            .map(|s| check_subset(design, s))
            .collect()
    };
    let threshold_subsets = run(design.k)?;
    let below_threshold_subsets = run(design.k - 1)?;
    let exclusivity = if design.scheme == Scheme::Qpvtq {
        subsets_of_size(&universe, design.k)
            .par_iter()
            .map(|s| exclusivity_check_within(&design.graph, s, &universe).map(summarize))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let all_threshold_feasible = threshold_subsets.iter().all(|s| s.feasible);
    let all_below_infeasible = below_threshold_subsets.iter().all(|s| !s.feasible);
    let exclusivity_holds = exclusivity.iter().all(|e| e.holds);
    let max_noise_gain = threshold_subsets
        .iter()
        .map(|s| s.noise_gain)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max));
    Ok(VerificationReport {
        scheme: design.scheme,
        k: design.k,
        n: design.n,
        threshold_subsets,
        below_threshold_subsets,
        exclusivity,
        all_threshold_feasible,
        all_below_infeasible,
        exclusivity_holds,
        max_noise_gain,
        pass: all_threshold_feasible && all_below_infeasible,
    })
}

/// Symmetric Cauchy weights `G_ij = 1/(x_i + x_j)` on the interlaced
/// nodes `x_i = (−1)^i √(i + ½)`, with `c_j = 1/(x_j + x_{2k−1})`. The node
/// magnitudes are distinct, so no two nodes cancel and every square block
/// with disjoint row and column sets is a nonsingular Cauchy matrix; `c`
/// acts as one more column node.
fn structured_base(scheme: Scheme, k: usize) -> Result<(GraphSpec, Option<Vec<f64>>)> {
    let players = 2 * k - 1;
    let m = if scheme.has_dealer_mode() {
        players + 1
    } else {
        players
    };
    let node = |i: usize| {
        let s = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        s * (i as f64 + 0.5).sqrt()
    };
    let gains = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            0.0
        } else {
            1.0 / (node(i) + node(j))
        }
    });
    let c = (!scheme.has_dealer_mode()).then(|| {
        (0..players)
            .map(|j| 1.0 / (node(j) + node(players)))
            .collect()
    });
    Ok((GraphSpec::new(gains)?, c))
}

fn random_base<R: Rng>(
    scheme: Scheme,
    k: usize,
    rng: &mut R,
) -> Result<(GraphSpec, Option<Vec<f64>>)> {
    let players = 2 * k - 1;
    let m = if scheme.has_dealer_mode() {
        players + 1
    } else {
        players
    };
    let (lo, hi) = WEIGHT_RANGE;
    let mut gains = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let w = rng.random_range(lo..=hi);
            gains[(i, j)] = w;
            gains[(j, i)] = w;
        }
    }
    let c = (!scheme.has_dealer_mode())
        .then(|| (0..players).map(|_| rng.random_range(lo..=hi)).collect());
    Ok((GraphSpec::new(gains)?, c))
}

/// Certified `(k, 2k−1)` design before restriction.
pub fn design_base(
    scheme: Scheme,
    k: usize,
    strategy: Strategy,
    seed: u64,
    options: &DesignOptions,
) -> Result<(ThresholdDesign, VerificationReport)> {
    check_threshold(k, 2 * k - 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attempts = match strategy {
        Strategy::Structured => 1,
        Strategy::Random => options.max_attempts.max(1),
    };
    let mut last = None;
    for _ in 0..attempts {
        let (graph, c) = match strategy {
            Strategy::Structured => structured_base(scheme, k)?,
            Strategy::Random => random_base(scheme, k, &mut rng)?,
        };
        let d = ThresholdDesign {
            scheme,
            k,
            n: 2 * k - 1,
            graph,
            c,
            players: (0..2 * k - 1).collect(),
        };
        let report = verify(&d)?;
        if report.pass {
            return Ok(if options.refine {
                refined(d, report)?
            } else {
                (d, report)
            });
        }
        last = report.first_failure();
    }
    match strategy {
        Strategy::Random => Err(Error::AttemptsExhausted { attempts }),
        Strategy::Structured => Err(Error::VerificationFailed(last.unwrap_or_default())),
    }
}

/// Keep the refined weights only if they certify and do not raise the gain.
fn refined(
    d: ThresholdDesign,
    report: VerificationReport,
) -> Result<(ThresholdDesign, VerificationReport)> {
    let (graph, c) = conditioning::refine(d.scheme, d.k, &d.graph, d.c.as_deref(), WEIGHT_RANGE);
    let candidate = ThresholdDesign {
        graph,
        c,
        ..d.clone()
    };
    let new_report = verify(&candidate)?;
    let better = match (new_report.max_noise_gain, report.max_noise_gain) {
        (Some(a), Some(b)) => a <= b,
        _ => false,
    };
    Ok(if new_report.pass && better {
        (candidate, new_report)
    } else {
        (d, report)
    })
}

/// Certified `(k, n)` design: a `(k, 2k−1)` base restricted to `n` players.
pub fn design(
    scheme: Scheme,
    k: usize,
    n: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<(ThresholdDesign, VerificationReport)> {
    design_with(scheme, k, n, strategy, seed, &DesignOptions::default())
}

pub fn design_with(
    scheme: Scheme,
    k: usize,
    n: usize,
    strategy: Strategy,
    seed: u64,
    options: &DesignOptions,
) -> Result<(ThresholdDesign, VerificationReport)> {
    check_threshold(k, n)?;
    let (base, report) = design_base(scheme, k, strategy, seed, options)?;
    if n == base.n {
        return Ok((base, report));
    }
    restrict(&base, n)
}

/// Distribute only the first `n` of the design's player modes.
pub fn restrict(
    design: &ThresholdDesign,
    n: usize,
) -> Result<(ThresholdDesign, VerificationReport)> {
    if n < design.k || n > design.n {
        return Err(Error::InvalidThreshold { k: design.k, n });
    }
    let mut players = design.players.clone();
    players.sort_unstable();
    players.truncate(n);
    let d = ThresholdDesign {
        n,
        players,
        ..design.clone()
    };
    let report = verify(&d)?;
    if !report.pass {
        return Err(Error::VerificationFailed(
            report.first_failure().unwrap_or_default(),
        ));
    }
    Ok((d, report))
}

/// On-disk design: 1-based graph and player indices plus the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub scheme: Scheme,
    pub k: usize,
    pub n: usize,
    pub graph: GraphFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    pub players: PlayerSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<VerificationReport>,
}

impl DesignFile {
    pub fn new(design: &ThresholdDesign, report: Option<VerificationReport>) -> Self {
        Self {
            scheme: design.scheme,
            k: design.k,
            n: design.n,
            graph: GraphFile::from_spec(&design.graph, None),
            c: design.c.clone(),
            players: PlayerSet::new(design.players.clone()),
            report,
        }
    }

    pub fn to_design(&self) -> Result<ThresholdDesign> {
        let d = ThresholdDesign {
            scheme: self.scheme,
            k: self.k,
            n: self.n,
            graph: self.graph.to_spec()?,
            c: self.c.clone(),
            players: self.players.modes().to_vec(),
        };
        d.validate()?;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cpvtc_23(c: [f64; 3]) -> ThresholdDesign {
        ThresholdDesign {
            scheme: Scheme::Cpvtc,
            k: 2,
            n: 3,
            graph: GraphSpec::from_edges(3, &[(0, 1, 1.0), (0, 2, 2.0), (1, 2, 1.0)]).unwrap(),
            c: Some(c.to_vec()),
            players: vec![0, 1, 2],
        }
    }

    #[test]
    fn hand_design_passes() {
        let rep = verify(&cpvtc_23([1.0, 2.0, 3.0])).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.threshold_subsets.len(), 3);
        assert!(rep.threshold_subsets.iter().all(|s| s.block_rank == 2));
        assert_eq!(rep.below_threshold_subsets.len(), 3);
    }

    #[test]
    fn flat_displacement_fails_on_one_pair() {
        let rep = verify(&cpvtc_23([1.0, 1.0, 1.0])).unwrap();
        assert!(!rep.pass);
        let bad: Vec<_> = rep
            .threshold_subsets
            .iter()
            .filter(|s| !s.feasible)
            .map(|s| s.players.to_string())
            .collect();
        assert_eq!(bad, vec!["{1,3}"]);
    }

    #[test]
    fn rejects_non_threshold() {
        for (k, n) in [(1, 2), (2, 4), (0, 0), (4, 3)] {
            assert!(matches!(
                design(Scheme::Cpvtc, k, n, Strategy::Random, 0),
                Err(Error::InvalidThreshold { .. })
            ));
        }
    }

    #[test]
    fn designs_certify_for_all_schemes() {
        for scheme in Scheme::ALL {
            for strategy in [Strategy::Random, Strategy::Structured] {
                for (k, n) in [(2, 3), (2, 2), (3, 5), (3, 4), (3, 3)] {
                    let (d, rep) = design(scheme, k, n, strategy, 7).unwrap();
                    assert!(rep.pass, "{scheme} {strategy:?} ({k},{n})");
                    assert_eq!(d.players.len(), n);
                    assert!(rep.exclusivity_holds);
                }
            }
        }
    }

    #[test]
    fn restrict_to_full_size_is_identity() {
        let (base, _) = design(Scheme::Qpvtq, 2, 3, Strategy::Random, 1).unwrap();
        let (same, _) = restrict(&base, 3).unwrap();
        assert_eq!(same, base);
        assert!(restrict(&base, 1).is_err());
        let (pair, rep) = restrict(&base, 2).unwrap();
        assert_eq!(rep.threshold_subsets.len(), 1);
        assert!(rep.threshold_subsets[0].feasible);
        assert_eq!(pair.graph, base.graph);
    }

    #[test]
    fn deleting_modes_breaks_threshold() {
        let (base, _) = design(Scheme::Cpvtc, 3, 5, Strategy::Structured, 0).unwrap();
        let keep = [0, 1, 2];
        let c = base.c.as_ref().unwrap();
        let deleted = ThresholdDesign {
            n: 3,
            graph: GraphSpec::new(base.graph.submatrix(&keep, &keep)).unwrap(),
            c: Some(keep.iter().map(|&j| c[j]).collect()),
            players: keep.to_vec(),
            ..base.clone()
        };
        assert!(!verify(&deleted).unwrap().all_below_infeasible);
        assert!(restrict(&base, 3).unwrap().1.pass);
    }

    #[test]
    fn qpvtq_below_threshold_fails_both_quadratures() {
        let (_, rep) = design(Scheme::Qpvtq, 3, 5, Strategy::Random, 3).unwrap();
        for s in &rep.below_threshold_subsets {
            assert!(s.systems.iter().all(|c| !c.feasible), "{}", s.players);
        }
        for s in &rep.threshold_subsets {
            assert_eq!(s.block_shape, (3, 3));
            assert_eq!(s.block_rank, 3);
            assert_eq!(s.player_block_rank, Some(2));
        }
    }

    #[test]
    fn cpubc_and_qpvtq_reports_agree() {
        let (q, rq) = design(Scheme::Qpvtq, 3, 5, Strategy::Random, 9).unwrap();
        let p = ThresholdDesign {
            scheme: Scheme::Cpubc,
            ..q
        };
        let rp = verify(&p).unwrap();
        let bits = |r: &VerificationReport| {
            r.threshold_subsets
                .iter()
                .chain(&r.below_threshold_subsets)
                .map(|s| s.feasible)
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&rq), bits(&rp));
    }

    #[test]
    fn design_file_round_trip() {
        let (d, rep) = design(Scheme::Cpvtc, 3, 4, Strategy::Random, 2).unwrap();
        let file = DesignFile::new(&d, Some(rep));
        let text = serde_json::to_string(&file).unwrap();
        let back: DesignFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_design().unwrap(), d);
        assert_eq!(back.players.one_based(), vec![1, 2, 3, 4]);
    }
}
