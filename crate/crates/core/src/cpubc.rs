//! Classical secret over public distribution, classical player channel.
//!
//! Each round the dealer homodynes its own mode in a random quadrature and
//! keeps the outcome as a key value; the players independently pick a
//! quadrature and estimate it with `Σ M(α_j X_j^G + β_j P_j^G)`. Rounds
//! where the two choices differ are discarded.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gaussian::{map_shots, AffineForm};
use crate::graph_state::{build_cvgs, GraphSpec, GraphState, QuadratureRow};
use crate::players::PlayerSet;
use crate::qpvtq::{
    dealer_mode, dealer_row_rhs, dealer_unit_rhs, momentum_error_row, player_row, solve_perfect_q,
    QuadParams, QuadratureSolution,
};

pub type CpubcParams = QuadParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadChoice {
    Position,
    Momentum,
}

impl QuadChoice {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random_bool(0.5) {
            QuadChoice::Position
        } else {
            QuadChoice::Momentum
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            QuadChoice::Position => "position",
            QuadChoice::Momentum => "momentum",
        }
    }
}

impl std::str::FromStr for QuadChoice {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" | "x" => Ok(QuadChoice::Position),
            "momentum" | "p" => Ok(QuadChoice::Momentum),
            other => Err(crate::Error::InvalidParameter(format!(
                "unknown quadrature {other:?}"
            ))),
        }
    }
}

pub fn dealer_form(state: &GraphState, choice: QuadChoice) -> &AffineForm {
    let d = state.n_modes() - 1;
    match choice {
        QuadChoice::Position => state.x(d),
        QuadChoice::Momentum => state.p(d),
    }
}

pub fn dealer_measure(state: &GraphState, choice: QuadChoice, latents: &[f64]) -> f64 {
    dealer_form(state, choice).evaluate(latents, 0.0)
}

/// The players' combined estimate for `choice`, using `(a, b)` for position
/// and `(a', b')` for momentum.
pub fn players_form(state: &GraphState, params: &CpubcParams, choice: QuadChoice) -> AffineForm {
    let (alpha, beta) = match choice {
        QuadChoice::Position => (&params.a, &params.b),
        QuadChoice::Momentum => (&params.a_prime, &params.b_prime),
    };
    let mut f = state.basis().zero_form();
    for j in 0..state.n_modes() - 1 {
        f.add_scaled(state.x(j), alpha[j]);
        f.add_scaled(state.p(j), beta[j]);
    }
    f
}

pub fn players_estimate(
    state: &GraphState,
    params: &CpubcParams,
    choice: QuadChoice,
    latents: &[f64],
) -> f64 {
    players_form(state, params, choice).evaluate(latents, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftRound {
    pub round: u64,
    pub dealer_choice: QuadChoice,
    pub players_choice: QuadChoice,
    pub dealer_key: f64,
    pub players_estimate: f64,
    pub kept: bool,
}

impl SiftRound {
    pub fn error(&self) -> f64 {
        self.players_estimate - self.dealer_key
    }
}

/// Rounds whose announced quadratures agree.
pub fn sift(rounds: &[SiftRound]) -> Vec<SiftRound> {
    rounds
        .iter()
        .filter(|r| r.dealer_choice == r.players_choice)
        .copied()
        .collect()
}

/// `e_x = [[aᵀ −1] + [bᵀ 0] G | [bᵀ 0]] v`.
pub fn position_error_row(graph: &GraphSpec, params: &CpubcParams) -> Result<QuadratureRow> {
    let d = dealer_mode(graph)?;
    let mut row = player_row(graph, &params.a, &params.b)?;
    row.position[d] -= 1.0;
    Ok(row)
}

/// `(Var(e_x), Var(e_p))` for matched rounds.
pub fn error_variances(graph: &GraphSpec, params: &CpubcParams) -> Result<(f64, f64)> {
    params.validate(graph.n_modes())?;
    let sq = params.squeezing()?;
    Ok((
        position_error_row(graph, params)?.variance(&sq)?,
        momentum_error_row(graph, params)?.variance(&sq)?,
    ))
}

/// Position: `[aᵀ|bᵀ][I'; G'] = [0ᵀ | 1]`; momentum: `= g_{n+1}ᵀ`.
pub fn solve_perfect_pub(
    graph: &GraphSpec,
    players: &PlayerSet,
    quad: QuadChoice,
) -> Result<QuadratureSolution> {
    let rhs = match quad {
        QuadChoice::Position => dealer_unit_rhs(graph, 1.0)?,
        QuadChoice::Momentum => dealer_row_rhs(graph)?,
    };
    QuadratureSolution::solve(graph, players, &rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub players: PlayerSet,
    pub qpvtq_feasible: bool,
    pub cpubc_feasible: bool,
    pub position_feasible_each: (bool, bool),
    pub momentum_feasible_each: (bool, bool),
    /// `max |x_pub + x_q|` over the position solutions when both exist.
    pub position_sign_flip_error: Option<f64>,
    /// `max |x_pub − x_q|` over the momentum solutions when both exist.
    pub momentum_match_error: Option<f64>,
    pub holds: bool,
}

fn max_gap(x: &QuadratureSolution, y: &QuadratureSolution, sign: f64) -> Option<f64> {
    let (xa, xb) = (x.a.as_ref()?, x.b.as_ref()?);
    let (ya, yb) = (y.a.as_ref()?, y.b.as_ref()?);
    Some(
        xa.iter()
            .zip(ya)
            .chain(xb.iter().zip(yb))
            .map(|(u, v)| (u + sign * v).abs())
            .fold(0.0, f64::max),
    )
}

/// Compare CPubC and QPvtQ feasibility on the same graph and subset.
pub fn duality_check(graph: &GraphSpec, players: &PlayerSet) -> Result<DualityReport> {
    let q = solve_perfect_q(graph, players)?;
    let pub_x = solve_perfect_pub(graph, players, QuadChoice::Position)?;
    let pub_p = solve_perfect_pub(graph, players, QuadChoice::Momentum)?;
    let qpvtq_feasible = q.is_feasible();
    let cpubc_feasible = pub_x.is_feasible() && pub_p.is_feasible();
    let position_sign_flip_error = max_gap(&pub_x, &q.position, 1.0);
    let momentum_match_error = max_gap(&pub_p, &q.momentum, -1.0);
    let solutions_agree = position_sign_flip_error.is_none_or(|e| e <= 1e-9)
        && momentum_match_error.is_none_or(|e| e <= 1e-9);
    Ok(DualityReport {
        players: players.clone(),
        qpvtq_feasible,
        cpubc_feasible,
        position_feasible_each: (q.position.is_feasible(), pub_x.is_feasible()),
        momentum_feasible_each: (q.momentum.is_feasible(), pub_p.is_feasible()),
        position_sign_flip_error,
        momentum_match_error,
        holds: qpvtq_feasible == cpubc_feasible && solutions_agree,
    })
}

/// Prepared key-agreement protocol.
#[derive(Debug, Clone)]
pub struct CpubcRun {
    state: GraphState,
    players_x: AffineForm,
    players_p: AffineForm,
}

impl CpubcRun {
    pub fn new(graph: &GraphSpec, params: &CpubcParams) -> Result<Self> {
        params.validate(graph.n_modes())?;
        let state = build_cvgs(graph, &params.squeezing()?)?;
        let players_x = players_form(&state, params, QuadChoice::Position);
        let players_p = players_form(&state, params, QuadChoice::Momentum);
        Ok(Self {
            state,
            players_x,
            players_p,
        })
    }

    pub fn state(&self) -> &GraphState {
        &self.state
    }

    /// One round on its own RNG stream: both choices, then the latents.
    pub fn round<R: Rng + ?Sized>(&self, round: u64, rng: &mut R) -> SiftRound {
        let dealer_choice = QuadChoice::random(rng);
        let players_choice = QuadChoice::random(rng);
        let z = self.state.basis().draw(rng);
        self.round_on(round, dealer_choice, players_choice, &z)
    }

    pub fn round_on(
        &self,
        round: u64,
        dealer_choice: QuadChoice,
        players_choice: QuadChoice,
        latents: &[f64],
    ) -> SiftRound {
        let est = match players_choice {
            QuadChoice::Position => &self.players_x,
            QuadChoice::Momentum => &self.players_p,
        };
        SiftRound {
            round,
            dealer_choice,
            players_choice,
            dealer_key: dealer_measure(&self.state, dealer_choice, latents),
            players_estimate: est.evaluate(latents, 0.0),
            kept: dealer_choice == players_choice,
        }
    }

    pub fn simulate(&self, rounds: usize, seed: u64) -> Result<Vec<SiftRound>> {
        map_shots(rounds, seed, |i, rng| self.round(i, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::shot_rng;
    use approx::assert_relative_eq;

    fn edge() -> GraphSpec {
        GraphSpec::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn params(a: f64, b: f64, a_prime: f64, b_prime: f64, r: [f64; 2]) -> CpubcParams {
        QuadParams {
            a: vec![a],
            b: vec![b],
            a_prime: vec![a_prime],
            b_prime: vec![b_prime],
            r: r.to_vec(),
        }
    }

    #[test]
    fn dealer_measure_reads_chosen_quadrature() {
        let p = params(0.0, 0.0, 0.0, 0.0, [0.5, 0.25]);
        let run = CpubcRun::new(&edge(), &p).unwrap();
        let z = [0.3, -1.2, 0.8, 2.0];
        let st = run.state();
        assert_eq!(
            dealer_measure(st, QuadChoice::Position, &z),
            st.x(1).evaluate(&z, 0.0)
        );
        assert_eq!(
            dealer_measure(st, QuadChoice::Momentum, &z),
            st.p(1).evaluate(&z, 0.0)
        );
        assert_eq!(players_estimate(st, &p, QuadChoice::Position, &z), 0.0);
    }

    #[test]
    fn momentum_on_empty_graph_has_unit_variance() {
        let p = params(0.0, 0.0, 0.0, 0.0, [0.0, 0.0]);
        let run = CpubcRun::new(&GraphSpec::empty(2), &p).unwrap();
        let st = run.state();
        assert_eq!(
            st.basis()
                .moments(dealer_form(st, QuadChoice::Momentum), 0.0)
                .variance,
            1.0
        );
    }

    #[test]
    fn choice_frequencies_are_fair() {
        let n = 10_000;
        let positions = (0..n)
            .filter(|&i| QuadChoice::random(&mut shot_rng(11, i)) == QuadChoice::Position)
            .count();
        let f = positions as f64 / n as f64;
        assert!((0.47..=0.53).contains(&f), "{f}");
    }

    #[test]
    fn matched_position_error_row() {
        let r = [0.9, 0.4];
        let p = params(0.0, 1.0, 0.0, 0.0, r);
        let run = CpubcRun::new(&edge(), &p).unwrap();
        let st = run.state();
        let err =
            &players_form(st, &p, QuadChoice::Position) - dealer_form(st, QuadChoice::Position);
        // position-latent coefficients vanish
        assert_eq!(err.latent[0], 0.0);
        assert_eq!(err.latent[1], 0.0);
        assert_relative_eq!(
            st.basis().moments(&err, 0.0).variance,
            (-1.8f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn mismatched_round_variance_grows_with_squeezing() {
        let mut last = 0.0;
        for r in 0..=5 {
            let r = r as f64;
            let p = params(0.0, 1.0, 1.0, 0.0, [r, r]);
            let run = CpubcRun::new(&edge(), &p).unwrap();
            let st = run.state();
            let err =
                &players_form(st, &p, QuadChoice::Momentum) - dealer_form(st, QuadChoice::Position);
            let v = st.basis().moments(&err, 0.0).variance;
            assert_relative_eq!(v, 2.0 * (2.0 * r).exp(), max_relative = 1e-12);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn sift_keeps_matching_rounds() {
        let mk = |i: u64, d: QuadChoice, p: QuadChoice| SiftRound {
            round: i,
            dealer_choice: d,
            players_choice: p,
            dealer_key: 0.0,
            players_estimate: 0.0,
            kept: d == p,
        };
        use QuadChoice::*;
        let all: Vec<_> = (0..4).map(|i| mk(i, Position, Position)).collect();
        assert_eq!(sift(&all).len(), 4);
        let alt: Vec<_> = (0..6)
            .map(|i| mk(i, Position, if i % 2 == 0 { Position } else { Momentum }))
            .collect();
        assert_eq!(sift(&alt).len(), 3);
    }

    #[test]
    fn keep_rate_near_half() {
        let p = params(0.0, 1.0, 1.0, 0.0, [1.0, 1.0]);
        let rounds = CpubcRun::new(&edge(), &p)
            .unwrap()
            .simulate(10_000, 5)
            .unwrap();
        let rate = sift(&rounds).len() as f64 / rounds.len() as f64;
        assert!((0.47..=0.53).contains(&rate), "{rate}");
        assert!(rounds
            .iter()
            .all(|r| r.kept == (r.dealer_choice == r.players_choice)));
    }

    #[test]
    fn error_variance_examples() {
        let (vx, _) = error_variances(&edge(), &params(0.0, 1.0, 1.0, 0.0, [0.0, 0.0])).unwrap();
        assert_eq!(vx, 1.0);
        let (vx, vp) = error_variances(&edge(), &params(0.0, 1.0, 1.0, 0.0, [5.0, 0.0])).unwrap();
        assert_relative_eq!(vx, 4.539_992_976_248_485e-5, max_relative = 1e-12);
        assert_eq!(vp, 1.0);
        let (_, vp) = error_variances(&edge(), &params(0.0, 1.0, 1.0, 0.0, [0.0, 3.0])).unwrap();
        assert_relative_eq!(vp, (-6.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn solve_single_edge() {
        let j = PlayerSet::all(1);
        let x = solve_perfect_pub(&edge(), &j, QuadChoice::Position).unwrap();
        assert!((x.a.as_ref().unwrap()[0]).abs() < 1e-12);
        assert!((x.b.as_ref().unwrap()[0] - 1.0).abs() < 1e-12);
        let p = solve_perfect_pub(&edge(), &j, QuadChoice::Momentum).unwrap();
        assert!((p.a.as_ref().unwrap()[0] - 1.0).abs() < 1e-12);
        assert!((p.b.as_ref().unwrap()[0]).abs() < 1e-12);
        let none = solve_perfect_pub(&GraphSpec::empty(2), &j, QuadChoice::Position).unwrap();
        assert!(!none.is_feasible());
    }

    #[test]
    fn duality_on_examples() {
        let rep = duality_check(&edge(), &PlayerSet::all(1)).unwrap();
        assert!(rep.qpvtq_feasible && rep.cpubc_feasible && rep.holds);
        assert!(rep.position_sign_flip_error.unwrap() < 1e-12);
        let rep = duality_check(&GraphSpec::empty(2), &PlayerSet::all(1)).unwrap();
        assert!(!rep.qpvtq_feasible && !rep.cpubc_feasible && rep.holds);
    }
}
