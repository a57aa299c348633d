//! Quantum secret, private distribution, quantum player channel.
//!
//! The dealer holds the last mode `d` of an `(n+1)`-mode graph state and
//! Bell-measures it against the secret qumode, publishing
//! `X_u = (X_d^G + X_S)/√2` and `P_v = (P_d^G − P_S)/√2`. Players combine
//! their modes into `(Σ α_j X_j^G + β_j P_j^G, Σ α'_j X_j^G + β'_j P_j^G)` and
//! displace by `(+√2 M(X_u), −√2 M(P_v))`. The reconstruction errors are then
//! exactly `e_x = players + X_d^G` and `e_p = players' − P_d^G`.

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cpvtc::scatter_pair;
use crate::error::{check_len, Error, Result};
use crate::feasibility::{solve_row_system, FeasibilityResult};
use crate::gaussian::{map_shots, AffineForm};
use crate::graph_state::{build_cvgs, GraphSpec, GraphState, QuadratureRow, SqueezingSpec};
use crate::players::PlayerSet;

/// Player coefficients for both quadratures on an `(n+1)`-mode graph whose
/// last mode stays with the dealer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub b_prime: Vec<f64>,
    /// Squeezing for all `n+1` modes.
    pub r: Vec<f64>,
}

impl QuadParams {
    pub fn validate(&self, graph_modes: usize) -> Result<()> {
        if graph_modes == 0 {
            return Err(Error::InvalidGraph("dealer mode missing".into()));
        }
        let n = graph_modes - 1;
        check_len("coefficient vector a", n, self.a.len())?;
        check_len("coefficient vector b", n, self.b.len())?;
        check_len("coefficient vector a'", n, self.a_prime.len())?;
        check_len("coefficient vector b'", n, self.b_prime.len())?;
        check_len("squeezing vector r", graph_modes, self.r.len())
    }

    pub fn squeezing(&self) -> Result<SqueezingSpec> {
        SqueezingSpec::new(self.r.clone())
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            a: vec![0.0; n],
            b: vec![0.0; n],
            a_prime: vec![0.0; n],
            b_prime: vec![0.0; n],
            r: vec![0.0; n + 1],
        }
    }
}

pub(crate) fn dealer_mode(graph: &GraphSpec) -> Result<usize> {
    graph
        .n_modes()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidGraph("dealer mode missing".into()))
}

/// `Σ_j α_j X_j^G + β_j P_j^G` over the players, as a row over `v_(n+1)`.
pub fn player_row(graph: &GraphSpec, a: &[f64], b: &[f64]) -> Result<QuadratureRow> {
    let m = graph.n_modes();
    let n = dealer_mode(graph)?;
    check_len("coefficient vector a", n, a.len())?;
    check_len("coefficient vector b", n, b.len())?;
    let mut position = vec![0.0; m];
    let mut momentum = vec![0.0; m];
    for j in 0..n {
        position[j] += a[j];
        momentum[j] = b[j];
        for (l, pos) in position.iter_mut().enumerate() {
            *pos += b[j] * graph.gain(j, l);
        }
    }
    Ok(QuadratureRow { position, momentum })
}

/// `e_x = [[aᵀ 1] + [bᵀ 0] G | [bᵀ 0]] v`.
pub fn position_error_row(graph: &GraphSpec, params: &QuadParams) -> Result<QuadratureRow> {
    let d = dealer_mode(graph)?;
    let mut row = player_row(graph, &params.a, &params.b)?;
    row.position[d] += 1.0;
    Ok(row)
}

/// `e_p = [[a'ᵀ 0] + [b'ᵀ 0] G − g_{n+1}ᵀ | [b'ᵀ −1]] v`.
pub fn momentum_error_row(graph: &GraphSpec, params: &QuadParams) -> Result<QuadratureRow> {
    let d = dealer_mode(graph)?;
    let mut row = player_row(graph, &params.a_prime, &params.b_prime)?;
    for (l, pos) in row.position.iter_mut().enumerate() {
        *pos -= graph.gain(d, l);
    }
    row.momentum[d] -= 1.0;
    Ok(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorForms {
    pub position: QuadratureRow,
    pub momentum: QuadratureRow,
    pub v1: f64,
    pub v2: f64,
}

pub fn error_forms(graph: &GraphSpec, params: &QuadParams) -> Result<ErrorForms> {
    params.validate(graph.n_modes())?;
    let sq = params.squeezing()?;
    let position = position_error_row(graph, params)?;
    let momentum = momentum_error_row(graph, params)?;
    Ok(ErrorForms {
        v1: position.variance(&sq)?,
        v2: momentum.variance(&sq)?,
        position,
        momentum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecretQumode {
    pub var_x: f64,
    pub var_p: f64,
    #[serde(default)]
    pub mean_x: f64,
    #[serde(default)]
    pub mean_p: f64,
}

impl SecretQumode {
    pub fn new(var_x: f64, var_p: f64) -> Result<Self> {
        let s = Self {
            var_x,
            var_p,
            mean_x: 0.0,
            mean_p: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.var_x > 0.0 && self.var_p > 0.0) {
            return Err(Error::InvalidSecret("variances must be positive".into()));
        }
        if self.var_x * self.var_p < 1.0 - 1e-12 {
            return Err(Error::InvalidSecret(format!(
                "Var(X)·Var(P) = {} violates the uncertainty bound 1",
                self.var_x * self.var_p
            )));
        }
        Ok(())
    }

    pub fn is_minimum_uncertainty(&self) -> bool {
        (self.var_x * self.var_p - 1.0).abs() <= 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub v1: f64,
    pub v2: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub fidelity: f64,
}

/// `F = 2 / (√(δ+ε) − √ε)` for a diagonal Gaussian secret.
pub fn fidelity(secret: &SecretQumode, v1: f64, v2: f64) -> Result<FidelityReport> {
    secret.validate()?;
    if !(v1 >= 0.0 && v2 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "error variances must be nonnegative, got ({v1}, {v2})"
        )));
    }
    let (vx, vp) = (secret.var_x, secret.var_p);
    let delta = (2.0 * vx + v1) * (2.0 * vp + v2);
    let epsilon = if secret.is_minimum_uncertainty() {
        0.0
    } else {
        (vx * vp - 1.0) * ((vx + v1) * (vp + v2) - 1.0)
    };
    let fidelity = 2.0 / ((delta + epsilon).sqrt() - epsilon.sqrt());
    Ok(FidelityReport {
        v1,
        v2,
        delta,
        epsilon,
        fidelity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellOutcome {
    pub m_xu: f64,
    pub m_pv: f64,
}

/// Per-shot errors from the full protocol and from the closed-form rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotErrors {
    pub protocol_x: f64,
    pub protocol_p: f64,
    pub formula_x: f64,
    pub formula_p: f64,
}

/// Prepared teleportation: graph state with the secret's latents attached.
#[derive(Debug, Clone)]
pub struct QpvtqRun {
    state: GraphState,
    secret_x: AffineForm,
    secret_p: AffineForm,
    players_x: AffineForm,
    players_p: AffineForm,
    formula_x: AffineForm,
    formula_p: AffineForm,
}

impl QpvtqRun {
    pub fn new(graph: &GraphSpec, params: &QuadParams, secret: &SecretQumode) -> Result<Self> {
        params.validate(graph.n_modes())?;
        secret.validate()?;
        let sq = params.squeezing()?;
        let state = build_cvgs(graph, &sq)?.with_secret_latents(secret.var_x, secret.var_p)?;
        let basis = *state.basis();
        let mut secret_x = basis.unit_form(basis.secret_x_index().expect("secret attached"));
        secret_x.constant = secret.mean_x;
        let mut secret_p = basis.unit_form(basis.secret_p_index().expect("secret attached"));
        secret_p.constant = secret.mean_p;

        let n = graph.n_modes() - 1;
        let mut players_x = basis.zero_form();
        let mut players_p = basis.zero_form();
        for j in 0..n {
            players_x.add_scaled(state.x(j), params.a[j]);
            players_x.add_scaled(state.p(j), params.b[j]);
            players_p.add_scaled(state.x(j), params.a_prime[j]);
            players_p.add_scaled(state.p(j), params.b_prime[j]);
        }

        let plain = crate::gaussian::LatentBasis::new(graph.n_modes());
        let dim = basis.dim();
        let formula_x = position_error_row(graph, params)?
            .to_form(&plain, &sq)?
            .padded(dim);
        let formula_p = momentum_error_row(graph, params)?
            .to_form(&plain, &sq)?
            .padded(dim);
        Ok(Self {
            state,
            secret_x,
            secret_p,
            players_x,
            players_p,
            formula_x,
            formula_p,
        })
    }

    pub fn state(&self) -> &GraphState {
        &self.state
    }

    pub fn secret_forms(&self) -> (&AffineForm, &AffineForm) {
        (&self.secret_x, &self.secret_p)
    }

    /// `(X_u, P_v)` as forms.
    pub fn bell_forms(&self) -> (AffineForm, AffineForm) {
        let d = self.state.n_modes() - 1;
        let xu = (1.0 / SQRT_2) * &(self.state.x(d) + &self.secret_x);
        let pv = (1.0 / SQRT_2) * &(self.state.p(d) - &self.secret_p);
        (xu, pv)
    }

    pub fn bell_measure(&self, latents: &[f64]) -> BellOutcome {
        let (xu, pv) = self.bell_forms();
        BellOutcome {
            m_xu: xu.evaluate(latents, 0.0),
            m_pv: pv.evaluate(latents, 0.0),
        }
    }

    /// Players' estimate of `(X_S, P_S)` after the published displacements.
    pub fn reconstruct(&self, bell: &BellOutcome) -> (AffineForm, AffineForm) {
        let mut x_est = self.players_x.clone();
        x_est.constant += SQRT_2 * bell.m_xu;
        let mut p_est = self.players_p.clone();
        p_est.constant -= SQRT_2 * bell.m_pv;
        (x_est, p_est)
    }

    pub fn errors_on(&self, latents: &[f64]) -> ShotErrors {
        let bell = self.bell_measure(latents);
        let (x_est, p_est) = self.reconstruct(&bell);
        ShotErrors {
            protocol_x: x_est.evaluate(latents, 0.0) - self.secret_x.evaluate(latents, 0.0),
            protocol_p: p_est.evaluate(latents, 0.0) - self.secret_p.evaluate(latents, 0.0),
            formula_x: self.formula_x.evaluate(latents, 0.0),
            formula_p: self.formula_p.evaluate(latents, 0.0),
        }
    }

    pub fn simulate(&self, shots: usize, seed: u64) -> Result<Vec<ShotErrors>> {
        let basis = *self.state.basis();
        map_shots(shots, seed, |_, rng| self.errors_on(&basis.draw(rng)))
    }
}

/// Rows `I_{J,M}` then `G_{J,M}`: the coefficient matrix shared by every
/// reconstruction system on the dealer-mode layout.
pub fn subset_matrix(graph: &GraphSpec, players: &PlayerSet) -> Result<DMatrix<f64>> {
    let m = graph.n_modes();
    let d = dealer_mode(graph)?;
    players.check_within(d)?;
    let k = players.len();
    let mut mat = DMatrix::zeros(2 * k, m);
    for (row, &j) in players.modes().iter().enumerate() {
        mat[(row, j)] = 1.0;
        for l in 0..m {
            mat[(k + row, l)] = graph.gain(j, l);
        }
    }
    Ok(mat)
}

/// Right-hand side `[0 … 0 sign]`.
pub(crate) fn dealer_unit_rhs(graph: &GraphSpec, sign: f64) -> Result<Vec<f64>> {
    let d = dealer_mode(graph)?;
    let mut rhs = vec![0.0; graph.n_modes()];
    rhs[d] = sign;
    Ok(rhs)
}

/// `g_{n+1}ᵀ`, the dealer's row of `G`.
pub(crate) fn dealer_row_rhs(graph: &GraphSpec) -> Result<Vec<f64>> {
    Ok(graph.row(dealer_mode(graph)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSolution {
    pub result: FeasibilityResult,
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
}

impl QuadratureSolution {
    pub(crate) fn solve(graph: &GraphSpec, players: &PlayerSet, rhs: &[f64]) -> Result<Self> {
        let mat = subset_matrix(graph, players)?;
        let result = solve_row_system(&mat, rhs);
        let (a, b) = match &result.solution {
            Some(x) => {
                let (a, b) = scatter_pair(x, players, graph.n_modes() - 1);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        Ok(Self { result, a, b })
    }

    pub fn is_feasible(&self) -> bool {
        self.result.is_feasible()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpvtqSolution {
    pub players: PlayerSet,
    pub position: QuadratureSolution,
    pub momentum: QuadratureSolution,
}

impl QpvtqSolution {
    pub fn is_feasible(&self) -> bool {
        self.position.is_feasible() && self.momentum.is_feasible()
    }

    /// Both quadrature solutions as parameters, with uniform squeezing `r`.
    pub fn params(&self, r: f64) -> Option<QuadParams> {
        let (a, b) = (self.position.a.clone()?, self.position.b.clone()?);
        let (a_prime, b_prime) = (self.momentum.a.clone()?, self.momentum.b.clone()?);
        let m = a.len() + 1;
        Some(QuadParams {
            a,
            b,
            a_prime,
            b_prime,
            r: vec![r; m],
        })
    }
}

/// Perfect-fidelity conditions `[aᵀ|bᵀ][I'; G'] = [0ᵀ | −1]` and
/// `[a'ᵀ|b'ᵀ][I'; G'] = g_{n+1}ᵀ`, with support on `players`.
pub fn solve_perfect_q(graph: &GraphSpec, players: &PlayerSet) -> Result<QpvtqSolution> {
    Ok(QpvtqSolution {
        players: players.clone(),
        position: QuadratureSolution::solve(graph, players, &dealer_unit_rhs(graph, -1.0)?)?,
        momentum: QuadratureSolution::solve(graph, players, &dealer_row_rhs(graph)?)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusivityReport {
    pub group: PlayerSet,
    pub complement: PlayerSet,
    pub group_position: FeasibilityResult,
    pub group_momentum: FeasibilityResult,
    pub complement_position: FeasibilityResult,
    pub complement_momentum: FeasibilityResult,
    /// Group reconstructs `X_S` while the complement reconstructs `P_S`.
    pub cross_position_momentum: bool,
    /// Group reconstructs `P_S` while the complement reconstructs `X_S`.
    pub cross_momentum_position: bool,
    pub holds: bool,
}

/// Exclusivity between `group` and the rest of the player modes `0..n`.
pub fn exclusivity_check(graph: &GraphSpec, group: &PlayerSet) -> Result<ExclusivityReport> {
    let universe: Vec<usize> = (0..dealer_mode(graph)?).collect();
    exclusivity_check_within(graph, group, &universe)
}

/// Exclusivity between `group` and `universe ∖ group`.
pub fn exclusivity_check_within(
    graph: &GraphSpec,
    group: &PlayerSet,
    universe: &[usize],
) -> Result<ExclusivityReport> {
    if let Some(m) = group.modes().iter().find(|m| !universe.contains(m)) {
        return Err(Error::InvalidSubset(format!(
            "mode {} is not a distributed player mode",
            m + 1
        )));
    }
    let complement = group.complement_in(universe);
    let g = solve_perfect_q(graph, group)?;
    let k = solve_perfect_q(graph, &complement)?;
    let cross_position_momentum = g.position.is_feasible() && k.momentum.is_feasible();
    let cross_momentum_position = g.momentum.is_feasible() && k.position.is_feasible();
    let complement_blind = !k.position.is_feasible() && !k.momentum.is_feasible();
    let holds = !cross_position_momentum
        && !cross_momentum_position
        && (!g.is_feasible() || complement_blind);
    Ok(ExclusivityReport {
        group: group.clone(),
        complement,
        group_position: g.position.result,
        group_momentum: g.momentum.result,
        complement_position: k.position.result,
        complement_momentum: k.momentum.result,
        cross_position_momentum,
        cross_momentum_position,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn edge() -> GraphSpec {
        GraphSpec::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn edge_params(r: [f64; 2]) -> QuadParams {
        QuadParams {
            a: vec![0.0],
            b: vec![-1.0],
            a_prime: vec![1.0],
            b_prime: vec![0.0],
            r: r.to_vec(),
        }
    }

    #[test]
    fn error_rows_for_single_edge() {
        let f = error_forms(&edge(), &edge_params([0.7, 1.3])).unwrap();
        assert_eq!(f.position.position, vec![0.0, 0.0]);
        assert_eq!(f.position.momentum, vec![-1.0, 0.0]);
        assert_relative_eq!(f.v1, (-1.4f64).exp(), max_relative = 1e-14);
        assert_eq!(f.momentum.position, vec![0.0, 0.0]);
        assert_eq!(f.momentum.momentum, vec![0.0, -1.0]);
        assert_relative_eq!(f.v2, (-2.6f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn empty_graph_keeps_dealer_position() {
        let mut p = QuadParams::zeros(1);
        p.r = vec![0.2, 0.9];
        let f = error_forms(&GraphSpec::empty(2), &p).unwrap();
        assert_eq!(f.position.position, vec![0.0, 1.0]);
        assert_relative_eq!(f.v1, (1.8f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn fidelity_values() {
        let unit = SecretQumode::new(1.0, 1.0).unwrap();
        let f = fidelity(&unit, 0.0, 0.0).unwrap();
        assert_eq!((f.delta, f.epsilon, f.fidelity), (4.0, 0.0, 1.0));
        let f = fidelity(&unit, 2.0, 2.0).unwrap();
        assert_eq!((f.delta, f.epsilon, f.fidelity), (16.0, 0.0, 0.5));
        let thermal = SecretQumode::new(2.0, 2.0).unwrap();
        let f = fidelity(&thermal, 0.0, 0.0).unwrap();
        assert_eq!((f.delta, f.epsilon, f.fidelity), (16.0, 9.0, 1.0));
        assert!(fidelity(&unit, -1.0, 0.0).is_err());
        assert!(SecretQumode::new(0.5, 1.0).is_err());
    }

    #[test]
    fn bell_measurement_on_fixed_latents() {
        let run = QpvtqRun::new(
            &GraphSpec::empty(2),
            &QuadParams::zeros(1),
            &SecretQumode::new(1.0, 1.0).unwrap(),
        )
        .unwrap();
        // latents: X1, X2, P1, P2, XS, PS
        let z = [0.0, 1.0, 0.0, 0.4, 1.0, 0.4];
        let b = run.bell_measure(&z);
        assert_relative_eq!(b.m_xu, SQRT_2, max_relative = 1e-15);
        assert_eq!(b.m_pv, 0.0);
    }

    #[test]
    fn bell_variance_is_average() {
        let secret = SecretQumode::new(2.0, 0.5).unwrap();
        let mut p = QuadParams::zeros(1);
        p.r = vec![0.0, 0.8];
        let run = QpvtqRun::new(&edge(), &p, &secret).unwrap();
        let (xu, _) = run.bell_forms();
        let basis = run.state().basis();
        let vx_dealer = basis.moments(run.state().x(1), 0.0).variance;
        assert_relative_eq!(
            basis.moments(&xu, 0.0).variance,
            (vx_dealer + 2.0) / 2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn zero_params_reconstruct_constants_only() {
        let run = QpvtqRun::new(
            &GraphSpec::empty(2),
            &QuadParams::zeros(1),
            &SecretQumode::new(1.0, 1.0).unwrap(),
        )
        .unwrap();
        let (x, p) = run.reconstruct(&BellOutcome {
            m_xu: 0.0,
            m_pv: 0.0,
        });
        assert!(x.is_zero() && p.is_zero());
    }

    #[test]
    fn per_shot_identity_holds() {
        let g = GraphSpec::from_edges(3, &[(0, 1, 0.7), (0, 2, 1.2), (1, 2, -0.4)]).unwrap();
        let params = QuadParams {
            a: vec![0.3, -0.5],
            b: vec![1.1, 0.2],
            a_prime: vec![-0.7, 0.4],
            b_prime: vec![0.5, 0.9],
            r: vec![0.4, -0.3, 1.0],
        };
        let secret = SecretQumode {
            var_x: 2.0,
            var_p: 0.75,
            mean_x: 0.3,
            mean_p: -1.0,
        };
        let run = QpvtqRun::new(&g, &params, &secret).unwrap();
        for e in run.simulate(2000, 3).unwrap() {
            assert!((e.protocol_x - e.formula_x).abs() <= 1e-12);
            assert!((e.protocol_p - e.formula_p).abs() <= 1e-12);
        }
    }

    #[test]
    fn solve_single_edge() {
        let sol = solve_perfect_q(&edge(), &PlayerSet::all(1)).unwrap();
        assert!(sol.is_feasible());
        let p = sol.params(0.0).unwrap();
        for (got, want) in [
            (p.a[0], 0.0),
            (p.b[0], -1.0),
            (p.a_prime[0], 1.0),
            (p.b_prime[0], 0.0),
        ] {
            assert!((got - want).abs() < 1e-12);
        }
        let disconnected = solve_perfect_q(&GraphSpec::empty(2), &PlayerSet::all(1)).unwrap();
        assert!(!disconnected.position.is_feasible());
        assert!(!disconnected.is_feasible());
    }

    #[test]
    fn feasible_solution_zeroes_first_variance_blocks() {
        let sol = solve_perfect_q(&edge(), &PlayerSet::all(1)).unwrap();
        let f = error_forms(&edge(), &sol.params(12.0).unwrap()).unwrap();
        assert!(f.position.position_residual() < 1e-12);
        assert!(f.momentum.position_residual() < 1e-12);
        assert!(f.v1 < 1e-10 && f.v2 < 1e-10);
    }

    #[test]
    fn dealer_mode_is_not_a_player() {
        assert!(solve_perfect_q(&edge(), &PlayerSet::new(vec![1])).is_err());
    }

    #[test]
    fn exclusivity_on_single_edge() {
        let rep = exclusivity_check(&edge(), &PlayerSet::all(1)).unwrap();
        assert!(rep.complement.is_empty());
        assert!(!rep.complement_position.is_feasible());
        assert!(rep.holds);
    }
}
