//! Classical secret, private distribution, classical player channel.
//!
//! The dealer displaces every momentum by `c_j γ`; player `j` shears,
//! measures position and rescales, which yields `μ_j = α_j X_j^G + β_j P_j^D`.
//! The players publish `μ_j` and estimate `γ` by `Σ μ_j`, so the error is
//! `[aᵀ + bᵀG | bᵀ] v + (bᵀc − 1) γ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::feasibility::{solve_row_system, FeasibilityResult};
use crate::gaussian::{map_shots, AffineForm};
use crate::graph_state::{build_cvgs, GraphSpec, GraphState, QuadratureRow, SqueezingSpec};
use crate::players::PlayerSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpvtcParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub r: Vec<f64>,
}

impl CpvtcParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("coefficient vector a", n, self.a.len())?;
        check_len("coefficient vector b", n, self.b.len())?;
        check_len("displacement vector c", n, self.c.len())?;
        check_len("squeezing vector r", n, self.r.len())
    }

    pub fn squeezing(&self) -> Result<SqueezingSpec> {
        SqueezingSpec::new(self.r.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// `bᵀc − 1`; the error mean is `bias_slope · γ`.
    pub bias_slope: f64,
    pub variance: f64,
}

/// `aᵀ + bᵀG` over positions, `bᵀ` over momenta.
pub fn error_row(graph: &GraphSpec, a: &[f64], b: &[f64]) -> Result<QuadratureRow> {
    let n = graph.n_modes();
    check_len("coefficient vector a", n, a.len())?;
    check_len("coefficient vector b", n, b.len())?;
    let position = (0..n)
        .map(|l| a[l] + (0..n).map(|j| b[j] * graph.gain(j, l)).sum::<f64>())
        .collect();
    Ok(QuadratureRow {
        position,
        momentum: b.to_vec(),
    })
}

pub fn error_stats(graph: &GraphSpec, params: &CpvtcParams) -> Result<ErrorStats> {
    params.validate(graph.n_modes())?;
    let row = error_row(graph, &params.a, &params.b)?;
    let bc: f64 = params.b.iter().zip(&params.c).map(|(b, c)| b * c).sum();
    Ok(ErrorStats {
        bias_slope: bc - 1.0,
        variance: row.variance(&params.squeezing()?)?,
    })
}

/// Shear `exp{−i(β/2α)P²}`: `(X, P) ↦ (X + (β/α) P, P)`.
pub fn shear(x: f64, p: f64, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if alpha == 0.0 {
        return Err(Error::ZeroShearScale);
    }
    Ok((x + beta / alpha * p, p))
}

/// The form player `j` reports: `α X_j^G + β P_j^D`.
///
/// For `α ≠ 0` this is `α · M(X + (β/α) P^D)`; for `α = 0` it is read as a
/// plain momentum measurement scaled by `β`.
pub fn measurement_form(state: &GraphState, j: usize, alpha: f64, beta: f64) -> Result<AffineForm> {
    if j >= state.n_modes() {
        return Err(Error::ModeOutOfRange {
            index: j,
            modes: state.n_modes(),
        });
    }
    let mut f = alpha * state.x(j);
    f.add_scaled(state.p(j), beta);
    Ok(f)
}

/// `μ_j` on one shot's latents.
pub fn player_measure(
    state: &GraphState,
    j: usize,
    alpha: f64,
    beta: f64,
    latents: &[f64],
    gamma: f64,
) -> Result<f64> {
    Ok(measurement_form(state, j, alpha, beta)?.evaluate(latents, gamma))
}

pub fn estimate(mu: &[f64]) -> f64 {
    mu.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "r", rename_all = "lowercase")]
pub enum OptimalSqueezing {
    Finite(f64),
    /// `b_j = 0` or `(aᵀ + bᵀG)_j = 0`: the variance term is monotone in `r_j`.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingOptimum {
    pub per_mode: Vec<OptimalSqueezing>,
    /// `Σ_j 2 |(aᵀ + bᵀG)_j b_j|`, attained when every mode is finite.
    pub infimum_variance: f64,
}

impl SqueezingOptimum {
    /// Finite entries, with `fallback` for unconstrained modes.
    pub fn to_vector(&self, fallback: f64) -> Vec<f64> {
        self.per_mode
            .iter()
            .map(|o| match o {
                OptimalSqueezing::Finite(r) => *r,
                OptimalSqueezing::Unconstrained => fallback,
            })
            .collect()
    }
}

/// Per-mode minimiser `r_j = ½ log|b_j / (aᵀ + bᵀG)_j|` of the error variance.
pub fn optimal_squeezing(graph: &GraphSpec, a: &[f64], b: &[f64]) -> Result<SqueezingOptimum> {
    let row = error_row(graph, a, b)?;
    let per_mode = row
        .position
        .iter()
        .zip(b)
        .map(|(u, bj)| {
            if *u == 0.0 || *bj == 0.0 {
                OptimalSqueezing::Unconstrained
            } else {
                OptimalSqueezing::Finite(0.5 * (bj / u).abs().ln())
            }
        })
        .collect();
    let infimum_variance = row
        .position
        .iter()
        .zip(b)
        .map(|(u, bj)| 2.0 * (u * bj).abs())
        .sum();
    Ok(SqueezingOptimum {
        per_mode,
        infimum_variance,
    })
}

/// Matrix and right-hand side of the subset condition
/// `[a_Jᵀ b_Jᵀ] [[I_{J,N}, 0], [G_{J,N}, c_J]] = [0 … 0 1]`.
pub fn subset_system(
    graph: &GraphSpec,
    c: &[f64],
    players: &PlayerSet,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = graph.n_modes();
    check_len("displacement vector c", n, c.len())?;
    players.check_within(n)?;
    let k = players.len();
    let mut m = DMatrix::zeros(2 * k, n + 1);
    for (row, &j) in players.modes().iter().enumerate() {
        m[(row, j)] = 1.0;
        for l in 0..n {
            m[(k + row, l)] = graph.gain(j, l);
        }
        m[(k + row, n)] = c[j];
    }
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;
    Ok((m, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfectSolution {
    pub players: PlayerSet,
    pub result: FeasibilityResult,
    /// Full-length coefficient vectors, zero off the subset.
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
}

impl PerfectSolution {
    pub fn is_feasible(&self) -> bool {
        self.result.is_feasible()
    }
}

/// Infinite-squeezing reconstruction condition for the players in `players`.
pub fn solve_perfect(graph: &GraphSpec, c: &[f64], players: &PlayerSet) -> Result<PerfectSolution> {
    let (m, rhs) = subset_system(graph, c, players)?;
    let result = solve_row_system(&m, &rhs);
    let (a, b) = match &result.solution {
        Some(x) => {
            let (a, b) = scatter_pair(x, players, graph.n_modes());
            (Some(a), Some(b))
        }
        None => (None, None),
    };
    Ok(PerfectSolution {
        players: players.clone(),
        result,
        a,
        b,
    })
}

/// Split a stacked `[x_J; y_J]` solution into two full-length vectors.
pub(crate) fn scatter_pair(x: &[f64], players: &PlayerSet, n: usize) -> (Vec<f64>, Vec<f64>) {
    let k = players.len();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for (i, &j) in players.modes().iter().enumerate() {
        a[j] = x[i];
        b[j] = x[k + i];
    }
    (a, b)
}

/// Prepared protocol: the encoded graph state and each player's `μ_j` form.
#[derive(Debug, Clone)]
pub struct CpvtcRun {
    pub state: GraphState,
    pub measurements: Vec<AffineForm>,
}

impl CpvtcRun {
    pub fn new(graph: &GraphSpec, params: &CpvtcParams) -> Result<Self> {
        params.validate(graph.n_modes())?;
        let state = build_cvgs(graph, &params.squeezing()?)?.encode_secret(&params.c)?;
        let measurements = (0..graph.n_modes())
            .map(|j| measurement_form(&state, j, params.a[j], params.b[j]))
            .collect::<Result<_>>()?;
        Ok(Self {
            state,
            measurements,
        })
    }

    /// `Σ μ_j − γ` for one shot's latents.
    pub fn error_on(&self, latents: &[f64], gamma: f64) -> f64 {
        let mu: Vec<f64> = self
            .measurements
            .iter()
            .map(|f| f.evaluate(latents, gamma))
            .collect();
        estimate(&mu) - gamma
    }

    /// Estimation errors over `shots` independent shots.
    pub fn simulate_errors(&self, gamma: f64, shots: usize, seed: u64) -> Result<Vec<f64>> {
        let basis = *self.state.basis();
        map_shots(shots, seed, |_, rng| {
            let z = basis.draw(rng);
            self.error_on(&z, gamma)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(a: f64, b: f64, c: f64, r: f64) -> (GraphSpec, CpvtcParams) {
        (
            GraphSpec::empty(1),
            CpvtcParams {
                a: vec![a],
                b: vec![b],
                c: vec![c],
                r: vec![r],
            },
        )
    }

    #[test]
    fn error_stats_single_mode() {
        let (g, p) = single(0.0, 1.0, 1.0, 0.0);
        let s = error_stats(&g, &p).unwrap();
        assert_eq!(s.bias_slope, 0.0);
        assert_eq!(s.variance, 1.0);

        let (g, p) = single(0.0, 1.0, 1.0, 2.0);
        assert_relative_eq!(
            error_stats(&g, &p).unwrap().variance,
            1.831_563_888_873_418e-2,
            max_relative = 1e-12
        );

        let (g, p) = single(1.0, 1.0, 1.0, 0.0);
        assert_eq!(error_stats(&g, &p).unwrap().variance, 2.0);
    }

    #[test]
    fn shear_and_scaling() {
        let (x, p) = shear(1.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!((x, p), (3.0, 2.0));
        assert_eq!(1.0 * x, 3.0);
        assert_eq!(shear(1.0, 2.0, 0.0, 1.0), Err(Error::ZeroShearScale));
    }

    #[test]
    fn player_measure_on_fixed_latents() {
        let (g, p) = single(0.0, 0.0, 1.0, 0.0);
        let state = build_cvgs(&g, &p.squeezing().unwrap())
            .unwrap()
            .encode_secret(&p.c)
            .unwrap();
        // latents (X^(0), P^(0)) = (1, 2), γ = 0 → X = 1, P^D = 2
        let z = [1.0, 2.0];
        assert_eq!(player_measure(&state, 0, 1.0, 1.0, &z, 0.0).unwrap(), 3.0);
        assert_eq!(player_measure(&state, 0, 2.0, 0.0, &z, 0.0).unwrap(), 2.0);
        assert_eq!(player_measure(&state, 0, 1.0, 0.0, &z, 5.0).unwrap(), 1.0);
        // α = 0 is a pure momentum reading including the displacement
        assert_eq!(player_measure(&state, 0, 0.0, 1.0, &z, 5.0).unwrap(), 7.0);
        assert!(player_measure(&state, 3, 1.0, 0.0, &z, 0.0).is_err());
    }

    #[test]
    fn estimate_sums() {
        assert_eq!(estimate(&[0.0, 0.0]), 0.0);
        assert_eq!(estimate(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(estimate(&[-4.5]), -4.5);
    }

    #[test]
    fn optimal_squeezing_single_mode() {
        let g = GraphSpec::empty(1);
        let o = optimal_squeezing(&g, &[1.0], &[1.0]).unwrap();
        assert_eq!(o.per_mode, vec![OptimalSqueezing::Finite(0.0)]);
        assert_eq!(o.infimum_variance, 2.0);

        let o = optimal_squeezing(&g, &[2.0], &[1.0]).unwrap();
        let r = o.to_vector(0.0)[0];
        assert_relative_eq!(r, -0.346_573_590_279_972_6, max_relative = 1e-12);
        assert_eq!(o.infimum_variance, 4.0);
        let (g, p) = single(2.0, 1.0, 1.0, r);
        assert_relative_eq!(
            error_stats(&g, &p).unwrap().variance,
            4.0,
            max_relative = 1e-12
        );

        let o = optimal_squeezing(&g, &[1.0], &[0.0]).unwrap();
        assert_eq!(o.per_mode, vec![OptimalSqueezing::Unconstrained]);
    }

    #[test]
    fn solve_two_mode_examples() {
        let g = GraphSpec::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let c = [0.0, 1.0];
        let sol = solve_perfect(&g, &c, &PlayerSet::all(2)).unwrap();
        assert!(sol.is_feasible());
        let (a, b) = (sol.a.unwrap(), sol.b.unwrap());
        for (got, want) in a.iter().zip([-1.0, 0.0]).chain(b.iter().zip([0.0, 1.0])) {
            assert!((got - want).abs() < 1e-12, "{a:?} {b:?}");
        }
        let lone = solve_perfect(&g, &c, &PlayerSet::new(vec![0])).unwrap();
        assert!(!lone.is_feasible());
        assert!(lone.a.is_none());
    }

    #[test]
    fn feasible_solution_is_unbiased_with_no_position_noise() {
        let g = GraphSpec::from_edges(3, &[(0, 1, 1.0), (0, 2, 2.0), (1, 2, 1.0)]).unwrap();
        let c = vec![1.0, 2.0, 3.0];
        let sol = solve_perfect(&g, &c, &PlayerSet::new(vec![0, 2])).unwrap();
        let params = CpvtcParams {
            a: sol.a.unwrap(),
            b: sol.b.unwrap(),
            c,
            r: vec![0.0; 3],
        };
        let stats = error_stats(&g, &params).unwrap();
        assert!(stats.bias_slope.abs() < 1e-12);
        let row = error_row(&g, &params.a, &params.b).unwrap();
        assert!(row.position_residual() < 1e-12);
    }

    #[test]
    fn subset_outside_graph_is_rejected() {
        let g = GraphSpec::empty(2);
        assert!(solve_perfect(&g, &[1.0, 1.0], &PlayerSet::new(vec![2])).is_err());
    }
}
