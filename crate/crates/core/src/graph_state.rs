//! Weighted continuous-variable graph states.
//!
//! Each mode starts as a squeezed vacuum `X_j = e^{r_j} X_j^(0)`,
//! `P_j = e^{-r_j} P_j^(0)`; a QND coupling of gain `g` between `i` and `j`
//! adds `g X_j` to `P_i` and `g X_i` to `P_j`. After all couplings
//! `X_j^G = X_j` and `P_j^G = P_j + Σ_l G_jl X_l`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::gaussian::{AffineForm, LatentBasis};

/// Symmetric, zero-diagonal matrix of interaction gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    gains: DMatrix<f64>,
}

impl GraphSpec {
    /// Exact symmetry and an exactly zero diagonal are required.
    pub fn new(gains: DMatrix<f64>) -> Result<Self> {
        if !gains.is_square() {
            return Err(Error::InvalidGraph(format!(
                "adjacency matrix is {}x{}, not square",
                gains.nrows(),
                gains.ncols()
            )));
        }
        let n = gains.nrows();
        for i in 0..n {
            if gains[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "nonzero diagonal entry at mode {}",
                    i + 1
                )));
            }
            for j in 0..n {
                if !gains[(i, j)].is_finite() {
                    return Err(Error::InvalidGraph("non-finite gain".into()));
                }
                if gains[(i, j)] != gains[(j, i)] {
                    return Err(Error::InvalidGraph(format!(
                        "asymmetric gains between modes {} and {}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { gains })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            gains: DMatrix::zeros(n, n),
        }
    }

    /// Edges as 0-based `(i, j, gain)`; repeated edges add up.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut gains = DMatrix::zeros(n, n);
        for &(i, j, g) in edges {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::ModeOutOfRange {
                        index: idx,
                        modes: n,
                    });
                }
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at mode {}", i + 1)));
            }
            gains[(i, j)] += g;
            gains[(j, i)] += g;
        }
        Self::new(gains)
    }

    pub fn n_modes(&self) -> usize {
        self.gains.nrows()
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gains[(i, j)]
    }

    pub fn gains(&self) -> &DMatrix<f64> {
        &self.gains
    }

    /// Nonzero couplings with `i < j`, row-major.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_modes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.gains[(i, j)] != 0.0 {
                    out.push((i, j, self.gains[(i, j)]));
                }
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.gains.row(i).iter().copied().collect()
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
            self.gains[(rows[a], cols[b])]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezingSpec {
    r: Vec<f64>,
}

impl SqueezingSpec {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "squeezing parameters must be finite".into(),
            ));
        }
        Ok(Self { r })
    }

    pub fn uniform(n: usize, r: f64) -> Self {
        Self { r: vec![r; n] }
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Diagonal of `R = diag{e^{r_1}, …}`.
    pub fn stretch(&self) -> DVector<f64> {
        DVector::from_iterator(self.r.len(), self.r.iter().map(|v| v.exp()))
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.stretch())
    }
}

/// Position and momentum forms of a register of qumodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratures {
    basis: LatentBasis,
    x: Vec<AffineForm>,
    p: Vec<AffineForm>,
}

impl Quadratures {
    pub fn squeezed_vacua(r: &[f64]) -> Self {
        let basis = LatentBasis::new(r.len());
        let x = r
            .iter()
            .enumerate()
            .map(|(j, rj)| rj.exp() * &basis.unit_form(basis.x_index(j)))
            .collect();
        let p = r
            .iter()
            .enumerate()
            .map(|(j, rj)| (-rj).exp() * &basis.unit_form(basis.p_index(j)))
            .collect();
        Self { basis, x, p }
    }

    pub fn basis(&self) -> &LatentBasis {
        &self.basis
    }

    pub fn n_modes(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self, mode: usize) -> &AffineForm {
        &self.x[mode]
    }

    pub fn p(&self, mode: usize) -> &AffineForm {
        &self.p[mode]
    }

    pub fn apply_qnd(mut self, i: usize, j: usize, gain: f64) -> Result<Self> {
        let n = self.n_modes();
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::ModeOutOfRange {
                    index: idx,
                    modes: n,
                });
            }
        }
        if i == j {
            return Err(Error::SameMode(i));
        }
        let (xi, xj) = (self.x[i].clone(), self.x[j].clone());
        self.p[i].add_scaled(&xj, gain);
        self.p[j].add_scaled(&xi, gain);
        Ok(self)
    }

    /// Rows `X_1..X_m, P_1..P_m`, columns the latent basis.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let m = self.n_modes();
        DMatrix::from_fn(2 * m, self.basis.dim(), |row, col| {
            if row < m {
                self.x[row].latent[col]
            } else {
                self.p[row - m].latent[col]
            }
        })
    }

    /// Analytic covariance of `(X_1..X_m, P_1..P_m)`.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let m = self.n_modes();
        let all: Vec<&AffineForm> = self.x.iter().chain(&self.p).collect();
        DMatrix::from_fn(2 * m, 2 * m, |a, b| self.basis.covariance(all[a], all[b]))
    }

    fn attach_secret(&self, var_x: f64, var_p: f64) -> Result<Self> {
        let basis = LatentBasis::with_secret(self.n_modes(), var_x, var_p)?;
        let dim = basis.dim();
        Ok(Self {
            basis,
            x: self.x.iter().map(|f| f.padded(dim)).collect(),
            p: self.p.iter().map(|f| f.padded(dim)).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    quadratures: Quadratures,
    graph: GraphSpec,
    squeezing: SqueezingSpec,
}

/// Squeeze every mode and couple every edge of `graph`.
pub fn build_cvgs(graph: &GraphSpec, squeezing: &SqueezingSpec) -> Result<GraphState> {
    check_len("squeezing vector", graph.n_modes(), squeezing.len())?;
    let mut q = Quadratures::squeezed_vacua(squeezing.r());
    for (i, j, g) in graph.edges() {
        q = q.apply_qnd(i, j, g)?;
    }
    Ok(GraphState {
        quadratures: q,
        graph: graph.clone(),
        squeezing: squeezing.clone(),
    })
}

impl GraphState {
    pub fn graph(&self) -> &GraphSpec {
        &self.graph
    }

    pub fn squeezing(&self) -> &SqueezingSpec {
        &self.squeezing
    }

    pub fn quadratures(&self) -> &Quadratures {
        &self.quadratures
    }

    pub fn basis(&self) -> &LatentBasis {
        &self.quadratures.basis
    }

    pub fn n_modes(&self) -> usize {
        self.graph.n_modes()
    }

    pub fn x(&self, mode: usize) -> &AffineForm {
        self.quadratures.x(mode)
    }

    pub fn p(&self, mode: usize) -> &AffineForm {
        self.quadratures.p(mode)
    }

    /// Dealer's momentum displacement `Z(c_j γ)` on every mode.
    pub fn encode_secret(mut self, c: &[f64]) -> Result<Self> {
        check_len("displacement vector c", self.n_modes(), c.len())?;
        for (p, cj) in self.quadratures.p.iter_mut().zip(c) {
            p.secret += cj;
        }
        Ok(self)
    }

    /// Extend the latent basis with a secret qumode `(X_S, P_S)`.
    pub fn with_secret_latents(&self, var_x: f64, var_p: f64) -> Result<Self> {
        Ok(Self {
            quadratures: self.quadratures.attach_secret(var_x, var_p)?,
            graph: self.graph.clone(),
            squeezing: self.squeezing.clone(),
        })
    }
}

/// A row vector over the squeezed quadratures `v = [X_1..X_m | P_1..P_m]`,
/// i.e. the form `position · X + momentum · P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRow {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl QuadratureRow {
    pub fn n_modes(&self) -> usize {
        self.position.len()
    }

    /// `‖position·R‖² + ‖momentum·R⁻¹‖²`.
    pub fn variance(&self, squeezing: &SqueezingSpec) -> Result<f64> {
        check_len("squeezing vector", self.n_modes(), squeezing.len())?;
        Ok(self
            .position
            .iter()
            .zip(&self.momentum)
            .zip(squeezing.r())
            .map(|((x, p), r)| (x * r.exp()).powi(2) + (p * (-r).exp()).powi(2))
            .sum())
    }

    /// The same linear form expressed over unit latents of `basis`.
    pub fn to_form(&self, basis: &LatentBasis, squeezing: &SqueezingSpec) -> Result<AffineForm> {
        check_len("squeezing vector", self.n_modes(), squeezing.len())?;
        check_len("latent basis modes", self.n_modes(), basis.modes())?;
        let mut f = basis.zero_form();
        for (j, r) in squeezing.r().iter().enumerate() {
            f.latent[basis.x_index(j)] = self.position[j] * r.exp();
            f.latent[basis.p_index(j)] = self.momentum[j] * (-r).exp();
        }
        Ok(f)
    }

    /// Largest absolute coefficient in the position block.
    pub fn position_residual(&self) -> f64 {
        self.position.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Graph file: `{"n": 3, "edges": [[1, 2, 1.0], …], "r": [...]}`, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    #[serde(default)]
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

impl GraphFile {
    pub fn from_spec(spec: &GraphSpec, r: Option<Vec<f64>>) -> Self {
        Self {
            n: spec.n_modes(),
            edges: spec
                .edges()
                .into_iter()
                .map(|(i, j, g)| (i + 1, j + 1, g))
                .collect(),
            r,
        }
    }

    pub fn to_spec(&self) -> Result<GraphSpec> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for &(i, j, g) in &self.edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidGraph(
                    "edge indices are 1-based; found 0".into(),
                ));
            }
            edges.push((i - 1, j - 1, g));
        }
        GraphSpec::from_edges(self.n, &edges)
    }

    pub fn squeezing(&self) -> Result<Option<SqueezingSpec>> {
        match &self.r {
            None => Ok(None),
            Some(r) => {
                check_len("squeezing vector", self.n, r.len())?;
                SqueezingSpec::new(r.clone()).map(Some)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn squeezed_vacuum_variances() {
        for r in [0.0, 1.0, -0.7, 3.0] {
            let q = Quadratures::squeezed_vacua(&[r]);
            let vx = q.basis().moments(q.x(0), 0.0).variance;
            let vp = q.basis().moments(q.p(0), 0.0).variance;
            assert_relative_eq!(vx, (2.0 * r).exp(), max_relative = 1e-14);
            assert_relative_eq!(vp, (-2.0 * r).exp(), max_relative = 1e-14);
            assert_relative_eq!(vx * vp, 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn qnd_basic_cases() {
        let q = Quadratures::squeezed_vacua(&[0.0, 0.0]);
        assert_eq!(q.clone().apply_qnd(0, 1, 0.0).unwrap(), q);
        let coupled = q.clone().apply_qnd(0, 1, 1.0).unwrap();
        assert_eq!(coupled.basis().moments(coupled.p(0), 0.0).variance, 2.0);
        assert_eq!(coupled.x(0), q.x(0));
        assert_eq!(q.clone().apply_qnd(1, 1, 1.0), Err(Error::SameMode(1)));
        assert!(matches!(
            q.apply_qnd(0, 2, 1.0),
            Err(Error::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn successive_couplings_add() {
        let q = Quadratures::squeezed_vacua(&[0.3, -0.2, 0.1]);
        let twice = q
            .clone()
            .apply_qnd(0, 2, 0.4)
            .unwrap()
            .apply_qnd(0, 2, 1.1)
            .unwrap();
        let once = q.apply_qnd(0, 2, 1.5).unwrap();
        assert!((twice.coefficient_matrix() - once.coefficient_matrix()).amax() < 1e-15);
    }

    #[test]
    fn two_mode_edge_covariances() {
        let g = GraphSpec::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let state = build_cvgs(&g, &SqueezingSpec::uniform(2, 0.0)).unwrap();
        let basis = state.basis();
        assert_eq!(basis.moments(state.p(0), 0.0).variance, 2.0);
        assert_eq!(basis.covariance(state.p(0), state.x(1)), 1.0);
    }

    #[test]
    fn empty_graph_is_product_of_squeezed_vacua() {
        let r = vec![0.5, -0.1, 2.0];
        let state = build_cvgs(
            &GraphSpec::empty(3),
            &SqueezingSpec::new(r.clone()).unwrap(),
        )
        .unwrap();
        assert_eq!(*state.quadratures(), Quadratures::squeezed_vacua(&r));
    }

    #[test]
    fn rejects_bad_graphs() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(GraphSpec::new(asym), Err(Error::InvalidGraph(_))));
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(GraphSpec::new(diag), Err(Error::InvalidGraph(_))));
        assert!(GraphSpec::from_edges(2, &[(1, 1, 1.0)]).is_err());
        let g = GraphSpec::empty(2);
        assert!(matches!(
            build_cvgs(&g, &SqueezingSpec::uniform(3, 0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn encoding_shifts_only_means() {
        let g = GraphSpec::from_edges(2, &[(0, 1, 0.8)]).unwrap();
        let state = build_cvgs(&g, &SqueezingSpec::new(vec![0.2, 0.4]).unwrap()).unwrap();
        assert_eq!(state.clone().encode_secret(&[0.0, 0.0]).unwrap(), state);
        let enc = state.clone().encode_secret(&[1.0, -2.0]).unwrap();
        for j in 0..2 {
            let before = state.basis().moments(state.p(j), 3.0);
            let after = enc.basis().moments(enc.p(j), 3.0);
            assert_eq!(before.variance, after.variance);
        }
        assert_eq!(enc.basis().moments(enc.p(0), 3.0).mean, 3.0);
        assert_eq!(enc.basis().moments(enc.p(1), 3.0).mean, -6.0);
        assert!(state.encode_secret(&[1.0]).is_err());
    }

    #[test]
    fn single_mode_encoding_mean() {
        let state = build_cvgs(&GraphSpec::empty(1), &SqueezingSpec::uniform(1, 0.0))
            .unwrap()
            .encode_secret(&[1.0])
            .unwrap();
        assert_eq!(state.basis().moments(state.p(0), 3.0).mean, 3.0);
    }

    #[test]
    fn x_plus_encoded_p_moments() {
        // X_1 + P_1^D with c = [1], γ = 2, r = 0, G = 0 → mean 2, variance 2.
        let state = build_cvgs(&GraphSpec::empty(1), &SqueezingSpec::uniform(1, 0.0))
            .unwrap()
            .encode_secret(&[1.0])
            .unwrap();
        let f = state.x(0) + state.p(0);
        let m = state.basis().moments(&f, 2.0);
        assert_eq!((m.mean, m.variance), (2.0, 2.0));
    }

    #[test]
    fn graph_file_round_trip_is_one_based() {
        let json = r#"{"n": 3, "edges": [[1, 2, 1.0], [2, 3, -0.5]], "r": [0, 1, 2]}"#;
        let file: GraphFile = serde_json::from_str(json).unwrap();
        let spec = file.to_spec().unwrap();
        assert_eq!(spec.gain(0, 1), 1.0);
        assert_eq!(spec.gain(2, 1), -0.5);
        assert_eq!(GraphFile::from_spec(&spec, file.r.clone()), file);
        let zero: GraphFile = serde_json::from_str(r#"{"n": 2, "edges": [[0, 1, 1.0]]}"#).unwrap();
        assert!(zero.to_spec().is_err());
    }

    fn random_graph(n: usize) -> impl Strategy<Value = GraphSpec> {
        prop::collection::vec(prop_oneof![Just(0.0), -2.0..2.0f64], n * (n - 1) / 2).prop_map(
            move |w| {
                let mut edges = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        edges.push((i, j, w[k]));
                        k += 1;
                    }
                }
                GraphSpec::from_edges(n, &edges).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn coefficient_matrix_is_block_identity(
            g in random_graph(4),
            r in prop::collection::vec(-1.5..1.5f64, 4),
        ) {
            let sq = SqueezingSpec::new(r.clone()).unwrap();
            let state = build_cvgs(&g, &sq).unwrap();
            let n = 4;
            let mut block = DMatrix::<f64>::identity(2 * n, 2 * n);
            block.view_mut((n, 0), (n, n)).copy_from(g.gains());
            let mut scale = DVector::zeros(2 * n);
            for j in 0..n {
                scale[j] = r[j].exp();
                scale[n + j] = (-r[j]).exp();
            }
            let expected = block * DMatrix::from_diagonal(&scale);
            let got = state.quadratures().coefficient_matrix();
            prop_assert!((got - expected).amax() < 1e-12);
        }

        #[test]
        fn edge_order_does_not_matter(g in random_graph(4)) {
            let sq = SqueezingSpec::uniform(4, 0.3);
            let mut edges = g.edges();
            let forward = {
                let mut q = Quadratures::squeezed_vacua(sq.r());
                for &(i, j, w) in &edges { q = q.apply_qnd(i, j, w).unwrap(); }
                q
            };
            edges.reverse();
            let mut backward = Quadratures::squeezed_vacua(sq.r());
            for &(i, j, w) in &edges { backward = backward.apply_qnd(j, i, w).unwrap(); }
            prop_assert!((forward.coefficient_matrix() - backward.coefficient_matrix()).amax() < 1e-14);
        }

        #[test]
        fn encoding_commutes_with_coupling(
            g in random_graph(3),
            c in prop::collection::vec(-2.0..2.0f64, 3),
            gamma in -3.0..3.0f64,
        ) {
            let sq = SqueezingSpec::uniform(3, 0.0);
            let encoded_last = build_cvgs(&g, &sq).unwrap().encode_secret(&c).unwrap();
            // displace first, then couple: QND adds position terms only, so means agree
            let mut q = Quadratures::squeezed_vacua(sq.r());
            for (j, cj) in c.iter().enumerate() { q.p[j].secret += cj; }
            for (i, j, w) in g.edges() { q = q.apply_qnd(i, j, w).unwrap(); }
            for j in 0..3 {
                prop_assert_eq!(q.p(j).mean(gamma), encoded_last.p(j).mean(gamma));
            }
        }
    }
}
