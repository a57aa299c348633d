//! Finite-squeezing noise gain of a `(k, 2k−1)` design and its reduction.
//!
//! On a threshold subset the reconstruction coefficients are unique, and at
//! uniform squeezing `r` the leftover error variance of each system is
//! `gain · e^{−2r}` with `gain = ‖b‖²` (plus 1 for the dealer momentum in
//! the momentum systems). Refinement lowers the worst gain over all
//! threshold subsets by projected gradient descent on the edge weights.

use nalgebra::{DMatrix, DVector};

use crate::graph_state::GraphSpec;
use crate::players::subsets_of_size;
use crate::threshold::Scheme;

const SOFT_MAX_POWERS: [f64; 2] = [8.0, 64.0];
const MAX_ITERS: usize = 400;
const MIN_STEP: f64 = 1e-7;

/// Per-subset, per-system gains on a base design; `None` if some block is
/// singular.
pub fn base_noise_gains(
    scheme: Scheme,
    k: usize,
    g: &DMatrix<f64>,
    c: Option<&[f64]>,
) -> Option<Vec<f64>> {
    let m = g.nrows();
    let players: Vec<usize> = (0..2 * k - 1).collect();
    let mut out = Vec::new();
    for set in subsets_of_size(&players, k) {
        let j = set.modes();
        let rest: Vec<usize> = (0..m).filter(|l| !set.contains(*l)).collect();
        let mut block = DMatrix::from_fn(k, rest.len(), |r, s| g[(j[r], rest[s])]);
        if let Some(c) = c {
            block = block.insert_column(rest.len(), 0.0);
            for (r, &p) in j.iter().enumerate() {
                block[(r, rest.len())] = c[p];
            }
        }
        if block.ncols() != k {
            return None;
        }
        let lu = block.transpose().lu();
        let mut e = DVector::zeros(k);
        match scheme {
            Scheme::Cpvtc => {
                e[k - 1] = 1.0;
                out.push(lu.solve(&e)?.norm_squared());
            }
            Scheme::Qpvtq | Scheme::Cpubc => {
                e[k - 1] = -1.0;
                out.push(lu.solve(&e)?.norm_squared());
                let gd = DVector::from_iterator(k, rest.iter().map(|&l| g[(m - 1, l)]));
                out.push(lu.solve(&gd)?.norm_squared() + 1.0);
            }
        }
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Weights (upper triangle, row-major) then `c`.
fn pack(g: &DMatrix<f64>, c: Option<&[f64]>) -> Vec<f64> {
    let m = g.nrows();
    let mut v: Vec<f64> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| g[(i, j)])
        .collect();
    if let Some(c) = c {
        v.extend_from_slice(c);
    }
    v
}

fn unpack(v: &[f64], m: usize, with_c: bool) -> (DMatrix<f64>, Option<Vec<f64>>) {
    let mut g = DMatrix::zeros(m, m);
    let mut it = v.iter();
    for i in 0..m {
        for j in i + 1..m {
            let w = *it.next().expect("packed length");
            g[(i, j)] = w;
            g[(j, i)] = w;
        }
    }
    let c = with_c.then(|| it.copied().collect());
    (g, c)
}

/// Smoothed maximum of the gains, in log scale.
fn objective(scheme: Scheme, k: usize, m: usize, with_c: bool, power: f64, v: &[f64]) -> f64 {
    let (g, c) = unpack(v, m, with_c);
    match base_noise_gains(scheme, k, &g, c.as_deref()) {
        Some(gains) => {
            let top = gains.iter().cloned().fold(0.0, f64::max);
            let s: f64 = gains.iter().map(|x| (x / top).powf(power)).sum();
            top.ln() + s.ln() / power
        }
        None => f64::INFINITY,
    }
}

/// Projected descent along the normalized central-difference gradient.
/// Returns false if the start is not finite.
fn descend(f: &dyn Fn(&[f64]) -> f64, x: &mut Vec<f64>, lo: f64, hi: f64) -> bool {
    let mut fx = f(x);
    if !fx.is_finite() {
        return false;
    }
    let max_step = 0.25 * (hi - lo);
    let mut step = max_step;
    for _ in 0..MAX_ITERS {
        let grad: Vec<f64> = (0..x.len())
            .map(|i| {
                let h = 1e-6 * x[i].abs().max(1.0);
                let mut up = x.clone();
                let mut dn = x.clone();
                up[i] += h;
                dn[i] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            break;
        }
        let mut moved = false;
        while step >= MIN_STEP {
            let trial: Vec<f64> = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| (xi - step * gi / norm).clamp(lo, hi))
                .collect();
            let ft = f(&trial);
            if ft < fx - 1e-12 {
                *x = trial;
                fx = ft;
                step = (step * 1.5).min(max_step);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    true
}

/// Lower the worst noise gain of a base design, keeping every weight inside
/// `[lo, hi]` (widened to contain the starting point). Returns the start
/// unchanged if no improvement is found.
pub fn refine(
    scheme: Scheme,
    k: usize,
    graph: &GraphSpec,
    c: Option<&[f64]>,
    (lo, hi): (f64, f64),
) -> (GraphSpec, Option<Vec<f64>>) {
    let m = graph.n_modes();
    let with_c = c.is_some();
    let mut x = pack(graph.gains(), c);
    let lo = x.iter().cloned().fold(lo, f64::min);
    let hi = x.iter().cloned().fold(hi, f64::max);
    for power in SOFT_MAX_POWERS {
        let f = |v: &[f64]| objective(scheme, k, m, with_c, power, v);
        if !descend(&f, &mut x, lo, hi) {
            return (graph.clone(), c.map(|c| c.to_vec()));
        }
    }
    let (g, c_new) = unpack(&x, m, with_c);
    match GraphSpec::new(g) {
        Ok(spec) => (spec, c_new),
        Err(_) => (graph.clone(), c.map(|c| c.to_vec())),
    }
}
