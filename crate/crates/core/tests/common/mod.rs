#![allow(dead_code)]

use cvqss_core::GraphSpec;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-echelon rank with partial pivoting.
pub fn gauss_rank(rows: &[Vec<f64>]) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let ncols = m.first().map_or(0, |r| r.len());
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let tol = 1e-9 * scale;
    let mut rank = 0;
    for col in 0..ncols {
        if rank == m.len() {
            break;
        }
        let (piv, best) = (rank..m.len())
            .map(|i| (i, m[i][col].abs()))
            .fold((rank, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if best <= tol {
            continue;
        }
        m.swap(rank, piv);
        for i in 0..m.len() {
            if i != rank {
                let f = m[i][col] / m[rank][col];
                if f != 0.0 {
                    for j in col..ncols {
                        m[i][j] -= f * m[rank][j];
                    }
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Is `rhs` a combination of `rows`, i.e. does `xᵀA = rhsᵀ` have a solution?
pub fn row_space_contains(rows: &[Vec<f64>], rhs: &[f64]) -> bool {
    let mut aug = rows.to_vec();
    aug.push(rhs.to_vec());
    if rows.is_empty() {
        return rhs.iter().all(|v| *v == 0.0);
    }
    gauss_rank(rows) == gauss_rank(&aug)
}

/// Classical private system on support `j`, built directly from its blocks.
pub fn cpvtc_consistent(g: &GraphSpec, c: &[f64], j: &[usize]) -> bool {
    let n = g.n_modes();
    let mut rows = Vec::new();
    for &p in j {
        let mut r = vec![0.0; n + 1];
        r[p] = 1.0;
        rows.push(r);
    }
    for &p in j {
        let mut r: Vec<f64> = (0..n).map(|l| g.gain(p, l)).collect();
        r.push(c[p]);
        rows.push(r);
    }
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;
    row_space_contains(&rows, &rhs)
}

fn dealer_rows(g: &GraphSpec, j: &[usize]) -> Vec<Vec<f64>> {
    let m = g.n_modes();
    let mut rows = Vec::new();
    for &p in j {
        let mut r = vec![0.0; m];
        r[p] = 1.0;
        rows.push(r);
    }
    for &p in j {
        rows.push((0..m).map(|l| g.gain(p, l)).collect());
    }
    rows
}

/// (position, momentum) consistency for the quantum private scheme.
pub fn qpvtq_consistent(g: &GraphSpec, j: &[usize]) -> (bool, bool) {
    let m = g.n_modes();
    let rows = dealer_rows(g, j);
    let mut e = vec![0.0; m];
    e[m - 1] = -1.0;
    let gd: Vec<f64> = (0..m).map(|l| g.gain(m - 1, l)).collect();
    (
        row_space_contains(&rows, &e),
        row_space_contains(&rows, &gd),
    )
}

/// Random symmetric graph: each edge present with probability `p`, weight
/// uniform on `[lo, hi]`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64, lo: f64, hi: f64) -> GraphSpec {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, rng.random_range(lo..=hi)));
            }
        }
    }
    GraphSpec::from_edges(n, &edges).unwrap()
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

/// `‖(aᵀ + bᵀG) R‖² + ‖bᵀ R⁻¹‖²` written out term by term.
pub fn cpvtc_variance(g: &GraphSpec, a: &[f64], b: &[f64], r: &[f64]) -> f64 {
    let n = g.n_modes();
    let mut v = 0.0;
    for l in 0..n {
        let mut u = a[l];
        for j in 0..n {
            u += b[j] * g.gain(j, l);
        }
        v += (u * r[l].exp()).powi(2) + (b[l] * (-r[l]).exp()).powi(2);
    }
    v
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// `|v̂ − v| ≤ 5 v √(2/N)`.
pub fn variance_within_5_sigma(empirical: f64, analytic: f64, n: usize) -> bool {
    (empirical - analytic).abs() <= 5.0 * analytic * (2.0 / n as f64).sqrt()
}

pub fn subsets(universe: &[usize]) -> Vec<Vec<usize>> {
    (0u32..1 << universe.len())
        .map(|mask| {
            universe
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &m)| m)
                .collect()
        })
        .collect()
}
