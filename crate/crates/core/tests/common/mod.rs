//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rkrank::graph::{erdos_renyi, ComparisonGraph};

pub fn dense_laplacian(g: &ComparisonGraph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut a = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        a[(i, i)] += 1.0;
        a[(j, j)] += 1.0;
        a[(i, j)] -= 1.0;
        a[(j, i)] -= 1.0;
    }
    a
}

/// Minimizes `Σ_{i<j edge} (x_i − x_j − y_ij)²` subject to `Σx = 0` through
/// the KKT system of the normal equations.
pub fn constrained_least_squares(g: &ComparisonGraph, y: &[f64]) -> Vec<f64> {
    let n = g.node_count();
    let a = dense_laplacian(g);
    let mut b = DVector::zeros(n + 1);
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        b[i] += y[e];
        b[j] -= y[e];
    }
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    kkt.view_mut((0, 0), (n, n)).copy_from(&a);
    for i in 0..n {
        kkt[(i, n)] = 1.0;
        kkt[(n, i)] = 1.0;
    }
    let sol = kkt
        .lu()
        .solve(&b)
        .expect("KKT matrix of a connected graph is nonsingular");
    sol.rows(0, n).iter().copied().collect()
}

/// Sorted eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn connected_graph(n: usize, p: f64, seed: u64) -> ComparisonGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g = erdos_renyi(n, p, rng.random()).unwrap();
        if g.is_connected() {
            return g;
        }
    }
}

pub fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Exact logits `v_i − v_j` on the graph's canonical edges.
pub fn exact_logits(g: &ComparisonGraph, v: &[f64]) -> Vec<f64> {
    g.edges().iter().map(|&(i, j)| v[i] - v[j]).collect()
}

pub fn norm_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}
