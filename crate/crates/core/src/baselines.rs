//! Reference estimators: Rank Centrality and (regularized) maximum likelihood.

use crate::btl::{EdgeObservations, WeightVector};
use crate::error::{RankError, Result};
use crate::graph::ComparisonGraph;

const RC_TOL: f64 = 1e-10;
const RC_MAX_ITERS: usize = 1_000_000;

/// Row-stochastic random walk over the comparison graph: from `i`, step to
/// neighbor `j` with probability `p̂_ji / d_max`; stay put with the rest.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    /// `(target, probability)` per node, aligned with the graph's adjacency.
    off_diagonal: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
}

impl TransitionMatrix {
    pub fn build(g: &ComparisonGraph, obs: &EdgeObservations, epsilon: f64) -> Result<Self> {
        let d_max = g.max_degree().max(1) as f64;
        let n = g.node_count();
        let mut off_diagonal = Vec::with_capacity(n);
        let mut diagonal = Vec::with_capacity(n);
        for i in 0..n {
            let row = g
                .neighbors(i)
                .iter()
                .map(|nb| Ok((nb.node, obs.p_hat(nb.node, i, epsilon)? / d_max)))
                .collect::<Result<Vec<_>>>()?;
            let out: f64 = row.iter().map(|(_, p)| p).sum();
            diagonal.push((1.0 - out).max(0.0));
            off_diagonal.push(row);
        }
        Ok(Self { off_diagonal, diagonal })
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.diagonal[i] + self.off_diagonal[i].iter().map(|(_, p)| p).sum::<f64>()
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diagonal[i]
    }

    pub fn off_diagonal(&self, i: usize) -> &[(usize, f64)] {
        &self.off_diagonal[i]
    }

    /// `out = π P`.
    fn left_apply(&self, pi: &[f64], out: &mut [f64]) {
        for (o, (p, d)) in out.iter_mut().zip(pi.iter().zip(&self.diagonal)) {
            *o = p * d;
        }
        for (i, row) in self.off_diagonal.iter().enumerate() {
            for &(j, p) in row {
                out[j] += pi[i] * p;
            }
        }
    }

    /// Stationary distribution by power iteration on the lazy chain
    /// `(I + P) / 2`, which shares `P`'s stationary vector and is aperiodic.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.diagonal.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..RC_MAX_ITERS {
            self.left_apply(&pi, &mut next);
            let mut delta = 0.0;
            for (nx, p) in next.iter_mut().zip(&pi) {
                *nx = 0.5 * (*nx + p);
                delta += (*nx - p).abs();
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= total);
            std::mem::swap(&mut pi, &mut next);
            if delta <= RC_TOL {
                return Ok(pi);
            }
        }
        Err(RankError::Numeric(format!(
            "rank centrality did not converge in {RC_MAX_ITERS} iterations"
        )))
    }
}

/// Rank Centrality: weights are the stationary mass of [`TransitionMatrix`],
/// rescaled to geometric mean 1.
pub fn rank_centrality(g: &ComparisonGraph, obs: &EdgeObservations, epsilon: f64) -> Result<WeightVector> {
    if !g.is_connected() {
        log::warn!("rank centrality on a disconnected graph: stationary mass depends on the start");
    }
    let pi = TransitionMatrix::build(g, obs, epsilon)?.stationary()?;
    if let Some(i) = pi.iter().position(|&v| v <= 0.0) {
        return Err(RankError::Numeric(format!(
            "item {i} has zero stationary mass; regularize with epsilon > 0"
        )));
    }
    geometric_normalize(pi)
}

fn geometric_normalize(w: Vec<f64>) -> Result<WeightVector> {
    let mean_log = w.iter().map(|v| v.ln()).sum::<f64>() / w.len().max(1) as f64;
    WeightVector::new(w.into_iter().map(|v| v / mean_log.exp()).collect())
}

const MLE_GRAD_TOL: f64 = 1e-8;
const MLE_MAX_ITERS: usize = 200_000;

fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// BTL log-likelihood with an L2 penalty, over canonical edge tallies.
struct Likelihood<'a> {
    pairs: &'a [(usize, usize)],
    tallies: Vec<(f64, f64)>,
    lambda: f64,
    n: usize,
}

impl Likelihood<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let ll: f64 = self
            .pairs
            .iter()
            .zip(&self.tallies)
            .map(|(&(i, j), &(a, b))| {
                let t = theta[i] - theta[j];
                a * log_sigmoid(t) + b * log_sigmoid(-t)
            })
            .sum();
        ll - 0.5 * self.lambda * theta.iter().map(|t| t * t).sum::<f64>()
    }

    fn gradient(&self, theta: &[f64], grad: &mut [f64]) {
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = -self.lambda * t;
        }
        for (&(i, j), &(a, b)) in self.pairs.iter().zip(&self.tallies) {
            let s = sigmoid(theta[i] - theta[j]);
            // d/dθ_i of a·log σ(t) + b·log σ(−t)
            let d = a * (1.0 - s) - b * s;
            grad[i] += d;
            grad[j] -= d;
        }
    }

    /// Upper bound on the Hessian's spectral norm (Gershgorin on the
    /// count-weighted Laplacian scaled by ¼, plus λ).
    fn curvature_bound(&self) -> f64 {
        let mut row = vec![0.0; self.n];
        for (&(i, j), &(a, b)) in self.pairs.iter().zip(&self.tallies) {
            row[i] += a + b;
            row[j] += a + b;
        }
        0.5 * row.iter().cloned().fold(0.0, f64::max) + self.lambda
    }
}

/// True iff the "beat at least once" digraph is strongly connected, the
/// condition for the unpenalized BTL likelihood to have a finite maximizer.
fn wins_strongly_connected(n: usize, obs: &EdgeObservations) -> bool {
    if n <= 1 {
        return true;
    }
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for (e, &(i, j)) in obs.pairs().iter().enumerate() {
        let (a, b) = obs.edge_tally(e);
        if a > 0 {
            fwd[i].push(j);
            bwd[j].push(i);
        }
        if b > 0 {
            fwd[j].push(i);
            bwd[i].push(j);
        }
    }
    let reach_all = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !std::mem::replace(&mut seen[v], true) {
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach_all(&fwd) && reach_all(&bwd)
}

/// Maximizes `Σ [wins_ij log σ(θ_i − θ_j) + wins_ji log σ(θ_j − θ_i)] − ½λ‖θ‖²`
/// by gradient ascent with backtracking, to gradient norm `1e-8`. Returns
/// `exp(θ)` with geometric mean 1.
pub fn regularized_mle(g: &ComparisonGraph, obs: &EdgeObservations, lambda: f64) -> Result<WeightVector> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(RankError::param(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let n = g.node_count();
    let tallies = g
        .edges()
        .iter()
        .map(|&(i, j)| {
            obs.tally(i, j)
                .map(|(a, b)| (a as f64, b as f64))
                .ok_or_else(|| RankError::param(format!("no observations for edge ({i}, {j})")))
        })
        .collect::<Result<Vec<_>>>()?;
    if lambda == 0.0 {
        let mut restricted = EdgeObservations::new(n);
        for (&(i, j), &(a, b)) in g.edges().iter().zip(&tallies) {
            restricted.add_tally(i, j, a as u64, b as u64)?;
        }
        if !wins_strongly_connected(n, &restricted) {
            return Err(RankError::Numeric(
                "maximum likelihood diverges: some items never lose (or never win) against the rest; use lambda > 0"
                    .into(),
            ));
        }
    }
    let f = Likelihood {
        pairs: g.edges(),
        tallies,
        lambda,
        n,
    };
    let mut theta = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    // 1/L with L bounding the Hessian norm always ascends; backtracking never
    // goes below it, so rounding in the objective cannot stall progress
    let safe_step = 1.0 / f.curvature_bound().max(f64::MIN_POSITIVE);
    let mut step = safe_step;
    let mut value = f.value(&theta);
    for _ in 0..MLE_MAX_ITERS {
        f.gradient(&theta, &mut grad);
        let gsq: f64 = grad.iter().map(|g| g * g).sum();
        if gsq.sqrt() <= MLE_GRAD_TOL {
            if lambda == 0.0 {
                let mean = theta.iter().sum::<f64>() / n as f64;
                theta.iter_mut().for_each(|t| *t -= mean);
            }
            return geometric_normalize(theta.iter().map(|t| t.exp()).collect());
        }
        // once the predicted gain is below the objective's rounding level,
        // comparisons of values are noise and only the safe step is trusted
        let noise = 64.0 * f64::EPSILON * value.abs().max(1.0);
        step = if 0.5 * step * gsq > noise {
            step * 2.0
        } else {
            safe_step
        };
        loop {
            for ((t, th), g) in trial.iter_mut().zip(&theta).zip(&grad) {
                *t = th + step * g;
            }
            let candidate = f.value(&trial);
            if step <= safe_step || candidate >= value + 0.5 * step * gsq {
                value = candidate;
                std::mem::swap(&mut theta, &mut trial);
                break;
            }
            step = (step * 0.5).max(safe_step);
        }
        if theta.iter().any(|t| !t.is_finite() || t.abs() > 700.0) {
            return Err(RankError::Numeric("maximum likelihood diverged; use lambda > 0".into()));
        }
    }
    Err(RankError::Numeric(format!(
        "maximum likelihood did not reach gradient norm {MLE_GRAD_TOL} in {MLE_MAX_ITERS} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::erdos_renyi;

    fn two_nodes(a: u64, b: u64) -> (ComparisonGraph, EdgeObservations) {
        let g = ComparisonGraph::from_edges(2, [(0, 1)]).unwrap();
        let mut obs = EdgeObservations::for_graph(&g);
        obs.add_tally(0, 1, a, b).unwrap();
        (g, obs)
    }

    #[test]
    fn rc_two_nodes_even() {
        let (g, obs) = two_nodes(5, 5);
        let w = rank_centrality(&g, &obs, 0.0).unwrap();
        assert!((w.as_slice()[0] - w.as_slice()[1]).abs() < 1e-9);
    }

    #[test]
    fn rc_rows_are_stochastic() {
        let g = erdos_renyi(30, 0.3, 2).unwrap();
        let w = WeightVector::geometric_ladder(30);
        let obs = crate::btl::simulate_comparisons(&g, &w, 20, 1).unwrap();
        let p = TransitionMatrix::build(&g, &obs, 1.0).unwrap();
        for i in 0..30 {
            assert!((p.row_sum(i) - 1.0).abs() < 1e-12);
            assert!(p.diagonal(i) >= 0.0);
            assert!(p.off_diagonal(i).iter().all(|&(_, v)| v >= 0.0));
        }
    }

    #[test]
    fn mle_two_node_closed_form() {
        let (g, obs) = two_nodes(3, 1);
        let w = regularized_mle(&g, &obs, 0.0).unwrap();
        let ratio = w.as_slice()[0] / w.as_slice()[1];
        assert!((ratio - 3.0).abs() < 1e-7, "{ratio}");
    }

    #[test]
    fn mle_symmetric_tallies_give_equal_weights() {
        let g = erdos_renyi(12, 0.5, 6).unwrap();
        let mut obs = EdgeObservations::for_graph(&g);
        for &(i, j) in g.edges() {
            obs.add_tally(i, j, 4, 4).unwrap();
        }
        for lambda in [0.0, 0.05] {
            let w = regularized_mle(&g, &obs, lambda).unwrap();
            assert!(w.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn mle_rejects_one_sided_without_penalty() {
        let (g, obs) = two_nodes(4, 0);
        assert!(matches!(regularized_mle(&g, &obs, 0.0), Err(RankError::Numeric(_))));
        let w = regularized_mle(&g, &obs, 0.5).unwrap();
        assert!(w.as_slice()[0] > w.as_slice()[1]);
        assert!(regularized_mle(&g, &obs, -1.0).is_err());
    }

    #[test]
    fn mle_stationarity_and_improvement() {
        let g = erdos_renyi(25, 0.3, 9).unwrap();
        let w = WeightVector::geometric_ladder(25);
        let obs = crate::btl::simulate_comparisons(&g, &w, 30, 4).unwrap();
        let lambda = 0.05;
        let est = regularized_mle(&g, &obs, lambda).unwrap();
        let tallies = g.edges().iter().map(|&(i, j)| {
            let (a, b) = obs.tally(i, j).unwrap();
            (a as f64, b as f64)
        });
        let f = Likelihood {
            pairs: g.edges(),
            tallies: tallies.collect(),
            lambda,
            n: 25,
        };
        // at the penalized optimum Σθ = 0, so geometric normalization is a no-op
        let theta: Vec<f64> = est.log_weights();
        let mut grad = vec![0.0; 25];
        f.gradient(&theta, &mut grad);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(gnorm < 1e-6, "{gnorm}");
        assert!(f.value(&theta) >= f.value(&[0.0; 25]));
    }
}
