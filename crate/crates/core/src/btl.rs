//! Bradley-Terry-Luce model: ground-truth weights, simulated comparison
//! outcomes, and empirical preference estimates.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{RankError, Result};
use crate::graph::ComparisonGraph;

/// Strictly positive, finite item scores.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(RankError::param(format!(
                "weight {i} must be positive and finite, got {v}"
            )));
        }
        Ok(Self(w))
    }

    /// `w_i = 10^{i/n}` for items `i = 1..=n` (stored at index `i - 1`), so the
    /// dynamic range is exactly 10.
    pub fn geometric_ladder(n: usize) -> Self {
        Self((1..=n).map(|i| 10f64.powf(i as f64 / n as f64)).collect())
    }

    /// Weights from log-weights `v`, without any gauge fixing.
    pub fn from_log(v: &[f64]) -> Result<Self> {
        Self::new(v.iter().map(|x| x.exp()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.0.iter().map(|w| w.ln()).collect()
    }

    /// `max(w) / min(w)`.
    pub fn dynamic_range(&self) -> f64 {
        let (lo, hi) = self
            .0
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        hi / lo
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }

    /// Probability that `i` is preferred over `j`: `w_i / (w_i + w_j)`.
    pub fn preference_probability(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(RankError::param(format!("item {i} cannot be compared with itself")));
        }
        let n = self.len();
        let (wi, wj) = match (self.0.get(i), self.0.get(j)) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(RankError::param(format!("items ({i}, {j}) out of range for n = {n}"))),
        };
        Ok(wi / (wi + wj))
    }
}

/// `(wins_ij + ε) / (wins_ij + wins_ji + 2ε)`; with `ε = 0` this is the plain
/// win fraction and requires both counts to be positive.
pub fn estimate_probability(wins_ij: u64, wins_ji: u64, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if epsilon == 0.0 && (wins_ij == 0 || wins_ji == 0) {
        return Err(RankError::DegenerateEstimate {
            edge: None,
            reason: format!("tally ({wins_ij}, {wins_ji}) with epsilon = 0 gives an infinite logit"),
        });
    }
    let a = wins_ij as f64 + epsilon;
    Ok(a / (a + wins_ji as f64 + epsilon))
}

/// `log(p) − log(1 − p)`, the log-odds.
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(RankError::DegenerateEstimate {
            edge: None,
            reason: format!("logit undefined at p = {p}"),
        });
    }
    Ok(p.ln() - (-p).ln_1p())
}

/// Log-odds of the regularized estimate, computed from the tallies directly so
/// that swapping the arguments negates the result exactly.
pub fn tally_logit(wins_ij: u64, wins_ji: u64, epsilon: f64) -> Result<f64> {
    estimate_probability(wins_ij, wins_ji, epsilon)?;
    Ok((wins_ij as f64 + epsilon).ln() - (wins_ji as f64 + epsilon).ln())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(RankError::param(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )))
    }
}

/// Result of [`EdgeObservations::record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recorded {
    pub edge: usize,
    /// The pair had no tally before this outcome.
    pub inserted: bool,
}

/// Win tallies per unordered pair.
///
/// Pairs are stored canonically as `(lo, hi)`; `wins[e] = [lo beat hi, hi beat lo]`.
/// Directed accessors swap as needed, so `y(i, j) = −y(j, i)` always holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeObservations {
    n: usize,
    pairs: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    wins: Vec<[u64; 2]>,
}

impl EdgeObservations {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ..Default::default()
        }
    }

    /// Zero tallies for every edge of `g`, in the graph's edge order.
    pub fn for_graph(g: &ComparisonGraph) -> Self {
        let mut obs = Self::new(g.node_count());
        for &(i, j) in g.edges() {
            obs.insert_pair(i, j);
        }
        obs
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        self.index.get(&canonical(i, j)).copied()
    }

    /// `(wins of i over j, wins of j over i)`.
    pub fn tally(&self, i: usize, j: usize) -> Option<(u64, u64)> {
        let e = self.edge_id(i, j)?;
        let [lo, hi] = self.wins[e];
        Some(if i < j { (lo, hi) } else { (hi, lo) })
    }

    /// Canonical `(wins lo→hi, wins hi→lo)` for edge `e`.
    pub fn edge_tally(&self, e: usize) -> (u64, u64) {
        let [a, b] = self.wins[e];
        (a, b)
    }

    /// Adds `wins_ij`/`wins_ji` to the pair's tally, creating it if needed.
    /// Returns `true` when the pair is new.
    pub fn add_tally(&mut self, i: usize, j: usize, wins_ij: u64, wins_ji: u64) -> Result<bool> {
        self.check_pair(i, j)?;
        let (e, inserted) = match self.edge_id(i, j) {
            Some(e) => (e, false),
            None => (self.insert_pair(i, j), true),
        };
        let slot = &mut self.wins[e];
        if i < j {
            slot[0] += wins_ij;
            slot[1] += wins_ji;
        } else {
            slot[1] += wins_ij;
            slot[0] += wins_ji;
        }
        Ok(inserted)
    }

    /// Records one comparison between `i` and `j`; `i_won` says who was preferred.
    /// Unknown pairs are inserted, which the return value flags.
    pub fn record(&mut self, i: usize, j: usize, i_won: bool) -> Result<Recorded> {
        let before = self.pairs.len();
        let (a, b) = if i_won { (1, 0) } else { (0, 1) };
        self.add_tally(i, j, a, b)?;
        let edge = self.edge_id(i, j).expect("pair was just tallied");
        Ok(Recorded {
            edge,
            inserted: self.pairs.len() > before,
        })
    }

    pub fn p_hat(&self, i: usize, j: usize, epsilon: f64) -> Result<f64> {
        let (a, b) = self.tally(i, j).ok_or_else(|| unknown_pair(i, j))?;
        estimate_probability(a, b, epsilon).map_err(|e| with_edge(e, i, j))
    }

    /// `y_ij = log p̂_ij − log p̂_ji`.
    pub fn y(&self, i: usize, j: usize, epsilon: f64) -> Result<f64> {
        let (a, b) = self.tally(i, j).ok_or_else(|| unknown_pair(i, j))?;
        tally_logit(a, b, epsilon).map_err(|e| with_edge(e, i, j))
    }

    /// `y` in canonical direction (lower index first) for edge `e`.
    pub fn edge_y(&self, e: usize, epsilon: f64) -> Result<f64> {
        let (i, j) = self.pairs[e];
        let [a, b] = self.wins[e];
        tally_logit(a, b, epsilon).map_err(|err| with_edge(err, i, j))
    }

    /// Total number of recorded comparisons, `C`.
    pub fn total_comparisons(&self) -> u64 {
        self.wins.iter().map(|[a, b]| a + b).sum()
    }

    /// `(total wins, total losses)` of item `i` over all of its pairs.
    pub fn wins_losses(&self, i: usize) -> (u64, u64) {
        self.pairs
            .iter()
            .zip(&self.wins)
            .fold((0, 0), |(w, l), (&(lo, hi), &[a, b])| {
                if lo == i {
                    (w + a, l + b)
                } else if hi == i {
                    (w + b, l + a)
                } else {
                    (w, l)
                }
            })
    }

    fn insert_pair(&mut self, i: usize, j: usize) -> usize {
        let key = canonical(i, j);
        let e = self.pairs.len();
        self.pairs.push(key);
        self.index.insert(key, e);
        self.wins.push([0, 0]);
        e
    }

    fn check_pair(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(RankError::param(format!("self-comparison on item {i}")));
        }
        // items may be appended on the fly
        self.n = self.n.max(i.max(j) + 1);
        Ok(())
    }
}

fn canonical(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

fn unknown_pair(i: usize, j: usize) -> RankError {
    RankError::param(format!("no observations for pair ({i}, {j})"))
}

fn with_edge(err: RankError, i: usize, j: usize) -> RankError {
    match err {
        RankError::DegenerateEstimate { reason, .. } => RankError::DegenerateEstimate {
            edge: Some((i, j)),
            reason,
        },
        other => other,
    }
}

/// Draws `k` independent BTL outcomes on every edge of `g`.
///
/// Edge `e` uses its own ChaCha stream `(seed, e)`, so the tally of an edge
/// does not depend on how many edges precede it or in which order edges are
/// simulated.
pub fn simulate_comparisons(g: &ComparisonGraph, w: &WeightVector, k: u64, seed: u64) -> Result<EdgeObservations> {
    if k == 0 {
        return Err(RankError::param("comparisons per edge must be >= 1"));
    }
    if w.len() != g.node_count() {
        return Err(RankError::param(format!(
            "weight vector has {} entries but the graph has {} nodes",
            w.len(),
            g.node_count()
        )));
    }
    let mut obs = EdgeObservations::for_graph(g);
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let p = w.preference_probability(i, j)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(e as u64);
        let wins = (0..k).filter(|_| rng.random::<f64>() < p).count() as u64;
        obs.wins[e] = [wins, k - wins];
    }
    Ok(obs)
}
