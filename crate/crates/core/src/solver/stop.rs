use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::btl::WeightVector;
use crate::error::{RankError, Result};
use crate::graph::ComparisonGraph;
use crate::metrics::{d_w_fast, RankOrder};

/// When to stop iterating. `max_iters` always applies on top of the rule.
#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule {
    /// Only the iteration cap.
    MaxIterations,
    /// `‖ŵ_n − ŵ_{n−window}‖ / ‖ŵ_n‖ ≤ tol`, on weights rather than log-weights.
    RelativeChange { window: usize, tol: f64 },
    /// `|D_w(σ_n) − D_w(σ_{n−window})| ≤ tol`. Needs ground truth.
    RankingStable { window: usize, tol: f64 },
    /// The true top `k` sit inside the estimated top `m`. Needs ground truth.
    TopKInM { k: usize, m: usize },
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule::RelativeChange { window: 500, tol: 1e-7 }
    }
}

impl StoppingRule {
    pub fn needs_ground_truth(&self) -> bool {
        matches!(self, StoppingRule::RankingStable { .. } | StoppingRule::TopKInM { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    RelativeChange,
    RankingStable,
    TopKInM,
    MaxIterations,
    NoEquations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::RelativeChange => "relative-change",
            StopReason::RankingStable => "ranking-stable",
            StopReason::TopKInM => "top-k-in-m",
            StopReason::MaxIterations => "max-iters",
            StopReason::NoEquations => "no-equations",
        })
    }
}

pub(super) enum StopMonitor {
    Never,
    Relative(RelativeChange),
    Ranking(RankingStable),
    TopK(TopK),
}

impl StopMonitor {
    pub(super) fn new(rule: &StoppingRule, truth: Option<&WeightVector>, init: &[f64]) -> Result<Self> {
        let truth = match (rule.needs_ground_truth(), truth) {
            (true, None) => {
                return Err(RankError::Config(format!(
                    "stopping rule {rule:?} needs ground-truth weights"
                )))
            }
            (true, Some(t)) if t.len() != init.len() => {
                return Err(RankError::Config(
                    "ground truth length does not match the system".into(),
                ))
            }
            (_, t) => t,
        };
        let check_window = |window: usize, tol: f64| {
            if window == 0 || tol.is_nan() || tol < 0.0 {
                Err(RankError::Config(format!(
                    "window must be >= 1 and tol >= 0, got {window}, {tol}"
                )))
            } else {
                Ok(())
            }
        };
        Ok(match *rule {
            StoppingRule::MaxIterations => StopMonitor::Never,
            StoppingRule::RelativeChange { window, tol } => {
                check_window(window, tol)?;
                StopMonitor::Relative(RelativeChange::new(window, tol, init))
            }
            StoppingRule::RankingStable { window, tol } => {
                check_window(window, tol)?;
                let truth = truth.expect("checked above").as_slice().to_vec();
                StopMonitor::Ranking(RankingStable::new(window, tol, truth, init))
            }
            StoppingRule::TopKInM { k, m } => {
                let n = init.len();
                if !(1 <= k && k <= m && m <= n) {
                    return Err(RankError::Config(format!(
                        "need 1 <= K <= M <= n, got K={k} M={m} n={n}"
                    )));
                }
                let order = RankOrder::from_scores(truth.expect("checked above").as_slice());
                StopMonitor::TopK(TopK {
                    top: order.items()[..k].to_vec(),
                    m,
                })
            }
        })
    }

    /// Called after each step on row `row`; only `row` and its neighbors moved.
    pub(super) fn observe(&mut self, x: &[f64], row: usize, g: &ComparisonGraph) -> Option<StopReason> {
        match self {
            StopMonitor::Never => None,
            StopMonitor::Relative(m) => m.observe(x, row, g).then_some(StopReason::RelativeChange),
            StopMonitor::Ranking(m) => m.observe(x).then_some(StopReason::RankingStable),
            StopMonitor::TopK(m) => m.satisfied(x).then_some(StopReason::TopKInM),
        }
    }
}

/// Tracks `‖ŵ_n − ŵ_{n−window}‖²` and `‖ŵ_n‖²` incrementally from the
/// entries each step touches, so a check costs `O(degree)` instead of `O(n)`.
/// The lagged vector is advanced by replaying a log of per-step changes.
pub(super) struct RelativeChange {
    window: usize,
    tol: f64,
    offset: f64,
    now: Vec<f64>,
    lag: Vec<f64>,
    log: VecDeque<Vec<(usize, f64)>>,
    diff_sq: f64,
    now_sq: f64,
    steps: u64,
}

impl RelativeChange {
    fn new(window: usize, tol: f64, init: &[f64]) -> Self {
        // the coordinate sum is invariant, so a fixed offset keeps exp() in range
        let offset = if init.is_empty() {
            0.0
        } else {
            init.iter().sum::<f64>() / init.len() as f64
        };
        let now: Vec<f64> = init.iter().map(|v| (v - offset).exp()).collect();
        let now_sq = now.iter().map(|w| w * w).sum();
        Self {
            window,
            tol,
            offset,
            lag: now.clone(),
            now,
            log: VecDeque::with_capacity(window + 1),
            diff_sq: 0.0,
            now_sq,
            steps: 0,
        }
    }

    fn observe(&mut self, x: &[f64], row: usize, g: &ComparisonGraph) -> bool {
        let touched = std::iter::once(row).chain(g.neighbors(row).iter().map(|nb| nb.node));
        let mut changes = Vec::with_capacity(g.degree(row) + 1);
        for k in touched {
            let new = (x[k] - self.offset).exp();
            let old = self.now[k];
            let lag = self.lag[k];
            self.diff_sq += (new - lag).powi(2) - (old - lag).powi(2);
            self.now_sq += new * new - old * old;
            self.now[k] = new;
            changes.push((k, new));
        }
        self.log.push_back(changes);
        if self.log.len() > self.window {
            for (k, val) in self.log.pop_front().expect("log is non-empty") {
                let cur = self.now[k];
                self.diff_sq += (cur - val).powi(2) - (cur - self.lag[k]).powi(2);
                self.lag[k] = val;
            }
        }
        self.steps += 1;
        if self.steps.is_multiple_of(self.window as u64) {
            self.refresh();
        }
        self.steps >= self.window as u64 && self.diff_sq.max(0.0).sqrt() <= self.tol * self.now_sq.sqrt()
    }

    /// Recomputes both sums exactly to shed accumulated rounding.
    fn refresh(&mut self) {
        self.now_sq = self.now.iter().map(|w| w * w).sum();
        self.diff_sq = self.now.iter().zip(&self.lag).map(|(a, b)| (a - b).powi(2)).sum();
    }
}

pub(super) struct RankingStable {
    window: usize,
    tol: f64,
    truth: Vec<f64>,
    history: VecDeque<f64>,
}

impl RankingStable {
    fn new(window: usize, tol: f64, truth: Vec<f64>, init: &[f64]) -> Self {
        let d0 = d_w_fast(&truth, &RankOrder::from_scores(init)).expect("lengths checked");
        let mut history = VecDeque::with_capacity(window + 2);
        history.push_back(d0);
        Self {
            window,
            tol,
            truth,
            history,
        }
    }

    fn observe(&mut self, x: &[f64]) -> bool {
        let d = d_w_fast(&self.truth, &RankOrder::from_scores(x)).expect("lengths checked");
        self.history.push_back(d);
        if self.history.len() <= self.window {
            return false;
        }
        if self.history.len() > self.window + 1 {
            self.history.pop_front();
        }
        (d - self.history[0]).abs() <= self.tol
    }
}

pub(super) struct TopK {
    top: Vec<usize>,
    m: usize,
}

impl TopK {
    fn satisfied(&self, x: &[f64]) -> bool {
        // the true-top item standing lowest in the estimate decides
        let ranks_below = |a: usize, b: usize| x[a] < x[b] || (x[a] == x[b] && a > b);
        let worst = self
            .top
            .iter()
            .copied()
            .reduce(|a, b| if ranks_below(b, a) { b } else { a })
            .expect("k >= 1");
        let position = 1 + (0..x.len()).filter(|&j| ranks_below(worst, j)).count();
        position <= self.m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::top_k_in_m;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ground_truth_rules_need_truth() {
        let rule = StoppingRule::TopKInM { k: 1, m: 2 };
        assert!(matches!(
            StopMonitor::new(&rule, None, &[0.0; 3]),
            Err(RankError::Config(_))
        ));
        let rule = StoppingRule::RankingStable { window: 5, tol: 0.0 };
        assert!(StopMonitor::new(&rule, None, &[0.0; 3]).is_err());
        let w = WeightVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(StopMonitor::new(&rule, Some(&w), &[0.0; 3]).is_ok());
        let bad = StoppingRule::TopKInM { k: 3, m: 2 };
        assert!(StopMonitor::new(&bad, Some(&w), &[0.0; 3]).is_err());
    }

    #[test]
    fn top_k_shortcut_matches_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 30;
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let truth_order = RankOrder::from_scores(&truth);
        for _ in 0..200 {
            let x: Vec<f64> = (0..n).map(|_| (rng.random_range(0..6) as f64) * 0.5).collect();
            let est = RankOrder::from_scores(&x);
            for (k, m) in [(1, 1), (3, 7), (5, 10), (10, 30)] {
                let top = TopK {
                    top: truth_order.items()[..k].to_vec(),
                    m,
                };
                assert_eq!(top.satisfied(&x), top_k_in_m(&truth_order, &est, k, m).unwrap());
            }
        }
    }

    #[test]
    fn relative_change_incremental_matches_direct() {
        let g = crate::graph::erdos_renyi(20, 0.3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let window = 7;
        let mut mon = RelativeChange::new(window, 0.0, &x);
        let mut snaps = vec![x.clone()];
        for _ in 0..100 {
            let row = rng.random_range(0..20);
            x[row] += rng.random_range(-0.1..0.1);
            for nb in g.neighbors(row) {
                x[nb.node] += rng.random_range(-0.1..0.1);
            }
            mon.observe(&x, row, &g);
            snaps.push(x.clone());
            let lag_idx = snaps.len().saturating_sub(window + 1);
            let w = |v: &[f64]| v.iter().map(|t| (t - mon.offset).exp()).collect::<Vec<_>>();
            let (now, lag) = (w(&x), w(&snaps[lag_idx]));
            let direct: f64 = now.iter().zip(&lag).map(|(a, b)| (a - b).powi(2)).sum();
            assert!((mon.diff_sq - direct).abs() < 1e-10, "{} vs {direct}", mon.diff_sq);
        }
    }
}
