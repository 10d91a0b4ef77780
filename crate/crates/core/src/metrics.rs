//! Error metrics for weight estimates and the orderings they induce.

use crate::btl::EdgeObservations;
use crate::error::{RankError, Result};

/// Rank positions per item, 1 = best. Ties in score go to the lower index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankOrder {
    positions: Vec<usize>,
}

impl RankOrder {
    /// Orders items by descending score.
    pub fn from_scores(scores: &[f64]) -> Self {
        let order = ranked_items(scores);
        let mut positions = vec![0; scores.len()];
        for (pos, &item) in order.iter().enumerate() {
            positions[item] = pos + 1;
        }
        Self { positions }
    }

    /// Builds from explicit positions, which must be a permutation of `1..=n`.
    pub fn from_positions(positions: Vec<usize>) -> Result<Self> {
        let n = positions.len();
        let mut seen = vec![false; n];
        for &p in &positions {
            if p == 0 || p > n || std::mem::replace(&mut seen[p - 1], true) {
                return Err(RankError::param(format!("positions are not a permutation of 1..={n}")));
            }
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, item: usize) -> usize {
        self.positions[item]
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Items listed best first.
    pub fn items(&self) -> Vec<usize> {
        let mut items = vec![0; self.positions.len()];
        for (item, &p) in self.positions.iter().enumerate() {
            items[p - 1] = item;
        }
        items
    }
}

/// Item indices sorted best first (descending score, ascending index on ties).
pub fn ranked_items(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(RankError::param(format!("length mismatch: {a} vs {b}")))
    }
}

/// `‖w − c*·ŵ‖ / ‖w‖` with `c* = ⟨w, ŵ⟩ / ‖ŵ‖²`, the scale that best aligns
/// the estimate with the truth.
pub fn normalized_weight_error(w_true: &[f64], w_est: &[f64]) -> Result<f64> {
    check_lengths(w_true.len(), w_est.len())?;
    let dot: f64 = w_true.iter().zip(w_est).map(|(a, b)| a * b).sum();
    let est_sq: f64 = w_est.iter().map(|b| b * b).sum();
    let true_sq: f64 = w_true.iter().map(|a| a * a).sum();
    if est_sq == 0.0 || true_sq == 0.0 {
        return Err(RankError::param("weight vectors must be nonzero"));
    }
    let c = dot / est_sq;
    let resid: f64 = w_true.iter().zip(w_est).map(|(a, b)| (a - c * b).powi(2)).sum();
    Ok((resid / true_sq).sqrt())
}

/// Weighted discordance
/// `√( Σ_{discordant i<j} (w_i − w_j)² / (2n‖w‖²) )`, where a pair is
/// discordant when the true weights and the estimated positions disagree.
///
/// Direct `O(n²)` evaluation; see [`d_w_fast`] for hot loops.
pub fn d_w(w_true: &[f64], order: &RankOrder) -> Result<f64> {
    check_lengths(w_true.len(), order.len())?;
    let n = w_true.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dw = w_true[i] - w_true[j];
            let dpos = order.position(i) as f64 - order.position(j) as f64;
            // higher weight should sit at the smaller position number
            if dw * dpos > 0.0 {
                sum += dw * dw;
            }
        }
    }
    Ok(d_w_normalize(sum, w_true))
}

/// Same value as [`d_w`] in `O(n log n)`: items are swept in estimated
/// order while a Fenwick tree over the true-weight ranks accumulates count,
/// `Σw` and `Σw²` of everything already placed above.
pub fn d_w_fast(w_true: &[f64], order: &RankOrder) -> Result<f64> {
    check_lengths(w_true.len(), order.len())?;
    let n = w_true.len();
    // rank of each item's weight among the distinct values, ascending
    let mut by_weight: Vec<usize> = (0..n).collect();
    by_weight.sort_by(|&a, &b| w_true[a].total_cmp(&w_true[b]));
    let mut slot = vec![0usize; n];
    let mut distinct = 0;
    for (k, &item) in by_weight.iter().enumerate() {
        if k > 0 && w_true[item] != w_true[by_weight[k - 1]] {
            distinct += 1;
        }
        slot[item] = distinct;
    }
    let mut tree = Fenwick::new(distinct + 1);
    let mut sum = 0.0;
    for item in order.items() {
        let w = w_true[item];
        // items placed above with strictly smaller weight are discordant
        let [cnt, s1, s2] = tree.prefix(slot[item]);
        sum += cnt * w * w - 2.0 * w * s1 + s2;
        tree.add(slot[item], [1.0, w, w * w]);
    }
    Ok(d_w_normalize(sum.max(0.0), w_true))
}

fn d_w_normalize(sum: f64, w_true: &[f64]) -> f64 {
    let n = w_true.len() as f64;
    let norm_sq: f64 = w_true.iter().map(|w| w * w).sum();
    if n == 0.0 || norm_sq == 0.0 {
        return 0.0;
    }
    (sum / (2.0 * n * norm_sq)).sqrt()
}

struct Fenwick {
    nodes: Vec<[f64; 3]>,
}

impl Fenwick {
    fn new(len: usize) -> Self {
        Self {
            nodes: vec![[0.0; 3]; len + 1],
        }
    }

    fn add(&mut self, idx: usize, v: [f64; 3]) {
        let mut i = idx + 1;
        while i < self.nodes.len() {
            for (a, b) in self.nodes[i].iter_mut().zip(v) {
                *a += b;
            }
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over slots `< end`.
    fn prefix(&self, end: usize) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut i = end;
        while i > 0 {
            for (a, b) in acc.iter_mut().zip(self.nodes[i]) {
                *a += b;
            }
            i -= i & i.wrapping_neg();
        }
        acc
    }
}

/// True iff every item in the true top `k` appears in the estimated top `m`.
pub fn top_k_in_m(truth: &RankOrder, est: &RankOrder, k: usize, m: usize) -> Result<bool> {
    check_lengths(truth.len(), est.len())?;
    let n = truth.len();
    if !(1 <= k && k <= m && m <= n) {
        return Err(RankError::param(format!(
            "need 1 <= K <= M <= n, got K={k} M={m} n={n}"
        )));
    }
    Ok((0..n).all(|item| truth.position(item) > k || est.position(item) <= m))
}

/// Total wins over total losses. Infinite when the item never lost.
pub fn win_ratio(obs: &EdgeObservations, item: usize) -> Result<f64> {
    let (wins, losses) = obs.wins_losses(item);
    if wins + losses == 0 {
        return Err(RankError::param(format!("item {item} has no recorded comparisons")));
    }
    Ok(if losses == 0 {
        f64::INFINITY
    } else {
        wins as f64 / losses as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn order_ties_break_by_index() {
        let o = RankOrder::from_scores(&[1.0, 3.0, 3.0, 0.5]);
        assert_eq!(o.positions(), &[3, 1, 2, 4]);
        assert_eq!(o.items(), vec![1, 2, 0, 3]);
        assert!(RankOrder::from_positions(vec![1, 1]).is_err());
        assert!(RankOrder::from_positions(vec![2, 3]).is_err());
    }

    #[test]
    fn nwe_cases() {
        let w = [1.0, 2.0, 5.0];
        assert_eq!(normalized_weight_error(&w, &w).unwrap(), 0.0);
        let scaled: Vec<f64> = w.iter().map(|x| 7.0 * x).collect();
        assert!(normalized_weight_error(&w, &scaled).unwrap() < 1e-15);
        assert!((normalized_weight_error(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.6).abs() < 1e-15);
        assert!(normalized_weight_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nwe_matches_scalar_minimization() {
        // golden-section search over c as an independent check of the closed form
        let w = [1.0, 2.0, 3.5, 0.7];
        let e = [1.3, 1.9, 2.5, 1.0];
        let f = |c: f64| w.iter().zip(&e).map(|(a, b)| (a - c * b).powi(2)).sum::<f64>();
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let (c1, c2) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if f(c1) < f(c2) {
                hi = c2;
            } else {
                lo = c1;
            }
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        let oracle = f(0.5 * (lo + hi)).sqrt() / norm;
        assert!((normalized_weight_error(&w, &e).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn d_w_cases() {
        let w = [1.0, 2.0, 3.0];
        let truth = RankOrder::from_scores(&w);
        assert_eq!(d_w(&w, &truth).unwrap(), 0.0);

        let w2 = [1.0, 2.0];
        let rev = RankOrder::from_scores(&[2.0, 1.0]);
        let expect = ((1.0f64 - 2.0).powi(2) / (4.0 * 5.0)).sqrt();
        assert!((d_w(&w2, &rev).unwrap() - expect).abs() < 1e-15);

        // swap the items weighted 2 and 3
        let swapped = RankOrder::from_scores(&[1.0, 3.0, 2.0]);
        let expect = (1.0f64 / (2.0 * 3.0 * 14.0)).sqrt();
        assert!((d_w(&w, &swapped).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.1091).abs() < 1e-4);
    }

    #[test]
    fn top_k_cases() {
        let truth = RankOrder::from_scores(&[4.0, 3.0, 2.0, 1.0]);
        assert!(top_k_in_m(&truth, &truth, 2, 2).unwrap());
        let est = RankOrder::from_scores(&[0.0, 3.0, 2.0, 1.0]);
        assert!(top_k_in_m(&truth, &est, 4, 4).unwrap());
        assert!(!top_k_in_m(&truth, &est, 1, 3).unwrap());
        assert!(top_k_in_m(&truth, &est, 1, 4).unwrap());
        assert!(top_k_in_m(&truth, &est, 3, 2).is_err());
        assert!(top_k_in_m(&truth, &est, 0, 2).is_err());
    }

    #[test]
    fn win_ratio_cases() {
        let mut obs = EdgeObservations::new(4);
        obs.add_tally(0, 1, 3, 1).unwrap();
        obs.add_tally(2, 3, 0, 5).unwrap();
        assert_eq!(win_ratio(&obs, 0).unwrap(), 3.0);
        assert_eq!(win_ratio(&obs, 2).unwrap(), 0.0);
        assert_eq!(win_ratio(&obs, 3).unwrap(), f64::INFINITY);
        obs.add_tally(0, 2, 0, 2).unwrap();
        assert_eq!(win_ratio(&obs, 0).unwrap(), 1.0);
        let empty = EdgeObservations::new(2);
        assert!(win_ratio(&empty, 0).is_err());
    }

    fn weights_and_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(prop_oneof![0.1f64..10.0, Just(1.0), Just(2.0)], n),
                prop::collection::vec(prop_oneof![-5.0f64..5.0, Just(0.0)], n),
            )
        })
    }

    proptest! {
        #[test]
        fn d_w_fast_matches_direct((w, s) in weights_and_scores()) {
            let order = RankOrder::from_scores(&s);
            let a = d_w(&w, &order).unwrap();
            let b = d_w_fast(&w, &order).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a), "{} vs {}", a, b);
        }

        #[test]
        fn d_w_bounded_by_weight_error((w, s) in weights_and_scores()) {
            let est: Vec<f64> = s.iter().map(|x| x.exp()).collect();
            let order = RankOrder::from_scores(&est);
            let dw = d_w(&w, &order).unwrap();
            let nwe = normalized_weight_error(&w, &est).unwrap();
            prop_assert!(dw <= nwe + 1e-12, "{} > {}", dw, nwe);
        }

        #[test]
        fn scale_invariance((w, s) in weights_and_scores(), c in prop_oneof![Just(0.1f64), Just(10.0)]) {
            let order = RankOrder::from_scores(&s);
            let scaled: Vec<f64> = w.iter().map(|x| c * x).collect();
            let a = d_w(&w, &order).unwrap();
            prop_assert!((a - d_w(&scaled, &order).unwrap()).abs() < 1e-12);
            let est: Vec<f64> = s.iter().map(|x| x.exp()).collect();
            let est_scaled: Vec<f64> = est.iter().map(|x| c * x).collect();
            let e1 = normalized_weight_error(&w, &est).unwrap();
            prop_assert!((e1 - normalized_weight_error(&scaled, &est).unwrap()).abs() < 1e-12);
            prop_assert!((e1 - normalized_weight_error(&w, &est_scaled).unwrap()).abs() < 1e-12);
        }
    }
}
