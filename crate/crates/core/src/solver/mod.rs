//! Randomized Kaczmarz on the Laplacian normal equations `L y = L Lᵀ v`.
//!
//! Row `i` of `A = L Lᵀ` is drawn with probability proportional to
//! `‖a_i‖² = d_i² + d_i` and the iterate is projected onto that row's
//! hyperplane. A projection touches only node `i` and its neighbors, and it
//! never changes the coordinate sum of the iterate within a connected
//! component, so the iterates stay in the affine space fixed by the
//! starting point.

mod stop;
mod tracking;

use std::collections::VecDeque;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::Serialize;

use crate::clock::Stopwatch;

use crate::btl::{EdgeObservations, WeightVector};
use crate::error::{RankError, Result};
use crate::graph::{ComparisonGraph, Components};

pub use stop::{StopReason, StoppingRule};
pub use tracking::{tracking_step, EventNode, TrackingEvent, TrackingUpdate};

use stop::StopMonitor;

/// `A x = b` with `A` the graph Laplacian and `b = L y`, plus the row
/// sampling distribution.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    graph: ComparisonGraph,
    /// Logit per graph edge in canonical direction (lower index first).
    y: Vec<f64>,
    rhs: Vec<f64>,
    row_norm_sq: Vec<f64>,
    probabilities: Vec<f64>,
    sampler: Option<WeightedAliasIndex<f64>>,
    components: Components,
}

impl LinearSystem {
    /// Assembles the system from tallies regularized by `epsilon`. Fails on the
    /// first edge whose estimate is degenerate.
    pub fn build(g: &ComparisonGraph, obs: &EdgeObservations, epsilon: f64) -> Result<Self> {
        let y = g
            .edges()
            .iter()
            .map(|&(i, j)| obs.y(i, j, epsilon))
            .collect::<Result<Vec<_>>>()?;
        Self::from_logits(g, y)
    }

    /// Assembles the system from explicit canonical-direction logits, one per
    /// edge of `g` in edge order.
    pub fn from_logits(g: &ComparisonGraph, y: Vec<f64>) -> Result<Self> {
        if y.len() != g.edge_count() {
            return Err(RankError::param(format!(
                "{} logits for {} edges",
                y.len(),
                g.edge_count()
            )));
        }
        if let Some(e) = y.iter().position(|v| !v.is_finite()) {
            return Err(RankError::DegenerateEstimate {
                edge: Some(g.edges()[e]),
                reason: format!("logit {} is not finite", y[e]),
            });
        }
        let mut sys = Self {
            graph: g.clone(),
            y,
            rhs: Vec::new(),
            row_norm_sq: Vec::new(),
            probabilities: Vec::new(),
            sampler: None,
            components: g.components(),
        };
        sys.rebuild_rhs();
        sys.rebuild_sampling()?;
        if sys.components.count > 1 {
            log::warn!(
                "comparison graph has {} components; each converges to its own offset",
                sys.components.count
            );
        }
        Ok(sys)
    }

    pub fn graph(&self) -> &ComparisonGraph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn logits(&self) -> &[f64] {
        &self.y
    }

    /// `b = L y`, i.e. `b_i = Σ_{j ∈ N(i)} y_ij`.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Row sampling probabilities `p_i = ‖a_i‖² / Σ_j ‖a_j‖²`.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn is_connected(&self) -> bool {
        self.components.count <= 1
    }

    /// Nodes without any comparison. They are never sampled.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.graph.degree(i) == 0).collect()
    }

    /// `b_i − ⟨a_i, x⟩`.
    pub fn residual(&self, i: usize, x: &[f64]) -> f64 {
        self.rhs[i] - self.graph.laplacian().row_dot(i, x)
    }

    /// Expected entries touched per step, `Σ_i p_i (d_i + 1)`.
    pub fn expected_touched_per_step(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| p * (self.graph.degree(i) + 1) as f64)
            .sum()
    }

    /// Breadth-first initialization: `x_ref = 0` and a child `j` reached from
    /// `i` gets `x_j = x_i − y_ij`, telescoping logits along shortest paths.
    /// Nodes outside the reference's component stay at 0.
    pub fn warm_start(&self, reference: usize) -> Result<Vec<f64>> {
        let n = self.node_count();
        if reference >= n {
            return Err(RankError::param(format!("reference node {reference} out of range")));
        }
        let mut x = vec![0.0; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([reference]);
        seen[reference] = true;
        while let Some(u) = queue.pop_front() {
            for nb in self.graph.neighbors(u) {
                if !seen[nb.node] {
                    seen[nb.node] = true;
                    x[nb.node] = x[u] - self.directed_logit(nb.edge, u);
                    queue.push_back(nb.node);
                }
            }
        }
        Ok(x)
    }

    /// Highest-degree node, lowest index on ties.
    pub fn default_reference(&self) -> usize {
        (0..self.node_count())
            .max_by_key(|&i| (self.graph.degree(i), std::cmp::Reverse(i)))
            .unwrap_or(0)
    }

    /// Replaces the logit of `{i, j}` and patches `b` in `O(1)`.
    pub fn set_logit(&mut self, i: usize, j: usize, y_ij: f64) -> Result<()> {
        if !y_ij.is_finite() {
            return Err(RankError::DegenerateEstimate {
                edge: Some((i, j)),
                reason: format!("logit {y_ij} is not finite"),
            });
        }
        let e = self
            .graph
            .edge_index(i, j)
            .ok_or_else(|| RankError::param(format!("no edge ({i}, {j})")))?;
        let (lo, hi) = self.graph.edges()[e];
        let canonical = if i == lo { y_ij } else { -y_ij };
        let delta = canonical - self.y[e];
        self.y[e] = canonical;
        self.rhs[lo] += delta;
        self.rhs[hi] -= delta;
        Ok(())
    }

    /// Adds edge `{i, j}` with logit 0, growing the node set if needed.
    /// Degrees change, so the sampler is rebuilt.
    pub fn insert_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        while self.graph.node_count() <= i.max(j) {
            self.graph.add_node();
            self.rhs.push(0.0);
        }
        let (_, inserted) = self.graph.add_edge(i, j)?;
        if inserted {
            self.y.push(0.0);
            self.components = self.graph.components();
            self.rebuild_sampling()?;
        }
        Ok(inserted)
    }

    fn directed_logit(&self, edge: usize, from: usize) -> f64 {
        if self.graph.edges()[edge].0 == from {
            self.y[edge]
        } else {
            -self.y[edge]
        }
    }

    fn rebuild_rhs(&mut self) {
        self.rhs = vec![0.0; self.graph.node_count()];
        for (&(lo, hi), &y) in self.graph.edges().iter().zip(&self.y) {
            self.rhs[lo] += y;
            self.rhs[hi] -= y;
        }
    }

    fn rebuild_sampling(&mut self) -> Result<()> {
        let lap = self.graph.laplacian();
        self.row_norm_sq = (0..self.graph.node_count()).map(|i| lap.row_norm_sq(i)).collect();
        let total: f64 = self.row_norm_sq.iter().sum();
        if total == 0.0 {
            self.probabilities = vec![0.0; self.row_norm_sq.len()];
            self.sampler = None;
            return Ok(());
        }
        self.probabilities = self.row_norm_sq.iter().map(|r| r / total).collect();
        self.sampler = Some(
            WeightedAliasIndex::new(self.row_norm_sq.clone())
                .map_err(|e| RankError::Numeric(format!("sampling table: {e}")))?,
        );
        Ok(())
    }

    /// Moves `x` a fraction `relax` of the way onto row `i`'s hyperplane.
    /// Returns the number of entries touched.
    fn project(&self, x: &mut [f64], i: usize, relax: f64) -> usize {
        let nbrs = self.graph.neighbors(i);
        if nbrs.is_empty() {
            return 0;
        }
        let r = self.residual(i, x);
        let s = relax * r / self.row_norm_sq[i];
        x[i] += s * nbrs.len() as f64;
        for nb in nbrs {
            x[nb.node] -= s;
        }
        nbrs.len() + 1
    }
}

/// Iterate plus everything needed to continue from it.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub iteration: u64,
    /// Running count of iterate entries touched by projections.
    pub touched: u64,
    rng: ChaCha8Rng,
}

impl SolverState {
    pub fn new(init: Vec<f64>, seed: u64) -> Self {
        Self {
            x: init,
            iteration: 0,
            touched: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// One randomized Kaczmarz step. Returns the projected row, or `None` when
/// the system has no equations.
pub fn kaczmarz_step(sys: &LinearSystem, state: &mut SolverState) -> Option<usize> {
    let i = sys.sampler.as_ref()?.sample(&mut state.rng);
    kaczmarz_step_at(sys, state, i);
    Some(i)
}

/// Deterministic step on row `i`.
pub fn kaczmarz_step_at(sys: &LinearSystem, state: &mut SolverState, i: usize) {
    let touched = sys.project(&mut state.x, i, 1.0);
    state.touched += touched as u64;
    state.iteration += 1;
}

/// Log-weights to weights, centered so the geometric mean is 1.
pub fn weights_from_iterate(x: &[f64]) -> Result<WeightVector> {
    if x.is_empty() {
        return WeightVector::new(Vec::new());
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(RankError::Numeric(format!("iterate has non-finite entry {v}")));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    WeightVector::new(x.iter().map(|v| (v - mean).exp()).collect())
        .map_err(|_| RankError::Numeric("log-weight spread too large to exponentiate".into()))
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub stop: StoppingRule,
    pub max_iters: u64,
    pub seed: u64,
    /// Required by the rank-based stopping rules.
    pub ground_truth: Option<WeightVector>,
    /// When set, `‖x − x*‖` is recorded every `trace_every` iterations.
    pub reference_solution: Option<Vec<f64>>,
    pub trace_every: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            stop: StoppingRule::default(),
            max_iters: 200_000,
            seed: 0,
            ground_truth: None,
            reference_solution: None,
            trace_every: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: u64,
    pub stop: StopReason,
    #[serde(skip)]
    pub elapsed: Duration,
    pub touched_per_iteration: f64,
    /// `(iteration, ‖x − x*‖)` samples, when a reference solution was given.
    pub error_trace: Vec<(u64, f64)>,
    pub components: usize,
    pub isolated: Vec<usize>,
}

impl SolveReport {
    pub fn weights(&self) -> Result<WeightVector> {
        weights_from_iterate(&self.x)
    }
}

/// Runs Kaczmarz steps from `init` until the stopping rule fires or
/// `max_iters` is reached.
pub fn solve(sys: &LinearSystem, init: Vec<f64>, opts: &SolveOptions) -> Result<SolveReport> {
    let n = sys.node_count();
    if init.len() != n {
        return Err(RankError::param(format!(
            "initial iterate has {} entries, expected {n}",
            init.len()
        )));
    }
    if opts.max_iters == 0 {
        return Err(RankError::param("max_iters must be >= 1"));
    }
    if let Some(r) = &opts.reference_solution {
        if r.len() != n {
            return Err(RankError::param("reference solution length mismatch"));
        }
    }
    let start = Stopwatch::start();
    let mut monitor = StopMonitor::new(&opts.stop, opts.ground_truth.as_ref(), &init)?;
    let mut state = SolverState::new(init, opts.seed);
    let mut trace = Vec::new();
    let record = |state: &SolverState, trace: &mut Vec<(u64, f64)>| {
        if let Some(r) = &opts.reference_solution {
            let err = state.x.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            trace.push((state.iteration, err));
        }
    };
    if opts.trace_every > 0 {
        record(&state, &mut trace);
    }

    let stop = if sys.sampler.is_none() {
        StopReason::NoEquations
    } else {
        loop {
            let Some(i) = kaczmarz_step(sys, &mut state) else {
                break StopReason::NoEquations;
            };
            if opts.trace_every > 0 && state.iteration.is_multiple_of(opts.trace_every) {
                record(&state, &mut trace);
            }
            if let Some(reason) = monitor.observe(&state.x, i, sys.graph()) {
                break reason;
            }
            if state.iteration >= opts.max_iters {
                break StopReason::MaxIterations;
            }
        }
    };
    let touched_per_iteration = if state.iteration > 0 {
        state.touched as f64 / state.iteration as f64
    } else {
        0.0
    };
    Ok(SolveReport {
        x: state.x,
        iterations: state.iteration,
        stop,
        elapsed: start.elapsed(),
        touched_per_iteration,
        error_trace: trace,
        components: sys.components.count,
        isolated: sys.isolated_nodes(),
    })
}
