use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::simulate::connected_erdos_renyi;
use crate::btl::{simulate_comparisons, WeightVector};
use crate::error::{RankError, Result};
use crate::metrics::{d_w_fast, RankOrder};
use crate::solver::{tracking_step, EventNode, LinearSystem, SolverState, TrackingEvent};

/// A drifting-weights scenario: the true log-weights take a Gaussian random
/// walk step of size `sigma` on every event, and each event is one
/// comparison on a uniformly chosen edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackConfig {
    pub n: usize,
    pub p: f64,
    /// Comparisons per edge seen before tracking starts.
    pub k: u64,
    pub events: u64,
    pub c: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Emit a trace row every this many events.
    pub report_every: u64,
    #[serde(skip)]
    pub node: EventNode,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 0.2,
            k: 10,
            events: 50_000,
            c: 0.05,
            sigma: 0.0,
            epsilon: 1.0,
            seed: 0,
            report_every: 500,
            node: EventNode::Lower,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RankError::Config(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("edge probability must lie in (0, 1], got {}", self.p));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return bad(format!("step size c must lie in [0, 1], got {}", self.c));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.report_every == 0 {
            return bad("report interval must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub event: u64,
    pub d_w: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackTrace {
    pub config: TrackConfig,
    pub points: Vec<TracePoint>,
    /// Mean `D_w` over the second half of the trace.
    pub steady_state: f64,
}

pub fn run_tracking(cfg: &TrackConfig) -> Result<TrackTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (g, _) = connected_erdos_renyi(cfg.n, cfg.p, &mut rng)?;
    let mut log_w = WeightVector::geometric_ladder(cfg.n).log_weights();
    let mut obs = simulate_comparisons(&g, &WeightVector::from_log(&log_w)?, cfg.k, rng.random())?;
    let mut sys = LinearSystem::build(&g, &obs, cfg.epsilon)?;
    let init = sys.warm_start(sys.default_reference())?;
    let mut state = SolverState::new(init, rng.random());
    let step = Normal::new(0.0, cfg.sigma).map_err(|e| RankError::param(e.to_string()))?;
    let edges = g.edges().to_vec();

    let d_w_now = |log_w: &[f64], x: &[f64]| -> Result<f64> {
        let w: Vec<f64> = log_w.iter().map(|v| v.exp()).collect();
        d_w_fast(&w, &RankOrder::from_scores(x))
    };
    let mut points = vec![TracePoint {
        event: 0,
        d_w: d_w_now(&log_w, &state.x)?,
    }];
    for event in 1..=cfg.events {
        if cfg.sigma > 0.0 {
            for v in log_w.iter_mut() {
                *v += step.sample(&mut rng);
            }
        }
        let (i, j) = edges[rng.random_range(0..edges.len())];
        let p_ij = 1.0 / (1.0 + (log_w[j] - log_w[i]).exp());
        let i_won = rng.random_bool(p_ij);
        tracking_step(
            &mut sys,
            &mut obs,
            &mut state,
            cfg.c,
            TrackingEvent { i, j, i_won },
            cfg.epsilon,
            cfg.node,
        )?;
        if event % cfg.report_every == 0 {
            points.push(TracePoint {
                event,
                d_w: d_w_now(&log_w, &state.x)?,
            });
        }
    }
    let tail = &points[points.len() / 2..];
    let steady_state = tail.iter().map(|p| p.d_w).sum::<f64>() / tail.len() as f64;
    Ok(TrackTrace {
        config: cfg.clone(),
        points,
        steady_state,
    })
}

impl TrackTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| RankError::io("<output>", e);
        let c = &self.config;
        writeln!(
            out,
            "# rkrank track n={} p={} k={} events={} c={} sigma={} epsilon={} seed={}",
            c.n, c.p, c.k, c.events, c.c, c.sigma, c.epsilon, c.seed
        )
        .map_err(io)?;
        writeln!(out, "event,d_w").map_err(io)?;
        for p in &self.points {
            writeln!(out, "{},{}", p.event, p.d_w).map_err(io)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> TrackConfig {
        TrackConfig {
            n: 30,
            p: 0.4,
            k: 1,
            events: 20_000,
            report_every: 1000,
            ..TrackConfig::default()
        }
    }

    #[test]
    fn static_target_improves() {
        let t = run_tracking(&base()).unwrap();
        let first = t.points[0].d_w;
        assert!(t.steady_state < first, "{} vs {first}", t.steady_state);
    }

    #[test]
    fn zero_step_keeps_initial_error() {
        let t = run_tracking(&TrackConfig { c: 0.0, ..base() }).unwrap();
        assert!(t.points.iter().all(|p| p.d_w == t.points[0].d_w));
    }

    #[test]
    fn drift_is_reproducible() {
        let cfg = TrackConfig {
            sigma: 0.002,
            c: 0.1,
            ..base()
        };
        let (a, b) = (run_tracking(&cfg).unwrap(), run_tracking(&cfg).unwrap());
        assert_eq!(a.points, b.points);
        assert!(a.steady_state.is_finite());
    }

    #[test]
    fn out_of_range_step_rejected() {
        assert!(run_tracking(&TrackConfig { c: 1.5, ..base() }).is_err());
    }
}
