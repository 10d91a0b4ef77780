//! Constant-step-size Kaczmarz for weights that drift while data streams in.
//!
//! Each incoming comparison refreshes its pair's running estimate and then
//! moves the iterate a fraction `c` of the way onto the hyperplane of one
//! endpoint's row. With `c = 1` this is an ordinary projection.

use rand::Rng;

use super::{LinearSystem, SolverState};
use crate::btl::EdgeObservations;
use crate::error::{RankError, Result};

/// Which endpoint of an observed pair receives the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventNode {
    #[default]
    Lower,
    Higher,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackingEvent {
    pub i: usize,
    pub j: usize,
    /// `true` when `i` was preferred.
    pub i_won: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackingUpdate {
    pub node: usize,
    /// The pair was not part of the system before this event.
    pub inserted: bool,
}

pub fn tracking_step(
    sys: &mut LinearSystem,
    obs: &mut EdgeObservations,
    state: &mut SolverState,
    c: f64,
    event: TrackingEvent,
    epsilon: f64,
    choice: EventNode,
) -> Result<TrackingUpdate> {
    if !(0.0..=1.0).contains(&c) {
        return Err(RankError::param(format!("step size must lie in [0, 1], got {c}")));
    }
    let TrackingEvent { i, j, i_won } = event;
    obs.record(i, j, i_won)?;
    let inserted = sys.insert_edge(i, j)?;
    if state.x.len() < sys.node_count() {
        state.x.resize(sys.node_count(), 0.0);
    }
    sys.set_logit(i, j, obs.y(i, j, epsilon)?)?;

    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let node = match choice {
        EventNode::Lower => lo,
        EventNode::Higher => hi,
        EventNode::Random => {
            if state.rng_mut().random::<bool>() {
                lo
            } else {
                hi
            }
        }
    };
    if c > 0.0 {
        state.touched += sys.project(&mut state.x, node, c) as u64;
    }
    state.iteration += 1;
    Ok(TrackingUpdate { node, inserted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{erdos_renyi, ComparisonGraph};
    use crate::solver::kaczmarz_step_at;

    fn setup() -> (LinearSystem, EdgeObservations) {
        let g = erdos_renyi(10, 0.5, 3).unwrap();
        let mut obs = EdgeObservations::for_graph(&g);
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            obs.add_tally(i, j, (e % 5) as u64 + 1, 3).unwrap();
        }
        let sys = LinearSystem::build(&g, &obs, 1.0).unwrap();
        (sys, obs)
    }

    #[test]
    fn unit_step_matches_kaczmarz() {
        let (mut sys, mut obs) = setup();
        let (i, j) = sys.graph().edges()[2];
        let init: Vec<f64> = (0..10).map(|v| v as f64 * 0.1).collect();
        let mut tracked = SolverState::new(init.clone(), 0);
        let event = TrackingEvent { i, j, i_won: true };
        let up = tracking_step(&mut sys, &mut obs, &mut tracked, 1.0, event, 1.0, EventNode::Lower).unwrap();
        assert_eq!(up.node, i.min(j));
        assert!(!up.inserted);

        // same refreshed data, plain projection
        let fresh = LinearSystem::build(sys.graph(), &obs, 1.0).unwrap();
        let mut plain = SolverState::new(init, 0);
        kaczmarz_step_at(&fresh, &mut plain, up.node);
        for (a, b) in tracked.x.iter().zip(&plain.x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_step_leaves_iterate() {
        let (mut sys, mut obs) = setup();
        let (i, j) = sys.graph().edges()[0];
        let init = vec![0.3; 10];
        let mut st = SolverState::new(init.clone(), 0);
        let event = TrackingEvent { i, j, i_won: false };
        tracking_step(&mut sys, &mut obs, &mut st, 0.0, event, 1.0, EventNode::Higher).unwrap();
        assert_eq!(st.x, init);
        assert!(tracking_step(&mut sys, &mut obs, &mut st, 1.5, event, 1.0, EventNode::Lower).is_err());
    }

    #[test]
    fn sum_preserved_for_any_step() {
        let (mut sys, mut obs) = setup();
        let mut st = SolverState::new(vec![0.0; 10], 1);
        let edges = sys.graph().edges().to_vec();
        for (t, c) in [0.02, 0.1, 0.5, 1.0].into_iter().cycle().take(400).enumerate() {
            let (i, j) = edges[t % edges.len()];
            let event = TrackingEvent {
                i,
                j,
                i_won: t % 3 == 0,
            };
            tracking_step(&mut sys, &mut obs, &mut st, c, event, 1.0, EventNode::Random).unwrap();
            assert!(st.x.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn new_pair_grows_the_system() {
        let g = ComparisonGraph::from_edges(3, [(0, 1)]).unwrap();
        let mut obs = EdgeObservations::for_graph(&g);
        let mut sys = LinearSystem::build(&g, &obs, 1.0).unwrap();
        let mut st = SolverState::new(vec![0.0; 3], 0);
        let event = TrackingEvent {
            i: 3,
            j: 2,
            i_won: true,
        };
        let up = tracking_step(&mut sys, &mut obs, &mut st, 1.0, event, 1.0, EventNode::Higher).unwrap();
        assert!(up.inserted);
        assert_eq!(sys.node_count(), 4);
        assert_eq!(st.x.len(), 4);
        assert_eq!(up.node, 3);
        // p̂ = 2/3 so y_32 = ln 2; one projection at node 3 solves the pair
        assert!((st.x[3] - st.x[2] - 2f64.ln()).abs() < 1e-12);
    }
}
