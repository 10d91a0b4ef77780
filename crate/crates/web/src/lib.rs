//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every exported function takes plain numbers or text and returns a JSON
//! string, so the page needs no generated type glue beyond `JSON.parse`.
//! The `*_json` functions are the native entry points behind the exports.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use rkrank::baselines::{rank_centrality, regularized_mle};
use rkrank::btl::{simulate_comparisons, WeightVector};
use rkrank::error::Result;
use rkrank::harness::simulate::connected_erdos_renyi;
use rkrank::harness::{parse_match_text, rank_matches, run_tracking, Estimator, MatchData, RankOptions, TrackConfig};
use rkrank::metrics::{d_w_fast, normalized_weight_error, RankOrder};
use rkrank::solver::{kaczmarz_step, weights_from_iterate, LinearSystem, SolverState, StoppingRule};

#[derive(Debug, Serialize)]
pub struct ConvergenceTrace {
    pub nodes: usize,
    pub edges: usize,
    pub iterations: Vec<u64>,
    pub nwe: Vec<f64>,
    pub d_w: Vec<f64>,
    /// Final errors of the two reference estimators on the same data.
    pub rank_centrality_d_w: f64,
    pub mle_d_w: f64,
}

fn errors(truth: &WeightVector, w: &WeightVector) -> Result<(f64, f64)> {
    let nwe = normalized_weight_error(truth.as_slice(), w.as_slice())?;
    let d_w = d_w_fast(truth.as_slice(), &RankOrder::from_scores(w.as_slice()))?;
    Ok((nwe, d_w))
}

/// Runs Kaczmarz for `steps` iterations on a random connected graph with
/// ladder weights, sampling the error `points` times along the way.
#[allow(clippy::too_many_arguments)]
pub fn convergence_json(
    n: usize,
    p: f64,
    k: u64,
    epsilon: f64,
    seed: u64,
    steps: u64,
    points: u64,
    warm: bool,
) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, _) = connected_erdos_renyi(n, p, &mut rng)?;
    let truth = WeightVector::geometric_ladder(n);
    let obs = simulate_comparisons(&g, &truth, k, rng.random())?;
    let sys = LinearSystem::build(&g, &obs, epsilon)?;
    let init = if warm {
        sys.warm_start(sys.default_reference())?
    } else {
        vec![0.0; n]
    };
    let every = (steps / points.max(1)).max(1);

    let mut state = SolverState::new(init, rng.random());
    let mut trace = ConvergenceTrace {
        nodes: n,
        edges: g.edge_count(),
        iterations: Vec::new(),
        nwe: Vec::new(),
        d_w: Vec::new(),
        rank_centrality_d_w: errors(&truth, &rank_centrality(&g, &obs, epsilon)?)?.1,
        mle_d_w: errors(&truth, &regularized_mle(&g, &obs, epsilon)?)?.1,
    };
    loop {
        if state.iteration.is_multiple_of(every) {
            let (nwe, d_w) = errors(&truth, &weights_from_iterate(&state.x)?)?;
            trace.iterations.push(state.iteration);
            trace.nwe.push(nwe);
            trace.d_w.push(d_w);
        }
        if state.iteration >= steps {
            break;
        }
        kaczmarz_step(&sys, &mut state);
    }
    Ok(serde_json::to_string(&trace).expect("plain struct"))
}

/// Ranks pasted `name_a,name_b,wins_a,wins_b` lines.
pub fn rank_json(text: &str, estimator: &str, epsilon: f64, seed: u64) -> Result<String> {
    let records = parse_match_text(text, Path::new("<input>"))?;
    let data = MatchData::from_records(&records)?;
    let opts = RankOptions {
        estimator: estimator.parse::<Estimator>()?,
        epsilon,
        lambda: 1.0,
        stop: StoppingRule::RelativeChange { window: 500, tol: 1e-9 },
        seed,
        ..RankOptions::default()
    };
    let table = rank_matches(&data, &opts)?;
    Ok(serde_json::to_string(&table).expect("plain struct"))
}

/// Follows drifting weights with the constant-step update.
#[allow(clippy::too_many_arguments)]
pub fn track_json(n: usize, p: f64, k: u64, events: u64, c: f64, sigma: f64, seed: u64, every: u64) -> Result<String> {
    let cfg = TrackConfig {
        n,
        p,
        k,
        events,
        c,
        sigma,
        seed,
        report_every: every,
        ..TrackConfig::default()
    };
    let trace = run_tracking(&cfg)?;
    Ok(serde_json::to_string(&trace).expect("plain struct"))
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn convergence(
    n: usize,
    p: f64,
    k: u32,
    epsilon: f64,
    seed: u32,
    steps: u32,
    points: u32,
    warm: bool,
) -> std::result::Result<String, JsValue> {
    js(convergence_json(
        n,
        p,
        k.into(),
        epsilon,
        seed.into(),
        steps.into(),
        points.into(),
        warm,
    ))
}

#[wasm_bindgen]
pub fn rank(text: &str, estimator: &str, epsilon: f64, seed: u32) -> std::result::Result<String, JsValue> {
    js(rank_json(text, estimator, epsilon, seed.into()))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn track(
    n: usize,
    p: f64,
    k: u32,
    events: u32,
    c: f64,
    sigma: f64,
    seed: u32,
    every: u32,
) -> std::result::Result<String, JsValue> {
    js(track_json(
        n,
        p,
        k.into(),
        events.into(),
        c,
        sigma,
        seed.into(),
        every.into(),
    ))
}
