use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Estimator, ExperimentConfig};
use crate::baselines::{rank_centrality, regularized_mle};
use crate::btl::{simulate_comparisons, EdgeObservations, WeightVector};
use crate::clock::Stopwatch;
use crate::error::{RankError, Result};
use crate::graph::{erdos_renyi, ComparisonGraph};
use crate::metrics::{d_w_fast, normalized_weight_error, RankOrder};
use crate::solver::{solve, LinearSystem, SolveOptions, StopReason};

/// Consecutive disconnected draws tolerated before a run is abandoned.
pub const MAX_CONSECUTIVE_REJECTIONS: u64 = 100;

#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    /// `None` when the graph came from a file.
    pub p: Option<f64>,
    pub k: u64,
    pub estimator: Estimator,
    pub nwe: f64,
    pub d_w: f64,
    pub iterations: Option<u64>,
    pub stop: Option<StopReason>,
    /// Disconnected graphs discarded before this trial's graph was accepted.
    pub rejections: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub p: Option<f64>,
    pub k: u64,
    pub estimator: Estimator,
    pub trials: usize,
    pub nwe_mean: f64,
    pub nwe_stderr: Option<f64>,
    pub d_w_mean: f64,
    pub d_w_stderr: Option<f64>,
    pub iterations_mean: Option<f64>,
    pub iterations_stderr: Option<f64>,
    pub rejections: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<TrialRow>,
    pub summary: Vec<GroupSummary>,
    /// Disconnected graphs discarded over the whole run.
    pub rejections: u64,
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    provenance: String,
    rejections: u64,
    summary: &'a [GroupSummary],
}

/// The stream every trial draws its graph, comparison and solver seeds from.
/// Depends only on the master seed and trial index.
pub fn trial_rng(master: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng
}

/// Draws Erdős-Rényi graphs until one is connected.
pub fn connected_erdos_renyi<R: Rng>(n: usize, p: f64, rng: &mut R) -> Result<(ComparisonGraph, u64)> {
    let mut rejections = 0;
    loop {
        let g = erdos_renyi(n, p, rng.random())?;
        if g.is_connected() {
            return Ok((g, rejections));
        }
        rejections += 1;
        if rejections > MAX_CONSECUTIVE_REJECTIONS {
            return Err(RankError::Config(format!(
                "more than {MAX_CONSECUTIVE_REJECTIONS} consecutive disconnected graphs at n={n}, p={p}; \
                 connectivity needs p well above ln(n)/n = {:.4}",
                (n as f64).ln() / n as f64
            )));
        }
    }
}

pub struct EstimateOutcome {
    pub weights: WeightVector,
    pub iterations: Option<u64>,
    pub stop: Option<StopReason>,
}

/// Runs one estimator on one data set. `truth` feeds the rank-based stopping
/// rules.
pub fn run_estimator(
    estimator: Estimator,
    g: &ComparisonGraph,
    obs: &EdgeObservations,
    cfg: &ExperimentConfig,
    truth: Option<&WeightVector>,
    seed: u64,
) -> Result<EstimateOutcome> {
    match estimator {
        Estimator::Kaczmarz => {
            let sys = LinearSystem::build(g, obs, cfg.epsilon)?;
            let init = if cfg.warm_start {
                sys.warm_start(sys.default_reference())?
            } else {
                vec![0.0; g.node_count()]
            };
            let rule = cfg.stop.rule();
            let opts = SolveOptions {
                ground_truth: if rule.needs_ground_truth() {
                    truth.cloned()
                } else {
                    None
                },
                stop: rule,
                max_iters: cfg.stop.max_iters,
                seed,
                ..SolveOptions::default()
            };
            let rep = solve(&sys, init, &opts)?;
            Ok(EstimateOutcome {
                weights: rep.weights()?,
                iterations: Some(rep.iterations),
                stop: Some(rep.stop),
            })
        }
        Estimator::RankCentrality => Ok(EstimateOutcome {
            weights: rank_centrality(g, obs, cfg.epsilon)?,
            iterations: None,
            stop: None,
        }),
        Estimator::Mle => Ok(EstimateOutcome {
            weights: regularized_mle(g, obs, cfg.lambda)?,
            iterations: None,
            stop: None,
        }),
    }
}

fn run_trial(cfg: &ExperimentConfig, fixed: Option<&ComparisonGraph>, trial: usize) -> Result<(Vec<TrialRow>, u64)> {
    let mut rng = trial_rng(cfg.seed, trial);
    let mut rows = Vec::new();
    let graphs: Vec<(Option<f64>, ComparisonGraph, u64)> = match fixed {
        Some(g) => vec![(None, g.clone(), 0)],
        None => cfg
            .p
            .iter()
            .map(|&p| connected_erdos_renyi(cfg.n, p, &mut rng).map(|(g, rej)| (Some(p), g, rej)))
            .collect::<Result<_>>()?,
    };
    for (p, g, rejections) in &graphs {
        let truth = WeightVector::geometric_ladder(g.node_count());
        for &k in &cfg.k {
            let obs = simulate_comparisons(g, &truth, k, rng.random())?;
            for &estimator in &cfg.estimators {
                let solver_seed = rng.random();
                let start = Stopwatch::start();
                let out = run_estimator(estimator, g, &obs, cfg, Some(&truth), solver_seed)?;
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                let nwe = normalized_weight_error(truth.as_slice(), out.weights.as_slice())?;
                let d_w = d_w_fast(truth.as_slice(), &RankOrder::from_scores(out.weights.as_slice()))?;
                if d_w > nwe + 1e-12 {
                    return Err(RankError::Numeric(format!(
                        "trial {trial}: D_w = {d_w} exceeds normalized weight error {nwe}"
                    )));
                }
                rows.push(TrialRow {
                    trial,
                    p: *p,
                    k,
                    estimator,
                    nwe,
                    d_w,
                    iterations: out.iterations,
                    stop: out.stop,
                    rejections: *rejections,
                    wall_ms,
                });
            }
        }
    }
    Ok((rows, graphs.iter().map(|g| g.2).sum()))
}

fn mean_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

fn summarize(cfg: &ExperimentConfig, rows: &[TrialRow]) -> Vec<GroupSummary> {
    let ps: Vec<Option<f64>> = if cfg.graph_file.is_some() {
        vec![None]
    } else {
        cfg.p.iter().copied().map(Some).collect()
    };
    let mut out = Vec::new();
    for &p in &ps {
        for &k in &cfg.k {
            for &estimator in &cfg.estimators {
                let group: Vec<&TrialRow> = rows
                    .iter()
                    .filter(|r| r.p == p && r.k == k && r.estimator == estimator)
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let (nwe_mean, nwe_stderr) = mean_stderr(&group.iter().map(|r| r.nwe).collect::<Vec<_>>());
                let (d_w_mean, d_w_stderr) = mean_stderr(&group.iter().map(|r| r.d_w).collect::<Vec<_>>());
                let iters: Vec<f64> = group.iter().filter_map(|r| r.iterations.map(|i| i as f64)).collect();
                let (iterations_mean, iterations_stderr) = if iters.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_stderr(&iters);
                    (Some(m), s)
                };
                out.push(GroupSummary {
                    p,
                    k,
                    estimator,
                    trials: group.len(),
                    nwe_mean,
                    nwe_stderr,
                    d_w_mean,
                    d_w_stderr,
                    iterations_mean,
                    iterations_stderr,
                    rejections: group.iter().map(|r| r.rejections).sum(),
                });
            }
        }
    }
    out
}

/// Runs every trial of `cfg`, on the rayon pool when the `parallel`
/// feature is on. Output order is by trial
/// index regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let fixed = match &cfg.graph_file {
        Some(path) => {
            let g = ComparisonGraph::read_edge_list(path)?;
            if !g.is_connected() {
                log::warn!("{} is not connected; estimates are per component", path.display());
            }
            Some(g)
        }
        None => None,
    };
    #[cfg(feature = "parallel")]
    let trials = (0..cfg.trials).into_par_iter();
    #[cfg(not(feature = "parallel"))]
    let trials = 0..cfg.trials;
    let per_trial: Vec<Result<(Vec<TrialRow>, u64)>> = trials.map(|t| run_trial(cfg, fixed.as_ref(), t)).collect();
    let mut rows = Vec::new();
    let mut rejections = 0;
    for r in per_trial {
        let (trial_rows, rej) = r?;
        rows.extend(trial_rows);
        rejections += rej;
    }
    let summary = summarize(cfg, &rows);
    Ok(ExperimentResult {
        config: cfg.clone(),
        rows,
        summary,
        rejections,
    })
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| RankError::io("<output>", e);
        writeln!(out, "# rkrank simulate {}", self.config.provenance()).map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| RankError::Numeric(format!("csv output failed: {e}"));
        let mut header = vec![
            "row",
            "trial",
            "p",
            "k",
            "estimator",
            "nwe",
            "d_w",
            "iterations",
            "stop",
            "rejections",
        ];
        if self.config.timing {
            header.push("wall_ms");
        }
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![
                "trial".to_string(),
                r.trial.to_string(),
                fmt_opt(r.p),
                r.k.to_string(),
                r.estimator.to_string(),
                r.nwe.to_string(),
                r.d_w.to_string(),
                fmt_opt(r.iterations),
                fmt_opt(r.stop),
                r.rejections.to_string(),
            ];
            if self.config.timing {
                rec.push(format!("{:.3}", r.wall_ms));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        for s in &self.summary {
            let rows = [
                (
                    "mean",
                    s.nwe_mean.to_string(),
                    s.d_w_mean.to_string(),
                    fmt_opt(s.iterations_mean),
                ),
                (
                    "stderr",
                    fmt_opt(s.nwe_stderr),
                    fmt_opt(s.d_w_stderr),
                    fmt_opt(s.iterations_stderr),
                ),
            ];
            for (kind, nwe, d_w, iters) in rows {
                let mut rec = vec![
                    kind.to_string(),
                    String::new(),
                    fmt_opt(s.p),
                    s.k.to_string(),
                    s.estimator.to_string(),
                    nwe,
                    d_w,
                    iters,
                    String::new(),
                    s.rejections.to_string(),
                ];
                if self.config.timing {
                    rec.push(String::new());
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let summary = JsonSummary {
            config: &self.config,
            seed: self.config.seed,
            provenance: self.config.provenance(),
            rejections: self.rejections,
            summary: &self.summary,
        };
        serde_json::to_string_pretty(&summary).map_err(|e| RankError::Numeric(format!("json output failed: {e}")))
    }

    /// Writes the table to `csv_path` and the summary next to it with a
    /// `.json` extension.
    pub fn write_files(&self, csv_path: &Path) -> Result<()> {
        let file = std::fs::File::create(csv_path).map_err(|e| RankError::io(csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let json_path = csv_path.with_extension("json");
        std::fs::write(&json_path, self.to_json()? + "\n").map_err(|e| RankError::io(&json_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ConfigBuilder;

    fn small() -> ExperimentConfig {
        let mut b = ConfigBuilder::new();
        for (k, v) in [
            ("n", "40"),
            ("p", "0.3"),
            ("k", "50,200"),
            ("epsilon", "0.5"),
            ("lambda", "0.1"),
        ] {
            b.set(k, v).unwrap();
        }
        b.set("estimators", "RK,RC,MLE")
            .unwrap()
            .set("trials", "4")
            .unwrap()
            .set("seed", "9")
            .unwrap();
        b.build().unwrap()
    }

    #[test]
    fn rows_are_ordered_and_bounded() {
        let res = run_experiment(&small()).unwrap();
        assert_eq!(res.rows.len(), 4 * 2 * 3);
        assert!(res.rows.windows(2).all(|w| w[0].trial <= w[1].trial));
        for r in &res.rows {
            assert!(r.d_w <= r.nwe);
            assert_eq!(r.iterations.is_some(), r.estimator == Estimator::Kaczmarz);
        }
        assert_eq!(res.summary.len(), 2 * 3);
        // more data per edge, smaller error
        let rk: Vec<_> = res
            .summary
            .iter()
            .filter(|s| s.estimator == Estimator::Kaczmarz)
            .collect();
        assert!(rk[1].nwe_mean < rk[0].nwe_mean);
    }

    #[test]
    fn output_is_reproducible() {
        let cfg = small();
        let render = || {
            let mut buf = Vec::new();
            run_experiment(&cfg).unwrap().write_csv(&mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = render();
        assert_eq!(a, render());
        assert!(a.starts_with("# rkrank simulate n=40"));
        assert!(!a.contains("wall_ms"));
    }

    #[test]
    fn sparse_graphs_abort() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = connected_erdos_renyi(200, 0.001, &mut rng).unwrap_err();
        assert!(err.to_string().contains("consecutive disconnected"));
    }
}
