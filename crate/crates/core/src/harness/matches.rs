use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::Estimator;
use crate::baselines::{rank_centrality, regularized_mle};
use crate::btl::{EdgeObservations, WeightVector};
use crate::error::{RankError, Result};
use crate::graph::ComparisonGraph;
use crate::metrics::win_ratio;
use crate::solver::{solve, weights_from_iterate, LinearSystem, SolveOptions, StoppingRule};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchRecord {
    pub name_a: String,
    pub name_b: String,
    pub wins_a: u64,
    pub wins_b: u64,
}

/// Parses `name_a,name_b,wins_a,wins_b` lines. A first line whose count
/// fields are not integers is taken as a header. Blank lines are skipped;
/// names may not contain commas.
pub fn parse_match_text(text: &str, source: &Path) -> Result<Vec<MatchRecord>> {
    let mut records = Vec::new();
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let err = |message: String| RankError::Parse {
            path: source.to_path_buf(),
            line: idx as u64 + 1,
            message,
        };
        let line = raw.trim_start_matches('\u{feff}').trim();
        if line.is_empty() {
            continue;
        }
        let is_first = std::mem::replace(&mut first, false);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(format!(
                "expected 4 fields (name_a,name_b,wins_a,wins_b), found {}",
                fields.len()
            )));
        }
        let (wins_a, wins_b) = match (fields[2].parse::<i64>(), fields[3].parse::<i64>()) {
            (Ok(a), Ok(b)) => (a, b),
            _ if is_first => continue,
            _ => {
                return Err(err(format!(
                    "win counts must be integers, got `{}` and `{}`",
                    fields[2], fields[3]
                )))
            }
        };
        if wins_a < 0 || wins_b < 0 {
            return Err(err(format!(
                "win counts must be nonnegative, got {wins_a} and {wins_b}"
            )));
        }
        let (name_a, name_b) = (fields[0], fields[1]);
        if name_a.is_empty() || name_b.is_empty() {
            return Err(err("player names must be non-empty".into()));
        }
        if name_a == name_b {
            return Err(err(format!("self-match for `{name_a}`")));
        }
        records.push(MatchRecord {
            name_a: name_a.to_string(),
            name_b: name_b.to_string(),
            wins_a: wins_a as u64,
            wins_b: wins_b as u64,
        });
    }
    Ok(records)
}

pub fn parse_match_file(path: impl AsRef<Path>) -> Result<Vec<MatchRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| RankError::io(path, e))?;
    parse_match_text(&text, path)
}

/// Match records interned into a comparison graph, names in first-seen order.
#[derive(Debug, Clone)]
pub struct MatchData {
    pub names: Vec<String>,
    pub graph: ComparisonGraph,
    pub obs: EdgeObservations,
}

impl MatchData {
    /// Repeated pairs, in either orientation, have their tallies merged.
    /// Pairs with no games played add no edge.
    pub fn from_records<'r>(records: &'r [MatchRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(RankError::param("no match records"));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut names: Vec<String> = Vec::new();
        let mut intern = |name: &'r str| -> usize {
            *index.entry(name).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        let mut obs = EdgeObservations::new(0);
        let mut graph = ComparisonGraph::new(0);
        for r in records {
            let (a, b) = (intern(r.name_a.as_str()), intern(r.name_b.as_str()));
            while graph.node_count() <= a.max(b) {
                graph.add_node();
            }
            if r.wins_a + r.wins_b == 0 {
                continue;
            }
            if obs.tally(a, b).is_some() {
                log::warn!("duplicate pair {} vs {}; tallies merged", r.name_a, r.name_b);
            }
            obs.add_tally(a, b, r.wins_a, r.wins_b)?;
            graph.add_edge(a, b)?;
        }
        Ok(Self {
            obs: aligned(&graph, &obs)?,
            names,
            graph,
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }
}

/// Observations re-indexed so edge ids follow the graph's edge order.
fn aligned(g: &ComparisonGraph, obs: &EdgeObservations) -> Result<EdgeObservations> {
    let mut out = EdgeObservations::for_graph(g);
    for &(i, j) in g.edges() {
        let (wi, wj) = obs.tally(i, j).expect("every graph edge has a tally");
        out.add_tally(i, j, wi, wj)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RankOptions {
    pub estimator: Estimator,
    pub epsilon: f64,
    pub lambda: f64,
    pub stop: StoppingRule,
    pub max_iters: u64,
    pub seed: u64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            estimator: Estimator::Kaczmarz,
            epsilon: 1.0,
            lambda: 1.0,
            stop: StoppingRule::default(),
            max_iters: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankingRow {
    pub rank: usize,
    pub name: String,
    pub degree: usize,
    pub win_ratio: f64,
    pub weight: f64,
    /// No recorded games; the weight carries no information.
    pub isolated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankingTable {
    pub estimator: Estimator,
    pub rows: Vec<RankingRow>,
}

/// Ranks the players of `data`. Weights have geometric mean 1 and rows are
/// sorted by weight, players without games last.
pub fn rank_matches(data: &MatchData, opts: &RankOptions) -> Result<RankingTable> {
    let g = &data.graph;
    if g.edge_count() == 0 {
        return Err(RankError::param("no games were played"));
    }
    if !g.is_connected() {
        log::warn!("comparison graph is disconnected; weights are only comparable within a component");
    }
    let weights: WeightVector = match opts.estimator {
        Estimator::Kaczmarz => {
            let sys = LinearSystem::build(g, &data.obs, opts.epsilon)?;
            let init = sys.warm_start(sys.default_reference())?;
            let solve_opts = SolveOptions {
                stop: opts.stop.clone(),
                max_iters: opts.max_iters,
                seed: opts.seed,
                ..SolveOptions::default()
            };
            solve(&sys, init, &solve_opts)?.weights()?
        }
        Estimator::RankCentrality => rank_centrality(g, &data.obs, opts.epsilon)?,
        Estimator::Mle => regularized_mle(g, &data.obs, opts.lambda)?,
    };
    let log_w: Vec<f64> = weights.as_slice().iter().map(|w| w.ln()).collect();
    let weights = weights_from_iterate(&log_w)?;

    let mut order: Vec<usize> = (0..data.node_count()).collect();
    let isolated = |i: usize| g.degree(i) == 0;
    order.sort_by(|&a, &b| {
        isolated(a)
            .cmp(&isolated(b))
            .then(weights.as_slice()[b].total_cmp(&weights.as_slice()[a]))
            .then(a.cmp(&b))
    });
    let rows = order
        .into_iter()
        .enumerate()
        .map(|(pos, i)| {
            Ok(RankingRow {
                rank: pos + 1,
                name: data.names[i].clone(),
                degree: g.degree(i),
                win_ratio: if isolated(i) {
                    f64::NAN
                } else {
                    win_ratio(&data.obs, i)?
                },
                weight: weights.as_slice()[i],
                isolated: isolated(i),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankingTable {
        estimator: opts.estimator,
        rows,
    })
}

impl RankingTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| RankError::Numeric(format!("csv output failed: {e}"));
        w.write_record(["rank", "name", "degree", "win_ratio", "weight", "isolated"])
            .map_err(csv_err)?;
        for r in &self.rows {
            let ratio = if r.isolated {
                String::new()
            } else if r.win_ratio.is_infinite() {
                "inf".to_string()
            } else {
                format!("{:.4}", r.win_ratio)
            };
            w.write_record([
                r.rank.to_string(),
                r.name.clone(),
                r.degree.to_string(),
                ratio,
                format!("{:.6}", r.weight),
                r.isolated.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| RankError::io(PathBuf::from("<output>"), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<MatchRecord>> {
        parse_match_text(text, Path::new("m.csv"))
    }

    #[test]
    fn single_record() {
        let recs = parse("Federer,Nadal,11,23\n").unwrap();
        assert_eq!(
            recs,
            vec![MatchRecord {
                name_a: "Federer".into(),
                name_b: "Nadal".into(),
                wins_a: 11,
                wins_b: 23
            }]
        );
    }

    #[test]
    fn header_is_skipped() {
        assert_eq!(parse("a,b,wa,wb\nx,y,1,2\n").unwrap().len(), 1);
    }

    #[test]
    fn bad_lines_report_their_number() {
        let line_of = |text: &str| match parse(text) {
            Err(RankError::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of("a,b,1,2\nX,X,1,0\n"), 2);
        assert_eq!(line_of("a,b,1,2\n\nc,d,1\n"), 3);
        assert_eq!(line_of("a,b,1,2\nc,d,-1,0\n"), 2);
        assert_eq!(line_of("a,b,1,2\nc,d,one,0\n"), 2);
    }

    #[test]
    fn duplicates_merge_in_either_orientation() {
        let recs = parse("A,B,2,1\nB,A,1,0\nC,A,0,0\n").unwrap();
        let data = MatchData::from_records(&recs).unwrap();
        assert_eq!(data.names, vec!["A", "B", "C"]);
        assert_eq!(data.obs.tally(0, 1), Some((2, 2)));
        assert_eq!(data.graph.edge_count(), 1);
        assert_eq!(data.graph.degree(2), 0);
    }

    #[test]
    fn single_edge_ratio_is_two() {
        let data = MatchData::from_records(&parse("A,B,3,1").unwrap()).unwrap();
        let table = rank_matches(&data, &RankOptions::default()).unwrap();
        assert_eq!(table.rows[0].name, "A");
        let ratio = table.rows[0].weight / table.rows[1].weight;
        assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
        // geometric mean 1
        assert!((table.rows[0].weight * table.rows[1].weight - 1.0).abs() < 1e-9);
    }

    #[test]
    fn isolated_players_go_last() {
        let data = MatchData::from_records(&parse("Z,Y,0,0\nA,B,3,1\n").unwrap()).unwrap();
        let table = rank_matches(&data, &RankOptions::default()).unwrap();
        let names: Vec<&str> = table.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["A", "B", "Z", "Y"]);
        assert!(table.rows[2].isolated && table.rows[3].isolated);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(MatchData::from_records(&parse("").unwrap()).is_err());
    }
}
