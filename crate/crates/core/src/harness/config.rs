use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{RankError, Result};
use crate::solver::StoppingRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Estimator {
    #[serde(rename = "RK")]
    Kaczmarz,
    #[serde(rename = "RC")]
    RankCentrality,
    #[serde(rename = "MLE")]
    Mle,
}

impl FromStr for Estimator {
    type Err = RankError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rk" | "kaczmarz" => Ok(Estimator::Kaczmarz),
            "rc" | "rank-centrality" => Ok(Estimator::RankCentrality),
            "mle" => Ok(Estimator::Mle),
            other => Err(RankError::Config(format!(
                "unknown estimator `{other}` (expected RK, RC or MLE)"
            ))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Kaczmarz => "RK",
            Estimator::RankCentrality => "RC",
            Estimator::Mle => "MLE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    RelativeChange,
    RankingStable,
    TopKInM,
    MaxIters,
}

impl FromStr for StopKind {
    type Err = RankError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relative-change" | "i1" => Ok(StopKind::RelativeChange),
            "ranking-stable" | "i3" => Ok(StopKind::RankingStable),
            "top-k-in-m" | "topk" | "i4" => Ok(StopKind::TopKInM),
            "max-iters" | "none" => Ok(StopKind::MaxIters),
            other => Err(RankError::Config(format!(
                "unknown stopping rule `{other}` (expected relative-change, ranking-stable, top-k-in-m or max-iters)"
            ))),
        }
    }
}

impl fmt::Display for StopKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopKind::RelativeChange => "relative-change",
            StopKind::RankingStable => "ranking-stable",
            StopKind::TopKInM => "top-k-in-m",
            StopKind::MaxIters => "max-iters",
        })
    }
}

/// A stopping rule with its parameters, before the top-K bounds are checked
/// against `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopConfig {
    pub kind: StopKind,
    pub window: usize,
    pub tol: f64,
    pub top_k: usize,
    pub top_m: usize,
    pub max_iters: u64,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            kind: StopKind::RelativeChange,
            window: 500,
            tol: 1e-7,
            top_k: 20,
            top_m: 50,
            max_iters: 200_000,
        }
    }
}

impl StopConfig {
    pub fn rule(&self) -> StoppingRule {
        match self.kind {
            StopKind::RelativeChange => StoppingRule::RelativeChange {
                window: self.window,
                tol: self.tol,
            },
            StopKind::RankingStable => StoppingRule::RankingStable {
                window: self.window,
                tol: self.tol,
            },
            StopKind::TopKInM => StoppingRule::TopKInM {
                k: self.top_k,
                m: self.top_m,
            },
            StopKind::MaxIters => StoppingRule::MaxIterations,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(RankError::Config("stop-window must be at least 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(RankError::Config(format!(
                "stop-tol must be finite and >= 0, got {}",
                self.tol
            )));
        }
        if self.top_k == 0 || self.top_k > self.top_m {
            return Err(RankError::Config(format!(
                "need 1 <= top-k <= top-m, got {} and {}",
                self.top_k, self.top_m
            )));
        }
        if self.max_iters == 0 {
            return Err(RankError::Config("max-iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Settings for `simulate`. Built through [`ConfigBuilder`] so file values and
/// flags share one parser and one validation pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: Vec<f64>,
    pub k: Vec<u64>,
    pub epsilon: f64,
    pub lambda: f64,
    pub estimators: Vec<Estimator>,
    pub stop: StopConfig,
    pub trials: usize,
    pub seed: u64,
    pub warm_start: bool,
    pub graph_file: Option<PathBuf>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 400,
            p: vec![0.16],
            k: vec![100],
            epsilon: 0.0,
            lambda: 0.0,
            estimators: vec![Estimator::Kaczmarz],
            stop: StopConfig::default(),
            trials: 20,
            seed: 0,
            warm_start: false,
            graph_file: None,
            out: None,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.graph_file.is_none() {
            if self.n < 2 {
                return Err(RankError::Config(format!("n must be at least 2, got {}", self.n)));
            }
            if self.p.is_empty() {
                return Err(RankError::Config("at least one edge probability is required".into()));
            }
            if let Some(p) = self.p.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                return Err(RankError::Config(format!(
                    "edge probability must lie in (0, 1], got {p}"
                )));
            }
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(RankError::Config(
                "comparisons per edge must be a non-empty list of positive integers".into(),
            ));
        }
        check_nonneg("epsilon", self.epsilon)?;
        check_nonneg("lambda", self.lambda)?;
        if self.estimators.is_empty() {
            return Err(RankError::Config("at least one estimator is required".into()));
        }
        if self.trials == 0 {
            return Err(RankError::Config("trials must be at least 1".into()));
        }
        self.stop.validate()?;
        if self.stop.kind == StopKind::TopKInM && self.graph_file.is_none() && self.stop.top_m > self.n {
            return Err(RankError::Config(format!(
                "top-m {} exceeds n = {}",
                self.stop.top_m, self.n
            )));
        }
        Ok(())
    }

    /// `key=value` pairs in a stable order, for provenance headers.
    pub fn provenance(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut parts = vec![
            format!("n={}", self.n),
            format!("p={}", join(self.p.iter().map(|p| p.to_string()).collect())),
            format!("k={}", join(self.k.iter().map(|k| k.to_string()).collect())),
            format!("epsilon={}", self.epsilon),
            format!("lambda={}", self.lambda),
            format!(
                "estimators={}",
                join(self.estimators.iter().map(|e| e.to_string()).collect())
            ),
            format!("stop={}", self.stop.kind),
            format!("stop-window={}", self.stop.window),
            format!("stop-tol={}", self.stop.tol),
            format!("top-k={}", self.stop.top_k),
            format!("top-m={}", self.stop.top_m),
            format!("max-iters={}", self.stop.max_iters),
            format!("trials={}", self.trials),
            format!("seed={}", self.seed),
            format!("warm-start={}", self.warm_start),
        ];
        if let Some(path) = &self.graph_file {
            parts.push(format!("graph-file={}", path.display()));
        }
        parts.join(" ")
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RankError::Config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| RankError::Config(format!("bad value `{raw}` for {key}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(RankError::Config(format!(
            "bad value `{raw}` for {key}: expected true or false"
        ))),
    }
}

/// Accumulates `key=value` settings, later ones winning.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    cfg: ExperimentConfig,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<&mut Self> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let c = &mut self.cfg;
        match key.as_str() {
            "n" => c.n = parse_value(&key, value)?,
            "p" => c.p = parse_list(&key, value)?,
            "k" => c.k = parse_list(&key, value)?,
            "epsilon" => c.epsilon = parse_value(&key, value)?,
            "lambda" => c.lambda = parse_value(&key, value)?,
            "estimators" => {
                let mut list: Vec<Estimator> = parse_list(&key, value)?;
                list.dedup();
                c.estimators = list;
            }
            "stop" => c.stop.kind = parse_value(&key, value)?,
            "stop-window" => c.stop.window = parse_value(&key, value)?,
            "stop-tol" => c.stop.tol = parse_value(&key, value)?,
            "top-k" => c.stop.top_k = parse_value(&key, value)?,
            "top-m" => c.stop.top_m = parse_value(&key, value)?,
            "max-iters" => c.stop.max_iters = parse_value(&key, value)?,
            "trials" => c.trials = parse_value(&key, value)?,
            "seed" => c.seed = parse_value(&key, value)?,
            "warm-start" => c.warm_start = parse_bool(&key, value)?,
            "timing" => c.timing = parse_bool(&key, value)?,
            "graph-file" => c.graph_file = Some(PathBuf::from(value.trim())),
            "out" => c.out = Some(PathBuf::from(value.trim())),
            other => return Err(RankError::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(self)
    }

    /// Applies a plain-text file of `key=value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<&mut Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RankError::io(path, e))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| RankError::Parse {
                path: path.to_path_buf(),
                line: idx as u64 + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got `{line}`")))?;
            self.set(key, value).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(self)
    }

    pub fn build(self) -> Result<ExperimentConfig> {
        self.cfg.validate()?;
        Ok(self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_override_file() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            "# sweep\nn = 50\np=0.2,0.4\nk=10\nestimators=RK,MLE  # two\ntrials=3"
        )
        .unwrap();
        let mut b = ConfigBuilder::new();
        b.apply_file(file.path()).unwrap();
        b.set("k", "30,100").unwrap();
        let cfg = b.build().unwrap();
        assert_eq!(cfg.n, 50);
        assert_eq!(cfg.p, vec![0.2, 0.4]);
        assert_eq!(cfg.k, vec![30, 100]);
        assert_eq!(cfg.estimators, vec![Estimator::Kaczmarz, Estimator::Mle]);
        assert_eq!(cfg.trials, 3);
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "n=10\n\nbogus").unwrap();
        match ConfigBuilder::new().apply_file(file.path()) {
            Err(RankError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ranges_checked_at_build() {
        let bad = [
            ("p", "0"),
            ("p", "1.5"),
            ("n", "1"),
            ("k", "0"),
            ("epsilon", "-1"),
            ("trials", "0"),
        ];
        for (key, value) in bad {
            let mut b = ConfigBuilder::new();
            b.set(key, value).unwrap();
            assert!(b.build().is_err(), "{key}={value}");
        }
        let mut b = ConfigBuilder::new();
        b.set("stop", "top-k-in-m")
            .unwrap()
            .set("top-k", "30")
            .unwrap()
            .set("top-m", "20")
            .unwrap();
        assert!(b.build().is_err());
        assert!(ConfigBuilder::new().set("estimators", "XYZ").is_err());
        assert!(ConfigBuilder::new().set("colour", "red").is_err());
    }
}
