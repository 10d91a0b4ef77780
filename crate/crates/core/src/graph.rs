//! Comparison graphs and their implicit Laplacian.
//!
//! Every unordered pair is stored once as `(i, j)` with `i < j`. The Laplacian
//! `A = L Lᵀ` is never materialized: a row of it is read straight off the
//! adjacency lists, so touching row `i` costs `O(degree(i))`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{RankError, Result};

/// One adjacency entry: the neighboring node and the canonical edge index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComparisonGraph {
    n: usize,
    adjacency: Vec<Vec<Neighbor>>,
    edges: Vec<(usize, usize)>,
}

impl ComparisonGraph {
    /// A graph with `n` items and no edges.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![Vec::new(); n],
            edges: Vec::new(),
        }
    }

    /// Builds a graph from unordered pairs. Self-loops, duplicates and
    /// out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(n);
        for (i, j) in pairs {
            let (_, inserted) = g.add_edge(i, j)?;
            if !inserted {
                return Err(RankError::param(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(g)
    }

    /// Inserts `{i, j}` if absent. Returns the canonical edge index and whether
    /// the edge is new.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<(usize, bool)> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(RankError::param(format!("self-loop on node {i}")));
        }
        if let Some(e) = self.edge_index(i, j) {
            return Ok((e, false));
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let e = self.edges.len();
        self.edges.push((lo, hi));
        self.adjacency[lo].push(Neighbor { node: hi, edge: e });
        self.adjacency[hi].push(Neighbor { node: lo, edge: e });
        Ok((e, true))
    }

    /// Appends an isolated node and returns its index.
    pub fn add_node(&mut self) -> usize {
        self.adjacency.push(Vec::new());
        self.n += 1;
        self.n - 1
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(i, j)` pairs with `i < j`, indexed by edge id.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n {
            return None;
        }
        // scan the shorter list
        let (a, b) = if self.degree(i) <= self.degree(j) {
            (i, j)
        } else {
            (j, i)
        };
        self.adjacency[a].iter().find(|nb| nb.node == b).map(|nb| nb.edge)
    }

    /// `‖a_i‖² = degree(i)² + degree(i)` for row `i` of the Laplacian.
    pub fn row_norm_sq(&self, i: usize) -> Result<f64> {
        self.check_node(i)?;
        let d = self.degree(i) as f64;
        Ok(d * d + d)
    }

    pub fn laplacian(&self) -> LaplacianView<'_> {
        LaplacianView { graph: self }
    }

    /// Breadth-first component labeling.
    pub fn components(&self) -> Components {
        let mut labels = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if labels[start] != usize::MAX {
                continue;
            }
            labels[start] = count;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for nb in &self.adjacency[u] {
                    if labels[nb.node] == usize::MAX {
                        labels[nb.node] = count;
                        queue.push_back(nb.node);
                    }
                }
            }
            count += 1;
        }
        Components { labels, count }
    }

    pub fn is_connected(&self) -> bool {
        self.components().count <= 1
    }

    /// Serializes to the edge-list text format: a `n=<N>` header followed by
    /// one `i j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(16 + self.edges.len() * 10);
        let _ = writeln!(out, "n={}", self.n);
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        Self::parse_edge_list_named(text, Path::new("<edge list>"))
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RankError::io(path, e))?;
        Self::parse_edge_list_named(&text, path)
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_edge_list()).map_err(|e| RankError::io(path, e))
    }

    fn parse_edge_list_named(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| RankError::Parse {
            path: path.to_path_buf(),
            line: line as u64,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(idx, l)| (idx + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| err(1, "missing `n=<N>` header".into()))?;
        let n = header
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| err(hline, format!("expected `n=<N>` header, got `{header}`")))?;
        let mut g = Self::new(n);
        for (line, content) in lines {
            let mut fields = content.split_whitespace();
            let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err(line, format!("expected `i j`, got `{content}`")));
            };
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(line, format!("bad node index `{s}`")))
            };
            let (i, j) = (parse(a)?, parse(b)?);
            match g.add_edge(i, j) {
                Ok((_, true)) => {}
                Ok((_, false)) => return Err(err(line, format!("duplicate edge ({i}, {j})"))),
                Err(e) => return Err(err(line, e.to_string())),
            }
        }
        Ok(g)
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(RankError::param(format!("node {i} out of range for n = {}", self.n)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Component id per node, numbered in order of first appearance.
    pub labels: Vec<usize>,
    pub count: usize,
}

impl Components {
    /// Node lists grouped by component id.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.count];
        for (node, &c) in self.labels.iter().enumerate() {
            groups[c].push(node);
        }
        groups
    }
}

/// Row access into `A = L Lᵀ` without materializing it.
#[derive(Debug, Clone, Copy)]
pub struct LaplacianView<'g> {
    graph: &'g ComparisonGraph,
}

impl<'g> LaplacianView<'g> {
    pub fn graph(&self) -> &'g ComparisonGraph {
        self.graph
    }

    /// Nonzero entries of row `i` as `(column, value)`: the diagonal first,
    /// then `-1` per neighbor.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + 'g {
        let d = self.graph.degree(i) as f64;
        std::iter::once((i, d)).chain(self.graph.neighbors(i).iter().map(|nb| (nb.node, -1.0)))
    }

    /// `⟨a_i, x⟩ = degree(i)·x_i − Σ_{j ∈ N(i)} x_j`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let nbrs = self.graph.neighbors(i);
        let s: f64 = nbrs.iter().map(|nb| x[nb.node]).sum();
        nbrs.len() as f64 * x[i] - s
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        let d = self.graph.degree(i) as f64;
        d * d + d
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row_dot(i, x);
        }
    }
}

/// G(n, p): every unordered pair is included independently with probability `p`.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<ComparisonGraph> {
    if n < 2 {
        return Err(RankError::param(format!("erdos_renyi needs n >= 2, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(RankError::param(format!(
            "edge probability must lie in (0, 1], got {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ComparisonGraph::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if p >= 1.0 || rng.random::<f64>() < p {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianSpectrum {
    /// Smallest eigenvalue on the complement of the all-one vector. For a
    /// connected graph this is the algebraic connectivity; otherwise it is 0
    /// up to iteration tolerance.
    pub lambda_min_nonzero: f64,
    pub lambda_max: f64,
    pub connected: bool,
}

const EIG_REL_TOL: f64 = 1e-10;
const EIG_MAX_ITERS: usize = 500_000;

/// Extreme Laplacian eigenvalues by power iteration. Meant for test-scale
/// graphs; the solver never calls this.
pub fn laplacian_extreme_eigenvalues(g: &ComparisonGraph) -> Result<LaplacianSpectrum> {
    let n = g.node_count();
    let connected = g.is_connected();
    if g.edge_count() == 0 {
        return Ok(LaplacianSpectrum {
            lambda_min_nonzero: 0.0,
            lambda_max: 0.0,
            connected,
        });
    }
    let lap = g.laplacian();
    let lambda_max = power_iterate(n, |x, out| lap.apply(x, out))?;
    let shift = lambda_max;
    let top = power_iterate(n, |x, out| {
        lap.apply(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = shift * xi - *o;
        }
    })?;
    let lambda_min_nonzero = (shift - top).max(0.0);
    if !connected {
        log::warn!("graph is disconnected; smallest nonzero Laplacian eigenvalue is not the algebraic connectivity");
    }
    Ok(LaplacianSpectrum {
        lambda_min_nonzero,
        lambda_max,
        connected,
    })
}

/// Dominant eigenvalue of a symmetric PSD operator restricted to `𝟙⊥`.
fn power_iterate(n: usize, mut apply: impl FnMut(&[f64], &mut [f64])) -> Result<f64> {
    // deterministic start with components along every eigenvector generically nonzero
    let mut x: Vec<f64> = (0..n)
        .map(|i| ((i as f64 + 1.0) * 0.618_033_988_75).fract() + 0.1 * i as f64 / n as f64)
        .collect();
    project_out_ones(&mut x);
    if !normalize(&mut x) {
        return Ok(0.0);
    }
    let mut y = vec![0.0; n];
    for _ in 0..EIG_MAX_ITERS {
        apply(&x, &mut y);
        project_out_ones(&mut y);
        let mu: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let resid: f64 = x.iter().zip(&y).map(|(a, b)| (b - mu * a).powi(2)).sum::<f64>().sqrt();
        if resid <= EIG_REL_TOL * mu.abs().max(f64::MIN_POSITIVE) {
            return Ok(mu);
        }
        std::mem::swap(&mut x, &mut y);
        if !normalize(&mut x) {
            return Ok(0.0);
        }
    }
    Err(RankError::Numeric(format!(
        "power iteration did not converge in {EIG_MAX_ITERS} iterations"
    )))
}

fn project_out_ones(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

fn normalize(x: &mut [f64]) -> bool {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    x.iter_mut().for_each(|v| *v /= norm);
    true
}
