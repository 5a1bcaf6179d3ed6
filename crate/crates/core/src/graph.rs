//! Weighted undirected graphs and observation series.
//!
//! A [`WeightedGraph`] is the input of every downstream stage. Vertex ids are
//! dense non-negative integers; an optional name map carries display labels
//! such as `Ab_13`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = usize;

/// Absolute tolerance used when checking matrix symmetry.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate edge {{{u}, {v}}}")]
    DuplicateEdge { u: VertexId, v: VertexId },
    #[error("self-loop on vertex {0}")]
    SelfLoop(VertexId),
    #[error("edge {{{u}, {v}}} has non-positive weight {w}")]
    NonPositiveWeight { u: VertexId, v: VertexId, w: f64 },
    #[error("edge {{{u}, {v}}} has non-finite weight")]
    NonFinite { u: VertexId, v: VertexId },
    #[error("matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("matrix is not square")]
    NotSquare,
    #[error("observation ticks must be strictly increasing (tick {0} out of order)")]
    TickOrder(u64),
    #[error("bad observation file name {0:?}, expected obs_<tick>.csv")]
    BadFileName(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Undirected graph with strictly positive, finite edge weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    vertices: BTreeSet<VertexId>,
    // keyed by (min, max)
    edges: BTreeMap<(VertexId, VertexId), f64>,
    names: BTreeMap<VertexId, String>,
}

impl WeightedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph with vertices `0..n` and no edges.
    pub fn with_vertices(n: usize) -> Self {
        WeightedGraph {
            vertices: (0..n).collect(),
            ..Self::default()
        }
    }

    /// Builds a graph from `(u, v, w)` triples, rejecting anything that breaks
    /// the graph invariants.
    pub fn from_edges<I>(edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (VertexId, VertexId, f64)>,
    {
        let mut g = WeightedGraph::new();
        for (u, v, w) in edges {
            g.add_edge(u, v, w)?;
        }
        Ok(g)
    }

    pub fn add_vertex(&mut self, v: VertexId) {
        self.vertices.insert(v);
    }

    pub fn add_edge(&mut self, u: VertexId, v: VertexId, w: f64) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if !w.is_finite() {
            return Err(GraphError::NonFinite { u, v });
        }
        if w <= 0.0 {
            return Err(GraphError::NonPositiveWeight { u, v, w });
        }
        let key = (u.min(v), u.max(v));
        if self.edges.contains_key(&key) {
            return Err(GraphError::DuplicateEdge { u: key.0, v: key.1 });
        }
        self.edges.insert(key, w);
        self.vertices.insert(u);
        self.vertices.insert(v);
        Ok(())
    }

    pub fn set_name(&mut self, v: VertexId, name: impl Into<String>) {
        self.names.insert(v, name.into());
    }

    /// Display label of `v`; falls back to the numeric id.
    pub fn name(&self, v: VertexId) -> String {
        self.names
            .get(&v)
            .cloned()
            .unwrap_or_else(|| v.to_string())
    }

    pub fn names(&self) -> &BTreeMap<VertexId, String> {
        &self.names
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().copied()
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        self.vertices.contains(&v)
    }

    /// Edges as `(u, v, w)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, f64)> + '_ {
        self.edges.iter().map(|(&(u, v), &w)| (u, v, w))
    }

    pub fn weight(&self, u: VertexId, v: VertexId) -> Option<f64> {
        self.edges.get(&(u.min(v), u.max(v))).copied()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Sorted adjacency lists.
    pub fn adjacency(&self) -> BTreeMap<VertexId, Vec<VertexId>> {
        let mut adj: BTreeMap<VertexId, Vec<VertexId>> =
            self.vertices.iter().map(|&v| (v, Vec::new())).collect();
        for &(u, v) in self.edges.keys() {
            adj.get_mut(&u).unwrap().push(v);
            adj.get_mut(&v).unwrap().push(u);
        }
        for list in adj.values_mut() {
            list.sort_unstable();
        }
        adj
    }

    /// Parses the `u,v,weight` edge-list format. `#` lines and blank lines
    /// are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut g = WeightedGraph::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let parse_err = |msg: String| GraphError::Parse { line: lineno, msg };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected 3 fields `u,v,weight`, found {}",
                    fields.len()
                )));
            }
            let u: VertexId = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad vertex id {:?}", fields[0])))?;
            let v: VertexId = fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad vertex id {:?}", fields[1])))?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad weight {:?}", fields[2])))?;
            g.add_edge(u, v, w)?;
        }
        Ok(g)
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse_edge_list(&text)
    }

    /// Serializes to the edge-list format. Weights use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v, w) in self.edges() {
            writeln!(out, "{u},{v},{w}").unwrap();
        }
        out
    }

    pub fn save_edge_list(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let path = path.as_ref();
        fs::write(path, self.to_edge_list()).map_err(io_err(path))
    }

    /// Reads an undirected graph off a symmetric matrix: vertex `i` per row,
    /// edge `{i, j}` whenever `m[i][j] > threshold` (and positive). The
    /// diagonal is ignored.
    pub fn from_symmetric_matrix(m: &[Vec<f64>], threshold: f64) -> Result<Self, GraphError> {
        let n = m.len();
        if m.iter().any(|row| row.len() != n) {
            return Err(GraphError::NotSquare);
        }
        let mut g = WeightedGraph::with_vertices(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m[i][j], m[j][i]);
                if a.is_nan() || b.is_nan() || (a - b).abs() > SYMMETRY_TOL {
                    return Err(GraphError::NotSymmetric { i, j });
                }
                if a > threshold && a > 0.0 {
                    g.add_edge(i, j, a)?;
                }
            }
        }
        Ok(g)
    }
}

/// One observation of the system at a given tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub tick: u64,
    pub graph: WeightedGraph,
}

#[derive(Serialize, Deserialize)]
struct ObservationRecord {
    tick: u64,
    edges: Vec<(VertexId, VertexId, f64)>,
}

/// Observations ordered by strictly increasing tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSeries {
    observations: Vec<Observation>,
}

impl ObservationSeries {
    pub fn new(observations: Vec<Observation>) -> Result<Self, GraphError> {
        for pair in observations.windows(2) {
            if pair[1].tick <= pair[0].tick {
                return Err(GraphError::TickOrder(pair[1].tick));
            }
        }
        Ok(ObservationSeries { observations })
    }

    pub fn push(&mut self, tick: u64, graph: WeightedGraph) -> Result<(), GraphError> {
        if let Some(last) = self.observations.last() {
            if tick <= last.tick {
                return Err(GraphError::TickOrder(tick));
            }
        }
        self.observations.push(Observation { tick, graph });
        Ok(())
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// Parses `[{"tick": t, "edges": [[u, v, w], ...]}, ...]`.
    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        let records: Vec<ObservationRecord> = serde_json::from_str(text)?;
        let mut obs = Vec::with_capacity(records.len());
        for rec in records {
            obs.push(Observation {
                tick: rec.tick,
                graph: WeightedGraph::from_edges(rec.edges)?,
            });
        }
        Self::new(obs)
    }

    pub fn to_json_string(&self) -> String {
        let records: Vec<ObservationRecord> = self
            .observations
            .iter()
            .map(|o| ObservationRecord {
                tick: o.tick,
                edges: o.graph.edges().collect(),
            })
            .collect();
        serde_json::to_string(&records).expect("observation records always serialize")
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json_str(&text)
    }

    /// Loads every `obs_<tick>.csv` in `dir`; other files are ignored.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, GraphError> {
        let dir = dir.as_ref();
        let mut obs = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(stem) = name.strip_prefix("obs_").and_then(|s| s.strip_suffix(".csv")) else {
                continue;
            };
            let tick: u64 = stem
                .parse()
                .map_err(|_| GraphError::BadFileName(name.clone()))?;
            obs.push(Observation {
                tick,
                graph: WeightedGraph::load_edge_list(entry.path())?,
            });
        }
        obs.sort_by_key(|o| o.tick);
        Self::new(obs)
    }

    /// Loads a directory of `obs_<tick>.csv` files or a single JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        if path.is_dir() {
            Self::load_dir(path)
        } else {
            Self::load_json(path)
        }
    }

    /// Writes one `obs_<tick>.csv` per observation into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), GraphError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for o in &self.observations {
            o.graph
                .save_edge_list(dir.join(format!("obs_{}.csv", o.tick)))?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a ObservationSeries {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}
