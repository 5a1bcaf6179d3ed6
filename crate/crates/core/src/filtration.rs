//! Clique-weight-rank filtration of a weighted graph.
//!
//! The distinct edge weights, sorted, form a ladder whose positions are the
//! discrete filter indices. Every clique of the graph becomes a simplex that
//! enters the filtration once its last edge is present.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{VertexId, WeightedGraph};

#[derive(Debug, Error, PartialEq)]
pub enum FiltrationError {
    #[error("graph has no edges")]
    EmptyGraph,
}

/// Direction in which the weight ladder is walked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightOrder {
    /// Strongest interactions enter first.
    #[default]
    Descending,
    Ascending,
}

impl FromStr for WeightOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "descending" | "desc" => Ok(WeightOrder::Descending),
            "ascending" | "asc" => Ok(WeightOrder::Ascending),
            other => Err(format!("unknown weight order {other:?}")),
        }
    }
}

impl fmt::Display for WeightOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightOrder::Descending => "descending",
            WeightOrder::Ascending => "ascending",
        })
    }
}

/// A simplex given by its strictly ascending vertex list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Simplex(Vec<VertexId>);

impl Simplex {
    /// Sorts and deduplicates; `None` for an empty vertex set.
    pub fn new(mut vertices: Vec<VertexId>) -> Option<Self> {
        vertices.sort_unstable();
        vertices.dedup();
        if vertices.is_empty() {
            None
        } else {
            Some(Simplex(vertices))
        }
    }

    pub fn vertex(v: VertexId) -> Self {
        Simplex(vec![v])
    }

    pub fn edge(u: VertexId, v: VertexId) -> Self {
        Simplex::new(vec![u, v]).unwrap()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    /// Codimension-one faces, each obtained by dropping one vertex.
    pub fn facets(&self) -> impl Iterator<Item = Simplex> + '_ {
        let n = self.0.len();
        (0..n).filter(move |_| n > 1).map(move |skip| {
            Simplex(
                self.0
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect(),
            )
        })
    }

    /// All nonempty proper faces.
    pub fn faces(&self) -> Vec<Simplex> {
        let n = self.0.len();
        (1u64..(1u64 << n) - 1)
            .map(|mask| {
                Simplex(
                    (0..n)
                        .filter(|&i| mask & (1 << i) != 0)
                        .map(|i| self.0[i])
                        .collect(),
                )
            })
            .collect()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.0.binary_search(&v).is_ok()
    }
}

impl fmt::Display for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

/// Canonical simplex ordering: filter index, then dimension, then vertices.
pub fn canonical_cmp(a: &(Simplex, usize), b: &(Simplex, usize)) -> Ordering {
    a.1.cmp(&b.1)
        .then(a.0.dim().cmp(&b.0.dim()))
        .then_with(|| a.0.cmp(&b.0))
}

#[derive(Debug, Error, PartialEq)]
pub enum ComplexError {
    #[error("face {face} of {simplex} is missing")]
    MissingFace { simplex: Simplex, face: Simplex },
    #[error("face {face} enters after {simplex}")]
    NotMonotone { simplex: Simplex, face: Simplex },
    #[error("simplex {0} appears twice")]
    Duplicate(Simplex),
    #[error("filter index {index} of {simplex} is outside the weight ladder")]
    IndexOutOfRange { simplex: Simplex, index: usize },
}

/// Simplices tagged with discrete filter indices, stored in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredComplex {
    simplices: Vec<(Simplex, usize)>,
    ladder: Vec<f64>,
}

impl FilteredComplex {
    /// Sorts into canonical order. No invariants are checked; see
    /// [`FilteredComplex::validate`].
    pub fn new(mut simplices: Vec<(Simplex, usize)>, ladder: Vec<f64>) -> Self {
        simplices.sort_by(canonical_cmp);
        FilteredComplex { simplices, ladder }
    }

    /// Complex whose ladder is just the indices `0..=max_index`.
    pub fn with_index_ladder(simplices: Vec<(Simplex, usize)>) -> Self {
        let top = simplices.iter().map(|s| s.1).max().map_or(0, |m| m + 1);
        Self::new(simplices, (0..top).map(|i| i as f64).collect())
    }

    pub fn simplices(&self) -> &[(Simplex, usize)] {
        &self.simplices
    }

    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    /// Largest filter index, 0 for an empty complex.
    pub fn max_filter(&self) -> usize {
        self.simplices.iter().map(|s| s.1).max().unwrap_or(0)
    }

    /// Highest simplex dimension, `None` for the empty complex.
    pub fn max_dim(&self) -> Option<usize> {
        self.simplices.iter().map(|s| s.0.dim()).max()
    }

    /// Weight at a ladder position, if the ladder has one.
    pub fn weight_at(&self, index: usize) -> Option<f64> {
        self.ladder.get(index).copied()
    }

    /// Simplices present at filter index `at`.
    pub fn at(&self, at: usize) -> impl Iterator<Item = &Simplex> + '_ {
        self.simplices
            .iter()
            .filter(move |s| s.1 <= at)
            .map(|s| &s.0)
    }

    pub fn validate(&self) -> Result<(), ComplexError> {
        let mut index: HashMap<&Simplex, usize> = HashMap::with_capacity(self.simplices.len());
        for (s, t) in &self.simplices {
            if index.insert(s, *t).is_some() {
                return Err(ComplexError::Duplicate(s.clone()));
            }
            let bound = self.ladder.len().max(1);
            if *t >= bound {
                return Err(ComplexError::IndexOutOfRange {
                    simplex: s.clone(),
                    index: *t,
                });
            }
        }
        for (s, t) in &self.simplices {
            for face in s.facets() {
                match index.get(&face) {
                    None => {
                        return Err(ComplexError::MissingFace {
                            simplex: s.clone(),
                            face,
                        })
                    }
                    Some(ft) if ft > t => {
                        return Err(ComplexError::NotMonotone {
                            simplex: s.clone(),
                            face,
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// One `filter_index;v0 v1 ... vk` line per simplex, canonical order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (s, t) in &self.simplices {
            write!(out, "{t};").unwrap();
            for (i, v) in s.vertices().iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Distinct edge weights sorted per `order`; the position of a weight is its
/// filter index.
pub fn weight_ladder(g: &WeightedGraph, order: WeightOrder) -> Result<Vec<f64>, FiltrationError> {
    if g.num_edges() == 0 {
        return Err(FiltrationError::EmptyGraph);
    }
    let mut ws: Vec<f64> = g.edges().map(|(_, _, w)| w).collect();
    match order {
        WeightOrder::Descending => ws.sort_by(|a, b| b.total_cmp(a)),
        WeightOrder::Ascending => ws.sort_by(|a, b| a.total_cmp(b)),
    }
    ws.dedup();
    Ok(ws)
}

/// Inclusion-maximal cliques, each sorted, in lexicographic order. Isolated
/// vertices come back as singletons.
///
/// Bron-Kerbosch with Tomita pivoting, with the outer level run in a
/// degeneracy ordering.
pub fn maximal_cliques(g: &WeightedGraph) -> Vec<Vec<VertexId>> {
    let adj = g.adjacency();
    let verts: Vec<VertexId> = adj.keys().copied().collect();
    let pos: HashMap<VertexId, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let nbrs: Vec<BTreeSet<usize>> = verts
        .iter()
        .map(|v| adj[v].iter().map(|u| pos[u]).collect())
        .collect();

    let mut out: Vec<Vec<VertexId>> = Vec::new();
    let order = degeneracy_order(&nbrs);
    let mut rank = vec![0usize; verts.len()];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    for &v in &order {
        let p: BTreeSet<usize> = nbrs[v].iter().copied().filter(|&u| rank[u] > rank[v]).collect();
        let x: BTreeSet<usize> = nbrs[v].iter().copied().filter(|&u| rank[u] < rank[v]).collect();
        let mut r = vec![v];
        bron_kerbosch(&nbrs, &mut r, p, x, &mut |clique| {
            let mut c: Vec<VertexId> = clique.iter().map(|&i| verts[i]).collect();
            c.sort_unstable();
            out.push(c);
        });
    }
    out.sort();
    out
}

fn degeneracy_order(nbrs: &[BTreeSet<usize>]) -> Vec<usize> {
    let n = nbrs.len();
    let mut degree: Vec<usize> = nbrs.iter().map(BTreeSet::len).collect();
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    // (degree, vertex) priority set
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (degree[v], v)).collect();
    while let Some((_, v)) = queue.pop_first() {
        removed[v] = true;
        order.push(v);
        for &u in &nbrs[v] {
            if !removed[u] {
                queue.remove(&(degree[u], u));
                degree[u] -= 1;
                queue.insert((degree[u], u));
            }
        }
    }
    order
}

fn bron_kerbosch(
    nbrs: &[BTreeSet<usize>],
    r: &mut Vec<usize>,
    mut p: BTreeSet<usize>,
    mut x: BTreeSet<usize>,
    emit: &mut impl FnMut(&[usize]),
) {
    if p.is_empty() {
        if x.is_empty() {
            emit(r);
        }
        return;
    }
    // pivot maximizing |P ∩ N(u)|
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| p.intersection(&nbrs[u]).count())
        .unwrap();
    let candidates: Vec<usize> = p.difference(&nbrs[pivot]).copied().collect();
    for v in candidates {
        let np = p.intersection(&nbrs[v]).copied().collect();
        let nx = x.intersection(&nbrs[v]).copied().collect();
        r.push(v);
        bron_kerbosch(nbrs, r, np, nx, emit);
        r.pop();
        p.remove(&v);
        x.insert(v);
    }
}

/// Builds the clique complex of `g` up to dimension `max_dim`, ranking every
/// simplex by the ladder index of its weakest edge.
///
/// Vertices take the earliest index among their incident edges; isolated
/// vertices enter at 0.
pub fn build_filtration(g: &WeightedGraph, order: WeightOrder, max_dim: usize) -> FilteredComplex {
    let ladder = weight_ladder(g, order).unwrap_or_default();
    let rank: HashMap<u64, usize> = ladder
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_bits(), i))
        .collect();
    let edge_index = |u: VertexId, v: VertexId| -> usize {
        rank[&g.weight(u, v).expect("clique pair is an edge").to_bits()]
    };

    let mut vertex_index: HashMap<VertexId, usize> = g.vertices().map(|v| (v, usize::MAX)).collect();
    for (u, v, w) in g.edges() {
        let t = rank[&w.to_bits()];
        for x in [u, v] {
            let slot = vertex_index.get_mut(&x).unwrap();
            *slot = (*slot).min(t);
        }
    }

    let mut seen: BTreeSet<Vec<VertexId>> = BTreeSet::new();
    let mut simplices = Vec::new();
    for clique in maximal_cliques(g) {
        let k = clique.len().min(max_dim + 1);
        for size in 1..=k {
            for_each_subset(&clique, size, &mut |sub| {
                if seen.contains(sub) {
                    return;
                }
                seen.insert(sub.to_vec());
                let t = if sub.len() == 1 {
                    let t = vertex_index[&sub[0]];
                    if t == usize::MAX {
                        0
                    } else {
                        t
                    }
                } else {
                    let mut t = 0;
                    for i in 0..sub.len() {
                        for j in (i + 1)..sub.len() {
                            t = t.max(edge_index(sub[i], sub[j]));
                        }
                    }
                    t
                };
                simplices.push((Simplex(sub.to_vec()), t));
            });
        }
    }
    FilteredComplex::new(simplices, ladder)
}

fn for_each_subset(items: &[VertexId], size: usize, f: &mut impl FnMut(&[VertexId])) {
    fn go(
        items: &[VertexId],
        size: usize,
        start: usize,
        cur: &mut Vec<VertexId>,
        f: &mut impl FnMut(&[VertexId]),
    ) {
        if cur.len() == size {
            f(cur);
            return;
        }
        let need = size - cur.len();
        for i in start..=(items.len() - need) {
            cur.push(items[i]);
            go(items, size, i + 1, cur, f);
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(size);
    go(items, size, 0, &mut cur, f);
}
