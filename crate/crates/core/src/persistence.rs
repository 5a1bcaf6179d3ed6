//! Persistent homology over Z/2.
//!
//! The boundary matrix of a [`FilteredComplex`] is reduced column by column
//! (standard algorithm with clearing). Every interval carries a
//! representative cycle: the reduced destroyer column for finite intervals,
//! the accumulated column operations for essential ones.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filtration::{ComplexError, FilteredComplex, Simplex};

#[derive(Debug, Error, PartialEq)]
pub enum PersistenceError {
    #[error("invalid complex: {0}")]
    InvalidComplex(#[from] ComplexError),
}

/// A homology class alive on `[birth, death)`; `death == None` is infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub dim: usize,
    pub birth: usize,
    pub death: Option<usize>,
    pub generator: Vec<Simplex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death_weight: Option<f64>,
}

impl Interval {
    pub fn is_essential(&self) -> bool {
        self.death.is_none()
    }

    pub fn alive_at(&self, t: usize) -> bool {
        self.birth <= t && self.death.is_none_or(|d| t < d)
    }
}

/// All intervals of a filtered complex together with its weight ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barcode {
    pub max_filter: usize,
    pub intervals: Vec<Interval>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ladder: Vec<f64>,
}

impl Barcode {
    pub fn empty() -> Self {
        Barcode {
            max_filter: 0,
            intervals: Vec::new(),
            ladder: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn in_dim(&self, dim: usize) -> impl Iterator<Item = &Interval> + '_ {
        self.intervals.iter().filter(move |i| i.dim == dim)
    }

    /// Betti numbers read off the barcode at filter index `t`, for dimensions
    /// `0..=max_dim`.
    pub fn betti_at(&self, t: usize, max_dim: usize) -> Vec<usize> {
        let mut out = vec![0; max_dim + 1];
        for i in &self.intervals {
            if i.dim <= max_dim && i.alive_at(t) {
                out[i.dim] += 1;
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("barcode always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Human-readable listing: one block per dimension, each bar followed by
    /// its generator written as a formal sum of simplices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let top = self.intervals.iter().map(|i| i.dim).max();
        let Some(top) = top else {
            return out;
        };
        for dim in 0..=top {
            writeln!(out, "β{dim}:").unwrap();
            for i in self.in_dim(dim) {
                let death = i.death.map_or("infinity".to_string(), |d| d.to_string());
                write!(out, "[{}, {death})", i.birth).unwrap();
                if let Some(bw) = i.birth_weight {
                    let dw = i.death_weight.map_or("infinity".to_string(), fmt_weight);
                    write!(out, " w[{}, {dw})", fmt_weight(bw)).unwrap();
                }
                let gens: Vec<String> = i.generator.iter().map(ToString::to_string).collect();
                writeln!(out, ": {}", gens.join(" + ")).unwrap();
            }
        }
        out
    }
}

fn fmt_weight(w: f64) -> String {
    if w.fract() == 0.0 && w.abs() < 1e15 {
        format!("{w:.1}")
    } else {
        format!("{w}")
    }
}

type Column = Vec<usize>;

/// `a ^= b` for sorted index lists.
fn add_column(a: &mut Column, b: &[usize]) {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    *a = out;
}

/// Boundary matrix in canonical column order.
struct BoundaryMatrix {
    columns: Vec<Column>,
    dims: Vec<usize>,
}

impl BoundaryMatrix {
    fn new(c: &FilteredComplex) -> Self {
        let index: HashMap<&Simplex, usize> = c
            .simplices()
            .iter()
            .enumerate()
            .map(|(i, (s, _))| (s, i))
            .collect();
        let mut columns = Vec::with_capacity(c.len());
        let mut dims = Vec::with_capacity(c.len());
        for (s, _) in c.simplices() {
            let mut col: Column = s.facets().map(|f| index[&f]).collect();
            col.sort_unstable();
            columns.push(col);
            dims.push(s.dim());
        }
        BoundaryMatrix { columns, dims }
    }
}

struct Reduction {
    /// reduced columns; empty for creators
    reduced: Vec<Column>,
    /// column operations, tracked only where generators may be needed
    ops: Vec<Option<Column>>,
    /// `pair_of_low[row] = column whose pivot is row`
    pair_of_low: Vec<Option<usize>>,
}

fn reduce(m: BoundaryMatrix, max_dim: usize) -> Reduction {
    let n = m.columns.len();
    let mut reduced = m.columns;
    let mut ops: Vec<Option<Column>> = vec![None; n];
    let mut pair_of_low: Vec<Option<usize>> = vec![None; n];
    let mut cleared = vec![false; n];
    let top = m.dims.iter().copied().max().unwrap_or(0).min(max_dim + 1);

    let mut by_dim: Vec<Vec<usize>> = vec![Vec::new(); top + 1];
    for (j, &d) in m.dims.iter().enumerate() {
        if d <= top {
            by_dim[d].push(j);
        }
    }

    for d in (0..=top).rev() {
        let track = d <= max_dim;
        for &j in &by_dim[d] {
            if track {
                ops[j] = Some(vec![j]);
            }
            if cleared[j] {
                reduced[j].clear();
                continue;
            }
            while let Some(&low) = reduced[j].last() {
                match pair_of_low[low] {
                    Some(k) => {
                        let other = std::mem::take(&mut reduced[k]);
                        add_column(&mut reduced[j], &other);
                        reduced[k] = other;
                        if track {
                            let other_ops = ops[k].take().unwrap_or_default();
                            add_column(ops[j].as_mut().unwrap(), &other_ops);
                            ops[k] = Some(other_ops);
                        }
                    }
                    None => break,
                }
            }
            if let Some(&low) = reduced[j].last() {
                pair_of_low[low] = Some(j);
                cleared[low] = true;
            }
        }
    }
    Reduction {
        reduced,
        ops,
        pair_of_low,
    }
}

/// Persistent homology of `c` in dimensions `0..=max_dim`.
///
/// Zero-length pairs (creator and destroyer at the same filter index) are not
/// reported.
pub fn persistent_homology(c: &FilteredComplex, max_dim: usize) -> Result<Barcode, PersistenceError> {
    c.validate()?;
    let simplices = c.simplices();
    let m = BoundaryMatrix::new(c);
    let dims = m.dims.clone();
    let red = reduce(m, max_dim);

    let to_chain = |col: &[usize]| -> Vec<Simplex> {
        col.iter().map(|&i| simplices[i].0.clone()).collect()
    };
    let weight = |t: usize| c.weight_at(t);

    let mut intervals = Vec::new();
    for (i, &d) in dims.iter().enumerate() {
        if d > max_dim || !red.reduced[i].is_empty() {
            continue;
        }
        let birth = simplices[i].1;
        match red.pair_of_low[i] {
            Some(j) => {
                let death = simplices[j].1;
                if death == birth {
                    continue;
                }
                intervals.push(Interval {
                    dim: d,
                    birth,
                    death: Some(death),
                    generator: to_chain(&red.reduced[j]),
                    birth_weight: weight(birth),
                    death_weight: weight(death),
                });
            }
            None => {
                let ops = red.ops[i].as_deref().unwrap_or(&[]);
                intervals.push(Interval {
                    dim: d,
                    birth,
                    death: None,
                    generator: to_chain(ops),
                    birth_weight: weight(birth),
                    death_weight: None,
                });
            }
        }
    }
    intervals.sort_by(|a, b| {
        (a.dim, a.birth, a.death.unwrap_or(usize::MAX))
            .cmp(&(b.dim, b.birth, b.death.unwrap_or(usize::MAX)))
    });
    Ok(Barcode {
        max_filter: c.max_filter(),
        intervals,
        ladder: c.ladder().to_vec(),
    })
}

/// Rank of a Z/2 matrix given as rows of packed bits.
fn rank_z2(mut rows: Vec<Vec<u64>>) -> usize {
    let mut rank = 0;
    let words = rows.first().map_or(0, Vec::len);
    for col in 0..words * 64 {
        let (w, bit) = (col / 64, 1u64 << (col % 64));
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] & bit != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & bit != 0 {
                for (x, y) in row.iter_mut().zip(&pivot) {
                    *x ^= y;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Betti numbers `β_0..=β_top` of the subcomplex with filter index `<= at`,
/// computed from ranks of the boundary operators. `top` is the highest
/// simplex dimension of the whole complex; the empty complex gives `[]`.
pub fn betti_numbers(c: &FilteredComplex, at: usize) -> Vec<usize> {
    let Some(top) = c.max_dim() else {
        return Vec::new();
    };
    let mut by_dim: Vec<Vec<&Simplex>> = vec![Vec::new(); top + 1];
    for s in c.at(at) {
        by_dim[s.dim()].push(s);
    }
    let index: Vec<HashMap<&Simplex, usize>> = by_dim
        .iter()
        .map(|ss| ss.iter().enumerate().map(|(i, s)| (*s, i)).collect())
        .collect();
    // rank of ∂_d : C_d -> C_{d-1}
    let boundary_rank = |d: usize| -> usize {
        if d == 0 || d > top || by_dim[d].is_empty() || by_dim[d - 1].is_empty() {
            return 0;
        }
        let words = by_dim[d - 1].len().div_ceil(64);
        let rows = by_dim[d]
            .iter()
            .map(|s| {
                let mut row = vec![0u64; words];
                for f in s.facets() {
                    let k = index[d - 1][&f];
                    row[k / 64] |= 1 << (k % 64);
                }
                row
            })
            .collect();
        rank_z2(rows)
    };
    let ranks: Vec<usize> = (0..=top + 1).map(boundary_rank).collect();
    (0..=top)
        .map(|d| by_dim[d].len() - ranks[d] - ranks[d + 1])
        .collect()
}

/// Dimension-0 bars by a union-find sweep over the edges, using the elder
/// rule with canonical-order tie breaking. Zero-length bars are dropped.
pub fn zero_dim_bars(c: &FilteredComplex) -> Vec<(usize, Option<usize>)> {
    let simplices = c.simplices();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut birth = Vec::new();
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut bars = Vec::new();
    for (s, t) in simplices {
        match s.dim() {
            0 => {
                slot.insert(s.vertices()[0], parent.len());
                parent.push(parent.len());
                birth.push(*t);
            }
            1 => {
                let a = find(&mut parent, slot[&s.vertices()[0]]);
                let b = find(&mut parent, slot[&s.vertices()[1]]);
                if a != b {
                    // roots are the oldest member; the younger dies
                    let (old, young) = if a < b { (a, b) } else { (b, a) };
                    if birth[young] != *t {
                        bars.push((birth[young], Some(*t)));
                    }
                    parent[young] = old;
                }
            }
            _ => {}
        }
    }
    for x in 0..parent.len() {
        if find(&mut parent, x) == x {
            bars.push((birth[x], None));
        }
    }
    bars.sort_by_key(|&(b, d)| (b, d.unwrap_or(usize::MAX)));
    bars
}

/// Z/2 boundary of a chain; empty for cycles.
pub fn chain_boundary(chain: &[Simplex]) -> Vec<Simplex> {
    let mut counts: HashMap<Simplex, usize> = HashMap::new();
    for s in chain {
        for f in s.facets() {
            *counts.entry(f).or_default() += 1;
        }
    }
    let mut out: Vec<Simplex> = counts
        .into_iter()
        .filter(|(_, k)| k % 2 == 1)
        .map(|(s, _)| s)
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::{build_filtration, WeightOrder};
    use crate::graph::WeightedGraph;

    fn complex(items: &[(&[usize], usize)]) -> FilteredComplex {
        FilteredComplex::with_index_ladder(
            items
                .iter()
                .map(|(vs, t)| (Simplex::new(vs.to_vec()).unwrap(), *t))
                .collect(),
        )
    }

    #[test]
    fn single_vertex() {
        let b = persistent_homology(&complex(&[(&[0], 0)]), 2).unwrap();
        assert_eq!(b.intervals.len(), 1);
        assert_eq!((b.intervals[0].dim, b.intervals[0].birth, b.intervals[0].death), (0, 0, None));
    }

    #[test]
    fn hollow_triangle() {
        let c = complex(&[
            (&[0], 0),
            (&[1], 0),
            (&[2], 0),
            (&[0, 1], 0),
            (&[1, 2], 0),
            (&[0, 2], 0),
        ]);
        let b = persistent_homology(&c, 1).unwrap();
        let spans: Vec<_> = b.intervals.iter().map(|i| (i.dim, i.birth, i.death)).collect();
        assert_eq!(spans, vec![(0, 0, None), (1, 0, None)]);
        let cycle = &b.intervals[1].generator;
        assert_eq!(cycle.len(), 3);
        assert!(chain_boundary(cycle).is_empty());
        assert_eq!(betti_numbers(&c, 0), vec![1, 1]);
    }

    #[test]
    fn filled_late_triangle_is_noise() {
        let c = complex(&[
            (&[0], 0),
            (&[1], 0),
            (&[2], 0),
            (&[0, 1], 0),
            (&[1, 2], 0),
            (&[0, 2], 0),
            (&[0, 1, 2], 1),
        ]);
        let b = persistent_homology(&c, 1).unwrap();
        let spans: Vec<_> = b.intervals.iter().map(|i| (i.dim, i.birth, i.death)).collect();
        assert_eq!(spans, vec![(0, 0, None), (1, 0, Some(1))]);
        assert!(chain_boundary(&b.intervals[1].generator).is_empty());
        assert_eq!(b.intervals[1].generator.len(), 3);
    }

    #[test]
    fn rejects_invalid_complex() {
        let c = complex(&[(&[0], 0), (&[0, 1], 0)]);
        assert!(matches!(
            persistent_homology(&c, 1),
            Err(PersistenceError::InvalidComplex(_))
        ));
    }

    #[test]
    fn empty_complex() {
        let c = FilteredComplex::new(Vec::new(), Vec::new());
        assert!(betti_numbers(&c, 0).is_empty());
        assert!(persistent_homology(&c, 1).unwrap().is_empty());
    }

    #[test]
    fn column_addition_is_symmetric_difference() {
        let mut a = vec![1, 3, 5, 7];
        add_column(&mut a, &[0, 3, 7, 9]);
        assert_eq!(a, vec![0, 1, 5, 9]);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_z2(vec![vec![0b011], vec![0b110], vec![0b101]]), 2);
        assert_eq!(rank_z2(vec![vec![0b1], vec![0b1]]), 1);
        assert_eq!(rank_z2(vec![]), 0);
    }

    #[test]
    fn barcode_json_roundtrip_and_text() {
        let g = WeightedGraph::from_edges([(0, 1, 2.0), (1, 2, 2.0), (0, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let b = persistent_homology(&build_filtration(&g, WeightOrder::Descending, 2), 1).unwrap();
        let back = Barcode::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
        let v: serde_json::Value = serde_json::from_str(&b.to_json()).unwrap();
        assert!(v["intervals"][0]["death"].is_null());
        assert!(b.to_text().starts_with("β0:\n[0, infinity) w[2.0, infinity): [0]"));
    }

    #[test]
    fn union_find_matches_reduction_on_path() {
        let g = WeightedGraph::from_edges([(0, 1, 3.0), (2, 3, 2.0), (1, 2, 1.0)]).unwrap();
        let c = build_filtration(&g, WeightOrder::Descending, 1);
        let b = persistent_homology(&c, 0).unwrap();
        let from_red: Vec<_> = b.intervals.iter().map(|i| (i.birth, i.death)).collect();
        assert_eq!(from_red, zero_dim_bars(&c));
        assert_eq!(from_red, vec![(0, None), (1, Some(2))]);
    }
}
