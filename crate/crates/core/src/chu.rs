//! Chu spaces over the alphabet {0, 1, 2} and their Hasse diagrams.
//!
//! Rows are actions, columns are states; entry 0 means the action has not
//! started, 1 that it is executing, 2 that it has finished. Spaces are stored
//! extensionally.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::VertexId;
use crate::persistence::Barcode;

/// Largest number of actions a full space may have (3^16 states).
pub const MAX_ACTIONS: usize = 16;

pub const UNSTARTED: u8 = 0;
pub const EXECUTING: u8 = 1;
pub const FINISHED: u8 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum ChuError {
    #[error("no generator simplex of positive dimension in any essential interval")]
    NoGenerators,
    #[error("at least one action name is required")]
    NoActionNames,
    #[error("action {0} appears in both spaces")]
    LabelClash(ActionLabel),
    #[error("action index {0} out of range")]
    BadIndex(usize),
    #[error("state {0:?} is not a vector over {{0,1,2}} of the right length")]
    BadState(Vec<u8>),
    #[error("space would exceed 3^{MAX_ACTIONS} states")]
    TooLarge,
}

/// `(action, source, target)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionLabel {
    pub action: String,
    pub source: VertexId,
    pub target: VertexId,
}

impl ActionLabel {
    pub fn new(action: impl Into<String>, source: VertexId, target: VertexId) -> Self {
        ActionLabel {
            action: action.into(),
            source,
            target,
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.action, self.source, self.target)
    }
}

/// Derives action labels from the generators of the essential intervals.
///
/// Every pair of distinct vertices sharing a generator simplex of positive
/// dimension yields one label per action name, source before target in
/// vertex order; with `bidirectional` the reversed labels follow. Labels are
/// deduplicated, first occurrence wins.
pub fn actions_from_generators(
    b: &Barcode,
    action_names: &[String],
    bidirectional: bool,
) -> Result<Vec<ActionLabel>, ChuError> {
    if action_names.is_empty() {
        return Err(ChuError::NoActionNames);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut any = false;
    for interval in b.intervals.iter().filter(|i| i.is_essential()) {
        for s in interval.generator.iter().filter(|s| s.dim() > 0) {
            any = true;
            let vs = s.vertices();
            for i in 0..vs.len() {
                for j in (i + 1)..vs.len() {
                    let mut dirs = vec![(vs[i], vs[j])];
                    if bidirectional {
                        dirs.push((vs[j], vs[i]));
                    }
                    for (src, dst) in dirs {
                        for name in action_names {
                            let label = ActionLabel::new(name.clone(), src, dst);
                            if seen.insert(label.clone()) {
                                out.push(label);
                            }
                        }
                    }
                }
            }
        }
    }
    if !any {
        return Err(ChuError::NoGenerators);
    }
    Ok(out)
}

/// Column ordering used when printing a space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChuOrder {
    /// Lexicographic over the state vectors.
    #[default]
    Lexicographic,
    /// By number of started actions, then by the first started action and
    /// its level, then by the levels and positions of the others.
    BySupport,
}

fn support_key(s: &[u8]) -> (usize, Vec<(usize, usize)>) {
    let nz: Vec<(usize, u8)> = s
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0)
        .map(|(i, &x)| (i, x))
        .collect();
    let mut key = Vec::with_capacity(nz.len());
    if let Some(&(i, x)) = nz.first() {
        key.push((i, x as usize));
    }
    for &(i, x) in nz.iter().skip(1) {
        key.push((x as usize, i));
    }
    (nz.len(), key)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChuSpace {
    actions: Vec<ActionLabel>,
    /// sorted lexicographically, distinct
    states: Vec<Vec<u8>>,
}

impl ChuSpace {
    pub fn new(actions: Vec<ActionLabel>, mut states: Vec<Vec<u8>>) -> Result<Self, ChuError> {
        for s in &states {
            if s.len() != actions.len() || s.iter().any(|&x| x > FINISHED) {
                return Err(ChuError::BadState(s.clone()));
            }
        }
        states.sort();
        states.dedup();
        Ok(ChuSpace { actions, states })
    }

    pub fn actions(&self) -> &[ActionLabel] {
        &self.actions
    }

    /// States in lexicographic order.
    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn contains(&self, state: &[u8]) -> bool {
        self.states.binary_search_by(|s| s.as_slice().cmp(state)).is_ok()
    }

    /// Membership relation `r(action, state)`.
    pub fn entry(&self, action: usize, state: usize) -> u8 {
        self.states[state][action]
    }

    pub fn states_in(&self, order: ChuOrder) -> Vec<&[u8]> {
        let mut out: Vec<&[u8]> = self.states.iter().map(Vec::as_slice).collect();
        if order == ChuOrder::BySupport {
            out.sort_by_cached_key(|s| support_key(s));
        }
        out
    }

    /// Matrix dump: one row per action, one column per state.
    pub fn to_csv(&self, order: ChuOrder) -> String {
        let states = self.states_in(order);
        let mut out = String::from("action");
        for k in 1..=states.len() {
            write!(out, ",s{k}").unwrap();
        }
        out.push('\n');
        for (a, label) in self.actions.iter().enumerate() {
            write!(out, "\"{label}\"").unwrap();
            for s in &states {
                write!(out, ",{}", s[a]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// All `3^|A|` states.
pub fn full_chu(actions: Vec<ActionLabel>) -> Result<ChuSpace, ChuError> {
    let n = actions.len();
    if n > MAX_ACTIONS {
        return Err(ChuError::TooLarge);
    }
    let total = 3usize.pow(n as u32);
    let states = (0..total)
        .map(|mut code| {
            let mut s = vec![0u8; n];
            for slot in s.iter_mut().rev() {
                *slot = (code % 3) as u8;
                code /= 3;
            }
            s
        })
        .collect();
    Ok(ChuSpace { actions, states })
}

/// Drops every state in which both actions of some mutex pair have started.
pub fn constrain(c: &ChuSpace, mutex: &[(usize, usize)]) -> Result<ChuSpace, ChuError> {
    let n = c.actions.len();
    for &(i, j) in mutex {
        for k in [i, j] {
            if k >= n {
                return Err(ChuError::BadIndex(k));
            }
        }
    }
    let states = c
        .states
        .iter()
        .filter(|s| mutex.iter().all(|&(i, j)| s[i].min(s[j]) == UNSTARTED))
        .cloned()
        .collect();
    Ok(ChuSpace {
        actions: c.actions.clone(),
        states,
    })
}

/// Parallel composition: actions concatenated, states the cartesian product.
pub fn parallel(c1: &ChuSpace, c2: &ChuSpace) -> Result<ChuSpace, ChuError> {
    let left: HashSet<&ActionLabel> = c1.actions.iter().collect();
    if let Some(clash) = c2.actions.iter().find(|a| left.contains(a)) {
        return Err(ChuError::LabelClash(clash.clone()));
    }
    if c1.actions.len() + c2.actions.len() > MAX_ACTIONS {
        return Err(ChuError::TooLarge);
    }
    let mut actions = c1.actions.clone();
    actions.extend(c2.actions.iter().cloned());
    let mut states = Vec::with_capacity(c1.len() * c2.len());
    for s in &c1.states {
        for t in &c2.states {
            let mut v = s.clone();
            v.extend_from_slice(t);
            states.push(v);
        }
    }
    // lexicographic order is preserved by the nested loop
    Ok(ChuSpace { actions, states })
}

/// Covering relation of a Chu space: one action advances by one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HasseDiagram {
    pub nodes: Vec<Vec<u8>>,
    /// `(from, to)` indices into `nodes`
    pub edges: Vec<(usize, usize)>,
}

impl HasseDiagram {
    pub fn rank(state: &[u8]) -> usize {
        state.iter().map(|&x| x as usize).sum()
    }

    pub fn has_edge(&self, from: &[u8], to: &[u8]) -> bool {
        self.edges
            .iter()
            .any(|&(a, b)| self.nodes[a] == from && self.nodes[b] == to)
    }

    /// Nodes with no outgoing edge.
    pub fn maximal(&self) -> Vec<&[u8]> {
        let mut has_out = vec![false; self.nodes.len()];
        for &(a, _) in &self.edges {
            has_out[a] = true;
        }
        self.nodes
            .iter()
            .zip(has_out)
            .filter(|(_, out)| !out)
            .map(|(n, _)| n.as_slice())
            .collect()
    }

    /// The all-unstarted state, if present.
    pub fn bottom(&self) -> Option<usize> {
        self.nodes.iter().position(|s| s.iter().all(|&x| x == UNSTARTED))
    }

    /// DOT drawing bottom-up with one rank per coordinate sum.
    pub fn to_dot(&self, name: &str) -> String {
        let label = |s: &[u8]| {
            let parts: Vec<String> = s.iter().map(u8::to_string).collect();
            format!("({})", parts.join(","))
        };
        let mut out = String::new();
        writeln!(out, "digraph \"{name}\" {{").unwrap();
        writeln!(out, "  rankdir=BT;").unwrap();
        writeln!(out, "  node [shape=plaintext];").unwrap();
        let mut ranks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.nodes.iter().enumerate() {
            writeln!(out, "  n{i} [label=\"{}\"];", label(s)).unwrap();
            ranks.entry(Self::rank(s)).or_default().push(i);
        }
        for (r, ids) in &ranks {
            let names: Vec<String> = ids.iter().map(|i| format!("n{i}")).collect();
            writeln!(out, "  {{ rank=same; {} }} // rank {r}", names.join("; ")).unwrap();
        }
        for &(a, b) in &self.edges {
            writeln!(out, "  n{a} -> n{b};").unwrap();
        }
        out.push_str("}\n");
        out
    }
}

pub fn hasse(c: &ChuSpace) -> HasseDiagram {
    let nodes = c.states.clone();
    let index: HashMap<&[u8], usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_slice(), i))
        .collect();
    let mut edges = Vec::new();
    let mut next = Vec::new();
    for (i, s) in nodes.iter().enumerate() {
        for k in 0..s.len() {
            if s[k] < FINISHED {
                next.clear();
                next.extend_from_slice(s);
                next[k] += 1;
                if let Some(&j) = index.get(next.as_slice()) {
                    edges.push((i, j));
                }
            }
        }
    }
    HasseDiagram { nodes, edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::Simplex;
    use crate::persistence::Interval;

    fn labels(n: usize) -> Vec<ActionLabel> {
        (0..n).map(|i| ActionLabel::new(format!("a{i}"), i, i + 1)).collect()
    }

    fn essential(generator: Vec<Simplex>) -> Interval {
        Interval {
            dim: 1,
            birth: 0,
            death: None,
            generator,
            birth_weight: None,
            death_weight: None,
        }
    }

    #[test]
    fn labels_from_single_edge() {
        let b = Barcode {
            max_filter: 0,
            intervals: vec![essential(vec![Simplex::edge(1, 13)])],
            ladder: vec![],
        };
        let names = vec!["elicits".to_string(), "reduces".to_string()];
        let got = actions_from_generators(&b, &names, true).unwrap();
        assert_eq!(
            got,
            vec![
                ActionLabel::new("elicits", 1, 13),
                ActionLabel::new("reduces", 1, 13),
                ActionLabel::new("elicits", 13, 1),
                ActionLabel::new("reduces", 13, 1),
            ]
        );
        assert_eq!(actions_from_generators(&b, &names, false).unwrap().len(), 2);
    }

    #[test]
    fn labels_from_triangle() {
        let b = Barcode {
            max_filter: 0,
            intervals: vec![essential(vec![Simplex::new(vec![4, 5, 6]).unwrap()])],
            ladder: vec![],
        };
        let got = actions_from_generators(&b, &["x".to_string()], true).unwrap();
        let pairs: Vec<_> = got.iter().map(|l| (l.source, l.target)).collect();
        assert_eq!(pairs, vec![(4, 5), (5, 4), (4, 6), (6, 4), (5, 6), (6, 5)]);
    }

    #[test]
    fn label_errors() {
        let names = vec!["x".to_string()];
        assert_eq!(
            actions_from_generators(&Barcode::empty(), &names, true),
            Err(ChuError::NoGenerators)
        );
        let vertex_only = Barcode {
            max_filter: 0,
            intervals: vec![essential(vec![Simplex::vertex(3)])],
            ladder: vec![],
        };
        assert_eq!(
            actions_from_generators(&vertex_only, &names, true),
            Err(ChuError::NoGenerators)
        );
        assert_eq!(
            actions_from_generators(&vertex_only, &[], true),
            Err(ChuError::NoActionNames)
        );
    }

    #[test]
    fn full_space_sizes() {
        assert_eq!(full_chu(labels(1)).unwrap().len(), 3);
        assert_eq!(full_chu(labels(2)).unwrap().len(), 9);
        assert_eq!(full_chu(labels(4)).unwrap().len(), 81);
        assert_eq!(full_chu(labels(17)), Err(ChuError::TooLarge));
    }

    #[test]
    fn single_mutex_on_two_actions() {
        let c = constrain(&full_chu(labels(2)).unwrap(), &[(0, 1)]).unwrap();
        let expected: Vec<Vec<u8>> = vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![2, 0]];
        assert_eq!(c.states(), expected.as_slice());
        assert_eq!(constrain(&c, &[(0, 5)]), Err(ChuError::BadIndex(5)));
    }

    #[test]
    fn empty_mutex_is_identity() {
        let full = full_chu(labels(3)).unwrap();
        assert_eq!(constrain(&full, &[]).unwrap(), full);
    }

    #[test]
    fn parallel_composition() {
        let a = full_chu(labels(1)).unwrap();
        let b = full_chu(vec![ActionLabel::new("z", 7, 8)]).unwrap();
        assert_eq!(parallel(&a, &b).unwrap().len(), 9);
        assert!(matches!(parallel(&a, &a), Err(ChuError::LabelClash(_))));

        let l = labels(4);
        let left = full_chu(l[..2].to_vec()).unwrap();
        let right = full_chu(l[2..].to_vec()).unwrap();
        assert_eq!(parallel(&left, &right).unwrap(), full_chu(l).unwrap());
    }

    #[test]
    fn one_action_hasse_is_a_chain() {
        let h = hasse(&full_chu(labels(1)).unwrap());
        assert_eq!(h.nodes, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(h.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(h.bottom(), Some(0));
        assert!(h.to_dot("chain").contains("n0 -> n1;"));
    }

    #[test]
    fn csv_dump_layout() {
        let c = full_chu(vec![ActionLabel::new("elicits", 0, 1)]).unwrap();
        assert_eq!(c.to_csv(ChuOrder::Lexicographic), "action,s1,s2,s3\n\"(elicits,0,1)\",0,1,2\n");
    }

    #[test]
    fn bad_states_rejected() {
        assert!(ChuSpace::new(labels(2), vec![vec![0, 3]]).is_err());
        assert!(ChuSpace::new(labels(2), vec![vec![0]]).is_err());
        assert_eq!(ChuSpace::new(labels(1), vec![vec![1], vec![1]]).unwrap().len(), 1);
    }
}
