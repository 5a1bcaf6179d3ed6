//! Persistent Entropy Automata.
//!
//! The entropy chronogram is cut into plateaus (steady states), peaks
//! (abrupt topological changes) and the monotone stretches between them.
//! Plateaus at the same level become one automaton state whose invariant
//! bounds H and Ḣ; every excursion between two plateaus becomes a
//! transition.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::EntropySeries;

#[derive(Debug, Error, PartialEq)]
pub enum PeaError {
    #[error("series has {len} points, fewer than the window of {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("invalid segmentation parameters: {0}")]
    BadParams(String),
    #[error("the first segment is not a plateau")]
    InitialNotSteady,
    #[error("no plateau found")]
    NoPlateaus,
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("mapping line {line}: {msg}")]
    Mapping { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Plateau,
    Peak,
    Rising,
    Falling,
}

/// A contiguous run of chronogram points, `start..=end` by point index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
    pub start_tick: u64,
    pub end_tick: u64,
    pub mean_h: f64,
    /// `(H, Ḣ)` for every point of the segment
    pub evidence: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// plateau slope tolerance, also the level-merging tolerance
    pub eps: f64,
    /// minimum plateau length in points
    pub window: usize,
    /// minimum peak prominence
    pub prominence: f64,
}

impl SegmentParams {
    pub const DEFAULT_EPS_FRACTION: f64 = 0.05;
    pub const DEFAULT_PROMINENCE_FRACTION: f64 = 0.25;
    pub const DEFAULT_WINDOW: usize = 5;

    /// `eps = 0.05·max H`, `prominence = 0.25·max H`, `window = 5`. A series
    /// that is identically zero gets tiny positive thresholds instead.
    pub fn defaults_for(series: &EntropySeries) -> Self {
        let scale = series.max_h();
        let floor = 1e-12;
        SegmentParams {
            eps: (Self::DEFAULT_EPS_FRACTION * scale).max(floor),
            window: Self::DEFAULT_WINDOW,
            prominence: (Self::DEFAULT_PROMINENCE_FRACTION * scale).max(floor),
        }
    }
}

/// Height of point `k` above its base. On each side the base candidate is the
/// lowest point before higher ground; a side that runs off the end of the
/// series without meeting higher ground does not bound the base. When
/// neither side meets higher ground the lower candidate is used.
fn prominence(h: &[f64], k: usize) -> f64 {
    let peak = h[k];
    let side = |iter: &mut dyn Iterator<Item = &f64>| {
        let mut low = peak;
        for &x in iter {
            if x > peak {
                return (low, true);
            }
            low = low.min(x);
        }
        (low, false)
    };
    let (left, left_bounded) = side(&mut h[..k].iter().rev());
    let (right, right_bounded) = side(&mut h[k + 1..].iter());
    let base = match (left_bounded, right_bounded) {
        (true, true) => left.max(right),
        (true, false) => left,
        (false, true) => right,
        (false, false) => left.min(right),
    };
    peak - base
}

/// Last index of the run of values equal to `h[k]` that starts at `k`, when
/// that run rises strictly out of `h[k - 1]` and drops strictly into the
/// next value. A run that reaches the end of the series is not a maximum.
fn local_max_run(h: &[f64], k: usize) -> Option<usize> {
    if k > 0 && h[k - 1] >= h[k] {
        return None;
    }
    let mut j = k;
    while j + 1 < h.len() && h[j + 1] == h[k] {
        j += 1;
    }
    (j + 1 < h.len() && h[j + 1] < h[k]).then_some(j)
}

/// Splits the chronogram into plateaus, peaks and monotone stretches that
/// together cover every point exactly once.
pub fn segment(series: &EntropySeries, params: &SegmentParams) -> Result<Vec<Segment>, PeaError> {
    if params.eps.is_nan() || params.eps <= 0.0 {
        return Err(PeaError::BadParams("eps must be positive".into()));
    }
    if params.window == 0 {
        return Err(PeaError::BadParams("window must be at least 1".into()));
    }
    let n = series.len();
    if n < params.window || n == 0 {
        return Err(PeaError::SeriesTooShort {
            len: n,
            window: params.window,
        });
    }
    let h: Vec<f64> = series.values().collect();
    let slope: Vec<f64> = (0..n).map(|k| series.slope_at(k)).collect();
    let flat: Vec<bool> = slope.iter().map(|s| s.abs() < params.eps).collect();

    let mut is_plateau = vec![false; n];
    let mut k = 0;
    while k < n {
        if !flat[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && flat[k] {
            k += 1;
        }
        if k - start >= params.window {
            is_plateau[start..k].iter_mut().for_each(|p| *p = true);
        }
    }

    let make = |kind, start: usize, end: usize| Segment {
        kind,
        start,
        end,
        start_tick: series.points[start].0,
        end_tick: series.points[end].0,
        mean_h: h[start..=end].iter().sum::<f64>() / (end - start + 1) as f64,
        evidence: (start..=end).map(|i| (h[i], slope[i])).collect(),
    };

    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        let start = k;
        let plateau = is_plateau[k];
        while k < n && is_plateau[k] == plateau {
            k += 1;
        }
        let end = k - 1;
        if plateau {
            out.push(make(SegmentKind::Plateau, start, end));
            continue;
        }
        // gap between plateaus: isolate peaks, then monotone runs
        let mut peaks: Vec<(usize, usize)> = Vec::new();
        let mut i = start;
        while i <= end {
            // a flat top that runs into a plateau belongs to the plateau
            match local_max_run(&h, i) {
                Some(j) if j <= end && prominence(&h, i) >= params.prominence => {
                    peaks.push((i, j));
                    i = j + 1;
                }
                _ => i += 1,
            }
        }
        let mut cursor = start;
        let mut cuts = peaks.clone();
        cuts.push((end + 1, end + 1));
        for (cut, cut_end) in cuts {
            if cursor < cut {
                let mut run_start = cursor;
                let rising = |i: usize| slope[i] >= 0.0;
                for i in cursor..cut {
                    if i + 1 == cut || rising(i + 1) != rising(run_start) {
                        let kind = if rising(run_start) {
                            SegmentKind::Rising
                        } else {
                            SegmentKind::Falling
                        };
                        out.push(make(kind, run_start, i));
                        run_start = i + 1;
                    }
                }
            }
            if cut <= end {
                out.push(make(SegmentKind::Peak, cut, cut_end));
            }
            cursor = cut_end + 1;
        }
    }
    Ok(out)
}

/// `H ∈ [h_min, h_max] ∧ |Ḣ| < slope_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub h_min: f64,
    pub h_max: f64,
    pub slope_eps: f64,
}

impl Invariant {
    pub fn holds(&self, h: f64, slope: f64) -> bool {
        self.h_min <= h && h <= self.h_max && slope.abs() < self.slope_eps
    }

    pub fn describe(&self) -> String {
        if self.h_max == 0.0 {
            "H = 0, Ḣ = 0".to_string()
        } else if self.h_min == self.h_max {
            format!("H = {:.3}, Ḣ = 0", self.h_min)
        } else {
            format!("H ∈ [{:.3}, {:.3}], Ḣ = 0", self.h_min, self.h_max)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeaState {
    pub name: String,
    pub invariant: Invariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub label: String,
    pub to: String,
}

impl Transition {
    pub fn new(from: impl Into<String>, label: impl Into<String>, to: impl Into<String>) -> Self {
        Transition {
            from: from.into(),
            label: label.into(),
            to: to.into(),
        }
    }

    pub fn is_self_loop(&self) -> bool {
        self.from == self.to
    }
}

/// Steady states, labels, initial state, transitions and per-state
/// invariants over (H, Ḣ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pea {
    pub states: Vec<PeaState>,
    pub labels: Vec<String>,
    pub initial: String,
    pub transitions: Vec<Transition>,
}

impl Pea {
    pub fn state(&self, name: &str) -> Option<&PeaState> {
        self.states.iter().find(|s| s.name == name)
    }

    /// The state whose invariant accepts `(h, slope)`, if any.
    pub fn state_for(&self, h: f64, slope: f64) -> Option<&PeaState> {
        self.states.iter().find(|s| s.invariant.holds(h, slope))
    }

    pub fn self_loops(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.transitions.iter().filter(|t| t.is_self_loop())
    }

    /// Renames states and labels through `map`; names not in the map stay.
    pub fn rename(&mut self, map: &HashMap<String, String>) {
        let r = |s: &mut String| {
            if let Some(new) = map.get(s.as_str()) {
                *s = new.clone();
            }
        };
        for s in &mut self.states {
            r(&mut s.name);
        }
        for l in &mut self.labels {
            r(l);
        }
        r(&mut self.initial);
        for t in &mut self.transitions {
            r(&mut t.from);
            r(&mut t.label);
            r(&mut t.to);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("automaton always serializes")
    }

    pub fn to_dot(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("digraph PEA {\n  rankdir=LR;\n  node [shape=ellipse];\n");
        out.push_str("  __start [shape=point, label=\"\"];\n");
        writeln!(out, "  __start -> \"{}\";", esc(&self.initial)).unwrap();
        for s in &self.states {
            writeln!(
                out,
                "  \"{}\" [label=\"{}\\n{}\"];",
                esc(&s.name),
                esc(&s.name),
                esc(&s.invariant.describe())
            )
            .unwrap();
        }
        for t in &self.transitions {
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                esc(&t.from),
                esc(&t.to),
                esc(&t.label)
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }
}

/// Parses `old=new` lines (`#` comments allowed).
pub fn parse_mapping(text: &str) -> Result<HashMap<String, String>, PeaError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(PeaError::Mapping {
                line: i + 1,
                msg: "expected old=new".into(),
            });
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Parses `from,label,to` lines describing transitions known from domain
/// knowledge rather than data.
pub fn parse_extra_transitions(text: &str) -> Result<Vec<Transition>, PeaError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(PeaError::Mapping {
                line: i + 1,
                msg: "expected from,label,to".into(),
            });
        }
        out.push(Transition::new(parts[0], parts[1], parts[2]));
    }
    Ok(out)
}

/// Builds the automaton from a segmentation.
///
/// Plateaus whose mean levels differ by less than `eps`, or whose H ranges
/// overlap, share a state. States are named `r0, r1, ...` in order of first
/// appearance. Each excursion between consecutive plateaus yields one
/// transition, labeled `peak@<tick>` after its most prominent peak (or
/// `shift@<tick>` when it has none). `extra` transitions refer to states by
/// their final names.
pub fn build_pea(segments: &[Segment], eps: f64, extra: &[Transition]) -> Result<Pea, PeaError> {
    let first = segments.first().ok_or(PeaError::NoPlateaus)?;
    if !segments.iter().any(|s| s.kind == SegmentKind::Plateau) {
        return Err(PeaError::NoPlateaus);
    }
    if first.kind != SegmentKind::Plateau {
        return Err(PeaError::InitialNotSteady);
    }

    // cluster plateau levels
    let plateaus: Vec<&Segment> = segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Plateau)
        .collect();
    let hull = |s: &Segment| {
        let lo = s.evidence.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
        let hi = s.evidence.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    // cluster id per plateau, cluster = (members, lo, hi, mean)
    let mut cluster_of: Vec<usize> = (0..plateaus.len()).collect();
    loop {
        let mut merged = false;
        'outer: for a in 0..plateaus.len() {
            for b in (a + 1)..plateaus.len() {
                let (ca, cb) = (cluster_of[a], cluster_of[b]);
                if ca == cb {
                    continue;
                }
                let stats = |c: usize| {
                    let members: Vec<&Segment> = (0..plateaus.len())
                        .filter(|&i| cluster_of[i] == c)
                        .map(|i| plateaus[i])
                        .collect();
                    let lo = members.iter().map(|s| hull(s).0).fold(f64::INFINITY, f64::min);
                    let hi = members.iter().map(|s| hull(s).1).fold(f64::NEG_INFINITY, f64::max);
                    let count: usize = members.iter().map(|s| s.evidence.len()).sum();
                    let mean = members
                        .iter()
                        .flat_map(|s| s.evidence.iter().map(|e| e.0))
                        .sum::<f64>()
                        / count as f64;
                    (lo, hi, mean)
                };
                let (lo_a, hi_a, mean_a) = stats(ca);
                let (lo_b, hi_b, mean_b) = stats(cb);
                if (mean_a - mean_b).abs() < eps || (lo_a <= hi_b && lo_b <= hi_a) {
                    let (keep, drop) = (ca.min(cb), ca.max(cb));
                    cluster_of.iter_mut().filter(|c| **c == drop).for_each(|c| *c = keep);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }

    // name clusters by first appearance
    let mut name_of_cluster: BTreeMap<usize, String> = BTreeMap::new();
    let mut state_order: Vec<usize> = Vec::new();
    for &c in &cluster_of {
        if !name_of_cluster.contains_key(&c) {
            name_of_cluster.insert(c, format!("r{}", state_order.len()));
            state_order.push(c);
        }
    }
    let states: Vec<PeaState> = state_order
        .iter()
        .map(|&c| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (i, p) in plateaus.iter().enumerate() {
                if cluster_of[i] == c {
                    let (a, b) = hull(p);
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
            }
            PeaState {
                name: name_of_cluster[&c].clone(),
                invariant: Invariant {
                    h_min: lo,
                    h_max: hi,
                    slope_eps: eps,
                },
            }
        })
        .collect();
    let initial = states[0].name.clone();

    // transitions between consecutive plateaus
    let mut transitions = Vec::new();
    let mut plateau_idx = 0usize;
    let mut current = name_of_cluster[&cluster_of[0]].clone();
    let mut excursion: Vec<&Segment> = Vec::new();
    for s in segments.iter().skip(1) {
        if s.kind != SegmentKind::Plateau {
            excursion.push(s);
            continue;
        }
        plateau_idx += 1;
        let next = name_of_cluster[&cluster_of[plateau_idx]].clone();
        let label = excursion
            .iter()
            .filter(|e| e.kind == SegmentKind::Peak)
            .max_by(|a, b| a.mean_h.total_cmp(&b.mean_h))
            .map(|p| format!("peak@{}", p.start_tick))
            .unwrap_or_else(|| {
                let tick = excursion.first().map_or(s.start_tick, |e| e.start_tick);
                format!("shift@{tick}")
            });
        transitions.push(Transition::new(current.clone(), label, next.clone()));
        excursion.clear();
        current = next;
    }

    for t in extra {
        for name in [&t.from, &t.to] {
            if !states.iter().any(|s| &s.name == name) {
                return Err(PeaError::UnknownState(name.clone()));
            }
        }
        transitions.push(t.clone());
    }
    let mut labels: Vec<String> = Vec::new();
    for t in &transitions {
        if !labels.contains(&t.label) {
            labels.push(t.label.clone());
        }
    }

    Ok(Pea {
        states,
        labels,
        initial,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> EntropySeries {
        EntropySeries::from_points(values.iter().enumerate().map(|(i, &h)| (i as u64, h)).collect())
            .unwrap()
    }

    fn kinds(segs: &[Segment]) -> Vec<SegmentKind> {
        segs.iter().map(|s| s.kind).collect()
    }

    fn params(eps: f64, window: usize, prominence: f64) -> SegmentParams {
        SegmentParams {
            eps,
            window,
            prominence,
        }
    }

    #[test]
    fn constant_series_is_one_plateau() {
        let s = series(&[1.5; 12]);
        let segs = segment(&s, &SegmentParams::defaults_for(&s)).unwrap();
        assert_eq!(kinds(&segs), vec![SegmentKind::Plateau]);
        assert_eq!((segs[0].start, segs[0].end), (0, 11));
    }

    #[test]
    fn step_into_plateau_is_not_a_peak() {
        let mut v = vec![0.0; 6];
        v.extend([1.8; 8]);
        let s = series(&v);
        let segs = segment(&s, &params(0.09, 5, 0.45)).unwrap();
        assert!(segs.iter().all(|g| g.kind != SegmentKind::Peak));
    }

    #[test]
    fn flat_topped_spike_is_one_peak() {
        let mut v = vec![0.0; 6];
        v.extend([2.5, 2.5]);
        v.extend([1.1; 8]);
        let s = series(&v);
        let segs = segment(&s, &params(0.125, 5, 0.6)).unwrap();
        let peaks: Vec<&Segment> = segs.iter().filter(|g| g.kind == SegmentKind::Peak).collect();
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].start, peaks[0].end), (6, 7));
    }

    #[test]
    fn spike_then_settle() {
        let mut v = vec![0.0; 10];
        v.push(3.0);
        v.extend(std::iter::repeat_n(2.87, 20));
        let s = series(&v);
        let segs = segment(&s, &SegmentParams::defaults_for(&s)).unwrap();
        assert_eq!(
            kinds(&segs),
            vec![SegmentKind::Plateau, SegmentKind::Peak, SegmentKind::Plateau]
        );
        assert_eq!(segs[0].mean_h, 0.0);
        assert!((segs[2].mean_h - 2.87).abs() < 1e-12);
        assert_eq!(segs[1].start_tick, 10);
    }

    #[test]
    fn too_short_and_bad_params() {
        let s = series(&[0.0, 0.0]);
        assert_eq!(
            segment(&s, &params(0.1, 5, 0.1)),
            Err(PeaError::SeriesTooShort { len: 2, window: 5 })
        );
        assert!(matches!(segment(&s, &params(0.0, 1, 0.1)), Err(PeaError::BadParams(_))));
    }

    #[test]
    fn ramps_become_monotone_segments() {
        let mut v = vec![0.0; 6];
        v.extend([0.5, 1.0, 1.5, 2.0]);
        v.extend([2.0; 6]);
        v.extend([1.5, 1.0, 0.5]);
        v.extend([0.0; 6]);
        let s = series(&v);
        let segs = segment(&s, &params(0.1, 5, 10.0)).unwrap();
        assert_eq!(
            kinds(&segs),
            vec![
                SegmentKind::Plateau,
                SegmentKind::Rising,
                SegmentKind::Plateau,
                SegmentKind::Falling,
                SegmentKind::Plateau
            ]
        );
        let covered: usize = segs.iter().map(|s| s.end - s.start + 1).sum();
        assert_eq!(covered, v.len());
    }

    #[test]
    fn prominence_examples() {
        let h = [0.0, 3.0, 1.0, 5.0, 2.0];
        assert_eq!(prominence(&h, 1), 2.0);
        assert_eq!(prominence(&h, 3), 5.0);
        // a wiggle on a ramp stays small
        let ramp = [0.0, 1.0, 1.5, 1.4, 1.6, 3.0];
        assert!((prominence(&ramp, 2) - 0.1).abs() < 1e-12);
        // a spike settling just below its top is still a full peak
        let spike = [0.0, 0.0, 3.0, 2.87, 2.87];
        assert_eq!(prominence(&spike, 2), 3.0);
    }

    #[test]
    fn pea_requires_initial_plateau() {
        assert_eq!(build_pea(&[], 0.1, &[]), Err(PeaError::NoPlateaus));
        let s = series(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let segs = segment(&s, &params(0.1, 3, 10.0)).unwrap();
        assert_eq!(build_pea(&segs, 0.1, &[]), Err(PeaError::NoPlateaus));
        let mut v = vec![0.0, 3.0];
        v.extend([1.0; 6]);
        let s = series(&v);
        let segs = segment(&s, &params(0.1, 5, 0.5)).unwrap();
        assert_eq!(segs[0].kind, SegmentKind::Rising);
        assert_eq!(build_pea(&segs, 0.1, &[]), Err(PeaError::InitialNotSteady));
    }

    #[test]
    fn single_plateau_single_state() {
        let s = series(&[0.7; 8]);
        let segs = segment(&s, &params(0.05, 5, 0.2)).unwrap();
        let pea = build_pea(&segs, 0.05, &[]).unwrap();
        assert_eq!(pea.states.len(), 1);
        assert!(pea.transitions.is_empty());
        assert_eq!(pea.initial, "r0");
    }

    #[test]
    fn extra_transitions_and_renaming() {
        let mut v = vec![0.0; 6];
        v.push(3.0);
        v.extend([2.0; 6]);
        let s = series(&v);
        let p = SegmentParams::defaults_for(&s);
        let segs = segment(&s, &p).unwrap();
        let extra = parse_extra_transitions("# domain knowledge\nr0,Resistance,r0\n").unwrap();
        let mut pea = build_pea(&segs, p.eps, &extra).unwrap();
        assert_eq!(pea.transitions.len(), 2);
        let map = parse_mapping("r0=Virgin\nr1=Memory\npeak@6=Immunization\n").unwrap();
        pea.rename(&map);
        assert_eq!(pea.initial, "Virgin");
        assert_eq!(pea.transitions[0], Transition::new("Virgin", "Immunization", "Memory"));
        assert!(pea.to_dot().contains("\"Virgin\" -> \"Virgin\" [label=\"Resistance\"]"));
        assert!(pea.to_dot().contains("H = 0, Ḣ = 0"));
        assert_eq!(
            build_pea(&segs, p.eps, &[Transition::new("r9", "x", "r0")]),
            Err(PeaError::UnknownState("r9".into()))
        );
        assert!(parse_mapping("nonsense").is_err());
    }
}
