//! End-to-end orchestration: observations → barcodes → chronogram →
//! automaton, plus the Chu-space model of selected agents.
//!
//! Stage functions here are shared by the individual CLI commands and the
//! one-shot pipeline, so both paths write identical files.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chu::{self, ActionLabel, ChuError, ChuOrder, ChuSpace, HasseDiagram};
use crate::entropy::{self, EmptyPolicy, EntropyError, EntropyOptions, EntropySeries};
use crate::filtration::{build_filtration, WeightOrder};
use crate::graph::{GraphError, ObservationSeries, VertexId, WeightedGraph};
use crate::immune::{self, SimConfig, SimError};
use crate::pea::{self, Pea, PeaError, Segment, SegmentParams, Transition};
use crate::persistence::{persistent_homology, Barcode, PersistenceError};

/// Error tagged with the pipeline stage that raised it.
#[derive(Debug, Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: StageCause,
}

#[derive(Debug, Error)]
pub enum StageCause {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Pea(#[from] PeaError),
    #[error(transparent)]
    Chu(#[from] ChuError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
}

impl StageCause {
    /// Data problems (bad input files, empty barcodes, ...) as opposed to
    /// broken internal invariants.
    pub fn is_internal(&self) -> bool {
        matches!(self, StageCause::Persistence(PersistenceError::InvalidComplex(_)))
    }
}

pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: Into<StageCause>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), StageCause> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| StageCause::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    fs::write(path, contents).map_err(|source| StageCause::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<String, StageCause> {
    fs::read_to_string(path).map_err(|source| StageCause::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Barcode of one graph: clique filtration up to `max_dim + 1`, homology in
/// dimensions `0..=max_dim`. A graph without vertices gives an empty barcode.
pub fn barcode_of(g: &WeightedGraph, order: WeightOrder, max_dim: usize) -> Result<Barcode, PersistenceError> {
    let complex = build_filtration(g, order, max_dim + 1);
    persistent_homology(&complex, max_dim)
}

/// Barcodes of every observation, computed on `jobs` worker threads and
/// returned in tick order.
pub fn barcodes(
    series: &ObservationSeries,
    order: WeightOrder,
    max_dim: usize,
    jobs: usize,
) -> Result<Vec<(u64, Barcode)>, PersistenceError> {
    let work = || {
        series
            .observations()
            .par_iter()
            .map(|o| barcode_of(&o.graph, order, max_dim).map(|b| (o.tick, b)))
            .collect::<Result<Vec<_>, _>>()
    };
    if jobs == 0 {
        return work();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
        .install(work)
}

/// Options of the structural (entropy → automaton) half of the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeaOptions {
    /// `None` uses the defaults derived from the series
    pub eps: Option<f64>,
    pub window: Option<usize>,
    pub prominence: Option<f64>,
    pub extra_transitions: Vec<Transition>,
    pub rename: HashMap<String, String>,
}

impl PeaOptions {
    pub fn params_for(&self, series: &EntropySeries) -> SegmentParams {
        let d = SegmentParams::defaults_for(series);
        SegmentParams {
            eps: self.eps.unwrap_or(d.eps),
            window: self.window.unwrap_or(d.window),
            prominence: self.prominence.unwrap_or(d.prominence),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PeaOutcome {
    pub params: SegmentParams,
    pub segments: Vec<Segment>,
    pub pea: Pea,
}

pub fn derive_pea(series: &EntropySeries, opts: &PeaOptions) -> Result<PeaOutcome, PeaError> {
    let params = opts.params_for(series);
    let segments = pea::segment(series, &params)?;
    let mut automaton = pea::build_pea(&segments, params.eps, &opts.extra_transitions)?;
    automaton.rename(&opts.rename);
    Ok(PeaOutcome {
        params,
        segments,
        pea: automaton,
    })
}

/// Which agents and actions make up the behavioral model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdaOptions {
    pub action_names: Vec<String>,
    pub bidirectional: bool,
    /// keep only labels whose source and target are both listed
    pub agents: Option<Vec<VertexId>>,
    /// explicit mutex pairs, as indices into the selected action list
    pub mutex: Vec<(usize, usize)>,
    /// different actions of one agent on the same target exclude each other
    pub mutex_same_target: bool,
    pub order: ChuOrder,
}

impl Default for HdaOptions {
    fn default() -> Self {
        HdaOptions {
            action_names: vec!["elicits".into(), "reduces".into()],
            bidirectional: true,
            agents: None,
            mutex: Vec::new(),
            mutex_same_target: false,
            order: ChuOrder::Lexicographic,
        }
    }
}

/// Mutex pairs between distinct actions sharing source and target.
pub fn same_target_mutex(actions: &[ActionLabel]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..actions.len() {
        for j in (i + 1)..actions.len() {
            let (a, b) = (&actions[i], &actions[j]);
            if a.source == b.source && a.target == b.target && a.action != b.action {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct HdaOutcome {
    pub actions: Vec<ActionLabel>,
    pub space: ChuSpace,
    pub hasse: HasseDiagram,
}

/// One full Chu space per agent (grouped by action source, in order of first
/// appearance), composed in parallel and then constrained.
pub fn derive_hda(b: &Barcode, opts: &HdaOptions) -> Result<HdaOutcome, ChuError> {
    let mut actions = chu::actions_from_generators(b, &opts.action_names, opts.bidirectional)?;
    if let Some(agents) = &opts.agents {
        let keep: BTreeSet<VertexId> = agents.iter().copied().collect();
        actions.retain(|a| keep.contains(&a.source) && keep.contains(&a.target));
        if actions.is_empty() {
            return Err(ChuError::NoGenerators);
        }
    }
    let mut sources: Vec<VertexId> = Vec::new();
    for a in &actions {
        if !sources.contains(&a.source) {
            sources.push(a.source);
        }
    }
    let grouped: Vec<ActionLabel> = sources
        .iter()
        .flat_map(|s| actions.iter().filter(move |a| a.source == *s).cloned())
        .collect();
    if grouped.len() > chu::MAX_ACTIONS {
        return Err(ChuError::TooLarge);
    }
    let mut space: Option<ChuSpace> = None;
    for s in &sources {
        let own: Vec<ActionLabel> = grouped.iter().filter(|a| a.source == *s).cloned().collect();
        let agent = chu::full_chu(own)?;
        space = Some(match space {
            None => agent,
            Some(acc) => chu::parallel(&acc, &agent)?,
        });
    }
    let space = space.expect("at least one agent");
    let mut mutex = opts.mutex.clone();
    if opts.mutex_same_target {
        mutex.extend(same_target_mutex(space.actions()));
    }
    let space = chu::constrain(&space, &mutex)?;
    let hasse = chu::hasse(&space);
    Ok(HdaOutcome {
        actions: grouped,
        space,
        hasse,
    })
}

/// Parses `i,j` lines into mutex index pairs.
pub fn parse_mutex(text: &str) -> Result<Vec<(usize, usize)>, StageCause> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let pair = line
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        match pair {
            Some(p) => out.push(p),
            None => return Err(StageCause::Input(format!("mutex line {}: expected i,j", n + 1))),
        }
    }
    Ok(out)
}

/// Action names, one per line.
pub fn parse_action_names(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

// File layout shared by the stage commands and the full pipeline.

pub fn write_barcode(dir: &Path, tick: Option<u64>, b: &Barcode) -> Result<(), StageCause> {
    let stem = tick.map_or("barcode".to_string(), |t| format!("barcode_{t}"));
    write_file(&dir.join(format!("{stem}.json")), &b.to_json())?;
    write_file(&dir.join(format!("{stem}.txt")), &b.to_text())
}

pub fn write_entropy(dir: &Path, series: &EntropySeries, plot: bool) -> Result<(), StageCause> {
    write_file(&dir.join("entropy.csv"), &series.to_csv())?;
    if plot {
        write_file(&dir.join("entropy.gp"), &EntropySeries::gnuplot_script("entropy.csv"))?;
    }
    Ok(())
}

pub fn write_pea(dir: &Path, outcome: &PeaOutcome) -> Result<(), StageCause> {
    write_file(&dir.join("pea.dot"), &outcome.pea.to_dot())?;
    write_file(&dir.join("pea.json"), &outcome.pea.to_json())?;
    write_file(
        &dir.join("segments.json"),
        &serde_json::to_string_pretty(&outcome.segments)?,
    )
}

pub fn write_hda(dir: &Path, outcome: &HdaOutcome, order: ChuOrder) -> Result<(), StageCause> {
    write_file(&dir.join("chu.csv"), &outcome.space.to_csv(order))?;
    write_file(&dir.join("hasse.dot"), &outcome.hasse.to_dot("hasse"))
}

/// Everything the one-shot pipeline needs.
#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub order: WeightOrder,
    pub max_dim: usize,
    pub entropy: EntropyOptions,
    pub pea: PeaOptions,
    /// `None` skips the behavioral model
    pub hda: Option<HdaOptions>,
    /// observation whose barcode feeds the behavioral model; last by default
    pub hda_tick: Option<u64>,
    pub plot: bool,
    pub jobs: usize,
}

impl PipelineConfig {
    pub fn new() -> Self {
        PipelineConfig {
            max_dim: 1,
            entropy: EntropyOptions {
                empty: EmptyPolicy::Zero,
                ..EntropyOptions::default()
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub barcodes: Vec<(u64, Barcode)>,
    pub entropy: EntropySeries,
    pub pea: PeaOutcome,
    pub hda: Option<(u64, HdaOutcome)>,
}

pub fn run_pipeline(series: &ObservationSeries, cfg: &PipelineConfig) -> Result<PipelineOutput, StageError> {
    let barcodes = barcodes(series, cfg.order, cfg.max_dim, cfg.jobs).stage("homology")?;
    let entropy = entropy::chronogram(&barcodes, &cfg.entropy).stage("entropy")?;
    let pea = derive_pea(&entropy, &cfg.pea).stage("pea")?;
    let hda = match &cfg.hda {
        None => None,
        Some(opts) => {
            let picked = match cfg.hda_tick {
                Some(t) => barcodes.iter().find(|(tick, _)| *tick == t),
                None => barcodes.iter().rev().find(|(_, b)| !b.is_empty()),
            };
            let (tick, b) = picked
                .ok_or_else(|| StageCause::Input("no observation with a non-empty barcode".into()))
                .stage("hda")?;
            Some((*tick, derive_hda(b, opts).stage("hda")?))
        }
    };
    Ok(PipelineOutput {
        barcodes,
        entropy,
        pea,
        hda,
    })
}

/// Writes the pipeline output under `out`:
/// `barcodes/barcode_<tick>.{json,txt}`, `entropy.csv`, `pea.{dot,json}`,
/// `segments.json`, and `hda/{chu.csv,hasse.dot}`.
pub fn write_pipeline(out: &Path, result: &PipelineOutput, cfg: &PipelineConfig) -> Result<(), StageError> {
    let bdir: PathBuf = out.join("barcodes");
    for (tick, b) in &result.barcodes {
        write_barcode(&bdir, Some(*tick), b).stage("homology")?;
    }
    write_entropy(out, &result.entropy, cfg.plot).stage("entropy")?;
    write_pea(out, &result.pea).stage("pea")?;
    if let (Some((_, hda)), Some(opts)) = (&result.hda, &cfg.hda) {
        write_hda(&out.join("hda"), hda, opts.order).stage("hda")?;
    }
    Ok(())
}

/// Simulates and writes the observation series as `obs_<tick>.csv` files.
pub fn simulate_to(dir: &Path, cfg: &SimConfig) -> Result<ObservationSeries, StageError> {
    let series = immune::run(cfg).stage("simulate")?;
    series.write_dir(dir).stage("simulate")?;
    Ok(series)
}
