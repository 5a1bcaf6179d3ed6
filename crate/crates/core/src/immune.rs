//! Desk-scale idiotypic network simulator.
//!
//! Antibodies are bitstrings; two idiotypes interact when their Hamming
//! distance is at least `width - 1`. Concentrations follow the binary
//! threshold dynamics `c_i = θ(S + Σ_k J_ik c_k)`; antigens enter as extra
//! nodes whose concentration is set by the injection schedule. Volumes relax
//! toward `V_max · c` and each tick's coexistence graph is emitted as an
//! observation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, ObservationSeries, VertexId, WeightedGraph};

pub const MAX_REPERTOIRE: usize = 4096;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bit widths differ ({0} vs {1})")]
    WidthMismatch(u32, u32),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("total volume is zero")]
    ZeroTotalVolume,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// An idiotype: antibody or antigen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Antibody {
    pub id: VertexId,
    pub bits: u32,
    pub width: u32,
    pub concentration: f64,
    pub volume: f64,
}

impl Antibody {
    pub fn new(id: VertexId, bits: u32, width: u32) -> Self {
        Antibody {
            id,
            bits: bits & mask(width),
            width,
            concentration: 0.0,
            volume: 0.0,
        }
    }

    pub fn hamming(&self, other: &Antibody) -> Result<u32, SimError> {
        if self.width != other.width {
            return Err(SimError::WidthMismatch(self.width, other.width));
        }
        Ok((self.bits ^ other.bits).count_ones())
    }
}

fn mask(width: u32) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

/// True iff the two idiotypes are within one bit of being complementary.
pub fn interaction_predicate(a: &Antibody, b: &Antibody) -> Result<bool, SimError> {
    let d = a.hamming(b)?;
    Ok(d + 1 >= a.width && d <= a.width)
}

/// Symmetric coupling matrix with zero diagonal and entries in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl AffinityMatrix {
    pub fn zeros(n: usize) -> Self {
        AffinityMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// From a full row-major matrix; checks symmetry, diagonal and range.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SimError> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(SimError::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (k, &x) in row.iter().enumerate() {
                if (i == k && x != 0.0) || x.abs() > 1.0 || x != rows[k][i] {
                    return Err(SimError::Config(format!(
                        "affinity entry ({i}, {k}) breaks symmetry, range or zero diagonal"
                    )));
                }
                m.data[i * n + k] = x;
            }
        }
        Ok(m)
    }

    /// Uniform couplings in [-1, 1] on every interacting pair, zero elsewhere.
    pub fn sample(idiotypes: &[Antibody], rng: &mut impl Rng) -> Result<Self, SimError> {
        let n = idiotypes.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in (i + 1)..n {
                if interaction_predicate(&idiotypes[i], &idiotypes[k])? {
                    m.set(i, k, rng.gen_range(-1.0..=1.0));
                }
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.n + k]
    }

    /// Sets both `(i, k)` and `(k, i)`; diagonal writes are ignored.
    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        if i != k {
            let v = value.clamp(-1.0, 1.0);
            self.data[i * self.n + k] = v;
            self.data[k * self.n + i] = v;
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Local field `h_i = S + Σ_k J_ik c_k`.
pub fn field(i: usize, j: &AffinityMatrix, c: &[f64], s: f64) -> Result<f64, SimError> {
    if c.len() != j.len() {
        return Err(SimError::DimensionMismatch {
            expected: j.len(),
            got: c.len(),
        });
    }
    if i >= j.len() {
        return Err(SimError::DimensionMismatch {
            expected: j.len(),
            got: i + 1,
        });
    }
    Ok(s + j.row(i).iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
}

/// `c_i ← 1` when `h_i > 0`, else 0.
pub fn threshold(h: f64) -> f64 {
    if h > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateScheme {
    /// every node reads the previous tick's state
    #[default]
    Synchronous,
    /// nodes update one at a time in a random order, reading fresh values
    Asynchronous,
}

/// One threshold update of every free node. `clamped` lists nodes (antigens)
/// whose concentration is imposed rather than computed.
pub fn step(c: &[f64], j: &AffinityMatrix, s: f64, clamped: &[(usize, f64)]) -> Result<Vec<f64>, SimError> {
    let mut cur = c.to_vec();
    for &(i, v) in clamped {
        if i >= cur.len() {
            return Err(SimError::DimensionMismatch {
                expected: cur.len(),
                got: i + 1,
            });
        }
        cur[i] = v;
    }
    let mut next = Vec::with_capacity(c.len());
    for i in 0..c.len() {
        next.push(threshold(field(i, j, &cur, s)?));
    }
    for &(i, v) in clamped {
        next[i] = v;
    }
    Ok(next)
}

/// Random-order variant of [`step`].
pub fn step_async(
    c: &[f64],
    j: &AffinityMatrix,
    s: f64,
    clamped: &[(usize, f64)],
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SimError> {
    let mut state = c.to_vec();
    for &(i, v) in clamped {
        state[i] = v;
    }
    let mut order: Vec<usize> = (0..c.len()).filter(|i| !clamped.iter().any(|(k, _)| k == i)).collect();
    order.shuffle(rng);
    for i in order {
        state[i] = threshold(field(i, j, &state, s)?);
    }
    Ok(state)
}

/// Coexistence graph `C_jk = d(j, k) · v_j · v_k / Σ_l v_l` over interacting
/// pairs with positive volumes. Only antibodies with positive volume become
/// vertices.
pub fn coexistence_graph(pop: &[Antibody]) -> Result<WeightedGraph, SimError> {
    let total: f64 = pop.iter().map(|a| a.volume).sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(SimError::ZeroTotalVolume);
    }
    let mut g = WeightedGraph::new();
    for a in pop.iter().filter(|a| a.volume > 0.0) {
        g.add_vertex(a.id);
        g.set_name(a.id, format!("Ab_{}", a.id));
    }
    for (x, a) in pop.iter().enumerate() {
        if a.volume <= 0.0 {
            continue;
        }
        for b in pop[x + 1..].iter().filter(|b| b.volume > 0.0) {
            if interaction_predicate(a, b)? {
                let d = a.hamming(b)? as f64;
                let w = d * a.volume * b.volume / total;
                if w > 0.0 {
                    g.add_edge(a.id, b.id, w)?;
                }
            }
        }
    }
    Ok(g)
}

/// Simulation parameters. Every field has a default, so a config file only
/// needs to name what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// number of antibodies
    pub repertoire: usize,
    pub bit_width: u32,
    pub ticks: u64,
    /// ticks at which the antigen is injected
    pub injections: Vec<u64>,
    pub seed: u64,
    /// emit an observation every `stride` ticks
    pub stride: u64,
    /// constant field term `S`
    pub s: f64,
    /// volume relaxation rate
    pub rho: f64,
    pub v_max: f64,
    /// number of idiotype / anti-idiotype clonal families in the repertoire
    pub families: usize,
    /// probability that an antibody carries one point mutation
    pub mutation_rate: f64,
    /// antigen concentration right after an injection
    pub antigen_dose: f64,
    /// antigen removed per tick per unit of volume of activated recognizers
    pub clearance: f64,
    /// volumes within this distance of their target snap onto it
    pub snap: f64,
    pub update: UpdateScheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            repertoire: 50,
            bit_width: 12,
            ticks: 200,
            injections: vec![40, 120],
            seed: 1,
            stride: 5,
            s: -0.5,
            rho: 0.2,
            v_max: 1.0,
            families: 1,
            mutation_rate: 1.0,
            antigen_dose: 2.0,
            clearance: 0.1,
            snap: 0.1,
            update: UpdateScheme::Synchronous,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.repertoire == 0 || self.repertoire > MAX_REPERTOIRE {
            return bad("repertoire must be in 1..=4096");
        }
        if !(2..=32).contains(&self.bit_width) {
            return bad("bit_width must be in 2..=32");
        }
        if self.ticks == 0 || self.stride == 0 {
            return bad("ticks and stride must be positive");
        }
        if self.injections.iter().any(|&t| t >= self.ticks) {
            return bad("injection ticks must be below `ticks`");
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho must be in (0, 1]");
        }
        if !(self.v_max > 0.0) || !self.v_max.is_finite() {
            return bad("v_max must be positive");
        }
        if self.families == 0 {
            return bad("families must be positive");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must be in [0, 1]");
        }
        if !(self.antigen_dose >= 1.0) {
            return bad("antigen_dose must be at least 1");
        }
        if !(self.clearance >= 0.0) || !(self.snap >= 0.0) || !self.s.is_finite() {
            return bad("clearance and snap must be non-negative, S finite");
        }
        Ok(())
    }

    /// Parses JSON, or `key=value` lines when the text is not a JSON object.
    /// List values are comma separated.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let trimmed = text.trim_start();
        let cfg: SimConfig = if trimmed.starts_with('{') {
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?
        } else {
            let mut map = serde_json::Map::new();
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| SimError::Config(format!("line {}: expected key=value", i + 1)))?;
                let (k, v) = (k.trim(), v.trim());
                let value = if k == "injections" {
                    let items: Result<Vec<serde_json::Value>, SimError> = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse::<u64>()
                                .map(serde_json::Value::from)
                                .map_err(|_| SimError::Config(format!("bad injection tick {s:?}")))
                        })
                        .collect();
                    serde_json::Value::Array(items?)
                } else if let Ok(n) = v.parse::<u64>() {
                    serde_json::Value::from(n)
                } else if let Ok(x) = v.parse::<f64>() {
                    serde_json::Value::from(x)
                } else {
                    serde_json::Value::from(v)
                };
                map.insert(k.to_string(), value);
            }
            serde_json::from_value(serde_json::Value::Object(map))
                .map_err(|e| SimError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Full simulator state; [`run`] drives it tick by tick.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: SimConfig,
    /// antibodies `0..repertoire`
    pub antibodies: Vec<Antibody>,
    /// the injected antigen, stored after the antibodies in `affinity`
    pub antigen: Antibody,
    pub affinity: AffinityMatrix,
    pub tick: u64,
    rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.bit_width;
        let founders: Vec<u32> = (0..config.families).map(|_| rng.gen::<u32>() & mask(w)).collect();
        let mutate = |bits: u32, rng: &mut ChaCha8Rng| {
            if rng.gen_bool(config.mutation_rate) {
                bits ^ (1 << rng.gen_range(0..w))
            } else {
                bits
            }
        };
        let antibodies: Vec<Antibody> = (0..config.repertoire)
            .map(|id| {
                let family = founders[(id / 2) % founders.len()];
                // even ids carry the idiotype, odd ids the anti-idiotype
                let base = if id % 2 == 0 { family } else { !family & mask(w) };
                Antibody::new(id, mutate(base, &mut rng), w)
            })
            .collect();
        let antigen = Antibody::new(config.repertoire, founders[0], w);
        let mut all = antibodies.clone();
        all.push(antigen.clone());
        let affinity = AffinityMatrix::sample(&all, &mut rng)?;
        Ok(Simulation {
            config,
            antibodies,
            antigen,
            affinity,
            tick: 0,
            rng,
        })
    }

    fn concentrations(&self) -> Vec<f64> {
        let mut c: Vec<f64> = self.antibodies.iter().map(|a| a.concentration).collect();
        c.push(self.antigen.concentration);
        c
    }

    pub fn total_volume(&self) -> f64 {
        self.antibodies.iter().map(|a| a.volume).sum()
    }

    pub fn active(&self) -> usize {
        self.antibodies.iter().filter(|a| a.concentration > 0.0).count()
    }

    /// Current coexistence graph; empty when no antibody has volume.
    pub fn snapshot(&self) -> Result<WeightedGraph, SimError> {
        match coexistence_graph(&self.antibodies) {
            Err(SimError::ZeroTotalVolume) => Ok(WeightedGraph::new()),
            other => other,
        }
    }

    /// Advances one tick: injection, concentration update, antigen clearance,
    /// volume relaxation.
    pub fn advance(&mut self) -> Result<(), SimError> {
        let cfg = &self.config;
        if cfg.injections.contains(&self.tick) {
            self.antigen.concentration = self.antigen.concentration.max(cfg.antigen_dose);
        }
        let ag = self.antibodies.len();
        let c = self.concentrations();
        let clamp = [(ag, self.antigen.concentration)];
        let next = match cfg.update {
            UpdateScheme::Synchronous => step(&c, &self.affinity, cfg.s, &clamp)?,
            UpdateScheme::Asynchronous => step_async(&c, &self.affinity, cfg.s, &clamp, &mut self.rng)?,
        };

        // recognizers with positive coupling clear the antigen
        let pressure: f64 = self
            .antibodies
            .iter()
            .enumerate()
            .filter(|(i, _)| next[*i] > 0.0 && self.affinity.get(*i, ag) > 0.0)
            .map(|(_, a)| a.volume)
            .sum();
        let mut antigen = self.antigen.concentration - cfg.clearance * pressure;
        if antigen < 1.0 {
            antigen = 0.0;
        }
        self.antigen.concentration = antigen;

        for (a, &ci) in self.antibodies.iter_mut().zip(&next) {
            a.concentration = ci;
            let target = cfg.v_max * ci;
            let mut v = (1.0 - cfg.rho) * a.volume + cfg.rho * target;
            if (v - target).abs() <= cfg.snap * cfg.v_max {
                v = target;
            }
            a.volume = v;
        }
        self.tick += 1;
        Ok(())
    }
}

/// Runs the simulation and returns the coexistence graphs sampled every
/// `stride` ticks, starting at tick 0. Observation at tick `t` shows the
/// state before the update of tick `t`.
pub fn run(config: &SimConfig) -> Result<ObservationSeries, SimError> {
    Ok(run_traced(config)?.0)
}

/// Per-tick trace: `(tick, active antibodies, antigen concentration)`.
pub type Trace = Vec<(u64, usize, f64)>;

pub fn run_traced(config: &SimConfig) -> Result<(ObservationSeries, Trace), SimError> {
    let mut sim = Simulation::new(config.clone())?;
    let mut series = ObservationSeries::default();
    let mut trace = Vec::new();
    for t in 0..config.ticks {
        if t % config.stride == 0 {
            series.push(t, sim.snapshot()?)?;
        }
        trace.push((t, sim.active(), sim.antigen.concentration));
        sim.advance()?;
    }
    Ok((series, trace))
}

/// Coexistence matrix of a population, indexed by position.
pub fn coexistence_matrix(pop: &[Antibody]) -> Result<Vec<Vec<f64>>, SimError> {
    let g = coexistence_graph(pop)?;
    let pos: BTreeMap<VertexId, usize> = pop.iter().enumerate().map(|(i, a)| (a.id, i)).collect();
    let mut m = vec![vec![0.0; pop.len()]; pop.len()];
    for (u, v, w) in g.edges() {
        m[pos[&u]][pos[&v]] = w;
        m[pos[&v]][pos[&u]] = w;
    }
    Ok(m)
}
