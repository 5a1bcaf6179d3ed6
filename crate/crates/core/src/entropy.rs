//! Persistent entropy of barcodes and its chronogram over an observation
//! series.
//!
//! Bar lengths are normalized into a probability distribution and the
//! Shannon entropy of that distribution is taken. Essential bars are
//! truncated at `max_filter + 1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persistence::Barcode;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("barcode has no bars of positive length")]
    EmptyBarcode,
    #[error("real-valued lengths need the barcode's weight ladder")]
    MissingLadder,
    #[error("tick {tick}: {source}")]
    AtTick {
        tick: u64,
        #[source]
        source: Box<EntropyError>,
    },
    #[error("ticks must be strictly increasing (tick {0} out of order)")]
    TickOrder(u64),
    #[error("entropy csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// How bar lengths are measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthMode {
    /// Differences of filter indices; essential bars end at `max_filter + 1`.
    #[default]
    Index,
    /// Differences of ladder weights; essential bars end at `max weight + 1`.
    Real,
}

impl FromStr for LengthMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "index" => Ok(LengthMode::Index),
            "real" => Ok(LengthMode::Real),
            other => Err(format!("unknown length mode {other:?}")),
        }
    }
}

/// What the chronogram does with an observation whose barcode is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyPolicy {
    #[default]
    Error,
    /// No features at all counts as zero entropy.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyOptions {
    /// Logarithm base; `None` means natural log.
    pub log_base: Option<f64>,
    pub lengths: LengthMode,
    pub empty: EmptyPolicy,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        EntropyOptions {
            log_base: None,
            lengths: LengthMode::Index,
            empty: EmptyPolicy::Error,
        }
    }
}

/// Positive bar lengths of `b`, optionally restricted to one dimension.
pub fn bar_lengths(b: &Barcode, mode: LengthMode, dim: Option<usize>) -> Result<Vec<f64>, EntropyError> {
    let bars = b.intervals.iter().filter(|i| dim.is_none_or(|d| i.dim == d));
    let lengths: Vec<f64> = match mode {
        LengthMode::Index => {
            let m = b.max_filter + 1;
            bars.map(|i| (i.death.unwrap_or(m) - i.birth) as f64).collect()
        }
        LengthMode::Real => {
            if b.ladder.is_empty() && !b.intervals.is_empty() {
                return Err(EntropyError::MissingLadder);
            }
            let top = b.ladder.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
            let w = |t: usize| b.ladder.get(t).copied().ok_or(EntropyError::MissingLadder);
            let mut out = Vec::new();
            for i in bars {
                let start = w(i.birth)?;
                let end = match i.death {
                    Some(d) => w(d)?,
                    None => top,
                };
                out.push((end - start).abs());
            }
            out
        }
    };
    Ok(lengths.into_iter().filter(|&l| l > 0.0).collect())
}

/// Shannon entropy of the distribution `l_j / Σ l`. Summation runs over the
/// sorted lengths so that the result does not depend on input order.
pub fn entropy_of_lengths(lengths: &[f64], log_base: Option<f64>) -> Result<f64, EntropyError> {
    let mut ls: Vec<f64> = lengths.iter().copied().filter(|&l| l > 0.0).collect();
    if ls.is_empty() {
        return Err(EntropyError::EmptyBarcode);
    }
    ls.sort_by(f64::total_cmp);
    let total: f64 = ls.iter().sum();
    let h: f64 = ls
        .iter()
        .map(|&l| {
            let p = l / total;
            -p * p.ln()
        })
        .sum();
    let h = match log_base {
        Some(base) => h / base.ln(),
        None => h,
    };
    Ok(h.max(0.0))
}

/// Persistent entropy with natural log and index lengths.
pub fn persistent_entropy(b: &Barcode) -> Result<f64, EntropyError> {
    persistent_entropy_with(b, &EntropyOptions::default())
}

pub fn persistent_entropy_with(b: &Barcode, opts: &EntropyOptions) -> Result<f64, EntropyError> {
    entropy_of_lengths(&bar_lengths(b, opts.lengths, None)?, opts.log_base)
}

/// Entropy of each dimension's bars on their own.
pub fn entropy_by_dim(b: &Barcode, opts: &EntropyOptions) -> Result<BTreeMap<usize, f64>, EntropyError> {
    let mut out = BTreeMap::new();
    let dims: std::collections::BTreeSet<usize> = b.intervals.iter().map(|i| i.dim).collect();
    for d in dims {
        let lengths = bar_lengths(b, opts.lengths, Some(d))?;
        if !lengths.is_empty() {
            out.insert(d, entropy_of_lengths(&lengths, opts.log_base)?);
        }
    }
    Ok(out)
}

/// H over time with forward finite differences.
///
/// `d1[k] = (H[k+1] - H[k]) / (t[k+1] - t[k])`. `d2` differentiates `d1`
/// between the midpoints of consecutive tick intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropySeries {
    pub points: Vec<(u64, f64)>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl EntropySeries {
    pub fn from_points(points: Vec<(u64, f64)>) -> Result<Self, EntropyError> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(EntropyError::TickOrder(w[1].0));
            }
        }
        let d1: Vec<f64> = points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0) as f64)
            .collect();
        let d2: Vec<f64> = points
            .windows(3)
            .zip(d1.windows(2))
            .map(|(p, d)| (d[1] - d[0]) / ((p[2].0 - p[0].0) as f64 / 2.0))
            .collect();
        Ok(EntropySeries { points, d1, d2 })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ticks(&self) -> impl Iterator<Item = u64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn max_h(&self) -> f64 {
        self.values().fold(0.0, f64::max)
    }

    /// Slope used as Ḣ at point `k`: the difference arriving at `k`, or the
    /// one leaving it for the first point.
    pub fn slope_at(&self, k: usize) -> f64 {
        if self.d1.is_empty() {
            0.0
        } else if k == 0 {
            self.d1[0]
        } else {
            self.d1[k - 1]
        }
    }

    /// `tick,H,d1,d2` with empty cells where a difference is undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tick,H,d1,d2\n");
        for (k, (tick, h)) in self.points.iter().enumerate() {
            let d1 = self.d1.get(k).map(|x| x.to_string()).unwrap_or_default();
            let d2 = self.d2.get(k).map(|x| x.to_string()).unwrap_or_default();
            writeln!(out, "{tick},{h},{d1},{d2}").unwrap();
        }
        out
    }

    /// Reads back the `tick,H` columns; differences are recomputed.
    pub fn from_csv(text: &str) -> Result<Self, EntropyError> {
        let mut points = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("tick") {
                continue;
            }
            let err = |msg: &str| EntropyError::Csv {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let mut fields = line.split(',');
            let tick = fields
                .next()
                .and_then(|f| f.trim().parse::<u64>().ok())
                .ok_or_else(|| err("bad tick"))?;
            let h = fields
                .next()
                .and_then(|f| f.trim().parse::<f64>().ok())
                .ok_or_else(|| err("bad H value"))?;
            points.push((tick, h));
        }
        Self::from_points(points)
    }

    /// Gnuplot script drawing H(t) from the CSV at `csv_path`.
    pub fn gnuplot_script(csv_path: &str) -> String {
        format!(
            "set datafile separator ','\n\
             set key autotitle columnhead\n\
             set xlabel 'tick'\n\
             set ylabel 'persistent entropy'\n\
             set grid\n\
             plot '{csv_path}' using 1:2 with linespoints lw 2 title 'H(t)'\n"
        )
    }
}

/// Evaluates H for every `(tick, barcode)` and assembles the series.
pub fn chronogram(series: &[(u64, Barcode)], opts: &EntropyOptions) -> Result<EntropySeries, EntropyError> {
    let mut points = Vec::with_capacity(series.len());
    for (tick, b) in series {
        let h = match persistent_entropy_with(b, opts) {
            Ok(h) => h,
            Err(EntropyError::EmptyBarcode) if opts.empty == EmptyPolicy::Zero => 0.0,
            Err(e) => {
                return Err(EntropyError::AtTick {
                    tick: *tick,
                    source: Box::new(e),
                })
            }
        };
        points.push((*tick, h));
    }
    EntropySeries::from_points(points)
}
