use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use topo_sb::chu::ChuOrder;
use topo_sb::entropy::{self, EmptyPolicy, EntropyOptions, EntropySeries, LengthMode};
use topo_sb::graph::{ObservationSeries, WeightedGraph};
use topo_sb::immune::SimConfig;
use topo_sb::pea::{self, SegmentParams};
use topo_sb::pipeline::{self, HdaOptions, PeaOptions, PipelineConfig, StageCause, StageContext, StageError};
use topo_sb::{build_filtration, Barcode, WeightOrder};

#[derive(Parser)]
#[command(name = "topo-sb", version, about = "Topological analysis of weighted-network time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the idiotypic network simulator and write obs_<tick>.csv files
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// output directory
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the clique filtration of a graph, one `index;vertices` line per simplex
    Complex {
        /// edge list `u,v,w`
        graph: PathBuf,
        #[command(flatten)]
        filt: FiltrationArgs,
        /// write here instead of stdout
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Persistent homology of a graph: writes barcode.json and barcode.txt
    Homology {
        graph: PathBuf,
        #[command(flatten)]
        filt: FiltrationArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Persistent entropy of a barcode, a barcode directory or an observation series
    Entropy {
        /// barcode JSON, directory of barcode_<tick>.json, or observation series
        input: PathBuf,
        #[command(flatten)]
        filt: FiltrationArgs,
        #[command(flatten)]
        ent: EntropyArgs,
        /// also write a gnuplot script
        #[arg(long)]
        plot: bool,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Segment an entropy chronogram and derive the automaton
    Pea {
        /// entropy CSV (`tick,H,d1,d2`)
        entropy: PathBuf,
        #[command(flatten)]
        seg: SegmentArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Chu space and Hasse diagram of the agents in a barcode's generators
    Hda {
        /// barcode JSON
        barcode: PathBuf,
        #[command(flatten)]
        hda: HdaArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// All stages in one run
    Pipeline {
        /// observation series (directory or JSON); simulates when absent
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        filt: FiltrationArgs,
        #[command(flatten)]
        ent: EntropyArgs,
        #[command(flatten)]
        seg: SegmentArgs,
        /// also derive the behavioral model
        #[arg(long)]
        hda: bool,
        /// observation used for the behavioral model (default: last non-empty)
        #[arg(long)]
        hda_tick: Option<u64>,
        #[command(flatten)]
        hda_args: HdaArgs,
        #[arg(long)]
        plot: bool,
        #[arg(short, long)]
        out: PathBuf,
        /// worker threads for per-observation stages (0 = all cores)
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Args)]
struct SimArgs {
    /// simulator config, JSON or key=value lines
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repertoire: Option<usize>,
    #[arg(long)]
    ticks: Option<u64>,
    /// comma-separated injection ticks
    #[arg(long, value_delimiter = ',')]
    injections: Option<Vec<u64>>,
    #[arg(long)]
    stride: Option<u64>,
}

impl SimArgs {
    fn resolve(&self) -> Result<SimConfig, StageError> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p).stage("simulate")?,
            None => SimConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.repertoire {
            cfg.repertoire = v;
        }
        if let Some(v) = self.ticks {
            cfg.ticks = v;
        }
        if let Some(v) = &self.injections {
            cfg.injections = v.clone();
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        cfg.validate().stage("simulate")?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FiltrationArgs {
    /// weight order of the filtration
    #[arg(long, default_value = "descending")]
    order: WeightOrder,
    /// highest homology dimension
    #[arg(long, default_value_t = 1)]
    max_dim: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Lengths {
    Index,
    Real,
}

#[derive(Args)]
struct EntropyArgs {
    /// logarithm base (default: natural log)
    #[arg(long)]
    log_base: Option<f64>,
    /// bar lengths from filter indices or from weights
    #[arg(long, value_enum, default_value_t = Lengths::Index)]
    lengths: Lengths,
    /// fail on observations without features instead of scoring them H = 0
    #[arg(long)]
    strict_empty: bool,
}

impl EntropyArgs {
    fn options(&self) -> EntropyOptions {
        EntropyOptions {
            log_base: self.log_base,
            lengths: match self.lengths {
                Lengths::Index => LengthMode::Index,
                Lengths::Real => LengthMode::Real,
            },
            empty: if self.strict_empty { EmptyPolicy::Error } else { EmptyPolicy::Zero },
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// plateau slope tolerance [default: 0.05 * max H]
    #[arg(long)]
    eps: Option<f64>,
    /// minimum plateau length in samples [default: 5]
    #[arg(long)]
    window: Option<usize>,
    /// minimum peak prominence [default: 0.25 * max H]
    #[arg(long)]
    prominence: Option<f64>,
    /// extra transitions, `from,label,to` per line
    #[arg(long)]
    extra_transitions: Option<PathBuf>,
    /// state renaming, `old=new` per line
    #[arg(long)]
    rename: Option<PathBuf>,
}

impl SegmentArgs {
    fn options(&self, stage: &'static str) -> Result<PeaOptions, StageError> {
        let extra_transitions = match &self.extra_transitions {
            Some(p) => {
                let text = pipeline::read_file(p).stage(stage)?;
                pea::parse_extra_transitions(&text).stage(stage)?
            }
            None => Vec::new(),
        };
        let rename = match &self.rename {
            Some(p) => {
                let text = pipeline::read_file(p).stage(stage)?;
                pea::parse_mapping(&text).stage(stage)?
            }
            None => HashMap::new(),
        };
        Ok(PeaOptions {
            eps: self.eps,
            window: self.window,
            prominence: self.prominence,
            extra_transitions,
            rename,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StateOrder {
    Lex,
    Support,
}

#[derive(Args)]
struct HdaArgs {
    /// action names, one per line [default: elicits, reduces]
    #[arg(long)]
    actions: Option<PathBuf>,
    /// mutex pairs of action indices, `i,j` per line
    #[arg(long)]
    mutex: Option<PathBuf>,
    /// actions of one agent on the same target exclude each other
    #[arg(long)]
    mutex_same_target: bool,
    /// comma-separated agents to keep
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<usize>>,
    /// only label generator edges in increasing vertex order
    #[arg(long)]
    one_way: bool,
    /// column order of the Chu matrix
    #[arg(long, value_enum, default_value_t = StateOrder::Lex)]
    state_order: StateOrder,
}

impl HdaArgs {
    fn options(&self) -> Result<HdaOptions, StageError> {
        let mut opts = HdaOptions::default();
        if let Some(p) = &self.actions {
            opts.action_names = pipeline::parse_action_names(&pipeline::read_file(p).stage("hda")?);
        }
        if let Some(p) = &self.mutex {
            opts.mutex = pipeline::parse_mutex(&pipeline::read_file(p).stage("hda")?).stage("hda")?;
        }
        opts.mutex_same_target = self.mutex_same_target;
        opts.agents = self.agents.clone();
        opts.bidirectional = !self.one_way;
        opts.order = match self.state_order {
            StateOrder::Lex => ChuOrder::Lexicographic,
            StateOrder::Support => ChuOrder::BySupport,
        };
        Ok(opts)
    }
}

fn load_graph(path: &Path, stage: &'static str) -> Result<WeightedGraph, StageError> {
    WeightedGraph::load_edge_list(path).stage(stage)
}

fn load_barcode(path: &Path, stage: &'static str) -> Result<Barcode, StageError> {
    let text = pipeline::read_file(path).stage(stage)?;
    Barcode::from_json(&text).stage(stage)
}

/// Barcodes in a directory of `barcode_<tick>.json` files, by tick.
fn load_barcode_dir(dir: &Path) -> Result<Option<Vec<(u64, Barcode)>>, StageError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|source| StageCause::Io {
            path: dir.display().to_string(),
            source,
        })
        .stage("entropy")?;
    let mut out = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let tick = name
            .strip_prefix("barcode_")
            .and_then(|s| s.strip_suffix(".json"))
            .and_then(|s| s.parse::<u64>().ok());
        if let Some(t) = tick {
            out.push((t, load_barcode(&entry.path(), "entropy")?));
        }
    }
    if out.is_empty() {
        return Ok(None);
    }
    out.sort_by_key(|(t, _)| *t);
    Ok(Some(out))
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Simulate { sim, out } => {
            let cfg = sim.resolve()?;
            let series = pipeline::simulate_to(&out, &cfg)?;
            eprintln!("simulate: {} observations written to {}", series.len(), out.display());
        }
        Command::Complex { graph, filt, out } => {
            let g = load_graph(&graph, "complex")?;
            let dump = build_filtration(&g, filt.order, filt.max_dim + 1).dump();
            match out {
                Some(p) => pipeline::write_file(&p, &dump).stage("complex")?,
                None => print!("{dump}"),
            }
        }
        Command::Homology { graph, filt, out } => {
            let g = load_graph(&graph, "homology")?;
            let b = pipeline::barcode_of(&g, filt.order, filt.max_dim).stage("homology")?;
            pipeline::write_barcode(&out, None, &b).stage("homology")?;
            print!("{}", b.to_text());
        }
        Command::Entropy {
            input,
            filt,
            ent,
            plot,
            out,
            jobs,
        } => {
            let opts = ent.options();
            let barcodes = if input.is_file() && input.extension().is_some_and(|e| e == "json") {
                match load_barcode(&input, "entropy") {
                    Ok(b) => vec![(0, b)],
                    Err(_) => series_barcodes(&input, &filt, jobs)?,
                }
            } else if input.is_dir() {
                match load_barcode_dir(&input)? {
                    Some(b) => b,
                    None => series_barcodes(&input, &filt, jobs)?,
                }
            } else {
                series_barcodes(&input, &filt, jobs)?
            };
            let series = entropy::chronogram(&barcodes, &opts).stage("entropy")?;
            pipeline::write_entropy(&out, &series, plot).stage("entropy")?;
            if series.len() == 1 {
                println!("H = {}", series.points[0].1);
            }
        }
        Command::Pea { entropy, seg, out } => {
            let text = pipeline::read_file(&entropy).stage("pea")?;
            let series = EntropySeries::from_csv(&text).stage("pea")?;
            let outcome = pipeline::derive_pea(&series, &seg.options("pea")?).stage("pea")?;
            pipeline::write_pea(&out, &outcome).stage("pea")?;
            print_pea_summary(&outcome.params, &outcome.pea);
        }
        Command::Hda { barcode, hda, out } => {
            let b = load_barcode(&barcode, "hda")?;
            let opts = hda.options()?;
            let outcome = pipeline::derive_hda(&b, &opts).stage("hda")?;
            pipeline::write_hda(&out, &outcome, opts.order).stage("hda")?;
            eprintln!(
                "hda: {} actions, {} states, {} covering edges",
                outcome.actions.len(),
                outcome.space.len(),
                outcome.hasse.edges.len()
            );
        }
        Command::Pipeline {
            input,
            sim,
            filt,
            ent,
            seg,
            hda,
            hda_tick,
            hda_args,
            plot,
            out,
            jobs,
        } => {
            let series = match input {
                Some(p) => ObservationSeries::load(&p).stage("input")?,
                None => {
                    let cfg = sim.resolve()?;
                    pipeline::simulate_to(&out.join("observations"), &cfg)?
                }
            };
            let cfg = PipelineConfig {
                order: filt.order,
                max_dim: filt.max_dim,
                entropy: ent.options(),
                pea: seg.options("pea")?,
                hda: if hda { Some(hda_args.options()?) } else { None },
                hda_tick,
                plot,
                jobs,
            };
            let result = pipeline::run_pipeline(&series, &cfg)?;
            pipeline::write_pipeline(&out, &result, &cfg)?;
            print_pea_summary(&result.pea.params, &result.pea.pea);
        }
    }
    Ok(())
}

fn series_barcodes(input: &Path, filt: &FiltrationArgs, jobs: usize) -> Result<Vec<(u64, Barcode)>, StageError> {
    let series = ObservationSeries::load(input).stage("input")?;
    pipeline::barcodes(&series, filt.order, filt.max_dim, jobs).stage("homology")
}

fn print_pea_summary(params: &SegmentParams, p: &pea::Pea) {
    eprintln!(
        "pea: eps = {}, window = {}, prominence = {}",
        params.eps, params.window, params.prominence
    );
    for s in &p.states {
        eprintln!("  state {}: {}", s.name, s.invariant.describe());
    }
    for t in &p.transitions {
        eprintln!("  {} --{}--> {}", t.from, t.label, t.to);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.source.is_internal() { 3 } else { 2 })
        }
    }
}
