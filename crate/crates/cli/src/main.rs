//! `ccgldpc`: BP and MAP thresholds, EXIT curves, weight enumerators and
//! minimum-distance bounds of (spatially coupled) GLDPC ensembles on the BEC.

mod config;
mod jobs;
mod output;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Analysis, ConfigError, EnsembleEntry, Format, JobConfig, Tolerances};

const EXIT_CELL_ERROR: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ccgldpc", version, about = "Thresholds and distance bounds of GLDPC ensembles on the BEC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BP threshold (bisection on density evolution) or MAP threshold (area theorem).
    Threshold {
        kind: ThresholdArg,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        de: DeArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Extrinsic EXIT curve `(epsilon, p_e)` of an uncoupled ensemble.
    ExitCurve {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Base grid step.
        #[arg(long, default_value_t = 5e-3)]
        step: f64,
        #[command(flatten)]
        de: DeArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Minimum-distance lower bound `d_hat` held by a fraction `alpha` of the ensemble.
    Dmin {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Segments per constraint node, comma separated; block length is `d_c * N`.
        #[arg(long = "N-list", visible_alias = "n-list", value_delimiter = ',', required_unless_present = "block_lengths")]
        n_list: Vec<usize>,
        /// Block lengths `n`, comma separated, each a multiple of `d_c`.
        #[arg(long, value_delimiter = ',', conflicts_with = "n_list")]
        block_lengths: Vec<usize>,
        /// Fixed weight cap (default: start at 32 and double while truncated).
        #[arg(long)]
        cap: Option<usize>,
        /// Two-encoder braided structure, `(2,3)` convolutional ensembles only.
        #[arg(long)]
        structured: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Component and ensemble-average weight spectra up to a cap.
    Wenum {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Segments per constraint node, comma separated.
        #[arg(long = "N-list", visible_alias = "n-list", value_delimiter = ',', required_unless_present = "block_lengths")]
        n_list: Vec<usize>,
        /// Block lengths `n`, comma separated, each a multiple of `d_c`.
        #[arg(long, value_delimiter = ',', conflicts_with = "n_list")]
        block_lengths: Vec<usize>,
        #[arg(long)]
        cap: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Erasure transfer function `(q_s, q_p) -> (p_s, p_p)` of a component decoder.
    Transfer {
        /// `conv:NUM/DEN` with octal generators.
        #[arg(long)]
        component: String,
        /// `q_s,q_p`; repeatable.
        #[arg(long = "point", required = true)]
        points: Vec<String>,
        /// Also estimate by decoding this many random trellis sections.
        #[arg(long)]
        mc_sections: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Recompute a published table or figure from a shipped preset.
    Reproduce {
        preset: Preset,
        /// Override the preset's resolution.
        #[arg(long)]
        resolution: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a JSON job file; flags override its settings.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resolution: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ThresholdArg {
    Bp,
    Map,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Table1,
    Table2,
    Fig4,
}

impl Preset {
    fn source(self) -> (&'static str, &'static str) {
        match self {
            Preset::Table1 => ("table1.json", include_str!("../presets/table1.json")),
            Preset::Table2 => ("table2.json", include_str!("../presets/table2.json")),
            Preset::Fig4 => ("fig4.json", include_str!("../presets/fig4.json")),
        }
    }
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// `dv,dc`.
    #[arg(long)]
    ensemble: String,
    /// `ldpc` or `conv:NUM/DEN` with octal generators.
    #[arg(long)]
    component: String,
    /// `uncoupled` or `m,L` (coupling memory, initial chain length).
    #[arg(long, default_value = "uncoupled")]
    coupling: String,
}

impl EnsembleArgs {
    fn entry(&self) -> EnsembleEntry {
        EnsembleEntry {
            ensemble: self.ensemble.clone(),
            component: self.component.clone(),
            coupling: self.coupling.clone(),
            reference: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Args)]
struct DeArgs {
    #[arg(long, default_value_t = 1e-4)]
    resolution: f64,
    /// DE iteration budget (per-ensemble default when absent).
    #[arg(long, requires_all = ["target", "stall_tol"])]
    max_iterations: Option<usize>,
    #[arg(long, requires = "max_iterations")]
    target: Option<f64>,
    #[arg(long, requires = "max_iterations")]
    stall_tol: Option<f64>,
}

impl DeArgs {
    fn apply(&self, cfg: &mut JobConfig) {
        cfg.resolution = self.resolution;
        if let (Some(max_iterations), Some(target), Some(stall_tol)) = (self.max_iterations, self.target, self.stall_tol) {
            cfg.tolerances = Some(Tolerances { max_iterations, target, stall_tol });
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Output file (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long, env = "CCGLDPC_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut JobConfig) {
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

fn parse_point(s: &str) -> Result<(f64, f64), ConfigError> {
    let err = || ConfigError::Invalid(format!("invalid point {s:?}: expected `q_s,q_p`"));
    let (a, b) = s.split_once(',').ok_or_else(err)?;
    Ok((a.trim().parse().map_err(|_| err())?, b.trim().parse().map_err(|_| err())?))
}

fn build_config(command: Command) -> Result<JobConfig, ConfigError> {
    let cfg = match command {
        Command::Threshold { kind, ensemble, de, run } => {
            let analysis = match kind {
                ThresholdArg::Bp => Analysis::Bp,
                ThresholdArg::Map => Analysis::Map,
            };
            let mut cfg = JobConfig::new(vec![ensemble.entry()], vec![analysis]);
            de.apply(&mut cfg);
            run.apply(&mut cfg);
            cfg
        }
        Command::ExitCurve { ensemble, step, de, run } => {
            let mut cfg = JobConfig::new(vec![ensemble.entry()], vec![Analysis::ExitCurve]);
            cfg.exit_step = step;
            de.apply(&mut cfg);
            run.apply(&mut cfg);
            cfg
        }
        Command::Dmin { ensemble, alpha, n_list, block_lengths, cap, structured, run } => {
            let mut cfg = JobConfig::new(vec![ensemble.entry()], vec![Analysis::Dmin]);
            cfg.alpha = alpha;
            cfg.segments = n_list;
            cfg.block_lengths = block_lengths;
            cfg.cap = cap;
            cfg.structured = structured;
            run.apply(&mut cfg);
            cfg
        }
        Command::Wenum { ensemble, n_list, block_lengths, cap, run } => {
            let mut cfg = JobConfig::new(vec![ensemble.entry()], vec![Analysis::Wenum]);
            cfg.segments = n_list;
            cfg.block_lengths = block_lengths;
            cfg.cap = Some(cap);
            run.apply(&mut cfg);
            cfg
        }
        Command::Transfer { component, points, mc_sections, run } => {
            let entry = EnsembleEntry {
                ensemble: "2,3".into(),
                component,
                coupling: "uncoupled".into(),
                reference: BTreeMap::new(),
            };
            let mut cfg = JobConfig::new(vec![entry], vec![Analysis::Transfer]);
            cfg.points = points.iter().map(|p| parse_point(p)).collect::<Result<_, _>>()?;
            cfg.mc_sections = mc_sections;
            run.apply(&mut cfg);
            cfg
        }
        Command::Reproduce { preset, resolution, run } => {
            let (name, text) = preset.source();
            let mut cfg = JobConfig::from_json(text, name.as_ref())?;
            if let Some(r) = resolution {
                cfg.resolution = r;
            }
            run.apply(&mut cfg);
            cfg
        }
        Command::Run { config, resolution, run } => {
            let mut cfg = JobConfig::load(&config)?;
            if let Some(r) = resolution {
                cfg.resolution = r;
            }
            run.apply(&mut cfg);
            cfg
        }
    };
    Ok(cfg)
}

fn write_artifact(cfg: &JobConfig, table: &output::Table) -> std::io::Result<()> {
    match &cfg.out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
            table.write(cfg.format, &mut file)?;
            file.flush()
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            table.write(cfg.format, &mut lock)?;
            lock.flush()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(cli.command) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let specs = match cfg.validate() {
        Ok(specs) => specs,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    if let Some(n) = cfg.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    }

    let start = Instant::now();
    let out = jobs::run_job(&cfg, &specs);
    if let Err(e) = write_artifact(&cfg, &out.table) {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(EXIT_CELL_ERROR);
    }
    let cells = cfg.ensembles.len() * cfg.analyses.len();
    eprintln!("{cells} cells in {:.2?}", start.elapsed());
    if out.failed_cells > 0 {
        eprintln!("{} of {cells} cells failed; see the error column", out.failed_cells);
        return ExitCode::from(EXIT_CELL_ERROR);
    }
    ExitCode::SUCCESS
}
