//! The `qfilt` command line.
//!
//! Exit codes: 0 success, 1 configuration or validation error, 2 numerical
//! failure (filter collapse, positivity breach, failed verification).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::filters::{FilterKind, FilterState};
use crate::lindblad::SemigroupPropagator;
use crate::operator::Operator;
use crate::persist::{read_record_with_metadata, record_metadata, write_record_with, Metadata, Table};
use crate::trajectory::{EnsembleSummary, ObservationRecord, Simulator};
use crate::verify;

/// Environment variable that overrides the output directory when `--out`
/// is not given.
pub const OUT_DIR_ENV: &str = "QFILT_OUT_DIR";

pub const RECORD_FILE: &str = "record.csv";
pub const PATH_FILE: &str = "path.csv";
pub const FILTER_PATH_FILE: &str = "filter_path.csv";
pub const ENSEMBLE_FILE: &str = "ensemble.csv";
pub const MASTER_FILE: &str = "master.csv";

#[derive(Parser, Debug)]
#[command(
    name = "qfilt",
    version,
    about = "Quantum filtering: simulation, replay and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to $QFILT_OUT_DIR, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample an observation record and write it with the filter path.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a record through a filter.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        record: PathBuf,
        /// zakai or bks; overrides the configured filter.
        #[arg(long)]
        filter: Option<FilterKind>,
    },
    /// Mean and standard error of the observables over many trajectories.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Unconditional expectations from the Lindblad semigroup.
    Master {
        #[command(flatten)]
        common: Common,
    },
    /// Run the built-in property suites.
    Verify,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(dir)
}

fn load(path: &Path, edit: impl FnOnce(&mut crate::config::RawConfig)) -> Result<RunConfig> {
    let mut raw = crate::config::RawConfig::parse(&crate::persist::read_text(path)?)?;
    edit(&mut raw);
    raw.validate()
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate { common, seed } => {
            let cfg = load(&common.config, |raw| {
                if let Some(s) = seed {
                    raw.seed = s;
                }
            })?;
            simulate(&cfg, &out_dir(common.out)?)?;
        }
        Command::Filter { common, record, filter } => {
            let mut cfg = load(&common.config, |_| {})?;
            if let Some(kind) = filter {
                cfg.filter = kind;
            }
            filter_record(&cfg, &record, &out_dir(common.out)?)?;
        }
        Command::Ensemble {
            common,
            seed,
            trajectories,
        } => {
            let cfg = load(&common.config, |raw| {
                if let Some(s) = seed {
                    raw.seed = s;
                }
                if let Some(n) = trajectories {
                    raw.n_trajectories = n;
                }
            })?;
            ensemble(&cfg, &out_dir(common.out)?)?;
        }
        Command::Master { common } => {
            let cfg = load(&common.config, |_| {})?;
            master(&cfg, &out_dir(common.out)?)?;
        }
        Command::Verify => {
            let results = verify::run_all();
            print!("{}", verify::render(&results));
            return Ok(if results.iter().all(|r| r.passed) { 0 } else { 2 });
        }
    }
    Ok(0)
}

fn simulator(cfg: &RunConfig) -> Result<Simulator<'_>> {
    let sim = Simulator::new(&cfg.model, cfg.scheme)?.with_positivity_floor(cfg.positivity_floor);
    Ok(match &cfg.feedback {
        Some(fb) => sim.with_feedback(fb),
        None => sim,
    })
}

fn observable_columns(observables: &[(String, Operator)]) -> Vec<String> {
    observables
        .iter()
        .flat_map(|(name, _)| [format!("Re⟨{name}⟩"), format!("Im⟨{name}⟩")])
        .collect()
}

struct PathWriter<'a> {
    table: Table,
    observables: &'a [(String, Operator)],
    dt: f64,
    likelihood: bool,
}

impl<'a> PathWriter<'a> {
    fn new(cfg: &'a RunConfig, record: &ObservationRecord, kind: FilterKind) -> Self {
        let meta = record_metadata(record, Metadata::new(Some(&cfg.hash), record.seed)).with("filter", kind);
        let likelihood = kind == FilterKind::Zakai;
        let mut columns = vec!["t".to_string()];
        columns.extend(observable_columns(&cfg.observables));
        if likelihood {
            columns.push("likelihood".into());
        }
        PathWriter {
            table: Table::new(meta, columns),
            observables: &cfg.observables,
            dt: record.dt,
            likelihood,
        }
    }

    fn push(&mut self, k: usize, state: &FilterState) {
        let mut row = vec![k as f64 * self.dt];
        for (_, x) in self.observables {
            let z = state.expectation(x);
            row.extend([z.re, z.im]);
        }
        if self.likelihood {
            row.push(state.likelihood);
        }
        self.table.push(row);
    }
}

/// Writes `record.csv` and `path.csv`; returns the record.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<ObservationRecord> {
    let sim = simulator(cfg)?;
    let mut states = Vec::with_capacity(cfg.grid.steps + 1);
    let record = sim.simulate(&cfg.rho0, cfg.grid, cfg.seed, |_, s| {
        if cfg.filter == FilterKind::Bks {
            states.push(s.clone())
        }
    })?;
    let mut path = PathWriter::new(cfg, &record, cfg.filter);
    if cfg.filter == FilterKind::Bks {
        for (k, s) in states.iter().enumerate() {
            path.push(k, s);
        }
    } else {
        sim.replay(&record, cfg.filter, &cfg.rho0, |k, s| path.push(k, s))?;
    }
    let record_path = out.join(RECORD_FILE);
    write_record_with(&record, &record_path, Metadata::new(Some(&cfg.hash), record.seed))?;
    path.table.write(&out.join(PATH_FILE))?;
    info!("wrote {} and {}", record_path.display(), out.join(PATH_FILE).display());
    println!("{}", record_path.display());
    println!("{}", out.join(PATH_FILE).display());
    Ok(record)
}

/// Replays `record` and writes `filter_path.csv`.
pub fn filter_record(cfg: &RunConfig, record: &Path, out: &Path) -> Result<()> {
    let (record, meta) = read_record_with_metadata(record)?;
    if let Some(hash) = meta.get("config_hash") {
        if hash != cfg.hash {
            warn!("record was produced under a different configuration (hash {hash})");
        }
    }
    let sim = simulator(cfg)?;
    let mut path = PathWriter::new(cfg, &record, cfg.filter);
    sim.replay(&record, cfg.filter, &cfg.rho0, |k, s| path.push(k, s))?;
    let target = out.join(FILTER_PATH_FILE);
    path.table.write(&target)?;
    println!("{}", target.display());
    Ok(())
}

pub fn ensemble_table(cfg: &RunConfig, summary: &EnsembleSummary) -> Table {
    let meta = Metadata::new(Some(&cfg.hash), cfg.seed)
        .with("scheme", cfg.scheme.kind)
        .with("kappa", cfg.scheme.kappa)
        .with("phase", cfg.scheme.phase)
        .with("dt", cfg.grid.dt)
        .with("steps", cfg.grid.steps)
        .with("n_trajectories", summary.trajectories)
        .with("min_eigenvalue", summary.health.min_eigenvalue);
    let mut columns = vec!["t".to_string()];
    for (name, _) in &cfg.observables {
        columns.extend([
            format!("Re⟨{name}⟩"),
            format!("Im⟨{name}⟩"),
            format!("stderr_Re⟨{name}⟩"),
            format!("stderr_Im⟨{name}⟩"),
        ]);
    }
    let mut table = Table::new(meta, columns);
    for (i, &t) in summary.times.iter().enumerate() {
        let mut row = vec![t];
        for obs in &summary.observables {
            row.extend([obs.mean[i].re, obs.mean[i].im, obs.stderr_re[i], obs.stderr_im[i]]);
        }
        table.push(row);
    }
    table
}

/// Writes `ensemble.csv`.
pub fn ensemble(cfg: &RunConfig, out: &Path) -> Result<EnsembleSummary> {
    let ops: Vec<Operator> = cfg.observables.iter().map(|(_, x)| x.clone()).collect();
    let summary = simulator(cfg)?.ensemble(&cfg.rho0, cfg.grid, cfg.n_trajectories, cfg.seed, &ops, cfg.stride)?;
    let target = out.join(ENSEMBLE_FILE);
    ensemble_table(cfg, &summary).write(&target)?;
    println!("{}", target.display());
    Ok(summary)
}

/// Writes `master.csv` with trace(exp(t𝓛')(ρ0)X) on the grid.
pub fn master(cfg: &RunConfig, out: &Path) -> Result<Table> {
    if cfg.feedback.is_some() {
        warn!("master ignores the control law; the reference uses the static hamiltonian");
    }
    let prop = SemigroupPropagator::new(&cfg.model, cfg.grid.dt)?;
    let meta = Metadata::new(Some(&cfg.hash), cfg.seed)
        .with("dt", cfg.grid.dt)
        .with("steps", cfg.grid.steps);
    let mut columns = vec!["t".to_string()];
    columns.extend(observable_columns(&cfg.observables));
    let mut table = Table::new(meta, columns);
    for (k, rho) in prop.trajectory(&cfg.rho0, cfg.grid.steps).iter().enumerate() {
        if k % cfg.stride != 0 {
            continue;
        }
        let mut row = vec![cfg.grid.time(k)];
        for (_, x) in &cfg.observables {
            let z = rho.trace_product(x);
            row.extend([z.re, z.im]);
        }
        table.push(row);
    }
    let target = out.join(MASTER_FILE);
    table.write(&target)?;
    println!("{}", target.display());
    Ok(table)
}
