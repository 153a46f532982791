//! `hypscat`: job-file driven pipeline from surface to resonances.

mod config;
mod output;
mod pipeline;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

use config::{EigsMode, JobConfig, Route, Task};
use output::{sha256_hex, Artifacts, Provenance};
use pipeline::{read_scatter, Cache, Pipeline};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: hypscat::Error,
    },
    #[error("case mismatch: {0}")]
    Mismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Library errors met while checking a config are config errors.
impl From<hypscat::Error> for CliError {
    fn from(e: hypscat::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "hypscat", version, about = "Scattering matrices and resonances of cusped hyperbolic surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory; defaults to the config's `output`, then ./hypscat-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cache directory; defaults to <out>/cache.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(long, global = true)]
    no_cache: bool,
    /// Threads for grids of independent evaluations.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task named in the config.
    Run { config: PathBuf },
    /// Build and describe the surface.
    Surface { config: PathBuf },
    /// Triangulate the surface.
    Mesh { config: PathBuf },
    /// Neumann eigenpairs and boundary coefficients.
    Fem { config: PathBuf },
    /// Scattering matrix on points or a critical-line grid.
    Scatter { config: PathBuf },
    #[command(subcommand)]
    Resonances(ResonanceCommand),
    #[command(subcommand)]
    Eigs(EigsCommand),
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Subcommand)]
enum ResonanceCommand {
    /// Grid scan or seeded Newton search.
    Find { config: PathBuf },
    /// Follow resonances along a surface parameter.
    Track { config: PathBuf },
    /// Argument-principle count in a rectangle.
    Count { config: PathBuf },
}

#[derive(Subcommand)]
enum EigsCommand {
    /// Embedded eigenvalues on the critical line, or odd Dirichlet eigenvalues.
    Scan { config: PathBuf },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Relative error of C̃ against a closed form or another scatter output.
    Compare { config: PathBuf },
}

impl Command {
    fn target(&self) -> (&PathBuf, Option<Task>) {
        match self {
            Command::Run { config } => (config, None),
            Command::Surface { config } => (config, Some(Task::Surface)),
            Command::Mesh { config } => (config, Some(Task::Mesh)),
            Command::Fem { config } => (config, Some(Task::SpectralData)),
            Command::Scatter { config } => (config, Some(Task::ScatterEval)),
            Command::Resonances(ResonanceCommand::Find { config }) => (config, Some(Task::ResonanceScan)),
            Command::Resonances(ResonanceCommand::Track { config }) => (config, Some(Task::ResonanceTrack)),
            Command::Resonances(ResonanceCommand::Count { config }) => (config, Some(Task::ResonanceCount)),
            Command::Eigs(EigsCommand::Scan { config }) => (config, Some(Task::EmbeddedScan)),
            Command::Oracle(OracleCommand::Compare { config }) => (config, Some(Task::ClosedFormCompare)),
        }
    }
}

fn task_name(task: Task) -> String {
    serde_json::to_value(task).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Everything a task needs, checked before anything touches the disk.
fn validate(cfg: &JobConfig, task: Task) -> Result<(), CliError> {
    cfg.surface_spec(&cfg.surface)?;
    let needs_interior = |cfg: &JobConfig| -> Result<(), CliError> {
        cfg.fem()?;
        cfg.anchors()?;
        Ok(())
    };
    match task {
        Task::Surface => {}
        Task::Mesh => {
            cfg.mesh()?;
        }
        Task::SpectralData => {
            needs_interior(cfg)?;
            if cfg.fem()?.route == Route::Direct {
                return Err(CliError::Config("spectral data needs route 'series'".into()));
            }
        }
        Task::ScatterEval => {
            needs_interior(cfg)?;
            let sc = cfg.scatter.as_ref().ok_or_else(|| CliError::Config("missing 'scatter' section".into()))?;
            if let Some(g) = &sc.t {
                g.points()?;
            }
            if sc.s.is_empty() && sc.t.is_none() {
                return Err(CliError::Config("scatter needs points 's' or a grid 't'".into()));
            }
        }
        Task::ResonanceScan | Task::ResonanceCount | Task::ResonanceTrack => {
            needs_interior(cfg)?;
            let rc = cfg.resonances.as_ref().ok_or_else(|| CliError::Config("missing 'resonances' section".into()))?;
            if !(rc.spacing > 0.0) || !rc.window.contains(hypscat::C64::new(0.5 * (rc.window.re0 + rc.window.re1), 0.5 * (rc.window.im0 + rc.window.im1))) {
                return Err(CliError::Config("resonance window must be non-empty with positive spacing".into()));
            }
            if task == Task::ResonanceCount && rc.count.is_none() {
                return Err(CliError::Config("missing 'resonances.count' section".into()));
            }
            if task == Task::ResonanceTrack {
                let tc = rc.track.as_ref().ok_or_else(|| CliError::Config("missing 'resonances.track' section".into()))?;
                if tc.values.is_empty() || tc.seeds.is_empty() {
                    return Err(CliError::Config("tracking needs parameter values and seeds".into()));
                }
                for &v in &tc.values {
                    cfg.surface_spec(&cfg.surface.with_param(&tc.param, v)?)?;
                }
            }
        }
        Task::EmbeddedScan => {
            let ec = cfg.eigs.as_ref().ok_or_else(|| CliError::Config("missing 'eigs' section".into()))?;
            match ec.mode {
                EigsMode::Embedded => {
                    needs_interior(cfg)?;
                    ec.t.ok_or_else(|| CliError::Config("embedded scan needs 'eigs.t'".into()))?.points()?;
                }
                EigsMode::OddDirichlet => {
                    cfg.mesh()?;
                    if !matches!(cfg.surface, config::SurfaceChoice::Modular { .. }) {
                        return Err(CliError::Config("odd-dirichlet mode applies to the modular surface".into()));
                    }
                }
            }
        }
        Task::ClosedFormCompare => {
            let oc = cfg.oracle.as_ref().ok_or_else(|| CliError::Config("missing 'oracle' section".into()))?;
            if oc.case.is_some() == oc.reference.is_some() {
                return Err(CliError::Config("oracle needs exactly one of 'case' and 'reference'".into()));
            }
            for p in oc.reference.iter().chain(&oc.computed) {
                read_scatter(p)?;
            }
            match &oc.computed {
                Some(_) => {}
                None => {
                    needs_interior(cfg)?;
                    oc.t.ok_or_else(|| CliError::Config("oracle needs 'computed' or 't'".into()))?.points()?;
                }
            }
        }
    }
    Ok(())
}

enum Outcome {
    Done,
    OracleFailed,
}

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let (path, implied) = cli.command.target();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = JobConfig::parse(&text)?;
    let task = implied.or(cfg.task).ok_or_else(|| CliError::Config("`run` needs a 'task' field".into()))?;
    validate(&cfg, task)?;

    let out_dir = cli.common.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("hypscat-out"));
    let cache = (!cli.common.no_cache).then(|| Cache::new(cli.common.cache.clone().unwrap_or_else(|| out_dir.join("cache"))));
    let hashed = JobConfig { output: None, task: Some(task), ..cfg.clone() };
    let provenance = Provenance::new(&sha256_hex(serde_json::to_string(&hashed)?.as_bytes()), &task_name(task));
    let mut artifacts = Artifacts::new(out_dir, provenance);

    let pipeline = Pipeline { cfg: &cfg, cache, workers: cli.common.workers };
    let outcome = if task == Task::ClosedFormCompare {
        if pipeline.oracle(&mut artifacts)? { Outcome::Done } else { Outcome::OracleFailed }
    } else {
        pipeline.run(task, &mut artifacts)?;
        Outcome::Done
    };
    for p in artifacts.commit()? {
        println!("{}", p.display());
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::OracleFailed) => {
            eprintln!("oracle comparison exceeded its limit");
            ExitCode::from(3)
        }
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
