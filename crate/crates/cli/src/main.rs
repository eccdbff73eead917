//! `otprox`: phantoms, simulated CT data, reconstructions and transport
//! diagnostics from the command line.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for configuration and input-validation failures.
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] otprox::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use otprox::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) => match e {
                E::Numerical { .. } => EXIT_NUMERICAL,
                E::Io(_) | E::Parse(_) => EXIT_IO,
                E::Domain(_)
                | E::Config(_)
                | E::Dimension { .. }
                | E::Model(_)
                | E::Unsupported(_) => EXIT_CONFIG,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "otprox", version, about)]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize a phantom (or a warped copy used as a prior).
    Phantom(PhantomArgs),
    /// Simulate noisy parallel-beam data for an image.
    Project(ProjectArgs),
    /// Reconstruct an image from a sinogram.
    Reconstruct(ReconstructArgs),
    /// Entropic transport cost between two images.
    Transport(TransportArgs),
    /// Where the mass of a prior region ends up under a transport plan.
    Flow(FlowArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub size: Option<usize>,
    /// `shepp_logan` or `warped_prior`.
    #[arg(long)]
    pub kind: Option<String>,
    /// Warp amplitude for `warped_prior`.
    #[arg(long)]
    pub warp: Option<f64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// First angle of the scanned range (radians).
    #[arg(long, allow_hyphen_values = true)]
    pub angle_min: Option<f64>,
    /// End of the scanned range (radians).
    #[arg(long, allow_hyphen_values = true)]
    pub angle_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub angles: Option<usize>,
    #[arg(long)]
    pub lines: Option<usize>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Relative noise level `‖e‖ / ‖Aμ‖`.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub kappa_factor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// fbp, tv, tv_l2 or tv_omt.
    #[arg(long)]
    pub method: Option<String>,
    /// Sinogram (angles × lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Data-ball radius; read from the data manifest when omitted.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Ground truth, used only for error metrics.
    #[arg(long)]
    pub phantom: Option<PathBuf>,
    /// Image side length (defaults to the prior's or phantom's, else 64).
    #[arg(long)]
    pub size: Option<usize>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Outer splitting iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Early stop on the fixed-point residual (0 runs all iterations).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub inner_iters: Option<usize>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub truncation: Option<f64>,
    /// Hann cutoff for fbp, as a fraction of Nyquist.
    #[arg(long)]
    pub filter: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    #[arg(long)]
    pub mu0: PathBuf,
    #[arg(long)]
    pub mu1: PathBuf,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub truncation: Option<f64>,
    #[arg(long)]
    pub power: Option<f64>,
    /// Marginal-residual tolerance relative to the total mass.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Report path (JSON); printed to stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub prior: PathBuf,
    /// Transported image; required unless `--potentials` is given.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Region of the prior: nonzero entries are inside.
    #[arg(long)]
    pub mask: PathBuf,
    /// Saved dual potentials (2 × n: λ0 then λ1), e.g. from `reconstruct`.
    #[arg(long)]
    pub potentials: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub truncation: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Applies `OTPROX_THREADS` to the global thread pool.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("OTPROX_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Config(format!("OTPROX_THREADS must be a positive integer, got '{raw}'")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::info!("built without parallel support; OTPROX_THREADS={n} has no effect");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let file = match &cli.config {
        Some(p) => config::ConfigFile::load(p)?,
        None => config::ConfigFile::default(),
    };
    match cli.command {
        Command::Phantom(a) => commands::phantom(&a, &file),
        Command::Project(a) => commands::project(&a, &file),
        Command::Reconstruct(a) => commands::reconstruct(&a, &file),
        Command::Transport(a) => commands::transport(&a, &file),
        Command::Flow(a) => commands::flow(&a, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
