//! Config-driven workflows over the `issta` library: synthesis, simulation,
//! comparison, post-run analysis, chattering prediction and plotting.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use issta::analysis::AnalysisError;
use issta::config::{ConfigError, ControllerKind};
use issta::issta_controller::ControllerError;
use issta::lmi_synthesis::SynthesisError;
use issta::sim_engine::SimError;

pub mod commands;
pub mod plot;
pub mod workspace;

pub use commands::{
    cmd_analyze, cmd_chatter, cmd_compare, cmd_plot, cmd_simulate, cmd_sweep, cmd_synthesize, parse_sweep, run_sweep,
    synthesize_config, write_gains, CompareReport, Sweep, SweepPoint, Synthesis,
};
pub use workspace::{RunArtifacts, RunSummary, Workspace};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Infeasible(SynthesisError),
    #[error("simulation blew up at t = {t:.6} s: {reason}")]
    BlowUp { t: f64, reason: String },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Infeasible(_) => 3,
            Self::BlowUp { .. } => 4,
            _ => 1,
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Input(m) => Self::Config(ConfigError::Invalid(m)),
            other => Self::Infeasible(other),
        }
    }
}

impl From<ControllerError> for CliError {
    fn from(e: ControllerError) -> Self {
        match e {
            ControllerError::RhoBelowThreshold { .. } => Self::Infeasible(SynthesisError::Certificate(e.to_string())),
            other => Self::Config(ConfigError::Invalid(other.to_string())),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Self::Config(c),
            SimError::Synthesis(s) => s.into(),
            SimError::Controller(c) => c.into(),
            SimError::BlowUp { t, reason } => Self::BlowUp { t, reason },
            SimError::Io(m) => Self::Io(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "issta", version, about = "Integral-surface super-twisting control of a hydraulic cylinder")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML). Takes precedence over --preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in scenario: benchmark, benchmark-vgsta, linear-nominal, rho-step, reachability.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Override the noise seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact root directory.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Override the controller: issta, vgsta or relay.
    #[arg(long, global = true)]
    pub controller: Option<ControllerKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the surface LMI and write the gains file with its certificate.
    Synthesize,
    /// Run a scenario and write trace, report and plots.
    Simulate {
        /// Parameter sweep such as `rho=2,5,10,20` (keys: rho, k1, k2, seed).
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Run two scenarios on the same profile and report them side by side.
    Compare {
        /// Second scenario file.
        #[arg(long)]
        against_config: Option<PathBuf>,
        /// Second scenario preset.
        #[arg(long)]
        against_preset: Option<String>,
        /// Controller of the second run; defaults to vgsta when nothing else is given.
        #[arg(long)]
        against_controller: Option<ControllerKind>,
    },
    /// Recompute indices and stability checks for a finished run directory.
    Analyze {
        run_dir: PathBuf,
        /// Index window `start,end` in seconds.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        window: Option<Vec<f64>>,
        /// Perturbation level for the ultimate-bound check.
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
    },
    /// Describing-function amplitude and phase-deficit prediction.
    Chatter {
        /// Loop time constant; defaults to 1/h_fast.
        #[arg(long)]
        t_s: Option<f64>,
        /// Analysis frequency [rad/s].
        #[arg(long, default_value_t = 100.0)]
        omega: f64,
    },
    /// Render SVG panels for a finished run directory.
    Plot { run_dir: PathBuf },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    match cli.command {
        Command::Synthesize => cmd_synthesize(c).map(|_| ()),
        Command::Simulate { sweep } => match sweep {
            Some(spec) => cmd_sweep(c, &spec).map(|_| ()),
            None => cmd_simulate(c).map(|_| ()),
        },
        Command::Compare { against_config, against_preset, against_controller } => {
            cmd_compare(c, against_config, against_preset, against_controller).map(|_| ())
        }
        Command::Analyze { run_dir, window, beta } => {
            cmd_analyze(&run_dir, window.map(|w| (w[0], w[1])), beta).map(|_| ())
        }
        Command::Chatter { t_s, omega } => cmd_chatter(c, t_s, omega).map(|_| ()),
        Command::Plot { run_dir } => cmd_plot(&run_dir).map(|_| ()),
    }
}
