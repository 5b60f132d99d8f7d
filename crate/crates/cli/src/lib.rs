//! Command-line experiments for the pognac simulator.
//!
//! Every subcommand writes tab-separated data files, JSON reports and a
//! `manifest.json` holding the effective configuration and the SHA-256 of
//! each output; `pognac rerun` replays a manifest and verifies the digests.

pub mod error;
pub mod experiment;
pub mod manifest;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pognac_core::transmitter::ModulatorMode;
use pognac_core::ExperimentConfig;

pub use error::{CliError, Result};
pub use experiment::Experiment;
pub use manifest::{rerun, run_recorded, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "pognac", version, about = "Decoy-state BB84 source simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optical response of the intensity modulator versus phase difference.
    Response {
        #[command(flatten)]
        common: Common,
        /// Equivalent polarizer angles in radians.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        thetas: Option<Vec<f64>>,
        /// Odd number of phase samples over [-2pi, 2pi].
        #[arg(long, default_value_t = 801)]
        points: usize,
    },
    /// Monte Carlo decoy/signal ratio sweep over polarizer angles.
    Malus {
        #[command(flatten)]
        common: Common,
        /// Polarizer angles in radians, strictly increasing.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        angles: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1_000_000)]
        pulses_per_angle: u64,
    },
    /// Intensity patterning statistics over a repeated pseudorandom pattern.
    Patterning {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1024)]
        pattern_len: usize,
        /// Pattern positions listed in the slot histogram.
        #[arg(long, default_value_t = 64)]
        window: usize,
    },
    /// Aggregate QKD session with per-block finite-key rates.
    Qkd {
        #[command(flatten)]
        common: Common,
    },
    /// Grid search of source parameters versus total attenuation.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Total end-to-end attenuations in dB.
        #[arg(long, value_delimiter = ',')]
        losses: Option<Vec<f64>>,
    },
    /// Replays a manifest and verifies that every output is byte-identical.
    Rerun {
        manifest: PathBuf,
        /// Directory for the replayed outputs.
        #[arg(long, default_value = "pognac-rerun")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Stationary,
    Quadrature,
}

impl From<Mode> for ModulatorMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Stationary => ModulatorMode::StationaryPoint,
            Mode::Quadrature => ModulatorMode::Quadrature,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration; every field defaults to the reference scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "pognac-out")]
    pub out: PathBuf,
    /// Channel loss in dB, excluding the receiver.
    #[arg(long, allow_negative_numbers = true)]
    pub loss_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub duration_s: Option<f64>,
    /// Monte Carlo slot count.
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Equivalent polarizer angle in radians; sets the decoy intensity.
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
}

impl Common {
    /// Loads the configuration and applies command-line overrides.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
                pognac_core::Error::Io(source) => CliError::io(p, source),
                e => e.into(),
            })?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.loss_db {
            cfg.channel.loss_db = l;
        }
        if let Some(d) = self.duration_s {
            cfg.duration_s = d;
        }
        if let Some(n) = self.pulses {
            cfg.pulses = n;
        }
        if let Some(m) = self.mode {
            cfg.transmitter.modulator_mode = m.into();
        }
        if let Some(t) = self.theta {
            cfg.transmitter.set_theta(t)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Executes a parsed command line; `invocation` is recorded in the manifest.
pub fn run(cli: Cli, invocation: Vec<String>) -> Result<RunManifest> {
    let (common, experiment) = match cli.command {
        Command::Rerun { manifest, out } => return rerun(&manifest, &out, invocation),
        Command::Response { common, thetas, points } => (
            common,
            Experiment::Response {
                thetas: thetas.unwrap_or_else(experiment::default_response_thetas),
                points,
            },
        ),
        Command::Malus {
            common,
            angles,
            pulses_per_angle,
        } => (
            common,
            Experiment::Malus {
                angles: angles.unwrap_or_else(experiment::default_malus_angles),
                pulses_per_angle,
            },
        ),
        Command::Patterning {
            common,
            pattern_len,
            window,
        } => (common, Experiment::Patterning { pattern_len, window }),
        Command::Qkd { common } => (common, Experiment::Qkd),
        Command::Optimize { common, losses } => (
            common,
            Experiment::Optimize {
                losses_db: losses.unwrap_or_else(experiment::default_losses_db),
            },
        ),
    };
    let cfg = common.resolve()?;
    run_recorded(&experiment, &cfg, &common.out, invocation)
}
