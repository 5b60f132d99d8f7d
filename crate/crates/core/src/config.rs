//! Complete experiment configuration, loaded from TOML.
//!
//! Every field has a default, so an empty file describes the reference
//! 900 s, 15 dB channel scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigErrors, Error, Result};
use crate::link::{ChannelConfig, ReceiverConfig};
use crate::security::{SecurityParams, SourceParams};
use crate::transmitter::{IntensityClass, IntensityModulator, TransmitterConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Quantum transmission time for aggregate runs.
    pub duration_s: f64,
    /// Slot count for Monte Carlo runs.
    pub pulses: u64,
    /// Granularity of the QBER time series.
    pub window_s: f64,
    pub transmitter: TransmitterConfig,
    pub channel: ChannelConfig,
    pub receiver: ReceiverConfig,
    pub security: SecurityParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            duration_s: 900.0,
            pulses: 10_000_000,
            window_s: 1.0,
            transmitter: TransmitterConfig::default(),
            channel: ChannelConfig::default(),
            receiver: ReceiverConfig::default(),
            security: SecurityParams::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Collects every invalid field rather than stopping at the first.
    pub fn field_errors(&self) -> ConfigErrors {
        let mut errs = ConfigErrors::default();
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            errs.push("duration_s", "must be finite and positive");
        }
        if self.pulses == 0 {
            errs.push("pulses", "must be at least 1");
        }
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            errs.push("window_s", "must be finite and positive");
        }
        self.transmitter.validate("transmitter", &mut errs);
        self.channel.validate("channel", &mut errs);
        self.receiver.validate("receiver", &mut errs);
        self.security.validate("security", &mut errs);
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.field_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Intensities and signal probability the sender assumes in the
    /// security analysis: the ideal-driver mean photon numbers.
    pub fn source_params(&self) -> Result<SourceParams> {
        let m = IntensityModulator::new(&self.transmitter)?;
        Ok(SourceParams {
            mu: m.ideal_mean(IntensityClass::Signal),
            nu: m.ideal_mean(IntensityClass::Decoy),
            p_mu: self.transmitter.p_mu,
        })
    }

    /// Number of slots in `duration_s`.
    pub fn slots_in_duration(&self) -> f64 {
        (self.duration_s * self.transmitter.rep_rate_hz).round()
    }
}
