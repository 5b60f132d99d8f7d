//! Finite-key analysis of the one-decoy, three-state BB84 protocol.
//!
//! Pipeline: per-basis detection counts ([`BasisCounts`]) feed the decoy
//! bounds ([`decoy`], cross-checked by the linear program in [`lp`]), whose
//! single-photon estimates give the phase-error bound and the secret key
//! length ([`key`]). [`optimize`] searches source parameters on a grid.

pub mod decoy;
pub mod key;
pub mod lp;
pub mod optimize;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::ConfigErrors;
use crate::transmitter::IntensityClass;

/// Number of epsilon terms in the composable security budget.
pub const EPS_TERMS: f64 = 19.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityParams {
    pub eps_sec: f64,
    pub eps_cor: f64,
    /// Error-correction inefficiency relative to the Shannon limit.
    pub f_ec: f64,
    /// Highest photon number carried as an explicit LP variable.
    pub lp_photon_cap: usize,
    /// Failure probability of each concentration bound. Defaults to
    /// `eps_sec / 19`.
    pub eps_split: Option<f64>,
    /// Sifted key-basis bits per privacy-amplification block.
    pub block_bits: f64,
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self {
            eps_sec: 1e-10,
            eps_cor: 1e-15,
            f_ec: 1.16,
            lp_photon_cap: 10,
            eps_split: None,
            block_bits: 6.59e6,
        }
    }
}

impl SecurityParams {
    pub fn concentration_eps(&self) -> f64 {
        self.eps_split.unwrap_or(self.eps_sec / EPS_TERMS)
    }

    pub(crate) fn validate(&self, path: &str, errs: &mut ConfigErrors) {
        for (name, e) in [("eps_sec", self.eps_sec), ("eps_cor", self.eps_cor)] {
            if !(e > 0.0 && e < 1.0) {
                errs.push(format!("{path}.{name}"), "must be in (0, 1)");
            }
        }
        if let Some(e) = self.eps_split {
            if !(e > 0.0 && e < 1.0) {
                errs.push(format!("{path}.eps_split"), "must be in (0, 1)");
            }
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            errs.push(format!("{path}.f_ec"), "must be finite and >= 1");
        }
        if self.lp_photon_cap < 2 {
            errs.push(format!("{path}.lp_photon_cap"), "must be at least 2");
        }
        if !(self.block_bits >= 1.0 && self.block_bits.is_finite()) {
            errs.push(format!("{path}.block_bits"), "must be finite and >= 1");
        }
    }
}

/// Source parameters as known to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub mu: f64,
    pub nu: f64,
    pub p_mu: f64,
}

impl SourceParams {
    pub fn mean(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.mu,
            IntensityClass::Decoy => self.nu,
        }
    }

    pub fn probability(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.p_mu,
            IntensityClass::Decoy => 1.0 - self.p_mu,
        }
    }
}

/// Sifted detections and errors in one basis, per intensity class
/// (index 0 = signal, 1 = decoy).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BasisCounts {
    pub n: [f64; 2],
    pub m: [f64; 2],
    /// Pulses sent with a state of this basis.
    pub pulses: f64,
}

impl BasisCounts {
    pub fn detections(&self) -> f64 {
        self.n[0] + self.n[1]
    }

    pub fn errors(&self) -> f64 {
        self.m[0] + self.m[1]
    }

    pub fn qber(&self) -> Option<f64> {
        let n = self.detections();
        (n > 0.0).then(|| self.errors() / n)
    }

    pub fn scaled(&self, f: f64) -> BasisCounts {
        BasisCounts {
            n: self.n.map(|x| x * f),
            m: self.m.map(|x| x * f),
            pulses: self.pulses * f,
        }
    }
}
