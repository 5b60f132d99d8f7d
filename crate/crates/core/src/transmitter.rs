//! Transmitter: symbol stream, intensity modulator with a finite-bandwidth
//! driver, polarization encoder and VOA calibration.
//!
//! The intensity modulator is a Sagnac-loop polarization modulator followed
//! by a polarizer at angle `theta`. Signal pulses are emitted at phase 0
//! (|D>, response maximum) and decoy pulses at phase `swing` (|A> for the
//! default swing of pi, response minimum). Both operating points are
//! stationary points of the response, which is what suppresses patterning.
//! The quadrature mode moves both targets onto the steep slope around pi/2
//! and serves as a conventional-modulator baseline.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigErrors, Error, Result};
use crate::optics::{intensity_ratio, optical_response, theta_for_ratio, NamedSop};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityClass {
    Signal,
    Decoy,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 2] = [IntensityClass::Signal, IntensityClass::Decoy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            IntensityClass::Signal => "mu",
            IntensityClass::Decoy => "nu",
        }
    }
}

/// Logical state of the three-state alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicalState {
    /// Key-basis 0, encoded as |L>.
    Zero,
    /// Key-basis 1, encoded as |R>.
    One,
    /// Control state, encoded as |D>.
    Plus,
}

impl LogicalState {
    pub const ALL: [LogicalState; 3] = [LogicalState::Zero, LogicalState::One, LogicalState::Plus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_key_basis(self) -> bool {
        !matches!(self, LogicalState::Plus)
    }

    pub fn label(self) -> &'static str {
        match self {
            LogicalState::Zero => "0",
            LogicalState::One => "1",
            LogicalState::Plus => "+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PulseSymbol {
    pub intensity: IntensityClass,
    pub state: LogicalState,
}

impl PulseSymbol {
    pub const fn new(intensity: IntensityClass, state: LogicalState) -> Self {
        Self { intensity, state }
    }
}

/// ket0 -> L, ket1 -> R, plus -> D.
pub fn encode_polarization(symbol: PulseSymbol) -> NamedSop {
    match symbol.state {
        LogicalState::Zero => NamedSop::L,
        LogicalState::One => NamedSop::R,
        LogicalState::Plus => NamedSop::D,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModulatorMode {
    #[default]
    #[serde(rename = "stationary")]
    StationaryPoint,
    #[serde(rename = "quadrature")]
    Quadrature,
}

/// First-order settling of the phase-modulator drive.
///
/// At the sampling instant of a slot, a fraction `settle_fraction` of the
/// previous applied phase's offset from the new target is still present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverModel {
    pub settle_fraction: f64,
    /// Full phase swing between the two targets. `None` selects pi in
    /// stationary mode and pi/2 in quadrature mode.
    pub swing_rad: Option<f64>,
}

impl Default for DriverModel {
    fn default() -> Self {
        Self {
            settle_fraction: 0.0,
            swing_rad: None,
        }
    }
}

impl DriverModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn with_settle(settle_fraction: f64) -> Self {
        Self {
            settle_fraction,
            swing_rad: None,
        }
    }

    pub fn swing(&self, mode: ModulatorMode) -> f64 {
        self.swing_rad.unwrap_or(match mode {
            ModulatorMode::StationaryPoint => PI,
            ModulatorMode::Quadrature => FRAC_PI_2,
        })
    }

    /// Target phases for (signal, decoy).
    pub fn targets(&self, mode: ModulatorMode) -> [f64; 2] {
        let swing = self.swing(mode);
        match mode {
            ModulatorMode::StationaryPoint => [0.0, swing],
            ModulatorMode::Quadrature => [FRAC_PI_2 - 0.5 * swing, FRAC_PI_2 + 0.5 * swing],
        }
    }

    pub(crate) fn validate(&self, path: &str, errs: &mut ConfigErrors) {
        if !(0.0..1.0).contains(&self.settle_fraction) {
            errs.push(format!("{path}.settle_fraction"), "must be in [0, 1)");
        }
        if let Some(s) = self.swing_rad {
            if !(s > 0.0 && s <= PI) {
                errs.push(format!("{path}.swing_rad"), "must be in (0, pi]");
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransmitterConfig {
    pub rep_rate_hz: f64,
    /// Signal mean photon number.
    pub mu: f64,
    /// Decoy mean photon number. Derived from `theta_rad` when omitted.
    pub nu: Option<f64>,
    /// Probability of a signal pulse.
    pub p_mu: f64,
    /// Probability of the key alphabet (L/R); the remainder sends |D>.
    pub p_z: f64,
    /// Equivalent polarizer angle from |H>. Derived from `nu / mu` when omitted.
    pub theta_rad: Option<f64>,
    pub driver: DriverModel,
    pub modulator_mode: ModulatorMode,
}

impl Default for TransmitterConfig {
    fn default() -> Self {
        Self {
            rep_rate_hz: 50e6,
            mu: 0.6,
            nu: Some(0.2),
            p_mu: 0.7,
            p_z: 0.9,
            theta_rad: None,
            driver: DriverModel::default(),
            modulator_mode: ModulatorMode::StationaryPoint,
        }
    }
}

impl TransmitterConfig {
    /// Polarizer angle, explicit or derived from the configured intensity ratio.
    pub fn theta(&self) -> Result<f64> {
        match (self.theta_rad, self.nu) {
            (Some(t), _) => Ok(t),
            (None, Some(nu)) => theta_for_ratio(nu / self.mu),
            (None, None) => Err(Error::InvalidArgument(
                "either nu or theta_rad must be configured".into(),
            )),
        }
    }

    /// Nominal decoy intensity at the stationary operating point.
    pub fn nu(&self) -> Result<f64> {
        match self.nu {
            Some(nu) => Ok(nu),
            None => Ok(self.mu * intensity_ratio(self.theta()?)?),
        }
    }

    /// Sets the polarizer angle and the matching decoy intensity together.
    pub fn set_theta(&mut self, theta: f64) -> Result<()> {
        self.nu = Some(self.mu * intensity_ratio(theta)?);
        self.theta_rad = Some(theta);
        Ok(())
    }

    pub fn p_nu(&self) -> f64 {
        1.0 - self.p_mu
    }

    /// Probability of sending `symbol`.
    pub fn symbol_probability(&self, symbol: PulseSymbol) -> f64 {
        let pk = match symbol.intensity {
            IntensityClass::Signal => self.p_mu,
            IntensityClass::Decoy => self.p_nu(),
        };
        let pa = match symbol.state {
            LogicalState::Zero | LogicalState::One => 0.5 * self.p_z,
            LogicalState::Plus => 1.0 - self.p_z,
        };
        pk * pa
    }

    pub(crate) fn validate(&self, path: &str, errs: &mut ConfigErrors) {
        if !(self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0) {
            errs.push(format!("{path}.rep_rate_hz"), "must be positive");
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            errs.push(format!("{path}.mu"), "must be positive");
        }
        for (name, p) in [("p_mu", self.p_mu), ("p_z", self.p_z)] {
            if !(p > 0.0 && p < 1.0) {
                errs.push(format!("{path}.{name}"), "must be in (0, 1)");
            }
        }
        if let Some(t) = self.theta_rad {
            if !t.is_finite() {
                errs.push(format!("{path}.theta_rad"), "must be finite");
            } else if optical_response(0.0, t) <= 1e-15 {
                errs.push(format!("{path}.theta_rad"), "polarizer blocks the signal state");
            }
        }
        match (self.nu, self.theta_rad) {
            (None, None) => errs.push(format!("{path}.nu"), "either nu or theta_rad is required"),
            (Some(nu), theta) => {
                if !(nu > 0.0 && nu < self.mu) {
                    errs.push(format!("{path}.nu"), "must satisfy 0 < nu < mu");
                } else if let Some(t) = theta {
                    if let Ok(ir) = intensity_ratio(t) {
                        if ((self.mu * ir - nu) / nu).abs() > 1e-6 {
                            errs.push(
                                format!("{path}.theta_rad"),
                                format!(
                                    "polarizer angle gives nu = {}, inconsistent with nu = {nu}",
                                    self.mu * ir
                                ),
                            );
                        }
                    }
                }
            }
            (None, Some(t)) => {
                if let Ok(ir) = intensity_ratio(t) {
                    if !(ir > 0.0 && ir < 1.0) {
                        errs.push(format!("{path}.theta_rad"), "implied nu/mu must be in (0, 1)");
                    }
                }
            }
        }
        self.driver.validate(&format!("{path}.driver"), errs);
    }
}

/// Draws one symbol: intensity first, then the logical state.
#[inline]
pub fn draw_symbol<R: Rng + ?Sized>(p_mu: f64, p_z: f64, rng: &mut R) -> PulseSymbol {
    let intensity = if rng.random::<f64>() < p_mu {
        IntensityClass::Signal
    } else {
        IntensityClass::Decoy
    };
    let u: f64 = rng.random();
    let state = if u < 0.5 * p_z {
        LogicalState::Zero
    } else if u < p_z {
        LogicalState::One
    } else {
        LogicalState::Plus
    };
    PulseSymbol { intensity, state }
}

/// `n` i.i.d. symbols.
pub fn generate_sequence<R: Rng + ?Sized>(n: usize, config: &TransmitterConfig, rng: &mut R) -> Vec<PulseSymbol> {
    (0..n).map(|_| draw_symbol(config.p_mu, config.p_z, rng)).collect()
}

/// Stateful phase driver implementing the settling recurrence.
#[derive(Debug, Clone)]
pub struct Driver {
    settle: f64,
    targets: [f64; 2],
    last: Option<f64>,
}

impl Driver {
    pub fn new(model: &DriverModel, mode: ModulatorMode) -> Self {
        Self {
            settle: model.settle_fraction,
            targets: model.targets(mode),
            last: None,
        }
    }

    pub fn target(&self, class: IntensityClass) -> f64 {
        self.targets[class.index()]
    }

    /// Applied phase for the next slot.
    #[inline]
    pub fn step(&mut self, class: IntensityClass) -> f64 {
        let target = self.targets[class.index()];
        let applied = match self.last {
            Some(prev) => target + self.settle * (prev - target),
            None => target,
        };
        self.last = Some(applied);
        applied
    }
}

/// Applied phase per slot.
pub fn driver_phase_trace(symbols: &[PulseSymbol], config: &TransmitterConfig) -> Vec<f64> {
    let mut driver = Driver::new(&config.driver, config.modulator_mode);
    symbols.iter().map(|s| driver.step(s.intensity)).collect()
}

/// Intensity modulator plus VOA, calibrated so that an ideal signal slot
/// carries exactly `mu` photons on average.
#[derive(Debug, Clone, Copy)]
pub struct IntensityModulator {
    theta: f64,
    targets: [f64; 2],
    scale: f64,
}

impl IntensityModulator {
    pub fn new(config: &TransmitterConfig) -> Result<Self> {
        let theta = config.theta()?;
        if config.modulator_mode == ModulatorMode::StationaryPoint {
            intensity_ratio(theta)?;
        }
        let targets = config.driver.targets(config.modulator_mode);
        let bright = optical_response(targets[0], theta);
        if bright <= 1e-15 {
            return Err(Error::Pole { theta });
        }
        Ok(Self {
            theta,
            targets,
            scale: config.mu / bright,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Mean photon number for an applied phase.
    #[inline]
    pub fn mean_photons(&self, applied_phase: f64) -> f64 {
        self.scale * optical_response(applied_phase, self.theta)
    }

    /// Mean photon number of a class with an ideal driver.
    pub fn ideal_mean(&self, class: IntensityClass) -> f64 {
        self.mean_photons(self.targets[class.index()])
    }
}

/// Mean photon number per slot, including driver settling.
pub fn pulse_mean_photons(symbols: &[PulseSymbol], config: &TransmitterConfig) -> Result<Vec<f64>> {
    let modulator = IntensityModulator::new(config)?;
    Ok(driver_phase_trace(symbols, config)
        .into_iter()
        .map(|phi| modulator.mean_photons(phi))
        .collect())
}
