//! Free-space link and passive polarization receiver.
//!
//! A 60:40 beam splitter picks the measurement basis: the transmitted arm
//! projects onto L/R (key basis Z), the reflected arm onto D/A (control basis
//! X). Each arm carries one misalignment: a retarder on the Z arm (mixes L
//! and R) and a rotator on the X arm (mixes D and A), both parametrized so
//! that the error probability of an ideal input is `sin^2(angle)`.
//!
//! Photon statistics are Poissonian with independent per-photon survival, so
//! each detector sees a Poisson number of photons with mean
//! `mean_photons * eta * w_d * q_d`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigErrors;
use crate::optics::{rotator, sop_vector, waveplate, JonesVector, NamedSop};

/// Receiver loss that, together with 68 % detector efficiency, adds 4.5 dB
/// on top of the channel.
pub const DEFAULT_RECEIVER_LOSS_DB: f64 = 2.825_089_127_062_363_5;

/// Misalignments reproducing Q_Z = 0.62 % and Q_X = 1.15 % at the default
/// operating point (see `session::tune_misalignment`).
pub const DEFAULT_MISALIGN_Z_RAD: f64 = 0.009_221_362_528_030_654;
pub const DEFAULT_MISALIGN_X_RAD: f64 = 0.049_274_359_239_138_754;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorId {
    Z0,
    Z1,
    XPlus,
    XMinus,
}

impl DetectorId {
    pub const ALL: [DetectorId; 4] = [DetectorId::Z0, DetectorId::Z1, DetectorId::XPlus, DetectorId::XMinus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> DetectorId {
        Self::ALL[i]
    }

    pub fn basis(self) -> Basis {
        match self {
            DetectorId::Z0 | DetectorId::Z1 => Basis::Z,
            DetectorId::XPlus | DetectorId::XMinus => Basis::X,
        }
    }

    /// State this detector projects onto.
    pub fn projection(self) -> NamedSop {
        match self {
            DetectorId::Z0 => NamedSop::L,
            DetectorId::Z1 => NamedSop::R,
            DetectorId::XPlus => NamedSop::D,
            DetectorId::XMinus => NamedSop::A,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DetectorId::Z0 => "Z0",
            DetectorId::Z1 => "Z1",
            DetectorId::XPlus => "X+",
            DetectorId::XMinus => "X-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub loss_db: f64,
    /// Stray-light counts per second per detector.
    pub background_rate_hz: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            loss_db: 15.0,
            background_rate_hz: 0.0,
        }
    }
}

impl ChannelConfig {
    pub(crate) fn validate(&self, path: &str, errs: &mut ConfigErrors) {
        if !(self.loss_db >= 0.0) {
            errs.push(format!("{path}.loss_db"), "must be >= 0");
        }
        if !(self.background_rate_hz >= 0.0 && self.background_rate_hz.is_finite()) {
            errs.push(format!("{path}.background_rate_hz"), "must be finite and >= 0");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    pub split_z: f64,
    pub split_x: f64,
    pub det_efficiency: f64,
    pub dark_rate_hz: f64,
    pub receiver_loss_db: f64,
    pub misalign_z_rad: f64,
    pub misalign_x_rad: f64,
    /// Non-paralyzable dead time; only honoured by the Monte Carlo engine.
    pub dead_time_s: Option<f64>,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            split_z: 0.6,
            split_x: 0.4,
            det_efficiency: 0.68,
            dark_rate_hz: 1000.0,
            receiver_loss_db: DEFAULT_RECEIVER_LOSS_DB,
            misalign_z_rad: DEFAULT_MISALIGN_Z_RAD,
            misalign_x_rad: DEFAULT_MISALIGN_X_RAD,
            dead_time_s: None,
        }
    }
}

impl ReceiverConfig {
    pub(crate) fn validate(&self, path: &str, errs: &mut ConfigErrors) {
        for (name, p) in [
            ("split_z", self.split_z),
            ("split_x", self.split_x),
            ("det_efficiency", self.det_efficiency),
        ] {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("{path}.{name}"), "must be in [0, 1]");
            }
        }
        if (self.split_z + self.split_x - 1.0).abs() > 1e-9 {
            errs.push(format!("{path}.split_x"), "split_z + split_x must equal 1");
        }
        if !(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite()) {
            errs.push(format!("{path}.dark_rate_hz"), "must be finite and >= 0");
        }
        if !(self.receiver_loss_db >= 0.0) {
            errs.push(format!("{path}.receiver_loss_db"), "must be >= 0");
        }
        for (name, a) in [
            ("misalign_z_rad", self.misalign_z_rad),
            ("misalign_x_rad", self.misalign_x_rad),
        ] {
            if !a.is_finite() {
                errs.push(format!("{path}.{name}"), "must be finite");
            }
        }
        if let Some(t) = self.dead_time_s {
            if !(t >= 0.0 && t.is_finite()) {
                errs.push(format!("{path}.dead_time_s"), "must be finite and >= 0");
            }
        }
    }
}

/// End-to-end transmittance: channel, receiver optics and detector efficiency.
pub fn transmittance(channel: &ChannelConfig, receiver: &ReceiverConfig) -> f64 {
    10f64.powf(-(channel.loss_db + receiver.receiver_loss_db) / 10.0) * receiver.det_efficiency
}

/// Per-slot probability of a dark or background click on one detector.
pub fn dark_probability(channel: &ChannelConfig, receiver: &ReceiverConfig, rep_rate_hz: f64) -> f64 {
    (receiver.dark_rate_hz + channel.background_rate_hz) / rep_rate_hz
}

/// `w_d * q_d` per detector: arm split times projection probability after
/// the arm's misalignment.
pub fn arm_weights(sop: &JonesVector, receiver: &ReceiverConfig) -> [f64; 4] {
    let z_state = waveplate(2.0 * receiver.misalign_z_rad, 0.0).apply(sop);
    let x_state = rotator(receiver.misalign_x_rad).apply(sop);
    let mut w = [0.0; 4];
    for d in DetectorId::ALL {
        let (split, state) = match d.basis() {
            Basis::Z => (receiver.split_z, &z_state),
            Basis::X => (receiver.split_x, &x_state),
        };
        w[d.index()] = split * sop_vector(d.projection()).overlap(state);
    }
    w
}

/// Click probability per detector for one pulse, dark counts included.
pub fn click_probabilities(
    sop: &JonesVector,
    mean_photons: f64,
    channel: &ChannelConfig,
    receiver: &ReceiverConfig,
    rep_rate_hz: f64,
) -> [f64; 4] {
    let eta = transmittance(channel, receiver);
    let p_dark = dark_probability(channel, receiver, rep_rate_hz);
    arm_weights(sop, receiver).map(|w| {
        let x = mean_photons * eta * w;
        // 1 - (1 - p_sig)(1 - p_dark) with 1 - p_sig = exp(-x)
        1.0 - (-x).exp() * (1.0 - p_dark)
    })
}

/// Set of detectors that fired in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ClickSet(u8);

impl ClickSet {
    pub const EMPTY: ClickSet = ClickSet(0);

    pub fn from_detectors(ds: &[DetectorId]) -> ClickSet {
        let mut c = ClickSet::EMPTY;
        for &d in ds {
            c.insert(d);
        }
        c
    }

    #[inline]
    pub fn insert(&mut self, d: DetectorId) {
        self.0 |= 1 << d.index();
    }

    #[inline]
    pub fn remove(&mut self, d: DetectorId) {
        self.0 &= !(1 << d.index());
    }

    #[inline]
    pub fn contains(&self, d: DetectorId) -> bool {
        self.0 & (1 << d.index()) != 0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = DetectorId> + '_ {
        DetectorId::ALL.into_iter().filter(|d| self.contains(*d))
    }
}

/// Independent Bernoulli click per detector.
pub fn sample_clicks<R: Rng + ?Sized>(probabilities: &[f64; 4], rng: &mut R) -> ClickSet {
    let mut c = ClickSet::EMPTY;
    for d in DetectorId::ALL {
        if rng.random::<f64>() < probabilities[d.index()] {
            c.insert(d);
        }
    }
    c
}

/// Outcome of squashing one slot's clicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Squashed {
    pub outcome: Option<DetectorId>,
    /// More than one detector fired and a random one was kept.
    pub multi_click: bool,
}

/// Maps a click set to at most one detector, breaking ties uniformly.
#[inline]
pub fn squash_clicks<R: Rng + ?Sized>(clicks: ClickSet, rng: &mut R) -> Squashed {
    match clicks.len() {
        0 => Squashed {
            outcome: None,
            multi_click: false,
        },
        1 => Squashed {
            outcome: clicks.iter().next(),
            multi_click: false,
        },
        n => {
            let pick = rng.random_range(0..n);
            Squashed {
                outcome: clicks.iter().nth(pick),
                multi_click: true,
            }
        }
    }
}

/// Exact probability that squashing reports each detector, for independent
/// clicks with the given probabilities.
pub fn squashed_probabilities(p: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (d, slot) in out.iter_mut().enumerate() {
        let others: Vec<usize> = (0..4).filter(|&j| j != d).collect();
        let mut total = 0.0;
        for mask in 0u32..(1 << others.len()) {
            let mut pr = p[d];
            for (bit, &j) in others.iter().enumerate() {
                pr *= if mask & (1 << bit) != 0 { p[j] } else { 1.0 - p[j] };
            }
            total += pr / f64::from(1 + mask.count_ones());
        }
        *slot = total;
    }
    out
}
