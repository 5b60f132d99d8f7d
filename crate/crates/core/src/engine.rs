//! End-to-end runs: per-pulse Monte Carlo and aggregate expected counts.
//!
//! The Monte Carlo engine follows every pulse: the driver sets the applied
//! phase, a Poisson photon number is drawn, each photon survives the link
//! with probability `eta` and lands on one detector, dark clicks are added
//! and the click set is squashed to one outcome. The aggregate engine skips
//! the sequence and draws each (class, state, detector) cell from a Poisson
//! distribution around its exact expectation.
//!
//! Random numbers come from ChaCha8 streams, one per segment of
//! [`SEGMENT_SLOTS`] slots, so the parallel and sequential paths consume
//! identical streams and produce identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::link::{
    arm_weights, click_probabilities, dark_probability, squash_clicks, squashed_probabilities, transmittance, Basis,
    ClickSet, DetectorId,
};
use crate::optics::sop_vector;
use crate::security::BasisCounts;
use crate::transmitter::{
    draw_symbol, encode_polarization, generate_sequence, Driver, IntensityClass, IntensityModulator, LogicalState,
    PulseSymbol,
};

/// Slots per independent random stream.
pub const SEGMENT_SLOTS: u64 = 1 << 16;

/// Detection counts indexed by (intensity class, sent state, detector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub counts: [[[f64; 4]; 3]; 2],
    pub sent: [[f64; 3]; 2],
    pub duration_s: f64,
    pub rep_rate_hz: f64,
}

/// Where each pulse ended up; the four parts sum to the pulse count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    pub sifted_z: f64,
    pub sifted_x: f64,
    pub cross_basis: f64,
    pub no_detection: f64,
}

impl CountTable {
    pub fn new(duration_s: f64, rep_rate_hz: f64) -> Self {
        Self {
            counts: [[[0.0; 4]; 3]; 2],
            sent: [[0.0; 3]; 2],
            duration_s,
            rep_rate_hz,
        }
    }

    pub fn count(&self, k: IntensityClass, a: LogicalState, d: DetectorId) -> f64 {
        self.counts[k.index()][a.index()][d.index()]
    }

    pub fn total_sent(&self) -> f64 {
        self.sent.iter().flatten().sum()
    }

    pub fn total_detections(&self) -> f64 {
        self.counts.iter().flatten().flatten().sum()
    }

    /// Sifted detections and errors in one basis, per intensity class.
    pub fn basis_counts(&self, basis: Basis) -> BasisCounts {
        let mut out = BasisCounts::default();
        for k in IntensityClass::ALL {
            let i = k.index();
            let c = &self.counts[i];
            match basis {
                Basis::Z => {
                    let (zero, one) = (LogicalState::Zero.index(), LogicalState::One.index());
                    out.n[i] = c[zero][0] + c[zero][1] + c[one][0] + c[one][1];
                    out.m[i] = c[zero][1] + c[one][0];
                    out.pulses += self.sent[i][zero] + self.sent[i][one];
                }
                Basis::X => {
                    let plus = LogicalState::Plus.index();
                    out.n[i] = c[plus][2] + c[plus][3];
                    out.m[i] = c[plus][3];
                    out.pulses += self.sent[i][plus];
                }
            }
        }
        out
    }

    pub fn partition(&self) -> Partition {
        let z = self.basis_counts(Basis::Z).detections();
        let x = self.basis_counts(Basis::X).detections();
        let all = self.total_detections();
        Partition {
            sifted_z: z,
            sifted_x: x,
            cross_basis: all - z - x,
            no_detection: self.total_sent() - all,
        }
    }

    /// Detections per second over the table's duration.
    pub fn detection_rate(&self) -> f64 {
        self.total_detections() / self.duration_s
    }

    pub fn merge(&mut self, other: &CountTable) {
        for (a, b) in self
            .counts
            .iter_mut()
            .flatten()
            .flatten()
            .zip(other.counts.iter().flatten().flatten())
        {
            *a += b;
        }
        for (a, b) in self.sent.iter_mut().flatten().zip(other.sent.iter().flatten()) {
            *a += b;
        }
        self.duration_s += other.duration_s;
    }

    /// Every count and the duration multiplied by `f`.
    pub fn scaled(&self, f: f64) -> CountTable {
        let mut out = self.clone();
        out.counts.iter_mut().flatten().flatten().for_each(|c| *c *= f);
        out.sent.iter_mut().flatten().for_each(|c| *c *= f);
        out.duration_s *= f;
        out
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        for k in IntensityClass::ALL {
            if self.sent[k.index()].iter().sum::<f64>() <= 0.0 {
                return Err(Error::InsufficientData(format!(
                    "no {} pulses were sent; decoy estimation needs both intensities",
                    k.label()
                )));
            }
        }
        Ok(())
    }
}

/// Per-basis QBER with binomial standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Qber {
    pub z: f64,
    pub z_err: f64,
    pub x: f64,
    pub x_err: f64,
}

pub fn qber_from_table(table: &CountTable) -> Result<Qber> {
    let one = |basis: Basis| -> Result<(f64, f64)> {
        let c = table.basis_counts(basis);
        let n = c.detections();
        if n <= 0.0 {
            return Err(Error::EmptyBasis(basis));
        }
        let q = c.errors() / n;
        Ok((q, (q * (1.0 - q) / n).sqrt()))
    };
    let (z, z_err) = one(Basis::Z)?;
    let (x, x_err) = one(Basis::X)?;
    Ok(Qber { z, z_err, x, x_err })
}

/// One slot of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub slot: u64,
    pub symbol: PulseSymbol,
    pub outcome: Option<DetectorId>,
    pub mean_photons: f64,
    /// Photons emitted in the slot (simulation ground truth).
    pub photons: u32,
    pub multi_click: bool,
}

/// Symbol stream feeding a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolSource {
    /// Independent draws from the transmitter probabilities.
    Random,
    /// A fixed pattern repeated cyclically.
    Pattern(Vec<PulseSymbol>),
}

impl SymbolSource {
    /// A pseudorandom pattern of `len` symbols drawn from the transmitter
    /// probabilities with its own stream of `seed`.
    pub fn pseudorandom_pattern(len: usize, config: &ExperimentConfig, seed: u64) -> SymbolSource {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        SymbolSource::Pattern(generate_sequence(len, &config.transmitter, &mut rng))
    }

    pub fn period(&self) -> Option<usize> {
        match self {
            SymbolSource::Random => None,
            SymbolSource::Pattern(p) => Some(p.len()),
        }
    }
}

/// Sifted detections split by emitted photon number (0, 1, 2+).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhotonTally {
    pub z: [f64; 3],
    pub z_errors: [f64; 3],
    pub x: [f64; 3],
    pub x_errors: [f64; 3],
}

impl PhotonTally {
    fn merge(&mut self, o: &PhotonTally) {
        for (a, b) in [
            (&mut self.z, &o.z),
            (&mut self.z_errors, &o.z_errors),
            (&mut self.x, &o.x),
            (&mut self.x_errors, &o.x_errors),
        ] {
            for i in 0..3 {
                a[i] += b[i];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub table: CountTable,
    pub tally: PhotonTally,
    pub multi_clicks: u64,
}

impl MonteCarloSummary {
    fn empty(rep_rate: f64) -> Self {
        Self {
            table: CountTable::new(0.0, rep_rate),
            tally: PhotonTally::default(),
            multi_clicks: 0,
        }
    }

    fn merge(&mut self, o: &MonteCarloSummary) {
        self.table.merge(&o.table);
        self.tally.merge(&o.tally);
        self.multi_clicks += o.multi_clicks;
    }

    fn add(&mut self, r: &DetectionRecord) {
        let (k, a) = (r.symbol.intensity.index(), r.symbol.state.index());
        self.table.sent[k][a] += 1.0;
        if r.multi_click {
            self.multi_clicks += 1;
        }
        let Some(d) = r.outcome else { return };
        self.table.counts[k][a][d.index()] += 1.0;
        let bucket = r.photons.min(2) as usize;
        match (r.symbol.state, d) {
            (LogicalState::Zero | LogicalState::One, DetectorId::Z0 | DetectorId::Z1) => {
                self.tally.z[bucket] += 1.0;
                let wrong = (r.symbol.state == LogicalState::Zero) != (d == DetectorId::Z0);
                if wrong {
                    self.tally.z_errors[bucket] += 1.0;
                }
            }
            (LogicalState::Plus, DetectorId::XPlus | DetectorId::XMinus) => {
                self.tally.x[bucket] += 1.0;
                if d == DetectorId::XMinus {
                    self.tally.x_errors[bucket] += 1.0;
                }
            }
            _ => {}
        }
    }
}

/// Precomputed per-slot physics shared by all segments.
struct SlotModel {
    eta: f64,
    p_dark: f64,
    p_any_dark: f64,
    /// Cumulative landing distribution per sent state.
    route: [[f64; 4]; 3],
    modulator: IntensityModulator,
    /// Blind slots after a click, plus one.
    dead_slots: u64,
    p_mu: f64,
    p_z: f64,
}

impl SlotModel {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let tx = &config.transmitter;
        let rx = &config.receiver;
        let p_dark = dark_probability(&config.channel, rx, tx.rep_rate_hz);
        let route = LogicalState::ALL.map(|a| {
            let sop = sop_vector(encode_polarization(PulseSymbol::new(IntensityClass::Signal, a)));
            let w = arm_weights(&sop, rx);
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            w.map(|x| {
                acc += x / total;
                acc
            })
        });
        let dead_slots = match rx.dead_time_s {
            Some(t) if t > 0.0 => (t * tx.rep_rate_hz).ceil() as u64,
            _ => 0,
        };
        Ok(Self {
            eta: transmittance(&config.channel, rx),
            p_dark,
            p_any_dark: 1.0 - (1.0 - p_dark).powi(4),
            route,
            modulator: IntensityModulator::new(tx)?,
            dead_slots,
            p_mu: tx.p_mu,
            p_z: tx.p_z,
        })
    }

    fn parallel_safe(&self, config: &ExperimentConfig) -> bool {
        config.transmitter.driver.settle_fraction == 0.0 && self.dead_slots == 0
    }
}

/// Mutable state carried from slot to slot.
struct RunState {
    driver: Driver,
    poisson: Option<(f64, Poisson<f64>)>,
    ready_at: [u64; 4],
}

impl RunState {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            driver: Driver::new(&config.transmitter.driver, config.transmitter.modulator_mode),
            poisson: None,
            ready_at: [0; 4],
        }
    }

    fn photons<R: Rng>(&mut self, mean: f64, rng: &mut R) -> u32 {
        if mean <= 0.0 {
            return 0;
        }
        let dist = match self.poisson {
            Some((m, d)) if m == mean => d,
            _ => {
                let d = Poisson::new(mean).expect("finite positive mean");
                self.poisson = Some((mean, d));
                d
            }
        };
        dist.sample(rng) as u32
    }
}

fn simulate_slot<R: Rng>(
    model: &SlotModel,
    state: &mut RunState,
    slot: u64,
    symbol: PulseSymbol,
    rng: &mut R,
) -> DetectionRecord {
    let phase = state.driver.step(symbol.intensity);
    let mean = model.modulator.mean_photons(phase);
    let photons = state.photons(mean, rng);
    let route = &model.route[symbol.state.index()];
    let mut clicks = ClickSet::EMPTY;
    for _ in 0..photons {
        if rng.random::<f64>() < model.eta {
            let u = rng.random::<f64>();
            let d = route.iter().position(|&c| u < c).unwrap_or(3);
            clicks.insert(DetectorId::from_index(d));
        }
    }
    if rng.random::<f64>() < model.p_any_dark {
        // conditional on at least one dark click
        loop {
            let mut dark = ClickSet::EMPTY;
            for d in DetectorId::ALL {
                if rng.random::<f64>() < model.p_dark {
                    dark.insert(d);
                }
            }
            if !dark.is_empty() {
                for d in dark.iter() {
                    clicks.insert(d);
                }
                break;
            }
        }
    }
    if model.dead_slots > 0 {
        for d in DetectorId::ALL {
            if slot < state.ready_at[d.index()] {
                clicks.remove(d);
            }
        }
        for d in clicks.iter() {
            state.ready_at[d.index()] = slot + model.dead_slots;
        }
    }
    let squashed = squash_clicks(clicks, rng);
    DetectionRecord {
        slot,
        symbol,
        outcome: squashed.outcome,
        mean_photons: mean,
        photons,
        multi_click: squashed.multi_click,
    }
}

fn segment_rng(seed: u64, segment: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(segment);
    rng
}

#[inline]
fn symbol_at<R: Rng>(source: &SymbolSource, slot: u64, model: &SlotModel, rng: &mut R) -> PulseSymbol {
    match source {
        SymbolSource::Random => draw_symbol(model.p_mu, model.p_z, rng),
        SymbolSource::Pattern(p) => p[(slot % p.len() as u64) as usize],
    }
}

fn check_run(config: &ExperimentConfig, n_pulses: u64, source: &SymbolSource) -> Result<()> {
    config.validate()?;
    if n_pulses == 0 {
        return Err(Error::InvalidArgument("n_pulses must be at least 1".into()));
    }
    if let SymbolSource::Pattern(p) = source {
        if p.is_empty() {
            return Err(Error::InvalidArgument("symbol pattern is empty".into()));
        }
    }
    Ok(())
}

/// Sequential Monte Carlo run, calling `sink` for every slot in order.
pub fn run_montecarlo_with<F: FnMut(&DetectionRecord)>(
    config: &ExperimentConfig,
    n_pulses: u64,
    seed: u64,
    source: &SymbolSource,
    sink: F,
) -> Result<MonteCarloSummary> {
    check_run(config, n_pulses, source)?;
    montecarlo_unchecked(config, n_pulses, seed, source, sink)
}

pub(crate) fn montecarlo_unchecked<F: FnMut(&DetectionRecord)>(
    config: &ExperimentConfig,
    n_pulses: u64,
    seed: u64,
    source: &SymbolSource,
    mut sink: F,
) -> Result<MonteCarloSummary> {
    let model = SlotModel::new(config)?;
    let mut state = RunState::new(config);
    let mut summary = MonteCarloSummary::empty(config.transmitter.rep_rate_hz);
    let mut segment = 0;
    while segment * SEGMENT_SLOTS < n_pulses {
        let mut rng = segment_rng(seed, segment);
        let start = segment * SEGMENT_SLOTS;
        for slot in start..(start + SEGMENT_SLOTS).min(n_pulses) {
            let symbol = symbol_at(source, slot, &model, &mut rng);
            let rec = simulate_slot(&model, &mut state, slot, symbol, &mut rng);
            summary.add(&rec);
            sink(&rec);
        }
        segment += 1;
    }
    summary.table.duration_s = n_pulses as f64 / config.transmitter.rep_rate_hz;
    Ok(summary)
}

/// Monte Carlo run returning only aggregates. Segments run in parallel when
/// the driver has no memory and detectors have no dead time; the result is
/// identical either way.
pub fn run_montecarlo_summary(
    config: &ExperimentConfig,
    n_pulses: u64,
    seed: u64,
    source: &SymbolSource,
) -> Result<MonteCarloSummary> {
    check_run(config, n_pulses, source)?;
    let model = SlotModel::new(config)?;
    if !model.parallel_safe(config) {
        return montecarlo_unchecked(config, n_pulses, seed, source, |_| {});
    }
    let segments = n_pulses.div_ceil(SEGMENT_SLOTS);
    let rep_rate = config.transmitter.rep_rate_hz;
    let parts: Vec<MonteCarloSummary> = (0..segments)
        .into_par_iter()
        .map(|segment| {
            let mut rng = segment_rng(seed, segment);
            let mut state = RunState::new(config);
            let mut part = MonteCarloSummary::empty(rep_rate);
            let start = segment * SEGMENT_SLOTS;
            for slot in start..(start + SEGMENT_SLOTS).min(n_pulses) {
                let symbol = symbol_at(source, slot, &model, &mut rng);
                part.add(&simulate_slot(&model, &mut state, slot, symbol, &mut rng));
            }
            part
        })
        .collect();
    let mut summary = MonteCarloSummary::empty(rep_rate);
    for p in &parts {
        summary.merge(p);
    }
    summary.table.duration_s = n_pulses as f64 / rep_rate;
    Ok(summary)
}

/// Monte Carlo run keeping every record. Memory grows with `n_pulses`.
pub fn run_montecarlo(
    config: &ExperimentConfig,
    n_pulses: u64,
    seed: u64,
) -> Result<(Vec<DetectionRecord>, CountTable)> {
    let mut records = Vec::new();
    let summary = run_montecarlo_with(config, n_pulses, seed, &SymbolSource::Random, |r| records.push(*r))?;
    Ok((records, summary.table))
}

/// Squashed outcome probabilities per (class, state, detector) with an
/// ideal driver.
pub fn cell_probabilities(config: &ExperimentConfig) -> Result<[[[f64; 4]; 3]; 2]> {
    let modulator = IntensityModulator::new(&config.transmitter)?;
    let mut out = [[[0.0; 4]; 3]; 2];
    for k in IntensityClass::ALL {
        for a in LogicalState::ALL {
            let sop = sop_vector(encode_polarization(PulseSymbol::new(k, a)));
            let p = click_probabilities(
                &sop,
                modulator.ideal_mean(k),
                &config.channel,
                &config.receiver,
                config.transmitter.rep_rate_hz,
            );
            out[k.index()][a.index()] = squashed_probabilities(&p);
        }
    }
    Ok(out)
}

/// Expected counts for `n_pulses` slots with an ideal driver.
pub fn expected_table(config: &ExperimentConfig, n_pulses: f64) -> Result<CountTable> {
    let probs = cell_probabilities(config)?;
    let tx = &config.transmitter;
    let mut table = CountTable::new(n_pulses / tx.rep_rate_hz, tx.rep_rate_hz);
    for k in IntensityClass::ALL {
        for a in LogicalState::ALL {
            let sent = n_pulses * tx.symbol_probability(PulseSymbol::new(k, a));
            table.sent[k.index()][a.index()] = sent;
            let cells = &mut table.counts[k.index()][a.index()];
            for (c, p) in cells.iter_mut().zip(&probs[k.index()][a.index()]) {
                *c = sent * p;
            }
        }
    }
    Ok(table)
}

/// Draws one aggregate table: multinomial symbol counts, Poisson cells.
pub(crate) fn sample_table<R: Rng>(
    probs: &[[[f64; 4]; 3]; 2],
    config: &ExperimentConfig,
    n_pulses: u64,
    rng: &mut R,
) -> CountTable {
    let tx = &config.transmitter;
    let mut table = CountTable::new(n_pulses as f64 / tx.rep_rate_hz, tx.rep_rate_hz);
    let mut remaining = n_pulses;
    let mut mass = 1.0;
    let cells: Vec<PulseSymbol> = IntensityClass::ALL
        .into_iter()
        .flat_map(|k| LogicalState::ALL.map(|a| PulseSymbol::new(k, a)))
        .collect();
    for (i, &s) in cells.iter().enumerate() {
        let p = tx.symbol_probability(s);
        let sent = if i + 1 == cells.len() {
            remaining
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q).expect("probability in [0, 1]").sample(rng)
        };
        remaining -= sent;
        mass -= p;
        let (k, a) = (s.intensity.index(), s.state.index());
        table.sent[k][a] = sent as f64;
        for (c, p) in table.counts[k][a].iter_mut().zip(&probs[k][a]) {
            let mean = sent as f64 * p;
            *c = if mean > 0.0 {
                Poisson::new(mean).expect("finite positive mean").sample(rng)
            } else {
                0.0
            };
        }
    }
    table
}

/// Aggregate run over `duration_s` seconds.
pub fn run_aggregate(config: &ExperimentConfig, duration_s: f64, seed: u64) -> Result<CountTable> {
    config.validate()?;
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let probs = cell_probabilities(config)?;
    let n = (duration_s * config.transmitter.rep_rate_hz).round() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = sample_table(&probs, config, n, &mut rng);
    table.duration_s = duration_s;
    Ok(table)
}
