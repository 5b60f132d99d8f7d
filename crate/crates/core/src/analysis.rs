//! Statistical reductions of Monte Carlo output: intensity-ratio sweeps,
//! patterning statistics and per-slot histograms.
//!
//! The detection count of a slot (0 or 1 after squashing) is the proxy for
//! its optical intensity throughout.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::engine::{montecarlo_unchecked, DetectionRecord, SymbolSource};
use crate::error::{Error, Result};
use crate::link::dark_probability;
use crate::optics::intensity_ratio;
use crate::transmitter::IntensityClass;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Sample variance.
    fn var(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }
}

/// Per-position statistics of a stream folded modulo a pattern period.
#[derive(Debug, Clone)]
struct Fold {
    period: usize,
    /// Detections per position, over slots that have a predecessor.
    positions: Vec<Moments>,
    class: Vec<Option<IntensityClass>>,
    prev_class: Vec<Option<IntensityClass>>,
}

impl Fold {
    fn new(period: usize) -> Self {
        Self {
            period,
            positions: vec![Moments::default(); period],
            class: vec![None; period],
            prev_class: vec![None; period],
        }
    }

    fn push(&mut self, slot: u64, class: IntensityClass, prev: Option<IntensityClass>, s: f64) -> Result<()> {
        let p = (slot % self.period as u64) as usize;
        match self.class[p] {
            None => self.class[p] = Some(class),
            Some(c) if c != class => {
                return Err(Error::InvalidArgument(format!(
                    "stream is not periodic with period {}: position {p} changes class",
                    self.period
                )))
            }
            _ => {}
        }
        if let Some(prev) = prev {
            self.prev_class[p] = Some(prev);
            self.positions[p].push(s);
        }
        Ok(())
    }
}

/// One ordered pair of consecutive intensity classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatterningEntry {
    pub from: IntensityClass,
    pub to: IntensityClass,
    /// Group mean normalized to the mean of all signal slots.
    pub c: f64,
    /// Relative deviation of the group mean from the mean of its class.
    pub d: f64,
    /// Uncertainty of `c`: spread over pattern positions when folded,
    /// standard error otherwise.
    pub c_err: f64,
    pub d_err: f64,
    /// Standard error of the group mean, normalized like `c` and `d`.
    pub c_se: f64,
    pub d_se: f64,
    pub slots: u64,
    /// Distinct pattern positions in the group (0 when not folded).
    pub positions: usize,
}

impl PatterningEntry {
    pub fn label(&self) -> String {
        format!("{}->{}", self.from.label(), self.to.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatterningReport {
    /// Ordered mu->mu, nu->mu, nu->nu, mu->nu.
    pub entries: [PatterningEntry; 4],
    /// Mean detections per slot of each class.
    pub class_means: [f64; 2],
    pub period: Option<usize>,
    pub slots: u64,
}

impl PatterningReport {
    pub fn entry(&self, from: IntensityClass, to: IntensityClass) -> &PatterningEntry {
        self.entries
            .iter()
            .find(|e| e.from == from && e.to == to)
            .expect("all four transitions are present")
    }

    pub fn max_abs_d(&self) -> f64 {
        self.entries.iter().map(|e| e.d.abs()).fold(0.0, f64::max)
    }
}

pub const TRANSITIONS: [(IntensityClass, IntensityClass); 4] = [
    (IntensityClass::Signal, IntensityClass::Signal),
    (IntensityClass::Decoy, IntensityClass::Signal),
    (IntensityClass::Decoy, IntensityClass::Decoy),
    (IntensityClass::Signal, IntensityClass::Decoy),
];

/// Streaming accumulator for [`patterning_stats`].
#[derive(Debug, Clone)]
pub struct PatterningAccumulator {
    prev: Option<IntensityClass>,
    groups: [[Moments; 2]; 2],
    classes: [Moments; 2],
    fold: Option<Fold>,
    slots: u64,
    error: Option<String>,
}

impl PatterningAccumulator {
    /// `period` folds the stream by pattern position for spread estimates.
    pub fn new(period: Option<usize>) -> Self {
        Self {
            prev: None,
            groups: [[Moments::default(); 2]; 2],
            classes: [Moments::default(); 2],
            fold: period.filter(|&p| p > 0).map(Fold::new),
            slots: 0,
            error: None,
        }
    }

    pub fn push(&mut self, r: &DetectionRecord) {
        let class = r.symbol.intensity;
        let s = if r.outcome.is_some() { 1.0 } else { 0.0 };
        self.classes[class.index()].push(s);
        if let Some(prev) = self.prev {
            self.groups[prev.index()][class.index()].push(s);
        }
        if let Some(fold) = &mut self.fold {
            if let Err(e) = fold.push(r.slot, class, self.prev, s) {
                self.error.get_or_insert(e.to_string());
            }
        }
        self.prev = Some(class);
        self.slots += 1;
    }

    pub fn finish(&self) -> Result<PatterningReport> {
        if let Some(e) = &self.error {
            return Err(Error::InvalidArgument(e.clone()));
        }
        if self.slots < 2 {
            return Err(Error::InsufficientData("patterning needs at least two slots".into()));
        }
        let class_means = [self.classes[0].mean(), self.classes[1].mean()];
        let mut entries = Vec::with_capacity(4);
        for (from, to) in TRANSITIONS {
            let g = &self.groups[from.index()][to.index()];
            if g.n == 0 {
                return Err(Error::MissingTransition(format!("{}->{}", from.label(), to.label())));
            }
            let norm_c = class_means[0];
            let norm_d = class_means[to.index()];
            let mean = g.mean();
            let se = (g.var() / g.n as f64).sqrt();
            let (c_se, d_se) = (se / norm_c, se / norm_d);
            let (c_err, d_err, positions) = match &self.fold {
                None => (c_se, d_se, 0),
                Some(fold) => {
                    let means: Vec<f64> = (0..fold.period)
                        .filter(|&p| {
                            fold.class[p] == Some(to) && fold.prev_class[p] == Some(from) && fold.positions[p].n > 0
                        })
                        .map(|p| fold.positions[p].mean())
                        .collect();
                    let mut m = Moments::default();
                    means.iter().for_each(|&x| m.push(x));
                    if means.len() < 2 {
                        (c_se, d_se, means.len())
                    } else {
                        let sd = m.var().sqrt();
                        (sd / norm_c, sd / norm_d, means.len())
                    }
                }
            };
            entries.push(PatterningEntry {
                from,
                to,
                c: mean / norm_c,
                d: (mean - norm_d) / norm_d,
                c_err,
                d_err,
                c_se: if positions > 1 {
                    c_err / (positions as f64).sqrt()
                } else {
                    c_se
                },
                d_se: if positions > 1 {
                    d_err / (positions as f64).sqrt()
                } else {
                    d_se
                },
                slots: g.n,
                positions,
            });
        }
        Ok(PatterningReport {
            entries: entries.try_into().expect("four transitions"),
            class_means,
            period: self.fold.as_ref().map(|f| f.period),
            slots: self.slots,
        })
    }
}

/// Normalized group intensities and deviations for the four transitions.
pub fn patterning_stats<'a>(
    records: impl IntoIterator<Item = &'a DetectionRecord>,
    period: Option<usize>,
) -> Result<PatterningReport> {
    let mut acc = PatterningAccumulator::new(period);
    records.into_iter().for_each(|r| acc.push(r));
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub ratio: f64,
    pub ratio_err: f64,
    pub predicted: f64,
    /// Estimated detected mean photon number per class.
    pub lambda_mu: f64,
    pub lambda_nu: f64,
    pub signal_slots: u64,
    pub decoy_slots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

/// Detected mean photon number from the no-click fraction, dark corrected,
/// and its delta-method variance.
fn lambda_hat(no_click: u64, slots: u64, p_none_dark: f64) -> Result<(f64, f64)> {
    if no_click == 0 || slots == 0 {
        return Err(Error::InsufficientData("every slot of a class clicked".into()));
    }
    let f0 = no_click as f64 / slots as f64;
    let lambda = -(f0 / p_none_dark).ln();
    Ok((lambda, (1.0 - f0) / (f0 * slots as f64)))
}

/// Measured decoy/signal ratio at each polarizer angle.
///
/// Each angle runs a Monte Carlo with a random signal/decoy stream. The
/// ratio is estimated from no-click fractions, which invert the Poisson
/// click law exactly and remove dark counts.
pub fn malus_sweep(angles: &[f64], pulses_per_angle: u64, config: &ExperimentConfig, seed: u64) -> Result<SweepResult> {
    config.validate()?;
    if angles.is_empty() || pulses_per_angle == 0 {
        return Err(Error::InvalidArgument("need at least one angle and one pulse".into()));
    }
    if !angles.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("angles must be strictly increasing".into()));
    }
    let predicted: Vec<f64> = angles.iter().map(|&t| intensity_ratio(t)).collect::<Result<_>>()?;
    let p_dark = dark_probability(&config.channel, &config.receiver, config.transmitter.rep_rate_hz);
    let p_none_dark = (1.0 - p_dark).powi(4);
    let mut points = Vec::with_capacity(angles.len());
    for (i, (&theta, &pred)) in angles.iter().zip(&predicted).enumerate() {
        let mut cfg = config.clone();
        cfg.transmitter.theta_rad = Some(theta);
        cfg.transmitter.nu = None;
        let mut slots = [0u64; 2];
        let mut none = [0u64; 2];
        montecarlo_unchecked(
            &cfg,
            pulses_per_angle,
            seed.wrapping_add(i as u64),
            &SymbolSource::Random,
            |r| {
                let k = r.symbol.intensity.index();
                slots[k] += 1;
                if r.outcome.is_none() {
                    none[k] += 1;
                }
            },
        )?;
        let (lm, vm) = lambda_hat(none[0], slots[0], p_none_dark)?;
        let (ln, vn) = lambda_hat(none[1], slots[1], p_none_dark)?;
        if !(lm > 0.0) {
            return Err(Error::InsufficientData(format!(
                "no signal detections at theta = {theta}"
            )));
        }
        let ratio = ln / lm;
        let ratio_err = (vn / (lm * lm) + ln * ln * vm / lm.powi(4)).sqrt();
        points.push(SweepPoint {
            theta,
            ratio,
            ratio_err,
            predicted: pred,
            lambda_mu: lm,
            lambda_nu: ln,
            signal_slots: slots[0],
            decoy_slots: slots[1],
        });
    }
    Ok(SweepResult { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotBin {
    pub position: usize,
    pub class: Option<IntensityClass>,
    /// Mean detections per slot at this position.
    pub mean: f64,
    /// Standard error of `mean`.
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotHistogram {
    pub bins: Vec<SlotBin>,
    /// Mean over positions of each class; NaN when the class is absent.
    pub class_mean: [f64; 2],
    /// Two standard deviations of the per-position means of each class.
    pub class_band: [f64; 2],
}

/// Streaming form of [`slot_histogram`].
#[derive(Debug, Clone)]
pub struct SlotHistogramAccumulator {
    pos: Vec<Moments>,
    class: Vec<Option<IntensityClass>>,
    window: usize,
}

impl SlotHistogramAccumulator {
    pub fn new(period: usize, window: usize) -> Result<Self> {
        if period == 0 || window > period {
            return Err(Error::InvalidArgument(format!(
                "window {window} must not exceed the fold period {period}"
            )));
        }
        Ok(Self {
            pos: vec![Moments::default(); period],
            class: vec![None; period],
            window,
        })
    }

    pub fn push(&mut self, r: &DetectionRecord) {
        let p = (r.slot % self.pos.len() as u64) as usize;
        self.pos[p].push(if r.outcome.is_some() { 1.0 } else { 0.0 });
        self.class[p] = Some(r.symbol.intensity);
    }

    pub fn finish(&self) -> SlotHistogram {
        let (pos, class) = (&self.pos, &self.class);
        let mut class_mean = [f64::NAN; 2];
        let mut class_band = [f64::NAN; 2];
        for k in IntensityClass::ALL {
            let mut m = Moments::default();
            for p in 0..pos.len() {
                if class[p] == Some(k) && pos[p].n > 0 {
                    m.push(pos[p].mean());
                }
            }
            if m.n > 0 {
                class_mean[k.index()] = m.mean();
                class_band[k.index()] = 2.0 * m.var().sqrt();
            }
        }
        let bins = (0..self.window)
            .map(|p| SlotBin {
                position: p,
                class: class[p],
                mean: if pos[p].n > 0 { pos[p].mean() } else { 0.0 },
                err: if pos[p].n > 0 {
                    (pos[p].var() / pos[p].n as f64).sqrt()
                } else {
                    0.0
                },
            })
            .collect();
        SlotHistogram {
            bins,
            class_mean,
            class_band,
        }
    }
}

/// Per-position detection statistics of a stream folded modulo `period`,
/// reported for the first `window` positions.
pub fn slot_histogram<'a>(
    records: impl IntoIterator<Item = &'a DetectionRecord>,
    period: usize,
    window: usize,
) -> Result<SlotHistogram> {
    let mut acc = SlotHistogramAccumulator::new(period, window)?;
    records.into_iter().for_each(|r| acc.push(r));
    Ok(acc.finish())
}
