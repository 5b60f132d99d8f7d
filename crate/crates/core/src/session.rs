//! Block-segmented QKD sessions and receiver calibration.
//!
//! A session draws one aggregate count table per time window. Windows are
//! concatenated into privacy-amplification blocks of exactly `block_bits`
//! sifted key-basis detections; the window that completes a block is split
//! proportionally between it and the next one. The trailing partial block
//! is discarded.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::engine::{cell_probabilities, expected_table, qber_from_table, sample_table, CountTable};
use crate::error::{Error, Result};
use crate::link::Basis;
use crate::security::key::{evaluate_block, FiniteKeyReport};

/// Key rate of one block built from exact expected counts, or `None` when
/// the link delivers no key-basis detections.
pub fn expected_block_report(config: &ExperimentConfig) -> Result<Option<FiniteKeyReport>> {
    let per_pulse = expected_table(config, 1.0)?;
    let z = per_pulse.basis_counts(Basis::Z).detections();
    if !(z > 0.0) {
        return Ok(None);
    }
    let pulses = config.security.block_bits / z;
    let table = expected_table(config, pulses)?;
    let report = evaluate_block(
        &table.basis_counts(Basis::Z),
        &table.basis_counts(Basis::X),
        table.duration_s,
        &config.security,
        &config.source_params()?,
    )?;
    Ok(Some(report))
}

/// Expected time to accumulate one block.
pub fn expected_block_duration(config: &ExperimentConfig) -> Result<f64> {
    let rate = expected_table(config, config.transmitter.rep_rate_hz)?
        .basis_counts(Basis::Z)
        .detections();
    if !(rate > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(config.security.block_bits / rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub index: usize,
    pub start_s: f64,
    pub duration_s: f64,
    pub detection_rate: f64,
    /// NaN when the basis has no sifted detections in the window.
    pub qber_z: f64,
    pub qber_z_err: f64,
    pub qber_x: f64,
    pub qber_x_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub index: usize,
    pub start_s: f64,
    pub duration_s: f64,
    pub report: FiniteKeyReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation; NaN for an empty input.
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub duration_s: f64,
    pub blocks: usize,
    pub detection_rate: f64,
    pub emitted_photon_rate: f64,
    pub qber_z: f64,
    pub qber_z_err: f64,
    pub qber_x: f64,
    pub qber_x_err: f64,
    pub skr: MeanStd,
    pub skr_asymptotic: MeanStd,
    /// Mean finite rate over mean asymptotic rate.
    pub finite_to_asymptotic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub windows: Vec<WindowStats>,
    pub blocks: Vec<BlockResult>,
    pub total: CountTable,
    pub summary: SessionSummary,
}

fn window_stats(index: usize, start_s: f64, table: &CountTable) -> WindowStats {
    let q = qber_from_table(table);
    let (qz, qze, qx, qxe) = match q {
        Ok(q) => (q.z, q.z_err, q.x, q.x_err),
        Err(_) => {
            let one = |b| {
                let c = table.basis_counts(b);
                c.qber()
                    .map_or((f64::NAN, f64::NAN), |q| (q, (q * (1.0 - q) / c.detections()).sqrt()))
            };
            let (z, ze) = one(Basis::Z);
            let (x, xe) = one(Basis::X);
            (z, ze, x, xe)
        }
    };
    WindowStats {
        index,
        start_s,
        duration_s: table.duration_s,
        detection_rate: table.detection_rate(),
        qber_z: qz,
        qber_z_err: qze,
        qber_x: qx,
        qber_x_err: qxe,
    }
}

/// Aggregate QKD session over `config.duration_s`.
pub fn run_session(config: &ExperimentConfig, seed: u64) -> Result<SessionResult> {
    config.validate()?;
    let probs = cell_probabilities(config)?;
    let source = config.source_params()?;
    let rate = config.transmitter.rep_rate_hz;
    let block_bits = config.security.block_bits;
    let n_windows = (config.duration_s / config.window_s).ceil() as usize;

    let mut windows = Vec::with_capacity(n_windows);
    let mut blocks = Vec::new();
    let mut total = CountTable::new(0.0, rate);
    let mut current = CountTable::new(0.0, rate);
    let mut block_start = 0.0;
    let mut elapsed = 0.0;
    let base = ChaCha8Rng::seed_from_u64(seed);
    for w in 0..n_windows {
        let start = w as f64 * config.window_s;
        let dur = config.window_s.min(config.duration_s - start);
        let mut rng = base.clone();
        rng.set_stream(w as u64);
        let mut table = sample_table(&probs, config, (dur * rate).round() as u64, &mut rng);
        table.duration_s = dur;
        windows.push(window_stats(w, start, &table));
        total.merge(&table);

        let mut rest = table;
        loop {
            let need = block_bits - current.basis_counts(Basis::Z).detections();
            let have = rest.basis_counts(Basis::Z).detections();
            if have < need || have <= 0.0 {
                current.merge(&rest);
                break;
            }
            let f = need / have;
            current.merge(&rest.scaled(f));
            rest = rest.scaled(1.0 - f);
            let report = evaluate_block(
                &current.basis_counts(Basis::Z),
                &current.basis_counts(Basis::X),
                current.duration_s,
                &config.security,
                &source,
            )?;
            blocks.push(BlockResult {
                index: blocks.len(),
                start_s: block_start,
                duration_s: current.duration_s,
                report,
            });
            block_start = elapsed + (dur - rest.duration_s);
            current = CountTable::new(0.0, rate);
        }
        elapsed += dur;
    }
    total.duration_s = config.duration_s;

    let q = qber_from_table(&total).ok();
    let skr: Vec<f64> = blocks.iter().map(|b| b.report.skr).collect();
    let skr_asym: Vec<f64> = blocks.iter().map(|b| b.report.skr_asymptotic).collect();
    let skr = MeanStd::of(&skr);
    let skr_asymptotic = MeanStd::of(&skr_asym);
    let summary = SessionSummary {
        duration_s: config.duration_s,
        blocks: blocks.len(),
        detection_rate: total.detection_rate(),
        emitted_photon_rate: (source.mu * source.p_mu + source.nu * (1.0 - source.p_mu)) * rate,
        qber_z: q.map_or(f64::NAN, |q| q.z),
        qber_z_err: q.map_or(f64::NAN, |q| q.z_err),
        qber_x: q.map_or(f64::NAN, |q| q.x),
        qber_x_err: q.map_or(f64::NAN, |q| q.x_err),
        finite_to_asymptotic: if skr_asymptotic.mean > 0.0 {
            skr.mean / skr_asymptotic.mean
        } else {
            f64::NAN
        },
        skr,
        skr_asymptotic,
    };
    Ok(SessionResult {
        windows,
        blocks,
        total,
        summary,
    })
}

/// Expected (Q_Z, Q_X) for a configuration.
pub fn expected_qber(config: &ExperimentConfig) -> Result<(f64, f64)> {
    let t = expected_table(config, 1.0)?;
    let q = qber_from_table(&t)?;
    Ok((q.z, q.x))
}

/// Misalignment angles `(z, x)` giving the target expected QBERs.
///
/// Each basis error rate depends only on its own arm's angle and grows
/// monotonically on `[0, pi/4]`, so both are found by bisection.
pub fn tune_misalignment(config: &ExperimentConfig, target_qz: f64, target_qx: f64) -> Result<(f64, f64)> {
    let solve = |basis: Basis, target: f64| -> Result<f64> {
        let qber_at = |angle: f64| -> Result<f64> {
            let mut c = config.clone();
            match basis {
                Basis::Z => c.receiver.misalign_z_rad = angle,
                Basis::X => c.receiver.misalign_x_rad = angle,
            }
            let (qz, qx) = expected_qber(&c)?;
            Ok(if basis == Basis::Z { qz } else { qx })
        };
        let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_4);
        if qber_at(lo)? > target {
            return Err(Error::InvalidArgument(format!(
                "{basis} basis error rate without misalignment already exceeds {target}"
            )));
        }
        if qber_at(hi)? < target {
            return Err(Error::InvalidArgument(format!(
                "{basis} basis error rate cannot reach {target}"
            )));
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if qber_at(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    Ok((solve(Basis::Z, target_qz)?, solve(Basis::X, target_qx)?))
}
