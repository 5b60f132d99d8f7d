//! The data-producing experiments. Each is a pure function of its
//! parameters and the configuration, which is what makes reruns exact.

use std::f64::consts::PI;
use std::path::Path;

use pognac_core::analysis::{malus_sweep, PatterningAccumulator, SlotHistogramAccumulator};
use pognac_core::engine::{run_montecarlo_with, SymbolSource};
use pognac_core::optics::optical_response;
use pognac_core::security::optimize::{optimize_decoy, OptimizeGrid};
use pognac_core::session::run_session;
use pognac_core::ExperimentConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, Result};
use crate::output::{num, OutputDigest, OutputDir, Tsv};

/// Intensity ratio at which optimizer flatness is reported.
pub const REFERENCE_RATIO: f64 = 0.30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Response { thetas: Vec<f64>, points: usize },
    Malus { angles: Vec<f64>, pulses_per_angle: u64 },
    Patterning { pattern_len: usize, window: usize },
    Qkd,
    Optimize { losses_db: Vec<f64> },
}

pub fn default_response_thetas() -> Vec<f64> {
    vec![PI / 12.0, PI / 8.0, PI / 6.0, PI / 4.0]
}

/// Twelve angles evenly inside (0, pi/4), covering ratios from 0.79 to 0.004.
pub fn default_malus_angles() -> Vec<f64> {
    (1..=12).map(|i| f64::from(i) * PI / 52.0).collect()
}

pub fn default_losses_db() -> Vec<f64> {
    vec![30.0, 40.0, 50.0, 60.0]
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Response { .. } => "response",
            Experiment::Malus { .. } => "malus",
            Experiment::Patterning { .. } => "patterning",
            Experiment::Qkd => "qkd",
            Experiment::Optimize { .. } => "optimize",
        }
    }

    /// Runs the experiment and writes its data files under `out`.
    pub fn execute(&self, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<OutputDigest>> {
        cfg.validate()?;
        let mut dir = OutputDir::create(out)?;
        match self {
            Experiment::Response { thetas, points } => response(thetas, *points, &mut dir)?,
            Experiment::Malus {
                angles,
                pulses_per_angle,
            } => malus(cfg, angles, *pulses_per_angle, &mut dir)?,
            Experiment::Patterning { pattern_len, window } => patterning(cfg, *pattern_len, *window, &mut dir)?,
            Experiment::Qkd => qkd(cfg, &mut dir)?,
            Experiment::Optimize { losses_db } => optimize(cfg, losses_db, &mut dir)?,
        }
        Ok(dir.finish())
    }
}

/// Phase grid over [-2pi, 2pi] whose midpoint is exactly zero.
pub fn phase_grid(points: usize) -> Result<Vec<f64>> {
    if points < 3 || points.is_multiple_of(2) {
        return Err(CliError::Argument(format!(
            "phase grid needs an odd number of points >= 3, got {points}"
        )));
    }
    let half = (points / 2) as f64;
    Ok((0..points).map(|i| 2.0 * PI * ((i as f64 - half) / half)).collect())
}

fn response(thetas: &[f64], points: usize, dir: &mut OutputDir) -> Result<()> {
    if thetas.is_empty() || thetas.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Argument("need at least one finite polarizer angle".into()));
    }
    let grid = phase_grid(points)?;
    let mut cols = vec!["delta_phi_rad".to_string()];
    cols.extend(thetas.iter().map(|t| format!("theta={t}")));
    let mut t = Tsv::with_columns(
        "optical response of the intensity modulator versus phase difference",
        cols,
    );
    t.comment("one column per equivalent polarizer angle theta (rad)");
    for &phi in &grid {
        let mut row = vec![num(phi)];
        row.extend(thetas.iter().map(|&th| num(optical_response(phi, th))));
        t.row(row);
    }
    dir.write_tsv("response.tsv", &t)
}

fn malus(cfg: &ExperimentConfig, angles: &[f64], pulses: u64, dir: &mut OutputDir) -> Result<()> {
    let sweep = malus_sweep(angles, pulses, cfg, cfg.seed)?;
    let mut t = Tsv::new(
        "measured decoy/signal intensity ratio versus equivalent polarizer angle",
        &[
            "theta_rad",
            "predicted",
            "measured",
            "measured_err",
            "z_score",
            "lambda_mu",
            "lambda_nu",
            "signal_slots",
            "decoy_slots",
        ],
    );
    t.comment(format!("predicted = tan^2(theta - pi/4); {pulses} slots per angle"));
    for p in &sweep.points {
        t.row(vec![
            num(p.theta),
            num(p.predicted),
            num(p.ratio),
            num(p.ratio_err),
            num((p.ratio - p.predicted) / p.ratio_err),
            num(p.lambda_mu),
            num(p.lambda_nu),
            p.signal_slots.to_string(),
            p.decoy_slots.to_string(),
        ]);
    }
    dir.write_tsv("malus.tsv", &t)?;
    dir.write_json("malus.json", &sweep)
}

fn patterning(cfg: &ExperimentConfig, pattern_len: usize, window: usize, dir: &mut OutputDir) -> Result<()> {
    if pattern_len == 0 {
        return Err(CliError::Argument("pattern length must be positive".into()));
    }
    let source = SymbolSource::pseudorandom_pattern(pattern_len, cfg, cfg.seed);
    let mut stats = PatterningAccumulator::new(Some(pattern_len));
    let mut hist = SlotHistogramAccumulator::new(pattern_len, window.min(pattern_len))?;
    run_montecarlo_with(cfg, cfg.pulses, cfg.seed, &source, |r| {
        stats.push(r);
        hist.push(r);
    })?;
    let report = stats.finish()?;
    let histogram = hist.finish();

    let mut t = Tsv::new(
        "class-conditional detection ratio c and deviation d by preceding-pulse intensity",
        &[
            "transition",
            "c",
            "c_err",
            "c_se",
            "d",
            "d_err",
            "d_se",
            "d_percent",
            "slots",
            "positions",
        ],
    );
    t.comment(format!(
        "{} slots, {pattern_len}-symbol pattern, err is the spread over pattern positions, se the binomial standard error",
        cfg.pulses
    ));
    for e in &report.entries {
        t.row(vec![
            e.label(),
            num(e.c),
            num(e.c_err),
            num(e.c_se),
            num(e.d),
            num(e.d_err),
            num(e.d_se),
            num(100.0 * e.d),
            e.slots.to_string(),
            e.positions.to_string(),
        ]);
    }
    dir.write_tsv("patterning.tsv", &t)?;

    let mut h = Tsv::new(
        "mean detections per slot at each position of the repeated pattern",
        &["position", "class", "mean", "err"],
    );
    h.comment(format!(
        "class means mu={} nu={}, two-sigma bands mu={} nu={}",
        histogram.class_mean[0], histogram.class_mean[1], histogram.class_band[0], histogram.class_band[1]
    ));
    for b in &histogram.bins {
        h.row(vec![
            b.position.to_string(),
            b.class.map_or("-", |c| c.label()).to_string(),
            num(b.mean),
            num(b.err),
        ]);
    }
    dir.write_tsv("patterning_histogram.tsv", &h)?;
    dir.write_json("patterning.json", &json!({ "report": report, "histogram": histogram }))
}

fn qkd(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<()> {
    let session = run_session(cfg, cfg.seed)?;
    let mut w = Tsv::new(
        "QBER time series of the aggregate QKD session",
        &[
            "window",
            "start_s",
            "duration_s",
            "detection_rate_hz",
            "qber_z",
            "qber_z_err",
            "qber_x",
            "qber_x_err",
        ],
    );
    for s in &session.windows {
        w.row(vec![
            s.index.to_string(),
            num(s.start_s),
            num(s.duration_s),
            num(s.detection_rate),
            num(s.qber_z),
            num(s.qber_z_err),
            num(s.qber_x),
            num(s.qber_x_err),
        ]);
    }
    dir.write_tsv("qkd_windows.tsv", &w)?;

    let mut b = Tsv::new(
        "finite-key secret key rate per privacy-amplification block",
        &[
            "block",
            "start_s",
            "duration_s",
            "qber_z",
            "qber_x",
            "s1_z",
            "phi_z",
            "key_bits",
            "skr_bps",
            "skr_asymptotic_bps",
        ],
    );
    b.comment(format!("{} sifted key-basis bits per block", cfg.security.block_bits));
    for r in &session.blocks {
        let k = &r.report;
        b.row(vec![
            r.index.to_string(),
            num(r.start_s),
            num(r.duration_s),
            num(k.qber_z),
            num(k.qber_x),
            num(k.s1),
            num(k.phi_z),
            num(k.key_bits),
            num(k.skr),
            num(k.skr_asymptotic),
        ]);
    }
    dir.write_tsv("qkd_blocks.tsv", &b)?;
    dir.write_json(
        "qkd_report.json",
        &json!({ "summary": session.summary, "blocks": session.blocks, "total": session.total }),
    )
}

fn optimize(cfg: &ExperimentConfig, losses_db: &[f64], dir: &mut OutputDir) -> Result<()> {
    if losses_db.iter().any(|l| !l.is_finite()) {
        return Err(CliError::Argument("losses must be finite".into()));
    }
    let grid = OptimizeGrid::default();
    let res = optimize_decoy(cfg, losses_db, &grid)?;
    let mut t = Tsv::new(
        "grid-optimal source parameters versus total attenuation",
        &[
            "total_loss_db",
            "mu",
            "ratio",
            "p_mu",
            "p_z",
            "skr_bps",
            "skr_at_reference_ratio_bps",
            "reference_to_optimal",
        ],
    );
    t.comment(format!(
        "{} grid points per loss; reference ratio nu/mu = {REFERENCE_RATIO}",
        grid.len()
    ));
    for p in &res.optima {
        let at_ref = res
            .best_at_ratio(p.loss_db, REFERENCE_RATIO)
            .map_or(f64::NAN, |q| q.skr);
        let flat = if p.skr > 0.0 { at_ref / p.skr } else { f64::NAN };
        t.row(vec![
            num(p.loss_db),
            num(p.mu),
            num(p.ratio),
            num(p.p_mu),
            num(p.p_z),
            num(p.skr),
            num(at_ref),
            num(flat),
        ]);
    }
    dir.write_tsv("optimize.tsv", &t)?;
    let mut s = Tsv::new(
        "finite-key rate over the full source-parameter grid",
        &["total_loss_db", "mu", "ratio", "p_mu", "p_z", "skr_bps"],
    );
    for p in &res.surface {
        s.row(vec![
            num(p.loss_db),
            num(p.mu),
            num(p.ratio),
            num(p.p_mu),
            num(p.p_z),
            num(p.skr),
        ]);
    }
    dir.write_tsv("optimize_surface.tsv", &s)
}
