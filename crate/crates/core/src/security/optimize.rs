//! Grid search over source parameters for the finite-key rate.
//!
//! Each grid point is scored by the key rate of one privacy-amplification
//! block built from exact expected counts, so the surface is free of
//! sampling noise and deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::session::expected_block_report;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeGrid {
    pub mu: Vec<f64>,
    /// Decoy-to-signal intensity ratios.
    pub ratio: Vec<f64>,
    pub p_mu: Vec<f64>,
    pub p_z: Vec<f64>,
}

fn steps(from: u32, to: u32, denom: f64) -> Vec<f64> {
    (from..=to).map(|i| f64::from(i) / denom).collect()
}

impl Default for OptimizeGrid {
    fn default() -> Self {
        Self {
            mu: steps(4, 20, 20.0),
            ratio: steps(1, 14, 20.0),
            p_mu: steps(10, 19, 20.0),
            p_z: vec![0.5, 0.7, 0.8, 0.9, 0.95],
        }
    }
}

impl OptimizeGrid {
    pub fn len(&self) -> usize {
        self.mu.len() * self.ratio.len() * self.p_mu.len() * self.p_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn points(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &mu in &self.mu {
            for &r in &self.ratio {
                for &p_mu in &self.p_mu {
                    for &p_z in &self.p_z {
                        out.push((mu, r, p_mu, p_z));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub loss_db: f64,
    pub mu: f64,
    pub ratio: f64,
    pub p_mu: f64,
    pub p_z: f64,
    pub skr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    /// Best point per loss, in the order of the requested losses.
    pub optima: Vec<GridPoint>,
    /// Every evaluated point, loss-major in grid order.
    pub surface: Vec<GridPoint>,
}

impl OptimizeResult {
    /// Best point at `loss_db` among those with the given intensity ratio.
    pub fn best_at_ratio(&self, loss_db: f64, ratio: f64) -> Option<GridPoint> {
        self.surface
            .iter()
            .filter(|p| p.loss_db == loss_db && (p.ratio - ratio).abs() < 1e-9)
            .copied()
            .reduce(|a, b| if b.skr > a.skr { b } else { a })
    }
}

/// Copy of `base` whose channel loss makes the end-to-end attenuation,
/// including receiver loss and detector efficiency, equal `total_db`.
pub fn config_at_total_loss(base: &ExperimentConfig, total_db: f64) -> Result<ExperimentConfig> {
    let rx = &base.receiver;
    let fixed = rx.receiver_loss_db - 10.0 * rx.det_efficiency.log10();
    let channel = total_db - fixed;
    if !(channel >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "total loss {total_db} dB is below the receiver's own {fixed:.3} dB"
        )));
    }
    let mut cfg = base.clone();
    cfg.channel.loss_db = channel;
    Ok(cfg)
}

/// Finite-key rate of one block at a grid point; zero when no key.
pub fn point_skr(base: &ExperimentConfig, mu: f64, ratio: f64, p_mu: f64, p_z: f64) -> Result<f64> {
    let mut cfg = base.clone();
    cfg.transmitter.mu = mu;
    cfg.transmitter.nu = Some(ratio * mu);
    cfg.transmitter.theta_rad = None;
    cfg.transmitter.p_mu = p_mu;
    cfg.transmitter.p_z = p_z;
    Ok(expected_block_report(&cfg)?.map_or(0.0, |r| r.skr))
}

/// Evaluates the grid at each total loss and reports the optimum per loss.
pub fn optimize_decoy(base: &ExperimentConfig, losses_db: &[f64], grid: &OptimizeGrid) -> Result<OptimizeResult> {
    if losses_db.is_empty() || grid.is_empty() {
        return Err(Error::InvalidArgument("loss list and grid must be non-empty".into()));
    }
    base.validate()?;
    let points = grid.points();
    let mut surface = Vec::with_capacity(points.len() * losses_db.len());
    let mut optima = Vec::with_capacity(losses_db.len());
    for &loss in losses_db {
        let cfg = config_at_total_loss(base, loss)?;
        let rates: Vec<f64> = points
            .par_iter()
            .map(|&(mu, r, pm, pz)| point_skr(&cfg, mu, r, pm, pz))
            .collect::<Result<_>>()?;
        let start = surface.len();
        surface.extend(
            points
                .iter()
                .zip(rates)
                .map(|(&(mu, ratio, p_mu, p_z), skr)| GridPoint {
                    loss_db: loss,
                    mu,
                    ratio,
                    p_mu,
                    p_z,
                    skr,
                }),
        );
        let best = surface[start..]
            .iter()
            .copied()
            .reduce(|a, b| if b.skr > a.skr { b } else { a })
            .expect("grid is non-empty");
        optima.push(best);
    }
    Ok(OptimizeResult { optima, surface })
}
