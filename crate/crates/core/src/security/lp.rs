//! Linear-program oracle for the decoy estimation problem.
//!
//! Unknowns are the photon-number yields `Y_n` and error yields `E_n` for
//! `n <= cap`, plus one slack per intensity absorbing everything above the
//! cap. Constraints are the Hoeffding intervals on the observed detections
//! and errors of each intensity. Vacuum errors are fixed at half the vacuum
//! yield (dark counts do not prefer a detector). The optimum of each
//! objective is the tightest bound any method can extract from the same
//! data, so analytic bounds must never beat it.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use serde::{Deserialize, Serialize};

use crate::engine::CountTable;
use crate::error::{Error, Result};
use crate::link::Basis;

use super::decoy::{check_source, Deviation};
use super::stats::{poisson_pmf, poisson_tail, tau_n};
use super::{BasisCounts, SecurityParams, SourceParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Feasible ranges for one basis, in expected counts over the block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LpEstimate {
    pub s0: Interval,
    pub s1: Interval,
    /// Largest feasible single-photon error count.
    pub v1_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpBounds {
    pub z: LpEstimate,
    pub x: LpEstimate,
}

enum Target {
    Yield(usize),
    ErrorYield(usize),
}

/// Relative slack added to every interval to absorb solver round-off.
const RHS_TOL: f64 = 1e-9;

struct Model {
    cap: usize,
    /// `P(n | k)` for n <= cap, per intensity.
    pmf: [Vec<f64>; 2],
    tail: [f64; 2],
    /// Detection and error intervals per intensity, scaled.
    gain: [(f64, f64); 2],
    err: [(f64, f64); 2],
    /// Yields are scaled by this factor so that constraints are O(1).
    scale: f64,
}

impl Model {
    fn solve(&self, target: &Target, direction: OptimizationDirection) -> Result<f64> {
        let mut lp = Problem::new(direction);
        let ub = self.scale;
        let (ty, te) = match *target {
            Target::Yield(n) => (Some(n), None),
            Target::ErrorYield(n) => (None, Some(n)),
        };
        let y: Vec<Variable> = (0..=self.cap)
            .map(|n| lp.add_var(if ty == Some(n) { 1.0 } else { 0.0 }, (0.0, ub)))
            .collect();
        let e: Vec<Variable> = (0..=self.cap)
            .map(|n| lp.add_var(if te == Some(n) { 1.0 } else { 0.0 }, (0.0, ub)))
            .collect();
        for k in 0..2 {
            let t = lp.add_var(0.0, (0.0, ub * self.tail[k]));
            let u = lp.add_var(0.0, (0.0, ub * self.tail[k]));
            let mut gain: Vec<(Variable, f64)> = y.iter().zip(&self.pmf[k]).map(|(&v, &p)| (v, p)).collect();
            gain.push((t, 1.0));
            add_interval(&mut lp, &gain, self.gain[k]);
            let mut err: Vec<(Variable, f64)> = e.iter().zip(&self.pmf[k]).map(|(&v, &p)| (v, p)).collect();
            err.push((u, 1.0));
            add_interval(&mut lp, &err, self.err[k]);
            lp.add_constraint([(u, 1.0), (t, -1.0)], ComparisonOp::Le, 0.0);
        }
        lp.add_constraint([(e[0], 1.0), (y[0], -0.5)], ComparisonOp::Eq, 0.0);
        for n in 1..=self.cap {
            lp.add_constraint([(e[n], 1.0), (y[n], -1.0)], ComparisonOp::Le, 0.0);
        }
        match lp.solve() {
            Ok(sol) => Ok(sol.objective()),
            Err(minilp::Error::Infeasible) => Err(Error::Infeasible(
                "observed counts are inconsistent with any photon-number yields".into(),
            )),
            Err(minilp::Error::Unbounded) => Err(Error::Infeasible("program is unbounded".into())),
        }
    }
}

fn add_interval(lp: &mut Problem, expr: &[(Variable, f64)], (lo, hi): (f64, f64)) {
    let pad = |x: f64| RHS_TOL * x.abs().max(1.0);
    lp.add_constraint(expr, ComparisonOp::Ge, lo - pad(lo));
    lp.add_constraint(expr, ComparisonOp::Le, hi + pad(hi));
}

/// LP ranges for one basis.
pub fn estimate(counts: &BasisCounts, source: &SourceParams, deviation: Deviation, cap: usize) -> Result<LpEstimate> {
    check_source(source)?;
    if cap < 2 {
        return Err(Error::InvalidArgument("photon cap must be at least 2".into()));
    }
    let n_tot = counts.detections();
    if n_tot <= 0.0 {
        return Ok(LpEstimate::default());
    }
    if !(counts.pulses > 0.0) {
        return Err(Error::InsufficientData(
            "basis has detections but no sent pulses".into(),
        ));
    }
    let SourceParams { mu, nu, p_mu } = *source;
    let p = [p_mu, 1.0 - p_mu];
    let k = [mu, nu];
    let dn = deviation.delta(n_tot);
    let dm = deviation.delta(counts.errors());
    // Y' = Y * pulses / n_tot keeps every coefficient and bound O(1).
    let scale = counts.pulses / n_tot;
    let interval = |x: f64, d: f64, i: usize| ((x - d) / (p[i] * n_tot), (x + d) / (p[i] * n_tot));
    let cap_u32 = cap as u32;
    let model = Model {
        cap,
        pmf: k.map(|m| (0..=cap_u32).map(|n| poisson_pmf(m, n)).collect()),
        tail: k.map(|m| poisson_tail(m, cap_u32)),
        gain: [interval(counts.n[0], dn, 0), interval(counts.n[1], dn, 1)],
        err: [interval(counts.m[0], dm, 0), interval(counts.m[1], dm, 1)],
        scale,
    };
    let tau0 = tau_n(p_mu, mu, nu, 0);
    let tau1 = tau_n(p_mu, mu, nu, 1);
    // objective values are in units of n_tot / pulses per pulse
    let to_counts = |v: f64, tau: f64| v * tau * n_tot;
    use OptimizationDirection::{Maximize, Minimize};
    Ok(LpEstimate {
        s0: Interval {
            lo: to_counts(model.solve(&Target::Yield(0), Minimize)?, tau0),
            hi: to_counts(model.solve(&Target::Yield(0), Maximize)?, tau0),
        },
        s1: Interval {
            lo: to_counts(model.solve(&Target::Yield(1), Minimize)?, tau1),
            hi: to_counts(model.solve(&Target::Yield(1), Maximize)?, tau1),
        },
        v1_max: to_counts(model.solve(&Target::ErrorYield(1), Maximize)?, tau1),
    })
}

/// LP ranges for both bases of a count table.
pub fn decoy_bounds_lp(table: &CountTable, params: &SecurityParams, source: &SourceParams) -> Result<LpBounds> {
    let dev = Deviation::Hoeffding {
        eps: params.concentration_eps(),
    };
    table.require_both_classes()?;
    Ok(LpBounds {
        z: estimate(&table.basis_counts(Basis::Z), source, dev, params.lp_photon_cap)?,
        x: estimate(&table.basis_counts(Basis::X), source, dev, params.lp_photon_cap)?,
    })
}
