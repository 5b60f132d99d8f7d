//! Analytic one-decoy bounds on vacuum and single-photon detections.
//!
//! Counts are rescaled by `e^k / p_k` after a Hoeffding shift; the
//! two-intensity combinations below cancel the leading multi-photon terms.

use serde::{Deserialize, Serialize};

use crate::engine::CountTable;
use crate::error::{Error, Result};
use crate::link::Basis;

use super::stats::{hoeffding_delta, tau_n};
use super::{BasisCounts, SecurityParams, SourceParams};

/// How observed counts are widened before entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Deviation {
    /// Hoeffding shift with the given failure probability.
    Hoeffding { eps: f64 },
    /// Asymptotic limit: counts are taken as expectations.
    None,
}

impl Deviation {
    pub fn delta(&self, n: f64) -> f64 {
        match *self {
            Deviation::Hoeffding { eps } => hoeffding_delta(n, eps),
            Deviation::None => 0.0,
        }
    }
}

/// Bounds for one basis. All values are expected counts over the block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DecoyEstimate {
    /// Lower bound on vacuum detections.
    pub s0: f64,
    /// Upper bound on vacuum detections (used inside `s1`).
    pub s0_upper: f64,
    /// Lower bound on single-photon detections.
    pub s1: f64,
    /// Upper bound on single-photon errors.
    pub v1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBounds {
    pub z: DecoyEstimate,
    pub x: DecoyEstimate,
}

pub(crate) fn check_source(source: &SourceParams) -> Result<()> {
    let SourceParams { mu, nu, p_mu } = *source;
    if !(mu > nu && nu > 0.0) {
        return Err(Error::InsufficientData(format!(
            "decoy estimation needs mu > nu > 0, got mu = {mu}, nu = {nu}"
        )));
    }
    if !(p_mu > 0.0 && p_mu < 1.0) {
        return Err(Error::InsufficientData(format!(
            "decoy estimation needs both intensities to be sent, got p_mu = {p_mu}"
        )));
    }
    Ok(())
}

/// Analytic bounds for one basis.
pub fn estimate(counts: &BasisCounts, source: &SourceParams, deviation: Deviation) -> Result<DecoyEstimate> {
    check_source(source)?;
    let n_tot = counts.detections();
    let m_tot = counts.errors();
    if n_tot <= 0.0 {
        return Ok(DecoyEstimate::default());
    }
    let SourceParams { mu, nu, p_mu } = *source;
    let p = [p_mu, 1.0 - p_mu];
    let k = [mu, nu];
    let dn = deviation.delta(n_tot);
    let dm = deviation.delta(m_tot);
    let scale = |i: usize| k[i].exp() / p[i];
    let n_plus = |i: usize| scale(i) * (counts.n[i] + dn);
    let n_minus = |i: usize| scale(i) * (counts.n[i] - dn).max(0.0);
    let m_plus = |i: usize| scale(i) * (counts.m[i] + dm);
    let m_minus = |i: usize| scale(i) * (counts.m[i] - dm).max(0.0);

    let tau0 = tau_n(p_mu, mu, nu, 0);
    let tau1 = tau_n(p_mu, mu, nu, 1);

    let s0 = tau0 / (mu - nu) * (mu * n_minus(1) - nu * n_plus(0));
    let s0_upper = 2.0 * (tau0 * nu.exp() / p[1] * (counts.m[1] + dm) + dn);
    let s1 = tau1 * mu / (mu * nu - nu * nu)
        * (n_minus(1) - nu * nu / (mu * mu) * n_plus(0) - (mu * mu - nu * nu) / (mu * mu) * s0_upper / tau0);
    let v1 = tau1 / (mu - nu) * (m_plus(0) - m_minus(1));

    Ok(DecoyEstimate {
        s0: s0.clamp(0.0, n_tot),
        s0_upper,
        s1: s1.clamp(0.0, n_tot),
        v1: v1.clamp(0.0, n_tot),
    })
}

/// Finite-size bounds for both bases of a count table.
pub fn decoy_bounds_analytic(
    table: &CountTable,
    params: &SecurityParams,
    source: &SourceParams,
) -> Result<AnalyticBounds> {
    let dev = Deviation::Hoeffding {
        eps: params.concentration_eps(),
    };
    table.require_both_classes()?;
    Ok(AnalyticBounds {
        z: estimate(&table.basis_counts(Basis::Z), source, dev)?,
        x: estimate(&table.basis_counts(Basis::X), source, dev)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::stats::poisson_pmf;
    use proptest::prelude::*;

    const SRC: SourceParams = SourceParams {
        mu: 0.6,
        nu: 0.2,
        p_mu: 0.7,
    };

    /// Expected counts for yields `y(n)` and error yields `e(n)`.
    fn synthetic(pulses: f64, y: impl Fn(u32) -> f64, e: impl Fn(u32) -> f64) -> BasisCounts {
        let mut c = BasisCounts {
            pulses,
            ..BasisCounts::default()
        };
        for (i, (k, p)) in [(SRC.mu, SRC.p_mu), (SRC.nu, 1.0 - SRC.p_mu)].into_iter().enumerate() {
            for n in 0..60 {
                c.n[i] += pulses * p * poisson_pmf(k, n) * y(n);
                c.m[i] += pulses * p * poisson_pmf(k, n) * e(n);
            }
        }
        c
    }

    fn lossy(eta: f64, y0: f64) -> impl Fn(u32) -> f64 {
        move |n| 1.0 - (1.0 - y0) * (1.0 - eta).powi(n as i32)
    }

    #[test]
    fn zero_counts_give_zero_bounds() {
        let est = estimate(&BasisCounts::default(), &SRC, Deviation::Hoeffding { eps: 1e-10 }).unwrap();
        assert_eq!((est.s0, est.s1, est.v1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_intensity_is_rejected() {
        let c = synthetic(1e9, lossy(0.01, 0.0), |_| 0.0);
        let one = SourceParams { p_mu: 1.0, ..SRC };
        assert!(matches!(
            estimate(&c, &one, Deviation::None),
            Err(Error::InsufficientData(_))
        ));
        let same = SourceParams { nu: 0.6, ..SRC };
        assert!(estimate(&c, &same, Deviation::None).is_err());
    }

    #[test]
    fn asymptotic_single_photon_bound_at_link_loss() {
        // 19.5 dB, no dark counts, no errors
        let eta = 10f64.powf(-1.95);
        let pulses = 1e10;
        let c = synthetic(pulses, lossy(eta, 0.0), |_| 0.0);
        let truth = pulses * tau_n(SRC.p_mu, SRC.mu, SRC.nu, 1) * eta;
        let est = estimate(&c, &SRC, Deviation::None).unwrap();
        assert!(est.s1 <= truth * (1.0 + 1e-12));
        // With Y_n = n * eta the rescaled gains are k * eta * e^k, so the
        // bound recovers mu (e^nu - (nu / mu) e^mu) / (mu - nu) of the truth.
        let (mu, nu) = (SRC.mu, SRC.nu);
        let oracle = mu * (nu.exp() - nu / mu * mu.exp()) / (mu - nu);
        assert!((est.s1 / truth - oracle).abs() < 2e-3, "{} vs {oracle}", est.s1 / truth);

        // a weaker decoy closes the gap to within 5 %
        let weak = SourceParams { nu: 0.05, ..SRC };
        let mut c = BasisCounts {
            pulses,
            ..BasisCounts::default()
        };
        for (i, (k, p)) in [(weak.mu, weak.p_mu), (weak.nu, 1.0 - weak.p_mu)]
            .into_iter()
            .enumerate()
        {
            c.n[i] = pulses * p * (1.0 - (-k * eta).exp());
        }
        let truth = pulses * tau_n(weak.p_mu, weak.mu, weak.nu, 1) * eta;
        let est = estimate(&c, &weak, Deviation::None).unwrap();
        assert!(est.s1 <= truth && est.s1 >= 0.95 * truth, "{} vs {truth}", est.s1);
    }

    #[test]
    fn bounds_bracket_truth_with_dark_counts_and_errors() {
        let eta = 10f64.powf(-1.95);
        let pulses = 2e9;
        let y0 = 4e-5;
        let e1 = 0.01;
        let y = lossy(eta, y0);
        let e = move |n: u32| {
            if n == 0 {
                y0 / 2.0
            } else {
                e1 * (1.0 - (1.0 - eta).powi(n as i32)) + y0 / 2.0
            }
        };
        let c = synthetic(pulses, &y, e);
        let est = estimate(&c, &SRC, Deviation::Hoeffding { eps: 1e-10 / 19.0 }).unwrap();
        let s0_true = pulses * tau_n(SRC.p_mu, SRC.mu, SRC.nu, 0) * y(0);
        let s1_true = pulses * tau_n(SRC.p_mu, SRC.mu, SRC.nu, 1) * y(1);
        let v1_true = pulses * tau_n(SRC.p_mu, SRC.mu, SRC.nu, 1) * e(1);
        assert!(est.s0 <= s0_true);
        assert!(est.s0_upper >= s0_true);
        assert!(est.s1 <= s1_true && est.s1 > 0.5 * s1_true);
        assert!(est.v1 >= v1_true);
    }

    proptest! {
        #[test]
        fn tighter_eps_never_raises_lower_bounds(
            eta_db in 10.0f64..40.0,
            y0 in 0.0f64..1e-4,
            log_pulses in 7.0f64..11.0,
            e1 in 0.0f64..0.1,
            eps_exp in 1.0f64..20.0,
        ) {
            let eta = 10f64.powf(-eta_db / 10.0);
            let y = lossy(eta, y0);
            let c = synthetic(10f64.powf(log_pulses), &y, |n| if n == 0 { y0 / 2.0 } else { e1 * y(n) });
            let loose = estimate(&c, &SRC, Deviation::Hoeffding { eps: 10f64.powf(-eps_exp) }).unwrap();
            let tight = estimate(&c, &SRC, Deviation::Hoeffding { eps: 10f64.powf(-eps_exp - 2.0) }).unwrap();
            let asym = estimate(&c, &SRC, Deviation::None).unwrap();
            prop_assert!(tight.s0 <= loose.s0 && loose.s0 <= asym.s0);
            prop_assert!(tight.s1 <= loose.s1 && loose.s1 <= asym.s1);
            prop_assert!(tight.v1 >= loose.v1 && loose.v1 >= asym.v1);
        }
    }
}
