//! Phase-error bound, leakage terms and the secret key rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::decoy::{self, DecoyEstimate, Deviation};
use super::stats::binary_entropy;
use super::{BasisCounts, SecurityParams, SourceParams, EPS_TERMS};

/// Bits consumed by the secrecy analysis.
pub fn lambda_sec(eps_sec: f64) -> f64 {
    6.0 * (EPS_TERMS / eps_sec).log2()
}

/// Bits consumed by the correctness check.
pub fn lambda_c(eps_cor: f64) -> f64 {
    (1.0 / eps_cor).log2()
}

/// Upper bound on the single-photon phase error rate in the key basis.
///
/// `eps = None` gives the infinite-sample limit (no sampling correction).
/// The result is clamped to `[0, 1/2]`.
pub fn phase_error_bound(s1_z: f64, s1_x: f64, v1_x: f64, eps: Option<f64>) -> Result<f64> {
    if !(s1_x > 0.0) {
        return Err(Error::DegenerateBound(
            "no single-photon detections in the control basis".into(),
        ));
    }
    let b = (v1_x / s1_x).clamp(0.0, 0.5);
    let Some(eps) = eps else {
        return Ok(b);
    };
    if !(s1_z > 0.0) {
        return Ok(0.5);
    }
    Ok((b + sampling_correction(s1_z, s1_x, b, eps)).min(0.5))
}

/// Random-sampling correction between the two bases; zero at `b = 0`.
pub fn sampling_correction(c: f64, d: f64, b: f64, eps: f64) -> f64 {
    let v = (1.0 - b) * b;
    if v <= 0.0 {
        return 0.0;
    }
    let log_arg = (c + d) / (c * d * v) * (EPS_TERMS * EPS_TERMS) / (eps * eps);
    if log_arg <= 1.0 {
        return 0.0;
    }
    ((c + d) * v / (c * d * std::f64::consts::LN_2) * log_arg.log2()).sqrt()
}

/// Key rate and its components for one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRate {
    pub s0: f64,
    pub s1: f64,
    pub phi_z: f64,
    pub lambda_ec: f64,
    pub lambda_c: f64,
    pub lambda_sec: f64,
    /// Unclamped extractable length; negative when the block yields no key.
    pub key_bits: f64,
    pub t: f64,
    pub skr: f64,
}

/// Finite-key rate from the bounds of one block.
pub fn skr_finite(
    s0: f64,
    s1: f64,
    phi_z: f64,
    t: f64,
    n_z: f64,
    qber_z: f64,
    params: &SecurityParams,
) -> Result<KeyRate> {
    key_rate(s0, s1, phi_z, t, n_z, qber_z, params, true)
}

#[allow(clippy::too_many_arguments)]
fn key_rate(
    s0: f64,
    s1: f64,
    phi_z: f64,
    t: f64,
    n_z: f64,
    qber_z: f64,
    params: &SecurityParams,
    finite: bool,
) -> Result<KeyRate> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {t}")));
    }
    let phi_z = phi_z.clamp(0.0, 0.5);
    let lambda_ec = params.f_ec * n_z * binary_entropy(qber_z)?;
    let (lc, ls) = if finite {
        (lambda_c(params.eps_cor), lambda_sec(params.eps_sec))
    } else {
        (0.0, 0.0)
    };
    let key_bits = s0 + s1 * (1.0 - binary_entropy(phi_z)?) - lambda_ec - lc - ls;
    Ok(KeyRate {
        s0,
        s1,
        phi_z,
        lambda_ec,
        lambda_c: lc,
        lambda_sec: ls,
        key_bits,
        t,
        skr: (key_bits / t).max(0.0),
    })
}

/// Everything computed for one block of sifted data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeyReport {
    pub n_z: f64,
    pub n_x: f64,
    pub qber_z: f64,
    pub qber_x: f64,
    pub z_bounds: DecoyEstimate,
    pub x_bounds: DecoyEstimate,
    pub s0: f64,
    pub s1: f64,
    pub phi_z: f64,
    pub lambda_ec: f64,
    pub lambda_c: f64,
    pub lambda_sec: f64,
    pub key_bits: f64,
    pub t: f64,
    pub skr: f64,
    pub phi_z_asymptotic: f64,
    pub skr_asymptotic: f64,
}

struct BlockKey {
    z: DecoyEstimate,
    x: DecoyEstimate,
    rate: KeyRate,
}

fn block_key(
    z: &BasisCounts,
    x: &BasisCounts,
    t: f64,
    params: &SecurityParams,
    source: &SourceParams,
    finite: bool,
) -> Result<BlockKey> {
    let dev = if finite {
        Deviation::Hoeffding {
            eps: params.concentration_eps(),
        }
    } else {
        Deviation::None
    };
    let zb = decoy::estimate(z, source, dev)?;
    let xb = decoy::estimate(x, source, dev)?;
    let phi = if xb.s1 > 0.0 {
        phase_error_bound(zb.s1, xb.s1, xb.v1, finite.then_some(params.eps_sec))?
    } else {
        0.5
    };
    let qber_z = z.qber().unwrap_or(0.0);
    let rate = key_rate(zb.s0, zb.s1, phi, t, z.detections(), qber_z, params, finite)?;
    Ok(BlockKey { z: zb, x: xb, rate })
}

/// Asymptotic key rate: no concentration shifts, no sampling correction and
/// no correctness or secrecy overhead.
pub fn skr_asymptotic(
    z: &BasisCounts,
    x: &BasisCounts,
    t: f64,
    params: &SecurityParams,
    source: &SourceParams,
) -> Result<f64> {
    Ok(block_key(z, x, t, params, source, false)?.rate.skr)
}

/// Finite and asymptotic analysis of one block of duration `t`.
pub fn evaluate_block(
    z: &BasisCounts,
    x: &BasisCounts,
    t: f64,
    params: &SecurityParams,
    source: &SourceParams,
) -> Result<FiniteKeyReport> {
    let fin = block_key(z, x, t, params, source, true)?;
    let asym = block_key(z, x, t, params, source, false)?;
    Ok(FiniteKeyReport {
        n_z: z.detections(),
        n_x: x.detections(),
        qber_z: z.qber().unwrap_or(0.0),
        qber_x: x.qber().unwrap_or(0.0),
        z_bounds: fin.z,
        x_bounds: fin.x,
        s0: fin.rate.s0,
        s1: fin.rate.s1,
        phi_z: fin.rate.phi_z,
        lambda_ec: fin.rate.lambda_ec,
        lambda_c: fin.rate.lambda_c,
        lambda_sec: fin.rate.lambda_sec,
        key_bits: fin.rate.key_bits,
        t,
        skr: fin.rate.skr,
        phi_z_asymptotic: asym.rate.phi_z,
        skr_asymptotic: asym.rate.skr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::stats::{poisson_pmf, tau_n};
    use proptest::prelude::*;

    const SRC: SourceParams = SourceParams {
        mu: 0.6,
        nu: 0.2,
        p_mu: 0.7,
    };

    #[test]
    fn lambda_sec_is_exact() {
        let oracle = 6.0 * (19.0f64.ln() + 10.0 * 10f64.ln()) / 2f64.ln();
        let l = lambda_sec(1e-10);
        assert!(((l - oracle) / oracle).abs() < 1e-12);
        assert!((l - 224.8).abs() < 0.01, "{l}");
        assert!((lambda_c(1e-15) - 49.829).abs() < 1e-3);
    }

    #[test]
    fn phase_error_limits() {
        assert_eq!(phase_error_bound(1e9, 1e9, 0.0, None).unwrap(), 0.0);
        assert_eq!(phase_error_bound(1e9, 1e9, 0.0, Some(1e-10)).unwrap(), 0.0);
        assert!(matches!(
            phase_error_bound(1e6, 0.0, 0.0, Some(1e-10)),
            Err(Error::DegenerateBound(_))
        ));
        // correction shrinks toward zero as the samples grow at fixed ratio
        let mut prev = f64::INFINITY;
        for s in [1e4, 1e6, 1e8, 1e10, 1e12] {
            let g = sampling_correction(s, 0.1 * s, 0.01, 1e-10);
            assert!(g < prev);
            prev = g;
        }
        assert!(prev < 1e-4);
        assert_eq!(phase_error_bound(10.0, 10.0, 9.0, Some(1e-10)).unwrap(), 0.5);
    }

    #[test]
    fn zero_inputs_give_zero_rate() {
        let r = skr_finite(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, &SecurityParams::default()).unwrap();
        assert_eq!(r.skr, 0.0);
        assert!(r.key_bits < 0.0);
        assert!(skr_finite(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, &SecurityParams::default()).is_err());
    }

    /// Expected counts of a lossless, noiseless link seen by one basis.
    fn ideal(pulses: f64, src: &SourceParams) -> BasisCounts {
        let mut c = BasisCounts {
            pulses,
            ..BasisCounts::default()
        };
        for (i, (k, p)) in [(src.mu, src.p_mu), (src.nu, 1.0 - src.p_mu)].into_iter().enumerate() {
            c.n[i] = pulses * p * (1.0 - poisson_pmf(k, 0));
        }
        c
    }

    #[test]
    fn lossless_asymptotic_rate_is_single_photon_fraction() {
        let src = SourceParams {
            mu: 0.1,
            nu: 0.02,
            p_mu: 0.8,
        };
        let rate = 1e6;
        let p_z = 0.9;
        let t = 1.0;
        let z = ideal(rate * t * p_z, &src);
        let x = ideal(rate * t * (1.0 - p_z), &src);
        let skr = skr_asymptotic(&z, &x, t, &SecurityParams::default(), &src).unwrap();
        let expected = p_z * tau_n(src.p_mu, src.mu, src.nu, 1);
        assert!(
            ((skr / rate) / expected - 1.0).abs() < 0.01,
            "{} vs {expected}",
            skr / rate
        );
    }

    fn link_counts(pulses: f64, eta: f64, y0: f64, e: f64) -> BasisCounts {
        let mut c = BasisCounts {
            pulses,
            ..BasisCounts::default()
        };
        for (i, (k, p)) in [(SRC.mu, SRC.p_mu), (SRC.nu, 1.0 - SRC.p_mu)].into_iter().enumerate() {
            let g = 1.0 - (1.0 - y0) * (-k * eta).exp();
            c.n[i] = pulses * p * g;
            c.m[i] = pulses * p * (y0 / 2.0 + e * (g - y0));
        }
        c
    }

    #[test]
    fn reference_scale_phase_error_is_below_the_entropy_landmark() {
        let eta = 10f64.powf(-1.95);
        // one block of ~6.6e6 key-basis detections
        let n = 2.2e9;
        let z = link_counts(0.9 * n, 0.6 * eta, 8e-5, 0.002);
        let x = link_counts(0.1 * n, 0.4 * eta, 8e-5, 0.011);
        let rep = evaluate_block(&z, &x, 1.0, &SecurityParams::default(), &SRC).unwrap();
        assert!(binary_entropy(rep.phi_z).unwrap() < binary_entropy(0.11).unwrap());
        assert!(rep.skr > 0.0);
        assert!(rep.skr <= rep.skr_asymptotic);
        assert!(rep.phi_z >= rep.phi_z_asymptotic);
    }

    proptest! {
        #[test]
        fn clamps_and_monotonicity(
            eta_db in 10.0f64..30.0,
            y0 in 0.0f64..1e-4,
            ez in 0.0f64..0.05,
            ex in 0.0f64..0.05,
            log_n in 7.0f64..10.0,
            q1 in 0.0f64..0.5,
            q2 in 0.0f64..0.5,
        ) {
            let eta = 10f64.powf(-eta_db / 10.0);
            let n = 10f64.powf(log_n);
            let z = link_counts(0.9 * n, 0.6 * eta, y0, ez);
            let x = link_counts(0.1 * n, 0.4 * eta, y0, ex);
            let params = SecurityParams::default();
            let rep = evaluate_block(&z, &x, 1.0, &params, &SRC).unwrap();
            prop_assert!(rep.skr >= 0.0);
            prop_assert!((0.0..=0.5).contains(&rep.phi_z));
            prop_assert!(rep.skr <= rep.skr_asymptotic + 1e-9);

            let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
            let a = skr_finite(rep.s0, rep.s1, rep.phi_z, 1.0, rep.n_z, lo, &params).unwrap();
            let b = skr_finite(rep.s0, rep.s1, rep.phi_z, 1.0, rep.n_z, hi, &params).unwrap();
            prop_assert!(b.skr <= a.skr);

            let strict = SecurityParams { eps_sec: 1e-14, ..params.clone() };
            let rs = evaluate_block(&z, &x, 1.0, &strict, &SRC).unwrap();
            prop_assert!(rs.skr <= rep.skr);
        }
    }
}
