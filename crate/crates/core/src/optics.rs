//! Jones-calculus primitives for the Sagnac-loop modulators.
//!
//! States are normalized two-component complex vectors in the H/V basis.
//! Operators are plain 2x2 complex matrices; waveplates and rotators are
//! unitary, polarizers are rank-1 projectors. Global phase is unobservable,
//! so equality of states is always checked through `|<u|v>|`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Polarization state `a_H |H> + a_V |V>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    h: Complex64,
    v: Complex64,
}

impl JonesVector {
    /// Builds a state from raw amplitudes without normalizing.
    pub const fn from_amplitudes(h: Complex64, v: Complex64) -> Self {
        Self { h, v }
    }

    /// Builds a state and rescales it to unit norm.
    ///
    /// Panics on the zero vector, which is not a polarization state.
    pub fn normalized(h: Complex64, v: Complex64) -> Self {
        let n = (h.norm_sqr() + v.norm_sqr()).sqrt();
        assert!(n > 0.0, "cannot normalize the zero Jones vector");
        Self { h: h / n, v: v / n }
    }

    pub fn h(&self) -> Complex64 {
        self.h
    }

    pub fn v(&self) -> Complex64 {
        self.v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &JonesVector) -> Complex64 {
        self.h.conj() * other.h + self.v.conj() * other.v
    }

    /// `|<self|other>|^2`: the probability that `other` passes a projector onto `self`.
    pub fn overlap(&self, other: &JonesVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// True when both states agree up to a global phase.
    pub fn same_state(&self, other: &JonesVector, tol: f64) -> bool {
        let scale = (self.norm_sqr() * other.norm_sqr()).sqrt();
        (self.inner(other).norm() - scale).abs() <= tol
    }
}

impl fmt::Display for JonesVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.h, self.v)
    }
}

/// The six cardinal states of the Poincaré sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NamedSop {
    H,
    V,
    D,
    A,
    L,
    R,
}

impl NamedSop {
    pub const ALL: [NamedSop; 6] = [
        NamedSop::H,
        NamedSop::V,
        NamedSop::D,
        NamedSop::A,
        NamedSop::L,
        NamedSop::R,
    ];

    pub fn vector(self) -> JonesVector {
        sop_vector(self)
    }
}

/// Jones vector of a named state; L = (|H> + i|V>)/sqrt 2 and R = (|H> - i|V>)/sqrt 2.
pub fn sop_vector(name: NamedSop) -> JonesVector {
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let is = Complex64::new(0.0, FRAC_1_SQRT_2);
    let (h, v) = match name {
        NamedSop::H => (ONE, ZERO),
        NamedSop::V => (ZERO, ONE),
        NamedSop::D => (s, s),
        NamedSop::A => (s, -s),
        NamedSop::L => (s, is),
        NamedSop::R => (s, -is),
    };
    JonesVector::from_amplitudes(h, v)
}

/// Output state of the Sagnac modulator for a CW/CCW phase difference
/// `delta_phi`: `(|H> + e^{i delta_phi} |V>) / sqrt 2`.
pub fn ipognac_state(delta_phi: f64) -> JonesVector {
    JonesVector::from_amplitudes(
        Complex64::new(FRAC_1_SQRT_2, 0.0),
        Complex64::from_polar(FRAC_1_SQRT_2, delta_phi),
    )
}

/// Linear polarization state `|theta> = cos(theta)|H> + sin(theta)|V>`.
pub fn linear_state(theta: f64) -> JonesVector {
    JonesVector::from_amplitudes(Complex64::new(theta.cos(), 0.0), Complex64::new(theta.sin(), 0.0))
}

/// A 2x2 complex Jones matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesOperator {
    m: [[Complex64; 2]; 2],
}

impl JonesOperator {
    pub const fn new(m: [[Complex64; 2]; 2]) -> Self {
        Self { m }
    }

    pub const fn identity() -> Self {
        Self::new([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        self.m
    }

    pub fn apply(&self, s: &JonesVector) -> JonesVector {
        JonesVector::from_amplitudes(
            self.m[0][0] * s.h + self.m[0][1] * s.v,
            self.m[1][0] * s.h + self.m[1][1] * s.v,
        )
    }

    /// `self * rhs`, i.e. `rhs` acts first.
    pub fn compose(&self, rhs: &JonesOperator) -> JonesOperator {
        let a = &self.m;
        let b = &rhs.m;
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        JonesOperator::new(out)
    }

    pub fn adjoint(&self) -> JonesOperator {
        let m = &self.m;
        JonesOperator::new([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_deviation(&self, other: &JonesOperator) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.adjoint().compose(self).max_deviation(&JonesOperator::identity()) <= tol
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        self.compose(self).max_deviation(self) <= tol && self.adjoint().max_deviation(self) <= tol
    }
}

impl Mul for JonesOperator {
    type Output = JonesOperator;

    fn mul(self, rhs: JonesOperator) -> JonesOperator {
        self.compose(&rhs)
    }
}

impl Mul<JonesVector> for JonesOperator {
    type Output = JonesVector;

    fn mul(self, rhs: JonesVector) -> JonesVector {
        self.apply(&rhs)
    }
}

/// Rotation of the transverse frame by `angle` (physical rotator).
pub fn rotator(angle: f64) -> JonesOperator {
    let (s, c) = angle.sin_cos();
    JonesOperator::new([
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ])
}

/// Linear retarder with `retardance` between fast and slow axes and the fast
/// axis at `angle` from H. Retardance pi is a HWP, pi/2 a QWP.
pub fn waveplate(retardance: f64, angle: f64) -> JonesOperator {
    let core = JonesOperator::new([[ONE, ZERO], [ZERO, Complex64::from_polar(1.0, retardance)]]);
    rotator(angle) * core * rotator(-angle)
}

/// `|s><s|` for a normalized state.
pub fn projector(s: &JonesVector) -> JonesOperator {
    JonesOperator::new([
        [s.h * s.h.conj(), s.h * s.v.conj()],
        [s.v * s.h.conj(), s.v * s.v.conj()],
    ])
}

/// Ideal linear polarizer transmitting `|theta>`.
pub fn polarizer(theta: f64) -> JonesOperator {
    projector(&linear_state(theta))
}

/// `|<theta|state>|^2`.
pub fn polarizer_transmission(state: &JonesVector, theta: f64) -> f64 {
    linear_state(theta).overlap(state)
}

/// Transmission of the modulator output through the polarizer at `theta`:
/// `(1 + sin(2 theta) cos(delta_phi)) / 2`.
pub fn optical_response(delta_phi: f64, theta: f64) -> f64 {
    0.5 * (1.0 + (2.0 * theta).sin() * delta_phi.cos())
}

/// Ratio between the transmissions of |A> and |D>: `tan^2(theta - pi/4)`.
pub fn intensity_ratio(theta: f64) -> Result<f64> {
    let bright = optical_response(0.0, theta);
    if bright <= 1e-15 {
        return Err(Error::Pole { theta });
    }
    Ok(optical_response(std::f64::consts::PI, theta) / bright)
}

/// Polarizer angle in `(0, pi/4]` whose intensity ratio equals `ratio`.
pub fn theta_for_ratio(ratio: f64) -> Result<f64> {
    if !(ratio.is_finite() && (0.0..=1.0).contains(&ratio)) {
        return Err(Error::InvalidArgument(format!(
            "intensity ratio {ratio} is not in [0, 1]"
        )));
    }
    Ok(FRAC_PI_4 - ratio.sqrt().atan())
}
