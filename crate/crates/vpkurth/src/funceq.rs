//! The scalar functional equation behind the steady-state family.
//!
//! For anisotropy parameter Gamma close to 1 the density condition reduces to
//! finding psi on [0, 1] with
//!
//! ```text
//! psi(s) - psi(h(s)) = s,      h(s) = s - chi(s),
//! ```
//!
//! where chi(s) = Gamma s / (1 - s) on [0, 1-Gamma] and chi(s) = s above.
//! On [1-Gamma, 1] the equation forces psi(s) = s; on [0, 1-Gamma] the unique
//! solution with psi(0) = 0 is the iterate series
//!
//! ```text
//! psi_tilde(s) = sum_{k >= 0} h^k(s),
//! ```
//!
//! which converges geometrically because h is a contraction toward 0 there.
//! This module evaluates h, the series, and its first two derivatives; the
//! half-integral inversion that turns psi into the state profile lives in
//! `abel`.

use crate::error::{Error, Result};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Smallest anisotropy parameter accepted by the full pipeline: Gamma >= 1 - 2^-12.
pub const GAMMA_MIN_PIPELINE: f64 = 1.0 - GAMMA_EXP_MIN_OMG;
const GAMMA_EXP_MIN_OMG: f64 = 2.44140625e-4; // 2^-12

/// Smallest parameter for which the contraction estimate behind the iterate
/// series holds: Gamma >= 1727/1728.
pub const GAMMA_MIN_SERIES: f64 = 1727.0 / 1728.0;

/// Exponent range accepted by `GammaParam::from_exponent`. The upper cap keeps
/// 1 - Gamma large enough that the inner profile branch is resolvable in
/// double precision.
pub const GAMMA_EXP_MIN: u32 = 12;
pub const GAMMA_EXP_MAX: u32 = 40;

/// Validated anisotropy parameter.
///
/// `one_minus_gamma` is stored at construction and reused everywhere; the
/// quantity 1 - Gamma controls every branch point and tolerance downstream
/// and must never be recomputed by subtraction in a context that could lose
/// the exact dyadic value coming from `from_exponent`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaParam {
    gamma: f64,
    one_minus_gamma: f64,
}

impl GammaParam {
    /// Parameter for the full pipeline: Gamma in [1 - 2^-12, 1].
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= GAMMA_MIN_PIPELINE && gamma <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "gamma = {gamma} outside pipeline range [{GAMMA_MIN_PIPELINE}, 1]"
            )));
        }
        Ok(GammaParam { gamma, one_minus_gamma: 1.0 - gamma })
    }

    /// Gamma = 1 - 2^-k. The subtraction is exact for this range of k.
    pub fn from_exponent(k: u32) -> Result<Self> {
        if !(GAMMA_EXP_MIN..=GAMMA_EXP_MAX).contains(&k) {
            return Err(Error::InvalidParam(format!(
                "gamma exponent {k} outside supported range [{GAMMA_EXP_MIN}, {GAMMA_EXP_MAX}]"
            )));
        }
        let omg = (2.0_f64).powi(-(k as i32));
        Ok(GammaParam { gamma: 1.0 - omg, one_minus_gamma: omg })
    }

    /// Parameter in the wider range where the iterate series itself converges,
    /// Gamma in [1727/1728, 1). Profile building is not supported here; only
    /// the functions of this module are.
    pub fn series_range(gamma: f64) -> Result<Self> {
        if !(gamma >= GAMMA_MIN_SERIES && gamma < 1.0) {
            return Err(Error::InvalidParam(format!(
                "gamma = {gamma} outside series range [{GAMMA_MIN_SERIES}, 1)"
            )));
        }
        Ok(GammaParam { gamma, one_minus_gamma: 1.0 - gamma })
    }

    /// The isotropic endpoint Gamma = 1.
    #[must_use]
    pub fn isotropic() -> Self {
        GammaParam { gamma: 1.0, one_minus_gamma: 0.0 }
    }

    #[must_use]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// 1 - Gamma, the branch-point location of the profile.
    #[must_use]
    pub fn one_minus_gamma(&self) -> f64 {
        self.one_minus_gamma
    }

    #[must_use]
    pub fn is_isotropic(&self) -> bool {
        self.gamma == 1.0
    }

    /// Radius 2 (1-Gamma)^{1/3} of the disk on which the contraction estimate
    /// for h is stated.
    #[must_use]
    pub fn contraction_radius(&self) -> f64 {
        2.0 * self.one_minus_gamma.cbrt()
    }
}

impl Serialize for GammaParam {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Raw {
            gamma: f64,
            one_minus_gamma: f64,
        }
        Raw { gamma: self.gamma, one_minus_gamma: self.one_minus_gamma }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for GammaParam {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            gamma: f64,
            one_minus_gamma: f64,
        }
        let raw = Raw::deserialize(de)?;
        if !(raw.gamma >= GAMMA_MIN_SERIES && raw.gamma <= 1.0) {
            return Err(D::Error::custom(format!("gamma = {} out of range", raw.gamma)));
        }
        // Accept the stored complement verbatim so dyadic parameters survive
        // a serialization round trip bit-exactly, but insist it is consistent.
        if (raw.one_minus_gamma - (1.0 - raw.gamma)).abs() > 1e-15 {
            return Err(D::Error::custom("one_minus_gamma inconsistent with gamma"));
        }
        Ok(GammaParam { gamma: raw.gamma, one_minus_gamma: raw.one_minus_gamma })
    }
}

/// chi(s): Gamma s / (1-s) on [0, 1-Gamma], s on [1-Gamma, 1].
pub fn chi(g: &GammaParam, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("chi: s = {s} outside [0, 1]")));
    }
    if s >= g.one_minus_gamma() {
        Ok(s)
    } else {
        Ok(g.gamma() * s / (1.0 - s))
    }
}

/// h(s) = s - chi(s). On the inner interval this is written as
/// s (omg - s) / (1 - s) with omg = 1 - Gamma, which is exact at both ends.
#[must_use]
pub fn h(g: &GammaParam, s: f64) -> f64 {
    let omg = g.one_minus_gamma();
    if s >= omg {
        0.0
    } else {
        s * (omg - s) / (1.0 - s)
    }
}

/// h'(s) = 1 - Gamma / (1-s)^2 on [0, 1-Gamma]; 0 above. At the split the
/// inner limit is returned, which is what the chain rule along series orbits
/// needs (orbits live on the closed inner interval).
#[must_use]
pub fn h_prime(g: &GammaParam, s: f64) -> f64 {
    if s > g.one_minus_gamma() {
        0.0
    } else {
        let d = 1.0 - s;
        1.0 - g.gamma() / (d * d)
    }
}

/// h''(s) = -2 Gamma / (1-s)^3 on [0, 1-Gamma]; 0 above, inner limit at the
/// split.
#[must_use]
pub fn h_second(g: &GammaParam, s: f64) -> f64 {
    if s > g.one_minus_gamma() {
        0.0
    } else {
        let d = 1.0 - s;
        -2.0 * g.gamma() / (d * d * d)
    }
}

/// Value and first two derivatives of the iterate series at one point.
#[derive(Clone, Copy, Debug)]
pub struct SeriesJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    /// Number of series terms summed before the tail dropped below tolerance.
    pub terms: usize,
}

const MAX_TERMS: usize = 400;
const TERM_TOL: f64 = 1e-15;

/// psi_tilde(s) = sum_k h^k(s) with term-wise differentiated companions,
/// for s in [0, 1-Gamma].
///
/// Derivatives use the chain-rule recurrences along the orbit z_k = h^k(s):
/// D_{k+1} = h'(z_k) D_k and S_{k+1} = h''(z_k) D_k^2 + h'(z_k) S_k.
/// Truncation: stop once |z_k|, |D_k|, |S_k| are all below an absolute
/// tolerance; the measured term ratio must stay at most 1/2 (it is in fact
/// at most 1-Gamma on the real interval), otherwise the parameter is outside
/// the contraction range and we refuse to continue.
pub fn psi_tilde_jet(g: &GammaParam, s: f64) -> Result<SeriesJet> {
    let omg = g.one_minus_gamma();
    if !(0.0..=1.0).contains(&s) || s > omg {
        return Err(Error::Domain(format!(
            "psi_tilde: s = {s} outside [0, {omg}]"
        )));
    }
    let mut z = s;
    let mut d = 1.0_f64;
    let mut sec = 0.0_f64;
    let mut value = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let mut terms = 0;
    for _ in 0..MAX_TERMS {
        value += z;
        d1 += d;
        d2 += sec;
        terms += 1;
        if z.abs() < TERM_TOL && d.abs() < TERM_TOL && sec.abs() < TERM_TOL {
            return Ok(SeriesJet { value, d1, d2, terms });
        }
        let hp = h_prime(g, z);
        let hs = h_second(g, z);
        let z_next = h(g, z);
        if z > TERM_TOL {
            let ratio = z_next / z;
            if !(0.0..=0.5).contains(&ratio) {
                return Err(Error::ContractionFailure { ratio });
            }
        }
        sec = hs * d * d + hp * sec;
        d = hp * d;
        z = z_next;
    }
    Err(Error::NoConverge(format!(
        "iterate series did not settle in {MAX_TERMS} terms at s = {s}"
    )))
}

/// psi(s): the iterate series on [0, 1-Gamma], the identity on [1-Gamma, 1].
/// The two branches agree at the split.
pub fn psi(g: &GammaParam, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("psi: s = {s} outside [0, 1]")));
    }
    if s >= g.one_minus_gamma() {
        Ok(s)
    } else {
        Ok(psi_tilde_jet(g, s)?.value)
    }
}

/// psi'(s). The derivative jumps at the split: the inner limit is
/// 1 - (1-Gamma)/Gamma^2, the outer value is 1. Evaluation at exactly
/// s = 1-Gamma returns the outer value by convention.
pub fn psi_prime(g: &GammaParam, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("psi': s = {s} outside [0, 1]")));
    }
    if s >= g.one_minus_gamma() {
        Ok(1.0)
    } else {
        Ok(psi_tilde_jet(g, s)?.d1)
    }
}

/// psi''(s); zero on the outer branch, series value on the inner branch.
pub fn psi_second(g: &GammaParam, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("psi'': s = {s} outside [0, 1]")));
    }
    if s >= g.one_minus_gamma() {
        Ok(0.0)
    } else {
        Ok(psi_tilde_jet(g, s)?.d2)
    }
}
