//! Half-integral machinery and the radial profile of the steady states.
//!
//! The profile phi on [0, 1] solves the Abel-type equation
//!
//! ```text
//! pi (I^{1/2} phi)(s) = psi(s),
//! (I^{1/2} g)(s) = int_0^s g(sigma) / sqrt(s - sigma) dsigma,
//! ```
//!
//! with psi from `funceq`. Writing A = 1 - Gamma, the inversion splits at the
//! seam s = A where psi' jumps:
//!
//! ```text
//! phi(s) = (2/pi^2) sqrt(s) int_0^1 psi'(s (1 - w^2)) dw             (s <= A)
//! phi(s) = (2/pi^2) [ tau + int_tau^{sqrt s} psi'(s - w^2) dw ],
//!          tau = sqrt(s - A)                                          (s >= A)
//! ```
//!
//! Differentiating gives phi' as an endpoint term plus the same integrals
//! with psi'', and on the outer branch the jump of psi' contributes
//! A / (Gamma^2 pi^2 tau). After these substitutions every integrand is
//! smooth with order-one derivatives, so fixed Gauss-Legendre rules evaluate
//! the profile to near machine precision; there is no stored interpolant to
//! go stale.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funceq::{self, GammaParam};
use crate::quad::{gauss_legendre, integrate_with_knots};

const PI: f64 = std::f64::consts::PI;

/// Largest Abel residual accepted by `ProfileTable::build`.
pub const PROFILE_ABEL_TOL: f64 = 1e-6;

/// (I^{1/2} g)(s) with interior singular knots of g. Both endpoints and every
/// knot are sqrt-anchored, which absorbs the kernel singularity at sigma = s
/// and sqrt-type kinks of g.
pub fn abel_half_integral(
    g: &dyn Fn(f64) -> f64,
    s: f64,
    knots: &[f64],
    nodes: usize,
    panels: usize,
) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let mut f = |sigma: f64| g(sigma) / (s - sigma).max(f64::MIN_POSITIVE).sqrt();
    integrate_with_knots(&mut f, 0.0, s, knots, nodes, panels)
}

/// (I^{1/2} g)(s - chi(s)): the half-integral composed with the inner shift.
/// One code path: the composition is literally `abel_half_integral` at the
/// shifted argument h(s) = s - chi(s), which vanishes for s >= 1 - Gamma.
pub fn k_gamma_apply(
    g: &dyn Fn(f64) -> f64,
    gamma: &GammaParam,
    s: f64,
    knots: &[f64],
    nodes: usize,
    panels: usize,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("k_gamma_apply: s = {s} outside [0, 1]")));
    }
    Ok(abel_half_integral(g, funceq::h(gamma, s), knots, nodes, panels))
}

/// Radial profile of the isotropic state: phi_1(s) = 2 sqrt(s) / pi^2.
#[must_use]
pub fn phi_kurth(s: f64) -> f64 {
    2.0 * s.max(0.0).sqrt() / (PI * PI)
}

/// phi_1'(s) = 1 / (pi^2 sqrt(s)).
#[must_use]
pub fn phi_prime_kurth(s: f64) -> f64 {
    1.0 / (PI * PI * s.sqrt())
}

/// Build parameters for profile evaluation. All quadrature is deterministic,
/// so a (gamma, build spec) pair reproduces the evaluator bit-exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBuildSpec {
    /// Gauss-Legendre nodes for the w-integrals in phi and phi'.
    pub w_nodes: usize,
    /// Nodes per sqrt-anchored panel in the Abel residual transform.
    pub abel_nodes: usize,
    /// Panels per segment in the Abel residual transform.
    pub abel_panels: usize,
    /// Graded residual check nodes per branch.
    pub check_nodes: usize,
}

impl Default for ProfileBuildSpec {
    fn default() -> Self {
        ProfileBuildSpec { w_nodes: 48, abel_nodes: 32, abel_panels: 2, check_nodes: 64 }
    }
}

impl ProfileBuildSpec {
    pub fn validate(&self) -> Result<()> {
        if self.w_nodes < 8 || self.abel_nodes < 8 || self.check_nodes < 8 {
            return Err(Error::InvalidParam(
                "profile build spec: all node counts must be at least 8".into(),
            ));
        }
        if self.abel_panels == 0 {
            return Err(Error::InvalidParam("profile build spec: zero panels".into()));
        }
        Ok(())
    }
}

/// Evaluator of phi and phi' for one anisotropy parameter.
#[derive(Clone, Debug)]
pub struct PhiEvaluator {
    gamma: GammaParam,
    spec: ProfileBuildSpec,
    w_rule: Arc<Vec<(f64, f64)>>,
}

impl PhiEvaluator {
    pub fn new(gamma: GammaParam, spec: ProfileBuildSpec) -> Result<Self> {
        spec.validate()?;
        Ok(PhiEvaluator { gamma, spec, w_rule: gauss_legendre(spec.w_nodes) })
    }

    #[must_use]
    pub fn gamma(&self) -> &GammaParam {
        &self.gamma
    }

    #[must_use]
    pub fn build_spec(&self) -> &ProfileBuildSpec {
        &self.spec
    }

    /// Series derivative at a clamped inner argument. Arguments land in
    /// [0, 1-Gamma] up to rounding by construction of every call site.
    fn psi_d1(&self, a: f64) -> f64 {
        let a = a.clamp(0.0, self.gamma.one_minus_gamma());
        funceq::psi_tilde_jet(&self.gamma, a)
            .expect("series jet on clamped inner argument")
            .d1
    }

    fn psi_d2(&self, a: f64) -> f64 {
        let a = a.clamp(0.0, self.gamma.one_minus_gamma());
        funceq::psi_tilde_jet(&self.gamma, a)
            .expect("series jet on clamped inner argument")
            .d2
    }

    /// int_0^1 psi'(s (1 - w^2)) dw.
    fn pin(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for &(x, w) in self.w_rule.iter() {
            let t = 0.5 * (x + 1.0);
            acc += 0.5 * w * self.psi_d1(s * (1.0 - t * t));
        }
        acc
    }

    /// int_0^1 psi''(s (1 - w^2)) dw.
    fn ein(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for &(x, w) in self.w_rule.iter() {
            let t = 0.5 * (x + 1.0);
            acc += 0.5 * w * self.psi_d2(s * (1.0 - t * t));
        }
        acc
    }

    /// int_tau^{sqrt s} psi'(s - w^2) dw with tau = sqrt(s - A).
    fn jout_half(&self, s: f64, tau: f64) -> f64 {
        let hi = s.sqrt();
        if hi <= tau {
            return 0.0;
        }
        let mid = 0.5 * (tau + hi);
        let half = 0.5 * (hi - tau);
        let mut acc = 0.0;
        for &(x, w) in self.w_rule.iter() {
            let t = mid + half * x;
            acc += w * self.psi_d1(s - t * t);
        }
        acc * half
    }

    /// int_tau^{sqrt s} psi''(s - w^2) dw.
    fn kout_half(&self, s: f64, tau: f64) -> f64 {
        let hi = s.sqrt();
        if hi <= tau {
            return 0.0;
        }
        let mid = 0.5 * (tau + hi);
        let half = 0.5 * (hi - tau);
        let mut acc = 0.0;
        for &(x, w) in self.w_rule.iter() {
            let t = mid + half * x;
            acc += w * self.psi_d2(s - t * t);
        }
        acc * half
    }

    /// phi(s) on [0, 1]. Continuous, phi(0) = 0, strictly increasing.
    pub fn phi(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("phi: s = {s} outside [0, 1]")));
        }
        let a = self.gamma.one_minus_gamma();
        let c = 2.0 / (PI * PI);
        if s <= a {
            Ok(c * s.sqrt() * self.pin(s))
        } else {
            let tau = (s - a).sqrt();
            Ok(c * (tau + self.jout_half(s, tau)))
        }
    }

    /// phi'(s) on (0, 1]. Diverges like 1/sqrt(s) at 0 and, for Gamma < 1,
    /// like 1/sqrt(s - A) as s decreases to the seam; at exactly s = A the
    /// finite inner limit is returned, which is the value the steady-state
    /// density formulas need there.
    pub fn phi_prime(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Domain(format!("phi': s = {s} outside (0, 1]")));
        }
        let a = self.gamma.one_minus_gamma();
        let g = self.gamma.gamma();
        let pi2 = PI * PI;
        if s <= a {
            Ok(1.0 / (pi2 * g * s.sqrt()) + 2.0 / pi2 * s.sqrt() * self.ein(s))
        } else {
            let tau = (s - a).sqrt();
            let jump = if a == 0.0 { 0.0 } else { a / (g * g * pi2 * tau) };
            Ok(1.0 / (pi2 * g * s.sqrt()) + 2.0 / pi2 * self.kout_half(s, tau) + jump)
        }
    }

    /// The inner boundary slope l = phi'(A^-), finite for every Gamma < 1 and
    /// strictly increasing as Gamma increases toward 1.
    pub fn l_gamma(&self) -> Result<f64> {
        let a = self.gamma.one_minus_gamma();
        if a == 0.0 {
            return Err(Error::Domain("l_gamma: undefined in the isotropic limit".into()));
        }
        Ok(1.0 / (PI * PI * self.gamma.gamma() * a.sqrt())
            + 2.0 / (PI * PI) * a.sqrt() * self.ein(a))
    }

    /// Two-sided envelope for phi'(s): (lower, upper), branch-dependent.
    pub fn phi_prime_brackets(&self, s: f64) -> Result<(f64, f64)> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Domain(format!("brackets: s = {s} outside (0, 1]")));
        }
        let a = self.gamma.one_minus_gamma();
        let g = self.gamma.gamma();
        let pi2 = PI * PI;
        if s <= a && a > 0.0 {
            let lo = 1.0 / (2.0 * g * pi2 * s.sqrt());
            let hi = 1.0 / (g * pi2 * s.sqrt()) + 128.0 * s.sqrt() / (pi2 * a.cbrt());
            Ok((lo, hi))
        } else {
            let jump = if a == 0.0 { 0.0 } else { a / (g * g * pi2 * (s - a).sqrt()) };
            let lo = jump;
            let hi = (2.0 + 128.0 * a.powf(2.0 / 3.0)) / (pi2 * s.sqrt()) + jump;
            Ok((lo, hi))
        }
    }

    /// Knots for integrals of phi' over [0, 1]: the seam plus a dyadic ladder
    /// above it. Outer-branch integrands vary on the scale s - A ~ A near the
    /// seam, and the geometric segments are self-similar across that layer.
    #[must_use]
    pub fn derivative_knots(&self) -> Vec<f64> {
        let a = self.gamma.one_minus_gamma();
        let mut knots = vec![a];
        let mut s = 2.0 * a;
        while s < 0.5 && s > 0.0 {
            knots.push(s);
            s *= 2.0;
        }
        knots
    }

    /// Total variation int_0^1 |phi'| ds, integrated branchwise. phi' is
    /// positive, so this must reproduce phi(1); the comparison is an
    /// end-to-end consistency check between the two formulas.
    pub fn w11_norm(&self) -> Result<f64> {
        let knots = self.derivative_knots();
        let mut f = |s: f64| self.phi_prime(s).map_or(0.0, f64::abs);
        Ok(integrate_with_knots(
            &mut f,
            0.0,
            1.0,
            &knots,
            self.spec.abel_nodes,
            self.spec.abel_panels,
        ))
    }

    /// sup_i | pi (I^{1/2} phi)(s_i) - psi(s_i) | over graded check nodes.
    pub fn abel_residual(&self) -> Result<f64> {
        let a = self.gamma.one_minus_gamma();
        let n = self.spec.check_nodes;
        let mut worst = 0.0_f64;
        for i in 1..=n {
            let t = i as f64 / n as f64;
            let s = t * t;
            let g = |sigma: f64| self.phi(sigma).unwrap_or(0.0);
            let lhs = PI
                * abel_half_integral(&g, s, &[a], self.spec.abel_nodes, self.spec.abel_panels);
            let rhs = funceq::psi(&self.gamma, s)?;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }

    /// sup_i | (I^{1/2} phi)(s_i) - (I^{1/2} phi)(h(s_i)) - s_i / pi | over
    /// graded check nodes: the equation the profile was constructed to solve,
    /// with the shifted term active only below the seam.
    pub fn target_residual(&self) -> Result<f64> {
        let a = self.gamma.one_minus_gamma();
        let n = self.spec.check_nodes;
        let g = |sigma: f64| self.phi(sigma).unwrap_or(0.0);
        let mut worst = 0.0_f64;
        for i in 1..=n {
            let t = i as f64 / n as f64;
            let s = t * t;
            let direct =
                abel_half_integral(&g, s, &[a], self.spec.abel_nodes, self.spec.abel_panels);
            let shifted = k_gamma_apply(
                &g,
                &self.gamma,
                s,
                &[a],
                self.spec.abel_nodes,
                self.spec.abel_panels,
            )?;
            worst = worst.max((direct - shifted - s / PI).abs());
        }
        Ok(worst)
    }

    /// sup_i | psi(s_i) - psi(h(s_i)) - s_i | over graded inner nodes.
    pub fn functional_residual(&self) -> Result<f64> {
        let a = self.gamma.one_minus_gamma();
        if a == 0.0 {
            return Ok(0.0);
        }
        let n = self.spec.check_nodes;
        let mut worst = 0.0_f64;
        for i in 1..=n {
            let t = i as f64 / n as f64;
            let s = a * t * t;
            let lhs = funceq::psi(&self.gamma, s)?
                - funceq::psi(&self.gamma, funceq::h(&self.gamma, s))?;
            worst = worst.max((lhs - s).abs());
        }
        Ok(worst)
    }
}

/// Distance of phi' from the isotropic profile slope at one point, together
/// with the shape of its proven envelope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointwiseDeviation {
    /// | phi'(s) - 1 / (pi^2 sqrt(s)) |.
    pub deviation: f64,
    /// Envelope with unit constant: (1-G)^{1/6} plus (1-G)/sqrt(s) below the
    /// seam or (1-G)/sqrt(s - (1-G)) above it. The sharp constant is not
    /// pinned analytically; callers calibrate it as max(deviation/envelope)
    /// over a reference sweep.
    pub envelope: f64,
}

impl PhiEvaluator {
    /// Deviation of phi' from the isotropic slope. Undefined exactly at the
    /// seam, where phi' jumps.
    pub fn pointwise_deviation(&self, s: f64) -> Result<PointwiseDeviation> {
        let a = self.gamma.one_minus_gamma();
        if !(s > 0.0 && s < 1.0) || s == a {
            return Err(Error::Domain(format!(
                "pointwise_deviation: s = {s} outside (0, 1) or at the seam"
            )));
        }
        let deviation = (self.phi_prime(s)? - phi_prime_kurth(s)).abs();
        let branch = if s < a { a / s.sqrt() } else { a / (s - a).sqrt() };
        Ok(PointwiseDeviation { deviation, envelope: a.powf(1.0 / 6.0) + branch })
    }
}

/// One exported profile sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub s: f64,
    pub phi: f64,
    pub phi_prime: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    /// sup | pi (I^{1/2} phi) - psi | over the check grid.
    pub abel: f64,
    /// sup | psi - psi(h) - id | over the inner check grid.
    pub functional: f64,
}

/// Serializable profile artifact: graded samples on both branches plus the
/// build parameters needed to reconstruct the evaluator exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub schema_version: u32,
    #[serde(flatten)]
    gamma: GammaParam,
    pub inner: Vec<ProfileRow>,
    pub outer: Vec<ProfileRow>,
    pub build_spec: ProfileBuildSpec,
    pub residuals: ResidualSummary,
}

pub const PROFILE_SCHEMA_VERSION: u32 = 1;
const EXPORT_ROWS: usize = 64;

impl ProfileTable {
    /// Build the profile for one parameter, measure its residuals, and export
    /// graded samples. Fails if the Abel residual exceeds `PROFILE_ABEL_TOL`.
    pub fn build(gamma: GammaParam, spec: ProfileBuildSpec) -> Result<ProfileTable> {
        let ev = PhiEvaluator::new(gamma, spec)?;
        let residuals =
            ResidualSummary { abel: ev.abel_residual()?, functional: ev.functional_residual()? };
        if !(residuals.abel <= PROFILE_ABEL_TOL) {
            return Err(Error::BuildFailure { residual: residuals.abel, tol: PROFILE_ABEL_TOL });
        }
        let a = gamma.one_minus_gamma();
        let mut inner = Vec::new();
        if a > 0.0 {
            // Graded toward s = 0; the seam itself is excluded because the
            // outer branch diverges there.
            for j in 1..=EXPORT_ROWS {
                let t = j as f64 / EXPORT_ROWS as f64;
                let s = a * t * t;
                inner.push(ProfileRow { s, phi: ev.phi(s)?, phi_prime: ev.phi_prime(s)? });
            }
        }
        let mut outer = Vec::new();
        for j in 1..=EXPORT_ROWS {
            let t = j as f64 / EXPORT_ROWS as f64;
            let s = a + (1.0 - a) * t * t;
            outer.push(ProfileRow { s, phi: ev.phi(s)?, phi_prime: ev.phi_prime(s)? });
        }
        Ok(ProfileTable {
            schema_version: PROFILE_SCHEMA_VERSION,
            gamma,
            inner,
            outer,
            build_spec: spec,
            residuals,
        })
    }

    #[must_use]
    pub fn gamma_param(&self) -> &GammaParam {
        &self.gamma
    }

    /// Reconstruct the evaluator. Deterministic quadrature makes the result
    /// behave bit-identically to the one the table was built from.
    pub fn evaluator(&self) -> Result<PhiEvaluator> {
        if self.schema_version != PROFILE_SCHEMA_VERSION {
            return Err(Error::InvalidParam(format!(
                "profile table schema {} unsupported (expected {PROFILE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        PhiEvaluator::new(self.gamma, self.build_spec)
    }
}
