//! Steady states of the spherically symmetric Vlasov-Poisson system built
//! from the anisotropic profile family.
//!
//! Every member depends on the phase point only through the two invariants
//!
//! ```text
//!     l^2 = |x ^ v|^2,        u = l^2 - |x|^2 - |v|^2,
//! ```
//!
//! via f(x, v) = (3 / 4 pi) phi'(u + 1) restricted to l^2 <= Gamma, with phi
//! the profile constructed in `abel`. The central quantitative claim checked
//! here is that each member produces the uniform ball density
//!
//! ```text
//!     rho(r) = 3 / (4 pi)  for r <= 1,        rho(r) = 0  for r > 1,
//! ```
//!
//! which, after integrating the velocity ball in the (p_r, l^2) chart,
//! reduces to a two-branch identity for the half-integral of phi:
//!
//! ```text
//!     rho(r) = 3 / (4 s) * [ (I phi)(s) - (I phi)(h(s)) ],    s = 1 - r^2,
//! ```
//!
//! where (I g)(s) = int_0^s g(y) / sqrt(s - y) dy and h is the shift map of
//! `funceq` (zero for s >= 1 - Gamma). The module also computes the total
//! mass by two independent reductions, the L^1 distance to the isotropic
//! member through exact phase-space weights, and classification of phase
//! points against the two shells where the distribution degenerates.

use std::f64::consts::PI;

use crate::abel::{self, PhiEvaluator, ProfileBuildSpec, ProfileTable};
use crate::error::{Error, Result};
use crate::funceq::{self, GammaParam};
use crate::geom::PhasePoint;
use crate::kurth::{self, RHO_BALL};
use crate::quad::{integrate_with_knots, QuadratureSpec};

/// Classification of a phase point relative to the support of f and its two
/// degenerate shells, measured by the invariant w = |x|^2 + |v|^2 - l^2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointClass {
    /// Not in the support and not near either shell.
    Outside,
    /// Strictly inside the support, away from both shells.
    Interior,
    /// Within tolerance of the support edge w = 1, where f blows up.
    NearEdge,
    /// Within tolerance of the anisotropy seam w = Gamma, on the w >= Gamma
    /// side where f tends to the finite limit (3 / 4 pi) l_Gamma.
    NearSeamAbove,
    /// Within tolerance of the seam on the w < Gamma side, where f blows up.
    NearSeamBelow,
}

/// Classify a phase point against the support of the member with the given
/// anisotropy parameter. The tolerance is a half-width in the w variable and
/// must leave the two shells separated, so it is rejected unless
/// 0 < tol < (1 - Gamma) / 2; in particular no tolerance is admissible for
/// the isotropic member, whose two shells coincide.
pub fn classify_point(p: &PhasePoint, gamma: &GammaParam, tol: f64) -> Result<PointClass> {
    let a = gamma.one_minus_gamma();
    if !(tol > 0.0 && tol < 0.5 * a) {
        return Err(Error::InvalidParam(format!(
            "classification tolerance {tol} must lie in (0, {})",
            0.5 * a
        )));
    }
    let g = gamma.gamma();
    let l2 = p.ell_squared();
    let w = p.x.norm_squared() + p.v.norm_squared() - l2;
    if l2 > g + tol {
        return Ok(PointClass::Outside);
    }
    if (w - 1.0).abs() <= tol {
        return Ok(PointClass::NearEdge);
    }
    if (w - g).abs() <= tol {
        return Ok(if w >= g { PointClass::NearSeamAbove } else { PointClass::NearSeamBelow });
    }
    if l2 <= g && (0.0..=1.0).contains(&w) {
        Ok(PointClass::Interior)
    } else {
        Ok(PointClass::Outside)
    }
}

/// The two shells where an anisotropic member degenerates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularSet {
    /// [w = 1, l^2 <= Gamma]: the edge of the support, f -> infinity.
    SupportEdge,
    /// [w = Gamma, l^2 <= Gamma]: the anisotropy seam, f jumps between the
    /// finite limit (3 / 4 pi) l_Gamma and a blow-up.
    AnisotropySeam,
}

impl SingularSet {
    /// Gap of the shell's defining value at a phase point: |w - 1| for the
    /// support edge, |w - Gamma| for the seam, and infinity when the point
    /// fails the angular gate l^2 <= Gamma. This is a proxy that vanishes
    /// exactly on the shell and grows monotonically with the defining
    /// function, not a Euclidean distance.
    #[must_use]
    pub fn value_gap(&self, p: &PhasePoint, gamma: &GammaParam) -> f64 {
        let l2 = p.ell_squared();
        if l2 > gamma.gamma() {
            return f64::INFINITY;
        }
        let w = p.x.norm_squared() + p.v.norm_squared() - l2;
        match self {
            SingularSet::SupportEdge => (w - 1.0).abs(),
            SingularSet::AnisotropySeam => (w - gamma.gamma()).abs(),
        }
    }
}

/// Zero-extended antiderivative in the u variable: phi(u + 1) clamped to
/// [0, phi(1)]. Non-decreasing, zero at and below u = -1, flat above u = 0.
pub fn big_phi(ev: &PhiEvaluator, u: f64) -> Result<f64> {
    if u <= -1.0 {
        return Ok(0.0);
    }
    ev.phi((u + 1.0).min(1.0))
}

/// The one-dimensional weight of the ansatz: (3 / 4 pi) phi'(u + 1) on
/// (-1, 0], zero elsewhere. Integrable; its integral over [-1, 0] is
/// (3 / 4 pi) phi(1).
pub fn q_weight(ev: &PhiEvaluator, u: f64) -> Result<f64> {
    let sigma = u + 1.0;
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Ok(0.0);
    }
    Ok(3.0 / (4.0 * PI) * ev.phi_prime(sigma)?)
}

/// An anisotropic member backed by a profile table and its evaluator.
#[derive(Clone, Debug)]
pub struct ProfileState {
    table: ProfileTable,
    eval: PhiEvaluator,
}

impl ProfileState {
    pub fn table(&self) -> &ProfileTable {
        &self.table
    }

    pub fn evaluator(&self) -> &PhiEvaluator {
        &self.eval
    }
}

/// A steady state of the family, or a convex combination of members.
#[derive(Clone, Debug)]
pub enum SteadyState {
    /// The isotropic member, evaluated in closed form.
    Kurth,
    /// An anisotropic member with parameter Gamma < 1 (or the isotropic one
    /// rebuilt through the quadrature route, for cross-checks).
    Anisotropic(ProfileState),
    /// Convex combination; weights are validated at construction.
    Mixture(Vec<(f64, SteadyState)>),
}

impl SteadyState {
    pub fn kurth() -> Self {
        SteadyState::Kurth
    }

    pub fn from_profile(table: ProfileTable) -> Result<Self> {
        let eval = table.evaluator()?;
        Ok(SteadyState::Anisotropic(ProfileState { table, eval }))
    }

    /// Convex combination. Weights must be finite, lie in [0, 1], and sum to
    /// one within 1e-12.
    pub fn mixture(components: Vec<(f64, SteadyState)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParam("mixture: no components".into()));
        }
        let mut total = 0.0;
        for (w, _) in &components {
            if !(w.is_finite() && (0.0..=1.0).contains(w)) {
                return Err(Error::InvalidParam(format!("mixture weight {w} outside [0, 1]")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(SteadyState::Mixture(components))
    }

    /// The profile evaluator, for the anisotropic kind only.
    pub fn profile(&self) -> Option<&PhiEvaluator> {
        match self {
            SteadyState::Anisotropic(ps) => Some(&ps.eval),
            _ => None,
        }
    }

    /// Anisotropy parameters of all leaves, in component order.
    pub fn gammas(&self) -> Vec<GammaParam> {
        match self {
            SteadyState::Kurth => vec![GammaParam::isotropic()],
            SteadyState::Anisotropic(ps) => vec![*ps.eval.gamma()],
            SteadyState::Mixture(cs) => cs.iter().flat_map(|(_, s)| s.gammas()).collect(),
        }
    }

    /// Interior seam locations in the u variable (u = -Gamma for each
    /// anisotropic leaf), for use as integration knots. The isotropic seam
    /// coincides with the support endpoint u = -1 and is omitted.
    pub fn u_knots(&self) -> Vec<f64> {
        let mut ks: Vec<f64> = self
            .gammas()
            .iter()
            .filter(|g| !g.is_isotropic())
            .map(|g| -g.gamma())
            .collect();
        ks.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite knots"));
        ks.dedup();
        ks
    }

    /// Evaluate f at a phase point.
    #[must_use]
    pub fn f(&self, p: &PhasePoint) -> f64 {
        match self {
            SteadyState::Kurth => kurth::f_kurth(p),
            SteadyState::Anisotropic(_) => {
                let l2 = p.ell_squared();
                self.f_of_invariants(l2 - p.x.norm_squared() - p.v.norm_squared(), l2)
            }
            SteadyState::Mixture(cs) => cs.iter().map(|(w, s)| w * s.f(p)).sum(),
        }
    }

    /// Evaluate f from the invariants alone. On the anisotropy seam the
    /// returned value is the finite limit from the w >= Gamma side; on the
    /// support edge u = -1 the zero extension is used.
    #[must_use]
    pub fn f_of_invariants(&self, u: f64, ell2: f64) -> f64 {
        match self {
            SteadyState::Kurth => {
                if ell2 >= 1.0 {
                    return 0.0;
                }
                let bracket = 1.0 + u;
                if bracket > 0.0 {
                    3.0 / (4.0 * PI * PI * PI) / bracket.sqrt()
                } else {
                    0.0
                }
            }
            SteadyState::Anisotropic(ps) => {
                if ell2 > ps.eval.gamma().gamma() {
                    return 0.0;
                }
                let sigma = u + 1.0;
                if !(sigma > 0.0 && sigma <= 1.0) {
                    return 0.0;
                }
                3.0 / (4.0 * PI)
                    * ps.eval.phi_prime(sigma).expect("profile slope inside the unit interval")
            }
            SteadyState::Mixture(cs) => cs.iter().map(|(w, s)| w * s.f_of_invariants(u, ell2)).sum(),
        }
    }

    /// Spatial density at radius r. For anisotropic members this evaluates
    /// the half-integral identity; the theorem under test is that the result
    /// is 3 / (4 pi) on the closed unit ball.
    pub fn rho(&self, r: f64, spec: &QuadratureSpec) -> Result<f64> {
        match self {
            SteadyState::Kurth => Ok(if r <= 1.0 { RHO_BALL } else { 0.0 }),
            SteadyState::Anisotropic(ps) => rho_profile(&ps.eval, r, spec),
            SteadyState::Mixture(cs) => {
                let mut acc = 0.0;
                for (w, s) in cs {
                    acc += w * s.rho(r, spec)?;
                }
                Ok(acc)
            }
        }
    }

    /// Total mass through the reduced (r, p_r, u) chart: the u integration
    /// collapses by the fundamental theorem, leaving a double integral of
    /// profile values. Independent of `total_mass_via_density`.
    pub fn total_mass(&self, spec: &QuadratureSpec) -> Result<f64> {
        spec.validate()?;
        match self {
            SteadyState::Kurth => {
                Ok(reduced_mass(&abel::phi_kurth, 1.0, 0.0, spec))
            }
            SteadyState::Anisotropic(ps) => {
                let ev = &ps.eval;
                let phi = |y: f64| {
                    ev.phi(y.max(0.0)).expect("profile evaluation inside the unit interval")
                };
                Ok(reduced_mass(&phi, ev.gamma().gamma(), ev.gamma().one_minus_gamma(), spec))
            }
            SteadyState::Mixture(cs) => {
                let mut acc = 0.0;
                for (w, s) in cs {
                    acc += w * s.total_mass(spec)?;
                }
                Ok(acc)
            }
        }
    }

    /// Total mass as 4 pi int_0^1 r^2 rho(r) dr with rho from the density
    /// route. Cross-check for `total_mass`.
    pub fn total_mass_via_density(&self, spec: &QuadratureSpec) -> Result<f64> {
        spec.validate()?;
        let mut bad = None;
        let mut fr = |r: f64| match self.rho(r, spec) {
            Ok(v) => r * r * v,
            Err(e) => {
                bad = Some(e);
                0.0
            }
        };
        let knots: Vec<f64> = self.gammas().iter().map(|g| g.gamma().sqrt()).collect();
        let m =
            4.0 * PI * integrate_with_knots(&mut fr, 0.0, 1.0, &knots, spec.radial_nodes, 2);
        match bad {
            Some(e) => Err(e),
            None => Ok(m),
        }
    }

    /// L^1 distance to the isotropic member over all of phase space,
    /// composed from one-dimensional slope gaps and exact phase-space
    /// weights; see `slab_weight` and `cutoff_weight`.
    pub fn l1_distance_to_kurth(&self, spec: &QuadratureSpec) -> Result<f64> {
        match self {
            SteadyState::Kurth => Ok(0.0),
            SteadyState::Anisotropic(ps) => l1_profile(&ps.eval, spec),
            SteadyState::Mixture(_) => Err(Error::InvalidParam(
                "l1 distance is defined for single members, not mixtures".into(),
            )),
        }
    }

    /// Radial derivative of the induced gravitational potential. Every
    /// member generates the uniform ball density, so the field is fixed
    /// across the family.
    #[must_use]
    pub fn du_dr(&self, r: f64) -> f64 {
        kurth::scaled_du_dr(1.0, r)
    }
}

const DENSITY_PANELS: usize = 2;

/// Density identity for a profile member. The two half-integrals share the
/// seam ladder knots of the evaluator; their difference divided by s is the
/// quantity the construction pins to 3 / (4 pi).
fn rho_profile(ev: &PhiEvaluator, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if r < 0.0 {
        return Err(Error::Domain(format!("rho: r = {r} must be nonnegative")));
    }
    if r > 1.0 {
        return Ok(0.0);
    }
    if r == 1.0 {
        // Boundary value of the closed-ball convention; the formula below is
        // 0/0 at s = 0.
        return Ok(RHO_BALL);
    }
    let s = (1.0 - r) * (1.0 + r);
    let phi = |y: f64| ev.phi(y).expect("profile evaluation inside the unit interval");
    let knots = ev.derivative_knots();
    let i_s = abel::abel_half_integral(&phi, s, &knots, spec.u_nodes, DENSITY_PANELS);
    let hs = funceq::h(ev.gamma(), s);
    let i_h = if hs > 0.0 {
        abel::abel_half_integral(&phi, hs, &knots, spec.u_nodes, DENSITY_PANELS)
    } else {
        0.0
    };
    Ok(3.0 / (4.0 * s) * (i_s - i_h))
}

/// Reduced-chart mass. For each radius the u integration has already been
/// collapsed against the profile:
///
/// ```text
///     M = 3 pi int_0^1 r^2 / (1 - r^2) * P(r) dr,
///     P(r) = 2 int_0^{sqrt s} phi(s - p^2) dp
///          - 2 int_0^{sqrt t} phi(t - p^2) dp,     t = s (r^2 - Gamma) / r^2,
/// ```
///
/// with s = 1 - r^2 and the second term present only for r > sqrt(Gamma).
/// Its argument t never exceeds (1 - Gamma)^2 / 4, so that leg stays on the
/// inner profile branch.
fn reduced_mass(phi: &dyn Fn(f64) -> f64, gamma: f64, a: f64, spec: &QuadratureSpec) -> f64 {
    let rg = gamma.sqrt();
    let mut fr = |r: f64| {
        let s = (1.0 - r) * (1.0 + r);
        let mut g1 = |p: f64| phi((s - p * p).max(0.0));
        let kn: Vec<f64> = if s > a { vec![(s - a).sqrt()] } else { Vec::new() };
        let t1 = 2.0 * integrate_with_knots(&mut g1, 0.0, s.sqrt(), &kn, spec.pr_nodes, 1);
        let t2 = if r > rg {
            let top = s * (r * r - gamma) / (r * r);
            let mut g2 = |p: f64| phi((top - p * p).max(0.0));
            2.0 * integrate_with_knots(&mut g2, 0.0, top.sqrt(), &[], spec.pr_nodes, 1)
        } else {
            0.0
        };
        r * r / s * (t1 - t2)
    };
    3.0 * PI * integrate_with_knots(&mut fr, 0.0, 1.0, &[rg], spec.radial_nodes, 2)
}

/// Phase-space weight of the profile argument: pairing a slope g against
/// `slab_weight` integrates g over the full support,
///
/// ```text
///     int int_{supp f_1} g(1 - r^2 - p^2 - l^2 (1 - r^2) / r^2) dx dv
///         = int_0^1 g(sigma) V(sigma) dsigma.
/// ```
///
/// The double integral in (r, p_r) underneath collapses to the closed form
/// V(sigma) = (3 pi^2 / 2) (1 - sqrt(sigma))^2.
#[must_use]
pub fn slab_weight(sigma: f64) -> f64 {
    let d = 1.0 - sigma.max(0.0).sqrt();
    1.5 * PI * PI * d * d
}

/// Weight of the region cut away by the angular gate l^2 <= Gamma, as a
/// function of the profile argument sigma. Supported on
/// [0, (1 - sqrt(Gamma))^2] with the closed form
///
/// ```text
///     W(sigma) = 3 pi^2 ( (1 - Gamma + sigma) / 2 - sqrt(sigma) ),
/// ```
///
/// which vanishes exactly at the support endpoint. On its support,
/// slab_weight - cutoff_weight = (3 pi^2 / 2) Gamma identically.
#[must_use]
pub fn cutoff_weight(sigma: f64, gamma: &GammaParam) -> f64 {
    let edge = 1.0 - gamma.gamma().sqrt();
    if sigma >= edge * edge || sigma < 0.0 {
        return 0.0;
    }
    3.0 * PI * PI * (0.5 * (gamma.one_minus_gamma() + sigma) - sigma.sqrt())
}

/// Locate a sign change of g on (lo, hi) by bisection, or None when the
/// endpoint signs agree.
fn sign_change(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut flo = g(lo);
    let fhi = g(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fm = g(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// L^1 distance of a profile member to the isotropic one. In the invariant
/// chart the integrand is one-dimensional:
///
/// ```text
///     || f - f_1 ||_1 = int_0^1 [ |phi' - phi_1'|(sigma) (V - W)(sigma)
///                               + phi_1'(sigma) W(sigma) ] dsigma,
/// ```
///
/// the first term over the common support and the second over the sliver
/// Gamma < l^2 <= 1 where only the isotropic member lives. Knots: the seam
/// with its dyadic ladder on both sides, the cutoff-weight endpoint, and the
/// interior zero of the slope gap.
fn l1_profile(ev: &PhiEvaluator, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    let g = ev.gamma();
    let a = g.one_minus_gamma();
    let edge = 1.0 - g.gamma().sqrt();
    let w_edge = edge * edge;
    let gap = |sigma: f64| {
        ev.phi_prime(sigma).expect("profile slope inside the unit interval")
            - abel::phi_prime_kurth(sigma)
    };
    let mut knots = ev.derivative_knots();
    if a > 0.0 {
        knots.push(w_edge);
        // Descending ladder between the cutoff endpoint and the seam, so the
        // 1/sqrt(sigma) factor is resolved across its decades.
        let mut t = 0.5 * a;
        while t > 4.0 * w_edge {
            knots.push(t);
            t *= 0.5;
        }
        // The slope gap starts positive at 0+ and ends negative at the seam;
        // its interior zero is a kink of the absolute value.
        if let Some(z) = sign_change(&gap, 1e-9 * a, a * (1.0 - 1e-9)) {
            knots.push(z);
        }
    }
    let mut f = |sigma: f64| {
        let w = cutoff_weight(sigma, g);
        gap(sigma).abs() * (slab_weight(sigma) - w) + abel::phi_prime_kurth(sigma) * w
    };
    Ok(integrate_with_knots(&mut f, 0.0, 1.0, &knots, spec.u_nodes, 1))
}

/// One row of a density sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityRow {
    pub gamma: f64,
    pub r: f64,
    pub rho: f64,
    /// rho scaled so the expected in-ball value is 1.
    pub rho_normalized: f64,
    /// |rho_normalized - expected|, with expected 1 on [0, 1] and 0 outside.
    pub abs_error: f64,
}

/// One row of an L^1 bifurcation sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L1Row {
    pub gamma: f64,
    pub one_minus_gamma: f64,
    pub l1_distance: f64,
    /// l1_distance / (1 - Gamma)^{1/6}; the claimed convergence rate has
    /// this bounded across a sweep.
    pub ratio_to_rate: f64,
}

/// Radii for a density sweep: n - 2 evenly spaced values below 0.99, one
/// radius very close to the ball edge, and the support seam sqrt(Gamma).
#[must_use]
pub fn density_radii(gamma: &GammaParam, n: usize) -> Vec<f64> {
    assert!(n >= 4, "density sweep needs at least 4 radii");
    let m = n - 2;
    let mut rs: Vec<f64> = (0..m).map(|j| 0.98 * j as f64 / m as f64).collect();
    rs.push(0.9999);
    rs.push(gamma.gamma().sqrt());
    rs.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite radii"));
    rs.dedup();
    rs
}

/// Density sweep for a single member (mixtures are rejected, since a row
/// carries one Gamma).
pub fn density_sweep(
    state: &SteadyState,
    radii: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<DensityRow>> {
    if matches!(state, SteadyState::Mixture(_)) {
        return Err(Error::InvalidParam("density sweep expects a single member".into()));
    }
    let gamma = state.gammas()[0].gamma();
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let rho = state.rho(r, spec)?;
        let rho_normalized = rho / RHO_BALL;
        let expected = if r <= 1.0 { 1.0 } else { 0.0 };
        rows.push(DensityRow {
            gamma,
            r,
            rho,
            rho_normalized,
            abs_error: (rho_normalized - expected).abs(),
        });
    }
    Ok(rows)
}

/// L^1 distances for Gamma = 1 - 2^{-k}, k = kmin..=kmax.
pub fn l1_sweep(
    kmin: u32,
    kmax: u32,
    build: ProfileBuildSpec,
    spec: &QuadratureSpec,
) -> Result<Vec<L1Row>> {
    if kmin > kmax {
        return Err(Error::InvalidParam(format!("empty sweep: kmin {kmin} > kmax {kmax}")));
    }
    let mut rows = Vec::with_capacity((kmax - kmin + 1) as usize);
    for k in kmin..=kmax {
        let gamma = GammaParam::from_exponent(k)?;
        let ev = PhiEvaluator::new(gamma, build)?;
        let l1 = l1_profile(&ev, spec)?;
        let a = gamma.one_minus_gamma();
        rows.push(L1Row {
            gamma: gamma.gamma(),
            one_minus_gamma: a,
            l1_distance: l1,
            ratio_to_rate: l1 / a.powf(1.0 / 6.0),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::reduction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn build_state(k: u32) -> SteadyState {
        let table = ProfileTable::build(
            GammaParam::from_exponent(k).unwrap(),
            ProfileBuildSpec::default(),
        )
        .unwrap();
        SteadyState::from_profile(table).unwrap()
    }

    fn iso_state() -> SteadyState {
        let table =
            ProfileTable::build(GammaParam::isotropic(), ProfileBuildSpec::default()).unwrap();
        SteadyState::from_profile(table).unwrap()
    }

    /// Point at radius 1/2 with prescribed invariants w and l^2; needs
    /// w >= 1/4 + 3 l^2.
    fn point_with(w: f64, l2: f64) -> PhasePoint {
        let r = 0.5;
        let vx = l2.sqrt() / r;
        let vz2 = w - r * r - vx * vx + l2;
        assert!(vz2 >= 0.0, "infeasible invariants");
        PhasePoint::new(Vec3::new(0.0, 0.0, r), Vec3::new(vx, 0.0, vz2.sqrt()))
    }

    #[test]
    fn mixture_weights_are_validated() {
        assert!(SteadyState::mixture(vec![]).is_err());
        assert!(SteadyState::mixture(vec![(0.5, SteadyState::kurth())]).is_err());
        assert!(SteadyState::mixture(vec![(-0.1, SteadyState::kurth()), (1.1, SteadyState::kurth())])
            .is_err());
        assert!(SteadyState::mixture(vec![
            (0.25, SteadyState::kurth()),
            (0.75, SteadyState::kurth())
        ])
        .is_ok());
    }

    #[test]
    fn kurth_invariant_form_matches_direct_evaluation() {
        let st = SteadyState::kurth();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let p = PhasePoint::new(
                Vec3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)),
                Vec3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)),
            );
            let l2 = p.ell_squared();
            let u = l2 - p.x.norm_squared() - p.v.norm_squared();
            let direct = st.f(&p);
            let via_invariants = st.f_of_invariants(u, l2);
            // The two routes sum the same invariants in different orders.
            assert!(
                (direct - via_invariants).abs() <= 1e-12 * direct.max(via_invariants),
                "{direct} vs {via_invariants}"
            );
        }
    }

    #[test]
    fn quadrature_route_at_gamma_one_reproduces_the_closed_forms() {
        let st = iso_state();
        let spec = QuadratureSpec::default();
        // f agrees with the closed-form member on a random support sample.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        for _ in 0..4000 {
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let p = PhasePoint::new(x, v);
            let reference = kurth::f_kurth(&p);
            if reference == 0.0 {
                assert_eq!(st.f(&p), 0.0);
                continue;
            }
            hits += 1;
            let got = st.f(&p);
            assert!(
                (got - reference).abs() <= 1e-12 * reference,
                "f mismatch at {p:?}: {got} vs {reference}"
            );
        }
        assert!(hits > 300, "sample missed the support: {hits}");
        // Density and mass through the quadrature machinery.
        for r in [0.0, 0.3, 0.95] {
            let rho = st.rho(r, &spec).unwrap();
            assert!((rho / RHO_BALL - 1.0).abs() < 1e-10, "r={r}: {rho}");
        }
        let m = st.total_mass(&spec).unwrap();
        assert!((m - 1.0).abs() < 1e-10, "mass {m}");
        let l1 = st.l1_distance_to_kurth(&spec).unwrap();
        assert!(l1.abs() < 1e-12, "l1 {l1}");
    }

    #[test]
    fn density_is_uniform_on_the_ball() {
        let st = build_state(12);
        let spec = QuadratureSpec::default();
        let g = st.gammas()[0].gamma();
        let seam = g.sqrt();
        for r in [0.2, seam, 0.99, 0.9999] {
            let rho = st.rho(r, &spec).unwrap();
            assert!((rho / RHO_BALL - 1.0).abs() < 1e-6, "r={r}: {}", rho / RHO_BALL - 1.0);
        }
        assert_eq!(st.rho(1.0, &spec).unwrap(), RHO_BALL);
        assert_eq!(st.rho(1.1, &spec).unwrap(), 0.0);
    }

    #[test]
    fn density_agrees_with_the_velocity_integral() {
        let st = build_state(12);
        let gamma = st.gammas()[0];
        let g = gamma.gamma();
        let a = gamma.one_minus_gamma();
        let spec = QuadratureSpec { pr_nodes: 32, u_nodes: 32, ..Default::default() };
        // Radii straddling the support seam sqrt(Gamma), plus a generic one.
        for r in [0.5, (g * (1.0 - 2e-4)).sqrt(), (g * (1.0 + 2e-4)).sqrt()] {
            let s = (1.0 - r) * (1.0 + r);
            let scale = (1.0 - r * r) / (r * r);
            let f = |p_r: f64, l2: f64| {
                st.f_of_invariants(-(r * r) - p_r * p_r - l2 * scale, l2)
            };
            let ell2_knots = |p_r: f64| {
                // Profile argument hits 0, the seam, and the angular cutoff.
                vec![(s - p_r * p_r) / scale, (s - p_r * p_r - a) / scale, g]
            };
            let gbar = reduction::gamma_bar(r, g).unwrap();
            let mut pk = vec![0.0, s.sqrt(), -(s.sqrt())];
            if gbar < 1.0 {
                pk.push((1.0 - gbar).sqrt());
                pk.push(-((1.0 - gbar).sqrt()));
            }
            let direct =
                reduction::velocity_integral_symmetric(&f, r, 1.0, &ell2_knots, &pk, &spec)
                    .unwrap();
            let branch = st.rho(r, &spec).unwrap();
            assert!(
                (direct - branch).abs() < 1e-5 * RHO_BALL,
                "r={r}: velocity {direct} vs branch {branch}"
            );
        }
    }

    #[test]
    fn mass_is_one_by_two_routes() {
        let spec = QuadratureSpec::default();
        let kurth_mass = SteadyState::kurth().total_mass(&spec).unwrap();
        assert!((kurth_mass - 1.0).abs() < 1e-12, "kurth reduced mass {kurth_mass}");
        let st = build_state(12);
        let m_reduced = st.total_mass(&spec).unwrap();
        let m_density = st.total_mass_via_density(&spec).unwrap();
        assert!((m_reduced - 1.0).abs() < 1e-5, "reduced route {m_reduced}");
        assert!((m_density - 1.0).abs() < 1e-5, "density route {m_density}");
        // Crude integrable-ansatz bound: M <= 4.5 pi^2 phi(1).
        let cap = 4.5 * PI * PI * st.profile().unwrap().phi(1.0).unwrap();
        assert!(m_reduced <= cap);
    }

    #[test]
    fn l1_weights_match_their_integral_definitions() {
        let spec = QuadratureSpec::default();
        let gamma = GammaParam::from_exponent(12).unwrap();
        let g = gamma.gamma();
        // slab_weight against the defining (r, p) double integral.
        for sigma in [0.04_f64, 0.5, 0.9] {
            let hi = (1.0 - sigma).sqrt();
            let mut fr = |r: f64| {
                r * r / ((1.0 - r) * (1.0 + r)) * (1.0 - sigma - r * r).max(0.0).sqrt()
            };
            let direct = 6.0 * PI * integrate_with_knots(&mut fr, 0.0, hi, &[], 32, 2);
            assert!(
                (direct - slab_weight(sigma)).abs() < 1e-10,
                "sigma={sigma}: {direct} vs {}",
                slab_weight(sigma)
            );
        }
        // cutoff_weight likewise. In the variable x = r^2 the defining
        // integral is 3 pi int sqrt((x_hi - x)(x - x_lo)) / (1 - x) dx over
        // the window where the angular gate bites; shifted to t = x_hi - x it
        // has a near-pole of depth 1 - x_hi, resolved by a dyadic ladder.
        let edge = (1.0 - g.sqrt()) * (1.0 - g.sqrt());
        for sigma in [0.25 * edge, 0.7 * edge] {
            let b = 1.0 - sigma + g;
            let disc = ((edge - sigma) * (b + 2.0 * g.sqrt())).sqrt();
            let (x_lo, x_hi) = (0.5 * (b - disc), 0.5 * (b + disc));
            let (width, depth) = (x_hi - x_lo, 1.0 - x_hi);
            let mut ft = |t: f64| (t * (width - t)).max(0.0).sqrt() / (depth + t);
            let mut ladder = Vec::new();
            let mut t = depth;
            while t < width {
                ladder.push(t);
                t *= 2.0;
            }
            let direct = 3.0 * PI * integrate_with_knots(&mut ft, 0.0, width, &ladder, 48, 2);
            let closed = cutoff_weight(sigma, &gamma);
            assert!((direct - closed).abs() < 1e-9 * closed, "sigma={sigma}: {direct} vs {closed}");
        }
        assert_eq!(cutoff_weight(edge, &gamma), 0.0);
        // On the cutoff support the two weights differ by a constant.
        let diff = slab_weight(0.5 * edge) - cutoff_weight(0.5 * edge, &gamma);
        assert!((diff - 1.5 * PI * PI * g).abs() < 1e-12);
        // Pairing the isotropic slope with the slab weight gives the mass.
        let mut f = |sigma: f64| abel::phi_prime_kurth(sigma) * slab_weight(sigma);
        let one = integrate_with_knots(&mut f, 0.0, 1.0, &[], spec.u_nodes, 2);
        assert!((one - 1.0).abs() < 1e-10, "{one}");
    }

    #[test]
    fn l1_distance_shrinks_along_the_family() {
        let spec = QuadratureSpec::default();
        let rows = l1_sweep(12, 16, ProfileBuildSpec::default(), &spec).unwrap();
        assert_eq!(rows.len(), 5);
        for pair in rows.windows(2) {
            assert!(pair[0].l1_distance > pair[1].l1_distance, "{pair:?}");
        }
        for row in &rows {
            assert!(row.l1_distance > 0.0);
            assert!(row.ratio_to_rate.is_finite());
        }
        assert_eq!(SteadyState::kurth().l1_distance_to_kurth(&spec).unwrap(), 0.0);
    }

    #[test]
    fn classification_follows_the_invariant_bands() {
        let gamma = GammaParam::from_exponent(12).unwrap();
        let g = gamma.gamma();
        let a = gamma.one_minus_gamma();
        let tol = a / 8.0;
        let l2 = 0.01;
        assert_eq!(
            classify_point(&point_with(g + tol / 2.0, l2), &gamma, tol).unwrap(),
            PointClass::NearSeamAbove
        );
        assert_eq!(
            classify_point(&point_with(g - tol / 2.0, l2), &gamma, tol).unwrap(),
            PointClass::NearSeamBelow
        );
        assert_eq!(
            classify_point(&point_with(1.0 - tol / 2.0, l2), &gamma, tol).unwrap(),
            PointClass::NearEdge
        );
        assert_eq!(
            classify_point(&point_with(0.5, l2), &gamma, tol).unwrap(),
            PointClass::Interior
        );
        // Angular gate: a large l^2 is outside no matter the energy.
        let p = point_with(0.5 + 3.0 * (g + 0.002) - 3.0 * l2, g + 0.002);
        assert!(p.ell_squared() > g + tol);
        assert_eq!(classify_point(&p, &gamma, tol).unwrap(), PointClass::Outside);
        assert!(classify_point(&point_with(0.5, l2), &gamma, a).is_err());
        assert!(classify_point(&point_with(0.5, l2), &GammaParam::isotropic(), 1e-8).is_err());
    }

    #[test]
    fn seam_limits_are_one_sided() {
        let st = build_state(12);
        let gamma = st.gammas()[0];
        let g = gamma.gamma();
        let limit = 3.0 / (4.0 * PI) * st.profile().unwrap().l_gamma().unwrap();
        // From above in w the value converges to the finite seam limit.
        let above = st.f(&point_with(g + 1e-12, 0.01));
        assert!((above - limit).abs() < 1e-4 * limit, "{above} vs {limit}");
        // At the seam the convention picks the same side.
        let at = st.f(&point_with(g, 0.01));
        assert!((at - limit).abs() < 1e-9 * limit);
        // From below in w the values blow up; the divergent term overtakes
        // the seam limit only within a (1 - Gamma)^3 layer, so probe exact
        // power-of-two offsets in the profile argument.
        let a = gamma.one_minus_gamma();
        let ev = st.profile().unwrap();
        let mut prev = 0.0;
        for j in [8, 16, 24, 32, 40] {
            let sigma = a * (1.0 + 2.0_f64.powi(-j));
            let val = 3.0 / (4.0 * PI) * ev.phi_prime(sigma).unwrap();
            assert!(val > prev, "no blow-up at offset 2^-{j}");
            prev = val;
        }
        assert!(prev > 100.0 * limit, "{prev} vs limit {limit}");
    }

    #[test]
    fn antiderivative_and_weight_are_consistent() {
        let st = build_state(12);
        let ev = st.profile().unwrap();
        assert_eq!(big_phi(ev, -1.0).unwrap(), 0.0);
        assert_eq!(big_phi(ev, -1.5).unwrap(), 0.0);
        let top = ev.phi(1.0).unwrap();
        assert_eq!(big_phi(ev, 0.0).unwrap(), top);
        assert_eq!(big_phi(ev, 0.5).unwrap(), top);
        let mut prev = -1.0;
        for j in 0..=40 {
            let u = -1.0 + j as f64 / 40.0;
            let v = big_phi(ev, u).unwrap();
            assert!(v >= prev, "not monotone at u={u}");
            prev = v;
        }
        // The weight integrates to (3 / 4 pi) phi(1) over its support.
        let mut knots: Vec<f64> =
            ev.derivative_knots().iter().map(|s| s - 1.0).collect();
        knots.push(-gamma_of(ev));
        let mut q = |u: f64| q_weight(ev, u).unwrap();
        let total = integrate_with_knots(&mut q, -1.0, 0.0, &knots, 32, 2);
        let expect = 3.0 / (4.0 * PI) * top;
        assert!((total - expect).abs() < 1e-8 * expect, "{total} vs {expect}");
        assert_eq!(q_weight(ev, -1.0).unwrap(), 0.0);
        assert_eq!(q_weight(ev, 0.5).unwrap(), 0.0);
    }

    fn gamma_of(ev: &PhiEvaluator) -> f64 {
        ev.gamma().gamma()
    }

    #[test]
    fn mixtures_combine_linearly() {
        let spec = QuadratureSpec::default();
        let st12 = build_state(12);
        let single_f = {
            let p = point_with(0.5, 0.01);
            st12.f(&p)
        };
        let mix = SteadyState::mixture(vec![(0.3, SteadyState::kurth()), (0.7, st12)]).unwrap();
        let p = point_with(0.5, 0.01);
        let expect = 0.3 * SteadyState::kurth().f(&p) + 0.7 * single_f;
        assert!((mix.f(&p) - expect).abs() < 1e-15);
        let m = mix.total_mass(&spec).unwrap();
        assert!((m - 1.0).abs() < 1e-5, "mixture mass {m}");
        let rho = mix.rho(0.4, &spec).unwrap();
        assert!((rho / RHO_BALL - 1.0).abs() < 1e-6);
        assert_eq!(mix.gammas().len(), 2);
        assert_eq!(mix.u_knots().len(), 1);
        assert!(mix.l1_distance_to_kurth(&spec).is_err());
    }

    #[test]
    fn shell_value_gaps_vanish_on_their_shells() {
        let gamma = GammaParam::from_exponent(12).unwrap();
        let g = gamma.gamma();
        let on_edge = point_with(1.0, 0.02);
        assert!(SingularSet::SupportEdge.value_gap(&on_edge, &gamma) < 1e-15);
        let on_seam = point_with(g, 0.02);
        assert!(SingularSet::AnisotropySeam.value_gap(&on_seam, &gamma) < 1e-15);
        assert!(SingularSet::SupportEdge.value_gap(&on_seam, &gamma) > 1e-5);
        let gated = point_with(0.5 + 3.0 * (g + 0.01) - 0.06, g + 0.01);
        assert!(SingularSet::AnisotropySeam.value_gap(&gated, &gamma).is_infinite());
    }
}
