//! Spherically adapted phase-space coordinates and integral reduction.
//!
//! A point (x, v) with r = |x| > 0 is described by r, the radial momentum
//! p_r = x.v / r, and the squared angular momentum l2 = |x ^ v|^2. The
//! combination
//!
//! ```text
//! u = -(r^2 + p_r^2 + (l2 / r^2)(1 - r^2))
//! ```
//!
//! coincides with l2 - |x|^2 - |v|^2 and is the argument every state profile
//! is evaluated at. Integrals of rotation-invariant functions collapse to
//! (r, p_r, u) with the flat measure
//!
//! ```text
//! dx dv = (1/2) r^2/(1 - r^2) dr dp_r du dR,
//! ```
//!
//! where dR is the Haar measure of the rotation group with total mass 8 pi^2.
//! For fixed |x| = r the velocity integral alone collapses to
//!
//! ```text
//! int g(v) dv = 1/(2 r^2) int dp_r int dl2 int_0^{2pi} dtheta g(v),
//! v = (sqrt(l2)/r cos(theta), sqrt(l2)/r sin(theta), p_r).
//! ```

use crate::error::{Error, Result};
use crate::geom::{PhasePoint, Rotation, Vec3};
use crate::quad::{integrate_with_knots, so3_rule, QuadratureSpec};

pub const EIGHT_PI_SQUARED: f64 = 8.0 * std::f64::consts::PI * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedCoords {
    pub r: f64,
    pub p_r: f64,
    pub ell2: f64,
    pub u: f64,
}

/// Reduce a phase point with |x| > 0 to chart coordinates.
pub fn to_reduced(p: &PhasePoint) -> Result<ReducedCoords> {
    let r = p.x.norm();
    if r == 0.0 {
        return Err(Error::Domain("to_reduced: |x| = 0 is outside the chart".into()));
    }
    if !p.is_finite() {
        return Err(Error::Domain("to_reduced: non-finite phase point".into()));
    }
    let p_r = p.x.dot(p.v) / r;
    let ell2 = p.ell_squared();
    let u = ell2 - p.x.norm_squared() - p.v.norm_squared();
    Ok(ReducedCoords { r, p_r, ell2, u })
}

/// Squared angular momentum from (r, p_r, u): the inversion of the chart
/// relation, l2 = -(u + r^2 + p_r^2) r^2 / (1 - r^2). Requires r in (0, 1);
/// the returned value is negative exactly when (r, p_r, u) has no preimage.
pub fn ell2_from(r: f64, p_r: f64, u: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("ell2_from: r = {r} outside (0, 1)")));
    }
    Ok(-(u + r * r + p_r * p_r) * r * r / (1.0 - r * r))
}

/// Reconstruct a canonical phase point from chart coordinates: x along e3 and
/// v in the x-z plane. Every other preimage is a rotation of this one.
pub fn reconstruct(rc: &ReducedCoords) -> Result<PhasePoint> {
    if rc.r <= 0.0 || rc.ell2 < 0.0 {
        return Err(Error::Domain("reconstruct: need r > 0 and ell2 >= 0".into()));
    }
    let x = Vec3::new(0.0, 0.0, rc.r);
    let v = Vec3::new(rc.ell2.sqrt() / rc.r, 0.0, rc.p_r);
    Ok(PhasePoint::new(x, v))
}

/// gamma_bar(r) = r^2 + Gamma (1 - r^2) / r^2, the effective lower-bound
/// parameter of the outer support band.
pub fn gamma_bar(r: f64, gamma: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("gamma_bar: r = {r} must be positive")));
    }
    let r2 = r * r;
    Ok(r2 + gamma * (1.0 - r2) / r2)
}

/// The (p_r, u)-section of the state support at radius r.
///
/// For r^2 <= Gamma the angular-momentum cap is inactive and the section is
/// the full band -1 <= u <= -r^2 - p_r^2. For Gamma <= r^2 <= 1 the lower
/// boundary is max(-1, -gamma_bar - p_r^2). Beyond r = 1 the section is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SupportRegion {
    Empty,
    Inner { r: f64 },
    Outer { r: f64, gamma_bar: f64 },
}

pub fn support_region(r: f64, gamma: f64) -> Result<SupportRegion> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("support_region: r = {r} must be positive")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParam(format!("support_region: gamma = {gamma}")));
    }
    if r > 1.0 {
        return Ok(SupportRegion::Empty);
    }
    if r * r <= gamma {
        Ok(SupportRegion::Inner { r })
    } else {
        Ok(SupportRegion::Outer { r, gamma_bar: gamma_bar(r, gamma)? })
    }
}

impl SupportRegion {
    /// Half-width of the p_r range; the section is empty for |p_r| beyond it.
    #[must_use]
    pub fn pr_max(&self) -> f64 {
        match self {
            SupportRegion::Empty => 0.0,
            SupportRegion::Inner { r } | SupportRegion::Outer { r, .. } => {
                (1.0 - r * r).max(0.0).sqrt()
            }
        }
    }

    /// The u-interval of the section at fixed p_r, if nonempty.
    #[must_use]
    pub fn u_interval(&self, p_r: f64) -> Option<(f64, f64)> {
        match *self {
            SupportRegion::Empty => None,
            SupportRegion::Inner { r } => {
                let hi = -r * r - p_r * p_r;
                (hi > -1.0).then_some((-1.0, hi))
            }
            SupportRegion::Outer { r, gamma_bar } => {
                let hi = -r * r - p_r * p_r;
                let lo = (-gamma_bar - p_r * p_r).max(-1.0);
                (hi > lo).then_some((lo, hi))
            }
        }
    }

    #[must_use]
    pub fn contains(&self, p_r: f64, u: f64) -> bool {
        self.u_interval(p_r)
            .is_some_and(|(lo, hi)| u >= lo && u <= hi)
    }
}

/// Membership in the state support: -1 <= l2 - |x|^2 - |v|^2 <= 0 together
/// with l2 <= gamma.
#[must_use]
pub fn in_support(p: &PhasePoint, gamma: f64) -> bool {
    let ell2 = p.ell_squared();
    let q = ell2 - p.x.norm_squared() - p.v.norm_squared();
    (-1.0..=0.0).contains(&q) && ell2 <= gamma
}

/// Integral of weight(r, p_r, u) * I(r, p_r, u) over the support of parameter
/// gamma, where I is 8 pi^2 for rotation-invariant integrands or the
/// rotation-group average of `rotation_factor` over the orbit of the
/// canonical point. `u_knots` lists interior u-values where the weight is
/// singular (for state profiles: u = -Gamma_i); the endpoints of every
/// u-section are handled automatically.
pub fn reduced_integral(
    weight: &dyn Fn(f64, f64, f64) -> f64,
    rotation_factor: Option<&dyn Fn(&PhasePoint) -> f64>,
    gamma: f64,
    u_knots: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParam(format!("reduced_integral: gamma = {gamma}")));
    }
    let rot = rotation_factor.map(|f| (f, so3_rule(spec.euler_nodes)));

    let mut radial = |r: f64| -> f64 {
        let region = match support_region(r, gamma) {
            Ok(reg) => reg,
            Err(_) => return 0.0,
        };
        let pr_max = region.pr_max();
        if pr_max == 0.0 {
            return 0.0;
        }
        // Band-structure kink in p_r for the outer case.
        let mut p_knots: Vec<f64> = Vec::new();
        if let SupportRegion::Outer { gamma_bar, .. } = region {
            if gamma_bar < 1.0 {
                let pk = (1.0 - gamma_bar).sqrt();
                p_knots.push(pk);
                p_knots.push(-pk);
            }
        }
        p_knots.push(0.0);

        let mut over_p = |p_r: f64| -> f64 {
            let Some((lo, hi)) = region.u_interval(p_r) else {
                return 0.0;
            };
            let mut over_u = |u: f64| -> f64 {
                let w = weight(r, p_r, u);
                if w == 0.0 {
                    return 0.0;
                }
                let factor = match &rot {
                    None => EIGHT_PI_SQUARED,
                    Some((f, rule)) => {
                        let ell2 = ell2_from(r, p_r, u).unwrap_or(0.0).max(0.0);
                        let base = reconstruct(&ReducedCoords { r, p_r, ell2, u })
                            .expect("canonical point");
                        let mut acc = 0.0;
                        for &(a, b, d, wr) in &rule.nodes {
                            let rot = Rotation::from_euler_zyz(a, b, d);
                            let q = PhasePoint::new(rot.apply(base.x), rot.apply(base.v));
                            acc += wr * f(&q);
                        }
                        acc
                    }
                };
                w * factor
            };
            integrate_with_knots(&mut over_u, lo, hi, u_knots, spec.u_nodes, 1)
        };
        let inner = integrate_with_knots(&mut over_p, -pr_max, pr_max, &p_knots, spec.pr_nodes, 1);
        0.5 * r * r / (1.0 - r * r) * inner
    };

    // Anchors: r = 1 is the generic sqrt endpoint, r = sqrt(gamma) the seam.
    let seam = gamma.sqrt();
    Ok(integrate_with_knots(&mut radial, 0.0, 1.0, &[seam], spec.radial_nodes, 2))
}

/// Velocity integral at fixed |x| = r over the ball |v| <= vmax, through the
/// (p_r, l2, theta) chart. `ell2_knots(p_r)` lists interior l2-values where g
/// is singular at that p_r; `pr_knots` likewise for the outer p_r integral.
pub fn velocity_integral_with_knots(
    g: &dyn Fn(Vec3) -> f64,
    r: f64,
    vmax: f64,
    ell2_knots: &dyn Fn(f64) -> Vec<f64>,
    pr_knots: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("velocity_integral: r = {r} must be positive")));
    }
    if !(vmax > 0.0) {
        return Err(Error::Domain("velocity_integral: vmax must be positive".into()));
    }
    let n_theta = (2 * spec.euler_nodes).max(16);
    let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;

    let mut over_p = |p_r: f64| -> f64 {
        let l2_hi = r * r * (vmax * vmax - p_r * p_r);
        if l2_hi <= 0.0 {
            return 0.0;
        }
        let knots = ell2_knots(p_r);
        let mut over_l2 = |l2: f64| -> f64 {
            let lt = l2.max(0.0).sqrt() / r;
            let mut acc = 0.0;
            for k in 0..n_theta {
                let th = dtheta * k as f64;
                let v = Vec3::new(lt * th.cos(), lt * th.sin(), p_r);
                acc += g(v);
            }
            acc * dtheta
        };
        integrate_with_knots(&mut over_l2, 0.0, l2_hi, &knots, spec.u_nodes, 1)
    };
    let val = integrate_with_knots(&mut over_p, -vmax, vmax, pr_knots, spec.pr_nodes, 1);
    Ok(val / (2.0 * r * r))
}

/// Velocity integral for integrands without interior singular structure.
pub fn velocity_integral(
    g: &dyn Fn(Vec3) -> f64,
    r: f64,
    vmax: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    velocity_integral_with_knots(g, r, vmax, &|_| Vec::new(), &[0.0], spec)
}

/// Velocity integral of an integrand that depends on v only through
/// (p_r, ell^2). The azimuthal integral collapses to 2 pi, leaving
///
/// ```text
///   int_{R^3} F dv = (pi / r^2) int dp_r int_0^{r^2 (vmax^2 - p_r^2)} F dl^2.
/// ```
pub fn velocity_integral_symmetric(
    f: &dyn Fn(f64, f64) -> f64,
    r: f64,
    vmax: f64,
    ell2_knots: &dyn Fn(f64) -> Vec<f64>,
    pr_knots: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("velocity_integral: r = {r} must be positive")));
    }
    if !(vmax > 0.0) {
        return Err(Error::Domain("velocity_integral: vmax must be positive".into()));
    }
    let mut over_p = |p_r: f64| -> f64 {
        let l2_hi = r * r * (vmax * vmax - p_r * p_r);
        if l2_hi <= 0.0 {
            return 0.0;
        }
        let knots = ell2_knots(p_r);
        let mut over_l2 = |l2: f64| f(p_r, l2);
        integrate_with_knots(&mut over_l2, 0.0, l2_hi, &knots, spec.u_nodes, 1)
    };
    let val = integrate_with_knots(&mut over_p, -vmax, vmax, pr_knots, spec.pr_nodes, 1);
    Ok(val * std::f64::consts::PI / (r * r))
}
