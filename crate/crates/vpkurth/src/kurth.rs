//! The Kurth equilibrium and its time-periodic rescalings.
//!
//! The equilibrium phase-space density is
//!
//! ```text
//! f_K(x, v) = 3/(4 pi^3) (1 - |x|^2 - |v|^2 + |x ^ v|^2)^{-1/2}
//! ```
//!
//! on the set where the bracket is positive AND |x ^ v| < 1, and zero
//! elsewhere. The two conditions are independent: the bracket can be positive
//! at points with angular momentum at or above 1, which are outside the
//! support. The induced spatial density is homogeneous on the unit ball,
//! rho_K = 3/(4 pi) on |x| <= 1, with potential
//!
//! ```text
//! U_K(x) = |x|^2/2 - 3/2   (|x| <= 1),     -1/|x|   (|x| > 1).
//! ```
//!
//! A time-dependent radius phi(t) > 0 produces the rescaled ball solutions
//! rho(t, x) = phi^{-3} rho_K(x/phi) and U(t, x) = phi^{-1} U_K(x/phi).

use crate::geom::{PhasePoint, Vec3};

pub const RHO_BALL: f64 = 3.0 / (4.0 * std::f64::consts::PI);
const F_PREFACTOR: f64 = 3.0 / 4.0; // divided by pi^3 below

/// Phase-space density of the Kurth equilibrium.
#[must_use]
pub fn f_kurth(p: &PhasePoint) -> f64 {
    let ell2 = p.ell_squared();
    if ell2 >= 1.0 {
        return 0.0;
    }
    let bracket = 1.0 - p.x.norm_squared() - p.v.norm_squared() + ell2;
    if bracket > 0.0 {
        F_PREFACTOR / (std::f64::consts::PI.powi(3) * bracket.sqrt())
    } else {
        0.0
    }
}

/// Spatial density 3/(4 pi) on the closed unit ball.
#[must_use]
pub fn rho_kurth(x: Vec3) -> f64 {
    if x.norm_squared() <= 1.0 {
        RHO_BALL
    } else {
        0.0
    }
}

/// Gravitational potential of the homogeneous unit ball of mass 1.
#[must_use]
pub fn u_kurth(x: Vec3) -> f64 {
    let r2 = x.norm_squared();
    if r2 <= 1.0 {
        0.5 * r2 - 1.5
    } else {
        -1.0 / r2.sqrt()
    }
}

/// Gradient of `u_kurth`: x inside the ball, x/|x|^3 outside. Continuous
/// across |x| = 1.
#[must_use]
pub fn grad_u_kurth(x: Vec3) -> Vec3 {
    let r2 = x.norm_squared();
    if r2 <= 1.0 {
        x
    } else {
        x.scale(1.0 / (r2 * r2.sqrt()))
    }
}

/// Density of the breathing ball with radius phi_t.
#[must_use]
pub fn scaled_density(phi_t: f64, x: Vec3) -> f64 {
    assert!(phi_t > 0.0, "scaled_density: radius must be positive");
    rho_kurth(x.scale(1.0 / phi_t)) / (phi_t * phi_t * phi_t)
}

/// Potential of the breathing ball with radius phi_t.
#[must_use]
pub fn scaled_potential(phi_t: f64, x: Vec3) -> f64 {
    assert!(phi_t > 0.0, "scaled_potential: radius must be positive");
    u_kurth(x.scale(1.0 / phi_t)) / phi_t
}

/// Radial potential gradient dU/dr for the breathing ball: r/phi^3 inside,
/// 1/r^2 outside (unit total mass).
#[must_use]
pub fn scaled_du_dr(phi_t: f64, r: f64) -> f64 {
    assert!(phi_t > 0.0);
    if r <= phi_t {
        r / (phi_t * phi_t * phi_t)
    } else {
        1.0 / (r * r)
    }
}
