//! The radial oscillation that drives the time-periodic family.
//!
//! The scale factor obeys the one-dimensional Hamiltonian system
//!
//! ```text
//!     phi'' = -1/phi^2 + 1/phi^3,
//!     E = phi'^2 / 2 + V(phi),      V(s) = -1/s + 1/(2 s^2),
//! ```
//!
//! whose solutions with E < 0 oscillate between the turning radii
//! 1/(1 + |eps|) and 1/(1 - |eps|) for initial data (1, eps), with period
//! 2 pi / (1 - eps^2)^{3/2}. The adaptive collocation integrator here is the
//! ground truth; the closed-form invariants and the eccentric-anomaly fast
//! path are checked against it.
//!
//! phi is also the norm of a planar Kepler solution with angular momentum 1.
//! Matching energies forces eccentricity e = |eps| and semi-major axis
//! a = 1/(1 - e^2); the radius is then a (1 - e cos u) with the anomaly u
//! solving u - e sin u = (1 - e^2)^{3/2} (t - t0).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::integrate_two_sided;

/// Radius below which integration aborts. Energies above the centrifugal
/// barrier minimum never reach it; the guard catches inadmissible data.
pub const COLLISION_RADIUS: f64 = 1e-3;

/// Largest step the integrator will take, independent of the error control.
/// Keeps the dense-output segments short enough for composition with
/// time-dependent integrands.
pub const MAX_STEP: f64 = 0.02;

/// Right-hand side of the radial equation.
#[must_use]
pub fn radial_accel(phi: f64) -> f64 {
    (1.0 / phi - 1.0) / (phi * phi)
}

/// Effective potential V(s) = -1/s + 1/(2 s^2).
#[must_use]
pub fn effective_potential(s: f64) -> f64 {
    (0.5 / s - 1.0) / s
}

/// One point on a radial trajectory. The energy is computed at construction
/// and is the conserved quantity the integrator is judged against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitState {
    pub t: f64,
    pub phi: f64,
    pub phi_dot: f64,
    pub energy: f64,
}

impl OrbitState {
    pub fn new(t: f64, phi: f64, phi_dot: f64) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite() && phi_dot.is_finite() && t.is_finite()) {
            return Err(Error::InvalidParam(format!("orbit state ({t}, {phi}, {phi_dot})")));
        }
        Ok(OrbitState { t, phi, phi_dot, energy: 0.5 * phi_dot * phi_dot + effective_potential(phi) })
    }
}

/// Closed-form invariants of the periodic solution with initial data
/// (1, eps).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicOrbit {
    pub eps: f64,
    pub energy: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub period: f64,
}

impl PeriodicOrbit {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps.abs() < 1.0) {
            return Err(Error::Domain(format!("|eps| = {} >= 1: orbit is unbounded", eps.abs())));
        }
        let e = eps.abs();
        Ok(PeriodicOrbit {
            eps,
            energy: -0.5 * (1.0 - eps * eps),
            phi_min: 1.0 / (1.0 + e),
            phi_max: 1.0 / (1.0 - e),
            period: period_closed_form(eps)?,
        })
    }

    /// The initial state (1, eps) at t = 0.
    pub fn initial_state(&self) -> OrbitState {
        OrbitState::new(0.0, 1.0, self.eps).expect("unit radius state")
    }
}

/// 2 pi / (1 - eps^2)^{3/2}.
pub fn period_closed_form(eps: f64) -> Result<f64> {
    if !(eps.abs() < 1.0) {
        return Err(Error::Domain(format!("|eps| = {} >= 1: orbit is unbounded", eps.abs())));
    }
    Ok(2.0 * PI / (1.0 - eps * eps).powf(1.5))
}

/// Period as twice the time between turning points,
///
/// ```text
///     T = 2 int_{phi_min}^{phi_max} ds / sqrt(2 (E - V(s))),
/// ```
///
/// evaluated with inverse-square-root substitutions at both simple turning
/// points. Independent of the closed form apart from the shared turning
/// radii.
pub fn period_quadrature(eps: f64) -> Result<f64> {
    let orbit = PeriodicOrbit::new(eps)?;
    if eps == 0.0 {
        // The equilibrium degenerates the turning-point integral; its
        // small-oscillation limit is V''(1) = 1, hence 2 pi.
        return Ok(2.0 * PI);
    }
    // 2 (E - V(s)) regrouped as ((eps s)^2 - (s - 1)^2) / s^2: the direct
    // difference cancels catastrophically near the equilibrium.
    let mut f = |s: f64| {
        let gap = (eps * s).powi(2) - (s - 1.0).powi(2);
        s / gap.max(f64::MIN_POSITIVE).sqrt()
    };
    Ok(2.0 * integrate_two_sided(&mut f, orbit.phi_min, orbit.phi_max, 48, 6))
}

// Three-stage Gauss-Legendre collocation, order six. Stage equations are
// solved by fixed-point sweeps; the step halves when the sweep stalls.
const SQ15: f64 = 3.872_983_346_207_417;
const GL_A: [[f64; 3]; 3] = [
    [5.0 / 36.0, 2.0 / 9.0 - SQ15 / 15.0, 5.0 / 36.0 - SQ15 / 30.0],
    [5.0 / 36.0 + SQ15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - SQ15 / 24.0],
    [5.0 / 36.0 + SQ15 / 30.0, 2.0 / 9.0 + SQ15 / 15.0, 5.0 / 36.0],
];
const GL_B: [f64; 3] = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];

fn rhs(y: [f64; 2]) -> [f64; 2] {
    [y[1], radial_accel(y[0])]
}

/// One collocation step from y over h. None when a stage radius crosses the
/// collision guard or the sweeps fail to contract.
fn gauss_step(y: [f64; 2], h: f64) -> Option<[f64; 2]> {
    let mut k = [rhs(y); 3];
    let scale = 1.0 + y[0].abs() + y[1].abs();
    for _ in 0..100 {
        let mut next = [[0.0; 2]; 3];
        let mut delta: f64 = 0.0;
        for i in 0..3 {
            let mut yi = y;
            for j in 0..3 {
                yi[0] += h * GL_A[i][j] * k[j][0];
                yi[1] += h * GL_A[i][j] * k[j][1];
            }
            if yi[0] <= COLLISION_RADIUS {
                return None;
            }
            next[i] = rhs(yi);
            delta = delta.max((next[i][0] - k[i][0]).abs()).max((next[i][1] - k[i][1]).abs());
        }
        k = next;
        if delta <= 1e-15 * scale {
            let mut out = y;
            for i in 0..3 {
                out[0] += h * GL_B[i] * k[i][0];
                out[1] += h * GL_B[i] * k[i][1];
            }
            return (out[0] > COLLISION_RADIUS).then_some(out);
        }
    }
    None
}

/// Dense-output segment: endpoint values with ODE-derived second
/// derivatives feed a quintic Hermite interpolant.
#[derive(Clone, Copy, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    y0: [f64; 2],
    y1: [f64; 2],
}

impl Segment {
    fn eval(&self, t: f64) -> (f64, f64) {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let h = self.h;
        let (p0, m0, a0) = (self.y0[0], self.y0[1] * h, radial_accel(self.y0[0]) * h * h);
        let (p1, m1, a1) = (self.y1[0], self.y1[1] * h, radial_accel(self.y1[0]) * h * h);
        let c0 = p0;
        let c1 = m0;
        let c2 = 0.5 * a0;
        let d0 = p1 - (c0 + c1 + c2);
        let d1 = m1 - (c1 + 2.0 * c2);
        let d2 = a1 - 2.0 * c2;
        let c3 = 10.0 * d0 - 4.0 * d1 + 0.5 * d2;
        let c4 = -15.0 * d0 + 7.0 * d1 - d2;
        let c5 = 6.0 * d0 - 3.0 * d1 + 0.5 * d2;
        let phi = c0 + th * (c1 + th * (c2 + th * (c3 + th * (c4 + th * c5))));
        let dphi =
            c1 + th * (2.0 * c2 + th * (3.0 * c3 + th * (4.0 * c4 + th * 5.0 * c5)));
        (phi, dphi / h)
    }
}

/// A dense-output trajectory of the radial equation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    segments: Vec<Segment>,
    initial: OrbitState,
    final_state: OrbitState,
    max_energy_drift: f64,
}

impl Trajectory {
    pub fn initial_state(&self) -> OrbitState {
        self.initial
    }

    pub fn end_state(&self) -> OrbitState {
        self.final_state
    }

    pub fn t_span(&self) -> (f64, f64) {
        (self.initial.t, self.final_state.t)
    }

    /// Largest relative energy deviation seen at accepted step endpoints.
    pub fn max_energy_drift(&self) -> f64 {
        self.max_energy_drift
    }

    /// Interpolated state. The time must lie in the integrated span.
    pub fn state_at(&self, t: f64) -> Result<OrbitState> {
        let (ta, tb) = self.t_span();
        if !(t >= ta - 1e-12 && t <= tb + 1e-12) {
            return Err(Error::Domain(format!("t = {t} outside trajectory span [{ta}, {tb}]")));
        }
        let t = t.clamp(ta, tb);
        let idx = self
            .segments
            .partition_point(|seg| seg.t0 + seg.h < t)
            .min(self.segments.len() - 1);
        let (phi, phi_dot) = self.segments[idx].eval(t);
        OrbitState::new(t, phi, phi_dot)
    }

    /// n + 1 evenly spaced states across the span, endpoints included.
    pub fn sample(&self, n: usize) -> Result<Vec<OrbitState>> {
        let (ta, tb) = self.t_span();
        (0..=n)
            .map(|j| self.state_at(ta + (tb - ta) * j as f64 / n as f64))
            .collect()
    }

    /// Turning points: zeros of phi' located by bisection on the dense
    /// output, returned as (t, phi) pairs in time order.
    pub fn extrema(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for seg in &self.segments {
            // Four probes per segment; phi' changes sign at most once over a
            // step this short.
            let mut prev_t = seg.t0;
            let mut prev_d = seg.eval(prev_t).1;
            for j in 1..=4 {
                let t = seg.t0 + seg.h * j as f64 / 4.0;
                let d = seg.eval(t).1;
                if prev_d == 0.0 {
                    out.push((prev_t, seg.eval(prev_t).0));
                } else if prev_d.signum() != d.signum() {
                    let (mut lo, mut hi) = (prev_t, t);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if seg.eval(mid).1.signum() == prev_d.signum() {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let tm = 0.5 * (lo + hi);
                    out.push((tm, seg.eval(tm).0));
                }
                prev_t = t;
                prev_d = d;
            }
        }
        out
    }
}

/// Integrate the radial equation from ic to t_final with local error target
/// tol per step. Step doubling supplies the error estimate; a PI controller
/// adapts the step.
pub fn integrate(ic: OrbitState, t_final: f64, tol: f64) -> Result<Trajectory> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParam(format!("tolerance {tol}")));
    }
    if !(t_final > ic.t) {
        return Err(Error::Domain(format!("t_final = {t_final} must exceed t0 = {}", ic.t)));
    }
    if ic.phi <= COLLISION_RADIUS {
        return Err(Error::CollisionGuard { phi: ic.phi, t: ic.t });
    }
    let mut t = ic.t;
    let mut y = [ic.phi, ic.phi_dot];
    let mut h: f64 = MAX_STEP.min(t_final - ic.t);
    let mut err_prev = tol;
    let mut segments = Vec::new();
    let mut drift: f64 = 0.0;
    let e0 = ic.energy;
    while t < t_final {
        h = h.min(t_final - t);
        if h < 1e-12 {
            break;
        }
        let coarse = gauss_step(y, h);
        let fine = gauss_step(y, 0.5 * h).and_then(|ym| gauss_step(ym, 0.5 * h).map(|y1| (ym, y1)));
        let (Some(coarse), Some((y_mid, y_fine))) = (coarse, fine) else {
            // A stage failed to contract or hit the guard: decide which by
            // probing the radius directly.
            if y[0] <= 2.0 * COLLISION_RADIUS {
                return Err(Error::CollisionGuard { phi: y[0], t });
            }
            h *= 0.5;
            if h < 1e-10 {
                return Err(Error::NoConverge(format!("step collapse at t = {t}")));
            }
            continue;
        };
        // Doubling estimate for an order-6 method.
        let scale = 1.0 + y[0].abs().max(y[1].abs());
        let err = ((coarse[0] - y_fine[0]).abs().max((coarse[1] - y_fine[1]).abs()) / 63.0)
            .max(1e-300);
        if err <= tol * scale {
            segments.push(Segment { t0: t, h: 0.5 * h, y0: y, y1: y_mid });
            segments.push(Segment { t0: t + 0.5 * h, h: 0.5 * h, y0: y_mid, y1: y_fine });
            t += h;
            y = y_fine;
            let e = 0.5 * y[1] * y[1] + effective_potential(y[0]);
            drift = drift.max((e - e0).abs() / e0.abs().max(1e-300));
            let grow = 0.9 * (tol * scale / err).powf(0.7 / 7.0) * (err_prev / err).powf(0.4 / 7.0);
            err_prev = err;
            h = (h * grow.clamp(0.2, 5.0)).min(MAX_STEP);
        } else {
            h *= (0.9 * (tol * scale / err).powf(1.0 / 7.0)).clamp(0.2, 0.9);
        }
    }
    let final_state = OrbitState::new(t, y[0], y[1])?;
    Ok(Trajectory { segments, initial: ic, final_state, max_energy_drift: drift })
}

/// Eccentric anomaly from the Kepler equation u - e sin u = M, by Newton
/// iteration safeguarded with bisection on the bracket [M - e, M + e].
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    if !((0.0..1.0).contains(&e) && mean_anomaly.is_finite()) {
        return Err(Error::InvalidParam(format!("kepler solve with M = {mean_anomaly}, e = {e}")));
    }
    // Reduce to one revolution; the anomaly shifts with the same multiple.
    let turns = (mean_anomaly / (2.0 * PI)).round();
    let m = mean_anomaly - 2.0 * PI * turns;
    let (mut lo, mut hi) = (m - e, m + e);
    let mut u = m + e * m.sin();
    for _ in 0..60 {
        let g = u - e * u.sin() - m;
        if g.abs() <= 1e-14 {
            return Ok(u + 2.0 * PI * turns);
        }
        if g > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let step = g / (1.0 - e * u.cos());
        u -= step;
        if !(u > lo && u < hi) {
            u = 0.5 * (lo + hi);
        }
    }
    Err(Error::NoConverge(format!("kepler iteration at M = {m}, e = {e}")))
}

/// Radius of the angular-momentum-one Kepler orbit with eccentricity e and
/// pericenter passage at t0:
///
/// ```text
///     phi(t) = a (1 - e cos u),    a = 1 / (1 - e^2),
///     u - e sin u = (1 - e^2)^{3/2} (t - t0).
/// ```
pub fn kepler_anomaly_phi(t: f64, e: f64, t0: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::Domain(format!("eccentricity {e} outside [0, 1)")));
    }
    let a = 1.0 / (1.0 - e * e);
    let n = (1.0 - e * e).powf(1.5);
    let u = solve_kepler(n * (t - t0), e)?;
    Ok(a * (1.0 - e * u.cos()))
}

/// The anomaly route matched to the initial data (1, eps): eccentricity
/// |eps|, with the pericenter time fixed by phi(0) = 1, phi'(0) = eps.
pub fn kepler_phi_for_eps(t: f64, eps: f64) -> Result<f64> {
    if !(eps.abs() < 1.0) {
        return Err(Error::Domain(format!("|eps| = {} >= 1: orbit is unbounded", eps.abs())));
    }
    let e = eps.abs();
    if e == 0.0 {
        return Ok(1.0);
    }
    let u0 = f64::atan2(eps.signum() * (1.0 - eps * eps).sqrt(), e);
    let m0 = u0 - e * u0.sin();
    let n = (1.0 - e * e).powf(1.5);
    kepler_anomaly_phi(t, e, -m0 / n)
}
