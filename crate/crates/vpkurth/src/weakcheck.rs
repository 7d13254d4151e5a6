//! Distributional verification by Monte Carlo.
//!
//! A compactly supported state f is checked against the weak form of the
//! transport equation: for smooth test functions phi,
//!
//! ```text
//!     int f (d_t phi + v . grad_x phi - grad_x U . grad_v phi) = 0,
//! ```
//!
//! with U the state's own gravitational potential. Static states drop the
//! time derivative; the time-periodic transports use the rescaled potential
//! of the uniform ball. Estimates are importance-sampled in the reduced
//! chart, so the inverse-square-root blow-ups of the family are tamed by
//! matching proposal densities, and each report carries its Monte Carlo
//! standard error for an honest z-gate.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::funceq::GammaParam;
use crate::geom::{PhasePoint, Rotation, Vec3};
use crate::kurth::grad_u_kurth;
use crate::orbit::Trajectory;
use crate::quad::{integrate_with_knots, QuadratureSpec};
use crate::reduction::{ell2_from, gamma_bar, reconstruct, ReducedCoords};
use crate::steady::SteadyState;

/// Batch count for the deterministic batched estimator. Reports depend only
/// on (seed, batch count, samples).
pub const BATCHES: usize = 8;

/// Monte Carlo estimate with its uncertainty.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResidualReport {
    pub estimate: f64,
    pub mc_std_error: f64,
    pub samples: usize,
}

impl ResidualReport {
    /// z-score of the estimate against zero.
    #[must_use]
    pub fn z(&self) -> f64 {
        self.estimate.abs() / self.mc_std_error
    }

    /// Gate at the three-sigma budget split across `tests` batch members.
    #[must_use]
    pub fn passes(&self, tests: usize) -> bool {
        self.z() <= gate_z(tests)
    }
}

/// Two-sided threshold that spends a single three-sigma false-alarm budget
/// across `tests` independent checks: the alarm rate of the whole batch
/// stays at 2 Phi(-3), whatever the batch size.
#[must_use]
pub fn gate_z(tests: usize) -> f64 {
    let alpha = 2.0 * standard_normal_tail(3.0) / tests.max(1) as f64;
    inverse_normal_cdf(1.0 - 0.5 * alpha)
}

/// Upper tail of the standard normal via erfc evaluated with the
/// Abramowitz-Stegun 7.1.26 polynomial (abs error < 1.5e-7, ample for
/// thresholds).
fn standard_normal_tail(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - standard_normal_tail(-z);
    }
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    0.5 * poly * (-x * x).exp()
}

/// Inverse standard normal CDF, Acklam's rational approximation refined by
/// one Halley step (relative error far below threshold needs).
fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let x = if !(0.02425..=0.97575).contains(&p) {
        // The rational form is negative; it serves the lower tail directly
        // and the upper tail after reflection.
        let (q, sign) =
            if p < 0.02425 { ((-2.0 * p.ln()).sqrt(), 1.0) } else { ((-2.0 * (1.0 - p).ln()).sqrt(), -1.0) };
        sign * (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // One Halley refinement against the tail function.
    let err = standard_normal_tail(-x) - p;
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    x - err / (pdf + 0.5 * x * err)
}

// ---------------------------------------------------------------------------
// Test functions

/// Smooth cutoff b(rho) = exp(1 - 1/(1 - rho)) on rho < 1, extended by zero:
/// value and d/d rho. All derivatives vanish at rho = 1.
fn cutoff(rho: f64) -> (f64, f64) {
    if rho >= 1.0 - 1e-8 {
        return (0.0, 0.0);
    }
    let inv = 1.0 / (1.0 - rho);
    let b = (1.0 - inv).exp();
    (b, -b * inv * inv)
}

#[derive(Clone, Debug)]
enum TfKind {
    /// Sparse polynomial in the six phase coordinates.
    Phase(Vec<(f64, [u8; 6])>),
    /// Polynomial in the two conserved quantities |x|^2 + |v|^2 and
    /// |x /\ v|^2 with a radius cutoff in the first; annihilated pointwise
    /// by the static transport operator.
    Invariant(Vec<(f64, [u8; 2])>),
}

/// Compactly supported smooth test function: polynomial times cutoffs
/// supported in |x| <= 2, |v| <= 2 (and strictly inside the time window for
/// time-dependent checks), with exact partial derivatives.
#[derive(Clone, Debug)]
pub struct TestFunction {
    kind: TfKind,
    seed: u64,
    window: Option<(f64, f64)>,
}

/// Exact first-order jet of a test function at a point.
#[derive(Clone, Copy, Debug)]
pub struct TfJet {
    pub value: f64,
    pub dt: f64,
    pub dx: Vec3,
    pub dv: Vec3,
}

impl TestFunction {
    /// Random sparse polynomial (degree <= 4, coefficients in [-1, 1])
    /// times the phase-space cutoffs.
    #[must_use]
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(6..=24);
        let monomials = (0..n)
            .map(|_| {
                let mut pows = [0u8; 6];
                for _ in 0..rng.gen_range(0..=4) {
                    pows[rng.gen_range(0..6)] += 1;
                }
                (rng.gen_range(-1.0..1.0), pows)
            })
            .collect();
        TestFunction { kind: TfKind::Phase(monomials), seed, window: None }
    }

    /// As `random`, with an added smooth time cutoff supported strictly
    /// inside (t0, t1).
    pub fn random_in_window(seed: u64, t0: f64, t1: f64) -> Result<Self> {
        if !(t1 > t0 && t0.is_finite() && t1.is_finite()) {
            return Err(Error::InvalidParam(format!("time window ({t0}, {t1})")));
        }
        Ok(TestFunction { window: Some((t0, t1)), ..Self::random(seed) })
    }

    /// Test function built from the conserved quantities alone. The static
    /// residual integrand vanishes identically for it.
    #[must_use]
    pub fn invariant(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..=8);
        let monomials = (0..n)
            .map(|_| {
                let a = rng.gen_range(0..=2u8);
                let b = rng.gen_range(0..=2 - a);
                (rng.gen_range(-1.0..1.0), [a, b])
            })
            .collect();
        TestFunction { kind: TfKind::Invariant(monomials), seed, window: None }
    }

    /// The designed detector x . v times the cutoffs. Its residual measures
    /// the imbalance between the kinetic term and the radial force moment,
    /// which vanishes for an actual steady state but not for a generic
    /// impostor; random polynomials can have accidentally small overlap with
    /// that imbalance, this one cannot.
    #[must_use]
    pub fn virial() -> Self {
        let monomials = vec![
            (1.0, [1, 0, 0, 1, 0, 0]),
            (1.0, [0, 1, 0, 0, 1, 0]),
            (1.0, [0, 0, 1, 0, 0, 1]),
        ];
        TestFunction { kind: TfKind::Phase(monomials), seed: 0, window: None }
    }

    #[must_use]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[must_use]
    pub fn window(&self) -> Option<(f64, f64)> {
        self.window
    }

    /// Value and exact first derivatives at (t, x, v). The time slot is
    /// ignored for window-free functions.
    #[must_use]
    pub fn eval(&self, t: f64, p: &PhasePoint) -> TfJet {
        let (bt, dbt) = match self.window {
            None => (1.0, 0.0),
            Some((t0, t1)) => {
                let half = 0.5 * (t1 - t0);
                let s = (t - 0.5 * (t0 + t1)) / half;
                let (b, db) = cutoff(s * s);
                (b, db * 2.0 * s / half)
            }
        };
        if bt == 0.0 && dbt == 0.0 {
            return TfJet { value: 0.0, dt: 0.0, dx: Vec3::ZERO, dv: Vec3::ZERO };
        }
        match &self.kind {
            TfKind::Phase(monos) => {
                let xi =
                    [p.x.x, p.x.y, p.x.z, p.v.x, p.v.y, p.v.z];
                let mut val = 0.0;
                let mut grad = [0.0; 6];
                for &(c, pows) in monos {
                    let mut factors = [1.0; 6];
                    let mut prod = c;
                    for k in 0..6 {
                        factors[k] = xi[k].powi(pows[k] as i32);
                        prod *= factors[k];
                    }
                    val += prod;
                    for k in 0..6 {
                        if pows[k] > 0 {
                            let mut d = c * pows[k] as f64 * xi[k].powi(pows[k] as i32 - 1);
                            for (j, f) in factors.iter().enumerate() {
                                if j != k {
                                    d *= f;
                                }
                            }
                            grad[k] += d;
                        }
                    }
                }
                let (bx, dbx) = cutoff(p.x.norm_squared() / 4.0);
                let (bv, dbv) = cutoff(p.v.norm_squared() / 4.0);
                let px = Vec3::new(grad[0], grad[1], grad[2]);
                let pv = Vec3::new(grad[3], grad[4], grad[5]);
                let dx = (px.scale(bx) + p.x.scale(0.5 * dbx * val)).scale(bv * bt);
                let dv = (pv.scale(bv) + p.v.scale(0.5 * dbv * val)).scale(bx * bt);
                TfJet { value: val * bx * bv * bt, dt: val * bx * bv * dbt, dx, dv }
            }
            TfKind::Invariant(monos) => {
                let w = p.x.norm_squared() + p.v.norm_squared();
                let l2 = p.ell_squared();
                let mut val = 0.0;
                let mut dw = 0.0;
                let mut dl = 0.0;
                for &(c, [a, b]) in monos {
                    let (wa, lb) = (w.powi(a as i32), l2.powi(b as i32));
                    val += c * wa * lb;
                    if a > 0 {
                        dw += c * a as f64 * w.powi(a as i32 - 1) * lb;
                    }
                    if b > 0 {
                        dl += c * b as f64 * wa * l2.powi(b as i32 - 1);
                    }
                }
                // Cutoff in w keeps the whole function a function of the
                // invariants; support w < 8 contains |x|, |v| <= 2.
                let (bw, dbw) = cutoff(w / 8.0);
                let cw = dw * bw + val * dbw / 8.0;
                let xv = p.x.dot(p.v);
                // grad_x |x /\ v|^2 = 2(|v|^2 x - (x.v) v), and symmetrically.
                let lx = (p.x.scale(p.v.norm_squared()) - p.v.scale(xv)).scale(2.0);
                let lv = (p.v.scale(p.x.norm_squared()) - p.x.scale(xv)).scale(2.0);
                TfJet {
                    value: val * bw,
                    dt: 0.0,
                    dx: p.x.scale(2.0 * cw) + lx.scale(dl * bw),
                    dv: p.v.scale(2.0 * cw) + lv.scale(dl * bw),
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Flow and transport maps

/// Linear flow of x' = v, v' = -x: a rotation in each (x_i, v_i) plane.
/// Preserves |x|^2 + |v|^2 and |x /\ v|; the period is 2 pi.
#[must_use]
pub fn flow_map(t: f64, p: &PhasePoint) -> PhasePoint {
    let (s, c) = t.sin_cos();
    PhasePoint::new(p.x.scale(c) + p.v.scale(s), p.v.scale(c) - p.x.scale(s))
}

/// Rescaling to co-moving coordinates: (x, v) -> (x/phi, phi v - phi' x).
#[must_use]
pub fn transport_to_comoving(phi: f64, phi_dot: f64, p: &PhasePoint) -> PhasePoint {
    PhasePoint::new(p.x.scale(1.0 / phi), p.v.scale(phi) - p.x.scale(phi_dot))
}

/// Inverse rescaling: (y, w) -> (phi y, w/phi + phi' y).
#[must_use]
pub fn transport_from_comoving(phi: f64, phi_dot: f64, p: &PhasePoint) -> PhasePoint {
    PhasePoint::new(p.x.scale(phi), p.v.scale(1.0 / phi) + p.x.scale(phi_dot))
}

// ---------------------------------------------------------------------------
// Reduced-chart importance sampler

/// Proposal for the u coordinate on [u_lo, u_hi]: a mixture of densities
/// with inverse-square-root mass at u = -1 and at the interior value
/// u = -Gamma (where the family itself has its integrable blow-ups) plus a
/// uniform floor. Sampling is by closed-form inverse CDF per component.
#[derive(Clone, Copy, Debug)]
struct UProposal {
    u_lo: f64,
    u_hi: f64,
    gamma: f64,
    /// Component weights: edge, seam, uniform.
    w: [f64; 3],
    /// sqrt offsets for the edge component.
    edge: (f64, f64),
    /// sqrt offsets for the seam component (empty when the fiber lies
    /// entirely below the seam).
    seam: Option<(f64, f64, f64)>,
}

impl UProposal {
    fn new(gamma: f64, u_lo: f64, u_hi: f64) -> Option<Self> {
        if !(u_hi > u_lo) {
            return None;
        }
        let edge = ((u_lo + 1.0).max(0.0).sqrt(), (u_hi + 1.0).sqrt());
        let seam = (u_hi > -gamma).then(|| {
            let lo = u_lo.max(-gamma);
            (lo, (lo + gamma).max(0.0).sqrt(), (u_hi + gamma).sqrt())
        });
        let w = if seam.is_some() { [0.375, 0.375, 0.25] } else { [0.6, 0.0, 0.4] };
        Some(UProposal { u_lo, u_hi, gamma, w, edge, seam })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let pick: f64 = rng.gen_range(0.0..1.0);
        let xi: f64 = rng.gen_range(0.0..1.0);
        let u = if pick < self.w[0] {
            let s = self.edge.0 + xi * (self.edge.1 - self.edge.0);
            s * s - 1.0
        } else if pick < self.w[0] + self.w[1] {
            let (_, ta, tb) = self.seam.expect("seam component has weight only when present");
            let s = ta + xi * (tb - ta);
            s * s - self.gamma
        } else {
            self.u_lo + xi * (self.u_hi - self.u_lo)
        };
        u.clamp(self.u_lo, self.u_hi)
    }

    fn density(&self, u: f64) -> f64 {
        if !(self.u_lo..=self.u_hi).contains(&u) {
            return 0.0;
        }
        let mut q = self.w[2] / (self.u_hi - self.u_lo);
        let norm_e = 2.0 * (self.edge.1 - self.edge.0);
        if norm_e > 0.0 {
            q += self.w[0] / (norm_e * (u + 1.0).max(1e-300).sqrt());
        }
        if let Some((lo, ta, tb)) = self.seam {
            if u >= lo {
                q += self.w[1] / (2.0 * (tb - ta) * (u + self.gamma).max(1e-300).sqrt());
            }
        }
        q
    }
}

/// One importance-sampled point of the region {l^2 <= Gamma, u > -1}:
/// chart coordinates, a uniformly rotated phase point, and the ratio of the
/// phase-space volume element to the proposal density. E[weight_ratio *
/// g(point) * f(u, l2)] over draws equals the phase-space integral of f g.
struct Draw {
    rc: ReducedCoords,
    point: PhasePoint,
    weight_ratio: f64,
}

fn draw_point(rng: &mut ChaCha8Rng, gamma: f64) -> Option<Draw> {
    let r = rng.gen_range(0.0f64..1.0).cbrt();
    let vcap = (1.0 - r * r).sqrt();
    let p_r = rng.gen_range(-vcap..vcap);
    let u_hi = -r * r - p_r * p_r;
    let u_lo = (-gamma_bar(r, gamma).ok()? - p_r * p_r).max(-1.0);
    let prop = UProposal::new(gamma, u_lo, u_hi)?;
    let u = prop.sample(rng);
    let ell2 = ell2_from(r, p_r, u).ok()?.max(0.0);
    let rc = ReducedCoords { r, p_r, ell2, u };
    let base = reconstruct(&rc).ok()?;
    let rot = Rotation::from_euler_zyz(
        rng.gen_range(0.0..2.0 * PI),
        (1.0 - 2.0 * rng.gen_range(0.0f64..1.0)).acos(),
        rng.gen_range(0.0..2.0 * PI),
    );
    let point = PhasePoint::new(rot.apply(base.x), rot.apply(base.v));
    let weight_ratio = 8.0 * PI * PI / (3.0 * vcap * prop.density(u));
    Some(Draw { rc, point, weight_ratio })
}

/// Proposal density of `draw_point` at an arbitrary phase point, in
/// phase-space volume. Zero outside the sampled box.
fn proposal_density(gamma: f64, p: &PhasePoint) -> f64 {
    let r = p.x.norm();
    if !(r > 0.0 && r < 1.0) {
        return 0.0;
    }
    let p_r = p.x.dot(p.v) / r;
    let vcap2 = 1.0 - r * r;
    if p_r * p_r >= vcap2 {
        return 0.0;
    }
    let u = p.ell_squared() - p.x.norm_squared() - p.v.norm_squared();
    let u_hi = -r * r - p_r * p_r;
    let Ok(gb) = gamma_bar(r, gamma) else { return 0.0 };
    let u_lo = (-gb - p_r * p_r).max(-1.0);
    let Some(prop) = UProposal::new(gamma, u_lo, u_hi) else { return 0.0 };
    let q_u = prop.density(u);
    // (3 r^2) * (1 / 2 sqrt(1 - r^2)) * q_u * (1 - r^2) / (4 pi^2 r^2)
    3.0 * q_u * vcap2.sqrt() / (8.0 * PI * PI)
}

// ---------------------------------------------------------------------------
// Residual estimators

/// Atomic leaves of a state as (mixture weight, leaf) pairs.
fn leaves(state: &SteadyState) -> Vec<(f64, &SteadyState)> {
    match state {
        SteadyState::Mixture(cs) => cs
            .iter()
            .flat_map(|(w, s)| leaves(s).into_iter().map(move |(wi, si)| (w * wi, si)))
            .collect(),
        atomic => vec![(1.0, atomic)],
    }
}

fn leaf_gamma(state: &SteadyState) -> f64 {
    match state {
        SteadyState::Anisotropic(ps) => ps.evaluator().gamma().gamma(),
        _ => 1.0,
    }
}

/// Batched mean and standard error of per-sample contributions produced by
/// `contrib`. Deterministic for a given seed.
fn mc_mean(
    samples: usize,
    seed: u64,
    mut contrib: impl FnMut(&mut ChaCha8Rng) -> f64,
) -> Result<(f64, f64)> {
    if samples < 2 * BATCHES {
        return Err(Error::InvalidParam(format!("{samples} MC samples is too few")));
    }
    let per_batch = samples / BATCHES;
    let n = (per_batch * BATCHES) as f64;
    let (mut sum, mut sum_sq, mut hits) = (0.0, 0.0, 0usize);
    for batch in 0..BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(batch as u64));
        for _ in 0..per_batch {
            let c = contrib(&mut rng);
            sum += c;
            sum_sq += c * c;
            hits += (c != 0.0) as usize;
        }
    }
    if hits == 0 {
        return Err(Error::NoConverge("sampler never hit the support".into()));
    }
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) / (n - 1.0);
    Ok((mean, var.sqrt().max(f64::MIN_POSITIVE)))
}

fn report_seed(spec: &QuadratureSpec, tf: &TestFunction, salt: u64) -> u64 {
    spec.seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(tf.seed())
        .wrapping_add(salt.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

/// Static residual of one atomic leaf against the radial force du_dr.
fn leaf_static_residual(
    leaf: &SteadyState,
    du_dr: &dyn Fn(f64) -> f64,
    tf: &TestFunction,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let gamma = leaf_gamma(leaf);
    mc_mean(samples, seed, |rng| {
        let Some(d) = draw_point(rng, gamma) else { return 0.0 };
        let f = leaf.f_of_invariants(d.rc.u, d.rc.ell2);
        if f == 0.0 {
            return 0.0;
        }
        let jet = tf.eval(0.0, &d.point);
        let force = d.point.x.scale(du_dr(d.rc.r) / d.rc.r);
        f * d.weight_ratio * (d.point.v.dot(jet.dx) - force.dot(jet.dv))
    })
}

/// Monte Carlo estimate of the static weak-form residual
///
/// ```text
///     int f (v . grad_x tf - grad_x U_f . grad_v tf) dx dv
/// ```
///
/// using the state's own radial force. For every member of the family the
/// force is x on the unit ball and the analytic value is zero; the estimate
/// should sit within a few standard errors of it.
pub fn static_residual(
    state: &SteadyState,
    tf: &TestFunction,
    spec: &QuadratureSpec,
) -> Result<ResidualReport> {
    let mut estimate = 0.0;
    let mut variance = 0.0;
    for (idx, (w, leaf)) in leaves(state).into_iter().enumerate() {
        let (est, se) = leaf_static_residual(
            leaf,
            &|r| leaf.du_dr(r),
            tf,
            spec.mc_samples,
            report_seed(spec, tf, idx as u64),
        )?;
        estimate += w * est;
        variance += (w * se) * (w * se);
    }
    Ok(ResidualReport { estimate, mc_std_error: variance.sqrt(), samples: spec.mc_samples })
}

/// Deliberate non-solution used as the negative control of the residual
/// harness: the profile weight is replaced by a constant on the same
/// support, so the density is no longer uniform and the self-consistent
/// force is no longer harmonic.
#[derive(Clone, Debug)]
pub struct ControlState {
    gamma: GammaParam,
    level: f64,
}

impl ControlState {
    /// Constant phase-space level on {l^2 <= Gamma, u > -1}. The default
    /// level 3/pi^3 gives unit mass in the isotropic case.
    pub fn flat(gamma: GammaParam) -> Self {
        ControlState { gamma, level: 3.0 / (PI * PI * PI) }
    }

    #[must_use]
    pub fn f_of_invariants(&self, u: f64, ell2: f64) -> f64 {
        if ell2 <= self.gamma.gamma() && u > -1.0 && u <= 0.0 {
            self.level
        } else {
            0.0
        }
    }

    /// Spatial density: level times the velocity volume of the fiber.
    #[must_use]
    pub fn rho(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        let g = (self.gamma.gamma() / (r * r)).min(1.0);
        self.level * 4.0 * PI / 3.0 * (1.0 - r * r).sqrt() * (1.0 - (1.0 - g).powf(1.5))
    }

    /// Own radial force m(r)/r^2 with m the enclosed mass.
    pub fn du_dr(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("force at r = {r}")));
        }
        let top = r.min(1.0);
        let mut f = |s: f64| 4.0 * PI * s * s * self.rho(s);
        let mass =
            integrate_with_knots(&mut f, 0.0, top, &[self.gamma.gamma().sqrt()], 24, 1);
        Ok(mass / (r * r))
    }
}

/// Static residual of the control state against its own force. Expected to
/// FAIL the z-gate for generic test functions: this calibrates the
/// statistical power of the harness.
pub fn control_static_residual(
    ctrl: &ControlState,
    tf: &TestFunction,
    spec: &QuadratureSpec,
) -> Result<ResidualReport> {
    // Resolve the force on a grid once; the quadrature per sample would
    // dominate otherwise.
    let m = 512;
    let forces: Vec<f64> =
        (0..=m).map(|j| ctrl.du_dr(1e-9 + (1.0 - 1e-9) * j as f64 / m as f64)).collect::<Result<_>>()?;
    let du = |r: f64| {
        let x = (r.clamp(1e-9, 1.0) - 1e-9) / (1.0 - 1e-9) * m as f64;
        let j = (x as usize).min(m - 1);
        let th = x - j as f64;
        forces[j] * (1.0 - th) + forces[j + 1] * th
    };
    let gamma = ctrl.gamma.gamma();
    let (estimate, mc_std_error) =
        mc_mean(spec.mc_samples, report_seed(spec, tf, 0xC0), |rng| {
            let Some(d) = draw_point(rng, gamma) else { return 0.0 };
            let f = ctrl.f_of_invariants(d.rc.u, d.rc.ell2);
            if f == 0.0 {
                return 0.0;
            }
            let jet = tf.eval(0.0, &d.point);
            let force = d.point.x.scale(du(d.rc.r) / d.rc.r);
            f * d.weight_ratio * (d.point.v.dot(jet.dx) - force.dot(jet.dv))
        })?;
    Ok(ResidualReport { estimate, mc_std_error, samples: spec.mc_samples })
}

/// Total mass by the same importance sampler (test function 1). Useful as
/// an end-to-end check of the sampler weights.
pub fn mc_mass(state: &SteadyState, spec: &QuadratureSpec) -> Result<ResidualReport> {
    let mut estimate = 0.0;
    let mut variance = 0.0;
    for (idx, (w, leaf)) in leaves(state).into_iter().enumerate() {
        let gamma = leaf_gamma(leaf);
        let (est, se) = mc_mean(
            spec.mc_samples,
            spec.seed.wrapping_add(idx as u64),
            |rng| {
                let Some(d) = draw_point(rng, gamma) else { return 0.0 };
                leaf.f_of_invariants(d.rc.u, d.rc.ell2) * d.weight_ratio
            },
        )?;
        estimate += w * est;
        variance += (w * se) * (w * se);
    }
    Ok(ResidualReport { estimate, mc_std_error: variance.sqrt(), samples: spec.mc_samples })
}

/// Monte Carlo estimate of the spacetime weak-form residual for the
/// transported state f(T_t(x, v)) along a radial trajectory, with the
/// rescaled ball potential. The test function must carry a time window
/// inside the trajectory span.
pub fn dynamic_residual(
    state: &SteadyState,
    traj: &Trajectory,
    tf: &TestFunction,
    spec: &QuadratureSpec,
) -> Result<ResidualReport> {
    let Some((t0, t1)) = tf.window() else {
        return Err(Error::InvalidParam("dynamic residual needs a windowed test function".into()));
    };
    let (ta, tb) = traj.t_span();
    if t0 < ta - 1e-12 || t1 > tb + 1e-12 {
        return Err(Error::Domain(format!(
            "window ({t0}, {t1}) outside trajectory span ({ta}, {tb})"
        )));
    }
    let mut estimate = 0.0;
    let mut variance = 0.0;
    for (idx, (w, leaf)) in leaves(state).into_iter().enumerate() {
        let gamma = leaf_gamma(leaf);
        let (est, se) = mc_mean(
            spec.mc_samples,
            report_seed(spec, tf, 0xD0 + idx as u64),
            |rng| {
                let t = rng.gen_range(t0..t1);
                let Some(d) = draw_point(rng, gamma) else { return 0.0 };
                let f = leaf.f_of_invariants(d.rc.u, d.rc.ell2);
                if f == 0.0 {
                    return 0.0;
                }
                let st = traj.state_at(t).expect("time inside span");
                let lab = transport_from_comoving(st.phi, st.phi_dot, &d.point);
                let jet = tf.eval(t, &lab);
                let force = grad_u_kurth(lab.x.scale(1.0 / st.phi)).scale(1.0 / (st.phi * st.phi));
                (t1 - t0)
                    * f
                    * d.weight_ratio
                    * (jet.dt + lab.v.dot(jet.dx) - force.dot(jet.dv))
            },
        )?;
        estimate += w * est;
        variance += (w * se) * (w * se);
    }
    Ok(ResidualReport { estimate, mc_std_error: variance.sqrt(), samples: spec.mc_samples })
}

/// L1 distance between the transported state at times t0 + dt and t0,
///
/// ```text
///     || f o T_{t0+dt} - f o T_{t0} ||_1,
/// ```
///
/// estimated with a symmetrized proposal so both supports are covered.
/// Tends to zero as dt -> 0 and at full-period shifts.
pub fn transport_l1_continuity(
    state: &SteadyState,
    traj: &Trajectory,
    t0: f64,
    dt: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if dt == 0.0 {
        return Ok(0.0);
    }
    let a = traj.state_at(t0)?;
    let b = traj.state_at(t0 + dt)?;
    let parts = leaves(state);
    let density = |p: &PhasePoint| -> f64 {
        parts.iter().map(|(w, leaf)| w * proposal_density(leaf_gamma(leaf), p)).sum()
    };
    // z -> T_{t0+dt}(S_{t0}(z)) moves the state between the two times.
    let push = |p: &PhasePoint| {
        transport_to_comoving(b.phi, b.phi_dot, &transport_from_comoving(a.phi, a.phi_dot, p))
    };
    let pull = |p: &PhasePoint| {
        transport_to_comoving(a.phi, a.phi_dot, &transport_from_comoving(b.phi, b.phi_dot, p))
    };
    let n_parts = parts.len();
    let (mean, _se) = mc_mean(spec.mc_samples, spec.seed.wrapping_add(0xE0), |rng| {
        // Mixture component, then a chart draw, then a coin for which side
        // of the map the proposal lands on.
        let pick: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        let mut chosen = n_parts - 1;
        for (i, (w, _)) in parts.iter().enumerate() {
            acc += w;
            if pick < acc {
                chosen = i;
                break;
            }
        }
        let Some(d) = draw_point(rng, leaf_gamma(parts[chosen].1)) else { return 0.0 };
        let z = if rng.gen_range(0.0..1.0) < 0.5 { d.point } else { pull(&d.point) };
        let fz = state.f(&z);
        let fpz = state.f(&push(&z));
        if fz == fpz {
            return 0.0;
        }
        let q_sym = 0.5 * (density(&z) + density(&push(&z)));
        if q_sym <= 0.0 {
            return 0.0;
        }
        (fpz - fz).abs() / q_sym
    })?;
    Ok(mean)
}
