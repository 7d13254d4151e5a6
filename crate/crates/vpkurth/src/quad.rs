//! Quadrature toolbox.
//!
//! Everything downstream integrates functions with inverse-square-root
//! kernels or square-root vanishing at interval ends. The rule throughout
//! the crate: never apply a polynomial rule to a 1/sqrt integrand directly;
//! substitute sigma = anchor +- tau^2 so the composed integrand is smooth,
//! then use Gauss-Legendre. The helpers here package that pattern.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Node counts and control knobs for the deterministic quadratures and the
/// Monte Carlo routes. Serializes to JSON so runs can be reproduced from a
/// config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per radial panel.
    pub radial_nodes: usize,
    /// Gauss-Legendre nodes per radial-momentum panel.
    pub pr_nodes: usize,
    /// Gauss-Legendre nodes per panel of the scalar (u or s) integrals.
    pub u_nodes: usize,
    /// Nodes per Euler angle in the rotation-group rule.
    pub euler_nodes: usize,
    /// Sample count for Monte Carlo estimators.
    pub mc_samples: usize,
    /// Seed for all randomized routes.
    pub seed: u64,
    /// Target accuracy for iterative truncations and build self-checks.
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            radial_nodes: 24,
            pr_nodes: 24,
            u_nodes: 32,
            euler_nodes: 12,
            mc_samples: 40_000,
            seed: 42,
            tol: 1e-9,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 2 || self.pr_nodes < 2 || self.u_nodes < 2 || self.euler_nodes < 2 {
            return Err(Error::InvalidParam("node counts must be at least 2".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidParam("mc_samples must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParam("tol must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
pub fn gauss_legendre(n: usize) -> std::sync::Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, std::sync::Arc<Vec<(f64, f64)>>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    if let Some(rule) = map.get(&n) {
        return rule.clone();
    }
    let rule = std::sync::Arc::new(compute_gauss_legendre(n));
    map.insert(n, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pair(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (p2, d2) = legendre_pair(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre on [a, b] for a smooth integrand.
pub fn integrate_gl(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let rule = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for &(x, w) in rule.iter() {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Composite Gauss-Legendre with `panels` equal panels.
pub fn integrate_panels(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, n: usize, panels: usize) -> f64 {
    let panels = panels.max(1);
    let mut sum = 0.0;
    for k in 0..panels {
        let x0 = a + (b - a) * k as f64 / panels as f64;
        let x1 = a + (b - a) * (k + 1) as f64 / panels as f64;
        sum += integrate_gl(f, x0, x1, n);
    }
    sum
}

/// Integrate f over [a, b] with a square-root change of variables anchored at
/// one end: sigma = a + tau^2 (anchor at a) or sigma = b - tau^2 (anchor at b).
/// This removes 1/sqrt kernel singularities and sqrt-type kinks at the anchor.
pub fn integrate_sqrt_anchored(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    anchor_left: bool,
    n: usize,
    panels: usize,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let tmax = (b - a).sqrt();
    let mut g = |t: f64| {
        let sigma = if anchor_left { a + t * t } else { b - t * t };
        2.0 * t * f(sigma)
    };
    integrate_panels(&mut g, 0.0, tmax, n, panels)
}

/// Integrate over [a, b] with sqrt anchoring at both ends (split at midpoint).
pub fn integrate_two_sided(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, n: usize, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mid = 0.5 * (a + b);
    integrate_sqrt_anchored(f, a, mid, true, n, panels)
        + integrate_sqrt_anchored(f, mid, b, false, n, panels)
}

/// Integrate over [a, b] with interior singular knots. Every knot and both
/// endpoints become sqrt anchors, so integrands with inverse-square-root or
/// square-root behaviour at any of those points are handled accurately.
pub fn integrate_with_knots(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    knots: &[f64],
    n: usize,
    panels: usize,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = vec![a, b];
    for &k in knots {
        if k > a && k < b {
            cuts.push(k);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut sum = 0.0;
    for w in cuts.windows(2) {
        sum += integrate_two_sided(f, w[0], w[1], n, panels);
    }
    sum
}

/// Quadrature rule over the rotation group in Z-Y-Z Euler angles, with total
/// weight 8 pi^2 (the Haar measure sin(beta) d(alpha) d(beta) d(delta)).
pub struct So3Rule {
    /// (alpha, beta, delta, weight) tuples; weights sum to 8 pi^2.
    pub nodes: Vec<(f64, f64, f64, f64)>,
}

pub fn so3_rule(euler_nodes: usize) -> So3Rule {
    let m = euler_nodes.max(2);
    let two_pi = 2.0 * std::f64::consts::PI;
    // Periodic trapezoid in alpha and delta is spectrally accurate.
    let wa = two_pi / m as f64;
    let beta_rule = gauss_legendre(m);
    let mut nodes = Vec::with_capacity(m * m * m);
    for ia in 0..m {
        let alpha = wa * ia as f64;
        for &(xb, wb) in beta_rule.iter() {
            let beta = 0.5 * std::f64::consts::PI * (xb + 1.0);
            let w_beta = wb * 0.5 * std::f64::consts::PI * beta.sin();
            for id in 0..m {
                let delta = wa * id as f64;
                nodes.push((alpha, beta, delta, wa * w_beta * wa));
            }
        }
    }
    So3Rule { nodes }
}

/// Chebyshev interpolant on [a, b].
#[derive(Clone, Debug)]
pub struct Cheb {
    pub a: f64,
    pub b: f64,
    /// Coefficients c_k of sum_k c_k T_k(y), with the k = 0 term taken as c_0 / 2.
    pub c: Vec<f64>,
}

impl Cheb {
    /// Interpolate f at n first-kind Chebyshev points of [a, b].
    pub fn fit(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> Cheb {
        assert!(n >= 2 && b > a);
        let nf = n as f64;
        let vals: Vec<f64> = (0..n)
            .map(|j| {
                let y = (std::f64::consts::PI * (j as f64 + 0.5) / nf).cos();
                f(0.5 * (a + b) + 0.5 * (b - a) * y)
            })
            .collect();
        let mut c = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, vj) in vals.iter().enumerate() {
                s += vj * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / nf).cos();
            }
            *ck = 2.0 * s / nf;
        }
        Cheb { a, b, c }
    }

    /// Clenshaw evaluation.
    #[must_use]
    pub fn eval(&self, x: f64) -> f64 {
        let y = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let y2 = 2.0 * y;
        let mut d = 0.0;
        let mut dd = 0.0;
        for &ck in self.c.iter().skip(1).rev() {
            let sv = d;
            d = y2 * d - dd + ck;
            dd = sv;
        }
        y * d - dd + 0.5 * self.c[0]
    }

    /// Magnitude of the trailing coefficients, a cheap convergence indicator.
    #[must_use]
    pub fn tail_magnitude(&self) -> f64 {
        let n = self.c.len();
        self.c[n.saturating_sub(3)..]
            .iter()
            .fold(0.0_f64, |m, &x| m.max(x.abs()))
    }
}
