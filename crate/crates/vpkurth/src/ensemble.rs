//! Convex combinations of the steady family, and a finite witness of the
//! linear independence of its members.
//!
//! Every member shares the uniform ball density, so convex combinations in
//! the weights are again steady states with the same density. Independence
//! of distinct members is witnessed at evaluation level: each f_Gamma blows
//! up on its own interior shell, so the matrix of values at probe points
//! approaching those shells becomes diagonally dominated, and its smallest
//! singular value grows as the probes close in.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::abel::{PhiEvaluator, ProfileBuildSpec, ProfileTable};
use crate::error::{Error, Result};
use crate::funceq::GammaParam;
use crate::geom::{PhasePoint, Vec3};
use crate::steady::{q_weight, SteadyState};

/// Convex combination of family members with the given weights. Parameters
/// must be pairwise distinct; weights are validated by the mixture
/// constructor. Isotropic components use the closed form, anisotropic ones
/// are built through the profile pipeline.
pub fn mix(components: &[(GammaParam, f64)], build: ProfileBuildSpec) -> Result<SteadyState> {
    if components.is_empty() {
        return Err(Error::InvalidParam("mix: no components".into()));
    }
    for (i, (gi, _)) in components.iter().enumerate() {
        for (gj, _) in components.iter().skip(i + 1) {
            if gi.one_minus_gamma() == gj.one_minus_gamma() {
                return Err(Error::InvalidParam(format!(
                    "mix: duplicate parameter {}",
                    gi.gamma()
                )));
            }
        }
    }
    let mut parts = Vec::with_capacity(components.len());
    for &(gamma, weight) in components {
        let state = if gamma.is_isotropic() {
            SteadyState::kurth()
        } else {
            SteadyState::from_profile(ProfileTable::build(gamma, build)?)?
        };
        parts.push((weight, state));
    }
    if parts.len() == 1 {
        return Ok(parts.pop().expect("single component").1);
    }
    SteadyState::mixture(parts)
}

/// Singular values of one witness matrix, largest first.
#[derive(Clone, Debug, Serialize)]
pub struct WitnessRow {
    /// Distance of the probes from their singular shells, in the invariant
    /// w = |x|^2 + |v|^2 - |x /\ v|^2.
    pub delta: f64,
    pub singular_values: Vec<f64>,
}

impl WitnessRow {
    #[must_use]
    pub fn sigma_min(&self) -> f64 {
        *self.singular_values.last().expect("nonempty spectrum")
    }

    #[must_use]
    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    /// Numerical rank at relative threshold `tol`.
    #[must_use]
    pub fn rank(&self, tol: f64) -> usize {
        let cut = self.sigma_max() * tol;
        self.singular_values.iter().filter(|s| **s > cut).count()
    }
}

/// Probe just below the singular shell of the member with parameter Gamma:
/// radius 1/2, purely tangential velocity, and w = Gamma - delta.
fn probe_point(gamma: f64, delta: f64) -> Result<PhasePoint> {
    let ell2 = (gamma - delta - 0.25) / 3.0;
    if !(delta > 0.0 && ell2 > 0.0) {
        return Err(Error::Domain(format!(
            "witness probe at distance {delta} from w = {gamma} leaves the support"
        )));
    }
    Ok(PhasePoint::new(Vec3::new(0.0, 0.0, 0.5), Vec3::new(2.0 * ell2.sqrt(), 0.0, 0.0)))
}

/// Probe-distance ladder in w: geometric descent from a fraction of the
/// smallest shell offset 1 - Gamma. Deep distances are where the diagonal
/// blow-up overtakes the shared support-edge growth of all members.
#[must_use]
pub fn default_probe_distances(gammas: &[GammaParam], levels: usize) -> Vec<f64> {
    let a_min =
        gammas.iter().map(|g| g.one_minus_gamma()).fold(f64::INFINITY, f64::min).min(0.5);
    (1..=levels).map(|m| a_min * 0.25f64.powi(3 * m as i32)).collect()
}

/// Evaluate the witness matrices M[i][j] = f_{Gamma_j}(probe_i) over the
/// probe-distance ladder and return their singular spectra. Parameters must
/// be distinct; the isotropic member is allowed and evaluated in closed
/// form.
pub fn independence_witness(
    gammas: &[GammaParam],
    build: ProfileBuildSpec,
    deltas: &[f64],
) -> Result<Vec<WitnessRow>> {
    if gammas.is_empty() || deltas.is_empty() {
        return Err(Error::InvalidParam("witness: empty parameter or distance list".into()));
    }
    for (i, gi) in gammas.iter().enumerate() {
        for gj in gammas.iter().skip(i + 1) {
            if gi.one_minus_gamma() == gj.one_minus_gamma() {
                return Err(Error::InvalidParam(format!(
                    "witness: duplicate parameter {}",
                    gi.gamma()
                )));
            }
        }
    }
    let evals: Vec<Option<PhiEvaluator>> = gammas
        .iter()
        .map(|g| {
            if g.is_isotropic() { Ok(None) } else { PhiEvaluator::new(*g, build).map(Some) }
        })
        .collect::<Result<_>>()?;
    let n = gammas.len();
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let p = probe_point(gammas[i].gamma(), delta)?;
            let u = p.ell_squared() - p.x.norm_squared() - p.v.norm_squared();
            let ell2 = p.ell_squared();
            for j in 0..n {
                if ell2 > gammas[j].gamma() {
                    continue;
                }
                m[(i, j)] = match &evals[j] {
                    None => {
                        3.0 / (4.0 * std::f64::consts::PI.powi(3)) / (1.0 + u).sqrt()
                    }
                    Some(ev) => q_weight(ev, u)?,
                };
            }
        }
        let mut sv: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
        rows.push(WitnessRow { delta, singular_values: sv });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::QuadratureSpec;
    use crate::steady::density_radii;
    use crate::weakcheck::{static_residual, TestFunction};

    fn g(k: u32) -> GammaParam {
        GammaParam::from_exponent(k).unwrap()
    }

    #[test]
    fn single_component_mix_is_the_member_itself() {
        let state = mix(&[(g(12), 1.0)], ProfileBuildSpec::default()).unwrap();
        assert!(matches!(state, SteadyState::Anisotropic(_)));
        let direct =
            SteadyState::from_profile(ProfileTable::build(g(12), ProfileBuildSpec::default()).unwrap())
                .unwrap();
        for (u, l2) in [(-0.5, 0.2), (-0.9, 0.01), (-0.2, 0.6)] {
            assert_eq!(state.f_of_invariants(u, l2), direct.f_of_invariants(u, l2));
        }
    }

    #[test]
    fn mix_rejects_duplicates_and_bad_weights() {
        let build = ProfileBuildSpec::default();
        assert!(mix(&[], build).is_err());
        assert!(mix(&[(g(12), 0.5), (g(12), 0.5)], build).is_err());
        assert!(mix(&[(g(12), 0.7), (g(13), 0.7)], build).is_err());
    }

    #[test]
    fn half_half_mixture_keeps_the_uniform_density() {
        let spec = QuadratureSpec::default();
        let state = mix(&[(g(12), 0.5), (g(13), 0.5)], ProfileBuildSpec::default()).unwrap();
        for r in [0.3, 0.85, 0.999] {
            let rho = state.rho(r, &spec).unwrap();
            let rel = (rho * 4.0 * std::f64::consts::PI / 3.0 - 1.0).abs();
            assert!(rel < 1e-5, "r = {r}: {rel}");
        }
        let _ = density_radii(&g(12), 8);
    }

    #[test]
    fn mixture_passes_the_static_residual_gate() {
        let spec = QuadratureSpec { mc_samples: 30_000, seed: 61, ..QuadratureSpec::default() };
        let state = mix(
            &[(GammaParam::isotropic(), 0.4), (g(12), 0.3), (g(14), 0.3)],
            ProfileBuildSpec::default(),
        )
        .unwrap();
        for seed in 0..2 {
            let tf = TestFunction::random(7000 + seed);
            let rep = static_residual(&state, &tf, &spec).unwrap();
            assert!(rep.passes(2), "seed {seed}: {rep:?}, z = {}", rep.z());
        }
    }

    #[test]
    fn single_member_witness_is_trivially_independent() {
        let rows =
            independence_witness(&[GammaParam::isotropic()], ProfileBuildSpec::default(), &[1e-6])
                .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rank(1e-12), 1);
        assert!(rows[0].sigma_min() > 0.0);
    }

    #[test]
    fn witness_rank_grows_with_the_family_and_the_probe_depth() {
        let pair = [g(12), g(13)];
        let deltas = default_probe_distances(&pair, 4);
        let rows = independence_witness(&pair, ProfileBuildSpec::default(), &deltas).unwrap();
        for row in &rows {
            assert_eq!(row.rank(1e-12), 2, "{row:?}");
        }
        for w in rows.windows(2) {
            assert!(
                w[1].sigma_min() > w[0].sigma_min(),
                "sigma_min not growing: {} then {}",
                w[0].sigma_min(),
                w[1].sigma_min()
            );
        }

        let ladder = [g(12), g(13), g(14), g(15)];
        let deltas = default_probe_distances(&ladder, 4);
        let rows = independence_witness(&ladder, ProfileBuildSpec::default(), &deltas).unwrap();
        for row in &rows {
            assert_eq!(row.rank(1e-12), 4, "{row:?}");
        }
        for w in rows.windows(2) {
            assert!(w[1].sigma_min() > w[0].sigma_min());
        }
    }

    #[test]
    fn witness_rejects_probes_outside_the_support() {
        assert!(probe_point(0.999, 0.9).is_err());
        assert!(
            independence_witness(&[g(12), g(12)], ProfileBuildSpec::default(), &[1e-8]).is_err()
        );
    }
}
