//! End-to-end acceptance gate. One test per shipping criterion; each prints
//! a single `criterion N: PASS (...)` line (visible with --nocapture) and
//! the test name itself doubles as the pass/fail record in the harness
//! output. Tolerances are pinned here, not read from anywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpkurth::abel::{phi_kurth, PhiEvaluator, ProfileBuildSpec, ProfileTable};
use vpkurth::ensemble::{default_probe_distances, independence_witness, mix};
use vpkurth::funceq::{self, GammaParam};
use vpkurth::geom::{PhasePoint, Vec3};
use vpkurth::kurth::{f_kurth, RHO_BALL};
use vpkurth::orbit::{integrate, period_closed_form, period_quadrature, PeriodicOrbit};
use vpkurth::quad::QuadratureSpec;
use vpkurth::reduction::{self, in_support, support_region, to_reduced};
use vpkurth::steady::{density_radii, density_sweep, l1_sweep, SteadyState};
use vpkurth::weakcheck::{
    control_static_residual, dynamic_residual, static_residual, ControlState, TestFunction,
};

fn profile_state(k: u32) -> SteadyState {
    let table =
        ProfileTable::build(GammaParam::from_exponent(k).unwrap(), ProfileBuildSpec::default())
            .unwrap();
    SteadyState::from_profile(table).unwrap()
}

#[test]
fn criterion_01_functional_equation() {
    let mut worst = 0.0_f64;
    for k in [12, 16] {
        let g = GammaParam::from_exponent(k).unwrap();
        let a = g.one_minus_gamma();
        let n = 10_000;
        // Points on both branches; a uniform grid would skip the series
        // interval entirely once 1 - Gamma drops below the spacing.
        for j in 1..=n {
            let s = if j <= n / 2 {
                a * j as f64 / (n / 2) as f64
            } else {
                a + (1.0 - a) * (j - n / 2) as f64 / (n / 2) as f64
            };
            let lhs = funceq::psi(&g, s).unwrap();
            let rhs = funceq::psi(&g, funceq::h(&g, s)).unwrap();
            worst = worst.max((lhs - rhs - s).abs());
        }
    }
    assert!(worst <= 1e-10, "functional equation residual {worst:e}");
    println!("criterion 1: PASS (max |psi(s) - psi(h(s)) - s| = {worst:e})");
}

#[test]
fn criterion_02_boundary_data() {
    let mut worst_value = 0.0_f64;
    let mut worst_slope = 0.0_f64;
    for k in [12, 16] {
        let g = GammaParam::from_exponent(k).unwrap();
        let a = g.one_minus_gamma();
        let gam = g.gamma();
        worst_value = worst_value.max(funceq::psi(&g, 0.0).unwrap().abs());
        // Value continuity at the branch split, measured on the series side.
        worst_value = worst_value.max((funceq::psi_tilde_jet(&g, a).unwrap().value - a).abs());
        worst_slope =
            worst_slope.max((funceq::psi_prime(&g, 0.0).unwrap() - 1.0 / gam).abs());
        let inner_limit = funceq::psi_tilde_jet(&g, a).unwrap().d1;
        worst_slope = worst_slope.max((inner_limit - (1.0 - a / (gam * gam))).abs());
    }
    assert!(worst_value <= 1e-12, "boundary value error {worst_value:e}");
    assert!(worst_slope <= 1e-8, "boundary slope error {worst_slope:e}");
    println!(
        "criterion 2: PASS (value error {worst_value:e}, slope error {worst_slope:e})"
    );
}

#[test]
fn criterion_03_series_bounds() {
    let mut checked = 0usize;
    for k in [12, 16] {
        let g = GammaParam::from_exponent(k).unwrap();
        let a = g.one_minus_gamma();
        let cap0 = 4.0 * a.cbrt();
        let cap2 = 64.0 / a.cbrt();
        for j in 1..=1000 {
            let s = a * j as f64 / 1000.0;
            let jet = funceq::psi_tilde_jet(&g, s).unwrap();
            assert!(jet.value.abs() <= cap0, "k={k} s={s}: value {} > {cap0}", jet.value);
            assert!(jet.d1.abs() <= 16.0, "k={k} s={s}: slope {}", jet.d1);
            assert!(jet.d2.abs() <= cap2, "k={k} s={s}: curvature {} > {cap2}", jet.d2);
            checked += 1;
        }
    }
    println!("criterion 3: PASS ({checked} nodes, zero envelope violations)");
}

/// Independent route for the profile: the half-order integral identity is a
/// first-kind Volterra equation int_0^s phi(y) / sqrt(s - y) dy = psi(s)/pi,
/// discretized by product integration with a piecewise-linear unknown on a
/// quadratically graded mesh (grading makes the sqrt endpoint behavior of
/// phi linear in the mesh index) and solved by forward substitution.
fn volterra_profile(g: &GammaParam, mesh: &[f64]) -> Vec<f64> {
    let n = mesh.len();
    let mut phi = vec![0.0_f64; n];
    for i in 1..n {
        let s = mesh[i];
        let mut acc = 0.0;
        let mut c_prev = 0.0; // coefficient of phi[j-1] carried from panel j
        let mut diag = 0.0;
        for j in 1..=i {
            let (a, b) = (mesh[j - 1], mesh[j]);
            let h = b - a;
            let (ra, rb) = ((s - a).sqrt(), (s - b).max(0.0).sqrt());
            let m0 = 2.0 * (ra - rb);
            let m1 = (s - a) * m0 - (2.0 / 3.0) * ((s - a) * ra - (s - b).max(0.0) * rb);
            let w_left = m0 - m1 / h;
            let w_right = m1 / h;
            if j == i {
                acc += (c_prev + w_left) * phi[j - 1];
                diag = w_right;
            } else {
                acc += (c_prev + w_left) * phi[j - 1];
                c_prev = w_right;
            }
        }
        let target = funceq::psi(g, s).unwrap() / std::f64::consts::PI;
        phi[i] = (target - acc) / diag;
    }
    phi
}

#[test]
fn criterion_04_abel_consistency() {
    let g = GammaParam::from_exponent(12).unwrap();
    let build = ProfileBuildSpec { check_nodes: 256, ..ProfileBuildSpec::default() };
    let ev = PhiEvaluator::new(g, build).unwrap();
    let residual = ev.abel_residual().unwrap();
    assert!(residual <= 1e-6, "half-integral identity residual {residual:e}");

    let a = g.one_minus_gamma();
    let (m_in, m_out) = (200usize, 2000usize);
    let mut mesh: Vec<f64> =
        (0..=m_in).map(|j| a * (j as f64 / m_in as f64).powi(2)).collect();
    mesh.extend((1..=m_out).map(|j| a + (1.0 - a) * (j as f64 / m_out as f64).powi(2)));
    let solved = volterra_profile(&g, &mesh);
    let mut sup = 0.0_f64;
    for (s, v) in mesh.iter().zip(&solved).skip(1) {
        sup = sup.max((v - ev.phi(*s).unwrap()).abs());
    }
    assert!(sup <= 1e-5, "Volterra oracle sup gap {sup:e}");
    println!(
        "criterion 4: PASS (identity residual {residual:e}, Volterra oracle gap {sup:e})"
    );
}

#[test]
fn criterion_05_isotropic_closed_forms() {
    let g = GammaParam::isotropic();
    let ev = PhiEvaluator::new(g, ProfileBuildSpec::default()).unwrap();
    let mut worst_phi = 0.0_f64;
    for j in 1..=10_000 {
        let s = j as f64 / 10_000.0;
        worst_phi = worst_phi.max((ev.phi(s).unwrap() - phi_kurth(s)).abs());
    }
    assert!(worst_phi <= 1e-10, "profile gap to 2 sqrt(s) / pi^2: {worst_phi:e}");

    let table = ProfileTable::build(g, ProfileBuildSpec::default()).unwrap();
    let state = SteadyState::from_profile(table).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_rel = 0.0_f64;
    let mut drawn = 0usize;
    while drawn < 10_000 {
        let p = PhasePoint::new(
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        );
        let reference = f_kurth(&p);
        if reference <= 0.0 {
            continue;
        }
        drawn += 1;
        worst_rel = worst_rel.max((state.f(&p) - reference).abs() / reference);
    }
    assert!(worst_rel <= 1e-9, "distribution gap to the closed form: {worst_rel:e}");
    println!("criterion 5: PASS (profile gap {worst_phi:e}, relative f gap {worst_rel:e})");
}

#[test]
fn criterion_06_slope_brackets_and_monotone_limit() {
    for k in [12, 16] {
        let ev =
            PhiEvaluator::new(GammaParam::from_exponent(k).unwrap(), ProfileBuildSpec::default())
                .unwrap();
        let a = ev.gamma().one_minus_gamma();
        for j in 1..1000 {
            for s in [a * j as f64 / 1000.0, a + (1.0 - a) * j as f64 / 1000.0] {
                let (lo, hi) = ev.phi_prime_brackets(s).unwrap();
                let d = ev.phi_prime(s).unwrap();
                assert!(d >= lo && d <= hi, "k={k} s={s}: slope {d} outside [{lo}, {hi}]");
            }
        }
    }
    let mut prev = f64::NEG_INFINITY;
    for k in 12..=20 {
        let ev =
            PhiEvaluator::new(GammaParam::from_exponent(k).unwrap(), ProfileBuildSpec::default())
                .unwrap();
        let l = ev.l_gamma().unwrap();
        assert!(l > prev, "k={k}: central value {l} did not increase past {prev}");
        prev = l;
    }
    println!("criterion 6: PASS (brackets hold on both branches, central value increasing)");
}

#[test]
fn criterion_07_uniform_density() {
    let g = GammaParam::from_exponent(12).unwrap();
    let state = profile_state(12);
    let spec = QuadratureSpec::default();
    let rows = density_sweep(&state, &density_radii(&g, 64), &spec).unwrap();
    let worst = rows.iter().map(|r| r.abs_error).fold(0.0_f64, f64::max);
    assert!(worst <= 1e-5, "density deviation {worst:e}");
    for r in [1.0 + 1e-9, 1.1, 2.0] {
        assert_eq!(state.rho(r, &spec).unwrap(), 0.0, "density must vanish at r = {r}");
    }

    // Cross-oracle: direct quadrature of f over the velocity fiber against
    // the branch-formula route, at a generic radius and astride the seam.
    let gamma = g.gamma();
    let a = g.one_minus_gamma();
    let vspec = QuadratureSpec { pr_nodes: 32, u_nodes: 32, ..QuadratureSpec::default() };
    let mut worst_cross = 0.0_f64;
    for r in [0.5, 0.9, (gamma * (1.0 - 2e-4)).sqrt(), (gamma * (1.0 + 2e-4)).sqrt()] {
        let s = (1.0 - r) * (1.0 + r);
        let scale = (1.0 - r * r) / (r * r);
        let f = |p_r: f64, l2: f64| state.f_of_invariants(-(r * r) - p_r * p_r - l2 * scale, l2);
        let ell2_knots =
            |p_r: f64| vec![(s - p_r * p_r) / scale, (s - p_r * p_r - a) / scale, gamma];
        let gbar = reduction::gamma_bar(r, gamma).unwrap();
        let mut pk = vec![0.0, s.sqrt(), -(s.sqrt())];
        if gbar < 1.0 {
            pk.push((1.0 - gbar).sqrt());
            pk.push(-((1.0 - gbar).sqrt()));
        }
        let direct =
            reduction::velocity_integral_symmetric(&f, r, 1.0, &ell2_knots, &pk, &vspec).unwrap();
        let branch = state.rho(r, &vspec).unwrap();
        worst_cross = worst_cross.max((direct - branch).abs() / RHO_BALL);
    }
    assert!(worst_cross <= 1e-5, "route disagreement {worst_cross:e}");
    println!("criterion 7: PASS (max deviation {worst:e}, cross-oracle gap {worst_cross:e})");
}

#[test]
fn criterion_08_unit_mass_two_routes() {
    let spec = QuadratureSpec::default();
    let state = profile_state(12);
    let reduced = state.total_mass(&spec).unwrap();
    let via_density = state.total_mass_via_density(&spec).unwrap();
    assert!((reduced - 1.0).abs() <= 1e-5, "reduced-chart mass {reduced}");
    assert!((via_density - 1.0).abs() <= 1e-5, "density-route mass {via_density}");
    let kurth = SteadyState::kurth().total_mass(&spec).unwrap();
    assert!((kurth - 1.0).abs() <= 1e-5, "isotropic mass {kurth}");
    println!(
        "criterion 8: PASS (reduced {reduced}, via density {via_density}, isotropic {kurth})"
    );
}

#[test]
fn criterion_09_l1_bifurcation_trend() {
    let rows = l1_sweep(12, 20, ProfileBuildSpec::default(), &QuadratureSpec::default()).unwrap();
    for w in rows.windows(2) {
        assert!(
            w[1].l1_distance < w[0].l1_distance,
            "distance failed to decrease: {} -> {}",
            w[0].l1_distance,
            w[1].l1_distance
        );
    }
    // Sweep-calibrated cap: the observed ratio tops out near 6e-5 at the
    // widest member and only falls from there.
    let worst_ratio = rows.iter().map(|r| r.ratio_to_rate).fold(0.0_f64, f64::max);
    assert!(worst_ratio <= 1e-4, "rate ratio {worst_ratio} above the calibrated cap");
    println!(
        "criterion 9: PASS (strictly decreasing over k = 12..20, max rate ratio {worst_ratio:e})"
    );
}

#[test]
fn criterion_10_orbit_invariants() {
    for eps in [0.1, 0.5, 0.9] {
        let orbit = PeriodicOrbit::new(eps).unwrap();
        let closed = period_closed_form(eps).unwrap();
        let quad = period_quadrature(eps).unwrap();
        assert!((closed - quad).abs() <= 1e-10 * closed, "eps={eps}: {closed} vs {quad}");

        let one = integrate(orbit.initial_state(), orbit.period, 1e-12).unwrap();
        let end = one.end_state();
        assert!((end.phi - 1.0).abs() <= 1e-8, "eps={eps}: return radius {}", end.phi);
        assert!((end.phi_dot - eps).abs() <= 1e-8, "eps={eps}: return speed {}", end.phi_dot);

        let ten = integrate(orbit.initial_state(), 10.0 * orbit.period, 1e-12).unwrap();
        assert!(
            ten.max_energy_drift() <= 1e-9,
            "eps={eps}: drift {} over ten periods",
            ten.max_energy_drift()
        );
        let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
        for (_, phi) in ten.extrema() {
            lo = lo.min(phi);
            hi = hi.max(phi);
        }
        assert!((lo - 1.0 / (1.0 + eps)).abs() <= 1e-8, "eps={eps}: inner turning {lo}");
        assert!((hi - 1.0 / (1.0 - eps)).abs() <= 1e-8, "eps={eps}: outer turning {hi}");
    }
    let t_half = period_closed_form(0.5).unwrap();
    assert!((t_half - 9.6735966).abs() <= 5e-8, "reference period {t_half}");
    println!("criterion 10: PASS (turning points, dual periods, return, drift at three eccentricities)");
}

#[test]
fn criterion_11_residual_gates_with_control() {
    let spec = QuadratureSpec::default();
    let tests = 20usize;
    let g12 = GammaParam::from_exponent(12).unwrap();
    let g14 = GammaParam::from_exponent(14).unwrap();
    let states = [
        ("isotropic", SteadyState::kurth()),
        ("anisotropic", profile_state(12)),
        (
            "mixture",
            mix(
                &[(GammaParam::isotropic(), 0.4), (g12, 0.3), (g14, 0.3)],
                ProfileBuildSpec::default(),
            )
            .unwrap(),
        ),
    ];
    for (name, state) in &states {
        for i in 0..tests {
            let tf = TestFunction::random(100 * (1 + i as u64) + 7);
            let rep = static_residual(state, &tf, &spec).unwrap();
            assert!(
                rep.passes(tests),
                "{name}: test function {} tripped the gate, z = {}",
                tf.seed(),
                rep.z()
            );
        }
    }

    let orbit = PeriodicOrbit::new(0.5).unwrap();
    let traj = integrate(orbit.initial_state(), orbit.period, 1e-12).unwrap();
    let transported = profile_state(12);
    for i in 0..tests {
        let tf = TestFunction::random_in_window(
            100 * (1 + i as u64) + 7,
            0.1 * orbit.period,
            0.9 * orbit.period,
        )
        .unwrap();
        let rep = dynamic_residual(&transported, &traj, &tf, &spec).unwrap();
        assert!(
            rep.passes(tests),
            "transported: test function {} tripped the gate, z = {}",
            tf.seed(),
            rep.z()
        );
    }

    let control = ControlState::flat(g12);
    let rep = control_static_residual(&control, &TestFunction::virial(), &spec).unwrap();
    assert!(
        !rep.passes(tests),
        "the deliberate non-solution slipped through the gate, z = {}",
        rep.z()
    );
    println!(
        "criterion 11: PASS (four solution suites x {tests} test functions pass, control fails at z = {:.1})",
        rep.z()
    );
}

#[test]
fn criterion_12_support_classification() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for gamma in [1.0, GammaParam::from_exponent(12).unwrap().gamma()] {
        let mut checked = 0usize;
        while checked < 100_000 {
            let p = PhasePoint::new(
                Vec3::new(
                    rng.gen_range(-1.15..1.15),
                    rng.gen_range(-1.15..1.15),
                    rng.gen_range(-1.15..1.15),
                ),
                Vec3::new(
                    rng.gen_range(-1.15..1.15),
                    rng.gen_range(-1.15..1.15),
                    rng.gen_range(-1.15..1.15),
                ),
            );
            let Ok(rc) = to_reduced(&p) else { continue };
            checked += 1;
            // Region route in the (r, p_r, u) chart.
            let region = support_region(rc.r, gamma).unwrap().contains(rc.p_r, rc.u);
            // Library inequality route.
            let member = in_support(&p, gamma);
            // From-scratch inequality oracle on the raw coordinates.
            let l2 = p.x.cross(p.v).norm_squared();
            let u = l2 - p.x.norm_squared() - p.v.norm_squared();
            let direct = (-1.0..=0.0).contains(&u) && l2 <= gamma;
            assert_eq!(region, member, "routes disagree at {p:?} (gamma {gamma})");
            assert_eq!(member, direct, "oracle disagrees at {p:?} (gamma {gamma})");
            if member {
                assert!(
                    p.x.norm_squared() <= 1.0 && p.v.norm_squared() <= 1.0,
                    "support point outside the unit balls: {p:?}"
                );
            }
        }
    }
    println!("criterion 12: PASS (200000 points, zero classification discrepancies)");
}

#[test]
fn criterion_13_independence_witness() {
    let gammas: Vec<GammaParam> =
        (12..=15).map(|k| GammaParam::from_exponent(k).unwrap()).collect();
    let deltas = default_probe_distances(&gammas, 4);
    let rows = independence_witness(&gammas, ProfileBuildSpec::default(), &deltas).unwrap();
    for row in &rows {
        assert_eq!(row.rank(1e-12), gammas.len(), "rank deficiency at delta {}", row.delta);
    }
    for w in rows.windows(2) {
        assert!(
            w[1].sigma_min() > w[0].sigma_min(),
            "smallest singular value fell from {} to {} as probes deepened",
            w[0].sigma_min(),
            w[1].sigma_min()
        );
    }
    println!(
        "criterion 13: PASS (4-member ladder full rank, sigma_min {:.2e} -> {:.2e})",
        rows.first().unwrap().sigma_min(),
        rows.last().unwrap().sigma_min()
    );
}

#[test]
fn criterion_14_cli_determinism() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_vpkurth");
    let dir = std::env::temp_dir().join(format!("vpkurth-accept-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let runs: [(&str, Vec<&str>); 3] = [
        ("residual.json", vec!["residual", "static", "--gamma-exp", "12", "--tests", "3", "--seed", "77"]),
        ("witness.csv", vec!["witness", "--gammas", "12,13"]),
        ("orbit.csv", vec!["orbit", "--eps", "0.5"]),
    ];
    for (file, args) in &runs {
        let mut outputs = Vec::new();
        for pass in 0..2 {
            let path = dir.join(format!("{pass}-{file}"));
            let out = Command::new(bin)
                .args(args)
                .arg("--out")
                .arg(&path)
                .output()
                .expect("binary runs");
            assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
            outputs.push((out.stdout, std::fs::read(&path).unwrap()));
        }
        assert_eq!(outputs[0].0, outputs[1].0, "stdout differs for {args:?}");
        assert_eq!(outputs[0].1, outputs[1].1, "artifact differs for {args:?}");
    }
    std::fs::remove_dir_all(&dir).ok();
    println!("criterion 14: PASS (three command pairs byte-identical in stdout and artifacts)");
}
