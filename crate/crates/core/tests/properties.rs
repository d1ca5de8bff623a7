use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use stoqg::determining::{
    all_layer_threshold, check_conditions, compute_condition_coefficients, ConditionOptions, FunctionalSet,
};
use stoqg::dynamics::{make_forcing, random_state, ForcingSpec};
use stoqg::noise::{ou_stationary_draw, stream_rng, NoisePath, NoiseSpec, Purpose};
use stoqg::twolayer::{pv_from_stream, star_norm_sq, star_parts, stream_from_pv, C0};
use stoqg::{derive_params, jacobian, Grid, PhysicalParams, SpectralField};

/// Parameter sets whose deformation radius is comparable to the domain:
/// `F1/λ1` ranges over `[0.01, 100]`.
fn physical() -> impl Strategy<Value = PhysicalParams> {
    (
        (0.01f64..100.0, 0.0f64..2.0, 1.0f64..20.0, -2.0f64..2.0),
        (0.05f64..1000.0, 0.05f64..1000.0, 0.01f64..0.2, 1.0f64..1e6, 0.0f64..1.0),
    )
        .prop_map(|((nu, beta, g, log_burger), (h1, h2, jump, length, tau0))| {
            let lambda1 = (2.0 * PI / length).powi(2);
            let reduced_gravity = g * jump;
            let f0 = (10f64.powf(log_burger) * lambda1 * reduced_gravity * h1).sqrt();
            PhysicalParams { nu, beta, f0, g, h1, h2, rho0: 1.0, rho1: 1.0, rho2: 1.0 + jump, length, tau0 }
        })
}

fn desk() -> PhysicalParams {
    PhysicalParams {
        nu: 0.5,
        beta: 0.5,
        f0: 0.8,
        g: 6.4,
        h1: 0.1,
        h2: 0.1,
        rho0: 1.0,
        rho1: 1.0,
        rho2: 2.0,
        length: 2.0 * PI,
        tau0: 1e-4,
    }
}

fn mean_free_and_real(f: &SpectralField) -> bool {
    f.coeff(0, 0).norm() == 0.0 && f.symmetry_defect() <= 1e-14 * (1.0 + f.max_abs_coeff())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn jacobian_identities(seed in any::<u64>(), slope in 1.0f64..4.0) {
        let grid = Grid::new(2.0 * PI, 32).unwrap();
        let mut rng = stream_rng(seed, 0, 0, Purpose::InitialCondition);
        let u = SpectralField::random(&grid, &mut rng, slope);
        let v = SpectralField::random(&grid, &mut rng, slope);
        let w = SpectralField::random(&grid, &mut rng, slope);
        let juv = jacobian(&u, &v).unwrap();
        let mut sum = juv.clone();
        sum.axpy(1.0, &jacobian(&v, &u).unwrap());
        prop_assert!(sum.norm0() <= 1e-10 * (juv.norm0() + 1.0));
        let scale = juv.norm0();
        prop_assert!(juv.inner(&v).abs() <= 1e-10 * scale * v.norm0());
        let cyclic = juv.inner(&w) - jacobian(&v, &w).unwrap().inner(&u);
        prop_assert!(cyclic.abs() <= 1e-10 * scale * w.norm0());
        prop_assert!(mean_free_and_real(&juv));
    }

    #[test]
    fn jacobian_laplacian_estimate(seed in any::<u64>(), slope in 1.0f64..4.0, length in 1.0f64..1e6) {
        let grid = Grid::new(length, 32).unwrap();
        let mut rng = stream_rng(seed, 1, 0, Purpose::InitialCondition);
        let u = SpectralField::random(&grid, &mut rng, slope);
        let v = SpectralField::random(&grid, &mut rng, slope);
        let lhs = jacobian(&u, &v).unwrap().inner(&u.laplacian()).abs();
        let rhs = C0 * v.sobolev_norm(2.0) * u.sobolev_norm(1.0) * u.sobolev_norm(2.0);
        prop_assert!(lhs <= rhs);
    }

    #[test]
    fn operators_keep_fields_real_and_mean_free(seed in any::<u64>()) {
        let grid = Grid::new(3.0, 16).unwrap();
        let mut rng = stream_rng(seed, 2, 0, Purpose::InitialCondition);
        let u = SpectralField::random(&grid, &mut rng, 2.0);
        for f in [u.laplacian(), u.inverse_laplacian(), u.dx(), u.dy(), u.laplacian_power(1.5), u.scaled(-3.0)] {
            prop_assert!(mean_free_and_real(&f));
        }
    }

    #[test]
    fn stream_and_pv_invert_each_other(raw in physical(), seed in any::<u64>()) {
        let dp = derive_params(&raw).unwrap();
        let grid = Grid::new(dp.length, 16).unwrap();
        let q = random_state(&grid, &dp, seed, 0, 1.0, 2.0);
        let back = pv_from_stream(&stream_from_pv(&q, &dp), &dp).unwrap();
        prop_assert!(back.sub(&q).max_abs_coeff() <= 1e-12 * q.max_abs_coeff());
    }

    #[test]
    fn coupling_constants_agree(raw in physical()) {
        let dp = derive_params(&raw).unwrap();
        prop_assert!((dp.f1 * dp.h1 / dp.p - 1.0).abs() < 1e-12);
        prop_assert!((dp.f2 * dp.h2 / dp.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn star_norm_is_positive_and_sandwiched(raw in physical(), seed in any::<u64>(), slope in 0.5f64..4.0) {
        let dp = derive_params(&raw).unwrap();
        let grid = Grid::new(dp.length, 16).unwrap();
        let q = random_state(&grid, &dp, seed, 3, 1.0, slope);
        let parts = star_parts(&q, &dp);
        prop_assert!(parts.total() > 0.0);
        prop_assert!(parts.gradient_energy() < parts.total());
        prop_assert!(parts.total() < dp.a0 * parts.gradient_energy());
        let doubled = star_norm_sq(&q.scaled(2.0), &dp);
        prop_assert!((doubled / parts.total() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn noise_updates_stay_real_and_mean_free(member in 0u64..1000, step in 0u64..1000) {
        let dp = Arc::new(derive_params(&desk()).unwrap());
        let grid = Grid::new(dp.length, 16).unwrap();
        let spec = Arc::new(NoiseSpec::power_law(&grid, 0.3, 3.0, 1.0, 5).unwrap());
        let path = NoisePath::new(spec.clone(), dp.clone(), member);
        let mut state = path.initial_state();
        state.advance(&path.increment(step, 0.05), &spec, &dp);
        for f in [&state.eta, &state.xi1, &state.xi2] {
            prop_assert!(mean_free_and_real(f));
        }
        let (r1, r2) = state.corrector_residuals(&dp);
        prop_assert!(r1.max(r2) <= 1e-12);
    }

    #[test]
    fn silent_ou_half_steps_compose(member in 0u64..1000, dt in 1e-3f64..2.0) {
        let dp = Arc::new(derive_params(&desk()).unwrap());
        let grid = Grid::new(dp.length, 16).unwrap();
        let loud = NoiseSpec::power_law(&grid, 0.3, 3.0, 1.0, 5).unwrap();
        let silent = Arc::new(loud.with_amplitude_factor(0.0));
        let start = ou_stationary_draw(&loud, &dp, member);
        let path = NoisePath::new(silent.clone(), dp.clone(), member);
        let mut halves = start.clone();
        halves.advance(&path.increment(0, dt / 2.0), &silent, &dp);
        halves.advance(&path.increment(1, dt / 2.0), &silent, &dp);
        let mut full = start;
        full.advance(&path.increment(0, dt), &silent, &dp);
        let mut diff = halves.eta.clone();
        diff.axpy(-1.0, &full.eta);
        prop_assert!(diff.max_abs_coeff() <= 1e-14 * (1.0 + full.eta.max_abs_coeff()));
    }

    #[test]
    fn stationary_h1_moment_halves_when_k_plus_one_doubles(k in 0.5f64..20.0, sigma in 0.01f64..3.0) {
        let dp = derive_params(&desk()).unwrap();
        let grid = Grid::new(dp.length, 16).unwrap();
        let a = NoiseSpec::power_law(&grid, sigma, 3.0, k, 1).unwrap();
        let b = a.with_k(2.0 * (k + 1.0) - 1.0).unwrap();
        prop_assert!((a.stationary_h1_sq(&dp) / b.stationary_h1_sq(&dp) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn condition_coefficients_are_positive(raw in physical()) {
        prop_assume!(raw.tau0 > 1e-6);
        let dp = derive_params(&raw).unwrap();
        let grid = Grid::new(dp.length, 16).unwrap();
        let spec = NoiseSpec::power_law(&grid, 0.1, 3.0, 1.0, 1).unwrap();
        let f = make_forcing(&ForcingSpec::PaperSinusoid, &grid, &dp).unwrap();
        let c = compute_condition_coefficients(&dp, &spec, &f);
        prop_assert!(c.d0 > 0.0 && c.d1 > 0.0 && c.d2 > 0.0 && c.d3 > 0.0);
    }

    #[test]
    fn d3_scales_with_forcing_norm(raw in physical(), factor in 0.1f64..10.0) {
        prop_assume!(raw.tau0 > 1e-6);
        let dp = derive_params(&raw).unwrap();
        let scaled = derive_params(&PhysicalParams { tau0: raw.tau0 * factor, ..raw.clone() }).unwrap();
        let grid = Grid::new(dp.length, 16).unwrap();
        let spec = NoiseSpec::power_law(&grid, 0.1, 3.0, 1.0, 1).unwrap();
        let c = |dp| compute_condition_coefficients(dp, &spec, &make_forcing(&ForcingSpec::PaperSinusoid, &grid, dp).unwrap());
        let (a, b) = (c(&dp), c(&scaled));
        prop_assert!((b.f_hm1_sq / a.f_hm1_sq - factor * factor).abs() < 1e-9 * factor * factor);
        prop_assert!((b.d3 / a.d3 - b.f_hm1_sq / a.f_hm1_sq).abs() < 1e-9 * factor * factor);
    }

    #[test]
    fn all_layer_threshold_falls_as_sigma_grows(raw in physical(), s in 1e-8f64..1e8, factor in 1.0001f64..100.0) {
        let dp = derive_params(&raw).unwrap();
        prop_assert!(all_layer_threshold(&dp, s * factor) < all_layer_threshold(&dp, s));
    }
}

#[test]
fn modes_beat_nodes_at_every_square_count() {
    for length in [1.0, 2.0 * PI, 1e6] {
        let grid = Grid::new(length, 64).unwrap();
        for side in 1..=20 {
            let n = side * side;
            let modes = FunctionalSet::modes(n, &grid).unwrap();
            let nodes = FunctionalSet::nodes(n, &grid).unwrap();
            assert!(modes.epsilon <= nodes.epsilon, "N = {n}, L = {length}: {} > {}", modes.epsilon, nodes.epsilon);
        }
    }
}

#[test]
fn verdicts_follow_from_reported_numbers() {
    let dp = derive_params(&desk()).unwrap();
    let grid = Grid::new(dp.length, 32).unwrap();
    let spec = NoiseSpec::power_law(&grid, 1e-3, 3.0, 1.0, 7).unwrap();
    let f = make_forcing(&ForcingSpec::PaperSinusoid, &grid, &dp).unwrap();
    let set = FunctionalSet::modes(40, &grid).unwrap();
    let mut opts = ConditionOptions { samples: 200, ..ConditionOptions::default() };
    opts.radius.paths = 20;
    let report = check_conditions(&dp, &spec, &f, Some(&set), &opts).unwrap();
    let kv: std::collections::HashMap<String, String> = report
        .to_key_values()
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let num = |k: &str| kv[k].parse::<f64>().unwrap();
    for v in report.verdicts.iter().filter(|v| !v.lhs.is_nan()) {
        let (lhs, rhs) = (num(&format!("{}.lhs", v.key)), num(&format!("{}.rhs", v.key)));
        assert_eq!(lhs, v.lhs);
        assert_eq!(rhs, v.rhs);
        let expected = if v.relation.eval(lhs, rhs) { "holds" } else { "fails" };
        assert_eq!(kv[&format!("{}.holds", v.key)], expected, "{}", v.key);
    }
    let c = &report.coefficients;
    assert_eq!(num("d0"), c.d0);
    let recomputed = all_layer_threshold(&dp, num("sigma"));
    assert_eq!(recomputed, num("epsilon_all_layers"));
}
