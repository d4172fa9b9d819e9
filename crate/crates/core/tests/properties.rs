use nalgebra::DMatrix;
use proptest::prelude::*;

use foliated_trace::geometric::{find_relative_periods, flow, Integrator};
use foliated_trace::harness::config::presets;
use foliated_trace::harness::ExperimentConfig;
use foliated_trace::maslov::{signature, solve_generating_function};
use foliated_trace::model::{
    build_model, verify_holonomy_invariance, FlatFoliatedModel, GroupoidKernel,
};
use foliated_trace::numerics::torus_distance;
use foliated_trace::spectral::{enumerate_for_kernel, smoothed_trace, GaussianProbe};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model_strategy() -> impl Strategy<Value = FlatFoliatedModel> {
    (
        prop::collection::vec(-0.4f64..0.4, 9),
        prop::collection::vec(-1.0f64..1.0, 6),
        prop::bool::ANY,
        0.0f64..0.3,
    )
        .prop_filter_map("degenerate model", |(a, leaves, three, drift_scale)| {
            let n = if three { 3 } else { 2 };
            let p = n - 1;
            let a = DMatrix::from_fn(n, n, |i, j| a[i * 3 + j]);
            let g = a.transpose() * &a + DMatrix::identity(n, n);
            let metric: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| g[(i, j)]).collect())
                .collect();
            let basis: Vec<Vec<f64>> = (0..p)
                .map(|k| leaves[k * n..(k + 1) * n].to_vec())
                .collect();
            let plain = build_model(n, p, &basis, &metric, &vec![0.0; n]).ok()?;
            let drift: Vec<f64> = plain
                .transverse_frame()
                .column(0)
                .iter()
                .map(|v| drift_scale * v)
                .collect();
            build_model(n, p, &basis, &metric, &drift).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_is_a_group_action(model in model_strategy(), seed in any::<u64>(), t1 in -6.0f64..6.0, t2 in -6.0f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nu = model.random_conormal(&mut rng);
        let direct = flow(&model, &nu, t1 + t2, Integrator::Exact).unwrap();
        let first = flow(&model, &nu, t1, Integrator::Exact).unwrap();
        let composed = flow(&model, &first, t2, Integrator::Exact).unwrap();
        prop_assert!(torus_distance(direct.x(), composed.x()) < 1e-10);
        for (a, b) in direct.xi().iter().zip(composed.xi()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let energy = model.symbol_extension(nu.xi());
        prop_assert!((model.symbol_extension(direct.xi()) - energy).abs() <= 1e-10 * energy.max(1.0));
    }

    #[test]
    fn transverse_symbol_is_holonomy_invariant(model in model_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(verify_holonomy_invariance(&model, 10, &mut rng) < 1e-12);
    }

    #[test]
    fn periods_come_in_opposite_pairs(model in model_strategy(), support in 0.3f64..1.5) {
        let kernel = GroupoidKernel::unit_bump(&model, support).unwrap();
        let comps = find_relative_periods(&model, &kernel, 2.0).unwrap();
        for c in &comps {
            let twin = comps.iter().find(|d| d.v == c.v && (d.t + c.t).abs() < 1e-12);
            prop_assert!(twin.is_some(), "no partner for t = {} v = {:?}", c.t, c.v);
            let twin = twin.unwrap();
            for (a, b) in twin.direction.iter().zip(&c.direction) {
                prop_assert!((a + b).abs() < 1e-12);
            }
            prop_assert!((twin.shift_norm - c.shift_norm).abs() < 1e-12);
        }
    }

    #[test]
    fn generating_function_is_homogeneous(
        t in -3.0f64..3.0,
        y in prop::collection::vec(-1.0f64..1.0, 2),
        eta in prop::collection::vec(-2.0f64..2.0, 2),
        scale in 0.1f64..10.0,
    ) {
        prop_assume!(eta.iter().map(|e| e * e).sum::<f64>() > 1e-4);
        let model = foliated_trace::model::presets::circle_in_t3();
        let gf = solve_generating_function(&model, t);
        let scaled: Vec<f64> = eta.iter().map(|e| scale * e).collect();
        let lhs = gf.value(&y, &scaled).unwrap();
        let rhs = scale * gf.value(&y, &eta).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0) * scale.max(1.0));
    }

    #[test]
    fn signature_is_a_congruence_invariant(
        entries in prop::collection::vec(-2.0f64..2.0, 16),
        mix in prop::collection::vec(-0.3f64..0.3, 16),
    ) {
        let a = DMatrix::from_fn(4, 4, |i, j| entries[i * 4 + j]);
        let r = (&a + a.transpose()) * 0.5;
        let eig = r.clone().symmetric_eigen().eigenvalues;
        prop_assume!(eig.iter().all(|l| l.abs() > 1e-3));
        let s = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 } + mix[i * 4 + j]);
        let sv = s.clone().svd(false, false).singular_values;
        prop_assume!(sv.max() / sv.min() < 10.0);
        let base = signature(&r).unwrap();
        let moved = signature(&(s.transpose() * &r * &s)).unwrap();
        prop_assert_eq!(base.signature, moved.signature);
        prop_assert_eq!(base.zero, moved.zero);
    }

    #[test]
    fn config_round_trips(eps in 0.01f64..0.5, cutoff in 50.0f64..500.0, seed in any::<u64>(), drift in 0.0f64..0.5) {
        let mut config = presets::product([0.0, drift]);
        config.spectral.eps = eps;
        config.spectral.cutoff = cutoff;
        config.seed = seed;
        let text = config.to_toml().unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn smoothed_trace_is_linear_in_the_kernel(
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        r1 in 0.3f64..1.5,
        r2 in 0.3f64..1.5,
        t0 in 0.2f64..2.0,
        s in 40.0f64..120.0,
    ) {
        let model = foliated_trace::model::presets::kronecker(foliated_trace::model::presets::golden_slope());
        let k1 = GroupoidKernel::unit_bump(&model, r1).unwrap();
        let k2 = GroupoidKernel::unit_bump(&model, r2).unwrap();
        let combined = k1.scaled(a).sum(&k2.scaled(b));
        let spectrum = enumerate_for_kernel(&model, &combined, 200.0, 1_000_000).unwrap();
        let probe = GaussianProbe::new(t0, 0.1, s);
        let trace = |k: &GroupoidKernel| smoothed_trace(&spectrum, &spectrum.weights(k), 1, &probe).unwrap();
        let whole = trace(&combined);
        let parts = trace(&k1).value * a + trace(&k2).value * b;
        prop_assert!((whole.value - parts).norm() <= 1e-12 * (1.0 + whole.partial_l1));
    }
}
