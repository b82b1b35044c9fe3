//! Property-based checks of model invariants.

use proptest::prelude::*;

use opflow::cli::config::{ExperimentConfig, GraphSpec, ModelKind, VectorSpec};
use opflow::dynamics::{integrate, IntegratorConfig, Method};
use opflow::equilibrium::{f_map, jacobian_nfj, newton_solve, SolverConfig};
use opflow::graph::{core_periphery, erdos_renyi, parse_edge_list, stochastic_block_model, write_edge_list, EdgeListOptions};
use opflow::models::{
    discrete_step_fj, energy_nfj, substochastic_transform, vector_field_nfj, vector_field_taylor,
    vector_field_taylor_transformed, Model, NfjParams, TaylorParams,
};

fn nfj_case() -> impl Strategy<Value = (usize, u64, f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (3usize..20, any::<u64>(), prop_oneof![Just(1.0), Just(2.0), 0.5f64..3.0]).prop_flat_map(|(n, seed, p)| {
        (
            Just(n),
            Just(seed),
            Just(p),
            prop::collection::vec(0.5f64..100.0, n),
            prop::collection::vec(0.0f64..5.0, n),
            prop::collection::vec(0.2f64..10.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generators_are_symmetric_and_connected(n in 2usize..40, seed in any::<u64>()) {
        let er = erdos_renyi(n, 0.5, seed).unwrap();
        prop_assert!(er.is_symmetric() && er.is_connected());
        let a = n / 2 + 1;
        let sbm = stochastic_block_model(&[a, n], 0.5, 0.2, seed).unwrap();
        prop_assert!(sbm.is_symmetric() && sbm.is_connected());
        let cp = core_periphery(n, 0.05, seed).unwrap();
        prop_assert_eq!(cp.degrees()[0], (n - 1) as f64);
        let same = erdos_renyi(n, 0.5, seed).unwrap();
        prop_assert_eq!(er, same);
    }

    #[test]
    fn edge_list_round_trip(n in 2usize..30, seed in any::<u64>()) {
        let net = erdos_renyi(n, 0.4, seed).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&net, &mut buf).unwrap();
        let back = parse_edge_list(buf.as_slice(), &EdgeListOptions::default()).unwrap();
        prop_assert_eq!(net, back);
    }

    #[test]
    fn energy_gradient_matches_field((n, seed, p, u, sigma, x) in nfj_case()) {
        let net = erdos_renyi(n, 0.4, seed).unwrap();
        let params = NfjParams::new(u, sigma, p).unwrap();
        let field = vector_field_nfj(&net, &params, &x).unwrap();
        let scale = field.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            let h = 1e-5 * x[i];
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let g = (energy_nfj(&net, &params, &xp) - energy_nfj(&net, &params, &xm)) / (2.0 * h);
            prop_assert!((g + field[i]).abs() <= 1e-5 * scale, "i = {}: {} vs {}", i, g, -field[i]);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences((n, seed, p, u, sigma, x) in nfj_case()) {
        let net = erdos_renyi(n, 0.4, seed).unwrap();
        let params = NfjParams::new(u, sigma, p).unwrap();
        let j = jacobian_nfj(&net, &params, &x);
        for k in 0..n {
            let h = 1e-6 * x[k];
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = f_map(&net, &params, &xp).unwrap();
            let fm = f_map(&net, &params, &xm).unwrap();
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                prop_assert!((fd - j[(i, k)]).abs() <= 1e-5 * j[(i, k)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn taylor_reduction_chain(n in 3usize..15, seed in any::<u64>(), l in 0.05f64..1.0, uv in prop::collection::vec(0.5f64..50.0, 15)) {
        // Constant λ on a regular graph: B = λA is symmetric and ẏ = ẋ/λ.
        let net = opflow::graph::complete_graph(n).unwrap();
        let params = TaylorParams::new(vec![l; n], uv[..n].to_vec()).unwrap();
        let x: Vec<f64> = (0..n).map(|i| 1.0 + ((seed as usize + i) % 7) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v / l).collect();
        let fx = vector_field_taylor(&net, &params, &x).unwrap();
        let fy = vector_field_taylor_transformed(&net, &params, &y).unwrap();
        for i in 0..n {
            prop_assert!((fy[i] - fx[i] / l).abs() <= 1e-9 * fx[i].abs().max(1.0));
        }
        let (b, _) = substochastic_transform(&net, &params).unwrap();
        for i in 0..n {
            prop_assert!(b.row(i).sum() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn stationary_points_are_fixed_by_both_protocols((n, seed, p, u, sigma, _x) in nfj_case()) {
        let net = erdos_renyi(n, 0.4, seed).unwrap();
        let params = NfjParams::new(u, sigma, p).unwrap();
        let sol = newton_solve(&net, &params, None, &SolverConfig::default()).unwrap();
        let field = vector_field_nfj(&net, &params, &sol.x_star).unwrap();
        let scale = sol.residual_scale.max(1.0);
        prop_assert!(field.iter().all(|v| v.abs() <= 1e-10 * scale));
        // One short integration from the root stays there.
        let cfg = IntegratorConfig { t_end: 1.0, method: Method::Rk4Adaptive, stop_tol: f64::MIN_POSITIVE, ..Default::default() };
        let traj = integrate(&net, &Model::Nfj(params.clone()), &sol.x_star, &cfg).unwrap();
        let gap = traj.final_state().iter().zip(&sol.x_star).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(gap <= 1e-8 * sol.x_star.iter().fold(1.0f64, |m, v| m.max(*v)));
    }

    #[test]
    fn fj_fixed_point_is_stationary(n in 3usize..15, seed in any::<u64>(), lv in prop::collection::vec(0.0f64..0.95, 15), uv in prop::collection::vec(0.5f64..50.0, 15)) {
        let net = erdos_renyi(n, 0.5, seed).unwrap();
        let params = TaylorParams::new(lv[..n].to_vec(), uv[..n].to_vec()).unwrap();
        let x = opflow::equilibrium::taylor_equilibrium(&net, &params).unwrap();
        let step = discrete_step_fj(&net, &params, &x).unwrap();
        let field = vector_field_taylor(&net, &params, &x).unwrap();
        for i in 0..n {
            prop_assert!((step[i] - x[i]).abs() <= 1e-10 * x[i].max(1.0));
            prop_assert!(field[i].abs() <= 1e-10 * x[i].max(1.0));
        }
    }

    #[test]
    fn config_round_trip(n in 2usize..200, kappa in 0.5f64..200.0, delta in 0.0f64..5.0, seed in any::<u64>(), randomize in any::<bool>()) {
        let mut cfg = ExperimentConfig::new(GraphSpec::Er { n, p: 0.1, seed: Some(seed) }, ModelKind::Nfj);
        cfg.u = VectorSpec::TwoGroup { first: kappa, rest: 1.0, split: None, randomize };
        cfg.sigma = VectorSpec::TwoGroup { first: delta, rest: 1.0, split: Some(n / 2), randomize };
        cfg.seed = seed;
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(cfg, back);
    }
}

#[test]
fn integration_is_deterministic() {
    let net = erdos_renyi(25, 0.3, 5).unwrap();
    let u: Vec<f64> = (0..25).map(|i| 1.0 + 4.0 * i as f64).collect();
    let params = NfjParams::new(u, vec![0.5; 25], 1.0).unwrap();
    let cfg = IntegratorConfig { t_end: 5.0, method: Method::Rk4Adaptive, ..Default::default() };
    let a = integrate(&net, &Model::Nfj(params.clone()), &[1.0; 25], &cfg).unwrap();
    let b = integrate(&net, &Model::Nfj(params), &[1.0; 25], &cfg).unwrap();
    let (mut wa, mut wb) = (Vec::new(), Vec::new());
    a.write_csv(&mut wa).unwrap();
    b.write_csv(&mut wb).unwrap();
    assert_eq!(wa, wb);
}
