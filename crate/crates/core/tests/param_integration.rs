mod common;

use std::sync::Arc;

use proptest::prelude::*;

use mep_core::envs::smallcell::build_smallcell;
use mep_core::mdp::{optimal_value, TabularMdp};
use mep_core::metrics::median;
use mep_core::param::{
    run_algorithm2, sensitivity_rank, solve_gradients, AnnealConfig, Coord, ParamBlock, ParameterizedMdp,
    SquaredEuclidean,
};
use mep_core::param_rl::{run_algorithm3, ParamLearnConfig, ParameterizedEnv};
use mep_core::soft::{solve_fixed_point, SoftOperator, SoftPlanConfig};

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>(), beta in 0.2f64..8.0) {
        let mut r = rng(seed);
        let mut pm = random_param_mdp(&mut r, 4, 2, 0.9);
        let sol = solve_fixed_point(SoftOperator::T, &pm.realize(), &SoftPlanConfig::new(beta, 0.9).with_tol(1e-13)).unwrap();
        let coords = pm.free_coords();
        let g = solve_gradients(&pm, &sol.policy, &coords).unwrap().objective_gradient(&pm.weights);
        let h = 1e-5;
        for (c, g) in coords.into_iter().zip(g) {
            let x = pm.get(c);
            pm.set(c, x + h);
            let up = total_free_energy(&pm, beta);
            pm.set(c, x - h);
            let down = total_free_energy(&pm, beta);
            pm.set(c, x);
            let fd = (up - down) / (2.0 * h);
            prop_assert!((g - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "{c:?}: {g} vs {fd}");
        }
    }
}

#[test]
fn hard_limit_free_energy_matches_routed_cost() {
    let spec = line_or_plane_instance(vec![vec![0.0, 0.0], vec![1.0, 0.3], vec![0.2, 0.9]], vec![1.5, 1.5], 2);
    let pm = build_smallcell(&spec).unwrap().model;
    let sol = solve_fixed_point(SoftOperator::T, &pm.realize(), &SoftPlanConfig::new(1e6, 1.0)).unwrap();
    let soft = pm.weighted_total(&sol.value);
    let hard = pm.total_cost(&sol.hardened()).unwrap();
    assert!((soft - hard).abs() <= 1e-2, "{soft} vs {hard}");
}

/// Single user at 3 forwarding straight to a terminal facility whose
/// location is the only free parameter; the objective is `(ζ - 3)²`.
fn one_user_line(start: f64) -> ParameterizedMdp {
    let base = TabularMdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0; 4], 1.0, vec![false, true]).unwrap();
    let zeta = ParamBlock::new(1, vec![3.0, start]).unwrap();
    let mut pm = ParameterizedMdp::new(base, zeta, ParamBlock::empty(), Arc::new(SquaredEuclidean::states_only())).unwrap();
    pm.free_zeta = vec![false, true];
    pm
}

#[test]
fn annealed_solver_finds_the_one_user_optimum() {
    // one action, so the policy is hard at the first level and all descent
    // happens there
    let cfg = AnnealConfig {
        max_inner: 5000,
        ..AnnealConfig::default()
    };
    let out = run_algorithm2(&one_user_line(5.0), &cfg).unwrap();
    assert!((out.zeta.point(1)[0] - 3.0).abs() < 1e-3, "{:?}", out.zeta);
}

#[test]
fn model_free_solver_finds_the_one_user_optimum() {
    let finals: Vec<f64> = (0..20)
        .map(|seed| {
            let mut cfg = ParamLearnConfig::default();
            cfg.anneal.tau = 1.5;
            cfg.learn.episodes = 20;
            cfg.learn.seed = seed;
            cfg.probe_episodes = 5;
            cfg.max_move = 0.5;
            cfg.max_sweeps = 500;
            cfg.anneal.step_zeta = 0.1;
            let out = run_algorithm3(&ParameterizedEnv::new(one_user_line(5.0), vec![0]), &cfg).unwrap();
            out.model.zeta.point(1)[0]
        })
        .collect();
    let m = median(&finals);
    assert!((m - 3.0).abs() <= 5e-2, "median {m}, all {finals:?}");
}

#[test]
fn uninfluential_coordinate_never_moves() {
    // state 1 is never reached from the source and carries no weight, so
    // its location cannot affect the objective
    let base = TabularMdp::new(
        3,
        1,
        vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
        vec![0.0; 9],
        1.0,
        vec![false, false, true],
    )
    .unwrap();
    let zeta = ParamBlock::new(1, vec![0.0, 7.0, 1.0]).unwrap();
    let mut pm = ParameterizedMdp::new(base, zeta, ParamBlock::empty(), Arc::new(SquaredEuclidean::states_only())).unwrap();
    pm.free_zeta = vec![false, true, false];
    pm.weights[1] = 0.0;
    let mut cfg = ParamLearnConfig::default();
    cfg.anneal.tau = 2.0;
    cfg.learn.episodes = 10;
    cfg.probe_episodes = 3;
    let out = run_algorithm3(&ParameterizedEnv::new(pm, vec![0]), &cfg).unwrap();
    assert_eq!(out.model.zeta.point(1)[0], 7.0);
}

/// Ranking by gradient magnitude agrees with the ranking by central
/// differences of the routed cost `Σ_s J(s)` under the fixed optimal routes.
#[test]
fn sensitivity_ranking_matches_perturbation() {
    let mut spec = line_or_plane_instance(vec![vec![0.0, 0.0], vec![2.0, 0.2], vec![0.4, 1.7]], vec![3.0, 3.0], 3);
    spec.facilities = Some(vec![vec![0.3, 0.1], vec![1.2, 0.9], vec![2.6, 2.2]]);
    let mut pm = build_smallcell(&spec).unwrap().model;
    let (_, policy) = optimal_value(&pm.realize()).unwrap();
    let states: Vec<usize> = (0..3).map(|j| spec.facility_state(j)).collect();
    let ranked = sensitivity_rank(&pm, &policy, &states).unwrap();

    let h = 1e-5;
    let mut fd = Vec::new();
    for &s in &states {
        let mut norm2 = 0.0;
        for k in 0..2 {
            let c = Coord::zeta(s, k);
            let x = pm.get(c);
            pm.set(c, x + h);
            let up = pm.total_cost(&policy).unwrap();
            pm.set(c, x - h);
            let down = pm.total_cost(&policy).unwrap();
            pm.set(c, x);
            norm2 += ((up - down) / (2.0 * h)).powi(2);
        }
        fd.push(norm2.sqrt());
    }
    for (r, f) in ranked.iter().zip(&fd) {
        assert!((r.magnitude - f).abs() <= 1e-5 * f.max(1.0), "{ranked:?} vs {fd:?}");
    }
    let order = |xs: &[f64]| {
        let mut i: Vec<usize> = (0..xs.len()).collect();
        i.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        i
    };
    let mags: Vec<f64> = ranked.iter().map(|r| r.magnitude).collect();
    assert_eq!(order(&mags), order(&fd));
}
