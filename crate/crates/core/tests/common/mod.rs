#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mep_core::envs::smallcell::{build_smallcell, Objective, SmallCellSpec, TransitionMode};
use mep_core::mdp::{QTable, StochasticPolicy, TabularMdp};
use mep_core::param::{ParamBlock, ParameterizedMdp, SquaredEuclidean};
use mep_core::soft::{solve_fixed_point_newton, SoftOperator, SoftPlanConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random SSP whose last state is terminal. Every non-terminal `(s, a)`
/// reaches the terminal state directly with probability at least
/// `exit_min`; the rest is spread over up to three random states.
pub fn random_ssp(r: &mut ChaCha8Rng, n: usize, na: usize, gamma: f64, exit_min: f64) -> TabularMdp {
    let term = n - 1;
    let mut tr = Vec::new();
    let mut cost = Vec::new();
    for s in 0..term {
        for a in 0..na {
            let exit = exit_min + (1.0 - exit_min) * r.random::<f64>() * 0.5;
            let k = r.random_range(1..=3);
            let w: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 0.05).collect();
            let tot: f64 = w.iter().sum();
            let mut rows = vec![(term, exit)];
            for wi in w {
                rows.push((r.random_range(0..n), (1.0 - exit) * wi / tot));
            }
            for (s2, p) in rows {
                tr.push((s, a, s2, p));
                cost.push((s, a, s2, 0.5 + 1.5 * r.random::<f64>()));
            }
        }
    }
    for a in 0..na {
        tr.push((term, a, term, 1.0));
    }
    // merge duplicate successors by summing probability; keep the last cost
    merge(n, na, &tr, &cost, gamma, &[term])
}

fn merge(
    n: usize,
    na: usize,
    tr: &[(usize, usize, usize, f64)],
    cost: &[(usize, usize, usize, f64)],
    gamma: f64,
    terminal: &[usize],
) -> TabularMdp {
    let mut p = vec![0.0; n * na * n];
    let mut c = vec![0.0; n * na * n];
    for &(s, a, s2, v) in tr {
        p[(s * na + a) * n + s2] += v;
    }
    for &(s, a, s2, v) in cost {
        c[(s * na + a) * n + s2] = v;
    }
    let mut flags = vec![false; n];
    for &t in terminal {
        flags[t] = true;
    }
    TabularMdp::new(n, na, p, c, gamma, flags).expect("random SSP is well formed")
}

pub fn random_q(r: &mut ChaCha8Rng, mdp: &TabularMdp, scale: f64) -> QTable {
    let mut q = QTable::zeros(mdp.n_states(), mdp.n_actions());
    for v in q.as_mut_slice() {
        *v = scale * (2.0 * r.random::<f64>() - 1.0);
    }
    q.zero_rows(mdp.terminal_flags());
    q
}

pub fn random_policy(r: &mut ChaCha8Rng, ns: usize, na: usize) -> StochasticPolicy {
    let mut probs = Vec::with_capacity(ns * na);
    for _ in 0..ns {
        let w: Vec<f64> = (0..na).map(|_| r.random::<f64>() + 0.05).collect();
        let t: f64 = w.iter().sum();
        probs.extend(w.iter().map(|x| x / t));
    }
    StochasticPolicy::new(ns, na, probs).unwrap()
}

/// Random SSP with planar state and action locations and the
/// squared-distance cost (action term weighted by 0.5). All parameters free.
pub fn random_param_mdp(r: &mut ChaCha8Rng, n: usize, na: usize, gamma: f64) -> ParameterizedMdp {
    let base = random_ssp(r, n, na, gamma, 0.2);
    let zeta = ParamBlock::new(2, (0..2 * n).map(|_| r.random::<f64>()).collect()).unwrap();
    let eta = ParamBlock::new(2, (0..2 * na).map(|_| r.random::<f64>()).collect()).unwrap();
    let mut pm = ParameterizedMdp::new(base, zeta, eta, Arc::new(SquaredEuclidean { action_weight: 0.5 })).unwrap();
    pm.free_zeta = vec![true; n];
    pm.free_eta = vec![true; na];
    pm
}

/// `Σ_s w_s V*_β(s)` at the current parameters.
pub fn total_free_energy(pm: &ParameterizedMdp, beta: f64) -> f64 {
    let mdp = pm.realize();
    let cfg = SoftPlanConfig::new(beta, pm.gamma()).with_tol(1e-13);
    let sol = solve_fixed_point_newton(SoftOperator::T, &mdp, &cfg, QTable::zeros(mdp.n_states(), mdp.n_actions())).unwrap();
    pm.weighted_total(&sol.value)
}

/// A small-cell instance with explicit coordinates, facilities starting at
/// the user centroid plus a small fixed offset.
pub fn line_or_plane_instance(users: Vec<Vec<f64>>, base: Vec<f64>, n_facilities: usize) -> SmallCellSpec {
    let mut spec = SmallCellSpec {
        users,
        base_station: base,
        n_facilities,
        facilities: None,
        mode: TransitionMode::Deterministic,
        objective: Objective::AllSources,
        gamma: 1.0,
    };
    let c = spec.user_centroid();
    spec.facilities = Some(
        (0..n_facilities)
            .map(|j| c.iter().enumerate().map(|(k, x)| x + 1e-3 * (j as f64 + 1.0) * if k == 0 { 1.0 } else { -0.5 }).collect())
            .collect(),
    );
    build_smallcell(&spec).unwrap();
    spec
}
