//! Small-cell network design: users route traffic through relocatable
//! facilities to a fixed base station.
//!
//! State layout: users `0..n`, facilities `n..n+F`, base station `n+F`
//! (terminal). Action `j` sends traffic to facility `j`. Facilities forward
//! only down the index order: facility `k` taking action `j < k` hops to
//! facility `j`, and any `j ≥ k` goes to the base station. Forwarding among
//! facilities is therefore acyclic and every policy reaches the base station
//! within `F + 1` hops. Each hop costs the squared distance between its
//! endpoints.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::param::{ParamBlock, ParameterizedMdp, SquaredEuclidean};
use crate::param_rl::ParameterizedEnv;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionMode {
    Deterministic,
    /// The intended hop succeeds with `p_intended`; otherwise traffic lands
    /// on the first facility.
    Probabilistic { p_intended: f64 },
}

/// Which states contribute to the objective `Σ_s V(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    AllSources,
    UsersOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallCellSpec {
    pub users: Vec<Vec<f64>>,
    pub base_station: Vec<f64>,
    pub n_facilities: usize,
    /// Starting facility locations; the user centroid when absent.
    #[serde(default)]
    pub facilities: Option<Vec<Vec<f64>>>,
    pub mode: TransitionMode,
    #[serde(default)]
    pub objective: Objective,
    pub gamma: f64,
}

impl SmallCellSpec {
    pub fn dim(&self) -> usize {
        self.base_station.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_states(&self) -> usize {
        self.users.len() + self.n_facilities + 1
    }

    pub fn facility_state(&self, j: usize) -> usize {
        self.users.len() + j
    }

    pub fn base_state(&self) -> usize {
        self.users.len() + self.n_facilities
    }

    pub fn user_centroid(&self) -> Vec<f64> {
        let d = self.dim();
        let mut c = vec![0.0; d];
        for u in &self.users {
            for k in 0..d {
                c[k] += u[k] / self.users.len() as f64;
            }
        }
        c
    }

    fn check(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidConfig("base station needs at least one coordinate".into()));
        }
        if self.users.is_empty() || self.n_facilities == 0 {
            return Err(Error::InvalidConfig("need at least one user and one facility".into()));
        }
        if self.users.iter().any(|u| u.len() != d) {
            return Err(Error::InvalidConfig("user coordinates have inconsistent dimension".into()));
        }
        if let Some(f) = &self.facilities {
            if f.len() != self.n_facilities || f.iter().any(|x| x.len() != d) {
                return Err(Error::InvalidConfig("initial facility locations have the wrong shape".into()));
            }
        }
        let all = self.users.iter().chain(std::iter::once(&self.base_station));
        if all.flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite coordinate".into()));
        }
        if let TransitionMode::Probabilistic { p_intended } = self.mode {
            if !(0.0..=1.0).contains(&p_intended) {
                return Err(Error::InvalidConfig(format!("p_intended {p_intended} outside [0, 1]")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// Uniform users and base station in `[lo, hi]^dim`; facilities start at the
/// user centroid with a small seeded jitter so that they can separate.
pub fn generate_smallcell_instance(
    n_users: usize,
    n_facilities: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    dim: usize,
) -> SmallCellSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.random_range(lo..=hi)).collect() };
    let users: Vec<Vec<f64>> = (0..n_users).map(|_| point(&mut rng)).collect();
    let base_station = point(&mut rng);
    let mut spec = SmallCellSpec {
        users,
        base_station,
        n_facilities,
        facilities: None,
        mode: TransitionMode::Deterministic,
        objective: Objective::AllSources,
        gamma: 1.0,
    };
    let c = spec.user_centroid();
    let jitter = Normal::new(0.0, 1e-3 * (hi - lo)).expect("positive width");
    spec.facilities = Some(
        (0..n_facilities)
            .map(|_| c.iter().map(|x| x + jitter.sample(&mut rng)).collect())
            .collect(),
    );
    spec
}

/// 46 users and 5 facilities in the unit square.
pub fn preset_small(seed: u64) -> SmallCellSpec {
    generate_smallcell_instance(46, 5, seed, 0.0, 1.0, 2)
}

/// 610 users and 10 facilities in the unit square.
pub fn preset_large(seed: u64) -> SmallCellSpec {
    generate_smallcell_instance(610, 10, seed, 0.0, 1.0, 2)
}

/// A built instance: the parameterized model with facility locations free.
#[derive(Debug, Clone)]
pub struct SmallCell {
    pub spec: SmallCellSpec,
    pub model: ParameterizedMdp,
}

impl SmallCell {
    /// Simulator whose parameters are the facility coordinates; episodes
    /// start uniformly over the objective's source states.
    pub fn env(&self) -> ParameterizedEnv {
        ParameterizedEnv::new(self.model.clone(), self.sources())
    }

    pub fn sources(&self) -> Vec<usize> {
        (0..self.model.n_states()).filter(|&s| self.model.weights[s] > 0.0).collect()
    }

    /// Current facility locations.
    pub fn facilities(&self) -> Vec<Vec<f64>> {
        (0..self.spec.n_facilities)
            .map(|j| self.model.zeta.point(self.spec.facility_state(j)).to_vec())
            .collect()
    }
}

fn routing_mdp(spec: &SmallCellSpec) -> Result<TabularMdp> {
    let n = spec.n_users();
    let nf = spec.n_facilities;
    let ns = spec.n_states();
    let delta = spec.base_state();
    let mut p = vec![0.0; ns * nf * ns];
    let mut add = |s: usize, a: usize, s2: usize, v: f64| p[(s * nf + a) * ns + s2] += v;
    for s in 0..ns {
        for j in 0..nf {
            if s == delta {
                add(s, j, s, 1.0);
                continue;
            }
            let target = if s >= n && j >= s - n { delta } else { n + j };
            match spec.mode {
                TransitionMode::Deterministic => add(s, j, target, 1.0),
                TransitionMode::Probabilistic { p_intended } => {
                    add(s, j, target, p_intended);
                    add(s, j, n, 1.0 - p_intended);
                }
            }
        }
    }
    let mut terminal = vec![false; ns];
    terminal[delta] = true;
    TabularMdp::new(ns, nf, p, vec![0.0; ns * nf * ns], spec.gamma, terminal)
}

pub fn build_smallcell(spec: &SmallCellSpec) -> Result<SmallCell> {
    spec.check()?;
    let base = routing_mdp(spec)?;
    let d = spec.dim();
    let start = spec
        .facilities
        .clone()
        .unwrap_or_else(|| vec![spec.user_centroid(); spec.n_facilities]);
    let mut values = Vec::with_capacity(spec.n_states() * d);
    for p in spec.users.iter().chain(&start).chain(std::iter::once(&spec.base_station)) {
        values.extend_from_slice(p);
    }
    let zeta = ParamBlock::new(d, values)?;
    let mut model = ParameterizedMdp::new(base, zeta, ParamBlock::empty(), Arc::new(SquaredEuclidean::states_only()))?;
    let n = spec.n_users();
    for j in 0..spec.n_facilities {
        model.free_zeta[n + j] = true;
    }
    if spec.objective == Objective::UsersOnly {
        for w in &mut model.weights[n..] {
            *w = 0.0;
        }
    }
    Ok(SmallCell { spec: spec.clone(), model })
}
