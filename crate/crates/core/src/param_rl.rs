//! Model-free parameterized learning: the policy is learned from samples at
//! fixed parameters, cost derivatives come from paired environments that
//! differ in one parameter, and the parameters follow the learned gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{sample_action, Environment, StartDistribution, Step, TabularEnv};
use crate::error::{Error, Result};
use crate::learn::{learning_rate, run_learner, BetaSchedule, LearnConfig, MepAgent, TabularAgent, VisitCounts};
use crate::mdp::{QTable, StochasticPolicy, TabularMdp};
use crate::param::{AnnealConfig, Coord, ParamKind, ParameterizedMdp, TraceRow};
use crate::soft::{gibbs_with_kappa, harden};

/// Simulator over a [`ParameterizedMdp`] at its current parameters.
#[derive(Debug, Clone)]
pub struct ParameterizedEnv {
    model: ParameterizedMdp,
    inner: TabularEnv,
}

impl ParameterizedEnv {
    /// Episodes start uniformly over `sources`.
    pub fn new(model: ParameterizedMdp, sources: Vec<usize>) -> Self {
        let inner = TabularEnv::with_start(model.realize(), StartDistribution::UniformOver(sources));
        Self { model, inner }
    }

    pub fn model(&self) -> &ParameterizedMdp {
        &self.model
    }

    pub fn get(&self, c: Coord) -> f64 {
        self.model.get(c)
    }

    /// Changes one parameter and rebuilds the costs.
    pub fn set_coord(&mut self, c: Coord, v: f64) {
        self.model.set(c, v);
        self.inner.replace_mdp(self.model.realize());
    }

    pub fn set_state(&mut self, s: usize) -> Result<()> {
        self.inner.set_state(s)
    }

    pub fn state(&self) -> usize {
        self.inner.state()
    }

    pub fn draw(&mut self) -> f64 {
        self.inner.draw()
    }

    pub fn step_with_draw(&mut self, action: usize, u: f64) -> Result<Step> {
        self.inner.step_with_draw(action, u)
    }
}

impl Environment for ParameterizedEnv {
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        self.inner.step(action)
    }

    fn export_mdp(&self) -> TabularMdp {
        self.inner.export_mdp()
    }

    fn is_terminal(&self, state: usize) -> bool {
        self.inner.is_terminal(state)
    }

    /// `zeta` and `eta` list the free coordinates in [`ParameterizedMdp::free_coords`]
    /// order.
    fn set_parameters(&mut self, zeta: &[f64], eta: &[f64]) -> Result<()> {
        let coords = self.model.free_coords();
        let (zc, ec): (Vec<Coord>, Vec<Coord>) = coords.iter().partition(|c| c.kind == ParamKind::Zeta);
        if zc.len() != zeta.len() || ec.len() != eta.len() {
            return Err(Error::Dimension(format!(
                "expected {} state and {} action parameters, got {} and {}",
                zc.len(),
                ec.len(),
                zeta.len(),
                eta.len()
            )));
        }
        for (c, v) in zc.iter().zip(zeta).chain(ec.iter().zip(eta)) {
            self.model.set(*c, *v);
        }
        self.inner.replace_mdp(self.model.realize());
        Ok(())
    }
}

/// Two copies of one environment; the second is shifted by `delta` in a
/// single coordinate while probing it.
#[derive(Debug, Clone)]
pub struct EpsDistinctPair {
    pub env1: ParameterizedEnv,
    pub env2: ParameterizedEnv,
    pub coord: Option<Coord>,
    pub delta: f64,
}

impl EpsDistinctPair {
    pub fn new(env: ParameterizedEnv) -> Self {
        Self {
            env2: env.clone(),
            env1: env,
            coord: None,
            delta: 0.0,
        }
    }

    /// Aligns the second copy with the first, then offsets `coord` by `delta`.
    pub fn probe(&mut self, coord: Coord, delta: f64) -> Result<()> {
        if !(delta.is_finite() && delta != 0.0) {
            return Err(Error::InvalidConfig(format!("probe offset must be non-zero, got {delta}")));
        }
        self.env2 = self.env1.clone();
        let base = self.env1.get(coord);
        self.env2.set_coord(coord, base + delta);
        self.coord = Some(coord);
        self.delta = delta;
        Ok(())
    }

    pub fn reset(&mut self, seed: u64) -> usize {
        let s = self.env1.reset(seed);
        self.env2.reset(seed);
        s
    }

    /// Steps both copies with the same uniform draw and checks that they
    /// land in the same state.
    pub fn step(&mut self, action: usize) -> Result<(Step, Step)> {
        let u = self.env1.draw();
        self.env2.draw();
        let a = self.env1.step_with_draw(action, u)?;
        let b = self.env2.step_with_draw(action, u)?;
        if a.next_state != b.next_state {
            return Err(Error::CrnMismatch(a.next_state, b.next_state));
        }
        Ok((a, b))
    }
}

/// Forward difference `(c' - c) / Δ`.
pub fn finite_diff_cost_derivative(cost: f64, shifted_cost: f64, delta: f64) -> f64 {
    (shifted_cost - cost) / delta
}

/// Derivative estimate from one environment: replays `(state, action, u)` at
/// `θ` and at `θ + Δ`, then restores `θ`.
pub fn single_env_derivative(
    env: &mut ParameterizedEnv,
    coord: Coord,
    delta: f64,
    state: usize,
    action: usize,
    u: f64,
) -> Result<(Step, f64)> {
    let theta = env.get(coord);
    env.set_state(state)?;
    let a = env.step_with_draw(action, u)?;
    env.set_coord(coord, theta + delta);
    env.set_state(state)?;
    let b = env.step_with_draw(action, u);
    env.set_coord(coord, theta);
    let b = b?;
    env.set_state(a.next_state)?;
    if a.next_state != b.next_state {
        return Err(Error::CrnMismatch(a.next_state, b.next_state));
    }
    Ok((a, finite_diff_cost_derivative(a.cost, b.cost, delta)))
}

/// `K(s,a) ← (1-ν)K(s,a) + ν[d + γ g_next]`, where `g_next` is
/// `Σ_a μ(a|x')K(x',a)` (zero at a terminal successor).
pub fn k_update(k: &mut QTable, state: usize, action: usize, derivative: f64, nu: f64, gamma: f64, g_next: f64) -> Result<()> {
    let target = derivative + gamma * g_next;
    if !target.is_finite() {
        return Err(Error::NonFinite(format!("derivative target at ({state}, {action})")));
    }
    let old = k.get(state, action);
    k.set(state, action, (1.0 - nu) * old + nu * target);
    Ok(())
}

fn mixture(k: &QTable, policy: &StochasticPolicy, s: usize) -> f64 {
    k.row(s).iter().zip(policy.row(s)).map(|(x, m)| x * m).sum()
}

/// Learns `K` for one coordinate under a fixed policy from `episodes` probe
/// episodes. Returns the number of steps taken.
#[allow(clippy::too_many_arguments)]
pub fn learn_k(
    pair: &mut EpsDistinctPair,
    k: &mut QTable,
    counts: &mut VisitCounts,
    policy: &StochasticPolicy,
    gamma: f64,
    lr_omega: f64,
    episodes: usize,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let mut total = 0;
    for _ in 0..episodes {
        let mut x = pair.reset(rng.random::<u64>());
        let mut steps = 0;
        while steps < max_steps && !pair.env1.is_terminal(x) {
            let a = sample_action(policy.row(x), rng.random::<f64>());
            let (s1, s2) = pair.step(a)?;
            let d = finite_diff_cost_derivative(s1.cost, s2.cost, pair.delta);
            let g_next = if s1.terminal { 0.0 } else { mixture(k, policy, s1.next_state) };
            let nu = learning_rate(counts, x, a, lr_omega);
            k_update(k, x, a, d, nu, gamma, g_next)?;
            counts.increment(x, a);
            x = s1.next_state;
            steps += 1;
            total += 1;
        }
    }
    Ok(total)
}

/// Settings of the model-free parameterized learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamLearnConfig {
    pub anneal: AnnealConfig,
    /// Learner settings for the policy stage; `episodes` is per β level and
    /// the schedule is replaced by the current constant β.
    pub learn: LearnConfig,
    /// Probe episodes per coordinate per sweep.
    pub probe_episodes: usize,
    /// Probe offset is `delta_scale · (1 + |θ|)`.
    pub delta_scale: f64,
    /// Parameters have converged at a β once no coordinate moves more than
    /// this in a sweep.
    pub sweep_tol: f64,
    pub max_sweeps: usize,
    /// Cap on the move of a single coordinate per sweep.
    pub max_move: f64,
    /// Box that parameters are projected onto after each step.
    pub domain: Option<(f64, f64)>,
    /// Restart the policy learner's visit counts at every β level.
    pub reset_counts: bool,
}

impl Default for ParamLearnConfig {
    fn default() -> Self {
        Self {
            anneal: AnnealConfig::default(),
            learn: LearnConfig {
                episodes: 200,
                ..LearnConfig::default()
            },
            probe_episodes: 20,
            delta_scale: 1e-3,
            sweep_tol: 1e-4,
            max_sweeps: 50,
            max_move: 0.05,
            domain: None,
            reset_counts: true,
        }
    }
}

impl ParamLearnConfig {
    pub fn validate(&self) -> Result<()> {
        self.anneal.validate()?;
        self.learn.validate()?;
        if self.probe_episodes == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("need at least one probe episode and one sweep".into()));
        }
        if !(self.delta_scale > 0.0 && self.max_move > 0.0) {
            return Err(Error::InvalidConfig("delta_scale and max_move must be positive".into()));
        }
        if let Some((lo, hi)) = self.domain {
            if !(lo < hi) {
                return Err(Error::InvalidConfig("empty parameter domain".into()));
            }
        }
        Ok(())
    }
}

/// Result of a model-free parameterized run.
#[derive(Debug, Clone)]
pub struct ParamLearnOutcome {
    pub model: ParameterizedMdp,
    pub psi: QTable,
    /// Greedy policy of the learned table.
    pub policy: StochasticPolicy,
    pub final_beta: f64,
    /// `Σ_s w_s J(s)` of `policy` at the learned parameters, from the exact
    /// model (reporting only).
    pub total_cost: f64,
    pub trace: Vec<TraceRow>,
    pub env_steps: usize,
}

/// Annealed model-free loop: at each β learn the policy, then sweep the free
/// coordinates (probe, learn `K`, step) until the parameters settle, then
/// raise β.
pub fn run_algorithm3(env: &ParameterizedEnv, cfg: &ParamLearnConfig) -> Result<ParamLearnOutcome> {
    cfg.validate()?;
    let gamma = env.model().gamma();
    let (ns, na) = (env.n_states(), env.n_actions());
    let coords = env.model().free_coords();
    let weights = env.model().weights.clone();
    let mut learn = cfg.learn.clone();
    learn.gamma = gamma;
    let max_steps = learn.max_steps_for(ns);

    let mut pair = EpsDistinctPair::new(env.clone());
    let mut agent = MepAgent::new(ns, na, &learn);
    let mut ks: Vec<QTable> = coords.iter().map(|_| QTable::zeros(ns, na)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.learn.seed);
    rng.set_stream(11);
    let mut trace = Vec::new();
    let mut env_steps = 0;
    let mut beta = cfg.anneal.beta_min;
    let mut level = 0u64;
    loop {
        // policy stage at constant β
        if cfg.reset_counts {
            agent.counts.reset();
        }
        agent.set_schedule(BetaSchedule::Constant { beta });
        learn.schedule = BetaSchedule::Constant { beta };
        learn.seed = cfg.learn.seed ^ level.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let series = run_learner(&mut pair.env1, &mut agent, &learn, None, 0)?;
        env_steps += series.rows.iter().map(|r| r.steps).sum::<usize>();

        let policy = gibbs_with_kappa(&agent.psi, agent.kappa());
        let mut sweeps = 0;
        for _ in 0..cfg.max_sweeps {
            sweeps += 1;
            let mut moved = 0.0f64;
            for (i, &c) in coords.iter().enumerate() {
                let theta = pair.env1.get(c);
                let delta = cfg.delta_scale * (1.0 + theta.abs());
                pair.probe(c, delta)?;
                let mut counts = VisitCounts::new(ns, na);
                env_steps += 2 * learn_k(
                    &mut pair,
                    &mut ks[i],
                    &mut counts,
                    &policy,
                    gamma,
                    cfg.learn.lr_omega,
                    cfg.probe_episodes,
                    max_steps,
                    &mut rng,
                )?;
                let grad: f64 = (0..ns).map(|s| weights[s] * mixture(&ks[i], &policy, s)).sum();
                let step = match c.kind {
                    ParamKind::Zeta => cfg.anneal.step_zeta,
                    ParamKind::Eta => cfg.anneal.step_eta,
                };
                let mv = (step * grad).clamp(-cfg.max_move, cfg.max_move);
                let mut next = theta - mv;
                if let Some((lo, hi)) = cfg.domain {
                    next = next.clamp(lo, hi);
                }
                pair.env1.set_coord(c, next);
                moved = moved.max((next - theta).abs());
            }
            if moved < cfg.sweep_tol {
                break;
            }
        }

        let model = pair.env1.model().clone();
        let hard_policy = harden(&agent.psi);
        let soft_value: f64 = agent.value_estimate(&model.base().terminal_flags()).weighted_sum(&weights);
        trace.push(TraceRow {
            beta,
            free_energy: soft_value,
            cost: model.total_cost(&hard_policy)?,
            inner_iterations: sweeps,
            params: model.free_values(),
        });
        let hard = crate::param::policy_is_hard(&agent.behavior_policy(), &agent.psi, model.base(), cfg.anneal.hard_tol);
        if hard || beta * cfg.anneal.tau > cfg.anneal.beta_max {
            let total_cost = model.total_cost(&hard_policy)?;
            return Ok(ParamLearnOutcome {
                model,
                psi: agent.psi,
                policy: hard_policy,
                final_beta: beta,
                total_cost,
                trace,
                env_steps,
            });
        }
        beta *= cfg.anneal.tau;
        level += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{ParamBlock, SquaredEuclidean};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn line(zf: f64) -> ParameterizedEnv {
        let base = TabularMdp::from_triples(2, 1, &[(0, 0, 1, 1.0), (1, 0, 1, 1.0)], &[], 1.0, &[1]).unwrap();
        let zeta = ParamBlock::new(1, vec![3.0, zf]).unwrap();
        let mut pm = ParameterizedMdp::new(base, zeta, ParamBlock::empty(), Arc::new(SquaredEuclidean::states_only())).unwrap();
        pm.free_zeta[1] = true;
        ParameterizedEnv::new(pm, vec![0])
    }

    #[test]
    fn forward_difference_of_quadratic() {
        let mut pair = EpsDistinctPair::new(line(5.0));
        pair.probe(Coord::zeta(1, 0), 1e-3).unwrap();
        pair.reset(0);
        let (a, b) = pair.step(0).unwrap();
        let d = finite_diff_cost_derivative(a.cost, b.cost, 1e-3);
        assert_abs_diff_eq!(d, 4.001, epsilon = 1e-9);
    }

    #[test]
    fn unrelated_coordinate_has_zero_derivative() {
        let mut env = line(5.0);
        // a coordinate of a state the episode never touches after its hop
        let mut pm = env.model().clone();
        pm.free_zeta[1] = false;
        env = ParameterizedEnv::new(pm, vec![0]);
        let mut pair = EpsDistinctPair::new(env);
        pair.probe(Coord::zeta(1, 0), 0.5).unwrap();
        pair.reset(0);
        let (a, _) = pair.step(0).unwrap();
        assert_eq!(a.cost, 4.0);
        assert_eq!(finite_diff_cost_derivative(2.0, 2.0, 0.5), 0.0);
    }

    #[test]
    fn k_update_by_hand() {
        let mut k = QTable::zeros(2, 1);
        k_update(&mut k, 0, 0, 4.0, 1.0, 0.9, 0.0).unwrap();
        assert_eq!(k.get(0, 0), 4.0);
        k_update(&mut k, 0, 0, 100.0, 0.0, 0.9, 3.0).unwrap();
        assert_eq!(k.get(0, 0), 4.0);
        k.set(0, 0, 2.0);
        k_update(&mut k, 0, 0, 1.0, 0.5, 0.9, 2.0).unwrap();
        assert_abs_diff_eq!(k.get(0, 0), 2.4, epsilon = 1e-12);
        assert!(k_update(&mut k, 0, 0, f64::NAN, 0.5, 0.9, 2.0).is_err());
    }

    #[test]
    fn single_env_matches_pair() {
        let env = line(5.0);
        let c = Coord::zeta(1, 0);
        let mut pair = EpsDistinctPair::new(env.clone());
        pair.probe(c, 1e-3).unwrap();
        pair.reset(9);
        let mut single = env;
        single.reset(9);
        let u = single.draw();
        let (_, d1) = single_env_derivative(&mut single, c, 1e-3, 0, 0, u).unwrap();
        let (a, b) = pair.step(0).unwrap();
        assert_eq!(d1, finite_diff_cost_derivative(a.cost, b.cost, 1e-3));
        assert_eq!(single.get(c), 5.0);
    }

    #[test]
    fn set_parameters_checks_shape() {
        let mut env = line(5.0);
        assert!(env.set_parameters(&[1.0, 2.0], &[]).is_err());
        env.set_parameters(&[4.0], &[]).unwrap();
        assert_eq!(env.export_mdp().c(0, 0, 1), 1.0);
    }
}
