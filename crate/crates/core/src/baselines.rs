//! Comparison learners: Q-learning, Double Q-learning, and soft Q-learning
//! (entropy-regularized G-learning), all in cost-minimization form.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::sample_action;
use crate::error::{Error, Result};
use crate::learn::{learning_rate, BetaSchedule, LearnConfig, TabularAgent, Transition, VisitCounts};
use crate::mdp::{QTable, StochasticPolicy, TabularMdp, ValueTable};
use crate::numeric::{gibbs_weights, softmin};
use crate::soft::{gibbs_with_kappa, harden};

/// Which comparison learner to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Q,
    DoubleQ,
    SoftQ,
}

/// Settings of a baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub algorithm: BaselineKind,
    pub epsilon: f64,
    pub schedule: BetaSchedule,
    pub gamma: f64,
    pub lr_omega: f64,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn from_learn(algorithm: BaselineKind, cfg: &LearnConfig) -> Self {
        Self {
            algorithm,
            epsilon: 0.1,
            schedule: cfg.schedule,
            gamma: cfg.gamma,
            lr_omega: cfg.lr_omega,
            seed: cfg.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        self.schedule.validate()
    }

    pub fn build_agent(&self, n_states: usize, n_actions: usize) -> Box<dyn TabularAgent + Send> {
        match self.algorithm {
            BaselineKind::Q => Box::new(QAgent::new(n_states, n_actions, self)),
            BaselineKind::DoubleQ => Box::new(DoubleQAgent::new(n_states, n_actions, self)),
            BaselineKind::SoftQ => Box::new(SoftQAgent::new(n_states, n_actions, self)),
        }
    }
}

fn row_min(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `Q(x,u) ← (1-ν)Q + ν[c + γ min_a' Q(x',a')]`.
pub fn q_update(q: &mut QTable, tr: &Transition, nu: f64, gamma: f64) {
    let boot = if tr.next_terminal { 0.0 } else { row_min(q.row(tr.next_state)) };
    let old = q.get(tr.state, tr.action);
    q.set(tr.state, tr.action, (1.0 - nu) * old + nu * (tr.cost + gamma * boot));
}

/// Which table a Double Q step updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coin {
    A,
    B,
}

/// Updates the table chosen by `coin`, bootstrapping with the other table's
/// value at the updating table's argmin action.
pub fn double_q_update(qa: &mut QTable, qb: &mut QTable, tr: &Transition, nu: f64, gamma: f64, coin: Coin) {
    let (upd, other) = match coin {
        Coin::A => (qa, &*qb),
        Coin::B => (qb, &*qa),
    };
    let boot = if tr.next_terminal {
        0.0
    } else {
        let row = upd.row(tr.next_state);
        let best = crate::mdp::argmin_first(row);
        other.get(tr.next_state, best)
    };
    let old = upd.get(tr.state, tr.action);
    upd.set(tr.state, tr.action, (1.0 - nu) * old + nu * (tr.cost + gamma * boot));
}

/// `G(x,u) ← (1-ν)G + ν[c + γ·(-1/β) log Σ exp(-β G(x',·))]`.
pub fn soft_q_update(g: &mut QTable, tr: &Transition, nu: f64, gamma: f64, beta: f64) -> Result<()> {
    let boot = if tr.next_terminal { 0.0 } else { softmin(g.row(tr.next_state), beta) };
    let target = tr.cost + gamma * boot;
    if !target.is_finite() {
        return Err(Error::NonFinite(format!("soft-Q target with beta={beta}")));
    }
    let old = g.get(tr.state, tr.action);
    g.set(tr.state, tr.action, (1.0 - nu) * old + nu * target);
    Ok(())
}

/// Model-based soft-Q map
/// `Σ p (c + γ softmin_β G(s'))`, optionally with `(1/β) Σ p log p` added.
///
/// With the transition-entropy term included it coincides with the
/// discounted-entropy map at `α = γ`.
pub fn soft_q_operator(g: &QTable, mdp: &TabularMdp, beta: f64, gamma: f64, transition_entropy: bool) -> QTable {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let v: Vec<f64> = (0..ns)
        .map(|s| if mdp.is_terminal(s) { 0.0 } else { softmin(g.row(s), beta) })
        .collect();
    let coef = if transition_entropy { 1.0 / beta } else { 0.0 };
    let mut out = QTable::zeros(ns, na);
    for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..na {
            let mut one_step = 0.0;
            let mut boot = 0.0;
            for &s2 in mdp.successors(s, a) {
                let p = mdp.p(s, a, s2);
                one_step += p * (mdp.c(s, a, s2) + coef * p.ln());
                boot += p * v[s2];
            }
            out.set(s, a, one_step + gamma * boot);
        }
    }
    out
}

/// Greedy action with uniformly random tie-breaking.
fn greedy_random_tie(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let m = row_min(row);
    let ties: Vec<usize> = (0..row.len()).filter(|&a| row[a] == m).collect();
    ties[rng.random_range(0..ties.len())]
}

fn epsilon_greedy(row: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..row.len())
    } else {
        greedy_random_tie(row, rng)
    }
}

fn epsilon_greedy_policy(q: &QTable, epsilon: f64) -> StochasticPolicy {
    let (ns, na) = (q.n_states(), q.n_actions());
    let mut probs = vec![epsilon / na as f64; ns * na];
    for s in 0..ns {
        let row = q.row(s);
        let m = row_min(row);
        let ties: Vec<usize> = (0..na).filter(|&a| row[a] == m).collect();
        for &a in &ties {
            probs[s * na + a] += (1.0 - epsilon) / ties.len() as f64;
        }
    }
    StochasticPolicy::from_raw(ns, na, probs)
}

fn hard_values(q: &QTable, terminal: &[bool]) -> ValueTable {
    ValueTable(
        (0..q.n_states())
            .map(|s| if terminal[s] { 0.0 } else { row_min(q.row(s)) })
            .collect(),
    )
}

/// Q-learning with ε-greedy exploration.
#[derive(Debug, Clone)]
pub struct QAgent {
    pub q: QTable,
    counts: VisitCounts,
    epsilon: f64,
    gamma: f64,
    lr_omega: f64,
}

impl QAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: &BaselineConfig) -> Self {
        Self {
            q: QTable::zeros(n_states, n_actions),
            counts: VisitCounts::new(n_states, n_actions),
            epsilon: cfg.epsilon,
            gamma: cfg.gamma,
            lr_omega: cfg.lr_omega,
        }
    }
}

impl TabularAgent for QAgent {
    fn name(&self) -> &'static str {
        "q"
    }
    fn begin_episode(&mut self, _episode: usize) {}
    fn beta(&self) -> f64 {
        f64::NAN
    }
    fn act(&mut self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        epsilon_greedy(self.q.row(state), self.epsilon, rng)
    }
    fn observe(&mut self, tr: &Transition, _rng: &mut ChaCha8Rng) -> Result<()> {
        let nu = learning_rate(&self.counts, tr.state, tr.action, self.lr_omega);
        q_update(&mut self.q, tr, nu, self.gamma);
        self.counts.increment(tr.state, tr.action);
        Ok(())
    }
    fn value_estimate(&self, terminal: &[bool]) -> ValueTable {
        hard_values(&self.q, terminal)
    }
    fn greedy_policy(&self) -> StochasticPolicy {
        harden(&self.q)
    }
    fn behavior_policy(&self) -> StochasticPolicy {
        epsilon_greedy_policy(&self.q, self.epsilon)
    }
}

/// Double Q-learning with ε-greedy exploration on the summed tables.
#[derive(Debug, Clone)]
pub struct DoubleQAgent {
    pub qa: QTable,
    pub qb: QTable,
    counts_a: VisitCounts,
    counts_b: VisitCounts,
    epsilon: f64,
    gamma: f64,
    lr_omega: f64,
    scratch: Vec<f64>,
}

impl DoubleQAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: &BaselineConfig) -> Self {
        Self {
            qa: QTable::zeros(n_states, n_actions),
            qb: QTable::zeros(n_states, n_actions),
            counts_a: VisitCounts::new(n_states, n_actions),
            counts_b: VisitCounts::new(n_states, n_actions),
            epsilon: cfg.epsilon,
            gamma: cfg.gamma,
            lr_omega: cfg.lr_omega,
            scratch: vec![0.0; n_actions],
        }
    }

    fn mean_table(&self) -> QTable {
        let vals = self
            .qa
            .as_slice()
            .iter()
            .zip(self.qb.as_slice())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        QTable::from_vec(self.qa.n_states(), self.qa.n_actions(), vals).expect("same shape")
    }
}

impl TabularAgent for DoubleQAgent {
    fn name(&self) -> &'static str {
        "double_q"
    }
    fn begin_episode(&mut self, _episode: usize) {}
    fn beta(&self) -> f64 {
        f64::NAN
    }
    fn act(&mut self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        for (o, (a, b)) in self.scratch.iter_mut().zip(self.qa.row(state).iter().zip(self.qb.row(state))) {
            *o = a + b;
        }
        let row = std::mem::take(&mut self.scratch);
        let a = epsilon_greedy(&row, self.epsilon, rng);
        self.scratch = row;
        a
    }
    fn observe(&mut self, tr: &Transition, rng: &mut ChaCha8Rng) -> Result<()> {
        let coin = if rng.random::<bool>() { Coin::A } else { Coin::B };
        let counts = match coin {
            Coin::A => &mut self.counts_a,
            Coin::B => &mut self.counts_b,
        };
        let nu = learning_rate(counts, tr.state, tr.action, self.lr_omega);
        counts.increment(tr.state, tr.action);
        double_q_update(&mut self.qa, &mut self.qb, tr, nu, self.gamma, coin);
        Ok(())
    }
    fn value_estimate(&self, terminal: &[bool]) -> ValueTable {
        hard_values(&self.mean_table(), terminal)
    }
    fn greedy_policy(&self) -> StochasticPolicy {
        harden(&self.mean_table())
    }
    fn behavior_policy(&self) -> StochasticPolicy {
        epsilon_greedy_policy(&self.mean_table(), self.epsilon)
    }
}

/// Soft Q-learning: Gibbs exploration with exponent `-β G` and the soft
/// target, on the same β schedule as the maximum-entropy learner.
#[derive(Debug, Clone)]
pub struct SoftQAgent {
    pub g: QTable,
    counts: VisitCounts,
    schedule: BetaSchedule,
    gamma: f64,
    lr_omega: f64,
    beta: f64,
    scratch: Vec<f64>,
}

impl SoftQAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: &BaselineConfig) -> Self {
        Self {
            g: QTable::zeros(n_states, n_actions),
            counts: VisitCounts::new(n_states, n_actions),
            schedule: cfg.schedule,
            gamma: cfg.gamma,
            lr_omega: cfg.lr_omega,
            beta: cfg.schedule.beta(1),
            scratch: vec![0.0; n_actions],
        }
    }
}

impl TabularAgent for SoftQAgent {
    fn name(&self) -> &'static str {
        "soft_q"
    }
    fn begin_episode(&mut self, episode: usize) {
        self.beta = self.schedule.beta(episode);
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn act(&mut self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        gibbs_weights(self.g.row(state), self.beta, &mut self.scratch);
        sample_action(&self.scratch, rng.random::<f64>())
    }
    fn observe(&mut self, tr: &Transition, _rng: &mut ChaCha8Rng) -> Result<()> {
        let nu = learning_rate(&self.counts, tr.state, tr.action, self.lr_omega);
        soft_q_update(&mut self.g, tr, nu, self.gamma, self.beta)?;
        self.counts.increment(tr.state, tr.action);
        Ok(())
    }
    fn value_estimate(&self, terminal: &[bool]) -> ValueTable {
        ValueTable(
            (0..self.g.n_states())
                .map(|s| if terminal[s] { 0.0 } else { softmin(self.g.row(s), self.beta) })
                .collect(),
        )
    }
    fn greedy_policy(&self) -> StochasticPolicy {
        harden(&self.g)
    }
    fn behavior_policy(&self) -> StochasticPolicy {
        gibbs_with_kappa(&self.g, self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{mep_q_update, EntropyVariant};
    use rand::SeedableRng;

    fn tr(cost: f64, next_terminal: bool) -> Transition {
        Transition {
            state: 0,
            action: 0,
            cost,
            next_state: 1,
            next_terminal,
        }
    }

    #[test]
    fn q_examples() {
        let mut q = QTable::from_vec(2, 2, vec![4.0, 0.0, 2.0, 3.0]).unwrap();
        q_update(&mut q, &tr(1.0, false), 0.5, 0.5);
        assert_eq!(q.get(0, 0), 3.0);
        let before = q.clone();
        q_update(&mut q, &tr(1.0, false), 0.0, 0.5);
        assert_eq!(q, before);
        q_update(&mut q, &tr(2.0, true), 1.0, 0.5);
        assert_eq!(q.get(0, 0), 2.0);
    }

    #[test]
    fn double_q_examples() {
        let mut qa = QTable::from_vec(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut qb = QTable::from_vec(2, 2, vec![0.0, 0.0, 3.0, 7.0]).unwrap();
        double_q_update(&mut qa, &mut qb, &tr(0.0, false), 1.0, 1.0, Coin::A);
        assert_eq!(qa.get(0, 0), 7.0);
        let snapshot = qa.clone();
        double_q_update(&mut qa, &mut qb, &tr(5.0, true), 1.0, 1.0, Coin::B);
        assert_eq!(qb.get(0, 0), 5.0);
        assert_eq!(qa, snapshot);

        let mut same_a = QTable::from_vec(2, 2, vec![4.0, 0.0, 2.0, 3.0]).unwrap();
        let mut same_b = same_a.clone();
        let mut plain = same_a.clone();
        double_q_update(&mut same_a, &mut same_b, &tr(1.0, false), 0.5, 0.5, Coin::A);
        q_update(&mut plain, &tr(1.0, false), 0.5, 0.5);
        assert_eq!(same_a, plain);
    }

    #[test]
    fn soft_q_examples() {
        let mut g = QTable::zeros(2, 2);
        soft_q_update(&mut g, &tr(1.0, true), 1.0, 1.0, 1.0).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        let mut g = QTable::zeros(2, 2);
        soft_q_update(&mut g, &tr(1.0, false), 1.0, 1.0, 1.0).unwrap();
        assert!((g.get(0, 0) - 0.306853).abs() < 1e-6);
    }

    #[test]
    fn soft_q_matches_mep_at_unit_discount() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let vals: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let beta = rng.random_range(0.1..5.0);
            let nu = rng.random::<f64>();
            let t = Transition {
                state: 0,
                action: 1,
                cost: rng.random_range(0.0..2.0),
                next_state: 2,
                next_terminal: false,
            };
            let mut a = QTable::from_vec(3, 2, vals).unwrap();
            let mut b = a.clone();
            soft_q_update(&mut a, &t, nu, 1.0, beta).unwrap();
            mep_q_update(&mut b, &t, nu, beta, 1.0, EntropyVariant::Finite).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn large_beta_soft_target_approaches_hard_target() {
        let mut g = QTable::from_vec(2, 3, vec![0.0, 0.0, 0.0, 1.0, 1.5, 4.0]).unwrap();
        let mut q = g.clone();
        let beta = 1e3;
        soft_q_update(&mut g, &tr(1.0, false), 1.0, 0.9, beta).unwrap();
        q_update(&mut q, &tr(1.0, false), 1.0, 0.9);
        assert!((g.get(0, 0) - q.get(0, 0)).abs() <= 3f64.ln() / beta);
    }
}
