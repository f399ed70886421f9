//! Model-free maximum-entropy learning: the stochastic soft update, visit
//! count learning rates, β schedules, and the episode loop shared with the
//! baseline learners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{default_max_steps, sample_action, Environment};
use crate::error::{Error, Result};
use crate::mdp::{optimal_value, solve_policy_system, QTable, StochasticPolicy, TabularMdp, ValueTable};
use crate::metrics::{compute_delta_v, MetricRow, MetricSeries};
use crate::numeric::{gibbs_weights, softmin};
use crate::soft::{gibbs_with_kappa, harden, path_entropy, EntropyMode};

/// How β evolves over episodes (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `β = σ · episode`.
    Linear { sigma: f64 },
    Constant { beta: f64 },
}

impl BetaSchedule {
    pub fn beta(&self, episode: usize) -> f64 {
        match *self {
            BetaSchedule::Linear { sigma } => sigma * episode as f64,
            BetaSchedule::Constant { beta } => beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            BetaSchedule::Linear { sigma } => sigma,
            BetaSchedule::Constant { beta } => beta,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("beta schedule needs a positive rate, got {v}")))
        }
    }
}

/// Finite path entropy, or the α-discounted variant for models without a
/// terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyVariant {
    Finite,
    Infinite { alpha: f64 },
}

impl EntropyVariant {
    /// Multiplier applied to `β/γ` in the Gibbs exponent.
    pub fn kappa_factor(&self) -> f64 {
        match *self {
            EntropyVariant::Finite => 1.0,
            EntropyVariant::Infinite { alpha } => alpha,
        }
    }
}

impl Default for EntropyVariant {
    fn default() -> Self {
        EntropyVariant::Finite
    }
}

/// Settings of a model-free learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub episodes: usize,
    pub schedule: BetaSchedule,
    pub gamma: f64,
    pub lr_omega: f64,
    pub seed: u64,
    /// Per-episode step cap; `None` uses [`default_max_steps`].
    pub max_steps: Option<usize>,
    /// Stops the run once this many steps have been taken in total.
    pub step_budget: Option<usize>,
    pub variant: EntropyVariant,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            schedule: BetaSchedule::Linear { sigma: 0.01 },
            gamma: 0.8,
            lr_omega: 0.8,
            seed: 0,
            max_steps: None,
            step_budget: None,
            variant: EntropyVariant::Finite,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.lr_omega > 0.5 && self.lr_omega <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lr_omega must lie in (0.5, 1], got {}",
                self.lr_omega
            )));
        }
        if let EntropyVariant::Infinite { alpha } = self.variant {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
            }
        }
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be positive".into()));
        }
        Ok(())
    }

    pub fn max_steps_for(&self, n_states: usize) -> usize {
        self.max_steps.unwrap_or_else(|| default_max_steps(n_states, self.gamma))
    }
}

/// Per-`(s, a)` visit counters.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitCounts {
    n_actions: usize,
    counts: Vec<u64>,
}

impl VisitCounts {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            counts: vec![0; n_states * n_actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.n_actions + a]
    }

    pub fn increment(&mut self, s: usize, a: usize) {
        self.counts[s * self.n_actions + a] += 1;
    }

    pub fn reset(&mut self) {
        self.counts.fill(0);
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `1 / (1 + n(s,a))^ω`.
pub fn learning_rate(counts: &VisitCounts, s: usize, a: usize, lr_omega: f64) -> f64 {
    (1.0 + counts.get(s, a) as f64).powf(-lr_omega)
}

/// One observed step `(x_t, u_t, c_t, x_{t+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub cost: f64,
    pub next_state: usize,
    pub next_terminal: bool,
}

/// `Ψ(x,u) ← (1-ν)Ψ(x,u) + ν[c + γ·softmin_κ Ψ(x',·)]` with `κ = β/γ`
/// (times α for the infinite variant). Terminal successors bootstrap 0.
pub fn mep_q_update(
    psi: &mut QTable,
    tr: &Transition,
    nu: f64,
    beta: f64,
    gamma: f64,
    variant: EntropyVariant,
) -> Result<()> {
    let boot = if tr.next_terminal {
        0.0
    } else {
        softmin(psi.row(tr.next_state), beta * variant.kappa_factor() / gamma)
    };
    let target = tr.cost + gamma * boot;
    if !target.is_finite() {
        return Err(Error::NonFinite(format!(
            "soft target at ({}, {}) with beta={beta}",
            tr.state, tr.action
        )));
    }
    let old = psi.get(tr.state, tr.action);
    psi.set(tr.state, tr.action, (1.0 - nu) * old + nu * target);
    Ok(())
}

/// A tabular learner driven by [`run_learner`].
pub trait TabularAgent {
    fn name(&self) -> &'static str;
    /// Called before each episode (1-based).
    fn begin_episode(&mut self, episode: usize);
    /// Current β, or NaN for learners without one.
    fn beta(&self) -> f64;
    fn act(&mut self, state: usize, rng: &mut ChaCha8Rng) -> usize;
    fn observe(&mut self, tr: &Transition, rng: &mut ChaCha8Rng) -> Result<()>;
    /// The learner's own estimate of the state values.
    fn value_estimate(&self, terminal: &[bool]) -> ValueTable;
    /// Policy the learner would deploy: greedy in its estimate.
    fn greedy_policy(&self) -> StochasticPolicy;
    /// Exploration policy used for acting.
    fn behavior_policy(&self) -> StochasticPolicy;
}

/// The maximum-entropy learner: Gibbs exploration and the soft update.
#[derive(Debug, Clone)]
pub struct MepAgent {
    pub psi: QTable,
    pub counts: VisitCounts,
    schedule: BetaSchedule,
    gamma: f64,
    lr_omega: f64,
    variant: EntropyVariant,
    beta: f64,
    scratch: Vec<f64>,
}

impl MepAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: &LearnConfig) -> Self {
        Self {
            psi: QTable::zeros(n_states, n_actions),
            counts: VisitCounts::new(n_states, n_actions),
            schedule: cfg.schedule,
            gamma: cfg.gamma,
            lr_omega: cfg.lr_omega,
            variant: cfg.variant,
            beta: cfg.schedule.beta(1),
            scratch: vec![0.0; n_actions],
        }
    }

    /// Replaces the value table.
    pub fn with_psi(mut self, psi: QTable) -> Self {
        self.psi = psi;
        self
    }

    pub fn kappa(&self) -> f64 {
        self.beta * self.variant.kappa_factor() / self.gamma
    }

    pub fn set_schedule(&mut self, schedule: BetaSchedule) {
        self.schedule = schedule;
    }
}

impl TabularAgent for MepAgent {
    fn name(&self) -> &'static str {
        "mep"
    }

    fn begin_episode(&mut self, episode: usize) {
        self.beta = self.schedule.beta(episode);
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn act(&mut self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        gibbs_weights(self.psi.row(state), self.kappa(), &mut self.scratch);
        sample_action(&self.scratch, rng.random::<f64>())
    }

    fn observe(&mut self, tr: &Transition, _rng: &mut ChaCha8Rng) -> Result<()> {
        let nu = learning_rate(&self.counts, tr.state, tr.action, self.lr_omega);
        mep_q_update(&mut self.psi, tr, nu, self.beta, self.gamma, self.variant)?;
        self.counts.increment(tr.state, tr.action);
        Ok(())
    }

    fn value_estimate(&self, terminal: &[bool]) -> ValueTable {
        let k = self.kappa();
        ValueTable(
            (0..self.psi.n_states())
                .map(|s| if terminal[s] { 0.0 } else { softmin(self.psi.row(s), k) })
                .collect(),
        )
    }

    fn greedy_policy(&self) -> StochasticPolicy {
        harden(&self.psi)
    }

    fn behavior_policy(&self) -> StochasticPolicy {
        gibbs_with_kappa(&self.psi, self.kappa())
    }
}

/// What the per-episode error compares against `J*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Exact value of the greedy policy of the current estimate.
    GreedyPolicyValue,
    /// The learner's own value estimate.
    Estimate,
}

/// Ground truth for per-episode metrics.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub mdp: TabularMdp,
    pub j_star: ValueTable,
    pub mode: EvalMode,
    pub entropy: EntropyMode,
}

impl Evaluator {
    /// Computes `J*` for the model at discount `gamma`.
    pub fn new(mdp: &TabularMdp, gamma: f64, mode: EvalMode) -> Result<Self> {
        let mdp = mdp.with_gamma(gamma);
        let (j_star, _) = optimal_value(&mdp)?;
        let entropy = if mdp.has_terminal() && mdp.proper_policy_exists() {
            EntropyMode::Finite
        } else {
            EntropyMode::Discounted(gamma.min(0.99))
        };
        Ok(Self {
            mdp,
            j_star,
            mode,
            entropy,
        })
    }

    /// Relative error in percent for the agent's current state.
    pub fn delta_v_pct(&self, agent: &dyn TabularAgent) -> f64 {
        let v = match self.mode {
            EvalMode::Estimate => agent.value_estimate(self.mdp.terminal_flags()),
            EvalMode::GreedyPolicyValue => {
                let pol = agent.greedy_policy();
                match solve_policy_system(&self.mdp, &pol, self.mdp.gamma(), |s, a, s2| self.mdp.c(s, a, s2)) {
                    Ok(v) => v,
                    Err(_) => return f64::INFINITY,
                }
            }
        };
        compute_delta_v(&[v], &self.j_star, self.mdp.terminal_flags())
            .map(|d| 100.0 * d)
            .unwrap_or(f64::INFINITY)
    }

    /// Mean path entropy of the behavior policy over non-terminal states.
    pub fn policy_entropy(&self, agent: &dyn TabularAgent) -> f64 {
        let pol = agent.behavior_policy();
        let h = path_entropy(&self.mdp, &pol, self.entropy)
            .or_else(|_| path_entropy(&self.mdp, &pol, EntropyMode::Discounted(0.99)));
        match h {
            Ok(h) => {
                let live: Vec<f64> = (0..h.len())
                    .filter(|&s| !self.mdp.is_terminal(s))
                    .map(|s| h[s])
                    .collect();
                if live.is_empty() {
                    0.0
                } else {
                    live.iter().sum::<f64>() / live.len() as f64
                }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Runs episodes of `agent` against `env`.
///
/// Episode seeds come from a ChaCha8 stream keyed by `cfg.seed`; action
/// draws use a separate stream, so runs are reproducible bit for bit.
pub fn run_learner(
    env: &mut dyn Environment,
    agent: &mut dyn TabularAgent,
    cfg: &LearnConfig,
    evaluator: Option<&Evaluator>,
    run: usize,
) -> Result<MetricSeries> {
    cfg.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(7);
    let max_steps = cfg.max_steps_for(env.n_states());
    let mut series = MetricSeries::new();
    let mut total = 0usize;
    for episode in 1..=cfg.episodes {
        agent.begin_episode(episode);
        let mut x = env.reset(seeds.random::<u64>());
        let mut steps = 0;
        while steps < max_steps && !env.is_terminal(x) {
            if cfg.step_budget.is_some_and(|b| total >= b) {
                break;
            }
            let a = agent.act(x, &mut rng);
            let st = env.step(a)?;
            let tr = Transition {
                state: x,
                action: a,
                cost: st.cost,
                next_state: st.next_state,
                next_terminal: st.terminal,
            };
            agent.observe(&tr, &mut rng)?;
            x = st.next_state;
            steps += 1;
            total += 1;
        }
        let (dv, ent) = match evaluator {
            Some(ev) => (ev.delta_v_pct(agent), ev.policy_entropy(agent)),
            None => (f64::NAN, f64::NAN),
        };
        series.push(MetricRow {
            run,
            episode,
            beta: agent.beta(),
            delta_v_pct: dv,
            policy_entropy: ent,
            steps,
        });
        if cfg.step_budget.is_some_and(|b| total >= b) {
            break;
        }
    }
    Ok(series)
}

/// Result of a maximum-entropy learning run.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub psi: QTable,
    pub policy: StochasticPolicy,
    pub series: MetricSeries,
}

/// Episode loop of the maximum-entropy learner from a zero table.
pub fn run_algorithm1(
    env: &mut dyn Environment,
    cfg: &LearnConfig,
    evaluator: Option<&Evaluator>,
) -> Result<LearnOutcome> {
    let mut agent = MepAgent::new(env.n_states(), env.n_actions(), cfg);
    let series = run_learner(env, &mut agent, cfg, evaluator, 0)?;
    Ok(LearnOutcome {
        policy: agent.behavior_policy(),
        psi: agent.psi,
        series,
    })
}
