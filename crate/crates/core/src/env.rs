//! Seeded episodic simulators. Learners only see `reset`/`step`; the exact
//! model behind an environment is available through `export_mdp` for
//! oracles and metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{check_index, PathPrefix, StochasticPolicy, TabularMdp};

/// Outcome of a single environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next_state: usize,
    pub cost: f64,
    pub terminal: bool,
}

/// Episodic simulator with hidden costs and transitions.
pub trait Environment: Send {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;

    /// Starts a new episode; the seed fixes every random draw until the next
    /// reset.
    fn reset(&mut self, seed: u64) -> usize;

    fn step(&mut self, action: usize) -> Result<Step>;

    /// Exact model, for oracles and metrics only.
    fn export_mdp(&self) -> TabularMdp;

    fn is_terminal(&self, state: usize) -> bool;

    /// Replaces the continuous parameters of a parameterized environment.
    fn set_parameters(&mut self, _zeta: &[f64], _eta: &[f64]) -> Result<()> {
        Err(Error::Env("environment has no parameters".into()))
    }
}

/// How a [`TabularEnv`] picks the first state of an episode.
#[derive(Debug, Clone, PartialEq)]
pub enum StartDistribution {
    /// Uniform over non-terminal states.
    UniformNonTerminal,
    /// Uniform over the listed states.
    UniformOver(Vec<usize>),
    Fixed(usize),
}

/// Simulator backed by an explicit [`TabularMdp`].
///
/// Each step consumes exactly one uniform draw, which is mapped to the next
/// state by inverse CDF over the transition row. Two environments reset with
/// the same seed and driven by the same actions therefore see identical
/// randomness (common random numbers).
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMdp,
    start: StartDistribution,
    rng: ChaCha8Rng,
    state: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp) -> Self {
        Self::with_start(mdp, StartDistribution::UniformNonTerminal)
    }

    pub fn with_start(mdp: TabularMdp, start: StartDistribution) -> Self {
        Self {
            mdp,
            start,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: 0,
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Swaps the underlying model in place (used by parameterized envs).
    pub fn replace_mdp(&mut self, mdp: TabularMdp) {
        self.mdp = mdp;
    }

    /// Places the agent in `state` without touching the RNG.
    pub fn set_state(&mut self, state: usize) -> Result<()> {
        check_index("state", state, self.mdp.n_states())?;
        self.state = state;
        Ok(())
    }

    /// Steps with an externally supplied uniform draw in `[0, 1)`.
    pub fn step_with_draw(&mut self, action: usize, u: f64) -> Result<Step> {
        check_index("action", action, self.mdp.n_actions())?;
        let s = self.state;
        let succ = self.mdp.successors(s, action);
        let mut acc = 0.0;
        let mut next = *succ.last().ok_or_else(|| Error::Env(format!("empty row at ({s}, {action})")))?;
        for &s2 in succ {
            acc += self.mdp.p(s, action, s2);
            if u < acc {
                next = s2;
                break;
            }
        }
        let cost = self.mdp.c(s, action, next);
        self.state = next;
        Ok(Step {
            next_state: next,
            cost,
            terminal: self.mdp.is_terminal(next),
        })
    }

    /// The uniform draw the next `step` will use, consumed from the RNG.
    pub fn draw(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl Environment for TabularEnv {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset(&mut self, seed: u64) -> usize {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = match &self.start {
            StartDistribution::Fixed(s) => *s,
            StartDistribution::UniformOver(states) => states[self.rng.random_range(0..states.len())],
            StartDistribution::UniformNonTerminal => {
                let live: Vec<usize> = (0..self.mdp.n_states())
                    .filter(|&s| !self.mdp.is_terminal(s))
                    .collect();
                if live.is_empty() {
                    0
                } else {
                    live[self.rng.random_range(0..live.len())]
                }
            }
        };
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let u = self.draw();
        self.step_with_draw(action, u)
    }

    fn export_mdp(&self) -> TabularMdp {
        self.mdp.clone()
    }

    fn is_terminal(&self, state: usize) -> bool {
        self.mdp.is_terminal(state)
    }
}

/// A sampled episode: the visited path and the cost of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub path: PathPrefix,
    pub costs: Vec<f64>,
}

/// Samples `u ~ μ(·|x)` from a uniform draw by inverse CDF.
pub fn sample_action(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (a, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    // rounding left u above the accumulated mass; take the last positive entry
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Rolls out `policy` from a seeded reset until termination or `max_steps`.
///
/// Actions are drawn from a stream derived from `seed` that is separate from
/// the environment's own stream.
pub fn sample_episode(
    env: &mut dyn Environment,
    policy: &StochasticPolicy,
    seed: u64,
    max_steps: usize,
) -> Result<Episode> {
    let mut x = env.reset(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut path = PathPrefix::new(x);
    let mut costs = Vec::new();
    for _ in 0..max_steps {
        if env.is_terminal(x) {
            break;
        }
        let a = sample_action(policy.row(x), rng.random::<f64>());
        let st = env.step(a)?;
        path.steps.push((a, st.next_state));
        costs.push(st.cost);
        x = st.next_state;
    }
    Ok(Episode { path, costs })
}

/// Default truncation `min(10|S|/(1-γ), 10⁶)`; `γ = 1` uses the cap.
pub fn default_max_steps(n_states: usize, gamma: f64) -> usize {
    const CAP: f64 = 1e6;
    if gamma >= 1.0 {
        return CAP as usize;
    }
    (10.0 * n_states as f64 / (1.0 - gamma)).min(CAP).round() as usize
}
