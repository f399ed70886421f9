//! Finite MDPs with a cost-free absorbing termination state, stochastic
//! policies, and exact policy evaluation.
//!
//! All tensors are dense and indexed `[s][a][s']`. Each `(s, a)` pair also
//! carries the list of successors with positive probability so that the
//! Bellman sweeps only touch the support.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for transition and policy rows.
pub const ROW_TOL: f64 = 1e-12;

/// The `<S, A, c, p, γ>` tuple plus terminal flags.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    cost: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
    support: Vec<Vec<usize>>,
}

impl TabularMdp {
    /// Builds an MDP from dense `[s][a][s']` tensors.
    ///
    /// Only shapes are checked here; use [`validate_mdp`] for the semantic
    /// invariants.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        cost: Vec<f64>,
        gamma: f64,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension("need at least one state and one action".into()));
        }
        let len = n_states * n_actions * n_states;
        if transition.len() != len || cost.len() != len {
            return Err(Error::Dimension(format!(
                "expected tensors of length {len}, got transition={} cost={}",
                transition.len(),
                cost.len()
            )));
        }
        if terminal.len() != n_states {
            return Err(Error::Dimension(format!(
                "terminal flags: expected {n_states}, got {}",
                terminal.len()
            )));
        }
        let support = (0..n_states * n_actions)
            .map(|sa| {
                let row = &transition[sa * n_states..(sa + 1) * n_states];
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(s2, _)| s2)
                    .collect()
            })
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            transition,
            cost,
            gamma,
            terminal,
            support,
        })
    }

    /// Builds an MDP from sparse `(s, a, s', value)` triples. Unlisted
    /// entries are zero.
    pub fn from_triples(
        n_states: usize,
        n_actions: usize,
        transitions: &[(usize, usize, usize, f64)],
        costs: &[(usize, usize, usize, f64)],
        gamma: f64,
        terminal: &[usize],
    ) -> Result<Self> {
        let len = n_states * n_actions * n_states;
        let mut p = vec![0.0; len];
        let mut c = vec![0.0; len];
        let idx = |s: usize, a: usize, s2: usize| -> Result<usize> {
            check_index("state", s, n_states)?;
            check_index("action", a, n_actions)?;
            check_index("state", s2, n_states)?;
            Ok((s * n_actions + a) * n_states + s2)
        };
        for &(s, a, s2, v) in transitions {
            p[idx(s, a, s2)?] = v;
        }
        for &(s, a, s2, v) in costs {
            c[idx(s, a, s2)?] = v;
        }
        let mut flags = vec![false; n_states];
        for &t in terminal {
            check_index("state", t, n_states)?;
            flags[t] = true;
        }
        Self::new(n_states, n_actions, p, c, gamma, flags)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same model with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut m = self.clone();
        m.gamma = gamma;
        m
    }

    /// Same transitions and discount, new cost tensor.
    pub fn with_costs(&self, cost: Vec<f64>) -> Result<Self> {
        if cost.len() != self.cost.len() {
            return Err(Error::Dimension("cost tensor length".into()));
        }
        let mut m = self.clone();
        m.cost = cost;
        Ok(m)
    }

    #[inline]
    fn offset(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[self.offset(s, a) + s2]
    }

    #[inline]
    pub fn c(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.cost[self.offset(s, a) + s2]
    }

    /// Transition row `p(·|s,a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.transition[o..o + self.n_states]
    }

    /// Cost row `c(s,a,·)`.
    pub fn cost_row(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.cost[o..o + self.n_states]
    }

    /// Successors with positive probability.
    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> &[usize] {
        &self.support[s * self.n_actions + a]
    }

    #[inline]
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_flags(&self) -> &[bool] {
        &self.terminal
    }

    pub fn has_terminal(&self) -> bool {
        self.terminal.iter().any(|&t| t)
    }

    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }

    pub fn cost_tensor(&self) -> &[f64] {
        &self.cost
    }

    /// Expected one-step cost `Σ_{s'} p c`.
    pub fn expected_cost(&self, s: usize, a: usize) -> f64 {
        self.successors(s, a)
            .iter()
            .map(|&s2| self.p(s, a, s2) * self.c(s, a, s2))
            .sum()
    }

    /// Whether some deterministic policy reaches a terminal state from every
    /// state within `|S|` steps, by backward reachability over the support
    /// graph.
    pub fn proper_policy_exists(&self) -> bool {
        self.unreachable_states(|_, _| true).is_empty()
    }

    /// Whether termination is reachable from every state using only actions
    /// in the support of `policy`.
    pub fn policy_is_proper(&self, policy: &StochasticPolicy) -> bool {
        self.unreachable_states(|s, a| policy.prob(s, a) > 0.0).is_empty()
    }

    /// States from which no terminal state is reachable within `|S|` steps
    /// using actions accepted by `allowed`.
    pub fn unreachable_states(&self, allowed: impl Fn(usize, usize) -> bool) -> Vec<usize> {
        let mut good = self.terminal.clone();
        // one layer per sweep; |S| sweeps bound the path length by |S|
        for _ in 0..self.n_states {
            let mut changed = false;
            for s in 0..self.n_states {
                if good[s] {
                    continue;
                }
                let ok = (0..self.n_actions).any(|a| {
                    allowed(s, a) && self.successors(s, a).iter().any(|&s2| good[s2])
                });
                if ok {
                    good[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (0..self.n_states).filter(|&s| !good[s]).collect()
    }

    /// States reachable from `start` under any action (breadth first).
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n_states];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(s) = queue.pop_front() {
            for a in 0..self.n_actions {
                for &s2 in self.successors(s, a) {
                    if !seen[s2] {
                        seen[s2] = true;
                        queue.push_back(s2);
                    }
                }
            }
        }
        seen
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, len })
    }
}

/// A single broken invariant reported by [`validate_mdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    GammaOutOfRange(f64),
    ProbabilityOutOfRange { s: usize, a: usize, s2: usize, p: f64 },
    RowSum { s: usize, a: usize, sum: f64 },
    NonFiniteCost { s: usize, a: usize, s2: usize },
    TerminalNotAbsorbing { s: usize, a: usize },
    TerminalCost { s: usize, a: usize },
    NoTerminal,
    NoProperPolicy { stuck: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GammaOutOfRange(g) => write!(f, "gamma {g} outside (0, 1]"),
            Violation::ProbabilityOutOfRange { s, a, s2, p } => {
                write!(f, "p[{s}][{a}][{s2}] = {p} outside [0, 1]")
            }
            Violation::RowSum { s, a, sum } => write!(f, "row sum {sum} ≠ 1 at p[{s}][{a}]"),
            Violation::NonFiniteCost { s, a, s2 } => write!(f, "c[{s}][{a}][{s2}] is not finite"),
            Violation::TerminalNotAbsorbing { s, a } => {
                write!(f, "terminal state {s} is not absorbing under action {a}")
            }
            Violation::TerminalCost { s, a } => {
                write!(f, "terminal state {s} has nonzero self-cost under action {a}")
            }
            Violation::NoTerminal => write!(f, "gamma = 1 requires a terminal state"),
            Violation::NoProperPolicy { stuck } => {
                write!(f, "no proper policy (termination unreachable from {stuck:?})")
            }
        }
    }
}

/// Checks every structural invariant of a [`TabularMdp`]. An empty report
/// means the model is valid.
pub fn validate_mdp(mdp: &TabularMdp) -> Vec<Violation> {
    let mut report = Vec::new();
    if !(mdp.gamma > 0.0 && mdp.gamma <= 1.0) {
        report.push(Violation::GammaOutOfRange(mdp.gamma));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.row(s, a);
            let mut sum = 0.0;
            for (s2, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) || p.is_nan() {
                    report.push(Violation::ProbabilityOutOfRange { s, a, s2, p });
                }
                if !mdp.c(s, a, s2).is_finite() {
                    report.push(Violation::NonFiniteCost { s, a, s2 });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_TOL {
                report.push(Violation::RowSum { s, a, sum });
            }
            if mdp.terminal[s] {
                if (row[s] - 1.0).abs() > ROW_TOL {
                    report.push(Violation::TerminalNotAbsorbing { s, a });
                }
                if mdp.c(s, a, s) != 0.0 {
                    report.push(Violation::TerminalCost { s, a });
                }
            }
        }
    }
    if mdp.gamma == 1.0 {
        if !mdp.has_terminal() {
            report.push(Violation::NoTerminal);
        } else {
            let stuck = mdp.unreachable_states(|_, _| true);
            if !stuck.is_empty() {
                report.push(Violation::NoProperPolicy { stuck });
            }
        }
    }
    report
}

/// `μ(a|s)` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "policy: expected {} entries, got {}",
                n_states * n_actions,
                probs.len()
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p) || p.is_nan()) {
                return Err(Error::InvalidPolicy(format!("row {s} has entries outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Builds a policy without checking rows. Callers guarantee normalization.
    pub(crate) fn from_raw(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::from_raw(
            n_states,
            n_actions,
            vec![1.0 / n_actions as f64; n_states * n_actions],
        )
    }

    /// One action per state with probability 1.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            check_index("action", a, n_actions)?;
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self::from_raw(actions.len(), n_actions, probs))
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Membership in the strictly-positive policy set.
    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Most probable action in state `s`, lowest index on ties.
    pub fn mode(&self, s: usize) -> usize {
        argmax_first(self.row(s))
    }

    /// Largest entry of each row is at least `1 - tol`.
    pub fn is_hard(&self, tol: f64) -> bool {
        (0..self.n_states).all(|s| self.row(s).iter().copied().fold(0.0, f64::max) >= 1.0 - tol)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn argmin_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// State-action table indexed `[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "q table: expected {} entries, got {}",
                n_states * n_actions,
                values.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Sup distance restricted to non-terminal rows.
    pub fn sup_distance_on(&self, other: &Self, terminal: &[bool]) -> f64 {
        let mut d: f64 = 0.0;
        for s in (0..self.n_states).filter(|&s| !terminal[s]) {
            for a in 0..self.n_actions {
                d = d.max((self.get(s, a) - other.get(s, a)).abs());
            }
        }
        d
    }

    pub fn zero_rows(&mut self, terminal: &[bool]) {
        for (s, &t) in terminal.iter().enumerate() {
            if t {
                self.row_mut(s).fill(0.0);
            }
        }
    }

    /// Per-state minimum over actions.
    pub fn row_min(&self) -> ValueTable {
        ValueTable(
            (0..self.n_states)
                .map(|s| self.row(s).iter().copied().fold(f64::INFINITY, f64::min))
                .collect(),
        )
    }
}

/// State-indexed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ_s w_s v_s`.
    pub fn weighted_sum(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(v, w)| v * w).sum()
    }
}

impl std::ops::Index<usize> for ValueTable {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A finite prefix `x_0, (u_0, x_1), (u_1, x_2), ...` of a path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathPrefix {
    pub start_state: usize,
    pub steps: Vec<(usize, usize)>,
}

impl PathPrefix {
    pub fn new(start_state: usize) -> Self {
        Self {
            start_state,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Visited states including the start.
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.start_state).chain(self.steps.iter().map(|&(_, s)| s))
    }
}

/// `Π_t μ(u_t|x_t) p(x_{t+1}|x_t,u_t)` over the prefix.
pub fn path_probability(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    path: &PathPrefix,
) -> Result<f64> {
    check_index("state", path.start_state, mdp.n_states)?;
    let mut x = path.start_state;
    let mut prob = 1.0;
    for &(u, next) in &path.steps {
        check_index("action", u, mdp.n_actions)?;
        check_index("state", next, mdp.n_states)?;
        prob *= policy.prob(x, u) * mdp.p(x, u, next);
        x = next;
    }
    Ok(prob)
}

/// Solves `v(s) = Σ_a μ Σ_{s'} p [r(s,a,s') + discount·v(s')]` with `v = 0` on
/// terminal states. Terms with `μ = 0` or `p = 0` are skipped, so `r` may be
/// infinite there.
pub fn solve_policy_system(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    discount: f64,
    reward: impl Fn(usize, usize, usize) -> f64,
) -> Result<ValueTable> {
    let ns = mdp.n_states;
    if policy.n_states() != ns || policy.n_actions() != mdp.n_actions {
        return Err(Error::Dimension("policy shape does not match the MDP".into()));
    }
    if discount >= 1.0 {
        if let Some(&state) = mdp.unreachable_states(|s, a| policy.prob(s, a) > 0.0).first() {
            return Err(Error::ImproperPolicy { state });
        }
    }
    let live: Vec<usize> = (0..ns).filter(|&s| !mdp.terminal[s]).collect();
    let mut pos = vec![usize::MAX; ns];
    for (i, &s) in live.iter().enumerate() {
        pos[s] = i;
    }
    let n = live.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (i, &s) in live.iter().enumerate() {
        for a in 0..mdp.n_actions {
            let mu = policy.prob(s, a);
            if mu <= 0.0 {
                continue;
            }
            for &s2 in mdp.successors(s, a) {
                let w = mu * mdp.p(s, a, s2);
                b[i] += w * reward(s, a, s2);
                if !mdp.terminal[s2] {
                    m[(i, pos[s2])] -= discount * w;
                }
            }
        }
    }
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("policy evaluation right-hand side".into()));
    }
    let x = m.lu().solve(&b).ok_or(Error::Singular)?;
    let mut out = vec![0.0; ns];
    for (i, &s) in live.iter().enumerate() {
        out[s] = x[i];
    }
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("policy evaluation solution".into()));
    }
    Ok(ValueTable(out))
}

/// Expected discounted cost `J^μ` by a direct linear solve.
pub fn evaluate_value(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<ValueTable> {
    solve_policy_system(mdp, policy, mdp.gamma, |s, a, s2| mdp.c(s, a, s2))
}

/// Sup-norm residual of the policy-evaluation Bellman equation.
pub fn bellman_residual(mdp: &TabularMdp, policy: &StochasticPolicy, v: &ValueTable) -> f64 {
    let mut r: f64 = 0.0;
    for s in (0..mdp.n_states).filter(|&s| !mdp.terminal[s]) {
        let mut rhs = 0.0;
        for a in 0..mdp.n_actions {
            let mu = policy.prob(s, a);
            for &s2 in mdp.successors(s, a) {
                rhs += mu * mdp.p(s, a, s2) * (mdp.c(s, a, s2) + mdp.gamma * v[s2]);
            }
        }
        r = r.max((rhs - v[s]).abs());
    }
    r
}

/// Classical (hard-min) value iteration. Returns the optimal `Q`, its greedy
/// policy (lowest index on ties) and the iteration count.
pub fn value_iteration(
    mdp: &TabularMdp,
    tol: f64,
    max_iters: usize,
) -> Result<(QTable, StochasticPolicy, usize)> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut v = vec![0.0; ns];
    let mut q = QTable::zeros(ns, na);
    for it in 1..=max_iters {
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            if mdp.terminal[s] {
                continue;
            }
            for a in 0..na {
                let val: f64 = mdp
                    .successors(s, a)
                    .iter()
                    .map(|&s2| mdp.p(s, a, s2) * (mdp.c(s, a, s2) + mdp.gamma * v[s2]))
                    .sum();
                q.set(s, a, val);
            }
        }
        for s in 0..ns {
            if mdp.terminal[s] {
                continue;
            }
            let m = q.row(s).iter().copied().fold(f64::INFINITY, f64::min);
            delta = delta.max((m - v[s]).abs());
            v[s] = m;
        }
        if delta <= tol {
            let actions: Vec<usize> = (0..ns).map(|s| argmin_first(q.row(s))).collect();
            return Ok((q, StochasticPolicy::deterministic(&actions, na)?, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual: f64::NAN,
    })
}

/// Optimal cost-to-go `J*` via value iteration followed by an exact
/// evaluation of the greedy policy.
pub fn optimal_value(mdp: &TabularMdp) -> Result<(ValueTable, StochasticPolicy)> {
    let (_, policy, _) = value_iteration(mdp, 1e-12, 1_000_000)?;
    let j = evaluate_value(mdp, &policy)?;
    Ok((j, policy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exit_chain() -> TabularMdp {
        TabularMdp::from_triples(
            2,
            1,
            &[(0, 0, 1, 1.0), (1, 0, 1, 1.0)],
            &[(0, 0, 1, 1.0)],
            1.0,
            &[1],
        )
        .unwrap()
    }

    #[test]
    fn canonical_ssp_is_valid() {
        assert!(validate_mdp(&exit_chain()).is_empty());
    }

    #[test]
    fn short_row_is_reported() {
        let m = TabularMdp::from_triples(
            3,
            1,
            &[(0, 0, 0, 0.5), (0, 0, 1, 0.4), (1, 0, 2, 1.0), (2, 0, 2, 1.0)],
            &[],
            0.9,
            &[2],
        )
        .unwrap();
        let report = validate_mdp(&m);
        assert_eq!(report.len(), 1);
        match &report[0] {
            Violation::RowSum { s: 0, a: 0, sum } => assert!((sum - 0.9).abs() < 1e-12),
            v => panic!("unexpected {v:?}"),
        }
        assert!(report[0].to_string().starts_with("row sum 0.9"));
    }

    #[test]
    fn self_loop_without_exit_is_improper() {
        let m = TabularMdp::from_triples(
            2,
            1,
            &[(0, 0, 0, 1.0), (1, 0, 1, 1.0)],
            &[(0, 0, 0, 1.0)],
            1.0,
            &[1],
        )
        .unwrap();
        let report = validate_mdp(&m);
        assert!(matches!(&report[..], [Violation::NoProperPolicy { stuck }] if stuck == &vec![0]));
        assert!(report[0].to_string().contains("no proper policy"));
    }

    #[test]
    fn terminal_must_absorb_for_free() {
        let m = TabularMdp::from_triples(
            2,
            1,
            &[(0, 0, 1, 1.0), (1, 0, 0, 1.0)],
            &[(0, 0, 1, 1.0)],
            0.9,
            &[1],
        )
        .unwrap();
        let report = validate_mdp(&m);
        assert!(report.contains(&Violation::TerminalNotAbsorbing { s: 1, a: 0 }));
    }

    #[test]
    fn path_probability_examples() {
        let m = TabularMdp::from_triples(
            2,
            2,
            &[
                (0, 0, 1, 0.8),
                (0, 0, 0, 0.2),
                (0, 1, 1, 1.0),
                (1, 0, 1, 1.0),
                (1, 1, 1, 1.0),
            ],
            &[],
            0.9,
            &[1],
        )
        .unwrap();
        let half = StochasticPolicy::uniform(2, 2);
        let empty = PathPrefix::new(0);
        assert_eq!(path_probability(&m, &half, &empty).unwrap(), 1.0);
        let one = PathPrefix {
            start_state: 0,
            steps: vec![(0, 1)],
        };
        assert!((path_probability(&m, &half, &one).unwrap() - 0.4).abs() < 1e-15);
        let det = StochasticPolicy::deterministic(&[1, 0], 2).unwrap();
        let p = PathPrefix {
            start_state: 0,
            steps: vec![(1, 1), (0, 1)],
        };
        assert_eq!(path_probability(&m, &det, &p).unwrap(), 1.0);
        let bad = PathPrefix {
            start_state: 0,
            steps: vec![(2, 1)],
        };
        assert!(matches!(
            path_probability(&m, &half, &bad),
            Err(Error::IndexOutOfRange { what: "action", .. })
        ));
    }

    #[test]
    fn evaluate_value_examples() {
        let m = exit_chain();
        let pol = StochasticPolicy::uniform(2, 1);
        for g in [0.3, 0.9, 1.0] {
            let j = evaluate_value(&m.with_gamma(g), &pol).unwrap();
            assert!((j[0] - 1.0).abs() < 1e-14);
            assert_eq!(j[1], 0.0);
        }
        let loop_mdp = TabularMdp::from_triples(
            2,
            1,
            &[(0, 0, 0, 0.5), (0, 0, 1, 0.5), (1, 0, 1, 1.0)],
            &[(0, 0, 0, 1.0), (0, 0, 1, 1.0)],
            0.9,
            &[1],
        )
        .unwrap();
        let j = evaluate_value(&loop_mdp, &pol).unwrap();
        assert!((j[0] - 1.0 / 0.55).abs() < 1e-12);
        assert!(bellman_residual(&loop_mdp, &pol, &j) < 1e-12);
    }

    #[test]
    fn improper_policy_is_rejected() {
        let m = TabularMdp::from_triples(
            2,
            2,
            &[(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 0, 1, 1.0), (1, 1, 1, 1.0)],
            &[(0, 0, 0, 1.0), (0, 1, 1, 5.0)],
            1.0,
            &[1],
        )
        .unwrap();
        let stay = StochasticPolicy::deterministic(&[0, 0], 2).unwrap();
        assert_eq!(
            evaluate_value(&m, &stay),
            Err(Error::ImproperPolicy { state: 0 })
        );
        let (j, pol) = optimal_value(&m).unwrap();
        assert_eq!(pol.mode(0), 1);
        assert!((j[0] - 5.0).abs() < 1e-12);
    }
}
