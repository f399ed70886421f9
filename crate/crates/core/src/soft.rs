//! Model-based maximum-entropy planning: Gibbs policies, free energies, the
//! soft Bellman maps and their fixed points, path entropy, and the weighted
//! norm under which the soft maps contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{argmin_first, solve_policy_system, QTable, StochasticPolicy, TabularMdp, ValueTable};
use crate::numeric::{gibbs_weights, softmin};

/// Settings shared by the soft operators.
///
/// `gamma` here is authoritative; the discount stored in the MDP is ignored
/// by the soft machinery so one model can be planned at several discounts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftPlanConfig {
    pub beta: f64,
    pub gamma: f64,
    /// Entropy discount, used only by the infinite-entropy map.
    pub alpha: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SoftPlanConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            gamma: 1.0,
            alpha: 0.99,
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

impl SoftPlanConfig {
    pub fn new(beta: f64, gamma: f64) -> Self {
        Self {
            beta,
            gamma,
            ..Self::default()
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }

    /// Inverse temperature of the Gibbs policy: `β/γ` or `βα/γ`.
    pub fn kappa(&self, scaling: Scaling) -> f64 {
        match scaling {
            Scaling::Finite => self.beta / self.gamma,
            Scaling::Infinite => self.beta * self.alpha / self.gamma,
        }
    }
}

/// Which exponent the Gibbs policy and free energy use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    Finite,
    Infinite,
}

fn check_finite(q: &QTable) -> Result<()> {
    if q.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("state-action table".into()))
    }
}

/// Row-wise `μ(a|s) ∝ exp(-κ q(s,a))`.
pub fn gibbs_policy(q: &QTable, cfg: &SoftPlanConfig, scaling: Scaling) -> Result<StochasticPolicy> {
    check_finite(q)?;
    Ok(gibbs_with_kappa(q, cfg.kappa(scaling)))
}

pub(crate) fn gibbs_with_kappa(q: &QTable, kappa: f64) -> StochasticPolicy {
    let (ns, na) = (q.n_states(), q.n_actions());
    let mut probs = vec![0.0; ns * na];
    for s in 0..ns {
        gibbs_weights(q.row(s), kappa, &mut probs[s * na..(s + 1) * na]);
    }
    StochasticPolicy::from_raw(ns, na, probs)
}

/// `V(s) = -(1/κ) log Σ_a exp(-κ q(s,a))`, pinned to 0 on terminal states.
pub fn free_energy_from_q(
    q: &QTable,
    terminal: &[bool],
    cfg: &SoftPlanConfig,
    scaling: Scaling,
) -> Result<ValueTable> {
    check_finite(q)?;
    if terminal.len() != q.n_states() {
        return Err(Error::Dimension("terminal flags vs table rows".into()));
    }
    let kappa = cfg.kappa(scaling);
    Ok(ValueTable(
        (0..q.n_states())
            .map(|s| if terminal[s] { 0.0 } else { softmin(q.row(s), kappa) })
            .collect(),
    ))
}

/// Greedy policy of a table, lowest action index on ties.
pub fn harden(q: &QTable) -> StochasticPolicy {
    let actions: Vec<usize> = (0..q.n_states()).map(|s| argmin_first(q.row(s))).collect();
    StochasticPolicy::deterministic(&actions, q.n_actions()).expect("argmin is in range")
}

/// The three soft Bellman maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SoftOperator {
    /// Finite-entropy map including the `(γ/β) Σ p log p` term.
    T,
    /// Same map without the transition-entropy term; the learner's target.
    TBar,
    /// Discounted-entropy map with exponent `βα/γ`.
    TInfinite,
}

impl SoftOperator {
    pub fn scaling(self) -> Scaling {
        match self {
            SoftOperator::T | SoftOperator::TBar => Scaling::Finite,
            SoftOperator::TInfinite => Scaling::Infinite,
        }
    }

    /// Coefficient on `Σ p log p` in the one-step term.
    fn entropy_coef(self, cfg: &SoftPlanConfig) -> f64 {
        match self {
            SoftOperator::T => cfg.gamma / cfg.beta,
            SoftOperator::TBar => 0.0,
            SoftOperator::TInfinite => cfg.gamma / (cfg.alpha * cfg.beta),
        }
    }
}

/// A soft map specialized to one MDP: the one-step term
/// `Σ p (c + coef·log p)` is precomputed per `(s, a)`.
#[derive(Debug, Clone)]
pub struct CompiledOperator<'a> {
    mdp: &'a TabularMdp,
    forcing: Vec<f64>,
    coef: f64,
    gamma: f64,
    kappa: f64,
}

impl<'a> CompiledOperator<'a> {
    pub fn new(op: SoftOperator, mdp: &'a TabularMdp, cfg: &SoftPlanConfig) -> Result<Self> {
        cfg.validate()?;
        let coef = op.entropy_coef(cfg);
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let mut forcing = vec![0.0; ns * na];
        for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
            for a in 0..na {
                forcing[s * na + a] = mdp
                    .successors(s, a)
                    .iter()
                    .map(|&s2| {
                        let p = mdp.p(s, a, s2);
                        p * (mdp.c(s, a, s2) + coef * p.ln())
                    })
                    .sum();
            }
        }
        Ok(Self {
            mdp,
            forcing,
            coef,
            gamma: cfg.gamma,
            kappa: cfg.kappa(op.scaling()),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Free energy of `q` written into `v` (terminal entries 0).
    pub fn free_energy_into(&self, q: &QTable, v: &mut [f64]) {
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = if self.mdp.is_terminal(s) {
                0.0
            } else {
                softmin(q.row(s), self.kappa)
            };
        }
    }

    /// `out = T q`, using `v` as scratch for the free energy of `q`.
    pub fn apply_into(&self, q: &QTable, out: &mut QTable, v: &mut [f64]) {
        self.free_energy_into(q, v);
        self.backup_into(v, out);
    }

    /// `out(s,a) = Σ p (c + coef·log p) + γ Σ p v(s')`.
    fn backup_into(&self, v: &[f64], out: &mut QTable) {
        let (ns, na) = (self.mdp.n_states(), self.mdp.n_actions());
        for s in 0..ns {
            if self.mdp.is_terminal(s) {
                out.row_mut(s).fill(0.0);
                continue;
            }
            for a in 0..na {
                let boot: f64 = self
                    .mdp
                    .successors(s, a)
                    .iter()
                    .map(|&s2| self.mdp.p(s, a, s2) * v[s2])
                    .sum();
                out.set(s, a, self.forcing[s * na + a] + self.gamma * boot);
            }
        }
    }

    pub fn apply(&self, q: &QTable) -> QTable {
        let mut out = QTable::zeros(q.n_states(), q.n_actions());
        let mut v = vec![0.0; q.n_states()];
        self.apply_into(q, &mut out, &mut v);
        out
    }
}

fn apply_checked(op: SoftOperator, q: &QTable, mdp: &TabularMdp, cfg: &SoftPlanConfig) -> Result<QTable> {
    check_shape(q, mdp)?;
    check_finite(q)?;
    Ok(CompiledOperator::new(op, mdp, cfg)?.apply(q))
}

fn check_shape(q: &QTable, mdp: &TabularMdp) -> Result<()> {
    if q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension("table shape does not match the MDP".into()));
    }
    Ok(())
}

/// One application of the finite-entropy map.
pub fn bellman_t(q: &QTable, mdp: &TabularMdp, cfg: &SoftPlanConfig) -> Result<QTable> {
    apply_checked(SoftOperator::T, q, mdp, cfg)
}

/// One application of the map without the transition-entropy term.
pub fn bellman_t_bar(q: &QTable, mdp: &TabularMdp, cfg: &SoftPlanConfig) -> Result<QTable> {
    apply_checked(SoftOperator::TBar, q, mdp, cfg)
}

/// One application of the discounted-entropy map.
pub fn bellman_t_infinite(q: &QTable, mdp: &TabularMdp, cfg: &SoftPlanConfig) -> Result<QTable> {
    apply_checked(SoftOperator::TInfinite, q, mdp, cfg)
}

/// Fixed point of a soft map together with its policy and free energy.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSolution {
    pub q: QTable,
    pub policy: StochasticPolicy,
    pub value: ValueTable,
    pub iterations: usize,
}

impl SoftSolution {
    /// Greedy version of the fixed-point policy.
    pub fn hardened(&self) -> StochasticPolicy {
        harden(&self.q)
    }
}

/// Iterates `op` from `Q ≡ 0` until the sup-norm change is at most `cfg.tol`.
pub fn solve_fixed_point(op: SoftOperator, mdp: &TabularMdp, cfg: &SoftPlanConfig) -> Result<SoftSolution> {
    solve_fixed_point_from(op, mdp, cfg, QTable::zeros(mdp.n_states(), mdp.n_actions()))
}

/// Same as [`solve_fixed_point`] from a caller-supplied starting table.
pub fn solve_fixed_point_from(
    op: SoftOperator,
    mdp: &TabularMdp,
    cfg: &SoftPlanConfig,
    init: QTable,
) -> Result<SoftSolution> {
    check_shape(&init, mdp)?;
    check_finite(&init)?;
    let compiled = CompiledOperator::new(op, mdp, cfg)?;
    let mut q = init;
    q.zero_rows(mdp.terminal_flags());
    let mut next = q.clone();
    let mut v = vec![0.0; mdp.n_states()];
    let mut change = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        compiled.apply_into(&q, &mut next, &mut v);
        change = next.sup_distance(&q);
        std::mem::swap(&mut q, &mut next);
        if !change.is_finite() {
            break;
        }
        if change <= cfg.tol {
            compiled.free_energy_into(&q, &mut v);
            return Ok(SoftSolution {
                policy: gibbs_with_kappa(&q, compiled.kappa),
                value: ValueTable(v),
                q,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iters,
        residual: change,
    })
}

/// Same fixed point as [`solve_fixed_point_from`], reached by soft policy
/// iteration: the Gibbs policy of the current table is evaluated exactly
/// (free energy including its entropy terms) and the table is rebuilt from
/// that value. From a nearby start this settles in a few linear solves and
/// to near machine precision. Falls back to plain iteration when a round
/// fails (an improper Gibbs policy at γ = 1) or after 50 rounds.
pub fn solve_fixed_point_newton(
    op: SoftOperator,
    mdp: &TabularMdp,
    cfg: &SoftPlanConfig,
    init: QTable,
) -> Result<SoftSolution> {
    check_shape(&init, mdp)?;
    check_finite(&init)?;
    let compiled = CompiledOperator::new(op, mdp, cfg)?;
    let mut q = init.clone();
    q.zero_rows(mdp.terminal_flags());
    let mut next = q.clone();
    let mut v = vec![0.0; mdp.n_states()];
    for it in 1..=50 {
        let policy = gibbs_with_kappa(&q, compiled.kappa);
        let inv_kappa = 1.0 / compiled.kappa;
        let eval = solve_policy_system(mdp, &policy, cfg.gamma, |s, a, s2| {
            let p = mdp.p(s, a, s2);
            mdp.c(s, a, s2) + compiled.coef * p.ln() + inv_kappa * policy.prob(s, a).ln()
        });
        let Ok(value) = eval else { break };
        compiled.backup_into(&value.0, &mut next);
        if !next.is_finite() {
            break;
        }
        let change = next.sup_distance(&q);
        std::mem::swap(&mut q, &mut next);
        let scale = q.as_slice().iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if change <= cfg.tol.max(1e-13 * scale) {
            compiled.free_energy_into(&q, &mut v);
            return Ok(SoftSolution {
                policy: gibbs_with_kappa(&q, compiled.kappa),
                value: ValueTable(v),
                q,
                iterations: it,
            });
        }
    }
    solve_fixed_point_from(op, mdp, cfg, init)
}

/// Which path-entropy recursion to solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntropyMode {
    /// `H(s) = Σ μ p [-log p - log μ + H(s')]`; needs a proper policy.
    Finite,
    /// Same recursion with `α H(s')`.
    Discounted(f64),
}

/// Shannon entropy of the path distribution from each state.
pub fn path_entropy(mdp: &TabularMdp, policy: &StochasticPolicy, mode: EntropyMode) -> Result<ValueTable> {
    let discount = match mode {
        EntropyMode::Finite => 1.0,
        EntropyMode::Discounted(alpha) => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            alpha
        }
    };
    // μ = 0 and p = 0 terms are skipped by the solver, matching 0·log 0 = 0
    solve_policy_system(mdp, policy, discount, |s, a, s2| {
        -mdp.p(s, a, s2).ln() - policy.prob(s, a).ln()
    })
}

/// Weights under which the soft maps contract with modulus `γλ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiWeights {
    pub xi: Vec<f64>,
    pub lambda: f64,
}

impl XiWeights {
    /// `max_{s,a} |q(s,a)| / ξ_s` over non-terminal states.
    pub fn weighted_norm(&self, q: &QTable, terminal: &[bool]) -> f64 {
        let mut n: f64 = 0.0;
        for s in (0..q.n_states()).filter(|&s| !terminal[s]) {
            for &x in q.row(s) {
                n = n.max(x.abs() / self.xi[s]);
            }
        }
        n
    }

    /// Largest value of `Σ_{s'} p ξ_{s'} - λ ξ_s` over non-terminal `(s, a)`;
    /// non-positive when the weights are valid.
    pub fn max_violation(&self, mdp: &TabularMdp) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for s in (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)) {
            for a in 0..mdp.n_actions() {
                let lhs: f64 = mdp
                    .successors(s, a)
                    .iter()
                    .map(|&s2| mdp.p(s, a, s2) * self.xi[s2])
                    .sum();
                worst = worst.max(lhs - self.lambda * self.xi[s]);
            }
        }
        worst
    }
}

/// Builds the auxiliary model with cost `-1 - ln(|A||S|)/β` on every
/// non-terminal transition, solves its free energy, and returns
/// `ξ = -V`, `λ = max (ξ-1)/ξ`.
///
/// The auxiliary problem is solved undiscounted: the bound
/// `Σ p ξ ≤ ξ_s - 1` follows from its fixed point only when `γ = 1`. It is
/// finite only if every policy terminates, otherwise the negative costs
/// accumulate without bound and the solve reports non-convergence.
pub fn xi_weights(mdp: &TabularMdp, cfg: &SoftPlanConfig) -> Result<XiWeights> {
    cfg.validate()?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let aux_cost = -1.0 - ((na * ns) as f64).ln() / cfg.beta;
    let mut cost = vec![0.0; ns * na * ns];
    for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..na {
            for &s2 in mdp.successors(s, a) {
                cost[(s * na + a) * ns + s2] = aux_cost;
            }
        }
    }
    let aux = mdp.with_costs(cost)?.with_gamma(1.0);
    let aux_cfg = SoftPlanConfig {
        gamma: 1.0,
        ..*cfg
    };
    let sol = solve_fixed_point(SoftOperator::T, &aux, &aux_cfg)?;
    let xi: Vec<f64> = sol.value.0.iter().map(|v| -v).collect();
    let mut lambda: f64 = 0.0;
    for s in (0..ns).filter(|&s| !mdp.is_terminal(s)) {
        if xi[s] < 1.0 - 1e-9 {
            return Err(Error::NonFinite(format!("weight {} below 1 at state {s}", xi[s])));
        }
        lambda = lambda.max((xi[s] - 1.0) / xi[s]);
    }
    if !(lambda < 1.0) {
        return Err(Error::NonFinite(format!("contraction modulus {lambda} not below 1")));
    }
    Ok(XiWeights { xi, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exit_once() -> TabularMdp {
        TabularMdp::from_triples(2, 1, &[(0, 0, 1, 1.0), (1, 0, 1, 1.0)], &[(0, 0, 1, 1.0)], 1.0, &[1]).unwrap()
    }

    fn half_loop() -> TabularMdp {
        TabularMdp::from_triples(
            2,
            1,
            &[(0, 0, 0, 0.5), (0, 0, 1, 0.5), (1, 0, 1, 1.0)],
            &[(0, 0, 0, 1.0), (0, 0, 1, 1.0)],
            0.9,
            &[1],
        )
        .unwrap()
    }

    #[test]
    fn gibbs_examples() {
        let cfg = SoftPlanConfig::new(1.0, 1.0);
        let q = QTable::from_vec(1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        let p = gibbs_policy(&q, &cfg, Scaling::Finite).unwrap();
        for a in 0..3 {
            assert_abs_diff_eq!(p.prob(0, a), 1.0 / 3.0, epsilon = 1e-15);
        }
        let q = QTable::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let p = gibbs_policy(&q, &cfg, Scaling::Finite).unwrap();
        assert_abs_diff_eq!(p.prob(0, 0), 0.731059, epsilon = 1e-6);
        assert_abs_diff_eq!(p.prob(0, 1), 0.268941, epsilon = 1e-6);
        let q = QTable::from_vec(1, 1, vec![42.0]).unwrap();
        assert_eq!(gibbs_policy(&q, &cfg, Scaling::Finite).unwrap().prob(0, 0), 1.0);
        let bad = QTable::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(gibbs_policy(&bad, &cfg, Scaling::Finite).is_err());
    }

    #[test]
    fn free_energy_examples() {
        let cfg = SoftPlanConfig::new(1.0, 1.0);
        let q = QTable::from_vec(2, 2, vec![0.0, 0.0, 7.0, 9.0]).unwrap();
        let v = free_energy_from_q(&q, &[false, true], &cfg, Scaling::Finite).unwrap();
        assert_abs_diff_eq!(v[0], -std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(v[1], 0.0);
        let q = QTable::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let v = free_energy_from_q(&q, &[false], &SoftPlanConfig::new(1e6, 1.0), Scaling::Finite).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn t_fixed_points() {
        let cfg = SoftPlanConfig::new(10.0, 1.0);
        let sol = solve_fixed_point(SoftOperator::T, &exit_once(), &cfg).unwrap();
        assert_abs_diff_eq!(sol.q.get(0, 0), 1.0, epsilon = 1e-10);
        assert_eq!(sol.q.get(1, 0), 0.0);

        let cfg = SoftPlanConfig::new(10.0, 0.9);
        let sol = solve_fixed_point(SoftOperator::T, &half_loop(), &cfg).unwrap();
        assert_abs_diff_eq!(sol.q.get(0, 0), (1.0 + 0.09 * 0.5f64.ln()) / 0.55, epsilon = 1e-9);
        let sol = solve_fixed_point(SoftOperator::TBar, &half_loop(), &cfg).unwrap();
        assert_abs_diff_eq!(sol.q.get(0, 0), 1.0 / 0.55, epsilon = 1e-9);
    }

    #[test]
    fn infinite_self_loop_is_geometric() {
        let m = TabularMdp::from_triples(1, 1, &[(0, 0, 0, 1.0)], &[(0, 0, 0, 1.0)], 0.9, &[]).unwrap();
        for (alpha, beta) in [(0.5, 0.1), (0.99, 100.0)] {
            let cfg = SoftPlanConfig::new(beta, 0.9).with_alpha(alpha);
            let sol = solve_fixed_point(SoftOperator::TInfinite, &m, &cfg).unwrap();
            assert_abs_diff_eq!(sol.q.get(0, 0), 10.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn infinite_single_application_by_hand() {
        // two states swapping with probability 0.7, staying with 0.3
        let (g, a, b) = (0.9, 0.8, 2.0);
        let m = TabularMdp::from_triples(
            2,
            2,
            &[
                (0, 0, 1, 0.7),
                (0, 0, 0, 0.3),
                (0, 1, 1, 0.7),
                (0, 1, 0, 0.3),
                (1, 0, 0, 0.7),
                (1, 0, 1, 0.3),
                (1, 1, 0, 0.7),
                (1, 1, 1, 0.3),
            ],
            &[(0, 0, 1, 1.0), (0, 0, 0, 1.0), (1, 0, 0, 1.0), (1, 0, 1, 1.0)],
            g,
            &[],
        )
        .unwrap();
        let cfg = SoftPlanConfig::new(b, g).with_alpha(a);
        let out = bellman_t_infinite(&QTable::zeros(2, 2), &m, &cfg).unwrap();
        let plogp = 0.7 * 0.7f64.ln() + 0.3 * 0.3f64.ln();
        let expect_common = g / (a * b) * plogp - g * g / (a * b) * 2f64.ln();
        assert_abs_diff_eq!(out.get(0, 0), 1.0 + expect_common, epsilon = 1e-14);
        assert_abs_diff_eq!(out.get(0, 1), expect_common, epsilon = 1e-14);
    }

    #[test]
    fn tiny_beta_is_uniform() {
        let cfg = SoftPlanConfig::new(1e-4, 0.9);
        let m = TabularMdp::from_triples(
            2,
            2,
            &[(0, 0, 1, 1.0), (0, 1, 1, 1.0), (1, 0, 1, 1.0), (1, 1, 1, 1.0)],
            &[(0, 0, 1, 1.0), (0, 1, 1, 1.01)],
            0.9,
            &[1],
        )
        .unwrap();
        let sol = solve_fixed_point(SoftOperator::T, &m, &cfg).unwrap();
        assert!((sol.policy.prob(0, 0) - 0.5).abs() < 1e-6);
        assert_eq!(sol.hardened().mode(0), 0);
    }

    #[test]
    fn entropy_examples() {
        let m = TabularMdp::from_triples(
            2,
            2,
            &[(0, 0, 1, 1.0), (0, 1, 1, 1.0), (1, 0, 1, 1.0), (1, 1, 1, 1.0)],
            &[],
            1.0,
            &[1],
        )
        .unwrap();
        let h = path_entropy(&m, &StochasticPolicy::uniform(2, 2), EntropyMode::Finite).unwrap();
        assert_abs_diff_eq!(h[0], std::f64::consts::LN_2, epsilon = 1e-12);
        let det = StochasticPolicy::deterministic(&[1, 0], 2).unwrap();
        let h = path_entropy(&m, &det, EntropyMode::Finite).unwrap();
        assert_eq!(h.0, vec![0.0, 0.0]);
    }

    #[test]
    fn xi_single_exit() {
        let beta = 3.0;
        let w = xi_weights(&exit_once(), &SoftPlanConfig::new(beta, 1.0)).unwrap();
        let xi = 1.0 + 2f64.ln() / beta;
        assert_abs_diff_eq!(w.xi[0], xi, epsilon = 1e-9);
        assert_eq!(w.xi[1], 0.0);
        assert_abs_diff_eq!(w.lambda, (xi - 1.0) / xi, epsilon = 1e-9);
        assert!(w.max_violation(&exit_once()) <= 1e-12);
    }

    #[test]
    fn newton_agrees_with_iteration() {
        let m = TabularMdp::from_triples(
            3,
            2,
            &[
                (0, 0, 1, 0.6),
                (0, 0, 0, 0.4),
                (0, 1, 2, 0.5),
                (0, 1, 1, 0.5),
                (1, 0, 2, 0.9),
                (1, 0, 0, 0.1),
                (1, 1, 1, 1.0),
                (2, 0, 2, 1.0),
                (2, 1, 2, 1.0),
            ],
            &[(0, 0, 1, 1.0), (0, 1, 2, 3.0), (1, 0, 2, 2.0), (1, 1, 1, 0.5)],
            1.0,
            &[2],
        )
        .unwrap();
        for op in [SoftOperator::T, SoftOperator::TBar] {
            let cfg = SoftPlanConfig::new(2.0, 0.95);
            let a = solve_fixed_point(op, &m, &cfg).unwrap();
            let b = solve_fixed_point_newton(op, &m, &cfg, QTable::zeros(3, 2)).unwrap();
            assert!(a.q.sup_distance(&b.q) < 1e-8, "{op:?}");
            assert!(b.iterations < a.iterations);
        }
    }
}
