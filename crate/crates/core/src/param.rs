//! Parameterized MDPs: costs that depend on continuous state parameters `ζ`
//! and action parameters `η`, exact gradients of the free energy with respect
//! to them, and the annealed joint optimization of parameters and policy.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{evaluate_value, QTable, StochasticPolicy, TabularMdp, ValueTable};
use crate::soft::{harden, solve_fixed_point_newton, SoftOperator, SoftPlanConfig, SoftSolution};

/// `n` points of dimension `dim`, stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl ParamBlock {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 && !values.is_empty() || dim > 0 && values.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} values do not split into points of dimension {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; n * dim],
        }
    }

    pub fn empty() -> Self {
        Self { dim: 0, values: Vec::new() }
    }

    pub fn n_points(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// State (`ζ`) or action (`η`) parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Zeta,
    Eta,
}

/// One scalar parameter: component `component` of the point attached to
/// state or action `entity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub kind: ParamKind,
    pub entity: usize,
    pub component: usize,
}

impl Coord {
    pub fn zeta(entity: usize, component: usize) -> Self {
        Self {
            kind: ParamKind::Zeta,
            entity,
            component,
        }
    }

    pub fn eta(entity: usize, component: usize) -> Self {
        Self {
            kind: ParamKind::Eta,
            entity,
            component,
        }
    }
}

/// Differentiable cost `c(s, a, s'; ζ, η)`.
pub trait CostModel: Send + Sync + fmt::Debug {
    fn cost(&self, s: usize, a: usize, s2: usize, zeta: &ParamBlock, eta: &ParamBlock) -> f64;
    /// Partial derivative with respect to one scalar parameter.
    fn grad(&self, s: usize, a: usize, s2: usize, zeta: &ParamBlock, eta: &ParamBlock, coord: Coord) -> f64;
}

/// `‖ζ_s - ζ_{s'}‖² + w·‖η_a - ζ_{s'}‖²`; with `w = 0` this is the
/// squared distance between the locations of consecutive states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquaredEuclidean {
    pub action_weight: f64,
}

impl SquaredEuclidean {
    pub fn states_only() -> Self {
        Self { action_weight: 0.0 }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl CostModel for SquaredEuclidean {
    fn cost(&self, s: usize, a: usize, s2: usize, zeta: &ParamBlock, eta: &ParamBlock) -> f64 {
        let mut c = sq_dist(zeta.point(s), zeta.point(s2));
        if self.action_weight != 0.0 {
            c += self.action_weight * sq_dist(eta.point(a), zeta.point(s2));
        }
        c
    }

    fn grad(&self, s: usize, a: usize, s2: usize, zeta: &ParamBlock, eta: &ParamBlock, coord: Coord) -> f64 {
        let k = coord.component;
        match coord.kind {
            ParamKind::Zeta => {
                let diff = zeta.point(s)[k] - zeta.point(s2)[k];
                let mut g = 0.0;
                if coord.entity == s {
                    g += 2.0 * diff;
                }
                if coord.entity == s2 {
                    g -= 2.0 * diff;
                    if self.action_weight != 0.0 {
                        g -= 2.0 * self.action_weight * (eta.point(a)[k] - zeta.point(s2)[k]);
                    }
                }
                g
            }
            ParamKind::Eta => {
                if self.action_weight != 0.0 && coord.entity == a {
                    2.0 * self.action_weight * (eta.point(a)[k] - zeta.point(s2)[k])
                } else {
                    0.0
                }
            }
        }
    }
}

/// A [`TabularMdp`] whose costs come from a [`CostModel`] evaluated at the
/// current parameters. Transitions do not depend on the parameters.
#[derive(Clone)]
pub struct ParameterizedMdp {
    base: TabularMdp,
    pub zeta: ParamBlock,
    pub eta: ParamBlock,
    cost: Arc<dyn CostModel>,
    /// Which state points are decision variables.
    pub free_zeta: Vec<bool>,
    /// Which action points are decision variables.
    pub free_eta: Vec<bool>,
    /// Objective weights `w_s` in `Σ_s w_s V(s)`.
    pub weights: Vec<f64>,
}

impl fmt::Debug for ParameterizedMdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParameterizedMdp")
            .field("n_states", &self.base.n_states())
            .field("n_actions", &self.base.n_actions())
            .field("zeta", &self.zeta)
            .field("eta", &self.eta)
            .field("cost", &self.cost)
            .finish()
    }
}

impl ParameterizedMdp {
    /// `base` supplies transitions, discount and terminal flags; its costs are
    /// ignored. All parameters start fixed and all non-terminal states carry
    /// weight 1.
    pub fn new(base: TabularMdp, zeta: ParamBlock, eta: ParamBlock, cost: Arc<dyn CostModel>) -> Result<Self> {
        let (ns, na) = (base.n_states(), base.n_actions());
        if zeta.n_points() != ns {
            return Err(Error::Dimension(format!("expected {ns} state points, got {}", zeta.n_points())));
        }
        if eta.dim > 0 && eta.n_points() != na {
            return Err(Error::Dimension(format!("expected {na} action points, got {}", eta.n_points())));
        }
        let weights = (0..ns).map(|s| if base.is_terminal(s) { 0.0 } else { 1.0 }).collect();
        Ok(Self {
            free_zeta: vec![false; ns],
            free_eta: vec![false; if eta.dim > 0 { na } else { 0 }],
            base,
            zeta,
            eta,
            cost,
            weights,
        })
    }

    pub fn base(&self) -> &TabularMdp {
        &self.base
    }

    pub fn gamma(&self) -> f64 {
        self.base.gamma()
    }

    pub fn cost_model(&self) -> &Arc<dyn CostModel> {
        &self.cost
    }

    pub fn n_states(&self) -> usize {
        self.base.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.base.n_actions()
    }

    pub fn get(&self, c: Coord) -> f64 {
        match c.kind {
            ParamKind::Zeta => self.zeta.point(c.entity)[c.component],
            ParamKind::Eta => self.eta.point(c.entity)[c.component],
        }
    }

    pub fn set(&mut self, c: Coord, v: f64) {
        match c.kind {
            ParamKind::Zeta => self.zeta.point_mut(c.entity)[c.component] = v,
            ParamKind::Eta => self.eta.point_mut(c.entity)[c.component] = v,
        }
    }

    /// Scalar coordinates of every free point, `ζ` first.
    pub fn free_coords(&self) -> Vec<Coord> {
        let mut out = Vec::new();
        for (e, _) in self.free_zeta.iter().enumerate().filter(|(_, &f)| f) {
            out.extend((0..self.zeta.dim).map(|k| Coord::zeta(e, k)));
        }
        for (e, _) in self.free_eta.iter().enumerate().filter(|(_, &f)| f) {
            out.extend((0..self.eta.dim).map(|k| Coord::eta(e, k)));
        }
        out
    }

    /// Every `ζ` coordinate of state `s`.
    pub fn state_coords(&self, s: usize) -> Vec<Coord> {
        (0..self.zeta.dim).map(|k| Coord::zeta(s, k)).collect()
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.free_coords().iter().map(|&c| self.get(c)).collect()
    }

    /// Tabular model at the current parameters. Terminal rows stay cost-free.
    pub fn realize(&self) -> TabularMdp {
        let (ns, na) = (self.n_states(), self.n_actions());
        let mut cost = vec![0.0; ns * na * ns];
        for s in (0..ns).filter(|&s| !self.base.is_terminal(s)) {
            for a in 0..na {
                for &s2 in self.base.successors(s, a) {
                    cost[(s * na + a) * ns + s2] = self.cost.cost(s, a, s2, &self.zeta, &self.eta);
                }
            }
        }
        self.base.with_costs(cost).expect("cost tensor has the base shape")
    }

    /// `F(s,a) = Σ_{s'} p ∂c/∂θ` for one coordinate.
    pub fn cost_derivative_table(&self, coord: Coord) -> QTable {
        let (ns, na) = (self.n_states(), self.n_actions());
        let mut f = QTable::zeros(ns, na);
        for s in (0..ns).filter(|&s| !self.base.is_terminal(s)) {
            for a in 0..na {
                let v = self
                    .base
                    .successors(s, a)
                    .iter()
                    .map(|&s2| self.base.p(s, a, s2) * self.cost.grad(s, a, s2, &self.zeta, &self.eta, coord))
                    .sum();
                f.set(s, a, v);
            }
        }
        f
    }

    /// `Σ_s w_s v(s)`.
    pub fn weighted_total(&self, v: &ValueTable) -> f64 {
        v.weighted_sum(&self.weights)
    }

    /// `Σ_s w_s J(s)` of a policy at the current parameters.
    pub fn total_cost(&self, policy: &StochasticPolicy) -> Result<f64> {
        Ok(self.weighted_total(&evaluate_value(&self.realize(), policy)?))
    }
}

fn policy_mix(k: &QTable, policy: &StochasticPolicy, mdp: &TabularMdp) -> Vec<f64> {
    (0..k.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0.0
            } else {
                k.row(s).iter().zip(policy.row(s)).map(|(x, m)| x * m).sum()
            }
        })
        .collect()
}

/// One application of the gradient map
/// `K(s,a) ← Σ_{s'} p [∂c/∂θ + γ Σ_{a'} μ(a'|s') K(s',a')]` for a state
/// parameter.
pub fn t1_apply(k: &QTable, pm: &ParameterizedMdp, coord: Coord, policy: &StochasticPolicy) -> Result<QTable> {
    if coord.kind != ParamKind::Zeta {
        return Err(Error::InvalidConfig("t1_apply takes a state parameter".into()));
    }
    gradient_map(k, pm, &pm.cost_derivative_table(coord), policy)
}

/// Same map for an action parameter.
pub fn t2_apply(l: &QTable, pm: &ParameterizedMdp, coord: Coord, policy: &StochasticPolicy) -> Result<QTable> {
    if coord.kind != ParamKind::Eta {
        return Err(Error::InvalidConfig("t2_apply takes an action parameter".into()));
    }
    gradient_map(l, pm, &pm.cost_derivative_table(coord), policy)
}

/// The gradient map with a precomputed forcing table.
pub fn gradient_map(k: &QTable, pm: &ParameterizedMdp, forcing: &QTable, policy: &StochasticPolicy) -> Result<QTable> {
    if !forcing.is_finite() {
        return Err(Error::NonFinite("cost derivative".into()));
    }
    let mdp = pm.base();
    let g = policy_mix(k, policy, mdp);
    let mut out = QTable::zeros(k.n_states(), k.n_actions());
    for s in (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..mdp.n_actions() {
            let boot: f64 = mdp.successors(s, a).iter().map(|&s2| mdp.p(s, a, s2) * g[s2]).sum();
            out.set(s, a, forcing.get(s, a) + pm.gamma() * boot);
        }
    }
    Ok(out)
}

/// Fixed points of the gradient maps for a set of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTables {
    pub coords: Vec<Coord>,
    /// `K(s,a) = ∂Λ(s,a)/∂θ` per coordinate.
    pub k: Vec<QTable>,
    /// `G(s) = ∂V(s)/∂θ = Σ_a μ K(s,a)` per coordinate.
    pub g: Vec<ValueTable>,
}

impl GradientTables {
    /// `Σ_s w_s G_θ(s)` per coordinate: the objective gradient.
    pub fn objective_gradient(&self, weights: &[f64]) -> Vec<f64> {
        self.g.iter().map(|g| g.weighted_sum(weights)).collect()
    }
}

/// Solves `K = T₁K` (and `L = T₂L`) for each coordinate under a fixed policy.
///
/// The fixed point is linear in `K`, so `G` is obtained from one LU
/// factorization of `I - γ P_μ` and `K` is assembled from `G`.
pub fn solve_gradients(pm: &ParameterizedMdp, policy: &StochasticPolicy, coords: &[Coord]) -> Result<GradientTables> {
    let mdp = pm.base();
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = pm.gamma();
    let live: Vec<usize> = (0..ns).filter(|&s| !mdp.is_terminal(s)).collect();
    let mut pos = vec![usize::MAX; ns];
    for (i, &s) in live.iter().enumerate() {
        pos[s] = i;
    }
    let n = live.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, &s) in live.iter().enumerate() {
        for a in 0..na {
            let mu = policy.prob(s, a);
            for &s2 in mdp.successors(s, a) {
                if !mdp.is_terminal(s2) {
                    m[(i, pos[s2])] -= gamma * mu * mdp.p(s, a, s2);
                }
            }
        }
    }
    let lu = m.lu();
    let mut ks = Vec::with_capacity(coords.len());
    let mut gs = Vec::with_capacity(coords.len());
    for &coord in coords {
        let f = pm.cost_derivative_table(coord);
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("cost derivative for {coord:?}")));
        }
        let b = DVector::from_iterator(n, live.iter().map(|&s| f.row(s).iter().zip(policy.row(s)).map(|(x, m)| x * m).sum()));
        let x = lu.solve(&b).ok_or(Error::Singular)?;
        let mut g = vec![0.0; ns];
        for (i, &s) in live.iter().enumerate() {
            g[s] = x[i];
        }
        let mut k = f;
        for &s in &live {
            for a in 0..na {
                let boot: f64 = mdp.successors(s, a).iter().map(|&s2| mdp.p(s, a, s2) * g[s2]).sum();
                k.set(s, a, k.get(s, a) + gamma * boot);
            }
        }
        ks.push(k);
        gs.push(ValueTable(g));
    }
    Ok(GradientTables {
        coords: coords.to_vec(),
        k: ks,
        g: gs,
    })
}

/// Descent step sizes and stopping rules of the annealed solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    pub beta_min: f64,
    /// Upper cap on β; the loop usually stops earlier once the policy hardens.
    pub beta_max: f64,
    pub tau: f64,
    pub step_zeta: f64,
    pub step_eta: f64,
    pub grad_tol: f64,
    /// Tolerance of the inner soft fixed point.
    pub inner_tol: f64,
    pub max_inner: usize,
    pub max_halvings: usize,
    /// A policy counts as hard once every row has an entry ≥ 1 - hard_tol.
    pub hard_tol: f64,
    pub max_fixed_point_iters: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            beta_min: 1e-4,
            beta_max: 1e8,
            tau: 1.02,
            step_zeta: 1e-2,
            step_eta: 1e-2,
            grad_tol: 1e-6,
            inner_tol: 1e-9,
            max_inner: 100,
            max_halvings: 50,
            hard_tol: 1e-6,
            max_fixed_point_iters: 100_000,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_min < self.beta_max) {
            return Err(Error::InvalidConfig("need 0 < beta_min < beta_max".into()));
        }
        if !(self.tau > 1.0) {
            return Err(Error::InvalidConfig(format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.step_zeta > 0.0 && self.step_eta > 0.0) {
            return Err(Error::InvalidConfig("step sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Every non-terminal row of `policy` puts at least `1 - tol` on the actions
/// that tie for the minimum of `q`. Exactly tied actions (for example two
/// actions with identical outcomes) share the Gibbs mass forever, so they
/// count as one.
pub fn policy_is_hard(policy: &StochasticPolicy, q: &QTable, mdp: &TabularMdp, tol: f64) -> bool {
    (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)).all(|s| {
        let row = q.row(s);
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        let band = 1e-12 * (1.0 + best.abs());
        let mass: f64 = row
            .iter()
            .zip(policy.row(s))
            .filter(|(x, _)| **x <= best + band)
            .map(|(_, m)| m)
            .sum();
        mass >= 1.0 - tol
    })
}

/// Per-β record of the annealed solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub beta: f64,
    /// `Σ_s w_s V*_β(s)`.
    pub free_energy: f64,
    /// `Σ_s w_s J(s)` under the hardened policy.
    pub cost: f64,
    pub inner_iterations: usize,
    pub params: Vec<f64>,
}

/// Result of an annealed (or fixed-β) run.
#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    pub zeta: ParamBlock,
    pub eta: ParamBlock,
    /// Greedy policy of the final soft fixed point.
    pub policy: StochasticPolicy,
    pub soft_policy: StochasticPolicy,
    pub q: QTable,
    pub final_beta: f64,
    /// `Σ_s w_s J(s)` of `policy` at the final parameters.
    pub total_cost: f64,
    pub trace: Vec<TraceRow>,
}

struct Level {
    sol: SoftSolution,
    objective: f64,
}

fn solve_level(pm: &ParameterizedMdp, beta: f64, warm: &QTable, cfg: &AnnealConfig) -> Result<Level> {
    let mdp = pm.realize();
    let soft = SoftPlanConfig {
        beta,
        gamma: pm.gamma(),
        alpha: 0.5,
        tol: cfg.inner_tol,
        max_iters: cfg.max_fixed_point_iters,
    };
    let sol = solve_fixed_point_newton(SoftOperator::T, &mdp, &soft, warm.clone())
        .map_err(|e| Error::AnnealFailure { beta, source: Box::new(e) })?;
    let objective = pm.weighted_total(&sol.value);
    Ok(Level { sol, objective })
}

fn step_for(coord: Coord, cfg: &AnnealConfig) -> f64 {
    match coord.kind {
        ParamKind::Zeta => cfg.step_zeta,
        ParamKind::Eta => cfg.step_eta,
    }
}

/// `θ⁺ = θ - step · Σ_{s'} w G_θ(s')` for every free coordinate.
/// Returns the new values and the gradient norm.
pub fn parameter_step(pm: &ParameterizedMdp, grads: &GradientTables, cfg: &AnnealConfig, scale: f64) -> (Vec<f64>, f64) {
    let total = grads.objective_gradient(&pm.weights);
    let norm = total.iter().map(|g| g * g).sum::<f64>().sqrt();
    let next = grads
        .coords
        .iter()
        .zip(&total)
        .map(|(&c, g)| pm.get(c) - scale * step_for(c, cfg) * g)
        .collect();
    (next, norm)
}

fn set_all(pm: &mut ParameterizedMdp, coords: &[Coord], values: &[f64]) {
    for (&c, &v) in coords.iter().zip(values) {
        pm.set(c, v);
    }
}

/// Gradient descent at one β with halving on objective increase. Returns the
/// converged level and the number of accepted steps.
fn descend(pm: &mut ParameterizedMdp, beta: f64, warm: QTable, cfg: &AnnealConfig, max_inner: usize) -> Result<(Level, usize)> {
    let coords = pm.free_coords();
    let mut level = solve_level(pm, beta, &warm, cfg)?;
    let mut accepted = 0;
    for _ in 0..max_inner {
        if coords.is_empty() {
            break;
        }
        let grads = solve_gradients(pm, &level.sol.policy, &coords)?;
        let current = pm.free_values();
        let (_, norm) = parameter_step(pm, &grads, cfg, 1.0);
        if norm < cfg.grad_tol {
            break;
        }
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..=cfg.max_halvings {
            set_all(pm, &coords, &current);
            let (trial, _) = parameter_step(pm, &grads, cfg, scale);
            set_all(pm, &coords, &trial);
            let cand = solve_level(pm, beta, &level.sol.q, cfg)?;
            if cand.objective <= level.objective {
                level = cand;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            set_all(pm, &coords, &current);
            break;
        }
        accepted += 1;
    }
    Ok((level, accepted))
}

fn outcome(pm: &ParameterizedMdp, level: Level, beta: f64, trace: Vec<TraceRow>) -> Result<AnnealOutcome> {
    let policy = harden(&level.sol.q);
    let total_cost = pm.total_cost(&policy)?;
    Ok(AnnealOutcome {
        zeta: pm.zeta.clone(),
        eta: pm.eta.clone(),
        policy,
        soft_policy: level.sol.policy,
        q: level.sol.q,
        final_beta: beta,
        total_cost,
        trace,
    })
}

fn trace_row(pm: &ParameterizedMdp, level: &Level, beta: f64, inner: usize) -> Result<TraceRow> {
    Ok(TraceRow {
        beta,
        free_energy: level.objective,
        cost: pm.total_cost(&harden(&level.sol.q))?,
        inner_iterations: inner,
        params: pm.free_values(),
    })
}

/// Annealed joint optimization: at each β descend on the free parameters to
/// convergence, then raise β geometrically until the policy is hard or
/// `beta_max` is reached.
pub fn run_algorithm2(pm: &ParameterizedMdp, cfg: &AnnealConfig) -> Result<AnnealOutcome> {
    cfg.validate()?;
    let mut pm = pm.clone();
    let mut q = QTable::zeros(pm.n_states(), pm.n_actions());
    let mut beta = cfg.beta_min;
    let mut trace = Vec::new();
    loop {
        let (level, inner) = descend(&mut pm, beta, q, cfg, cfg.max_inner)?;
        trace.push(trace_row(&pm, &level, beta, inner)?);
        let hard = policy_is_hard(&level.sol.policy, &level.sol.q, pm.base(), cfg.hard_tol);
        if hard || beta * cfg.tau > cfg.beta_max {
            return outcome(&pm, level, beta, trace);
        }
        q = level.sol.q;
        beta *= cfg.tau;
    }
}

/// The same descent run at a single β without annealing.
pub fn run_fixed_beta(pm: &ParameterizedMdp, cfg: &AnnealConfig, beta: f64, max_inner: usize) -> Result<AnnealOutcome> {
    let mut pm = pm.clone();
    let q = QTable::zeros(pm.n_states(), pm.n_actions());
    let (level, inner) = descend(&mut pm, beta, q, cfg, max_inner)?;
    let trace = vec![trace_row(&pm, &level, beta, inner)?];
    outcome(&pm, level, beta, trace)
}

/// Sensitivity class of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensitivity {
    Low,
    Medium,
    High,
}

/// Magnitude of the objective gradient with respect to one state's point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSensitivity {
    pub state: usize,
    pub magnitude: f64,
    pub class: Sensitivity,
}

/// Ranks `states` by `‖Σ_{s'} w ∂V(s')/∂ζ_s‖` under `policy` and splits
/// them into terciles. Exactly-zero magnitudes are always `Low`.
pub fn sensitivity_rank(pm: &ParameterizedMdp, policy: &StochasticPolicy, states: &[usize]) -> Result<Vec<StateSensitivity>> {
    let mut out = Vec::with_capacity(states.len());
    for &s in states {
        let coords = pm.state_coords(s);
        let grads = solve_gradients(pm, policy, &coords)?;
        let m = grads
            .objective_gradient(&pm.weights)
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        out.push(StateSensitivity {
            state: s,
            magnitude: m,
            class: Sensitivity::Low,
        });
    }
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&i, &j| out[i].magnitude.total_cmp(&out[j].magnitude));
    let n = out.len();
    for (rank, &i) in order.iter().enumerate() {
        out[i].class = if out[i].magnitude == 0.0 || rank * 3 < n {
            Sensitivity::Low
        } else if rank * 3 < 2 * n {
            Sensitivity::Medium
        } else {
            Sensitivity::High
        };
    }
    Ok(out)
}
