//! Python bindings for `mep_core`.
//!
//! Specs and configs cross the boundary as JSON strings so that the Python
//! side uses the same field names as the TOML files.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mep_core::bench::{run_bench as core_run_bench, sequential_baseline, ExperimentConfig, LearnAlgo};
use mep_core::config::MdpFile;
use mep_core::env::TabularEnv;
use mep_core::envs::doublechain::{build_doublechain, DoubleChainSpec};
use mep_core::envs::gridworld::{build_gridworld, GridworldSpec};
use mep_core::envs::smallcell::{self as sc, SmallCellSpec, TransitionMode};
use mep_core::learn::{run_learner, BetaSchedule, EvalMode, Evaluator, LearnConfig};
use mep_core::mdp::{self, QTable, StochasticPolicy, TabularMdp};
use mep_core::metrics::compute_epr;
use mep_core::param::{run_algorithm2, AnnealConfig, AnnealOutcome, TraceRow};
use mep_core::param_rl::{run_algorithm3, ParamLearnConfig};
use mep_core::soft::{self, EntropyMode, SoftOperator, SoftPlanConfig};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<T: serde::de::DeserializeOwned + Default>(s: Option<&str>) -> PyResult<T> {
    s.map_or_else(|| Ok(T::default()), |s| serde_json::from_str(s).map_err(err))
}

fn q_rows(q: &QTable) -> Vec<Vec<f64>> {
    (0..q.n_states()).map(|s| q.row(s).to_vec()).collect()
}

fn policy_rows(p: &StochasticPolicy) -> Vec<Vec<f64>> {
    (0..p.n_states()).map(|s| p.row(s).to_vec()).collect()
}

fn policy_from_rows(rows: Vec<Vec<f64>>) -> PyResult<StochasticPolicy> {
    let na = rows.first().map_or(0, Vec::len);
    StochasticPolicy::new(rows.len(), na, rows.concat()).map_err(err)
}

fn parse_operator(name: &str) -> PyResult<SoftOperator> {
    match name {
        "t" => Ok(SoftOperator::T),
        "t_bar" => Ok(SoftOperator::TBar),
        "t_inf" => Ok(SoftOperator::TInfinite),
        other => Err(PyValueError::new_err(format!("unknown operator {other:?}; use t, t_bar or t_inf"))),
    }
}

/// Finite MDP with dense `[s][a][s']` transition and cost tensors.
#[pyclass(name = "Mdp", module = "mep")]
#[derive(Clone)]
struct PyMdp {
    inner: TabularMdp,
}

#[pymethods]
impl PyMdp {
    #[new]
    #[pyo3(signature = (transitions, costs, gamma, terminal))]
    fn new(transitions: Vec<Vec<Vec<f64>>>, costs: Vec<Vec<Vec<f64>>>, gamma: f64, terminal: Vec<bool>) -> PyResult<Self> {
        let ns = transitions.len();
        let na = transitions.first().map_or(0, Vec::len);
        let p: Vec<f64> = transitions.into_iter().flatten().flatten().collect();
        let c: Vec<f64> = costs.into_iter().flatten().flatten().collect();
        let inner = TabularMdp::new(ns, na, p, c, gamma, terminal).map_err(err)?;
        Ok(Self { inner })
    }

    /// Gridworld from an optional JSON spec.
    #[staticmethod]
    #[pyo3(signature = (spec=None))]
    fn gridworld(spec: Option<&str>) -> PyResult<Self> {
        let spec: GridworldSpec = from_json(spec)?;
        Ok(Self {
            inner: build_gridworld(&spec).map_err(err)?.mdp().clone(),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (spec=None))]
    fn double_chain(spec: Option<&str>) -> PyResult<Self> {
        let spec: DoubleChainSpec = from_json(spec)?;
        Ok(Self {
            inner: build_doublechain(&spec).map_err(err)?,
        })
    }

    /// Parses an MDP file in the transition-row TOML format.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let file = MdpFile::from_toml(text).map_err(err)?;
        Ok(Self {
            inner: file.to_mdp().map_err(err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        MdpFile::from_mdp(&self.inner).to_toml().map_err(err)
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn terminal(&self) -> Vec<bool> {
        self.inner.terminal_flags().to_vec()
    }

    fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            inner: self.inner.with_gamma(gamma),
        }
    }

    /// Descriptions of every structural problem; empty when the model is valid.
    fn validate(&self) -> Vec<String> {
        mdp::validate_mdp(&self.inner).iter().map(ToString::to_string).collect()
    }

    /// Optimal costs-to-go and a greedy optimal action per state.
    fn optimal_value(&self) -> PyResult<(Vec<f64>, Vec<usize>)> {
        let (v, p) = mdp::optimal_value(&self.inner).map_err(err)?;
        Ok((v.0, (0..p.n_states()).map(|s| p.mode(s)).collect()))
    }

    /// Exact value of a stochastic policy given as `[s][a]` rows.
    fn evaluate(&self, policy: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let p = policy_from_rows(policy)?;
        Ok(mdp::evaluate_value(&self.inner, &p).map_err(err)?.0)
    }

    /// Soft fixed point of `operator` (`t`, `t_bar` or `t_inf`).
    #[pyo3(signature = (beta, operator="t", gamma=None, alpha=0.5, tol=1e-10))]
    fn solve(&self, beta: f64, operator: &str, gamma: Option<f64>, alpha: f64, tol: f64) -> PyResult<SoftSolution> {
        let op = parse_operator(operator)?;
        let cfg = SoftPlanConfig::new(beta, gamma.unwrap_or(self.inner.gamma()))
            .with_alpha(alpha)
            .with_tol(tol);
        let sol = soft::solve_fixed_point(op, &self.inner, &cfg).map_err(err)?;
        Ok(SoftSolution {
            q: q_rows(&sol.q),
            policy: policy_rows(&sol.policy),
            value: sol.value.0,
            iterations: sol.iterations,
        })
    }

    /// Path entropy of a policy; discounted by `discount` when given.
    #[pyo3(signature = (policy, discount=None))]
    fn path_entropy(&self, policy: Vec<Vec<f64>>, discount: Option<f64>) -> PyResult<Vec<f64>> {
        let p = policy_from_rows(policy)?;
        let mode = discount.map_or(EntropyMode::Finite, EntropyMode::Discounted);
        Ok(soft::path_entropy(&self.inner, &p, mode).map_err(err)?.0)
    }

    /// Runs one tabular learner on a simulator of this model and returns its
    /// relative-error curve, the settling fraction and the learned table.
    #[pyo3(signature = (algorithm="mep", episodes=500, sigma=0.01, seed=0, epsilon=0.1))]
    fn learn<'py>(
        &self,
        py: Python<'py>,
        algorithm: &str,
        episodes: usize,
        sigma: f64,
        seed: u64,
        epsilon: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let algo = LearnAlgo::parse(algorithm).map_err(err)?;
        let cfg = LearnConfig {
            episodes,
            schedule: BetaSchedule::Linear { sigma },
            gamma: self.inner.gamma(),
            seed,
            ..LearnConfig::default()
        };
        let evaluator = Evaluator::new(&self.inner, cfg.gamma, EvalMode::GreedyPolicyValue).map_err(err)?;
        let mut agent = algo.build_agent(self.inner.n_states(), self.inner.n_actions(), &cfg, epsilon);
        let mut env = TabularEnv::new(self.inner.clone());
        let series = py
            .detach(|| run_learner(&mut env, agent.as_mut(), &cfg, Some(&evaluator), 0))
            .map_err(err)?;
        let dv = series.delta_v();
        let d = PyDict::new(py);
        d.set_item("epr", compute_epr(&dv, 0.05).map_err(err)?)?;
        d.set_item("delta_v_pct", dv)?;
        d.set_item("policy", policy_rows(&agent.greedy_policy()))?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mdp(n_states={}, n_actions={}, gamma={})",
            self.inner.n_states(),
            self.inner.n_actions(),
            self.inner.gamma()
        )
    }
}

#[pyclass(module = "mep", get_all)]
struct SoftSolution {
    q: Vec<Vec<f64>>,
    policy: Vec<Vec<f64>>,
    value: Vec<f64>,
    iterations: usize,
}

/// Facility placement and routing result.
#[pyclass(module = "mep", get_all)]
struct Placement {
    total_cost: f64,
    final_beta: f64,
    facilities: Vec<Vec<f64>>,
    /// Next hop per state under the final routing.
    routes: Vec<usize>,
    /// `(beta, free_energy, cost)` per annealing level.
    trace: Vec<(f64, f64, f64)>,
}

fn trace_tuples(trace: &[TraceRow]) -> Vec<(f64, f64, f64)> {
    trace.iter().map(|r| (r.beta, r.free_energy, r.cost)).collect()
}

fn placement_from(spec: &SmallCellSpec, out: &AnnealOutcome) -> Placement {
    Placement {
        total_cost: out.total_cost,
        final_beta: out.final_beta,
        facilities: (0..spec.n_facilities).map(|j| out.zeta.point(spec.facility_state(j)).to_vec()).collect(),
        routes: (0..out.policy.n_states()).map(|s| out.policy.mode(s)).collect(),
        trace: trace_tuples(&out.trace),
    }
}

/// Small-cell network instance: users, candidate facilities and a base
/// station.
#[pyclass(name = "SmallCell", module = "mep")]
#[derive(Clone)]
struct PySmallCell {
    spec: SmallCellSpec,
}

#[pymethods]
impl PySmallCell {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec: SmallCellSpec = serde_json::from_str(spec_json).map_err(err)?;
        sc::build_smallcell(&spec).map_err(err)?;
        Ok(Self { spec })
    }

    /// Seeded preset instance: 46 users and 5 facilities, or 200 and 10
    /// with `large`.
    #[staticmethod]
    #[pyo3(signature = (seed, large=false, p_intended=None))]
    fn preset(seed: u64, large: bool, p_intended: Option<f64>) -> Self {
        let mut spec = if large { sc::preset_large(seed) } else { sc::preset_small(seed) };
        if let Some(p) = p_intended {
            spec.mode = TransitionMode::Probabilistic { p_intended: p };
        }
        Self { spec }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(err)
    }

    #[getter]
    fn users(&self) -> Vec<Vec<f64>> {
        self.spec.users.clone()
    }

    #[getter]
    fn base_station(&self) -> Vec<f64> {
        self.spec.base_station.clone()
    }

    /// Exact routing MDP at the starting facility locations.
    fn mdp(&self) -> PyResult<PyMdp> {
        Ok(PyMdp {
            inner: sc::build_smallcell(&self.spec).map_err(err)?.model.realize(),
        })
    }

    /// Annealed model-based placement and routing. `config` is a JSON
    /// annealing config.
    #[pyo3(signature = (config=None))]
    fn anneal(&self, py: Python<'_>, config: Option<&str>) -> PyResult<Placement> {
        let cfg: AnnealConfig = from_json(config)?;
        let built = sc::build_smallcell(&self.spec).map_err(err)?;
        let out = py.detach(|| run_algorithm2(&built.model, &cfg)).map_err(err)?;
        Ok(placement_from(&self.spec, &out))
    }

    /// Model-free placement and routing from simulated episodes.
    #[pyo3(signature = (config=None))]
    fn learn(&self, py: Python<'_>, config: Option<&str>) -> PyResult<Placement> {
        let cfg: ParamLearnConfig = from_json(config)?;
        let built = sc::build_smallcell(&self.spec).map_err(err)?;
        let out = py.detach(|| run_algorithm3(&built.env(), &cfg)).map_err(err)?;
        let spec = &self.spec;
        Ok(Placement {
            total_cost: out.total_cost,
            final_beta: out.final_beta,
            facilities: (0..spec.n_facilities).map(|j| out.model.zeta.point(spec.facility_state(j)).to_vec()).collect(),
            routes: (0..out.policy.n_states()).map(|s| out.policy.mode(s)).collect(),
            trace: trace_tuples(&out.trace),
        })
    }

    /// k-means placement followed by optimal routing.
    #[pyo3(signature = (restarts=50, seed=0))]
    fn sequential(&self, restarts: usize, seed: u64) -> PyResult<Placement> {
        let out = sequential_baseline(&self.spec, restarts, seed).map_err(err)?;
        Ok(Placement {
            total_cost: out.cost,
            final_beta: f64::INFINITY,
            facilities: out.facilities,
            routes: (0..out.policy.n_states()).map(|s| out.policy.mode(s)).collect(),
            trace: Vec::new(),
        })
    }
}

/// Runs a benchmark described by a TOML experiment config and returns the
/// summary as JSON.
#[pyfunction]
fn run_bench(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let cfg: ExperimentConfig = toml::from_str(config_toml).map_err(err)?;
    let res = py.detach(|| core_run_bench(&cfg)).map_err(err)?;
    serde_json::to_string(&res.summary).map_err(err)
}

#[pymodule]
fn mep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_class::<SoftSolution>()?;
    m.add_class::<Placement>()?;
    m.add_class::<PySmallCell>()?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
