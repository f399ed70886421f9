//! Experiment harness: seeded multi-run comparisons of learners on tabular
//! environments and of placement solvers on small-cell instances, written
//! out as CSV series, a gnuplot script and a JSON summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::config::load_mdp;
use crate::env::TabularEnv;
use crate::envs::doublechain::{doublechain_env, DoubleChainSpec};
use crate::envs::gridworld::{build_gridworld, default_noise_sigmas, GridworldSpec};
use crate::envs::noise::NoisyEnv;
use crate::envs::smallcell::{
    build_smallcell, preset_large, preset_small, Objective, SmallCellSpec, TransitionMode,
};
use crate::error::{Error, Result};
use crate::learn::{run_learner, EvalMode, Evaluator, LearnConfig, MepAgent, TabularAgent};
use crate::mdp::{optimal_value, StochasticPolicy, TabularMdp};
use crate::metrics::{compute_epr, mean_curve, median, MetricSeries};
use crate::param::{run_algorithm2, run_fixed_beta, sensitivity_rank, AnnealConfig, Sensitivity, TraceRow};
use crate::param_rl::{run_algorithm3, ParamLearnConfig};

/// Instance size of a generated small-cell network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 46 users, 5 facilities.
    #[default]
    Small,
    /// 610 users, 10 facilities.
    Large,
}

/// A small-cell instance: generated from a preset, or given inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallCellSetup {
    #[serde(default)]
    pub preset: Preset,
    /// Seed of the generated instance; the run seed when absent, so every run
    /// sees a different network.
    #[serde(default)]
    pub instance_seed: Option<u64>,
    #[serde(default = "deterministic")]
    pub mode: TransitionMode,
    #[serde(default)]
    pub objective: Objective,
    /// Explicit instance; overrides the preset.
    #[serde(default)]
    pub spec: Option<SmallCellSpec>,
}

fn deterministic() -> TransitionMode {
    TransitionMode::Deterministic
}

impl SmallCellSetup {
    pub fn instance(&self, run_seed: u64) -> SmallCellSpec {
        let mut spec = match &self.spec {
            Some(s) => s.clone(),
            None => {
                let seed = self.instance_seed.unwrap_or(run_seed);
                match self.preset {
                    Preset::Small => preset_small(seed),
                    Preset::Large => preset_large(seed),
                }
            }
        };
        if self.spec.is_none() {
            spec.mode = self.mode;
            spec.objective = self.objective;
        }
        spec
    }
}

/// Which environment an experiment runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Gridworld(GridworldSpec),
    DoubleChain(DoubleChainSpec),
    SmallCell(SmallCellSetup),
    /// A model file in the TOML transition-row format.
    File { path: PathBuf },
}

impl EnvironmentSpec {
    /// The tabular model of a non-parameterized environment.
    pub fn tabular(&self) -> Result<TabularMdp> {
        match self {
            EnvironmentSpec::Gridworld(g) => Ok(build_gridworld(g)?.mdp().clone()),
            EnvironmentSpec::DoubleChain(d) => Ok(doublechain_env(d)?.mdp().clone()),
            EnvironmentSpec::File { path } => load_mdp(path),
            EnvironmentSpec::SmallCell(_) => Err(Error::InvalidConfig(
                "small-cell instances are parameterized; use a parameterized experiment".into(),
            )),
        }
    }
}

/// Additive Gaussian cost noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// σ = 1 on axis moves and stay, 0.5 on diagonals (gridworld only).
    GridworldDefault,
    /// One σ per action.
    PerAction { sigma: Vec<f64> },
}

impl NoiseSpec {
    pub fn sigmas(&self, n_actions: usize) -> Result<Vec<f64>> {
        let s = match self {
            NoiseSpec::GridworldDefault => default_noise_sigmas(),
            NoiseSpec::PerAction { sigma } => sigma.clone(),
        };
        if s.len() != n_actions {
            return Err(Error::Dimension(format!("{} noise levels for {n_actions} actions", s.len())));
        }
        Ok(s)
    }
}

/// Learners that can be compared on a tabular environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnAlgo {
    Mep,
    SoftQ,
    Q,
    DoubleQ,
}

impl LearnAlgo {
    pub fn name(self) -> &'static str {
        match self {
            LearnAlgo::Mep => "mep",
            LearnAlgo::SoftQ => "soft_q",
            LearnAlgo::Q => "q",
            LearnAlgo::DoubleQ => "double_q",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mep" => Ok(LearnAlgo::Mep),
            "soft_q" | "soft-q" => Ok(LearnAlgo::SoftQ),
            "q" => Ok(LearnAlgo::Q),
            "double_q" | "double-q" => Ok(LearnAlgo::DoubleQ),
            _ => Err(Error::InvalidConfig(format!("unknown learner '{s}'"))),
        }
    }

    pub fn build_agent(self, n_states: usize, n_actions: usize, cfg: &LearnConfig, epsilon: f64) -> Box<dyn TabularAgent + Send> {
        let kind = match self {
            LearnAlgo::Mep => return Box::new(MepAgent::new(n_states, n_actions, cfg)),
            LearnAlgo::SoftQ => BaselineKind::SoftQ,
            LearnAlgo::Q => BaselineKind::Q,
            LearnAlgo::DoubleQ => BaselineKind::DoubleQ,
        };
        let bc = BaselineConfig {
            epsilon,
            ..BaselineConfig::from_learn(kind, cfg)
        };
        bc.build_agent(n_states, n_actions)
    }
}

/// Solvers that can be compared on a small-cell instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementAlgo {
    /// Cluster users, then route optimally.
    Sequential,
    /// Annealed model-based solver.
    Annealed,
    /// Model-based descent at a single β.
    FixedBeta,
    /// Annealed model-free solver.
    ModelFree,
}

impl PlacementAlgo {
    pub fn name(self) -> &'static str {
        match self {
            PlacementAlgo::Sequential => "sequential",
            PlacementAlgo::Annealed => "annealed",
            PlacementAlgo::FixedBeta => "fixed_beta",
            PlacementAlgo::ModelFree => "model_free",
        }
    }
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_threshold() -> f64 {
    0.05
}

fn default_restarts() -> usize {
    50
}

/// What an experiment does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Learning {
        algorithms: Vec<LearnAlgo>,
        #[serde(default)]
        learn: LearnConfig,
        /// ε-greedy rate of Q and Double Q.
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        /// Defaults to the learner's own estimate on noisy environments and to
        /// the exact value of its greedy policy otherwise.
        #[serde(default)]
        eval: Option<EvalMode>,
        #[serde(default = "default_threshold")]
        epr_threshold: f64,
    },
    Placement {
        algorithms: Vec<PlacementAlgo>,
        #[serde(default)]
        anneal: AnnealConfig,
        #[serde(default)]
        param_learn: ParamLearnConfig,
        /// β of the fixed-β run; the annealed run's final β when absent.
        #[serde(default)]
        fixed_beta: Option<f64>,
        #[serde(default = "default_restarts")]
        kmeans_restarts: usize,
    },
}

fn default_runs() -> usize {
    20
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

/// A complete bench description, normally read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub experiment: Experiment,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// One seed per run; `0..runs` when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (0..self.runs as u64).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let seeds = self.seeds();
        if seeds.is_empty() {
            return Err(Error::InvalidConfig("need at least one run".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(Error::InvalidConfig("run seeds must be distinct".into()));
        }
        match &self.experiment {
            Experiment::Learning { algorithms, learn, .. } => {
                if algorithms.is_empty() {
                    return Err(Error::InvalidConfig("no algorithms selected".into()));
                }
                learn.validate()?;
                if matches!(self.environment, EnvironmentSpec::SmallCell(_)) {
                    return Err(Error::InvalidConfig("learning experiments need a tabular environment".into()));
                }
            }
            Experiment::Placement { algorithms, anneal, param_learn, .. } => {
                if algorithms.is_empty() {
                    return Err(Error::InvalidConfig("no algorithms selected".into()));
                }
                anneal.validate()?;
                param_learn.validate()?;
                if !matches!(self.environment, EnvironmentSpec::SmallCell(_)) {
                    return Err(Error::InvalidConfig("placement experiments need a small-cell environment".into()));
                }
            }
        }
        Ok(())
    }
}

/// A run that raised an error; the other runs still count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub algorithm: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub algorithm: String,
    pub runs_ok: usize,
    /// Median over runs of each run's Ē_pr.
    pub epr_median: Option<f64>,
    /// Ē_pr of the run-averaged curve.
    pub epr_mean_curve: Option<f64>,
    pub final_delta_v_pct: Option<f64>,
    pub env_steps: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRun {
    pub seed: u64,
    pub cost: f64,
    pub facilities: Vec<Vec<f64>>,
    pub final_beta: Option<f64>,
    /// Facility sensitivity classes (model-based annealed runs only).
    pub sensitivity: Option<Vec<Sensitivity>>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSummary {
    pub algorithm: String,
    pub runs: Vec<PlacementRun>,
    pub median_cost: Option<f64>,
    pub mean_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub name: String,
    pub seeds: Vec<u64>,
    pub learners: Vec<LearnerSummary>,
    pub placements: Vec<PlacementSummary>,
    pub failures: Vec<RunFailure>,
    pub wall_time_s: f64,
}

/// In-memory results of a bench; [`write_results`] puts them on disk.
#[derive(Debug, Clone)]
pub struct BenchResult {
    pub summary: BenchSummary,
    /// Per learner, rows of every successful run.
    pub series: Vec<(String, MetricSeries)>,
    /// Per placement solver, per-β trace rows keyed by run index.
    pub traces: Vec<(String, Vec<(usize, TraceRow)>)>,
}

/// Runs every configured algorithm on every seed. Runs execute in parallel;
/// results are folded in `(run, episode)` order, so outputs do not depend on
/// scheduling.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchResult> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = cfg.seeds();
    let mut summary = BenchSummary {
        name: cfg.name.clone(),
        seeds: seeds.clone(),
        learners: Vec::new(),
        placements: Vec::new(),
        failures: Vec::new(),
        wall_time_s: 0.0,
    };
    let mut series = Vec::new();
    let mut traces = Vec::new();
    match &cfg.experiment {
        Experiment::Learning {
            algorithms,
            learn,
            epsilon,
            eval,
            epr_threshold,
        } => {
            let mdp = cfg.environment.tabular()?;
            let sigma = cfg.noise.as_ref().map(|n| n.sigmas(mdp.n_actions())).transpose()?;
            let mode = eval.unwrap_or(if sigma.is_some() {
                EvalMode::Estimate
            } else {
                EvalMode::GreedyPolicyValue
            });
            let evaluator = Evaluator::new(&mdp, learn.gamma, mode)?;
            for &algo in algorithms {
                let t = Instant::now();
                let results: Vec<(usize, u64, Result<MetricSeries>)> = seeds
                    .par_iter()
                    .enumerate()
                    .map(|(run, &seed)| {
                        let r = learning_run(&mdp, sigma.as_deref(), algo, learn, *epsilon, &evaluator, run, seed);
                        (run, seed, r)
                    })
                    .collect();
                let (s, failures) = fold_learning(algo, results, *epr_threshold, t.elapsed().as_secs_f64(), &mut summary);
                summary.failures.extend(failures);
                series.push((algo.name().to_string(), s));
            }
        }
        Experiment::Placement {
            algorithms,
            anneal,
            param_learn,
            fixed_beta,
            kmeans_restarts,
        } => {
            let EnvironmentSpec::SmallCell(setup) = &cfg.environment else {
                unreachable!("validated above");
            };
            let results: Vec<(u64, Vec<PlacementResult>)> = seeds
                .par_iter()
                .map(|&seed| {
                    let spec = setup.instance(seed);
                    let out = placement_runs(&spec, algorithms, anneal, param_learn, *fixed_beta, *kmeans_restarts, seed);
                    (seed, out)
                })
                .collect();
            for &algo in algorithms {
                let mut runs = Vec::new();
                let mut rows = Vec::new();
                for (run, (seed, per_algo)) in results.iter().enumerate() {
                    let r = per_algo.iter().find(|r| r.algo == algo).expect("one result per algorithm");
                    match &r.outcome {
                        Ok((pr, trace)) => {
                            runs.push(pr.clone());
                            rows.extend(trace.iter().map(|t| (run, t.clone())));
                        }
                        Err(e) => summary.failures.push(RunFailure {
                            algorithm: algo.name().into(),
                            seed: *seed,
                            error: e.to_string(),
                        }),
                    }
                }
                let costs: Vec<f64> = runs.iter().map(|r| r.cost).collect();
                summary.placements.push(PlacementSummary {
                    algorithm: algo.name().into(),
                    median_cost: (!costs.is_empty()).then(|| median(&costs)),
                    mean_cost: (!costs.is_empty()).then(|| costs.iter().sum::<f64>() / costs.len() as f64),
                    runs,
                });
                traces.push((algo.name().to_string(), rows));
            }
        }
    }
    summary.wall_time_s = start.elapsed().as_secs_f64();
    Ok(BenchResult { summary, series, traces })
}

#[allow(clippy::too_many_arguments)]
fn learning_run(
    mdp: &TabularMdp,
    sigma: Option<&[f64]>,
    algo: LearnAlgo,
    learn: &LearnConfig,
    epsilon: f64,
    evaluator: &Evaluator,
    run: usize,
    seed: u64,
) -> Result<MetricSeries> {
    let cfg = LearnConfig {
        seed,
        ..learn.clone()
    };
    let mdp = mdp.with_gamma(cfg.gamma);
    let mut agent = algo.build_agent(mdp.n_states(), mdp.n_actions(), &cfg, epsilon);
    let base = TabularEnv::new(mdp);
    match sigma {
        Some(s) => {
            let mut env = NoisyEnv::new(base, s.to_vec())?;
            run_learner(&mut env, agent.as_mut(), &cfg, Some(evaluator), run)
        }
        None => {
            let mut env = base;
            run_learner(&mut env, agent.as_mut(), &cfg, Some(evaluator), run)
        }
    }
}

fn fold_learning(
    algo: LearnAlgo,
    results: Vec<(usize, u64, Result<MetricSeries>)>,
    threshold: f64,
    wall: f64,
    summary: &mut BenchSummary,
) -> (MetricSeries, Vec<RunFailure>) {
    let mut all = MetricSeries::new();
    let mut failures = Vec::new();
    let mut curves = Vec::new();
    let mut eprs = Vec::new();
    let mut steps = 0;
    for (_, seed, r) in results {
        match r {
            Ok(s) => {
                let dv = s.delta_v();
                if let Ok(e) = compute_epr(&dv, threshold) {
                    eprs.push(e);
                }
                steps += s.rows.iter().map(|r| r.steps).sum::<usize>();
                curves.push(dv);
                all.extend(s);
            }
            Err(e) => failures.push(RunFailure {
                algorithm: algo.name().into(),
                seed,
                error: e.to_string(),
            }),
        }
    }
    all.sort();
    let mean = mean_curve(&curves);
    summary.learners.push(LearnerSummary {
        algorithm: algo.name().into(),
        runs_ok: curves.len(),
        epr_median: (!eprs.is_empty()).then(|| median(&eprs)),
        epr_mean_curve: compute_epr(&mean, threshold).ok(),
        final_delta_v_pct: mean.last().copied(),
        env_steps: steps,
        wall_time_s: wall,
    });
    (all, failures)
}

struct PlacementResult {
    algo: PlacementAlgo,
    outcome: Result<(PlacementRun, Vec<TraceRow>)>,
}

fn placement_runs(
    spec: &SmallCellSpec,
    algorithms: &[PlacementAlgo],
    anneal: &AnnealConfig,
    param_learn: &ParamLearnConfig,
    fixed_beta: Option<f64>,
    restarts: usize,
    seed: u64,
) -> Vec<PlacementResult> {
    let mut annealed_beta = None;
    // the fixed-β run reuses the annealed run's final β, so run that first
    let mut order: Vec<PlacementAlgo> = algorithms.to_vec();
    order.sort_by_key(|a| *a != PlacementAlgo::Annealed);
    let mut out = Vec::new();
    for algo in order {
        let t = Instant::now();
        let outcome = placement_run(spec, algo, anneal, param_learn, fixed_beta, annealed_beta, restarts, seed).map(
            |(mut pr, trace)| {
                pr.wall_time_s = t.elapsed().as_secs_f64();
                if algo == PlacementAlgo::Annealed {
                    annealed_beta = pr.final_beta;
                }
                (pr, trace)
            },
        );
        out.push(PlacementResult { algo, outcome });
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn placement_run(
    spec: &SmallCellSpec,
    algo: PlacementAlgo,
    anneal: &AnnealConfig,
    param_learn: &ParamLearnConfig,
    fixed_beta: Option<f64>,
    annealed_beta: Option<f64>,
    restarts: usize,
    seed: u64,
) -> Result<(PlacementRun, Vec<TraceRow>)> {
    let sc = build_smallcell(spec)?;
    let facility_states: Vec<usize> = (0..spec.n_facilities).map(|j| spec.facility_state(j)).collect();
    let points = |z: &crate::param::ParamBlock| facility_states.iter().map(|&s| z.point(s).to_vec()).collect();
    let run = |cost, facilities, final_beta, sensitivity| PlacementRun {
        seed,
        cost,
        facilities,
        final_beta,
        sensitivity,
        wall_time_s: 0.0,
    };
    match algo {
        PlacementAlgo::Sequential => {
            let b = sequential_baseline(spec, restarts, seed)?;
            Ok((run(b.cost, b.facilities, None, None), Vec::new()))
        }
        PlacementAlgo::Annealed => {
            let o = run_algorithm2(&sc.model, anneal)?;
            let mut pm = sc.model.clone();
            pm.zeta = o.zeta.clone();
            let sens = sensitivity_rank(&pm, &o.soft_policy, &facility_states)?;
            let classes = sens.iter().map(|s| s.class).collect();
            Ok((run(o.total_cost, points(&o.zeta), Some(o.final_beta), Some(classes)), o.trace))
        }
        PlacementAlgo::FixedBeta => {
            let beta = match fixed_beta.or(annealed_beta) {
                Some(b) => b,
                None => run_algorithm2(&sc.model, anneal)?.final_beta,
            };
            let o = run_fixed_beta(&sc.model, anneal, beta, usize::MAX)?;
            Ok((run(o.total_cost, points(&o.zeta), Some(beta), None), o.trace))
        }
        PlacementAlgo::ModelFree => {
            let mut cfg = param_learn.clone();
            cfg.learn.seed = seed;
            let o = run_algorithm3(&sc.env(), &cfg)?;
            Ok((run(o.total_cost, points(&o.model.zeta), Some(o.final_beta), None), o.trace))
        }
    }
}

/// Result of clustering users and routing afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialOutcome {
    pub facilities: Vec<Vec<f64>>,
    pub policy: StochasticPolicy,
    pub cost: f64,
}

/// k-means centers of `points` (best of `restarts` seeded Lloyd runs).
/// A run that empties a cluster is discarded and redrawn.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidConfig(format!("cannot form {k} clusters from {} points", points.len())));
    }
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut done = 0;
    let mut attempts = 0;
    while done < restarts.max(1) {
        attempts += 1;
        if attempts > 100 * restarts.max(1) {
            return Err(Error::InvalidConfig("k-means keeps producing empty clusters".into()));
        }
        let idx = rand::seq::index::sample(&mut rng, points.len(), k);
        let mut centers: Vec<Vec<f64>> = idx.iter().map(|i| points[i].clone()).collect();
        let mut assign = vec![usize::MAX; points.len()];
        let mut empty = false;
        for _ in 0..1000 {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let j = (0..k)
                    .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])))
                    .expect("k > 0");
                if assign[i] != j {
                    assign[i] = j;
                    changed = true;
                }
            }
            let d = points[0].len();
            let mut sums = vec![vec![0.0; d]; k];
            let mut counts = vec![0usize; k];
            for (i, p) in points.iter().enumerate() {
                counts[assign[i]] += 1;
                for (s, x) in sums[assign[i]].iter_mut().zip(p) {
                    *s += x;
                }
            }
            if counts.contains(&0) {
                empty = true;
                break;
            }
            for j in 0..k {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
            if !changed {
                break;
            }
        }
        if empty {
            continue;
        }
        done += 1;
        let sse: f64 = points.iter().enumerate().map(|(i, p)| dist2(p, &centers[assign[i]])).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, centers));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// Places facilities at k-means centers of the users, then routes with
/// exact value iteration on the resulting fixed model.
pub fn sequential_baseline(spec: &SmallCellSpec, restarts: usize, seed: u64) -> Result<SequentialOutcome> {
    let centers = kmeans(&spec.users, spec.n_facilities, restarts, seed)?;
    let placed = SmallCellSpec {
        facilities: Some(centers.clone()),
        ..spec.clone()
    };
    let sc = build_smallcell(&placed)?;
    let (j, policy) = optimal_value(&sc.model.realize())?;
    Ok(SequentialOutcome {
        facilities: centers,
        policy,
        cost: sc.model.weighted_total(&j),
    })
}

/// Writes one CSV per learner (all runs), one mean-curve CSV per learner, a
/// gnuplot script, per-solver β traces and `summary.json` into `dir`.
pub fn write_results(result: &BenchResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, s) in &result.series {
        s.write_csv(std::fs::File::create(dir.join(format!("{name}.csv")))?)?;
        let runs: std::collections::BTreeSet<usize> = s.rows.iter().map(|r| r.run).collect();
        let curves: Vec<Vec<f64>> = runs
            .iter()
            .map(|&run| s.rows.iter().filter(|r| r.run == run).map(|r| r.delta_v_pct).collect())
            .collect();
        let mean = mean_curve(&curves);
        let mut w = csv::Writer::from_path(dir.join(format!("{name}_mean.csv")))?;
        w.write_record(["episode", "delta_v_pct"])?;
        for (i, v) in mean.iter().enumerate() {
            w.write_record([(i + 1).to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    if !result.series.is_empty() {
        std::fs::write(dir.join("curves.gp"), gnuplot_script(&result.series))?;
    }
    for (name, rows) in &result.traces {
        if rows.is_empty() {
            continue;
        }
        let mut w = csv::Writer::from_path(dir.join(format!("trace_{name}.csv")))?;
        w.write_record(["run", "beta", "free_energy", "cost", "inner_iterations"])?;
        for (run, t) in rows {
            w.write_record([
                run.to_string(),
                t.beta.to_string(),
                t.free_energy.to_string(),
                t.cost.to_string(),
                t.inner_iterations.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let json = serde_json::to_string_pretty(&result.summary).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

fn gnuplot_script(series: &[(String, MetricSeries)]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'episode'\nset ylabel 'relative value error (%)'\nset logscale y\nplot ",
    );
    let plots: Vec<String> = series
        .iter()
        .map(|(name, _)| format!("'{name}_mean.csv' using 1:2 with lines title '{name}'"))
        .collect();
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}
