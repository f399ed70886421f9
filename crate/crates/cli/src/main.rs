use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use mep_core::bench::{run_bench, write_results, EnvironmentSpec, ExperimentConfig, LearnAlgo, NoiseSpec, SmallCellSetup};
use mep_core::config::MdpFile;
use mep_core::env::TabularEnv;
use mep_core::envs::gridworld::GridworldSpec;
use mep_core::envs::noise::NoisyEnv;
use mep_core::envs::smallcell::build_smallcell;
use mep_core::learn::{run_learner, BetaSchedule, EvalMode, Evaluator, LearnConfig};
use mep_core::mdp::{optimal_value, validate_mdp, QTable, StochasticPolicy, TabularMdp};
use mep_core::metrics::compute_epr;
use mep_core::param::{run_algorithm2, sensitivity_rank, AnnealConfig, TraceRow};
use mep_core::param_rl::{run_algorithm3, ParamLearnConfig};
use mep_core::soft::{solve_fixed_point, SoftOperator, SoftPlanConfig};

#[derive(Parser)]
#[command(name = "mep", version, about = "Maximum-entropy planning and learning on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model with a soft Bellman map.
    Solve(SolveArgs),
    /// Run one learner on a tabular environment.
    Learn(LearnArgs),
    /// Jointly place facilities and route with the annealed model-based solver.
    ParamSolve(ParamArgs),
    /// Same problem, solved from simulated episodes only.
    ParamLearn(ParamArgs),
    /// Run a multi-seed experiment described by a config file.
    Bench(BenchArgs),
    /// Check a model for structural problems.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// Problem or experiment file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorArg {
    T,
    TBar,
    TInf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "t")]
    operator: OperatorArg,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Entropy discount of the infinite-entropy map.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    common: Common,
    /// mep, soft_q, q or double_q.
    #[arg(long, default_value = "mep")]
    algo: String,
    #[arg(long)]
    episodes: Option<usize>,
    /// Slope of the linear β schedule.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct ParamArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    /// Policy-stage episodes per β level (model-free solver only).
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Only run the learners or solvers named here (comma separated).
    #[arg(long)]
    algo: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Also write the model as a transition-row file.
    #[arg(long)]
    export: Option<PathBuf>,
}

/// A problem description: an environment plus optional solver settings.
#[derive(Debug, Default, Deserialize, Serialize)]
struct ProblemFile {
    environment: Option<EnvironmentSpec>,
    noise: Option<NoiseSpec>,
    plan: Option<SoftPlanConfig>,
    learn: Option<LearnConfig>,
    anneal: Option<AnnealConfig>,
    param_learn: Option<ParamLearnConfig>,
}

/// Reads either a transition-row model file or a problem file.
fn load_problem(path: Option<&Path>) -> Result<(ProblemFile, Option<MdpFile>)> {
    let Some(path) = path else {
        return Ok((ProblemFile::default(), None));
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if table.contains_key("n_states") {
        let f = MdpFile::from_toml(&text)?;
        return Ok((ProblemFile::default(), Some(f)));
    }
    let mut p: ProblemFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(EnvironmentSpec::File { path: rel }) = &mut p.environment {
        if rel.is_relative() {
            *rel = path.parent().unwrap_or(Path::new(".")).join(&*rel);
        }
    }
    Ok((p, None))
}

fn tabular_model(problem: &ProblemFile, file: Option<MdpFile>) -> Result<TabularMdp> {
    if let Some(f) = file {
        return Ok(f.to_mdp()?);
    }
    let env = problem
        .environment
        .clone()
        .unwrap_or(EnvironmentSpec::Gridworld(GridworldSpec::default()));
    Ok(env.tabular()?)
}

fn out_dir(common: &Common) -> PathBuf {
    common.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

fn rows(q: &QTable) -> Vec<Vec<f64>> {
    (0..q.n_states()).map(|s| q.row(s).to_vec()).collect()
}

fn policy_rows(p: &StochasticPolicy) -> Vec<Vec<f64>> {
    (0..p.n_states()).map(|s| p.row(s).to_vec()).collect()
}

fn modes(p: &StochasticPolicy) -> Vec<usize> {
    (0..p.n_states()).map(|s| p.mode(s)).collect()
}

fn solve(args: SolveArgs) -> Result<()> {
    let (problem, file) = load_problem(args.common.config.as_deref())?;
    let mdp = tabular_model(&problem, file)?;
    let mut cfg = problem.plan.unwrap_or_else(|| SoftPlanConfig::new(10.0, mdp.gamma()));
    if let Some(b) = args.beta {
        cfg.beta = b;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    let op = match args.operator {
        OperatorArg::T => SoftOperator::T,
        OperatorArg::TBar => SoftOperator::TBar,
        OperatorArg::TInf => SoftOperator::TInfinite,
    };
    let sol = solve_fixed_point(op, &mdp, &cfg)?;
    let hard = optimal_value(&mdp.with_gamma(cfg.gamma)).ok();
    let report = json!({
        "operator": format!("{op:?}"),
        "config": cfg,
        "iterations": sol.iterations,
        "free_energy": sol.value.values(),
        "q": rows(&sol.q),
        "policy": policy_rows(&sol.policy),
        "greedy_actions": modes(&sol.hardened()),
        "optimal_value": hard.as_ref().map(|(v, _)| v.values().to_vec()),
    });
    let path = write_json(&out_dir(&args.common), "solve.json", &report)?;
    println!("converged in {} iterations; wrote {}", sol.iterations, path.display());
    Ok(())
}

fn learn(args: LearnArgs) -> Result<()> {
    let (problem, file) = load_problem(args.common.config.as_deref())?;
    let mdp = tabular_model(&problem, file)?;
    let algo = LearnAlgo::parse(&args.algo)?;
    let mut cfg = problem.learn.clone().unwrap_or(LearnConfig {
        gamma: mdp.gamma(),
        ..LearnConfig::default()
    });
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    if let Some(s) = args.sigma {
        cfg.schedule = BetaSchedule::Linear { sigma: s };
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    let mdp = mdp.with_gamma(cfg.gamma);
    let sigma = problem.noise.as_ref().map(|n| n.sigmas(mdp.n_actions())).transpose()?;
    let mode = if sigma.is_some() {
        EvalMode::Estimate
    } else {
        EvalMode::GreedyPolicyValue
    };
    let evaluator = Evaluator::new(&mdp, cfg.gamma, mode)?;
    let mut agent = algo.build_agent(mdp.n_states(), mdp.n_actions(), &cfg, 0.1);
    let env = TabularEnv::new(mdp);
    let series = match sigma {
        Some(s) => run_learner(&mut NoisyEnv::new(env, s)?, agent.as_mut(), &cfg, Some(&evaluator), 0)?,
        None => run_learner(&mut { env }, agent.as_mut(), &cfg, Some(&evaluator), 0)?,
    };
    let dir = out_dir(&args.common);
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join(format!("{}.csv", algo.name()));
    series.write_csv(std::fs::File::create(&csv)?)?;
    let dv = series.delta_v();
    let epr = compute_epr(&dv, 0.05)?;
    println!(
        "{}: final relative error {:.3}%, settled after {:.1}% of episodes; wrote {}",
        algo.name(),
        dv.last().copied().unwrap_or(f64::NAN),
        epr,
        csv.display()
    );
    Ok(())
}

fn smallcell_setup(problem: &ProblemFile) -> Result<SmallCellSetup> {
    match &problem.environment {
        None => Ok(SmallCellSetup {
            preset: Default::default(),
            instance_seed: None,
            mode: mep_core::envs::smallcell::TransitionMode::Deterministic,
            objective: Default::default(),
            spec: None,
        }),
        Some(EnvironmentSpec::SmallCell(s)) => Ok(s.clone()),
        Some(_) => bail!("parameterized solvers need a small_cell environment"),
    }
}

fn apply_anneal_flags(cfg: &mut AnnealConfig, args: &ParamArgs) {
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    if let Some(b) = args.beta_min {
        cfg.beta_min = b;
    }
    if let Some(b) = args.beta_max {
        cfg.beta_max = b;
    }
}

fn write_trace(dir: &Path, trace: &[TraceRow]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("trace.csv");
    let mut out = String::from("beta,free_energy,cost,inner_iterations\n");
    for t in trace {
        out.push_str(&format!("{},{},{},{}\n", t.beta, t.free_energy, t.cost, t.inner_iterations));
    }
    std::fs::write(&path, out)?;
    Ok(path)
}

fn param_solve(args: ParamArgs) -> Result<()> {
    let (problem, _) = load_problem(args.common.config.as_deref())?;
    let setup = smallcell_setup(&problem)?;
    let spec = setup.instance(args.common.seed.unwrap_or(0));
    let sc = build_smallcell(&spec)?;
    let mut cfg = problem.anneal.clone().unwrap_or_default();
    apply_anneal_flags(&mut cfg, &args);
    let out = run_algorithm2(&sc.model, &cfg)?;
    let mut pm = sc.model.clone();
    pm.zeta = out.zeta.clone();
    let facilities: Vec<usize> = (0..spec.n_facilities).map(|j| spec.facility_state(j)).collect();
    let sens = sensitivity_rank(&pm, &out.soft_policy, &facilities)?;
    let dir = out_dir(&args.common);
    let report = json!({
        "total_cost": out.total_cost,
        "final_beta": out.final_beta,
        "facilities": facilities.iter().map(|&s| out.zeta.point(s).to_vec()).collect::<Vec<_>>(),
        "routes": modes(&out.policy),
        "sensitivity": sens,
        "levels": out.trace.len(),
    });
    let path = write_json(&dir, "param_solve.json", &report)?;
    write_trace(&dir, &out.trace)?;
    println!(
        "cost {:.6} at beta {:.3e} after {} levels; wrote {}",
        out.total_cost,
        out.final_beta,
        out.trace.len(),
        path.display()
    );
    Ok(())
}

fn param_learn(args: ParamArgs) -> Result<()> {
    let (problem, _) = load_problem(args.common.config.as_deref())?;
    let setup = smallcell_setup(&problem)?;
    let seed = args.common.seed.unwrap_or(0);
    let spec = setup.instance(seed);
    let sc = build_smallcell(&spec)?;
    let mut cfg = problem.param_learn.clone().unwrap_or_default();
    apply_anneal_flags(&mut cfg.anneal, &args);
    if let Some(n) = args.episodes {
        cfg.learn.episodes = n;
    }
    cfg.learn.seed = seed;
    let out = run_algorithm3(&sc.env(), &cfg)?;
    let dir = out_dir(&args.common);
    let report = json!({
        "total_cost": out.total_cost,
        "final_beta": out.final_beta,
        "facilities": (0..spec.n_facilities).map(|j| out.model.zeta.point(spec.facility_state(j)).to_vec()).collect::<Vec<_>>(),
        "routes": modes(&out.policy),
        "env_steps": out.env_steps,
        "levels": out.trace.len(),
    });
    let path = write_json(&dir, "param_learn.json", &report)?;
    write_trace(&dir, &out.trace)?;
    println!(
        "cost {:.6} at beta {:.3e} after {} environment steps; wrote {}",
        out.total_cost,
        out.final_beta,
        out.env_steps,
        path.display()
    );
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let Some(path) = args.common.config.as_deref() else {
        bail!("bench needs --config");
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(d) = args.common.out_dir {
        cfg.out_dir = d;
    }
    if let Some(s) = args.common.seed {
        cfg.seeds = Some(vec![s]);
        cfg.runs = 1;
    }
    if let Some(names) = &args.algo {
        let keep: Vec<&str> = names.split(',').map(str::trim).collect();
        filter_algorithms(&mut cfg, &keep);
    }
    let result = run_bench(&cfg)?;
    write_results(&result, &cfg.out_dir)?;
    for l in &result.summary.learners {
        println!(
            "{:>10}  runs {:>3}  E_pr median {:>6.2}%  mean-curve {:>6.2}%",
            l.algorithm,
            l.runs_ok,
            l.epr_median.unwrap_or(f64::NAN),
            l.epr_mean_curve.unwrap_or(f64::NAN)
        );
    }
    for p in &result.summary.placements {
        println!(
            "{:>10}  runs {:>3}  median cost {:.6}",
            p.algorithm,
            p.runs.len(),
            p.median_cost.unwrap_or(f64::NAN)
        );
    }
    for f in &result.summary.failures {
        eprintln!("run failed: {} seed {}: {}", f.algorithm, f.seed, f.error);
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn filter_algorithms(cfg: &mut ExperimentConfig, keep: &[&str]) {
    use mep_core::bench::Experiment;
    match &mut cfg.experiment {
        Experiment::Learning { algorithms, .. } => algorithms.retain(|a| keep.contains(&a.name())),
        Experiment::Placement { algorithms, .. } => algorithms.retain(|a| keep.contains(&a.name())),
    }
}

fn validate(args: ValidateArgs) -> Result<()> {
    let (problem, file) = load_problem(args.common.config.as_deref())?;
    let mdp = tabular_model(&problem, file)?;
    if let Some(path) = &args.export {
        std::fs::write(path, MdpFile::from_mdp(&mdp).to_toml()?)?;
    }
    let report = validate_mdp(&mdp);
    if report.is_empty() {
        println!("ok: {} states, {} actions, gamma {}", mdp.n_states(), mdp.n_actions(), mdp.gamma());
        return Ok(());
    }
    for v in &report {
        println!("violation: {v}");
    }
    std::process::exit(1);
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve(a) => solve(a),
        Command::Learn(a) => learn(a),
        Command::ParamSolve(a) => param_solve(a),
        Command::ParamLearn(a) => param_learn(a),
        Command::Bench(a) => bench(a),
        Command::Validate(a) => validate(a),
    }
}
