//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or invalid input, 2 numerical failure
//! (including non-convergence), 3 file errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_optimistic, calibrate_pessimistic, RiskSpec, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::experiments::{
    bench_csv, gen_machine_replacement, gen_random_mdp, gen_reward_truth, run_pipeline, solver_bench, t_demo,
    t_demo_csv, BenchConfig, ExperimentConfig, ExperimentKind, RewardProfile, TDemoConfig,
};
use crate::io::{create_dir, format_number, read_json, write_atomic, write_json};
use crate::mdp::{occupancy_of_policy, MdpInstance, OccupancyMeasure, Policy};
use crate::models::{
    base_problem, evaluate_policy_true, solve_model, standard_metrics, ModelKind, ModelSpec, SolverChoice, SolverKind,
};
use crate::solver::{ProximalWeight, SolveResult};
use crate::stats::{sample_mvn, EllipticalRef, SampleMatrix, DEFAULT_EIG_FLOOR};

#[derive(Debug, Parser)]
#[command(name = "riskmdp", version, about = "Risk-averse MDPs under Wasserstein reward ambiguity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random (or machine-replacement) instance file.
    GenMdp(GenMdpArgs),
    /// Print the adjusted risk threshold for a Wasserstein radius.
    CalibrateRisk(CalibrateArgs),
    /// Solve one model on an instance and write the result document.
    Solve(SolveArgs),
    /// Evaluate a policy or occupancy under a Gaussian reward.
    EvalPolicy(EvalArgs),
    /// Run an experiment described by a config file.
    RunExperiment(RunArgs),
    /// VaR versus CVaR decision accuracy under Student-t rewards.
    TDemo(TDemoArgs),
    /// Time AD-LPMM against the Frank-Wolfe reference.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenMdpArgs {
    #[arg(long)]
    states: usize,
    /// Ignored with --machine (always 2).
    #[arg(long, default_value_t = 10)]
    actions: usize,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the true reward distribution here.
    #[arg(long)]
    reward_out: Option<PathBuf>,
    /// Number of reward samples to embed in the reward file.
    #[arg(long, requires = "reward_out")]
    samples: Option<usize>,
    /// Machine-replacement chain with the stand-in reward profile.
    #[arg(long)]
    machine: bool,
}

#[derive(Debug, Args, Serialize)]
struct CalibrateArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    theta: f64,
    /// Optimistic (enlarged) threshold instead of the pessimistic one.
    #[arg(long)]
    optimistic: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SolverArg {
    Adlpmm,
    Fw,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum WeightArg {
    Frobenius,
    Spectral,
}

impl From<WeightArg> for ProximalWeight {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Frobenius => ProximalWeight::Frobenius,
            WeightArg::Spectral => ProximalWeight::Spectral,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[arg(long)]
    reward: PathBuf,
    /// Inline JSON, a JSON file, or `kind,key=value,...` (e.g. `RR,alpha=0.5,theta=1,epsilon=0.1`).
    #[arg(long)]
    model: String,
    #[arg(long, value_enum, default_value_t = SolverArg::Adlpmm)]
    solver: SolverArg,
    /// JSON file with solver settings (fields of the solver choice).
    #[arg(long)]
    solver_config: Option<PathBuf>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Result document; printed to standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Result document (its occupancy is used) or a policy matrix.
    #[arg(long)]
    policy: PathBuf,
    /// Reward file of the true distribution.
    #[arg(long)]
    truth: PathBuf,
    /// Needed when the policy file carries no occupancy.
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15")]
    thresholds: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TDemoArgs {
    /// JSON file with the demo settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    dofs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    shifts: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Number of seeds (0, 1, ..., n-1).
    #[arg(long)]
    seeds: Option<u64>,
    /// CSV file; the table is printed either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Values of S = A.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Wall-clock budget per AD-LPMM run, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, value_enum)]
    proximal_weight: Option<WeightArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Reward file: mean, covariance and optional samples (one row per sample).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardDocument {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<f64>>>,
}

impl RewardDocument {
    pub fn from_reference(reward: &EllipticalRef) -> Self {
        let cov = reward.cov();
        Self {
            mu: reward.mean().iter().copied().collect(),
            sigma: (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect(),
            samples: None,
        }
    }

    /// Reference distribution; a positive semidefinite covariance gets the
    /// default eigenvalue floor.
    pub fn reference(&self) -> Result<EllipticalRef> {
        let n = self.mu.len();
        if self.sigma.len() != n || self.sigma.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("covariance must be {n}x{n}")));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| self.sigma[i][j]);
        EllipticalRef::with_floor(DVector::from_vec(self.mu.clone()), cov, DEFAULT_EIG_FLOOR)
    }

    pub fn sample_matrix(&self) -> Result<Option<SampleMatrix>> {
        self.samples.as_deref().map(SampleMatrix::from_rows).transpose()
    }
}

/// Result file of `solve`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDocument {
    pub objective: f64,
    pub x: Vec<f64>,
    pub policy: Vec<Vec<f64>>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&SolveResult> for SolveDocument {
    fn from(r: &SolveResult) -> Self {
        Self {
            objective: r.objective,
            x: r.x.as_slice().to_vec(),
            policy: r.policy.rows().to_vec(),
            residual: r.residual,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

/// Parses `--model`: inline JSON, a JSON file, or `kind,key=value,...`.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        return serde_json::from_str(trimmed).map_err(|e| Error::invalid(format!("model spec: {e}")));
    }
    let path = Path::new(trimmed);
    if path.is_file() {
        return read_json(path);
    }
    let mut parts = trimmed.split(',');
    let kind: ModelKind = parts.next().unwrap_or_default().trim().parse()?;
    let mut obj = serde_json::Map::new();
    obj.insert("kind".into(), serde_json::to_value(kind).expect("kind serializes"));
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=value, got `{part}`")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("`{value}` is not a number")))?;
        obj.insert(key.trim().into(), serde_json::json!(v));
    }
    serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| Error::invalid(format!("model spec: {e}")))
}

/// Exit code of an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) => 1,
        Error::Domain(_)
        | Error::CalibrationOutOfRange { .. }
        | Error::NotConverged { .. }
        | Error::EnumerationTooLarge { .. }
        | Error::Numerical(_) => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            if let Error::NotConverged { residual, best, .. } = &e {
                let _ = writeln!(
                    err,
                    "not converged: residual {}, best objective {}",
                    format_number(*residual),
                    format_number(best.objective)
                );
            }
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn echo_config(err: &mut dyn Write, name: &str, cfg: &impl Serialize) {
    let text = serde_json::to_string(cfg).unwrap_or_default();
    let _ = writeln!(err, "{name}: {text}");
}

fn wio(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::GenMdp(a) => {
            echo_config(err, "gen-mdp", &a);
            gen_mdp(&a)
        }
        Command::CalibrateRisk(a) => {
            echo_config(err, "calibrate-risk", &a);
            let spec = RiskSpec::new(a.epsilon, a.theta)?;
            let cal = if a.optimistic {
                calibrate_optimistic(&spec, DEFAULT_TOL)?
            } else {
                calibrate_pessimistic(&spec, DEFAULT_TOL)?
            };
            let _ = writeln!(err, "critical quantile: {}", format_number(cal.eta));
            writeln!(out, "{}", format_number(cal.threshold)).map_err(wio)
        }
        Command::Solve(a) => solve(&a, out, err),
        Command::EvalPolicy(a) => {
            echo_config(err, "eval-policy", &a);
            eval_policy(&a, out)
        }
        Command::RunExperiment(a) => run_experiment(&a, out, err),
        Command::TDemo(a) => {
            let mut cfg = match &a.config {
                Some(p) => read_json::<TDemoConfig>(p)?,
                None => TDemoConfig::default(),
            };
            if let Some(v) = &a.dofs {
                cfg.dofs = v.clone();
            }
            if let Some(v) = &a.shifts {
                cfg.shifts = v.clone();
            }
            if let Some(v) = a.epsilon {
                cfg.epsilon = v;
            }
            if let Some(v) = a.n_train {
                cfg.n_train = v;
            }
            if let Some(v) = a.n_test {
                cfg.n_test = v;
            }
            if let Some(n) = a.seeds {
                cfg.seeds = (0..n).collect();
            }
            echo_config(err, "t-demo", &cfg);
            let csv = t_demo_csv(&t_demo(&cfg)?);
            if let Some(p) = &a.out {
                write_atomic(p, csv.as_bytes())?;
            }
            write!(out, "{csv}").map_err(wio)
        }
        Command::Bench(a) => {
            let mut cfg = match &a.config {
                Some(p) => read_json::<BenchConfig>(p)?,
                None => BenchConfig::default(),
            };
            if let Some(v) = &a.sizes {
                cfg.sizes = v.clone();
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.tolerance {
                cfg.adlpmm.tolerance = v;
            }
            if let Some(v) = a.max_iterations {
                cfg.adlpmm.max_iterations = v;
            }
            if a.time_limit.is_some() {
                cfg.adlpmm.time_limit_seconds = a.time_limit;
            }
            if let Some(w) = a.proximal_weight {
                cfg.adlpmm.proximal_weight = w.into();
            }
            echo_config(err, "bench", &cfg);
            let csv = bench_csv(&solver_bench(&cfg)?);
            if let Some(p) = &a.out {
                write_atomic(p, csv.as_bytes())?;
            }
            write!(out, "{csv}").map_err(wio)
        }
    }
}

fn gen_mdp(a: &GenMdpArgs) -> Result<()> {
    let (mdp, reward) = if a.machine {
        let gt = gen_machine_replacement(a.states, a.gamma, &RewardProfile::stand_in(a.states.max(1)))?;
        (gt.mdp, gt.reward)
    } else {
        let mdp = gen_random_mdp(a.states, a.actions, a.gamma, a.seed)?;
        let reward = gen_reward_truth(a.states, a.actions, a.seed.wrapping_add(1))?;
        (mdp, reward)
    };
    write_json(&a.out, &mdp)?;
    if let Some(path) = &a.reward_out {
        let mut doc = RewardDocument::from_reference(&reward);
        if let Some(n) = a.samples {
            doc.samples = Some(sample_mvn(&reward, n, a.seed.wrapping_add(2))?.to_rows());
        }
        write_json(path, &doc)?;
    }
    Ok(())
}

fn solve(a: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let spec = parse_model(&a.model)?;
    let mut choice = match &a.solver_config {
        Some(p) => read_json::<SolverChoice>(p)?,
        None => SolverChoice::default(),
    };
    choice.kind = match a.solver {
        SolverArg::Adlpmm => SolverKind::Adlpmm,
        SolverArg::Fw => SolverKind::Fw,
    };
    if let Some(t) = a.tolerance {
        choice.adlpmm.tolerance = t;
    }
    if let Some(m) = a.max_iterations {
        choice.adlpmm.max_iterations = m;
    }
    echo_config(
        err,
        "solve",
        &serde_json::json!({ "args": a, "model": spec, "solver": choice }),
    );
    let mdp: MdpInstance = read_json(&a.mdp)?;
    let reward_doc: RewardDocument = read_json(&a.reward)?;
    let samples = reward_doc.sample_matrix()?;
    let base = base_problem(mdp, reward_doc.reference()?)?;
    let result = solve_model(&spec, &base, samples.as_ref(), &choice);
    let doc = match &result {
        Ok(r) => SolveDocument::from(r),
        Err(Error::NotConverged { best, .. }) => SolveDocument::from(best.as_ref()),
        Err(_) => return result.map(|_| ()),
    };
    let text = serde_json::to_string_pretty(&doc).expect("document serializes");
    match &a.out {
        Some(p) => {
            write_atomic(p, format!("{text}\n").as_bytes())?;
            writeln!(out, "objective {}", format_number(doc.objective)).map_err(wio)?;
        }
        None => writeln!(out, "{text}").map_err(wio)?,
    }
    result.map(|_| ())
}

/// Occupancy from a result document, a `{"policy": ...}` object or a bare
/// policy matrix.
fn load_occupancy(path: &Path, mdp: Option<&Path>) -> Result<OccupancyMeasure> {
    let value: serde_json::Value = read_json(path)?;
    let bad = |msg: String| Error::invalid(format!("{}: {msg}", path.display()));
    if let Some(x) = value.get("x") {
        let x: Vec<f64> = serde_json::from_value(x.clone()).map_err(|e| bad(e.to_string()))?;
        return Ok(OccupancyMeasure(DVector::from_vec(x)));
    }
    let rows = value.get("policy").cloned().unwrap_or(value);
    let rows: Vec<Vec<f64>> = serde_json::from_value(rows).map_err(|e| bad(e.to_string()))?;
    let policy = Policy::new(rows)?;
    let mdp_path = mdp.ok_or_else(|| Error::invalid("a policy without occupancy needs --mdp"))?;
    let mdp: MdpInstance = read_json(mdp_path)?;
    occupancy_of_policy(&mdp, &policy)
}

fn eval_policy(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let x = load_occupancy(&a.policy, a.mdp.as_deref())?;
    let truth = read_json::<RewardDocument>(&a.truth)?.reference()?;
    for (metric, value) in evaluate_policy_true(&x.clamped(), &truth, &standard_metrics(&a.thresholds))? {
        writeln!(out, "{metric} {}", format_number(value)).map_err(wio)?;
    }
    Ok(())
}

fn run_experiment(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut cfg: ExperimentConfig = read_json(&a.config)?;
    if let Some(dir) = &a.out {
        cfg.output = Some(dir.clone());
    }
    let dir = cfg
        .output
        .clone()
        .ok_or_else(|| Error::invalid("no output directory: pass --out or set `output`"))?;
    cfg.validate()?;
    echo_config(err, "run-experiment", &cfg);
    create_dir(&dir)?;
    write_json(&dir.join("config.json"), &cfg)?;
    match cfg.experiment {
        ExperimentKind::Simulation | ExperimentKind::MachineReplacement => {
            let res = run_pipeline(&cfg)?;
            write_atomic(&dir.join("results.csv"), res.results_csv().as_bytes())?;
            write_atomic(&dir.join("summary.csv"), res.summary_csv().as_bytes())?;
            write_atomic(&dir.join("occupancies.jsonl"), res.occupancies_jsonl().as_bytes())?;
            write!(out, "{}", res.summary_csv()).map_err(wio)
        }
        ExperimentKind::TDemo => {
            let csv = t_demo_csv(&t_demo(&cfg.t_demo)?);
            write_atomic(&dir.join("t_demo.csv"), csv.as_bytes())?;
            write!(out, "{csv}").map_err(wio)
        }
        ExperimentKind::SolverBench => {
            let csv = bench_csv(&solver_bench(&cfg.bench)?);
            write_atomic(&dir.join("bench.csv"), csv.as_bytes())?;
            write!(out, "{csv}").map_err(wio)
        }
    }
}
