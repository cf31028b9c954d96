use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gdalloc::experiments::{
    generate_batch, generate_instance, run_comparison, run_robustness, ComparisonConfig,
    DegreeMode, DistKind, GeneratorConfig, RobustnessConfig,
};
use gdalloc::planner::{
    compute_z_flow, default_z_flow_tolerance, plan_for, save_plan, PlanVariant,
};
use gdalloc::policies::PolicyKind;
use gdalloc::simulator::{
    default_cap, dp_optimal_expected, episode_offline_optimum, random_upper_bound,
    simulate_episode, wald_check, write_episode_csv, EpisodeRow, SimError,
};
use gdalloc::{load_instance, save_instance, seeding, Instance, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Guard(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Guard(_) => 4,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser)]
#[command(name = "gdalloc", version, about = "Guaranteed-delivery ad allocation: planning, simulation and evaluation")]
struct Cli {
    /// Worker threads for parallel batches (defaults to all cores).
    #[arg(long, global = true, env = "GDALLOC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Compute a delivery plan and the traffic summary for an instance.
    Plan(PlanArgs),
    /// Run one policy on sampled user sequences.
    Simulate(SimulateArgs),
    /// Compare policies on generated or given instances.
    Compare(CompareArgs),
    /// Plan from a biased forecast and measure the extra consumption.
    Robustness(RobustnessArgs),
    /// Print Z_flow, the optimal online expectation and the random-policy bound.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Random,
    Gauss,
}

#[derive(Clone, Copy, ValueEnum)]
enum DegreeArg {
    Exact,
    Uniform,
}

#[derive(Args, Clone)]
struct GraphArgs {
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Average user-type degree.
    #[arg(long, default_value_t = 5)]
    deg: usize,
    #[arg(long, default_value_t = 50)]
    w_lo: u64,
    #[arg(long, default_value_t = 100)]
    w_hi: u64,
    #[arg(long, value_enum, default_value = "random")]
    dist: DistArg,
    #[arg(long, value_enum, default_value = "exact")]
    degree_mode: DegreeArg,
}

impl GraphArgs {
    fn config(&self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            m: self.m,
            n: self.n,
            avg_degree: self.deg,
            demand_range: (self.w_lo, self.w_hi),
            dist_kind: match self.dist {
                DistArg::Random => DistKind::RandomNormalization,
                DistArg::Gauss => DistKind::GaussPerturbation,
            },
            degree_mode: match self.degree_mode {
                DegreeArg::Exact => DegreeMode::ExactPerType,
                DegreeArg::Uniform => DegreeMode::UniformEdges,
            },
            seed,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout if omitted).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    instance: PathBuf,
    /// standard, representative or multiple:<k>.
    #[arg(long, default_value = "standard")]
    variant: String,
    /// Expected total traffic, to report per-type surplus or deficit.
    #[arg(long)]
    forecast: Option<f64>,
    /// Plan JSON output file.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    instance: PathBuf,
    #[arg(long, default_value = "fb-greedy")]
    policy: String,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Episode cap in users (defaults to 1000 × Ẑ).
    #[arg(long)]
    cap: Option<u64>,
    /// Also compute the offline optimum of every sequence.
    #[arg(long)]
    offline: bool,
    /// Episode CSV output file.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Instance files; instances are generated when none are given.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value = "fb-greedy,random,dg,pg,hwm")]
    policies: String,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON output file.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-instance plot-data CSV output file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-episode CSV output file.
    #[arg(long)]
    episodes_csv: Option<PathBuf>,
}

#[derive(Args)]
struct RobustnessArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value = "fb-greedy")]
    policy: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON output file.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    instance: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::Oracle(a) => cmd_oracle(a),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or_else(|| {
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        seeding::sub_seed(nanos, "default-seed", &[])
    });
    eprintln!("seed: {seed}");
    seed
}

fn read_instance(path: &Path) -> Result<Instance, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_instance(&bytes).map_err(|e: ModelError| usage(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => io::stdout().write_all(bytes).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_output(Some(path), bytes)
}

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed);
    let generated = generate_instance(&a.graph.config(seed)).map_err(usage)?;
    eprintln!("repaired campaigns: {}", generated.repairs);
    write_output(a.out.as_deref(), &save_instance(&generated.instance))
}

fn cmd_plan(a: PlanArgs) -> Result<(), CliError> {
    let instance = read_instance(&a.instance)?;
    let variant: PlanVariant = a.variant.parse().map_err(usage)?;
    let plan = plan_for(&instance, variant).map_err(usage)?;
    let thresholds = plan.thresholds(&instance);
    println!("variant: {}", plan.variant);
    println!("z_hat: {}", plan.z_hat);
    println!("z_flow: {}", plan.z_flow);
    println!("total_demand: {}", instance.total_demand());
    println!("thresholds: {thresholds:?}");
    if let Some(forecast) = a.forecast {
        // Users of each type beyond the threshold are free for other use;
        // a negative value is a shortfall against the plan.
        let balance: Vec<f64> = thresholds
            .iter()
            .enumerate()
            .map(|(j, &t)| forecast * instance.prob(j) - t as f64)
            .collect();
        println!("forecast: {forecast}");
        println!("surplus_by_type: {balance:?}");
        println!("surplus_total: {}", forecast - plan.z_hat as f64);
    }
    if let Some(out) = &a.out {
        write_file(out, &save_plan(&plan))?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let instance = read_instance(&a.instance)?;
    let policy: PolicyKind = a.policy.parse().map_err(usage)?;
    let seed = resolve_seed(a.seed);
    let standard = plan_for(&instance, PlanVariant::Standard).map_err(usage)?;
    let plan = match policy.plan_variant() {
        Some(PlanVariant::Standard) | None => standard.clone(),
        Some(v) => plan_for(&instance, v).map_err(usage)?,
    };
    let cap = a.cap.unwrap_or_else(|| default_cap(standard.z_hat));
    let results: Vec<_> = {
        use rayon::prelude::*;
        (0..a.episodes)
            .into_par_iter()
            .map(|k| {
                let episode = seeding::sub_seed(seed, "episode", &[0, k as u64]);
                let record = simulate_episode(&instance, policy, Some(&plan), episode, cap);
                let t_star = a
                    .offline
                    .then(|| episode_offline_optimum(&instance, episode, cap).map(|o| o.t_star));
                (episode, record, t_star)
            })
            .collect()
    };
    let mut rows = Vec::with_capacity(results.len());
    let mut records = Vec::new();
    let mut failed = 0;
    for (episode, record, t_star) in &results {
        match record {
            Ok(r) => records.push(r.clone()),
            Err(SimError::CapExceeded { .. }) => failed += 1,
            Err(e) => return Err(CliError::Guard(e.to_string())),
        }
        rows.push(EpisodeRow {
            instance_id: 0,
            policy: policy.to_string(),
            seed: *episode,
            consumption: record.as_ref().ok().map(|r| r.consumption),
            t_star: t_star.as_ref().and_then(|t| t.as_ref().ok().copied()),
            passthrough: record.as_ref().ok().map(|r| r.passthrough),
        });
    }
    println!("policy: {policy}");
    println!("z_hat: {}", standard.z_hat);
    println!("episodes: {} completed, {failed} over cap", records.len());
    if !records.is_empty() {
        let mean = records.iter().map(|r| r.consumption as f64).sum::<f64>() / records.len() as f64;
        println!("mean_consumption: {mean}");
        if a.offline {
            let pairs: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| Some((r.consumption? as f64, r.t_star? as f64)))
                .collect();
            let (used, opt): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Some((ratio, se)) = gdalloc::experiments::paired_ratio(&used, &opt) {
                println!("mean_t_star: {}", opt.iter().sum::<f64>() / opt.len() as f64);
                println!("competitive_ratio: {ratio} (se {se})");
            }
        }
        let worst = wald_check(&records, instance.probs())
            .into_iter()
            .map(|r| r.z_score.abs())
            .fold(0.0, f64::max);
        println!("wald_max_abs_z: {worst}");
    }
    if let Some(out) = &a.out {
        let mut buf = Vec::new();
        write_episode_csv(&mut buf, &rows).map_err(|e| CliError::Guard(e.to_string()))?;
        write_file(out, &buf)?;
    }
    if records.is_empty() && failed > 0 {
        return Err(CliError::Guard(format!("all {failed} episodes exceeded the cap of {cap} users")));
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), CliError> {
    let policies = PolicyKind::parse_list(&a.policies).map_err(usage)?;
    if policies.is_empty() {
        return Err(usage("no policies given"));
    }
    let seed = resolve_seed(a.seed);
    let instances: Vec<Instance> = if a.inputs.is_empty() {
        let batch = generate_batch(&a.graph.config(seed), a.instances, seed).map_err(usage)?;
        let repairs: usize = batch.iter().map(|g| g.repairs).sum();
        eprintln!("generated {} instances, {repairs} repaired campaigns", batch.len());
        batch.into_iter().map(|g| g.instance).collect()
    } else {
        a.inputs.iter().map(|p| read_instance(p)).collect::<Result<_, _>>()?
    };
    let config = ComparisonConfig::new(policies, a.episodes, seed);
    let report = run_comparison(&instances, &config).map_err(usage)?;

    println!("{:<20} {:>10} {:>10} {:>21} {:>10} {:>7}", "policy", "ratio", "se", "range", "worst", "failed");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for s in &report.policies {
        let range = s
            .ratio_range
            .map_or("-".to_string(), |(lo, hi)| format!("[{lo:.4}, {hi:.4}]"));
        println!(
            "{:<20} {:>10} {:>10} {:>21} {:>10} {:>7}",
            s.policy,
            fmt(s.mean_ratio),
            fmt(s.mean_ratio_std_error),
            range,
            fmt(s.worst_sequence_ratio),
            s.failed_episodes
        );
    }
    if let Some(p) = &a.json {
        write_file(p, report.to_json().as_bytes())?;
    }
    if let Some(p) = &a.csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf).map_err(|e| CliError::Guard(e.to_string()))?;
        write_file(p, &buf)?;
    }
    if let Some(p) = &a.episodes_csv {
        let mut buf = Vec::new();
        write_episode_csv(&mut buf, &report.episodes).map_err(|e| CliError::Guard(e.to_string()))?;
        write_file(p, &buf)?;
    }
    Ok(())
}

fn cmd_robustness(a: RobustnessArgs) -> Result<(), CliError> {
    let instance = read_instance(&a.instance)?;
    let policy: PolicyKind = a.policy.parse().map_err(usage)?;
    let seed = resolve_seed(a.seed);
    let config = RobustnessConfig {
        policy,
        ..RobustnessConfig::new(a.delta, a.episodes, seed)
    };
    let report = run_robustness(&instance, &config).map_err(usage)?;
    if report.delta_capped {
        eprintln!("delta {} capped at {}", report.delta_requested, report.delta);
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| x.to_string());
    println!("delta: {}", report.delta);
    println!("delta_eff: {}", report.delta_eff);
    println!("z_hat: {} (forecast plan {})", report.z_hat_true, report.z_hat_forecast);
    println!("episodes: {} completed, {} failed", report.completed, report.failed);
    println!("ratio: {} (se {})", fmt(report.ratio), fmt(report.ratio_std_error));
    println!("bound: {}", fmt(report.bound));
    if let Some(p) = &a.out {
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        write_file(p, json.as_bytes())?;
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<(), CliError> {
    let instance = read_instance(&a.instance)?;
    println!("z_flow: {}", compute_z_flow(&instance, default_z_flow_tolerance(&instance)));
    match dp_optimal_expected::<f64>(&instance) {
        Ok(v) => println!("dp_optimal_expected: {v}"),
        Err(e) => println!("dp_optimal_expected: omitted ({e})"),
    }
    println!("random_upper_bound: {}", random_upper_bound::<f64>(&instance));
    Ok(())
}
