//! `banditpack` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or unreadable input, 3 infeasible
//! generator configuration, 4 solver failure, 5 instance too large for the oracle.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use banditpack::bench::{generate_instance, run_bench, BenchReport, GenerativeConfig};
use banditpack::oracle::exact_optimal_value;
use banditpack::packing::{run_packing, simulate, trajectory_rng};
use banditpack::relaxation::SolutionFile;
use banditpack::{solve_rlp, ArmModel, BanditInstance, Error, RelaxedSolution};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "banditpack", version, about = "Irrevocable packing heuristic for multi-play bandits")]
struct Cli {
    /// Worker threads (overrides BANDITPACK_THREADS; defaults to available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a coin-bandit instance from the generative family.
    Generate(GenerateArgs),
    /// Solve the relaxation and write the blended occupancies with their certificate.
    Solve(SolveArgs),
    /// Monte-Carlo evaluation of the packing heuristic.
    Simulate(SimulateArgs),
    /// Exact optimal value of a tiny instance.
    Oracle(OracleArgs),
    /// Generate, solve and simulate batches of instances.
    Bench(BenchArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long, default_value_t = 2)]
    m: u32,
    #[arg(long, default_value_t = 10)]
    groups: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha_min: f64,
    /// Defaults to min(0.35, 1/cv^2), the largest alpha for which cv is attainable.
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    reward_min: f64,
    #[arg(long, default_value_t = 2.0)]
    reward_max: f64,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long = "T")]
    horizon: usize,
    #[arg(long, value_parser = positive_f64)]
    cv: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    family: FamilyArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1e-6, value_parser = positive_f64)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trajectories: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-pull CSV of trajectory 0.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also write the summary JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// n=100, k=10, T=25 at cv 1 and 2.5; 10 instances x 1000 trajectories.
    Table1Small,
    /// The full 16-row grid; 100 instances x 3000 trajectories.
    Table1,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long, value_parser = positive_f64)]
    cv: Option<f64>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    trajectories: Option<u64>,
    #[arg(long, value_parser = positive_f64)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-instance CSV (stdout when omitted).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Aggregate JSON, one object per configuration.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    /// Maps library errors to exit codes; `solver` marks errors raised while solving.
    fn from_error(err: Error, solver: bool) -> Self {
        let code = match err {
            Error::InfeasibleCv { .. } => 3,
            Error::InstanceTooLarge(_) => 5,
            Error::InvalidBudget { .. } | Error::InvalidParameter(_) if solver => 4,
            _ => 2,
        };
        Failure { code, message: err.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<(BanditInstance, Vec<ArmModel>), Failure> {
    let instance = BanditInstance::from_json(&read_text(path)?)
        .map_err(|e| Failure::usage(format!("bad instance {}: {e}", path.display())))?;
    let arms = instance.build_arms().map_err(|e| Failure::from_error(e, false))?;
    Ok((instance, arms))
}

fn family_config(n: usize, k: usize, horizon: usize, cv: f64, family: &FamilyArgs) -> GenerativeConfig {
    let mut config = GenerativeConfig::table1(n, k, horizon, cv);
    config.m = family.m;
    config.groups = family.groups;
    config.alpha_range = (family.alpha_min, family.alpha_max.unwrap_or(config.alpha_range.1));
    config.reward_range = (family.reward_min, family.reward_max);
    config
}

fn cmd_generate(args: &GenerateArgs) -> CmdResult {
    let config = family_config(args.n, args.k, args.horizon, args.cv, &args.family);
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let instance = generate_instance(&config, args.seed).map_err(|e| Failure::from_error(e, false))?;
    write_text(&args.out, &instance.to_json())?;
    println!(
        "wrote {} coin arms (k={}, T={}, cv={}, seed={}) to {}",
        instance.num_arms(),
        instance.budget_k,
        instance.horizon,
        args.cv,
        args.seed,
        args.out.display()
    );
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> CmdResult {
    let (instance, arms) = load_instance(&args.instance)?;
    let solution =
        solve_rlp(&arms, instance.budget_k, instance.horizon, args.epsilon).map_err(|e| Failure::from_error(e, true))?;
    let text = serde_json::to_string(&solution.to_file()).expect("solution serializes");
    write_text(&args.out, &text)?;
    println!(
        "value={:.9} dual={:.9} pulls={:.6}/{} alpha={:.6} lambda=[{:.9}, {:.9}] iterations={}{}",
        solution.primal_value(),
        solution.dual_value,
        solution.total_pulls(),
        instance.budget_k * instance.horizon,
        solution.alpha_blend,
        solution.lambda_infeas,
        solution.lambda_feas,
        solution.iterations,
        if solution.is_unconstrained() { " (budget not binding)" } else { "" }
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let (instance, arms) = load_instance(&args.instance)?;
    let file: SolutionFile = serde_json::from_str(&read_text(&args.solution)?)
        .map_err(|e| Failure::usage(format!("bad solution {}: {e}", args.solution.display())))?;
    let solution = RelaxedSolution::from_file(&file, &arms).map_err(|e| Failure::from_error(e, false))?;
    if solution.tables.iter().any(|t| t.horizon() != instance.horizon) {
        return Err(Failure::usage("solution horizon does not match the instance"));
    }
    let (k, horizon) = (instance.budget_k, instance.horizon);

    let stats = simulate(&arms, &solution, k, horizon, args.trajectories as usize, args.seed);
    let summary = serde_json::to_string(&stats.summary()).expect("summary serializes");
    println!("{summary}");
    if let Some(out) = &args.out {
        write_text(out, &summary)?;
    }

    if let Some(path) = &args.log {
        let run = run_packing(&arms, &solution, k, horizon, &mut trajectory_rng(args.seed, 0));
        let mut writer =
            csv::Writer::from_path(path).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
        for record in run.pull_log.iter().flatten() {
            writer.serialize(record).map_err(|e| Failure::usage(e.to_string()))?;
        }
        writer.flush().map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> CmdResult {
    let (instance, arms) = load_instance(&args.instance)?;
    let j_star =
        exact_optimal_value(&arms, instance.budget_k, instance.horizon).map_err(|e| Failure::from_error(e, false))?;
    println!("{}", serde_json::json!({ "j_star": j_star }));
    Ok(())
}

#[derive(Serialize)]
struct CsvRow {
    cv: f64,
    n: usize,
    k: usize,
    #[serde(rename = "T")]
    horizon: usize,
    instance_seed: u64,
    mean_reward: f64,
    std_err: f64,
    dual_bound: f64,
    ratio: f64,
}

fn bench_configs(args: &BenchArgs) -> Result<Vec<GenerativeConfig>, Failure> {
    let grid: Vec<(usize, usize, usize, f64)> = match args.preset {
        Some(Preset::Table1Small) => vec![(100, 10, 25, 1.0), (100, 10, 25, 2.5)],
        Some(Preset::Table1) => {
            let mut rows = Vec::new();
            for cv in [1.0, 2.5] {
                for (n, k) in [(500, 50), (500, 100), (100, 10), (100, 20)] {
                    for horizon in [25, 40] {
                        rows.push((n, k, horizon, cv));
                    }
                }
            }
            rows
        }
        None => match (args.n, args.k, args.horizon, args.cv) {
            (Some(n), Some(k), Some(t), Some(cv)) => vec![(n, k, t, cv)],
            _ => return Err(Failure::usage("bench needs --preset or all of --n --k --T --cv")),
        },
    };
    let (default_instances, default_trajectories) = match args.preset {
        Some(Preset::Table1) => (100, 3000),
        _ => (10, 1000),
    };

    grid.into_iter()
        .map(|(n, k, horizon, cv)| {
            let mut config = family_config(args.n.unwrap_or(n), args.k.unwrap_or(k), horizon, cv, &args.family);
            config.instances = args.instances.unwrap_or(default_instances);
            config.trajectories = args.trajectories.map_or(default_trajectories, |t| t as usize);
            config.base_seed = args.seed;
            if let Some(eps) = args.epsilon {
                config.epsilon = eps;
            }
            config.validate().map_err(|e| Failure::usage(e.to_string()))?;
            Ok(config)
        })
        .collect()
}

fn cmd_bench(args: &BenchArgs) -> CmdResult {
    let configs = bench_configs(args)?;
    let mut reports: Vec<BenchReport> = Vec::with_capacity(configs.len());
    for config in &configs {
        let report = run_bench(config).map_err(|e| Failure::from_error(e, true))?;
        eprintln!(
            "cv={} n={} k={} T={}: performance {:.4} +/- {:.4} over {} instances",
            config.cv,
            config.n,
            config.k,
            config.horizon,
            report.aggregate_ratio,
            report.confidence_half_width,
            config.instances
        );
        reports.push(report);
    }

    let sink: Box<dyn std::io::Write> = match &args.csv {
        Some(path) => Box::new(
            fs::File::create(path).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    for report in &reports {
        let c = &report.config;
        for row in &report.per_instance {
            writer
                .serialize(CsvRow {
                    cv: c.cv,
                    n: c.n,
                    k: c.k,
                    horizon: c.horizon,
                    instance_seed: row.instance_seed,
                    mean_reward: row.mean_reward,
                    std_err: row.std_err,
                    dual_bound: row.dual_bound,
                    ratio: row.ratio,
                })
                .map_err(|e| Failure::usage(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| Failure::usage(e.to_string()))?;

    if let Some(path) = &args.json {
        let rows: Vec<_> = reports.iter().map(BenchReport::summary_row).collect();
        write_text(path, &serde_json::to_string_pretty(&rows).expect("rows serialize"))?;
    }
    Ok(())
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(n) = flag {
        return if n == 0 { Err(Failure::usage("--threads must be positive")) } else { Ok(Some(n)) };
    }
    match std::env::var("BANDITPACK_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::usage(format!("BANDITPACK_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> CmdResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::usage(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
