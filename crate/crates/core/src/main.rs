use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crnas::bench::{
    check_derivatives, run_experiment, sample_initial_points, ExperimentConfig,
};
use crnas::biomodels::{as_conic_program, Dataset, ModelKind, ModelParams};
use crnas::datagen::{generate_dataset, stream_rng, RangeTable, DEFAULT_X0};
use crnas::solver::{solve, Method, SolverConfig};
use crnas::{CrnasError, Result};

/// Cubic-regularized affine-scaling Newton toolkit.
#[derive(Parser)]
#[command(name = "crnas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Fit one dataset from one random start.
    Solve(SolveArgs),
    /// Run a multi-start experiment described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
    /// Finite-difference certification of every model oracle.
    CheckDerivatives {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, default_value = "phenopop")]
    model: ModelKind,
    #[arg(long = "S", default_value_t = 1)]
    s: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long = "X0", default_value_t = DEFAULT_X0)]
    x0: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write flat `t,d,r,x` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Read the dataset from JSON instead of simulating it.
    #[arg(long)]
    data_file: Option<PathBuf>,
    #[arg(long, default_value = "crnas")]
    solver: Method,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long = "M0", default_value_t = 1.0)]
    m0: f64,
    #[arg(long, default_value_t = 1e-8)]
    eta: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

fn exit_code(e: &CrnasError) -> u8 {
    match e {
        CrnasError::Config(_) | CrnasError::DimensionMismatch { .. } | CrnasError::Contract(_) => 2,
        CrnasError::Infeasible(_) | CrnasError::FullyDetermined { .. } => 3,
        CrnasError::Domain { .. } | CrnasError::Io(_) => 1,
    }
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    generate_dataset(args.model, args.s, args.x0, args.seed, args.index)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    match &args.out {
        Some(path) => data.write_json(path)?,
        None => println!("{}", data.to_json()?),
    }
    if let Some(path) = &args.csv {
        data.write_csv(std::fs::File::create(path)?)?;
    }
    Ok(())
}

fn solve_one(args: SolveArgs) -> Result<()> {
    let data = match &args.data_file {
        Some(path) => Dataset::read_json(path)?,
        None => load_data(&args.data)?,
    };
    let config = SolverConfig {
        alpha: args.alpha,
        m0: args.m0,
        eta: args.eta,
        epsilon: args.epsilon,
        max_iter: args.max_iter,
        ..Default::default()
    };
    config.validate()?;
    let table = RangeTable::standard(data.model, data.s, data.x0)?;
    let program = as_conic_program(&data, &table.bounds_as_pairs())?;
    let mut rng = stream_rng(args.data.seed, u64::MAX - args.data.index);
    let start = sample_initial_points(&table, &program, 1, &mut rng)?.remove(0);
    let report = solve(&program, &start, &config, args.solver)?;
    let estimate =
        ModelParams::from_vector(data.model, data.s, data.x0, &program.to_original(&report.theta))?;
    let out = json!({
        "solver": args.solver,
        "objective": report.objective,
        "iterations": report.iterations,
        "termination": report.termination,
        "wall_time_s": report.wall_time_s,
        "fosp": report.fosp(),
        "sosp": report.sosp(),
        "estimate": estimate,
        "truth": data.true_params,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn bench(path: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&path)?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CrnasError::Config(e.to_string()))?;
    let results = run_experiment(&config)?;
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    let (csv, json) = results.export(&dir)?;
    for a in &results.aggregates {
        println!(
            "dataset {:>3} {:>5}: best {:>12.4e} iterations {:>4} time {:.3}s{}",
            a.dataset_id,
            a.solver.to_string(),
            a.best_value.unwrap_or(f64::NAN),
            a.iterations_to_best.unwrap_or(0),
            a.total_time_s,
            a.relative_likelihood.map(|r| format!(" RL {r:.6}")).unwrap_or_default()
        );
    }
    eprintln!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn derivatives(points: usize, seed: u64, tolerance: f64) -> Result<bool> {
    let mut all = true;
    for model in [ModelKind::PhenoPop, ModelKind::BirthDeath, ModelKind::Logistic] {
        for s in [1, 2] {
            let c = check_derivatives(model, s, points, seed)?;
            let ok = c.passes(tolerance);
            all &= ok;
            println!(
                "{:<9} S={} points={} gradient {:.2e} hessian {:.2e} {}",
                model.to_string(),
                s,
                c.points,
                c.max_gradient_error,
                c.max_hessian_error,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Solve(a) => solve_one(a),
        Command::Bench { config } => bench(config),
        Command::CheckDerivatives {
            points,
            seed,
            tolerance,
        } => match derivatives(points, seed, tolerance) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
