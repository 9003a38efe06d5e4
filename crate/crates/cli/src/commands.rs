use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fmbc_core::facilitator::MAX_NOISE_FRACTION;
use fmbc_core::{
    benchmark_optimal, run, Effort, ForecastMode, ProfileVariant, ScenarioConfig, ScenarioInstance, SimulationConfig,
    SolverSettings,
};

use crate::error::{CliError, Result};
use crate::output;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FMBC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "fmbc", version, about = "Forecast-mediated market-based control of deferrable loads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario file.
    Gen(GenArgs),
    /// Simulate the rolling market and compare against the optimal benchmark.
    Run(RunArgs),
    /// Solve the full-horizon benchmark only.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Optimistic,
    Pessimistic,
}

impl From<ModeArg> for ForecastMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Optimistic => ForecastMode::Optimistic,
            ModeArg::Pessimistic => ForecastMode::Pessimistic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EffortArg {
    Exact,
    Relaxed,
}

impl From<EffortArg> for Effort {
    fn from(e: EffortArg) -> Self {
        match e {
            EffortArg::Exact => Effort::Exact,
            EffortArg::Relaxed => Effort::Relaxed,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    Original,
    Modified,
}

impl From<VariantArg> for ProfileVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Original => ProfileVariant::Original,
            VariantArg::Modified => ProfileVariant::Modified,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Scenario configuration (JSON); overrides the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Devices of each appliance type per day.
    #[arg(long, default_value_t = 1000)]
    pub devices: u32,
    #[arg(long, default_value_t = 5)]
    pub days: u32,
    #[arg(long, value_enum, default_value_t = VariantArg::Original)]
    pub profiles: VariantArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scenario file to write.
    #[arg(long, short, default_value = "scenario.json")]
    pub out: PathBuf,
    /// Also write one CSV row per device.
    #[arg(long)]
    pub devices_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Optimistic)]
    pub mode: ModeArg,
    /// Forecast standard deviation as a fraction of the average price.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Prediction horizon in steps.
    #[arg(long, default_value_t = 96)]
    pub ph: usize,
    /// Seed of the market tie-break.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Effort of the per-step facilitator solves.
    #[arg(long, value_enum, default_value_t = EffortArg::Relaxed)]
    pub effort: EffortArg,
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out_dir: PathBuf,
    /// Run this many consecutive seeds concurrently, each in `seed-<n>/`.
    #[arg(long, default_value_t = 1)]
    pub repeat: u32,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = EffortArg::Relaxed)]
    pub effort: EffortArg,
    /// Branch-and-bound node budget for exact solves.
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out_dir: PathBuf,
}

pub fn execute(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<Vec<PathBuf>> {
    let config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            serde_json::from_str::<ScenarioConfig>(&text).map_err(|source| CliError::Json { path: path.clone(), source })?
        }
        None => ScenarioConfig::scaled(args.devices, args.days, args.profiles.into(), args.seed),
    };
    let scenario = ScenarioInstance::generate(&config)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    output::write_json(&args.out, &scenario)?;
    let mut written = vec![args.out.clone()];
    if let Some(csv) = &args.devices_csv {
        output::write_devices(csv, &scenario)?;
        written.push(csv.clone());
    }
    Ok(written)
}

fn simulation_config(args: &RunArgs, seed: u64) -> Result<SimulationConfig> {
    if !(0.0..=MAX_NOISE_FRACTION).contains(&args.noise) {
        return Err(CliError::Config(format!("--noise {} outside [0, {MAX_NOISE_FRACTION}]", args.noise)));
    }
    Ok(SimulationConfig {
        mode: args.mode.into(),
        noise_fraction: args.noise,
        prediction_horizon: args.ph,
        seed,
        effort: args.effort.into(),
        ..Default::default()
    })
}

fn run_one(scenario: &ScenarioInstance, args: &RunArgs, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let config = simulation_config(args, seed)?;
    let report = run(scenario, &config)?;
    output::write_run(dir, &report)
}

pub fn cmd_run(args: &RunArgs) -> Result<Vec<PathBuf>> {
    let scenario = output::read_scenario(&args.scenario)?;
    if args.repeat == 0 {
        return Err(CliError::Config("--repeat must be at least 1".into()));
    }
    if args.repeat == 1 {
        return run_one(&scenario, args, args.seed, &args.out_dir);
    }
    let seeds: Vec<u64> = (0..args.repeat as u64).map(|i| args.seed + i).collect();
    let results: Vec<Result<Vec<PathBuf>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let scenario = &scenario;
                let dir = args.out_dir.join(format!("seed-{seed}"));
                scope.spawn(move || run_one(scenario, args, seed, &dir))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut written = Vec::new();
    for r in results {
        written.extend(r?);
    }
    Ok(written)
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<Vec<PathBuf>> {
    let scenario = output::read_scenario(&args.scenario)?;
    let mut settings = SolverSettings::default();
    if let Some(n) = args.max_nodes {
        settings.max_nodes = n;
    }
    let bench = benchmark_optimal(&scenario, args.effort.into(), &settings)?;
    output::write_benchmark(&args.out_dir, &scenario, &bench)
}
