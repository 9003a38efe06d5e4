//! Rolling-horizon simulation: every step the facilitator forecasts,
//! waiting devices bid, the auctioneer clears and accepted devices commit
//! to their full cycle. A full-horizon optimal schedule serves as the
//! benchmark.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{backward_induction, make_bid, BidFunction};
use crate::domain::{run_cost, DeviceId, DeviceInstance, DeviceState, PopulationSpec, SupplyModel};
use crate::error::{Error, Result};
use crate::facilitator::{make_forecast, price_of_schedule, ForecastSeries};
use crate::market::clear;
use crate::optimizer::{solve_with, CoordinationWindow, Effort, ForecastMode, ScheduleSolution, SolverSettings};
use crate::scenario::{ScenarioInstance, SCHEMA_VERSION};

/// Cost-to-go monotonicity tolerance.
const CTG_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub mode: ForecastMode,
    pub noise_fraction: f64,
    pub prediction_horizon: usize,
    pub seed: u64,
    /// Effort of the per-step facilitator solves.
    pub effort: Effort,
    #[serde(skip, default = "SolverSettings::rolling")]
    pub rolling_solver: SolverSettings,
    #[serde(skip)]
    pub benchmark_solver: SolverSettings,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mode: ForecastMode::Optimistic,
            noise_fraction: 0.01,
            prediction_horizon: 96,
            seed: 0,
            effort: Effort::Relaxed,
            rolling_solver: SolverSettings::rolling(),
            benchmark_solver: SolverSettings::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self, scenario: &ScenarioInstance) -> Result<()> {
        if !(0.0..=crate::facilitator::MAX_NOISE_FRACTION).contains(&self.noise_fraction) {
            return Err(Error::contract(format!("noise fraction {} outside [0, 0.05]", self.noise_fraction)));
        }
        let max_d = scenario.profiles.iter().map(|p| p.duration()).max().unwrap_or(1);
        if self.prediction_horizon < max_d {
            return Err(Error::contract(format!(
                "prediction horizon {} shorter than the longest cycle ({max_d})",
                self.prediction_horizon
            )));
        }
        Ok(())
    }
}

/// What happened in one market interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub p_g: f64,
    pub price: f64,
    pub inflexible: f64,
    pub renewables: f64,
    /// Consumption of all running devices, including those started now.
    pub flex: f64,
    /// Forecast mean for the following step, if one was broadcast.
    pub forecast_mean_next: Option<f64>,
    pub forecast_std_next: Option<f64>,
    /// Starts per population.
    pub starts: Vec<u32>,
    pub bids: usize,
    pub balance_residual: f64,
    pub solver_gap: Option<f64>,
    pub fallback: bool,
}

/// Mutable simulation state between steps.
#[derive(Clone, Debug)]
pub struct WorldState {
    pub step: usize,
    pub devices: Vec<DeviceInstance>,
    /// Consumption locked in by running devices, per global step.
    pub committed: Vec<f64>,
    pub log: Vec<StepRecord>,
    pub forecasts: Vec<ForecastSeries>,
    pub record_forecasts: bool,
    pub stats: RunStats,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub fallback_windows: usize,
    pub padded_bids: usize,
    pub cost_to_go_checks: usize,
    pub cost_to_go_violations: usize,
    pub unbounded_gap_windows: usize,
}

impl WorldState {
    pub fn new(scenario: &ScenarioInstance) -> Self {
        WorldState {
            step: 0,
            devices: scenario.devices.clone(),
            committed: vec![0.0; scenario.horizon],
            log: Vec::with_capacity(scenario.horizon),
            forecasts: Vec::new(),
            record_forecasts: false,
            stats: RunStats::default(),
        }
    }

    /// Facilitator window for the current step: the current step plus the
    /// prediction horizon, cut at the end of the simulation.
    pub fn window(&self, scenario: &ScenarioInstance, ph: usize, mode: ForecastMode) -> CoordinationWindow {
        let t = self.step;
        let len = (ph + 1).min(scenario.horizon - t);
        let mut pops: Vec<PopulationSpec> =
            scenario.profiles.iter().map(|p| PopulationSpec::empty(p.clone(), len)).collect();
        for d in self.devices.iter().filter(|d| d.is_waiting()) {
            let pop = &mut pops[d.population];
            let rel = d.available_at.saturating_sub(t);
            if rel >= len {
                continue;
            }
            pop.availability_counts[rel] += 1;
            let dl = d.deadline - t;
            if dl <= len {
                pop.deadline_counts[dl] += 1;
            }
        }
        let s = &scenario.supply;
        CoordinationWindow {
            start_step: t,
            supply: SupplyModel {
                k: s.k,
                renewables: s.renewables[t..t + len].to_vec(),
                inflexible_load: s.inflexible_load[t..t + len].to_vec(),
                dt: s.dt,
            },
            populations: pops,
            committed_load: self.committed[t..t + len].to_vec(),
            mode,
        }
    }
}

fn step_seed(seed: u64, step: usize) -> u64 {
    // splitmix64 of the pair
    let mut z = seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Advances `world` by one market interval.
pub fn step(world: &mut WorldState, scenario: &ScenarioInstance, config: &SimulationConfig) -> Result<()> {
    let t = world.step;
    if t >= scenario.horizon {
        return Err(Error::contract("simulation already reached its horizon"));
    }
    let supply = &scenario.supply;
    let dt = supply.dt;

    let window = world.window(scenario, config.prediction_horizon, config.mode);
    let (forecast, solution, fallback) =
        match make_forecast(&window, config.noise_fraction, config.effort, &config.rolling_solver) {
            Ok((f, s)) => (f, s, false),
            Err(Error::InfeasibleWindow { .. }) if config.mode == ForecastMode::Pessimistic => {
                let relaxed = CoordinationWindow { mode: ForecastMode::Optimistic, ..window };
                let (f, s) = make_forecast(&relaxed, config.noise_fraction, config.effort, &config.rolling_solver)?;
                (f, s, true)
            }
            Err(e) => return Err(e),
        };
    if fallback {
        world.stats.fallback_windows += 1;
    }
    let solver_gap = solution.gap.is_finite().then_some(solution.gap);
    if solver_gap.is_none() {
        world.stats.unbounded_gap_windows += 1;
    }

    let bidders: Vec<&DeviceInstance> =
        world.devices.iter().filter(|d| d.is_waiting() && d.available_at <= t).collect();
    let bids: Vec<(BidFunction, usize, usize, bool)> = bidders
        .par_iter()
        .map(|d| {
            let prof = &scenario.profiles[d.population];
            let ls = d
                .latest_start(prof.duration())
                .filter(|ls| *ls >= t)
                .ok_or_else(|| Error::contract(format!("device {} missed its latest start", d.id)))?;
            let ctg = backward_induction(prof, &forecast, t, ls, dt)?;
            let bid = make_bid(d, prof, t, &ctg)?;
            Ok((bid, ctg.values.len().saturating_sub(1), ctg.monotonicity_violations(CTG_TOL), ctg.padded))
        })
        .collect::<Result<_>>()?;
    for (_, checks, violations, padded) in &bids {
        world.stats.cost_to_go_checks += checks;
        world.stats.cost_to_go_violations += violations;
        world.stats.padded_bids += *padded as usize;
    }
    let bids: Vec<BidFunction> = bids.into_iter().map(|b| b.0).collect();

    let inflexible = supply.inflexible_load[t];
    let renewables = supply.renewables[t];
    let committed_before = world.committed[t];
    let result = clear(&bids, inflexible, committed_before, renewables, supply.k, step_seed(config.seed, t));

    let mut starts = vec![0u32; scenario.population_count()];
    let mut new_first_step = 0.0;
    for id in &result.accepted {
        let dev = &mut world.devices[id.0 as usize];
        dev.begin(t)?;
        let prof = scenario.profiles[dev.population].steps();
        starts[dev.population] += 1;
        new_first_step += prof[0];
        for (i, p) in prof.iter().enumerate() {
            world.committed[t + i] += p;
        }
    }

    let price = result.clearing_price;
    for dev in world.devices.iter_mut() {
        if let DeviceState::Running { start } = dev.state {
            let prof = scenario.profiles[dev.population].steps();
            dev.paid += price * prof[t - start] * dt;
            if t + 1 - start == prof.len() {
                dev.finish()?;
            }
        }
    }

    let served = inflexible + committed_before + new_first_step;
    let balance_residual = (result.renewables_used + result.p_g_dispatched - served).abs();
    world.log.push(StepRecord {
        step: t,
        p_g: result.p_g_dispatched,
        price,
        inflexible,
        renewables,
        flex: world.committed[t],
        forecast_mean_next: forecast.means.first().copied(),
        forecast_std_next: forecast.stds.first().copied(),
        starts,
        bids: bids.len(),
        balance_residual,
        solver_gap,
        fallback,
    });
    if world.record_forecasts {
        world.forecasts.push(forecast);
    }
    world.step += 1;
    Ok(())
}

/// Runs the rolling loop over the whole horizon without the benchmark.
pub fn simulate(scenario: &ScenarioInstance, config: &SimulationConfig) -> Result<WorldState> {
    scenario.validate()?;
    config.validate(scenario)?;
    let mut world = WorldState::new(scenario);
    while world.step < scenario.horizon {
        step(&mut world, scenario, config)?;
    }
    Ok(world)
}

/// Full-horizon optimal schedule and the per-device costs it implies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub solution: ScheduleSolution,
    pub prices: Vec<f64>,
    /// Per device (indexed by id): start slot and run cost under the
    /// benchmark prices, matched earliest-deadline-first.
    pub assignments: Vec<DeviceAssignment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceAssignment {
    pub start: usize,
    pub cost: f64,
}

/// Exact effort reports [`Error::EffortExceeded`] (carrying the incumbent)
/// when the node budget runs out.
pub fn benchmark_optimal(scenario: &ScenarioInstance, effort: Effort, settings: &SolverSettings) -> Result<BenchmarkResult> {
    scenario.validate()?;
    let window = CoordinationWindow {
        start_step: 0,
        supply: scenario.supply.clone(),
        populations: (0..scenario.population_count()).map(|n| scenario.population_spec(n)).collect(),
        committed_load: vec![0.0; scenario.horizon],
        mode: ForecastMode::Optimistic,
    };
    let solution = solve_with(&window, effort, settings)?;
    let prices = price_of_schedule(&solution, &scenario.supply);
    let mut assignments = vec![DeviceAssignment { start: 0, cost: 0.0 }; scenario.devices.len()];
    for (n, sigma) in solution.sigma.iter().enumerate() {
        let prof = &scenario.profiles[n];
        let mut pending: Vec<&DeviceInstance> = scenario.devices_of(n).collect();
        pending.sort_by_key(|d| (d.available_at, d.id));
        let mut next = 0;
        let mut ready = BinaryHeap::new();
        for (t, &count) in sigma.iter().enumerate() {
            while next < pending.len() && pending[next].available_at <= t {
                ready.push(Reverse((pending[next].deadline, pending[next].id)));
                next += 1;
            }
            for _ in 0..count {
                let Reverse((_, id)) = ready
                    .pop()
                    .ok_or_else(|| Error::contract(format!("benchmark starts more devices than available at {t}")))?;
                let end = (t + prof.duration()).min(prices.len());
                let mut window_prices = prices[t..end].to_vec();
                window_prices.resize(prof.duration(), 0.0);
                assignments[id.0 as usize] = DeviceAssignment { start: t, cost: run_cost(prof, &window_prices, scenario.supply.dt)? };
            }
        }
        if !ready.is_empty() || next < pending.len() {
            return Err(Error::contract(format!("benchmark leaves devices of population {n} unscheduled")));
        }
    }
    Ok(BenchmarkResult { solution, prices, assignments })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkStart {
    pub step: usize,
    pub population: usize,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceOutcome {
    pub id: DeviceId,
    pub population: usize,
    pub available_at: usize,
    pub deadline: usize,
    pub start: Option<usize>,
    pub done: bool,
    pub paid: f64,
    pub optimal_start: usize,
    pub optimal_cost: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(flatten)]
    pub run: RunStats,
    pub max_balance_residual: f64,
    pub max_payment_rel_error: f64,
    pub max_rolling_gap: f64,
    pub mean_rolling_gap: f64,
    pub benchmark_gap: f64,
    pub benchmark_exact: bool,
    pub incomplete_devices: usize,
    pub late_devices: usize,
    pub clamped_deadlines: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub mode: ForecastMode,
    pub noise_fraction: f64,
    pub prediction_horizon: usize,
    pub seed: u64,
    pub population_names: Vec<String>,
    /// Devices per day and population; the reference for bulk starts.
    pub daily_counts: Vec<f64>,
    pub total_cost: f64,
    pub benchmark_cost: f64,
    /// `(total - benchmark) / benchmark`
    pub cost_gap: f64,
    pub steps: Vec<StepRecord>,
    pub benchmark_p_g: Vec<f64>,
    pub benchmark_prices: Vec<f64>,
    /// `starts[n][t]` realised starts.
    pub starts: Vec<Vec<u32>>,
    pub benchmark_starts: Vec<Vec<i64>>,
    pub devices: Vec<DeviceOutcome>,
    pub bulk_starts: Vec<BulkStart>,
    pub diagnostics: Diagnostics,
}

/// Default bulk-start threshold as a fraction of a population's daily count.
pub const BULK_START_FRACTION: f64 = 0.1;

/// Steps where one population starts more than `fraction` of its daily
/// device count at once.
pub fn detect_bulk_starts(report: &SimulationReport, fraction: f64) -> Vec<BulkStart> {
    bulk_starts_in(&report.starts, &report.daily_counts, fraction)
}

pub fn bulk_starts_in(starts: &[Vec<u32>], daily_counts: &[f64], fraction: f64) -> Vec<BulkStart> {
    let mut out = Vec::new();
    for t in 0..starts.first().map_or(0, Vec::len) {
        for (n, s) in starts.iter().enumerate() {
            if s[t] as f64 > fraction * daily_counts[n] {
                out.push(BulkStart { step: t, population: n, count: s[t] });
            }
        }
    }
    out
}

fn relative_gap(value: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        (value - reference) / reference
    } else if value <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Combines a finished rolling run with the benchmark into a report.
pub fn build_report(
    scenario: &ScenarioInstance,
    config: &SimulationConfig,
    world: &WorldState,
    bench: &BenchmarkResult,
) -> Result<SimulationReport> {
    let supply = &scenario.supply;
    let total_cost: f64 = world.log.iter().map(|r| supply.step_cost(r.p_g)).sum();
    let benchmark_cost = bench.solution.objective;
    let npop = scenario.population_count();

    let mut starts = vec![vec![0u32; scenario.horizon]; npop];
    for r in &world.log {
        for n in 0..npop {
            starts[n][r.step] = r.starts[n];
        }
    }
    let prices: Vec<f64> = world.log.iter().map(|r| r.price).collect();
    let mut max_payment_rel_error = 0.0f64;
    let mut incomplete = 0;
    let mut late = 0;
    let devices = world
        .devices
        .iter()
        .map(|d| {
            let prof = &scenario.profiles[d.population];
            let start = d.start_step();
            let done = matches!(d.state, DeviceState::Done { .. });
            if !done {
                incomplete += 1;
            }
            if let Some(s) = start {
                if s + prof.duration() > d.deadline || s < d.available_at {
                    late += 1;
                }
                if done {
                    let expected = run_cost(prof, &prices[s..s + prof.duration()], supply.dt)?;
                    let err = (d.paid - expected).abs() / expected.abs().max(1e-300);
                    if d.paid != expected {
                        max_payment_rel_error = max_payment_rel_error.max(err);
                    }
                }
            }
            let a = bench.assignments[d.id.0 as usize];
            Ok(DeviceOutcome {
                id: d.id,
                population: d.population,
                available_at: d.available_at,
                deadline: d.deadline,
                start,
                done,
                paid: d.paid,
                optimal_start: a.start,
                optimal_cost: a.cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let gaps: Vec<f64> = world.log.iter().filter_map(|r| r.solver_gap).collect();
    let daily_counts: Vec<f64> = (0..npop).map(|n| scenario.daily_count(n)).collect();
    let bulk_starts = bulk_starts_in(&starts, &daily_counts, BULK_START_FRACTION);
    let diagnostics = Diagnostics {
        run: world.stats.clone(),
        max_balance_residual: world.log.iter().map(|r| r.balance_residual).fold(0.0, f64::max),
        max_payment_rel_error,
        max_rolling_gap: gaps.iter().copied().fold(0.0, f64::max),
        mean_rolling_gap: if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 },
        benchmark_gap: if bench.solution.gap.is_finite() { bench.solution.gap } else { -1.0 },
        benchmark_exact: bench.solution.exact,
        incomplete_devices: incomplete,
        late_devices: late,
        clamped_deadlines: scenario.clamped_deadlines,
    };
    Ok(SimulationReport {
        schema_version: SCHEMA_VERSION,
        mode: config.mode,
        noise_fraction: config.noise_fraction,
        prediction_horizon: config.prediction_horizon,
        seed: config.seed,
        population_names: scenario.population_names.clone(),
        daily_counts,
        total_cost,
        benchmark_cost,
        cost_gap: relative_gap(total_cost, benchmark_cost),
        steps: world.log.clone(),
        benchmark_p_g: bench.solution.p_g.clone(),
        benchmark_prices: bench.prices.clone(),
        starts,
        benchmark_starts: bench.solution.sigma.clone(),
        devices,
        bulk_starts,
        diagnostics,
    })
}

/// Rolling simulation plus benchmark for one configuration.
pub fn run(scenario: &ScenarioInstance, config: &SimulationConfig) -> Result<SimulationReport> {
    let world = simulate(scenario, config)?;
    let bench = benchmark_optimal(scenario, Effort::Relaxed, &config.benchmark_solver)?;
    build_report(scenario, config, &world, &bench)
}

/// Same as [`run`] with a precomputed benchmark.
pub fn run_with_benchmark(
    scenario: &ScenarioInstance,
    config: &SimulationConfig,
    bench: &BenchmarkResult,
) -> Result<SimulationReport> {
    let world = simulate(scenario, config)?;
    build_report(scenario, config, &world, bench)
}
