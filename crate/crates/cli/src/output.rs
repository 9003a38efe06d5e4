//! File formats. Series are CSV with a header row, summaries and scenarios
//! are JSON carrying a `schema_version`.

use std::fs;
use std::path::{Path, PathBuf};

use fmbc_core::scenario::SCHEMA_VERSION;
use fmbc_core::{BenchmarkResult, BulkStart, ScenarioInstance, SimulationReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv { path: path.to_path_buf(), source })
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let wrap = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_scenario(path: &Path) -> Result<ScenarioInstance> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let inst: ScenarioInstance =
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    if inst.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{}: schema version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            inst.schema_version
        )));
    }
    inst.validate()?;
    Ok(inst)
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// One row per device: `id, population, available_at, deadline`.
pub fn write_devices(path: &Path, scenario: &ScenarioInstance) -> Result<()> {
    let rows = scenario.devices.iter().map(|d| {
        vec![
            d.id.0.to_string(),
            scenario.population_names[d.population].clone(),
            d.available_at.to_string(),
            d.deadline.to_string(),
        ]
    });
    write_rows(path, &header(&["id", "population", "available_at", "deadline"]), rows)
}

/// `step, p_g, price, P_l, P_r, P_flex, forecast_mean_next`
pub fn write_timeseries(path: &Path, report: &SimulationReport) -> Result<()> {
    let rows = report.steps.iter().map(|s| {
        vec![
            s.step.to_string(),
            s.p_g.to_string(),
            s.price.to_string(),
            s.inflexible.to_string(),
            s.renewables.to_string(),
            s.flex.to_string(),
            s.forecast_mean_next.map(|v| v.to_string()).unwrap_or_default(),
        ]
    });
    write_rows(path, &header(&["step", "p_g", "price", "P_l", "P_r", "P_flex", "forecast_mean_next"]), rows)
}

/// Per population: starts, cumulative starts and the benchmark's
/// cumulative starts.
pub fn write_starts(path: &Path, report: &SimulationReport) -> Result<()> {
    let mut cols = vec!["step".to_string()];
    for name in &report.population_names {
        cols.push(format!("{name}_starts"));
        cols.push(format!("{name}_cumulative"));
        cols.push(format!("{name}_optimal_cumulative"));
    }
    let npop = report.population_names.len();
    let mut cum = vec![0u64; npop];
    let mut opt = vec![0i64; npop];
    let steps = report.starts.first().map_or(0, Vec::len);
    let rows: Vec<Vec<String>> = (0..steps)
        .map(|t| {
            let mut row = vec![t.to_string()];
            for n in 0..npop {
                cum[n] += report.starts[n][t] as u64;
                opt[n] += report.benchmark_starts[n][t];
                row.extend([report.starts[n][t].to_string(), cum[n].to_string(), opt[n].to_string()]);
            }
            row
        })
        .collect();
    write_rows(path, &cols, rows)
}

pub fn write_device_costs(path: &Path, report: &SimulationReport) -> Result<()> {
    let rows = report.devices.iter().map(|d| {
        vec![
            d.id.0.to_string(),
            report.population_names[d.population].clone(),
            d.available_at.to_string(),
            d.deadline.to_string(),
            d.start.map(|s| s.to_string()).unwrap_or_default(),
            d.paid.to_string(),
            d.optimal_start.to_string(),
            d.optimal_cost.to_string(),
        ]
    });
    let cols = ["id", "population", "available_at", "deadline", "start", "paid", "optimal_start", "optimal_cost"];
    write_rows(path, &header(&cols), rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub mode: String,
    pub noise_fraction: f64,
    pub prediction_horizon: usize,
    pub seed: u64,
    pub devices: usize,
    pub total_cost: f64,
    pub benchmark_cost: f64,
    /// `None` when the benchmark cost is zero but the run cost is not.
    pub gap_percent: Option<f64>,
    pub bulk_starts: Vec<BulkStart>,
    pub fallback_windows: usize,
    pub padded_bids: usize,
    pub max_rolling_gap: f64,
    pub mean_rolling_gap: f64,
    pub unbounded_gap_windows: usize,
    pub benchmark_gap: f64,
    pub cost_to_go_checks: usize,
    pub cost_to_go_violations: usize,
    pub max_balance_residual: f64,
    pub max_payment_rel_error: f64,
    pub incomplete_devices: usize,
    pub late_devices: usize,
    pub clamped_deadlines: usize,
}

impl RunSummary {
    pub fn from_report(report: &SimulationReport) -> Self {
        let d = &report.diagnostics;
        RunSummary {
            schema_version: SCHEMA_VERSION,
            mode: report.mode.to_string(),
            noise_fraction: report.noise_fraction,
            prediction_horizon: report.prediction_horizon,
            seed: report.seed,
            devices: report.devices.len(),
            total_cost: report.total_cost,
            benchmark_cost: report.benchmark_cost,
            gap_percent: report.cost_gap.is_finite().then_some(report.cost_gap * 100.0),
            bulk_starts: report.bulk_starts.clone(),
            fallback_windows: d.run.fallback_windows,
            padded_bids: d.run.padded_bids,
            max_rolling_gap: d.max_rolling_gap,
            mean_rolling_gap: d.mean_rolling_gap,
            unbounded_gap_windows: d.run.unbounded_gap_windows,
            benchmark_gap: d.benchmark_gap,
            cost_to_go_checks: d.run.cost_to_go_checks,
            cost_to_go_violations: d.run.cost_to_go_violations,
            max_balance_residual: d.max_balance_residual,
            max_payment_rel_error: d.max_payment_rel_error,
            incomplete_devices: d.incomplete_devices,
            late_devices: d.late_devices,
            clamped_deadlines: d.clamped_deadlines,
        }
    }
}

/// Files written by a simulation run.
pub fn write_run(dir: &Path, report: &SimulationReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = [dir.join("timeseries.csv"), dir.join("starts.csv"), dir.join("device_costs.csv"), dir.join("summary.json")];
    write_timeseries(&files[0], report)?;
    write_starts(&files[1], report)?;
    write_device_costs(&files[2], report)?;
    write_json(&files[3], &RunSummary::from_report(report))?;
    Ok(files.to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub schema_version: u32,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: Option<f64>,
    pub exact: bool,
    pub nodes: usize,
}

/// Start counts, generation and prices per step, plus per-device optimal
/// costs.
pub fn write_benchmark(dir: &Path, scenario: &ScenarioInstance, bench: &BenchmarkResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let sol = &bench.solution;
    let schedule = dir.join("benchmark_schedule.csv");
    let mut cols = vec!["step".to_string()];
    cols.extend(scenario.population_names.iter().map(|n| format!("{n}_starts")));
    cols.extend(["p_g".to_string(), "price".to_string()]);
    let rows = (0..sol.p_g.len()).map(|t| {
        let mut row = vec![t.to_string()];
        row.extend(sol.sigma.iter().map(|s| s[t].to_string()));
        row.extend([sol.p_g[t].to_string(), bench.prices[t].to_string()]);
        row
    });
    write_rows(&schedule, &cols, rows)?;

    let devices = dir.join("benchmark_devices.csv");
    let rows = scenario.devices.iter().map(|d| {
        let a = bench.assignments[d.id.0 as usize];
        vec![
            d.id.0.to_string(),
            scenario.population_names[d.population].clone(),
            d.available_at.to_string(),
            d.deadline.to_string(),
            a.start.to_string(),
            a.cost.to_string(),
        ]
    });
    write_rows(&devices, &header(&["id", "population", "available_at", "deadline", "optimal_start", "optimal_cost"]), rows)?;

    let summary = dir.join("benchmark_summary.json");
    write_json(
        &summary,
        &BenchmarkSummary {
            schema_version: SCHEMA_VERSION,
            objective: sol.objective,
            lower_bound: sol.lower_bound,
            gap: sol.gap.is_finite().then_some(sol.gap),
            exact: sol.exact,
            nodes: sol.nodes,
        },
    )?;
    Ok(vec![schedule, devices, summary])
}
