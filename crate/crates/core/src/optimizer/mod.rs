//! Windowed optimal coordination of deferrable-load populations.
//!
//! Minimises the conventional generation cost `sum_t p_g[t]^2 / (2k) * dt`
//! over integer start counts per population and step, subject to power
//! balance, availability and deadline constraints. Starts are handled in
//! cumulative form internally, see [`relax`].

mod bnb;
mod relax;
mod search;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{PopulationSpec, SupplyModel};
use crate::error::{Error, Result};

use relax::{solve_relaxation, Bounds, Problem, RelaxSettings};
use search::{local_search, round_cumulative, IntSchedule};

/// Feasibility tolerance in kW.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    /// Devices whose deadline lies past the window end may stay unscheduled.
    Optimistic,
    /// Every device arriving in the window must start within it: over the
    /// last `D` steps cumulative starts equal cumulative arrivals.
    Pessimistic,
}

impl fmt::Display for ForecastMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForecastMode::Optimistic => "optimistic",
            ForecastMode::Pessimistic => "pessimistic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effort {
    /// Branch-and-bound to proven optimality.
    Exact,
    /// Relaxation, rounding and local search, with a certified gap.
    Relaxed,
}

#[derive(Clone, Debug)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub stationarity_tol: f64,
    pub max_nodes: usize,
    pub local_search_passes: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { max_iterations: 20_000, stationarity_tol: 1e-8, max_nodes: 200_000, local_search_passes: 200 }
    }
}

impl SolverSettings {
    /// Settings for the per-step rolling solves, where only the integer
    /// incumbent matters and the relaxation just seeds the rounding.
    pub fn rolling() -> Self {
        SolverSettings { max_iterations: 1_500, stationarity_tol: 1e-6, ..Default::default() }
    }

    fn relax(&self) -> RelaxSettings {
        RelaxSettings {
            max_iterations: self.max_iterations,
            stationarity_tol: self.stationarity_tol,
            rel_gap_tol: 1e-11,
        }
    }
}

/// One instance of the scheduling problem over `tau` steps starting at
/// global step `start_step`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationWindow {
    pub start_step: usize,
    /// Supply slice; its series have length `tau`.
    pub supply: SupplyModel,
    /// Populations restricted to the window, availability of length `tau`
    /// and deadlines of length `tau + 1`.
    pub populations: Vec<PopulationSpec>,
    /// Consumption already locked in by running devices, kW.
    pub committed_load: Vec<f64>,
    pub mode: ForecastMode,
}

impl CoordinationWindow {
    pub fn tau(&self) -> usize {
        self.supply.len()
    }

    fn check_shapes(&self) -> Result<()> {
        let tau = self.tau();
        self.supply.validate()?;
        if self.committed_load.len() != tau {
            return Err(Error::contract("committed load length differs from window length"));
        }
        if self.committed_load.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract("committed load must be finite and non-negative"));
        }
        for (n, p) in self.populations.iter().enumerate() {
            if p.availability_counts.len() != tau || p.deadline_counts.len() != tau + 1 {
                return Err(Error::contract(format!("population {n} series do not match window length {tau}")));
            }
        }
        Ok(())
    }

    /// Cumulative-start bounds per population, with the tail equalities of
    /// the pessimistic mode folded into the lower bound.
    fn bounds(&self) -> Result<Bounds> {
        let tau = self.tau();
        let mut lo = Vec::with_capacity(tau * self.populations.len());
        let mut hi = Vec::with_capacity(lo.capacity());
        for (n, pop) in self.populations.iter().enumerate() {
            let avail = pop.cumulative_availability();
            let mut need = pop.cumulative_deadline_bound();
            if self.mode == ForecastMode::Pessimistic {
                let tail = tau.saturating_sub(pop.profile.duration())..tau;
                need[tail.clone()].copy_from_slice(&avail[tail]);
            }
            for t in 0..tau {
                if need[t] > avail[t] {
                    return Err(Error::InfeasibleWindow {
                        start_step: self.start_step,
                        reason: format!(
                            "population {n} needs {} starts by window step {t} but only {} devices are available",
                            need[t], avail[t]
                        ),
                    });
                }
            }
            lo.extend(need.iter().map(|&v| v as f64));
            hi.extend(avail.iter().map(|&v| v as f64));
        }
        Ok(Bounds { lo, hi })
    }

    fn problem(&self) -> Result<Problem> {
        self.check_shapes()?;
        let bounds = self.bounds()?;
        let base_net = (0..self.tau())
            .map(|t| self.supply.inflexible_load[t] + self.committed_load[t] - self.supply.renewables[t])
            .collect();
        Ok(Problem {
            tau: self.tau(),
            profiles: self.populations.iter().map(|p| p.profile.steps().to_vec()).collect(),
            base_net,
            scale: self.supply.dt / self.supply.k,
            bounds,
        })
    }
}

/// Integer start counts and the generation they imply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    /// `sigma[n][t]`: starts of population `n` at window step `t`.
    pub sigma: Vec<Vec<i64>>,
    /// Conventional generation per window step, kW.
    pub p_g: Vec<f64>,
    pub objective: f64,
    /// Certified lower bound on the optimal objective.
    pub lower_bound: f64,
    /// `(objective - lower_bound) / lower_bound`, zero when proven optimal.
    pub gap: f64,
    pub exact: bool,
    pub nodes: usize,
}

impl ScheduleSolution {
    /// Recomputes `sum 0.5 * p_g^2 / k * dt`.
    pub fn recompute_objective(&self, supply: &SupplyModel) -> f64 {
        self.p_g.iter().map(|&g| supply.step_cost(g)).sum()
    }
}

fn relative_gap(value: f64, bound: f64) -> f64 {
    if value - bound <= 1e-12 * value.abs().max(1e-300) {
        0.0
    } else if bound > 0.0 {
        (value - bound) / bound
    } else {
        f64::INFINITY
    }
}

fn package(problem: &Problem, sched: &IntSchedule, lower_bound: f64, exact: bool, nodes: usize) -> ScheduleSolution {
    let objective = sched.objective(problem);
    let lower_bound = lower_bound.min(objective);
    ScheduleSolution {
        sigma: sched.starts(problem.tau),
        p_g: sched.net.iter().map(|v| v.max(0.0)).collect(),
        objective,
        lower_bound,
        gap: if exact { 0.0 } else { relative_gap(objective, lower_bound) },
        exact,
        nodes,
    }
}

/// Solves `window` with default [`SolverSettings`].
pub fn solve(window: &CoordinationWindow, effort: Effort) -> Result<ScheduleSolution> {
    solve_with(window, effort, &SolverSettings::default())
}

pub fn solve_with(window: &CoordinationWindow, effort: Effort, settings: &SolverSettings) -> Result<ScheduleSolution> {
    let problem = window.problem()?;
    let relax = settings.relax();
    if problem.bounds.lo == problem.bounds.hi {
        // no freedom at all, e.g. a window without devices
        let sched = IntSchedule::from_cumulative(&problem, problem.bounds.lo.iter().map(|&v| v as i64).collect());
        let v = sched.objective(&problem);
        return Ok(package(&problem, &sched, v, true, 0));
    }
    let root = solve_relaxation(&problem, &problem.bounds, None, &relax);
    let mut sched = IntSchedule::from_cumulative(&problem, round_cumulative(&root.x, &problem.bounds));
    local_search(&problem, &problem.bounds, &mut sched, settings.local_search_passes);
    match effort {
        Effort::Relaxed => Ok(package(&problem, &sched, root.lower_bound, false, 1)),
        Effort::Exact => {
            let out = bnb::branch_and_bound(&problem, &relax, settings.max_nodes, settings.local_search_passes, sched);
            if out.complete {
                Ok(package(&problem, &out.best, out.best_value, true, out.nodes))
            } else {
                let lb = out.lower_bound.max(root.lower_bound);
                Err(Error::EffortExceeded {
                    nodes: out.nodes,
                    incumbent: Box::new(package(&problem, &out.best, lb, false, out.nodes)),
                })
            }
        }
    }
}

/// Flexible demand at window step `t` implied by start counts `sigma`.
pub fn flex_power(sigma: &[Vec<i64>], populations: &[PopulationSpec], t: usize) -> f64 {
    sigma
        .iter()
        .zip(populations)
        .map(|(s, pop)| {
            let prof = pop.profile.steps();
            (0..prof.len().min(t + 1))
                .filter(|&i| t - i < s.len())
                .map(|i| s[t - i] as f64 * prof[i])
                .sum::<f64>()
        })
        .sum()
}

/// A constraint of the windowed problem that a schedule breaks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { detail: String },
    /// Negative start count.
    NegativeStarts { population: usize, step: usize, value: i64 },
    /// Fewer cumulative starts than devices whose deadline forces a start.
    DeadlineMissed { population: usize, step: usize, started: i64, required: u64 },
    /// More cumulative starts than devices available.
    AvailabilityExceeded { population: usize, step: usize, started: i64, available: u64 },
    /// Pessimistic tail: cumulative starts must equal cumulative arrivals.
    TailIncomplete { population: usize, step: usize, started: i64, available: u64 },
    NegativeGeneration { step: usize, p_g: f64 },
    PowerShortfall { step: usize, shortfall: f64 },
}

/// Checks every constraint of `window` against `solution`.
pub fn verify(solution: &ScheduleSolution, window: &CoordinationWindow) -> Vec<Violation> {
    let tau = window.tau();
    let mut out = Vec::new();
    if solution.p_g.len() != tau
        || solution.sigma.len() != window.populations.len()
        || solution.sigma.iter().any(|s| s.len() != tau)
    {
        out.push(Violation::Shape { detail: format!("solution does not cover {tau} steps for every population") });
        return out;
    }
    for (n, (sigma, pop)) in solution.sigma.iter().zip(&window.populations).enumerate() {
        let d = pop.profile.duration();
        let avail = pop.cumulative_availability();
        let mut dl_cum = vec![0u64; tau + 1];
        let mut acc = 0u64;
        for (t, c) in pop.deadline_counts.iter().enumerate().take(tau + 1) {
            acc += *c as u64;
            dl_cum[t] = acc;
        }
        let mut cum = 0i64;
        for t in 0..tau {
            if sigma[t] < 0 {
                out.push(Violation::NegativeStarts { population: n, step: t, value: sigma[t] });
            }
            cum += sigma[t];
            if cum > avail[t] as i64 {
                out.push(Violation::AvailabilityExceeded { population: n, step: t, started: cum, available: avail[t] });
            }
            if t + d <= tau && cum < dl_cum[t + d] as i64 {
                out.push(Violation::DeadlineMissed { population: n, step: t, started: cum, required: dl_cum[t + d] });
            }
            if window.mode == ForecastMode::Pessimistic && t + d >= tau && cum != avail[t] as i64 {
                out.push(Violation::TailIncomplete { population: n, step: t, started: cum, available: avail[t] });
            }
        }
    }
    for t in 0..tau {
        let pg = solution.p_g[t];
        if pg < -FEASIBILITY_TOL {
            out.push(Violation::NegativeGeneration { step: t, p_g: pg });
        }
        let demand = flex_power(&solution.sigma, &window.populations, t)
            + window.supply.inflexible_load[t]
            + window.committed_load[t];
        let shortfall = demand - pg - window.supply.renewables[t];
        if shortfall > FEASIBILITY_TOL {
            out.push(Violation::PowerShortfall { step: t, shortfall });
        }
    }
    out
}
