//! The facilitator turns the optimal schedule of the current window into a
//! probabilistic price forecast for the steps after the current one.

use serde::{Deserialize, Serialize};

use crate::agent::PriceDistribution;
use crate::domain::SupplyModel;
use crate::error::{Error, Result};
use crate::optimizer::{solve_with, CoordinationWindow, Effort, ForecastMode, ScheduleSolution, SolverSettings};

/// Largest accepted relative forecast noise.
pub const MAX_NOISE_FRACTION: f64 = 0.05;

/// Independent per-step price distributions for `start_step ..`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub start_step: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub mode: ForecastMode,
}

impl ForecastSeries {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn distribution(&self, step: usize) -> Option<PriceDistribution> {
        let i = step.checked_sub(self.start_step)?;
        Some(PriceDistribution { mean: *self.means.get(i)?, std: self.stds[i] })
    }

    /// Distribution at `step`, repeating the last entry past the end of the
    /// series. The flag reports whether repetition was needed.
    pub fn distribution_padded(&self, step: usize) -> Result<(PriceDistribution, bool)> {
        if step < self.start_step {
            return Err(Error::contract(format!("step {step} precedes forecast start {}", self.start_step)));
        }
        match self.distribution(step) {
            Some(d) => Ok((d, false)),
            None => {
                let last = self.len().checked_sub(1).ok_or_else(|| Error::contract("empty forecast cannot be extended"))?;
                Ok((PriceDistribution { mean: self.means[last], std: self.stds[last] }, true))
            }
        }
    }
}

/// Marginal prices of a schedule's conventional generation.
pub fn price_of_schedule(solution: &ScheduleSolution, supply: &SupplyModel) -> Vec<f64> {
    solution.p_g.iter().map(|g| g.max(0.0) / supply.k).collect()
}

/// Solves `window` (whose first step is the current one) and broadcasts
/// its prices for the remaining window steps. Every step gets the same
/// standard deviation, `noise_fraction` times the average forecast price.
pub fn make_forecast(
    window: &CoordinationWindow,
    noise_fraction: f64,
    effort: Effort,
    settings: &SolverSettings,
) -> Result<(ForecastSeries, ScheduleSolution)> {
    if !(0.0..=MAX_NOISE_FRACTION).contains(&noise_fraction) {
        return Err(Error::contract(format!("noise fraction {noise_fraction} outside [0, {MAX_NOISE_FRACTION}]")));
    }
    let solution = match solve_with(window, effort, settings) {
        Ok(s) => s,
        Err(Error::EffortExceeded { incumbent, .. }) => *incumbent,
        Err(e) => return Err(e),
    };
    let prices = price_of_schedule(&solution, &window.supply);
    let means: Vec<f64> = prices.into_iter().skip(1).collect();
    let avg = if means.is_empty() { 0.0 } else { means.iter().sum::<f64>() / means.len() as f64 };
    let stds = vec![noise_fraction * avg; means.len()];
    Ok((ForecastSeries { start_step: window.start_step + 1, means, stds, mode: window.mode }, solution))
}
