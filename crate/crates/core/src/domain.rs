//! Value types shared by every role in the scheme, plus the two elementary
//! cost functions everything else is built from.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of one market interval in hours (15 minutes).
pub const STEP_HOURS: f64 = 0.25;

/// Market intervals per simulated day.
pub const STEPS_PER_DAY: usize = 96;

/// Per-step power draw of one device cycle, in kW.
///
/// Always non-empty, non-negative and with at least one positive entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PowerProfile(Vec<f64>);

impl PowerProfile {
    pub fn new(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::contract("power profile must have at least one step"));
        }
        if steps.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::contract("power profile entries must be finite and non-negative"));
        }
        if !steps.iter().any(|p| *p > 0.0) {
            return Err(Error::contract("power profile must draw power in at least one step"));
        }
        Ok(PowerProfile(steps))
    }

    pub fn steps(&self) -> &[f64] {
        &self.0
    }

    /// Cycle duration in steps.
    pub fn duration(&self) -> usize {
        self.0.len()
    }

    /// Power drawn in the first step of the cycle.
    pub fn initial_power(&self) -> f64 {
        self.0[0]
    }

    pub fn peak_power(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Energy of one cycle in kWh for steps of `dt` hours.
    pub fn energy(&self, dt: f64) -> f64 {
        self.0.iter().sum::<f64>() * dt
    }

    /// Permutation that moves the (first) peak step to the front and keeps
    /// the remaining steps in their original order.
    pub fn peak_first(&self) -> PowerProfile {
        let peak_idx = self
            .0
            .iter()
            .enumerate()
            .fold(0, |best, (i, p)| if *p > self.0[best] { i } else { best });
        let mut steps = Vec::with_capacity(self.0.len());
        steps.push(self.0[peak_idx]);
        steps.extend(self.0.iter().enumerate().filter(|(i, _)| *i != peak_idx).map(|(_, p)| *p));
        PowerProfile(steps)
    }
}

impl TryFrom<Vec<f64>> for PowerProfile {
    type Error = Error;

    fn try_from(steps: Vec<f64>) -> Result<Self> {
        PowerProfile::new(steps)
    }
}

impl From<PowerProfile> for Vec<f64> {
    fn from(p: PowerProfile) -> Self {
        p.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub u32);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum DeviceState {
    Waiting,
    Running { start: usize },
    Done { start: usize },
}

/// One deferrable load. `deadline` is the step by which its cycle must have
/// finished, so a device of duration `D` must start no later than
/// `deadline - D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceInstance {
    pub id: DeviceId,
    pub population: usize,
    pub available_at: usize,
    pub deadline: usize,
    #[serde(default = "waiting")]
    pub state: DeviceState,
    #[serde(default)]
    pub paid: f64,
}

fn waiting() -> DeviceState {
    DeviceState::Waiting
}

impl DeviceInstance {
    pub fn new(id: DeviceId, population: usize, available_at: usize, deadline: usize) -> Self {
        DeviceInstance { id, population, available_at, deadline, state: DeviceState::Waiting, paid: 0.0 }
    }

    /// Latest step at which a cycle of `duration` steps can still start.
    pub fn latest_start(&self, duration: usize) -> Option<usize> {
        self.deadline.checked_sub(duration).filter(|ls| *ls >= self.available_at)
    }

    pub fn start_step(&self) -> Option<usize> {
        match self.state {
            DeviceState::Waiting => None,
            DeviceState::Running { start } | DeviceState::Done { start } => Some(start),
        }
    }

    pub fn is_waiting(&self) -> bool {
        self.state == DeviceState::Waiting
    }

    pub(crate) fn begin(&mut self, step: usize) -> Result<()> {
        match self.state {
            DeviceState::Waiting => {
                self.state = DeviceState::Running { start: step };
                Ok(())
            }
            other => Err(Error::contract(format!("device {} cannot start from state {other:?}", self.id))),
        }
    }

    pub(crate) fn finish(&mut self) -> Result<()> {
        match self.state {
            DeviceState::Running { start } => {
                self.state = DeviceState::Done { start };
                Ok(())
            }
            other => Err(Error::contract(format!("device {} cannot finish from state {other:?}", self.id))),
        }
    }
}

/// Linear marginal-cost conventional supply plus free renewables and an
/// inflexible demand, all on the global step grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyModel {
    /// Slope parameter: conventional output at price `x` is `k * x` kW.
    pub k: f64,
    pub renewables: Vec<f64>,
    pub inflexible_load: Vec<f64>,
    pub dt: f64,
}

impl SupplyModel {
    pub fn new(k: f64, renewables: Vec<f64>, inflexible_load: Vec<f64>, dt: f64) -> Result<Self> {
        let model = SupplyModel { k, renewables, inflexible_load, dt };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::contract(format!("supply slope k must be positive, got {}", self.k)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::contract(format!("step length must be positive, got {}", self.dt)));
        }
        if self.renewables.len() != self.inflexible_load.len() {
            return Err(Error::contract("renewable and inflexible series differ in length"));
        }
        let bad = |s: &[f64]| s.iter().any(|v| !v.is_finite() || *v < 0.0);
        if bad(&self.renewables) || bad(&self.inflexible_load) {
            return Err(Error::contract("supply series must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inflexible_load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inflexible_load.is_empty()
    }

    /// Conventional generation needed to serve `demand` kW at step `t`.
    pub fn conventional_for(&self, t: usize, demand: f64) -> f64 {
        (demand - self.renewables[t]).max(0.0)
    }

    /// Generation cost of one step at conventional output `p_g`.
    pub fn step_cost(&self, p_g: f64) -> f64 {
        0.5 * p_g * p_g / self.k * self.dt
    }
}

/// Aggregate flexibility of one population of identical devices on some
/// step grid. `availability_counts[t]` devices become available at `t`;
/// `deadline_counts[t]` devices must have finished their cycle by `t`.
/// The deadline series is one entry longer than the availability series so
/// a cycle ending exactly at the end of the grid can be represented.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub profile: PowerProfile,
    pub availability_counts: Vec<u32>,
    pub deadline_counts: Vec<u32>,
}

impl PopulationSpec {
    pub fn empty(profile: PowerProfile, len: usize) -> Self {
        PopulationSpec { profile, availability_counts: vec![0; len], deadline_counts: vec![0; len + 1] }
    }

    pub fn len(&self) -> usize {
        self.availability_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.availability_counts.is_empty()
    }

    pub fn device_count(&self) -> u64 {
        self.availability_counts.iter().map(|&c| c as u64).sum()
    }

    /// Upper bounds on cumulative starts: devices available by each step.
    pub fn cumulative_availability(&self) -> Vec<u64> {
        self.availability_counts
            .iter()
            .scan(0u64, |acc, &c| {
                *acc += c as u64;
                Some(*acc)
            })
            .collect()
    }

    /// Lower bounds on cumulative starts by each step: devices whose cycle
    /// must end no later than `t + D`. Deadlines past the end of the grid
    /// impose nothing, so the bound saturates at the grid end.
    pub fn cumulative_deadline_bound(&self) -> Vec<u64> {
        let len = self.len();
        let d = self.profile.duration();
        let mut cum = Vec::with_capacity(self.deadline_counts.len());
        let mut acc = 0u64;
        for &c in &self.deadline_counts {
            acc += c as u64;
            cum.push(acc);
        }
        (0..len).map(|t| cum[(t + d).min(len).min(cum.len() - 1)]).collect()
    }
}

/// Energy cost of running `profile` against per-step `prices`.
pub fn run_cost(profile: &PowerProfile, prices: &[f64], dt: f64) -> Result<f64> {
    if prices.len() != profile.duration() {
        return Err(Error::contract(format!(
            "run_cost needs {} prices, got {}",
            profile.duration(),
            prices.len()
        )));
    }
    if prices.iter().any(|p| !p.is_finite()) {
        return Err(Error::contract("run_cost prices must be finite"));
    }
    Ok(profile.steps().iter().zip(prices).map(|(p, x)| p * x * dt).sum())
}

/// Marginal cost of conventional output `p_g` under the quadratic cost
/// `p_g^2 / (2k)`.
pub fn marginal_price(p_g: f64, k: f64) -> Result<f64> {
    if p_g < 0.0 || !p_g.is_finite() {
        return Err(Error::contract(format!("conventional generation must be non-negative, got {p_g}")));
    }
    if !(k > 0.0) {
        return Err(Error::contract(format!("supply slope k must be positive, got {k}")));
    }
    Ok(p_g / k)
}
