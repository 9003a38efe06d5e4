//! Synthetic experimental worlds: washing machine and dishwasher
//! populations with log-normal availabilities and normally distributed
//! deferrals, over a daily-repeated inflexible load and renewable profile.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{DeviceId, DeviceInstance, PopulationSpec, PowerProfile, SupplyModel, STEPS_PER_DAY, STEP_HOURS};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Appliance {
    WashingMachine,
    Dishwasher,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileVariant {
    Original,
    /// Peak step moved to the front.
    Modified,
}

// Fifteen-minute power draw in kW. Only the first-step values are fixed
// (0.1 kW and 0.08 kW); the rest approximate typical cycles: a washing
// machine fills and soaks, heats mid-cycle and spins at the end, a
// dishwasher heats for the main wash and again for the final rinse before
// drying.
const WASHING_MACHINE_KW: [f64; 7] = [0.10, 0.20, 0.20, 2.20, 2.20, 0.20, 0.60];
const DISHWASHER_KW: [f64; 8] = [0.08, 0.10, 0.10, 2.00, 0.10, 0.10, 2.00, 0.20];

/// Built-in cycle profile for an appliance.
pub fn default_profile(kind: Appliance, variant: ProfileVariant) -> PowerProfile {
    let steps = match kind {
        Appliance::WashingMachine => WASHING_MACHINE_KW.to_vec(),
        Appliance::Dishwasher => DISHWASHER_KW.to_vec(),
    };
    let original = PowerProfile::new(steps).expect("built-in profiles are valid");
    match variant {
        ProfileVariant::Original => original,
        ProfileVariant::Modified => original.peak_first(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ProfileSpec {
    Preset { appliance: Appliance, variant: ProfileVariant },
    Custom { power_kw: Vec<f64>, variant: ProfileVariant },
}

impl ProfileSpec {
    pub fn resolve(&self) -> Result<PowerProfile> {
        match self {
            ProfileSpec::Preset { appliance, variant } => Ok(default_profile(*appliance, *variant)),
            ProfileSpec::Custom { power_kw, variant } => {
                let p = PowerProfile::new(power_kw.clone())?;
                Ok(match variant {
                    ProfileVariant::Original => p,
                    ProfileVariant::Modified => p.peak_first(),
                })
            }
        }
    }

    pub fn with_variant(&self, v: ProfileVariant) -> Self {
        match self.clone() {
            ProfileSpec::Preset { appliance, .. } => ProfileSpec::Preset { appliance, variant: v },
            ProfileSpec::Custom { power_kw, .. } => ProfileSpec::Custom { power_kw, variant: v },
        }
    }
}

/// `hours = median_hours * L` with `L ~ LogNormal(mu, sigma)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityParams {
    pub mu: f64,
    pub sigma: f64,
    pub median_hours: f64,
    /// Draws past midnight continue into the next day instead of being
    /// clipped to the last interval of the day.
    pub wrap: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeadlineParams {
    pub mean_hours: f64,
    pub std_hours: f64,
}

impl Default for DeadlineParams {
    fn default() -> Self {
        DeadlineParams { mean_hours: 3.0, std_hours: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub name: String,
    pub profile: ProfileSpec,
    pub devices_per_day: u32,
    pub availability: AvailabilityParams,
    #[serde(default)]
    pub deadline: DeadlineParams,
}

impl PopulationConfig {
    pub fn washing_machines(devices_per_day: u32, variant: ProfileVariant) -> Self {
        PopulationConfig {
            name: "washing_machine".into(),
            profile: ProfileSpec::Preset { appliance: Appliance::WashingMachine, variant },
            devices_per_day,
            availability: AvailabilityParams { mu: 0.0, sigma: 0.5, median_hours: 9.0, wrap: false },
            deadline: DeadlineParams::default(),
        }
    }

    pub fn dishwashers(devices_per_day: u32, variant: ProfileVariant) -> Self {
        PopulationConfig {
            name: "dishwasher".into(),
            profile: ProfileSpec::Preset { appliance: Appliance::Dishwasher, variant },
            devices_per_day,
            availability: AvailabilityParams { mu: 0.0, sigma: 0.25, median_hours: 23.0, wrap: true },
            deadline: DeadlineParams::default(),
        }
    }
}

/// Hourly inflexible load (kW) of the synthetic base series at scale 1.
pub const SYNTHETIC_INFLEXIBLE_KW: [f64; 24] = [
    200.0, 180.0, 170.0, 165.0, 170.0, 190.0, 250.0, 330.0, 350.0, 320.0, 300.0, 290.0, 290.0, 285.0, 290.0, 310.0,
    360.0, 430.0, 470.0, 460.0, 420.0, 360.0, 290.0, 230.0,
];

/// Hourly renewable output (kW) of the synthetic base series at scale 1:
/// a constant wind share plus a solar day between 06:00 and 20:00.
pub const SYNTHETIC_RENEWABLE_KW: [f64; 24] = [
    60.0, 60.0, 60.0, 60.0, 60.0, 60.0, 70.0, 100.0, 150.0, 210.0, 260.0, 300.0, 320.0, 310.0, 280.0, 230.0, 170.0,
    110.0, 75.0, 60.0, 60.0, 60.0, 60.0, 60.0,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BaseSeries {
    /// The built-in diurnal pattern multiplied by `scale`.
    Synthetic { scale: f64 },
    /// Explicit series, repeated cyclically to cover the horizon.
    Custom { inflexible_kw: Vec<f64>, renewables_kw: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyConfig {
    /// Conventional supply slope, kW per price unit.
    pub k: f64,
    pub base: BaseSeries,
}

fn default_identical_days() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub days: u32,
    pub seed: u64,
    /// Replay the first day's availabilities and deadlines on every later
    /// day instead of drawing each day afresh.
    #[serde(default = "default_identical_days")]
    pub identical_days: bool,
    pub populations: Vec<PopulationConfig>,
    pub supply: SupplyConfig,
}

impl ScenarioConfig {
    /// 1000 washing machines and 1000 dishwashers per day over five days.
    pub fn full_scale() -> Self {
        Self::scaled(1000, 5, ProfileVariant::Original, 0)
    }

    /// Two-population world with `devices_per_day` of each appliance. The
    /// base series and the supply slope scale with the population so that
    /// price levels do not depend on the size of the world.
    pub fn scaled(devices_per_day: u32, days: u32, variant: ProfileVariant, seed: u64) -> Self {
        let scale = devices_per_day as f64 / 1000.0;
        ScenarioConfig {
            days,
            seed,
            identical_days: true,
            populations: vec![
                PopulationConfig::washing_machines(devices_per_day, variant),
                PopulationConfig::dishwashers(devices_per_day, variant),
            ],
            supply: SupplyConfig { k: 10.0 * scale.max(1e-3), base: BaseSeries::Synthetic { scale } },
        }
    }

    pub fn with_variant(mut self, v: ProfileVariant) -> Self {
        for p in &mut self.populations {
            p.profile = p.profile.with_variant(v);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.days < 1 {
            return bad("days must be at least 1".into());
        }
        if self.populations.is_empty() {
            return bad("at least one population is required".into());
        }
        for p in &self.populations {
            let prof = p.profile.resolve().map_err(|e| Error::InvalidScenario(format!("{}: {e}", p.name)))?;
            if !(prof.initial_power() > 0.0) {
                return bad(format!("{}: first-step power must be positive for threshold bidding", p.name));
            }
            let a = &p.availability;
            if !(a.sigma > 0.0 && a.sigma.is_finite()) || !a.mu.is_finite() {
                return bad(format!("{}: log-normal parameters must be finite with sigma > 0", p.name));
            }
            if !(a.median_hours > 0.0 && a.median_hours <= 24.0) {
                return bad(format!("{}: median hour must lie in (0, 24]", p.name));
            }
            let d = &p.deadline;
            if !(d.mean_hours >= 0.0 && d.std_hours >= 0.0 && d.mean_hours.is_finite() && d.std_hours.is_finite()) {
                return bad(format!("{}: deadline deferral parameters must be non-negative", p.name));
            }
        }
        if !(self.supply.k > 0.0 && self.supply.k.is_finite()) {
            return bad("supply slope k must be positive".into());
        }
        match &self.supply.base {
            BaseSeries::Synthetic { scale } if !(*scale >= 0.0 && scale.is_finite()) => {
                bad("synthetic base scale must be non-negative".into())
            }
            BaseSeries::Custom { inflexible_kw, renewables_kw } => {
                if inflexible_kw.is_empty() || inflexible_kw.len() != renewables_kw.len() {
                    return bad("custom base series must be non-empty and of equal length".into());
                }
                if inflexible_kw.iter().chain(renewables_kw).any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("custom base series must be finite and non-negative".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Nearest step boundary; exact halves go to the earlier step.
pub fn round_to_step(hours: f64) -> i64 {
    (hours / STEP_HOURS - 0.5).ceil() as i64
}

/// Availability steps for `n` devices of day `day`.
pub fn gen_availabilities<R: Rng + ?Sized>(n: u32, params: &AvailabilityParams, day: u32, rng: &mut R) -> Vec<usize> {
    let dist = LogNormal::new(params.mu, params.sigma).expect("validated log-normal parameters");
    let offset = day as usize * STEPS_PER_DAY;
    (0..n)
        .map(|_| {
            let hours = params.median_hours * dist.sample(rng);
            let step = if params.wrap {
                if hours >= 24.0 {
                    STEPS_PER_DAY as i64 + round_to_step(hours.rem_euclid(24.0))
                } else {
                    round_to_step(hours)
                }
            } else {
                round_to_step(hours).min(STEPS_PER_DAY as i64 - 1)
            };
            offset + step.max(0) as usize
        })
        .collect()
}

/// Deadlines after the given availabilities; deferrals shorter than the
/// cycle are raised to it. Returns the deadlines and how many were raised.
pub fn gen_deadlines<R: Rng + ?Sized>(
    availabilities: &[usize],
    params: &DeadlineParams,
    duration: usize,
    rng: &mut R,
) -> (Vec<usize>, usize) {
    let dist = Normal::new(params.mean_hours, params.std_hours).expect("validated deferral parameters");
    let mut clamped = 0;
    let deadlines = availabilities
        .iter()
        .map(|&a| {
            let defer = round_to_step(dist.sample(rng));
            let defer = if defer < duration as i64 {
                clamped += 1;
                duration
            } else {
                defer as usize
            };
            a + defer
        })
        .collect();
    (deadlines, clamped)
}

/// Inflexible load and renewables for `days` days of the synthetic pattern.
pub fn base_series(days: usize, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let per_day = |table: &[f64; 24]| -> Vec<f64> {
        (0..STEPS_PER_DAY)
            .map(|s| {
                let h = s as f64 * STEP_HOURS;
                let i = h.floor() as usize;
                let frac = h - i as f64;
                scale * (table[i] * (1.0 - frac) + table[(i + 1) % 24] * frac)
            })
            .collect()
    };
    let inflex = per_day(&SYNTHETIC_INFLEXIBLE_KW);
    let renew = per_day(&SYNTHETIC_RENEWABLE_KW);
    (inflex.repeat(days), renew.repeat(days))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    /// Simulated steps; covers every deadline plus the longest cycle.
    pub horizon: usize,
    pub population_names: Vec<String>,
    pub profiles: Vec<PowerProfile>,
    pub devices: Vec<DeviceInstance>,
    pub supply: SupplyModel,
    /// Deferral draws raised to the cycle length.
    pub clamped_deadlines: usize,
}

impl ScenarioInstance {
    pub fn generate(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let profiles: Vec<PowerProfile> =
            config.populations.iter().map(|p| p.profile.resolve()).collect::<Result<_>>()?;
        let mut devices = Vec::new();
        let mut clamped = 0;
        for (n, (pc, prof)) in config.populations.iter().zip(&profiles).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(n as u64);
            let drawn_days = if config.identical_days { 1 } else { config.days };
            for day in 0..drawn_days {
                let avail = gen_availabilities(pc.devices_per_day, &pc.availability, day, &mut rng);
                let (deadlines, c) = gen_deadlines(&avail, &pc.deadline, prof.duration(), &mut rng);
                let copies = if config.identical_days { config.days } else { 1 };
                for copy in 0..copies as usize {
                    let shift = copy * STEPS_PER_DAY;
                    clamped += c;
                    for (a, d) in avail.iter().zip(&deadlines) {
                        devices.push(DeviceInstance::new(DeviceId(devices.len() as u32), n, a + shift, d + shift));
                    }
                }
            }
        }
        let max_d = profiles.iter().map(PowerProfile::duration).max().unwrap_or(1);
        let last_deadline = devices.iter().map(|d| d.deadline).max().unwrap_or(0);
        let days_steps = config.days as usize * STEPS_PER_DAY;
        let horizon = days_steps.max(last_deadline + max_d);

        let (inflex, renew) = match &config.supply.base {
            BaseSeries::Synthetic { scale } => base_series(horizon.div_ceil(STEPS_PER_DAY), *scale),
            BaseSeries::Custom { inflexible_kw, renewables_kw } => (inflexible_kw.clone(), renewables_kw.clone()),
        };
        let cycle = |s: &[f64]| -> Vec<f64> { (0..horizon).map(|t| s[t % s.len()]).collect() };
        let supply = SupplyModel::new(config.supply.k, cycle(&renew), cycle(&inflex), STEP_HOURS)?;
        let inst = ScenarioInstance {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            horizon,
            population_names: config.populations.iter().map(|p| p.name.clone()).collect(),
            profiles,
            devices,
            supply,
            clamped_deadlines: clamped,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidScenario(format!("unsupported schema version {}", self.schema_version)));
        }
        self.supply.validate()?;
        if self.supply.len() != self.horizon {
            return Err(Error::InvalidScenario("supply series do not cover the horizon".into()));
        }
        if self.profiles.iter().any(|p| !(p.initial_power() > 0.0)) {
            return Err(Error::InvalidScenario("first-step power must be positive for threshold bidding".into()));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.id.0 as usize != i {
                return Err(Error::InvalidScenario(format!("device ids must be 0..n in order, found {} at {i}", d.id)));
            }
            let prof = self
                .profiles
                .get(d.population)
                .ok_or_else(|| Error::InvalidScenario(format!("device {} has unknown population", d.id)))?;
            if d.latest_start(prof.duration()).is_none() || d.deadline > self.horizon {
                return Err(Error::InvalidScenario(format!("device {} cannot finish within its window", d.id)));
            }
        }
        Ok(())
    }

    pub fn population_count(&self) -> usize {
        self.profiles.len()
    }

    pub fn devices_of(&self, population: usize) -> impl Iterator<Item = &DeviceInstance> {
        self.devices.iter().filter(move |d| d.population == population)
    }

    /// Aggregate availability/deadline counts of one population over the
    /// whole horizon.
    pub fn population_spec(&self, population: usize) -> PopulationSpec {
        let mut spec = PopulationSpec::empty(self.profiles[population].clone(), self.horizon);
        for d in self.devices_of(population) {
            spec.availability_counts[d.available_at] += 1;
            spec.deadline_counts[d.deadline] += 1;
        }
        spec
    }

    /// Devices per day of a population, averaged over the generated days.
    pub fn daily_count(&self, population: usize) -> f64 {
        self.devices_of(population).count() as f64 / self.config.days.max(1) as f64
    }
}
