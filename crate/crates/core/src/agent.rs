//! Device agents: optimal-stopping cost-to-go over a probabilistic price
//! forecast and the all-or-nothing threshold bid derived from it.
//!
//! A waiting device may start now or wait. `C*_t` is the expected cost of
//! the optimal policy from step `t` on, given that it did not start before
//! `t`. At the latest feasible start the device must run, so `C*` equals the
//! expected run cost there. Earlier, the device starts at `t` iff the
//! realised price is at most the threshold
//!
//! ```text
//! x_t = (C*_{t+1} - sum_{i>=1} E[X_{t+i}] P_i dt) / (P_0 dt)
//! ```
//!
//! which yields the recursion
//! `C*_t = Pr[X_t <= x_t] (E[X_t | X_t <= x_t] P_0 dt + sum_{i>=1} E[X_{t+i}] P_i dt) + Pr[X_t > x_t] C*_{t+1}`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::domain::{DeviceId, DeviceInstance, PowerProfile};
use crate::error::{Error, Result};
use crate::facilitator::ForecastSeries;
use crate::market::MarketResult;

/// Beyond this many standard deviations above zero the truncation of the
/// price distribution at zero is ignored.
const TRUNCATION_Z: f64 = 5.0;

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Price forecast for one step: a normal distribution truncated at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriceDistribution {
    pub mean: f64,
    pub std: f64,
}

impl PriceDistribution {
    pub fn deterministic(price: f64) -> Self {
        PriceDistribution { mean: price, std: 0.0 }
    }

    fn truncated(&self) -> bool {
        self.std > 0.0 && self.mean / self.std <= TRUNCATION_Z
    }

    pub fn expected(&self) -> f64 {
        if !self.truncated() {
            return self.mean;
        }
        let alpha = -self.mean / self.std;
        let survive = std_normal_cdf(-alpha);
        self.mean + self.std * std_normal_pdf(alpha) / survive
    }

    /// `(Pr[X <= x], E[X | X <= x])`. The conditional mean is only
    /// meaningful when the probability is positive.
    pub fn lower_tail(&self, x: f64) -> (f64, f64) {
        if self.std <= 0.0 {
            return if self.mean <= x { (1.0, self.mean) } else { (0.0, self.mean) };
        }
        let (mu, sd) = (self.mean, self.std);
        let beta = (x - mu) / sd;
        if !self.truncated() {
            let p = std_normal_cdf(beta);
            if p <= 0.0 {
                return (0.0, x);
            }
            return (p, mu - sd * std_normal_pdf(beta) / p);
        }
        if x <= 0.0 {
            return (0.0, 0.0);
        }
        let alpha = -mu / sd;
        // mass of [alpha, beta] computed on the side that avoids cancellation
        let mass = if alpha > 0.0 {
            std_normal_cdf(-alpha) - std_normal_cdf(-beta)
        } else {
            std_normal_cdf(beta) - std_normal_cdf(alpha)
        };
        let survive = std_normal_cdf(-alpha);
        if mass <= 0.0 {
            return (0.0, x.min(mu.max(0.0)));
        }
        let cond = mu + sd * (std_normal_pdf(alpha) - std_normal_pdf(beta)) / mass;
        ((mass / survive).min(1.0), cond.clamp(0.0, x))
    }
}

/// Expected optimal cost-to-go and start thresholds of one device, from the
/// step after `now` up to its latest start.
#[derive(Clone, Debug, PartialEq)]
pub struct CostToGo {
    pub now: usize,
    pub latest_start: usize,
    /// `C*_s` for `s` in `now + 1 ..= latest_start`.
    pub values: Vec<f64>,
    /// Threshold for `s` in `now ..= latest_start`; infinite at the latest start.
    pub thresholds: Vec<f64>,
    /// Whether forecast entries had to be extended past the broadcast window.
    pub padded: bool,
}

impl CostToGo {
    pub fn value_at(&self, step: usize) -> Option<f64> {
        step.checked_sub(self.now + 1).and_then(|i| self.values.get(i)).copied()
    }

    pub fn threshold_at(&self, step: usize) -> Option<f64> {
        step.checked_sub(self.now).and_then(|i| self.thresholds.get(i)).copied()
    }

    /// Number of steps where `C*_s > C*_{s+1} + tol`.
    pub fn monotonicity_violations(&self, tol: f64) -> usize {
        self.values.windows(2).filter(|w| w[0] > w[1] + tol).count()
    }
}

/// Runs the backward induction for a device with `profile` that is still
/// waiting at `now` and must start by `latest_start`.
pub fn backward_induction(
    profile: &PowerProfile,
    forecast: &ForecastSeries,
    now: usize,
    latest_start: usize,
    dt: f64,
) -> Result<CostToGo> {
    if latest_start < now {
        return Err(Error::contract(format!("latest start {latest_start} precedes current step {now}")));
    }
    let p0 = profile.initial_power();
    if !(p0 > 0.0) {
        return Err(Error::contract("threshold bids need a positive first-step power"));
    }
    let prof = profile.steps();
    let d = prof.len();
    if latest_start == now {
        return Ok(CostToGo { now, latest_start, values: vec![], thresholds: vec![f64::INFINITY], padded: false });
    }

    let first = now + 1;
    let last = latest_start + d - 1;
    let mut padded = false;
    let mut dists = Vec::with_capacity(last + 1 - first);
    for step in first..=last {
        let (dist, pad) = forecast.distribution_padded(step)?;
        padded |= pad;
        dists.push(dist);
    }
    let expect: Vec<f64> = dists.iter().map(PriceDistribution::expected).collect();
    let ex = |step: usize| expect[step - first];
    // expected cost of cycle steps 1.. for a start at s
    let rest = |s: usize| -> f64 { (1..d).map(|i| ex(s + i) * prof[i] * dt).sum() };

    let n = latest_start - now;
    let mut values = vec![0.0; n];
    let mut thresholds = vec![0.0; n + 1];
    thresholds[n] = f64::INFINITY;
    values[n - 1] = (0..d).map(|i| ex(latest_start + i) * prof[i] * dt).sum();
    for s in (first..latest_start).rev() {
        let next = values[s + 1 - first];
        let r = rest(s);
        let th = (next - r) / (p0 * dt);
        let (p, cond) = dists[s - first].lower_tail(th);
        let start_now = cond * p0 * dt + r;
        values[s - first] = if p > 0.0 { p * start_now + (1.0 - p) * next } else { next };
        thresholds[s - now] = th;
    }
    thresholds[0] = (values[0] - rest(now)) / (p0 * dt);
    Ok(CostToGo { now, latest_start, values, thresholds, padded })
}

/// What the auctioneer sees of a device: no deadline, no profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidFunction {
    pub device_id: DeviceId,
    /// First-step power requested on acceptance, kW.
    pub power: f64,
    /// Highest acceptable clearing price; infinite for inelastic bids.
    pub threshold: f64,
    /// Set when the device must start now.
    pub inelastic: bool,
}

impl BidFunction {
    /// Demand at price `x`: the first-step power if accepted, else zero.
    pub fn demand_at(&self, x: f64) -> f64 {
        if self.inelastic || x <= self.threshold {
            self.power
        } else {
            0.0
        }
    }
}

pub fn make_bid(device: &DeviceInstance, profile: &PowerProfile, now: usize, ctg: &CostToGo) -> Result<BidFunction> {
    if !device.is_waiting() {
        return Err(Error::contract(format!("device {} is not waiting", device.id)));
    }
    let ls = device
        .latest_start(profile.duration())
        .ok_or_else(|| Error::contract(format!("device {} has no feasible start", device.id)))?;
    if device.available_at > now || now > ls {
        return Err(Error::contract(format!(
            "device {} cannot bid at step {now} (window {}..={ls})",
            device.id, device.available_at
        )));
    }
    if ctg.now != now || ctg.latest_start != ls {
        return Err(Error::contract("cost-to-go was computed for a different step or deadline"));
    }
    let inelastic = now == ls;
    Ok(BidFunction {
        device_id: device.id,
        power: profile.initial_power(),
        threshold: if inelastic { f64::INFINITY } else { ctg.thresholds[0] },
        inelastic,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Start,
    Wait,
}

/// Devices follow the auctioneer's accepted set, which already encodes
/// tie-breaking at the clearing price.
pub fn decide(bid: &BidFunction, result: &MarketResult) -> Decision {
    if result.accepted.contains(&bid.device_id) {
        Decision::Start
    } else {
        Decision::Wait
    }
}
