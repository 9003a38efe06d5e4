//! Forecast-mediated market-based control (F-MBC) of deferrable loads.
//!
//! The crate is organised along the roles of the coordination scheme:
//!
//! - [`domain`]: load profiles, devices, supply model and elementary cost functions.
//! - [`optimizer`]: the windowed mixed-integer quadratic scheduling problem.
//! - [`facilitator`]: rolling-horizon price forecasts derived from optimal schedules.
//! - [`agent`]: backward-induction cost-to-go and threshold bids of device agents.
//! - [`market`]: the auctioneer clearing bids against the linear marginal-cost supply.
//! - [`scenario`]: synthetic washing-machine / dishwasher populations.
//! - [`engine`]: the per-step forecast → bid → clear → commit loop and its metrics.

pub mod agent;
pub mod domain;
pub mod engine;
pub mod error;
pub mod facilitator;
pub mod market;
pub mod optimizer;
pub mod scenario;

pub use agent::{backward_induction, decide, make_bid, BidFunction, CostToGo, Decision, PriceDistribution};
pub use domain::{
    marginal_price, run_cost, DeviceId, DeviceInstance, DeviceState, PopulationSpec, PowerProfile, SupplyModel,
    STEPS_PER_DAY, STEP_HOURS,
};
pub use engine::{
    benchmark_optimal, detect_bulk_starts, run, run_with_benchmark, simulate, BenchmarkResult, BulkStart,
    DeviceOutcome, Diagnostics, SimulationConfig, SimulationReport, StepRecord, WorldState,
};
pub use error::{Error, Result};
pub use facilitator::{make_forecast, price_of_schedule, ForecastSeries};
pub use market::{clear, clear_in_order, tie_break_order, MarketResult};
pub use optimizer::{
    flex_power, solve, solve_with, verify, CoordinationWindow, Effort, ForecastMode, ScheduleSolution, SolverSettings,
    Violation,
};
pub use scenario::{Appliance, ProfileVariant, ScenarioConfig, ScenarioInstance};
