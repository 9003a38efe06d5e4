//! Whole-run invariants of the rolling simulation.

use fmbc_core::engine::step;
use fmbc_core::scenario::{BaseSeries, ProfileSpec};
use fmbc_core::{
    run, DeviceState, ForecastMode, ProfileVariant, ScenarioConfig, ScenarioInstance, SimulationConfig, WorldState,
};

fn scenario(per_day: u32, variant: ProfileVariant, seed: u64) -> ScenarioInstance {
    ScenarioInstance::generate(&ScenarioConfig::scaled(per_day, 2, variant, seed)).unwrap()
}

fn config(mode: ForecastMode, seed: u64) -> SimulationConfig {
    SimulationConfig { mode, seed, prediction_horizon: 48, ..Default::default() }
}

#[test]
fn committed_ledger_tracks_running_devices() {
    let s = scenario(30, ProfileVariant::Original, 2);
    let cfg = config(ForecastMode::Pessimistic, 2);
    let mut world = WorldState::new(&s);
    let mut paid_before: Vec<f64> = world.devices.iter().map(|d| d.paid).collect();
    while world.step < s.horizon {
        step(&mut world, &s, &cfg).unwrap();
        let now = world.step;
        let mut expected = vec![0.0; s.horizon];
        for d in &world.devices {
            if let DeviceState::Running { start } = d.state {
                for (i, p) in s.profiles[d.population].steps().iter().enumerate() {
                    if start + i >= now {
                        expected[start + i] += p;
                    }
                }
            }
        }
        for t in now..s.horizon {
            assert!((world.committed[t] - expected[t]).abs() < 1e-9, "step {now}, slot {t}");
        }
        for (d, before) in world.devices.iter().zip(&mut paid_before) {
            assert!(d.paid >= *before);
            *before = d.paid;
        }
    }
}

#[test]
fn every_device_completes_in_both_modes() {
    for variant in [ProfileVariant::Original, ProfileVariant::Modified] {
        for mode in [ForecastMode::Optimistic, ForecastMode::Pessimistic] {
            let s = scenario(30, variant, 7);
            let r = run(&s, &config(mode, 7)).unwrap();
            let d = &r.diagnostics;
            assert_eq!(d.incomplete_devices, 0);
            assert_eq!(d.late_devices, 0);
            assert!(d.max_balance_residual <= 1e-6);
            assert!(d.max_payment_rel_error <= 1e-9);
            assert_eq!(d.run.cost_to_go_violations, 0);
            assert!(r.total_cost >= r.benchmark_cost * (1.0 - 1e-9));
            for dev in &r.devices {
                let start = dev.start.unwrap();
                assert!(start >= dev.available_at);
                assert!(start + s.profiles[dev.population].duration() <= dev.deadline);
            }
        }
    }
}

#[test]
fn identical_inputs_give_identical_reports() {
    let s = scenario(20, ProfileVariant::Original, 3);
    let cfg = config(ForecastMode::Optimistic, 3);
    let a = serde_json::to_string(&run(&s, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run(&s, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn without_flexible_devices_the_benchmark_is_reached() {
    let s = scenario(0, ProfileVariant::Original, 0);
    let r = run(&s, &config(ForecastMode::Optimistic, 0)).unwrap();
    assert_eq!(r.total_cost, r.benchmark_cost);
    assert_eq!(r.cost_gap, 0.0);
}

#[test]
fn constant_load_devices_with_a_clairvoyant_forecast_are_near_optimal() {
    for seed in 0..3 {
        let mut cfg = ScenarioConfig::scaled(100, 1, ProfileVariant::Original, seed);
        cfg.populations.truncate(1);
        cfg.populations[0].profile = ProfileSpec::Custom { power_kw: vec![1.0; 4], variant: ProfileVariant::Original };
        cfg.supply.base = BaseSeries::Synthetic { scale: 0.1 };
        let s = ScenarioInstance::generate(&cfg).unwrap();
        let sim = SimulationConfig { noise_fraction: 0.0, prediction_horizon: s.horizon, seed, ..Default::default() };
        let r = run(&s, &sim).unwrap();
        assert!(r.cost_gap < 0.005, "gap {}", r.cost_gap);
        assert!(r.bulk_starts.is_empty());
    }
}
