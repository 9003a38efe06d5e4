//! The auctioneer: clears one interval's step bids against the linear
//! marginal-cost supply curve.
//!
//! Supply at price `x` is `P_r + k x`, so demand `q` clears at
//! `max(0, q - P_r) / k`. All-or-nothing bids cannot always hit the curve
//! exactly; bids are walked in tie-break order and each is accepted when the
//! price including it stays at or below its threshold. Because the order
//! is by descending threshold, earlier acceptances stay consistent as the
//! price rises.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::BidFunction;
use crate::domain::DeviceId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketResult {
    pub clearing_price: f64,
    pub accepted: Vec<DeviceId>,
    pub p_g_dispatched: f64,
    pub total_demand_served: f64,
    pub renewables_used: f64,
}

/// Inelastic bids first, then descending thresholds; equal thresholds are
/// shuffled uniformly with a generator seeded by `seed`.
pub fn tie_break_order(bids: &[BidFunction], seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bids.len()).collect();
    let rank = |i: &usize| (!bids[*i].inelastic, -bids[*i].threshold);
    order.sort_by(|a, b| {
        let (ia, ta) = rank(a);
        let (ib, tb) = rank(b);
        ia.cmp(&ib).then(ta.total_cmp(&tb)).then(a.cmp(b))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut i = 0;
    while i < order.len() {
        let key = rank(&order[i]);
        let mut j = i + 1;
        while j < order.len() && rank(&order[j]) == key {
            j += 1;
        }
        if j - i > 1 {
            order[i..j].shuffle(&mut rng);
        }
        i = j;
    }
    order
}

fn price_for(demand: f64, renewables: f64, k: f64) -> (f64, f64) {
    let p_g = (demand - renewables).max(0.0);
    (p_g / k, p_g)
}

/// Clears with an explicit bid order, see [`tie_break_order`].
pub fn clear_in_order(
    bids: &[BidFunction],
    order: &[usize],
    inflexible: f64,
    committed: f64,
    renewables: f64,
    k: f64,
) -> MarketResult {
    let mut demand = inflexible + committed;
    let mut accepted = Vec::new();
    for &i in order {
        let b = &bids[i];
        let (price, _) = price_for(demand + b.power, renewables, k);
        if b.inelastic || price <= b.threshold {
            demand += b.power;
            accepted.push(b.device_id);
        }
    }
    let (clearing_price, p_g) = price_for(demand, renewables, k);
    MarketResult {
        clearing_price,
        accepted,
        p_g_dispatched: p_g,
        total_demand_served: demand,
        renewables_used: demand.min(renewables),
    }
}

pub fn clear(bids: &[BidFunction], inflexible: f64, committed: f64, renewables: f64, k: f64, seed: u64) -> MarketResult {
    let order = tie_break_order(bids, seed);
    clear_in_order(bids, &order, inflexible, committed, renewables, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{decide, Decision};
    use crate::domain::marginal_price;

    fn bid(id: u32, power: f64, threshold: f64) -> BidFunction {
        BidFunction { device_id: DeviceId(id), power, threshold, inelastic: false }
    }

    #[test]
    fn single_bid_intersection() {
        let r = clear(&[bid(1, 10.0, 7.0)], 50.0, 0.0, 0.0, 10.0, 0);
        assert_eq!(r.accepted, vec![DeviceId(1)]);
        assert_eq!(r.clearing_price, 6.0);
        let r = clear(&[bid(1, 10.0, 4.0)], 50.0, 0.0, 0.0, 10.0, 0);
        assert!(r.accepted.is_empty());
        assert_eq!(r.clearing_price, 5.0);
    }

    #[test]
    fn empty_market() {
        let r = clear(&[], 0.0, 0.0, 3.0, 10.0, 0);
        assert_eq!((r.clearing_price, r.p_g_dispatched), (0.0, 0.0));
    }

    #[test]
    fn distinct_thresholds_sorted_descending() {
        let bids = vec![bid(0, 1.0, 3.0), bid(1, 1.0, 9.0), bid(2, 1.0, -1.0), bid(3, 1.0, 5.0)];
        for seed in 0..20 {
            assert_eq!(tie_break_order(&bids, seed), vec![1, 3, 0, 2]);
        }
    }

    #[test]
    fn inelastic_bids_come_first() {
        let mut bids = vec![bid(0, 1.0, 100.0), bid(1, 1.0, 1.0)];
        bids[1].inelastic = true;
        bids[1].threshold = f64::INFINITY;
        bids.push(BidFunction { device_id: DeviceId(2), power: 1.0, threshold: 0.5, inelastic: true });
        let order = tie_break_order(&bids, 3);
        assert_eq!(order[2], 0);
        let r = clear(&bids, 1000.0, 0.0, 0.0, 1.0, 3);
        assert_eq!(r.accepted.len(), 2);
        assert!(!r.accepted.contains(&DeviceId(0)));
    }

    #[test]
    fn identical_bids_are_shuffled_uniformly() {
        let bids = vec![bid(0, 1.0, 5.0), bid(1, 1.0, 5.0)];
        let first_zero = (0..1000u64).filter(|&s| tie_break_order(&bids, s)[0] == 0).count();
        assert!((450..=550).contains(&first_zero), "{first_zero}");
    }

    #[test]
    fn rationing_at_the_threshold_accepts_exactly_one() {
        // base 40, each bid adds 10 kW; with k = 10 one acceptance gives price 5
        let bids = vec![bid(0, 10.0, 5.0), bid(1, 10.0, 5.0)];
        for seed in 0..50 {
            let r = clear(&bids, 40.0, 0.0, 0.0, 10.0, seed);
            assert_eq!(r.accepted.len(), 1);
            assert_eq!(r.clearing_price, 5.0);
            let starts = bids.iter().filter(|b| decide(b, &r) == Decision::Start).count();
            assert_eq!(starts, 1);
        }
    }

    #[test]
    fn budget_identity() {
        let bids = vec![bid(0, 2.0, 9.0), bid(1, 3.0, 8.0), bid(2, 0.5, 1.0)];
        let (inflex, committed, dt) = (40.0, 15.0, 0.25);
        let r = clear(&bids, inflex, committed, 5.0, 10.0, 1);
        let x = r.clearing_price;
        let paid_bids: f64 = bids.iter().filter(|b| r.accepted.contains(&b.device_id)).map(|b| x * b.power * dt).sum();
        let total = paid_bids + x * (inflex + committed) * dt;
        assert!((total - x * r.total_demand_served * dt).abs() < 1e-12);
        assert!((r.clearing_price - marginal_price(r.p_g_dispatched, 10.0).unwrap()).abs() < 1e-12);
    }
}
