//! Depth-first branch-and-bound over integer cumulative starts.

use super::relax::{solve_relaxation, Bounds, Problem, RelaxSettings};
use super::search::{local_search, round_cumulative, IntSchedule};

pub(crate) struct BnbOutcome {
    pub best: IntSchedule,
    pub best_value: f64,
    pub lower_bound: f64,
    pub nodes: usize,
    pub complete: bool,
}

struct Node {
    bounds: Bounds,
    warm: Vec<f64>,
    /// lower bound inherited from the parent
    parent_bound: f64,
}

fn prunable(bound: f64, incumbent: f64) -> bool {
    bound >= incumbent - 1e-10 * incumbent.abs() - 1e-13
}

pub(crate) fn branch_and_bound(
    problem: &Problem,
    relax: &RelaxSettings,
    max_nodes: usize,
    passes: usize,
    seed: IntSchedule,
) -> BnbOutcome {
    let tau = problem.tau;
    let mut best_value = seed.objective(problem);
    let mut best = seed;
    let mut stack = vec![Node {
        bounds: problem.bounds.clone(),
        warm: best.cum.iter().map(|&v| v as f64).collect(),
        parent_bound: f64::NEG_INFINITY,
    }];
    let mut nodes = 0usize;
    // smallest bound among nodes that were still open when the budget ran out
    let mut open_bound = f64::INFINITY;

    while let Some(node) = stack.pop() {
        if nodes >= max_nodes {
            open_bound = open_bound.min(node.parent_bound);
            for n in &stack {
                open_bound = open_bound.min(n.parent_bound);
            }
            break;
        }
        nodes += 1;
        if !node.bounds.is_consistent() || prunable(node.parent_bound, best_value) {
            continue;
        }
        let free = node.bounds.lo.iter().zip(&node.bounds.hi).position(|(l, h)| l < h);
        if free.is_none() {
            let cum: Vec<i64> = node.bounds.lo.iter().map(|&v| v as i64).collect();
            let cand = IntSchedule::from_cumulative(problem, cum);
            let v = cand.objective(problem);
            if v < best_value {
                best_value = v;
                best = cand;
            }
            continue;
        }
        let rel = solve_relaxation(problem, &node.bounds, Some(&node.warm), relax);
        let bound = rel.lower_bound.max(node.parent_bound);
        if prunable(bound, best_value) {
            continue;
        }
        let mut cand = IntSchedule::from_cumulative(problem, round_cumulative(&rel.x, &node.bounds));
        local_search(problem, &node.bounds, &mut cand, passes);
        let v = cand.objective(problem);
        if v < best_value {
            best_value = v;
            best = cand;
            if prunable(bound, best_value) {
                continue;
            }
        }

        // earliest step first, then lower population
        let npop = problem.npop();
        let mut pick = None;
        'outer: for t in 0..tau {
            for n in 0..npop {
                let i = n * tau + t;
                let x = rel.x[i];
                if node.bounds.lo[i] < node.bounds.hi[i] && (x - x.round()).abs() > 1e-6 {
                    pick = Some(i);
                    break 'outer;
                }
            }
        }
        let (idx, split) = match pick {
            Some(i) => (i, rel.x[i].floor()),
            None => {
                let i = free.unwrap();
                let v = rel.x[i].round().clamp(node.bounds.lo[i], node.bounds.hi[i] - 1.0);
                (i, v)
            }
        };
        let mut down = node.bounds.clone();
        down.cap(tau, idx, split);
        let mut up = node.bounds;
        up.floor(tau, idx, split + 1.0);
        let down_first = rel.x[idx] - split <= 0.5;
        let mk = |b: Bounds| Node { bounds: b, warm: rel.x.clone(), parent_bound: bound };
        if down_first {
            stack.push(mk(up));
            stack.push(mk(down));
        } else {
            stack.push(mk(down));
            stack.push(mk(up));
        }
    }

    let complete = open_bound == f64::INFINITY && stack.is_empty();
    let lower_bound = if complete { best_value } else { open_bound.min(best_value) };
    BnbOutcome { best, best_value, lower_bound, nodes, complete }
}
