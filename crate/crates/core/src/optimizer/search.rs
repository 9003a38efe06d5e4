//! Integer schedules: rounding of relaxed cumulative starts and a
//! single-start relocation local search.

use super::relax::{Bounds, Problem};

/// Integer cumulative starts together with the implied net demand.
#[derive(Clone, Debug)]
pub(crate) struct IntSchedule {
    pub cum: Vec<i64>,
    pub net: Vec<f64>,
}

impl IntSchedule {
    pub fn from_cumulative(problem: &Problem, cum: Vec<i64>) -> Self {
        let xf: Vec<f64> = cum.iter().map(|&v| v as f64).collect();
        let net = problem.net(&xf);
        IntSchedule { cum, net }
    }

    pub fn objective(&self, problem: &Problem) -> f64 {
        problem.cost_of_net(&self.net)
    }

    pub fn starts(&self, tau: usize) -> Vec<Vec<i64>> {
        if tau == 0 {
            return self.cum.iter().map(|_| Vec::new()).collect();
        }
        self.cum
            .chunks(tau)
            .map(|c| {
                let mut prev = 0;
                c.iter()
                    .map(|&v| {
                        let s = v - prev;
                        prev = v;
                        s
                    })
                    .collect()
            })
            .collect()
    }
}

/// Rounds each cumulative count to the nearest integer (halves round down,
/// i.e. towards later starts). Rounding is monotone and the bounds are
/// integral, so the result stays feasible.
pub(crate) fn round_cumulative(x: &[f64], bounds: &Bounds) -> Vec<i64> {
    x.iter()
        .zip(bounds.lo.iter().zip(&bounds.hi))
        .map(|(&v, (&l, &h))| ((v - 0.5 - 1e-9).ceil()).clamp(l, h) as i64)
        .collect()
}

fn step_delta(net: f64, d: f64) -> f64 {
    let a = (net + d).max(0.0);
    let b = net.max(0.0);
    0.5 * (a * a - b * b)
}

/// Cost change (before scaling) of moving one start of population `n`
/// from slot `from` to slot `to`.
fn move_delta(prof: &[f64], net: &[f64], from: usize, to: usize) -> f64 {
    let tau = net.len();
    let d = prof.len();
    let mut delta = 0.0;
    for (i, p) in prof.iter().enumerate() {
        let t = from + i;
        if t >= tau {
            break;
        }
        let mut change = -p;
        if t >= to && t < to + d {
            change += prof[t - to];
        }
        delta += step_delta(net[t], change);
    }
    for (i, p) in prof.iter().enumerate() {
        let t = to + i;
        if t >= tau {
            break;
        }
        if t >= from && t < from + d {
            continue;
        }
        delta += step_delta(net[t], *p);
    }
    delta
}

/// Best-improvement relocation of single starts within `bounds` until no
/// move lowers the objective or `max_passes` sweeps have run. Candidates
/// are scanned earliest slot first, lower population first.
pub(crate) fn local_search(problem: &Problem, bounds: &Bounds, sched: &mut IntSchedule, max_passes: usize) {
    let tau = problem.tau;
    if tau == 0 {
        return;
    }
    let lo: Vec<i64> = bounds.lo.iter().map(|&v| v as i64).collect();
    let hi: Vec<i64> = bounds.hi.iter().map(|&v| v as i64).collect();
    let eps = 1e-12 * (1.0 + problem.cost_of_net(&sched.net) / problem.scale);
    for _ in 0..max_passes {
        let mut improved = false;
        for (n, prof) in problem.profiles.iter().enumerate() {
            let off = n * tau;
            for a in 0..tau {
                let starts_a = sched.cum[off + a] - if a > 0 { sched.cum[off + a - 1] } else { 0 };
                if starts_a <= 0 {
                    continue;
                }
                let mut best = (-eps, usize::MAX);
                // later: S_j - 1 >= lo_j for j in [a, b)
                for b in a + 1..tau {
                    let j = b - 1;
                    if sched.cum[off + j] - 1 < lo[off + j] {
                        break;
                    }
                    let d = move_delta(prof, &sched.net, a, b);
                    if d < best.0 {
                        best = (d, b);
                    }
                }
                // earlier: S_j + 1 <= hi_j for j in [b, a)
                for b in (0..a).rev() {
                    if sched.cum[off + b] + 1 > hi[off + b] {
                        break;
                    }
                    let d = move_delta(prof, &sched.net, a, b);
                    if d < best.0 {
                        best = (d, b);
                    }
                }
                if best.1 != usize::MAX {
                    let b = best.1;
                    apply_move(prof, &mut sched.net, a, b);
                    if b > a {
                        for j in a..b {
                            sched.cum[off + j] -= 1;
                        }
                    } else {
                        for j in b..a {
                            sched.cum[off + j] += 1;
                        }
                    }
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    // refresh accumulated floating error
    let xf: Vec<f64> = sched.cum.iter().map(|&v| v as f64).collect();
    sched.net = problem.net(&xf);
}

fn apply_move(prof: &[f64], net: &mut [f64], from: usize, to: usize) {
    let tau = net.len();
    for (i, p) in prof.iter().enumerate() {
        if from + i < tau {
            net[from + i] -= p;
        }
        if to + i < tau {
            net[to + i] += p;
        }
    }
}
