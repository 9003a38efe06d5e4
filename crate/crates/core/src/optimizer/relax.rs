//! Continuous relaxation of the start-scheduling problem.
//!
//! Decision variables are cumulative start counts `S[n][t]`, which turns the
//! availability, deadline and non-negativity constraints into a monotone
//! chain with monotone box bounds per population. Projection onto that set
//! is isotonic regression followed by clamping, so an accelerated projected
//! gradient method handles the relaxation, and the linear minimisation
//! oracle over the same set gives a certified Frank-Wolfe lower bound.

/// Dense problem data in cumulative-start form.
#[derive(Clone, Debug)]
pub(crate) struct Problem {
    pub tau: usize,
    pub profiles: Vec<Vec<f64>>,
    /// inflexible + committed - renewables; may be negative.
    pub base_net: Vec<f64>,
    /// dt / k
    pub scale: f64,
    pub bounds: Bounds,
}

/// Monotone lower/upper bounds on cumulative starts, flattened as
/// `n * tau + t`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn is_consistent(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l <= h)
    }

    /// Tighten `S[idx] <= value`, propagating to earlier steps of the chain.
    pub fn cap(&mut self, tau: usize, idx: usize, value: f64) {
        let start = idx - idx % tau;
        for j in start..=idx {
            self.hi[j] = self.hi[j].min(value);
        }
    }

    /// Tighten `S[idx] >= value`, propagating to later steps of the chain.
    pub fn floor(&mut self, tau: usize, idx: usize, value: f64) {
        let end = idx - idx % tau + tau;
        for j in idx..end {
            self.lo[j] = self.lo[j].max(value);
        }
    }
}

impl Problem {
    pub fn npop(&self) -> usize {
        self.profiles.len()
    }

    pub fn nvars(&self) -> usize {
        self.tau * self.npop()
    }

    /// Net conventional demand (before the max(0, .) cut) for cumulative
    /// starts `x`.
    pub fn net(&self, x: &[f64]) -> Vec<f64> {
        let tau = self.tau;
        let mut net = self.base_net.clone();
        for (n, prof) in self.profiles.iter().enumerate() {
            let s = &x[n * tau..(n + 1) * tau];
            for t in 0..tau {
                let sigma = s[t] - if t > 0 { s[t - 1] } else { 0.0 };
                if sigma == 0.0 {
                    continue;
                }
                for (i, p) in prof.iter().enumerate() {
                    if t + i >= tau {
                        break;
                    }
                    net[t + i] += sigma * p;
                }
            }
        }
        net
    }

    pub fn cost_of_net(&self, net: &[f64]) -> f64 {
        net.iter().map(|v| v.max(0.0)).map(|g| 0.5 * g * g).sum::<f64>() * self.scale
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost_of_net(&self.net(x))
    }

    /// Objective and gradient with respect to cumulative starts.
    pub fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let tau = self.tau;
        let net = self.net(x);
        let pg: Vec<f64> = net.iter().map(|v| v.max(0.0)).collect();
        let f = pg.iter().map(|g| 0.5 * g * g).sum::<f64>() * self.scale;
        for (n, prof) in self.profiles.iter().enumerate() {
            // d f / d sigma[s]
            let mut gs = vec![0.0; tau + 1];
            for (s, g) in gs.iter_mut().enumerate().take(tau) {
                let mut acc = 0.0;
                for (i, p) in prof.iter().enumerate() {
                    if s + i >= tau {
                        break;
                    }
                    acc += pg[s + i] * p;
                }
                *g = acc * self.scale;
            }
            for t in 0..tau {
                grad[n * tau + t] = gs[t] - gs[t + 1];
            }
        }
        f
    }

    /// Upper bound on the gradient's Lipschitz constant. The map from
    /// cumulative starts to flexible demand is a convolution with the
    /// first difference of each profile, whose operator norm is at most the
    /// profile's total variation.
    pub fn lipschitz(&self) -> f64 {
        let tv2: f64 = self
            .profiles
            .iter()
            .map(|p| {
                let mut tv = p[0] + p[p.len() - 1];
                for w in p.windows(2) {
                    tv += (w[1] - w[0]).abs();
                }
                tv * tv
            })
            .sum();
        (tv2 * self.scale).max(1e-300)
    }
}

/// Euclidean projection onto the monotone chains within the box bounds.
///
/// Pool-adjacent-violators with box-constrained blocks: a pooled block
/// takes the mean of its members clamped to the intersection of their
/// boxes. With monotone bounds that intersection is `[lo[last], hi[first]]`
/// and it is never empty for blocks that need pooling.
pub(crate) fn project(tau: usize, bounds: &Bounds, y: &mut [f64]) {
    if tau == 0 {
        return;
    }
    for (n, chunk) in y.chunks_mut(tau).enumerate() {
        let off = n * tau;
        bounded_isotonic(chunk, &bounds.lo[off..off + tau], &bounds.hi[off..off + tau]);
    }
}

fn bounded_isotonic(y: &mut [f64], lo: &[f64], hi: &[f64]) {
    // (sum, count, first index) per block
    let mut blocks: Vec<(f64, usize, usize)> = Vec::with_capacity(y.len());
    let value = |b: &(f64, usize, usize)| (b.0 / b.1 as f64).clamp(lo[b.2 + b.1 - 1], hi[b.2]);
    for (t, &v) in y.iter().enumerate() {
        blocks.push((v, 1, t));
        while blocks.len() > 1 {
            let b2 = blocks[blocks.len() - 1];
            let b1 = blocks[blocks.len() - 2];
            if value(&b1) > value(&b2) {
                blocks.pop();
                *blocks.last_mut().unwrap() = (b1.0 + b2.0, b1.1 + b2.1, b1.2);
            } else {
                break;
            }
        }
    }
    for b in &blocks {
        let v = value(b);
        for x in &mut y[b.2..b.2 + b.1] {
            *x = v;
        }
    }
}

/// Pool-adjacent-violators for a non-decreasing least-squares fit.
#[cfg(test)]
pub(crate) fn isotonic_in_place(y: &mut [f64]) {
    let n = y.len();
    bounded_isotonic(y, &vec![f64::NEG_INFINITY; n], &vec![f64::INFINITY; n]);
}

/// Minimises `g . S` over one monotone chain with monotone bounds. Some
/// optimum takes only bound values, so a dynamic program over the sorted
/// distinct bound values is exact.
pub(crate) fn linear_min_chain(g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut values: Vec<f64> = lo.iter().chain(hi).copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let inf = f64::INFINITY;
    // best[v]: minimum of the prefix objective with S_t = values[v]
    let mut best = vec![inf; values.len()];
    for (t, &gt) in g.iter().enumerate() {
        let mut running = if t == 0 { 0.0 } else { inf };
        let mut next = vec![inf; values.len()];
        for (vi, &v) in values.iter().enumerate() {
            if t > 0 {
                running = running.min(best[vi]);
            }
            if v >= lo[t] && v <= hi[t] && running < inf {
                next[vi] = running + gt * v;
            }
        }
        best = next;
    }
    best.into_iter().fold(inf, f64::min)
}

#[derive(Clone, Debug)]
pub(crate) struct Relaxation {
    pub x: Vec<f64>,
    /// Certified lower bound on the relaxation optimum.
    pub lower_bound: f64,
}

pub(crate) struct RelaxSettings {
    pub max_iterations: usize,
    pub stationarity_tol: f64,
    pub rel_gap_tol: f64,
}

fn frank_wolfe_bound(problem: &Problem, bounds: &Bounds, x: &[f64], grad: &[f64], value: f64) -> f64 {
    let tau = problem.tau;
    let mut lin = 0.0;
    for n in 0..problem.npop() {
        let r = n * tau..(n + 1) * tau;
        let g = &grad[r.clone()];
        let m = linear_min_chain(g, &bounds.lo[r.clone()], &bounds.hi[r.clone()]);
        let at_x: f64 = g.iter().zip(&x[r]).map(|(a, b)| a * b).sum();
        lin += m - at_x;
    }
    value + lin.min(0.0)
}

/// Accelerated projected gradient with function-value restarts.
pub(crate) fn solve_relaxation(problem: &Problem, bounds: &Bounds, start: Option<&[f64]>, s: &RelaxSettings) -> Relaxation {
    let nv = problem.nvars();
    let tau = problem.tau;
    let mut x: Vec<f64> = match start {
        Some(x0) => x0.to_vec(),
        None => bounds.lo.iter().zip(&bounds.hi).map(|(l, h)| 0.5 * (l + h)).collect(),
    };
    project(tau, bounds, &mut x);
    let mut grad = vec![0.0; nv];
    if nv == 0 {
        let v = problem.objective(&x);
        return Relaxation { x, lower_bound: v };
    }
    let step = 1.0 / problem.lipschitz();
    let mut fx = problem.value_and_grad(&x, &mut grad);
    let mut lb = frank_wolfe_bound(problem, bounds, &x, &grad, fx);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut gy = vec![0.0; nv];
    let mut xn = vec![0.0; nv];
    for it in 0..s.max_iterations {
        if fx - lb <= s.rel_gap_tol * fx.abs().max(1e-12) {
            break;
        }
        let _ = problem.value_and_grad(&y, &mut gy);
        for i in 0..nv {
            xn[i] = y[i] - step * gy[i];
        }
        project(tau, bounds, &mut xn);
        let mut mapping = 0.0f64;
        let mut gmax = 0.0f64;
        for i in 0..nv {
            mapping = mapping.max((xn[i] - y[i]).abs());
            gmax = gmax.max(gy[i].abs());
        }
        let fxn = problem.value_and_grad(&xn, &mut grad);
        if fxn > fx {
            if momentum == 1.0 {
                // plain projected step failed to descend: numerically stalled
                break;
            }
            // restart momentum from the last accepted point
            y.copy_from_slice(&x);
            momentum = 1.0;
            continue;
        }
        let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next;
        for i in 0..nv {
            y[i] = xn[i] + beta * (xn[i] - x[i]);
        }
        momentum = next;
        std::mem::swap(&mut x, &mut xn);
        fx = fxn;
        if it % 20 == 0 || mapping / step <= s.stationarity_tol * gmax.max(1.0) {
            lb = lb.max(frank_wolfe_bound(problem, bounds, &x, &grad, fx));
            if mapping / step <= s.stationarity_tol * gmax.max(1.0) {
                break;
            }
        }
    }
    let _ = problem.value_and_grad(&x, &mut grad);
    lb = lb.max(frank_wolfe_bound(problem, bounds, &x, &grad, fx));
    Relaxation { x, lower_bound: lb.min(fx) }
}
