//! Exhaustive and finite-difference checks for the solver blocks.
//!
//! Everything here evaluates allocations through its own transcription of
//! the system formulas (`reference_cost`) rather than through `model`, so a
//! mismatch between the two shows up in tests.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::model::{Allocation, Resources, Scenario};
use crate::resources::ResourceVars;
use crate::{Error, Result};

/// Largest association enumeration `M^N` accepted.
pub const MAX_ASSOCIATIONS: f64 = 1e5;
/// Largest user count for the exhaustive algorithm, which repeats the
/// enumeration in every outer iteration.
pub const MAX_ORACLE_USERS: usize = 8;
/// Largest grid accepted by `grid_resource_search`.
pub const MAX_GRID_POINTS: usize = 1_000_000;

/// Delay bound, energy and score of an allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCost {
    pub delay: f64,
    pub energy: f64,
    pub score: f64,
}

impl ReferenceCost {
    pub fn ratio(&self, scn: &Scenario) -> f64 {
        self.score / (scn.weight_delay * self.delay + scn.weight_energy * self.energy)
    }

    /// `y w_t T + y w_e E - V`, the quantity the association step minimizes.
    pub fn part1_objective(&self, scn: &Scenario, y: f64) -> f64 {
        y * scn.weight_delay * self.delay + y * scn.weight_energy * self.energy - self.score
    }
}

fn shannon(b: f64, p: f64, g: f64, noise: f64) -> f64 {
    if b <= 0.0 || p <= 0.0 {
        return 0.0;
    }
    b * libm::log2(1.0 + g * p / (noise * b))
}

/// Costs of a binary allocation with the delay bound at the largest user
/// delay. `None` when a phase has work but no rate or speed, or `x` is not
/// a valid association.
pub fn reference_cost(scn: &Scenario, a: &Allocation) -> Option<ReferenceCost> {
    let r = &a.resources;
    let (mut delay, mut energy, mut score) = (0.0_f64, 0.0, 0.0);
    for (n, u) in scn.users.iter().enumerate() {
        let row = a.x.row(n);
        if row.iter().filter(|&&v| v == 1.0).count() != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return None;
        }
        let m = row.iter().position(|&v| v == 1.0)?;
        let s = &scn.servers[m];
        let phi = a.phi[n];
        let bits = u.params * scn.bits_per_param;
        let flops = u.params * u.flops_per_param;
        let (b, pu, ps, fu, fs) = (r.bandwidth[(n, m)], r.user_power[n], r.server_power[(n, m)], r.user_speed[n], r.server_speed[(n, m)]);
        let g = scn.gain[(n, m)];
        let mut t = 0.0;
        let mut e = 0.0;
        if phi > 0.0 {
            let up = shannon(b, pu, g, scn.noise_psd);
            if fu <= 0.0 || up <= 0.0 {
                return None;
            }
            t += u.epochs * phi * flops / fu + phi * bits / up;
            e += u.epochs * u.capacitance * phi * flops * fu * fu + pu * phi * bits / up;
        }
        if phi < 1.0 {
            let down = shannon(b, ps, g, scn.noise_psd);
            if fs <= 0.0 || down <= 0.0 {
                return None;
            }
            t += s.epochs * (1.0 - phi) * flops / fs + (1.0 - phi) * bits / down;
            e += s.epochs * s.capacitance * (1.0 - phi) * flops * fs * fs + ps * (1.0 - phi) * bits / down;
        }
        delay = delay.max(t);
        energy += e;
        score += scn.score_scale * libm::log(1.0 + scn.score_norm * (ps / s.max_power + fs / s.max_speed + b / s.bandwidth));
    }
    Some(ReferenceCost { delay, energy, score })
}

/// Refuses enumerations above the desk-scale limits.
pub fn check_enumeration_size(n_users: usize, n_servers: usize) -> Result<()> {
    let count = libm::pow(n_servers as f64, n_users as f64);
    if count > MAX_ASSOCIATIONS || n_users > MAX_ORACLE_USERS {
        return Err(Error::TooLarge(format!(
            "{n_users} users and {n_servers} servers give {count} associations; \
             exhaustive search is limited to {MAX_ORACLE_USERS} users and {MAX_ASSOCIATIONS} associations"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub x: Matrix<f64>,
    pub phi: Vec<f64>,
    /// Smallest `y w_t T + y w_e E - V`.
    pub objective: f64,
    pub evaluated: usize,
}

fn with_phi(x: &Matrix<f64>, phi: &[f64], res: &Resources) -> Allocation {
    Allocation { x: x.clone(), phi: phi.to_vec(), resources: res.clone(), delay_bound: 0.0 }
}

/// Best split for a fixed association. Per user, delay and objective are
/// affine in the split; they are read off the reference at splits 0 and 1.
/// For a fixed bound `T` each user's best split is an interval endpoint,
/// and the resulting objective is convex in `T`, so `T` is found by golden
/// section search.
fn best_split(scn: &Scenario, x: &Matrix<f64>, res: &Resources, y: f64) -> Option<(Vec<f64>, f64)> {
    let n_users = scn.n_users();
    // Delay and weighted energy of user n alone.
    let solo = |n: usize, p: f64| -> Option<(f64, f64)> {
        let mut single = scn.clone();
        single.users = vec![scn.users[n].clone()];
        single.gain = Matrix::from_fn(1, scn.n_servers(), |_, m| scn.gain[(n, m)]);
        let one = Allocation {
            x: Matrix::from_fn(1, scn.n_servers(), |_, m| x[(n, m)]),
            phi: vec![p],
            resources: Resources {
                bandwidth: Matrix::from_fn(1, scn.n_servers(), |_, m| res.bandwidth[(n, m)]),
                user_power: vec![res.user_power[n]],
                server_power: Matrix::from_fn(1, scn.n_servers(), |_, m| res.server_power[(n, m)]),
                user_speed: vec![res.user_speed[n]],
                server_speed: Matrix::from_fn(1, scn.n_servers(), |_, m| res.server_speed[(n, m)]),
            },
            delay_bound: 0.0,
        };
        let c = reference_cost(&single, &one)?;
        Some((c.delay, y * scn.weight_energy * c.energy))
    };
    let mut d0 = vec![0.0; n_users];
    let mut slope = vec![0.0; n_users];
    let mut cost = vec![0.0; n_users];
    for n in 0..n_users {
        let (t0, e0) = solo(n, 0.0)?;
        let (t1, e1) = solo(n, 1.0)?;
        d0[n] = t0;
        slope[n] = t1 - t0;
        cost[n] = e1 - e0;
    }
    let lo = (0..n_users).map(|n| d0[n].min(d0[n] + slope[n])).fold(0.0, f64::max);
    let hi = (0..n_users).map(|n| d0[n].max(d0[n] + slope[n])).fold(0.0, f64::max);
    let choose = |t: f64| -> Vec<f64> {
        (0..n_users)
            .map(|n| {
                let (a, s) = (d0[n], slope[n]);
                // feasible splits [p_lo, p_hi] with a + s p <= t.
                let (p_lo, p_hi) = if s > 0.0 {
                    (0.0, ((t - a) / s).clamp(0.0, 1.0))
                } else if s < 0.0 {
                    (((t - a) / s).clamp(0.0, 1.0), 1.0)
                } else {
                    (0.0, 1.0)
                };
                if cost[n] < 0.0 {
                    p_hi
                } else {
                    p_lo
                }
            })
            .collect()
    };
    let value = |t: f64| -> f64 {
        let p = choose(t);
        y * scn.weight_delay * t + (0..n_users).map(|n| cost[n] * p[n]).sum::<f64>()
    };
    let ratio = (libm::sqrt(5.0) - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if value(c) <= value(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for t in [lo, hi, 0.5 * (a + b)] {
        let phi = choose(t);
        let c = reference_cost(scn, &with_phi(x, &phi, res))?;
        let obj = c.part1_objective(scn, y);
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((phi, obj));
        }
    }
    best
}

fn split_on_grid(scn: &Scenario, x: &Matrix<f64>, res: &Resources, y: f64, steps: usize) -> Result<Option<(Vec<f64>, f64)>> {
    let n_users = scn.n_users();
    let total = libm::pow(steps as f64, n_users as f64);
    if steps < 2 || total > MAX_GRID_POINTS as f64 {
        return Err(Error::TooLarge(format!("split grid of {steps}^{n_users} points")));
    }
    let mut idx = vec![0usize; n_users];
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        let phi: Vec<f64> = idx.iter().map(|&i| i as f64 / (steps - 1) as f64).collect();
        if let Some(c) = reference_cost(scn, &with_phi(x, &phi, res)) {
            let obj = c.part1_objective(scn, y);
            if best.as_ref().is_none_or(|(_, o)| obj < *o) {
                best = Some((phi, obj));
            }
        }
        if !advance(&mut idx, steps) {
            break;
        }
    }
    Ok(best)
}

fn advance(idx: &mut [usize], base: usize) -> bool {
    let bases = vec![base; idx.len()];
    advance_mixed(idx, &bases)
}

/// Minimizes the association-step objective over every association at
/// fixed resources. The split is fitted exactly, or on a uniform grid of
/// `phi_grid` points per user when given.
pub fn brute_force_association(scn: &Scenario, res: &Resources, y: f64, phi_grid: Option<usize>) -> Result<BruteForce> {
    let (n_users, n_servers) = (scn.n_users(), scn.n_servers());
    if libm::pow(n_servers as f64, n_users as f64) > MAX_ASSOCIATIONS {
        return Err(Error::TooLarge(format!("{n_servers}^{n_users} associations")));
    }
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::InvalidInput(format!("Dinkelbach parameter must be finite and nonnegative, got {y}")));
    }
    let mut choice = vec![0usize; n_users];
    let mut best: Option<BruteForce> = None;
    let mut evaluated = 0;
    loop {
        let x = Matrix::from_fn(n_users, n_servers, |n, m| if choice[n] == m { 1.0 } else { 0.0 });
        if caps_hold(scn, res, &x) {
            let fit = match phi_grid {
                Some(steps) => split_on_grid(scn, &x, res, y, steps)?,
                None => best_split(scn, &x, res, y),
            };
            if let Some((phi, objective)) = fit {
                evaluated += 1;
                if best.as_ref().is_none_or(|b| objective < b.objective) {
                    best = Some(BruteForce { x, phi, objective, evaluated: 0 });
                }
            }
        }
        if !advance(&mut choice, n_servers) {
            break;
        }
    }
    let mut best = best.ok_or_else(|| Error::Infeasible("no association has finite delays within the caps".into()))?;
    best.evaluated = evaluated;
    Ok(best)
}

fn caps_hold(scn: &Scenario, res: &Resources, x: &Matrix<f64>) -> bool {
    scn.servers.iter().enumerate().all(|(m, s)| {
        let load = |t: &Matrix<f64>| (0..scn.n_users()).map(|n| x[(n, m)] * t[(n, m)]).sum::<f64>();
        load(&res.bandwidth) <= s.bandwidth * (1.0 + 1e-12)
            && load(&res.server_power) <= s.max_power * (1.0 + 1e-12)
            && load(&res.server_speed) <= s.max_speed * (1.0 + 1e-12)
    })
}

/// A resource of one user on its connected server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridVar {
    Bandwidth(usize),
    UserPower(usize),
    ServerPower(usize),
    UserSpeed(usize),
    ServerSpeed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub var: GridVar,
    /// Physical units.
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn points(&self) -> usize {
        self.axes.iter().map(|a| a.steps).product()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.axes.iter().find(|a| a.steps < 2 || !(a.lo <= a.hi)) {
            return Err(Error::InvalidInput(format!("grid axis {:?} needs lo <= hi and at least 2 steps", a.var)));
        }
        if self.axes.iter().map(|a| a.steps as f64).product::<f64>() > MAX_GRID_POINTS as f64 {
            return Err(Error::TooLarge(format!("grid of {} points", self.points())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridBest {
    pub vars: ResourceVars,
    /// `V - y w_t T - y w_e E` with `T` the largest delay.
    pub objective: f64,
}

fn set_var(r: &mut Resources, x: &Matrix<f64>, var: GridVar, value: f64) {
    let server = |n: usize| x.row(n).iter().position(|&v| v == 1.0).unwrap_or(0);
    match var {
        GridVar::Bandwidth(n) => r.bandwidth[(n, server(n))] = value,
        GridVar::UserPower(n) => r.user_power[n] = value,
        GridVar::ServerPower(n) => r.server_power[(n, server(n))] = value,
        GridVar::UserSpeed(n) => r.user_speed[n] = value,
        GridVar::ServerSpeed(n) => r.server_speed[(n, server(n))] = value,
    }
}

/// Exhaustive search of the resource-step objective over a grid; the
/// resources not on an axis stay at `base`. `None` when no grid point is
/// within the caps with finite delays.
pub fn grid_resource_search(
    scn: &Scenario,
    x: &Matrix<f64>,
    phi: &[f64],
    y: f64,
    base: &Resources,
    grid: &GridSpec,
) -> Result<Option<GridBest>> {
    grid.validate()?;
    let mut idx = vec![0usize; grid.axes.len()];
    let mut best: Option<GridBest> = None;
    let mut r = base.clone();
    loop {
        for (axis, &i) in grid.axes.iter().zip(&idx) {
            let value = axis.lo + (axis.hi - axis.lo) * i as f64 / (axis.steps - 1) as f64;
            set_var(&mut r, x, axis.var, value);
        }
        let users_ok = scn.users.iter().enumerate().all(|(n, u)| r.user_power[n] <= u.max_power && r.user_speed[n] <= u.max_speed);
        if users_ok && caps_hold(scn, &r, x) {
            if let Some(c) = reference_cost(scn, &with_phi(x, phi, &r)) {
                let objective = -c.part1_objective(scn, y);
                if best.as_ref().is_none_or(|b| objective > b.objective) {
                    best = Some(GridBest { vars: ResourceVars { resources: r.clone(), delay_bound: c.delay }, objective });
                }
            }
        }
        let steps: Vec<usize> = grid.axes.iter().map(|a| a.steps).collect();
        if !advance_mixed(&mut idx, &steps) {
            break;
        }
    }
    Ok(best)
}

/// Odometer step; false after the last tuple.
fn advance_mixed(idx: &mut [usize], bases: &[usize]) -> bool {
    for (d, &b) in idx.iter_mut().zip(bases) {
        *d += 1;
        if *d < b {
            return true;
        }
        *d = 0;
    }
    false
}

/// Central differences with step `h * |x_i|` (or `h` at zero).
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, point: &[f64], h: f64) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..point.len())
        .map(|i| {
            let step = if point[i] != 0.0 { h * point[i].abs() } else { h };
            p[i] = point[i] + step;
            let up = f(&p);
            p[i] = point[i] - step;
            let down = f(&p);
            p[i] = point[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}
