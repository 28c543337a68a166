//! Association and split-ratio block with resources held fixed.
//!
//! The Dinkelbach objective restricted to `(x, phi, T)` is the bilinear
//! program
//!
//! ```text
//! minimize  y w_t T + sum_n A_n phi_n + sum_nm B_nm x_nm + sum_nm G_nm x_nm phi_n
//! ```
//!
//! subject to binary rows, the split box, server caps and per-pair delay
//! bounds. It is lifted over `q = [phi; vec(x); 1]` (row-major `x`) into a
//! semidefinite relaxation, rounded by a capacity-replicated assignment and
//! finished by an exact LP in `(phi, T)`.

pub mod hungarian;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg;
use crate::matrix::Matrix;
use crate::model::{self, Resources, Scenario};
use crate::sdpsolver::{self, ConicProgram, Equality, Inequality, SdpSettings, SdpSolution, SymMatrix};
use crate::{Error, Result};

/// Delay of a pair as an affine function of the split once `x` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DelayPiece {
    /// Uplink seconds at `phi = 1`.
    pub uplink: f64,
    /// Server-training plus downlink seconds at `phi = 0`.
    pub offload: f64,
}

/// Coefficients of the association subproblem at fixed resources.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpCoeffs {
    pub y: f64,
    /// `y * w_t`, the weight of the delay bound.
    pub delay_weight: f64,
    /// `A_n`, linear in `phi_n`.
    pub a: Vec<f64>,
    /// `B_nm`, linear in `x_nm`; includes `-v_nm`.
    pub b: Matrix<f64>,
    /// `G_nm`, coefficient of `x_nm phi_n`.
    pub g: Matrix<f64>,
    /// Local-training seconds of user `n` at `phi = 1`.
    pub local: Vec<f64>,
    pub delay: Matrix<DelayPiece>,
    /// Pairs with positive rates both ways and positive server speed.
    pub usable: Matrix<bool>,
}

impl QcqpCoeffs {
    pub fn n_users(&self) -> usize {
        self.a.len()
    }

    pub fn n_servers(&self) -> usize {
        self.b.cols()
    }

    /// Part-1 objective of a binary association, split and delay bound.
    pub fn objective(&self, x: &Matrix<f64>, phi: &[f64], delay_bound: f64) -> f64 {
        let mut acc = self.delay_weight * delay_bound;
        for n in 0..self.n_users() {
            acc += self.a[n] * phi[n];
            for m in 0..self.n_servers() {
                if x[(n, m)] != 0.0 {
                    acc += x[(n, m)] * (self.b[(n, m)] + self.g[(n, m)] * phi[n]);
                }
            }
        }
        acc
    }

    /// Largest pair delay implied by `(x, phi)`.
    pub fn max_delay(&self, x: &Matrix<f64>, phi: &[f64]) -> f64 {
        let mut t = 0.0_f64;
        for n in 0..self.n_users() {
            t = t.max(self.local[n] * phi[n]);
            for m in 0..self.n_servers() {
                if x[(n, m)] != 0.0 {
                    let d = self.delay[(n, m)];
                    t = t.max(self.local[n] * phi[n] + x[(n, m)] * (d.offload + (d.uplink - d.offload) * phi[n]));
                }
            }
        }
        t
    }

    fn usable_count(&self, n: usize) -> usize {
        self.usable.row(n).iter().filter(|&&u| u).count()
    }
}

pub fn coeffs(scn: &Scenario, res: &Resources, y: f64) -> Result<QcqpCoeffs> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::InvalidInput(format!("Dinkelbach parameter must be finite and nonnegative, got {y}")));
    }
    let (n_users, n_servers) = (scn.n_users(), scn.n_servers());
    let k = y * scn.weight_energy;
    let mut a = vec![0.0; n_users];
    let mut local = vec![0.0; n_users];
    let mut b = Matrix::zeros(n_users, n_servers);
    let mut g = Matrix::zeros(n_users, n_servers);
    let mut delay = Matrix::filled(n_users, n_servers, DelayPiece::default());
    let mut usable = Matrix::filled(n_users, n_servers, false);
    for (n, u) in scn.users.iter().enumerate() {
        let fu = res.user_speed[n];
        if !(fu > 0.0) {
            return Err(Error::InvalidInput(format!("user {n} has no compute speed")));
        }
        let work = u.flops_per_param * u.params;
        a[n] = k * u.epochs * u.capacitance * work * fu * fu;
        local[n] = work * u.epochs / fu;
        let payload = u.params * scn.bits_per_param;
        for (m, s) in scn.servers.iter().enumerate() {
            let gain = scn.gain[(n, m)];
            let (bw, ps, fs) = (res.bandwidth[(n, m)], res.server_power[(n, m)], res.server_speed[(n, m)]);
            let up = model::link_rate(bw, res.user_power[n], gain, scn.noise_psd)?;
            let down = model::link_rate(bw, ps, gain, scn.noise_psd)?;
            if !(up > 0.0 && down > 0.0 && fs > 0.0) {
                continue;
            }
            usable[(n, m)] = true;
            let server_energy = s.epochs * s.capacitance * work * fs * fs;
            let down_energy = ps * payload / down;
            let up_energy = res.user_power[n] * payload / up;
            let v = model::service_score(ps, fs, bw, s, scn.score_scale, scn.score_norm);
            b[(n, m)] = k * (down_energy + server_energy) - v;
            g[(n, m)] = k * (up_energy - down_energy - server_energy);
            delay[(n, m)] = DelayPiece { uplink: payload / up, offload: work * s.epochs / fs + payload / down };
        }
        if !usable.row(n).iter().any(|&v| v) {
            return Err(Error::Infeasible(format!("user {n} has no server with positive rates and speed")));
        }
    }
    Ok(QcqpCoeffs { y, delay_weight: y * scn.weight_delay, a, b, g, local, delay, usable })
}

/// Sizes of the constraint families of the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub binary: usize,
    pub row_sum: usize,
    pub phi_box: usize,
    pub caps: usize,
    pub delay: usize,
    /// Homogenization and unusable-pair rows, outside the families above.
    pub extra: usize,
}

impl ConstraintCounts {
    pub fn families(&self) -> usize {
        self.binary + self.row_sum + self.phi_box + self.caps + self.delay
    }
}

/// The lifted program. Its scalar variable is the delay bound divided by
/// `time_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizedSdr {
    pub program: ConicProgram,
    pub n_users: usize,
    pub n_servers: usize,
    pub time_scale: f64,
    pub counts: ConstraintCounts,
}

impl HomogenizedSdr {
    pub fn dim(&self) -> usize {
        self.n_users + self.n_users * self.n_servers + 1
    }

    pub fn phi_index(&self, n: usize) -> usize {
        n
    }

    pub fn x_index(&self, n: usize, m: usize) -> usize {
        self.n_users + n * self.n_servers + m
    }

    pub fn hom_index(&self) -> usize {
        self.dim() - 1
    }

    /// `s s'` for `s = [phi; vec(x); 1]`.
    pub fn lift(&self, x: &Matrix<f64>, phi: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut s = nalgebra::DVector::zeros(d);
        for n in 0..self.n_users {
            s[self.phi_index(n)] = phi[n];
            for m in 0..self.n_servers {
                s[self.x_index(n, m)] = x[(n, m)];
            }
        }
        s[d - 1] = 1.0;
        &s * s.transpose()
    }

    /// Objective with the delay bound given in seconds.
    pub fn objective(&self, s: &DMatrix<f64>, delay_bound: f64) -> f64 {
        self.program.objective_value(s, delay_bound / self.time_scale)
    }
}

pub fn build_sdr(c: &QcqpCoeffs, res: &Resources, scn: &Scenario) -> HomogenizedSdr {
    let (n_users, n_servers) = (c.n_users(), c.n_servers());
    let d = n_users + n_users * n_servers + 1;
    let h = d - 1;
    let phi = |n: usize| n;
    let xi = |n: usize, m: usize| n_users + n * n_servers + m;

    let mut time_scale = 0.0_f64;
    for n in 0..n_users {
        time_scale = time_scale.max(c.local[n]);
        for m in 0..n_servers {
            if c.usable[(n, m)] {
                let p = c.delay[(n, m)];
                time_scale = time_scale.max(p.offload).max(c.local[n] + p.uplink);
            }
        }
    }
    if !(time_scale > 0.0) {
        time_scale = 1.0;
    }

    let mut prog = ConicProgram::new(d);
    for n in 0..n_users {
        prog.objective.add(phi(n), h, 0.5 * c.a[n]);
        for m in 0..n_servers {
            if c.usable[(n, m)] {
                prog.objective.add(xi(n, m), h, 0.5 * c.b[(n, m)]);
                prog.objective.add(phi(n), xi(n, m), 0.5 * c.g[(n, m)]);
            }
        }
    }
    prog.scalar_weight = c.delay_weight * time_scale;
    prog.scalar_upper = Some(2.0);

    let eq = |m: SymMatrix, rhs: f64| Equality { matrix: m, rhs };
    let ineq = |m: SymMatrix, t: f64, rhs: f64| Inequality { matrix: m, scalar_coeff: t, rhs };
    let mut extra = 0;

    prog.equalities.push(eq(SymMatrix::new(d).with(h, h, 1.0), 1.0));
    extra += 1;
    for n in 0..n_users {
        for m in 0..n_servers {
            prog.equalities.push(eq(SymMatrix::new(d).with(xi(n, m), xi(n, m), 1.0).with(xi(n, m), h, -0.5), 0.0));
        }
    }
    for n in 0..n_users {
        for m in 0..n_servers {
            if !c.usable[(n, m)] {
                prog.equalities.push(eq(SymMatrix::new(d).with(xi(n, m), xi(n, m), 1.0), 0.0));
                extra += 1;
            }
        }
    }
    for n in 0..n_users {
        let mut row = SymMatrix::new(d);
        for m in 0..n_servers {
            row.add(xi(n, m), h, 0.5);
        }
        prog.equalities.push(eq(row, 1.0));
    }
    for n in 0..n_users {
        prog.inequalities.push(ineq(SymMatrix::new(d).with(phi(n), h, -0.5), 0.0, 0.0));
        prog.inequalities.push(ineq(SymMatrix::new(d).with(phi(n), phi(n), 1.0).with(phi(n), h, -0.5), 0.0, 0.0));
    }
    for (m, s) in scn.servers.iter().enumerate() {
        for (cap, share) in [
            (s.bandwidth, &res.bandwidth),
            (s.max_power, &res.server_power),
            (s.max_speed, &res.server_speed),
        ] {
            // A zero cap keeps its row unnormalized with a zero right-hand side.
            let (scale, rhs) = if cap > 0.0 { (1.0 / cap, 1.0) } else { (1.0, 0.0) };
            let mut row = SymMatrix::new(d);
            for n in 0..n_users {
                if c.usable[(n, m)] {
                    row.add(xi(n, m), h, 0.5 * share[(n, m)] * scale);
                }
            }
            prog.inequalities.push(ineq(row, 0.0, rhs));
        }
    }
    for n in 0..n_users {
        for m in 0..n_servers {
            let mut row = SymMatrix::new(d).with(phi(n), h, 0.5 * c.local[n] / time_scale);
            if c.usable[(n, m)] {
                let p = c.delay[(n, m)];
                row.add(xi(n, m), h, 0.5 * p.offload / time_scale);
                row.add(phi(n), xi(n, m), 0.5 * (p.uplink - p.offload) / time_scale);
            }
            prog.inequalities.push(ineq(row, -1.0, 0.0));
        }
    }
    let nm = n_users * n_servers;
    HomogenizedSdr {
        program: prog,
        n_users,
        n_servers,
        time_scale,
        counts: ConstraintCounts { binary: nm, row_sum: n_users, phi_box: 2 * n_users, caps: 3 * n_servers, delay: nm, extra },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub s: DMatrix<f64>,
    /// Seconds.
    pub delay_bound: f64,
    pub objective: f64,
    /// Lower bound on the Part-1 optimum: the smaller of the primal and dual values.
    pub lower_bound: f64,
    pub solution: SdpSolution,
}

pub fn solve_relaxation(sdr: &HomogenizedSdr, settings: &SdpSettings) -> Result<Relaxation> {
    let sol = sdpsolver::solve(&sdr.program, settings)?;
    if !sol.converged() && sol.primal_residual > 1e-4 {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
        });
    }
    Ok(Relaxation {
        s: sol.s.clone(),
        delay_bound: sol.scalar * sdr.time_scale,
        objective: sol.objective,
        lower_bound: sol.objective.min(sol.dual_objective),
        solution: sol,
    })
}

/// Weight given to assignments onto unusable pairs.
const FORBIDDEN_WEIGHT: f64 = -1e6;

/// Fractional association read off a lifted matrix, clipped to `[0, 1]`
/// with row sums at most one.
pub fn fractional_association(s: &DMatrix<f64>, n_users: usize, n_servers: usize) -> Result<Matrix<f64>> {
    let d = n_users + n_users * n_servers + 1;
    if s.nrows() != d || s.ncols() != d {
        return Err(Error::InvalidInput(format!("lifted matrix is {}x{}, expected {d}x{d}", s.nrows(), s.ncols())));
    }
    let h = d - 1;
    let col: Vec<f64> = if s[(h, h)] > 1e-12 {
        (0..d).map(|i| s[(i, h)] / s[(h, h)]).collect()
    } else {
        let (vals, vecs) = linalg::sym_eigen(s);
        let top = vals[d - 1];
        let second = if d > 1 { vals[d - 2] } else { 0.0 };
        if !(top > 1e-12) || top - second <= 1e-9 * top {
            return Err(Error::RoundingFailed("lifted matrix has no dominant direction".into()));
        }
        let v = vecs.column(d - 1);
        if v[h].abs() > 1e-12 {
            (0..d).map(|i| v[i] / v[h]).collect()
        } else {
            let sign = if (n_users..h).map(|i| v[i]).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            (0..d).map(|i| sign * v[i]).collect()
        }
    };
    let mut x = Matrix::from_fn(n_users, n_servers, |n, m| col[n_users + n * n_servers + m].clamp(0.0, 1.0));
    for n in 0..n_users {
        let sum = x.row_sum(n);
        if sum > 1.0 {
            for v in x.row_mut(n) {
                *v /= sum;
            }
        }
    }
    Ok(x)
}

/// `ceil(N / M)` slots for every server.
pub fn balanced_slots(n_users: usize, n_servers: usize) -> Vec<usize> {
    vec![n_users.div_ceil(n_servers); n_servers]
}

/// Per server, the most users its caps can host at the fixed per-pair
/// shares: the largest `k` for which the `k` smallest usable shares of
/// every resource fit under the cap.
pub fn cap_slots(scn: &Scenario, res: &Resources, usable: &Matrix<bool>) -> Vec<usize> {
    let n_users = scn.n_users();
    scn.servers
        .iter()
        .enumerate()
        .map(|(m, s)| {
            [(s.bandwidth, &res.bandwidth), (s.max_power, &res.server_power), (s.max_speed, &res.server_speed)]
                .iter()
                .map(|(cap, share)| {
                    let mut v: Vec<f64> = (0..n_users).filter(|&n| usable[(n, m)]).map(|n| share[(n, m)]).collect();
                    v.sort_by(f64::total_cmp);
                    let mut used = 0.0;
                    v.iter()
                        .take_while(|&&x| {
                            used += x;
                            used / cap <= 1.0 + model::FEASIBILITY_TOL
                        })
                        .count()
                })
                .min()
                .unwrap_or(0)
        })
        .collect()
}

/// Binary association from a lifted matrix: server `m` is replicated into
/// `slots[m]` slots and the fractional association is matched to them.
pub fn round_association(
    s: &DMatrix<f64>,
    n_users: usize,
    n_servers: usize,
    usable: Option<&Matrix<bool>>,
    slots: &[usize],
) -> Result<Matrix<f64>> {
    let frac = fractional_association(s, n_users, n_servers)?;
    if slots.len() != n_servers {
        return Err(Error::InvalidInput(format!("{} slot counts for {n_servers} servers", slots.len())));
    }
    let owner: Vec<usize> = slots.iter().enumerate().flat_map(|(m, &k)| core::iter::repeat_n(m, k)).collect();
    if owner.len() < n_users {
        return Err(Error::RoundingFailed(format!("{} server slots for {n_users} users", owner.len())));
    }
    let size = owner.len();
    let weights = Matrix::from_fn(size, size, |n, j| {
        if n >= n_users {
            return 0.0;
        }
        let m = owner[j];
        match usable {
            Some(u) if !u[(n, m)] => FORBIDDEN_WEIGHT,
            _ => frac[(n, m)],
        }
    });
    let assign = hungarian::max_weight_assignment(&weights);
    let choice: Vec<usize> = assign[..n_users].iter().map(|&j| owner[j]).collect();
    if let Some(u) = usable {
        if let Some(n) = (0..n_users).find(|&n| !u[(n, choice[n])]) {
            return Err(Error::RoundingFailed(format!("no usable slot left for user {n}")));
        }
    }
    Ok(model::association_from_choice(n_servers, &choice))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiFit {
    pub phi: Vec<f64>,
    /// Seconds.
    pub delay_bound: f64,
    pub objective: f64,
}

/// Exact minimizer of the Part-1 objective over `(phi, T)` for a binary `x`.
///
/// With `x` fixed each user's delay is `offload + k phi` with `k = local +
/// uplink - offload`, so the value as a function of `T` is convex piecewise
/// linear with breakpoints at the delays of `phi = 0` and `phi = 1`.
pub fn refit_phi(x: &Matrix<f64>, c: &QcqpCoeffs) -> Result<PhiFit> {
    let n_users = c.n_users();
    let mut server = Vec::with_capacity(n_users);
    for n in 0..n_users {
        let m = model::association_server(x, n).ok_or_else(|| Error::InvalidInput(format!("user {n} is not associated")))?;
        if !c.usable[(n, m)] {
            return Err(Error::InfeasiblePair { user: n, server: m });
        }
        server.push(m);
    }
    let base: Vec<f64> = (0..n_users).map(|n| c.delay[(n, server[n])].offload).collect();
    let slope: Vec<f64> = (0..n_users).map(|n| c.local[n] + c.delay[(n, server[n])].uplink - base[n]).collect();
    let cost: Vec<f64> = (0..n_users).map(|n| c.a[n] + c.g[(n, server[n])]).collect();
    let constant: f64 = (0..n_users).map(|n| c.b[(n, server[n])]).sum();

    let t_min = (0..n_users).map(|n| base[n].min(base[n] + slope[n])).fold(0.0, f64::max);
    let mut candidates = vec![t_min];
    for n in 0..n_users {
        for t in [base[n], base[n] + slope[n]] {
            if t > t_min {
                candidates.push(t);
            }
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let phi_at = |t: f64| -> Vec<f64> {
        (0..n_users)
            .map(|n| {
                let (b, k) = (base[n], slope[n]);
                // feasible phi: b + k phi <= t
                let (lo, hi) = if k > 0.0 {
                    (0.0, ((t - b) / k).clamp(0.0, 1.0))
                } else if k < 0.0 {
                    (((t - b) / k).clamp(0.0, 1.0), 1.0)
                } else {
                    (0.0, 1.0)
                };
                if cost[n] < 0.0 {
                    hi
                } else {
                    lo
                }
            })
            .collect()
    };

    let mut best: Option<PhiFit> = None;
    for &t in &candidates {
        let phi = phi_at(t);
        let t_used = (0..n_users).map(|n| base[n] + slope[n] * phi[n]).fold(0.0, f64::max);
        let objective = c.delay_weight * t_used + (0..n_users).map(|n| cost[n] * phi[n]).sum::<f64>() + constant;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(PhiFit { phi, delay_bound: t_used, objective });
        }
    }
    best.ok_or_else(|| Error::Infeasible("no delay bound candidate".into()))
}

/// Whether `x` respects the server caps at the fixed resources.
pub fn caps_respected(scn: &Scenario, res: &Resources, x: &Matrix<f64>) -> bool {
    scn.servers.iter().enumerate().all(|(m, s)| {
        [(s.bandwidth, &res.bandwidth), (s.max_power, &res.server_power), (s.max_speed, &res.server_speed)]
            .iter()
            .all(|(cap, share)| {
                let used: f64 = (0..scn.n_users()).map(|n| x[(n, m)] * share[(n, m)]).sum();
                used / cap <= 1.0 + model::FEASIBILITY_TOL
            })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part1Source {
    /// The rounded relaxation improved on the incumbent.
    Relaxation,
    /// The incumbent association was kept.
    Incumbent,
    /// Every user had a single usable server.
    Forced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part1Outcome {
    pub x: Matrix<f64>,
    pub phi: Vec<f64>,
    pub delay_bound: f64,
    pub objective: f64,
    pub lower_bound: Option<f64>,
    pub source: Part1Source,
    pub sdp_iterations: usize,
}

/// One association step: relax, round, refit, and keep the incumbent `x`
/// (with its split refitted) when rounding does not improve on it.
pub fn solve_part1(
    scn: &Scenario,
    res: &Resources,
    incumbent: Option<&Matrix<f64>>,
    y: f64,
    settings: &SdpSettings,
) -> Result<Part1Outcome> {
    let c = coeffs(scn, res, y)?;
    let n_users = c.n_users();
    let outcome = |x: Matrix<f64>, fit: PhiFit, lb, source, it| Part1Outcome {
        x,
        phi: fit.phi,
        delay_bound: fit.delay_bound,
        objective: fit.objective,
        lower_bound: lb,
        source,
        sdp_iterations: it,
    };
    if (0..n_users).all(|n| c.usable_count(n) == 1) {
        let choice: Vec<usize> = (0..n_users).map(|n| c.usable.row(n).iter().position(|&u| u).unwrap_or(0)).collect();
        let x = model::association_from_choice(c.n_servers(), &choice);
        let fit = refit_phi(&x, &c)?;
        return Ok(outcome(x, fit, None, Part1Source::Forced, 0));
    }
    let inc = incumbent.and_then(|x| refit_phi(x, &c).ok().map(|fit| (x.clone(), fit)));
    let sdr = build_sdr(&c, res, scn);
    let relaxed = solve_relaxation(&sdr, settings).and_then(|relax| {
        let slots = cap_slots(scn, res, &c.usable);
        let x = round_association(&relax.s, n_users, c.n_servers(), Some(&c.usable), &slots)?;
        if !caps_respected(scn, res, &x) {
            return Err(Error::RoundingFailed("rounded association exceeds a server cap".into()));
        }
        let fit = refit_phi(&x, &c)?;
        Ok((x, fit, relax))
    });
    match (relaxed, inc) {
        (Ok((x, fit, relax)), Some((xi, fi))) => {
            let (lb, it) = (Some(relax.lower_bound), relax.solution.iterations);
            if fit.objective < fi.objective {
                Ok(outcome(x, fit, lb, Part1Source::Relaxation, it))
            } else {
                Ok(outcome(xi, fi, lb, Part1Source::Incumbent, it))
            }
        }
        (Ok((x, fit, relax)), None) => {
            Ok(outcome(x, fit, Some(relax.lower_bound), Part1Source::Relaxation, relax.solution.iterations))
        }
        (Err(_), Some((xi, fi))) => Ok(outcome(xi, fi, None, Part1Source::Incumbent, 0)),
        (Err(e), None) => Err(e),
    }
}
