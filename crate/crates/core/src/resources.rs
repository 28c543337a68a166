//! Resource block with association and split held fixed.
//!
//! Every user has one server, so the free variables are, per user, the
//! shares `beta = b/b_max`, `pi_u = p_u/p_max_n`, `pi_s = p_s/p_max_m`,
//! `f_u/F_max_n`, `f_s/F_max_m`, plus the delay bound `tau = T / T_ref`.
//! Transmission energies `chi / r` are replaced by the quadratic transform
//! `chi^2 z + 1 / (4 r^2 z)`, which is exact at `z = 1 / (2 chi r)` and makes
//! the subproblem concave. It is solved by a log-barrier method with damped
//! Newton steps.
//!
//! With `w = k pi / beta`, the rate perspective `rho = beta ln(1 + w)` has
//!
//! ```text
//! rho_pi  = k / (1 + w)             rho_beta = ln(1 + w) - w / (1 + w)
//! rho_pipi = -k^2 / (beta (1+w)^2)  rho_betabeta = -w^2 / (beta (1+w)^2)
//! rho_betapi = k w / (beta (1+w)^2)
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::math;
use crate::matrix::Matrix;
use crate::model::{self, Allocation, Resources, Scenario};
use crate::{Error, Result};

const BW: usize = 0;
const PU: usize = 1;
const PS: usize = 2;
const FU: usize = 3;
const FS: usize = 4;
const PER_USER: usize = 5;

/// Resources together with the delay bound (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceVars {
    pub resources: Resources,
    pub delay_bound: f64,
}

/// Quadratic-transform auxiliaries, `None` where the transmission carries
/// no data.
#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub uplink: Matrix<Option<f64>>,
    pub downlink: Matrix<Option<f64>>,
}

/// Which resource kinds the concave solver may move; the delay bound is always free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeVars {
    pub bandwidth: bool,
    pub user_power: bool,
    pub server_power: bool,
    pub user_speed: bool,
    pub server_speed: bool,
}

impl FreeVars {
    pub const ALL: Self = Self { bandwidth: true, user_power: true, server_power: true, user_speed: true, server_speed: true };
    pub const BANDWIDTH_ONLY: Self =
        Self { bandwidth: true, user_power: false, server_power: false, user_speed: false, server_speed: false };

    fn kind(&self, k: usize) -> bool {
        match k {
            BW => self.bandwidth,
            PU => self.user_power,
            PS => self.server_power,
            FU => self.user_speed,
            _ => self.server_speed,
        }
    }
}

impl Default for FreeVars {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Part2Settings {
    /// Relative change of the objective that ends the transform iterations.
    pub fp_tol: f64,
    /// Barrier duality-gap target relative to the objective scale.
    pub kkt_tol: f64,
    pub max_outer: usize,
    pub free: FreeVars,
}

impl Default for Part2Settings {
    fn default() -> Self {
        Self { fp_tol: 1e-6, kkt_tol: 1e-6, max_outer: 20, free: FreeVars::ALL }
    }
}

/// `(chi_up, chi_down)` of pair `(n, m)`: transmit power times the bits sent.
pub fn chi(vars: &ResourceVars, scn: &Scenario, x: &Matrix<f64>, phi: &[f64], n: usize, m: usize) -> (f64, f64) {
    let r = &vars.resources;
    let payload = x[(n, m)] * scn.users[n].params * scn.bits_per_param;
    (r.user_power[n] * phi[n] * payload, r.server_power[(n, m)] * (1.0 - phi[n]) * payload)
}

fn rates(vars: &ResourceVars, scn: &Scenario, n: usize, m: usize) -> Result<(f64, f64)> {
    let r = &vars.resources;
    let g = scn.gain[(n, m)];
    let b = r.bandwidth[(n, m)];
    Ok((
        model::link_rate(b, r.user_power[n], g, scn.noise_psd)?,
        model::link_rate(b, r.server_power[(n, m)], g, scn.noise_psd)?,
    ))
}

/// Auxiliaries that make the transform exact at `vars`.
pub fn update_z(vars: &ResourceVars, scn: &Scenario, x: &Matrix<f64>, phi: &[f64]) -> Result<FpState> {
    let (n_users, n_servers) = (scn.n_users(), scn.n_servers());
    let mut uplink = Matrix::filled(n_users, n_servers, None);
    let mut downlink = Matrix::filled(n_users, n_servers, None);
    for n in 0..n_users {
        for m in 0..n_servers {
            let (c_up, c_dn) = chi(vars, scn, x, phi, n, m);
            if c_up == 0.0 && c_dn == 0.0 {
                continue;
            }
            let (r_up, r_dn) = rates(vars, scn, n, m)?;
            for (c, r, slot) in [(c_up, r_up, &mut uplink), (c_dn, r_dn, &mut downlink)] {
                if c != 0.0 {
                    if !(r > 0.0) {
                        return Err(Error::InfeasiblePair { user: n, server: m });
                    }
                    slot[(n, m)] = Some(1.0 / (2.0 * c * r));
                }
            }
        }
    }
    Ok(FpState { uplink, downlink })
}

/// The resource-block objective evaluated with exact energies:
/// `V - y w_t T - y w_e E`, with `T` the bound carried by `vars`.
pub fn direct_objective(vars: &ResourceVars, scn: &Scenario, x: &Matrix<f64>, phi: &[f64], y: f64) -> Result<f64> {
    let a = Allocation { x: x.clone(), phi: phi.to_vec(), resources: vars.resources.clone(), delay_bound: vars.delay_bound };
    let bd = model::evaluate(scn, &a)?;
    Ok(bd.total_score - y * (scn.weight_delay * vars.delay_bound + scn.weight_energy * bd.total_energy))
}

/// The transformed objective at fixed auxiliaries. Returns `-inf` when a
/// kept transmission term has no rate.
pub fn transformed_objective(
    vars: &ResourceVars,
    z: &FpState,
    scn: &Scenario,
    x: &Matrix<f64>,
    phi: &[f64],
    y: f64,
) -> Result<f64> {
    let prob = Part2Problem::new(scn, x, phi, y, 1.0)?;
    let v = prob.pack(vars);
    Ok(prob.objective(&v, Some(z)).unwrap_or(f64::NEG_INFINITY))
}

/// Rate value with first and second derivatives in `(beta, pi)`.
#[derive(Debug, Clone, Copy)]
struct RateD {
    r: f64,
    g: [f64; 2],
    h: [[f64; 2]; 2],
}

fn rate_d(scale: f64, k: f64, beta: f64, pi: f64) -> RateD {
    let w = k * pi / beta;
    let ln1w = math::ln_1p(w);
    let q = beta * (1.0 + w) * (1.0 + w);
    RateD {
        r: scale * beta * ln1w,
        g: [scale * (ln1w - w / (1.0 + w)), scale * k / (1.0 + w)],
        h: [[-scale * w * w / q, scale * k * w / q], [scale * k * w / q, -scale * k * k / q]],
    }
}

/// Per-user constants.
#[derive(Debug, Clone)]
struct UserTerms {
    server: usize,
    phi: f64,
    caps: [f64; PER_USER],
    k_up: f64,
    k_dn: f64,
    rate_scale: f64,
    payload: f64,
    local_work: f64,
    server_work: f64,
    /// `E1 = local_energy * (f_u share)^2`.
    local_energy: f64,
    server_energy: f64,
}

impl UserTerms {
    fn has_up(&self) -> bool {
        self.phi > 0.0
    }

    fn has_down(&self) -> bool {
        self.phi < 1.0
    }
}

/// Local derivative block of one user: value, gradient and Hessian over
/// `[beta, pi_u, pi_s, f_u, f_s]`.
#[derive(Debug, Clone, Copy)]
struct Block {
    v: f64,
    g: [f64; PER_USER],
    h: [[f64; PER_USER]; PER_USER],
}

impl Block {
    fn zero() -> Self {
        Self { v: 0.0, g: [0.0; PER_USER], h: [[0.0; PER_USER]; PER_USER] }
    }

    /// Adds `c / r` (inverse power 1) or `c / r^2` (power 2) for a rate over `(0, j)`.
    fn add_inverse_rate(&mut self, c: f64, rd: &RateD, j: usize, power: i32) {
        let idx = [BW, j];
        let r = rd.r;
        let (v, gs, hs, hl) = if power == 1 {
            (1.0 / r, -1.0 / (r * r), 2.0 / (r * r * r), -1.0 / (r * r))
        } else {
            (1.0 / (r * r), -2.0 / (r * r * r), 6.0 / (r * r * r * r), -2.0 / (r * r * r))
        };
        self.v += c * v;
        for a in 0..2 {
            self.g[idx[a]] += c * gs * rd.g[a];
            for b in 0..2 {
                self.h[idx[a]][idx[b]] += c * (hs * rd.g[a] * rd.g[b] + hl * rd.h[a][b]);
            }
        }
    }
}

/// The resource subproblem in normalized coordinates, `5 N + 1` entries.
#[derive(Debug, Clone)]
pub struct Part2Problem<'a> {
    scn: &'a Scenario,
    y: f64,
    users: Vec<UserTerms>,
    t_ref: f64,
}

impl<'a> Part2Problem<'a> {
    pub fn new(scn: &'a Scenario, x: &Matrix<f64>, phi: &[f64], y: f64, t_ref: f64) -> Result<Self> {
        let mut users = Vec::with_capacity(scn.n_users());
        for (n, u) in scn.users.iter().enumerate() {
            let m = model::association_server(x, n).ok_or_else(|| Error::InvalidInput(format!("user {n} is not associated")))?;
            let s = &scn.servers[m];
            let p = phi[n];
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("split of user {n} is {p}, outside [0, 1]")));
            }
            let g = scn.gain[(n, m)];
            let work = u.flops_per_param * u.params;
            users.push(UserTerms {
                server: m,
                phi: p,
                caps: [s.bandwidth, u.max_power, s.max_power, u.max_speed, s.max_speed],
                k_up: g * u.max_power / (scn.noise_psd * s.bandwidth),
                k_dn: g * s.max_power / (scn.noise_psd * s.bandwidth),
                rate_scale: s.bandwidth / core::f64::consts::LN_2,
                payload: u.params * scn.bits_per_param,
                local_work: p * work * u.epochs,
                server_work: (1.0 - p) * work * s.epochs,
                local_energy: u.epochs * u.capacitance * p * work * u.max_speed * u.max_speed,
                server_energy: s.epochs * s.capacitance * (1.0 - p) * work * s.max_speed * s.max_speed,
            });
        }
        Ok(Self { scn, y, users, t_ref })
    }

    pub fn dim(&self) -> usize {
        PER_USER * self.users.len() + 1
    }

    fn tau_index(&self) -> usize {
        self.dim() - 1
    }

    pub fn pack(&self, vars: &ResourceVars) -> Vec<f64> {
        let r = &vars.resources;
        let mut v = vec![0.0; self.dim()];
        for (n, u) in self.users.iter().enumerate() {
            let m = u.server;
            let raw = [r.bandwidth[(n, m)], r.user_power[n], r.server_power[(n, m)], r.user_speed[n], r.server_speed[(n, m)]];
            for k in 0..PER_USER {
                v[PER_USER * n + k] = raw[k] / u.caps[k];
            }
        }
        v[self.tau_index()] = vars.delay_bound / self.t_ref;
        v
    }

    pub fn unpack(&self, v: &[f64]) -> ResourceVars {
        let (n_users, n_servers) = (self.scn.n_users(), self.scn.n_servers());
        let mut r = Resources::zeros(n_users, n_servers);
        for (n, u) in self.users.iter().enumerate() {
            let m = u.server;
            let s = |k: usize| v[PER_USER * n + k] * u.caps[k];
            r.bandwidth[(n, m)] = s(BW);
            r.user_power[n] = s(PU);
            r.server_power[(n, m)] = s(PS);
            r.user_speed[n] = s(FU);
            r.server_speed[(n, m)] = s(FS);
        }
        ResourceVars { resources: r, delay_bound: v[self.tau_index()] * self.t_ref }
    }

    fn local(&self, v: &[f64], n: usize) -> [f64; PER_USER] {
        let mut out = [0.0; PER_USER];
        out.copy_from_slice(&v[PER_USER * n..PER_USER * (n + 1)]);
        out
    }

    /// Objective in physical units: the transform at `z`, or exact energies
    /// when `z` is `None`. `None` outside the domain.
    pub fn objective(&self, v: &[f64], z: Option<&FpState>) -> Option<f64> {
        let mut total = -self.y * self.scn.weight_delay * self.t_ref * v[self.tau_index()];
        for n in 0..self.users.len() {
            total += self.user_block(v, n, z, false)?.v;
        }
        Some(total)
    }

    /// Gradient of the transformed objective in normalized coordinates.
    pub fn gradient(&self, v: &[f64], z: &FpState) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.dim()];
        for n in 0..self.users.len() {
            let b = self.user_block(v, n, Some(z), true)?;
            g[PER_USER * n..PER_USER * (n + 1)].copy_from_slice(&b.g);
        }
        g[self.tau_index()] = -self.y * self.scn.weight_delay * self.t_ref;
        Some(g)
    }

    fn user_block(&self, v: &[f64], n: usize, z: Option<&FpState>, derivs: bool) -> Option<Block> {
        let u = &self.users[n];
        let l = self.local(v, n);
        if l.iter().any(|&s| !(s > 0.0)) {
            return None;
        }
        let scn = self.scn;
        let ce = self.y * scn.weight_energy;
        let mut b = Block::zero();

        let share = l[BW] + l[PS] + l[FS];
        let s1 = 1.0 + scn.score_norm * share;
        b.v += scn.score_scale * math::ln(s1);
        let d1 = scn.score_scale * scn.score_norm / s1;
        let d2 = -scn.score_scale * scn.score_norm * scn.score_norm / (s1 * s1);
        for i in [BW, PS, FS] {
            b.g[i] += d1;
            for j in [BW, PS, FS] {
                b.h[i][j] += d2;
            }
        }
        for (k, e) in [(FU, u.local_energy), (FS, u.server_energy)] {
            b.v -= ce * e * l[k] * l[k];
            b.g[k] -= 2.0 * ce * e * l[k];
            b.h[k][k] -= 2.0 * ce * e;
        }

        let m = u.server;
        for (on, kr, pk, frac, zmat) in [
            (u.has_up(), u.k_up, PU, u.phi, z.map(|z| &z.uplink)),
            (u.has_down(), u.k_dn, PS, 1.0 - u.phi, z.map(|z| &z.downlink)),
        ] {
            if !on {
                continue;
            }
            let rd = rate_d(u.rate_scale, kr, l[BW], l[pk]);
            if !(rd.r > 0.0) || !rd.r.is_finite() {
                return None;
            }
            let c = u.caps[pk] * frac * u.payload;
            match zmat {
                None => b.v -= ce * c * l[pk] / rd.r,
                Some(zm) => {
                    let zz = zm[(n, m)]?;
                    let a = c * c * zz;
                    b.v -= ce * a * l[pk] * l[pk];
                    b.g[pk] -= 2.0 * ce * a * l[pk];
                    b.h[pk][pk] -= 2.0 * ce * a;
                    if derivs {
                        b.add_inverse_rate(-ce / (4.0 * zz), &rd, pk, 2);
                    } else {
                        b.v -= ce / (4.0 * zz * rd.r * rd.r);
                    }
                }
            }
        }
        Some(b)
    }

    /// Pair delay of user `n` in seconds with derivatives.
    fn delay_block(&self, v: &[f64], n: usize) -> Option<Block> {
        let u = &self.users[n];
        let l = self.local(v, n);
        let mut b = Block::zero();
        for (work, cap, k) in [(u.local_work, u.caps[FU], FU), (u.server_work, u.caps[FS], FS)] {
            if work > 0.0 {
                if !(l[k] > 0.0) {
                    return None;
                }
                let c = work / cap;
                b.v += c / l[k];
                b.g[k] -= c / (l[k] * l[k]);
                b.h[k][k] += 2.0 * c / (l[k] * l[k] * l[k]);
            }
        }
        for (on, kr, pk, frac) in [(u.has_up(), u.k_up, PU, u.phi), (u.has_down(), u.k_dn, PS, 1.0 - u.phi)] {
            if !on {
                continue;
            }
            if !(l[BW] > 0.0 && l[pk] > 0.0) {
                return None;
            }
            let rd = rate_d(u.rate_scale, kr, l[BW], l[pk]);
            b.add_inverse_rate(frac * u.payload, &rd, pk, 1);
        }
        Some(b)
    }

    /// Largest pair delay in seconds.
    pub fn max_delay(&self, v: &[f64]) -> Option<f64> {
        let mut t = 0.0_f64;
        for n in 0..self.users.len() {
            t = t.max(self.delay_block(v, n)?.v);
        }
        Some(t)
    }

    fn groups(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.scn.n_servers()];
        for (n, u) in self.users.iter().enumerate() {
            members[u.server].push(n);
        }
        members
    }

    fn barrier_terms(&self, free: &FreeVars) -> usize {
        let n = self.users.len();
        let servers = self.groups().iter().filter(|g| !g.is_empty()).count();
        let kinds = |ks: &[usize]| ks.iter().filter(|&&k| free.kind(k)).count();
        kinds(&[BW, PU, PS, FU, FS]) * n + kinds(&[PU, FU]) * n + kinds(&[BW, PS, FS]) * servers + n
    }

    /// `-psi / scale + mu * barrier`, optionally with derivatives over all coordinates.
    fn barrier_eval(
        &self,
        v: &[f64],
        z: &FpState,
        mu: f64,
        scale: f64,
        groups: &[Vec<usize>],
        free: &FreeVars,
        derivs: bool,
    ) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let dim = self.dim();
        let t = self.tau_index();
        let (mut g, mut h) = if derivs { (DVector::zeros(dim), DMatrix::zeros(dim, dim)) } else { (DVector::zeros(0), DMatrix::zeros(0, 0)) };
        let mut f = self.y * self.scn.weight_delay * self.t_ref * v[t] / scale;
        if derivs {
            g[t] += self.y * self.scn.weight_delay * self.t_ref / scale;
        }
        let mut log_sum = 0.0;
        for n in 0..self.users.len() {
            let base = PER_USER * n;
            let ub = self.user_block(v, n, Some(z), derivs)?;
            f -= ub.v / scale;
            let db = self.delay_block(v, n)?;
            let slack = v[t] - db.v / self.t_ref;
            if !(slack > 0.0) {
                return None;
            }
            log_sum += math::ln(slack);
            for k in 0..PER_USER {
                let s = v[base + k];
                if free.kind(k) {
                    log_sum += math::ln(s);
                }
                if derivs {
                    g[base + k] -= ub.g[k] / scale;
                    if free.kind(k) {
                        g[base + k] -= mu / s;
                        h[(base + k, base + k)] += mu / (s * s);
                    }
                    for j in 0..PER_USER {
                        h[(base + k, base + j)] -= ub.h[k][j] / scale;
                    }
                }
            }
            for k in [PU, FU].into_iter().filter(|&k| free.kind(k)) {
                let s = 1.0 - v[base + k];
                if !(s > 0.0) {
                    return None;
                }
                log_sum += math::ln(s);
                if derivs {
                    g[base + k] += mu / s;
                    h[(base + k, base + k)] += mu / (s * s);
                }
            }
            if derivs {
                // grad of slack: tau -> 1, locals -> -grad(delay) / T_ref
                let mut ds = [0.0; PER_USER + 1];
                for k in 0..PER_USER {
                    ds[k] = -db.g[k] / self.t_ref;
                }
                ds[PER_USER] = 1.0;
                let idx = |k: usize| if k == PER_USER { t } else { base + k };
                for a in 0..=PER_USER {
                    g[idx(a)] -= mu * ds[a] / slack;
                    for b in 0..=PER_USER {
                        h[(idx(a), idx(b))] += mu * ds[a] * ds[b] / (slack * slack);
                    }
                }
                for a in 0..PER_USER {
                    for b in 0..PER_USER {
                        h[(base + a, base + b)] += mu * db.h[a][b] / (self.t_ref * slack);
                    }
                }
            }
        }
        for members in groups.iter().filter(|g| !g.is_empty()) {
            for k in [BW, PS, FS].into_iter().filter(|&k| free.kind(k)) {
                let s = 1.0 - members.iter().map(|&n| v[PER_USER * n + k]).sum::<f64>();
                if !(s > 0.0) {
                    return None;
                }
                log_sum += math::ln(s);
                if derivs {
                    for &a in members {
                        g[PER_USER * a + k] += mu / s;
                        for &b in members {
                            h[(PER_USER * a + k, PER_USER * b + k)] += mu / (s * s);
                        }
                    }
                }
            }
        }
        f -= mu * log_sum;
        f.is_finite().then_some((f, g, h))
    }
}

fn check_y(y: f64) -> Result<()> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidInput(format!("resource block needs a positive Dinkelbach parameter, got {y}")));
    }
    Ok(())
}

/// Moves a start into the strict interior of the caps.
fn interiorize(v: &mut [f64], n_users: usize, groups: &[Vec<usize>], free: &FreeVars) {
    let strictly_inside = |v: &[f64]| {
        (0..n_users).all(|n| {
            (0..PER_USER).all(|k| v[PER_USER * n + k] > 0.0) && v[PER_USER * n + PU] < 1.0 && v[PER_USER * n + FU] < 1.0
        }) && groups.iter().all(|g| [BW, PS, FS].iter().all(|&k| g.iter().map(|&n| v[PER_USER * n + k]).sum::<f64>() < 1.0))
    };
    if strictly_inside(v) {
        return;
    }
    for members in groups {
        for k in [BW, PS, FS] {
            let sum: f64 = members.iter().map(|&n| v[PER_USER * n + k].max(0.0)).sum();
            for &n in members {
                let center = 0.5 / members.len() as f64;
                let cur = if sum > 1.0 { v[PER_USER * n + k].max(0.0) / sum } else { v[PER_USER * n + k].max(0.0) };
                if free.kind(k) {
                    v[PER_USER * n + k] = 0.99 * cur + 0.01 * center;
                }
            }
        }
    }
    for n in 0..n_users {
        for k in [PU, FU] {
            if free.kind(k) {
                v[PER_USER * n + k] = 0.99 * v[PER_USER * n + k].clamp(0.0, 1.0) + 0.01 * 0.5;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveOutcome {
    pub vars: ResourceVars,
    /// Transformed objective at `vars`.
    pub objective: f64,
    pub converged: bool,
    pub newton_steps: usize,
    /// Final barrier duality gap relative to the objective scale.
    pub gap: f64,
}

/// Maximizes the transformed objective at fixed auxiliaries from `start`.
/// The returned point is never worse than the (interiorized) start.
pub fn solve_concave(
    scn: &Scenario,
    x: &Matrix<f64>,
    phi: &[f64],
    z: &FpState,
    y: f64,
    start: &ResourceVars,
    tol: f64,
    free: FreeVars,
) -> Result<ConcaveOutcome> {
    check_y(y)?;
    let probe = Part2Problem::new(scn, x, phi, y, 1.0)?;
    let n_users = scn.n_users();
    let groups = probe.groups();
    let mut v0 = probe.pack(start);
    interiorize(&mut v0, n_users, &groups, &free);
    let implied = probe
        .max_delay(&v0)
        .filter(|t| t.is_finite())
        .ok_or_else(|| Error::Infeasible("start point has a pair without rate or speed".into()))?;
    let t_ref = if implied > 0.0 { implied } else { 1.0 };
    let prob = Part2Problem::new(scn, x, phi, y, t_ref)?;
    let tau_i = prob.tau_index();
    let mut v = v0.clone();
    v[tau_i] = start.delay_bound.max(implied) * (1.0 + 1e-6) / t_ref;
    let start_obj = prob.objective(&v, Some(z)).ok_or_else(|| Error::Infeasible("transform undefined at the start".into()))?;
    let direct_start = prob.objective(&v, None).unwrap_or(0.0);
    let scale = direct_start.abs().max(start_obj.abs()).max(cost_scale(&prob, &v)).max(1e-300);

    let free_idx: Vec<usize> = (0..prob.dim())
        .filter(|&i| i == tau_i || free.kind(i % PER_USER))
        .collect();
    let m_terms = prob.barrier_terms(&free) as f64;
    let mut mu = 1.0_f64;
    let mut steps = 0;
    let mut converged = true;
    'stages: loop {
        for _ in 0..100 {
            let Some((f, g, h)) = prob.barrier_eval(&v, z, mu, scale, &groups, &free, true) else {
                converged = false;
                break 'stages;
            };
            let k = free_idx.len();
            let gr = DVector::from_iterator(k, free_idx.iter().map(|&i| g[i]));
            let hr = DMatrix::from_fn(k, k, |a, b| h[(free_idx[a], free_idx[b])]);
            let Some(step) = linalg::spd_solve(&hr, &(-&gr)) else {
                converged = false;
                break 'stages;
            };
            let slope = gr.dot(&step);
            if -slope / 2.0 <= 1e-12 {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-14 {
                let mut cand = v.clone();
                for (a, &i) in free_idx.iter().enumerate() {
                    cand[i] += t * step[a];
                }
                if let Some((fc, _, _)) = prob.barrier_eval(&cand, z, mu, scale, &groups, &free, false) {
                    if fc <= f + 0.25 * t * slope {
                        v = cand;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            steps += 1;
            if !accepted {
                converged = converged && -slope / 2.0 <= 1e-9;
                break;
            }
        }
        if m_terms * mu <= tol {
            break;
        }
        mu /= 10.0;
    }

    // The bound only costs; pull it down to the implied delay.
    let implied_end = prob.max_delay(&v).unwrap_or(f64::INFINITY);
    if implied_end.is_finite() {
        v[tau_i] = implied_end / t_ref;
    }
    let mut obj = prob.objective(&v, Some(z)).unwrap_or(f64::NEG_INFINITY);
    let mut vars = prob.unpack(&v);
    let mut v_start = v0;
    v_start[tau_i] = implied / t_ref;
    let start_tight = prob.objective(&v_start, Some(z)).unwrap_or(f64::NEG_INFINITY);
    if start_tight > obj {
        obj = start_tight;
        vars = prob.unpack(&v_start);
    }
    Ok(ConcaveOutcome { vars, objective: obj, converged, newton_steps: steps, gap: m_terms * mu })
}

fn cost_scale(prob: &Part2Problem, v: &[f64]) -> f64 {
    // Score sum at v gives the magnitude of the objective terms.
    let mut s = 0.0;
    for n in 0..prob.users.len() {
        let l = prob.local(v, n);
        s += prob.scn.score_scale * math::ln_1p(prob.scn.score_norm * (l[BW] + l[PS] + l[FS]));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part2Outcome {
    pub vars: ResourceVars,
    /// Direct objective after each accepted transform iteration, starting with the start point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternates auxiliary updates and concave solves until the direct
/// objective stops improving.
pub fn solve_part2(
    scn: &Scenario,
    x: &Matrix<f64>,
    phi: &[f64],
    y: f64,
    start: &ResourceVars,
    settings: &Part2Settings,
) -> Result<Part2Outcome> {
    check_y(y)?;
    let mut vars = start.clone();
    let a = Allocation { x: x.clone(), phi: phi.to_vec(), resources: vars.resources.clone(), delay_bound: 0.0 };
    vars.delay_bound = model::evaluate(scn, &a).map(|bd| bd.total_delay).unwrap_or(f64::INFINITY);
    let mut obj = direct_objective(&vars, scn, x, phi, y).unwrap_or(f64::NEG_INFINITY);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..settings.max_outer {
        iterations += 1;
        let z = match update_z(&vars, scn, x, phi) {
            Ok(z) => z,
            Err(_) if !obj.is_finite() => {
                // A start without rates: aux from the interior point.
                let prob = Part2Problem::new(scn, x, phi, y, 1.0)?;
                let mut v = prob.pack(&vars);
                interiorize(&mut v, scn.n_users(), &prob.groups(), &settings.free);
                v[prob.tau_index()] = prob.max_delay(&v).unwrap_or(1.0);
                vars = prob.unpack(&v);
                update_z(&vars, scn, x, phi)?
            }
            Err(e) => return Err(e),
        };
        let out = solve_concave(scn, x, phi, &z, y, &vars, settings.kkt_tol, settings.free)?;
        let new_obj = direct_objective(&out.vars, scn, x, phi, y)?;
        if obj.is_finite() && new_obj < obj {
            converged = true;
            break;
        }
        let change = if obj.is_finite() { (new_obj - obj).abs() / obj.abs().max(1e-300) } else { f64::INFINITY };
        vars = out.vars;
        obj = new_obj;
        trace.push(obj);
        if change <= settings.fp_tol {
            converged = true;
            break;
        }
    }
    if !obj.is_finite() {
        return Err(Error::Infeasible("resource block found no point with finite delays".into()));
    }
    Ok(Part2Outcome { vars, trace, iterations, converged })
}

#[cfg(test)]
mod tests;
