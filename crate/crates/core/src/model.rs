//! Physical and cost model: link rates, four-phase delays and energies,
//! service score, service-cost ratio and constraint checking.
//!
//! Every user trains a fraction `phi` of its adapter locally, uploads it,
//! the server trains the rest and sends the result back. The four phases
//! are local training, uplink, server training and downlink.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::matrix::Matrix;
use crate::{Error, Result};

/// Relative tolerance used by [`check_feasibility`] on cap-normalized constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct UserProfile {
    /// Position in meters.
    pub position: [f64; 2],
    /// Adapter parameter count.
    pub params: f64,
    /// Training FLOPs per adapter parameter per epoch.
    pub flops_per_param: f64,
    /// Local training epochs.
    pub epochs: f64,
    /// Maximum effective GPU speed in FLOP/s.
    pub max_speed: f64,
    /// Maximum transmit power in W.
    pub max_power: f64,
    /// Effective switched capacitance.
    pub capacitance: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ServerProfile {
    pub position: [f64; 2],
    /// Total bandwidth in Hz.
    pub bandwidth: f64,
    /// Total transmit power in W.
    pub max_power: f64,
    /// Total effective GPU speed in FLOP/s.
    pub max_speed: f64,
    pub epochs: f64,
    pub capacitance: f64,
}

/// An immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct Scenario {
    /// Seed the instance was generated from; baselines derive their RNG streams from it.
    pub seed: u64,
    pub users: Vec<UserProfile>,
    pub servers: Vec<ServerProfile>,
    /// Linear channel power gain, users × servers (path loss times fading).
    pub gain: Matrix<f64>,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    pub weight_delay: f64,
    pub weight_energy: f64,
    /// Range constant of the service score.
    pub score_scale: f64,
    /// Normalization constant of the service score.
    pub score_norm: f64,
    /// Bits used to transmit one parameter.
    pub bits_per_param: f64,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidScenario(format!("{what} must be positive and finite")));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if self.users.is_empty() || self.servers.is_empty() {
            return Err(Error::InvalidScenario("need at least one user and one server".into()));
        }
        if self.gain.rows() != self.n_users() || self.gain.cols() != self.n_servers() {
            return Err(Error::InvalidScenario(format!(
                "gain matrix is {}x{}, expected {}x{}",
                self.gain.rows(),
                self.gain.cols(),
                self.n_users(),
                self.n_servers()
            )));
        }
        for (n, u) in self.users.iter().enumerate() {
            for (name, v) in [
                ("params", u.params),
                ("flops_per_param", u.flops_per_param),
                ("epochs", u.epochs),
                ("max_speed", u.max_speed),
                ("max_power", u.max_power),
                ("capacitance", u.capacitance),
            ] {
                if !pos(v) {
                    return bad(&format!("users[{n}].{name}"));
                }
            }
            if u.epochs < 1.0 {
                return Err(Error::InvalidScenario(format!("users[{n}].epochs must be at least 1")));
            }
        }
        for (m, s) in self.servers.iter().enumerate() {
            for (name, v) in [
                ("bandwidth", s.bandwidth),
                ("max_power", s.max_power),
                ("max_speed", s.max_speed),
                ("epochs", s.epochs),
                ("capacitance", s.capacitance),
            ] {
                if !pos(v) {
                    return bad(&format!("servers[{m}].{name}"));
                }
            }
        }
        if let Some(k) = self.gain.iter().position(|&g| !pos(g)) {
            let m = self.n_servers();
            return bad(&format!("gain of user {} to server {}", k / m, k % m));
        }
        for (name, v) in [
            ("noise_psd", self.noise_psd),
            ("weight_delay", self.weight_delay),
            ("weight_energy", self.weight_energy),
            ("score_scale", self.score_scale),
            ("score_norm", self.score_norm),
            ("bits_per_param", self.bits_per_param),
        ] {
            if !pos(v) {
                return bad(name);
            }
        }
        Ok(())
    }
}

/// Radio and compute resources. Per-pair entries are only meaningful where
/// the association connects the pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct Resources {
    /// Hz, users × servers.
    pub bandwidth: Matrix<f64>,
    /// W, per user.
    pub user_power: Vec<f64>,
    /// W, users × servers.
    pub server_power: Matrix<f64>,
    /// FLOP/s, per user.
    pub user_speed: Vec<f64>,
    /// FLOP/s, users × servers.
    pub server_speed: Matrix<f64>,
}

impl Resources {
    pub fn zeros(n_users: usize, n_servers: usize) -> Self {
        Self {
            bandwidth: Matrix::zeros(n_users, n_servers),
            user_power: alloc::vec![0.0; n_users],
            server_power: Matrix::zeros(n_users, n_servers),
            user_speed: alloc::vec![0.0; n_users],
            server_speed: Matrix::zeros(n_users, n_servers),
        }
    }

    /// Each server splits its bandwidth, power and speed evenly among the
    /// users `association` connects to it; users run at their caps.
    pub fn equal_split(scn: &Scenario, association: &Matrix<f64>) -> Self {
        let (n_users, n_servers) = (scn.n_users(), scn.n_servers());
        let mut res = Self::zeros(n_users, n_servers);
        for m in 0..n_servers {
            let load = association.col_sum(m);
            if load <= 0.0 {
                continue;
            }
            let s = &scn.servers[m];
            for n in 0..n_users {
                if association[(n, m)] > 0.5 {
                    res.bandwidth[(n, m)] = s.bandwidth / load;
                    res.server_power[(n, m)] = s.max_power / load;
                    res.server_speed[(n, m)] = s.max_speed / load;
                }
            }
        }
        for (n, u) in scn.users.iter().enumerate() {
            res.user_power[n] = u.max_power;
            res.user_speed[n] = u.max_speed;
        }
        res
    }
}

/// Full decision vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct Allocation {
    /// Association, users × servers, entries 0 or 1.
    pub x: Matrix<f64>,
    /// Fraction of each adapter trained locally.
    pub phi: Vec<f64>,
    pub resources: Resources,
    /// Delay bound in seconds.
    pub delay_bound: f64,
}

impl Allocation {
    /// The server user `n` is connected to, if its row has a one.
    pub fn server_of(&self, n: usize) -> Option<usize> {
        association_server(&self.x, n)
    }
}

pub(crate) fn association_server(x: &Matrix<f64>, n: usize) -> Option<usize> {
    x.row(n).iter().position(|&v| v > 0.5)
}

/// Builds a binary association from a per-user server choice.
pub fn association_from_choice(n_servers: usize, choice: &[usize]) -> Matrix<f64> {
    Matrix::from_fn(choice.len(), n_servers, |n, m| if choice[n] == m { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Phases {
    pub local_train: f64,
    pub uplink: f64,
    pub server_train: f64,
    pub downlink: f64,
}

impl Phases {
    pub fn total(&self) -> f64 {
        self.local_train + self.uplink + self.server_train + self.downlink
    }
}

/// Shannon rate `b log2(1 + g p / (sigma2 b))` in bit/s. Zero bandwidth is
/// the continuous limit and yields zero.
pub fn link_rate(bandwidth: f64, power: f64, gain: f64, noise_psd: f64) -> Result<f64> {
    if !(gain > 0.0) || !(noise_psd > 0.0) {
        return Err(Error::InvalidScenario(format!(
            "gain ({gain}) and noise density ({noise_psd}) must be positive"
        )));
    }
    if bandwidth <= 0.0 || power <= 0.0 {
        return Ok(0.0);
    }
    let snr = gain * power / (noise_psd * bandwidth);
    Ok(bandwidth * math::ln_1p(snr) / core::f64::consts::LN_2)
}

/// `work / rate`, with zero work costing nothing and positive work over a
/// zero rate costing an infinite delay.
#[inline]
fn ratio_or_inf(work: f64, rate: f64) -> f64 {
    if work == 0.0 {
        0.0
    } else if rate > 0.0 {
        work / rate
    } else {
        f64::INFINITY
    }
}

fn up_down_rates(scn: &Scenario, a: &Allocation, n: usize, m: usize) -> (f64, f64) {
    let r = &a.resources;
    let g = scn.gain[(n, m)];
    let b = r.bandwidth[(n, m)];
    // inputs are checked by `Scenario::validate`; invalid gains surface as zero rates.
    let up = link_rate(b, r.user_power[n], g, scn.noise_psd).unwrap_or(0.0);
    let down = link_rate(b, r.server_power[(n, m)], g, scn.noise_psd).unwrap_or(0.0);
    (up, down)
}

/// Delays of the four phases for pair `(n, m)`. Entries are `+inf` when a
/// phase has work but no rate or speed.
pub fn phase_delays(scn: &Scenario, a: &Allocation, n: usize, m: usize) -> Phases {
    let u = &scn.users[n];
    let s = &scn.servers[m];
    let x = a.x[(n, m)];
    let phi = a.phi[n];
    let (up, down) = up_down_rates(scn, a, n, m);
    Phases {
        local_train: ratio_or_inf(u.flops_per_param * phi * u.params * u.epochs, a.resources.user_speed[n]),
        uplink: ratio_or_inf(x * phi * u.params * scn.bits_per_param, up),
        server_train: ratio_or_inf(
            u.flops_per_param * (1.0 - phi) * x * u.params * s.epochs,
            a.resources.server_speed[(n, m)],
        ),
        downlink: ratio_or_inf(x * (1.0 - phi) * u.params * scn.bits_per_param, down),
    }
}

/// Energies of the four phases for pair `(n, m)`. The local-training energy
/// does not depend on the association.
pub fn phase_energies(scn: &Scenario, a: &Allocation, n: usize, m: usize) -> Phases {
    let u = &scn.users[n];
    let s = &scn.servers[m];
    let x = a.x[(n, m)];
    let phi = a.phi[n];
    let r = &a.resources;
    let delays = phase_delays(scn, a, n, m);
    let times = |power: f64, t: f64| if t == 0.0 { 0.0 } else { power * t };
    let fu = r.user_speed[n];
    let fs = r.server_speed[(n, m)];
    Phases {
        local_train: u.epochs * u.capacitance * phi * u.params * u.flops_per_param * fu * fu,
        uplink: times(r.user_power[n], delays.uplink),
        server_train: s.epochs * s.capacitance * x * (1.0 - phi) * u.params * u.flops_per_param * fs * fs,
        downlink: times(r.server_power[(n, m)], delays.downlink),
    }
}

/// Service score of one pair: `scale * ln(1 + norm * (p/p_max + f/f_max + b/b_max))`.
pub fn service_score(
    server_power: f64,
    server_speed: f64,
    bandwidth: f64,
    server: &ServerProfile,
    scale: f64,
    norm: f64,
) -> f64 {
    let share = server_power / server.max_power + server_speed / server.max_speed + bandwidth / server.bandwidth;
    scale * math::ln_1p(norm * share)
}

/// Per-pair and aggregate costs of an allocation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostBreakdown {
    pub delays: Matrix<Phases>,
    /// Energies attributed to pairs; local-training energy is attributed to
    /// the pair the user is connected to so that the entries sum to `total_energy`.
    pub energies: Matrix<Phases>,
    pub total_delay: f64,
    pub total_energy: f64,
    pub total_score: f64,
}

impl CostBreakdown {
    pub fn cost(&self, weight_delay: f64, weight_energy: f64) -> f64 {
        weight_delay * self.total_delay + weight_energy * self.total_energy
    }

    /// Numerator minus `y` times denominator of the ratio.
    pub fn dinkelbach_value(&self, y: f64, weight_delay: f64, weight_energy: f64) -> f64 {
        self.total_score - y * self.cost(weight_delay, weight_energy)
    }
}

/// Aggregates the phases of every pair. Fails when a connected pair has an
/// infinite delay.
pub fn evaluate(scn: &Scenario, a: &Allocation) -> Result<CostBreakdown> {
    let (n_users, n_servers) = (scn.n_users(), scn.n_servers());
    let mut delays = Matrix::filled(n_users, n_servers, Phases::default());
    let mut energies = Matrix::filled(n_users, n_servers, Phases::default());
    let mut total_delay = 0.0_f64;
    let mut total_energy = 0.0;
    let mut total_score = 0.0;
    for n in 0..n_users {
        for m in 0..n_servers {
            let x = a.x[(n, m)];
            let d = phase_delays(scn, a, n, m);
            let mut e = phase_energies(scn, a, n, m);
            e.local_train *= x;
            let pair_delay = d.total();
            if !pair_delay.is_finite() || !e.total().is_finite() {
                return Err(Error::InfeasiblePair { user: n, server: m });
            }
            total_delay = total_delay.max(pair_delay);
            total_energy += e.total();
            if x != 0.0 {
                let r = &a.resources;
                total_score += x * service_score(
                    r.server_power[(n, m)],
                    r.server_speed[(n, m)],
                    r.bandwidth[(n, m)],
                    &scn.servers[m],
                    scn.score_scale,
                    scn.score_norm,
                );
            }
            delays[(n, m)] = d;
            energies[(n, m)] = e;
        }
    }
    Ok(CostBreakdown { delays, energies, total_delay, total_energy, total_score })
}

/// Service-cost ratio `V / (w_t T + w_e E)`.
pub fn scr(breakdown: &CostBreakdown, weight_delay: f64, weight_energy: f64) -> Result<f64> {
    let cost = breakdown.cost(weight_delay, weight_energy);
    if !(cost > 0.0) || !cost.is_finite() {
        return Err(Error::UndefinedRatio { cost });
    }
    Ok(breakdown.total_score / cost)
}

/// Convenience: evaluate and take the ratio with the scenario's weights.
pub fn scenario_scr(scn: &Scenario, a: &Allocation) -> Result<f64> {
    let bd = evaluate(scn, a)?;
    scr(&bd, scn.weight_delay, scn.weight_energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Binary,
    RowSum,
    SplitRange,
    BandwidthCap,
    UserPowerCap,
    ServerPowerCap,
    UserSpeedCap,
    ServerSpeedCap,
    NonNegative,
    DelayBound,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Binary => "association-binary",
            Self::RowSum => "association-row-sum",
            Self::SplitRange => "split-range",
            Self::BandwidthCap => "bandwidth-cap",
            Self::UserPowerCap => "user-power-cap",
            Self::ServerPowerCap => "server-power-cap",
            Self::UserSpeedCap => "user-speed-cap",
            Self::ServerSpeedCap => "server-speed-cap",
            Self::NonNegative => "non-negative",
            Self::DelayBound => "delay-bound",
        })
    }
}

/// One violated constraint. `index` is the user, the server, or the flat
/// pair index `n * M + m`, depending on the constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub index: usize,
    /// Normalized amount by which the constraint is exceeded.
    pub excess: f64,
}

/// Lists every violated constraint of the joint problem.
pub fn check_feasibility(scn: &Scenario, a: &Allocation) -> Vec<Violation> {
    let (n_users, n_servers) = (scn.n_users(), scn.n_servers());
    let mut out = Vec::new();
    let mut push = |kind, index, excess: f64| {
        if excess > FEASIBILITY_TOL || excess.is_nan() {
            out.push(Violation { kind, index, excess });
        }
    };
    let r = &a.resources;
    for n in 0..n_users {
        for m in 0..n_servers {
            let x = a.x[(n, m)];
            push(ConstraintKind::Binary, n * n_servers + m, (x * (x - 1.0)).abs());
            let most_negative = [x, r.bandwidth[(n, m)], r.server_power[(n, m)], r.server_speed[(n, m)]]
                .into_iter()
                .fold(0.0_f64, |acc, v| acc.max(-v));
            push(ConstraintKind::NonNegative, n * n_servers + m, most_negative);
        }
        push(ConstraintKind::RowSum, n, (a.x.row_sum(n) - 1.0).abs());
        push(ConstraintKind::SplitRange, n, (-a.phi[n]).max(a.phi[n] - 1.0));
        let u = &scn.users[n];
        push(ConstraintKind::UserPowerCap, n, r.user_power[n] / u.max_power - 1.0);
        push(ConstraintKind::UserSpeedCap, n, r.user_speed[n] / u.max_speed - 1.0);
        push(ConstraintKind::NonNegative, n, (-r.user_power[n]).max(-r.user_speed[n]));
    }
    for m in 0..n_servers {
        let s = &scn.servers[m];
        let load = |t: &Matrix<f64>| (0..n_users).map(|n| a.x[(n, m)] * t[(n, m)]).sum::<f64>();
        push(ConstraintKind::BandwidthCap, m, load(&r.bandwidth) / s.bandwidth - 1.0);
        push(ConstraintKind::ServerPowerCap, m, load(&r.server_power) / s.max_power - 1.0);
        push(ConstraintKind::ServerSpeedCap, m, load(&r.server_speed) / s.max_speed - 1.0);
    }
    for n in 0..n_users {
        for m in 0..n_servers {
            let d = phase_delays(scn, a, n, m).total();
            let excess = if d.is_finite() {
                if a.delay_bound > 0.0 {
                    d / a.delay_bound - 1.0
                } else if d > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                f64::INFINITY
            };
            push(ConstraintKind::DelayBound, n * n_servers + m, excess);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, ScenarioConfig};
    use alloc::vec;

    fn one_pair() -> Scenario {
        Scenario {
            seed: 0,
            users: vec![UserProfile {
                position: [0.0, 0.0],
                params: 1e6,
                flops_per_param: 2e6,
                epochs: 1.0,
                max_speed: 1e13,
                max_power: 0.2,
                capacitance: 1e-38,
            }],
            servers: vec![ServerProfile {
                position: [100.0, 0.0],
                bandwidth: 1e7,
                max_power: 10.0,
                max_speed: 1e15,
                epochs: 1.0,
                capacitance: 1e-38,
            }],
            gain: Matrix::filled(1, 1, 1e-10),
            noise_psd: 3.981_071_705_534_97e-17,
            weight_delay: 0.5,
            weight_energy: 0.005,
            score_scale: 10_000.0 / core::f64::consts::LN_2,
            score_norm: 1.0 / 3.0,
            bits_per_param: 32.0,
        }
    }

    fn alloc_for(scn: &Scenario, phi: f64) -> Allocation {
        let x = Matrix::filled(scn.n_users(), scn.n_servers(), 1.0);
        Allocation { phi: vec![phi; scn.n_users()], resources: Resources::equal_split(scn, &x), x, delay_bound: 1e9 }
    }

    #[test]
    fn rate_unit_snr_is_one_bit() {
        assert!((link_rate(1.0, 1.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(link_rate(5.0, 0.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(link_rate(0.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(link_rate(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(link_rate(1.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn rate_default_noise_example() {
        // 1 MHz, 0.2 W, g = 1e-10, sigma2 = -134 dBm/Hz, evaluated by hand
        // (snr = 0.502377) and frozen.
        let sigma2 = 10f64.powf(-134.0 / 10.0) * 1e-3;
        let r = link_rate(1e6, 0.2, 1e-10, sigma2).unwrap();
        assert!((r - 587_247.156_877_426_3).abs() < 1e-6, "{r}");
    }

    #[test]
    fn split_extremes_zero_out_phases() {
        let scn = one_pair();
        let a = alloc_for(&scn, 1.0);
        let d = phase_delays(&scn, &a, 0, 0);
        assert_eq!(d.server_train, 0.0);
        assert_eq!(d.downlink, 0.0);
        let e = phase_energies(&scn, &alloc_for(&scn, 0.0), 0, 0);
        assert_eq!(e.local_train, 0.0);
    }

    #[test]
    fn disconnected_pair_keeps_only_local_phase() {
        let scn = one_pair();
        let mut a = alloc_for(&scn, 0.5);
        a.x[(0, 0)] = 0.0;
        let d = phase_delays(&scn, &a, 0, 0);
        assert!(d.local_train > 0.0);
        assert_eq!((d.uplink, d.server_train, d.downlink), (0.0, 0.0, 0.0));
        let e = phase_energies(&scn, &a, 0, 0);
        assert!(e.local_train > 0.0);
        assert_eq!((e.uplink, e.server_train, e.downlink), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_speed_with_work_is_infinite() {
        let scn = one_pair();
        let mut a = alloc_for(&scn, 0.5);
        a.resources.server_speed[(0, 0)] = 0.0;
        assert!(phase_delays(&scn, &a, 0, 0).server_train.is_infinite());
        assert_eq!(evaluate(&scn, &a), Err(Error::InfeasiblePair { user: 0, server: 0 }));
    }

    #[test]
    fn service_score_reference_values() {
        let s = one_pair().servers[0].clone();
        let scale = 10_000.0 / core::f64::consts::LN_2;
        let full = service_score(s.max_power, s.max_speed, s.bandwidth, &s, scale, 1.0 / 3.0);
        assert!((full - 10_000.0).abs() < 1e-9);
        assert_eq!(service_score(0.0, 0.0, 0.0, &s, scale, 1.0 / 3.0), 0.0);
        let half = service_score(s.max_power / 2.0, s.max_speed / 2.0, s.bandwidth / 2.0, &s, scale, 1.0 / 3.0);
        assert!((half - scale * 1.5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn scr_basics() {
        let bd = CostBreakdown {
            delays: Matrix::filled(0, 0, Phases::default()),
            energies: Matrix::filled(0, 0, Phases::default()),
            total_delay: 1.0,
            total_energy: 0.0,
            total_score: 1.0,
        };
        assert_eq!(scr(&bd, 1.0, 1.0).unwrap(), 1.0);
        let zero = CostBreakdown { total_delay: 0.0, ..bd };
        assert!(matches!(scr(&zero, 1.0, 1.0), Err(Error::UndefinedRatio { .. })));
    }

    #[test]
    fn symmetric_users_have_identical_costs() {
        let mut scn = one_pair();
        scn.users.push(scn.users[0].clone());
        scn.gain = Matrix::filled(2, 1, 1e-10);
        let a = alloc_for(&scn, 0.3);
        let bd = evaluate(&scn, &a).unwrap();
        assert_eq!(bd.delays[(0, 0)], bd.delays[(1, 0)]);
        assert_eq!(bd.energies[(0, 0)], bd.energies[(1, 0)]);
    }

    #[test]
    fn feasibility_flags_named_constraints() {
        let scn = generate(&ScenarioConfig::default()).unwrap();
        let mut a = alloc_for(&scn, 0.5);
        // all-ones association: every row sums to M = 2
        let v = check_feasibility(&scn, &a);
        assert!(v.iter().any(|v| v.kind == ConstraintKind::RowSum));
        a.x = association_from_choice(2, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        a.resources = Resources::equal_split(&scn, &a.x);
        a.delay_bound = evaluate(&scn, &a).unwrap().total_delay;
        assert!(check_feasibility(&scn, &a).is_empty());
        a.resources.bandwidth.row_mut(0)[0] *= 1.0 + 0.01 * 5.0;
        let v = check_feasibility(&scn, &a);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!((v[0].kind, v[0].index), (ConstraintKind::BandwidthCap, 0));
        assert!((v[0].excess - 0.01).abs() < 1e-12);
    }
}
