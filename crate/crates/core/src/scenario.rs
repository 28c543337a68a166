//! Deterministic scenario generation.
//!
//! Draws come from xoshiro256++ seeded through SplitMix64 (the
//! `seed_from_u64` of `rand_xoshiro`). Uniform deviates use the top 53 bits
//! of each output shifted by half an ulp, `((u >> 11) + 0.5) * 2^-53`, which
//! lies in the open interval (0, 1). Draw order:
//!
//! 1. for each server: x, y position;
//! 2. for each user: x, y position, adapter size, token bits;
//! 3. for each (user, server) pair in row-major order: one Rayleigh power fade
//!    as `-ln(u)`.
//!
//! Any implementation following the same order reproduces a scenario bit for bit.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::math;
use crate::matrix::Matrix;
use crate::model::{Scenario, ServerProfile, UserProfile};
use crate::{Error, Result};

/// Distances below this floor (meters) are clamped before path loss.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Generator parameters. Defaults are the reference simulation settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub n_servers: usize,
    /// Side of the square area in meters.
    pub area_m: f64,
    pub seed: u64,
    /// Bandwidth per server, Hz.
    pub server_bandwidth_hz: f64,
    pub user_max_power_w: f64,
    pub server_max_power_w: f64,
    /// Effective (count and utilization folded in) user GPU speed, FLOP/s.
    pub user_max_speed: f64,
    pub server_max_speed: f64,
    pub user_capacitance: f64,
    pub server_capacitance: f64,
    /// Adapter parameter count range.
    pub adapter_params: [f64; 2],
    /// Token data size range in bits.
    pub token_bits: [f64; 2],
    /// Bits per token id (artifact convention).
    pub bits_per_token: f64,
    /// Training FLOPs per token per parameter (artifact convention).
    pub flops_per_token_param: f64,
    pub weight_delay: f64,
    pub weight_energy: f64,
    pub score_scale: f64,
    pub score_norm: f64,
    pub bits_per_param: f64,
    pub user_epochs: f64,
    pub server_epochs: f64,
    pub noise_dbm_per_hz: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_users: 10,
            n_servers: 2,
            area_m: 1000.0,
            seed: 1,
            server_bandwidth_hz: 10e6,
            user_max_power_w: 0.2,
            server_max_power_w: 10.0,
            user_max_speed: 19.58e12,
            server_max_speed: 1372.8e12,
            user_capacitance: 1e-38,
            server_capacitance: 1e-38,
            adapter_params: [1.2e6, 14e6],
            token_bits: [10e6, 50e6],
            bits_per_token: 16.0,
            flops_per_token_param: 6.0,
            weight_delay: 0.5,
            weight_energy: 0.005,
            score_scale: 10_000.0 / core::f64::consts::LN_2,
            score_norm: 1.0 / 3.0,
            bits_per_param: 32.0,
            user_epochs: 1.0,
            server_epochs: 1.0,
            noise_dbm_per_hz: -134.0,
        }
    }
}

impl ScenarioConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidInput(msg));
        if self.n_users == 0 || self.n_servers == 0 {
            return err("n_users and n_servers must be at least 1".into());
        }
        for (name, v) in [
            ("area_m", self.area_m),
            ("server_bandwidth_hz", self.server_bandwidth_hz),
            ("user_max_power_w", self.user_max_power_w),
            ("server_max_power_w", self.server_max_power_w),
            ("user_max_speed", self.user_max_speed),
            ("server_max_speed", self.server_max_speed),
            ("user_capacitance", self.user_capacitance),
            ("server_capacitance", self.server_capacitance),
            ("bits_per_token", self.bits_per_token),
            ("flops_per_token_param", self.flops_per_token_param),
            ("weight_delay", self.weight_delay),
            ("weight_energy", self.weight_energy),
            ("score_scale", self.score_scale),
            ("score_norm", self.score_norm),
            ("bits_per_param", self.bits_per_param),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("user_epochs", self.user_epochs), ("server_epochs", self.server_epochs)] {
            if !(v.is_finite() && v >= 1.0) {
                return err(format!("{name} must be at least 1, got {v}"));
            }
        }
        for (name, [lo, hi]) in [("adapter_params", self.adapter_params), ("token_bits", self.token_bits)] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return err(format!("{name} must be a nonempty positive range, got [{lo}, {hi}]"));
            }
        }
        if !self.noise_dbm_per_hz.is_finite() {
            return err("noise_dbm_per_hz must be finite".into());
        }
        Ok(())
    }

    /// Noise density in W/Hz.
    pub fn noise_psd(&self) -> f64 {
        dbm_to_watts(self.noise_dbm_per_hz)
    }
}

/// The generator and seed behind a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
}

impl RngSpec {
    pub const ALGORITHM: &'static str = "xoshiro256++/splitmix64";

    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self) -> UniformStream {
        UniformStream { rng: Xoshiro256PlusPlus::seed_from_u64(self.seed) }
    }
}

/// Portable source of open-interval uniforms.
pub struct UniformStream {
    rng: Xoshiro256PlusPlus,
}

impl UniformStream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in (0, 1).
    pub fn open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.open01()
    }

    /// Unit-mean exponential, the power gain of a Rayleigh amplitude.
    pub fn unit_exponential(&mut self) -> f64 {
        -math::ln(self.open01())
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.open01() * n as f64) as usize).min(n - 1)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    math::powf(10.0, dbm / 10.0) * 1e-3
}

/// Parameter count of a bottleneck adapter, weights plus biases.
pub fn adapter_param_count(d_in: u64, d_adapt: u64, d_out: u64) -> Result<u64> {
    if d_in == 0 || d_adapt == 0 || d_out == 0 {
        return Err(Error::InvalidInput(format!(
            "adapter dimensions must be at least 1, got ({d_in}, {d_adapt}, {d_out})"
        )));
    }
    Ok(d_in * d_adapt + d_adapt * d_out + d_adapt + d_out)
}

/// Large-scale path loss `128.1 + 37.6 log10(d)` in dB, distance in km.
pub fn path_loss_db(d_km: f64) -> Result<f64> {
    if !(d_km > 0.0) || !d_km.is_finite() {
        return Err(Error::InvalidInput(format!("distance must be positive, got {d_km} km")));
    }
    Ok(128.1 + 37.6 * math::log10(d_km))
}

pub fn db_to_linear_loss(db: f64) -> f64 {
    math::powf(10.0, -db / 10.0)
}

/// Training FLOPs per parameter per epoch for a token budget.
pub fn flops_per_param(cfg: &ScenarioConfig, token_bits: f64) -> f64 {
    cfg.flops_per_token_param * token_bits / cfg.bits_per_token
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = RngSpec::new(cfg.seed).stream();
    let servers: Vec<ServerProfile> = (0..cfg.n_servers)
        .map(|_| {
            let position = [rng.uniform(0.0, cfg.area_m), rng.uniform(0.0, cfg.area_m)];
            ServerProfile {
                position,
                bandwidth: cfg.server_bandwidth_hz,
                max_power: cfg.server_max_power_w,
                max_speed: cfg.server_max_speed,
                epochs: cfg.server_epochs,
                capacitance: cfg.server_capacitance,
            }
        })
        .collect();
    let users: Vec<UserProfile> = (0..cfg.n_users)
        .map(|_| {
            let position = [rng.uniform(0.0, cfg.area_m), rng.uniform(0.0, cfg.area_m)];
            let params = rng.uniform(cfg.adapter_params[0], cfg.adapter_params[1]);
            let bits = rng.uniform(cfg.token_bits[0], cfg.token_bits[1]);
            UserProfile {
                position,
                params,
                flops_per_param: flops_per_param(cfg, bits),
                epochs: cfg.user_epochs,
                max_speed: cfg.user_max_speed,
                max_power: cfg.user_max_power_w,
                capacitance: cfg.user_capacitance,
            }
        })
        .collect();
    let mut gain = Matrix::zeros(cfg.n_users, cfg.n_servers);
    for n in 0..cfg.n_users {
        for m in 0..cfg.n_servers {
            let [ux, uy] = users[n].position;
            let [sx, sy] = servers[m].position;
            let d_km = math::hypot(ux - sx, uy - sy).max(MIN_DISTANCE_M) / 1000.0;
            let large_scale = db_to_linear_loss(path_loss_db(d_km)?);
            gain[(n, m)] = large_scale * rng.unit_exponential();
        }
    }
    let scn = Scenario {
        seed: cfg.seed,
        users,
        servers,
        gain,
        noise_psd: cfg.noise_psd(),
        weight_delay: cfg.weight_delay,
        weight_energy: cfg.weight_energy,
        score_scale: cfg.score_scale,
        score_norm: cfg.score_norm,
        bits_per_param: cfg.bits_per_param,
    };
    scn.validate()?;
    Ok(scn)
}
