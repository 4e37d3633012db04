//! 73 GHz air-to-ground link model: log-distance path loss with optional
//! lognormal shadowing, link budget, small-scale fading and Shannon rate.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Point3;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("link distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
}

/// Small-scale fading law for one link type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase", deny_unknown_fields)]
pub enum Fading {
    Rician { k: f64 },
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    /// Intercept, dB.
    pub alpha: f64,
    /// Path-loss exponent scale.
    pub beta: f64,
    /// Shadowing standard deviation, dB.
    pub sigma: f64,
    pub fading: Fading,
}

impl LinkParams {
    pub fn los_73ghz() -> Self {
        Self { alpha: 69.8, beta: 2.0, sigma: 3.1, fading: Fading::Rician { k: 2.0 } }
    }

    pub fn nlos_73ghz() -> Self {
        Self { alpha: 82.7, beta: 2.69, sigma: 8.7, fading: Fading::Rayleigh }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    /// Transmit power, dBm.
    pub tx_power: f64,
    /// Transmit antenna gain, dBi.
    pub tx_gain: f64,
    /// Receive antenna gain, dBi.
    pub rx_gain: f64,
    /// Channel bandwidth, Hz.
    pub bandwidth: f64,
    /// Receiver noise floor, dBm.
    pub noise_power: f64,
    pub los: LinkParams,
    pub nlos: LinkParams,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power: 30.0,
            tx_gain: 0.0,
            rx_gain: 0.0,
            bandwidth: 100e6,
            noise_power: -94.0,
            los: LinkParams::los_73ghz(),
            nlos: LinkParams::nlos_73ghz(),
        }
    }
}

impl RadioConfig {
    pub fn params(&self, los: bool) -> &LinkParams {
        if los {
            &self.los
        } else {
            &self.nlos
        }
    }

    /// Largest 3D distance at which an unfaded, unshadowed link still reaches
    /// `rate_bps`. Inverse of the path loss/budget/Shannon chain.
    pub fn max_distance_for_rate(&self, rate_bps: f64, los: bool) -> f64 {
        let snr = (rate_bps / self.bandwidth).exp2() - 1.0;
        let prx_min = self.noise_power + 10.0 * snr.log10();
        let p = self.params(los);
        let pl_max = self.tx_power + self.tx_gain + self.rx_gain - prx_min;
        10f64.powf((pl_max - p.alpha) / (10.0 * p.beta))
    }
}

/// Whether small-scale fading and shadowing are drawn or replaced by their
/// planning-time expectation (|g|^2 = 1, no shadowing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingMode {
    Deterministic,
    #[default]
    Stochastic,
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn path_loss_db(distance: f64, params: &LinkParams, shadowing: f64) -> Result<f64, ChannelError> {
    if distance.is_nan() || distance <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(distance));
    }
    Ok(params.alpha + 10.0 * params.beta * distance.log10() + shadowing)
}

/// Zero in deterministic mode, otherwise a draw from N(0, sigma^2) dB.
pub fn sample_shadowing_db<R: Rng + ?Sized>(params: &LinkParams, mode: FadingMode, rng: &mut R) -> f64 {
    match mode {
        FadingMode::Deterministic => 0.0,
        FadingMode::Stochastic if params.sigma == 0.0 => 0.0,
        FadingMode::Stochastic => {
            Normal::new(0.0, params.sigma).expect("sigma is finite and non-negative").sample(rng)
        }
    }
}

pub fn received_power_dbm(cfg: &RadioConfig, path_loss: f64) -> f64 {
    cfg.tx_power + cfg.tx_gain + cfg.rx_gain - path_loss
}

/// Unit-mean fading power |g|^2.
pub fn sample_fading_power<R: Rng + ?Sized>(params: &LinkParams, mode: FadingMode, rng: &mut R) -> f64 {
    if mode == FadingMode::Deterministic {
        return 1.0;
    }
    match params.fading {
        Fading::Rayleigh => Exp1.sample(rng),
        Fading::Rician { k } => {
            let los = (k / (k + 1.0)).sqrt();
            let s = (0.5 / (k + 1.0)).sqrt();
            let i: f64 = StandardNormal.sample(rng);
            let q: f64 = StandardNormal.sample(rng);
            let re = los + s * i;
            let im = s * q;
            re * re + im * im
        }
    }
}

/// Shannon rate for a received power (dBm) scaled by the fading power.
pub fn throughput_bps(cfg: &RadioConfig, p_rx_dbm: f64, fading_power: f64) -> f64 {
    debug_assert!(fading_power >= 0.0);
    let snr = dbm_to_mw(p_rx_dbm) * fading_power / dbm_to_mw(cfg.noise_power);
    cfg.bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// End-to-end rate between a UAV and a ground user.
pub fn link_rate<R: Rng + ?Sized>(
    uav: Point3,
    ue: Point3,
    los: bool,
    cfg: &RadioConfig,
    mode: FadingMode,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    let params = cfg.params(los);
    let shadow = sample_shadowing_db(params, mode, rng);
    let pl = path_loss_db(uav.dist(ue), params, shadow)?;
    let g2 = sample_fading_power(params, mode, rng);
    Ok(throughput_bps(cfg, received_power_dbm(cfg, pl), g2))
}

/// Planning-time rate: no shadowing, |g|^2 = 1.
pub fn expected_rate(distance: f64, los: bool, cfg: &RadioConfig) -> Result<f64, ChannelError> {
    let pl = path_loss_db(distance, cfg.params(los), 0.0)?;
    Ok(throughput_bps(cfg, received_power_dbm(cfg, pl), 1.0))
}
