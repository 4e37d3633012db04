//! Discrete-time engine: per slot, plan from a snapshot, move users, move
//! the UAV, then measure realized rates at the end-of-slot positions.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{link_rate, FadingMode, RadioConfig};
use crate::geometry::{GridSpec, Point2, Rect};
use crate::planner::{plan, plan_baseline, FallbackLevel, PlanError, PlanOutcome, PlannerOptions, ZoneShape};
use crate::streams;
use crate::world::{
    covered, generate_scenario, los_among, step_user, CoverageContext, Environment, Point3, Scenario,
    ScenarioError, UavState, UserState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Proposed,
    Baseline,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavConfig {
    /// Flying height h, m.
    pub altitude: f64,
    /// V, m/s.
    pub vmax: f64,
    /// R, m.
    pub coverage_radius: f64,
    /// l, users.
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersConfig {
    pub count: usize,
    pub urllc_fraction: f64,
    /// v_max, m/s.
    pub vmax: f64,
    /// R_req, bit/s.
    pub urllc_threshold: f64,
    /// Requirement the baseline imposes on eMBB users, bit/s.
    pub baseline_embb_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub count: usize,
    pub side_min: f64,
    pub side_max: f64,
    pub height_min: f64,
    pub height_max: f64,
    pub max_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub slots: usize,
    /// Slot length, s.
    pub dt: f64,
    pub cell_size: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub fading_mode: FadingMode,
    pub zone_shape: ZoneShape,
}

/// Fully resolved simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub region: RegionConfig,
    pub uav: UavConfig,
    pub users: UsersConfig,
    pub obstacles: ObstacleConfig,
    pub radio: RadioConfig,
    pub sim: RunConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            region: RegionConfig { width: 400.0, height: 400.0 },
            uav: UavConfig { altitude: 40.0, vmax: 10.0, coverage_radius: 46.0, capacity: 64 },
            users: UsersConfig {
                count: 35,
                urllc_fraction: 0.8,
                vmax: 3.0,
                urllc_threshold: 10e6,
                baseline_embb_threshold: 10e6,
            },
            obstacles: ObstacleConfig {
                count: 20,
                side_min: 10.0,
                side_max: 30.0,
                height_min: 10.0,
                height_max: 60.0,
                max_attempts: 10_000,
            },
            radio: RadioConfig::default(),
            sim: RunConfig {
                slots: 50,
                dt: 3.0,
                cell_size: 1.0,
                seed: 1,
                algorithm: Algorithm::Proposed,
                fading_mode: FadingMode::Stochastic,
                zone_shape: ZoneShape::default(),
            },
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, reason: reason.into() }
}

impl SimConfig {
    pub fn region_rect(&self) -> Rect {
        Rect::from_size(self.region.width, self.region.height)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.sim.cell_size, Point2::new(0.0, 0.0))
    }

    pub fn planner_options(&self) -> PlannerOptions {
        PlannerOptions { zone_shape: self.sim.zone_shape }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !pos(self.region.width) {
            return Err(invalid("region.width", "must be positive"));
        }
        if !pos(self.region.height) {
            return Err(invalid("region.height", "must be positive"));
        }
        if !(22.0..=150.0).contains(&self.uav.altitude) {
            return Err(invalid("uav.altitude", format!("{} outside [22, 150] m", self.uav.altitude)));
        }
        if !pos(self.uav.vmax) {
            return Err(invalid("uav.vmax", "must be positive"));
        }
        if !pos(self.uav.coverage_radius) {
            return Err(invalid("uav.coverage_radius", "must be positive"));
        }
        if self.uav.capacity == 0 {
            return Err(invalid("uav.capacity", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.users.urllc_fraction) {
            return Err(invalid("users.urllc_fraction", "must lie in [0, 1]"));
        }
        if !pos(self.users.vmax) || self.users.vmax > self.uav.vmax {
            return Err(invalid("users.vmax", "must be positive and no larger than uav.vmax"));
        }
        if !pos(self.users.urllc_threshold) {
            return Err(invalid("users.urllc_threshold", "must be positive"));
        }
        if !pos(self.users.baseline_embb_threshold) {
            return Err(invalid("users.baseline_embb_threshold", "must be positive"));
        }
        let o = &self.obstacles;
        if !pos(o.side_min) || o.side_max < o.side_min || !o.side_max.is_finite() {
            return Err(invalid("obstacles.side_min", "need 0 < side_min <= side_max"));
        }
        if !pos(o.height_min) || o.height_max < o.height_min || !o.height_max.is_finite() {
            return Err(invalid("obstacles.height_min", "need 0 < height_min <= height_max"));
        }
        if o.max_attempts == 0 {
            return Err(invalid("obstacles.max_attempts", "must be at least 1"));
        }
        if !pos(self.radio.bandwidth) {
            return Err(invalid("radio.bandwidth", "must be positive"));
        }
        for (key, p) in [("radio.los", &self.radio.los), ("radio.nlos", &self.radio.nlos)] {
            if !pos(p.beta) || !nonneg(p.sigma) || !p.alpha.is_finite() {
                return Err(invalid(key, "need finite alpha, beta > 0 and sigma >= 0"));
            }
            if let crate::channel::Fading::Rician { k } = p.fading {
                if !nonneg(k) {
                    return Err(invalid(key, "Rician K must be non-negative"));
                }
            }
        }
        for (key, v) in [
            ("radio.tx_power", self.radio.tx_power),
            ("radio.tx_gain", self.radio.tx_gain),
            ("radio.rx_gain", self.radio.rx_gain),
            ("radio.noise_power", self.radio.noise_power),
        ] {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        if self.sim.slots == 0 {
            return Err(invalid("sim.slots", "must be at least 1"));
        }
        if !pos(self.sim.dt) {
            return Err(invalid("sim.dt", "must be positive"));
        }
        if !pos(self.sim.cell_size) {
            return Err(invalid("sim.cell_size", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: usize,
    pub urllc_covered_count: usize,
    pub urllc_throughput: f64,
    pub embb_throughput: f64,
    pub sum_throughput: f64,
    pub uav_displacement: f64,
    pub fallback_level: FallbackLevel,
    /// URLLC users covered at planning time that ended the slot without LoS.
    pub coverage_violations: usize,
    /// Planner trace.
    pub zone_size: usize,
    pub zu_size: usize,
    pub planned_covered: usize,
    pub planned_embb_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config: SimConfig,
    pub seed: u64,
    pub slots: Vec<SlotMetrics>,
    pub urllc_throughput: Stat,
    pub embb_throughput: Stat,
    pub sum_throughput: Stat,
    pub urllc_covered: Stat,
    pub displacement: Stat,
    pub excluded_users: usize,
    pub coverage_violations: usize,
    /// Number of URLLC user-slots (URLLC users times slots).
    pub urllc_user_slots: usize,
}

impl RunSummary {
    pub fn from_slots(config: SimConfig, slots: Vec<SlotMetrics>, excluded_users: usize, n_urllc: usize) -> Self {
        let stat = |f: fn(&SlotMetrics) -> f64| Stat::of(slots.iter().map(f));
        Self {
            seed: config.sim.seed,
            urllc_throughput: stat(|m| m.urllc_throughput),
            embb_throughput: stat(|m| m.embb_throughput),
            sum_throughput: stat(|m| m.sum_throughput),
            urllc_covered: stat(|m| m.urllc_covered_count as f64),
            displacement: stat(|m| m.uav_displacement),
            coverage_violations: slots.iter().map(|m| m.coverage_violations).sum(),
            urllc_user_slots: n_urllc * slots.len(),
            excluded_users,
            config,
            slots,
        }
    }
}

/// Mutable per-run state.
pub struct Simulation {
    pub config: SimConfig,
    pub env: Environment,
    pub users: Vec<UserState>,
    pub uav: UavState,
    pub slot: usize,
    pub excluded_users: usize,
    mobility: Vec<ChaCha8Rng>,
    fading: ChaCha8Rng,
}

impl Simulation {
    /// Generates the scenario from the config seed.
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let scenario = generate_scenario(&config, config.sim.seed)?;
        Self::from_scenario(config, scenario)
    }

    /// Starts from an explicit scenario (replay); randomness for mobility
    /// and fading still comes from the config seed.
    pub fn from_scenario(config: SimConfig, scenario: Scenario) -> Result<Self, SimError> {
        config.validate()?;
        let env = scenario.environment(&config);
        let seed = config.sim.seed;
        let mobility = scenario.users.iter().map(|u| streams::user_mobility(seed, u.id)).collect();
        Ok(Self {
            env,
            users: scenario.users,
            uav: scenario.uav,
            slot: 0,
            excluded_users: scenario.excluded_users,
            mobility,
            fading: streams::substream(seed, streams::FADING),
            config,
        })
    }

    pub fn ctx(&self) -> CoverageContext<'_> {
        CoverageContext { env: &self.env, uav: &self.uav, radio: &self.config.radio, dt: self.config.sim.dt }
    }

    pub fn plan_slot(&self) -> Result<PlanOutcome, PlanError> {
        let ctx = self.ctx();
        let opts = self.config.planner_options();
        match self.config.sim.algorithm {
            Algorithm::Proposed => {
                let (urllc, embb): (Vec<UserState>, Vec<UserState>) = self.users.iter().partition(|u| u.is_urllc());
                plan(&urllc, &embb, &ctx, opts)
            }
            Algorithm::Baseline => plan_baseline(&self.users, self.config.users.baseline_embb_threshold, &ctx, opts),
        }
    }

    /// Plan, move users, move the UAV, measure.
    pub fn step(&mut self) -> Result<SlotMetrics, SimError> {
        let dt = self.config.sim.dt;
        let outcome = self.plan_slot()?;
        let z = outcome.chosen_cell;

        // URLLC service is decided on the start-of-slot snapshot.
        let served_urllc: Vec<bool> = {
            let ctx = self.ctx();
            self.users.iter().map(|u| u.is_urllc() && covered(z, u, &ctx)).collect()
        };

        for (u, rng) in self.users.iter_mut().zip(self.mobility.iter_mut()) {
            *u = step_user(u, &self.env, dt, rng);
        }
        let displacement = z.dist(self.uav.position);
        self.uav.position = z;

        let radio: RadioConfig = self.config.radio;
        let mode = self.config.sim.fading_mode;
        let uav3 = Point3::at_altitude(z, self.uav.altitude);
        let r_cov = self.uav.coverage_radius;
        let (mut urllc_t, mut embb_t, mut violations) = (0.0, 0.0, 0usize);
        for (u, &served) in self.users.iter().zip(&served_urllc) {
            let ue = Point3::ground(u.position);
            let los = los_among(uav3, ue, &self.env.obstacles);
            if u.is_urllc() {
                if !served {
                    continue;
                }
                if los {
                    urllc_t += link_rate(uav3, ue, true, &radio, mode, &mut self.fading).unwrap_or(0.0);
                } else {
                    violations += 1;
                }
            } else if u.position.dist(z) <= r_cov {
                embb_t += link_rate(uav3, ue, los, &radio, mode, &mut self.fading).unwrap_or(0.0);
            }
        }

        let metrics = SlotMetrics {
            slot: self.slot,
            urllc_covered_count: served_urllc.iter().filter(|&&s| s).count(),
            urllc_throughput: urllc_t,
            embb_throughput: embb_t,
            sum_throughput: urllc_t + embb_t,
            uav_displacement: displacement,
            fallback_level: outcome.fallback_level,
            coverage_violations: violations,
            zone_size: outcome.zone_size,
            zu_size: outcome.zu_size,
            planned_covered: outcome.urllc_covered,
            planned_embb_bps: outcome.embb_throughput,
        };
        self.slot += 1;
        Ok(metrics)
    }

    pub fn run_to_end(mut self) -> Result<RunSummary, SimError> {
        let mut slots = Vec::with_capacity(self.config.sim.slots);
        for _ in 0..self.config.sim.slots {
            slots.push(self.step()?);
        }
        let n_urllc = self.users.iter().filter(|u| u.is_urllc()).count();
        Ok(RunSummary::from_slots(self.config, slots, self.excluded_users, n_urllc))
    }
}

pub fn run(config: &SimConfig) -> Result<RunSummary, SimError> {
    Simulation::new(config.clone())?.run_to_end()
}

pub fn run_scenario(config: &SimConfig, scenario: Scenario) -> Result<RunSummary, SimError> {
    Simulation::from_scenario(config.clone(), scenario)?.run_to_end()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    CoverageRadius,
    ObstacleCount,
    UserVmax,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::CoverageRadius => "coverage_radius",
            SweepParam::ObstacleCount => "obstacles",
            SweepParam::UserVmax => "velocity",
        }
    }

    pub fn apply(self, cfg: &mut SimConfig, value: f64) {
        match self {
            SweepParam::CoverageRadius => cfg.uav.coverage_radius = value,
            SweepParam::ObstacleCount => cfg.obstacles.count = value.round().max(0.0) as usize,
            SweepParam::UserVmax => cfg.users.vmax = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub param: SweepParam,
    pub value: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub summary: RunSummary,
}

/// Full cross product of `values x seeds x algorithms`, returned in that
/// nesting order regardless of how the cells were scheduled.
pub fn sweep(
    base: &SimConfig,
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
    algorithms: &[Algorithm],
) -> Result<Vec<SweepCell>, SimError> {
    let jobs: Vec<(f64, u64, Algorithm)> = values
        .iter()
        .flat_map(|&v| seeds.iter().flat_map(move |&s| algorithms.iter().map(move |&a| (v, s, a))))
        .collect();
    jobs.into_par_iter()
        .map(|(value, seed, algorithm)| {
            let mut cfg = base.clone();
            param.apply(&mut cfg, value);
            cfg.sim.seed = seed;
            cfg.sim.algorithm = algorithm;
            let summary = run(&cfg)?;
            Ok(SweepCell { param, value, seed, algorithm, summary })
        })
        .collect()
}
