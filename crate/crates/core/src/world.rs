//! Environment state and kinematics: obstacle boxes, line-of-sight tests,
//! user and UAV reach disks, random-waypoint mobility, and the coverable /
//! covered predicates used by the planner.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{expected_rate, RadioConfig};
use crate::geometry::{discretize, Disk, GridSpec, Point2, Rect, Region};
use crate::simulator::SimConfig;
use crate::streams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn ground(p: Point2) -> Self {
        Self::new(p.x, p.y, 0.0)
    }

    pub fn at_altitude(p: Point2, h: f64) -> Self {
        Self::new(p.x, p.y, h)
    }

    pub fn dist(self, o: Point3) -> f64 {
        let (dx, dy, dz) = (self.x - o.x, self.y - o.y, self.z - o.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Axis-aligned static obstacle standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleBox {
    pub min: Point3,
    pub max: Point3,
}

impl ObstacleBox {
    pub fn new(min: Point3, max: Point3) -> Self {
        debug_assert!(min.x < max.x && min.y < max.y && min.z < max.z);
        Self { min, max }
    }

    /// Box on the ground spanning `[x0, x1] x [y0, y1] x [0, height]`.
    pub fn footprint(x0: f64, y0: f64, x1: f64, y1: f64, height: f64) -> Self {
        Self::new(Point3::new(x0, y0, 0.0), Point3::new(x1, y1, height))
    }

    /// Closed footprint test; users are kept strictly off footprints.
    pub fn footprint_contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// True iff the open segment `a`-`b` passes through the box interior.
    /// Touching a face, edge or corner does not count.
    pub fn blocks(&self, a: Point3, b: Point3) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for axis in 0..3 {
            let (lo, hi) = (self.min.axis(axis), self.max.axis(axis));
            let p = a.axis(axis);
            let d = b.axis(axis) - p;
            if d.abs() < 1e-15 {
                if p <= lo || p >= hi {
                    return false;
                }
                continue;
            }
            let (mut ta, mut tb) = ((lo - p) / d, (hi - p) / d);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t1 - t0 <= 1e-12 {
                return false;
            }
        }
        true
    }

    fn footprint_overlaps(&self, r: &Rect) -> bool {
        self.min.x <= r.max.x && self.max.x >= r.min.x && self.min.y <= r.max.y && self.max.y >= r.min.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    Urllc,
    Embb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub id: u32,
    pub position: Point2,
    /// Fixed speed, m/s.
    pub speed: f64,
    /// Direction of travel, radians.
    pub heading: f64,
    pub class: TrafficClass,
    /// Minimum rate R_req in bit/s; meaningful for URLLC users.
    pub rate_threshold: f64,
    /// Current random-waypoint target.
    pub waypoint: Point2,
}

impl UserState {
    pub fn is_urllc(&self) -> bool {
        self.class == TrafficClass::Urllc
    }

    /// Disk the user cannot leave during one slot of length `dt`.
    pub fn reach_disk(&self, dt: f64) -> Disk {
        debug_assert!(dt > 0.0);
        Disk::new(self.position, self.speed * dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Point2,
    /// Flying height h, m.
    pub altitude: f64,
    /// Maximum speed V, m/s.
    pub velocity_max: f64,
    /// Ground-projected service radius R, m.
    pub coverage_radius: f64,
    /// Maximum number of served users l.
    pub capacity: usize,
}

impl UavState {
    pub fn reach_disk(&self, dt: f64) -> Disk {
        debug_assert!(dt > 0.0);
        Disk::new(self.position, self.velocity_max * dt)
    }

    pub fn point3(&self) -> Point3 {
        Point3::at_altitude(self.position, self.altitude)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub region: Rect,
    pub obstacles: Vec<ObstacleBox>,
    pub grid: GridSpec,
}

impl Environment {
    pub fn new(region: Rect, obstacles: Vec<ObstacleBox>, grid: GridSpec) -> Self {
        Self { region, obstacles, grid }
    }

    pub fn in_footprint(&self, p: Point2) -> bool {
        self.obstacles.iter().any(|o| o.footprint_contains(p))
    }

    /// Obstacles whose footprint touches `area`.
    pub fn obstacles_near(&self, area: &Rect) -> Vec<ObstacleBox> {
        self.obstacles.iter().filter(|o| o.footprint_overlaps(area)).copied().collect()
    }
}

pub fn has_los(a: Point3, b: Point3, env: &Environment) -> bool {
    los_among(a, b, &env.obstacles)
}

/// [`has_los`] against a pre-filtered obstacle subset.
pub fn los_among(a: Point3, b: Point3, obstacles: &[ObstacleBox]) -> bool {
    !obstacles.iter().any(|o| o.blocks(a, b))
}

/// Ground-plane distance condition: the whole reach disk fits in the
/// coverage disk centered at `uav_xy`.
pub fn coverable(uav_xy: Point2, user: &UserState, coverage_radius: f64, dt: f64) -> bool {
    let slack = coverage_radius - user.speed * dt;
    slack >= 0.0 && uav_xy.dist(user.position) <= slack + 1e-9
}

/// Positions a user may occupy during the slot, as lattice cell centers of
/// its reach disk clipped to the region. Falls back to the current position
/// when the disk is smaller than a cell and catches no center.
pub fn sample_points(user: &UserState, env: &Environment, dt: f64) -> Vec<Point2> {
    let region = Region::disk(user.reach_disk(dt)).clipped(env.region);
    let pts = discretize(&region, &env.grid);
    if pts.is_empty() {
        vec![user.position]
    } else {
        pts
    }
}

/// Everything the coverage predicates need besides the candidate cell.
#[derive(Debug, Clone, Copy)]
pub struct CoverageContext<'a> {
    pub env: &'a Environment,
    pub uav: &'a UavState,
    pub radio: &'a RadioConfig,
    pub dt: f64,
}

/// A user's reach-disk samples plus the obstacles that can possibly sit
/// between those samples and any cell of the UAV reach disk.
#[derive(Debug, Clone)]
pub struct UserFootprint {
    pub samples: Vec<Point2>,
    pub far_radius: f64,
    obstacles: Vec<ObstacleBox>,
    // UAV positions for which `obstacles` is a complete filter.
    valid: Rect,
}

impl UserFootprint {
    pub fn new(user: &UserState, ctx: &CoverageContext<'_>) -> Self {
        let samples = sample_points(user, ctx.env, ctx.dt);
        let far_radius = samples.iter().map(|p| p.dist(user.position)).fold(0.0, f64::max);
        // Any cell the UAV can use is within V*dt (+ half a cell) of it, and
        // any useful cell is within R of the user.
        let a = ctx.uav.reach_disk(ctx.dt);
        let pad = a.radius + ctx.env.grid.cell_size;
        let valid = Rect::new(
            Point2::new(a.center.x - pad, a.center.y - pad),
            Point2::new(a.center.x + pad, a.center.y + pad),
        );
        let bb = bbox_of(samples.iter().copied().chain([valid.min, valid.max]));
        let obstacles = ctx.env.obstacles_near(&bb);
        Self { samples, far_radius, obstacles, valid }
    }

    /// Obstacles to test for segments from a UAV at `uav_xy`.
    pub fn obstacles_for<'e>(&'e self, uav_xy: Point2, ctx: &CoverageContext<'e>) -> &'e [ObstacleBox] {
        if self.valid.contains(uav_xy) {
            &self.obstacles
        } else {
            &ctx.env.obstacles
        }
    }
}

fn bbox_of(points: impl Iterator<Item = Point2>) -> Rect {
    let mut r = Rect::new(
        Point2::new(f64::INFINITY, f64::INFINITY),
        Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in points {
        r.min.x = r.min.x.min(p.x);
        r.min.y = r.min.y.min(p.y);
        r.max.x = r.max.x.max(p.x);
        r.max.y = r.max.y.max(p.y);
    }
    r
}

/// URLLC service predicate: coverable from `uav_xy`, and every sample of the
/// reach disk sees the UAV in line of sight at no less than the user's rate
/// threshold (planning-time channel, no fading).
pub fn covered(uav_xy: Point2, user: &UserState, ctx: &CoverageContext<'_>) -> bool {
    let fp = UserFootprint::new(user, ctx);
    covered_with(uav_xy, user, &fp, ctx)
}

/// [`covered`] with a precomputed footprint; the planner's hot path.
pub fn covered_with(uav_xy: Point2, user: &UserState, fp: &UserFootprint, ctx: &CoverageContext<'_>) -> bool {
    if !coverable(uav_xy, user, ctx.uav.coverage_radius, ctx.dt) {
        return false;
    }
    let uav = Point3::at_altitude(uav_xy, ctx.uav.altitude);
    let obstacles = fp.obstacles_for(uav_xy, ctx);
    // Rate falls with distance, so checking the farthest possible sample
    // settles the rate condition for all of them at once.
    let reach = uav_xy.dist(user.position) + fp.far_radius;
    let far = (reach * reach + ctx.uav.altitude * ctx.uav.altitude).sqrt().max(1e-9);
    let rate_ok_everywhere = expected_rate(far, true, ctx.radio).map_or(false, |r| r >= user.rate_threshold);
    fp.samples.iter().all(|q| {
        let ue = Point3::ground(*q);
        if !los_among(uav, ue, obstacles) {
            return false;
        }
        rate_ok_everywhere
            || expected_rate(uav.dist(ue), true, ctx.radio).map_or(false, |r| r >= user.rate_threshold)
    })
}

/// Uniform point in the region outside every obstacle footprint.
pub fn draw_free_point<R: Rng + ?Sized>(env: &Environment, rng: &mut R, max_attempts: usize) -> Option<Point2> {
    let r = env.region;
    (0..max_attempts).find_map(|_| {
        let p = Point2::new(
            rng.random_range(r.min.x..=r.max.x),
            rng.random_range(r.min.y..=r.max.y),
        );
        (!env.in_footprint(p)).then_some(p)
    })
}

const WAYPOINT_ATTEMPTS: usize = 1000;

/// One random-waypoint step of length at most `speed * dt`.
pub fn step_user<R: Rng + ?Sized>(user: &UserState, env: &Environment, dt: f64, rng: &mut R) -> UserState {
    let mut next = *user;
    if user.speed <= 0.0 {
        return next;
    }
    let step = user.speed * dt;
    let to_target = user.position.dist(user.waypoint);
    let arrived = to_target <= step;
    let candidate = if arrived {
        user.waypoint
    } else {
        let f = step / to_target;
        Point2::new(
            user.position.x + f * (user.waypoint.x - user.position.x),
            user.position.y + f * (user.waypoint.y - user.position.y),
        )
    };
    if !env.region.contains(candidate) || env.in_footprint(candidate) {
        // Path runs into a building: hold position and pick a new target.
        next.waypoint = draw_free_point(env, rng, WAYPOINT_ATTEMPTS).unwrap_or(user.position);
    } else {
        next.position = candidate;
        if arrived {
            next.waypoint = draw_free_point(env, rng, WAYPOINT_ATTEMPTS).unwrap_or(candidate);
        }
    }
    let d = Point2::new(next.waypoint.x - next.position.x, next.waypoint.y - next.position.y);
    if d.x != 0.0 || d.y != 0.0 {
        next.heading = d.y.atan2(d.x).rem_euclid(TAU);
    }
    next
}

/// Advances every user with a single shared stream.
pub fn step_users<R: Rng + ?Sized>(users: &[UserState], env: &Environment, dt: f64, rng: &mut R) -> Vec<UserState> {
    users.iter().map(|u| step_user(u, env, dt, rng)).collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("could not place {what} outside obstacles after {attempts} attempts")]
    Placement { what: String, attempts: usize },
    #[error("obstacle side {side} m does not fit in a {width} x {height} m region")]
    ObstacleTooLarge { side: f64, width: f64, height: f64 },
}

/// A fully materialized starting state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub obstacles: Vec<ObstacleBox>,
    pub users: Vec<UserState>,
    pub uav: UavState,
    /// Users dropped because the UAV capacity was exceeded.
    pub excluded_users: usize,
}

impl Scenario {
    pub fn environment(&self, cfg: &SimConfig) -> Environment {
        Environment::new(cfg.region_rect(), self.obstacles.clone(), cfg.grid())
    }

    /// SHA-256 over the canonical TOML encoding.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Round half up, as used for the URLLC head count.
pub fn urllc_count(users: usize, fraction: f64) -> usize {
    ((users as f64 * fraction) + 0.5).floor() as usize
}

/// Places obstacles, users and the UAV from `seed`'s named substreams.
pub fn generate_scenario(cfg: &SimConfig, seed: u64) -> Result<Scenario, ScenarioError> {
    let region = cfg.region_rect();
    let oc = &cfg.obstacles;
    if oc.count > 0 && (oc.side_max > region.width() || oc.side_max > region.height()) {
        return Err(ScenarioError::ObstacleTooLarge {
            side: oc.side_max,
            width: region.width(),
            height: region.height(),
        });
    }
    let mut rng = streams::substream(seed, streams::OBSTACLES);
    let obstacles: Vec<ObstacleBox> = (0..oc.count)
        .map(|_| {
            let sx = rng.random_range(oc.side_min..=oc.side_max);
            let sy = rng.random_range(oc.side_min..=oc.side_max);
            let h = rng.random_range(oc.height_min..=oc.height_max);
            let x0 = rng.random_range(region.min.x..=region.max.x - sx);
            let y0 = rng.random_range(region.min.y..=region.max.y - sy);
            ObstacleBox::footprint(x0, y0, x0 + sx, y0 + sy, h)
        })
        .collect();
    let env = Environment::new(region, obstacles, cfg.grid());
    let attempts = oc.max_attempts;

    let n_urllc = urllc_count(cfg.users.count, cfg.users.urllc_fraction);
    let mut users = Vec::with_capacity(cfg.users.count);
    for i in 0..cfg.users.count {
        let id = i as u32;
        let mut rng = streams::user_placement(seed, id);
        let position = draw_free_point(&env, &mut rng, attempts)
            .ok_or_else(|| ScenarioError::Placement { what: format!("user {id}"), attempts })?;
        let waypoint = draw_free_point(&env, &mut rng, attempts).unwrap_or(position);
        // Speed in (0, vmax).
        let u: f64 = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        let class = if i < n_urllc { TrafficClass::Urllc } else { TrafficClass::Embb };
        users.push(UserState {
            id,
            position,
            speed: u * cfg.users.vmax,
            heading: (waypoint.y - position.y).atan2(waypoint.x - position.x).rem_euclid(TAU),
            class,
            rate_threshold: cfg.users.urllc_threshold,
            waypoint,
        });
    }

    let mut rng = streams::substream(seed, streams::UAV_PLACEMENT);
    let position = draw_free_point(&env, &mut rng, attempts)
        .ok_or_else(|| ScenarioError::Placement { what: "UAV".into(), attempts })?;
    let uav = UavState {
        position,
        altitude: cfg.uav.altitude,
        velocity_max: cfg.uav.vmax,
        coverage_radius: cfg.uav.coverage_radius,
        capacity: cfg.uav.capacity,
    };

    // Nearest-first association up to the capacity; ties by id.
    let mut excluded_users = 0;
    if users.len() > uav.capacity {
        users.sort_by(|a, b| {
            a.position
                .dist_sq(position)
                .total_cmp(&b.position.dist_sq(position))
                .then(a.id.cmp(&b.id))
        });
        excluded_users = users.len() - uav.capacity;
        users.truncate(uav.capacity);
        users.sort_by_key(|u| u.id);
    }

    Ok(Scenario { obstacles: env.obstacles, users, uav, excluded_users })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RadioConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env_with(obstacles: Vec<ObstacleBox>) -> Environment {
        Environment::new(Rect::from_size(200.0, 200.0), obstacles, GridSpec::default())
    }

    fn user(x: f64, y: f64, speed: f64, class: TrafficClass) -> UserState {
        UserState {
            id: 0,
            position: Point2::new(x, y),
            speed,
            heading: 0.0,
            class,
            rate_threshold: 10e6,
            waypoint: Point2::new(x, y),
        }
    }

    fn uav_at(x: f64, y: f64) -> UavState {
        UavState { position: Point2::new(x, y), altitude: 30.0, velocity_max: 10.0, coverage_radius: 46.0, capacity: 64 }
    }

    // Independent oracle: dense sampling along the segment.
    fn sampled_blocked(a: Point3, b: Point3, o: &ObstacleBox) -> bool {
        (1..100_000).any(|k| {
            let t = k as f64 / 100_000.0;
            let p = Point3::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z));
            p.x > o.min.x && p.x < o.max.x && p.y > o.min.y && p.y < o.max.y && p.z > o.min.z && p.z < o.max.z
        })
    }

    #[test]
    fn los_examples() {
        let a = Point3::new(0.0, 0.0, 50.0);
        let b = Point3::new(10.0, 10.0, 0.0);
        assert!(has_los(a, b, &env_with(vec![])));
        let wall = ObstacleBox::footprint(4.0, 4.0, 6.0, 6.0, 100.0);
        assert!(sampled_blocked(a, b, &wall));
        assert!(!has_los(a, b, &env_with(vec![wall])));

        // Passing 1 m over a 20 m box.
        let short = ObstacleBox::footprint(4.0, -1.0, 6.0, 1.0, 20.0);
        let (p, q) = (Point3::new(0.0, 0.0, 21.0), Point3::new(10.0, 0.0, 21.0));
        assert!(!sampled_blocked(p, q, &short));
        assert!(has_los(p, q, &env_with(vec![short])));
    }

    #[test]
    fn touching_a_face_is_not_blocked() {
        let o = ObstacleBox::footprint(0.0, 0.0, 10.0, 10.0, 20.0);
        // Ends on the box roof.
        assert!(!o.blocks(Point3::new(5.0, 5.0, 40.0), Point3::new(5.0, 5.0, 20.0)));
        // Runs along a side wall.
        assert!(!o.blocks(Point3::new(0.0, -5.0, 5.0), Point3::new(0.0, 15.0, 5.0)));
        // Starts at a ground corner going outwards.
        assert!(!o.blocks(Point3::new(10.0, 10.0, 0.0), Point3::new(20.0, 20.0, 30.0)));
    }

    #[test]
    fn reach_disks() {
        let u = user(0.0, 0.0, 2.0, TrafficClass::Embb);
        assert_eq!(u.reach_disk(3.0), Disk::new(Point2::new(0.0, 0.0), 6.0));
        let uav = uav_at(5.0, 7.0);
        assert_eq!(uav.reach_disk(3.0), Disk::new(Point2::new(5.0, 7.0), 30.0));
        let slow = user(0.0, 0.0, 1e-12, TrafficClass::Embb);
        assert!(slow.reach_disk(3.0).radius < 1e-11);
    }

    #[test]
    fn coverable_boundary() {
        let u = user(0.0, 0.0, 2.0, TrafficClass::Urllc);
        assert!(coverable(Point2::new(0.0, 0.0), &u, 46.0, 3.0));
        assert!(coverable(Point2::new(40.0, 0.0), &u, 46.0, 3.0));
        assert!(!coverable(Point2::new(40.001, 0.0), &u, 46.0, 3.0));
        let fast = user(0.0, 0.0, 20.0, TrafficClass::Urllc);
        assert!(!coverable(Point2::new(0.0, 0.0), &fast, 46.0, 3.0));
    }

    #[test]
    fn covered_examples() {
        let radio = RadioConfig::default();
        let uav = uav_at(100.0, 100.0);
        let env = env_with(vec![]);
        let ctx = CoverageContext { env: &env, uav: &uav, radio: &radio, dt: 3.0 };
        let u = user(100.0, 100.0, 0.1, TrafficClass::Urllc);
        assert!(covered(Point2::new(100.0, 100.0), &u, &ctx));

        // A tall wall between the UAV and the user's disk.
        let wall_env = env_with(vec![ObstacleBox::footprint(108.0, 60.0, 110.0, 140.0, 150.0)]);
        let ctx_w = CoverageContext { env: &wall_env, ..ctx };
        let behind = user(115.0, 100.0, 2.0, TrafficClass::Urllc);
        let pts = sample_points(&behind, &wall_env, 3.0);
        let z = Point3::at_altitude(Point2::new(100.0, 100.0), uav.altitude);
        assert!(pts.iter().any(|q| !has_los(z, Point3::ground(*q), &wall_env)));
        assert!(!covered(Point2::new(100.0, 100.0), &behind, &ctx_w));
        assert!(covered(Point2::new(100.0, 100.0), &behind, &ctx));

        // Rate threshold above what the far edge of the disk can get.
        let edge_user = user(130.0, 100.0, 2.0, TrafficClass::Urllc);
        let far_xy = sample_points(&edge_user, &env, 3.0)
            .iter()
            .map(|q| q.dist(Point2::new(100.0, 100.0)))
            .fold(0.0, f64::max);
        let far_edge = (far_xy.powi(2) + uav.altitude.powi(2)).sqrt();
        let crit_rate = expected_rate(far_edge, true, &radio).unwrap();
        let mut picky = edge_user;
        picky.rate_threshold = crit_rate * 1.001;
        assert!(covered(Point2::new(100.0, 100.0), &edge_user, &ctx));
        assert!(!covered(Point2::new(100.0, 100.0), &picky, &ctx));
    }

    #[test]
    fn step_zero_speed_is_noop() {
        let env = env_with(vec![]);
        let u = user(3.0, 4.0, 0.0, TrafficClass::Embb);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(step_user(&u, &env, 3.0, &mut rng), u);
    }

    #[test]
    fn urllc_rounding_half_up() {
        assert_eq!(urllc_count(35, 0.4), 14);
        assert_eq!(urllc_count(5, 0.5), 3);
        assert_eq!(urllc_count(15, 0.3), 5);
        assert_eq!(urllc_count(3, 0.5), 2);
    }

    #[test]
    fn scenario_generation_is_seeded() {
        let cfg = SimConfig::default();
        let a = generate_scenario(&cfg, 7).unwrap();
        let b = generate_scenario(&cfg, 7).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), generate_scenario(&cfg, 8).unwrap().digest());
        let env = a.environment(&cfg);
        for u in &a.users {
            assert!(!env.in_footprint(u.position));
            assert!(env.region.contains(u.position));
            assert!(u.speed > 0.0 && u.speed < cfg.users.vmax);
        }
        let n_u = a.users.iter().filter(|u| u.is_urllc()).count();
        assert_eq!(n_u, urllc_count(cfg.users.count, cfg.users.urllc_fraction));
    }

    #[test]
    fn obstacle_free_scenario_has_full_los() {
        let mut cfg = SimConfig::default();
        cfg.obstacles.count = 0;
        let s = generate_scenario(&cfg, 3).unwrap();
        let env = s.environment(&cfg);
        for a in &s.users {
            for b in &s.users {
                if a.id != b.id {
                    assert!(has_los(Point3::at_altitude(a.position, 30.0), Point3::ground(b.position), &env));
                }
            }
        }
    }

    #[test]
    fn obstacles_nest_across_counts() {
        let mut cfg = SimConfig::default();
        cfg.obstacles.count = 10;
        let few = generate_scenario(&cfg, 11).unwrap();
        cfg.obstacles.count = 30;
        let many = generate_scenario(&cfg, 11).unwrap();
        assert_eq!(few.obstacles[..], many.obstacles[..10]);
    }

    #[test]
    fn capacity_keeps_nearest_users() {
        let mut cfg = SimConfig::default();
        cfg.uav.capacity = 5;
        let s = generate_scenario(&cfg, 2).unwrap();
        assert_eq!(s.users.len(), 5);
        assert_eq!(s.excluded_users, cfg.users.count - 5);
        let full = {
            let mut c = cfg.clone();
            c.uav.capacity = 1000;
            generate_scenario(&c, 2).unwrap()
        };
        let worst_kept = s.users.iter().map(|u| u.position.dist(s.uav.position)).fold(0.0, f64::max);
        let kept: Vec<u32> = s.users.iter().map(|u| u.id).collect();
        for u in full.users.iter().filter(|u| !kept.contains(&u.id)) {
            assert!(u.position.dist(s.uav.position) >= worst_kept);
        }
    }

    #[test]
    fn too_many_obstacles_reports_placement_error() {
        let mut cfg = SimConfig::default();
        cfg.region.width = 40.0;
        cfg.region.height = 40.0;
        cfg.obstacles.count = 200;
        cfg.obstacles.side_min = 30.0;
        cfg.obstacles.side_max = 30.0;
        cfg.obstacles.max_attempts = 50;
        assert!(matches!(generate_scenario(&cfg, 1), Err(ScenarioError::Placement { .. })));
    }

    proptest! {
        #[test]
        fn los_symmetric_and_matches_sampling(
            ax in 0.0..50.0f64, ay in 0.0..50.0f64, az in 0.0..80.0f64,
            bx in 0.0..50.0f64, by in 0.0..50.0f64,
            ox in 5.0..40.0f64, oy in 5.0..40.0f64, w in 1.0..10.0f64, h in 1.0..60.0f64,
        ) {
            let o = ObstacleBox::footprint(ox, oy, ox + w, oy + w, h);
            let a = Point3::new(ax, ay, az);
            let b = Point3::new(bx, by, 0.0);
            prop_assert_eq!(o.blocks(a, b), o.blocks(b, a));
            if o.blocks(a, b) {
                // Blocked segments spend time inside; sampling must see it
                // unless the chord is extremely short.
                let mut t0 = 0.0f64;
                let mut t1 = 1.0f64;
                for (p, q, lo, hi) in [(a.x, b.x, o.min.x, o.max.x), (a.y, b.y, o.min.y, o.max.y), (a.z, b.z, o.min.z, o.max.z)] {
                    let d = q - p;
                    if d.abs() > 1e-15 {
                        let (x, y) = ((lo - p) / d, (hi - p) / d);
                        t0 = t0.max(x.min(y));
                        t1 = t1.min(x.max(y));
                    }
                }
                if t1 - t0 > 1e-3 {
                    prop_assert!(sampled_blocked(a, b, &o));
                }
            } else {
                prop_assert!(!sampled_blocked(a, b, &o));
            }
        }

        #[test]
        fn steps_respect_speed_and_obstacles(seed in 0u64..500, steps in 1usize..40) {
            let env = env_with(vec![
                ObstacleBox::footprint(50.0, 50.0, 80.0, 70.0, 30.0),
                ObstacleBox::footprint(120.0, 20.0, 140.0, 180.0, 30.0),
            ]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = draw_free_point(&env, &mut rng, 100).unwrap();
            let wp = draw_free_point(&env, &mut rng, 100).unwrap();
            let mut u = user(start.x, start.y, 1.0 + (seed % 5) as f64, TrafficClass::Embb);
            u.waypoint = wp;
            for _ in 0..steps {
                let n = step_user(&u, &env, 3.0, &mut rng);
                prop_assert!(n.position.dist(u.position) <= u.speed * 3.0 + 1e-9);
                prop_assert!(env.region.contains(n.position));
                prop_assert!(!env.in_footprint(n.position));
                u = n;
            }
        }

        #[test]
        fn coverable_monotone_in_radius(d in 0.0..100.0f64, r in 0.0..100.0f64, extra in 0.0..50.0f64, v in 0.0..5.0f64) {
            let u = user(0.0, 0.0, v, TrafficClass::Urllc);
            let p = Point2::new(d, 0.0);
            if coverable(p, &u, r, 3.0) {
                prop_assert!(coverable(p, &u, r + extra, 3.0));
            }
        }

        #[test]
        fn covered_implies_coverable_and_monotone(
            ux in 60.0..140.0f64, uy in 60.0..140.0f64, v in 0.1..3.0f64,
            zx in 60.0..140.0f64, zy in 60.0..140.0f64,
            ox in 60.0..140.0f64, oy in 60.0..140.0f64, oh in 10.0..60.0f64,
            threshold in 1e6..1e9f64, lower in 0.1..1.0f64,
        ) {
            let radio = RadioConfig::default();
            let uav = uav_at(100.0, 100.0);
            let with = env_with(vec![ObstacleBox::footprint(ox, oy, ox + 12.0, oy + 12.0, oh)]);
            let without = env_with(vec![]);
            let mut u = user(ux, uy, v, TrafficClass::Urllc);
            u.rate_threshold = threshold;
            let z = Point2::new(zx, zy);
            let c_with = covered(z, &u, &CoverageContext { env: &with, uav: &uav, radio: &radio, dt: 3.0 });
            let c_without = covered(z, &u, &CoverageContext { env: &without, uav: &uav, radio: &radio, dt: 3.0 });
            if c_with {
                prop_assert!(coverable(z, &u, uav.coverage_radius, 3.0));
                prop_assert!(c_without);
                let mut easy = u;
                easy.rate_threshold = threshold * lower;
                let ctx = CoverageContext { env: &with, uav: &uav, radio: &radio, dt: 3.0 };
                prop_assert!(covered(z, &easy, &ctx));
            }
        }
    }
}
