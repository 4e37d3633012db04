//! Per-slot UAV position selection.
//!
//! URLLC stage: for every triplet of URLLC reach disks, the Apollonius
//! circle gives an enclosure center; the disk of radius `R - r_a` around it,
//! intersected with the UAV reach disk `A`, is discretized and filtered down
//! to the cells that actually cover all three users. The union over triplets
//! forms the candidate zone. Only if every triplet comes up empty are pairs
//! tried (minimum enclosing disk of the pair), then single users.
//! The cells of the zone covering the most URLLC users form `Z_u`.
//!
//! eMBB stage: inside `Z_u`, pick the cell maximizing the summed expected
//! eMBB throughput, where each eMBB user's contribution is the mean rate over
//! the part of its reach disk inside the coverage disk (partial coverage,
//! LoS or NLoS). Remaining ties go to the cell closest to the current UAV
//! position, then to row-major lattice order.

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::expected_rate;
use crate::geometry::{
    apollonius_circle, discretize_indexed, disk_overlap_area, enclose_two, CellIndex, Circle, Disk, GridSpec,
    Point2, Rect, Region,
};
use crate::world::{covered_with, los_among, CoverageContext, Point3, UserFootprint, UserState};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("{users} users assigned but the UAV serves at most {capacity}")]
    CapacityExceeded { users: usize, capacity: usize },
}

/// Which stage of the URLLC zone search produced the candidate cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackLevel {
    Triplet,
    Pair,
    Single,
    None,
}

impl FallbackLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            FallbackLevel::Triplet => "triplet",
            FallbackLevel::Pair => "pair",
            FallbackLevel::Single => "single",
            FallbackLevel::None => "none",
        }
    }
}

/// How the search region around an enclosure center is shaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneShape {
    /// Disk of radius `R - r` around the enclosure center.
    Enclosure,
    /// Every point whose coverage disk contains all generating reach disks;
    /// a superset of `Enclosure`.
    #[default]
    Feasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneCell {
    pub index: CellIndex,
    pub center: Point2,
    /// Level and user ids of the first enclosure that produced this cell.
    pub provenance: (FallbackLevel, [Option<u32>; 3]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateZone {
    /// Deduplicated by lattice index, in row-major order.
    pub cells: Vec<ZoneCell>,
    pub level: FallbackLevel,
}

impl CandidateZone {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMatrix {
    pub user_ids: Vec<u32>,
    pub cells: Vec<Point2>,
    /// `entries[i][j]`: user `i` covered from cell `j`.
    pub entries: Vec<Vec<bool>>,
}

impl CoverageMatrix {
    pub fn from_entries(user_ids: Vec<u32>, cells: Vec<Point2>, entries: Vec<Vec<bool>>) -> Self {
        debug_assert!(entries.iter().all(|r| r.len() == cells.len()));
        Self { user_ids, cells, entries }
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.cells.len())
            .map(|j| self.entries.iter().filter(|row| row[j]).count())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOutcome {
    pub chosen_cell: Point2,
    /// Column sum S(z) of the chosen cell.
    pub urllc_covered: usize,
    /// Aggregate expected eMBB throughput T(z), bit/s.
    pub embb_throughput: f64,
    pub displacement: f64,
    pub fallback_level: FallbackLevel,
    pub zone_size: usize,
    pub zu_size: usize,
    /// The UAV drifted toward the user centroid because nothing was servable.
    pub centroid_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerOptions {
    pub zone_shape: ZoneShape,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self { zone_shape: ZoneShape::default() }
    }
}

/// Cells of `D_u ∩ A` for `D_u = Disk(enclosure.center, R - enclosure.radius)`,
/// or nothing when the enclosure is too large or `D_u` misses `A`.
pub fn zone_from_enclosure(enclosure: &Circle, a: &Disk, coverage_radius: f64, grid: &GridSpec) -> Vec<Point2> {
    zone_cells(enclosure, a, coverage_radius, grid, None, &[])
        .into_iter()
        .map(|(_, p)| p)
        .collect()
}

fn zone_cells(
    enclosure: &Circle,
    a: &Disk,
    coverage_radius: f64,
    grid: &GridSpec,
    clip: Option<Rect>,
    feasible: &[Disk],
) -> Vec<(CellIndex, Point2)> {
    if enclosure.radius > coverage_radius {
        return Vec::new();
    }
    let du = Disk::new(enclosure.center, coverage_radius - enclosure.radius);
    let mut region = if feasible.is_empty() {
        if disk_overlap_area(a, &du) <= 0.0 {
            return Vec::new();
        }
        Region::lens(du, *a)
    } else {
        // Points whose coverage disk holds every generating disk.
        let mut disks: Vec<Disk> = feasible
            .iter()
            .map(|d| Disk::new(d.center, coverage_radius - d.radius))
            .collect();
        if disks.iter().any(|d| disk_overlap_area(a, d) <= 0.0) {
            return Vec::new();
        }
        disks.push(*a);
        Region::intersection(disks)
    };
    if let Some(r) = clip {
        region = region.clipped(r);
    }
    discretize_indexed(&region, grid)
}

/// Planner state for one slot: the coverage context, the URLLC set under
/// consideration, and a memo of `covered(cell, user)` shared by all
/// enclosures (the same cell shows up under many triplets).
pub struct Planner<'a> {
    ctx: CoverageContext<'a>,
    options: PlannerOptions,
    users: &'a [UserState],
    footprints: Vec<UserFootprint>,
    memo: HashMap<(CellIndex, usize), bool>,
}

impl<'a> Planner<'a> {
    pub fn new(users: &'a [UserState], ctx: CoverageContext<'a>, options: PlannerOptions) -> Self {
        let footprints = users.iter().map(|u| UserFootprint::new(u, &ctx)).collect();
        Self { ctx, options, users, footprints, memo: HashMap::new() }
    }

    fn a_disk(&self) -> Disk {
        self.ctx.uav.reach_disk(self.ctx.dt)
    }

    fn covers(&mut self, cell: CellIndex, center: Point2, user: usize) -> bool {
        let (users, footprints, ctx) = (self.users, &self.footprints, &self.ctx);
        *self
            .memo
            .entry((cell, user))
            .or_insert_with(|| covered_with(center, &users[user], &footprints[user], ctx))
    }

    // A user can only be covered from A if A meets Disk(e_i, R - r_i).
    fn reachable(&self, i: usize) -> bool {
        let u = &self.users[i];
        let slack = self.ctx.uav.coverage_radius - u.speed * self.ctx.dt;
        let a = self.a_disk();
        slack >= 0.0 && u.position.dist(a.center) <= a.radius + slack + 1e-9
    }

    fn add_enclosure(
        &mut self,
        zone: &mut BTreeMap<(i64, i64), ZoneCell>,
        enclosure: &Circle,
        members: &[usize],
        level: FallbackLevel,
    ) {
        let a = self.a_disk();
        let disks: Vec<Disk> = members.iter().map(|&i| self.users[i].reach_disk(self.ctx.dt)).collect();
        let feasible: &[Disk] = match self.options.zone_shape {
            ZoneShape::Enclosure => &[],
            ZoneShape::Feasible => &disks,
        };
        let cells = zone_cells(
            enclosure,
            &a,
            self.ctx.uav.coverage_radius,
            &self.ctx.env.grid,
            Some(self.ctx.env.region),
            feasible,
        );
        let mut ids = [None; 3];
        for (slot, &m) in ids.iter_mut().zip(members) {
            *slot = Some(self.users[m].id);
        }
        for (idx, center) in cells {
            if zone.contains_key(&idx.row_major_key()) {
                continue;
            }
            if members.iter().all(|&m| self.covers(idx, center, m)) {
                zone.insert(idx.row_major_key(), ZoneCell { index: idx, center, provenance: (level, ids) });
            }
        }
    }

    /// Candidate zone with triplet -> pair -> single fallback.
    pub fn build_candidate_zone(&mut self) -> CandidateZone {
        let live: Vec<usize> = (0..self.users.len()).filter(|&i| self.reachable(i)).collect();
        let dt = self.ctx.dt;
        let r_cov = self.ctx.uav.coverage_radius;
        let mut zone = BTreeMap::new();

        for t in live.iter().copied().combinations(3) {
            let d: Vec<Disk> = t.iter().map(|&i| self.users[i].reach_disk(dt)).collect();
            let enclosure = match self.options.zone_shape {
                ZoneShape::Enclosure => apollonius_circle(&d[0], &d[1], &d[2]),
                // The Apollonius circle is the tightest enclosure unless the
                // triplet is obtuse or degenerate; then the minimum
                // enclosing disk decides feasibility.
                ZoneShape::Feasible => match apollonius_circle(&d[0], &d[1], &d[2]) {
                    Some(c) if c.radius <= r_cov => Some(c),
                    _ => crate::geometry::min_enclosing_disk(&d).ok(),
                },
            };
            if let Some(c) = enclosure {
                self.add_enclosure(&mut zone, &c, &t, FallbackLevel::Triplet);
            }
        }
        if !zone.is_empty() {
            return finish(zone, FallbackLevel::Triplet);
        }

        for p in live.iter().copied().combinations(2) {
            let c = enclose_two(&self.users[p[0]].reach_disk(dt), &self.users[p[1]].reach_disk(dt));
            self.add_enclosure(&mut zone, &c, &p, FallbackLevel::Pair);
        }
        if !zone.is_empty() {
            return finish(zone, FallbackLevel::Pair);
        }

        for &i in &live {
            let c = Circle::from(self.users[i].reach_disk(dt));
            self.add_enclosure(&mut zone, &c, &[i], FallbackLevel::Single);
        }
        if !zone.is_empty() {
            return finish(zone, FallbackLevel::Single);
        }
        CandidateZone { cells: Vec::new(), level: FallbackLevel::None }
    }

    pub fn coverage_matrix(&mut self, zone: &CandidateZone) -> CoverageMatrix {
        let entries = (0..self.users.len())
            .map(|i| zone.cells.iter().map(|c| self.covers(c.index, c.center, i)).collect())
            .collect();
        CoverageMatrix::from_entries(
            self.users.iter().map(|u| u.id).collect(),
            zone.cells.iter().map(|c| c.center).collect(),
            entries,
        )
    }

    /// Number of users in this planner's set covered from `center`.
    pub fn covered_count(&mut self, idx: CellIndex, center: Point2) -> usize {
        (0..self.users.len()).filter(|&i| self.covers(idx, center, i)).count()
    }
}

fn finish(zone: BTreeMap<(i64, i64), ZoneCell>, level: FallbackLevel) -> CandidateZone {
    CandidateZone { cells: zone.into_values().collect(), level }
}

/// Column indices whose sum equals the maximum column sum.
pub fn select_urllc_cells(m: &CoverageMatrix) -> Vec<usize> {
    let sums = m.column_sums();
    let Some(&best) = sums.iter().max() else {
        return Vec::new();
    };
    sums.iter().enumerate().filter(|(_, &s)| s == best).map(|(j, _)| j).collect()
}

/// Expected eMBB throughput T_iz of `user` from a UAV at `z`.
pub fn embb_cell_throughput(z: Point2, user: &UserState, ctx: &CoverageContext<'_>) -> f64 {
    let fp = UserFootprint::new(user, ctx);
    embb_throughput_with(z, user, &fp, ctx)
}

fn embb_throughput_with(z: Point2, user: &UserState, fp: &UserFootprint, ctx: &CoverageContext<'_>) -> f64 {
    let r = ctx.uav.coverage_radius;
    if z.dist(user.position) > r + fp.far_radius + 1e-9 {
        return 0.0;
    }
    let uav = Point3::at_altitude(z, ctx.uav.altitude);
    let obstacles = fp.obstacles_for(z, ctx);
    let mut sum = 0.0;
    let mut n = 0usize;
    for w in fp.samples.iter().filter(|w| w.dist_sq(z) <= r * r + 1e-9) {
        let ue = Point3::ground(*w);
        let los = los_among(uav, ue, obstacles);
        sum += expected_rate(uav.dist(ue).max(1e-9), los, ctx.radio).unwrap_or(0.0);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Candidate cells for an unconstrained choice: the lattice inside `A`.
fn reach_cells(ctx: &CoverageContext<'_>) -> Vec<(CellIndex, Point2)> {
    let a = ctx.uav.reach_disk(ctx.dt);
    discretize_indexed(&Region::disk(a).clipped(ctx.env.region), &ctx.env.grid)
}

fn check_capacity(n: usize, ctx: &CoverageContext<'_>) -> Result<(), PlanError> {
    if n > ctx.uav.capacity {
        return Err(PlanError::CapacityExceeded { users: n, capacity: ctx.uav.capacity });
    }
    Ok(())
}

// Drift toward the centroid of `users`, staying inside A and on the lattice.
fn centroid_move(users: &[&UserState], ctx: &CoverageContext<'_>) -> Point2 {
    let e0 = ctx.uav.position;
    if users.is_empty() {
        return e0;
    }
    let n = users.len() as f64;
    let target = Point2::new(
        users.iter().map(|u| u.position.x).sum::<f64>() / n,
        users.iter().map(|u| u.position.y).sum::<f64>() / n,
    );
    let cells = reach_cells(ctx);
    cells
        .iter()
        .min_by(|a, b| {
            a.1.dist_sq(target)
                .total_cmp(&b.1.dist_sq(target))
                .then(a.0.row_major_key().cmp(&b.0.row_major_key()))
        })
        .map_or(e0, |c| c.1)
}

// Pick the minimum-displacement cell, ties by row-major order.
fn nearest_to_e0<'c>(cells: impl Iterator<Item = &'c (CellIndex, Point2)>, e0: Point2) -> Option<&'c (CellIndex, Point2)> {
    cells.min_by(|a, b| {
        a.1.dist_sq(e0)
            .total_cmp(&b.1.dist_sq(e0))
            .then(a.0.row_major_key().cmp(&b.0.row_major_key()))
    })
}

const T_TIE_REL: f64 = 1e-12;

/// Proposed scheme: URLLC coverage first, then eMBB throughput, then
/// displacement.
pub fn plan(
    urllc: &[UserState],
    embb: &[UserState],
    ctx: &CoverageContext<'_>,
    options: PlannerOptions,
) -> Result<PlanOutcome, PlanError> {
    check_capacity(urllc.len() + embb.len(), ctx)?;
    let e0 = ctx.uav.position;
    let mut planner = Planner::new(urllc, *ctx, options);

    let (zone_size, level, zu): (usize, FallbackLevel, Vec<(CellIndex, Point2, usize)>) = if urllc.is_empty() {
        (0, FallbackLevel::None, reach_cells(ctx).into_iter().map(|(i, p)| (i, p, 0)).collect())
    } else {
        let zone = planner.build_candidate_zone();
        if zone.is_empty() {
            // Nothing servable for URLLC: let the eMBB stage choose inside A.
            (0, FallbackLevel::None, reach_cells(ctx).into_iter().map(|(i, p)| (i, p, 0)).collect())
        } else {
            let m = planner.coverage_matrix(&zone);
            let sums = m.column_sums();
            let zu = select_urllc_cells(&m)
                .into_iter()
                .map(|j| (zone.cells[j].index, zone.cells[j].center, sums[j]))
                .collect();
            (zone.len(), zone.level, zu)
        }
    };

    let embb_fps: Vec<UserFootprint> = embb.iter().map(|u| UserFootprint::new(u, ctx)).collect();
    let scored: Vec<(CellIndex, Point2, usize, f64)> = zu
        .iter()
        .map(|&(idx, p, s)| {
            let t = embb
                .iter()
                .zip(&embb_fps)
                .map(|(u, fp)| embb_throughput_with(p, u, fp, ctx))
                .sum::<f64>();
            (idx, p, s, t)
        })
        .collect();
    let t_best = scored.iter().map(|c| c.3).fold(0.0, f64::max);

    if scored.is_empty() || (level == FallbackLevel::None && t_best <= 0.0) {
        let everyone: Vec<&UserState> = urllc.iter().chain(embb).collect();
        let chosen = centroid_move(&everyone, ctx);
        let covered = if urllc.is_empty() { 0 } else { planner.covered_count(ctx.env.grid.cell_of(chosen), chosen) };
        return Ok(PlanOutcome {
            chosen_cell: chosen,
            urllc_covered: covered,
            embb_throughput: 0.0,
            displacement: chosen.dist(e0),
            fallback_level: FallbackLevel::None,
            zone_size,
            zu_size: scored.len(),
            centroid_fallback: true,
        });
    }

    let tol = T_TIE_REL * t_best.abs();
    let best_pairs: Vec<(CellIndex, Point2)> =
        scored.iter().filter(|c| c.3 >= t_best - tol).map(|c| (c.0, c.1)).collect();
    let &(idx, chosen) = nearest_to_e0(best_pairs.iter(), e0).expect("non-empty argmax set");
    let (_, _, s, t) = *scored.iter().find(|c| c.0 == idx).expect("chosen cell scored");
    let urllc_covered = if level == FallbackLevel::None && !urllc.is_empty() {
        planner.covered_count(idx, chosen)
    } else {
        s
    };
    Ok(PlanOutcome {
        chosen_cell: chosen,
        urllc_covered,
        embb_throughput: t,
        displacement: chosen.dist(e0),
        fallback_level: level,
        zone_size,
        zu_size: zu.len(),
        centroid_fallback: false,
    })
}

/// Comparison scheme: every user treated as URLLC (eMBB users get
/// `embb_threshold` as their rate requirement), no throughput stage, the
/// max-coverage cell closest to the current position wins.
pub fn plan_baseline(
    all_users: &[UserState],
    embb_threshold: f64,
    ctx: &CoverageContext<'_>,
    options: PlannerOptions,
) -> Result<PlanOutcome, PlanError> {
    check_capacity(all_users.len(), ctx)?;
    let e0 = ctx.uav.position;
    let as_urllc: Vec<UserState> = all_users
        .iter()
        .map(|u| {
            let mut v = *u;
            if !u.is_urllc() {
                v.rate_threshold = embb_threshold;
            }
            v
        })
        .collect();
    let mut planner = Planner::new(&as_urllc, *ctx, options);
    let zone = if as_urllc.is_empty() {
        CandidateZone { cells: Vec::new(), level: FallbackLevel::None }
    } else {
        planner.build_candidate_zone()
    };
    if zone.is_empty() {
        let everyone: Vec<&UserState> = all_users.iter().collect();
        let chosen = centroid_move(&everyone, ctx);
        return Ok(PlanOutcome {
            chosen_cell: chosen,
            urllc_covered: 0,
            embb_throughput: 0.0,
            displacement: chosen.dist(e0),
            fallback_level: FallbackLevel::None,
            zone_size: 0,
            zu_size: 0,
            centroid_fallback: true,
        });
    }
    let m = planner.coverage_matrix(&zone);
    let sums = m.column_sums();
    let zu: Vec<usize> = select_urllc_cells(&m);
    let cells: Vec<(CellIndex, Point2)> = zu.iter().map(|&j| (zone.cells[j].index, zone.cells[j].center)).collect();
    let &(idx, chosen) = nearest_to_e0(cells.iter(), e0).expect("non-empty Z_u");
    let j = zone.cells.iter().position(|c| c.index == idx).expect("chosen in zone");
    Ok(PlanOutcome {
        chosen_cell: chosen,
        urllc_covered: sums[j],
        embb_throughput: 0.0,
        displacement: chosen.dist(e0),
        fallback_level: zone.level,
        zone_size: zone.len(),
        zu_size: zu.len(),
        centroid_fallback: false,
    })
}
