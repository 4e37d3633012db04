//! Planar disk geometry: lens areas, Apollonius circles, minimum enclosing
//! disks of disks, and lattice discretization of disk regions.
//!
//! All planning happens in the horizontal plane at the UAV's fixed altitude,
//! so everything here is 2D.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for tangency and containment residuals.
pub const GEOM_EPS: f64 = 1e-9;
/// Threshold under which a (scaled) 2x2 determinant is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("minimum enclosing disk of an empty set is undefined")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point2,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Point2, radius: f64) -> Self {
        debug_assert!(radius >= 0.0, "negative disk radius {radius}");
        Self { center, radius }
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn contains_point(&self, p: Point2) -> bool {
        self.center.dist_sq(p) <= self.radius * self.radius + GEOM_EPS
    }
}

/// A circle produced by an enclosure construction. Structurally a disk, kept
/// as its own type so enclosures and reach regions don't get mixed up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point2, radius: f64) -> Self {
        Self { center, radius }
    }

    /// True when `disk` lies inside this circle, up to [`GEOM_EPS`].
    pub fn contains_disk(&self, disk: &Disk) -> bool {
        self.center.dist(disk.center) + disk.radius <= self.radius + GEOM_EPS
    }

    pub fn as_disk(&self) -> Disk {
        Disk::new(self.center, self.radius.max(0.0))
    }
}

impl From<Disk> for Circle {
    fn from(d: Disk) -> Self {
        Circle::new(d.center, d.radius)
    }
}

/// Axis-aligned rectangle in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn from_size(width: f64, height: f64) -> Self {
        Self::new(Point2::new(0.0, 0.0), Point2::new(width, height))
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }

    fn intersect(&self, other: &Rect) -> Rect {
        Rect::new(
            Point2::new(self.min.x.max(other.min.x), self.min.y.max(other.min.y)),
            Point2::new(self.max.x.min(other.max.x), self.max.y.min(other.max.y)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cell_size: f64,
    pub origin: Point2,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { cell_size: 1.0, origin: Point2::new(0.0, 0.0) }
    }
}

/// Lattice index of a grid cell. Cell `(i, j)` has its center at
/// `origin + ((i + 0.5) * cell_size, (j + 0.5) * cell_size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: i64,
    pub j: i64,
}

impl CellIndex {
    /// Row-major order: by row (y) first, then column (x).
    pub fn row_major_key(self) -> (i64, i64) {
        (self.j, self.i)
    }
}

impl GridSpec {
    pub fn new(cell_size: f64, origin: Point2) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        Self { cell_size, origin }
    }

    pub fn center(&self, idx: CellIndex) -> Point2 {
        Point2::new(
            self.origin.x + (idx.i as f64 + 0.5) * self.cell_size,
            self.origin.y + (idx.j as f64 + 0.5) * self.cell_size,
        )
    }

    /// The cell containing `p`.
    pub fn cell_of(&self, p: Point2) -> CellIndex {
        CellIndex {
            i: ((p.x - self.origin.x) / self.cell_size).floor() as i64,
            j: ((p.y - self.origin.y) / self.cell_size).floor() as i64,
        }
    }

    // Index range of cell centers falling inside [lo, hi] along one axis.
    fn index_range(&self, lo: f64, hi: f64, origin: f64) -> (i64, i64) {
        let a = ((lo - origin) / self.cell_size - 0.5).ceil() as i64;
        let b = ((hi - origin) / self.cell_size - 0.5).floor() as i64;
        (a, b)
    }
}

/// Intersection of one or more disks, optionally clipped to a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    disks: Vec<Disk>,
    clip: Option<Rect>,
}

impl Region {
    pub fn disk(d: Disk) -> Self {
        Self { disks: vec![d], clip: None }
    }

    pub fn lens(a: Disk, b: Disk) -> Self {
        Self { disks: vec![a, b], clip: None }
    }

    /// Intersection of an arbitrary non-empty set of disks.
    pub fn intersection(disks: impl IntoIterator<Item = Disk>) -> Self {
        let disks: Vec<Disk> = disks.into_iter().collect();
        assert!(!disks.is_empty(), "region needs at least one disk");
        Self { disks, clip: None }
    }

    pub fn clipped(mut self, rect: Rect) -> Self {
        self.clip = Some(match self.clip {
            Some(c) => c.intersect(&rect),
            None => rect,
        });
        self
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.disks.iter().all(|d| d.contains_point(p))
            && self.clip.is_none_or(|r| r.contains(p))
    }

    fn bounding_box(&self) -> Rect {
        let mut bb = Rect::new(
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            Point2::new(f64::INFINITY, f64::INFINITY),
        );
        for d in &self.disks {
            let r = d.radius + GEOM_EPS;
            bb = bb.intersect(&Rect::new(
                Point2::new(d.center.x - r, d.center.y - r),
                Point2::new(d.center.x + r, d.center.y + r),
            ));
        }
        if let Some(c) = self.clip {
            bb = bb.intersect(&c);
        }
        bb
    }
}

impl From<Disk> for Region {
    fn from(d: Disk) -> Self {
        Region::disk(d)
    }
}

/// Lattice cells whose centers lie inside `region`, with their indices, in
/// row-major order (by y, then x). All regions share the global lattice of
/// `grid`, so overlapping regions produce identical cells.
pub fn discretize_indexed(region: &Region, grid: &GridSpec) -> Vec<(CellIndex, Point2)> {
    assert!(grid.cell_size > 0.0, "cell size must be positive");
    let bb = region.bounding_box();
    if !(bb.min.x <= bb.max.x && bb.min.y <= bb.max.y) {
        return Vec::new();
    }
    let (i0, i1) = grid.index_range(bb.min.x, bb.max.x, grid.origin.x);
    let (j0, j1) = grid.index_range(bb.min.y, bb.max.y, grid.origin.y);
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let idx = CellIndex { i, j };
            let c = grid.center(idx);
            if region.contains(c) {
                out.push((idx, c));
            }
        }
    }
    out
}

/// Centers of lattice cells inside `region`, row-major.
pub fn discretize(region: &Region, grid: &GridSpec) -> Vec<Point2> {
    discretize_indexed(region, grid).into_iter().map(|(_, p)| p).collect()
}

/// Exact area of the intersection of two disks.
pub fn disk_overlap_area(a: &Disk, b: &Disk) -> f64 {
    let (r1, r2) = (a.radius, b.radius);
    let d = a.center.dist(b.center);
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let c1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
    let c2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0);
    let kite = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    let eta = 0.5 * kite.max(0.0).sqrt();
    let area = r1 * r1 * c1.acos() + r2 * r2 * c2.acos() - eta;
    area.clamp(0.0, PI * r1.min(r2).powi(2))
}

/// Squared residual `(h-x)^2 + (k-y)^2 - (r - r_w)^2` of the internal
/// tangency condition between `c` and `d`.
pub fn tangency_residual(c: &Circle, d: &Disk) -> f64 {
    c.center.dist_sq(d.center) - (c.radius - d.radius).powi(2)
}

/// Smallest circle internally tangent to, and containing, all three disks.
///
/// Returns `None` when no such circle exists (degenerate or collinear
/// configurations without an internally tangent solution).
pub fn apollonius_circle(d1: &Disk, d2: &Disk, d3: &Disk) -> Option<Circle> {
    let disks = [d1, d2, d3];
    let (x1, y1, r1) = (d1.center.x, d1.center.y, d1.radius);
    let p1 = x1 * x1 + y1 * y1 - r1 * r1;

    // Subtracting the first tangency equation from the other two leaves a
    // linear system in (h, k, r):  a*h + b*k + c*r = e.
    let rows: [[f64; 4]; 2] = [d2, d3].map(|d| {
        let (x, y, r) = (d.center.x, d.center.y, d.radius);
        [
            2.0 * (x - x1),
            2.0 * (y - y1),
            -2.0 * (r - r1),
            (x * x + y * y - r * r) - p1,
        ]
    });

    let scale = rows
        .iter()
        .flat_map(|r| r[..3].iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);

    // Solve for the best-conditioned pair of unknowns, parametrized by the
    // third. Columns: 0 = h, 1 = k, 2 = r.
    let pivots = [(0usize, 1usize, 2usize), (0, 2, 1), (1, 2, 0)];
    let (pa, pb, free) = pivots
        .into_iter()
        .max_by(|a, b| {
            let da = det2(&rows, a.0, a.1).abs();
            let db = det2(&rows, b.0, b.1).abs();
            da.total_cmp(&db)
        })
        .expect("non-empty pivot list");
    let det = det2(&rows, pa, pb);
    if det.abs() <= SINGULAR_EPS * scale * scale {
        return None;
    }

    // unknown[pa] = u0 + u1 * t, unknown[pb] = w0 + w1 * t, unknown[free] = t.
    let (a00, a01, a0f, e0) = (rows[0][pa], rows[0][pb], rows[0][free], rows[0][3]);
    let (a10, a11, a1f, e1) = (rows[1][pa], rows[1][pb], rows[1][free], rows[1][3]);
    let u0 = (e0 * a11 - a01 * e1) / det;
    let u1 = (-a0f * a11 + a01 * a1f) / det;
    let w0 = (a00 * e1 - e0 * a10) / det;
    let w1 = (-a00 * a1f + a0f * a10) / det;

    let mut lin = [(0.0, 0.0); 3];
    lin[pa] = (u0, u1);
    lin[pb] = (w0, w1);
    lin[free] = (0.0, 1.0);
    let [(h0, h1), (k0, k1), (q0, q1)] = lin;

    // Back-substitute into the first tangency equation.
    let (dh0, dk0, dr0) = (h0 - x1, k0 - y1, q0 - r1);
    let qa = h1 * h1 + k1 * k1 - q1 * q1;
    let qb = 2.0 * (dh0 * h1 + dk0 * k1 - dr0 * q1);
    let qc = dh0 * dh0 + dk0 * dk0 - dr0 * dr0;

    let r_max = disks.iter().fold(0.0f64, |m, d| m.max(d.radius));
    let mut best: Option<Circle> = None;
    for t in quadratic_roots(qa, qb, qc) {
        let c = Circle::new(Point2::new(h0 + h1 * t, k0 + k1 * t), q0 + q1 * t);
        if !c.center.is_finite() || !c.radius.is_finite() || c.radius < r_max - GEOM_EPS {
            continue;
        }
        let c = polish_apollonius(c, &disks);
        let ok = disks.iter().all(|d| {
            tangency_residual(&c, d).abs() < GEOM_EPS * (1.0 + c.radius * c.radius)
                && c.contains_disk(d)
        });
        if ok && best.is_none_or(|b| c.radius < b.radius) {
            best = Some(c);
        }
    }
    best
}

fn det2(rows: &[[f64; 4]; 2], a: usize, b: usize) -> f64 {
    rows[0][a] * rows[1][b] - rows[0][b] * rows[1][a]
}

// Real roots of a*t^2 + b*t + c = 0, degrading to the linear case.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(f64::MIN_POSITIVE);
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < -1e-12 * scale * scale {
        return Vec::new();
    }
    let sq = disc.max(0.0).sqrt();
    // Numerically stable pairing.
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

// A few Newton steps on the 3x3 tangency system to shave rounding error.
fn polish_apollonius(mut c: Circle, disks: &[&Disk; 3]) -> Circle {
    for _ in 0..3 {
        let f: Vec<f64> = disks.iter().map(|d| tangency_residual(&c, d)).collect();
        if f.iter().all(|v| v.abs() < 1e-15 * (1.0 + c.radius * c.radius)) {
            break;
        }
        let j: Vec<[f64; 3]> = disks
            .iter()
            .map(|d| {
                [
                    2.0 * (c.center.x - d.center.x),
                    2.0 * (c.center.y - d.center.y),
                    -2.0 * (c.radius - d.radius),
                ]
            })
            .collect();
        let Some(step) = solve3([j[0], j[1], j[2]], [f[0], f[1], f[2]]) else {
            break;
        };
        let next = Circle::new(
            Point2::new(c.center.x - step[0], c.center.y - step[1]),
            c.radius - step[2],
        );
        let worse = disks.iter().map(|d| tangency_residual(&next, d).abs()).sum::<f64>()
            > f.iter().map(|v| v.abs()).sum::<f64>();
        if worse || !next.radius.is_finite() {
            break;
        }
        c = next;
    }
    c
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if d.abs() <= SINGULAR_EPS * scale.powi(3) || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        *slot = det(&mc) / d;
    }
    Some(out)
}

/// Smallest circle containing both disks.
pub fn enclose_two(a: &Disk, b: &Disk) -> Circle {
    let d = a.center.dist(b.center);
    if d + b.radius <= a.radius {
        return Circle::from(*a);
    }
    if d + a.radius <= b.radius {
        return Circle::from(*b);
    }
    let radius = 0.5 * (d + a.radius + b.radius);
    let t = (radius - a.radius) / d;
    Circle::new(
        Point2::new(
            a.center.x + t * (b.center.x - a.center.x),
            a.center.y + t * (b.center.y - a.center.y),
        ),
        radius,
    )
}

// Smallest circle containing every disk in `support` (at most three),
// with the support disks touching the boundary where possible.
fn circle_from_support(support: &[Disk]) -> Circle {
    match support {
        [] => Circle::new(Point2::default(), -1.0),
        [a] => Circle::from(*a),
        [a, b] => enclose_two(a, b),
        [a, b, c] => {
            let mut best: Option<Circle> = None;
            let mut consider = |cand: Circle| {
                if [a, b, c].iter().all(|d| cand.contains_disk(d))
                    && best.is_none_or(|x| cand.radius < x.radius)
                {
                    best = Some(cand);
                }
            };
            for d in [a, b, c] {
                consider(Circle::from(*d));
            }
            consider(enclose_two(a, b));
            consider(enclose_two(a, c));
            consider(enclose_two(b, c));
            if let Some(ap) = apollonius_circle(a, b, c) {
                consider(ap);
            }
            best.unwrap_or_else(|| {
                // Degenerate numerics; fall back to a safe enclosure.
                let e = enclose_two(a, b);
                enclose_two(&e.as_disk(), c)
            })
        }
        _ => unreachable!("support set larger than three in 2D"),
    }
}

/// Smallest circle containing every disk in `disks`.
///
/// Move-to-front Welzl recursion adapted to disks, with support sets of at
/// most three disks. Input order is shuffled with a fixed-seed generator, so
/// the result depends only on the input.
pub fn min_enclosing_disk(disks: &[Disk]) -> Result<Circle, GeometryError> {
    if disks.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let mut pts = disks.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ pts.len() as u64);
    pts.shuffle(&mut rng);
    let mut support = Vec::with_capacity(3);
    let c = welzl(&mut pts, disks.len(), &mut support);
    Ok(c)
}

fn welzl(pts: &mut [Disk], n: usize, support: &mut Vec<Disk>) -> Circle {
    let mut c = circle_from_support(support);
    if support.len() == 3 {
        return c;
    }
    for i in 0..n {
        if c.radius < 0.0 || !c.contains_disk(&pts[i]) {
            support.push(pts[i]);
            c = welzl(pts, i, support);
            support.pop();
            // Move to front.
            pts[..=i].rotate_right(1);
        }
    }
    c
}
