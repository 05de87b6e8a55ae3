//! Occupancy-grid worlds, raycast depth scans, and collision-truncated
//! motion with sliding disabled.
//!
//! Grids are closed (every boundary cell occupied) and immutable after
//! construction. Cell (ix, iy) spans
//! `[origin + ix*cs, +cs] x [origin + iy*cs, +cs]` in world meters with iy
//! increasing north; the text format stores rows north-to-south.

use crate::geometry::{Point, Pose};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance kept between the body and the contact point when a forward
/// translation is truncated by an obstacle.
pub const CONTACT_MARGIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("line 1: expected header `cellsize <float>`")]
    BadHeader,
    #[error("line 1: cell size must be positive, got {0}")]
    NonPositiveCellSize(f64),
    #[error("map has no rows")]
    Empty,
    #[error("line {line}: row width {got} does not match {expected}")]
    RaggedRow {
        line: usize,
        got: usize,
        expected: usize,
    },
    #[error("line {line}: unknown character {ch:?} (expected '.' or '#')")]
    UnknownChar { line: usize, ch: char },
    #[error("line {line}: boundary cell is not occupied; worlds must be closed")]
    OpenBoundary { line: usize },
    #[error("grid must be at least 3x3 cells, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("point ({0:.3}, {1:.3}) is outside the grid")]
    OutOfBounds(f64, f64),
    #[error("ray origin ({0:.3}, {1:.3}) is inside an occupied cell")]
    OriginOccupied(f64, f64),
    #[error("invalid scan parameters: {0}")]
    BadScanParams(String),
}

/// Circular agent body; the success zone is twice this radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentBody {
    pub radius: f64,
}

impl Default for AgentBody {
    fn default() -> Self {
        AgentBody { radius: 0.18 }
    }
}

impl AgentBody {
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// Success-zone radius: 2 x agent radius.
    pub fn success_radius(&self) -> f64 {
        2.0 * self.radius
    }

    /// Radius used for planning: the body radius plus half a cell diagonal,
    /// so a polyline between free cell centers never clips an obstacle.
    pub fn planning_radius(&self, cell_size: f64) -> f64 {
        self.radius + cell_size * std::f64::consts::FRAC_1_SQRT_2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: Point,
    cells: Vec<bool>, // row-major iy*width+ix, true = occupied
}

impl OccupancyGrid {
    /// Build a grid from raw cells, validating size and boundary closure.
    pub fn from_cells(
        width: usize,
        height: usize,
        cell_size: f64,
        cells: Vec<bool>,
    ) -> Result<Self, MapError> {
        if width < 3 || height < 3 {
            return Err(MapError::TooSmall { width, height });
        }
        if !(cell_size > 0.0) {
            return Err(MapError::NonPositiveCellSize(cell_size));
        }
        assert_eq!(cells.len(), width * height);
        let grid = OccupancyGrid {
            width,
            height,
            cell_size,
            origin: Point::new(0.0, 0.0),
            cells,
        };
        for ix in 0..width {
            for iy in [0, height - 1] {
                if !grid.occupied_idx(ix, iy) {
                    return Err(MapError::OpenBoundary {
                        line: 1 + (height - iy),
                    });
                }
            }
        }
        for iy in 0..height {
            if !grid.occupied_idx(0, iy) || !grid.occupied_idx(width - 1, iy) {
                return Err(MapError::OpenBoundary {
                    line: 1 + (height - iy),
                });
            }
        }
        Ok(grid)
    }

    /// Parse the text map format: `cellsize <float>` then one row of
    /// '.'/'#' per line, north row first.
    pub fn load(text: &str) -> Result<Self, MapError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(MapError::BadHeader)?;
        let cell_size: f64 = header
            .strip_prefix("cellsize ")
            .and_then(|v| v.parse().ok())
            .ok_or(MapError::BadHeader)?;
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(MapError::NonPositiveCellSize(cell_size));
        }

        let rows: Vec<&str> = lines.collect();
        if rows.is_empty() {
            return Err(MapError::Empty);
        }
        let height = rows.len();
        let width = rows[0].chars().count();
        let mut cells = vec![false; width * height];
        for (j, row) in rows.iter().enumerate() {
            let line = j + 2; // 1-based, after the header
            if row.chars().count() != width {
                return Err(MapError::RaggedRow {
                    line,
                    got: row.chars().count(),
                    expected: width,
                });
            }
            let iy = height - 1 - j;
            for (ix, ch) in row.chars().enumerate() {
                cells[iy * width + ix] = match ch {
                    '.' => false,
                    '#' => true,
                    ch => return Err(MapError::UnknownChar { line, ch }),
                };
            }
        }
        Self::from_cells(width, height, cell_size, cells)
    }

    /// Serialize back to the text format. Round-trips byte-for-byte with
    /// `load` when the header carries the shortest float representation
    /// (which is what this method emits).
    pub fn save(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * (self.height + 1));
        out.push_str(&format!("cellsize {}\n", self.cell_size));
        for j in 0..self.height {
            let iy = self.height - 1 - j;
            for ix in 0..self.width {
                out.push(if self.occupied_idx(ix, iy) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    fn occupied_idx(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.width + ix]
    }

    /// Occupancy with out-of-range indices treated as occupied.
    pub fn is_occupied(&self, ix: i64, iy: i64) -> bool {
        if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
            return true;
        }
        self.occupied_idx(ix as usize, iy as usize)
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        (ix < self.width && iy < self.height).then_some((ix, iy))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.origin.x + (ix as f64 + 0.5) * self.cell_size,
            self.origin.y + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    fn cell_rect(&self, ix: i64, iy: i64) -> (f64, f64, f64, f64) {
        let x0 = self.origin.x + ix as f64 * self.cell_size;
        let y0 = self.origin.y + iy as f64 * self.cell_size;
        (x0, x0 + self.cell_size, y0, y0 + self.cell_size)
    }

    /// Squared distance from a point to the closest occupied cell within
    /// `radius`, or `None` if there is none.
    fn nearest_occupied_sq(&self, p: Point, radius: f64) -> Option<f64> {
        let cs = self.cell_size;
        let ix0 = ((p.x - radius - self.origin.x) / cs).floor() as i64;
        let ix1 = ((p.x + radius - self.origin.x) / cs).floor() as i64;
        let iy0 = ((p.y - radius - self.origin.y) / cs).floor() as i64;
        let iy1 = ((p.y + radius - self.origin.y) / cs).floor() as i64;
        let mut best: Option<f64> = None;
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                if !self.is_occupied(ix, iy) {
                    continue;
                }
                let (x0, x1, y0, y1) = self.cell_rect(ix, iy);
                let dx = (x0 - p.x).max(0.0).max(p.x - x1);
                let dy = (y0 - p.y).max(0.0).max(p.y - y1);
                let d2 = dx * dx + dy * dy;
                if best.is_none_or(|b| d2 < b) {
                    best = Some(d2);
                }
            }
        }
        best
    }
}

/// True iff a disc of `radius` around `p` intersects no occupied cell
/// (cells are treated as full squares, so the test is conservative).
pub fn is_navigable(grid: &OccupancyGrid, p: Point, radius: f64) -> bool {
    if grid.cell_of(p).is_none() {
        return false;
    }
    match grid.nearest_occupied_sq(p, radius + grid.cell_size) {
        Some(d2) => d2 > radius * radius,
        None => true,
    }
}

/// Exact grid traversal (DDA): distance along the ray to the first
/// occupied-cell boundary, clamped to `max_range`.
pub fn raycast(
    grid: &OccupancyGrid,
    origin: Point,
    bearing: f64,
    max_range: f64,
) -> Result<f64, GridError> {
    let (ix0, iy0) = grid
        .cell_of(origin)
        .ok_or(GridError::OutOfBounds(origin.x, origin.y))?;
    if grid.occupied_idx(ix0, iy0) {
        return Err(GridError::OriginOccupied(origin.x, origin.y));
    }
    let (dy, dx) = bearing.sin_cos();
    let cs = grid.cell_size;
    let mut ix = ix0 as i64;
    let mut iy = iy0 as i64;

    let step_x: i64 = if dx > 0.0 {
        1
    } else if dx < 0.0 {
        -1
    } else {
        0
    };
    let step_y: i64 = if dy > 0.0 {
        1
    } else if dy < 0.0 {
        -1
    } else {
        0
    };

    let cell_x0 = grid.origin.x + ix as f64 * cs;
    let cell_y0 = grid.origin.y + iy as f64 * cs;
    let mut t_max_x = match step_x {
        1 => (cell_x0 + cs - origin.x) / dx,
        -1 => (cell_x0 - origin.x) / dx,
        _ => f64::INFINITY,
    };
    let mut t_max_y = match step_y {
        1 => (cell_y0 + cs - origin.y) / dy,
        -1 => (cell_y0 - origin.y) / dy,
        _ => f64::INFINITY,
    };
    let t_delta_x = if step_x == 0 { f64::INFINITY } else { cs / dx.abs() };
    let t_delta_y = if step_y == 0 { f64::INFINITY } else { cs / dy.abs() };

    loop {
        let t;
        if t_max_x < t_max_y {
            t = t_max_x;
            t_max_x += t_delta_x;
            ix += step_x;
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            iy += step_y;
        }
        if t > max_range {
            return Ok(max_range);
        }
        if ix < 0 || iy < 0 || ix >= grid.width as i64 || iy >= grid.height as i64 {
            // only reachable on open-edge grids; closed worlds hit a wall first
            return Ok(max_range);
        }
        if grid.is_occupied(ix, iy) {
            return Ok(t);
        }
    }
}

/// A planar range scan: `n_rays` bearings spread over `fov`, centered on
/// the agent's forward axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    pub fov: f64,
    pub n_rays: usize,
    pub max_range: f64,
    pub ranges: Vec<f64>,
}

impl DepthScan {
    /// Bearing of ray `k` in the agent frame.
    pub fn bearing(&self, k: usize) -> f64 {
        if self.n_rays <= 1 {
            0.0
        } else {
            -self.fov / 2.0 + k as f64 * self.fov / (self.n_rays - 1) as f64
        }
    }
}

/// Scan geometry shared by every observation in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub fov: f64,
    pub n_rays: usize,
    pub max_range: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        // 90 degree FOV leaves 60 degrees of overlap across a 30 degree turn.
        ScanParams {
            fov: std::f64::consts::FRAC_PI_2,
            n_rays: 128,
            max_range: 10.0,
        }
    }
}

/// Render a noise-free depth scan from `pose`.
pub fn render_scan(
    grid: &OccupancyGrid,
    pose: &Pose,
    params: &ScanParams,
) -> Result<DepthScan, GridError> {
    if params.n_rays == 0 {
        return Err(GridError::BadScanParams("n_rays must be >= 1".into()));
    }
    if !(params.max_range > 0.0) {
        return Err(GridError::BadScanParams("max_range must be > 0".into()));
    }
    if params.fov < 0.0 {
        return Err(GridError::BadScanParams("fov must be >= 0".into()));
    }
    let mut scan = DepthScan {
        fov: params.fov,
        n_rays: params.n_rays,
        max_range: params.max_range,
        ranges: Vec::with_capacity(params.n_rays),
    };
    let origin = pose.position();
    for k in 0..params.n_rays {
        let bearing = pose.theta + scan.bearing(k);
        scan.ranges
            .push(raycast(grid, origin, bearing, params.max_range)?);
    }
    Ok(scan)
}

// --- collision-truncated translation -----------------------------------

/// Earliest t >= 0 at which the ray o + t*d enters the axis-aligned box,
/// or None if it misses. Returns 0 when the origin starts inside.
fn ray_aabb_entry(o: Point, d: Point, x0: f64, x1: f64, y0: f64, y1: f64) -> Option<f64> {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for (o1, d1, lo, hi) in [(o.x, d.x, x0, x1), (o.y, d.y, y0, y1)] {
        if d1 == 0.0 {
            if o1 < lo || o1 > hi {
                return None;
            }
        } else {
            let inv = 1.0 / d1;
            let (a, b) = ((lo - o1) * inv, (hi - o1) * inv);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            tmin = tmin.max(a);
            tmax = tmax.min(b);
            if tmin > tmax {
                return None;
            }
        }
    }
    Some(tmin)
}

/// Earliest t >= 0 at which the ray reaches distance r from center c.
fn ray_circle_entry(o: Point, d: Point, c: Point, r: f64) -> Option<f64> {
    let f = o - c;
    let b = f.x * d.x + f.y * d.y;
    let q = f.x * f.x + f.y * f.y - r * r;
    if q <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - q;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// First contact parameter of a disc of `radius` moving from `o` along the
/// unit direction `d` against one cell square (exact rounded-rectangle
/// intersection: two expanded slabs plus the four corner circles).
fn disc_cell_contact(
    o: Point,
    d: Point,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    radius: f64,
) -> Option<f64> {
    let mut best = f64::INFINITY;
    if let Some(t) = ray_aabb_entry(o, d, x0 - radius, x1 + radius, y0, y1) {
        best = best.min(t);
    }
    if let Some(t) = ray_aabb_entry(o, d, x0, x1, y0 - radius, y1 + radius) {
        best = best.min(t);
    }
    for corner in [
        Point::new(x0, y0),
        Point::new(x0, y1),
        Point::new(x1, y0),
        Point::new(x1, y1),
    ] {
        if let Some(t) = ray_circle_entry(o, d, corner, radius) {
            best = best.min(t);
        }
    }
    best.is_finite().then_some(best)
}

/// Translate along the pose's heading by at most `forward` meters, stopping
/// `CONTACT_MARGIN` before the first obstacle contact. No lateral sliding
/// component is ever introduced; the heading is unchanged.
pub fn move_with_collision(
    grid: &OccupancyGrid,
    pose: &Pose,
    forward: f64,
    radius: f64,
) -> (Pose, bool) {
    if forward <= 0.0 {
        return (*pose, false);
    }
    let o = pose.position();
    let (dy, dx) = pose.theta.sin_cos();
    let d = Point::new(dx, dy);

    // Cells overlapping the swept capsule's bounding box.
    let cs = grid.cell_size;
    let pad = radius + cs;
    let ex = o.x + forward * dx;
    let ey = o.y + forward * dy;
    let ix0 = ((o.x.min(ex) - pad - grid.origin.x) / cs).floor() as i64;
    let ix1 = ((o.x.max(ex) + pad - grid.origin.x) / cs).floor() as i64;
    let iy0 = ((o.y.min(ey) - pad - grid.origin.y) / cs).floor() as i64;
    let iy1 = ((o.y.max(ey) + pad - grid.origin.y) / cs).floor() as i64;

    let mut contact = f64::INFINITY;
    for iy in iy0..=iy1 {
        for ix in ix0..=ix1 {
            if !grid.is_occupied(ix, iy) {
                continue;
            }
            let (x0, x1, y0, y1) = grid.cell_rect(ix, iy);
            if let Some(t) = disc_cell_contact(o, d, x0, x1, y0, y1, radius) {
                contact = contact.min(t);
            }
        }
    }

    let allowed = (contact - CONTACT_MARGIN).max(0.0);
    if forward <= allowed {
        (
            Pose::new(o.x + forward * dx, o.y + forward * dy, pose.theta),
            false,
        )
    } else {
        (
            Pose::new(o.x + allowed * dx, o.y + allowed * dy, pose.theta),
            true,
        )
    }
}

// --- procedural maps -----------------------------------------------------

#[derive(Debug, Error)]
pub enum MapGenError {
    #[error("invalid map spec: {0}")]
    BadSpec(String),
    #[error("rooms do not fit: requested {requested}, achieved {achieved}")]
    RoomsDontFit { requested: usize, achieved: usize },
    #[error("no valid door position on a wall segment")]
    NoDoorPosition,
}

/// Parameters for the procedural room generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSpec {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub room_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64, // inclusive
    y1: i64,
}

impl Rect {
    fn w(&self) -> i64 {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> i64 {
        self.y1 - self.y0 + 1
    }
    fn area(&self) -> i64 {
        self.w() * self.h()
    }
}

#[derive(Debug, Clone, Copy)]
struct WallSeg {
    vertical: bool,
    coord: i64, // x for vertical walls, y for horizontal
    lo: i64,
    hi: i64, // inclusive span along the wall
}

/// Door gaps are at least three agent diameters wide.
fn door_cells(cell_size: f64) -> i64 {
    let min_door = 3.0 * AgentBody::default().diameter();
    (min_door / cell_size).ceil() as i64
}

/// Generate a closed multi-room map: BSP splits with one door per wall.
/// Deterministic in the seed; the navigable region is a single connected
/// component by construction (rooms form a tree joined by doors).
pub fn generate_map(spec: &MapSpec) -> Result<OccupancyGrid, MapGenError> {
    if spec.width < 3 || spec.height < 3 {
        return Err(MapGenError::BadSpec(format!(
            "grid must be at least 3x3, got {}x{}",
            spec.width, spec.height
        )));
    }
    if !(spec.cell_size > 0.0) || !spec.cell_size.is_finite() {
        return Err(MapGenError::BadSpec("cell_size must be positive".into()));
    }
    if spec.room_count < 1 {
        return Err(MapGenError::BadSpec("room_count must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec.width as i64;
    let h = spec.height as i64;
    let door = door_cells(spec.cell_size);
    let min_side = door + 2;

    let mut cells = vec![false; spec.width * spec.height];
    let set = |cells: &mut Vec<bool>, ix: i64, iy: i64, v: bool| {
        cells[iy as usize * spec.width + ix as usize] = v;
    };
    for ix in 0..w {
        set(&mut cells, ix, 0, true);
        set(&mut cells, ix, h - 1, true);
    }
    for iy in 0..h {
        set(&mut cells, 0, iy, true);
        set(&mut cells, w - 1, iy, true);
    }

    let mut leaves = vec![Rect {
        x0: 1,
        y0: 1,
        x1: w - 2,
        y1: h - 2,
    }];
    let mut walls: Vec<WallSeg> = Vec::new();

    while leaves.len() < spec.room_count {
        // split the largest leaf that still fits two rooms
        let splittable = |r: &Rect| r.w() >= 2 * min_side + 1 || r.h() >= 2 * min_side + 1;
        let idx = leaves
            .iter()
            .enumerate()
            .filter(|(_, r)| splittable(r))
            .max_by_key(|(_, r)| r.area())
            .map(|(i, _)| i);
        let Some(idx) = idx else {
            return Err(MapGenError::RoomsDontFit {
                requested: spec.room_count,
                achieved: leaves.len(),
            });
        };
        let leaf = leaves.remove(idx);
        let vertical = if leaf.w() >= 2 * min_side + 1 && leaf.h() >= 2 * min_side + 1 {
            leaf.w() >= leaf.h()
        } else {
            leaf.w() >= 2 * min_side + 1
        };
        if vertical {
            let coord = rng.random_range(leaf.x0 + min_side..=leaf.x1 - min_side);
            for iy in leaf.y0..=leaf.y1 {
                set(&mut cells, coord, iy, true);
            }
            walls.push(WallSeg {
                vertical: true,
                coord,
                lo: leaf.y0,
                hi: leaf.y1,
            });
            leaves.push(Rect {
                x1: coord - 1,
                ..leaf
            });
            leaves.push(Rect {
                x0: coord + 1,
                ..leaf
            });
        } else {
            let coord = rng.random_range(leaf.y0 + min_side..=leaf.y1 - min_side);
            for ix in leaf.x0..=leaf.x1 {
                set(&mut cells, ix, coord, true);
            }
            walls.push(WallSeg {
                vertical: false,
                coord,
                lo: leaf.x0,
                hi: leaf.x1,
            });
            leaves.push(Rect {
                y1: coord - 1,
                ..leaf
            });
            leaves.push(Rect {
                y0: coord + 1,
                ..leaf
            });
        }
    }

    // Carve doors after all walls exist so every door keeps a free corridor
    // on both sides (later walls can otherwise abut an earlier opening).
    let occupied = |cells: &Vec<bool>, ix: i64, iy: i64| -> bool {
        cells[iy as usize * spec.width + ix as usize]
    };
    for wall in &walls {
        let span_ok = |cells: &Vec<bool>, start: i64| -> bool {
            (start..start + door).all(|k| {
                let (a, b) = if wall.vertical {
                    ((wall.coord - 1, k), (wall.coord + 1, k))
                } else {
                    ((k, wall.coord - 1), (k, wall.coord + 1))
                };
                !occupied(cells, a.0, a.1) && !occupied(cells, b.0, b.1)
            })
        };
        let lo = wall.lo + 1;
        let hi = wall.hi - 1 - (door - 1);
        if hi < lo {
            return Err(MapGenError::NoDoorPosition);
        }
        let mut start = None;
        for _ in 0..32 {
            let cand = rng.random_range(lo..=hi);
            if span_ok(&cells, cand) {
                start = Some(cand);
                break;
            }
        }
        if start.is_none() {
            start = (lo..=hi).find(|&cand| span_ok(&cells, cand));
        }
        let start = start.ok_or(MapGenError::NoDoorPosition)?;
        for k in start..start + door {
            if wall.vertical {
                set(&mut cells, wall.coord, k, false);
            } else {
                set(&mut cells, k, wall.coord, false);
            }
        }
    }

    let grid = OccupancyGrid::from_cells(spec.width, spec.height, spec.cell_size, cells)
        .expect("generated grid is closed by construction");
    debug_assert_eq!(free_component_count(&grid), 1);
    Ok(grid)
}

/// Number of 4-connected components of free cells.
pub fn free_component_count(grid: &OccupancyGrid) -> usize {
    let (w, h) = (grid.width(), grid.height());
    let mut seen = vec![false; w * h];
    let mut components = 0;
    for start in 0..w * h {
        if seen[start] || grid.cells[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (ix, iy) = ((i % w) as i64, (i / w) as i64);
            for (nx, ny) in [(ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)] {
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !seen[j] && !grid.cells[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    components
}
