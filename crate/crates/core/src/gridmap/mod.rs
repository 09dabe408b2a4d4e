//! Metric grid maps and the geometry used everywhere else: occupancy grids,
//! 0–255 score maps, disks, field-of-view sectors, bounding-box crops and the
//! normalised model input.
//!
//! Conventions: `col` runs along +x, `row` along +y. `origin` is the world
//! coordinate of the lower-left corner of cell (0, 0), so the centre of
//! cell (row, col) is `origin + ((col + 0.5) * res, (row + 0.5) * res)`.

mod pgm;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use pgm::{read_pgm, write_pgm};

/// Slack used for "within radius" tests so that cells whose centres lie
/// exactly on the circle are included despite rounding.
pub const RADIUS_EPS: f64 = 1e-9;

/// Model input side length.
pub const MODEL_INPUT_SIDE: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        WorldPoint { x, y }
    }

    pub fn distance(self, other: WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// `self * w + other * (1 - w)`.
    pub fn lerp_towards(self, other: WorldPoint, w: f64) -> WorldPoint {
        WorldPoint::new(
            self.x * w + other.x * (1.0 - w),
            self.y * w + other.y * (1.0 - w),
        )
    }
}

/// Cell coordinates. Ordering is (row, col), which is the tie-break order
/// used by peak extraction and frontier projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }
}

/// Robot pose. Heading is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y)
    }
}

/// Wrap an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: WorldPoint,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64, origin: WorldPoint) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("width/height", "grid dimensions must be positive"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::param("resolution", "must be positive"));
        }
        Ok(GridGeometry {
            width,
            height,
            resolution,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_of(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn cell_center(&self, cell: Cell) -> WorldPoint {
        WorldPoint::new(
            self.origin.x + (cell.col as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    /// Signed (row, col) of the cell containing `p`; may be outside the grid.
    pub fn world_to_signed(&self, p: WorldPoint) -> (i64, i64) {
        let col = ((p.x - self.origin.x) / self.resolution).floor() as i64;
        let row = ((p.y - self.origin.y) / self.resolution).floor() as i64;
        (row, col)
    }

    pub fn world_to_cell(&self, p: WorldPoint) -> Option<Cell> {
        let (row, col) = self.world_to_signed(p);
        self.signed_cell(row, col)
    }

    pub fn signed_cell(&self, row: i64, col: i64) -> Option<Cell> {
        if row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width {
            Some(Cell::new(row as usize, col as usize))
        } else {
            None
        }
    }

    /// World-space extent `(min, max)` of the whole grid.
    pub fn extent(&self) -> (WorldPoint, WorldPoint) {
        (
            self.origin,
            WorldPoint::new(
                self.origin.x + self.width as f64 * self.resolution,
                self.origin.y + self.height as f64 * self.resolution,
            ),
        )
    }

    pub fn contains_point(&self, p: WorldPoint) -> bool {
        let (lo, hi) = self.extent();
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    /// Clamp a point into the grid extent.
    pub fn clamp_point(&self, p: WorldPoint) -> WorldPoint {
        let (lo, hi) = self.extent();
        WorldPoint::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y))
    }

    /// Cells whose centres lie within `radius` of `center`, row-major.
    pub fn disk_cells(&self, center: WorldPoint, radius: f64) -> Vec<Cell> {
        let mut out = Vec::new();
        if radius < 0.0 {
            return out;
        }
        let r2 = radius * radius + RADIUS_EPS;
        let res = self.resolution;
        let row_lo = ((center.y - radius - self.origin.y) / res - 0.5).floor().max(0.0) as usize;
        let col_lo = ((center.x - radius - self.origin.x) / res - 0.5).floor().max(0.0) as usize;
        let row_hi = ((center.y + radius - self.origin.y) / res - 0.5).ceil();
        let col_hi = ((center.x + radius - self.origin.x) / res - 0.5).ceil();
        if row_hi < 0.0 || col_hi < 0.0 {
            return out;
        }
        let row_hi = (row_hi as usize).min(self.height - 1);
        let col_hi = (col_hi as usize).min(self.width - 1);
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let c = self.cell_center(Cell::new(row, col));
                let (dx, dy) = (c.x - center.x, c.y - center.y);
                if dx * dx + dy * dy <= r2 {
                    out.push(Cell::new(row, col));
                }
            }
        }
        out
    }

    fn same_as(&self, other: &GridGeometry) -> bool {
        self == other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Obstacle,
}

impl CellState {
    /// PGM level used on disk.
    pub fn to_level(self) -> u8 {
        match self {
            CellState::Unknown => 0,
            CellState::Free => 128,
            CellState::Obstacle => 255,
        }
    }

    pub fn from_level(level: u8) -> Option<Self> {
        match level {
            0 => Some(CellState::Unknown),
            128 => Some(CellState::Free),
            255 => Some(CellState::Obstacle),
            _ => None,
        }
    }
}

/// Tri-state occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    geom: GridGeometry,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn filled(geom: GridGeometry, state: CellState) -> Self {
        OccupancyGrid {
            cells: vec![state; geom.len()],
            geom,
        }
    }

    pub fn from_cells(geom: GridGeometry, cells: Vec<CellState>) -> Result<Self> {
        if cells.len() != geom.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} cells", geom.len()),
                actual: format!("{} cells", cells.len()),
            });
        }
        Ok(OccupancyGrid { geom, cells })
    }

    /// Parse rows of `#` (obstacle), `.` (free) and `?` (unknown). The first
    /// text line is the top row (highest y).
    pub fn from_ascii(rows: &[&str], resolution: f64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let geom = GridGeometry::new(width, height, resolution, WorldPoint::new(0.0, 0.0))?;
        let mut grid = OccupancyGrid::filled(geom, CellState::Unknown);
        for (i, line) in rows.iter().enumerate() {
            let row = height - 1 - i;
            if line.chars().count() != width {
                return Err(Error::MapFormat(format!("ragged ascii row {i}")));
            }
            for (col, ch) in line.chars().enumerate() {
                let state = match ch {
                    '#' => CellState::Obstacle,
                    '.' => CellState::Free,
                    '?' => CellState::Unknown,
                    other => return Err(Error::MapFormat(format!("bad ascii cell {other:?}"))),
                };
                grid.set(Cell::new(row, col), state);
            }
        }
        Ok(grid)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn width(&self) -> usize {
        self.geom.width
    }

    pub fn height(&self) -> usize {
        self.geom.height
    }

    pub fn resolution(&self) -> f64 {
        self.geom.resolution
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> CellState {
        self.cells[self.geom.index(cell)]
    }

    #[inline]
    pub fn set(&mut self, cell: Cell, state: CellState) {
        let i = self.geom.index(cell);
        self.cells[i] = state;
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&s| s == state).count()
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == CellState::Free)
            .map(|(i, _)| self.geom.cell_of(i))
            .collect()
    }

    /// State at a world point, `None` outside the grid.
    pub fn state_at(&self, p: WorldPoint) -> Option<CellState> {
        self.geom.world_to_cell(p).map(|c| self.get(c))
    }

    pub fn fill_rect(&mut self, row0: usize, col0: usize, row1: usize, col1: usize, state: CellState) {
        let row1 = row1.min(self.height() - 1);
        let col1 = col1.min(self.width() - 1);
        for row in row0..=row1 {
            for col in col0..=col1 {
                self.set(Cell::new(row, col), state);
            }
        }
    }
}

/// 0–255 score map sharing the geometry of an occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    geom: GridGeometry,
    scores: Vec<u8>,
}

impl ScoreMap {
    pub fn zeros(geom: GridGeometry) -> Self {
        ScoreMap {
            scores: vec![0; geom.len()],
            geom,
        }
    }

    pub fn from_scores(geom: GridGeometry, scores: Vec<u8>) -> Result<Self> {
        if scores.len() != geom.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} cells", geom.len()),
                actual: format!("{} cells", scores.len()),
            });
        }
        Ok(ScoreMap { geom, scores })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn is_paired_with(&self, grid: &OccupancyGrid) -> bool {
        self.geom.same_as(grid.geometry())
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> u8 {
        self.scores[self.geom.index(cell)]
    }

    #[inline]
    pub fn set(&mut self, cell: Cell, value: u8) {
        let i = self.geom.index(cell);
        self.scores[i] = value;
    }

    pub fn scores(&self) -> &[u8] {
        &self.scores
    }

    pub fn max_score(&self) -> u8 {
        self.scores.iter().copied().max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.scores.iter().all(|&s| s == 0)
    }

    /// Raise every cell whose centre is within `radius` of `center` to at
    /// least `value`. Cells outside the grid are skipped.
    pub fn stamp_disk(&mut self, center: WorldPoint, radius: f64, value: u8) {
        if value == 0 {
            return;
        }
        for cell in self.geom.disk_cells(center, radius) {
            let i = self.geom.index(cell);
            self.scores[i] = self.scores[i].max(value);
        }
    }

    /// Integer score sum over the cells whose centres lie within `radius`.
    pub fn disk_sum(&self, center: WorldPoint, radius: f64) -> u64 {
        self.geom
            .disk_cells(center, radius)
            .into_iter()
            .map(|c| self.get(c) as u64)
            .sum()
    }

    /// Grow the map by `ceil(margin / resolution)` zero cells on every side,
    /// keeping the world position of existing content.
    pub fn expand(&self, margin: f64) -> ScoreMap {
        let m = expand_cells(margin, self.geom.resolution);
        if m == 0 {
            return self.clone();
        }
        let geom = expanded_geometry(&self.geom, m);
        let mut out = ScoreMap::zeros(geom);
        for row in 0..self.geom.height {
            let src = &self.scores[row * self.geom.width..(row + 1) * self.geom.width];
            let start = (row + m) * geom.width + m;
            out.scores[start..start + self.geom.width].copy_from_slice(src);
        }
        out
    }
}

pub fn expand_cells(margin: f64, resolution: f64) -> usize {
    if margin <= 0.0 {
        0
    } else {
        (margin / resolution - 1e-9).ceil() as usize
    }
}

pub fn expanded_geometry(geom: &GridGeometry, m: usize) -> GridGeometry {
    GridGeometry {
        width: geom.width + 2 * m,
        height: geom.height + 2 * m,
        resolution: geom.resolution,
        origin: WorldPoint::new(
            geom.origin.x - m as f64 * geom.resolution,
            geom.origin.y - m as f64 * geom.resolution,
        ),
    }
}

/// Free-function form of [`ScoreMap::expand`].
pub fn expand_map(score: &ScoreMap, margin: f64) -> ScoreMap {
    score.expand(margin)
}

/// Free-function form of [`ScoreMap::stamp_disk`].
pub fn stamp_disk(map: &mut ScoreMap, center: WorldPoint, radius: f64, value: u8) {
    map.stamp_disk(center, radius, value);
}

/// Inclusive cell-space box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Cell,
    pub max: Cell,
}

impl BoundingBox {
    pub fn new(min: Cell, max: Cell) -> Result<Self> {
        if min.row > max.row || min.col > max.col {
            return Err(Error::param("bounding box", "min must not exceed max"));
        }
        Ok(BoundingBox { min, max })
    }

    pub fn whole(geom: &GridGeometry) -> Self {
        BoundingBox {
            min: Cell::new(0, 0),
            max: Cell::new(geom.height - 1, geom.width - 1),
        }
    }

    pub fn rows(&self) -> usize {
        self.max.row - self.min.row + 1
    }

    pub fn cols(&self) -> usize {
        self.max.col - self.min.col + 1
    }

    pub fn fits(&self, geom: &GridGeometry) -> bool {
        self.max.row < geom.height && self.max.col < geom.width
    }

    /// Shift and grow by `m` cells per side, for use after [`ScoreMap::expand`].
    pub fn grown(&self, m: usize) -> BoundingBox {
        BoundingBox {
            min: self.min,
            max: Cell::new(self.max.row + 2 * m, self.max.col + 2 * m),
        }
    }
}

/// Tight box around all Free and Obstacle cells.
pub fn mapped_bounding_box(grid: &OccupancyGrid) -> Result<BoundingBox> {
    let (w, h) = (grid.width(), grid.height());
    let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
    let mut any = false;
    for row in 0..h {
        let line = &grid.cells[row * w..(row + 1) * w];
        let first = line.iter().position(|&s| s != CellState::Unknown);
        if let Some(first) = first {
            let last = line.iter().rposition(|&s| s != CellState::Unknown).unwrap();
            any = true;
            r0 = r0.min(row);
            r1 = row;
            c0 = c0.min(first);
            c1 = c1.max(last);
        }
    }
    if !any {
        return Err(Error::NothingMapped);
    }
    Ok(BoundingBox {
        min: Cell::new(r0, c0),
        max: Cell::new(r1, c1),
    })
}

/// Maps normalised model coordinates `(u, v) in [0,1]^2` to world points over
/// the cropped box. `u` runs along x, `v` along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropTransform {
    pub bbox: BoundingBox,
    pub lo: WorldPoint,
    pub hi: WorldPoint,
}

impl CropTransform {
    pub fn new(geom: &GridGeometry, bbox: BoundingBox) -> Self {
        let res = geom.resolution;
        CropTransform {
            bbox,
            lo: WorldPoint::new(
                geom.origin.x + bbox.min.col as f64 * res,
                geom.origin.y + bbox.min.row as f64 * res,
            ),
            hi: WorldPoint::new(
                geom.origin.x + (bbox.max.col + 1) as f64 * res,
                geom.origin.y + (bbox.max.row + 1) as f64 * res,
            ),
        }
    }

    pub fn span(&self) -> (f64, f64) {
        (self.hi.x - self.lo.x, self.hi.y - self.lo.y)
    }

    pub fn to_world(&self, u: f64, v: f64) -> WorldPoint {
        let (sx, sy) = self.span();
        WorldPoint::new(self.lo.x + u * sx, self.lo.y + v * sy)
    }

    pub fn to_normalized(&self, p: WorldPoint) -> (f64, f64) {
        let (sx, sy) = self.span();
        ((p.x - self.lo.x) / sx, (p.y - self.lo.y) / sy)
    }
}

/// Square single-channel input for the regression models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub side: usize,
    /// Row-major, row 0 = lowest y of the box.
    pub data: Vec<f32>,
    pub transform: CropTransform,
}

impl ModelInput {
    pub fn from_levels(levels: &[u8], side: usize, transform: CropTransform) -> Self {
        ModelInput {
            side,
            data: levels.iter().map(|&l| l as f32 / 255.0).collect(),
            transform,
        }
    }
}

/// Nearest-neighbour crop-and-resize of raw score levels to `side x side`.
/// Output pixel `(i, j)` reads source cell
/// `(min.row + i * rows / side, min.col + j * cols / side)`.
pub fn crop_resize_levels(score: &ScoreMap, bbox: BoundingBox, side: usize) -> Vec<u8> {
    let (rows, cols) = (bbox.rows(), bbox.cols());
    let w = score.geom.width;
    let col_idx: Vec<usize> = (0..side).map(|j| bbox.min.col + j * cols / side).collect();
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        let row = bbox.min.row + i * rows / side;
        let line = &score.scores[row * w..(row + 1) * w];
        out.extend(col_idx.iter().map(|&c| line[c]));
    }
    out
}

/// Crop `bbox`, resize to 240x240 and scale to [0, 1].
pub fn encode_model_input(score: &ScoreMap, bbox: BoundingBox) -> Result<ModelInput> {
    encode_model_input_sized(score, bbox, MODEL_INPUT_SIDE)
}

/// [`encode_model_input`] with an explicit output side (240 / downsample).
pub fn encode_model_input_sized(score: &ScoreMap, bbox: BoundingBox, side: usize) -> Result<ModelInput> {
    if !bbox.fits(&score.geom) {
        return Err(Error::param("bounding box", "box exceeds the grid"));
    }
    if side == 0 {
        return Err(Error::param("side", "must be positive"));
    }
    let levels = crop_resize_levels(score, bbox, side);
    Ok(ModelInput::from_levels(
        &levels,
        side,
        CropTransform::new(&score.geom, bbox),
    ))
}

/// Sensor sector: radius and full opening angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovConfig {
    pub radius_m: f64,
    pub angle_deg: f64,
}

impl Default for FovConfig {
    fn default() -> Self {
        FovConfig {
            radius_m: 3.2,
            angle_deg: 40.0,
        }
    }
}

impl FovConfig {
    /// Whether `target` is inside the sector seen from `pose`, ignoring
    /// occlusion.
    pub fn in_sector(&self, pose: &Pose, target: WorldPoint) -> bool {
        let (dx, dy) = (target.x - pose.x, target.y - pose.y);
        let d2 = dx * dx + dy * dy;
        if d2 > self.radius_m * self.radius_m + RADIUS_EPS {
            return false;
        }
        if d2 == 0.0 {
            return true;
        }
        let bearing = normalize_angle(dy.atan2(dx) - pose.heading);
        bearing.abs() <= (self.angle_deg / 2.0).to_radians() + 1e-12
    }
}

/// Integer line from `a` to `b` inclusive (Bresenham).
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut r, mut c) = a;
    let (dr, dc) = ((b.0 - a.0).abs(), -(b.1 - a.1).abs());
    let sr = if a.0 < b.0 { 1 } else { -1 };
    let sc = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dr + dc;
    let mut out = Vec::with_capacity((dr - dc) as usize + 1);
    loop {
        out.push((r, c));
        if r == b.0 && c == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
    }
    out
}

/// Whether the straight ray from `from` to `to` reaches `to` without passing
/// through an Obstacle cell. The endpoints themselves are not tested. Walks
/// the same cells as [`bresenham`].
pub fn line_of_sight(grid: &OccupancyGrid, from: Cell, to: Cell) -> bool {
    let (tr, tc) = (to.row as i64, to.col as i64);
    let (mut r, mut c) = (from.row as i64, from.col as i64);
    let (dr, dc) = ((tr - r).abs(), -(tc - c).abs());
    let sr = if r < tr { 1 } else { -1 };
    let sc = if c < tc { 1 } else { -1 };
    let mut err = dr + dc;
    let w = grid.width();
    let cells = grid.cells();
    loop {
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
        if r == tr && c == tc {
            return true;
        }
        if cells[r as usize * w + c as usize] == CellState::Obstacle {
            return false;
        }
    }
}

/// World-space bounding box of the sector (apex, both arc ends, and any axis
/// extreme of the arc that falls inside the opening angle).
fn sector_bounds(pose: &Pose, fov: &FovConfig) -> (WorldPoint, WorldPoint) {
    let r = fov.radius_m.max(0.0);
    let half = (fov.angle_deg / 2.0).to_radians();
    if half >= PI {
        return (
            WorldPoint::new(pose.x - r, pose.y - r),
            WorldPoint::new(pose.x + r, pose.y + r),
        );
    }
    let mut pts = vec![
        (pose.x, pose.y),
        (pose.x + r * (pose.heading - half).cos(), pose.y + r * (pose.heading - half).sin()),
        (pose.x + r * (pose.heading + half).cos(), pose.y + r * (pose.heading + half).sin()),
    ];
    for k in 0..4 {
        let axis = k as f64 * PI / 2.0;
        if normalize_angle(axis - pose.heading).abs() <= half {
            pts.push((pose.x + r * axis.cos(), pose.y + r * axis.sin()));
        }
    }
    let (mut lo, mut hi) = (WorldPoint::new(f64::MAX, f64::MAX), WorldPoint::new(f64::MIN, f64::MIN));
    for (x, y) in pts {
        lo.x = lo.x.min(x);
        lo.y = lo.y.min(y);
        hi.x = hi.x.max(x);
        hi.y = hi.y.max(y);
    }
    (lo, hi)
}

/// Cells inside the FOV sector that an unoccluded ray from the pose reaches.
/// The first obstacle on a ray is visible; anything behind it is not.
/// Returned in (row, col) order.
pub fn sector_visible_cells(grid: &OccupancyGrid, pose: &Pose, fov: &FovConfig) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    sector_visible_into(grid, pose, fov, &mut out)?;
    Ok(out)
}

/// [`sector_visible_cells`] writing into a reusable buffer (cleared first).
pub fn sector_visible_into(grid: &OccupancyGrid, pose: &Pose, fov: &FovConfig, out: &mut Vec<Cell>) -> Result<()> {
    sector_visible_filtered(grid, pose, fov, |_| true, out)
}

/// [`sector_visible_into`] restricted to cells for which `wanted` holds.
/// Unwanted cells skip the line-of-sight test; the robot's own cell is
/// always included.
pub fn sector_visible_filtered(
    grid: &OccupancyGrid,
    pose: &Pose,
    fov: &FovConfig,
    wanted: impl Fn(usize) -> bool,
    out: &mut Vec<Cell>,
) -> Result<()> {
    out.clear();
    let geom = grid.geometry();
    let origin = geom
        .world_to_cell(pose.position())
        .filter(|&c| grid.get(c) != CellState::Obstacle)
        .ok_or(Error::InvalidPose { x: pose.x, y: pose.y })?;
    let (lo, hi) = sector_bounds(pose, fov);
    let res = geom.resolution;
    let pad = 1e-6;
    let (r0, c0) = geom.world_to_signed(WorldPoint::new(lo.x - pad, lo.y - pad));
    let (r1, c1) = geom.world_to_signed(WorldPoint::new(hi.x + pad, hi.y + pad));
    let (r0, c0) = (r0.max(0), c0.max(0));
    let (r1, c1) = (r1.min(geom.height as i64 - 1), c1.min(geom.width as i64 - 1));
    let r2 = fov.radius_m * fov.radius_m + RADIUS_EPS;
    let half = (fov.angle_deg / 2.0).to_radians();
    let wide = half >= PI;
    let cos_half = half.cos();
    let (hx, hy) = (pose.heading.cos(), pose.heading.sin());
    for row in r0..=r1 {
        let cy = geom.origin.y + (row as f64 + 0.5) * res;
        for col in c0..=c1 {
            let cell = Cell::new(row as usize, col as usize);
            if cell == origin {
                out.push(cell);
                continue;
            }
            if !wanted(row as usize * geom.width + col as usize) {
                continue;
            }
            let cx = geom.origin.x + (col as f64 + 0.5) * res;
            let (dx, dy) = (cx - pose.x, cy - pose.y);
            if dx * dx + dy * dy > r2 {
                continue;
            }
            // cheap cosine test; only cells near the sector edge take the
            // exact bearing test
            let along = (dx * hx + dy * hy) / (dx * dx + dy * dy).sqrt();
            let inside = if wide || along > cos_half + 1e-9 {
                true
            } else if along < cos_half - 1e-9 {
                false
            } else {
                fov.in_sector(pose, WorldPoint::new(cx, cy))
            };
            if inside && line_of_sight(grid, origin, cell) {
                out.push(cell);
            }
        }
    }
    if !out.contains(&origin) {
        out.push(origin);
        out.sort_unstable();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(w, h, 0.1, WorldPoint::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn cell_center_round_trip() {
        let g = GridGeometry::new(37, 23, 0.1, WorldPoint::new(-1.3, 2.7)).unwrap();
        for row in 0..g.height {
            for col in 0..g.width {
                let c = Cell::new(row, col);
                assert_eq!(g.world_to_cell(g.cell_center(c)), Some(c));
            }
        }
    }

    #[test]
    fn stamp_matches_enumeration() {
        let g = geom(480, 480);
        let mut map = ScoreMap::zeros(g);
        // centre of cell (240, 240) is (24.05, 24.05)
        let center = g.cell_center(Cell::new(240, 240));
        map.stamp_disk(center, 2.0, 255);
        let mut expected = 0;
        for row in 0..480i64 {
            for col in 0..480i64 {
                let (dr, dc) = (row - 240, col - 240);
                let inside = dr * dr + dc * dc <= 400;
                let v = map.get(Cell::new(row as usize, col as usize));
                assert_eq!(v == 255, inside, "cell ({row},{col})");
                expected += inside as usize;
            }
        }
        assert_eq!(map.scores().iter().filter(|&&s| s == 255).count(), expected);
        assert_eq!(expected, 1257);
    }

    #[test]
    fn stamp_zero_is_noop_and_overlap_takes_max() {
        let g = geom(100, 100);
        let mut map = ScoreMap::zeros(g);
        map.stamp_disk(WorldPoint::new(5.0, 5.0), 2.0, 0);
        assert!(map.is_zero());
        let (a, b) = (WorldPoint::new(4.0, 5.0), WorldPoint::new(5.5, 5.0));
        map.stamp_disk(a, 2.0, 150);
        map.stamp_disk(b, 2.0, 255);
        for row in 0..100 {
            for col in 0..100 {
                let c = g.cell_center(Cell::new(row, col));
                let in_a = c.distance(a) <= 2.0 + 1e-9;
                let in_b = c.distance(b) <= 2.0 + 1e-9;
                let want = if in_b { 255 } else if in_a { 150 } else { 0 };
                assert_eq!(map.get(Cell::new(row, col)), want);
            }
        }
    }

    #[test]
    fn stamp_off_grid_is_clipped() {
        let g = geom(20, 20);
        let mut map = ScoreMap::zeros(g);
        map.stamp_disk(WorldPoint::new(-1.0, -1.0), 1.0, 255);
        assert!(map.is_zero());
        map.stamp_disk(WorldPoint::new(0.0, 0.0), 0.5, 255);
        assert!(map.get(Cell::new(0, 0)) == 255);
    }

    #[test]
    fn bounding_box_cases() {
        let g = geom(30, 40);
        let full = OccupancyGrid::filled(g, CellState::Free);
        assert_eq!(mapped_bounding_box(&full).unwrap(), BoundingBox::whole(&g));

        let mut one = OccupancyGrid::filled(g, CellState::Unknown);
        assert!(matches!(mapped_bounding_box(&one), Err(Error::NothingMapped)));
        one.set(Cell::new(10, 20), CellState::Free);
        let b = mapped_bounding_box(&one).unwrap();
        assert_eq!((b.min, b.max), (Cell::new(10, 20), Cell::new(10, 20)));

        // L shape
        let mut l = OccupancyGrid::filled(g, CellState::Unknown);
        l.fill_rect(5, 3, 25, 4, CellState::Free);
        l.fill_rect(25, 3, 26, 17, CellState::Obstacle);
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for row in 0..40 {
            for col in 0..30 {
                if l.get(Cell::new(row, col)) != CellState::Unknown {
                    r0 = r0.min(row);
                    c0 = c0.min(col);
                    r1 = r1.max(row);
                    c1 = c1.max(col);
                }
            }
        }
        let b = mapped_bounding_box(&l).unwrap();
        assert_eq!((b.min, b.max), (Cell::new(r0, c0), Cell::new(r1, c1)));
    }

    #[test]
    fn encode_identity_and_halving() {
        let g = geom(480, 480);
        let mut map = ScoreMap::zeros(g);
        for (i, s) in map.scores.iter_mut().enumerate() {
            *s = (i * 7 % 256) as u8;
        }
        let b = BoundingBox::new(Cell::new(100, 50), Cell::new(339, 289)).unwrap();
        let input = encode_model_input(&map, b).unwrap();
        for i in 0..240 {
            for j in 0..240 {
                let v = map.get(Cell::new(100 + i, 50 + j)) as f32 / 255.0;
                assert_eq!(input.data[i * 240 + j], v);
            }
        }
        let whole = encode_model_input(&map, BoundingBox::whole(&g)).unwrap();
        for i in 0..240 {
            for j in 0..240 {
                let v = map.get(Cell::new(2 * i, 2 * j)) as f32 / 255.0;
                assert_eq!(whole.data[i * 240 + j], v);
            }
        }
    }

    #[test]
    fn encode_uniform_255_is_one() {
        let g = geom(300, 200);
        let map = ScoreMap::from_scores(g, vec![255; g.len()]).unwrap();
        let input = encode_model_input(&map, BoundingBox::whole(&g)).unwrap();
        assert!(input.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn crop_transform_corners() {
        let g = GridGeometry::new(100, 80, 0.1, WorldPoint::new(-2.0, 3.0)).unwrap();
        let b = BoundingBox::new(Cell::new(10, 20), Cell::new(49, 69)).unwrap();
        let t = CropTransform::new(&g, b);
        assert_eq!(t.to_world(0.0, 0.0), t.lo);
        assert_eq!(t.to_world(1.0, 1.0), t.hi);
        assert_eq!(t.to_normalized(t.lo), (0.0, 0.0));
        let (u, v) = t.to_normalized(t.hi);
        assert!((u - 1.0).abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        assert_eq!(g.world_to_cell(t.to_world(1e-9, 1e-9)), Some(b.min));
        assert_eq!(g.world_to_cell(t.to_world(1.0 - 1e-9, 1.0 - 1e-9)), Some(b.max));
    }

    #[test]
    fn expand_cases() {
        let g = geom(480, 480);
        let mut map = ScoreMap::zeros(g);
        map.stamp_disk(WorldPoint::new(1.0, 47.0), 2.0, 200);
        assert_eq!(map.expand(0.0), map);
        let big = map.expand(3.0);
        assert_eq!((big.geometry().width, big.geometry().height), (540, 540));
        for row in 0..480 {
            for col in 0..480 {
                let c = Cell::new(row, col);
                let p = g.cell_center(c);
                let moved = big.geometry().world_to_cell(p).unwrap();
                assert_eq!(moved, Cell::new(row + 30, col + 30));
                assert_eq!(big.get(moved), map.get(c));
            }
        }
        let total: usize = big.scores().iter().map(|&s| s as usize).sum();
        let orig: usize = map.scores().iter().map(|&s| s as usize).sum();
        assert_eq!(total, orig);
    }

    fn brute_sector(grid: &OccupancyGrid, pose: &Pose, fov: &FovConfig) -> Vec<Cell> {
        let g = grid.geometry();
        let mut out = Vec::new();
        for row in 0..g.height {
            for col in 0..g.width {
                let c = g.cell_center(Cell::new(row, col));
                let (dx, dy) = (c.x - pose.x, c.y - pose.y);
                let d = dx.hypot(dy);
                let bearing = normalize_angle(dy.atan2(dx) - pose.heading).abs();
                let own = g.world_to_cell(pose.position()) == Some(Cell::new(row, col));
                if own || d <= fov.radius_m + 1e-9 && bearing <= fov.angle_deg.to_radians() / 2.0 + 1e-12 {
                    out.push(Cell::new(row, col));
                }
            }
        }
        out
    }

    #[test]
    fn sector_open_grid_matches_brute_force() {
        let g = geom(100, 100);
        let grid = OccupancyGrid::filled(g, CellState::Free);
        for heading in [0.0, 0.3, 1.7, -2.9, PI] {
            let pose = Pose::new(5.05, 5.05, heading);
            let fov = FovConfig::default();
            assert_eq!(
                sector_visible_cells(&grid, &pose, &fov).unwrap(),
                brute_sector(&grid, &pose, &fov)
            );
        }
    }

    #[test]
    fn sector_radius_zero_is_own_cell() {
        let g = geom(50, 50);
        let grid = OccupancyGrid::filled(g, CellState::Free);
        let fov = FovConfig {
            radius_m: 0.0,
            angle_deg: 40.0,
        };
        let pose = Pose::new(2.55, 2.55, 0.0);
        assert_eq!(
            sector_visible_cells(&grid, &pose, &fov).unwrap(),
            vec![Cell::new(25, 25)]
        );
    }

    #[test]
    fn sector_wall_blocks_everything_behind() {
        let g = geom(100, 100);
        let mut grid = OccupancyGrid::filled(g, CellState::Free);
        // wall at col 51 spanning all rows, robot at col 50 facing +x
        grid.fill_rect(0, 51, 99, 51, CellState::Obstacle);
        let pose = Pose::new(5.05, 5.05, 0.0);
        let vis = sector_visible_cells(&grid, &pose, &FovConfig::default()).unwrap();
        assert!(vis.iter().all(|c| c.col <= 51));
        assert!(vis.contains(&Cell::new(50, 51)));
    }

    #[test]
    fn sector_invalid_pose() {
        let g = geom(10, 10);
        let mut grid = OccupancyGrid::filled(g, CellState::Free);
        grid.set(Cell::new(5, 5), CellState::Obstacle);
        let fov = FovConfig::default();
        assert!(matches!(
            sector_visible_cells(&grid, &Pose::new(0.55, 0.55, 0.0), &fov),
            Err(Error::InvalidPose { .. })
        ));
        assert!(sector_visible_cells(&grid, &Pose::new(-1.0, 0.5, 0.0), &fov).is_err());
    }

    #[test]
    fn normalize_angle_range() {
        for k in -20..20 {
            let a = normalize_angle(k as f64 * 0.7);
            assert!(a > -PI && a <= PI);
        }
        assert_eq!(normalize_angle(-PI), PI);
    }

    #[test]
    fn ascii_top_row_is_highest_y() {
        let grid = OccupancyGrid::from_ascii(&["#..", "..?"], 1.0).unwrap();
        assert_eq!(grid.get(Cell::new(1, 0)), CellState::Obstacle);
        assert_eq!(grid.get(Cell::new(0, 2)), CellState::Unknown);
    }
}
