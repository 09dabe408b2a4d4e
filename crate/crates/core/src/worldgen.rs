//! Synthetic workspaces, score maps, episodes and training datasets.
//!
//! Workspaces are rooms-and-corridors layouts produced by recursive division
//! with a door in every dividing wall, optionally cluttered with furniture
//! blocks. Everything is a pure function of its inputs and a seed.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::gridmap::{Cell, CellState, GridGeometry, OccupancyGrid, Pose, ScoreMap, WorldPoint};
use crate::planners::{astar, DISK_LEVELS};
use crate::seed::{self, StreamRng};
use crate::{Error, Result};

pub const EPISODE_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceParams {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Inclusive range of rooms produced by recursive division; 1 means no
    /// interior walls.
    pub rooms: (usize, usize),
    /// Inclusive range of door / corridor opening widths, metres.
    pub door_width_m: (f64, f64),
    pub wall_cells: usize,
    /// Smallest room side produced by a split, metres.
    pub min_room_m: f64,
    /// Fraction of interior floor covered by furniture blocks, in [0, 1).
    pub obstacle_density: f64,
}

impl Default for WorkspaceParams {
    fn default() -> Self {
        WorkspaceParams {
            width: 480,
            height: 480,
            resolution: 0.1,
            rooms: (6, 12),
            door_width_m: (1.2, 2.4),
            wall_cells: 2,
            min_room_m: 6.0,
            obstacle_density: 0.04,
        }
    }
}

impl WorkspaceParams {
    pub fn validate(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::param("width/height", "need at least 3x3 cells"));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::param("resolution", "must be positive"));
        }
        if self.rooms.0 == 0 || self.rooms.0 > self.rooms.1 {
            return Err(Error::param("rooms", "need 1 <= min <= max"));
        }
        let (d0, d1) = self.door_width_m;
        if !(d0 > 0.0 && d0 <= d1) {
            return Err(Error::param("door_width_m", "need 0 < min <= max"));
        }
        if self.wall_cells == 0 {
            return Err(Error::param("wall_cells", "must be positive"));
        }
        if !(self.min_room_m > 0.0) {
            return Err(Error::param("min_room_m", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.obstacle_density) {
            return Err(Error::param("obstacle_density", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        GridGeometry::new(self.width, self.height, self.resolution, WorldPoint::new(0.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    r0: usize,
    c0: usize,
    r1: usize,
    c1: usize,
}

impl Rect {
    fn rows(&self) -> usize {
        self.r1 - self.r0 + 1
    }
    fn cols(&self) -> usize {
        self.c1 - self.c0 + 1
    }
    fn area(&self) -> usize {
        self.rows() * self.cols()
    }
}

/// Generate a connected rooms-and-corridors workspace.
pub fn gen_workspace(seed: u64, params: &WorkspaceParams) -> Result<OccupancyGrid> {
    params.validate()?;
    let geom = params.geometry()?;
    let mut rng = seed::stream(seed, "workspace", 0);
    let mut grid = OccupancyGrid::filled(geom, CellState::Free);
    let wall = params.wall_cells;
    let (w, h) = (params.width, params.height);
    if w <= 2 * wall || h <= 2 * wall {
        return Err(Error::param("wall_cells", "walls leave no interior"));
    }
    grid.fill_rect(0, 0, wall - 1, w - 1, CellState::Obstacle);
    grid.fill_rect(h - wall, 0, h - 1, w - 1, CellState::Obstacle);
    grid.fill_rect(0, 0, h - 1, wall - 1, CellState::Obstacle);
    grid.fill_rect(0, w - wall, h - 1, w - 1, CellState::Obstacle);

    let res = params.resolution;
    let min_room = ((params.min_room_m / res).round() as usize).max(1);
    let target = rng.gen_range(params.rooms.0..=params.rooms.1);
    let mut regions = vec![Rect {
        r0: wall,
        c0: wall,
        r1: h - wall - 1,
        c1: w - wall - 1,
    }];
    let mut doors: Vec<Rect> = Vec::new();
    while regions.len() < target {
        // split the largest region that still fits two rooms and a wall
        let pick = regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.rows().max(r.cols()) >= 2 * min_room + wall)
            .max_by_key(|(i, r)| (r.area(), usize::MAX - i))
            .map(|(i, _)| i);
        let Some(i) = pick else { break };
        let r = regions.swap_remove(i);
        let vertical = r.cols() >= r.rows();
        let span = if vertical { r.cols() } else { r.rows() };
        let along = if vertical { r.rows() } else { r.cols() };
        let offset = rng.gen_range(min_room..=span - min_room - wall);
        let door = ((rng.gen_range(params.door_width_m.0..=params.door_width_m.1) / res).round()
            as usize)
            .clamp(1, along);
        let door_at = rng.gen_range(0..=along - door);
        let (a, b, door_rect);
        if vertical {
            let c = r.c0 + offset;
            grid.fill_rect(r.r0, c, r.r1, c + wall - 1, CellState::Obstacle);
            grid.fill_rect(r.r0 + door_at, c, r.r0 + door_at + door - 1, c + wall - 1, CellState::Free);
            door_rect = Rect {
                r0: r.r0 + door_at,
                c0: c,
                r1: r.r0 + door_at + door - 1,
                c1: c + wall - 1,
            };
            a = Rect { c1: c - 1, ..r };
            b = Rect { c0: c + wall, ..r };
        } else {
            let row = r.r0 + offset;
            grid.fill_rect(row, r.c0, row + wall - 1, r.c1, CellState::Obstacle);
            grid.fill_rect(row, r.c0 + door_at, row + wall - 1, r.c0 + door_at + door - 1, CellState::Free);
            door_rect = Rect {
                r0: row,
                c0: r.c0 + door_at,
                r1: row + wall - 1,
                c1: r.c0 + door_at + door - 1,
            };
            a = Rect { r1: row - 1, ..r };
            b = Rect { r0: row + wall, ..r };
        }
        doors.push(door_rect);
        regions.push(a);
        regions.push(b);
    }

    if params.obstacle_density > 0.0 {
        place_furniture(&mut grid, &mut rng, params, &doors);
    }
    keep_largest_component(&mut grid);
    Ok(grid)
}

fn place_furniture(grid: &mut OccupancyGrid, rng: &mut StreamRng, params: &WorkspaceParams, doors: &[Rect]) {
    let res = params.resolution;
    let (w, h, wall) = (params.width, params.height, params.wall_cells);
    let interior = grid.count(CellState::Free);
    let target = (params.obstacle_density * interior as f64).round() as usize;
    let keep_clear = (1.0 / res).round() as usize;
    let (smin, smax) = (((0.4 / res).round() as usize).max(1), ((1.2 / res).round() as usize).max(1));
    let mut placed = 0;
    let mut attempts = 0;
    while placed < target && attempts < 10_000 {
        attempts += 1;
        let bh = rng.gen_range(smin..=smax);
        let bw = rng.gen_range(smin..=smax);
        if bh + 2 * wall >= h || bw + 2 * wall >= w {
            continue;
        }
        let r0 = rng.gen_range(wall..h - wall - bh);
        let c0 = rng.gen_range(wall..w - wall - bw);
        let (r1, c1) = (r0 + bh - 1, c0 + bw - 1);
        let near_door = doors.iter().any(|d| {
            r0 <= d.r1 + keep_clear
                && r1 + keep_clear >= d.r0
                && c0 <= d.c1 + keep_clear
                && c1 + keep_clear >= d.c0
        });
        if near_door {
            continue;
        }
        for row in r0..=r1 {
            for col in c0..=c1 {
                let cell = Cell::new(row, col);
                if grid.get(cell) == CellState::Free {
                    grid.set(cell, CellState::Obstacle);
                    placed += 1;
                }
            }
        }
    }
}

/// 4-connected components of Free cells, as a label per cell (`u32::MAX`
/// for non-free cells) plus component sizes.
pub fn free_components(grid: &OccupancyGrid) -> (Vec<u32>, Vec<usize>) {
    let g = grid.geometry();
    let (w, h) = (g.width, g.height);
    let cells = grid.cells();
    let mut label = vec![u32::MAX; g.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if cells[start] != CellState::Free || label[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        label[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (row, col) = (i / w, i % w);
            let mut visit = |j: usize| {
                if cells[j] == CellState::Free && label[j] == u32::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            };
            if row > 0 {
                visit(i - w);
            }
            if row + 1 < h {
                visit(i + w);
            }
            if col > 0 {
                visit(i - 1);
            }
            if col + 1 < w {
                visit(i + 1);
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

/// Turn every Free cell outside the largest 4-connected component into an
/// obstacle.
fn keep_largest_component(grid: &mut OccupancyGrid) {
    let (label, sizes) = free_components(grid);
    let Some(best) = sizes
        .iter()
        .enumerate()
        .max_by_key(|&(i, &s)| (s, usize::MAX - i))
        .map(|(i, _)| i as u32)
    else {
        return;
    };
    let g = *grid.geometry();
    for (i, &l) in label.iter().enumerate() {
        if l != u32::MAX && l != best {
            grid.set(g.cell_of(i), CellState::Obstacle);
        }
    }
}

/// The dihedral transforms used for augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dihedral {
    Identity,
    FlipHorizontal,
    FlipVertical,
    Rot90,
    Rot180,
    Rot270,
}

impl Dihedral {
    pub const ALL: [Dihedral; 6] = [
        Dihedral::Identity,
        Dihedral::FlipHorizontal,
        Dihedral::FlipVertical,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
    ];

    fn swaps_axes(self) -> bool {
        matches!(self, Dihedral::Rot90 | Dihedral::Rot270)
    }

    /// Source cell for destination `(row, col)` in a grid that was `h x w`
    /// before the transform.
    fn source(self, row: usize, col: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Dihedral::Identity => (row, col),
            Dihedral::FlipHorizontal => (row, w - 1 - col),
            Dihedral::FlipVertical => (h - 1 - row, col),
            Dihedral::Rot180 => (h - 1 - row, w - 1 - col),
            // counter-clockwise quarter turn: destination is w x h
            Dihedral::Rot90 => (col, w - 1 - row),
            Dihedral::Rot270 => (h - 1 - col, row),
        }
    }

    fn apply_vec<T: Copy>(self, data: &[T], geom: &GridGeometry) -> (GridGeometry, Vec<T>) {
        let (h, w) = (geom.height, geom.width);
        let out_geom = if self.swaps_axes() {
            GridGeometry {
                width: h,
                height: w,
                ..*geom
            }
        } else {
            *geom
        };
        let mut out = Vec::with_capacity(data.len());
        for row in 0..out_geom.height {
            for col in 0..out_geom.width {
                let (sr, sc) = self.source(row, col, h, w);
                out.push(data[sr * w + sc]);
            }
        }
        (out_geom, out)
    }

    pub fn apply_grid(self, grid: &OccupancyGrid) -> OccupancyGrid {
        let (g, cells) = self.apply_vec(grid.cells(), grid.geometry());
        OccupancyGrid::from_cells(g, cells).expect("transform preserves size")
    }

    pub fn apply_score(self, score: &ScoreMap) -> ScoreMap {
        let (g, s) = self.apply_vec(score.scores(), score.geometry());
        ScoreMap::from_scores(g, s).expect("transform preserves size")
    }
}

/// Apply one seed-chosen dihedral transform to a paired grid and score map.
pub fn augment(grid: &OccupancyGrid, score: &ScoreMap, seed: u64) -> Result<(OccupancyGrid, ScoreMap, Dihedral)> {
    if !score.is_paired_with(grid) {
        return Err(Error::param("augment", "grid and score geometry differ"));
    }
    let mut rng = seed::stream(seed, "augment", 0);
    let t = Dihedral::ALL[rng.gen_range(0..Dihedral::ALL.len())];
    Ok((t.apply_grid(grid), t.apply_score(score), t))
}

#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub score: ScoreMap,
    pub obstacle: Arc<OccupancyGrid>,
    pub gt_subgoal: WorldPoint,
}

impl TrainingSample {
    /// Check the sample's invariants: paired geometry, the ground truth on a
    /// free cell under a 255 score, and nothing scored above it.
    pub fn validate(&self) -> Result<()> {
        if !self.score.is_paired_with(&self.obstacle) {
            return Err(Error::param("score", "geometry differs from the obstacle map"));
        }
        let g = self.obstacle.geometry();
        let cell = g
            .world_to_cell(self.gt_subgoal)
            .ok_or(Error::param("gt_subgoal", "outside the map"))?;
        if self.obstacle.get(cell) != CellState::Free {
            return Err(Error::param("gt_subgoal", "not on a free cell"));
        }
        if self.score.get(cell) != DISK_LEVELS[0] || self.score.max_score() != DISK_LEVELS[0] {
            return Err(Error::param("gt_subgoal", "not under the highest disk"));
        }
        Ok(())
    }
}

fn pick_distinct(rng: &mut StreamRng, n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.gen_range(0..n);
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Three r'-disks at 255 / 150 / 50 on distinct free cells; the ground-truth
/// subgoal is the centre of the 255 disk.
pub fn gen_on_scoremap(grid: &Arc<OccupancyGrid>, disk_radius: f64, seed: u64) -> Result<TrainingSample> {
    let free = grid.free_cells();
    if free.len() < 3 {
        return Err(Error::NotEnoughFree {
            needed: 3,
            available: free.len(),
        });
    }
    let mut rng = seed::stream(seed, "on-scoremap", 0);
    let geom = grid.geometry();
    let picks = pick_distinct(&mut rng, free.len(), 3);
    let mut score = ScoreMap::zeros(*geom);
    for (&i, &level) in picks.iter().zip(DISK_LEVELS.iter()) {
        score.stamp_disk(geom.cell_center(free[i]), disk_radius, level);
    }
    Ok(TrainingSample {
        score,
        obstacle: Arc::clone(grid),
        gt_subgoal: geom.cell_center(free[picks[0]]),
    })
}

/// Free cells eligible as the true goal: centres within `k` of `center`, plus
/// the cell containing `center` itself when it is free.
pub fn uncertainty_candidates(grid: &OccupancyGrid, center: WorldPoint, k: f64) -> Vec<Cell> {
    let geom = grid.geometry();
    let mut out: Vec<Cell> = geom
        .disk_cells(center, k)
        .into_iter()
        .filter(|&c| grid.get(c) == CellState::Free)
        .collect();
    if let Some(own) = geom.world_to_cell(center) {
        if grid.get(own) == CellState::Free && !out.contains(&own) {
            out.push(own);
            out.sort_unstable();
        }
    }
    out
}

/// Place the true goal uniformly over free cells within `k` of the predicted
/// goal and render a single 255 disk there.
pub fn gen_alc_scoremap(
    grid: &OccupancyGrid,
    predicted_goal: WorldPoint,
    k: f64,
    disk_radius: f64,
    seed: u64,
) -> Result<(ScoreMap, WorldPoint)> {
    if !(k >= 0.0) {
        return Err(Error::param("K", "must be non-negative"));
    }
    let candidates = uncertainty_candidates(grid, predicted_goal, k);
    if candidates.is_empty() {
        return Err(Error::UncertaintyRegionBlocked {
            x: predicted_goal.x,
            y: predicted_goal.y,
            k,
        });
    }
    let mut rng = seed::stream(seed, "alc-scoremap", 0);
    let geom = grid.geometry();
    let goal = geom.cell_center(candidates[rng.gen_range(0..candidates.len())]);
    let mut score = ScoreMap::zeros(*geom);
    score.stamp_disk(goal, disk_radius, 255);
    Ok((score, goal))
}

/// One ALC episode instance.
#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub workspace: Arc<OccupancyGrid>,
    pub start: Pose,
    pub goal: WorldPoint,
    pub predicted_goal: WorldPoint,
    pub k: f64,
    pub seed: u64,
}

impl EpisodeSpec {
    /// Check the type invariants against the workspace.
    pub fn validate(&self) -> Result<()> {
        let g = self.workspace.geometry();
        let free = |p: WorldPoint| self.workspace.state_at(p) == Some(CellState::Free);
        if !free(self.start.position()) {
            return Err(Error::InvalidPose {
                x: self.start.x,
                y: self.start.y,
            });
        }
        if !free(self.goal) {
            return Err(Error::param("goal", "not on a free cell"));
        }
        if self.goal.distance(self.predicted_goal) > self.k + 1e-9 {
            return Err(Error::param("predicted_goal", "farther than K from goal"));
        }
        let a = g.world_to_cell(self.start.position()).unwrap();
        let b = g.world_to_cell(self.goal).unwrap();
        if astar(&self.workspace, a, b, false).is_none() {
            return Err(Error::param("goal", "no traversable path from start"));
        }
        Ok(())
    }
}

/// Sample start, goal and the prior-map prediction of the goal.
pub fn sample_episode(grid: &Arc<OccupancyGrid>, k: f64, seed: u64) -> Result<EpisodeSpec> {
    if !(k >= 0.0) {
        return Err(Error::param("K", "must be non-negative"));
    }
    let free = grid.free_cells();
    if free.len() < 2 {
        return Err(Error::NotEnoughFree {
            needed: 2,
            available: free.len(),
        });
    }
    let geom = grid.geometry();
    let mut rng = seed::stream(seed, "episode", 0);
    for _ in 0..EPISODE_RETRIES {
        let pair = pick_distinct(&mut rng, free.len(), 2);
        let (a, b) = (free[pair[0]], free[pair[1]]);
        let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        // offset uniform over the disk of radius K
        let radius = k * rng.gen::<f64>().sqrt();
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        if astar(grid, a, b, false).is_none() {
            continue;
        }
        let goal = geom.cell_center(b);
        let predicted = geom.clamp_point(WorldPoint::new(
            goal.x + radius * theta.cos(),
            goal.y + radius * theta.sin(),
        ));
        let s = geom.cell_center(a);
        return Ok(EpisodeSpec {
            workspace: Arc::clone(grid),
            start: Pose::new(s.x, s.y, heading),
            goal,
            predicted_goal: predicted,
            k,
            seed,
        });
    }
    Err(Error::SamplingFailed(EPISODE_RETRIES))
}

/// Latent object-goal score map of an episode: the target at 255 and two
/// semantically related objects (150, 50) on free cells within
/// `context_radius` of it.
pub fn episode_scoremap(spec: &EpisodeSpec, disk_radius: f64, context_radius: f64) -> ScoreMap {
    let grid = &spec.workspace;
    let geom = grid.geometry();
    let mut rng = seed::stream(spec.seed, "latent-score", 0);
    let mut score = ScoreMap::zeros(*geom);
    score.stamp_disk(spec.goal, disk_radius, DISK_LEVELS[0]);
    let near = uncertainty_candidates(grid, spec.goal, context_radius);
    for &level in &DISK_LEVELS[1..] {
        let c = near[rng.gen_range(0..near.len())];
        score.stamp_disk(geom.cell_center(c), disk_radius, level);
    }
    score
}

/// Settings for a generated training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub count: usize,
    pub seed: u64,
    /// Distinct base workspaces; samples reuse them through augmentation.
    pub base_worlds: usize,
    pub workspace: WorkspaceParams,
    pub disk_radius_m: f64,
    /// Uncertainty radii drawn per sample for the ALC branch.
    pub k_values: Vec<f64>,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            count: 3000,
            seed: 0,
            base_worlds: 24,
            workspace: WorkspaceParams::default(),
            disk_radius_m: 2.0,
            k_values: vec![2.0, 5.0, 10.0],
        }
    }
}

/// One generated dataset entry with the per-sample metadata.
#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub sample: TrainingSample,
    pub seed: u64,
    pub k: f64,
    /// Start pose for the oracle-return computation.
    pub start: WorldPoint,
}

/// Every base workspace under every dihedral transform, so augmented
/// samples share grids instead of copying them.
fn base_worlds(params: &DatasetParams, exec: Exec) -> Result<Vec<Vec<Arc<OccupancyGrid>>>> {
    if params.base_worlds == 0 {
        return Err(Error::param("base_worlds", "must be positive"));
    }
    exec.try_map(params.base_worlds, |i| {
        let base = gen_workspace(seed::derive(params.seed, "base-world", i as u64), &params.workspace)?;
        Ok(Dihedral::ALL.iter().map(|t| Arc::new(t.apply_grid(&base))).collect())
    })
}

/// Build one entry: a base world under a dihedral transform, an ON score map
/// and the per-sample K and start.
fn dataset_entry(worlds: &[Vec<Arc<OccupancyGrid>>], params: &DatasetParams, index: usize) -> Result<DatasetEntry> {
    let s = seed::derive(params.seed, "sample", index as u64);
    let mut rng = seed::rng(s);
    let variants = &worlds[index % worlds.len()];
    let world = &variants[rng.gen_range(0..variants.len())];
    let sample = gen_on_scoremap(world, params.disk_radius_m, s)?;
    let k = params.k_values[rng.gen_range(0..params.k_values.len())];
    let free = world.free_cells();
    let start = world.geometry().cell_center(free[rng.gen_range(0..free.len())]);
    Ok(DatasetEntry {
        sample,
        seed: s,
        k,
        start,
    })
}

/// Generate `params.count` entries. Deterministic in `params.seed` whatever
/// the execution mode.
pub fn gen_dataset(params: &DatasetParams, exec: Exec) -> Result<Vec<DatasetEntry>> {
    if params.k_values.is_empty() {
        return Err(Error::param("k_values", "must not be empty"));
    }
    let worlds = base_worlds(params, exec)?;
    exec.try_map(params.count, |i| dataset_entry(&worlds, params, i))
}

/// Write the dataset layout: `maps/NNNN.pgm`, `scores/NNNN.pgm` (each with a
/// geometry sidecar) and `meta/NNNN.txt`.
pub fn write_dataset(entries: &[DatasetEntry], dir: &Path) -> Result<()> {
    for sub in ["maps", "scores", "meta"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    for (i, e) in entries.iter().enumerate() {
        let name = format!("{i:04}");
        e.sample.obstacle.save_pgm(&dir.join("maps").join(format!("{name}.pgm")))?;
        e.sample.score.save_pgm(&dir.join("scores").join(format!("{name}.pgm")))?;
        let meta = format!(
            "gt_x={}\ngt_y={}\nseed={}\nK={}\nstart_x={}\nstart_y={}\n",
            e.sample.gt_subgoal.x, e.sample.gt_subgoal.y, e.seed, e.k, e.start.x, e.start.y
        );
        let p = dir.join("meta").join(format!("{name}.txt"));
        fs::write(&p, meta).map_err(|err| Error::io(&p, err))?;
    }
    Ok(())
}

/// Read a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Vec<DatasetEntry>> {
    let meta_dir = dir.join("meta");
    let mut names: Vec<String> = fs::read_dir(&meta_dir)
        .map_err(|e| Error::io(&meta_dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_suffix(".txt").map(str::to_owned)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::EmptyDataset);
    }
    names
        .iter()
        .map(|name| {
            let p = meta_dir.join(format!("{name}.txt"));
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let kv = crate::config::parse_kv(&text)?;
            let num = |k: &str| -> Result<f64> {
                kv.get(k)
                    .ok_or_else(|| Error::param(k, format!("missing in {}", p.display())))?
                    .parse::<f64>()
                    .map_err(|_| Error::param(k, format!("not a number in {}", p.display())))
            };
            let seed: u64 = kv
                .get("seed")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::param("seed", format!("missing in {}", p.display())))?;
            let grid = OccupancyGrid::load_pgm(&dir.join("maps").join(format!("{name}.pgm")))?;
            let score = ScoreMap::load_pgm(&dir.join("scores").join(format!("{name}.pgm")))?;
            if !score.is_paired_with(&grid) {
                return Err(Error::MapFormat(format!("{name}: map and score geometry differ")));
            }
            Ok(DatasetEntry {
                sample: TrainingSample {
                    score,
                    obstacle: Arc::new(grid),
                    gt_subgoal: WorldPoint::new(num("gt_x")?, num("gt_y")?),
                },
                seed,
                k: num("K")?,
                start: WorldPoint::new(num("start_x")?, num("start_y")?),
            })
        })
        .collect()
}
