//! Non-learned planning: frontiers, the random-frontier baseline (RF), the
//! training-free peak planner (TFP), nearest-frontier projection and
//! Dijkstra shortest paths.

use std::cmp::{Ordering, Reverse};
use std::cell::RefCell;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gridmap::{Cell, CellState, GridGeometry, OccupancyGrid, Pose, ScoreMap, WorldPoint};
use crate::seed::StreamRng;
use crate::{Error, Result};

/// Score levels of the three re-rendered disks, by peak rank.
pub const DISK_LEVELS: [u8; 3] = [255, 150, 50];

/// Path cost as a count of straight and diagonal moves. Ordering compares
/// `straight + diagonal * sqrt(2)` exactly, so equal-length paths found by
/// different algorithms compare equal and convert to the same metres value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StepCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl StepCost {
    pub const ZERO: StepCost = StepCost {
        straight: 0,
        diagonal: 0,
    };

    pub fn add_move(self, diagonal: bool) -> StepCost {
        if diagonal {
            StepCost {
                diagonal: self.diagonal + 1,
                ..self
            }
        } else {
            StepCost {
                straight: self.straight + 1,
                ..self
            }
        }
    }

    fn value(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }

    pub fn plus(self, other: StepCost) -> StepCost {
        StepCost {
            straight: self.straight + other.straight,
            diagonal: self.diagonal + other.diagonal,
        }
    }

    pub fn meters(self, resolution: f64) -> f64 {
        resolution * (self.straight as f64 + self.diagonal as f64 * SQRT_2)
    }
}

impl Ord for StepCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // compare da against db * sqrt(2)
        let da = self.straight as i64 - other.straight as i64;
        let db = other.diagonal as i64 - self.diagonal as i64;
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (a, b) if a <= 0 && b >= 0 => Ordering::Less,
            (a, b) if a >= 0 && b <= 0 => Ordering::Greater,
            (1, 1) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for StepCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    /// Cells after the start, ending at the target. Empty when start == target.
    pub cells: Vec<Cell>,
    pub steps: StepCost,
    pub cost_m: f64,
}

/// Neighbour scan order; also the tie-break order for equal-cost relaxations.
pub const NEIGHBORS_8: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

#[inline]
fn traversable(state: CellState, unknown_traversable: bool) -> bool {
    match state {
        CellState::Free => true,
        CellState::Unknown => unknown_traversable,
        CellState::Obstacle => false,
    }
}

/// 8-connected shortest path from `a` to `b`. Straight moves cost one cell,
/// diagonal moves sqrt(2) cells. Obstacles are never entered; Unknown cells
/// only when `unknown_traversable`. The search stops once `b` is settled.
pub fn dijkstra(grid: &OccupancyGrid, a: Cell, b: Cell, unknown_traversable: bool) -> Option<GridPath> {
    search(grid, a, b, unknown_traversable, false)
}

/// [`dijkstra`] ordered by cost plus the octile distance to `b`. The
/// heuristic is exact on an empty grid and consistent, so the returned cost
/// is the same; only fewer cells are settled.
pub fn astar(grid: &OccupancyGrid, a: Cell, b: Cell, unknown_traversable: bool) -> Option<GridPath> {
    search(grid, a, b, unknown_traversable, true)
}

fn octile(r: usize, c: usize, b: Cell) -> f64 {
    let dr = r.abs_diff(b.row);
    let dc = c.abs_diff(b.col);
    StepCost {
        straight: dr.abs_diff(dc) as u32,
        diagonal: dr.min(dc) as u32,
    }
    .value()
}

/// Per-thread search buffers, reused across calls. A cell's entries are only
/// meaningful when its stamp equals the current generation.
#[derive(Default)]
struct Scratch {
    generation: u32,
    seen: Vec<u32>,
    settled: Vec<u32>,
    dist: Vec<StepCost>,
    prev: Vec<u32>,
    /// Settled cells of the last search, in settle order.
    closed: Vec<u32>,
    heap: BinaryHeap<Reverse<(u64, u64, u32)>>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        if self.seen.len() != n || self.generation == u32::MAX {
            self.seen = vec![0; n];
            self.settled = vec![0; n];
            self.dist = vec![StepCost::ZERO; n];
            self.prev = vec![u32::MAX; n];
            self.generation = 0;
        }
        self.generation += 1;
        self.heap.clear();
        self.closed.clear();
    }
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

fn search(grid: &OccupancyGrid, a: Cell, b: Cell, unknown_traversable: bool, directed: bool) -> Option<GridPath> {
    let geom = grid.geometry();
    if a.row >= geom.height || a.col >= geom.width || b.row >= geom.height || b.col >= geom.width {
        return None;
    }
    if grid.get(a) == CellState::Obstacle || !traversable(grid.get(b), unknown_traversable) && a != b {
        return None;
    }
    if a == b {
        return Some(GridPath {
            cells: Vec::new(),
            steps: StepCost::ZERO,
            cost_m: 0.0,
        });
    }
    SCRATCH.with(|s| {
        let mut s = s.borrow_mut();
        let w = geom.width;
        if directed {
            search_in(&mut s, grid, a, b, unknown_traversable, |v| octile(v / w, v % w, b))
        } else {
            search_in(&mut s, grid, a, b, unknown_traversable, |_| 0.0)
        }
    })
}


/// Best-first search ordered by `g + heuristic(cell)`, ties broken towards
/// the smaller heuristic. Keys are the bits of non-negative f64 values, which
/// sort like the values; distinct costs `a + b*sqrt(2)` on these grids differ
/// by far more than the rounding of the sum.
fn search_in(
    s: &mut Scratch,
    grid: &OccupancyGrid,
    a: Cell,
    b: Cell,
    unknown_traversable: bool,
    heuristic: impl Fn(usize) -> f64,
) -> Option<GridPath> {
    let geom = grid.geometry();
    let n = geom.len();
    s.reset(n);
    let gen = s.generation;
    let (w, h) = (geom.width as i64, geom.height as i64);
    let (start, goal) = (geom.index(a), geom.index(b));
    s.seen[start] = gen;
    s.dist[start] = StepCost::ZERO;
    let h0 = heuristic(start);
    s.heap.push(Reverse((h0.to_bits(), h0.to_bits(), start as u32)));
    let cells = grid.cells();
    let mut reached = false;
    while let Some(Reverse((_, _, u))) = s.heap.pop() {
        let u = u as usize;
        if s.settled[u] == gen {
            continue;
        }
        s.settled[u] = gen;
        if u == goal {
            reached = true;
            break;
        }
        s.closed.push(u as u32);
        let d = s.dist[u];
        let (ur, uc) = ((u / geom.width) as i64, (u % geom.width) as i64);
        for (dr, dc) in NEIGHBORS_8 {
            let (vr, vc) = (ur + dr, uc + dc);
            if vr < 0 || vc < 0 || vr >= h || vc >= w {
                continue;
            }
            let v = (vr * w + vc) as usize;
            if s.settled[v] == gen || !traversable(cells[v], unknown_traversable) {
                continue;
            }
            let nd = d.add_move(dr != 0 && dc != 0);
            let g = nd.value();
            if s.seen[v] != gen || g < s.dist[v].value() {
                s.seen[v] = gen;
                s.dist[v] = nd;
                s.prev[v] = u as u32;
                let hv = heuristic(v);
                s.heap.push(Reverse(((g + hv).to_bits(), hv.to_bits(), v as u32)));
            }
        }
    }
    if !reached {
        return None;
    }
    let steps = s.dist[goal];
    let mut path = Vec::new();
    let mut cur = goal;
    while cur != start {
        path.push(geom.cell_of(cur));
        cur = s.prev[cur] as usize;
    }
    path.reverse();
    Some(GridPath {
        cells: path,
        steps,
        cost_m: steps.meters(geom.resolution),
    })
}

/// Repeated A* searches towards one fixed goal while move costs only grow,
/// as when Unknown cells turn out to be obstacles. After each search every
/// settled cell learns `h = g(goal) - g(cell)`. Learned values stay
/// consistent, so later searches return equally short paths while settling
/// fewer cells.
#[derive(Debug, Clone)]
pub struct GoalSearch {
    goal: Cell,
    width: usize,
    /// Learned cost-to-goal, negative where nothing has been learned.
    learned: Vec<f64>,
}

impl GoalSearch {
    pub fn new(geom: &GridGeometry, goal: Cell) -> Self {
        GoalSearch {
            goal,
            width: geom.width,
            learned: vec![-1.0; geom.len()],
        }
    }

    /// Same result as [`astar`] from `from` to the goal on `grid`, which must
    /// only have gained obstacles since the previous call.
    pub fn find(&mut self, grid: &OccupancyGrid, from: Cell, unknown_traversable: bool) -> Option<GridPath> {
        let geom = grid.geometry();
        let b = self.goal;
        if geom.len() != self.learned.len() || geom.width != self.width {
            return None;
        }
        if from.row >= geom.height || from.col >= geom.width || b.row >= geom.height || b.col >= geom.width {
            return None;
        }
        if grid.get(from) == CellState::Obstacle || !traversable(grid.get(b), unknown_traversable) && from != b {
            return None;
        }
        if from == b {
            return Some(GridPath {
                cells: Vec::new(),
                steps: StepCost::ZERO,
                cost_m: 0.0,
            });
        }
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            let w = self.width;
            let learned = &self.learned;
            let heuristic = |v: usize| {
                let l = learned[v];
                if l >= 0.0 {
                    l
                } else {
                    octile(v / w, v % w, b)
                }
            };
            let path = search_in(&mut s, grid, from, b, unknown_traversable, heuristic)?;
            let total = path.steps.value();
            for &u in &s.closed {
                let u = u as usize;
                self.learned[u] = total - s.dist[u].value();
            }
            Some(path)
        })
    }
}

/// Observed Free cells that are 4-adjacent to at least one Unknown cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrontierSet {
    /// Row-major order.
    pub cells: Vec<Cell>,
}

impl FrontierSet {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }
}

pub fn is_frontier(grid: &OccupancyGrid, cell: Cell) -> bool {
    if grid.get(cell) != CellState::Free {
        return false;
    }
    let g = grid.geometry();
    [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(dr, dc)| {
        g.signed_cell(cell.row as i64 + dr, cell.col as i64 + dc)
            .is_some_and(|n| grid.get(n) == CellState::Unknown)
    })
}

pub fn detect_frontiers(observed: &OccupancyGrid) -> FrontierSet {
    let (w, h) = (observed.width(), observed.height());
    let cells = observed.cells();
    let mut out = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if cells[i] != CellState::Free {
                continue;
            }
            let unknown = (row > 0 && cells[i - w] == CellState::Unknown)
                || (row + 1 < h && cells[i + w] == CellState::Unknown)
                || (col > 0 && cells[i - 1] == CellState::Unknown)
                || (col + 1 < w && cells[i + 1] == CellState::Unknown);
            if unknown {
                out.push(Cell::new(row, col));
            }
        }
    }
    FrontierSet { cells: out }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgoalSource {
    Rf,
    Tfp,
    RlpOn,
    RlpAlc,
    Fused,
}

impl SubgoalSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SubgoalSource::Rf => "rf",
            SubgoalSource::Tfp => "tfp",
            SubgoalSource::RlpOn => "rlp_on",
            SubgoalSource::RlpAlc => "rlp_alc",
            SubgoalSource::Fused => "fused",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgoalProposal {
    pub point: WorldPoint,
    pub score: f64,
    pub source: SubgoalSource,
    pub valid: bool,
}

impl SubgoalProposal {
    pub fn new(point: WorldPoint, score: f64, source: SubgoalSource) -> Self {
        SubgoalProposal {
            point,
            score,
            source,
            valid: true,
        }
    }

    pub fn invalid(source: SubgoalSource) -> Self {
        SubgoalProposal {
            point: WorldPoint::new(f64::NAN, f64::NAN),
            score: 0.0,
            source,
            valid: false,
        }
    }
}

/// Uniformly random frontier cell.
pub fn rf_plan(frontiers: &FrontierSet, geom: &GridGeometry, rng: &mut StreamRng) -> Result<SubgoalProposal> {
    if frontiers.is_empty() {
        return Err(Error::NoFrontier);
    }
    let cell = frontiers.cells[rng.gen_range(0..frontiers.len())];
    Ok(SubgoalProposal::new(geom.cell_center(cell), 0.0, SubgoalSource::Rf))
}

/// RF with the "no frontier" fallback: a uniformly random observed Free cell.
pub fn rf_or_random_free(observed: &OccupancyGrid, frontiers: &FrontierSet, rng: &mut StreamRng) -> SubgoalProposal {
    let geom = observed.geometry();
    rf_plan(frontiers, geom, rng).unwrap_or_else(|_| {
        let free = observed.free_cells();
        if free.is_empty() {
            SubgoalProposal::invalid(SubgoalSource::Rf)
        } else {
            let cell = free[rng.gen_range(0..free.len())];
            SubgoalProposal::new(geom.cell_center(cell), 0.0, SubgoalSource::Rf)
        }
    })
}

/// Frontier cell closest to `p`; ties go to the lowest (row, col).
pub fn nearest_frontier(p: WorldPoint, frontiers: &FrontierSet, geom: &GridGeometry) -> Result<Cell> {
    let mut best: Option<(f64, Cell)> = None;
    for &cell in &frontiers.cells {
        let c = geom.cell_center(cell);
        let d2 = (c.x - p.x).powi(2) + (c.y - p.y).powi(2);
        match best {
            Some((bd, _)) if d2 >= bd - 1e-12 => {}
            _ => best = Some((d2, cell)),
        }
    }
    best.map(|(_, c)| c).ok_or(Error::NoFrontier)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfpConfig {
    /// Non-maximum-suppression radius around each extracted peak.
    pub nms_radius_m: f64,
    /// Radius of the re-rendered disks.
    pub disk_radius_m: f64,
}

impl Default for TfpConfig {
    fn default() -> Self {
        TfpConfig {
            nms_radius_m: 2.0,
            disk_radius_m: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Centroid of the peak's plateau.
    pub point: WorldPoint,
    /// First plateau cell in (row, col) order.
    pub seed: Cell,
    pub score: u8,
}

#[derive(Debug, Clone)]
pub struct TfpResult {
    /// `p_M`, the top peak. Invalid when the map is all zero.
    pub proposal: SubgoalProposal,
    pub peaks: Vec<Peak>,
    /// Clean map with one disk per peak at 255 / 150 / 50.
    pub clean: ScoreMap,
}

/// Extract up to three peaks with non-maximum suppression and re-render them
/// as clean disks.
///
/// A peak is the 8-connected plateau of equal score around the highest
/// unsuppressed cell (ties: lowest (row, col)); its position is the plateau
/// centroid. After each pick, the plateau and every cell within the NMS
/// radius of the centroid are suppressed.
pub fn tfp_plan(score: &ScoreMap, cfg: &TfpConfig) -> TfpResult {
    let geom = *score.geometry();
    let scores = score.scores();
    let n = geom.len();
    let mut suppressed = vec![false; n];
    let mut peaks = Vec::with_capacity(3);
    let mut queue = VecDeque::new();
    while peaks.len() < DISK_LEVELS.len() {
        let mut best: Option<(u8, usize)> = None;
        for (i, &s) in scores.iter().enumerate() {
            if s > 0 && !suppressed[i] && best.map_or(true, |(b, _)| s > b) {
                best = Some((s, i));
            }
        }
        let Some((value, seed)) = best else { break };
        let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
        suppressed[seed] = true;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let cell = geom.cell_of(i);
            let c = geom.cell_center(cell);
            sx += c.x;
            sy += c.y;
            count += 1;
            for (dr, dc) in NEIGHBORS_8 {
                if let Some(nb) = geom.signed_cell(cell.row as i64 + dr, cell.col as i64 + dc) {
                    let j = geom.index(nb);
                    if !suppressed[j] && scores[j] == value {
                        suppressed[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        let centroid = WorldPoint::new(sx / count as f64, sy / count as f64);
        for cell in geom.disk_cells(centroid, cfg.nms_radius_m) {
            suppressed[geom.index(cell)] = true;
        }
        peaks.push(Peak {
            point: centroid,
            seed: geom.cell_of(seed),
            score: value,
        });
    }
    let mut clean = ScoreMap::zeros(geom);
    for (peak, &level) in peaks.iter().zip(DISK_LEVELS.iter()) {
        clean.stamp_disk(peak.point, cfg.disk_radius_m, level);
    }
    let proposal = match peaks.first() {
        Some(p) => SubgoalProposal::new(p.point, p.score as f64, SubgoalSource::Tfp),
        None => SubgoalProposal::invalid(SubgoalSource::Tfp),
    };
    TfpResult {
        proposal,
        peaks,
        clean,
    }
}

/// Everything a planner may look at when choosing the next subgoal.
pub struct PlanContext<'a> {
    pub pose: Pose,
    pub observed: &'a OccupancyGrid,
    pub observed_score: &'a ScoreMap,
    /// Prior map from the external SLAM system (the workspace's extent).
    pub prior: &'a OccupancyGrid,
    /// Prior-map prediction of the revisit goal.
    pub predicted_goal: WorldPoint,
    /// Uncertainty radius of `predicted_goal`, metres.
    pub k: f64,
    pub frontiers: &'a FrontierSet,
}

impl PlanContext<'_> {
    /// Snap a point to its nearest frontier, or keep it when there are none.
    pub fn project(&self, p: WorldPoint) -> WorldPoint {
        let geom = self.observed.geometry();
        match nearest_frontier(p, self.frontiers, geom) {
            Ok(cell) => geom.cell_center(cell),
            Err(_) => p,
        }
    }
}

/// A subgoal selection policy. An invalid proposal makes the episode engine
/// fall back to RF for that round.
pub trait SubgoalPlanner: Sync {
    fn name(&self) -> &str;
    fn propose(&self, ctx: &PlanContext<'_>, rng: &mut StreamRng) -> SubgoalProposal;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomFrontier;

impl SubgoalPlanner for RandomFrontier {
    fn name(&self) -> &str {
        "rf"
    }

    fn propose(&self, ctx: &PlanContext<'_>, rng: &mut StreamRng) -> SubgoalProposal {
        rf_or_random_free(ctx.observed, ctx.frontiers, rng)
    }
}

/// TFP as a standalone planner: the top peak, projected to its nearest
/// frontier.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainingFree {
    pub cfg: TfpConfig,
}

impl SubgoalPlanner for TrainingFree {
    fn name(&self) -> &str {
        "tfp"
    }

    fn propose(&self, ctx: &PlanContext<'_>, _rng: &mut StreamRng) -> SubgoalProposal {
        let tfp = tfp_plan(ctx.observed_score, &self.cfg);
        if !tfp.proposal.valid {
            return tfp.proposal;
        }
        SubgoalProposal {
            point: ctx.project(tfp.proposal.point),
            ..tfp.proposal
        }
    }
}
