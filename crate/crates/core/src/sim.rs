//! Episode engine: robot state, sensing, motion along Dijkstra paths on the
//! observed map, success detection, reward, and the two-phase protocol
//! (RF for the first `S` rounds, then the planner under test).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gridmap::{
    sector_visible_filtered, Cell, CellState, FovConfig, GridGeometry, OccupancyGrid, ScoreMap, WorldPoint,
};
use crate::planners::{
    astar, detect_frontiers, GoalSearch, rf_or_random_free, PlanContext, RandomFrontier, SubgoalPlanner,
    SubgoalProposal, SubgoalSource,
};
use crate::seed::{self, StreamRng};
use crate::worldgen::{episode_scoremap, EpisodeSpec};
use crate::{Error, Result};

pub use crate::gridmap::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub fov: FovConfig,
    pub success_radius_m: f64,
    pub reward_radius_m: f64,
    pub reward_scale: f64,
    /// Rounds of the first (RF) phase.
    pub phase_one_rounds: usize,
    /// Total subgoal rounds per episode.
    pub step_budget: usize,
    /// Cell moves allowed per round before the subgoal is abandoned.
    pub max_moves_per_round: usize,
    /// Rotate in place through a full turn at the start and after each round.
    pub scan_at_subgoal: bool,
    /// Radius of the latent score disks.
    pub disk_radius_m: f64,
    /// Related objects are placed within this distance of the target.
    pub context_radius_m: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            fov: FovConfig::default(),
            success_radius_m: 1.6,
            reward_radius_m: 2.0,
            reward_scale: 0.001,
            phase_one_rounds: 5,
            step_budget: 50,
            max_moves_per_round: 600,
            scan_at_subgoal: true,
            disk_radius_m: 2.0,
            context_radius_m: 6.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_budget <= self.phase_one_rounds {
            return Err(Error::param("step_budget", "must exceed S"));
        }
        if !(self.fov.radius_m >= 0.0) {
            return Err(Error::param("fov_radius_m", "must be non-negative"));
        }
        if !(self.fov.angle_deg > 0.0 && self.fov.angle_deg <= 360.0) {
            return Err(Error::param("fov_angle_deg", "must lie in (0, 360]"));
        }
        if !(self.success_radius_m >= 0.0) {
            return Err(Error::param("success_radius_m", "must be non-negative"));
        }
        if self.max_moves_per_round == 0 {
            return Err(Error::param("max_moves_per_round", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RobotState {
    pub pose: Pose,
    pub observed: OccupancyGrid,
    pub observed_score: ScoreMap,
    pub path_length: f64,
    pub step_count: usize,
    buf: Vec<Cell>,
    /// Cells already read by [`sense`].
    sensed: Vec<bool>,
}

impl RobotState {
    pub fn new(geom: GridGeometry, pose: Pose) -> Self {
        RobotState {
            pose,
            observed: OccupancyGrid::filled(geom, CellState::Unknown),
            observed_score: ScoreMap::zeros(geom),
            path_length: 0.0,
            step_count: 0,
            buf: Vec::new(),
            sensed: vec![false; geom.len()],
        }
    }

    pub fn cell(&self) -> Option<Cell> {
        self.observed.geometry().world_to_cell(self.pose.position())
    }

    pub fn known_cells(&self) -> usize {
        self.observed.cells().len() - self.observed.count(CellState::Unknown)
    }
}

/// Copy the visible part of the world and of the latent score map into the
/// robot's observed maps. The world is static, so a cell that was sensed
/// once is not read again.
pub fn sense(state: &mut RobotState, world: &OccupancyGrid, latent: &ScoreMap, fov: &FovConfig) -> Result<()> {
    let mut buf = std::mem::take(&mut state.buf);
    let sensed = &state.sensed;
    let r = sector_visible_filtered(world, &state.pose, fov, |i| !sensed[i], &mut buf);
    if r.is_ok() {
        let w = world.width();
        for &c in &buf {
            state.sensed[c.row * w + c.col] = true;
            state.observed.set(c, world.get(c));
            let s = latent.get(c);
            if s > state.observed_score.get(c) {
                state.observed_score.set(c, s);
            }
        }
    }
    state.buf = buf;
    r
}

/// Sense at headings covering a full turn, then restore the heading.
pub fn look_around(state: &mut RobotState, world: &OccupancyGrid, latent: &ScoreMap, fov: &FovConfig) -> Result<()> {
    let heading = state.pose.heading;
    let turns = (360.0 / fov.angle_deg).ceil().max(1.0) as usize;
    let step = std::f64::consts::TAU / turns as f64;
    for i in 0..turns {
        state.pose = Pose::new(state.pose.x, state.pose.y, heading + i as f64 * step);
        sense(state, world, latent, fov)?;
    }
    state.pose = Pose::new(state.pose.x, state.pose.y, heading);
    Ok(())
}

pub fn check_success(pose: &Pose, goal: WorldPoint, radius: f64) -> bool {
    pose.position().distance(goal) <= radius
}

/// `scale * sum(score / 255)` over cells whose centres are within `radius`.
pub fn reward_at(point: WorldPoint, score: &ScoreMap, radius: f64, scale: f64) -> f64 {
    scale * (score.disk_sum(point, radius) as f64 / 255.0)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GotoResult {
    /// Robot positions after each move.
    pub moves: Vec<WorldPoint>,
    pub replans: usize,
    pub reached: bool,
    /// Stopped because the caller's predicate fired.
    pub stopped: bool,
    /// A replan found no path; the robot stays where it got to.
    pub blocked: bool,
}

/// Travel towards `subgoal` on the observed map (Unknown counts as
/// traversable), one cell per move, sensing after every move.
pub fn goto_subgoal(
    state: &mut RobotState,
    subgoal: WorldPoint,
    world: &OccupancyGrid,
    latent: &ScoreMap,
    max_steps: usize,
    fov: &FovConfig,
) -> Result<GotoResult> {
    goto_until(state, subgoal, world, latent, max_steps, fov, |_| false)
}

/// [`goto_subgoal`] that also stops as soon as `stop` holds after a move.
///
/// Before each move the robot turns to face the next cell and senses, so it
/// never steps into an obstacle it has not seen. The remaining path is
/// replanned whenever it crosses a cell now observed as an obstacle.
pub fn goto_until(
    state: &mut RobotState,
    subgoal: WorldPoint,
    world: &OccupancyGrid,
    latent: &ScoreMap,
    max_steps: usize,
    fov: &FovConfig,
    stop: impl Fn(&RobotState) -> bool,
) -> Result<GotoResult> {
    let geom = *world.geometry();
    let unreachable = || Error::UnreachableSubgoal {
        x: subgoal.x,
        y: subgoal.y,
    };
    let target = geom.world_to_cell(subgoal).ok_or_else(unreachable)?;
    let mut cur = state.cell().ok_or(Error::InvalidPose {
        x: state.pose.x,
        y: state.pose.y,
    })?;
    let mut search = GoalSearch::new(&geom, target);
    let mut path = search.find(&state.observed, cur, true).ok_or_else(unreachable)?;
    let mut out = GotoResult::default();
    let mut idx = 0;
    while cur != target {
        if out.moves.len() >= max_steps {
            return Ok(out);
        }
        let next = path.cells[idx];
        let c = geom.cell_center(next);
        let heading = (c.y - state.pose.y).atan2(c.x - state.pose.x);
        if heading != state.pose.heading {
            state.pose = Pose::new(state.pose.x, state.pose.y, heading);
            sense(state, world, latent, fov)?;
        }
        let blocked = path.cells[idx..]
            .iter()
            .any(|&p| state.observed.get(p) == CellState::Obstacle);
        if blocked {
            out.replans += 1;
            match search.find(&state.observed, cur, true) {
                Some(p) => {
                    path = p;
                    idx = 0;
                    continue;
                }
                None => {
                    out.blocked = true;
                    return Ok(out);
                }
            }
        }
        debug_assert_ne!(world.get(next), CellState::Obstacle, "robot would enter an obstacle");
        let step = (c.x - state.pose.x).hypot(c.y - state.pose.y);
        state.path_length += step;
        state.step_count += 1;
        state.pose = Pose::new(c.x, c.y, heading);
        cur = next;
        idx += 1;
        out.moves.push(c);
        sense(state, world, latent, fov)?;
        if stop(state) {
            out.stopped = true;
            out.reached = cur == target;
            return Ok(out);
        }
    }
    out.reached = true;
    Ok(out)
}

/// One JSON-lines record of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub step: usize,
    pub planner: SubgoalSource,
    /// The planner under test produced nothing usable and RF stood in.
    pub fallback: bool,
    /// Pose at the end of the round, `[x, y, heading]`.
    pub pose: [f64; 3],
    pub subgoal: [f64; 2],
    pub reward: f64,
    /// Cumulative path length at the end of the round.
    pub path_length: f64,
    pub success: bool,
    /// Positions visited this round, starting with the pose the round began at.
    pub path: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<RoundRecord>,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("records serialise"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> std::result::Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(EpisodeLog { records })
    }

    /// Recompute the cumulative path length after each record from the
    /// logged positions.
    pub fn replay_path_lengths(&self) -> Vec<f64> {
        let mut total = 0.0;
        self.records
            .iter()
            .map(|r| {
                for w in r.path.windows(2) {
                    total += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                }
                total
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Travelled path length `p`, metres.
    pub path_length: f64,
    /// Oracle shortest path length `l` from start to goal, metres.
    pub shortest_length: f64,
    /// Subgoal rounds executed.
    pub steps: usize,
    pub log: EpisodeLog,
}

/// An episode with everything derived from its spec: the latent score map
/// and the oracle shortest path length. Shared read-only across planners.
#[derive(Debug, Clone)]
pub struct PreparedEpisode {
    pub spec: EpisodeSpec,
    pub latent: Arc<ScoreMap>,
    pub shortest_length: f64,
}

impl PreparedEpisode {
    pub fn new(spec: EpisodeSpec, cfg: &SimConfig) -> Result<Self> {
        let latent = episode_scoremap(&spec, cfg.disk_radius_m, cfg.context_radius_m);
        Self::with_latent(spec, latent)
    }

    pub fn with_latent(spec: EpisodeSpec, latent: ScoreMap) -> Result<Self> {
        let world = &spec.workspace;
        let g = world.geometry();
        let invalid = || Error::InvalidPose {
            x: spec.start.x,
            y: spec.start.y,
        };
        let a = g.world_to_cell(spec.start.position()).ok_or_else(invalid)?;
        let b = g
            .world_to_cell(spec.goal)
            .ok_or_else(|| Error::param("goal", "outside the workspace"))?;
        let path = astar(world, a, b, false).ok_or_else(|| Error::param("goal", "no path from start"))?;
        if !latent.is_paired_with(world) {
            return Err(Error::param("latent score", "geometry differs from workspace"));
        }
        Ok(PreparedEpisode {
            spec,
            latent: Arc::new(latent),
            shortest_length: path.cost_m,
        })
    }
}

/// Run one episode: `S` RF rounds, then `planner` until success or budget.
/// Planner failures (invalid proposals, unreachable subgoals) fall back to RF
/// for that round and are logged; they never abort the episode.
pub fn run_episode(ep: &PreparedEpisode, planner: &dyn SubgoalPlanner, cfg: &SimConfig) -> Result<EpisodeOutcome> {
    cfg.validate()?;
    let spec = &ep.spec;
    let world: &OccupancyGrid = &spec.workspace;
    let latent: &ScoreMap = &ep.latent;
    let fov = &cfg.fov;
    let mut rng = seed::stream(spec.seed, "planner", 0);
    let mut state = RobotState::new(*world.geometry(), spec.start);
    if cfg.scan_at_subgoal {
        look_around(&mut state, world, latent, fov)?;
    } else {
        sense(&mut state, world, latent, fov)?;
    }
    let goal = spec.goal;
    let radius = cfg.success_radius_m;
    let mut success = check_success(&state.pose, goal, radius);
    let mut log = EpisodeLog::default();
    let mut rounds = 0;
    while !success && rounds < cfg.step_budget {
        let frontiers = detect_frontiers(&state.observed);
        let origin = state.pose.position();
        let (proposal, mut fallback) = {
            let ctx = PlanContext {
                pose: state.pose,
                observed: &state.observed,
                observed_score: &state.observed_score,
                prior: world,
                predicted_goal: spec.predicted_goal,
                k: spec.k,
                frontiers: &frontiers,
            };
            if rounds < cfg.phase_one_rounds {
                (RandomFrontier.propose(&ctx, &mut rng), false)
            } else {
                let p = planner.propose(&ctx, &mut rng);
                if p.valid {
                    (p, false)
                } else {
                    (RandomFrontier.propose(&ctx, &mut rng), true)
                }
            }
        };
        let mut subgoal = proposal;
        let stop = |s: &RobotState| check_success(&s.pose, goal, radius);
        let max_moves = cfg.max_moves_per_round;
        let mut moves = Vec::new();
        match goto_until(&mut state, subgoal.point, world, latent, max_moves, fov, stop) {
            Ok(r) => moves = r.moves,
            Err(Error::UnreachableSubgoal { .. }) => {
                fallback = true;
                subgoal = rf_fallback(&state, &frontiers, &mut rng);
                if let Ok(r) = goto_until(&mut state, subgoal.point, world, latent, max_moves, fov, stop) {
                    moves = r.moves;
                }
            }
            Err(e) => return Err(e),
        }
        success = check_success(&state.pose, goal, radius);
        if cfg.scan_at_subgoal && !success {
            look_around(&mut state, world, latent, fov)?;
        }
        let mut path = Vec::with_capacity(moves.len() + 1);
        path.push([origin.x, origin.y]);
        path.extend(moves.iter().map(|m| [m.x, m.y]));
        log.records.push(RoundRecord {
            step: rounds,
            planner: subgoal.source,
            fallback,
            pose: [state.pose.x, state.pose.y, state.pose.heading],
            subgoal: [subgoal.point.x, subgoal.point.y],
            reward: reward_at(state.pose.position(), latent, cfg.reward_radius_m, cfg.reward_scale),
            path_length: state.path_length,
            success,
        path,
        });
        rounds += 1;
    }
    Ok(EpisodeOutcome {
        success,
        path_length: state.path_length,
        shortest_length: ep.shortest_length,
        steps: rounds,
        log,
    })
}

fn rf_fallback(state: &RobotState, frontiers: &crate::planners::FrontierSet, rng: &mut StreamRng) -> SubgoalProposal {
    rf_or_random_free(&state.observed, frontiers, rng)
}
