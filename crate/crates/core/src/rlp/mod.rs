//! Learned planners: losses and rewards, the monitor rule, ALC/ON fusion,
//! and the planners built from a trained [`DualPlanner`].

mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gridmap::{
    encode_model_input_sized, expand_cells, expand_map, mapped_bounding_box, BoundingBox, GridGeometry, ModelInput,
    ScoreMap, WorldPoint,
};
use crate::neural::RegressionModel;
use crate::planners::{
    nearest_frontier, rf_or_random_free, tfp_plan, FrontierSet, PlanContext, SubgoalPlanner, SubgoalProposal,
    SubgoalSource, TfpConfig,
};
use crate::seed::StreamRng;
use crate::{Error, Result};

pub use train::{
    alc_training_map, encode_alc_sample, encode_dataset, encode_on_sample, oracle_value, train_dual, train_encoded,
    EncodedSample, EpochStats,
    TrainReport,
};

pub fn loss_euclid(predicted: WorldPoint, gt: WorldPoint) -> f64 {
    predicted.distance(gt)
}

/// Regularised inverse of a loss: `1 / (1 + E)`.
pub fn reward_from_loss(e: f64) -> f64 {
    1.0 / (1.0 + e)
}

/// `A = R + gamma * V_next - V_s`.
pub fn advantage(r: f64, v_s: f64, v_next: f64, gamma: f64) -> f64 {
    r + gamma * v_next - v_s
}

/// `A^2 + k * |V_pred - V_oracle|`.
pub fn critic_loss(a: f64, v_pred: f64, v_oracle: f64, k: f64) -> f64 {
    a * a + k * (v_pred - v_oracle).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub w_m: f64,
    /// Monitor threshold, metres.
    pub g_m: f64,
    pub k_max_m: f64,
    pub w_alc_min: f64,
    pub w_alc_max: f64,
    /// Apply the monitor rule between TFP and f_ON.
    pub monitor_on_branch: bool,
    /// Margin added around the prior map before the ALC crop, metres.
    pub alc_expand_m: f64,
    pub tfp: TfpConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            w_m: 0.7,
            g_m: 5.0,
            k_max_m: 10.0,
            w_alc_min: 0.1,
            w_alc_max: 0.9,
            monitor_on_branch: true,
            alc_expand_m: 3.0,
            tfp: TfpConfig::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w_m) {
            return Err(Error::param("w_M", "must lie in [0, 1]"));
        }
        if !(self.g_m > 0.0) {
            return Err(Error::param("G_m", "must be positive"));
        }
        if !(self.k_max_m > 0.0) {
            return Err(Error::param("K_max_m", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.w_alc_min) {
            return Err(Error::param("w_alc_min", "must lie in [0, 1]"));
        }
        if !(self.w_alc_min..=1.0).contains(&self.w_alc_max) {
            return Err(Error::param("w_alc_max", "must lie in [w_alc_min, 1]"));
        }
        if !(self.alc_expand_m >= 0.0) {
            return Err(Error::param("alc_expand_m", "must be non-negative"));
        }
        if !(self.tfp.nms_radius_m >= 0.0) {
            return Err(Error::param("nms_radius_m", "must be non-negative"));
        }
        if !(self.tfp.disk_radius_m > 0.0) {
            return Err(Error::param("tfp_disk_radius_m", "must be positive"));
        }
        Ok(())
    }

    /// Weight of the ALC prediction for uncertainty radius `k`:
    /// `clamp(1 - k / K_max, w_min, w_max)`.
    pub fn w_alc(&self, k: f64) -> f64 {
        (1.0 - k / self.k_max_m).clamp(self.w_alc_min, self.w_alc_max)
    }
}

/// Pull the heuristic subgoal `p_m` towards the learned one `p_i` when they
/// are more than `g` apart.
pub fn monitor_fuse(p_m: WorldPoint, p_i: WorldPoint, w_m: f64, g: f64) -> WorldPoint {
    if p_m.distance(p_i) > g {
        WorldPoint::new(p_m.x * w_m + p_i.x * (1.0 - w_m), p_m.y * w_m + p_i.y * (1.0 - w_m))
    } else {
        p_m
    }
}

fn usable(p: Option<WorldPoint>, geom: &GridGeometry) -> Option<WorldPoint> {
    p.filter(|q| q.x.is_finite() && q.y.is_finite() && geom.contains_point(*q))
}

/// Weighted ALC/ON point before frontier projection. A point that is absent
/// or outside `geom` is replaced by the other one; `None` when neither is
/// usable.
pub fn fuse_point(
    p_alc: Option<WorldPoint>,
    p_on: Option<WorldPoint>,
    w_alc: f64,
    geom: &GridGeometry,
) -> Option<WorldPoint> {
    match (usable(p_alc, geom), usable(p_on, geom)) {
        (Some(a), Some(o)) => Some(WorldPoint::new(
            a.x * w_alc + o.x * (1.0 - w_alc),
            a.y * w_alc + o.y * (1.0 - w_alc),
        )),
        (Some(a), None) => Some(a),
        (None, Some(o)) => Some(o),
        (None, None) => None,
    }
}

/// Fuse, then snap to the nearest frontier. With no usable point the result
/// is an RF draw; with no frontier the fused point itself is returned.
pub fn alc_on_fuse(
    p_alc: Option<WorldPoint>,
    p_on: Option<WorldPoint>,
    w_alc: f64,
    frontiers: &FrontierSet,
    observed: &crate::gridmap::OccupancyGrid,
    rng: &mut StreamRng,
) -> SubgoalProposal {
    let geom = observed.geometry();
    match fuse_point(p_alc, p_on, w_alc, geom) {
        None => rf_or_random_free(observed, frontiers, rng),
        Some(p) => {
            let point = nearest_frontier(p, frontiers, geom)
                .map(|c| geom.cell_center(c))
                .unwrap_or(p);
            SubgoalProposal::new(point, w_alc, SubgoalSource::Fused)
        }
    }
}

/// Actor and critic for each of the ON and ALC branches.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPlanner {
    pub on_actor: RegressionModel,
    pub on_critic: RegressionModel,
    pub alc_actor: RegressionModel,
    pub alc_critic: RegressionModel,
}

pub const MODEL_FILES: [&str; 4] = ["on_actor.model", "on_critic.model", "alc_actor.model", "alc_critic.model"];

impl DualPlanner {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, m) in MODEL_FILES.iter().zip(self.models()) {
            m.save(&dir.join(name))?;
        }
        Ok(())
    }

    /// Load all four models; any missing file is an error.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut ms = MODEL_FILES
            .iter()
            .map(|name| RegressionModel::load(&dir.join(name)))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || ms.next().expect("four models");
        let d = DualPlanner {
            on_actor: next(),
            on_critic: next(),
            alc_actor: next(),
            alc_critic: next(),
        };
        let side = d.on_actor.input_side();
        if d.models().iter().any(|m| m.input_side() != side) {
            return Err(Error::ModelFormat("models disagree on input size".into()));
        }
        if d.on_actor.head_dim() != 2 || d.alc_actor.head_dim() != 2 {
            return Err(Error::ModelFormat("actor must have two outputs".into()));
        }
        Ok(d)
    }

    pub fn models(&self) -> [&RegressionModel; 4] {
        [&self.on_actor, &self.on_critic, &self.alc_actor, &self.alc_critic]
    }

    pub fn input_side(&self) -> usize {
        self.on_actor.input_side()
    }
}

/// Decode an actor output through the input's crop transform.
pub fn predict_point(actor: &RegressionModel, input: &ModelInput) -> Result<WorldPoint> {
    let y = actor.forward(&input.data)?;
    Ok(input.transform.to_world(y[0], y[1]))
}

/// Intermediate values of one planning call, for inspection and tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BranchTrace {
    pub p_m: Option<WorldPoint>,
    pub p_i: Option<WorldPoint>,
    pub p_on: Option<WorldPoint>,
    pub p_alc: Option<WorldPoint>,
    pub fused: Option<WorldPoint>,
}

/// The ON-branch input: TFP's top-3 re-rendered map cropped to the mapped
/// area.
pub fn on_input(clean: &ScoreMap, observed: &crate::gridmap::OccupancyGrid, side: usize) -> Result<ModelInput> {
    let bbox = mapped_bounding_box(observed)?;
    encode_model_input_sized(clean, bbox, side)
}

/// The ALC-branch input: a single disk at the predicted goal on the prior
/// map, expanded by the margin and encoded whole.
pub fn alc_input(prior: &GridGeometry, predicted: WorldPoint, disk_radius: f64, expand_m: f64, side: usize) -> Result<ModelInput> {
    let mut score = ScoreMap::zeros(*prior);
    score.stamp_disk(predicted, disk_radius, 255);
    encode_expanded(&score, expand_m, side)
}

pub(crate) fn encode_expanded(score: &ScoreMap, expand_m: f64, side: usize) -> Result<ModelInput> {
    let expanded = expand_map(score, expand_m);
    let bbox = BoundingBox::whole(expanded.geometry());
    debug_assert_eq!(
        expanded.geometry().width,
        score.geometry().width + 2 * expand_cells(expand_m, score.geometry().resolution)
    );
    encode_model_input_sized(&expanded, bbox, side)
}

/// Which branches a learned planner uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branches {
    OnOnly,
    AlcOnly,
    Both,
}

/// A learned planner over a shared, immutable [`DualPlanner`].
#[derive(Debug, Clone)]
pub struct LearnedPlanner<'a> {
    pub dual: &'a DualPlanner,
    pub cfg: FusionConfig,
    pub branches: Branches,
    /// Radius of the ALC disk rendered at the predicted goal.
    pub disk_radius_m: f64,
}

impl<'a> LearnedPlanner<'a> {
    pub fn new(dual: &'a DualPlanner, cfg: FusionConfig, branches: Branches) -> Self {
        LearnedPlanner {
            dual,
            cfg,
            branches,
            disk_radius_m: 2.0,
        }
    }

    fn on_branch(&self, ctx: &PlanContext<'_>, trace: &mut BranchTrace) -> Option<WorldPoint> {
        let tfp = tfp_plan(ctx.observed_score, &self.cfg.tfp);
        if !tfp.proposal.valid {
            return None;
        }
        let p_m = tfp.proposal.point;
        trace.p_m = Some(p_m);
        let input = on_input(&tfp.clean, ctx.observed, self.dual.input_side()).ok()?;
        let p_i = predict_point(&self.dual.on_actor, &input).ok()?;
        trace.p_i = Some(p_i);
        let p_on = if self.cfg.monitor_on_branch {
            monitor_fuse(p_m, p_i, self.cfg.w_m, self.cfg.g_m)
        } else {
            p_i
        };
        trace.p_on = Some(p_on);
        Some(p_on)
    }

    fn alc_branch(&self, ctx: &PlanContext<'_>, trace: &mut BranchTrace) -> Option<WorldPoint> {
        let prior = ctx.prior.geometry();
        let input = alc_input(
            prior,
            ctx.predicted_goal,
            self.disk_radius_m,
            self.cfg.alc_expand_m,
            self.dual.input_side(),
        )
        .ok()?;
        let p = predict_point(&self.dual.alc_actor, &input).ok()?;
        trace.p_alc = Some(p);
        Some(p)
    }

    /// Plan and report the intermediate points.
    pub fn plan_traced(&self, ctx: &PlanContext<'_>, rng: &mut StreamRng) -> (SubgoalProposal, BranchTrace) {
        let mut trace = BranchTrace::default();
        let p_on = match self.branches {
            Branches::AlcOnly => None,
            _ => self.on_branch(ctx, &mut trace),
        };
        let p_alc = match self.branches {
            Branches::OnOnly => None,
            _ => self.alc_branch(ctx, &mut trace),
        };
        let w = match self.branches {
            Branches::OnOnly => 0.0,
            Branches::AlcOnly => 1.0,
            Branches::Both => self.cfg.w_alc(ctx.k),
        };
        let source = self.source();
        let geom = ctx.observed.geometry();
        trace.fused = fuse_point(p_alc, p_on, w, geom);
        if trace.fused.is_none() {
            return (SubgoalProposal::invalid(source), trace);
        }
        let mut p = alc_on_fuse(p_alc, p_on, w, ctx.frontiers, ctx.observed, rng);
        p.source = source;
        (p, trace)
    }

    fn source(&self) -> SubgoalSource {
        match self.branches {
            Branches::OnOnly => SubgoalSource::RlpOn,
            Branches::AlcOnly => SubgoalSource::RlpAlc,
            Branches::Both => SubgoalSource::Fused,
        }
    }
}

impl SubgoalPlanner for LearnedPlanner<'_> {
    fn name(&self) -> &str {
        match self.branches {
            Branches::OnOnly => "on",
            Branches::AlcOnly => "alc",
            Branches::Both => "ours",
        }
    }

    fn propose(&self, ctx: &PlanContext<'_>, rng: &mut StreamRng) -> SubgoalProposal {
        self.plan_traced(ctx, rng).0
    }
}
