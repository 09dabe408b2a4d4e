//! Actor-critic training of the ON and ALC branches.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{advantage, critic_loss, loss_euclid, reward_from_loss, DualPlanner, FusionConfig};
use crate::exec::Exec;
use crate::gridmap::{
    crop_resize_levels, expand_map, mapped_bounding_box, BoundingBox, CropTransform, OccupancyGrid, ScoreMap,
    WorldPoint,
};
use crate::neural::{Architecture, RegressionModel, TrainConfig};
use crate::planners::{astar, tfp_plan};
use crate::seed;
use crate::sim::{reward_at, SimConfig};
use crate::worldgen::{gen_alc_scoremap, DatasetEntry};
use crate::{Error, Result};

/// A training sample reduced to what the models see: quantised input levels,
/// the crop transform, the target point and the oracle state value.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub levels: Vec<u8>,
    pub transform: CropTransform,
    pub gt: WorldPoint,
    pub v_oracle: f64,
}

impl EncodedSample {
    pub fn input(&self) -> Vec<f32> {
        self.levels.iter().map(|&l| l as f32 / 255.0).collect()
    }
}

/// Discounted return of reward evaluations spaced `step_m` apart along the
/// shortest path from `start` to `goal`, starting at `start` and ending at
/// `goal`.
pub fn oracle_value(
    grid: &OccupancyGrid,
    start: WorldPoint,
    goal: WorldPoint,
    score: &ScoreMap,
    step_m: f64,
    gamma: f64,
    sim: &SimConfig,
) -> Result<f64> {
    let g = grid.geometry();
    let cell = |p: WorldPoint| g.world_to_cell(p).ok_or(Error::InvalidPose { x: p.x, y: p.y });
    let path = astar(grid, cell(start)?, cell(goal)?, false).ok_or(Error::UnreachableSubgoal {
        x: goal.x,
        y: goal.y,
    })?;
    let mut points = vec![start];
    let mut prev = start;
    let mut travelled = 0.0;
    let mut next_mark = step_m;
    for &c in &path.cells {
        let p = g.cell_center(c);
        travelled += prev.distance(p);
        prev = p;
        if travelled >= next_mark {
            points.push(p);
            next_mark += step_m;
        }
    }
    if points.last() != Some(&goal) && !path.cells.is_empty() {
        points.push(goal);
    }
    let mut v = 0.0;
    let mut discount = 1.0;
    for p in points {
        v += discount * reward_at(p, score, sim.reward_radius_m, sim.reward_scale);
        discount *= gamma;
    }
    Ok(v)
}

/// ON sample: TFP's re-rendered top-3 map over the mapped area.
pub fn encode_on_sample(
    entry: &DatasetEntry,
    side: usize,
    fusion: &FusionConfig,
    train: &TrainConfig,
    sim: &SimConfig,
) -> Result<EncodedSample> {
    let grid = &entry.sample.obstacle;
    let clean = tfp_plan(&entry.sample.score, &fusion.tfp).clean;
    let bbox = mapped_bounding_box(grid)?;
    let v_oracle = oracle_value(
        grid,
        entry.start,
        entry.sample.gt_subgoal,
        &entry.sample.score,
        train.oracle_step_m,
        train.gamma,
        sim,
    )?;
    Ok(EncodedSample {
        levels: crop_resize_levels(&clean, bbox, side),
        transform: CropTransform::new(grid.geometry(), bbox),
        gt: entry.sample.gt_subgoal,
        v_oracle,
    })
}

/// The ALC score map of an entry: a prediction drawn over free cells and the
/// true goal placed within the entry's K of it.
pub fn alc_training_map(entry: &DatasetEntry, disk_radius: f64) -> Result<(ScoreMap, WorldPoint)> {
    let grid = &entry.sample.obstacle;
    let mut rng = seed::stream(entry.seed, "alc-predicted", 0);
    let free = grid.free_cells();
    if free.is_empty() {
        return Err(Error::NotEnoughFree { needed: 1, available: 0 });
    }
    let predicted = grid.geometry().cell_center(free[rng.gen_range(0..free.len())]);
    gen_alc_scoremap(grid, predicted, entry.k, disk_radius, entry.seed)
}

/// ALC sample: the single-disk map expanded by the margin, encoded whole.
pub fn encode_alc_sample(
    entry: &DatasetEntry,
    side: usize,
    disk_radius: f64,
    fusion: &FusionConfig,
    train: &TrainConfig,
    sim: &SimConfig,
) -> Result<EncodedSample> {
    let grid = &entry.sample.obstacle;
    let (score, goal) = alc_training_map(entry, disk_radius)?;
    let v_oracle = oracle_value(grid, entry.start, goal, &score, train.oracle_step_m, train.gamma, sim)?;
    let expanded = expand_map(&score, fusion.alc_expand_m);
    let bbox = BoundingBox::whole(expanded.geometry());
    Ok(EncodedSample {
        levels: crop_resize_levels(&expanded, bbox, side),
        transform: CropTransform::new(expanded.geometry(), bbox),
        gt: goal,
        v_oracle,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub on_actor_loss: f64,
    pub alc_actor_loss: f64,
    pub on_critic_loss: f64,
    pub alc_critic_loss: f64,
    pub on_advantage: f64,
    pub alc_advantage: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_samples: usize,
    pub heldout_samples: usize,
    /// Mean held-out Euclidean error of f_ON, metres.
    pub heldout_e_on: f64,
    pub heldout_e_alc: f64,
    /// Same error for a predictor uniform over the crop box.
    pub baseline_e_on: f64,
    pub baseline_e_alc: f64,
}

impl TrainReport {
    pub fn curves_csv(&self) -> String {
        let mut s = String::from(
            "epoch,on_actor_loss,alc_actor_loss,on_critic_loss,alc_critic_loss,on_advantage,alc_advantage\n",
        );
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch,
                e.on_actor_loss,
                e.alc_actor_loss,
                e.on_critic_loss,
                e.alc_critic_loss,
                e.on_advantage,
                e.alc_advantage
            ));
        }
        s
    }
}

struct SampleGrad {
    actor: Vec<f64>,
    critic: Vec<f64>,
    e: f64,
    critic_loss: f64,
    advantage: f64,
}

/// Actor output decoded to the world and the gradient of the Euclidean loss
/// with respect to `(u, v)`.
fn actor_error(out: &[f64], s: &EncodedSample) -> (f64, [f64; 2]) {
    let p = s.transform.to_world(out[0], out[1]);
    let e = loss_euclid(p, s.gt);
    if e == 0.0 {
        return (0.0, [0.0, 0.0]);
    }
    let (sx, sy) = s.transform.span();
    (e, [sx * (p.x - s.gt.x) / e, sy * (p.y - s.gt.y) / e])
}

fn sample_grad(actor: &RegressionModel, critic: &RegressionModel, s: &EncodedSample, cfg: &TrainConfig) -> Result<SampleGrad> {
    let x = s.input();
    let ta = actor.forward_trace(&x)?;
    let (e, de) = actor_error(ta.output(), s);
    let r = reward_from_loss(e);
    let tc = critic.forward_trace(&x)?;
    let v = tc.output()[0];
    // the successor value is a bootstrap target: no gradient flows through it
    let a = advantage(r, v, v, cfg.gamma);
    let closs = critic_loss(a, v, s.v_oracle, cfg.k);
    let sign = if v > s.v_oracle {
        1.0
    } else if v < s.v_oracle {
        -1.0
    } else {
        0.0
    };
    let dv = -2.0 * a + cfg.k * sign;
    let wgt = if cfg.advantage_weighting { a.exp().clamp(0.1, 10.0) } else { 1.0 };
    Ok(SampleGrad {
        actor: actor.backward(&ta, &[wgt * de[0], wgt * de[1]])?,
        critic: critic.backward(&tc, &[dv])?,
        e,
        critic_loss: closs,
        advantage: a,
    })
}

#[derive(Default)]
struct BatchSums {
    e: f64,
    critic_loss: f64,
    advantage: f64,
}

/// One SGD step of an actor-critic pair on a minibatch. Per-sample gradients
/// may be computed in parallel; they are summed in batch order.
fn batch_step(
    actor: &mut RegressionModel,
    critic: &mut RegressionModel,
    samples: &[EncodedSample],
    idx: &[usize],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<BatchSums> {
    let grads = {
        let (a, c) = (&*actor, &*critic);
        exec.try_map(idx.len(), |j| sample_grad(a, c, &samples[idx[j]], cfg))?
    };
    let mut ga = vec![0.0; actor.num_params()];
    let mut gc = vec![0.0; critic.num_params()];
    let mut sums = BatchSums::default();
    for g in &grads {
        for (d, s) in ga.iter_mut().zip(&g.actor) {
            *d += s;
        }
        for (d, s) in gc.iter_mut().zip(&g.critic) {
            *d += s;
        }
        sums.e += g.e;
        sums.critic_loss += g.critic_loss;
        sums.advantage += g.advantage;
    }
    let n = idx.len() as f64;
    ga.iter_mut().for_each(|g| *g /= n);
    gc.iter_mut().for_each(|g| *g /= n);
    actor.sgd_step(&ga, cfg.learning_rate)?;
    critic.sgd_step(&gc, cfg.learning_rate)?;
    Ok(sums)
}

fn mean_error(actor: &RegressionModel, samples: &[EncodedSample], exec: Exec) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let es = exec.try_map(samples.len(), |i| -> Result<f64> {
        let out = actor.forward(&samples[i].input())?;
        Ok(actor_error(&out, &samples[i]).0)
    })?;
    Ok(es.iter().sum::<f64>() / es.len() as f64)
}

fn baseline_error(samples: &[EncodedSample], seed_value: u64, label: &str) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut rng = seed::stream(seed_value, label, 0);
    let total: f64 = samples
        .iter()
        .map(|s| {
            let p = s.transform.to_world(rng.gen::<f64>(), rng.gen::<f64>());
            loss_euclid(p, s.gt)
        })
        .sum();
    total / samples.len() as f64
}

/// Encode every entry for both branches.
pub fn encode_dataset(
    entries: &[DatasetEntry],
    cfg: &TrainConfig,
    fusion: &FusionConfig,
    sim: &SimConfig,
    exec: Exec,
) -> Result<Vec<(EncodedSample, EncodedSample)>> {
    let side = cfg.input_side();
    exec.try_map(entries.len(), |i| {
        let e = &entries[i];
        Ok((
            encode_on_sample(e, side, fusion, cfg, sim)?,
            encode_alc_sample(e, side, sim.disk_radius_m, fusion, cfg, sim)?,
        ))
    })
}

/// Train both actor-critic pairs. The last `holdout_fraction` of the entries
/// is held out and only used for the report.
pub fn train_dual(
    entries: &[DatasetEntry],
    cfg: &TrainConfig,
    fusion: &FusionConfig,
    sim: &SimConfig,
    exec: Exec,
) -> Result<(DualPlanner, TrainReport)> {
    cfg.validate()?;
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let encoded = encode_dataset(entries, cfg, fusion, sim, exec)?;
    let (on, alc): (Vec<_>, Vec<_>) = encoded.into_iter().unzip();
    train_encoded(&on, &alc, cfg, exec)
}

/// Train on samples that are already encoded. `on` and `alc` are paired by
/// index and must have the same length.
pub fn train_encoded(
    on: &[EncodedSample],
    alc: &[EncodedSample],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<(DualPlanner, TrainReport)> {
    cfg.validate()?;
    if on.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if on.len() != alc.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} ALC samples", on.len()),
            actual: alc.len().to_string(),
        });
    }
    let n = on.len();
    let n_hold = ((n as f64 * cfg.holdout_fraction).floor() as usize).min(n - 1);
    let n_train = n - n_hold;

    let side = cfg.input_side();
    let init = |label: &str, head: usize| RegressionModel::new(Architecture::default_for(side, head), seed::derive(cfg.seed, label, 0));
    let mut dual = DualPlanner {
        on_actor: init("on-actor", 2)?,
        on_critic: init("on-critic", 1)?,
        alc_actor: init("alc-actor", 2)?,
        alc_critic: init("alc-critic", 1)?,
    };
    let mut report = TrainReport {
        train_samples: n_train,
        heldout_samples: n_hold,
        ..TrainReport::default()
    };
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::stream(cfg.seed, "epoch", epoch as u64));
        let mut on_sum = BatchSums::default();
        let mut alc_sum = BatchSums::default();
        for batch in order.chunks(cfg.batch_size) {
            let s = batch_step(&mut dual.on_actor, &mut dual.on_critic, on, batch, cfg, exec)?;
            on_sum.e += s.e;
            on_sum.critic_loss += s.critic_loss;
            on_sum.advantage += s.advantage;
            let s = batch_step(&mut dual.alc_actor, &mut dual.alc_critic, alc, batch, cfg, exec)?;
            alc_sum.e += s.e;
            alc_sum.critic_loss += s.critic_loss;
            alc_sum.advantage += s.advantage;
        }
        let m = n_train as f64;
        report.epochs.push(EpochStats {
            epoch,
            on_actor_loss: on_sum.e / m,
            alc_actor_loss: alc_sum.e / m,
            on_critic_loss: on_sum.critic_loss / m,
            alc_critic_loss: alc_sum.critic_loss / m,
            on_advantage: on_sum.advantage / m,
            alc_advantage: alc_sum.advantage / m,
        });
    }
    let held_on = &on[n_train..];
    let held_alc = &alc[n_train..];
    report.heldout_e_on = mean_error(&dual.on_actor, held_on, exec)?;
    report.heldout_e_alc = mean_error(&dual.alc_actor, held_alc, exec)?;
    report.baseline_e_on = baseline_error(held_on, cfg.seed, "baseline-on");
    report.baseline_e_alc = baseline_error(held_alc, cfg.seed, "baseline-alc");
    Ok((dual, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::{CellState, GridGeometry};

    #[test]
    fn oracle_value_by_hand() {
        let g = GridGeometry::new(60, 10, 0.1, WorldPoint::new(0.0, 0.0)).unwrap();
        let grid = OccupancyGrid::filled(g, CellState::Free);
        let mut score = ScoreMap::zeros(g);
        let start = g.cell_center(crate::gridmap::Cell::new(5, 5));
        let goal = g.cell_center(crate::gridmap::Cell::new(5, 45));
        score.set(crate::gridmap::Cell::new(5, 45), 255);
        let sim = SimConfig::default();
        // evaluations at the start (4 m away) and at the goal
        let v = oracle_value(&grid, start, goal, &score, 10.0, 0.9, &sim).unwrap();
        assert!((v - 0.9 * 0.001).abs() < 1e-15, "{v}");
        let v = oracle_value(&grid, start, start, &score, 2.0, 0.9, &sim).unwrap();
        assert_eq!(v, 0.0);
    }
}
