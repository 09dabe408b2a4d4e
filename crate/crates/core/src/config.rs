//! Plain-text `key=value` configuration.
//!
//! One pair per line, `#` starts a comment, surrounding whitespace is
//! trimmed. [`RunConfig`] holds every tunable of the pipeline; its
//! [`to_text`](RunConfig::to_text) output parses back to an equal value.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::eval::{BenchConfig, PlannerKind};
use crate::gridmap::FovConfig;
use crate::neural::TrainConfig;
use crate::rlp::FusionConfig;
use crate::sim::SimConfig;
use crate::worldgen::{DatasetParams, WorkspaceParams};
use crate::{Error, Result};

/// Parse `key=value` lines. Duplicate keys and lines without `=` are errors.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
            line: i + 1,
            reason: format!("expected key=value, got {line:?}"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::ConfigSyntax {
                line: i + 1,
                reason: "empty key".into(),
            });
        }
        if out.insert(k.to_owned(), v.trim().to_owned()).is_some() {
            return Err(Error::ConfigSyntax {
                line: i + 1,
                reason: format!("duplicate key {k}"),
            });
        }
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::param(key, format!("cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::param(key, format!("expected true/false, got {v:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_pair<T: FromStr>(key: &str, v: &str) -> Result<(T, T)> {
    let items: Vec<T> = parse_list(key, v)?;
    match <[T; 2]>::try_from(items) {
        Ok([a, b]) => Ok((a, b)),
        Err(_) => Err(Error::param(key, "expected two comma-separated values")),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Every tunable of the pipeline, with the defaults used when a key is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub workspace: WorkspaceParams,
    pub dataset: DatasetParams,
    pub sim: SimConfig,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
    /// Directory with trained models, for `run` and `bench`.
    pub model_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 1,
            workspace: WorkspaceParams::default(),
            dataset: DatasetParams::default(),
            sim: SimConfig::default(),
            fusion: FusionConfig::default(),
            train: TrainConfig::default(),
            bench: BenchConfig::default(),
            model_dir: None,
        }
    }
}

impl RunConfig {
    /// Defaults overridden by the pairs in `text`. Unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.sync();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Propagate shared values (master seed, workspace) into the sections
    /// that carry their own copy.
    pub fn sync(&mut self) {
        self.dataset.seed = self.seed;
        self.dataset.workspace = self.workspace.clone();
        self.train.seed = self.seed;
        self.bench.seed = self.seed;
        self.bench.k_values = self.dataset.k_values.clone();
        self.bench.workspace = self.workspace.clone();
        self.bench.sim = self.sim.clone();
        self.bench.fusion = self.fusion.clone();
        self.bench.jobs = self.jobs;
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let w = &mut self.workspace;
        let s = &mut self.sim;
        let f = &mut self.fusion;
        let t = &mut self.train;
        let b = &mut self.bench;
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "jobs" => self.jobs = parse_value(key, v)?,
            "model_dir" => self.model_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },

            "world_width" => w.width = parse_value(key, v)?,
            "world_height" => w.height = parse_value(key, v)?,
            "resolution" => w.resolution = parse_value(key, v)?,
            "rooms" => w.rooms = parse_pair(key, v)?,
            "door_width_m" => w.door_width_m = parse_pair(key, v)?,
            "wall_cells" => w.wall_cells = parse_value(key, v)?,
            "min_room_m" => w.min_room_m = parse_value(key, v)?,
            "obstacle_density" => w.obstacle_density = parse_value(key, v)?,

            "count" => self.dataset.count = parse_value(key, v)?,
            "base_worlds" => self.dataset.base_worlds = parse_value(key, v)?,
            "disk_radius_m" => {
                let r = parse_value(key, v)?;
                self.dataset.disk_radius_m = r;
                s.disk_radius_m = r;
            }
            "K_values" => {
                let ks: Vec<f64> = parse_list(key, v)?;
                self.dataset.k_values = ks.clone();
                b.k_values = ks;
            }

            "fov_radius_m" => s.fov.radius_m = parse_value(key, v)?,
            "fov_angle_deg" => s.fov.angle_deg = parse_value(key, v)?,
            "success_radius_m" => s.success_radius_m = parse_value(key, v)?,
            "reward_radius_m" => s.reward_radius_m = parse_value(key, v)?,
            "reward_scale" => s.reward_scale = parse_value(key, v)?,
            "S" => s.phase_one_rounds = parse_value(key, v)?,
            "step_budget" => s.step_budget = parse_value(key, v)?,
            "max_moves_per_round" => s.max_moves_per_round = parse_value(key, v)?,
            "scan_at_subgoal" => s.scan_at_subgoal = parse_bool(key, v)?,
            "context_radius_m" => s.context_radius_m = parse_value(key, v)?,

            "w_M" => f.w_m = parse_value(key, v)?,
            "G_m" => f.g_m = parse_value(key, v)?,
            "K_max_m" => f.k_max_m = parse_value(key, v)?,
            "w_alc_min" => f.w_alc_min = parse_value(key, v)?,
            "w_alc_max" => f.w_alc_max = parse_value(key, v)?,
            "monitor_on_branch" => f.monitor_on_branch = parse_bool(key, v)?,
            "alc_expand_m" => f.alc_expand_m = parse_value(key, v)?,
            "nms_radius_m" => f.tfp.nms_radius_m = parse_value(key, v)?,
            "tfp_disk_radius_m" => f.tfp.disk_radius_m = parse_value(key, v)?,

            "learning_rate" => t.learning_rate = parse_value(key, v)?,
            "gamma" => t.gamma = parse_value(key, v)?,
            "k" => t.k = parse_value(key, v)?,
            "batch_size" => t.batch_size = parse_value(key, v)?,
            "epochs" => t.epochs = parse_value(key, v)?,
            "downsample" => t.downsample = parse_value(key, v)?,
            "advantage_weighting" => t.advantage_weighting = parse_bool(key, v)?,
            "oracle_step_m" => t.oracle_step_m = parse_value(key, v)?,
            "holdout_fraction" => t.holdout_fraction = parse_value(key, v)?,

            "episodes" => b.episodes = parse_value(key, v)?,
            "bench_worlds" => b.worlds = parse_value(key, v)?,
            "planners" => {
                b.planners = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|p| p.parse::<PlannerKind>().map_err(|_| Error::param(key, format!("unknown planner {p:?}"))))
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::param(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// All keys in a fixed order. Floats use the shortest representation
    /// that parses back to the same value.
    pub fn to_text(&self) -> String {
        let w = &self.workspace;
        let s = &self.sim;
        let f = &self.fusion;
        let t = &self.train;
        let b = &self.bench;
        let planners: Vec<&str> = b.planners.iter().map(|p| p.as_str()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            (
                "model_dir",
                self.model_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("world_width", w.width.to_string()),
            ("world_height", w.height.to_string()),
            ("resolution", w.resolution.to_string()),
            ("rooms", format!("{},{}", w.rooms.0, w.rooms.1)),
            ("door_width_m", format!("{},{}", w.door_width_m.0, w.door_width_m.1)),
            ("wall_cells", w.wall_cells.to_string()),
            ("min_room_m", w.min_room_m.to_string()),
            ("obstacle_density", w.obstacle_density.to_string()),
            ("count", self.dataset.count.to_string()),
            ("base_worlds", self.dataset.base_worlds.to_string()),
            ("disk_radius_m", self.dataset.disk_radius_m.to_string()),
            ("K_values", join(&self.dataset.k_values)),
            ("fov_radius_m", s.fov.radius_m.to_string()),
            ("fov_angle_deg", s.fov.angle_deg.to_string()),
            ("success_radius_m", s.success_radius_m.to_string()),
            ("reward_radius_m", s.reward_radius_m.to_string()),
            ("reward_scale", s.reward_scale.to_string()),
            ("S", s.phase_one_rounds.to_string()),
            ("step_budget", s.step_budget.to_string()),
            ("max_moves_per_round", s.max_moves_per_round.to_string()),
            ("scan_at_subgoal", s.scan_at_subgoal.to_string()),
            ("context_radius_m", s.context_radius_m.to_string()),
            ("w_M", f.w_m.to_string()),
            ("G_m", f.g_m.to_string()),
            ("K_max_m", f.k_max_m.to_string()),
            ("w_alc_min", f.w_alc_min.to_string()),
            ("w_alc_max", f.w_alc_max.to_string()),
            ("monitor_on_branch", f.monitor_on_branch.to_string()),
            ("alc_expand_m", f.alc_expand_m.to_string()),
            ("nms_radius_m", f.tfp.nms_radius_m.to_string()),
            ("tfp_disk_radius_m", f.tfp.disk_radius_m.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("gamma", t.gamma.to_string()),
            ("k", t.k.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("downsample", t.downsample.to_string()),
            ("advantage_weighting", t.advantage_weighting.to_string()),
            ("oracle_step_m", t.oracle_step_m.to_string()),
            ("holdout_fraction", t.holdout_fraction.to_string()),
            ("episodes", b.episodes.to_string()),
            ("bench_worlds", b.worlds.to_string()),
            ("planners", planners.join(",")),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Check every section's preconditions; the error names the first
    /// offending key.
    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::param("jobs", "must be positive"));
        }
        self.workspace.validate()?;
        self.sim.validate()?;
        self.fusion.validate()?;
        self.train.validate()?;
        self.bench.validate()?;
        if self.dataset.count == 0 {
            return Err(Error::param("count", "must be positive"));
        }
        if self.dataset.base_worlds == 0 {
            return Err(Error::param("base_worlds", "must be positive"));
        }
        if self.dataset.k_values.is_empty() || self.dataset.k_values.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::param("K_values", "need at least one non-negative radius"));
        }
        if !(self.dataset.disk_radius_m > 0.0) {
            return Err(Error::param("disk_radius_m", "must be positive"));
        }
        Ok(())
    }

    pub fn fov(&self) -> FovConfig {
        self.sim.fov
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("a=1\n# note\n b = two words \n\nc=x=y # tail\n").unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "two words");
        assert_eq!(kv["c"], "x=y");
        assert!(matches!(parse_kv("a=1\na=2"), Err(Error::ConfigSyntax { line: 2, .. })));
        assert!(parse_kv("novalue").is_err());
        assert!(parse_kv("=3").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        cfg.fusion.w_m = 0.1 + 0.2;
        cfg.train.advantage_weighting = true;
        cfg.dataset.k_values = vec![1.5, 3.0];
        cfg.model_dir = Some(PathBuf::from("models/x"));
        cfg.sync();
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
    }

    #[test]
    fn unknown_and_invalid_keys_are_named() {
        match RunConfig::from_text("bogus=1") {
            Err(Error::InvalidParam { key, .. }) => assert_eq!(key, "bogus"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_text("gamma=abc") {
            Err(Error::InvalidParam { key, .. }) => assert_eq!(key, "gamma"),
            other => panic!("{other:?}"),
        }
        let cfg = RunConfig::from_text("gamma=1.5").unwrap();
        match cfg.validate() {
            Err(Error::InvalidParam { key, .. }) => assert_eq!(key, "gamma"),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::default().validate().is_ok());
    }
}
