//! SPL, the paired-seed benchmark runner and report export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::gridmap::OccupancyGrid;
use crate::planners::{RandomFrontier, SubgoalPlanner, TrainingFree};
use crate::rlp::{Branches, DualPlanner, FusionConfig, LearnedPlanner};
use crate::seed;
use crate::sim::{run_episode, EpisodeOutcome, PreparedEpisode, SimConfig};
use crate::worldgen::{gen_workspace, sample_episode, EpisodeSpec, WorkspaceParams};
use crate::{Error, Result};

/// Reference SPL values of the original study, shown next to local results.
pub const REFERENCE_SPL: [(PlannerKind, f64); 4] = [
    (PlannerKind::Ours, 0.413),
    (PlannerKind::Alc, 0.404),
    (PlannerKind::On, 0.383),
    (PlannerKind::Rf, 0.359),
];

/// `(1/N) sum S_i * l_i / max(p_i, l_i)`.
pub fn spl(outcomes: &[EpisodeOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let mut total = 0.0;
    for o in outcomes {
        if !(o.shortest_length > 0.0) {
            return Err(Error::param("shortest_length", "must be positive"));
        }
        if o.success {
            total += o.shortest_length / o.path_length.max(o.shortest_length);
        }
    }
    Ok(total / outcomes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlannerKind {
    Rf,
    Tfp,
    On,
    Alc,
    Ours,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 5] = [
        PlannerKind::Rf,
        PlannerKind::Tfp,
        PlannerKind::On,
        PlannerKind::Alc,
        PlannerKind::Ours,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Rf => "rf",
            PlannerKind::Tfp => "tfp",
            PlannerKind::On => "on",
            PlannerKind::Alc => "alc",
            PlannerKind::Ours => "ours",
        }
    }

    pub fn needs_models(self) -> bool {
        matches!(self, PlannerKind::On | PlannerKind::Alc | PlannerKind::Ours)
    }

    pub fn reference_spl(self) -> Option<f64> {
        REFERENCE_SPL.iter().find(|(k, _)| *k == self).map(|(_, v)| *v)
    }

    /// Instantiate the planner. Learned kinds need `dual`.
    pub fn build<'a>(
        self,
        dual: Option<&'a DualPlanner>,
        fusion: &FusionConfig,
        disk_radius_m: f64,
    ) -> Result<Box<dyn SubgoalPlanner + 'a>> {
        let learned = |b: Branches| -> Result<Box<dyn SubgoalPlanner + 'a>> {
            let dual = dual.ok_or_else(|| Error::param("model_dir", format!("planner {} needs trained models", self.as_str())))?;
            let mut p = LearnedPlanner::new(dual, fusion.clone(), b);
            p.disk_radius_m = disk_radius_m;
            Ok(Box::new(p))
        };
        Ok(match self {
            PlannerKind::Rf => Box::new(RandomFrontier),
            PlannerKind::Tfp => Box::new(TrainingFree { cfg: fusion.tfp }),
            PlannerKind::On => learned(Branches::OnOnly)?,
            PlannerKind::Alc => learned(Branches::AlcOnly)?,
            PlannerKind::Ours => learned(Branches::Both)?,
        })
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param("planner", format!("unknown planner {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub episodes: usize,
    pub planners: Vec<PlannerKind>,
    pub seed: u64,
    /// Distinct workspaces; episode `i` uses world `i % worlds`.
    pub worlds: usize,
    /// K is drawn uniformly from this list per episode.
    pub k_values: Vec<f64>,
    pub workspace: WorkspaceParams,
    pub sim: SimConfig,
    pub fusion: FusionConfig,
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            episodes: 300,
            planners: vec![PlannerKind::Rf, PlannerKind::On, PlannerKind::Alc, PlannerKind::Ours],
            seed: 0,
            worlds: 10,
            k_values: vec![2.0, 5.0, 10.0],
            workspace: WorkspaceParams::default(),
            sim: SimConfig::default(),
            fusion: FusionConfig::default(),
            jobs: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::param("episodes", "must be positive"));
        }
        if self.planners.is_empty() {
            return Err(Error::param("planners", "must not be empty"));
        }
        if self.worlds == 0 {
            return Err(Error::param("bench_worlds", "must be positive"));
        }
        if self.k_values.is_empty() || self.k_values.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::param("K_values", "need at least one non-negative radius"));
        }
        self.workspace.validate()?;
        self.sim.validate()?;
        self.fusion.validate()
    }

    pub fn needs_models(&self) -> bool {
        self.planners.iter().any(|p| p.needs_models())
    }
}

/// The benchmark's episode specs, identical for every planner.
pub fn bench_specs(cfg: &BenchConfig, exec: Exec) -> Result<Vec<EpisodeSpec>> {
    let worlds: Vec<Arc<OccupancyGrid>> = exec.try_map(cfg.worlds, |w| {
        gen_workspace(seed::derive(cfg.seed, "bench-world", w as u64), &cfg.workspace).map(Arc::new)
    })?;
    exec.try_map(cfg.episodes, |i| {
        let s = seed::derive(cfg.seed, "episode", i as u64);
        let mut rng = seed::stream(s, "k", 0);
        let k = cfg.k_values[rng.gen_range(0..cfg.k_values.len())];
        let spec = sample_episode(&worlds[i % worlds.len()], k, s)?;
        spec.validate()?;
        Ok(spec)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerResult {
    pub planner: PlannerKind,
    pub spl: f64,
    pub success_rate: f64,
    pub mean_path_m: f64,
    pub outcomes: Vec<EpisodeOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeInfo {
    pub index: usize,
    pub seed: u64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub episodes: Vec<EpisodeInfo>,
    pub results: Vec<PlannerResult>,
}

impl BenchmarkReport {
    pub fn get(&self, kind: PlannerKind) -> Option<&PlannerResult> {
        self.results.iter().find(|r| r.planner == kind)
    }

    pub fn spl_of(&self, kind: PlannerKind) -> Option<f64> {
        self.get(kind).map(|r| r.spl)
    }
}

/// Run every planner in `cfg.planners` over the same episodes.
pub fn run_benchmark(cfg: &BenchConfig, dual: Option<&DualPlanner>, exec: Exec) -> Result<BenchmarkReport> {
    cfg.validate()?;
    if cfg.needs_models() && dual.is_none() {
        return Err(Error::param("model_dir", "learned planners need trained models"));
    }
    let specs = bench_specs(cfg, exec)?;
    let prepared = exec.try_map(specs.len(), |i| PreparedEpisode::new(specs[i].clone(), &cfg.sim))?;
    run_prepared(cfg, &prepared, dual, exec)
}

/// [`run_benchmark`] over episodes prepared by the caller.
pub fn run_prepared(
    cfg: &BenchConfig,
    prepared: &[PreparedEpisode],
    dual: Option<&DualPlanner>,
    exec: Exec,
) -> Result<BenchmarkReport> {
    let mut results = Vec::with_capacity(cfg.planners.len());
    for &kind in &cfg.planners {
        let planner = kind.build(dual, &cfg.fusion, cfg.sim.disk_radius_m)?;
        let planner: &dyn SubgoalPlanner = planner.as_ref();
        let outcomes = exec.try_map(prepared.len(), |i| run_episode(&prepared[i], planner, &cfg.sim))?;
        results.push(summarize(kind, outcomes)?);
    }
    let episodes = prepared
        .iter()
        .enumerate()
        .map(|(index, p)| EpisodeInfo {
            index,
            seed: p.spec.seed,
            k: p.spec.k,
        })
        .collect();
    Ok(BenchmarkReport { episodes, results })
}

pub fn summarize(planner: PlannerKind, outcomes: Vec<EpisodeOutcome>) -> Result<PlannerResult> {
    let n = outcomes.len() as f64;
    Ok(PlannerResult {
        planner,
        spl: spl(&outcomes)?,
        success_rate: outcomes.iter().filter(|o| o.success).count() as f64 / n,
        mean_path_m: outcomes.iter().map(|o| o.path_length).sum::<f64>() / n,
        outcomes,
    })
}

pub fn summary_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("planner,spl,success_rate,mean_path_m,episodes\n");
    for r in &report.results {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{}",
            r.planner.as_str(),
            r.spl,
            r.success_rate,
            r.mean_path_m,
            r.outcomes.len()
        );
    }
    s
}

#[derive(Serialize)]
struct EpisodeRow<'a> {
    planner: &'a str,
    episode: usize,
    seed: u64,
    k: f64,
    success: bool,
    path_length: f64,
    shortest_length: f64,
    steps: usize,
    fallbacks: usize,
}

pub fn episodes_jsonl(report: &BenchmarkReport) -> String {
    let mut s = String::new();
    for r in &report.results {
        for (info, o) in report.episodes.iter().zip(&r.outcomes) {
            let row = EpisodeRow {
                planner: r.planner.as_str(),
                episode: info.index,
                seed: info.seed,
                k: info.k,
                success: o.success,
                path_length: o.path_length,
                shortest_length: o.shortest_length,
                steps: o.steps,
                fallbacks: o.log.records.iter().filter(|x| x.fallback).count(),
            };
            s.push_str(&serde_json::to_string(&row).expect("rows serialise"));
            s.push('\n');
        }
    }
    s
}

/// Bar chart of SPL per planner; reference values are drawn as ticks.
pub fn spl_svg(report: &BenchmarkReport) -> String {
    let (bar_w, gap, height, top, left) = (60.0, 30.0, 240.0, 30.0, 50.0);
    let width = left + report.results.len() as f64 * (bar_w + gap) + gap;
    let total_h = top + height + 40.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" viewBox="0 0 {width} {total_h}">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-family="sans-serif" font-size="14">SPL per planner</text>"#);
    let base = top + height;
    let _ = writeln!(s, r#"<line x1="{left}" y1="{base}" x2="{width}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="black"/>"#);
    for tick in 0..=4 {
        let v = tick as f64 * 0.25;
        let y = base - v * height;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.2}</text>"#,
            left - 4.0,
            y + 3.0
        );
    }
    for (i, r) in report.results.iter().enumerate() {
        let x = left + gap + i as f64 * (bar_w + gap);
        let h = r.spl.clamp(0.0, 1.0) * height;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.1}" y="{:.1}" width="{bar_w}" height="{h:.1}" fill="#4a7ab5"/>"##,
            base - h
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{:.3}</text>"#,
            x + bar_w / 2.0,
            base - h - 4.0,
            r.spl
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            x + bar_w / 2.0,
            base + 16.0,
            r.planner.as_str()
        );
        if let Some(refv) = r.planner.reference_spl() {
            let y = base - refv * height;
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="red" stroke-dasharray="4 2"/>"#,
                x + bar_w
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Write `summary.csv`, `episodes.jsonl` and `spl.svg` into `dir`.
pub fn export(report: &BenchmarkReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("summary.csv", summary_csv(report)),
        ("episodes.jsonl", episodes_jsonl(report)),
        ("spl.svg", spl_svg(report)),
    ];
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::EpisodeLog;

    fn outcome(success: bool, p: f64, l: f64) -> EpisodeOutcome {
        EpisodeOutcome {
            success,
            path_length: p,
            shortest_length: l,
            steps: 1,
            log: EpisodeLog::default(),
        }
    }

    #[test]
    fn spl_hand_cases() {
        assert_eq!(spl(&[outcome(true, 7.0, 7.0)]).unwrap(), 1.0);
        assert_eq!(spl(&[outcome(true, 20.0, 10.0)]).unwrap(), 0.5);
        assert_eq!(spl(&[outcome(true, 3.0, 3.0), outcome(false, 9.0, 4.0)]).unwrap(), 0.5);
        assert_eq!(spl(&[outcome(true, 0.0, 1.2)]).unwrap(), 1.0);
        assert!(matches!(spl(&[]), Err(Error::EmptyOutcomes)));
        assert!(spl(&[outcome(true, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn planner_names_round_trip() {
        for k in PlannerKind::ALL {
            assert_eq!(k.as_str().parse::<PlannerKind>().unwrap(), k);
        }
        assert!("dqn".parse::<PlannerKind>().is_err());
    }

    #[test]
    fn export_files() {
        let report = BenchmarkReport {
            episodes: vec![EpisodeInfo { index: 0, seed: 1, k: 2.0 }],
            results: vec![
                summarize(PlannerKind::Rf, vec![outcome(true, 2.0, 1.0)]).unwrap(),
                summarize(PlannerKind::Ours, vec![outcome(true, 1.0, 1.0)]).unwrap(),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        export(&report, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().nth(1).unwrap(), "rf,0.500000,1.000000,2.000000,1");
        export(&report, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("summary.csv")).unwrap(), csv);
        let svg = fs::read_to_string(dir.path().join("spl.svg")).unwrap();
        assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 2);
        assert_eq!(fs::read_to_string(dir.path().join("episodes.jsonl")).unwrap().lines().count(), 2);
    }
}
