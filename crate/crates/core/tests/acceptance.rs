//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any of them fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use alcon::config::RunConfig;
use alcon::eval::{bench_specs, export, run_prepared, spl, BenchmarkReport, PlannerKind};
use alcon::exec::Exec;
use alcon::gridmap::{CellState, GridGeometry, OccupancyGrid, WorldPoint};
use alcon::neural::numeric_gradient;
use alcon::planners::{astar, detect_frontiers, dijkstra, rf_or_random_free, SubgoalSource};
use alcon::rlp::{alc_on_fuse, encode_dataset, monitor_fuse, train_encoded, DualPlanner, FusionConfig, TrainReport};
use alcon::seed;
use alcon::sim::{reward_at, EpisodeLog, EpisodeOutcome, PreparedEpisode};
use alcon::worldgen::{gen_dataset, read_dataset, write_dataset, WorkspaceParams};
use rand::Rng;

struct Verdicts {
    failed: Vec<String>,
}

impl Verdicts {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name.to_string());
        }
    }
}

fn minutes(d: Duration) -> f64 {
    d.as_secs_f64() / 60.0
}

fn reward_oracle() -> (bool, String) {
    let mut worst = 0usize;
    for i in 0..100u64 {
        let mut rng = seed::stream(11, "reward-pair", i);
        let w = rng.gen_range(5..90);
        let h = rng.gen_range(5..90);
        let res = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
        let origin = WorldPoint::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let g = GridGeometry::new(w, h, res, origin).unwrap();
        let score = common::random_scores(i, g, rng.gen_range(0.05..1.0));
        let (lo, hi) = g.extent();
        let p = WorldPoint::new(rng.gen_range(lo.x - 1.0..hi.x + 1.0), rng.gen_range(lo.y - 1.0..hi.y + 1.0));
        let r = if i % 4 == 0 { 2.0 } else { rng.gen_range(0.0..3.0) };
        if reward_at(p, &score, r, 0.001) != common::brute_reward(p, &score, r, 0.001) {
            worst += 1;
        }
    }
    (worst == 0, format!("{worst} of 100 pairs differ from brute-force enumeration"))
}

fn search_oracle() -> (bool, String) {
    let mut pairs = 0;
    let mut mismatches = 0;
    for i in 0..50u64 {
        let mut rng = seed::stream(12, "search-grid", i);
        let w = rng.gen_range(2..=20);
        let h = rng.gen_range(2..=20);
        let grid = common::random_grid(i, w, h, rng.gen_range(0.0..0.4));
        let free = grid.free_cells();
        if free.is_empty() {
            continue;
        }
        for _ in 0..10 {
            let a = free[rng.gen_range(0..free.len())];
            let b = free[rng.gen_range(0..free.len())];
            let oracle = common::bellman_ford(&grid, a, b);
            for found in [dijkstra(&grid, a, b, false), astar(&grid, a, b, false)] {
                pairs += 1;
                let got = found.map(|p| (p.steps.straight, p.steps.diagonal));
                if got != oracle {
                    mismatches += 1;
                }
            }
        }
    }
    (
        mismatches == 0 && pairs >= 500,
        format!("{mismatches} mismatches over {pairs} searches on 50 grids up to 20x20"),
    )
}

/// Every logged step is a single 8-neighbour move onto a cell that is free
/// in the true world. Sensing copies the world, so such a cell can never be
/// an observed obstacle.
fn replan_safety(prepared: &[PreparedEpisode], report: &BenchmarkReport) -> (bool, String) {
    let mut steps = 0usize;
    let mut bad = Vec::new();
    let episodes = prepared.len().min(100);
    for r in &report.results {
        for (i, (ep, o)) in prepared.iter().zip(&r.outcomes).take(episodes).enumerate() {
            let world = &ep.spec.workspace;
            let g = world.geometry();
            let mut prev = g.world_to_cell(ep.spec.start.position());
            for rec in &o.log.records {
                for p in &rec.path {
                    let cell = g.world_to_cell(WorldPoint::new(p[0], p[1]));
                    let ok = match (prev, cell) {
                        (Some(a), Some(b)) => {
                            a.row.abs_diff(b.row) <= 1
                                && a.col.abs_diff(b.col) <= 1
                                && world.get(b) == CellState::Free
                        }
                        _ => false,
                    };
                    if !ok {
                        bad.push(format!("{}#{i}", r.planner.as_str()));
                    }
                    steps += 1;
                    prev = cell;
                }
            }
        }
    }
    bad.dedup();
    (
        bad.is_empty() && steps > 0,
        format!(
            "{} bad episodes, {steps} logged positions over {episodes} episodes x {} planners",
            bad.len(),
            report.results.len()
        ),
    )
}

fn gradient_check() -> (bool, String) {
    let mut worst = 0.0f64;
    let seeds = 24u64;
    for s in 0..seeds {
        let mut rng = seed::stream(s, "accept-arch", 0);
        let head = if s % 2 == 0 { 2 } else { 1 };
        let arch = common::random_arch(&mut rng, head);
        let side = arch.input_side;
        let model = common::random_model(arch, &mut rng);
        let x: Vec<f32> = (0..side * side).map(|_| rng.gen::<f32>()).collect();
        let target: Vec<f64> = (0..head).map(|_| rng.gen::<f64>()).collect();
        let trace = model.forward_trace(&x).unwrap();
        let g_out: Vec<f64> = trace.output().iter().zip(&target).map(|(a, b)| a - b).collect();
        let analytic = model.backward(&trace, &g_out).unwrap();
        let loss = |y: &[f64]| 0.5 * y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let numeric = numeric_gradient(&model, &x, loss, 1e-6).unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(common::rel_err(*a, *n));
        }
    }
    (worst < 1e-3, format!("max relative error {worst:.3e} over {seeds} random networks"))
}

fn close(a: WorldPoint, b: WorldPoint) -> bool {
    (a.x - b.x).abs() <= 1e-12 && (a.y - b.y).abs() <= 1e-12
}

fn fusion_exactness() -> (bool, String) {
    let fusion = FusionConfig::default();
    let (w_m, g_m) = (0.7, 5.0);
    let mut errors = 0;
    let mut fired = 0;
    let mut rng = seed::stream(13, "monitor", 0);
    for i in 0..1000 {
        let mut p_m = WorldPoint::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0));
        let p_i = match i % 10 {
            0 => p_m,
            1 => {
                // Exactly on the threshold, with coordinates that subtract exactly.
                p_m = WorldPoint::new(p_m.x.round(), p_m.y.round());
                WorldPoint::new(p_m.x + g_m, p_m.y)
            }
            _ => {
                let d = rng.gen_range(0.0..2.0 * g_m);
                let t = rng.gen_range(-3.2..3.2f64);
                WorldPoint::new(p_m.x + d * t.cos(), p_m.y + d * t.sin())
            }
        };
        let dist = ((p_m.x - p_i.x).powi(2) + (p_m.y - p_i.y).powi(2)).sqrt();
        let want = if dist > g_m {
            fired += 1;
            WorldPoint::new(p_i.x + w_m * (p_m.x - p_i.x), p_i.y + w_m * (p_m.y - p_i.y))
        } else {
            p_m
        };
        if !close(monitor_fuse(p_m, p_i, fusion.w_m, fusion.g_m), want) {
            errors += 1;
        }
    }

    let g = GridGeometry::new(300, 250, 0.1, WorldPoint::new(-12.0, -8.0)).unwrap();
    let mut observed = OccupancyGrid::filled(g, CellState::Unknown);
    observed.fill_rect(40, 30, 180, 220, CellState::Free);
    observed.fill_rect(100, 90, 110, 200, CellState::Obstacle);
    let frontiers = detect_frontiers(&observed);
    let (lo, hi) = g.extent();
    let mut fallbacks = 0;
    let mut rng = seed::stream(13, "fuse", 0);
    for i in 0..1000u64 {
        let inside = |rng: &mut seed::StreamRng| WorldPoint::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        let outside = WorldPoint::new(hi.x + rng.gen_range(0.01..10.0), lo.y - rng.gen_range(0.0..5.0));
        let a = inside(&mut rng);
        let o = inside(&mut rng);
        let (p_alc, p_on) = match i % 6 {
            0 => (Some(a), None),
            1 => (Some(outside), Some(o)),
            2 => (Some(a), Some(WorldPoint::new(f64::NAN, o.y))),
            3 => (None, Some(outside)),
            4 => (Some(a), Some(a)),
            _ => (Some(a), Some(o)),
        };
        let k: f64 = rng.gen_range(0.0..15.0);
        let w = (1.0 - k / 10.0).max(0.1).min(0.9);
        if fusion.w_alc(k) != w {
            errors += 1;
        }
        let valid = |p: Option<WorldPoint>| p.filter(|q| q.x >= lo.x && q.x <= hi.x && q.y >= lo.y && q.y <= hi.y);
        let fused = match (valid(p_alc), valid(p_on)) {
            (Some(a), Some(o)) => Some(WorldPoint::new(o.x + w * (a.x - o.x), o.y + w * (a.y - o.y))),
            (Some(a), None) => Some(a),
            (None, Some(o)) => Some(o),
            (None, None) => None,
        };
        let mut stream = seed::stream(14, "fuse-rf", i);
        let got = alc_on_fuse(p_alc, p_on, fusion.w_alc(k), &frontiers, &observed, &mut stream);
        match fused {
            None => {
                fallbacks += 1;
                let mut same = seed::stream(14, "fuse-rf", i);
                let rf = rf_or_random_free(&observed, &frontiers, &mut same);
                if got.point != rf.point || got.source != SubgoalSource::Rf {
                    errors += 1;
                }
            }
            Some(p) => {
                let best = frontiers
                    .cells
                    .iter()
                    .map(|&c| g.cell_center(c).distance(p))
                    .fold(f64::INFINITY, f64::min);
                let on_frontier = frontiers.cells.iter().any(|&c| g.cell_center(c) == got.point);
                if !on_frontier || (got.point.distance(p) - best).abs() > 1e-12 || got.source != SubgoalSource::Fused {
                    errors += 1;
                }
            }
        }
    }
    (
        errors == 0 && fired > 0 && fired < 1000 && fallbacks > 0,
        format!("{errors} errors; monitor threshold fired {fired}/1000, fusion RF fallbacks {fallbacks}/1000"),
    )
}

fn outcome(success: bool, p: f64, l: f64) -> EpisodeOutcome {
    EpisodeOutcome {
        success,
        path_length: p,
        shortest_length: l,
        steps: 1,
        log: EpisodeLog::default(),
    }
}

fn spl_cases(reports: &[&BenchmarkReport]) -> (bool, String) {
    let hand = spl(&[outcome(true, 7.3, 7.3)]).unwrap() == 1.0
        && spl(&[outcome(true, 20.0, 10.0)]).unwrap() == 0.5
        && spl(&[outcome(true, 4.0, 4.0), outcome(false, 9.0, 3.0)]).unwrap() == 0.5;
    let values: Vec<f64> = reports.iter().flat_map(|r| r.results.iter().map(|x| x.spl)).collect();
    let in_range = values.iter().all(|v| (0.0..=1.0).contains(v));
    (
        hand && in_range,
        format!("hand cases {}, {} benchmark SPL values in [0,1]: {in_range}", if hand { "exact" } else { "wrong" }, values.len()),
    )
}

struct Trained {
    dual: DualPlanner,
    report: TrainReport,
    elapsed: Duration,
}

fn train_full(cfg: &RunConfig) -> Trained {
    let t = Instant::now();
    let entries = gen_dataset(&cfg.dataset, Exec::Sequential).unwrap();
    let encoded = encode_dataset(&entries, &cfg.train, &cfg.fusion, &cfg.sim, Exec::Sequential).unwrap();
    drop(entries);
    let (on, alc): (Vec<_>, Vec<_>) = encoded.into_iter().unzip();
    let (dual, report) = train_encoded(&on, &alc, &cfg.train, Exec::Sequential).unwrap();
    Trained {
        dual,
        report,
        elapsed: t.elapsed(),
    }
}

fn small_world() -> WorkspaceParams {
    WorkspaceParams {
        width: 200,
        height: 200,
        rooms: (3, 5),
        min_room_m: 4.0,
        ..WorkspaceParams::default()
    }
}

/// Dataset files, weights, episode logs and CSV of a reduced pipeline.
fn reduced_pipeline(dir: &Path, exec: Exec) -> BenchmarkReport {
    let mut cfg = RunConfig::default();
    cfg.seed = 2024;
    cfg.workspace = small_world();
    cfg.dataset.count = 40;
    cfg.dataset.base_worlds = 4;
    cfg.train.epochs = 2;
    cfg.train.downsample = 8;
    cfg.bench.episodes = 6;
    cfg.bench.worlds = 3;
    cfg.bench.planners = PlannerKind::ALL.to_vec();
    cfg.sync();

    let data = dir.join("dataset");
    write_dataset(&gen_dataset(&cfg.dataset, exec).unwrap(), &data).unwrap();
    let entries = read_dataset(&data).unwrap();
    let encoded = encode_dataset(&entries, &cfg.train, &cfg.fusion, &cfg.sim, exec).unwrap();
    let (on, alc): (Vec<_>, Vec<_>) = encoded.into_iter().unzip();
    let (dual, report) = train_encoded(&on, &alc, &cfg.train, exec).unwrap();
    dual.save(&dir.join("models")).unwrap();
    fs::write(dir.join("curves.csv"), report.curves_csv()).unwrap();

    let dual = DualPlanner::load(&dir.join("models")).unwrap();
    let specs = bench_specs(&cfg.bench, exec).unwrap();
    let prepared: Vec<PreparedEpisode> = specs
        .into_iter()
        .map(|s| PreparedEpisode::new(s, &cfg.sim).unwrap())
        .collect();
    let bench = run_prepared(&cfg.bench, &prepared, Some(&dual), exec).unwrap();
    export(&bench, &dir.join("bench")).unwrap();
    for r in &bench.results {
        let logs: String = r.outcomes.iter().map(|o| o.log.to_jsonl()).collect();
        fs::write(dir.join(format!("log_{}.jsonl", r.planner.as_str())), logs).unwrap();
    }
    bench
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> (bool, String, BenchmarkReport) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let report = reduced_pipeline(a.path(), Exec::Sequential);
    reduced_pipeline(b.path(), Exec::Parallel);
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let kinds = ["dataset/maps", "dataset/scores", "dataset/meta", "models", "bench/summary.csv", "log_"];
    let covered = kinds
        .iter()
        .all(|k| fa.keys().any(|p| p.to_string_lossy().starts_with(k)));
    (
        differing.is_empty() && covered,
        format!("{} files compared, {} differ {:?}", fa.len(), differing.len(), &differing[..differing.len().min(5)]),
        report,
    )
}

fn main() {
    let mut v = Verdicts { failed: Vec::new() };

    let (ok, d) = reward_oracle();
    v.record("reward oracle", ok, d);
    let (ok, d) = search_oracle();
    v.record("shortest path vs Bellman-Ford", ok, d);
    let (ok, d) = gradient_check();
    v.record("gradient check", ok, d);
    let (ok, d) = fusion_exactness();
    v.record("fusion formula exactness", ok, d);
    let (ok, d, small) = determinism();
    v.record("determinism", ok, d);

    let mut cfg = RunConfig::default();
    cfg.train.downsample = 4;
    cfg.sync();
    let trained = train_full(&cfg);
    let r = &trained.report;
    let ratio = r.heldout_e_on / r.baseline_e_on;
    v.record(
        "training progress",
        ratio < 0.5 && trained.elapsed <= Duration::from_secs(30 * 60),
        format!(
            "held-out E_ON {:.3} m vs uniform baseline {:.3} m (ratio {ratio:.3}), {} samples, {:.1} min",
            r.heldout_e_on,
            r.baseline_e_on,
            r.train_samples + r.heldout_samples,
            minutes(trained.elapsed)
        ),
    );

    let bench_cfg = &cfg.bench;
    let t = Instant::now();
    let specs = bench_specs(bench_cfg, Exec::Sequential).unwrap();
    let prepared: Vec<PreparedEpisode> = specs
        .into_iter()
        .map(|s| PreparedEpisode::new(s, &bench_cfg.sim).unwrap())
        .collect();
    let report = run_prepared(bench_cfg, &prepared, Some(&trained.dual), Exec::Sequential).unwrap();
    let elapsed = t.elapsed();
    let s = |k| report.spl_of(k).unwrap();
    let (ours, alc, on, rf) = (s(PlannerKind::Ours), s(PlannerKind::Alc), s(PlannerKind::On), s(PlannerKind::Rf));
    v.record(
        "planner ordering",
        ours >= alc && ours >= on && on >= rf && ours - rf >= 0.03 && elapsed <= Duration::from_secs(20 * 60),
        format!(
            "SPL ours {ours:.4} alc {alc:.4} on {on:.4} rf {rf:.4}, ours-rf {:.4}, {} episodes in {:.1} min",
            ours - rf,
            prepared.len(),
            minutes(elapsed)
        ),
    );
    let (ok, d) = replan_safety(&prepared, &report);
    v.record("replanning never enters an obstacle", ok, d);
    let (ok, d) = spl_cases(&[&report, &small]);
    v.record("SPL hand cases and range", ok, d);

    if v.failed.is_empty() {
        println!("all acceptance criteria passed");
    } else {
        println!("failed: {}", v.failed.join(", "));
        std::process::exit(1);
    }
}
