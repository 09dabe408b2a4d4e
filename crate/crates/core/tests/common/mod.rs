//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::SQRT_2;

use alcon::neural::{Architecture, Layer, RegressionModel};
use alcon::gridmap::{Cell, CellState, GridGeometry, OccupancyGrid, ScoreMap, WorldPoint};
use alcon::seed;
use rand::Rng;

/// Random grid with roughly `density` obstacles. Origin is offset so that
/// world and cell coordinates differ.
pub fn random_grid(seed_value: u64, w: usize, h: usize, density: f64) -> OccupancyGrid {
    let mut rng = seed::rng(seed_value);
    let g = GridGeometry::new(w, h, 0.1, WorldPoint::new(-0.7, 1.3)).unwrap();
    let cells = (0..w * h)
        .map(|_| {
            if rng.gen::<f64>() < density {
                CellState::Obstacle
            } else {
                CellState::Free
            }
        })
        .collect();
    OccupancyGrid::from_cells(g, cells).unwrap()
}

pub fn random_scores(seed_value: u64, geom: GridGeometry, nonzero: f64) -> ScoreMap {
    let mut rng = seed::rng(seed_value);
    let scores = (0..geom.len())
        .map(|_| if rng.gen::<f64>() < nonzero { rng.gen::<u8>() } else { 0 })
        .collect();
    ScoreMap::from_scores(geom, scores).unwrap()
}

/// Shortest-path cost as (straight, diagonal) move counts, by Bellman-Ford
/// relaxation until nothing changes. Costs are compared as
/// `straight + diagonal * sqrt(2)` in f64; on grids up to 20x20 distinct
/// costs differ by far more than rounding.
pub fn bellman_ford(grid: &OccupancyGrid, a: Cell, b: Cell) -> Option<(u32, u32)> {
    let g = grid.geometry();
    let (w, h) = (g.width as i64, g.height as i64);
    let blocked = |r: i64, c: i64| grid.get(Cell::new(r as usize, c as usize)) == CellState::Obstacle;
    if blocked(a.row as i64, a.col as i64) || blocked(b.row as i64, b.col as i64) {
        return if a == b && !blocked(a.row as i64, a.col as i64) {
            Some((0, 0))
        } else {
            None
        };
    }
    let value = |p: (u32, u32)| p.0 as f64 + p.1 as f64 * SQRT_2;
    let mut dist: Vec<Option<(u32, u32)>> = vec![None; g.len()];
    dist[a.row * g.width + a.col] = Some((0, 0));
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                let Some(d) = dist[(r * w + c) as usize] else { continue };
                if blocked(r, c) {
                    continue;
                }
                for dr in -1..=1i64 {
                    for dc in -1..=1i64 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r + dr, c + dc);
                        if nr < 0 || nc < 0 || nr >= h || nc >= w || blocked(nr, nc) {
                            continue;
                        }
                        let nd = if dr != 0 && dc != 0 { (d.0, d.1 + 1) } else { (d.0 + 1, d.1) };
                        let slot = &mut dist[(nr * w + nc) as usize];
                        if slot.map_or(true, |old| value(nd) < value(old) - 1e-9) {
                            *slot = Some(nd);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist[b.row * g.width + b.col]
}

/// `scale * sum(score/255)` over every cell whose centre is within `radius`
/// of `p`, by a full double loop. The sum is kept in integers and divided
/// once so that it is exact.
pub fn brute_reward(p: WorldPoint, score: &ScoreMap, radius: f64, scale: f64) -> f64 {
    let g = score.geometry();
    let mut sum = 0u64;
    for row in 0..g.height {
        for col in 0..g.width {
            let cx = g.origin.x + (col as f64 + 0.5) * g.resolution;
            let cy = g.origin.y + (row as f64 + 0.5) * g.resolution;
            let d2 = (cx - p.x).powi(2) + (cy - p.y).powi(2);
            if d2 <= radius * radius + 1e-9 {
                sum += score.get(Cell::new(row, col)) as u64;
            }
        }
    }
    scale * (sum as f64 / 255.0)
}

/// Relative error used by the gradient checks, floored so that two
/// near-zero values compare by absolute difference.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Two conv layers and a dense head with random sizes. A two-wide head ends
/// in a sigmoid like the actor.
pub fn random_arch(rng: &mut seed::StreamRng, head: usize) -> Architecture {
    let k1 = rng.gen_range(2..=4);
    let s1 = rng.gen_range(1..=2);
    let k2 = rng.gen_range(2..=3);
    Architecture {
        input_side: rng.gen_range(10..=14),
        layers: vec![
            Layer::Conv {
                out: rng.gen_range(1..=4),
                kernel: k1,
                stride: s1,
            },
            Layer::Relu,
            Layer::Conv {
                out: rng.gen_range(1..=4),
                kernel: k2,
                stride: 2,
            },
            Layer::Relu,
            Layer::Dense { out: head },
        ]
        .into_iter()
        .chain((head == 2).then_some(Layer::Sigmoid))
        .collect(),
    }
}

/// A model for `arch` with every weight and bias drawn from [-0.5, 0.5].
/// Freshly initialised biases are zero, which puts some ReLU inputs exactly
/// on the kink where finite differences and the analytic gradient disagree.
pub fn random_model(arch: Architecture, rng: &mut seed::StreamRng) -> RegressionModel {
    let mut m = RegressionModel::new(arch, 0).unwrap();
    let w = (0..m.weights().len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    m.set_weights(w).unwrap();
    m
}
