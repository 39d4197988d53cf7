//! Independent reference implementations for the integration tests.
//!
//! Nothing here calls the rasterizer or the cost model of the library; cells
//! are found by intersecting the segment with every candidate cell box.

#![allow(dead_code)]

use swarmplan::geom::{Cell, Vec3};
use swarmplan::grid_world::{Occupancy, VoxelGrid, TRUNCATION_BACKOFF};
use swarmplan::planner::PlannerConfig;
use swarmplan::rng::Rng;

use rand::Rng as _;

/// Parameter interval `[t0, t1]` (clipped to `[0, 1]`) over which `a -> b`
/// lies inside the unit box of `cell`, if any.
pub fn box_interval(a: Vec3, b: Vec3, cell: Cell) -> Option<(f64, f64)> {
    let d = b - a;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ax in 0..3 {
        let lo_plane = cell[ax] as f64;
        let hi_plane = lo_plane + 1.0;
        if d[ax] == 0.0 {
            if a[ax] < lo_plane || a[ax] >= hi_plane {
                return None;
            }
            continue;
        }
        let (near, far) = if d[ax] > 0.0 {
            (lo_plane, hi_plane)
        } else {
            (hi_plane, lo_plane)
        };
        lo = lo.max((near - a[ax]) / d[ax]);
        hi = hi.min((far - a[ax]) / d[ax]);
    }
    let (t0, t1) = (lo.max(0.0), hi.min(1.0));
    (t1 > t0 || (t0 == 0.0 && a.cell() == cell)).then_some((t0, t1))
}

fn bounding_cells(a: Vec3, b: Vec3) -> impl Iterator<Item = Cell> {
    let (ca, cb) = (a.cell(), b.cell());
    let lo = [ca[0].min(cb[0]), ca[1].min(cb[1]), ca[2].min(cb[2])];
    let hi = [ca[0].max(cb[0]), ca[1].max(cb[1]), ca[2].max(cb[2])];
    (lo[0]..=hi[0]).flat_map(move |x| (lo[1]..=hi[1]).flat_map(move |y| (lo[2]..=hi[2]).map(move |z| [x, y, z])))
}

/// Cells crossed by the segment, ordered by entry parameter, with their intervals.
pub fn crossed_cells(a: Vec3, b: Vec3) -> Vec<(Cell, f64, f64)> {
    let mut out: Vec<(Cell, f64, f64)> = bounding_cells(a, b)
        .filter_map(|c| box_interval(a, b, c).map(|(t0, t1)| (c, t0, t1)))
        .collect();
    out.sort_by(|x, y| x.1.total_cmp(&y.1));
    out
}

/// Whether every crossed cell holds at least `min_len` of the segment, so
/// that point marching with a finer step cannot skip one.
pub fn resolvable(a: Vec3, b: Vec3, min_len: f64) -> bool {
    let len = a.distance(b);
    crossed_cells(a, b)
        .iter()
        .all(|&(_, t0, t1)| (t1 - t0) * len >= min_len)
}

/// Distinct cells met by points spaced `step` apart along the segment.
pub fn march_cells(a: Vec3, b: Vec3, step: f64) -> Vec<Cell> {
    let len = a.distance(b);
    let n = (len / step).ceil() as usize;
    let mut out: Vec<Cell> = Vec::new();
    for k in 0..=n {
        let t = if n == 0 { 0.0 } else { (k as f64 * step / len).min(1.0) };
        let c = (a + (b - a) * t).cell();
        if out.last() != Some(&c) {
            out.push(c);
        }
    }
    out
}

/// First occupied cell crossed by the segment and its entry parameter.
pub fn first_blocked<O: Occupancy>(occ: &O, a: Vec3, b: Vec3) -> Option<(Cell, f64)> {
    crossed_cells(a, b)
        .into_iter()
        .find(|(c, _, _)| occ.occupied(*c))
        .map(|(c, t0, _)| (c, t0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCost {
    pub length: f64,
    pub turns: u32,
    pub left: f64,
    pub total: f64,
}

/// Path cost computed from scratch: truncate at the first blocked cell,
/// sum segment lengths, count heading changes above the threshold through
/// cosines and add the weighted distance still to go.
pub fn oracle_cost<O: Occupancy>(occ: &O, points: &[Vec3], target: Vec3, cfg: &PlannerConfig) -> OracleCost {
    let mut kept = vec![points[0]];
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        match first_blocked(occ, a, b) {
            None => kept.push(b),
            Some((_, t)) => {
                let len = a.distance(b);
                if t > 0.0 && len > 0.0 {
                    kept.push(a.lerp(b, (t - TRUNCATION_BACKOFF / len).max(0.0)));
                }
                break;
            }
        }
    }
    let mut length = 0.0;
    for w in kept.windows(2) {
        let d = w[1] - w[0];
        length += (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
    }
    let headings: Vec<Vec3> = kept
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.norm() > 0.0)
        .collect();
    let cos_limit = cfg.turn_threshold.cos();
    let turns = headings
        .windows(2)
        .filter(|h| h[0].dot(h[1]) / (h[0].norm() * h[1].norm()) < cos_limit)
        .count() as u32;
    let gap = kept.last().unwrap().distance(target);
    let left = if gap <= cfg.capture_radius { 0.0 } else { gap };
    let w = &cfg.weights;
    OracleCost {
        length,
        turns,
        left,
        total: w.k1 * length + w.k2 * turns as f64 + w.k3 * left,
    }
}

pub fn random_point(rng: &mut Rng, dims: [usize; 3]) -> Vec3 {
    Vec3::new(
        rng.random_range(0.0..dims[0] as f64),
        rng.random_range(0.0..dims[1] as f64),
        rng.random_range(0.0..dims[2] as f64),
    )
}

/// Each cell occupied independently with probability `p`.
pub fn random_grid(rng: &mut Rng, dims: [usize; 3], p: f64) -> VoxelGrid {
    let mut g = VoxelGrid::empty(dims);
    for x in 0..dims[0] as i64 {
        for y in 0..dims[1] as i64 {
            for z in 0..dims[2] as i64 {
                if rng.random_bool(p) {
                    g.set([x, y, z], true);
                }
            }
        }
    }
    g
}

/// Level-`k` occupancy by scanning every fine cell of each coarse block.
pub fn brute_force_level(base: &VoxelGrid, k: usize) -> VoxelGrid {
    let f = 1i64 << k;
    let dims = base.dims().map(|d| d >> k);
    let mut out = VoxelGrid::empty(dims);
    for x in 0..dims[0] as i64 {
        for y in 0..dims[1] as i64 {
            for z in 0..dims[2] as i64 {
                let mut any = false;
                for dx in 0..f {
                    for dy in 0..f {
                        for dz in 0..f {
                            any |= base.get([x * f + dx, y * f + dy, z * f + dz]);
                        }
                    }
                }
                out.set([x, y, z], any);
            }
        }
    }
    out
}

/// Chi-square upper tail for `counts` against `probs`.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
