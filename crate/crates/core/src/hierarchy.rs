//! Multiresolution planning over a conservative occupancy pyramid.
//!
//! Level 0 is the static occupancy of the map; each further level halves
//! every axis and marks a cell occupied when any of its eight children is.
//! A path that is free at a coarse level is therefore free at every finer
//! level. Planning starts at the coarsest level whose cells around the start
//! and the goal are free, then each finer level searches only inside a
//! corridor around the previous level's best path. Moving obstacles are not
//! coarsened; they only appear in the final full-resolution search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Cell, Vec3};
use crate::grid_world::{GridMap, Occupancy, VoxelGrid};
use crate::optim::{run_optimizer, Algorithm, Domain, SearchBox};
use crate::planner::{
    candidate_box, evaluate_path, polyline, seed_candidates, straight_line, Candidate, PathEval, PlannerConfig,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    pub level_count: usize,
    /// Chebyshev inflation of each corridor, in cells of the corridor's level.
    pub corridor_radius: i64,
    /// Share of the flat iteration budget per level, coarsest first.
    pub budget_split: Vec<f64>,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            level_count: 3,
            corridor_radius: 2,
            budget_split: vec![0.25, 0.25, 0.5],
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.level_count == 0 || self.corridor_radius < 1 {
            return Err(Error::InvalidConfig(
                "hierarchy needs level_count >= 1 and corridor_radius >= 1".into(),
            ));
        }
        if self.budget_split.len() != self.level_count || self.budget_split.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "budget_split needs {} positive entries",
                self.level_count
            )));
        }
        Ok(())
    }

    /// Iterations per level for the `used` finest levels, coarsest first.
    pub fn level_iterations(&self, used: usize, total: usize) -> Vec<usize> {
        let shares = &self.budget_split[self.budget_split.len() - used..];
        let sum: f64 = shares.iter().sum();
        shares
            .iter()
            .map(|s| ((s / sum * total as f64).round() as usize).max(1))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<VoxelGrid>,
}

impl Pyramid {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Whether the level-`k` ancestor of the level-0 cell is free.
    pub fn free_at(&self, k: usize, level0_cell: Cell) -> bool {
        !self.levels[k].get(ancestor(level0_cell, k))
    }
}

/// Index of the level-`k` cell containing a level-0 cell.
pub fn ancestor(c: Cell, k: usize) -> Cell {
    [c[0] >> k, c[1] >> k, c[2] >> k]
}

/// OR-reduce every 2 x 2 x 2 block.
pub fn downsample(grid: &VoxelGrid) -> VoxelGrid {
    let d = grid.dims();
    let mut out = VoxelGrid::empty([d[0] / 2, d[1] / 2, d[2] / 2]);
    for c in grid.iter_cells() {
        if grid.get(c) {
            out.set(ancestor(c, 1), true);
        }
    }
    out
}

pub fn build_pyramid(base: &VoxelGrid, level_count: usize) -> Result<Pyramid> {
    if level_count == 0 {
        return Err(Error::InvalidConfig("pyramid needs at least one level".into()));
    }
    let factor = 1usize << (level_count - 1);
    if base.dims().iter().any(|d| d % factor != 0 || *d < factor) {
        return Err(Error::InvalidConfig(format!(
            "dims {:?} are not divisible by 2^{}",
            base.dims(),
            level_count - 1
        )));
    }
    let mut levels = vec![base.clone()];
    for _ in 1..level_count {
        let next = downsample(levels.last().unwrap());
        levels.push(next);
    }
    Ok(Pyramid { levels })
}

/// Pyramid over the map's static layers. Moving obstacles are left out.
pub fn build_map_pyramid(map: &GridMap, level_count: usize) -> Result<Pyramid> {
    build_pyramid(map.static_occupancy(), level_count)
}

/// Cells of a coarse path at one level, inflated by a Chebyshev radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    pub level: usize,
    pub cells: Vec<Cell>,
    pub radius: i64,
    allowed: VoxelGrid,
}

impl Corridor {
    pub fn new(level: usize, level_dims: [usize; 3], cells: Vec<Cell>, radius: i64) -> Self {
        let mut allowed = VoxelGrid::empty(level_dims);
        for c in &cells {
            for dz in -radius..=radius {
                for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        let n = [c[0] + dx, c[1] + dy, c[2] + dz];
                        if allowed.in_bounds(n) {
                            allowed.set(n, true);
                        }
                    }
                }
            }
        }
        Corridor {
            level,
            cells,
            radius,
            allowed,
        }
    }

    /// Corridor around a polyline given in level-0 coordinates.
    pub fn from_path(points: &[Vec3], level: usize, level_dims: [usize; 3], radius: i64) -> Self {
        let inv = 1.0 / (1u64 << level) as f64;
        let mut cells: Vec<Cell> = Vec::new();
        for w in points.windows(2) {
            crate::grid_world::walk_segment(w[0] * inv, w[1] * inv, |c, _| {
                if cells.last() != Some(&c) {
                    cells.push(c);
                }
                true
            });
        }
        if points.len() == 1 {
            cells.push((points[0] * inv).cell());
        }
        Corridor::new(level, level_dims, cells, radius)
    }

    /// Whether a cell of level `k <= self.level` lies inside the corridor.
    pub fn allows(&self, cell: Cell, k: usize) -> bool {
        let a = ancestor(cell, self.level - k);
        self.allowed.in_bounds(a) && self.allowed.get(a)
    }

    /// Level-`level` cells inside the inflated corridor.
    pub fn allowed_cells(&self) -> Vec<Cell> {
        self.allowed.iter_cells().filter(|&c| self.allowed.get(c)).collect()
    }

    pub fn cell_size(&self) -> f64 {
        (1u64 << self.level) as f64
    }
}

/// True when the point's cell is within the corridor radius of a corridor cell.
pub fn corridor_contains(c: &Corridor, point: Vec3) -> bool {
    c.allows(point.cell(), 0)
}

/// Blocks everything outside a corridor on top of an inner occupancy.
pub struct Confined<'a, O: ?Sized> {
    pub inner: &'a O,
    pub corridor: &'a Corridor,
    pub level: usize,
}

impl<O: Occupancy + ?Sized> Occupancy for Confined<'_, O> {
    fn dims(&self) -> [usize; 3] {
        self.inner.dims()
    }

    fn occupied(&self, cell: Cell) -> bool {
        self.inner.occupied(cell) || !self.corridor.allows(cell, self.level)
    }
}

/// Candidate vectors whose waypoints must lie inside a corridor.
pub struct CorridorDomain<'a> {
    bounds: SearchBox,
    corridor: &'a Corridor,
    boxes: Vec<([f64; 3], [f64; 3])>,
}

impl<'a> CorridorDomain<'a> {
    pub fn new(corridor: &'a Corridor, full: &SearchBox) -> Self {
        let size = corridor.cell_size();
        let inset = 1e-6;
        let boxes: Vec<([f64; 3], [f64; 3])> = corridor
            .allowed_cells()
            .into_iter()
            .map(|c| {
                let lo = [c[0] as f64 * size, c[1] as f64 * size, c[2] as f64 * size];
                (lo, [lo[0] + size - inset, lo[1] + size - inset, lo[2] + size - inset])
            })
            .collect();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for (bl, bh) in &boxes {
            for a in 0..3 {
                lo[a] = lo[a].min(bl[a]);
                hi[a] = hi[a].max(bh[a]);
            }
        }
        let mut bounds = full.clone();
        for d in 0..bounds.dim() {
            let a = d % 3;
            bounds.lo[d] = bounds.lo[d].max(lo[a]);
            bounds.hi[d] = bounds.hi[d].min(hi[a]).max(bounds.lo[d]);
        }
        CorridorDomain {
            bounds,
            corridor,
            boxes,
        }
    }
}

impl Domain for CorridorDomain<'_> {
    fn bounds(&self) -> &SearchBox {
        &self.bounds
    }

    fn project(&self, x: &mut [f64]) {
        self.bounds.clamp(x);
        for w in x.chunks_exact_mut(3) {
            let p = Vec3::new(w[0], w[1], w[2]);
            if corridor_contains(self.corridor, p) {
                continue;
            }
            let mut best = (f64::INFINITY, p);
            for (lo, hi) in &self.boxes {
                let q = Vec3::new(
                    p.x.clamp(lo[0], hi[0]),
                    p.y.clamp(lo[1], hi[1]),
                    p.z.clamp(lo[2], hi[2]),
                );
                let d = (q - p).norm_sq();
                if d < best.0 {
                    best = (d, q);
                }
            }
            w.copy_from_slice(&best.1.to_array());
        }
    }
}

#[derive(Debug, Clone)]
pub struct HierarchicalPlan {
    pub candidate: Candidate,
    /// Evaluation of the returned candidate on the full-resolution map.
    pub eval: PathEval,
    /// Corridor that confined the full-resolution search.
    pub corridor: Option<Corridor>,
    /// Set when the coarse search could not be used and the plan was made
    /// directly at full resolution.
    pub fallback: bool,
    /// Objective evaluations per level searched, coarsest first.
    pub evaluations_per_level: Vec<u64>,
    pub evaluations: u64,
    /// Cells rasterized across all evaluations (the final one included).
    pub cells_checked: u64,
}

/// Coarse-to-fine search with `base` as the optimizer at every level.
#[allow(clippy::too_many_arguments)]
pub fn plan_hierarchical(
    base: Algorithm,
    pyramid: &Pyramid,
    map: &GridMap,
    start: Vec3,
    target: Vec3,
    cfg: &PlannerConfig,
    seed: u64,
    warm: &[Candidate],
) -> Result<HierarchicalPlan> {
    cfg.hierarchy.validate()?;
    let levels = pyramid.level_count().min(cfg.hierarchy.level_count);
    let (sc, tc) = (start.cell(), target.cell());
    let top = (0..levels)
        .rev()
        .find(|&k| pyramid.free_at(k, sc) && pyramid.free_at(k, tc))
        .unwrap_or(0);
    let total_iters = cfg.optimizer.iterations(base);
    let full_box = candidate_box(map.dims, cfg.waypoints)?;
    let straight = straight_line(start, target, cfg.waypoints);
    let population = cfg.optimizer.initial_population(base);
    let warm_vecs = seed_candidates(start, target, cfg, population, warm, seed);

    if top == 0 {
        return flat_fallback(base, map, start, target, cfg, seed, &warm_vecs, total_iters);
    }

    let iters = cfg.hierarchy.level_iterations(top + 1, total_iters);
    let mut corridor: Option<Corridor> = None;
    let mut evaluations_per_level = Vec::new();
    let mut cells_checked = 0u64;
    let mut best_vec = straight.to_vector();

    for (step, k) in (0..=top).rev().enumerate() {
        let scale = (1u64 << k) as f64;
        let counter = std::sync::atomic::AtomicU64::new(0);
        let level_seed = rng::derive_seed(seed, &[rng::label::PLAN, k as u64]);
        let outcome = {
            let eval_at = |x: &[f64]| -> PathEval {
                let pts = polyline(start, &Candidate::from_vector(x), target);
                match (&corridor, k) {
                    (None, 0) => evaluate_path(map, 1.0, &pts, target, cfg),
                    (None, _) => evaluate_path(&pyramid.levels[k], scale, &pts, target, cfg),
                    (Some(c), 0) => {
                        let occ = Confined {
                            inner: map,
                            corridor: c,
                            level: 0,
                        };
                        evaluate_path(&occ, 1.0, &pts, target, cfg)
                    }
                    (Some(c), _) => {
                        let occ = Confined {
                            inner: &pyramid.levels[k],
                            corridor: c,
                            level: k,
                        };
                        evaluate_path(&occ, scale, &pts, target, cfg)
                    }
                }
            };
            let objective = |x: &[f64]| {
                let e = eval_at(x);
                counter.fetch_add(e.cells_checked, std::sync::atomic::Ordering::Relaxed);
                e.objective()
            };
            let mut warm_level = vec![best_vec.clone()];
            warm_level.extend(warm_vecs.iter().cloned());
            let outcome = match &corridor {
                None => run_optimizer(
                    base,
                    &cfg.optimizer,
                    &objective,
                    &full_box,
                    iters[step],
                    level_seed,
                    &warm_level,
                )?,
                Some(c) => {
                    let domain = CorridorDomain::new(c, &full_box);
                    run_optimizer(
                        base,
                        &cfg.optimizer,
                        &objective,
                        &domain,
                        iters[step],
                        level_seed,
                        &warm_level,
                    )?
                }
            };
            let best_eval = eval_at(&outcome.best_x);
            cells_checked += best_eval.cells_checked;
            (outcome, best_eval)
        };
        let (outcome, best_eval) = outcome;
        cells_checked += counter.into_inner();
        evaluations_per_level.push(outcome.evaluations);

        if step == 0 && best_eval.is_blocked() {
            // Seed the flat search with the coarse best.
            let mut fb_warm = vec![outcome.best_x.clone()];
            fb_warm.extend(warm_vecs.iter().cloned());
            fb_warm.truncate(population.div_ceil(2).max(1));
            let mut fb = flat_fallback(base, map, start, target, cfg, seed, &fb_warm, total_iters)?;
            fb.evaluations_per_level.insert(0, outcome.evaluations);
            fb.evaluations += outcome.evaluations;
            fb.cells_checked += cells_checked;
            return Ok(fb);
        }
        best_vec = outcome.best_x;
        if k > 0 {
            let level_dims = pyramid.levels[k].dims();
            corridor = Some(Corridor::from_path(
                &best_eval.executable,
                k,
                level_dims,
                cfg.hierarchy.corridor_radius,
            ));
        }
    }

    let candidate = Candidate::from_vector(&best_vec);
    let pts = polyline(start, &candidate, target);
    let eval = evaluate_path(map, 1.0, &pts, target, cfg);
    cells_checked += eval.cells_checked;
    Ok(HierarchicalPlan {
        candidate,
        eval,
        corridor,
        fallback: false,
        evaluations: evaluations_per_level.iter().sum(),
        evaluations_per_level,
        cells_checked,
    })
}

#[allow(clippy::too_many_arguments)]
fn flat_fallback(
    base: Algorithm,
    map: &GridMap,
    start: Vec3,
    target: Vec3,
    cfg: &PlannerConfig,
    seed: u64,
    warm: &[Vec<f64>],
    iters: usize,
) -> Result<HierarchicalPlan> {
    let flat = crate::planner::plan_flat(base, map, start, target, cfg, iters, seed, warm)?;
    Ok(HierarchicalPlan {
        candidate: flat.candidate,
        eval: flat.eval,
        corridor: None,
        fallback: true,
        evaluations_per_level: vec![flat.evaluations],
        evaluations: flat.evaluations,
        cells_checked: flat.cells_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_world::Cuboid;

    #[test]
    fn empty_map_pyramid_is_empty() {
        let p = build_pyramid(&VoxelGrid::empty([16, 16, 16]), 3).unwrap();
        assert_eq!(p.levels.len(), 3);
        assert_eq!(p.levels[2].dims(), [4, 4, 4]);
        assert!(p.levels.iter().all(|l| l.count_occupied() == 0));
    }

    #[test]
    fn single_cell_has_one_ancestor_per_level() {
        let mut g = VoxelGrid::empty([16, 16, 16]);
        g.set([5, 9, 14], true);
        let p = build_pyramid(&g, 4).unwrap();
        for (k, l) in p.levels.iter().enumerate() {
            assert_eq!(l.count_occupied(), 1);
            assert!(l.get(ancestor([5, 9, 14], k)));
        }
    }

    #[test]
    fn rejects_indivisible_dims() {
        assert!(build_pyramid(&VoxelGrid::empty([8, 8, 8]), 5).is_err());
        assert!(build_pyramid(&VoxelGrid::empty([8, 8, 8]), 0).is_err());
    }

    #[test]
    fn corridor_membership() {
        let c = Corridor::new(1, [8, 8, 8], vec![[3, 3, 3]], 2);
        // Level-1 cell (3,3,3) covers level-0 [6, 8).
        assert!(corridor_contains(&c, Vec3::new(6.5, 7.5, 6.0)));
        // Chebyshev distance 2 at level 1 is inside, 3 is outside.
        assert!(corridor_contains(&c, Vec3::new(2.5, 6.5, 6.5)));
        assert!(!corridor_contains(&c, Vec3::new(0.5, 6.5, 6.5)));
    }

    #[test]
    fn projection_lands_inside_corridor() {
        let c = Corridor::new(1, [8, 8, 8], vec![[1, 1, 1], [2, 1, 1]], 1);
        let full = SearchBox::cube(6, 0.5, 15.5).unwrap();
        let d = CorridorDomain::new(&c, &full);
        let mut x = vec![15.0, 15.0, 15.0, 0.5, 3.0, 3.0];
        d.project(&mut x);
        for w in x.chunks(3) {
            assert!(corridor_contains(&c, Vec3::new(w[0], w[1], w[2])));
        }
    }

    #[test]
    fn level_budget_split() {
        let h = HierarchyConfig::default();
        assert_eq!(h.level_iterations(3, 40), vec![10, 10, 20]);
        assert_eq!(h.level_iterations(2, 40), vec![13, 27]);
        assert!(HierarchyConfig {
            budget_split: vec![1.0],
            ..h
        }
        .validate()
        .is_err());
    }

    #[test]
    fn conservative_union_on_wall() {
        let g = {
            let mut g = VoxelGrid::empty([16, 16, 16]);
            g.fill_cuboid(&Cuboid::new([7, 0, 0], [7, 15, 15]));
            g
        };
        let p = build_pyramid(&g, 3).unwrap();
        assert!(p.levels[1].get([3, 0, 0]));
        assert!(!p.levels[1].get([4, 0, 0]));
        assert!(p.levels[2].get([1, 2, 2]));
    }
}
