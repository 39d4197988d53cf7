//! Candidate encoding, path objective, planning and the episode loop.
//!
//! Every tick the world advances one step, then the robot picks the nearest
//! present goal, (re)plans when it has no usable plan, checks the next
//! `lookahead_ticks` of its plan against the current and extrapolated
//! obstacle positions, resolves conflicts by waiting or replanning, and
//! finally moves `robot_speed` cells along the plan. A move is only taken
//! when every cell it crosses is free in the current snapshot.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cost_model::{count_turns, path_length, residual, total_cost, CostBreakdown, CostComponents, CostWeights};
use crate::error::{Error, Result};
use crate::geom::{cell_box_distance_sq, Cell, Vec3};
use crate::grid_world::{
    build_map, first_collision, is_occupied, step_dynamics, walk_segment, Collision, GridMap, MapConfig, Occupancy,
};
use crate::hierarchy::{build_map_pyramid, plan_hierarchical, Corridor, HierarchyConfig, Pyramid};
use crate::optim::{run_optimizer, Algorithm, OptimizerConfig, SearchBox};
use crate::rng::{self, label};
use crate::smoothing::smooth_or_raw;
use crate::trajectory::{TickRecord, TrajectoryLog};

/// Intermediate waypoints between the robot and its goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub waypoints: Vec<Vec3>,
}

impl Candidate {
    pub fn from_vector(x: &[f64]) -> Self {
        Candidate {
            waypoints: x.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.waypoints.iter().flat_map(|w| w.to_array()).collect()
    }
}

/// `start`, the candidate's waypoints, then `target`.
pub fn polyline(start: Vec3, c: &Candidate, target: Vec3) -> Vec<Vec3> {
    let mut pts = Vec::with_capacity(c.waypoints.len() + 2);
    pts.push(start);
    pts.extend_from_slice(&c.waypoints);
    pts.push(target);
    pts
}

/// Waypoints evenly spaced on the segment from `start` to `target`.
pub fn straight_line(start: Vec3, target: Vec3, n: usize) -> Candidate {
    Candidate {
        waypoints: (1..=n).map(|i| start.lerp(target, i as f64 / (n + 1) as f64)).collect(),
    }
}

/// Initial candidates for a search from `start` to `target`: the straight
/// line, the `extra` candidates, then straight lines with every waypoint
/// jittered by normal noise (sd a quarter of the distance, at least 2
/// cells) until half of the `population` is filled. The rest of the
/// population is drawn uniformly by the optimizer.
pub fn seed_candidates(
    start: Vec3,
    target: Vec3,
    cfg: &PlannerConfig,
    population: usize,
    extra: &[Candidate],
    seed: u64,
) -> Vec<Vec<f64>> {
    let line = straight_line(start, target, cfg.waypoints);
    let mut out = vec![line.to_vector()];
    out.extend(extra.iter().map(Candidate::to_vector));
    let sd = (0.25 * start.distance(target)).max(2.0);
    let normal = Normal::new(0.0, sd).expect("finite positive sd");
    let mut rng = rng::stream(seed, &[label::PLAN, SEEDING_LABEL]);
    while out.len() < population.div_ceil(2) {
        out.push(
            line.waypoints
                .iter()
                .flat_map(|w| w.to_array().map(|c| c + normal.sample(&mut rng)))
                .collect(),
        );
    }
    out
}

const SEEDING_LABEL: u64 = 0x7365_6564;

/// Decision box for `n` waypoints: every coordinate between the centers of
/// the outermost cells.
pub fn candidate_box(dims: [usize; 3], n: usize) -> Result<SearchBox> {
    let mut lo = Vec::with_capacity(3 * n);
    let mut hi = Vec::with_capacity(3 * n);
    for _ in 0..n {
        for d in dims {
            lo.push(0.5);
            hi.push(d as f64 - 0.5);
        }
    }
    SearchBox::new(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Flat,
    Hierarchical,
}

/// An optimizer together with how it is applied (flat or coarse-to-fine).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlannerAlgo {
    pub base: Algorithm,
    pub variant: Variant,
}

impl PlannerAlgo {
    pub const ALL: [PlannerAlgo; 6] = [
        PlannerAlgo::flat(Algorithm::Gso),
        PlannerAlgo::hierarchical(Algorithm::Gso),
        PlannerAlgo::flat(Algorithm::Iwo),
        PlannerAlgo::hierarchical(Algorithm::Iwo),
        PlannerAlgo::flat(Algorithm::Bbo),
        PlannerAlgo::hierarchical(Algorithm::Bbo),
    ];

    pub const fn flat(base: Algorithm) -> Self {
        PlannerAlgo {
            base,
            variant: Variant::Flat,
        }
    }

    pub const fn hierarchical(base: Algorithm) -> Self {
        PlannerAlgo {
            base,
            variant: Variant::Hierarchical,
        }
    }

    /// Stable numeric id used for stream splitting.
    pub fn code(self) -> u64 {
        let b = match self.base {
            Algorithm::Gso => 1,
            Algorithm::Iwo => 2,
            Algorithm::Bbo => 3,
        };
        match self.variant {
            Variant::Flat => b,
            Variant::Hierarchical => 10 + b,
        }
    }
}

impl fmt::Display for PlannerAlgo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.variant == Variant::Hierarchical {
            f.write_str("h")?;
        }
        f.write_str(self.base.name())
    }
}

impl FromStr for PlannerAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.strip_prefix('h') {
            Some(rest) if rest.parse::<Algorithm>().is_ok() => Ok(PlannerAlgo::hierarchical(rest.parse()?)),
            _ => lower
                .parse()
                .map(PlannerAlgo::flat)
                .map_err(|_| Error::InvalidConfig(format!("unknown planner algorithm '{s}'"))),
        }
    }
}

impl Serialize for PlannerAlgo {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlannerAlgo {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Wall-clock milliseconds spent in the episode.
    Wall,
    /// Simulated mission time: ticks times `tick_ms`. Reproducible.
    Tick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub waypoints: usize,
    pub robot_speed: f64,
    pub capture_radius: f64,
    pub turn_threshold: f64,
    pub weights: CostWeights,
    pub lookahead_ticks: u64,
    pub replan_every: u64,
    pub wait_horizon: u64,
    pub tick_budget: u64,
    pub smoothing: bool,
    pub samples_per_segment: usize,
    pub clock: Clock,
    pub tick_ms: u64,
    pub optimizer: OptimizerConfig,
    pub hierarchy: HierarchyConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let mut optimizer = OptimizerConfig::default();
        optimizer.gso.n_worms = 30;
        optimizer.bbo.n_hab = 30;
        optimizer.gso.iters = 40;
        optimizer.iwo.iters = 40;
        optimizer.bbo.iters = 40;
        PlannerConfig {
            waypoints: 5,
            robot_speed: 1.0,
            capture_radius: 1.0,
            turn_threshold: std::f64::consts::FRAC_PI_6,
            weights: CostWeights::default(),
            lookahead_ticks: 10,
            replan_every: 25,
            wait_horizon: 5,
            tick_budget: 2000,
            smoothing: true,
            samples_per_segment: 10,
            clock: Clock::Wall,
            tick_ms: 100,
            optimizer,
            hierarchy: HierarchyConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.hierarchy.validate()?;
        if self.waypoints == 0 || !(self.robot_speed > 0.0) || self.capture_radius < 0.0 {
            return Err(Error::InvalidConfig(
                "planner needs waypoints >= 1, robot_speed > 0, capture_radius >= 0".into(),
            ));
        }
        if !(self.turn_threshold > 0.0 && self.turn_threshold < std::f64::consts::PI) {
            return Err(Error::InvalidConfig("turn_threshold must lie in (0, pi)".into()));
        }
        Ok(())
    }
}

/// Cost of one polyline evaluated against an occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEval {
    pub breakdown: CostBreakdown,
    pub cells_checked: u64,
    pub collision: Option<Collision>,
    /// The polyline up to the truncation point (all of it when free).
    pub executable: Vec<Vec3>,
}

impl PathEval {
    /// Maximized fitness, `1 / (1 + total)`.
    pub fn objective(&self) -> f64 {
        1.0 / (1.0 + self.breakdown.total)
    }

    /// Cut short before getting within capture range of the goal.
    pub fn is_blocked(&self) -> bool {
        self.breakdown.c_left > 0.0
    }
}

/// Rasterize `points` (level-0 coordinates) on an occupancy whose cells are
/// `scale` level-0 cells wide, truncate at the first blocked cell and price
/// the surviving prefix. Lengths are always in level-0 cells.
pub fn evaluate_path<O: Occupancy + ?Sized>(
    occ: &O,
    scale: f64,
    points: &[Vec3],
    target: Vec3,
    cfg: &PlannerConfig,
) -> PathEval {
    let scan = if scale == 1.0 {
        first_collision(occ, points)
    } else {
        let inv = 1.0 / scale;
        let scaled: Vec<Vec3> = points.iter().map(|p| *p * inv).collect();
        let mut s = first_collision(occ, &scaled);
        if let Some(h) = s.hit.as_mut() {
            h.truncation_point = h.truncation_point * scale;
        }
        s
    };
    let executable: Vec<Vec3> = match &scan.hit {
        None => points.to_vec(),
        Some(h) => {
            let mut e = points[..=h.segment].to_vec();
            if h.t_entry > 0.0 {
                e.push(h.truncation_point);
            }
            e
        }
    };
    let end = *executable.last().expect("polyline is nonempty");
    let components = CostComponents {
        length: path_length(&executable),
        turns: count_turns(&executable, cfg.turn_threshold),
        left: residual(end, target, cfg.capture_radius),
    };
    PathEval {
        breakdown: total_cost(components, &cfg.weights),
        cells_checked: scan.cells_checked,
        collision: scan.hit,
        executable,
    }
}

/// Fitness of a candidate on the full-resolution map: `1 / (1 + C_total)`.
pub fn objective_of(
    candidate: &Candidate,
    map: &GridMap,
    start: Vec3,
    target: Vec3,
    cfg: &PlannerConfig,
) -> (f64, PathEval) {
    let e = evaluate_path(map, 1.0, &polyline(start, candidate, target), target, cfg);
    (e.objective(), e)
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub candidate: Candidate,
    pub eval: PathEval,
    pub evaluations: u64,
    pub cells_checked: u64,
    pub fallback: bool,
    pub corridor: Option<Corridor>,
    pub evaluations_per_level: Vec<u64>,
}

/// Optimize waypoints directly on the full-resolution map.
#[allow(clippy::too_many_arguments)]
pub fn plan_flat(
    base: Algorithm,
    map: &GridMap,
    start: Vec3,
    target: Vec3,
    cfg: &PlannerConfig,
    iters: usize,
    seed: u64,
    warm: &[Vec<f64>],
) -> Result<Plan> {
    let domain = candidate_box(map.dims, cfg.waypoints)?;
    let counter = AtomicU64::new(0);
    let objective = |x: &[f64]| {
        let e = evaluate_path(
            map,
            1.0,
            &polyline(start, &Candidate::from_vector(x), target),
            target,
            cfg,
        );
        counter.fetch_add(e.cells_checked, Ordering::Relaxed);
        e.objective()
    };
    let outcome = run_optimizer(base, &cfg.optimizer, &objective, &domain, iters, seed, warm)?;
    let candidate = Candidate::from_vector(&outcome.best_x);
    let (_, eval) = objective_of(&candidate, map, start, target, cfg);
    Ok(Plan {
        cells_checked: counter.into_inner() + eval.cells_checked,
        candidate,
        eval,
        evaluations: outcome.evaluations,
        fallback: false,
        corridor: None,
        evaluations_per_level: vec![outcome.evaluations],
    })
}

/// Plan a path from `start` to `target` with the chosen algorithm.
/// The initial population is seeded by [`seed_candidates`] with `warm` as extras.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    map: &GridMap,
    start: Vec3,
    target: Vec3,
    algo: PlannerAlgo,
    cfg: &PlannerConfig,
    seed: u64,
    pyramid: Option<&Pyramid>,
    warm: &[Candidate],
) -> Result<Plan> {
    match algo.variant {
        Variant::Flat => {
            let w = seed_candidates(
                start,
                target,
                cfg,
                cfg.optimizer.initial_population(algo.base),
                warm,
                seed,
            );
            plan_flat(
                algo.base,
                map,
                start,
                target,
                cfg,
                cfg.optimizer.iterations(algo.base),
                seed,
                &w,
            )
        }
        Variant::Hierarchical => {
            let owned;
            let pyr = match pyramid {
                Some(p) => p,
                None => {
                    owned = build_map_pyramid(map, cfg.hierarchy.level_count)?;
                    &owned
                }
            };
            let h = plan_hierarchical(algo.base, pyr, map, start, target, cfg, seed, warm)?;
            Ok(Plan {
                candidate: h.candidate,
                eval: h.eval,
                evaluations: h.evaluations,
                cells_checked: h.cells_checked,
                fallback: h.fallback,
                corridor: h.corridor,
                evaluations_per_level: h.evaluations_per_level,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub position: Vec3,
    pub speed: f64,
    pub planned_path: Vec<Vec3>,
    /// Index into `planned_path` of the next vertex to reach.
    pub next_vertex: usize,
    pub captured_count: usize,
}

impl RobotState {
    pub fn new(position: Vec3, speed: f64) -> Self {
        RobotState {
            position,
            speed,
            planned_path: Vec::new(),
            next_vertex: 0,
            captured_count: 0,
        }
    }

    pub fn has_path(&self) -> bool {
        self.next_vertex < self.planned_path.len()
    }

    /// Follow the path: `steps` moves of `speed` cells. Returns the
    /// positions after each move (fewer when the path runs out).
    pub fn preview(&self, steps: u64) -> Vec<Vec3> {
        self.preview_steps(steps).into_iter().map(|s| s.position).collect()
    }

    /// Like [`RobotState::preview`], keeping the route of every move.
    pub fn preview_steps(&self, steps: u64) -> Vec<Step> {
        let mut pos = self.position;
        let mut next = self.next_vertex;
        let mut out = Vec::new();
        for _ in 0..steps {
            if next >= self.planned_path.len() {
                break;
            }
            let s = step_along(pos, &self.planned_path, next, self.speed);
            pos = s.position;
            next = s.next_vertex;
            out.push(s);
        }
        out
    }
}

/// One tick of motion along a planned path.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub position: Vec3,
    pub next_vertex: usize,
    /// Polyline traversed during the move, from the old position to `position`.
    pub route: Vec<Vec3>,
}

fn step_along(from: Vec3, path: &[Vec3], next: usize, dist: f64) -> Step {
    let (position, next_vertex) = advance(from, path, next, dist);
    let mut route = Vec::with_capacity(next_vertex - next + 2);
    route.push(from);
    route.extend_from_slice(&path[next..next_vertex]);
    if route.last() != Some(&position) {
        route.push(position);
    }
    Step {
        position,
        next_vertex,
        route,
    }
}

fn advance(mut pos: Vec3, path: &[Vec3], mut next: usize, dist: f64) -> (Vec3, usize) {
    let mut remaining = dist;
    while next < path.len() {
        let seg = path[next] - pos;
        let len = seg.norm();
        if len <= remaining {
            pos = path[next];
            remaining -= len;
            next += 1;
        } else {
            pos += seg * (remaining / len);
            break;
        }
    }
    (pos, next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conflict {
    pub kind: ObstacleKind,
    pub cell: Cell,
    /// Robot moves until the conflicting position (1 = this tick's move).
    pub steps_ahead: u64,
    /// Index of the dynamic obstacle involved.
    pub obstacle: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvoidAction {
    Replan,
    /// Hold position; the obstacle is predicted to clear after this many ticks.
    Wait(u64),
}

/// Look `lookahead_ticks` moves ahead along the planned path. Step `k`
/// is checked against static cells and against every dynamic obstacle
/// extrapolated `k - 1` ticks, since move `k` happens after `k - 1` more
/// world steps. Returns the first conflict and the number of cells examined.
pub fn lookahead(map: &GridMap, robot: &RobotState, cfg: &PlannerConfig) -> (Option<Conflict>, u64) {
    let r2 = map.dynamic_radius * map.dynamic_radius;
    let mut checked = 0u64;
    let start_cell = robot.position.cell();
    for (i, step) in robot.preview_steps(cfg.lookahead_ticks).into_iter().enumerate() {
        let k = i as u64 + 1;
        let offset = (k - 1) as f64;
        let mut found = None;
        for seg in step.route.windows(2) {
            walk_segment(seg[0], seg[1], |cell, _| {
                checked += 1;
                if cell == start_cell && k == 1 {
                    return true;
                }
                if map.is_static(cell) {
                    found = Some(Conflict {
                        kind: ObstacleKind::Static,
                        cell,
                        steps_ahead: k,
                        obstacle: None,
                    });
                    return false;
                }
                for (oi, o) in map.dynamic_obstacles.iter().enumerate() {
                    let q = o.position + o.velocity * offset;
                    if cell_box_distance_sq(q, cell) <= r2 {
                        found = Some(Conflict {
                            kind: ObstacleKind::Dynamic,
                            cell,
                            steps_ahead: k,
                            obstacle: Some(oi),
                        });
                        return false;
                    }
                }
                true
            });
            if found.is_some() {
                return (found, checked);
            }
        }
    }
    (None, checked)
}

/// Static conflicts always replan. A dynamic conflict waits when the
/// obstacle, extrapolated linearly, is clear of the conflict cell both when
/// the robot would arrive after waiting `w <= wait_horizon` ticks and one
/// tick later; otherwise it replans.
pub fn avoid_collision(map: &GridMap, _robot: &RobotState, conflict: &Conflict, cfg: &PlannerConfig) -> AvoidAction {
    let (ObstacleKind::Dynamic, Some(oi)) = (conflict.kind, conflict.obstacle) else {
        return AvoidAction::Replan;
    };
    let o = &map.dynamic_obstacles[oi];
    let r2 = map.dynamic_radius * map.dynamic_radius;
    let clear_at = |offset: u64| cell_box_distance_sq(o.position + o.velocity * offset as f64, conflict.cell) > r2;
    let arrive = conflict.steps_ahead - 1;
    (1..=cfg.wait_horizon)
        .find(|&w| clear_at(arrive + w) && clear_at(arrive + w + 1))
        .map_or(AvoidAction::Replan, AvoidAction::Wait)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub elapsed_ms: u64,
    pub expanded_nodes: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub ticks: u64,
    pub targets: usize,
    pub captured: usize,
    /// Ended by the tick budget rather than by capturing every goal.
    pub budget_exhausted: bool,
    pub plans: u64,
    pub executed_plans: u64,
    /// Executed plans that stopped short of the goal.
    pub blocked_plans: u64,
    pub waits: u64,
    pub escapes: u64,
    pub fallbacks: u64,
    pub evaluations: u64,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub summary: EpisodeSummary,
    pub log: TrajectoryLog,
    /// Cells examined by each collision check batch, in order. Sums to
    /// `metrics.expanded_nodes`.
    pub node_checks: Vec<u64>,
}

struct ActivePlan {
    id: u64,
    target: usize,
    created: u64,
    cost: f64,
    blocked: bool,
    executed: bool,
    candidate: Candidate,
}

/// Generate map `map_id` from `seed` and run one episode on it. The planner
/// draws from the stream `(seed, PLAN, algo.code())`.
pub fn run_episode(
    map_id: u8,
    algo: PlannerAlgo,
    map_cfg: &MapConfig,
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<EpisodeOutcome> {
    let map = build_map(map_id, map_cfg, seed)?;
    let planner_seed = rng::derive_seed(seed, &[label::PLAN, algo.code()]);
    let mut out = run_episode_on(map, algo, cfg, planner_seed)?;
    out.log.meta.insert(0, ("map".into(), map_id.to_string()));
    out.log.meta.insert(1, ("seed".into(), seed.to_string()));
    Ok(out)
}

fn nearest_active_target(map: &GridMap, pos: Vec3) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in map.targets.iter().enumerate() {
        if !t.is_active(map.tick) {
            continue;
        }
        let d = t.position.distance(pos);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Whether every cell crossed along `route` is free, ignoring the cell the
/// route starts in (the robot is already there).
fn route_is_free(map: &GridMap, route: &[Vec3], checked: &mut u64) -> bool {
    let start = route[0].cell();
    let mut free = true;
    for seg in route.windows(2) {
        walk_segment(seg[0], seg[1], |c, _| {
            *checked += 1;
            if c != start && is_occupied(map, c) {
                free = false;
            }
            free
        });
        if !free {
            return false;
        }
    }
    !is_occupied(map, route[route.len() - 1].cell())
}

/// A move of `speed` cells to the free position farthest from moving obstacles.
fn escape_move(map: &GridMap, pos: Vec3, speed: f64, checked: &mut u64) -> Option<Vec3> {
    let mut best: Option<(f64, Vec3)> = None;
    for frac in [1.0, 0.5] {
        for dz in -1i32..=1 {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if (dx, dy, dz) == (0, 0, 0) {
                        continue;
                    }
                    let dir = Vec3::new(dx as f64, dy as f64, dz as f64);
                    let to = pos + dir * (speed * frac / dir.norm());
                    if !map.contains_point(to) || !route_is_free(map, &[pos, to], checked) {
                        continue;
                    }
                    let clearance = map
                        .dynamic_obstacles
                        .iter()
                        .map(|o| o.position.distance(to))
                        .fold(f64::INFINITY, f64::min);
                    if best.is_none_or(|(c, _)| clearance > c) {
                        best = Some((clearance, to));
                    }
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.map(|(_, p)| p)
}

/// Run one episode on a prepared world.
pub fn run_episode_on(
    map: GridMap,
    algo: PlannerAlgo,
    cfg: &PlannerConfig,
    planner_seed: u64,
) -> Result<EpisodeOutcome> {
    cfg.validate()?;
    if let Some(o) = map.dynamic_obstacles.iter().find(|o| !(o.speed_cap < cfg.robot_speed)) {
        return Err(Error::InvalidConfig(format!(
            "dynamic obstacle speed cap {} must stay below the robot speed {}",
            o.speed_cap, cfg.robot_speed
        )));
    }
    let started = Instant::now();
    let pyramid = match algo.variant {
        Variant::Hierarchical => Some(build_map_pyramid(&map, cfg.hierarchy.level_count)?),
        Variant::Flat => None,
    };

    let mut log = TrajectoryLog::new(map.clone());
    log.meta.push(("algorithm".into(), algo.to_string()));
    let mut world = map;
    let mut robot = RobotState::new(world.robot_start, cfg.robot_speed);
    let mut summary = EpisodeSummary {
        targets: world.targets.len(),
        ..EpisodeSummary::default()
    };
    let mut cost = 0.0;
    let mut node_checks: Vec<u64> = Vec::new();
    let mut active: Option<ActivePlan> = None;
    let mut next_plan_id = 1u64;
    let mut consecutive_waits = 0u64;

    log.records.push(TickRecord {
        tick: world.tick,
        position: robot.position,
        actions: vec!["start".into()],
        plan_id: 0,
    });

    let all_captured = |w: &GridMap| w.targets.iter().all(|t| t.captured);
    let capture = |w: &mut GridMap, robot: &mut RobotState, actions: &mut Vec<String>| -> bool {
        let mut any = false;
        for i in 0..w.targets.len() {
            let t = &w.targets[i];
            if t.is_active(w.tick) && t.position.distance(robot.position) <= cfg.capture_radius {
                w.targets[i].captured = true;
                robot.captured_count += 1;
                actions.push(format!("capture:{i}"));
                any = true;
            }
        }
        any
    };

    while !all_captured(&world) && world.tick < cfg.tick_budget {
        world = step_dynamics(&world);
        let tick = world.tick;
        let mut actions: Vec<String> = Vec::new();
        let mut checked = 0u64;

        if capture(&mut world, &mut robot, &mut actions) {
            active = None;
            robot.planned_path.clear();
        }

        // Never end a tick inside an occupied cell.
        if is_occupied(&world, robot.position.cell()) {
            match escape_move(&world, robot.position, robot.speed, &mut checked) {
                Some(p) => {
                    robot.position = p;
                    actions.push("escape".into());
                    summary.escapes += 1;
                }
                None => actions.push("stuck".into()),
            }
            active = None;
            robot.planned_path.clear();
            capture(&mut world, &mut robot, &mut actions);
            node_checks.push(checked);
            log.records.push(TickRecord {
                tick,
                position: robot.position,
                actions,
                plan_id: 0,
            });
            continue;
        }

        let Some(target_idx) = nearest_active_target(&world, robot.position) else {
            actions.push("idle".into());
            node_checks.push(checked);
            let plan_id = active.as_ref().map_or(0, |a| a.id);
            log.records.push(TickRecord {
                tick,
                position: robot.position,
                actions,
                plan_id,
            });
            continue;
        };

        let stale = match &active {
            None => true,
            Some(a) => {
                a.target != target_idx
                    || !robot.has_path()
                    || tick - a.created >= cfg.replan_every
                    || consecutive_waits > cfg.wait_horizon
            }
        };
        let mut planned_this_tick = false;
        let mut do_plan = |world: &GridMap,
                           robot: &mut RobotState,
                           active: &mut Option<ActivePlan>,
                           actions: &mut Vec<String>,
                           node_checks: &mut Vec<u64>|
         -> Result<()> {
            let target = world.targets[target_idx].position;
            let id = next_plan_id;
            next_plan_id += 1;
            let warm: Vec<Candidate> = active
                .as_ref()
                .filter(|a| a.target == target_idx)
                .map(|a| a.candidate.clone())
                .into_iter()
                .collect();
            let seed = rng::derive_seed(planner_seed, &[label::PLAN, id]);
            let p = plan(world, robot.position, target, algo, cfg, seed, pyramid.as_ref(), &warm)?;
            summary.plans += 1;
            summary.evaluations += p.evaluations;
            if p.fallback && algo.variant == Variant::Hierarchical {
                summary.fallbacks += 1;
            }
            let mut plan_checks = p.cells_checked;
            let (followed, breakdown) = if p.eval.collision.is_none() && cfg.smoothing {
                let (path, _) = smooth_or_raw(world, &p.eval.executable, cfg.samples_per_segment);
                plan_checks += first_collision(world, &path).cells_checked;
                let c = CostComponents {
                    length: path_length(&path),
                    turns: count_turns(&path, cfg.turn_threshold),
                    left: p.eval.breakdown.c_left,
                };
                (path, total_cost(c, &cfg.weights))
            } else {
                (p.eval.executable.clone(), p.eval.breakdown)
            };
            node_checks.push(plan_checks);
            robot.planned_path = followed;
            robot.next_vertex = 1;
            *active = Some(ActivePlan {
                id,
                target: target_idx,
                created: tick,
                cost: breakdown.total,
                blocked: p.eval.is_blocked(),
                executed: false,
                candidate: p.candidate,
            });
            actions.push(if id == 1 { "plan".into() } else { "replan".into() });
            Ok(())
        };

        if stale {
            do_plan(&world, &mut robot, &mut active, &mut actions, &mut node_checks)?;
            planned_this_tick = true;
            consecutive_waits = 0;
        }

        let (conflict, n) = lookahead(&world, &robot, cfg);
        checked += n;
        let mut hold = false;
        if let Some(c) = conflict {
            match avoid_collision(&world, &robot, &c, cfg) {
                AvoidAction::Wait(_) => {
                    hold = true;
                    consecutive_waits += 1;
                    summary.waits += 1;
                    actions.push("wait".into());
                }
                AvoidAction::Replan if !planned_this_tick => {
                    do_plan(&world, &mut robot, &mut active, &mut actions, &mut node_checks)?;
                    consecutive_waits = 0;
                }
                AvoidAction::Replan => {}
            }
        } else {
            consecutive_waits = 0;
        }

        if !hold && robot.has_path() {
            let step = step_along(robot.position, &robot.planned_path, robot.next_vertex, robot.speed);
            if route_is_free(&world, &step.route, &mut checked) {
                robot.position = step.position;
                robot.next_vertex = step.next_vertex;
                actions.push("move".into());
                if let Some(a) = active.as_mut() {
                    if !a.executed {
                        a.executed = true;
                        summary.executed_plans += 1;
                        summary.blocked_plans += a.blocked as u64;
                        cost += a.cost;
                    }
                }
            } else {
                actions.push("hold".into());
            }
        }

        if capture(&mut world, &mut robot, &mut actions) {
            active = None;
            robot.planned_path.clear();
        }
        node_checks.push(checked);
        let plan_id = active.as_ref().map_or(0, |a| a.id);
        log.records.push(TickRecord {
            tick,
            position: robot.position,
            actions,
            plan_id,
        });
    }

    summary.ticks = world.tick;
    summary.captured = robot.captured_count;
    summary.budget_exhausted = !all_captured(&world);
    let expanded_nodes = node_checks.iter().sum();
    let elapsed_ms = match cfg.clock {
        Clock::Wall => started.elapsed().as_millis() as u64,
        Clock::Tick => world.tick * cfg.tick_ms,
    };
    log.meta.push(("captured".into(), summary.captured.to_string()));
    log.meta
        .push(("budget_exhausted".into(), summary.budget_exhausted.to_string()));
    Ok(EpisodeOutcome {
        metrics: EpisodeMetrics {
            elapsed_ms,
            expanded_nodes,
            cost,
        },
        summary,
        log,
        node_checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_world::{Cuboid, MovingPoint};

    fn cfg() -> PlannerConfig {
        PlannerConfig {
            clock: Clock::Tick,
            ..PlannerConfig::default()
        }
    }

    #[test]
    fn straight_candidate_on_empty_map() {
        let map = GridMap::empty([16, 16, 16]);
        let (s, t) = (Vec3::new(1.5, 1.5, 1.5), Vec3::new(13.5, 9.5, 5.5));
        let c = straight_line(s, t, 5);
        let (j, e) = objective_of(&c, &map, s, t, &cfg());
        assert!(e.collision.is_none());
        assert_eq!(e.breakdown.c_turns, 0);
        assert_eq!(e.breakdown.c_left, 0.0);
        let expect = 1.0 / (1.0 + s.distance(t));
        assert!((j - expect).abs() < 1e-12);
        let (j2, _) = objective_of(&c, &map, s, t, &cfg());
        assert_eq!(j, j2);
    }

    #[test]
    fn algo_names_round_trip() {
        for a in PlannerAlgo::ALL {
            assert_eq!(a.to_string().parse::<PlannerAlgo>().unwrap(), a);
        }
        assert_eq!(
            "hGSO".parse::<PlannerAlgo>().unwrap(),
            PlannerAlgo::hierarchical(Algorithm::Gso)
        );
        assert!("hpso".parse::<PlannerAlgo>().is_err());
    }

    #[test]
    fn preview_walks_path() {
        let mut r = RobotState::new(Vec3::new(0.5, 0.5, 0.5), 1.0);
        r.planned_path = vec![
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::new(2.5, 0.5, 0.5),
            Vec3::new(2.5, 1.5, 0.5),
        ];
        r.next_vertex = 1;
        let p = r.preview(5);
        assert_eq!(p.len(), 3);
        assert_eq!(p[2], Vec3::new(2.5, 1.5, 0.5));
    }

    #[test]
    fn static_conflict_replans() {
        let map = GridMap::with_static([16, 16, 16], vec![Cuboid::new([5, 0, 0], [5, 15, 15])], vec![]);
        let mut r = RobotState::new(Vec3::new(2.5, 3.5, 3.5), 1.0);
        r.planned_path = vec![r.position, Vec3::new(10.5, 3.5, 3.5)];
        r.next_vertex = 1;
        let (c, n) = lookahead(&map, &r, &cfg());
        let c = c.unwrap();
        assert!(n > 0);
        assert_eq!(c.kind, ObstacleKind::Static);
        assert_eq!(c.cell, [5, 3, 3]);
        assert_eq!(avoid_collision(&map, &r, &c, &cfg()), AvoidAction::Replan);
    }

    #[test]
    fn crossing_obstacle_is_waited_out() {
        let mut map = GridMap::empty([16, 16, 16]);
        // Crosses the robot's lane at x = 5.5 heading +y at 1 cell/tick.
        map.dynamic_obstacles.push(MovingPoint {
            position: Vec3::new(5.5, 2.0, 3.5),
            velocity: Vec3::new(0.0, 1.0, 0.0),
            speed_cap: 1.0,
        });
        let mut r = RobotState::new(Vec3::new(2.5, 3.5, 3.5), 1.0);
        r.planned_path = vec![r.position, Vec3::new(12.5, 3.5, 3.5)];
        r.next_vertex = 1;
        let (c, _) = lookahead(&map, &r, &cfg());
        let c = c.unwrap();
        // The inflated obstacle touches the x = 4 face one tick before the robot enters that cell.
        assert_eq!(c.kind, ObstacleKind::Dynamic);
        assert_eq!((c.cell, c.steps_ahead), ([4, 3, 3], 2));
        // Clear of cell (4,3,3) once its y exceeds 4: offsets 3 and 4, so wait 2.
        assert_eq!(avoid_collision(&map, &r, &c, &cfg()), AvoidAction::Wait(2));
    }

    #[test]
    fn parked_obstacle_forces_replan() {
        let mut map = GridMap::empty([16, 16, 16]);
        map.dynamic_obstacles.push(MovingPoint {
            position: Vec3::new(6.5, 3.5, 3.5),
            velocity: Vec3::ZERO,
            speed_cap: 0.5,
        });
        let mut r = RobotState::new(Vec3::new(2.5, 3.5, 3.5), 1.0);
        r.planned_path = vec![r.position, Vec3::new(9.5, 3.5, 3.5)];
        r.next_vertex = 1;
        let c = lookahead(&map, &r, &cfg()).0.unwrap();
        assert_eq!(avoid_collision(&map, &r, &c, &cfg()), AvoidAction::Replan);
    }

    #[test]
    fn zero_budget_episode() {
        let c = PlannerConfig {
            tick_budget: 0,
            ..cfg()
        };
        let out = run_episode(1, PlannerAlgo::flat(Algorithm::Gso), &MapConfig::desk_scale(), &c, 3).unwrap();
        assert_eq!(out.summary.captured, 0);
        assert_eq!(out.log.records.len(), 1);
        assert_eq!(out.metrics.expanded_nodes, 0);
        assert_eq!(out.metrics.cost, 0.0);
        assert!(out.summary.budget_exhausted);
    }

    #[test]
    fn rejects_obstacles_faster_than_robot() {
        let mut map = GridMap::empty([16, 16, 16]);
        map.dynamic_obstacles.push(MovingPoint {
            position: Vec3::new(6.5, 3.5, 3.5),
            velocity: Vec3::ZERO,
            speed_cap: 1.0,
        });
        let r = run_episode_on(map, PlannerAlgo::flat(Algorithm::Gso), &cfg(), 0);
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }
}
