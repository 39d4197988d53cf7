//! The 3D environment: static cuboid layers, moving point obstacles, goals,
//! occupancy queries and voxel traversal.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{cell_box_distance_sq, chebyshev, Cell, Vec3};
use crate::rng::{self, label, Rng};

/// Anything that can answer "is this cell blocked?".
pub trait Occupancy: Sync {
    fn dims(&self) -> [usize; 3];

    fn occupied(&self, cell: Cell) -> bool;

    fn in_bounds(&self, cell: Cell) -> bool {
        let d = self.dims();
        (0..3).all(|a| cell[a] >= 0 && (cell[a] as usize) < d[a])
    }
}

/// Dense boolean voxel volume. Out-of-bounds cells read as occupied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    cells: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(dims: [usize; 3]) -> Self {
        VoxelGrid {
            dims,
            cells: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    fn index(&self, c: Cell) -> usize {
        (c[2] as usize * self.dims[1] + c[1] as usize) * self.dims[0] + c[0] as usize
    }

    pub fn get(&self, c: Cell) -> bool {
        if !self.in_bounds(c) {
            return true;
        }
        self.cells[self.index(c)]
    }

    pub fn set(&mut self, c: Cell, value: bool) {
        let i = self.index(c);
        self.cells[i] = value;
    }

    pub fn fill_cuboid(&mut self, cub: &Cuboid) {
        for z in cub.min_corner[2]..=cub.max_corner[2] {
            for y in cub.min_corner[1]..=cub.max_corner[1] {
                for x in cub.min_corner[0]..=cub.max_corner[0] {
                    self.set([x, y, z], true);
                }
            }
        }
    }

    pub fn count_occupied(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn volume(&self) -> usize {
        self.cells.len()
    }

    pub fn fraction(&self) -> f64 {
        self.count_occupied() as f64 / self.volume() as f64
    }

    /// All cells in x-fastest order.
    pub fn iter_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let [dx, dy, dz] = self.dims;
        (0..dz).flat_map(move |z| (0..dy).flat_map(move |y| (0..dx).map(move |x| [x as i64, y as i64, z as i64])))
    }
}

impl Occupancy for VoxelGrid {
    fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn occupied(&self, cell: Cell) -> bool {
        self.get(cell)
    }
}

/// Axis-aligned block of cells, corners inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cuboid {
    pub min_corner: [i64; 3],
    pub max_corner: [i64; 3],
}

impl Cuboid {
    pub fn new(min_corner: [i64; 3], max_corner: [i64; 3]) -> Self {
        Cuboid { min_corner, max_corner }
    }

    pub fn contains(&self, c: Cell) -> bool {
        (0..3).all(|a| self.min_corner[a] <= c[a] && c[a] <= self.max_corner[a])
    }

    pub fn volume(&self) -> usize {
        (0..3)
            .map(|a| (self.max_corner[a] - self.min_corner[a] + 1) as usize)
            .product()
    }

    pub fn is_well_formed(&self) -> bool {
        (0..3).all(|a| self.min_corner[a] <= self.max_corner[a])
    }

    pub fn fits_in(&self, dims: [usize; 3]) -> bool {
        self.is_well_formed() && (0..3).all(|a| self.min_corner[a] >= 0 && (self.max_corner[a] as usize) < dims[a])
    }

    /// Rescale a layout authored for `from` cells per axis onto `to`.
    pub fn rescaled(&self, from: [usize; 3], to: [usize; 3]) -> Cuboid {
        let mut min_corner = [0; 3];
        let mut max_corner = [0; 3];
        for a in 0..3 {
            let (f, t) = (from[a] as i64, to[a] as i64);
            min_corner[a] = self.min_corner[a] * t / f;
            max_corner[a] = ((self.max_corner[a] + 1) * t / f - 1).max(min_corner[a]);
        }
        Cuboid { min_corner, max_corner }
    }
}

/// A point obstacle drifting through the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingPoint {
    pub position: Vec3,
    pub velocity: Vec3,
    pub speed_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Static,
    Dynamic,
    TimeVarying,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub kind: TargetKind,
    pub position: Vec3,
    pub velocity: Vec3,
    pub on_ticks: u64,
    pub off_ticks: u64,
    pub phase: u64,
    pub captured: bool,
}

impl Target {
    /// Whether the goal is present at `tick` (ignores capture).
    pub fn is_on(&self, tick: u64) -> bool {
        match self.kind {
            TargetKind::TimeVarying => {
                let period = self.on_ticks + self.off_ticks;
                period == 0 || (tick + self.phase) % period < self.on_ticks
            }
            _ => true,
        }
    }

    pub fn is_active(&self, tick: u64) -> bool {
        !self.captured && self.is_on(tick)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub on_ticks: u64,
    pub off_ticks: u64,
    /// Cells per tick; only used by dynamic goals.
    pub speed: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec {
            kind: TargetKind::Static,
            on_ticks: 200,
            off_ticks: 100,
            speed: 0.3,
        }
    }
}

impl TargetSpec {
    pub fn of(kind: TargetKind) -> Self {
        TargetSpec {
            kind,
            ..TargetSpec::default()
        }
    }
}

/// Map config file schema. Every field has a default, so a file only needs
/// the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub dims: [usize; 3],
    pub fio: Vec<Cuboid>,
    /// Upper bound on the fraction of cells covered by static obstacles.
    pub density_cap: f64,
    /// Random obstacles are added until coverage reaches `fill_fraction * density_cap`.
    pub fill_fraction: f64,
    pub fro_max_side: usize,
    pub dynamic_obstacle_count: usize,
    pub dynamic_speed_cap: f64,
    pub dynamic_radius: f64,
    pub p_jitter: f64,
    pub target_count: usize,
    pub targets: Vec<TargetSpec>,
    /// Free margin (Chebyshev cells) kept around the robot start and goal spawns.
    pub clearance: i64,
    pub max_attempts: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig::paper_scale()
    }
}

/// Six fixed cuboids on a 64-cell cube: four towers, a bridge and a hanging block.
pub fn default_fio_layout() -> Vec<Cuboid> {
    vec![
        Cuboid::new([8, 40, 0], [13, 45, 27]),
        Cuboid::new([26, 10, 0], [31, 19, 35]),
        Cuboid::new([44, 36, 0], [53, 41, 21]),
        Cuboid::new([20, 28, 0], [25, 33, 43]),
        Cuboid::new([38, 52, 30], [57, 57, 35]),
        Cuboid::new([48, 10, 16], [55, 17, 39]),
    ]
}

impl MapConfig {
    /// 64 x 64 x 64, 8 % static cap, 3 goals.
    pub fn paper_scale() -> Self {
        MapConfig {
            dims: [64, 64, 64],
            fio: default_fio_layout(),
            density_cap: 0.08,
            fill_fraction: 0.95,
            fro_max_side: 4,
            dynamic_obstacle_count: 12,
            dynamic_speed_cap: 0.5,
            dynamic_radius: 0.5,
            p_jitter: 0.05,
            target_count: 3,
            targets: vec![
                TargetSpec::of(TargetKind::Static),
                TargetSpec::of(TargetKind::Dynamic),
                TargetSpec::of(TargetKind::TimeVarying),
            ],
            clearance: 1,
            max_attempts: 400_000,
        }
    }

    /// The same world scaled to 32 cells per axis.
    pub fn desk_scale() -> Self {
        let base = MapConfig::paper_scale();
        MapConfig {
            dims: [32, 32, 32],
            fio: base.fio.iter().map(|c| c.rescaled(base.dims, [32, 32, 32])).collect(),
            fro_max_side: 3,
            dynamic_obstacle_count: 6,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &d in &self.dims {
            if d < 8 || !d.is_power_of_two() {
                return Err(Error::InvalidConfig(format!(
                    "map dims must be powers of two >= 8, got {:?}",
                    self.dims
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.density_cap) {
            return Err(Error::InvalidConfig(format!(
                "density cap {} outside [0, 1]",
                self.density_cap
            )));
        }
        if !(0.0..=1.0).contains(&self.fill_fraction) {
            return Err(Error::InvalidConfig("fill_fraction outside [0, 1]".into()));
        }
        if let Some(c) = self.fio.iter().find(|c| !c.fits_in(self.dims)) {
            return Err(Error::InvalidConfig(format!(
                "fixed obstacle {c:?} does not fit in dims {:?}",
                self.dims
            )));
        }
        if self.dynamic_speed_cap < 0.0 || self.dynamic_radius < 0.0 {
            return Err(Error::InvalidConfig("negative dynamic obstacle parameter".into()));
        }
        if !(0.0..=1.0).contains(&self.p_jitter) {
            return Err(Error::InvalidConfig("p_jitter outside [0, 1]".into()));
        }
        if self.fro_max_side == 0 {
            return Err(Error::InvalidConfig("fro_max_side must be >= 1".into()));
        }
        Ok(())
    }

    fn target_spec(&self, i: usize) -> TargetSpec {
        if self.targets.is_empty() {
            TargetSpec::default()
        } else {
            self.targets[i % self.targets.len()]
        }
    }
}

/// Which obstacle layers a numbered map contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapLayers {
    pub fio: bool,
    pub fro: bool,
    pub dynamic: bool,
}

pub fn map_layers(map_id: u8) -> Result<MapLayers> {
    let (fio, fro, dynamic) = match map_id {
        1 => (false, false, false),
        2 => (true, false, false),
        3 => (true, true, false),
        4 => (false, true, true),
        5 => (true, true, true),
        _ => return Err(Error::InvalidConfig(format!("map id {map_id} outside 1..=5"))),
    };
    Ok(MapLayers { fio, fro, dynamic })
}

/// Serialized form of a [`GridMap`]; the cached static volume is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridMapState {
    dims: [usize; 3],
    fio: Vec<Cuboid>,
    fro: Vec<Cuboid>,
    dynamic_obstacles: Vec<MovingPoint>,
    targets: Vec<Target>,
    tick: u64,
    robot_start: Vec3,
    dynamic_radius: f64,
    p_jitter: f64,
    dynamics_seed: u64,
}

/// One immutable snapshot of the world. [`step_dynamics`] produces the next one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "GridMapState", into = "GridMapState")]
pub struct GridMap {
    pub dims: [usize; 3],
    pub fio: Vec<Cuboid>,
    pub fro: Vec<Cuboid>,
    pub dynamic_obstacles: Vec<MovingPoint>,
    pub targets: Vec<Target>,
    pub tick: u64,
    pub robot_start: Vec3,
    pub dynamic_radius: f64,
    pub p_jitter: f64,
    pub dynamics_seed: u64,
    static_occupancy: Arc<VoxelGrid>,
}

impl From<GridMapState> for GridMap {
    fn from(s: GridMapState) -> Self {
        let static_occupancy = Arc::new(rasterize_static(s.dims, &s.fio, &s.fro));
        GridMap {
            dims: s.dims,
            fio: s.fio,
            fro: s.fro,
            dynamic_obstacles: s.dynamic_obstacles,
            targets: s.targets,
            tick: s.tick,
            robot_start: s.robot_start,
            dynamic_radius: s.dynamic_radius,
            p_jitter: s.p_jitter,
            dynamics_seed: s.dynamics_seed,
            static_occupancy,
        }
    }
}

impl From<GridMap> for GridMapState {
    fn from(m: GridMap) -> Self {
        GridMapState {
            dims: m.dims,
            fio: m.fio,
            fro: m.fro,
            dynamic_obstacles: m.dynamic_obstacles,
            targets: m.targets,
            tick: m.tick,
            robot_start: m.robot_start,
            dynamic_radius: m.dynamic_radius,
            p_jitter: m.p_jitter,
            dynamics_seed: m.dynamics_seed,
        }
    }
}

impl PartialEq for GridMap {
    fn eq(&self, o: &Self) -> bool {
        self.dims == o.dims
            && self.fio == o.fio
            && self.fro == o.fro
            && self.dynamic_obstacles == o.dynamic_obstacles
            && self.targets == o.targets
            && self.tick == o.tick
            && self.robot_start == o.robot_start
            && self.dynamic_radius == o.dynamic_radius
            && self.p_jitter == o.p_jitter
            && self.dynamics_seed == o.dynamics_seed
    }
}

fn rasterize_static(dims: [usize; 3], fio: &[Cuboid], fro: &[Cuboid]) -> VoxelGrid {
    let mut g = VoxelGrid::empty(dims);
    for c in fio.iter().chain(fro) {
        g.fill_cuboid(c);
    }
    g
}

impl GridMap {
    /// A map with the given static layers and nothing else.
    pub fn with_static(dims: [usize; 3], fio: Vec<Cuboid>, fro: Vec<Cuboid>) -> Self {
        GridMap::from(GridMapState {
            dims,
            fio,
            fro,
            dynamic_obstacles: Vec::new(),
            targets: Vec::new(),
            tick: 0,
            robot_start: Vec3::new(0.5, 0.5, 0.5),
            dynamic_radius: 0.5,
            p_jitter: 0.0,
            dynamics_seed: 0,
        })
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        GridMap::with_static(dims, Vec::new(), Vec::new())
    }

    /// The union of fixed and random cuboids, without dynamic obstacles.
    pub fn static_occupancy(&self) -> &VoxelGrid {
        &self.static_occupancy
    }

    pub fn is_static(&self, cell: Cell) -> bool {
        self.static_occupancy.get(cell)
    }

    /// Index of the first dynamic obstacle blocking `cell`, if any.
    pub fn dynamic_blocker(&self, cell: Cell) -> Option<usize> {
        let r2 = self.dynamic_radius * self.dynamic_radius;
        self.dynamic_obstacles
            .iter()
            .position(|o| cell_box_distance_sq(o.position, cell) <= r2)
    }

    pub fn fro_cell_count(&self) -> usize {
        rasterize_static(self.dims, &[], &self.fro).count_occupied()
    }

    pub fn volume(&self) -> usize {
        self.dims.iter().product()
    }

    /// Whether a continuous point lies inside the map box.
    pub fn contains_point(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= 0.0 && p[a] < self.dims[a] as f64)
    }
}

impl Occupancy for GridMap {
    fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn occupied(&self, cell: Cell) -> bool {
        is_occupied(self, cell)
    }
}

/// True when `cell` is outside the map, inside a cuboid, or within
/// `dynamic_radius` of a dynamic obstacle (distance to the cell's box).
pub fn is_occupied(map: &GridMap, cell: Cell) -> bool {
    if map.static_occupancy.get(cell) {
        return true;
    }
    map.dynamic_blocker(cell).is_some()
}

fn random_free_cell(
    rng: &mut Rng,
    occ: &VoxelGrid,
    margin: i64,
    attempts: usize,
    accept: impl Fn(Cell) -> bool,
) -> Option<Cell> {
    let d = occ.dims();
    for _ in 0..attempts {
        let c = [
            rng.random_range(margin..d[0] as i64 - margin),
            rng.random_range(margin..d[1] as i64 - margin),
            rng.random_range(margin..d[2] as i64 - margin),
        ];
        if occ.get(c) || !accept(c) {
            continue;
        }
        return Some(c);
    }
    None
}

fn random_velocity(rng: &mut Rng, speed_cap: f64) -> Vec3 {
    if speed_cap <= 0.0 {
        return Vec3::ZERO;
    }
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            let speed = speed_cap * rng.random_range(0.5..=1.0);
            return v * (speed / n);
        }
    }
}

/// Generate numbered map `map_id` (1..=5).
///
/// Map 1 is empty, map 2 has the fixed layout, map 3 adds random cuboids,
/// map 4 has random cuboids and moving obstacles, map 5 has all three. Random
/// cuboids are added until static coverage reaches `fill_fraction * density_cap`
/// without ever exceeding the cap; the generator gives up (with
/// [`Error::Generation`]) after `max_attempts` rejected proposals.
pub fn build_map(map_id: u8, cfg: &MapConfig, seed: u64) -> Result<GridMap> {
    cfg.validate()?;
    let layers = map_layers(map_id)?;
    let mut rng = rng::stream(seed, &[label::MAP_BUILD, map_id as u64]);
    let dims = cfg.dims;
    let volume: usize = dims.iter().product();
    let cap_cells = (cfg.density_cap * volume as f64).floor() as usize;

    let fio: Vec<Cuboid> = if layers.fio { cfg.fio.clone() } else { Vec::new() };
    let mut occ = rasterize_static(dims, &fio, &[]);
    if (layers.fio || layers.fro) && occ.count_occupied() > cap_cells {
        return Err(Error::Generation(format!(
            "fixed obstacles cover {} cells, above the density cap of {cap_cells}",
            occ.count_occupied()
        )));
    }

    // Robot start and goal spawns come first so random cuboids can avoid them.
    let clear = cfg.clearance.max(0);
    let margin = clear.min(dims[0] as i64 / 4);
    let has_clear_margin = |occ: &VoxelGrid, c: Cell| {
        for dz in -clear..=clear {
            for dy in -clear..=clear {
                for dx in -clear..=clear {
                    let n = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if occ.in_bounds(n) && occ.get(n) {
                        return false;
                    }
                }
            }
        }
        true
    };
    let start_cell = random_free_cell(&mut rng, &occ, margin, cfg.max_attempts, |c| has_clear_margin(&occ, c))
        .ok_or_else(|| Error::Generation("no free cell for the robot start".into()))?;
    let min_goal_distance = dims[0] as i64 / 4;

    let mut keep_clear: Vec<Cell> = vec![start_cell];
    let mut targets = Vec::with_capacity(cfg.target_count);
    for i in 0..cfg.target_count {
        let spec = cfg.target_spec(i);
        let cell = random_free_cell(&mut rng, &occ, margin, cfg.max_attempts, |c| {
            chebyshev(c, start_cell) >= min_goal_distance
                && keep_clear.iter().all(|&k| chebyshev(c, k) > 2 * clear)
                && has_clear_margin(&occ, c)
        })
        .ok_or_else(|| Error::Generation(format!("no free cell for goal {i}")))?;
        keep_clear.push(cell);
        let velocity = match spec.kind {
            TargetKind::Dynamic => random_velocity(&mut rng, spec.speed),
            _ => Vec3::ZERO,
        };
        targets.push(Target {
            kind: spec.kind,
            position: Vec3::cell_center(cell),
            velocity,
            on_ticks: spec.on_ticks,
            off_ticks: spec.off_ticks,
            phase: 0,
            captured: false,
        });
    }

    let mut fro = Vec::new();
    if layers.fro {
        let floor_cells = (cfg.fill_fraction * cfg.density_cap * volume as f64).ceil() as usize;
        let floor_cells = floor_cells.min(cap_cells);
        let mut covered = occ.count_occupied();
        let mut attempts = 0usize;
        let mut max_side = cfg.fro_max_side as i64;
        while covered < floor_cells {
            if attempts >= cfg.max_attempts {
                return Err(Error::Generation(format!(
                    "density cap {} not reachable: {covered} of {floor_cells} cells after {attempts} proposals",
                    cfg.density_cap
                )));
            }
            attempts += 1;
            // Shrink proposals as the remaining budget gets small.
            let remaining = (cap_cells - covered) as i64;
            while max_side > 1 && max_side * max_side * max_side > remaining {
                max_side -= 1;
            }
            let mut size = [0i64; 3];
            for s in size.iter_mut() {
                *s = rng.random_range(1..=max_side);
            }
            let mut min_corner = [0i64; 3];
            for a in 0..3 {
                min_corner[a] = rng.random_range(0..=dims[a] as i64 - size[a]);
            }
            let cub = Cuboid::new(
                min_corner,
                [
                    min_corner[0] + size[0] - 1,
                    min_corner[1] + size[1] - 1,
                    min_corner[2] + size[2] - 1,
                ],
            );
            let blocks_keep_clear = keep_clear
                .iter()
                .any(|&k| (0..3).all(|a| k[a] + clear >= cub.min_corner[a] && k[a] - clear <= cub.max_corner[a]));
            if blocks_keep_clear {
                continue;
            }
            let mut added = 0usize;
            for z in cub.min_corner[2]..=cub.max_corner[2] {
                for y in cub.min_corner[1]..=cub.max_corner[1] {
                    for x in cub.min_corner[0]..=cub.max_corner[0] {
                        if !occ.get([x, y, z]) {
                            added += 1;
                        }
                    }
                }
            }
            if added == 0 || covered + added > cap_cells {
                continue;
            }
            occ.fill_cuboid(&cub);
            covered += added;
            fro.push(cub);
        }
    }

    let mut dynamic_obstacles = Vec::new();
    if layers.dynamic {
        for i in 0..cfg.dynamic_obstacle_count {
            let cell = random_free_cell(&mut rng, &occ, 0, cfg.max_attempts, |c| chebyshev(c, start_cell) >= 4)
                .ok_or_else(|| Error::Generation(format!("no free cell for dynamic obstacle {i}")))?;
            dynamic_obstacles.push(MovingPoint {
                position: Vec3::cell_center(cell),
                velocity: random_velocity(&mut rng, cfg.dynamic_speed_cap),
                speed_cap: cfg.dynamic_speed_cap,
            });
        }
    }

    Ok(GridMap::from(GridMapState {
        dims,
        fio,
        fro,
        dynamic_obstacles,
        targets,
        tick: 0,
        robot_start: Vec3::cell_center(start_cell),
        dynamic_radius: cfg.dynamic_radius,
        p_jitter: cfg.p_jitter,
        dynamics_seed: rng::derive_seed(seed, &[label::DYNAMICS, map_id as u64]),
    }))
}

/// Advance `position` by `velocity`, reflecting off the map box and off
/// statically occupied cells. Returns the new position and velocity.
fn reflect_advance(occ: &VoxelGrid, position: Vec3, velocity: Vec3) -> (Vec3, Vec3) {
    let dims = occ.dims();
    let mut p = position.to_array();
    let mut v = velocity.to_array();
    for a in 0..3 {
        let hi = dims[a] as f64;
        let mut n = p[a] + v[a];
        if n < 0.0 {
            n = -n;
            v[a] = -v[a];
        } else if n >= hi {
            n = 2.0 * hi - n;
            v[a] = -v[a];
        }
        // Speeds are far below a cell per tick; the clamp only catches rounding.
        p[a] = n.clamp(0.0, hi - 1e-9);
    }
    let mut next = Vec3::from_array(p);
    if occ.get(next.cell()) {
        // Undo the axes whose motion alone enters an obstacle.
        let old = position.to_array();
        let mut q = p;
        for a in 0..3 {
            let mut probe = old;
            probe[a] = p[a];
            if occ.get(Vec3::from_array(probe).cell()) {
                q[a] = old[a];
                v[a] = -v[a];
            }
        }
        next = Vec3::from_array(q);
        if occ.get(next.cell()) {
            next = position;
            v = [-v[0], -v[1], -v[2]];
        }
    }
    (next, Vec3::from_array(v))
}

/// Produce the snapshot for `tick + 1`.
///
/// Obstacles and dynamic goals take one reflected step; with probability
/// `p_jitter` an obstacle first draws a fresh velocity under its speed cap.
/// Time-varying goals need no state change: their presence is a function of
/// the tick. The random draws for a tick come from a stream keyed by the
/// tick number, so the result depends only on the input snapshot.
pub fn step_dynamics(map: &GridMap) -> GridMap {
    let next_tick = map.tick + 1;
    let mut rng = rng::stream(map.dynamics_seed, &[label::DYNAMICS, next_tick]);
    let occ = &*map.static_occupancy;
    let dynamic_obstacles = map
        .dynamic_obstacles
        .iter()
        .map(|o| {
            let mut velocity = o.velocity;
            if map.p_jitter > 0.0 && rng.random_bool(map.p_jitter) {
                velocity = random_velocity(&mut rng, o.speed_cap);
            }
            let (position, velocity) = reflect_advance(occ, o.position, velocity);
            MovingPoint {
                position,
                velocity,
                speed_cap: o.speed_cap,
            }
        })
        .collect();
    let targets = map
        .targets
        .iter()
        .map(|t| match t.kind {
            TargetKind::Dynamic if !t.captured => {
                let (position, velocity) = reflect_advance(occ, t.position, t.velocity);
                Target {
                    position,
                    velocity,
                    ..*t
                }
            }
            _ => *t,
        })
        .collect();
    GridMap {
        dynamic_obstacles,
        targets,
        tick: next_tick,
        ..map.clone()
    }
}

/// Visit the cells pierced by the segment `p0 -> p1` in order.
///
/// `visit(cell, t)` receives each cell together with the segment parameter
/// at which the walk entered it (0 for the first cell) and returns `false`
/// to stop early. Crossing parameters are computed directly from the plane
/// offset rather than accumulated, so they are exact up to one rounding.
pub fn walk_segment(p0: Vec3, p1: Vec3, mut visit: impl FnMut(Cell, f64) -> bool) {
    let mut cur = p0.cell();
    let end = p1.cell();
    let d = p1 - p0;
    let step = [
        (end[0] - cur[0]).signum(),
        (end[1] - cur[1]).signum(),
        (end[2] - cur[2]).signum(),
    ];
    if !visit(cur, 0.0) {
        return;
    }
    while cur != end {
        let mut best_axis = usize::MAX;
        let mut best_t = f64::INFINITY;
        for a in 0..3 {
            if cur[a] == end[a] {
                continue;
            }
            let plane = if step[a] > 0 { cur[a] + 1 } else { cur[a] } as f64;
            let t = (plane - p0[a]) / d[a];
            if t < best_t || best_axis == usize::MAX {
                best_t = t;
                best_axis = a;
            }
        }
        cur[best_axis] += step[best_axis];
        if !visit(cur, best_t.clamp(0.0, 1.0)) {
            return;
        }
    }
}

/// Every cell the segment passes through, from the cell of `p0` to the cell of `p1`.
pub fn raster_segment(p0: Vec3, p1: Vec3) -> Vec<Cell> {
    let mut out = Vec::new();
    walk_segment(p0, p1, |c, _| {
        out.push(c);
        true
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collision {
    /// Index `i` of the blocked segment `waypoints[i] -> waypoints[i + 1]`.
    pub segment: usize,
    pub cell: Cell,
    /// Segment parameter where the walk entered the blocked cell.
    pub t_entry: f64,
    /// Last point of the polyline before the blocked cell.
    pub truncation_point: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionScan {
    pub hit: Option<Collision>,
    /// Cells examined, including the blocked one.
    pub cells_checked: u64,
}

/// Pull-back applied to the entry point so the truncation lies in the last free cell.
pub const TRUNCATION_BACKOFF: f64 = 1e-6;

/// Rasterize the polyline segment by segment and stop at the first blocked cell.
pub fn first_collision<O: Occupancy + ?Sized>(occ: &O, waypoints: &[Vec3]) -> CollisionScan {
    let mut cells_checked = 0u64;
    for (i, seg) in waypoints.windows(2).enumerate() {
        let (a, b) = (seg[0], seg[1]);
        let mut hit = None;
        walk_segment(a, b, |cell, t| {
            cells_checked += 1;
            if occ.occupied(cell) {
                hit = Some((cell, t));
                false
            } else {
                true
            }
        });
        if let Some((cell, t_entry)) = hit {
            let len = a.distance(b);
            let truncation_point = if t_entry <= 0.0 || len == 0.0 {
                a
            } else {
                a.lerp(b, (t_entry - TRUNCATION_BACKOFF / len).max(0.0))
            };
            return CollisionScan {
                hit: Some(Collision {
                    segment: i,
                    cell,
                    t_entry,
                    truncation_point,
                }),
                cells_checked,
            };
        }
    }
    CollisionScan {
        hit: None,
        cells_checked,
    }
}
