//! Experiment matrices: algorithm x map (x density) x seed, aggregated into
//! per-cell tables.
//!
//! A spec file is TOML:
//!
//! ```toml
//! algorithms = ["GSO", "hGSO", "IWO", "hIWO", "BBO", "hBBO"]
//! maps = [1, 2, 3, 4, 5]
//! densities = []          # map 5 only, e.g. [0.30, 0.25, 0.20]
//! seed_count = 20         # or an explicit list: seeds = [1, 2, 3]
//! master_seed = 2024
//! scale = "desk"          # "desk" (32^3) or "paper" (64^3)
//! clock = "tick"          # "tick" (reproducible) or "wall"
//! write_trajectories = false
//!
//! [map]                   # MapConfig fields overriding the scale defaults
//! dynamic_obstacle_count = 4
//!
//! [planner]               # PlannerConfig fields, nested tables merge
//! tick_budget = 1500
//! ```
//!
//! Seed splitting: the world of a cell is generated from
//! `derive_seed(master_seed, [CELL, map, density bits, seed])`, so every
//! algorithm faces the same worlds. The planner inside an episode draws from
//! `derive_seed(world_seed, [PLAN, algorithm code])`. Cells therefore do not
//! depend on execution order or thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_world::MapConfig;
use crate::planner::{run_episode, Clock, EpisodeMetrics, EpisodeSummary, PlannerAlgo, PlannerConfig};
use crate::rng::{self, label};
use crate::trajectory::TrajectoryLog;

pub const DEFAULT_SEED_COUNT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub algorithms: Vec<PlannerAlgo>,
    pub maps: Vec<u8>,
    #[serde(default)]
    pub densities: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub seed_count: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default = "default_clock")]
    pub clock: Clock,
    #[serde(default)]
    pub write_trajectories: bool,
    #[serde(default)]
    pub map: toml::Table,
    #[serde(default)]
    pub planner: toml::Table,
}

fn default_clock() -> Clock {
    Clock::Tick
}

impl ExperimentSpec {
    /// Every algorithm on maps 1-5.
    pub fn experiment1() -> Self {
        ExperimentSpec {
            algorithms: PlannerAlgo::ALL.to_vec(),
            maps: vec![1, 2, 3, 4, 5],
            densities: Vec::new(),
            seeds: Vec::new(),
            seed_count: None,
            master_seed: 0,
            scale: Scale::Desk,
            clock: Clock::Tick,
            write_trajectories: false,
            map: toml::Table::new(),
            planner: toml::Table::new(),
        }
    }

    /// Every algorithm on map 5 at 30, 25 and 20 % static density.
    pub fn experiment2() -> Self {
        ExperimentSpec {
            maps: vec![5],
            densities: vec![0.30, 0.25, 0.20],
            ..ExperimentSpec::experiment1()
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentSpec::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() || self.maps.is_empty() {
            return Err(Error::InvalidConfig(
                "spec needs at least one algorithm and one map".into(),
            ));
        }
        if let Some(m) = self.maps.iter().find(|m| !(1..=5).contains(*m)) {
            return Err(Error::InvalidConfig(format!("unknown map id {m}")));
        }
        if !self.densities.is_empty() && self.maps != [5] {
            return Err(Error::InvalidConfig("densities are only valid with maps = [5]".into()));
        }
        if let Some(d) = self.densities.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::InvalidConfig(format!("density {d} outside [0, 1]")));
        }
        if !self.seeds.is_empty() && self.seed_count.is_some() {
            return Err(Error::InvalidConfig("give either seeds or seed_count, not both".into()));
        }
        self.map_config()?;
        self.planner_config()?;
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.seed_count.unwrap_or(DEFAULT_SEED_COUNT) as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Scale defaults with the `[map]` table merged on top.
    pub fn map_config(&self) -> Result<MapConfig> {
        let base = match self.scale {
            Scale::Desk => MapConfig::desk_scale(),
            Scale::Paper => MapConfig::paper_scale(),
        };
        let cfg: MapConfig = merge_overrides(&base, &self.map, "map")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn planner_config(&self) -> Result<PlannerConfig> {
        let base = PlannerConfig {
            clock: self.clock,
            ..PlannerConfig::default()
        };
        let cfg: PlannerConfig = merge_overrides(&base, &self.planner, "planner")?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge_overrides<T>(base: &T, overrides: &toml::Table, what: &str) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let bad = |e: &dyn std::fmt::Display| Error::InvalidConfig(format!("[{what}] overrides: {e}"));
    let mut value = toml::Value::try_from(base).map_err(|e| bad(&e))?;
    merge(&mut value, overrides);
    value.try_into().map_err(|e| bad(&e))
}

fn merge(into: &mut toml::Value, from: &toml::Table) {
    let toml::Value::Table(t) = into else {
        *into = toml::Value::Table(from.clone());
        return;
    };
    for (k, v) in from {
        match (t.get_mut(k), v) {
            (Some(existing @ toml::Value::Table(_)), toml::Value::Table(sub)) => merge(existing, sub),
            _ => {
                t.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Identity of one world configuration: map id and optional density override.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub map: u8,
    pub density: Option<f64>,
}

impl Scenario {
    fn density_bits(&self) -> u64 {
        self.density.map_or(0, f64::to_bits)
    }

    /// Seed for the world of this scenario and repetition.
    pub fn world_seed(&self, master_seed: u64, seed: u64) -> u64 {
        rng::derive_seed(master_seed, &[label::CELL, self.map as u64, self.density_bits(), seed])
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub algorithm: PlannerAlgo,
    pub scenario: Scenario,
    pub seed: u64,
    pub result: std::result::Result<(EpisodeMetrics, EpisodeSummary), String>,
    pub log: Option<TrajectoryLog>,
}

/// One aggregated table row. Statistics are `None` when every episode of
/// the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub algorithm: PlannerAlgo,
    pub map: u8,
    pub density: Option<f64>,
    pub seed_count: usize,
    pub elapsed_ms_mean: Option<f64>,
    pub elapsed_ms_median: Option<f64>,
    pub expanded_nodes_mean: Option<f64>,
    pub expanded_nodes_median: Option<f64>,
    pub cost_mean: Option<f64>,
    pub cost_median: Option<f64>,
    pub failures: usize,
}

pub const COLUMNS: [&str; 11] = [
    "algorithm",
    "map",
    "density",
    "seed_count",
    "elapsed_ms_mean",
    "elapsed_ms_median",
    "expanded_nodes_mean",
    "expanded_nodes_median",
    "cost_mean",
    "cost_median",
    "failures",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone)]
pub struct MatrixResult {
    pub table: ResultTable,
    pub episodes: Vec<EpisodeRecord>,
}

pub fn scenarios(spec: &ExperimentSpec) -> Vec<Scenario> {
    let mut out = Vec::new();
    for &map in &spec.maps {
        if spec.densities.is_empty() {
            out.push(Scenario { map, density: None });
        } else {
            out.extend(spec.densities.iter().map(|&d| Scenario { map, density: Some(d) }));
        }
    }
    out
}

/// Run every cell of the matrix in parallel. A failed episode is counted
/// in its row's `failures` and left out of the statistics.
pub fn run_matrix(spec: &ExperimentSpec) -> Result<MatrixResult> {
    spec.validate()?;
    let base_map = spec.map_config()?;
    let planner = spec.planner_config()?;
    let mut jobs = Vec::new();
    for &algorithm in &spec.algorithms {
        for scenario in scenarios(spec) {
            for seed in spec.seed_list() {
                jobs.push((algorithm, scenario, seed));
            }
        }
    }
    let episodes: Vec<EpisodeRecord> = jobs
        .into_par_iter()
        .map(|(algorithm, scenario, seed)| {
            let mut map_cfg = base_map.clone();
            if let Some(d) = scenario.density {
                map_cfg.density_cap = d;
            }
            let world_seed = scenario.world_seed(spec.master_seed, seed);
            let out = run_episode(scenario.map, algorithm, &map_cfg, &planner, world_seed);
            let (result, log) = match out {
                Ok(o) => (Ok((o.metrics, o.summary)), spec.write_trajectories.then_some(o.log)),
                Err(e) => (Err(e.to_string()), None),
            };
            EpisodeRecord {
                algorithm,
                scenario,
                seed,
                result,
                log,
            }
        })
        .collect();
    Ok(MatrixResult {
        table: aggregate(&episodes),
        episodes,
    })
}

fn mean_median(mut v: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    (Some(mean), Some(median))
}

/// Group episodes by (map, density, algorithm) and reduce each group.
/// Values are sorted before summing, so the result does not depend on the
/// order of `episodes`.
pub fn aggregate(episodes: &[EpisodeRecord]) -> ResultTable {
    type Key = (u8, u64, PlannerAlgo);
    let mut groups: BTreeMap<Key, Vec<&EpisodeRecord>> = BTreeMap::new();
    for e in episodes {
        groups
            .entry((e.scenario.map, e.scenario.density_bits(), e.algorithm))
            .or_default()
            .push(e);
    }
    let mut rows: Vec<TableRow> = groups
        .into_values()
        .map(|g| {
            let ok: Vec<&EpisodeMetrics> = g
                .iter()
                .filter_map(|e| e.result.as_ref().ok().map(|(m, _)| m))
                .collect();
            let (elapsed_ms_mean, elapsed_ms_median) = mean_median(ok.iter().map(|m| m.elapsed_ms as f64).collect());
            let (expanded_nodes_mean, expanded_nodes_median) =
                mean_median(ok.iter().map(|m| m.expanded_nodes as f64).collect());
            let (cost_mean, cost_median) = mean_median(ok.iter().map(|m| m.cost).collect());
            TableRow {
                algorithm: g[0].algorithm,
                map: g[0].scenario.map,
                density: g[0].scenario.density,
                seed_count: g.len(),
                elapsed_ms_mean,
                elapsed_ms_median,
                expanded_nodes_mean,
                expanded_nodes_median,
                cost_mean,
                cost_median,
                failures: g.len() - ok.len(),
            }
        })
        .collect();
    // Densities descend as in the paper's tables (30 %, 25 %, 20 %).
    rows.sort_by(|a, b| {
        a.map
            .cmp(&b.map)
            .then(b.density.unwrap_or(0.0).total_cmp(&a.density.unwrap_or(0.0)))
            .then(a.algorithm.cmp(&b.algorithm))
    });
    ResultTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidConfig(format!("unknown output format '{s}'"))),
        }
    }
}

impl ResultTable {
    pub fn to_bytes(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
                let invalid = |e: csv::Error| Error::InvalidConfig(format!("csv encoding: {e}"));
                w.write_record(COLUMNS).map_err(invalid)?;
                for r in &self.rows {
                    w.serialize(r).map_err(invalid)?;
                }
                w.into_inner()
                    .map_err(|e| Error::InvalidConfig(format!("csv encoding: {e}")))
            }
            Format::Json => {
                let mut out = serde_json::to_vec_pretty(&self.rows)
                    .map_err(|e| Error::InvalidConfig(format!("json encoding: {e}")))?;
                out.push(b'\n');
                Ok(out)
            }
        }
    }
}

pub fn emit(table: &ResultTable, format: Format, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_bytes(format)?).map_err(|e| Error::io(path, e))
}

/// One line per episode, for analyses beyond the aggregated table.
#[derive(Debug, Serialize)]
struct EpisodeRow<'a> {
    algorithm: PlannerAlgo,
    map: u8,
    density: Option<f64>,
    seed: u64,
    elapsed_ms: Option<u64>,
    expanded_nodes: Option<u64>,
    cost: Option<f64>,
    ticks: Option<u64>,
    captured: Option<usize>,
    budget_exhausted: Option<bool>,
    plans: Option<u64>,
    blocked_plans: Option<u64>,
    waits: Option<u64>,
    escapes: Option<u64>,
    fallbacks: Option<u64>,
    error: Option<&'a str>,
}

pub fn episodes_csv(episodes: &[EpisodeRecord]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&EpisodeRecord> = episodes.iter().collect();
    sorted.sort_by(|a, b| {
        (a.scenario.map, a.algorithm, a.seed)
            .cmp(&(b.scenario.map, b.algorithm, b.seed))
            .then(
                b.scenario
                    .density
                    .unwrap_or(0.0)
                    .total_cmp(&a.scenario.density.unwrap_or(0.0)),
            )
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in sorted {
        let (m, s, err) = match &e.result {
            Ok((m, s)) => (Some(m), Some(s), None),
            Err(msg) => (None, None, Some(msg.as_str())),
        };
        w.serialize(EpisodeRow {
            algorithm: e.algorithm,
            map: e.scenario.map,
            density: e.scenario.density,
            seed: e.seed,
            elapsed_ms: m.map(|m| m.elapsed_ms),
            expanded_nodes: m.map(|m| m.expanded_nodes),
            cost: m.map(|m| m.cost),
            ticks: s.map(|s| s.ticks),
            captured: s.map(|s| s.captured),
            budget_exhausted: s.map(|s| s.budget_exhausted),
            plans: s.map(|s| s.plans),
            blocked_plans: s.map(|s| s.blocked_plans),
            waits: s.map(|s| s.waits),
            escapes: s.map(|s| s.escapes),
            fallbacks: s.map(|s| s.fallbacks),
            error: err,
        })
        .map_err(|e| Error::InvalidConfig(format!("csv encoding: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv encoding: {e}")))
}

pub fn trajectory_file_name(e: &EpisodeRecord) -> String {
    match e.scenario.density {
        Some(d) => format!("{}_map{}_d{}_seed{}.csv", e.algorithm, e.scenario.map, d, e.seed),
        None => format!("{}_map{}_seed{}.csv", e.algorithm, e.scenario.map, e.seed),
    }
}

/// Write `results.csv`, `results.json`, `episodes.csv` and, when kept,
/// the trajectory logs under `trajectories/`. Returns the paths written.
pub fn write_outputs(result: &MatrixResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (name, format) in [("results.csv", Format::Csv), ("results.json", Format::Json)] {
        let p = out_dir.join(name);
        emit(&result.table, format, &p)?;
        written.push(p);
    }
    let p = out_dir.join("episodes.csv");
    std::fs::write(&p, episodes_csv(&result.episodes)?).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    let logs: Vec<&EpisodeRecord> = result.episodes.iter().filter(|e| e.log.is_some()).collect();
    if !logs.is_empty() {
        let dir = out_dir.join("trajectories");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for e in logs {
            let p = dir.join(trajectory_file_name(e));
            e.log.as_ref().expect("filtered").write(&p)?;
            written.push(p);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Algorithm;

    fn row(algo: PlannerAlgo, map: u8) -> TableRow {
        TableRow {
            algorithm: algo,
            map,
            density: None,
            seed_count: 2,
            elapsed_ms_mean: Some(1.5),
            elapsed_ms_median: Some(1.5),
            expanded_nodes_mean: Some(10.0),
            expanded_nodes_median: Some(10.0),
            cost_mean: Some(3.25),
            cost_median: Some(3.25),
            failures: 0,
        }
    }

    #[test]
    fn header_only_and_single_row() {
        let empty = ResultTable::default().to_bytes(Format::Csv).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), COLUMNS.join(",") + "\n");
        let one = ResultTable {
            rows: vec![row(PlannerAlgo::hierarchical(Algorithm::Gso), 3)],
        };
        let text = String::from_utf8(one.to_bytes(Format::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').count(), 11);
        assert!(lines[1].starts_with("hGSO,3,,2,"));
        assert_eq!(one.to_bytes(Format::Csv).unwrap(), one.to_bytes(Format::Csv).unwrap());
        let json: serde_json::Value = serde_json::from_slice(&one.to_bytes(Format::Json).unwrap()).unwrap();
        assert_eq!(json[0]["algorithm"], "hGSO");
    }

    #[test]
    fn spec_parsing_and_overrides() {
        let text = r#"
            algorithms = ["GSO", "hbbo"]
            maps = [5]
            densities = [0.3, 0.2]
            seed_count = 3
            [map]
            dynamic_obstacle_count = 2
            [planner]
            tick_budget = 77
            [planner.optimizer.gso]
            n_worms = 12
        "#;
        let spec = ExperimentSpec::parse(text, Path::new("t.toml")).unwrap();
        assert_eq!(spec.algorithms[1], PlannerAlgo::hierarchical(Algorithm::Bbo));
        assert_eq!(spec.seed_list(), vec![0, 1, 2]);
        assert_eq!(spec.map_config().unwrap().dynamic_obstacle_count, 2);
        assert_eq!(spec.map_config().unwrap().dims, [32, 32, 32]);
        let p = spec.planner_config().unwrap();
        assert_eq!((p.tick_budget, p.optimizer.gso.n_worms), (77, 12));
        assert_eq!(p.optimizer.gso.rho, PlannerConfig::default().optimizer.gso.rho);
        assert_eq!(scenarios(&spec).len(), 2);
    }

    #[test]
    fn spec_rejections() {
        let p = Path::new("t.toml");
        assert!(ExperimentSpec::parse("algorithms = []\nmaps = [1]", p).is_err());
        assert!(ExperimentSpec::parse("algorithms = [\"GSO\"]\nmaps = [6]", p).is_err());
        assert!(ExperimentSpec::parse("algorithms = [\"GSO\"]\nmaps = [1, 5]\ndensities = [0.2]", p).is_err());
        assert!(ExperimentSpec::parse("algorithms = [\"PSO\"]\nmaps = [1]", p).is_err());
        assert!(ExperimentSpec::parse("algorithms = [\"GSO\"]\nmaps = [1]\nbogus = 1", p).is_err());
        assert!(ExperimentSpec::parse("algorithms = [\"GSO\"]\nmaps = [1]\n[planner]\nbogus = 1", p).is_err());
    }

    #[test]
    fn aggregation_ignores_order_and_counts_failures() {
        let s = Scenario { map: 2, density: None };
        let mk = |seed: u64, cost: f64| EpisodeRecord {
            algorithm: PlannerAlgo::flat(Algorithm::Iwo),
            scenario: s,
            seed,
            result: Ok((
                EpisodeMetrics {
                    elapsed_ms: seed,
                    expanded_nodes: 10 * seed,
                    cost,
                },
                EpisodeSummary::default(),
            )),
            log: None,
        };
        let mut eps = vec![mk(1, 0.1), mk(2, 0.75), mk(3, 1e16), mk(4, 0.25)];
        eps.push(EpisodeRecord {
            result: Err("boom".into()),
            ..mk(5, 0.0)
        });
        let a = aggregate(&eps);
        eps.reverse();
        let b = aggregate(&eps);
        assert_eq!(a, b);
        let r = &a.rows[0];
        assert_eq!((r.seed_count, r.failures), (5, 1));
        assert_eq!(r.elapsed_ms_median, Some(2.5));
        assert_eq!(r.cost_median, Some(0.5));
    }

    #[test]
    fn world_seed_is_shared_across_algorithms() {
        let s = Scenario {
            map: 5,
            density: Some(0.2),
        };
        assert_eq!(s.world_seed(9, 1), s.world_seed(9, 1));
        assert_ne!(s.world_seed(9, 1), s.world_seed(9, 2));
        assert_ne!(
            s.world_seed(9, 1),
            Scenario {
                density: Some(0.25),
                ..s
            }
            .world_seed(9, 1)
        );
    }
}
