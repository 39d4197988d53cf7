//! Trajectory log format and safety replay.
//!
//! A log is comma-delimited text. Lines starting with `#` are header
//! comments; the first ones are `key=value` metadata and one of them,
//! `world=<json>`, holds the complete initial world snapshot. The remaining
//! lines are one record per tick:
//!
//! ```text
//! # swarmplan-trajectory v1
//! # algorithm=hGSO
//! # map=5
//! # seed=3
//! # world={"dims":[32,32,32],...}
//! tick,x,y,z,action,plan_id
//! 0,4.5,7.5,2.5,start,0
//! 1,5.5,7.5,2.5,plan|move,1
//! ```
//!
//! `action` is a `|`-joined list of tokens: `start`, `plan`, `replan`,
//! `move`, `wait`, `hold`, `idle`, `escape`, `stuck`, and `capture:<i>`
//! for goal `i`. `plan_id` is 0 before the first plan. Numbers use Rust's
//! shortest round-trip formatting so a replay sees bit-identical positions.
//! Any plotting tool that skips `#` comments reads the file directly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid_world::{is_occupied, step_dynamics, GridMap};

pub const MAGIC: &str = "swarmplan-trajectory v1";
pub const COLUMNS: &str = "tick,x,y,z,action,plan_id";

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub position: Vec3,
    pub actions: Vec<String>,
    pub plan_id: u64,
}

impl TickRecord {
    pub fn captures(&self) -> impl Iterator<Item = usize> + '_ {
        self.actions
            .iter()
            .filter_map(|a| a.strip_prefix("capture:")?.parse().ok())
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub meta: Vec<(String, String)>,
    pub world: GridMap,
    pub records: Vec<TickRecord>,
}

impl TrajectoryLog {
    pub fn new(world: GridMap) -> Self {
        TrajectoryLog {
            meta: Vec::new(),
            world,
            records: Vec::new(),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {MAGIC}");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        let world = serde_json::to_string(&self.world).expect("world snapshot serializes");
        let _ = writeln!(out, "# world={world}");
        let _ = writeln!(out, "{COLUMNS}");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.tick,
                r.position.x,
                r.position.y,
                r.position.z,
                r.actions.join("|"),
                r.plan_id
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::MalformedLog {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_start_matches('#').trim() == MAGIC => {}
            _ => return Err(bad(1, "missing trajectory header")),
        }
        let mut meta = Vec::new();
        let mut world = None;
        let mut records = Vec::new();
        let mut seen_columns = false;
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                let Some((k, v)) = rest.split_once('=') else {
                    continue;
                };
                if k == "world" {
                    let w: GridMap = serde_json::from_str(v).map_err(|e| bad(n, &format!("world snapshot: {e}")))?;
                    world = Some(w);
                } else {
                    meta.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if !seen_columns {
                if line.trim() != COLUMNS {
                    return Err(bad(n, "expected column header"));
                }
                seen_columns = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(n, "expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad coordinate"));
            records.push(TickRecord {
                tick: f[0].parse().map_err(|_| bad(n, "bad tick"))?,
                position: Vec3::new(num(f[1])?, num(f[2])?, num(f[3])?),
                actions: f[4].split('|').filter(|s| !s.is_empty()).map(str::to_string).collect(),
                plan_id: f[5].parse().map_err(|_| bad(n, "bad plan id"))?,
            });
        }
        let world = world.ok_or_else(|| bad(0, "no world snapshot in header"))?;
        Ok(TrajectoryLog { meta, world, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrajectoryLog::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub tick: u64,
    pub position: Vec3,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub ticks_checked: usize,
    pub captures: usize,
    pub violations: Vec<Violation>,
}

impl ReplayReport {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-simulate the world from the logged snapshot and check every record.
///
/// A record is a violation when the robot's cell is occupied in the world
/// state of that tick, when ticks skip or go backwards, or when a goal is
/// captured twice.
pub fn replay(log: &TrajectoryLog) -> ReplayReport {
    let mut world = log.world.clone();
    let mut violations = Vec::new();
    let mut captures = 0;
    for (expected_tick, r) in (world.tick..).zip(&log.records) {
        if r.tick != expected_tick {
            violations.push(Violation {
                tick: r.tick,
                position: r.position,
                reason: format!("expected tick {expected_tick}"),
            });
            break;
        }
        while world.tick < r.tick {
            world = step_dynamics(&world);
        }
        if is_occupied(&world, r.position.cell()) {
            violations.push(Violation {
                tick: r.tick,
                position: r.position,
                reason: format!("robot cell {:?} is occupied", r.position.cell()),
            });
        }
        for i in r.captures() {
            match world.targets.get_mut(i) {
                Some(t) if !t.captured => {
                    t.captured = true;
                    captures += 1;
                }
                _ => violations.push(Violation {
                    tick: r.tick,
                    position: r.position,
                    reason: format!("invalid capture of goal {i}"),
                }),
            }
        }
    }
    ReplayReport {
        ticks_checked: log.records.len(),
        captures,
        violations,
    }
}
