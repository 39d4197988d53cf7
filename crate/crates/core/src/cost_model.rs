//! Composite path cost: weighted length, sharp-turn count and the distance
//! still left to the goal when an obstacle cuts the path short.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            k1: 1.0,
            k2: 50.0,
            k3: 1000.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k2 >= 0.0 && self.k3 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cost weights must satisfy k1 >= 0, k2 >= 0, k3 > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Raw cost terms of one path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostComponents {
    pub length: f64,
    pub turns: u32,
    pub left: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub c_length: f64,
    pub c_turns: u32,
    pub c_left: f64,
    pub total: f64,
}

pub fn path_length(waypoints: &[Vec3]) -> f64 {
    waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Count interior vertices whose heading change exceeds `angle_threshold`
/// radians. Zero-length segments carry no heading and are skipped.
pub fn count_turns(waypoints: &[Vec3], angle_threshold: f64) -> u32 {
    let mut turns = 0;
    let mut prev: Option<Vec3> = None;
    for w in waypoints.windows(2) {
        let d = w[1] - w[0];
        let n = d.norm();
        if n == 0.0 {
            continue;
        }
        let dir = d * (1.0 / n);
        if let Some(p) = prev {
            let angle = p.dot(dir).clamp(-1.0, 1.0).acos();
            if angle > angle_threshold {
                turns += 1;
            }
        }
        prev = Some(dir);
    }
    turns
}

/// Distance from where the path stopped to the goal, or 0 inside the capture radius.
pub fn residual(truncation_point: Vec3, target: Vec3, capture_radius: f64) -> f64 {
    let d = truncation_point.distance(target);
    if d <= capture_radius {
        0.0
    } else {
        d
    }
}

pub fn total_cost(c: CostComponents, w: &CostWeights) -> CostBreakdown {
    CostBreakdown {
        c_length: c.length,
        c_turns: c.turns,
        c_left: c.left,
        total: w.k1 * c.length + w.k2 * c.turns as f64 + w.k3 * c.left,
    }
}
