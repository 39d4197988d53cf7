//! Glowworm swarm optimization.
//!
//! Each worm carries a luciferin level that decays and is replenished by the
//! objective at its position, moves one fixed step towards a brighter
//! neighbour picked with probability proportional to the brightness gap, and
//! adapts its neighbourhood radius towards a target neighbour count. Because
//! worms only follow brighter worms inside their own (shrinking) radius, the
//! swarm splits into groups that settle on different local maxima.
//!
//! One iteration runs the luciferin phase for the whole swarm, then the
//! movement phase, then the range phase. Movement and range updates read the
//! swarm as it stood after the luciferin phase (synchronous update).

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{initial_points, Domain, Objective, OptOutcome, Tally};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Glowworm {
    pub x: Vec<f64>,
    pub luciferin: f64,
    pub range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsoParams {
    /// Luciferin decay, in (0, 1).
    pub rho: f64,
    /// Luciferin enhancement.
    pub gamma: f64,
    /// Range adaptation gain.
    pub beta: f64,
    /// Step length.
    pub s: f64,
    /// Sensor range, the upper clamp on a worm's neighbourhood radius.
    pub r_s: f64,
    /// Desired neighbour count.
    pub n_t: f64,
    pub l0: f64,
    pub r0: f64,
    pub n_worms: usize,
    pub iters: usize,
}

impl GsoParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho < 1.0
            && self.gamma > 0.0
            && self.s > 0.0
            && self.r0 > 0.0
            && self.r0 <= self.r_s
            && self.n_worms > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid GSO parameters: {self:?}")))
        }
    }
}

/// Config-file form of [`GsoParams`]: step and radii are fractions of the
/// search box diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsoConfig {
    pub rho: f64,
    pub gamma: f64,
    pub beta: f64,
    pub n_t: f64,
    pub l0: f64,
    pub n_worms: usize,
    pub iters: usize,
    pub step_scale: f64,
    pub sensor_scale: f64,
    pub initial_range_scale: f64,
}

impl Default for GsoConfig {
    fn default() -> Self {
        GsoConfig {
            rho: 0.4,
            gamma: 0.6,
            beta: 0.08,
            n_t: 5.0,
            l0: 5.0,
            n_worms: 50,
            iters: 200,
            step_scale: 0.03,
            sensor_scale: 0.25,
            initial_range_scale: 0.25,
        }
    }
}

impl GsoConfig {
    pub fn params_for(&self, diagonal: f64) -> GsoParams {
        GsoParams {
            rho: self.rho,
            gamma: self.gamma,
            beta: self.beta,
            s: self.step_scale * diagonal,
            r_s: self.sensor_scale * diagonal,
            n_t: self.n_t,
            l0: self.l0,
            r0: self.initial_range_scale * diagonal,
            n_worms: self.n_worms,
            iters: self.iters,
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `luciferin <- (1 - rho) * luciferin + gamma * J`.
pub fn luciferin_update(worm: &Glowworm, j_value: f64, p: &GsoParams) -> Glowworm {
    Glowworm {
        luciferin: (1.0 - p.rho) * worm.luciferin + p.gamma * j_value,
        ..worm.clone()
    }
}

/// Brighter worms strictly inside worm `i`'s range. Worms sharing `i`'s exact
/// position are skipped since they give no direction to move in.
pub fn neighbors(i: usize, swarm: &[Glowworm]) -> Vec<usize> {
    let me = &swarm[i];
    swarm
        .iter()
        .enumerate()
        .filter(|&(j, w)| {
            if j == i || !(me.luciferin < w.luciferin) {
                return false;
            }
            let d = distance(&me.x, &w.x);
            d > 0.0 && d < me.range
        })
        .map(|(j, _)| j)
        .collect()
}

/// Probability of worm `i` heading for each entry of `nbrs`.
pub fn selection_probabilities(i: usize, swarm: &[Glowworm], nbrs: &[usize]) -> Result<Vec<f64>> {
    let li = swarm[i].luciferin;
    let gaps: Vec<f64> = nbrs.iter().map(|&j| swarm[j].luciferin - li).collect();
    let total: f64 = gaps.iter().sum();
    let probs: Vec<f64> = gaps.iter().map(|g| g / total).collect();
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteProbability { worm: i });
    }
    Ok(probs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub worm: Glowworm,
    pub n_neighbors: usize,
    /// Index of the worm moved towards, if any.
    pub toward: Option<usize>,
}

/// Pick a brighter neighbour by roulette and step `s` towards it, then
/// project into the domain. Without neighbours the worm stays put.
pub fn select_and_move<D: Domain + ?Sized>(
    i: usize,
    swarm: &[Glowworm],
    p: &GsoParams,
    domain: &D,
    rng: &mut Rng,
) -> Result<Move> {
    let nbrs = neighbors(i, swarm);
    let me = &swarm[i];
    if nbrs.is_empty() {
        return Ok(Move {
            worm: me.clone(),
            n_neighbors: 0,
            toward: None,
        });
    }
    let probs = selection_probabilities(i, swarm, &nbrs)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = *nbrs.last().unwrap();
    for (&j, &pj) in nbrs.iter().zip(&probs) {
        acc += pj;
        if u < acc {
            pick = j;
            break;
        }
    }
    let target = &swarm[pick];
    let d = distance(&me.x, &target.x);
    let mut x: Vec<f64> =
        me.x.iter()
            .zip(&target.x)
            .map(|(xi, xj)| xi + p.s * (xj - xi) / d)
            .collect();
    domain.project(&mut x);
    Ok(Move {
        worm: Glowworm { x, ..me.clone() },
        n_neighbors: nbrs.len(),
        toward: Some(pick),
    })
}

/// `range <- min(r_s, max(0, range + beta * (n_t - n_neighbors)))`.
pub fn range_update(worm: &Glowworm, n_neighbors: usize, p: &GsoParams) -> Glowworm {
    let r = worm.range + p.beta * (p.n_t - n_neighbors as f64);
    Glowworm {
        range: r.max(0.0).min(p.r_s),
        ..worm.clone()
    }
}

/// Full swarm state after a run, for callers that inspect the final spread.
#[derive(Debug, Clone)]
pub struct GsoRun {
    pub outcome: OptOutcome,
    pub swarm: Vec<Glowworm>,
}

pub fn run_gso<O, D>(objective: &O, domain: &D, p: &GsoParams, seed: u64) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    run_gso_warm(objective, domain, p, seed, &[])
}

pub fn run_gso_warm<O, D>(objective: &O, domain: &D, p: &GsoParams, seed: u64, warm: &[Vec<f64>]) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    Ok(run_gso_swarm(objective, domain, p, seed, warm)?.outcome)
}

pub fn run_gso_swarm<O, D>(objective: &O, domain: &D, p: &GsoParams, seed: u64, warm: &[Vec<f64>]) -> Result<GsoRun>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    p.validate()?;
    let mut rng = Rng::seed_from_u64(seed);
    let mut tally = Tally::new(domain.bounds().dim());
    let mut swarm: Vec<Glowworm> = initial_points(domain, p.n_worms, warm, &mut rng)
        .into_iter()
        .map(|x| Glowworm {
            x,
            luciferin: p.l0,
            range: p.r0,
        })
        .collect();

    for _ in 0..p.iters {
        let xs: Vec<&[f64]> = swarm.iter().map(|w| w.x.as_slice()).collect();
        let values = tally.evaluate(objective, &xs)?;
        swarm = swarm
            .iter()
            .zip(&values)
            .map(|(w, &j)| luciferin_update(w, j, p))
            .collect();

        let mut moved = Vec::with_capacity(swarm.len());
        for i in 0..swarm.len() {
            let m = select_and_move(i, &swarm, p, domain, &mut rng)?;
            moved.push(range_update(&m.worm, m.n_neighbors, p));
        }
        swarm = moved;
    }
    // Score the final positions so the last movement phase is not wasted.
    let xs: Vec<&[f64]> = swarm.iter().map(|w| w.x.as_slice()).collect();
    tally.evaluate(objective, &xs)?;
    Ok(GsoRun {
        outcome: tally.finish(),
        swarm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::SearchBox;

    fn params() -> GsoParams {
        GsoConfig::default().params_for(1.0)
    }

    fn worm(x: &[f64], l: f64, r: f64) -> Glowworm {
        Glowworm {
            x: x.to_vec(),
            luciferin: l,
            range: r,
        }
    }

    #[test]
    fn luciferin_examples() {
        let w = worm(&[0.0], 5.0, 1.0);
        let p = GsoParams {
            rho: 0.0,
            gamma: 1.0,
            ..params()
        };
        assert_eq!(luciferin_update(&w, 10.0, &p).luciferin, 15.0);
        let p = GsoParams {
            rho: 1.0,
            gamma: 0.0,
            ..params()
        };
        assert_eq!(luciferin_update(&w, 10.0, &p).luciferin, 0.0);
        let p = GsoParams {
            rho: 0.4,
            gamma: 0.6,
            ..params()
        };
        assert!((luciferin_update(&w, 10.0, &p).luciferin - 9.0).abs() < 1e-12);
    }

    #[test]
    fn neighbor_rules() {
        let swarm = vec![worm(&[0.0], 1.0, 1.0), worm(&[0.5], 1.0, 1.0)];
        assert!(neighbors(0, &swarm).is_empty());
        let swarm = vec![worm(&[0.0], 1.0, 1.0), worm(&[2.0], 5.0, 1.0), worm(&[0.5], 3.0, 1.0)];
        assert_eq!(neighbors(0, &swarm), vec![2]);
        // Coincident brighter worm is not a neighbour.
        let swarm = vec![worm(&[0.0], 1.0, 1.0), worm(&[0.0], 5.0, 1.0)];
        assert!(neighbors(0, &swarm).is_empty());
    }

    #[test]
    fn single_neighbor_step_is_exactly_s() {
        let b = SearchBox::cube(3, -10.0, 10.0).unwrap();
        let p = GsoParams { s: 0.3, ..params() };
        let swarm = vec![worm(&[0.0, 0.0, 0.0], 1.0, 5.0), worm(&[1.0, 2.0, 2.0], 2.0, 5.0)];
        let mut rng = Rng::seed_from_u64(1);
        let m = select_and_move(0, &swarm, &p, &b, &mut rng).unwrap();
        assert_eq!(m.toward, Some(1));
        assert_eq!(m.n_neighbors, 1);
        assert!((distance(&m.worm.x, &swarm[0].x) - 0.3).abs() < 1e-12);
        assert!((m.worm.x[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn no_neighbors_no_move() {
        let b = SearchBox::cube(2, -1.0, 1.0).unwrap();
        let swarm = vec![worm(&[0.0, 0.0], 5.0, 1.0), worm(&[0.1, 0.0], 1.0, 1.0)];
        let mut rng = Rng::seed_from_u64(1);
        let m = select_and_move(0, &swarm, &params(), &b, &mut rng).unwrap();
        assert_eq!(m.worm, swarm[0]);
        assert_eq!(m.toward, None);
    }

    #[test]
    fn range_examples() {
        let p = GsoParams {
            beta: 0.08,
            n_t: 5.0,
            r_s: 3.0,
            ..params()
        };
        let w = worm(&[0.0], 1.0, 1.0);
        assert_eq!(range_update(&w, 5, &p).range, 1.0);
        assert!((range_update(&w, 2, &p).range - 1.24).abs() < 1e-12);
        let top = worm(&[0.0], 1.0, 3.0);
        assert_eq!(range_update(&top, 0, &p).range, 3.0);
        assert_eq!(range_update(&w, 1000, &p).range, 0.0);
    }

    #[test]
    fn constant_objective_never_moves() {
        let b = SearchBox::cube(2, 0.0, 1.0).unwrap();
        let p = GsoParams {
            n_worms: 20,
            iters: 30,
            ..GsoConfig::default().params_for(b.diagonal())
        };
        let run = run_gso_swarm(&|_: &[f64]| 2.5, &b, &p, 3, &[]).unwrap();
        assert_eq!(run.outcome.best_value, 2.5);
        assert_eq!(run.outcome.evaluations, 20 * 31);
        let init = initial_points(&b, 20, &[], &mut Rng::seed_from_u64(3));
        for (w, x0) in run.swarm.iter().zip(&init) {
            assert!(distance(&w.x, x0) <= p.s * p.iters as f64);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let b = SearchBox::cube(1, 0.0, 1.0).unwrap();
        let p = GsoParams { rho: 1.5, ..params() };
        assert!(run_gso(&|x: &[f64]| x[0], &b, &p, 0).is_err());
        let p = GsoParams {
            r0: 2.0,
            r_s: 1.0,
            ..params()
        };
        assert!(run_gso(&|x: &[f64]| x[0], &b, &p, 0).is_err());
    }

    #[test]
    fn objective_fault_propagates() {
        let b = SearchBox::cube(1, 0.0, 1.0).unwrap();
        let r = run_gso(&|_: &[f64]| f64::INFINITY, &b, &params(), 0);
        assert!(matches!(r, Err(Error::NonFiniteObjective { .. })));
    }
}
