//! Invasive weed optimization.
//!
//! Weeds seed in proportion to their fitness rank inside the current
//! population, seeds land around the parent with a normal spread that
//! shrinks over the run, and when the colony outgrows `p_max` only the
//! fittest survive.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{initial_points, Domain, Objective, OptOutcome, Tally};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Weed {
    pub x: Vec<f64>,
    /// NaN until the weed has been evaluated.
    pub fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IwoParams {
    pub p_init: usize,
    pub p_max: usize,
    pub s_min: usize,
    pub s_max: usize,
    /// Nonlinear modulation index of the spread schedule.
    pub n_mod: f64,
    pub sigma_initial: f64,
    pub sigma_final: f64,
    pub iters: usize,
}

impl IwoParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.s_min <= self.s_max
            && self.p_init <= self.p_max
            && self.p_init > 0
            && self.sigma_final <= self.sigma_initial
            && self.sigma_final >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid IWO parameters: {self:?}")))
        }
    }
}

/// Config-file form of [`IwoParams`] with spreads as fractions of the box diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IwoConfig {
    pub p_init: usize,
    pub p_max: usize,
    pub s_min: usize,
    pub s_max: usize,
    pub n_mod: f64,
    pub sigma_initial_scale: f64,
    pub sigma_final_scale: f64,
    pub iters: usize,
}

impl Default for IwoConfig {
    fn default() -> Self {
        IwoConfig {
            p_init: 10,
            p_max: 30,
            s_min: 0,
            s_max: 5,
            n_mod: 3.0,
            sigma_initial_scale: 0.1,
            sigma_final_scale: 0.001,
            iters: 200,
        }
    }
}

impl IwoConfig {
    pub fn params_for(&self, diagonal: f64) -> IwoParams {
        IwoParams {
            p_init: self.p_init,
            p_max: self.p_max,
            s_min: self.s_min,
            s_max: self.s_max,
            n_mod: self.n_mod,
            sigma_initial: self.sigma_initial_scale * diagonal,
            sigma_final: self.sigma_final_scale * diagonal,
            iters: self.iters,
        }
    }
}

/// Spread of seed dispersal at iteration `iter`:
/// `((iters - iter) / iters)^n * (sigma_initial - sigma_final) + sigma_final`.
pub fn dispersal_sigma(iter: usize, p: &IwoParams) -> f64 {
    if p.iters == 0 {
        return p.sigma_final;
    }
    let frac = (p.iters as f64 - iter as f64) / p.iters as f64;
    frac.powf(p.n_mod) * (p.sigma_initial - p.sigma_final) + p.sigma_final
}

/// Seeds for a weed: fitness mapped linearly from `[f_worst, f_best]` onto
/// `[s_min, s_max]` and rounded down.
pub fn seed_count(fitness: f64, f_best: f64, f_worst: f64, p: &IwoParams) -> usize {
    if !(f_best > f_worst) {
        return p.s_min;
    }
    let frac = ((fitness - f_worst) / (f_best - f_worst)).clamp(0.0, 1.0);
    let s = p.s_min as f64 + frac * (p.s_max - p.s_min) as f64;
    (s.floor() as usize).min(p.s_max)
}

/// Append every parent's seeds, scattered with the spread of iteration
/// `iter` and projected into the domain. Children carry NaN fitness.
pub fn reproduce_and_disperse<D: Domain + ?Sized>(
    pop: &[Weed],
    iter: usize,
    p: &IwoParams,
    domain: &D,
    rng: &mut Rng,
) -> Vec<Weed> {
    let f_best = pop.iter().map(|w| w.fitness).fold(f64::NEG_INFINITY, f64::max);
    let f_worst = pop.iter().map(|w| w.fitness).fold(f64::INFINITY, f64::min);
    let sigma = dispersal_sigma(iter, p);
    let noise = Normal::new(0.0, sigma).ok();
    let mut out = pop.to_vec();
    for parent in pop {
        for _ in 0..seed_count(parent.fitness, f_best, f_worst, p) {
            let mut x: Vec<f64> = parent
                .x
                .iter()
                .map(|&v| v + noise.map_or(0.0, |n| n.sample(rng)))
                .collect();
            domain.project(&mut x);
            out.push(Weed { x, fitness: f64::NAN });
        }
    }
    out
}

/// Keep the `p_max` fittest weeds; equal fitness keeps the earlier weed.
pub fn competitive_exclusion(mut pop: Vec<Weed>, p: &IwoParams) -> Vec<Weed> {
    if pop.len() <= p.p_max {
        return pop;
    }
    pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    pop.truncate(p.p_max);
    pop
}

pub fn run_iwo<O, D>(objective: &O, domain: &D, p: &IwoParams, seed: u64) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    run_iwo_warm(objective, domain, p, seed, &[])
}

pub fn run_iwo_warm<O, D>(objective: &O, domain: &D, p: &IwoParams, seed: u64, warm: &[Vec<f64>]) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    run_iwo_trace(objective, domain, p, seed, warm, |_, _| {})
}

/// [`run_iwo_warm`] with a per-iteration observer receiving
/// `(population after exclusion, best-ever value)`.
pub fn run_iwo_trace<O, D>(
    objective: &O,
    domain: &D,
    p: &IwoParams,
    seed: u64,
    warm: &[Vec<f64>],
    mut observe: impl FnMut(&[Weed], f64),
) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    p.validate()?;
    let mut rng = Rng::seed_from_u64(seed);
    let mut tally = Tally::new(domain.bounds().dim());
    let xs = initial_points(domain, p.p_init, warm, &mut rng);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let values = tally.evaluate(objective, &refs)?;
    let mut pop: Vec<Weed> = xs
        .into_iter()
        .zip(values)
        .map(|(x, fitness)| Weed { x, fitness })
        .collect();

    for iter in 0..p.iters {
        let parents = pop.len();
        let mut grown = reproduce_and_disperse(&pop, iter, p, domain, &mut rng);
        let refs: Vec<&[f64]> = grown[parents..].iter().map(|w| w.x.as_slice()).collect();
        let values = tally.evaluate(objective, &refs)?;
        for (w, v) in grown[parents..].iter_mut().zip(values) {
            w.fitness = v;
        }
        pop = competitive_exclusion(grown, p);
        observe(&pop, tally.best_value);
    }
    Ok(tally.finish())
}
