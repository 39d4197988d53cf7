//! Biogeography-based optimization with the linear migration model.
//!
//! Habitats are ranked by fitness; rank `k` of `n` emigrates with rate
//! `mu = (n - k) / n` and immigrates with `lambda = 1 - mu`. Each coordinate
//! of a non-elite habitat is replaced, with probability `lambda`, by the same
//! coordinate of a donor drawn by roulette over `mu`, then resampled
//! uniformly with probability `mutation_prob`. The `elite_count` best
//! habitats pass through untouched.

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{initial_points, Domain, Objective, OptOutcome, Tally};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Habitat {
    pub x: Vec<f64>,
    pub fitness: f64,
    pub lambda_rate: f64,
    pub mu_rate: f64,
}

impl Habitat {
    pub fn new(x: Vec<f64>, fitness: f64) -> Self {
        Habitat {
            x,
            fitness,
            lambda_rate: 0.0,
            mu_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BboParams {
    pub n_hab: usize,
    pub iters: usize,
    pub mutation_prob: f64,
    pub elite_count: usize,
}

pub type BboConfig = BboParams;

impl Default for BboParams {
    fn default() -> Self {
        BboParams {
            n_hab: 80,
            iters: 200,
            mutation_prob: 0.02,
            elite_count: 2,
        }
    }
}

impl BboParams {
    pub fn params(&self) -> BboParams {
        *self
    }

    pub fn validate(&self) -> Result<()> {
        if self.elite_count < self.n_hab && (0.0..=1.0).contains(&self.mutation_prob) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid BBO parameters: {self:?}")))
        }
    }
}

/// Sort by fitness (best first, stable) and assign linear rates by rank.
pub fn assign_rates(mut pop: Vec<Habitat>) -> Vec<Habitat> {
    pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    let n = pop.len() as f64;
    for (k, h) in pop.iter_mut().enumerate() {
        h.mu_rate = (n - k as f64) / n;
        h.lambda_rate = 1.0 - h.mu_rate;
    }
    pop
}

/// Roulette over emigration rates, excluding habitat `skip`.
pub fn pick_donor(pop: &[Habitat], skip: usize, rng: &mut Rng) -> Option<usize> {
    let total: f64 = pop
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, h)| h.mu_rate)
        .sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (j, h) in pop.iter().enumerate() {
        if j == skip || h.mu_rate <= 0.0 {
            continue;
        }
        acc += h.mu_rate;
        last = Some(j);
        if u < acc {
            return Some(j);
        }
    }
    last
}

/// Migration on a rate-assigned population. The first `elite_count`
/// entries are exempt; donors are read from the pre-migration state.
pub fn migrate(pop: &[Habitat], elite_count: usize, rng: &mut Rng) -> Vec<Habitat> {
    let mut out = pop.to_vec();
    for (i, h) in out.iter_mut().enumerate().skip(elite_count) {
        for d in 0..h.x.len() {
            if rng.random::<f64>() < h.lambda_rate {
                if let Some(j) = pick_donor(pop, i, rng) {
                    h.x[d] = pop[j].x[d];
                }
            }
        }
    }
    out
}

/// Uniform resampling of non-elite coordinates with probability `mutation_prob`.
pub fn mutate<D: Domain + ?Sized>(pop: &[Habitat], domain: &D, p: &BboParams, rng: &mut Rng) -> Vec<Habitat> {
    let bounds = domain.bounds();
    let mut out = pop.to_vec();
    for h in out.iter_mut().skip(p.elite_count) {
        for d in 0..h.x.len() {
            if p.mutation_prob > 0.0 && rng.random::<f64>() < p.mutation_prob {
                h.x[d] = bounds.sample_coordinate(d, rng);
            }
        }
        domain.project(&mut h.x);
    }
    out
}

pub fn run_bbo<O, D>(objective: &O, domain: &D, p: &BboParams, seed: u64) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    run_bbo_warm(objective, domain, p, seed, &[])
}

pub fn run_bbo_warm<O, D>(objective: &O, domain: &D, p: &BboParams, seed: u64, warm: &[Vec<f64>]) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    run_bbo_trace(objective, domain, p, seed, warm, |_, _| {})
}

/// [`run_bbo_warm`] with an observer receiving `(rate-assigned population
/// before migration, population after mutation)` each iteration.
pub fn run_bbo_trace<O, D>(
    objective: &O,
    domain: &D,
    p: &BboParams,
    seed: u64,
    warm: &[Vec<f64>],
    mut observe: impl FnMut(&[Habitat], &[Habitat]),
) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    p.validate()?;
    let mut rng = Rng::seed_from_u64(seed);
    let mut tally = Tally::new(domain.bounds().dim());
    let xs = initial_points(domain, p.n_hab, warm, &mut rng);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let values = tally.evaluate(objective, &refs)?;
    let mut pop: Vec<Habitat> = xs.into_iter().zip(values).map(|(x, f)| Habitat::new(x, f)).collect();

    for _ in 0..p.iters {
        let ranked = assign_rates(pop);
        let migrated = migrate(&ranked, p.elite_count, &mut rng);
        let mut next = mutate(&migrated, domain, p, &mut rng);
        let refs: Vec<&[f64]> = next.iter().map(|h| h.x.as_slice()).collect();
        let values = tally.evaluate(objective, &refs)?;
        for (h, v) in next.iter_mut().zip(values) {
            h.fitness = v;
        }
        observe(&ranked, &next);
        pop = next;
    }
    Ok(tally.finish())
}
