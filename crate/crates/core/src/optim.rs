//! Plumbing shared by the three population optimizers: search domains,
//! objectives, batched evaluation and algorithm dispatch.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbo::{self, BboConfig};
use crate::error::{Error, Result};
use crate::gso::{self, GsoConfig};
use crate::iwo::{self, IwoConfig};
use crate::rng::Rng;

/// Axis-aligned box in decision space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SearchBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidConfig(
                "search box bounds must be nonempty and equal length".into(),
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::InvalidConfig("search box needs finite lo <= hi".into()));
        }
        Ok(SearchBox { lo, hi })
    }

    /// The same `[lo, hi]` interval on every one of `dim` axes.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        SearchBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diagonal(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, l), h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .all(|((v, l), h)| *l <= *v && *v <= *h)
    }

    pub fn sample_coordinate(&self, d: usize, rng: &mut Rng) -> f64 {
        if self.lo[d] == self.hi[d] {
            self.lo[d]
        } else {
            rng.random_range(self.lo[d]..=self.hi[d])
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.dim()).map(|d| self.sample_coordinate(d, rng)).collect()
    }
}

/// Feasible region of a search: a bounding box plus a projection onto the
/// region proper. For a plain box the projection is a clamp.
pub trait Domain: Sync {
    fn bounds(&self) -> &SearchBox;

    fn project(&self, x: &mut [f64]) {
        self.bounds().clamp(x)
    }

    /// A uniform draw in the bounds, projected into the region.
    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let mut x = self.bounds().sample(rng);
        self.project(&mut x);
        x
    }
}

impl Domain for SearchBox {
    fn bounds(&self) -> &SearchBox {
        self
    }
}

/// A function to be maximized.
pub trait Objective: Sync {
    fn value(&self, x: &[f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptOutcome {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub evaluations: u64,
}

/// Tracks the evaluation budget and the best point seen so far.
#[derive(Debug, Clone)]
pub(crate) struct Tally {
    pub evaluations: u64,
    pub best_x: Vec<f64>,
    pub best_value: f64,
}

impl Tally {
    pub fn new(dim: usize) -> Self {
        Tally {
            evaluations: 0,
            best_x: vec![0.0; dim],
            best_value: f64::NEG_INFINITY,
        }
    }

    /// Evaluate every point (in parallel) and fold the results into the tally.
    pub fn evaluate<O: Objective + ?Sized>(&mut self, objective: &O, xs: &[&[f64]]) -> Result<Vec<f64>> {
        let values: Vec<f64> = xs.par_iter().map(|x| objective.value(x)).collect();
        for (k, (&v, x)) in values.iter().zip(xs).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteObjective {
                    value: v,
                    evaluation: self.evaluations + k as u64,
                });
            }
            if v > self.best_value {
                self.best_value = v;
                self.best_x = x.to_vec();
            }
        }
        self.evaluations += xs.len() as u64;
        Ok(values)
    }

    pub fn finish(self) -> OptOutcome {
        OptOutcome {
            best_x: self.best_x,
            best_value: self.best_value,
            evaluations: self.evaluations,
        }
    }
}

/// Initial population: warm-start points first (projected), then uniform draws.
pub(crate) fn initial_points<D: Domain + ?Sized>(
    domain: &D,
    count: usize,
    warm: &[Vec<f64>],
    rng: &mut Rng,
) -> Vec<Vec<f64>> {
    let dim = domain.bounds().dim();
    let mut out: Vec<Vec<f64>> = warm
        .iter()
        .filter(|w| w.len() == dim)
        .take(count)
        .map(|w| {
            let mut x = w.clone();
            domain.project(&mut x);
            x
        })
        .collect();
    while out.len() < count {
        out.push(domain.sample(rng));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gso,
    Iwo,
    Bbo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Gso, Algorithm::Iwo, Algorithm::Bbo];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gso => "GSO",
            Algorithm::Iwo => "IWO",
            Algorithm::Bbo => "BBO",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gso" => Ok(Algorithm::Gso),
            "iwo" => Ok(Algorithm::Iwo),
            "bbo" => Ok(Algorithm::Bbo),
            _ => Err(Error::InvalidConfig(format!("unknown optimizer '{s}'"))),
        }
    }
}

/// Settings for all three optimizers; the planner picks one per run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub gso: GsoConfig,
    pub iwo: IwoConfig,
    pub bbo: BboConfig,
}

impl OptimizerConfig {
    pub fn iterations(&self, algo: Algorithm) -> usize {
        match algo {
            Algorithm::Gso => self.gso.iters,
            Algorithm::Iwo => self.iwo.iters,
            Algorithm::Bbo => self.bbo.iters,
        }
    }

    /// Size of the first population `algo` evaluates.
    pub fn initial_population(&self, algo: Algorithm) -> usize {
        match algo {
            Algorithm::Gso => self.gso.n_worms,
            Algorithm::Iwo => self.iwo.p_init,
            Algorithm::Bbo => self.bbo.n_hab,
        }
    }
}

/// Run `algo` on `domain` for `iters` iterations (overriding the configured count).
pub fn run_optimizer<O, D>(
    algo: Algorithm,
    cfg: &OptimizerConfig,
    objective: &O,
    domain: &D,
    iters: usize,
    seed: u64,
    warm: &[Vec<f64>],
) -> Result<OptOutcome>
where
    O: Objective + ?Sized,
    D: Domain + ?Sized,
{
    let diag = domain.bounds().diagonal();
    match algo {
        Algorithm::Gso => {
            let p = gso::GsoParams {
                iters,
                ..cfg.gso.params_for(diag)
            };
            gso::run_gso_warm(objective, domain, &p, seed, warm)
        }
        Algorithm::Iwo => {
            let p = iwo::IwoParams {
                iters,
                ..cfg.iwo.params_for(diag)
            };
            iwo::run_iwo_warm(objective, domain, &p, seed, warm)
        }
        Algorithm::Bbo => {
            let p = bbo::BboParams {
                iters,
                ..cfg.bbo.params()
            };
            bbo::run_bbo_warm(objective, domain, &p, seed, warm)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_validation_and_geometry() {
        assert!(SearchBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(SearchBox::new(vec![], vec![]).is_err());
        let b = SearchBox::cube(2, 0.0, 3.0).unwrap();
        assert!((b.diagonal() - 18f64.sqrt()).abs() < 1e-12);
        let mut x = vec![-1.0, 4.0];
        b.clamp(&mut x);
        assert_eq!(x, vec![0.0, 3.0]);
    }

    #[test]
    fn tally_rejects_non_finite() {
        let mut t = Tally::new(1);
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { x[0] };
        assert!(t.evaluate(&f, &[&[0.1]]).is_ok());
        let err = t.evaluate(&f, &[&[0.2], &[0.9]]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteObjective { evaluation: 2, .. }));
    }

    #[test]
    fn algorithm_names_parse() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("pso".parse::<Algorithm>().is_err());
    }
}
