mod common;

use swarmplan::bbo::{assign_rates, pick_donor, Habitat};
use swarmplan::optim::{run_optimizer, Algorithm, OptimizerConfig, SearchBox};
use swarmplan::rng;
use swarmplan::testfns::{shifted_quadratic, TestFunction};

use common::chi_square_p;

#[test]
fn bbo_finds_a_one_dimensional_peak() {
    let domain = SearchBox::cube(1, -4.0, 4.0).unwrap();
    let peak = |x: &[f64]| -(x[0] - 1.3).powi(2);
    let cfg = OptimizerConfig::default();
    let hits = (0..10u64)
        .filter(|&s| {
            let o = run_optimizer(Algorithm::Bbo, &cfg, &peak, &domain, 200, s, &[]).unwrap();
            (o.best_x[0] - 1.3).abs() < 0.05
        })
        .count();
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn every_optimizer_improves_on_the_quadratic() {
    let f = TestFunction::Quadratic;
    let domain = f.domain();
    let cfg = OptimizerConfig::default();
    for algo in Algorithm::ALL {
        let o = run_optimizer(algo, &cfg, &shifted_quadratic, &domain, 200, 3, &[]).unwrap();
        assert!(o.best_value > 0.9, "{algo}: {}", o.best_value);
        assert!(domain.contains(&o.best_x));
        assert_eq!(o.best_value, f.eval(&o.best_x));
    }
}

#[test]
fn warm_start_is_never_lost() {
    let domain = SearchBox::cube(3, -3.0, 3.0).unwrap();
    let cfg = OptimizerConfig::default();
    let optimum = vec![0.0, 0.5, 1.0];
    for algo in Algorithm::ALL {
        let o = run_optimizer(
            algo,
            &cfg,
            &shifted_quadratic,
            &domain,
            5,
            9,
            std::slice::from_ref(&optimum),
        )
        .unwrap();
        assert_eq!(o.best_value, 1.0, "{algo}");
    }
}

#[test]
fn runs_are_reproducible_per_seed() {
    let domain = SearchBox::cube(3, -3.0, 3.0).unwrap();
    let cfg = OptimizerConfig::default();
    for algo in Algorithm::ALL {
        let a = run_optimizer(algo, &cfg, &shifted_quadratic, &domain, 30, 42, &[]).unwrap();
        let b = run_optimizer(algo, &cfg, &shifted_quadratic, &domain, 30, 42, &[]).unwrap();
        let c = run_optimizer(algo, &cfg, &shifted_quadratic, &domain, 30, 43, &[]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.best_x, c.best_x);
    }
}

#[test]
fn bbo_donors_follow_emigration_rates() {
    let pop = assign_rates((0..5).map(|i| Habitat::new(vec![i as f64], i as f64)).collect());
    let mut rng = rng::stream(7, &[]);
    let skip = 4;
    let mut counts = [0u64; 4];
    for _ in 0..10_000 {
        counts[pick_donor(&pop, skip, &mut rng).unwrap()] += 1;
    }
    // Ranks 0..3 emigrate with mu = 1, 0.8, 0.6, 0.4 once the immigrant is excluded.
    let expected = [1.0 / 2.8, 0.8 / 2.8, 0.6 / 2.8, 0.4 / 2.8];
    let p = chi_square_p(&counts, &expected);
    assert!(p > 0.01, "{counts:?} p={p}");
}
