use swarmplan::grid_world::MapConfig;
use swarmplan::harness::{run_matrix, write_outputs, ExperimentSpec, COLUMNS};
use swarmplan::planner::{run_episode, Clock, PlannerAlgo, PlannerConfig};
use swarmplan::trajectory::{replay, TrajectoryLog};

fn tick_config() -> PlannerConfig {
    PlannerConfig {
        clock: Clock::Tick,
        ..PlannerConfig::default()
    }
}

#[test]
fn episode_accounting_is_consistent() {
    let cfg = tick_config();
    for algo in PlannerAlgo::ALL {
        let out = run_episode(5, algo, &MapConfig::desk_scale(), &cfg, 11).unwrap();
        let s = &out.summary;
        assert_eq!(
            out.node_checks.iter().sum::<u64>(),
            out.metrics.expanded_nodes,
            "{algo}"
        );
        assert_eq!(out.metrics.elapsed_ms, s.ticks * cfg.tick_ms);
        assert_eq!(out.log.records.len() as u64, s.ticks + 1);
        assert_eq!(s.targets, 3);
        assert!(s.captured <= s.targets);
        assert_eq!(s.budget_exhausted, s.captured < s.targets);
        assert!(s.executed_plans <= s.plans && s.blocked_plans <= s.executed_plans);
        assert!(s.evaluations > 0 && out.metrics.cost > 0.0);
        if algo.variant == swarmplan::planner::Variant::Flat {
            assert_eq!(s.fallbacks, 0);
        }
        let captures: usize = out.log.records.iter().map(|r| r.captures().count()).sum();
        assert_eq!(captures, s.captured);
        assert!(replay(&out.log).is_safe());
    }
}

#[test]
fn tick_clock_episodes_repeat_exactly() {
    let cfg = tick_config();
    let algo: PlannerAlgo = "hBBO".parse().unwrap();
    let a = run_episode(4, algo, &MapConfig::desk_scale(), &cfg, 5).unwrap();
    let b = run_episode(4, algo, &MapConfig::desk_scale(), &cfg, 5).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.log.to_text(), b.log.to_text());
}

#[test]
fn empty_world_run_goes_straight_for_each_goal() {
    let out = run_episode(1, "GSO".parse().unwrap(), &MapConfig::desk_scale(), &tick_config(), 2).unwrap();
    assert_eq!(out.summary.captured, 3);
    assert_eq!(out.summary.blocked_plans, 0);
    assert_eq!(out.summary.waits + out.summary.escapes, 0);
}

#[test]
fn logs_survive_a_disk_round_trip_and_replay() {
    let spec = ExperimentSpec::parse(
        "algorithms = [\"IWO\", \"hGSO\"]\nmaps = [5]\ndensities = [0.2]\nseeds = [3]\nwrite_trajectories = true\n",
        "inline.toml".as_ref(),
    )
    .unwrap();
    let result = run_matrix(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_outputs(&result, dir.path()).unwrap();
    assert_eq!(written.len(), 5);

    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
    assert_eq!(lines.count(), 2);

    for entry in std::fs::read_dir(dir.path().join("trajectories")).unwrap() {
        let path = entry.unwrap().path();
        let log = TrajectoryLog::read(&path).unwrap();
        assert_eq!(log.meta("map"), Some("5"));
        let report = replay(&log);
        assert!(report.is_safe(), "{}: {:?}", path.display(), report.violations);
        assert_eq!(report.ticks_checked as usize, log.records.len());
    }
}
