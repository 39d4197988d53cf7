use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use swarmplan::error::Error;
use swarmplan::grid_world::{build_map, GridMap, MapConfig};
use swarmplan::gso::run_gso_swarm;
use swarmplan::harness::{run_matrix, write_outputs, ExperimentSpec};
use swarmplan::optim::{run_optimizer, Algorithm, Domain, OptimizerConfig};
use swarmplan::rng::{derive_seed, label};
use swarmplan::testfns::TestFunction;
use swarmplan::trajectory::{replay, TrajectoryLog};

const EXIT_USAGE: u8 = 1;
const EXIT_GENERATION: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "swarmplan",
    version,
    about = "Swarm-optimizer path planning in a 3D grid world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write tables (and trajectory logs) to a directory.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Build one map and dump it for inspection.
    Map {
        #[arg(long, default_value_t = 5)]
        id: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
        scale: ScaleArg,
        /// TOML file with MapConfig fields (overrides --scale).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MapFormat::Text)]
        format: MapFormat,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an optimizer on an analytic test function over several seeds.
    BenchOpt {
        #[arg(long)]
        algo: Algorithm,
        #[arg(long = "fn")]
        function: TestFunction,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
    },
    /// Check a trajectory log against its recorded world; exit 3 on a violation.
    Replay { log: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapFormat {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Generation(_) => ExitCode::from(EXIT_GENERATION),
                _ => ExitCode::from(EXIT_USAGE),
            }
        }
    }
}

fn dispatch(cmd: Command) -> swarmplan::Result<ExitCode> {
    match cmd {
        Command::Run { spec, out } => {
            let spec = ExperimentSpec::load(&spec)?;
            let result = run_matrix(&spec)?;
            let written = write_outputs(&result, &out)?;
            let failures: usize = result.table.rows.iter().map(|r| r.failures).sum();
            println!(
                "{} rows, {} episodes, {} failed; wrote {} files to {}",
                result.table.rows.len(),
                result.episodes.len(),
                failures,
                written.len(),
                out.display()
            );
            if failures == result.episodes.len() && failures > 0 {
                if let Some(Err(msg)) = result.episodes.first().map(|e| &e.result) {
                    return Err(Error::Generation(msg.clone()));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Map {
            id,
            seed,
            scale,
            config,
            format,
            out,
        } => {
            let cfg = match config {
                Some(p) => load_map_config(&p)?,
                None => match scale {
                    ScaleArg::Desk => MapConfig::desk_scale(),
                    ScaleArg::Paper => MapConfig::paper_scale(),
                },
            };
            let map = build_map(id, &cfg, seed)?;
            let text = match format {
                MapFormat::Json => serde_json::to_string_pretty(&map).expect("map serializes") + "\n",
                MapFormat::Text => render_map(&map),
            };
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
                None => {
                    if let Err(e) = std::io::stdout().lock().write_all(text.as_bytes()) {
                        if e.kind() != std::io::ErrorKind::BrokenPipe {
                            return Err(Error::io("<stdout>", e));
                        }
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::BenchOpt {
            algo,
            function,
            seeds,
            iters,
            master_seed,
        } => {
            bench_opt(algo, function, seeds, iters, master_seed)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { log } => {
            let log = TrajectoryLog::read(&log)?;
            let report = replay(&log);
            for v in &report.violations {
                println!(
                    "tick {}: ({}, {}, {}) {}",
                    v.tick, v.position.x, v.position.y, v.position.z, v.reason
                );
            }
            println!(
                "{} ticks checked, {} captures, {} violations",
                report.ticks_checked,
                report.captures,
                report.violations.len()
            );
            Ok(if report.is_safe() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VIOLATION)
            })
        }
    }
}

fn load_map_config(path: &Path) -> swarmplan::Result<MapConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: MapConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// One block of rows per z layer: `#` static, `o` moving obstacle,
/// `T` goal, `R` robot start, `.` free.
fn render_map(map: &GridMap) -> String {
    let [nx, ny, nz] = map.dims;
    let occ = map.static_occupancy();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "dims {}x{}x{}  static {:.4}  fro cells {}  dynamic {}  goals {}",
        nx,
        ny,
        nz,
        occ.fraction(),
        map.fro_cell_count(),
        map.dynamic_obstacles.len(),
        map.targets.len()
    );
    for z in 0..nz as i64 {
        let _ = writeln!(out, "z={z}");
        for y in (0..ny as i64).rev() {
            let mut line = String::with_capacity(nx);
            for x in 0..nx as i64 {
                let c = [x, y, z];
                let ch = if map.robot_start.cell() == c {
                    'R'
                } else if map.targets.iter().any(|t| t.position.cell() == c) {
                    'T'
                } else if map.dynamic_obstacles.iter().any(|o| o.position.cell() == c) {
                    'o'
                } else if occ.get(c) {
                    '#'
                } else {
                    '.'
                };
                line.push(ch);
            }
            let _ = writeln!(out, "{line}");
        }
    }
    out
}

fn bench_opt(
    algo: Algorithm,
    function: TestFunction,
    seeds: u64,
    iters: usize,
    master_seed: u64,
) -> swarmplan::Result<()> {
    let domain = function.domain();
    let cfg = OptimizerConfig::default();
    let optima = function.optima();
    let objective = |x: &[f64]| function.eval(x);
    let radius = 0.1;
    let mut captured_counts = Vec::new();
    println!("seed,best_value,distance_to_optimum,peaks_captured");
    for s in 0..seeds {
        let seed = derive_seed(master_seed, &[label::BENCH, s]);
        let (best_x, best_value, points) = if algo == Algorithm::Gso {
            let p = cfg.gso.params_for(domain.bounds().diagonal());
            let p = swarmplan::gso::GsoParams { iters, ..p };
            let run = run_gso_swarm(&objective, &domain, &p, seed, &[])?;
            let pts: Vec<Vec<f64>> = run.swarm.into_iter().map(|w| w.x).collect();
            (run.outcome.best_x, run.outcome.best_value, pts)
        } else {
            let o = run_optimizer(algo, &cfg, &objective, &domain, iters, seed, &[])?;
            (o.best_x.clone(), o.best_value, vec![o.best_x])
        };
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let nearest = optima.iter().map(|o| dist(&best_x, o)).fold(f64::INFINITY, f64::min);
        let captured = optima
            .iter()
            .filter(|o| points.iter().any(|p| dist(p, o) < radius))
            .count();
        captured_counts.push(captured);
        println!("{s},{best_value},{nearest},{captured}");
    }
    let at_least_two = captured_counts.iter().filter(|&&c| c >= 2).count();
    println!(
        "# {} on {}: {} of {} seeds captured >= 2 of {} optima within {}",
        algo,
        function.name(),
        at_least_two,
        seeds,
        optima.len(),
        radius
    );
    Ok(())
}
