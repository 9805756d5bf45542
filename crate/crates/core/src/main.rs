use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use egoplan::harness::bench::{cost_spread, metrics_csv, run_bench, summarize, Suite};
use egoplan::harness::gradcheck::{gradcheck_with, Term};
use egoplan::harness::plan::{plan_once, write_artifacts};
use egoplan::harness::render::{render, Layers};
use egoplan::harness::scenario::Scenario;
use egoplan::harness::sim::{simulate, SimConfig, DEFAULT_HORIZON};
use egoplan::harness::{parse_points_csv, points_csv};
use egoplan::search::Algorithm;

#[derive(Parser)]
#[command(name = "egoplan", version, about = "ESDF-free quadrotor trajectory planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan once and write trajectory, report and SVG.
    Plan {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replan while flying with limited sensing.
    Simulate {
        scenario: PathBuf,
        /// Sensing radius, meters.
        #[arg(long, default_value_t = 5.0)]
        sense: f64,
        /// Replan period, seconds.
        #[arg(long, default_value_t = 1.0)]
        period: f64,
        /// Directory for track.csv, sim.json and sim.svg.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the grid searches on a suite of maps.
    Bench {
        suite: PathBuf,
        /// Comma-separated subset of dijkstra, astar, bidirectional.
        #[arg(long, default_value = "dijkstra,astar,bidirectional")]
        algos: String,
        /// Metrics CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scales one term's analytic gradient, to see the check fail.
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Draw a scenario with plan or simulation CSVs.
    Render {
        /// A scenario JSON, then plan/simulation directories or CSV files
        /// named guide, phi_s, trajectory or track.
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
        #[arg(long, default_value = "render.svg")]
        out: PathBuf,
    },
}

enum Failure {
    Invalid(String),
    Planning(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Planning(_) => 2,
            Failure::Invalid(_) => 3,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn plan(path: &Path, out: &Path) -> Result<(), Failure> {
    let (scenario, world) = Scenario::load(path).map_err(invalid)?;
    let result = plan_once(&scenario, &world).map_err(|e| Failure::Planning(format!("{:?} stage: {e}", e.stage())))?;
    write_artifacts(out, &scenario, &world, &result).map_err(invalid)?;
    println!("{}", std::fs::read_to_string(out.join("report.json")).map_err(invalid)?.trim_end());
    Ok(())
}

fn sim(path: &Path, sense: f64, period: f64, out: Option<&Path>) -> Result<(), Failure> {
    if !(sense > 0.0 && period > 0.0) {
        return Err(invalid("--sense and --period must be positive"));
    }
    let (scenario, world) = Scenario::load(path).map_err(invalid)?;
    let cfg = SimConfig { horizon: scenario.horizon.unwrap_or(DEFAULT_HORIZON), ..SimConfig::new(sense, period) };
    let report = simulate(&scenario, &world, &cfg);
    println!("{}", json(&report));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(invalid)?;
        std::fs::write(dir.join("track.csv"), points_csv(&report.track)).map_err(invalid)?;
        std::fs::write(dir.join("sim.json"), json(&report) + "\n").map_err(invalid)?;
        let layers = Layers {
            track: report.track.clone(),
            start: Some(scenario.start_state().pos),
            goal: Some(scenario.goal_point()),
            ..Default::default()
        };
        render(&world.raw, &layers, &dir.join("sim.svg")).map_err(invalid)?;
    }
    if report.success {
        Ok(())
    } else {
        Err(Failure::Planning("simulation did not reach the goal".into()))
    }
}

fn bench(path: &Path, algos: &str, out: Option<&Path>) -> Result<(), Failure> {
    let algos: Vec<Algorithm> = algos
        .split(',')
        .map(|a| Algorithm::parse(a.trim()).ok_or_else(|| invalid(format!("unknown algorithm {a:?}"))))
        .collect::<Result<_, _>>()?;
    if algos.is_empty() {
        return Err(invalid("no algorithms"));
    }
    let suite = Suite::from_json(&std::fs::read_to_string(path).map_err(invalid)?).map_err(invalid)?;
    let cases = suite.cases(path.parent()).map_err(invalid)?;
    let rows = run_bench(&cases, &algos, suite.trials, suite.warmups);
    let csv = metrics_csv(&rows, true);
    match out {
        Some(p) => std::fs::write(p, &csv).map_err(invalid)?,
        None => print!("{csv}"),
    }
    let summaries = summarize(&rows);
    for s in &summaries {
        eprintln!(
            "{} {}: median {:.6} s, {} expanded, cost {}",
            s.scenario,
            s.algorithm.name(),
            s.median_time_s,
            s.median_expanded,
            s.cost_m.map_or("none".into(), |c| format!("{c:.6}"))
        );
    }
    match cost_spread(&summaries) {
        Some(d) if d <= 1e-9 => Ok(()),
        Some(d) => Err(Failure::Planning(format!("path costs differ across algorithms by {d:e}"))),
        None => Err(Failure::Planning("some algorithms found no path".into())),
    }
}

fn grad(seed: u64, corrupt: Option<&str>) -> Result<(), Failure> {
    let corrupt = match corrupt {
        Some(name) => Some(Term::ALL.into_iter().find(|t| t.name() == name).ok_or_else(|| invalid(format!("unknown term {name:?}")))?),
        None => None,
    };
    let report = gradcheck_with(seed, corrupt);
    println!("{}", json(&report));
    if report.pass() {
        Ok(())
    } else {
        Err(Failure::Planning("gradient check failed".into()))
    }
}

fn read_points(path: &Path) -> Result<Vec<egoplan::Point>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_points_csv(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn render_cmd(artifacts: &[PathBuf], out: &Path) -> Result<(), Failure> {
    let (first, rest) = artifacts.split_first().expect("clap requires one artifact");
    let (scenario, world) = Scenario::load(first).map_err(invalid)?;
    let mut layers = Layers { start: Some(scenario.start_state().pos), goal: Some(scenario.goal_point()), ..Default::default() };
    let mut files = Vec::new();
    for a in rest {
        if a.is_dir() {
            for name in ["guide.csv", "phi_s.csv", "trajectory.csv", "track.csv"] {
                if a.join(name).exists() {
                    files.push(a.join(name));
                }
            }
        } else {
            files.push(a.clone());
        }
    }
    for f in files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let slot = match stem {
            "guide" => &mut layers.guide,
            "phi_s" => &mut layers.phi_s,
            "trajectory" | "phi_f" => &mut layers.phi_f,
            "track" => &mut layers.track,
            _ => return Err(invalid(format!("unrecognized artifact {}", f.display()))),
        };
        *slot = read_points(&f)?;
    }
    render(&world.raw, &layers, out).map_err(invalid)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Plan { scenario, out } => plan(scenario, out),
        Command::Simulate { scenario, sense, period, out } => sim(scenario, *sense, *period, out.as_deref()),
        Command::Bench { suite, algos, out } => bench(suite, algos, out.as_deref()),
        Command::Gradcheck { seed, corrupt } => grad(*seed, corrupt.as_deref()),
        Command::Render { artifacts, out } => render_cmd(artifacts, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Invalid(m) => eprintln!("invalid input: {m}"),
                Failure::Planning(m) => eprintln!("failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
