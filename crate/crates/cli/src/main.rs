//! `nonlocal-pme`: simulate, verify, and refine nonlocal porous-medium runs.

mod config;
mod output;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nonlocal_pme::solver::{convergence_study, lp_budget, run, DiagnosticsReport, Trajectory, Violation};
use serde::Serialize;
use thiserror::Error;

use config::ExperimentConfig;
use suites::SuiteResult;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("assumption {assumption} violated: {detail}")]
    Assumption { assumption: &'static str, detail: String },
    #[error("{0}")]
    Core(#[from] nonlocal_pme::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            // a run that produced non-finite values is a failed check, not bad input
            CliError::Core(nonlocal_pme::Error::Blowup { .. }) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "nonlocal-pme", version, about = "Nonlocal porous-medium simulations and estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the explicit scheme and write diagnostics.
    Simulate(Common),
    /// Run one property suite, or the config's `checks` list.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Option<String>,
    },
    /// Run the (r, n) refinement study of the config's `convergence` section.
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

struct Outcome {
    failed: bool,
    lines: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Verify { common, suite } => verify(common, suite.as_deref()),
        Command::Convergence(c) => convergence(c),
    });
    match result {
        Ok(outcome) => {
            if !cli.quiet {
                for line in &outcome.lines {
                    println!("{line}");
                }
            }
            ExitCode::from(u8::from(outcome.failed))
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("NONLOCAL_PME_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("NONLOCAL_PME_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))
}

fn out_dir(common: &Common, config: &ExperimentConfig) -> PathBuf {
    common.out.clone().unwrap_or_else(|| config.output.dir.clone())
}

#[derive(Serialize)]
struct LpSummary {
    p: String,
    nonincreasing: bool,
    worst_increase: f64,
    xi_slack: Option<f64>,
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    seed: u64,
    config: &'a ExperimentConfig,
    frames: usize,
    dt: f64,
    cfl_bound: f64,
    lipschitz: f64,
    atom_mass: f64,
    discarded_tail: f64,
    violations: &'a [Violation],
    energy_max_abs_residual: f64,
    final_dissipation: f64,
    lp: Vec<LpSummary>,
    checks: &'a [SuiteResult],
}

fn lp_summaries(traj: &Trajectory) -> Result<Vec<LpSummary>, CliError> {
    [1.0, 2.0, 4.0, f64::INFINITY]
        .into_iter()
        .map(|p| {
            let b = lp_budget(traj, p)?;
            Ok(LpSummary {
                p: if p.is_infinite() { "inf".into() } else { p.to_string() },
                nonincreasing: b.nonincreasing && b.min_nondecreasing.unwrap_or(true),
                worst_increase: b.worst_increase,
                xi_slack: b.min_slack,
            })
        })
        .collect()
}

fn violation_lines(report: &DiagnosticsReport) -> Vec<String> {
    report
        .violations
        .iter()
        .map(|v| {
            format!(
                "violation {}: frame {} magnitude {:e} beyond tolerance {:e}",
                v.check, v.frame, v.magnitude, v.tolerance
            )
        })
        .collect()
}

fn simulate(common: &Common) -> Result<Outcome, CliError> {
    let config = ExperimentConfig::load(&common.config)?;
    suites::check_names(&config.checks)?;
    let solver_config = config.solver_config()?;
    let (traj, report) = run(&solver_config)?;
    let checks = config
        .checks
        .iter()
        .map(|name| suites::run_suite(name, &solver_config, Some(&traj), common.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let budget = nonlocal_pme::solver::energy_budget(&traj)?;
    let summary = SimulationSummary {
        seed: common.seed,
        config: &config,
        frames: traj.path.frames().len(),
        dt: report.dt,
        cfl_bound: report.cfl_bound,
        lipschitz: report.lipschitz,
        atom_mass: report.atom_mass,
        discarded_tail: report.discarded_tail,
        violations: &report.violations,
        energy_max_abs_residual: budget.max_abs_residual,
        final_dissipation: budget.dissipation.last().copied().unwrap_or(0.0),
        lp: lp_summaries(&traj)?,
        checks: &checks,
    };

    let dir = out_dir(common, &config);
    output::ensure_dir(&dir)?;
    let formats = &config.output.formats;
    if formats.iter().any(|f| f == "csv") {
        output::write_diagnostics_csv(&dir.join("diagnostics.csv"), &report.rows)?;
    }
    if formats.iter().any(|f| f == "json") {
        output::write_json(&dir.join("summary.json"), &summary)?;
    }
    if formats.iter().any(|f| f == "binary") {
        output::write_frames(&dir.join("frames"), &traj.path)?;
    }

    let mut lines = vec![format!(
        "simulated {} frames, dt = {:e}, outputs in {}",
        summary.frames,
        report.dt,
        dir.display()
    )];
    lines.extend(violation_lines(&report));
    lines.extend(checks.iter().map(|c| format!("check {}: {}", c.suite, c.message)));
    let failed = !report.violations.is_empty() || checks.iter().any(|c| !c.pass);
    Ok(Outcome { failed, lines })
}

fn verify(common: &Common, suite: Option<&str>) -> Result<Outcome, CliError> {
    let config = ExperimentConfig::load(&common.config)?;
    let names: Vec<String> = match suite {
        Some(s) => vec![s.to_string()],
        None => config.checks.clone(),
    };
    if names.is_empty() {
        return Err(CliError::Config("no suite given: pass --suite or list suites under \"checks\"".into()));
    }
    suites::check_names(&names)?;
    let solver_config = config.solver_config()?;
    let traj = if names.iter().any(|n| suites::needs_trajectory(n)) {
        Some(run(&solver_config)?.0)
    } else {
        None
    };
    let results = names
        .iter()
        .map(|n| suites::run_suite(n, &solver_config, traj.as_ref(), common.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(common, &config);
    output::ensure_dir(&dir)?;
    let file = match suite {
        Some(s) => format!("verify_{s}.json"),
        None => "verify.json".into(),
    };
    output::write_json(&dir.join(&file), &results)?;
    let lines = results.iter().map(|r| format!("{} [{}] {}", r.suite, pass_word(r.pass), r.message)).collect();
    Ok(Outcome { failed: results.iter().any(|r| !r.pass), lines })
}

fn pass_word(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn convergence(common: &Common) -> Result<Outcome, CliError> {
    let config = ExperimentConfig::load(&common.config)?;
    let Some(seq) = config.convergence.clone() else {
        return Err(CliError::Config("the config has no \"convergence\" section with r_seq and n_seq".into()));
    };
    let solver_config = config.solver_config()?;
    let report = convergence_study(&solver_config, &seq.r_seq, &seq.n_seq)?;
    let dir = out_dir(common, &config);
    output::ensure_dir(&dir)?;
    output::write_convergence_csv(&dir.join("convergence.csv"), &report)?;
    output::write_json(&dir.join("convergence.json"), &report)?;
    let mut lines = vec![format!("{:>5} {:>12} {:>5} {:>14} {:>14}", "level", "r", "n", "difference", "oracle")];
    for row in &report.rows {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
        lines.push(format!(
            "{:>5} {:>12.6e} {:>5} {:>14} {:>14}",
            row.level,
            row.r,
            row.n,
            opt(row.successive_difference),
            opt(row.oracle_error)
        ));
    }
    lines.push(format!(
        "successive differences {} (convergence-cauchy-check)",
        if report.decreasing { "decrease" } else { "do not decrease" }
    ));
    Ok(Outcome { failed: !report.decreasing, lines })
}
