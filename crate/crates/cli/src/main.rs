use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use strongforce::config::RunConfig;
use strongforce::continuation::{sweep, SweepEntry};
use strongforce::io::{
    diagnose, load_trajectory_csv, save_trajectory_csv, verify_trajectory, write_json, Diagnostics, Metadata,
    SweepDocument, Thresholds, DEFAULT_STEPS,
};
use strongforce::minimizer::minimize_observed;
use strongforce::{Error, QuadratureGrid, SolveReport, Trajectory};

#[derive(Parser)]
#[command(name = "strongforce", version, about = "Periodic and hyperbolic orbits of strong-force N-body systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output.directory`, then `./runs/<timestamp>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker cap for cold-start sweeps and verification.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize at the configured radius and verify the rescaled orbit.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Leapfrog steps per period for the cross-check.
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
    },
    /// Continue in R over the configured schedule and classify the limit.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
    },
    /// Check an external trajectory CSV against the configured system.
    Verify {
        #[command(flatten)]
        common: Common,
        trajectory: PathBuf,
        #[arg(long, default_value_t = Thresholds::default().max_eom)]
        max_eom: f64,
        #[arg(long, default_value_t = Thresholds::default().max_energy)]
        max_energy: f64,
        #[arg(long, default_value_t = Thresholds::default().max_closure)]
        max_closure: f64,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
    },
}

/// Process outcome apart from hard errors.
enum Status {
    Ok,
    Numerical,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Numerical) => ExitCode::from(2),
        Err(e) => {
            let code = if e.is_numerical() { 2 } else { 3 };
            let body = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
            eprintln!("{}", serde_json::to_string(&body).unwrap_or_default());
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<Status, Error> {
    match cli.command {
        Command::Solve { common, steps } => cmd_solve(&common, steps),
        Command::Sweep { common, steps } => cmd_sweep(&common, steps),
        Command::Verify {
            common,
            trajectory,
            max_eom,
            max_energy,
            max_closure,
            steps,
        } => cmd_verify(
            &common,
            &trajectory,
            Thresholds {
                max_eom,
                max_energy,
                max_closure,
            },
            steps,
        ),
    }
}

fn out_dir(common: &Common, cfg: &RunConfig) -> Result<PathBuf, Error> {
    let dir = match (&common.out, &cfg.output.directory) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("runs").join(Metadata::now().created_unix_secs.to_string()),
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn threads(common: &Common) -> usize {
    common
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

/// Everything one solved radius writes.
struct SolveArtifacts {
    report: SolveReport,
    diagnostics: Option<Diagnostics>,
    trajectory: Option<Trajectory>,
    error: Option<String>,
}

fn write_artifacts(dir: &Path, cfg: &RunConfig, a: &SolveArtifacts) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    if cfg.output.wants("json") {
        write_json(&dir.join("solve_report.json"), &a.report)?;
        write_json(&dir.join("loop.json"), &a.report.path)?;
        if let Some(d) = &a.diagnostics {
            write_json(&dir.join("diagnostics.json"), d)?;
        }
        if let Some(e) = &a.error {
            write_json(&dir.join("error.json"), &json!({ "message": e }))?;
        }
    }
    if cfg.output.wants("csv") {
        if let Some(t) = &a.trajectory {
            save_trajectory_csv(t, &dir.join("trajectory.csv"))?;
        }
    }
    Ok(())
}

fn cmd_solve(common: &Common, steps: usize) -> Result<Status, Error> {
    let cfg = RunConfig::load(&common.config)?;
    let grid = cfg.grid()?;
    let sys = &cfg.system;
    let dir = out_dir(common, &cfg)?;
    let quiet = common.quiet;
    let mut observer = |it: &strongforce::minimizer::IterateInfo| {
        if !quiet && it.iter.is_multiple_of(100) {
            eprintln!(
                "attempt {} stage {} iter {:>5}  f {:.10e}  grad {:.2e}  endpoint {:.2e}",
                it.attempt, it.stage, it.iter, it.f, it.projected_grad_norm, it.endpoint_res
            );
        }
    };
    let (report, status) = match minimize_observed(sys, &cfg.solve_config(), &grid, None, &mut observer) {
        Ok(r) => (r, Status::Ok),
        Err(Error::NonConvergence { best, .. }) => (*best, Status::Numerical),
        Err(e) => return Err(e),
    };
    let (diagnostics, trajectory) = diagnose(sys, &report, &grid, steps)?;
    write_artifacts(
        &dir,
        &cfg,
        &SolveArtifacts {
            report: report.clone(),
            diagnostics: Some(diagnostics.clone()),
            trajectory: Some(trajectory),
            error: None,
        },
    )?;
    write_json(&dir.join("metadata.json"), &Metadata::now())?;
    if !quiet {
        println!("converged      {}", report.converged);
        println!("radius         {}", report.radius);
        println!("period T_R     {:.12}", report.period);
        println!("f              {:.12e}", report.f_value);
        println!("min distance   {:.6e}", report.min_dist);
        println!("virial res     {:.3e}", report.virial_res);
        println!("energy res     {:.3e}", diagnostics.energy.physical);
        println!("eom res        {:.3e}", diagnostics.eom_residual);
        println!("output         {}", dir.display());
    }
    Ok(status)
}

fn entry_artifacts(
    entry: &SweepEntry,
    sys: &strongforce::BodySystem,
    grid: &QuadratureGrid,
    steps: usize,
) -> Option<SolveArtifacts> {
    let report = entry.report.clone()?;
    let (diagnostics, error) = match diagnose(sys, &report, grid, steps) {
        Ok((d, _)) => (Some(d), entry.error.clone()),
        Err(e) => (None, Some(entry.error.clone().unwrap_or_else(|| e.to_string()))),
    };
    Some(SolveArtifacts {
        report,
        diagnostics,
        trajectory: entry.trajectory.clone(),
        error,
    })
}

fn cmd_sweep(common: &Common, steps: usize) -> Result<Status, Error> {
    let cfg = RunConfig::load(&common.config)?;
    let schedule = cfg.schedule()?;
    let grid = cfg.grid()?;
    let sys = &cfg.system;
    let solver = cfg.solve_config();
    let workers = threads(common);
    let dir = out_dir(common, &cfg)?;
    let result = sweep(sys, &schedule, &solver, &grid, cfg.sweep_mode(workers))?;

    // Verification of finished entries runs in parallel; writes stay on this thread.
    let chunk = result.entries.len().div_ceil(workers).max(1);
    let artifacts: Vec<Option<SolveArtifacts>> = std::thread::scope(|s| {
        let handles: Vec<_> = result
            .entries
            .chunks(chunk)
            .map(|part| {
                let grid = &grid;
                s.spawn(move || {
                    part.iter()
                        .map(|e| entry_artifacts(e, sys, grid, steps))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("verification worker panicked"))
            .collect()
    });
    for (index, (entry, art)) in result.entries.iter().zip(&artifacts).enumerate() {
        let name = entry
            .record
            .as_ref()
            .map_or_else(|| format!("R{index:02}"), |r| r.report_ref.clone());
        if let Some(a) = art {
            write_artifacts(&dir.join(name), &cfg, a)?;
        }
    }
    let mut doc = SweepDocument::new(sys, &schedule, &solver, &grid, &result);
    doc.metadata = Some(Metadata::now());
    write_json(&dir.join("sweep.json"), &doc)?;

    if !common.quiet {
        print_summary(&doc);
        println!("output: {}", dir.display());
    }
    match result.status() {
        Ok(()) => Ok(Status::Ok),
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&json!({ "error": e.kind(), "message": e.to_string() }))?);
            Ok(Status::Numerical)
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn print_summary(doc: &SweepDocument) {
    println!(
        "{:>10} {:>14} {:>12} {:>12} {:>12} {:>8}",
        "R", "T_R", "margin+", "margin-", "min_dist", "S_empty"
    );
    for r in &doc.records {
        println!(
            "{:>10.4} {:>14.6} {:>12} {:>12} {:>12.6} {:>8}",
            r.radius,
            r.period,
            opt(r.margin_plus),
            opt(r.margin_minus),
            r.min_dist,
            r.s_empty
        );
    }
    for f in &doc.failures {
        println!("{:>10.4} failed: {}", f.radius, f.error);
    }
    match (&doc.classification, &doc.classification_error) {
        (Some(c), _) => println!(
            "classification: {} (margins {}, speed {} [{:.4} vs {:.4}], central {})",
            c.label, c.margins_pass, c.speed_pass, c.observed_speed, c.expected_speed, c.central_pass
        ),
        (None, Some(e)) => println!("classification: none ({e})"),
        (None, None) => println!("classification: none"),
    }
}

fn cmd_verify(common: &Common, path: &Path, thresholds: Thresholds, steps: usize) -> Result<Status, Error> {
    let cfg = RunConfig::load(&common.config)?;
    let traj = load_trajectory_csv(&cfg.system, path)?;
    let dir = out_dir(common, &cfg)?;
    let mut doc = verify_trajectory(&traj, thresholds, steps)?;
    doc.metadata = Some(Metadata::now());
    write_json(&dir.join("verification.json"), &doc)?;
    if !common.quiet {
        println!("eom residual     {:.3e}  ok {}", doc.eom_residual, doc.eom_ok);
        println!("energy residual  {:.3e}  ok {}", doc.energy_residual, doc.energy_ok);
        println!("closure gap      {}  ok {}", opt(doc.closure_gap), doc.closure_ok);
        println!("passed           {}", doc.passed);
    }
    Ok(if doc.passed { Status::Ok } else { Status::Numerical })
}
