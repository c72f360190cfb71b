//! Command-line front end.
//!
//! Exit codes: `0` success, `1` verification reported an overall failure,
//! `2` usage or input errors.

use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::integrator::{simulate, AngleMode};
use crate::model::{prox_constants, ControlProfile, Scenario};
use crate::optimality::{reconstruct_duals, verify, CandidateMotion};
use crate::search::{grid_search, write_sweep_csv, GridSpec};
use crate::two_body::{optimize, TwoBodySolution};

#[derive(Parser)]
#[command(name = "crowd-sweep", version, about = "Planar crowd motion sweeping-process toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the sweeping dynamics and write the trajectory as CSV.
    Simulate {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated constant controls, one per participant.
        #[arg(long, value_delimiter = ',', required = true)]
        a: Vec<f64>,
        /// Number of time steps.
        #[arg(long)]
        steps: usize,
        /// Keep the exit-seeking angles at their initial values.
        #[arg(long)]
        frozen_angles: bool,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the two-participant problem in closed form; write JSON.
    Solve2 {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the ten optimality conditions for a solution file.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        /// Solution JSON produced by solve2.
        #[arg(long)]
        solution: PathBuf,
        /// Residual tolerance.
        #[arg(long)]
        tol: f64,
        /// Output report JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Brute-force sweep over constant controls; write the table as CSV.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Grid as LO:HI:STEP, applied to every control coordinate.
        #[arg(long)]
        grid: String,
        /// Time steps per simulated cell.
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the constraint-geometry constants.
    Constants {
        /// Number of participants.
        #[arg(long)]
        n: usize,
        /// Disk radius.
        #[arg(long = "R")]
        radius: f64,
    },
}

/// Run the CLI on the given argument vector and return the process exit
/// code.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_scenario(path: &PathBuf) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    Scenario::from_json(&text)
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate { scenario, a, steps, frozen_angles, out } => {
            let sc = load_scenario(&scenario)?;
            let mode = if frozen_angles { AngleMode::Frozen } else { AngleMode::Reaimed };
            let traj = simulate(&sc, &ControlProfile(a), steps, mode)?;
            let mut file = fs::File::create(&out)?;
            traj.write_csv(&mut file)?;
            println!(
                "wrote {} rows to {} ({} contact events)",
                traj.states.len(),
                out.display(),
                traj.events.len()
            );
            Ok(0)
        }
        Command::Solve2 { scenario, out } => {
            let sc = load_scenario(&scenario)?;
            let solution = optimize(&sc)?;
            fs::write(&out, solution.to_json()?)?;
            println!(
                "branch {:?}: a = [{:.6}, {:.6}], J = {:.6}",
                solution.branch, solution.a[0], solution.a[1], solution.j
            );
            Ok(0)
        }
        Command::Verify { scenario, solution, tol, out } => {
            if !(tol > 0.0) {
                return Err(Error::InvalidArgument("tol must be positive".into()));
            }
            let sc = load_scenario(&scenario)?;
            let text = fs::read_to_string(&solution)?;
            let sol = TwoBodySolution::from_json(&text)?;
            check_solution_matches(&sc, &sol)?;
            let motion = CandidateMotion::from_solution(&sc, &sol)?;
            let cert = reconstruct_duals(&motion, 1.0)?;
            let report = verify(&motion, &cert, tol);
            fs::write(&out, report.to_json()?)?;
            for c in &report.conditions {
                println!(
                    "condition {:>2}: residual {:>12.3e}  {}",
                    c.id,
                    c.residual,
                    if c.pass { "pass" } else { "FAIL" }
                );
            }
            println!("overall: {}", if report.overall { "pass" } else { "FAIL" });
            Ok(if report.overall { 0 } else { 1 })
        }
        Command::Sweep { scenario, grid, steps, out } => {
            let sc = load_scenario(&scenario)?;
            let spec = parse_grid(&grid, steps)?;
            let result = grid_search(&sc, &spec)?;
            let mut file = fs::File::create(&out)?;
            write_sweep_csv(&result.table, &mut file)?;
            let a: Vec<String> = result.best_a.0.iter().map(|v| format!("{v:.6}")).collect();
            println!("best J = {:.6} at a = [{}]", result.best_j, a.join(", "));
            Ok(0)
        }
        Command::Constants { n, radius } => {
            if n < 2 {
                return Err(Error::InvalidArgument("need at least two participants".into()));
            }
            if !(radius > 0.0) {
                return Err(Error::InvalidArgument("radius must be positive".into()));
            }
            let pc = prox_constants(n, radius);
            println!("n = {n}, R = {radius}");
            println!("M1 = {}", pc.m1);
            println!("M2 = {}", pc.m2);
            println!("M3 = {}", pc.m3);
            match pc.beta {
                Some(b) => println!("beta = {b}"),
                None => println!("beta = undefined (formula degenerates at n = 2)"),
            }
            println!("eta_prox = undefined (scaling constant not determined by the data)");
            Ok(0)
        }
    }
}

fn parse_grid(text: &str, steps: usize) -> Result<GridSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidArgument(format!("grid must be LO:HI:STEP, got {text:?}")));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad grid number {s:?}")))
    };
    Ok(GridSpec {
        lo: parse(parts[0])?,
        hi: parse(parts[1])?,
        step: parse(parts[2])?,
        steps_per_sim: steps,
        refine: false,
    })
}

fn check_solution_matches(sc: &Scenario, sol: &TwoBodySolution) -> Result<()> {
    if sc.n() != 2 {
        return Err(Error::NotTwoBody(sc.n()));
    }
    let first = sol
        .segments
        .first()
        .ok_or_else(|| Error::InvalidArgument("solution has no segments".into()))?;
    let start = first.eval(0.0);
    let cfg = sc.initial_configuration();
    if (start.coords - cfg.coords).norm() > 1e-6 {
        return Err(Error::InvalidArgument(
            "solution initial positions do not match the scenario".into(),
        ));
    }
    Ok(())
}
