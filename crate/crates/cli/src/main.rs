use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hocbf_cli::certificate::{status_name, CertificateFile};
use hocbf_cli::commands::{
    cmd_check, cmd_simulate, cmd_synthesize, cmd_verify, controller_from_certificate, file_initial_conditions,
    grid_initial_conditions, verify_summary, CliError,
};
use hocbf_cli::output::{emit_plot, write_trajectories_csv};
use hocbf_cli::scenario::{load_scenario, Scenario};
use hocbf_core::synth::StageAInput;
use serde_json::json;

/// Verify, synthesize and simulate high-order control barrier function certificates.
#[derive(Parser)]
#[command(name = "hocbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageA {
    Drift,
    Decision,
}

#[derive(Subcommand)]
enum Command {
    /// Check that the class-K functions in a scenario admit a certified controller.
    Verify {
        /// Built-in scenario name or TOML path.
        scenario: String,
        #[arg(long)]
        deg_u: Option<u32>,
        /// SDP feasibility and gap tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Synthesize class-K functions for every candidate and write a certificate.
    Synthesize {
        scenario: String,
        #[arg(long, value_enum)]
        stage_a_input: Option<StageA>,
        #[arg(long, default_value = "cert.json")]
        out: PathBuf,
    },
    /// Run the QP safety filter in closed loop.
    Simulate {
        scenario: String,
        #[arg(long)]
        cert: PathBuf,
        /// `grid` or a CSV file of initial states.
        #[arg(long, default_value = "grid")]
        ics: String,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "traj.csv")]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Re-validate a certificate file against its scenario.
    Check {
        cert: PathBuf,
        #[arg(long)]
        scenario: String,
    },
}

fn scenario(name: &str) -> Result<Scenario, CliError> {
    load_scenario(name).map_err(|e| CliError::Input(e.to_string()))
}

fn read_cert(path: &PathBuf) -> Result<CertificateFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    CertificateFile::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Verify { scenario: name, deg_u, tol } => {
            let sc = scenario(&name)?;
            let out = cmd_verify(&sc, deg_u, tol)?;
            eprintln!("verify {}: {}", sc.config.name, status_name(&out.report.status));
            println!("{}", serde_json::to_string_pretty(&verify_summary(&out.report)).unwrap());
            Ok(out.code)
        }
        Command::Synthesize {
            scenario: name,
            stage_a_input,
            out,
        } => {
            let sc = scenario(&name)?;
            let stage_a = stage_a_input.map(|s| match s {
                StageA::Drift => StageAInput::DriftOnly,
                StageA::Decision => StageAInput::DecisionInput,
            });
            let res = cmd_synthesize(&sc, stage_a)?;
            write(&out, res.certificate.to_json().as_bytes())?;
            match &res.result.failure {
                None => eprintln!(
                    "synthesized {} class-K functions in {} SDPs; certificate written to {}",
                    res.certificate.class_k_count(),
                    res.result.sdp_count,
                    out.display()
                ),
                Some(f) => eprintln!("synthesis failed at {}/{}: {}", f.candidate, f.stage, f.reason),
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "succeeded": res.certificate.succeeded,
                    "sdp_count": res.certificate.sdp_count,
                    "class_k_functions": res.certificate.class_k_count(),
                    "failure": res.certificate.failure,
                    "joint": res.certificate.joint.as_ref().map(|j| j.status.clone()),
                    "certificate": out,
                }))
                .unwrap()
            );
            Ok(res.code)
        }
        Command::Simulate {
            scenario: name,
            cert,
            ics,
            dt,
            horizon,
            seed,
            out,
            plot,
        } => {
            let sc = scenario(&name)?;
            let cert = read_cert(&cert)?;
            let ctrl = controller_from_certificate(&sc, &cert)?;
            let mut opts = sc.sim_options();
            if let Some(dt) = dt {
                opts.dt = dt;
            }
            if let Some(h) = horizon {
                opts.horizon = h;
            }
            let x0s = if ics == "grid" {
                let (x0s, skipped) = grid_initial_conditions(&sc, &ctrl, seed.unwrap_or(sc.config.seed))?;
                if skipped > 0 {
                    eprintln!("{skipped} grid points skipped: no admissible draw");
                }
                x0s
            } else {
                file_initial_conditions(&sc, &ics)?
            };
            let res = cmd_simulate(&ctrl, &x0s, &opts);
            for (x0, why) in &res.rejected {
                eprintln!("rejected initial state {x0:?}: {why}");
            }
            let trajs: Vec<_> = res.runs.iter().map(|r| &r.trajectory).collect();
            let mut buf = Vec::new();
            write_trajectories_csv(&mut buf, &sc, &trajs).map_err(|e| CliError::Input(e.to_string()))?;
            write(&out, &buf)?;
            if let Some(p) = &plot {
                write(p, emit_plot(&trajs, &sc).as_bytes())?;
            }
            let runs: Vec<_> = res
                .runs
                .iter()
                .map(|r| {
                    json!({
                        "x0": r.x0,
                        "termination": r.trajectory.termination.as_str(),
                        "steps": r.trajectory.inputs.len(),
                        "min_psi0": r.summary.min_psi0(),
                        "safe": r.summary.is_safe(),
                        "inputs_in_box": r.inputs_in_box,
                    })
                })
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "runs": runs, "rejected": res.rejected.len() })).unwrap()
            );
            Ok(res.code)
        }
        Command::Check { cert, scenario: name } => {
            let sc = scenario(&name)?;
            let cert = read_cert(&cert)?;
            let out = cmd_check(&cert, &sc)?;
            for d in &out.diagnosis {
                eprintln!("{d}");
            }
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            Ok(out.code)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
