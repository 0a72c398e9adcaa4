//! Command implementations shared by the binary and the tests.

use hocbf_core::certify::{sample_audit, verify, VerificationProblem, VerificationReport, VerificationStatus};
use hocbf_core::runtime::{monitor, simulate_batch, Controller, SafetySummary, SimOptions, Termination, Trajectory};
use hocbf_core::sos::{validate_certificate, BoxScaling};
use hocbf_core::synth::{synth_all, MultiSynthesisResult, StageAInput, SynthesisOptions};
use hocbf_sdp::SdpStatus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::certificate::{audit_json, membership_from_json, polys_from_json, status_name, AuditJson, CertificateFile};
use crate::scenario::{state_index, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_VERIFIED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

pub fn verification_exit_code(status: &VerificationStatus) -> i32 {
    match status {
        VerificationStatus::Verified => EXIT_OK,
        VerificationStatus::NumericalFailure(_) => EXIT_NUMERICAL,
        _ => EXIT_NOT_VERIFIED,
    }
}

pub struct VerifyOutcome {
    pub report: VerificationReport,
    pub code: i32,
}

/// Verifies the class-K functions given in the scenario.
pub fn cmd_verify(scenario: &Scenario, deg_u: Option<u32>, tol: Option<f64>) -> Result<VerifyOutcome, CliError> {
    let mut options = scenario.verify_options();
    if let Some(d) = deg_u {
        options.deg_u = d;
    }
    if let Some(t) = tol {
        options.sdp.tol_feas = t;
        options.sdp.tol_gap = t;
    }
    let problem = VerificationProblem {
        system: scenario.system.clone(),
        x_set: scenario.x_set.clone(),
        u_set: scenario.u_set.clone(),
        candidates: scenario.candidates.clone(),
        clifs: scenario.clifs.clone(),
        options,
    };
    let report = verify(&problem).map_err(input_err)?;
    let code = verification_exit_code(&report.status);
    Ok(VerifyOutcome { report, code })
}

pub struct SynthOutcome {
    pub result: MultiSynthesisResult,
    pub certificate: CertificateFile,
    pub options: SynthesisOptions,
    pub code: i32,
}

pub fn cmd_synthesize(scenario: &Scenario, stage_a: Option<StageAInput>) -> Result<SynthOutcome, CliError> {
    let mut options = scenario.synthesis_options();
    if let Some(s) = stage_a {
        options.stage_a_input = s;
    }
    let result = synth_all(
        &scenario.candidates,
        &scenario.system,
        &scenario.x_set,
        &scenario.u_set,
        &scenario.clifs,
        &options,
    )
    .map_err(input_err)?;
    let scaling = BoxScaling::from_box(scenario.space(), &scenario.state_box).map_err(input_err)?;
    let certificate = CertificateFile::from_result(
        &scenario.config.name,
        scenario.space(),
        &scenario.candidates,
        &scaling,
        &options,
        &result,
    );
    let code = if result.succeeded() {
        EXIT_OK
    } else {
        let numerical = result
            .chains
            .last()
            .and_then(|c| c.stages.last())
            .is_some_and(|s| matches!(s.sdp_status, SdpStatus::NumericalError | SdpStatus::MaxIterations))
            || result
                .joint
                .as_ref()
                .is_some_and(|j| matches!(j.status, VerificationStatus::NumericalFailure(_)));
        if numerical {
            EXIT_NUMERICAL
        } else {
            EXIT_NOT_VERIFIED
        }
    };
    Ok(SynthOutcome {
        result,
        certificate,
        options,
        code,
    })
}

/// Controller from the chains stored in a certificate.
pub fn controller_from_certificate(scenario: &Scenario, cert: &CertificateFile) -> Result<Controller, CliError> {
    check_variables(scenario, cert)?;
    let candidates = cert.runtime_candidates(&scenario.candidates).map_err(CliError::Input)?;
    let mut ctrl = Controller::new(&scenario.system, &candidates, &scenario.clifs, &scenario.input_box)
        .map_err(input_err)?
        .with_modes(&scenario.runtime_modes)
        .with_weights(scenario.slack_weights());
    if let Some(n) = &scenario.nominal {
        ctrl = ctrl.with_nominal(n.clone());
    }
    Ok(ctrl)
}

fn check_variables(scenario: &Scenario, cert: &CertificateFile) -> Result<(), CliError> {
    if cert.variables != scenario.space().names() || cert.n_states != scenario.system.n() {
        return Err(CliError::Input(format!(
            "certificate variables {:?} do not match the scenario",
            cert.variables
        )));
    }
    Ok(())
}

/// Grid points over `grid_vars` with seeded draws for `random_vars`; each
/// point is redrawn until it lies in every companion set, and skipped after
/// `max_draws` attempts. Remaining states sit at their box midpoint.
pub fn grid_initial_conditions(
    scenario: &Scenario,
    ctrl: &Controller,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, usize), CliError> {
    let ic = scenario
        .config
        .initial_conditions
        .as_ref()
        .ok_or_else(|| CliError::Input("scenario has no [initial_conditions]".into()))?;
    let cfg = &scenario.config;
    let grid_idx: Vec<usize> = ic.grid_vars.iter().map(|v| state_index(cfg, v).unwrap()).collect();
    let rand_idx: Vec<usize> = ic.random_vars.iter().map(|v| state_index(cfg, v).unwrap()).collect();
    let axes: Vec<Vec<f64>> = ic
        .grid
        .iter()
        .map(|&[lo, hi, pts]| {
            let n = pts.max(1.0) as usize;
            (0..n)
                .map(|i| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut skipped = 0;
    let total: usize = axes.iter().map(|a| a.len()).product();
    for flat in 0..total {
        let mut x: Vec<f64> = scenario.state_box.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        let mut rem = flat;
        for (axis, &i) in axes.iter().zip(&grid_idx).rev() {
            x[i] = axis[rem % axis.len()];
            rem /= axis.len();
        }
        let mut accepted = false;
        for _ in 0..ic.max_draws.max(1) {
            for (&i, &[lo, hi]) in rand_idx.iter().zip(&ic.random_ranges) {
                x[i] = rng.gen_range(lo..=hi);
            }
            if ctrl.chain_values(&x).iter().flatten().all(|v| *v >= 0.0) {
                accepted = true;
                break;
            }
        }
        if accepted {
            out.push(x);
        } else {
            skipped += 1;
        }
    }
    Ok((out, skipped))
}

/// Reads initial states from a CSV file whose header names the states.
pub fn file_initial_conditions(scenario: &Scenario, path: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{path}: {e}")))?;
    let header = rdr.headers().map_err(input_err)?.clone();
    let cols: Vec<usize> = scenario
        .config
        .system
        .states
        .iter()
        .map(|s| {
            header
                .iter()
                .position(|h| h.trim() == s)
                .ok_or_else(|| CliError::Input(format!("{path}: missing column `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(input_err)?;
        let x = cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| CliError::Input(format!("{path}: row {}: bad number", line + 2)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(x);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub x0: Vec<f64>,
    pub trajectory: Trajectory,
    pub summary: SafetySummary,
    /// Every stored input lies in the input box.
    pub inputs_in_box: bool,
}

pub struct SimulateOutcome {
    pub runs: Vec<RunRecord>,
    /// Initial states rejected because they start outside a companion set.
    pub rejected: Vec<(Vec<f64>, String)>,
    pub code: i32,
}

pub fn cmd_simulate(ctrl: &Controller, x0s: &[Vec<f64>], opts: &SimOptions) -> SimulateOutcome {
    let mut runs = Vec::new();
    let mut rejected = Vec::new();
    for (x0, res) in x0s.iter().zip(simulate_batch(ctrl, x0s, opts)) {
        match res {
            Ok(trajectory) => {
                let summary = monitor(&trajectory, ctrl);
                let inputs_in_box = trajectory
                    .inputs
                    .iter()
                    .all(|u| u.iter().zip(&ctrl.u_box).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi));
                runs.push(RunRecord {
                    x0: x0.clone(),
                    trajectory,
                    summary,
                    inputs_in_box,
                });
            }
            Err(e) => rejected.push((x0.clone(), e.to_string())),
        }
    }
    let ok = runs.iter().all(|r| {
        r.summary.is_safe() && r.inputs_in_box && r.trajectory.termination != Termination::QpInfeasible
    });
    SimulateOutcome {
        code: if ok { EXIT_OK } else { EXIT_NOT_VERIFIED },
        runs,
        rejected,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecheckedMembership {
    pub stage: String,
    pub label: String,
    pub identity_residual: f64,
    pub min_gram_eigenvalue: f64,
    pub audit_min: Option<f64>,
    pub passed: bool,
    pub stored_passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub memberships: Vec<RecheckedMembership>,
    pub joint_audit: Option<AuditJson>,
    pub stored_joint_audit_passed: Option<bool>,
    /// Every recomputed verdict equals the stored one.
    pub consistent: bool,
    pub certified: bool,
    pub diagnosis: Vec<String>,
    pub code: i32,
}

/// Re-validates every stored membership and re-runs the joint sample audit.
pub fn cmd_check(cert: &CertificateFile, scenario: &Scenario) -> Result<CheckOutcome, CliError> {
    check_variables(scenario, cert)?;
    let space = cert.space().map_err(CliError::Input)?;
    let points = cert.synthesis.certificate_audit_points;
    let seed = cert.synthesis.seed;
    let mut memberships = Vec::new();
    let mut diagnosis = Vec::new();
    let mut recheck = |stage: &str, ms: &[crate::certificate::MembershipJson], stored: &[crate::certificate::CheckJson]| -> Result<(), CliError> {
        for (i, m) in ms.iter().enumerate() {
            let c = membership_from_json(m, &space).map_err(CliError::Input)?;
            let chk = validate_certificate(&c, points, seed.wrapping_add(i as u64));
            let stored_passed = stored.get(i).is_some_and(|s| s.passed);
            if !chk.passed() {
                diagnosis.push(format!(
                    "{stage}/{}: identity residual {:.3e}, min Gram eigenvalue {:.3e}, audit min {:.3e}",
                    m.label, chk.identity_residual, chk.min_gram_eigenvalue, chk.audit_min
                ));
            }
            memberships.push(RecheckedMembership {
                stage: stage.to_string(),
                label: m.label.clone(),
                identity_residual: chk.identity_residual,
                min_gram_eigenvalue: chk.min_gram_eigenvalue,
                audit_min: chk.audit_min.is_finite().then_some(chk.audit_min),
                passed: chk.passed(),
                stored_passed,
            });
        }
        Ok(())
    };
    for chain in &cert.candidates {
        for st in &chain.stages {
            recheck(&format!("{}:{}", chain.name, st.label), &st.certificates, &st.checks)?;
        }
    }
    let mut joint_audit = None;
    let mut stored_joint = None;
    if let Some(joint) = &cert.joint {
        recheck("joint", &joint.certificates, &joint.checks)?;
        stored_joint = joint.audit.as_ref().map(|a| a.passed);
        let candidates = cert.runtime_candidates(&scenario.candidates).map_err(CliError::Input)?;
        let problem = VerificationProblem {
            system: scenario.system.clone(),
            x_set: scenario.x_set.clone(),
            u_set: scenario.u_set.clone(),
            candidates,
            clifs: scenario.clifs.clone(),
            options: scenario.verify_options(),
        };
        let certificates = joint
            .certificates
            .iter()
            .map(|m| membership_from_json(m, &space))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::Input)?;
        let report = VerificationReport {
            status: VerificationStatus::Verified,
            sdp_status: None,
            sdp_metrics: None,
            rho: joint.rho.clone(),
            controller: polys_from_json(&joint.controller, &space).map_err(CliError::Input)?,
            certificates,
            checks: Vec::new(),
            audit: None,
            scaling: cert.scaling(),
        };
        if !report.controller.is_empty() {
            let audit = sample_audit(&report, &problem, cert.synthesis.audit_samples, seed).map_err(input_err)?;
            if !audit.passes() {
                diagnosis.push(format!(
                    "joint sample audit: {} accepted states, normalized minimum {:.3e}",
                    audit.accepted, audit.normalized_min
                ));
            }
            joint_audit = Some(audit_json(&audit));
        }
    }
    let all_pass = memberships.iter().all(|m| m.passed) && joint_audit.as_ref().is_none_or(|a| a.passed);
    let consistent = memberships.iter().all(|m| m.passed == m.stored_passed)
        && joint_audit.as_ref().map(|a| a.passed) == stored_joint;
    let certified = all_pass && cert.succeeded && joint_audit.is_some();
    if !cert.succeeded {
        diagnosis.push(match &cert.failure {
            Some(f) => format!("synthesis failed at {}/{}: {}", f.candidate, f.stage, f.reason),
            None => format!("joint verification: {}", cert.joint.as_ref().map_or("missing".into(), |j| j.status.clone())),
        });
    }
    Ok(CheckOutcome {
        memberships,
        joint_audit,
        stored_joint_audit_passed: stored_joint,
        consistent,
        certified,
        diagnosis,
        code: if certified { EXIT_OK } else { EXIT_NOT_VERIFIED },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifySummary {
    pub status: String,
    pub rho: Vec<f64>,
    pub rho_sum: f64,
    pub audit: Option<AuditJson>,
    pub checks_passed: bool,
}

pub fn verify_summary(r: &VerificationReport) -> VerifySummary {
    VerifySummary {
        status: status_name(&r.status),
        rho: r.rho.clone(),
        rho_sum: r.rho_sum(),
        audit: r.audit.as_ref().map(audit_json),
        checks_passed: r.checks.iter().all(|c| c.passed()),
    }
}
