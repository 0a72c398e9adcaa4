//! Verification SDPs for one or several HOCBF candidates with known class-K chains.

use hocbf_sdp::{SdpSettings, SdpStatus, SolutionMetrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{AffineCoeffPoly, AffineForm, DecisionId, Poly, PolyError};
use crate::sos::{
    validate_certificate, BoxScaling, CertificateCheck, DecisionKind, MembershipCertificate, MultiplierDegrees,
    SosError, SosProgram, SosSolution, AUDIT_TOL,
};
use crate::system::{
    build_chain, check_relative_degree, Clif, ControlAffineSystem, HocbfCandidate, HocbfChain, SemialgebraicSet,
    SystemError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error("candidate '{0}' fails its relative-degree check")]
    RelativeDegree(String),
    #[error("candidate '{0}' has no polynomial class-K function in its last slot")]
    MissingAlphaR(String),
    #[error("input set generator {0} is not affine in the inputs")]
    NonAffineInput(usize),
    #[error("state set needs a bounding box")]
    NoBoundingBox,
    #[error("expected {expected} candidates, got {got}")]
    CandidateCount { expected: &'static str, got: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Degree of each controller component `u_k(x)`.
    pub deg_u: u32,
    pub degrees: MultiplierDegrees,
    pub sdp: SdpSettings,
    /// Accepted states in the closed-loop sample audit.
    pub audit_samples: usize,
    /// Points in each certificate's own audit.
    pub certificate_audit_points: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            deg_u: 2,
            degrees: MultiplierDegrees::Auto,
            sdp: SdpSettings::default(),
            audit_samples: 5000,
            certificate_audit_points: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationProblem {
    pub system: ControlAffineSystem,
    /// State set with generators `h` and a bounding box.
    pub x_set: SemialgebraicSet,
    /// Input set with generators `c` affine in the input symbols.
    pub u_set: SemialgebraicSet,
    pub candidates: Vec<HocbfCandidate>,
    pub clifs: Vec<Clif>,
    pub options: VerifyOptions,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VerificationStatus {
    Verified,
    /// The SDP has no solution; no claim is made.
    Infeasible,
    /// The solver stopped without a usable point.
    NumericalFailure(SdpStatus),
    /// A membership failed its residual, Gram or audit check.
    CertificateRejected(String),
    /// The sampled closed loop violates a certified inequality.
    AuditViolation,
    /// No sampled state lies in the certified region.
    EmptySafeSet,
    /// Fewer than 100 sampled states lie in the certified region.
    ThinRegion(usize),
}

impl VerificationStatus {
    pub fn is_verified(&self) -> bool {
        matches!(self, VerificationStatus::Verified)
    }
}

/// Minimum of each certified inequality over sampled states.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditStats {
    pub accepted: usize,
    pub attempts: usize,
    /// `psi_r^j(x, u*(x))` per candidate.
    pub candidate_min: Vec<f64>,
    /// `rho_k - L_f V_k - L_g V_k u*(x)` per CLIF.
    pub clif_min: Vec<f64>,
    /// `c_i(u*(x))` per input generator.
    pub input_min: Vec<f64>,
    /// Smallest value above after dividing by its membership's coefficient scale.
    pub normalized_min: f64,
}

impl AuditStats {
    pub fn passes(&self) -> bool {
        self.accepted >= 100 && self.normalized_min >= AUDIT_TOL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub status: VerificationStatus,
    pub sdp_status: Option<SdpStatus>,
    pub sdp_metrics: Option<SolutionMetrics>,
    pub rho: Vec<f64>,
    /// `u*(x)` in original coordinates.
    pub controller: Vec<Poly>,
    pub certificates: Vec<MembershipCertificate>,
    pub checks: Vec<CertificateCheck>,
    pub audit: Option<AuditStats>,
    pub scaling: BoxScaling,
}

impl VerificationReport {
    pub fn rho_sum(&self) -> f64 {
        self.rho.iter().sum()
    }
}

/// Generators of `X` plus state bounds for scaling.
pub(crate) fn state_box(x_set: &SemialgebraicSet, n: usize) -> Result<Vec<(f64, f64)>, CertifyError> {
    let b = x_set.bbox.as_ref().ok_or(CertifyError::NoBoundingBox)?;
    if b.len() < n {
        return Err(CertifyError::NoBoundingBox);
    }
    Ok(b[..n].to_vec())
}

/// One free polynomial of degree `deg` per input channel.
pub(crate) fn new_controller(
    program: &mut SosProgram,
    sys: &ControlAffineSystem,
    deg: u32,
) -> Result<Vec<AffineCoeffPoly>, CertifyError> {
    let states: Vec<usize> = (0..sys.n()).collect();
    let basis = program.scaled_basis(&states, deg)?;
    (0..sys.m()).map(|_| Ok(program.new_poly(&basis)?)).collect()
}

/// `drift + row . u(x)`.
pub(crate) fn affine_in_u(drift: &Poly, row: &[Poly], u: &[AffineCoeffPoly]) -> Result<AffineCoeffPoly, CertifyError> {
    let mut acc = AffineCoeffPoly::from_poly(drift);
    for (r, uk) in row.iter().zip(u) {
        if !r.is_zero() {
            acc = acc.try_add(&uk.try_mul_poly(r)?)?;
        }
    }
    Ok(acc)
}

/// Splits `c(x, u) = c_0(x) + sum_k c_k(x) u_k`, failing when `c` is not affine in `u`.
pub(crate) fn split_input_generator(c: &Poly, idx: usize) -> Result<(Poly, Vec<Poly>), CertifyError> {
    let space = c.space();
    let n = space.n_states();
    for m in c.terms().keys() {
        let du: u32 = (n..space.len()).map(|v| m.exponent(v)).sum();
        if du > 1 {
            return Err(CertifyError::NonAffineInput(idx));
        }
    }
    let zero_u: Vec<Poly> = (0..space.len())
        .map(|v| if v < n { Poly::var(space, v) } else { Poly::zero(space) })
        .collect();
    let c0 = c.substitute(&zero_u)?;
    let ck = (n..space.len()).map(|v| c.partial(v)).collect();
    Ok((c0, ck))
}

/// `c(u(x))` for every input generator.
pub(crate) fn input_lhs(u_set: &SemialgebraicSet, u: &[AffineCoeffPoly]) -> Result<Vec<AffineCoeffPoly>, CertifyError> {
    u_set
        .generators
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (c0, ck) = split_input_generator(c, i)?;
            affine_in_u(&c0, &ck, u)
        })
        .collect()
}

/// `rho - L_f V - L_g V u(x)`.
pub(crate) fn clif_lhs(
    sys: &ControlAffineSystem,
    clif: &Clif,
    u: &[AffineCoeffPoly],
    rho: DecisionId,
) -> Result<AffineCoeffPoly, CertifyError> {
    let lf = sys.lie_f(&clif.v)?;
    let lg = sys.lie_g(&clif.v)?;
    let neg_row: Vec<Poly> = lg.iter().map(|p| p.scale(-1.0)).collect();
    let base = affine_in_u(&lf.scale(-1.0), &neg_row, u)?;
    let one = Poly::constant(sys.space(), 1.0);
    Ok(base.try_add(&AffineCoeffPoly::linear_combination(&[one], &[rho])?)?)
}

/// Runs the certificate checks and returns the first failure label, if any.
pub(crate) fn check_all(
    program: &SosProgram,
    sol: &SosSolution,
    points: usize,
    seed: u64,
) -> (Vec<MembershipCertificate>, Vec<CertificateCheck>, Option<String>) {
    let mut certs = Vec::new();
    let mut checks = Vec::new();
    let mut failed = None;
    for i in 0..program.constraints().len() {
        let cert = program.certificate(i, sol);
        let check = validate_certificate(&cert, points, seed.wrapping_add(i as u64));
        if failed.is_none() && !check.passed() {
            failed = Some(cert.label.clone());
        }
        certs.push(cert);
        checks.push(check);
    }
    (certs, checks, failed)
}

fn chains(problem: &VerificationProblem) -> Result<Vec<HocbfChain>, CertifyError> {
    let sys = &problem.system;
    problem
        .candidates
        .iter()
        .map(|c| {
            if !check_relative_degree(&c.b, sys, c.r)?.holds {
                return Err(CertifyError::RelativeDegree(c.name.clone()));
            }
            let chain = build_chain(c, sys)?;
            if !chain.includes_alpha_r {
                return Err(CertifyError::MissingAlphaR(c.name.clone()));
            }
            Ok(chain)
        })
        .collect()
}

/// Single-candidate verification.
pub fn verify_single(problem: &VerificationProblem) -> Result<VerificationReport, CertifyError> {
    if problem.candidates.len() != 1 {
        return Err(CertifyError::CandidateCount {
            expected: "exactly 1",
            got: problem.candidates.len(),
        });
    }
    verify(problem)
}

/// Joint verification of several candidates sharing one controller. A single
/// candidate gives the same program as [`verify_single`].
pub fn verify_multi(problem: &VerificationProblem) -> Result<VerificationReport, CertifyError> {
    if problem.candidates.is_empty() {
        return Err(CertifyError::CandidateCount {
            expected: "at least 1",
            got: problem.candidates.len(),
        });
    }
    verify(problem)
}

/// Verification over the joint generator list `{psi_{r_j - 1}^j, h}`; any
/// number of candidates.
pub fn verify(problem: &VerificationProblem) -> Result<VerificationReport, CertifyError> {
    let sys = &problem.system;
    let opts = &problem.options;
    let chains = chains(problem)?;
    let bbox = state_box(&problem.x_set, sys.n())?;
    let mut program = SosProgram::new(sys.space(), &bbox)?;
    let u = new_controller(&mut program, sys, opts.deg_u)?;

    let mut gens: Vec<Poly> = chains.iter().map(|c| c.last().clone()).collect();
    gens.extend(problem.x_set.generators.iter().cloned());

    for (cand, chain) in problem.candidates.iter().zip(&chains) {
        let lhs = affine_in_u(&chain.drift_term, &chain.input_row, &u)?;
        program.assert_membership(format!("hocbf:{}", cand.name), &lhs, &gens, &opts.degrees)?;
    }
    let mut rho_ids = Vec::new();
    let mut objective = AffineForm::default();
    for clif in &problem.clifs {
        let rho = program.new_decision(DecisionKind::Nonneg);
        rho_ids.push(rho);
        objective.add_assign(&AffineForm::decision(rho, 1.0), 1.0);
        let lhs = clif_lhs(sys, clif, &u, rho)?;
        program.assert_membership(format!("clif:{}", clif.name), &lhs, &gens, &opts.degrees)?;
    }
    let inputs = input_lhs(&problem.u_set, &u)?;
    program.assert_vector_membership("input", &inputs, &gens, &opts.degrees)?;
    program.set_objective(objective);

    let scaling = program.scaling().clone();
    let empty = |status, sdp_status| VerificationReport {
        status,
        sdp_status,
        sdp_metrics: None,
        rho: Vec::new(),
        controller: Vec::new(),
        certificates: Vec::new(),
        checks: Vec::new(),
        audit: None,
        scaling: scaling.clone(),
    };
    let sol = match program.solve(&opts.sdp) {
        Ok(sol) => sol,
        Err(SosError::NotFeasible(st)) => {
            let status = match st {
                SdpStatus::Infeasible => VerificationStatus::Infeasible,
                other => VerificationStatus::NumericalFailure(other),
            };
            return Ok(empty(status, Some(st)));
        }
        Err(e) => return Err(e.into()),
    };
    let (certificates, checks, failed) = check_all(&program, &sol, opts.certificate_audit_points, opts.seed);
    let mut report = VerificationReport {
        status: VerificationStatus::Verified,
        sdp_status: Some(sol.sdp.status),
        sdp_metrics: Some(sol.sdp.metrics),
        rho: rho_ids.iter().map(|&id| sol.decisions[id]).collect(),
        controller: u.iter().map(|p| sol.poly(p)).collect(),
        certificates,
        checks,
        audit: None,
        scaling,
    };
    let audit = sample_audit(&report, problem, opts.audit_samples, opts.seed)?;
    report.status = if let Some(label) = failed {
        VerificationStatus::CertificateRejected(label)
    } else if audit.accepted == 0 {
        VerificationStatus::EmptySafeSet
    } else if audit.accepted < 100 {
        VerificationStatus::ThinRegion(audit.accepted)
    } else if !audit.passes() {
        VerificationStatus::AuditViolation
    } else {
        VerificationStatus::Verified
    };
    report.audit = Some(audit);
    Ok(report)
}

/// Rejection-samples the certified region inside the state box and records the
/// minimum of every certified inequality under `u*`.
pub fn sample_audit(
    report: &VerificationReport,
    problem: &VerificationProblem,
    n: usize,
    seed: u64,
) -> Result<AuditStats, CertifyError> {
    let sys = &problem.system;
    let chains = chains(problem)?;
    let bbox = state_box(&problem.x_set, sys.n())?;
    let u: Vec<AffineCoeffPoly> = report.controller.iter().map(AffineCoeffPoly::from_poly).collect();
    let none: &[f64] = &[];
    let mut targets: Vec<Poly> = Vec::new();
    for chain in &chains {
        targets.push(affine_in_u(&chain.drift_term, &chain.input_row, &u)?.collapse(none));
    }
    let n_cand = targets.len();
    for (k, clif) in problem.clifs.iter().enumerate() {
        let rho = report.rho.get(k).copied().unwrap_or(0.0);
        let lf = sys.lie_f(&clif.v)?;
        let lg = sys.lie_g(&clif.v)?;
        let neg: Vec<Poly> = lg.iter().map(|p| p.scale(-1.0)).collect();
        let base = affine_in_u(&lf.scale(-1.0), &neg, &u)?.collapse(none);
        targets.push(&base + &Poly::constant(sys.space(), rho));
    }
    let n_clif = problem.clifs.len();
    for c in input_lhs(&problem.u_set, &u)? {
        targets.push(c.collapse(none));
    }
    // membership scales in normalized units, in the same order as the certificates
    let scales: Vec<f64> = (0..targets.len())
        .map(|i| {
            report
                .certificates
                .get(i)
                .map_or(1.0, |c| c.lhs.max_abs_coeff().max(1.0))
        })
        .collect();
    let region: Vec<&Poly> = chains
        .iter()
        .map(|c| c.last())
        .chain(problem.x_set.generators.iter())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mins = vec![f64::INFINITY; targets.len()];
    let mut normalized_min = f64::INFINITY;
    let mut accepted = 0;
    let mut attempts = 0;
    let mut pt = vec![0.0; sys.space().len()];
    while accepted < n && attempts < n.saturating_mul(200) {
        attempts += 1;
        for (i, &(lo, hi)) in bbox.iter().enumerate() {
            pt[i] = rng.gen_range(lo..=hi);
        }
        if !region.iter().all(|g| g.eval_unchecked(&pt) >= 0.0) {
            continue;
        }
        accepted += 1;
        for (k, t) in targets.iter().enumerate() {
            let v = t.eval_unchecked(&pt);
            mins[k] = mins[k].min(v);
            normalized_min = normalized_min.min(v / scales[k]);
        }
    }
    Ok(AuditStats {
        accepted,
        attempts,
        candidate_min: mins[..n_cand].to_vec(),
        clif_min: mins[n_cand..n_cand + n_clif].to_vec(),
        input_min: mins[n_cand + n_clif..].to_vec(),
        normalized_min,
    })
}
