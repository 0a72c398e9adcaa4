//! Class-K synthesis: stage (a) picks `beta_{i-1}` bounding the second derivative of
//! `psi_{i-2}`, stage (b) picks `alpha_r` with a certified controller, and the
//! candidates are processed in order with growing generator sets.

use hocbf_sdp::{SdpSettings, SdpStatus, SolutionMetrics};
use thiserror::Error;

use crate::certify::{
    affine_in_u, check_all, clif_lhs, input_lhs, new_controller, state_box, verify_multi, verify_single, CertifyError,
    VerificationProblem, VerificationReport, VerificationStatus, VerifyOptions,
};
use crate::poly::{AffineCoeffPoly, AffineForm, Poly, PolyError};
use crate::sos::{CertificateCheck, DecisionKind, MembershipCertificate, MultiplierDegrees, SosError, SosProgram};
use crate::system::{
    check_relative_degree, eta_under_approx, sqrt_from_beta, zeta_bar, ClassKSlot, ClassKTemplate, Clif,
    ControlAffineSystem, EtaFormula, HocbfCandidate, SemialgebraicSet, SqrtClassK, SystemError,
};

/// Smallest coefficient accepted as a strict-increase witness.
pub const MIN_COEFF: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error("candidate '{0}' fails its relative-degree check")]
    RelativeDegree(String),
    #[error("stage index {0} outside 2..=r")]
    StageIndex(usize),
    #[error("class-K slot {0} has not been synthesized")]
    MissingSlot(usize),
}

/// How stage (a) treats the input appearing in the second derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StageAInput {
    /// Input term dropped.
    DriftOnly,
    /// Input replaced by a decision polynomial constrained to `U`.
    #[default]
    DecisionInput,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisOptions {
    /// Number of template terms `2m` for every synthesized function.
    pub template_terms: usize,
    pub deg_u: u32,
    pub degrees: MultiplierDegrees,
    pub stage_a_input: StageAInput,
    /// Weight of each CLIF slack in the stage (b) objective; missing entries are 1.
    pub clif_weights: Vec<f64>,
    /// Upper bound on the leading template coefficient.
    pub coeff_cap: f64,
    pub eta_formula: EtaFormula,
    pub zeta_points: usize,
    pub sdp: SdpSettings,
    /// Verify each chain on its own right after it is synthesized.
    pub gate_each_candidate: bool,
    pub verify: VerifyOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            template_terms: 1,
            deg_u: 2,
            degrees: MultiplierDegrees::Auto,
            stage_a_input: StageAInput::DecisionInput,
            clif_weights: Vec::new(),
            coeff_cap: 1e3,
            eta_formula: EtaFormula::Standard,
            zeta_points: 101,
            sdp: SdpSettings::default(),
            gate_each_candidate: true,
            verify: VerifyOptions::default(),
        }
    }
}

/// Solver output and certificates of one synthesis SDP.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub label: String,
    pub generators: Vec<String>,
    pub sdp_status: SdpStatus,
    pub sdp_metrics: SolutionMetrics,
    pub certificates: Vec<MembershipCertificate>,
    pub checks: Vec<CertificateCheck>,
    pub seconds: f64,
}

impl StageRecord {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed())
    }
}

/// Synthesized function for slot `i < r`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedSlot {
    pub beta: Vec<f64>,
    pub zeta_bar: f64,
    pub sqrt: SqrtClassK,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedChain {
    pub name: String,
    pub slots: Vec<SynthesizedSlot>,
    pub alpha_r: Vec<f64>,
    pub rho: Vec<f64>,
    pub controller: Vec<Poly>,
    pub stages: Vec<StageRecord>,
}

impl SynthesizedChain {
    /// Candidate with square-root/linear pairs in slots `1..r-1` and `alpha_r` last.
    pub fn candidate(&self, base: &HocbfCandidate) -> HocbfCandidate {
        let mut slots: Vec<ClassKSlot> = self
            .slots
            .iter()
            .map(|s| ClassKSlot::SqrtPair {
                sqrt: s.sqrt,
                poly: ClassKTemplate::linear(s.eta),
            })
            .collect();
        slots.push(ClassKSlot::Poly(ClassKTemplate {
            coeffs: self.alpha_r.clone(),
        }));
        base.clone().with_slots(slots)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisFailure {
    pub candidate: String,
    /// Stage label such as `a2` or `b`, or `gate`.
    pub stage: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiSynthesisResult {
    pub chains: Vec<SynthesizedChain>,
    pub sdp_count: usize,
    pub gates: Vec<VerificationStatus>,
    pub joint: Option<VerificationReport>,
    pub failure: Option<SynthesisFailure>,
}

impl MultiSynthesisResult {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none() && self.joint.as_ref().is_some_and(|r| r.status.is_verified())
    }
}

/// Everything a stage needs besides the candidate itself.
#[derive(Clone, Debug)]
pub struct SynthesisContext<'a> {
    pub system: &'a ControlAffineSystem,
    pub x_set: &'a SemialgebraicSet,
    pub u_set: &'a SemialgebraicSet,
    pub clifs: &'a [Clif],
    /// Extra generators from earlier candidates, with display names.
    pub generators: Vec<(String, Poly)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageAOutcome {
    pub beta: Vec<f64>,
    pub record: StageRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageBOutcome {
    pub alpha_r: Vec<f64>,
    pub rho: Vec<f64>,
    pub controller: Vec<Poly>,
    pub record: StageRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StageResult<T> {
    Done(T),
    Failed { reason: String, record: Option<StageRecord> },
}

/// `psi_0 .. psi_k` from polynomial slots `1..k`.
fn psis_up_to(candidate: &HocbfCandidate, sys: &ControlAffineSystem, k: usize) -> Result<Vec<Poly>, SynthError> {
    let mut psis = vec![candidate.b.clone()];
    for i in 1..=k {
        let alpha = candidate.slots[i - 1].polynomial().ok_or(SynthError::MissingSlot(i))?;
        let prev = &psis[i - 1];
        psis.push(&sys.lie_f(prev)? + &alpha.compose(prev)?);
    }
    Ok(psis)
}

fn template_ids(program: &mut SosProgram, terms: usize) -> Vec<usize> {
    (0..terms).map(|_| program.new_decision(DecisionKind::Nonneg)).collect()
}

/// `sum_k c_k psi^(k-1)` (derivative template) or `sum_k c_k / k psi^k` as an affine polynomial.
fn template_poly(psi: &Poly, ids: &[usize], derivative: bool) -> Result<AffineCoeffPoly, SynthError> {
    let mut basis = Vec::with_capacity(ids.len());
    let mut power = Poly::constant(psi.space(), 1.0);
    for k in 1..=ids.len() {
        if derivative {
            basis.push(power.clone());
            power = power.try_mul(psi)?;
        } else {
            power = power.try_mul(psi)?;
            basis.push(power.scale(1.0 / k as f64));
        }
    }
    Ok(AffineCoeffPoly::linear_combination(&basis, ids)?)
}

fn record(
    label: String,
    generators: &[(String, Poly)],
    program: &SosProgram,
    sol: &crate::sos::SosSolution,
    opts: &SynthesisOptions,
    started: std::time::Instant,
) -> (StageRecord, Option<String>) {
    let (certificates, checks, failed) =
        check_all(program, sol, opts.verify.certificate_audit_points, opts.verify.seed);
    (
        StageRecord {
            label,
            generators: generators.iter().map(|g| g.0.clone()).collect(),
            sdp_status: sol.sdp.status,
            sdp_metrics: sol.sdp.metrics,
            certificates,
            checks,
            seconds: started.elapsed().as_secs_f64(),
        },
        failed,
    )
}

fn solve_stage(
    program: &SosProgram,
    opts: &SynthesisOptions,
) -> Result<Result<crate::sos::SosSolution, SdpStatus>, SynthError> {
    match program.solve(&opts.sdp) {
        Ok(sol) => Ok(Ok(sol)),
        Err(SosError::NotFeasible(st)) => Ok(Err(st)),
        Err(e) => Err(e.into()),
    }
}

/// Stage (a) for slot `i - 1`: `psi_{i-2}'' - beta'_{i-1}(psi_{i-2})` in the quadratic
/// module of `{psi_{i-2}, context, h}`.
pub fn synth_stage_a(
    candidate: &HocbfCandidate,
    i: usize,
    ctx: &SynthesisContext,
    opts: &SynthesisOptions,
) -> Result<StageResult<StageAOutcome>, SynthError> {
    let started = std::time::Instant::now();
    if i < 2 || i > candidate.r {
        return Err(SynthError::StageIndex(i));
    }
    let sys = ctx.system;
    let psis = psis_up_to(candidate, sys, i - 2)?;
    let psi = &psis[i - 2];
    let d1 = sys.lie_f(psi)?;
    let drift = sys.lie_f(&d1)?;
    let row = sys.lie_g(&d1)?;

    let bbox = state_box(ctx.x_set, sys.n())?;
    let mut program = SosProgram::new(sys.space(), &bbox)?;
    let mut gens: Vec<(String, Poly)> = vec![(format!("psi{}[{}]", i - 2, candidate.name), psi.clone())];
    gens.extend(ctx.generators.iter().cloned());
    gens.extend(ctx.x_set.generators.iter().enumerate().map(|(k, h)| (format!("h{k}"), h.clone())));
    let gen_polys: Vec<Poly> = gens.iter().map(|g| g.1.clone()).collect();

    let ids = template_ids(&mut program, opts.template_terms);
    let beta_prime = template_poly(psi, &ids, true)?;
    let second = match opts.stage_a_input {
        StageAInput::DriftOnly => AffineCoeffPoly::from_poly(&drift),
        StageAInput::DecisionInput => {
            let u = new_controller(&mut program, sys, opts.deg_u)?;
            let inputs = input_lhs(ctx.u_set, &u)?;
            program.assert_vector_membership("input", &inputs, &gen_polys, &opts.degrees)?;
            affine_in_u(&drift, &row, &u)?
        }
    };
    let lhs = second.try_add(&beta_prime.scale(-1.0))?;
    program.assert_membership(format!("stage-a{i}:{}", candidate.name), &lhs, &gen_polys, &opts.degrees)?;
    program.add_upper_bound(ids[0], opts.coeff_cap);
    program.set_objective(AffineForm::decision(ids[0], -1.0));

    let sol = match solve_stage(&program, opts)? {
        Ok(sol) => sol,
        Err(st) => {
            return Ok(StageResult::Failed {
                reason: format!("stage (a) SDP returned {st:?}"),
                record: None,
            })
        }
    };
    let (rec, failed) = record(format!("a{i}:{}", candidate.name), &gens, &program, &sol, opts, started);
    let beta: Vec<f64> = ids.iter().map(|&id| sol.decisions[id].max(0.0)).collect();
    if let Some(label) = failed {
        return Ok(StageResult::Failed {
            reason: format!("certificate '{label}' rejected with beta {beta:?}"),
            record: Some(rec),
        });
    }
    if beta.iter().all(|b| *b < MIN_COEFF) {
        return Ok(StageResult::Failed {
            reason: format!("beta coefficients {beta:?} are all below {MIN_COEFF:e}"),
            record: Some(rec),
        });
    }
    Ok(StageResult::Done(StageAOutcome { beta, record: rec }))
}

/// Turns `beta_{i-1}` into the square-root runtime form and its linear under-approximation.
pub fn slot_from_beta(
    beta: &[f64],
    psi: &Poly,
    x_set: &SemialgebraicSet,
    opts: &SynthesisOptions,
) -> Result<SynthesizedSlot, SynthError> {
    let template = ClassKTemplate::new(beta.to_vec())?;
    let region = x_set.with_generators(std::slice::from_ref(psi));
    let zb = zeta_bar(psi, &region, opts.zeta_points)?;
    let sqrt = sqrt_from_beta(beta[0])?;
    let mut eta = eta_under_approx(&template, zb, opts.eta_formula)?;
    // keep a sqrt(z) >= eta z on [0, zeta_bar] for nonlinear templates
    eta = eta.min(sqrt.a / zb.sqrt());
    Ok(SynthesizedSlot {
        beta: beta.to_vec(),
        zeta_bar: zb,
        sqrt,
        eta,
    })
}

/// Stage (b): `psi_{r-1}' + alpha_r(psi_{r-1})`, CLIF and input memberships over
/// `{psi_{r-1}, context, h}`, minimizing the weighted CLIF slacks.
pub fn synth_stage_b(
    candidate: &HocbfCandidate,
    ctx: &SynthesisContext,
    opts: &SynthesisOptions,
) -> Result<StageResult<StageBOutcome>, SynthError> {
    let started = std::time::Instant::now();
    let sys = ctx.system;
    let r = candidate.r;
    let psis = psis_up_to(candidate, sys, r - 1)?;
    let psi = &psis[r - 1];
    let drift = sys.lie_f(psi)?;
    let row = sys.lie_g(psi)?;

    let bbox = state_box(ctx.x_set, sys.n())?;
    let mut program = SosProgram::new(sys.space(), &bbox)?;
    let mut gens: Vec<(String, Poly)> = vec![(format!("psi{}[{}]", r - 1, candidate.name), psi.clone())];
    gens.extend(ctx.generators.iter().cloned());
    gens.extend(ctx.x_set.generators.iter().enumerate().map(|(k, h)| (format!("h{k}"), h.clone())));
    let gen_polys: Vec<Poly> = gens.iter().map(|g| g.1.clone()).collect();

    let u = new_controller(&mut program, sys, opts.deg_u)?;
    let ids = template_ids(&mut program, opts.template_terms);
    let alpha = template_poly(psi, &ids, false)?;
    let lhs = affine_in_u(&drift, &row, &u)?.try_add(&alpha)?;
    program.assert_membership(format!("stage-b:{}", candidate.name), &lhs, &gen_polys, &opts.degrees)?;
    let mut objective = AffineForm::default();
    let mut rho_ids = Vec::new();
    for (k, clif) in ctx.clifs.iter().enumerate() {
        let rho = program.new_decision(DecisionKind::Nonneg);
        rho_ids.push(rho);
        let w = opts.clif_weights.get(k).copied().unwrap_or(1.0);
        objective.add_assign(&AffineForm::decision(rho, w), 1.0);
        let l = clif_lhs(sys, clif, &u, rho)?;
        program.assert_membership(format!("clif:{}", clif.name), &l, &gen_polys, &opts.degrees)?;
    }
    let inputs = input_lhs(ctx.u_set, &u)?;
    program.assert_vector_membership("input", &inputs, &gen_polys, &opts.degrees)?;
    program.add_upper_bound(ids[0], opts.coeff_cap);
    program.set_objective(objective);

    let sol = match solve_stage(&program, opts)? {
        Ok(sol) => sol,
        Err(st) => {
            return Ok(StageResult::Failed {
                reason: format!("stage (b) SDP returned {st:?}"),
                record: None,
            })
        }
    };
    let (rec, failed) = record(format!("b:{}", candidate.name), &gens, &program, &sol, opts, started);
    let alpha_r: Vec<f64> = ids.iter().map(|&id| sol.decisions[id].max(0.0)).collect();
    if let Some(label) = failed {
        return Ok(StageResult::Failed {
            reason: format!("certificate '{label}' rejected with alpha_r {alpha_r:?}"),
            record: Some(rec),
        });
    }
    if alpha_r.iter().all(|a| *a < MIN_COEFF) {
        return Ok(StageResult::Failed {
            reason: format!("alpha_r coefficients {alpha_r:?} are all below {MIN_COEFF:e}"),
            record: Some(rec),
        });
    }
    Ok(StageResult::Done(StageBOutcome {
        alpha_r,
        rho: rho_ids.iter().map(|&id| sol.decisions[id]).collect(),
        controller: u.iter().map(|p| sol.poly(p)).collect(),
        record: rec,
    }))
}

/// Synthesizes every candidate in order. Candidate `j` sees the chain functions of
/// candidates `1..j` at the same depth (or their deepest one) as extra generators.
pub fn synth_all(
    candidates: &[HocbfCandidate],
    system: &ControlAffineSystem,
    x_set: &SemialgebraicSet,
    u_set: &SemialgebraicSet,
    clifs: &[Clif],
    opts: &SynthesisOptions,
) -> Result<MultiSynthesisResult, SynthError> {
    let mut result = MultiSynthesisResult {
        chains: Vec::new(),
        sdp_count: 0,
        gates: Vec::new(),
        joint: None,
        failure: None,
    };
    // synthesized candidates with polynomial slots, for context generators
    let mut done: Vec<HocbfCandidate> = Vec::new();
    let fail = |result: &mut MultiSynthesisResult, cand: &str, stage: String, reason: String| {
        result.failure = Some(SynthesisFailure {
            candidate: cand.to_string(),
            stage,
            reason,
        });
    };
    for cand in candidates {
        if !check_relative_degree(&cand.b, system, cand.r)?.holds {
            return Err(SynthError::RelativeDegree(cand.name.clone()));
        }
        let mut work = cand.clone().with_slots(vec![ClassKSlot::Unknown; cand.r]);
        let mut chain = SynthesizedChain {
            name: cand.name.clone(),
            slots: Vec::new(),
            alpha_r: Vec::new(),
            rho: Vec::new(),
            controller: Vec::new(),
            stages: Vec::new(),
        };
        let context = |level: usize| -> Result<Vec<(String, Poly)>, SynthError> {
            done.iter()
                .map(|d| {
                    let depth = level.min(d.r - 1);
                    let p = psis_up_to(d, system, depth)?.pop().unwrap();
                    Ok((format!("psi{depth}[{}]", d.name), p))
                })
                .collect()
        };
        for i in 2..=cand.r {
            let ctx = SynthesisContext {
                system,
                x_set,
                u_set,
                clifs,
                generators: context(i - 2)?,
            };
            result.sdp_count += 1;
            match synth_stage_a(&work, i, &ctx, opts)? {
                StageResult::Done(out) => {
                    let psi = psis_up_to(&work, system, i - 2)?.pop().unwrap();
                    let slot = slot_from_beta(&out.beta, &psi, x_set, opts)?;
                    work.slots[i - 2] = ClassKSlot::SqrtPair {
                        sqrt: slot.sqrt,
                        poly: ClassKTemplate::linear(slot.eta),
                    };
                    chain.slots.push(slot);
                    chain.stages.push(out.record);
                }
                StageResult::Failed { reason, record } => {
                    chain.stages.extend(record);
                    result.chains.push(chain);
                    fail(&mut result, &cand.name, format!("a{i}"), reason);
                    return Ok(result);
                }
            }
        }
        let ctx = SynthesisContext {
            system,
            x_set,
            u_set,
            clifs,
            generators: context(cand.r - 1)?,
        };
        result.sdp_count += 1;
        match synth_stage_b(&work, &ctx, opts)? {
            StageResult::Done(out) => {
                chain.alpha_r = out.alpha_r;
                chain.rho = out.rho;
                chain.controller = out.controller;
                chain.stages.push(out.record);
            }
            StageResult::Failed { reason, record } => {
                chain.stages.extend(record);
                result.chains.push(chain);
                fail(&mut result, &cand.name, "b".into(), reason);
                return Ok(result);
            }
        }
        done.push(chain.candidate(cand));
        result.chains.push(chain);
        let last = done.len() == candidates.len();
        let problem = |candidates: Vec<HocbfCandidate>| VerificationProblem {
            system: system.clone(),
            x_set: x_set.clone(),
            u_set: u_set.clone(),
            candidates,
            clifs: clifs.to_vec(),
            options: opts.verify.clone(),
        };
        if opts.gate_each_candidate {
            let report = verify_single(&problem(vec![done.last().unwrap().clone()]))?;
            let status = report.status.clone();
            result.gates.push(status.clone());
            if !status.is_verified() {
                fail(&mut result, &cand.name, "gate".into(), format!("verifier returned {status:?}"));
                return Ok(result);
            }
        }
        if last {
            let report = verify_multi(&problem(done.clone()))?;
            let status = report.status.clone();
            result.joint = Some(report);
            if !status.is_verified() {
                fail(&mut result, &cand.name, "joint".into(), format!("verifier returned {status:?}"));
                return Ok(result);
            }
        }
    }
    Ok(result)
}
