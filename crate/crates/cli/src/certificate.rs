//! JSON certificate files.
//!
//! Polynomials are stored as strings in the expression grammar with
//! round-trip float formatting. Gram matrices are row-major over monomial
//! exponent vectors. Membership polynomials live in box-scaled coordinates
//! `x = center + half * z`.

use hocbf_core::certify::{AuditStats, VerificationReport, VerificationStatus};
use hocbf_core::poly::{Monomial, Poly, VarSpace};
use hocbf_core::sos::{BoxScaling, CertificateCheck, GramPoly, MembershipCertificate};
use hocbf_core::synth::{MultiSynthesisResult, StageRecord, SynthesisOptions, SynthesizedChain};
use hocbf_core::system::{ClassKSlot, ClassKTemplate, HocbfCandidate, SqrtClassK};
use hocbf_sdp::{SdpSettings, SolutionMetrics};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::parser::{parse_poly, ParseError};

pub const FORMAT: &str = "hocbf-certificate";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub format: String,
    pub format_version: u32,
    pub tool_version: String,
    pub scenario: String,
    pub variables: Vec<String>,
    pub n_states: usize,
    pub solver: SolverJson,
    pub synthesis: SynthesisJson,
    pub succeeded: bool,
    pub failure: Option<FailureJson>,
    pub sdp_count: usize,
    pub candidates: Vec<ChainJson>,
    pub gates: Vec<String>,
    pub joint: Option<JointJson>,
    pub scaling: ScalingJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverJson {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub tol_infeas: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisJson {
    pub template_terms: usize,
    pub deg_u: u32,
    pub stage_a_input: String,
    pub eta_formula: String,
    pub coeff_cap: f64,
    pub audit_samples: usize,
    pub certificate_audit_points: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureJson {
    pub candidate: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotJson {
    /// Template coefficients `c_k` of `sum_k c_k / k zeta^k`.
    pub beta: Vec<f64>,
    pub zeta_bar: f64,
    /// Runtime form `a sqrt(zeta)`.
    pub sqrt_a: f64,
    /// Certified linear under-approximation `eta zeta`.
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainJson {
    pub name: String,
    pub r: usize,
    pub slots: Vec<SlotJson>,
    pub alpha_r: Vec<f64>,
    pub rho: Vec<f64>,
    pub controller: Vec<String>,
    pub stages: Vec<StageJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub relative_gap: f64,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageJson {
    pub label: String,
    pub generators: Vec<String>,
    pub sdp_status: String,
    pub metrics: MetricsJson,
    pub seconds: f64,
    pub certificates: Vec<MembershipJson>,
    pub checks: Vec<CheckJson>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramJson {
    pub basis: Vec<Vec<u32>>,
    /// Row-major.
    pub entries: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipJson {
    pub label: String,
    pub lhs: String,
    pub generators: Vec<String>,
    pub s0: GramJson,
    pub multipliers: Vec<Option<GramJson>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckJson {
    pub identity_residual: f64,
    pub min_gram_eigenvalue: f64,
    /// `None` when no audit point was accepted.
    pub audit_min: Option<f64>,
    pub audit_accepted: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditJson {
    pub accepted: usize,
    pub attempts: usize,
    pub candidate_min: Vec<Option<f64>>,
    pub clif_min: Vec<Option<f64>>,
    pub input_min: Vec<Option<f64>>,
    pub normalized_min: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointJson {
    pub status: String,
    pub rho: Vec<f64>,
    pub rho_sum: f64,
    pub controller: Vec<String>,
    pub certificates: Vec<MembershipJson>,
    pub checks: Vec<CheckJson>,
    pub audit: Option<AuditJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingJson {
    pub center: Vec<f64>,
    pub half: Vec<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn status_name(s: &VerificationStatus) -> String {
    match s {
        VerificationStatus::Verified => "verified".into(),
        VerificationStatus::Infeasible => "infeasible".into(),
        VerificationStatus::NumericalFailure(st) => format!("numerical_failure({st:?})"),
        VerificationStatus::CertificateRejected(l) => format!("certificate_rejected({l})"),
        VerificationStatus::AuditViolation => "audit_violation".into(),
        VerificationStatus::EmptySafeSet => "empty_safe_set".into(),
        VerificationStatus::ThinRegion(n) => format!("thin_region({n})"),
    }
}

fn gram_json(g: &GramPoly) -> GramJson {
    let n = g.basis.len();
    GramJson {
        basis: g
            .basis
            .iter()
            .map(|m| m.exponents().iter().map(|e| *e as u32).collect())
            .collect(),
        entries: (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g.gram[(i, j)]).collect(),
    }
}

pub fn membership_json(c: &MembershipCertificate) -> MembershipJson {
    MembershipJson {
        label: c.label.clone(),
        lhs: c.lhs.to_string(),
        generators: c.generators.iter().map(|g| g.to_string()).collect(),
        s0: gram_json(&c.s0),
        multipliers: c.multipliers.iter().map(|m| m.as_ref().map(gram_json)).collect(),
    }
}

pub fn check_json(c: &CertificateCheck) -> CheckJson {
    CheckJson {
        identity_residual: c.identity_residual,
        min_gram_eigenvalue: c.min_gram_eigenvalue,
        audit_min: finite(c.audit_min),
        audit_accepted: c.audit_accepted,
        passed: c.passed(),
    }
}

pub fn audit_json(a: &AuditStats) -> AuditJson {
    let v = |xs: &[f64]| xs.iter().map(|x| finite(*x)).collect();
    AuditJson {
        accepted: a.accepted,
        attempts: a.attempts,
        candidate_min: v(&a.candidate_min),
        clif_min: v(&a.clif_min),
        input_min: v(&a.input_min),
        normalized_min: finite(a.normalized_min),
        passed: a.passes(),
    }
}

fn metrics_json(m: &SolutionMetrics) -> MetricsJson {
    MetricsJson {
        primal_residual: m.primal_residual,
        dual_residual: m.dual_residual,
        relative_gap: m.relative_gap,
        mu: m.mu,
    }
}

fn stage_json(s: &StageRecord) -> StageJson {
    StageJson {
        label: s.label.clone(),
        generators: s.generators.clone(),
        sdp_status: format!("{:?}", s.sdp_status),
        metrics: metrics_json(&s.sdp_metrics),
        seconds: s.seconds,
        certificates: s.certificates.iter().map(membership_json).collect(),
        checks: s.checks.iter().map(check_json).collect(),
        passed: s.passed(),
    }
}

fn chain_json(c: &SynthesizedChain, r: usize) -> ChainJson {
    ChainJson {
        name: c.name.clone(),
        r,
        slots: c
            .slots
            .iter()
            .map(|s| SlotJson {
                beta: s.beta.clone(),
                zeta_bar: s.zeta_bar,
                sqrt_a: s.sqrt.a,
                eta: s.eta,
            })
            .collect(),
        alpha_r: c.alpha_r.clone(),
        rho: c.rho.clone(),
        controller: c.controller.iter().map(|p| p.to_string()).collect(),
        stages: c.stages.iter().map(stage_json).collect(),
    }
}

pub fn joint_json(r: &VerificationReport) -> JointJson {
    JointJson {
        status: status_name(&r.status),
        rho: r.rho.clone(),
        rho_sum: r.rho_sum(),
        controller: r.controller.iter().map(|p| p.to_string()).collect(),
        certificates: r.certificates.iter().map(membership_json).collect(),
        checks: r.checks.iter().map(check_json).collect(),
        audit: r.audit.as_ref().map(audit_json),
    }
}

pub fn solver_json(s: &SdpSettings) -> SolverJson {
    SolverJson {
        tol_feas: s.tol_feas,
        tol_gap: s.tol_gap,
        tol_infeas: s.tol_infeas,
        max_iter: s.max_iter,
        step_fraction: s.step_fraction,
    }
}

impl CertificateFile {
    pub fn from_result(
        scenario: &str,
        space: &VarSpace,
        candidates: &[HocbfCandidate],
        scaling: &BoxScaling,
        opts: &SynthesisOptions,
        result: &MultiSynthesisResult,
    ) -> CertificateFile {
        CertificateFile {
            format: FORMAT.into(),
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            scenario: scenario.into(),
            variables: space.names().to_vec(),
            n_states: space.n_states(),
            solver: solver_json(&opts.sdp),
            synthesis: SynthesisJson {
                template_terms: opts.template_terms,
                deg_u: opts.deg_u,
                stage_a_input: format!("{:?}", opts.stage_a_input),
                eta_formula: format!("{:?}", opts.eta_formula),
                coeff_cap: opts.coeff_cap,
                audit_samples: opts.verify.audit_samples,
                certificate_audit_points: opts.verify.certificate_audit_points,
                seed: opts.verify.seed,
            },
            succeeded: result.succeeded(),
            failure: result.failure.as_ref().map(|f| FailureJson {
                candidate: f.candidate.clone(),
                stage: f.stage.clone(),
                reason: f.reason.clone(),
            }),
            sdp_count: result.sdp_count,
            candidates: result
                .chains
                .iter()
                .map(|c| {
                    let r = candidates.iter().find(|k| k.name == c.name).map_or(0, |k| k.r);
                    chain_json(c, r)
                })
                .collect(),
            gates: result.gates.iter().map(status_name).collect(),
            joint: result.joint.as_ref().map(joint_json),
            scaling: ScalingJson {
                center: scaling.center.clone(),
                half: scaling.half.clone(),
            },
        }
    }

    /// Number of class-K functions stored across all complete chains.
    pub fn class_k_count(&self) -> usize {
        self.candidates
            .iter()
            .filter(|c| c.slots.len() + 1 == c.r && !c.alpha_r.is_empty())
            .map(|c| c.r)
            .sum()
    }

    pub fn space(&self) -> Result<VarSpace, String> {
        let (s, u) = self.variables.split_at(self.n_states.min(self.variables.len()));
        VarSpace::new(s, u).map_err(|e| e.to_string())
    }

    pub fn scaling(&self) -> BoxScaling {
        BoxScaling {
            center: self.scaling.center.clone(),
            half: self.scaling.half.clone(),
        }
    }

    /// Candidates with square-root/linear pairs and polynomial `alpha_r`, for
    /// every chain that was synthesized completely.
    pub fn runtime_candidates(&self, base: &[HocbfCandidate]) -> Result<Vec<HocbfCandidate>, String> {
        base.iter()
            .map(|b| {
                let c = self
                    .candidates
                    .iter()
                    .find(|c| c.name == b.name)
                    .ok_or_else(|| format!("certificate has no chain for '{}'", b.name))?;
                if c.slots.len() + 1 != b.r || c.alpha_r.is_empty() {
                    return Err(format!("chain '{}' is incomplete", b.name));
                }
                let mut slots: Vec<ClassKSlot> = c
                    .slots
                    .iter()
                    .map(|s| ClassKSlot::SqrtPair {
                        sqrt: SqrtClassK { a: s.sqrt_a },
                        poly: ClassKTemplate::linear(s.eta),
                    })
                    .collect();
                slots.push(ClassKSlot::Poly(ClassKTemplate {
                    coeffs: c.alpha_r.clone(),
                }));
                Ok(b.clone().with_slots(slots))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<CertificateFile, String> {
        let c: CertificateFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if c.format != FORMAT {
            return Err(format!("not a certificate file (format `{}`)", c.format));
        }
        if c.format_version != FORMAT_VERSION {
            return Err(format!("unsupported certificate version {}", c.format_version));
        }
        Ok(c)
    }
}

fn gram_from_json(g: &GramJson, nvars: usize) -> Result<GramPoly, String> {
    let n = g.basis.len();
    if g.entries.len() != n * n {
        return Err(format!("Gram matrix has {} entries for a basis of {n}", g.entries.len()));
    }
    let basis = g
        .basis
        .iter()
        .map(|e| {
            if e.len() != nvars {
                return Err("basis monomial has the wrong length".to_string());
            }
            Monomial::from_exponents(e).ok_or_else(|| "basis exponent out of range".to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GramPoly {
        basis,
        gram: DMatrix::from_row_slice(n, n, &g.entries),
    })
}

pub fn membership_from_json(m: &MembershipJson, space: &VarSpace) -> Result<MembershipCertificate, String> {
    let p = |t: &str| parse_poly(t, space).map_err(|e: ParseError| format!("{}: {e}", m.label));
    Ok(MembershipCertificate {
        label: m.label.clone(),
        lhs: p(&m.lhs)?,
        generators: m.generators.iter().map(|g| p(g)).collect::<Result<Vec<_>, _>>()?,
        s0: gram_from_json(&m.s0, space.len())?,
        multipliers: m
            .multipliers
            .iter()
            .map(|g| g.as_ref().map(|g| gram_from_json(g, space.len())).transpose())
            .collect::<Result<Vec<_>, _>>()?,
    })
}

/// Rebuilds polynomials such as the stored controller.
pub fn polys_from_json(texts: &[String], space: &VarSpace) -> Result<Vec<Poly>, String> {
    texts
        .iter()
        .map(|t| parse_poly(t, space).map_err(|e| e.to_string()))
        .collect()
}
