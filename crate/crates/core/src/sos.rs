//! Quadratic-module memberships with SOS multipliers, compiled to a standard-form SDP
//! by coefficient matching.
//!
//! All memberships are stated in box-scaled coordinates `x = c + h * z` with
//! `z` in `[-1, 1]`, and every generator is divided by its largest coefficient.
//! Decision polynomials are parametrized over monomials of `z` as well, so their
//! coefficients stay comparable across variables.

use std::collections::{BTreeMap, HashMap};

use hocbf_sdp::{solve, SdpProblem, SdpProblemBuilder, SdpSettings, SdpSolution, SdpStatus, VarRef};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{monomial_basis, AffineCoeffPoly, AffineForm, DecisionId, Monomial, Poly, PolyError, VarSpace};

/// Identity residual accepted for a certificate, in normalized units.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Smallest Gram eigenvalue accepted for a certificate.
pub const GRAM_EIG_TOL: f64 = -1e-7;
/// Smallest normalized sample value accepted by the audit.
pub const AUDIT_TOL: f64 = -1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("multiplier degree {0} is odd")]
    OddDegree(u32),
    #[error("constraint '{label}': monomial {monomial} cannot be matched by any multiplier")]
    DegreeShortfall { label: String, monomial: String },
    #[error("constraint '{0}' depends on input symbols")]
    InputDependent(String),
    #[error("bounding box has {got} entries, expected {expected}")]
    BoxLength { expected: usize, got: usize },
    #[error("degenerate box interval for variable {0}")]
    DegenerateBox(usize),
    #[error("program has no constraints")]
    Empty,
    #[error("decision {0} is fixed inconsistently")]
    InconsistentRow(usize),
    #[error("sdp solve returned {0:?}")]
    NotFeasible(SdpStatus),
    #[error(transparent)]
    Sdp(#[from] hocbf_sdp::ProblemError),
    #[error("explicit degree list has {got} entries for {expected} generators")]
    DegreeCount { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecisionKind {
    Free,
    Nonneg,
}

#[derive(Clone, Debug, PartialEq)]
struct Decision {
    kind: DecisionKind,
    fixed: Option<f64>,
}

/// SOS polynomial `z(x)^T Q z(x)` with `Q` stored as PSD block `gram_block_id`.
#[derive(Clone, Debug, PartialEq)]
pub struct SosMultiplier {
    pub basis: Vec<Monomial>,
    pub gram_block_id: usize,
}

impl SosMultiplier {
    pub fn degree(&self) -> u32 {
        2 * self.basis.iter().map(|m| m.degree()).max().unwrap_or(0)
    }
}

/// How multiplier degrees are chosen for one membership.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum MultiplierDegrees {
    /// `s_0` of even degree `D >= deg(lhs)`; each `s_i` of the largest even
    /// degree with `deg(s_i) + deg(g_i) <= D`. Generators with `deg(g_i) > D`
    /// get no multiplier.
    #[default]
    Auto,
    /// As `Auto` with `D` raised by the given amount (rounded up to even).
    Raised(u32),
    Explicit { s0: u32, generators: Vec<Option<u32>> },
}

/// One coefficient-matching equation: `lhs - sum coef * Q_ab = 0` at a monomial.
#[derive(Clone, Debug, PartialEq)]
struct MatchRow {
    monomial: Monomial,
    lhs: AffineForm,
    grams: Vec<(usize, usize, usize, f64)>,
}

/// `lhs - s_0 - sum_i s_i g_i = 0` coefficientwise, in scaled coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticModuleConstraint {
    pub label: String,
    /// Left-hand side in scaled coordinates.
    pub lhs: AffineCoeffPoly,
    /// Generators in scaled coordinates, normalized to unit max coefficient.
    pub generators: Vec<Poly>,
    pub s0: SosMultiplier,
    /// One entry per generator; `None` when its degree exceeds the constraint degree.
    pub multipliers: Vec<Option<SosMultiplier>>,
    rows: Vec<MatchRow>,
}

/// Affine change of coordinates `x_i = center_i + half_i * z_i` on state variables.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxScaling {
    pub center: Vec<f64>,
    pub half: Vec<f64>,
}

impl BoxScaling {
    pub fn from_box(space: &VarSpace, bbox: &[(f64, f64)]) -> Result<BoxScaling, SosError> {
        if bbox.len() != space.n_states() {
            return Err(SosError::BoxLength {
                expected: space.n_states(),
                got: bbox.len(),
            });
        }
        let mut center = Vec::with_capacity(bbox.len());
        let mut half = Vec::with_capacity(bbox.len());
        for (i, &(lo, hi)) in bbox.iter().enumerate() {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(SosError::DegenerateBox(i));
            }
            center.push(0.5 * (lo + hi));
            half.push(0.5 * (hi - lo));
        }
        Ok(BoxScaling { center, half })
    }

    /// Images of each variable for `p(x) -> p(c + h z)`.
    pub fn to_scaled(&self, space: &VarSpace) -> Vec<Poly> {
        (0..space.len())
            .map(|i| match (self.center.get(i), self.half.get(i)) {
                (Some(&c), Some(&h)) => &Poly::constant(space, c) + &Poly::var(space, i).scale(h),
                _ => Poly::var(space, i),
            })
            .collect()
    }

    /// Images of each variable for `q(z) -> q((x - c) / h)`.
    pub fn to_original(&self, space: &VarSpace) -> Vec<Poly> {
        (0..space.len())
            .map(|i| match (self.center.get(i), self.half.get(i)) {
                (Some(&c), Some(&h)) => (&Poly::var(space, i) - &Poly::constant(space, c)).scale(1.0 / h),
                _ => Poly::var(space, i),
            })
            .collect()
    }

    pub fn point_to_original(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, zi)| match (self.center.get(i), self.half.get(i)) {
                (Some(c), Some(h)) => c + h * zi,
                _ => *zi,
            })
            .collect()
    }
}

/// Registry of decisions, Gram blocks and memberships for one SDP.
#[derive(Clone, Debug)]
pub struct SosProgram {
    space: VarSpace,
    scaling: BoxScaling,
    to_scaled: Vec<Poly>,
    decisions: Vec<Decision>,
    blocks: Vec<usize>,
    constraints: Vec<QuadraticModuleConstraint>,
    linear: Vec<AffineForm>,
    objective: AffineForm,
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

fn even_floor(d: u32) -> u32 {
    d - d % 2
}

impl SosProgram {
    /// `bbox` bounds the state variables and defines the scaled coordinates.
    pub fn new(space: &VarSpace, bbox: &[(f64, f64)]) -> Result<SosProgram, SosError> {
        let scaling = BoxScaling::from_box(space, bbox)?;
        let to_scaled = scaling.to_scaled(space);
        Ok(SosProgram {
            space: space.clone(),
            scaling,
            to_scaled,
            decisions: Vec::new(),
            blocks: Vec::new(),
            constraints: Vec::new(),
            linear: Vec::new(),
            objective: AffineForm::default(),
        })
    }

    pub fn space(&self) -> &VarSpace {
        &self.space
    }

    pub fn scaling(&self) -> &BoxScaling {
        &self.scaling
    }

    pub fn constraints(&self) -> &[QuadraticModuleConstraint] {
        &self.constraints
    }

    pub fn num_decisions(&self) -> usize {
        self.decisions.len()
    }

    pub fn new_decision(&mut self, kind: DecisionKind) -> DecisionId {
        self.decisions.push(Decision { kind, fixed: None });
        self.decisions.len() - 1
    }

    /// Removes a decision from the SDP by pinning its value.
    pub fn fix(&mut self, id: DecisionId, value: f64) {
        self.decisions[id].fixed = Some(value);
    }

    /// Monomials of the scaled coordinates up to `degree`, written in original coordinates.
    pub fn scaled_basis(&self, vars: &[usize], degree: u32) -> Result<Vec<Poly>, SosError> {
        let back = self.scaling.to_original(&self.space);
        monomial_basis(&self.space, vars, degree)
            .into_iter()
            .map(|m| Ok(Poly::from_terms(&self.space, [(m, 1.0)]).substitute(&back)?))
            .collect()
    }

    /// Polynomial with one fresh free coefficient per element of `basis`.
    pub fn new_poly(&mut self, basis: &[Poly]) -> Result<AffineCoeffPoly, SosError> {
        let ids: Vec<DecisionId> = basis.iter().map(|_| self.new_decision(DecisionKind::Free)).collect();
        Ok(AffineCoeffPoly::linear_combination(basis, &ids)?)
    }

    pub fn new_sos_multiplier(&mut self, vars: &[usize], degree: u32) -> Result<SosMultiplier, SosError> {
        if degree % 2 == 1 {
            return Err(SosError::OddDegree(degree));
        }
        let basis = monomial_basis(&self.space, vars, degree / 2);
        self.blocks.push(basis.len());
        Ok(SosMultiplier {
            basis,
            gram_block_id: self.blocks.len() - 1,
        })
    }

    /// `form = 0`.
    pub fn add_linear_equality(&mut self, form: AffineForm) {
        self.linear.push(form);
    }

    /// `decision <= cap` through a nonnegative slack.
    pub fn add_upper_bound(&mut self, id: DecisionId, cap: f64) {
        let slack = self.new_decision(DecisionKind::Nonneg);
        let mut form = AffineForm::decision(id, 1.0);
        form.add_assign(&AffineForm::decision(slack, 1.0), 1.0);
        form.constant = -cap;
        self.linear.push(form);
    }

    /// Minimized objective.
    pub fn set_objective(&mut self, form: AffineForm) {
        self.objective = form;
    }

    /// Asserts `lhs` lies in the quadratic module of `generators` (original coordinates).
    pub fn assert_membership(
        &mut self,
        label: impl Into<String>,
        lhs: &AffineCoeffPoly,
        generators: &[Poly],
        degrees: &MultiplierDegrees,
    ) -> Result<usize, SosError> {
        let label = label.into();
        let n_states = self.space.n_states();
        let lhs_s = lhs.substitute(&self.to_scaled)?;
        let mut gens = Vec::with_capacity(generators.len());
        for g in generators {
            let gs = g.substitute(&self.to_scaled)?;
            let scale = gs.max_abs_coeff();
            gens.push(if scale > 0.0 { gs.scale(1.0 / scale) } else { gs });
        }
        let mut used = vec![false; self.space.len()];
        for v in lhs_s.variables().into_iter().chain(gens.iter().flat_map(|g| g.variables())) {
            used[v] = true;
        }
        if used.iter().skip(n_states).any(|u| *u) {
            return Err(SosError::InputDependent(label));
        }
        let vars: Vec<usize> = (0..n_states).filter(|&v| used[v]).collect();

        let (s0_deg, gen_degs) = match degrees {
            MultiplierDegrees::Explicit { s0, generators } => {
                if generators.len() != gens.len() {
                    return Err(SosError::DegreeCount {
                        expected: gens.len(),
                        got: generators.len(),
                    });
                }
                (*s0, generators.clone())
            }
            auto => {
                let extra = match auto {
                    MultiplierDegrees::Raised(k) => *k,
                    _ => 0,
                };
                let d = even_ceil(even_ceil(lhs_s.degree()) + extra);
                let gd = gens
                    .iter()
                    .map(|g| (g.degree() <= d).then(|| even_floor(d - g.degree())))
                    .collect();
                (d, gd)
            }
        };

        let s0 = self.new_sos_multiplier(&vars, s0_deg)?;
        let mut multipliers = Vec::with_capacity(gens.len());
        for d in &gen_degs {
            multipliers.push(match d {
                Some(d) => Some(self.new_sos_multiplier(&vars, *d)?),
                None => None,
            });
        }

        // coefficient matching rows keyed by monomial
        let mut index: HashMap<Monomial, usize> = HashMap::new();
        let mut rows: Vec<MatchRow> = Vec::new();
        let mut row_for = |m: Monomial, rows: &mut Vec<MatchRow>| -> usize {
            *index.entry(m.clone()).or_insert_with(|| {
                rows.push(MatchRow {
                    monomial: m,
                    lhs: AffineForm::default(),
                    grams: Vec::new(),
                });
                rows.len() - 1
            })
        };
        for (m, f) in lhs_s.terms() {
            let r = row_for(m.clone(), &mut rows);
            rows[r].lhs.add_assign(f, 1.0);
        }
        let one = Poly::constant(&self.space, 1.0);
        let pairs = std::iter::once((&s0, &one)).chain(
            multipliers
                .iter()
                .zip(&gens)
                .filter_map(|(m, g)| m.as_ref().map(|m| (m, g))),
        );
        for (mult, g) in pairs {
            let z = &mult.basis;
            for a in 0..z.len() {
                for b in a..z.len() {
                    let zz = z[a].checked_mul(&z[b]).ok_or(PolyError::DegreeOverflow)?;
                    let sym = if a == b { 1.0 } else { 2.0 };
                    for (gm, gc) in g.terms() {
                        let m = zz.checked_mul(gm).ok_or(PolyError::DegreeOverflow)?;
                        let r = row_for(m, &mut rows);
                        rows[r].grams.push((mult.gram_block_id, a, b, sym * gc));
                    }
                }
            }
        }
        for row in &rows {
            if row.grams.is_empty() && row.lhs.coeffs.values().all(|c| *c == 0.0) && row.lhs.constant != 0.0 {
                return Err(SosError::DegreeShortfall {
                    label,
                    monomial: format!("{}", Poly::from_terms(&self.space, [(row.monomial.clone(), 1.0)])),
                });
            }
        }
        self.constraints.push(QuadraticModuleConstraint {
            label,
            lhs: lhs_s,
            generators: gens,
            s0,
            multipliers,
            rows,
        });
        Ok(self.constraints.len() - 1)
    }

    /// Componentwise membership of a vector left-hand side.
    pub fn assert_vector_membership(
        &mut self,
        label: &str,
        lhs: &[AffineCoeffPoly],
        generators: &[Poly],
        degrees: &MultiplierDegrees,
    ) -> Result<Vec<usize>, SosError> {
        lhs.iter()
            .enumerate()
            .map(|(k, l)| self.assert_membership(format!("{label}[{k}]"), l, generators, degrees))
            .collect()
    }

    pub fn compile(&self) -> Result<CompiledSdp, SosError> {
        if self.constraints.is_empty() {
            return Err(SosError::Empty);
        }
        // decisions referenced anywhere get a column
        let mut referenced = vec![false; self.decisions.len()];
        let forms = self
            .constraints
            .iter()
            .flat_map(|c| c.rows.iter().map(|r| &r.lhs))
            .chain(self.linear.iter());
        for f in forms {
            for (id, c) in &f.coeffs {
                if *c != 0.0 {
                    referenced[*id] = true;
                }
            }
        }
        let mut builder = SdpProblemBuilder::new();
        for &n in &self.blocks {
            builder.add_psd_block(n);
        }
        let mut columns: Vec<Option<VarRef>> = Vec::with_capacity(self.decisions.len());
        for (d, r) in self.decisions.iter().zip(&referenced) {
            columns.push(match (d.fixed, r) {
                (None, true) => Some(match d.kind {
                    DecisionKind::Free => builder.add_free(),
                    DecisionKind::Nonneg => builder.add_nonneg(),
                }),
                _ => None,
            });
        }
        let decision_terms = |form: &AffineForm, terms: &mut Vec<(VarRef, f64)>| -> f64 {
            let mut constant = form.constant;
            for (id, c) in &form.coeffs {
                if *c == 0.0 {
                    continue;
                }
                match (columns[*id], self.decisions[*id].fixed) {
                    (Some(col), _) => terms.push((col, *c)),
                    (None, Some(v)) => constant += c * v,
                    (None, None) => {}
                }
            }
            constant
        };
        let add_row = |builder: &mut SdpProblemBuilder, terms: Vec<(VarRef, f64)>, rhs: f64, what: usize| {
            let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.1.abs()));
            if scale == 0.0 {
                if rhs.abs() > 1e-12 {
                    return Err(SosError::InconsistentRow(what));
                }
                return Ok(());
            }
            builder.add_row(terms.into_iter().map(|(v, c)| (v, c / scale)).collect(), rhs / scale);
            Ok(())
        };
        for (ci, con) in self.constraints.iter().enumerate() {
            for row in &con.rows {
                let mut terms = Vec::with_capacity(row.grams.len() + row.lhs.coeffs.len());
                let constant = decision_terms(&row.lhs, &mut terms);
                for &(block, a, b, c) in &row.grams {
                    terms.push((VarRef::Psd { block, a, b }, -c));
                }
                add_row(&mut builder, terms, -constant, ci)?;
            }
        }
        for form in &self.linear {
            let mut terms = Vec::new();
            let constant = decision_terms(form, &mut terms);
            add_row(&mut builder, terms, -constant, usize::MAX)?;
        }
        let mut obj = Vec::new();
        let objective_offset = decision_terms(&self.objective, &mut obj);
        builder.set_objective(obj);
        let problem = builder.build()?;
        Ok(CompiledSdp {
            problem,
            columns,
            objective_offset,
        })
    }

    /// Compiles, solves and extracts.
    pub fn solve(&self, settings: &SdpSettings) -> Result<SosSolution, SosError> {
        let compiled = self.compile()?;
        let sdp = solve(&compiled.problem, settings)?;
        self.extract(&compiled, sdp)
    }

    pub fn extract(&self, compiled: &CompiledSdp, sdp: SdpSolution) -> Result<SosSolution, SosError> {
        if !matches!(sdp.status, SdpStatus::Optimal | SdpStatus::Feasible) {
            return Err(SosError::NotFeasible(sdp.status));
        }
        let p = &compiled.problem;
        let free = sdp.free_values(p);
        let nonneg = sdp.nonneg_values(p);
        let decisions = self
            .decisions
            .iter()
            .zip(&compiled.columns)
            .map(|(d, col)| match (col, d.fixed) {
                (Some(VarRef::Free(k)), _) => free[*k],
                (Some(VarRef::Nonneg(k)), _) => nonneg[*k],
                (_, Some(v)) => v,
                _ => 0.0,
            })
            .collect();
        let grams = (0..p.psd_blocks.len()).map(|k| sdp.block_matrix(p, k)).collect();
        Ok(SosSolution {
            objective: sdp.primal_objective + compiled.objective_offset,
            decisions,
            grams,
            sdp,
        })
    }

    /// Largest coefficient-matching defect of constraint `index` at the given values,
    /// before row normalization.
    pub fn match_residual(&self, index: usize, decisions: &[f64], grams: &[DMatrix<f64>]) -> f64 {
        self.constraints[index]
            .rows
            .iter()
            .map(|row| {
                let g: f64 = row.grams.iter().map(|&(k, a, b, c)| c * grams[k][(a, b)]).sum();
                (row.lhs.eval(decisions) - g).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Self-contained certificate for constraint `index`.
    pub fn certificate(&self, index: usize, sol: &SosSolution) -> MembershipCertificate {
        let con = &self.constraints[index];
        let gram = |m: &SosMultiplier| GramPoly {
            basis: m.basis.clone(),
            gram: sol.grams[m.gram_block_id].clone(),
        };
        MembershipCertificate {
            label: con.label.clone(),
            lhs: con.lhs.collapse(&sol.decisions),
            generators: con.generators.clone(),
            s0: gram(&con.s0),
            multipliers: con.multipliers.iter().map(|m| m.as_ref().map(gram)).collect(),
        }
    }
}

/// SDP plus the maps back to decisions.
#[derive(Clone, Debug)]
pub struct CompiledSdp {
    pub problem: SdpProblem,
    /// Column of each decision; `None` when fixed or unreferenced.
    pub columns: Vec<Option<VarRef>>,
    pub objective_offset: f64,
}

#[derive(Clone, Debug)]
pub struct SosSolution {
    pub sdp: SdpSolution,
    /// Value of every decision, fixed ones included.
    pub decisions: Vec<f64>,
    /// Gram matrix of every multiplier block.
    pub grams: Vec<DMatrix<f64>>,
    pub objective: f64,
}

impl SosSolution {
    pub fn poly(&self, p: &AffineCoeffPoly) -> Poly {
        p.collapse(&self.decisions)
    }
}

/// `z^T Q z`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramPoly {
    pub basis: Vec<Monomial>,
    pub gram: DMatrix<f64>,
}

impl GramPoly {
    pub fn to_poly(&self, space: &VarSpace) -> Poly {
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        let z = &self.basis;
        for a in 0..z.len() {
            for b in 0..z.len() {
                let q = self.gram[(a, b)];
                if q != 0.0 {
                    let m = z[a].checked_mul(&z[b]).expect("basis degree within bounds");
                    *terms.entry(m).or_insert(0.0) += q;
                }
            }
        }
        Poly::from_terms(space, terms)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.gram.nrows() == 0 {
            return 0.0;
        }
        self.gram
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(*v))
    }
}

/// Membership in scaled coordinates with explicit multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipCertificate {
    pub label: String,
    pub lhs: Poly,
    pub generators: Vec<Poly>,
    pub s0: GramPoly,
    pub multipliers: Vec<Option<GramPoly>>,
}

/// Outcome of [`validate_certificate`].
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateCheck {
    /// Max identity coefficient divided by `max(1, max |lhs coefficient|)`.
    pub identity_residual: f64,
    pub min_gram_eigenvalue: f64,
    /// Minimum of `lhs / max(1, max |lhs coefficient|)` over accepted samples.
    pub audit_min: f64,
    pub audit_accepted: usize,
}

impl CertificateCheck {
    pub fn passed(&self) -> bool {
        self.identity_residual <= RESIDUAL_TOL
            && self.min_gram_eigenvalue >= GRAM_EIG_TOL
            && (self.audit_accepted == 0 || self.audit_min >= AUDIT_TOL)
    }
}

/// Recomputes the identity, Gram spectra and a sample audit on `[-1, 1]^n`.
pub fn validate_certificate(cert: &MembershipCertificate, audit_points: usize, seed: u64) -> CertificateCheck {
    let space = cert.lhs.space().clone();
    let mut rhs = cert.s0.to_poly(&space);
    let mut min_eig = cert.s0.min_eigenvalue();
    for (m, g) in cert.multipliers.iter().zip(&cert.generators) {
        if let Some(m) = m {
            rhs = &rhs + &(&m.to_poly(&space) * g);
            min_eig = min_eig.min(m.min_eigenvalue());
        }
    }
    let scale = cert.lhs.max_abs_coeff().max(1.0);
    let mut residual = 0.0f64;
    for (m, c) in cert.lhs.terms() {
        residual = residual.max((c - rhs.coeff(m)).abs());
    }
    for (m, c) in rhs.terms() {
        if cert.lhs.coeff(m) == 0.0 {
            residual = residual.max(c.abs());
        }
    }
    let (audit_min, audit_accepted) = audit(&cert.lhs, &cert.generators, scale, audit_points, seed);
    CertificateCheck {
        identity_residual: residual / scale,
        min_gram_eigenvalue: min_eig,
        audit_min,
        audit_accepted,
    }
}

fn audit(lhs: &Poly, generators: &[Poly], scale: f64, points: usize, seed: u64) -> (f64, usize) {
    let space = lhs.space();
    let n = space.n_states();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; space.len()];
    let mut accepted = 0;
    let mut min = f64::INFINITY;
    for _ in 0..points.saturating_mul(100) {
        if accepted == points {
            break;
        }
        for zi in z.iter_mut().take(n) {
            *zi = rng.gen_range(-1.0..=1.0);
        }
        if generators.iter().all(|g| g.eval_unchecked(&z) >= 0.0) {
            accepted += 1;
            min = min.min(lhs.eval_unchecked(&z) / scale);
        }
    }
    (min, accepted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> VarSpace {
        VarSpace::new(&["x"], &[]).unwrap()
    }

    #[test]
    fn odd_degree_rejected() {
        let mut p = SosProgram::new(&line(), &[(-1.0, 1.0)]).unwrap();
        assert_eq!(p.new_sos_multiplier(&[0], 3), Err(SosError::OddDegree(3)));
        assert_eq!(p.new_sos_multiplier(&[0], 2).unwrap().basis.len(), 2);
    }

    #[test]
    fn shortfall_detected() {
        let s = line();
        let mut p = SosProgram::new(&s, &[(-1.0, 1.0)]).unwrap();
        let x3 = AffineCoeffPoly::from_poly(&Poly::var(&s, 0).try_pow(3).unwrap());
        let degrees = MultiplierDegrees::Explicit {
            s0: 2,
            generators: vec![],
        };
        assert!(matches!(
            p.assert_membership("c", &x3, &[], &degrees),
            Err(SosError::DegreeShortfall { .. })
        ));
    }

    #[test]
    fn hand_certificate_validates() {
        let s = line();
        let x = Poly::var(&s, 0);
        let cert = MembershipCertificate {
            label: "x".into(),
            lhs: x.clone(),
            generators: vec![x.clone()],
            s0: GramPoly {
                basis: vec![Monomial::one(1)],
                gram: DMatrix::zeros(1, 1),
            },
            multipliers: vec![Some(GramPoly {
                basis: vec![Monomial::one(1)],
                gram: DMatrix::from_element(1, 1, 1.0),
            })],
        };
        let check = validate_certificate(&cert, 200, 1);
        assert_eq!(check.identity_residual, 0.0);
        assert_eq!(check.min_gram_eigenvalue, 0.0);
        assert!(check.passed());
        let mut bad = cert.clone();
        bad.s0.gram[(0, 0)] = -1e-3;
        bad.multipliers[0].as_mut().unwrap().gram[(0, 0)] = 1.0;
        let check = validate_certificate(&bad, 200, 1);
        assert!((check.min_gram_eigenvalue + 1e-3).abs() < 1e-15);
        assert!(!check.passed());
    }
}
