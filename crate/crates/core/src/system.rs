//! Control-affine systems, semialgebraic sets, class-K objects and HOCBF chains.

use thiserror::Error;

use crate::poly::{Poly, PolyError, PolyMat, PolyVec, VarSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("drift or input gain depends on input symbols")]
    InputDependentDynamics,
    #[error("class-K slot {0} must hold a polynomial function")]
    NonPolynomialSlot(usize),
    #[error("candidate has {slots} class-K slots but relative degree {r}")]
    SlotCount { slots: usize, r: usize },
    #[error("relative degree must be at least 1")]
    ZeroRelativeDegree,
    #[error("no grid point satisfies the region's generators")]
    EmptyRegion,
    #[error("region has no bounding box")]
    NoBoundingBox,
    #[error("zeta_bar must be positive, got {0}")]
    NonPositiveZetaBar(f64),
    #[error("under-approximation check failed at zeta = {0}")]
    UnderApproximation(f64),
    #[error("negative class-K coefficient {0}")]
    NegativeCoefficient(f64),
}

/// `x' = f(x) + g(x) u` with polynomial `f` (n) and `g` (n x m).
#[derive(Clone, Debug, PartialEq)]
pub struct ControlAffineSystem {
    space: VarSpace,
    f: PolyVec,
    g: PolyMat,
}

impl ControlAffineSystem {
    pub fn new(f: PolyVec, g: PolyMat) -> Result<ControlAffineSystem, SystemError> {
        let space = f
            .entries()
            .first()
            .map(|p| p.space().clone())
            .ok_or_else(|| SystemError::Shape("empty drift".into()))?;
        let (n, m) = (space.n_states(), space.n_inputs());
        if f.len() != n || g.rows() != n || g.cols() != m {
            return Err(SystemError::Shape(format!(
                "expected f of length {n} and g of shape {n}x{m}, got {} and {}x{}",
                f.len(),
                g.rows(),
                g.cols()
            )));
        }
        let all = f.entries().iter().chain((0..n * m).map(|k| g.get(k / m, k % m)));
        for p in all {
            if *p.space() != space {
                return Err(PolyError::SpaceMismatch.into());
            }
            if p.depends_on_inputs() {
                return Err(SystemError::InputDependentDynamics);
            }
        }
        Ok(ControlAffineSystem { space, f, g })
    }

    pub fn space(&self) -> &VarSpace {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.space.n_states()
    }

    pub fn m(&self) -> usize {
        self.space.n_inputs()
    }

    pub fn f(&self) -> &PolyVec {
        &self.f
    }

    pub fn g(&self) -> &PolyMat {
        &self.g
    }

    pub fn lie_f(&self, p: &Poly) -> Result<Poly, PolyError> {
        p.lie(&self.f)
    }

    pub fn lie_g(&self, p: &Poly) -> Result<Vec<Poly>, PolyError> {
        p.lie_mat(&self.g)
    }

    /// `f(x) + g(x) u` evaluated numerically.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let pt = full_point(&self.space, x);
        (0..self.n())
            .map(|i| {
                let mut v = self.f.get(i).eval_unchecked(&pt);
                for (k, uk) in u.iter().enumerate() {
                    let gik = self.g.get(i, k);
                    if !gik.is_zero() {
                        v += gik.eval_unchecked(&pt) * uk;
                    }
                }
                v
            })
            .collect()
    }
}

/// Pads a state with zeros for the input symbols.
pub(crate) fn full_point(space: &VarSpace, x: &[f64]) -> Vec<f64> {
    let mut pt = x.to_vec();
    pt.resize(space.len(), 0.0);
    pt
}

/// `{ z | g_i(z) >= 0 }` with an optional bounding box per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct SemialgebraicSet {
    pub generators: Vec<Poly>,
    pub bbox: Option<Vec<(f64, f64)>>,
}

impl SemialgebraicSet {
    pub fn new(generators: Vec<Poly>, bbox: Option<Vec<(f64, f64)>>) -> SemialgebraicSet {
        SemialgebraicSet { generators, bbox }
    }

    /// Box `lo_i <= z_i <= hi_i` as the quadratic generators `(z_i - lo_i)(hi_i - z_i)`
    /// over the first `bounds.len()` variables of `space`.
    pub fn from_box(space: &VarSpace, bounds: &[(f64, f64)]) -> SemialgebraicSet {
        let generators = bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                let z = Poly::var(space, i);
                &(&z - &Poly::constant(space, lo)) * &(&Poly::constant(space, hi) - &z)
            })
            .collect();
        SemialgebraicSet {
            generators,
            bbox: Some(bounds.to_vec()),
        }
    }

    /// Input box `lo_k <= u_k <= hi_k` as affine generators in the input symbols.
    pub fn input_box(space: &VarSpace, bounds: &[(f64, f64)]) -> SemialgebraicSet {
        let n = space.n_states();
        let mut generators = Vec::with_capacity(2 * bounds.len());
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            let u = Poly::var(space, n + k);
            generators.push(&u - &Poly::constant(space, lo));
            generators.push(&Poly::constant(space, hi) - &u);
        }
        SemialgebraicSet {
            generators,
            bbox: Some(bounds.to_vec()),
        }
    }

    /// Every generator is `>= -tol` at the point (full-space coordinates).
    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.generators.iter().all(|g| g.eval_unchecked(point) >= -tol)
    }

    pub fn with_generators(&self, extra: &[Poly]) -> SemialgebraicSet {
        let mut s = self.clone();
        s.generators.extend_from_slice(extra);
        s
    }
}

/// `sum_k c_k / k * zeta^k` for `k = 1..=2m`, with derivative `sum_k c_k zeta^(k-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassKTemplate {
    pub coeffs: Vec<f64>,
}

impl ClassKTemplate {
    pub fn new(coeffs: Vec<f64>) -> Result<ClassKTemplate, SystemError> {
        if let Some(&c) = coeffs.iter().find(|c| !(**c >= 0.0)) {
            return Err(SystemError::NegativeCoefficient(c));
        }
        Ok(ClassKTemplate { coeffs })
    }

    pub fn linear(c: f64) -> ClassKTemplate {
        ClassKTemplate { coeffs: vec![c] }
    }

    /// Number of terms, `2m`.
    pub fn terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn value(&self, zeta: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c / (i + 1) as f64 * zeta.powi(i as i32 + 1))
            .sum()
    }

    pub fn derivative(&self, zeta: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * zeta.powi(i as i32))
            .sum()
    }

    /// `(power, coefficient)` pairs of the template itself.
    pub fn power_terms(&self) -> Vec<(u32, f64)> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u32 + 1, c / (i + 1) as f64))
            .collect()
    }

    /// `(power, coefficient)` pairs of the derivative.
    pub fn derivative_terms(&self) -> Vec<(u32, f64)> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u32, *c))
            .collect()
    }

    pub fn compose(&self, inner: &Poly) -> Result<Poly, PolyError> {
        Poly::compose_univariate(&self.power_terms(), inner)
    }

    pub fn compose_derivative(&self, inner: &Poly) -> Result<Poly, PolyError> {
        Poly::compose_univariate(&self.derivative_terms(), inner)
    }

    /// Derivative strictly positive on a grid of `[0, zeta_bar]` and some coefficient positive.
    pub fn is_strictly_increasing_on(&self, zeta_bar: f64, points: usize) -> bool {
        self.coeffs.iter().all(|c| *c >= 0.0)
            && self.coeffs.iter().any(|c| *c > 0.0)
            && (0..points).all(|k| {
                let z = zeta_bar * k as f64 / (points - 1).max(1) as f64;
                self.derivative(z) > 0.0
            })
    }
}

/// `alpha(zeta) = a * sqrt(zeta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqrtClassK {
    pub a: f64,
}

impl SqrtClassK {
    pub fn value(&self, zeta: f64) -> f64 {
        self.a * zeta.max(0.0).sqrt()
    }
}

/// `a = sqrt(2 b1)`: the largest square-root class-K function below `sqrt(2 beta)`
/// for linear `beta(zeta) = b1 zeta`.
pub fn sqrt_from_beta(b1: f64) -> Result<SqrtClassK, SystemError> {
    if !(b1 >= 0.0) {
        return Err(SystemError::NegativeCoefficient(b1));
    }
    Ok(SqrtClassK { a: (2.0 * b1).sqrt() })
}

/// Choice of linear under-approximation slope.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EtaFormula {
    /// `eta = sqrt(beta(zeta_bar)) / zeta_bar`. For linear `beta` this is the
    /// largest slope with `(eta zeta)' (eta zeta) <= beta'(zeta)` on `[0, zeta_bar]`.
    #[default]
    Standard,
    /// `eta = sqrt(2 beta(zeta_bar)) / zeta_bar`, the largest slope below
    /// `sqrt(2 beta)` alone. It does not imply the derivative bound above.
    Widened,
}

/// Slope `eta` of the linear under-approximation `eta * zeta <= sqrt(2 beta(zeta))`,
/// checked on a 1000-point grid of `[0, zeta_bar]`.
pub fn eta_under_approx(beta: &ClassKTemplate, zeta_bar: f64, formula: EtaFormula) -> Result<f64, SystemError> {
    if !(zeta_bar > 0.0) {
        return Err(SystemError::NonPositiveZetaBar(zeta_bar));
    }
    let top = beta.value(zeta_bar);
    let eta = match formula {
        EtaFormula::Standard => top.sqrt() / zeta_bar,
        EtaFormula::Widened => (2.0 * top).sqrt() / zeta_bar,
    };
    for k in 0..1000 {
        let z = zeta_bar * k as f64 / 999.0;
        let bound = (2.0 * beta.value(z)).max(0.0).sqrt();
        if eta * z > bound * (1.0 + 1e-12) + 1e-15 {
            return Err(SystemError::UnderApproximation(z));
        }
    }
    Ok(eta)
}

/// Grid maximum of `psi` over the region's box, restricted to the variables
/// that appear in `psi`, times 1.01.
///
/// Generators that involve variables outside that set are skipped, which can
/// only raise the maximum.
pub fn zeta_bar(psi: &Poly, region: &SemialgebraicSet, points_per_dim: usize) -> Result<f64, SystemError> {
    let bbox = region.bbox.as_ref().ok_or(SystemError::NoBoundingBox)?;
    let active = psi.variables();
    if let Some(&v) = active.iter().find(|&&v| v >= bbox.len()) {
        return Err(SystemError::Shape(format!("variable {v} has no bounds")));
    }
    let gens: Vec<&Poly> = region
        .generators
        .iter()
        .filter(|g| g.variables().iter().all(|v| active.contains(v)))
        .collect();
    let nvars = psi.space().len();
    let mut point = vec![0.0; nvars];
    for (i, b) in bbox.iter().enumerate() {
        point[i] = 0.5 * (b.0 + b.1);
    }
    let steps = points_per_dim.max(2);
    let total = steps.pow(active.len() as u32);
    let mut best = f64::NEG_INFINITY;
    for idx in 0..total {
        let mut r = idx;
        for &v in &active {
            let k = r % steps;
            r /= steps;
            let (lo, hi) = bbox[v];
            point[v] = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
        }
        if gens.iter().all(|g| g.eval_unchecked(&point) >= 0.0) {
            best = best.max(psi.eval_unchecked(&point));
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(SystemError::EmptyRegion);
    }
    Ok(best * 1.01)
}

/// Class-K function attached to one level of a chain.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassKSlot {
    Unknown,
    Poly(ClassKTemplate),
    /// Square-root form used at runtime with its polynomial under-approximation
    /// used inside certificates.
    SqrtPair { sqrt: SqrtClassK, poly: ClassKTemplate },
}

impl ClassKSlot {
    pub fn polynomial(&self) -> Option<&ClassKTemplate> {
        match self {
            ClassKSlot::Unknown => None,
            ClassKSlot::Poly(t) => Some(t),
            ClassKSlot::SqrtPair { poly, .. } => Some(poly),
        }
    }
}

/// Runtime evaluation of square-root slots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RuntimeClassK {
    #[default]
    Sqrt,
    Poly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HocbfCandidate {
    pub name: String,
    pub b: Poly,
    pub r: usize,
    /// Slots `alpha_1 .. alpha_r`.
    pub slots: Vec<ClassKSlot>,
}

impl HocbfCandidate {
    pub fn new(name: impl Into<String>, b: Poly, r: usize) -> HocbfCandidate {
        HocbfCandidate {
            name: name.into(),
            b,
            r,
            slots: vec![ClassKSlot::Unknown; r],
        }
    }

    pub fn with_slots(mut self, slots: Vec<ClassKSlot>) -> HocbfCandidate {
        self.slots = slots;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clif {
    pub name: String,
    pub v: Poly,
}

/// Outcome of [`check_relative_degree`].
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeDegreeCheck {
    pub holds: bool,
    /// First nonzero `L_g L_f^k b` entry as `(k, input, polynomial)`.
    pub witness: Option<(usize, usize, Poly)>,
}

const REL_DEG_TOL: f64 = 1e-12;

pub fn check_relative_degree(b: &Poly, sys: &ControlAffineSystem, r: usize) -> Result<RelativeDegreeCheck, SystemError> {
    if r == 0 {
        return Err(SystemError::ZeroRelativeDegree);
    }
    let mut lf = b.clone();
    for k in 0..r {
        let row = sys.lie_g(&lf)?;
        let hit = row
            .iter()
            .enumerate()
            .find(|(_, p)| p.max_abs_coeff() > REL_DEG_TOL);
        if let Some((j, p)) = hit {
            return Ok(RelativeDegreeCheck {
                holds: k == r - 1,
                witness: Some((k, j, p.clone())),
            });
        }
        lf = sys.lie_f(&lf)?;
    }
    Ok(RelativeDegreeCheck {
        holds: false,
        witness: None,
    })
}

/// Smallest `r <= max_r` at which the input appears, if any.
pub fn relative_degree(b: &Poly, sys: &ControlAffineSystem, max_r: usize) -> Result<Option<usize>, SystemError> {
    let mut lf = b.clone();
    for k in 0..max_r {
        if sys.lie_g(&lf)?.iter().any(|p| p.max_abs_coeff() > REL_DEG_TOL) {
            return Ok(Some(k + 1));
        }
        lf = sys.lie_f(&lf)?;
    }
    Ok(None)
}

/// Symbolic chain `psi_0 .. psi_{r-1}` and the drift/input split of `psi_{r-1}'`.
#[derive(Clone, Debug, PartialEq)]
pub struct HocbfChain {
    pub psis: Vec<Poly>,
    /// `L_f psi_{r-1}`, plus `alpha_r(psi_{r-1})` when slot `r` is known.
    pub drift_term: Poly,
    pub includes_alpha_r: bool,
    /// `L_g psi_{r-1}`.
    pub input_row: Vec<Poly>,
}

impl HocbfChain {
    pub fn last(&self) -> &Poly {
        self.psis.last().expect("chain has at least one level")
    }
}

/// Builds `psi_i = L_f psi_{i-1} + alpha_i(psi_{i-1})` using the polynomial
/// values of slots `1..r-1`.
pub fn build_chain(candidate: &HocbfCandidate, sys: &ControlAffineSystem) -> Result<HocbfChain, SystemError> {
    let r = candidate.r;
    if r == 0 {
        return Err(SystemError::ZeroRelativeDegree);
    }
    if candidate.slots.len() != r {
        return Err(SystemError::SlotCount {
            slots: candidate.slots.len(),
            r,
        });
    }
    let mut psis = vec![candidate.b.clone()];
    for i in 1..r {
        let alpha = candidate.slots[i - 1]
            .polynomial()
            .ok_or(SystemError::NonPolynomialSlot(i))?;
        let prev = &psis[i - 1];
        let next = &sys.lie_f(prev)? + &alpha.compose(prev)?;
        psis.push(next);
    }
    let last = psis.last().unwrap();
    let mut drift_term = sys.lie_f(last)?;
    let includes_alpha_r = match candidate.slots[r - 1].polynomial() {
        Some(t) => {
            drift_term = &drift_term + &t.compose(last)?;
            true
        }
        None => false,
    };
    let input_row = sys.lie_g(last)?;
    Ok(HocbfChain {
        psis,
        drift_term,
        includes_alpha_r,
        input_row,
    })
}

/// Numeric chain values at a state.
#[derive(Clone, Debug, PartialEq)]
pub struct RuntimeChainValues {
    pub psis: Vec<f64>,
    /// `L_f psi_{r-1}(x)`.
    pub lf_last: f64,
    /// `alpha_r(psi_{r-1}(x))`, zero when slot `r` is unknown.
    pub alpha_r: f64,
    /// `L_g psi_{r-1}(x)`.
    pub input_row: Vec<f64>,
}

impl RuntimeChainValues {
    /// `psi_r(x, u) = lf_last + input_row . u + alpha_r`.
    pub fn psi_r(&self, u: &[f64]) -> f64 {
        self.lf_last + self.alpha_r + self.input_row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Lower clamp on `sqrt(psi)` in square-root class-K derivatives.
pub const SQRT_CLAMP: f64 = 1e-9;

/// Precomputed Lie derivatives for numeric chain evaluation with either
/// polynomial or square-root class-K slots.
///
/// Each `psi_i` is a function of `b, L_f b, ..., L_f^i b`, so its Taylor
/// coefficients along the drift flow follow from those of `b` by series
/// arithmetic: differentiation shifts, and class-K slots compose.
#[derive(Clone, Debug)]
pub struct RuntimeChain {
    space: VarSpace,
    slots: Vec<ClassKSlot>,
    modes: Vec<RuntimeClassK>,
    /// `L_f^k b` for `k = 0..=r`.
    lie_powers: Vec<Poly>,
    /// `L_g L_f^{r-1} b`.
    input_row: Vec<Poly>,
}

fn series_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    (0..n)
        .map(|k| (0..=k).map(|j| a[j] * b[k - j]).sum())
        .collect()
}

fn series_sqrt(p: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; p.len()];
    let q0 = p[0].max(0.0).sqrt().max(SQRT_CLAMP);
    q[0] = q0;
    for k in 1..p.len() {
        let cross: f64 = (1..k).map(|j| q[j] * q[k - j]).sum();
        q[k] = (p[k] - cross) / (2.0 * q0);
    }
    q
}

fn series_template(t: &ClassKTemplate, p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    let mut power = p.to_vec();
    for (i, c) in t.coeffs.iter().enumerate() {
        if i > 0 {
            power = series_mul(&power, p);
        }
        let w = c / (i + 1) as f64;
        for (o, v) in out.iter_mut().zip(&power) {
            *o += w * v;
        }
    }
    out
}

impl RuntimeChain {
    pub fn new(candidate: &HocbfCandidate, sys: &ControlAffineSystem) -> Result<RuntimeChain, SystemError> {
        let r = candidate.r;
        if r == 0 {
            return Err(SystemError::ZeroRelativeDegree);
        }
        if candidate.slots.len() != r {
            return Err(SystemError::SlotCount {
                slots: candidate.slots.len(),
                r,
            });
        }
        for (i, s) in candidate.slots.iter().enumerate().take(r - 1) {
            if matches!(s, ClassKSlot::Unknown) {
                return Err(SystemError::NonPolynomialSlot(i + 1));
            }
        }
        let mut lie_powers = vec![candidate.b.clone()];
        for _ in 0..r {
            let next = sys.lie_f(lie_powers.last().unwrap())?;
            lie_powers.push(next);
        }
        let input_row = sys.lie_g(&lie_powers[r - 1])?;
        Ok(RuntimeChain {
            space: sys.space().clone(),
            slots: candidate.slots.clone(),
            modes: vec![RuntimeClassK::default(); r],
            lie_powers,
            input_row,
        })
    }

    pub fn r(&self) -> usize {
        self.slots.len()
    }

    /// Per-slot runtime modes; missing entries keep the default.
    pub fn with_modes(mut self, modes: &[RuntimeClassK]) -> RuntimeChain {
        for (m, v) in self.modes.iter_mut().zip(modes) {
            *m = *v;
        }
        self
    }

    fn apply_slot(&self, slot: &ClassKSlot, series: &[f64], mode: RuntimeClassK) -> Vec<f64> {
        match (slot, mode) {
            (ClassKSlot::SqrtPair { sqrt, .. }, RuntimeClassK::Sqrt) => {
                series_sqrt(series).iter().map(|v| sqrt.a * v).collect()
            }
            (ClassKSlot::SqrtPair { poly, .. }, RuntimeClassK::Poly) | (ClassKSlot::Poly(poly), _) => {
                series_template(poly, series)
            }
            (ClassKSlot::Unknown, _) => vec![0.0; series.len()],
        }
    }

    pub fn eval(&self, x: &[f64]) -> RuntimeChainValues {
        let pt = crate::system::full_point(&self.space, x);
        let r = self.r();
        // normalized Taylor coefficients T_k = L_f^k b / k!
        let mut fact = 1.0;
        let mut series: Vec<f64> = Vec::with_capacity(r + 1);
        for (k, p) in self.lie_powers.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            series.push(p.eval_unchecked(&pt) / fact);
        }
        let mut psis = vec![series[0]];
        for i in 1..r {
            let deriv: Vec<f64> = (0..series.len() - 1)
                .map(|k| (k + 1) as f64 * series[k + 1])
                .collect();
            let alpha = self.apply_slot(&self.slots[i - 1], &series[..series.len() - 1], self.modes[i - 1]);
            series = deriv.iter().zip(&alpha).map(|(a, b)| a + b).collect();
            psis.push(series[0]);
        }
        let lf_last = series[1];
        let alpha_r = self.apply_slot(&self.slots[r - 1], &series[..1], self.modes[r - 1])[0];
        let input_row = self.input_row.iter().map(|p| p.eval_unchecked(&pt)).collect();
        RuntimeChainValues {
            psis,
            lf_last,
            alpha_r,
            input_row,
        }
    }
}

/// Numeric chain evaluation with the given per-slot modes, see [`RuntimeChain`].
pub fn eval_runtime_chain(
    candidate: &HocbfCandidate,
    sys: &ControlAffineSystem,
    x: &[f64],
    modes: &[RuntimeClassK],
) -> Result<RuntimeChainValues, SystemError> {
    Ok(RuntimeChain::new(candidate, sys)?.with_modes(modes).eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator() -> ControlAffineSystem {
        let s = VarSpace::new(&["x1", "x2"], &["u"]).unwrap();
        let x2 = Poly::var(&s, 1);
        let f = PolyVec::new(vec![x2, Poly::zero(&s)]);
        let g = PolyMat::new(2, 1, vec![Poly::zero(&s), Poly::constant(&s, 1.0)]).unwrap();
        ControlAffineSystem::new(f, g).unwrap()
    }

    #[test]
    fn relative_degree_of_position() {
        let sys = double_integrator();
        let b = Poly::var(sys.space(), 0);
        assert!(check_relative_degree(&b, &sys, 2).unwrap().holds);
        assert!(!check_relative_degree(&b, &sys, 1).unwrap().holds);
        assert_eq!(relative_degree(&b, &sys, 4).unwrap(), Some(2));
        let (k, j, w) = check_relative_degree(&b, &sys, 2).unwrap().witness.unwrap();
        assert_eq!((k, j), (1, 0));
        assert_eq!(w, Poly::constant(sys.space(), 1.0));
    }

    #[test]
    fn chain_with_identity_gain() {
        let sys = double_integrator();
        let s = sys.space();
        let b = Poly::var(s, 0);
        let cand = HocbfCandidate::new("b", b.clone(), 2)
            .with_slots(vec![ClassKSlot::Poly(ClassKTemplate::linear(1.0)), ClassKSlot::Unknown]);
        let chain = build_chain(&cand, &sys).unwrap();
        assert_eq!(chain.psis[1], &Poly::var(s, 1) + &b);
        assert_eq!(chain.drift_term, Poly::var(s, 1));
        assert_eq!(chain.input_row, vec![Poly::constant(s, 1.0)]);
        assert!(!chain.includes_alpha_r);
    }

    #[test]
    fn sqrt_runtime_values() {
        let sys = double_integrator();
        let b = Poly::var(sys.space(), 0);
        let cand = HocbfCandidate::new("b", b, 2).with_slots(vec![
            ClassKSlot::SqrtPair {
                sqrt: SqrtClassK { a: 1.0 },
                poly: ClassKTemplate::linear(0.1),
            },
            ClassKSlot::Poly(ClassKTemplate::linear(1.0)),
        ]);
        let v = eval_runtime_chain(&cand, &sys, &[1.0, -0.5], &[]).unwrap();
        assert!((v.psis[1] - 0.5).abs() < 1e-15);
        // psi_1' drift part: x2' + a x2 / (2 sqrt x1) = 0 - 0.25
        assert!((v.lf_last + 0.25).abs() < 1e-15);
        assert!((v.alpha_r - 0.5).abs() < 1e-15);
        let edge = eval_runtime_chain(&cand, &sys, &[0.0, -0.5], &[]).unwrap();
        assert!(edge.lf_last.is_finite());
    }

    #[test]
    fn eta_and_sqrt_forms() {
        let beta = ClassKTemplate::linear(0.5);
        assert!((eta_under_approx(&beta, 2.0, EtaFormula::Standard).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(sqrt_from_beta(0.5).unwrap().a, 1.0);
        assert_eq!(sqrt_from_beta(0.0).unwrap().a, 0.0);
        assert!(sqrt_from_beta(-1.0).is_err());
        assert!(eta_under_approx(&beta, 0.0, EtaFormula::Standard).is_err());
    }

    #[test]
    fn zeta_bar_cases() {
        let s = VarSpace::new(&["x"], &[]).unwrap();
        let x = Poly::var(&s, 0);
        let region = SemialgebraicSet::new(vec![x.clone()], Some(vec![(0.0, 1.0)]));
        assert_eq!(zeta_bar(&(-&x), &region, 101).unwrap(), 0.0);
        let c = Poly::constant(&s, 5.0);
        assert!((zeta_bar(&c, &region, 101).unwrap() - 5.05).abs() < 1e-12);
        let empty = SemialgebraicSet::new(vec![&x - &Poly::constant(&s, 2.0)], Some(vec![(0.0, 1.0)]));
        assert_eq!(zeta_bar(&x, &empty, 11), Err(SystemError::EmptyRegion));
    }
}
