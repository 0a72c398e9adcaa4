//! Sparse multivariate polynomials with `f64` coefficients.

mod affine;
mod monomial;

pub use affine::{AffineCoeffPoly, AffineForm, DecisionId};
pub use monomial::{monomials_up_to, Monomial, MAX_VAR_DEGREE};

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

/// Relative threshold below which coefficients produced by `add`/`mul` are dropped.
pub const DROP_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("polynomials live in different variable spaces")]
    SpaceMismatch,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("degree in a single variable exceeds {MAX_VAR_DEGREE}")]
    DegreeOverflow,
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("polynomial depends on input variables where only states are allowed")]
    DependsOnInputs,
}

#[derive(Debug, PartialEq, Eq)]
struct SpaceInner {
    names: Vec<String>,
    n_states: usize,
}

/// Ordered variable names: the state variables followed by the input symbols.
#[derive(Clone)]
pub struct VarSpace(Arc<SpaceInner>);

impl VarSpace {
    pub fn new<S: AsRef<str>>(states: &[S], inputs: &[S]) -> Result<VarSpace, PolyError> {
        let mut names: Vec<String> = Vec::new();
        for n in states.iter().chain(inputs) {
            let n = n.as_ref().to_string();
            if names.contains(&n) {
                return Err(PolyError::DuplicateVariable(n));
            }
            names.push(n);
        }
        Ok(VarSpace(Arc::new(SpaceInner {
            names,
            n_states: states.len(),
        })))
    }

    pub fn len(&self) -> usize {
        self.0.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.names.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.0.n_states
    }

    pub fn n_inputs(&self) -> usize {
        self.len() - self.n_states()
    }

    pub fn names(&self) -> &[String] {
        &self.0.names
    }

    pub fn index(&self, name: &str) -> Result<usize, PolyError> {
        self.0
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))
    }

    /// Mask selecting the state variables.
    pub fn state_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| i < self.n_states()).collect()
    }
}

impl PartialEq for VarSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Eq for VarSpace {}

impl fmt::Debug for VarSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VarSpace({:?}, states={})", self.0.names, self.0.n_states)
    }
}

/// All monomials of degree at most `max_degree` in the chosen variables.
pub fn monomial_basis(space: &VarSpace, vars: &[usize], max_degree: u32) -> Vec<Monomial> {
    let mut mask = vec![false; space.len()];
    for &v in vars {
        mask[v] = true;
    }
    monomials_up_to(&mask, max_degree)
}

#[derive(Clone, PartialEq)]
pub struct Poly {
    space: VarSpace,
    terms: BTreeMap<Monomial, f64>,
}

fn max_abs<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
    it.fold(0.0f64, |m, c| m.max(c.abs()))
}

impl Poly {
    pub fn zero(space: &VarSpace) -> Poly {
        Poly {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(space: &VarSpace, c: f64) -> Poly {
        let mut p = Poly::zero(space);
        if c != 0.0 {
            p.terms.insert(Monomial::one(space.len()), c);
        }
        p
    }

    pub fn var(space: &VarSpace, index: usize) -> Poly {
        let mut p = Poly::zero(space);
        p.terms.insert(Monomial::var(space.len(), index), 1.0);
        p
    }

    pub fn var_named(space: &VarSpace, name: &str) -> Result<Poly, PolyError> {
        Ok(Poly::var(space, space.index(name)?))
    }

    /// Builds from `(monomial, coefficient)` pairs, merging duplicates and
    /// dropping exact zeros.
    pub fn from_terms(space: &VarSpace, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Poly {
        let mut p = Poly::zero(space);
        for (m, c) in terms {
            debug_assert_eq!(m.nvars(), space.len());
            *p.terms.entry(m).or_insert(0.0) += c;
        }
        p.terms.retain(|_, c| *c != 0.0);
        p
    }

    pub fn space(&self) -> &VarSpace {
        &self.space
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, f64> {
        &self.terms
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|m| m.exponent(var)).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        max_abs(self.terms.values())
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one(self.space.len()))
    }

    /// Indices of variables that appear with a nonzero exponent.
    pub fn variables(&self) -> Vec<usize> {
        let mut used = vec![false; self.space.len()];
        for m in self.terms.keys() {
            for (i, &e) in m.exponents().iter().enumerate() {
                if e > 0 {
                    used[i] = true;
                }
            }
        }
        (0..used.len()).filter(|&i| used[i]).collect()
    }

    pub fn depends_on_inputs(&self) -> bool {
        self.variables().iter().any(|&v| v >= self.space.n_states())
    }

    fn check_space(&self, other: &Poly) -> Result<(), PolyError> {
        if self.space == other.space {
            Ok(())
        } else {
            Err(PolyError::SpaceMismatch)
        }
    }

    fn cleaned(mut self, scale: f64) -> Poly {
        let tol = DROP_TOLERANCE * scale;
        self.terms.retain(|_, c| c.abs() > tol && *c != 0.0);
        self
    }

    pub fn try_add(&self, other: &Poly) -> Result<Poly, PolyError> {
        self.check_space(other)?;
        let scale = self.max_abs_coeff().max(other.max_abs_coeff());
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += c;
        }
        Ok(Poly {
            space: self.space.clone(),
            terms,
        }
        .cleaned(scale))
    }

    pub fn try_sub(&self, other: &Poly) -> Result<Poly, PolyError> {
        self.try_add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Poly) -> Result<Poly, PolyError> {
        self.check_space(other)?;
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m = ma.checked_mul(mb).ok_or(PolyError::DegreeOverflow)?;
                *terms.entry(m).or_insert(0.0) += ca * cb;
            }
        }
        let scale = self.max_abs_coeff() * other.max_abs_coeff();
        Ok(Poly {
            space: self.space.clone(),
            terms,
        }
        .cleaned(scale))
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::zero(&self.space);
        }
        Poly {
            space: self.space.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn try_pow(&self, k: u32) -> Result<Poly, PolyError> {
        let mut acc = Poly::constant(&self.space, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.try_mul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.try_mul(&base)?;
            }
        }
        Ok(acc)
    }

    pub fn partial(&self, var: usize) -> Poly {
        let terms = self.terms.iter().filter_map(|(m, c)| {
            m.differentiate(var).map(|(k, dm)| (dm, c * k as f64))
        });
        Poly::from_terms(&self.space, terms)
    }

    pub fn partial_named(&self, name: &str) -> Result<Poly, PolyError> {
        Ok(self.partial(self.space.index(name)?))
    }

    /// Gradient with respect to the state variables.
    pub fn grad(&self) -> PolyVec {
        PolyVec::new((0..self.space.n_states()).map(|i| self.partial(i)).collect())
    }

    /// `grad(p) . field` over the state variables.
    pub fn lie(&self, field: &PolyVec) -> Result<Poly, PolyError> {
        let n = self.space.n_states();
        if field.len() != n {
            return Err(PolyError::Length {
                expected: n,
                got: field.len(),
            });
        }
        let mut acc = Poly::zero(&self.space);
        for (i, fi) in field.entries().iter().enumerate() {
            if fi.is_zero() {
                continue;
            }
            let d = self.partial(i);
            if d.is_zero() {
                continue;
            }
            acc = acc.try_add(&d.try_mul(fi)?)?;
        }
        Ok(acc)
    }

    /// `grad(p) . g[:, k]` for every column `k`.
    pub fn lie_mat(&self, g: &PolyMat) -> Result<Vec<Poly>, PolyError> {
        (0..g.cols()).map(|k| self.lie(&g.column(k))).collect()
    }

    /// Evaluates at a point covering every variable of the space.
    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.space.len() {
            return Err(PolyError::Length {
                expected: self.space.len(),
                got: point.len(),
            });
        }
        Ok(self.eval_unchecked(point))
    }

    /// Evaluates at a state; errors if the polynomial involves inputs.
    pub fn eval_state(&self, x: &[f64]) -> Result<f64, PolyError> {
        let n = self.space.n_states();
        if x.len() != n {
            return Err(PolyError::Length { expected: n, got: x.len() });
        }
        if self.depends_on_inputs() {
            return Err(PolyError::DependsOnInputs);
        }
        Ok(self.terms.iter().map(|(m, c)| c * m.eval(x)).sum())
    }

    pub(crate) fn eval_unchecked(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// `sum_k c_k inner^k` for `(k, c_k)` pairs.
    pub fn compose_univariate(template: &[(u32, f64)], inner: &Poly) -> Result<Poly, PolyError> {
        let mut acc = Poly::zero(&inner.space);
        let top = template.iter().map(|t| t.0).max().unwrap_or(0);
        let mut power = Poly::constant(&inner.space, 1.0);
        for k in 0..=top {
            if k > 0 {
                power = power.try_mul(inner)?;
            }
            for &(e, c) in template {
                if e == k && c != 0.0 {
                    acc = acc.try_add(&power.scale(c))?;
                }
            }
        }
        Ok(acc)
    }

    /// Replaces every variable `i` by `images[i]`; images may live in another space.
    pub fn substitute(&self, images: &[Poly]) -> Result<Poly, PolyError> {
        if images.len() != self.space.len() {
            return Err(PolyError::Length {
                expected: self.space.len(),
                got: images.len(),
            });
        }
        let target = images
            .first()
            .map(|p| p.space.clone())
            .unwrap_or_else(|| self.space.clone());
        if images.iter().any(|p| p.space != target) {
            return Err(PolyError::SpaceMismatch);
        }
        // powers[i][e] = images[i]^e, filled lazily
        let mut powers: Vec<Vec<Poly>> = images
            .iter()
            .map(|_| vec![Poly::constant(&target, 1.0)])
            .collect();
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        let mut scale = 0.0f64;
        for (m, c) in &self.terms {
            let mut prod = Poly::constant(&target, *c);
            for (i, &e) in m.exponents().iter().enumerate() {
                let e = e as usize;
                while powers[i].len() <= e {
                    let next = powers[i].last().unwrap().try_mul(&images[i])?;
                    powers[i].push(next);
                }
                if e > 0 {
                    prod = prod.try_mul(&powers[i][e])?;
                }
            }
            scale = scale.max(prod.max_abs_coeff());
            for (pm, pc) in prod.terms {
                *terms.entry(pm).or_insert(0.0) += pc;
            }
        }
        Ok(Poly {
            space: target,
            terms,
        }
        .cleaned(scale))
    }

    /// Drops coefficients with absolute value at most `tol`.
    pub fn truncate(&self, tol: f64) -> Poly {
        let mut p = self.clone();
        p.terms.retain(|_, c| c.abs() > tol);
        p
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly({self})")
    }
}

/// Prints in the expression grammar accepted by the scenario parser, using
/// round-trip float formatting.
impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let names = self.space.names();
        for (k, (m, c)) in self.terms.iter().enumerate() {
            let neg = *c < 0.0;
            let mag = c.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let mut factors: Vec<String> = Vec::new();
            if mag != 1.0 || m.is_one() {
                factors.push(format!("{mag:?}"));
            }
            for (i, &e) in m.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(names[i].clone()),
                    _ => factors.push(format!("{}^{}", names[i], e)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

impl Add<&Poly> for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        self.try_add(rhs).expect("poly add")
    }
}

impl Sub<&Poly> for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self.try_sub(rhs).expect("poly sub")
    }
}

impl Mul<&Poly> for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        self.try_mul(rhs).expect("poly mul")
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

/// Column of polynomials, e.g. the drift `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVec {
    entries: Vec<Poly>,
}

impl PolyVec {
    pub fn new(entries: Vec<Poly>) -> PolyVec {
        PolyVec { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Poly] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> &Poly {
        &self.entries[i]
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, PolyError> {
        self.entries.iter().map(|p| p.eval(point)).collect()
    }
}

/// Row-major `rows x cols` matrix of polynomials, e.g. the input gain `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMat {
    rows: usize,
    cols: usize,
    entries: Vec<Poly>,
}

impl PolyMat {
    pub fn new(rows: usize, cols: usize, entries: Vec<Poly>) -> Result<PolyMat, PolyError> {
        if entries.len() != rows * cols {
            return Err(PolyError::Length {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        Ok(PolyMat { rows, cols, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Poly {
        &self.entries[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> PolyVec {
        PolyVec::new((0..self.rows).map(|r| self.get(r, c).clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy() -> VarSpace {
        VarSpace::new(&["x", "y"], &[]).unwrap()
    }

    #[test]
    fn cancellation_removes_terms() {
        let s = xy();
        let x = Poly::var(&s, 0);
        let one = Poly::constant(&s, 1.0);
        let p = &(&x * &x) + &one;
        let q = &(&x - &(&x * &x)) + &Poly::zero(&s);
        let r = &p + &q;
        assert_eq!(r, &x + &one);
    }

    #[test]
    fn product_and_identity() {
        let s = xy();
        let x = Poly::var(&s, 0);
        let one = Poly::constant(&s, 1.0);
        let r = &(&x + &one) * &(&x - &one);
        assert_eq!(r, &(&x * &x) - &one);
        assert_eq!(&r * &one, r);
    }

    #[test]
    fn partial_derivatives() {
        let s = xy();
        let x = Poly::var(&s, 0);
        let y = Poly::var(&s, 1);
        let p = &(&x * &x) * &y;
        assert_eq!(p.partial(0), (&x * &y).scale(2.0));
        assert!(Poly::constant(&s, 3.0).partial(0).is_zero());
    }

    #[test]
    fn lie_derivative_of_rotation() {
        let s = xy();
        let x = Poly::var(&s, 0);
        let y = Poly::var(&s, 1);
        let f = PolyVec::new(vec![y.clone(), -&x]);
        let p = &x * &x;
        assert_eq!(p.lie(&f).unwrap(), (&x * &y).scale(2.0));
        assert!(Poly::constant(&s, 1.0).lie(&f).unwrap().is_zero());
    }

    #[test]
    fn spaces_must_match() {
        let a = Poly::var(&xy(), 0);
        let other = VarSpace::new(&["u"], &[]).unwrap();
        let b = Poly::var(&other, 0);
        assert_eq!(a.try_add(&b).unwrap_err(), PolyError::SpaceMismatch);
        // identical names in a separately built space are the same space
        assert!(a.try_add(&Poly::var(&xy(), 1)).is_ok());
    }

    #[test]
    fn compose_templates() {
        let s = xy();
        let x = Poly::var(&s, 0);
        let one = Poly::constant(&s, 1.0);
        let inner = &x + &one;
        assert_eq!(Poly::compose_univariate(&[(1, 1.0)], &inner).unwrap(), inner);
        let sq = Poly::compose_univariate(&[(2, 1.0)], &inner).unwrap();
        assert_eq!(sq, &(&(&x * &x) + &x.scale(2.0)) + &one);
    }

    #[test]
    fn basis_sizes() {
        let s1 = VarSpace::new(&["x"], &[]).unwrap();
        assert_eq!(monomial_basis(&s1, &[0], 2).len(), 3);
        assert_eq!(monomial_basis(&xy(), &[0, 1], 1).len(), 3);
        let s4 = VarSpace::new(&["a", "b", "c", "d"], &[]).unwrap();
        assert_eq!(monomial_basis(&s4, &[0, 1, 2, 3], 2).len(), 15);
    }

    #[test]
    fn display_reads_like_the_grammar() {
        let s = xy();
        let x = Poly::var(&s, 0);
        let y = Poly::var(&s, 1);
        let p = &(&(&x * &x).scale(-2.0) + &y) - &Poly::constant(&s, 0.5);
        assert_eq!(p.to_string(), "-0.5 + y - 2.0*x^2");
    }

    #[test]
    fn substitution_shifts_and_scales() {
        let s = xy();
        let x = Poly::var(&s, 0);
        let y = Poly::var(&s, 1);
        let p = &(&x * &x) + &y;
        // x -> 2x + 1, y -> y
        let img = vec![&x.scale(2.0) + &Poly::constant(&s, 1.0), y.clone()];
        let q = p.substitute(&img).unwrap();
        for pt in [[0.3, -1.0], [2.0, 0.5]] {
            let want = (2.0 * pt[0] + 1.0f64).powi(2) + pt[1];
            assert!((q.eval(&pt).unwrap() - want).abs() < 1e-12);
        }
    }
}
