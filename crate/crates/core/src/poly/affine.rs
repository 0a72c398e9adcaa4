use std::collections::BTreeMap;

use super::{Monomial, Poly, PolyError, VarSpace};

/// Index into a registry of scalar decision variables.
pub type DecisionId = usize;

/// `constant + sum_k coeff_k * d_k` over decision variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineForm {
    pub constant: f64,
    pub coeffs: BTreeMap<DecisionId, f64>,
}

impl AffineForm {
    pub fn constant(c: f64) -> AffineForm {
        AffineForm {
            constant: c,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn decision(id: DecisionId, coeff: f64) -> AffineForm {
        let mut f = AffineForm::default();
        f.coeffs.insert(id, coeff);
        f
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.coeffs.values().all(|c| *c == 0.0)
    }

    pub fn add_assign(&mut self, other: &AffineForm, scale: f64) {
        self.constant += scale * other.constant;
        for (id, c) in &other.coeffs {
            *self.coeffs.entry(*id).or_insert(0.0) += scale * c;
        }
    }

    pub fn scaled(&self, s: f64) -> AffineForm {
        AffineForm {
            constant: self.constant * s,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * s)).collect(),
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(id, c)| c * values[*id]).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .values()
            .fold(self.constant.abs(), |m, c| m.max(c.abs()))
    }
}

/// Polynomial whose coefficients are affine in decision variables.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineCoeffPoly {
    space: VarSpace,
    terms: BTreeMap<Monomial, AffineForm>,
}

impl AffineCoeffPoly {
    pub fn zero(space: &VarSpace) -> AffineCoeffPoly {
        AffineCoeffPoly {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn from_poly(p: &Poly) -> AffineCoeffPoly {
        AffineCoeffPoly {
            space: p.space().clone(),
            terms: p
                .terms()
                .iter()
                .map(|(m, c)| (m.clone(), AffineForm::constant(*c)))
                .collect(),
        }
    }

    /// `sum_k d_{ids[k]} * basis[k]` where each basis element is a polynomial.
    pub fn linear_combination(basis: &[Poly], ids: &[DecisionId]) -> Result<AffineCoeffPoly, PolyError> {
        let space = basis.first().map(|p| p.space().clone()).ok_or(PolyError::Length {
            expected: 1,
            got: 0,
        })?;
        if basis.len() != ids.len() {
            return Err(PolyError::Length {
                expected: basis.len(),
                got: ids.len(),
            });
        }
        let mut out = AffineCoeffPoly::zero(&space);
        for (b, &id) in basis.iter().zip(ids) {
            if *b.space() != space {
                return Err(PolyError::SpaceMismatch);
            }
            for (m, c) in b.terms() {
                out.terms
                    .entry(m.clone())
                    .or_default()
                    .add_assign(&AffineForm::decision(id, *c), 1.0);
            }
        }
        out.clean();
        Ok(out)
    }

    pub fn space(&self) -> &VarSpace {
        &self.space
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, AffineForm> {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

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

    pub fn decision_ids(&self) -> Vec<DecisionId> {
        let mut ids: Vec<DecisionId> = self
            .terms
            .values()
            .flat_map(|f| f.coeffs.keys().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn clean(&mut self) {
        for f in self.terms.values_mut() {
            f.coeffs.retain(|_, c| *c != 0.0);
        }
        self.terms.retain(|_, f| !f.is_zero());
    }

    pub fn try_add(&self, other: &AffineCoeffPoly) -> Result<AffineCoeffPoly, PolyError> {
        if self.space != other.space {
            return Err(PolyError::SpaceMismatch);
        }
        let mut out = self.clone();
        for (m, f) in &other.terms {
            out.terms.entry(m.clone()).or_default().add_assign(f, 1.0);
        }
        out.clean();
        Ok(out)
    }

    pub fn try_add_poly(&self, p: &Poly) -> Result<AffineCoeffPoly, PolyError> {
        self.try_add(&AffineCoeffPoly::from_poly(p))
    }

    pub fn scale(&self, s: f64) -> AffineCoeffPoly {
        let mut out = AffineCoeffPoly {
            space: self.space.clone(),
            terms: self.terms.iter().map(|(m, f)| (m.clone(), f.scaled(s))).collect(),
        };
        out.clean();
        out
    }

    pub fn try_mul_poly(&self, p: &Poly) -> Result<AffineCoeffPoly, PolyError> {
        if self.space != *p.space() {
            return Err(PolyError::SpaceMismatch);
        }
        let mut out = AffineCoeffPoly::zero(&self.space);
        for (ma, fa) in &self.terms {
            for (mb, cb) in p.terms() {
                let m = ma.checked_mul(mb).ok_or(PolyError::DegreeOverflow)?;
                out.terms.entry(m).or_default().add_assign(fa, *cb);
            }
        }
        out.clean();
        Ok(out)
    }

    /// Replaces every variable by a polynomial image (see [`Poly::substitute`]).
    pub fn substitute(&self, images: &[Poly]) -> Result<AffineCoeffPoly, PolyError> {
        let target = images
            .first()
            .map(|p| p.space().clone())
            .unwrap_or_else(|| self.space.clone());
        let mut out = AffineCoeffPoly::zero(&target);
        for (m, f) in &self.terms {
            let mono = Poly::from_terms(&self.space, [(m.clone(), 1.0)]).substitute(images)?;
            for (mm, c) in mono.terms() {
                out.terms.entry(mm.clone()).or_default().add_assign(f, *c);
            }
        }
        out.clean();
        Ok(out)
    }

    /// Fixes every decision variable; `values` is indexed by [`DecisionId`].
    pub fn collapse(&self, values: &[f64]) -> Poly {
        Poly::from_terms(
            &self.space,
            self.terms.iter().map(|(m, f)| (m.clone(), f.eval(values))),
        )
    }
}
