use std::cmp::Ordering;
use std::fmt;

/// Largest exponent allowed on a single variable.
pub const MAX_VAR_DEGREE: u32 = 64;

/// Exponent vector over a [`VarSpace`](super::VarSpace).
///
/// Ordered graded-lexicographically: lower total degree first, then the
/// earlier variable with the larger exponent first, giving
/// `1, x, y, x^2, xy, y^2, ...`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Box<[u8]>,
    degree: u32,
}

impl Monomial {
    pub fn one(nvars: usize) -> Monomial {
        Monomial {
            exps: vec![0; nvars].into_boxed_slice(),
            degree: 0,
        }
    }

    pub fn var(nvars: usize, index: usize) -> Monomial {
        let mut e = vec![0u8; nvars];
        e[index] = 1;
        Monomial {
            exps: e.into_boxed_slice(),
            degree: 1,
        }
    }

    /// Builds a monomial, returning `None` if an exponent exceeds
    /// [`MAX_VAR_DEGREE`].
    pub fn from_exponents(exps: &[u32]) -> Option<Monomial> {
        if exps.iter().any(|&e| e > MAX_VAR_DEGREE) {
            return None;
        }
        Some(Monomial {
            degree: exps.iter().sum(),
            exps: exps.iter().map(|&e| e as u8).collect(),
        })
    }

    pub fn exponents(&self) -> &[u8] {
        &self.exps
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.exps[var] as u32
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn is_one(&self) -> bool {
        self.degree == 0
    }

    /// Product, or `None` if a variable degree would exceed the bound.
    pub fn checked_mul(&self, other: &Monomial) -> Option<Monomial> {
        let mut exps = Vec::with_capacity(self.exps.len());
        for (a, b) in self.exps.iter().zip(other.exps.iter()) {
            let e = *a as u32 + *b as u32;
            if e > MAX_VAR_DEGREE {
                return None;
            }
            exps.push(e as u8);
        }
        Some(Monomial {
            exps: exps.into_boxed_slice(),
            degree: self.degree + other.degree,
        })
    }

    /// `d/dx_var`: returns the multiplier and the reduced monomial.
    pub fn differentiate(&self, var: usize) -> Option<(u32, Monomial)> {
        let e = self.exps[var];
        if e == 0 {
            return None;
        }
        let mut exps = self.exps.clone();
        exps[var] -= 1;
        Some((
            e as u32,
            Monomial {
                exps,
                degree: self.degree - 1,
            },
        ))
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut v = 1.0;
        for (&e, &x) in self.exps.iter().zip(point) {
            if e > 0 {
                v *= x.powi(e as i32);
            }
        }
        v
    }

    /// True if every variable with a nonzero exponent is in `mask`.
    pub fn supported_in(&self, mask: &[bool]) -> bool {
        self.exps.iter().zip(mask).all(|(&e, &m)| e == 0 || m)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree
            .cmp(&other.degree)
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.exps)
    }
}

/// All monomials over the variables flagged in `mask` with total degree at
/// most `max_degree`, in graded order.
pub fn monomials_up_to(mask: &[bool], max_degree: u32) -> Vec<Monomial> {
    let active: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let mut out = Vec::new();
    let mut exps = vec![0u32; mask.len()];
    fn rec(active: &[usize], k: usize, left: u32, exps: &mut [u32], out: &mut Vec<Monomial>) {
        if k == active.len() {
            out.push(Monomial::from_exponents(exps).expect("bounded by max_degree"));
            return;
        }
        for e in 0..=left {
            exps[active[k]] = e;
            rec(active, k + 1, left - e, exps, out);
        }
        exps[active[k]] = 0;
    }
    rec(&active, 0, max_degree.min(MAX_VAR_DEGREE), &mut exps, &mut out);
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_order_puts_earlier_variables_first() {
        let b = monomials_up_to(&[true, true], 2);
        let exps: Vec<Vec<u8>> = b.iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(
            exps,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn exponent_bound_is_enforced() {
        assert!(Monomial::from_exponents(&[65]).is_none());
        let a = Monomial::from_exponents(&[40]).unwrap();
        assert!(a.checked_mul(&a).is_none());
    }

    #[test]
    fn masked_basis_skips_inactive_variables() {
        let b = monomials_up_to(&[true, false, true], 1);
        assert_eq!(b.len(), 3);
        assert!(b.iter().all(|m| m.exponent(1) == 0));
    }
}
