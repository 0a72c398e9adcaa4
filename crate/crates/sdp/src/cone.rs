use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::SQRT_2;

/// Unpacks an svec slice into a full symmetric matrix.
pub(crate) fn smat(n: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for a in 0..n {
        m[(a, a)] = v[k];
        k += 1;
        for b in (a + 1)..n {
            let x = v[k] / SQRT_2;
            m[(a, b)] = x;
            m[(b, a)] = x;
            k += 1;
        }
    }
    m
}

/// Packs the upper triangle of a symmetric matrix into `out`.
pub(crate) fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    let mut k = 0;
    for a in 0..n {
        out[k] = m[(a, a)];
        k += 1;
        for b in (a + 1)..n {
            out[k] = 0.5 * (m[(a, b)] + m[(b, a)]) * SQRT_2;
            k += 1;
        }
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for b in (a + 1)..n {
            let x = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = x;
            m[(b, a)] = x;
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Nesterov-Todd scaling of one PSD block.
///
/// `r` satisfies `r^-1 x r^-T = r' s r = diag(lambda)`; `p = r r'` is the
/// scaling point with `p s p = x`.
#[derive(Debug, Clone)]
pub(crate) struct NtBlock {
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub p: DMatrix<f64>,
}

fn psd_sqrt_and_inv(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let mut sq = eig.eigenvectors.clone();
    let mut isq = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if !(l > 0.0) || !l.is_finite() {
            return None;
        }
        let r = l.sqrt();
        sq.column_mut(j).scale_mut(r.sqrt());
        isq.column_mut(j).scale_mut(1.0 / r.sqrt());
    }
    // q diag(sqrt(l)) q' written as (q diag(l^1/4))(q diag(l^1/4))'
    Some((&sq * sq.transpose(), &isq * isq.transpose()))
}

impl NtBlock {
    pub fn new(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<NtBlock> {
        Self::via_cholesky(x, s).or_else(|| Self::via_eigen(x, s))
    }

    fn via_cholesky(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<NtBlock> {
        let lx = x.clone().cholesky()?.l();
        let ls = s.clone().cholesky()?.l();
        let prod = ls.transpose() * &lx;
        let svd = prod.svd(true, true);
        let u = svd.u?;
        let vt = svd.v_t?;
        let lambda = svd.singular_values;
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return None;
        }
        let n = x.nrows();
        let mut r = &lx * vt.transpose();
        let mut r_inv = u.transpose() * ls.transpose();
        for j in 0..n {
            let f = lambda[j].sqrt();
            r.column_mut(j).scale_mut(1.0 / f);
            r_inv.row_mut(j).scale_mut(1.0 / f);
        }
        let p = &r * r.transpose();
        Some(NtBlock { r, r_inv, lambda, p })
    }

    fn via_eigen(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<NtBlock> {
        // p = x^1/2 (x^1/2 s x^1/2)^-1/2 x^1/2, g = p^1/2, then diagonalise g s g
        let (xh, _) = psd_sqrt_and_inv(x)?;
        let mid = &xh * s * &xh;
        let (_, mid_isqrt) = psd_sqrt_and_inv(&mid)?;
        let mut p = &xh * mid_isqrt * &xh;
        symmetrize(&mut p);
        let (g, g_inv) = psd_sqrt_and_inv(&p)?;
        let mut v = &g * s * &g;
        symmetrize(&mut v);
        let eig = SymmetricEigen::new(v);
        let q = eig.eigenvectors;
        let lambda = eig.eigenvalues;
        if lambda.iter().any(|&l| !(l > 0.0)) {
            return None;
        }
        let r = &g * &q;
        let r_inv = q.transpose() * g_inv;
        Some(NtBlock { r, r_inv, lambda, p })
    }

    /// Maps a primal direction into the scaled space: `r^-1 d r^-T`.
    pub fn scale_primal(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        &self.r_inv * d * self.r_inv.transpose()
    }

    /// Maps a dual direction into the scaled space: `r' d r`.
    pub fn scale_dual(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        self.r.transpose() * d * &self.r
    }

    /// Solves `lambda o q = t` (Jordan product) and maps back: `r^-T q r^-1`.
    pub fn unscale_complementarity(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        let n = t.nrows();
        let mut q = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                q[(a, b)] = 2.0 * t[(a, b)] / (self.lambda[a] + self.lambda[b]);
            }
        }
        let mut out = self.r_inv.transpose() * q * &self.r_inv;
        symmetrize(&mut out);
        out
    }
}

/// Largest `alpha` in `(0, inf]` with `diag(lambda) + alpha * d` PSD.
pub(crate) fn max_step_scaled(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            m[(a, b)] = d[(a, b)] / (lambda[a] * lambda[b]).sqrt();
        }
    }
    let lmin = min_eigenvalue(&m);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

/// Jordan product `(a b + b a) / 2`.
pub(crate) fn jordan(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = a * b;
    m += b * a;
    m *= 0.5;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n, |_, _| next());
        a.transpose() * &a + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn nt_scaling_diagonalises_both_sides() {
        for n in 1..6 {
            let x = spd(n, 3 + n as u64);
            let s = spd(n, 17 + n as u64);
            for blk in [NtBlock::via_cholesky(&x, &s).unwrap(), NtBlock::via_eigen(&x, &s).unwrap()] {
                let lx = blk.scale_primal(&x);
                let ls = blk.scale_dual(&s);
                for a in 0..n {
                    for b in 0..n {
                        let want = if a == b { blk.lambda[a] } else { 0.0 };
                        assert!((lx[(a, b)] - want).abs() < 1e-9, "{lx}");
                        assert!((ls[(a, b)] - want).abs() < 1e-9, "{ls}");
                    }
                }
                let psp = &blk.p * &s * &blk.p;
                assert!((psp - &x).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn svec_roundtrip() {
        let m = spd(4, 9);
        let mut v = vec![0.0; 10];
        svec_into(&m, &mut v);
        assert!((smat(4, &v) - &m).norm() < 1e-14);
        // inner products agree
        let m2 = spd(4, 10);
        let mut v2 = vec![0.0; 10];
        svec_into(&m2, &mut v2);
        let dot: f64 = v.iter().zip(&v2).map(|(a, b)| a * b).sum();
        assert!((dot - m.component_mul(&m2).sum()).abs() < 1e-12);
    }

    #[test]
    fn step_to_boundary() {
        let lambda = DVector::from_vec(vec![1.0, 2.0]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 1.0]));
        assert!((max_step_scaled(&lambda, &d) - 0.5).abs() < 1e-12);
        let up = DMatrix::identity(2, 2);
        assert!(max_step_scaled(&lambda, &up).is_infinite());
    }
}
