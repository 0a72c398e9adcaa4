//! Reduced Newton system `M = A_K H^-1 A_K'` bordered by free columns.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::f64::consts::SQRT_2;

use crate::problem::{svec_len, SdpProblem};

/// Sparsity layout of the constraint matrix, computed once per problem.
#[derive(Debug, Clone)]
pub(crate) struct Structure {
    /// Per PSD block: rows touching it, each with full-matrix entries `(a, b, w)`
    /// where off-diagonal svec coefficients appear twice with weight `v / sqrt 2`.
    block_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    /// Per nonnegative column: `(row, coef)`.
    nonneg_rows: Vec<Vec<(usize, f64)>>,
    /// Per row: `(free index, coef)`.
    row_free: Vec<Vec<(usize, f64)>>,
    pub groups: Vec<Vec<usize>>,
    /// Row to `(group, position in group)`.
    local: Vec<(usize, usize)>,
    pub free_count: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl Structure {
    pub fn new(problem: &SdpProblem) -> Structure {
        let nb = problem.psd_blocks.len();
        let f0 = problem.free_offset();
        let n0 = problem.nonneg_offset();
        // column -> (block, a, b) for PSD columns
        let mut col_entry = Vec::with_capacity(problem.psd_len());
        for (k, &n) in problem.psd_blocks.iter().enumerate() {
            for a in 0..n {
                for b in a..n {
                    col_entry.push((k, a, b));
                }
            }
        }
        let m = problem.num_rows();
        let mut block_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); nb];
        let mut nonneg_rows = vec![Vec::new(); problem.nonneg_count];
        let mut row_free = vec![Vec::new(); m];
        let mut parent: Vec<usize> = (0..m).collect();
        let mut block_anchor = vec![usize::MAX; nb];
        let mut nn_anchor = vec![usize::MAX; problem.nonneg_count];
        for (r, row) in problem.rows.iter().enumerate() {
            for &(c, v) in row {
                if c < f0 {
                    let (k, a, b) = col_entry[c];
                    let list = &mut block_rows[k];
                    if list.last().map(|e| e.0) != Some(r) {
                        list.push((r, Vec::new()));
                    }
                    let ent = &mut list.last_mut().unwrap().1;
                    if a == b {
                        ent.push((a, a, v));
                    } else {
                        ent.push((a, b, v / SQRT_2));
                        ent.push((b, a, v / SQRT_2));
                    }
                    let anchor = &mut block_anchor[k];
                    if *anchor == usize::MAX {
                        *anchor = r;
                    } else {
                        let (x, y) = (find(&mut parent, *anchor), find(&mut parent, r));
                        parent[x] = y;
                    }
                } else if c < n0 {
                    row_free[r].push((c - f0, v));
                } else {
                    let j = c - n0;
                    nonneg_rows[j].push((r, v));
                    let anchor = &mut nn_anchor[j];
                    if *anchor == usize::MAX {
                        *anchor = r;
                    } else {
                        let (x, y) = (find(&mut parent, *anchor), find(&mut parent, r));
                        parent[x] = y;
                    }
                }
            }
        }
        let mut root_group = vec![usize::MAX; m];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut local = vec![(0, 0); m];
        for r in 0..m {
            let root = find(&mut parent, r);
            if root_group[root] == usize::MAX {
                root_group[root] = groups.len();
                groups.push(Vec::new());
            }
            let g = root_group[root];
            local[r] = (g, groups[g].len());
            groups[g].push(r);
        }
        Structure {
            block_rows,
            nonneg_rows,
            row_free,
            groups,
            local,
            free_count: problem.free_count,
        }
    }
}

/// Factored reduced system for one interior-point iteration.
pub(crate) struct Kkt<'a> {
    st: &'a Structure,
    m: Vec<DMatrix<f64>>,
    chol: Vec<Cholesky<f64, Dyn>>,
    af: Vec<DMatrix<f64>>,
    minv_af: Vec<DMatrix<f64>>,
    s_chol: Option<Cholesky<f64, Dyn>>,
}

fn regularized_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Some(c);
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut delta = 1e-14 * scale;
    for _ in 0..12 {
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += delta;
        }
        if let Some(c) = reg.cholesky() {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}

impl<'a> Kkt<'a> {
    /// Assembles and factors the system for scaling points `p` (one per PSD
    /// block, `H^-1 u = p u p`) and nonnegative scalings `d` (`H^-1 = d`).
    pub fn new(st: &'a Structure, p: &[DMatrix<f64>], d: &[f64]) -> Option<Kkt<'a>> {
        let mut m: Vec<DMatrix<f64>> = st
            .groups
            .iter()
            .map(|g| DMatrix::zeros(g.len(), g.len()))
            .collect();
        for (k, rows) in st.block_rows.iter().enumerate() {
            let pk = &p[k];
            let n = pk.nrows();
            let mut y = DMatrix::zeros(n, n);
            for (jpos, (rj, ej)) in rows.iter().enumerate() {
                y.fill(0.0);
                if ej.len() * n > 2 * n * n {
                    let mut a = DMatrix::zeros(n, n);
                    for &(c, d, w) in ej {
                        a[(c, d)] += w;
                    }
                    y = pk * a * pk;
                } else {
                    for &(c, d, w) in ej {
                        y.ger(w, &pk.column(c), &pk.column(d), 1.0);
                    }
                }
                let (g, lj) = st.local[*rj];
                let mg = &mut m[g];
                for (ri, ei) in &rows[jpos..] {
                    let val: f64 = ei.iter().map(|&(a, b, w)| w * y[(a, b)]).sum();
                    let li = st.local[*ri].1;
                    mg[(li, lj)] += val;
                    if li != lj {
                        mg[(lj, li)] += val;
                    }
                }
            }
        }
        for (j, rows) in st.nonneg_rows.iter().enumerate() {
            for (x, &(ri, vi)) in rows.iter().enumerate() {
                let (g, li) = st.local[ri];
                for &(rj, vj) in &rows[x..] {
                    let lj = st.local[rj].1;
                    let val = vi * vj * d[j];
                    m[g][(li, lj)] += val;
                    if li != lj {
                        m[g][(lj, li)] += val;
                    }
                }
            }
        }
        let mut chol = Vec::with_capacity(m.len());
        for mg in &m {
            chol.push(regularized_cholesky(mg)?);
        }
        let nf = st.free_count;
        let mut af = Vec::with_capacity(m.len());
        let mut minv_af = Vec::with_capacity(m.len());
        let mut s = DMatrix::zeros(nf, nf);
        for (g, rows) in st.groups.iter().enumerate() {
            let mut a = DMatrix::zeros(rows.len(), nf);
            for (li, &r) in rows.iter().enumerate() {
                for &(f, v) in &st.row_free[r] {
                    a[(li, f)] += v;
                }
            }
            let z = if nf > 0 { chol[g].solve(&a) } else { a.clone() };
            if nf > 0 {
                s += a.transpose() * &z;
            }
            af.push(a);
            minv_af.push(z);
        }
        let s_chol = if nf > 0 {
            let mut s2 = s.clone();
            crate::cone::symmetrize(&mut s2);
            Some(regularized_cholesky(&s2)?)
        } else {
            None
        };
        Some(Kkt {
            st,
            m,
            chol,
            af,
            minv_af,
            s_chol,
        })
    }

    fn solve_once(&self, p1: &[f64], p2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nf = self.st.free_count;
        let mut dy = vec![0.0; p1.len()];
        let mut p1g = Vec::with_capacity(self.st.groups.len());
        for rows in &self.st.groups {
            p1g.push(DVector::from_iterator(rows.len(), rows.iter().map(|&r| p1[r])));
        }
        let mut dxf = DVector::zeros(nf);
        if let Some(sc) = &self.s_chol {
            let mut rhs = -DVector::from_column_slice(p2);
            for (g, v) in p1g.iter().enumerate() {
                rhs += self.minv_af[g].transpose() * v;
            }
            dxf = sc.solve(&rhs);
        }
        for (g, rows) in self.st.groups.iter().enumerate() {
            let mut v = p1g[g].clone();
            if nf > 0 {
                v -= &self.af[g] * &dxf;
            }
            let sol = self.chol[g].solve(&v);
            for (li, &r) in rows.iter().enumerate() {
                dy[r] = sol[li];
            }
        }
        (dy, dxf.iter().cloned().collect())
    }

    fn apply(&self, dy: &[f64], dxf: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nf = self.st.free_count;
        let dxf_v = DVector::from_column_slice(dxf);
        let mut o1 = vec![0.0; dy.len()];
        let mut o2 = DVector::zeros(nf);
        for (g, rows) in self.st.groups.iter().enumerate() {
            let v = DVector::from_iterator(rows.len(), rows.iter().map(|&r| dy[r]));
            let mut w = &self.m[g] * &v;
            if nf > 0 {
                w += &self.af[g] * &dxf_v;
                o2 += self.af[g].transpose() * &v;
            }
            for (li, &r) in rows.iter().enumerate() {
                o1[r] = w[li];
            }
        }
        (o1, o2.iter().cloned().collect())
    }

    /// Solves `[M A_f; A_f' 0] [dy; dx_f] = [p1; p2]` with iterative refinement.
    pub fn solve(&self, p1: &[f64], p2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut dy, mut dxf) = self.solve_once(p1, p2);
        let norm = |a: &[f64], b: &[f64]| {
            a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()))
        };
        let target = 1e-14 * norm(p1, p2).max(1e-300);
        let mut last = f64::INFINITY;
        for _ in 0..4 {
            let (o1, o2) = self.apply(&dy, &dxf);
            let r1: Vec<f64> = p1.iter().zip(&o1).map(|(a, b)| a - b).collect();
            let r2: Vec<f64> = p2.iter().zip(&o2).map(|(a, b)| a - b).collect();
            let res = norm(&r1, &r2);
            if res <= target || res >= 0.5 * last {
                break;
            }
            last = res;
            let (cy, cf) = self.solve_once(&r1, &r2);
            for (a, b) in dy.iter_mut().zip(&cy) {
                *a += b;
            }
            for (a, b) in dxf.iter_mut().zip(&cf) {
                *a += b;
            }
        }
        (dy, dxf)
    }
}

/// `H^-1 u` on the cone part of a stacked vector; free entries are zeroed.
pub(crate) fn apply_hinv(problem: &SdpProblem, p: &[DMatrix<f64>], d: &[f64], u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    let mut off = 0;
    for (k, &n) in problem.psd_blocks.iter().enumerate() {
        let len = svec_len(n);
        let um = crate::cone::smat(n, &u[off..off + len]);
        let w = &p[k] * um * &p[k];
        crate::cone::svec_into(&w, &mut out[off..off + len]);
        off += len;
    }
    let n0 = problem.nonneg_offset();
    for j in 0..problem.nonneg_count {
        out[n0 + j] = d[j] * u[n0 + j];
    }
    out
}
