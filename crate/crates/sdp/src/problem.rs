use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("PSD block {0} has dimension zero")]
    EmptyBlock(usize),
    #[error("equality row {0} references no variable")]
    EmptyRow(usize),
    #[error("row {row} references column {col}, but only {ncols} columns exist")]
    ColumnOutOfRange { row: usize, col: usize, ncols: usize },
    #[error("row {0} has a non-finite coefficient or right-hand side")]
    NonFinite(usize),
    #[error("objective has length {got}, expected {expected}")]
    ObjectiveLength { got: usize, expected: usize },
    #[error("right-hand side has length {got}, expected {expected}")]
    RhsLength { got: usize, expected: usize },
    #[error("problem has no equality rows")]
    NoRows,
    #[error("vector has length {got}, expected {expected}")]
    VectorLength { got: usize, expected: usize },
}

/// Number of entries in the svec of an `n x n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(a, b)` (either order) inside the svec of an `n x n` block.
pub fn svec_index(n: usize, a: usize, b: usize) -> usize {
    let (i, j) = if a <= b { (a, b) } else { (b, a) };
    // rows 0..i hold n, n-1, ..., n-i+1 entries
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Reference to one scalar position in the stacked variable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarRef {
    /// Entry `(a, b)` of PSD block `block`; stored once for `a <= b`.
    Psd { block: usize, a: usize, b: usize },
    Free(usize),
    Nonneg(usize),
}

/// Standard-form conic program with PSD blocks, free and nonnegative scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub psd_blocks: Vec<usize>,
    pub free_count: usize,
    pub nonneg_count: usize,
    /// Sparse equality rows as `(column, coefficient)` over the stacked vector.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    /// Dense objective over the stacked vector.
    pub objective: Vec<f64>,
}

impl SdpProblem {
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.psd_blocks.len() + 1);
        let mut acc = 0;
        for &n in &self.psd_blocks {
            off.push(acc);
            acc += svec_len(n);
        }
        off.push(acc);
        off
    }

    pub fn psd_len(&self) -> usize {
        self.psd_blocks.iter().map(|&n| svec_len(n)).sum()
    }

    pub fn free_offset(&self) -> usize {
        self.psd_len()
    }

    pub fn nonneg_offset(&self) -> usize {
        self.psd_len() + self.free_count
    }

    pub fn num_cols(&self) -> usize {
        self.psd_len() + self.free_count + self.nonneg_count
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Column of a variable reference.
    pub fn column(&self, var: VarRef) -> usize {
        match var {
            VarRef::Psd { block, a, b } => {
                self.block_offsets()[block] + svec_index(self.psd_blocks[block], a, b)
            }
            VarRef::Free(j) => self.free_offset() + j,
            VarRef::Nonneg(j) => self.nonneg_offset() + j,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if let Some(k) = self.psd_blocks.iter().position(|&n| n == 0) {
            return Err(ProblemError::EmptyBlock(k));
        }
        if self.rows.is_empty() {
            return Err(ProblemError::NoRows);
        }
        if self.rhs.len() != self.rows.len() {
            return Err(ProblemError::RhsLength {
                got: self.rhs.len(),
                expected: self.rows.len(),
            });
        }
        let ncols = self.num_cols();
        if self.objective.len() != ncols {
            return Err(ProblemError::ObjectiveLength {
                got: self.objective.len(),
                expected: ncols,
            });
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                return Err(ProblemError::EmptyRow(r));
            }
            for &(col, v) in row {
                if col >= ncols {
                    return Err(ProblemError::ColumnOutOfRange { row: r, col, ncols });
                }
                if !v.is_finite() {
                    return Err(ProblemError::NonFinite(r));
                }
            }
            if !self.rhs[r].is_finite() {
                return Err(ProblemError::NonFinite(r));
            }
        }
        Ok(())
    }

    /// `A v` for a stacked vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, a)| a * v[c]).sum())
            .collect()
    }

    /// `A' y` as a stacked vector.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_cols()];
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for &(c, a) in row {
                out[c] += a * yi;
            }
        }
        out
    }

    /// Returns a copy with every row, right-hand side and the objective
    /// multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SdpProblem {
        let mut p = self.clone();
        for row in &mut p.rows {
            for e in row.iter_mut() {
                e.1 *= factor;
            }
        }
        for r in &mut p.rhs {
            *r *= factor;
        }
        for c in &mut p.objective {
            *c *= factor;
        }
        p
    }
}

/// Incremental construction of an [`SdpProblem`] using [`VarRef`]s.
///
/// Coefficients on a PSD entry `(a, b)` with `a != b` refer to the matrix
/// entry `X[a][b]` as it appears in `<A, X>` with `A` symmetric, i.e. the row
/// term `coef * X[a][b]` counts the entry once; the builder converts it to
/// the svec scaling.
#[derive(Debug, Clone, Default)]
pub struct SdpProblemBuilder {
    psd_blocks: Vec<usize>,
    free_count: usize,
    nonneg_count: usize,
    rows: Vec<Vec<(VarRef, f64)>>,
    rhs: Vec<f64>,
    objective: Vec<(VarRef, f64)>,
}

impl SdpProblemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_psd_block(&mut self, n: usize) -> usize {
        self.psd_blocks.push(n);
        self.psd_blocks.len() - 1
    }

    pub fn add_free(&mut self) -> VarRef {
        self.free_count += 1;
        VarRef::Free(self.free_count - 1)
    }

    pub fn add_nonneg(&mut self) -> VarRef {
        self.nonneg_count += 1;
        VarRef::Nonneg(self.nonneg_count - 1)
    }

    /// Adds `sum coef * var = rhs`. PSD terms use matrix-entry semantics.
    pub fn add_row(&mut self, terms: Vec<(VarRef, f64)>, rhs: f64) -> usize {
        self.rows.push(terms);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    pub fn set_objective(&mut self, terms: Vec<(VarRef, f64)>) {
        self.objective = terms;
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn build(self) -> Result<SdpProblem, ProblemError> {
        let mut p = SdpProblem {
            psd_blocks: self.psd_blocks,
            free_count: self.free_count,
            nonneg_count: self.nonneg_count,
            rows: Vec::new(),
            rhs: self.rhs,
            objective: Vec::new(),
        };
        let ncols = p.num_cols();
        let to_col = |p: &SdpProblem, var: VarRef, coef: f64| -> (usize, f64) {
            match var {
                VarRef::Psd { a, b, .. } if a != b => {
                    // term coef * X_ab with X_ab = svec / sqrt(2)
                    (p.column(var), coef / std::f64::consts::SQRT_2)
                }
                _ => (p.column(var), coef),
            }
        };
        let mut rows = Vec::with_capacity(self.rows.len());
        for terms in &self.rows {
            let mut row: Vec<(usize, f64)> = terms.iter().map(|&(v, c)| to_col(&p, v, c)).collect();
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            rows.push(merged);
        }
        let mut obj = vec![0.0; ncols];
        for &(v, c) in &self.objective {
            let (col, val) = to_col(&p, v, c);
            obj[col] += val;
        }
        p.rows = rows;
        p.objective = obj;
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_positions_are_dense_and_ordered() {
        for n in 1..6 {
            let mut seen = Vec::new();
            for a in 0..n {
                for b in a..n {
                    seen.push(svec_index(n, a, b));
                }
            }
            let expect: Vec<usize> = (0..svec_len(n)).collect();
            assert_eq!(seen, expect, "n = {n}");
            assert_eq!(svec_index(n, 1.min(n - 1), 0), svec_index(n, 0, 1.min(n - 1)));
        }
    }

    #[test]
    fn builder_rejects_empty_rows() {
        let mut b = SdpProblemBuilder::new();
        b.add_psd_block(1);
        b.add_row(vec![], 1.0);
        assert_eq!(b.build().unwrap_err(), ProblemError::EmptyRow(0));
    }

    #[test]
    fn builder_rejects_empty_block() {
        let mut b = SdpProblemBuilder::new();
        b.add_psd_block(0);
        let x = b.add_nonneg();
        b.add_row(vec![(x, 1.0)], 1.0);
        assert_eq!(b.build().unwrap_err(), ProblemError::EmptyBlock(0));
    }

    #[test]
    fn offdiagonal_entries_use_svec_scaling() {
        let mut b = SdpProblemBuilder::new();
        let k = b.add_psd_block(2);
        b.add_row(vec![(VarRef::Psd { block: k, a: 0, b: 1 }, 2.0)], 1.0);
        let p = b.build().unwrap();
        assert_eq!(p.rows[0].len(), 1);
        assert!((p.rows[0][0].1 - std::f64::consts::SQRT_2).abs() < 1e-15);
    }
}
