use crate::cone::{min_eigenvalue, smat};
use crate::problem::{svec_len, ProblemError, SdpProblem};

/// Primal quantities recomputed from a candidate stacked vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalMetrics {
    /// `max_i |(A v - b)_i|`.
    pub equality_residual: f64,
    /// Smallest eigenvalue over all PSD blocks (`+inf` without blocks).
    pub min_block_eigenvalue: f64,
    /// Smallest nonnegative scalar (`+inf` without any).
    pub min_nonneg: f64,
    pub objective: f64,
}

/// Dual quantities for multipliers `y`; the dual slack is `c - A' y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualMetrics {
    /// `max |(c - A' y)_free|`, which must vanish.
    pub free_residual: f64,
    pub min_slack_eigenvalue: f64,
    pub min_slack_nonneg: f64,
    pub objective: f64,
}

pub fn residuals(problem: &SdpProblem, v: &[f64]) -> Result<PrimalMetrics, ProblemError> {
    if v.len() != problem.num_cols() {
        return Err(ProblemError::VectorLength {
            got: v.len(),
            expected: problem.num_cols(),
        });
    }
    let av = problem.apply(v);
    let equality_residual = av
        .iter()
        .zip(&problem.rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let (min_block_eigenvalue, min_nonneg) = cone_minima(problem, v);
    let objective = problem.objective.iter().zip(v).map(|(c, x)| c * x).sum();
    Ok(PrimalMetrics {
        equality_residual,
        min_block_eigenvalue,
        min_nonneg,
        objective,
    })
}

pub fn dual_residuals(problem: &SdpProblem, y: &[f64]) -> Result<DualMetrics, ProblemError> {
    if y.len() != problem.num_rows() {
        return Err(ProblemError::VectorLength {
            got: y.len(),
            expected: problem.num_rows(),
        });
    }
    let aty = problem.apply_transpose(y);
    let slack: Vec<f64> = problem.objective.iter().zip(&aty).map(|(c, a)| c - a).collect();
    let f0 = problem.free_offset();
    let free_residual = slack[f0..f0 + problem.free_count]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let (min_slack_eigenvalue, min_slack_nonneg) = cone_minima(problem, &slack);
    let objective = problem.rhs.iter().zip(y).map(|(b, y)| b * y).sum();
    Ok(DualMetrics {
        free_residual,
        min_slack_eigenvalue,
        min_slack_nonneg,
        objective,
    })
}

fn cone_minima(problem: &SdpProblem, v: &[f64]) -> (f64, f64) {
    let mut min_eig = f64::INFINITY;
    let mut off = 0;
    for &n in &problem.psd_blocks {
        let m = smat(n, &v[off..off + svec_len(n)]);
        min_eig = min_eig.min(min_eigenvalue(&m));
        off += svec_len(n);
    }
    let n0 = problem.nonneg_offset();
    let min_nn = v[n0..n0 + problem.nonneg_count]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    (min_eig, min_nn)
}
