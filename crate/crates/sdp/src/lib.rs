//! Dense primal-dual interior-point solver for standard-form semidefinite
//! programs at desk scale.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    c' v
//!     subject to  A v = b
//!                 v = (svec(X_1), ..., svec(X_k), free, nonneg)
//!                 X_i PSD, nonneg >= 0
//! ```
//!
//! where `svec` stacks the upper triangle of a symmetric matrix row by row
//! with off-diagonal entries scaled by `sqrt(2)`, so that
//! `<X, Y> = svec(X) . svec(Y)`.
//!
//! The solver runs Mehrotra predictor-corrector steps on the homogeneous
//! self-dual embedding with Nesterov-Todd scaling. Equality rows that share no
//! cone variable are factored independently, which keeps sums-of-squares
//! programs made of many loosely coupled memberships cheap.

mod cone;
mod kkt;
mod problem;
mod residual;
mod solver;

pub use problem::{svec_index, svec_len, ProblemError, SdpProblem, SdpProblemBuilder, VarRef};
pub use residual::{dual_residuals, residuals, DualMetrics, PrimalMetrics};
pub use solver::{solve, SdpSettings, SdpSolution, SdpStatus, SolutionMetrics};
