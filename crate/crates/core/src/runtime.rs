//! Online QP safety filter, closed-loop integration and trajectory monitoring.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::poly::{Poly, PolyError};
use crate::system::{full_point, Clif, ControlAffineSystem, HocbfCandidate, RuntimeChain, RuntimeClassK, SystemError};

/// Default quadratic weight on each CLIF slack.
pub const DEFAULT_SLACK_WEIGHT: f64 = 100.0;
/// Margin below which the monitor reports a violation.
pub const MONITOR_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("non-finite value in row for {0}")]
    NonFinite(String),
    #[error("initial state outside companion set {level} of '{candidate}' (psi = {value:e})")]
    InitialStateOutside { candidate: String, level: usize, value: f64 },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Origin of a QP row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Hocbf(usize),
    Clif(usize),
    SlackNonneg(usize),
    InputLower(usize),
    InputUpper(usize),
    General,
}

/// `coeffs . z >= rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub kind: RowKind,
}

/// `min 1/2 z'Hz + c'z` subject to inequality rows, over `z = (u, rho)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpInstance {
    pub m: usize,
    pub slacks: usize,
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub rows: Vec<QpRow>,
}

impl QpInstance {
    /// General QP without input/slack structure; `hessian` must be positive definite.
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>, rows: Vec<QpRow>) -> QpInstance {
        QpInstance {
            m: linear.len(),
            slacks: 0,
            hessian,
            linear,
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        0.5 * z.dot(&(&self.hessian * &z)) + self.linear.dot(&z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    pub z: Vec<f64>,
    /// One multiplier per row, zero for rows outside the final working set.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    /// Largest row violation at the returned point.
    pub violation: f64,
}

impl QpSolution {
    pub fn u(&self, m: usize) -> &[f64] {
        &self.z[..m]
    }
}

/// Precomputed Lie derivatives of a CLIF.
#[derive(Clone, Debug)]
pub struct ClifRuntime {
    pub name: String,
    pub v: Poly,
    pub lf: Poly,
    pub lg: Vec<Poly>,
}

impl ClifRuntime {
    pub fn new(clif: &Clif, sys: &ControlAffineSystem) -> Result<ClifRuntime, RuntimeError> {
        Ok(ClifRuntime {
            name: clif.name.clone(),
            v: clif.v.clone(),
            lf: sys.lie_f(&clif.v)?,
            lg: sys.lie_g(&clif.v)?,
        })
    }

    /// `(L_f V(x), L_g V(x))`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let pt = full_point(self.v.space(), x);
        (self.lf.eval_unchecked(&pt), self.lg.iter().map(|p| p.eval_unchecked(&pt)).collect())
    }
}

/// Assembles the safety-filter QP at state `x`.
///
/// Variables are `(u, rho)`. The objective is `|u - nominal|^2 + sum_k w_k rho_k^2`.
pub fn build_qp(
    x: &[f64],
    chains: &[(String, RuntimeChain)],
    clifs: &[ClifRuntime],
    u_box: &[(f64, f64)],
    nominal: &[f64],
    weights: &[f64],
) -> Result<QpInstance, RuntimeError> {
    let m = u_box.len();
    let k = clifs.len();
    if nominal.len() != m {
        return Err(RuntimeError::Dimension { expected: m, got: nominal.len() });
    }
    if weights.len() != k {
        return Err(RuntimeError::Dimension { expected: k, got: weights.len() });
    }
    let dim = m + k;
    let mut hessian = DMatrix::zeros(dim, dim);
    let mut linear = DVector::zeros(dim);
    for i in 0..m {
        hessian[(i, i)] = 2.0;
        linear[i] = -2.0 * nominal[i];
    }
    for (j, w) in weights.iter().enumerate() {
        hessian[(m + j, m + j)] = 2.0 * w;
    }
    let mut rows = Vec::new();
    for (j, (name, chain)) in chains.iter().enumerate() {
        let vals = chain.eval(x);
        let mut coeffs = vec![0.0; dim];
        coeffs[..m].copy_from_slice(&vals.input_row);
        let rhs = -(vals.lf_last + vals.alpha_r);
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RuntimeError::NonFinite(name.clone()));
        }
        rows.push(QpRow {
            coeffs,
            rhs,
            kind: RowKind::Hocbf(j),
        });
    }
    for (j, c) in clifs.iter().enumerate() {
        let (lf, lg) = c.eval(x);
        let mut coeffs = vec![0.0; dim];
        for (i, v) in lg.iter().enumerate() {
            coeffs[i] = -v;
        }
        coeffs[m + j] = 1.0;
        let rhs = lf;
        if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RuntimeError::NonFinite(c.name.clone()));
        }
        rows.push(QpRow {
            coeffs,
            rhs,
            kind: RowKind::Clif(j),
        });
        let mut nonneg = vec![0.0; dim];
        nonneg[m + j] = 1.0;
        rows.push(QpRow {
            coeffs: nonneg,
            rhs: 0.0,
            kind: RowKind::SlackNonneg(j),
        });
    }
    for (i, &(lo, hi)) in u_box.iter().enumerate() {
        let mut lower = vec![0.0; dim];
        lower[i] = 1.0;
        rows.push(QpRow {
            coeffs: lower,
            rhs: lo,
            kind: RowKind::InputLower(i),
        });
        let mut upper = vec![0.0; dim];
        upper[i] = -1.0;
        rows.push(QpRow {
            coeffs: upper,
            rhs: -hi,
            kind: RowKind::InputUpper(i),
        });
    }
    Ok(QpInstance {
        m,
        slacks: k,
        hessian,
        linear,
        rows,
    })
}

const ELASTIC_PENALTIES: [f64; 4] = [1e3, 1e6, 1e9, 1e12];
const MAX_ITER: usize = 500;

/// Primal active-set method with Bland's rule.
///
/// A feasible start comes from an elastic variable `t >= 0` added to every
/// row with penalty `M t + t^2 / 2`; `M` escalates until `t` leaves the
/// problem or the instance is declared infeasible.
pub fn solve_qp(qp: &QpInstance) -> QpSolution {
    let nrows = qp.rows.len();
    let scale = qp.rows.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);
    let mut last = None;
    for &penalty in &ELASTIC_PENALTIES {
        let (z, t, lambda, iters, t_active, converged) = elastic_active_set(qp, penalty);
        let violation = max_violation(qp, &z);
        let exact = t_active || t <= 1e-12 * scale;
        let status = if !converged {
            QpStatus::IterationLimit
        } else if exact && violation <= 1e-9 * scale {
            QpStatus::Optimal
        } else {
            QpStatus::Infeasible
        };
        let sol = QpSolution {
            status,
            z,
            multipliers: lambda[..nrows].to_vec(),
            iterations: iters,
            violation,
        };
        if status == QpStatus::Optimal {
            return sol;
        }
        last = Some(sol);
    }
    last.expect("at least one penalty")
}

fn max_violation(qp: &QpInstance, z: &[f64]) -> f64 {
    qp.rows
        .iter()
        .map(|r| r.rhs - dot(&r.coeffs, z))
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns `(z, t, multipliers incl. the t >= 0 row, iterations, t row active, converged)`.
fn elastic_active_set(qp: &QpInstance, penalty: f64) -> (Vec<f64>, f64, Vec<f64>, usize, bool, bool) {
    let n = qp.dim();
    let nv = n + 1;
    let nrows = qp.rows.len();
    // Row nrows is t >= 0.
    let row = |i: usize| -> (Vec<f64>, f64) {
        if i < nrows {
            let mut a = qp.rows[i].coeffs.clone();
            a.push(1.0);
            (a, qp.rows[i].rhs)
        } else {
            let mut a = vec![0.0; nv];
            a[n] = 1.0;
            (a, 0.0)
        }
    };
    let rows: Vec<(Vec<f64>, f64)> = (0..=nrows).map(row).collect();
    let mut h = DMatrix::zeros(nv, nv);
    h.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
    h[(n, n)] = 1.0;
    let mut c = DVector::zeros(nv);
    c.rows_mut(0, n).copy_from(&qp.linear);
    c[n] = penalty;

    let z0 = qp
        .hessian
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&(-&qp.linear)))
        .unwrap_or_else(|| DVector::zeros(n));
    let mut x: Vec<f64> = z0.iter().copied().collect();
    let t0 = qp
        .rows
        .iter()
        .map(|r| r.rhs - dot(&r.coeffs, &x))
        .fold(0.0, f64::max);
    x.push(t0);

    let mut working: Vec<usize> = Vec::new();
    if t0 == 0.0 {
        working.push(nrows);
    }
    let xscale = |x: &[f64]| x.iter().fold(1.0, |a: f64, v| a.max(v.abs()));
    let mut lambda_full = vec![0.0; nrows + 1];
    let mut at_subspace_min = false;
    for iter in 0..MAX_ITER {
        let grad = {
            let xv = DVector::from_column_slice(&x);
            &h * &xv + &c
        };
        let (p, lam) = match solve_eqp(&h, &grad, &rows, &working) {
            Some(v) => v,
            None => break,
        };
        let pnorm = p.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        // After an unblocked full step, or with a full-rank working set, the
        // exact step is zero and `p` is roundoff.
        if at_subspace_min || working.len() == nv || pnorm <= 1e-13 * xscale(&x) {
            at_subspace_min = false;
            let gscale = grad.iter().fold(1.0, |a: f64, v| a.max(v.abs()));
            // Bland: drop the lowest-index row with a negative multiplier.
            let drop = working
                .iter()
                .zip(&lam)
                .filter(|(_, &l)| l < -1e-12 * gscale)
                .map(|(&i, _)| i)
                .min();
            match drop {
                None => {
                    lambda_full.iter_mut().for_each(|l| *l = 0.0);
                    for (&i, &l) in working.iter().zip(&lam) {
                        lambda_full[i] = l;
                    }
                    let t_active = working.contains(&nrows);
                    let t = x[n];
                    x.truncate(n);
                    return (x, t, lambda_full, iter + 1, t_active, true);
                }
                Some(i) => working.retain(|&w| w != i),
            }
        } else {
            let mut alpha = 1.0;
            let mut block: Option<usize> = None;
            for (i, (a, b)) in rows.iter().enumerate() {
                if working.contains(&i) {
                    continue;
                }
                let ap = dot(a, &p);
                if ap < -1e-14 * a.iter().fold(0.0, |m: f64, v| m.max(v.abs())) * pnorm {
                    let step = ((b - dot(a, &x)) / ap).max(0.0);
                    // Bland: ties go to the lowest index, which is visited first.
                    if step < alpha - 1e-15 || (block.is_none() && step <= alpha) {
                        alpha = step;
                        block = Some(i);
                    }
                }
            }
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += alpha * pi;
            }
            match block {
                Some(i) => working.push(i),
                None => at_subspace_min = true,
            }
        }
    }
    let t = x[n];
    let t_active = working.contains(&nrows);
    x.truncate(n);
    (x, t, lambda_full, MAX_ITER, t_active, false)
}

/// Equality-constrained step: `min 1/2 p'Hp + g'p` with `a_i . p = 0` on the working set.
fn solve_eqp(
    h: &DMatrix<f64>,
    grad: &DVector<f64>,
    rows: &[(Vec<f64>, f64)],
    working: &[usize],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let nv = h.nrows();
    let w = working.len();
    let mut k = DMatrix::zeros(nv + w, nv + w);
    k.view_mut((0, 0), (nv, nv)).copy_from(h);
    let mut rhs = DVector::zeros(nv + w);
    for i in 0..nv {
        rhs[i] = -grad[i];
    }
    for (j, &r) in working.iter().enumerate() {
        for i in 0..nv {
            k[(i, nv + j)] = -rows[r].0[i];
            k[(nv + j, i)] = rows[r].0[i];
        }
    }
    let sol = k.lu().solve(&rhs)?;
    let p = sol.rows(0, nv).iter().copied().collect();
    let lam = sol.rows(nv, w).iter().copied().collect();
    Some((p, lam))
}

/// Componentwise KKT residuals, recomputed from the instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

pub fn kkt_residual(qp: &QpInstance, z: &[f64], multipliers: &[f64]) -> KktResidual {
    let zv = DVector::from_column_slice(z);
    let mut stat = &qp.hessian * &zv + &qp.linear;
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (r, &l) in qp.rows.iter().zip(multipliers) {
        for (s, a) in stat.iter_mut().zip(&r.coeffs) {
            *s -= l * a;
        }
        let slack = dot(&r.coeffs, z) - r.rhs;
        primal = primal.max(-slack);
        dual = dual.max(-l);
        comp = comp.max((l * slack).abs());
    }
    KktResidual {
        stationarity: stat.amax(),
        primal,
        dual,
        complementarity: comp,
    }
}

/// Classical fourth-order Runge-Kutta step with `u` held constant.
pub fn step_rk4(sys: &ControlAffineSystem, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>, RuntimeError> {
    if !(dt > 0.0) {
        return Err(RuntimeError::NonPositiveStep(dt));
    }
    let shift = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> { base.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = sys.rhs(x, u);
    let k2 = sys.rhs(&shift(x, &k1, dt / 2.0), u);
    let k3 = sys.rhs(&shift(x, &k2, dt / 2.0), u);
    let k4 = sys.rhs(&shift(x, &k3, dt), u);
    Ok((0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Safety filter: certified chains, CLIFs, input box and nominal controller.
#[derive(Clone, Debug)]
pub struct Controller {
    pub system: ControlAffineSystem,
    pub chains: Vec<(String, RuntimeChain)>,
    pub clifs: Vec<ClifRuntime>,
    pub u_box: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
    /// `None` means the zero nominal input.
    pub nominal: Option<Vec<Poly>>,
}

impl Controller {
    pub fn new(
        system: &ControlAffineSystem,
        candidates: &[HocbfCandidate],
        clifs: &[Clif],
        u_box: &[(f64, f64)],
    ) -> Result<Controller, RuntimeError> {
        if u_box.len() != system.m() {
            return Err(RuntimeError::Dimension {
                expected: system.m(),
                got: u_box.len(),
            });
        }
        let chains = candidates
            .iter()
            .map(|c| Ok((c.name.clone(), RuntimeChain::new(c, system)?)))
            .collect::<Result<Vec<_>, RuntimeError>>()?;
        let clifs = clifs
            .iter()
            .map(|c| ClifRuntime::new(c, system))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Controller {
            system: system.clone(),
            weights: vec![DEFAULT_SLACK_WEIGHT; clifs.len()],
            chains,
            clifs,
            u_box: u_box.to_vec(),
            nominal: None,
        })
    }

    /// Per-candidate runtime modes, indexed like the candidates.
    pub fn with_modes(mut self, modes: &[Vec<RuntimeClassK>]) -> Controller {
        for ((_, chain), m) in self.chains.iter_mut().zip(modes) {
            *chain = chain.clone().with_modes(m);
        }
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Controller {
        self.weights = weights;
        self
    }

    pub fn with_nominal(mut self, nominal: Vec<Poly>) -> Controller {
        self.nominal = Some(nominal);
        self
    }

    pub fn nominal_at(&self, x: &[f64]) -> Vec<f64> {
        match &self.nominal {
            None => vec![0.0; self.u_box.len()],
            Some(ps) => {
                let pt = full_point(self.system.space(), x);
                ps.iter().map(|p| p.eval_unchecked(&pt)).collect()
            }
        }
    }

    pub fn qp(&self, x: &[f64]) -> Result<QpInstance, RuntimeError> {
        build_qp(x, &self.chains, &self.clifs, &self.u_box, &self.nominal_at(x), &self.weights)
    }

    /// `psi_0 .. psi_{r-1}` of every candidate at `x`.
    pub fn chain_values(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.chains.iter().map(|(_, c)| c.eval(x).psis).collect()
    }

    /// Minimum over the chain of every candidate at `x`.
    pub fn margins(&self, x: &[f64]) -> Vec<f64> {
        self.chain_values(x)
            .iter()
            .map(|p| p.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Position-type goal `|x[vars] - target| <= tol`.
#[derive(Clone, Debug, PartialEq)]
pub struct Goal {
    pub vars: Vec<usize>,
    pub target: Vec<f64>,
}

impl Goal {
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(&self.target)
            .map(|(&i, t)| (x[i] - t).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub goal: Option<Goal>,
    pub goal_tol: f64,
    pub u_tol: f64,
    pub v_tol: f64,
    pub deadlock_window: usize,
    /// State indices whose norm is the speed in the deadlock test; empty uses `|x'|`.
    pub speed_vars: Vec<usize>,
}

impl Default for SimOptions {
    fn default() -> SimOptions {
        SimOptions {
            dt: 0.05,
            horizon: 60.0,
            goal: None,
            goal_tol: 0.5,
            u_tol: 1e-3,
            v_tol: 1e-3,
            deadlock_window: 40,
            speed_vars: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    GoalReached,
    QpInfeasible,
    Deadlock,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::GoalReached => "goal_reached",
            Termination::QpInfeasible => "qp_infeasible",
            Termination::Deadlock => "deadlock",
        }
    }
}

/// Closed-loop run. `inputs[i]` and `slacks[i]` act on `[times[i], times[i+1])`,
/// so they hold one entry fewer than `states`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub slacks: Vec<Vec<f64>>,
    pub margins: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn simulate(ctrl: &Controller, x0: &[f64], opts: &SimOptions) -> Result<Trajectory, RuntimeError> {
    if !(opts.dt > 0.0) {
        return Err(RuntimeError::NonPositiveStep(opts.dt));
    }
    if x0.len() != ctrl.system.n() {
        return Err(RuntimeError::Dimension {
            expected: ctrl.system.n(),
            got: x0.len(),
        });
    }
    for ((name, _), psis) in ctrl.chains.iter().zip(ctrl.chain_values(x0)) {
        if let Some((level, &value)) = psis.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(RuntimeError::InitialStateOutside {
                candidate: name.clone(),
                level,
                value,
            });
        }
    }
    let steps = (opts.horizon / opts.dt).round() as usize;
    let m = ctrl.system.m();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        inputs: Vec::new(),
        slacks: Vec::new(),
        margins: vec![ctrl.margins(x0)],
        termination: Termination::Horizon,
    };
    let mut x = x0.to_vec();
    let mut idle = 0usize;
    for step in 0..=steps {
        if let Some(goal) = &opts.goal {
            if goal.distance(&x) <= opts.goal_tol {
                traj.termination = Termination::GoalReached;
                break;
            }
        }
        if step == steps {
            break;
        }
        let qp = ctrl.qp(&x)?;
        let sol = solve_qp(&qp);
        if sol.status != QpStatus::Optimal {
            traj.termination = Termination::QpInfeasible;
            break;
        }
        // Box rows are hard; clamping only removes roundoff.
        let u: Vec<f64> = sol.z[..m]
            .iter()
            .zip(&ctrl.u_box)
            .map(|(v, &(lo, hi))| v.clamp(lo, hi))
            .collect();
        let rho: Vec<f64> = sol.z[m..].iter().map(|r| r.max(0.0)).collect();
        let speed = if opts.speed_vars.is_empty() {
            norm(&ctrl.system.rhs(&x, &u))
        } else {
            opts.speed_vars.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt()
        };
        idle = if norm(&u) <= opts.u_tol && speed <= opts.v_tol { idle + 1 } else { 0 };
        x = step_rk4(&ctrl.system, &x, &u, opts.dt)?;
        traj.inputs.push(u);
        traj.slacks.push(rho);
        traj.times.push((step + 1) as f64 * opts.dt);
        traj.margins.push(ctrl.margins(&x));
        traj.states.push(x.clone());
        if idle >= opts.deadlock_window {
            traj.termination = Termination::Deadlock;
            break;
        }
    }
    Ok(traj)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Runs independent simulations in parallel; output order follows `x0s`.
pub fn simulate_batch(
    ctrl: &Controller,
    x0s: &[Vec<f64>],
    opts: &SimOptions,
) -> Vec<Result<Trajectory, RuntimeError>> {
    x0s.par_iter().map(|x0| simulate(ctrl, x0, opts)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub time: f64,
    pub candidate: usize,
    pub level: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SafetySummary {
    /// `minima[j][i]` is the smallest `psi_i` of candidate `j` over the run.
    pub minima: Vec<Vec<f64>>,
    pub first_violation: Option<Violation>,
    pub deadlock: bool,
}

impl SafetySummary {
    /// Smallest `psi_0` over all candidates.
    pub fn min_psi0(&self) -> f64 {
        self.minima.iter().map(|m| m[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn is_safe(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Recomputes every `psi_i` along the stored states.
pub fn monitor(traj: &Trajectory, ctrl: &Controller) -> SafetySummary {
    let mut summary = SafetySummary {
        minima: Vec::new(),
        first_violation: None,
        deadlock: traj.termination == Termination::Deadlock,
    };
    if traj.states.is_empty() {
        return summary;
    }
    summary.minima = ctrl.chains.iter().map(|(_, c)| vec![f64::INFINITY; c.r()]).collect();
    for (step, x) in traj.states.iter().enumerate() {
        for (j, psis) in ctrl.chain_values(x).iter().enumerate() {
            for (i, &v) in psis.iter().enumerate() {
                let slot = &mut summary.minima[j][i];
                *slot = slot.min(v);
                if summary.first_violation.is_none() && !(v >= -MONITOR_TOL) {
                    summary.first_violation = Some(Violation {
                        step,
                        time: traj.times[step],
                        candidate: j,
                        level: i,
                        value: v,
                    });
                }
            }
        }
    }
    summary
}
