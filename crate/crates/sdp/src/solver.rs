use nalgebra::DMatrix;

use crate::cone::{jordan, max_step_scaled, min_eigenvalue, smat, svec_into, NtBlock};
use crate::kkt::{apply_hinv, Kkt, Structure};
use crate::problem::{svec_len, ProblemError, SdpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Primal feasible to tolerance but optimality was not reached.
    Feasible,
    Infeasible,
    /// The dual is infeasible: the objective decreases without bound.
    Unbounded,
    MaxIterations,
    NumericalError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    /// Relative primal and dual residual tolerance.
    pub tol_feas: f64,
    /// Relative duality gap tolerance.
    pub tol_gap: f64,
    /// Tolerance on normalized Farkas certificates.
    pub tol_infeas: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Prints one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            tol_feas: 1e-7,
            tol_gap: 1e-7,
            tol_infeas: 1e-8,
            max_iter: 200,
            step_fraction: 0.99,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolutionMetrics {
    /// `||A x - b||_inf / (1 + ||b||_inf)`.
    pub primal_residual: f64,
    /// `||c - A'y - s||_inf / (1 + ||c||_inf)`.
    pub dual_residual: f64,
    /// `|c'x - b'y| / (1 + |c'x| + |b'y|)`.
    pub relative_gap: f64,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Stacked primal vector. For `Infeasible` this is the last iterate.
    pub x: Vec<f64>,
    /// Equality multipliers. For `Infeasible` this is the Farkas ray.
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub metrics: SolutionMetrics,
}

impl SdpSolution {
    /// PSD block `k` of the primal solution as a full symmetric matrix.
    pub fn block_matrix(&self, problem: &SdpProblem, k: usize) -> DMatrix<f64> {
        let off = problem.block_offsets()[k];
        let n = problem.psd_blocks[k];
        smat(n, &self.x[off..off + svec_len(n)])
    }

    pub fn free_values<'a>(&'a self, problem: &SdpProblem) -> &'a [f64] {
        let f0 = problem.free_offset();
        &self.x[f0..f0 + problem.free_count]
    }

    pub fn nonneg_values<'a>(&'a self, problem: &SdpProblem) -> &'a [f64] {
        let n0 = problem.nonneg_offset();
        &self.x[n0..n0 + problem.nonneg_count]
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Scaling {
    blocks: Vec<NtBlock>,
    p: Vec<DMatrix<f64>>,
    d: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Solver<'a> {
    prob: &'a SdpProblem,
    st: Structure,
    settings: SdpSettings,
    offsets: Vec<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
    nu: f64,
    best: Option<(f64, Iterate)>,
}

impl<'a> Solver<'a> {
    fn new(prob: &'a SdpProblem, settings: SdpSettings) -> Self {
        let n = prob.num_cols();
        let mut x = vec![0.0; n];
        let mut s = vec![0.0; n];
        let offsets = prob.block_offsets();
        for (k, &bn) in prob.psd_blocks.iter().enumerate() {
            let id = DMatrix::identity(bn, bn);
            svec_into(&id, &mut x[offsets[k]..offsets[k + 1]]);
            svec_into(&id, &mut s[offsets[k]..offsets[k + 1]]);
        }
        let n0 = prob.nonneg_offset();
        for j in 0..prob.nonneg_count {
            x[n0 + j] = 1.0;
            s[n0 + j] = 1.0;
        }
        let nu = prob.psd_blocks.iter().sum::<usize>() as f64 + prob.nonneg_count as f64;
        Solver {
            prob,
            st: Structure::new(prob),
            settings,
            offsets,
            x,
            y: vec![0.0; prob.num_rows()],
            s,
            tau: 1.0,
            kappa: 1.0,
            nu,
            best: None,
        }
    }

    fn is_free(&self, c: usize) -> bool {
        let f0 = self.prob.free_offset();
        c >= f0 && c < f0 + self.prob.free_count
    }

    fn scaling(&self) -> Option<Scaling> {
        let mut blocks = Vec::new();
        let mut p = Vec::new();
        for (k, &n) in self.prob.psd_blocks.iter().enumerate() {
            let r = self.offsets[k]..self.offsets[k + 1];
            let xm = smat(n, &self.x[r.clone()]);
            let sm = smat(n, &self.s[r]);
            let b = NtBlock::new(&xm, &sm)?;
            p.push(b.p.clone());
            blocks.push(b);
        }
        let n0 = self.prob.nonneg_offset();
        let d: Vec<f64> = (0..self.prob.nonneg_count)
            .map(|j| self.x[n0 + j] / self.s[n0 + j])
            .collect();
        if d.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return None;
        }
        Some(Scaling { blocks, p, d })
    }

    fn mu(&self) -> f64 {
        (dot(&self.x, &self.s) + self.tau * self.kappa) / (self.nu + 1.0)
    }

    /// Computes a search direction for residual weight `gamma`, complementarity
    /// right-hand side `r_c` (cone part of `ds + H dx`) and `r_tau`.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        kkt: &Kkt,
        sc: &Scaling,
        second: &(Vec<f64>, Vec<f64>),
        res: &(Vec<f64>, Vec<f64>, f64),
        gamma: f64,
        r_c: &[f64],
        r_tau: f64,
    ) -> Direction {
        let prob = self.prob;
        let (r_p, r_d, r_g) = res;
        let f0 = prob.free_offset();
        let nf = prob.free_count;
        // cone vector gamma r_d,K - r_c
        let mut w: Vec<f64> = r_d.iter().zip(r_c).map(|(a, b)| gamma * a - b).collect();
        for j in 0..nf {
            w[f0 + j] = 0.0;
        }
        let hw = apply_hinv(prob, &sc.p, &sc.d, &w);
        let ahw = prob.apply(&hw);
        let p1: Vec<f64> = r_p.iter().zip(&ahw).map(|(a, b)| gamma * a + b).collect();
        let p2: Vec<f64> = (0..nf).map(|j| gamma * r_d[f0 + j]).collect();
        let (mut dy1, mut dxf1) = kkt.solve(&p1, &p2);
        let target: Vec<f64> = r_p.iter().map(|v| gamma * v).collect();
        let dx1 = self.primal_completion(kkt, sc, &mut dy1, &mut dxf1, &w, &target, &p2);
        let (dy2, dx2) = second;
        let c = &prob.objective;
        let num = gamma * r_g + r_tau / self.tau + dot(c, &dx1) - dot(&prob.rhs, &dy1);
        let den = -dot(c, dx2) + dot(&prob.rhs, dy2) + self.kappa / self.tau;
        let dtau = num / den;
        let dy: Vec<f64> = dy1.iter().zip(dy2).map(|(a, b)| a + dtau * b).collect();
        let dx: Vec<f64> = dx1.iter().zip(dx2).map(|(a, b)| a + dtau * b).collect();
        let aty = prob.apply_transpose(&dy);
        let mut ds: Vec<f64> = (0..prob.num_cols())
            .map(|j| -aty[j] + c[j] * dtau + gamma * r_d[j])
            .collect();
        for j in 0..nf {
            ds[f0 + j] = 0.0;
        }
        let dkappa = (r_tau - self.kappa * dtau) / self.tau;
        Direction { dx, dy, ds, dtau, dkappa }
    }

    /// Completes `dx_K = H^-1 (A_K' dy - w)` and refines `(dy, dx_f)` against
    /// the recomputed residuals of `A dx = target_p`, `A_f' dy = target_f`.
    #[allow(clippy::too_many_arguments)]
    fn primal_completion(
        &self,
        kkt: &Kkt,
        sc: &Scaling,
        dy: &mut [f64],
        dxf: &mut [f64],
        w: &[f64],
        target_p: &[f64],
        target_f: &[f64],
    ) -> Vec<f64> {
        let prob = self.prob;
        let f0 = prob.free_offset();
        let nf = prob.free_count;
        let build = |dy: &[f64], dxf: &[f64]| {
            let mut v = prob.apply_transpose(dy);
            for (c, x) in v.iter_mut().enumerate() {
                if self.is_free(c) {
                    *x = 0.0;
                } else {
                    *x -= w[c];
                }
            }
            let mut dx = apply_hinv(prob, &sc.p, &sc.d, &v);
            dx[f0..f0 + nf].copy_from_slice(dxf);
            dx
        };
        let mut dx = build(dy, dxf);
        for _ in 0..2 {
            let adx = prob.apply(&dx);
            let ep: Vec<f64> = target_p.iter().zip(&adx).map(|(t, a)| t - a).collect();
            let aty = prob.apply_transpose(dy);
            let ef: Vec<f64> = (0..nf).map(|j| target_f[j] - aty[f0 + j]).collect();
            let scale = inf_norm(target_p).max(inf_norm(target_f)).max(1e-300);
            if inf_norm(&ep).max(inf_norm(&ef)) <= 1e-15 * scale {
                break;
            }
            let (zy, zf) = kkt.solve(&ep, &ef);
            for (a, b) in dy.iter_mut().zip(&zy) {
                *a += b;
            }
            for (a, b) in dxf.iter_mut().zip(&zf) {
                *a += b;
            }
            dx = build(dy, dxf);
        }
        dx
    }

    /// Scaled block directions `(r^-1 dX r^-T, r' dS r)`.
    fn scaled_dirs(&self, sc: &Scaling, dir: &Direction) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        self.prob
            .psd_blocks
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let r = self.offsets[k]..self.offsets[k + 1];
                let dxm = smat(n, &dir.dx[r.clone()]);
                let dsm = smat(n, &dir.ds[r]);
                (sc.blocks[k].scale_primal(&dxm), sc.blocks[k].scale_dual(&dsm))
            })
            .collect()
    }

    fn max_step(&self, sc: &Scaling, dir: &Direction, scaled: &[(DMatrix<f64>, DMatrix<f64>)]) -> f64 {
        let mut alpha = f64::INFINITY;
        for (k, (dx, ds)) in scaled.iter().enumerate() {
            alpha = alpha.min(max_step_scaled(&sc.blocks[k].lambda, dx));
            alpha = alpha.min(max_step_scaled(&sc.blocks[k].lambda, ds));
        }
        let n0 = self.prob.nonneg_offset();
        for j in n0..n0 + self.prob.nonneg_count {
            if dir.dx[j] < 0.0 {
                alpha = alpha.min(-self.x[j] / dir.dx[j]);
            }
            if dir.ds[j] < 0.0 {
                alpha = alpha.min(-self.s[j] / dir.ds[j]);
            }
        }
        if dir.dtau < 0.0 {
            alpha = alpha.min(-self.tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / dir.dkappa);
        }
        alpha
    }

    fn residuals(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let prob = self.prob;
        let ax = prob.apply(&self.x);
        let r_p: Vec<f64> = prob.rhs.iter().zip(&ax).map(|(b, a)| b * self.tau - a).collect();
        let aty = prob.apply_transpose(&self.y);
        let r_d: Vec<f64> = (0..prob.num_cols())
            .map(|j| prob.objective[j] * self.tau - aty[j] - self.s[j])
            .collect();
        let r_g = self.kappa + dot(&prob.objective, &self.x) - dot(&prob.rhs, &self.y);
        (r_p, r_d, r_g)
    }

    fn metrics(&self, res: &(Vec<f64>, Vec<f64>, f64)) -> SolutionMetrics {
        let prob = self.prob;
        let t = self.tau;
        let pobj = dot(&prob.objective, &self.x) / t;
        let dobj = dot(&prob.rhs, &self.y) / t;
        SolutionMetrics {
            primal_residual: inf_norm(&res.0) / t / (1.0 + inf_norm(&prob.rhs)),
            dual_residual: inf_norm(&res.1) / t / (1.0 + inf_norm(&prob.objective)),
            relative_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            mu: self.mu() / (t * t),
        }
    }

    fn finish(&self, status: SdpStatus, iterations: usize, metrics: SolutionMetrics) -> SdpSolution {
        let prob = self.prob;
        let (x, y, s) = match status {
            SdpStatus::Infeasible | SdpStatus::Unbounded => (self.x.clone(), self.y.clone(), self.s.clone()),
            _ => {
                let t = self.tau;
                (
                    self.x.iter().map(|v| v / t).collect(),
                    self.y.iter().map(|v| v / t).collect(),
                    self.s.iter().map(|v| v / t).collect(),
                )
            }
        };
        SdpSolution {
            primal_objective: dot(&prob.objective, &x),
            dual_objective: dot(&prob.rhs, &y),
            status,
            x,
            y,
            s,
            iterations,
            metrics,
        }
    }

    fn infeasibility(&self) -> Option<SdpStatus> {
        let prob = self.prob;
        let tol = self.settings.tol_infeas;
        let by = dot(&prob.rhs, &self.y);
        let cx = dot(&prob.objective, &self.x);
        if by > 0.0 {
            let aty = prob.apply_transpose(&self.y);
            let r: Vec<f64> = aty.iter().zip(&self.s).map(|(a, s)| a + s).collect();
            if inf_norm(&r) / by <= tol {
                return Some(SdpStatus::Infeasible);
            }
        }
        if cx < 0.0 {
            let ax = prob.apply(&self.x);
            if inf_norm(&ax) / (-cx) <= tol {
                return Some(SdpStatus::Unbounded);
            }
        }
        if self.tau < 1e-8 * self.kappa.max(1.0) {
            if by > 0.0 && by >= -cx {
                return Some(SdpStatus::Infeasible);
            }
            if cx < 0.0 {
                return Some(SdpStatus::Unbounded);
            }
        }
        None
    }

    fn run(mut self) -> SdpSolution {
        let prob = self.prob;
        let f0 = prob.free_offset();
        let nf = prob.free_count;
        let mut stalls = 0;
        let mut since_best = 0;
        for iter in 0..self.settings.max_iter {
            let res = self.residuals();
            let metrics = self.metrics(&res);
            if !metrics.mu.is_finite() || !metrics.primal_residual.is_finite() {
                return self.finish(SdpStatus::NumericalError, iter, metrics);
            }
            if self.settings.verbose {
                eprintln!(
                    "{iter:3} pres {:.2e} dres {:.2e} gap {:.2e} mu {:.2e} tau {:.2e} kappa {:.2e}",
                    metrics.primal_residual, metrics.dual_residual, metrics.relative_gap, metrics.mu, self.tau, self.kappa
                );
            }
            let tol = self.settings;
            if metrics.primal_residual <= tol.tol_feas
                && metrics.dual_residual <= tol.tol_feas
                && metrics.relative_gap <= tol.tol_gap
            {
                self.polish();
                let metrics = self.metrics(&self.residuals());
                return self.finish(SdpStatus::Optimal, iter, metrics);
            }
            if let Some(st) = self.infeasibility() {
                return self.finish(st, iter, metrics);
            }
            let merit = (metrics.primal_residual / tol.tol_feas)
                .max(metrics.dual_residual / tol.tol_feas)
                .max(metrics.relative_gap / tol.tol_gap);
            if self.best.as_ref().is_none_or(|b| merit < b.0) {
                self.best = Some((merit, self.snapshot()));
                since_best = 0;
            } else {
                since_best += 1;
                // progress beyond the attainable accuracy has stopped
                if since_best >= 6 {
                    return self.fallback(iter);
                }
            }
            let Some(sc) = self.scaling() else {
                return self.fallback(iter);
            };
            let Some(kkt) = Kkt::new(&self.st, &sc.p, &sc.d) else {
                return self.fallback(iter);
            };
            // second right-hand side: (b + A_K H^-1 c_K, c_f)
            let mut ck = prob.objective.clone();
            for j in 0..nf {
                ck[f0 + j] = 0.0;
            }
            let hc = apply_hinv(prob, &sc.p, &sc.d, &ck);
            let ahc = prob.apply(&hc);
            let q1: Vec<f64> = prob.rhs.iter().zip(&ahc).map(|(a, b)| a + b).collect();
            let q2: Vec<f64> = prob.objective[f0..f0 + nf].to_vec();
            let (mut dy2, mut dxf2) = kkt.solve(&q1, &q2);
            let dx2 = self.primal_completion(&kkt, &sc, &mut dy2, &mut dxf2, &ck, &prob.rhs, &q2);
            let second = (dy2, dx2);

            // predictor
            let mut rc: Vec<f64> = self.s.iter().map(|v| -v).collect();
            for j in 0..nf {
                rc[f0 + j] = 0.0;
            }
            let aff = self.direction(&kkt, &sc, &second, &res, 1.0, &rc, -self.tau * self.kappa);
            let aff_scaled = self.scaled_dirs(&sc, &aff);
            let alpha_aff = self.max_step(&sc, &aff, &aff_scaled).min(1.0);
            let mu = self.mu();
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // corrector
            let mut rc = vec![0.0; prob.num_cols()];
            for (k, &n) in prob.psd_blocks.iter().enumerate() {
                let blk = &sc.blocks[k];
                let (dxa, dsa) = &aff_scaled[k];
                let mut t = jordan(dxa, dsa);
                t.neg_mut();
                for i in 0..n {
                    t[(i, i)] += sigma * mu - blk.lambda[i] * blk.lambda[i];
                }
                let m = blk.unscale_complementarity(&t);
                svec_into(&m, &mut rc[self.offsets[k]..self.offsets[k + 1]]);
            }
            let n0 = prob.nonneg_offset();
            for j in n0..n0 + prob.nonneg_count {
                let t = sigma * mu - self.x[j] * self.s[j] - aff.dx[j] * aff.ds[j];
                rc[j] = t / self.x[j];
            }
            let r_tau = sigma * mu - self.tau * self.kappa - aff.dtau * aff.dkappa;
            let dir = self.direction(&kkt, &sc, &second, &res, 1.0 - sigma, &rc, r_tau);
            let scaled = self.scaled_dirs(&sc, &dir);
            let alpha = (self.settings.step_fraction * self.max_step(&sc, &dir, &scaled)).min(1.0);
            if !alpha.is_finite() || dir.dx.iter().any(|v| !v.is_finite()) {
                return self.fallback(iter);
            }
            if alpha < 1e-10 {
                stalls += 1;
                if stalls >= 3 {
                    return self.fallback(iter);
                }
            } else {
                stalls = 0;
            }
            for (v, d) in self.x.iter_mut().zip(&dir.dx) {
                *v += alpha * d;
            }
            for (v, d) in self.y.iter_mut().zip(&dir.dy) {
                *v += alpha * d;
            }
            for (v, d) in self.s.iter_mut().zip(&dir.ds) {
                *v += alpha * d;
            }
            self.tau += alpha * dir.dtau;
            self.kappa += alpha * dir.dkappa;
        }
        self.fallback(self.settings.max_iter)
    }

    /// Weighted least-norm corrections `dx = H^-1 A' dy` with `A dx = b tau - A x`,
    /// kept only while the iterate stays in the cone and the residual drops.
    fn polish(&mut self) {
        let prob = self.prob;
        let nf = prob.free_count;
        let zeros_f = vec![0.0; nf];
        let w = vec![0.0; prob.num_cols()];
        for _ in 0..3 {
            let (r_p, _, _) = self.residuals();
            let before = inf_norm(&r_p);
            if before == 0.0 {
                return;
            }
            let Some(sc) = self.scaling() else { return };
            let Some(kkt) = Kkt::new(&self.st, &sc.p, &sc.d) else { return };
            let (mut dy, mut dxf) = kkt.solve(&r_p, &zeros_f);
            let dx = self.primal_completion(&kkt, &sc, &mut dy, &mut dxf, &w, &r_p, &zeros_f);
            let x: Vec<f64> = self.x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let inside = prob.psd_blocks.iter().enumerate().all(|(k, &n)| {
                min_eigenvalue(&smat(n, &x[self.offsets[k]..self.offsets[k + 1]])) >= 0.0
            }) && x[prob.nonneg_offset()..].iter().all(|v| *v >= 0.0);
            if !inside || x.iter().any(|v| !v.is_finite()) {
                return;
            }
            let ax = prob.apply(&x);
            let after = prob
                .rhs
                .iter()
                .zip(&ax)
                .fold(0.0f64, |m, (b, a)| m.max((b * self.tau - a).abs()));
            if after >= 0.5 * before {
                if after < before {
                    self.x = x;
                }
                return;
            }
            self.x = x;
        }
    }

    fn snapshot(&self) -> Iterate {
        Iterate {
            x: self.x.clone(),
            y: self.y.clone(),
            s: self.s.clone(),
            tau: self.tau,
            kappa: self.kappa,
        }
    }

    /// Restores the best iterate seen and classifies it.
    fn fallback(&mut self, iter: usize) -> SdpSolution {
        if let Some((_, it)) = self.best.take() {
            self.x = it.x;
            self.y = it.y;
            self.s = it.s;
            self.tau = it.tau;
            self.kappa = it.kappa;
        }
        self.polish();
        let res = self.residuals();
        let metrics = self.metrics(&res);
        let status = if metrics.primal_residual <= self.settings.tol_feas
            && metrics.dual_residual <= self.settings.tol_feas
            && metrics.relative_gap <= self.settings.tol_gap
        {
            SdpStatus::Optimal
        } else if metrics.primal_residual <= self.settings.tol_feas {
            SdpStatus::Feasible
        } else if iter >= self.settings.max_iter {
            SdpStatus::MaxIterations
        } else {
            SdpStatus::NumericalError
        };
        self.finish(status, iter, metrics)
    }
}

/// Solves a standard-form problem. Validation failures are reported as errors;
/// numerical trouble is reported through [`SdpStatus`].
pub fn solve(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution, ProblemError> {
    problem.validate()?;
    Ok(Solver::new(problem, *settings).run())
}

