#![allow(dead_code)]

use hocbf_core::certify::{VerificationProblem, VerifyOptions};
use hocbf_core::poly::{Poly, PolyMat, PolyVec, VarSpace};
use hocbf_core::system::{ClassKSlot, ClassKTemplate, Clif, ControlAffineSystem, HocbfCandidate, SemialgebraicSet};

/// `x1' = x2, x2' = u`.
pub fn double_integrator() -> ControlAffineSystem {
    let s = VarSpace::new(&["x1", "x2"], &["u"]).unwrap();
    let f = PolyVec::new(vec![Poly::var(&s, 1), Poly::zero(&s)]);
    let g = PolyMat::new(2, 1, vec![Poly::zero(&s), Poly::constant(&s, 1.0)]).unwrap();
    ControlAffineSystem::new(f, g).unwrap()
}

pub fn linear_slots(gains: &[f64]) -> Vec<ClassKSlot> {
    gains.iter().map(|g| ClassKSlot::Poly(ClassKTemplate::linear(*g))).collect()
}

/// `b = x1` on `[-2, 2]^2` with `|u| <= u_max` and `V = (x1 - 1)^2 + x2^2`.
pub fn di_problem(a1: f64, a2: f64, u_max: f64) -> VerificationProblem {
    let sys = double_integrator();
    let s = sys.space().clone();
    let x1 = Poly::var(&s, 0);
    let x2 = Poly::var(&s, 1);
    let v = &(&(&x1 - &Poly::constant(&s, 1.0)) * &(&x1 - &Poly::constant(&s, 1.0))) + &(&x2 * &x2);
    VerificationProblem {
        x_set: SemialgebraicSet::from_box(&s, &[(-2.0, 2.0), (-2.0, 2.0)]),
        u_set: SemialgebraicSet::input_box(&s, &[(-u_max, u_max)]),
        candidates: vec![HocbfCandidate::new("x1", x1, 2).with_slots(linear_slots(&[a1, a2]))],
        clifs: vec![Clif { name: "goal".into(), v }],
        options: VerifyOptions::default(),
        system: sys,
    }
}

/// Brute-force check on a `k x k` grid of `C_2 ∩ X`: the smallest value of
/// `sup_{|u| <= u_max} psi_2` for linear gains, or `None` when no grid state is in `C_2`.
pub fn di_oracle(a1: f64, a2: f64, u_max: f64, k: usize) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for i in 0..k {
        for j in 0..k {
            let x1 = -2.0 + 4.0 * i as f64 / (k - 1) as f64;
            let x2 = -2.0 + 4.0 * j as f64 / (k - 1) as f64;
            let psi1 = x2 + a1 * x1;
            if psi1 < 0.0 {
                continue;
            }
            // psi_2 = u + a1 x2 + a2 psi1, affine in u
            let best = [-u_max, u_max]
                .iter()
                .map(|u| u + a1 * x2 + a2 * psi1)
                .fold(f64::NEG_INFINITY, f64::max);
            worst = Some(worst.map_or(best, |w: f64| w.min(best)));
        }
    }
    worst
}
