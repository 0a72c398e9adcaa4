mod common;

use common::{di_oracle, di_problem, double_integrator, linear_slots};
use hocbf_core::certify::{verify, verify_multi, verify_single, sample_audit, VerificationStatus};
use hocbf_core::poly::{Poly, PolyMat, PolyVec, VarSpace};
use hocbf_core::system::{ControlAffineSystem, HocbfCandidate, SemialgebraicSet};

#[test]
fn double_integrator_is_verified_and_oracle_agrees() {
    let problem = di_problem(0.5, 0.5, 1.0);
    let report = verify_single(&problem).unwrap();
    assert_eq!(report.status, VerificationStatus::Verified, "{:?}", report.checks);
    let audit = report.audit.as_ref().unwrap();
    assert!(audit.accepted >= 100);
    assert!(audit.candidate_min.iter().all(|v| *v >= -1e-6));
    assert!(audit.input_min.iter().all(|v| *v >= -1e-6));
    assert!(audit.clif_min.iter().all(|v| *v >= -1e-6));
    assert!(report.rho[0].is_finite() && report.rho[0] >= 0.0);
    assert!(di_oracle(0.5, 0.5, 1.0, 201).unwrap() >= -1e-6);
    for c in &report.checks {
        assert!(c.passed(), "{c:?}");
    }
}

#[test]
fn tiny_input_box_is_not_verified() {
    let (a1, a2, umax) = (4.0, 0.25, 1e-6);
    // the oracle finds states where no admissible input keeps psi_2 >= 0
    assert!(di_oracle(a1, a2, umax, 201).unwrap() < 0.0);
    let report = verify_single(&di_problem(a1, a2, umax)).unwrap();
    assert!(!report.status.is_verified(), "{:?}", report.status);
}

#[test]
fn plain_cbf_reduction() {
    let s = VarSpace::new(&["x"], &["u"]).unwrap();
    let sys = ControlAffineSystem::new(
        PolyVec::new(vec![Poly::zero(&s)]),
        PolyMat::new(1, 1, vec![Poly::constant(&s, 1.0)]).unwrap(),
    )
    .unwrap();
    let mut problem = di_problem(1.0, 1.0, 1.0);
    problem.candidates = vec![HocbfCandidate::new("x", Poly::var(&s, 0), 1).with_slots(linear_slots(&[1.0]))];
    problem.x_set = SemialgebraicSet::from_box(&s, &[(-1.0, 1.0)]);
    problem.u_set = SemialgebraicSet::input_box(&s, &[(-1.0, 1.0)]);
    problem.clifs.clear();
    problem.system = sys;
    let report = verify_single(&problem).unwrap();
    assert_eq!(report.status, VerificationStatus::Verified);
    assert_eq!(report.certificates.len(), 3);
}

#[test]
fn duplicated_candidates_verify_jointly() {
    let mut problem = di_problem(0.5, 0.5, 1.0);
    let dup = problem.candidates[0].clone();
    problem.candidates.push(dup);
    let report = verify_multi(&problem).unwrap();
    assert_eq!(report.status, VerificationStatus::Verified);
}

#[test]
fn single_and_multi_agree_for_one_candidate() {
    let problem = di_problem(1.0, 2.0, 1.0);
    let a = verify_single(&problem).unwrap();
    let b = verify_multi(&problem).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.rho, b.rho);
}

#[test]
fn disjoint_safe_sets_are_flagged() {
    let mut problem = di_problem(0.5, 0.5, 1.0);
    let s = problem.system.space().clone();
    // x1 >= 1 and x1 <= -1
    let right = HocbfCandidate::new("right", &Poly::var(&s, 0) - &Poly::constant(&s, 1.0), 2)
        .with_slots(linear_slots(&[0.5, 0.5]));
    let left = HocbfCandidate::new("left", &Poly::constant(&s, -1.0) - &Poly::var(&s, 0), 2)
        .with_slots(linear_slots(&[0.5, 0.5]));
    problem.candidates = vec![right, left];
    // x2 >= (1 - x1) / 2 and x2 <= -(1 + x1) / 2 cannot both hold
    let report = verify_multi(&problem).unwrap();
    assert_eq!(report.status, VerificationStatus::EmptySafeSet);
}

#[test]
fn larger_input_box_never_raises_rho() {
    let mut last = f64::INFINITY;
    for umax in [1.0, 2.0, 4.0] {
        let report = verify(&di_problem(0.5, 0.5, umax)).unwrap();
        assert!(report.status.is_verified());
        let rho = report.rho_sum();
        assert!(rho <= last + 1e-6, "rho {rho} after {last}");
        last = rho;
    }
}

#[test]
fn audit_is_reproducible() {
    let problem = di_problem(0.5, 0.5, 1.0);
    let report = verify_single(&problem).unwrap();
    let a = sample_audit(&report, &problem, 2000, 42).unwrap();
    let b = sample_audit(&report, &problem, 2000, 42).unwrap();
    assert_eq!(a, b);
    let _ = double_integrator();
}
