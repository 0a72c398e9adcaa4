mod common;

use common::double_integrator;
use hocbf_core::certify::{verify_multi, VerificationProblem, VerificationStatus};
use hocbf_core::poly::Poly;
use hocbf_core::synth::{
    synth_all, synth_stage_a, synth_stage_b, StageAInput, StageResult, SynthesisContext, SynthesisOptions,
};
use hocbf_core::system::{Clif, HocbfCandidate, SemialgebraicSet};

struct Setup {
    sys: hocbf_core::system::ControlAffineSystem,
    x_set: SemialgebraicSet,
    u_set: SemialgebraicSet,
    clifs: Vec<Clif>,
}

fn setup() -> Setup {
    let sys = double_integrator();
    let s = sys.space().clone();
    let x1 = Poly::var(&s, 0);
    let x2 = Poly::var(&s, 1);
    let v = &(&(&x1 - &Poly::constant(&s, 1.0)) * &(&x1 - &Poly::constant(&s, 1.0))) + &(&x2 * &x2);
    Setup {
        x_set: SemialgebraicSet::from_box(&s, &[(-2.0, 2.0), (-2.0, 2.0)]),
        u_set: SemialgebraicSet::input_box(&s, &[(-1.0, 1.0)]),
        clifs: vec![Clif { name: "goal".into(), v }],
        sys,
    }
}

fn position(s: &Setup, name: &str, sign: f64, offset: f64) -> HocbfCandidate {
    let sp = s.sys.space();
    HocbfCandidate::new(name, &Poly::var(sp, 0).scale(sign) + &Poly::constant(sp, offset), 2)
}

#[test]
fn drift_only_stage_a_fails_and_decision_input_hits_oracle_bound() {
    let s = setup();
    let ctx = SynthesisContext {
        system: &s.sys,
        x_set: &s.x_set,
        u_set: &s.u_set,
        clifs: &s.clifs,
        generators: vec![],
    };
    let cand = position(&s, "x1", 1.0, 0.0);
    let drift = SynthesisOptions {
        stage_a_input: StageAInput::DriftOnly,
        ..SynthesisOptions::default()
    };
    assert!(matches!(synth_stage_a(&cand, 2, &ctx, &drift).unwrap(), StageResult::Failed { .. }));
    // psi_0'' = u_a(x) with |u_a| <= 1, so the largest admissible b_1 is 1
    match synth_stage_a(&cand, 2, &ctx, &SynthesisOptions::default()).unwrap() {
        StageResult::Done(out) => {
            assert!((out.beta[0] - 1.0).abs() < 1e-4, "{:?}", out.beta);
            assert!(out.record.passed());
        }
        StageResult::Failed { reason, .. } => panic!("{reason}"),
    }
}

#[test]
fn plain_cbf_needs_only_stage_b() {
    let s = setup();
    let sp = s.sys.space();
    // b = x2 has relative degree one under the double integrator
    let cand = HocbfCandidate::new("v", &Poly::var(sp, 1) + &Poly::constant(sp, 1.0), 1);
    let res = synth_all(&[cand], &s.sys, &s.x_set, &s.u_set, &s.clifs, &SynthesisOptions::default()).unwrap();
    assert_eq!(res.sdp_count, 1);
    assert!(res.succeeded(), "{:?}", res.failure);
    assert!(res.chains[0].slots.is_empty());
    assert!(res.chains[0].alpha_r[0] > 0.0);
}

#[test]
fn double_integrator_synthesis_passes_verifier() {
    let s = setup();
    let cand = position(&s, "x1", 1.0, 0.0);
    let res = synth_all(std::slice::from_ref(&cand), &s.sys, &s.x_set, &s.u_set, &s.clifs, &SynthesisOptions::default()).unwrap();
    assert!(res.succeeded(), "{:?}", res.failure);
    assert_eq!(res.sdp_count, 2);
    let chain = &res.chains[0];
    let slot = &chain.slots[0];
    assert!((slot.sqrt.a - (2.0 * slot.beta[0]).sqrt()).abs() < 1e-15);
    // a sqrt(z) >= eta z and eta z <= sqrt(2 beta(z)) on the grid
    for k in 0..1000 {
        let z = slot.zeta_bar * k as f64 / 999.0;
        assert!(slot.sqrt.a * z.sqrt() >= slot.eta * z - 1e-12);
        assert!(slot.eta * z <= (2.0 * slot.beta[0] * z).sqrt() + 1e-12);
    }
    assert!(chain.alpha_r.iter().all(|a| *a >= 0.0) && chain.alpha_r[0] >= 1e-9);
    assert!(chain.stages.iter().all(|st| st.passed()));

    // direct stage (b) on the synthesized slot reproduces a feasible result
    let ctx = SynthesisContext {
        system: &s.sys,
        x_set: &s.x_set,
        u_set: &s.u_set,
        clifs: &s.clifs,
        generators: vec![],
    };
    let mut work = chain.candidate(&cand);
    work.slots[1] = hocbf_core::system::ClassKSlot::Unknown;
    assert!(matches!(
        synth_stage_b(&work, &ctx, &SynthesisOptions::default()).unwrap(),
        StageResult::Done(_)
    ));
}

#[test]
fn reordered_candidates_still_verify_jointly() {
    let s = setup();
    let left = position(&s, "left", 1.0, 1.5);
    let right = position(&s, "right", -1.0, 1.5);
    for order in [[left.clone(), right.clone()], [right.clone(), left.clone()]] {
        let res = synth_all(&order, &s.sys, &s.x_set, &s.u_set, &s.clifs, &SynthesisOptions::default()).unwrap();
        assert!(res.succeeded(), "{:?}", res.failure);
        assert_eq!(res.sdp_count, 4);
        // one single-candidate gate per chain, then the joint check
        assert_eq!(res.gates, vec![VerificationStatus::Verified; 2]);
        assert!(res.joint.as_ref().is_some_and(|j| j.status == VerificationStatus::Verified));
        // generator sets only reference earlier candidates
        assert!(res.chains[0].stages.iter().all(|st| st.generators.iter().all(|g| !g.contains(&res.chains[1].name))));
        let joint = verify_multi(&VerificationProblem {
            system: s.sys.clone(),
            x_set: s.x_set.clone(),
            u_set: s.u_set.clone(),
            candidates: res.chains.iter().zip(&order).map(|(c, b)| c.candidate(b)).collect(),
            clifs: s.clifs.clone(),
            options: Default::default(),
        })
        .unwrap();
        assert_eq!(joint.status, VerificationStatus::Verified);
        assert!(joint.rho_sum().is_finite());
    }
}
