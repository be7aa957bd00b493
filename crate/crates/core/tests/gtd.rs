use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use saddlemix_core::gtd::{random_mdp, swap2, walk5};
use saddlemix_core::markov::{derive_rng, ChainSampler, SampleStream};
use saddlemix_core::saddle::PartialGradient;
use saddlemix_core::*;

#[test]
fn per_sample_estimators_are_unbiased() {
    let mdp = random_mdp(4, 2, 0.8, 21).unwrap();
    let features = FeatureMap::random(4, 3, 5).unwrap();
    let inst = exact_instance_matrices(&mdp, &features, GtdMode::Gtd2, PolicyMode::OffPolicy).unwrap();
    let sampler = Arc::new(ChainSampler::new(inst.transition_chain()));
    let n = 100_000;
    let (d, mut sa, mut sa2) = (3, DMatrix::<f64>::zeros(3, 3), DMatrix::<f64>::zeros(3, 3));
    let (mut sb, mut sb2) = (DVector::<f64>::zeros(d), DVector::<f64>::zeros(d));
    let (mut sc, mut sc2) = (DMatrix::<f64>::zeros(d, d), DMatrix::<f64>::zeros(d, d));
    for xi in SampleStream::iid(sampler, derive_rng(4, 0)).take(n) {
        let e = sample_gradients(&inst, &inst.transitions()[xi]);
        sa += &e.a;
        sa2 += e.a.component_mul(&e.a);
        sb += &e.b;
        sb2 += e.b.component_mul(&e.b);
        sc += &e.c;
        sc2 += e.c.component_mul(&e.c);
    }
    let nf = n as f64;
    let check = |sum: &[f64], sq: &[f64], exact: &[f64]| {
        for ((s, q), x) in sum.iter().zip(sq).zip(exact) {
            let mean = s / nf;
            let sd = (q / nf - mean * mean).max(0.0).sqrt();
            assert!((mean - x).abs() <= 3.0 * sd / nf.sqrt() + 1e-12, "mean {mean} exact {x} sd {sd}");
        }
    };
    check(sa.as_slice(), sa2.as_slice(), inst.a().as_slice());
    check(sb.as_slice(), sb2.as_slice(), inst.b().as_slice());
    check(sc.as_slice(), sc2.as_slice(), inst.c().as_slice());
}

#[test]
fn sampled_norms_respect_supplementary_bounds() {
    let mdp = random_mdp(5, 3, 0.9, 8).unwrap();
    let features = FeatureMap::random(5, 4, 9).unwrap();
    let inst = exact_instance_matrices(&mdp, &features, GtdMode::Gtd, PolicyMode::OffPolicy).unwrap();
    let sampler = Arc::new(ChainSampler::new(inst.transition_chain()));
    for xi in SampleStream::iid(sampler, derive_rng(1, 0)).take(10_000) {
        let e = sample_gradients(&inst, &inst.transitions()[xi]);
        assert!(e.a.clone().svd(false, false).singular_values.max() <= inst.a_hat_bound());
        assert!(e.b.norm() <= inst.b_hat_bound());
    }
}

#[test]
fn on_policy_weights_are_one() {
    let mdp = random_mdp(5, 2, 0.9, 3).unwrap();
    let inst = exact_instance_matrices(&mdp, &FeatureMap::tabular(5), GtdMode::Gtd, PolicyMode::OnPolicy).unwrap();
    for t in inst.transitions() {
        assert_eq!(inst.mdp().importance_weight(t.s, t.a), 1.0);
    }
    assert_eq!(inst.constants().rho_max, 1.0);
}

#[test]
fn proposition1_dominates_sampled_gradients() {
    let mdp = random_mdp(5, 2, 0.8, 13).unwrap();
    let features = FeatureMap::random(5, 3, 14).unwrap();
    let inst = exact_instance_matrices(&mdp, &features, GtdMode::Gtd2, PolicyMode::OffPolicy).unwrap();
    let (rx, ry) = (3.0, 2.0);
    let problem = inst.saddle_problem(rx, ry).unwrap();
    let diameter = 2.0 * (rx * rx + ry * ry).sqrt();
    let (l1, _) = proposition1_constants(inst.constants(), diameter);
    let sampler = Arc::new(ChainSampler::new(inst.transition_chain()));
    let mut rng = derive_rng(2, 9);
    let mut g = PartialGradient::zeros(3, 3);
    let mut ball = |r: f64| {
        let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        v * (r * rng.random_range(0.0..1.0f64).sqrt() / n)
    };
    for xi in SampleStream::iid(sampler, derive_rng(2, 0)).take(10_000) {
        let z = SaddlePoint::new(ball(rx), ball(ry));
        problem.sample_gradient(&z, xi, &mut g);
        assert!((g.x.norm_squared() + g.y.norm_squared()).sqrt() <= l1);
    }
}

#[test]
fn swap_gtd_reaches_fixed_point() {
    let inst = exact_instance_matrices(&swap2(0.5, [1.0, 0.0]).unwrap(), &FeatureMap::tabular(2), GtdMode::Gtd, PolicyMode::OnPolicy).unwrap();
    let problem = inst.saddle_problem(10.0, 10.0).unwrap();
    let sampler = Arc::new(ChainSampler::new(inst.transition_chain()));
    let schedule = StepSchedule::constant(0.05).unwrap();
    let mut stream = SampleStream::iid(sampler, derive_rng(0, 1));
    let tr = run_sgd(&problem, &mut stream, &schedule, 100_000, &SaddlePoint::zeros(2, 2), &[]).unwrap();
    assert!(inst.residual(&tr.average.x) <= 1e-2);
}

#[test]
fn walk_fixed_point_matches_value_function() {
    let mdp = walk5(0.9).unwrap();
    let inst = exact_instance_matrices(&mdp, &FeatureMap::tabular(5), GtdMode::Gtd, PolicyMode::OnPolicy).unwrap();
    let v = exact_value(inst.mdp(), inst.mdp().target()).unwrap();
    let x = inst.solution().unwrap();
    assert!((&x - &v).amax() <= 1e-10 * v.amax());
    assert!(value_error(&inst, &x).unwrap() <= 1e-10);
    let bq = inst.expected_problem(10.0, 10.0).unwrap();
    let z = SaddlePoint::new(x, DVector::zeros(5));
    assert!(primal_dual_gap(&bq, &z).unwrap().gap.abs() <= 1e-9);
}

#[test]
fn mdp_file_round_trip() {
    let mdp = walk5(0.95).unwrap();
    let mut buf = Vec::new();
    mdp.write_text(&mut buf).unwrap();
    assert_eq!(MdpSpec::read_text(&buf[..]).unwrap(), mdp);
}
