use aloe_core::attacks::{
    attack_classifier, attack_mahalanobis_detector, attack_points, attack_softmax_detector,
    AttackConfig, AttackKind, Init, PerturbationSet,
};
use aloe_core::benchmark::Benchmark;
use aloe_core::metrics::score_points;
use aloe_core::nn::loss::ce_label;
use aloe_core::nn::{Activation, Model, ModelSpec};
use aloe_core::scores::ScoreFn;
use aloe_core::train::Objective;
use aloe_core::{par, seed};
use proptest::prelude::*;
use rand::Rng;

fn model(seed: u64, act: Activation) -> Model {
    Model::new(ModelSpec::new(2, vec![16, 16], 3, act), seed).unwrap()
}

fn cfg(eps: f64, seed: u64) -> AttackConfig {
    AttackConfig {
        eps,
        steps: 10,
        step_size: (eps / 10.0).max(1e-6),
        init: Init::RandomInBall,
        seed,
    }
}

#[test]
fn classifier_attack_raises_label_loss() {
    let mut rng = seed::rng(21, &[]);
    let mut raised = 0;
    for t in 0..100u64 {
        let m = model(
            t,
            if t % 2 == 0 {
                Activation::Relu
            } else {
                Activation::Tanh
            },
        );
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(0.1..0.9)).collect();
        let y = rng.gen_range(0..3);
        let d = attack_classifier(&m, &x, y, &cfg(0.05, t)).unwrap();
        let xd: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        if ce_label(&m.logits(&xd).unwrap(), y).unwrap()
            >= ce_label(&m.logits(&x).unwrap(), y).unwrap()
        {
            raised += 1;
        }
    }
    assert!(raised >= 90, "only {raised}/100 trials raised the loss");
}

proptest! {
    #[test]
    fn every_attack_stays_in_the_set(
        seed in 0u64..200,
        x in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0], 2),
        eps in prop_oneof![Just(0.0), Just(1e-12), 0.001f64..0.3],
        is_in in any::<bool>(),
    ) {
        let m = model(seed, Activation::Relu);
        let c = cfg(eps, seed);
        let set = PerturbationSet::linf(eps);
        let d1 = attack_softmax_detector(&m, &x, is_in, &c).unwrap();
        let d2 = attack_classifier(&m, &x, (seed % 3) as usize, &c).unwrap();
        prop_assert!(set.contains(&x, &d1));
        prop_assert!(set.contains(&x, &d2));
    }

    #[test]
    fn zero_budget_is_identity(seed in 0u64..200, x in prop::collection::vec(0.0f64..1.0, 2)) {
        let m = model(seed, Activation::Tanh);
        let c = cfg(0.0, seed);
        prop_assert_eq!(attack_softmax_detector(&m, &x, true, &c).unwrap(), vec![0.0; 2]);
        prop_assert_eq!(attack_classifier(&m, &x, 0, &c).unwrap(), vec![0.0; 2]);
    }
}

#[test]
fn attacks_are_deterministic_and_order_free() {
    let m = model(4, Activation::Relu);
    let mut rng = seed::rng(5, &[]);
    let pts: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.gen(), rng.gen()]).collect();
    let c = cfg(0.03, 9);
    let a = attack_points(&m, &pts, None, false, AttackKind::Softmax, &c).unwrap();
    let b = attack_points(&m, &pts, None, false, AttackKind::Softmax, &c).unwrap();
    assert_eq!(a, b);
    // item i only depends on its own derived seed
    let serial: Vec<Vec<f64>> = par::map_indexed_serial(&pts, |i, x| {
        let item = c.for_item(&[seed::stream::ATTACK, 0, i as u64]);
        let d = attack_softmax_detector(&m, x, false, &item).unwrap();
        x.iter().zip(&d).map(|(p, q)| p + q).collect()
    });
    assert_eq!(a, serial);
}

#[test]
fn mahalanobis_attack_is_feasible() {
    use aloe_core::data::LabeledSet;
    use aloe_core::scores::{fit_logistic_ensemble, fit_mahalanobis, CovReg};
    let m = model(8, Activation::Tanh);
    let mut rng = seed::rng(8, &[]);
    let pts: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.gen(), rng.gen()]).collect();
    let labels = (0..40).map(|i| i % 3).collect();
    let mut head = fit_mahalanobis(
        &m,
        &LabeledSet::new(pts.clone(), labels).unwrap(),
        CovReg::default(),
    )
    .unwrap();
    let far = LabeledSet::unlabeled(
        (0..20)
            .map(|_| vec![rng.gen_range(0.8..1.0), rng.gen()])
            .collect(),
    );
    let near = LabeledSet::unlabeled(pts[..20].to_vec());
    fit_logistic_ensemble(&mut head, &m, &near, &far, 0.0).unwrap();
    let c = cfg(0.05, 1);
    for (i, x) in pts.iter().enumerate() {
        let d = attack_mahalanobis_detector(&head, &m, x, i % 2 == 0, &c).unwrap();
        assert!(c.set().contains(x, &d));
    }
}

#[test]
fn softmax_attack_moves_scores_the_intended_way() {
    let mut b = Benchmark::default();
    b.train.epochs = 40;
    let data = b.data(0).unwrap();
    let trained = b
        .train_objective(&data, Objective::Oe, 0, |_, _| Ok(()))
        .unwrap()
        .model;
    let atk = b.attack_config(0);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (_, q) = &data.q_tests[0];
    let ins = &data.test.points;
    let clean_in = mean(&score_points(&ScoreFn::Msp, &trained, ins).unwrap());
    let clean_out = mean(&score_points(&ScoreFn::Msp, &trained, &q.points).unwrap());
    let adv_in = attack_points(&trained, ins, None, true, AttackKind::Softmax, &atk).unwrap();
    let adv_out =
        attack_points(&trained, &q.points, None, false, AttackKind::Softmax, &atk).unwrap();
    let att_in = mean(&score_points(&ScoreFn::Msp, &trained, &adv_in).unwrap());
    let att_out = mean(&score_points(&ScoreFn::Msp, &trained, &adv_out).unwrap());
    assert!(att_in < clean_in, "inlier score {clean_in} -> {att_in}");
    assert!(
        att_out > clean_out,
        "outlier score {clean_out} -> {att_out}"
    );
}
