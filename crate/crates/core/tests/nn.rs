use aloe_core::nn::loss::{ce_label, ce_uniform, softmax};
use aloe_core::nn::{read_model, write_model};
use aloe_core::nn::{Activation, Loss, Model, ModelSpec};
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 2..8)
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Relu), Just(Activation::Tanh)]
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in logits()) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn softmax_ignores_shifts(z in logits(), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_cross_entropy_at_least_log_k(z in logits()) {
        let k = z.len() as f64;
        prop_assert!(ce_uniform(&z) >= k.ln() - 1e-12);
    }

    #[test]
    fn label_cross_entropy_nonnegative(z in logits(), y in 0usize..2) {
        prop_assert!(ce_label(&z, y).unwrap() >= 0.0);
    }

    #[test]
    fn same_seed_same_forward(seed in any::<u64>(), act in activation(), x in prop::collection::vec(0.0f64..1.0, 3)) {
        let spec = ModelSpec::new(3, vec![5, 4], 3, act);
        let a = Model::new(spec.clone(), seed).unwrap();
        let b = Model::new(spec, seed).unwrap();
        prop_assert_eq!(a.logits(&x).unwrap(), b.logits(&x).unwrap());
        prop_assert_eq!(a.params_flat(), b.params_flat());
    }

    #[test]
    fn text_roundtrip_preserves_outputs(seed in any::<u64>(), act in activation(), x in prop::collection::vec(0.0f64..1.0, 2)) {
        let m = Model::new(ModelSpec::new(2, vec![4], 3, act), seed).unwrap();
        let back = read_model(&write_model(&m)).unwrap();
        prop_assert_eq!(m.logits(&x).unwrap(), back.logits(&x).unwrap());
    }

    #[test]
    fn input_gradient_matches_differences(seed in 0u64..1000, x in prop::collection::vec(0.1f64..0.9, 3), y in 0usize..3) {
        let m = Model::new(ModelSpec::new(3, vec![6], 3, Activation::Tanh), seed).unwrap();
        let (_, g) = m.input_grad(&x, Loss::CeLabel(y)).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let (mut p, mut q) = (x.clone(), x.clone());
            p[i] += h;
            q[i] -= h;
            let fd = (ce_label(&m.logits(&p).unwrap(), y).unwrap() - ce_label(&m.logits(&q).unwrap(), y).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 + 1e-4 * fd.abs(), "coord {i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn different_seeds_differ() {
    let spec = ModelSpec::new(2, vec![8], 2, Activation::Relu);
    let a = Model::new(spec.clone(), 1).unwrap();
    let b = Model::new(spec, 2).unwrap();
    assert_ne!(a.params_flat(), b.params_flat());
}
