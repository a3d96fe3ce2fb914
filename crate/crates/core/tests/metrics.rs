use aloe_core::metrics::{
    auroc, detection_error, fpr_at_tpr, histogram, read_scores_csv, write_scores_csv, ScoredEval,
};
use proptest::prelude::*;

fn scores() -> impl Strategy<Value = Vec<f64>> {
    // coarse values so ties show up often
    prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 8.0), 1..40)
}

fn all(ev: &ScoredEval) -> [f64; 3] {
    [
        fpr_at_tpr(ev, 0.95).unwrap(),
        detection_error(ev).unwrap(),
        auroc(ev).unwrap(),
    ]
}

fn mapped(ev: &ScoredEval, f: impl Fn(f64) -> f64) -> ScoredEval {
    ScoredEval::new(
        ev.in_scores.iter().map(|&v| f(v)).collect(),
        ev.out_scores.iter().map(|&v| f(v)).collect(),
    )
}

/// Pairwise AUROC with ties counted as one half.
fn brute_auroc(ins: &[f64], outs: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in ins {
        for b in outs {
            s += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (ins.len() * outs.len()) as f64
}

proptest! {
    #[test]
    fn invariant_under_increasing_maps(ins in scores(), outs in scores()) {
        let ev = ScoredEval::new(ins, outs);
        let base = all(&ev);
        for m in [all(&mapped(&ev, |v| 2.0 * v + 1.0)), all(&mapped(&ev, f64::tanh))] {
            for (a, b) in base.iter().zip(&m) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn auroc_is_antisymmetric(ins in scores(), outs in scores()) {
        let a = auroc(&ScoredEval::new(ins.clone(), outs.clone())).unwrap();
        let b = auroc(&ScoredEval::new(outs, ins)).unwrap();
        prop_assert!((a + b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn auroc_matches_pairwise_count(ins in scores(), outs in scores()) {
        let a = auroc(&ScoredEval::new(ins.clone(), outs.clone())).unwrap();
        prop_assert!((a - brute_auroc(&ins, &outs)).abs() <= 1e-12);
    }

    #[test]
    fn detection_error_bounds(ins in scores(), outs in scores()) {
        let ev = ScoredEval::new(ins, outs);
        let [fpr, de, _] = all(&ev);
        prop_assert!(de <= 0.5 + 1e-12);
        prop_assert!(de <= 0.5 * (fpr + 0.05) + 1e-9, "de {de} fpr {fpr}");
        prop_assert!((0.0..=1.0).contains(&fpr));
    }

    #[test]
    fn histogram_keeps_every_score(ins in scores(), outs in scores(), bins in 1usize..30) {
        let ev = ScoredEval::new(ins.clone(), outs.clone());
        let h = histogram(&ev, bins).unwrap();
        prop_assert_eq!(h.count_in.iter().sum::<usize>(), ins.len());
        prop_assert_eq!(h.count_out.iter().sum::<usize>(), outs.len());
    }
}

#[test]
fn scores_csv_end_to_end() {
    // 20 points, in-scores 0.05..1.0 interleaved with out-scores shifted down by 0.3
    let ins: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let outs: Vec<f64> = ins.iter().map(|v| v - 0.3).collect();
    let ev = ScoredEval::new(ins.clone(), outs.clone());
    let text = write_scores_csv(&ev);
    assert_eq!(text.lines().count(), 21);
    let back = read_scores_csv(&text).unwrap();
    assert_eq!(back.in_scores, ins);
    assert_eq!(back.out_scores, outs);

    // independent oracle over thresholds
    let thresholds: Vec<f64> = {
        let mut t: Vec<f64> = ins.iter().chain(&outs).copied().collect();
        t.push(f64::NEG_INFINITY);
        t.push(f64::INFINITY);
        t
    };
    let rate = |s: &[f64], g: f64| s.iter().filter(|&&v| v > g).count() as f64 / s.len() as f64;
    let fpr = thresholds
        .iter()
        .filter(|&&g| rate(&ins, g) >= 0.95)
        .fold(f64::NEG_INFINITY, |a, &g| a.max(g));
    let fpr = rate(&outs, fpr);
    let de = thresholds
        .iter()
        .map(|&g| 0.5 * (1.0 - rate(&ins, g)) + 0.5 * rate(&outs, g))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(fpr_at_tpr(&back, 0.95).unwrap(), fpr);
    assert!((detection_error(&back).unwrap() - de).abs() < 1e-15);
    assert!((auroc(&back).unwrap() - brute_auroc(&ins, &outs)).abs() < 1e-15);
}
