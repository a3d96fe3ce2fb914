//! Softmax-family functions and the scalar losses attacks and training use.
//!
//! Everything is evaluated through a max-shift / log-sum-exp so extreme
//! logits never overflow or produce `-inf`.

use crate::error::{Error, Result};

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `log(sum(exp(v)))` with a max shift.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-softmax of `logits / t`.
pub fn log_softmax_t(logits: &[f64], t: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|&z| z / t).collect();
    let lse = log_sum_exp(&scaled);
    scaled.iter().map(|&z| z - lse).collect()
}

/// Softmax at temperature `t`.
pub fn softmax_t(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Parameter(format!(
            "temperature must be > 0, got {t}"
        )));
    }
    Ok(softmax_unchecked(logits, t))
}

pub(crate) fn softmax_unchecked(logits: &[f64], t: f64) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| ((z - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Plain softmax, `F(x)`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_unchecked(logits, 1.0)
}

/// `-log softmax(logits)_y`.
pub fn ce_label(logits: &[f64], y: usize) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::Label {
            label: y as i64,
            classes: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[y])
}

/// Cross-entropy from the model distribution to the uniform target:
/// `-(1/K) sum_i log softmax(logits)_i`. Minimum `ln K` at uniform output.
pub fn ce_uniform(logits: &[f64]) -> f64 {
    let k = logits.len() as f64;
    log_sum_exp(logits) - logits.iter().sum::<f64>() / k
}

/// Shannon entropy in nats of a probability vector (`0 log 0 = 0`).
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(bad) = p.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::Probability(format!(
            "entry {bad} is negative or NaN"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Probability(format!("entries sum to {s}")));
    }
    Ok(-p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>())
}

/// Entropy of `softmax(logits)` computed from log-probabilities.
pub fn softmax_entropy(logits: &[f64]) -> f64 {
    let lp = log_softmax_t(logits, 1.0);
    -lp.iter()
        .map(|&l| {
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                l.exp() * l
            }
        })
        .sum::<f64>()
}

/// Logistic function, stable for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log sigmoid(z)` without cancellation.
pub fn neg_log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

// Value and gradient with respect to the logits for each softmax loss.

pub(crate) fn ce_label_grad(logits: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    let v = ce_label(logits, y)?;
    let mut g = softmax(logits);
    g[y] -= 1.0;
    Ok((v, g))
}

pub(crate) fn ce_uniform_grad(logits: &[f64]) -> (f64, Vec<f64>) {
    let k = logits.len() as f64;
    let g = softmax(logits).into_iter().map(|p| p - 1.0 / k).collect();
    (ce_uniform(logits), g)
}

pub(crate) fn entropy_grad(logits: &[f64]) -> (f64, Vec<f64>) {
    // dH/dz_j = -p_j (log p_j + H)
    let lp = log_softmax_t(logits, 1.0);
    let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
    let h = -p
        .iter()
        .zip(&lp)
        .map(|(&pi, &li)| if pi > 0.0 { pi * li } else { 0.0 })
        .sum::<f64>();
    let g = p
        .iter()
        .zip(&lp)
        .map(|(&pi, &li)| if pi > 0.0 { -pi * (li + h) } else { 0.0 })
        .collect();
    (h, g)
}

pub(crate) fn log_max_softmax_grad(logits: &[f64], t: f64) -> (f64, Vec<f64>) {
    let lp = log_softmax_t(logits, t);
    let top = argmax(logits);
    let g = lp
        .iter()
        .enumerate()
        .map(|(j, l)| ((j == top) as u8 as f64 - l.exp()) / t)
        .collect();
    (lp[top], g)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOFT_2_0: f64 = 0.880_797_077_977_882_3; // e^2 / (e^2 + 1)

    #[test]
    fn softmax_examples() {
        let p = softmax_t(&[1.0, 1.0, 1.0], 1.0).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax_t(&[2.0, 0.0], 1.0).unwrap();
        assert!((p[0] - 0.880797).abs() < 1e-6);
        assert!((p[0] - SOFT_2_0).abs() < 1e-15);
        let p = softmax_t(&[2.0, 0.0], 1e6).unwrap();
        assert!(p.iter().all(|x| (x - 0.5).abs() < 1e-5));
        assert!(softmax_t(&[1.0], 0.0).is_err());
        assert!(softmax_t(&[1.0], -2.0).is_err());
    }

    #[test]
    fn softmax_survives_extreme_logits() {
        let p = softmax(&[1e300, -1e300, 0.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let v = ce_label(&[1e4, -1e4], 1).unwrap();
        assert!(v.is_finite() && (v - 2e4).abs() < 1e-9);
    }

    #[test]
    fn ce_label_examples() {
        assert!((ce_label(&[0.0, 0.0], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((ce_label(&[2.0, 0.0], 0).unwrap() - 0.126928).abs() < 1e-6);
        assert!((ce_label(&[2.0, 0.0], 1).unwrap() - 2.126928).abs() < 1e-6);
        assert!(matches!(ce_label(&[2.0, 0.0], 2), Err(Error::Label { .. })));
    }

    #[test]
    fn ce_uniform_examples() {
        assert!((ce_uniform(&[0.0; 4]) - 4f64.ln()).abs() < 1e-15);
        let v = ce_uniform(&[0.9f64.ln(), 0.1f64.ln()]);
        assert!((v - 1.203973).abs() < 1e-6);
        assert!((v + 0.5 * (0.9f64.ln() + 0.1f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((entropy(&[0.9, 0.1]).unwrap() - 0.325083).abs() < 1e-6);
        assert!(entropy(&[1.1, -0.1]).is_err());
        assert!(entropy(&[0.5, 0.4]).is_err());
    }

    #[test]
    fn softmax_entropy_matches_entropy() {
        let z = [0.3, -1.2, 2.5, 0.0];
        let direct = entropy(&softmax(&z)).unwrap();
        assert!((softmax_entropy(&z) - direct).abs() < 1e-14);
        assert!((entropy_grad(&z).0 - direct).abs() < 1e-14);
    }

    #[test]
    fn sigmoid_helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(-1.0) - 0.268941).abs() < 1e-6);
        assert!((neg_log_sigmoid(3.0) + sigmoid(3.0).ln()).abs() < 1e-15);
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
