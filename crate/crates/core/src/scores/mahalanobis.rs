//! Class-conditional Gaussian (Mahalanobis) confidence score.
//!
//! Per feature layer `l` the head stores one mean per class and a pooled
//! within-class covariance shared by all classes. The layer score is the
//! negated squared Mahalanobis distance to the closest class mean; the final
//! score is a logistic regression over preprocessed layer scores.

use nalgebra::{DMatrix, DVector};

use super::{clamp_unit, sign};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::{loss, FeatureLoss, FeatureStack, Loss, Model};
use crate::textio::{fmt_f64, parse_f64_list, Lines};

pub const HEAD_HEADER: &str = "aloe-mahal v1";

const ENSEMBLE_ITERS: usize = 2000;
const ENSEMBLE_LR: f64 = 0.1;

/// Covariance regularization added before inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovReg {
    /// `reg * I`
    Absolute(f64),
    /// `scale * (trace / dim) * I`
    TraceScaled(f64),
}

impl Default for CovReg {
    fn default() -> Self {
        CovReg::TraceScaled(1e-6)
    }
}

/// Gaussian parameters for one feature layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGaussian {
    pub dim: usize,
    /// One mean per class.
    pub means: Vec<Vec<f64>>,
    /// Regularized covariance, row-major.
    pub cov: Vec<f64>,
    /// Inverse of `cov`, row-major.
    pub precision: Vec<f64>,
}

/// Logistic-regression weights over layer scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Set when every feature column was constant and only the bias was fit.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisHead {
    pub layers: Vec<LayerGaussian>,
    pub num_classes: usize,
    /// Input-preprocessing magnitude used by [`mahalanobis_score`].
    pub eta: f64,
    pub ensemble: Option<Ensemble>,
}

impl LayerGaussian {
    fn quad(&self, f: &[f64], c: usize) -> (f64, Vec<f64>) {
        let d = self.dim;
        let diff: Vec<f64> = f.iter().zip(&self.means[c]).map(|(a, b)| a - b).collect();
        let pd: Vec<f64> = self
            .precision
            .chunks_exact(d)
            .map(|row| row.iter().zip(&diff).map(|(p, v)| p * v).sum())
            .collect();
        let q = diff.iter().zip(&pd).map(|(a, b)| a * b).sum();
        (q, pd)
    }

    /// `max_c -(f - mu_c)^T P (f - mu_c)` and its gradient in `f`.
    fn score_and_grad(&self, f: &[f64]) -> (f64, Vec<f64>) {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for c in 0..self.means.len() {
            let (q, pd) = self.quad(f, c);
            if best.as_ref().is_none_or(|(b, _)| -q > *b) {
                best = Some((-q, pd));
            }
        }
        let (s, pd) = best.expect("at least one class");
        (s, pd.into_iter().map(|v| -2.0 * v).collect())
    }
}

/// Layer score for a raw feature vector.
pub fn layer_score_of_features(layer: &LayerGaussian, f: &[f64]) -> Result<f64> {
    if f.len() != layer.dim {
        return Err(Error::InputShape {
            expected: layer.dim,
            got: f.len(),
        });
    }
    Ok(layer.score_and_grad(f).0)
}

/// Fits class means and pooled covariances from per-sample feature stacks.
///
/// `features[i][l]` is layer `l` of sample `i`; labels must cover
/// `0..num_classes`.
pub fn fit_mahalanobis_features(
    features: &[Vec<Vec<f64>>],
    labels: &[i64],
    num_classes: usize,
    reg: CovReg,
) -> Result<MahalanobisHead> {
    if features.len() != labels.len() {
        return Err(Error::Fit("features and labels differ in length".into()));
    }
    if features.is_empty() {
        return Err(Error::Fit("no training samples".into()));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l < 0 || l as usize >= num_classes {
            return Err(Error::Fit(format!("label {l} outside 0..{num_classes}")));
        }
        counts[l as usize] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Fit(format!("class {c} absent from training data")));
    }
    let n_layers = features[0].len();
    let n = features.len() as f64;
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let d = features[0][l].len();
        let mut means = vec![vec![0.0; d]; num_classes];
        for (fs, &y) in features.iter().zip(labels) {
            for (m, v) in means[y as usize].iter_mut().zip(&fs[l]) {
                *m += v;
            }
        }
        for (m, &cnt) in means.iter_mut().zip(&counts) {
            for v in m.iter_mut() {
                *v /= cnt as f64;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for (fs, &y) in features.iter().zip(labels) {
            let diff =
                DVector::from_iterator(d, fs[l].iter().zip(&means[y as usize]).map(|(a, b)| a - b));
            cov.ger(1.0, &diff, &diff, 1.0);
        }
        cov /= n;
        let lambda = match reg {
            CovReg::Absolute(r) => r,
            CovReg::TraceScaled(s) => s * cov.trace() / d as f64,
        };
        if !(lambda >= 0.0) {
            return Err(Error::Fit(format!(
                "regularization must be >= 0, got {lambda}"
            )));
        }
        for i in 0..d {
            cov[(i, i)] += lambda;
        }
        let chol = cov.clone().cholesky().ok_or_else(|| {
            Error::Numeric(format!("layer {l} covariance is not positive definite"))
        })?;
        let precision = chol.inverse();
        let sym = |m: &DMatrix<f64>| -> Vec<f64> {
            // row-major, symmetrized
            (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| 0.5 * (m[(i, j)] + m[(j, i)]))
                .collect()
        };
        layers.push(LayerGaussian {
            dim: d,
            means,
            cov: sym(&cov),
            precision: sym(&precision),
        });
    }
    Ok(MahalanobisHead {
        layers,
        num_classes,
        eta: 0.0,
        ensemble: None,
    })
}

/// Fits the head on every feature layer (hidden layers and logits) of `model`.
pub fn fit_mahalanobis(model: &Model, train: &LabeledSet, reg: CovReg) -> Result<MahalanobisHead> {
    let features = train
        .points
        .iter()
        .map(|x| Ok(model.forward(x)?.layers().map(<[f64]>::to_vec).collect()))
        .collect::<Result<Vec<Vec<Vec<f64>>>>>()?;
    fit_mahalanobis_features(&features, &train.labels, model.num_classes(), reg)
}

impl MahalanobisHead {
    fn layer(&self, l: usize) -> Result<&LayerGaussian> {
        self.layers.get(l).ok_or_else(|| {
            Error::Parameter(format!(
                "layer {l} out of range ({} layers)",
                self.layers.len()
            ))
        })
    }

    fn ensemble(&self) -> Result<&Ensemble> {
        self.ensemble
            .as_ref()
            .ok_or_else(|| Error::Unfitted("Mahalanobis ensemble weights".into()))
    }

    /// Preprocessed layer-score features `M_l(x~_l)` for one input.
    pub fn preprocessed_features(&self, model: &Model, x: &[f64], eta: f64) -> Result<Vec<f64>> {
        (0..self.layers.len())
            .map(|l| {
                if eta == 0.0 {
                    return mahalanobis_layer_score(self, model, x, l);
                }
                let (_, g) = model.input_grad(
                    x,
                    Loss::Features(&LayerScoreLoss {
                        head: self,
                        layer: l,
                    }),
                )?;
                let mut xt: Vec<f64> = x
                    .iter()
                    .zip(&g)
                    .map(|(&xi, &gi)| xi + eta * sign(gi))
                    .collect();
                clamp_unit(&mut xt);
                mahalanobis_layer_score(self, model, &xt, l)
            })
            .collect()
    }

    /// Ensemble logit `sum_l alpha_l M_l(x) + b` from raw (unprocessed) features.
    fn ensemble_logit(&self, stack: &FeatureStack) -> Result<f64> {
        let e = self.ensemble()?;
        let mut z = e.bias;
        for (l, a) in e.alpha.iter().enumerate() {
            let f = stack
                .layer(l)
                .ok_or_else(|| Error::Parameter("feature stack too short".into()))?;
            z += a * self.layers[l].score_and_grad(f).0;
        }
        Ok(z)
    }
}

/// `M_l(x) = max_c -(f_l(x) - mu_{l,c})^T Sigma_l^{-1} (f_l(x) - mu_{l,c})`.
pub fn mahalanobis_layer_score(
    head: &MahalanobisHead,
    model: &Model,
    x: &[f64],
    l: usize,
) -> Result<f64> {
    let layer = head.layer(l)?;
    let stack = model.forward(x)?;
    let f = stack
        .layer(l)
        .ok_or_else(|| Error::Parameter(format!("model has no feature layer {l}")))?;
    layer_score_of_features(layer, f)
}

/// `sigmoid(sum_l alpha_l M_l(x~_l) + b)` with preprocessing magnitude `head.eta`.
pub fn mahalanobis_score(head: &MahalanobisHead, model: &Model, x: &[f64]) -> Result<f64> {
    let e = head.ensemble()?;
    let feats = head.preprocessed_features(model, x, head.eta)?;
    let z = e.bias + e.alpha.iter().zip(&feats).map(|(a, f)| a * f).sum::<f64>();
    Ok(loss::sigmoid(z))
}

/// The layer score as a differentiable loss (for input preprocessing).
pub struct LayerScoreLoss<'a> {
    pub head: &'a MahalanobisHead,
    pub layer: usize,
}

impl FeatureLoss for LayerScoreLoss<'_> {
    fn value_and_grad(&self, stack: &FeatureStack) -> Result<(f64, Vec<Vec<f64>>)> {
        let layer = self.head.layer(self.layer)?;
        let f = stack
            .layer(self.layer)
            .ok_or_else(|| Error::Parameter("feature stack too short".into()))?;
        let (v, g) = layer.score_and_grad(f);
        let mut grads = stack.zeros_like();
        grads[self.layer] = g;
        Ok((v, grads))
    }
}

/// `-log p` (inliers) or `-log(1 - p)` (outliers) where
/// `p = sigmoid(sum_l alpha_l M_l(x) + b)`, without input preprocessing.
pub struct EnsembleLoss<'a> {
    pub head: &'a MahalanobisHead,
    pub is_in: bool,
}

impl FeatureLoss for EnsembleLoss<'_> {
    fn value_and_grad(&self, stack: &FeatureStack) -> Result<(f64, Vec<Vec<f64>>)> {
        let z = self.head.ensemble_logit(stack)?;
        let p = loss::sigmoid(z);
        let (value, dz) = if self.is_in {
            (loss::neg_log_sigmoid(z), p - 1.0)
        } else {
            (loss::neg_log_sigmoid(-z), p)
        };
        let e = self.head.ensemble()?;
        let mut grads = stack.zeros_like();
        for (l, a) in e.alpha.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let f = stack
                .layer(l)
                .ok_or_else(|| Error::Parameter("feature stack too short".into()))?;
            let (_, g) = self.head.layers[l].score_and_grad(f);
            grads[l] = g.into_iter().map(|v| dz * a * v).collect();
        }
        Ok((value, grads))
    }
}

#[cfg(test)]
fn mean_logistic_loss(rows: &[(Vec<f64>, f64)], alpha: &[f64], bias: f64) -> f64 {
    rows.iter()
        .map(|(f, y)| {
            let z = bias + alpha.iter().zip(f).map(|(a, v)| a * v).sum::<f64>();
            if *y > 0.5 {
                loss::neg_log_sigmoid(z)
            } else {
                loss::neg_log_sigmoid(-z)
            }
        })
        .sum::<f64>()
        / rows.len() as f64
}

/// Fits the logistic-regression ensemble on preprocessed layer scores of
/// inlier (target 1) and outlier (target 0) validation sets.
///
/// Features are standardized per column and optimized by 2000 full-batch
/// gradient steps of size 0.1 from zero; the weights are then mapped back to
/// raw-score units. Columns with zero spread get weight 0. Stores the result
/// and `eta` in the head.
pub fn fit_logistic_ensemble(
    head: &mut MahalanobisHead,
    model: &Model,
    in_val: &LabeledSet,
    out_val: &LabeledSet,
    eta: f64,
) -> Result<Ensemble> {
    if in_val.is_empty() || out_val.is_empty() {
        return Err(Error::Empty(
            "ensemble validation sets must be nonempty".into(),
        ));
    }
    if !(eta >= 0.0) {
        return Err(Error::Parameter(format!("eta must be >= 0, got {eta}")));
    }
    let feats = |set: &LabeledSet, y: f64| -> Result<Vec<(Vec<f64>, f64)>> {
        let rows = crate::par::map_indexed(&set.points, |_, x| {
            head.preprocessed_features(model, x, eta)
        });
        rows.into_iter().map(|r| r.map(|f| (f, y))).collect()
    };
    let mut rows = feats(in_val, 1.0)?;
    rows.extend(feats(out_val, 0.0)?);
    let ens = fit_logistic_rows(&rows, head.layers.len());
    head.eta = eta;
    head.ensemble = Some(ens.clone());
    Ok(ens)
}

/// Logistic regression on `(features, target)` rows; see [`fit_logistic_ensemble`].
pub(crate) fn fit_logistic_rows(rows: &[(Vec<f64>, f64)], dim: usize) -> Ensemble {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|j| rows.iter().map(|(f, _)| f[j]).sum::<f64>() / n)
        .collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            (rows
                .iter()
                .map(|(f, _)| (f[j] - mean[j]).powi(2))
                .sum::<f64>()
                / n)
                .sqrt()
        })
        .collect();
    let active: Vec<bool> = scale.iter().map(|&s| s > 0.0 && s.is_finite()).collect();
    if !active.iter().any(|&a| a) {
        let prior = rows.iter().map(|(_, y)| y).sum::<f64>() / n;
        let bias = (prior / (1.0 - prior)).ln().clamp(-1e6, 1e6);
        return Ensemble {
            alpha: vec![0.0; dim],
            bias,
            degenerate: true,
        };
    }
    let std_rows: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .map(|(f, y)| {
            let z = (0..dim)
                .map(|j| {
                    if active[j] {
                        (f[j] - mean[j]) / scale[j]
                    } else {
                        0.0
                    }
                })
                .collect();
            (z, *y)
        })
        .collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..ENSEMBLE_ITERS {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (f, y) in &std_rows {
            let z = b + w.iter().zip(f).map(|(a, v)| a * v).sum::<f64>();
            let r = loss::sigmoid(z) - y;
            gb += r;
            for (g, v) in gw.iter_mut().zip(f) {
                *g += r * v;
            }
        }
        b -= ENSEMBLE_LR * gb / n;
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= ENSEMBLE_LR * g / n;
        }
    }
    let alpha: Vec<f64> = (0..dim)
        .map(|j| if active[j] { w[j] / scale[j] } else { 0.0 })
        .collect();
    let bias = b
        - (0..dim)
            .filter(|&j| active[j])
            .map(|j| w[j] * mean[j] / scale[j])
            .sum::<f64>();
    Ensemble {
        alpha,
        bias,
        degenerate: false,
    }
}

/// Serializes the head as an `aloe-mahal v1` section.
pub fn write_head(head: &MahalanobisHead) -> String {
    let join = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",");
    let mut out = format!(
        "{HEAD_HEADER}\nlayers {}\nclasses {}\neta {}\n",
        head.layers.len(),
        head.num_classes,
        fmt_f64(head.eta)
    );
    for (l, g) in head.layers.iter().enumerate() {
        out.push_str(&format!("layer {l} {}\n", g.dim));
        for m in &g.means {
            out.push_str(&join(m));
            out.push('\n');
        }
        out.push_str(&join(&g.cov));
        out.push('\n');
        out.push_str(&join(&g.precision));
        out.push('\n');
    }
    match &head.ensemble {
        None => out.push_str("ensemble none\n"),
        Some(e) => {
            out.push_str(&format!(
                "ensemble {}\n",
                if e.degenerate { "degenerate" } else { "fitted" }
            ));
            out.push_str(&join(&e.alpha));
            out.push('\n');
            out.push_str(&format!("bias {}\n", fmt_f64(e.bias)));
        }
    }
    out
}

/// Finds and parses the `aloe-mahal v1` section anywhere in `text`.
pub fn read_head(text: &str) -> Result<MahalanobisHead> {
    let start = text
        .lines()
        .position(|l| l.trim() == HEAD_HEADER)
        .ok_or(Error::Parse {
            line: 1,
            msg: format!("no {HEAD_HEADER:?} section"),
        })?;
    let mut lines = Lines::new(text);
    for _ in 0..start {
        lines.next_line()?;
    }
    lines.expect_exact(HEAD_HEADER)?;
    let n_layers = lines.keyed_usize("layers")?;
    let num_classes = lines.keyed_usize("classes")?;
    let eta = lines.keyed_f64("eta")?;
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (ln, hdr) = lines.next_line()?;
        let dim = match hdr.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["layer", idx, d] if idx.parse::<usize>().ok() == Some(l) => {
                d.parse::<usize>().map_err(|e| Error::Parse {
                    line: ln,
                    msg: e.to_string(),
                })?
            }
            _ => {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected `layer {l} <dim>`"),
                })
            }
        };
        let mut means = Vec::with_capacity(num_classes);
        for _ in 0..num_classes {
            let (ln, s) = lines.next_line()?;
            means.push(parse_f64_list(s, ln, dim)?);
        }
        let (ln, s) = lines.next_line()?;
        let cov = parse_f64_list(s, ln, dim * dim)?;
        let (ln, s) = lines.next_line()?;
        let precision = parse_f64_list(s, ln, dim * dim)?;
        layers.push(LayerGaussian {
            dim,
            means,
            cov,
            precision,
        });
    }
    let (ln, kind) = lines.keyed("ensemble")?;
    let ensemble = match kind {
        "none" => None,
        "fitted" | "degenerate" => {
            let (ln, s) = lines.next_line()?;
            let alpha = parse_f64_list(s, ln, n_layers)?;
            let bias = lines.keyed_f64("bias")?;
            Some(Ensemble {
                alpha,
                bias,
                degenerate: kind == "degenerate",
            })
        }
        other => {
            return Err(Error::Parse {
                line: ln,
                msg: format!("unknown ensemble state {other:?}"),
            })
        }
    };
    Ok(MahalanobisHead {
        layers,
        num_classes,
        eta,
        ensemble,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, ModelSpec};
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// No hidden layer, logits = x, so the single feature layer is the input.
    fn identity_model() -> Model {
        let spec = ModelSpec::new(2, vec![], 2, Activation::Relu);
        let layer = Dense {
            in_dim: 2,
            out_dim: 2,
            weight: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        };
        Model::from_layers(spec, vec![layer], 0).unwrap()
    }

    fn hand_head(means: Vec<Vec<f64>>, ensemble: Option<Ensemble>) -> MahalanobisHead {
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        let num_classes = means.len();
        MahalanobisHead {
            layers: vec![LayerGaussian {
                dim: 2,
                means,
                cov: eye.clone(),
                precision: eye,
            }],
            num_classes,
            eta: 0.0,
            ensemble,
        }
    }

    fn welford_mean(xs: &[Vec<f64>]) -> Vec<f64> {
        let mut m = vec![0.0; xs[0].len()];
        for (k, x) in xs.iter().enumerate() {
            for (mi, xi) in m.iter_mut().zip(x) {
                *mi += (xi - *mi) / (k + 1) as f64;
            }
        }
        m
    }

    #[test]
    fn constant_features_give_exact_means_and_reg_covariance() {
        let a = vec![vec![1.5, -2.0]];
        let b = vec![vec![0.25, 4.0]];
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            feats.push(if i % 2 == 0 { a.clone() } else { b.clone() });
            labels.push(i % 2);
        }
        let head = fit_mahalanobis_features(&feats, &labels, 2, CovReg::Absolute(0.01)).unwrap();
        assert_eq!(head.layers[0].means, vec![a[0].clone(), b[0].clone()]);
        assert_eq!(head.layers[0].cov, vec![0.01, 0.0, 0.0, 0.01]);
    }

    #[test]
    fn isotropic_classes_recover_identity_covariance() {
        let mut rng = seed::rng(21, &[]);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2i64 {
            for _ in 0..5000 {
                let off = 3.0 * c as f64;
                feats.push(vec![vec![
                    off + rng.sample::<f64, _>(StandardNormal),
                    -off + rng.sample::<f64, _>(StandardNormal),
                ]]);
                labels.push(c);
            }
        }
        let head = fit_mahalanobis_features(&feats, &labels, 2, CovReg::Absolute(0.0)).unwrap();
        let eye = [1.0, 0.0, 0.0, 1.0];
        for (c, e) in head.layers[0].cov.iter().zip(eye) {
            assert!((c - e).abs() < 0.05, "{c} vs {e}");
        }
        for c in 0..2 {
            let xs: Vec<Vec<f64>> = feats
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(f, _)| f[0].clone())
                .collect();
            let w = welford_mean(&xs);
            for (a, b) in head.layers[0].means[c as usize].iter().zip(&w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fit_errors() {
        let feats = vec![vec![vec![0.0, 1.0]]; 4];
        assert!(matches!(
            fit_mahalanobis_features(&feats, &[0, 0, 0, 0], 2, CovReg::default()),
            Err(Error::Fit(_))
        ));
        assert!(matches!(
            fit_mahalanobis_features(&feats, &[0, 1, 0, 1], 2, CovReg::Absolute(0.0)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn layer_score_examples() {
        let head = hand_head(vec![vec![0.0, 0.0], vec![4.0, 0.0]], None);
        let m = identity_model();
        assert_eq!(
            mahalanobis_layer_score(&head, &m, &[1.0, 0.0], 0).unwrap(),
            -1.0
        );
        assert_eq!(
            mahalanobis_layer_score(&head, &m, &[4.0, 0.0], 0).unwrap(),
            0.0
        );
        assert!(mahalanobis_layer_score(&head, &m, &[4.0, 0.0], 1).is_err());
        let mut rng = seed::rng(5, &[]);
        for _ in 0..100 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            assert!(mahalanobis_layer_score(&head, &m, &x, 0).unwrap() <= 0.0);
        }
    }

    #[test]
    fn layer_score_is_rotation_invariant() {
        let mut rng = seed::rng(8, &[]);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..400 {
            let c = (i % 2) as i64;
            let x = vec![
                c as f64 + 0.3 * rng.sample::<f64, _>(StandardNormal),
                0.5 * rng.sample::<f64, _>(StandardNormal),
            ];
            feats.push(vec![x]);
            labels.push(c);
        }
        let (s, c) = (0.6f64, 0.8f64);
        let rot = |v: &[f64]| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let rfeats: Vec<Vec<Vec<f64>>> = feats.iter().map(|f| vec![rot(&f[0])]).collect();
        let h = fit_mahalanobis_features(&feats, &labels, 2, CovReg::Absolute(1e-3)).unwrap();
        let hr = fit_mahalanobis_features(&rfeats, &labels, 2, CovReg::Absolute(1e-3)).unwrap();
        for _ in 0..50 {
            let x = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let a = layer_score_of_features(&h.layers[0], &x).unwrap();
            let b = layer_score_of_features(&hr.layers[0], &rot(&x)).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn score_examples() {
        let m = identity_model();
        let zero = hand_head(
            vec![vec![0.0, 0.0], vec![4.0, 0.0]],
            Some(Ensemble {
                alpha: vec![0.0],
                bias: 0.0,
                degenerate: false,
            }),
        );
        assert_eq!(mahalanobis_score(&zero, &m, &[0.7, 0.1]).unwrap(), 0.5);
        let unit = hand_head(
            vec![vec![0.0, 0.0], vec![4.0, 0.0]],
            Some(Ensemble {
                alpha: vec![1.0],
                bias: 0.0,
                degenerate: false,
            }),
        );
        assert_eq!(mahalanobis_score(&unit, &m, &[4.0, 0.0]).unwrap(), 0.5);
        let s = mahalanobis_score(&unit, &m, &[1.0, 0.0]).unwrap();
        assert!((s - 0.268941).abs() < 1e-6);
        let unfitted = hand_head(vec![vec![0.0, 0.0]], None);
        assert!(matches!(
            mahalanobis_score(&unfitted, &m, &[0.0, 0.0]),
            Err(Error::Unfitted(_))
        ));
    }

    #[test]
    fn separable_ensemble_classifies_perfectly() {
        let mut rows: Vec<(Vec<f64>, f64)> = (0..20).map(|_| (vec![-1.0], 1.0)).collect();
        rows.extend((0..30).map(|_| (vec![-100.0], 0.0)));
        let e = fit_logistic_rows(&rows, 1);
        assert!(!e.degenerate);
        for (f, y) in &rows {
            let p = loss::sigmoid(e.bias + e.alpha[0] * f[0]);
            assert_eq!(p > 0.5, *y > 0.5);
        }
    }

    #[test]
    fn ensemble_descends_from_zero() {
        let mut rng = seed::rng(12, &[]);
        let rows: Vec<(Vec<f64>, f64)> = (0..300)
            .map(|i| {
                let y = (i % 2) as f64;
                (
                    vec![
                        y * 2.0 + rng.sample::<f64, _>(StandardNormal),
                        -30.0 * rng.gen::<f64>(),
                    ],
                    y,
                )
            })
            .collect();
        let e = fit_logistic_rows(&rows, 2);
        let fitted = mean_logistic_loss(&rows, &e.alpha, e.bias);
        let start = mean_logistic_loss(&rows, &[0.0, 0.0], 0.0);
        assert!((start - 2f64.ln()).abs() < 1e-12);
        assert!(fitted <= start);
    }

    #[test]
    fn degenerate_ensemble_uses_prior() {
        let mut rows: Vec<(Vec<f64>, f64)> = (0..30).map(|_| (vec![-2.0], 1.0)).collect();
        rows.extend((0..10).map(|_| (vec![-2.0], 0.0)));
        let e = fit_logistic_rows(&rows, 1);
        assert!(e.degenerate);
        assert_eq!(e.alpha, vec![0.0]);
        assert!((loss::sigmoid(e.bias) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_eta_features_are_raw_scores() {
        let head = hand_head(vec![vec![0.2, 0.2], vec![0.8, 0.8]], None);
        let m = identity_model();
        let x = [0.3, 0.6];
        let f = head.preprocessed_features(&m, &x, 0.0).unwrap();
        assert_eq!(f, vec![mahalanobis_layer_score(&head, &m, &x, 0).unwrap()]);
        // a positive eta moves toward the nearest mean, raising the score
        let g = head.preprocessed_features(&m, &x, 0.01).unwrap();
        assert!(g[0] > f[0]);
    }

    #[test]
    fn fit_ensemble_on_model() {
        let m = identity_model();
        let mut head = hand_head(vec![vec![0.3, 0.3], vec![0.7, 0.7]], None);
        let inl = LabeledSet::unlabeled(vec![vec![0.31, 0.3], vec![0.7, 0.69], vec![0.29, 0.32]]);
        let out = LabeledSet::unlabeled(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let e = fit_logistic_ensemble(&mut head, &m, &inl, &out, 0.0).unwrap();
        assert!(e.alpha[0] > 0.0);
        for x in &inl.points {
            assert!(mahalanobis_score(&head, &m, x).unwrap() > 0.5);
        }
        for x in &out.points {
            assert!(mahalanobis_score(&head, &m, x).unwrap() < 0.5);
        }
        assert!(fit_logistic_ensemble(&mut head, &m, &LabeledSet::default(), &out, 0.0).is_err());
    }

    #[test]
    fn head_text_roundtrip() {
        let mut head = hand_head(vec![vec![0.1, 0.2], vec![0.3, 1.0 / 3.0]], None);
        assert_eq!(read_head(&write_head(&head)).unwrap(), head);
        head.ensemble = Some(Ensemble {
            alpha: vec![0.7],
            bias: -0.1,
            degenerate: false,
        });
        head.eta = 0.002;
        let text = format!("aloe-model v1\nwhatever\n{}", write_head(&head));
        assert_eq!(read_head(&text).unwrap(), head);
        assert!(read_head("aloe-model v1\n").is_err());
    }
}
