//! Confidence scores and threshold detectors.
//!
//! A detector outputs 1 (in-distribution) iff its score is strictly greater
//! than the threshold `gamma`, and 0 otherwise.

mod mahalanobis;

pub use mahalanobis::{
    fit_logistic_ensemble, fit_mahalanobis, fit_mahalanobis_features, layer_score_of_features,
    mahalanobis_layer_score, mahalanobis_score, read_head, write_head, CovReg, Ensemble,
    EnsembleLoss, LayerGaussian, LayerScoreLoss, MahalanobisHead, HEAD_HEADER,
};

use crate::error::{Error, Result};
use crate::nn::{loss, Loss, Model};

/// Clamps every coordinate into the valid input box `[0,1]`.
pub fn clamp_unit(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

/// `sign` with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Maximum softmax probability at temperature 1.
pub fn msp_score(model: &Model, x: &[f64]) -> Result<f64> {
    let p = loss::softmax(&model.logits(x)?);
    Ok(p.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Temperature and input-preprocessing magnitude for ODIN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdinConfig {
    pub temperature: f64,
    pub eta: f64,
}

impl Default for OdinConfig {
    fn default() -> Self {
        Self {
            temperature: 1000.0,
            eta: 0.0,
        }
    }
}

impl OdinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Parameter(format!(
                "ODIN temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::Parameter(format!(
                "ODIN eta must be >= 0, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Max softmax component at temperature `T` after one signed-gradient step
/// `x~ = x - eta * sign(-grad_x log S(x; T))`, clamped to the unit box.
pub fn odin_score(model: &Model, x: &[f64], cfg: &OdinConfig) -> Result<f64> {
    cfg.validate()?;
    let t = cfg.temperature;
    let logits = if cfg.eta == 0.0 {
        model.logits(x)?
    } else {
        let (_, g) = model.input_grad(x, Loss::LogMaxSoftmax { temperature: t })?;
        let mut xt: Vec<f64> = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| xi - cfg.eta * sign(-gi))
            .collect();
        clamp_unit(&mut xt);
        model.logits(&xt)?
    };
    let p = loss::softmax_t(&logits, t)?;
    Ok(p.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Which confidence score a detector thresholds.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreFn {
    Msp,
    Odin(OdinConfig),
    Mahalanobis(Box<MahalanobisHead>),
}

impl ScoreFn {
    pub fn score(&self, model: &Model, x: &[f64]) -> Result<f64> {
        match self {
            ScoreFn::Msp => msp_score(model, x),
            ScoreFn::Odin(cfg) => odin_score(model, x, cfg),
            ScoreFn::Mahalanobis(head) => mahalanobis_score(head, model, x),
        }
    }

    /// Whether the matching attack is the softmax-score attack (as opposed
    /// to the Mahalanobis one).
    pub fn is_softmax_based(&self) -> bool {
        !matches!(self, ScoreFn::Mahalanobis(_))
    }
}

/// Threshold detector `G(x) = 1 iff S(x) > gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub score: ScoreFn,
    pub threshold: f64,
}

impl Detector {
    pub fn new(score: ScoreFn, threshold: f64) -> Self {
        Self { score, threshold }
    }
}

/// 1 if the detector keeps `x` as in-distribution, else 0.
pub fn detect(detector: &Detector, model: &Model, x: &[f64]) -> Result<u8> {
    Ok((detector.score.score(model, x)? > detector.threshold) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense, ModelSpec};
    use crate::seed;
    use rand::Rng;

    fn logistic_model() -> Model {
        let spec = ModelSpec::new(2, vec![], 2, Activation::Relu);
        let layer = Dense {
            in_dim: 2,
            out_dim: 2,
            weight: vec![1.0, 0.0, 0.0, 0.0],
            bias: vec![0.0, 0.0],
        };
        Model::from_layers(spec, vec![layer], 0).unwrap()
    }

    fn const_logits(z: [f64; 2]) -> Model {
        let spec = ModelSpec::new(2, vec![], 2, Activation::Relu);
        let layer = Dense {
            in_dim: 2,
            out_dim: 2,
            weight: vec![0.0; 4],
            bias: z.to_vec(),
        };
        Model::from_layers(spec, vec![layer], 0).unwrap()
    }

    fn zero4() -> Model {
        Model::zeros(ModelSpec::new(2, vec![3], 4, Activation::Relu)).unwrap()
    }

    #[test]
    fn msp_examples() {
        assert_eq!(msp_score(&zero4(), &[0.1, 0.2]).unwrap(), 0.25);
        assert!(
            (msp_score(&const_logits([2.0, 0.0]), &[0.5, 0.5]).unwrap() - 0.880797).abs() < 1e-6
        );
        let m = Model::new(ModelSpec::new(2, vec![8], 4, Activation::Relu), 3).unwrap();
        let mut rng = seed::rng(1, &[]);
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let s = msp_score(&m, &x).unwrap();
            assert!((0.25..=1.0).contains(&s));
        }
    }

    #[test]
    fn odin_without_preprocessing_is_msp() {
        let m = Model::new(ModelSpec::new(2, vec![8, 8], 4, Activation::Relu), 4).unwrap();
        let mut rng = seed::rng(2, &[]);
        let cfg = OdinConfig {
            temperature: 1.0,
            eta: 0.0,
        };
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert_eq!(
                odin_score(&m, &x, &cfg).unwrap(),
                msp_score(&m, &x).unwrap()
            );
        }
    }

    #[test]
    fn odin_high_temperature_is_uniform() {
        let m = Model::new(ModelSpec::new(2, vec![8], 4, Activation::Tanh), 5).unwrap();
        let s = odin_score(
            &m,
            &[0.3, 0.9],
            &OdinConfig {
                temperature: 1e6,
                eta: 0.0,
            },
        )
        .unwrap();
        assert!((s - 0.25).abs() < 1e-5);
    }

    #[test]
    fn odin_preprocessing_step() {
        // S = sigmoid(x0), grad log S = (1 - sigmoid(0.5)) e0 > 0, so x~ = (0.51, 0.5)
        let s = odin_score(
            &logistic_model(),
            &[0.5, 0.5],
            &OdinConfig {
                temperature: 1.0,
                eta: 0.01,
            },
        )
        .unwrap();
        assert!((s - 0.624806).abs() < 1e-5);
        assert!((s - loss::sigmoid(0.51)).abs() < 1e-15);
    }

    #[test]
    fn odin_clamps_to_domain() {
        // gradient pushes x0 up from 1.0; clamped back to the box
        let s = odin_score(
            &logistic_model(),
            &[1.0, 0.5],
            &OdinConfig {
                temperature: 1.0,
                eta: 0.3,
            },
        )
        .unwrap();
        assert_eq!(s, loss::sigmoid(1.0));
        assert!(odin_score(
            &logistic_model(),
            &[0.5, 0.5],
            &OdinConfig {
                temperature: 0.0,
                eta: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn detect_examples() {
        let m = zero4();
        let x = [0.4, 0.4];
        assert_eq!(
            detect(&Detector::new(ScoreFn::Msp, f64::NEG_INFINITY), &m, &x).unwrap(),
            1
        );
        assert_eq!(
            detect(&Detector::new(ScoreFn::Msp, f64::INFINITY), &m, &x).unwrap(),
            0
        );
        assert_eq!(
            detect(&Detector::new(ScoreFn::Msp, 0.25), &m, &x).unwrap(),
            0
        );
    }

    #[test]
    fn detect_monotone_in_threshold() {
        let m = Model::new(ModelSpec::new(2, vec![8], 3, Activation::Relu), 8).unwrap();
        let mut rng = seed::rng(3, &[]);
        for _ in 0..50 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let (g1, g2) = (rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0));
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let a = detect(&Detector::new(ScoreFn::Msp, lo), &m, &x).unwrap();
            let b = detect(&Detector::new(ScoreFn::Msp, hi), &m, &x).unwrap();
            assert!(a >= b);
        }
    }
}
