//! Perturbation sets and white-box PGD attacks.
//!
//! Three attacks share one signed-gradient loop: the softmax-detector attack
//! (descent on cross-entropy to uniform for inliers, on entropy for
//! outliers), the Mahalanobis-detector attack (ascent on the negative log
//! likelihood of the logistic ensemble, without input preprocessing) and PGD
//! on the classifier (ascent on the label cross-entropy). Every iterate is
//! projected back into the perturbation set; the last iterate is returned.

use rand::distributions::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::nn::{Loss, Model};
use crate::scores::{sign, EnsembleLoss, MahalanobisHead, ScoreFn};
use crate::{par, seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Linf,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// `x + delta` must stay in `[0,1]^d`.
    UnitBox,
    Unconstrained,
}

/// `B(x, eps) = { delta : |delta| <= eps and x + delta in domain }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSet {
    pub norm: Norm,
    pub eps: f64,
    pub domain: Domain,
}

impl PerturbationSet {
    pub fn linf(eps: f64) -> Self {
        Self {
            norm: Norm::Linf,
            eps,
            domain: Domain::UnitBox,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Parameter(format!(
                "budget must be finite and >= 0, got {}",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn norm_of(&self, delta: &[f64]) -> f64 {
        match self.norm {
            Norm::Linf => delta.iter().fold(0.0, |m, v| m.max(v.abs())),
            Norm::L2 => delta.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Exact membership test (no tolerance).
    pub fn contains(&self, x: &[f64], delta: &[f64]) -> bool {
        if x.len() != delta.len() || self.norm_of(delta) > self.eps {
            return false;
        }
        match self.domain {
            Domain::Unconstrained => true,
            Domain::UnitBox => x
                .iter()
                .zip(delta)
                .all(|(a, d)| (0.0..=1.0).contains(&(a + d))),
        }
    }
}

/// Projects `delta` onto `B(x, eps)`.
///
/// For the box domain the result additionally satisfies `0 <= x + delta <= 1`
/// in floating point, which can require a one-ulp nudge after clamping to
/// `[-x, 1 - x]`.
pub fn project(delta: &[f64], x: &[f64], set: &PerturbationSet) -> Vec<f64> {
    let eps = set.eps;
    let mut out: Vec<f64> = match set.norm {
        Norm::Linf => delta.iter().map(|d| d.clamp(-eps, eps)).collect(),
        Norm::L2 => {
            let n = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > eps {
                let s = eps / n;
                let mut v: Vec<f64> = delta.iter().map(|d| d * s).collect();
                // rounding can leave the rescaled norm a hair above eps
                while v.iter().map(|a| a * a).sum::<f64>().sqrt() > eps {
                    for a in v.iter_mut() {
                        *a = if *a > 0.0 {
                            a.next_down()
                        } else if *a < 0.0 {
                            a.next_up()
                        } else {
                            0.0
                        };
                    }
                }
                v
            } else {
                delta.to_vec()
            }
        }
    };
    if set.domain == Domain::UnitBox {
        for (d, &xi) in out.iter_mut().zip(x) {
            *d = d.clamp(-xi, 1.0 - xi);
            while xi + *d > 1.0 {
                *d = d.next_down();
            }
            while xi + *d < 0.0 {
                *d = d.next_up();
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Each coordinate uniform in `[-eps, eps]`, then projected.
    RandomInBall,
    Zero,
}

/// L-infinity PGD settings on the unit box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub eps: f64,
    /// Number of gradient steps `m`.
    pub steps: usize,
    /// Step size `xi`.
    pub step_size: f64,
    pub init: Init,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            eps: 0.02,
            steps: 10,
            step_size: 0.002,
            init: Init::RandomInBall,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        self.set().validate()?;
        if self.steps > 0 && !(self.step_size > 0.0) {
            return Err(Error::Parameter(format!(
                "step size must be > 0 when steps > 0, got {}",
                self.step_size
            )));
        }
        Ok(())
    }

    pub fn set(&self) -> PerturbationSet {
        PerturbationSet::linf(self.eps)
    }

    /// Copy with the seed replaced by a per-item derivation.
    pub fn for_item(&self, path: &[u64]) -> Self {
        Self {
            seed: seed::derive(self.seed, path),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Ascent,
    Descent,
}

/// Signed-gradient PGD on `loss` at `x + delta`; returns the last `delta`.
pub(crate) fn pgd(
    model: &Model,
    x: &[f64],
    loss: Loss<'_>,
    dir: Direction,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.len() != model.input_dim() {
        return Err(Error::InputShape {
            expected: model.input_dim(),
            got: x.len(),
        });
    }
    let d = x.len();
    if cfg.eps == 0.0 {
        return Ok(vec![0.0; d]);
    }
    let set = cfg.set();
    let mut delta = match cfg.init {
        Init::Zero => vec![0.0; d],
        Init::RandomInBall => {
            let mut rng = seed::rng(cfg.seed, &[]);
            let u = Uniform::new_inclusive(-cfg.eps, cfg.eps);
            let raw: Vec<f64> = (0..d).map(|_| u.sample(&mut rng)).collect();
            project(&raw, x, &set)
        }
    };
    let step = match dir {
        Direction::Ascent => cfg.step_size,
        Direction::Descent => -cfg.step_size,
    };
    let mut xd = vec![0.0; d];
    for _ in 0..cfg.steps {
        for ((o, a), b) in xd.iter_mut().zip(x).zip(&delta) {
            *o = a + b;
        }
        let (_, g) = model.input_grad(&xd, loss)?;
        let moved: Vec<f64> = delta
            .iter()
            .zip(&g)
            .map(|(dl, gi)| dl + step * sign(*gi))
            .collect();
        delta = project(&moved, x, &set);
    }
    Ok(delta)
}

/// Attack on softmax-score detectors: inliers descend the cross-entropy to
/// uniform (lower confidence), outliers descend the softmax entropy (higher
/// confidence). Gradients are taken at temperature 1.
pub fn attack_softmax_detector(
    model: &Model,
    x: &[f64],
    is_in: bool,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    let loss = if is_in {
        Loss::CeUniform
    } else {
        Loss::Entropy
    };
    pgd(model, x, loss, Direction::Descent, cfg)
}

/// Attack on the Mahalanobis detector: ascent on `-log p` (inliers) or
/// `-log(1 - p)` (outliers) with `p` the ensemble probability on clean layer
/// scores.
pub fn attack_mahalanobis_detector(
    head: &MahalanobisHead,
    model: &Model,
    x: &[f64],
    is_in: bool,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    if head.ensemble.is_none() {
        return Err(Error::Unfitted("Mahalanobis ensemble weights".into()));
    }
    let loss = EnsembleLoss { head, is_in };
    pgd(model, x, Loss::Features(&loss), Direction::Ascent, cfg)
}

/// PGD ascent on the label cross-entropy.
pub fn attack_classifier(
    model: &Model,
    x: &[f64],
    y: usize,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    if y >= model.num_classes() {
        return Err(Error::Label {
            label: y as i64,
            classes: model.num_classes(),
        });
    }
    pgd(model, x, Loss::CeLabel(y), Direction::Ascent, cfg)
}

/// Which attack to run over a batch.
#[derive(Clone, Copy)]
pub enum AttackKind<'a> {
    Softmax,
    Mahalanobis(&'a MahalanobisHead),
    Classifier,
}

impl<'a> AttackKind<'a> {
    /// The attack matching a detector score.
    pub fn matching(score: &'a ScoreFn) -> Self {
        match score {
            ScoreFn::Mahalanobis(head) => AttackKind::Mahalanobis(head),
            _ => AttackKind::Softmax,
        }
    }
}

/// Attacks every point and returns the perturbed points `x + delta`.
///
/// Item `i` uses the seed `derive(cfg.seed, [ATTACK, is_in, i])`. `labels` is
/// required for the classifier attack.
pub fn attack_points(
    model: &Model,
    points: &[Vec<f64>],
    labels: Option<&[i64]>,
    is_in: bool,
    kind: AttackKind<'_>,
    cfg: &AttackConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if let (AttackKind::Classifier, None) = (kind, labels) {
        return Err(Error::Parameter("classifier attack needs labels".into()));
    }
    let results = par::map_indexed(points, |i, x| {
        let item = cfg.for_item(&[seed::stream::ATTACK, is_in as u64, i as u64]);
        let delta = match kind {
            AttackKind::Softmax => attack_softmax_detector(model, x, is_in, &item)?,
            AttackKind::Mahalanobis(head) => {
                attack_mahalanobis_detector(head, model, x, is_in, &item)?
            }
            AttackKind::Classifier => {
                let y = labels.expect("checked above")[i];
                if y < 0 {
                    return Err(Error::Label {
                        label: y,
                        classes: model.num_classes(),
                    });
                }
                attack_classifier(model, x, y as usize, &item)?
            }
        };
        Ok(x.iter().zip(&delta).map(|(a, b)| a + b).collect())
    });
    results.into_iter().collect()
}
