//! Training objectives: standard cross-entropy, outlier exposure (OE),
//! adversarial training on inliers (ADV), ADV plus clean OE (AOE), and ADV
//! plus adversarial OE (ALOE).
//!
//! Each minibatch freezes the parameters, runs the per-example inner
//! maximizations (in parallel when enabled), sums per-example gradients in
//! index order and takes one SGD step. The batch schedule depends only on the
//! seed and the dataset sizes, never on the objective, so objectives that
//! coincide for `eps = 0` or `lambda = 0` produce identical runs.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::attacks::{pgd, AttackConfig, Direction, Init};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::{axpy, Dense, Loss, Model, Sgd, SgdState};
use crate::par;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Standard,
    Oe,
    Adv,
    Aoe,
    Aloe,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Standard,
        Objective::Oe,
        Objective::Adv,
        Objective::Aoe,
        Objective::Aloe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Standard => "standard",
            Objective::Oe => "oe",
            Objective::Adv => "adv",
            Objective::Aoe => "aoe",
            Objective::Aloe => "aloe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown objective {s:?}")))
    }

    pub fn uses_outliers(self) -> bool {
        matches!(self, Objective::Oe | Objective::Aoe | Objective::Aloe)
    }

    pub fn adversarial_inliers(self) -> bool {
        matches!(self, Objective::Adv | Objective::Aoe | Objective::Aloe)
    }

    pub fn adversarial_outliers(self) -> bool {
        self == Objective::Aloe
    }
}

/// Inner maximizer settings: budget, step size and (by default) the step
/// count `floor(eps / step) + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerPgd {
    pub eps: f64,
    pub step_size: f64,
    pub steps: Option<usize>,
    pub random_start: bool,
}

impl Default for InnerPgd {
    fn default() -> Self {
        Self {
            eps: 0.02,
            step_size: 0.002,
            steps: None,
            random_start: true,
        }
    }
}

impl InnerPgd {
    pub fn num_steps(&self) -> usize {
        self.steps.unwrap_or_else(|| {
            if self.step_size > 0.0 {
                // the small slack keeps exact ratios like 0.02 / 0.002 from flooring to 9
                (self.eps / self.step_size + 1e-9).floor() as usize + 1
            } else {
                1
            }
        })
    }

    pub fn attack_config(&self, seed: u64) -> AttackConfig {
        AttackConfig {
            eps: self.eps,
            steps: self.num_steps(),
            step_size: self.step_size,
            init: if self.random_start {
                Init::RandomInBall
            } else {
                Init::Zero
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Weight of the outlier term.
    pub lambda: f64,
    pub inner: InnerPgd,
    pub epochs: usize,
    pub batch_in: usize,
    pub batch_oe: usize,
    pub sgd: Sgd,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Standard,
            lambda: 0.5,
            inner: InnerPgd::default(),
            epochs: 10,
            batch_in: 64,
            batch_oe: 128,
            sgd: Sgd {
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 5e-4,
            },
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.batch_in == 0 || self.batch_oe == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.objective.adversarial_inliers() {
            if self.inner.num_steps() == 0 {
                return Err(Error::Config(
                    "adversarial objectives need at least one inner step".into(),
                ));
            }
            self.inner.attack_config(0).validate()?;
        }
        self.sgd.validate()
    }
}

/// Mean losses over one epoch, evaluated at the batch-start parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub in_loss: f64,
    /// Mean outlier term (before the `lambda` weight); 0 without outliers.
    pub out_loss: f64,
    /// `in_loss + lambda * out_loss`.
    pub total: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub model: Model,
}

/// Worst-case label cross-entropy perturbation (PGD ascent).
pub fn inner_max_ce(model: &Model, x: &[f64], y: usize, cfg: &AttackConfig) -> Result<Vec<f64>> {
    crate::attacks::attack_classifier(model, x, y, cfg)
}

/// Worst-case cross-entropy-to-uniform perturbation (PGD ascent).
pub fn inner_max_uniform(model: &Model, x: &[f64], cfg: &AttackConfig) -> Result<Vec<f64>> {
    pgd(model, x, Loss::CeUniform, Direction::Ascent, cfg)
}

fn add(x: &[f64], d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + b).collect()
}

fn zero_grads(model: &Model) -> Vec<Dense> {
    model
        .layers()
        .iter()
        .map(|l| Dense::zeros(l.in_dim, l.out_dim))
        .collect()
}

/// Trains a copy of `model` and returns it with per-epoch losses.
pub fn train(
    model: &Model,
    d_in: &LabeledSet,
    d_oe: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with(model, d_in, d_oe, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch(epoch_index, model)` after every epoch.
pub fn train_with<F>(
    model: &Model,
    d_in: &LabeledSet,
    d_oe: &LabeledSet,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(usize, &Model) -> Result<()>,
{
    cfg.validate()?;
    if d_in.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    if !d_in.is_labeled() {
        return Err(Error::Config("training set must be class-labeled".into()));
    }
    if let Some(&y) = d_in
        .labels
        .iter()
        .find(|&&y| y as usize >= model.num_classes())
    {
        return Err(Error::Label {
            label: y,
            classes: model.num_classes(),
        });
    }
    let obj = cfg.objective;
    if obj.uses_outliers() && d_oe.is_empty() {
        return Err(Error::Config(format!(
            "objective {} needs auxiliary outliers",
            obj.name()
        )));
    }
    let mut model = model.clone();
    let mut state = SgdState::new(&model);
    let n_in = d_in.len();
    let n_batches = n_in.div_ceil(cfg.batch_in);
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let e = epoch as u64;
        let mut order_in: Vec<usize> = (0..n_in).collect();
        order_in.shuffle(&mut seed::rng(cfg.seed, &[stream::TRAIN_SHUFFLE, e, 0]));
        let mut order_oe: Vec<usize> = (0..d_oe.len()).collect();
        order_oe.shuffle(&mut seed::rng(cfg.seed, &[stream::TRAIN_SHUFFLE, e, 1]));

        let (mut sum_in, mut cnt_in, mut sum_out, mut cnt_out) = (0.0, 0usize, 0.0, 0usize);
        for b in 0..n_batches {
            let idx = &order_in[b * cfg.batch_in..((b + 1) * cfg.batch_in).min(n_in)];
            let frozen = &model;
            let in_terms = par::map_indexed(idx, |j, &i| {
                let x = &d_in.points[i];
                let y = d_in.labels[i] as usize;
                let xa = if obj.adversarial_inliers() {
                    let a = cfg.inner.attack_config(seed::derive(
                        cfg.seed,
                        &[stream::TRAIN_INNER_IN, e, b as u64, j as u64],
                    ));
                    add(x, &inner_max_ce(frozen, x, y, &a)?)
                } else {
                    x.clone()
                };
                frozen.backward(&xa, Loss::CeLabel(y))
            });
            let mut grads = zero_grads(&model);
            let scale_in = 1.0 / idx.len() as f64;
            for r in in_terms {
                let r = r?;
                sum_in += r.loss;
                cnt_in += 1;
                axpy(&mut grads, scale_in, &r.params)?;
            }

            if obj.uses_outliers() {
                let n_oe = d_oe.len();
                let oe_idx: Vec<usize> = (0..cfg.batch_oe)
                    .map(|k| order_oe[(b * cfg.batch_oe + k) % n_oe])
                    .collect();
                let out_terms = par::map_indexed(&oe_idx, |j, &i| {
                    let x = &d_oe.points[i];
                    let xa = if obj.adversarial_outliers() {
                        let a = cfg.inner.attack_config(seed::derive(
                            cfg.seed,
                            &[stream::TRAIN_INNER_OE, e, b as u64, j as u64],
                        ));
                        add(x, &inner_max_uniform(frozen, x, &a)?)
                    } else {
                        x.clone()
                    };
                    frozen.backward(&xa, Loss::CeUniform)
                });
                let scale_out = cfg.lambda / oe_idx.len() as f64;
                for r in out_terms {
                    let r = r?;
                    sum_out += r.loss;
                    cnt_out += 1;
                    if cfg.lambda != 0.0 {
                        axpy(&mut grads, scale_out, &r.params)?;
                    }
                }
            }
            cfg.sgd.step(&mut model, &grads, &mut state)?;
        }

        let in_loss = sum_in / cnt_in as f64;
        let out_loss = if cnt_out > 0 {
            sum_out / cnt_out as f64
        } else {
            0.0
        };
        let total = in_loss + cfg.lambda * out_loss;
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite training loss in epoch {epoch}"
            )));
        }
        epochs.push(EpochStats {
            in_loss,
            out_loss,
            total,
            seconds: t0.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: in {in_loss:.6} out {out_loss:.6} total {total:.6}");
        on_epoch(epoch, &model)?;
    }
    Ok(TrainReport { epochs, model })
}
