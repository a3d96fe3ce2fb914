//! The default synthetic benchmark and the train / fit / evaluate pipeline
//! shared by the command-line tool and the acceptance tests.
//!
//! Every method is a (training objective, score) pair. Seeds for data,
//! splits, model initialization and attacks are derived from one master
//! seed, and every objective starts from the same initial weights.

use crate::attacks::AttackConfig;
use crate::data::{generate, split, DatasetKind, DatasetSpec, LabelMode, LabeledSet};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, ReportRow};
use crate::nn::{Activation, Model, ModelSpec, Sgd};
use crate::scores::{fit_logistic_ensemble, fit_mahalanobis, CovReg, OdinConfig, ScoreFn};
use crate::seed::{self, stream};
use crate::train::{train_with, Objective, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Msp,
    Odin,
    Mahalanobis,
}

/// A row of the results table: a trained model and the score read from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Msp,
    Odin,
    Mahalanobis,
    Oe,
    OeOdin,
    Adv,
    Aoe,
    Aloe,
    AloeOdin,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Msp,
        Method::Odin,
        Method::Mahalanobis,
        Method::Oe,
        Method::OeOdin,
        Method::Adv,
        Method::Aoe,
        Method::Aloe,
        Method::AloeOdin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Msp => "msp",
            Method::Odin => "odin",
            Method::Mahalanobis => "mahalanobis",
            Method::Oe => "oe",
            Method::OeOdin => "oe+odin",
            Method::Adv => "adv",
            Method::Aoe => "aoe",
            Method::Aloe => "aloe",
            Method::AloeOdin => "aloe+odin",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }

    pub fn objective(self) -> Objective {
        match self {
            Method::Msp | Method::Odin | Method::Mahalanobis => Objective::Standard,
            Method::Oe | Method::OeOdin => Objective::Oe,
            Method::Adv => Objective::Adv,
            Method::Aoe => Objective::Aoe,
            Method::Aloe | Method::AloeOdin => Objective::Aloe,
        }
    }

    pub fn score_kind(self) -> ScoreKind {
        match self {
            Method::Odin | Method::OeOdin | Method::AloeOdin => ScoreKind::Odin,
            Method::Mahalanobis => ScoreKind::Mahalanobis,
            _ => ScoreKind::Msp,
        }
    }
}

/// Full description of one benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    /// Class-labeled inliers; split into train / validation / test.
    pub p: DatasetSpec,
    /// Auxiliary outliers; split into training outliers and validation.
    pub u: DatasetSpec,
    /// Named test-outlier variants; results are averaged over them.
    pub q: Vec<(String, DatasetSpec)>,
    pub p_fractions: [f64; 3],
    pub u_fractions: [f64; 2],
    pub model: ModelSpec,
    /// Shared training settings; the objective is set per method.
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub odin: OdinConfig,
    pub mahal_reg: CovReg,
    pub mahal_eta: f64,
}

fn blobs(centers: &[[f64; 2]], stds: &[[f64; 2]], n: usize) -> DatasetSpec {
    DatasetSpec {
        kind: DatasetKind::GaussBlobs {
            centers: centers.iter().map(|c| c.to_vec()).collect(),
            stds: stds.iter().map(|s| s.to_vec()).collect(),
        },
        n,
        seed: 0,
        label_mode: LabelMode::Classes,
    }
}

fn unlabeled(kind: DatasetKind, n: usize) -> DatasetSpec {
    DatasetSpec {
        kind,
        n,
        seed: 0,
        label_mode: LabelMode::Unlabeled,
    }
}

impl Default for Benchmark {
    /// Four blobs on a 2x2 grid with alternating tight / wide classes, an
    /// auxiliary ring around them, and three test-outlier regions: the gap at
    /// the center of the grid and two thin rings just inside the auxiliary ring.
    fn default() -> Self {
        let c = 0.5;
        let s = 0.05;
        let centers = [
            [c - s, c - s],
            [c + s, c - s],
            [c - s, c + s],
            [c + s, c + s],
        ];
        let (tight, wide) = (0.005, 0.025);
        let stds = [[tight, tight], [wide, wide], [wide, wide], [tight, tight]];
        let ring = |inner: f64, outer: f64| DatasetKind::Ring {
            center: vec![c, c],
            inner,
            outer,
        };
        Self {
            p: blobs(&centers, &stds, 2000),
            u: unlabeled(ring(0.17, 0.3), 2000),
            q: vec![
                (
                    "center".to_string(),
                    unlabeled(
                        DatasetKind::UniformBox {
                            lo: vec![0.49, 0.49],
                            hi: vec![0.51, 0.51],
                        },
                        500,
                    ),
                ),
                ("ring-a".to_string(), unlabeled(ring(0.14, 0.16), 500)),
                ("ring-b".to_string(), unlabeled(ring(0.15, 0.17), 500)),
            ],
            p_fractions: [0.6, 0.1, 0.3],
            u_fractions: [0.9, 0.1],
            model: ModelSpec::new(2, vec![32, 32], 4, Activation::Relu),
            train: TrainConfig {
                epochs: 300,
                batch_in: 64,
                batch_oe: 128,
                sgd: Sgd {
                    lr: 0.02,
                    momentum: 0.9,
                    weight_decay: 0.0,
                },
                ..TrainConfig::default()
            },
            attack: AttackConfig::default(),
            odin: OdinConfig::default(),
            mahal_reg: CovReg::default(),
            mahal_eta: 0.0,
        }
    }
}

/// Generated and split data for one master seed.
#[derive(Debug, Clone)]
pub struct BenchData {
    pub train: LabeledSet,
    pub val: LabeledSet,
    pub test: LabeledSet,
    pub oe_train: LabeledSet,
    pub oe_val: LabeledSet,
    pub q_tests: Vec<(String, LabeledSet)>,
}

impl Benchmark {
    pub fn validate(&self) -> Result<()> {
        self.p.validate()?;
        if self.p.label_mode != LabelMode::Classes {
            return Err(Error::Config("inlier dataset must be class-labeled".into()));
        }
        self.u.validate()?;
        if self.q.is_empty() {
            return Err(Error::Config(
                "at least one test-outlier dataset is required".into(),
            ));
        }
        let d = self.p.kind.dim();
        for (name, q) in &self.q {
            q.validate()?;
            if q.kind.dim() != d {
                return Err(Error::Config(format!(
                    "test outliers {name:?} have dimension {} != {d}",
                    q.kind.dim()
                )));
            }
        }
        if self.u.kind.dim() != d || self.model.input_dim != d {
            return Err(Error::Config(
                "dataset and model dimensions disagree".into(),
            ));
        }
        if self.model.num_classes != self.p.kind.num_classes() {
            return Err(Error::Config(format!(
                "model has {} classes but the inlier data has {}",
                self.model.num_classes,
                self.p.kind.num_classes()
            )));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.attack.validate()?;
        self.odin.validate()?;
        Ok(())
    }

    /// Generates and splits every dataset from `master`.
    pub fn data(&self, master: u64) -> Result<BenchData> {
        self.validate()?;
        let with_seed = |spec: &DatasetSpec, k: u64| DatasetSpec {
            seed: seed::derive(master, &[stream::DATA, k]),
            ..spec.clone()
        };
        let p = generate(&with_seed(&self.p, 0))?;
        let u = generate(&with_seed(&self.u, 1))?;
        let mut ps = split(
            &p,
            &self.p_fractions,
            seed::derive(master, &[stream::SPLIT, 0]),
        )?
        .into_iter();
        let mut us = split(
            &u,
            &self.u_fractions,
            seed::derive(master, &[stream::SPLIT, 1]),
        )?
        .into_iter();
        let q_tests = self
            .q
            .iter()
            .enumerate()
            .map(|(i, (name, spec))| Ok((name.clone(), generate(&with_seed(spec, 2 + i as u64))?)))
            .collect::<Result<Vec<_>>>()?;
        let data = BenchData {
            train: ps.next().unwrap_or_default(),
            val: ps.next().unwrap_or_default(),
            test: ps.next().unwrap_or_default(),
            oe_train: us.next().unwrap_or_default(),
            oe_val: us.next().unwrap_or_default(),
            q_tests,
        };
        if data.train.is_empty() || data.test.is_empty() || data.val.is_empty() {
            return Err(Error::Config("inlier splits must all be nonempty".into()));
        }
        Ok(data)
    }

    /// Initial weights shared by every objective.
    pub fn init_model(&self, master: u64) -> Result<Model> {
        Model::new(
            self.model.clone(),
            seed::derive(master, &[stream::TRAIN_SHUFFLE, u64::MAX]),
        )
    }

    pub fn train_config(&self, objective: Objective, master: u64) -> TrainConfig {
        TrainConfig {
            objective,
            seed: master,
            ..self.train
        }
    }

    pub fn attack_config(&self, master: u64) -> AttackConfig {
        AttackConfig {
            seed: seed::derive(master, &[stream::ATTACK]),
            ..self.attack
        }
    }

    /// Trains one objective; `on_epoch` sees each epoch's model.
    pub fn train_objective<F>(
        &self,
        data: &BenchData,
        objective: Objective,
        master: u64,
        on_epoch: F,
    ) -> Result<TrainReport>
    where
        F: FnMut(usize, &Model) -> Result<()>,
    {
        let init = self.init_model(master)?;
        train_with(
            &init,
            &data.train,
            &data.oe_train,
            &self.train_config(objective, master),
            on_epoch,
        )
    }

    /// The detector score for a method, fitting the Mahalanobis head if needed.
    pub fn score_fn(&self, method: Method, model: &Model, data: &BenchData) -> Result<ScoreFn> {
        Ok(match method.score_kind() {
            ScoreKind::Msp => ScoreFn::Msp,
            ScoreKind::Odin => ScoreFn::Odin(self.odin),
            ScoreKind::Mahalanobis => {
                let mut head = fit_mahalanobis(model, &data.train, self.mahal_reg)?;
                fit_logistic_ensemble(&mut head, model, &data.val, &data.oe_val, self.mahal_eta)?;
                ScoreFn::Mahalanobis(Box::new(head))
            }
        })
    }
}

/// Evaluations of one method on every test-outlier variant, clean and under
/// each attack of the grid, plus the Q-averaged report rows.
#[derive(Debug, Clone)]
pub struct MethodResults {
    pub method: Method,
    /// `cells[a][q]`: attack `a` (0 = clean, then the grid) on variant `q`.
    pub cells: Vec<Vec<EvalReport>>,
    pub rows: Vec<ReportRow>,
}

/// Clean evaluation followed by every attack in `grid`, on every Q variant.
pub fn evaluate_method(
    method: Method,
    score: &ScoreFn,
    model: &Model,
    data: &BenchData,
    grid: &[AttackConfig],
) -> Result<MethodResults> {
    let attacks: Vec<Option<&AttackConfig>> =
        std::iter::once(None).chain(grid.iter().map(Some)).collect();
    let mut cells = Vec::with_capacity(attacks.len());
    let mut rows = Vec::with_capacity(attacks.len());
    for attack in attacks {
        let per_q = data
            .q_tests
            .iter()
            .map(|(_, q)| evaluate(method.name(), score, model, &data.test, q, attack))
            .collect::<Result<Vec<_>>>()?;
        let qrows: Vec<ReportRow> = per_q.iter().map(ReportRow::from_report).collect();
        rows.push(ReportRow::mean(&qrows)?);
        cells.push(per_q);
    }
    Ok(MethodResults {
        method,
        cells,
        rows,
    })
}
