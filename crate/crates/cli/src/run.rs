//! The train / evaluate / theory pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use aloe_core::attacks::AttackConfig;
use aloe_core::benchmark::{evaluate_method, BenchData, Method, ScoreKind};
use aloe_core::metrics::{
    accuracy, robust_accuracy, write_histogram_csv, write_report_csv, write_scores_csv, EvalReport,
    REPORT_HEADER,
};
use aloe_core::nn::{read_model, write_model, Model};
use aloe_core::scores::{read_head, write_head, MahalanobisHead, ScoreFn};
use aloe_core::seed::{self, stream};
use aloe_core::textio::fmt_f64;
use aloe_core::theory::{bound_table, write_theory_csv};
use aloe_core::train::Objective;
use anyhow::{bail, Context, Result};
use log::info;

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Train,
    Eval,
    AttackEval,
    Theory,
    All,
}

pub struct Options {
    pub save_epochs: bool,
}

/// Trained models keyed by objective, plus the Mahalanobis head when a
/// method needs it.
struct Trained {
    models: BTreeMap<&'static str, Model>,
    head: Option<MahalanobisHead>,
}

pub fn run(cfg: &RunConfig, command: Command, opts: &Options) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    match command {
        Command::Train => {
            train_all(cfg, &cfg.bench.data(cfg.seed)?, opts)?;
        }
        Command::Eval => evaluate(cfg, &cfg.bench.data(cfg.seed)?, &load(cfg)?, false)?,
        Command::AttackEval => evaluate(cfg, &cfg.bench.data(cfg.seed)?, &load(cfg)?, true)?,
        Command::Theory => theory(cfg)?,
        Command::All => {
            let data = cfg.bench.data(cfg.seed)?;
            let trained = train_all(cfg, &data, opts)?;
            evaluate(cfg, &data, &trained, true)?;
            theory(cfg)?;
        }
    }
    Ok(())
}

fn objectives(cfg: &RunConfig) -> Vec<Objective> {
    Objective::ALL
        .into_iter()
        .filter(|o| cfg.methods.iter().any(|m| m.objective() == *o))
        .collect()
}

fn needs_head(cfg: &RunConfig) -> bool {
    cfg.methods
        .iter()
        .any(|m| m.score_kind() == ScoreKind::Mahalanobis)
}

fn checkpoint_path(cfg: &RunConfig, o: Objective) -> PathBuf {
    cfg.out
        .join("checkpoints")
        .join(format!("{}.model", o.name()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train_all(cfg: &RunConfig, data: &BenchData, opts: &Options) -> Result<Trained> {
    let mut models = BTreeMap::new();
    for o in objectives(cfg) {
        info!("training {}", o.name());
        let epoch_dir = cfg.out.join("checkpoints").join(o.name());
        let report = cfg
            .bench
            .train_objective(data, o, cfg.seed, |epoch, model| {
                if opts.save_epochs {
                    fs::create_dir_all(&epoch_dir)?;
                    fs::write(
                        epoch_dir.join(format!("epoch-{:04}.model", epoch + 1)),
                        write_model(model),
                    )?;
                }
                Ok(())
            })?;
        let mut log = String::from("epoch,in_loss,out_loss,total\n");
        for (i, e) in report.epochs.iter().enumerate() {
            log.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                fmt_f64(e.in_loss),
                fmt_f64(e.out_loss),
                fmt_f64(e.total)
            ));
        }
        write(&cfg.out.join(format!("train-{}.csv", o.name())), &log)?;
        models.insert(o.name(), report.model);
    }
    let head = if needs_head(cfg) {
        let model = &models[Objective::Standard.name()];
        match cfg.bench.score_fn(Method::Mahalanobis, model, data)? {
            ScoreFn::Mahalanobis(h) => Some(*h),
            _ => unreachable!("mahalanobis method yields a mahalanobis score"),
        }
    } else {
        None
    };
    for (name, model) in &models {
        let mut text = write_model(model);
        if let (Some(h), true) = (&head, *name == Objective::Standard.name()) {
            text.push_str(&write_head(h));
        }
        write(&checkpoint_path(cfg, Objective::parse(name)?), &text)?;
    }
    Ok(Trained { models, head })
}

fn load(cfg: &RunConfig) -> Result<Trained> {
    let mut models = BTreeMap::new();
    let mut head = None;
    for o in objectives(cfg) {
        let path = checkpoint_path(cfg, o);
        let text = fs::read_to_string(&path).with_context(|| {
            format!("missing checkpoint {} (run `train` first)", path.display())
        })?;
        let model = read_model(&text).with_context(|| format!("reading {}", path.display()))?;
        if model.spec() != &cfg.bench.model {
            bail!(
                "checkpoint {} does not match the configured model",
                path.display()
            );
        }
        if o == Objective::Standard && needs_head(cfg) {
            head =
                Some(read_head(&text).with_context(|| {
                    format!("reading the Mahalanobis head in {}", path.display())
                })?);
        }
        models.insert(o.name(), model);
    }
    Ok(Trained { models, head })
}

fn attack_tag(i: usize, a: &AttackConfig) -> String {
    format!("a{}-eps{}-m{}", i + 1, a.eps, a.steps)
}

fn evaluate(cfg: &RunConfig, data: &BenchData, trained: &Trained, attacked: bool) -> Result<()> {
    let grid: Vec<AttackConfig> = if attacked {
        let s = seed::derive(cfg.seed, &[stream::ATTACK]);
        cfg.attacks
            .iter()
            .map(|a| AttackConfig { seed: s, ..*a })
            .collect()
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    println!("{REPORT_HEADER}");
    for &method in &cfg.methods {
        info!("evaluating {}", method.name());
        let model = &trained.models[method.objective().name()];
        let score = match method.score_kind() {
            ScoreKind::Mahalanobis => ScoreFn::Mahalanobis(Box::new(
                trained
                    .head
                    .clone()
                    .context("no Mahalanobis head available")?,
            )),
            _ => cfg.bench.score_fn(method, model, data)?,
        };
        let res = evaluate_method(method, &score, model, data, &grid)?;
        for (a, per_q) in res.cells.iter().enumerate() {
            let tag = if a == 0 {
                "clean".to_string()
            } else {
                attack_tag(a - 1, &grid[a - 1])
            };
            for ((qname, _), report) in data.q_tests.iter().zip(per_q) {
                write_cell(cfg, method, &tag, qname, report)?;
            }
        }
        for row in &res.rows {
            println!("{}", row.to_csv());
        }
        rows.extend(res.rows);
    }
    write(&cfg.out.join("report.csv"), &write_report_csv(&rows))?;
    if attacked {
        write_accuracy(cfg, data, trained, &grid)?;
    }
    Ok(())
}

fn write_cell(cfg: &RunConfig, method: Method, tag: &str, q: &str, r: &EvalReport) -> Result<()> {
    let rel = Path::new(method.name()).join(tag).join(format!("{q}.csv"));
    if cfg.write_scores {
        write(
            &cfg.out.join("scores").join(&rel),
            &write_scores_csv(&r.scores),
        )?;
    }
    if cfg.write_histograms {
        write(
            &cfg.out.join("histograms").join(&rel),
            &write_histogram_csv(&r.histogram),
        )?;
    }
    Ok(())
}

/// Clean and robust test accuracy of each trained classifier.
fn write_accuracy(
    cfg: &RunConfig,
    data: &BenchData,
    trained: &Trained,
    grid: &[AttackConfig],
) -> Result<()> {
    let mut out = String::from("objective,attack,eps,m,accuracy\n");
    for (name, model) in &trained.models {
        out.push_str(&format!(
            "{name},none,0,0,{}\n",
            fmt_f64(accuracy(model, &data.test)?)
        ));
        for a in grid {
            let acc = robust_accuracy(model, &data.test, a)?;
            out.push_str(&format!(
                "{name},pgd,{},{},{}\n",
                fmt_f64(a.eps),
                a.steps,
                fmt_f64(acc)
            ));
        }
    }
    write(&cfg.out.join("accuracy.csv"), &out)
}

fn theory(cfg: &RunConfig) -> Result<()> {
    let t = &cfg.theory;
    info!(
        "theory check on the {} geometry with {} samples",
        t.geometry, t.samples
    );
    let (rows, d) = bound_table(&t.world, &t.radii, &t.grid, t.samples, cfg.seed)?;
    write(&cfg.out.join("theory.csv"), &write_theory_csv(&rows))?;
    let worst = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    println!(
        "theory: d_G {} (sigma {}), min slack {}",
        fmt_f64(d.value),
        fmt_f64(d.sigma),
        fmt_f64(worst)
    );
    Ok(())
}
