//! Threshold-free detection metrics and the clean-vs-attacked harness.
//!
//! Inliers are positives (`z = 1`). A detector keeps a point iff its score is
//! strictly above the threshold; candidate thresholds are the distinct
//! observed scores plus `-inf` and `+inf`.

use crate::attacks::{attack_points, AttackConfig, AttackKind};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::par;
use crate::scores::ScoreFn;
use crate::textio::fmt_f64;

pub const HIST_BINS: usize = 50;

/// Scores of inliers (`z = 1`) and outliers (`z = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEval {
    pub in_scores: Vec<f64>,
    pub out_scores: Vec<f64>,
    pub attack: Option<AttackConfig>,
}

impl ScoredEval {
    pub fn new(in_scores: Vec<f64>, out_scores: Vec<f64>) -> Self {
        Self {
            in_scores,
            out_scores,
            attack: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.in_scores.is_empty() || self.out_scores.is_empty() {
            return Err(Error::Empty(
                "metrics need nonempty inlier and outlier scores".into(),
            ));
        }
        if self
            .in_scores
            .iter()
            .chain(&self.out_scores)
            .any(|s| s.is_nan())
        {
            return Err(Error::Numeric("NaN score".into()));
        }
        Ok(())
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Distinct scores of both sets plus both infinities, ascending.
fn candidates(ev: &ScoredEval) -> Vec<f64> {
    let mut c: Vec<f64> = ev.in_scores.iter().chain(&ev.out_scores).copied().collect();
    c.push(f64::NEG_INFINITY);
    c.push(f64::INFINITY);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Number of entries of ascending `s` strictly above `g`.
fn count_above(s: &[f64], g: f64) -> usize {
    s.len() - s.partition_point(|&v| v <= g)
}

/// FPR at the largest threshold whose TPR reaches `tpr_target`.
pub fn fpr_at_tpr(ev: &ScoredEval, tpr_target: f64) -> Result<f64> {
    ev.check()?;
    let ins = sorted(&ev.in_scores);
    let outs = sorted(&ev.out_scores);
    let n_in = ins.len() as f64;
    let gamma = candidates(ev)
        .into_iter()
        .rev()
        .find(|&g| count_above(&ins, g) as f64 / n_in >= tpr_target)
        .expect("-inf keeps every inlier");
    Ok(count_above(&outs, gamma) as f64 / outs.len() as f64)
}

/// `min_gamma (P[in <= gamma] + P[out > gamma]) / 2`.
pub fn detection_error(ev: &ScoredEval) -> Result<f64> {
    ev.check()?;
    let ins = sorted(&ev.in_scores);
    let outs = sorted(&ev.out_scores);
    let (n_in, n_out) = (ins.len() as f64, outs.len() as f64);
    Ok(candidates(ev)
        .into_iter()
        .map(|g| {
            let miss = (ins.len() - count_above(&ins, g)) as f64 / n_in;
            let fa = count_above(&outs, g) as f64 / n_out;
            0.5 * (miss + fa)
        })
        .fold(f64::INFINITY, f64::min))
}

/// Probability that an inlier outscores an outlier, ties counted as half.
pub fn auroc(ev: &ScoredEval) -> Result<f64> {
    ev.check()?;
    let outs = sorted(&ev.out_scores);
    // twice the pairwise sum, kept in integers so the result is exact
    let mut twice: u128 = 0;
    for &s in &ev.in_scores {
        let less = outs.partition_point(|&o| o < s);
        let le = outs.partition_point(|&o| o <= s);
        twice += 2 * less as u128 + (le - less) as u128;
    }
    Ok(twice as f64 / (2 * ev.in_scores.len() * outs.len()) as f64)
}

/// Equal-width histogram of both score sets over their pooled range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub count_in: Vec<usize>,
    pub count_out: Vec<usize>,
}

pub fn histogram(ev: &ScoredEval, bins: usize) -> Result<Histogram> {
    ev.check()?;
    if bins == 0 {
        return Err(Error::Parameter("histogram needs at least one bin".into()));
    }
    let all = ev.in_scores.iter().chain(&ev.out_scores);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let bin_of = |s: f64| {
        if hi > lo {
            (((s - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let mut count_in = vec![0; bins];
    let mut count_out = vec![0; bins];
    for &s in &ev.in_scores {
        count_in[bin_of(s)] += 1;
    }
    for &s in &ev.out_scores {
        count_out[bin_of(s)] += 1;
    }
    Ok(Histogram {
        edges,
        count_in,
        count_out,
    })
}

/// One method under one attack setting.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub attack: Option<AttackConfig>,
    pub fpr95: f64,
    pub det_err: f64,
    pub auroc: f64,
    pub histogram: Histogram,
    pub scores: ScoredEval,
}

impl EvalReport {
    pub fn from_scores(method: &str, scores: ScoredEval) -> Result<Self> {
        Ok(Self {
            method: method.to_string(),
            attack: scores.attack,
            fpr95: fpr_at_tpr(&scores, 0.95)?,
            det_err: detection_error(&scores)?,
            auroc: auroc(&scores)?,
            histogram: histogram(&scores, HIST_BINS)?,
            scores,
        })
    }
}

/// Scores every point, in parallel.
pub fn score_points(score: &ScoreFn, model: &Model, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    par::map_indexed(points, |_, x| score.score(model, x))
        .into_iter()
        .collect()
}

/// Scores inliers and outliers, optionally after the detector's matching attack.
pub fn score_sets(
    score: &ScoreFn,
    model: &Model,
    in_set: &LabeledSet,
    out_set: &LabeledSet,
    attack: Option<&AttackConfig>,
) -> Result<ScoredEval> {
    let (ins, outs) = match attack {
        None => (in_set.points.clone(), out_set.points.clone()),
        Some(cfg) => {
            let kind = AttackKind::matching(score);
            (
                attack_points(model, &in_set.points, None, true, kind, cfg)?,
                attack_points(model, &out_set.points, None, false, kind, cfg)?,
            )
        }
    };
    Ok(ScoredEval {
        in_scores: score_points(score, model, &ins)?,
        out_scores: score_points(score, model, &outs)?,
        attack: attack.copied(),
    })
}

/// Clean (`attack = None`) or attacked evaluation of one detector.
pub fn evaluate(
    method: &str,
    score: &ScoreFn,
    model: &Model,
    in_set: &LabeledSet,
    out_set: &LabeledSet,
    attack: Option<&AttackConfig>,
) -> Result<EvalReport> {
    if in_set.is_empty() || out_set.is_empty() {
        return Err(Error::Empty("evaluation sets must be nonempty".into()));
    }
    EvalReport::from_scores(method, score_sets(score, model, in_set, out_set, attack)?)
}

/// Fraction of labeled points the classifier gets right.
pub fn accuracy(model: &Model, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("accuracy of an empty set".into()));
    }
    let hits = par::map_indexed(&set.points, |i, x| {
        model.predict(x).map(|p| p as i64 == set.labels[i])
    })
    .into_iter()
    .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / set.len() as f64)
}

/// Accuracy after PGD on the classifier.
pub fn robust_accuracy(model: &Model, set: &LabeledSet, cfg: &AttackConfig) -> Result<f64> {
    let attacked = attack_points(
        model,
        &set.points,
        Some(&set.labels),
        true,
        AttackKind::Classifier,
        cfg,
    )?;
    accuracy(model, &LabeledSet::new(attacked, set.labels.clone())?)
}

pub const REPORT_HEADER: &str = "method,attack,eps,m,fpr95,det_err,auroc";

/// One report CSV row; averaged rows are produced by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub attack: String,
    pub eps: f64,
    pub m: usize,
    pub fpr95: f64,
    pub det_err: f64,
    pub auroc: f64,
}

impl ReportRow {
    pub fn from_report(r: &EvalReport) -> Self {
        let (attack, eps, m) = match &r.attack {
            None => ("none".to_string(), 0.0, 0),
            Some(a) => ("pgd".to_string(), a.eps, a.steps),
        };
        Self {
            method: r.method.clone(),
            attack,
            eps,
            m,
            fpr95: r.fpr95,
            det_err: r.det_err,
            auroc: r.auroc,
        }
    }

    /// Metric-wise mean of rows sharing method and attack.
    pub fn mean(rows: &[ReportRow]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Empty("no rows to average".into()))?;
        let n = rows.len() as f64;
        let avg = |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            fpr95: avg(|r| r.fpr95),
            det_err: avg(|r| r.det_err),
            auroc: avg(|r| r.auroc),
            ..first.clone()
        })
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            self.attack,
            fmt_f64(self.eps),
            self.m,
            fmt_f64(self.fpr95),
            fmt_f64(self.det_err),
            fmt_f64(self.auroc)
        )
    }
}

pub fn write_report_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Per-point scores: `score,z,attacked`.
pub fn write_scores_csv(ev: &ScoredEval) -> String {
    let a = ev.attack.is_some() as u8;
    let mut out = String::from("score,z,attacked\n");
    for (z, set) in [(1, &ev.in_scores), (0, &ev.out_scores)] {
        for s in set {
            out.push_str(&format!("{},{z},{a}\n", fmt_f64(*s)));
        }
    }
    out
}

/// Parses a per-point score CSV back into a [`ScoredEval`] (attack details
/// are not stored in the file).
pub fn read_scores_csv(text: &str) -> Result<ScoredEval> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "score,z,attacked")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header `score,z,attacked`".into(),
            })
        }
    }
    let mut ev = ScoredEval::new(Vec::new(), Vec::new());
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                line: ln,
                msg: format!("expected 3 fields, got {}", f.len()),
            });
        }
        let s = crate::textio::parse_f64(f[0], ln)?;
        match f[1] {
            "1" => ev.in_scores.push(s),
            "0" => ev.out_scores.push(s),
            z => {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("z must be 0 or 1, got {z:?}"),
                })
            }
        }
    }
    Ok(ev)
}

pub fn write_histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,count_in,count_out\n");
    for i in 0..h.count_in.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(h.edges[i]),
            fmt_f64(h.edges[i + 1]),
            h.count_in[i],
            h.count_out[i]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(i: &[f64], o: &[f64]) -> ScoredEval {
        ScoredEval::new(i.to_vec(), o.to_vec())
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr_at_tpr(&ev(&[1.0; 5], &[0.0; 5]), 0.95).unwrap(), 0.0);
        let ins: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(fpr_at_tpr(&ev(&ins, &[0.05, 0.5]), 0.95).unwrap(), 0.5);
    }

    #[test]
    fn detection_error_examples() {
        assert_eq!(detection_error(&ev(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 0.0);
        assert_eq!(detection_error(&ev(&[0.2, 0.8], &[0.5])).unwrap(), 0.25);
        assert_eq!(
            detection_error(&ev(&[0.3, 0.6, 0.6], &[0.3, 0.6, 0.6])).unwrap(),
            0.5
        );
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&ev(&[0.9, 0.8], &[0.1])).unwrap(), 1.0);
        assert_eq!(
            auroc(&ev(&[0.9, 0.4, 0.8], &[0.3, 0.7, 0.1])).unwrap(),
            8.0 / 9.0
        );
        assert_eq!(auroc(&ev(&[0.5], &[0.5])).unwrap(), 0.5);
    }

    #[test]
    fn empty_and_nan_rejected() {
        assert!(auroc(&ev(&[], &[0.5])).is_err());
        assert!(fpr_at_tpr(&ev(&[0.5], &[]), 0.95).is_err());
        assert!(detection_error(&ev(&[f64::NAN], &[0.5])).is_err());
    }

    #[test]
    fn histogram_counts_everything() {
        let e = ev(&[0.0, 0.5, 1.0], &[0.25, 1.0]);
        let h = histogram(&e, 4).unwrap();
        assert_eq!(h.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(h.count_in, vec![1, 0, 1, 1]);
        assert_eq!(h.count_out, vec![0, 1, 0, 1]);
        let flat = histogram(&ev(&[0.3], &[0.3]), HIST_BINS).unwrap();
        assert_eq!(flat.count_in.iter().sum::<usize>(), 1);
        assert_eq!(write_histogram_csv(&h).lines().count(), 5);
    }

    #[test]
    fn scores_csv_roundtrip() {
        let e = ev(&[0.1, 1.0 / 3.0], &[0.7]);
        assert_eq!(read_scores_csv(&write_scores_csv(&e)).unwrap(), e);
        assert!(read_scores_csv("score,z,attacked\n0.1,2,0\n").is_err());
    }

    #[test]
    fn report_rows_average() {
        let a = ReportRow {
            method: "msp".into(),
            attack: "none".into(),
            eps: 0.0,
            m: 0,
            fpr95: 0.2,
            det_err: 0.1,
            auroc: 0.9,
        };
        let b = ReportRow {
            fpr95: 0.4,
            det_err: 0.3,
            auroc: 0.7,
            ..a.clone()
        };
        let m = ReportRow::mean(&[a, b]).unwrap();
        assert!((m.fpr95 - 0.3).abs() < 1e-15 && (m.auroc - 0.8).abs() < 1e-15);
        assert_eq!(
            write_report_csv(&[m]).lines().next().unwrap(),
            REPORT_HEADER
        );
    }
}
