//! Synthetic dataset generators, splits and CSV I/O.
//!
//! Training and evaluation data live in the unit box `[0,1]^d`. Samples that
//! fall outside the box are redrawn rather than clamped, so the box boundary
//! never accumulates point masses. The `disk` kind is the exception: it
//! samples the unconstrained plane for the bound checks in [`crate::theory`].

use rand::distributions::Uniform;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::{self, stream, Rng};
use crate::textio::{fmt_f64, parse_f64};

/// Label used for unlabeled (outlier) points.
pub const UNLABELED: i64 = -1;

const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetKind {
    /// One Gaussian per center with per-axis standard deviations.
    GaussBlobs {
        centers: Vec<Vec<f64>>,
        stds: Vec<Vec<f64>>,
    },
    /// Uniform over the spherical shell `inner <= |x - center| <= outer`.
    Ring {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    /// Uniform over the axis-aligned box `[lo, hi]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Uniform over a planar disk; not restricted to the unit box.
    Disk { center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// Blob index is the class label.
    Classes,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub seed: u64,
    pub label_mode: LabelMode,
}

/// Points with integer labels (`-1` for unlabeled).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<i64>,
    pub spec: Option<DatasetSpec>,
}

impl DatasetKind {
    pub fn dim(&self) -> usize {
        match self {
            DatasetKind::GaussBlobs { centers, .. } => centers.first().map_or(0, Vec::len),
            DatasetKind::Ring { center, .. } => center.len(),
            DatasetKind::UniformBox { lo, .. } => lo.len(),
            DatasetKind::Disk { .. } => 2,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            DatasetKind::GaussBlobs { centers, .. } => centers.len(),
            _ => 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        match &self.kind {
            DatasetKind::GaussBlobs { centers, stds } => {
                if centers.is_empty() {
                    return bad("gauss_blobs needs at least one center".into());
                }
                let d = centers[0].len();
                if d == 0 || centers.iter().any(|c| c.len() != d) {
                    return bad("blob centers must share a positive dimension".into());
                }
                if stds.len() != centers.len() || stds.iter().any(|s| s.len() != d) {
                    return bad("one per-axis std vector per center required".into());
                }
                if stds.iter().flatten().any(|&s| !(s > 0.0)) {
                    return bad("blob std must be > 0".into());
                }
            }
            DatasetKind::Ring {
                center,
                inner,
                outer,
            } => {
                if center.is_empty() {
                    return bad("ring center is empty".into());
                }
                if !(*outer > 0.0) || !(*inner >= 0.0) || inner > outer {
                    return bad(format!("ring radii must satisfy 0 <= inner <= outer, outer > 0 (got {inner}, {outer})"));
                }
            }
            DatasetKind::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b))
                {
                    return bad("box bounds must satisfy lo < hi per axis".into());
                }
            }
            DatasetKind::Disk { radius, .. } => {
                if !(*radius > 0.0) {
                    return bad(format!("disk radius must be > 0, got {radius}"));
                }
            }
        }
        if self.label_mode == LabelMode::Classes
            && !matches!(self.kind, DatasetKind::GaussBlobs { .. })
        {
            return bad("class labels are only defined for gauss_blobs".into());
        }
        Ok(())
    }
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Builds a set, checking lengths and labels.
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<i64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::Spec(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l < UNLABELED) {
            return Err(Error::Spec("labels must be -1 or a class index".into()));
        }
        Ok(Self {
            points,
            labels,
            spec: None,
        })
    }

    /// Unlabeled set from points.
    pub fn unlabeled(points: Vec<Vec<f64>>) -> Self {
        let labels = vec![UNLABELED; points.len()];
        Self {
            points,
            labels,
            spec: None,
        }
    }

    /// `true` if every label is a class index.
    pub fn is_labeled(&self) -> bool {
        self.labels.iter().all(|&l| l >= 0)
    }

    /// Largest label plus one (0 for unlabeled sets).
    pub fn num_classes(&self) -> usize {
        self.labels
            .iter()
            .copied()
            .max()
            .map_or(0, |m| (m + 1).max(0) as usize)
    }

    fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            spec: self.spec.clone(),
        }
    }

    /// First `n` points (or all of them).
    pub fn take(&self, n: usize) -> LabeledSet {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

fn in_unit_box(p: &[f64]) -> bool {
    p.iter().all(|v| (0.0..=1.0).contains(v))
}

fn redraw<F: FnMut(&mut Rng) -> Vec<f64>>(rng: &mut Rng, mut draw: F) -> Result<Vec<f64>> {
    for _ in 0..MAX_REJECTIONS {
        let p = draw(rng);
        if in_unit_box(&p) {
            return Ok(p);
        }
    }
    Err(Error::Spec(
        "sampler support barely intersects the unit box".into(),
    ))
}

/// Uniform point on the unit sphere in `d` dimensions.
fn unit_direction(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform draw from the disk of `radius` around `center`:
/// `r = radius * sqrt(u1)`, `theta = 2 pi u2`.
pub fn uniform_disk_sample(center: [f64; 2], radius: f64, rng: &mut Rng) -> [f64; 2] {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let r = radius * u1.sqrt();
    let theta = std::f64::consts::TAU * u2;
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

/// Generates exactly `spec.n` points; a pure function of `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<LabeledSet> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, &[stream::DATA]);
    let mut points = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    match &spec.kind {
        DatasetKind::GaussBlobs { centers, stds } => {
            for i in 0..spec.n {
                let b = i % centers.len();
                let (c, s) = (&centers[b], &stds[b]);
                let p = redraw(&mut rng, |r| {
                    c.iter()
                        .zip(s)
                        .map(|(&m, &sd)| m + sd * r.sample::<f64, _>(StandardNormal))
                        .collect()
                })?;
                points.push(p);
                labels.push(match spec.label_mode {
                    LabelMode::Classes => b as i64,
                    LabelMode::Unlabeled => UNLABELED,
                });
            }
        }
        DatasetKind::Ring {
            center,
            inner,
            outer,
        } => {
            let d = center.len() as i32;
            let (lo, hi) = (inner.powi(d), outer.powi(d));
            for _ in 0..spec.n {
                let p = redraw(&mut rng, |r| {
                    // radius density proportional to r^(d-1)
                    let u: f64 = r.gen();
                    let rad = (lo + u * (hi - lo)).powf(1.0 / d as f64);
                    let dir = unit_direction(r, center.len());
                    center.iter().zip(dir).map(|(c, v)| c + rad * v).collect()
                })?;
                points.push(p);
                labels.push(UNLABELED);
            }
        }
        DatasetKind::UniformBox { lo, hi } => {
            for _ in 0..spec.n {
                let p = redraw(&mut rng, |r| {
                    lo.iter()
                        .zip(hi)
                        .map(|(&a, &b)| r.sample(Uniform::new(a, b)))
                        .collect()
                })?;
                points.push(p);
                labels.push(UNLABELED);
            }
        }
        DatasetKind::Disk { center, radius } => {
            for _ in 0..spec.n {
                points.push(uniform_disk_sample(*center, *radius, &mut rng).to_vec());
                labels.push(UNLABELED);
            }
        }
    }
    Ok(LabeledSet {
        points,
        labels,
        spec: Some(spec.clone()),
    })
}

/// Shuffled disjoint partition with part sizes `floor(cumulative fraction * n)`.
pub fn split(set: &LabeledSet, fractions: &[f64], seed: u64) -> Result<Vec<LabeledSet>> {
    if fractions.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::Parameter("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(Error::Parameter(format!(
            "split fractions sum to {total} > 1"
        )));
    }
    let n = set.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed, &[stream::SPLIT]));
    let mut parts = Vec::with_capacity(fractions.len());
    let mut start = 0;
    let mut cum = 0.0;
    for f in fractions {
        cum += f;
        let end = (((cum * n as f64) + 1e-9).floor() as usize)
            .min(n)
            .max(start);
        parts.push(set.subset(&idx[start..end]));
        start = end;
    }
    Ok(parts)
}

/// CSV with header `x0,...,x{d-1},label`.
pub fn write_csv(set: &LabeledSet) -> String {
    write_points_csv(&set.points, &set.labels, None)
}

/// Like [`write_csv`], with an optional trailing `attacked` column of 0/1 flags.
pub fn write_points_csv(points: &[Vec<f64>], labels: &[i64], attacked: Option<&[bool]>) -> String {
    let d = points.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    if attacked.is_some() {
        header.push("attacked".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, (p, l)) in points.iter().zip(labels).enumerate() {
        let mut row: Vec<String> = p.iter().map(|&v| fmt_f64(v)).collect();
        row.push(l.to_string());
        if let Some(a) = attacked {
            row.push((a[i] as u8).to_string());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses the dataset CSV (an `attacked` column, if present, is returned too).
pub fn read_csv(text: &str) -> Result<(LabeledSet, Option<Vec<bool>>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let has_attacked = cols.last() == Some(&"attacked");
    let d = cols.len() - 1 - has_attacked as usize;
    let expected: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    if cols[..d].iter().zip(&expected).any(|(a, b)| a != b) || cols.get(d) != Some(&"label") {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut attacked = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::Parse {
                line: ln,
                msg: format!("expected {} fields, got {}", cols.len(), f.len()),
            });
        }
        points.push(
            f[..d]
                .iter()
                .map(|s| parse_f64(s, ln))
                .collect::<Result<Vec<_>>>()?,
        );
        labels.push(f[d].trim().parse::<i64>().map_err(|e| Error::Parse {
            line: ln,
            msg: e.to_string(),
        })?);
        if has_attacked {
            attacked.push(match f[d + 1].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("attacked flag {other:?}"),
                    })
                }
            });
        }
    }
    let set = LabeledSet::new(points, labels)?;
    Ok((set, has_attacked.then_some(attacked)))
}
