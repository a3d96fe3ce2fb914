//! Monte-Carlo check of the source-to-target robust risk bound on a planar
//! disk example.
//!
//! Inliers `P` are uniform on a disk, auxiliary outliers `U` and test
//! outliers `Q` on two other disks. The hypothesis class is the radius
//! family `G_r(x) = 1` (in-distribution) iff `|x| <= r`, attacked within an
//! L2 ball of radius `eps` with no domain box. Because every quantity only
//! depends on `|x|`, the samples are stored as sorted norms and each risk is
//! a binary search.

use crate::attacks::{Domain, Norm, PerturbationSet};
use crate::data::uniform_disk_sample;
use crate::error::{Error, Result};
use crate::par;
use crate::seed::{self, stream};
use crate::textio::fmt_f64;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disk {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Self { center, radius }
    }

    /// `P[|x| <= t]` for `x` uniform on the disk: the area of its
    /// intersection with the origin disk of radius `t`, normalized.
    pub fn norm_cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let rho = self.radius;
        let c = self.center[0].hypot(self.center[1]);
        let area = if c >= t + rho {
            0.0
        } else if c + rho <= t {
            std::f64::consts::PI * rho * rho
        } else if c + t <= rho {
            std::f64::consts::PI * t * t
        } else {
            let a1 = ((c * c + t * t - rho * rho) / (2.0 * c * t))
                .clamp(-1.0, 1.0)
                .acos();
            let a2 = ((c * c + rho * rho - t * t) / (2.0 * c * rho))
                .clamp(-1.0, 1.0)
                .acos();
            let k = ((-c + t + rho) * (c + t - rho) * (c - t + rho) * (c + t + rho))
                .max(0.0)
                .sqrt();
            t * t * a1 + rho * rho * a2 - 0.5 * k
        };
        (area / (std::f64::consts::PI * rho * rho)).clamp(0.0, 1.0)
    }
}

/// Radius-threshold detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusDetector {
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskWorld {
    pub p: Disk,
    pub u: Disk,
    pub q: Disk,
    pub omega: PerturbationSet,
}

impl DiskWorld {
    /// Unit disks at the origin, `(0, 3)` and `(3, 0)`, `eps = 0.1`.
    pub fn symmetric() -> Self {
        Self {
            p: Disk::new([0.0, 0.0], 1.0),
            u: Disk::new([0.0, 3.0], 1.0),
            q: Disk::new([3.0, 0.0], 1.0),
            omega: PerturbationSet {
                norm: Norm::L2,
                eps: 0.1,
                domain: Domain::Unconstrained,
            },
        }
    }

    /// Like [`DiskWorld::symmetric`] but with the test outliers moved to `(2.2, 0)`.
    pub fn asymmetric() -> Self {
        Self {
            q: Disk::new([2.2, 0.0], 1.0),
            ..Self::symmetric()
        }
    }

    pub fn eps(&self) -> f64 {
        self.omega.eps
    }

    pub fn validate(&self) -> Result<()> {
        for d in [self.p, self.u, self.q] {
            if !(d.radius > 0.0) {
                return Err(Error::Parameter(format!(
                    "disk radius must be > 0, got {}",
                    d.radius
                )));
            }
        }
        if self.omega.norm != Norm::L2 || self.omega.domain != Domain::Unconstrained {
            return Err(Error::Parameter(
                "the disk example uses an unconstrained L2 ball".into(),
            ));
        }
        self.omega.validate()
    }

    /// Exact robust risk from the norm distributions.
    pub fn closed_form_risk(&self, r: f64, domain: RiskDomain) -> f64 {
        let eps = self.eps();
        let out = match domain {
            RiskDomain::Source => self.u,
            RiskDomain::Target => self.q,
        };
        0.5 * (1.0 - self.p.norm_cdf(r - eps)) + 0.5 * out.norm_cdf(r + eps)
    }
}

/// Worst-case 0/1 loss of `G_r` at `x` over the L2 ball of radius `eps`.
///
/// An inlier (`y = 1`) is lost iff it can be pushed outside the radius,
/// an outlier (`y = 0`) iff it can be pulled inside.
pub fn robust_loss_radius(g: RadiusDetector, x: [f64; 2], y: u8, eps: f64) -> u8 {
    let n = x[0].hypot(x[1]);
    if y == 1 {
        (n + eps > g.r) as u8
    } else {
        (n - eps <= g.r) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskDomain {
    /// Inliers vs auxiliary outliers.
    Source,
    /// Inliers vs test outliers.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub value: f64,
    pub n: usize,
    pub std_error: f64,
}

/// Sorted sample norms for the three disks.
#[derive(Debug, Clone)]
pub struct Samples {
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    eps: f64,
}

fn sample_norms(disk: Disk, n: usize, master: u64, stream_id: u64) -> Vec<f64> {
    let chunks = n.div_ceil(CHUNK);
    let parts = par::map_range(chunks, |c| {
        let mut rng = seed::rng(master, &[stream_id, c as u64]);
        let len = CHUNK.min(n - c * CHUNK);
        (0..len)
            .map(|_| {
                let x = uniform_disk_sample(disk.center, disk.radius, &mut rng);
                x[0].hypot(x[1])
            })
            .collect::<Vec<f64>>()
    });
    let mut v: Vec<f64> = parts.into_iter().flatten().collect();
    v.sort_by(f64::total_cmp);
    v
}

impl Samples {
    /// `n` draws from each disk. The inlier draws are shared by the source
    /// and target risks.
    pub fn draw(world: &DiskWorld, n: usize, seed: u64) -> Result<Self> {
        world.validate()?;
        if n == 0 {
            return Err(Error::Parameter(
                "need at least one Monte-Carlo sample".into(),
            ));
        }
        Ok(Self {
            p: sample_norms(world.p, n, seed, stream::THEORY_P),
            u: sample_norms(world.u, n, seed, stream::THEORY_U),
            q: sample_norms(world.q, n, seed, stream::THEORY_Q),
            eps: world.eps(),
        })
    }

    fn outliers(&self, domain: RiskDomain) -> &[f64] {
        match domain {
            RiskDomain::Source => &self.u,
            RiskDomain::Target => &self.q,
        }
    }

    /// Fraction of inliers robustly rejected: `|x| + eps > r`.
    fn inlier_loss(&self, r: f64) -> f64 {
        let kept = self.p.partition_point(|&n| n + self.eps <= r);
        (self.p.len() - kept) as f64 / self.p.len() as f64
    }

    /// Fraction of outliers robustly accepted: `|x| - eps <= r`.
    fn outlier_loss(norms: &[f64], r: f64, eps: f64) -> f64 {
        norms.partition_point(|&n| n - eps <= r) as f64 / norms.len() as f64
    }

    pub fn risk(&self, g: RadiusDetector, domain: RiskDomain) -> RiskEstimate {
        let a = self.inlier_loss(g.r);
        let b = Self::outlier_loss(self.outliers(domain), g.r, self.eps);
        let n = self.p.len();
        let var = 0.25 * a * (1.0 - a) / n as f64
            + 0.25 * b * (1.0 - b) / self.outliers(domain).len() as f64;
        RiskEstimate {
            value: 0.5 * a + 0.5 * b,
            n,
            std_error: var.sqrt(),
        }
    }

    /// Inlier and outlier components of the risk, before the 1/2 weights.
    pub fn risk_components(&self, g: RadiusDetector, domain: RiskDomain) -> (f64, f64) {
        (
            self.inlier_loss(g.r),
            Self::outlier_loss(self.outliers(domain), g.r, self.eps),
        )
    }

    pub fn divergence(&self, grid: &[f64]) -> Result<Divergence> {
        if grid.is_empty() {
            return Err(Error::Parameter(
                "divergence needs a nonempty radius grid".into(),
            ));
        }
        let aq: Vec<f64> = grid
            .iter()
            .map(|&r| Self::outlier_loss(&self.q, r, self.eps))
            .collect();
        let au: Vec<f64> = grid
            .iter()
            .map(|&r| Self::outlier_loss(&self.u, r, self.eps))
            .collect();
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                let v = (aq[i] - aq[j]) - (au[i] - au[j]);
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        let (v, i, j) = best;
        // per-sample difference of two nested indicators is 0/1 (or 0/-1)
        let var = |m: f64, n: usize| m.abs() * (1.0 - m.abs()) / n as f64;
        let sigma = (var(aq[i] - aq[j], self.q.len()) + var(au[i] - au[j], self.u.len())).sqrt();
        Ok(Divergence {
            value: v.max(0.0),
            sigma,
            argmax: (grid[i], grid[j]),
        })
    }
}

/// Monte-Carlo robust risk of `G_r` in the source or target domain.
pub fn estimate_risk(
    world: &DiskWorld,
    g: RadiusDetector,
    domain: RiskDomain,
    n: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    Ok(Samples::draw(world, n, seed)?.risk(g, domain))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    /// Max over ordered grid pairs, floored at 0.
    pub value: f64,
    /// Plug-in standard error at the maximizing pair.
    pub sigma: f64,
    pub argmax: (f64, f64),
}

/// `max_{r, r'} [v(G_r, G_r'; Q) - v(G_r, G_r'; U)]` over the grid.
pub fn divergence_dg(world: &DiskWorld, grid: &[f64], n: usize, seed: u64) -> Result<Divergence> {
    Samples::draw(world, n, seed)?.divergence(grid)
}

/// One detector's bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub r: f64,
    pub rs: RiskEstimate,
    pub rt: RiskEstimate,
    /// `R^t(G_r)`
    pub lhs: f64,
    /// `min_{r*} R^t(G_r*) + R^s(G_r) + d / 2`
    pub rhs: f64,
    pub slack: f64,
    /// Combined standard error of `slack` (terms treated as independent).
    pub sigma: f64,
}

/// Bound rows for every detector radius, sharing one sample draw.
///
/// `grid` is the hypothesis grid for the best-in-class target risk and for
/// the divergence.
pub fn bound_table(
    world: &DiskWorld,
    radii: &[f64],
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<(Vec<BoundRow>, Divergence)> {
    let s = Samples::draw(world, n, seed)?;
    let d = s.divergence(grid)?;
    let best = grid
        .iter()
        .map(|&r| s.risk(RadiusDetector { r }, RiskDomain::Target))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("grid checked nonempty");
    let rows = radii
        .iter()
        .map(|&r| {
            let g = RadiusDetector { r };
            let rs = s.risk(g, RiskDomain::Source);
            let rt = s.risk(g, RiskDomain::Target);
            let rhs = best.value + rs.value + 0.5 * d.value;
            let sigma = (rt.std_error.powi(2)
                + best.std_error.powi(2)
                + rs.std_error.powi(2)
                + (0.5 * d.sigma).powi(2))
            .sqrt();
            BoundRow {
                r,
                rs,
                rt,
                lhs: rt.value,
                rhs,
                slack: rhs - rt.value,
                sigma,
            }
        })
        .collect();
    Ok((rows, d))
}

/// Single-detector form of [`bound_table`]: `(lhs, rhs, slack)`.
pub fn theorem1_check(
    world: &DiskWorld,
    g: RadiusDetector,
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<BoundRow> {
    let (rows, _) = bound_table(world, &[g.r], grid, n, seed)?;
    Ok(rows[0])
}

/// `start, start + step, ...` up to `stop` inclusive, computed as `i * step`
/// and snapped to 1e-9 so that e.g. `29 * 0.1` prints as `2.9`.
pub fn radius_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

pub const THEORY_HEADER: &str = "r,Rs,Rs_sigma,Rt,Rt_sigma,lhs,rhs,slack";

pub fn write_theory_csv(rows: &[BoundRow]) -> String {
    let mut out = format!("{THEORY_HEADER}\n");
    for b in rows {
        let cols = [
            b.r,
            b.rs.value,
            b.rs.std_error,
            b.rt.value,
            b.rt.std_error,
            b.lhs,
            b.rhs,
            b.slack,
        ];
        out.push_str(&cols.map(fmt_f64).join(","));
        out.push('\n');
    }
    out
}
