//! TOML run configuration.
//!
//! Every section is optional; missing values fall back to the default
//! benchmark. Unknown keys are rejected, and every error carries the line of
//! the offending section or key.

use std::ops::Range;
use std::path::PathBuf;

use aloe_core::attacks::{AttackConfig, Init};
use aloe_core::benchmark::{Benchmark, Method};
use aloe_core::data::{DatasetKind, DatasetSpec, LabelMode};
use aloe_core::nn::Activation;
use aloe_core::scores::CovReg;
use aloe_core::theory::{radius_grid, DiskWorld};
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, thiserror::Error)]
#[error("{path}:{line}: {msg}")]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out: Option<String>,
    methods: Option<Spanned<Vec<String>>>,
    data: Option<RawData>,
    model: Option<Spanned<RawModel>>,
    train: Option<Spanned<RawTrain>>,
    #[serde(default)]
    attack: Vec<Spanned<RawAttack>>,
    odin: Option<Spanned<RawOdin>>,
    mahalanobis: Option<Spanned<RawMahalanobis>>,
    metrics: Option<Spanned<RawMetrics>>,
    theory: Option<Spanned<RawTheory>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    p: Option<Spanned<RawDist>>,
    u: Option<Spanned<RawDist>>,
    #[serde(default)]
    q: Vec<Spanned<RawDist>>,
    p_fractions: Option<[f64; 3]>,
    u_fractions: Option<[f64; 2]>,
}

/// One sampler. Which fields apply depends on `kind`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDist {
    kind: String,
    n: usize,
    name: Option<String>,
    centers: Option<Vec<Vec<f64>>>,
    stds: Option<Vec<Vec<f64>>>,
    center: Option<Vec<f64>>,
    inner: Option<f64>,
    outer: Option<f64>,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    hidden: Option<Vec<usize>>,
    activation: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    epochs: Option<usize>,
    batch_in: Option<usize>,
    batch_oe: Option<usize>,
    lr: Option<f64>,
    momentum: Option<f64>,
    weight_decay: Option<f64>,
    lambda: Option<f64>,
    inner_eps: Option<f64>,
    inner_step: Option<f64>,
    inner_steps: Option<usize>,
    random_start: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttack {
    eps: f64,
    steps: Option<usize>,
    step_size: Option<f64>,
    init: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOdin {
    temperature: Option<f64>,
    eta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMahalanobis {
    reg: Option<f64>,
    reg_mode: Option<String>,
    eta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    scores: Option<bool>,
    histograms: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTheory {
    geometry: Option<String>,
    samples: Option<usize>,
    r_start: Option<f64>,
    r_stop: Option<f64>,
    r_step: Option<f64>,
    grid_step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TheoryConfig {
    pub geometry: String,
    pub world: DiskWorld,
    pub samples: usize,
    pub radii: Vec<f64>,
    pub grid: Vec<f64>,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub methods: Vec<Method>,
    pub bench: Benchmark,
    /// Attacks evaluated after the clean pass.
    pub attacks: Vec<AttackConfig>,
    pub write_scores: bool,
    pub write_histograms: bool,
    pub theory: TheoryConfig,
}

struct Ctx<'a> {
    path: &'a str,
    text: &'a str,
}

impl Ctx<'_> {
    fn line_of(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    /// Span of the first line starting with `prefix`, or the file start.
    fn find(&self, prefix: &str) -> Range<usize> {
        let mut at = 0;
        for line in self.text.split_inclusive('\n') {
            if line.trim_start().starts_with(prefix) {
                return at..at;
            }
            at += line.len();
        }
        0..0
    }

    fn err<T>(&self, span: Range<usize>, msg: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError {
            path: self.path.to_string(),
            line: self.line_of(span),
            msg: msg.into(),
        })
    }

    fn check(&self, span: Range<usize>, r: aloe_core::Result<()>) -> Result<(), ConfigError> {
        r.or_else(|e| self.err(span, e.to_string()))
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_str("", "<default>").expect("empty config is valid")
    }
}

pub fn parse_str(text: &str, path: &str) -> Result<RunConfig, ConfigError> {
    let ctx = Ctx { path, text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        path: path.to_string(),
        line: e.span().map_or(1, |s| ctx.line_of(s)),
        msg: e.message().to_string(),
    })?;
    build(&ctx, raw)
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: shown.clone(),
        line: 0,
        msg: format!("cannot read config: {e}"),
    })?;
    parse_str(&text, &shown)
}

fn build(ctx: &Ctx<'_>, raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let mut bench = Benchmark::default();

    let methods = match raw.methods {
        None => Method::ALL.to_vec(),
        Some(m) => {
            let span = m.span();
            let names = m.into_inner();
            if names.is_empty() {
                return ctx.err(span, "methods must not be empty");
            }
            let mut out = Vec::new();
            for n in &names {
                let method = Method::parse(n).or_else(|e| ctx.err(span.clone(), e.to_string()))?;
                if out.contains(&method) {
                    return ctx.err(span, format!("method {n:?} listed twice"));
                }
                out.push(method);
            }
            out
        }
    };

    if let Some(d) = raw.data {
        let q_span = d.q.first().map_or(0..0, |q| q.span());
        if let Some(p) = d.p {
            bench.p = dist(ctx, p, LabelMode::Classes)?.1;
        }
        if let Some(u) = d.u {
            bench.u = dist(ctx, u, LabelMode::Unlabeled)?.1;
        }
        if !d.q.is_empty() {
            bench.q =
                d.q.into_iter()
                    .enumerate()
                    .map(|(i, q)| {
                        let (name, spec) = dist(ctx, q, LabelMode::Unlabeled)?;
                        Ok((name.unwrap_or_else(|| format!("q{i}")), spec))
                    })
                    .collect::<Result<_, ConfigError>>()?;
            for (i, (name, _)) in bench.q.iter().enumerate() {
                if bench.q[..i].iter().any(|(other, _)| other == name) {
                    return ctx.err(q_span, format!("duplicate test-outlier name {name:?}"));
                }
            }
        }
        if let Some(f) = d.p_fractions {
            fractions(ctx, "p_fractions", &f)?;
            bench.p_fractions = f;
        }
        if let Some(f) = d.u_fractions {
            fractions(ctx, "u_fractions", &f)?;
            bench.u_fractions = f;
        }
    }

    if let Some(m) = raw.model {
        let span = m.span();
        let m = m.into_inner();
        if let Some(h) = m.hidden {
            bench.model.hidden_dims = h;
        }
        if let Some(a) = m.activation {
            bench.model.activation =
                Activation::parse(&a).or_else(|e| ctx.err(span.clone(), e.to_string()))?;
        }
        bench.model.input_dim = bench.p.kind.dim();
        ctx.check(span, bench.model.validate())?;
    }
    bench.model.input_dim = bench.p.kind.dim();
    bench.model.num_classes = match &bench.p.kind {
        DatasetKind::GaussBlobs { centers, .. } => centers.len(),
        _ => bench.model.num_classes,
    };

    if let Some(t) = raw.train {
        let span = t.span();
        let t = t.into_inner();
        let tr = &mut bench.train;
        set(&mut tr.epochs, t.epochs);
        set(&mut tr.batch_in, t.batch_in);
        set(&mut tr.batch_oe, t.batch_oe);
        set(&mut tr.sgd.lr, t.lr);
        set(&mut tr.sgd.momentum, t.momentum);
        set(&mut tr.sgd.weight_decay, t.weight_decay);
        set(&mut tr.lambda, t.lambda);
        set(&mut tr.inner.eps, t.inner_eps);
        set(&mut tr.inner.step_size, t.inner_step);
        set(&mut tr.inner.random_start, t.random_start);
        if t.inner_steps.is_some() {
            tr.inner.steps = t.inner_steps;
        }
        ctx.check(span, tr.validate())?;
    }

    let attacks = if raw.attack.is_empty() {
        vec![bench.attack]
    } else {
        raw.attack
            .into_iter()
            .map(|a| attack(ctx, a))
            .collect::<Result<_, _>>()?
    };
    bench.attack = attacks[0];

    if let Some(o) = raw.odin {
        let span = o.span();
        let o = o.into_inner();
        set(&mut bench.odin.temperature, o.temperature);
        set(&mut bench.odin.eta, o.eta);
        ctx.check(span, bench.odin.validate())?;
    }

    if let Some(m) = raw.mahalanobis {
        let span = m.span();
        let m = m.into_inner();
        let reg = m.reg.unwrap_or(1e-6);
        if !(reg >= 0.0) {
            return ctx.err(span, format!("reg must be >= 0, got {reg}"));
        }
        bench.mahal_reg = match m.reg_mode.as_deref().unwrap_or("trace") {
            "trace" => CovReg::TraceScaled(reg),
            "absolute" => CovReg::Absolute(reg),
            other => {
                return ctx.err(
                    span,
                    format!("reg_mode must be \"trace\" or \"absolute\", got {other:?}"),
                )
            }
        };
        set(&mut bench.mahal_eta, m.eta);
        if !(bench.mahal_eta >= 0.0) {
            return ctx.err(span, format!("eta must be >= 0, got {}", bench.mahal_eta));
        }
    }

    let (mut write_scores, mut write_histograms) = (true, true);
    if let Some(m) = raw.metrics {
        let m = m.into_inner();
        set(&mut write_scores, m.scores);
        set(&mut write_histograms, m.histograms);
    }

    let theory = theory(ctx, raw.theory)?;
    ctx.check(ctx.find("[data"), bench.validate())?;

    Ok(RunConfig {
        seed: raw.seed.unwrap_or(0),
        out: PathBuf::from(raw.out.unwrap_or_else(|| "out".to_string())),
        methods,
        bench,
        attacks,
        write_scores,
        write_histograms,
        theory,
    })
}

fn fractions(ctx: &Ctx<'_>, key: &str, f: &[f64]) -> Result<(), ConfigError> {
    let sum: f64 = f.iter().sum();
    if f.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return ctx.err(
            ctx.find(key),
            format!("{key} must be nonnegative and sum to 1, got {f:?}"),
        );
    }
    Ok(())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn dist(
    ctx: &Ctx<'_>,
    d: Spanned<RawDist>,
    mode: LabelMode,
) -> Result<(Option<String>, DatasetSpec), ConfigError> {
    let span = d.span();
    let d = d.into_inner();
    let allowed: &[&str] = match d.kind.as_str() {
        "blobs" => &["centers", "stds"],
        "ring" => &["center", "inner", "outer"],
        "box" => &["lo", "hi"],
        other => {
            return ctx.err(
                span,
                format!("kind must be blobs, ring or box, got {other:?}"),
            )
        }
    };
    let present = [
        ("centers", d.centers.is_some()),
        ("stds", d.stds.is_some()),
        ("center", d.center.is_some()),
        ("inner", d.inner.is_some()),
        ("outer", d.outer.is_some()),
        ("lo", d.lo.is_some()),
        ("hi", d.hi.is_some()),
    ];
    for (key, is_set) in present {
        if is_set && !allowed.contains(&key) {
            return ctx.err(
                span,
                format!("key {key:?} does not apply to kind {:?}", d.kind),
            );
        }
    }
    for key in allowed {
        if !present.iter().any(|(k, s)| k == key && *s) {
            return ctx.err(span, format!("kind {:?} needs {key:?}", d.kind));
        }
    }
    let kind = match d.kind.as_str() {
        "blobs" => DatasetKind::GaussBlobs {
            centers: d.centers.unwrap_or_default(),
            stds: d.stds.unwrap_or_default(),
        },
        "ring" => DatasetKind::Ring {
            center: d.center.unwrap_or_default(),
            inner: d.inner.unwrap_or_default(),
            outer: d.outer.unwrap_or_default(),
        },
        _ => DatasetKind::UniformBox {
            lo: d.lo.unwrap_or_default(),
            hi: d.hi.unwrap_or_default(),
        },
    };
    if mode == LabelMode::Classes && !matches!(kind, DatasetKind::GaussBlobs { .. }) {
        return ctx.err(span, "the inlier distribution must be of kind \"blobs\"");
    }
    let spec = DatasetSpec {
        kind,
        n: d.n,
        seed: 0,
        label_mode: mode,
    };
    ctx.check(span, spec.validate())?;
    Ok((d.name, spec))
}

fn attack(ctx: &Ctx<'_>, a: Spanned<RawAttack>) -> Result<AttackConfig, ConfigError> {
    let span = a.span();
    let a = a.into_inner();
    // a zero budget makes any positive step a no-op
    let default_step = if a.eps > 0.0 { a.eps / 10.0 } else { 1e-3 };
    let init = match a.init.as_deref().unwrap_or("random") {
        "random" => Init::RandomInBall,
        "zero" => Init::Zero,
        other => {
            return ctx.err(
                span,
                format!("init must be \"random\" or \"zero\", got {other:?}"),
            )
        }
    };
    let cfg = AttackConfig {
        eps: a.eps,
        steps: a.steps.unwrap_or(10),
        step_size: a.step_size.unwrap_or(default_step),
        init,
        seed: 0,
    };
    ctx.check(span, cfg.validate())?;
    Ok(cfg)
}

fn theory(ctx: &Ctx<'_>, t: Option<Spanned<RawTheory>>) -> Result<TheoryConfig, ConfigError> {
    let (span, t) = match t {
        Some(t) => (t.span(), Some(t.into_inner())),
        None => (0..0, None),
    };
    let get = |f: fn(&RawTheory) -> Option<f64>, d: f64| t.as_ref().and_then(f).unwrap_or(d);
    let geometry = t
        .as_ref()
        .and_then(|t| t.geometry.clone())
        .unwrap_or_else(|| "symmetric".to_string());
    let world = match geometry.as_str() {
        "symmetric" => DiskWorld::symmetric(),
        "asymmetric" => DiskWorld::asymmetric(),
        other => {
            return ctx.err(
                span,
                format!("geometry must be \"symmetric\" or \"asymmetric\", got {other:?}"),
            )
        }
    };
    let samples = t.as_ref().and_then(|t| t.samples).unwrap_or(100_000);
    if samples == 0 {
        return ctx.err(span, "samples must be > 0");
    }
    let (start, stop, step) = (
        get(|t| t.r_start, 0.0),
        get(|t| t.r_stop, 4.0),
        get(|t| t.r_step, 0.1),
    );
    let grid_step = get(|t| t.grid_step, 0.1);
    if !(step > 0.0 && grid_step > 0.0) || !(stop >= start) || !(start >= 0.0) {
        return ctx.err(
            span,
            "theory radii need 0 <= r_start <= r_stop and positive steps",
        );
    }
    Ok(TheoryConfig {
        geometry,
        world,
        samples,
        radii: radius_grid(start, stop, step),
        grid: radius_grid(0.0, stop.max(4.0), grid_step),
    })
}
