//! Minimal dense-network engine.
//!
//! A [`Model`] is a stack of affine layers with a shared hidden activation and
//! linear output logits. [`Model::forward`] exposes every hidden
//! post-activation (used by the Mahalanobis detector) and
//! [`Model::backward`] runs reverse-mode differentiation of a scalar loss
//! defined on those features, returning gradients for every parameter and for
//! the input in a single sweep.

pub mod loss;
mod sgd;
mod text;

use rand::distributions::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::seed;

pub use loss::{
    argmax, ce_label, ce_uniform, entropy, log_softmax_t, sigmoid, softmax, softmax_entropy,
    softmax_t,
};
pub use sgd::{Sgd, SgdState};
pub use text::{read_model, write_model, MODEL_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => (a > 0.0) as u8 as f64,
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Spec(format!("unknown activation {other:?}"))),
        }
    }
}

/// Architecture of a dense classifier with `num_classes` output logits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        num_classes: usize,
        activation: Activation,
    ) -> Self {
        Self {
            input_dim,
            hidden_dims,
            num_classes,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Spec("input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Spec(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Spec("hidden dims must be >= 1".into()));
        }
        Ok(())
    }

    /// `(in, out)` for each affine layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Weight matrix (row-major, `out x in`) and bias of one affine layer.
///
/// The same shape doubles as the gradient and optimizer-velocity carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// `W^T g`
    fn transpose_apply(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim];
        for (row, &gi) in self.weight.chunks_exact(self.in_dim).zip(g) {
            if gi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * gi;
            }
        }
        out
    }

    fn shape_eq(&self, other: &Dense) -> bool {
        self.in_dim == other.in_dim
            && self.out_dim == other.out_dim
            && self.weight.len() == other.weight.len()
            && self.bias.len() == other.bias.len()
    }
}

/// Dense feed-forward classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Dense>,
    seed: u64,
}

/// Hidden post-activation features `f_1 .. f_L` followed by the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl FeatureStack {
    /// Number of entries: hidden layers plus the logits.
    pub fn len(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Entry `i`, where `i == hidden.len()` is the logits.
    pub fn layer(&self, i: usize) -> Option<&[f64]> {
        if i < self.hidden.len() {
            Some(&self.hidden[i])
        } else if i == self.hidden.len() {
            Some(&self.logits)
        } else {
            None
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &[f64]> {
        self.hidden
            .iter()
            .map(Vec::as_slice)
            .chain(std::iter::once(self.logits.as_slice()))
    }

    /// A zero-filled gradient with the same shapes as this stack.
    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.layers().map(|l| vec![0.0; l.len()]).collect()
    }
}

/// A scalar loss defined on a [`FeatureStack`].
///
/// Returns the value together with its gradient with respect to every entry
/// of the stack (same shapes as [`FeatureStack::zeros_like`]).
pub trait FeatureLoss: Sync {
    fn value_and_grad(&self, stack: &FeatureStack) -> Result<(f64, Vec<Vec<f64>>)>;
}

/// Losses understood by [`Model::backward`].
#[derive(Clone, Copy)]
pub enum Loss<'a> {
    /// `-log softmax(f(x))_y`
    CeLabel(usize),
    /// Cross-entropy to the uniform distribution over classes.
    CeUniform,
    /// Entropy of `softmax(f(x))`.
    Entropy,
    /// `log max_i softmax(f(x) / T)_i`, the log of the temperature-scaled score.
    LogMaxSoftmax { temperature: f64 },
    /// Any loss on the hidden features and logits, e.g. the negative log of
    /// the Mahalanobis ensemble probability.
    Features(&'a dyn FeatureLoss),
}

impl Loss<'_> {
    fn evaluate(&self, stack: &FeatureStack) -> Result<(f64, Vec<Vec<f64>>)> {
        let logits_only = |(v, g): (f64, Vec<f64>)| {
            let mut grads = stack.zeros_like();
            *grads.last_mut().expect("logits entry") = g;
            (v, grads)
        };
        match *self {
            Loss::CeLabel(y) => Ok(logits_only(loss::ce_label_grad(&stack.logits, y)?)),
            Loss::CeUniform => Ok(logits_only(loss::ce_uniform_grad(&stack.logits))),
            Loss::Entropy => Ok(logits_only(loss::entropy_grad(&stack.logits))),
            Loss::LogMaxSoftmax { temperature } => {
                if !(temperature > 0.0) {
                    return Err(Error::Parameter(format!(
                        "temperature must be > 0, got {temperature}"
                    )));
                }
                Ok(logits_only(loss::log_max_softmax_grad(
                    &stack.logits,
                    temperature,
                )))
            }
            Loss::Features(f) => f.value_and_grad(stack),
        }
    }
}

/// Loss value with gradients for every parameter and for the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub loss: f64,
    pub params: Vec<Dense>,
    pub input: Vec<f64>,
}

impl Model {
    /// Glorot-uniform weights drawn from `seed`, zero biases.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(seed, &[]);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a);
                let mut layer = Dense::zeros(fan_in, fan_out);
                for w in &mut layer.weight {
                    *w = dist.sample(&mut rng);
                }
                layer
            })
            .collect();
        Ok(Self { spec, layers, seed })
    }

    /// All parameters zero.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(Self {
            spec,
            layers,
            seed: 0,
        })
    }

    /// Builds a model from explicit parameters, checking every shape.
    pub fn from_layers(spec: ModelSpec, layers: Vec<Dense>, seed: u64) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::Spec(format!(
                "expected {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (k, ((i, o), l)) in shapes.iter().zip(&layers).enumerate() {
            if l.in_dim != *i || l.out_dim != *o || l.weight.len() != i * o || l.bias.len() != *o {
                return Err(Error::Spec(format!("layer {k} has inconsistent shape")));
            }
        }
        Ok(Self { spec, layers, seed })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Hidden layers plus logits.
    pub fn num_feature_layers(&self) -> usize {
        self.spec.hidden_dims.len() + 1
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::InputShape {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<FeatureStack> {
        self.check_input(x)?;
        let act = self.spec.activation;
        let (out, hidden_layers) = self.layers.split_last().expect("at least one layer");
        let mut hidden = Vec::with_capacity(hidden_layers.len());
        let mut cur: &[f64] = x;
        for layer in hidden_layers {
            let a: Vec<f64> = layer
                .affine(cur)
                .into_iter()
                .map(|z| act.apply(z))
                .collect();
            hidden.push(a);
            cur = hidden.last().expect("just pushed");
        }
        let logits = out.affine(cur);
        Ok(FeatureStack { hidden, logits })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.logits)
    }

    /// Predicted class (lowest index on ties).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Gradients of `loss` with respect to every parameter and the input.
    pub fn backward(&self, x: &[f64], loss: Loss<'_>) -> Result<GradReport> {
        self.backprop(x, loss, true)
    }

    /// Loss value and input gradient only; skips the parameter outer products.
    pub fn input_grad(&self, x: &[f64], loss: Loss<'_>) -> Result<(f64, Vec<f64>)> {
        let r = self.backprop(x, loss, false)?;
        Ok((r.loss, r.input))
    }

    fn backprop(&self, x: &[f64], loss: Loss<'_>, want_params: bool) -> Result<GradReport> {
        let stack = self.forward(x)?;
        let (value, mut feature_grads) = loss.evaluate(&stack)?;
        if feature_grads.len() != stack.len() {
            return Err(Error::Numeric(
                "feature gradient has wrong number of layers".into(),
            ));
        }
        let act = self.spec.activation;
        let n = self.layers.len();
        let mut params: Vec<Dense> = if want_params {
            self.layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect()
        } else {
            Vec::new()
        };

        // Gradient w.r.t. the output of layer k (pre-activation for the
        // logits layer, post-activation for hidden ones).
        let mut upstream = feature_grads.pop().expect("logits gradient");
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            // Gradient w.r.t. this layer's pre-activation.
            let dz: Vec<f64> = if k + 1 == n {
                upstream
            } else {
                let mut g = upstream;
                for (gi, fg) in g.iter_mut().zip(&feature_grads[k]) {
                    *gi += fg;
                }
                g.iter()
                    .zip(&stack.hidden[k])
                    .map(|(gi, &a)| gi * act.derivative_from_output(a))
                    .collect()
            };
            let input: &[f64] = if k == 0 { x } else { &stack.hidden[k - 1] };
            if want_params {
                let p = &mut params[k];
                for ((row, b), &d) in p
                    .weight
                    .chunks_exact_mut(layer.in_dim)
                    .zip(p.bias.iter_mut())
                    .zip(&dz)
                {
                    *b = d;
                    for (w, &v) in row.iter_mut().zip(input) {
                        *w = d * v;
                    }
                }
            }
            upstream = layer.transpose_apply(&dz);
        }
        Ok(GradReport {
            loss: value,
            params,
            input: upstream,
        })
    }

    /// Visits every parameter scalar in a fixed order (layer, weight, bias).
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }

    /// Overwrites parameters from a flat vector in [`Model::params_flat`] order.
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::InputShape {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

/// Flattens gradient layers in [`Model::params_flat`] order.
pub fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
        .collect()
}

/// `acc += scale * g`, layer by layer.
pub fn axpy(acc: &mut [Dense], scale: f64, g: &[Dense]) -> Result<()> {
    if acc.len() != g.len() || acc.iter().zip(g).any(|(a, b)| !a.shape_eq(b)) {
        return Err(Error::Parameter("gradient shape mismatch".into()));
    }
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, y) in a.weight.iter_mut().zip(&b.weight) {
            *x += scale * y;
        }
        for (x, y) in a.bias.iter_mut().zip(&b.bias) {
            *x += scale * y;
        }
    }
    Ok(())
}
