use super::{Dense, Model};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum and L2 weight decay.
///
/// `v <- momentum * v + (grad + weight_decay * param)`, then `param <- param - lr * v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Per-parameter velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity: Vec<Dense>,
}

impl SgdState {
    pub fn new(model: &Model) -> Self {
        Self {
            velocity: model
                .layers()
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }
}

impl Sgd {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0)
        {
            return Err(Error::Parameter(format!(
                "invalid optimizer settings {self:?}"
            )));
        }
        Ok(())
    }

    pub fn step(&self, model: &mut Model, grads: &[Dense], state: &mut SgdState) -> Result<()> {
        let layers = model.layers_mut();
        if grads.len() != layers.len() || state.velocity.len() != layers.len() {
            return Err(Error::Parameter("gradient shape mismatch".into()));
        }
        for ((p, g), v) in layers.iter_mut().zip(grads).zip(&mut state.velocity) {
            if !p.shape_eq(g) || !p.shape_eq(v) {
                return Err(Error::Parameter("gradient shape mismatch".into()));
            }
            let pairs = p
                .weight
                .iter_mut()
                .zip(&g.weight)
                .zip(&mut v.weight)
                .chain(p.bias.iter_mut().zip(&g.bias).zip(&mut v.bias));
            for ((w, &gw), vw) in pairs {
                *vw = self.momentum * *vw + (gw + self.weight_decay * *w);
                *w -= self.lr * *vw;
            }
        }
        Ok(())
    }
}
