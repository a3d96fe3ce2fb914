//! Flat text serialization.
//!
//! ```text
//! aloe-model v1
//! input_dim 2
//! hidden_dims 16,16
//! num_classes 4
//! activation relu
//! seed 7
//! <layer 0 weights, row-major, comma-separated>
//! <layer 0 biases>
//! ...
//! ```
//!
//! Numbers are written with 17 significant digits so they re-parse to the
//! identical `f64`. Other sections (e.g. a Mahalanobis head) may follow the
//! last parameter line.

use super::{Activation, Dense, Model, ModelSpec};
use crate::error::{Error, Result};
use crate::textio::{fmt_f64, parse_f64_list, Lines};

pub const MODEL_HEADER: &str = "aloe-model v1";

pub fn write_model(model: &Model) -> String {
    let spec = model.spec();
    let hidden = spec
        .hidden_dims
        .iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    out.push_str(&format!("input_dim {}\n", spec.input_dim));
    out.push_str(&format!(
        "hidden_dims {}\n",
        if hidden.is_empty() {
            "-".into()
        } else {
            hidden
        }
    ));
    out.push_str(&format!("num_classes {}\n", spec.num_classes));
    out.push_str(&format!("activation {}\n", spec.activation.name()));
    out.push_str(&format!("seed {}\n", model.seed()));
    for l in model.layers() {
        out.push_str(&join(&l.weight));
        out.push('\n');
        out.push_str(&join(&l.bias));
        out.push('\n');
    }
    out
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(",")
}

/// Parses the model section at the start of `text`.
pub fn read_model(text: &str) -> Result<Model> {
    let mut lines = Lines::new(text);
    parse_model(&mut lines)
}

pub(crate) fn parse_model(lines: &mut Lines<'_>) -> Result<Model> {
    lines.expect_exact(MODEL_HEADER)?;
    let input_dim = lines.keyed_usize("input_dim")?;
    let (line_no, hidden_raw) = lines.keyed("hidden_dims")?;
    let hidden_dims = if hidden_raw == "-" {
        Vec::new()
    } else {
        hidden_raw
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("hidden_dims: {e}"),
            })?
    };
    let num_classes = lines.keyed_usize("num_classes")?;
    let (line_no, act) = lines.keyed("activation")?;
    let activation = Activation::parse(act).map_err(|e| Error::Parse {
        line: line_no,
        msg: e.to_string(),
    })?;
    let (line_no, seed_raw) = lines.keyed("seed")?;
    let seed = seed_raw.parse::<u64>().map_err(|e| Error::Parse {
        line: line_no,
        msg: format!("seed: {e}"),
    })?;
    let spec = ModelSpec {
        input_dim,
        hidden_dims,
        num_classes,
        activation,
    };
    spec.validate().map_err(|e| Error::Parse {
        line: line_no,
        msg: e.to_string(),
    })?;
    let mut layers = Vec::new();
    for (i, o) in spec.layer_shapes() {
        let (ln, w) = lines.next_line()?;
        let weight = parse_f64_list(w, ln, i * o)?;
        let (ln, b) = lines.next_line()?;
        let bias = parse_f64_list(b, ln, o)?;
        layers.push(Dense {
            in_dim: i,
            out_dim: o,
            weight,
            bias,
        });
    }
    Model::from_layers(spec, layers, seed)
}
