use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{affine, init_uniform, ParamVector};
use crate::error::{Error, Result};

/// Feedforward network: tanh on every hidden layer, affine output.
///
/// Weights are stored layer by layer as a row-major `out x in` matrix
/// followed by the `out` biases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_widths: &[usize], output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            output_dim,
            hidden_widths: hidden_widths.to_vec(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::Config(format!("MLP dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, output layer last.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Appends this network's segments (`{prefix}.{layer}.w`, `.b`) and
    /// returns the offset of its first weight.
    pub fn register(&self, params: &mut ParamVector, prefix: &str) -> usize {
        let start = params.len();
        for (l, (fan_in, fan_out)) in self.layers().into_iter().enumerate() {
            params.push_segment(format!("{prefix}.{l}.w"), &[fan_out, fan_in]);
            params.push_segment(format!("{prefix}.{l}.b"), &[fan_out]);
        }
        start
    }

    /// Uniform fan-in weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, chunk: &mut [f64]) {
        let mut off = 0;
        for (fan_in, fan_out) in self.layers() {
            init_uniform(rng, &mut chunk[off..off + fan_in * fan_out], fan_in);
            off += fan_in * fan_out;
            chunk[off..off + fan_out].fill(0.0);
            off += fan_out;
        }
    }
}

/// Evaluates the network whose weights start at `params[0]`.
pub fn mlp_forward(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.input_dim {
        return Err(Error::shape("mlp input", spec.input_dim, x.len()));
    }
    if params.len() < spec.param_count() {
        return Err(Error::shape("mlp parameters", spec.param_count(), params.len()));
    }
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut cur = x.to_vec();
    let mut off = 0;
    for (l, (fan_in, fan_out)) in layers.into_iter().enumerate() {
        let w = &params[off..off + fan_in * fan_out];
        off += fan_in * fan_out;
        let b = &params[off..off + fan_out];
        off += fan_out;
        let mut next = vec![0.0; fan_out];
        affine(w, b, &cur, &mut next);
        if l < last {
            next.iter_mut().for_each(|v| *v = v.tanh());
        }
        cur = next;
    }
    Ok(cur)
}
