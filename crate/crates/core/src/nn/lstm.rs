use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{affine, init_uniform, sigmoid, ParamVector};
use crate::error::{Error, Result};

/// Single-layer LSTM cell without peepholes.
///
/// Parameters: a `4H x (I + H)` row-major matrix acting on `[input, h]`
/// followed by `4H` biases. Gate blocks are ordered input, forget,
/// candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

impl LstmSpec {
    pub fn new(input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!("LSTM dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn weight_count(&self) -> usize {
        4 * self.hidden_dim * (self.input_dim + self.hidden_dim)
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + 4 * self.hidden_dim
    }

    pub fn register(&self, params: &mut ParamVector, prefix: &str) -> usize {
        let start = params.len();
        params.push_segment(
            format!("{prefix}.w"),
            &[4 * self.hidden_dim, self.input_dim + self.hidden_dim],
        );
        params.push_segment(format!("{prefix}.b"), &[4 * self.hidden_dim]);
        start
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, chunk: &mut [f64]) {
        let nw = self.weight_count();
        init_uniform(rng, &mut chunk[..nw], self.input_dim + self.hidden_dim);
        chunk[nw..self.param_count()].fill(0.0);
    }
}

/// Cell kernel shared by [`lstm_step`] and the tape.
///
/// `xh` is `[input, h_prev]`; on return `gates` holds the activated
/// `[i, f, g, o]` blocks and `out` holds `[h_new, c_new]`.
pub(crate) fn cell_kernel(
    spec: &LstmSpec,
    params: &[f64],
    xh: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    out: &mut [f64],
) {
    let hd = spec.hidden_dim;
    let nw = spec.weight_count();
    affine(&params[..nw], &params[nw..nw + 4 * hd], xh, gates);
    for v in &mut gates[..2 * hd] {
        *v = sigmoid(*v);
    }
    for v in &mut gates[2 * hd..3 * hd] {
        *v = v.tanh();
    }
    for v in &mut gates[3 * hd..] {
        *v = sigmoid(*v);
    }
    for j in 0..hd {
        let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
        let c = f * c_prev[j] + i * g;
        out[hd + j] = c;
        out[j] = o * c.tanh();
    }
}

/// One LSTM update; `params` starts at the cell's weight matrix.
pub fn lstm_step(spec: &LstmSpec, params: &[f64], input: &[f64], state: &LstmState) -> Result<LstmState> {
    if input.len() != spec.input_dim {
        return Err(Error::shape("lstm input", spec.input_dim, input.len()));
    }
    if state.h.len() != spec.hidden_dim || state.c.len() != spec.hidden_dim {
        return Err(Error::shape("lstm state", spec.hidden_dim, state.h.len().max(state.c.len())));
    }
    if params.len() < spec.param_count() {
        return Err(Error::shape("lstm parameters", spec.param_count(), params.len()));
    }
    let hd = spec.hidden_dim;
    let mut xh = Vec::with_capacity(spec.input_dim + hd);
    xh.extend_from_slice(input);
    xh.extend_from_slice(&state.h);
    let mut gates = vec![0.0; 4 * hd];
    let mut out = vec![0.0; 2 * hd];
    cell_kernel(spec, params, &xh, &state.c, &mut gates, &mut out);
    let c = out.split_off(hd);
    Ok(LstmState { h: out, c })
}
