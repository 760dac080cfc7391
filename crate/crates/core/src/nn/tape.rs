//! Reverse-mode differentiation over a recorded sequence of vector
//! operations.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and [`Tape::backward`] is a single reverse sweep. The
//! coarse nodes (`dense`, `lstm_cell`) carry hand-written adjoints; the
//! elementwise nodes exist for composing small scalar functions.

use super::lstm::cell_kernel;
use super::{affine, sigmoid, LstmSpec, MlpSpec};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Constant,
    Param {
        offset: usize,
    },
    Dense {
        w: usize,
        x: Var,
        tanh: bool,
    },
    LstmCell {
        spec: LstmSpec,
        w: usize,
        x: Var,
        state: Var,
        gates: Vec<f64>,
    },
    Lerp {
        a: Var,
        b: Var,
        t: f64,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    SqErr {
        a: Var,
        target: Vec<f64>,
    },
    Sum {
        terms: Vec<Var>,
        scale: f64,
    },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

/// A recording of a forward computation over a borrowed parameter array.
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    /// A leaf reading `len` parameters starting at `offset`.
    pub fn param(&mut self, offset: usize, len: usize) -> Result<Var> {
        if offset + len > self.params.len() {
            return Err(Error::shape("tape parameter slice", self.params.len(), offset + len));
        }
        let value = self.params[offset..offset + len].to_vec();
        Ok(self.push(value, Op::Param { offset }))
    }

    /// `act(W x + b)` where `W` (`rows x len(x)`) starts at `w` and the bias
    /// follows it.
    pub fn dense(&mut self, w: usize, rows: usize, x: Var, tanh: bool) -> Result<Var> {
        let cols = self.value(x).len();
        let end = w + rows * cols + rows;
        if end > self.params.len() {
            return Err(Error::shape("dense layer parameters", end, self.params.len()));
        }
        let mut out = vec![0.0; rows];
        affine(
            &self.params[w..w + rows * cols],
            &self.params[w + rows * cols..end],
            self.value(x),
            &mut out,
        );
        if tanh {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        Ok(self.push(out, Op::Dense { w, x, tanh }))
    }

    /// Records a whole [`MlpSpec`] network whose parameters start at `offset`.
    pub fn mlp(&mut self, spec: &MlpSpec, offset: usize, x: Var) -> Result<Var> {
        if self.value(x).len() != spec.input_dim {
            return Err(Error::shape("mlp input", spec.input_dim, self.value(x).len()));
        }
        let layers = spec.layers();
        let last = layers.len() - 1;
        let mut cur = x;
        let mut off = offset;
        for (l, (fan_in, fan_out)) in layers.into_iter().enumerate() {
            cur = self.dense(off, fan_out, cur, l < last)?;
            off += fan_in * fan_out + fan_out;
        }
        Ok(cur)
    }

    /// One LSTM step. `state` holds `[h, c]` and so does the result.
    pub fn lstm_cell(&mut self, spec: &LstmSpec, w: usize, x: Var, state: Var) -> Result<Var> {
        let hd = spec.hidden_dim;
        if self.value(x).len() != spec.input_dim {
            return Err(Error::shape("lstm input", spec.input_dim, self.value(x).len()));
        }
        if self.value(state).len() != 2 * hd {
            return Err(Error::shape("lstm state", 2 * hd, self.value(state).len()));
        }
        if w + spec.param_count() > self.params.len() {
            return Err(Error::shape("lstm parameters", w + spec.param_count(), self.params.len()));
        }
        let mut xh = Vec::with_capacity(spec.input_dim + hd);
        xh.extend_from_slice(self.value(x));
        xh.extend_from_slice(&self.value(state)[..hd]);
        let mut gates = vec![0.0; 4 * hd];
        let mut out = vec![0.0; 2 * hd];
        cell_kernel(
            spec,
            &self.params[w..],
            &xh,
            &self.value(state)[hd..],
            &mut gates,
            &mut out,
        );
        Ok(self.push(
            out,
            Op::LstmCell {
                spec: *spec,
                w,
                x,
                state,
                gates,
            },
        ))
    }

    /// `(1 - t) a[..n] + t b[..n]` with `n = min(len(a), len(b))`.
    pub fn lerp(&mut self, a: Var, b: Var, t: f64, n: usize) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() < n || vb.len() < n {
            return Err(Error::shape("lerp operands", n, va.len().min(vb.len())));
        }
        let out = va[..n]
            .iter()
            .zip(&vb[..n])
            .map(|(x, y)| (1.0 - t) * x + t * y)
            .collect();
        Ok(self.push(out, Op::Lerp { a, b, t }))
    }

    fn binary(&self, a: Var, b: Var, context: &'static str) -> Result<()> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb {
            return Err(Error::shape(context, la, lb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add operands")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul operands")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|v| v.tanh()).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&v| sigmoid(v)).collect();
        self.push(out, Op::Sigmoid(a))
    }

    /// Scalar `||a - target||^2`.
    pub fn sq_err(&mut self, a: Var, target: &[f64]) -> Result<Var> {
        let va = self.value(a);
        if va.len() != target.len() {
            return Err(Error::shape("squared error target", va.len(), target.len()));
        }
        let s = va.iter().zip(target).map(|(x, y)| (x - y) * (x - y)).sum();
        Ok(self.push(
            vec![s],
            Op::SqErr {
                a,
                target: target.to_vec(),
            },
        ))
    }

    /// Scalar `scale * sum(terms)`; every term must itself be scalar.
    pub fn sum(&mut self, terms: Vec<Var>, scale: f64) -> Result<Var> {
        let mut s = 0.0;
        for &t in &terms {
            match self.value(t) {
                [v] => s += v,
                other => return Err(Error::shape("sum term", 1, other.len())),
            }
        }
        Ok(self.push(vec![scale * s], Op::Sum { terms, scale }))
    }

    /// Gradient of scalar node `output` times `seed`, w.r.t. every parameter.
    pub fn backward(&self, output: Var, seed: f64) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(output, seed, &mut grad)?;
        Ok(grad)
    }

    /// Like [`Tape::backward`] but accumulates into `grad`.
    pub fn backward_into(&self, output: Var, seed: f64, grad: &mut [f64]) -> Result<()> {
        if self.value(output).len() != 1 {
            return Err(Error::shape("backward seed node", 1, self.value(output).len()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::shape("gradient buffer", self.params.len(), grad.len()));
        }
        let mut adj: Vec<Vec<f64>> = (0..=output.0).map(|_| Vec::new()).collect();
        adj[output.0] = vec![seed];

        for id in (0..=output.0).rev() {
            let d = std::mem::take(&mut adj[id]);
            if d.is_empty() {
                continue;
            }
            let node = &self.nodes[id];
            match &node.op {
                Op::Constant => {}
                Op::Param { offset } => {
                    for (g, di) in grad[*offset..*offset + d.len()].iter_mut().zip(&d) {
                        *g += di;
                    }
                }
                Op::Dense { w, x, tanh } => {
                    let xv = &self.nodes[x.0].value;
                    let (rows, cols) = (node.value.len(), xv.len());
                    let da: Vec<f64> = if *tanh {
                        d.iter().zip(&node.value).map(|(g, y)| g * (1.0 - y * y)).collect()
                    } else {
                        d
                    };
                    let wm = &self.params[*w..*w + rows * cols];
                    let dx = accumulate_affine_adjoint(&da, xv, wm, &mut grad[*w..*w + rows * cols + rows]);
                    add_into(&mut adj, *x, &dx);
                }
                Op::LstmCell {
                    spec,
                    w,
                    x,
                    state,
                    gates,
                } => {
                    let (dx, dstate) = self.lstm_adjoint(spec, *w, *x, *state, gates, &node.value, &d, grad);
                    add_into(&mut adj, *x, &dx);
                    add_into(&mut adj, *state, &dstate);
                }
                Op::Lerp { a, b, t } => {
                    let da: Vec<f64> = d.iter().map(|g| (1.0 - t) * g).collect();
                    let db: Vec<f64> = d.iter().map(|g| t * g).collect();
                    add_prefix_into(&mut adj, *a, self.nodes[a.0].value.len(), &da);
                    add_prefix_into(&mut adj, *b, self.nodes[b.0].value.len(), &db);
                }
                Op::Add(a, b) => {
                    add_into(&mut adj, *a, &d);
                    add_into(&mut adj, *b, &d);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da: Vec<f64> = d.iter().zip(vb).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> = d.iter().zip(va).map(|(g, x)| g * x).collect();
                    add_into(&mut adj, *a, &da);
                    add_into(&mut adj, *b, &db);
                }
                Op::Tanh(a) => {
                    let da: Vec<f64> = d.iter().zip(&node.value).map(|(g, y)| g * (1.0 - y * y)).collect();
                    add_into(&mut adj, *a, &da);
                }
                Op::Sigmoid(a) => {
                    let da: Vec<f64> = d.iter().zip(&node.value).map(|(g, y)| g * y * (1.0 - y)).collect();
                    add_into(&mut adj, *a, &da);
                }
                Op::SqErr { a, target } => {
                    let da: Vec<f64> = self.nodes[a.0]
                        .value
                        .iter()
                        .zip(target)
                        .map(|(x, y)| 2.0 * d[0] * (x - y))
                        .collect();
                    add_into(&mut adj, *a, &da);
                }
                Op::Sum { terms, scale } => {
                    for t in terms {
                        add_into(&mut adj, *t, &[scale * d[0]]);
                    }
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_adjoint(
        &self,
        spec: &LstmSpec,
        w: usize,
        x: Var,
        state: Var,
        gates: &[f64],
        out: &[f64],
        d: &[f64],
        grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hd = spec.hidden_dim;
        let xv = &self.nodes[x.0].value;
        let sv = &self.nodes[state.0].value;
        let (h_prev, c_prev) = sv.split_at(hd);
        let (dh, dc_out) = d.split_at(hd);

        // pre-activation adjoints, gate order i, f, g, o
        let mut da = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            let tc = out[hd + j].tanh();
            let dc = dc_out[j] + dh[j] * o * (1.0 - tc * tc);
            da[j] = dc * g * i * (1.0 - i);
            da[hd + j] = dc * c_prev[j] * f * (1.0 - f);
            da[2 * hd + j] = dc * i * (1.0 - g * g);
            da[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }

        let mut xh = Vec::with_capacity(xv.len() + hd);
        xh.extend_from_slice(xv);
        xh.extend_from_slice(h_prev);
        let nw = spec.weight_count();
        let dxh = accumulate_affine_adjoint(&da, &xh, &self.params[w..w + nw], &mut grad[w..w + nw + 4 * hd]);
        let dx = dxh[..xv.len()].to_vec();
        let mut dstate = dxh[xv.len()..].to_vec();
        dstate.extend_from_slice(&dc_prev);
        (dx, dstate)
    }
}

/// For `y = W x + b`: adds `da x^T` and `da` into `gwb` (weights then
/// biases) and returns `W^T da`.
fn accumulate_affine_adjoint(da: &[f64], x: &[f64], w: &[f64], gwb: &mut [f64]) -> Vec<f64> {
    let (rows, cols) = (da.len(), x.len());
    let mut dx = vec![0.0; cols];
    let (gw, gb) = gwb.split_at_mut(rows * cols);
    for i in 0..rows {
        let g = da[i];
        if g == 0.0 {
            continue;
        }
        gb[i] += g;
        let wrow = &w[i * cols..(i + 1) * cols];
        let grow = &mut gw[i * cols..(i + 1) * cols];
        for j in 0..cols {
            grow[j] += g * x[j];
            dx[j] += g * wrow[j];
        }
    }
    dx
}

fn add_into(adj: &mut [Vec<f64>], v: Var, d: &[f64]) {
    let slot = &mut adj[v.0];
    if slot.is_empty() {
        slot.extend_from_slice(d);
    } else {
        for (s, di) in slot.iter_mut().zip(d) {
            *s += di;
        }
    }
}

fn add_prefix_into(adj: &mut [Vec<f64>], v: Var, full_len: usize, d: &[f64]) {
    let slot = &mut adj[v.0];
    if slot.is_empty() {
        slot.resize(full_len, 0.0);
    }
    for (s, di) in slot.iter_mut().zip(d) {
        *s += di;
    }
}
