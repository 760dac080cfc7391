use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant input: `u(t) = values[k]` for `k*delta <= t < (k+1)*delta`.
///
/// Index `k` here is zero-based, so `values[0]` is the first control value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwcSignal {
    delta: f64,
    input_dim: usize,
    values: Vec<f64>,
}

impl PwcSignal {
    /// `values` holds `input_dim` coordinates per control period, row after row.
    pub fn new(delta: f64, input_dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("control period must be positive, got {delta}")));
        }
        if input_dim == 0 || !values.len().is_multiple_of(input_dim) {
            return Err(Error::shape("signal values", input_dim.max(1), values.len()));
        }
        Ok(Self {
            delta,
            input_dim,
            values,
        })
    }

    /// A scalar signal.
    pub fn scalar(delta: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(delta, 1, values)
    }

    pub fn constant(delta: f64, value: &[f64], len: usize) -> Result<Self> {
        Self::new(delta, value.len(), value.repeat(len))
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of control periods stored.
    pub fn len(&self) -> usize {
        self.values.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The time up to which the signal is defined.
    pub fn horizon(&self) -> f64 {
        self.len() as f64 * self.delta
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    /// The `k`-th control value (zero-based).
    pub fn value(&self, k: usize) -> Result<&[f64]> {
        if k >= self.len() {
            return Err(Error::SignalExhausted {
                index: k + 1,
                len: self.len(),
            });
        }
        Ok(&self.values[k * self.input_dim..(k + 1) * self.input_dim])
    }

    /// Period index containing `t`, with right-open intervals.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("signal queried at t = {t}")));
        }
        Ok((t / self.delta).floor() as usize)
    }

    pub fn eval(&self, t: f64) -> Result<&[f64]> {
        self.value(self.index_at(t)?)
    }

    /// Copy of the signal with the first `k` periods dropped.
    pub fn shifted(&self, k: usize) -> Result<Self> {
        if k > self.len() {
            return Err(Error::SignalExhausted {
                index: k,
                len: self.len(),
            });
        }
        Self::new(self.delta, self.input_dim, self.values[k * self.input_dim..].to_vec())
    }
}
