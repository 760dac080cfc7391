//! Small-network building blocks with reverse-mode gradients.
//!
//! Parameters live in one flat [`ParamVector`]; networks address their
//! weights through offsets into it. Plain forward functions
//! ([`mlp_forward`], [`lstm_step`]) serve evaluation, while [`Tape`] records
//! the same computations for gradient evaluation.

mod adam;
mod init;
mod lstm;
mod mlp;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use init::init_uniform;
pub use lstm::{lstm_step, LstmSpec, LstmState};
pub use mlp::{mlp_forward, MlpSpec};
pub use params::{ParamVector, Segment};
pub use tape::{Tape, Var};

/// `out = b + W x` with `W` stored row-major as `out.len() x x.len()`.
///
/// Shared by the plain and taped forward passes so both produce identical
/// bits.
pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = b[i];
        for (wij, xj) in row.iter().zip(x) {
            acc += wij * xj;
        }
        *o = acc;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
