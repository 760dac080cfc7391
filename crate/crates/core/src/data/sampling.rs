use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::PwcSignal;

/// Distributions over scalar piecewise-constant inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputDistribution {
    /// Blocks of `hold` equal values, block amplitudes i.i.d. `N(0, std^2)`.
    VdpSquare {
        #[serde(default = "default_vdp_std")]
        std: f64,
        #[serde(default = "default_vdp_hold")]
        hold: usize,
    },
    /// Blocks of `hold` equal values, amplitudes i.i.d. log-normal.
    FhnSteps {
        #[serde(default = "default_fhn_log_mean")]
        log_mean: f64,
        #[serde(default = "default_fhn_log_std")]
        log_std: f64,
        #[serde(default = "default_fhn_hold")]
        hold: usize,
    },
    /// `u_k = A sin(omega k delta)`, `A ~ LogNormal(amp_log_mean, amp_log_std)`,
    /// `omega ~ Uniform(0, max_omega)`, drawn once per signal.
    Sine {
        #[serde(default)]
        amp_log_mean: f64,
        #[serde(default = "one")]
        amp_log_std: f64,
        #[serde(default = "two_pi")]
        max_omega: f64,
    },
}

fn default_vdp_std() -> f64 {
    5.0
}
fn default_vdp_hold() -> usize {
    5
}
fn default_fhn_log_mean() -> f64 {
    0.2f64.ln()
}
fn default_fhn_log_std() -> f64 {
    0.5
}
fn default_fhn_hold() -> usize {
    40
}
fn one() -> f64 {
    1.0
}
fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

impl InputDistribution {
    pub fn vdp_square() -> Self {
        Self::VdpSquare {
            std: default_vdp_std(),
            hold: default_vdp_hold(),
        }
    }

    pub fn fhn_steps() -> Self {
        Self::FhnSteps {
            log_mean: default_fhn_log_mean(),
            log_std: default_fhn_log_std(),
            hold: default_fhn_hold(),
        }
    }

    pub fn sine() -> Self {
        Self::Sine {
            amp_log_mean: 0.0,
            amp_log_std: 1.0,
            max_omega: two_pi(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::VdpSquare { std, hold } => std > 0.0 && hold >= 1,
            Self::FhnSteps { log_std, hold, .. } => log_std > 0.0 && hold >= 1,
            Self::Sine {
                amp_log_std,
                max_omega,
                ..
            } => amp_log_std > 0.0 && max_omega > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid input distribution {self:?}")))
        }
    }
}

/// Number of control values needed so that `horizon` itself is queryable by
/// the flow model (which reads one value past the current period).
pub fn signal_len(horizon: f64, delta: f64) -> usize {
    let periods = (horizon / delta - 1e-9).ceil().max(0.0) as usize;
    periods + 1
}

/// `x0 ~ N(0, I)` in `dim` coordinates.
pub fn sample_initial<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}

pub fn sample_input<R: Rng + ?Sized>(
    dist: &InputDistribution,
    delta: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<PwcSignal> {
    dist.validate()?;
    let len = signal_len(horizon, delta);
    let values = match *dist {
        InputDistribution::VdpSquare { std, hold } => {
            let amp = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            held_blocks(len, hold, || amp.sample(rng))
        }
        InputDistribution::FhnSteps {
            log_mean,
            log_std,
            hold,
        } => {
            let amp = LogNormal::new(log_mean, log_std).map_err(|e| Error::Config(e.to_string()))?;
            held_blocks(len, hold, || amp.sample(rng))
        }
        InputDistribution::Sine {
            amp_log_mean,
            amp_log_std,
            max_omega,
        } => {
            let amp = LogNormal::new(amp_log_mean, amp_log_std)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(rng);
            let omega = Uniform::new(0.0, max_omega)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(rng);
            sine_values(amp, omega, delta, len)
        }
    };
    PwcSignal::scalar(delta, values)
}

/// `u_k = amp * sin(omega * k * delta)` for `k = 1..=len`.
pub(crate) fn sine_values(amp: f64, omega: f64, delta: f64, len: usize) -> Vec<f64> {
    (1..=len).map(|k| amp * (omega * k as f64 * delta).sin()).collect()
}

fn held_blocks(len: usize, hold: usize, mut draw: impl FnMut() -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let v = draw();
        let n = hold.min(len - out.len());
        out.extend(std::iter::repeat_n(v, n));
    }
    out
}

/// One uniform draw in each of the `k` strata `[j T/k, (j+1) T/k)`, in order.
pub fn latin_hypercube_times<R: Rng + ?Sized>(k: usize, horizon: f64, rng: &mut R) -> Vec<f64> {
    (0..k)
        .map(|j| {
            let lo = horizon * j as f64 / k as f64;
            let hi = horizon * (j + 1) as f64 / k as f64;
            let t = lo + rng.random::<f64>() * (hi - lo);
            if t >= hi {
                hi.next_down()
            } else {
                t
            }
        })
        .collect()
}
