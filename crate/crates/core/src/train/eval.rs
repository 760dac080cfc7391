//! Monte Carlo estimates of the time-averaged prediction error
//! `E[(1/t) int_0^t ||phi_hat - phi||^2]` against noiseless simulation.

use serde::Serialize;

use super::loss::sq_dist;
use crate::data::{sample_initial, sample_input, InputDistribution};
use crate::error::{Error, Result};
use crate::flow::{FlowPredictor, SimulatedFlow};
use crate::ode::PwcSignal;
use crate::rng;

const MAX_REDRAWS: usize = 3;

/// Mean, sample variance and normal-approximation 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossEstimate {
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
    /// `1.96 sqrt(variance / n)`; NaN when `n < 2`.
    pub ci_half_width: f64,
    /// Trajectories redrawn after an integration failure.
    pub redraws: usize,
}

impl LossEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance = if n >= 2 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            f64::NAN
        };
        Self {
            mean,
            variance,
            n,
            ci_half_width: 1.96 * (variance / n as f64).sqrt(),
            redraws: 0,
        }
    }

    pub fn ci_lo(&self) -> f64 {
        self.mean - self.ci_half_width
    }

    pub fn ci_hi(&self) -> f64 {
        self.mean + self.ci_half_width
    }
}

/// Loss estimate at one horizon together with the per-trajectory values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HorizonEstimate {
    pub t: f64,
    pub estimate: LossEstimate,
    pub per_trajectory: Vec<f64>,
}

/// Midpoints of `ceil(t / max_spacing)` equal cells covering `[0, t]`.
pub fn quadrature_grid(t: f64, max_spacing: f64) -> Vec<f64> {
    let cells = ((t / max_spacing).ceil() as usize).max(1);
    let h = t / cells as f64;
    (0..cells).map(|j| (j as f64 + 0.5) * h).collect()
}

/// `(1/t) int_0^t ||model - truth||^2 dt` by the midpoint rule.
pub fn time_averaged_loss<P: FlowPredictor + ?Sized>(
    model: &P,
    truth: &SimulatedFlow,
    x0: &[f64],
    signal: &PwcSignal,
    t: f64,
    max_spacing: f64,
) -> Result<f64> {
    let grid = quadrature_grid(t, max_spacing);
    let pred = model.predict(&grid, x0, signal)?;
    let real = truth.predict(&grid, x0, signal)?;
    Ok(pred.iter().zip(&real).map(|(p, r)| sq_dist(p, r)).sum::<f64>() / grid.len() as f64)
}

/// Settings shared by horizon and input-distribution studies.
#[derive(Clone, Debug)]
pub struct StudySetup<'a> {
    pub truth: &'a SimulatedFlow,
    pub input: &'a InputDistribution,
    pub delta: f64,
    pub n_traj: usize,
    pub seed: u64,
}

impl StudySetup<'_> {
    /// Quadrature spacing: a tenth of the control period.
    pub fn spacing(&self) -> f64 {
        self.delta / 10.0
    }

    /// Per-trajectory time-averaged losses on `[0, t]` for `n_traj` fresh
    /// draws of `(x0, u)`; `stream` separates independent draw sets.
    pub fn sample_losses<P: FlowPredictor + ?Sized>(&self, model: &P, t: f64, stream: u64) -> Result<(Vec<f64>, usize)> {
        if self.n_traj == 0 {
            return Err(Error::InvalidArgument("study needs at least one trajectory".into()));
        }
        let seed = rng::derive(self.seed, stream);
        let mut losses = Vec::with_capacity(self.n_traj);
        let mut redraws = 0;
        for i in 0..self.n_traj {
            let mut r = rng::stream(seed, i as u64);
            let mut attempts = 0;
            loop {
                let x0 = sample_initial(&mut r, self.truth.system.state_dim);
                let signal = sample_input(self.input, self.delta, t, &mut r)?;
                match time_averaged_loss(model, self.truth, &x0, &signal, t, self.spacing()) {
                    Ok(l) => {
                        losses.push(l);
                        break;
                    }
                    Err(e @ Error::Integration { .. }) => {
                        attempts += 1;
                        redraws += 1;
                        if attempts > MAX_REDRAWS {
                            return Err(e);
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok((losses, redraws))
    }

    pub fn estimate<P: FlowPredictor + ?Sized>(&self, model: &P, t: f64, stream: u64) -> Result<HorizonEstimate> {
        let (per_trajectory, redraws) = self.sample_losses(model, t, stream)?;
        let mut estimate = LossEstimate::from_samples(&per_trajectory);
        estimate.redraws = redraws;
        Ok(HorizonEstimate {
            t,
            estimate,
            per_trajectory,
        })
    }
}

/// `l_t` on every horizon of `t_grid`. Draws are keyed by the horizon, so
/// the estimate at a given `t` does not depend on the rest of the grid.
pub fn estimate_loss_curve<P: FlowPredictor + ?Sized>(
    model: &P,
    setup: &StudySetup<'_>,
    t_grid: &[f64],
) -> Result<Vec<HorizonEstimate>> {
    t_grid
        .iter()
        .map(|&t| {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("horizon must be positive, got {t}")));
            }
            setup.estimate(model, t, t.to_bits())
        })
        .collect()
}
