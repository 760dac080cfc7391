//! Dormand-Prince 5(4) with PI step-size control.
//!
//! The input is piecewise constant, so the right-hand side jumps at every
//! control boundary `k * delta`. Integration is split into one sub-problem
//! per control period: no step crosses a boundary and the step-size
//! controller starts afresh in every period. Query times are hit exactly by
//! shortening the step that would pass them.

use serde::{Deserialize, Serialize};

use super::{PwcSignal, SystemDef};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step size; `None` is unbounded.
    pub max_step: Option<f64>,
    /// First step of every control period; `None` uses the Hairer-Norsett-Wanner
    /// starting-step heuristic.
    pub initial_step: Option<f64>,
    /// Bound on attempted steps per control period.
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            max_step: None,
            initial_step: None,
            max_steps: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step.is_none_or(|h| h > 0.0)) {
            return Err(Error::Config(format!("solver tolerances must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// States of `x' = f(x, u)` at the requested times.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub signal: PwcSignal,
}

const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Fifth- minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;

struct Stepper<'a> {
    sys: &'a SystemDef,
    cfg: &'a SolverConfig,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

/// Step-size controller memory, reset at every control boundary.
struct Controller {
    h: Option<f64>,
    err_prev: f64,
}

impl Controller {
    fn fresh() -> Self {
        Self {
            h: None,
            err_prev: 1e-4,
        }
    }
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a SystemDef, cfg: &'a SolverConfig) -> Self {
        let n = sys.state_dim;
        Self {
            sys,
            cfg,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }

    fn max_step(&self) -> f64 {
        self.cfg.max_step.unwrap_or(f64::INFINITY)
    }

    fn norm(&self, v: &[f64], y: &[f64]) -> f64 {
        let n = v.len() as f64;
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| {
                let sc = self.cfg.abs_tol + self.cfg.rel_tol * yi.abs();
                (vi / sc) * (vi / sc)
            })
            .sum();
        (s / n).sqrt()
    }

    /// Starting step from Hairer, Norsett and Wanner (II.4).
    fn initial_step(&mut self, x: &[f64], u: &[f64], span: f64) -> f64 {
        if let Some(h) = self.cfg.initial_step {
            return h.min(span).min(self.max_step());
        }
        let n = x.len();
        let mut f0 = vec![0.0; n];
        self.sys.rhs(x, u, &mut f0);
        let d0 = self.norm(x, x);
        let d1 = self.norm(&f0, x);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let x1: Vec<f64> = x.iter().zip(&f0).map(|(xi, fi)| xi + h0 * fi).collect();
        let mut f1 = vec![0.0; n];
        self.sys.rhs(&x1, u, &mut f1);
        let diff: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
        let d2 = self.norm(&diff, x) / h0;
        let dmax = d1.max(d2);
        let h1 = if dmax <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dmax).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(self.max_step())
    }

    /// Integrates `x` from `t0` to `t1` inside one control period.
    fn advance(&mut self, x: &mut [f64], t0: f64, t1: f64, u: &[f64], ctl: &mut Controller) -> Result<()> {
        if t1 <= t0 {
            return Ok(());
        }
        let n = x.len();
        let mut t = t0;
        let mut h = match ctl.h {
            Some(h) => h,
            None => self.initial_step(x, u, t1 - t0),
        };
        self.sys.rhs(x, u, &mut self.k[0]);
        let mut attempts = 0usize;
        loop {
            attempts += 1;
            if attempts > self.cfg.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("exceeded {} steps in one control period", self.cfg.max_steps),
                });
            }
            let remaining = t1 - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h.min(self.max_step()) };
            if step <= 1e-14 * t1.abs().max(1.0) && !last {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size underflow (h = {step:e})"),
                });
            }

            self.stages(x, u, step);
            let mut err_vec = vec![0.0; n];
            for (i, e) in err_vec.iter_mut().enumerate() {
                *e = step * (0..7).map(|s| E[s] * self.k[s][i]).sum::<f64>();
            }
            let scale_ref: Vec<f64> = x.iter().zip(&self.y_new).map(|(a, b)| a.abs().max(b.abs())).collect();
            let err = self.norm(&err_vec, &scale_ref);
            if !err.is_finite() || self.y_new.iter().any(|v| !v.is_finite()) {
                // treat as a rejected step with maximal shrink
                h = step * FAC_MIN;
                continue;
            }

            let fac11 = err.powf(0.2 - PI_BETA * 0.75);
            if err <= 1.0 {
                let fac = (fac11 / ctl.err_prev.powf(PI_BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                ctl.err_prev = err.max(1e-4);
                x.copy_from_slice(&self.y_new);
                let (k0, rest) = self.k.split_at_mut(1);
                k0[0].copy_from_slice(&rest[5]);
                let h_next = step / fac;
                if last {
                    // keep the unclipped proposal for the next query in this period
                    ctl.h = Some(if step < h { h } else { h_next });
                    return Ok(());
                }
                t += step;
                h = h_next;
            } else {
                h = step / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            }
        }
    }

    /// Fills `k[1..7]` and `y_new` for a step of size `h` from `x`. The system
    /// is autonomous given `u`, so stage times are not needed.
    fn stages(&mut self, x: &[f64], u: &[f64], h: f64) {
        let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, row) in rows.iter().enumerate() {
            for (i, (t, xi)) in self.tmp.iter_mut().zip(x).enumerate() {
                let mut acc = 0.0;
                for (j, a) in row.iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                *t = xi + h * acc;
            }
            let (_, todo) = self.k.split_at_mut(s + 1);
            self.sys.rhs(&self.tmp, u, &mut todo[0]);
        }
        for (i, (y, xi)) in self.y_new.iter_mut().zip(x).enumerate() {
            let mut acc = 0.0;
            for (j, b) in B.iter().enumerate() {
                acc += b * self.k[j][i];
            }
            *y = xi + h * acc;
        }
        let (_, last) = self.k.split_at_mut(6);
        self.sys.rhs(&self.y_new, u, &mut last[0]);
    }
}

/// Integrates `system` from `x0` under `signal` and records the state at each
/// of `times` (sorted, non-negative).
pub fn integrate(
    system: &SystemDef,
    x0: &[f64],
    signal: &PwcSignal,
    times: &[f64],
    cfg: &SolverConfig,
) -> Result<DenseTrajectory> {
    cfg.validate()?;
    if x0.len() != system.state_dim {
        return Err(Error::shape("initial state", system.state_dim, x0.len()));
    }
    if signal.input_dim() != system.input_dim {
        return Err(Error::shape("signal input dimension", system.input_dim, signal.input_dim()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite initial state {x0:?}")));
    }
    for w in times.windows(2) {
        if !(w[1] >= w[0]) {
            return Err(Error::InvalidArgument(format!("query times not sorted: {} then {}", w[0], w[1])));
        }
    }
    if let Some(&t) = times.first() {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative query time {t}")));
        }
    }
    if let Some(&t) = times.last() {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite query time {t}")));
        }
    }

    let delta = signal.delta();
    let mut stepper = Stepper::new(system, cfg);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut period = 0usize;
    let mut ctl = Controller::fresh();
    let mut states = Vec::with_capacity(times.len());

    for &tq in times {
        // finish every control period that ends before tq
        loop {
            let end = (period + 1) as f64 * delta;
            if tq <= end {
                break;
            }
            let u = signal.value(period)?;
            stepper.advance(&mut x, t, end, u, &mut ctl)?;
            t = end;
            period += 1;
            ctl = Controller::fresh();
        }
        if tq > t {
            let u = signal.value(period)?;
            stepper.advance(&mut x, t, tq, u, &mut ctl)?;
            t = tq;
        }
        states.push(x.clone());
    }

    Ok(DenseTrajectory {
        times: times.to_vec(),
        states,
        x0: x0.to_vec(),
        signal: signal.clone(),
    })
}
