use crate::error::{Error, Result};
use crate::ode::PwcSignal;

/// One RNN input: a control value and the fraction of its period elapsed.
#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub u: Vec<f64>,
    pub tau: f64,
}

impl Token {
    /// `[u_1..u_m, tau]`.
    pub fn features(&self) -> Vec<f64> {
        let mut v = self.u.clone();
        v.push(self.tau);
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedQuery {
    /// Number of complete control periods before the query time.
    pub steps: usize,
    /// `steps` tokens with `tau = 1` followed by the partial-period token.
    pub tokens: Vec<Token>,
}

/// `(k_s, tau)` with `k_s = floor(s / delta)` and `tau = (s - k_s delta) / delta`.
pub fn split_time(s: f64, delta: f64) -> Result<(usize, f64)> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("query time must be finite and >= 0, got {s}")));
    }
    let k = (s / delta).floor();
    let tau = ((s - k * delta) / delta).clamp(0.0, 1.0);
    Ok((k as usize, tau))
}

pub fn discretize_time(s: f64, delta: f64, signal: &PwcSignal) -> Result<DiscretizedQuery> {
    let (steps, tau) = split_time(s, delta)?;
    let mut tokens = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        tokens.push(Token {
            u: signal.value(k)?.to_vec(),
            tau: 1.0,
        });
    }
    tokens.push(Token {
        u: signal.value(steps)?.to_vec(),
        tau,
    });
    Ok(DiscretizedQuery { steps, tokens })
}
