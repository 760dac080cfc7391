use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FitzHugh-Nagumo constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FhnParams {
    pub eta: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self {
            eta: 1.0 / 50.0,
            gamma: 40.0,
            a: 0.3,
            b: 1.4,
        }
    }
}

/// Right-hand sides known to the registry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SystemKind {
    VanDerPol { mu: f64 },
    FitzHughNagumo(FhnParams),
    /// `x' = -x`, input ignored.
    Decay,
    /// `x1' = x2, x2' = -x1`, input ignored.
    Harmonic,
}

/// A time-invariant controlled system `x' = f(x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemDef {
    pub name: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub kind: SystemKind,
}

pub fn vdp_rhs(x: [f64; 2], u: f64, mu: f64) -> [f64; 2] {
    [x[1], -x[0] + (1.0 - x[0] * x[0]) * mu * x[1] + u]
}

pub fn fhn_rhs(x: [f64; 2], u: f64, p: &FhnParams) -> [f64; 2] {
    [
        (x[0] - x[0] * x[0] * x[0] - x[1] + u) / p.eta,
        (x[0] + p.a - p.b * x[1]) / (p.eta * p.gamma),
    ]
}

impl SystemDef {
    pub fn new(name: impl Into<String>, kind: SystemKind) -> Self {
        let state_dim = match kind {
            SystemKind::Decay => 1,
            _ => 2,
        };
        Self {
            name: name.into(),
            state_dim,
            input_dim: 1,
            kind,
        }
    }

    pub fn vdp(mu: f64) -> Self {
        Self::new("vdp", SystemKind::VanDerPol { mu })
    }

    pub fn fhn(params: FhnParams) -> Self {
        Self::new("fhn", SystemKind::FitzHughNagumo(params))
    }

    /// Writes `f(x, u)` into `dx`.
    pub fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        match self.kind {
            SystemKind::VanDerPol { mu } => dx.copy_from_slice(&vdp_rhs([x[0], x[1]], u[0], mu)),
            SystemKind::FitzHughNagumo(ref p) => dx.copy_from_slice(&fhn_rhs([x[0], x[1]], u[0], p)),
            SystemKind::Decay => dx[0] = -x[0],
            SystemKind::Harmonic => {
                dx[0] = x[1];
                dx[1] = -x[0];
            }
        }
    }
}

/// Registry entry plus parameter overrides, as written in config files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl SystemConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<SystemDef> {
        let sys = match self.name.as_str() {
            "vdp" => SystemDef::vdp(self.mu.unwrap_or(1.0)),
            "fhn" => {
                let d = FhnParams::default();
                let p = FhnParams {
                    eta: self.eta.unwrap_or(d.eta),
                    gamma: self.gamma.unwrap_or(d.gamma),
                    a: self.a.unwrap_or(d.a),
                    b: self.b.unwrap_or(d.b),
                };
                if !(p.eta > 0.0 && p.gamma > 0.0) {
                    return Err(Error::Config(format!("fhn requires eta > 0 and gamma > 0, got {p:?}")));
                }
                SystemDef::fhn(p)
            }
            "decay" => SystemDef::new("decay", SystemKind::Decay),
            "harmonic" => SystemDef::new("harmonic", SystemKind::Harmonic),
            other => return Err(Error::Config(format!("unknown system `{other}`"))),
        };
        Ok(sys)
    }
}
