//! Threshold spike detection and resting/spiking classification of
//! amplitude-hold windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Resting,
    Spiking,
}

impl Activity {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Resting => "resting",
            Self::Spiking => "spiking",
        }
    }
}

/// One constant-amplitude interval `[start, end)` of a staircase input.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub amplitude: f64,
    pub spikes: usize,
    pub class: Activity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpikeReport {
    pub threshold: f64,
    pub min_separation: f64,
    /// Upward crossing times, increasing.
    pub spike_times: Vec<f64>,
    pub windows: Vec<Window>,
}

/// Spike onsets in a sampled series: upward crossings of `threshold` that
/// are later matched by a downward crossing (or the series ends above the
/// threshold), at least `min_separation` after the previous onset.
pub fn detect_spikes(times: &[f64], values: &[f64], threshold: f64, min_separation: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("spike detection needs a non-empty series".into()));
    }
    if times.len() != values.len() {
        return Err(Error::shape("spike series", times.len(), values.len()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("spike series times must be increasing".into()));
    }
    let mut spikes: Vec<f64> = Vec::new();
    let mut above = values[0] > threshold;
    let mut onset = None;
    for i in 1..values.len() {
        let now = values[i] > threshold;
        if now && !above {
            // linear interpolation of the crossing instant
            let (v0, v1) = (values[i - 1], values[i]);
            let frac = (threshold - v0) / (v1 - v0);
            onset = Some(times[i - 1] + frac * (times[i] - times[i - 1]));
        } else if !now && above {
            if let Some(t) = onset.take() {
                push_spike(&mut spikes, t, min_separation);
            }
        }
        above = now;
    }
    if let Some(t) = onset {
        push_spike(&mut spikes, t, min_separation);
    }
    Ok(spikes)
}

fn push_spike(spikes: &mut Vec<f64>, t: f64, min_separation: f64) {
    if spikes.last().is_none_or(|&last| t - last >= min_separation) {
        spikes.push(t);
    }
}

/// Counts spikes in each `[start, end)` and labels windows with at least
/// two of them as spiking.
pub fn classify_windows(spike_times: &[f64], windows: &[(f64, f64, f64)]) -> Vec<Window> {
    windows
        .iter()
        .map(|&(start, end, amplitude)| {
            let spikes = spike_times.iter().filter(|&&t| t >= start && t < end).count();
            Window {
                start,
                end,
                amplitude,
                spikes,
                class: if spikes >= 2 { Activity::Spiking } else { Activity::Resting },
            }
        })
        .collect()
}

/// Fraction of windows on which two reports agree.
pub fn agreement(a: &[Window], b: &[Window]) -> f64 {
    let same = a.iter().zip(b).filter(|(x, y)| x.class == y.class).count();
    same as f64 / a.len().max(1) as f64
}

/// Collapses a window classification into runs, e.g. resting, spiking,
/// resting.
pub fn activity_runs(windows: &[Window]) -> Vec<Activity> {
    let mut runs: Vec<Activity> = Vec::new();
    for w in windows {
        if runs.last() != Some(&w.class) {
            runs.push(w.class);
        }
    }
    runs
}
