//! Dataset directory layout:
//!
//! ```text
//! manifest.json        schema version, generating config, per-trajectory counts
//! measurements.csv     traj_id, t, xhat_1..xhat_n
//! inputs.csv           traj_id, k, u_1..u_m   (k starts at 1)
//! initial_states.csv   traj_id, x_1..x_n
//! splits.csv           traj_id, split
//! ```
//!
//! Floats are written in shortest round-trip form, so a load returns
//! bit-identical values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetConfig, Split, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::ode::PwcSignal;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    config: DatasetConfig,
    n_trajectories: usize,
    state_dim: usize,
    input_dim: usize,
    delta: f64,
    samples_per_trajectory: Vec<usize>,
    inputs_per_trajectory: Vec<usize>,
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("{what}: cannot parse `{s}` as a number")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("{what}: cannot parse `{s}` as an index")))
}

fn header(prefix: &[&str], stem: &str, n: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((1..=n).map(|i| format!("{stem}_{i}")))
        .collect()
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        schema_version: DATASET_SCHEMA_VERSION,
        config: ds.config.clone(),
        n_trajectories: ds.trajectories.len(),
        state_dim: ds.state_dim,
        input_dim: ds.input_dim,
        delta: ds.config.delta,
        samples_per_trajectory: ds.trajectories.iter().map(|t| t.times.len()).collect(),
        inputs_per_trajectory: ds.trajectories.iter().map(|t| t.signal.len()).collect(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let mut w = csv::Writer::from_path(dir.join("measurements.csv"))?;
    w.write_record(header(&["traj_id", "t"], "xhat", ds.state_dim))?;
    for t in &ds.trajectories {
        for (ti, m) in t.times.iter().zip(&t.measurements) {
            let mut row = vec![t.id.to_string(), fmt_f64(*ti)];
            row.extend(m.iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("inputs.csv"))?;
    w.write_record(header(&["traj_id", "k"], "u", ds.input_dim))?;
    for t in &ds.trajectories {
        for k in 0..t.signal.len() {
            let mut row = vec![t.id.to_string(), (k + 1).to_string()];
            row.extend(t.signal.value(k)?.iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("initial_states.csv"))?;
    w.write_record(header(&["traj_id"], "x", ds.state_dim))?;
    for t in &ds.trajectories {
        let mut row = vec![t.id.to_string()];
        row.extend(t.x0.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("splits.csv"))?;
    w.write_record(["traj_id", "split"])?;
    for t in &ds.trajectories {
        w.write_record([t.id.to_string(), ds.splits[t.id].as_str().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `file`, checks its header, and returns `(traj_id, remaining fields)` rows.
fn read_rows(dir: &Path, file: &str, expected_header: &[String]) -> Result<Vec<(usize, Vec<String>)>> {
    let path = dir.join(file);
    let mut r = csv::Reader::from_path(&path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let hdr: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if hdr != expected_header {
        return Err(Error::Format(format!("{file}: expected header {expected_header:?}, found {hdr:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(format!("{file}: {e}")))?;
        if rec.len() != expected_header.len() {
            return Err(Error::Format(format!("{file}: short row {rec:?}")));
        }
        let id = parse_usize(&rec[0], file)?;
        rows.push((id, rec.iter().skip(1).map(str::to_string).collect()));
    }
    Ok(rows)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "dataset schema version {} is not supported (expected {DATASET_SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    let n = m.n_trajectories;
    if m.samples_per_trajectory.len() != n || m.inputs_per_trajectory.len() != n {
        return Err(Error::Format("manifest per-trajectory counts do not match n_trajectories".into()));
    }
    let check_id = |id: usize, file: &str| {
        if id >= n {
            Err(Error::Format(format!("{file}: trajectory id {id} out of range (n = {n})")))
        } else {
            Ok(id)
        }
    };

    let mut x0s: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (id, fields) in read_rows(dir, "initial_states.csv", &header(&["traj_id"], "x", m.state_dim))? {
        let x = fields
            .iter()
            .map(|f| parse_f64(f, "initial_states.csv"))
            .collect::<Result<Vec<_>>>()?;
        if x0s.insert(check_id(id, "initial_states.csv")?, x).is_some() {
            return Err(Error::Format(format!("initial_states.csv: duplicate trajectory {id}")));
        }
    }

    let mut inputs: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (id, fields) in read_rows(dir, "inputs.csv", &header(&["traj_id", "k"], "u", m.input_dim))? {
        let id = check_id(id, "inputs.csv")?;
        let k = parse_usize(&fields[0], "inputs.csv")?;
        if k != inputs[id].len() / m.input_dim + 1 {
            return Err(Error::Format(format!("inputs.csv: trajectory {id} has out-of-order k = {k}")));
        }
        for f in &fields[1..] {
            inputs[id].push(parse_f64(f, "inputs.csv")?);
        }
    }

    let mut times: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut meas: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    for (id, fields) in read_rows(dir, "measurements.csv", &header(&["traj_id", "t"], "xhat", m.state_dim))? {
        let id = check_id(id, "measurements.csv")?;
        times[id].push(parse_f64(&fields[0], "measurements.csv")?);
        meas[id].push(
            fields[1..]
                .iter()
                .map(|f| parse_f64(f, "measurements.csv"))
                .collect::<Result<Vec<_>>>()?,
        );
    }

    let mut splits: Vec<Option<Split>> = vec![None; n];
    for (id, fields) in read_rows(dir, "splits.csv", &["traj_id".to_string(), "split".to_string()])? {
        let id = check_id(id, "splits.csv")?;
        splits[id] = Some(Split::parse(&fields[0])?);
    }

    let mut trajectories = Vec::with_capacity(n);
    for id in 0..n {
        let x0 = x0s
            .remove(&id)
            .ok_or_else(|| Error::Format(format!("initial state of trajectory {id} missing")))?;
        if times[id].len() != m.samples_per_trajectory[id] {
            return Err(Error::Format(format!(
                "trajectory {id}: manifest lists {} samples, measurements.csv holds {}",
                m.samples_per_trajectory[id],
                times[id].len()
            )));
        }
        if inputs[id].len() != m.inputs_per_trajectory[id] * m.input_dim {
            return Err(Error::Format(format!(
                "trajectory {id}: manifest lists {} inputs, inputs.csv holds {}",
                m.inputs_per_trajectory[id],
                inputs[id].len() / m.input_dim.max(1)
            )));
        }
        let signal = PwcSignal::new(m.delta, m.input_dim, std::mem::take(&mut inputs[id]))?;
        trajectories.push(TrajectoryRecord {
            id,
            x0,
            signal,
            times: std::mem::take(&mut times[id]),
            measurements: std::mem::take(&mut meas[id]),
        });
    }
    let splits = splits
        .into_iter()
        .enumerate()
        .map(|(id, s)| s.ok_or_else(|| Error::Format(format!("split of trajectory {id} missing"))))
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        config: m.config,
        state_dim: m.state_dim,
        input_dim: m.input_dim,
        trajectories,
        splits,
    })
}
