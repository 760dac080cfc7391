use crate::data::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::flow::FlowPredictor;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over the samples of one trajectory of `||xi_k - phi_hat(t_k)||^2`.
pub fn trajectory_loss<P: FlowPredictor + ?Sized>(model: &P, rec: &TrajectoryRecord) -> Result<f64> {
    if rec.times.is_empty() {
        return Err(Error::InvalidArgument(format!("trajectory {} has no samples", rec.id)));
    }
    let pred = model.predict(&rec.times, &rec.x0, &rec.signal)?;
    let total: f64 = pred.iter().zip(&rec.measurements).map(|(p, m)| sq_dist(p, m)).sum();
    Ok(total / rec.times.len() as f64)
}

/// Mean over trajectories of [`trajectory_loss`].
pub fn empirical_loss<P: FlowPredictor + ?Sized>(model: &P, records: &[&TrajectoryRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("empirical loss over an empty set".into()));
    }
    let mut total = 0.0;
    for rec in records {
        total += trajectory_loss(model, rec)?;
    }
    Ok(total / records.len() as f64)
}
