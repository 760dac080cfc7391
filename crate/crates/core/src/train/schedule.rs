use serde::{Deserialize, Serialize};

/// Multiplies the learning rate by `factor` after `patience` consecutive epochs
/// without a strict improvement of the best validation loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub stagnant: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            best: None,
            stagnant: 0,
        }
    }

    /// Feeds one epoch's validation loss and returns the learning rate for
    /// the next epoch.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if self.best.is_none_or(|b| val_loss < b) {
            self.best = Some(val_loss);
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant >= self.patience {
                self.lr *= self.factor;
                self.stagnant = 0;
            }
        }
        self.lr
    }
}

/// Signals a stop once `patience` consecutive epochs fail to improve on the
/// reference loss by more than `min_delta`. The reference only moves on such
/// an improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub min_delta: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub stagnant: usize,
}

impl EarlyStopping {
    pub fn new(min_delta: f64, patience: usize) -> Self {
        Self {
            min_delta,
            patience,
            best: None,
            stagnant: 0,
        }
    }

    /// Feeds one epoch's validation loss; `true` means stop now.
    pub fn update(&mut self, val_loss: f64) -> bool {
        if self.best.is_none_or(|b| val_loss < b - self.min_delta) {
            self.best = Some(val_loss);
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
        }
        self.stagnant >= self.patience
    }
}
