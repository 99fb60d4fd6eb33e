use super::TrainingConfig;

/// Reduce-on-plateau learning rate: multiplied by `factor` whenever the
/// validation loss has not improved for `patience` epochs, never below
/// `lr_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    lr: f64,
    lr_end: f64,
    factor: f64,
    patience: usize,
    best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(config: &TrainingConfig) -> Self {
        Self {
            lr: config.lr_start,
            lr_end: config.lr_end,
            factor: config.lr_factor,
            patience: config.patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's validation loss.
    pub fn observe(&mut self, val_loss: f64) {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
            return;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.lr = (self.lr * self.factor).max(self.lr_end);
            self.stale = 0;
        }
    }
}

/// Learning rate in effect at `epoch`, given the validation losses of the
/// epochs before it.
pub fn lr_schedule(epoch: usize, val_history: &[f64], config: &TrainingConfig) -> f64 {
    let mut s = PlateauSchedule::new(config);
    for &v in val_history.iter().take(epoch) {
        s.observe(v);
    }
    s.lr()
}
