/// Multiplies the learning rate by `factor` once the monitored loss has
/// failed to beat its best value for more than `patience` consecutive epochs.
/// Any improvement, however small, resets the counter; so does a reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    lr: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            lr,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records one epoch's loss and returns the learning rate for the next.
    pub fn step(&mut self, loss: f64) -> f64 {
        match self.best {
            Some(best) if loss >= best => {
                self.bad_epochs += 1;
                if self.bad_epochs > self.patience {
                    self.lr *= self.factor;
                    self.bad_epochs = 0;
                }
            }
            _ => {
                self.best = Some(loss);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Learning rate in effect after each epoch of `losses`.
pub fn lr_trace(losses: &[f64], lr: f64, factor: f64, patience: usize) -> Vec<f64> {
    let mut s = PlateauScheduler::new(lr, factor, patience);
    losses.iter().map(|&l| s.step(l)).collect()
}
