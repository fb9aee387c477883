/// Reduce-on-plateau learning rate plus early stopping, both watching the validation loss.
/// An epoch improves when its loss is strictly below the best so far.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    pub lr: f64,
    floor: f64,
    factor: f64,
    plateau_patience: usize,
    stop_patience: usize,
    best: f64,
    plateau_wait: usize,
    stop_wait: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleStep {
    pub improved: bool,
    pub reduced: bool,
    pub stop: bool,
}

impl PlateauSchedule {
    pub fn new(lr: f64, floor: f64, factor: f64, plateau_patience: usize, stop_patience: usize) -> Self {
        PlateauSchedule {
            lr,
            floor,
            factor,
            plateau_patience,
            stop_patience,
            best: f64::INFINITY,
            plateau_wait: 0,
            stop_wait: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records one epoch's validation loss. A NaN loss never counts as an improvement.
    pub fn observe(&mut self, val_loss: f64) -> ScheduleStep {
        let improved = val_loss < self.best;
        let mut reduced = false;
        if improved {
            self.best = val_loss;
            self.plateau_wait = 0;
            self.stop_wait = 0;
        } else {
            self.plateau_wait += 1;
            self.stop_wait += 1;
            if self.plateau_wait >= self.plateau_patience && self.lr > self.floor {
                self.lr = (self.lr * self.factor).max(self.floor);
                self.plateau_wait = 0;
                reduced = true;
            }
        }
        ScheduleStep {
            improved,
            reduced,
            stop: self.stop_wait >= self.stop_patience,
        }
    }
}
