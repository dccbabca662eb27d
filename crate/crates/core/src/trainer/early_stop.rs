/// Tracks the best validation accuracy (ties broken by lower validation
/// loss) and signals a stop after `patience` epochs without improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(f64, f64)>,
    best_epoch: usize,
    since_improvement: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_accuracy: f64, val_loss: f64) -> Verdict {
        let improved = match self.best {
            None => true,
            Some((acc, loss)) => val_accuracy > acc || (val_accuracy == acc && val_loss < loss),
        };
        if improved {
            self.best = Some((val_accuracy, val_loss));
            self.best_epoch = epoch;
            self.since_improvement = 0;
            return Verdict::Improved;
        }
        self.since_improvement += 1;
        if self.since_improvement >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.best.map(|(acc, _)| acc)
    }
}
