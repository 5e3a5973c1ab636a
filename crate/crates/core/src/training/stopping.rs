/// Patience-based stopping on a metric that should increase. The best epoch
/// is the strict maximum; only gains above `min_delta` reset patience.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    best_epoch: usize,
    anchor: Option<f64>,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    /// New maximum; the caller should keep this epoch's weights.
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopper { patience, min_delta, best: None, best_epoch: 0, anchor: None, stale: 0 }
    }

    /// Records the metric for a (1-based) epoch.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> Decision {
        let improved = self.best.is_none_or(|b| metric > b);
        if improved {
            self.best = Some(metric);
            self.best_epoch = epoch;
        }
        if self.anchor.is_none_or(|a| metric > a + self.min_delta) {
            self.anchor = Some(metric);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Decision { improved, stop: self.stale >= self.patience }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}
