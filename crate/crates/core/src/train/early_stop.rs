/// Patience-based early stopping on a metric to be minimized, keeping a
/// snapshot of the best state.
#[derive(Debug, Clone)]
pub struct EarlyStopping<S> {
    patience: usize,
    best: Option<(usize, f64)>,
    snapshot: Option<S>,
    since_improvement: usize,
}

pub const DEFAULT_PATIENCE: usize = 100;

impl<S> EarlyStopping<S> {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, snapshot: None, since_improvement: 0 }
    }

    /// Record the metric of `epoch`. The snapshot is taken iff the metric
    /// strictly improves on the best so far. Returns whether it improved.
    pub fn observe(&mut self, epoch: usize, metric: f64, snapshot: impl FnOnce() -> S) -> bool {
        let improved = metric.is_finite() && self.best.is_none_or(|(_, b)| metric < b);
        if improved {
            self.best = Some((epoch, metric));
            self.snapshot = Some(snapshot());
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.since_improvement >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.best.map(|(_, m)| m)
    }

    pub fn take_snapshot(&mut self) -> Option<S> {
        self.snapshot.take()
    }
}
