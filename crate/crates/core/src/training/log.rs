use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    #[default]
    MaxEpochs,
    MaxIterations,
    EarlyStop,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based; pretraining counts single-table passes.
    pub epoch: usize,
    pub dataset: String,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Validation Overall score at CTGAN snapshots.
    pub val_score: Option<f64>,
    /// Hash of the shared (non-head) parameters after the epoch.
    pub body_hash: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose weights were returned, if selection happened.
    pub best_epoch: Option<usize>,
    pub stop: StopReason,
    /// Epochs at which CTGAN snapshots were scored.
    pub checkpoints: Vec<usize>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl TrainLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.val_loss).min_by(f64::total_cmp)
    }

    pub fn val_loss_at(&self, epoch: usize) -> Option<f64> {
        self.records.iter().find(|r| r.epoch == epoch).and_then(|r| r.val_loss)
    }

    /// `epoch,train_loss,val_loss`, empty cells where no value exists.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, opt(r.val_loss)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    /// Strictly lowest loss so far: the weights to keep.
    pub new_best: bool,
    pub stop: bool,
}

/// Patience counter: it resets when the loss beats the last reference by
/// at least `min_delta`. The best weights follow the plain minimum, so a
/// sub-threshold improvement still updates them but does not buy time.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    pub min_delta: f64,
    reference: f64,
    best: f64,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self { patience, min_delta, reference: f64::INFINITY, best: f64::INFINITY, stale: 0 }
    }

    pub fn observe(&mut self, _epoch: usize, loss: f64) -> Observation {
        let new_best = loss < self.best;
        if new_best {
            self.best = loss;
        }
        if loss < self.reference - self.min_delta {
            self.reference = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation { new_best, stop: self.stale >= self.patience }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_trace() {
        let mut s = EarlyStopper::new(2, 1e-4);
        let losses = [1.0, 0.9, 0.95, 0.96, 0.97];
        let mut best = 0;
        let mut stopped = None;
        for (i, &l) in losses.iter().enumerate() {
            let o = s.observe(i + 1, l);
            if o.new_best {
                best = i + 1;
            }
            if o.stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(4));
        assert_eq!(best, 2);
    }

    #[test]
    fn small_gains_do_not_reset_patience() {
        let mut s = EarlyStopper::new(2, 0.1);
        assert!(!s.observe(1, 1.0).stop);
        let o = s.observe(2, 0.95);
        assert!(o.new_best && !o.stop);
        assert!(s.observe(3, 0.94).stop);
    }

    #[test]
    fn csv_layout() {
        let mut log = TrainLog::new();
        log.records.push(EpochRecord { epoch: 1, dataset: "t".into(), train_loss: 2.5, val_loss: None, val_score: None, body_hash: 0 });
        log.records.push(EpochRecord { epoch: 2, dataset: "t".into(), train_loss: 2.0, val_loss: Some(1.5), val_score: None, body_hash: 0 });
        assert_eq!(log.to_csv(), "epoch,train_loss,val_loss\n1,2.5,\n2,2,1.5\n");
        assert_eq!(log.best_val_loss(), Some(1.5));
    }
}
