use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateTarget {
    Generator,
    Adversary,
}

/// A run of consecutive optimizer updates on one network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRun {
    pub target: UpdateTarget,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean generator loss over the epoch (minimization form).
    pub g_loss: f64,
    /// Mean discriminator/critic loss over the epoch (minimization form).
    pub d_loss: f64,
    pub seconds: f64,
    pub generator_updates: usize,
    pub adversary_updates: usize,
    /// Update order within the epoch, run-length encoded.
    pub schedule: Vec<UpdateRun>,
    pub snapshot: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

pub(crate) fn push_update(schedule: &mut Vec<UpdateRun>, target: UpdateTarget) {
    match schedule.last_mut() {
        Some(run) if run.target == target => run.count += 1,
        _ => schedule.push(UpdateRun { target, count: 1 }),
    }
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The whole run's update order, with runs merged across epoch borders.
    pub fn schedule(&self) -> Vec<UpdateRun> {
        let mut out = Vec::new();
        for run in self.records.iter().flat_map(|r| &r.schedule) {
            for _ in 0..run.count {
                push_update(&mut out, run.target);
            }
        }
        out
    }

    /// Number of adversary updates preceding each generator update.
    pub fn adversary_steps_per_generator_step(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut pending = 0;
        for run in self.schedule() {
            match run.target {
                UpdateTarget::Adversary => pending += run.count,
                UpdateTarget::Generator => {
                    out.push(pending);
                    out.extend(std::iter::repeat_n(0, run.count - 1));
                    pending = 0;
                }
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.g_loss.is_finite() && r.d_loss.is_finite())
    }

    /// `epoch,g_loss,d_loss,seconds`, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,g_loss,d_loss,seconds\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{:.3}", r.epoch, r.g_loss, r.d_loss, r.seconds);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use UpdateTarget::*;

    fn record(epoch: usize, schedule: &[(UpdateTarget, usize)]) -> EpochRecord {
        EpochRecord {
            epoch,
            g_loss: 0.5,
            d_loss: -1.0,
            seconds: 0.25,
            generator_updates: 0,
            adversary_updates: 0,
            schedule: schedule
                .iter()
                .map(|&(target, count)| UpdateRun { target, count })
                .collect(),
            snapshot: None,
        }
    }

    #[test]
    fn schedule_merges_across_epochs() {
        let h = TrainHistory {
            records: vec![
                record(1, &[(Adversary, 5), (Generator, 1), (Adversary, 3)]),
                record(2, &[(Adversary, 2), (Generator, 1), (Adversary, 5), (Generator, 1)]),
            ],
        };
        assert_eq!(h.adversary_steps_per_generator_step(), vec![5, 5, 5]);
        let alternating = TrainHistory {
            records: vec![record(1, &[(Adversary, 1), (Generator, 1), (Adversary, 1), (Generator, 1)])],
        };
        assert_eq!(alternating.adversary_steps_per_generator_step(), vec![1, 1]);
    }

    #[test]
    fn csv_has_one_row_per_epoch() {
        let h = TrainHistory {
            records: vec![record(1, &[]), record(2, &[])],
        };
        let csv = h.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,g_loss,d_loss,seconds");
        assert_eq!(lines[1], "1,0.5,-1,0.250");
        assert_eq!(lines.len(), 3);
    }
}
