//! Early stopping, reduce-on-plateau and the epoch loop that drives them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stops after `patience` consecutive epochs without a strict improvement
/// of the monitored metric (higher is better; ties do not count).
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    wait: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        Ok(EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            wait: 0,
        })
    }

    /// Feeds the metric of 1-based `epoch`.
    pub fn update(&mut self, epoch: usize, metric: f64) -> StopDecision {
        let improved = self.best.is_none_or(|b| metric > b);
        if improved {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        StopDecision {
            improved,
            stop: self.wait >= self.patience,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    /// Non-improving epochs tolerated before the rate is cut.
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.1,
            patience: 1,
            min_lr: 1e-6,
        }
    }
}

/// Multiplies the learning rate by `factor` once more than `patience`
/// consecutive epochs fail to strictly improve the metric.
#[derive(Clone, Debug)]
pub struct ReduceLrOnPlateau {
    config: PlateauConfig,
    lr: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl ReduceLrOnPlateau {
    pub fn new(initial_lr: f64, config: PlateauConfig) -> Result<Self> {
        if !(config.factor > 0.0 && config.factor < 1.0) {
            return Err(Error::Config(format!("plateau factor must lie in (0, 1), got {}", config.factor)));
        }
        if !(initial_lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {initial_lr}")));
        }
        Ok(ReduceLrOnPlateau {
            config,
            lr: initial_lr,
            best: None,
            bad_epochs: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Returns the learning rate to use for the next epoch.
    pub fn step(&mut self, metric: f64) -> f64 {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.config.patience {
            self.lr = (self.lr * self.config.factor).max(self.config.min_lr);
            self.bad_epochs = 0;
        }
        self.lr
    }
}

/// Metrics of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// What the fit loop needs from a model.
pub trait EpochRunner {
    /// One pass over the training data at learning rate `lr`, then a
    /// validation pass. `epoch` is 1-based.
    fn run_epoch(&mut self, epoch: usize, lr: f64) -> Result<EpochMetrics>;
    /// Remember the current weights as the best so far.
    fn mark_best(&mut self) -> Result<()>;
    /// Reload the weights remembered by `mark_best`.
    fn restore_best(&mut self) -> Result<()>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
    pub curves: Vec<EpochMetrics>,
    /// Learning rate used in each epoch.
    pub learning_rates: Vec<f64>,
}

pub fn fit(
    runner: &mut dyn EpochRunner,
    max_epochs: usize,
    initial_lr: f64,
    patience: usize,
    plateau: PlateauConfig,
) -> Result<FitOutcome> {
    if max_epochs == 0 {
        return Err(Error::Config("max_epochs must be >= 1".into()));
    }
    let mut stopper = EarlyStopping::new(patience)?;
    let mut scheduler = ReduceLrOnPlateau::new(initial_lr, plateau)?;
    let mut curves = Vec::new();
    let mut learning_rates = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=max_epochs {
        let lr = scheduler.lr();
        let metrics = runner.run_epoch(epoch, lr)?;
        learning_rates.push(lr);
        curves.push(metrics);
        let decision = stopper.update(epoch, metrics.val_accuracy);
        if decision.improved {
            runner.mark_best()?;
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
        scheduler.step(metrics.val_accuracy);
    }
    runner.restore_best()?;
    Ok(FitOutcome {
        epochs_run: curves.len(),
        best_epoch: stopper.best_epoch(),
        best_val_accuracy: stopper.best().unwrap_or(0.0),
        stopped_early,
        curves,
        learning_rates,
    })
}
