use rand::seq::SliceRandom;
use tch::{Kind, Tensor};

use super::metrics::accuracy;
use super::model::Classifier;
use super::schedule::{fit, EpochMetrics, EpochRunner};
use super::{Augment, ClassifierTrainConfig, DatasetVariant, ExperimentResult};
use crate::data::{prepare_classifier_batch, DatasetIndex, ImageRecord, Split};
use crate::error::{Error, Result};
use crate::models::Mode;
use crate::optim::{Adam, AdamConfig};
use crate::rng;

/// Labeled records of one split.
fn labeled(index: &DatasetIndex, split: Split) -> Result<(Vec<&ImageRecord>, Vec<i64>)> {
    let records = index.records_in(split);
    if records.is_empty() {
        return Err(Error::EmptySplit(format!("{} split has no records", split.as_str())));
    }
    let labels = records
        .iter()
        .map(|r| {
            index
                .class_set()
                .index_of(&r.label)
                .map(|i| i as i64)
                .ok_or_else(|| Error::UnknownClass(r.label.clone()))
        })
        .collect::<Result<_>>()?;
    Ok((records, labels))
}

/// Backbone features of `records` without augmentation, in order.
pub fn extract_features(
    model: &Classifier,
    records: &[&ImageRecord],
    image_size: i64,
    batch_size: usize,
) -> Result<Tensor> {
    let mut rng = rng::stream(0, &["unused"]);
    let mut parts = Vec::new();
    for chunk in records.chunks(batch_size.max(1)) {
        let batch = prepare_classifier_batch(chunk, None, &mut rng, None, image_size)?;
        parts.push(model.features(&batch)?);
    }
    Ok(Tensor::cat(&parts, 0))
}

struct Runner<'a> {
    model: &'a Classifier,
    config: &'a ClassifierTrainConfig,
    opt: Adam,
    train_records: Vec<&'a ImageRecord>,
    train_labels: Vec<i64>,
    train_features: Option<Tensor>,
    val_features: Tensor,
    val_labels: Tensor,
    val_label_vec: Vec<i64>,
    best: Option<Vec<(String, Tensor)>>,
}

impl Runner<'_> {
    fn batch_features(&self, idx: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> Result<Tensor> {
        match &self.train_features {
            Some(all) => {
                let i: Vec<i64> = idx.iter().map(|&i| i as i64).collect();
                Ok(all.index_select(0, &Tensor::from_slice(&i)))
            }
            None => {
                let records: Vec<&ImageRecord> = idx.iter().map(|&i| self.train_records[i]).collect();
                let batch = prepare_classifier_batch(
                    &records,
                    None,
                    rng,
                    Some(&self.config.augment_policy),
                    self.config.image_size,
                )?;
                self.model.features(&batch)
            }
        }
    }
}

impl EpochRunner for Runner<'_> {
    fn run_epoch(&mut self, epoch: usize, lr: f64) -> Result<EpochMetrics> {
        self.opt.set_lr(lr);
        let mut rng = rng::stream(self.config.seed, &["classifier-epoch", &epoch.to_string()]);
        let mut order: Vec<usize> = (0..self.train_records.len()).collect();
        order.shuffle(&mut rng);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let feats = self.batch_features(chunk, &mut rng)?;
            let labels: Vec<i64> = chunk.iter().map(|&i| self.train_labels[i]).collect();
            let target = Tensor::from_slice(&labels);
            self.opt.zero_grad();
            let log_probs = self.model.log_probs_from_features(&feats, Mode::Train(&mut rng))?;
            let loss = log_probs.nll_loss(&target);
            loss.backward();
            self.opt.step();
            let l = loss.double_value(&[]);
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("classifier loss at epoch {epoch}")));
            }
            loss_sum += l * chunk.len() as f64;
            let preds = Vec::<i64>::try_from(&log_probs.argmax(-1, false))?;
            correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
        }
        let n = self.train_records.len() as f64;

        let (val_loss, preds) = tch::no_grad(|| -> Result<(f64, Vec<i64>)> {
            let log_probs = self.model.log_probs_from_features(&self.val_features, Mode::Eval)?;
            let loss = log_probs.nll_loss(&self.val_labels).double_value(&[]);
            Ok((loss, Vec::<i64>::try_from(&log_probs.argmax(-1, false))?))
        })?;
        Ok(EpochMetrics {
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy: accuracy(&preds, &self.val_label_vec)?,
        })
    }

    fn mark_best(&mut self) -> Result<()> {
        self.best = Some(
            self.model
                .head()
                .named_tensors()
                .into_iter()
                .map(|(n, t, _)| (n, t.detach().copy()))
                .collect(),
        );
        Ok(())
    }

    fn restore_best(&mut self) -> Result<()> {
        if let Some(best) = &self.best {
            for (name, t) in best {
                self.model.head().copy_named(name, t)?;
            }
        }
        Ok(())
    }
}

/// Fits the classifier head on the train split of `index`, validating on
/// its val split, and returns the result with the best-epoch weights
/// restored.
pub fn train_classifier(
    index: &DatasetIndex,
    config: &ClassifierTrainConfig,
    variant: DatasetVariant,
) -> Result<(ExperimentResult, Classifier)> {
    config.validate()?;
    if !index.is_split() {
        return Err(Error::InvalidArgument("the index must be split before training".into()));
    }
    let (train_records, train_labels) = labeled(index, Split::Train)?;
    let (val_records, val_labels) = labeled(index, Split::Val)?;
    let model = Classifier::build(
        config.backbone,
        index.class_set().len(),
        &config.weights,
        config.hidden_units,
        config.dropout,
        config.seed,
    )?;
    let fb = config.feature_batch_size;
    let val_features = extract_features(&model, &val_records, config.image_size, fb)?;
    let train_features = match config.augment {
        Augment::None => Some(extract_features(&model, &train_records, config.image_size, fb)?),
        Augment::Geometric => None,
    };
    let opt = Adam::new(
        model.head().parameters(),
        AdamConfig::new(config.initial_lr, 0.9, 0.999),
    );
    let mut runner = Runner {
        model: &model,
        config,
        opt,
        train_records,
        train_labels,
        train_features,
        val_features,
        val_labels: Tensor::from_slice(&val_labels).to_kind(Kind::Int64),
        val_label_vec: val_labels,
        best: None,
    };
    let outcome = fit(
        &mut runner,
        config.max_epochs,
        config.initial_lr,
        config.patience,
        config.plateau,
    )?;
    drop(runner);
    let result = ExperimentResult::from_outcome(config, variant, model.backbone().is_pretrained(), outcome);
    Ok((result, model))
}
