use rand::Rng;
use satgan_core::classifier::{
    accuracy, evaluate, fit, train_classifier, Augment, BackboneKind, BackboneWeights,
    ClassifierTrainConfig, DatasetVariant, EpochMetrics, EpochRunner, PlateauConfig, Predictor,
};
use satgan_core::data::{scan_dataset, split, synth, ClassSet, ImageBatch, RangeTag};
use satgan_core::{rng, Result};
use tch::{Kind, Tensor};

/// Replays a fixed validation-accuracy trace.
struct Scripted {
    trace: Vec<f64>,
    marked: Vec<usize>,
    restored: bool,
    epoch: usize,
}

impl Scripted {
    fn new(trace: &[f64]) -> Self {
        Scripted {
            trace: trace.to_vec(),
            marked: vec![],
            restored: false,
            epoch: 0,
        }
    }
}

impl EpochRunner for Scripted {
    fn run_epoch(&mut self, epoch: usize, _lr: f64) -> Result<EpochMetrics> {
        self.epoch = epoch;
        let acc = self.trace[epoch - 1];
        Ok(EpochMetrics {
            train_loss: 1.0 - acc,
            train_accuracy: acc,
            val_loss: 1.0 - acc,
            val_accuracy: acc,
        })
    }
    fn mark_best(&mut self) -> Result<()> {
        self.marked.push(self.epoch);
        Ok(())
    }
    fn restore_best(&mut self) -> Result<()> {
        self.restored = true;
        Ok(())
    }
}

#[test]
fn stopping_rule_traces() {
    let mut r = Scripted::new(&[0.90, 0.91, 0.905, 0.906, 0.908, 0.99, 0.99]);
    let out = fit(&mut r, 7, 1e-4, 3, PlateauConfig::default()).unwrap();
    assert_eq!((out.epochs_run, out.best_epoch, out.stopped_early), (5, 2, true));
    assert_eq!(out.best_val_accuracy, 0.91);
    assert_eq!(r.marked, vec![1, 2]);
    assert!(r.restored);
    assert_eq!(out.epochs_run - out.best_epoch, 3);

    let mut flat = Scripted::new(&[0.9, 0.9, 0.9, 0.9, 0.9]);
    let out = fit(&mut flat, 5, 1e-4, 3, PlateauConfig::default()).unwrap();
    assert_eq!((out.epochs_run, out.best_epoch, out.stopped_early), (4, 1, true));

    let mut rising = Scripted::new(&[0.1, 0.2, 0.3, 0.4]);
    let out = fit(&mut rising, 4, 1e-4, 3, PlateauConfig::default()).unwrap();
    assert_eq!((out.epochs_run, out.stopped_early), (4, false));
}

#[test]
fn learning_rate_never_increases() {
    let mut r = Scripted::new(&[0.5, 0.4, 0.45, 0.6, 0.55, 0.58, 0.59, 0.7, 0.69, 0.68]);
    let out = fit(&mut r, 10, 1e-3, 10, PlateauConfig::default()).unwrap();
    assert!(out.learning_rates.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.learning_rates.last().unwrap() < &1e-3);
}

struct Uniform(u64);

impl Predictor for Uniform {
    fn predict(&self, batch: &ImageBatch) -> Result<Vec<i64>> {
        let mut r = rng::stream(self.0, &["uniform"]);
        Ok((0..batch.len()).map(|_| r.random_range(0..10)).collect())
    }
}

struct Oracle;

impl Predictor for Oracle {
    fn predict(&self, batch: &ImageBatch) -> Result<Vec<i64>> {
        Ok(batch.labels.clone().unwrap())
    }
}

#[test]
fn random_and_oracle_predictors() {
    let labels: Vec<i64> = (0..1000).map(|i| i % 10).collect();
    let data = Tensor::zeros([1000, 3, 1, 1], (Kind::Float, tch::Device::Cpu));
    let batch = ImageBatch::new(data, RangeTag::UnitSigned, Some(labels.clone())).unwrap();
    for seed in 0..20 {
        let acc = evaluate(&Uniform(seed), std::slice::from_ref(&batch)).unwrap();
        assert!((0.07..=0.13).contains(&acc), "seed {seed}: {acc}");
    }
    assert_eq!(evaluate(&Oracle, std::slice::from_ref(&batch)).unwrap(), 1.0);
    // Permutation invariance.
    let mut shuffled = labels.clone();
    shuffled.reverse();
    let preds: Vec<i64> = labels.iter().map(|l| (l + 1) % 10).collect();
    let rev_preds: Vec<i64> = preds.iter().rev().copied().collect();
    assert_eq!(accuracy(&preds, &labels).unwrap(), accuracy(&rev_preds, &shuffled).unwrap());
}

#[test]
fn end_to_end_fit_keeps_backbone_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let classes = ["Forest", "SeaLake", "Industrial"];
    synth::synthesize_corpus(dir.path(), &classes, 12, 2).unwrap();
    let index = split(&scan_dataset(dir.path(), &ClassSet::new(&classes).unwrap()).unwrap(), 0.75, 1).unwrap();

    for augment in Augment::ALL {
        let config = ClassifierTrainConfig {
            backbone: BackboneKind::WideResnet50,
            augment,
            max_epochs: 3,
            image_size: 32,
            batch_size: 8,
            seed: 3,
            initial_lr: 1e-3,
            weights: BackboneWeights::Untrained,
            ..Default::default()
        };
        let reference = satgan_core::classifier::build_classifier(
            BackboneKind::WideResnet50,
            3,
            &BackboneWeights::Untrained,
            3,
        )
        .unwrap();
        let (result, model) = train_classifier(&index, &config, DatasetVariant::Baseline).unwrap();
        assert!(result.epochs_run <= 3 && result.epochs_run >= 1);
        assert!((0.0..=1.0).contains(&result.best_val_accuracy));
        assert_eq!(result.curves.len(), result.epochs_run);
        assert!(!result.pretrained);
        for ((n, a), (_, b)) in reference
            .backbone()
            .named_tensors()
            .into_iter()
            .zip(model.backbone().named_tensors())
        {
            assert!(a.equal(&b), "{n} changed during training");
        }

        let (again, _) = train_classifier(&index, &config, DatasetVariant::Baseline).unwrap();
        assert_eq!(result, again, "{augment} run is not deterministic");
    }
}

#[test]
fn empty_val_split_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    synth::synthesize_corpus(dir.path(), &["Forest", "River"], 4, 2).unwrap();
    let index = scan_dataset(dir.path(), &ClassSet::new(&["Forest", "River"]).unwrap()).unwrap();
    let config = ClassifierTrainConfig {
        image_size: 32,
        ..Default::default()
    };
    // Unsplit index.
    assert!(train_classifier(&index, &config, DatasetVariant::Baseline).is_err());
}
