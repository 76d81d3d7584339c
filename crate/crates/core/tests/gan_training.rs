use std::fs;
use std::path::Path;

use satgan_core::data::{scan_dataset, split, synth, ClassSet, DatasetIndex, PROVENANCE_FILE};
use satgan_core::models::{init_weights, Checkpoint, Network};
use satgan_core::trainer::{
    gan_training_records, generate_images, load_gan_images, resume_gan, sample_grid, train_gan,
    GanSession, GanTrainConfig, GeneratedProvenance, UpdateTarget,
};
use satgan_core::{rng, Error, GanKind};

fn corpus(root: &Path, per_class: usize) -> DatasetIndex {
    synth::synthesize_corpus(root, &["Forest", "River"], per_class, 11).unwrap();
    let index = scan_dataset(root, &ClassSet::new(&["Forest", "River"]).unwrap()).unwrap();
    split(&index, 0.75, 3).unwrap()
}

fn quick(kind: GanKind, epochs: usize) -> GanTrainConfig {
    GanTrainConfig {
        epochs,
        batch_size: 8,
        seed: 5,
        checkpoint_every: 0,
        ..GanTrainConfig::new(kind, "Forest")
    }
}

fn generator_equal(a: &Checkpoint, b: &Checkpoint) -> bool {
    a.tensors
        .iter()
        .zip(&b.tensors)
        .filter(|(x, _)| x.name.starts_with("generator/"))
        .all(|(x, y)| x == y)
}

#[test]
fn wgan_runs_n_critic_steps_per_generator_step() {
    let dir = tempfile::tempdir().unwrap();
    let index = corpus(dir.path(), 32);
    // 24 train images / batch 8 = 3 critic steps per epoch; 5 epochs = 15.
    let (ck, history) = train_gan(&index, &quick(GanKind::WganGp, 5), None).unwrap();
    assert_eq!(history.len(), 5);
    assert!(history.all_finite());
    let gaps = history.adversary_steps_per_generator_step();
    assert_eq!(gaps, vec![5, 5, 5]);
    let total: usize = history.records.iter().map(|r| r.adversary_updates).sum();
    assert_eq!(total, 15);
    // Epoch 1 has no generator update yet but still reports a finite loss.
    assert_eq!(history.records[0].generator_updates, 0);
    assert_eq!(ck.meta.epoch, 5);
}

#[test]
fn dcgan_alternates_and_stays_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let index = corpus(dir.path(), 32);
    let out = dir.path().join("run");
    let config = GanTrainConfig {
        checkpoint_every: 1,
        snapshot_grid: (1, 2),
        ..quick(GanKind::Dcgan, 2)
    };
    let (ck, history) = train_gan(&index, &config, Some(&out)).unwrap();
    assert!(history.all_finite());
    assert_eq!(history.adversary_steps_per_generator_step(), vec![1; 6]);
    assert!(out.join("epoch_0001.ckpt").exists());
    assert!(out.join("final.ckpt").exists());
    assert!(out.join("snapshots/epoch_0002.png").exists());
    assert_eq!(fs::read_to_string(out.join("history.csv")).unwrap().lines().count(), 3);

    let samples = satgan_core::trainer::generate_tensor(&ck, 20, 1).unwrap();
    assert_eq!(samples.size(), vec![20, 3, 64, 64]);
    assert!(samples.abs().max().double_value(&[]) <= 1.0);
    assert!(history.schedule().iter().all(|r| r.count == 1
        && matches!(r.target, UpdateTarget::Adversary | UpdateTarget::Generator)));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let index = corpus(dir.path(), 24);
    for kind in GanKind::ALL {
        let (straight, _) = train_gan(&index, &quick(kind, 3), None).unwrap();
        let (partial, _) = train_gan(&index, &quick(kind, 1), None).unwrap();
        let bytes = partial.to_bytes().unwrap();
        let reloaded = Checkpoint::from_bytes(&bytes).unwrap();
        let (resumed, history) = resume_gan(&reloaded, &index, Some(3), None).unwrap();
        assert_eq!(history.len(), 3);
        assert!(generator_equal(&straight, &resumed), "{kind} resume diverged");
        assert_eq!(straight.tensors, resumed.tensors, "{kind} optimizer state diverged");
    }
}

#[test]
fn zero_epochs_returns_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let index = corpus(dir.path(), 16);
    let (ck, history) = train_gan(&index, &quick(GanKind::Dcgan, 0), None).unwrap();
    assert!(history.is_empty());
    let config = quick(GanKind::Dcgan, 0);
    let fresh = Network::new(&GanKind::Dcgan.generator_spec(100)).unwrap();
    init_weights(&fresh, &mut rng::stream(config.seed, &["init", "generator"])).unwrap();
    let restored = ck
        .restore_network("generator", &GanKind::Dcgan.generator_spec(100))
        .unwrap();
    for ((_, a, _), (_, b, _)) in fresh.named_tensors().into_iter().zip(restored.named_tensors()) {
        assert!(a.equal(b));
    }
}

#[test]
fn empty_class_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let index = corpus(dir.path(), 8);
    let config = GanTrainConfig {
        class_name: "SeaLake".into(),
        ..quick(GanKind::Dcgan, 1)
    };
    assert!(matches!(train_gan(&index, &config, None), Err(Error::EmptyClass(_))));
}

#[test]
fn generation_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let index = corpus(dir.path(), 16);
    let records = gan_training_records(&index, "Forest");
    let images = load_gan_images(&records, "Forest").unwrap();
    let session = GanSession::new(images, quick(GanKind::WganGp, 0)).unwrap();
    let ck = session.checkpoint().unwrap();

    let a = generate_images(&ck, 5, 9, &dir.path().join("a")).unwrap();
    let b = generate_images(&ck, 5, 9, &dir.path().join("b")).unwrap();
    assert_eq!(a.len(), 5);
    assert!(a[4].ends_with("Forest/Forest_wgan-gp_00004.png"));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        let img = image::open(x).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
        assert_eq!(img.color(), image::ColorType::Rgb8);
    }
    let provenance: GeneratedProvenance =
        serde_json::from_slice(&fs::read(dir.path().join("a/Forest").join(PROVENANCE_FILE)).unwrap()).unwrap();
    assert_eq!((provenance.checkpoint_epoch, provenance.seed, provenance.count), (ck.meta.epoch, 9, 5));
    assert!(generate_images(&ck, 0, 9, &dir.path().join("c")).unwrap().is_empty());

    let g1 = sample_grid(std::slice::from_ref(&ck), 2, 3, 4).unwrap();
    let g2 = sample_grid(std::slice::from_ref(&ck), 2, 3, 4).unwrap();
    assert_eq!((g1.width(), g1.height()), (192, 128));
    assert_eq!(g1, g2);
    assert!(sample_grid(&[ck], 0, 3, 4).is_err());
}
