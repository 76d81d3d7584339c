//! Per-class adversarial training, checkpointing and image export.

mod config;
mod generate;
mod history;
mod session;

use std::fs;
use std::path::{Path, PathBuf};

use tch::Tensor;

use crate::data::{decode_unit_batch, resize, DatasetIndex, ImageRecord, Source, Split};
use crate::error::{Error, Result};
use crate::models::Checkpoint;

pub use config::{GanTrainConfig, RECOMMENDED_MAX_BATCH};
pub use generate::{
    generate_images, generate_tensor, load_generator, sample_grid, sample_latents, GeneratedProvenance,
};
pub use history::{EpochRecord, TrainHistory, UpdateRun, UpdateTarget};
pub use session::GanSession;

pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Real images of `class` the GAN learns from: the train split when the
/// index is split, every record otherwise.
pub fn gan_training_records<'a>(index: &'a DatasetIndex, class: &str) -> Vec<&'a ImageRecord> {
    let split = index.is_split();
    index
        .records()
        .iter()
        .enumerate()
        .filter(|(i, r)| {
            r.label == class && r.source == Source::Real && (!split || index.split_of(*i) == Some(Split::Train))
        })
        .map(|(_, r)| r)
        .collect()
}

/// Decodes records into a unit-signed `(N, 3, 64, 64)` tensor.
pub fn load_gan_images(records: &[&ImageRecord], class: &str) -> Result<Tensor> {
    if records.is_empty() {
        return Err(Error::EmptyClass(class.to_string()));
    }
    let batch = decode_unit_batch(records)?;
    let size = batch.size();
    Ok(if size[2] != 64 || size[3] != 64 {
        resize(&batch, 64).clamp(-1.0, 1.0)
    } else {
        batch
    })
}

/// Trains one GAN on one class of `index` for `config.epochs` epochs.
///
/// With an output directory, checkpoints are written every
/// `checkpoint_every` epochs (plus `final.ckpt`), each with a sample-grid
/// snapshot, and the history is exported as `history.csv`.
pub fn train_gan(
    index: &DatasetIndex,
    config: &GanTrainConfig,
    out: Option<&Path>,
) -> Result<(Checkpoint, TrainHistory)> {
    config.validate()?;
    let records = gan_training_records(index, &config.class_name);
    let images = load_gan_images(&records, &config.class_name)?;
    let mut session = GanSession::new(images, config.clone())?;
    run_session(&mut session, out)
}

/// Continues a run from a checkpoint up to `epochs` total epochs (or the
/// stored target).
pub fn resume_gan(
    ck: &Checkpoint,
    index: &DatasetIndex,
    epochs: Option<usize>,
    out: Option<&Path>,
) -> Result<(Checkpoint, TrainHistory)> {
    let class = ck.meta.class_name.clone();
    let records = gan_training_records(index, &class);
    let images = load_gan_images(&records, &class)?;
    let mut session = GanSession::from_checkpoint(ck, images, epochs)?;
    run_session(&mut session, out)
}

/// Drives `session` to its configured epoch count.
pub fn run_session(session: &mut GanSession, out: Option<&Path>) -> Result<(Checkpoint, TrainHistory)> {
    for w in session.config().warnings() {
        log::warn!("{w}");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    while !session.is_done() {
        let record = session.train_epoch()?.clone();
        log::info!(
            "{} {} epoch {}: g_loss {:.4} d_loss {:.4} ({:.1}s)",
            session.config().gan_kind,
            session.config().class_name,
            record.epoch,
            record.g_loss,
            record.d_loss,
            record.seconds
        );
        let epoch = session.epoch();
        let every = session.config().checkpoint_every;
        if let Some(dir) = out {
            if every > 0 && epoch.is_multiple_of(every) && !session.is_done() {
                save_with_snapshot(session, dir, &checkpoint_file_name(epoch))?;
            }
        }
    }
    let ck = match out {
        Some(dir) => {
            let ck = save_with_snapshot(session, dir, FINAL_CHECKPOINT)?;
            session.history().write_csv(&dir.join("history.csv"))?;
            ck
        }
        None => session.checkpoint()?,
    };
    Ok((ck, session.history().clone()))
}

fn save_with_snapshot(session: &mut GanSession, dir: &Path, name: &str) -> Result<Checkpoint> {
    let epoch = session.epoch();
    let mut snapshot: Option<PathBuf> = None;
    if epoch > 0 {
        let (rows, cols) = session.config().snapshot_grid;
        if rows > 0 && cols > 0 {
            let snaps = dir.join("snapshots");
            fs::create_dir_all(&snaps).map_err(|e| Error::io(&snaps, e))?;
            let path = snaps.join(format!("epoch_{epoch:04}.png"));
            let ck = session.checkpoint()?;
            let grid = sample_grid(&[ck], rows, cols, session.config().seed)?;
            grid.save(&path)
                .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
            snapshot = Some(path);
        }
    }
    if let Some(last) = session.history_mut().records.last_mut() {
        if snapshot.is_some() {
            last.snapshot = snapshot;
        }
    }
    let ck = session.checkpoint()?;
    ck.save(&dir.join(name))?;
    Ok(ck)
}
