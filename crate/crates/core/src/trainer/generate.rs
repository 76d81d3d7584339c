use std::fs;
use std::path::{Path, PathBuf};

use image::{imageops, RgbImage};
use rand::RngCore;
use tch::Tensor;

use crate::data::{denormalize, generated_file_name, GAN_IMAGE_SIZE, PROVENANCE_FILE};
use crate::error::{Error, Result};
use crate::models::{normal_values, Checkpoint, GanKind, Mode, Network};
use crate::rng;

const GENERATE_CHUNK: usize = 64;

/// `n` standard-normal latent vectors shaped for `kind`'s generator.
pub fn sample_latents(kind: GanKind, n: i64, z_dim: i64, rng: &mut dyn RngCore) -> Tensor {
    let values = normal_values((n * z_dim) as usize, 0.0, 1.0, rng);
    Tensor::from_slice(&values).reshape(kind.latent_shape(n, z_dim))
}

/// Rebuilds the generator stored in `ck`, checking its fingerprint.
pub fn load_generator(ck: &Checkpoint) -> Result<Network> {
    let spec = ck.meta.gan_kind.generator_spec(ck.meta.z_dim);
    ck.restore_network("generator", &spec)
}

/// `count` unit-signed samples `(count, 3, 64, 64)`. Latents come from a
/// stream keyed by `seed`, class and GAN kind; the generator runs in
/// evaluation mode, so every sample is independent of batching.
pub fn generate_tensor(ck: &Checkpoint, count: usize, seed: u64) -> Result<Tensor> {
    let generator = load_generator(ck)?;
    let kind = ck.meta.gan_kind;
    let mut rng = rng::stream(seed, &["generate", &ck.meta.class_name, kind.as_str()]);
    let mut chunks = Vec::new();
    let mut left = count;
    while left > 0 {
        let n = left.min(GENERATE_CHUNK);
        let z = sample_latents(kind, n as i64, ck.meta.z_dim, &mut rng);
        chunks.push(tch::no_grad(|| generator.forward(&z, Mode::Eval))?);
        left -= n;
    }
    if chunks.is_empty() {
        return Ok(Tensor::zeros([0, 3, 64, 64], (tch::Kind::Float, tch::Device::Cpu)));
    }
    Ok(Tensor::cat(&chunks, 0))
}

/// Where an exported set came from; written next to the images.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GeneratedProvenance {
    pub gan_kind: GanKind,
    pub class_name: String,
    pub checkpoint_epoch: usize,
    pub seed: u64,
    pub count: usize,
}

/// Writes `count` PNGs to `<out_dir>/<class>/<class>_<gan>_NNNNN.png` plus
/// a `provenance.json`, and returns the image paths in index order.
pub fn generate_images(ck: &Checkpoint, count: usize, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let class = &ck.meta.class_name;
    let dir = out_dir.join(class);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let samples = generate_tensor(ck, count, seed)?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let img = denormalize(&samples.get(i as i64))?;
        let path = dir.join(generated_file_name(class, ck.meta.gan_kind, i));
        img.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
        paths.push(path);
    }
    let provenance = GeneratedProvenance {
        gan_kind: ck.meta.gan_kind,
        class_name: class.clone(),
        checkpoint_epoch: ck.meta.epoch,
        seed,
        count,
    };
    let path = dir.join(PROVENANCE_FILE);
    fs::write(&path, serde_json::to_string_pretty(&provenance)?).map_err(|e| Error::io(&path, e))?;
    Ok(paths)
}

/// A `rows x cols` montage of 64x64 samples without gaps. Tile `k` comes
/// from checkpoint `k % checkpoints.len()`, so ten per-class checkpoints
/// in a 2x5 grid give one sample per class.
pub fn sample_grid(checkpoints: &[Checkpoint], rows: usize, cols: usize, seed: u64) -> Result<RgbImage> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("grid needs at least one row and column".into()));
    }
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("grid needs at least one checkpoint".into()));
    }
    let generators = checkpoints
        .iter()
        .map(load_generator)
        .collect::<Result<Vec<_>>>()?;
    let tile = GAN_IMAGE_SIZE;
    let mut grid = RgbImage::new(cols as u32 * tile, rows as u32 * tile);
    for k in 0..rows * cols {
        let ck = &checkpoints[k % checkpoints.len()];
        let mut rng = rng::stream(seed, &["grid", &k.to_string()]);
        let z = sample_latents(ck.meta.gan_kind, 1, ck.meta.z_dim, &mut rng);
        let out = tch::no_grad(|| generators[k % checkpoints.len()].forward(&z, Mode::Eval))?;
        let img = denormalize(&out.get(0))?;
        let (r, c) = ((k / cols) as u32, (k % cols) as u32);
        imageops::replace(&mut grid, &img, (c * tile) as i64, (r * tile) as i64);
    }
    Ok(grid)
}
