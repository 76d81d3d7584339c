use std::path::Path;

use image::RgbImage;
use rand::Rng;
use rayon::prelude::*;
use tch::{Kind, Tensor};

use super::augment::{geometric_augment, AugmentPolicy};
use super::normalize::to_unit_signed;
use super::record::ImageRecord;
use crate::error::{Error, Result};

/// Input resolution expected by the pretrained backbones.
pub const CLASSIFIER_IMAGE_SIZE: i64 = 224;

/// ImageNet channel statistics used by the torchvision backbones.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RangeTag {
    /// Every element lies in [-1, 1].
    UnitSigned,
    /// Per-channel `(x - mean) / std` with ImageNet statistics.
    BackboneNormalized,
}

/// Rank-4 `(N, 3, H, W)` float tensor plus optional labels.
#[derive(Debug)]
pub struct ImageBatch {
    pub data: Tensor,
    pub range: RangeTag,
    pub labels: Option<Vec<i64>>,
}

impl ImageBatch {
    pub fn new(data: Tensor, range: RangeTag, labels: Option<Vec<i64>>) -> Result<Self> {
        let size = data.size();
        if size.len() != 4 || size[1] != 3 {
            return Err(Error::Shape(format!(
                "image batch must be (N, 3, H, W), got {size:?}"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() as i64 != size[0] {
                return Err(Error::Shape(format!(
                    "{} labels for a batch of {}",
                    labels.len(),
                    size[0]
                )));
            }
        }
        if range == RangeTag::UnitSigned && data.numel() > 0 {
            let lo = data.min().double_value(&[]);
            let hi = data.max().double_value(&[]);
            if lo < -1.0 || hi > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "unit-signed batch has values in [{lo}, {hi}]"
                )));
            }
        }
        Ok(ImageBatch {
            data,
            range,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.data.size()[0] as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(H, W)` of the images.
    pub fn image_size(&self) -> (i64, i64) {
        let s = self.data.size();
        (s[2], s[3])
    }
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Bilinear resize of `(N, C, H, W)` images.
pub fn resize(images: &Tensor, size: i64) -> Tensor {
    let s = images.size();
    if s[2] == size && s[3] == size {
        return images.shallow_clone();
    }
    images.upsample_bilinear2d([size, size], false, None, None)
}

/// Converts a unit-signed batch to ImageNet normalization.
pub fn to_backbone_range(unit_signed: &Tensor) -> Tensor {
    let mean = Tensor::from_slice(&IMAGENET_MEAN)
        .to_kind(Kind::Float)
        .view([1, 3, 1, 1]);
    let std = Tensor::from_slice(&IMAGENET_STD)
        .to_kind(Kind::Float)
        .view([1, 3, 1, 1]);
    ((unit_signed + 1.0) * 0.5 - mean) / std
}

/// Decodes records into a unit-signed batch at their native resolution
/// (images that differ from the first one are resized to match it).
pub fn decode_unit_batch(records: &[&ImageRecord]) -> Result<Tensor> {
    let images = records
        .par_iter()
        .map(|r| load_rgb(&r.path))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = images.first() else {
        return Err(Error::EmptySplit("no records to batch".into()));
    };
    let (w0, h0) = first.dimensions();
    let tensors: Vec<Tensor> = images
        .iter()
        .map(|img| {
            let t = to_unit_signed(img);
            if img.dimensions() == (w0, h0) {
                t
            } else {
                t.unsqueeze(0)
                    .upsample_bilinear2d([h0 as i64, w0 as i64], false, None, None)
                    .squeeze_dim(0)
            }
        })
        .collect();
    Ok(Tensor::stack(&tensors, 0))
}

/// Builds a backbone-normalized classifier batch. When `augment` is given
/// the geometric transform runs first, at native resolution, then images
/// are resized to `image_size` with bilinear interpolation.
pub fn prepare_classifier_batch<R: Rng + ?Sized>(
    records: &[&ImageRecord],
    labels: Option<Vec<i64>>,
    rng: &mut R,
    augment: Option<&AugmentPolicy>,
    image_size: i64,
) -> Result<ImageBatch> {
    let raw = decode_unit_batch(records)?;
    let mut batch = ImageBatch::new(raw, RangeTag::UnitSigned, labels)?;
    if let Some(policy) = augment {
        batch = geometric_augment(&batch, rng, policy)?;
    }
    let data = to_backbone_range(&resize(&batch.data, image_size));
    ImageBatch::new(data, RangeTag::BackboneNormalized, batch.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::{ImageFormat, Source};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn write_images(dir: &Path, n: usize) -> Vec<ImageRecord> {
        (0..n)
            .map(|i| {
                let path = dir.join(format!("Forest_{i}.jpg"));
                let img = RgbImage::from_fn(64, 64, |x, y| {
                    image::Rgb([(x * 4) as u8, (y * 4) as u8, (i * 40) as u8])
                });
                img.save(&path).unwrap();
                ImageRecord {
                    path,
                    label: "Forest".into(),
                    source: Source::Real,
                    format: ImageFormat::Jpg,
                }
            })
            .collect()
    }

    #[test]
    fn classifier_batch_shape() {
        let dir = tempfile::tempdir().unwrap();
        let records = write_images(dir.path(), 16);
        let refs: Vec<&ImageRecord> = records.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = prepare_classifier_batch(&refs, None, &mut rng, None, 224).unwrap();
        assert_eq!(batch.data.size(), vec![16, 3, 224, 224]);
        assert_eq!(batch.range, RangeTag::BackboneNormalized);
    }

    #[test]
    fn single_record_without_augmentation_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let records = write_images(dir.path(), 1);
        let refs: Vec<&ImageRecord> = records.iter().collect();
        let a = prepare_classifier_batch(&refs, None, &mut ChaCha8Rng::seed_from_u64(1), None, 224)
            .unwrap();
        let b = prepare_classifier_batch(&refs, None, &mut ChaCha8Rng::seed_from_u64(2), None, 224)
            .unwrap();
        assert!(a.data.equal(&b.data));
    }

    #[test]
    fn augmented_batches_repeat_under_a_seed() {
        let dir = tempfile::tempdir().unwrap();
        let records = write_images(dir.path(), 4);
        let refs: Vec<&ImageRecord> = records.iter().collect();
        let policy = AugmentPolicy::default();
        let a = prepare_classifier_batch(
            &refs,
            Some(vec![0; 4]),
            &mut ChaCha8Rng::seed_from_u64(7),
            Some(&policy),
            96,
        )
        .unwrap();
        let b = prepare_classifier_batch(
            &refs,
            Some(vec![0; 4]),
            &mut ChaCha8Rng::seed_from_u64(7),
            Some(&policy),
            96,
        )
        .unwrap();
        assert!(a.data.equal(&b.data));
        assert_eq!(a.labels, Some(vec![0; 4]));
    }

    #[test]
    fn decode_failure_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("Forest_0.jpg");
        std::fs::write(&path, b"not a jpeg").unwrap();
        let record = ImageRecord {
            path: path.clone(),
            label: "Forest".into(),
            source: Source::Real,
            format: ImageFormat::Jpg,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match prepare_classifier_batch(&[&record], None, &mut rng, None, 224) {
            Err(Error::Decode { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unit_signed_range_is_enforced() {
        let data = Tensor::ones([1, 3, 4, 4], (Kind::Float, tch::Device::Cpu)) * 1.5;
        assert!(ImageBatch::new(data, RangeTag::UnitSigned, None).is_err());
    }
}
