use rand::Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use super::batch::{ImageBatch, RangeTag};
use crate::error::{Error, Result};

/// Random flips and rotation applied independently to every image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub p_hflip: f64,
    pub p_vflip: f64,
    /// Rotation angle is drawn uniformly from `[-max, max]` degrees.
    pub max_rotation_deg: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            p_hflip: 0.5,
            p_vflip: 0.5,
            max_rotation_deg: 90.0,
        }
    }
}

impl AugmentPolicy {
    pub fn identity() -> Self {
        AugmentPolicy {
            p_hflip: 0.0,
            p_vflip: 0.0,
            max_rotation_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.p_hflip) || !prob_ok(self.p_vflip) {
            return Err(Error::InvalidArgument(format!(
                "flip probabilities must lie in [0, 1]: {self:?}"
            )));
        }
        if !(0.0..=180.0).contains(&self.max_rotation_deg) {
            return Err(Error::InvalidArgument(format!(
                "rotation range must lie in [0, 180] degrees, got {}",
                self.max_rotation_deg
            )));
        }
        Ok(())
    }
}

/// Per-image transform drawn from a policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub hflip: bool,
    pub vflip: bool,
    pub angle_deg: f64,
}

impl Transform {
    /// Always consumes three draws so the stream stays aligned across policies.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, policy: &AugmentPolicy) -> Self {
        let u_h: f64 = rng.random();
        let u_v: f64 = rng.random();
        let u_a: f64 = rng.random();
        Transform {
            hflip: u_h < policy.p_hflip,
            vflip: u_v < policy.p_vflip,
            angle_deg: policy.max_rotation_deg * (2.0 * u_a - 1.0),
        }
    }

    /// Applies the transform to one `(C, H, W)` image.
    pub fn apply(&self, img: &Tensor) -> Tensor {
        let mut out = img.shallow_clone();
        if self.hflip {
            out = out.flip([2]);
        }
        if self.vflip {
            out = out.flip([1]);
        }
        if self.angle_deg != 0.0 {
            out = rotate(&out.unsqueeze(0), self.angle_deg).squeeze_dim(0);
        }
        out
    }
}

/// Rotates `(N, C, H, W)` images about their centre with bilinear sampling
/// and reflect padding at the corners.
pub fn rotate(images: &Tensor, angle_deg: f64) -> Tensor {
    let size = images.size();
    let n = size[0];
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let theta = Tensor::from_slice(&[cos, -sin, 0.0, sin, cos, 0.0])
        .to_kind(images.kind())
        .view([1, 2, 3])
        .expand([n, 2, 3], false)
        .contiguous();
    let grid = Tensor::affine_grid_generator(&theta, size.as_slice(), false);
    // interpolation 0 = bilinear, padding 2 = reflection
    images.grid_sampler_2d(&grid, 0, 2, false)
}

/// Flips and rotates every image independently; labels and shape are kept.
pub fn geometric_augment<R: Rng + ?Sized>(
    batch: &ImageBatch,
    rng: &mut R,
    policy: &AugmentPolicy,
) -> Result<ImageBatch> {
    policy.validate()?;
    let n = batch.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n as i64 {
        let t = Transform::sample(rng, policy);
        out.push(t.apply(&batch.data.get(i)));
    }
    let mut data = if out.is_empty() {
        batch.data.shallow_clone()
    } else {
        Tensor::stack(&out, 0)
    };
    if batch.range == RangeTag::UnitSigned {
        data = data.clamp(-1.0, 1.0);
    }
    ImageBatch::new(data.to_kind(Kind::Float), batch.range, batch.labels.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: i64) -> ImageBatch {
        tch::manual_seed(5);
        let data = Tensor::rand([n, 3, 64, 64], (Kind::Float, tch::Device::Cpu)) * 2.0 - 1.0;
        ImageBatch::new(data, RangeTag::UnitSigned, Some((0..n).collect())).unwrap()
    }

    fn bits(t: &Tensor) -> Vec<u32> {
        Vec::<f32>::try_from(t.contiguous().view([-1]))
            .unwrap()
            .into_iter()
            .map(f32::to_bits)
            .collect()
    }

    #[test]
    fn identity_policy_is_bit_identical() {
        let batch = random_batch(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = geometric_augment(&batch, &mut rng, &AugmentPolicy::identity()).unwrap();
        assert_eq!(bits(&out.data), bits(&batch.data));
        assert_eq!(out.labels, batch.labels);
    }

    #[test]
    fn horizontal_flip_is_an_involution() {
        let batch = random_batch(3);
        let policy = AugmentPolicy {
            p_hflip: 1.0,
            p_vflip: 0.0,
            max_rotation_deg: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let once = geometric_augment(&batch, &mut rng, &policy).unwrap();
        assert_ne!(bits(&once.data), bits(&batch.data));
        let twice = geometric_augment(&once, &mut rng, &policy).unwrap();
        assert_eq!(bits(&twice.data), bits(&batch.data));
    }

    #[test]
    fn vertical_flip_is_an_involution() {
        let batch = random_batch(2);
        let policy = AugmentPolicy {
            p_hflip: 0.0,
            p_vflip: 1.0,
            max_rotation_deg: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let once = geometric_augment(&batch, &mut rng, &policy).unwrap();
        let twice = geometric_augment(&once, &mut rng, &policy).unwrap();
        assert_eq!(bits(&twice.data), bits(&batch.data));
    }

    #[test]
    fn same_seed_same_output() {
        let batch = random_batch(4);
        let policy = AugmentPolicy::default();
        let a = geometric_augment(&batch, &mut ChaCha8Rng::seed_from_u64(9), &policy).unwrap();
        let b = geometric_augment(&batch, &mut ChaCha8Rng::seed_from_u64(9), &policy).unwrap();
        assert_eq!(bits(&a.data), bits(&b.data));
        assert_eq!(a.data.size(), batch.data.size());
        assert!(a.data.max().double_value(&[]) <= 1.0);
        assert!(a.data.min().double_value(&[]) >= -1.0);
    }

    #[test]
    fn rotating_by_zero_is_identity_and_quarter_turn_matches_transpose() {
        let batch = random_batch(1);
        let t = Transform {
            hflip: false,
            vflip: false,
            angle_deg: 0.0,
        };
        assert_eq!(bits(&t.apply(&batch.data.get(0))), bits(&batch.data.get(0)));

        // A 90 degree turn lands exactly on the pixel grid.
        let rotated = rotate(&batch.data, 90.0);
        let by_index = batch.data.transpose(2, 3).flip([2]);
        let by_index_other = batch.data.transpose(2, 3).flip([3]);
        let d1 = (&rotated - by_index).abs().max().double_value(&[]);
        let d2 = (&rotated - by_index_other).abs().max().double_value(&[]);
        assert!(d1.min(d2) < 1e-5, "d1={d1} d2={d2}");
    }

    #[test]
    fn invalid_policy_is_rejected() {
        let batch = random_batch(1);
        let bad = AugmentPolicy {
            p_hflip: 1.5,
            ..AugmentPolicy::default()
        };
        assert!(geometric_augment(&batch, &mut ChaCha8Rng::seed_from_u64(0), &bad).is_err());
    }
}
