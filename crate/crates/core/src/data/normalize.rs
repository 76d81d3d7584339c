use image::RgbImage;
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Spatial size of GAN-stage images.
pub const GAN_IMAGE_SIZE: u32 = 64;

#[inline]
pub fn normalize_value(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

#[inline]
pub fn denormalize_value(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Maps an 8-bit RGB image of any size to a `(3, H, W)` float tensor in [-1, 1].
pub fn to_unit_signed(img: &RgbImage) -> Tensor {
    let (w, h) = img.dimensions();
    let plane = (w * h) as usize;
    let mut chw = vec![0f32; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            chw[c * plane + i] = normalize_value(px.0[c]);
        }
    }
    Tensor::from_slice(&chw).view([3, h as i64, w as i64])
}

/// Normalizes a 64x64 image for GAN training; no implicit resize.
pub fn normalize_gan(img: &RgbImage) -> Result<Tensor> {
    let (w, h) = img.dimensions();
    if w != GAN_IMAGE_SIZE || h != GAN_IMAGE_SIZE {
        return Err(Error::Shape(format!(
            "GAN images must be {GAN_IMAGE_SIZE}x{GAN_IMAGE_SIZE}, got {w}x{h}"
        )));
    }
    Ok(to_unit_signed(img))
}

/// Inverse of [`to_unit_signed`]: `(v + 1) * 127.5`, rounded and clamped.
pub fn denormalize(t: &Tensor) -> Result<RgbImage> {
    let size = t.size();
    if size.len() != 3 || size[0] != 3 {
        return Err(Error::Shape(format!("expected (3, H, W), got {size:?}")));
    }
    let (h, w) = (size[1] as usize, size[2] as usize);
    let plane = h * w;
    let data: Vec<f32> = Vec::<f32>::try_from(
        t.to_kind(Kind::Float).contiguous().view([-1]),
    )?;
    let mut raw = vec![0u8; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            raw[3 * i + c] = denormalize_value(data[c * plane + i]);
        }
    }
    RgbImage::from_raw(w as u32, h as u32, raw)
        .ok_or_else(|| Error::Shape("buffer does not match image dimensions".into()))
}
