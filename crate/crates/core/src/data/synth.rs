//! Procedural land-cover-like corpus.
//!
//! Produces `<root>/<Class>/<Class>_<n>.jpg` images (64x64 RGB) with a
//! class-specific texture, so the pipeline can be exercised end-to-end
//! without the real imagery. Output is a pure function of the seed.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug)]
enum Pattern {
    Stripes,
    Canopy,
    Meadow,
    Road,
    Blocks,
    Orchard,
    Roofs,
    Channel,
    Water,
}

#[derive(Clone, Copy, Debug)]
struct Style {
    pattern: Pattern,
    base: [f32; 3],
    accent: [f32; 3],
}

fn style_for(class: &str) -> Style {
    let (pattern, base, accent) = match class {
        "AnnualCrop" => (Pattern::Stripes, [150.0, 130.0, 80.0], [90.0, 140.0, 60.0]),
        "Forest" => (Pattern::Canopy, [30.0, 70.0, 35.0], [55.0, 100.0, 50.0]),
        "HerbaceousVegetation" => (Pattern::Meadow, [110.0, 130.0, 70.0], [150.0, 150.0, 90.0]),
        "Highway" => (Pattern::Road, [100.0, 120.0, 85.0], [150.0, 150.0, 150.0]),
        "Industrial" => (Pattern::Blocks, [140.0, 140.0, 140.0], [200.0, 200.0, 205.0]),
        "Pasture" => (Pattern::Meadow, [120.0, 160.0, 80.0], [135.0, 170.0, 95.0]),
        "PermanentCrop" => (Pattern::Orchard, [160.0, 140.0, 100.0], [70.0, 110.0, 50.0]),
        "Residential" => (Pattern::Roofs, [120.0, 125.0, 115.0], [170.0, 90.0, 80.0]),
        "River" => (Pattern::Channel, [90.0, 120.0, 70.0], [40.0, 70.0, 120.0]),
        "SeaLake" => (Pattern::Water, [25.0, 55.0, 95.0], [35.0, 70.0, 110.0]),
        other => {
            let h = rng::derive_seed(0, &["style", other]);
            let patterns = [
                Pattern::Stripes,
                Pattern::Canopy,
                Pattern::Meadow,
                Pattern::Road,
                Pattern::Blocks,
                Pattern::Orchard,
                Pattern::Roofs,
                Pattern::Channel,
                Pattern::Water,
            ];
            let byte = |k: u32| ((h >> (8 * k)) & 0xff) as f32;
            (
                patterns[(h % patterns.len() as u64) as usize],
                [byte(1), byte(2), byte(3)],
                [byte(4), byte(5), byte(6)],
            )
        }
    };
    Style {
        pattern,
        base,
        accent,
    }
}

/// Smooth value noise on a coarse lattice, bilinearly interpolated.
struct ValueNoise {
    cells: usize,
    values: Vec<f32>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let values = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.random::<f32>())
            .collect();
        ValueNoise { cells, values }
    }

    fn at(&self, x: f32, y: f32) -> f32 {
        let fx = x * self.cells as f32;
        let fy = y * self.cells as f32;
        let (x0, y0) = (
            (fx.floor() as usize).min(self.cells - 1),
            (fy.floor() as usize).min(self.cells - 1),
        );
        let (tx, ty) = (fx - x0 as f32, fy - y0 as f32);
        let v = |i: usize, j: usize| self.values[j * (self.cells + 1) + i];
        let top = v(x0, y0) * (1.0 - tx) + v(x0 + 1, y0) * tx;
        let bottom = v(x0, y0 + 1) * (1.0 - tx) + v(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

fn mix(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0);
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Renders one 64x64 sample of `class`.
pub fn render_sample(class: &str, rng: &mut ChaCha8Rng) -> RgbImage {
    const SIZE: u32 = 64;
    let style = style_for(class);
    let coarse = ValueNoise::new(rng, 4);
    let fine = ValueNoise::new(rng, 16);
    let angle: f32 = rng.random_range(0.0..std::f32::consts::PI);
    let (sin, cos) = angle.sin_cos();
    let period: f32 = rng.random_range(6.0..12.0);
    let offset: f32 = rng.random_range(-0.25..0.25);
    let brightness: f32 = rng.random_range(0.85..1.15);
    let grain: f32 = rng.random_range(10.0..25.0);

    RgbImage::from_fn(SIZE, SIZE, |px, py| {
        let x = px as f32 / SIZE as f32;
        let y = py as f32 / SIZE as f32;
        let u = (x - 0.5) * cos + (y - 0.5) * sin;
        let v = -(x - 0.5) * sin + (y - 0.5) * cos;
        let t = match style.pattern {
            Pattern::Stripes => {
                let s = (u * SIZE as f32 * std::f32::consts::TAU / period).sin();
                if s > 0.0 { 1.0 } else { 0.0 }
            }
            Pattern::Canopy => fine.at(x, y) * 0.8 + coarse.at(x, y) * 0.2,
            Pattern::Meadow => coarse.at(x, y),
            Pattern::Road => {
                let d = (v - offset).abs();
                if d < 0.05 { 1.0 } else { 0.3 * coarse.at(x, y) }
            }
            Pattern::Blocks => {
                let bx = (x * 4.0).floor();
                let by = (y * 4.0).floor();
                let h = ((bx * 7.0 + by * 13.0 + offset * 50.0).sin() * 0.5 + 0.5).abs();
                if h > 0.45 { 1.0 } else { 0.2 }
            }
            Pattern::Orchard => {
                let gx = (u * SIZE as f32 / period).fract().abs();
                let gy = (v * SIZE as f32 / period).fract().abs();
                if gx < 0.45 && gy < 0.45 { 1.0 } else { 0.0 }
            }
            Pattern::Roofs => {
                let gx = (x * SIZE as f32 / 8.0).fract();
                let gy = (y * SIZE as f32 / 8.0).fract();
                if gx > 0.2 && gx < 0.75 && gy > 0.2 && gy < 0.75 { 1.0 } else { 0.1 }
            }
            Pattern::Channel => {
                let centre = offset + 0.12 * (u * 9.0).sin();
                if (v - centre).abs() < 0.1 { 1.0 } else { 0.2 * coarse.at(x, y) }
            }
            Pattern::Water => 0.3 * coarse.at(x, y),
        };
        let c = mix(style.base, style.accent, t);
        let n = (fine.at(y, x) - 0.5) * grain;
        Rgb([
            (c[0] * brightness + n).clamp(0.0, 255.0) as u8,
            (c[1] * brightness + n).clamp(0.0, 255.0) as u8,
            (c[2] * brightness + n).clamp(0.0, 255.0) as u8,
        ])
    })
}

/// Writes `per_class` JPEG samples for every class under `root` and returns
/// their paths in write order.
pub fn synthesize_corpus<S: AsRef<str>>(
    root: &Path,
    classes: &[S],
    per_class: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(classes.len() * per_class);
    for class in classes {
        let class = class.as_ref();
        let dir = root.join(class);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut rng = rng::stream(seed, &["synth", class]);
        for i in 1..=per_class {
            let img = render_sample(class, &mut rng);
            let path = dir.join(format!("{class}_{i}.jpg"));
            img.save(&path).map_err(|e| Error::Decode {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            paths.push(path);
        }
    }
    Ok(paths)
}
