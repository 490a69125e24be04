//! Random augmentation: independent horizontal/vertical flips and a rotation
//! whose angle is uniform in +/- `factor` * 180 degrees, resampled bilinearly
//! with zero fill. One transform is drawn per sample and applied to every 2D
//! plane so multi-channel slices and volumes stay aligned.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const DEFAULT_ROTATION_FACTOR: f64 = 0.2;

/// A concrete sampled transform: flips first, then rotation about the image
/// center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmentation {
    pub flip_h: bool,
    pub flip_v: bool,
    /// Radians, counterclockwise.
    pub angle: f64,
}

impl Augmentation {
    pub fn identity() -> Self {
        Augmentation {
            flip_h: false,
            flip_v: false,
            angle: 0.0,
        }
    }

    /// 50% horizontal flip, 50% vertical flip, angle uniform in
    /// `+/- factor * pi`.
    pub fn sample(rng: &mut impl Rng, factor: f64) -> Self {
        let limit = factor * std::f64::consts::PI;
        Augmentation {
            flip_h: rng.gen_bool(0.5),
            flip_v: rng.gen_bool(0.5),
            angle: if limit > 0.0 {
                rng.gen_range(-limit..limit)
            } else {
                0.0
            },
        }
    }

    /// Apply to one `[H, W]` plane held in a flat slice.
    fn apply_plane<T: Element>(&self, src: &[T], h: usize, w: usize, dst: &mut Vec<T>) {
        // flips are exact reindexings
        let mut flipped = Vec::with_capacity(src.len());
        for y in 0..h {
            let sy = if self.flip_v { h - 1 - y } else { y };
            for x in 0..w {
                let sx = if self.flip_h { w - 1 - x } else { x };
                flipped.push(src[sy * w + sx]);
            }
        }
        if self.angle == 0.0 {
            dst.extend_from_slice(&flipped);
            return;
        }
        // inverse-map each output pixel and sample bilinearly, zero outside
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let (sin, cos) = (-self.angle).sin_cos();
        for y in 0..h {
            for x in 0..w {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                let sy = cy + dy * cos - dx * sin;
                let sx = cx + dy * sin + dx * cos;
                dst.push(sample_bilinear(&flipped, h, w, sy, sx));
            }
        }
    }
}

fn sample_bilinear<T: Element>(data: &[T], h: usize, w: usize, y: f64, x: f64) -> T {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = T::from_f64(y - y0);
    let fx = T::from_f64(x - x0);
    let fetch = |yy: f64, xx: f64| -> T {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            T::zero()
        } else {
            data[yy as usize * w + xx as usize]
        }
    };
    let one = T::one();
    fetch(y0, x0) * (one - fy) * (one - fx)
        + fetch(y0, x0 + 1.0) * (one - fy) * fx
        + fetch(y0 + 1.0, x0) * fy * (one - fx)
        + fetch(y0 + 1.0, x0 + 1.0) * fy * fx
}

/// Apply a transform to every `[H, W]` plane of a rank 2..=4 sample
/// (`[H, W]`, `[C, H, W]`, or `[C, D, H, W]`). Labels travel outside the
/// tensor and are untouched.
pub fn apply<T: Element>(x: &Tensor<T>, aug: &Augmentation) -> Result<Tensor<T>> {
    let rank = x.rank();
    if !(2..=4).contains(&rank) {
        return Err(Error::shape(format!(
            "augmentation expects rank 2..=4 samples, got {}",
            x.shape()
        )));
    }
    let dims = x.dims();
    let (h, w) = (dims[rank - 2], dims[rank - 1]);
    let planes = x.numel() / (h * w);
    let mut out = Vec::with_capacity(x.numel());
    for p in 0..planes {
        let base = p * h * w;
        aug.apply_plane(&x.data()[base..base + h * w], h, w, &mut out);
    }
    Tensor::from_vec(x.shape().clone(), out)
}

/// Draw one transform (rotation factor 0.2) and apply it.
pub fn augment<T: Element>(x: &Tensor<T>, rng: &mut impl Rng) -> Result<Tensor<T>> {
    apply(x, &Augmentation::sample(rng, DEFAULT_ROTATION_FACTOR))
}
