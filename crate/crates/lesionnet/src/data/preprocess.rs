//! Preprocessing: bilinear resize, intensity rescale to [0, 1], the optional
//! per-channel affine normalization, and sliding-window slice extraction for
//! the 2D path.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Separable bilinear interpolation with corner-aligned sampling of a 2D
/// `[H, W]` slice. An input already at the target size is returned bitwise
/// unchanged; output values stay within the input's [min, max].
pub fn resize_bilinear<T: Element>(slice: &Tensor<T>, target: (usize, usize)) -> Result<Tensor<T>> {
    if slice.rank() != 2 {
        return Err(Error::shape(format!(
            "resize expects a 2D slice, got {}",
            slice.shape()
        )));
    }
    let (h, w) = (slice.dims()[0], slice.dims()[1]);
    let (th, tw) = target;
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!(
            "resize needs both input extents >= 2, got {h}x{w}"
        )));
    }
    if th < 1 || tw < 1 {
        return Err(Error::invalid("resize target extents must be >= 1"));
    }
    if (h, w) == (th, tw) {
        return Ok(slice.clone());
    }
    // corner-aligned source coordinate for output index i along an axis
    let coord = |i: usize, out: usize, input: usize| -> f64 {
        if out == 1 {
            0.0
        } else {
            i as f64 * (input - 1) as f64 / (out - 1) as f64
        }
    };
    let xs = slice.data();
    let mut out = Vec::with_capacity(th * tw);
    for oy in 0..th {
        let sy = coord(oy, th, h);
        let y0 = (sy.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fy = T::from_f64(sy - y0 as f64);
        for ox in 0..tw {
            let sx = coord(ox, tw, w);
            let x0 = (sx.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fx = T::from_f64(sx - x0 as f64);
            let one = T::one();
            let v = xs[y0 * w + x0] * (one - fy) * (one - fx)
                + xs[y0 * w + x1] * (one - fy) * fx
                + xs[y1 * w + x0] * fy * (one - fx)
                + xs[y1 * w + x1] * fy * fx;
            out.push(v);
        }
    }
    Tensor::from_vec(vec![th, tw], out)
}

/// Map raw intensities in [0, 255] down to [0, 1] by exact division.
/// Out-of-range values signal an unconverted source and are rejected.
pub fn rescale<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let lo = T::zero();
    let hi = T::from_f64(255.0);
    if x.data().iter().any(|&v| v < lo || v > hi || !v.is_finite()) {
        return Err(Error::data(
            "rescale expects intensities in [0, 255]; found out-of-range values",
        ));
    }
    Ok(x.map(|v| v / hi))
}

/// Optional per-channel affine normalization applied after [`rescale`]:
/// `y = (x - mean) / scale`. The identity defaults leave inputs unchanged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub mean: f64,
    pub scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            mean: 0.0,
            scale: 1.0,
        }
    }
}

impl Normalization {
    pub fn apply<T: Element>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if self.scale == 0.0 || !self.scale.is_finite() || !self.mean.is_finite() {
            return Err(Error::invalid("normalization scale must be finite and nonzero"));
        }
        if self.mean == 0.0 && self.scale == 1.0 {
            return Ok(x.clone());
        }
        let mean = T::from_f64(self.mean);
        let scale = T::from_f64(self.scale);
        Ok(x.map(|v| (v - mean) / scale))
    }
}

/// Sliding window of `window` adjacent depth slices stacked as channels:
/// a `[D, H, W]` volume yields `D - window + 1` samples of shape
/// `[window, H, W]`.
pub fn extract_slices<T: Element>(voxels: &Tensor<T>, window: usize) -> Result<Vec<Tensor<T>>> {
    if voxels.rank() != 3 {
        return Err(Error::shape(format!(
            "slice extraction expects [D, H, W], got {}",
            voxels.shape()
        )));
    }
    if window == 0 {
        return Err(Error::invalid("slice window must be >= 1"));
    }
    let (d, h, w) = (voxels.dims()[0], voxels.dims()[1], voxels.dims()[2]);
    if d < window {
        return Err(Error::data(format!(
            "volume depth {d} is smaller than the slice window {window}"
        )));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(d - window + 1);
    for start in 0..=d - window {
        let begin = start * plane;
        let end = (start + window) * plane;
        out.push(Tensor::from_vec(
            vec![window, h, w],
            voxels.data()[begin..end].to_vec(),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_identity_is_bitwise() {
        let x = Tensor::<f32>::from_vec(vec![3, 4], (0..12).map(|v| v as f32 * 0.37).collect())
            .unwrap();
        let y = resize_bilinear(&x, (3, 4)).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn resize_constant_stays_constant() {
        let x = Tensor::<f64>::full(vec![5, 7], 3.25);
        let y = resize_bilinear(&x, (11, 4)).unwrap();
        assert!(y.data().iter().all(|&v| (v - 3.25).abs() < 1e-12));
    }

    #[test]
    fn checkerboard_center_is_half() {
        // 2x2 checkerboard to 3x3: the center lands exactly between all four
        // corners, so bilinear weights are 1/4 each.
        let x = Tensor::<f64>::from_vec(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let y = resize_bilinear(&x, (3, 3)).unwrap();
        assert_eq!(y.get(&[1, 1]), 0.5);
        // corners align exactly
        assert_eq!(y.get(&[0, 0]), 0.0);
        assert_eq!(y.get(&[2, 2]), 0.0);
        assert_eq!(y.get(&[0, 2]), 1.0);
    }

    #[test]
    fn resize_stays_within_input_range() {
        let x = Tensor::<f64>::from_vec(vec![4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let y = resize_bilinear(&x, (9, 5)).unwrap();
        assert!(y.data().iter().all(|&v| (0.0..=15.0).contains(&v)));
    }

    #[test]
    fn one_pixel_axis_rejected() {
        let x = Tensor::<f64>::ones(vec![1, 8]);
        assert!(resize_bilinear(&x, (4, 4)).is_err());
    }

    #[test]
    fn rescale_endpoints() {
        let x = Tensor::<f64>::from_vec(vec![3], vec![255.0, 0.0, 127.5]).unwrap();
        let y = rescale(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0, 0.5]);
    }

    #[test]
    fn rescale_rejects_out_of_range() {
        let x = Tensor::<f64>::from_vec(vec![2], vec![100.0, 256.0]).unwrap();
        assert!(rescale(&x).is_err());
        let x = Tensor::<f64>::from_vec(vec![1], vec![-0.5]).unwrap();
        assert!(rescale(&x).is_err());
    }

    #[test]
    fn rescale_inverts_times_255_within_ulp() {
        for i in 0..=1000 {
            let v = i as f32 / 1000.0;
            let x = Tensor::<f32>::scalar(v * 255.0);
            let y = rescale(&x).unwrap().data()[0];
            assert!((y - v).abs() <= f32::EPSILON * v.max(1.0));
        }
    }

    #[test]
    fn normalization_identity_default() {
        let x = Tensor::<f64>::from_vec(vec![2], vec![0.25, 0.75]).unwrap();
        let y = Normalization::default().apply(&x).unwrap();
        assert_eq!(x.data(), y.data());
        let z = Normalization { mean: 0.5, scale: 2.0 }.apply(&x).unwrap();
        assert_eq!(z.data(), &[-0.125, 0.125]);
    }

    #[test]
    fn slice_windows() {
        let vol =
            Tensor::<f64>::from_vec(vec![4, 2, 2], (0..16).map(|v| v as f64).collect()).unwrap();
        let slices = extract_slices(&vol, 3).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].dims(), &[3, 2, 2]);
        assert_eq!(slices[0].data(), &vol.data()[0..12]);
        assert_eq!(slices[1].data(), &vol.data()[4..16]);

        let vol3 = Tensor::<f64>::ones(vec![3, 2, 2]);
        assert_eq!(extract_slices(&vol3, 3).unwrap().len(), 1);

        let shallow = Tensor::<f64>::ones(vec![2, 2, 2]);
        assert!(extract_slices(&shallow, 3).is_err());
    }

    #[test]
    fn constant_volume_gives_identical_samples() {
        let vol = Tensor::<f64>::full(vec![5, 3, 3], 2.0);
        let slices = extract_slices(&vol, 3).unwrap();
        assert_eq!(slices.len(), 3);
        for s in &slices {
            assert_eq!(s.data(), slices[0].data());
        }
    }
}
