use std::fmt;

use crate::error::{Error, Result};

/// Dense tensor shape: a list of positive extents, row-major layout.
///
/// Layout convention throughout the crate is `[batch, channel, spatial...]`
/// for feature maps; plain vectors/matrices use their natural shapes.
#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Spatial extents: everything after the leading `[batch, channel]` pair.
    pub fn spatial(&self) -> &[usize] {
        &self.0[2.min(self.0.len())..]
    }

    /// Row-major strides, one per dimension.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    /// Flat row-major offset of a multi-index. Debug-checked bounds.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.0.len());
        let mut off = 0;
        for (i, (&ix, &ext)) in index.iter().zip(self.0.iter()).enumerate() {
            debug_assert!(ix < ext, "index {ix} out of range for dim {i} (extent {ext})");
            off = off * ext + ix;
        }
        off
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

impl From<Vec<usize>> for Shape {
    fn from(v: Vec<usize>) -> Self {
        Shape(v)
    }
}

impl From<&[usize]> for Shape {
    fn from(v: &[usize]) -> Self {
        Shape(v.to_vec())
    }
}

/// Padding policy for convolutions.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Padding {
    /// Output extent = ceil(input / stride); zero padding as needed, with the
    /// extra cell on the high side when the total is odd.
    Same,
    /// No padding; output extent = floor((input - kernel) / stride) + 1.
    Valid,
}

/// Convolution hyperparameters for rank-2 (H, W) or rank-3 (D, H, W) kernels.
///
/// `groups == in_channels` gives a depthwise convolution. Semantics are
/// cross-correlation (no kernel flip), the usual CNN convention.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConvSpec {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Padding,
    pub groups: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(
        kernel: Vec<usize>,
        stride: Vec<usize>,
        padding: Padding,
        groups: usize,
        out_channels: usize,
    ) -> Result<Self> {
        let rank = kernel.len();
        if rank != 2 && rank != 3 {
            return Err(Error::invalid(format!(
                "conv spatial rank must be 2 or 3, got {rank}"
            )));
        }
        if stride.len() != rank {
            return Err(Error::invalid(format!(
                "stride rank {} does not match kernel rank {rank}",
                stride.len()
            )));
        }
        if kernel.contains(&0) || stride.contains(&0) {
            return Err(Error::invalid("kernel and stride extents must be >= 1"));
        }
        if groups == 0 || out_channels == 0 {
            return Err(Error::invalid("groups and out_channels must be >= 1"));
        }
        Ok(ConvSpec {
            kernel,
            stride,
            padding,
            groups,
            out_channels,
        })
    }

    /// Uniform kernel/stride across all spatial dims.
    pub fn isotropic(
        rank: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        groups: usize,
        out_channels: usize,
    ) -> Result<Self> {
        ConvSpec::new(
            vec![kernel; rank],
            vec![stride; rank],
            padding,
            groups,
            out_channels,
        )
    }

    pub fn rank(&self) -> usize {
        self.kernel.len()
    }
}

/// Output extent of a convolution along one spatial dimension.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<usize> {
    if input == 0 {
        return Err(Error::shape("zero-size spatial dimension"));
    }
    match padding {
        Padding::Same => Ok(input.div_ceil(stride)),
        Padding::Valid => {
            if input < kernel {
                return Err(Error::shape(format!(
                    "VALID conv needs input extent >= kernel ({input} < {kernel})"
                )));
            }
            Ok((input - kernel) / stride + 1)
        }
    }
}

/// Low-side padding for one dimension. SAME pads asymmetrically with the
/// extra cell on the high side when the total is odd.
pub fn pad_low(input: usize, kernel: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Valid => 0,
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            total / 2
        }
    }
}

/// Output extent of a VALID max-pool window along one dimension.
pub fn pool_out_extent(input: usize, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::invalid("pool window and stride must be >= 1"));
    }
    if input < window {
        return Err(Error::shape(format!(
            "pool window {window} larger than input extent {input}"
        )));
    }
    Ok((input - window) / stride + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_matches_ceil_rule() {
        for input in 1..40 {
            for stride in 1..4 {
                for kernel in 1..6 {
                    let out = conv_out_extent(input, kernel, stride, Padding::Same).unwrap();
                    assert_eq!(out, input.div_ceil(stride), "SAME out for e={input} s={stride}");
                }
            }
        }
    }

    #[test]
    fn valid_padding_formula() {
        assert_eq!(conv_out_extent(5, 3, 1, Padding::Valid).unwrap(), 3);
        assert_eq!(conv_out_extent(5, 3, 2, Padding::Valid).unwrap(), 2);
        assert!(conv_out_extent(2, 3, 1, Padding::Valid).is_err());
    }

    #[test]
    fn odd_total_padding_goes_high_side() {
        // input 4, kernel 3, stride 2: out 2, total pad = (2-1)*2+3-4 = 1 -> low 0, high 1
        assert_eq!(pad_low(4, 3, 2, Padding::Same), 0);
        // input 4, kernel 5, stride 1: total pad 4 -> low 2
        assert_eq!(pad_low(4, 5, 1, Padding::Same), 2);
    }

    #[test]
    fn offset_is_row_major() {
        let s = Shape::new(vec![2, 3, 4]);
        assert_eq!(s.offset(&[0, 0, 0]), 0);
        assert_eq!(s.offset(&[0, 0, 3]), 3);
        assert_eq!(s.offset(&[0, 1, 0]), 4);
        assert_eq!(s.offset(&[1, 2, 3]), 23);
        assert_eq!(s.strides(), vec![12, 4, 1]);
    }
}
