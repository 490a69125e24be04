//! Compound scaling: the baseline stage table and the width/depth
//! multipliers that turn it into larger variants.

use crate::error::{Error, Result};

/// One backbone stage: every block in the stage shares these settings; the
/// first block carries the stage stride, later repeats use stride 1 with
/// in == out channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageConfig {
    pub expand_ratio: usize,
    pub kernel: usize,
    pub stride: usize,
    pub base_channels: usize,
    pub base_repeats: usize,
}

/// The seven-stage baseline table (stem 32, head 1280).
pub const BASELINE_STAGES: [StageConfig; 7] = [
    StageConfig { expand_ratio: 1, kernel: 3, stride: 1, base_channels: 16, base_repeats: 1 },
    StageConfig { expand_ratio: 6, kernel: 3, stride: 2, base_channels: 24, base_repeats: 2 },
    StageConfig { expand_ratio: 6, kernel: 5, stride: 2, base_channels: 40, base_repeats: 2 },
    StageConfig { expand_ratio: 6, kernel: 3, stride: 2, base_channels: 80, base_repeats: 3 },
    StageConfig { expand_ratio: 6, kernel: 5, stride: 1, base_channels: 112, base_repeats: 3 },
    StageConfig { expand_ratio: 6, kernel: 5, stride: 2, base_channels: 192, base_repeats: 4 },
    StageConfig { expand_ratio: 6, kernel: 3, stride: 1, base_channels: 320, base_repeats: 1 },
];

pub const BASE_STEM_CHANNELS: usize = 32;
pub const BASE_HEAD_CHANNELS: usize = 1280;

/// Width/depth multipliers applied to the baseline table.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledVariant {
    pub width_mult: f64,
    pub depth_mult: f64,
    pub name: String,
}

impl ScaledVariant {
    pub fn b0() -> Self {
        ScaledVariant {
            width_mult: 1.0,
            depth_mult: 1.0,
            name: "b0".to_string(),
        }
    }

    pub fn b7() -> Self {
        ScaledVariant {
            width_mult: 2.0,
            depth_mult: 3.1,
            name: "b7".to_string(),
        }
    }

    pub fn custom(width_mult: f64, depth_mult: f64) -> Result<Self> {
        if !(width_mult > 0.0 && width_mult.is_finite()) {
            return Err(Error::invalid(format!(
                "width multiplier must be positive, got {width_mult}"
            )));
        }
        if !(depth_mult > 0.0 && depth_mult.is_finite()) {
            return Err(Error::invalid(format!(
                "depth multiplier must be positive, got {depth_mult}"
            )));
        }
        Ok(ScaledVariant {
            width_mult,
            depth_mult,
            name: "custom".to_string(),
        })
    }

    pub fn scaled_channels(&self, base: usize) -> usize {
        round_channels(base as f64 * self.width_mult)
    }

    pub fn scaled_repeats(&self, base: usize) -> usize {
        (base as f64 * self.depth_mult).ceil() as usize
    }

    pub fn stem_channels(&self) -> usize {
        self.scaled_channels(BASE_STEM_CHANNELS)
    }

    pub fn head_channels(&self) -> usize {
        self.scaled_channels(BASE_HEAD_CHANNELS)
    }
}

/// Nearest multiple of 8 (ties round up), never below 8.
pub fn round_channels(c: f64) -> usize {
    (((c / 8.0).round() * 8.0) as usize).max(8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b0_is_the_identity_scaling() {
        let v = ScaledVariant::b0();
        let channels: Vec<usize> = BASELINE_STAGES
            .iter()
            .map(|s| v.scaled_channels(s.base_channels))
            .collect();
        assert_eq!(channels, vec![16, 24, 40, 80, 112, 192, 320]);
        let repeats: Vec<usize> = BASELINE_STAGES
            .iter()
            .map(|s| v.scaled_repeats(s.base_repeats))
            .collect();
        assert_eq!(repeats, vec![1, 2, 2, 3, 3, 4, 1]);
        assert_eq!(v.head_channels(), 1280);
        assert_eq!(v.stem_channels(), 32);
    }

    #[test]
    fn b7_scales_repeats_by_ceil() {
        let v = ScaledVariant::b7();
        let repeats: Vec<usize> = BASELINE_STAGES
            .iter()
            .map(|s| v.scaled_repeats(s.base_repeats))
            .collect();
        assert_eq!(repeats, vec![4, 7, 7, 10, 10, 13, 4]);
        let channels: Vec<usize> = BASELINE_STAGES
            .iter()
            .map(|s| v.scaled_channels(s.base_channels))
            .collect();
        assert_eq!(channels, vec![32, 48, 80, 160, 224, 384, 640]);
        assert_eq!(v.head_channels(), 2560);
    }

    #[test]
    fn rounding_floors_at_8_and_ties_go_up() {
        assert_eq!(round_channels(4.0), 8);
        assert_eq!(round_channels(10.0), 8);
        assert_eq!(round_channels(12.0), 16);
        assert_eq!(round_channels(20.0), 24);
        assert_eq!(round_channels(320.0), 320);
    }

    #[test]
    fn non_positive_multipliers_rejected() {
        assert!(ScaledVariant::custom(0.0, 1.0).is_err());
        assert!(ScaledVariant::custom(1.0, -0.5).is_err());
        assert!(ScaledVariant::custom(0.25, 0.5).is_ok());
    }
}
