//! Weighted averaging of per-modality probabilities, ordered
//! (FLAIR, T1w, T1Gd, T2).

use std::str::FromStr;

use crate::error::{Error, Result};

/// Nonnegative per-modality weights normalized to sum 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleWeights([f64; 4]);

impl EnsembleWeights {
    /// Normalize a ratio like `[3, 3, 3, 2]`. A zero or negative sum is
    /// rejected.
    pub fn from_ratio(ratio: [f64; 4]) -> Result<Self> {
        if ratio.iter().any(|&r| r < 0.0 || !r.is_finite()) {
            return Err(Error::invalid(
                "ensemble ratio entries must be finite and nonnegative",
            ));
        }
        let sum: f64 = ratio.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("ensemble ratio must have a positive sum"));
        }
        Ok(EnsembleWeights([
            ratio[0] / sum,
            ratio[1] / sum,
            ratio[2] / sum,
            ratio[3] / sum,
        ]))
    }

    /// The 3:3:3:2 preset.
    pub fn ratio_3332() -> Self {
        EnsembleWeights::from_ratio([3.0, 3.0, 3.0, 2.0]).expect("static ratio")
    }

    /// The 2:4:2:2 preset.
    pub fn ratio_2422() -> Self {
        EnsembleWeights::from_ratio([2.0, 4.0, 2.0, 2.0]).expect("static ratio")
    }

    pub fn weights(&self) -> [f64; 4] {
        self.0
    }
}

impl FromStr for EnsembleWeights {
    type Err = Error;

    /// Parse `"a:b:c:d"` over (FLAIR, T1w, T1Gd, T2).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(Error::invalid(format!(
                "ensemble ratio must have 4 colon-separated entries, got {s:?}"
            )));
        }
        let mut ratio = [0.0f64; 4];
        for (slot, part) in ratio.iter_mut().zip(parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad ensemble ratio entry {part:?}")))?;
        }
        EnsembleWeights::from_ratio(ratio)
    }
}

/// Weighted arithmetic mean of the four per-modality probabilities.
pub fn ensemble_predict(probs: [f64; 4], weights: &EnsembleWeights) -> Result<f64> {
    for (i, &p) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!(
                "probability {i} out of [0, 1]: {p}"
            )));
        }
    }
    Ok(probs
        .iter()
        .zip(weights.0.iter())
        .map(|(p, w)| p * w)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_normalize_exactly() {
        let w = EnsembleWeights::ratio_3332().weights();
        assert_eq!(w, [3.0 / 11.0, 3.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let w = EnsembleWeights::ratio_2422().weights();
        assert_eq!(w, [0.2, 0.4, 0.2, 0.2]);
    }

    #[test]
    fn constant_probabilities_are_invariant() {
        for w in [EnsembleWeights::ratio_3332(), EnsembleWeights::ratio_2422()] {
            let p = ensemble_predict([0.7; 4], &w).unwrap();
            assert!((p - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn single_hot_probabilities_read_off_the_weight() {
        let p = ensemble_predict([1.0, 0.0, 0.0, 0.0], &EnsembleWeights::ratio_3332()).unwrap();
        assert!((p - 3.0 / 11.0).abs() < 1e-12);
        let p = ensemble_predict([0.0, 1.0, 0.0, 0.0], &EnsembleWeights::ratio_2422()).unwrap();
        assert!((p - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_sum_rejected() {
        assert!(EnsembleWeights::from_ratio([0.0; 4]).is_err());
        assert!(EnsembleWeights::from_ratio([1.0, -1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn ratio_strings_parse() {
        let w: EnsembleWeights = "3:3:3:2".parse().unwrap();
        assert_eq!(w, EnsembleWeights::ratio_3332());
        let w: EnsembleWeights = "0:0:0:1".parse().unwrap();
        assert_eq!(w.weights(), [0.0, 0.0, 0.0, 1.0]);
        assert!("1:2:3".parse::<EnsembleWeights>().is_err());
        assert!("a:b:c:d".parse::<EnsembleWeights>().is_err());
    }

    #[test]
    fn prediction_is_bounded_and_linear() {
        let w = EnsembleWeights::ratio_3332();
        let probs = [0.1, 0.9, 0.4, 0.6];
        let p = ensemble_predict(probs, &w).unwrap();
        let lo = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(p >= lo && p <= hi);

        // exactly linear in each coordinate
        let mut bumped = probs;
        bumped[2] = 0.8;
        let p2 = ensemble_predict(bumped, &w).unwrap();
        assert!((p2 - p - 0.4 * (3.0 / 11.0)).abs() < 1e-12);

        assert!(ensemble_predict([1.1, 0.0, 0.0, 0.0], &w).is_err());
    }
}
