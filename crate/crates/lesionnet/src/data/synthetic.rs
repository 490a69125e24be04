//! Synthetic stand-in data: label-1 cases carry a bright Gaussian blob on
//! smooth low-frequency noise, label-0 cases are noise only. The four
//! modalities share the lesion position but differ in intensity profile.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::dataset::CaseData;
use crate::data::labels::save_labels;
use crate::data::mvol::{save_volume, Modality, VolumeRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct SyntheticConfig {
    pub n_cases: usize,
    pub seed: u64,
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    /// Peak added intensity of the lesion blob; 0 removes the class signal.
    pub blob_amplitude: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_cases: 40,
            seed: 7,
            depth: 4,
            height: 32,
            width: 32,
            blob_amplitude: 120.0,
        }
    }
}

/// Per-modality intensity gain, ordered (FLAIR, T1w, T1Gd, T2).
const MODALITY_GAIN: [f64; 4] = [1.0, 0.85, 1.1, 0.7];

/// Generate all cases in memory. Case `i` gets label `i % 2`; every case is
/// derived from its own counter-based seed, so generation order does not
/// matter.
pub fn synthesize(cfg: &SyntheticConfig) -> Result<Vec<CaseData>> {
    if cfg.n_cases < 4 {
        return Err(Error::data(format!(
            "need >= 4 cases, got {}",
            cfg.n_cases
        )));
    }
    if cfg.depth < 1 || cfg.height < 4 || cfg.width < 4 {
        return Err(Error::invalid(
            "synthetic volumes need depth >= 1 and height/width >= 4",
        ));
    }
    (0..cfg.n_cases).map(|i| synthesize_case(cfg, i)).collect()
}

/// Generate the dataset on disk: `<case>_<modality>.mvol` files and
/// `labels.csv`.
pub fn gen_synthetic(cfg: &SyntheticConfig, out_dir: &Path) -> Result<()> {
    let cases = synthesize(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut labels = BTreeMap::new();
    for case in &cases {
        labels.insert(case.case_id.clone(), case.label);
        for (&modality, voxels) in &case.volumes {
            let rec = VolumeRecord::new(
                case.case_id.clone(),
                modality,
                voxels.clone(),
                Some(case.label),
            )?;
            save_volume(&rec, &out_dir.join(rec.file_name()))?;
        }
    }
    save_labels(&labels, &out_dir.join("labels.csv"))
}

fn case_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 of (seed, index) so each case stream is independent
    let mut z = seed
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn synthesize_case(cfg: &SyntheticConfig, index: usize) -> Result<CaseData> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed(cfg.seed, index));
    let label = (index % 2) as u8;
    let case_id = format!("{:05}", index + 1);
    let (d, h, w) = (cfg.depth, cfg.height, cfg.width);

    // lesion geometry is drawn for every case so the random stream does not
    // depend on the label
    let cz = rng.gen_range(0.25..0.75) * d as f64;
    let cy = rng.gen_range(0.25..0.75) * h as f64;
    let cx = rng.gen_range(0.25..0.75) * w as f64;
    let sigma = (
        (d as f64 / 4.0).max(1.0),
        h as f64 / 6.5,
        w as f64 / 6.5,
    );

    let mut volumes = BTreeMap::new();
    for (m_idx, modality) in Modality::ALL.into_iter().enumerate() {
        let gain = MODALITY_GAIN[m_idx];
        let noise = SmoothNoise::sample(&mut rng, d, h, w);
        let mut data = Vec::with_capacity(d * h * w);
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let base = 40.0 + 120.0 * noise.at(z, y, x, d, h, w);
                    let mut v = base * gain;
                    if label == 1 && cfg.blob_amplitude > 0.0 {
                        let dist = ((z as f64 - cz) / sigma.0).powi(2)
                            + ((y as f64 - cy) / sigma.1).powi(2)
                            + ((x as f64 - cx) / sigma.2).powi(2);
                        v += cfg.blob_amplitude * gain * (-0.5 * dist).exp();
                    }
                    data.push(v.clamp(0.0, 255.0) as f32);
                }
            }
        }
        volumes.insert(modality, Tensor::from_vec(vec![d, h, w], data)?);
    }
    Ok(CaseData {
        case_id,
        label,
        volumes,
    })
}

/// Low-frequency noise: a coarse uniform grid upsampled trilinearly.
struct SmoothNoise {
    grid: Vec<f64>,
    dims: (usize, usize, usize),
}

impl SmoothNoise {
    fn sample(rng: &mut impl Rng, _d: usize, _h: usize, _w: usize) -> Self {
        let dims = (2usize, 8usize, 8usize);
        let grid = (0..dims.0 * dims.1 * dims.2)
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        SmoothNoise { grid, dims }
    }

    fn at(&self, z: usize, y: usize, x: usize, d: usize, h: usize, w: usize) -> f64 {
        let (gd, gh, gw) = self.dims;
        let coord = |i: usize, out: usize, grid: usize| -> f64 {
            if out <= 1 {
                0.0
            } else {
                i as f64 * (grid - 1) as f64 / (out - 1) as f64
            }
        };
        let (fz, fy, fx) = (coord(z, d, gd), coord(y, h, gh), coord(x, w, gw));
        let (z0, y0, x0) = (fz.floor() as usize, fy.floor() as usize, fx.floor() as usize);
        let (z1, y1, x1) = ((z0 + 1).min(gd - 1), (y0 + 1).min(gh - 1), (x0 + 1).min(gw - 1));
        let (tz, ty, tx) = (fz - z0 as f64, fy - y0 as f64, fx - x0 as f64);
        let g = |zz: usize, yy: usize, xx: usize| self.grid[(zz * gh + yy) * gw + xx];
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(g(z0, y0, x0), g(z0, y0, x1), tx);
        let c01 = lerp(g(z0, y1, x0), g(z0, y1, x1), tx);
        let c10 = lerp(g(z1, y0, x0), g(z1, y0, x1), tx);
        let c11 = lerp(g(z1, y1, x0), g(z1, y1, x1), tx);
        lerp(lerp(c00, c01, ty), lerp(c10, c11, ty), tz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{auc_wmw, ScoredDataset, TieMode};

    /// Threshold-on-mean oracle: score a case by the mean intensity of one
    /// modality volume.
    fn mean_scores(cases: &[CaseData], modality: Modality) -> Vec<(f64, u8)> {
        cases
            .iter()
            .map(|c| {
                let v = &c.volumes[&modality];
                let mean = v.data().iter().map(|&x| x as f64).sum::<f64>() / v.numel() as f64;
                (mean, c.label)
            })
            .collect()
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SyntheticConfig {
            n_cases: 6,
            ..Default::default()
        };
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.case_id, cb.case_id);
            assert_eq!(ca.label, cb.label);
            for m in Modality::ALL {
                assert_eq!(ca.volumes[&m].data(), cb.volumes[&m].data());
            }
        }
    }

    #[test]
    fn values_stay_in_intensity_range() {
        let cases = synthesize(&SyntheticConfig {
            n_cases: 8,
            ..Default::default()
        })
        .unwrap();
        for c in &cases {
            for m in Modality::ALL {
                assert!(c.volumes[&m]
                    .data()
                    .iter()
                    .all(|&v| (0.0..=255.0).contains(&v)));
            }
        }
    }

    #[test]
    fn labels_alternate_and_both_classes_present() {
        let cases = synthesize(&SyntheticConfig {
            n_cases: 10,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cases.iter().filter(|c| c.label == 1).count(), 5);
    }

    #[test]
    fn high_amplitude_is_separable_by_mean_threshold() {
        let cases = synthesize(&SyntheticConfig::default()).unwrap();
        for m in Modality::ALL {
            let d = ScoredDataset::from_pairs(&mean_scores(&cases, m)).unwrap();
            let auc = auc_wmw(&d, TieMode::Half);
            assert!(auc > 0.9, "mean-threshold oracle AUC for {m} = {auc}");
        }
    }

    #[test]
    fn zero_amplitude_removes_the_signal() {
        let cases = synthesize(&SyntheticConfig {
            blob_amplitude: 0.0,
            ..Default::default()
        })
        .unwrap();
        let d = ScoredDataset::from_pairs(&mean_scores(&cases, Modality::Flair)).unwrap();
        let auc = auc_wmw(&d, TieMode::Half);
        assert!(
            (0.25..=0.75).contains(&auc),
            "null-signal oracle AUC = {auc}"
        );
    }

    #[test]
    fn too_few_cases_rejected() {
        let cfg = SyntheticConfig {
            n_cases: 2,
            ..Default::default()
        };
        let err = synthesize(&cfg).unwrap_err();
        assert!(err.to_string().contains(">= 4"));
    }
}
