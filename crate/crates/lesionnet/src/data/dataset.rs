//! Dataset assembly: loading MVOL directories into labeled cases and turning
//! cases into model-ready sample sets for the 3D and 2D paths.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::labels::load_labels;
use crate::data::mvol::{load_volume, Modality};
use crate::data::preprocess::{extract_slices, rescale, resize_bilinear, Normalization};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// One labeled case with all four modality volumes.
#[derive(Clone, Debug)]
pub struct CaseData {
    pub case_id: String,
    pub label: u8,
    pub volumes: BTreeMap<Modality, Tensor<f32>>,
}

/// Read every `*.mvol` under `dir` plus `labels.csv`, grouping volumes by
/// case. Every case must be labeled and carry all four modalities.
pub fn load_dataset(dir: &Path) -> Result<Vec<CaseData>> {
    let labels_path = dir.join("labels.csv");
    if !labels_path.exists() {
        return Err(Error::data(format!(
            "missing labels.csv in {}",
            dir.display()
        )));
    }
    let labels = load_labels(&labels_path)?;

    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "mvol"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::data(format!(
            "no .mvol volumes found in {}",
            dir.display()
        )));
    }

    let mut cases: BTreeMap<String, BTreeMap<Modality, Tensor<f32>>> = BTreeMap::new();
    for path in paths {
        let rec = load_volume(&path)?;
        let entry = cases.entry(rec.case_id.clone()).or_default();
        if entry.insert(rec.modality, rec.voxels).is_some() {
            return Err(Error::data(format!(
                "duplicate volume for case {} modality {}",
                rec.case_id, rec.modality
            )));
        }
    }

    let mut out = Vec::with_capacity(cases.len());
    for (case_id, volumes) in cases {
        let Some(&label) = labels.get(&case_id) else {
            return Err(Error::data(format!("case {case_id} has no label")));
        };
        for m in Modality::ALL {
            if !volumes.contains_key(&m) {
                return Err(Error::data(format!(
                    "case {case_id} is missing its {m} volume"
                )));
            }
        }
        out.push(CaseData {
            case_id,
            label,
            volumes,
        });
    }
    Ok(out)
}

/// One model-ready input with its case identity and label.
#[derive(Clone, Debug)]
pub struct Sample<T: Element> {
    pub case_id: String,
    pub x: Tensor<T>,
    pub label: u8,
}

/// A list of samples; several samples may share a case (the 2D slice path).
#[derive(Clone, Debug)]
pub struct SampleSet<T: Element> {
    pub samples: Vec<Sample<T>>,
}

impl<T: Element> Default for SampleSet<T> {
    fn default() -> Self {
        SampleSet {
            samples: Vec::new(),
        }
    }
}

impl<T: Element> SampleSet<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Keep only samples whose case id is in `ids` (split application).
    pub fn subset(&self, ids: &[String]) -> SampleSet<T> {
        let keep: std::collections::HashSet<&str> = ids.iter().map(|s| s.as_str()).collect();
        SampleSet {
            samples: self
                .samples
                .iter()
                .filter(|s| keep.contains(s.case_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    /// Case ids in first-appearance order.
    pub fn case_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for s in &self.samples {
            if seen.insert(s.case_id.as_str()) {
                out.push(s.case_id.clone());
            }
        }
        out
    }

    /// The shape every sample must share (input contract of the model).
    pub fn sample_dims(&self) -> Result<Vec<usize>> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::data("empty sample set"))?;
        Ok(first.x.dims().to_vec())
    }
}

/// Preprocessing applied while building samples.
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleOptions {
    /// Resize every slice to (H, W) before stacking.
    pub resize: Option<(usize, usize)>,
    /// Affine normalization applied after the /255 rescale.
    pub normalization: Normalization,
}

fn prepare_volume<T: Element>(voxels: &Tensor<f32>, opts: &SampleOptions) -> Result<Tensor<T>> {
    let mut vol: Tensor<T> = voxels.cast();
    if let Some(target) = opts.resize {
        let (d, h, w) = (vol.dims()[0], vol.dims()[1], vol.dims()[2]);
        let mut planes = Vec::with_capacity(d * target.0 * target.1);
        for z in 0..d {
            let plane = Tensor::from_vec(
                vec![h, w],
                vol.data()[z * h * w..(z + 1) * h * w].to_vec(),
            )?;
            planes.extend_from_slice(resize_bilinear(&plane, target)?.data());
        }
        vol = Tensor::from_vec(vec![d, target.0, target.1], planes)?;
    }
    let vol = rescale(&vol)?;
    opts.normalization.apply(&vol)
}

/// 3D path: one sample per case, the chosen modality's volume as
/// `[1, D, H, W]` with intensities mapped to [0, 1].
pub fn build_3d_samples<T: Element>(
    cases: &[CaseData],
    modality: Modality,
    opts: &SampleOptions,
) -> Result<SampleSet<T>> {
    let mut samples = Vec::with_capacity(cases.len());
    for case in cases {
        let voxels = case.volumes.get(&modality).ok_or_else(|| {
            Error::data(format!(
                "case {} is missing its {modality} volume",
                case.case_id
            ))
        })?;
        let vol = prepare_volume::<T>(voxels, opts)?;
        let mut dims = vec![1usize];
        dims.extend_from_slice(vol.dims());
        samples.push(Sample {
            case_id: case.case_id.clone(),
            x: vol.reshaped(dims)?,
            label: case.label,
        });
    }
    Ok(SampleSet { samples })
}

/// 2D path: sliding windows of `window` adjacent T1w slices stacked as
/// channels, each sample inheriting the case label.
pub fn build_2d_samples<T: Element>(
    cases: &[CaseData],
    window: usize,
    opts: &SampleOptions,
) -> Result<SampleSet<T>> {
    let mut samples = Vec::new();
    for case in cases {
        let voxels = case.volumes.get(&Modality::T1w).ok_or_else(|| {
            Error::data(format!("case {} is missing its T1w volume", case.case_id))
        })?;
        let vol = prepare_volume::<T>(voxels, opts)?;
        for slice_stack in extract_slices(&vol, window)? {
            samples.push(Sample {
                case_id: case.case_id.clone(),
                x: slice_stack,
                label: case.label,
            });
        }
    }
    Ok(SampleSet { samples })
}
