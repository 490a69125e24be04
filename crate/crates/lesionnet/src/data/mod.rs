//! Data pipeline: volume I/O, label ingestion, preprocessing, augmentation,
//! case-level splitting, synthetic data, and the four-modality ensemble.

pub mod augment;
pub mod dataset;
pub mod ensemble;
pub mod labels;
pub mod mvol;
pub mod preprocess;
pub mod split;
pub mod synthetic;

pub use augment::{augment, Augmentation};
pub use dataset::{
    build_2d_samples, build_3d_samples, load_dataset, CaseData, Sample, SampleOptions, SampleSet,
};
pub use ensemble::{ensemble_predict, EnsembleWeights};
pub use labels::{load_labels, save_labels};
pub use mvol::{load_volume, save_volume, Modality, VolumeRecord};
pub use preprocess::{extract_slices, rescale, resize_bilinear, Normalization};
pub use split::{split, SplitIndex};
pub use synthetic::{gen_synthetic, synthesize, SyntheticConfig};
