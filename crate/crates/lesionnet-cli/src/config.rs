//! Run configuration: defaults mirror the training setup table (Adam,
//! learning rate 0.0001, EfficientNet B0 backbone, BCE loss, AUC metric),
//! overridable by a key=value config file, then flags, then the
//! LESIONNET_SEED environment variable for the seed.

use std::path::Path;
use std::str::FromStr;

use lesionnet::data::{Modality, SampleOptions};
use lesionnet::error::{Error, Result};
use lesionnet::model::{
    build_efficientnet, build_multiscale_efficientnet, Model, ScaledVariant,
};
use lesionnet::train::OptimizerKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SEED_ENV: &str = "LESIONNET_SEED";

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ModelKind {
    Eff3d,
    Multiscale,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eff3d" => Ok(ModelKind::Eff3d),
            "multiscale" => Ok(ModelKind::Multiscale),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?} (expected eff3d or multiscale)"
            ))),
        }
    }
}

/// Everything a training or evaluation run needs.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelKind,
    pub variant: ScaledVariant,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub modality: Modality,
    pub window: usize,
    pub augment: bool,
    pub resize: Option<(usize, usize)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Eff3d,
            variant: ScaledVariant::b0(),
            optimizer: OptimizerKind::adam(),
            lr: 1e-4,
            epochs: 100,
            batch_size: 4,
            patience: 10,
            seed: 0,
            modality: Modality::Flair,
            window: 3,
            augment: true,
            resize: None,
        }
    }
}

/// Unresolved overrides from flags or a config file; `None` leaves the
/// default in place.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub variant: Option<String>,
    pub width: Option<f64>,
    pub depth: Option<f64>,
    pub optimizer: Option<String>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub modality: Option<String>,
    pub window: Option<usize>,
    pub augment: Option<bool>,
    pub resize: Option<usize>,
}

impl Overrides {
    /// Later sources win field by field.
    pub fn merge(mut self, later: Overrides) -> Overrides {
        macro_rules! take {
            ($($f:ident),*) => { $( if later.$f.is_some() { self.$f = later.$f; } )* };
        }
        take!(
            model, variant, width, depth, optimizer, lr, epochs, batch_size, patience, seed,
            modality, window, augment, resize
        );
        self
    }

    /// Parse a `key=value` config file (one per line, `#` comments).
    pub fn from_file(path: &Path) -> Result<Overrides> {
        let text = std::fs::read_to_string(path)?;
        let mut out = Overrides::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "config line {}: expected key=value, got {line:?}",
                    idx + 1
                ))
            })?;
            let value = value.trim();
            let bad = |what: &str| {
                Error::InvalidArgument(format!("config line {}: bad {what} {value:?}", idx + 1))
            };
            match key.trim() {
                "model" => out.model = Some(value.to_string()),
                "variant" => out.variant = Some(value.to_string()),
                "width" => out.width = Some(value.parse().map_err(|_| bad("width"))?),
                "depth" => out.depth = Some(value.parse().map_err(|_| bad("depth"))?),
                "optimizer" => out.optimizer = Some(value.to_string()),
                "lr" => out.lr = Some(value.parse().map_err(|_| bad("lr"))?),
                "epochs" => out.epochs = Some(value.parse().map_err(|_| bad("epochs"))?),
                "batch_size" => {
                    out.batch_size = Some(value.parse().map_err(|_| bad("batch_size"))?)
                }
                "patience" => out.patience = Some(value.parse().map_err(|_| bad("patience"))?),
                "seed" => out.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "modality" => out.modality = Some(value.to_string()),
                "window" => out.window = Some(value.parse().map_err(|_| bad("window"))?),
                "augment" => out.augment = Some(value.parse().map_err(|_| bad("augment"))?),
                "resize" => out.resize = Some(value.parse().map_err(|_| bad("resize"))?),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "config line {}: unknown key {other:?}",
                        idx + 1
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Resolve against the defaults. The seed environment variable, when
    /// set, has the final word on the seed.
    pub fn resolve(self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(m) = &self.model {
            cfg.model = m.parse()?;
        }
        match self.variant.as_deref() {
            None | Some("b0") => cfg.variant = ScaledVariant::b0(),
            Some("b7") => cfg.variant = ScaledVariant::b7(),
            Some("custom") => {
                let (Some(w), Some(d)) = (self.width, self.depth) else {
                    return Err(Error::InvalidArgument(
                        "custom variant needs --width and --depth".to_string(),
                    ));
                };
                cfg.variant = ScaledVariant::custom(w, d)?;
            }
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "unknown variant {other:?} (expected b0, b7, custom)"
                )))
            }
        }
        if let Some(o) = &self.optimizer {
            cfg.optimizer = o.parse()?;
        }
        if let Some(lr) = self.lr {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::InvalidArgument(format!("bad learning rate {lr}")));
            }
            cfg.lr = lr;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(p) = self.patience {
            cfg.patience = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.modality {
            cfg.modality = m.parse()?;
        }
        if let Some(w) = self.window {
            cfg.window = w;
        }
        if let Some(a) = self.augment {
            cfg.augment = a;
        }
        if let Some(r) = self.resize {
            cfg.resize = Some((r, r));
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = seed.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad {SEED_ENV} value {seed:?}"))
            })?;
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            resize: self.resize,
            normalization: Default::default(),
        }
    }

    /// Build a fresh model for the given per-sample input dims
    /// (`[C, spatial...]`).
    pub fn build_model(&self, sample_dims: &[usize]) -> Result<Model<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.model {
            ModelKind::Eff3d => Ok(Model::EfficientNet(build_efficientnet(
                3,
                &self.variant,
                sample_dims[0],
                &sample_dims[1..],
                &mut rng,
            )?)),
            ModelKind::Multiscale => Ok(Model::Multiscale(build_multiscale_efficientnet(
                &self.variant,
                &sample_dims[1..],
                &mut rng,
            )?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_reference_training_setup() {
        // Adam, learning rate 0.0001, B0 backbone, 100 epochs
        let cfg = Overrides::default().resolve().unwrap();
        assert_eq!(cfg.optimizer.name(), "adam");
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.variant, ScaledVariant::b0());
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.patience, 10);
        assert!(cfg.augment);
    }

    #[test]
    fn flags_win_over_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "lr=0.5\nepochs=3\n").unwrap();
        let from_file = Overrides::from_file(&path).unwrap();
        let flags = Overrides {
            lr: Some(0.25),
            ..Default::default()
        };
        let cfg = from_file.merge(flags).resolve().unwrap();
        assert_eq!(cfg.lr, 0.25);
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn unknown_config_keys_are_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "epochs=3\nbogus=1\n").unwrap();
        let err = Overrides::from_file(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got: {err}");
    }
}
