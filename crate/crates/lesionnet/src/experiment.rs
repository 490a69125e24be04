//! Experiment protocols: the four-optimizer comparison and the
//! EfficientNet-3D vs multiscale benchmark, both on one fixed case-level
//! split with identical AUC code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::dataset::{build_2d_samples, build_3d_samples, CaseData, SampleOptions, SampleSet};
use crate::data::mvol::Modality;
use crate::data::split::split;
use crate::error::{Error, Result};
use crate::model::{build_efficientnet, build_multiscale_efficientnet, Model, ScaledVariant};
use crate::train::{train, History, OptimizerKind, TrainConfig};
use crate::tensor::Element;

/// Settings shared by every run of a protocol.
#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// Learning rate for every run; `None` picks each optimizer's
    /// productive default.
    pub lr: Option<f64>,
    /// Modality feeding the 3D path.
    pub modality: Modality,
    pub variant: ScaledVariant,
    pub augment: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            seed: 7,
            epochs: 40,
            batch_size: 4,
            patience: 10,
            lr: None,
            modality: Modality::Flair,
            variant: ScaledVariant::custom(0.25, 0.5).expect("static multipliers"),
            augment: false,
        }
    }
}

/// Train/validation sample pairs for one protocol run.
pub struct PreparedSplit<T: Element> {
    pub train: SampleSet<T>,
    pub val: SampleSet<T>,
}

/// Case-level split applied to an already-built sample set.
pub fn split_samples<T: Element>(
    samples: &SampleSet<T>,
    seed: u64,
) -> Result<PreparedSplit<T>> {
    let ids = samples.case_ids();
    let index = split(&ids, seed)?;
    Ok(PreparedSplit {
        train: samples.subset(&index.train_ids),
        val: samples.subset(&index.val_ids),
    })
}

fn volume_dims(cases: &[CaseData], modality: Modality) -> Result<Vec<usize>> {
    let first = cases.first().ok_or_else(|| Error::data("no cases"))?;
    let vol = first
        .volumes
        .get(&modality)
        .ok_or_else(|| Error::data(format!("case {} lacks {modality}", first.case_id)))?;
    Ok(vol.dims().to_vec())
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub optimizer: String,
    pub val_auc: f64,
    pub best_epoch: usize,
    pub epochs_ran: usize,
}

/// Run the same 3D model/data/split under each of the four optimizers,
/// keeping each run's best-validation-AUC checkpoint.
pub fn optimizer_sweep(cases: &[CaseData], cfg: &ProtocolConfig) -> Result<Vec<SweepRow>> {
    let samples: SampleSet<f32> =
        build_3d_samples(cases, cfg.modality, &SampleOptions::default())?;
    let prepared = split_samples(&samples, cfg.seed)?;
    let dims = volume_dims(cases, cfg.modality)?;

    let kinds = [
        OptimizerKind::adam(),
        OptimizerKind::adadelta(),
        OptimizerKind::Sgd,
        OptimizerKind::rmsprop(),
    ];
    let mut rows = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = Model::EfficientNet(build_efficientnet::<f32>(
            3,
            &cfg.variant,
            1,
            &dims,
            &mut rng,
        )?);
        let train_cfg = TrainConfig {
            optimizer: kind,
            lr: cfg.lr.unwrap_or_else(|| kind.default_lr()),
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            patience: cfg.patience,
            seed: cfg.seed,
            augment: cfg.augment,
            restore_best: true,
        };
        let history = train(&mut model, &prepared.train, &prepared.val, &train_cfg)?;
        rows.push(SweepRow {
            optimizer: kind.name().to_string(),
            val_auc: history.best_val_auc,
            best_epoch: history.best_epoch,
            epochs_ran: history.records.len(),
        });
    }
    Ok(rows)
}

/// Four-row comparison table, AUC to five decimals.
pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("optimizer  val_auc  best_epoch\n");
    for r in rows {
        out.push_str(&format!(
            "{:<9}  {:.5}  {}\n",
            r.optimizer, r.val_auc, r.best_epoch
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct BenchmarkRow {
    pub method: String,
    pub val_auc: f64,
    pub param_count: usize,
}

/// Train the 3D EfficientNet and the multiscale model on the same case
/// split and evaluate both with the same AUC code. No ordering between the
/// two is implied.
pub fn benchmark(cases: &[CaseData], cfg: &ProtocolConfig) -> Result<Vec<BenchmarkRow>> {
    let adam = OptimizerKind::adam();
    let train_cfg = TrainConfig {
        optimizer: adam,
        lr: cfg.lr.unwrap_or_else(|| adam.default_lr()),
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        seed: cfg.seed,
        augment: cfg.augment,
        restore_best: true,
    };
    let mut rows = Vec::with_capacity(2);

    // 3D path
    {
        let samples: SampleSet<f32> =
            build_3d_samples(cases, cfg.modality, &SampleOptions::default())?;
        let prepared = split_samples(&samples, cfg.seed)?;
        let dims = volume_dims(cases, cfg.modality)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model =
            Model::EfficientNet(build_efficientnet::<f32>(3, &cfg.variant, 1, &dims, &mut rng)?);
        let params = model.param_count();
        let history = train(&mut model, &prepared.train, &prepared.val, &train_cfg)?;
        rows.push(BenchmarkRow {
            method: "efficientnet-3d".to_string(),
            val_auc: history.best_val_auc,
            param_count: params,
        });
    }

    // 2D multiscale path over T1w slice windows
    {
        let samples: SampleSet<f32> = build_2d_samples(cases, 3, &SampleOptions::default())?;
        let prepared = split_samples(&samples, cfg.seed)?;
        let dims = samples.sample_dims()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = Model::Multiscale(build_multiscale_efficientnet::<f32>(
            &cfg.variant,
            &dims[1..],
            &mut rng,
        )?);
        let params = model.param_count();
        let history = train(&mut model, &prepared.train, &prepared.val, &train_cfg)?;
        rows.push(BenchmarkRow {
            method: "multiscale-efficientnet".to_string(),
            val_auc: history.best_val_auc,
            param_count: params,
        });
    }
    Ok(rows)
}

/// Two-row method comparison table, AUC to five decimals.
pub fn format_benchmark_table(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("method                   val_auc  params\n");
    for r in rows {
        out.push_str(&format!(
            "{:<23}  {:.5}  {}\n",
            r.method, r.val_auc, r.param_count
        ));
    }
    out
}

/// Shorthand for the overfit experiment: train on the tiny 3D variant and
/// report the history (the caller asserts on train/val AUC).
pub fn overfit_run(
    cases: &[CaseData],
    cfg: &ProtocolConfig,
    lr: f64,
) -> Result<(Model<f32>, PreparedSplit<f32>, History)> {
    let samples: SampleSet<f32> =
        build_3d_samples(cases, cfg.modality, &SampleOptions::default())?;
    let prepared = split_samples(&samples, cfg.seed)?;
    let dims = volume_dims(cases, cfg.modality)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model =
        Model::EfficientNet(build_efficientnet::<f32>(3, &cfg.variant, 1, &dims, &mut rng)?);
    let train_cfg = TrainConfig {
        optimizer: OptimizerKind::adam(),
        lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        seed: cfg.seed,
        augment: cfg.augment,
        // an overfitting probe wants the final-epoch weights, not the
        // best-validation snapshot
        restore_best: false,
    };
    let history = train(&mut model, &prepared.train, &prepared.val, &train_cfg)?;
    Ok((model, prepared, history))
}
