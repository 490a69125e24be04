//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lesionnet::data::{
    build_2d_samples, build_3d_samples, load_dataset, load_volume, rescale, EnsembleWeights,
    Modality, SampleSet, SyntheticConfig,
};
use lesionnet::error::{Error, Result};
use lesionnet::experiment::{
    benchmark, format_benchmark_table, format_sweep_table, optimizer_sweep, split_samples,
    ProtocolConfig,
};
use lesionnet::metrics::{auc_wmw, ScoredDataset, TieMode};
use lesionnet::model::{load_weights, save_weights, Model};
use lesionnet::tensor::{ops::sigmoid_scalar, Tensor};
use lesionnet::train::{score_cases, train, TrainConfig};

use crate::config::{ModelKind, RunConfig};

pub fn cmd_synth(cfg: &SyntheticConfig, out_dir: &Path) -> Result<()> {
    lesionnet::data::gen_synthetic(cfg, out_dir)?;
    println!(
        "wrote {} volumes and labels.csv to {}",
        cfg.n_cases * 4,
        out_dir.display()
    );
    Ok(())
}

fn build_samples(cfg: &RunConfig, data_dir: &Path) -> Result<SampleSet<f32>> {
    let cases = load_dataset(data_dir)?;
    match cfg.model {
        ModelKind::Eff3d => build_3d_samples(&cases, cfg.modality, &cfg.sample_options()),
        ModelKind::Multiscale => build_2d_samples(&cases, cfg.window, &cfg.sample_options()),
    }
}

pub fn cmd_train(cfg: &RunConfig, data_dir: &Path, out_dir: &Path) -> Result<()> {
    let samples = build_samples(cfg, data_dir)?;
    let prepared = split_samples(&samples, cfg.seed)?;
    let mut model = cfg.build_model(&samples.sample_dims()?)?;
    let train_cfg = TrainConfig {
        optimizer: cfg.optimizer,
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        seed: cfg.seed,
        augment: cfg.augment,
        restore_best: true,
    };
    let history = train(&mut model, &prepared.train, &prepared.val, &train_cfg)?;

    std::fs::create_dir_all(out_dir)?;
    save_weights(&model, &out_dir.join("model.lnwt"))?;
    std::fs::write(out_dir.join("history.csv"), history.to_csv())?;
    println!(
        "best validation AUC {:.5} at epoch {} ({} epochs ran)",
        history.best_val_auc,
        history.best_epoch,
        history.records.len()
    );
    Ok(())
}

pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    data_dir: &Path,
    split_mode: &str,
    scores_out: Option<&Path>,
) -> Result<()> {
    let samples = build_samples(cfg, data_dir)?;
    let subset = match split_mode {
        "val" => {
            let prepared = split_samples(&samples, cfg.seed)?;
            prepared.val
        }
        "train" => {
            let prepared = split_samples(&samples, cfg.seed)?;
            prepared.train
        }
        "all" => samples.clone(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (expected val, train, all)"
            )))
        }
    };
    let mut model = cfg.build_model(&samples.sample_dims()?)?;
    load_weights(&mut model, checkpoint)?;

    let scores = score_cases(&model, &subset)?;
    let pairs: Vec<(f64, u8)> = scores.iter().map(|s| (s.prob, s.label)).collect();
    let auc = auc_wmw(&ScoredDataset::from_pairs(&pairs)?, TieMode::Half);
    println!("AUC: {auc:.5}");

    if let Some(path) = scores_out {
        // shortest round-trip float formatting: re-reading the file must
        // reproduce the printed AUC exactly
        let mut out = String::from("case_id,score,label\n");
        for s in &scores {
            out.push_str(&format!("{},{},{}\n", s.case_id, s.prob, s.label));
        }
        std::fs::write(path, out)?;
    }
    Ok(())
}

/// Collect each case's volumes from a directory of `*.mvol` files; labels
/// are not required for prediction.
fn load_prediction_cases(case_dir: &Path) -> Result<BTreeMap<String, BTreeMap<Modality, Tensor<f32>>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(case_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "mvol"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!(
            "no .mvol volumes found in {}",
            case_dir.display()
        )));
    }
    let mut cases: BTreeMap<String, BTreeMap<Modality, Tensor<f32>>> = BTreeMap::new();
    for path in paths {
        let rec = load_volume(&path)?;
        cases
            .entry(rec.case_id.clone())
            .or_default()
            .insert(rec.modality, rec.voxels);
    }
    Ok(cases)
}

pub fn cmd_predict(
    cfg: &RunConfig,
    case_dir: &Path,
    ratio: &EnsembleWeights,
    checkpoints: &BTreeMap<Modality, PathBuf>,
    out: &Path,
) -> Result<()> {
    let weights = ratio.weights();
    let cases = load_prediction_cases(case_dir)?;

    // one model per modality that actually contributes
    let mut models: BTreeMap<Modality, Model<f32>> = BTreeMap::new();
    for (i, modality) in Modality::ALL.into_iter().enumerate() {
        if weights[i] == 0.0 {
            continue;
        }
        let Some(ckpt) = checkpoints.get(&modality) else {
            return Err(Error::InvalidArgument(format!(
                "ensemble weight for {modality} is nonzero but no checkpoint was given \
                 (pass --ckpt-{} or a zero weight)",
                modality.suffix()
            )));
        };
        let dims = cases
            .values()
            .next()
            .and_then(|v| v.get(&modality))
            .ok_or_else(|| Error::Data(format!("case directory lacks {modality} volumes")))?
            .dims()
            .to_vec();
        let mut model_dims = vec![1usize];
        model_dims.extend_from_slice(&dims);
        let mut model = cfg.build_model(&model_dims)?;
        load_weights(&mut model, ckpt)?;
        models.insert(modality, model);
    }

    let mut lines = format!("# ratio={}\ncase_id,probability\n", format_ratio(&weights));
    for (case_id, volumes) in &cases {
        let mut probs = [0.0f64; 4];
        for (i, modality) in Modality::ALL.into_iter().enumerate() {
            if weights[i] == 0.0 {
                continue;
            }
            let Some(voxels) = volumes.get(&modality) else {
                return Err(Error::Data(format!(
                    "case {case_id} is missing its {modality} volume"
                )));
            };
            let vol = rescale(voxels)?;
            let mut dims = vec![1usize, 1usize];
            dims.extend_from_slice(voxels.dims());
            let x = vol.reshaped(dims)?;
            let logits = models[&modality].logits(&x)?;
            probs[i] = sigmoid_scalar(logits.data()[0]) as f64;
        }
        let prob = lesionnet::data::ensemble_predict(probs, ratio)?;
        lines.push_str(&format!("{case_id},{prob:.6}\n"));
    }
    std::fs::write(out, &lines)?;
    println!("wrote {} predictions to {}", cases.len(), out.display());
    Ok(())
}

fn format_ratio(weights: &[f64; 4]) -> String {
    weights
        .iter()
        .map(|w| format!("{w:.4}"))
        .collect::<Vec<_>>()
        .join(":")
}

fn protocol_from(cfg: &RunConfig, lr: Option<f64>) -> ProtocolConfig {
    ProtocolConfig {
        seed: cfg.seed,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        lr,
        modality: cfg.modality,
        variant: cfg.variant.clone(),
        augment: cfg.augment,
    }
}

pub fn cmd_sweep(cfg: &RunConfig, data_dir: &Path, out: Option<&Path>) -> Result<()> {
    let cases = load_dataset(data_dir)?;
    // per-optimizer productive learning rates unless one was forced
    let lr = if cfg.lr == RunConfig::default().lr { None } else { Some(cfg.lr) };
    let rows = optimizer_sweep(&cases, &protocol_from(cfg, lr))?;
    let table = format_sweep_table(&rows);
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(path, table)?;
    }
    Ok(())
}

pub fn cmd_benchmark(cfg: &RunConfig, data_dir: &Path, out: Option<&Path>) -> Result<()> {
    let cases = load_dataset(data_dir)?;
    let lr = if cfg.lr == RunConfig::default().lr { None } else { Some(cfg.lr) };
    let rows = benchmark(&cases, &protocol_from(cfg, lr))?;
    let table = format_benchmark_table(&rows);
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(path, table)?;
    }
    Ok(())
}
