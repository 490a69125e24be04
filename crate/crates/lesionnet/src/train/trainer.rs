//! The epoch loop: shuffle, augment, forward, loss, backward, optimizer
//! step, validation AUC, early stopping.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::augment::augment;
use crate::data::dataset::SampleSet;
use crate::error::{Error, Result};
use crate::metrics::{auc_wmw, ScoredDataset, TieMode};
use crate::model::Model;
use crate::nn::{Forward, ParamKind};
use crate::tensor::ops::sigmoid_scalar;
use crate::tensor::{Element, Tape, Tensor};
use crate::train::early_stop::{Decision, EarlyStopping};
use crate::train::loss::bce_with_logits_var;
use crate::train::optim::{Optimizer, OptimizerKind};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub augment: bool,
    /// Put the best-validation-AUC snapshot back into the model when
    /// training ends. Disabled by overfitting experiments that want the
    /// final-epoch weights.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::adam(),
            lr: 1e-4,
            epochs: 100,
            batch_size: 4,
            patience: 10,
            seed: 0,
            augment: true,
            restore_best: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
}

/// Per-epoch curve plus the early-stopping outcome.
#[derive(Clone, Debug)]
pub struct History {
    pub optimizer: String,
    pub records: Vec<EpochRecord>,
    pub best_val_auc: f64,
    pub best_epoch: usize,
}

impl History {
    /// `epoch,train_loss,val_auc` rows under a config comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# optimizer={} best_epoch={} best_val_auc={:.5}\n",
            self.optimizer, self.best_epoch, self.best_val_auc
        );
        out.push_str("epoch,train_loss,val_auc\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.6},{:.6}\n", r.epoch, r.train_loss, r.val_auc));
        }
        out
    }
}

/// Case-level score: mean sigmoid probability over a case's samples.
#[derive(Clone, Debug)]
pub struct CaseScore {
    pub case_id: String,
    pub prob: f64,
    pub label: u8,
}

/// Run the model over a sample set in inference mode and aggregate per case.
pub fn score_cases<T: Element>(model: &Model<T>, set: &SampleSet<T>) -> Result<Vec<CaseScore>> {
    if set.is_empty() {
        return Err(Error::data("cannot score an empty sample set"));
    }
    let mut sums: HashMap<&str, (f64, usize, u8)> = HashMap::new();
    let order = set.case_ids();
    for chunk in set.samples.chunks(16) {
        let xs: Vec<Tensor<T>> = chunk.iter().map(|s| s.x.clone()).collect();
        let batch = Tensor::stack(&xs)?;
        let logits = model.logits(&batch)?;
        for (sample, &z) in chunk.iter().zip(logits.data()) {
            let p = sigmoid_scalar(z.as_f64());
            let entry = sums.entry(sample.case_id.as_str()).or_insert((0.0, 0, sample.label));
            entry.0 += p;
            entry.1 += 1;
        }
    }
    Ok(order
        .iter()
        .map(|id| {
            let (total, count, label) = sums[id.as_str()];
            CaseScore {
                case_id: id.clone(),
                prob: total / count as f64,
                label,
            }
        })
        .collect())
}

/// Case-level AUC (half-credit ties) of the model on a sample set.
pub fn evaluate_auc<T: Element>(model: &Model<T>, set: &SampleSet<T>) -> Result<f64> {
    let scores = score_cases(model, set)?;
    let pairs: Vec<(f64, u8)> = scores.iter().map(|s| (s.prob, s.label)).collect();
    Ok(auc_wmw(&ScoredDataset::from_pairs(&pairs)?, TieMode::Half))
}

fn mix_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9E3779B97F4A7C15u64;
    for &p in parts {
        z ^= p.wrapping_add(0x9E3779B97F4A7C15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
    }
    z
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Train in place. Returns the per-epoch history; unless
/// `cfg.restore_best` is off, the model holds the best-validation-AUC
/// weights on return.
pub fn train<T: Element>(
    model: &mut Model<T>,
    train_set: &SampleSet<T>,
    val_set: &SampleSet<T>,
    cfg: &TrainConfig,
) -> Result<History> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::data("empty train or validation split"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invalid("batch size and epoch count must be >= 1"));
    }
    let mut optimizer = Optimizer::<T>::new(cfg.optimizer, cfg.lr);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut history = Vec::new();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut epoch_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, epoch as u64]));
        for i in (1..order.len()).rev() {
            order.swap(i, epoch_rng.gen_range(0..=i));
        }

        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let mut xs = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let sample = &train_set.samples[idx];
                let x = if cfg.augment {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
                        cfg.seed,
                        fnv1a(&sample.case_id),
                        idx as u64,
                        epoch as u64,
                    ]));
                    augment(&sample.x, &mut rng)?
                } else {
                    sample.x.clone()
                };
                xs.push(x);
                labels.push(sample.label);
            }
            let batch = Tensor::stack(&xs)?;

            let tape = Tape::new();
            let mut fc = Forward::new(&tape, true);
            let input = fc.input(batch);
            let logits = model.forward(&mut fc, input)?;
            let loss = bce_with_logits_var(logits, &labels)?;
            loss_sum += loss.value().item()?.as_f64() * chunk.len() as f64;

            let grads = tape.backward(loss)?;
            let mut by_name: HashMap<String, Tensor<T>> = HashMap::new();
            for (name, var) in fc.bindings() {
                by_name.insert(name.clone(), grads.grad(*var));
            }
            drop(tape);

            optimizer.next_step();
            let mut step_err: Option<Error> = None;
            model.visit_mut(&mut |name, kind, t| {
                if step_err.is_some() || kind != ParamKind::Weight {
                    return;
                }
                match by_name.get(name) {
                    Some(g) => {
                        if let Err(e) = optimizer.update(name, t, g) {
                            step_err = Some(e);
                        }
                    }
                    None => {
                        step_err = Some(Error::Autodiff(format!(
                            "parameter {name} was never bound during the forward pass"
                        )));
                    }
                }
            });
            if let Some(e) = step_err {
                return Err(e);
            }
        }

        let train_loss = loss_sum / train_set.len() as f64;
        let val_auc = evaluate_auc(model, val_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_auc,
        });
        if stopper.update(epoch, val_auc, model) == Decision::Stop {
            break;
        }
    }

    if cfg.restore_best {
        stopper.restore(model)?;
    }
    let (best_val_auc, best_epoch) = stopper.best().expect("at least one epoch ran");
    Ok(History {
        optimizer: cfg.optimizer.name().to_string(),
        records: history,
        best_val_auc,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::{Sample, SampleSet};
    use crate::model::{build_efficientnet, ScaledVariant};
    use rand::SeedableRng;

    fn toy_sets(n: usize) -> (SampleSet<f32>, SampleSet<f32>) {
        // bright-vs-dark 2D squares, trivially separable; the last four
        // cases (two of each label) form the validation split
        let mut train = SampleSet::default();
        let mut val = SampleSet::default();
        for i in 0..n {
            let label = (i % 2) as u8;
            let base = if label == 1 { 0.8 } else { 0.2 };
            let x = Tensor::<f32>::full(vec![1, 8, 8], base as f32 + 0.01 * (i % 3) as f32);
            let sample = Sample {
                case_id: format!("{i:04}"),
                x,
                label,
            };
            if i + 4 >= n {
                val.samples.push(sample);
            } else {
                train.samples.push(sample);
            }
        }
        (train, val)
    }

    fn tiny_model(seed: u64) -> Model<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let variant = ScaledVariant::custom(0.25, 0.5).unwrap();
        Model::EfficientNet(build_efficientnet(2, &variant, 1, &[8, 8], &mut rng).unwrap())
    }

    #[test]
    fn zero_lr_keeps_loss_constant() {
        let (train_set, val_set) = toy_sets(16);
        let mut model = tiny_model(3);
        let before = model.state();
        // full-batch and no augmentation so each epoch sees identical inputs
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 4,
            batch_size: train_set.len(),
            augment: false,
            patience: 10,
            seed: 5,
            ..Default::default()
        };
        let history = train(&mut model, &train_set, &val_set, &cfg).unwrap();
        // nothing was learned: weights are bitwise unchanged and the loss is
        // constant up to batch-order summation noise in the BN statistics
        for ((name, a), (_, b)) in model.state().iter().zip(&before) {
            if !name.contains("running_") {
                assert_eq!(a.data(), b.data(), "weights moved at {name} with lr = 0");
            }
        }
        let first = history.records[0].train_loss;
        for r in &history.records {
            assert!(
                (r.train_loss - first).abs() < 1e-3,
                "loss drifted with lr = 0: {} vs {first}",
                r.train_loss
            );
        }
    }

    #[test]
    fn identical_seeds_identical_history() {
        let (train_set, val_set) = toy_sets(16);
        let cfg = TrainConfig {
            lr: 1e-3,
            epochs: 3,
            batch_size: 4,
            seed: 11,
            ..Default::default()
        };
        let mut m1 = tiny_model(7);
        let h1 = train(&mut m1, &train_set, &val_set, &cfg).unwrap();
        let mut m2 = tiny_model(7);
        let h2 = train(&mut m2, &train_set, &val_set, &cfg).unwrap();
        assert_eq!(h1.records, h2.records);
        // and the trained weights agree bitwise
        for ((na, a), (_, b)) in m1.state().iter().zip(m2.state()) {
            assert_eq!(a.data(), b.data(), "weights diverged at {na}");
        }
    }

    #[test]
    fn empty_split_rejected() {
        let (train_set, _) = toy_sets(8);
        let mut model = tiny_model(1);
        let empty = SampleSet::default();
        assert!(train(&mut model, &train_set, &empty, &TrainConfig::default()).is_err());
        assert!(train(&mut model, &empty, &train_set, &TrainConfig::default()).is_err());
    }

    #[test]
    fn history_csv_records_the_optimizer() {
        let history = History {
            optimizer: "rmsprop".to_string(),
            records: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_auc: 0.75,
            }],
            best_val_auc: 0.75,
            best_epoch: 1,
        };
        let csv = history.to_csv();
        assert!(csv.starts_with("# optimizer=rmsprop"));
        assert!(csv.contains("epoch,train_loss,val_auc"));
        assert!(csv.contains("1,0.500000,0.750000"));
    }
}
