//! Early stopping on validation AUC with best-weight restoration.

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{Element, Tensor};

/// Improvements smaller than this do not reset the patience counter.
pub const MIN_DELTA: f64 = 1e-6;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Decision {
    Continue,
    Stop,
}

/// Tracks the best validation AUC seen so far, snapshots the weights that
/// produced it, and stops after `patience` epochs without improvement.
pub struct EarlyStopping<T: Element> {
    patience: usize,
    best_value: Option<f64>,
    best_epoch: usize,
    best_weights: Option<Vec<(String, Tensor<T>)>>,
    epochs_since_improve: usize,
}

impl<T: Element> EarlyStopping<T> {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_value: None,
            best_epoch: 0,
            best_weights: None,
            epochs_since_improve: 0,
        }
    }

    /// Record one epoch's validation AUC. An improvement of at least
    /// [`MIN_DELTA`] over the best resets the counter and snapshots the
    /// model; a plateau exactly at the best counts as no improvement.
    pub fn update(&mut self, epoch: usize, val_auc: f64, model: &Model<T>) -> Decision {
        let improved = match self.best_value {
            None => true,
            Some(best) => val_auc - best >= MIN_DELTA,
        };
        if improved {
            self.best_value = Some(val_auc);
            self.best_epoch = epoch;
            self.best_weights = Some(model.state());
            self.epochs_since_improve = 0;
        } else {
            self.epochs_since_improve += 1;
        }
        if self.epochs_since_improve >= self.patience {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }

    /// Best value and the epoch that produced it.
    pub fn best(&self) -> Option<(f64, usize)> {
        self.best_value.map(|v| (v, self.best_epoch))
    }

    /// Put the best snapshot back into the model (bit-exact).
    pub fn restore(&self, model: &mut Model<T>) -> Result<()> {
        let weights = self
            .best_weights
            .as_ref()
            .ok_or_else(|| Error::invalid("no best weights recorded yet"))?;
        model.load_state(weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_efficientnet, Model, ScaledVariant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model() -> Model<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let variant = ScaledVariant::custom(0.25, 0.5).unwrap();
        Model::EfficientNet(
            build_efficientnet(2, &variant, 1, &[8, 8], &mut rng).unwrap(),
        )
    }

    #[test]
    fn improving_sequence_never_stops() {
        let model = tiny_model();
        let mut es = EarlyStopping::new(2);
        for (epoch, auc) in [0.5, 0.6, 0.7].into_iter().enumerate() {
            assert_eq!(es.update(epoch, auc, &model), Decision::Continue);
        }
        assert_eq!(es.best().unwrap(), (0.7, 2));
    }

    #[test]
    fn plateau_stops_after_patience_and_restores_best() {
        let mut model = tiny_model();
        let mut es = EarlyStopping::new(2);
        assert_eq!(es.update(0, 0.7, &model), Decision::Continue);
        let best_state = model.state();

        // perturb the weights to mimic further training
        model.visit_mut(&mut |_, _, t| {
            for v in t.data_mut() {
                *v += 1.0;
            }
        });

        assert_eq!(es.update(1, 0.6, &model), Decision::Continue);
        assert_eq!(es.update(2, 0.6, &model), Decision::Stop);

        es.restore(&mut model).unwrap();
        for ((na, a), (nb, b)) in model.state().iter().zip(&best_state) {
            assert_eq!(na, nb);
            assert_eq!(a.data(), b.data(), "weights for {na} not restored");
        }
    }

    #[test]
    fn exact_tie_counts_as_no_improvement() {
        let model = tiny_model();
        let mut es = EarlyStopping::new(1);
        assert_eq!(es.update(0, 0.8, &model), Decision::Continue);
        assert_eq!(es.update(1, 0.8, &model), Decision::Stop);
        assert_eq!(es.best().unwrap(), (0.8, 0));
    }

    #[test]
    fn best_value_is_nondecreasing() {
        let model = tiny_model();
        let mut es = EarlyStopping::new(10);
        let sequence = [0.5, 0.4, 0.65, 0.6, 0.9, 0.2];
        let mut best_seen = f64::NEG_INFINITY;
        for (epoch, auc) in sequence.into_iter().enumerate() {
            es.update(epoch, auc, &model);
            let (best, _) = es.best().unwrap();
            assert!(best >= best_seen);
            best_seen = best;
        }
        assert_eq!(best_seen, 0.9);
    }
}
