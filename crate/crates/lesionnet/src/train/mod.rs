//! Training: binary cross-entropy, optimizer steps, early stopping on
//! validation AUC, and the epoch loop.

pub mod early_stop;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use early_stop::{Decision, EarlyStopping, MIN_DELTA};
pub use loss::{bce_loss, bce_loss_var, bce_with_logits_var, LossBatch, CLAMP};
pub use optim::{Optimizer, OptimizerKind};
pub use trainer::{evaluate_auc, score_cases, train, CaseScore, EpochRecord, History, TrainConfig};
