//! Binary cross-entropy: the probability-space form with its 1e-7 clamp, and
//! the fused logit-space form the training loop uses so saturated sigmoids
//! never produce NaN.

use crate::error::{Error, Result};
use crate::tensor::ops::sigmoid_scalar;
use crate::tensor::{Element, Tensor, Var};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before any log.
pub const CLAMP: f64 = 1e-7;

/// Labels and predicted probabilities for one batch.
#[derive(Clone, Debug)]
pub struct LossBatch<T> {
    y: Vec<u8>,
    p: Vec<T>,
}

impl<T: Element> LossBatch<T> {
    pub fn new(y: Vec<u8>, p: Vec<T>) -> Result<Self> {
        if y.is_empty() || y.len() != p.len() {
            return Err(Error::invalid(format!(
                "loss batch needs matching nonempty label/probability lists, got {} and {}",
                y.len(),
                p.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&l| l > 1) {
            return Err(Error::data(format!("label must be 0 or 1, got {bad}")));
        }
        Ok(LossBatch { y, p })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn clamp<T: Element>(p: T) -> T {
    let lo = T::from_f64(CLAMP);
    let hi = T::one() - lo;
    p.max(lo).min(hi)
}

/// Mean of `-[y log p + (1 - y) log(1 - p)]` over the batch.
pub fn bce_loss<T: Element>(batch: &LossBatch<T>) -> T {
    let n = T::from_f64(batch.len() as f64);
    let mut total = T::zero();
    for (&y, &p) in batch.y.iter().zip(&batch.p) {
        let p = clamp(p);
        let term = if y == 1 { p.ln() } else { (T::one() - p).ln() };
        total = total - term;
    }
    total / n
}

/// Tape op over probabilities. The gradient passes through only where the
/// clamp is inactive.
pub fn bce_loss_var<'t, T: Element>(p: Var<'t, T>, labels: &[u8]) -> Result<Var<'t, T>> {
    let pv = p.value();
    let batch = LossBatch::new(labels.to_vec(), pv.data().to_vec())?;
    let value = Tensor::scalar(bce_loss(&batch));
    let labels = labels.to_vec();
    let n = T::from_f64(labels.len() as f64);
    Var::custom(
        p.tape_ref(),
        value,
        vec![p],
        Box::new(move |dy| {
            let g = dy.item()?;
            let lo = T::from_f64(CLAMP);
            let hi = T::one() - lo;
            let mut grad = Vec::with_capacity(labels.len());
            for (&y, &raw) in labels.iter().zip(pv.data()) {
                if raw < lo || raw > hi {
                    grad.push(T::zero()); // clamp region: flat
                    continue;
                }
                let p = clamp(raw);
                let d = if y == 1 {
                    -(T::one() / p)
                } else {
                    T::one() / (T::one() - p)
                };
                grad.push(g * d / n);
            }
            Ok(vec![Some(Tensor::from_vec(pv.shape().clone(), grad)?)])
        }),
    )
}

/// Tape op over raw logits: numerically stable
/// `mean(max(z, 0) - z*y + ln(1 + exp(-|z|)))`, gradient `(sigmoid(z) - y)/n`.
pub fn bce_with_logits_var<'t, T: Element>(z: Var<'t, T>, labels: &[u8]) -> Result<Var<'t, T>> {
    let zv = z.value();
    if zv.numel() != labels.len() {
        return Err(Error::shape(format!(
            "{} logits but {} labels",
            zv.numel(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("loss needs a nonempty batch"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::data(format!("label must be 0 or 1, got {bad}")));
    }
    let n = T::from_f64(labels.len() as f64);
    let mut total = T::zero();
    for (&y, &logit) in labels.iter().zip(zv.data()) {
        let yt = T::from_f64(y as f64);
        let term = logit.max(T::zero()) - logit * yt + (T::one() + (-logit.abs()).exp()).ln();
        total = total + term;
    }
    let value = Tensor::scalar(total / n);
    let labels = labels.to_vec();
    Var::custom(
        z.tape_ref(),
        value,
        vec![z],
        Box::new(move |dy| {
            let g = dy.item()?;
            let grad: Vec<T> = labels
                .iter()
                .zip(zv.data())
                .map(|(&y, &logit)| g * (sigmoid_scalar(logit) - T::from_f64(y as f64)) / n)
                .collect();
            Ok(vec![Some(Tensor::from_vec(zv.shape().clone(), grad)?)])
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, Tape};

    #[test]
    fn perfect_prediction_costs_only_the_clamp() {
        let b = LossBatch::new(vec![1], vec![1.0f64]).unwrap();
        let loss = bce_loss(&b);
        assert!(loss > 0.0 && loss < 1.1e-7, "loss = {loss}");
    }

    #[test]
    fn coin_flip_costs_ln_two() {
        let b = LossBatch::new(vec![1, 0], vec![0.5f64, 0.5]).unwrap();
        assert!((bce_loss(&b) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_mistake_costs_log_ten() {
        // -log(0.1) = 2.3025851...
        let b = LossBatch::new(vec![0], vec![0.9f64]).unwrap();
        assert!((bce_loss(&b) + 0.1f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn bad_labels_rejected() {
        assert!(LossBatch::new(vec![2], vec![0.5f64]).is_err());
        assert!(LossBatch::<f64>::new(vec![], vec![]).is_err());
        assert!(LossBatch::new(vec![1, 0], vec![0.5f64]).is_err());
    }

    #[test]
    fn probability_gradient_matches_finite_differences() {
        let labels = [1u8, 0, 1, 0, 1];
        let p = Tensor::<f64>::from_vec(vec![5], vec![0.3, 0.7, 0.9, 0.2, 0.5]).unwrap();
        let err = grad_check(
            move |_t: &Tape<f64>, vars: &[Var<'_, f64>]| bce_loss_var(vars[0], &labels),
            &[p],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "bce gradient error {err}");
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let labels = [1u8, 0, 0, 1];
        let z = Tensor::<f64>::from_vec(vec![4], vec![-1.5, 0.2, 3.0, -0.7]).unwrap();
        let err = grad_check(
            move |_t: &Tape<f64>, vars: &[Var<'_, f64>]| bce_with_logits_var(vars[0], &labels),
            &[z],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "logit bce gradient error {err}");
    }

    #[test]
    fn logit_form_agrees_with_sigmoid_then_bce() {
        let labels = [1u8, 0, 1];
        let tape = Tape::<f64>::new();
        let z = tape.leaf(
            Tensor::from_vec(vec![3], vec![0.4, -2.0, 1.3]).unwrap(),
            false,
        );
        let fused = bce_with_logits_var(z, &labels).unwrap().value().item().unwrap();
        let composed = bce_loss_var(z.sigmoid(), &labels)
            .unwrap()
            .value()
            .item()
            .unwrap();
        assert!((fused - composed).abs() < 1e-12);
    }

    #[test]
    fn loss_is_minimized_where_p_equals_y() {
        // grid scan over p for both labels
        for &y in &[0u8, 1u8] {
            let target = y as f64;
            let mut best_p = -1.0;
            let mut best = f64::INFINITY;
            for i in 0..=100 {
                let p = i as f64 / 100.0;
                let loss = bce_loss(&LossBatch::new(vec![y], vec![p]).unwrap());
                if loss < best {
                    best = loss;
                    best_p = p;
                }
            }
            assert_eq!(best_p, target);
        }
    }

    #[test]
    fn saturated_logits_stay_finite() {
        let labels = [1u8, 0];
        let tape = Tape::<f64>::new();
        let z = tape.leaf(
            Tensor::from_vec(vec![2], vec![500.0, -500.0]).unwrap(),
            true,
        );
        let loss = bce_with_logits_var(z, &labels).unwrap();
        assert!(loss.value().item().unwrap().is_finite());
        let grads = tape.backward(loss).unwrap();
        assert!(grads.grad(z).is_finite());
    }
}
