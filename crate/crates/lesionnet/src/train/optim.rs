//! Parameter update rules: Adam (epsilon inside the root, no bias correction
//! by default, matching the printed update), SGD, RMSProp, and Adadelta.

use std::collections::HashMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        /// Off by default: the plain `w -= eta * m / sqrt(v + eps)` update.
        /// Enables the standard `m/(1-b1^t)`, `v/(1-b2^t)` correction with
        /// the epsilon outside the root.
        bias_correction: bool,
    },
    RmsProp {
        rho: f64,
        eps: f64,
    },
    Adadelta {
        rho: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            bias_correction: false,
        }
    }

    pub fn rmsprop() -> Self {
        OptimizerKind::RmsProp { rho: 0.9, eps: 1e-7 }
    }

    pub fn adadelta() -> Self {
        OptimizerKind::Adadelta { rho: 0.95, eps: 1e-6 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
            OptimizerKind::RmsProp { .. } => "rmsprop",
            OptimizerKind::Adadelta { .. } => "adadelta",
        }
    }

    /// A learning rate that makes the kind productive out of the box:
    /// Adadelta is self-scaling and wants a unit multiplier, plain SGD needs
    /// a larger step than the adaptive rules.
    pub fn default_lr(&self) -> f64 {
        match self {
            OptimizerKind::Sgd => 5e-2,
            OptimizerKind::Adam { .. } => 1e-3,
            OptimizerKind::RmsProp { .. } => 1e-3,
            OptimizerKind::Adadelta { .. } => 1.0,
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::adam()),
            "rmsprop" => Ok(OptimizerKind::rmsprop()),
            "adadelta" => Ok(OptimizerKind::adadelta()),
            other => Err(Error::invalid(format!(
                "unknown optimizer {other:?} (expected adam, sgd, rmsprop, adadelta)"
            ))),
        }
    }
}

/// Per-parameter accumulators: first/second moment for Adam, squared-gradient
/// and squared-update averages for Adadelta, squared gradient for RMSProp.
struct Slot<T> {
    m: Tensor<T>,
    v: Tensor<T>,
}

/// Optimizer state: the update rule, learning rate, step counter, and lazily
/// created per-parameter accumulators keyed by parameter name.
pub struct Optimizer<T: Element> {
    pub kind: OptimizerKind,
    pub eta: T,
    step: u64,
    slots: HashMap<String, Slot<T>>,
}

impl<T: Element> Optimizer<T> {
    pub fn new(kind: OptimizerKind, eta: f64) -> Self {
        Optimizer {
            kind,
            eta: T::from_f64(eta),
            step: 0,
            slots: HashMap::new(),
        }
    }

    /// Advance the step counter; call once per batch before the updates.
    pub fn next_step(&mut self) {
        self.step += 1;
    }

    /// Apply one update to a named parameter. Non-finite gradients abort the
    /// run naming the parameter.
    pub fn update(&mut self, name: &str, param: &mut Tensor<T>, grad: &Tensor<T>) -> Result<()> {
        if grad.shape() != param.shape() {
            return Err(Error::shape(format!(
                "gradient shape {} does not match parameter {name} {}",
                grad.shape(),
                param.shape()
            )));
        }
        if !grad.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient for parameter {name}"
            )));
        }
        let eta = self.eta;
        let t = self.step.max(1);
        if let OptimizerKind::Sgd = self.kind {
            let p = param.data_mut();
            for (w, &g) in p.iter_mut().zip(grad.data()) {
                *w = *w - eta * g;
            }
            return Ok(());
        }

        let slot = self.slots.entry(name.to_string()).or_insert_with(|| Slot {
            m: Tensor::zeros(param.shape().clone()),
            v: Tensor::zeros(param.shape().clone()),
        });
        match self.kind {
            OptimizerKind::Sgd => unreachable!("handled above"),
            OptimizerKind::Adam {
                beta1,
                beta2,
                eps,
                bias_correction,
            } => {
                let b1 = T::from_f64(beta1);
                let b2 = T::from_f64(beta2);
                let e = T::from_f64(eps);
                let ms = slot.m.data_mut();
                let vs = slot.v.data_mut();
                let ps = param.data_mut();
                for i in 0..ps.len() {
                    let g = grad.data()[i];
                    ms[i] = b1 * ms[i] + (T::one() - b1) * g;
                    vs[i] = b2 * vs[i] + (T::one() - b2) * g * g;
                    let delta = if bias_correction {
                        let mc = ms[i] / (T::one() - T::from_f64(beta1.powi(t as i32)));
                        let vc = vs[i] / (T::one() - T::from_f64(beta2.powi(t as i32)));
                        mc / (vc.sqrt() + e)
                    } else {
                        ms[i] / (vs[i] + e).sqrt()
                    };
                    ps[i] = ps[i] - eta * delta;
                }
            }
            OptimizerKind::RmsProp { rho, eps } => {
                let r = T::from_f64(rho);
                let e = T::from_f64(eps);
                let vs = slot.v.data_mut();
                let ps = param.data_mut();
                for i in 0..ps.len() {
                    let g = grad.data()[i];
                    vs[i] = r * vs[i] + (T::one() - r) * g * g;
                    ps[i] = ps[i] - eta * g / (vs[i].sqrt() + e);
                }
            }
            OptimizerKind::Adadelta { rho, eps } => {
                // v: squared-gradient average, m: squared-update average
                let r = T::from_f64(rho);
                let e = T::from_f64(eps);
                let us = slot.m.data_mut();
                let vs = slot.v.data_mut();
                let ps = param.data_mut();
                for i in 0..ps.len() {
                    let g = grad.data()[i];
                    vs[i] = r * vs[i] + (T::one() - r) * g * g;
                    let delta = -((us[i] + e).sqrt() / (vs[i] + e).sqrt()) * g;
                    us[i] = r * us[i] + (T::one() - r) * delta * delta;
                    ps[i] = ps[i] + eta * delta;
                }
            }
        }
        Ok(())
    }
}
