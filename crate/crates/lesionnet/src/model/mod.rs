//! Model zoo: compound-scaled EfficientNet and multiscale classifiers,
//! parameter counting, and weight (de)serialization.

pub mod build;
pub mod scaling;
pub mod weights;

pub use build::{
    backbone_trace, build_efficientnet, build_multiscale_efficientnet, param_count, Backbone,
    EfficientNetModel, InputContract, MultiscaleModel, TraceEntry,
};
pub use scaling::{round_channels, ScaledVariant, StageConfig, BASELINE_STAGES};
pub use weights::{load_weights, save_weights};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::{Block, Forward, ParamKind};
use crate::tensor::{Element, Tape, Tensor, Var};

/// Either classifier architecture behind one interface. Forward always
/// produces one raw logit per sample; the sigmoid is applied inside the loss
/// and at prediction time.
pub enum Model<T: Element> {
    EfficientNet(EfficientNetModel<T>),
    Multiscale(MultiscaleModel<T>),
}

impl<T: Element> Model<T> {
    pub fn input(&self) -> &InputContract {
        match self {
            Model::EfficientNet(m) => &m.input,
            Model::Multiscale(m) => &m.input,
        }
    }

    pub fn variant(&self) -> &ScaledVariant {
        match self {
            Model::EfficientNet(m) => &m.variant,
            Model::Multiscale(m) => &m.variant,
        }
    }

    pub fn forward<'t>(&self, fc: &mut Forward<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        self.input().check(&x.value())?;
        match self {
            Model::EfficientNet(m) => m.forward(fc, "", x),
            Model::Multiscale(m) => m.forward(fc, "", x),
        }
    }

    /// Inference forward on a plain batch; returns `[N, 1]` logits.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let mut fc = Forward::untracked(&tape, false);
        let xv = fc.input(x.clone());
        Ok(self.forward(&mut fc, xv)?.value())
    }

    pub fn visit(&self, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        match self {
            Model::EfficientNet(m) => m.visit("", f),
            Model::Multiscale(m) => m.visit("", f),
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        match self {
            Model::EfficientNet(m) => m.visit_mut("", f),
            Model::Multiscale(m) => m.visit_mut("", f),
        }
    }

    /// Learnable parameter count.
    pub fn param_count(&self) -> usize {
        match self {
            Model::EfficientNet(m) => param_count(m),
            Model::Multiscale(m) => param_count(m),
        }
    }

    /// Snapshot every named tensor (weights and running statistics) in visit
    /// order. Tensors share storage copy-on-write, so this is cheap and the
    /// snapshot stays intact across later updates.
    pub fn state(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, _, t| out.push((name.to_string(), t.clone())));
        out
    }

    /// Restore a snapshot. Every model tensor must be present with an
    /// identical shape, and no extra entries may remain; the first divergence
    /// is named in the error.
    pub fn load_state(&mut self, entries: &[(String, Tensor<T>)]) -> Result<()> {
        let source: HashMap<&str, &Tensor<T>> =
            entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        if source.len() != entries.len() {
            return Err(Error::format("duplicate parameter name in weight source"));
        }
        let mut failure: Option<String> = None;
        let mut used = 0usize;
        self.visit_mut(&mut |name, _, t| {
            if failure.is_some() {
                return;
            }
            match source.get(name) {
                None => failure = Some(format!("parameter {name} missing from weight source")),
                Some(src) => {
                    if src.shape() != t.shape() {
                        failure = Some(format!(
                            "parameter {name} has shape {} but weight source provides {}",
                            t.shape(),
                            src.shape()
                        ));
                    } else {
                        *t = (*src).clone();
                        used += 1;
                    }
                }
            }
        });
        if let Some(msg) = failure {
            return Err(Error::format(msg));
        }
        if used != entries.len() {
            let mut model_names = std::collections::HashSet::new();
            self.visit(&mut |name, _, _| {
                model_names.insert(name.to_string());
            });
            let extra = entries
                .iter()
                .map(|(n, _)| n)
                .find(|n| !model_names.contains(*n))
                .cloned()
                .unwrap_or_default();
            return Err(Error::format(format!(
                "weight source has entry {extra} with no matching model parameter"
            )));
        }
        Ok(())
    }
}
