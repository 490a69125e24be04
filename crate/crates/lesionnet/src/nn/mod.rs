//! Composite network blocks: batch normalization, squeeze-and-excitation,
//! the mobile inverted bottleneck (MBConv) in rank-2 and rank-3 form, and
//! the multiscale pooling branch.

pub mod batchnorm;
pub mod layers;
pub mod mbconv;
pub mod multiscale;
pub mod se;

pub use batchnorm::BatchNorm;
pub use layers::{Conv, ConvBnAct, Dense};
pub use mbconv::{MbConv, MbConvSpec};
pub use multiscale::{MultiscaleBlock, MultiscaleSpec};
pub use se::SqueezeExcite;

use crate::error::Result;
use crate::tensor::{Element, Shape, Tape, Tensor, Var};

/// Whether a tensor participates in optimization or is tracked state
/// (batch-norm running statistics). Both are serialized; only weights are
/// stepped by the optimizer and counted by `param_count`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ParamKind {
    Weight,
    Stat,
}

/// Per-pass context threaded through every block forward.
///
/// `train` selects batch statistics (and updates running ones) in batch
/// norm; `track` leafs parameters with gradients enabled and records their
/// tape bindings so the optimizer can look gradients up by name. Finite
/// -difference evaluations use `train` without `track`.
pub struct Forward<'t, T: Element> {
    tape: &'t Tape<T>,
    train: bool,
    track: bool,
    params: Vec<(String, Var<'t, T>)>,
    shape_log: Option<Vec<(String, Shape)>>,
}

impl<'t, T: Element> Forward<'t, T> {
    pub fn new(tape: &'t Tape<T>, train: bool) -> Self {
        Forward::with_modes(tape, train, train)
    }

    /// Choose batch-norm statistics (`train`) and gradient tracking
    /// (`track`) independently; gradient checks of inference-mode paths need
    /// tracking without train statistics.
    pub fn with_modes(tape: &'t Tape<T>, train: bool, track: bool) -> Self {
        Forward {
            tape,
            train,
            track,
            params: Vec::new(),
            shape_log: None,
        }
    }

    /// Statistics per `train` mode, without gradient tracking.
    pub fn untracked(tape: &'t Tape<T>, train: bool) -> Self {
        Forward::with_modes(tape, train, false)
    }

    /// Record the shape every block produces (used by shape-trace tests).
    pub fn with_shape_log(mut self) -> Self {
        self.shape_log = Some(Vec::new());
        self
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn train(&self) -> bool {
        self.train
    }

    /// Leaf an input tensor (no gradient).
    pub fn input(&self, x: Tensor<T>) -> Var<'t, T> {
        self.tape.leaf(x, false)
    }

    /// Leaf a named parameter, binding it for gradient lookup when tracking.
    pub fn param(&mut self, name: String, value: &Tensor<T>) -> Var<'t, T> {
        let var = self.tape.leaf(value.clone(), self.track);
        if self.track {
            self.params.push((name, var));
        }
        var
    }

    pub fn log_shape(&mut self, name: &str, var: &Var<'t, T>) {
        if let Some(log) = self.shape_log.as_mut() {
            log.push((name.to_string(), var.shape()));
        }
    }

    /// Parameter bindings collected during a tracked forward.
    pub fn bindings(&self) -> &[(String, Var<'t, T>)] {
        &self.params
    }

    pub fn shapes(&self) -> &[(String, Shape)] {
        self.shape_log.as_deref().unwrap_or(&[])
    }
}

/// A network component with named parameters.
pub trait Block<T: Element> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>>;

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>));

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>));
}

/// Dotted child path: `"stem" + "conv" -> "stem.conv"`.
pub(crate) fn join(prefix: &str, child: &str) -> String {
    if prefix.is_empty() {
        child.to_string()
    } else {
        format!("{prefix}.{child}")
    }
}
