//! Reverse-mode automatic differentiation over the kernels in
//! [`crate::tensor::ops`].
//!
//! A [`Tape`] records one forward pass as an ordered list of primitive ops;
//! inputs always precede their outputs, so replaying the list in reverse
//! visits each node exactly once. Ops are only recorded while some input
//! requires a gradient, which makes inference forwards effectively free.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::ops::{self, Activation};
use crate::tensor::shape::{ConvSpec, Shape};
use crate::tensor::storage::{Element, Tensor};

type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Result<Vec<Option<Tensor<T>>>>>;

struct OpRecord<T: Element> {
    inputs: Vec<usize>,
    backward: BackwardFn<T>,
}

struct Node<T: Element> {
    value: Tensor<T>,
    needs_grad: bool,
    op: Option<OpRecord<T>>,
}

/// Gradient tape for one forward/backward pass. Confined to a single thread.
pub struct Tape<T: Element> {
    inner: RefCell<Vec<Node<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(Vec::new()),
        }
    }

    /// Number of recorded nodes (leaves included).
    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register an input tensor. Gradients flow back to it only when
    /// `requires_grad` is set.
    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.inner.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            needs_grad: requires_grad,
            op: None,
        });
        Var { tape: self, id }
    }

    fn push(&self, value: Tensor<T>, inputs: Vec<usize>, backward: BackwardFn<T>) -> Var<'_, T> {
        let mut nodes = self.inner.borrow_mut();
        let needs_grad = inputs.iter().any(|&i| nodes[i].needs_grad);
        let id = nodes.len();
        nodes.push(Node {
            value,
            needs_grad,
            op: needs_grad.then_some(OpRecord { inputs, backward }),
        });
        Var { tape: self, id }
    }

    fn check_owns(&self, v: &Var<'_, T>) -> Result<()> {
        if !std::ptr::eq(self, v.tape) {
            return Err(Error::Autodiff(
                "variable does not belong to this tape".to_string(),
            ));
        }
        Ok(())
    }

    /// Run the reverse pass from a scalar loss. Gradients accumulate by
    /// addition where a value feeds several consumers; leaves that require a
    /// gradient but were never touched read back as zeros from the store.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<GradStore<T>> {
        self.check_owns(&loss)?;
        let nodes = self.inner.borrow();
        if nodes[loss.id].value.numel() != 1 {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar loss, got shape {}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::ones(nodes[loss.id].value.shape().clone()));
        for id in (0..=loss.id).rev() {
            if !nodes[id].needs_grad {
                continue;
            }
            let Some(record) = nodes[id].op.as_ref() else {
                continue; // leaf: keep its accumulated gradient
            };
            let Some(upstream) = grads[id].clone() else {
                continue; // not on the path from the loss
            };
            let input_grads = (record.backward)(&upstream)?;
            debug_assert_eq!(input_grads.len(), record.inputs.len());
            for (&input_id, grad) in record.inputs.iter().zip(input_grads) {
                let Some(grad) = grad else { continue };
                match &mut grads[input_id] {
                    Some(existing) => *existing = ops::add(existing, &grad)?,
                    slot @ None => *slot = Some(grad),
                }
            }
        }
        Ok(GradStore { grads })
    }
}

/// Accumulated gradients from one [`Tape::backward`] call.
pub struct GradStore<T: Element> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> GradStore<T> {
    /// Gradient for a variable; zero-filled when the loss never touched it.
    pub fn grad(&self, var: Var<'_, T>) -> Tensor<T> {
        match self.grads.get(var.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(var.shape()),
        }
    }
}

/// Handle to a value on a [`Tape`]. Cheap to copy; the tensor itself lives in
/// the tape and is immutable once written.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Element> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<'t, T: Element> Var<'t, T> {
    pub(crate) fn tape_ref(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Tensor<T> {
        self.tape.inner.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Shape {
        self.tape.inner.borrow()[self.id].value.shape().clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow()[self.id].needs_grad
    }

    fn binary(
        &self,
        other: &Var<'t, T>,
        value: Tensor<T>,
        backward: BackwardFn<T>,
    ) -> Result<Var<'t, T>> {
        self.tape.check_owns(other)?;
        Ok(self.tape.push(value, vec![self.id, other.id], backward))
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let value = ops::add(&self.value(), &other.value())?;
        self.binary(
            other,
            value,
            Box::new(|dy| Ok(vec![Some(dy.clone()), Some(dy.clone())])),
        )
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let a = self.value();
        let b = other.value();
        let value = ops::mul(&a, &b)?;
        self.binary(
            other,
            value,
            Box::new(move |dy| {
                Ok(vec![
                    Some(ops::mul(dy, &b)?),
                    Some(ops::mul(dy, &a)?),
                ])
            }),
        )
    }

    pub fn scale(&self, c: T) -> Var<'t, T> {
        let value = ops::scale(&self.value(), c);
        self.tape.push(
            value,
            vec![self.id],
            Box::new(move |dy| Ok(vec![Some(ops::scale(dy, c))])),
        )
    }

    pub fn activation(&self, kind: Activation) -> Var<'t, T> {
        let x = self.value();
        let value = ops::activation(&x, kind);
        self.tape.push(
            value,
            vec![self.id],
            Box::new(move |dy| Ok(vec![Some(ops::activation_backward(&x, dy, kind))])),
        )
    }

    pub fn relu(&self) -> Var<'t, T> {
        self.activation(Activation::Relu)
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        self.activation(Activation::Sigmoid)
    }

    pub fn swish(&self) -> Var<'t, T> {
        self.activation(Activation::Swish)
    }

    /// Sum of all elements, as a `[1]` scalar.
    pub fn sum(&self) -> Var<'t, T> {
        let x = self.value();
        let shape = x.shape().clone();
        let value = Tensor::scalar(ops::sum(&x));
        self.tape.push(
            value,
            vec![self.id],
            Box::new(move |dy| {
                let g = dy.item()?;
                Ok(vec![Some(Tensor::full(shape.clone(), g))])
            }),
        )
    }

    pub fn conv(&self, weight: &Var<'t, T>, spec: &ConvSpec) -> Result<Var<'t, T>> {
        let x = self.value();
        let w = weight.value();
        let value = ops::conv_forward(&x, &w, spec)?;
        let spec = spec.clone();
        let need_dx = self.requires_grad();
        let need_dw = weight.requires_grad();
        self.binary(
            weight,
            value,
            Box::new(move |dy| {
                let (dx, dw) = ops::conv_backward(&x, &w, &spec, dy, need_dx, need_dw)?;
                Ok(vec![dx, dw])
            }),
        )
    }

    pub fn maxpool(&self, window: &[usize], stride: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let (value, argmax) = ops::maxpool_forward(&x, window, stride)?;
        let in_shape = x.shape().clone();
        Ok(self.tape.push(
            value,
            vec![self.id],
            Box::new(move |dy| Ok(vec![Some(ops::maxpool_backward(&in_shape, &argmax, dy)?)])),
        ))
    }

    pub fn global_avg_pool(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let value = ops::global_avg_pool(&x)?;
        let in_shape = x.shape().clone();
        Ok(self.tape.push(
            value,
            vec![self.id],
            Box::new(move |dy| Ok(vec![Some(ops::global_avg_pool_backward(&in_shape, dy)?)])),
        ))
    }

    pub fn dense(&self, weight: &Var<'t, T>, bias: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.tape.check_owns(weight)?;
        self.tape.check_owns(bias)?;
        let x = self.value();
        let w = weight.value();
        let b = bias.value();
        let value = ops::dense_forward(&x, &w, &b)?;
        Ok(self.tape.push(
            value,
            vec![self.id, weight.id, bias.id],
            Box::new(move |dy| {
                let (dx, dw, db) = ops::dense_backward(&x, &w, dy)?;
                Ok(vec![Some(dx), Some(dw), Some(db)])
            }),
        ))
    }

    pub fn add_channel_bias(&self, bias: &Var<'t, T>) -> Result<Var<'t, T>> {
        let x = self.value();
        let b = bias.value();
        let value = ops::add_channel_bias(&x, &b)?;
        let channels = b.numel();
        self.binary(
            bias,
            value,
            Box::new(move |dy| {
                Ok(vec![
                    Some(dy.clone()),
                    Some(ops::channel_bias_backward(dy, channels)?),
                ])
            }),
        )
    }

    /// Multiply by a `[N, C]` per-sample channel gate.
    pub fn scale_channels(&self, gate: &Var<'t, T>) -> Result<Var<'t, T>> {
        let x = self.value();
        let g = gate.value();
        let value = ops::scale_channels(&x, &g)?;
        self.binary(
            gate,
            value,
            Box::new(move |dy| {
                let (dx, dg) = ops::scale_channels_backward(&x, &g, dy)?;
                Ok(vec![Some(dx), Some(dg)])
            }),
        )
    }

    pub fn concat_features(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        let a = self.value();
        let b = other.value();
        let value = ops::concat_features(&a, &b)?;
        let (fa, fb) = (a.dims()[1], b.dims()[1]);
        self.binary(
            other,
            value,
            Box::new(move |dy| {
                let (da, db) = ops::concat_features_backward(dy, fa, fb)?;
                Ok(vec![Some(da), Some(db)])
            }),
        )
    }

    /// Record a custom op. Used by composite layers (batch norm, losses) that
    /// implement fused backward passes.
    pub(crate) fn custom(
        tape: &'t Tape<T>,
        value: Tensor<T>,
        inputs: Vec<Var<'t, T>>,
        backward: BackwardFn<T>,
    ) -> Result<Var<'t, T>> {
        let mut ids = Vec::with_capacity(inputs.len());
        for v in &inputs {
            tape.check_owns(v)?;
            ids.push(v.id);
        }
        Ok(tape.push(value, ids, backward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::from_vec(vec![2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap(),
            true,
        );
        let loss = x.sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(x).data(), &[1.0; 4]);
    }

    #[test]
    fn square_gradient_is_two_x() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap(),
            true,
        );
        let loss = x.mul(&x).unwrap().sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn reuse_accumulates_both_paths() {
        // y = sum(x) + sum(x*x): dy/dx = 1 + 2x, the sum of both paths.
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![3.0, -1.0]).unwrap(), true);
        let loss = x.sum().add(&x.mul(&x).unwrap().sum()).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(x).data(), &[7.0, -1.0]);

        // Same function with the reuse split across two leaves holding the
        // same values: the per-leaf gradients must sum to the fused gradient.
        let tape2 = Tape::<f64>::new();
        let a = tape2.leaf(Tensor::from_vec(vec![2], vec![3.0, -1.0]).unwrap(), true);
        let b = tape2.leaf(Tensor::from_vec(vec![2], vec![3.0, -1.0]).unwrap(), true);
        let loss2 = a.sum().add(&b.mul(&b).unwrap().sum()).unwrap();
        let g2 = tape2.backward(loss2).unwrap();
        let combined: Vec<f64> = g2
            .grad(a)
            .data()
            .iter()
            .zip(g2.grad(b).data())
            .map(|(x, y)| x + y)
            .collect();
        assert_eq!(combined, vec![7.0, -1.0]);
    }

    #[test]
    fn untouched_leaf_reads_back_zero_grad() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let unused = tape.leaf(Tensor::from_vec(vec![3], vec![0.0; 3]).unwrap(), true);
        let loss = x.sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.grad(unused).data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap(), true);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn foreign_var_rejected() {
        let tape_a = Tape::<f64>::new();
        let tape_b = Tape::<f64>::new();
        let a = tape_a.leaf(Tensor::scalar(1.0), true);
        let b = tape_b.leaf(Tensor::scalar(2.0), true);
        assert!(a.add(&b).is_err());
        assert!(tape_b.backward(a).is_err());
    }

    #[test]
    fn eval_mode_records_no_ops() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap(), false);
        let y = x.mul(&x).unwrap().sum();
        // nodes exist (values are stored) but none carry backward records
        assert_eq!(tape.len(), 3);
        assert!(!y.requires_grad());
    }

    #[test]
    fn topological_order_invariant() {
        // every recorded op's inputs precede the op's own node
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let y = x.mul(&x).unwrap();
        let z = y.add(&x).unwrap();
        let _ = z.sum();
        let nodes = tape.inner.borrow();
        for (id, node) in nodes.iter().enumerate() {
            if let Some(op) = &node.op {
                assert!(op.inputs.iter().all(|&i| i < id));
            }
        }
    }
}
