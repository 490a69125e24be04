//! Base parameterized layers: convolution, dense, and the conv + batch norm
//! + activation unit the backbone is assembled from.

use rand::Rng;

use crate::error::Result;
use crate::nn::batchnorm::BatchNorm;
use crate::nn::{join, Block, Forward, ParamKind};
use crate::tensor::{Activation, ConvSpec, Element, Tensor, Var};

/// Convolution layer. Bias is optional: convolutions feeding straight into a
/// batch norm omit it, since the norm's shift subsumes it.
pub struct Conv<T: Element> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Element> Conv<T> {
    pub fn new(in_channels: usize, spec: ConvSpec, with_bias: bool, rng: &mut impl Rng) -> Self {
        let icpg = in_channels / spec.groups;
        let mut dims = vec![spec.out_channels, icpg];
        dims.extend_from_slice(&spec.kernel);
        let fan_in = icpg * spec.kernel.iter().product::<usize>();
        let weight = Tensor::truncated_normal(dims, fan_in, rng);
        let bias = with_bias.then(|| Tensor::zeros(vec![spec.out_channels]));
        Conv { spec, weight, bias }
    }
}

impl<T: Element> Block<T> for Conv<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let w = fc.param(join(prefix, "weight"), &self.weight);
        let mut y = x.conv(&w, &self.spec)?;
        if let Some(bias) = &self.bias {
            let b = fc.param(join(prefix, "bias"), bias);
            y = y.add_channel_bias(&b)?;
        }
        Ok(y)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        f(&join(prefix, "weight"), ParamKind::Weight, &self.weight);
        if let Some(bias) = &self.bias {
            f(&join(prefix, "bias"), ParamKind::Weight, bias);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        f(&join(prefix, "weight"), ParamKind::Weight, &mut self.weight);
        if let Some(bias) = &mut self.bias {
            f(&join(prefix, "bias"), ParamKind::Weight, bias);
        }
    }
}

/// Fully connected layer with bias.
pub struct Dense<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> Dense<T> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        Dense {
            weight: Tensor::truncated_normal(vec![out_features, in_features], in_features, rng),
            bias: Tensor::zeros(vec![out_features]),
        }
    }
}

impl<T: Element> Block<T> for Dense<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let w = fc.param(join(prefix, "weight"), &self.weight);
        let b = fc.param(join(prefix, "bias"), &self.bias);
        x.dense(&w, &b)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        f(&join(prefix, "weight"), ParamKind::Weight, &self.weight);
        f(&join(prefix, "bias"), ParamKind::Weight, &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        f(&join(prefix, "weight"), ParamKind::Weight, &mut self.weight);
        f(&join(prefix, "bias"), ParamKind::Weight, &mut self.bias);
    }
}

/// Conv -> batch norm -> optional activation.
pub struct ConvBnAct<T: Element> {
    pub conv: Conv<T>,
    pub bn: BatchNorm<T>,
    pub act: Option<Activation>,
}

impl<T: Element> ConvBnAct<T> {
    pub fn new(
        in_channels: usize,
        spec: ConvSpec,
        act: Option<Activation>,
        rng: &mut impl Rng,
    ) -> Self {
        let out_channels = spec.out_channels;
        ConvBnAct {
            conv: Conv::new(in_channels, spec, false, rng),
            bn: BatchNorm::new(out_channels),
            act,
        }
    }
}

impl<T: Element> Block<T> for ConvBnAct<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let y = self.conv.forward(fc, &join(prefix, "conv"), x)?;
        let y = self.bn.forward(fc, &join(prefix, "bn"), y)?;
        Ok(match self.act {
            Some(kind) => y.activation(kind),
            None => y,
        })
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}
