//! Squeeze-and-excitation: a channel-attention gate computed from globally
//! pooled features.

use rand::Rng;

use crate::error::Result;
use crate::nn::layers::Dense;
use crate::nn::{join, Block, Forward, ParamKind};
use crate::tensor::{Element, Tensor, Var};

/// GAP -> dense(C -> reduced) -> swish -> dense(reduced -> C) -> sigmoid ->
/// channelwise multiply. `reduced = max(1, round(C * se_ratio))`.
pub struct SqueezeExcite<T: Element> {
    pub reduce: Dense<T>,
    pub expand: Dense<T>,
}

impl<T: Element> SqueezeExcite<T> {
    pub fn new(channels: usize, se_ratio: f64, rng: &mut impl Rng) -> Self {
        let reduced = ((channels as f64 * se_ratio).round() as usize).max(1);
        SqueezeExcite {
            reduce: Dense::new(channels, reduced, rng),
            expand: Dense::new(reduced, channels, rng),
        }
    }
}

impl<T: Element> Block<T> for SqueezeExcite<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let pooled = x.global_avg_pool()?;
        let h = self.reduce.forward(fc, &join(prefix, "reduce"), pooled)?;
        let h = self.expand.forward(fc, &join(prefix, "expand"), h.swish())?;
        x.scale_channels(&h.sigmoid())
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        self.reduce.visit(&join(prefix, "reduce"), f);
        self.expand.visit(&join(prefix, "expand"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        self.reduce.visit_mut(&join(prefix, "reduce"), f);
        self.expand.visit_mut(&join(prefix, "expand"), f);
    }
}
