//! The multiscale branch: two max-pool stages interleaved with two SAME
//! convolutions, collapsed to a fixed-length vector by global average
//! pooling. Produces the coarse "low-quality" feature that is fused with the
//! backbone feature.

use rand::Rng;

use crate::error::Result;
use crate::nn::layers::Conv;
use crate::nn::{join, Block, Forward, ParamKind};
use crate::tensor::{ConvSpec, Element, Padding, Tensor, Var};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MultiscaleSpec {
    pub pool_window: usize,
    pub conv_channels: (usize, usize),
    pub kernel: usize,
}

impl Default for MultiscaleSpec {
    fn default() -> Self {
        MultiscaleSpec {
            pool_window: 2,
            conv_channels: (32, 64),
            kernel: 3,
        }
    }
}

/// maxpool -> conv+swish -> maxpool -> conv+swish -> GAP. The output length
/// equals `conv_channels.1` regardless of the input extents.
pub struct MultiscaleBlock<T: Element> {
    pub spec: MultiscaleSpec,
    pub conv1: Conv<T>,
    pub conv2: Conv<T>,
}

impl<T: Element> MultiscaleBlock<T> {
    pub fn new(in_channels: usize, spec: MultiscaleSpec, rng: &mut impl Rng) -> Result<Self> {
        let (c1, c2) = spec.conv_channels;
        let conv1 = Conv::new(
            in_channels,
            ConvSpec::isotropic(2, spec.kernel, 1, Padding::Same, 1, c1)?,
            true,
            rng,
        );
        let conv2 = Conv::new(
            c1,
            ConvSpec::isotropic(2, spec.kernel, 1, Padding::Same, 1, c2)?,
            true,
            rng,
        );
        Ok(MultiscaleBlock { spec, conv1, conv2 })
    }

    pub fn feature_len(&self) -> usize {
        self.spec.conv_channels.1
    }
}

impl<T: Element> Block<T> for MultiscaleBlock<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let w = self.spec.pool_window;
        let pool = [w, w];
        let h = x.maxpool(&pool, &pool)?;
        let h = self.conv1.forward(fc, &join(prefix, "conv1"), h)?.swish();
        let h = h.maxpool(&pool, &pool)?;
        let h = self.conv2.forward(fc, &join(prefix, "conv2"), h)?.swish();
        h.global_avg_pool()
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(block: &MultiscaleBlock<f64>, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let tape = Tape::new();
        let mut fc = Forward::untracked(&tape, false);
        let xv = fc.input(x.clone());
        Ok(block.forward(&mut fc, "ms", xv)?.value())
    }

    #[test]
    fn default_feature_length_is_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let block = MultiscaleBlock::<f64>::new(3, MultiscaleSpec::default(), &mut rng).unwrap();
        // shape-traced by hand: 256 -> pool 128 -> conv 128 -> pool 64 -> conv 64 -> GAP
        let x = Tensor::zeros(vec![1, 3, 256, 256]);
        let y = run(&block, &x).unwrap();
        assert_eq!(y.dims(), &[1, 64]);
    }

    #[test]
    fn zero_weights_give_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut block = MultiscaleBlock::<f64>::new(3, MultiscaleSpec::default(), &mut rng).unwrap();
        block.conv1.weight = Tensor::zeros(block.conv1.weight.shape().clone());
        block.conv1.bias = Some(Tensor::zeros(vec![32]));
        block.conv2.weight = Tensor::zeros(block.conv2.weight.shape().clone());
        block.conv2.bias = Some(Tensor::zeros(vec![64]));
        let x = Tensor::full(vec![1, 3, 16, 16], 3.5);
        let y = run(&block, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minimal_input_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let block = MultiscaleBlock::<f64>::new(3, MultiscaleSpec::default(), &mut rng).unwrap();
        let ok = Tensor::zeros(vec![1, 3, 8, 8]);
        assert!(run(&block, &ok).is_ok());
        // second pool impossible: 2 -> 1 -> window 2 over extent 1
        let too_small = Tensor::zeros(vec![1, 3, 2, 2]);
        assert!(run(&block, &too_small).is_err());
    }

    #[test]
    fn feature_length_ignores_input_extents() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let block = MultiscaleBlock::<f64>::new(3, MultiscaleSpec::default(), &mut rng).unwrap();
        for _ in 0..6 {
            let h = rng.gen_range(8..40);
            let w = rng.gen_range(8..40);
            let x = Tensor::uniform(vec![1, 3, h, w], 0.0, 1.0, &mut rng);
            let y = run(&block, &x).unwrap();
            assert_eq!(y.dims(), &[1, 64], "H={h} W={w}");
        }
    }
}
