//! Mobile inverted residual bottleneck block, rank-2 and rank-3.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layers::ConvBnAct;
use crate::nn::se::SqueezeExcite;
use crate::nn::{join, Block, Forward, ParamKind};
use crate::tensor::{Activation, ConvSpec, Element, Padding, Tensor, Var};

/// Hyperparameters of one MBConv block.
///
/// The skip connection exists exactly when `stride == 1` and
/// `in_channels == out_channels`. For rank 3, strides apply to H and W only;
/// the depth stride is always 1 so shallow volumes survive the backbone.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct MbConvSpec {
    pub rank: usize,
    pub expand_ratio: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub se_ratio: f64,
}

impl MbConvSpec {
    pub fn new(
        rank: usize,
        expand_ratio: usize,
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        if rank != 2 && rank != 3 {
            return Err(Error::invalid(format!("MBConv rank must be 2 or 3, got {rank}")));
        }
        if expand_ratio != 1 && expand_ratio != 6 {
            return Err(Error::invalid(format!(
                "MBConv expand ratio must be 1 or 6, got {expand_ratio}"
            )));
        }
        if kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!("MBConv kernel must be odd, got {kernel}")));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::invalid(format!("MBConv stride must be 1 or 2, got {stride}")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid("MBConv channel counts must be positive"));
        }
        Ok(MbConvSpec {
            rank,
            expand_ratio,
            kernel,
            stride,
            in_channels,
            out_channels,
            se_ratio: 0.25,
        })
    }

    pub fn expanded_channels(&self) -> usize {
        self.in_channels * self.expand_ratio
    }

    pub fn has_skip(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }

    /// Per-dim stride: depth stride pinned to 1 for rank 3.
    pub fn spatial_stride(&self) -> Vec<usize> {
        if self.rank == 3 {
            vec![1, self.stride, self.stride]
        } else {
            vec![self.stride; 2]
        }
    }
}

/// [expand 1x1 conv+BN+swish (when ratio > 1)] -> depthwise k conv+BN+swish
/// -> squeeze-excitation -> project 1x1 conv+BN (no activation) -> [+input
/// when the skip applies].
pub struct MbConv<T: Element> {
    pub spec: MbConvSpec,
    pub expand: Option<ConvBnAct<T>>,
    pub depthwise: ConvBnAct<T>,
    pub se: SqueezeExcite<T>,
    pub project: ConvBnAct<T>,
}

impl<T: Element> MbConv<T> {
    pub fn new(spec: MbConvSpec, rng: &mut impl Rng) -> Result<Self> {
        let exp = spec.expanded_channels();
        let expand = if spec.expand_ratio > 1 {
            let conv = ConvSpec::isotropic(spec.rank, 1, 1, Padding::Same, 1, exp)?;
            Some(ConvBnAct::new(
                spec.in_channels,
                conv,
                Some(Activation::Swish),
                rng,
            ))
        } else {
            None
        };
        let depthwise = ConvBnAct::new(
            exp,
            ConvSpec::new(
                vec![spec.kernel; spec.rank],
                spec.spatial_stride(),
                Padding::Same,
                exp,
                exp,
            )?,
            Some(Activation::Swish),
            rng,
        );
        let se = SqueezeExcite::new(exp, spec.se_ratio, rng);
        let project = ConvBnAct::new(
            exp,
            ConvSpec::isotropic(spec.rank, 1, 1, Padding::Same, 1, spec.out_channels)?,
            None,
            rng,
        );
        Ok(MbConv {
            spec,
            expand,
            depthwise,
            se,
            project,
        })
    }
}

impl<T: Element> Block<T> for MbConv<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let mut h = match &self.expand {
            Some(expand) => expand.forward(fc, &join(prefix, "expand"), x)?,
            None => x,
        };
        h = self.depthwise.forward(fc, &join(prefix, "depthwise"), h)?;
        h = self.se.forward(fc, &join(prefix, "se"), h)?;
        h = self.project.forward(fc, &join(prefix, "project"), h)?;
        if self.spec.has_skip() {
            h = h.add(&x)?;
        }
        Ok(h)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        if let Some(expand) = &self.expand {
            expand.visit(&join(prefix, "expand"), f);
        }
        self.depthwise.visit(&join(prefix, "depthwise"), f);
        self.se.visit(&join(prefix, "se"), f);
        self.project.visit(&join(prefix, "project"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        if let Some(expand) = &mut self.expand {
            expand.visit_mut(&join(prefix, "expand"), f);
        }
        self.depthwise.visit_mut(&join(prefix, "depthwise"), f);
        self.se.visit_mut(&join(prefix, "se"), f);
        self.project.visit_mut(&join(prefix, "project"), f);
    }
}
