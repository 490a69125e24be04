//! Classifier assembly: the EfficientNet backbone (rank 2 and 3), the
//! multiscale fusion model, the symbolic shape trace used to validate
//! inputs, and parameter counting.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    join, Block, ConvBnAct, Dense, Forward, MbConv, MbConvSpec, MultiscaleBlock,
    MultiscaleSpec, ParamKind,
};
use crate::model::scaling::{ScaledVariant, BASELINE_STAGES};
use crate::tensor::{Activation, ConvSpec, Element, Padding, Tensor, Var};

/// Fixed input shape a model accepts (excluding the batch dim).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputContract {
    pub rank: usize,
    pub channels: usize,
    pub spatial: Vec<usize>,
}

impl InputContract {
    pub fn check<T: Element>(&self, x: &Tensor<T>) -> Result<()> {
        let want_rank = self.rank + 2;
        if x.rank() != want_rank {
            return Err(Error::shape(format!(
                "model expects rank-{want_rank} input [N, {}, ...], got {}",
                self.channels,
                x.shape()
            )));
        }
        if x.dims()[1] != self.channels || x.dims()[2..] != self.spatial[..] {
            return Err(Error::shape(format!(
                "model expects input [N, {}, {}], got {}",
                self.channels,
                self.spatial
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("x"),
                x.shape()
            )));
        }
        Ok(())
    }
}

/// One line of the symbolic shape trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub name: String,
    pub channels: usize,
    pub spatial: Vec<usize>,
}

fn stride_for(rank: usize, stride: usize) -> Vec<usize> {
    // Depth stride pinned to 1 for rank 3: shallow volumes must survive the
    // five stride-2 stages.
    if rank == 3 {
        vec![1, stride, stride]
    } else {
        vec![stride; rank]
    }
}

fn same_out(spatial: &[usize], stride: &[usize]) -> Vec<usize> {
    spatial
        .iter()
        .zip(stride)
        .map(|(&e, &s)| e.div_ceil(s))
        .collect()
}

/// Walk the backbone's shape algebra without building it. Errors name the
/// failing stage.
pub fn backbone_trace(
    rank: usize,
    variant: &ScaledVariant,
    in_channels: usize,
    in_spatial: &[usize],
) -> Result<Vec<TraceEntry>> {
    if rank != 2 && rank != 3 {
        return Err(Error::invalid(format!("backbone rank must be 2 or 3, got {rank}")));
    }
    if in_spatial.len() != rank {
        return Err(Error::shape(format!(
            "expected {rank} spatial extents, got {}",
            in_spatial.len()
        )));
    }
    if in_channels == 0 || in_spatial.contains(&0) {
        return Err(Error::shape(
            "input too small: every input extent must be >= 1 (failing stage: stem)".to_string(),
        ));
    }
    let mut trace = Vec::new();
    let mut spatial = same_out(in_spatial, &stride_for(rank, 2));
    let mut channels = variant.stem_channels();
    trace.push(TraceEntry {
        name: "stem".to_string(),
        channels,
        spatial: spatial.clone(),
    });

    for (i, stage) in BASELINE_STAGES.iter().enumerate() {
        let out_channels = variant.scaled_channels(stage.base_channels);
        let repeats = variant.scaled_repeats(stage.base_repeats);
        for j in 0..repeats {
            let stride = if j == 0 { stage.stride } else { 1 };
            spatial = same_out(&spatial, &stride_for(rank, stride));
            if spatial.contains(&0) {
                return Err(Error::shape(format!(
                    "input too small for cumulative stride (failing stage: stage{i}.block{j})"
                )));
            }
            channels = out_channels;
            trace.push(TraceEntry {
                name: format!("stage{i}.block{j}"),
                channels,
                spatial: spatial.clone(),
            });
        }
    }

    trace.push(TraceEntry {
        name: "head".to_string(),
        channels: variant.head_channels(),
        spatial: spatial.clone(),
    });
    trace.push(TraceEntry {
        name: "gap".to_string(),
        channels: variant.head_channels(),
        spatial: Vec::new(),
    });
    Ok(trace)
}

/// Stem conv -> seven MBConv stages -> 1x1 head conv -> global average pool.
pub struct Backbone<T: Element> {
    pub rank: usize,
    pub stem: ConvBnAct<T>,
    pub blocks: Vec<(String, MbConv<T>)>,
    pub head: ConvBnAct<T>,
    pub feature_len: usize,
}

impl<T: Element> Backbone<T> {
    fn new(
        rank: usize,
        variant: &ScaledVariant,
        in_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let stem_channels = variant.stem_channels();
        let stem = ConvBnAct::new(
            in_channels,
            ConvSpec::new(
                vec![3; rank],
                stride_for(rank, 2),
                Padding::Same,
                1,
                stem_channels,
            )?,
            Some(Activation::Swish),
            rng,
        );

        let mut blocks = Vec::new();
        let mut channels = stem_channels;
        for (i, stage) in BASELINE_STAGES.iter().enumerate() {
            let out_channels = variant.scaled_channels(stage.base_channels);
            let repeats = variant.scaled_repeats(stage.base_repeats);
            for j in 0..repeats {
                let stride = if j == 0 { stage.stride } else { 1 };
                let spec = MbConvSpec::new(
                    rank,
                    stage.expand_ratio,
                    stage.kernel,
                    stride,
                    channels,
                    out_channels,
                )?;
                blocks.push((format!("stage{i}.block{j}"), MbConv::new(spec, rng)?));
                channels = out_channels;
            }
        }

        let head_channels = variant.head_channels();
        let head = ConvBnAct::new(
            channels,
            ConvSpec::isotropic(rank, 1, 1, Padding::Same, 1, head_channels)?,
            Some(Activation::Swish),
            rng,
        );
        Ok(Backbone {
            rank,
            stem,
            blocks,
            head,
            feature_len: head_channels,
        })
    }
}

impl<T: Element> Block<T> for Backbone<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let mut h = self.stem.forward(fc, &join(prefix, "stem"), x)?;
        fc.log_shape("stem", &h);
        for (name, block) in &self.blocks {
            h = block.forward(fc, &join(prefix, &format!("blocks.{name}")), h)?;
            fc.log_shape(name, &h);
        }
        h = self.head.forward(fc, &join(prefix, "head"), h)?;
        fc.log_shape("head", &h);
        let h = h.global_avg_pool()?;
        fc.log_shape("gap", &h);
        Ok(h)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (name, block) in &self.blocks {
            block.visit(&join(prefix, &format!("blocks.{name}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        for (name, block) in &mut self.blocks {
            block.visit_mut(&join(prefix, &format!("blocks.{name}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// EfficientNet classifier: backbone features -> dense -> one logit per
/// sample. The sigmoid lives in the loss and in prediction, not here.
pub struct EfficientNetModel<T: Element> {
    pub input: InputContract,
    pub variant: ScaledVariant,
    pub backbone: Backbone<T>,
    pub classifier: Dense<T>,
}

/// Backbone features and the multiscale branch feature, concatenated
/// (backbone first), then dense to one logit.
pub struct MultiscaleModel<T: Element> {
    pub input: InputContract,
    pub variant: ScaledVariant,
    pub backbone: Backbone<T>,
    pub ms: MultiscaleBlock<T>,
    pub classifier: Dense<T>,
}

/// Build an EfficientNet classifier for `[N, in_channels, in_spatial...]`
/// inputs. The shape trace runs first so impossible inputs are rejected with
/// the failing stage named.
pub fn build_efficientnet<T: Element>(
    rank: usize,
    variant: &ScaledVariant,
    in_channels: usize,
    in_spatial: &[usize],
    rng: &mut impl Rng,
) -> Result<EfficientNetModel<T>> {
    backbone_trace(rank, variant, in_channels, in_spatial)?;
    let backbone = Backbone::new(rank, variant, in_channels, rng)?;
    let classifier = Dense::new(backbone.feature_len, 1, rng);
    Ok(EfficientNetModel {
        input: InputContract {
            rank,
            channels: in_channels,
            spatial: in_spatial.to_vec(),
        },
        variant: variant.clone(),
        backbone,
        classifier,
    })
}

/// Build the multiscale fusion classifier for `[N, 3, H, W]` slice stacks.
pub fn build_multiscale_efficientnet<T: Element>(
    backbone_variant: &ScaledVariant,
    in_spatial: &[usize],
    rng: &mut impl Rng,
) -> Result<MultiscaleModel<T>> {
    const IN_CHANNELS: usize = 3;
    if in_spatial.len() != 2 {
        return Err(Error::shape(format!(
            "multiscale model expects two spatial extents, got {}",
            in_spatial.len()
        )));
    }
    backbone_trace(2, backbone_variant, IN_CHANNELS, in_spatial)?;
    let ms_spec = MultiscaleSpec::default();
    let window = ms_spec.pool_window;
    if in_spatial.iter().any(|&e| e < window * window) {
        return Err(Error::shape(format!(
            "multiscale branch needs spatial extents >= {} for its two pool stages",
            window * window
        )));
    }
    let backbone = Backbone::new(2, backbone_variant, IN_CHANNELS, rng)?;
    let ms = MultiscaleBlock::new(IN_CHANNELS, ms_spec, rng)?;
    let classifier = Dense::new(backbone.feature_len + ms.feature_len(), 1, rng);
    Ok(MultiscaleModel {
        input: InputContract {
            rank: 2,
            channels: IN_CHANNELS,
            spatial: in_spatial.to_vec(),
        },
        variant: backbone_variant.clone(),
        backbone,
        ms,
        classifier,
    })
}

impl<T: Element> Block<T> for EfficientNetModel<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let features = self.backbone.forward(fc, &join(prefix, "backbone"), x)?;
        self.classifier.forward(fc, &join(prefix, "classifier"), features)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        self.backbone.visit(&join(prefix, "backbone"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        self.backbone.visit_mut(&join(prefix, "backbone"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}

impl<T: Element> Block<T> for MultiscaleModel<T> {
    fn forward<'t>(
        &self,
        fc: &mut Forward<'t, T>,
        prefix: &str,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let backbone_feat = self.backbone.forward(fc, &join(prefix, "backbone"), x)?;
        let ms_feat = self.ms.forward(fc, &join(prefix, "ms"), x)?;
        let fused = backbone_feat.concat_features(&ms_feat)?;
        fc.log_shape("fused", &fused);
        self.classifier.forward(fc, &join(prefix, "classifier"), fused)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        self.backbone.visit(&join(prefix, "backbone"), f);
        self.ms.visit(&join(prefix, "ms"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        self.backbone.visit_mut(&join(prefix, "backbone"), f);
        self.ms.visit_mut(&join(prefix, "ms"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}

/// Sum of element counts over all learnable parameters (running statistics
/// excluded).
pub fn param_count<T: Element>(block: &dyn Block<T>) -> usize {
    let mut total = 0usize;
    block.visit("", &mut |_, kind, t| {
        if kind == ParamKind::Weight {
            total += t.numel();
        }
    });
    total
}
