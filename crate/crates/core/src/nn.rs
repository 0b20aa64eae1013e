//! Feature extractors: a multilayer perceptron or a small ConvNet.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::generator::ImageShape;
use crate::tensor::{ConvGeom, Tape, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    /// Dense layers on the flattened image.
    #[default]
    Mlp,
    /// 3×3 convolutions (stride 2 in the second layer), relu after each,
    /// then global average pooling.
    Conv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    /// Layer widths (units or channels); the last is the feature dimension.
    pub layers: Vec<usize>,
    /// Append a constant 1 to the features (a bias for the linear head).
    pub bias_feature: bool,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        ExtractorSpec {
            kind: ExtractorKind::Mlp,
            layers: vec![256, 256, 128],
            bias_feature: false,
        }
    }
}

impl ExtractorSpec {
    /// Dimension of the features handed to the head.
    pub fn feature_dim(&self) -> usize {
        self.layers.last().copied().unwrap_or(0) + usize::from(self.bias_feature)
    }
}

const KERNEL: usize = 3;

fn conv_stride(layer: usize) -> usize {
    if layer == 1 {
        2
    } else {
        1
    }
}

/// Convolution geometry of every layer for `shape` inputs.
fn conv_geoms(shape: ImageShape, widths: impl IntoIterator<Item = usize>) -> Vec<ConvGeom> {
    let (mut h, mut w, mut c) = (shape.height, shape.width, shape.channels);
    widths
        .into_iter()
        .enumerate()
        .map(|(i, out)| {
            let g = ConvGeom {
                height: h,
                width: w,
                channels: c,
                kernel: KERNEL,
                stride: conv_stride(i),
                pad: KERNEL / 2,
            };
            (h, w, c) = (g.out_height(), g.out_width(), out);
            g
        })
        .collect()
}

/// Layers `(weight, bias [out])`. Dense weights are `[out, in]`, conv
/// weights `[out, 3·3·in]` with `(ky, kx, c)` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Extractor {
    kind: ExtractorKind,
    shape: ImageShape,
    layers: Vec<(Tensor, Tensor)>,
    bias_feature: bool,
}

impl Extractor {
    /// He-normal weights, zero biases.
    pub fn new(shape: ImageShape, spec: &ExtractorSpec, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut fan_in = match spec.kind {
            ExtractorKind::Mlp => shape.pixels(),
            ExtractorKind::Conv => KERNEL * KERNEL * shape.channels,
        };
        for &out in &spec.layers {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            layers.push((
                Tensor::from_fn(&[out, fan_in], |_| normal.sample(rng)),
                Tensor::zeros(&[out]),
            ));
            fan_in = match spec.kind {
                ExtractorKind::Mlp => out,
                ExtractorKind::Conv => KERNEL * KERNEL * out,
            };
        }
        Extractor {
            kind: spec.kind,
            shape,
            layers,
            bias_feature: spec.bias_feature,
        }
    }

    /// Rebuilds an extractor from stored layers, checking that their shapes
    /// chain from `shape`.
    pub fn from_layers(
        kind: ExtractorKind,
        shape: ImageShape,
        layers: Vec<(Tensor, Tensor)>,
        bias_feature: bool,
    ) -> Result<Self, String> {
        let mut fan_in = match kind {
            ExtractorKind::Mlp => shape.pixels(),
            ExtractorKind::Conv => KERNEL * KERNEL * shape.channels,
        };
        for (i, (w, b)) in layers.iter().enumerate() {
            let out = w.shape().first().copied().unwrap_or(0);
            if w.shape() != [out, fan_in] || b.shape() != [out] {
                return Err(format!(
                    "layer {i}: weight {:?} and bias {:?} do not follow a {fan_in}-wide input",
                    w.shape(),
                    b.shape()
                ));
            }
            fan_in = match kind {
                ExtractorKind::Mlp => out,
                ExtractorKind::Conv => KERNEL * KERNEL * out,
            };
        }
        Ok(Extractor {
            kind,
            shape,
            layers,
            bias_feature,
        })
    }

    pub fn kind(&self) -> ExtractorKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.shape.pixels()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().map_or(0, |(w, _)| w.shape()[0]) + usize::from(self.bias_feature)
    }

    pub fn bias_feature(&self) -> bool {
        self.bias_feature
    }

    pub fn layers(&self) -> &[(Tensor, Tensor)] {
        &self.layers
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> ExtractorVars<'t> {
        let leaf = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        let geoms = match self.kind {
            ExtractorKind::Mlp => Vec::new(),
            ExtractorKind::Conv => conv_geoms(self.shape, self.layers.iter().map(|(w, _)| w.shape()[0])),
        };
        ExtractorVars {
            layers: self.layers.iter().map(|(w, b)| (leaf(w), leaf(b))).collect(),
            geoms,
            bias_feature: self.bias_feature,
        }
    }

    /// Features of a `[B, pixels]` batch, without recording gradients.
    pub fn features(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let tape = Tape::new();
        Ok(self.bind(&tape, false).forward(tape.constant(x.clone()))?.value())
    }
}

#[derive(Clone, Debug)]
pub struct ExtractorVars<'t> {
    pub layers: Vec<(Var<'t>, Var<'t>)>,
    /// Empty for the MLP.
    geoms: Vec<ConvGeom>,
    bias_feature: bool,
}

impl<'t> ExtractorVars<'t> {
    /// `[B, pixels]` images to `[B, feature_dim]` features.
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let mut h = if self.geoms.is_empty() { self.dense(x)? } else { self.conv(x)? };
        if self.bias_feature {
            let ones = h.tape().constant(Tensor::filled(&[h.shape()[0], 1], 1.0));
            h = h.tape().concat(&[h, ones], 1)?;
        }
        Ok(h)
    }

    fn dense(&self, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.matmul_t(*w)?.add(*b)?;
            if i < last {
                h = h.relu()?;
            }
        }
        Ok(h)
    }

    fn conv(&self, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let batch = x.shape()[0];
        let mut h = x;
        let mut cells = 0;
        let mut channels = 0;
        for ((w, b), g) in self.layers.iter().zip(&self.geoms) {
            cells = g.out_height() * g.out_width();
            channels = w.shape()[0];
            h = h.im2col(*g)?.matmul_t(*w)?.add(*b)?.relu()?.reshape(&[batch, cells * channels])?;
        }
        h.reshape(&[batch, cells, channels])?.sum_axis(1)?.mul_scalar(1.0 / cells as f64)
    }
}
