//! The LoDNN road network: encoder, dilated context module, decoder and a
//! two-class softmax output.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{ConvSpec, DropoutKey, NnError, ParamStore, Scalar, Tape, Tensor, Var};

/// Dilations `(width, height)` of the seven dilated context layers.
pub const CONTEXT_DILATIONS: [(usize, usize); 7] = [(1, 1), (1, 2), (2, 4), (4, 8), (8, 16), (16, 32), (32, 64)];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid layer {layer}: {reason}")]
    InvalidLayer { layer: String, reason: String },
    #[error("checkpoint does not match model: {0}")]
    ParamMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    DilatedConv,
    MaxPool,
    MaxUnpool,
    Elu,
    SpatialDropout,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// `(kh, kw)`; pooling layers use their window.
    pub kernel: (usize, usize),
    /// `(dw, dh)`; only meaningful on dilated convolutions.
    pub dilation: Option<(usize, usize)>,
    pub out_maps: Option<usize>,
}

impl LayerSpec {
    pub fn conv(kh: usize, kw: usize, out_maps: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            kernel: (kh, kw),
            dilation: None,
            out_maps: Some(out_maps),
        }
    }

    pub fn dilated(kh: usize, kw: usize, dilation: (usize, usize), out_maps: usize) -> Self {
        Self {
            kind: LayerKind::DilatedConv,
            kernel: (kh, kw),
            dilation: Some(dilation),
            out_maps: Some(out_maps),
        }
    }

    fn plain(kind: LayerKind, kernel: (usize, usize)) -> Self {
        Self {
            kind,
            kernel,
            dilation: None,
            out_maps: None,
        }
    }

    pub fn max_pool() -> Self {
        Self::plain(LayerKind::MaxPool, (2, 2))
    }

    pub fn max_unpool() -> Self {
        Self::plain(LayerKind::MaxUnpool, (2, 2))
    }

    pub fn elu() -> Self {
        Self::plain(LayerKind::Elu, (1, 1))
    }

    pub fn spatial_dropout() -> Self {
        Self::plain(LayerKind::SpatialDropout, (1, 1))
    }

    pub fn softmax() -> Self {
        Self::plain(LayerKind::Softmax, (1, 1))
    }

    pub fn is_conv(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::DilatedConv)
    }

    /// Structural rule: dilation only on dilated convolutions, map counts
    /// only on convolutions.
    pub fn check(&self) -> Result<(), String> {
        if self.dilation.is_some() != (self.kind == LayerKind::DilatedConv) {
            return Err(format!("{:?} layer with dilation {:?}", self.kind, self.dilation));
        }
        if self.out_maps.is_some() != self.is_conv() {
            return Err(format!("{:?} layer with out_maps {:?}", self.kind, self.out_maps));
        }
        Ok(())
    }

    fn dilation_or_one(&self) -> (usize, usize) {
        self.dilation.unwrap_or((1, 1))
    }
}

/// Per-layer receptive field in input pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub width_px: usize,
    pub height_px: usize,
}

impl std::fmt::Display for ReceptiveField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width_px, self.height_px)
    }
}

/// Receptive field after each layer, starting from a single pixel.
///
/// A pool multiplies the stride at which later layers grow the field by 2;
/// an unpool divides it again.
pub fn receptive_field(layers: &[LayerSpec]) -> Vec<ReceptiveField> {
    let (mut w, mut h) = (1usize, 1usize);
    let mut stride = 1usize;
    layers
        .iter()
        .map(|l| {
            match l.kind {
                LayerKind::Conv | LayerKind::DilatedConv => {
                    let (dw, dh) = l.dilation_or_one();
                    w += stride * dw * (l.kernel.1 - 1);
                    h += stride * dh * (l.kernel.0 - 1);
                }
                LayerKind::MaxPool => {
                    w += stride * (l.kernel.1 - 1);
                    h += stride * (l.kernel.0 - 1);
                    stride *= 2;
                }
                LayerKind::MaxUnpool => stride = (stride / 2).max(1),
                LayerKind::Elu | LayerKind::SpatialDropout | LayerKind::Softmax => {}
            }
            ReceptiveField { width_px: w, height_px: h }
        })
        .collect()
}

/// The context module with the given width: seven 3×3 dilated layers and a
/// 1×1 projection back to `out_maps`.
pub fn context_layers(maps: usize, out_maps: usize) -> Vec<LayerSpec> {
    let mut layers: Vec<_> = CONTEXT_DILATIONS.iter().map(|&d| LayerSpec::dilated(3, 3, d, maps)).collect();
    layers.push(LayerSpec::conv(1, 1, out_maps));
    layers
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub encoder_maps: usize,
    /// Width of the seven dilated layers.
    pub context_maps: usize,
    /// Convolution layers of the context module, in order.
    pub context: Vec<LayerSpec>,
    pub decoder_maps: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_widths(6, 128)
    }
}

impl ModelConfig {
    pub fn with_widths(input_channels: usize, context_maps: usize) -> Self {
        Self {
            input_channels,
            encoder_maps: 32,
            context_maps,
            context: context_layers(context_maps, 32),
            decoder_maps: 32,
            dropout: 0.25,
        }
    }

    /// Single-channel occupancy input.
    pub fn occupancy() -> Self {
        Self::with_widths(1, 128)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |layer: String, reason: String| Err(ModelError::InvalidLayer { layer, reason });
        if self.input_channels == 0 || self.encoder_maps == 0 || self.decoder_maps == 0 || self.context_maps == 0 {
            return bad("model".into(), "zero feature-map count".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("model".into(), format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.context.len() != 8 {
            return bad("context".into(), format!("{} layers, expected 8", self.context.len()));
        }
        for (i, l) in self.context.iter().enumerate() {
            let name = format!("context {}", i + 1);
            if let Err(reason) = l.check() {
                return bad(name, reason);
            }
            let expected = if i < 7 {
                LayerSpec::dilated(3, 3, CONTEXT_DILATIONS[i], self.context_maps)
            } else {
                LayerSpec::conv(1, 1, self.encoder_maps)
            };
            if *l != expected {
                return bad(name, format!("got {l:?}, expected {expected:?}"));
            }
        }
        Ok(())
    }

    /// Every layer in forward order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = vec![
            LayerSpec::conv(3, 3, self.encoder_maps),
            LayerSpec::elu(),
            LayerSpec::conv(3, 3, self.encoder_maps),
            LayerSpec::elu(),
            LayerSpec::max_pool(),
        ];
        for (i, l) in self.context.iter().enumerate() {
            out.push(*l);
            if i < 7 {
                out.push(LayerSpec::elu());
                out.push(LayerSpec::spatial_dropout());
            }
        }
        out.extend([
            LayerSpec::max_unpool(),
            LayerSpec::conv(3, 3, self.decoder_maps),
            LayerSpec::elu(),
            LayerSpec::conv(3, 3, 2),
            LayerSpec::softmax(),
        ]);
        out
    }

    fn conv_layers(&self) -> Vec<(String, ConvSpec)> {
        let mut out = Vec::new();
        let mut push = |name: String, ci: usize, l: &LayerSpec| {
            let spec = ConvSpec::new(ci, l.out_maps.expect("conv"), l.kernel, l.dilation_or_one()).expect("validated");
            out.push((name, spec));
        };
        push("enc1".into(), self.input_channels, &LayerSpec::conv(3, 3, self.encoder_maps));
        push("enc2".into(), self.encoder_maps, &LayerSpec::conv(3, 3, self.encoder_maps));
        let mut ci = self.encoder_maps;
        for (i, l) in self.context.iter().enumerate() {
            push(format!("ctx{}", i + 1), ci, l);
            ci = l.out_maps.expect("conv");
        }
        push("dec1".into(), ci, &LayerSpec::conv(3, 3, self.decoder_maps));
        push("dec2".into(), self.decoder_maps, &LayerSpec::conv(3, 3, 2));
        out
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.conv_layers()
            .iter()
            .map(|(_, s)| s.out_channels * s.fan_in() + s.out_channels)
            .sum()
    }

    /// Context-module table: filter size, dilation, receptive field, maps
    /// and non-linearity per layer.
    pub fn architecture_table(&self) -> String {
        let rf = receptive_field(&self.context);
        let mut rows: Vec<(String, Vec<String>)> = vec![
            ("Layer".into(), (1..=self.context.len()).map(|i| i.to_string()).collect()),
            ("Filter size".into(), self.context.iter().map(|l| format!("{}x{}", l.kernel.1, l.kernel.0)).collect()),
            (
                "Dilation (width, height)".into(),
                self.context
                    .iter()
                    .map(|l| l.dilation.map_or("-".to_string(), |(w, h)| format!("({w}, {h})")))
                    .collect(),
            ),
            ("Receptive field".into(), rf.iter().map(|r| r.to_string()).collect()),
            (
                "# Feature maps".into(),
                self.context.iter().map(|l| l.out_maps.unwrap_or(0).to_string()).collect(),
            ),
            (
                "Non-linearity".into(),
                self.context
                    .iter()
                    .map(|l| if l.kind == LayerKind::DilatedConv { "ELU" } else { "-" }.to_string())
                    .collect(),
            ),
        ];
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        let col_w = rows.iter().flat_map(|(_, c)| c.iter().map(String::len)).max().unwrap_or(0);
        let mut out = String::new();
        for (label, cells) in rows.drain(..) {
            let _ = write!(out, "{label:<label_w$}");
            for c in cells {
                let _ = write!(out, " | {c:>col_w$}");
            }
            out.push('\n');
        }
        out
    }
}

/// Whether dropout is active, and its randomness if so.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    Training { seed: u64, step: u64 },
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[N, 2, H, W]`; channel 1 is the road probability.
    pub probs: Var,
    /// `[N, C, H, W]` of the feature maps entering the context module.
    pub context_dims: [usize; 4],
}

#[derive(Debug, Clone)]
struct ConvLayer {
    spec: ConvSpec,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
pub struct Lodnn<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layers: Vec<ConvLayer>,
}

impl<T: Scalar> Lodnn<T> {
    /// Fan-in-scaled uniform weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, spec) in config.conv_layers() {
            let bound = (6.0 / spec.fan_in() as f64).sqrt();
            let shape = spec.weight_shape();
            let n: usize = shape.iter().product();
            let w = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-bound..bound))).collect();
            params.insert(format!("{name}.weight"), Tensor::from_vec(&shape, w)?);
            params.insert(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]));
        }
        Self::from_params(config, params)
    }

    /// Wraps an existing parameter set, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let convs = config.conv_layers();
        if params.len() != 2 * convs.len() {
            return Err(ModelError::ParamMismatch(format!("{} tensors, expected {}", params.len(), 2 * convs.len())));
        }
        let mut layers = Vec::new();
        for (i, (name, spec)) in convs.into_iter().enumerate() {
            for (j, (suffix, shape)) in [("weight", spec.weight_shape().to_vec()), ("bias", vec![spec.out_channels])]
                .into_iter()
                .enumerate()
            {
                let expected = format!("{name}.{suffix}");
                let k = 2 * i + j;
                if params.name(k) != expected || params.by_index(k).shape() != shape {
                    return Err(ModelError::ParamMismatch(format!(
                        "tensor {k} is {} {:?}, expected {expected} {shape:?}",
                        params.name(k),
                        params.by_index(k).shape()
                    )));
                }
            }
            layers.push(ConvLayer {
                spec,
                weight: 2 * i,
                bias: 2 * i + 1,
            });
        }
        Ok(Self { config, params, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> Lodnn<U> {
        Lodnn {
            config: self.config.clone(),
            params: self.params.cast(),
            layers: self.layers.clone(),
        }
    }

    /// Records every parameter on the tape as a leaf, in store order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|(_, t)| tape.leaf(t.clone())).collect()
    }

    pub fn forward(&self, tape: &mut Tape<T>, bound: &[Var], input: Var, mode: Mode) -> Result<ForwardOutput, ModelError> {
        let [_, c, h, w] = tape.value(input).dims4()?;
        if c != self.config.input_channels {
            return Err(NnError::Contract(format!("input has {c} channels, model expects {}", self.config.input_channels)).into());
        }
        if h % 2 != 0 || w % 2 != 0 {
            return Err(NnError::Contract(format!("input spatial size {h}x{w} must be even")).into());
        }
        let conv = |tape: &mut Tape<T>, i: usize, x: Var| -> Result<Var, NnError> {
            let l = &self.layers[i];
            tape.conv2d(x, bound[l.weight], bound[l.bias], l.spec)
        };
        let mut x = conv(tape, 0, input)?;
        x = tape.elu(x)?;
        x = conv(tape, 1, x)?;
        x = tape.elu(x)?;
        let (pooled, indices) = tape.maxpool2(x)?;
        let context_dims = tape.value(pooled).dims4()?;
        x = pooled;
        for k in 0..7 {
            x = conv(tape, 2 + k, x)?;
            x = tape.elu(x)?;
            x = match mode {
                Mode::Inference => x,
                Mode::Training { seed, step } => {
                    let key = DropoutKey { seed, layer: k as u64, step };
                    tape.spatial_dropout(x, self.config.dropout, true, key)?
                }
            };
        }
        x = conv(tape, 9, x)?;
        x = tape.maxunpool2(x, &indices)?;
        x = conv(tape, 10, x)?;
        x = tape.elu(x)?;
        x = conv(tape, 11, x)?;
        let probs = tape.softmax_channels(x)?;
        Ok(ForwardOutput { probs, context_dims })
    }

    /// Inference-mode class probabilities `[N, 2, H, W]`.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.leaf(input.clone());
        let out = self.forward(&mut tape, &bound, x, Mode::Inference)?;
        Ok(tape.value(out.probs).clone())
    }
}

/// Road-probability plane of image `b` from `[N, 2, H, W]` probabilities.
pub fn road_channel<T: Scalar>(probs: &Tensor<T>, b: usize) -> Vec<f32> {
    let [_, c, h, w] = probs.dims4().expect("probabilities are NCHW");
    let hw = h * w;
    let start = (b * c + 1) * hw;
    probs.data()[start..start + hw].iter().map(|v| v.as_f64() as f32).collect()
}
