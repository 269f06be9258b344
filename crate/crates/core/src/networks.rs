//! The encoder, the N independent decoders, and the adversary.
//!
//! Layout follows the HiDDeN-style backbone. Unless stated otherwise every
//! convolution has 64 kernels of 3x3, stride 1, pad 1, and sits in a
//! Conv-BN-ReLU block.
//!
//! * Encoder: 4 blocks over the cover -> concat [features(64), cover(3),
//!   replicated messages (N*t)] -> 1 block -> plain 3-channel conv.
//! * Decoder (xN, same structure, independent weights): 8 blocks (the last
//!   with t kernels) -> global average pool -> linear t->t -> sigmoid.
//! * Adversary: 3 blocks -> global average pool -> linear 64->1 -> sigmoid.
//!
//! The decoders pool globally, so a stego of any spatial size decodes to t
//! soft bits. Training binds the same structures in batch-norm batch mode;
//! inference binds everything as constants and normalizes by running
//! statistics, which exist from initialization (mean 0, var 1) so an
//! untrained model still evaluates.

use crate::autodiff::{AutodiffError, BnBatchStats, Graph, Scalar, Tensor, Var};
use crate::bitmsg::BitMessage;
use crate::imaging::ImageTensor;
use crate::rng::SplitMix64;
use thiserror::Error;

pub const FEATURE_CHANNELS: usize = 64;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("expected {expected} messages (one per decoder), got {got}")]
    WrongMessageCount { expected: usize, got: usize },
    #[error("message {index} has {got} bits, model expects {expected}")]
    WrongMessageLength {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("cover is {got_h}x{got_w}, model is configured for {expected}x{expected}")]
    WrongCoverSize {
        got_h: usize,
        got_w: usize,
        expected: usize,
    },
    #[error("decoder index {0} out of range, model has {1} decoders")]
    DecoderIndex(usize, usize),
    #[error("model needs at least 2 decoders, got {0}")]
    TooFewDecoders(usize),
    #[error("message length must be at least 1")]
    ZeroBits,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Architecture hyperparameters: message bits `t`, decoder count `N`, and
/// the square cover size the encoder is trained for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub bits: usize,
    pub decoders: usize,
    pub image_size: usize,
}

impl ModelConfig {
    pub fn new(bits: usize, decoders: usize, image_size: usize) -> Result<Self, NetworkError> {
        if bits == 0 {
            return Err(NetworkError::ZeroBits);
        }
        if decoders < 2 {
            return Err(NetworkError::TooFewDecoders(decoders));
        }
        Ok(Self {
            bits,
            decoders,
            image_size,
        })
    }

    /// Channel width of the encoder's concat volume: 64 + 3 + N*t.
    pub fn concat_channels(&self) -> usize {
        FEATURE_CHANNELS + 3 + self.decoders * self.bits
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dParams {
    pub weight: Tensor<f32>,
    pub bias: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor<f32>,
    pub beta: Tensor<f32>,
    pub running_mean: Tensor<f32>,
    pub running_var: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub conv: Conv2dParams,
    pub bn: BatchNormParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    pub weight: Tensor<f32>,
    pub bias: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub features: Vec<ConvBlock>,
    pub fuse: ConvBlock,
    pub output: Conv2dParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub blocks: Vec<ConvBlock>,
    pub head: LinearParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryParams {
    pub blocks: Vec<ConvBlock>,
    pub head: LinearParams,
}

/// Every learnable tensor plus batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    pub encoder: EncoderParams,
    pub decoders: Vec<DecoderParams>,
    pub adversary: AdversaryParams,
}

fn kaiming_conv(
    rng: &mut SplitMix64,
    c_out: usize,
    c_in: usize,
    k: usize,
    gain2: f64,
) -> Conv2dParams {
    // uniform in [-bound, bound], bound = sqrt(3 * gain^2 / fan_in)
    let fan_in = (c_in * k * k) as f64;
    let bound = (3.0 * gain2 / fan_in).sqrt() as f32;
    let data = (0..c_out * c_in * k * k)
        .map(|_| (rng.next_f32() * 2.0 - 1.0) * bound)
        .collect();
    Conv2dParams {
        weight: Tensor::from_vec(&[c_out, c_in, k, k], data),
        bias: Tensor::zeros(&[c_out]),
    }
}

fn kaiming_linear(rng: &mut SplitMix64, f_out: usize, f_in: usize) -> LinearParams {
    let bound = (3.0 / f_in as f64).sqrt() as f32;
    let data = (0..f_out * f_in)
        .map(|_| (rng.next_f32() * 2.0 - 1.0) * bound)
        .collect();
    LinearParams {
        weight: Tensor::from_vec(&[f_out, f_in], data),
        bias: Tensor::zeros(&[f_out]),
    }
}

fn fresh_bn(channels: usize) -> BatchNormParams {
    BatchNormParams {
        gamma: Tensor::from_vec(&[channels], vec![1.0; channels]),
        beta: Tensor::zeros(&[channels]),
        running_mean: Tensor::zeros(&[channels]),
        running_var: Tensor::from_vec(&[channels], vec![1.0; channels]),
    }
}

fn block(rng: &mut SplitMix64, c_in: usize, c_out: usize) -> ConvBlock {
    ConvBlock {
        // relu follows, so gain^2 = 2
        conv: kaiming_conv(rng, c_out, c_in, 3, 2.0),
        bn: fresh_bn(c_out),
    }
}

impl ModelParams {
    /// Fresh network with Kaiming-style fan-in initialization, gamma = 1,
    /// beta = 0, zero biases, running stats at (0, 1).
    pub fn init(cfg: ModelConfig, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let f = FEATURE_CHANNELS;
        let encoder = EncoderParams {
            features: vec![
                block(&mut rng, 3, f),
                block(&mut rng, f, f),
                block(&mut rng, f, f),
                block(&mut rng, f, f),
            ],
            fuse: block(&mut rng, cfg.concat_channels(), f),
            output: kaiming_conv(&mut rng, 3, f, 3, 1.0),
        };
        let head_gain: f32 = std::env::var("DSTG_HEAD_GAIN")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(1.0);
        let decoders = (0..cfg.decoders)
            .map(|_| {
                let mut blocks = vec![block(&mut rng, 3, f)];
                for _ in 0..6 {
                    blocks.push(block(&mut rng, f, f));
                }
                blocks.push(block(&mut rng, f, cfg.bits));
                let mut head = kaiming_linear(&mut rng, cfg.bits, cfg.bits);
                for v in head.weight.data_mut() {
                    *v *= head_gain;
                }
                DecoderParams {
                    blocks,
                    head,
                }
            })
            .collect();
        let adversary = AdversaryParams {
            blocks: vec![
                block(&mut rng, 3, f),
                block(&mut rng, f, f),
                block(&mut rng, f, f),
            ],
            head: kaiming_linear(&mut rng, 1, f),
        };
        Self {
            cfg,
            encoder,
            decoders,
            adversary,
        }
    }

    fn block_tensors<'a>(b: &'a ConvBlock, out: &mut Vec<&'a Tensor<f32>>) {
        out.push(&b.conv.weight);
        out.push(&b.conv.bias);
        out.push(&b.bn.gamma);
        out.push(&b.bn.beta);
    }

    fn block_tensors_mut<'a>(b: &'a mut ConvBlock, out: &mut Vec<&'a mut Tensor<f32>>) {
        out.push(&mut b.conv.weight);
        out.push(&mut b.conv.bias);
        out.push(&mut b.bn.gamma);
        out.push(&mut b.bn.beta);
    }

    /// Trainable tensors of the encoder and all decoders, in the canonical
    /// order shared with [`BoundModel::bind`].
    pub fn ed_tensors(&self) -> Vec<&Tensor<f32>> {
        let mut out = Vec::new();
        for b in &self.encoder.features {
            Self::block_tensors(b, &mut out);
        }
        Self::block_tensors(&self.encoder.fuse, &mut out);
        out.push(&self.encoder.output.weight);
        out.push(&self.encoder.output.bias);
        for d in &self.decoders {
            for b in &d.blocks {
                Self::block_tensors(b, &mut out);
            }
            out.push(&d.head.weight);
            out.push(&d.head.bias);
        }
        out
    }

    pub fn ed_tensors_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        let mut out = Vec::new();
        for b in &mut self.encoder.features {
            Self::block_tensors_mut(b, &mut out);
        }
        Self::block_tensors_mut(&mut self.encoder.fuse, &mut out);
        out.push(&mut self.encoder.output.weight);
        out.push(&mut self.encoder.output.bias);
        for d in &mut self.decoders {
            for b in &mut d.blocks {
                Self::block_tensors_mut(b, &mut out);
            }
            out.push(&mut d.head.weight);
            out.push(&mut d.head.bias);
        }
        out
    }

    /// Trainable tensors of the adversary.
    pub fn adv_tensors(&self) -> Vec<&Tensor<f32>> {
        let mut out = Vec::new();
        for b in &self.adversary.blocks {
            Self::block_tensors(b, &mut out);
        }
        out.push(&self.adversary.head.weight);
        out.push(&self.adversary.head.bias);
        out
    }

    pub fn adv_tensors_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        let mut out = Vec::new();
        for b in &mut self.adversary.blocks {
            Self::block_tensors_mut(b, &mut out);
        }
        out.push(&mut self.adversary.head.weight);
        out.push(&mut self.adversary.head.bias);
        out
    }

    /// Every batch-norm layer in the canonical traversal order (encoder
    /// blocks, fuse, decoders, adversary) used for `BnUpdate.layer` indices.
    pub fn bn_layers_mut(&mut self) -> Vec<&mut BatchNormParams> {
        let mut out = Vec::new();
        for b in &mut self.encoder.features {
            out.push(&mut b.bn);
        }
        out.push(&mut self.encoder.fuse.bn);
        for d in &mut self.decoders {
            for b in &mut d.blocks {
                out.push(&mut b.bn);
            }
        }
        for b in &mut self.adversary.blocks {
            out.push(&mut b.bn);
        }
        out
    }
}

/// Which parameter group receives gradients in a bound graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainSide {
    /// Everything is a constant (inference).
    None,
    /// Encoder and decoders trainable, adversary frozen.
    EncoderDecoders,
    /// Adversary trainable, encoder and decoders frozen.
    Adversary,
}

/// Per-forward normalization policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnUse {
    /// Normalize by batch statistics; `track` collects them for running
    /// updates.
    Batch { track: bool },
    /// Normalize by stored running statistics.
    Eval,
}

/// Batch statistics captured for one batch-norm layer (canonical index).
pub struct BnUpdate<S: Scalar = f32> {
    pub layer: usize,
    pub stats: BnBatchStats<S>,
}

struct BoundConv {
    w: Var,
    b: Var,
}

struct BoundBn<S: Scalar> {
    gamma: Var,
    beta: Var,
    running_mean: Vec<S>,
    running_var: Vec<S>,
    layer: usize,
}

struct BoundBlock<S: Scalar> {
    conv: BoundConv,
    bn: BoundBn<S>,
}

struct BoundLinear {
    w: Var,
    b: Var,
}

/// The model's tensors inserted into one graph. `trainable_vars` aligns
/// with `ed_tensors()` (or `adv_tensors()`) for gradient extraction.
pub struct BoundModel<S: Scalar = f32> {
    cfg: ModelConfig,
    enc_features: Vec<BoundBlock<S>>,
    enc_fuse: BoundBlock<S>,
    enc_output: BoundConv,
    decoders: Vec<(Vec<BoundBlock<S>>, BoundLinear)>,
    adversary: (Vec<BoundBlock<S>>, BoundLinear),
    pub trainable_vars: Vec<Var>,
    bn_updates: Vec<BnUpdate<S>>,
}

#[derive(Clone, Copy)]
enum BlockRef {
    EncFeature(usize),
    EncFuse,
    Decoder(usize, usize),
    Adversary(usize),
}

impl<S: Scalar> BoundModel<S> {
    pub fn bind(g: &mut Graph<S>, params: &ModelParams, side: TrainSide) -> Self {
        let mut trainable_vars = Vec::new();
        let mut bn_counter = 0usize;

        fn insert<S: Scalar>(
            g: &mut Graph<S>,
            t: &Tensor<f32>,
            trainable: bool,
            vars: &mut Vec<Var>,
        ) -> Var {
            let v = if trainable {
                g.param(t.cast())
            } else {
                g.constant(t.cast())
            };
            if trainable {
                vars.push(v);
            }
            v
        }
        fn bind_block<S: Scalar>(
            g: &mut Graph<S>,
            b: &ConvBlock,
            trainable: bool,
            vars: &mut Vec<Var>,
            counter: &mut usize,
        ) -> BoundBlock<S> {
            let w = insert(g, &b.conv.weight, trainable, vars);
            let bias = insert(g, &b.conv.bias, trainable, vars);
            let gamma = insert(g, &b.bn.gamma, trainable, vars);
            let beta = insert(g, &b.bn.beta, trainable, vars);
            let layer = *counter;
            *counter += 1;
            BoundBlock {
                conv: BoundConv { w, b: bias },
                bn: BoundBn {
                    gamma,
                    beta,
                    running_mean: b.bn.running_mean.cast().into_data(),
                    running_var: b.bn.running_var.cast().into_data(),
                    layer,
                },
            }
        }

        let ed = side == TrainSide::EncoderDecoders;
        let adv = side == TrainSide::Adversary;

        let enc_features = params
            .encoder
            .features
            .iter()
            .map(|b| bind_block(g, b, ed, &mut trainable_vars, &mut bn_counter))
            .collect();
        let enc_fuse = bind_block(g, &params.encoder.fuse, ed, &mut trainable_vars, &mut bn_counter);
        let ow = insert(g, &params.encoder.output.weight, ed, &mut trainable_vars);
        let ob = insert(g, &params.encoder.output.bias, ed, &mut trainable_vars);
        let enc_output = BoundConv { w: ow, b: ob };

        let decoders = params
            .decoders
            .iter()
            .map(|d| {
                let blocks: Vec<BoundBlock<S>> = d
                    .blocks
                    .iter()
                    .map(|b| bind_block(g, b, ed, &mut trainable_vars, &mut bn_counter))
                    .collect();
                let hw = insert(g, &d.head.weight, ed, &mut trainable_vars);
                let hb = insert(g, &d.head.bias, ed, &mut trainable_vars);
                (blocks, BoundLinear { w: hw, b: hb })
            })
            .collect();

        let adv_blocks: Vec<BoundBlock<S>> = params
            .adversary
            .blocks
            .iter()
            .map(|b| bind_block(g, b, adv, &mut trainable_vars, &mut bn_counter))
            .collect();
        let ahw = insert(g, &params.adversary.head.weight, adv, &mut trainable_vars);
        let ahb = insert(g, &params.adversary.head.bias, adv, &mut trainable_vars);

        Self {
            cfg: params.cfg,
            enc_features,
            enc_fuse,
            enc_output,
            decoders,
            adversary: (adv_blocks, BoundLinear { w: ahw, b: ahb }),
            trainable_vars,
            bn_updates: Vec::new(),
        }
    }

    fn block(&self, which: BlockRef) -> &BoundBlock<S> {
        match which {
            BlockRef::EncFeature(i) => &self.enc_features[i],
            BlockRef::EncFuse => &self.enc_fuse,
            BlockRef::Decoder(d, i) => &self.decoders[d].0[i],
            BlockRef::Adversary(i) => &self.adversary.0[i],
        }
    }

    fn conv_bn_relu(
        &mut self,
        g: &mut Graph<S>,
        x: Var,
        which: BlockRef,
        bn_use: BnUse,
    ) -> Result<Var, NetworkError> {
        let (conv_w, conv_b, gamma, beta, layer) = {
            let b = self.block(which);
            (b.conv.w, b.conv.b, b.bn.gamma, b.bn.beta, b.bn.layer)
        };
        let y = g.conv2d(x, conv_w, conv_b, 1, 1)?;
        let normed = match bn_use {
            BnUse::Batch { track } => {
                let (v, stats) = g.batch_norm_batch(y, gamma, beta, BN_EPS)?;
                if track {
                    self.bn_updates.push(BnUpdate { layer, stats });
                }
                v
            }
            BnUse::Eval => {
                let b = self.block(which);
                let (rm, rv) = (b.bn.running_mean.clone(), b.bn.running_var.clone());
                g.batch_norm_eval(y, gamma, beta, &rm, &rv, BN_EPS)?
            }
        };
        Ok(g.relu(normed)?)
    }

    /// Encoder forward: cover `[B,3,H,W]` and replicated messages
    /// `[B,N*t,H,W]` to a float stego `[B,3,H,W]`.
    pub fn encode(
        &mut self,
        g: &mut Graph<S>,
        cover: Var,
        replicated_msgs: Var,
        bn_use: BnUse,
    ) -> Result<Var, NetworkError> {
        let mut x = cover;
        for i in 0..self.enc_features.len() {
            x = self.conv_bn_relu(g, x, BlockRef::EncFeature(i), bn_use)?;
        }
        let cat = g.concat_channels(&[x, cover, replicated_msgs])?;
        let fused = self.conv_bn_relu(g, cat, BlockRef::EncFuse, bn_use)?;
        Ok(g.conv2d(fused, self.enc_output.w, self.enc_output.b, 1, 1)?)
    }

    /// Decoder `which` forward: stego `[B,3,H,W]` to soft bits `[B,t]`.
    pub fn decode(
        &mut self,
        g: &mut Graph<S>,
        which: usize,
        stego: Var,
        bn_use: BnUse,
    ) -> Result<Var, NetworkError> {
        if which >= self.decoders.len() {
            return Err(NetworkError::DecoderIndex(which, self.decoders.len()));
        }
        let mut x = stego;
        for i in 0..self.decoders[which].0.len() {
            x = self.conv_bn_relu(g, x, BlockRef::Decoder(which, i), bn_use)?;
        }
        let pooled = g.adaptive_avg_pool(x)?;
        let head = &self.decoders[which].1;
        let z = g.linear(pooled, head.w, head.b)?;
        Ok(g.sigmoid(z)?)
    }

    /// Adversary forward: image batch `[B,3,H,W]` to stego probability `[B,1]`.
    pub fn discriminate(
        &mut self,
        g: &mut Graph<S>,
        img: Var,
        bn_use: BnUse,
    ) -> Result<Var, NetworkError> {
        let mut x = img;
        for i in 0..self.adversary.0.len() {
            x = self.conv_bn_relu(g, x, BlockRef::Adversary(i), bn_use)?;
        }
        let pooled = g.adaptive_avg_pool(x)?;
        let head = &self.adversary.1;
        let z = g.linear(pooled, head.w, head.b)?;
        Ok(g.sigmoid(z)?)
    }

    /// Batch statistics collected by `BnUse::Batch { track: true }` forwards.
    pub fn take_bn_updates(&mut self) -> Vec<BnUpdate<S>> {
        std::mem::take(&mut self.bn_updates)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }
}

/// Fold tracked batch statistics into the running statistics with momentum
/// [`BN_MOMENTUM`]; the variance uses the unbiased estimate.
pub fn apply_bn_updates(params: &mut ModelParams, updates: &[BnUpdate<f32>]) {
    let mut layers = params.bn_layers_mut();
    let momentum = BN_MOMENTUM as f32;
    for u in updates {
        let bn = &mut layers[u.layer];
        let n = u.stats.count as f64;
        let correction = (if u.stats.count > 1 { n / (n - 1.0) } else { 1.0 }) as f32;
        for (rm, &m) in bn
            .running_mean
            .data_mut()
            .iter_mut()
            .zip(u.stats.mean.iter())
        {
            *rm = (1.0 - momentum) * *rm + momentum * m;
        }
        for (rv, &v) in bn
            .running_var
            .data_mut()
            .iter_mut()
            .zip(u.stats.var.iter())
        {
            *rv = (1.0 - momentum) * *rv + momentum * (v * correction);
        }
    }
}

/// Soft decoder outputs, each in (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SoftBits(pub Vec<f32>);

/// Threshold at 0.5 (values >= 0.5 become 1).
pub fn harden(soft: &SoftBits) -> BitMessage {
    BitMessage::from_bits(
        soft.0
            .iter()
            .map(|&v| if v >= 0.5 { 1 } else { 0 })
            .collect(),
    )
    .expect("soft bits are never empty")
}

/// One bit broadcast to a constant `h x w` plane, giving `[t, h, w]`.
pub fn replicate_bits(m: &BitMessage, h: usize, w: usize) -> Tensor<f32> {
    let mut data = vec![0.0f32; m.len() * h * w];
    for (i, &b) in m.bits().iter().enumerate() {
        if b == 1 {
            data[i * h * w..(i + 1) * h * w].fill(1.0);
        }
    }
    Tensor::from_vec(&[m.len(), h, w], data)
}

/// Stack per-decoder replicated messages for a batch of samples into
/// `[B, N*t, h, w]`, decoder-index order within each sample.
pub fn replicate_batch(msgs: &[Vec<BitMessage>], h: usize, w: usize) -> Tensor<f32> {
    let b = msgs.len();
    let n = msgs[0].len();
    let t = msgs[0][0].len();
    let mut data = vec![0.0f32; b * n * t * h * w];
    for (bi, per_decoder) in msgs.iter().enumerate() {
        for (d, m) in per_decoder.iter().enumerate() {
            let rep = replicate_bits(m, h, w);
            let base = (bi * n + d) * t * h * w;
            data[base..base + t * h * w].copy_from_slice(rep.data());
        }
    }
    Tensor::from_vec(&[b, n * t, h, w], data)
}

fn image_to_batch(img: &ImageTensor) -> Tensor<f32> {
    Tensor::from_vec(&[1, 3, img.height, img.width], img.data.clone())
}

/// Inference-mode embedding of one message per decoder into one cover.
/// The returned stego is the raw float output; clamping and 8-bit
/// quantization happen only when the image is exported.
pub fn encode(
    params: &ModelParams,
    cover: &ImageTensor,
    msgs: &[BitMessage],
) -> Result<ImageTensor, NetworkError> {
    let cfg = params.cfg;
    if msgs.len() != cfg.decoders {
        return Err(NetworkError::WrongMessageCount {
            expected: cfg.decoders,
            got: msgs.len(),
        });
    }
    for (index, m) in msgs.iter().enumerate() {
        if m.len() != cfg.bits {
            return Err(NetworkError::WrongMessageLength {
                index,
                got: m.len(),
                expected: cfg.bits,
            });
        }
    }
    if cover.height != cfg.image_size || cover.width != cfg.image_size {
        return Err(NetworkError::WrongCoverSize {
            got_h: cover.height,
            got_w: cover.width,
            expected: cfg.image_size,
        });
    }
    let mut g = Graph::<f32>::new();
    let mut bound = BoundModel::bind(&mut g, params, TrainSide::None);
    let cover_var = g.constant(image_to_batch(cover));
    let rep_var = {
        let rep = replicate_batch(std::slice::from_ref(&msgs.to_vec()), cover.height, cover.width);
        g.constant(rep)
    };
    let stego = bound.encode(&mut g, cover_var, rep_var, BnUse::Eval)?;
    let data = g.value(stego).data().to_vec();
    Ok(ImageTensor {
        height: cover.height,
        width: cover.width,
        data,
    })
}

/// Inference-mode extraction of decoder `which`'s soft bits from a stego of
/// any spatial size.
pub fn decode(
    params: &ModelParams,
    which: usize,
    stego: &ImageTensor,
) -> Result<SoftBits, NetworkError> {
    if which >= params.cfg.decoders {
        return Err(NetworkError::DecoderIndex(which, params.cfg.decoders));
    }
    let mut g = Graph::<f32>::new();
    let mut bound = BoundModel::bind(&mut g, params, TrainSide::None);
    let stego_var = g.constant(image_to_batch(stego));
    let soft = bound.decode(&mut g, which, stego_var, BnUse::Eval)?;
    Ok(SoftBits(g.value(soft).data().to_vec()))
}

/// Inference-mode stego probability for one image.
pub fn discriminate(params: &ModelParams, img: &ImageTensor) -> Result<f64, NetworkError> {
    let mut g = Graph::<f32>::new();
    let mut bound = BoundModel::bind(&mut g, params, TrainSide::None);
    let img_var = g.constant(image_to_batch(img));
    let p = bound.discriminate(&mut g, img_var, BnUse::Eval)?;
    Ok(g.value(p).data()[0] as f64)
}
