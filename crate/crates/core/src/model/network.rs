//! Image encoder, image decoder and recurrent context encoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{
    impl_params, leaky_relu, leaky_relu_backward, max_pool2, max_pool2_backward, sigmoid, BatchNorm, BatchNormCache,
    Conv2d, ConvTranspose2d, Linear, LstmLayer, LstmLayerCache, Tensor,
};
use super::time::TIME_DIM;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Architecture hyperparameters. Spatial sizes of the inner layers follow
/// from `input_size` and are checked in [`ModelSpec::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub input_size: usize,
    /// Feature maps of the convolution blocks, starting with the 3 input channels.
    pub encoder_channels: Vec<usize>,
    pub latent_dim: usize,
    pub lstm_layers: usize,
    /// Feature maps of the transposed convolutions, ending with 3.
    pub decoder_channels: Vec<usize>,
    pub kernel: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub leaky_slope: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelSpec {
    pub fn paper() -> Self {
        Self {
            input_size: 256,
            encoder_channels: vec![3, 32, 64, 128, 128],
            latent_dim: 128,
            lstm_layers: 4,
            decoder_channels: vec![128, 64, 64, 32, 3],
            kernel: 5,
            bn_eps: 1e-4,
            bn_momentum: 0.1,
            leaky_slope: 0.01,
        }
    }

    /// Same block pattern, sized for a single CPU core.
    pub fn desk() -> Self {
        Self {
            input_size: 32,
            encoder_channels: vec![3, 8, 16],
            latent_dim: 32,
            lstm_layers: 2,
            decoder_channels: vec![16, 8, 8, 8, 3],
            // With this few channels a 0.01 slope often leaves the decoder
            // unable to span the full intensity range for many epochs.
            leaky_slope: 0.2,
            ..Self::paper()
        }
    }

    /// 8x8 inputs and an 8-dimensional latent space, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            input_size: 8,
            encoder_channels: vec![3, 4],
            latent_dim: 8,
            lstm_layers: 2,
            decoder_channels: vec![4, 4, 4, 3, 3],
            ..Self::paper()
        }
    }

    pub fn joint_dim(&self) -> usize {
        self.latent_dim + TIME_DIM
    }

    pub fn pixels(&self) -> usize {
        3 * self.input_size * self.input_size
    }

    /// Spatial size after each encoder block.
    pub fn encoder_sizes(&self) -> Vec<usize> {
        let pad = self.kernel / 2;
        let mut s = self.input_size;
        let mut out = Vec::new();
        for _ in 1..self.encoder_channels.len() {
            s = ((s + 2 * pad).saturating_sub(self.kernel)) / 2 + 1;
            s /= 2;
            out.push(s);
        }
        out
    }

    pub fn decoder_stem(&self) -> usize {
        let up = self.decoder_channels.len().saturating_sub(2) as u32;
        self.input_size >> up
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::config(m));
        if self.encoder_channels.len() < 2 || self.encoder_channels[0] != 3 {
            return err("model.encoder_channels must start at 3 and have at least one block".into());
        }
        if self.decoder_channels.len() < 2 || *self.decoder_channels.last().unwrap() != 3 {
            return err("model.decoder_channels must end at 3".into());
        }
        if self.kernel % 2 == 0 {
            return err("model.kernel must be odd".into());
        }
        if self.latent_dim == 0 || self.lstm_layers == 0 {
            return err("model.latent_dim and model.lstm_layers must be positive".into());
        }
        if self.encoder_sizes().last().is_none_or(|&s| s == 0) {
            return err(format!("input size {} is too small for the encoder", self.input_size));
        }
        let up = self.decoder_channels.len() - 2;
        if self.input_size % (1 << up) != 0 || self.decoder_stem() == 0 {
            return err(format!("input size {} is not divisible by 2^{up} for the decoder stem", self.input_size));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock<S> {
    pub conv: Conv2d<S>,
    pub bn: BatchNorm<S>,
}
impl_params!(EncoderBlock; conv, bn);

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<S> {
    pub blocks: Vec<EncoderBlock<S>>,
    pub fc: Linear<S>,
    pub bn: BatchNorm<S>,
    slope: f64,
}
impl_params!(Encoder; blocks, fc, bn);

struct BlockCache<S> {
    conv_in: Tensor<S>,
    bn: BatchNormCache<S>,
    act_in: Tensor<S>,
    pool_shape: [usize; 4],
    arg: Vec<usize>,
}

pub struct EncoderCache<S> {
    blocks: Vec<BlockCache<S>>,
    flat_shape: [usize; 4],
    fc_in: Tensor<S>,
    bn: BatchNormCache<S>,
}

impl<S: Scalar> Encoder<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, spec: &ModelSpec) -> Self {
        let pad = spec.kernel / 2;
        let blocks = spec
            .encoder_channels
            .windows(2)
            .map(|w| EncoderBlock {
                conv: Conv2d::new(rng, w[0], w[1], spec.kernel, 2, pad),
                bn: BatchNorm::new(w[1], spec.bn_eps, spec.bn_momentum),
            })
            .collect();
        let s = *spec.encoder_sizes().last().expect("validated spec");
        let flat = spec.encoder_channels.last().unwrap() * s * s;
        Self {
            blocks,
            fc: Linear::new(rng, flat, spec.latent_dim),
            bn: BatchNorm::new(spec.latent_dim, spec.bn_eps, spec.bn_momentum),
            slope: spec.leaky_slope,
        }
    }

    pub fn forward(&self, x: &Tensor<S>, train: bool) -> (Tensor<S>, EncoderCache<S>) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, conv_in) = b.conv.forward(&h);
            let (y, bn) = b.bn.forward(&y, train);
            let a = leaky_relu(&y, self.slope);
            let (p, arg) = max_pool2(&a);
            caches.push(BlockCache { conv_in, bn, act_in: y, pool_shape: a.shape, arg });
            h = p;
        }
        let flat_shape = h.shape;
        let n = h.n();
        let flat = h.reshape([n, flat_shape[1] * flat_shape[2] * flat_shape[3], 1, 1]);
        let (y, fc_in) = self.fc.forward(&flat);
        let (z, bn) = self.bn.forward(&y, train);
        (z, EncoderCache { blocks: caches, flat_shape, fc_in, bn })
    }

    pub fn backward(&mut self, cache: &EncoderCache<S>, gz: &Tensor<S>) {
        let g = self.bn.backward(&cache.bn, gz);
        let mut g = self.fc.backward(&cache.fc_in, &g).reshape(cache.flat_shape);
        for (i, (b, c)) in self.blocks.iter_mut().zip(&cache.blocks).enumerate().rev() {
            let ga = max_pool2_backward(c.pool_shape, &c.arg, &g);
            let gy = leaky_relu_backward(&c.act_in, &ga, self.slope);
            let gc = b.bn.backward(&c.bn, &gy);
            match b.conv.backward(&c.conv_in, &gc, i > 0) {
                Some(gx) => g = gx,
                None => break,
            }
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock<S> {
    pub conv: ConvTranspose2d<S>,
    pub bn: BatchNorm<S>,
}
impl_params!(DecoderBlock; conv, bn);

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<S> {
    pub stem: Linear<S>,
    pub blocks: Vec<DecoderBlock<S>>,
    pub head: ConvTranspose2d<S>,
    stem_shape: [usize; 3],
    slope: f64,
}
impl_params!(Decoder; stem, blocks, head);

pub struct DecoderCache<S> {
    stem_in: Tensor<S>,
    stem_out: Tensor<S>,
    blocks: Vec<(Tensor<S>, BatchNormCache<S>, Tensor<S>)>,
    head_in: Tensor<S>,
    out: Tensor<S>,
}

impl<S: Scalar> Decoder<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, spec: &ModelSpec) -> Self {
        let pad = spec.kernel / 2;
        let ch = &spec.decoder_channels;
        let s0 = spec.decoder_stem();
        let blocks = ch[..ch.len() - 1]
            .windows(2)
            .map(|w| DecoderBlock {
                conv: ConvTranspose2d::new(rng, w[0], w[1], spec.kernel, 2, pad, 1),
                bn: BatchNorm::new(w[1], spec.bn_eps, spec.bn_momentum),
            })
            .collect();
        let n = ch.len();
        Self {
            stem: Linear::new(rng, spec.joint_dim(), ch[0] * s0 * s0),
            blocks,
            head: ConvTranspose2d::new(rng, ch[n - 2], ch[n - 1], spec.kernel, 1, pad, 0),
            stem_shape: [ch[0], s0, s0],
            slope: spec.leaky_slope,
        }
    }

    /// Maps joint vectors `[n, latent + 16]` to images in `(0, 1)`.
    pub fn forward(&self, v: &Tensor<S>, train: bool) -> (Tensor<S>, DecoderCache<S>) {
        let n = v.n();
        let (y, stem_in) = self.stem.forward(v);
        let [c, h, w] = self.stem_shape;
        let stem_out = y.reshape([n, c, h, w]);
        let mut x = leaky_relu(&stem_out, self.slope);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, conv_in) = b.conv.forward(&x);
            let (y, bn) = b.bn.forward(&y, train);
            x = leaky_relu(&y, self.slope);
            blocks.push((conv_in, bn, y));
        }
        let (y, head_in) = self.head.forward(&x);
        let out = Tensor::from_vec(y.shape, y.data.iter().map(|&v| sigmoid(v)).collect());
        (out.clone(), DecoderCache { stem_in, stem_out, blocks, head_in, out })
    }

    pub fn backward(&mut self, cache: &DecoderCache<S>, g: &Tensor<S>) -> Tensor<S> {
        let gy = Tensor::from_vec(
            g.shape,
            g.data.iter().zip(&cache.out.data).map(|(&d, &o)| d * o * (S::one() - o)).collect(),
        );
        let mut gx = self.head.backward(&cache.head_in, &gy);
        for (b, (conv_in, bn, act_in)) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let ga = leaky_relu_backward(act_in, &gx, self.slope);
            let gc = b.bn.backward(bn, &ga);
            gx = b.conv.backward(conv_in, &gc);
        }
        let gs = leaky_relu_backward(&cache.stem_out, &gx, self.slope);
        let n = gs.n();
        let gs = gs.reshape([n, self.stem.output_dim(), 1, 1]);
        self.stem.backward(&cache.stem_in, &gs)
    }
}

// ---------------------------------------------------------------------------

/// Stacked LSTM whose final top-layer hidden state is the context embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEncoder<S> {
    pub layers: Vec<LstmLayer<S>>,
}
impl_params!(ContextEncoder; layers);

pub struct ContextCache<S> {
    layers: Vec<LstmLayerCache<S>>,
    steps: usize,
    batch: usize,
}

/// Initial `(h, c)` of every layer, each `[batch, hidden]`.
pub type InitialState<S> = Vec<(Vec<S>, Vec<S>)>;

impl<S: Scalar> ContextEncoder<S> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, spec: &ModelSpec) -> Self {
        let layers = (0..spec.lstm_layers)
            .map(|l| {
                let input = if l == 0 { spec.joint_dim() } else { spec.latent_dim };
                LstmLayer::new(rng, input, spec.latent_dim)
            })
            .collect();
        Self { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    /// `seq[t]` is the `[batch, joint]` input at step `t`, oldest first.
    pub fn forward(&self, seq: &[Vec<S>], init: InitialState<S>, batch: usize) -> (Vec<S>, ContextCache<S>) {
        let mut xs = seq.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (layer, (h0, c0)) in self.layers.iter().zip(init) {
            let (out, cache) = layer.forward(&xs, h0, c0, batch);
            caches.push(cache);
            xs = out;
        }
        let last = xs.pop().expect("nonempty sequence");
        (last, ContextCache { layers: caches, steps: seq.len(), batch })
    }

    /// Gradient of the final embedding back to each step's input.
    pub fn backward(&mut self, cache: &ContextCache<S>, dc: &[S]) -> Vec<Vec<S>> {
        let hd = self.hidden();
        let mut dh = vec![vec![S::zero(); cache.batch * hd]; cache.steps];
        dh[cache.steps - 1] = dc.to_vec();
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            dh = layer.backward(c, &dh, cache.batch);
        }
        dh
    }
}
