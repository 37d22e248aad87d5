//! The forecasting detector: networks, training and scoring.
//!
//! A frame is embedded by a convolutional encoder, its embedding is
//! concatenated with sinusoidal encodings of the inter-arrival time and the
//! time since the start of the day, and a stacked LSTM summarises the `k`
//! previous samples into a context vector. The decoder maps the context,
//! augmented with the target's own time encoding, to a forecast of the next
//! frame; the squared error of that forecast is the anomaly score.

pub mod checkpoint;
pub mod map;
pub mod network;
pub mod nn;
pub mod preprocess;
pub mod time;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{Blob, ModelCheckpoint};
pub use map::{anomaly_map, MapStats};
pub use network::{ContextEncoder, Decoder, Encoder, InitialState, ModelSpec};
pub use nn::{Param, Params, Tensor};
pub use preprocess::{preprocess, PreprocessStats};
pub use time::{encode_time, joint_embedding, time_features, TimeToggles, TIME_DIM};

use crate::data::{build_context_windows, ContextWindow, CoreConfig, DayId, DaySequence, TimeOffsets};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Squared Frobenius distance between a frame and its forecast, accumulated
/// in f64.
pub fn squared_error<S: Scalar>(x: &[S], x_hat: &[S]) -> f64 {
    assert_eq!(x.len(), x_hat.len(), "frame and forecast sizes differ");
    x.iter().zip(x_hat).map(|(a, b)| (a.f64() - b.f64()).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    pub seed: u64,
    pub use_tau: bool,
    pub use_delta: bool,
    pub use_pretrained: bool,
    /// Start the context encoder from zeros instead of a seeded normal draw.
    pub zero_initial_state: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 32,
            pretrain_epochs: 20,
            train_epochs: 20,
            seed: 0,
            use_tau: true,
            use_delta: true,
            use_pretrained: true,
            zero_initial_state: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("train.lr must be positive and train.weight_decay nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be at least 1"));
        }
        Ok(())
    }

    pub fn toggles(&self) -> TimeToggles {
        TimeToggles { use_tau: self.use_tau, use_delta: self.use_delta }
    }
}

/// Everything needed to rebuild a detector, echoed into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub spec: ModelSpec,
    pub core: CoreConfig,
    pub train: TrainConfig,
    pub stats: PreprocessStats,
}

/// Mean loss per epoch plus the loss of the very first batch, measured
/// before any update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// A day with preprocessed inputs and its context windows.
#[derive(Debug, Clone)]
pub struct PreparedDay<S> {
    pub day_id: DayId,
    pub inputs: Vec<Vec<S>>,
    pub windows: Vec<ContextWindow>,
}

/// One optimisation unit.
pub enum Batch<'a, S> {
    /// Frames to reconstruct, `[n, 3, size, size]`.
    Reconstruction(&'a Tensor<S>),
    /// Forecast the given target indices of a day.
    Forecast { day: &'a PreparedDay<S>, targets: &'a [usize] },
}

/// Per-sample outputs of inference over a day.
#[derive(Debug, Clone, Default)]
pub struct DayInference<S> {
    pub scores: Vec<f64>,
    pub contexts: Vec<Vec<S>>,
    pub forecasts: Vec<Vec<S>>,
    pub inputs: Vec<Vec<S>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct InferenceOptions {
    pub keep_contexts: bool,
    pub keep_forecasts: bool,
}

#[derive(Debug)]
struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
}

impl Adam {
    fn new(config: &TrainConfig) -> Self {
        Self { lr: config.lr, weight_decay: config.weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0 }
    }

    fn step<S: Scalar>(&mut self, params: Vec<(String, &mut Param<S>)>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let (wd, eps) = (S::of(self.weight_decay), S::of(self.eps));
        let step = S::of(self.lr / c1);
        let c2 = S::of(c2);
        for (_, p) in params.into_iter().filter(|(_, p)| p.trainable) {
            for i in 0..p.value.len() {
                let g = p.grad[i] + wd * p.value[i];
                p.m[i] = b1 * p.m[i] + (S::one() - b1) * g;
                p.v[i] = b2 * p.v[i] + (S::one() - b2) * g * g;
                p.value[i] -= step * p.m[i] / ((p.v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Stable 64-bit hash used to derive per-sequence seeds.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastAd<S> {
    pub config: ModelConfig,
    pub encoder: Encoder<S>,
    pub decoder: Decoder<S>,
    pub context: ContextEncoder<S>,
}

impl<S: Scalar> Params<S> for ForecastAd<S> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<S>)>) {
        self.encoder.params(&nn::join(prefix, "encoder"), out);
        self.decoder.params(&nn::join(prefix, "decoder"), out);
        self.context.params(&nn::join(prefix, "context"), out);
    }
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<S>)>) {
        self.encoder.params_mut(&nn::join(prefix, "encoder"), out);
        self.decoder.params_mut(&nn::join(prefix, "decoder"), out);
        self.context.params_mut(&nn::join(prefix, "context"), out);
    }
}

struct ForecastTape<S> {
    encoder: network::EncoderCache<S>,
    context: network::ContextCache<S>,
    decoder: network::DecoderCache<S>,
    /// Encoder row used by each `(step, batch)` position of the sequence.
    rows: Vec<Vec<usize>>,
    encoded: usize,
    grad: Tensor<S>,
}

impl<S: Scalar> ForecastAd<S> {
    /// Freshly initialised detector; weights depend only on `config`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.spec.validate()?;
        config.core.validate()?;
        config.train.validate()?;
        config.stats.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
        let encoder = Encoder::new(&mut rng, &config.spec);
        let decoder = Decoder::new(&mut rng, &config.spec);
        let context = ContextEncoder::new(&mut rng, &config.spec);
        Ok(Self { config, encoder, decoder, context })
    }

    /// New detector for `config` whose encoder and decoder are copied from a
    /// pre-trained checkpoint.
    pub fn from_pretrained(config: ModelConfig, pretrained: &ModelCheckpoint<S>) -> Result<Self> {
        if pretrained.config.spec != config.spec {
            return Err(Error::config("pre-trained checkpoint has a different architecture"));
        }
        let mut model = Self::new(config)?;
        model.load_blobs(pretrained, |name| name.starts_with("encoder.") || name.starts_with("decoder."))?;
        Ok(model)
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint<S>) -> Result<Self> {
        let mut model = Self::new(ckpt.config.clone())?;
        model.load_blobs(ckpt, |_| true)?;
        Ok(model)
    }

    fn load_blobs(&mut self, ckpt: &ModelCheckpoint<S>, wanted: impl Fn(&str) -> bool) -> Result<()> {
        let mut params = Vec::new();
        self.params_mut("", &mut params);
        for (name, p) in params.into_iter().filter(|(n, _)| wanted(n)) {
            let blob = ckpt.blob(&name).ok_or_else(|| Error::Format {
                what: "checkpoint",
                reason: format!("missing blob {name}"),
            })?;
            if blob.shape != p.shape {
                return Err(Error::Format {
                    what: "checkpoint",
                    reason: format!("blob {name} has shape {:?}, expected {:?}", blob.shape, p.shape),
                });
            }
            p.value.clone_from(&blob.data);
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> ModelCheckpoint<S> {
        let mut params = Vec::new();
        self.params("", &mut params);
        let blobs = params
            .into_iter()
            .map(|(name, p)| Blob { name, shape: p.shape.clone(), data: p.value.clone() })
            .collect();
        ModelCheckpoint { config: self.config.clone(), blobs }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.config.spec
    }

    pub fn toggles(&self) -> TimeToggles {
        self.config.train.toggles()
    }

    pub fn parameter_count(&self) -> usize {
        let mut params = Vec::new();
        self.params("", &mut params);
        params.iter().filter(|(_, p)| p.trainable).map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        let mut params = Vec::new();
        self.params_mut("", &mut params);
        params.into_iter().for_each(|(_, p)| p.zero_grad());
    }

    pub fn prepare_input<T: Scalar>(&self, frame: &crate::data::ThermalFrame<T>) -> Result<Vec<S>> {
        preprocess(frame, &self.config.stats, self.config.spec.input_size)
    }

    pub fn prepare_day<T: Scalar>(&self, day: &DaySequence<T>) -> Result<PreparedDay<S>> {
        Ok(PreparedDay {
            day_id: day.day_id.clone(),
            inputs: day.samples.iter().map(|s| self.prepare_input(&s.frame)).collect::<Result<_>>()?,
            windows: build_context_windows(day, self.config.core.k, self.config.core.epsilon)?,
        })
    }

    fn stack(&self, rows: impl Iterator<Item = Vec<S>>) -> Tensor<S> {
        let size = self.config.spec.input_size;
        let data: Vec<S> = rows.flatten().collect();
        let n = data.len() / self.config.spec.pixels();
        Tensor::from_vec([n, 3, size, size], data)
    }

    /// Seeded initial recurrent state for each target of a batch. The draw
    /// depends on the run seed, the day and the target's position, never on
    /// timestamps.
    pub fn initial_state(&self, day_id: &DayId, targets: &[usize]) -> InitialState<S> {
        let hd = self.config.spec.latent_dim;
        let layers = self.config.spec.lstm_layers;
        let mut state: InitialState<S> =
            vec![(Vec::with_capacity(targets.len() * hd), Vec::with_capacity(targets.len() * hd)); layers];
        if self.config.train.zero_initial_state {
            return vec![(vec![S::zero(); targets.len() * hd], vec![S::zero(); targets.len() * hd]); layers];
        }
        let day_hash = fnv1a(day_id.0.as_bytes());
        for &t in targets {
            let seed = self.config.train.seed ^ day_hash.rotate_left(17) ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (h, c) in state.iter_mut() {
                for _ in 0..hd {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    h.push(S::of(v));
                }
                for _ in 0..hd {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    c.push(S::of(v));
                }
            }
        }
        state
    }

    fn joint(&self, z: &[S], offsets: TimeOffsets) -> Vec<S> {
        let t = time_features::<S>(offsets, self.toggles());
        let mut v = Vec::with_capacity(z.len() + TIME_DIM);
        v.extend_from_slice(z);
        v.extend_from_slice(&t);
        v
    }

    /// LSTM input sequence for a set of windows; `row(index)` gives the
    /// latent vector of a sample.
    fn sequence<'z>(&self, windows: &[&ContextWindow], row: impl Fn(usize) -> &'z [S]) -> Vec<Vec<S>>
    where
        S: 'z,
    {
        let k = windows[0].k();
        (0..k)
            .map(|t| windows.iter().flat_map(|w| self.joint(row(w.context[t].index), w.context[t].offsets)).collect())
            .collect()
    }

    fn decoder_input(&self, contexts: &[S], windows: &[&ContextWindow]) -> Tensor<S> {
        let hd = self.config.spec.latent_dim;
        let data: Vec<S> = windows
            .iter()
            .enumerate()
            .flat_map(|(b, w)| self.joint(&contexts[b * hd..(b + 1) * hd], w.target.offsets))
            .collect();
        Tensor::matrix(windows.len(), self.config.spec.joint_dim(), data)
    }

    fn squared_errors(x: &Tensor<S>, x_hat: &Tensor<S>) -> Vec<f64> {
        (0..x.n()).map(|i| squared_error(x.item(i), x_hat.item(i))).collect()
    }

    fn mse_grad(x: &Tensor<S>, x_hat: &Tensor<S>) -> Tensor<S> {
        let scale = S::of(2.0 / x.n() as f64);
        Tensor::from_vec(x.shape, x_hat.data.iter().zip(&x.data).map(|(&p, &t)| scale * (p - t)).collect())
    }

    /// Reconstruction through `decoder([encoder(x) ; 0])`.
    pub fn reconstruct(&self, x: &Tensor<S>, train: bool) -> Tensor<S> {
        self.reconstruct_taped(x, train).0
    }

    fn reconstruct_taped(&self, x: &Tensor<S>, train: bool) -> (Tensor<S>, network::EncoderCache<S>, network::DecoderCache<S>) {
        let (z, enc) = self.encoder.forward(x, train);
        let hd = self.config.spec.latent_dim;
        let data: Vec<S> = z
            .data
            .chunks_exact(hd)
            .flat_map(|r| r.iter().copied().chain(std::iter::repeat_n(S::zero(), TIME_DIM)))
            .collect();
        let v = Tensor::matrix(x.n(), self.config.spec.joint_dim(), data);
        let (x_hat, dec) = self.decoder.forward(&v, train);
        (x_hat, enc, dec)
    }

    fn forecast_taped(&self, day: &PreparedDay<S>, targets: &[usize], train: bool) -> (Vec<f64>, ForecastTape<S>) {
        let windows: Vec<&ContextWindow> = targets.iter().map(|&t| &day.windows[t]).collect();
        let mut needed: Vec<usize> = windows.iter().flat_map(|w| w.context.iter().map(|e| e.index)).collect();
        needed.sort_unstable();
        needed.dedup();
        let mut row_of = BTreeMap::new();
        for (r, &i) in needed.iter().enumerate() {
            row_of.insert(i, r);
        }
        let x = self.stack(needed.iter().map(|&i| day.inputs[i].clone()));
        let (z, encoder) = self.encoder.forward(&x, train);
        let hd = self.config.spec.latent_dim;
        let seq = self.sequence(&windows, |i| &z.data[row_of[&i] * hd..(row_of[&i] + 1) * hd]);
        let rows = (0..windows[0].k())
            .map(|t| windows.iter().map(|w| row_of[&w.context[t].index]).collect())
            .collect();
        let target_idx: Vec<usize> = windows.iter().map(|w| w.target.index).collect();
        let init = self.initial_state(&day.day_id, &target_idx);
        let (c, context) = self.context.forward(&seq, init, windows.len());
        let v = self.decoder_input(&c, &windows);
        let (x_hat, decoder) = self.decoder.forward(&v, train);
        let truth = self.stack(target_idx.iter().map(|&i| day.inputs[i].clone()));
        let errors = Self::squared_errors(&truth, &x_hat);
        let grad = Self::mse_grad(&truth, &x_hat);
        (errors, ForecastTape { encoder, context, decoder, rows, encoded: needed.len(), grad })
    }

    fn forecast_backward(&mut self, tape: ForecastTape<S>) {
        let hd = self.config.spec.latent_dim;
        let jd = self.config.spec.joint_dim();
        let dv = self.decoder.backward(&tape.decoder, &tape.grad);
        let batch = dv.n();
        let dc: Vec<S> = dv.data.chunks_exact(jd).flat_map(|r| r[..hd].iter().copied()).collect();
        let dseq = self.context.backward(&tape.context, &dc);
        let mut dz = vec![S::zero(); tape.encoded * hd];
        for (t, step) in dseq.iter().enumerate() {
            for b in 0..batch {
                let r = tape.rows[t][b];
                for j in 0..hd {
                    dz[r * hd + j] += step[b * jd + j];
                }
            }
        }
        self.encoder.backward(&tape.encoder, &Tensor::matrix(tape.encoded, hd, dz));
    }

    /// Training-mode loss of a batch without touching any state.
    pub fn batch_loss(&self, batch: &Batch<'_, S>) -> f64 {
        let errors = match batch {
            Batch::Reconstruction(x) => Self::squared_errors(x, &self.reconstruct(x, true)),
            Batch::Forecast { day, targets } => self.forecast_taped(day, targets, true).0,
        };
        errors.iter().sum::<f64>() / errors.len() as f64
    }

    /// Adds the gradient of the batch loss to every parameter's `grad` and
    /// advances batch-norm running statistics. Returns the loss.
    pub fn accumulate_gradients(&mut self, batch: &Batch<'_, S>) -> f64 {
        match batch {
            Batch::Reconstruction(x) => {
                let (x_hat, enc, dec) = self.reconstruct_taped(x, true);
                let errors = Self::squared_errors(x, &x_hat);
                let dv = self.decoder.backward(&dec, &Self::mse_grad(x, &x_hat));
                let hd = self.config.spec.latent_dim;
                let jd = self.config.spec.joint_dim();
                let dz: Vec<S> = dv.data.chunks_exact(jd).flat_map(|r| r[..hd].iter().copied()).collect();
                self.encoder.backward(&enc, &Tensor::matrix(x.n(), hd, dz));
                errors.iter().sum::<f64>() / errors.len() as f64
            }
            Batch::Forecast { day, targets } => {
                let (errors, tape) = self.forecast_taped(day, targets, true);
                self.forecast_backward(tape);
                errors.iter().sum::<f64>() / errors.len() as f64
            }
        }
    }

    fn optimise<B>(
        &mut self,
        epochs: usize,
        stage: &str,
        mut order: impl FnMut(&mut ChaCha8Rng) -> Vec<B>,
        mut run: impl FnMut(&mut Self, &B) -> f64,
    ) -> Result<TrainReport> {
        let mut adam = Adam::new(&self.config.train);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.train.seed ^ fnv1a(stage.as_bytes()));
        let mut report = TrainReport::default();
        for epoch in 0..epochs {
            let batches = order(&mut rng);
            let mut total = 0.0;
            for (step, b) in batches.iter().enumerate() {
                self.zero_grad();
                let loss = run(self, b);
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!("{stage} loss is {loss} at epoch {epoch}, step {step}")));
                }
                if epoch == 0 && step == 0 {
                    report.initial_loss = loss;
                }
                let mut params = Vec::new();
                self.params_mut("", &mut params);
                adam.step(params);
                total += loss;
            }
            let mean = total / batches.len().max(1) as f64;
            log::info!("{stage} epoch {}/{epochs}: loss {mean:.4}", epoch + 1);
            report.epoch_losses.push(mean);
        }
        Ok(report)
    }

    /// Minimises the reconstruction loss over the given normal frames.
    pub fn pretrain<T: Scalar>(&mut self, days: &[DaySequence<T>]) -> Result<TrainReport> {
        let inputs: Vec<Vec<S>> = days
            .iter()
            .flat_map(|d| &d.samples)
            .map(|s| self.prepare_input(&s.frame))
            .collect::<Result<_>>()?;
        if inputs.is_empty() {
            return Err(Error::config("pre-training needs at least one frame"));
        }
        let bs = self.config.train.batch_size;
        let mut perm: Vec<usize> = (0..inputs.len()).collect();
        self.optimise(
            self.config.train.pretrain_epochs,
            "pretrain",
            |rng| {
                perm.shuffle(rng);
                perm.chunks(bs).map(<[usize]>::to_vec).collect()
            },
            |model, idx| {
                let x = model.stack(idx.iter().map(|&i| inputs[i].clone()));
                model.accumulate_gradients(&Batch::Reconstruction(&x))
            },
        )
    }

    /// Minimises the forecasting loss over every sample of the given days.
    ///
    /// A batch holds targets drawn at random from one day, so the encoder
    /// only sees frames of that day while batch-norm statistics still cover
    /// the whole daily cycle rather than a single phase of it.
    pub fn train<T: Scalar>(&mut self, days: &[DaySequence<T>]) -> Result<TrainReport> {
        let prepared: Vec<PreparedDay<S>> =
            days.iter().filter(|d| !d.is_empty()).map(|d| self.prepare_day(d)).collect::<Result<_>>()?;
        if prepared.is_empty() {
            return Err(Error::config("training needs at least one sample"));
        }
        let bs = self.config.train.batch_size;
        let mut perms: Vec<Vec<usize>> = prepared.iter().map(|p| (0..p.windows.len()).collect()).collect();
        self.optimise(
            self.config.train.train_epochs,
            "train",
            |rng| {
                let mut batches: Vec<(usize, Vec<usize>)> = Vec::new();
                for (d, perm) in perms.iter_mut().enumerate() {
                    perm.shuffle(rng);
                    batches.extend(perm.chunks(bs).map(|c| (d, c.to_vec())));
                }
                batches.shuffle(rng);
                batches
            },
            |model, (d, targets)| model.accumulate_gradients(&Batch::Forecast { day: &prepared[*d], targets }),
        )
    }

    /// Scores every sample of a day (and optionally keeps the intermediate
    /// context vectors and forecasts). Runs in inference mode.
    pub fn infer_day<T: Scalar>(&self, day: &DaySequence<T>, options: InferenceOptions) -> Result<DayInference<S>> {
        if day.is_empty() {
            return Ok(DayInference::default());
        }
        let prepared = self.prepare_day(day)?;
        self.infer_prepared(&prepared, options)
    }

    pub fn infer_prepared(&self, day: &PreparedDay<S>, options: InferenceOptions) -> Result<DayInference<S>> {
        const CHUNK: usize = 64;
        let hd = self.config.spec.latent_dim;
        let mut z = Vec::with_capacity(day.inputs.len() * hd);
        for chunk in day.inputs.chunks(CHUNK) {
            let x = self.stack(chunk.iter().cloned());
            z.extend(self.encoder.forward(&x, false).0.data);
        }
        let mut out = DayInference { inputs: Vec::new(), ..Default::default() };
        for start in (0..day.windows.len()).step_by(CHUNK) {
            let windows: Vec<&ContextWindow> = day.windows[start..(start + CHUNK).min(day.windows.len())].iter().collect();
            let seq = self.sequence(&windows, |i| &z[i * hd..(i + 1) * hd]);
            let targets: Vec<usize> = windows.iter().map(|w| w.target.index).collect();
            let init = self.initial_state(&day.day_id, &targets);
            let (c, _) = self.context.forward(&seq, init, windows.len());
            let (x_hat, _) = self.decoder.forward(&self.decoder_input(&c, &windows), false);
            let truth = self.stack(targets.iter().map(|&i| day.inputs[i].clone()));
            let errors = Self::squared_errors(&truth, &x_hat);
            if errors.iter().any(|e| !e.is_finite()) {
                return Err(Error::Numerical(format!("non-finite score on day {}", day.day_id)));
            }
            out.scores.extend(errors);
            if options.keep_contexts {
                out.contexts.extend(c.chunks_exact(hd).map(<[S]>::to_vec));
            }
            if options.keep_forecasts {
                out.forecasts.extend((0..x_hat.n()).map(|i| x_hat.item(i).to_vec()));
            }
        }
        if options.keep_forecasts {
            out.inputs.clone_from(&day.inputs);
        }
        Ok(out)
    }

    pub fn score_day<T: Scalar>(&self, day: &DaySequence<T>) -> Result<Vec<f64>> {
        Ok(self.infer_day(day, InferenceOptions::default())?.scores)
    }

    /// Context embedding of one window.
    pub fn encode_context<T: Scalar>(&self, day: &DaySequence<T>, window: &ContextWindow) -> Result<Vec<S>> {
        let inputs: BTreeMap<usize, Vec<S>> = window
            .context
            .iter()
            .map(|e| Ok((e.index, self.prepare_input(&day.samples[e.index].frame)?)))
            .collect::<Result<_>>()?;
        let keys: Vec<usize> = inputs.keys().copied().collect();
        let (z, _) = self.encoder.forward(&self.stack(inputs.into_values()), false);
        let hd = self.config.spec.latent_dim;
        let seq = self.sequence(&[window], |i| {
            let r = keys.binary_search(&i).expect("encoded index");
            &z.data[r * hd..(r + 1) * hd]
        });
        let init = self.initial_state(&day.day_id, &[window.target.index]);
        Ok(self.context.forward(&seq, init, 1).0)
    }

    /// Decoder output `[3, size, size]` for a context and target offsets.
    pub fn forecast(&self, context: &[S], target: TimeOffsets) -> Tensor<S> {
        let v = Tensor::matrix(1, self.config.spec.joint_dim(), self.joint(context, target));
        let (x, _) = self.decoder.forward(&v, false);
        let size = self.config.spec.input_size;
        x.reshape([3, size, size, 1])
    }

    /// Squared forecast error of a single window's target.
    pub fn score<T: Scalar>(&self, day: &DaySequence<T>, window: &ContextWindow) -> Result<f64> {
        let c = self.encode_context(day, window)?;
        let x_hat = self.forecast(&c, window.target.offsets);
        let x = self.prepare_input::<T>(&day.samples[window.target.index].frame)?;
        Ok(squared_error(&x, &x_hat.data))
    }

    /// Reconstruction errors of every frame, used by the autoencoder baseline.
    pub fn reconstruction_errors<T: Scalar>(&self, day: &DaySequence<T>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(day.len());
        for chunk in day.samples.chunks(64) {
            let x = self.stack(chunk.iter().map(|s| self.prepare_input(&s.frame)).collect::<Result<Vec<_>>>()?.into_iter());
            out.extend(Self::squared_errors(&x, &self.reconstruct(&x, false)));
        }
        Ok(out)
    }
}
