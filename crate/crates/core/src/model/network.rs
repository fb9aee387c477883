//! The encoder / latent / decoder / classifier graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::config::*;
use crate::model::loss::{cross_entropy_loss, mse_loss, LossComponents};
use crate::model::triplet::{check_triplet_composition, mine_triplets, triplet_loss_with, LatentBatch, Triplet};
use crate::nncore::{
    avg_pool_time, avg_pool_time_backward, elu, elu_backward, softmax, softmax_backward, BatchNorm,
    BnCache, ConvTime, ConvTransposeTime, Dense, Mode, ParamTensor, TensorBuf,
};
use crate::scalar::Scalar;

/// Input trials `[B,1,T,C]` with integer labels.
#[derive(Clone, Debug)]
pub struct Batch<S> {
    pub x: TensorBuf<S>,
    pub y: Vec<usize>,
}

/// Network parameters plus normalization running statistics.
#[derive(Clone, Debug)]
pub struct Min2Net<S> {
    config: Min2NetConfig,
    seed: u64,
    pub(crate) conv1: ConvTime<S>,
    pub(crate) bn1: BatchNorm<S>,
    pub(crate) conv2: ConvTime<S>,
    pub(crate) bn2: BatchNorm<S>,
    pub(crate) latent_fc: Dense<S>,
    pub(crate) decoder_fc: Dense<S>,
    pub(crate) deconv1: ConvTransposeTime<S>,
    pub(crate) deconv2: ConvTransposeTime<S>,
    pub(crate) classifier: Dense<S>,
}

/// Intermediate activations of one encode pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct EncoderTrace<S> {
    x: TensorBuf<S>,
    act1: TensorBuf<S>,
    bn1: BnCache<S>,
    pooled1: TensorBuf<S>,
    act2: TensorBuf<S>,
    bn2: BnCache<S>,
    flat: TensorBuf<S>,
    pub latent: TensorBuf<S>,
}

#[derive(Clone, Debug)]
pub struct DecoderTrace<S> {
    latent: TensorBuf<S>,
    reshaped: TensorBuf<S>,
    up1: TensorBuf<S>,
    pub reconstruction: TensorBuf<S>,
}

/// Everything produced by a full forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<S> {
    pub encoder: EncoderTrace<S>,
    pub decoder: DecoderTrace<S>,
    pub probs: TensorBuf<S>,
}

/// Loss gradients flowing into the three heads.
#[derive(Clone, Debug)]
pub struct HeadGrads<S> {
    pub reconstruction: Option<TensorBuf<S>>,
    pub latent: Option<TensorBuf<S>>,
    pub probs: Option<TensorBuf<S>>,
}

fn glorot<S: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> TensorBuf<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    TensorBuf::from_fn(shape, |_| S::of(rng.random_range(-limit..limit)))
}

fn param<S: Scalar>(name: &str, value: TensorBuf<S>) -> ParamTensor<S> {
    ParamTensor::new(name, value)
}

impl<S: Scalar> Min2Net<S> {
    /// Allocates and initializes every layer deterministically from `seed`.
    pub fn build(config: &Min2NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, z, n, h) = (config.channels, config.latent, config.classes, HIDDEN_FILTERS);
        let (k1, k2) = ENCODER_KERNELS;
        let conv = |rng: &mut ChaCha8Rng, name: &str, k: usize, cin: usize, cout: usize, stride| ConvTime {
            weight: param(&format!("{name}.weight"), glorot(rng, &[1, k, cin, cout], k * cin, k * cout)),
            bias: param(&format!("{name}.bias"), TensorBuf::zeros(&[cout])),
            stride,
        };
        let deconv = |rng: &mut ChaCha8Rng, name: &str, k: usize, cin: usize, cout: usize, stride| ConvTransposeTime {
            weight: param(&format!("{name}.weight"), glorot(rng, &[1, k, cout, cin], k * cout, k * cin)),
            bias: param(&format!("{name}.bias"), TensorBuf::zeros(&[cout])),
            stride,
        };
        let dense = |rng: &mut ChaCha8Rng, name: &str, din: usize, dout: usize| Dense {
            weight: param(&format!("{name}.weight"), glorot(rng, &[din, dout], din, dout)),
            bias: param(&format!("{name}.bias"), TensorBuf::zeros(&[dout])),
        };
        Ok(Min2Net {
            config: config.clone(),
            seed,
            conv1: conv(&mut rng, "conv1", k1, c, c, 1),
            bn1: BatchNorm::new("bn1", c),
            conv2: conv(&mut rng, "conv2", k2, c, h, 1),
            bn2: BatchNorm::new("bn2", h),
            latent_fc: dense(&mut rng, "latent", FLAT_WIDTH, z),
            decoder_fc: dense(&mut rng, "decoder", z, FLAT_WIDTH),
            deconv1: deconv(&mut rng, "deconv1", k1, h, h, DECODER_STRIDE),
            deconv2: deconv(&mut rng, "deconv2", k2, h, c, config.time_factor()),
            classifier: dense(&mut rng, "classifier", z, n),
        })
    }

    pub fn config(&self) -> &Min2NetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Trainable parameters in a fixed order.
    pub fn params(&self) -> Vec<&ParamTensor<S>> {
        vec![
            &self.conv1.weight,
            &self.conv1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.latent_fc.weight,
            &self.latent_fc.bias,
            &self.decoder_fc.weight,
            &self.decoder_fc.bias,
            &self.deconv1.weight,
            &self.deconv1.bias,
            &self.deconv2.weight,
            &self.deconv2.bias,
            &self.classifier.weight,
            &self.classifier.bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<S>> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.latent_fc.weight,
            &mut self.latent_fc.bias,
            &mut self.decoder_fc.weight,
            &mut self.decoder_fc.bias,
            &mut self.deconv1.weight,
            &mut self.deconv1.bias,
            &mut self.deconv2.weight,
            &mut self.deconv2.bias,
            &mut self.classifier.weight,
            &mut self.classifier.bias,
        ]
    }

    pub fn trainable_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Normalization layers, for running-statistic access.
    pub fn norm_layers(&self) -> [&BatchNorm<S>; 2] {
        [&self.bn1, &self.bn2]
    }

    pub(crate) fn norm_layers_mut(&mut self) -> [&mut BatchNorm<S>; 2] {
        [&mut self.bn1, &mut self.bn2]
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    fn check_input(&self, x: &TensorBuf<S>) -> Result<usize> {
        let [b, h, t, c] = x.dims::<4>()?;
        if h != 1 || t != self.config.samples || c != self.config.channels {
            return Err(Error::dim(format!(
                "input shape {:?} does not match (B, 1, {}, {})",
                x.shape(),
                self.config.samples,
                self.config.channels
            )));
        }
        Ok(b)
    }

    fn check_latent(&self, z: &TensorBuf<S>) -> Result<usize> {
        let [b, w] = z.dims::<2>()?;
        if w != self.config.latent {
            return Err(Error::dim(format!(
                "latent width {w} does not match configured width {}",
                self.config.latent
            )));
        }
        Ok(b)
    }

    fn run_bn(bn: &mut BatchNorm<S>, x: &TensorBuf<S>, mode: Mode, update: bool) -> Result<(TensorBuf<S>, BnCache<S>)> {
        if update {
            bn.forward(x, mode)
        } else {
            bn.forward_frozen(x, mode)
        }
    }

    fn encode_inner(&mut self, x: &TensorBuf<S>, mode: Mode, update_stats: bool) -> Result<EncoderTrace<S>> {
        let b = self.check_input(x)?;
        let act1 = elu(&self.conv1.forward(x)?);
        let (n1, bn1) = Self::run_bn(&mut self.bn1, &act1, mode, update_stats)?;
        let pooled1 = avg_pool_time(&n1, self.config.time_factor())?;
        let act2 = elu(&self.conv2.forward(&pooled1)?);
        let (n2, bn2) = Self::run_bn(&mut self.bn2, &act2, mode, update_stats)?;
        let flat = avg_pool_time(&n2, SECOND_POOL)?.reshape(&[b, FLAT_WIDTH])?;
        let latent = self.latent_fc.forward(&flat)?;
        Ok(EncoderTrace {
            x: x.clone(),
            act1,
            bn1,
            pooled1,
            act2,
            bn2,
            flat,
            latent,
        })
    }

    /// Encoder pass. Train mode normalizes with batch statistics and updates the running ones.
    pub fn encode(&mut self, x: &TensorBuf<S>, mode: Mode) -> Result<TensorBuf<S>> {
        Ok(self.encode_inner(x, mode, true)?.latent)
    }

    /// Encoder pass that never touches running statistics.
    pub fn encode_frozen(&self, x: &TensorBuf<S>, mode: Mode) -> Result<TensorBuf<S>> {
        let mut scratch = self.clone();
        Ok(scratch.encode_inner(x, mode, false)?.latent)
    }

    /// Shapes after every encoder and decoder layer, in layer order, batch axis dropped.
    pub fn shape_trace(&self, batch: usize) -> Result<Vec<(&'static str, Vec<usize>)>> {
        let x = TensorBuf::zeros(&[batch, 1, self.config.samples, self.config.channels]);
        let m = self;
        let b = m.check_input(&x)?;
        let mut out = Vec::new();
        let strip = |t: &TensorBuf<S>| t.shape()[1..].to_vec();
        out.push(("input", strip(&x)));
        let a1 = elu(&m.conv1.forward(&x)?);
        out.push(("conv1", strip(&a1)));
        let (n1, _) = m.bn1.forward_frozen(&a1, Mode::Infer)?;
        out.push(("bn1", strip(&n1)));
        let p1 = avg_pool_time(&n1, m.config.time_factor())?;
        out.push(("pool1", strip(&p1)));
        let a2 = elu(&m.conv2.forward(&p1)?);
        out.push(("conv2", strip(&a2)));
        let (n2, _) = m.bn2.forward_frozen(&a2, Mode::Infer)?;
        out.push(("bn2", strip(&n2)));
        let p2 = avg_pool_time(&n2, SECOND_POOL)?;
        out.push(("pool2", strip(&p2)));
        let flat = p2.reshape(&[b, FLAT_WIDTH])?;
        out.push(("flatten", strip(&flat)));
        let z = m.latent_fc.forward(&flat)?;
        out.push(("latent", strip(&z)));
        let d = m.decoder_fc.forward(&z)?;
        out.push(("decoder_fc", strip(&d)));
        let r = d.reshape(&[b, 1, FLAT_WIDTH / HIDDEN_FILTERS, HIDDEN_FILTERS])?;
        out.push(("reshape", strip(&r)));
        let u1 = elu(&m.deconv1.forward(&r)?);
        out.push(("deconv1", strip(&u1)));
        let u2 = elu(&m.deconv2.forward(&u1)?);
        out.push(("deconv2", strip(&u2)));
        let probs = m.classify(&z)?;
        out.push(("classifier", strip(&probs)));
        Ok(out)
    }

    fn decode_inner(&self, latent: &TensorBuf<S>) -> Result<DecoderTrace<S>> {
        let b = self.check_latent(latent)?;
        let reshaped = self
            .decoder_fc
            .forward(latent)?
            .reshape(&[b, 1, FLAT_WIDTH / HIDDEN_FILTERS, HIDDEN_FILTERS])?;
        let up1 = elu(&self.deconv1.forward(&reshaped)?);
        let reconstruction = elu(&self.deconv2.forward(&up1)?);
        Ok(DecoderTrace {
            latent: latent.clone(),
            reshaped,
            up1,
            reconstruction,
        })
    }

    /// Reconstructs `[B,1,T,C]` from latent codes. The decoder has no normalization, so
    /// the output does not depend on mode.
    pub fn decode(&self, latent: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        Ok(self.decode_inner(latent)?.reconstruction)
    }

    /// Class probabilities `[B, N]` for latent codes.
    pub fn classify(&self, latent: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        self.check_latent(latent)?;
        softmax(&self.classifier.forward(latent)?)
    }

    /// Pre-softmax class scores.
    pub fn logits(&self, latent: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        self.check_latent(latent)?;
        self.classifier.forward(latent)
    }

    fn forward_inner(&mut self, x: &TensorBuf<S>, mode: Mode, update_stats: bool) -> Result<ForwardTrace<S>> {
        let encoder = self.encode_inner(x, mode, update_stats)?;
        let decoder = self.decode_inner(&encoder.latent)?;
        let probs = self.classify(&encoder.latent)?;
        Ok(ForwardTrace { encoder, decoder, probs })
    }

    /// Full forward pass; train mode updates running statistics.
    pub fn forward(&mut self, x: &TensorBuf<S>, mode: Mode) -> Result<ForwardTrace<S>> {
        self.forward_inner(x, mode, true)
    }

    /// Full forward pass with running statistics left untouched.
    pub fn forward_frozen(&self, x: &TensorBuf<S>, mode: Mode) -> Result<ForwardTrace<S>> {
        let mut m = self.clone();
        m.forward_inner(x, mode, false)
    }

    /// Backpropagates head gradients, accumulating into parameter gradients.
    pub fn backward(&mut self, trace: &ForwardTrace<S>, grads: &HeadGrads<S>) -> Result<()> {
        let enc = &trace.encoder;
        let b = enc.latent.shape()[0];
        let mut d_latent = match &grads.latent {
            Some(g) => g.clone(),
            None => TensorBuf::zeros(enc.latent.shape()),
        };
        if let Some(d_probs) = &grads.probs {
            let d_logits = softmax_backward(&trace.probs, d_probs)?;
            d_latent.add_assign(&self.classifier.backward(&enc.latent, &d_logits)?)?;
        }
        if let Some(d_rec) = &grads.reconstruction {
            let dec = &trace.decoder;
            let d_u2 = elu_backward(&dec.reconstruction, d_rec)?;
            let d_up1 = self.deconv2.backward(&dec.up1, &d_u2)?;
            let d_u1 = elu_backward(&dec.up1, &d_up1)?;
            let d_reshaped = self.deconv1.backward(&dec.reshaped, &d_u1)?;
            let d_dec = d_reshaped.reshape(&[b, FLAT_WIDTH])?;
            d_latent.add_assign(&self.decoder_fc.backward(&dec.latent, &d_dec)?)?;
        }
        let d_flat = self.latent_fc.backward(&enc.flat, &d_latent)?;
        let steps2 = FLAT_WIDTH / HIDDEN_FILTERS;
        let d_p2 = d_flat.reshape(&[b, 1, steps2, HIDDEN_FILTERS])?;
        let d_n2 = avg_pool_time_backward(&d_p2, SECOND_POOL)?;
        let d_a2 = self.bn2.backward(&enc.bn2, &d_n2)?;
        let d_c2 = elu_backward(&enc.act2, &d_a2)?;
        let d_p1 = self.conv2.backward(&enc.pooled1, &d_c2)?;
        let d_n1 = avg_pool_time_backward(&d_p1, self.config.time_factor())?;
        let d_a1 = self.bn1.backward(&enc.bn1, &d_n1)?;
        let d_c1 = elu_backward(&enc.act1, &d_a1)?;
        self.conv1.backward_params(&enc.x, &d_c1)?;
        Ok(())
    }

    /// Loss terms and head gradients for a traced batch. When `triplets` is `None` they
    /// are mined from the batch latents.
    pub fn losses(
        &self,
        trace: &ForwardTrace<S>,
        labels: &[usize],
        triplets: Option<&[Triplet]>,
    ) -> Result<(LossComponents, HeadGrads<S>)> {
        let cfg = &self.config;
        let mse = mse_loss(&trace.encoder.x, &trace.decoder.reconstruction, cfg.mse_elementwise)?;
        let ce = cross_entropy_loss(labels, &trace.probs)?;
        let latents = LatentBatch::new(trace.encoder.latent.clone(), labels.to_vec())?;
        let mined;
        let triplets = match triplets {
            Some(t) => t,
            None => {
                mined = mine_triplets(&latents)?;
                &mined
            }
        };
        let tri = triplet_loss_with(&latents, triplets, cfg.margin)?;
        let components = LossComponents {
            mse: mse.value,
            triplet: tri.value,
            cross_entropy: ce.value,
        };
        let weighted = |mut g: TensorBuf<S>, w: f64| {
            g.scale(S::of(w));
            Some(g)
        };
        let grads = HeadGrads {
            reconstruction: weighted(mse.grad, cfg.beta_mse),
            latent: weighted(tri.grad, cfg.beta_triplet),
            probs: weighted(ce.grad, cfg.beta_ce),
        };
        Ok((components, grads))
    }

    /// Zeroes gradients, runs a train-mode forward/backward pass, and returns the loss terms.
    pub fn accumulate_gradients(&mut self, batch: &Batch<S>) -> Result<LossComponents> {
        check_triplet_composition(&batch.y)?;
        self.zero_grad();
        let trace = self.forward(&batch.x, Mode::Train)?;
        let (components, grads) = self.losses(&trace, &batch.y, None)?;
        if !(components.mse.is_finite() && components.triplet.is_finite() && components.cross_entropy.is_finite()) {
            return Err(Error::NonFinite(format!("loss terms {components:?}")));
        }
        self.backward(&trace, &grads)?;
        Ok(components)
    }

    /// Loss terms without gradients or statistic updates.
    pub fn evaluate_losses(&self, batch: &Batch<S>, mode: Mode) -> Result<LossComponents> {
        let trace = self.forward_frozen(&batch.x, mode)?;
        Ok(self.losses(&trace, &batch.y, None)?.0)
    }

    /// Infer-mode argmax predictions.
    pub fn predict(&self, x: &TensorBuf<S>) -> Result<Vec<usize>> {
        let z = self.encode_frozen(x, Mode::Infer)?;
        let p = self.classify(&z)?;
        let n = self.config.classes;
        Ok(p.data()
            .chunks_exact(n)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, S::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }

    /// Same architecture and values in another precision.
    pub fn cast<T: Scalar>(&self) -> Min2Net<T> {
        let mut out = Min2Net::<T>::build(&self.config, self.seed).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            for (d, s) in dst.value_mut().iter_mut().zip(src.value().data()) {
                *d = T::of(s.as_f64());
            }
        }
        for (dst, src) in out.norm_layers_mut().into_iter().zip(self.norm_layers()) {
            dst.state.running_mean = src.state.running_mean.iter().map(|v| T::of(v.as_f64())).collect();
            dst.state.running_var = src.state.running_var.iter().map(|v| T::of(v.as_f64())).collect();
        }
        out
    }
}
