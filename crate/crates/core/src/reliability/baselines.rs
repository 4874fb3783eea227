use rand::Rng;
use serde::{Deserialize, Serialize};

use super::codec::{argmax_rows, CodeSystem, CodecSet};
use super::config::CodeConfig;
use super::train::train_ptp;
use crate::channel::{noise_matrix, ChannelParams};
use crate::error::{usage, Error, Result};
use crate::nn::{
    adam_step, cross_entropy_loss, default_hidden_width, one_hot_batch, Activation, AdamConfig, AdamState, Gradients, MlpModel, Tensor2D,
};
use crate::rng::{Purpose, RngStreams};

/// Split of a block of `n` channel uses into two subframes, one per user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSharingConfig {
    pub n1: usize,
    pub n2: usize,
}

impl TimeSharingConfig {
    /// `n1 = round(alpha * n)`; both subframes must be non-empty.
    pub fn from_alpha(alpha: f64, n: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(usage!("alpha must lie in (0, 1), got {alpha}"));
        }
        let n1 = (alpha * n as f64).round() as usize;
        if n1 < 1 || n1 >= n {
            return Err(usage!("alpha {alpha} splits n={n} into subframes {n1} and {}", n.saturating_sub(n1)));
        }
        Ok(TimeSharingConfig { n1, n2: n - n1 })
    }

    /// Realized fraction `n1 / n`.
    pub fn alpha(&self) -> f64 {
        self.n1 as f64 / (self.n1 + self.n2) as f64
    }

    /// Per-subframe powers `P1 / alpha` and `P2 / (1 - alpha)`, which keep
    /// the average power per block unchanged.
    pub fn boosted_powers(&self, p1: f64, p2: f64) -> (f64, f64) {
        let a = self.alpha();
        (p1 / a, p2 / (1.0 - a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSharingPoint {
    pub split: TimeSharingConfig,
    pub powers: (f64, f64),
    /// Probability that either user's message is decoded wrongly.
    pub joint_error: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSharingResult {
    pub points: Vec<TimeSharingPoint>,
    /// Index into `points` of the smallest joint error (first on ties).
    pub best: usize,
}

impl TimeSharingResult {
    pub fn best_point(&self) -> &TimeSharingPoint {
        &self.points[self.best]
    }
}

fn single_user(config: &CodeConfig, l: usize, n: usize, power: f64) -> Result<CodeConfig> {
    let mut user = config.users[l].clone();
    user.power = power;
    let ch = ChannelParams { h: vec![config.channel.h[l]], g: vec![config.channel.g[l]], ..config.channel.clone() };
    CodeConfig::new(n, vec![user], ch, config.train.clone())
}

/// Trains one point-to-point code per user and subframe for every split in
/// `alphas` and returns the split with the smallest joint error.
pub fn baseline_time_sharing(config: &CodeConfig, alphas: &[f64], trials: usize, streams: &RngStreams) -> Result<TimeSharingResult> {
    if config.num_users() != 2 {
        return Err(usage!("time sharing compares exactly two users, got {}", config.num_users()));
    }
    if alphas.is_empty() || trials == 0 {
        return Err(usage!("time sharing needs a non-empty alpha grid and positive trials"));
    }
    let mut points = Vec::with_capacity(alphas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        let split = TimeSharingConfig::from_alpha(alpha, config.n)?;
        let powers = split.boosted_powers(config.users[0].power, config.users[1].power);
        let a = train_ptp(&single_user(config, 0, split.n1, powers.0)?)?;
        let b = train_ptp(&single_user(config, 1, split.n2, powers.1)?)?;
        let mut rng = streams.stream(Purpose::Baseline, ai as u64);
        let errors = subframe_errors(&[&a, &b], trials, &mut rng)?;
        points.push(TimeSharingPoint { split, powers, joint_error: errors as f64 / trials as f64, trials: trials as u64 });
    }
    let best = (0..points.len()).min_by(|&i, &j| points[i].joint_error.total_cmp(&points[j].joint_error).then(i.cmp(&j))).unwrap();
    Ok(TimeSharingResult { points, best })
}

/// Trials in which at least one subframe code decodes wrongly.
fn subframe_errors<R: Rng + ?Sized>(codes: &[&CodecSet], trials: usize, rng: &mut R) -> Result<u64> {
    let mut wrong = vec![false; trials];
    for set in codes {
        let m: Vec<usize> = (0..trials).map(|_| rng.random_range(0..set.pairs[0].messages())).collect();
        let x = set.encode(0, &m)?;
        let ch = &set.config.channel;
        let mut y = x * ch.h[0].sqrt();
        if !ch.noise_disabled {
            y += &noise_matrix(rng, ch.sigma2_y, trials, set.config.n)?;
        }
        for (w, (e, s)) in wrong.iter_mut().zip(set.decode(&y)?[0].iter().zip(&m)) {
            *w |= e != s;
        }
    }
    Ok(wrong.iter().filter(|w| **w).count() as u64)
}

/// Per-user encoders with one shared decoder trunk and a softmax head per
/// user; all messages are estimated at once from the received block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDecoder {
    pub config: CodeConfig,
    pub encoders: Vec<MlpModel>,
    pub trunk: MlpModel,
    pub heads: Vec<MlpModel>,
}

impl JointDecoder {
    /// Per-user probability rows for a batch of received blocks.
    pub fn head_probs(&self, received: &Tensor2D) -> Result<Vec<Tensor2D>> {
        let features = self.trunk.infer(received)?;
        self.heads.iter().map(|h| h.infer(&features)).collect()
    }
}

impl CodeSystem for JointDecoder {
    fn config(&self) -> &CodeConfig {
        &self.config
    }

    fn encode(&self, user: usize, messages: &[usize]) -> Result<Tensor2D> {
        let enc = self.encoders.get(user).ok_or_else(|| usage!("no user {user}"))?;
        enc.infer(&one_hot_batch(messages, enc.input_dim())?)
    }

    fn decode(&self, received: &Tensor2D) -> Result<Vec<Vec<usize>>> {
        Ok(self.head_probs(received)?.iter().map(argmax_rows).collect())
    }
}

/// Trains encoders, trunk and heads jointly on the summed per-head
/// cross-entropy, with the same data schedule as the SIC trainer.
pub fn baseline_joint_decoding(config: &CodeConfig) -> Result<JointDecoder> {
    let tc = &config.train;
    let streams = RngStreams::new(tc.seed);
    let total: usize = config.users.iter().map(|u| u.messages()).sum();
    let width = tc.hidden_width.unwrap_or_else(|| default_hidden_width(total));
    let mut init = streams.stream(Purpose::WeightInit, 0);
    let mut encoders = config
        .users
        .iter()
        .map(|u| MlpModel::dense(u.messages(), &tc.hidden(u.messages()), config.n, Activation::PowerNorm { power: u.power }, &mut init))
        .collect::<Result<Vec<_>>>()?;
    let mut trunk = MlpModel::dense(config.n, &vec![width; tc.hidden_layers.saturating_sub(1)], width, Activation::Relu, &mut init)?;
    let mut heads = config
        .users
        .iter()
        .map(|u| MlpModel::dense(width, &[], u.messages(), Activation::Softmax, &mut init))
        .collect::<Result<Vec<_>>>()?;

    let adam = AdamConfig::new(tc.learning_rate);
    let mut enc_opt: Vec<_> = encoders.iter().map(|m| AdamState::new(m, adam)).collect();
    let mut head_opt: Vec<_> = heads.iter().map(|m| AdamState::new(m, adam)).collect();
    let mut trunk_opt = AdamState::new(&trunk, adam);
    let mut msg_rng = streams.stream(Purpose::TrainMessages, 0);
    let mut noise_rng = streams.stream(Purpose::TrainNoise, 0);
    let amp: Vec<f64> = config.channel.h.iter().map(|h| h.sqrt()).collect();

    let batches = tc.messages_per_epoch.div_ceil(tc.batch_size);
    for epoch in 0..tc.epochs {
        for b in 0..batches {
            let size = tc.batch_size.min(tc.messages_per_epoch - b * tc.batch_size);
            let messages: Vec<Vec<usize>> =
                config.users.iter().map(|u| (0..size).map(|_| msg_rng.random_range(0..u.messages())).collect()).collect();
            let mut y = if config.channel.noise_disabled {
                Tensor2D::zeros((size, config.n))
            } else {
                noise_matrix(&mut noise_rng, config.channel.sigma2_y, size, config.n)?
            };
            let mut enc_caches = Vec::new();
            for (l, enc) in encoders.iter().enumerate() {
                let (x, c) = enc.forward(&one_hot_batch(&messages[l], enc.input_dim())?)?;
                y.scaled_add(amp[l], &x);
                enc_caches.push(c);
            }
            let (features, trunk_cache) = trunk.forward(&y)?;
            let mut g_features = Tensor2D::zeros(features.dim());
            let mut head_grads = Vec::new();
            let mut loss = 0.0;
            for (l, head) in heads.iter().enumerate() {
                let (p, c) = head.forward(&features)?;
                let ce = cross_entropy_loss(&p, &messages[l])?;
                loss += ce.loss;
                let (g, gi) = head.backward_from_logits(&c, &ce.grad_logits)?;
                g_features += &gi;
                head_grads.push(g);
            }
            if !loss.is_finite() {
                return Err(Error::Training { epoch, reason: format!("joint-decoding loss became {loss}") });
            }
            let (g_trunk, g_y) = trunk.backward(&trunk_cache, &g_features)?;
            let enc_grads: Vec<Gradients> = encoders
                .iter()
                .zip(&enc_caches)
                .enumerate()
                .map(|(l, (enc, c))| enc.backward(c, &(&g_y * amp[l])).map(|(g, _)| g))
                .collect::<Result<_>>()?;
            let step = |e: Error| match e {
                Error::Training { reason, .. } => Error::Training { epoch, reason },
                other => other,
            };
            adam_step(&mut trunk, &g_trunk, &mut trunk_opt).map_err(step)?;
            for l in 0..heads.len() {
                adam_step(&mut heads[l], &head_grads[l], &mut head_opt[l]).map_err(step)?;
                adam_step(&mut encoders[l], &enc_grads[l], &mut enc_opt[l]).map_err(step)?;
            }
        }
    }
    Ok(JointDecoder { config: config.clone(), encoders, trunk, heads })
}
