use rand::Rng;

use super::codec::{argmax_rows, Algorithm, CodecPair, CodecSet};
use super::config::CodeConfig;
use crate::channel::noise_matrix;
use crate::error::{Error, Result};
use crate::nn::{adam_step, cross_entropy_loss, one_hot_batch, AdamConfig, AdamState, Gradients, MlpModel, Tensor2D};
use crate::rng::{Purpose, RngStreams, SimRng};

/// Per-epoch mean of the summed per-user cross-entropy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epoch_losses: Vec<f64>,
}

pub fn train(config: &CodeConfig, algorithm: Algorithm) -> Result<CodecSet> {
    train_with_history(config, algorithm).map(|(set, _)| set)
}

pub fn train_sic(config: &CodeConfig) -> Result<CodecSet> {
    train(config, Algorithm::Sic)
}

pub fn train_ptp(config: &CodeConfig) -> Result<CodecSet> {
    train(config, Algorithm::Ptp)
}

pub fn train_with_history(config: &CodeConfig, algorithm: Algorithm) -> Result<(CodecSet, TrainHistory)> {
    let mut t = Trainer::new(config)?;
    let mut history = TrainHistory::default();
    let tc = &config.train;
    let batches = tc.messages_per_epoch.div_ceil(tc.batch_size);
    for epoch in 0..tc.epochs {
        let mut total = 0.0;
        let mut rows = 0usize;
        for b in 0..batches {
            let size = tc.batch_size.min(tc.messages_per_epoch - b * tc.batch_size);
            let batch = t.draw_batch(size)?;
            let loss = match algorithm {
                Algorithm::Ptp => t.step_ptp(&batch),
                Algorithm::Sic => t.step_sic(&batch),
            }
            .map_err(|e| at_epoch(e, epoch))?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch, reason: format!("loss became {loss}") });
            }
            total += loss * size as f64;
            rows += size;
        }
        let mean = total / rows as f64;
        log::debug!("{algorithm} epoch {epoch}: loss {mean:.6}");
        history.epoch_losses.push(mean);
    }
    let set = CodecSet { config: config.clone(), algorithm, epochs_trained: tc.epochs, pairs: t.pairs };
    Ok((set, history))
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Training { reason, .. } => Error::Training { epoch, reason },
        other => other,
    }
}

struct Batch {
    messages: Vec<Vec<usize>>,
    one_hot: Vec<Tensor2D>,
    noise: Tensor2D,
}

struct Trainer<'a> {
    config: &'a CodeConfig,
    pairs: Vec<CodecPair>,
    enc_opt: Vec<AdamState>,
    dec_opt: Vec<AdamState>,
    amp: Vec<f64>,
    msg_rng: SimRng,
    noise_rng: SimRng,
}

impl<'a> Trainer<'a> {
    fn new(config: &'a CodeConfig) -> Result<Self> {
        let streams = RngStreams::new(config.train.seed);
        let adam = AdamConfig::new(config.train.learning_rate);
        let pairs = config
            .users
            .iter()
            .enumerate()
            .map(|(l, u)| {
                let mut rng = streams.stream(Purpose::WeightInit, l as u64);
                CodecPair::new(config.n, u.messages(), u.power, &config.train.hidden(u.messages()), &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trainer {
            config,
            enc_opt: pairs.iter().map(|p| AdamState::new(&p.encoder, adam)).collect(),
            dec_opt: pairs.iter().map(|p| AdamState::new(&p.decoder, adam)).collect(),
            pairs,
            amp: config.channel.h.iter().map(|h| h.sqrt()).collect(),
            msg_rng: streams.stream(Purpose::TrainMessages, 0),
            noise_rng: streams.stream(Purpose::TrainNoise, 0),
        })
    }

    fn draw_batch(&mut self, size: usize) -> Result<Batch> {
        let mut messages = Vec::with_capacity(self.pairs.len());
        let mut one_hot = Vec::with_capacity(self.pairs.len());
        for p in &self.pairs {
            let m: Vec<usize> = (0..size).map(|_| self.msg_rng.random_range(0..p.messages())).collect();
            one_hot.push(one_hot_batch(&m, p.messages())?);
            messages.push(m);
        }
        let noise = if self.config.channel.noise_disabled {
            Tensor2D::zeros((size, self.config.n))
        } else {
            noise_matrix(&mut self.noise_rng, self.config.channel.sigma2_y, size, self.config.n)?
        };
        Ok(Batch { messages, one_hot, noise })
    }

    fn update(&mut self, l: usize, enc: Option<&Gradients>, dec: &Gradients) -> Result<()> {
        if let Some(g) = enc {
            adam_step(&mut self.pairs[l].encoder, g, &mut self.enc_opt[l])?;
        }
        adam_step(&mut self.pairs[l].decoder, dec, &mut self.dec_opt[l])
    }

    /// Each user trains its own pair against the superposition of itself and
    /// every weaker user; the other users' codewords carry no gradient.
    fn step_ptp(&mut self, batch: &Batch) -> Result<f64> {
        let mut acc = batch.noise.clone();
        let mut total = 0.0;
        for l in 0..self.pairs.len() {
            let (x, enc_cache) = self.pairs[l].encoder.forward(&batch.one_hot[l])?;
            acc.scaled_add(self.amp[l], &x);
            let (probs, dec_cache) = self.pairs[l].decoder.forward(&acc)?;
            let ce = cross_entropy_loss(&probs, &batch.messages[l])?;
            let (g_dec, g_in) = self.pairs[l].decoder.backward_from_logits(&dec_cache, &ce.grad_logits)?;
            let (g_enc, _) = self.pairs[l].encoder.backward(&enc_cache, &(g_in * self.amp[l]))?;
            self.update(l, Some(&g_enc), &g_dec)?;
            total += ce.loss;
        }
        Ok(total)
    }

    /// Joint step on the summed loss with cancellation of re-encoded
    /// estimates inside the computation graph. Hard decisions carry no
    /// gradient; the re-encoded codewords do.
    fn step_sic(&mut self, batch: &Batch) -> Result<f64> {
        let users = self.pairs.len();
        let mut y = batch.noise.clone();
        let mut enc_caches = Vec::with_capacity(users);
        for l in 0..users {
            let (x, cache) = self.pairs[l].encoder.forward(&batch.one_hot[l])?;
            y.scaled_add(self.amp[l], &x);
            enc_caches.push(cache);
        }

        let mut residual = y;
        let mut dec_caches = vec![None; users];
        let mut grads_logits = vec![None; users];
        let mut reenc_caches = vec![None; users];
        let mut total = 0.0;
        for l in (0..users).rev() {
            let (probs, cache) = self.pairs[l].decoder.forward(&residual)?;
            let ce = cross_entropy_loss(&probs, &batch.messages[l])?;
            total += ce.loss;
            if l > 0 {
                let est = argmax_rows(&probs);
                let (xh, rc) = self.pairs[l].encoder.forward(&one_hot_batch(&est, self.pairs[l].messages())?)?;
                residual.scaled_add(-self.amp[l], &xh);
                reenc_caches[l] = Some(rc);
            }
            dec_caches[l] = Some(cache);
            grads_logits[l] = Some(ce.grad_logits);
        }

        // dL/d(input of decoder l); input_l = Y - sum_{j>l} amp_j Xhat_j
        let mut dec_grads = Vec::with_capacity(users);
        let mut g_inputs = Vec::with_capacity(users);
        for l in 0..users {
            let (gd, gi) = self.pairs[l]
                .decoder
                .backward_from_logits(dec_caches[l].as_ref().unwrap(), grads_logits[l].as_ref().unwrap())?;
            dec_grads.push(gd);
            g_inputs.push(gi);
        }
        let mut g_y = g_inputs[0].clone();
        let mut below = Vec::with_capacity(users); // below[j] = sum_{l<j} g_inputs[l]
        below.push(None);
        for l in 1..users {
            below.push(Some(g_y.clone()));
            g_y += &g_inputs[l];
        }

        let mut enc_grads = Vec::with_capacity(users);
        for l in 0..users {
            let enc: &MlpModel = &self.pairs[l].encoder;
            let (mut g, _) = enc.backward(&enc_caches[l], &(&g_y * self.amp[l]))?;
            if let (Some(rc), Some(b)) = (reenc_caches[l].as_ref(), below[l].as_ref()) {
                let (g2, _) = enc.backward(rc, &(b * -self.amp[l]))?;
                g.add_assign(&g2);
            }
            enc_grads.push(g);
        }
        for (l, (ge, gd)) in enc_grads.iter().zip(&dec_grads).enumerate() {
            self.update(l, Some(ge), gd)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelParams;
    use crate::reliability::{CodeSystem, TrainConfig, UserSpec};

    fn tiny(noiseless: bool, epochs: usize) -> CodeConfig {
        let users = vec![UserSpec::transmitter(2, 1, 2.0), UserSpec::helper(2, 8.0)];
        let mut ch = ChannelParams::new(vec![1.0, 1.0], vec![1.0, 1.0], 0.1, 1.0).unwrap();
        if noiseless {
            ch = ch.noiseless();
        }
        let mut t = TrainConfig::new(epochs, 64, 3e-3, 1024, 5);
        t.hidden_width = Some(32);
        CodeConfig::new(8, users, ch, t).unwrap()
    }

    fn message_errors(set: &CodecSet) -> usize {
        let m0: Vec<usize> = (0..16).map(|i| i % 4).collect();
        let m1: Vec<usize> = (0..16).map(|i| i / 4).collect();
        let y = set.encode(0, &m0).unwrap() + &set.encode(1, &m1).unwrap();
        let est = set.decode(&y).unwrap();
        est[0].iter().zip(&m0).filter(|(a, b)| a != b).count() + est[1].iter().zip(&m1).filter(|(a, b)| a != b).count()
    }

    #[test]
    fn both_algorithms_learn_noiseless_code() {
        for algo in [Algorithm::Sic, Algorithm::Ptp] {
            let (set, hist) = train_with_history(&tiny(true, 30), algo).unwrap();
            assert_eq!(hist.epoch_losses.len(), 30);
            assert!(hist.epoch_losses.last().unwrap() < &hist.epoch_losses[0], "{algo}: {:?}", hist.epoch_losses);
            assert_eq!(message_errors(&set), 0, "{algo}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_sic(&tiny(false, 2)).unwrap();
        let b = train_sic(&tiny(false, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trained_codewords_meet_power() {
        let set = train_ptp(&tiny(false, 1)).unwrap();
        for (pair, u) in set.pairs.iter().zip(&set.config.users) {
            let cb = pair.codebook().unwrap();
            for r in cb.rows() {
                assert!((r.dot(&r) - 8.0 * u.power).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sic_gradient_matches_finite_difference() {
        // Checks the analytic SIC gradient of the summed loss for one encoder
        // weight, with hard decisions held fixed (tiny perturbation).
        let cfg = tiny(true, 1);
        let mut t = Trainer::new(&cfg).unwrap();
        let batch = t.draw_batch(8).unwrap();
        let loss_at = |pairs: &[CodecPair]| -> f64 {
            let mut y = batch.noise.clone();
            for l in 0..2 {
                y.scaled_add(1.0, &pairs[l].encoder.forward(&batch.one_hot[l]).unwrap().0);
            }
            let (p1, _) = pairs[1].decoder.forward(&y).unwrap();
            let est = argmax_rows(&p1);
            let xh = pairs[1].encoder.forward(&one_hot_batch(&est, 4).unwrap()).unwrap().0;
            let r = &y - &xh;
            let (p0, _) = pairs[0].decoder.forward(&r).unwrap();
            cross_entropy_loss(&p0, &batch.messages[0]).unwrap().loss + cross_entropy_loss(&p1, &batch.messages[1]).unwrap().loss
        };
        let before = t.pairs.clone();
        let base = loss_at(&before);
        let eps = 1e-6;
        for (layer, (i, j)) in [(0usize, (1usize, 3usize)), (2, (5, 2))] {
            let mut plus = before.clone();
            plus[1].encoder.layers_mut()[layer].weights[[i, j]] += eps;
            let mut minus = before.clone();
            minus[1].encoder.layers_mut()[layer].weights[[i, j]] -= eps;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let analytic = sic_encoder_grad(&mut t, &batch, 1, layer, (i, j));
            assert!((fd - analytic).abs() < 1e-5 * (1.0 + fd.abs()), "fd {fd} analytic {analytic} base {base}");
        }
    }

    /// Encoder gradient entry of one `step_sic`, read back from Adam's first
    /// moment (`m_1 = (1 - beta1) g`). Trainer state is restored afterwards.
    fn sic_encoder_grad(t: &mut Trainer, batch: &Batch, user: usize, layer: usize, at: (usize, usize)) -> f64 {
        let saved = (t.pairs.clone(), t.enc_opt.clone(), t.dec_opt.clone());
        t.step_sic(batch).unwrap();
        let g = t.enc_opt[user].first_moment(layer)[[at.0, at.1]] / (1.0 - t.enc_opt[user].config.beta1);
        (t.pairs, t.enc_opt, t.dec_opt) = saved;
        g
    }
}
