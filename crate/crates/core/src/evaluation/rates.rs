use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::reliability::{CodeSystem, Role};
use crate::rng::{Purpose, RngStreams};
use crate::security::SecurityLayer;
use crate::channel::transmit_main;

/// Rows per Monte-Carlo batch. Each batch owns its RNG sub-streams, so the
/// result does not depend on the number of worker threads.
pub const EVAL_BATCH: usize = 1000;

/// Minimum error count assumed when forming a confidence half-width.
pub const CI_ERROR_FLOOR: u64 = 10;

/// An error probability averaged uniformly over the transmitted messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    /// 95% Wald half-width, computed with at least [`CI_ERROR_FLOOR`] errors.
    pub ci_halfwidth: f64,
    pub errors: u64,
    pub samples: u64,
}

impl RateEstimate {
    /// From per-message `(errors, sent)` counts.
    pub fn from_counts(counts: &[(u64, u64)]) -> RateEstimate {
        let used: Vec<_> = counts.iter().filter(|(_, sent)| *sent > 0).collect();
        let samples: u64 = used.iter().map(|(_, s)| s).sum();
        let errors: u64 = used.iter().map(|(e, _)| e).sum();
        let value = if used.is_empty() {
            0.0
        } else {
            used.iter().map(|(e, s)| *e as f64 / *s as f64).sum::<f64>() / used.len() as f64
        };
        RateEstimate { value, ci_halfwidth: wald_halfwidth(errors, samples), errors, samples }
    }
}

pub fn wald_halfwidth(errors: u64, samples: u64) -> f64 {
    if samples == 0 {
        return 1.0;
    }
    let p = (errors.max(CI_ERROR_FLOOR) as f64 / samples as f64).min(1.0);
    1.96 * (p * (1.0 - p) / samples as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRates {
    pub label: String,
    pub role: Role,
    /// Error rate of the secret after inverse hashing; transmitters only.
    pub secret: Option<RateEstimate>,
    /// Error rate of the reliability-layer message.
    pub message: RateEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    /// Canonical user order.
    pub users: Vec<UserRates>,
    /// Probability that any user's message is decoded wrongly.
    pub joint: RateEstimate,
    pub trials: u64,
}

impl ErrorRates {
    pub fn by_label(&self, label: &str) -> Option<&UserRates> {
        self.users.iter().find(|u| u.label == label)
    }
}

#[derive(Default)]
struct Counts {
    secret: Vec<Vec<(u64, u64)>>,
    message: Vec<Vec<(u64, u64)>>,
    joint: u64,
    rows: u64,
}

impl Counts {
    fn new(sys: &dyn CodeSystem, security: &SecurityLayer) -> Counts {
        let users = &sys.config().users;
        let mut secret = vec![Vec::new(); users.len()];
        for (idx, pair) in security.pairs() {
            secret[*idx] = vec![(0, 0); 1 << pair.k()];
        }
        Counts {
            secret,
            message: users.iter().map(|u| vec![(0, 0); u.messages()]).collect(),
            joint: 0,
            rows: 0,
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        for (a, b) in self.secret.iter_mut().chain(self.message.iter_mut()).zip(other.secret.iter().chain(&other.message)) {
            for (x, y) in a.iter_mut().zip(b) {
                x.0 += y.0;
                x.1 += y.1;
            }
        }
        self.joint += other.joint;
        self.rows += other.rows;
        self
    }
}

/// Secrets, reliability messages and codewords for one batch.
pub(crate) struct Transmission {
    /// Secret value per transmitter index (canonical), per row.
    pub secrets: Vec<Option<Vec<u32>>>,
    pub messages: Vec<Vec<usize>>,
    pub codewords: Vec<crate::nn::Tensor2D>,
}

/// Draws uniform secrets and randomness (transmitters) or messages (helpers)
/// and encodes them.
pub(crate) fn draw_transmission<R: Rng + ?Sized>(
    sys: &dyn CodeSystem,
    security: &SecurityLayer,
    rows: usize,
    rng: &mut R,
) -> Result<Transmission> {
    let cfg = sys.config();
    let mut secrets = vec![None; cfg.num_users()];
    let mut messages = Vec::with_capacity(cfg.num_users());
    for (l, u) in cfg.users.iter().enumerate() {
        let m: Vec<usize> = match security.pairs().iter().find(|(i, _)| *i == l) {
            Some((_, pair)) => {
                let s: Vec<u32> = (0..rows).map(|_| rng.random_range(0..1u32 << pair.k())).collect();
                let v = s.iter().map(|&s| pair.encode_random(s, rng) as usize).collect();
                secrets[l] = Some(s);
                v
            }
            None => (0..rows).map(|_| rng.random_range(0..u.messages())).collect(),
        };
        messages.push(m);
    }
    let codewords = messages.iter().enumerate().map(|(l, m)| sys.encode(l, m)).collect::<Result<Vec<_>>>()?;
    Ok(Transmission { secrets, messages, codewords })
}

fn check_security(sys: &dyn CodeSystem, security: &SecurityLayer) -> Result<()> {
    let cfg = sys.config();
    for (idx, pair) in security.pairs() {
        let u = cfg.users.get(*idx).ok_or_else(|| usage!("security layer refers to missing user {idx}"))?;
        if u.role != Role::Transmitter || pair.q() != u.q {
            return Err(usage!("security layer does not match user {idx}"));
        }
    }
    Ok(())
}

/// Monte-Carlo estimate of every user's error rates over the legitimate
/// channel: secret, hash, encode, channel, SIC decode, inverse hash.
pub fn estimate_error_rates(
    sys: &dyn CodeSystem,
    security: &SecurityLayer,
    trials: usize,
    streams: &RngStreams,
) -> Result<ErrorRates> {
    if trials == 0 {
        return Err(usage!("trials must be positive"));
    }
    check_security(sys, security)?;
    let cfg = sys.config();
    let batches = trials.div_ceil(EVAL_BATCH);
    let per_batch = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<Counts> {
            let rows = EVAL_BATCH.min(trials - b * EVAL_BATCH);
            let mut msg_rng = streams.stream(Purpose::EvalMessages, b as u64);
            let mut noise_rng = streams.stream(Purpose::EvalNoise, b as u64);
            let tx = draw_transmission(sys, security, rows, &mut msg_rng)?;
            let refs: Vec<_> = tx.codewords.iter().collect();
            let y = transmit_main(&refs, &cfg.channel, &mut noise_rng)?;
            let est = sys.decode(&y)?;
            if est.len() != cfg.num_users() || est.iter().any(|e| e.len() != rows) {
                return Err(usage!("decoder returned malformed estimates"));
            }
            let mut c = Counts::new(sys, security);
            c.rows = rows as u64;
            let mut any_wrong = vec![false; rows];
            for l in 0..cfg.num_users() {
                for r in 0..rows {
                    let sent = tx.messages[l][r];
                    let wrong = est[l][r] != sent;
                    any_wrong[r] |= wrong;
                    c.message[l][sent].0 += wrong as u64;
                    c.message[l][sent].1 += 1;
                }
                if let Some(s) = &tx.secrets[l] {
                    let pair = &security.pairs().iter().find(|(i, _)| *i == l).unwrap().1;
                    for r in 0..rows {
                        let wrong = pair.psi(est[l][r] as u32) != s[r];
                        c.secret[l][s[r] as usize].0 += wrong as u64;
                        c.secret[l][s[r] as usize].1 += 1;
                    }
                }
            }
            c.joint = any_wrong.iter().filter(|w| **w).count() as u64;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = per_batch.into_iter().reduce(Counts::merge).expect("at least one batch");

    let users = (0..cfg.num_users())
        .map(|l| UserRates {
            label: cfg.label(l),
            role: cfg.users[l].role,
            secret: security.pairs().iter().any(|(i, _)| *i == l).then(|| RateEstimate::from_counts(&total.secret[l])),
            message: RateEstimate::from_counts(&total.message[l]),
        })
        .collect();
    let joint = RateEstimate {
        value: total.joint as f64 / total.rows as f64,
        ci_halfwidth: wald_halfwidth(total.joint, total.rows),
        errors: total.joint,
        samples: total.rows,
    };
    Ok(ErrorRates { users, joint, trials: trials as u64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelParams;
    use crate::nn::Tensor2D;
    use crate::reliability::{CodeConfig, TrainConfig, UserSpec};

    /// Encodes message m as the constant row m; decodes by rounding, or
    /// returns a fixed message when `constant` is set.
    struct Stub {
        cfg: CodeConfig,
        constant: Option<usize>,
    }

    impl CodeSystem for Stub {
        fn config(&self) -> &CodeConfig {
            &self.cfg
        }
        fn encode(&self, user: usize, messages: &[usize]) -> Result<Tensor2D> {
            let scale = 100f64.powi(user as i32);
            Ok(Tensor2D::from_shape_fn((messages.len(), self.cfg.n), |(r, _)| messages[r] as f64 * scale))
        }
        fn decode(&self, y: &Tensor2D) -> Result<Vec<Vec<usize>>> {
            Ok((0..self.cfg.num_users())
                .map(|l| {
                    y.rows()
                        .into_iter()
                        .map(|row| match self.constant {
                            Some(c) => c,
                            None => ((row[0] / 100f64.powi(l as i32)).round() as usize) % 100,
                        })
                        .collect()
                })
                .collect())
        }
    }

    fn stub(constant: Option<usize>) -> Stub {
        let users = vec![UserSpec::transmitter(4, 2, 1.0), UserSpec::helper(3, 2.0)];
        let ch = ChannelParams::new(vec![1.0, 1.0], vec![1.0, 1.0], 1.0, 1.0).unwrap().noiseless();
        Stub { cfg: CodeConfig::new(2, users, ch, TrainConfig::new(1, 1, 1e-3, 1, 0)).unwrap(), constant }
    }

    #[test]
    fn perfect_decoder_has_zero_error() {
        let s = stub(None);
        let sec = s.cfg.security_layer().unwrap();
        let r = estimate_error_rates(&s, &sec, 2500, &RngStreams::new(3)).unwrap();
        assert_eq!(r.joint.value, 0.0);
        for u in &r.users {
            assert_eq!(u.message.value, 0.0);
            assert_eq!(u.secret.map_or(0.0, |e| e.value), 0.0);
        }
        assert_eq!(r.users[0].secret.unwrap().samples, 2500);
        assert!(r.users[1].secret.is_none());
    }

    #[test]
    fn constant_decoder_misses_all_but_one_message() {
        let s = stub(Some(0));
        let sec = s.cfg.security_layer().unwrap();
        let r = estimate_error_rates(&s, &sec, 20_000, &RngStreams::new(3)).unwrap();
        assert!((r.users[0].message.value - (1.0 - 1.0 / 16.0)).abs() < 1e-12);
        assert!((r.users[1].message.value - (1.0 - 1.0 / 8.0)).abs() < 1e-12);
        // ψ(0) = 0 for any seed, so exactly one secret value of four is right
        assert!((r.users[0].secret.unwrap().value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn results_are_reproducible() {
        let s = stub(Some(1));
        let sec = s.cfg.security_layer().unwrap();
        let a = estimate_error_rates(&s, &sec, 3001, &RngStreams::new(9)).unwrap();
        let b = estimate_error_rates(&s, &sec, 3001, &RngStreams::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(estimate_error_rates(&s, &sec, 0, &RngStreams::new(9)).is_err());
    }

    #[test]
    fn wald_interval_uses_error_floor() {
        assert_eq!(wald_halfwidth(0, 10_000), wald_halfwidth(10, 10_000));
        let p: f64 = 0.05;
        assert!((wald_halfwidth(500, 10_000) - 1.96 * (p * (1.0 - p) / 1e4).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn per_message_averaging_is_uniform() {
        let r = RateEstimate::from_counts(&[(1, 10), (0, 1000), (0, 0)]);
        assert!((r.value - 0.05).abs() < 1e-15);
        assert_eq!(r.samples, 1010);
    }
}
