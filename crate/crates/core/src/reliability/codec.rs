use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::CodeConfig;
use crate::error::{usage, Result};
use crate::nn::{one_hot_batch, Activation, MlpModel, Tensor2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Joint training with successive interference cancellation in the loop.
    Sic,
    /// Independent point-to-point training, weakest user first.
    Ptp,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Sic => "sic",
            Algorithm::Ptp => "ptp",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sic" => Ok(Algorithm::Sic),
            "ptp" => Ok(Algorithm::Ptp),
            _ => Err(usage!("unknown algorithm {s:?}; expected sic or ptp")),
        }
    }
}

/// Encoder and decoder for one user.
///
/// The encoder maps a one-hot message to a length-`n` codeword with squared
/// norm `n * power`; the decoder maps a length-`n` observation to a
/// distribution over the `2^q` messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecPair {
    pub encoder: MlpModel,
    pub decoder: MlpModel,
}

impl CodecPair {
    pub fn new<R: Rng + ?Sized>(n: usize, messages: usize, power: f64, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if messages < 2 {
            return Err(usage!("a codebook needs at least two messages"));
        }
        let encoder = MlpModel::dense(messages, hidden, n, Activation::PowerNorm { power }, rng)?;
        let decoder = MlpModel::dense(n, hidden, messages, Activation::Softmax, rng)?;
        Ok(CodecPair { encoder, decoder })
    }

    pub fn messages(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn blocklength(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn power(&self) -> f64 {
        match self.encoder.output_activation() {
            Activation::PowerNorm { power } => power,
            _ => f64::NAN,
        }
    }

    /// Codewords for a batch of message indices, one per row.
    pub fn encode(&self, messages: &[usize]) -> Result<Tensor2D> {
        self.encoder.infer(&one_hot_batch(messages, self.messages())?)
    }

    /// Most likely message for each observation row; ties go to the smaller index.
    pub fn decode(&self, observations: &Tensor2D) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.decoder.infer(observations)?))
    }

    /// Every codeword, indexed by message.
    pub fn codebook(&self) -> Result<Tensor2D> {
        self.encode(&(0..self.messages()).collect::<Vec<_>>())
    }
}

pub(crate) fn argmax_rows(p: &Tensor2D) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Anything that can turn per-user messages into codewords and a received
/// block back into per-user message estimates.
pub trait CodeSystem: Sync {
    fn config(&self) -> &CodeConfig;

    /// Codewords of user `user` (canonical index) for the given messages.
    fn encode(&self, user: usize, messages: &[usize]) -> Result<Tensor2D>;

    /// Message estimates for every user, indexed `[user][row]`.
    fn decode(&self, received: &Tensor2D) -> Result<Vec<Vec<usize>>>;

    fn is_trained(&self) -> bool {
        true
    }
}

/// Trained codecs for every user of a [`CodeConfig`], in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecSet {
    pub config: CodeConfig,
    pub algorithm: Algorithm,
    pub epochs_trained: usize,
    pub pairs: Vec<CodecPair>,
}

impl CodecSet {
    pub fn check(&self) -> Result<()> {
        if self.pairs.len() != self.config.num_users() {
            return Err(usage!("{} codecs for {} users", self.pairs.len(), self.config.num_users()));
        }
        for (i, (p, u)) in self.pairs.iter().zip(&self.config.users).enumerate() {
            if p.messages() != u.messages() || p.blocklength() != self.config.n || p.decoder.input_dim() != self.config.n {
                return Err(usage!("codec {i} does not match its user entry"));
            }
        }
        Ok(())
    }
}

impl CodeSystem for CodecSet {
    fn config(&self) -> &CodeConfig {
        &self.config
    }

    fn encode(&self, user: usize, messages: &[usize]) -> Result<Tensor2D> {
        self.pairs.get(user).ok_or_else(|| usage!("no user {user}"))?.encode(messages)
    }

    fn decode(&self, received: &Tensor2D) -> Result<Vec<Vec<usize>>> {
        decode_sic(&self.pairs, &self.config.channel.h, received)
    }

    fn is_trained(&self) -> bool {
        self.epochs_trained > 0
    }
}

/// Successive interference cancellation: the strongest user is decoded
/// first, its re-encoded estimate is subtracted, and so on down to user 0.
/// Returns estimates indexed `[user][row]`.
pub fn decode_sic(pairs: &[CodecPair], h: &[f64], received: &Tensor2D) -> Result<Vec<Vec<usize>>> {
    if pairs.len() != h.len() || pairs.is_empty() {
        return Err(usage!("{} codecs but {} gains", pairs.len(), h.len()));
    }
    let mut residual = received.clone();
    let mut out = vec![Vec::new(); pairs.len()];
    for l in (0..pairs.len()).rev() {
        let est = pairs[l].decode(&residual)?;
        if l > 0 {
            let x = pairs[l].encode(&est)?;
            residual.scaled_add(-h[l].sqrt(), &x);
        }
        out[l] = est;
    }
    Ok(out)
}
