use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelParams;
use crate::error::{usage, Result};
use crate::nn::default_hidden_width;
use crate::security::{HashPair, Seed, SecurityLayer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Sends a secret through the security layer.
    Transmitter,
    /// Sends an unprotected message that jams the eavesdropper.
    Helper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub role: Role,
    /// Message width of the reliability layer; the codebook has 2^q words.
    pub q: u32,
    /// Secret width, transmitters only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// Hash seed, transmitters only; defaults to the field identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Seed>,
    pub power: f64,
}

impl UserSpec {
    pub fn transmitter(q: u32, k: u32, power: f64) -> Self {
        UserSpec { role: Role::Transmitter, q, k: Some(k), seed: None, power }
    }

    pub fn helper(q: u32, power: f64) -> Self {
        UserSpec { role: Role::Helper, q, k: None, seed: None, power }
    }

    pub fn messages(&self) -> usize {
        1 << self.q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fresh uniformly random message tuples per epoch.
    pub messages_per_epoch: usize,
    /// Seed for weight initialization and training data.
    pub seed: u64,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    /// Overrides the default width `max(128, 2 * 2^q)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_width: Option<usize>,
}

fn default_hidden_layers() -> usize {
    2
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, messages_per_epoch: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            messages_per_epoch,
            seed,
            hidden_layers: default_hidden_layers(),
            hidden_width: None,
        }
    }

    pub fn hidden(&self, cardinality: usize) -> Vec<usize> {
        vec![self.hidden_width.unwrap_or_else(|| default_hidden_width(cardinality)); self.hidden_layers]
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.messages_per_epoch == 0 {
            return Err(usage!("epochs, batch size and messages per epoch must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(usage!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.hidden_width == Some(0) {
            return Err(usage!("hidden width must be positive"));
        }
        Ok(())
    }
}

/// A complete code description. Values of this type are always canonical:
/// users are ordered so that `h_1 P_1 <= ... <= h_L P_L` (ties by input
/// position), with channel gains permuted alongside. Index 0 is the weakest
/// user and is decoded last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCodeConfig")]
pub struct CodeConfig {
    pub n: usize,
    pub users: Vec<UserSpec>,
    pub channel: ChannelParams,
    pub train: TrainConfig,
}

#[derive(Deserialize)]
struct RawCodeConfig {
    n: usize,
    users: Vec<UserSpec>,
    channel: ChannelParams,
    train: TrainConfig,
}

impl TryFrom<RawCodeConfig> for CodeConfig {
    type Error = crate::error::Error;

    fn try_from(r: RawCodeConfig) -> Result<Self> {
        CodeConfig::new(r.n, r.users, r.channel, r.train)
    }
}

pub const MAX_BLOCKLENGTH: usize = 64;

impl CodeConfig {
    pub fn new(n: usize, users: Vec<UserSpec>, channel: ChannelParams, train: TrainConfig) -> Result<Self> {
        if n == 0 || n > MAX_BLOCKLENGTH {
            return Err(usage!("blocklength {n} outside 1..={MAX_BLOCKLENGTH}"));
        }
        if users.is_empty() {
            return Err(usage!("at least one user is required"));
        }
        channel.validate()?;
        if channel.users() != users.len() {
            return Err(usage!("{} users but {} channel gain entries", users.len(), channel.users()));
        }
        train.validate()?;
        let transmitters = users.iter().filter(|u| u.role == Role::Transmitter).count();
        if transmitters > 2 {
            return Err(usage!("at most two transmitters are supported, got {transmitters}"));
        }
        for (i, u) in users.iter().enumerate() {
            if u.q == 0 || u.q > crate::gf2::MAX_DEGREE {
                return Err(usage!("user {i}: q={} outside 1..=16", u.q));
            }
            if !(u.power.is_finite() && u.power >= 0.0) {
                return Err(usage!("user {i}: power must be finite and non-negative"));
            }
            match u.role {
                Role::Transmitter => {
                    let k = u.k.ok_or_else(|| usage!("user {i}: transmitter needs a secret width k"))?;
                    if k > u.q {
                        return Err(usage!("user {i}: k={k} exceeds q={}", u.q));
                    }
                    if let Some(seed) = u.seed {
                        if seed.q() != u.q {
                            return Err(usage!("user {i}: seed {seed} has width {} but q={}", seed.q(), u.q));
                        }
                    }
                }
                Role::Helper => {
                    if u.k.is_some() || u.seed.is_some() {
                        return Err(usage!("user {i}: helpers have no secret or seed"));
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..users.len()).collect();
        let key = |i: usize| channel.h[i] * users[i].power;
        order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let channel = ChannelParams {
            h: order.iter().map(|&i| channel.h[i]).collect(),
            g: order.iter().map(|&i| channel.g[i]).collect(),
            ..channel
        };
        let users = order.iter().map(|&i| users[i].clone()).collect();
        Ok(CodeConfig { n, users, channel, train })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_transmitters(&self) -> usize {
        self.users.iter().filter(|u| u.role == Role::Transmitter).count()
    }

    /// Canonical indices of transmitters, in label order (S1, S2).
    pub fn transmitter_indices(&self) -> Vec<usize> {
        (0..self.users.len()).filter(|&i| self.users[i].role == Role::Transmitter).collect()
    }

    pub fn helper_indices(&self) -> Vec<usize> {
        (0..self.users.len()).filter(|&i| self.users[i].role == Role::Helper).collect()
    }

    /// `S1`, `S2` for transmitters; `M{T+1}`, ... for helpers.
    pub fn label(&self, index: usize) -> String {
        let before = &self.users[..index];
        match self.users[index].role {
            Role::Transmitter => format!("S{}", before.iter().filter(|u| u.role == Role::Transmitter).count() + 1),
            Role::Helper => {
                let h = before.iter().filter(|u| u.role == Role::Helper).count();
                format!("M{}", self.num_transmitters() + h + 1)
            }
        }
    }

    pub fn secret_bits(&self) -> u32 {
        self.transmitter_indices().iter().map(|&i| self.users[i].k.unwrap_or(0)).sum()
    }

    pub fn security_layer(&self) -> Result<SecurityLayer> {
        let pairs = self
            .transmitter_indices()
            .into_iter()
            .map(|i| {
                let u = &self.users[i];
                let seed = match u.seed {
                    Some(s) => s,
                    None => Seed::identity(u.q)?,
                };
                Ok((i, HashPair::new(seed, u.k.unwrap_or(0))?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SecurityLayer::new(pairs))
    }

    /// Short SHA-256 digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// The same code with every helper removed (`P_j = 0`, `M = ∅`).
    pub fn without_helpers(&self) -> Result<CodeConfig> {
        self.with_helper_count(0, None)
    }

    /// Replaces the helpers by `count` copies of `template` (or of the first
    /// existing helper and its channel gains).
    pub fn with_helper_count(&self, count: usize, template: Option<(UserSpec, f64, f64)>) -> Result<CodeConfig> {
        let template = match template {
            Some(t) => Some(t),
            None => self.helper_indices().first().map(|&i| (self.users[i].clone(), self.channel.h[i], self.channel.g[i])),
        };
        if count > 0 && template.is_none() {
            return Err(usage!("no helper template available"));
        }
        let mut users = Vec::new();
        let mut h = Vec::new();
        let mut g = Vec::new();
        for i in self.transmitter_indices() {
            users.push(self.users[i].clone());
            h.push(self.channel.h[i]);
            g.push(self.channel.g[i]);
        }
        if let Some((spec, th, tg)) = template {
            for _ in 0..count {
                users.push(spec.clone());
                h.push(th);
                g.push(tg);
            }
        }
        let channel = ChannelParams { h, g, ..self.channel.clone() };
        CodeConfig::new(self.n, users, channel, self.train.clone())
    }

    /// Rebuilds the config from its fields, re-applying canonical ordering.
    pub fn rebuild(&self) -> Result<CodeConfig> {
        CodeConfig::new(self.n, self.users.clone(), self.channel.clone(), self.train.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train() -> TrainConfig {
        TrainConfig::new(1, 10, 1e-3, 10, 0)
    }

    fn base() -> CodeConfig {
        let users = vec![UserSpec::helper(4, 12.0), UserSpec::transmitter(4, 1, 2.0)];
        let ch = ChannelParams::new(vec![1.0, 1.0], vec![0.3, 1.0], 1.0, 1.0).unwrap();
        CodeConfig::new(12, users, ch, train()).unwrap()
    }

    #[test]
    fn users_sorted_by_received_power() {
        let c = base();
        assert_eq!(c.users[0].role, Role::Transmitter);
        assert_eq!(c.channel.g, vec![1.0, 0.3]);
        assert_eq!(c.label(0), "S1");
        assert_eq!(c.label(1), "M2");
    }

    #[test]
    fn permutation_gives_same_canonical_config() {
        let users = vec![UserSpec::transmitter(4, 1, 2.0), UserSpec::helper(4, 12.0), UserSpec::helper(3, 6.0)];
        let ch = ChannelParams::new(vec![1.0, 1.0, 1.0], vec![1.0, 0.3, 0.5], 1.0, 1.0).unwrap();
        let a = CodeConfig::new(12, users.clone(), ch.clone(), train()).unwrap();
        let perm = [2, 0, 1];
        let users_p = perm.iter().map(|&i| users[i].clone()).collect();
        let ch_p = ChannelParams {
            h: perm.iter().map(|&i| ch.h[i]).collect(),
            g: perm.iter().map(|&i| ch.g[i]).collect(),
            ..ch
        };
        let b = CodeConfig::new(12, users_p, ch_p, train()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!((0..3).map(|i| a.label(i)).collect::<Vec<_>>(), vec!["S1", "M2", "M3"]);
    }

    #[test]
    fn ties_keep_input_order() {
        let users = vec![UserSpec::helper(2, 2.0), UserSpec::transmitter(2, 1, 2.0)];
        let ch = ChannelParams::new(vec![1.0, 1.0], vec![1.0, 1.0], 6.0, 1.0).unwrap();
        let c = CodeConfig::new(8, users, ch, train()).unwrap();
        assert_eq!(c.users[0].role, Role::Helper);
        assert_eq!(c.label(1), "S1");
    }

    #[test]
    fn invalid_configs_rejected() {
        let ch = ChannelParams::new(vec![1.0], vec![1.0], 1.0, 1.0).unwrap();
        assert!(CodeConfig::new(12, vec![UserSpec::transmitter(4, 5, 1.0)], ch.clone(), train()).is_err());
        assert!(CodeConfig::new(65, vec![UserSpec::transmitter(4, 1, 1.0)], ch.clone(), train()).is_err());
        assert!(CodeConfig::new(12, vec![UserSpec::helper(4, 1.0), UserSpec::helper(4, 1.0)], ch.clone(), train()).is_err());
        let mut bad_seed = UserSpec::transmitter(4, 1, 1.0);
        bad_seed.seed = Some("000001".parse().unwrap());
        assert!(CodeConfig::new(12, vec![bad_seed], ch.clone(), train()).is_err());
        let mut t = train();
        t.epochs = 0;
        assert!(CodeConfig::new(12, vec![UserSpec::transmitter(4, 1, 1.0)], ch, t).is_err());
    }

    #[test]
    fn json_round_trip_and_canonicalizes() {
        let c = base();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"sigma2_Y\""));
        let back: CodeConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn helper_count_variants() {
        let c = base();
        let none = c.without_helpers().unwrap();
        assert_eq!(none.num_users(), 1);
        assert_eq!(none.channel.g, vec![1.0]);
        let three = c.with_helper_count(3, None).unwrap();
        assert_eq!(three.num_users(), 4);
        assert_eq!(three.label(3), "M4");
        assert!(none.with_helper_count(1, None).is_err());
    }
}
