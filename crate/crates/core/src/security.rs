//! Universal-hash security layer.
//!
//! For a nonzero seed `λ` in GF(2^q), the transmitter maps a secret `s` of
//! `k` bits and `q - k` bits of local randomness `b` to `v = λ⁻¹ · (s ‖ b)`,
//! and the receiver recovers `s` as the `k` left-most bits of `λ · v̂`.
//! Bit strings are written most-significant bit first, so index 0 is the
//! left-most bit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{usage, Error, Result};
use crate::gf2::{FieldElement, FieldSpec, MAX_DEGREE};

/// Fixed-width bit string, left-most bit stored in the highest position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    value: u32,
    width: u32,
}

impl Bits {
    pub fn new(value: u32, width: u32) -> Result<Self> {
        if width > MAX_DEGREE {
            return Err(usage!("bit string width {width} exceeds {MAX_DEGREE}"));
        }
        if width < 32 && value >> width != 0 {
            return Err(usage!("value {value:#b} does not fit in {width} bits"));
        }
        Ok(Self { value, width })
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }

    /// `self ‖ tail`.
    pub fn concat(self, tail: Bits) -> Result<Bits> {
        Bits::new((self.value << tail.width) | tail.value, self.width + tail.width)
    }

    /// The `k` left-most bits.
    pub fn leftmost(self, k: u32) -> Result<Bits> {
        if k > self.width {
            return Err(usage!("cannot take {k} bits from a {}-bit string", self.width));
        }
        Bits::new(self.value >> (self.width - k), k)
    }

    pub fn random<R: Rng + ?Sized>(width: u32, rng: &mut R) -> Result<Bits> {
        let value = if width == 0 { 0 } else { rng.random::<u32>() >> (32 - width) };
        Bits::new(value, width)
    }

    /// Bit `i` counted from the left.
    pub fn bit(self, i: u32) -> bool {
        (self.value >> (self.width - 1 - i)) & 1 == 1
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > MAX_DEGREE as usize || s.chars().any(|c| c != '0' && c != '1') {
            return Err(usage!("{s:?} is not a binary string of at most {MAX_DEGREE} bits"));
        }
        let value = s.chars().fold(0u32, |acc, c| (acc << 1) | (c == '1') as u32);
        Bits::new(value, s.len() as u32)
    }
}

impl From<FieldElement> for Bits {
    fn from(e: FieldElement) -> Self {
        Bits { value: e.value(), width: e.width() }
    }
}

/// Secret message of `k` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecretMessage(pub Bits);

/// `q - k` uniformly random bits drawn fresh for every encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalRandomness(pub Bits);

/// Nonzero hash seed. Serialized as a binary string such as `"0001"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Seed(FieldElement);

impl Seed {
    pub fn new(lambda: FieldElement) -> Result<Self> {
        if lambda.is_zero() {
            return Err(usage!("seed must be nonzero"));
        }
        Ok(Self(lambda))
    }

    pub fn from_value(value: u32, q: u32) -> Result<Self> {
        Self::new(FieldElement::new(value, q)?)
    }

    /// The multiplicative identity of GF(2^q).
    pub fn identity(q: u32) -> Result<Self> {
        Self::from_value(1, q)
    }

    pub fn lambda(self) -> FieldElement {
        self.0
    }

    pub fn q(self) -> u32 {
        self.0.width()
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Bits::from(self.0).fmt(f)
    }
}

impl FromStr for Seed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits: Bits = s.parse()?;
        Seed::from_value(bits.value(), bits.width())
    }
}

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The pair (φ_λ, ψ_λ) for one transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashPair {
    field: FieldSpec,
    k: u32,
    seed: Seed,
    seed_inv: u32,
}

impl HashPair {
    pub fn new(seed: Seed, k: u32) -> Result<Self> {
        let q = seed.q();
        if k > q {
            return Err(usage!("secret width k={k} exceeds q={q}"));
        }
        let field = FieldSpec::new(q)?;
        let seed_inv = field.inv(seed.lambda())?.value();
        Ok(Self { field, k, seed, seed_inv })
    }

    pub fn q(&self) -> u32 {
        self.field.q()
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn encode(&self, s: SecretMessage, b: LocalRandomness) -> Result<Bits> {
        if s.0.width() != self.k || b.0.width() != self.q() - self.k {
            return Err(usage!(
                "expected {}-bit secret and {}-bit randomness, got {} and {}",
                self.k,
                self.q() - self.k,
                s.0.width(),
                b.0.width()
            ));
        }
        Bits::new(self.phi(s.0.value(), b.0.value()), self.q())
    }

    pub fn decode(&self, v: Bits) -> Result<SecretMessage> {
        if v.width() != self.q() {
            return Err(usage!("expected {}-bit input, got {}", self.q(), v.width()));
        }
        Ok(SecretMessage(Bits::new(self.psi(v.value()), self.k)?))
    }

    /// φ on raw integers; `s < 2^k`, `b < 2^(q-k)`.
    pub fn phi(&self, s: u32, b: u32) -> u32 {
        let joined = (s << (self.q() - self.k)) | b;
        self.field.mul_raw(self.seed_inv, joined)
    }

    /// ψ on raw integers; `v < 2^q`.
    pub fn psi(&self, v: u32) -> u32 {
        self.field.mul_raw(self.seed.lambda().value(), v) >> (self.q() - self.k)
    }

    /// Draws `B` and returns `φ(s, B)`.
    pub fn encode_random<R: Rng + ?Sized>(&self, s: u32, rng: &mut R) -> u32 {
        let r = self.q() - self.k;
        let b = if r == 0 { 0 } else { rng.random::<u32>() >> (32 - r) };
        self.phi(s, b)
    }
}

pub fn encode_phi(s: SecretMessage, b: LocalRandomness, seed: Seed) -> Result<Bits> {
    HashPair::new(seed, s.0.width())?.encode(s, b)
}

pub fn decode_psi(v: Bits, seed: Seed, k: u32) -> Result<SecretMessage> {
    HashPair::new(seed, k)?.decode(v)
}

/// Every nonzero seed when `q <= 6`, otherwise the configured subset.
pub fn candidate_seeds(q: u32, configured: &[Seed]) -> Result<Vec<Seed>> {
    if q <= 6 {
        return (1..1u32 << q).map(|v| Seed::from_value(v, q)).collect();
    }
    if configured.is_empty() {
        return Err(usage!("q={q} requires an explicit seed candidate list"));
    }
    if let Some(bad) = configured.iter().find(|s| s.q() != q) {
        return Err(usage!("candidate seed {bad} does not have width {q}"));
    }
    Ok(configured.to_vec())
}

/// Seed with the smallest estimated leakage; ties go to the smallest λ.
///
/// Candidates are evaluated concurrently, so the oracle must be `Sync` and
/// must derive any randomness from its own fixed seed.
pub fn select_seed<F>(candidates: &[Seed], leakage_oracle: F) -> Result<Seed>
where
    F: Fn(Seed) -> f64 + Sync,
{
    if candidates.is_empty() {
        return Err(usage!("seed selection needs at least one candidate"));
    }
    let scores: Vec<f64> = candidates.par_iter().map(|&s| leakage_oracle(s)).collect();
    if let Some(i) = scores.iter().position(|v| v.is_nan()) {
        return Err(usage!("leakage oracle returned NaN for seed {}", candidates[i]));
    }
    let best = candidates
        .iter()
        .zip(&scores)
        .min_by(|(sa, va), (sb, vb)| va.total_cmp(vb).then(sa.lambda().value().cmp(&sb.lambda().value())))
        .map(|(s, _)| *s)
        .expect("nonempty");
    Ok(best)
}

/// Hash pairs for every transmitter of a code, keyed by the transmitter's
/// position in the canonical user order. Listed in label order (S1, S2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityLayer {
    pairs: Vec<(usize, HashPair)>,
}

impl SecurityLayer {
    pub fn new(pairs: Vec<(usize, HashPair)>) -> Self {
        SecurityLayer { pairs }
    }

    pub fn pairs(&self) -> &[(usize, HashPair)] {
        &self.pairs
    }

    /// Total secret width `k_1 + ... + k_T`.
    pub fn secret_bits(&self) -> u32 {
        self.pairs.iter().map(|(_, p)| p.k()).sum()
    }
}
