use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::channel::transmit_eve;
use crate::error::{usage, Result};
use crate::evaluation::{draw_transmission, EVAL_BATCH};
use crate::nn::Tensor2D;
use crate::reliability::CodeSystem;
use crate::rng::{Purpose, RngStreams};
use crate::security::SecurityLayer;

/// Row-aligned pairs `(s(i), z(i))` of secrets and eavesdropper observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// `l x k` bits, most significant first; with two transmitters the row is `S1 ‖ S2`.
    pub secrets: Array2<u8>,
    /// `l x n` channel outputs at the eavesdropper.
    pub observations: Tensor2D,
}

impl SampleSet {
    pub fn new(secrets: Array2<u8>, observations: Tensor2D) -> Result<Self> {
        if secrets.nrows() != observations.nrows() {
            return Err(usage!("{} secrets for {} observations", secrets.nrows(), observations.nrows()));
        }
        if secrets.iter().any(|&b| b > 1) {
            return Err(usage!("secret matrix must hold bits"));
        }
        Ok(SampleSet { secrets, observations })
    }

    /// Packs integer secrets of width `k` into bit rows.
    pub fn from_values(values: &[u32], k: u32, observations: Tensor2D) -> Result<Self> {
        let bits = Array2::from_shape_fn((values.len(), k as usize), |(r, c)| ((values[r] >> (k as usize - 1 - c)) & 1) as u8);
        SampleSet::new(bits, observations)
    }

    pub fn len(&self) -> usize {
        self.secrets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn secret_bits(&self) -> usize {
        self.secrets.ncols()
    }

    pub fn blocklength(&self) -> usize {
        self.observations.ncols()
    }

    /// Secrets as `±1` features.
    pub fn secret_features(&self) -> Tensor2D {
        self.secrets.mapv(|b| if b == 1 { 1.0 } else { -1.0 })
    }

    pub fn select(&self, rows: &[usize]) -> SampleSet {
        SampleSet {
            secrets: self.secrets.select(ndarray::Axis(0), rows),
            observations: self.observations.select(ndarray::Axis(0), rows),
        }
    }
}

/// Runs the full pipeline to the eavesdropper `l` times with uniform
/// secrets, local randomness and helper messages.
pub fn collect_samples(sys: &dyn CodeSystem, security: &SecurityLayer, l: usize, streams: &RngStreams) -> Result<SampleSet> {
    if l == 0 {
        return Err(usage!("sample count must be positive"));
    }
    if !sys.is_trained() {
        return Err(usage!("leakage estimation needs trained codecs"));
    }
    let cfg = sys.config();
    let k = security.secret_bits() as usize;
    let parts = (0..l.div_ceil(EVAL_BATCH))
        .into_par_iter()
        .map(|b| -> Result<(Array2<u8>, Tensor2D)> {
            let rows = EVAL_BATCH.min(l - b * EVAL_BATCH);
            let mut msg_rng = streams.stream(Purpose::LeakageMessages, b as u64);
            let mut noise_rng = streams.stream(Purpose::LeakageNoise, b as u64);
            let tx = draw_transmission(sys, security, rows, &mut msg_rng)?;
            let refs: Vec<_> = tx.codewords.iter().collect();
            let z = transmit_eve(&refs, &cfg.channel, &mut noise_rng)?;
            let mut bits = Array2::zeros((rows, k));
            let mut col = 0;
            for (idx, pair) in security.pairs() {
                let kk = pair.k() as usize;
                let s = tx.secrets[*idx].as_ref().expect("transmitter secrets drawn");
                for r in 0..rows {
                    for c in 0..kk {
                        bits[[r, col + c]] = ((s[r] >> (kk - 1 - c)) & 1) as u8;
                    }
                }
                col += kk;
            }
            Ok((bits, z))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut secrets = Array2::zeros((l, k));
    let mut observations = Tensor2D::zeros((l, cfg.n));
    let mut at = 0;
    for (bits, z) in parts {
        let r = bits.nrows();
        secrets.slice_mut(s![at..at + r, ..]).assign(&bits);
        observations.slice_mut(s![at..at + r, ..]).assign(&z);
        at += r;
    }
    SampleSet::new(secrets, observations)
}
