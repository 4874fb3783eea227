//! Reproducible random streams.
//!
//! Every experiment is driven by one master seed. A purpose-specific stream
//! is a ChaCha20 generator keyed by `seed_from_u64(master)` with stream id
//! `(purpose << 48) | index`, so streams never overlap and do not depend on
//! the order in which they are requested or on the number of worker threads.
//!
//! Gaussian variates use the Box–Muller transform; both outputs of each
//! pair are consumed in order.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    WeightInit = 1,
    TrainMessages = 2,
    TrainNoise = 3,
    EvalMessages = 4,
    EvalNoise = 5,
    LeakageMessages = 6,
    LeakageNoise = 7,
    Estimator = 8,
    SeedSelection = 9,
    Baseline = 10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master: u64,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        RngStreams { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, purpose: Purpose, index: u64) -> SimRng {
        assert!(index < 1 << 48, "stream index {index} too large");
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream(((purpose as u64) << 48) | index);
        rng
    }

    /// Independent family for a sub-experiment (e.g. one sweep point).
    pub fn child(&self, index: u64) -> RngStreams {
        RngStreams { master: splitmix64(self.master ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))) }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fills `out` with i.i.d. standard normal values.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = box_muller(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = box_muller(rng).0;
    }
}

fn box_muller<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    // u1 in (0, 1] keeps the log finite
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    (r * c, r * s)
}
