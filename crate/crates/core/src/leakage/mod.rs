//! Neural estimates of the leakage `I(S; Z^n)`: a Donsker–Varadhan lower
//! bound (MINE) and a contrastive log-ratio upper bound (CLUB).

mod club;
mod mine;
mod samples;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use club::{club_estimate, club_terms, ClubConfig, ClubModel, VARIANCE_FLOOR};
pub use mine::{mine_estimate, MineConfig};
pub use samples::{collect_samples, SampleSet};

use crate::error::{usage, Result};
use crate::nn::Tensor2D;
use crate::rng::{Purpose, RngStreams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Mine,
    Club,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Mine => "mine",
            Estimator::Club => "club",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A leakage estimate in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Estimator output before clamping; may be negative.
    pub raw: f64,
    /// `max(0, raw)`.
    pub value: f64,
    /// `1.96 sd / sqrt(count)` over the terms the estimate aggregates.
    pub ci_halfwidth: f64,
    pub samples: usize,
    pub floor_hits: usize,
}

impl MiEstimate {
    fn from_window(raw: f64, terms: &[f64], samples: usize, floor_hits: usize) -> MiEstimate {
        let m = terms.len() as f64;
        let ci = if terms.len() < 2 {
            0.0
        } else {
            let mean = terms.iter().sum::<f64>() / m;
            let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0);
            1.96 * (var / m).sqrt()
        };
        MiEstimate { raw, value: raw.max(0.0), ci_halfwidth: ci, samples, floor_hits }
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Features shared by both estimators: secrets as `±1`, observations
/// standardized per coordinate with training-split statistics, and a random
/// train/held-out split.
pub(crate) struct Prepared {
    pub s: Tensor2D,
    pub z: Tensor2D,
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

pub(crate) fn prepare<R: Rng + ?Sized>(samples: &SampleSet, holdout: f64, rng: &mut R) -> Result<Prepared> {
    let l = samples.len();
    if samples.secret_bits() == 0 || samples.blocklength() == 0 {
        return Err(usage!("samples need at least one secret bit and one observation coordinate"));
    }
    let n_eval = ((l as f64) * holdout).ceil() as usize;
    if n_eval < 2 || l - n_eval < 2 {
        return Err(usage!("{l} samples are too few for a {holdout} held-out split"));
    }
    let mut idx: Vec<usize> = (0..l).collect();
    idx.shuffle(rng);
    let eval = idx.split_off(l - n_eval);
    let train = idx;
    let z_train = samples.observations.select(ndarray::Axis(0), &train);
    let mean = z_train.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let sd = z_train.std_axis(ndarray::Axis(0), 0.0).mapv(|v| if v > 1e-12 { v } else { 1.0 });
    let z = (&samples.observations - &mean) / &sd;
    Ok(Prepared { s: samples.secret_features(), z, train, eval })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    /// Tiny networks for tests.
    Smoke,
    /// Runs in minutes on one core.
    Desk,
    /// Full network sizes and training lengths.
    Full,
}

impl std::fmt::Display for PresetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PresetName::Smoke => "smoke",
            PresetName::Desk => "desk",
            PresetName::Full => "full",
        })
    }
}

impl std::str::FromStr for PresetName {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(PresetName::Smoke),
            "desk" => Ok(PresetName::Desk),
            "full" => Ok(PresetName::Full),
            _ => Err(usage!("unknown estimator preset {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorPreset {
    pub name: PresetName,
    pub mine_samples: usize,
    pub club_samples: usize,
    pub mine: MineConfig,
    pub club: ClubConfig,
}

impl EstimatorPreset {
    pub fn named(name: PresetName) -> EstimatorPreset {
        match name {
            PresetName::Smoke => EstimatorPreset {
                name,
                mine_samples: 2000,
                club_samples: 2000,
                mine: MineConfig {
                    hidden: vec![32, 32],
                    steps: 200,
                    batch_size: 200,
                    learning_rate: 3e-3,
                    ema_decay: 0.99,
                    window: 20,
                    holdout_fraction: 0.2,
                },
                club: ClubConfig { hidden: vec![32, 32], steps: 200, batch_size: 200, learning_rate: 3e-3, holdout_fraction: 0.2 },
            },
            PresetName::Desk => EstimatorPreset {
                name,
                mine_samples: 20_000,
                club_samples: 20_000,
                mine: MineConfig {
                    hidden: vec![128, 128],
                    steps: 2000,
                    batch_size: 500,
                    learning_rate: 1e-3,
                    ema_decay: 0.99,
                    window: 50,
                    holdout_fraction: 0.2,
                },
                club: ClubConfig { hidden: vec![128, 128], steps: 2000, batch_size: 500, learning_rate: 1e-3, holdout_fraction: 0.2 },
            },
            PresetName::Full => EstimatorPreset {
                name,
                mine_samples: 20_000,
                club_samples: 4000,
                mine: MineConfig {
                    hidden: vec![400; 4],
                    steps: 100_000,
                    batch_size: 2500,
                    learning_rate: 1e-4,
                    ema_decay: 0.99,
                    window: 50,
                    holdout_fraction: 0.2,
                },
                club: ClubConfig { hidden: vec![400; 3], steps: 500_000, batch_size: 2000, learning_rate: 8e-4, holdout_fraction: 0.2 },
            },
        }
    }

    pub fn samples(&self, estimator: Estimator) -> usize {
        match estimator {
            Estimator::Mine => self.mine_samples,
            Estimator::Club => self.club_samples,
        }
    }
}

/// Runs one estimator with its own RNG sub-stream.
pub fn estimate(samples: &SampleSet, estimator: Estimator, preset: &EstimatorPreset, streams: &RngStreams) -> Result<MiEstimate> {
    let mut rng = streams.stream(Purpose::Estimator, estimator as u64);
    match estimator {
        Estimator::Mine => mine_estimate(samples, &preset.mine, &mut rng),
        Estimator::Club => club_estimate(samples, &preset.club, &mut rng),
    }
}
