use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::samples::SampleSet;
use super::{prepare, MiEstimate};
use crate::error::{usage, Error, Result};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, MlpModel, Tensor2D};

/// Smallest conditional variance the model may use.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const ROW_BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClubConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
}

impl ClubConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(usage!("CLUB needs positive steps and batch size"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(usage!("CLUB learning rate must be positive"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(usage!("holdout fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Diagonal Gaussian model `q(z | s) = N(mu(s), diag(exp(logvar(s))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClubModel {
    pub mu: MlpModel,
    pub logvar: MlpModel,
    /// Times a predicted variance was raised to [`VARIANCE_FLOOR`].
    pub floor_hits: usize,
}

impl ClubModel {
    pub fn new<R: Rng + ?Sized>(k: usize, n: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(ClubModel {
            mu: MlpModel::dense(k, hidden, n, Activation::Linear, rng)?,
            logvar: MlpModel::dense(k, hidden, n, Activation::Linear, rng)?,
            floor_hits: 0,
        })
    }

    /// Mean and floored variance for each secret row.
    pub fn predict(&mut self, s: &Tensor2D) -> Result<(Tensor2D, Tensor2D)> {
        let mu = self.mu.infer(s)?;
        let floor = VARIANCE_FLOOR.ln();
        let mut hits = 0;
        let var = self.logvar.infer(s)?.mapv(|lv| {
            if lv < floor {
                hits += 1;
            }
            lv.max(floor).exp()
        });
        self.note_floor(hits);
        Ok((mu, var))
    }

    fn note_floor(&mut self, hits: usize) {
        if hits > 0 {
            self.floor_hits += hits;
            log::warn!("CLUB variance floored at {VARIANCE_FLOOR:e} for {hits} entries");
        }
    }

    /// One maximum-likelihood step on a minibatch; returns the mean negative
    /// log-likelihood (without the constant).
    fn train_step(&mut self, s: &Tensor2D, z: &Tensor2D, mu_opt: &mut AdamState, lv_opt: &mut AdamState) -> Result<f64> {
        let (mu, mu_cache) = self.mu.forward(s)?;
        let (lv, lv_cache) = self.logvar.forward(s)?;
        let b = s.nrows() as f64;
        let floor = VARIANCE_FLOOR.ln();
        let mut g_mu = Tensor2D::zeros(mu.dim());
        let mut g_lv = Tensor2D::zeros(lv.dim());
        let mut nll = 0.0;
        let mut hits = 0;
        for ((i, d), &m) in mu.indexed_iter() {
            let raw = lv[[i, d]];
            let clamped = raw < floor;
            hits += clamped as usize;
            let l = raw.max(floor);
            let inv = (-l).exp();
            let r = z[[i, d]] - m;
            nll += 0.5 * (r * r * inv + l);
            g_mu[[i, d]] = -r * inv / b;
            g_lv[[i, d]] = if clamped { 0.0 } else { 0.5 * (1.0 - r * r * inv) / b };
        }
        self.note_floor(hits);
        let (gm, _) = self.mu.backward(&mu_cache, &g_mu)?;
        let (gl, _) = self.logvar.backward(&lv_cache, &g_lv)?;
        adam_step(&mut self.mu, &gm, mu_opt)?;
        adam_step(&mut self.logvar, &gl, lv_opt)?;
        Ok(nll / b)
    }
}

fn log_density(z: ndarray::ArrayView1<f64>, mu: ndarray::ArrayView1<f64>, var: ndarray::ArrayView1<f64>) -> f64 {
    let mut acc = 0.0;
    for d in 0..z.len() {
        let r = z[d] - mu[d];
        acc += r * r / var[d] + var[d].ln() + (2.0 * PI).ln();
    }
    -0.5 * acc
}

/// Per-row contrast `ln q(z_i|s_i) - (1/m) Σ_j ln q(z_j|s_i)`; its mean is
/// the contrastive log-ratio bound. Row blocks are reduced in a fixed order.
pub fn club_terms(mu: &Tensor2D, var: &Tensor2D, z: &Tensor2D) -> Vec<f64> {
    let m = z.nrows();
    let rows: Vec<usize> = (0..m).collect();
    rows.par_chunks(ROW_BLOCK)
        .map(|block| {
            block
                .iter()
                .map(|&i| {
                    let pos = log_density(z.row(i), mu.row(i), var.row(i));
                    let neg: f64 = (0..m).map(|j| log_density(z.row(j), mu.row(i), var.row(i))).sum::<f64>() / m as f64;
                    pos - neg
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

pub fn club_estimate<R: Rng + ?Sized>(samples: &SampleSet, cfg: &ClubConfig, rng: &mut R) -> Result<MiEstimate> {
    cfg.validate()?;
    let data = prepare(samples, cfg.holdout_fraction, rng)?;
    let batch = cfg.batch_size.min(data.train.len());
    let mut model = ClubModel::new(data.s.ncols(), data.z.ncols(), &cfg.hidden, rng)?;
    let adam = AdamConfig::new(cfg.learning_rate);
    let mut mu_opt = AdamState::new(&model.mu, adam);
    let mut lv_opt = AdamState::new(&model.logvar, adam);
    let mut order = data.train.clone();
    let mut cursor = order.len();
    for step in 0..cfg.steps {
        if cursor + batch > order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let rows = &order[cursor..cursor + batch];
        cursor += batch;
        let s = data.s.select(ndarray::Axis(0), rows);
        let z = data.z.select(ndarray::Axis(0), rows);
        let nll = model.train_step(&s, &z, &mut mu_opt, &mut lv_opt).map_err(|e| match e {
            Error::Training { reason, .. } => Error::Training { epoch: step, reason },
            other => other,
        })?;
        if !nll.is_finite() {
            return Err(Error::Training { epoch: step, reason: format!("CLUB likelihood became {nll}") });
        }
    }
    let s = data.s.select(ndarray::Axis(0), &data.eval);
    let z = data.z.select(ndarray::Axis(0), &data.eval);
    let (mu, var) = model.predict(&s)?;
    let terms = club_terms(&mu, &var, &z);
    let raw = terms.iter().sum::<f64>() / terms.len() as f64;
    if !raw.is_finite() {
        return Err(Error::Training { epoch: cfg.steps, reason: "CLUB bound is not finite".into() });
    }
    Ok(MiEstimate::from_window(raw, &terms, samples.len(), model.floor_hits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_standard_normal, Purpose, RngStreams};

    #[test]
    fn double_sum_matches_moment_identity() {
        // Σ_j (z_j - μ)^2 = Σ z_j^2 - 2 μ Σ z_j + m μ^2 per coordinate.
        let mut rng = RngStreams::new(1).stream(Purpose::Estimator, 0);
        let (m, n) = (150, 3);
        let mut buf = vec![0.0; m * n * 3];
        fill_standard_normal(&mut rng, &mut buf);
        let z = Tensor2D::from_shape_vec((m, n), buf[..m * n].to_vec()).unwrap();
        let mu = Tensor2D::from_shape_vec((m, n), buf[m * n..2 * m * n].to_vec()).unwrap();
        let var = Tensor2D::from_shape_vec((m, n), buf[2 * m * n..].to_vec()).unwrap().mapv(|v| 0.5 + v * v);
        let terms = club_terms(&mu, &var, &z);
        let sum1 = z.sum_axis(ndarray::Axis(0));
        let sum2 = z.mapv(|v| v * v).sum_axis(ndarray::Axis(0));
        for i in 0..m {
            let pos = log_density(z.row(i), mu.row(i), var.row(i));
            let mut neg = 0.0;
            for d in 0..n {
                let (u, v) = (mu[[i, d]], var[[i, d]]);
                let ss = sum2[d] - 2.0 * u * sum1[d] + m as f64 * u * u;
                neg += -0.5 * (ss / v / m as f64 + v.ln() + (2.0 * PI).ln());
            }
            assert!((terms[i] - (pos - neg)).abs() < 1e-9);
        }
    }

    #[test]
    fn variance_floor_counts() {
        let mut rng = RngStreams::new(2).stream(Purpose::Estimator, 0);
        let mut model = ClubModel::new(1, 2, &[4], &mut rng).unwrap();
        for l in model.logvar.layers_mut() {
            l.weights.fill(0.0);
            l.bias.fill(-40.0);
        }
        let (_, var) = model.predict(&Tensor2D::ones((3, 1))).unwrap();
        assert!(var.iter().all(|&v| (v - VARIANCE_FLOOR).abs() < 1e-18));
        assert_eq!(model.floor_hits, 6);
    }

    #[test]
    fn gaussian_shift_is_learned() {
        // z = 2 s + N(0,1), s = ±1 uniform: the contrastive bound is loose but finite.
        let mut rng = RngStreams::new(3).stream(Purpose::Estimator, 1);
        let l = 3000;
        let vals: Vec<u32> = (0..l).map(|_| rng.random_range(0..2)).collect();
        let mut noise = vec![0.0; l];
        fill_standard_normal(&mut rng, &mut noise);
        let z = Tensor2D::from_shape_fn((l, 1), |(r, _)| 2.0 * (2.0 * vals[r] as f64 - 1.0) + noise[r]);
        let set = SampleSet::from_values(&vals, 1, z).unwrap();
        let cfg = ClubConfig { hidden: vec![16], steps: 400, batch_size: 200, learning_rate: 5e-3, holdout_fraction: 0.2 };
        let est = club_estimate(&set, &cfg, &mut rng).unwrap();
        // Exact Gaussian family: bound = E[(z - mu_s)^2]/2 over independent pairs - 1/2 = 4.
        assert!((est.raw - 4.0).abs() < 0.4, "{est:?}");
        assert_eq!(est.floor_hits, 0);
    }
}
