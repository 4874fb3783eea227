use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::samples::SampleSet;
use super::{median, prepare, MiEstimate};
use crate::error::{usage, Error, Result};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, MlpModel, Tensor2D};

/// Statistics-network estimator of the Donsker–Varadhan lower bound
/// `E_joint[T] - ln E_marginal[e^T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub hidden: Vec<usize>,
    /// Optimizer steps, one minibatch each.
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decay of the moving average that replaces the minibatch denominator
    /// in the gradient.
    pub ema_decay: f64,
    /// Number of final held-out evaluations whose median is reported.
    pub window: usize,
    pub holdout_fraction: f64,
}

impl MineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size < 2 || self.window == 0 {
            return Err(usage!("MINE needs positive steps and window and a batch of at least 2"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.ema_decay) {
            return Err(usage!("invalid MINE learning rate or moving-average decay"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(usage!("holdout fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

fn paired(s: &Tensor2D, z: &Tensor2D, rows: &[usize], z_rows: &[usize]) -> Tensor2D {
    let k = s.ncols();
    let mut x = Tensor2D::zeros((rows.len(), k + z.ncols()));
    for (r, (&i, &j)) in rows.iter().zip(z_rows).enumerate() {
        x.row_mut(r).slice_mut(ndarray::s![..k]).assign(&s.row(i));
        x.row_mut(r).slice_mut(ndarray::s![k..]).assign(&z.row(j));
    }
    x
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

fn column(t: &Tensor2D) -> Vec<f64> {
    t.column(0).to_vec()
}

pub fn mine_estimate<R: Rng + ?Sized>(samples: &SampleSet, cfg: &MineConfig, rng: &mut R) -> Result<MiEstimate> {
    cfg.validate()?;
    let data = prepare(samples, cfg.holdout_fraction, rng)?;
    let batch = cfg.batch_size.min(data.train.len());
    let k = data.s.ncols();
    let mut net = MlpModel::dense(k + data.z.ncols(), &cfg.hidden, 1, Activation::Linear, rng)?;
    let mut opt = AdamState::new(&net, AdamConfig::new(cfg.learning_rate));
    let window = cfg.window.min(cfg.steps);
    let mut evals = Vec::with_capacity(window);
    let mut order = data.train.clone();
    let mut cursor = order.len();
    let mut ema: Option<f64> = None;

    for step in 0..cfg.steps {
        if cursor + batch > order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let rows = &order[cursor..cursor + batch];
        cursor += batch;
        let mut shuffled = rows.to_vec();
        shuffled.shuffle(rng);
        let joint = paired(&data.s, &data.z, rows, rows);
        let marg = paired(&data.s, &data.z, rows, &shuffled);
        let input = ndarray::concatenate(ndarray::Axis(0), &[joint.view(), marg.view()]).expect("same width");
        let (t, cache) = net.forward(&input)?;
        let t = column(&t);
        let exp_marg: Vec<f64> = t[batch..].iter().map(|v| v.exp()).collect();
        let mean_exp = exp_marg.iter().sum::<f64>() / batch as f64;
        let avg = match ema {
            Some(m) => cfg.ema_decay * m + (1.0 - cfg.ema_decay) * mean_exp,
            None => mean_exp,
        };
        ema = Some(avg);
        if !avg.is_finite() || t.iter().any(|v| !v.is_finite()) || avg == 0.0 {
            return Err(Error::Training {
                epoch: step,
                reason: format!("MINE statistics diverged (moving average {avg})"),
            });
        }
        let b = batch as f64;
        let mut grad = Tensor2D::zeros((2 * batch, 1));
        for r in 0..batch {
            grad[[r, 0]] = -1.0 / b;
            grad[[batch + r, 0]] = exp_marg[r] / (b * avg);
        }
        let (g, _) = net.backward(&cache, &grad)?;
        adam_step(&mut net, &g, &mut opt).map_err(|e| match e {
            Error::Training { reason, .. } => Error::Training { epoch: step, reason },
            other => other,
        })?;

        if step + window >= cfg.steps {
            let mut perm = data.eval.clone();
            perm.shuffle(rng);
            let tj = column(&net.infer(&paired(&data.s, &data.z, &data.eval, &data.eval))?);
            let tm = column(&net.infer(&paired(&data.s, &data.z, &data.eval, &perm))?);
            let dv = tj.iter().sum::<f64>() / tj.len() as f64 - log_mean_exp(&tm);
            if !dv.is_finite() {
                return Err(Error::Training { epoch: step, reason: "MINE held-out bound is not finite".into() });
            }
            evals.push(dv);
        }
    }
    Ok(MiEstimate::from_window(median(&evals), &evals, samples.len(), 0))
}
