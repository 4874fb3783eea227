//! Gaussian multi-user channels to the legitimate receiver and the eavesdropper:
//!
//! `Y = Σ_l sqrt(h_l) X_l + N_Y`,  `Z = Σ_l sqrt(g_l) X_l + N_Z`.
//!
//! Gains are stored as power gains and enter as amplitudes `sqrt(h)`.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::nn::Tensor2D;
use crate::rng::fill_standard_normal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Per-user gains to the legitimate receiver.
    pub h: Vec<f64>,
    /// Per-user gains to the eavesdropper.
    pub g: Vec<f64>,
    #[serde(rename = "sigma2_Y")]
    pub sigma2_y: f64,
    #[serde(rename = "sigma2_Z")]
    pub sigma2_z: f64,
    /// Test hook: both outputs are noiseless.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub noise_disabled: bool,
}

impl ChannelParams {
    pub fn new(h: Vec<f64>, g: Vec<f64>, sigma2_y: f64, sigma2_z: f64) -> Result<Self> {
        let p = ChannelParams { h, g, sigma2_y, sigma2_z, noise_disabled: false };
        p.validate()?;
        Ok(p)
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_disabled = true;
        self
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.len() != self.g.len() {
            return Err(usage!("h has {} entries but g has {}", self.h.len(), self.g.len()));
        }
        if let Some(bad) = self.h.iter().chain(&self.g).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(usage!("channel gains must be finite and non-negative, got {bad}"));
        }
        for (name, v) in [("sigma2_Y", self.sigma2_y), ("sigma2_Z", self.sigma2_z)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(usage!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// `rows x cols` i.i.d. N(0, variance) values in row-major generation order.
pub fn noise_matrix<R: Rng + ?Sized>(rng: &mut R, variance: f64, rows: usize, cols: usize) -> Result<Tensor2D> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(usage!("noise variance must be positive, got {variance}"));
    }
    let mut out = Array2::zeros((rows, cols));
    fill_standard_normal(rng, out.as_slice_mut().expect("standard layout"));
    out *= variance.sqrt();
    Ok(out)
}

pub fn noise_sample<R: Rng + ?Sized>(rng: &mut R, variance: f64, n: usize) -> Result<Array1<f64>> {
    Ok(noise_matrix(rng, variance, 1, n)?.into_shape_with_order(n).expect("single row"))
}

/// Noise-free superposition `Σ sqrt(gain_l) X_l`.
pub fn superpose(codewords: &[&Tensor2D], gains: &[f64]) -> Result<Tensor2D> {
    if codewords.len() != gains.len() {
        return Err(usage!("{} codeword sets for {} users", codewords.len(), gains.len()));
    }
    let Some(first) = codewords.first() else {
        return Err(usage!("no codewords to transmit"));
    };
    let dim = first.dim();
    let mut out = Array2::zeros(dim);
    for (x, &gain) in codewords.iter().zip(gains) {
        if x.dim() != dim {
            return Err(usage!("codeword block shape {:?} differs from {:?}", x.dim(), dim));
        }
        out.scaled_add(gain.sqrt(), *x);
    }
    Ok(out)
}

fn transmit<R: Rng + ?Sized>(
    codewords: &[&Tensor2D],
    gains: &[f64],
    variance: f64,
    noise_disabled: bool,
    rng: &mut R,
) -> Result<Tensor2D> {
    let mut y = superpose(codewords, gains)?;
    if !noise_disabled {
        y += &noise_matrix(rng, variance, y.nrows(), y.ncols())?;
    }
    Ok(y)
}

/// Output at the legitimate receiver; one row per channel block of `n` uses.
pub fn transmit_main<R: Rng + ?Sized>(codewords: &[&Tensor2D], params: &ChannelParams, rng: &mut R) -> Result<Tensor2D> {
    transmit(codewords, &params.h, params.sigma2_y, params.noise_disabled, rng)
}

/// Output at the eavesdropper.
pub fn transmit_eve<R: Rng + ?Sized>(codewords: &[&Tensor2D], params: &ChannelParams, rng: &mut R) -> Result<Tensor2D> {
    transmit(codewords, &params.g, params.sigma2_z, params.noise_disabled, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStreams};
    use ndarray::array;

    fn rng(i: u64) -> crate::rng::SimRng {
        RngStreams::new(99).stream(Purpose::EvalNoise, i)
    }

    fn params(h: Vec<f64>, g: Vec<f64>) -> ChannelParams {
        ChannelParams::new(h, g, 1.0, 1.0).unwrap()
    }

    #[test]
    fn noiseless_superposition() {
        let p = params(vec![1.0, 1.0], vec![1.0, 0.25]).noiseless();
        let y = transmit_main(&[&array![[1.0, 0.0]], &array![[0.0, 1.0]]], &p, &mut rng(0)).unwrap();
        assert_eq!(y, array![[1.0, 1.0]]);
        let p = params(vec![4.0, 1.0], vec![1.0, 0.25]).noiseless();
        let y = transmit_main(&[&array![[1.0, 0.0]], &array![[0.0, 0.0]]], &p, &mut rng(0)).unwrap();
        assert_eq!(y, array![[2.0, 0.0]]);
        let z = transmit_eve(&[&array![[2.0]], &array![[4.0]]], &p, &mut rng(0)).unwrap();
        assert_eq!(z, array![[4.0]]);
    }

    #[test]
    fn residual_variance_matches() {
        let mut p = params(vec![1.0, 2.0], vec![0.0, 0.0]);
        p.sigma2_y = 2.5;
        let x1 = Array2::from_elem((100_000, 10), 0.7);
        let x2 = Array2::from_elem((100_000, 10), -0.2);
        let y = transmit_main(&[&x1, &x2], &p, &mut rng(1)).unwrap();
        let resid = &y - &superpose(&[&x1, &x2], &p.h).unwrap();
        let n = resid.len() as f64;
        let mean = resid.sum() / n;
        let var = resid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 2.5).abs() / 2.5 < 0.01, "{var}");
    }

    #[test]
    fn zero_gain_eve_sees_pure_noise() {
        let p = params(vec![1.0], vec![0.0]);
        let x = Array2::from_elem((200_000, 5), 3.0);
        let z = transmit_eve(&[&x], &p, &mut rng(2)).unwrap();
        let n = z.len() as f64;
        assert!((z.sum() / n).abs() < 3.0 / n.sqrt());
    }

    #[test]
    fn deterministic_given_seed() {
        let p = params(vec![1.0], vec![0.3]);
        let x = Array2::from_elem((4, 6), 1.0);
        assert_eq!(transmit_eve(&[&x], &p, &mut rng(3)).unwrap(), transmit_eve(&[&x], &p, &mut rng(3)).unwrap());
    }

    #[test]
    fn noise_statistics() {
        let v = noise_sample(&mut rng(4), 1.0, 1_000_000).unwrap();
        let mean = v.sum() / 1e6;
        assert!(mean.abs() < 0.004, "{mean}");
        let v = noise_sample(&mut rng(5), 4.0, 1_000_000).unwrap();
        let mean = v.sum() / 1e6;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (1e6 - 1.0);
        assert!((var - 4.0).abs() / 4.0 < 0.01, "{var}");
        assert_eq!(noise_sample(&mut rng(6), 1.0, 7).unwrap(), noise_sample(&mut rng(6), 1.0, 7).unwrap());
        assert!(noise_sample(&mut rng(6), 0.0, 7).is_err());
        assert!(noise_sample(&mut rng(6), -1.0, 7).is_err());
    }

    #[test]
    fn mismatches_rejected() {
        let p = params(vec![1.0, 1.0], vec![1.0, 1.0]);
        assert!(transmit_main(&[&array![[1.0]]], &p, &mut rng(0)).is_err());
        assert!(transmit_main(&[&array![[1.0]], &array![[1.0, 2.0]]], &p, &mut rng(0)).is_err());
        assert!(ChannelParams::new(vec![1.0], vec![-1.0], 1.0, 1.0).is_err());
        assert!(ChannelParams::new(vec![1.0], vec![1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn linearity_and_no_mutation() {
        let p = params(vec![1.0, 9.0], vec![1.0, 1.0]).noiseless();
        let a = array![[1.0, 2.0]];
        let b = array![[0.5, -1.0]];
        let (a0, b0) = (a.clone(), b.clone());
        let y = transmit_main(&[&a, &b], &p, &mut rng(0)).unwrap();
        assert_eq!(y, &a + &(&b * 3.0));
        assert_eq!((a, b), (a0, b0));
    }

    #[test]
    fn empirical_snr_per_user() {
        // unit-power codewords with |x|^2 = nP exactly
        let n = 8;
        let power = 2.0;
        let rows = 50_000;
        let mut r = rng(7);
        let mut x = noise_matrix(&mut r, 1.0, rows, n).unwrap();
        x = crate::nn::power_normalize_rows(&x, power).unwrap();
        let p = ChannelParams::new(vec![3.0], vec![0.0], 1.5, 1.0).unwrap();
        let y = transmit_main(&[&x], &p, &mut r).unwrap();
        let noise = &y - &(&x * 3f64.sqrt());
        let signal_power = (&x * 3f64.sqrt()).mapv(|v| v * v).sum() / (rows * n) as f64;
        let noise_power = noise.mapv(|v| v * v).sum() / (rows * n) as f64;
        let snr = signal_power / noise_power;
        let want = 3.0 * power / 1.5;
        assert!((snr - want).abs() / want < 0.01, "{snr}");
    }
}
