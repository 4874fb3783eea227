//! End-to-end behaviour of training, evaluation and leakage estimation on
//! small codes.

use wiretap_core::channel::ChannelParams;
use wiretap_core::evaluation::{estimate_error_rates, evaluate, EvalSettings};
use wiretap_core::leakage::{Estimator, EstimatorPreset, PresetName};
use wiretap_core::reliability::{
    baseline_time_sharing, train, Algorithm, CodeConfig, CodeSystem, CodecSet, TrainConfig, UserSpec,
};
use wiretap_core::rng::RngStreams;

fn tiny(seed: u64, noiseless: bool, g_tx: f64) -> CodeConfig {
    let users = vec![UserSpec::transmitter(3, 1, 2.0), UserSpec::helper(3, 6.0)];
    let mut ch = ChannelParams::new(vec![1.0, 1.0], vec![g_tx, 0.5], 1.0, 1.0).unwrap();
    if noiseless {
        ch = ch.noiseless();
    }
    let mut t = TrainConfig::new(20, 200, 3e-3, 4000, seed);
    t.hidden_width = Some(32);
    CodeConfig::new(6, users, ch, t).unwrap()
}

fn leakage(set: &dyn CodeSystem, est: Estimator, seed: u64) -> f64 {
    let settings = EvalSettings { trials: 0, estimators: vec![est], preset: EstimatorPreset::named(PresetName::Smoke), leakage_samples: None };
    evaluate(set, None, &settings, &RngStreams::new(seed)).unwrap().leakage[0].estimate.value
}

#[test]
fn noiseless_codes_are_learned_for_several_seeds() {
    for seed in [1, 2, 3] {
        for algo in [Algorithm::Sic, Algorithm::Ptp] {
            let cfg = tiny(seed, true, 1.0);
            let set = train(&cfg, algo).unwrap();
            let r = estimate_error_rates(&set, &cfg.security_layer().unwrap(), 20_000, &RngStreams::new(seed)).unwrap();
            for u in &r.users {
                assert!(u.message.value <= 1e-3, "seed {seed} {algo}: {} message error {}", u.label, u.message.value);
            }
            assert!(r.joint.value <= 1e-3, "seed {seed} {algo}: joint error {}", r.joint.value);
        }
    }
}

#[test]
fn training_and_evaluation_are_reproducible() {
    let cfg = tiny(9, false, 1.0);
    let a = train(&cfg, Algorithm::Sic).unwrap();
    let b = train(&cfg, Algorithm::Sic).unwrap();
    assert_eq!(a, b);
    let sec = cfg.security_layer().unwrap();
    let ra = estimate_error_rates(&a, &sec, 5000, &RngStreams::new(4)).unwrap();
    let rb = estimate_error_rates(&b, &sec, 5000, &RngStreams::new(4)).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn secret_hidden_from_eve_leaks_nothing() {
    let set = train(&tiny(5, false, 0.0), Algorithm::Ptp).unwrap();
    for est in [Estimator::Mine, Estimator::Club] {
        let v = leakage(&set, est, 17);
        assert!(v < 0.1, "{est} leakage {v} with g = 0");
    }
}

#[test]
fn club_leakage_falls_with_eve_noise() {
    let base: CodecSet = train(&tiny(6, false, 1.0), Algorithm::Ptp).unwrap();
    let mut prev = f64::INFINITY;
    for s2 in [0.25, 1.0, 4.0, 16.0] {
        let mut set = base.clone();
        set.config.channel.sigma2_z = s2;
        let v = leakage(&set, Estimator::Club, 21);
        assert!(v <= prev + 0.02, "CLUB leakage rose from {prev} to {v} at sigma2_Z = {s2}");
        prev = v;
    }
}

#[test]
fn sic_is_competitive_with_time_sharing() {
    let users = vec![UserSpec::transmitter(2, 1, 2.0), UserSpec::helper(2, 2.0)];
    let ch = ChannelParams::new(vec![1.0, 1.0], vec![1.0, 1.0], 6.0, 1.0).unwrap();
    let cfg = CodeConfig::new(8, users, ch, TrainConfig::new(15, 500, 1e-3, 20_000, 7)).unwrap();
    let streams = RngStreams::new(31);
    let trials = 50_000;
    let sic = train(&cfg, Algorithm::Sic).unwrap();
    let p_sic = estimate_error_rates(&sic, &cfg.security_layer().unwrap(), trials, &streams).unwrap().joint.value;
    let ts = baseline_time_sharing(&cfg, &[0.25, 0.5, 0.75], trials, &streams).unwrap();
    let p_ts = ts.best_point().joint_error;
    assert!(p_sic <= 2.0 * p_ts, "SIC joint error {p_sic} vs time sharing {p_ts}");
}
