use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use wiretap_core::evaluation::{
    achievability_report, estimate_error_rates, evaluate, sweep_rows, write_csv, CsvRow, EvalReport, EvalSettings, SweepAxis,
};
use wiretap_core::io::{load_codecs, save_codecs, to_json, ExperimentConfig, Manifest};
use wiretap_core::leakage::{Estimator, EstimatorPreset};
use wiretap_core::reliability::{baseline_joint_decoding, baseline_time_sharing, train_with_history, Algorithm, CodeConfig};
use wiretap_core::rng::RngStreams;
use wiretap_core::Error;

use crate::EstimatorArg;

const EVAL_REPORT: &str = "eval.json";
const LEAKAGE_REPORT: &str = "leakage.json";

fn estimators(arg: EstimatorArg) -> Vec<Estimator> {
    match arg {
        EstimatorArg::Mine => vec![Estimator::Mine],
        EstimatorArg::Club => vec![Estimator::Club],
        EstimatorArg::Both => vec![Estimator::Mine, Estimator::Club],
    }
}

fn load_experiment(path: &Path) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Usage(format!("cannot read {}: {io}", path.display())),
        other => other,
    })
    .map_err(Into::into)
}

fn load_manifest(path: &Path) -> anyhow::Result<(Manifest, wiretap_core::reliability::CodecSet)> {
    load_codecs(path)
        .map_err(|e| match e {
            Error::Io(io) => Error::Usage(format!("cannot read {}: {io}", path.display())),
            other => other,
        })
        .map_err(Into::into)
}

fn write_rows(path: &Path, rows: &[CsvRow]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(file, rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, to_json(value)?).with_context(|| format!("writing {}", path.display()))
}

fn manifest_dir(manifest: &Path, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

pub fn train(config: &Path, algorithm: Algorithm, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut experiment = load_experiment(config)?;
    if let Some(s) = seed {
        experiment.code.train.seed = s;
    }
    let dir = out.or_else(|| experiment.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let start = Instant::now();
    let (set, history) = train_with_history(&experiment.code, algorithm)?;
    let seconds = start.elapsed().as_secs_f64();
    let manifest = save_codecs(&dir, &experiment, &set)?;
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "algorithm": algorithm.to_string(), "training_seconds": seconds, "final_loss": history.epoch_losses.last() }),
    )?;
    println!("trained {} users with {algorithm} in {seconds:.2} s", set.pairs.len());
    println!("wrote {}", manifest.display());
    Ok(())
}

/// Writes the achievability tuple once both error rates and leakage exist
/// for the same code.
fn maybe_achievability(dir: &Path) -> anyhow::Result<()> {
    let (Ok(e), Ok(l)) = (fs::read(dir.join(EVAL_REPORT)), fs::read(dir.join(LEAKAGE_REPORT))) else {
        return Ok(());
    };
    let eval: EvalReport = serde_json::from_slice(&e)?;
    let leak: EvalReport = serde_json::from_slice(&l)?;
    if eval.config_hash != leak.config_hash {
        log::warn!("eval and leakage reports belong to different codes; skipping achievability");
        return Ok(());
    }
    let merged = EvalReport { leakage: leak.leakage, ..eval };
    let estimator = if merged.leakage_for(Estimator::Mine).is_some() { Estimator::Mine } else { Estimator::Club };
    let tuple = achievability_report(&merged, estimator)?;
    let path = dir.join("achievability.json");
    write_json(&path, &tuple)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn master(manifest: &Manifest, seed: Option<u64>) -> RngStreams {
    RngStreams::new(seed.unwrap_or(manifest.experiment.seed))
}

pub fn eval(config: &Path, trials: usize, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<()> {
    if trials == 0 {
        return Err(Error::Usage("--trials must be positive".into()).into());
    }
    let (manifest, set) = load_manifest(config)?;
    let dir = manifest_dir(config, out);
    let start = Instant::now();
    let security = set.config.security_layer()?;
    let mut report = EvalReport::new(&set.config, Some(set.algorithm));
    report.rates = Some(estimate_error_rates(&set, &security, trials, &master(&manifest, seed))?);
    report.runtime_secs = start.elapsed().as_secs_f64();
    for u in &report.rates.as_ref().unwrap().users {
        match &u.secret {
            Some(s) => println!("{}: P_e(secret) = {:.3e} ± {:.1e}, P_e(message) = {:.3e}", u.label, s.value, s.ci_halfwidth, u.message.value),
            None => println!("{}: P_e(message) = {:.3e} ± {:.1e}", u.label, u.message.value, u.message.ci_halfwidth),
        }
    }
    fs::create_dir_all(&dir)?;
    write_rows(&dir.join("eval.csv"), &report.csv_rows())?;
    write_json(&dir.join(EVAL_REPORT), &report)?;
    maybe_achievability(&dir)
}

pub fn leakage(config: &Path, estimator: EstimatorArg, samples: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<()> {
    if samples == Some(0) {
        return Err(Error::Usage("--samples must be positive".into()).into());
    }
    let (manifest, set) = load_manifest(config)?;
    let dir = manifest_dir(config, out);
    let settings = EvalSettings {
        trials: 0,
        estimators: estimators(estimator),
        preset: EstimatorPreset::named(manifest.experiment.estimator),
        leakage_samples: samples,
    };
    let report = evaluate(&set, Some(set.algorithm), &settings, &master(&manifest, seed))?;
    for e in &report.leakage {
        println!("{}: I({};Z) = {:.4} nats (raw {:.4}, ± {:.4})", e.estimator, e.secret, e.estimate.value, e.estimate.raw, e.estimate.ci_halfwidth);
    }
    fs::create_dir_all(&dir)?;
    write_rows(&dir.join("leakage.csv"), &report.csv_rows())?;
    write_json(&dir.join(LEAKAGE_REPORT), &report)?;
    maybe_achievability(&dir)
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    config: &Path,
    axis: &str,
    grid: &[f64],
    algorithm: Algorithm,
    trials: usize,
    estimator: EstimatorArg,
    samples: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let axis: SweepAxis = axis.parse()?;
    let experiment = load_experiment(config)?;
    let settings = EvalSettings {
        trials,
        estimators: estimators(estimator),
        preset: EstimatorPreset::named(experiment.estimator),
        leakage_samples: samples,
    };
    let dir = out.or_else(|| experiment.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let streams = RngStreams::new(seed.unwrap_or(experiment.seed));
    let points = wiretap_core::evaluation::sweep(axis, grid, &experiment.code, algorithm, &settings, &streams)?;
    for p in &points {
        match &p.outcome {
            Ok(r) => println!("{:?} = {}: done in {:.1} s", axis, p.value, r.runtime_secs),
            Err(e) => eprintln!("{:?} = {}: failed: {e}", axis, p.value),
        }
    }
    let name = format!("sweep_{}.csv", serde_json::to_value(axis)?.as_str().unwrap_or("axis"));
    write_rows(&dir.join(name), &sweep_rows(axis, &experiment.code, &points))
}

fn baseline_row(code: &CodeConfig, user: &str, metric: &str, value: f64, ci: f64, samples: u64) -> CsvRow {
    CsvRow {
        config_hash: code.hash(),
        n: code.n,
        l: code.num_users(),
        t: code.num_transmitters(),
        user: user.into(),
        metric: metric.into(),
        value,
        ci_halfwidth: ci,
        samples,
        preset: String::new(),
    }
}

pub fn compare_baselines(config: &Path, trials: usize, alphas: &[f64], seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<()> {
    if trials == 0 {
        return Err(Error::Usage("--trials must be positive".into()).into());
    }
    let experiment = load_experiment(config)?;
    let code = &experiment.code;
    if code.num_users() != 2 {
        return Err(Error::Usage(format!("baseline comparison needs exactly two users, got {}", code.num_users())).into());
    }
    let streams = RngStreams::new(seed.unwrap_or(experiment.seed));
    let security = code.security_layer()?;
    let mut rows = Vec::new();

    let sic = wiretap_core::reliability::train_sic(code)?;
    let r = estimate_error_rates(&sic, &security, trials, &streams)?;
    rows.push(baseline_row(code, "all", "pe_joint_sic", r.joint.value, r.joint.ci_halfwidth, r.joint.samples));

    let jd = baseline_joint_decoding(code)?;
    let r = estimate_error_rates(&jd, &security, trials, &streams)?;
    rows.push(baseline_row(code, "all", "pe_joint_joint_decoding", r.joint.value, r.joint.ci_halfwidth, r.joint.samples));

    let ts = baseline_time_sharing(code, alphas, trials, &streams)?;
    for p in &ts.points {
        let ci = wiretap_core::evaluation::wald_halfwidth((p.joint_error * p.trials as f64).round() as u64, p.trials);
        rows.push(baseline_row(code, "all", &format!("pe_joint_time_sharing_alpha_{}", p.split.alpha()), p.joint_error, ci, p.trials));
    }
    let best = ts.best_point();
    println!("time sharing best split n1={} n2={} (P_e {:.3e})", best.split.n1, best.split.n2, best.joint_error);
    for row in &rows {
        println!("{}: {:.3e}", row.metric, row.value);
    }
    let dir = out.or_else(|| experiment.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    write_rows(&dir.join("baselines.csv"), &rows)
}
