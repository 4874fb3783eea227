use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::rates::estimate_error_rates;
use super::report::{CsvRow, EvalReport, LeakageEntry};
use crate::error::{usage, Result};
use crate::leakage::{collect_samples, estimate, Estimator, EstimatorPreset};
use crate::reliability::{train, Algorithm, CodeConfig, CodeSystem, Role};
use crate::rng::RngStreams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Monte-Carlo trials for error rates; 0 skips them.
    pub trials: usize,
    pub estimators: Vec<Estimator>,
    pub preset: EstimatorPreset,
    /// Overrides the preset's sample count for every estimator.
    pub leakage_samples: Option<usize>,
}

/// Error rates and leakage of an already trained system.
pub fn evaluate(sys: &dyn CodeSystem, algorithm: Option<Algorithm>, settings: &EvalSettings, streams: &RngStreams) -> Result<EvalReport> {
    if settings.trials == 0 && settings.estimators.is_empty() {
        return Err(usage!("nothing to evaluate: zero trials and no estimator"));
    }
    let start = Instant::now();
    let code = sys.config();
    let security = code.security_layer()?;
    let mut report = EvalReport::new(code, algorithm);
    if settings.trials > 0 {
        report.rates = Some(estimate_error_rates(sys, &security, settings.trials, streams)?);
    }
    if !settings.estimators.is_empty() {
        if security.secret_bits() == 0 {
            return Err(usage!("leakage needs at least one secret bit"));
        }
        let count = |e: Estimator| settings.leakage_samples.unwrap_or_else(|| settings.preset.samples(e));
        let most = settings.estimators.iter().map(|&e| count(e)).max().unwrap_or(0);
        let samples = collect_samples(sys, &security, most, streams)?;
        let secret: String = code.transmitter_indices().iter().map(|&i| code.label(i)).collect();
        for &e in &settings.estimators {
            let l = count(e);
            let subset = if l == most { samples.clone() } else { samples.select(&(0..l).collect::<Vec<_>>()) };
            let estimate = estimate(&subset, e, &settings.preset, streams)?;
            report.leakage.push(LeakageEntry { estimator: e, secret: secret.clone(), estimate, preset: settings.preset.name });
        }
    }
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Blocklength `n`; message widths unchanged.
    Blocklength,
    /// Number of helpers, each a copy of the first configured helper.
    HelperCount,
    /// Power of every helper.
    Power,
    /// Eavesdropper gain `g` of every helper.
    Gains,
}

impl std::str::FromStr for SweepAxis {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocklength" => Ok(SweepAxis::Blocklength),
            "helper_count" => Ok(SweepAxis::HelperCount),
            "power" => Ok(SweepAxis::Power),
            "gains" => Ok(SweepAxis::Gains),
            _ => Err(usage!("unknown sweep axis {s:?}; expected blocklength, helper_count, power or gains")),
        }
    }
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value.fract() != 0.0 || value < 0.0 || !value.is_finite() {
        return Err(usage!("{what} must be a non-negative integer, got {value}"));
    }
    Ok(value as usize)
}

/// The base configuration with one axis set to `value`.
pub fn apply_axis(base: &CodeConfig, axis: SweepAxis, value: f64) -> Result<CodeConfig> {
    let mut c = base.clone();
    match axis {
        SweepAxis::Blocklength => c.n = as_count(value, "blocklength")?,
        SweepAxis::HelperCount => return base.with_helper_count(as_count(value, "helper count")?, None),
        SweepAxis::Power | SweepAxis::Gains => {
            if base.helper_indices().is_empty() {
                return Err(usage!("the base configuration has no helper to sweep"));
            }
            for i in base.helper_indices() {
                if axis == SweepAxis::Power {
                    c.users[i].power = value;
                } else {
                    c.channel.g[i] = value;
                }
            }
        }
    }
    c.rebuild()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: std::result::Result<EvalReport, String>,
}

/// Trains and evaluates one code per grid value. A failing point is
/// recorded and the sweep moves on.
pub fn sweep(
    axis: SweepAxis,
    grid: &[f64],
    base: &CodeConfig,
    algorithm: Algorithm,
    settings: &EvalSettings,
    streams: &RngStreams,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(usage!("sweep grid is empty"));
    }
    Ok(grid
        .iter()
        .map(|&value| {
            let outcome = apply_axis(base, axis, value)
                .and_then(|cfg| {
                    let start = Instant::now();
                    let set = train(&cfg, algorithm)?;
                    let mut report = evaluate(&set, Some(algorithm), settings, streams)?;
                    report.runtime_secs = start.elapsed().as_secs_f64();
                    Ok(report)
                })
                .map_err(|e| {
                    log::warn!("sweep point {value} failed: {e}");
                    e.to_string()
                });
            SweepPoint { value, outcome }
        })
        .collect())
}

/// Result rows of every successful point; a failed point contributes one
/// `failed` row carrying the grid value.
pub fn sweep_rows(axis: SweepAxis, base: &CodeConfig, points: &[SweepPoint]) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for p in points {
        match &p.outcome {
            Ok(r) => rows.extend(r.csv_rows()),
            Err(_) => {
                let t = base.users.iter().filter(|u| u.role == Role::Transmitter).count();
                rows.push(CsvRow {
                    config_hash: base.hash(),
                    n: if axis == SweepAxis::Blocklength { p.value as usize } else { base.n },
                    l: if axis == SweepAxis::HelperCount { t + p.value as usize } else { base.num_users() },
                    t,
                    user: "all".into(),
                    metric: "failed".into(),
                    value: p.value,
                    ci_halfwidth: 0.0,
                    samples: 0,
                    preset: String::new(),
                })
            }
        }
    }
    rows
}
