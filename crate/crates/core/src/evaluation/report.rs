use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::rates::ErrorRates;
use crate::error::{usage, Result};
use crate::leakage::{Estimator, MiEstimate, PresetName};
use crate::reliability::{Algorithm, CodeConfig, Role};

/// Column order of every results file.
pub const CSV_HEADER: [&str; 10] = ["config_hash", "n", "L", "T", "user", "metric", "value", "ci_halfwidth", "samples", "preset"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageEntry {
    pub estimator: Estimator,
    /// `S1`, or `S1S2` for the joint secret.
    pub secret: String,
    pub estimate: MiEstimate,
    pub preset: PresetName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub code: CodeConfig,
    pub config_hash: String,
    pub algorithm: Option<Algorithm>,
    pub rates: Option<ErrorRates>,
    pub leakage: Vec<LeakageEntry>,
    /// Wall-clock seconds spent producing the report; never written to CSV.
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub config_hash: String,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub user: String,
    pub metric: String,
    pub value: f64,
    pub ci_halfwidth: f64,
    pub samples: u64,
    pub preset: String,
}

impl EvalReport {
    pub fn new(code: &CodeConfig, algorithm: Option<Algorithm>) -> EvalReport {
        EvalReport { code: code.clone(), config_hash: code.hash(), algorithm, rates: None, leakage: Vec::new(), runtime_secs: 0.0 }
    }

    pub fn leakage_for(&self, estimator: Estimator) -> Option<&LeakageEntry> {
        self.leakage.iter().find(|e| e.estimator == estimator)
    }

    fn row(&self, user: &str, metric: &str, value: f64, ci: f64, samples: u64, preset: &str) -> CsvRow {
        CsvRow {
            config_hash: self.config_hash.clone(),
            n: self.code.n,
            l: self.code.num_users(),
            t: self.code.num_transmitters(),
            user: user.to_string(),
            metric: metric.to_string(),
            value,
            ci_halfwidth: ci,
            samples,
            preset: preset.to_string(),
        }
    }

    /// One row per metric: `pe_secret` and `pe_message` per transmitter,
    /// `pe_message` per helper, `pe_joint` for the whole tuple, then
    /// `leakage_<estimator>` and its unclamped `leakage_<estimator>_raw`.
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        if let Some(r) = &self.rates {
            for u in &r.users {
                if let Some(s) = &u.secret {
                    rows.push(self.row(&u.label, "pe_secret", s.value, s.ci_halfwidth, s.samples, ""));
                }
                rows.push(self.row(&u.label, "pe_message", u.message.value, u.message.ci_halfwidth, u.message.samples, ""));
            }
            rows.push(self.row("all", "pe_joint", r.joint.value, r.joint.ci_halfwidth, r.joint.samples, ""));
        }
        for e in &self.leakage {
            let m = format!("leakage_{}", e.estimator);
            let p = e.preset.to_string();
            let s = e.estimate.samples as u64;
            rows.push(self.row(&e.secret, &m, e.estimate.value, e.estimate.ci_halfwidth, s, &p));
            rows.push(self.row(&e.secret, &format!("{m}_raw"), e.estimate.raw, e.estimate.ci_halfwidth, s, &p));
        }
        rows
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(usage!("unexpected CSV header {header:?}"));
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeled {
    pub user: String,
    pub value: f64,
}

/// Rates, measured error bounds, measured leakage bound and powers of a code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityTuple {
    /// `k_i / n` for transmitters, `q_j / n` for helpers.
    pub rates: Vec<Labeled>,
    /// Secret error rate for transmitters, message error rate for helpers.
    pub epsilons: Vec<Labeled>,
    pub delta: f64,
    pub estimator: Estimator,
    pub powers: Vec<Labeled>,
}

/// Packages a complete report as an achievability tuple. Users are listed
/// in label order (transmitters, then helpers).
pub fn achievability_report(report: &EvalReport, estimator: Estimator) -> Result<AchievabilityTuple> {
    let rates = report.rates.as_ref().ok_or_else(|| usage!("report has no error rates"))?;
    let leak = report.leakage_for(estimator).ok_or_else(|| usage!("report has no {estimator} leakage entry"))?;
    let code = &report.code;
    let mut order: Vec<usize> = code.transmitter_indices();
    order.extend(code.helper_indices());
    let n = code.n as f64;
    let mut tuple = AchievabilityTuple { rates: vec![], epsilons: vec![], delta: leak.estimate.value, estimator, powers: vec![] };
    for l in order {
        let u = &code.users[l];
        let user = code.label(l);
        let ur = rates.by_label(&user).ok_or_else(|| usage!("report has no rates for {user}"))?;
        let (bits, eps) = match u.role {
            Role::Transmitter => (u.k.unwrap_or(0), ur.secret.ok_or_else(|| usage!("no secret rate for {user}"))?.value),
            Role::Helper => (u.q, ur.message.value),
        };
        tuple.rates.push(Labeled { user: user.clone(), value: bits as f64 / n });
        tuple.epsilons.push(Labeled { user: user.clone(), value: eps });
        tuple.powers.push(Labeled { user, value: u.power });
    }
    Ok(tuple)
}
