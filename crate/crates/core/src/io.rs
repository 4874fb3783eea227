//! Experiment configuration and on-disk artifacts.
//!
//! A trained code is stored as one JSON checkpoint per encoder and decoder
//! plus a manifest that embeds the experiment configuration, its hash and
//! the SHA-256 of every checkpoint. Loading re-verifies all of them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{usage, Error, Result};
use crate::leakage::PresetName;
use crate::nn::MlpModel;
use crate::reliability::{Algorithm, CodeConfig, CodecPair, CodecSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// One transmitter, at most one helper.
    WiretapHelper,
    /// One transmitter, any number of helpers.
    MultiHelper,
    /// Two transmitters and any number of helpers.
    MacWiretap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub code: CodeConfig,
    #[serde(default = "default_preset")]
    pub estimator: PresetName,
    /// Master seed for evaluation and leakage streams.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_preset() -> PresetName {
    PresetName::Desk
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.code.num_transmitters();
        let helpers = self.code.num_users() - t;
        match self.scenario {
            Scenario::WiretapHelper if t != 1 || helpers > 1 => {
                Err(usage!("wiretap_helper needs one transmitter and at most one helper (got T={t}, {helpers} helpers)"))
            }
            Scenario::MultiHelper if t != 1 => Err(usage!("multi_helper needs exactly one transmitter (got T={t})")),
            Scenario::MacWiretap if t != 2 => Err(usage!("mac_wiretap needs exactly two transmitters (got T={t})")),
            _ => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| usage!("{}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &to_json(self)?)
    }

    /// Hash of the code description, shared by checkpoints and result rows.
    pub fn config_hash(&self) -> String {
        self.code.hash()
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<String> {
    let bytes = to_json(model)?;
    write_file(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub user: String,
    pub encoder: String,
    pub encoder_sha256: String,
    pub decoder: String,
    pub decoder_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub epochs_trained: usize,
    pub experiment: ExperimentConfig,
    /// Canonical user order; file names are relative to the manifest.
    pub checkpoints: Vec<CheckpointEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: u32 = 1;

/// Writes checkpoints and the manifest into `dir`; returns the manifest path.
pub fn save_codecs(dir: &Path, experiment: &ExperimentConfig, set: &CodecSet) -> Result<PathBuf> {
    if set.config != experiment.code {
        return Err(usage!("codecs were trained for a different code configuration"));
    }
    set.check()?;
    fs::create_dir_all(dir)?;
    let mut checkpoints = Vec::new();
    for (l, pair) in set.pairs.iter().enumerate() {
        let user = set.config.label(l);
        let encoder = format!("encoder_{user}.json");
        let decoder = format!("decoder_{user}.json");
        let encoder_sha256 = save_model(&pair.encoder, &dir.join(&encoder))?;
        let decoder_sha256 = save_model(&pair.decoder, &dir.join(&decoder))?;
        checkpoints.push(CheckpointEntry { user, encoder, encoder_sha256, decoder, decoder_sha256 });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        config_hash: experiment.config_hash(),
        algorithm: set.algorithm,
        epochs_trained: set.epochs_trained,
        experiment: experiment.clone(),
        checkpoints,
    };
    let path = dir.join(MANIFEST_FILE);
    write_file(&path, &to_json(&manifest)?)?;
    Ok(path)
}

fn read_verified(dir: &Path, file: &str, expected: &str) -> Result<MlpModel> {
    let path = dir.join(file);
    let bytes = fs::read(&path)?;
    let actual = sha256_hex(&bytes);
    if actual != expected {
        return Err(Error::Integrity(format!("{} has sha256 {actual}, manifest expects {expected}", path.display())));
    }
    serde_json::from_slice(&bytes).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))
}

/// Loads and verifies a manifest and every checkpoint it lists.
pub fn load_codecs(manifest_path: &Path) -> Result<(Manifest, CodecSet)> {
    let bytes = fs::read(manifest_path)?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| usage!("{}: not a valid manifest: {e}", manifest_path.display()))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(usage!("unsupported manifest format {}", manifest.format));
    }
    manifest.experiment.validate()?;
    let code = &manifest.experiment.code;
    if manifest.config_hash != code.hash() {
        return Err(Error::Integrity(format!(
            "manifest config hash {} does not match its configuration ({})",
            manifest.config_hash,
            code.hash()
        )));
    }
    if manifest.checkpoints.len() != code.num_users() {
        return Err(Error::Integrity(format!("{} checkpoints for {} users", manifest.checkpoints.len(), code.num_users())));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (l, entry) in manifest.checkpoints.iter().enumerate() {
        if entry.user != code.label(l) {
            return Err(Error::Integrity(format!("checkpoint {l} is for {}, expected {}", entry.user, code.label(l))));
        }
        pairs.push(CodecPair {
            encoder: read_verified(dir, &entry.encoder, &entry.encoder_sha256)?,
            decoder: read_verified(dir, &entry.decoder, &entry.decoder_sha256)?,
        });
    }
    let set = CodecSet { config: code.clone(), algorithm: manifest.algorithm, epochs_trained: manifest.epochs_trained, pairs };
    set.check().map_err(|e| Error::Integrity(e.to_string()))?;
    Ok((manifest, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelParams;
    use crate::reliability::{train_ptp, TrainConfig, UserSpec};

    fn experiment() -> ExperimentConfig {
        let users = vec![UserSpec::transmitter(2, 1, 2.0), UserSpec::helper(2, 6.0)];
        let ch = ChannelParams::new(vec![1.0, 1.0], vec![1.0, 0.3], 1.0, 1.0).unwrap();
        let mut t = TrainConfig::new(1, 32, 1e-3, 64, 3);
        t.hidden_width = Some(8);
        ExperimentConfig {
            scenario: Scenario::WiretapHelper,
            code: CodeConfig::new(4, users, ch, t).unwrap(),
            estimator: PresetName::Smoke,
            seed: 1,
            output_dir: None,
        }
    }

    #[test]
    fn scenario_rules() {
        let mut e = experiment();
        e.validate().unwrap();
        e.scenario = Scenario::MacWiretap;
        assert!(e.validate().is_err());
        e.scenario = Scenario::MultiHelper;
        e.validate().unwrap();
    }

    #[test]
    fn config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let e = experiment();
        e.save(&p).unwrap();
        assert_eq!(ExperimentConfig::load(&p).unwrap(), e);
        assert!(ExperimentConfig::load(&dir.path().join("missing.json")).is_err());
        fs::write(&p, "{\"scenario\": \"wiretap_helper\"}").unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Usage(_))));
    }

    #[test]
    fn codecs_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let e = experiment();
        let set = train_ptp(&e.code).unwrap();
        let path = save_codecs(dir.path(), &e, &set).unwrap();
        let (m, back) = load_codecs(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(m.checkpoints.len(), 2);

        let enc = dir.path().join(&m.checkpoints[0].encoder);
        let mut text = fs::read_to_string(&enc).unwrap();
        text.push(' ');
        fs::write(&enc, text).unwrap();
        assert!(matches!(load_codecs(&path), Err(Error::Integrity(_))));
    }

    #[test]
    fn manifest_hash_mismatch_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = experiment();
        let set = train_ptp(&e.code).unwrap();
        let path = save_codecs(dir.path(), &e, &set).unwrap();
        let mut m: Manifest = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        m.experiment.code.channel.g[1] = 0.5;
        fs::write(&path, to_json(&m).unwrap()).unwrap();
        assert!(matches!(load_codecs(&path), Err(Error::Integrity(_))));
    }
}
