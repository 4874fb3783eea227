use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "scenario": "wiretap_helper",
  "code": {
    "n": 6,
    "users": [
      { "role": "transmitter", "q": 3, "k": 1, "power": 2.0 },
      { "role": "helper", "q": 3, "power": 6.0 }
    ],
    "channel": { "h": [1.0, 1.0], "g": [1.0, 0.5], "sigma2_Y": 1.0, "sigma2_Z": 1.0 },
    "train": { "epochs": 2, "batch_size": 200, "learning_rate": 0.003, "messages_per_epoch": 2000, "seed": 3, "hidden_width": 16 }
  },
  "estimator": "smoke",
  "seed": 12
}
"#;

fn wiretap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wiretap")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_into(cfg: &Path, out: &Path) -> PathBuf {
    let o = wiretap(&["train", "--config", s(cfg), "--algo", "sic", "--out", s(out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.json")
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = wiretap(&["train", "--config", "/nonexistent/exp.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_trials_is_a_usage_error() {
    let (dir, cfg) = setup();
    let manifest = train_into(&cfg, &dir.path().join("run"));
    let o = wiretap(&["eval", "--config", s(&manifest), "--trials", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn tampered_checkpoint_is_an_integrity_error() {
    let (dir, cfg) = setup();
    let run = dir.path().join("run");
    let manifest = train_into(&cfg, &run);
    let ckpt = run.join("decoder_S1.json");
    let mut text = fs::read_to_string(&ckpt).unwrap();
    text = text.replacen('1', "2", 1);
    fs::write(&ckpt, text).unwrap();
    let o = wiretap(&["eval", "--config", s(&manifest), "--trials", "100"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reruns_produce_identical_artifacts() {
    let (dir, cfg) = setup();
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let manifest = train_into(&cfg, &out);
        assert_eq!(code(&wiretap(&["eval", "--config", s(&manifest), "--trials", "2000"])), 0);
        assert_eq!(code(&wiretap(&["leakage", "--config", s(&manifest), "--estimator", "both"])), 0);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| !matches!(p.file_name().unwrap().to_str(), Some("timing.json" | "eval.json" | "leakage.json")))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let names: Vec<_> = snapshots[0].iter().map(|f| f.0.as_str()).collect();
    for want in ["manifest.json", "encoder_S1.json", "decoder_M2.json", "eval.csv", "leakage.csv", "achievability.json"] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
}

#[test]
fn both_estimators_report_leakage() {
    let (dir, cfg) = setup();
    let manifest = train_into(&cfg, &dir.path().join("run"));
    let o = wiretap(&["leakage", "--config", s(&manifest), "--estimator", "both"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("run/leakage.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("config_hash,n,L,T,user,metric,value,ci_halfwidth,samples,preset"));
    assert!(csv.contains(",leakage_mine,"));
    assert!(csv.contains(",leakage_club,"));
}

#[test]
fn sweep_grid_handling() {
    let (dir, cfg) = setup();
    let out = dir.path().join("sweep");
    let o = wiretap(&["sweep", "--config", s(&cfg), "--axis", "power", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "empty grid must be rejected");
    let o = wiretap(&["sweep", "--config", s(&cfg), "--axis", "warp", "--grid", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "unknown axis must be rejected");
    let o = wiretap(&[
        "sweep", "--config", s(&cfg), "--axis", "power", "--grid", "4", "--algo", "ptp", "--trials", "500", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep_power.csv")).unwrap();
    assert!(csv.contains(",pe_secret,"));
    assert!(csv.contains(",leakage_mine,"));
}
