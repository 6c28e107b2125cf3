use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wbrtf_core::speech::synthetic;
use wbrtf_core::stft::{write_wav, AudioClip};

fn wbrtf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbrtf"))
        .args(args)
        .env_remove("WBRTF_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut rows = vec![header];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

const SMALL: &str = r#"
scenario = "equicorrelated"
swept_parameter = "snr_db"
values = [-5, 5]
n_trials = 6
base_seed = 11
compute_bounds = true
[fixed]
K = 2
M = 2
L = 100
"#;

#[test]
fn missing_config_is_io_failure() {
    let out = wbrtf(&["synthetic", "--config", "does-not-exist.toml", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(wbrtf(&["synthetic", "--bogus"]).status.code(), Some(1));
    assert_eq!(wbrtf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(wbrtf(&[]).status.code(), Some(1));
    assert_eq!(wbrtf(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "scenario = \"equicorrelated\"\nswept_parameter = \"rho_f\"\nvalues = [2.0]\n");
    let out = wbrtf(&["synthetic", "--config", cfg.to_str().unwrap(), "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho_f"));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out_path = dir.path().join("missing-dir").join("out.csv");
    let out = wbrtf(&["crb", "--config", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = wbrtf(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 5);
    assert!(text.lines().all(|l| l.starts_with("[PASS]")));
}

#[test]
fn synthetic_csv_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = wbrtf(&["synthetic", "--config", cfg.to_str().unwrap(), "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let rows = read_csv(&a);
    assert_eq!(
        rows[0],
        ["scenario", "swept_parameter", "value", "method", "metric", "mean", "ci_lo", "ci_hi", "n_trials", "seed"]
    );
    // 2 points x (2 methods x 2 metrics + 2 bounds)
    assert_eq!(rows.len() - 1, 2 * 6);
    for r in &rows[1..] {
        let (mean, lo, hi): (f64, f64, f64) = (r[5].parse().unwrap(), r[6].parse().unwrap(), r[7].parse().unwrap());
        assert!(lo <= mean && mean <= hi);
        assert_eq!(r[9], "11");
    }
}

#[test]
fn worker_cap_is_validated_and_harmless() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let run = |p: &Path, workers: &str| {
        Command::new(env!("CARGO_BIN_EXE_wbrtf"))
            .args(["synthetic", "--config", cfg.to_str().unwrap(), "--out", p.to_str().unwrap()])
            .env("WBRTF_WORKERS", workers)
            .output()
            .unwrap()
    };
    assert_eq!(run(&a, "1").status.code(), Some(0));
    assert_eq!(run(&b, "3").status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(run(&a, "zero").status.code(), Some(1));
}

#[test]
fn crb_rows_are_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out_path = dir.path().join("crb.csv");
    let out = wbrtf(&["crb", "--config", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&out_path);
    assert_eq!(rows.len() - 1, 4);
    for pair in rows[1..].chunks(2) {
        assert_eq!(pair[0][3], "crb-conditional");
        assert_eq!(pair[1][3], "crb-unconditional");
        let c: f64 = pair[0][5].parse().unwrap();
        let u: f64 = pair[1][5].parse().unwrap();
        assert!(c <= u, "{c} > {u}");
    }
}

fn write_inputs(dir: &Path, rate: u32) -> [PathBuf; 4] {
    let inputs = synthetic::inputs(2, 1.0, 21);
    let clips = [inputs.target, inputs.noise, inputs.target_rir, inputs.noise_rir];
    let names = ["target.wav", "noise.wav", "target_rir.wav", "noise_rir.wav"];
    let mut paths = names.map(|n| dir.join(n));
    for (clip, path) in clips.iter().zip(&mut paths) {
        let clip = AudioClip { sample_rate: rate, ..clip.clone() };
        write_wav(&*path, &clip).unwrap();
    }
    paths
}

const SPEECH: &str = r#"
scenario = "speech"
swept_parameter = "snr_db"
values = [0]
n_trials = 2
methods = ["svd-direct", "cw", "svd-direct-orig-phase", "cw-orig-phase"]
[speech]
M = 2
band_high_hz = 1000.0
noise_only_seconds = 0.5
"#;

fn speech_args<'a>(cfg: &'a str, paths: &'a [PathBuf; 4], out: &'a str) -> Vec<&'a str> {
    vec![
        "speech",
        "--config",
        cfg,
        "--target",
        paths[0].to_str().unwrap(),
        "--noise",
        paths[1].to_str().unwrap(),
        "--target-rir",
        paths[2].to_str().unwrap(),
        "--noise-rir",
        paths[3].to_str().unwrap(),
        "--out",
        out,
    ]
}

#[test]
fn speech_subcommand_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SPEECH);
    let paths = write_inputs(dir.path(), 16_000);
    let out_path = dir.path().join("speech.csv");
    let out = wbrtf(&speech_args(cfg.to_str().unwrap(), &paths, out_path.to_str().unwrap()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&out_path);
    assert_eq!(rows.len() - 1, 4 * 2);
    assert!(rows[1..].iter().all(|r| r[0] == "speech" && r[8] == "2"));
}

#[test]
fn speech_rejects_wrong_sample_rate_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SPEECH);
    let paths = write_inputs(dir.path(), 8_000);
    let out_path = dir.path().join("speech.csv");
    let out = wbrtf(&speech_args(cfg.to_str().unwrap(), &paths, out_path.to_str().unwrap()));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sample rate"));

    let mut missing = paths.clone();
    missing[1] = dir.path().join("nope.wav");
    let out = wbrtf(&speech_args(cfg.to_str().unwrap(), &missing, out_path.to_str().unwrap()));
    assert_eq!(out.status.code(), Some(2));
}
