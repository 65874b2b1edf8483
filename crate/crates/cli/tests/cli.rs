use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spikesurgery::lanczos::SpectrumReport;
use spikesurgery::vecspace::{read_param_vector, write_param_vector, ParamFile};
use spikesurgery_cli::{Manifest, Status};
use tempfile::TempDir;

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/imbalanced4.toml");

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikesurgery"))
        .args(args)
        .output()
        .expect("spawn spikesurgery")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn read_params(path: &Path) -> ParamFile {
    read_param_vector(BufReader::new(fs::File::open(path).unwrap())).unwrap()
}

/// A temporary directory holding a trained fixture checkpoint.
fn trained() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let o = run(&["train", "--config", CONFIG, "--out", &path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (dir, out.join("checkpoint.paramvec"))
}

fn with_checkpoint<'a>(cmd: &'a str, ckpt: &'a str, out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![cmd, "--config", CONFIG, "--checkpoint", ckpt, "--out", out];
    args.extend_from_slice(extra);
    args
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let (_dir, ckpt) = trained();
    let bytes = fs::read(&ckpt).unwrap();
    let parsed = read_params(&ckpt);
    assert_eq!(parsed.meta["preset"].as_str(), Some("imbalanced-4"));
    let mut again = Vec::new();
    write_param_vector(&mut again, &parsed.vector, &parsed.meta).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(&dir.path().join("x"));
    let missing_seed = run(&["spectrum", "--set", "fixture.preset=imbalanced-4", "--out", &out]);
    assert_eq!(missing_seed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing_seed.stderr).contains("seed"));

    let unknown = run(&["spectrum", "--config", CONFIG, "--set", "spectrum.ordr=3", "--out", &out]);
    assert_eq!(unknown.status.code(), Some(2));

    let no_section = run(&["linearize", "--set", "seed=0", "--set", "fixture.preset=imbalanced-4", "--out", &out]);
    assert_eq!(no_section.status.code(), Some(2));

    let bad_experiment = run(&["experiment", "spectra", "--config", CONFIG, "--out", &out]);
    assert_eq!(bad_experiment.status.code(), Some(2));
}

#[test]
fn zero_iterations_return_the_input_checkpoint() {
    let (dir, ckpt) = trained();
    let out = dir.path().join("t0");
    let c = path_str(&ckpt);
    let o = run(&with_checkpoint("surgery", &c, &path_str(&out), &["--set", "surgery.iterations=0"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let before = read_params(&ckpt).vector;
    let after = read_params(&out.join("checkpoint.paramvec")).vector;
    assert!(after.bit_eq(&before));
}

#[test]
fn spiked_spectrum_lists_the_planted_spikes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spiked");
    let o = run(&[
        "spectrum",
        "--config",
        CONFIG,
        "--set",
        "operator.source=\"spiked\"",
        "--set",
        "spectrum.order=20",
        "--out",
        &path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = SpectrumReport::from_toml(&fs::read_to_string(out.join("spectrum.toml")).unwrap()).unwrap();
    assert_eq!(report.clear_spikes(), 8);
    assert!((report.eigenvalues[0] - 828.6).abs() < 1e-6);
}

#[test]
fn order_one_gives_a_single_ritz_value() {
    let (dir, ckpt) = trained();
    let out = dir.path().join("m1");
    let c = path_str(&ckpt);
    let o = run(&with_checkpoint("spectrum", &c, &path_str(&out), &["--set", "spectrum.order=1"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = SpectrumReport::from_toml(&fs::read_to_string(out.join("spectrum.toml")).unwrap()).unwrap();
    assert_eq!(report.eigenvalues.len(), 1);
}

#[test]
fn deflated_phases_on_the_twelve_class_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("deflated");
    let o = run(&[
        "surgery",
        "--config",
        CONFIG,
        "--set",
        "fixture.preset=\"twelve-class\"",
        "--set",
        "surgery.iterations=2",
        "--deflated",
        "--phases",
        "2",
        "--out",
        &path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let phases: toml::Table = toml::from_str(&fs::read_to_string(out.join("phases.toml")).unwrap()).unwrap();
    assert_eq!(phases["phases"].as_array().unwrap().len(), 2);
    let manifest = Manifest::load(&out.join("manifest.toml")).unwrap();
    assert_eq!(manifest.options.phases, Some(2));
    assert_eq!(manifest.heldout_accesses, vec!["final-report".to_string()]);
}

#[test]
fn every_experiment_writes_its_declared_outputs() {
    let (dir, ckpt) = trained();
    let c = path_str(&ckpt);
    for name in ["bulkwalk", "linearize", "stability", "baselines", "slq-density"] {
        let out = dir.path().join(name);
        let mut args = vec!["experiment", name];
        let o_str = path_str(&out);
        args.extend(with_checkpoint("", &c, &o_str, &[]).into_iter().skip(1));
        let o = run(&args);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let manifest = Manifest::load(&out.join("manifest.toml")).unwrap();
        assert_eq!(manifest.status, Status::Complete);
        for file in manifest.command.declared_outputs(&manifest.options) {
            assert!(manifest.outputs.contains_key(*file), "{name} did not record {file}");
            assert!(out.join(file).exists(), "{name} did not write {file}");
        }
    }
}

#[test]
fn logit_adjustment_leaves_the_balanced_fixture_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("balanced");
    let o = run(&[
        "baselines",
        "--config",
        CONFIG,
        "--set",
        "fixture.preset=\"balanced-4\"",
        "--set",
        "surgery.iterations=1",
        "--out",
        &path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table: toml::Table = toml::from_str(&fs::read_to_string(out.join("comparison.toml")).unwrap()).unwrap();
    let row = table["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["method"].as_str().unwrap().starts_with("logit-adjust"))
        .unwrap();
    assert_eq!(row["delta_sigma"].as_float(), Some(0.0));
}

#[test]
fn heldout_split_is_read_only_for_the_final_report() {
    let (dir, ckpt) = trained();
    let c = path_str(&ckpt);
    for (cmd, expected) in [("spectrum", vec![]), ("sensitivity", vec![]), ("surgery", vec!["final-report"])] {
        let out = dir.path().join(cmd);
        let o = run(&with_checkpoint(cmd, &c, &path_str(&out), &[]));
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let manifest = Manifest::load(&out.join("manifest.toml")).unwrap();
        assert_eq!(manifest.heldout_accesses, expected, "{cmd}");
    }
}

#[test]
fn stop_and_resume_matches_an_uninterrupted_run() {
    let (dir, ckpt) = trained();
    let c = path_str(&ckpt);
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    assert!(run(&with_checkpoint("surgery", &c, &path_str(&full), &[])).status.success());
    let stopped = run(&with_checkpoint("surgery", &c, &path_str(&part), &["--stop-after", "3"]));
    assert_eq!(stopped.status.code(), Some(4));
    let interim = Manifest::load(&part.join("manifest.toml")).unwrap();
    assert_eq!(interim.status, Status::Interrupted);
    assert!(run(&["surgery", "--out", &path_str(&part), "--resume"]).status.success());
    let a = Manifest::load(&full.join("manifest.toml")).unwrap();
    let b = Manifest::load(&part.join("manifest.toml")).unwrap();
    assert_eq!(a.outputs, b.outputs);
    assert!(!part.join("state").exists());
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let (dir, ckpt) = trained();
    let c = path_str(&ckpt);
    let out = dir.path().join("sens");
    assert!(run(&with_checkpoint("sensitivity", &c, &path_str(&out), &[])).status.success());
    let manifest = out.join("manifest.toml");
    let replay = run(&["replay", &path_str(&manifest), "--out", &path_str(&dir.path().join("r1"))]);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));

    let text = fs::read_to_string(&manifest).unwrap();
    let mut m: Manifest = toml::from_str(&text).unwrap();
    m.outputs.insert("sensitivity.tsv".into(), "0".repeat(64));
    let tampered = dir.path().join("tampered.toml");
    fs::write(&tampered, m.to_toml().unwrap()).unwrap();
    let replay = run(&["replay", &path_str(&tampered), "--out", &path_str(&dir.path().join("r2"))]);
    assert_eq!(replay.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&replay.stderr).contains("sensitivity.tsv"));
}

#[test]
fn execution_modes_write_identical_reports() {
    let (dir, ckpt) = trained();
    let c = path_str(&ckpt);
    let mut digests = Vec::new();
    for mode in ["sequential", "parallel"] {
        let out = dir.path().join(mode);
        let mut args = vec!["--exec", mode];
        let o_str = path_str(&out);
        args.extend(with_checkpoint("surgery", &c, &o_str, &[]));
        assert!(run(&args).status.success());
        digests.push(Manifest::load(&out.join("manifest.toml")).unwrap().outputs);
    }
    assert_eq!(digests[0], digests[1]);
}
