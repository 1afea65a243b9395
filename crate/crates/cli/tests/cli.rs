use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iqc_cli::certificate::CertificateDump;
use iqc_core::multiplier::Family;
use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn example() -> PathBuf {
    repo().join("configs/example.toml")
}

fn iqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqc")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Results JSON with every wall-clock field removed.
fn without_timings(mut v: Value) -> Value {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(map) => {
                map.remove("seconds");
                map.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    v
}

#[test]
fn example_sweep_prints_table_and_writes_results() {
    let out = tempfile::tempdir().unwrap();
    let o = iqc(&["--config", s(&example()), "--out", s(out.path()), "--horizons", "0..2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    let relu = table.lines().find(|l| l.starts_with("relu")).unwrap();
    assert_eq!(relu.split_whitespace().collect::<Vec<_>>(), ["relu", "4.017", "1.554", "1.300"]);
    let slope = table.lines().find(|l| l.starts_with("slope")).unwrap();
    assert_eq!(slope.split_whitespace().collect::<Vec<_>>(), ["slope", "14.22", "1.787", "1.698"]);
    assert_eq!(std::fs::read_to_string(out.path().join("table.txt")).unwrap(), table);

    let results: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(results["schema_version"], 1);
    let runs = results["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 6);
    for r in runs {
        assert_eq!(r["status"], "optimal");
        assert_eq!(r["certificate_sha256"].as_str().unwrap().len(), 64);
    }
    // Full precision in the machine-readable file.
    let g = runs[0]["gamma"].as_f64().unwrap();
    assert!((g - 4.017).abs() < 1e-2 && format!("{g}").len() > 6);
    assert!(!out.path().join("certificates").exists());
}

#[test]
fn two_runs_are_identical_up_to_timings() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = iqc(&["--config", s(&example()), "--out", s(d.path()), "--seed", "7", "--dump-certificates"]);
        assert!(o.status.success());
    }
    let read = |d: &tempfile::TempDir| -> Value {
        serde_json::from_str(&std::fs::read_to_string(d.path().join("results.json")).unwrap()).unwrap()
    };
    assert_eq!(without_timings(read(&a)), without_timings(read(&b)));
    for entry in std::fs::read_dir(a.path().join("certificates")).unwrap() {
        let p = entry.unwrap().path();
        let other = b.path().join("certificates").join(p.file_name().unwrap());
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(other).unwrap());
    }
}

#[test]
fn checksums_match_dumped_certificates() {
    let out = tempfile::tempdir().unwrap();
    assert!(iqc(&["--config", s(&example()), "--out", s(out.path()), "--horizons", "1", "--dump-certificates"]).status.success());
    let results: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("results.json")).unwrap()).unwrap();
    for r in results["runs"].as_array().unwrap() {
        let file = out.path().join("certificates").join(r["certificate_file"].as_str().unwrap());
        let bytes = std::fs::read(&file).unwrap();
        assert_eq!(iqc_cli::certificate::sha256_hex(&bytes), r["certificate_sha256"].as_str().unwrap());
    }
}

#[test]
fn replay_round_trip_and_perturbations() {
    let out = tempfile::tempdir().unwrap();
    assert!(iqc(&["--config", s(&example()), "--out", s(out.path()), "--dump-certificates"]).status.success());
    let certs = out.path().join("certificates");
    let ok = iqc(&["replay", "--config", s(&example()), "--certificate", s(&certs)]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert_eq!(stdout(&ok).matches("PASS").count(), 8);

    let tight = iqc(&["replay", "--config", s(&example()), "--certificate", s(&certs), "--gamma-scale", "0.9"]);
    assert_eq!(tight.status.code(), Some(1));
    assert_eq!(stdout(&tight).matches("FAIL").count(), 8);

    // Q3_0 off-diagonal flipped negative breaks the Metzler condition.
    let file = certs.join("relu_N2.json");
    let mut dump = CertificateDump::load(&file).unwrap();
    let q3 = dump.family_mut(Family::Q3).unwrap();
    let zero = q3.blocks.len() / 2;
    q3.blocks[zero][0][1] = -0.5;
    let bad = out.path().join("bad.json");
    std::fs::write(&bad, dump.to_json()).unwrap();
    let o = iqc(&["replay", "--config", s(&example()), "--certificate", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("Q3_0[0,1]"), "{}", stdout(&o));
}

#[test]
fn replay_rejects_mismatched_dimensions() {
    let out = tempfile::tempdir().unwrap();
    assert!(iqc(&["--config", s(&example()), "--out", s(out.path()), "--horizons", "1", "--dump-certificates"]).status.success());
    let file = out.path().join("certificates/relu_N1.json");
    let mut dump = CertificateDump::load(&file).unwrap();
    dump.horizon = 2;
    let bad = out.path().join("bad.json");
    std::fs::write(&bad, dump.to_json()).unwrap();
    let o = iqc(&["replay", "--config", s(&example()), "--certificate", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_only_reports_dimensions_and_writes_nothing() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().join("never");
    let o = iqc(&["--config", s(&example()), "--out", s(&dir), "--validate-only"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("n_x = 4, m = 2, n_d = 2, n_e = 1"));
    assert!(text.contains("N=3: augmented states = 16"));
    assert!(!dir.exists());
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("c.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn input_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(example()).unwrap();

    let empty = write_config(dir.path(), &base.replace("horizons = [0, 1, 2, 3]", "horizons = []"));
    let o = iqc(&["--config", s(&empty), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon list is empty"));

    let garbled = write_config(dir.path(), &base.replace("w = 2", "w = "));
    assert_eq!(iqc(&["--config", s(&garbled)]).status.code(), Some(2));

    let shape = write_config(dir.path(), &base.replace("e = 1", "e = 2"));
    assert_eq!(iqc(&["--config", s(&shape)]).status.code(), Some(2));

    let bad_entry = write_config(dir.path(), &base.replace("\"1\",              \"0\"", "\"1/(z^2)\", \"0\""));
    assert_eq!(iqc(&["--config", s(&bad_entry)]).status.code(), Some(2));

    assert_eq!(iqc(&["--config", s(&dir.path().join("missing.toml"))]).status.code(), Some(2));
    assert_eq!(iqc(&["--config", s(&example()), "--classes", "sigmoid"]).status.code(), Some(2));
    assert!(!dir.path().join("results.json").exists());
}

#[test]
fn numerical_failure_needs_keep_going() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(example()).unwrap();
    let starved = write_config(dir.path(), &base.replace("lmi_margin = 1e-7", "max_iter = 1"));
    let args = ["--config", s(&starved), "--out", s(dir.path()), "--horizons", "0..1"];
    assert_eq!(iqc(&args).status.code(), Some(1));
    let mut keep = args.to_vec();
    keep.push("--keep-going");
    assert!(iqc(&keep).status.success());
    assert!(dir.path().join("results.json").exists());
}

#[test]
fn disconnected_config_runs_oracle_pass() {
    let out = tempfile::tempdir().unwrap();
    let cfg = repo().join("configs/disconnected.toml");
    let o = iqc(&["--config", s(&cfg), "--out", s(out.path())]);
    assert!(o.status.success());
    let results: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("results.json")).unwrap()).unwrap();
    for e in results["empirical"].as_array().unwrap() {
        assert_eq!(e["consistent"], true);
        assert!(e["lower_bound"].as_f64().unwrap() > 0.9 * e["certified"].as_f64().unwrap());
    }
}
