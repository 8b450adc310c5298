use std::path::Path;
use std::process::{Command, Output};

fn ionsculpt(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionsculpt"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("IONSCULPT_CUTOFF")
        .output()
        .expect("binary runs")
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split('\t').map(String::from).collect();
    let rows = lines.map(|l| l.split('\t').map(String::from).collect()).collect();
    (header, rows)
}

fn cell(header: &[String], row: &[String], name: &str) -> f64 {
    let i = header.iter().position(|h| h == name).unwrap();
    row[i].parse().unwrap()
}

#[test]
fn ideal_reports_the_four_mode_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = ionsculpt(dir.path(), &["ideal", "--n", "2"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.948683298051"), "{stdout}");
    let (h, rows) = table(&dir.path().join("ideal.tsv"));
    assert_eq!(rows.len(), 1);
    assert!((cell(&h, &rows[0], "success_uncorrected") - 0.3125).abs() < 1e-12);
    assert!((cell(&h, &rows[0], "success_corrected") - 0.125).abs() < 1e-12);

    let out = ionsculpt(dir.path(), &["ideal", "--n", "1"]);
    assert!(out.status.success());
    let (h, rows) = table(&dir.path().join("ideal.tsv"));
    assert_eq!(cell(&h, &rows[0], "fidelity"), 1.0);
    assert_eq!(cell(&h, &rows[0], "success_uncorrected"), 1.0);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ionsculpt(dir.path(), &["ideal", "--n", "0"]).status.code(), Some(1));
    assert_eq!(ionsculpt(dir.path(), &["gates"]).status.code(), Some(1));
    assert_eq!(ionsculpt(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        ionsculpt(dir.path(), &["--profile", "nope", "ideal"]).status.code(),
        Some(1)
    );
    assert_eq!(ionsculpt(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_is_strict_and_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[experiment]\ncutof = 5\n").unwrap();
    let out = ionsculpt(dir.path(), &["--config", bad.to_str().unwrap(), "ideal"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cutof"));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "gates = \"ideal\"\n[experiment]\ncutoff = 6\n").unwrap();
    let out = ionsculpt(dir.path(), &["--config", good.to_str().unwrap(), "protocol"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("protocol.tsv")).unwrap();
    assert!(text.contains("\"cutoff\":6"));

    // flags beat the file, the environment sits in between
    let out = Command::new(env!("CARGO_BIN_EXE_ionsculpt"))
        .args(["--config", good.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .args(["protocol"])
        .env("IONSCULPT_CUTOFF", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("protocol.tsv")).unwrap();
    assert!(text.contains("\"cutoff\":7"));
    let out = Command::new(env!("CARGO_BIN_EXE_ionsculpt"))
        .args(["--config", good.to_str().unwrap(), "--cutoff", "8", "--out"])
        .arg(dir.path())
        .args(["protocol"])
        .env("IONSCULPT_CUTOFF", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("protocol.tsv")).unwrap();
    assert!(text.contains("\"cutoff\":8"));
}

#[test]
fn ideal_protocol_and_noisemap_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = ionsculpt(
        dir.path(),
        &["--gates", "ideal", "protocol", "--scenario", "without-ia"],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("protocol.tsv")).unwrap();
    assert!(text.contains("# success_probability: 0.125\n"));
    let (h, rows) = table(&dir.path().join("protocol.tsv"));
    let gates: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(gates, ["B12", "B34", "B13", "B24", "S3", "S4", "RSB2"]);
    let p: f64 = rows.iter().map(|r| cell(&h, r, "branch_probability")).product();
    assert!((p - 0.125).abs() < 1e-10);

    let out = ionsculpt(
        dir.path(),
        &["--gates", "ideal", "noisemap", "--grid", "3", "--scenario", "with-ia"],
    );
    assert!(out.status.success());
    let (h, rows) = table(&dir.path().join("noisemap.tsv"));
    assert_eq!(rows.len(), 9);
    for name in [
        "xi_gamma",
        "xi_kappa",
        "coupling_mode",
        "fidelity",
        "rho11",
        "rho22",
        "rho12_re",
        "rho12_im",
    ] {
        assert!(h.iter().any(|c| c == name), "{name}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("noisemap.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["points"].as_array().unwrap().len(), 9);
    assert_eq!(json["config"]["profile"], "paper-2022");
}

#[test]
fn outputs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    // same resolved configuration, including the output directory
    let run = |workers: &str| {
        let out = ionsculpt(
            a.path(),
            &["--workers", workers, "gates", "rsb", "--points", "4", "--noise", "0"],
        );
        assert!(out.status.success());
        std::fs::read(a.path().join("rsb.tsv")).unwrap()
    };
    let first = run("1");
    let second = run("1");
    assert_eq!(first, second);

    let out = ionsculpt(b.path(), &["entanglement", "--points", "7"]);
    assert!(out.status.success());
    let e1 = std::fs::read(b.path().join("entanglement.tsv")).unwrap();
    let out = ionsculpt(b.path(), &["entanglement", "--points", "7"]);
    assert!(out.status.success());
    assert_eq!(e1, std::fs::read(b.path().join("entanglement.tsv")).unwrap());
    let text = String::from_utf8(e1).unwrap();
    assert!(text.starts_with("# ionsculpt "));
    assert!(text.contains("# config: {"));
}

#[test]
fn rsb_table_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = ionsculpt(
        dir.path(),
        &["gates", "rsb", "--theta-max", "3.14", "--points", "3", "--noise", "0"],
    );
    assert!(out.status.success());
    let (h, rows) = table(&dir.path().join("rsb.tsv"));
    for name in ["theta", "infidelity", "pop_e0", "pop_g1"] {
        assert!(h.iter().any(|c| c == name));
    }
    assert_eq!(rows.len(), 3);
    assert_eq!(cell(&h, &rows[0], "infidelity"), 0.0);
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = ionsculpt(&blocker.join("sub"), &["ideal"]);
    assert!(!out.status.success());
}
