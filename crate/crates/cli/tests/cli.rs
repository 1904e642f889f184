use std::path::Path;
use std::process::{Command, Output};

use almostq::io::{BoxFile, CertificateFile, FunctionalFile, Sense};
use almostq::quantum::SeparationWitness;
use almostq::{pr_box_2222, BellFunctional, Box64, Scenario};
use tempfile::TempDir;

fn almostq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_almostq")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_box(dir: &Path, name: &str, b: &Box64) -> String {
    let p = dir.join(name);
    BoxFile::from_box(b).write(&p).unwrap();
    p.to_str().unwrap().to_owned()
}

fn write_functional(dir: &Path, name: &str, f: &BellFunctional, sense: Sense) -> String {
    let p = dir.join(name);
    FunctionalFile::from_functional(f, sense).write(&p).unwrap();
    p.to_str().unwrap().to_owned()
}

fn printed_value(out: &Output) -> f64 {
    let text = stdout(out);
    let line = text.lines().find(|l| l.starts_with("maximum:") || l.starts_with("minimum:")).expect("value line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let witness = write_box(dir.path(), "witness.json", &SeparationWitness::new().point);
    let pr = write_box(dir.path(), "pr.json", &pr_box_2222());
    assert_eq!(code(&almostq(&["check", &witness, "--level", "aq"])), 0);
    assert_eq!(code(&almostq(&["check", &pr, "--level", "aq"])), 1);
    assert_eq!(code(&almostq(&["check", &pr, "--level", "q1"])), 1);
    assert_eq!(code(&almostq(&["check", &pr, "--level", "local"])), 1);
    let uniform = write_box(dir.path(), "u.json", &Box64::uniform(Scenario::chsh()));
    assert_eq!(code(&almostq(&["check", &uniform, "--level", "local"])), 0);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"parties\": 2, \"inputs\": [2, 2]").unwrap();
    assert_eq!(code(&almostq(&["check", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&almostq(&["check", dir.path().join("missing.json").to_str().unwrap()])), 2);
}

#[test]
fn check_emits_a_certificate() {
    let dir = TempDir::new().unwrap();
    let witness = write_box(dir.path(), "witness.json", &SeparationWitness::new().point);
    let cert = dir.path().join("cert.json");
    let report = dir.path().join("report.json");
    let out =
        almostq(&["check", &witness, "--emit-certificate", cert.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let c = CertificateFile::read(&cert).unwrap();
    assert_eq!(c.index.len(), 9);
    assert!(c.psd_margin > 0.0);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert!(r["settings"]["feas_tol"].is_number());
}

#[test]
fn bell_values() {
    let dir = TempDir::new().unwrap();
    let chsh = write_functional(dir.path(), "chsh.json", &BellFunctional::chsh(), Sense::Max);
    let box_out = dir.path().join("opt.json");
    let out = almostq(&["bell", &chsh, "--level", "aq", "--out", box_out.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!((printed_value(&out) - 2.0 * 2f64.sqrt()).abs() < 1e-4);
    let opt = BoxFile::read(&box_out).unwrap().to_box().unwrap();
    assert!((BellFunctional::chsh().evaluate(&opt).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-4);

    assert!((printed_value(&almostq(&["bell", &chsh, "--level", "local"])) - 2.0).abs() < 1e-8);
    assert!((printed_value(&almostq(&["bell", &chsh, "--level", "ns"])) - 4.0).abs() < 1e-6);

    let zero = write_functional(dir.path(), "zero.json", &BellFunctional::zero(Scenario::chsh()), Sense::Min);
    assert!(printed_value(&almostq(&["bell", &zero, "--level", "q1"])).abs() < 1e-7);

    let w = SeparationWitness::new();
    let bar = write_functional(dir.path(), "bar.json", &w.bell, Sense::Min);
    let v = printed_value(&almostq(&["bell", &bar, "--level", "aq"]));
    // the minimum lies below the witness point's value
    assert!(v <= w.bell.evaluate(&w.point).unwrap() + 1e-7, "{v}");
}

#[test]
fn wire_identity_and_composition() {
    let dir = TempDir::new().unwrap();
    let witness = SeparationWitness::new().point;
    let path = write_box(dir.path(), "w.json", &witness);
    let spec = dir.path().join("id.json");
    std::fs::write(&spec, serde_json::to_string(&almostq::WiringSpec::identity(&Scenario::chsh())).unwrap()).unwrap();
    let out_path = dir.path().join("out.json");
    let out = almostq(&["wire", &path, "--spec", spec.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let back = BoxFile::read(&out_path).unwrap();
    assert!(back.probabilities.iter().zip(witness.table()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let out = almostq(&["wire", &path, &path, "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(BoxFile::read(&out_path).unwrap().parties, 4);

    let det = Box64::deterministic(Scenario::chsh(), &[vec![0, 0], vec![0, 0]]).unwrap();
    let det_path = write_box(dir.path(), "d.json", &det);
    let out = almostq(&["wire", &det_path, "--post-select", "0:0:1"]);
    assert_eq!(code(&out), 2);
    let out = almostq(&["wire", &det_path, "--post-select", "0:0:0", "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(BoxFile::read(&out_path).unwrap().parties, 1);
}

#[test]
fn lo_and_sample() {
    let dir = TempDir::new().unwrap();
    let sample = dir.path().join("s.json");
    assert_eq!(code(&almostq(&["sample", "--seed", "3", "--out", sample.to_str().unwrap()])), 0);
    assert_eq!(code(&almostq(&["check", sample.to_str().unwrap(), "--level", "q1"])), 0);
    assert_eq!(code(&almostq(&["lo", sample.to_str().unwrap()])), 0);

    let pr = pr_box_2222::<f64>();
    let pp = write_box(dir.path(), "pp.json", &almostq::wirings::compose(&pr, &pr).unwrap());
    let out = almostq(&["lo", &pp, "--max-clique", "8"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("1.25"));
}

#[test]
fn repro_chsh_report() {
    let dir = TempDir::new().unwrap();
    let out = almostq(&["repro", "chsh", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("chsh.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(r["items"].as_array().unwrap().len(), 4);
    assert_eq!(code(&almostq(&["repro", "nonsense"])), 2);
    assert_eq!(code(&almostq(&["repro", "separation", "--grid", "8"])), 2);
}

#[test]
fn repro_noise_table() {
    let out = almostq(&["repro", "noise-table"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("0.652"));
}
