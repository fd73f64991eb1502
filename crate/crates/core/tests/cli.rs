use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaoscycle"))
}

#[test]
fn run_cycle_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fs3");
    let status = cli()
        .args(["--seed", "7", "run-cycle", "--scenario", "FS3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let summary = String::from_utf8(status.stdout).unwrap();
    assert!(summary.contains("FS3-canonical"));
    let analysed = cli().arg("analyze").arg(&out).output().unwrap();
    assert!(analysed.status.success());
    let written = std::fs::read(out.join("report.json")).unwrap();
    assert_eq!(analysed.stdout, written);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env");
    let status = cli()
        .env("CHAOSCYCLE_OUT", &out)
        .args(["--recovery", "off", "run-cycle"])
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn list_pool_and_bad_arguments() {
    let listed = cli().args(["list-pool", "--scenario", "FS4"]).output().unwrap();
    assert!(listed.status.success());
    let text = String::from_utf8(listed.stdout).unwrap();
    assert!(!text.is_empty() && text.lines().all(|l| l.starts_with("FS4-")));
    let bad = cli().args(["run-cycle", "--scenario", "FS9"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FS9"));
}
