use std::process::Command;

fn bolab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bolab"))
}

#[test]
fn identities_pass_and_write_summary() {
    let dir = tempfile::tempdir().unwrap();
    let status = bolab()
        .args(["identities", "--threads", "2", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("identities/summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert!(dir.path().join("identities/timing.json").exists());
    assert!(dir.path().join("identities/plot.gp").exists());
}

#[test]
fn failed_check_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("coarse.cfg");
    std::fs::write(&cfg, "# too short a period for the soliton tail\nn_points = 256\ndomain_length = 32\n").unwrap();
    let status = bolab()
        .args(["identities", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "no_such_key = 3\n").unwrap();
    let out = bolab().args(["identities", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    let out = bolab().args(["spectrum", "--threads", "0"]).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(bolab().arg("not-a-command").status().unwrap().code(), Some(2));
}
