use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::io::Write;

fn ebake(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebake"))
        .current_dir(dir)
        .env_remove("EBAKE_CONFIG")
        .args(args)
        .output()
        .expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Fingerprints printed as "<label> SK fingerprint <hex>".
fn fingerprints(out: &str) -> Vec<String> {
    out.lines()
        .filter_map(|l| l.split_once(" SK fingerprint ").map(|(_, f)| f.trim().to_owned()))
        .collect()
}

fn provisioned() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    for args in [&["--seed", "1", "ta", "init"][..], &["--seed", "1", "ta", "register", "A"], &["--seed", "1", "ta", "register", "B"]] {
        let o = ebake(d.path(), args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    d
}

#[test]
fn init_and_register_write_registry_and_credentials() {
    let d = provisioned();
    let reg: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("ebake-registry.json")).unwrap()).unwrap();
    assert_eq!(reg["devices"].as_array().unwrap().len(), 2);
    assert_eq!(reg["schema_version"], 1);
    for f in ["A.json", "B.json"] {
        let p = d.path().join("credentials").join(f);
        assert!(p.is_file());
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            assert_eq!(std::fs::metadata(&p).unwrap().permissions().mode() & 0o777, 0o600);
        }
    }
}

#[test]
fn duplicate_registration_is_a_usage_error() {
    let d = provisioned();
    let o = ebake(d.path(), &["ta", "register", "A"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("identity exists"));
}

#[test]
fn missing_registry_fails() {
    let d = tempfile::tempdir().unwrap();
    let o = ebake(d.path(), &["ta", "register", "A"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ta init"));
}

#[test]
fn honest_handshake_prints_matching_fingerprints() {
    let d = provisioned();
    let o = ebake(d.path(), &["--seed", "5", "handshake", "--initiator", "credentials/A.json", "--responder", "B"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let f = fingerprints(&out);
    assert_eq!(f.len(), 2);
    assert_eq!(f[0], f[1]);
    assert_eq!(f[0].len(), 8);
    assert!(out.contains("ebake/session/"));
    assert!(out.contains("sym=2 asym=4 hash=11 xor=2"));
}

#[test]
fn serve_runs_scripted_handshakes() {
    let d = provisioned();
    let mut child = Command::new(env!("CARGO_BIN_EXE_ebake"))
        .current_dir(d.path())
        .env_remove("EBAKE_CONFIG")
        .args(["ta", "serve"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"A B\nB A\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let f = fingerprints(&stdout(&o));
    assert_eq!(f.len(), 4);
    assert_eq!(f[0], f[1]);
    assert_eq!(f[2], f[3]);
    assert_ne!(f[0], f[2]);
}

#[test]
fn das_handshake_succeeds() {
    let d = tempfile::tempdir().unwrap();
    let o = ebake(d.path(), &["--seed", "2", "handshake", "--scheme", "das", "--initiator", "A", "--responder", "B"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = fingerprints(&stdout(&o));
    assert_eq!(f.len(), 2);
    assert_eq!(f[0], f[1]);
}

#[test]
fn zero_window_fails_at_first_check() {
    let d = provisioned();
    let o = ebake(d.path(), &["--delta-ms", "0", "handshake", "--initiator", "A", "--responder", "B"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("step 2 (TA verifies M1)"), "{}", stderr(&o));
}

#[test]
fn tampered_credentials_are_refused() {
    let d = provisioned();
    let p = d.path().join("credentials/A.json");
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    v["route"] = serde_json::json!("0000000000000000");
    std::fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
    let o = ebake(d.path(), &["handshake", "--initiator", "A", "--responder", "B"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn attack_reports() {
    let d = tempfile::tempdir().unwrap();
    let o = ebake(d.path(), &["--seed", "4", "attack", "run", "mitm", "--scheme", "das", "--report", "das.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("das.json")).unwrap()).unwrap();
    assert_eq!(r["outcome"], "success");
    let o = ebake(d.path(), &["--seed", "4", "attack", "run", "mitm", "--scheme", "ebake"]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["outcome"], "failure");
    let o = ebake(d.path(), &["attack", "run", "teleport"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_reports_counts() {
    let d = tempfile::tempdir().unwrap();
    let o = ebake(d.path(), &["bench", "run", "--scheme", "ebake", "--output", "json", "--iterations", "20", "--handshakes", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for (k, v) in [("sym", 2), ("asym", 4), ("hash", 11), ("xor", 2)] {
        assert_eq!(r["total"][k], v, "{k}");
    }
    let o = ebake(d.path(), &["bench", "run", "--scheme", "das", "--iterations", "20", "--handshakes", "3"]);
    let t = stdout(&o);
    assert!(t.contains("| Total |") && t.contains("12T_pm + 12T_h + 4T_pa"), "{t}");
}

#[test]
fn config_file_env_and_flag_precedence() {
    let d = provisioned();
    std::fs::write(d.path().join("cfg.toml"), "delta_ms = 0\nblock_ms = 1000\n").unwrap();
    let run = |extra: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_ebake"))
            .current_dir(d.path())
            .env("EBAKE_CONFIG", "cfg.toml")
            .args(extra)
            .args(["handshake", "--initiator", "A", "--responder", "B"])
            .output()
            .unwrap()
    };
    assert_eq!(run(&[]).status.code(), Some(2), "file sets Δ = 0");
    assert_eq!(run(&["--delta-ms", "5000", "--block-ms", "86400000"]).status.code(), Some(0), "flags win");
}

#[test]
fn live_mqtt_is_a_transport_failure() {
    let d = provisioned();
    std::fs::write(d.path().join("mqtt.toml"), "[transport]\nmode = \"live-mqtt\"\nhost = \"broker\"\n").unwrap();
    let o = ebake(d.path(), &["--config", "mqtt.toml", "handshake", "--initiator", "A", "--responder", "B"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_flags_exit_with_usage() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(ebake(d.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(ebake(d.path(), &["--help"]).status.code(), Some(0));
}
