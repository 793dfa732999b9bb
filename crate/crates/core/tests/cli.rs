use std::process::Command;

fn ringloc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ringloc")).args(args).output().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "tau = -1.0\n").unwrap();
    let out = ringloc(&["--config", bad.to_str().unwrap(), "localize", "nothing.txt"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[sensor]\nlasers = 3\n").unwrap();
    assert_eq!(ringloc(&["--config", unknown.to_str().unwrap(), "train", "m.txt"]).status.code(), Some(2));

    let missing = dir.path().join("missing.txt");
    let out = ringloc(&["--out", dir.path().to_str().unwrap(), "build-map", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));
}

#[test]
fn help_lists_every_command() {
    let out = ringloc(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["simulate", "train", "build-map", "evaluate", "recognize", "localize"] {
        assert!(text.contains(cmd), "{cmd} missing from\n{text}");
    }
}
