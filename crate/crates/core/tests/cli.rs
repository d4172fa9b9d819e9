use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_foliated-trace"))
}

#[test]
fn periods_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let status = cli()
            .args(["periods", "--preset", "circle-in-t3", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("periods.csv")).unwrap()
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    assert!(String::from_utf8(first)
        .unwrap()
        .starts_with("t,v,|w|,d_j,sigma_j,Re(alpha0),Im(alpha0),density_mass\n"));
}

#[test]
fn refuses_to_overwrite_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let args = |extra: &[&str]| {
        let mut c = cli();
        c.args(["periods", "--out"]).arg(dir.path()).args(extra);
        c.status().unwrap()
    };
    assert!(args(&[]).success());
    assert_eq!(args(&[]).code(), Some(2));
    assert!(args(&["--overwrite"]).success());
}

#[test]
fn bad_config_exits_with_error_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "version = 1\nname = \"x\"\nunknown = 3\n").unwrap();
    let out = cli()
        .args(["periods", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn compare_reports_all_pass_on_product() {
    let out = cli()
        .args(["compare", "--preset", "product"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("all_pass = true"));
}
