use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cvqkd");

fn cvqkd(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .envs(
            std::env::vars()
                .filter(|(k, _)| k.starts_with("CVQKD_"))
                .map(|(k, _)| (k, String::new())),
        )
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const MC_CONFIG: &str = r#"
mode = "mc"
distance_km = 2
epr_variance = 20
block_size = 1e8
mc_signals = 20000
delta = 0.05
round_dump = "rounds.csv"
"#;

#[test]
fn three_point_sweep_gives_header_and_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = cvqkd(
        dir.path(),
        &[
            "sweep",
            "--param",
            "distance_km",
            "--from",
            "1",
            "--to",
            "3",
            "--steps",
            "3",
            "--mode",
            "collective",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("axis,key_rate_bits_per_use,plob,abort_reason"));
    assert!(lines[1].starts_with("1.0,"));
}

#[test]
fn mc_run_is_deterministic_and_writes_round_dump() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "mc.toml", MC_CONFIG);
    let args = [
        "run", "--config", "mc.toml", "--seed", "7", "--output", "a.csv",
    ];
    let first = cvqkd(dir.path(), &args);
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let dump_a = std::fs::read(dir.path().join("rounds.csv")).unwrap();
    let out_a = std::fs::read(dir.path().join("a.csv")).unwrap();

    let second = cvqkd(dir.path(), &args);
    assert!(second.status.success());
    assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), out_a);
    assert_eq!(
        std::fs::read(dir.path().join("rounds.csv")).unwrap(),
        dump_a
    );

    let dump = String::from_utf8(dump_a).unwrap();
    assert_eq!(dump.lines().next().unwrap(), "index,q_a,q_b,x_a,x_b,role");
    assert_eq!(dump.lines().count(), 20_001);

    let other = cvqkd(
        dir.path(),
        &[
            "run", "--config", "mc.toml", "--seed", "8", "--output", "b.csv",
        ],
    );
    assert!(other.status.success());
    assert_ne!(std::fs::read(dir.path().join("b.csv")).unwrap(), out_a);
}

#[test]
fn json_and_svg_formats() {
    let dir = tempfile::tempdir().unwrap();
    let json = cvqkd(
        dir.path(),
        &[
            "sweep",
            "--param",
            "distance_km",
            "--from",
            "0",
            "--to",
            "4",
            "--steps",
            "3",
            "--format",
            "json",
        ],
    );
    assert!(
        json.status.success(),
        "{}",
        String::from_utf8_lossy(&json.stderr)
    );
    let value: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(value["axis_name"], "distance_km");
    assert_eq!(value["rows"].as_array().unwrap().len(), 3);

    let svg = cvqkd(
        dir.path(),
        &[
            "sweep",
            "--param",
            "distance_km",
            "--from",
            "0",
            "--to",
            "4",
            "--steps",
            "3",
            "--format",
            "svg",
            "--output",
            "plot.svg",
        ],
    );
    assert!(svg.status.success());
    let text = std::fs::read_to_string(dir.path().join("plot.svg")).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert!(text.trim_end().ends_with("</svg>"));
}

#[test]
fn environment_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        "mode = \"collective\"\ndistance_km = 1\n",
    );
    let base = cvqkd(dir.path(), &["run", "--config", "c.toml"]);
    let overridden = Command::new(BIN)
        .current_dir(dir.path())
        .args(["run", "--config", "c.toml"])
        .env("CVQKD_DISTANCE_KM", "10")
        .output()
        .unwrap();
    assert!(
        overridden.status.success(),
        "{}",
        String::from_utf8_lossy(&overridden.stderr)
    );
    let axis = |o: &Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .nth(1)
            .unwrap()
            .to_string()
    };
    assert_ne!(axis(&base), axis(&overridden));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "bad.toml",
        "distance_km = 3\nexcess_nosie = 0.1\n",
    );
    let out = cvqkd(dir.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("excess_nosie") && stderr.contains("line 2"),
        "{stderr}"
    );

    write(dir.path(), "neg.toml", "distance_km = -1\n");
    assert_eq!(
        cvqkd(dir.path(), &["run", "--config", "neg.toml"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn all_points_aborting_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // A high-variance source cannot pass the energy test.
    write(
        dir.path(),
        "abort.toml",
        "mode = \"mc\"\ndistance_km = 5\nblock_size = 1e8\nmc_signals = 20000\ndelta = 0.05\n",
    );
    let out = cvqkd(dir.path(), &["run", "--config", "abort.toml"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("energy-test-failed"));
}

#[test]
fn io_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        cvqkd(dir.path(), &["run", "--config", "missing.toml"])
            .status
            .code(),
        Some(4)
    );
    write(dir.path(), "c.toml", "mode = \"collective\"\n");
    let out = cvqkd(
        dir.path(),
        &[
            "run",
            "--config",
            "c.toml",
            "--output",
            "no/such/dir/out.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
}
