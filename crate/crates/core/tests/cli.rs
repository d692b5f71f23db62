use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use roughfbm::cli::{parse_config, read_rate_csv, Command as Experiment, Format, SEED_ENV};

fn roughfbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughfbm"))
        .args(args)
        .env_remove(SEED_ENV)
        .output()
        .unwrap()
}

fn rate1(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["rate1", "--hurst", "0.3", "--m-min", "3", "--m-max", "6", "--out-dir"];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    roughfbm(&args)
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

#[test]
fn no_arguments_prints_usage() {
    let out = roughfbm(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn rate1_flags_fill_defaults() {
    let args = ["roughfbm", "rate1", "--hurst", "0.3", "--m-min", "3", "--m-max", "9", "--seed", "42"];
    let c = parse_config(args, None).unwrap().unwrap();
    assert_eq!(c.command, Experiment::Rate1);
    assert_eq!((c.hurst, c.m_min, c.m_max, c.seed), (0.3, 3, 9, 42));
    assert_eq!(c.d, 1);
    assert_eq!(c.format, Format::Both);
    assert!(c.validate().is_ok());
}

#[test]
fn hurst_outside_range_is_rejected() {
    let out = roughfbm(&["rate2", "--hurst", "0.2", "--p", "2.6"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hurst"));
}

#[test]
fn seed_from_environment_overrides_file_but_not_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "seed = 5\nhurst = 0.35\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let c = parse_config(["roughfbm", "rate1", "--config", cfg], Some("9")).unwrap().unwrap();
    assert_eq!((c.seed, c.hurst), (9, 0.35));
    let c = parse_config(["roughfbm", "rate1", "--config", cfg, "--seed", "3"], Some("9")).unwrap().unwrap();
    assert_eq!(c.seed, 3);
}

#[test]
fn csv_format_writes_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = rate1(dir.path(), &["--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(files(dir.path()), ["rate1.csv", "resolved_config.json"]);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(rate1(a.path(), &[]).status.code(), Some(0));
    assert_eq!(rate1(b.path(), &[]).status.code(), Some(0));
    for name in ["rate1.csv", "rate1.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
        assert_eq!(x.last(), Some(&b'\n'));
    }
    let resolved = fs::read_to_string(a.path().join("resolved_config.json")).unwrap();
    assert!(resolved.contains("config_sha256"));
}

#[test]
fn level_one_results_ignore_the_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    rate1(a.path(), &["--seed", "1"]);
    rate1(b.path(), &["--seed", "2"]);
    let rows = |d: &Path| read_rate_csv(fs::File::open(d.join("rate1.csv")).unwrap()).unwrap();
    assert_eq!(rows(a.path()), rows(b.path()));
    let header = fs::read_to_string(a.path().join("rate1.csv")).unwrap();
    assert!(header.starts_with("# version="));
    assert!(header.contains("# seed=1\n"));
}

#[test]
fn csv_round_trips_against_json() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rate1(dir.path(), &[]).status.code(), Some(0));
    let rows = read_rate_csv(fs::File::open(dir.path().join("rate1.csv")).unwrap()).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rate1.json")).unwrap()).unwrap();
    let report = &json["report"];
    let errors = report["errors"].as_array().unwrap();
    assert_eq!(rows.len(), errors.len());
    for (row, e) in rows.iter().zip(errors) {
        assert_eq!(row.error.to_bits(), e.as_f64().unwrap().to_bits());
        assert_eq!(row.log2_error.to_bits(), row.error.log2().to_bits());
        assert_eq!(row.slope.to_bits(), report["slope"].as_f64().unwrap().to_bits());
        assert_eq!(row.hurst, 0.3);
        assert_eq!(row.p, None);
    }
    assert_eq!(rows.iter().map(|r| r.m).collect::<Vec<_>>(), [3, 4, 5, 6]);
}

#[test]
fn exit_codes_follow_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let path = |s: &str| dir.path().join(s).to_str().unwrap().to_string();

    let bad = path("bad.cfg");
    fs::write(&bad, "bogus = 1\n").unwrap();
    assert_eq!(roughfbm(&["rate1", "--config", &bad]).status.code(), Some(2));

    let blocker = path("file");
    fs::write(&blocker, "").unwrap();
    let out = rate1(Path::new(&format!("{blocker}/sub")), &[]);
    assert_eq!(out.status.code(), Some(3));

    // Few streams and levels: the per-stream monotonicity check fails.
    let out = roughfbm(&[
        "dp-conv", "--hurst", "0.4", "--p", "2.6", "--m-min", "2", "--m-max", "4", "--m-ref", "8",
        "--n-samples", "20", "--grid-level", "6", "--out-dir", &path("dp"),
    ]);
    assert_eq!(out.status.code(), Some(1));

    // An unreachable refinement tolerance flags every stream.
    let out = roughfbm(&[
        "rate2", "--hurst", "0.4", "--m-min", "2", "--m-max", "4", "--m-ref", "8", "--n-samples", "10",
        "--grid-level", "6", "--refine-tol", "1e-12", "--out-dir", &path("r2"),
    ]);
    assert_eq!(out.status.code(), Some(4));
}
