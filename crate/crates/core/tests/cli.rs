use std::path::Path;

use tempfile::TempDir;
use uavplan::cli::{main_with_args, METRICS_HEADER, SWEEP_HEADER, TRACE_HEADER};

fn small_config(dir: &Path, slots: usize) -> std::path::PathBuf {
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        format!(
            "[region]\nwidth = 150\nheight = 150\n[users]\ncount = 8\n[obstacles]\ncount = 4\n[sim]\nslots = {slots}\ncell_size = 2.0\n"
        ),
    )
    .unwrap();
    path
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_with_args(std::iter::once("uavplan").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn single_slot_run_writes_header_and_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 1);
    let out = dir.path().join("m.csv");
    let (code, stdout, _) = run_cli(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code, 0);
    assert!(stdout.contains("mean_sum_tput="));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], METRICS_HEADER.join(","));
    assert!(!text.contains('\r'));
    assert!(dir.path().join("m.config.toml").exists());
    assert!(dir.path().join("m.scenario.toml").exists());
}

#[test]
fn csv_columns_are_well_formed() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 6);
    let out = dir.path().join("m.csv");
    let trace = dir.path().join("t.csv");
    let (code, _, _) = run_cli(&["run", "--config", s(&cfg), "--out", s(&out), "--trace", s(&trace)]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), 7);
        for k in 0..6 {
            rec[k].parse::<f64>().unwrap();
        }
        let u: f64 = rec[2].parse().unwrap();
        let e: f64 = rec[3].parse().unwrap();
        let sum: f64 = rec[4].parse().unwrap();
        assert!((u + e - sum).abs() <= 1e-5 * sum.max(1.0));
    }
    let t = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(t.lines().next().unwrap(), TRACE_HEADER.join(","));
    assert_eq!(t.lines().count(), 7);
}

#[test]
fn missing_config_exits_1_naming_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = dir.path().join("m.csv");
    let (code, _, err) = run_cli(&["run", "--config", s(&missing), "--out", s(&out)]);
    assert_eq!(code, 1);
    assert!(err.contains("nope.toml"));
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn invalid_config_exits_1() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[uav]\nwarp = 9\n").unwrap();
    let out = dir.path().join("m.csv");
    assert_eq!(run_cli(&["run", "--config", s(&cfg), "--out", s(&out)]).0, 1);
}

#[test]
fn unwritable_output_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 1);
    let out = dir.path().join("no/such/dir/m.csv");
    assert_eq!(run_cli(&["run", "--config", s(&cfg), "--out", s(&out)]).0, 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 5);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(run_cli(&["run", "--config", s(&cfg), "--out", s(&a), "--seed", "4"]).0, 0);
    assert_eq!(run_cli(&["run", "--config", s(&cfg), "--out", s(&b), "--seed", "4"]).0, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn replay_reproduces_metrics() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 5);
    let out = dir.path().join("m.csv");
    assert_eq!(run_cli(&["run", "--config", s(&cfg), "--out", s(&out), "--algorithm", "baseline"]).0, 0);
    let scenario = dir.path().join("m.scenario.toml");
    let again = dir.path().join("elsewhere.csv");
    assert_eq!(run_cli(&["replay", "--scenario", s(&scenario), "--out", s(&again)]).0, 0);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());

    let text = std::fs::read_to_string(&scenario).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text.replacen("checksum = \"", "checksum = \"0", 1)).unwrap();
    assert_eq!(run_cli(&["replay", "--scenario", s(&bad), "--out", s(&again)]).0, 1);
    std::fs::write(&bad, text.replacen("schema_version = 1", "schema_version = 7", 1)).unwrap();
    let (code, _, err) = run_cli(&["replay", "--scenario", s(&bad), "--out", s(&again)]);
    assert_eq!(code, 1);
    assert!(err.contains("schema"));
}

#[test]
fn sweep_row_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 2);
    let out = dir.path().join("s.csv");
    let args = ["sweep", "--config", s(&cfg), "--param", "coverage_radius", "--values", "46", "--out", s(&out)];
    assert_eq!(run_cli(&args).0, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER.join(","));
    assert_eq!(text.lines().count(), 2);

    let mut with_base = args.to_vec();
    with_base.push("--compare-baseline");
    assert_eq!(run_cli(&with_base).0, 0);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);

    let vel = [
        "sweep", "--config", s(&cfg), "--param", "velocity", "--values", "1,2,3", "--seeds", "2", "--out", s(&out),
        "--compare-baseline",
    ];
    assert_eq!(run_cli(&vel).0, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<String>> =
        text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 12);
    for v in ["1", "2", "3"] {
        for seed in ["1", "2"] {
            for alg in ["proposed", "baseline"] {
                assert!(rows.iter().any(|r| r[1] == v && r[2] == seed && r[3] == alg));
            }
        }
    }
}

#[test]
fn sweep_rejects_invalid_values() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 2);
    let out = dir.path().join("s.csv");
    let (code, _, _) =
        run_cli(&["sweep", "--config", s(&cfg), "--param", "velocity", "--values", "50", "--out", s(&out)]);
    assert_eq!(code, 1);
}

#[test]
fn config_echo_parses_back_to_the_run_config() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), 1);
    let out = dir.path().join("m.csv");
    assert_eq!(run_cli(&["run", "--config", s(&cfg), "--out", s(&out), "--deterministic-fading"]).0, 0);
    let echo = std::fs::read_to_string(dir.path().join("m.config.toml")).unwrap();
    let parsed = uavplan::cli::parse_config(&echo).unwrap();
    assert_eq!(parsed.users.count, 8);
    assert_eq!(parsed.sim.fading_mode, uavplan::channel::FadingMode::Deterministic);
}
