use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use necklab_cli::config::parse_config;
use necklab_cli::output::read_summary;

fn necklab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_necklab"))
        .args(args)
        .env_remove("NECKLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn beta_outside_unit_interval_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[neck]\nbetas = [0.5, 1.5]\n");
    let o = necklab(&["neck-suite", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("neck.betas") && e.contains("β = 1.5") && e.contains("(0, 1)"), "{e}");
}

#[test]
fn unknown_keys_and_sections_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[annulus]\nmoduli = [4]\nwidth = 3\n[extra]\nx = 1\n");
    let o = necklab(&["annulus-spectrum", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("annulus.width") && e.contains("extra"), "{e}");
}

#[test]
fn missing_config_file_is_an_error() {
    let o = necklab(&["lorentz", "--config", "/nonexistent/necklab.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_thread_env_is_an_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_necklab"))
        .args(["series-check"])
        .env("NECKLAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("NECKLAB_THREADS"));
}

#[test]
fn csv_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "small.toml",
        "[run]\nseed = 7\n[series]\ninstances = 50\nmax_len = 4\n[harmonic]\nn_s = 32\nn_theta = 16\nmodes = 3\n",
    );
    for cmd in ["series-check", "harmonic-split"] {
        let (a, b) = (dir.path().join(format!("{cmd}-a")), dir.path().join(format!("{cmd}-b")));
        for out in [&a, &b] {
            let o = necklab(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
            assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{}", stderr(&o));
        }
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for n in names.iter().filter(|n| n.to_string_lossy().ends_with(".csv")) {
            assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{cmd}/{n:?}");
        }
    }
}

#[test]
fn summary_round_trips_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[run]\nseed = 11\n[lorentz]\nmoduli = [4]\nn_s = 32\nn_theta = 16\n";
    let cfg = write(dir.path(), "l.toml", text);
    let out = dir.path().join("out");
    let o = necklab(&["lorentz", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.code().is_some_and(|c| c < 2), "{}", stderr(&o));
    let s = read_summary(&out.join("summary.json")).unwrap();
    let mut expect = parse_config(text).unwrap();
    expect.command = Some("lorentz".into());
    expect.threads = 1;
    expect.out = Some(out.display().to_string());
    assert_eq!(s.config, expect);
    assert_eq!(s.command, "lorentz");
    assert_eq!(s.tables, vec!["lorentz.csv".to_string()]);
    let csv = fs::read_to_string(out.join("lorentz.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn empty_sweep_gives_header_only_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", "[lorentz]\nmoduli = []\n");
    let out = dir.path().join("out");
    let o = necklab(&["lorentz", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.code().is_some_and(|c| c < 2), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("lorentz.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("eta,delta,modulus,"));
}

#[test]
fn tables_go_to_stdout_without_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "[series]\ninstances = 20\nmax_len = 3\n");
    let o = necklab(&["series-check", "--config", &cfg]);
    let out = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(out.starts_with("suite,checks,violations,rejected,worst_slack\n"), "{out}");
    assert!(stderr(&o).contains("PASS randomized_violations"));
}

/// Default runs of the cheaper commands reproduce their pinned constants.
#[test]
fn default_runs_match_regression_table() {
    for cmd in ["annulus-spectrum", "lorentz", "harmonic-split", "series-check", "index"] {
        let dir = tempfile::tempdir().unwrap();
        let o = necklab(&[cmd, "--out", dir.path().to_str().unwrap()]);
        let s = read_summary(&dir.path().join("summary.json")).unwrap();
        let pins: Vec<_> = s.checks.iter().filter(|c| c.name.starts_with("regression.")).collect();
        assert!(!pins.is_empty(), "{cmd}: no pinned constants compared");
        for c in &pins {
            assert!(c.passed, "{cmd} {}: {}", c.name, c.detail);
        }
        assert_eq!(o.status.code(), Some(if s.passed { 0 } else { 1 }));
    }
}
