use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionoline"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, idx: usize) -> Vec<String> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(idx).unwrap().to_owned())
        .collect()
}

#[test]
fn impedance_writes_seven_curves() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["impedance"]);
    let csv = read(tmp.path(), "impedance.csv");
    let lengths = column(&csv, 0);
    assert_eq!(lengths.len(), 7 * 476);
    for l in ["0.2", "1.4"] {
        assert_eq!(lengths.iter().filter(|x| *x == l).count(), 476);
    }
    let plateau: f64 = csv
        .lines()
        .find(|l| l.starts_with("1.4,100000,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((plateau / 20_000.0 - 1.0).abs() < 0.05, "{plateau}");
    assert_eq!(
        read(tmp.path(), "impedance.svg")
            .matches("<polyline")
            .count(),
        7
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&read(tmp.path(), "impedance.manifest.json")).unwrap();
    assert_eq!(manifest["subcommand"], "impedance");
    assert_eq!(
        manifest["outputs"],
        serde_json::json!(["impedance.csv", "impedance.svg"])
    );
}

#[test]
fn empty_length_list_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        run(tmp.path(), &["impedance", "--lengths", ""])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn freqresponse_runs_share_grid() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["freqresponse", "--format", "csv"]);
    ok(
        tmp.path(),
        &["freqresponse", "--conditioned", "--format", "csv"],
    );
    let bare = read(tmp.path(), "freqresponse_unconditioned.csv");
    let cond = read(tmp.path(), "freqresponse_conditioned.csv");
    assert_eq!(column(&bare, 0), column(&cond, 0));
    for line in bare.lines().skip(1) {
        let (f, g) = line.split_once(',').unwrap();
        let (f, g): (f64, f64) = (f.parse().unwrap(), g.parse().unwrap());
        if (f / 1.0e7 - 1.0).abs() < 1e-6 {
            assert!(g < 0.1, "{g}");
        }
    }
    for line in cond.lines().skip(1) {
        let (f, g) = line.split_once(',').unwrap();
        let (f, g): (f64, f64) = (f.parse().unwrap(), g.parse().unwrap());
        if f <= 1.0e7 * (1.0 + 1e-9) {
            assert!(g >= 0.95, "{f}: {g}");
        }
    }
    assert!(!tmp.path().join("out/freqresponse_conditioned.svg").exists());
}

#[test]
fn conditioned_matrix_loses_nothing() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["linkmatrix", "--conditioned"]);
    let csv = read(tmp.path(), "linkmatrix_conditioned.csv");
    let lost = column(&csv, 5);
    assert_eq!(lost.len(), 42);
    assert!(lost.iter().all(|x| x == "0"));
}

#[test]
fn knob_prints_led_index() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(ok(tmp.path(), &["knob", "512"]).trim(), "6");
    assert_eq!(read(tmp.path(), "knob.csv"), "pot_value,led_index\n512,6\n");
    assert_eq!(run(tmp.path(), &["knob", "1024"]).status.code(), Some(2));
    assert_eq!(run(tmp.path(), &["knob", "-3"]).status.code(), Some(2));
}

#[test]
fn battery_trace_has_ten_half_cycles() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(tmp.path(), &["battery"]);
    assert!(stdout.starts_with("10 half-cycles"), "{stdout}");
    let csv = read(tmp.path(), "battery.csv");
    assert!(csv.starts_with("t_s,soc,voltage_v,current_a,phase\n"));
    let phases = column(&csv, 4);
    let runs = 1 + phases.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(runs, 10);
    assert_eq!(
        run(tmp.path(), &["battery", "--current", "0.5"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn power_cut_scenario_switches_once() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("cut.txt"),
        "# right loses power\n10 inject power_off right\n",
    )
    .unwrap();
    ok(tmp.path(), &["duplex", "cut.txt"]);
    let csv = read(tmp.path(), "duplex.csv");
    assert!(csv.starts_with("t_s,node,event\n"));
    let switches: Vec<&str> = csv
        .lines()
        .filter(|l| l.ends_with(",mode_switch"))
        .collect();
    assert_eq!(switches, ["13.208333336,left,mode_switch"]);
}

#[test]
fn duplex_input_errors_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        run(tmp.path(), &["duplex", "missing.txt"]).status.code(),
        Some(2)
    );
    fs::write(tmp.path().join("bad.txt"), "10 inject explode left\n").unwrap();
    assert_eq!(
        run(tmp.path(), &["duplex", "bad.txt"]).status.code(),
        Some(2)
    );
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [a.path(), b.path()] {
        ok(
            dir,
            &["linkmatrix", "--lengths", "0.4,1.0", "--bauds", "300,19200"],
        );
        ok(dir, &["battery", "--cycles", "2"]);
    }
    for name in [
        "linkmatrix_unconditioned.csv",
        "linkmatrix_unconditioned.manifest.json",
        "battery.csv",
        "battery.svg",
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn calibration_file_is_honoured() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("calibration.txt"), "version = test-7\n").unwrap();
    ok(tmp.path(), &["knob", "100"]);
    assert!(read(tmp.path(), "knob.manifest.json").contains("\"test-7\""));

    fs::write(tmp.path().join("broken.txt"), "no.such.key = 1\n").unwrap();
    let out = run(tmp.path(), &["--calibration", "broken.txt", "knob", "100"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    assert_eq!(
        run(tmp.path(), &["--calibration", "absent.txt", "knob", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn shipped_files_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let text = fs::read_to_string(root.join("calibration.txt")).unwrap();
    assert_eq!(
        ionoline::Calibration::parse(&text).unwrap(),
        ionoline::Calibration::default()
    );
    for name in ["clean", "power_cut", "severed", "reboot"] {
        let path = root.join("scenarios").join(format!("{name}.txt"));
        let text = fs::read_to_string(&path).unwrap();
        ionoline::duplex::parse_scenario(&text).unwrap();
    }
}

#[test]
fn severed_scenario_switches_both_nodes() {
    let tmp = TempDir::new().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/severed.txt");
    let stdout = ok(tmp.path(), &["duplex", scenario.to_str().unwrap()]);
    assert!(stdout.contains("12.007292 right mode_switch"), "{stdout}");
    assert!(stdout.contains("13.208333 left mode_switch"), "{stdout}");
    assert!(stdout.trim_end().ends_with("2 mode switches"));
}
