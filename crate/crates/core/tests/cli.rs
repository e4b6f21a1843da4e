use std::path::Path;
use std::process::{Command, Output};

use ioncrystal::scenario::{Config, Scenario};

const BIN: &str = env!("CARGO_BIN_EXE_ioncrystal");
const SWITCHING: &str = include_str!("../examples/configs/switching.cfg");

const SMALL: &str = "\
[scenario]
name = small
seed = 9

[trap]
preset = ba
v_ec = 3.0

[species]
Ba+ = 12
Ba136+ = 4

[cooling]
beam = three_axis
Ba+ = 866.4

[heating]
Ba+ = 9.9
Ba136+ = 9.9

[output]
temperature = 1e-4
";

fn ioncrystal(dir: &Path, text: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, text).unwrap();
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("out/manifest.txt")).unwrap()
}

#[test]
fn malformed_key_reports_line_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("v_ec = 3.0", "v_ec = 3.0\nvdc = 1");
    let out = ioncrystal(dir.path(), &text, &["run"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 8"), "{err}");
    assert!(!dir.path().join("out/manifest.txt").exists());
}

#[test]
fn empty_schedule_writes_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = ioncrystal(dir.path(), SMALL, &["run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(manifest(dir.path()), "");
}

#[test]
fn validate_warns_about_unstable_species() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("Ba136+ = 4\n", "Ba136+ = 4\nH2+ = 1\n");
    let out = ioncrystal(dir.path(), &text, &["validate"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("warning") && text.contains("H2+"), "{text}");

    let out = ioncrystal(dir.path(), &SMALL.replace("Ba136+ = 4", "Xe+ = 4"), &["validate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("error: line"));
}

#[test]
fn seed_and_threads_control_outputs() {
    let text = format!("{SMALL}\n[schedule]\n0 = lasers off\n3e-4 = lasers on\n6e-4 = evolve\n");
    let runs: Vec<String> = [
        vec!["run"],
        vec!["run", "--threads", "2"],
        vec!["run", "--seed", "9"],
        vec!["run", "--seed", "10"],
    ]
    .iter()
    .map(|args| {
        let dir = tempfile::tempdir().unwrap();
        let out = ioncrystal(dir.path(), &text, args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        manifest(dir.path())
    })
    .collect();
    assert!(runs[0].contains("temperature.csv"));
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    assert_ne!(runs[0], runs[3]);
}

#[test]
fn trap_and_rempd_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = ioncrystal(dir.path(), SMALL, &["trap"]);
    assert!(out.status.success());
    let table = std::fs::read_to_string(dir.path().join("out/trap.csv")).unwrap();
    assert!(table.lines().count() == 3 && table.contains("Ba136+"));

    let text = "[rempd]\nscheme = toy\nt_bbr = 300\nt_rot = 300\nduration = 10\nsamples = 200\nir = 0 2 4 1 100\nuv = 5700 266e-9\n";
    let out = ioncrystal(dir.path(), text, &["rempd"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    assert!(m.contains("survival.csv") && m.contains("populations.csv"));
}

#[test]
fn switching_protocol_shows_three_phases() {
    let sc = Scenario::from_config(&Config::parse(SWITCHING).unwrap(), None).unwrap();
    let out = sc.run().unwrap();
    let csv = std::str::from_utf8(&out.files["temperature.csv"]).unwrap();
    let series = |species: &str| -> Vec<(f64, f64)> {
        csv.lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|c| c[1] == species)
            .map(|c| (c[0].parse().unwrap(), c[3].parse().unwrap()))
            .collect()
    };
    let mean = |s: &[(f64, f64)], a: f64, b: f64| {
        let v: Vec<f64> = s.iter().filter(|p| p.0 > a && p.0 <= b).map(|p| p.1).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    for species in ["Ba+", "Ba136+", "AF+"] {
        let s = series(species);
        let (cooled, dark, recooled) = (mean(&s, 20e-3, 30e-3), mean(&s, 32e-3, 34e-3), mean(&s, 50e-3, 60e-3));
        assert!(dark > 1.2 * cooled, "{species}: {cooled:.2} -> {dark:.2} mK with lasers off");
        assert!(recooled < dark, "{species}: {dark:.2} -> {recooled:.2} mK after recooling");
        assert!((recooled / cooled - 1.0).abs() < 0.3, "{species}: {cooled:.2} mK before, {recooled:.2} mK after");
    }
    assert!(out.files.contains_key("positions.csv"));
}
