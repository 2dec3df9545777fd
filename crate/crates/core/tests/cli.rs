use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array4;
use nlos::io::{read_volume, write_volume, Volume, VolumeMeta};
use nlos::{DirectionalAlbedoVolume, ScanGrid};

fn nlos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlos")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = nlos(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

// 16 x 16 scan, 32 bins of 5 cm; small enough to run in well under a second.
const SMALL: [&str; 8] = ["--res", "16", "--bins", "32", "--bin-width", "0.05", "--depth-res", "16"];

fn simulate(dir: &Path, extra: &[&str]) {
    let out = p(dir, "");
    let mut args = vec!["simulate", "--out", &out];
    args.extend(SMALL);
    args.extend(extra);
    ok(&args);
}

fn read(path: &str) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let t = tempfile::tempdir().unwrap();
    let noise = ["--noise", "poisson:eta=50,gauss:sigma=1"];
    for (name, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        let dir = t.path().join(name);
        simulate(&dir, &[&noise[..], &["--seed", seed]].concat());
    }
    let m = |d: &str| read(&p(&t.path().join(d), "meas.nlv"));
    assert_eq!(m("a"), m("b"));
    assert_ne!(m("a"), m("c"));
}

#[test]
fn single_surfel_peaks_at_round_trip_bin() {
    let t = tempfile::tempdir().unwrap();
    ok(&[
        "simulate", "--scene", "single-surfel", "--depth", "0.3", "--res", "8", "--bins", "512",
        "--bin-width", "0.0025", "--depth-res", "16", "--out", &p(t.path(), ""),
    ]);
    let (vol, _) = read_volume(&t.path().join("meas.nlv")).unwrap();
    let tau = vol.into_transient().unwrap();
    let column = tau.data().slice(ndarray::s![4, 4, ..]).to_owned();
    let peak = column
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(peak, (2.0 * 0.3 / 0.0025f64).round() as usize);
}

#[test]
fn window_of_one_is_local_ss() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), &[]);
    let meas = p(t.path(), "meas.nlv");
    let common = ["--input", &meas, "--iters", "10", "--relative-lambda=true", "--lambda", "0.01"];
    let a = p(t.path(), "a");
    let b = p(t.path(), "b");
    ok(&[&["reconstruct", "--method", "ss", "--window", "1", "--out", &a][..], &common].concat());
    ok(&[&["reconstruct", "--method", "local-ss", "--out", &b][..], &common].concat());
    let vol = |d: &str| {
        let (v, _) = read_volume(&t.path().join(d).join("recon.nlv")).unwrap();
        v.into_directional().unwrap().data().clone()
    };
    let (a, b) = (vol("a"), vol("b"));
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(scale > 0.0);
    assert!(diff <= 1e-9 * scale, "max diff {diff} vs scale {scale}");
}

#[test]
fn wiener_reports_zero_iterations() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), &[]);
    let out = p(t.path(), "w");
    let stdout = ok(&["reconstruct", "--input", &p(t.path(), "meas.nlv"), "--method", "wiener", "--out", &out]);
    assert!(stdout.starts_with("wiener: 0 iterations"), "{stdout}");
    let (_, meta) = read_volume(&t.path().join("w/recon.nlv")).unwrap();
    assert_eq!(meta.get("iterations"), Some("0"));
    let report = std::fs::read_to_string(t.path().join("w/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1);
}

#[test]
fn zero_volume_renders_black() {
    let t = tempfile::tempdir().unwrap();
    let g = ScanGrid::new(0.6, 16, 0.05, 32, 16).unwrap();
    let rho = DirectionalAlbedoVolume::new(g, Array4::zeros(g.albedo_shape())).unwrap();
    let mut meta = VolumeMeta::new();
    meta.set_grid(&g);
    let path = t.path().join("zero.nlv");
    write_volume(&path, &Volume::from(rho), &meta).unwrap();
    let out = p(t.path(), "r");
    ok(&["render", "--input", path.to_str().unwrap(), "--out", &out]);
    for (name, header) in [("albedo.pgm", "P5\n16 16\n255\n"), ("normal.ppm", "P6\n16 16\n255\n")] {
        let bytes = read(&p(t.path(), &format!("r/{name}")));
        assert!(bytes.starts_with(header.as_bytes()), "{name}");
        assert!(bytes[header.len()..].iter().all(|&b| b == 0), "{name}");
    }
}

#[test]
fn truth_scored_against_itself_is_perfect() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), &[]);
    let truth = p(t.path(), "truth.nlv");
    let out = p(t.path(), "e");
    ok(&["evaluate", "--recon", &truth, "--truth", &truth, "--out", &out]);
    let report = std::fs::read_to_string(t.path().join("e/report.csv")).unwrap();
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[3..7], &["inf", "1", "0", "0"]);
}

#[test]
fn mismatched_grids_are_an_error() {
    let t = tempfile::tempdir().unwrap();
    simulate(&t.path().join("a"), &[]);
    ok(&[
        "simulate", "--res", "16", "--bins", "32", "--bin-width", "0.05", "--depth-res", "32",
        "--out", &p(t.path(), "b"),
    ]);
    let out = nlos(&[
        "evaluate", "--recon", &p(t.path(), "a/truth.nlv"), "--truth", &p(t.path(), "b/truth.nlv"),
        "--out", &p(t.path(), "e"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn missing_input_exits_with_code_two() {
    let out = nlos(&["reconstruct", "--input", "/nonexistent/meas.nlv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let stdout = ok(&["selftest"]);
    assert!(!stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn help_lists_defaults() {
    let help = ok(&["simulate", "--help"]);
    assert!(help.contains("[default: 512]"));
    assert!(help.contains("[default: 0.0025]"));
    let help = ok(&["reconstruct", "--help"]);
    assert!(help.contains("[default: 27]"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("bad.cfg");
    std::fs::write(&cfg, "lambada=0.1\n").unwrap();
    let out = nlos(&["reconstruct", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambada"));
}

#[test]
fn run_cfg_reproduces_the_run() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), &["--noise", "poisson:eta=100", "--seed", "9"]);
    let first = p(t.path(), "a");
    ok(&[
        "reconstruct", "--input", &p(t.path(), "meas.nlv"), "--method", "l1", "--lambda", "0.05",
        "--relative-lambda=true", "--iters", "7", "--out", &first,
    ]);
    let second = p(t.path(), "b");
    ok(&["reconstruct", "--config", &p(t.path(), "a/run.cfg"), "--out", &second]);
    assert_eq!(read(&p(t.path(), "a/recon.nlv")), read(&p(t.path(), "b/recon.nlv")));
    let cfg = std::fs::read_to_string(t.path().join("b/run.cfg")).unwrap();
    assert!(cfg.contains("method=l1\n") && cfg.contains("iters=7\n"));
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), &[]);
    let out = p(t.path(), "s");
    ok(&[
        "sweep", "--input", &p(t.path(), "meas.nlv"), "--truth", &p(t.path(), "truth.nlv"),
        "--iters", "3", "--points", "3", "--out", &out,
    ]);
    let report = std::fs::read_to_string(t.path().join("s/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    for i in 0..3 {
        assert!(t.path().join(format!("s/recon_{i}.nlv")).exists());
    }
}
