use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conformal_array::surface::{PolynomialSurface, SurfaceSamples};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_conformal"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn fit_round_trip_recovers_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("mesh.csv");
    PolynomialSurface::table_one().mesh().unwrap().write_csv(&samples).unwrap();
    let o = run(&["fit", samples.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let rmse: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("rmse "))
        .and_then(|l| l.trim_end_matches(" m").parse().ok())
        .expect("rmse line");
    assert!(rmse < 1e-9, "rmse {rmse}");
    let fitted = PolynomialSurface::read_json(dir.path().join("surface.json")).unwrap();
    let t = PolynomialSurface::table_one();
    for (a, b) in fitted.coeffs().iter().zip(t.coeffs()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn fit_with_too_few_samples_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("few.csv");
    let pts = (0..20)
        .map(|k| {
            let (x, y) = (0.1 + 0.005 * (k % 5) as f64, -0.02 + 0.01 * (k / 5) as f64);
            [x, y, 0.01 * x - 0.2 * y * y]
        })
        .collect();
    SurfaceSamples::new(pts).write_csv(&samples).unwrap();
    let o = run(&["fit", samples.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn fit_reports_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("bad.csv");
    std::fs::write(&samples, "x,y,z\n0.1,0.0,0.0\n0.2,oops,0.0\n").unwrap();
    let o = run(&["fit", samples.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn fit_missing_file_is_input_error() {
    let o = run(&["fit", "/nonexistent/samples.csv", "--out", "/tmp"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn shipped_sweep_config_gives_contour_of_28_element_array() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["sweep", "--config", shipped("table2_sweep.json").to_str().unwrap(), "--out", out, "--step", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("28 elements"), "{}", stdout(&o));
    let rows = csv_rows(&dir.path().join("contour_table2.csv"));
    assert_eq!(rows[0], "theta_scan_deg,phi_scan_deg,directivity_dBi,sll_dB,peak_theta_deg,peak_phi_deg");
    // 11 azimuths by 8 elevations, row-major with azimuth fastest.
    assert_eq!(rows.len(), 1 + 11 * 8);
    assert!(rows[1].starts_with("-50,-90,"));
    assert!(rows[2].starts_with("-40,-90,"));
    assert!(dir.path().join("contour_table2.gp").exists());
}

#[test]
fn single_steer_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "surface": { "builtin": "table-one" },
             "arrays": [ { "kind": "non-uniform-conformal" } ],
             "sphere_step_deg": 4,
             "steering": { "theta_deg": 0, "phi_deg": -40 } }"#,
    );
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(csv_rows(&dir.path().join("contour_non-uniform-conformal.csv")).len(), 2);
}

#[test]
fn unknown_layout_kind_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "surface": { "builtin": "table-one" },
             "arrays": [ { "kind": "hexagonal" } ],
             "steering": { "theta_deg": 0, "phi_deg": -40 } }"#,
    );
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hexagonal"), "{}", stderr(&o));
}

#[test]
fn validation_lists_every_bad_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "surface": { "builtin": "table-one", "file": "x.json" },
             "arrays": [ { "kind": "planar", "n": 4, "m": 2 } ],
             "frequency_hz": -1,
             "steering": { "theta_deg": 0, "phi_deg": -40 } }"#,
    );
    let o = run(&["layout", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    for field in ["frequency_hz", "surface:", "arrays[0].dx_mm", "arrays[0].dy_mm"] {
        assert!(err.contains(field), "missing {field} in {err}");
    }
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "surface": { "builtin": "table-one" }, "frequncy_hz": 5e9 }"#);
    let o = run(&["layout", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("frequncy_hz"));
}

#[test]
fn bad_flags_are_input_errors() {
    assert_eq!(code(&run(&["sweep"])), 1);
    assert_eq!(code(&run(&["bogus"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn strict_domain_rejects_extrapolated_elements() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = shipped("table2_sweep.json");
    let lax = run(&["layout", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&lax), 0, "{}", stderr(&lax));
    assert!(stdout(&lax).contains("extrapolated [13, 20]"), "{}", stdout(&lax));
    let rows = csv_rows(&dir.path().join("layout_table2.csv"));
    assert_eq!(rows.len(), 29);
    assert!(rows[0].starts_with("index,x,y,z,nx,ny,nz,t11"));

    let strict = run(&["layout", "--config", cfg.to_str().unwrap(), "--out", out, "--strict-domain"]);
    assert_eq!(code(&strict), 1);
}

#[test]
fn identical_configs_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = shipped("compare.json");
    for d in [&a, &b] {
        let o = run(&["compare", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "--step", "4"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 7, "{names:?}");
    for n in names {
        let x = std::fs::read(a.path().join(&n)).unwrap();
        let y = std::fs::read(b.path().join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
    let table = csv_rows(&a.path().join("comparison.csv"));
    assert_eq!(table.len(), 4);
    assert!(table[1].starts_with("non-uniform,28,"));
}

#[test]
fn compare_needs_two_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "surface": { "builtin": "table-one" },
             "arrays": [ { "kind": "non-uniform-conformal" } ],
             "steering": { "theta_deg": 0, "phi_deg": -40 } }"#,
    );
    let o = run(&["compare", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn pattern_writes_grid_and_cuts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["pattern", "--config", shipped("pattern.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--step", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(csv_rows(&dir.path().join("pattern_table2.csv")).len(), 1 + 180 * 91);
    assert_eq!(csv_rows(&dir.path().join("cut_elevation_table2.csv")).len(), 1 + 180);
    assert_eq!(csv_rows(&dir.path().join("cut_azimuth_table2.csv"))[0], "angle_deg,directivity_dBi");
    assert!(stdout(&o).contains("peak D"));
}

#[test]
fn pattern_rejects_steering_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["pattern", "--config", shipped("table2_sweep.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

const SMALL_PLANAR: &str = r#"{ "surface": { "builtin": "table-one" },
    "arrays": [ { "name": "small", "kind": "planar", "n": 4, "m": 2, "dx_mm": 25, "dy_mm": 25 } ],
    "sphere_step_deg": 4,
    "steering": { "theta_deg": 0, "phi_deg": -70 } }"#;

#[test]
fn optimize_writes_weights_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_PLANAR);
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let w = conformal_array::optimize::read_weights_csv(dir.path().join("weights_small.csv")).unwrap();
    assert_eq!(w.len(), 8);
    assert!(w.iter().all(|&x| x >= 0.0));
    let report = std::fs::read_to_string(dir.path().join("report_small.txt")).unwrap();
    assert!(!report.contains("VIOLATED"), "{report}");
    let sll = |key: &str| -> f64 {
        report
            .lines()
            .find_map(|l| l.strip_prefix(key))
            .and_then(|l| l.split_whitespace().next())
            .and_then(|v| v.parse().ok())
            .unwrap()
    };
    assert!(sll("optimized SLL") <= sll("unit SLL") + 1e-9);
}

#[test]
fn optimize_infeasible_exits_three() {
    // Two elements 100 mm apart: grating lobes no amplitude can suppress.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "surface": { "builtin": "table-one" },
             "arrays": [ { "kind": "planar", "n": 2, "m": 1, "dx_mm": 100, "dy_mm": 25 } ],
             "sphere_step_deg": 4,
             "steering": { "theta_deg": 0, "phi_deg": -90 } }"#,
    );
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"));
}

#[test]
fn weights_file_is_resolved_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let w: Vec<String> = (0..8).map(|i| format!("{i},{}", 1.0 + 0.1 * i as f64)).collect();
    std::fs::write(dir.path().join("w.csv"), format!("index,weight\n{}\n", w.join("\n"))).unwrap();
    let cfg = write_config(&dir.path(), &SMALL_PLANAR.replace("\"sphere_step_deg\"", "\"weights\": \"w.csv\", \"sphere_step_deg\""));
    let o = run(&["pattern", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let bad = write_config(&dir.path(), &SMALL_PLANAR.replace("\"sphere_step_deg\"", "\"weights\": \"table-three\", \"sphere_step_deg\""));
    let o = run(&["pattern", "--config", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("28 values"), "{}", stderr(&o));
}
