use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use conformal_array::farfield::{CutPlane, Excitation, SteeringVector};
use conformal_array::geometry::write_layout_csv;
use conformal_array::metrics::{
    amplitude_taper, analyze_lobes, compare_arrays, scan_sweep, switching_mask, SllKind, SweepOptions,
};
use conformal_array::optimize::{build_field_matrix, optimize as run_optimizer, write_weights_csv, OptimizeOptions};
use conformal_array::surface::{PolynomialSurface, SurfaceSamples};

use crate::config::{load, Overrides, Setup};
use crate::plot::{self, Plot};
use crate::AppError;

fn create_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::input(format!("{}: {e}", dir.display())))
}

fn setup(config: &Path, ov: &Overrides, need_arrays: bool) -> Result<Setup, AppError> {
    let s = load(config)?.build(config, ov, need_arrays)?;
    create_dir(&s.out_dir)?;
    Ok(s)
}

fn emit(s: &Setup, csv: &Path, p: Plot) -> Result<(), AppError> {
    if s.plots {
        plot::write(csv, p)?;
    }
    Ok(())
}

fn single_steer(s: &Setup, command: &str) -> Result<SteeringVector, AppError> {
    match &s.steering {
        Some(g) if g.len() == 1 => {
            let (t, p) = g.iter().next().expect("one steer");
            Ok(SteeringVector::from_degrees(t, p))
        }
        Some(g) => Err(AppError::input(format!(
            "steering: `{command}` needs a single steer, got a grid of {}",
            g.len()
        ))),
        None => Err(AppError::input(format!("steering: required by `{command}`"))),
    }
}

fn opt_db(v: Option<f64>) -> String {
    v.map_or("none".into(), |v| format!("{v:.2} dB"))
}

fn snap(a: f64, origin: f64, step: f64) -> f64 {
    origin + ((a - origin) / step).round() * step
}

pub fn fit(samples: &Path, out: Option<&Path>) -> Result<(), AppError> {
    let samples = SurfaceSamples::read_csv(samples)?;
    let domain = samples.bounding_domain()?;
    let (surface, rmse) = PolynomialSurface::fit(&samples, domain)?;
    let dir = out.map_or_else(|| PathBuf::from("out"), Path::to_path_buf);
    create_dir(&dir)?;
    let path = dir.join("surface.json");
    surface.write_json(&path)?;
    println!("samples {}", samples.len());
    println!("rmse {rmse:.3e} m");
    println!("wrote {}", path.display());
    Ok(())
}

pub fn layout(config: &Path, ov: &Overrides) -> Result<(), AppError> {
    let s = setup(config, ov, true)?;
    for a in &s.arrays {
        let csv = s.out_dir.join(format!("layout_{}.csv", a.name));
        write_layout_csv(&csv, &a.layout.elements, true)?;
        emit(&s, &csv, Plot::Layout { title: &a.name })?;
        print!("{}: {} elements ({})", a.name, a.layout.elements.len(), a.spec.kind);
        if !a.layout.extrapolated.is_empty() {
            print!(", extrapolated {:?}", a.layout.extrapolated);
        }
        println!();
    }
    Ok(())
}

pub fn pattern(config: &Path, ov: &Overrides) -> Result<(), AppError> {
    let s = setup(config, ov, true)?;
    let steer = single_steer(&s, "pattern")?;
    let (ts, ps) = (steer.theta_scan.to_degrees(), steer.phi_scan.to_degrees());
    for a in &s.arrays {
        let n = a.model.len();
        let amplitudes = match (&s.weights, s.switch_threshold) {
            (Some(w), _) => w.clone(),
            (None, Some(t)) => amplitude_taper(&switching_mask(&a.model, &steer, t)?, n as f64)?,
            (None, None) => vec![1.0; n],
        };
        let ex = Excitation::new(amplitudes, steer)?;
        let grid = a.model.sample_sphere(&ex, s.step_deg)?;
        let lobes = analyze_lobes(&grid, &s.lobes)?;

        let col = snap(ts, -180.0, s.step_deg);
        let col = if col >= 180.0 { col - 360.0 } else { col };
        let row = snap(ps, -90.0, s.step_deg).clamp(-90.0, 90.0);
        let el = grid.cut(CutPlane::Elevation { theta_deg: col })?;
        let az = grid.cut(CutPlane::Azimuth { phi_deg: row })?;

        let sphere_csv = s.out_dir.join(format!("pattern_{}.csv", a.name));
        let el_csv = s.out_dir.join(format!("cut_elevation_{}.csv", a.name));
        let az_csv = s.out_dir.join(format!("cut_azimuth_{}.csv", a.name));
        grid.write_csv(&sphere_csv)?;
        el.write_csv(&el_csv)?;
        az.write_csv(&az_csv)?;
        emit(&s, &sphere_csv, Plot::Sphere { title: &a.name })?;
        emit(&s, &el_csv, Plot::Cut { title: &format!("{} elevation cut, theta = {col}", a.name), xlabel: "elevation (deg)" })?;
        emit(&s, &az_csv, Plot::Cut { title: &format!("{} azimuth cut, phi = {row}", a.name), xlabel: "azimuth (deg)" })?;

        let r = grid.region();
        println!("{} steered to ({ts}, {ps}) deg:", a.name);
        println!("  peak D          {:.2} dBi at ({}, {}) deg", lobes.peak_dbi, r.theta_deg(lobes.peak_node.0), r.phi_deg(lobes.peak_node.1));
        println!("  D at steer      {:.2} dBi", grid.directivity(steer.direction())?);
        println!("  SLL             {}", opt_db(lobes.sll_db));
        println!("  elevation SLL   {}", opt_db(el.sll_db()));
        println!("  azimuth SLL     {}", opt_db(az.sll_db()));
        let bw = |v: Option<f64>| v.map_or("none".into(), |v| format!("{v:.1} deg"));
        println!("  HPBW el / az    {} / {}", bw(lobes.hpbw.elevation_deg), bw(lobes.hpbw.azimuth_deg));
        println!("  active elements {}", ex.amplitudes().iter().filter(|&&x| x > 0.0).count());
    }
    Ok(())
}

fn sweep_options(s: &Setup) -> SweepOptions {
    if s.switch_threshold.is_some() {
        log::warn!("switch_threshold only applies to `pattern`; ignored");
    }
    SweepOptions {
        step_deg: s.step_deg,
        lobes: s.lobes,
        amplitudes: s.weights.clone(),
    }
}

fn steering_grid(s: &Setup, command: &str) -> Result<conformal_array::metrics::SteeringGrid, AppError> {
    s.steering
        .clone()
        .ok_or_else(|| AppError::input(format!("steering: required by `{command}`")))
}

pub fn sweep(config: &Path, ov: &Overrides) -> Result<(), AppError> {
    let s = setup(config, ov, true)?;
    let grid = steering_grid(&s, "sweep")?;
    let opts = sweep_options(&s);
    for a in &s.arrays {
        let contour = scan_sweep(&a.model, &grid, &opts)?;
        let csv = s.out_dir.join(format!("contour_{}.csv", a.name));
        contour.write_csv(&csv)?;
        emit(&s, &csv, Plot::Contour { title: &a.name })?;
        let best = contour.best().expect("non-empty sweep");
        println!(
            "{}: {} elements, {} steers, max D {:.2} dBi at ({}, {}), worst SLL {}, worst elevation SLL {}",
            a.name,
            a.model.len(),
            contour.points.len(),
            best.directivity_dbi,
            best.theta_scan_deg,
            best.phi_scan_deg,
            opt_db(contour.worst_sll(SllKind::Sphere)),
            opt_db(contour.worst_sll(SllKind::ElevationCut)),
        );
    }
    Ok(())
}

pub fn compare(config: &Path, ov: &Overrides) -> Result<(), AppError> {
    let s = setup(config, ov, true)?;
    if s.arrays.len() < 2 {
        return Err(AppError::config(vec!["arrays: `compare` needs at least two arrays".into()]));
    }
    let grid = steering_grid(&s, "compare")?;
    let models: Vec<_> = s.arrays.iter().map(|a| (a.name.clone(), a.model.clone())).collect();
    let report = compare_arrays(&models, &grid, &sweep_options(&s))?;
    let csv = s.out_dir.join("comparison.csv");
    report.write_csv(&csv)?;
    for (a, c) in s.arrays.iter().zip(&report.contours) {
        let path = s.out_dir.join(format!("contour_{}.csv", a.name));
        c.write_csv(&path)?;
        emit(&s, &path, Plot::Contour { title: &a.name })?;
    }
    print!("{}", report.to_table());
    Ok(())
}

pub fn optimize(config: &Path, ov: &Overrides) -> Result<(), AppError> {
    let s = setup(config, ov, true)?;
    let steer = single_steer(&s, "optimize")?;
    if s.weights.is_some() || s.switch_threshold.is_some() {
        log::warn!("weights and switch_threshold are ignored by `optimize`");
    }
    let defaults = OptimizeOptions::default();
    let opts = OptimizeOptions {
        u_ref: s.optimize.u_ref,
        tol: s.optimize.tol.unwrap_or(defaults.tol),
        max_iter: s.optimize.max_iter.unwrap_or(defaults.max_iter),
        ..defaults
    };
    let (ts, ps) = (steer.theta_scan.to_degrees(), steer.phi_scan.to_degrees());
    for a in &s.arrays {
        let mut matrix = build_field_matrix(&a.model, &steer, s.step_deg, &s.lobes)?;
        let result = run_optimizer(&mut matrix, &opts)?;

        let d_at = |w: &[f64]| -> Result<f64, AppError> {
            let ex = Excitation::new(w.to_vec(), steer)?;
            Ok(a.model.sample_sphere(&ex, s.step_deg)?.directivity(steer.direction())?)
        };
        let d_opt = d_at(&result.weights)?;
        let d_unit = d_at(&vec![1.0; a.model.len()])?;

        let csv = s.out_dir.join(format!("weights_{}.csv", a.name));
        write_weights_csv(&csv, &result.weights)?;
        emit(&s, &csv, Plot::Weights { title: &a.name })?;

        let mut text = String::new();
        let _ = writeln!(text, "array               {}", a.name);
        let _ = writeln!(text, "steer               ({ts}, {ps}) deg");
        let _ = writeln!(text, "grid step           {} deg, {} rows", s.step_deg, matrix.n_rows());
        let _ = writeln!(text, "bound               {:.6e} after {} bisections", result.bound, result.bisections);
        let _ = writeln!(text, "unit SLL            {:.4} dB", result.unit_sll_db);
        let _ = writeln!(text, "optimized SLL       {:.4} dB{}", result.sll_db, if result.used_unit { " (unit weights kept)" } else { "" });
        let _ = writeln!(text, "D at steer          {d_opt:.2} dBi (unit {d_unit:.2} dBi)");
        let _ = writeln!(text, "rows moved to caps  {}", result.capped_rows.len());
        let _ = writeln!(text, "{}", result.report);
        let report = s.out_dir.join(format!("report_{}.txt", a.name));
        std::fs::write(&report, &text).map_err(|e| AppError::input(format!("{}: {e}", report.display())))?;
        print!("{text}");
    }
    Ok(())
}
