//! Acceptance criteria 1–13. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use conformal_array::farfield::{ArrayModel, Excitation, RadioConfig, SteeringVector};
use conformal_array::geometry::{layout, ArraySpec, ElementPlacement, FrameRoll, LayoutOptions};
use conformal_array::metrics::{analyze_lobes, scan_point, LobeOptions, SllKind, SteeringGrid, SweepOptions};
use conformal_array::optimize::{optimize, table_three_weights, FieldMatrix, OptimizeOptions, DIRECTIVITY_FLOOR};
use conformal_array::pattern::{Direction, ElementPattern, PatternKind, TabulatedPattern};
use conformal_array::surface::PolynomialSurface;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn patch_element() -> ElementPattern {
    ElementPattern::cos_squared().with_polarization(Vector3::z()).unwrap()
}

fn model_for(spec: &ArraySpec) -> ArrayModel {
    let surface = PolynomialSurface::table_one();
    let l = layout(spec, &surface, &LayoutOptions::default()).unwrap();
    ArrayModel::with_pattern(l.elements, &patch_element(), RadioConfig::default()).unwrap()
}

fn nonuniform() -> ArrayModel {
    model_for(&ArraySpec::table_two())
}

fn uniform() -> ArrayModel {
    model_for(&ArraySpec::uniform_conformal(7, 4, 20.8e-3, 25e-3))
}

fn planar() -> ArrayModel {
    model_for(&ArraySpec::planar(7, 4, 20.8e-3, 25e-3))
}

/// Worst elevation-cut SLL over the elevation scan at θ_s = 0.
fn worst_elevation_sll(model: &ArrayModel) -> f64 {
    let grid = SteeringGrid::regular((0.0, 0.0, 1.0), (-66.0, -26.0, 2.0)).unwrap();
    let c = conformal_array::metrics::scan_sweep(model, &grid, &SweepOptions::with_step(STEP)).unwrap();
    c.worst_sll(SllKind::ElevationCut).unwrap()
}

/// Grid-peak directivity for every steer of `grid`.
fn peak_directivities(model: &ArrayModel, grid: &SteeringGrid) -> Vec<f64> {
    let cache = model.element_cache(STEP).unwrap();
    grid.iter()
        .map(|(t, p)| {
            let ex = model.uniform_excitation(SteeringVector::from_degrees(t, p));
            cache.sample(&model.weights(&ex).unwrap()).unwrap().max_directivity().unwrap()
        })
        .collect()
}

fn max_directivity_over_steers(model: &ArrayModel) -> f64 {
    let grid = SteeringGrid::regular((-50.0, 50.0, 2.0), (-90.0, -20.0, 2.0)).unwrap();
    peak_directivities(model, &grid).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn azimuth_scan_loss(model: &ArrayModel, half_span: f64) -> f64 {
    let grid = SteeringGrid::regular((-half_span, half_span, 2.0), (-43.0, -43.0, 1.0)).unwrap();
    let d = peak_directivities(model, &grid);
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Random placement on a 5 cm patch with a random downward-ish normal.
fn random_placement(rng: &mut ChaCha8Rng, index: usize) -> ElementPlacement {
    let pos = Vector3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.01..0.01));
    let n = Vector3::new(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7), -1.0).normalize();
    ElementPlacement::new(index, pos, n, FrameRoll::NormalAngles).unwrap()
}

fn random_pattern(rng: &mut ChaCha8Rng) -> ElementPattern {
    match rng.gen_range(0..5) {
        0 => ElementPattern::isotropic(),
        1 => ElementPattern::dipole(),
        2 => ElementPattern::cos_squared(),
        3 => patch_element(),
        _ => {
            let axis: Vec<f64> = (0..=36).map(|k| -180.0 + 10.0 * k as f64).collect();
            let phi: Vec<f64> = (0..=18).map(|k| -90.0 + 10.0 * k as f64).collect();
            let values = phi
                .iter()
                .flat_map(|p| axis.iter().map(move |t| (p.to_radians().cos() * (0.5 + 0.5 * t.to_radians().cos())).abs()))
                .collect();
            ElementPattern::new(PatternKind::Tabulated(TabulatedPattern::new(axis, phi, values).unwrap()))
        }
    }
}

/// Integrates directivity with exact per-row solid angles (sin φ differences)
/// rather than the `cos φ Δ²` rule used for the radiated power.
fn c1_quadrature() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.gen_range(1..=8);
        let elements: Vec<_> = (0..n).map(|i| random_placement(&mut rng, i)).collect();
        let patterns: Vec<_> = (0..n).map(|_| random_pattern(&mut rng)).collect();
        let model = ArrayModel::new(elements, patterns, RadioConfig::default()).unwrap();
        let amps = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let steer = SteeringVector::from_degrees(rng.gen_range(-180.0..180.0), rng.gen_range(-90.0..0.0));
        let grid = model.sample_sphere(&Excitation::new(amps, steer).unwrap(), STEP).unwrap();
        let p = grid.radiated_power().unwrap();
        let h = STEP.to_radians();
        let mut integral = 0.0;
        for j in 0..grid.n_phi() {
            let phi = grid.direction(0, j).phi;
            let lo = (phi - h / 2.0).max(-PI / 2.0);
            let hi = (phi + h / 2.0).min(PI / 2.0);
            let band = (hi.sin() - lo.sin()) * h;
            for i in 0..grid.n_theta() {
                integral += 4.0 * PI * grid.u(i, j) / p * band;
            }
        }
        worst = worst.max((integral / (4.0 * PI) - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-3 && secs < 60.0, format!("max |∮D/4π − 1| = {worst:.2e}, {secs:.1} s"))
}

fn c2_array_factor() -> Outcome {
    let (nx, ny, dx, dy) = (7usize, 4usize, 20.8e-3, 25e-3);
    let origin = Vector3::new(0.1, -0.03, -0.06);
    let elements = (0..nx * ny)
        .map(|i| {
            let pos = origin + Vector3::new((i % nx) as f64 * dx, (i / nx) as f64 * dy, 0.0);
            ElementPlacement::new(i, pos, Vector3::new(0.0, 0.0, -1.0), FrameRoll::NormalAngles).unwrap()
        })
        .collect();
    let radio = RadioConfig::default();
    let model = ArrayModel::with_pattern(elements, &ElementPattern::isotropic(), radio).unwrap();
    let k = radio.wavenumber();
    let steer_dir = Direction::from_degrees(20.0, -50.0);
    let ex = model.uniform_excitation(SteeringVector::from_degrees(20.0, -50.0));

    // Σ_n e^{-j n ψ} in closed form.
    let geometric = |n: usize, psi: f64| -> Complex64 {
        let half = (psi / 2.0).sin();
        let mag = if half.abs() < 1e-12 { n as f64 } else { (n as f64 * psi / 2.0).sin() / half };
        Complex64::from_polar(1.0, -(n as f64 - 1.0) * psi / 2.0) * mag
    };

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let obs = Direction::new(rng.gen_range(-PI..PI), rng.gen_range(-1.0f64..1.0).asin());
        let v = obs.unit_vector() - steer_dir.unit_vector();
        let af = Complex64::from_polar(1.0, -k * origin.dot(&v)) * geometric(nx, k * dx * v.x) * geometric(ny, k * dy * v.y);
        let e = model.field(&ex, obs).unwrap();
        let err = ((e.x - af).norm() + e.y.norm() + e.z.norm()) / af.norm();
        worst = worst.max(err);
    }
    outcome(worst <= 1e-9, format!("max relative error {worst:.2e} over 1000 directions"))
}

fn c3_single_element() -> Outcome {
    // 2π ∫₀^{π/2} cos⁴γ sin γ dγ by composite Simpson.
    let n = 20_000;
    let h = (PI / 2.0) / n as f64;
    let f = |g: f64| g.cos().powi(4) * g.sin();
    let mut s = f(0.0) + f(PI / 2.0);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    let oracle = 10.0 * (4.0 * PI / (2.0 * PI * s * h / 3.0)).log10();
    let el = ElementPlacement::new(0, Vector3::zeros(), Vector3::new(0.0, 0.0, -1.0), FrameRoll::NormalAngles).unwrap();
    let model = ArrayModel::with_pattern(vec![el], &ElementPattern::cos_squared(), RadioConfig::default()).unwrap();
    let d = model
        .sample_sphere(&model.uniform_excitation(SteeringVector::from_degrees(0.0, -90.0)), STEP)
        .unwrap()
        .max_directivity()
        .unwrap();
    outcome(
        (d - 10.0).abs() <= 0.05 && (oracle - 10.0).abs() < 1e-6,
        format!("D = {d:.4} dBi (analytic {oracle:.4} dBi)"),
    )
}

fn c4_surface_round_trip() -> Outcome {
    let s = PolynomialSurface::table_one();
    let (fit, rmse) = PolynomialSurface::fit(&s.mesh().unwrap(), *s.domain()).unwrap();
    let worst = s
        .coeffs()
        .iter()
        .zip(fit.coeffs())
        .map(|(a, b)| ((a - b) / a).abs())
        .fold(0.0f64, f64::max);
    outcome(worst <= 1e-6, format!("max relative coefficient error {worst:.2e}, rmse {rmse:.2e} m"))
}

fn c5_geometry() -> Outcome {
    let spec = ArraySpec::table_two();
    let l = layout(&spec, &PolynomialSurface::table_one(), &LayoutOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for e in &l.elements {
        worst = worst.max((e.normal.norm() - 1.0).abs());
        worst = worst.max((e.frame * e.frame.transpose() - Matrix3::identity()).abs().max());
        worst = worst.max((e.frame.determinant() - 1.0).abs());
    }
    let row = |k: usize| &l.elements[k * spec.n..(k + 1) * spec.n];
    // Inner rows: spacing ratio q; outer rows: equal spacing.
    for k in [1, 2] {
        let xs: Vec<f64> = row(k).iter().map(|e| e.position.x).collect();
        for w in xs.windows(3) {
            worst = worst.max(((w[2] - w[1]) / (w[1] - w[0]) - spec.ratio).abs());
        }
        worst = worst.max((xs[1] - xs[0] - spec.dx1).abs());
    }
    for k in [0, 3] {
        let xs: Vec<f64> = row(k).iter().map(|e| e.position.x).collect();
        let d0 = xs[1] - xs[0];
        for w in xs.windows(2) {
            worst = worst.max((w[1] - w[0] - d0).abs());
        }
    }
    // Row k mirrors row m − 1 − k across y = 0.
    for k in 0..spec.m {
        for (a, b) in row(k).iter().zip(row(spec.m - 1 - k)) {
            worst = worst.max((a.position.x - b.position.x).abs());
            worst = worst.max((a.position.y + b.position.y).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e}"))
}

fn c6_scaling() -> Outcome {
    let model = nonuniform();
    let s = SteeringVector::from_degrees(10.0, -40.0);
    let w = table_three_weights();
    let base = Excitation::new(w, s).unwrap();
    let reference = model.sample_sphere(&base, STEP).unwrap();
    let opts = LobeOptions::default();
    let r0 = scan_point(&reference, &s, &opts).unwrap();
    let mut worst: f64 = 0.0;
    for c in [1e-3, 0.37, 12.5] {
        let g = model.sample_sphere(&base.scaled(c).unwrap(), STEP).unwrap();
        let r = scan_point(&g, &s, &opts).unwrap();
        worst = worst.max((r.directivity_dbi - r0.directivity_dbi).abs());
        for (a, b) in [(r.sll_db, r0.sll_db), (r.elevation_sll_db, r0.elevation_sll_db), (r.azimuth_sll_db, r0.azimuth_sll_db)] {
            worst = worst.max((a.unwrap() - b.unwrap()).abs());
        }
        let l = analyze_lobes(&g, &opts).unwrap();
        worst = worst.max((l.peak_dbi - r0.directivity_dbi).abs());
    }
    outcome(worst <= 1e-12, format!("max change {worst:.2e} dB"))
}

fn c7_optimizer_oracle() -> Outcome {
    let x = |a: f64| Vector3::new(Complex64::new(a, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let mut m = FieldMatrix::from_parts(
        vec![vec![x(1.0), x(0.3)], vec![x(0.1), x(0.3)]],
        vec![1.0, 1.0],
        vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.3, 0.0, 0.0)],
        vec![0],
        vec![1],
    )
    .unwrap();
    let field = |w: [f64; 2], a: f64, b: f64| (w[0] * a + w[1] * b).powi(2);
    let u_ref = field([1.0, 1.0], 1.0, 0.3);
    let p_ref = u_ref + field([1.0, 1.0], 0.1, 0.3);
    let mut brute = f64::INFINITY;
    for i in 0..=1000 {
        for j in 0..=1000 {
            let w = [i as f64 * 1e-3, j as f64 * 1e-3];
            let (main, side) = (field(w, 1.0, 0.3), field(w, 0.1, 0.3));
            if main + side == 0.0 || main / (main + side) < DIRECTIVITY_FLOOR * u_ref / p_ref {
                continue;
            }
            brute = brute.min(side / main.max(side));
        }
    }
    let r = optimize(&mut m, &OptimizeOptions::default()).unwrap();
    let got = r.report.sll_ratio;
    outcome(
        (got - brute).abs() <= 1e-3 && r.report.satisfied(1e-6),
        format!("optimized SLL ratio {got:.5}, grid search {brute:.5}"),
    )
}

fn main() {
    let t0 = Instant::now();
    let nonuni = nonuniform();
    let uni = uniform();
    let flat = planar();

    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "quadrature normalization", c1_quadrature()),
        (2, "array-factor oracle", c2_array_factor()),
        (3, "single cos² element directivity", c3_single_element()),
        (4, "surface round-trip", c4_surface_round_trip()),
        (5, "non-uniform geometry laws", c5_geometry()),
        (6, "scaling invariance", c6_scaling()),
        (7, "optimizer toy oracle", c7_optimizer_oracle()),
    ];

    let sll_uni = worst_elevation_sll(&uni);
    let sll_non = worst_elevation_sll(&nonuni);
    results.push((
        8,
        "uniform worst elevation-scan SLL",
        outcome((sll_uni - -4.1).abs() <= 1.5, format!("{sll_uni:.2} dB (target −4.1 ± 1.5)")),
    ));
    results.push((
        9,
        "non-uniform SLL reduction",
        outcome(
            sll_uni - sll_non >= 2.5,
            format!("{sll_non:.2} dB vs {sll_uni:.2} dB, reduction {:.2} dB (≥ 2.5)", sll_uni - sll_non),
        ),
    ));

    let d_non = max_directivity_over_steers(&nonuni);
    let d_flat = max_directivity_over_steers(&flat);
    results.push((
        10,
        "planar vs non-uniform max directivity",
        outcome(
            (d_flat - d_non - 3.78).abs() <= 1.0,
            format!("{d_flat:.2} − {d_non:.2} = {:.2} dB (target 3.78 ± 1.0)", d_flat - d_non),
        ),
    ));
    results.push((
        11,
        "non-uniform max directivity",
        outcome((d_non - 15.9).abs() <= 1.5, format!("{d_non:.2} dBi (target 15.9 ± 1.5)")),
    ));

    let loss_flat = azimuth_scan_loss(&flat, 48.0);
    let loss_uni = azimuth_scan_loss(&uni, 49.0);
    results.push((
        12,
        "azimuth scan loss",
        outcome(
            (loss_flat - 0.56).abs() <= 0.4 && loss_uni < 1.2,
            format!("planar ±48°: {loss_flat:.2} dB (0.56 ± 0.4); uniform ±49°: {loss_uni:.2} dB (< 1.2)"),
        ),
    ));

    let s = SteeringVector::from_degrees(0.0, -27.0);
    let lobes = LobeOptions::default();
    let unit = scan_point(&nonuni.sample_sphere(&nonuni.uniform_excitation(s), STEP).unwrap(), &s, &lobes).unwrap();
    let ex = conformal_array::optimize::apply_table_weights(&table_three_weights(), &nonuni.elements, s).unwrap();
    let table = scan_point(&nonuni.sample_sphere(&ex, STEP).unwrap(), &s, &lobes).unwrap();
    let (su, st) = (unit.elevation_sll_db.unwrap(), table.elevation_sll_db.unwrap());
    let dd = table.directivity_dbi - unit.directivity_dbi;
    results.push((
        13,
        "reference weights",
        outcome(
            st < su && (-1.5..=0.0).contains(&dd),
            format!("SLL {st:.2} dB vs unit {su:.2} dB, directivity change {dd:+.2} dB"),
        ),
    ));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("{} criterion {n:>2} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed in {:.0} s", results.len() - failed, results.len(), t0.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
