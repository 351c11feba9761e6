//! Lobe structure, scan sweeps and array comparisons.
//!
//! The mainlobe of a sphere grid is grown from the global peak along eight
//! great-circle bearings until the intensity stops falling (the first null
//! or local minimum). When a bearing never turns, a fixed angular cap is
//! used instead. Everything outside the mainlobe is sidelobe region.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::farfield::{fmt_angle, write_file, ArrayModel, CutPlane, Excitation, PatternCut, SphereGrid, SteeringVector};
use crate::pattern::{local_gain, Direction};

/// Tuning of the 2-D mainlobe search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LobeOptions {
    /// Mainlobe radius along bearings that never reach a minimum.
    pub fallback_cap_deg: f64,
    /// Number of great-circle bearings walked from the peak.
    pub bearings: usize,
    /// Walk increment; defaults to half the grid step.
    pub walk_step_deg: Option<f64>,
}

impl Default for LobeOptions {
    fn default() -> Self {
        LobeOptions {
            fallback_cap_deg: 20.0,
            bearings: 8,
            walk_step_deg: None,
        }
    }
}

/// Half-power beamwidths on the two principal cuts through the peak.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Hpbw {
    pub elevation_deg: Option<f64>,
    pub azimuth_deg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LobeAnalysis {
    /// Grid index `(i, j)` of the peak.
    pub peak_node: (usize, usize),
    pub peak_direction: Direction,
    pub peak_u: f64,
    pub peak_dbi: f64,
    /// Highest sidelobe relative to the peak, `None` if there is none.
    pub sll_db: Option<f64>,
    /// Per-node mainlobe membership, laid out like the grid values.
    pub mainlobe_mask: Vec<bool>,
    /// Mainlobe radius along each bearing, degrees.
    pub radii_deg: Vec<f64>,
    pub hpbw: Hpbw,
}

impl LobeAnalysis {
    pub fn mainlobe_len(&self) -> usize {
        self.mainlobe_mask.iter().filter(|&&m| m).count()
    }
}

/// Orthonormal tangent basis `(e1, e2)` at unit vector `p`.
pub(crate) fn tangent_basis(p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = if p.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let e1 = p.cross(&a).normalize();
    let e2 = p.cross(&e1);
    (e1, e2)
}

/// Mainlobe membership for every node of `grid`, grown from node `peak`.
/// Returns the mask and the radius per bearing (radians).
pub(crate) fn mainlobe_region(grid: &SphereGrid, peak: (usize, usize), opts: &LobeOptions) -> Result<(Vec<bool>, Vec<f64>)> {
    if opts.bearings < 3 {
        return Err(Error::InvalidSpec(format!("{} bearings (need at least 3)", opts.bearings)));
    }
    if !(opts.fallback_cap_deg > 0.0 && opts.fallback_cap_deg <= 180.0) {
        return Err(Error::InvalidSpec(format!("fallback cap {}° out of (0, 180]", opts.fallback_cap_deg)));
    }
    let walk = opts.walk_step_deg.unwrap_or(0.5 * grid.step_deg());
    if !(walk > 0.0 && walk.is_finite()) {
        return Err(Error::InvalidSpec(format!("walk step {walk}°")));
    }
    let walk = walk.to_radians();
    let peak_u = grid.u(peak.0, peak.1);
    let p = grid.direction(peak.0, peak.1).unit_vector();
    let (e1, e2) = tangent_basis(&p);
    let tol = 1e-12 * peak_u;
    let n_b = opts.bearings;

    let mut radii = Vec::with_capacity(n_b);
    for b in 0..n_b {
        let beta = 2.0 * PI * b as f64 / n_b as f64;
        let dir = e1 * beta.cos() + e2 * beta.sin();
        let mut prev = peak_u;
        let mut psi = 0.0;
        let mut radius = None;
        let mut steps = 0usize;
        while psi < PI {
            steps += 1;
            psi = steps as f64 * walk;
            let d = p * psi.cos() + dir * psi.sin();
            let u = grid
                .interpolate(Direction::from_vector(&d)?)
                .ok_or_else(|| Error::InvalidGrid("mainlobe search needs a full-sphere grid".into()))?;
            if u > prev + tol {
                radius = Some(psi - walk);
                break;
            }
            if u <= tol {
                radius = Some(psi);
                break;
            }
            prev = u;
        }
        radii.push(radius.unwrap_or(opts.fallback_cap_deg.to_radians()));
    }

    let r = grid.region();
    let mut mask = vec![false; r.len()];
    for j in 0..r.n_phi {
        for i in 0..r.n_theta {
            let v = grid.direction(i, j).unit_vector();
            let psi = v.dot(&p).clamp(-1.0, 1.0).acos();
            let bearing = v.dot(&e2).atan2(v.dot(&e1)).rem_euclid(2.0 * PI);
            let f = bearing / (2.0 * PI) * n_b as f64;
            let k0 = (f.floor() as usize) % n_b;
            let t = f - f.floor();
            let limit = radii[k0] * (1.0 - t) + radii[(k0 + 1) % n_b] * t;
            mask[j * r.n_theta + i] = psi <= limit + 1e-12;
        }
    }
    mask[peak.1 * r.n_theta + peak.0] = true;
    Ok((mask, radii))
}

fn ratio_db(u: f64, peak: f64) -> f64 {
    10.0 * (u / peak).log10()
}

/// Peak, mainlobe, SLL and beamwidths of a full-sphere grid.
pub fn analyze_lobes(grid: &SphereGrid, opts: &LobeOptions) -> Result<LobeAnalysis> {
    if grid.values().is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    let p_rad = grid.radiated_power()?;
    let (pi, pj, peak_u) = grid.peak();
    if !(peak_u > 0.0) {
        return Err(Error::ZeroPower);
    }
    let (mask, radii) = mainlobe_region(grid, (pi, pj), opts)?;
    let side = grid
        .values()
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| !m)
        .map(|(&u, _)| u)
        .fold(None, |acc: Option<f64>, u| Some(acc.map_or(u, |a| a.max(u))));
    let sll_db = side.filter(|&s| s > 0.0).map(|s| ratio_db(s, peak_u));

    let dir = grid.direction(pi, pj);
    let theta_peak = grid.region().theta_deg(pi);
    let phi_peak = grid.region().phi_deg(pj);
    let elev = grid.cut(CutPlane::Elevation { theta_deg: theta_peak })?;
    let az = grid.cut(CutPlane::Azimuth { phi_deg: phi_peak })?;
    let hpbw = Hpbw {
        elevation_deg: half_power_width(&elev, cut_index(&elev, phi_peak)),
        azimuth_deg: half_power_width(&az, cut_index(&az, theta_peak)),
    };

    Ok(LobeAnalysis {
        peak_node: (pi, pj),
        peak_direction: dir,
        peak_u,
        peak_dbi: 10.0 * (4.0 * PI * peak_u / p_rad).log10(),
        sll_db,
        mainlobe_mask: mask,
        radii_deg: radii.into_iter().map(f64::to_degrees).collect(),
        hpbw,
    })
}

fn cut_index(cut: &PatternCut, angle: f64) -> usize {
    cut.angles_deg
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - angle).abs().total_cmp(&(b.1 - angle).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Indices of the mainlobe of a circular cut around sample `peak`: the run
/// over which the values do not rise again on either side.
fn cut_mainlobe(u: &[f64], peak: usize) -> Vec<bool> {
    let n = u.len();
    let mut main = vec![false; n];
    main[peak] = true;
    for dir in [1isize, -1] {
        let mut k = peak;
        for _ in 0..n - 1 {
            let next = (k as isize + dir).rem_euclid(n as isize) as usize;
            if main[next] || u[next] > u[k] {
                break;
            }
            main[next] = true;
            k = next;
        }
    }
    main
}

/// SLL of a circular 1-D cut in dB: the strongest sample outside the
/// mainlobe relative to the cut maximum. `None` if the cut has no sidelobe.
pub fn cut_sll(u: &[f64]) -> Option<f64> {
    if u.is_empty() {
        return None;
    }
    let (peak, &top) = u.iter().enumerate().fold((0, &u[0]), |b, x| if x.1 > b.1 { x } else { b });
    if !(top > 0.0) {
        return None;
    }
    let main = cut_mainlobe(u, peak);
    let side = u
        .iter()
        .zip(&main)
        .filter(|(_, &m)| !m)
        .map(|(&v, _)| v)
        .fold(0.0f64, f64::max);
    (side > 0.0).then(|| ratio_db(side, top))
}

/// Width between the -3 dB crossings around sample `peak`, linearly
/// interpolated in intensity. `None` if either side never drops below half.
pub fn half_power_width(cut: &PatternCut, peak: usize) -> Option<f64> {
    let u = &cut.u;
    let n = u.len();
    if n < 3 || !(u[peak] > 0.0) {
        return None;
    }
    let half = 0.5 * u[peak];
    let step = (cut.angles_deg[1] - cut.angles_deg[0]).abs();
    let mut width = 0.0;
    for dir in [1isize, -1] {
        let mut k = peak;
        let mut found = None;
        for s in 1..n {
            let next = (peak as isize + dir * s as isize).rem_euclid(n as isize) as usize;
            if u[next] < half {
                let t = (u[k] - half) / (u[k] - u[next]);
                found = Some((s as f64 - 1.0 + t) * step);
                break;
            }
            k = next;
        }
        width += found?;
    }
    (width < 360.0).then_some(width)
}

impl PatternCut {
    /// See [`cut_sll`].
    pub fn sll_db(&self) -> Option<f64> {
        cut_sll(&self.u)
    }
}

/// Regular steering grid in degrees, swept row-major (elevation rows,
/// azimuth ascending within a row).
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringGrid {
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
}

fn inclusive_range(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
        return Err(Error::NonFinite("steering range"));
    }
    if hi < lo {
        return Err(Error::EmptyRange(format!("[{lo}, {hi}]")));
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    if !(step > 0.0) {
        return Err(Error::InvalidGrid(format!("steering step {step}° must be positive")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

impl SteeringGrid {
    /// `θ_s ∈ [t0, t1]` and `φ_s ∈ [p0, p1]` with the given steps.
    pub fn regular(theta: (f64, f64, f64), phi: (f64, f64, f64)) -> Result<Self> {
        Ok(SteeringGrid {
            theta_deg: inclusive_range(theta.0, theta.1, theta.2)?,
            phi_deg: inclusive_range(phi.0, phi.1, phi.2)?,
        })
    }

    pub fn single(theta_deg: f64, phi_deg: f64) -> Self {
        SteeringGrid {
            theta_deg: vec![theta_deg],
            phi_deg: vec![phi_deg],
        }
    }

    pub fn len(&self) -> usize {
        self.theta_deg.len() * self.phi_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.phi_deg
            .iter()
            .flat_map(move |&p| self.theta_deg.iter().map(move |&t| (t, p)))
    }
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    pub step_deg: f64,
    pub lobes: LobeOptions,
    /// Amplitudes for every steer; unit amplitudes when `None`.
    pub amplitudes: Option<Vec<f64>>,
}

impl SweepOptions {
    pub fn with_step(step_deg: f64) -> Self {
        SweepOptions {
            step_deg,
            ..Default::default()
        }
    }
}

/// Result of one steering node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPoint {
    pub theta_scan_deg: f64,
    pub phi_scan_deg: f64,
    /// Directivity at the realized (grid) peak.
    pub directivity_dbi: f64,
    pub peak_theta_deg: f64,
    pub peak_phi_deg: f64,
    /// SLL of the 2-D mainlobe analysis.
    pub sll_db: Option<f64>,
    /// SLL of the elevation cut through the steering azimuth.
    pub elevation_sll_db: Option<f64>,
    /// SLL of the azimuth cut at the steering elevation.
    pub azimuth_sll_db: Option<f64>,
}

/// Which SLL figure of a [`ScanPoint`] to aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SllKind {
    Sphere,
    ElevationCut,
    AzimuthCut,
}

impl ScanPoint {
    pub fn sll(&self, kind: SllKind) -> Option<f64> {
        match kind {
            SllKind::Sphere => self.sll_db,
            SllKind::ElevationCut => self.elevation_sll_db,
            SllKind::AzimuthCut => self.azimuth_sll_db,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanContour {
    pub grid: SteeringGrid,
    /// One entry per steer in [`SteeringGrid::iter`] order.
    pub points: Vec<ScanPoint>,
}

/// Rectangular window of steering angles (degrees, inclusive).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanRange {
    pub theta_deg: (f64, f64),
    pub phi_deg: (f64, f64),
}

impl ScanRange {
    pub fn contains(&self, p: &ScanPoint) -> bool {
        let eps = 1e-9;
        p.theta_scan_deg >= self.theta_deg.0 - eps
            && p.theta_scan_deg <= self.theta_deg.1 + eps
            && p.phi_scan_deg >= self.phi_deg.0 - eps
            && p.phi_scan_deg <= self.phi_deg.1 + eps
    }
}

/// Steering angle spans where realized directivity stays within `floor_db`
/// of the contour maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FloorRange {
    pub theta_deg: (f64, f64),
    pub phi_deg: (f64, f64),
}

impl ScanContour {
    pub fn best(&self) -> Option<&ScanPoint> {
        self.points
            .iter()
            .fold(None, |b: Option<&ScanPoint>, p| match b {
                Some(b) if b.directivity_dbi >= p.directivity_dbi => Some(b),
                _ => Some(p),
            })
    }

    pub fn max_directivity(&self) -> Option<f64> {
        self.best().map(|p| p.directivity_dbi)
    }

    /// Largest (least negative) SLL over the sweep.
    pub fn worst_sll(&self, kind: SllKind) -> Option<f64> {
        self.points.iter().filter_map(|p| p.sll(kind)).reduce(f64::max)
    }

    pub fn scan_loss(&self, range: &ScanRange) -> Result<f64> {
        scan_loss(self, range)
    }

    pub fn range_at_floor(&self, floor_db: f64) -> Option<FloorRange> {
        let max = self.max_directivity()?;
        let ok: Vec<&ScanPoint> = self.points.iter().filter(|p| p.directivity_dbi >= max - floor_db).collect();
        let span = |f: fn(&ScanPoint) -> f64| {
            ok.iter().map(|p| f(p)).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
        };
        Some(FloorRange {
            theta_deg: span(|p| p.theta_scan_deg),
            phi_deg: span(|p| p.phi_scan_deg),
        })
    }

    /// Writes `theta_scan_deg,phi_scan_deg,directivity_dBi,sll_dB,peak_theta_deg,peak_phi_deg`.
    /// An absent SLL is left empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("theta_scan_deg,phi_scan_deg,directivity_dBi,sll_dB,peak_theta_deg,peak_phi_deg\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{:.6},{},{},{}\n",
                fmt_angle(p.theta_scan_deg),
                fmt_angle(p.phi_scan_deg),
                p.directivity_dbi,
                p.sll_db.map_or(String::new(), |s| format!("{s:.6}")),
                fmt_angle(p.peak_theta_deg),
                fmt_angle(p.peak_phi_deg)
            ));
        }
        write_file(path.as_ref(), &out)
    }
}

/// Nearest grid column/row angle to `a`.
fn snap(a: f64, origin: f64, step: f64) -> f64 {
    origin + ((a - origin) / step).round() * step
}

fn wrap_theta(t: f64) -> f64 {
    let w = (t + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Analyzes one sampled pattern as a sweep would.
pub fn scan_point(grid: &SphereGrid, steering: &SteeringVector, opts: &LobeOptions) -> Result<ScanPoint> {
    let lobes = analyze_lobes(grid, opts)?;
    let step = grid.step_deg();
    let ts = steering.theta_scan.to_degrees();
    let ps = steering.phi_scan.to_degrees();
    let theta_col = wrap_theta(snap(ts, -180.0, step));
    let phi_row = snap(ps, -90.0, step).clamp(-90.0, 90.0);
    let elevation = grid.cut(CutPlane::Elevation { theta_deg: theta_col })?;
    let azimuth = grid.cut(CutPlane::Azimuth { phi_deg: phi_row })?;
    let r = grid.region();
    Ok(ScanPoint {
        theta_scan_deg: ts,
        phi_scan_deg: ps,
        directivity_dbi: lobes.peak_dbi,
        peak_theta_deg: r.theta_deg(lobes.peak_node.0),
        peak_phi_deg: r.phi_deg(lobes.peak_node.1),
        sll_db: lobes.sll_db,
        elevation_sll_db: elevation.sll_db(),
        azimuth_sll_db: azimuth.sll_db(),
    })
}

/// Steers the array over `steering` and records directivity and SLL per node.
pub fn scan_sweep(model: &ArrayModel, steering: &SteeringGrid, opts: &SweepOptions) -> Result<ScanContour> {
    if steering.is_empty() {
        return Err(Error::EmptyRange("steering grid".into()));
    }
    let amplitudes = opts.amplitudes.clone().unwrap_or_else(|| vec![1.0; model.len()]);
    let cache = model.element_cache(opts.step_deg)?;
    let mut points = Vec::with_capacity(steering.len());
    for (t, p) in steering.iter() {
        let s = SteeringVector::from_degrees(t, p);
        let ex = Excitation::new(amplitudes.clone(), s)?;
        let grid = cache.sample(&model.weights(&ex)?)?;
        let mut point = scan_point(&grid, &s, &opts.lobes)?;
        point.theta_scan_deg = t;
        point.phi_scan_deg = p;
        points.push(point);
    }
    Ok(ScanContour {
        grid: steering.clone(),
        points,
    })
}

/// Realized directivity spread (max − min, dB) over the steers in `range`.
pub fn scan_loss(contour: &ScanContour, range: &ScanRange) -> Result<f64> {
    let ds: Vec<f64> = contour
        .points
        .iter()
        .filter(|p| range.contains(p))
        .map(|p| p.directivity_dbi)
        .collect();
    if ds.is_empty() {
        return Err(Error::EmptyRange(format!(
            "no steers with θ in [{}, {}] and φ in [{}, {}]",
            range.theta_deg.0, range.theta_deg.1, range.phi_deg.0, range.phi_deg.1
        )));
    }
    let max = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ds.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Default amplitude below which an element is switched off.
pub const DEFAULT_SWITCH_THRESHOLD: f64 = 0.05;

/// `true` for elements whose local gain towards the steer exceeds `threshold`.
pub fn switching_mask(model: &ArrayModel, steering: &SteeringVector, threshold: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidSpec(format!("switching threshold {threshold} outside [0, 1)")));
    }
    let r_hat = steering.direction().unit_vector();
    model
        .elements
        .iter()
        .zip(&model.patterns)
        .map(|(e, p)| {
            let d = (e.frame * r_hat).normalize();
            Ok(local_gain(p, &d)? > threshold)
        })
        .collect()
}

/// Splits `total_power` equally over the elements left on:
/// `a_i = sqrt(P / N_on)`.
pub fn amplitude_taper(mask: &[bool], total_power: f64) -> Result<Vec<f64>> {
    if !(total_power.is_finite() && total_power > 0.0) {
        return Err(Error::InvalidExcitation(format!("total power {total_power} must be positive")));
    }
    let on = mask.iter().filter(|&&m| m).count();
    if on == 0 {
        return Err(Error::InvalidExcitation("every element is switched off".into()));
    }
    let a = (total_power / on as f64).sqrt();
    Ok(mask.iter().map(|&m| if m { a } else { 0.0 }).collect())
}

/// One row of an array comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub elements: usize,
    pub max_directivity_dbi: f64,
    pub best_steer_deg: (f64, f64),
    pub worst_sll_db: Option<f64>,
    pub worst_elevation_sll_db: Option<f64>,
    pub scan_loss_db: f64,
    pub floor_range: FloorRange,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub floor_db: f64,
    pub rows: Vec<ComparisonRow>,
    pub contours: Vec<ScanContour>,
}

/// Sweeps every array over the same steering grid and tabulates the results.
pub fn compare_arrays(arrays: &[(String, ArrayModel)], steering: &SteeringGrid, opts: &SweepOptions) -> Result<ComparisonReport> {
    const FLOOR_DB: f64 = 3.0;
    let mut rows = Vec::new();
    let mut contours = Vec::new();
    for (name, model) in arrays {
        let c = scan_sweep(model, steering, opts)?;
        let best = c.best().expect("non-empty sweep");
        let all = ScanRange {
            theta_deg: (f64::NEG_INFINITY, f64::INFINITY),
            phi_deg: (f64::NEG_INFINITY, f64::INFINITY),
        };
        rows.push(ComparisonRow {
            name: name.clone(),
            elements: model.len(),
            max_directivity_dbi: best.directivity_dbi,
            best_steer_deg: (best.theta_scan_deg, best.phi_scan_deg),
            worst_sll_db: c.worst_sll(SllKind::Sphere),
            worst_elevation_sll_db: c.worst_sll(SllKind::ElevationCut),
            scan_loss_db: scan_loss(&c, &all)?,
            floor_range: c.range_at_floor(FLOOR_DB).expect("non-empty sweep"),
        });
        contours.push(c);
    }
    Ok(ComparisonReport {
        floor_db: FLOOR_DB,
        rows,
        contours,
    })
}

fn opt_db(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.2}"))
}

impl ComparisonReport {
    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<24} {:>4} {:>10} {:>16} {:>10} {:>10} {:>10} {:>26}\n",
            "array", "N", "maxD_dBi", "best_steer_deg", "SLL_dB", "elSLL_dB", "loss_dB",
            format!("range@-{}dB (theta;phi)", self.floor_db)
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<24} {:>4} {:>10.2} {:>16} {:>10} {:>10} {:>10.2} {:>26}\n",
                r.name,
                r.elements,
                r.max_directivity_dbi,
                format!("({}, {})", fmt_angle(r.best_steer_deg.0), fmt_angle(r.best_steer_deg.1)),
                opt_db(r.worst_sll_db),
                opt_db(r.worst_elevation_sll_db),
                r.scan_loss_db,
                format!(
                    "[{},{}];[{},{}]",
                    fmt_angle(r.floor_range.theta_deg.0),
                    fmt_angle(r.floor_range.theta_deg.1),
                    fmt_angle(r.floor_range.phi_deg.0),
                    fmt_angle(r.floor_range.phi_deg.1)
                )
            ));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from(
            "array,elements,max_directivity_dBi,best_theta_deg,best_phi_deg,worst_sll_dB,worst_elevation_sll_dB,scan_loss_dB,floor_theta_min_deg,floor_theta_max_deg,floor_phi_min_deg,floor_phi_max_deg\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{},{},{},{},{:.6},{},{},{},{}\n",
                r.name,
                r.elements,
                r.max_directivity_dbi,
                fmt_angle(r.best_steer_deg.0),
                fmt_angle(r.best_steer_deg.1),
                opt(r.worst_sll_db),
                opt(r.worst_elevation_sll_db),
                r.scan_loss_db,
                fmt_angle(r.floor_range.theta_deg.0),
                fmt_angle(r.floor_range.theta_deg.1),
                fmt_angle(r.floor_range.phi_deg.0),
                fmt_angle(r.floor_range.phi_deg.1)
            ));
        }
        write_file(path.as_ref(), &out)
    }
}
