//! Run configuration: JSON with lengths in millimeters and angles in degrees.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use conformal_array::farfield::{ArrayModel, FieldOptions, RadioConfig};
use conformal_array::geometry::{layout, ArraySpec, FrameRoll, Layout, LayoutKind, LayoutOptions};
use conformal_array::metrics::{LobeOptions, SteeringGrid};
use conformal_array::optimize::{read_weights_csv, table_three_weights};
use conformal_array::pattern::{ElementPattern, PatternKind, TabulatedPattern};
use conformal_array::surface::{Domain, PolynomialSurface, Side, SurfaceSamples};
use nalgebra::Vector3;
use serde::Deserialize;

use crate::AppError;

// Millimeters per meter; dividing keeps values like 20.8 mm correctly rounded.
const MM: f64 = 1e3;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub surface: SurfaceConfig,
    #[serde(default)]
    pub arrays: Vec<ArrayConfig>,
    #[serde(default)]
    pub element: ElementConfig,
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    #[serde(default = "default_step")]
    pub sphere_step_deg: f64,
    pub steering: Option<SteeringConfig>,
    #[serde(default)]
    pub frame_roll: FrameRoll,
    #[serde(default)]
    pub side: Side,
    #[serde(default)]
    pub strict_domain: bool,
    #[serde(default = "default_extrapolation")]
    pub max_extrapolation_mm: f64,
    #[serde(default = "yes")]
    pub transverse_projection: bool,
    #[serde(default)]
    pub lobes: LobeConfig,
    /// `"table-three"` or a path to an `index,weight` CSV.
    pub weights: Option<String>,
    /// Switch off elements below this relative contribution (pattern only).
    pub switch_threshold: Option<f64>,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    pub output_dir: Option<String>,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn default_frequency() -> f64 {
    conformal_array::farfield::DEFAULT_FREQUENCY
}

fn default_step() -> f64 {
    1.0
}

fn default_extrapolation() -> f64 {
    5.0
}

fn yes() -> bool {
    true
}

/// Exactly one of the sources must be given.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    /// `"table-one"`.
    pub builtin: Option<String>,
    /// Surface JSON as written by `conformal fit` (meters).
    pub file: Option<String>,
    /// `x,y,z` samples in meters, fitted on load.
    pub samples: Option<String>,
    /// Inline coefficients `p<j><k>` of `x^j y^k` in the meter basis.
    pub coefficients: Option<BTreeMap<String, f64>>,
    pub domain_mm: Option<DomainMm>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainMm {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default = "half")]
    pub step: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub name: Option<String>,
    pub kind: LayoutKind,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub dx_mm: Option<f64>,
    pub dy_mm: Option<f64>,
    pub dx1_mm: Option<f64>,
    pub ratio: Option<f64>,
    pub x1_inner_mm: Option<f64>,
    pub x1_outer_mm: Option<f64>,
    pub x_end_outer_mm: Option<f64>,
    pub dy1_mm: Option<f64>,
    pub dy2_mm: Option<f64>,
    pub planar_z_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Isotropic,
    Dipole,
    CosSquared,
    Tabulated,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementConfig {
    pub kind: ElementKind,
    /// Table CSV for the tabulated kind.
    pub file: Option<String>,
    /// Local polarization; `null` for a scalar pattern.
    #[serde(default = "default_polarization")]
    pub polarization: Option<[f64; 3]>,
}

fn default_polarization() -> Option<[f64; 3]> {
    Some([0.0, 0.0, 1.0])
}

impl Default for ElementConfig {
    fn default() -> Self {
        ElementConfig {
            kind: ElementKind::CosSquared,
            file: None,
            polarization: default_polarization(),
        }
    }
}

/// A single angle or an inclusive `[start, stop, step]` range.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    Single(f64),
    Range([f64; 3]),
}

impl AngleSpec {
    fn triple(self) -> (f64, f64, f64) {
        match self {
            AngleSpec::Single(a) => (a, a, 1.0),
            AngleSpec::Range([a, b, s]) => (a, b, s),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringConfig {
    pub theta_deg: AngleSpec,
    pub phi_deg: AngleSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LobeConfig {
    #[serde(default = "default_cap")]
    pub fallback_cap_deg: f64,
    #[serde(default = "default_bearings")]
    pub bearings: usize,
}

fn default_cap() -> f64 {
    20.0
}

fn default_bearings() -> usize {
    8
}

impl Default for LobeConfig {
    fn default() -> Self {
        LobeConfig {
            fallback_cap_deg: default_cap(),
            bearings: default_bearings(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub u_ref: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Everything a command needs, resolved and validated.
pub struct Setup {
    pub arrays: Vec<ArraySetup>,
    pub steering: Option<SteeringGrid>,
    pub step_deg: f64,
    pub lobes: LobeOptions,
    pub weights: Option<Vec<f64>>,
    pub switch_threshold: Option<f64>,
    pub optimize: OptimizeConfig,
    pub out_dir: PathBuf,
    pub plots: bool,
}

pub struct ArraySetup {
    pub name: String,
    pub spec: ArraySpec,
    pub layout: Layout,
    pub model: ArrayModel,
}

/// Overrides from the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub step: Option<f64>,
    pub strict_domain: bool,
}

pub fn load(path: &Path) -> Result<RunConfig, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::input(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl ArrayConfig {
    fn to_spec(&self, at: &str, problems: &mut Vec<String>) -> Option<ArraySpec> {
        let mm = |v: Option<f64>| v.map(|x| x / MM);
        let require = |v: Option<f64>, field: &str, problems: &mut Vec<String>| {
            if v.is_none() {
                problems.push(format!("{at}.{field}: required for {}", self.kind));
            }
            v.unwrap_or(0.0)
        };
        let mut spec = match self.kind {
            LayoutKind::NonUniformConformal => {
                let t = ArraySpec::table_two();
                ArraySpec {
                    n: self.n.unwrap_or(t.n),
                    m: self.m.unwrap_or(t.m),
                    dx1: mm(self.dx1_mm).unwrap_or(t.dx1),
                    ratio: self.ratio.unwrap_or(t.ratio),
                    x1_inner: mm(self.x1_inner_mm).unwrap_or(t.x1_inner),
                    x1_outer: mm(self.x1_outer_mm).unwrap_or(t.x1_outer),
                    x_end_outer: mm(self.x_end_outer_mm).unwrap_or(t.x_end_outer),
                    dy1: mm(self.dy1_mm).unwrap_or(t.dy1),
                    dy2: mm(self.dy2_mm).unwrap_or(t.dy2),
                    ..t
                }
            }
            kind => {
                let dx = require(mm(self.dx_mm), "dx_mm", problems);
                let dy = require(mm(self.dy_mm), "dy_mm", problems);
                let (n, m) = (self.n.unwrap_or(7), self.m.unwrap_or(4));
                if kind == LayoutKind::Planar {
                    ArraySpec::planar(n, m, dx, dy)
                } else {
                    ArraySpec::uniform_conformal(n, m, dx, dy)
                }
            }
        };
        if self.planar_z_mm.is_some() && self.kind != LayoutKind::Planar {
            problems.push(format!("{at}.planar_z_mm: only valid for planar arrays"));
        }
        spec.planar_z = mm(self.planar_z_mm);
        if let Err(e) = spec.validate() {
            problems.push(format!("{at}: {e}"));
            return None;
        }
        Some(spec)
    }
}

impl RunConfig {
    /// Resolves and validates the configuration. Every problem found is
    /// listed in the returned error.
    pub fn build(&self, config_path: &Path, ov: &Overrides, need_arrays: bool) -> Result<Setup, AppError> {
        let base = config_path.parent().unwrap_or(Path::new("."));
        let mut problems = Vec::new();

        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            problems.push(format!("frequency_hz: {} must be positive", self.frequency_hz));
        }
        let step_deg = ov.step.unwrap_or(self.sphere_step_deg);
        if !(step_deg.is_finite() && step_deg > 0.0) || conformal_array::farfield::GridRegion::full(step_deg).is_err() {
            problems.push(format!("sphere_step_deg: {step_deg} must be positive and divide 180"));
        }
        if !(self.max_extrapolation_mm.is_finite() && self.max_extrapolation_mm >= 0.0) {
            problems.push(format!("max_extrapolation_mm: {} must be ≥ 0", self.max_extrapolation_mm));
        }
        if let Some(t) = self.switch_threshold {
            if !(0.0..1.0).contains(&t) {
                problems.push(format!("switch_threshold: {t} must lie in [0, 1)"));
            }
        }
        if !(self.lobes.fallback_cap_deg > 0.0 && self.lobes.fallback_cap_deg <= 180.0) {
            problems.push(format!("lobes.fallback_cap_deg: {} must lie in (0, 180]", self.lobes.fallback_cap_deg));
        }
        if self.lobes.bearings < 3 {
            problems.push(format!("lobes.bearings: {} must be at least 3", self.lobes.bearings));
        }
        if let Some(u) = self.optimize.u_ref {
            if !(u.is_finite() && u > 0.0) {
                problems.push(format!("optimize.u_ref: {u} must be positive"));
            }
        }
        if let Some(t) = self.optimize.tol {
            if !(t.is_finite() && t > 0.0) {
                problems.push(format!("optimize.tol: {t} must be positive"));
            }
        }

        let surface = self.surface_source(base, &mut problems);
        let pattern = self.element_pattern(base, &mut problems);

        let steering = self.steering.as_ref().and_then(|s| {
            SteeringGrid::regular(s.theta_deg.triple(), s.phi_deg.triple())
                .map_err(|e| problems.push(format!("steering: {e}")))
                .ok()
        });
        if let Some(g) = &steering {
            if g.theta_deg.iter().chain(&g.phi_deg).any(|a| !a.is_finite())
                || g.phi_deg.iter().any(|p| p.abs() > 90.0)
            {
                problems.push("steering.phi_deg: elevations must lie in [-90, 90]".into());
            }
        }

        if need_arrays && self.arrays.is_empty() {
            problems.push("arrays: at least one array is required".into());
        }
        let mut names = BTreeSet::new();
        let mut specs = Vec::new();
        for (i, a) in self.arrays.iter().enumerate() {
            let at = format!("arrays[{i}]");
            let name = a.name.clone().unwrap_or_else(|| a.kind.to_string());
            if !valid_name(&name) {
                problems.push(format!("{at}.name: `{name}` may only contain letters, digits, '-' and '_'"));
            } else if !names.insert(name.clone()) {
                problems.push(format!("{at}.name: `{name}` is used twice"));
            }
            if let Some(spec) = a.to_spec(&at, &mut problems) {
                specs.push((name, spec));
            }
        }

        let weights = match self.weights.as_deref() {
            None => None,
            Some("table-three") => Some(table_three_weights()),
            Some(p) => {
                let path = resolve(base, p);
                match read_weights_csv(&path) {
                    Ok(w) => Some(w),
                    Err(e) => {
                        problems.push(format!("weights: {e}"));
                        None
                    }
                }
            }
        };
        if weights.is_some() && self.switch_threshold.is_some() {
            problems.push("weights, switch_threshold: give at most one amplitude source".into());
        }

        if !problems.is_empty() {
            return Err(AppError::config(problems));
        }
        let (surface, pattern) = (surface.expect("validated"), pattern.expect("validated"));

        let radio = RadioConfig::new(self.frequency_hz).map_err(AppError::from)?;
        let opts = LayoutOptions {
            side: self.side,
            roll: self.frame_roll,
            strict_domain: self.strict_domain || ov.strict_domain,
            max_extrapolation: self.max_extrapolation_mm / MM,
        };
        let mut arrays = Vec::new();
        for (name, spec) in specs {
            let layout = layout(&spec, &surface, &opts).map_err(|e| AppError::input(format!("array `{name}`: {e}")))?;
            if let Some(w) = &weights {
                if w.len() != layout.elements.len() {
                    problems.push(format!("weights: {} values for the {} elements of `{name}`", w.len(), layout.elements.len()));
                }
            }
            let model = ArrayModel::with_pattern(layout.elements.clone(), &pattern, radio)
                .map_err(AppError::from)?
                .with_options(FieldOptions {
                    transverse: self.transverse_projection,
                });
            arrays.push(ArraySetup { name, spec, layout, model });
        }
        if !problems.is_empty() {
            return Err(AppError::config(problems));
        }

        let out_dir = match (&ov.out, &self.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => resolve(base, o),
            (None, None) => PathBuf::from("out"),
        };
        Ok(Setup {
            arrays,
            steering,
            step_deg,
            lobes: LobeOptions {
                fallback_cap_deg: self.lobes.fallback_cap_deg,
                bearings: self.lobes.bearings,
                walk_step_deg: None,
            },
            weights,
            switch_threshold: self.switch_threshold,
            optimize: OptimizeConfig {
                u_ref: self.optimize.u_ref,
                tol: self.optimize.tol,
                max_iter: self.optimize.max_iter,
            },
            out_dir,
            plots: self.plots,
        })
    }

    fn surface_source(&self, base: &Path, problems: &mut Vec<String>) -> Option<PolynomialSurface> {
        let s = &self.surface;
        let given = [s.builtin.is_some(), s.file.is_some(), s.samples.is_some(), s.coefficients.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if given != 1 {
            problems.push(format!(
                "surface: give exactly one of builtin, file, samples, coefficients ({given} given)"
            ));
            return None;
        }
        if s.domain_mm.is_some() && s.coefficients.is_none() && s.samples.is_none() {
            problems.push("surface.domain_mm: only used with coefficients or samples".into());
        }
        let domain = s.domain_mm.as_ref().map(|d| Domain::new(d.x_min / MM, d.x_max / MM, d.y_min / MM, d.y_max / MM, d.step / MM));
        let domain = match domain {
            Some(Err(e)) => {
                problems.push(format!("surface.domain_mm: {e}"));
                return None;
            }
            Some(Ok(d)) => Some(d),
            None => None,
        };
        let result = if let Some(b) = &s.builtin {
            if b == "table-one" {
                Ok(PolynomialSurface::table_one())
            } else {
                problems.push(format!("surface.builtin: unknown surface `{b}` (expected table-one)"));
                return None;
            }
        } else if let Some(f) = &s.file {
            PolynomialSurface::read_json(resolve(base, f))
        } else if let Some(f) = &s.samples {
            SurfaceSamples::read_csv(resolve(base, f)).and_then(|samples| {
                let d = match domain {
                    Some(d) => d,
                    None => samples.bounding_domain()?,
                };
                PolynomialSurface::fit(&samples, d).map(|(s, rmse)| {
                    log::info!("fitted surface, rmse {rmse:.3e} m");
                    s
                })
            })
        } else {
            let Some(d) = domain else {
                problems.push("surface.domain_mm: required with inline coefficients".into());
                return None;
            };
            let file = conformal_array::surface::SurfaceFile {
                coefficients: s.coefficients.clone().unwrap_or_default(),
                domain: conformal_array::surface::DomainBounds {
                    x_min: d.x_min,
                    x_max: d.x_max,
                    y_min: d.y_min,
                    y_max: d.y_max,
                },
                grid_step: d.step,
            };
            file.into_surface()
        };
        result.map_err(|e| problems.push(format!("surface: {e}"))).ok()
    }

    fn element_pattern(&self, base: &Path, problems: &mut Vec<String>) -> Option<ElementPattern> {
        let e = &self.element;
        if e.file.is_some() && e.kind != ElementKind::Tabulated {
            problems.push("element.file: only used by the tabulated kind".into());
        }
        let pattern = match e.kind {
            ElementKind::Isotropic => ElementPattern::isotropic(),
            ElementKind::Dipole => ElementPattern::dipole(),
            ElementKind::CosSquared => ElementPattern::cos_squared(),
            ElementKind::Tabulated => {
                let Some(f) = &e.file else {
                    problems.push("element.file: required for the tabulated kind".into());
                    return None;
                };
                match TabulatedPattern::read_csv(resolve(base, f)) {
                    Ok(t) => ElementPattern::new(PatternKind::Tabulated(t)),
                    Err(err) => {
                        problems.push(format!("element.file: {err}"));
                        return None;
                    }
                }
            }
        };
        match e.polarization {
            None => Some(pattern.without_polarization()),
            Some(p) => {
                let v = Vector3::new(p[0], p[1], p[2]);
                if e.kind == ElementKind::Tabulated && pattern.is_polarized() && self.element_polarization_defaulted() {
                    return Some(pattern);
                }
                pattern
                    .with_polarization(v)
                    .map_err(|err| problems.push(format!("element.polarization: {err}")))
                    .ok()
            }
        }
    }

    /// A table that carries its own polarization columns keeps them unless
    /// the config sets a different vector explicitly.
    fn element_polarization_defaulted(&self) -> bool {
        self.element.polarization == default_polarization()
    }
}
