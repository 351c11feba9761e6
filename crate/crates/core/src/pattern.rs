//! Element radiation laws and their projection to global coordinates.
//!
//! Patterns are evaluated in the element's local frame, where `x'` is the
//! outward normal. A local direction `d` maps to angles
//! `θ_L = atan2(d_y', d_x')` and `φ_L = asin(d_z')`, so boresight is
//! `(0, 0)`.

use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::ElementPlacement;

const UNIT_TOL: f64 = 1e-9;

/// Observation direction: azimuth `theta` in [-π, π], elevation `phi` in
/// [-π/2, π/2], both radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Self {
        Direction { theta, phi }
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Self {
        Direction::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// `r̂ = (cos φ cos θ, cos φ sin θ, sin φ)`.
    pub fn unit_vector(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(cp * ct, cp * st, sp)
    }

    /// Angles of a (not necessarily unit) nonzero vector.
    pub fn from_vector(v: &Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidVector(format!("cannot take the direction of {v:?}")));
        }
        let u = v / n;
        Ok(Direction::new(u.y.atan2(u.x), u.z.clamp(-1.0, 1.0).asin()))
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi.to_degrees()
    }
}

/// Gain law sampled on a regular local `(θ_L, φ_L)` grid (degrees).
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedPattern {
    theta_deg: Vec<f64>,
    phi_deg: Vec<f64>,
    /// Amplitudes indexed `[iphi * theta_deg.len() + itheta]`.
    values: Vec<f64>,
    polarization: Option<Vector3<f64>>,
}

#[derive(Deserialize)]
struct TableRow {
    theta_deg: f64,
    phi_deg: f64,
    amplitude: f64,
    px: Option<f64>,
    py: Option<f64>,
    pz: Option<f64>,
}

impl TabulatedPattern {
    /// Builds a table from axis samples and values laid out phi-major.
    /// The axes must be strictly increasing and cover at least the front
    /// hemisphere (`θ_L` and `φ_L` both spanning [-90°, 90°]).
    pub fn new(theta_deg: Vec<f64>, phi_deg: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("theta", &theta_deg), ("phi", &phi_deg)] {
            if axis.len() < 2 {
                return Err(Error::InvalidGrid(format!("{name} axis needs at least 2 samples")));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidGrid(format!("{name} axis must be finite and strictly increasing")));
            }
            if axis[0] > -90.0 + 1e-9 || axis[axis.len() - 1] < 90.0 - 1e-9 {
                return Err(Error::InvalidGrid(format!(
                    "{name} axis [{}, {}] does not cover the front hemisphere [-90, 90]",
                    axis[0],
                    axis[axis.len() - 1]
                )));
            }
        }
        if values.len() != theta_deg.len() * phi_deg.len() {
            return Err(Error::LengthMismatch {
                what: "tabulated pattern values",
                expected: theta_deg.len() * phi_deg.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidGrid("amplitudes must be finite and non-negative".into()));
        }
        Ok(TabulatedPattern {
            theta_deg,
            phi_deg,
            values,
            polarization: None,
        })
    }

    /// Reads `theta_deg,phi_deg,amplitude[,px,py,pz]`. Every `(θ, φ)`
    /// combination of the distinct axis values must appear exactly once.
    /// Polarization columns, when present, must be the same on every row.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| crate::surface::csv_error(path, e))?;
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<TableRow>().enumerate() {
            let row = rec.map_err(|e| crate::surface::csv_error(path, e))?;
            if !(row.theta_deg.is_finite() && row.phi_deg.is_finite()) {
                return Err(Error::parse(path, format!("line {}: non-finite angle", i + 2)));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::parse(path, "no pattern samples"));
        }

        let mut pol: Option<Option<[f64; 3]>> = None;
        for (i, r) in rows.iter().enumerate() {
            let this = match (r.px, r.py, r.pz) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                (None, None, None) => None,
                _ => return Err(Error::parse(path, format!("line {}: incomplete polarization", i + 2))),
            };
            match pol {
                None => pol = Some(this),
                Some(prev) if prev != this => {
                    return Err(Error::parse(
                        path,
                        format!("line {}: polarization differs from the first row", i + 2),
                    ))
                }
                _ => {}
            }
        }

        let axis = |f: fn(&TableRow) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let theta = axis(|r| r.theta_deg);
        let phi = axis(|r| r.phi_deg);
        let mut values = vec![f64::NAN; theta.len() * phi.len()];
        for (i, r) in rows.iter().enumerate() {
            let it = theta.binary_search_by(|v| v.total_cmp(&r.theta_deg)).unwrap();
            let ip = phi.binary_search_by(|v| v.total_cmp(&r.phi_deg)).unwrap();
            let slot = &mut values[ip * theta.len() + it];
            if !slot.is_nan() {
                return Err(Error::parse(
                    path,
                    format!("line {}: duplicate sample ({}, {})", i + 2, r.theta_deg, r.phi_deg),
                ));
            }
            *slot = r.amplitude;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::parse(path, "samples do not form a complete theta × phi grid"));
        }
        let mut table = Self::new(theta, phi, values).map_err(|e| Error::parse(path, e.to_string()))?;
        if let Some(Some(p)) = pol {
            let p = Vector3::from(p);
            table.polarization = Some(check_unit(p, "table polarization").map_err(|e| Error::parse(path, e.to_string()))?);
        }
        Ok(table)
    }

    /// Polarization given by the table's `px,py,pz` columns, if any.
    pub fn polarization(&self) -> Option<Vector3<f64>> {
        self.polarization
    }

    /// Bilinear interpolation at local angles (degrees); 0 outside the table.
    pub fn sample(&self, theta_deg: f64, phi_deg: f64) -> f64 {
        let (Some((it, tt)), Some((ip, tp))) = (bracket(&self.theta_deg, theta_deg), bracket(&self.phi_deg, phi_deg))
        else {
            return 0.0;
        };
        let nt = self.theta_deg.len();
        let v = |ip: usize, it: usize| self.values[ip * nt + it];
        let lo = v(ip, it) * (1.0 - tt) + v(ip, it + 1) * tt;
        let hi = v(ip + 1, it) * (1.0 - tt) + v(ip + 1, it + 1) * tt;
        lo * (1.0 - tp) + hi * tp
    }
}

/// Index of the left node and fractional offset of `x` in `axis`.
fn bracket(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let last = axis.len() - 1;
    if !(x >= axis[0] && x <= axis[last]) {
        return None;
    }
    let i = axis.partition_point(|&a| a <= x).saturating_sub(1).min(last - 1);
    Some((i, (x - axis[i]) / (axis[i + 1] - axis[i])))
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatternKind {
    Isotropic,
    /// Isotropic in the local H-plane with an `|cos φ_L|` elevation law.
    DipoleHIsotropic,
    /// `cos²φ_L · cos²θ_L` on the front hemisphere, zero behind.
    CosSquared,
    Tabulated(TabulatedPattern),
}

/// Radiation law plus optional local polarization.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementPattern {
    pub kind: PatternKind,
    polarization: Option<Vector3<f64>>,
}

fn check_unit(p: Vector3<f64>, what: &str) -> Result<Vector3<f64>> {
    let n = p.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidVector(format!("{what} has length {n}, expected 1")));
    }
    Ok(p)
}

impl ElementPattern {
    /// Non-polarized pattern of the given kind. A tabulated pattern that
    /// carries its own polarization columns is polarized accordingly.
    pub fn new(kind: PatternKind) -> Self {
        let polarization = match &kind {
            PatternKind::Tabulated(t) => t.polarization,
            _ => None,
        };
        ElementPattern { kind, polarization }
    }

    pub fn isotropic() -> Self {
        Self::new(PatternKind::Isotropic)
    }

    pub fn dipole() -> Self {
        Self::new(PatternKind::DipoleHIsotropic)
    }

    pub fn cos_squared() -> Self {
        Self::new(PatternKind::CosSquared)
    }

    /// Sets the local polarization `p̂'`, which must have unit length.
    pub fn with_polarization(mut self, p: Vector3<f64>) -> Result<Self> {
        self.polarization = Some(check_unit(p, "polarization")?);
        Ok(self)
    }

    pub fn without_polarization(mut self) -> Self {
        self.polarization = None;
        self
    }

    pub fn polarization(&self) -> Option<Vector3<f64>> {
        self.polarization
    }

    pub fn is_polarized(&self) -> bool {
        self.polarization.is_some()
    }
}

/// Amplitude of `pattern` towards the local unit direction `d_local`.
pub fn local_gain(pattern: &ElementPattern, d_local: &Vector3<f64>) -> Result<f64> {
    check_unit(*d_local, "local direction")?;
    Ok(gain_unchecked(&pattern.kind, d_local))
}

#[inline]
pub(crate) fn gain_unchecked(kind: &PatternKind, d: &Vector3<f64>) -> f64 {
    match kind {
        PatternKind::Isotropic => 1.0,
        // |cos φ_L| = sqrt(1 - d_z'^2)
        PatternKind::DipoleHIsotropic => d.x.hypot(d.y).min(1.0),
        // cos φ_L cos θ_L = d_x', so the product is d_x'^2.
        PatternKind::CosSquared => {
            if d.x > 0.0 {
                (d.x * d.x).min(1.0)
            } else {
                0.0
            }
        }
        PatternKind::Tabulated(t) => {
            let theta = d.y.atan2(d.x).to_degrees();
            let phi = d.z.clamp(-1.0, 1.0).asin().to_degrees();
            t.sample(theta, phi)
        }
    }
}

/// Element field in global coordinates towards `r_hat` (unit, global).
///
/// Polarized patterns give `Tᵀ(a p̂')`. Non-polarized ones carry the
/// amplitude on the global x-axis so that `|f| = a`. The field is real: the
/// element laws have no phase of their own.
#[inline]
pub(crate) fn element_field_unchecked(
    placement: &ElementPlacement,
    pattern: &ElementPattern,
    r_hat: &Vector3<f64>,
) -> Vector3<f64> {
    let d_local = placement.frame * r_hat;
    let a = gain_unchecked(&pattern.kind, &d_local);
    match pattern.polarization {
        Some(p) => placement.frame.tr_mul(&p) * a,
        None => Vector3::new(a, 0.0, 0.0),
    }
}

/// Element field in global coordinates towards `obs`.
pub fn global_element_field(placement: &ElementPlacement, pattern: &ElementPattern, obs: Direction) -> Result<Vector3<f64>> {
    if !(obs.theta.is_finite() && obs.phi.is_finite()) {
        return Err(Error::NonFinite("observation direction"));
    }
    let orth = (placement.frame * placement.frame.transpose() - nalgebra::Matrix3::identity()).abs().max();
    if !(orth < 1e-9) {
        return Err(Error::InvalidVector(format!(
            "element {} frame is not orthonormal (error {orth})",
            placement.index
        )));
    }
    Ok(element_field_unchecked(placement, pattern, &obs.unit_vector()))
}
