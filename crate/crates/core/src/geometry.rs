//! Element placement on the surface.
//!
//! Three layouts are supported: the parametric non-uniform conformal array
//! (geometric spacing on the inner rows, arithmetic on the outer rows),
//! a uniform conformal lattice, and a flat planar benchmark that shares the
//! uniform lattice's projected positions.
//!
//! Elements are always numbered row-major: rows from the most negative y
//! upwards, x ascending within a row. Weight vectors map onto elements in
//! that order.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{PolynomialSurface, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutKind {
    NonUniformConformal,
    UniformConformal,
    Planar,
}

impl std::fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LayoutKind::NonUniformConformal => "non-uniform-conformal",
            LayoutKind::UniformConformal => "uniform-conformal",
            LayoutKind::Planar => "planar",
        })
    }
}

/// Parameters of an array layout. Lengths in meters.
///
/// The non-uniform kind reads `dx1`, `ratio`, `x1_inner`, `x1_outer`,
/// `x_end_outer`, `dy1` and `dy2`; the uniform and planar kinds read `dx`
/// and `dy`. Unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub kind: LayoutKind,
    /// Elements per row (along x).
    pub n: usize,
    /// Number of rows (along y).
    pub m: usize,
    pub dx1: f64,
    pub ratio: f64,
    pub x1_inner: f64,
    pub x1_outer: f64,
    pub x_end_outer: f64,
    pub dy1: f64,
    pub dy2: f64,
    pub dx: f64,
    pub dy: f64,
    /// Height of the planar benchmark; defaults to the surface height at the
    /// domain center.
    pub planar_z: Option<f64>,
}

impl ArraySpec {
    /// The optimized 4×7 non-uniform geometry: dx1 = 20.7 mm, q = 0.98,
    /// inner rows from 107 mm, outer rows from 96.1 mm to the 221 mm domain
    /// edge, dy1 = 27 mm, dy2 = 24.1 mm.
    pub fn table_two() -> Self {
        ArraySpec {
            kind: LayoutKind::NonUniformConformal,
            n: 7,
            m: 4,
            dx1: 20.7e-3,
            ratio: 0.98,
            x1_inner: 107e-3,
            x1_outer: 96.1e-3,
            x_end_outer: 221e-3,
            dy1: 27e-3,
            dy2: 24.1e-3,
            dx: 0.0,
            dy: 0.0,
            planar_z: None,
        }
    }

    /// Equally spaced `n × m` lattice on the surface.
    pub fn uniform_conformal(n: usize, m: usize, dx: f64, dy: f64) -> Self {
        ArraySpec {
            kind: LayoutKind::UniformConformal,
            n,
            m,
            dx,
            dy,
            ..Self::table_two()
        }
    }

    /// Flat `n × m` lattice with all normals equal.
    pub fn planar(n: usize, m: usize, dx: f64, dy: f64) -> Self {
        ArraySpec {
            kind: LayoutKind::Planar,
            ..Self::uniform_conformal(n, m, dx, dy)
        }
    }

    pub fn element_count(&self) -> usize {
        self.n * self.m
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSpec(format!("n = {} (need at least 2 per row)", self.n)));
        }
        if self.m == 0 {
            return Err(Error::InvalidSpec("m = 0 rows".into()));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("{name} = {v} must be positive")))
            }
        };
        match self.kind {
            LayoutKind::NonUniformConformal => {
                if self.m != 2 && self.m != 4 {
                    return Err(Error::InvalidSpec(format!(
                        "non-uniform layout needs 2 or 4 rows, got {}",
                        self.m
                    )));
                }
                positive("dx1", self.dx1)?;
                positive("ratio", self.ratio)?;
                positive("dy1", self.dy1)?;
                if self.m == 4 {
                    positive("dy2", self.dy2)?;
                    if !(self.x_end_outer > self.x1_outer) {
                        return Err(Error::InvalidSpec(format!(
                            "outer rows end at {} m, not after their start {} m",
                            self.x_end_outer, self.x1_outer
                        )));
                    }
                }
                if !self.x1_inner.is_finite() {
                    return Err(Error::NonFinite("x1_inner"));
                }
            }
            LayoutKind::UniformConformal | LayoutKind::Planar => {
                positive("dx", self.dx)?;
                positive("dy", self.dy)?;
            }
        }
        Ok(())
    }
}

/// x-coordinates of an inner row: `x1 = x1_inner`, spacing `dx_n = dx1 q^(n-1)`.
pub fn x_positions_inner(spec: &ArraySpec) -> Result<Vec<f64>> {
    if spec.kind != LayoutKind::NonUniformConformal {
        return Err(Error::InvalidSpec(format!("{} layout has no inner rows", spec.kind)));
    }
    spec.validate()?;
    let mut xs = Vec::with_capacity(spec.n);
    let mut x = spec.x1_inner;
    let mut dx = spec.dx1;
    xs.push(x);
    for _ in 1..spec.n {
        x += dx;
        dx *= spec.ratio;
        xs.push(x);
    }
    Ok(xs)
}

/// x-coordinates of an outer row: arithmetic from `x1_outer` to `x_end_outer`.
pub fn x_positions_outer(spec: &ArraySpec) -> Result<Vec<f64>> {
    if spec.kind != LayoutKind::NonUniformConformal {
        return Err(Error::InvalidSpec(format!("{} layout has no outer rows", spec.kind)));
    }
    if !(spec.x_end_outer > spec.x1_outer) {
        return Err(Error::InvalidSpec(format!(
            "outer rows end at {} m, not after their start {} m",
            spec.x_end_outer, spec.x1_outer
        )));
    }
    if spec.n < 2 {
        return Err(Error::InvalidSpec(format!("n = {}", spec.n)));
    }
    let step = (spec.x_end_outer - spec.x1_outer) / (spec.n - 1) as f64;
    Ok((0..spec.n)
        .map(|i| {
            if i == spec.n - 1 {
                spec.x_end_outer
            } else {
                spec.x1_outer + i as f64 * step
            }
        })
        .collect())
}

/// How the local frame is rolled about the element normal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameRoll {
    /// `y'` and `z'` are the azimuth and elevation unit vectors of the
    /// normal's own `(θ, φ)` angles.
    #[default]
    NormalAngles,
    /// `y'` is the global y-axis projected onto the tangent plane
    /// (global x when the normal is parallel to y).
    ProjectedGlobalY,
}

/// Rotation whose rows are the local axes `(x' = normal, y', z')` in global
/// coordinates, so `v_local = T · v_global` and `T⁻¹ = Tᵀ`.
pub fn local_frame(normal: &Vector3<f64>, roll: FrameRoll) -> Result<Matrix3<f64>> {
    let norm = normal.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidVector(format!("normal has length {norm}, expected 1")));
    }
    let x = *normal;
    let (y, z) = match roll {
        FrameRoll::NormalAngles => {
            let horiz = x.x.hypot(x.y);
            let theta = if horiz < 1e-12 { 0.0 } else { x.y.atan2(x.x) };
            let (st, ct) = theta.sin_cos();
            let y = Vector3::new(-st, ct, 0.0);
            // x' × y' = (-sinφ cosθ, -sinφ sinθ, cosφ), the elevation vector.
            (y, x.cross(&y))
        }
        FrameRoll::ProjectedGlobalY => {
            let project = |g: Vector3<f64>| g - x * g.dot(&x);
            let mut y = project(Vector3::y());
            if y.norm() < 1e-6 {
                y = project(Vector3::x());
            }
            let y = y.normalize();
            (y, x.cross(&y))
        }
    };
    Ok(Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]))
}

/// A placed element: position, outward normal and local frame (all GCS).
#[derive(Clone, Debug, PartialEq)]
pub struct ElementPlacement {
    pub index: usize,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub frame: Matrix3<f64>,
}

impl ElementPlacement {
    pub fn new(index: usize, position: Vector3<f64>, normal: Vector3<f64>, roll: FrameRoll) -> Result<Self> {
        let normal = normal.normalize();
        let frame = local_frame(&normal, roll)?;
        Ok(ElementPlacement {
            index,
            position,
            normal,
            frame,
        })
    }

    pub fn to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.frame * v
    }

    pub fn to_global(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.frame.transpose() * v
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayoutOptions {
    pub side: Side,
    pub roll: FrameRoll,
    /// Reject every element outside the surface domain.
    pub strict_domain: bool,
    /// Outside the domain by less than this (meters), non-strict layouts
    /// extrapolate the surface with a warning instead of failing.
    pub max_extrapolation: f64,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        LayoutOptions {
            side: Side::Down,
            roll: FrameRoll::NormalAngles,
            strict_domain: false,
            max_extrapolation: 5e-3,
        }
    }
}

/// Placed elements plus the indices that needed surface extrapolation.
#[derive(Clone, Debug)]
pub struct Layout {
    pub elements: Vec<ElementPlacement>,
    pub extrapolated: Vec<usize>,
}

const DOMAIN_TOL: f64 = 1e-9;

/// Projected `(x, y)` of every element in row-major order.
pub fn lattice_xy(spec: &ArraySpec, surface: &PolynomialSurface) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    let mut xy = Vec::with_capacity(spec.element_count());
    match spec.kind {
        LayoutKind::NonUniformConformal => {
            let inner = x_positions_inner(spec)?;
            let half = 0.5 * spec.dy1;
            let rows: Vec<(f64, Vec<f64>)> = if spec.m == 4 {
                let outer = x_positions_outer(spec)?;
                let edge = half + spec.dy2;
                vec![
                    (-edge, outer.clone()),
                    (-half, inner.clone()),
                    (half, inner),
                    (edge, outer),
                ]
            } else {
                vec![(-half, inner.clone()), (half, inner)]
            };
            for (y, xs) in rows {
                xy.extend(xs.into_iter().map(|x| (x, y)));
            }
        }
        LayoutKind::UniformConformal | LayoutKind::Planar => {
            let (cx, cy) = surface.domain().center();
            let x0 = cx - 0.5 * (spec.n - 1) as f64 * spec.dx;
            let y0 = cy - 0.5 * (spec.m - 1) as f64 * spec.dy;
            for j in 0..spec.m {
                let y = y0 + j as f64 * spec.dy;
                xy.extend((0..spec.n).map(|i| (x0 + i as f64 * spec.dx, y)));
            }
        }
    }
    Ok(xy)
}

/// Places the elements of `spec` on `surface`.
pub fn layout(spec: &ArraySpec, surface: &PolynomialSurface, opts: &LayoutOptions) -> Result<Layout> {
    let xy = lattice_xy(spec, surface)?;
    let domain = surface.domain();
    let mut extrapolated = Vec::new();
    for (index, &(x, y)) in xy.iter().enumerate() {
        if domain.contains(x, y, DOMAIN_TOL) {
            continue;
        }
        if opts.strict_domain || !domain.contains(x, y, opts.max_extrapolation) {
            return Err(Error::OutOfDomain { index, x, y });
        }
        log::warn!(
            "element {index} at ({:.3}, {:.3}) mm is outside the surface domain; extrapolating",
            x * 1e3,
            y * 1e3
        );
        extrapolated.push(index);
    }

    let planar_z = match spec.kind {
        LayoutKind::Planar => Some(match spec.planar_z {
            Some(z) => z,
            None => {
                let (cx, cy) = domain.center();
                surface.evaluate(cx, cy)?
            }
        }),
        _ => None,
    };

    let elements = xy
        .into_iter()
        .enumerate()
        .map(|(index, (x, y))| {
            let (z, normal) = match planar_z {
                Some(z) => (z, Vector3::new(0.0, 0.0, opts.side.sign())),
                None => (surface.evaluate(x, y)?, surface.normal_at(x, y, opts.side)?),
            };
            ElementPlacement::new(index, Vector3::new(x, y, z), normal, opts.roll)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Layout {
        elements,
        extrapolated,
    })
}

/// Writes `index,x,y,z,nx,ny,nz` (meters), optionally followed by the nine
/// frame entries `t11..t33` (row-major).
pub fn write_layout_csv(path: impl AsRef<Path>, elements: &[ElementPlacement], with_frames: bool) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("index,x,y,z,nx,ny,nz");
    if with_frames {
        for r in 1..=3 {
            for c in 1..=3 {
                out.push_str(&format!(",t{r}{c}"));
            }
        }
    }
    out.push('\n');
    for e in elements {
        let p = e.position;
        let n = e.normal;
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            e.index, p.x, p.y, p.z, n.x, n.y, n.z
        ));
        if with_frames {
            for r in 0..3 {
                for c in 0..3 {
                    out.push_str(&format!(",{:.12e}", e.frame[(r, c)]));
                }
            }
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
