//! Steered array fields, radiation intensity and directivity.
//!
//! The array field towards `r̂` is the superposition
//! `E(r̂) = Σ f_i(r̂) w_i e^{-jk r_i·r̂}` with steering weights
//! `w_i = a_i e^{-jk r_i·r_s}` and `r_s = -r̂(θ_s, φ_s)`. At the scan
//! direction the two phase terms cancel exactly.
//!
//! Sphere grids cover `θ ∈ [-180°, 180°)` and `φ ∈ [-90°, 90°]` on a
//! regular step, stored phi-major (`u[j * n_theta + i]`).

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ElementPlacement;
use crate::pattern::{element_field_unchecked, Direction, ElementPattern};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Operating frequency of the shipped UAV array.
pub const DEFAULT_FREQUENCY: f64 = 5.8e9;

/// Directivity written to CSV files where the intensity is exactly zero.
pub const DB_FLOOR: f64 = -200.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadioConfig {
    frequency: f64,
    wavelength: f64,
    wavenumber: f64,
}

impl RadioConfig {
    pub fn new(frequency: f64) -> Result<Self> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::InvalidSpec(format!("frequency {frequency} Hz must be positive")));
        }
        let wavelength = SPEED_OF_LIGHT / frequency;
        Ok(RadioConfig {
            frequency,
            wavelength,
            wavenumber: 2.0 * PI / wavelength,
        })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig::new(DEFAULT_FREQUENCY).unwrap()
    }
}

/// Beam steering direction and its vector `r_s = -r̂(θ_s, φ_s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteeringVector {
    pub theta_scan: f64,
    pub phi_scan: f64,
    pub r_s: Vector3<f64>,
}

impl SteeringVector {
    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Self {
        steering_vector(theta_deg.to_radians(), phi_deg.to_radians())
    }

    pub fn direction(&self) -> Direction {
        Direction::new(self.theta_scan, self.phi_scan)
    }
}

pub fn steering_vector(theta_scan: f64, phi_scan: f64) -> SteeringVector {
    SteeringVector {
        theta_scan,
        phi_scan,
        r_s: -Direction::new(theta_scan, phi_scan).unit_vector(),
    }
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Per-element steering phase `-k r_i·r_s`, wrapped to (-π, π].
pub fn steering_phases(placements: &[ElementPlacement], steering: &SteeringVector, radio: &RadioConfig) -> Vec<f64> {
    placements
        .iter()
        .map(|e| wrap_phase(-radio.wavenumber * e.position.dot(&steering.r_s)))
        .collect()
}

/// Element amplitudes plus steering, or explicit complex weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Excitation {
    amplitudes: Vec<f64>,
    steering: SteeringVector,
    explicit_weights: Option<Vec<Complex64>>,
}

impl Excitation {
    pub fn new(amplitudes: Vec<f64>, steering: SteeringVector) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidExcitation("amplitudes must be finite and non-negative".into()));
        }
        if !amplitudes.iter().any(|&a| a > 0.0) {
            return Err(Error::InvalidExcitation("all amplitudes are zero".into()));
        }
        Ok(Excitation {
            amplitudes,
            steering,
            explicit_weights: None,
        })
    }

    /// Unit amplitudes on `n` elements.
    pub fn uniform(n: usize, steering: SteeringVector) -> Self {
        Excitation {
            amplitudes: vec![1.0; n],
            steering,
            explicit_weights: None,
        }
    }

    /// Complex weights used verbatim instead of `a_i e^{-jk r_i·r_s}`.
    pub fn explicit(weights: Vec<Complex64>, steering: SteeringVector) -> Result<Self> {
        if weights.iter().any(|w| !(w.re.is_finite() && w.im.is_finite())) {
            return Err(Error::InvalidExcitation("non-finite weight".into()));
        }
        if !weights.iter().any(|w| w.norm_sqr() > 0.0) {
            return Err(Error::InvalidExcitation("all weights are zero".into()));
        }
        Ok(Excitation {
            amplitudes: weights.iter().map(|w| w.norm()).collect(),
            steering,
            explicit_weights: Some(weights),
        })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn steering(&self) -> &SteeringVector {
        &self.steering
    }

    pub fn explicit_weights(&self) -> Option<&[Complex64]> {
        self.explicit_weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Every amplitude (or explicit weight) multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidExcitation(format!("scale factor {c} must be positive")));
        }
        Ok(Excitation {
            amplitudes: self.amplitudes.iter().map(|a| a * c).collect(),
            steering: self.steering,
            explicit_weights: self
                .explicit_weights
                .as_ref()
                .map(|w| w.iter().map(|w| w * c).collect()),
        })
    }

    /// Complex weights `w_i` for the given element positions.
    pub fn weights(&self, placements: &[ElementPlacement], radio: &RadioConfig) -> Result<Vec<Complex64>> {
        if self.amplitudes.len() != placements.len() {
            return Err(Error::LengthMismatch {
                what: "excitation",
                expected: placements.len(),
                actual: self.amplitudes.len(),
            });
        }
        if let Some(w) = &self.explicit_weights {
            return Ok(w.clone());
        }
        Ok(placements
            .iter()
            .zip(&self.amplitudes)
            .map(|(e, &a)| Complex64::from_polar(a, -radio.wavenumber * e.position.dot(&self.steering.r_s)))
            .collect())
    }
}

/// Field-evaluation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldOptions {
    /// Drop the radial part of polarized element fields, keeping only the
    /// components transverse to the observation direction. Non-polarized
    /// patterns are scalar and unaffected.
    pub transverse: bool,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions { transverse: true }
    }
}

/// Squared field magnitude `‖E‖²`.
pub fn intensity(e: &Vector3<Complex64>) -> f64 {
    e.x.norm_sqr() + e.y.norm_sqr() + e.z.norm_sqr()
}

/// Placed elements with their patterns and the operating point.
#[derive(Clone, Debug)]
pub struct ArrayModel {
    pub elements: Vec<ElementPlacement>,
    pub patterns: Vec<ElementPattern>,
    pub radio: RadioConfig,
    pub options: FieldOptions,
}

impl ArrayModel {
    pub fn new(elements: Vec<ElementPlacement>, patterns: Vec<ElementPattern>, radio: RadioConfig) -> Result<Self> {
        if elements.len() != patterns.len() {
            return Err(Error::LengthMismatch {
                what: "element patterns",
                expected: elements.len(),
                actual: patterns.len(),
            });
        }
        if elements.is_empty() {
            return Err(Error::InvalidSpec("array has no elements".into()));
        }
        Ok(ArrayModel {
            elements,
            patterns,
            radio,
            options: FieldOptions::default(),
        })
    }

    /// Every element gets a copy of `pattern`.
    pub fn with_pattern(elements: Vec<ElementPlacement>, pattern: &ElementPattern, radio: RadioConfig) -> Result<Self> {
        let patterns = vec![pattern.clone(); elements.len()];
        Self::new(elements, patterns, radio)
    }

    pub fn with_options(mut self, options: FieldOptions) -> Self {
        self.options = options;
        self
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Unit-amplitude excitation steered to `steering`.
    pub fn uniform_excitation(&self, steering: SteeringVector) -> Excitation {
        Excitation::uniform(self.len(), steering)
    }

    pub fn weights(&self, ex: &Excitation) -> Result<Vec<Complex64>> {
        ex.weights(&self.elements, &self.radio)
    }

    /// Contribution of element `i` towards `r_hat` before weighting:
    /// `f_i(r̂) e^{-jk r_i·r̂}`.
    #[inline]
    pub(crate) fn element_term(&self, i: usize, r_hat: &Vector3<f64>) -> Vector3<Complex64> {
        let e = &self.elements[i];
        let pattern = &self.patterns[i];
        let mut f = element_field_unchecked(e, pattern, r_hat);
        if self.options.transverse && pattern.is_polarized() {
            f -= r_hat * f.dot(r_hat);
        }
        let phase = Complex64::from_polar(1.0, -self.radio.wavenumber * e.position.dot(r_hat));
        Vector3::new(phase * f.x, phase * f.y, phase * f.z)
    }

    #[inline]
    fn field_unchecked(&self, weights: &[Complex64], r_hat: &Vector3<f64>) -> Vector3<Complex64> {
        let mut acc = Vector3::<Complex64>::zeros();
        for (i, w) in weights.iter().enumerate() {
            acc += self.element_term(i, r_hat) * *w;
        }
        acc
    }

    /// Array field towards `obs`.
    pub fn field(&self, ex: &Excitation, obs: Direction) -> Result<Vector3<Complex64>> {
        let w = self.weights(ex)?;
        self.field_with_weights(&w, obs)
    }

    pub fn field_with_weights(&self, weights: &[Complex64], obs: Direction) -> Result<Vector3<Complex64>> {
        if weights.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: self.len(),
                actual: weights.len(),
            });
        }
        if !(obs.theta.is_finite() && obs.phi.is_finite()) {
            return Err(Error::NonFinite("observation direction"));
        }
        Ok(self.field_unchecked(weights, &obs.unit_vector()))
    }

    pub fn intensity(&self, ex: &Excitation, obs: Direction) -> Result<f64> {
        Ok(intensity(&self.field(ex, obs)?))
    }

    /// Samples `U` on the full sphere at `step_deg`.
    pub fn sample_sphere(&self, ex: &Excitation, step_deg: f64) -> Result<SphereGrid> {
        let w = self.weights(ex)?;
        self.sample_sphere_with_weights(&w, step_deg)
    }

    pub fn sample_sphere_with_weights(&self, weights: &[Complex64], step_deg: f64) -> Result<SphereGrid> {
        let mut grid = SphereGrid::zeros(step_deg)?;
        self.fill(&mut grid, weights, None)?;
        Ok(grid)
    }

    /// Like [`sample_sphere`](Self::sample_sphere) but also keeps `E` per node.
    pub fn sample_sphere_fields(&self, ex: &Excitation, step_deg: f64) -> Result<SphereGrid> {
        let w = self.weights(ex)?;
        let mut grid = SphereGrid::zeros(step_deg)?;
        let mut fields = vec![Vector3::zeros(); grid.u.len()];
        self.fill(&mut grid, &w, Some(&mut fields))?;
        grid.e = Some(fields);
        Ok(grid)
    }

    /// Samples `U` on an arbitrary regular patch of the sphere.
    pub fn sample_region(&self, ex: &Excitation, region: GridRegion) -> Result<SphereGrid> {
        let w = self.weights(ex)?;
        let mut grid = SphereGrid::from_region(region, vec![0.0; region.n_theta * region.n_phi])?;
        self.fill(&mut grid, &w, None)?;
        Ok(grid)
    }

    fn fill(&self, grid: &mut SphereGrid, weights: &[Complex64], fields: Option<&mut [Vector3<Complex64>]>) -> Result<()> {
        if weights.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: self.len(),
                actual: weights.len(),
            });
        }
        let region = grid.region;
        let nt = region.n_theta;
        match fields {
            Some(fields) => grid
                .u
                .par_chunks_mut(nt)
                .zip(fields.par_chunks_mut(nt))
                .enumerate()
                .for_each(|(j, (urow, erow))| {
                    for i in 0..nt {
                        let e = self.field_unchecked(weights, &region.direction(i, j).unit_vector());
                        urow[i] = intensity(&e);
                        erow[i] = e;
                    }
                }),
            None => grid.u.par_chunks_mut(nt).enumerate().for_each(|(j, urow)| {
                for (i, u) in urow.iter_mut().enumerate() {
                    *u = intensity(&self.field_unchecked(weights, &region.direction(i, j).unit_vector()));
                }
            }),
        }
        Ok(())
    }

    /// Precomputes every element term on the full sphere grid, so that
    /// repeated sampling with different weights costs one weighted sum per
    /// node. Memory is `48 · N · nodes` bytes.
    pub fn element_cache(&self, step_deg: f64) -> Result<ElementFieldCache> {
        let region = GridRegion::full(step_deg)?;
        let n = self.len();
        let mut terms = vec![Vector3::zeros(); region.len() * n];
        terms
            .par_chunks_mut(region.n_theta * n)
            .enumerate()
            .for_each(|(j, row)| {
                for i in 0..region.n_theta {
                    let r_hat = region.direction(i, j).unit_vector();
                    for (k, t) in row[i * n..(i + 1) * n].iter_mut().enumerate() {
                        *t = self.element_term(k, &r_hat);
                    }
                }
            });
        Ok(ElementFieldCache {
            region,
            n_elements: n,
            terms,
        })
    }

    /// Samples a pattern cut directly, without a sphere grid. `p_rad`
    /// normalizes the directivity and normally comes from a full grid.
    pub fn cut(&self, ex: &Excitation, plane: CutPlane, step_deg: f64, p_rad: f64) -> Result<PatternCut> {
        let w = self.weights(ex)?;
        let count = grid_count(360.0, step_deg)?;
        let mut angles = Vec::with_capacity(count);
        let mut u = Vec::with_capacity(count);
        for a in 0..count {
            let angle = plane.start_deg() + a as f64 * step_deg;
            let (t, p) = plane.node(angle);
            angles.push(angle);
            u.push(intensity(&self.field_unchecked(&w, &Direction::from_degrees(t, p).unit_vector())));
        }
        PatternCut::new(plane, angles, u, p_rad)
    }
}

/// Element terms on a full sphere grid, node-major.
#[derive(Clone, Debug)]
pub struct ElementFieldCache {
    region: GridRegion,
    n_elements: usize,
    terms: Vec<Vector3<Complex64>>,
}

impl ElementFieldCache {
    pub fn region(&self) -> &GridRegion {
        &self.region
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// Element terms at node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> &[Vector3<Complex64>] {
        let start = (j * self.region.n_theta + i) * self.n_elements;
        &self.terms[start..start + self.n_elements]
    }

    pub fn field(&self, i: usize, j: usize, weights: &[Complex64]) -> Vector3<Complex64> {
        let mut acc = Vector3::<Complex64>::zeros();
        for (t, w) in self.node(i, j).iter().zip(weights) {
            acc += t * *w;
        }
        acc
    }

    /// Same values as [`ArrayModel::sample_sphere_with_weights`].
    pub fn sample(&self, weights: &[Complex64]) -> Result<SphereGrid> {
        if weights.len() != self.n_elements {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: self.n_elements,
                actual: weights.len(),
            });
        }
        let mut grid = SphereGrid::from_region(self.region, vec![0.0; self.region.len()])?;
        let nt = self.region.n_theta;
        grid.u.par_chunks_mut(nt).enumerate().for_each(|(j, row)| {
            for (i, u) in row.iter_mut().enumerate() {
                *u = intensity(&self.field(i, j, weights));
            }
        });
        Ok(grid)
    }
}

fn grid_count(span: f64, step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidGrid(format!("step {step}° must be positive")));
    }
    let n = span / step;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::InvalidGrid(format!("step {step}° does not divide {span}°")));
    }
    Ok(r as usize)
}

/// Regular `(θ, φ)` patch: `θ_i = θ0 + i·step`, `φ_j = φ0 + j·step` (degrees).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRegion {
    pub theta0_deg: f64,
    pub phi0_deg: f64,
    pub step_deg: f64,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl GridRegion {
    /// `θ ∈ [-180°, 180°)`, `φ ∈ [-90°, 90°]`.
    pub fn full(step_deg: f64) -> Result<Self> {
        let n_theta = grid_count(360.0, step_deg)?;
        let n_phi = grid_count(180.0, step_deg)? + 1;
        Ok(GridRegion {
            theta0_deg: -180.0,
            phi0_deg: -90.0,
            step_deg,
            n_theta,
            n_phi,
        })
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.theta0_deg == -180.0
            && self.phi0_deg == -90.0
            && ((self.n_theta as f64) * self.step_deg - 360.0).abs() < 1e-9
            && (((self.n_phi - 1) as f64) * self.step_deg - 180.0).abs() < 1e-9
    }

    pub fn theta_deg(&self, i: usize) -> f64 {
        self.theta0_deg + i as f64 * self.step_deg
    }

    pub fn phi_deg(&self, j: usize) -> f64 {
        self.phi0_deg + j as f64 * self.step_deg
    }

    pub fn direction(&self, i: usize, j: usize) -> Direction {
        Direction::from_degrees(self.theta_deg(i), self.phi_deg(j))
    }

    /// Bilinear interpolation stencil of `obs` as `(flat index, weight)`
    /// pairs, flat index `j·n_theta + i`. `θ` wraps on full grids.
    pub fn bilinear(&self, obs: Direction) -> Option<[(usize, f64); 4]> {
        let t = obs.theta_deg();
        let p = obs.phi_deg();
        let fj = (p - self.phi0_deg) / self.step_deg;
        if fj < -1e-9 || fj > (self.n_phi - 1) as f64 + 1e-9 {
            return None;
        }
        let fj = fj.clamp(0.0, (self.n_phi - 1) as f64);
        let j0 = (fj.floor() as usize).min(self.n_phi.saturating_sub(2));
        let tp = if self.n_phi > 1 { fj - j0 as f64 } else { 0.0 };
        let j1 = (j0 + 1).min(self.n_phi - 1);

        let full = self.is_full();
        let mut fi = (t - self.theta0_deg) / self.step_deg;
        if full {
            fi = fi.rem_euclid(self.n_theta as f64);
        } else if fi < -1e-9 || fi > (self.n_theta - 1) as f64 + 1e-9 {
            return None;
        }
        let (i0, i1, tt) = if full {
            let i0 = (fi.floor() as usize) % self.n_theta;
            (i0, (i0 + 1) % self.n_theta, fi - fi.floor())
        } else {
            let fi = fi.clamp(0.0, (self.n_theta - 1) as f64);
            let i0 = (fi.floor() as usize).min(self.n_theta.saturating_sub(2));
            (i0, (i0 + 1).min(self.n_theta - 1), fi - i0 as f64)
        };
        let k = |i: usize, j: usize| j * self.n_theta + i;
        Some([
            (k(i0, j0), (1.0 - tt) * (1.0 - tp)),
            (k(i1, j0), tt * (1.0 - tp)),
            (k(i0, j1), (1.0 - tt) * tp),
            (k(i1, j1), tt * tp),
        ])
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_deg.is_finite() && self.step_deg > 0.0) {
            return Err(Error::InvalidGrid(format!("step {}° must be positive", self.step_deg)));
        }
        if self.n_theta == 0 || self.n_phi == 0 {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if !(self.theta0_deg.is_finite() && self.phi0_deg.is_finite()) {
            return Err(Error::NonFinite("grid origin"));
        }
        if self.phi0_deg < -90.0 - 1e-9 || self.phi_deg(self.n_phi - 1) > 90.0 + 1e-9 {
            return Err(Error::InvalidGrid("elevation outside [-90°, 90°]".into()));
        }
        Ok(())
    }
}

/// Radiation intensity sampled on a regular `(θ, φ)` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereGrid {
    region: GridRegion,
    u: Vec<f64>,
    e: Option<Vec<Vector3<Complex64>>>,
}

impl SphereGrid {
    fn zeros(step_deg: f64) -> Result<Self> {
        let region = GridRegion::full(step_deg)?;
        Self::from_region(region, vec![0.0; region.len()])
    }

    /// A full-sphere grid from intensities laid out phi-major.
    pub fn from_values(step_deg: f64, u: Vec<f64>) -> Result<Self> {
        Self::from_region(GridRegion::full(step_deg)?, u)
    }

    pub fn from_region(region: GridRegion, u: Vec<f64>) -> Result<Self> {
        region.validate()?;
        if u.len() != region.len() {
            return Err(Error::LengthMismatch {
                what: "grid values",
                expected: region.len(),
                actual: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidGrid("intensities must be finite and non-negative".into()));
        }
        Ok(SphereGrid { region, u, e: None })
    }

    pub fn region(&self) -> &GridRegion {
        &self.region
    }

    pub fn step_deg(&self) -> f64 {
        self.region.step_deg
    }

    pub fn n_theta(&self) -> usize {
        self.region.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.region.n_phi
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn fields(&self) -> Option<&[Vector3<Complex64>]> {
        self.e.as_deref()
    }

    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[j * self.region.n_theta + i]
    }

    pub fn direction(&self, i: usize, j: usize) -> Direction {
        self.region.direction(i, j)
    }

    /// Grid index `(i, j)` and value of the largest intensity. Ties go to
    /// the first node in storage order.
    pub fn peak(&self) -> (usize, usize, f64) {
        let mut best = (0, self.u[0]);
        for (k, &v) in self.u.iter().enumerate() {
            if v > best.1 {
                best = (k, v);
            }
        }
        let nt = self.region.n_theta;
        (best.0 % nt, best.0 / nt, best.1)
    }

    /// `P_rad = Σ U cos φ Δθ Δφ`.
    pub fn radiated_power(&self) -> Result<f64> {
        if !self.region.is_full() {
            return Err(Error::InvalidGrid("radiated power needs a full-sphere grid".into()));
        }
        let d = self.region.step_deg.to_radians();
        let nt = self.region.n_theta;
        let total: f64 = self
            .u
            .chunks(nt)
            .enumerate()
            .map(|(j, row)| row.iter().sum::<f64>() * self.region.phi_deg(j).to_radians().cos().max(0.0))
            .sum();
        Ok(total * d * d)
    }

    /// Intensity at an arbitrary direction by bilinear interpolation
    /// (exact at nodes). Full grids wrap in azimuth; directions off a
    /// partial grid return `None`.
    pub fn interpolate(&self, obs: Direction) -> Option<f64> {
        let w = self.region.bilinear(obs)?;
        Some(w.iter().map(|&(k, l)| self.u[k] * l).sum())
    }

    /// `10 log10(4π U(obs) / P_rad)` with `U` interpolated on the grid.
    pub fn directivity(&self, obs: Direction) -> Result<f64> {
        let p = self.radiated_power()?;
        let u = self
            .interpolate(obs)
            .ok_or_else(|| Error::InvalidGrid("direction outside grid".into()))?;
        directivity_dbi(u, p)
    }

    /// Directivity of the grid peak.
    pub fn max_directivity(&self) -> Result<f64> {
        directivity_dbi(self.peak().2, self.radiated_power()?)
    }

    /// A principal cut through grid nodes. The elevation cut is the full
    /// great circle through the zenith at azimuth `θ0`, so `θ0 + 180°` must
    /// also be a grid column.
    pub fn cut(&self, plane: CutPlane) -> Result<PatternCut> {
        let p_rad = self.radiated_power()?;
        let r = &self.region;
        let count = r.n_theta;
        let step = r.step_deg;
        let col = |t: f64| -> Result<usize> {
            let f = ((t - r.theta0_deg) / step).rem_euclid(r.n_theta as f64);
            let i = f.round();
            if (f - i).abs() > 1e-9 {
                return Err(Error::InvalidGrid(format!("azimuth {t}° is not a grid column")));
            }
            Ok(i as usize % r.n_theta)
        };
        let row = |p: f64| -> Result<usize> {
            let f = (p - r.phi0_deg) / step;
            let j = f.round();
            if (f - j).abs() > 1e-9 || j < 0.0 || j as usize >= r.n_phi {
                return Err(Error::InvalidGrid(format!("elevation {p}° is not a grid row")));
            }
            Ok(j as usize)
        };
        let mut angles = Vec::with_capacity(count);
        let mut u = Vec::with_capacity(count);
        for a in 0..count {
            let angle = plane.start_deg() + a as f64 * step;
            let (t, p) = plane.node(angle);
            angles.push(angle);
            u.push(self.u(col(t)?, row(p)?));
        }
        PatternCut::new(plane, angles, u, p_rad)
    }

    /// Writes `theta_deg,phi_deg,U,directivity_dBi`, phi-major.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let p_rad = self.radiated_power().ok();
        let mut out = String::from("theta_deg,phi_deg,U,directivity_dBi\n");
        for j in 0..self.region.n_phi {
            for i in 0..self.region.n_theta {
                let u = self.u(i, j);
                let d = p_rad.map_or(f64::NAN, |p| db_for_csv(4.0 * PI * u / p));
                out.push_str(&format!(
                    "{},{},{:.9e},{:.6}\n",
                    fmt_angle(self.region.theta_deg(i)),
                    fmt_angle(self.region.phi_deg(j)),
                    u,
                    d
                ));
            }
        }
        write_file(path.as_ref(), &out)
    }
}

/// `10 log10(4π u / p_rad)`.
pub fn directivity_dbi(u: f64, p_rad: f64) -> Result<f64> {
    if !(p_rad > 0.0) {
        return Err(Error::ZeroPower);
    }
    Ok(10.0 * (4.0 * PI * u / p_rad).log10())
}

fn db_for_csv(linear: f64) -> f64 {
    if linear > 0.0 {
        (10.0 * linear.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

pub(crate) fn fmt_angle(a: f64) -> String {
    let r = (a * 1e9).round() / 1e9;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Plane of a principal cut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CutPlane {
    /// Great circle through both poles at azimuth `theta_deg`. The cut angle
    /// `α` equals the elevation on the `theta_deg` half and continues over
    /// the zenith onto the `theta_deg + 180°` half (`φ = 180° - α`).
    Elevation { theta_deg: f64 },
    /// Constant-elevation circle; the cut angle is the azimuth.
    Azimuth { phi_deg: f64 },
}

impl CutPlane {
    /// First cut angle: -90° (nadir) for elevation cuts, -180° for azimuth
    /// cuts. Cuts cover 360° from there, so elevation angles run up to 270°.
    pub fn start_deg(&self) -> f64 {
        match self {
            CutPlane::Elevation { .. } => -90.0,
            CutPlane::Azimuth { .. } => -180.0,
        }
    }

    /// Grid angles `(θ, φ)` in degrees of cut angle `alpha`.
    pub fn node(&self, alpha: f64) -> (f64, f64) {
        match *self {
            CutPlane::Azimuth { phi_deg } => (alpha, phi_deg),
            CutPlane::Elevation { theta_deg } => {
                if (-90.0..=90.0).contains(&alpha) {
                    (theta_deg, alpha)
                } else {
                    let back = theta_deg + 180.0;
                    let back = if back >= 180.0 { back - 360.0 } else { back };
                    (back, if alpha > 90.0 { 180.0 - alpha } else { -180.0 - alpha })
                }
            }
        }
    }
}

/// One-dimensional slice of the pattern over a full circle.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternCut {
    pub plane: CutPlane,
    pub angles_deg: Vec<f64>,
    pub u: Vec<f64>,
    pub p_rad: f64,
}

impl PatternCut {
    pub fn new(plane: CutPlane, angles_deg: Vec<f64>, u: Vec<f64>, p_rad: f64) -> Result<Self> {
        if angles_deg.len() != u.len() {
            return Err(Error::LengthMismatch {
                what: "cut values",
                expected: angles_deg.len(),
                actual: u.len(),
            });
        }
        if !(p_rad > 0.0) {
            return Err(Error::ZeroPower);
        }
        Ok(PatternCut {
            plane,
            angles_deg,
            u,
            p_rad,
        })
    }

    /// Directivity per sample; `-inf` where the intensity vanishes.
    pub fn directivity_dbi(&self) -> Vec<f64> {
        self.u.iter().map(|&u| 10.0 * (4.0 * PI * u / self.p_rad).log10()).collect()
    }

    /// Writes `angle_deg,directivity_dBi`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("angle_deg,directivity_dBi\n");
        for (a, &u) in self.angles_deg.iter().zip(&self.u) {
            out.push_str(&format!("{},{:.6}\n", fmt_angle(*a), db_for_csv(4.0 * PI * u / self.p_rad)));
        }
        write_file(path.as_ref(), &out)
    }
}
