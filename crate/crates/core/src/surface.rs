//! Quintic polynomial model of the mounting surface.
//!
//! The skin of the platform is represented as `z = f(x, y)`, a bivariate
//! polynomial with every monomial `x^j y^k` for `j + k <= 5` (21 terms).
//! Everything is in meters, coefficients included: the shipped coefficient
//! set only yields physically sensible heights (around -0.07 m) when `x` and
//! `y` are given in meters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest total degree of the surface polynomial.
pub const DEGREE: u32 = 5;

/// Number of monomials with `j + k <= DEGREE`.
pub const N_COEFFS: usize = 21;

/// Exponent pairs `(j, k)` in storage order: by total degree, then by
/// decreasing power of `x` (`p00, p10, p01, p20, p11, p02, ...`).
pub const MONOMIALS: [(u32, u32); N_COEFFS] = {
    let mut out = [(0, 0); N_COEFFS];
    let mut n = 0;
    let mut d = 0;
    while d <= DEGREE {
        let mut j = d as i32;
        while j >= 0 {
            out[n] = (j as u32, d - j as u32);
            n += 1;
            j -= 1;
        }
        d += 1;
    }
    out
};

const TABLE_ONE_JSON: &str = include_str!("../fixtures/table1_surface.json");

/// Storage index of the coefficient of `x^j y^k`.
pub fn monomial_index(j: u32, k: u32) -> Option<usize> {
    MONOMIALS.iter().position(|&m| m == (j, k))
}

/// Which side of the surface the elements radiate into.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Outward normal has a negative z-component (under-body mount).
    #[default]
    Down,
    /// Outward normal has a positive z-component.
    Up,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Down => -1.0,
            Side::Up => 1.0,
        }
    }
}

/// Rectangular fitting domain and its sampling step, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub step: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, step: f64) -> Result<Self> {
        let d = Domain {
            x_min,
            x_max,
            y_min,
            y_max,
            step,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.x_min, self.x_max, self.y_min, self.y_max, self.step];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("domain bounds"));
        }
        if self.x_min >= self.x_max {
            return Err(Error::InvalidDomain(format!(
                "x range [{}, {}] is empty",
                self.x_min, self.x_max
            )));
        }
        if self.y_min >= self.y_max {
            return Err(Error::InvalidDomain(format!(
                "y range [{}, {}] is empty",
                self.y_min, self.y_max
            )));
        }
        if self.step <= 0.0 {
            return Err(Error::InvalidDomain(format!(
                "grid step {} must be positive",
                self.step
            )));
        }
        Ok(())
    }

    /// Number of grid lines along x and y at `step`.
    pub fn grid_counts(&self) -> (usize, usize) {
        let count = |lo: f64, hi: f64| ((hi - lo) / self.step + 1e-9).floor() as usize + 1;
        (count(self.x_min, self.x_max), count(self.y_min, self.y_max))
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    /// True when `(x, y)` lies inside the domain, allowing `tol` meters of slack.
    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x_min - tol && x <= self.x_max + tol && y >= self.y_min - tol && y <= self.y_max + tol
    }
}

/// Scattered `(x, y, z)` samples of a surface, in meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfaceSamples {
    pub points: Vec<[f64; 3]>,
}

impl SurfaceSamples {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        SurfaceSamples { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Bounding box of the samples with the step taken as the smallest
    /// positive spacing between distinct x values (0.5 mm when there is none).
    pub fn bounding_domain(&self) -> Result<Domain> {
        if self.points.is_empty() {
            return Err(Error::InvalidDomain("no samples".into()));
        }
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for p in &self.points {
            x_min = x_min.min(p[0]);
            x_max = x_max.max(p[0]);
            y_min = y_min.min(p[1]);
            y_max = y_max.max(p[1]);
        }
        let mut xs: Vec<f64> = self.points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        let step = xs
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 1e-12)
            .fold(f64::INFINITY, f64::min);
        let step = if step.is_finite() { step } else { 0.5e-3 };
        Domain::new(x_min, x_max, y_min, y_max, step)
    }

    /// Reads a CSV file with header `x,y,z` (meters).
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["x", "y", "z"] {
            return Err(Error::parse(
                path,
                format!("line 1: expected header `x,y,z`, found `{}`", cols.join(",")),
            ));
        }
        let mut points = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
            if record.len() != 3 {
                return Err(Error::parse(
                    path,
                    format!("line {line}: expected 3 fields, found {}", record.len()),
                ));
            }
            let mut p = [0.0; 3];
            for (slot, field) in p.iter_mut().zip(record.iter()) {
                *slot = field.parse::<f64>().map_err(|_| {
                    Error::parse(path, format!("line {line}: `{field}` is not a number"))
                })?;
                if !slot.is_finite() {
                    return Err(Error::parse(path, format!("line {line}: non-finite value")));
                }
            }
            points.push(p);
        }
        Ok(SurfaceSamples { points })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["x", "y", "z"]).map_err(|e| csv_error(path, e))?;
        for p in &self.points {
            w.write_record(p.iter().map(|v| format!("{v:e}")))
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

/// Degree-5 bivariate polynomial surface `z = f(x, y)` over a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialSurface {
    coeffs: [f64; N_COEFFS],
    domain: Domain,
}

impl PolynomialSurface {
    pub fn new(coeffs: [f64; N_COEFFS], domain: Domain) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("surface coefficient"));
        }
        domain.validate()?;
        Ok(PolynomialSurface { coeffs, domain })
    }

    /// Builds a surface from `(j, k, p_jk)` triples; unspecified terms are zero.
    pub fn from_terms(terms: &[(u32, u32, f64)], domain: Domain) -> Result<Self> {
        let mut coeffs = [0.0; N_COEFFS];
        for &(j, k, c) in terms {
            let idx = monomial_index(j, k).ok_or_else(|| {
                Error::InvalidDomain(format!("monomial x^{j} y^{k} exceeds degree {DEGREE}"))
            })?;
            coeffs[idx] = c;
        }
        Self::new(coeffs, domain)
    }

    /// The UAV skin model shipped with the crate, with coefficients fitted over
    /// x in [96, 221] mm, y in [-37.6, 37.6] mm, sampled every 0.5 mm.
    pub fn table_one() -> Self {
        Self::from_json_str(TABLE_ONE_JSON).expect("shipped surface fixture is valid")
    }

    pub fn coeffs(&self) -> &[f64; N_COEFFS] {
        &self.coeffs
    }

    pub fn coeff(&self, j: u32, k: u32) -> f64 {
        monomial_index(j, k).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        domain.validate()?;
        self.domain = domain;
        Ok(self)
    }

    /// `f(x, y)`. Points outside the domain are evaluated as-is.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        check_finite(x, y)?;
        Ok(self.value(x, y))
    }

    /// Analytic partial derivatives `(df/dx, df/dy)`.
    pub fn gradient(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        check_finite(x, y)?;
        Ok(self.grad(x, y))
    }

    /// Unit normal `±(-f_x, -f_y, 1) / sqrt(1 + f_x² + f_y²)` with the sign
    /// chosen so that its z-component follows `side`.
    pub fn normal_at(&self, x: f64, y: f64, side: Side) -> Result<Vector3<f64>> {
        let (fx, fy) = self.gradient(x, y)?;
        let n = Vector3::new(-fx, -fy, 1.0).normalize();
        Ok(n * side.sign())
    }

    /// The raw quintic cancels terms several hundred times larger than the
    /// result, so the sum is carried in double-double arithmetic.
    pub(crate) fn value(&self, x: f64, y: f64) -> f64 {
        let xp = dd_powers(x);
        let yp = dd_powers(y);
        MONOMIALS
            .iter()
            .zip(&self.coeffs)
            .fold(Dd::ZERO, |acc, (&(j, k), &c)| acc.add(xp[j as usize].mul(yp[k as usize]).scale(c)))
            .value()
    }

    pub(crate) fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let xp = powers(x);
        let yp = powers(y);
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (&(j, k), c) in MONOMIALS.iter().zip(&self.coeffs) {
            let (j, k) = (j as usize, k as usize);
            if j > 0 {
                gx += c * j as f64 * xp[j - 1] * yp[k];
            }
            if k > 0 {
                gy += c * k as f64 * xp[j] * yp[k - 1];
            }
        }
        (gx, gy)
    }

    /// Regular grid over the domain at its step, heights from [`Self::evaluate`].
    /// Row-major in y, x ascending within a row.
    pub fn mesh(&self) -> Result<SurfaceSamples> {
        self.domain.validate()?;
        let (nx, ny) = self.domain.grid_counts();
        let d = &self.domain;
        let mut points = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            let y = d.y_min + iy as f64 * d.step;
            for ix in 0..nx {
                let x = d.x_min + ix as f64 * d.step;
                points.push([x, y, self.value(x, y)]);
            }
        }
        Ok(SurfaceSamples { points })
    }

    /// Least-squares fit of all 21 monomials to `samples`, returning the
    /// surface (coefficients in the raw meter basis) and the RMS residual.
    ///
    /// The regressors are centered and scaled to `[-1, 1]` before solving so
    /// the quintic Vandermonde matrix stays well conditioned.
    pub fn fit(samples: &SurfaceSamples, domain: Domain) -> Result<(Self, f64)> {
        domain.validate()?;
        let n = samples.len();
        if n < N_COEFFS {
            return Err(Error::RankDeficient(format!(
                "{n} samples cannot determine {N_COEFFS} coefficients"
            )));
        }
        if samples.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("surface sample"));
        }
        samples.bounding_domain().map_err(|_| {
            Error::RankDeficient("samples do not span a two-dimensional region".into())
        })?;
        // Centering on the domain keeps a symmetric domain from mixing even
        // and odd powers of y in the back-substitution below.
        let (cx, cy) = domain.center();
        let sx = 0.5 * (domain.x_max - domain.x_min);
        let sy = 0.5 * (domain.y_max - domain.y_min);

        let mut a = DMatrix::<f64>::zeros(n, N_COEFFS);
        let mut b = DVector::<f64>::zeros(n);
        for (row, p) in samples.points.iter().enumerate() {
            let up = powers((p[0] - cx) / sx);
            let vp = powers((p[1] - cy) / sy);
            for (col, &(j, k)) in MONOMIALS.iter().enumerate() {
                a[(row, col)] = up[j as usize] * vp[k as usize];
            }
            b[row] = p[2];
        }

        let svd = a.clone().svd(true, true);
        let s_max = svd.singular_values.max();
        let s_min = svd.singular_values.min();
        if !(s_max > 0.0) || s_min / s_max < 1e-11 {
            return Err(Error::RankDeficient(format!(
                "condition ratio {:.3e} of the scaled design matrix",
                if s_max > 0.0 { s_min / s_max } else { 0.0 }
            )));
        }
        let solve = |rhs: &DVector<f64>| svd.solve(rhs, 0.0).map_err(|e| Error::RankDeficient(e.to_string()));
        let mut scaled = solve(&b)?;
        // Iterative refinement with residuals in double-double: recovers the
        // tiny odd-in-y coefficients that plain SVD rounding swamps.
        for _ in 0..2 {
            let r = DVector::from_iterator(
                n,
                (0..n).map(|row| {
                    (0..N_COEFFS)
                        .fold(Dd::new(b[row]), |acc, col| acc.add(Dd::new(a[(row, col)]).scale(-scaled[col])))
                        .value()
                }),
            );
            scaled += solve(&r)?;
        }

        let residual = &a * &scaled - &b;
        let rmse = (residual.norm_squared() / n as f64).sqrt();

        // Expand sum c_jk ((x-cx)/sx)^j ((y-cy)/sy)^k into raw monomials.
        let mut raw = [0.0; N_COEFFS];
        for (idx, &(j, k)) in MONOMIALS.iter().enumerate() {
            let c = scaled[idx] / (sx.powi(j as i32) * sy.powi(k as i32));
            for a_pow in 0..=j {
                let xs = binomial(j, a_pow) * (-cx).powi((j - a_pow) as i32);
                for b_pow in 0..=k {
                    let ys = binomial(k, b_pow) * (-cy).powi((k - b_pow) as i32);
                    let target = monomial_index(a_pow, b_pow).expect("lower degree monomial");
                    raw[target] += c * xs * ys;
                }
            }
        }
        Ok((Self::new(raw, domain)?, rmse))
    }

    pub fn to_json_string(&self) -> String {
        let file = SurfaceFile::from(self);
        serde_json::to_string_pretty(&file).expect("surface serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SurfaceFile =
            serde_json::from_str(s).map_err(|e| Error::parse("<surface>", e.to_string()))?;
        file.into_surface()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SurfaceFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        file.into_surface().map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for PolynomialSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z =")?;
        for (&(j, k), c) in MONOMIALS.iter().zip(&self.coeffs) {
            write!(f, " {c:+e}·x^{j}y^{k}")?;
        }
        Ok(())
    }
}

/// On-disk surface exchange document. Coefficients are named `p{j}{k}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceFile {
    pub coefficients: BTreeMap<String, f64>,
    pub domain: DomainBounds,
    pub grid_step: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl From<&PolynomialSurface> for SurfaceFile {
    fn from(s: &PolynomialSurface) -> Self {
        let coefficients = MONOMIALS
            .iter()
            .zip(&s.coeffs)
            .map(|(&(j, k), &c)| (format!("p{j}{k}"), c))
            .collect();
        let d = s.domain;
        SurfaceFile {
            coefficients,
            domain: DomainBounds {
                x_min: d.x_min,
                x_max: d.x_max,
                y_min: d.y_min,
                y_max: d.y_max,
            },
            grid_step: d.step,
        }
    }
}

impl SurfaceFile {
    pub fn into_surface(self) -> Result<PolynomialSurface> {
        let mut coeffs = [0.0; N_COEFFS];
        let mut seen = [false; N_COEFFS];
        for (name, value) in &self.coefficients {
            let idx = parse_coeff_name(name)
                .ok_or_else(|| Error::InvalidDomain(format!("unknown coefficient `{name}`")))?;
            coeffs[idx] = *value;
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let (j, k) = MONOMIALS[missing];
            return Err(Error::InvalidDomain(format!("missing coefficient `p{j}{k}`")));
        }
        let b = self.domain;
        let domain = Domain::new(b.x_min, b.x_max, b.y_min, b.y_max, self.grid_step)?;
        PolynomialSurface::new(coeffs, domain)
    }
}

fn parse_coeff_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('p')?;
    let mut chars = digits.chars();
    let j = chars.next()?.to_digit(10)?;
    let k = chars.next()?.to_digit(10)?;
    if chars.next().is_some() {
        return None;
    }
    monomial_index(j, k)
}

fn check_finite(x: f64, y: f64) -> Result<()> {
    if x.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("surface coordinate"))
    }
}

fn powers(x: f64) -> [f64; DEGREE as usize + 1] {
    let mut p = [1.0; DEGREE as usize + 1];
    for i in 1..p.len() {
        p[i] = p[i - 1] * x;
    }
    p
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi) / 2`.
#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn add(self, o: Dd) -> Self {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(s.lo, self.lo + o.lo);
        let u = Dd::two_sum(s.hi, t.hi);
        Dd::two_sum(u.hi, u.lo + t.lo)
    }

    fn mul(self, o: Dd) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::two_sum(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn scale(self, c: f64) -> Self {
        self.mul(Dd::new(c))
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

fn dd_powers(x: f64) -> [Dd; DEGREE as usize + 1] {
    let mut p = [Dd::ONE; DEGREE as usize + 1];
    for i in 1..p.len() {
        p[i] = p[i - 1].mul(Dd::new(x));
    }
    p
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_domain() -> Domain {
        Domain::new(-1.0, 1.0, -1.0, 1.0, 0.1).unwrap()
    }

    #[test]
    fn monomial_order_matches_naming() {
        assert_eq!(MONOMIALS[0], (0, 0));
        assert_eq!(MONOMIALS[1], (1, 0));
        assert_eq!(MONOMIALS[2], (0, 1));
        assert_eq!(MONOMIALS[5], (0, 2));
        assert_eq!(MONOMIALS[20], (0, 5));
        assert!(MONOMIALS.iter().all(|&(j, k)| j + k <= DEGREE));
    }

    #[test]
    fn table_one_height_at_reference_point() {
        // Term-by-term sum of the 21 shipped products at x = 0.15 m, y = 0.
        let s = PolynomialSurface::table_one();
        let z = s.evaluate(0.15, 0.0).unwrap();
        assert!((z - (-0.069_904_313_924_6)).abs() < 1e-12, "z = {z}");
    }

    #[test]
    fn zero_and_constant_surfaces() {
        let zero = PolynomialSurface::new([0.0; N_COEFFS], unit_domain()).unwrap();
        assert_eq!(zero.evaluate(0.3, -0.7).unwrap(), 0.0);
        let c = PolynomialSurface::from_terms(&[(0, 0, 4.25)], unit_domain()).unwrap();
        assert_eq!(c.evaluate(12.0, -3.0).unwrap(), 4.25);
        assert_eq!(c.gradient(0.2, 0.1).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let s = PolynomialSurface::table_one();
        assert!(s.evaluate(f64::NAN, 0.0).is_err());
        assert!(s.gradient(0.1, f64::INFINITY).is_err());
        let mut bad = [0.0; N_COEFFS];
        bad[3] = f64::NAN;
        assert!(PolynomialSurface::new(bad, unit_domain()).is_err());
    }

    #[test]
    fn plane_gradient_and_normal() {
        let plane = PolynomialSurface::from_terms(&[(1, 0, 2.0), (0, 1, 3.0)], unit_domain()).unwrap();
        assert_eq!(plane.gradient(0.4, -0.2).unwrap(), (2.0, 3.0));

        let flat = PolynomialSurface::from_terms(&[(0, 0, -0.05)], unit_domain()).unwrap();
        let n = flat.normal_at(0.1, 0.1, Side::Down).unwrap();
        assert_eq!(n, Vector3::new(0.0, 0.0, -1.0));

        let tilted = PolynomialSurface::from_terms(&[(1, 0, 1.0)], unit_domain()).unwrap();
        let n = tilted.normal_at(0.0, 0.0, Side::Down).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n - Vector3::new(h, 0.0, -h)).norm() < 1e-15);
        let up = tilted.normal_at(0.0, 0.0, Side::Up).unwrap();
        assert!((up + n).norm() < 1e-15);
    }

    #[test]
    fn table_one_gradient_matches_central_differences() {
        let s = PolynomialSurface::table_one();
        let (x, y, h) = (0.15, 0.0, 1e-6);
        let (gx, gy) = s.gradient(x, y).unwrap();
        let fdx = (s.value(x + h, y) - s.value(x - h, y)) / (2.0 * h);
        let fdy = (s.value(x, y + h) - s.value(x, y - h)) / (2.0 * h);
        assert!(((gx - fdx) / gx).abs() < 1e-6, "{gx} vs {fdx}");
        // df/dy is ~1e-8 here; compare absolutely against the x-scale.
        assert!((gy - fdy).abs() < 1e-6 * gx.abs());

        let n = s.normal_at(x, y, Side::Down).unwrap();
        let fd = Vector3::new(fdx, fdy, -1.0).normalize();
        assert!((n.norm() - 1.0).abs() < 1e-12);
        assert!(n.z < 0.0);
        assert!((n - fd).norm() < 1e-6);
    }

    #[test]
    fn mesh_counts() {
        let s = PolynomialSurface::new([0.0; N_COEFFS], Domain::new(0.0, 1e-3, 0.0, 1e-3, 0.5e-3).unwrap())
            .unwrap();
        assert_eq!(s.mesh().unwrap().len(), 9);

        let t = PolynomialSurface::table_one();
        assert_eq!(t.domain().grid_counts(), (251, 151));
        assert_eq!(t.mesh().unwrap().len(), 251 * 151);
    }

    #[test]
    fn degenerate_domain_rejected() {
        assert!(Domain::new(0.1, 0.1, -1.0, 1.0, 0.01).is_err());
        assert!(Domain::new(0.0, 1.0, 0.5, -0.5, 0.01).is_err());
        assert!(Domain::new(0.0, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn plane_fit_recovers_slopes() {
        let plane = PolynomialSurface::from_terms(&[(1, 0, 2.0), (0, 1, 3.0)], unit_domain()).unwrap();
        let samples = plane.mesh().unwrap();
        let (fit, rmse) = PolynomialSurface::fit(&samples, unit_domain()).unwrap();
        assert!((fit.coeff(1, 0) - 2.0).abs() < 1e-9);
        assert!((fit.coeff(0, 1) - 3.0).abs() < 1e-9);
        for &(j, k) in MONOMIALS.iter().filter(|m| **m != (1, 0) && **m != (0, 1)) {
            assert!(fit.coeff(j, k).abs() < 1e-9, "p{j}{k} = {}", fit.coeff(j, k));
        }
        assert!(rmse < 1e-12);
    }

    #[test]
    fn underdetermined_fit_is_rank_deficient() {
        let s = PolynomialSurface::table_one();
        let mut samples = s.mesh().unwrap();
        samples.points.truncate(20);
        let err = PolynomialSurface::fit(&samples, *s.domain()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));

        // Plenty of points, all on one line: still rank deficient.
        let line = SurfaceSamples::new((0..100).map(|i| [i as f64 * 0.01, 0.5, 1.0]).collect());
        assert!(matches!(
            PolynomialSurface::fit(&line, unit_domain()),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = PolynomialSurface::table_one();
        let back = PolynomialSurface::from_json_str(&s.to_json_string()).unwrap();
        assert_eq!(s, back);
        assert!(PolynomialSurface::from_json_str(r#"{"coefficients":{},"domain":{"x_min":0,"x_max":1,"y_min":0,"y_max":1},"grid_step":0.1}"#).is_err());
    }
}
