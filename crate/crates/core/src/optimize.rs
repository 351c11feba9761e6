//! Amplitude-weight synthesis for low sidelobes.
//!
//! The decision variable is a vector of real non-negative amplitudes `w`;
//! steering phases stay fixed. The problem is
//!
//! ```text
//! minimize   SLL
//! subject to U(θ, φ) ≤ SLL · U_peak      on the sidelobe region
//!            U decreasing away from the peak inside the mainlobe
//!            directivity(steer) ≥ 0.707 · unit-weight directivity(steer)
//!            SLL ≤ 0.1
//! ```
//!
//! Weights are only defined up to scale, so the directivity floor is taken
//! at equal radiated power. Fixing the steer-direction field component
//! along its unit-weight polarization to 1 (`cᵀw = 1`) convexifies it:
//! every remaining constraint is a convex quadratic in `w`, the floor turns
//! into `wᵀQw ≤ P_max`, and the feasible bounds form an interval. The
//! optimizer bisects on the bound and answers each feasibility question
//! with an accelerated projected-gradient method on a squared-hinge
//! penalty. Sidelobe rows enter a working set lazily.
//!
//! Mainlobe monotonicity is not convex, so it is checked after each solve:
//! rows that rise towards the mainlobe edge join the sidelobe caps and the
//! bound is bisected again.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::farfield::{fmt_angle, write_file, ArrayModel, Excitation, GridRegion, SphereGrid, SteeringVector};
use crate::geometry::ElementPlacement;
use crate::metrics::{mainlobe_region, LobeOptions};
use crate::pattern::Direction;

/// Fraction of the reference steer intensity the optimized pattern must keep.
pub const DIRECTIVITY_FLOOR: f64 = 0.707;

/// Highest admissible SLL as an intensity ratio (-10 dB).
pub const SLL_CEILING: f64 = 0.1;

type Stencil = [(usize, f64); 4];

/// Steered element fields sampled over the sphere, split into mainlobe and
/// sidelobe rows.
#[derive(Clone, Debug)]
pub struct FieldMatrix {
    n_elements: usize,
    /// Row-major `[row][element]` steered element fields.
    entries: Vec<Vector3<Complex64>>,
    directions: Vec<Direction>,
    /// Quadrature weight (solid angle) of every row.
    omega: Vec<f64>,
    /// Element fields at the exact steering direction, where the steering
    /// phases cancel and the fields are real.
    steer: Vec<Vector3<f64>>,
    mainlobe: Vec<usize>,
    sidelobe: Vec<usize>,
    /// Mainlobe rows held to monotonic descent from the peak.
    monotone: Vec<bool>,
    steering: Option<SteeringVector>,
    region: Option<GridRegion>,
}

impl FieldMatrix {
    /// Assembles a matrix from explicit parts. `rows[r][i]` is the steered
    /// field of element `i` in row `r`; `steer[i]` the element field at the
    /// steering direction.
    pub fn from_parts(
        rows: Vec<Vec<Vector3<Complex64>>>,
        omega: Vec<f64>,
        steer: Vec<Vector3<f64>>,
        mainlobe: Vec<usize>,
        sidelobe: Vec<usize>,
    ) -> Result<Self> {
        let n = steer.len();
        if n == 0 {
            return Err(Error::Degenerate("no elements".into()));
        }
        if omega.len() != rows.len() {
            return Err(Error::LengthMismatch {
                what: "row weights",
                expected: rows.len(),
                actual: omega.len(),
            });
        }
        let mut entries = Vec::with_capacity(rows.len() * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::LengthMismatch {
                    what: "field matrix row",
                    expected: n,
                    actual: r.len(),
                });
            }
            entries.extend_from_slice(r);
        }
        let m = FieldMatrix {
            n_elements: n,
            directions: vec![Direction::new(0.0, 0.0); rows.len()],
            monotone: vec![false; rows.len()],
            entries,
            omega,
            steer,
            mainlobe,
            sidelobe,
            steering: None,
            region: None,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let n_rows = self.n_rows();
        let mut seen = vec![0u8; n_rows];
        for (set, bit) in [(&self.mainlobe, 1u8), (&self.sidelobe, 2u8)] {
            for &r in set {
                if r >= n_rows {
                    return Err(Error::Degenerate(format!("row {r} out of range")));
                }
                seen[r] |= bit;
            }
        }
        if seen.iter().any(|&s| s == 3) {
            return Err(Error::Degenerate("mainlobe and sidelobe rows overlap".into()));
        }
        if self.sidelobe.is_empty() {
            return Err(Error::Degenerate("empty sidelobe region".into()));
        }
        if self.mainlobe.is_empty() {
            return Err(Error::Degenerate("empty mainlobe region".into()));
        }
        if self.omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Degenerate("row weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Reassigns mainlobe rows to the sidelobe region.
    pub fn move_to_sidelobe(&mut self, rows: &[usize]) {
        let mut take = vec![false; self.n_rows()];
        for &r in rows {
            if r < take.len() {
                take[r] = true;
            }
        }
        let before = self.mainlobe.len();
        self.mainlobe.retain(|&r| !take[r]);
        if self.mainlobe.len() != before {
            self.sidelobe.extend(rows.iter().copied().filter(|&r| r < take.len()));
            self.sidelobe.sort_unstable();
            self.sidelobe.dedup();
            for &r in rows {
                if r < take.len() {
                    self.monotone[r] = false;
                }
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        self.omega.len()
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn row(&self, r: usize) -> &[Vector3<Complex64>] {
        &self.entries[r * self.n_elements..(r + 1) * self.n_elements]
    }

    pub fn direction(&self, r: usize) -> Direction {
        self.directions[r]
    }

    pub fn mainlobe(&self) -> &[usize] {
        &self.mainlobe
    }

    pub fn sidelobe(&self) -> &[usize] {
        &self.sidelobe
    }

    pub fn steer_fields(&self) -> &[Vector3<f64>] {
        &self.steer
    }

    pub fn steering(&self) -> Option<&SteeringVector> {
        self.steering.as_ref()
    }

    /// Grid layout of the rows when built from a sphere grid.
    pub fn region(&self) -> Option<&GridRegion> {
        self.region.as_ref()
    }

    fn row_field(&self, r: usize, w: &[f64]) -> Vector3<Complex64> {
        let mut e = Vector3::<Complex64>::zeros();
        for (a, &wi) in self.row(r).iter().zip(w) {
            e += a * Complex64::from(wi);
        }
        e
    }

    /// `U` of row `r` under real weights `w`.
    pub fn row_intensity(&self, r: usize, w: &[f64]) -> f64 {
        crate::farfield::intensity(&self.row_field(r, w))
    }

    /// Intensity of every row.
    pub fn intensities(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.row_intensity(r, w)).collect()
    }

    /// Intensity exactly at the steering direction.
    pub fn steer_intensity(&self, w: &[f64]) -> f64 {
        self.steer_field(w).norm_squared()
    }

    fn steer_field(&self, w: &[f64]) -> Vector3<f64> {
        self.steer.iter().zip(w).map(|(g, &wi)| g * wi).sum()
    }

    /// Quadrature of the radiated power, `Σ Ω_r U_r`.
    pub fn radiated_power(&self, w: &[f64]) -> f64 {
        (0..self.n_rows()).map(|r| self.omega[r] * self.row_intensity(r, w)).sum()
    }

    /// `Q` with `wᵀQw` equal to [`radiated_power`](Self::radiated_power).
    pub fn power_matrix(&self) -> DMatrix<f64> {
        let n = self.n_elements;
        let mut q = DMatrix::zeros(n, n);
        for r in 0..self.n_rows() {
            let om = self.omega[r];
            if om == 0.0 {
                continue;
            }
            let a = self.row(r);
            for i in 0..n {
                for j in i..n {
                    let v = om * (a[i].x.conj() * a[j].x + a[i].y.conj() * a[j].y + a[i].z.conj() * a[j].z).re;
                    q[(i, j)] += v;
                    if i != j {
                        q[(j, i)] += v;
                    }
                }
            }
        }
        q
    }
}

/// Samples the steered element fields over the sphere and partitions the
/// rows with the mainlobe analysis of the unit-weight pattern.
pub fn build_field_matrix(model: &ArrayModel, steering: &SteeringVector, step_deg: f64, lobes: &LobeOptions) -> Result<FieldMatrix> {
    let n = model.len();
    let unit = model.weights(&model.uniform_excitation(*steering))?;
    let cache = model.element_cache(step_deg)?;
    let region = *cache.region();
    let mut entries = Vec::with_capacity(region.len() * n);
    let mut directions = Vec::with_capacity(region.len());
    let mut omega = Vec::with_capacity(region.len());
    let mut u = Vec::with_capacity(region.len());
    let d2 = step_deg.to_radians().powi(2);
    for j in 0..region.n_phi {
        let cos_phi = region.phi_deg(j).to_radians().cos().max(0.0);
        for i in 0..region.n_theta {
            let mut e = Vector3::<Complex64>::zeros();
            for (t, s) in cache.node(i, j).iter().zip(&unit) {
                let col = t * *s;
                e += col;
                entries.push(col);
            }
            u.push(crate::farfield::intensity(&e));
            directions.push(region.direction(i, j));
            omega.push(cos_phi * d2);
        }
    }
    let grid = SphereGrid::from_region(region, u)?;
    let (pi, pj, peak_u) = grid.peak();
    if !(peak_u > 0.0) {
        return Err(Error::ZeroPower);
    }
    let (mask, _) = mainlobe_region(&grid, (pi, pj), lobes)?;

    let r_s = steering.direction().unit_vector();
    let steer: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let t = model.element_term(i, &r_s) * unit[i];
            t.map(|c| c.re)
        })
        .collect();

    let mainlobe: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    let sidelobe: Vec<usize> = (0..mask.len()).filter(|&k| !mask[k]).collect();

    // Nearest steering node must sit inside the mainlobe.
    let nearest = (0..directions.len())
        .max_by(|&a, &b| {
            directions[a]
                .unit_vector()
                .dot(&r_s)
                .total_cmp(&directions[b].unit_vector().dot(&r_s))
        })
        .unwrap();
    if !mask[nearest] {
        return Err(Error::Degenerate(format!(
            "steer ({}, {}) lies outside the mainlobe of the unit-weight pattern",
            fmt_angle(steering.theta_scan.to_degrees()),
            fmt_angle(steering.phi_scan.to_degrees())
        )));
    }

    // The bearing-interpolated mask can reach past the true lobe edge; the
    // monotonicity constraint applies where unit weights already descend.
    let peak_row = pj * region.n_theta + pi;
    let unit_u = grid.values();
    let monotone: Vec<bool> = (0..mask.len())
        .map(|r| {
            mask[r]
                && r != peak_row
                && inward_stencil(&region, r, peak_row).is_some_and(|st| {
                    st.iter().all(|&(k, l)| l == 0.0 || mask[k]) && unit_u[r] <= stencil_value(&st, unit_u) * (1.0 + 1e-9)
                })
        })
        .collect();
    let m = FieldMatrix {
        n_elements: n,
        entries,
        directions,
        omega,
        steer,
        mainlobe,
        sidelobe,
        monotone,
        steering: Some(*steering),
        region: Some(region),
    };
    m.validate()?;
    Ok(m)
}

/// Bilinear stencil of the point one grid step from row `r` towards row
/// `peak` along the great circle through both.
fn inward_stencil(region: &GridRegion, r: usize, peak: usize) -> Option<Stencil> {
    let node = |k: usize| region.direction(k % region.n_theta, k / region.n_theta).unit_vector();
    let (v, p) = (node(r), node(peak));
    let inward = p - v * v.dot(&p);
    if inward.norm() < 1e-12 {
        return None;
    }
    let delta = v.dot(&p).clamp(-1.0, 1.0).acos().min(region.step_deg.to_radians());
    let target = v * delta.cos() + inward.normalize() * delta.sin();
    Direction::from_vector(&target).ok().and_then(|d| region.bilinear(d))
}

impl FieldMatrix {
    /// Monotonicity check of intensities `u`: descent is measured towards
    /// the strongest mainlobe row. Returns the smallest
    /// `(U_parent − U) / U_peak` and the rows where it is below `−tol`.
    fn monotonic_check(&self, u: &[f64], tol: f64) -> Option<(f64, Vec<usize>)> {
        let region = self.region.as_ref()?;
        if !self.monotone.iter().any(|&b| b) {
            return None;
        }
        let peak_row = *self.mainlobe.iter().max_by(|&&a, &&b| u[a].total_cmp(&u[b]))?;
        let peak = u.iter().copied().fold(0.0, f64::max);
        let mut margin = f64::INFINITY;
        let mut bad = Vec::new();
        for &r in &self.mainlobe {
            if !self.monotone[r] || r == peak_row {
                continue;
            }
            if let Some(st) = inward_stencil(region, r, peak_row) {
                let m = (stencil_value(&st, u) - u[r]) / peak;
                margin = margin.min(m);
                if !(m >= -tol) {
                    bad.push(r);
                }
            }
        }
        Some((if peak > 0.0 { margin } else { f64::NAN }, bad))
    }
}

/// Margins of the four synthesis constraints; non-negative means satisfied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintReport {
    /// Highest sidelobe intensity over the pattern peak.
    pub sll_ratio: f64,
    /// `bound − sll_ratio`.
    pub sidelobe_margin: f64,
    /// Smallest `(U_parent − U) / U_peak` inside the mainlobe; `None` when
    /// the matrix carries no neighbour structure.
    pub monotonic_margin: Option<f64>,
    /// Steer directivity relative to the reference, minus the 0.707 floor.
    pub floor_margin: f64,
    /// `0.1 − sll_ratio`.
    pub ceiling_margin: f64,
}

impl ConstraintReport {
    pub fn satisfied(&self, tol: f64) -> bool {
        let ok = |m: f64| m >= -tol;
        ok(self.sidelobe_margin) && self.monotonic_margin.map_or(true, ok) && ok(self.floor_margin) && ok(self.ceiling_margin)
    }

    pub fn sll_db(&self) -> f64 {
        10.0 * self.sll_ratio.log10()
    }
}

impl std::fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ok = |m: f64| if m >= -1e-6 { "ok" } else { "VIOLATED" };
        writeln!(f, "SLL                 {:.4} dB (ratio {:.6e})", self.sll_db(), self.sll_ratio)?;
        writeln!(f, "sidelobe caps       margin {:+.6e} {}", self.sidelobe_margin, ok(self.sidelobe_margin))?;
        match self.monotonic_margin {
            Some(m) => writeln!(f, "mainlobe monotone   margin {m:+.6e} {}", ok(m))?,
            None => writeln!(f, "mainlobe monotone   not checked")?,
        }
        writeln!(f, "directivity floor   margin {:+.6e} {}", self.floor_margin, ok(self.floor_margin))?;
        write!(f, "SLL ceiling         margin {:+.6e} {}", self.ceiling_margin, ok(self.ceiling_margin))
    }
}

fn stencil_value(p: &Stencil, u: &[f64]) -> f64 {
    p.iter().map(|&(k, l)| if l == 0.0 { 0.0 } else { l * u[k] }).sum()
}

/// Reference quantities of the unit-weight pattern.
fn unit_power(matrix: &FieldMatrix) -> f64 {
    matrix.radiated_power(&vec![1.0; matrix.n_elements])
}

/// Evaluates all constraints for weights `w` against an SLL `bound`.
/// `u_ref` is the reference steer intensity at unit-weight radiated power.
pub fn verify(matrix: &FieldMatrix, w: &[f64], u_ref: f64, bound: f64) -> Result<ConstraintReport> {
    if w.len() != matrix.n_elements {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: matrix.n_elements,
            actual: w.len(),
        });
    }
    let u = matrix.intensities(w);
    let peak = u.iter().copied().fold(0.0, f64::max);
    let side = matrix.sidelobe.iter().map(|&r| u[r]).fold(0.0, f64::max);
    let sll_ratio = if peak > 0.0 { side / peak } else { f64::NAN };

    let monotonic_margin = matrix.monotonic_check(&u, 0.0).map(|(m, _)| m);

    let p = matrix.radiated_power(w);
    let p_ref = unit_power(matrix);
    let floor_margin = if p > 0.0 {
        (matrix.steer_intensity(w) / p) / (u_ref / p_ref) - DIRECTIVITY_FLOOR
    } else {
        -DIRECTIVITY_FLOOR
    };
    Ok(ConstraintReport {
        sll_ratio,
        sidelobe_margin: bound - sll_ratio,
        monotonic_margin,
        floor_margin,
        ceiling_margin: SLL_CEILING - sll_ratio,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOptions {
    /// Reference steer intensity; defaults to the unit-weight value.
    pub u_ref: Option<f64>,
    /// Constraint tolerance (relative).
    pub tol: f64,
    pub max_iter: usize,
    /// Stop bisecting when `hi / lo − 1` falls below this.
    pub rel_gap: f64,
    pub max_bisections: usize,
    /// Sidelobe rows in the initial working set.
    pub working_set: usize,
    /// Rounds of the mainlobe-monotonicity repair loop.
    pub monotonic_rounds: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            u_ref: None,
            tol: 1e-6,
            max_iter: 100_000,
            rel_gap: 1e-4,
            max_bisections: 40,
            working_set: 128,
            monotonic_rounds: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    /// Amplitudes scaled to the unit-weight radiated power.
    pub weights: Vec<f64>,
    /// Final SLL bound proven feasible.
    pub bound: f64,
    /// Achieved SLL over the matrix rows, dB.
    pub sll_db: f64,
    /// SLL of unit weights over the same rows, dB.
    pub unit_sll_db: f64,
    /// Unit weights were at least as good and are returned instead.
    pub used_unit: bool,
    pub u_ref: f64,
    pub report: ConstraintReport,
    /// Mainlobe rows moved to the sidelobe caps because they rose towards
    /// the mainlobe edge; `matrix` is left with the augmented partition.
    pub capped_rows: Vec<usize>,
    pub bisections: usize,
}

/// Convex feasibility problem at a fixed bound, in normalized variables.
struct Problem<'a> {
    m: &'a FieldMatrix,
    c: DVector<f64>,
    q: DMatrix<f64>,
    p_max: f64,
}

enum Solve {
    Feasible(Vec<f64>),
    Infeasible { worst: Option<usize>, excess: f64 },
}

/// Adds `scale · ∇‖A_r w‖²` into `grad` and returns `‖A_r w‖²`.
fn row_value_grad(m: &FieldMatrix, r: usize, w: &[f64], grad: &mut [f64], scale: f64) -> f64 {
    let e = m.row_field(r, w);
    if scale != 0.0 {
        for (g, a) in grad.iter_mut().zip(m.row(r)) {
            *g += scale * 2.0 * (a.x.conj() * e.x + a.y.conj() * e.y + a.z.conj() * e.z).re;
        }
    }
    crate::farfield::intensity(&e)
}

impl<'a> Problem<'a> {
    /// Normalized violation `U_r / cap − 1` of row `r` (≤ 0 when
    /// satisfied) against the bound tightened by `slack`. Adds `c` times
    /// the gradient of the squared hinge into `grad`.
    fn row_constraint(&self, r: usize, w: &[f64], s: f64, slack: f64, grad: Option<(&mut [f64], f64)>) -> f64 {
        let cap = s * (1.0 - slack);
        let g = self.m.row_intensity(r, w) / cap - 1.0;
        if let Some((acc, c)) = grad {
            if g > 0.0 {
                row_value_grad(self.m, r, w, acc, 2.0 * c * g / cap);
            }
        }
        g
    }

    /// Euclidean projection onto `{w ≥ 0, cᵀw = 1}`.
    fn project(&self, v: &[f64]) -> Vec<f64> {
        let c = &self.c;
        let h = |lam: f64| -> f64 { v.iter().zip(c.iter()).map(|(&vi, &ci)| ci * (vi - lam * ci).max(0.0)).sum() };
        let mut bps: Vec<f64> = v
            .iter()
            .zip(c.iter())
            .filter(|(_, &ci)| ci != 0.0)
            .map(|(&vi, &ci)| vi / ci)
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        // h is non-increasing and piecewise linear; find the segment where it crosses 1.
        let mut lo = bps[0] - 1.0;
        while h(lo) < 1.0 {
            lo = lo * 2.0 - 1.0 - lo.abs();
        }
        let mut hi = lo;
        for &b in &bps {
            if h(b) <= 1.0 {
                hi = b;
                break;
            }
            lo = b;
        }
        if hi == lo {
            // Crossing lies beyond the last breakpoint only if negative c
            // entries keep h falling; walk outwards.
            hi = bps[bps.len() - 1] + 1.0;
            while h(hi) > 1.0 {
                hi += 2.0 * (hi - lo).abs() + 1.0;
            }
        }
        let (hl, hh) = (h(lo), h(hi));
        let lam = if (hl - hh).abs() > 0.0 { lo + (hl - 1.0) * (hi - lo) / (hl - hh) } else { lo };
        v.iter().zip(c.iter()).map(|(&vi, &ci)| (vi - lam * ci).max(0.0)).collect()
    }

    /// Penalty `Σ max(0, g)²` over the capped rows and the power bound, with
    /// constraints scaled to `g = value / cap − 1` against tightened caps.
    fn penalty(&self, w: &[f64], rows: &[usize], s: f64, grad: Option<&mut [f64]>) -> f64 {
        const TIGHT: f64 = 1.0 - 1e-3;
        let n = w.len();
        let mut g_acc = vec![0.0; n];
        let want_grad = grad.is_some();
        let mut total = 0.0;
        for &r in rows {
            let g = self.row_constraint(r, w, s, 1.0 - TIGHT, want_grad.then_some((&mut g_acc[..], 1.0)));
            if g > 0.0 {
                total += g * g;
            }
        }
        let wv = DVector::from_column_slice(w);
        let qw = &self.q * &wv;
        let p = wv.dot(&qw);
        let pcap = self.p_max * TIGHT;
        let g = p / pcap - 1.0;
        if g > 0.0 {
            total += g * g;
            if want_grad {
                for i in 0..n {
                    g_acc[i] += 2.0 * g / pcap * 2.0 * qw[i];
                }
            }
        }
        if let Some(out) = grad {
            out.copy_from_slice(&g_acc);
        }
        total
    }

    /// Worst relative violation over `rows` and the power bound.
    fn worst_violation(&self, w: &[f64], rows: &[usize], s: f64) -> (f64, Option<usize>) {
        let mut worst = (f64::NEG_INFINITY, None);
        for &r in rows {
            let g = self.row_constraint(r, w, s, 0.0, None);
            if g > worst.0 {
                worst = (g, Some(r));
            }
        }
        let wv = DVector::from_column_slice(w);
        let g = wv.dot(&(&self.q * &wv)) / self.p_max - 1.0;
        if g > worst.0 {
            worst = (g, None);
        }
        worst
    }

    fn solve(&self, start: &[f64], rows: &[usize], s: f64, opts: &OptimizeOptions) -> Solve {
        let n = start.len();
        let mut x = self.project(start);
        if self.worst_violation(&x, rows, s).0 <= opts.tol {
            return Solve::Feasible(x);
        }
        let mut y = x.clone();
        let mut t: f64 = 1.0;
        let mut lip = 1.0;
        let mut grad = vec![0.0; n];
        let mut fx = self.penalty(&x, rows, s, None);
        let mut best = fx;
        let mut window_best = fx;
        const WINDOW: usize = 2000;
        for it in 1..=opts.max_iter {
            let fy = self.penalty(&y, rows, s, Some(&mut grad));
            let mut x_new;
            loop {
                let step: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - gi / lip).collect();
                x_new = self.project(&step);
                let d: Vec<f64> = x_new.iter().zip(&y).map(|(a, b)| a - b).collect();
                let lin: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
                let quad: f64 = d.iter().map(|a| a * a).sum::<f64>() * lip / 2.0;
                let f_new = self.penalty(&x_new, rows, s, None);
                if f_new <= fy + lin + quad + 1e-15 * fy.abs() || lip > 1e30 {
                    break;
                }
                lip *= 2.0;
            }
            let f_new = self.penalty(&x_new, rows, s, None);
            let (viol, _) = self.worst_violation(&x_new, rows, s);
            if viol <= opts.tol {
                return Solve::Feasible(x_new);
            }
            let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            if f_new > fx {
                // Adaptive restart.
                t = 1.0;
                y = x_new.clone();
            } else {
                let beta = (t - 1.0) / t_new;
                y = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
                t = t_new;
            }
            x = x_new;
            fx = f_new;
            lip *= 0.95;
            best = best.min(fx);
            if it % WINDOW == 0 {
                if best > window_best * (1.0 - 1e-3) {
                    break;
                }
                window_best = best;
            }
        }
        let (excess, worst) = self.worst_violation(&x, rows, s);
        Solve::Infeasible { worst, excess }
    }
}

fn describe_row(p: &Problem, r: Option<usize>, excess: f64) -> String {
    match r {
        Some(r) => {
            let d = p.m.direction(r);
            format!(
                "sidelobe cap at (θ={}°, φ={}°) exceeded by {:.3e} (relative)",
                fmt_angle(d.theta_deg()),
                fmt_angle(d.phi_deg()),
                excess
            )
        }
        None => format!("directivity floor exceeded by {excess:.3e} (relative power)"),
    }
}

/// Minimizes the SLL over non-negative amplitudes.
pub fn optimize(matrix: &mut FieldMatrix, opts: &OptimizeOptions) -> Result<OptimizationResult> {
    let n = matrix.n_elements;
    let unit = vec![1.0; n];
    let sum: Vector3<f64> = matrix.steer.iter().sum();
    if !(sum.norm() > 0.0) {
        return Err(Error::Degenerate("unit-weight field vanishes at the steer".into()));
    }
    let e_hat = sum.normalize();
    let c = DVector::from_iterator(n, matrix.steer.iter().map(|g| g.dot(&e_hat)));
    if !c.iter().any(|&ci| ci > 0.0) {
        return Err(Error::Degenerate("no element radiates towards the steer".into()));
    }
    let u_unit = matrix.steer_intensity(&unit);
    let u_ref = opts.u_ref.unwrap_or(u_unit);
    if !(u_ref.is_finite() && u_ref > 0.0) {
        return Err(Error::InvalidSpec(format!("u_ref {u_ref} must be positive")));
    }
    if u_unit < DIRECTIVITY_FLOOR * u_ref * (1.0 - 1e-9) {
        return Err(Error::InvalidSpec(format!(
            "unit weights reach U = {u_unit:.6e} at the steer, below 0.707·u_ref = {:.6e}; lower u_ref",
            DIRECTIVITY_FLOOR * u_ref
        )));
    }
    let p_ref = unit_power(matrix);
    let unit_report = verify(matrix, &unit, u_ref, SLL_CEILING)?;

    // Verify-and-augment: mainlobe rows that break monotonic descent join
    // the sidelobe caps and the bound is bisected again.
    let mut moved: Vec<usize> = Vec::new();
    let (mut w, bound, bisections) = {
        let m: &FieldMatrix = matrix;
        let problem = Problem {
            m,
            c,
            q: m.power_matrix(),
            p_max: p_ref / (DIRECTIVITY_FLOOR * u_ref),
        };
        let cw: f64 = problem.c.sum();
        let unit_norm: Vec<f64> = unit.iter().map(|&x| x / cw).collect();
        let mut caps: Vec<usize> = m.sidelobe.clone();
        let mut is_moved = vec![false; m.n_rows()];
        let mut round = 0;
        loop {
            let (w, bound, bisections) = bisect(&problem, &caps, &unit_norm, opts)?;
            let u = m.intensities(&w);
            let violators: Vec<usize> = m
                .monotonic_check(&u, opts.tol)
                .map_or(Vec::new(), |(_, bad)| bad.into_iter().filter(|&r| !is_moved[r]).collect());
            if violators.is_empty() {
                break (w, bound, bisections);
            }
            if round == opts.monotonic_rounds {
                return Err(Error::Infeasible {
                    bound,
                    constraint: format!(
                        "mainlobe still not monotone after {round} repair rounds ({} rows rising towards the edge)",
                        violators.len()
                    ),
                });
            }
            round += 1;
            log::info!("mainlobe monotonicity: moving {} rows to the sidelobe caps", violators.len());
            for r in violators {
                is_moved[r] = true;
                caps.push(r);
                moved.push(r);
            }
        }
    };
    moved.sort_unstable();
    matrix.move_to_sidelobe(&moved);

    let p = matrix.radiated_power(&w);
    let scale = (p_ref / p).sqrt();
    w.iter_mut().for_each(|x| *x *= scale);
    let mut report = verify(matrix, &w, u_ref, bound)?;
    let mut used_unit = false;
    let unit_now = verify(matrix, &unit, u_ref, bound)?;
    if unit_now.sll_ratio <= report.sll_ratio && unit_now.satisfied(opts.tol) {
        used_unit = true;
        w = unit.clone();
        report = unit_now;
    }
    Ok(OptimizationResult {
        sll_db: report.sll_db(),
        unit_sll_db: unit_report.sll_db(),
        weights: w,
        bound,
        used_unit,
        u_ref,
        report,
        capped_rows: moved,
        bisections,
    })
}

/// Bisection on the SLL bound. Returns the normalized weights proven
/// feasible at the final bound.
fn bisect(problem: &Problem, caps: &[usize], unit_norm: &[f64], opts: &OptimizeOptions) -> Result<(Vec<f64>, f64, usize)> {
    let m = problem.m;
    // Working set seeded with the strongest unit-weight sidelobe rows.
    let mut ranked: Vec<(f64, usize)> = caps.iter().map(|&r| (m.row_intensity(r, unit_norm), r)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut in_set = vec![false; m.n_rows()];
    let mut working: Vec<usize> = Vec::new();
    for &(_, r) in ranked.iter().take(opts.working_set.max(1)) {
        in_set[r] = true;
        working.push(r);
    }

    let s_unit = ranked.first().map_or(0.0, |x| x.0);
    let p_unit = {
        let v = DVector::from_column_slice(unit_norm);
        v.dot(&(&problem.q * &v))
    };
    let unit_ok = p_unit <= problem.p_max * (1.0 + opts.tol);
    if unit_ok && s_unit <= 0.0 {
        return Ok((unit_norm.to_vec(), 0.0, 0));
    }

    // Feasibility at `s` with the working set grown until every capped row holds.
    let check = |s: f64, start: &[f64], working: &mut Vec<usize>, in_set: &mut Vec<bool>| -> Solve {
        let mut start = start.to_vec();
        loop {
            match problem.solve(&start, working, s, opts) {
                Solve::Feasible(w) => {
                    let mut viol: Vec<(f64, usize)> = caps
                        .iter()
                        .filter(|&&r| !in_set[r])
                        .map(|&r| (problem.row_constraint(r, &w, s, 0.0, None), r))
                        .filter(|(g, _)| *g > opts.tol)
                        .collect();
                    if viol.is_empty() {
                        return Solve::Feasible(w);
                    }
                    viol.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    for &(_, r) in viol.iter().take(256) {
                        in_set[r] = true;
                        working.push(r);
                    }
                    start = w;
                }
                other => return other,
            }
        }
    };

    let (mut hi, mut w_hi) = if unit_ok && s_unit <= SLL_CEILING {
        (s_unit.max(f64::MIN_POSITIVE), unit_norm.to_vec())
    } else {
        match check(SLL_CEILING, unit_norm, &mut working, &mut in_set) {
            Solve::Feasible(w) => (SLL_CEILING, w),
            Solve::Infeasible { worst, excess } => {
                return Err(Error::Infeasible {
                    bound: SLL_CEILING,
                    constraint: describe_row(problem, worst, excess),
                })
            }
        }
    };
    let mut lo = hi * 1e-4;
    let mut steps = 0;
    while steps < opts.max_bisections && hi / lo - 1.0 > opts.rel_gap {
        steps += 1;
        let mid = (lo * hi).sqrt();
        match check(mid, &w_hi, &mut working, &mut in_set) {
            Solve::Feasible(w) => {
                hi = mid;
                w_hi = w;
            }
            Solve::Infeasible { .. } => lo = mid,
        }
    }
    Ok((w_hi, hi, steps))
}

/// Excitation with amplitudes `w` and the usual steering phases.
pub fn apply_table_weights(w: &[f64], placements: &[ElementPlacement], steering: SteeringVector) -> Result<Excitation> {
    if w.len() != placements.len() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: placements.len(),
            actual: w.len(),
        });
    }
    Excitation::new(w.to_vec(), steering)
}

#[derive(Deserialize)]
struct WeightRow {
    index: usize,
    weight: f64,
}

fn parse_weights<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<WeightRow>() {
        let row = rec.map_err(|e| crate::surface::csv_error(path, e))?;
        if !(row.weight.is_finite() && row.weight >= 0.0) {
            return Err(Error::parse(path, format!("element {}: weight {} must be finite and ≥ 0", row.index, row.weight)));
        }
        rows.push(row);
    }
    let mut out = vec![f64::NAN; rows.len()];
    for r in rows {
        if r.index >= out.len() || !out[r.index].is_nan() {
            return Err(Error::parse(path, format!("index {} is duplicated or out of 0..{}", r.index, out.len())));
        }
        out[r.index] = r.weight;
    }
    if out.is_empty() {
        return Err(Error::parse(path, "no weights"));
    }
    Ok(out)
}

/// Reads `index,weight` with 0-based element indices.
pub fn read_weights_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_weights(f, path)
}

pub fn write_weights_csv(path: impl AsRef<Path>, w: &[f64]) -> Result<()> {
    let mut out = String::from("index,weight\n");
    for (i, x) in w.iter().enumerate() {
        out.push_str(&format!("{i},{x:.9}\n"));
    }
    write_file(path.as_ref(), &out)
}

const TABLE_THREE_CSV: &str = include_str!("../fixtures/table3_weights.csv");

/// Reference optimized weights of the 4×7 non-uniform array, in the
/// layout's row-major element order.
pub fn table_three_weights() -> Vec<f64> {
    parse_weights(TABLE_THREE_CSV.as_bytes(), Path::new("table3_weights.csv")).expect("shipped weights are valid")
}

/// Solid angle of the full sphere, for sanity checks on row weights.
pub fn sphere_solid_angle(matrix: &FieldMatrix) -> f64 {
    matrix.omega.iter().sum::<f64>() / (4.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farfield::RadioConfig;
    use crate::geometry::FrameRoll;
    use crate::pattern::ElementPattern;

    fn real(x: f64) -> Vector3<Complex64> {
        Vector3::new(Complex64::new(x, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    }

    fn toy() -> FieldMatrix {
        FieldMatrix::from_parts(
            vec![vec![real(1.0), real(0.3)], vec![real(0.1), real(0.3)]],
            vec![1.0, 1.0],
            vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.3, 0.0, 0.0)],
            vec![0],
            vec![1],
        )
        .unwrap()
    }

    /// Exhaustive search over `w ∈ [0, 1]²` honouring the directivity floor.
    fn brute_force(m: &FieldMatrix) -> (f64, [f64; 2]) {
        let u_ref = m.steer_intensity(&[1.0, 1.0]);
        let p_ref = m.radiated_power(&[1.0, 1.0]);
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for a in 0..=1000 {
            for b in 0..=1000 {
                let w = [a as f64 * 1e-3, b as f64 * 1e-3];
                let p = m.radiated_power(&w);
                if p == 0.0 || m.steer_intensity(&w) / p < DIRECTIVITY_FLOOR * u_ref / p_ref {
                    continue;
                }
                let u = m.intensities(&w);
                let sll = u[1] / u[0].max(u[1]);
                if sll < best.0 {
                    best = (sll, w);
                }
            }
        }
        best
    }

    #[test]
    fn two_element_toy_matches_brute_force() {
        let mut m = toy();
        let (brute, _) = brute_force(&m);
        let r = optimize(&mut m, &OptimizeOptions::default()).unwrap();
        assert!((r.report.sll_ratio - brute).abs() < 1e-3, "{} vs {brute}", r.report.sll_ratio);
        assert!(r.report.satisfied(1e-6), "{}", r.report);
        assert!(!r.used_unit);
    }

    #[test]
    fn feasible_bounds_form_an_interval() {
        let mut m = toy();
        let r = optimize(&mut m, &OptimizeOptions::default()).unwrap();
        let u_ref = m.steer_intensity(&[1.0, 1.0]);
        let p_ref = m.radiated_power(&[1.0, 1.0]);
        let e_hat = Vector3::x();
        let problem = Problem {
            m: &m,
            c: DVector::from_iterator(2, m.steer.iter().map(|g| g.dot(&e_hat))),
            q: m.power_matrix(),
            p_max: p_ref / (DIRECTIVITY_FLOOR * u_ref),
        };
        let rows = [1usize];
        let start = [0.5, 0.5];
        let probe: Vec<bool> = [0.5, 0.9, 1.5, 3.0, 10.0]
            .iter()
            .map(|f| matches!(problem.solve(&start, &rows, r.bound * f, &OptimizeOptions::default()), Solve::Feasible(_)))
            .collect();
        assert_eq!(probe, vec![false, false, true, true, true]);
    }

    #[test]
    fn projection_is_onto_the_slice() {
        let m = toy();
        let problem = Problem {
            m: &m,
            c: DVector::from_vec(vec![1.0, 0.3]),
            q: m.power_matrix(),
            p_max: 1.0,
        };
        for v in [[0.2, 0.9], [-1.0, 4.0], [3.0, -2.0], [0.0, 0.0]] {
            let w = problem.project(&v);
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w[0] + 0.3 * w[1] - 1.0).abs() < 1e-12);
            // No feasible point on a fine sweep is closer to v.
            let d = |a: &[f64]| (a[0] - v[0]).powi(2) + (a[1] - v[1]).powi(2);
            for k in 0..=1000 {
                let x1 = k as f64 / 300.0;
                let x0 = 1.0 - 0.3 * x1;
                if x0 >= 0.0 {
                    assert!(d(&w) <= d(&[x0, x1]) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn power_matrix_matches_quadrature() {
        let m = toy();
        let w = [0.4, 0.7];
        let q = m.power_matrix();
        let v = DVector::from_row_slice(&w);
        assert!((v.dot(&(&q * &v)) - m.radiated_power(&w)).abs() < 1e-14);
    }

    fn planar_model(n: usize) -> ArrayModel {
        let els = (0..n)
            .map(|i| {
                let pos = Vector3::new((i % 4) as f64 * 0.022, (i / 4) as f64 * 0.025, 0.0);
                ElementPlacement::new(i, pos, Vector3::new(0.0, 0.0, -1.0), FrameRoll::NormalAngles).unwrap()
            })
            .collect();
        ArrayModel::with_pattern(els, &ElementPattern::cos_squared(), RadioConfig::default()).unwrap()
    }

    #[test]
    fn single_element_problem() {
        let m = planar_model(1);
        let s = SteeringVector::from_degrees(0.0, -90.0);
        let mut fm = build_field_matrix(&m, &s, 4.0, &LobeOptions::default()).unwrap();
        assert_eq!(fm.n_elements(), 1);
        let r = optimize(&mut fm, &OptimizeOptions::default()).unwrap();
        assert!((r.weights[0] - 1.0).abs() < 1e-12);
        assert!(r.report.floor_margin >= -1e-12);
        // Scaling the weight leaves SLL unchanged.
        let a = verify(&fm, &[1.0], r.u_ref, r.bound).unwrap();
        let b = verify(&fm, &[7.0], r.u_ref, r.bound).unwrap();
        assert_eq!(a.sll_ratio.to_bits(), b.sll_ratio.to_bits());
    }

    #[test]
    fn matrix_reproduces_sampled_intensities() {
        let m = planar_model(8);
        let s = SteeringVector::from_degrees(20.0, -60.0);
        let fm = build_field_matrix(&m, &s, 2.0, &LobeOptions::default()).unwrap();
        assert_eq!(fm.n_rows(), 180 * 91);
        let g = m.sample_sphere(&m.uniform_excitation(s), 2.0).unwrap();
        let u = fm.intensities(&[1.0; 8]);
        for (a, b) in u.iter().zip(g.values()) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
        assert!((sphere_solid_angle(&fm) - 1.0).abs() < 1e-3);
        assert!((fm.radiated_power(&[1.0; 8]) - g.radiated_power().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn small_array_improves_on_unit_weights() {
        let m = planar_model(8);
        let s = SteeringVector::from_degrees(0.0, -60.0);
        let mut fm = build_field_matrix(&m, &s, 2.0, &LobeOptions::default()).unwrap();
        let r = optimize(&mut fm, &OptimizeOptions::default()).unwrap();
        assert!(r.report.satisfied(1e-6), "{}", r.report);
        assert!(r.sll_db <= r.unit_sll_db);
        assert!(r.weights.iter().all(|&w| w >= 0.0 && w.is_finite()));
        let p = fm.radiated_power(&r.weights);
        assert!((p / fm.radiated_power(&[1.0; 8]) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn verify_flags_zero_and_high_sll() {
        let m = toy();
        let z = verify(&m, &[0.0, 0.0], 1.69, 0.1).unwrap();
        assert!(z.floor_margin < 0.0);
        assert!(!z.satisfied(1e-6));
        // Sidelobe as strong as the mainlobe breaks the ceiling.
        let mut bad = FieldMatrix::from_parts(
            vec![vec![real(1.0)], vec![real(0.8)]],
            vec![1.0, 1.0],
            vec![Vector3::new(1.0, 0.0, 0.0)],
            vec![0],
            vec![1],
        )
        .unwrap();
        let r = verify(&bad, &[1.0], 1.0, 0.1).unwrap();
        assert!(r.ceiling_margin < 0.0);
        assert!(matches!(optimize(&mut bad, &OptimizeOptions::default()), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn matrix_validation() {
        let rows = vec![vec![real(1.0)], vec![real(0.5)]];
        let steer = vec![Vector3::new(1.0, 0.0, 0.0)];
        assert!(FieldMatrix::from_parts(rows.clone(), vec![1.0, 1.0], steer.clone(), vec![0], vec![]).is_err());
        assert!(FieldMatrix::from_parts(rows.clone(), vec![1.0, 1.0], steer.clone(), vec![0, 1], vec![1]).is_err());
        assert!(FieldMatrix::from_parts(rows, vec![1.0], steer, vec![0], vec![1]).is_err());
    }

    #[test]
    fn weights_io() {
        let t = table_three_weights();
        assert_eq!(t.len(), 28);
        assert_eq!(t[0], 0.60004);
        assert_eq!(t[27], 0.40781);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        write_weights_csv(&p, &t).unwrap();
        assert_eq!(read_weights_csv(&p).unwrap(), t);
        std::fs::write(&p, "index,weight\n0,1\n0,2\n").unwrap();
        assert!(read_weights_csv(&p).is_err());
        std::fs::write(&p, "index,weight\n0,1\n2,2\n").unwrap();
        assert!(read_weights_csv(&p).is_err());
        std::fs::write(&p, "index,weight\n0,-1\n").unwrap();
        assert!(read_weights_csv(&p).is_err());
    }

    #[test]
    fn table_weights_excitation() {
        let m = planar_model(3);
        let s = SteeringVector::from_degrees(0.0, -30.0);
        let ones = apply_table_weights(&[1.0; 3], &m.elements, s).unwrap();
        assert_eq!(ones, m.uniform_excitation(s));
        assert!(apply_table_weights(&[1.0; 2], &m.elements, s).is_err());
    }
}
