//! The approximant `log|f| = u + e` built from an atomization, where
//! `e(z) = Σ_cells [log|z - atom| - ∫_cell log|z - ζ| dμ(ζ)]`.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomize::{Atomization, MassCell};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::profiles::{Domain, GrowthProfile};
use crate::quadrature::{gauss_legendre, integrate, CompensatedSum};

/// Cells farther than this many diameters from `z` use the multipole series.
pub const FAR_FACTOR: f64 = 4.0;
const NEAR_TOL: f64 = 1e-8;

/// A finite mass distribution with a designated atom.
pub trait CellMass: Sync {
    fn atom(&self) -> Complex64;
    fn mass(&self) -> f64;
    fn diameter(&self) -> f64;
    /// `∫ (ζ - atom)^k dμ` for `k = 2, 3, ...`; the dipole term vanishes.
    fn moments(&self) -> &[Complex64];
    /// `∫ f dμ`, where `f` may have an integrable singularity at `hint`.
    fn integrate_against<F: Fn(Complex64) -> f64>(&self, f: F, hint: Complex64, abs_tol: f64) -> f64;
}

impl CellMass for MassCell {
    fn atom(&self) -> Complex64 {
        self.atom
    }
    fn mass(&self) -> f64 {
        self.mass
    }
    fn diameter(&self) -> f64 {
        self.diameter
    }
    fn moments(&self) -> &[Complex64] {
        &self.moments
    }
    fn integrate_against<F: Fn(Complex64) -> f64>(&self, f: F, hint: Complex64, abs_tol: f64) -> f64 {
        let c = self.density.center();
        let w = hint - c;
        let t_hint = w.norm();
        let mut th_hint = w.arg();
        if th_hint < 0.0 {
            th_hint += TAU;
        }
        let mut breaks = self.clip_breaks();
        breaks.push(t_hint);
        let width = (self.r_hi - self.r_lo).max(f64::MIN_POSITIVE);
        integrate(
            |t| {
                let (a, b) = self.angles_at(t);
                let g = self.density.weight(t);
                if b <= a || g == 0.0 {
                    return 0.0;
                }
                let inner_tol = 0.1 * abs_tol / (g * width);
                g * integrate(|th| f(c + Complex64::from_polar(t, th)), a, b, &[th_hint], inner_tol, 1e-11, 200).value
            },
            self.r_lo,
            self.r_hi,
            &breaks,
            abs_tol,
            1e-13,
            300,
        )
        .value
    }
}

/// Uniform mass on an axis-parallel rectangle, atom at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct RectCell {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub mass: f64,
    moments: Vec<Complex64>,
}

impl RectCell {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64, mass: f64) -> Result<Self> {
        if !(x_lo < x_hi && y_lo < y_hi && mass > 0.0) {
            return Err(Error::invalid("rectangle cell needs positive extent and mass"));
        }
        let mut cell = RectCell { x_lo, x_hi, y_lo, y_hi, mass, moments: Vec::new() };
        // Gauss-Legendre 32x32 is exact for these polynomial moments.
        let gl = gauss_legendre(32);
        let (hx, hy) = (0.5 * (x_hi - x_lo), 0.5 * (y_hi - y_lo));
        cell.moments = (2..=crate::atomize::MULTIPOLE_ORDER as i32)
            .map(|k| {
                let mut s = Complex64::new(0.0, 0.0);
                for &(u, wu) in &gl {
                    for &(v, wv) in &gl {
                        s += wu * wv * Complex64::new(hx * u, hy * v).powi(k);
                    }
                }
                s * mass / 4.0
            })
            .collect();
        Ok(cell)
    }
}

impl CellMass for RectCell {
    fn atom(&self) -> Complex64 {
        Complex64::new(0.5 * (self.x_lo + self.x_hi), 0.5 * (self.y_lo + self.y_hi))
    }
    fn mass(&self) -> f64 {
        self.mass
    }
    fn diameter(&self) -> f64 {
        (self.x_hi - self.x_lo).hypot(self.y_hi - self.y_lo)
    }
    fn moments(&self) -> &[Complex64] {
        &self.moments
    }
    fn integrate_against<F: Fn(Complex64) -> f64>(&self, f: F, hint: Complex64, abs_tol: f64) -> f64 {
        let density = self.mass / ((self.x_hi - self.x_lo) * (self.y_hi - self.y_lo));
        let inner_tol = 1e-3 * abs_tol / (density * (self.x_hi - self.x_lo));
        density
            * integrate(
                |x| {
                    integrate(|y| f(Complex64::new(x, y)), self.y_lo, self.y_hi, &[hint.im], inner_tol, 1e-13, 200).value
                },
                self.x_lo,
                self.x_hi,
                &[hint.re],
                abs_tol / density,
                1e-13,
                300,
            )
            .value
    }
}

/// `log|z - atom| - ∫ log|z - ζ| dμ(ζ)`.
pub fn cell_contribution<C: CellMass>(cell: &C, z: Complex64) -> Result<f64> {
    let a = cell.atom();
    let d = z - a;
    if d.norm() == 0.0 {
        return Err(Error::singular(z, "evaluation point is the cell's atom"));
    }
    if d.norm() >= FAR_FACTOR * cell.diameter() {
        let mut s = Complex64::new(0.0, 0.0);
        let inv = d.inv();
        let mut p = inv;
        for (i, mk) in cell.moments().iter().enumerate() {
            p *= inv;
            s += mk * p / (i + 2) as f64;
        }
        return Ok((1.0 - cell.mass()) * d.norm().ln() + s.re);
    }
    let pot = cell.integrate_against(|zeta| (z - zeta).norm().ln(), z, NEAR_TOL);
    Ok(d.norm().ln() - pot)
}

/// Gradient `(∂x, ∂y)` of [`cell_contribution`] packed as `∂x + i ∂y`.
pub fn cell_gradient<C: CellMass>(cell: &C, z: Complex64) -> Result<Complex64> {
    let a = cell.atom();
    let d = z - a;
    if d.norm() == 0.0 {
        return Err(Error::singular(z, "evaluation point is the cell's atom"));
    }
    let kernel = |w: Complex64| w / w.norm_sqr();
    if d.norm() >= FAR_FACTOR * cell.diameter() {
        // e = Re g with g' = (1-m)/d - Σ M_k / d^{k+1}; gradient is conj(g')
        let inv = d.inv();
        let mut g = (1.0 - cell.mass()) * inv;
        let mut p = inv * inv;
        for mk in cell.moments() {
            p *= inv;
            g -= mk * p;
        }
        return Ok(g.conj());
    }
    let gx = cell.integrate_against(|zeta| kernel(z - zeta).re, z, NEAR_TOL);
    let gy = cell.integrate_against(|zeta| kernel(z - zeta).im, z, NEAR_TOL);
    Ok(kernel(d) - Complex64::new(gx, gy))
}

/// Sample lattice. Polar samples sit at cell centers
/// `r_i = r_lo + (i + 1/2) dr`, `θ_j = (j + 1/2) dθ`; rows are radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Polar { r_lo: f64, r_hi: f64, n_r: usize, n_theta: usize },
    Cartesian { x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64, nx: usize, ny: usize },
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Grid::Polar { r_lo, r_hi, n_r, n_theta } => r_lo >= 0.0 && r_lo < r_hi && n_r > 0 && n_theta > 0,
            Grid::Cartesian { x_lo, x_hi, y_lo, y_hi, nx, ny } => x_lo < x_hi && y_lo < y_hi && nx > 0 && ny > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate grid {self:?}")))
        }
    }

    pub fn rows(&self) -> usize {
        match *self {
            Grid::Polar { n_r, .. } => n_r,
            Grid::Cartesian { ny, .. } => ny,
        }
    }

    pub fn cols(&self) -> usize {
        match *self {
            Grid::Polar { n_theta, .. } => n_theta,
            Grid::Cartesian { nx, .. } => nx,
        }
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spacing `(row step, column step)`; the polar column step is in radians.
    pub fn spacing(&self) -> (f64, f64) {
        match *self {
            Grid::Polar { r_lo, r_hi, n_r, n_theta } => ((r_hi - r_lo) / n_r as f64, TAU / n_theta as f64),
            Grid::Cartesian { x_lo, x_hi, y_lo, y_hi, nx, ny } => ((y_hi - y_lo) / ny as f64, (x_hi - x_lo) / nx as f64),
        }
    }

    pub fn point(&self, row: usize, col: usize) -> Complex64 {
        let (dr, dc) = self.spacing();
        match *self {
            Grid::Polar { r_lo, .. } => Complex64::from_polar(r_lo + (row as f64 + 0.5) * dr, (col as f64 + 0.5) * dc),
            Grid::Cartesian { x_lo, y_lo, .. } => Complex64::new(x_lo + (col as f64 + 0.5) * dc, y_lo + (row as f64 + 0.5) * dr),
        }
    }

    /// Row-major sample points.
    pub fn points(&self) -> Vec<Complex64> {
        (0..self.rows()).flat_map(|i| (0..self.cols()).map(move |j| (i, j))).map(|(i, j)| self.point(i, j)).collect()
    }

    /// Largest `|z|` over the sampled region.
    pub fn max_modulus(&self) -> f64 {
        match *self {
            Grid::Polar { r_hi, .. } => r_hi,
            Grid::Cartesian { x_lo, x_hi, y_lo, y_hi, .. } => x_lo.abs().max(x_hi.abs()).hypot(y_lo.abs().max(y_hi.abs())),
        }
    }

    fn code_and_params(&self) -> (u32, [f64; 4]) {
        match *self {
            Grid::Polar { r_lo, r_hi, .. } => (0, [r_lo, r_hi, 0.0, 0.0]),
            Grid::Cartesian { x_lo, x_hi, y_lo, y_hi, .. } => (1, [x_lo, x_hi, y_lo, y_hi]),
        }
    }
}

/// Options for [`error_field`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOptions {
    /// A sample is atom-adjacent when it lies within this fraction of a cell
    /// diameter from that cell's atom.
    pub adjacency_fraction: f64,
    /// Riesz mass not represented by atoms, recorded with the field.
    pub tail_mass: f64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions { adjacency_fraction: 0.25, tail_mass: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorField {
    pub grid: Grid,
    /// Row-major `e(z)`; `-∞` exactly at atoms.
    pub values: Vec<f64>,
    pub atom_adjacent: Vec<bool>,
    pub truncation_note: String,
}

const MAGIC: &[u8; 8] = b"ERRFIELD";
const VERSION: u32 = 1;

impl ErrorField {
    pub fn points(&self) -> Vec<Complex64> {
        self.grid.points()
    }

    /// CSV with columns `re,im,e,atom_adjacent`.
    pub fn to_csv(&self) -> String {
        use crate::io::fmt_f64 as f;
        let mut out = String::from("re,im,e,atom_adjacent\n");
        for ((z, e), adj) in self.points().iter().zip(&self.values).zip(&self.atom_adjacent) {
            let e = if e.is_finite() { f(*e) } else { "-inf".to_string() };
            out.push_str(&format!("{},{},{},{}\n", f(z.re), f(z.im), e, u8::from(*adj)));
        }
        out
    }

    /// Binary grid: magic, version, grid kind, four grid parameters, row and
    /// column counts, then little-endian `f64` values row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (code, params) = self.grid.code_and_params();
        let mut out = Vec::with_capacity(48 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&code.to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&(self.grid.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.grid.cols() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }
}

/// Decoded binary field: grid and values (adjacency is not stored).
pub fn read_field_bytes(bytes: &[u8]) -> Result<(Grid, Vec<f64>)> {
    let bad = |why: &str| Error::invalid(format!("field file: {why}"));
    if bytes.len() < 64 || &bytes[..8] != MAGIC {
        return Err(bad("missing header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(8) != VERSION {
        return Err(bad("unsupported version"));
    }
    let code = u32_at(12);
    let p: Vec<f64> = (0..4).map(|i| f64_at(16 + 8 * i)).collect();
    let rows = u64_at(48) as usize;
    let cols = u64_at(56) as usize;
    let grid = match code {
        0 => Grid::Polar { r_lo: p[0], r_hi: p[1], n_r: rows, n_theta: cols },
        1 => Grid::Cartesian { x_lo: p[0], x_hi: p[1], y_lo: p[2], y_hi: p[3], nx: cols, ny: rows },
        _ => return Err(bad("unknown grid kind")),
    };
    let n = rows.checked_mul(cols).ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != 64 + 8 * n {
        return Err(bad("payload length does not match grid"));
    }
    let values = (0..n).map(|i| f64_at(64 + 8 * i)).collect();
    Ok((grid, values))
}

fn adjacency<C: CellMass>(cells: &[C], z: Complex64, fraction: f64) -> bool {
    cells.iter().any(|c| (z - c.atom()).norm() <= fraction * c.diameter())
}

/// `e(z)` summed cell by cell in the given order.
pub fn sum_cells<C: CellMass>(cells: &[C], z: Complex64) -> f64 {
    let mut s = CompensatedSum::default();
    for c in cells {
        match cell_contribution(c, z) {
            Ok(v) => s.add(v),
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    s.total()
}

/// Error field of arbitrary cells, one per-cell evaluation per sample.
pub fn error_field_cells<C: CellMass>(cells: &[C], grid: &Grid, opts: &FieldOptions) -> Result<ErrorField> {
    grid.validate()?;
    let pts = grid.points();
    let (values, atom_adjacent): (Vec<f64>, Vec<bool>) = pts
        .par_iter()
        .map(|&z| (sum_cells(cells, z), adjacency(cells, z, opts.adjacency_fraction)))
        .unzip();
    Ok(ErrorField { grid: *grid, values, atom_adjacent, truncation_note: tail_note(opts.tail_mass) })
}

fn tail_note(tail: f64) -> String {
    format!("unatomized Riesz mass {} left out of e(z)", crate::io::fmt_f64(tail))
}

/// Full rings (centered, unclipped) evaluated in closed form.
struct Ring {
    t_a: f64,
    t_b: f64,
    m_a: f64,
    /// `m(t_b) log t_b - φ(t_b)`
    upper: f64,
    atoms: Vec<Complex64>,
}

/// Evaluator for `e` and `log|f|` of an atomization.
///
/// A full ring `t_a <= |ζ - c| <= t_b` has radial potential
/// `log r (m(r*) - m(t_a)) + [m(t) log t - φ(t)]` from `max(r, t_a)` to `t_b`,
/// with `r = |z - c|`, `r* = clamp(r, t_a, t_b)` and `m(t) = t φ'(t)`, so
/// unclipped profiles never need per-cell quadrature. Clipped rings fall back
/// to [`cell_contribution`].
pub struct FieldEvaluator<'a> {
    atomization: &'a Atomization,
    rings: Vec<Ring>,
    /// Per-ring cell ranges for clipped atomizations.
    clipped: Vec<(Ring, std::ops::Range<usize>)>,
}

impl<'a> FieldEvaluator<'a> {
    pub fn new(atomization: &'a Atomization) -> Result<Self> {
        let p = &atomization.profile;
        let mut rings = Vec::new();
        let mut clipped = Vec::new();
        let is_clipped = atomization.cells.iter().any(|c| c.density.clip.is_some());
        let mut start = 0;
        for info in &atomization.rings {
            let m_b = p.radial_mass(info.t_hi)?;
            let phi_b = p.radial_jet(info.t_hi)?.v;
            let ring = Ring {
                t_a: info.t_lo,
                t_b: info.t_hi,
                m_a: p.radial_mass(info.t_lo)?,
                upper: m_b * info.t_hi.ln() - phi_b,
                atoms: atomization.cells[start..start + info.sectors].iter().map(|c| c.atom).collect(),
            };
            if is_clipped {
                clipped.push((ring, start..start + info.sectors));
            } else {
                rings.push(ring);
            }
            start += info.sectors;
        }
        Ok(FieldEvaluator { atomization, rings, clipped })
    }

    fn profile(&self) -> &GrowthProfile {
        &self.atomization.profile
    }

    fn ring_potential(&self, ring: &Ring, r: f64) -> f64 {
        let p = self.profile();
        let lo = r.max(ring.t_a);
        if lo >= ring.t_b {
            return r.ln() * (ring.upper_mass(p) - ring.m_a);
        }
        let m_lo = p.radial_mass(lo).unwrap_or(f64::NAN);
        let first = if r > 0.0 { r.ln() * (m_lo - ring.m_a) } else { 0.0 };
        let at_lo = if lo > 0.0 { m_lo * lo.ln() - p.radial_jet(lo).map_or(f64::NAN, |j| j.v) } else { -p.radial_jet(0.0).map_or(0.0, |j| j.v) };
        first + ring.upper - at_lo
    }

    /// `e(z)`; `-∞` at an atom.
    pub fn error(&self, z: Complex64) -> f64 {
        if !self.clipped.is_empty() {
            return self.clipped_error(z);
        }
        if self.rings.is_empty() {
            return sum_cells(&self.atomization.cells, z);
        }
        let r = (z - self.profile().center()).norm();
        let mut s = CompensatedSum::default();
        for ring in &self.rings {
            for a in &ring.atoms {
                let d = (z - a).norm();
                if d == 0.0 {
                    return f64::NEG_INFINITY;
                }
                s.add(d.ln());
            }
            s.add(-self.ring_potential(ring, r));
        }
        s.total()
    }

    /// Rings with a nearby cell are integrated whole: the closed-form full
    /// ring minus the part cut off by the clip circle, which stays at least
    /// `r_max - |z|` away from `z`.
    fn clipped_error(&self, z: Complex64) -> f64 {
        let cells = &self.atomization.cells;
        let c = self.profile().center();
        let w = z - c;
        let r = w.norm();
        let mut th_z = w.arg();
        if th_z < 0.0 {
            th_z += TAU;
        }
        let mut s = CompensatedSum::default();
        for (ring, range) in &self.clipped {
            let ring_cells = &cells[range.clone()];
            if ring_cells.iter().all(|cell| (z - cell.atom).norm() >= FAR_FACTOR * cell.diameter) {
                for cell in ring_cells {
                    match cell_contribution(cell, z) {
                        Ok(v) => s.add(v),
                        Err(_) => return f64::NEG_INFINITY,
                    }
                }
                continue;
            }
            for a in &ring.atoms {
                let d = (z - a).norm();
                if d == 0.0 {
                    return f64::NEG_INFINITY;
                }
                s.add(d.ln());
            }
            let density = &ring_cells[0].density;
            let rc = density.clip.unwrap_or(f64::INFINITY);
            let mut knots: Vec<f64> = [1.0 - rc, 1.0 + rc, r].into_iter().filter(|t| *t > ring.t_a && *t < ring.t_b).collect();
            knots.extend([ring.t_a, ring.t_b]);
            knots.sort_by(f64::total_cmp);
            let width = ring.t_b - ring.t_a;
            let mid = if th_z > PI { th_z - TAU } else { th_z };
            let inner = |t: f64| {
                let g = density.weight(t);
                let (lo, hi) = match density.arc(t) {
                    None => (0.0, TAU),
                    Some((a, b)) if b - a >= TAU => return 0.0,
                    Some((a, b)) => (b - TAU, a),
                };
                let inner_tol = 0.1 * NEAR_TOL / (g * width);
                g * integrate(|th| (z - c - Complex64::from_polar(t, th)).norm().ln(), lo, hi, &[mid], inner_tol, 1e-11, 200).value
            };
            // The cut arc opens like a square root at the knots; a smoothstep
            // substitution on each piece absorbs that.
            let mut cut = CompensatedSum::default();
            for k in knots.windows(2) {
                let (p, q) = (k[0], k[1]);
                let piece = integrate(
                    |u| 6.0 * u * (1.0 - u) * (q - p) * inner(p + (q - p) * u * u * (3.0 - 2.0 * u)),
                    0.0,
                    1.0,
                    &[],
                    NEAR_TOL / (knots.len() - 1) as f64,
                    1e-13,
                    300,
                );
                cut.add(piece.value);
            }
            let cut = cut.total();
            s.add(-(self.ring_potential(ring, r) - cut));
        }
        s.total()
    }

    /// Analytic gradient of `e` packed as `∂x + i ∂y`.
    pub fn gradient(&self, z: Complex64) -> Result<Complex64> {
        if self.rings.is_empty() {
            let mut g = Complex64::new(0.0, 0.0);
            for c in &self.atomization.cells {
                g += cell_gradient(c, z)?;
            }
            return Ok(g);
        }
        let p = self.profile();
        let w = z - p.center();
        let r = w.norm();
        let mut g = Complex64::new(0.0, 0.0);
        for ring in &self.rings {
            for a in &ring.atoms {
                let d = z - a;
                if d.norm() == 0.0 {
                    return Err(Error::singular(z, "gradient at an atom"));
                }
                g += d / d.norm_sqr();
            }
            let enclosed = p.radial_mass(r.clamp(ring.t_a, ring.t_b))? - ring.m_a;
            if r > 0.0 {
                g -= enclosed * w / (r * r);
            }
        }
        Ok(g)
    }

    /// `u(z) + e(z)`, the log-modulus of the constructed function.
    pub fn log_modulus(&self, z: Complex64) -> Result<f64> {
        let e = self.error(z);
        if e == f64::NEG_INFINITY {
            return Ok(e);
        }
        Ok(self.profile().value(z)? + e)
    }

    pub fn is_adjacent(&self, z: Complex64, fraction: f64) -> bool {
        adjacency(&self.atomization.cells, z, fraction)
    }
}

impl Ring {
    fn upper_mass(&self, p: &GrowthProfile) -> f64 {
        p.radial_mass(self.t_b).unwrap_or(f64::NAN)
    }
}

/// Largest `|z|` at which the field may be sampled: one outer ring inside
/// the atomized radius in the plane, `r_max - (1 - r_max)` in the disk.
pub fn safe_radius(atomization: &Atomization) -> f64 {
    match atomization.profile.domain() {
        Domain::Plane => atomization.r_max - atomization.outer_ring_width(),
        Domain::UnitDisk => atomization.r_max - (1.0 - atomization.r_max),
    }
}

/// Error field of an atomization on `grid`.
pub fn error_field(atomization: &Atomization, grid: &Grid, opts: &FieldOptions) -> Result<ErrorField> {
    grid.validate()?;
    let safe = safe_radius(atomization);
    if grid.max_modulus() > safe * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "grid reaches |z| = {} beyond the safe evaluation radius {safe}",
            grid.max_modulus()
        )));
    }
    let eval = FieldEvaluator::new(atomization)?;
    let pts = grid.points();
    let (values, atom_adjacent): (Vec<f64>, Vec<bool>) = pts
        .par_iter()
        .map(|&z| (eval.error(z), eval.is_adjacent(z, opts.adjacency_fraction)))
        .unzip();
    Ok(ErrorField { grid: *grid, values, atom_adjacent, truncation_note: tail_note(opts.tail_mass) })
}

/// `value(profile, z) + Σ cell_contribution(cell, z)`; `-∞` at an atom.
pub fn log_modulus_f<C: CellMass>(cells: &[C], profile: &GrowthProfile, z: Complex64) -> Result<f64> {
    let e = sum_cells(cells, z);
    if e == f64::NEG_INFINITY {
        return Ok(e);
    }
    Ok(profile.value(z)? + e)
}

/// `Σ_n mass_n · log|E_p(z / a_n)|` with the genus-`p` primary factor
/// `E_p(w) = (1 - w) exp(w + ... + w^p / p)`; `-∞` at an atom.
pub fn direct_product_log(measure: &DiscreteMeasure, genus: u32, z: Complex64) -> Result<f64> {
    let mut s = CompensatedSum::default();
    for atom in measure.atoms() {
        let a = atom.location;
        if a.norm() == 0.0 {
            return Err(Error::singular(a, "atom at the origin needs an explicit z^m factor"));
        }
        if z == a {
            return Ok(f64::NEG_INFINITY);
        }
        let w = z / a;
        let term = if w.norm() < 0.5 {
            // log E_p(w) = -Σ_{k>p} w^k / k
            let mut acc = Complex64::new(0.0, 0.0);
            let mut pw = w.powu(genus + 1);
            let mut k = genus + 1;
            loop {
                let t = pw / k as f64;
                acc -= t;
                if t.norm() < 1e-18 * acc.norm().max(1e-300) || k > genus + 200 {
                    break;
                }
                pw *= w;
                k += 1;
            }
            acc.re
        } else {
            let mut poly = Complex64::new(0.0, 0.0);
            let mut pw = Complex64::new(1.0, 0.0);
            for k in 1..=genus {
                pw *= w;
                poly += pw / k as f64;
            }
            (Complex64::new(1.0, 0.0) - w).norm().ln() + poly.re
        };
        s.add(atom.mass * term);
    }
    Ok(s.total())
}

/// Five-point Laplacian `(f(z+h) + f(z-h) + f(z+ih) + f(z-ih) - 4 f(z)) / h²`.
pub fn five_point_laplacian<F: Fn(Complex64) -> f64>(f: F, z: Complex64, h: f64) -> f64 {
    let e = [Complex64::new(h, 0.0), Complex64::new(-h, 0.0), Complex64::new(0.0, h), Complex64::new(0.0, -h)];
    let s: f64 = e.iter().map(|&d| f(z + d)).sum();
    (s - 4.0 * f(z)) / (h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomize::atomize;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_square() -> RectCell {
        RectCell::new(-0.5, 0.5, -0.5, 0.5, 1.0).unwrap()
    }

    /// Dense tensor Gauss-Legendre on a 40x40 panel split, no adaptivity.
    fn square_oracle(z: Complex64) -> f64 {
        let gl = gauss_legendre(24);
        let panels = 40;
        let h = 1.0 / panels as f64;
        let mut s = CompensatedSum::default();
        for i in 0..panels {
            for j in 0..panels {
                let (x0, y0) = (-0.5 + i as f64 * h, -0.5 + j as f64 * h);
                for &(u, wu) in &gl {
                    for &(v, wv) in &gl {
                        let zeta = c(x0 + 0.5 * h * (u + 1.0), y0 + 0.5 * h * (v + 1.0));
                        s.add(0.25 * h * h * wu * wv * (z - zeta).norm().ln());
                    }
                }
            }
        }
        z.norm().ln() - s.total()
    }

    #[test]
    fn square_far_is_small() {
        let v = cell_contribution(&unit_square(), c(100.0, 0.0)).unwrap();
        assert!(v.abs() <= 1e-4);
        // quadrupole of a square vanishes; leading term is order 4
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn square_on_atom_is_singular() {
        assert!(matches!(cell_contribution(&unit_square(), c(0.0, 0.0)), Err(Error::Singular { .. })));
    }

    #[test]
    fn square_near_matches_dense_oracle() {
        let sq = unit_square();
        for z in [c(0.9, 0.0), c(0.3, 0.2), c(-0.45, 0.1), c(1.2, 1.3)] {
            let got = cell_contribution(&sq, z).unwrap();
            let want = square_oracle(z);
            assert!((got - want).abs() < 1e-5, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn far_decay_is_cubic_at_most() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = atomize(&GrowthProfile::plane_power(1.0).unwrap(), 40.0).unwrap();
        for _ in 0..30 {
            let cell = &a.cells[rng.gen_range(0..a.cells.len())];
            let dist = cell.diameter * rng.gen_range(3.0..12.0);
            let z = cell.atom + Complex64::from_polar(dist, rng.gen_range(0.0..TAU));
            let quad = (z - cell.atom).norm().ln() - cell.integrate_against(|w| (z - w).norm().ln(), z, 1e-12);
            let got = cell_contribution(cell, z).unwrap();
            assert!((got - quad).abs() < 1e-6, "{got} vs {quad}");
            // dist from the atom overstates dist from the cell by at most one diameter
            let bound = 2.0 * (cell.diameter / (dist - cell.diameter)).powi(3);
            assert!(quad.abs() <= bound, "{quad} > {bound}");
        }
    }

    #[test]
    fn gradient_matches_numeric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = atomize(&GrowthProfile::plane_power(1.0).unwrap(), 30.0).unwrap();
        let eval = FieldEvaluator::new(&a).unwrap();
        let h = 1e-5;
        for _ in 0..20 {
            let z = Complex64::from_polar(rng.gen_range(3.0..15.0), rng.gen_range(0.0..TAU));
            if eval.is_adjacent(z, 0.1) {
                continue;
            }
            let nx = (eval.error(z + h) - eval.error(z - h)) / (2.0 * h);
            let ny = (eval.error(z + c(0.0, h)) - eval.error(z - c(0.0, h))) / (2.0 * h);
            let g = eval.gradient(z).unwrap();
            assert!((g - c(nx, ny)).norm() < 1e-5, "z={z}: {g} vs {nx},{ny}");
            // per-cell quadrature route
            let mut gc = Complex64::new(0.0, 0.0);
            for cell in &a.cells {
                gc += cell_gradient(cell, z).unwrap();
            }
            assert!((gc - g).norm() < 1e-5, "cells {gc} vs rings {g}");
        }
    }

    #[test]
    fn ring_route_matches_cell_route() {
        let a = atomize(&GrowthProfile::plane_power(1.5).unwrap(), 25.0).unwrap();
        let eval = FieldEvaluator::new(&a).unwrap();
        for z in [c(2.0, 1.0), c(-5.0, 3.5), c(0.3, -7.0), c(10.0, 0.1)] {
            let ring = eval.error(z);
            let cells = sum_cells(&a.cells, z);
            assert!((ring - cells).abs() < 1e-6, "z={z}: {ring} vs {cells}");
        }
    }

    #[test]
    fn clipped_ring_route_matches_cell_route() {
        let a = atomize(&GrowthProfile::disk_power_singularity(1.0).unwrap(), 0.99).unwrap();
        let eval = FieldEvaluator::new(&a).unwrap();
        // inside a huge outer cell, near the singularity, and across the disk
        for z in [c(0.0, 0.9), c(0.9, 0.05), c(-0.85, 0.0), c(0.97, 0.0)] {
            let whole = eval.error(z);
            let cells = sum_cells(&a.cells, z);
            assert!((whole - cells).abs() < 1e-7, "z={z}: {whole} vs {cells}");
        }
    }

    #[test]
    fn zero_cells_give_zero_field() {
        let grid = Grid::Cartesian { x_lo: -1.0, x_hi: 1.0, y_lo: -1.0, y_hi: 1.0, nx: 4, ny: 4 };
        let f = error_field_cells::<RectCell>(&[], &grid, &FieldOptions::default()).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        let p = GrowthProfile::plane_power(1.0).unwrap();
        let z = c(0.3, 0.4);
        assert_eq!(log_modulus_f::<RectCell>(&[], &p, z).unwrap(), p.value(z).unwrap());
    }

    #[test]
    fn one_far_cell_grid() {
        let sq = unit_square();
        let d = 100.0 * sq.diameter();
        let grid = Grid::Cartesian { x_lo: d, x_hi: d + 1.0, y_lo: d, y_hi: d + 1.0, nx: 2, ny: 2 };
        let f = error_field_cells(&[sq], &grid, &FieldOptions::default()).unwrap();
        assert!(f.values.iter().all(|v| v.abs() <= 1e-6));
        assert!(f.atom_adjacent.iter().all(|&a| !a));
    }

    #[test]
    fn log_modulus_at_atom_and_harmonicity() {
        let p = GrowthProfile::plane_power(1.0).unwrap();
        let a = atomize(&p, 40.0).unwrap();
        let eval = FieldEvaluator::new(&a).unwrap();
        assert_eq!(eval.log_modulus(a.cells[5].atom).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_modulus_f(&a.cells, &p, a.cells[5].atom).unwrap(), f64::NEG_INFINITY);
        // stencil error shrinks like h² away from atoms
        // the candidate farthest from atoms in diameter units
        let clearance = |w: Complex64| a.cells.iter().map(|c| (w - c.atom).norm() / c.diameter).fold(f64::INFINITY, f64::min);
        let z = (0..400)
            .map(|i| Complex64::from_polar(5.0 + (i / 20) as f64 * 0.5, (i % 20) as f64 * TAU / 20.0))
            .max_by(|x, y| clearance(*x).total_cmp(&clearance(*y)))
            .unwrap();
        assert!(!eval.is_adjacent(z, 0.25));
        let f = |w: Complex64| eval.log_modulus(w).unwrap();
        let l1 = five_point_laplacian(f, z, 0.1).abs();
        let l2 = five_point_laplacian(f, z, 0.05).abs();
        assert!(l2 < 1e-3 && (l1 / l2).log2() >= 1.8, "{l1} {l2}");
    }

    #[test]
    fn primary_factor_products() {
        let m = DiscreteMeasure::unit_atoms([c(2.0, 0.0)]);
        assert_eq!(direct_product_log(&m, 0, c(0.0, 0.0)).unwrap(), 0.0);
        let v = direct_product_log(&m, 1, c(1.0, 0.0)).unwrap();
        assert!((v - (0.5 - 2f64.ln())).abs() < 1e-14);
        let one = DiscreteMeasure::unit_atoms([c(1.0, 0.0)]);
        assert_eq!(direct_product_log(&one, 0, c(1.0, 0.0)).unwrap(), f64::NEG_INFINITY);
        let origin = DiscreteMeasure::unit_atoms([c(0.0, 0.0)]);
        assert!(direct_product_log(&origin, 0, c(1.0, 0.0)).is_err());
        // series branch agrees with direct formula
        let w = c(0.3, 0.2);
        let direct = (c(1.0, 0.0) - w).norm().ln() + (w + w * w / 2.0).re;
        let series = direct_product_log(&DiscreteMeasure::unit_atoms([c(1.0, 0.0)]), 2, w).unwrap();
        assert!((direct - series).abs() < 1e-15);
    }

    #[test]
    fn product_and_field_share_gradients() {
        // they differ by a harmonic function smooth near the origin, so
        // compare Laplacians rather than values
        let p = GrowthProfile::plane_power(1.0).unwrap();
        let a = atomize(&p, 30.0).unwrap();
        let eval = FieldEvaluator::new(&a).unwrap();
        let z = c(3.1, 2.2);
        let lp = five_point_laplacian(|w| direct_product_log(&a.measure, 1, w).unwrap(), z, 0.05);
        let lf = five_point_laplacian(|w| eval.log_modulus(w).unwrap(), z, 0.05);
        assert!((lp - lf).abs() < 1e-2, "{lp} vs {lf}");
    }

    #[test]
    fn binary_round_trip_and_safe_region() {
        let p = GrowthProfile::plane_power(1.0).unwrap();
        let a = atomize(&p, 64.0).unwrap();
        let grid = Grid::Polar { r_lo: 8.0, r_hi: 32.0, n_r: 8, n_theta: 16 };
        let f = error_field(&a, &grid, &FieldOptions::default()).unwrap();
        let (g, v) = read_field_bytes(&f.to_bytes()).unwrap();
        assert_eq!(g, grid);
        assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), f.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        let too_big = Grid::Polar { r_lo: 8.0, r_hi: 63.0, n_r: 4, n_theta: 4 };
        assert!(error_field(&a, &too_big, &FieldOptions::default()).is_err());
        assert!(read_field_bytes(&f.to_bytes()[..70]).is_err());
        assert_eq!(f.to_csv().lines().count(), 1 + 8 * 16);
    }
}
