//! Partition of a profile's Riesz measure into unit-mass polar cells with one
//! atom (a zero of the approximating function) at each cell's barycenter.
//!
//! Cells live in polar coordinates `(t, θ)` about the profile center. For
//! `DiskPowerSingularity` the center is the boundary point 1 and every ring
//! is clipped to the atomized disk `|z| <= r_max`; a clipped ring spans only
//! the arc `θ ∈ [π - w(t), π + w(t)]`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::profiles::{Domain, GrowthProfile, ProfileKind};
use crate::quadrature::{integrate, invert_monotone};

const MASS_EPS: f64 = 1e-9;

/// The measure restricted to the atomized region, in polar form about the
/// profile center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDensity {
    pub profile: GrowthProfile,
    /// Clip radius about the origin, for measures centered off the origin.
    pub clip: Option<f64>,
}

impl CellDensity {
    pub fn center(&self) -> Complex64 {
        self.profile.center()
    }

    /// Mass per unit `dt dθ`: `t · density(t)`.
    pub fn weight(&self, t: f64) -> f64 {
        match self.profile {
            GrowthProfile::PlanePower { rho } => rho * rho * t.powf(rho - 1.0) / TAU,
            GrowthProfile::DiskPowerSingularity { rho } => rho * rho * t.powf(-rho - 1.0) / TAU,
            p => match p.radial_jet(t) {
                Ok(j) => (t * j.d2 + j.d1) / TAU,
                Err(_) => f64::NAN,
            },
        }
    }

    /// Allowed angles at radius `t`, or `None` when the circle misses the
    /// region.
    pub fn arc(&self, t: f64) -> Option<(f64, f64)> {
        match self.clip {
            None => Some((0.0, TAU)),
            Some(rc) => {
                if t <= 0.0 {
                    return None;
                }
                let c = (rc * rc - 1.0 - t * t) / (2.0 * t);
                if c <= -1.0 {
                    None
                } else if c >= 1.0 {
                    Some((0.0, TAU))
                } else {
                    let w = PI - c.acos();
                    Some((PI - w, PI + w))
                }
            }
        }
    }

    fn angular_extent(&self, t: f64) -> f64 {
        self.arc(t).map_or(0.0, |(a, b)| b - a)
    }

    /// Mass between ring coordinates `a < b`.
    fn ring_mass(&self, a: f64, b: f64) -> f64 {
        match self.clip {
            None => {
                let m = |t: f64| self.profile.radial_mass(t).unwrap_or(f64::NAN);
                m(b) - m(a)
            }
            Some(_) => integrate(|t| self.weight(t) * self.angular_extent(t), a, b, &[], 1e-14, 1e-13, 400).value,
        }
    }
}

/// One unit-mass cell `{t_lo <= t <= t_hi, θ_lo <= θ <= θ_hi} ∩ region`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassCell {
    pub ring: usize,
    pub sector: usize,
    pub r_lo: f64,
    pub r_hi: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub mass: f64,
    pub atom: Complex64,
    /// The outermost leftover cell whose mass is below one.
    pub partial: bool,
    pub density: CellDensity,
    pub diameter: f64,
    /// `∫ (ζ - atom)^k dμ(ζ)` for `k = 2..=MULTIPOLE_ORDER`.
    pub moments: Vec<Complex64>,
}

pub(crate) const MULTIPOLE_ORDER: usize = 8;

impl MassCell {
    /// Angular limits of the cell at radius `t`, empty when `lo >= hi`.
    pub fn angles_at(&self, t: f64) -> (f64, f64) {
        match self.density.arc(t) {
            None => (0.0, 0.0),
            Some((a, b)) => (self.theta_lo.max(a), self.theta_hi.min(b)),
        }
    }

    /// Integrates `weight(t) · ∫ f(t, θ) dθ` over the cell, with the angular
    /// integral supplied in closed form by `inner(t, θ_lo, θ_hi)`.
    pub fn radial_integral<F: Fn(f64, f64, f64) -> f64>(&self, inner: F, abs_tol: f64) -> f64 {
        integrate(
            |t| {
                let (a, b) = self.angles_at(t);
                if b <= a {
                    0.0
                } else {
                    self.density.weight(t) * inner(t, a, b)
                }
            },
            self.r_lo,
            self.r_hi,
            &self.clip_breaks(),
            abs_tol,
            1e-13,
            400,
        )
        .value
    }

    /// Radii where the clip circle crosses the sector edges; the angular
    /// limits have a kink there.
    pub(crate) fn clip_breaks(&self) -> Vec<f64> {
        let Some(rc) = self.density.clip else { return Vec::new() };
        let mut out = Vec::new();
        for th in [self.theta_lo, self.theta_hi] {
            // |1 + t e^{iθ}| = rc
            let ct = th.cos();
            let disc = ct * ct - 1.0 + rc * rc;
            if disc < 0.0 {
                continue;
            }
            for t in [-ct - disc.sqrt(), -ct + disc.sqrt()] {
                if t > self.r_lo && t < self.r_hi {
                    out.push(t);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Closed-membership test in polar coordinates about the center.
    pub fn contains(&self, z: Complex64) -> bool {
        let w = z - self.density.center();
        let t = w.norm();
        let tol = 1e-12 * (1.0 + self.r_hi);
        if t < self.r_lo - tol || t > self.r_hi + tol {
            return false;
        }
        if t <= tol && self.r_lo <= tol {
            return true;
        }
        let mut th = w.arg();
        if th < 0.0 {
            th += TAU;
        }
        let (a, b) = self.angles_at(t.clamp(self.r_lo, self.r_hi));
        let ang_tol = 1e-12;
        (th >= a - ang_tol && th <= b + ang_tol) || (b >= TAU - ang_tol && th <= ang_tol && a <= ang_tol)
    }

    fn sample_points(&self, n: usize) -> Vec<Complex64> {
        let c = self.density.center();
        let mut pts = Vec::new();
        for i in 0..=n {
            let t = self.r_lo + (self.r_hi - self.r_lo) * i as f64 / n as f64;
            let (a, b) = self.angles_at(t);
            if b <= a {
                continue;
            }
            for j in 0..=n {
                let th = a + (b - a) * j as f64 / n as f64;
                pts.push(c + Complex64::from_polar(t, th));
            }
        }
        pts
    }
}

/// Summary of one ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingInfo {
    pub index: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub sectors: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atomization {
    pub profile: GrowthProfile,
    pub r_max: f64,
    pub cells: Vec<MassCell>,
    pub rings: Vec<RingInfo>,
    pub measure: DiscreteMeasure,
}

impl Atomization {
    /// Total Riesz mass of the atomized region.
    pub fn total_mass(&self) -> f64 {
        self.rings.iter().map(|r| r.mass).sum()
    }

    /// Radial width of the outermost ring.
    pub fn outer_ring_width(&self) -> f64 {
        self.rings.last().map_or(0.0, |r| r.t_hi - r.t_lo)
    }

    /// Sectors of the ring containing ring coordinate `t`.
    pub fn sectors_at(&self, t: f64) -> usize {
        self.rings
            .iter()
            .find(|r| r.t_lo <= t && t <= r.t_hi)
            .or(self.rings.last())
            .map_or(0, |r| r.sectors)
    }

    /// Cells CSV: `ring,sector,r_lo,r_hi,theta_lo,theta_hi,mass,atom_re,atom_im`.
    pub fn cells_csv(&self) -> String {
        use crate::io::fmt_f64 as f;
        let mut out = String::from("ring,sector,r_lo,r_hi,theta_lo,theta_hi,mass,atom_re,atom_im\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.ring,
                c.sector,
                f(c.r_lo),
                f(c.r_hi),
                f(c.theta_lo),
                f(c.theta_hi),
                f(c.mass),
                f(c.atom.re),
                f(c.atom.im)
            ));
        }
        out
    }
}

/// Partitions the Riesz measure of `profile` on `|z| <= r_max` into unit
/// cells and places one atom per cell.
///
/// Rings are cut so each carries an integer mass `m_i`, split into `m_i`
/// unit-mass sectors; `m_i` is picked to make cells near-square (radial width
/// close to arc length per sector), raised if needed until every barycenter
/// lies in its cell. The leftover below two rings' worth of mass becomes the
/// outermost ring, whose last sector may carry a partial mass.
pub fn atomize(profile: &GrowthProfile, r_max: f64) -> Result<Atomization> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::invalid(format!("r_max must be positive, got {r_max}")));
    }
    if profile.domain() == Domain::UnitDisk && r_max >= 1.0 {
        return Err(Error::domain(r_max, "disk profiles atomize inside |z| < 1"));
    }
    let (density, t_start, t_end) = match profile.kind() {
        ProfileKind::DiskPowerSingularity => (CellDensity { profile: *profile, clip: Some(r_max) }, 1.0 - r_max, 1.0 + r_max),
        _ => (CellDensity { profile: *profile, clip: None }, 0.0, r_max),
    };
    let total = density.ring_mass(t_start, t_end);
    if !total.is_finite() {
        return Err(Error::Numerical(format!("Riesz mass up to r_max={r_max} is not finite")));
    }
    if total <= 0.0 {
        return Err(Error::invalid("profile has zero Riesz density on the requested range"));
    }
    if total < 1.0 {
        return Err(Error::invalid(format!("counting(r_max) = {total} < 1: nothing to atomize")));
    }

    let mut cells = Vec::new();
    let mut rings = Vec::new();
    let mut t_lo = t_start;
    let mut done = 0.0;
    while total - done > MASS_EPS {
        let remaining = total - done;
        let index = rings.len();
        let square = best_sector_count(&density, t_lo, done, t_start, t_end, remaining);
        let mut m = square;
        let built = loop {
            let last = (m as f64) > remaining - MASS_EPS;
            let t_m = if last { t_end } else { invert_monotone(|t| density.ring_mass(t_lo, t), m as f64, t_lo, t_end) };
            // A small remainder joins this ring unless that would stretch it
            // far past square (the disk tail spreads thin mass over a wide range).
            let final_ring = last || (remaining < 2.0 * m as f64 && t_end - t_lo <= 2.0 * (t_m - t_lo));
            let (ring_mass, t_hi) = if final_ring { (remaining, t_end) } else { (m as f64, t_m) };
            let ring_cells = build_ring(&density, index, t_lo, t_hi, ring_mass)?;
            if ring_cells.iter().all(|c| c.contains(c.atom)) || final_ring {
                break (ring_cells, t_hi, ring_mass, final_ring);
            }
            m += 1;
            if m > 64 * square.max(8) {
                return Err(Error::Numerical(format!("ring {index}: no sector count keeps barycenters inside cells")));
            }
        };
        let (ring_cells, t_hi, ring_mass, final_ring) = built;
        if let Some(c) = ring_cells.iter().find(|c| !c.contains(c.atom)) {
            return Err(Error::Numerical(format!(
                "outermost ring {index}: barycenter of sector {} falls outside its cell",
                c.sector
            )));
        }
        rings.push(RingInfo { index, t_lo, t_hi, sectors: ring_cells.len(), mass: ring_mass });
        cells.extend(ring_cells);
        done += ring_mass;
        t_lo = t_hi;
        if final_ring {
            break;
        }
    }
    let measure = DiscreteMeasure::unit_atoms(cells.iter().map(|c| c.atom));
    Ok(Atomization { profile: *profile, r_max, cells, rings, measure })
}

/// Sector count whose ring is closest to square cells.
fn best_sector_count(density: &CellDensity, t_lo: f64, done: f64, _t_start: f64, t_end: f64, remaining: f64) -> usize {
    let _ = done;
    let mut best = (1usize, f64::INFINITY);
    let mut m = 1usize;
    loop {
        if m as f64 > remaining - MASS_EPS {
            break;
        }
        let t_hi = invert_monotone(|t| density.ring_mass(t_lo, t), m as f64, t_lo, t_end);
        let mid = 0.5 * (t_lo + t_hi);
        let arc = mid * density.angular_extent(mid) / m as f64;
        let ratio = (t_hi - t_lo) / arc;
        let score = ratio.ln().abs();
        if score < best.1 {
            best = (m, score);
        }
        if ratio >= 1.0 {
            break;
        }
        m += 1;
    }
    best.0
}

/// Splits the ring `[t_lo, t_hi]` of mass `ring_mass` into sectors of unit
/// mass (the last may be partial) and places barycentric atoms.
fn build_ring(density: &CellDensity, ring: usize, t_lo: f64, t_hi: f64, ring_mass: f64) -> Result<Vec<MassCell>> {
    let whole = (ring_mass - MASS_EPS).floor().max(0.0) as usize;
    let k = if ring_mass - whole as f64 > MASS_EPS { whole + 1 } else { whole }.max(1);
    let masses: Vec<f64> = (0..k)
        .map(|j| if j + 1 < k { 1.0 } else { ring_mass - (k - 1) as f64 })
        .collect();

    let probe = MassCell {
        ring,
        sector: 0,
        r_lo: t_lo,
        r_hi: t_hi,
        theta_lo: 0.0,
        theta_hi: TAU,
        mass: ring_mass,
        atom: density.center(),
        partial: false,
        density: *density,
        diameter: 0.0,
        moments: Vec::new(),
    };
    // angular boundaries
    let mut bounds = vec![0.0];
    let mut acc = 0.0;
    for (j, mj) in masses.iter().enumerate().take(k - 1) {
        acc += mj;
        let theta = match density.clip {
            None => TAU * acc / ring_mass,
            Some(_) => {
                let below = |th: f64| {
                    probe.radial_integral(|_, a, b| (b.min(th) - a).max(0.0), 1e-14)
                };
                invert_monotone(below, acc, bounds[j], TAU)
            }
        };
        bounds.push(theta);
    }
    bounds.push(TAU);
    // clipped rings: tighten outer bounds onto the arc
    if density.clip.is_some() {
        // the arc is widest where (rc² - 1 - t²)/(2t) is smallest, at t = sqrt(1 - rc²)
        let rc = density.clip.unwrap_or(1.0);
        let t_wide = (1.0 - rc * rc).sqrt().clamp(t_lo, t_hi);
        let (lo, hi) = density.arc(t_wide).unwrap_or((TAU, 0.0));
        if lo < hi {
            bounds[0] = lo.min(bounds.get(1).copied().unwrap_or(lo));
            let last = bounds.len() - 1;
            bounds[last] = hi.max(bounds[last - 1]);
        }
    }

    let mut cells = Vec::with_capacity(k);
    for j in 0..k {
        let mut cell = MassCell {
            ring,
            sector: j,
            r_lo: t_lo,
            r_hi: t_hi,
            theta_lo: bounds[j],
            theta_hi: bounds[j + 1],
            mass: masses[j],
            atom: density.center(),
            partial: masses[j] < 1.0 - MASS_EPS,
            density: *density,
            diameter: 0.0,
            moments: Vec::new(),
        };
        let scale = 1e-15 * cell.mass.max(1.0);
        let first_re = cell.radial_integral(|t, a, b| t * (b.sin() - a.sin()), scale);
        let first_im = cell.radial_integral(|t, a, b| t * (a.cos() - b.cos()), scale);
        cell.atom = density.center() + Complex64::new(first_re, first_im) / cell.mass;
        if cell.r_lo == 0.0 && k == 1 {
            cell.atom = density.center();
        }
        let pts = cell.sample_points(12);
        let mut diam: f64 = 0.0;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                diam = diam.max((p - q).norm());
            }
        }
        cell.diameter = diam * 1.01;
        cell.moments = (2..=MULTIPOLE_ORDER).map(|order| cell_moment(&cell, order)).collect();
        cells.push(cell);
    }
    Ok(cells)
}

/// `∫ (ζ - atom)^order dμ(ζ)` via the binomial expansion in `t e^{iθ}`, whose
/// angular integrals are closed form.
fn cell_moment(cell: &MassCell, order: usize) -> Complex64 {
    let shift = cell.density.center() - cell.atom;
    let binom = |n: usize, k: usize| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
    let term = |t: f64, a: f64, b: f64, part: usize| -> f64 {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..=order {
            let ang = if j == 0 {
                Complex64::new(b - a, 0.0)
            } else {
                let jf = j as f64;
                (Complex64::from_polar(1.0, jf * b) - Complex64::from_polar(1.0, jf * a)) / Complex64::new(0.0, jf)
            };
            s += binom(order, j) * shift.powu((order - j) as u32) * t.powi(j as i32) * ang;
        }
        if part == 0 {
            s.re
        } else {
            s.im
        }
    };
    let tol = 1e-15 * cell.diameter.powi(order as i32).max(1e-300);
    Complex64::new(
        cell.radial_integral(|t, a, b| term(t, a, b, 0), tol),
        cell.radial_integral(|t, a, b| term(t, a, b, 1), tol),
    )
}

/// Riesz mass of the annulus `R_eval < |z| <= r_max`.
pub fn cell_tail_mass(profile: &GrowthProfile, r_max: f64, r_eval: f64) -> Result<f64> {
    if r_eval > r_max {
        return Err(Error::invalid(format!("R_eval={r_eval} exceeds r_max={r_max}")));
    }
    Ok(profile.counting(r_max)? - profile.counting(r_eval)?)
}

/// Mass just outside the atomized region that the construction leaves out:
/// `(r_max, 2 r_max]` in the plane, `(r_max, (1 + r_max)/2]` in the disk.
pub fn unatomized_mass(profile: &GrowthProfile, r_max: f64) -> Result<f64> {
    let outer = match profile.domain() {
        Domain::Plane => 2.0 * r_max,
        Domain::UnitDisk => 0.5 * (1.0 + r_max),
    };
    Ok(profile.counting(outer)? - profile.counting(r_max)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power(rho: f64) -> GrowthProfile {
        GrowthProfile::plane_power(rho).unwrap()
    }

    #[test]
    fn unit_cell_counts() {
        let a = atomize(&power(1.0), 10.0).unwrap();
        assert_eq!(a.cells.len(), 10);
        assert!(a.cells.iter().all(|c| (c.mass - 1.0).abs() < 1e-12 && !c.partial));
        let b = atomize(&power(2.0), 3.0).unwrap();
        assert_eq!(b.cells.len(), 18);
        assert!(atomize(&power(1.0), 0.5).is_err());
    }

    #[test]
    fn partial_outer_cell() {
        let a = atomize(&power(1.0), 10.5).unwrap();
        assert_eq!(a.cells.len(), 11);
        let partial: Vec<_> = a.cells.iter().filter(|c| c.partial).collect();
        assert_eq!(partial.len(), 1);
        assert!((partial[0].mass - 0.5).abs() < 1e-9);
        assert_eq!(partial[0].ring, a.rings.last().unwrap().index);
    }

    #[test]
    fn ring_masses_match_quadrature() {
        // oracle: integrate the density over each ring with dense Gauss-Legendre
        let p = power(1.5);
        let a = atomize(&p, 30.0).unwrap();
        let gl = crate::quadrature::gauss_legendre(64);
        for r in &a.rings {
            let mass: f64 = gl
                .iter()
                .map(|&(x, w)| {
                    // t = t_lo + L u², smooth for the t^{ρ-1} factor near 0
                    let len = r.t_hi - r.t_lo;
                    let u = 0.5 * (x + 1.0);
                    let t = r.t_lo + len * u * u;
                    0.5 * w * 2.0 * len * u * TAU * t * p.riesz_density(Complex64::new(t, 0.0)).unwrap()
                })
                .sum();
            assert!((mass - r.mass).abs() < 1e-8, "ring {}: {mass} vs {}", r.index, r.mass);
            assert!(r.mass == r.mass.round() || r.index + 1 == a.rings.len());
        }
    }

    #[test]
    fn atoms_inside_cells_and_distinct() {
        for (p, r) in [(power(1.0), 64.0), (power(2.0), 6.0), (power(0.5), 400.0)] {
            let a = atomize(&p, r).unwrap();
            for c in &a.cells {
                assert!(c.contains(c.atom), "{p:?} ring {} sector {}", c.ring, c.sector);
                assert!(c.moments.len() == MULTIPOLE_ORDER - 1);
            }
            for (i, x) in a.cells.iter().enumerate() {
                for y in &a.cells[i + 1..] {
                    assert!(x.atom != y.atom);
                }
            }
            assert!((a.total_mass() - p.counting(r).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn sectors_tile_full_turn() {
        let a = atomize(&power(1.0), 64.0).unwrap();
        for r in &a.rings {
            let ring: Vec<_> = a.cells.iter().filter(|c| c.ring == r.index).collect();
            assert_eq!(ring.first().unwrap().theta_lo, 0.0);
            assert_eq!(ring.last().unwrap().theta_hi, TAU);
            for w in ring.windows(2) {
                assert_eq!(w[0].theta_hi, w[1].theta_lo);
            }
            let full: Vec<_> = ring.iter().filter(|c| !c.partial).collect();
            let width = full[0].theta_hi - full[0].theta_lo;
            assert!(full.iter().all(|c| ((c.theta_hi - c.theta_lo) - width).abs() < 1e-12));
        }
    }

    #[test]
    fn counting_error_within_ring_bound() {
        let p = power(1.0);
        let a = atomize(&p, 64.0).unwrap();
        for i in 0..200 {
            let r = 64.0 * (i as f64 + 0.5) / 200.0;
            let atoms = a.measure.mass_in_disk(Complex64::new(0.0, 0.0), r);
            let bound = a.sectors_at(r) as f64 + 1.0;
            assert!((atoms - p.counting(r).unwrap()).abs() <= bound, "r={r}");
        }
    }

    #[test]
    fn barycenter_kills_dipole() {
        let a = atomize(&power(1.0), 20.0).unwrap();
        for c in &a.cells {
            let d_re = c.radial_integral(|t, x, y| t * (y.sin() - x.sin()), 1e-15) - c.mass * (c.atom.re - 0.0);
            let d_im = c.radial_integral(|t, x, y| t * (x.cos() - y.cos()), 1e-15) - c.mass * c.atom.im;
            assert!(d_re.abs() < 1e-9 && d_im.abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_cells() {
        let a = atomize(&power(1.3), 40.0).unwrap();
        let b = atomize(&power(1.3), 40.0).unwrap();
        assert_eq!(a.cells_csv(), b.cells_csv());
    }

    #[test]
    fn disk_singularity_atomizes_clipped() {
        let p = GrowthProfile::disk_power_singularity(1.0).unwrap();
        let a = atomize(&p, 0.95).unwrap();
        let expect = p.counting(0.95).unwrap();
        assert!((a.total_mass() - expect).abs() < 1e-6, "{} vs {expect}", a.total_mass());
        for c in &a.cells {
            assert!(c.atom.norm() <= 0.95 + 1e-12, "atom {} outside", c.atom);
            assert!(c.contains(c.atom), "ring {} sector {}", c.ring, c.sector);
        }
        let mass: f64 = a.cells.iter().map(|c| c.radial_integral(|_, x, y| y - x, 1e-14)).sum();
        assert!((mass - expect).abs() < 1e-6, "{mass} vs {expect}");
    }

    #[test]
    fn tail_masses() {
        let p1 = power(1.0);
        assert_eq!(cell_tail_mass(&p1, 10.0, 10.0).unwrap(), 0.0);
        assert!((cell_tail_mass(&p1, 20.0, 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((cell_tail_mass(&power(2.0), 8.0, 4.0).unwrap() - 96.0).abs() < 1e-12);
        assert!(cell_tail_mass(&p1, 5.0, 10.0).is_err());
        assert!((unatomized_mass(&p1, 10.0).unwrap() - 10.0).abs() < 1e-12);
    }
}
