//! Discrete measures, the `(β, s)`-normal point test and bounded-multiplicity
//! subcovers.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: Complex64,
    pub mass: f64,
}

fn angle(z: Complex64) -> f64 {
    let a = z.arg();
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Order by modulus, then by angle in `[0, 2π)`.
pub fn canonical_cmp(a: Complex64, b: Complex64) -> Ordering {
    a.norm()
        .total_cmp(&b.norm())
        .then_with(|| angle(a).total_cmp(&angle(b)))
}

/// Finite sum of positive point masses, kept in canonical order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !(a.mass > 0.0 && a.mass.is_finite()) {
                return Err(Error::invalid(format!("atom mass must be positive, got {}", a.mass)));
            }
            if !(a.location.re.is_finite() && a.location.im.is_finite()) {
                return Err(Error::invalid("atom location must be finite"));
            }
        }
        atoms.sort_by(|a, b| canonical_cmp(a.location, b.location).then(a.mass.total_cmp(&b.mass)));
        Ok(DiscreteMeasure { atoms })
    }

    /// Unit masses at the given points.
    pub fn unit_atoms(points: impl IntoIterator<Item = Complex64>) -> Self {
        Self::new(points.into_iter().map(|location| Atom { location, mass: 1.0 }).collect())
            .expect("unit masses at finite points")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Mass of the closed disk `|ζ - center| <= r`.
    pub fn mass_in_disk(&self, center: Complex64, r: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| (a.location - center).norm() <= r)
            .map(|a| a.mass)
            .sum()
    }

    /// `true` iff `μ(D(z, t)) <= β t` for every `t ∈ (0, s)`.
    ///
    /// `t ↦ μ(D(z, t))` is a left-continuous step function jumping at the
    /// atom distances, so the condition reduces to `mass(|ζ - z| <= d) <= β d`
    /// at each atom distance `d < s`.
    pub fn is_normal(&self, z: Complex64, p: &NormalityParams) -> bool {
        let mut near: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .map(|a| ((a.location - z).norm(), a.mass))
            .filter(|&(d, _)| d < p.s)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cumulative = 0.0;
        let mut i = 0;
        while i < near.len() {
            let d = near[i].0;
            while i < near.len() && near[i].0 == d {
                cumulative += near[i].1;
                i += 1;
            }
            if cumulative > p.beta * d {
                return false;
            }
        }
        true
    }

    /// CSV with columns `re,im,mass`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,mass\n");
        for a in &self.atoms {
            out.push_str(&format!(
                "{},{},{}\n",
                crate::io::fmt_f64(a.location.re),
                crate::io::fmt_f64(a.location.im),
                crate::io::fmt_f64(a.mass)
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("line {}: {e}", i + 1)))?;
            if cols.len() != 3 {
                return Err(Error::invalid(format!("line {}: expected 3 columns", i + 1)));
            }
            atoms.push(Atom { location: Complex64::new(cols[0], cols[1]), mass: cols[2] });
        }
        Self::new(atoms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityParams {
    pub beta: f64,
    pub s: f64,
}

impl NormalityParams {
    pub fn new(beta: f64, s: f64) -> Result<Self> {
        if beta > 0.0 && s > 0.0 {
            Ok(NormalityParams { beta, s })
        } else {
            Err(Error::invalid(format!("need beta > 0 and s > 0, got beta={beta}, s={s}")))
        }
    }
}

/// Closed disk `|z - center| <= radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: Complex64,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Disk { center, radius }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() <= self.radius
    }

    /// Smallest disk containing both.
    pub fn enclosing(&self, other: &Disk) -> Disk {
        let d = (other.center - self.center).norm();
        if d + other.radius <= self.radius {
            return *self;
        }
        if d + self.radius <= other.radius {
            return *other;
        }
        let radius = 0.5 * (d + self.radius + other.radius);
        let dir = (other.center - self.center) / d;
        Disk { center: self.center + dir * (radius - self.radius), radius }
    }
}

/// Selects a subfamily covering every input center with pointwise
/// multiplicity at most 6.
///
/// Disks are visited by decreasing radius (ties in canonical center order);
/// a disk is kept unless its center already lies in a kept disk. Two kept
/// disks through a common point `p` then subtend an angle above 60° at `p`,
/// which caps the multiplicity at 5 away from ties.
pub fn bounded_multiplicity_subcover(disks: &[Disk]) -> Result<Vec<Disk>> {
    if let Some(d) = disks.iter().find(|d| !(d.radius > 0.0)) {
        return Err(Error::invalid(format!("disk radius must be positive, got {}", d.radius)));
    }
    let mut order: Vec<&Disk> = disks.iter().collect();
    order.sort_by(|a, b| b.radius.total_cmp(&a.radius).then_with(|| canonical_cmp(a.center, b.center)));
    let mut kept: Vec<Disk> = Vec::new();
    for d in order {
        if !kept.iter().any(|k| k.contains(d.center)) {
            kept.push(*d);
        }
    }
    Ok(kept)
}
