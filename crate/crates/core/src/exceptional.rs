//! Budget scans, capped disk covers of the exceptional set, band radius sums
//! and the lower-bound floors they are compared against.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{canonical_cmp, Disk};
use crate::potential::ErrorField;
use crate::profiles::{AnnulusBand, Domain, GrowthProfile, ProfileKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    /// `C log|z|`
    PlaneFinite,
    /// `C (log|z| + log B(|z|, u))`
    PlaneInfinite,
    /// `C log v(|z|)`
    PlaneProfile,
    /// `C log(1 / |1 - z|)`
    DiskFinite,
    /// `C log B(|z|, u)`
    DiskInfinite,
    /// `C log v(|z|)`
    DiskProfile,
}

impl BudgetKind {
    pub fn domain(&self) -> Domain {
        match self {
            BudgetKind::PlaneFinite | BudgetKind::PlaneInfinite | BudgetKind::PlaneProfile => Domain::Plane,
            _ => Domain::UnitDisk,
        }
    }

    /// Errors unless `profile` is a valid subject for this budget.
    pub fn check_profile(&self, profile: &GrowthProfile) -> Result<()> {
        let ok = self.domain() == profile.domain()
            && match self {
                BudgetKind::PlaneFinite => profile.kind() == ProfileKind::PlanePower,
                BudgetKind::DiskFinite => profile.kind() == ProfileKind::DiskPowerSingularity,
                _ => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Config { field: "budget.kind".into(), reason: format!("{self:?} does not apply to {:?}", profile.kind()) })
        }
    }

    /// The growth scale the budget multiplies, or `None` where it is not
    /// positive (such samples are excluded).
    pub fn scale(&self, profile: &GrowthProfile, z: Complex64) -> Option<f64> {
        let r = z.norm();
        let s = match self {
            BudgetKind::PlaneFinite => r.ln(),
            BudgetKind::PlaneInfinite => r.ln() + profile.log_max_on_circle(r).ok()?,
            BudgetKind::PlaneProfile | BudgetKind::DiskInfinite | BudgetKind::DiskProfile => profile.log_max_on_circle(r).ok()?,
            BudgetKind::DiskFinite => -(Complex64::new(1.0, 0.0) - z).norm().ln(),
        };
        (s > 0.0 && s.is_finite()).then_some(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub kind: BudgetKind,
    pub c: f64,
    pub epsilon: f64,
}

impl Budget {
    pub fn new(kind: BudgetKind, c: f64, epsilon: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config { field: "budget.C".into(), reason: format!("must be positive, got {c}") });
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config { field: "budget.epsilon".into(), reason: format!("must be positive, got {epsilon}") });
        }
        Ok(Budget { kind, c, epsilon })
    }
}

/// Nearest-rank `q`-quantile of `|e| / scale` over non-adjacent samples with
/// a defined scale: the measured budget constant `Ĉ`.
/// Quantile `q` of `|e| / scale` over non-adjacent samples with a positive scale.
pub fn measured_budget_constant(field: &ErrorField, kind: BudgetKind, profile: &GrowthProfile, q: f64) -> Result<f64> {
    kind.check_profile(profile)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("quantile must be in (0, 1], got {q}")));
    }
    let pts = field.points();
    let mut ratios: Vec<f64> = pts
        .iter()
        .zip(&field.values)
        .zip(&field.atom_adjacent)
        .filter(|&(_, adj)| !adj)
        .filter_map(|((z, e), _)| kind.scale(profile, *z).filter(|s| e.is_finite() && *s > 0.0).map(|s| e.abs() / s))
        .collect();
    if ratios.is_empty() {
        return Err(Error::InsufficientData("no non-adjacent samples with a positive budget scale".into()));
    }
    ratios.sort_by(f64::total_cmp);
    let rank = ((q * ratios.len() as f64).ceil() as usize).clamp(1, ratios.len());
    Ok(ratios[rank - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flag {
    /// Row-major sample index.
    pub index: usize,
    pub z: Complex64,
    pub e: f64,
    pub atom_adjacent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub flags: Vec<Flag>,
    /// Samples skipped because the budget scale is not positive there.
    pub excluded: usize,
}

/// Samples where `|e(z)| > C · scale(z)`, in row-major order.
pub fn scan_bad_set(field: &ErrorField, budget: &Budget, profile: &GrowthProfile) -> Result<ScanResult> {
    budget.kind.check_profile(profile)?;
    let pts = field.points();
    let verdicts: Vec<Option<Option<Flag>>> = pts
        .par_iter()
        .enumerate()
        .map(|(i, &z)| {
            let scale = budget.kind.scale(profile, z)?;
            let e = field.values[i];
            Some((e.abs() > budget.c * scale).then_some(Flag { index: i, z, e, atom_adjacent: field.atom_adjacent[i] }))
        })
        .collect();
    let excluded = verdicts.iter().filter(|v| v.is_none()).count();
    let flags = verdicts.into_iter().flatten().flatten().collect();
    Ok(ScanResult { flags, excluded })
}

/// Largest radius allowed for a cover disk centered at `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapRule {
    /// `|z|^{1 - ρ/2 + ε}`
    PlaneFiniteCap { rho: f64, epsilon: f64 },
    /// `v(|z|)^{-1-ε}`
    ProfileCapPlane { epsilon: f64 },
    /// `|1 - z|^{1 + ρ/2}`
    DiskFiniteCap { rho: f64 },
    /// `v(|z|)^{-1/2+ε}`
    ProfileCapDisk { epsilon: f64 },
}

impl CapRule {
    /// Human-readable cap formula with the parameters filled in.
    pub fn describe(&self) -> String {
        match *self {
            CapRule::PlaneFiniteCap { rho, epsilon } => format!("|z|^(1 - {rho}/2 + {epsilon})"),
            CapRule::ProfileCapPlane { epsilon } => format!("v(|z|)^(-1 - {epsilon})"),
            CapRule::DiskFiniteCap { rho } => format!("|1 - z|^(1 + {rho}/2)"),
            CapRule::ProfileCapDisk { epsilon } => format!("v(|z|)^(-1/2 + {epsilon})"),
        }
    }

    pub fn cap(&self, profile: &GrowthProfile, z: Complex64) -> f64 {
        let log_v = || profile.log_max_on_circle(z.norm()).unwrap_or(f64::NAN);
        let cap = match *self {
            CapRule::PlaneFiniteCap { rho, epsilon } => z.norm().powf(1.0 - rho / 2.0 + epsilon),
            CapRule::ProfileCapPlane { epsilon } => (-(1.0 + epsilon) * log_v()).exp(),
            CapRule::DiskFiniteCap { rho } => (Complex64::new(1.0, 0.0) - z).norm().powf(1.0 + rho / 2.0),
            CapRule::ProfileCapDisk { epsilon } => ((epsilon - 0.5) * log_v()).exp(),
        };
        if cap.is_nan() {
            0.0
        } else {
            cap
        }
    }

    fn admits(&self, profile: &GrowthProfile, d: &Disk) -> bool {
        d.radius <= self.cap(profile, d.center) * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiskCover {
    pub disks: Vec<Disk>,
    pub cap_rule: CapRule,
}

impl DiskCover {
    /// `re,im,r` per disk.
    pub fn to_csv(&self) -> String {
        use crate::io::fmt_f64 as f;
        let mut out = String::from("re,im,r\n");
        for d in &self.disks {
            out.push_str(&format!("{},{},{}\n", f(d.center.re), f(d.center.im), f(d.radius)));
        }
        out
    }

    pub fn covers(&self, z: Complex64) -> bool {
        self.disks.iter().any(|d| d.contains(z))
    }
}

/// Covers the flagged samples by disks of radius `cell_size / √2` about each
/// sample, then repeatedly replaces an overlapping pair by its enclosing disk
/// when that disk respects the cap. Pairs are scanned in canonical order and
/// each disk merges with the earliest eligible partner.
pub fn cover_bad_set(flags: &[Flag], cap: CapRule, profile: &GrowthProfile, cell_size: f64) -> Result<DiskCover> {
    if !(cell_size > 0.0) {
        return Err(Error::invalid(format!("cell size must be positive, got {cell_size}")));
    }
    let radius = cell_size / SQRT_2;
    let mut pts: Vec<Complex64> = flags.iter().map(|f| f.z).collect();
    pts.sort_by(|a, b| canonical_cmp(*a, *b));
    let violations: Vec<Complex64> = pts.iter().copied().filter(|&z| !cap.admits(profile, &Disk::new(z, radius))).collect();
    if let Some(&first) = violations.first() {
        return Err(Error::CapViolation { count: violations.len(), first: format!("{first}") });
    }
    let mut disks: Vec<Option<Disk>> = pts.iter().map(|&z| Some(Disk::new(z, radius))).collect();
    let mut merged = true;
    while merged {
        merged = false;
        for i in 0..disks.len() {
            let Some(mut di) = disks[i] else { continue };
            loop {
                let partner = (0..disks.len()).find_map(|j| {
                    let dj = disks[j]?;
                    if j == i || (dj.center - di.center).norm() >= di.radius + dj.radius {
                        return None;
                    }
                    let mut e = di.enclosing(&dj);
                    e.radius *= 1.0 + 1e-14;
                    cap.admits(profile, &e).then_some((j, e))
                });
                let Some((j, e)) = partner else { break };
                disks[j] = None;
                di = e;
                merged = true;
            }
            disks[i] = Some(di);
        }
    }
    let mut out: Vec<Disk> = disks.into_iter().flatten().collect();
    out.sort_by(|a, b| canonical_cmp(a.center, b.center).then(a.radius.total_cmp(&b.radius)));
    Ok(DiskCover { disks: out, cap_rule: cap })
}

/// Per-band radius sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSum {
    pub band: AnnulusBand,
    pub sum_radii: f64,
    pub count: usize,
}

/// `Σ r_j` over cover disks whose center modulus lies in each band.
pub fn band_radius_sums(cover: &[Disk], bands: &[AnnulusBand]) -> Vec<BandSum> {
    let mut out: Vec<BandSum> = bands
        .iter()
        .map(|&band| {
            let inside: Vec<&Disk> = cover.iter().filter(|d| band.contains(d.center.norm())).collect();
            BandSum { band, sum_radii: inside.iter().map(|d| d.radius).sum(), count: inside.len() }
        })
        .collect();
    out.sort_by(|a, b| a.band.lo.total_cmp(&b.band.lo));
    out
}

/// Least-squares slope of `log sum` against `log lo`, with its standard
/// error. Needs at least three bands with positive sums.
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let xy: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0 && p.0 > 0.0).map(|&(x, y)| (x.ln(), y.ln())).collect();
    if xy.len() < 3 {
        return Err(Error::InsufficientData(format!("{} bands with positive sums; need 3", xy.len())));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all bands start at the same radius".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = if xy.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok((slope, stderr))
}

/// Lower bound for the band radius sum at `R`:
///
/// * `PlaneFinite`: `R^{1 + ρ/2 - 2C - 3ε}`
/// * `PlaneProfile`, `DiskProfile`: `v(R)^{1/2 - 2C - 2ε}`
/// * `DiskFinite`: `(1 - R)^{-ρ/2 + 2C + 3ε}`
///
/// The infinite-order budgets only come with upper bounds and have no floor.
pub fn theorem_floor(kind: BudgetKind, profile: &GrowthProfile, c: f64, epsilon: f64, r: f64) -> Result<f64> {
    kind.check_profile(profile)?;
    let rho = || profile.rho().ok_or_else(|| Error::invalid("floor needs a finite-order profile"));
    match kind {
        BudgetKind::PlaneFinite => Ok(r.powf(1.0 + rho()? / 2.0 - 2.0 * c - 3.0 * epsilon)),
        BudgetKind::PlaneProfile | BudgetKind::DiskProfile => {
            Ok(((0.5 - 2.0 * c - 2.0 * epsilon) * profile.log_max_on_circle(r)?).exp())
        }
        BudgetKind::DiskFinite => {
            if !(r < 1.0) {
                return Err(Error::domain(r, "disk floor needs R < 1"));
            }
            Ok((1.0 - r).powf(-rho()? / 2.0 + 2.0 * c + 3.0 * epsilon))
        }
        BudgetKind::PlaneInfinite | BudgetKind::DiskInfinite => {
            Err(Error::invalid(format!("{kind:?} has no lower-bound floor")))
        }
    }
}

/// `v(R)^{1/2 - 2C - kε}`, for comparing alternative ε multipliers.
pub fn profile_floor_with(profile: &GrowthProfile, c: f64, epsilon_multiplier: f64, epsilon: f64, r: f64) -> Result<f64> {
    Ok(((0.5 - 2.0 * c - epsilon_multiplier * epsilon) * profile.log_max_on_circle(r)?).exp())
}

/// `B(R, u)^{-ε}`, shown next to the infinite-order sums.
pub fn infinite_order_reference(profile: &GrowthProfile, epsilon: f64, r: f64) -> Result<f64> {
    Ok((-epsilon * profile.log_max_on_circle(r)?).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{ErrorField, Grid};
    use crate::profiles::BandKind;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn flag(z: Complex64) -> Flag {
        Flag { index: 0, z, e: 1.0, atom_adjacent: false }
    }

    fn power1() -> GrowthProfile {
        GrowthProfile::plane_power(1.0).unwrap()
    }

    fn field_of(values: Vec<f64>, grid: Grid) -> ErrorField {
        let n = values.len();
        ErrorField { grid, values, atom_adjacent: vec![false; n], truncation_note: String::new() }
    }

    #[test]
    fn scan_examples() {
        let grid = Grid::Polar { r_lo: 0.5, r_hi: 8.0, n_r: 4, n_theta: 4 };
        let b = Budget::new(BudgetKind::PlaneFinite, 1.0, 0.05).unwrap();
        let zero = field_of(vec![0.0; 16], grid);
        let s = scan_bad_set(&zero, &b, &power1()).unwrap();
        assert!(s.flags.is_empty());
        // first ring sits at |z| = 1.4375 > 1, none excluded
        assert_eq!(s.excluded, 0);
        let e2 = std::f64::consts::E.powi(2);
        let g = Grid::Polar { r_lo: e2 - 0.5, r_hi: e2 + 0.5, n_r: 1, n_theta: 16 };
        let mut vals = vec![0.0; 16];
        vals[3] = 10.0;
        let s = scan_bad_set(&field_of(vals, g), &b, &power1()).unwrap();
        assert_eq!(s.flags.len(), 1);
        assert_eq!(s.flags[0].index, 3);
        let inner = Grid::Polar { r_lo: 0.0, r_hi: 2.0, n_r: 2, n_theta: 4 };
        assert_eq!(scan_bad_set(&field_of(vec![0.0; 8], inner), &b, &power1()).unwrap().excluded, 4);
        assert!(Budget::new(BudgetKind::PlaneFinite, 0.0, 0.1).is_err());
        let disk = GrowthProfile::disk_power_singularity(1.0).unwrap();
        assert!(scan_bad_set(&zero, &b, &disk).is_err());
    }

    #[test]
    fn looser_budget_flags_fewer() {
        let grid = Grid::Polar { r_lo: 2.0, r_hi: 30.0, n_r: 20, n_theta: 20 };
        let vals: Vec<f64> = (0..400).map(|i| ((i * 37 % 101) as f64 / 10.0) - 5.0).collect();
        let f = field_of(vals, grid);
        let mut prev = usize::MAX;
        for cc in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let n = scan_bad_set(&f, &Budget::new(BudgetKind::PlaneFinite, cc, 0.1).unwrap(), &power1()).unwrap().flags.len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn cover_examples() {
        let cap = CapRule::PlaneFiniteCap { rho: 1.0, epsilon: 0.05 };
        let p = power1();
        let one = cover_bad_set(&[flag(c(20.0, 0.0))], cap, &p, 0.2).unwrap();
        assert_eq!(one.disks.len(), 1);
        assert!((one.disks[0].radius - 0.2 / SQRT_2).abs() < 1e-15);
        let two = cover_bad_set(&[flag(c(20.0, 0.0)), flag(c(20.2, 0.0))], cap, &p, 0.2).unwrap();
        assert_eq!(two.disks.len(), 1);
        assert!(two.disks[0].radius < 2.0 * 0.2 / SQRT_2);
        // cap at |z| = 0.01 is 0.01^0.55 ≈ 0.08 < 0.2/√2
        match cover_bad_set(&[flag(c(0.01, 0.0))], cap, &p, 0.2) {
            Err(Error::CapViolation { count, .. }) => assert_eq!(count, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cover_is_sound() {
        let p = power1();
        let cap = CapRule::PlaneFiniteCap { rho: 1.0, epsilon: 0.05 };
        let flags: Vec<Flag> = (0..300)
            .map(|i| {
                let t = i as f64;
                flag(Complex64::from_polar(8.0 + (t * 0.37) % 20.0, t * 2.39996))
            })
            .collect();
        let cover = cover_bad_set(&flags, cap, &p, 0.4).unwrap();
        for f in &flags {
            assert!(cover.covers(f.z));
        }
        for d in &cover.disks {
            assert!(d.radius <= cap.cap(&p, d.center) * (1.0 + 1e-12));
        }
        assert!(cover.disks.len() < flags.len());
        let again = cover_bad_set(&flags, cap, &p, 0.4).unwrap();
        assert_eq!(cover, again);
    }

    #[test]
    fn band_sums() {
        let b = AnnulusBand::new(BandKind::PlaneDyadic, 2.0, None).unwrap();
        assert_eq!(band_radius_sums(&[], &[b])[0].sum_radii, 0.0);
        let s = band_radius_sums(&[Disk::new(c(3.0, 0.0), 0.5)], &[b]);
        assert_eq!((s[0].sum_radii, s[0].count), (0.5, 1));
    }

    #[test]
    fn plane_covering_family() {
        // D((-1)^n 2^{n-1}, 2^n) covers the plane with Σ_{|z_j|<R} r_j <= 2R
        let disks: Vec<Disk> = (1..30)
            .map(|n| Disk::new(c((-1f64).powi(n) * 2f64.powi(n - 1), 0.0), 2f64.powi(n)))
            .collect();
        for r in [4.0, 8.0, 16.0, 32.0] {
            let sum: f64 = disks.iter().filter(|d| d.center.norm() < r).map(|d| d.radius).sum();
            assert!(sum <= 2.0 * r);
        }
        for z in [c(0.0, 0.0), c(5.0, 7.0), c(-100.0, 3.0), c(0.0, 1000.0)] {
            assert!(disks.iter().any(|d| d.contains(z)));
        }
    }

    #[test]
    fn fit_examples() {
        let los = [8.0, 16.0, 32.0, 64.0];
        for exp in [2.0, 1.27] {
            let pts: Vec<(f64, f64)> = los.iter().map(|&r| (r, f64::powf(r, exp))).collect();
            let (s, se) = fit_scaling_exponent(&pts).unwrap();
            assert!((s - exp).abs() < 1e-9 && se < 1e-9);
        }
        assert!(fit_scaling_exponent(&los.map(|r| (r, 0.0))).is_err());
    }

    #[test]
    fn floor_examples() {
        let f = theorem_floor(BudgetKind::PlaneFinite, &power1(), 0.1, 0.01, 100.0).unwrap();
        assert!((f - 100f64.powf(1.27)).abs() < 1e-9 && (f - 346.7).abs() < 0.1);
        let d = GrowthProfile::disk_power_singularity(1.0).unwrap();
        let f = theorem_floor(BudgetKind::DiskFinite, &d, 0.0, 0.0, 0.9).unwrap();
        assert!((f - 10f64.sqrt()).abs() < 1e-12);
        let e = GrowthProfile::plane_iterated_exp(1).unwrap();
        let f = theorem_floor(BudgetKind::PlaneProfile, &e, 0.0, 0.0, 3.0).unwrap();
        assert!((f - 1.5f64.exp()).abs() < 1e-12);
        assert!(theorem_floor(BudgetKind::PlaneInfinite, &e, 0.1, 0.1, 3.0).is_err());
        assert!(theorem_floor(BudgetKind::DiskFinite, &power1(), 0.1, 0.1, 0.5).is_err());
    }

    #[test]
    fn measured_constant_is_nearest_rank() {
        let grid = Grid::Polar { r_lo: 9.0, r_hi: 11.0, n_r: 1, n_theta: 100 };
        let r = 10f64;
        let vals: Vec<f64> = (1..=100).map(|i| i as f64 * r.ln()).collect();
        let f = field_of(vals, grid);
        let c99 = measured_budget_constant(&f, BudgetKind::PlaneFinite, &power1(), 0.99).unwrap();
        assert!((c99 - 99.0).abs() < 1e-9);
    }
}
