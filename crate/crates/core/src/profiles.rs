//! Subharmonic growth models and the annulus bands the exceptional-set
//! statistics are taken over.
//!
//! Every profile is radial about a center `c` (the origin, or the boundary
//! point 1 for [`GrowthProfile::DiskPowerSingularity`]): `u(z) = φ(|z - c|)`.
//! The Riesz density of such a function is `(φ'' + φ'/t) / 2π` and the
//! mass of the disk of radius `t` about `c` is `t φ'(t)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    PlanePower,
    PlaneIteratedExp,
    DiskPowerSingularity,
    DiskRadial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Plane,
    UnitDisk,
}

/// A subharmonic growth model.
///
/// * `PlanePower`: `|z|^ρ` in the plane.
/// * `PlaneIteratedExp`: `exp_k(|z|)` in the plane.
/// * `DiskPowerSingularity`: `|1 - z|^{-ρ}` in the unit disk.
/// * `DiskRadial`: `exp_k(1 / (1 - |z|))` in the unit disk.
///
/// New radial models plug in through [`GrowthProfile::radial_jet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthProfile {
    PlanePower { rho: f64 },
    PlaneIteratedExp { k: u32 },
    DiskPowerSingularity { rho: f64 },
    DiskRadial { k: u32 },
}

/// Value and first two derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `exp` iterated `k` times over an inner jet.
fn iterate_exp(mut j: Jet, k: u32) -> Jet {
    for _ in 0..k {
        let e = j.v.exp();
        j = Jet { v: e, d1: e * j.d1, d2: e * (j.d1 * j.d1 + j.d2) };
    }
    j
}

/// `exp_k(x)`; `exp_0` is the identity.
pub fn exp_iter(k: u32, x: f64) -> f64 {
    (0..k).fold(x, |acc, _| acc.exp())
}

impl GrowthProfile {
    pub fn plane_power(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(GrowthProfile::PlanePower { rho })
    }

    pub fn plane_iterated_exp(k: u32) -> Result<Self> {
        check_k(k)?;
        Ok(GrowthProfile::PlaneIteratedExp { k })
    }

    pub fn disk_power_singularity(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(GrowthProfile::DiskPowerSingularity { rho })
    }

    pub fn disk_radial(k: u32) -> Result<Self> {
        check_k(k)?;
        Ok(GrowthProfile::DiskRadial { k })
    }

    pub fn kind(&self) -> ProfileKind {
        match self {
            GrowthProfile::PlanePower { .. } => ProfileKind::PlanePower,
            GrowthProfile::PlaneIteratedExp { .. } => ProfileKind::PlaneIteratedExp,
            GrowthProfile::DiskPowerSingularity { .. } => ProfileKind::DiskPowerSingularity,
            GrowthProfile::DiskRadial { .. } => ProfileKind::DiskRadial,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            GrowthProfile::PlanePower { .. } | GrowthProfile::PlaneIteratedExp { .. } => Domain::Plane,
            _ => Domain::UnitDisk,
        }
    }

    /// Order ρ for the power kinds.
    pub fn rho(&self) -> Option<f64> {
        match *self {
            GrowthProfile::PlanePower { rho } | GrowthProfile::DiskPowerSingularity { rho } => Some(rho),
            _ => None,
        }
    }

    /// Center of radial symmetry.
    pub fn center(&self) -> Complex64 {
        match self {
            GrowthProfile::DiskPowerSingularity { .. } => Complex64::new(1.0, 0.0),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Radial function `φ(t)` about [`center`](Self::center) with its first
    /// two derivatives. Non-finite results are reported as overflow.
    pub fn radial_jet(&self, t: f64) -> Result<Jet> {
        let jet = match *self {
            GrowthProfile::PlanePower { rho } => Jet {
                v: t.powf(rho),
                d1: rho * t.powf(rho - 1.0),
                d2: rho * (rho - 1.0) * t.powf(rho - 2.0),
            },
            GrowthProfile::PlaneIteratedExp { k } => iterate_exp(Jet { v: t, d1: 1.0, d2: 0.0 }, k),
            GrowthProfile::DiskPowerSingularity { rho } => Jet {
                v: t.powf(-rho),
                d1: -rho * t.powf(-rho - 1.0),
                d2: rho * (rho + 1.0) * t.powf(-rho - 2.0),
            },
            GrowthProfile::DiskRadial { k } => {
                let s = 1.0 - t;
                iterate_exp(Jet { v: 1.0 / s, d1: 1.0 / (s * s), d2: 2.0 / (s * s * s) }, k)
            }
        };
        if jet.v.is_finite() {
            Ok(jet)
        } else {
            Err(Error::Numerical(format!("profile value overflows at radius {t}")))
        }
    }

    fn check_point(&self, z: Complex64) -> Result<()> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::domain(z, "non-finite point"));
        }
        if let GrowthProfile::DiskPowerSingularity { .. } = self {
            if z == Complex64::new(1.0, 0.0) {
                return Err(Error::singular(z, "|1 - z|^-ρ is singular at z = 1"));
            }
        }
        if self.domain() == Domain::UnitDisk && z.norm() >= 1.0 {
            return Err(Error::domain(z, "disk profiles are defined for |z| < 1"));
        }
        Ok(())
    }

    pub fn value(&self, z: Complex64) -> Result<f64> {
        self.check_point(z)?;
        Ok(self.radial_jet((z - self.center()).norm())?.v)
    }

    /// Riesz density `Δu / 2π` at `z`.
    pub fn riesz_density(&self, z: Complex64) -> Result<f64> {
        self.check_point(z)?;
        let t = (z - self.center()).norm();
        match *self {
            GrowthProfile::PlanePower { rho } => {
                if t == 0.0 {
                    return match rho {
                        r if r < 2.0 => Err(Error::singular(z, "density |z|^(ρ-2) blows up at 0")),
                        r if r == 2.0 => Ok(2.0 / PI),
                        _ => Ok(0.0),
                    };
                }
                Ok(rho * rho / (2.0 * PI) * t.powf(rho - 2.0))
            }
            GrowthProfile::DiskPowerSingularity { rho } => Ok(rho * rho / (2.0 * PI) * t.powf(-rho - 2.0)),
            _ => {
                if t == 0.0 {
                    return Err(Error::singular(z, "radial profile has a cone point at the origin"));
                }
                let j = self.radial_jet(t)?;
                Ok((j.d2 + j.d1 / t) / (2.0 * PI))
            }
        }
    }

    /// Riesz mass of the closed disk `|z - c| <= t` about the center, for
    /// the kinds whose measure is finite there (`t φ'(t)`).
    pub(crate) fn radial_mass(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(t * self.radial_jet(t)?.d1)
    }

    /// Counting function `n(r)`: Riesz mass of the closed disk `|z| <= r`.
    ///
    /// Closed form for `PlanePower`; radial quadrature of the density for the
    /// other kinds.
    pub fn counting(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::invalid(format!("counting radius must be finite and >= 0, got {r}")));
        }
        if self.domain() == Domain::UnitDisk && r >= 1.0 {
            return Err(Error::domain(r, "disk profiles need r < 1"));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        match *self {
            GrowthProfile::PlanePower { rho } => Ok(rho * r.powf(rho)),
            GrowthProfile::DiskPowerSingularity { rho } => Ok(disk_singularity_counting(rho, r)),
            _ => {
                self.radial_jet(r)?;
                let q = integrate(
                    |t| {
                        let j = self.radial_jet(t).expect("checked at the endpoint");
                        t * j.d2 + j.d1
                    },
                    0.0,
                    r,
                    &[],
                    0.0,
                    1e-13,
                    500,
                );
                Ok(q.value)
            }
        }
    }

    /// `B(r, u)`, the maximum of `u` over `|z| = r`.
    pub fn max_on_circle(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        match *self {
            GrowthProfile::DiskPowerSingularity { rho } => Ok((1.0 - r).powf(-rho)),
            _ => Ok(self.radial_jet(r)?.v),
        }
    }

    /// `log B(r, u)`, computed without forming `B` for the iterated kinds.
    pub fn log_max_on_circle(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(match *self {
            GrowthProfile::PlanePower { rho } => rho * r.ln(),
            GrowthProfile::PlaneIteratedExp { k } => exp_iter(k - 1, r),
            GrowthProfile::DiskPowerSingularity { rho } => -rho * (1.0 - r).ln(),
            GrowthProfile::DiskRadial { k } => exp_iter(k - 1, 1.0 / (1.0 - r)),
        })
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::domain(r, "radius must be finite and >= 0"));
        }
        if self.domain() == Domain::UnitDisk && r >= 1.0 {
            return Err(Error::domain(r, "disk profiles need r < 1"));
        }
        Ok(())
    }

    /// Half-width of the regularity/growth window at `r`:
    /// `2 / log v(r)` in the plane, `2 (1 - r)^2 / log v(r)` in the disk.
    pub fn window_half_width(&self, r: f64) -> Result<f64> {
        let lv = self.log_max_on_circle(r)?;
        if !(lv > 1.0) {
            return Err(Error::invalid(format!("log v({r}) = {lv} must exceed 1")));
        }
        Ok(match self.domain() {
            Domain::Plane => 2.0 / lv,
            Domain::UnitDisk => 2.0 * (1.0 - r).powi(2) / lv,
        })
    }

    /// Checks that `log v^{(order)}` stays within relative `tol` of its value
    /// at `r` over the window `r ± window_half_width(r)`, with `v = B(·, u)`.
    pub fn regularity_check(&self, r: f64, order: u32, tol: f64) -> Result<bool> {
        if order > 2 {
            return Err(Error::invalid("derivative order must be 0, 1 or 2"));
        }
        let half = self.window_half_width(r)?;
        let step = 1e-4_f64.min(2.0 * half / 100.0);
        let (lo, hi) = (r - half, r + half);
        let reach = if order == 0 { 0.0 } else { step };
        match self.domain() {
            Domain::Plane if lo - reach <= 0.0 => {
                return Err(Error::domain(lo, "regularity window reaches the origin"))
            }
            Domain::UnitDisk if hi + reach >= 1.0 || lo - reach < 0.0 => {
                return Err(Error::domain(hi, "regularity window leaves the unit disk"))
            }
            _ => {}
        }
        let log_deriv = |x: f64| -> Result<f64> {
            let d = match order {
                0 => return self.log_max_on_circle(x),
                1 => (self.max_on_circle(x + step)? - self.max_on_circle(x - step)?) / (2.0 * step),
                _ => {
                    (self.max_on_circle(x + step)? - 2.0 * self.max_on_circle(x)?
                        + self.max_on_circle(x - step)?)
                        / (step * step)
                }
            };
            if d > 0.0 && d.is_finite() {
                Ok(d.ln())
            } else {
                Err(Error::Numerical(format!("derivative of order {order} at {x} is {d}; log undefined")))
            }
        };
        let reference = log_deriv(r)?;
        let n = 200;
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            if (log_deriv(x)? - reference).abs() > tol * reference.abs() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("order rho must be positive, got {rho}")))
    }
}

fn check_k(k: u32) -> Result<()> {
    if k >= 1 {
        Ok(())
    } else {
        Err(Error::invalid("iteration depth k must be >= 1"))
    }
}

/// Mass of `|z| <= r` under the density `(ρ²/2π)|1 - z|^{-ρ-2}`: radial
/// Gauss-Kronrod over circle means taken by the trapezoid rule.
fn disk_singularity_counting(rho: f64, r: f64) -> f64 {
    let circle_density = |t: f64| -> f64 {
        // periodic analytic integrand: trapezoid converges geometrically
        let mut m = 64usize;
        let mut prev = f64::NAN;
        loop {
            let s: f64 = (0..m)
                .map(|j| {
                    let th = 2.0 * PI * j as f64 / m as f64;
                    let d2 = 1.0 - 2.0 * t * th.cos() + t * t;
                    d2.powf(-(rho + 2.0) / 2.0)
                })
                .sum::<f64>()
                / m as f64;
            if (s - prev).abs() <= 1e-15 * s || m >= 1 << 18 {
                return s;
            }
            prev = s;
            m *= 2;
        }
    };
    let q = integrate(|t| rho * rho * t * circle_density(t), 0.0, r, &[], 0.0, 1e-13, 500);
    q.value
}

/// Annulus `lo <= |z| < hi` over which radius sums are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    /// `hi = 2 lo`
    PlaneDyadic,
    /// `hi = lo + 1 / log B(lo)`
    PlaneLogWindow,
    /// `hi = lo + (1 - lo) / 2`
    DiskHalf,
    /// `hi = lo + (1 - lo)^2 / log B(lo)`
    DiskLogWindow,
}

impl BandKind {
    pub fn domain(&self) -> Domain {
        match self {
            BandKind::PlaneDyadic | BandKind::PlaneLogWindow => Domain::Plane,
            _ => Domain::UnitDisk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusBand {
    pub lo: f64,
    pub hi: f64,
    pub kind: BandKind,
}

impl AnnulusBand {
    /// Builds the band of `kind` starting at `lo`; the log-window kinds read
    /// `B(lo, u)` from `profile`.
    pub fn new(kind: BandKind, lo: f64, profile: Option<&GrowthProfile>) -> Result<Self> {
        if !(lo > 0.0) {
            return Err(Error::invalid(format!("band start must be positive, got {lo}")));
        }
        let log_b = || -> Result<f64> {
            let p = profile.ok_or_else(|| Error::invalid("log-window bands need a profile"))?;
            let lb = p.log_max_on_circle(lo)?;
            if lb > 0.0 {
                Ok(lb)
            } else {
                Err(Error::invalid(format!("log B({lo}) = {lb} is not positive")))
            }
        };
        let hi = match kind {
            BandKind::PlaneDyadic => 2.0 * lo,
            BandKind::PlaneLogWindow => lo + 1.0 / log_b()?,
            BandKind::DiskHalf => lo + (1.0 - lo) / 2.0,
            BandKind::DiskLogWindow => lo + (1.0 - lo).powi(2) / log_b()?,
        };
        if kind.domain() == Domain::UnitDisk && !(lo < 1.0 && hi < 1.0) {
            return Err(Error::domain(lo, "disk bands must lie in [0, 1)"));
        }
        if !(lo < hi) {
            return Err(Error::invalid(format!("degenerate band [{lo}, {hi})")));
        }
        Ok(AnnulusBand { lo, hi, kind })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Five-point Laplacian.
    fn stencil(p: &GrowthProfile, z: Complex64, h: f64) -> f64 {
        let f = |w: Complex64| p.value(w).unwrap();
        (f(z + h) + f(z - h) + f(z + c(0.0, h)) + f(z - c(0.0, h)) - 4.0 * f(z)) / (h * h)
    }

    #[test]
    fn worked_values() {
        let p2 = GrowthProfile::plane_power(2.0).unwrap();
        assert!((p2.value(c(3.0, 4.0)).unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(GrowthProfile::plane_power(1.0).unwrap().value(c(0.0, 0.0)).unwrap(), 0.0);
        let d1 = GrowthProfile::disk_power_singularity(1.0).unwrap();
        assert!((d1.value(c(0.5, 0.0)).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn value_errors() {
        let d1 = GrowthProfile::disk_power_singularity(1.0).unwrap();
        assert!(matches!(d1.value(c(1.0, 0.0)), Err(Error::Singular { .. })));
        assert!(matches!(d1.value(c(0.0, 1.0)), Err(Error::Domain { .. })));
        assert!(GrowthProfile::plane_power(0.0).is_err());
        assert!(GrowthProfile::plane_iterated_exp(0).is_err());
    }

    #[test]
    fn density_values() {
        let p2 = GrowthProfile::plane_power(2.0).unwrap();
        for z in [c(0.0, 0.0), c(1.0, 2.0), c(-30.0, 0.5)] {
            assert!((p2.riesz_density(z).unwrap() - 2.0 / PI).abs() < 1e-15);
        }
        let p1 = GrowthProfile::plane_power(1.0).unwrap();
        assert!((p1.riesz_density(c(0.0, 4.0)).unwrap() - 1.0 / (8.0 * PI)).abs() < 1e-15);
        assert!(p1.riesz_density(c(0.0, 0.0)).is_err());
        let d1 = GrowthProfile::disk_power_singularity(1.0).unwrap();
        assert!((d1.riesz_density(c(0.5, 0.0)).unwrap() - 4.0 / PI).abs() < 1e-13);
    }

    #[test]
    fn density_matches_numeric_laplacian_with_second_order_convergence() {
        let cases = [
            (GrowthProfile::plane_power(1.5).unwrap(), c(2.0, 1.0)),
            (GrowthProfile::disk_power_singularity(1.0).unwrap(), c(0.5, 0.0)),
            (GrowthProfile::disk_power_singularity(2.0).unwrap(), c(0.2, -0.3)),
            (GrowthProfile::plane_iterated_exp(1).unwrap(), c(1.0, 1.0)),
            (GrowthProfile::disk_radial(1).unwrap(), c(0.3, 0.2)),
        ];
        for (p, z) in cases {
            let exact = 2.0 * PI * p.riesz_density(z).unwrap();
            let e1 = (stencil(&p, z, 1e-2) - exact).abs();
            let e2 = (stencil(&p, z, 5e-3) - exact).abs();
            let order = (e1 / e2).log2();
            assert!(order >= 1.8, "{p:?}: errors {e1} {e2} order {order}");
        }
    }

    #[test]
    fn counting_closed_forms() {
        let p1 = GrowthProfile::plane_power(1.0).unwrap();
        assert!((p1.counting(10.0).unwrap() - 10.0).abs() < 1e-12);
        let p2 = GrowthProfile::plane_power(2.0).unwrap();
        assert!((p2.counting(3.0).unwrap() - 18.0).abs() < 1e-12);
        for p in [p1, GrowthProfile::disk_radial(1).unwrap(), GrowthProfile::disk_power_singularity(1.0).unwrap()] {
            assert_eq!(p.counting(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn counting_matches_density_quadrature() {
        // oracle: ∫_0^r 2πt·density(t) dt with dense Gauss-Legendre on a
        // geometric grid
        let gl = crate::quadrature::gauss_legendre(40);
        for rho in [0.5_f64, 1.0, 1.5, 2.0, 3.0] {
            let p = GrowthProfile::plane_power(rho).unwrap();
            for r in [0.1_f64, 1.0, 10.0, 1000.0] {
                let mut total = 0.0;
                let mut a = r * 1e-12;
                // mass below r·1e-12
                total += rho * a.powf(rho);
                while a < r {
                    let b = (a * 2.0).min(r);
                    for &(x, w) in &gl {
                        let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
                        total += 0.5 * (b - a) * w * 2.0 * PI * t * p.riesz_density(c(t, 0.0)).unwrap();
                    }
                    a = b;
                }
                let n = p.counting(r).unwrap();
                assert!((total - n).abs() <= 1e-8 * n, "rho={rho} r={r}: {total} vs {n}");
            }
        }
    }

    #[test]
    fn iterated_counting_is_t_times_derivative() {
        for p in [GrowthProfile::plane_iterated_exp(1).unwrap(), GrowthProfile::plane_iterated_exp(2).unwrap()] {
            for r in [0.5, 1.0, 2.0] {
                let n = p.counting(r).unwrap();
                let closed = r * p.radial_jet(r).unwrap().d1;
                assert!((n - closed).abs() < 1e-10 * closed, "{p:?} r={r}: {n} vs {closed}");
            }
        }
        let dr = GrowthProfile::disk_radial(1).unwrap();
        let closed = 0.8 * dr.radial_jet(0.8).unwrap().d1;
        assert!((dr.counting(0.8).unwrap() - closed).abs() < 1e-9 * closed);
    }

    #[test]
    fn disk_singularity_counting_matches_series() {
        // |1-z|^{-ρ} = |Σ c_n z^n|² with c_n = (ρ/2)_n / n!; circle mean
        // M(r) = Σ c_n² r^{2n} and n(r) = r M'(r) = Σ 2n c_n² r^{2n}.
        for rho in [1.0, 2.0] {
            let p = GrowthProfile::disk_power_singularity(rho).unwrap();
            for r in [0.3_f64, 0.7, 0.9] {
                let mut cn: f64 = 1.0;
                let mut series = 0.0;
                for n in 1..20000 {
                    cn *= (rho / 2.0 + (n - 1) as f64) / n as f64;
                    series += 2.0 * n as f64 * cn * cn * r.powi(2 * n as i32);
                }
                let q = p.counting(r).unwrap();
                assert!((q - series).abs() < 1e-9 * series, "rho={rho} r={r}: {q} vs {series}");
            }
        }
    }

    #[test]
    fn max_on_circle_values() {
        let p = GrowthProfile::plane_power(1.5).unwrap();
        assert!((p.max_on_circle(4.0).unwrap() - 8.0).abs() < 1e-12);
        let e2 = GrowthProfile::plane_iterated_exp(2).unwrap();
        let direct = 2.0_f64.exp().exp();
        let other = (std::f64::consts::E.powf(2.0)).exp();
        assert!((direct - other).abs() < 1e-9 * direct);
        assert!((e2.max_on_circle(2.0).unwrap() - direct).abs() < 1e-9 * direct);
        assert!((e2.max_on_circle(2.0).unwrap() - 1618.1779919126539).abs() < 1e-6);
        let d = GrowthProfile::disk_power_singularity(2.0).unwrap();
        assert!((d.max_on_circle(0.9).unwrap() - 100.0).abs() < 1e-9);
        assert!(d.max_on_circle(1.0).is_err());
    }

    #[test]
    fn max_on_circle_is_radial_max() {
        let d = GrowthProfile::disk_power_singularity(1.0).unwrap();
        let r: f64 = 0.6;
        let scan = (0..3600)
            .map(|j| d.value(Complex64::from_polar(r, j as f64 * PI / 1800.0)).unwrap())
            .fold(f64::MIN, f64::max);
        assert!((scan - d.max_on_circle(r).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn regularity_examples() {
        let e1 = GrowthProfile::plane_iterated_exp(1).unwrap();
        assert!(e1.regularity_check(20.0, 1, 0.2).unwrap());
        let p1 = GrowthProfile::plane_power(1.0).unwrap();
        assert!(p1.regularity_check(10.0, 0, 0.2).unwrap());
        // window reaching the origin
        let p3 = GrowthProfile::plane_power(3.0).unwrap();
        assert!(p3.regularity_check(1.2, 2, 0.2).is_err());
        // log v <= 1
        assert!(p1.regularity_check(2.0, 0, 0.2).is_err());
    }

    #[test]
    fn bands() {
        let b = AnnulusBand::new(BandKind::PlaneDyadic, 8.0, None).unwrap();
        assert_eq!((b.lo, b.hi), (8.0, 16.0));
        let d = AnnulusBand::new(BandKind::DiskHalf, 0.8, None).unwrap();
        assert!((d.hi - 0.9).abs() < 1e-15);
        let e1 = GrowthProfile::plane_iterated_exp(1).unwrap();
        let w = AnnulusBand::new(BandKind::PlaneLogWindow, 4.0, Some(&e1)).unwrap();
        assert!((w.hi - 4.25).abs() < 1e-15);
        assert!(AnnulusBand::new(BandKind::DiskHalf, 1.2, None).is_err());
        assert!(AnnulusBand::new(BandKind::PlaneLogWindow, 4.0, None).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn max_on_circle_nondecreasing(rho in 0.1f64..4.0, a in 0.0f64..0.99, b in 0.0f64..0.99) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                for p in [GrowthProfile::plane_power(rho).unwrap(), GrowthProfile::disk_power_singularity(rho).unwrap()] {
                    prop_assert!(p.max_on_circle(lo).unwrap() <= p.max_on_circle(hi).unwrap());
                }
                let dr = GrowthProfile::disk_radial(1).unwrap();
                prop_assert!(dr.max_on_circle(lo).unwrap() <= dr.max_on_circle(hi).unwrap());
            }

            #[test]
            fn density_nonnegative(re in -5.0f64..5.0, im in -5.0f64..5.0) {
                let z = Complex64::new(re, im);
                for p in [GrowthProfile::plane_power(0.7).unwrap(), GrowthProfile::plane_iterated_exp(1).unwrap()] {
                    if let Ok(d) = p.riesz_density(z) { prop_assert!(d >= 0.0); }
                }
            }
        }
    }
}
