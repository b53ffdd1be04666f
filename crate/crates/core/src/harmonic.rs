//! Log-linear interpolants, annulus majorants, disk Green functions, circle
//! means and the Jensen / Poisson–Jensen identities.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::profiles::GrowthProfile;
use crate::quadrature::{integrate, CompensatedSum};

/// Twice-differentiable scalar function of a positive variable.
pub trait Smooth {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
}

/// `x^ρ`.
#[derive(Debug, Clone, Copy)]
pub struct Power(pub f64);

impl Smooth for Power {
    fn value(&self, x: f64) -> f64 {
        x.powf(self.0)
    }
    fn d1(&self, x: f64) -> f64 {
        self.0 * x.powf(self.0 - 1.0)
    }
    fn d2(&self, x: f64) -> f64 {
        self.0 * (self.0 - 1.0) * x.powf(self.0 - 2.0)
    }
}

/// `log x`.
#[derive(Debug, Clone, Copy)]
pub struct Log;

impl Smooth for Log {
    fn value(&self, x: f64) -> f64 {
        x.ln()
    }
    fn d1(&self, x: f64) -> f64 {
        1.0 / x
    }
    fn d2(&self, x: f64) -> f64 {
        -1.0 / (x * x)
    }
}

/// A function given by closures for the value and its first two derivatives.
pub struct Closures<F, G, H>(pub F, pub G, pub H);

impl<F: Fn(f64) -> f64, G: Fn(f64) -> f64, H: Fn(f64) -> f64> Smooth for Closures<F, G, H> {
    fn value(&self, x: f64) -> f64 {
        (self.0)(x)
    }
    fn d1(&self, x: f64) -> f64 {
        (self.1)(x)
    }
    fn d2(&self, x: f64) -> f64 {
        (self.2)(x)
    }
}

/// The function of `log x` that is linear and matches `v` at `R` and `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogInterpolant {
    pub r: f64,
    pub t: f64,
    pub v_r: f64,
    pub v_t: f64,
}

impl LogInterpolant {
    pub fn new(r: f64, t: f64, v_r: f64, v_t: f64) -> Result<Self> {
        if !(r > 0.0 && r < t && t.is_finite()) {
            return Err(Error::invalid(format!("need 0 < R < T, got R={r}, T={t}")));
        }
        Ok(LogInterpolant { r, t, v_r, v_t })
    }

    pub fn of<S: Smooth>(v: &S, r: f64, t: f64) -> Result<Self> {
        Self::new(r, t, v.value(r), v.value(t))
    }

    /// Weight of the `T` endpoint at `x`.
    fn lambda(&self, x: f64) -> f64 {
        ((x - self.r) / self.r).ln_1p() / ((self.t - self.r) / self.r).ln_1p()
    }

    fn check(&self, x: f64) -> Result<()> {
        if x < self.r || x > self.t || x.is_nan() {
            return Err(Error::domain(x, format!("outside [{}, {}]", self.r, self.t)));
        }
        Ok(())
    }

    /// `h(x) - v(x)`, arranged to avoid cancelling two large values.
    pub fn gap<S: Smooth>(&self, v: &S, x: f64) -> Result<f64> {
        self.check(x)?;
        let l = self.lambda(x);
        let vx = v.value(x);
        Ok(l * (self.v_t - vx) + (1.0 - l) * (self.v_r - vx))
    }
}

pub fn h_interp(li: &LogInterpolant, x: f64) -> Result<f64> {
    li.check(x)?;
    if x == li.r {
        return Ok(li.v_r);
    }
    if x == li.t {
        return Ok(li.v_t);
    }
    let l = li.lambda(x);
    Ok(li.v_t * l + li.v_r * (1.0 - l))
}

/// `(T - R)² (v'((R+T)/2) / R + max |v''|)` with the maximum taken over a
/// dense scan of `[R, T]`.
pub fn lemma1_gap_bound<S: Smooth>(v: &S, r: f64, t: f64) -> Result<f64> {
    LogInterpolant::new(r, t, 0.0, 0.0)?;
    if (t - r) / r > 0.5 {
        return Err(Error::invalid(format!("(T-R)/R = {} exceeds 0.5", (t - r) / r)));
    }
    let n = 2000;
    let mut max2: f64 = 0.0;
    for i in 0..=n {
        let x = r + (t - r) * i as f64 / n as f64;
        let d2 = v.d2(x);
        if !d2.is_finite() {
            return Err(Error::Numerical(format!("v'' not finite at {x}")));
        }
        max2 = max2.max(d2.abs());
    }
    let d1 = v.d1(0.5 * (r + t));
    if !d1.is_finite() {
        return Err(Error::Numerical("v' not finite at the midpoint".into()));
    }
    Ok((t - r).powi(2) * (d1 / r + max2))
}

/// `sup |h(x) - v(x)|` over `[R, T]`: a dense scan refined by golden-section
/// search around the best sample.
pub fn measured_gap<S: Smooth>(v: &S, r: f64, t: f64) -> Result<f64> {
    let li = LogInterpolant::of(v, r, t)?;
    let n = 4000;
    let xs: Vec<f64> = (0..=n).map(|i| r + (t - r) * i as f64 / n as f64).collect();
    let g = |x: f64| li.gap(v, x.clamp(r, t)).map(f64::abs);
    let mut best = 0;
    let mut best_val = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let val = g(x)?;
        if !val.is_finite() {
            return Err(Error::Numerical(format!("gap not finite at {x}")));
        }
        if val > best_val {
            best_val = val;
            best = i;
        }
    }
    let (mut a, mut b) = (xs[best.saturating_sub(1)], xs[(best + 1).min(n)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if g(x1)? > g(x2)? {
            b = x2;
        } else {
            a = x1;
        }
    }
    Ok(best_val.max(g(0.5 * (a + b))?))
}

/// Largest excess of the log-linear majorant over `x^ρ` on the annulus
/// `[R - w, R + w]`, `w = R^{1-ρ/2}` unless overridden.
pub fn annulus_majorant_gap(profile: &GrowthProfile, r: f64, width_override: Option<f64>) -> Result<f64> {
    let GrowthProfile::PlanePower { rho } = *profile else {
        return Err(Error::invalid("annulus majorant needs a PlanePower profile"));
    };
    let w = width_override.unwrap_or_else(|| r.powf(1.0 - rho / 2.0));
    if !(w > 0.0 && r - w > 0.0) {
        return Err(Error::invalid(format!("degenerate annulus R={r}, width={w}")));
    }
    measured_gap(&Power(rho), r - w, r + w)
}

fn inside(center: Complex64, radius: f64, z: Complex64) -> bool {
    (z - center).norm() < radius
}

/// Green function of the disk `D(center, radius)` with pole `pole`.
pub fn green_disk(center: Complex64, radius: f64, pole: Complex64, z: Complex64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::invalid("disk radius must be positive"));
    }
    if !inside(center, radius, pole) {
        return Err(Error::domain(pole, "pole must lie inside the disk"));
    }
    if (z - center).norm() > radius * (1.0 + 1e-12) {
        return Err(Error::domain(z, "point outside the disk"));
    }
    if z == pole {
        return Err(Error::singular(z, "Green function is infinite at its pole"));
    }
    let num = (radius * radius - (z - center) * (pole - center).conj()).norm();
    Ok((num.ln() - (radius * (z - pole).norm()).ln()).max(0.0))
}

/// Gradient of [`green_disk`] in `z`, packed as `∂x + i ∂y`.
pub fn green_gradient(center: Complex64, radius: f64, pole: Complex64, z: Complex64) -> Complex64 {
    let f1 = radius * radius - (z - center) * (pole - center).conj();
    -(pole - center) / f1.conj() - (z - pole).conj().inv()
}

/// `-(1/2π) ∮ ∂g/∂n ds` over the circle of radius `eps` about the pole;
/// equals 1 for a unit logarithmic pole.
pub fn green_flux(center: Complex64, radius: f64, pole: Complex64, eps: f64, m: usize) -> f64 {
    let mut s = CompensatedSum::default();
    for k in 0..m {
        let n = Complex64::from_polar(1.0, TAU * k as f64 / m as f64);
        let g = green_gradient(center, radius, pole, pole + eps * n);
        s.add(g.re * n.re + g.im * n.im);
    }
    -s.total() * eps / m as f64
}

/// Trapezoidal mean of `field` over `m` equispaced points of the circle.
pub fn circle_mean<F: Fn(Complex64) -> f64>(field: F, center: Complex64, r: f64, m: usize) -> Result<f64> {
    if m < 16 {
        return Err(Error::invalid(format!("circle mean needs m >= 16, got {m}")));
    }
    let mut s = CompensatedSum::default();
    for k in 0..m {
        let z = center + Complex64::from_polar(r, TAU * k as f64 / m as f64);
        let v = field(z);
        if !v.is_finite() {
            return Err(Error::singular(z, "field not finite at a circle sample; jitter r"));
        }
        s.add(v);
    }
    Ok(s.total() / m as f64)
}

/// `|log_f(z) - P[log_f](z) + Σ g(z, a_n)|` for the disk `D(center, radius)`,
/// with the Poisson integral summed over `m` boundary samples.
pub fn poisson_jensen_residual<F: Fn(Complex64) -> f64>(
    log_f: F,
    zeros: &[Complex64],
    center: Complex64,
    radius: f64,
    z: Complex64,
    m: usize,
) -> Result<f64> {
    if !inside(center, radius, z) {
        return Err(Error::domain(z, "evaluation point must lie inside the disk"));
    }
    for &a in zeros {
        if (a - center).norm() >= radius * (1.0 - 1e-12) {
            return Err(Error::domain(a, "zero on or outside the boundary circle"));
        }
        if a == z {
            return Err(Error::singular(z, "evaluation point is a zero"));
        }
    }
    let d2 = radius * radius - (z - center).norm_sqr();
    let poisson = circle_mean(
        |zeta| {
            let v = log_f(zeta);
            v * d2 / (zeta - z).norm_sqr()
        },
        center,
        radius,
        m,
    )?;
    let mut greens = CompensatedSum::default();
    for &a in zeros {
        greens.add(green_disk(center, radius, a, z)?);
    }
    Ok((log_f(z) - poisson + greens.total()).abs())
}

/// The three sides of the Jensen chain at `r_hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JensenTriple {
    /// Circle mean at `r_hi` minus the value at the center.
    pub mean_minus_center: f64,
    /// `∫_0^{r_hi} n(t)/t dt`.
    pub integrated_counting: f64,
    /// `n(r_lo) log(r_hi / r_lo)`.
    pub lower_bound: f64,
}

/// Subharmonic data for [`jensen_balance`].
#[derive(Debug, Clone, Copy)]
pub enum JensenSource<'a> {
    Profile(&'a GrowthProfile),
    /// `u = Σ mass · log|z - a|`, the log-modulus of a polynomial.
    Measure(&'a DiscreteMeasure),
}

/// `∫_a^b n(t)/t dt` for a discrete measure, with `n` counted about 0.
pub fn log_integrated_counting(measure: &DiscreteMeasure, a: f64, b: f64) -> f64 {
    let mut s = CompensatedSum::default();
    for atom in measure.atoms() {
        let d = atom.location.norm();
        if d <= b {
            s.add(atom.mass * (b / d.max(a)).ln());
        }
    }
    s.total()
}

const JENSEN_SAMPLES: usize = 4096;

pub fn jensen_balance(source: JensenSource<'_>, r_lo: f64, r_hi: f64) -> Result<JensenTriple> {
    if !(r_lo > 0.0 && r_lo < r_hi) {
        return Err(Error::invalid(format!("need 0 < r_lo < r_hi, got {r_lo}, {r_hi}")));
    }
    let origin = Complex64::new(0.0, 0.0);
    match source {
        JensenSource::Profile(p) => {
            let u = |z: Complex64| p.value(z).unwrap_or(f64::NAN);
            let mean = circle_mean(u, origin, r_hi, JENSEN_SAMPLES)?;
            let center = p.value(origin)?;
            if !center.is_finite() {
                return Err(Error::singular(origin, "profile singular at the center"));
            }
            let q = integrate(
                |t| p.counting(t).unwrap_or(f64::NAN) / t,
                0.0,
                r_hi,
                &[r_lo],
                1e-13,
                1e-12,
                500,
            );
            if !q.value.is_finite() {
                return Err(Error::Numerical("counting integral not finite".into()));
            }
            Ok(JensenTriple {
                mean_minus_center: mean - center,
                integrated_counting: q.value,
                lower_bound: p.counting(r_lo)? * (r_hi / r_lo).ln(),
            })
        }
        JensenSource::Measure(mu) => {
            if mu.atoms().iter().any(|a| a.location.norm() == 0.0) {
                return Err(Error::singular(origin, "atom at the center; shift the inner radius"));
            }
            let u = |z: Complex64| mu.atoms().iter().map(|a| a.mass * (z - a.location).norm().ln()).sum::<f64>();
            let mean = circle_mean(u, origin, r_hi, JENSEN_SAMPLES)?;
            Ok(JensenTriple {
                mean_minus_center: mean - u(origin),
                integrated_counting: log_integrated_counting(mu, 0.0, r_hi),
                lower_bound: mu.mass_in_disk(origin, r_lo) * (r_hi / r_lo).ln(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn interpolant_examples() {
        let li = LogInterpolant::of(&Power(2.0), 9.0, 11.0).unwrap();
        assert_eq!(h_interp(&li, 9.0).unwrap(), 81.0);
        assert_eq!(h_interp(&li, 11.0).unwrap(), 121.0);
        // (121 ln(10/9) + 81 ln(11/10)) / ln(11/9)
        let want = (121.0 * (10f64 / 9.0).ln() + 81.0 * (1.1f64).ln()) / (11f64 / 9.0).ln();
        let h = h_interp(&li, 10.0).unwrap();
        assert!((h - want).abs() < 1e-12 && (h - 102.0).abs() < 0.01, "{h}");
        assert!(h_interp(&li, 8.9).is_err());
        let lg = LogInterpolant::of(&Log, 2.0, 7.0).unwrap();
        for x in [2.0, 3.3, 5.0, 7.0] {
            assert!((h_interp(&lg, x).unwrap() - x.ln()).abs() < 1e-14);
        }
        assert!(LogInterpolant::new(3.0, 3.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn interpolant_is_monotone_between_ordered_endpoints() {
        let li = LogInterpolant::of(&Power(1.7), 4.0, 5.0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let h = h_interp(&li, 4.0 + i as f64 / 100.0).unwrap();
            assert!(h >= prev);
            prev = h;
        }
    }

    #[test]
    fn lemma1_examples() {
        let b = lemma1_gap_bound(&Power(2.0), 9.0, 11.0).unwrap();
        assert!((b - 4.0 * (20.0 / 9.0 + 2.0)).abs() < 1e-12);
        let g = measured_gap(&Power(2.0), 9.0, 11.0).unwrap();
        assert!((g - 2.0).abs() < 0.01 && g <= 5.0 * b);
        assert!(measured_gap(&Log, 3.0, 4.0).unwrap() < 1e-14);
        let t = 100.0 + 100f64.powf(0.25);
        let p = Power(1.5);
        assert!(measured_gap(&p, 100.0, t).unwrap() <= 5.0 * lemma1_gap_bound(&p, 100.0, t).unwrap());
        assert!(lemma1_gap_bound(&p, 1.0, 2.0).is_err());
        let bad = Closures(|x: f64| x, |_| 1.0, |_| f64::NAN);
        assert!(lemma1_gap_bound(&bad, 1.0, 1.2).is_err());
    }

    #[test]
    fn measured_gap_matches_golden_oracle() {
        // brute force: 10^6-point scan
        let v = Power(2.5);
        let li = LogInterpolant::of(&v, 20.0, 21.5).unwrap();
        let brute = (0..=1_000_000)
            .map(|i| li.gap(&v, 20.0 + 1.5 * i as f64 / 1e6).unwrap().abs())
            .fold(0.0, f64::max);
        let got = measured_gap(&v, 20.0, 21.5).unwrap();
        assert!((got - brute).abs() < 1e-9 * brute && got >= brute);
    }

    #[test]
    fn annulus_gaps() {
        let p2 = GrowthProfile::plane_power(2.0).unwrap();
        let gaps: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&r| annulus_majorant_gap(&p2, r, None).unwrap()).collect();
        assert!(gaps.iter().all(|&g| g > 0.0 && (g - 2.0).abs() < 0.01), "{gaps:?}");
        let p1 = GrowthProfile::plane_power(1.0).unwrap();
        let g = annulus_majorant_gap(&p1, 100.0, None).unwrap();
        assert!(g <= 5.0 * lemma1_gap_bound(&Power(1.0), 90.0, 110.0).unwrap());
        let small = annulus_majorant_gap(&p1, 100.0, Some(1e-3)).unwrap();
        assert!(small < 1e-6);
        assert!(annulus_majorant_gap(&p1, 100.0, Some(200.0)).is_err());
        assert!(annulus_majorant_gap(&GrowthProfile::plane_iterated_exp(1).unwrap(), 100.0, None).is_err());
    }

    #[test]
    fn green_examples() {
        let o = c(0.0, 0.0);
        assert!((green_disk(o, 1.0, o, c(0.5, 0.0)).unwrap() - 2f64.ln()).abs() < 1e-12);
        let g = green_disk(o, 1.0, c(0.5, 0.0), c(0.75, 0.0)).unwrap();
        assert!((g - 2.5f64.ln()).abs() < 1e-12);
        let g2 = green_disk(o, 1.0, c(0.75, 0.0), c(0.5, 0.0)).unwrap();
        assert!((g - g2).abs() < 1e-12);
        assert!(green_disk(o, 1.0, c(0.5, 0.0), c(0.5, 0.0)).is_err());
        assert!(green_disk(o, 1.0, c(1.5, 0.0), c(0.5, 0.0)).is_err());
        assert!(green_disk(o, 1.0, c(0.2, 0.0), c(1.5, 0.0)).is_err());
    }

    #[test]
    fn green_battery() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let center = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let radius = rng.gen_range(0.5..4.0);
            let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
                center + Complex64::from_polar(radius * rng.gen_range(0.0f64..0.95).sqrt(), rng.gen_range(0.0..TAU))
            };
            let a = pick(&mut rng);
            let z = pick(&mut rng);
            let edge = center + Complex64::from_polar(radius, rng.gen_range(0.0..TAU));
            assert!(green_disk(center, radius, a, edge).unwrap() <= 1e-9);
            let (g1, g2) = (green_disk(center, radius, a, z).unwrap(), green_disk(center, radius, z, a).unwrap());
            assert!((g1 - g2).abs() <= 1e-9 && g1 > 0.0);
            let flux = green_flux(center, radius, a, 1e-4 * radius, 256);
            assert!((flux - 1.0).abs() < 1e-3, "{flux}");
        }
    }

    #[test]
    fn circle_mean_examples() {
        let o = c(0.0, 0.0);
        assert!(circle_mean(|z| z.re, o, 3.0, 64).unwrap().abs() < 1e-12);
        let a = c(0.3, -0.4);
        assert!((circle_mean(|z| (z - a).norm().ln(), o, 2.0, 512).unwrap() - 2f64.ln()).abs() < 1e-10);
        let far = c(3.0, 1.0);
        assert!((circle_mean(|z| (z - far).norm().ln(), o, 2.0, 512).unwrap() - far.norm().ln()).abs() < 1e-10);
        assert!(circle_mean(|z| z.re, o, 1.0, 8).is_err());
        assert!(circle_mean(|z| (z - c(1.0, 0.0)).norm().ln(), o, 1.0, 16).is_err());
    }

    #[test]
    fn circle_mean_converges_spectrally() {
        let a = c(0.6, 0.5);
        let f = |z: Complex64| (z - a).norm().ln();
        let exact = a.norm().ln();
        let e64 = (circle_mean(f, c(0.0, 0.0), 0.5, 64).unwrap() - exact).abs();
        let e128 = (circle_mean(f, c(0.0, 0.0), 0.5, 128).unwrap() - exact).abs();
        assert!(e128 * 10.0 <= e64, "{e64} {e128}");
    }

    #[test]
    fn poisson_jensen_examples() {
        let o = c(0.0, 0.0);
        let r = poisson_jensen_residual(|z| z.re, &[], o, 1.0, c(0.3, -0.2), 1024).unwrap();
        assert!(r <= 1e-10);
        let a = c(0.1, 0.0);
        let r = poisson_jensen_residual(|z| (z - a).norm().ln(), &[a], o, 1.0, c(0.3, 0.2), 1024).unwrap();
        assert!(r <= 1e-8);
        assert!(poisson_jensen_residual(|z| z.re, &[c(1.0, 0.0)], o, 1.0, c(0.1, 0.0), 64).is_err());
    }

    #[test]
    fn jensen_examples() {
        let p = GrowthProfile::plane_power(1.5).unwrap();
        let j = jensen_balance(JensenSource::Profile(&p), 1.0, 10.0).unwrap();
        let want = 10f64.powf(1.5);
        assert!((j.mean_minus_center - want).abs() < 1e-6 * want);
        assert!((j.integrated_counting - want).abs() < 1e-6 * want);
        assert!(j.integrated_counting >= j.lower_bound);
        assert!(jensen_balance(JensenSource::Profile(&p), 2.0, 1.0).is_err());
    }

    #[test]
    fn jensen_for_measures() {
        let mu = DiscreteMeasure::unit_atoms([c(0.5, 0.0), c(-1.0, 2.0), c(3.0, 3.0)]);
        let j = jensen_balance(JensenSource::Measure(&mu), 1.0, 3.0).unwrap();
        assert!((j.mean_minus_center - j.integrated_counting).abs() < 1e-10);
        assert!(j.integrated_counting >= j.lower_bound);
        let with_origin = DiscreteMeasure::unit_atoms([c(0.0, 0.0)]);
        assert!(jensen_balance(JensenSource::Measure(&with_origin), 1.0, 2.0).is_err());
        assert!((log_integrated_counting(&mu, 1.0, 3.0) - (3f64.ln() + (3.0 / 5f64.sqrt()).ln())).abs() < 1e-14);
    }
}
