//! Batteries for the harmonic and Borel lemmas, run from the `[lemmas]`
//! config block. A failing check is recorded and the suite moves on.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::borel::{borel_exceptional_set, FmKind, LogFn};
use crate::config::LemmaBlock;
use crate::error::Result;
use crate::harmonic::{
    annulus_majorant_gap, circle_mean, green_disk, green_flux, jensen_balance, lemma1_gap_bound, measured_gap,
    poisson_jensen_residual, JensenSource, Power,
};
use crate::profiles::GrowthProfile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `measured <= bound`.
    fn at_most(name: &str, measured: f64, bound: f64, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), measured, bound, pass: measured <= bound, detail: detail.into() }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        CheckResult { name: name.into(), measured: f64::NAN, bound: f64::NAN, pass: false, detail: format!("error: {err}") }
    }
}

/// One annulus gap sample, kept for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapSample {
    pub rho: f64,
    pub r: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSection {
    pub checks: Vec<CheckResult>,
    pub lemma2_gaps: Vec<GapSample>,
}

impl LemmaSection {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub const LEMMA2_RADII: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];

pub fn lemma_suite(block: &LemmaBlock, delta: f64, seed: u64) -> LemmaSection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut gaps = Vec::new();
    for name in &block.checks {
        let outcome = match name.as_str() {
            "lemma1" => lemma1(block, &mut rng),
            "lemma2" => lemma2(block, &mut gaps),
            "green" => green(block, &mut rng),
            "circle_mean" => mean_check(block),
            "poisson_jensen" => poisson_jensen(block, &mut rng),
            "jensen" => jensen(block),
            "borel_e" => borel_e(delta),
            "borel_f" => borel_f(block),
            _ => continue,
        };
        match outcome {
            Ok(mut rs) => checks.append(&mut rs),
            Err(e) => checks.push(CheckResult::failed(name, e)),
        }
    }
    LemmaSection { checks, lemma2_gaps: gaps }
}

/// Worst ratio of measured gap to bracket over 50 random `(R, T)` with
/// `(T - R)/R <= 0.1`, plus the `x², 9, 11` case.
fn lemma1(block: &LemmaBlock, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let rho = [0.5, 1.0, 1.5, 2.0, 3.0][rng.gen_range(0..5)];
        let r = 10f64.powf(rng.gen_range(0.0..4.0));
        let t = r * (1.0 + rng.gen_range(0.001..0.1));
        let v = Power(rho);
        worst = worst.max(measured_gap(&v, r, t)? / lemma1_gap_bound(&v, r, t)?);
    }
    let v = Power(2.0);
    let worked = measured_gap(&v, 9.0, 11.0)?;
    let bracket = lemma1_gap_bound(&v, 9.0, 11.0)?;
    Ok(vec![
        CheckResult::at_most("lemma1_random", worst, block.gap_factor, "max gap / bracket over 50 draws"),
        CheckResult::at_most("lemma1_worked", worked, block.gap_factor * bracket, "v = x^2, R = 9, T = 11"),
    ])
}

/// Annulus gaps over `R ∈ {10, ..., 10^4}` for `ρ ∈ {1, 2}`: bounded
/// max/min ratio and no strictly increasing run.
fn lemma2(block: &LemmaBlock, gaps: &mut Vec<GapSample>) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for rho in [1.0, 2.0] {
        let p = GrowthProfile::plane_power(rho)?;
        let g: Vec<f64> = LEMMA2_RADII.iter().map(|&r| annulus_majorant_gap(&p, r, None)).collect::<Result<_>>()?;
        gaps.extend(LEMMA2_RADII.iter().zip(&g).map(|(&r, &gap)| GapSample { rho, r, gap }));
        let max = g.iter().copied().fold(f64::MIN, f64::max);
        let min = g.iter().copied().fold(f64::MAX, f64::min);
        let increasing = g.windows(2).all(|w| w[1] > w[0]);
        let ratio = max / min;
        let mut c = CheckResult::at_most(
            &format!("lemma2_rho{rho}"),
            ratio,
            block.uniformity_ratio,
            format!("gaps {g:?}; strictly increasing: {increasing}"),
        );
        c.pass &= !increasing && min > 0.0;
        out.push(c);
    }
    Ok(out)
}

fn green(block: &LemmaBlock, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let (mut boundary, mut symmetry, mut flux_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut positive = true;
    for _ in 0..50 {
        let center = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let radius = rng.gen_range(0.5..4.0);
        let mut pick = || center + Complex64::from_polar(radius * rng.gen_range(0.0f64..0.95).sqrt(), rng.gen_range(0.0..TAU));
        let (a, z) = (pick(), pick());
        let edge = center + Complex64::from_polar(radius, rng.gen_range(0.0..TAU));
        boundary = boundary.max(green_disk(center, radius, a, edge)?.abs());
        let g = green_disk(center, radius, a, z)?;
        symmetry = symmetry.max((g - green_disk(center, radius, z, a)?).abs());
        positive &= g > 0.0;
        flux_err = flux_err.max((green_flux(center, radius, a, 1e-4 * radius, 256) - 1.0).abs());
    }
    let o = Complex64::new(0.0, 0.0);
    let w1 = (green_disk(o, 1.0, o, Complex64::new(0.5, 0.0))? - 2f64.ln()).abs();
    let w2 = (green_disk(o, 1.0, Complex64::new(0.5, 0.0), Complex64::new(0.75, 0.0))? - 2.5f64.ln()).abs();
    let mut sym = CheckResult::at_most("green_symmetry", symmetry, block.green_tol, "50 random disks");
    sym.pass &= positive;
    sym.detail.push_str(&format!("; interior positive: {positive}"));
    Ok(vec![
        CheckResult::at_most("green_boundary", boundary, block.green_tol, "50 random disks"),
        sym,
        CheckResult::at_most("green_flux", flux_err, block.flux_tol, "|flux - 1| around the pole"),
        CheckResult::at_most("green_worked", w1.max(w2), 1e-12, "log 2 and log 2.5"),
    ])
}

fn mean_check(block: &LemmaBlock) -> Result<Vec<CheckResult>> {
    let o = Complex64::new(0.0, 0.0);
    let a = Complex64::new(0.3, -0.4);
    let inside = (circle_mean(|z| (z - a).norm().ln(), o, 2.0, block.m)? - 2f64.ln()).abs();
    let far = Complex64::new(3.0, 1.0);
    let outside = (circle_mean(|z| (z - far).norm().ln(), o, 2.0, block.m)? - far.norm().ln()).abs();
    Ok(vec![CheckResult::at_most("circle_mean", inside.max(outside), block.circle_mean_tol, "log|z - a| inside and outside")])
}

fn poisson_jensen(block: &LemmaBlock, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let mut worst: f64 = 0.0;
    let o = Complex64::new(0.0, 0.0);
    for _ in 0..20 {
        let n = rng.gen_range(1..=10);
        let zeros: Vec<Complex64> =
            (0..n).map(|_| Complex64::from_polar(rng.gen_range(0.0f64..0.8).sqrt(), rng.gen_range(0.0..TAU))).collect();
        let z = Complex64::from_polar(rng.gen_range(0.0..0.8), rng.gen_range(0.0..TAU));
        let log_f = |w: Complex64| zeros.iter().map(|a| (w - a).norm().ln()).sum::<f64>();
        worst = worst.max(poisson_jensen_residual(log_f, &zeros, o, 1.0, z, block.m)?);
    }
    Ok(vec![CheckResult::at_most("poisson_jensen", worst, block.poisson_jensen_tol, "20 random instances")])
}

fn jensen(block: &LemmaBlock) -> Result<Vec<CheckResult>> {
    let mut worst: f64 = 0.0;
    let mut ordered = true;
    for rho in [1.0, 1.5, 2.0] {
        let p = GrowthProfile::plane_power(rho)?;
        let j = jensen_balance(JensenSource::Profile(&p), 1.0, 10.0)?;
        worst = worst.max((j.mean_minus_center - j.integrated_counting).abs() / j.integrated_counting);
        ordered &= j.integrated_counting >= j.lower_bound;
    }
    let mut c = CheckResult::at_most("jensen", worst, block.jensen_tol, "rho in {1, 1.5, 2}, r_hi = 10");
    c.pass &= ordered;
    Ok(vec![c])
}

/// `v = e^r` on `[3, 50]`: failures end by `sqrt(2/δ) + 2·step`.
fn borel_e(delta: f64) -> Result<Vec<CheckResult>> {
    let step = 0.005;
    let s = borel_exceptional_set(&LogFn(|r: f64| r), delta, FmKind::PlaneLebesgue, (3.0, 50.0), step)?;
    let last = s.intervals.last().map_or(3.0, |iv| iv.1);
    let threshold = (2.0 / delta).sqrt().max(3.0) + 2.0 * step;
    Ok(vec![CheckResult::at_most(
        "borel_e",
        last,
        threshold,
        format!("delta = {delta}; failure measure {}", s.measure),
    )])
}

/// `v = exp(1/(1 - r))`, `δ = 0.5` on `[0.05, 0.95]`: weighted measure
/// stable under step halving.
fn borel_f(block: &LemmaBlock) -> Result<Vec<CheckResult>> {
    let v = GrowthProfile::disk_radial(1)?;
    let a = borel_exceptional_set(&v, 0.5, FmKind::DiskWeighted, (0.05, 0.95), 2e-4)?;
    let b = borel_exceptional_set(&v, 0.5, FmKind::DiskWeighted, (0.05, 0.95), 1e-4)?;
    let change = (a.measure - b.measure).abs() / b.measure;
    let mut c = CheckResult::at_most("borel_f", change, block.borel_stability, format!("measures {} and {}", a.measure, b.measure));
    c.pass &= b.measure.is_finite();
    Ok(vec![c])
}
