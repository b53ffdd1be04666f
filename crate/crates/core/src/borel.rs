//! Borel-type growth lemmas: where does `v` grow by more than a power over a
//! short window, and how large is that set in the finite-measure sense.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::GrowthProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FmKind {
    /// Lebesgue measure on the half-line.
    PlaneLebesgue,
    /// `∫ (1 - x)^{-2} dx` on `[0, 1)`.
    DiskWeighted,
}

/// Sorted disjoint intervals with their measure.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasureSet {
    pub intervals: Vec<(f64, f64)>,
    pub kind: FmKind,
    pub measure: f64,
    /// Samples whose window left the range and were not tested.
    pub truncated: usize,
}

impl FiniteMeasureSet {
    /// `lo,hi,measure_contribution` per interval.
    pub fn to_csv(&self) -> String {
        use crate::io::fmt_f64 as f;
        let mut out = String::from("lo,hi,measure_contribution\n");
        for &(lo, hi) in &self.intervals {
            let m = fm_measure(&[(lo, hi)], self.kind).unwrap_or(f64::NAN);
            out.push_str(&format!("{},{},{}\n", f(lo), f(hi), f(m)));
        }
        out
    }

    pub fn contains(&self, r: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= r && r <= hi)
    }
}

/// Lebesgue length, or `Σ 1/(1 - hi) - 1/(1 - lo)` for the disk weight.
pub fn fm_measure(intervals: &[(f64, f64)], kind: FmKind) -> Result<f64> {
    let mut total = 0.0;
    for &(lo, hi) in intervals {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("interval ({lo}, {hi}) is reversed")));
        }
        total += match kind {
            FmKind::PlaneLebesgue => hi - lo,
            FmKind::DiskWeighted => {
                if lo < 0.0 {
                    return Err(Error::domain(lo, "disk intervals start at 0 or later"));
                }
                if hi >= 1.0 {
                    return Err(Error::domain(hi, "weighted measure is infinite up to 1"));
                }
                1.0 / (1.0 - hi) - 1.0 / (1.0 - lo)
            }
        };
    }
    Ok(total)
}

/// `log v(r)` for a nondecreasing growth function.
pub trait LogGrowth {
    /// `None` where `v` is not available (outside a table).
    fn log_v(&self, r: f64) -> Option<f64>;
}

impl LogGrowth for GrowthProfile {
    fn log_v(&self, r: f64) -> Option<f64> {
        self.log_max_on_circle(r).ok()
    }
}

/// `log v` given by a closure.
pub struct LogFn<F>(pub F);

impl<F: Fn(f64) -> f64> LogGrowth for LogFn<F> {
    fn log_v(&self, r: f64) -> Option<f64> {
        Some((self.0)(r))
    }
}

/// Tabulated `v`, interpolated linearly in `log v` (which keeps it
/// monotone).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedGrowth {
    r: Vec<f64>,
    log_v: Vec<f64>,
}

impl TabulatedGrowth {
    pub fn new(r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if r.len() != v.len() || r.len() < 2 {
            return Err(Error::invalid("table needs at least two (r, v) pairs of equal length"));
        }
        if r.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("table radii must increase strictly"));
        }
        if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("table values must be positive and finite"));
        }
        if v.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("table values must be nondecreasing"));
        }
        Ok(TabulatedGrowth { r, log_v: v.iter().map(|x| x.ln()).collect() })
    }
}

impl LogGrowth for TabulatedGrowth {
    fn log_v(&self, x: f64) -> Option<f64> {
        let (first, last) = (self.r[0], *self.r.last()?);
        if !(x >= first && x <= last) {
            return None;
        }
        let i = self.r.partition_point(|&t| t <= x).clamp(1, self.r.len() - 1);
        let (r0, r1) = (self.r[i - 1], self.r[i]);
        let s = (x - r0) / (r1 - r0);
        Some(self.log_v[i - 1] + s * (self.log_v[i] - self.log_v[i - 1]))
    }
}

fn window(kind: FmKind, r: f64, log_v: f64) -> f64 {
    match kind {
        FmKind::PlaneLebesgue => 2.0 / log_v,
        FmKind::DiskWeighted => 2.0 * (1.0 - r).powi(2) / log_v,
    }
}

/// Samples `r_k = r0 + k·step` in `[r0, r1]` and marks those where
/// `log v(r + w(r)) >= (1 + δ) log v(r)`, with `w = 2 / log v` in the plane
/// and `2 (1 - r)² / log v` in the disk. Each failing sample contributes
/// `[r_k - step, r_k + step]` clipped to the range.
///
/// A disk window that reaches `|z| = 1` counts as a failure, since `v` is
/// unbounded there. Windows that leave a table are skipped and counted in
/// `truncated`. The step is checked against a quarter of the window at `r0`.
pub fn borel_exceptional_set<V: LogGrowth>(
    v: &V,
    delta: f64,
    kind: FmKind,
    range: (f64, f64),
    step: f64,
) -> Result<FiniteMeasureSet> {
    let (r0, r1) = range;
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    if !(r0 < r1 && step > 0.0) {
        return Err(Error::invalid(format!("need r0 < r1 and step > 0, got ({r0}, {r1}), {step}")));
    }
    if kind == FmKind::DiskWeighted && !(r0 >= 0.0 && r1 < 1.0) {
        return Err(Error::domain(r1, "disk range must lie in [0, 1)"));
    }
    let lv0 = v.log_v(r0).ok_or_else(|| Error::domain(r0, "v unavailable at r0"))?;
    if !(lv0 > 1.0) {
        return Err(Error::invalid(format!("log v(r0) = {lv0} must exceed 1")));
    }
    let w0 = window(kind, r0, lv0);
    if step > w0 / 4.0 {
        return Err(Error::invalid(format!("step {step} does not resolve the window {w0} at r0")));
    }
    let n = ((r1 - r0) / step).floor() as usize;
    let mut truncated = 0;
    let mut fails: Vec<f64> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=n {
        let r = r0 + k as f64 * step;
        let lv = v.log_v(r).ok_or_else(|| Error::domain(r, "v unavailable inside the range"))?;
        if !(lv > 1.0) {
            return Err(Error::invalid(format!("log v({r}) = {lv} must exceed 1")));
        }
        if lv < prev {
            return Err(Error::invalid(format!("v decreases at r = {r}")));
        }
        prev = lv;
        let target = r + window(kind, r, lv);
        let failed = if kind == FmKind::DiskWeighted && target >= 1.0 {
            true
        } else {
            match v.log_v(target) {
                Some(lt) => lt >= (1.0 + delta) * lv,
                None => {
                    truncated += 1;
                    continue;
                }
            }
        };
        if failed {
            fails.push(r);
        }
    }
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for r in fails {
        let (lo, hi) = ((r - step).max(r0), (r + step).min(r1));
        match intervals.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => intervals.push((lo, hi)),
        }
    }
    let measure = fm_measure(&intervals, kind)?;
    Ok(FiniteMeasureSet { intervals, kind, measure, truncated })
}
