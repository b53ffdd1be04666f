//! Experiment pipeline: atomize → field → scan → cover → bands → report,
//! with optional lemma batteries, writing deterministic artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use crate::atomize::{atomize, unatomized_mass, Atomization};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::exceptional::{
    band_radius_sums, cover_bad_set, fit_scaling_exponent, infinite_order_reference, measured_budget_constant,
    profile_floor_with, scan_bad_set, theorem_floor, BudgetKind, DiskCover, ScanResult,
};
use crate::io::{canonical_json, fmt_f64, sha256_hex, write_atomic};
use crate::potential::{error_field, safe_radius, ErrorField, FieldOptions, Grid};
use crate::profiles::{AnnulusBand, Domain, GrowthProfile};
use crate::suite::{lemma_suite, LemmaSection};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Atomize,
    Field,
    Scan,
    Cover,
    Report,
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Pass,
    AnalysisFailure,
    CapViolation,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::AnalysisFailure => 3,
            RunStatus::CapViolation => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Pass => "pass",
            RunStatus::AnalysisFailure => "analysis_failure",
            RunStatus::CapViolation => "cap_violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub band: AnnulusBand,
    pub sum_radii: f64,
    pub disk_count: usize,
    pub floor: Option<f64>,
    pub floor_alternates: BTreeMap<String, f64>,
    pub in_regime: bool,
    /// Whether the grid samples the whole band radially.
    pub sampled: bool,
    /// `None` for bands outside the regime, outside the grid, or without a floor.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    pub exponent: Option<f64>,
    pub stderr: Option<f64>,
    /// `"bands"` or `"half_octave"`.
    pub source: String,
    pub theoretical_exponent: Option<f64>,
    pub note: String,
}

/// Everything computed by a run, in memory.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub profile: GrowthProfile,
    pub atomization: Atomization,
    pub field: Option<ErrorField>,
    pub measured_c: Option<f64>,
    pub budget_c: Option<f64>,
    pub scan: Option<ScanResult>,
    pub beyond_5c_nonadjacent: Option<usize>,
    pub cover: Option<DiskCover>,
    pub cap_violation: Option<(usize, String)>,
    pub bands: Vec<BandRow>,
    pub fit: Option<FitInfo>,
    pub lemmas: Option<LemmaSection>,
    pub unatomized_mass: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub report: Value,
    /// Artifact name → sha256.
    pub checksums: BTreeMap<String, String>,
    pub analysis: Analysis,
}

fn stage_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(msg) if msg.contains("safe evaluation radius") => Error::Config { field: "grid".into(), reason: msg },
        other => other,
    }
}

/// Radius of the sample disks used to cover flagged samples, times √2.
pub fn cell_size(grid: &Grid) -> f64 {
    let (a, b) = grid.spacing();
    match *grid {
        Grid::Polar { r_hi, .. } => a.max(r_hi * b),
        Grid::Cartesian { .. } => a.max(b),
    }
}

/// Smallest and largest |z| reached by the grid region.
pub fn radial_range(grid: &Grid) -> (f64, f64) {
    match *grid {
        Grid::Polar { r_lo, r_hi, .. } => (r_lo, r_hi),
        Grid::Cartesian { x_lo, x_hi, y_lo, y_hi, .. } => {
            let dx = if x_lo > 0.0 { x_lo } else if x_hi < 0.0 { -x_hi } else { 0.0 };
            let dy = if y_lo > 0.0 { y_lo } else if y_hi < 0.0 { -y_hi } else { 0.0 };
            (dx.hypot(dy), grid.max_modulus())
        }
    }
}

struct Writer<'a> {
    dir: &'a Path,
    checksums: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.checksums.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

/// Full pipeline including the lemma batteries.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    run_until(cfg, out_dir, Stage::Run)
}

/// Runs the pipeline through `stage` and writes its artifacts to `out_dir`.
pub fn run_until(cfg: &ExperimentConfig, out_dir: &Path, stage: Stage) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut w = Writer { dir: out_dir, checksums: BTreeMap::new() };
    let profile = cfg.growth_profile()?;
    let atomization = atomize(&profile, cfg.atomize.r_max)?;
    w.put("cells.csv", atomization.cells_csv().as_bytes())?;
    let mut an = Analysis {
        profile,
        unatomized_mass: unatomized_mass(&profile, cfg.atomize.r_max).unwrap_or(f64::NAN),
        atomization,
        field: None,
        measured_c: None,
        budget_c: None,
        scan: None,
        beyond_5c_nonadjacent: None,
        cover: None,
        cap_violation: None,
        bands: Vec::new(),
        fit: None,
        lemmas: None,
    };
    let mut status = RunStatus::Pass;

    if stage >= Stage::Field {
        let opts = FieldOptions { adjacency_fraction: cfg.budget.adjacency_fraction, tail_mass: an.unatomized_mass };
        let field = error_field(&an.atomization, &cfg.grid, &opts).map_err(stage_err)?;
        w.put("field.bin", &field.to_bytes())?;
        if stage == Stage::Field {
            w.put("field.csv", field.to_csv().as_bytes())?;
        }
        an.field = Some(field);
    }

    if stage >= Stage::Scan {
        let field = an.field.as_ref().expect("field stage ran");
        let measured = measured_budget_constant(field, cfg.budget.kind, &profile, cfg.budget.quantile)?;
        let c = cfg.budget_constant()?.unwrap_or(measured);
        let budget = cfg.budget(c)?;
        let scan = scan_bad_set(field, &budget, &profile)?;
        an.beyond_5c_nonadjacent = Some(
            scan.flags
                .iter()
                .filter(|f| !f.atom_adjacent)
                .filter(|f| budget.kind.scale(&profile, f.z).is_some_and(|s| f.e.abs() > 5.0 * c * s))
                .count(),
        );
        if stage == Stage::Scan {
            let mut csv = String::from("re,im,e,atom_adjacent\n");
            for f in &scan.flags {
                csv.push_str(&format!("{},{},{},{}\n", fmt_f64(f.z.re), fmt_f64(f.z.im), fmt_f64(f.e), u8::from(f.atom_adjacent)));
            }
            w.put("flags.csv", csv.as_bytes())?;
        }
        an.measured_c = Some(measured);
        an.budget_c = Some(c);
        an.scan = Some(scan);
    }

    if stage >= Stage::Cover {
        let scan = an.scan.as_ref().expect("scan stage ran");
        match cover_bad_set(&scan.flags, cfg.cap_rule()?, &profile, cell_size(&cfg.grid)) {
            Ok(cover) => {
                w.put("cover.csv", cover.to_csv().as_bytes())?;
                an.cover = Some(cover);
            }
            Err(Error::CapViolation { count, first }) => {
                an.cap_violation = Some((count, first));
                status = RunStatus::CapViolation;
            }
            Err(e) => return Err(e),
        }
    }

    if stage >= Stage::Report {
        if let Some(cover) = &an.cover {
            let c = an.budget_c.expect("scan stage ran");
            an.bands = band_rows(cfg, &profile, cover, c)?;
            an.fit = Some(fit_info(cfg, &profile, cover, &an.bands, c));
            let mut csv = String::from("band_lo,band_hi,sum_radii,disk_count,floor,pass\n");
            for b in &an.bands {
                let floor = b.floor.map_or("na".to_string(), fmt_f64);
                let pass = b.pass.map_or("na", |p| if p { "true" } else { "false" });
                csv.push_str(&format!("{},{},{},{},{},{}\n", fmt_f64(b.band.lo), fmt_f64(b.band.hi), fmt_f64(b.sum_radii), b.disk_count, floor, pass));
            }
            w.put("bands.csv", csv.as_bytes())?;
            if an.bands.iter().any(|b| b.pass == Some(false)) {
                status = RunStatus::AnalysisFailure;
            }
        }
    }

    if stage >= Stage::Run {
        if let Some(block) = &cfg.lemmas {
            let section = lemma_suite(block, cfg.lemma_delta(), cfg.seed);
            if !section.all_pass() && status == RunStatus::Pass {
                status = RunStatus::AnalysisFailure;
            }
            an.lemmas = Some(section);
        }
    }

    let report = build_report(cfg, &an, status, stage, &w.checksums);
    write_atomic(&out_dir.join("report.json"), canonical_json(&report).as_bytes())?;
    Ok(RunOutcome { status, report, checksums: w.checksums, analysis: an })
}

/// Runs only the lemma batteries and writes `lemmas.json`.
pub fn run_lemmas(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(RunStatus, Value)> {
    let block = cfg.lemmas.clone().unwrap_or_default();
    let section = lemma_suite(&block, cfg.lemma_delta(), cfg.seed);
    let status = if section.all_pass() { RunStatus::Pass } else { RunStatus::AnalysisFailure };
    let value = json!({
        "status": status.name(),
        "lemmas": lemma_json(&section),
    });
    std::fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("lemmas.json"), canonical_json(&value).as_bytes())?;
    Ok((status, value))
}

fn band_rows(cfg: &ExperimentConfig, profile: &GrowthProfile, cover: &DiskCover, c: f64) -> Result<Vec<BandRow>> {
    let eps = cfg.budget.epsilon;
    let kind = cfg.budget.kind;
    let regime = cfg.regime_start();
    let sums = band_radius_sums(&cover.disks, &cfg.bands()?);
    let (grid_lo, grid_hi) = radial_range(&cfg.grid);
    let mut rows = Vec::new();
    for s in sums {
        let r = s.band.lo;
        let floor = theorem_floor(kind, profile, c, eps, r).ok();
        let mut alt = BTreeMap::new();
        match kind {
            BudgetKind::DiskFinite => {
                alt.insert("epsilon_zero".to_string(), theorem_floor(kind, profile, c, 0.0, r)?);
            }
            BudgetKind::DiskProfile => {
                alt.insert("three_epsilon".to_string(), profile_floor_with(profile, c, 3.0, eps, r)?);
                alt.insert("thirty_one_epsilon".to_string(), profile_floor_with(profile, c, 31.0, eps, r)?);
            }
            BudgetKind::PlaneInfinite | BudgetKind::DiskInfinite => {
                alt.insert("b_to_minus_epsilon".to_string(), infinite_order_reference(profile, eps, r)?);
            }
            _ => {}
        }
        let in_regime = r >= regime;
        let sampled = s.band.lo >= grid_lo * (1.0 - 1e-12) && s.band.hi <= grid_hi * (1.0 + 1e-12);
        let pass = match (in_regime && sampled, floor) {
            (true, Some(f)) => Some(s.sum_radii >= f),
            _ => None,
        };
        rows.push(BandRow { band: s.band, sum_radii: s.sum_radii, disk_count: s.count, floor, floor_alternates: alt, in_regime, sampled, pass });
    }
    Ok(rows)
}

/// Regression coordinate: `log R` in the plane, `log 1/(1 - R)` in the disk.
fn fit_x(domain: Domain, lo: f64) -> f64 {
    match domain {
        Domain::Plane => lo,
        Domain::UnitDisk => 1.0 / (1.0 - lo),
    }
}

fn fit_info(cfg: &ExperimentConfig, profile: &GrowthProfile, cover: &DiskCover, rows: &[BandRow], c: f64) -> FitInfo {
    let domain = profile.domain();
    let eps = cfg.budget.epsilon;
    let theoretical = match cfg.budget.kind {
        BudgetKind::PlaneFinite => profile.rho().map(|rho| 1.0 + rho / 2.0 - 2.0 * c - 3.0 * eps),
        BudgetKind::DiskFinite => profile.rho().map(|rho| rho / 2.0 - 2.0 * c - 3.0 * eps),
        _ => None,
    };
    let pts: Vec<(f64, f64)> = rows.iter().map(|b| (fit_x(domain, b.band.lo), b.sum_radii)).collect();
    if let Ok((e, se)) = fit_scaling_exponent(&pts) {
        return FitInfo { exponent: Some(e), stderr: Some(se), source: "bands".into(), theoretical_exponent: theoretical, note: String::new() };
    }
    // Too few configured bands: split the same range into half-octaves.
    let lo = rows.iter().map(|b| b.band.lo).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|b| b.band.hi).fold(f64::NEG_INFINITY, f64::max).min(cfg.grid.max_modulus());
    let mut aux = Vec::new();
    if lo.is_finite() && hi > lo {
        let kind = rows[0].band.kind;
        let mut a = lo;
        for _ in 0..64 {
            let b = match domain {
                Domain::Plane => a * std::f64::consts::SQRT_2,
                Domain::UnitDisk => 1.0 - (1.0 - a) / std::f64::consts::SQRT_2,
            };
            if b > hi * (1.0 + 1e-12) {
                break;
            }
            aux.push(AnnulusBand { lo: a, hi: b, kind });
            a = b;
        }
    }
    let pts: Vec<(f64, f64)> = band_radius_sums(&cover.disks, &aux).iter().map(|s| (fit_x(domain, s.band.lo), s.sum_radii)).collect();
    match fit_scaling_exponent(&pts) {
        Ok((e, se)) => FitInfo {
            exponent: Some(e),
            stderr: Some(se),
            source: "half_octave".into(),
            theoretical_exponent: theoretical,
            note: format!("{} half-octave bands", aux.len()),
        },
        Err(err) => FitInfo { exponent: None, stderr: None, source: "none".into(), theoretical_exponent: theoretical, note: err.to_string() },
    }
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

fn lemma_json(s: &LemmaSection) -> Value {
    json!({
        "checks": s.checks.iter().map(|c| json!({
            "name": c.name,
            "measured": c.measured,
            "bound": c.bound,
            "pass": c.pass,
            "detail": c.detail,
        })).collect::<Vec<_>>(),
        "lemma2_gaps": s.lemma2_gaps.iter().map(|g| json!({"rho": g.rho, "R": g.r, "gap": g.gap})).collect::<Vec<_>>(),
    })
}

fn build_report(cfg: &ExperimentConfig, an: &Analysis, status: RunStatus, stage: Stage, checksums: &BTreeMap<String, String>) -> Value {
    let a = &an.atomization;
    let field = an.field.as_ref().map_or(Value::Null, |f| {
        json!({
            "samples": f.values.len(),
            "atom_adjacent": f.atom_adjacent.iter().filter(|x| **x).count(),
            "nonfinite": f.values.iter().filter(|v| !v.is_finite()).count(),
            "truncation_note": f.truncation_note,
        })
    });
    let scan = an.scan.as_ref().map_or(Value::Null, |s| {
        json!({
            "flagged": s.flags.len(),
            "flagged_atom_adjacent": s.flags.iter().filter(|f| f.atom_adjacent).count(),
            "excluded": s.excluded,
            "beyond_5C_nonadjacent": an.beyond_5c_nonadjacent,
        })
    });
    let cover = if stage < Stage::Cover {
        Value::Null
    } else {
        json!({
            "disks": an.cover.as_ref().map(|c| c.disks.len()),
            "cap_rule": cfg.cap_rule().ok().map(|c| c.describe()),
            "cell_size": cell_size(&cfg.grid),
            "violation": an.cap_violation.as_ref().map(|(n, first)| json!({"count": n, "first": first})),
        })
    };
    let bands: Vec<Value> = an
        .bands
        .iter()
        .map(|b| {
            json!({
                "lo": b.band.lo,
                "hi": b.band.hi,
                "sum_radii": b.sum_radii,
                "disk_count": b.disk_count,
                "floor": opt(b.floor),
                "floor_alternates": b.floor_alternates,
                "in_regime": b.in_regime,
                "sampled": b.sampled,
                "pass": b.pass,
            })
        })
        .collect();
    let fit = an.fit.as_ref().map_or(Value::Null, |f| {
        json!({
            "exponent": opt(f.exponent),
            "stderr": opt(f.stderr),
            "source": f.source,
            "theoretical_exponent": opt(f.theoretical_exponent),
            "note": f.note,
        })
    });
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "status": status.name(),
        "stage": format!("{stage:?}").to_lowercase(),
        "config": serde_json::to_value(cfg).unwrap_or(Value::Null),
        "seed": cfg.seed,
        "atomization": {
            "cells": a.cells.len(),
            "rings": a.rings.len(),
            "total_mass": a.total_mass(),
            "outer_ring_width": a.outer_ring_width(),
            "safe_radius": safe_radius(a),
        },
        "tail": {
            "unatomized_mass": an.unatomized_mass,
            "note": "Riesz mass beyond r_max is not atomized; e(z) omits it",
        },
        "measured_C": opt(an.measured_c),
        "budget_C": opt(an.budget_c),
        "budget_kind": cfg.budget.kind,
        "epsilon": cfg.budget.epsilon,
        "field": field,
        "scan": scan,
        "cover": cover,
        "bands": bands,
        "fit": fit,
        "lemmas": an.lemmas.as_ref().map_or(Value::Null, lemma_json),
        "lemma_status": if an.lemmas.is_some() { "run" } else if cfg.lemmas.is_none() { "skipped: no [lemmas] block" } else { "skipped: stage" },
        "checksums": checksums,
    })
}

/// Writes `scaling.csv` (`log_lo,log_sum,log_floor`) and `lemma_gaps.csv`
/// (`R,gap`) from a report.
pub fn emit_plot_data(report: &Value, out_dir: &Path) -> Result<()> {
    let bands = report
        .get("bands")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InsufficientData("report has no band table".into()))?;
    let num = |v: &Value, key: &str| v.get(key).and_then(Value::as_f64);
    let mut scaling = String::from("log_lo,log_sum,log_floor\n");
    for b in bands {
        let lo = num(b, "lo").ok_or_else(|| Error::InsufficientData("band without lo".into()))?;
        let sum = num(b, "sum_radii").ok_or_else(|| Error::InsufficientData("band without sum_radii".into()))?;
        let log = |x: Option<f64>| x.filter(|v| *v > 0.0).map_or("na".to_string(), |v| fmt_f64(v.ln()));
        scaling.push_str(&format!("{},{},{}\n", fmt_f64(lo.ln()), log(Some(sum)), log(num(b, "floor"))));
    }
    let mut gaps = String::from("R,gap\n");
    if let Some(list) = report.pointer("/lemmas/lemma2_gaps").and_then(Value::as_array) {
        for g in list {
            if let (Some(r), Some(gap)) = (num(g, "R"), num(g, "gap")) {
                gaps.push_str(&format!("{},{}\n", fmt_f64(r), fmt_f64(gap)));
            }
        }
    }
    std::fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("scaling.csv"), scaling.as_bytes())?;
    write_atomic(&out_dir.join("lemma_gaps.csv"), gaps.as_bytes())?;
    Ok(())
}
