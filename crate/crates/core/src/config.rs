//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exceptional::{Budget, BudgetKind, CapRule};
use crate::potential::Grid;
use crate::profiles::{AnnulusBand, BandKind, Domain, GrowthProfile, ProfileKind};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "SUBHARM_OUTPUT_DIR";

pub const MIN_RESOLUTION: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub profile: ProfileBlock,
    pub atomize: AtomizeBlock,
    pub grid: Grid,
    pub budget: BudgetBlock,
    pub bands: BandsBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<LemmaBlock>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKindName {
    PlanePower,
    PlaneIteratedExp,
    DiskPowerSingularity,
    DiskRadial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainName {
    Plane,
    UnitDisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBlock {
    pub kind: ProfileKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomizeBlock {
    pub r_max: f64,
}

/// `C = "measured"` or a positive number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetConstant {
    Value(f64),
    Word(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetBlock {
    pub kind: BudgetKind,
    #[serde(rename = "C")]
    pub c: BudgetConstant,
    pub epsilon: f64,
    /// Quantile of `|e| / scale` defining the measured constant.
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    /// Atom adjacency radius in cell diameters.
    #[serde(default = "default_adjacency")]
    pub adjacency_fraction: f64,
}

fn default_quantile() -> f64 {
    0.99
}

fn default_adjacency() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsBlock {
    pub kind: BandKind,
    pub lo: Vec<f64>,
    /// Bands starting below this are reported but not judged; defaults to
    /// the smallest `lo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime_start: Option<f64>,
}

pub const ALL_CHECKS: [&str; 8] =
    ["lemma1", "lemma2", "green", "circle_mean", "poisson_jensen", "jensen", "borel_e", "borel_f"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaBlock {
    #[serde(default = "all_checks")]
    pub checks: Vec<String>,
    /// Allowed ratio of measured Lemma 1 gap to its bracket.
    #[serde(default = "d_gap_factor")]
    pub gap_factor: f64,
    /// Allowed max/min ratio of annulus gaps across R.
    #[serde(default = "d_uniformity")]
    pub uniformity_ratio: f64,
    #[serde(default = "d_green_tol")]
    pub green_tol: f64,
    #[serde(default = "d_flux_tol")]
    pub flux_tol: f64,
    #[serde(default = "d_mean_tol")]
    pub circle_mean_tol: f64,
    #[serde(default = "d_pj_tol")]
    pub poisson_jensen_tol: f64,
    #[serde(default = "d_jensen_tol")]
    pub jensen_tol: f64,
    /// Allowed relative change of the disk Borel measure under step halving.
    #[serde(default = "d_borel_stability")]
    pub borel_stability: f64,
    /// Boundary samples for circle means and Poisson integrals.
    #[serde(default = "d_m")]
    pub m: usize,
    /// Growth exponent for the Borel checks; defaults to `epsilon / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn all_checks() -> Vec<String> {
    ALL_CHECKS.iter().map(|s| s.to_string()).collect()
}
fn d_gap_factor() -> f64 {
    5.0
}
fn d_uniformity() -> f64 {
    10.0
}
fn d_green_tol() -> f64 {
    1e-9
}
fn d_flux_tol() -> f64 {
    1e-3
}
fn d_mean_tol() -> f64 {
    1e-10
}
fn d_pj_tol() -> f64 {
    1e-6
}
fn d_jensen_tol() -> f64 {
    1e-6
}
fn d_borel_stability() -> f64 {
    0.05
}
fn d_m() -> usize {
    2048
}

impl Default for LemmaBlock {
    fn default() -> Self {
        toml::from_str("").expect("all lemma fields have defaults")
    }
}

fn cfg_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config { field: field.into(), reason: reason.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| cfg_err("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| self.output_dir.clone())
    }

    pub fn growth_profile(&self) -> Result<GrowthProfile> {
        let p = &self.profile;
        let rho = || p.rho.ok_or_else(|| cfg_err("profile.rho", "required for this kind"));
        let k = || p.k.ok_or_else(|| cfg_err("profile.k", "required for this kind"));
        let built = match p.kind {
            ProfileKindName::PlanePower => GrowthProfile::plane_power(rho()?),
            ProfileKindName::PlaneIteratedExp => GrowthProfile::plane_iterated_exp(k()?),
            ProfileKindName::DiskPowerSingularity => GrowthProfile::disk_power_singularity(rho()?),
            ProfileKindName::DiskRadial => GrowthProfile::disk_radial(k()?),
        };
        built.map_err(|e| cfg_err("profile", e.to_string()))
    }

    pub fn budget_constant(&self) -> Result<Option<f64>> {
        match &self.budget.c {
            BudgetConstant::Value(v) if *v > 0.0 && v.is_finite() => Ok(Some(*v)),
            BudgetConstant::Value(v) => Err(cfg_err("budget.C", format!("must be positive, got {v}"))),
            BudgetConstant::Word(w) if w == "measured" => Ok(None),
            BudgetConstant::Word(w) => Err(cfg_err("budget.C", format!("expected a number or \"measured\", got {w:?}"))),
        }
    }

    pub fn budget(&self, c: f64) -> Result<Budget> {
        Budget::new(self.budget.kind, c, self.budget.epsilon)
    }

    pub fn bands(&self) -> Result<Vec<AnnulusBand>> {
        let profile = self.growth_profile()?;
        let mut bands = Vec::new();
        for &lo in &self.bands.lo {
            bands.push(AnnulusBand::new(self.bands.kind, lo, Some(&profile)).map_err(|e| cfg_err("bands.lo", e.to_string()))?);
        }
        bands.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if bands.windows(2).any(|w| w[1].lo < w[0].hi) {
            return Err(cfg_err("bands.lo", "bands overlap"));
        }
        Ok(bands)
    }

    pub fn regime_start(&self) -> f64 {
        self.bands.regime_start.unwrap_or_else(|| self.bands.lo.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Cover cap matching the budget's theorem.
    pub fn cap_rule(&self) -> Result<CapRule> {
        let eps = self.budget.epsilon;
        let profile = self.growth_profile()?;
        Ok(match self.budget.kind {
            BudgetKind::PlaneFinite => CapRule::PlaneFiniteCap { rho: profile.rho().unwrap_or(f64::NAN), epsilon: eps },
            BudgetKind::PlaneProfile | BudgetKind::PlaneInfinite => CapRule::ProfileCapPlane { epsilon: eps },
            BudgetKind::DiskFinite => CapRule::DiskFiniteCap { rho: profile.rho().unwrap_or(f64::NAN) },
            BudgetKind::DiskProfile | BudgetKind::DiskInfinite => CapRule::ProfileCapDisk { epsilon: eps },
        })
    }

    pub fn lemma_delta(&self) -> f64 {
        self.lemmas.as_ref().and_then(|l| l.delta).unwrap_or(self.budget.epsilon / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let profile = self.growth_profile()?;
        let domain = profile.domain();
        if let Some(d) = self.profile.domain {
            let want = match d {
                DomainName::Plane => Domain::Plane,
                DomainName::UnitDisk => Domain::UnitDisk,
            };
            if want != domain {
                return Err(cfg_err("profile.domain, profile.kind", format!("{d:?} does not match {:?}", self.profile.kind)));
            }
        }
        if self.bands.kind.domain() != domain {
            return Err(cfg_err(
                "profile.kind, bands.kind",
                format!("{:?} profile cannot use {:?} bands", self.profile.kind, self.bands.kind),
            ));
        }
        if self.budget.kind.domain() != domain {
            return Err(cfg_err(
                "profile.kind, budget.kind",
                format!("{:?} profile cannot use a {:?} budget", self.profile.kind, self.budget.kind),
            ));
        }
        self.budget.kind.check_profile(&profile).map_err(|_| {
            cfg_err("profile.kind, budget.kind", format!("{:?} does not apply to {:?}", self.budget.kind, self.profile.kind))
        })?;
        if !(self.budget.epsilon > 0.0 && self.budget.epsilon.is_finite()) {
            return Err(cfg_err("budget.epsilon", format!("must be positive, got {}", self.budget.epsilon)));
        }
        if !(self.budget.quantile > 0.0 && self.budget.quantile <= 1.0) {
            return Err(cfg_err("budget.quantile", "must lie in (0, 1]"));
        }
        if !(self.budget.adjacency_fraction > 0.0) {
            return Err(cfg_err("budget.adjacency_fraction", "must be positive"));
        }
        self.budget_constant()?;
        let r_max = self.atomize.r_max;
        if !(r_max > 0.0 && r_max.is_finite()) || (domain == Domain::UnitDisk && r_max >= 1.0) {
            return Err(cfg_err("atomize.r_max", format!("{r_max} is outside the profile's domain")));
        }
        self.grid.validate().map_err(|e| cfg_err("grid", e.to_string()))?;
        if self.grid.rows() < MIN_RESOLUTION || self.grid.cols() < MIN_RESOLUTION {
            return Err(cfg_err("grid", format!("resolution must be at least {MIN_RESOLUTION} in each direction")));
        }
        if domain == Domain::UnitDisk && self.grid.max_modulus() >= 1.0 {
            return Err(cfg_err("grid", "disk experiments need the grid inside |z| < 1"));
        }
        self.bands()?;
        if profile.kind() == ProfileKind::PlaneIteratedExp && r_max > 6.0 {
            return Err(cfg_err("atomize.r_max", "iterated-exponential mass overflows beyond r_max = 6"));
        }
        if let Some(l) = &self.lemmas {
            if let Some(bad) = l.checks.iter().find(|c| !ALL_CHECKS.contains(&c.as_str())) {
                return Err(cfg_err("lemmas.checks", format!("unknown check {bad:?}")));
            }
            if l.m < 16 {
                return Err(cfg_err("lemmas.m", "need at least 16 samples"));
            }
            if let Some(d) = l.delta {
                if !(d > 0.0) {
                    return Err(cfg_err("lemmas.delta", "must be positive"));
                }
            }
        }
        Ok(())
    }
}
