//! Optional TOML run configuration. Command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mdclock::catalog::{
    bundled, merge_catalog, parse_levels, parse_lines, CrossSectionTable, LineCatalog, MergePolicy,
    DEFAULT_WAVELENGTH_TOLERANCE,
};
use mdclock::BudgetConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub catalog: CatalogConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub spin: SpinConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    /// With `levels` unset the bundled tables are used.
    pub levels: Option<PathBuf>,
    pub lines_calculated: Option<PathBuf>,
    pub lines_experimental: Option<PathBuf>,
    pub cross_section_lower: Option<PathBuf>,
    pub cross_section_upper: Option<PathBuf>,
    pub policy: MergePolicy,
    pub continuum: bool,
    pub wavelength_tolerance: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        CatalogConfig {
            levels: None,
            lines_calculated: None,
            lines_experimental: None,
            cross_section_lower: None,
            cross_section_upper: None,
            policy: MergePolicy::CalculationFirst,
            continuum: true,
            wavelength_tolerance: DEFAULT_WAVELENGTH_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub intensity_kw_cm2: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { intensity_kw_cm2: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinConfig {
    pub spacing_nm: f64,
    pub threshold: f64,
    pub steps: usize,
    pub g_factor: f64,
}

impl Default for SpinConfig {
    fn default() -> Self {
        SpinConfig {
            spacing_nm: 400.0,
            threshold: mdclock::spin::DEFAULT_THRESHOLD,
            steps: 500,
            g_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.catalog;
        if c.levels.is_some() != c.lines_calculated.is_some() {
            bail!("catalog.levels and catalog.lines_calculated must be given together");
        }
        if c.levels.is_none() && c.lines_experimental.is_some() {
            bail!("catalog.lines_experimental needs catalog.levels");
        }
        if c.cross_section_lower.is_some() != c.cross_section_upper.is_some() {
            bail!("cross sections must be given for both clock levels");
        }
        if !(c.wavelength_tolerance > 0.0) {
            bail!("catalog.wavelength_tolerance must be positive");
        }
        if !(self.lattice.intensity_kw_cm2 >= 0.0) {
            bail!("lattice.intensity_kw_cm2 must be non-negative");
        }
        if !(self.spin.spacing_nm > 0.0) {
            bail!("spin.spacing_nm must be positive");
        }
        if !(self.spin.threshold > 0.0 && self.spin.threshold < 1.0) {
            bail!("spin.threshold must lie in (0, 1)");
        }
        if !self.spin.g_factor.is_finite() {
            bail!("spin.g_factor must be finite");
        }
        if self.spin.steps == 0 {
            bail!("spin.steps must be at least 1");
        }
        self.budget.validate()?;
        Ok(())
    }
}

/// One input file (or bundled table) with its digest.
#[derive(Debug, Clone, Serialize)]
pub struct Source {
    pub name: String,
    pub origin: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn read(name: &str, path: &Path, sources: &mut Vec<Source>) -> Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {name} {}", path.display()))?;
    sources.push(Source {
        name: name.into(),
        origin: path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
    });
    Ok(text)
}

fn builtin(name: &str, text: &'static str, sources: &mut Vec<Source>) -> &'static str {
    sources.push(Source {
        name: name.into(),
        origin: "bundled".into(),
        sha256: sha256_hex(text.as_bytes()),
    });
    text
}

/// Merged catalog, optional (lower, upper) cross sections, and the provenance of every input.
pub struct LoadedCatalog {
    pub catalog: LineCatalog,
    pub continuum: Option<(CrossSectionTable, CrossSectionTable)>,
    pub sources: Vec<Source>,
}

impl LoadedCatalog {
    pub fn continuum_refs(&self) -> Option<(&CrossSectionTable, &CrossSectionTable)> {
        self.continuum.as_ref().map(|(a, b)| (a, b))
    }
}

pub fn load_catalog(c: &CatalogConfig) -> Result<LoadedCatalog> {
    let mut sources = Vec::new();
    let (levels_text, calc_text, exp_text) = match (&c.levels, &c.lines_calculated) {
        (Some(l), Some(k)) => {
            let levels = read("levels", l, &mut sources)?;
            let calc = read("lines_calculated", k, &mut sources)?;
            let exp = match &c.lines_experimental {
                Some(e) => Some(read("lines_experimental", e, &mut sources)?),
                None => None,
            };
            (levels, calc, exp)
        }
        _ => (
            builtin("levels", bundled::LEVELS, &mut sources).to_string(),
            builtin("lines_calculated", bundled::LINES_CALCULATED, &mut sources).to_string(),
            Some(builtin("lines_experimental", bundled::LINES_EXPERIMENTAL, &mut sources).to_string()),
        ),
    };
    let levels = parse_levels(&levels_text).context("levels table")?;
    let calc = parse_lines(&calc_text, &levels, c.wavelength_tolerance).context("calculated lines")?;
    let exp = match exp_text {
        Some(t) => parse_lines(&t, &levels, c.wavelength_tolerance).context("experimental lines")?,
        None => Vec::new(),
    };
    let catalog = merge_catalog(levels, calc, &exp, c.policy).context("merging line lists")?;

    let continuum = if !c.continuum {
        None
    } else {
        match (&c.cross_section_lower, &c.cross_section_upper) {
            (Some(lo), Some(up)) => {
                let a = read("cross_section_lower", lo, &mut sources)?;
                let b = read("cross_section_upper", up, &mut sources)?;
                Some((
                    CrossSectionTable::parse(&a, None).context("lower cross section")?,
                    CrossSectionTable::parse(&b, None).context("upper cross section")?,
                ))
            }
            _ if c.levels.is_none() => {
                builtin("cross_section_lower", bundled::CROSS_SECTION_J7_2, &mut sources);
                builtin("cross_section_upper", bundled::CROSS_SECTION_J5_2, &mut sources);
                Some((bundled::cross_section_lower()?, bundled::cross_section_upper()?))
            }
            _ => None,
        }
    };
    Ok(LoadedCatalog {
        catalog,
        continuum,
        sources,
    })
}
