//! Level and line data: parsing, validation and merging of calculated and
//! experimental line lists into an immutable [`LineCatalog`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angular::HalfInt;
use crate::scalar::Real;
use crate::units::{self, C_AU};

/// Default relative tolerance between a stored wavelength and the one implied by level energies.
pub const DEFAULT_WAVELENGTH_TOLERANCE: f64 = 5e-3;
/// Relative wavelength window used when pairing calculated and experimental lines.
pub const MATCH_TOLERANCE: f64 = 1e-2;
/// Calculated rates below this value are replaced by an experimental rate when one exists.
pub const WEAK_RATE_THRESHOLD: f64 = 1e5;
/// Lines above this wavelength are identified with experimental data.
pub const IDENTIFICATION_LIMIT_NM: f64 = 500.0;
pub const DEFAULT_WINDOW_NM: (f64, f64) = (250.0, 1200.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate level id `{0}`")]
    DuplicateLevel(String),
    #[error("line {line}: unknown level `{id}`")]
    DanglingReference { line: u64, id: String },
    #[error("line {line}: rate must be positive, got {rate}")]
    NonPositiveRate { line: u64, rate: f64 },
    #[error("line {line}: {upper} -> {lower} is not a downward transition")]
    NotDownward { line: u64, upper: String, lower: String },
    #[error(
        "line {line}: wavelength {lambda_nm} nm disagrees with level energies ({expected_nm:.4} nm) beyond {tolerance}"
    )]
    InconsistentWavelength {
        line: u64,
        lambda_nm: f64,
        expected_nm: f64,
        tolerance: f64,
    },
    #[error("ambiguous match for {what}: candidates at {candidates:?} nm")]
    AmbiguousMatch { what: String, candidates: Vec<f64> },
    #[error("duplicate line {0} -> {1}")]
    DuplicatePair(String, String),
    #[error("unknown level `{0}`")]
    UnknownLevel(String),
    #[error("cross-section table: {0}")]
    CrossSection(String),
    #[error("transition frequency must be positive")]
    NonPositiveFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Experimental,
    Calculated,
}

impl FromStr for Parity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "odd" | "o" => Ok(Parity::Odd),
            "even" | "e" => Ok(Parity::Even),
            other => Err(format!("unknown parity `{other}`")),
        }
    }
}

impl FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp" | "experimental" => Ok(Source::Experimental),
            "calc" | "calculated" | "theory" => Ok(Source::Calculated),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Experimental => "exp",
            Source::Calculated => "calc",
        })
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Odd => "odd",
            Parity::Even => "even",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Level {
    pub id: String,
    pub energy_cm1: f64,
    pub two_j: u32,
    pub parity: Parity,
    pub config: String,
    pub source: Source,
    pub hyperfine_a_mhz: Option<f64>,
    pub g_j: Option<f64>,
}

impl Level {
    pub fn j(&self) -> HalfInt {
        HalfInt::from_twice(self.two_j as i32)
    }

    pub fn energy_au<T: Real>(&self) -> T {
        units::wavenumber_to_omega_au(self.energy_cm1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionLine {
    pub upper_id: String,
    pub lower_id: String,
    /// Vacuum wavelength in nm.
    pub lambda_nm: f64,
    /// Einstein A coefficient in s^-1.
    pub rate: f64,
    pub source: Source,
    /// Sign of the reduced dipole matrix element.
    pub sign: i8,
}

impl TransitionLine {
    pub fn omega_au<T: Real>(&self) -> T {
        units::wavelength_nm_to_omega_au(T::lit(self.lambda_nm))
    }

    pub fn touches(&self, id: &str) -> bool {
        self.upper_id == id || self.lower_id == id
    }

    /// The level on the other end of the line, if `id` is one end.
    pub fn partner(&self, id: &str) -> Option<&str> {
        if self.lower_id == id {
            Some(&self.upper_id)
        } else if self.upper_id == id {
            Some(&self.lower_id)
        } else {
            None
        }
    }
}

/// Levels indexed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelSet {
    levels: Vec<Level>,
    index: HashMap<String, usize>,
}

impl LevelSet {
    pub fn new(levels: Vec<Level>) -> Result<Self, CatalogError> {
        let mut index = HashMap::with_capacity(levels.len());
        for (i, l) in levels.iter().enumerate() {
            if index.insert(l.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateLevel(l.id.clone()));
            }
        }
        Ok(LevelSet { levels, index })
    }

    pub fn get(&self, id: &str) -> Option<&Level> {
        self.index.get(id).map(|&i| &self.levels[i])
    }

    pub fn require(&self, id: &str) -> Result<&Level, CatalogError> {
        self.get(id).ok_or_else(|| CatalogError::UnknownLevel(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Level> {
        self.levels.iter()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Wavelength in nm implied by the energy difference of two levels.
    pub fn implied_wavelength_nm(&self, upper: &str, lower: &str) -> Option<f64> {
        let du = self.get(upper)?.energy_cm1 - self.get(lower)?.energy_cm1;
        (du > 0.0).then(|| 1e7 / du)
    }
}

#[derive(Debug, Deserialize)]
struct LevelRow {
    id: String,
    energy_cm1: f64,
    #[serde(rename = "two_J")]
    two_j: i64,
    parity: String,
    config: String,
    source: String,
    hfs_a_mhz: Option<f64>,
    #[serde(rename = "gJ")]
    g_j: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct LineRow {
    upper_id: String,
    lower_id: String,
    lambda_nm: f64,
    #[serde(rename = "A_per_s")]
    rate: f64,
    source: String,
    sign: Option<i64>,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn normalized_headers(rdr: &mut csv::Reader<&[u8]>) -> Result<csv::StringRecord, CatalogError> {
    let headers = rdr.headers().map_err(|e| CatalogError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    // `hfs_A_MHz` is the only header with mixed case that serde cannot rename cleanly twice
    Ok(headers
        .iter()
        .map(|h| if h == "hfs_A_MHz" { "hfs_a_mhz" } else { h })
        .collect())
}

fn csv_line(err: &csv::Error, fallback: u64) -> u64 {
    err.position().map(|p| p.line()).unwrap_or(fallback)
}

/// Parses a levels table with header `id,energy_cm1,two_J,parity,config,source[,hfs_A_MHz,gJ]`.
pub fn parse_levels(text: &str) -> Result<LevelSet, CatalogError> {
    let mut rdr = reader(text);
    let headers = normalized_headers(&mut rdr)?;
    let mut levels = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CatalogError::Parse {
            line: csv_line(&e, 0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: LevelRow = rec.deserialize(Some(&headers)).map_err(|e| CatalogError::Parse {
            line,
            message: e.to_string(),
        })?;
        let bad = |message: String| CatalogError::Parse { line, message };
        if !row.energy_cm1.is_finite() || row.energy_cm1 < 0.0 {
            return Err(bad(format!("energy must be finite and non-negative, got {}", row.energy_cm1)));
        }
        if row.two_j < 0 || row.two_j > 200 {
            return Err(bad(format!("two_J must be a small non-negative integer, got {}", row.two_j)));
        }
        if row.id.is_empty() {
            return Err(bad("empty level id".into()));
        }
        if !seen.insert(row.id.clone()) {
            return Err(CatalogError::DuplicateLevel(row.id));
        }
        levels.push(Level {
            id: row.id,
            energy_cm1: row.energy_cm1,
            two_j: row.two_j as u32,
            parity: row.parity.parse().map_err(bad)?,
            config: row.config,
            source: row.source.parse().map_err(bad)?,
            hyperfine_a_mhz: row.hfs_a_mhz,
            g_j: row.g_j,
        });
    }
    LevelSet::new(levels)
}

/// Parses a lines table with header `upper_id,lower_id,lambda_nm,A_per_s,source,sign`.
///
/// `tolerance` is the allowed relative disagreement between the stored wavelength
/// and the level energies.
pub fn parse_lines(
    text: &str,
    levels: &LevelSet,
    tolerance: f64,
) -> Result<Vec<TransitionLine>, CatalogError> {
    let mut rdr = reader(text);
    let headers = normalized_headers(&mut rdr)?;
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CatalogError::Parse {
            line: csv_line(&e, 0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: LineRow = rec.deserialize(Some(&headers)).map_err(|e| CatalogError::Parse {
            line,
            message: e.to_string(),
        })?;
        for id in [&row.upper_id, &row.lower_id] {
            if levels.get(id).is_none() {
                return Err(CatalogError::DanglingReference {
                    line,
                    id: id.clone(),
                });
            }
        }
        if !(row.rate > 0.0) || !row.rate.is_finite() {
            return Err(CatalogError::NonPositiveRate { line, rate: row.rate });
        }
        if !(row.lambda_nm > 0.0) || !row.lambda_nm.is_finite() {
            return Err(CatalogError::Parse {
                line,
                message: format!("wavelength must be positive, got {}", row.lambda_nm),
            });
        }
        let expected_nm = levels
            .implied_wavelength_nm(&row.upper_id, &row.lower_id)
            .ok_or_else(|| CatalogError::NotDownward {
                line,
                upper: row.upper_id.clone(),
                lower: row.lower_id.clone(),
            })?;
        if ((row.lambda_nm - expected_nm) / expected_nm).abs() > tolerance {
            return Err(CatalogError::InconsistentWavelength {
                line,
                lambda_nm: row.lambda_nm,
                expected_nm,
                tolerance,
            });
        }
        let sign = match row.sign.unwrap_or(1) {
            1 => 1,
            -1 => -1,
            s => {
                return Err(CatalogError::Parse {
                    line,
                    message: format!("sign must be +1 or -1, got {s}"),
                })
            }
        };
        lines.push(TransitionLine {
            upper_id: row.upper_id,
            lower_id: row.lower_id,
            lambda_nm: row.lambda_nm,
            rate: row.rate,
            source: row.source.parse().map_err(|m| CatalogError::Parse { line, message: m })?,
            sign,
        });
    }
    Ok(lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MergePolicy {
    /// Calculated lines with wavelengths (and weak rates) corrected from experiment.
    #[default]
    CalculationFirst,
    /// Experimental lines above the identification limit, calculated ones below.
    Combined,
}

impl FromStr for MergePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "calculation-first" | "calc-first" => Ok(MergePolicy::CalculationFirst),
            "combined" => Ok(MergePolicy::Combined),
            other => Err(format!("unknown merge policy `{other}`")),
        }
    }
}

impl fmt::Display for MergePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergePolicy::CalculationFirst => "calculation-first",
            MergePolicy::Combined => "combined",
        })
    }
}

/// Validated, immutable set of levels and lines.
#[derive(Debug, Clone, PartialEq)]
pub struct LineCatalog {
    levels: LevelSet,
    lines: Vec<TransitionLine>,
    policy: MergePolicy,
    window_nm: (f64, f64),
    warnings: Vec<String>,
}

impl LineCatalog {
    /// Builds a catalog from already validated lines, checking uniqueness of pairs.
    pub fn new(
        levels: LevelSet,
        lines: Vec<TransitionLine>,
        policy: MergePolicy,
    ) -> Result<Self, CatalogError> {
        let mut pairs = HashSet::new();
        for l in &lines {
            levels.require(&l.upper_id)?;
            levels.require(&l.lower_id)?;
            if !pairs.insert((l.upper_id.clone(), l.lower_id.clone())) {
                return Err(CatalogError::DuplicatePair(l.upper_id.clone(), l.lower_id.clone()));
            }
        }
        let mut cat = LineCatalog {
            levels,
            lines,
            policy,
            window_nm: DEFAULT_WINDOW_NM,
            warnings: Vec::new(),
        };
        cat.check_window();
        Ok(cat)
    }

    /// Catalog with levels only.
    pub fn empty(levels: LevelSet) -> Self {
        LineCatalog {
            levels,
            lines: Vec::new(),
            policy: MergePolicy::default(),
            window_nm: DEFAULT_WINDOW_NM,
            warnings: Vec::new(),
        }
    }

    fn check_window(&mut self) {
        let (lo, hi) = self.window_nm;
        let outside: Vec<String> = self
            .lines
            .iter()
            .filter(|l| l.lambda_nm < lo || l.lambda_nm > hi)
            .map(|l| {
                format!(
                    "{} -> {} at {} nm lies outside the {lo}-{hi} nm window",
                    l.upper_id, l.lower_id, l.lambda_nm
                )
            })
            .collect();
        for w in outside {
            self.warn(w);
        }
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    pub fn lines(&self) -> &[TransitionLine] {
        &self.lines
    }

    pub fn policy(&self) -> MergePolicy {
        self.policy
    }

    pub fn window_nm(&self) -> (f64, f64) {
        self.window_nm
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn level(&self, id: &str) -> Result<&Level, CatalogError> {
        self.levels.require(id)
    }

    pub fn lines_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a TransitionLine> + 'a {
        self.lines.iter().filter(move |l| l.touches(id))
    }

    /// Copy keeping only the lines accepted by `keep`.
    pub fn restricted(&self, keep: impl Fn(&TransitionLine) -> bool) -> Self {
        LineCatalog {
            levels: self.levels.clone(),
            lines: self.lines.iter().filter(|l| keep(l)).cloned().collect(),
            policy: self.policy,
            window_nm: self.window_nm,
            warnings: self.warnings.clone(),
        }
    }

    /// Sum of A coefficients out of a level.
    pub fn total_decay_rate(&self, id: &str) -> f64 {
        self.lines.iter().filter(|l| l.upper_id == id).map(|l| l.rate).sum()
    }

    /// Bundled thulium catalog.
    pub fn bundled(policy: MergePolicy) -> Result<Self, CatalogError> {
        let levels = parse_levels(bundled::LEVELS)?;
        let calc = parse_lines(bundled::LINES_CALCULATED, &levels, DEFAULT_WAVELENGTH_TOLERANCE)?;
        let exp = parse_lines(bundled::LINES_EXPERIMENTAL, &levels, DEFAULT_WAVELENGTH_TOLERANCE)?;
        merge_catalog(levels, calc, &exp, policy)
    }
}

fn j_pair(levels: &LevelSet, l: &TransitionLine) -> (u32, u32) {
    let ju = levels.get(&l.upper_id).map(|x| x.two_j).unwrap_or(u32::MAX);
    let jd = levels.get(&l.lower_id).map(|x| x.two_j).unwrap_or(u32::MAX);
    (ju, jd)
}

fn within(a: f64, b: f64, rel: f64) -> bool {
    ((a - b) / b).abs() <= rel
}

/// Pairs each calculated line with at most one experimental line.
fn match_lines(
    levels: &LevelSet,
    calculated: &[TransitionLine],
    experimental: &[TransitionLine],
) -> Result<Vec<Option<usize>>, CatalogError> {
    let mut matches = vec![None; calculated.len()];
    let mut claimed: HashMap<usize, usize> = HashMap::new();
    for (ci, c) in calculated.iter().enumerate() {
        let key = j_pair(levels, c);
        let candidates: Vec<usize> = experimental
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                e.lambda_nm > IDENTIFICATION_LIMIT_NM
                    && j_pair(levels, e) == key
                    && within(c.lambda_nm, e.lambda_nm, MATCH_TOLERANCE)
            })
            .map(|(i, _)| i)
            .collect();
        match candidates.as_slice() {
            [] => {}
            [ei] => {
                if let Some(&other) = claimed.get(ei) {
                    return Err(CatalogError::AmbiguousMatch {
                        what: format!(
                            "experimental {} -> {} at {} nm",
                            experimental[*ei].upper_id, experimental[*ei].lower_id, experimental[*ei].lambda_nm
                        ),
                        candidates: vec![calculated[other].lambda_nm, c.lambda_nm],
                    });
                }
                claimed.insert(*ei, ci);
                matches[ci] = Some(*ei);
            }
            many => {
                return Err(CatalogError::AmbiguousMatch {
                    what: format!("calculated {} -> {} at {} nm", c.upper_id, c.lower_id, c.lambda_nm),
                    candidates: many.iter().map(|&i| experimental[i].lambda_nm).collect(),
                })
            }
        }
    }
    Ok(matches)
}

/// Merges calculated and experimental line lists under `policy`.
///
/// Lines are paired when both endpoints have the same J values and the
/// wavelengths agree within [`MATCH_TOLERANCE`]. More than one candidate on
/// either side is an error.
pub fn merge_catalog(
    levels: LevelSet,
    calculated: Vec<TransitionLine>,
    experimental: &[TransitionLine],
    policy: MergePolicy,
) -> Result<LineCatalog, CatalogError> {
    let matches = match_lines(&levels, &calculated, experimental)?;
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(calculated.len() + experimental.len());
    let mut used = HashSet::new();

    for (c, m) in calculated.into_iter().zip(matches) {
        match (m, policy) {
            (Some(ei), MergePolicy::CalculationFirst) => {
                let e = &experimental[ei];
                used.insert(ei);
                let weak = c.rate < WEAK_RATE_THRESHOLD;
                out.push(TransitionLine {
                    upper_id: e.upper_id.clone(),
                    lower_id: e.lower_id.clone(),
                    lambda_nm: e.lambda_nm,
                    rate: if weak { e.rate } else { c.rate },
                    source: if weak { e.source } else { c.source },
                    sign: c.sign,
                });
            }
            (Some(ei), MergePolicy::Combined) => {
                let e = &experimental[ei];
                used.insert(ei);
                out.push(TransitionLine { sign: c.sign, ..e.clone() });
            }
            (None, _) => {
                if c.source == Source::Calculated && c.rate < WEAK_RATE_THRESHOLD {
                    warnings.push(format!(
                        "{} -> {} at {} nm keeps its weak calculated rate {} s^-1 (no experimental rate)",
                        c.upper_id, c.lower_id, c.lambda_nm, c.rate
                    ));
                }
                out.push(c);
            }
        }
    }

    for (ei, e) in experimental.iter().enumerate() {
        if used.contains(&ei) {
            continue;
        }
        let already = out
            .iter()
            .any(|l| l.upper_id == e.upper_id && l.lower_id == e.lower_id);
        match policy {
            MergePolicy::Combined if e.lambda_nm > IDENTIFICATION_LIMIT_NM && !already => out.push(e.clone()),
            _ => warnings.push(format!(
                "experimental {} -> {} at {} nm has no calculated counterpart and is not used",
                e.upper_id, e.lower_id, e.lambda_nm
            )),
        }
    }

    let mut cat = LineCatalog::new(levels, out, policy)?;
    for w in warnings {
        cat.warn(w);
    }
    Ok(cat)
}

/// Reduced dipole matrix element ⟨u‖d‖l⟩ in atomic units, signed.
///
/// Inverts A = 4ω³|⟨u‖d‖l⟩|² / (3c³(2J_u+1)).
pub fn reduced_dipole_from_rate<T: Real>(
    line: &TransitionLine,
    levels: &LevelSet,
) -> Result<T, CatalogError> {
    let upper = levels.require(&line.upper_id)?;
    if !(line.rate > 0.0) {
        return Err(CatalogError::NonPositiveRate { line: 0, rate: line.rate });
    }
    if !(line.lambda_nm > 0.0) {
        return Err(CatalogError::NonPositiveFrequency);
    }
    let omega: T = line.omega_au();
    let d2 = reduced_dipole_squared(omega, units::rate_si_to_au(line.rate), upper.two_j);
    let d = d2.sqrt();
    Ok(if line.sign < 0 { -d } else { d })
}

/// |⟨u‖d‖l⟩|² for a rate and frequency in atomic units.
pub fn reduced_dipole_squared<T: Real>(omega: T, rate: T, two_j_upper: u32) -> T {
    let c = T::lit(C_AU);
    T::lit(3.0) * c * c * c * T::lit(f64::from(two_j_upper + 1)) * rate
        / (T::lit(4.0) * omega * omega * omega)
}

/// Einstein A in s^-1 from a reduced matrix element in atomic units.
pub fn rate_from_reduced_dipole<T: Real>(d: T, omega: T, two_j_upper: u32) -> T {
    let c = T::lit(C_AU);
    let a_au = T::lit(4.0) * omega * omega * omega * d * d
        / (T::lit(3.0) * c * c * c * T::lit(f64::from(two_j_upper + 1)));
    a_au / T::lit(units::AU_TIME)
}

/// Photoionization cross section of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionTable {
    /// Photon energy in eV, strictly increasing.
    pub energy_ev: Vec<f64>,
    /// Cross section in Mb.
    pub sigma_mb: Vec<f64>,
    /// Ionization threshold of the level in eV.
    pub threshold_ev: f64,
}

impl CrossSectionTable {
    pub fn new(energy_ev: Vec<f64>, sigma_mb: Vec<f64>, threshold_ev: f64) -> Result<Self, CatalogError> {
        let err = |m: String| Err(CatalogError::CrossSection(m));
        if energy_ev.len() != sigma_mb.len() {
            return err("energy and sigma columns differ in length".into());
        }
        if energy_ev.windows(2).any(|w| !(w[1] > w[0])) {
            return err("photon energies must be strictly increasing".into());
        }
        if sigma_mb.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return err("cross sections must be finite and non-negative".into());
        }
        if let Some(&first) = energy_ev.first() {
            if first < threshold_ev {
                return err(format!("first energy {first} eV lies below the threshold {threshold_ev} eV"));
            }
        }
        Ok(CrossSectionTable {
            energy_ev,
            sigma_mb,
            threshold_ev,
        })
    }

    /// Parses `photon_eV,sigma_Mb`. The threshold defaults to the first energy.
    pub fn parse(text: &str, threshold_ev: Option<f64>) -> Result<Self, CatalogError> {
        #[derive(Deserialize)]
        struct Row {
            #[serde(rename = "photon_eV")]
            e: f64,
            #[serde(rename = "sigma_Mb")]
            s: f64,
        }
        let mut rdr = reader(text);
        let (mut e, mut s) = (Vec::new(), Vec::new());
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|err| CatalogError::Parse {
                line: csv_line(&err, 0),
                message: err.to_string(),
            })?;
            e.push(row.e);
            s.push(row.s);
        }
        let thr = threshold_ev.or_else(|| e.first().copied()).unwrap_or(0.0);
        Self::new(e, s, thr)
    }

    pub fn len(&self) -> usize {
        self.energy_ev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy_ev.is_empty()
    }

    /// Linear interpolation on the table, zero outside it.
    pub fn sigma_at(&self, e: f64) -> f64 {
        let n = self.energy_ev.len();
        if n == 0 || e < self.energy_ev[0] || e > self.energy_ev[n - 1] {
            return 0.0;
        }
        let k = self.energy_ev.partition_point(|&x| x <= e).min(n - 1).max(1);
        let (e0, e1) = (self.energy_ev[k - 1], self.energy_ev[k]);
        let (s0, s1) = (self.sigma_mb[k - 1], self.sigma_mb[k]);
        s0 + (s1 - s0) * (e - e0) / (e1 - e0)
    }
}

/// Bundled thulium data files.
pub mod bundled {
    use super::{CatalogError, CrossSectionTable};

    pub const LEVELS: &str = include_str!("../data/levels.csv");
    pub const LINES_CALCULATED: &str = include_str!("../data/lines_calculated.csv");
    pub const LINES_EXPERIMENTAL: &str = include_str!("../data/lines_experimental.csv");
    pub const CROSS_SECTION_J7_2: &str = include_str!("../data/cross_section_j7_2.csv");
    pub const CROSS_SECTION_J5_2: &str = include_str!("../data/cross_section_j5_2.csv");

    /// Lower clock level, 4f13 6s2 J=7/2.
    pub const LOWER_CLOCK: &str = "g7";
    /// Upper clock level, 4f13 6s2 J=5/2.
    pub const UPPER_CLOCK: &str = "g5";
    /// Nuclear spin of 169Tm.
    pub const NUCLEAR_SPIN_TWICE: i32 = 1;

    pub fn cross_section_lower() -> Result<CrossSectionTable, CatalogError> {
        CrossSectionTable::parse(CROSS_SECTION_J7_2, None)
    }

    pub fn cross_section_upper() -> Result<CrossSectionTable, CatalogError> {
        CrossSectionTable::parse(CROSS_SECTION_J5_2, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "id,energy_cm1,two_J,parity,config,source,hfs_A_MHz,gJ\n";

    fn toy_levels() -> LevelSet {
        parse_levels(&format!(
            "{HEAD}g7,0.0,7,odd,4f13 6s2,exp\ng5,8771.24,5,odd,4f13 6s2,exp,-704.982,0.855\n\
             a,13119.6,9,even,x,exp\nb,24418.4,5,even,x,exp\nc,21161.4,5,even,x,exp\n"
        ))
        .unwrap()
    }

    #[test]
    fn ground_row() {
        let ls = toy_levels();
        let g = ls.get("g7").unwrap();
        assert_eq!(g.energy_cm1, 0.0);
        assert_eq!(g.two_j, 7);
        assert_eq!(g.hyperfine_a_mhz, None);
        let u = ls.get("g5").unwrap();
        assert_eq!(u.two_j, 5);
        assert_eq!(u.g_j, Some(0.855));
    }

    #[test]
    fn negative_two_j_rejected() {
        let err = parse_levels(&format!("{HEAD}x,0.0,-1,odd,c,exp\n")).unwrap_err();
        assert!(matches!(err, CatalogError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_levels(&format!("{HEAD}g7,0.0,7,odd,c,exp\nbad,zero,7,odd,c,exp\n")).unwrap_err();
        assert!(matches!(err, CatalogError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn duplicate_level_rejected() {
        let err = parse_levels(&format!("{HEAD}g7,0.0,7,odd,c,exp\ng7,1.0,7,odd,c,exp\n")).unwrap_err();
        assert_eq!(err, CatalogError::DuplicateLevel("g7".into()));
    }

    const LH: &str = "upper_id,lower_id,lambda_nm,A_per_s,source,sign\n";

    #[test]
    fn table_rows_parse() {
        let ls = toy_levels();
        let lines = parse_lines(&format!("{LH}b,g5,639.11,1.79e7,calc,1\na,g7,762.22,3.2,calc,1\n"), &ls, 5e-3)
            .unwrap();
        assert_eq!(lines[0].lower_id, "g5");
        assert_eq!(lines[0].rate, 1.79e7);
        assert_eq!(lines[1].rate, 3.2);
        assert_eq!(lines[1].source, Source::Calculated);
    }

    #[test]
    fn line_errors() {
        let ls = toy_levels();
        let e = parse_lines(&format!("{LH}zz,g7,762.22,3.2,calc,1\n"), &ls, 5e-3).unwrap_err();
        assert!(matches!(e, CatalogError::DanglingReference { .. }));
        let e = parse_lines(&format!("{LH}a,g7,762.22,0,calc,1\n"), &ls, 5e-3).unwrap_err();
        assert!(matches!(e, CatalogError::NonPositiveRate { .. }));
        let e = parse_lines(&format!("{LH}a,g7,770.0,3.2,calc,1\n"), &ls, 5e-3).unwrap_err();
        assert!(matches!(e, CatalogError::InconsistentWavelength { .. }));
        let e = parse_lines(&format!("{LH}g7,a,762.22,3.2,calc,1\n"), &ls, 5e-3).unwrap_err();
        assert!(matches!(e, CatalogError::NotDownward { .. }));
    }

    fn line(u: &str, l: &str, nm: f64, a: f64, src: Source, sign: i8) -> TransitionLine {
        TransitionLine {
            upper_id: u.into(),
            lower_id: l.into(),
            lambda_nm: nm,
            rate: a,
            source: src,
            sign,
        }
    }

    #[test]
    fn empty_experimental_is_identity() {
        let calc = vec![line("c", "g5", 806.8, 2600.0, Source::Calculated, -1)];
        let cat = merge_catalog(toy_levels(), calc.clone(), &[], MergePolicy::CalculationFirst).unwrap();
        assert_eq!(cat.lines(), calc.as_slice());
    }

    #[test]
    fn wavelength_taken_from_experiment() {
        let calc = vec![line("c", "g5", 806.8, 2.0e5, Source::Calculated, -1)];
        let exp = vec![line("c", "g5", 807.1, 8000.0, Source::Experimental, 1)];
        let cat = merge_catalog(toy_levels(), calc, &exp, MergePolicy::CalculationFirst).unwrap();
        assert_eq!(cat.lines()[0].lambda_nm, 807.1);
        assert_eq!(cat.lines()[0].rate, 2.0e5);
        assert_eq!(cat.lines()[0].sign, -1);
    }

    #[test]
    fn weak_rate_replaced() {
        let calc = vec![line("a", "g7", 762.22, 3.2, Source::Calculated, 1)];
        let exp = vec![line("a", "g7", 762.0, 5.0, Source::Experimental, 1)];
        let cat = merge_catalog(toy_levels(), calc, &exp, MergePolicy::CalculationFirst).unwrap();
        assert_eq!(cat.lines()[0].rate, 5.0);
        assert_eq!(cat.lines()[0].source, Source::Experimental);
    }

    #[test]
    fn weak_rate_without_partner_warns() {
        let calc = vec![line("a", "g7", 762.22, 3.2, Source::Calculated, 1)];
        let cat = merge_catalog(toy_levels(), calc, &[], MergePolicy::CalculationFirst).unwrap();
        assert_eq!(cat.lines()[0].rate, 3.2);
        assert!(cat.warnings().iter().any(|w| w.contains("weak")));
    }

    #[test]
    fn ambiguous_match_is_error() {
        let calc = vec![line("c", "g5", 806.8, 2600.0, Source::Calculated, 1)];
        let exp = vec![
            line("c", "g5", 807.1, 8000.0, Source::Experimental, 1),
            line("b", "g5", 805.0, 8000.0, Source::Experimental, 1),
        ];
        let err = merge_catalog(toy_levels(), calc, &exp, MergePolicy::CalculationFirst).unwrap_err();
        assert!(matches!(err, CatalogError::AmbiguousMatch { .. }));
    }

    #[test]
    fn combined_uses_experiment_wholesale() {
        let calc = vec![line("c", "g5", 806.8, 2600.0, Source::Calculated, -1)];
        let exp = vec![line("c", "g5", 807.1, 8000.0, Source::Experimental, 1)];
        let cat = merge_catalog(toy_levels(), calc, &exp, MergePolicy::Combined).unwrap();
        let l = &cat.lines()[0];
        assert_eq!((l.lambda_nm, l.rate, l.sign), (807.1, 8000.0, -1));
    }

    #[test]
    fn bundled_catalog_loads() {
        let cat = LineCatalog::bundled(MergePolicy::CalculationFirst).unwrap();
        assert_eq!(cat.level("g5").unwrap().energy_cm1, 8771.24);
        let l807 = cat
            .lines()
            .iter()
            .find(|l| l.upper_id == "e21161")
            .unwrap();
        assert!((l807.lambda_nm - 807.092).abs() < 1e-9);
        assert_eq!(l807.sign, -1);
        // the 1254 and 1221 nm lines sit outside the nominal window
        assert!(cat.warnings().iter().any(|w| w.contains("window")));
    }

    #[test]
    fn dipole_round_trip() {
        let cat = LineCatalog::bundled(MergePolicy::CalculationFirst).unwrap();
        for l in cat.lines() {
            let d: f64 = reduced_dipole_from_rate(l, cat.levels()).unwrap();
            let j = cat.level(&l.upper_id).unwrap().two_j;
            let a = rate_from_reduced_dipole(d, l.omega_au(), j);
            assert!(((a - l.rate) / l.rate).abs() < 1e-12);
            assert_eq!(d.signum() as i8, l.sign);
        }
    }

    #[test]
    fn cross_section_validation() {
        assert!(CrossSectionTable::new(vec![1.0, 1.0], vec![0.0, 0.0], 0.5).is_err());
        assert!(CrossSectionTable::new(vec![1.0, 2.0], vec![-1.0, 0.0], 0.5).is_err());
        assert!(CrossSectionTable::new(vec![1.0, 2.0], vec![1.0, 0.0], 1.5).is_err());
        let t = CrossSectionTable::new(vec![1.0, 2.0], vec![2.0, 4.0], 1.0).unwrap();
        assert_eq!(t.sigma_at(1.5), 3.0);
        assert_eq!(t.sigma_at(2.5), 0.0);
    }
}
