//! Differential polarizability of a clock transition, magic-wavelength search
//! and fourth-order (hyperpolarizability) light shifts.

use rayon::prelude::*;
use thiserror::Error;

use crate::angular::{phase, wigner_3j, HalfInt};
use crate::catalog::{bundled, reduced_dipole_from_rate, CatalogError, CrossSectionTable, LineCatalog};
use crate::polarizability::{alpha_continuum, LevelResponse, PolarizabilityError, PolarizabilityOptions};
use crate::scalar::Real;
use crate::units::{self, HARTREE_HZ};

pub const DEFAULT_MAGIC_TOLERANCE_NM: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagicError {
    #[error("differential polarizability does not change sign on [{lo_nm}, {hi_nm}] nm ({at_lo} and {at_hi} a.u.)")]
    NoSignChange {
        lo_nm: f64,
        hi_nm: f64,
        at_lo: f64,
        at_hi: f64,
    },
    #[error("the {upper} -> {lower} line at {lambda_nm} nm lies inside the bracket")]
    PoleInBracket {
        upper: String,
        lower: String,
        lambda_nm: f64,
    },
    #[error("invalid bracket [{0}, {1}] nm")]
    InvalidBracket(f64, f64),
    #[error("{kind}-photon resonance with {level} at {omega} a.u.")]
    HyperResonance { kind: &'static str, level: String, omega: f64 },
    #[error(transparent)]
    Polarizability(#[from] PolarizabilityError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// A hyperfine sublevel |J F m⟩ of a catalog level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockState {
    pub level: String,
    pub f: HalfInt,
    pub m: HalfInt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePair {
    pub lower: ClockState,
    pub upper: ClockState,
    pub nuclear_spin: HalfInt,
}

impl StatePair {
    /// |J=7/2, F=4, m=0⟩ and |J=5/2, F=3, m=0⟩ of 169Tm.
    pub fn thulium() -> Self {
        StatePair {
            lower: ClockState {
                level: bundled::LOWER_CLOCK.into(),
                f: HalfInt::int(4),
                m: HalfInt::ZERO,
            },
            upper: ClockState {
                level: bundled::UPPER_CLOCK.into(),
                f: HalfInt::int(3),
                m: HalfInt::ZERO,
            },
            nuclear_spin: HalfInt::from_twice(bundled::NUCLEAR_SPIN_TWICE),
        }
    }
}

/// Precomputed polarizabilities of both clock states.
#[derive(Debug, Clone)]
pub struct DifferentialModel<T> {
    lower: LevelResponse<T>,
    upper: LevelResponse<T>,
    w_lower: Vec<T>,
    w_upper: Vec<T>,
    continuum: Option<(CrossSectionTable, CrossSectionTable)>,
}

impl<T: Real> DifferentialModel<T> {
    /// `continuum` holds the (lower, upper) photoionization tables, if any.
    pub fn new(
        catalog: &LineCatalog,
        pair: &StatePair,
        continuum: Option<(&CrossSectionTable, &CrossSectionTable)>,
        opts: &PolarizabilityOptions,
    ) -> Result<Self, MagicError> {
        let lower = LevelResponse::new(catalog, &pair.lower.level, opts)?;
        let upper = LevelResponse::new(catalog, &pair.upper.level, opts)?;
        let w_lower = lower.state_weights(pair.lower.f, pair.lower.m, pair.nuclear_spin)?;
        let w_upper = upper.state_weights(pair.upper.f, pair.upper.m, pair.nuclear_spin)?;
        Ok(DifferentialModel {
            lower,
            upper,
            w_lower,
            w_upper,
            continuum: continuum.map(|(a, b)| (a.clone(), b.clone())),
        })
    }

    pub fn alpha_lower(&self, omega: T) -> Result<T, MagicError> {
        let mut a = self.lower.with_weights(&self.w_lower, omega)?;
        if let Some((t, _)) = &self.continuum {
            a = a + alpha_continuum(t, T::zero(), omega)?;
        }
        Ok(a)
    }

    pub fn alpha_upper(&self, omega: T) -> Result<T, MagicError> {
        let mut a = self.upper.with_weights(&self.w_upper, omega)?;
        if let Some((_, t)) = &self.continuum {
            a = a + alpha_continuum(t, T::zero(), omega)?;
        }
        Ok(a)
    }

    /// α_upper − α_lower + offset at angular frequency ω (a.u.).
    pub fn differential(&self, omega: T, offset: T) -> Result<T, MagicError> {
        Ok(self.alpha_upper(omega)? - self.alpha_lower(omega)? + offset)
    }

    pub fn differential_nm(&self, lambda_nm: T, offset: T) -> Result<T, MagicError> {
        self.differential(units::wavelength_nm_to_omega_au(lambda_nm), offset)
    }

    /// Pole wavelengths of either state with their line labels.
    pub fn poles_nm(&self) -> Vec<(f64, String, String)> {
        self.lower
            .poles()
            .chain(self.upper.poles())
            .map(|(_, (u, l, nm))| (*nm, u.clone(), l.clone()))
            .collect()
    }
}

/// α_upper − α_lower + offset for `pair` at ω.
pub fn differential_alpha<T: Real>(
    catalog: &LineCatalog,
    continuum: Option<(&CrossSectionTable, &CrossSectionTable)>,
    pair: &StatePair,
    omega: T,
    offset: T,
) -> Result<T, MagicError> {
    DifferentialModel::new(catalog, pair, continuum, &PolarizabilityOptions::default())?.differential(omega, offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagicSearchResult<T> {
    pub lambda_magic: T,
    /// Final bisection bracket in nm.
    pub bracket: (T, T),
    /// dΔα/dλ at the root, a.u./nm.
    pub slope: T,
    pub continuum_offset: T,
    /// Polarizability of the lower state at the root.
    pub alpha: T,
    pub attractive: bool,
    /// Nearest line to the root: (λ nm, upper id, lower id).
    pub nearest_line: Option<(f64, String, String)>,
}

impl<T: Real> MagicSearchResult<T> {
    /// Distance to the nearest line on the blue side, nm. Negative when the root is red of it.
    pub fn blue_detuning_nm(&self) -> Option<f64> {
        self.nearest_line
            .as_ref()
            .map(|(nm, _, _)| nm - self.lambda_magic.to_f64_lossy())
    }
}

/// Bisection for Δα(λ) = 0 inside `bracket_nm`.
pub fn find_magic<T: Real>(
    model: &DifferentialModel<T>,
    bracket_nm: (T, T),
    tolerance_nm: T,
    offset: T,
) -> Result<MagicSearchResult<T>, MagicError> {
    let (mut lo, mut hi) = bracket_nm;
    if !(lo < hi) || lo <= T::zero() {
        return Err(MagicError::InvalidBracket(lo.to_f64_lossy(), hi.to_f64_lossy()));
    }
    let poles = model.poles_nm();
    if let Some((nm, u, l)) = poles
        .iter()
        .find(|(nm, _, _)| *nm > lo.to_f64_lossy() && *nm < hi.to_f64_lossy())
    {
        return Err(MagicError::PoleInBracket {
            upper: u.clone(),
            lower: l.clone(),
            lambda_nm: *nm,
        });
    }
    let mut f_lo = model.differential_nm(lo, offset)?;
    let f_hi = model.differential_nm(hi, offset)?;
    if f_lo == T::zero() {
        hi = lo;
    } else if f_hi == T::zero() {
        lo = hi;
    } else if f_lo.signum() == f_hi.signum() {
        return Err(MagicError::NoSignChange {
            lo_nm: lo.to_f64_lossy(),
            hi_nm: hi.to_f64_lossy(),
            at_lo: f_lo.to_f64_lossy(),
            at_hi: f_hi.to_f64_lossy(),
        });
    }
    let half = T::lit(0.5);
    for _ in 0..200 {
        if hi - lo <= tolerance_nm {
            break;
        }
        let mid = (lo + hi) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = model.differential_nm(mid, offset)?;
        if f_mid == T::zero() {
            lo = mid;
            hi = mid;
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let root = (lo + hi) * half;
    let h = tolerance_nm.max(T::lit(1e-3));
    let slope = (model.differential_nm(root + h, offset)? - model.differential_nm(root - h, offset)?) / (h + h);
    let alpha = model.alpha_lower(units::wavelength_nm_to_omega_au(root))?;
    let r = root.to_f64_lossy();
    let nearest_line = poles
        .into_iter()
        .min_by(|a, b| (a.0 - r).abs().total_cmp(&(b.0 - r).abs()));
    Ok(MagicSearchResult {
        lambda_magic: root,
        bracket: (lo, hi),
        slope,
        continuum_offset: offset,
        alpha,
        attractive: alpha > T::zero(),
        nearest_line,
    })
}

/// Δα on a wavelength grid, evaluated in parallel. Points inside a pole exclusion width yield `None`.
pub fn scan_differential<T: Real>(model: &DifferentialModel<T>, lambdas_nm: &[T], offset: T) -> Vec<(T, Option<T>)> {
    lambdas_nm
        .par_iter()
        .map(|&l| (l, model.differential_nm(l, offset).ok()))
        .collect()
}

/// Number of sign changes of Δα along a scan, skipping refused points.
pub fn count_sign_changes<T: Real>(scan: &[(T, Option<T>)]) -> usize {
    let vals: Vec<T> = scan.iter().filter_map(|(_, v)| *v).filter(|v| *v != T::zero()).collect();
    vals.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
}

/// Light shift in Hz: −(α/4)|E|² − (γ/64)|E|⁴, intensity in W/m².
pub fn light_shift_total<T: Real>(alpha_au: T, gamma_au: T, intensity_w_m2: T) -> T {
    let e2 = units::field_squared_au(intensity_w_m2);
    (-(alpha_au / T::lit(4.0)) * e2 - gamma_au / T::lit(64.0) * e2 * e2) * T::lit(HARTREE_HZ)
}

/// Fourth-order shift −(γ/64)|E|⁴ in Hz.
pub fn hyper_shift<T: Real>(gamma_au: T, intensity_w_m2: T) -> T {
    let e2 = units::field_squared_au(intensity_w_m2);
    -(gamma_au / T::lit(64.0)) * e2 * e2 * T::lit(HARTREE_HZ)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperpolarizabilitySample<T> {
    pub omega: T,
    pub gamma: T,
    pub gamma_plus: T,
    pub gamma_minus: T,
    /// |smallest included term| / |γ|.
    pub truncation_ratio: T,
}

impl<T: Real> HyperpolarizabilitySample<T> {
    /// Fourth-order light shift in Hz at intensity in W/m².
    pub fn shift_at(&self, intensity_w_m2: T) -> T {
        hyper_shift(self.gamma, intensity_w_m2)
    }
}

/// Dipole matrix of catalog levels in the m_J = 1/2 sector, for one reference level.
#[derive(Debug, Clone)]
pub struct HyperModel<T> {
    names: Vec<String>,
    g: usize,
    /// ω_ig for each state, a.u.
    omega_ig: Vec<T>,
    /// Dense symmetric (D_z)_ij.
    dz: Vec<Vec<T>>,
    /// Partners of each state through a nonzero D_z.
    adj: Vec<Vec<usize>>,
    exclusion: T,
}

impl<T: Real> HyperModel<T> {
    /// States are |J, m_J=1/2⟩; for integer J the m_J = 0 projection is used.
    pub fn new(catalog: &LineCatalog, level: &str, pole_exclusion: f64) -> Result<Self, MagicError> {
        let levels = catalog.levels();
        let names: Vec<String> = levels.iter().map(|l| l.id.clone()).collect();
        let idx = |id: &str| names.iter().position(|n| n == id);
        let g = idx(level).ok_or_else(|| CatalogError::UnknownLevel(level.into()))?;
        let n = names.len();
        let mut dz = vec![vec![T::zero(); n]; n];
        let mut adj = vec![Vec::new(); n];
        let e_g: f64 = levels.iter().nth(g).map(|l| l.energy_cm1).unwrap_or(0.0);
        let mut omega_ig: Vec<T> = levels
            .iter()
            .map(|l| units::wavenumber_to_omega_au(l.energy_cm1 - e_g))
            .collect();
        let two_j: Vec<i32> = levels.iter().map(|l| l.two_j as i32).collect();
        for line in catalog.lines() {
            let (Some(u), Some(d)) = (idx(&line.upper_id), idx(&line.lower_id)) else { continue };
            let red: T = reduced_dipole_from_rate(line, levels)?;
            let ju = HalfInt::from_twice(two_j[u]);
            let jd = HalfInt::from_twice(two_j[d]);
            let m = if ju.is_integer() { HalfInt::ZERO } else { HalfInt::HALF };
            if !(jd.is_integer() == ju.is_integer()) {
                continue;
            }
            let three: T = wigner_3j(ju, HalfInt::ONE, jd, -m, HalfInt::ZERO, m);
            let v = phase::<T>(ju - m) * three * red;
            if v == T::zero() {
                continue;
            }
            dz[u][d] = v;
            dz[d][u] = v;
            adj[u].push(d);
            adj[d].push(u);
            // lines touching the reference level carry their own wavelength
            let w: T = line.omega_au();
            if d == g {
                omega_ig[u] = w;
            } else if u == g {
                omega_ig[d] = -w;
            }
        }
        Ok(HyperModel {
            names,
            g,
            omega_ig,
            dz,
            adj,
            exclusion: T::lit(pole_exclusion),
        })
    }

    fn check(&self, omega: T) -> Result<(), MagicError> {
        let w = omega.abs();
        let two_w = w + w;
        for (i, &o) in self.omega_ig.iter().enumerate() {
            if i == self.g || self.adj[i].is_empty() {
                continue;
            }
            let o = o.abs();
            if (w - o).abs() <= self.exclusion * o && self.adj[i].contains(&self.g) {
                return Err(MagicError::HyperResonance {
                    kind: "one",
                    level: self.names[i].clone(),
                    omega: omega.to_f64_lossy(),
                });
            }
            if (two_w - o).abs() <= self.exclusion * o {
                return Err(MagicError::HyperResonance {
                    kind: "two",
                    level: self.names[i].clone(),
                    omega: omega.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    /// γ(ω) = (γ⁺ + γ⁻)/4 in atomic units.
    pub fn evaluate(&self, omega: T) -> Result<HyperpolarizabilitySample<T>, MagicError> {
        self.check(omega)?;
        let g = self.g;
        let w = omega;
        let w2 = w * w;
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let mut smallest = T::infinity();
        let mut track = |x: T| {
            if x != T::zero() && x.abs() < smallest {
                smallest = x.abs();
            }
        };

        let mut plus = T::zero();
        for &m in &self.adj[g] {
            let wm = self.omega_ig[m];
            for &k in &self.adj[m] {
                if k == g {
                    continue;
                }
                let wk = self.omega_ig[k];
                for &n in &self.adj[k] {
                    if self.dz[n][g] == T::zero() {
                        continue;
                    }
                    let wn = self.omega_ig[n];
                    let d = self.dz[g][m] * self.dz[m][k] * self.dz[k][n] * self.dz[n][g];
                    let t = four * wm * wn / (wk * (w2 - wm * wm) * (w2 - wn * wn))
                        + T::one() / ((wm - w) * (wk - two * w) * (wn - w))
                        + T::one() / ((wm + w) * (wk + two * w) * (wn + w));
                    let term = four * d * t;
                    track(term);
                    plus = plus + term;
                }
            }
        }

        let mut minus = T::zero();
        for &m in &self.adj[g] {
            let wm = self.omega_ig[m];
            let dm = self.dz[m][g] * self.dz[m][g];
            for &n in &self.adj[g] {
                let wn = self.omega_ig[n];
                let dn = self.dz[n][g] * self.dz[n][g];
                let den = w2 - wn * wn;
                let term = T::lit(8.0) * dm * dn * wm * (w2 + T::lit(3.0) * wn * wn) / ((w2 - wm * wm) * den * den);
                track(term);
                minus = minus + term;
            }
        }

        let gamma = (plus + minus) / four;
        let truncation_ratio = if gamma == T::zero() || !smallest.is_finite() {
            T::zero()
        } else {
            smallest / gamma.abs()
        };
        Ok(HyperpolarizabilitySample {
            omega,
            gamma,
            gamma_plus: plus,
            gamma_minus: minus,
            truncation_ratio,
        })
    }
}

/// Scalar hyperpolarizability of `level` at ω.
pub fn hyperpolarizability<T: Real>(
    catalog: &LineCatalog,
    level: &str,
    omega: T,
) -> Result<HyperpolarizabilitySample<T>, MagicError> {
    HyperModel::new(catalog, level, crate::polarizability::DEFAULT_POLE_EXCLUSION)?.evaluate(omega)
}

/// Root of the full differential light shift −Δα|E|²/4 − Δγ|E|⁴/64 near an α-only magic wavelength.
pub fn find_magic_with_hyper<T: Real>(
    model: &DifferentialModel<T>,
    hyper_lower: &HyperModel<T>,
    hyper_upper: &HyperModel<T>,
    bracket_nm: (T, T),
    tolerance_nm: T,
    offset: T,
    intensity_w_m2: T,
) -> Result<T, MagicError> {
    let f = |nm: T| -> Result<T, MagicError> {
        let w = units::wavelength_nm_to_omega_au(nm);
        let da = model.differential(w, offset)?;
        let dg = hyper_upper.evaluate(w)?.gamma - hyper_lower.evaluate(w)?.gamma;
        Ok(light_shift_total(da, dg, intensity_w_m2))
    };
    let (mut lo, mut hi) = bracket_nm;
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo.signum() == f_hi.signum() {
        return Err(MagicError::NoSignChange {
            lo_nm: lo.to_f64_lossy(),
            hi_nm: hi.to_f64_lossy(),
            at_lo: f_lo.to_f64_lossy(),
            at_hi: f_hi.to_f64_lossy(),
        });
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if hi - lo <= tolerance_nm || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::MergePolicy;

    #[test]
    fn identical_states_cancel() {
        let cat = LineCatalog::bundled(MergePolicy::CalculationFirst).unwrap();
        let mut pair = StatePair::thulium();
        pair.upper = pair.lower.clone();
        let w = units::wavelength_nm_to_omega_au(700.0_f64);
        assert_eq!(differential_alpha(&cat, None, &pair, w, 0.0).unwrap(), 0.0);
        assert_eq!(differential_alpha(&cat, None, &pair, w, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn light_shift_pieces() {
        assert_eq!(light_shift_total(100.0_f64, 1e6, 0.0), 0.0);
        let i = units::kw_per_cm2(50.0_f64);
        let u = crate::polarizability::trap_depth(138.0, i);
        let hz = light_shift_total(138.0, 0.0, i);
        let expect = -u * crate::units::BOLTZMANN / crate::units::PLANCK;
        assert!(((hz - expect) / expect).abs() < 1e-9);
    }

    #[test]
    fn no_sign_change_is_error() {
        let cat = LineCatalog::bundled(MergePolicy::CalculationFirst).unwrap();
        let m = DifferentialModel::<f64>::new(&cat, &StatePair::thulium(), None, &Default::default()).unwrap();
        assert!(matches!(
            find_magic(&m, (600.0, 630.0), 1e-4, 1e3),
            Err(MagicError::NoSignChange { .. })
        ));
        assert!(matches!(
            find_magic(&m, (806.0, 808.0), 1e-4, 0.0),
            Err(MagicError::PoleInBracket { .. })
        ));
    }
}
