//! Dynamic dipole polarizabilities of a level from a line catalog and a
//! photoionization table, trap depth and off-resonant scattering.
//!
//! All frequencies are angular frequencies in atomic units unless a name says otherwise.

use thiserror::Error;

use crate::angular::{phase, triangle, wigner_3j, wigner_6j, AngularError, HalfInt};
use crate::catalog::{CatalogError, CrossSectionTable, LineCatalog};
use crate::scalar::Real;
use crate::units::{self, AtomicUnits, C_AU, HARTREE_EV, MEGABARN_AU};

/// Default relative half-width of the region around each pole where results are refused.
pub const DEFAULT_POLE_EXCLUSION: f64 = 1e-6;
/// Default number of sub-intervals per table interval in the continuum quadrature.
pub const DEFAULT_CONTINUUM_REFINEMENT: usize = 16;
/// Relative change between full and halved grids above which a warning is logged.
pub const CONTINUUM_CONVERGENCE_WARN: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizabilityError {
    #[error("{omega} a.u. is within the exclusion width of the {upper} -> {lower} line at {lambda_nm} nm")]
    Resonance {
        upper: String,
        lower: String,
        lambda_nm: f64,
        omega: f64,
    },
    #[error("photon energy {omega} a.u. is at or above the ionization threshold {threshold} a.u.")]
    AboveThreshold { omega: f64, threshold: f64 },
    #[error("cross-section table is empty")]
    EmptyTable,
    #[error("|m| = {m} exceeds F = {f}")]
    ProjectionRange { f: HalfInt, m: HalfInt },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Angular(#[from] AngularError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizabilityOptions {
    /// Relative half-width around each pole, in units of the pole frequency.
    pub pole_exclusion: f64,
    pub continuum_refinement: usize,
}

impl Default for PolarizabilityOptions {
    fn default() -> Self {
        PolarizabilityOptions {
            pole_exclusion: DEFAULT_POLE_EXCLUSION,
            continuum_refinement: DEFAULT_CONTINUUM_REFINEMENT,
        }
    }
}

/// One dipole channel of a level, with everything that does not depend on ω folded in.
#[derive(Debug, Clone)]
struct Channel<T> {
    omega0: T,
    /// +1 when the level is the lower end of the line, -1 when it is the upper.
    role: T,
    /// c³(2J_u+1)A / ω0², all in atomic units.
    strength: T,
    partner_j: HalfInt,
    upper_j: HalfInt,
    /// Partial decay rate of the line, a.u.
    rate: T,
    /// Total decay rate of the line's upper level, a.u.
    upper_total_rate: T,
    tensor_angular: T,
}

/// Precomputed response of one level to an optical field.
#[derive(Debug, Clone)]
pub struct LevelResponse<T> {
    id: String,
    j: HalfInt,
    channels: Vec<Channel<T>>,
    labels: Vec<(String, String, f64)>,
    exclusion: T,
}

/// √(5J(2J−1)/(6(J+1)(2J+1)(2J+3))), zero for J < 1.
fn tensor_prefactor<T: Real>(j: HalfInt) -> T {
    if j.twice() < 2 {
        return T::zero();
    }
    let jv = j.value::<T>();
    let one = T::one();
    let two = T::lit(2.0);
    (T::lit(5.0) * jv * (two * jv - one)
        / (T::lit(6.0) * (jv + one) * (two * jv + one) * (two * jv + T::lit(3.0))))
    .sqrt()
}

/// Ratio α^t_{JF}/α^t_J for hyperfine level F.
pub fn tensor_f_scale<T: Real>(j: HalfInt, f: HalfInt, i: HalfInt) -> Result<T, AngularError> {
    if !triangle(j, i, f) {
        return Err(AngularError::CouplingRange { f, j, i });
    }
    if j.twice() < 2 || f.twice() < 2 {
        return Ok(T::zero());
    }
    let (jv, fv) = (j.value::<T>(), f.value::<T>());
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let ratio = fv * (two * fv - one) * (two * fv + one) * (two * jv + three) * (two * jv + one) * (jv + one)
        / ((two * fv + three) * (fv + one) * (two * jv - one) * jv);
    let six: T = wigner_6j(f, j, i, j, f, HalfInt::int(2));
    Ok(phase::<T>(i + j + f) * six * ratio.sqrt())
}

/// (3m² − F(F+1)) / (F(2F−1)), the m-dependence of the tensor part.
pub fn tensor_m_factor<T: Real>(f: HalfInt, m: HalfInt) -> T {
    if f.twice() < 2 {
        return T::zero();
    }
    let (fv, mv) = (f.value::<T>(), m.value::<T>());
    (T::lit(3.0) * mv * mv - fv * (fv + T::one())) / (fv * (T::lit(2.0) * fv - T::one()))
}

impl<T: Real> LevelResponse<T> {
    pub fn new(catalog: &LineCatalog, level_id: &str, opts: &PolarizabilityOptions) -> Result<Self, PolarizabilityError> {
        let level = catalog.level(level_id)?;
        let j = level.j();
        let c = T::lit(C_AU);
        let c3 = c * c * c;
        let pre = tensor_prefactor::<T>(j);
        let mut channels = Vec::new();
        let mut labels = Vec::new();
        for line in catalog.lines() {
            let Some(partner_id) = line.partner(level_id) else { continue };
            let partner = catalog.level(partner_id)?;
            let upper = catalog.level(&line.upper_id)?;
            let omega0: T = line.omega_au();
            let rate = units::rate_si_to_au::<T>(line.rate);
            let role = if line.lower_id == level_id { T::one() } else { -T::one() };
            let strength = c3 * T::lit(f64::from(upper.two_j + 1)) * rate / (omega0 * omega0);
            let six: T = wigner_6j(HalfInt::ONE, HalfInt::ONE, HalfInt::int(2), j, j, partner.j());
            let tensor_angular = T::lit(3.0) * phase::<T>(j + partner.j()) * six * pre;
            channels.push(Channel {
                omega0,
                role,
                strength,
                partner_j: partner.j(),
                upper_j: upper.j(),
                rate,
                upper_total_rate: units::rate_si_to_au(catalog.total_decay_rate(&line.upper_id)),
                tensor_angular,
            });
            labels.push((line.upper_id.clone(), line.lower_id.clone(), line.lambda_nm));
        }
        Ok(LevelResponse {
            id: level_id.to_string(),
            j,
            channels,
            labels,
            exclusion: T::lit(opts.pole_exclusion),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn j(&self) -> HalfInt {
        self.j
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Pole frequencies in atomic units.
    pub fn poles(&self) -> impl Iterator<Item = (T, &(String, String, f64))> + '_ {
        self.channels.iter().zip(&self.labels).map(|(c, l)| (c.omega0, l))
    }

    /// Refuses frequencies within the exclusion width of any pole.
    pub fn check(&self, omega: T) -> Result<(), PolarizabilityError> {
        let w = omega.abs();
        for (ch, (u, l, nm)) in self.channels.iter().zip(&self.labels) {
            if (w - ch.omega0).abs() <= self.exclusion * ch.omega0 {
                return Err(PolarizabilityError::Resonance {
                    upper: u.clone(),
                    lower: l.clone(),
                    lambda_nm: *nm,
                    omega: omega.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    fn denominators(&self, omega: T) -> impl Iterator<Item = (&Channel<T>, T)> + '_ {
        let w2 = omega * omega;
        self.channels
            .iter()
            .map(move |ch| (ch, ch.role * ch.strength / (ch.omega0 * ch.omega0 - w2)))
    }

    /// Scalar polarizability α^s_J.
    pub fn scalar(&self, omega: T) -> Result<T, PolarizabilityError> {
        self.check(omega)?;
        let norm = T::lit(0.5) / T::lit(f64::from(self.j.multiplicity()));
        Ok(self.denominators(omega).fold(T::zero(), |acc, (_, x)| acc + x) * norm)
    }

    /// Tensor polarizability α^t_J.
    pub fn tensor(&self, omega: T) -> Result<T, PolarizabilityError> {
        self.check(omega)?;
        Ok(self
            .denominators(omega)
            .fold(T::zero(), |acc, (ch, x)| acc + ch.tensor_angular * x))
    }

    /// Tensor polarizability α^t_{JF}.
    pub fn tensor_f(&self, f: HalfInt, i: HalfInt, omega: T) -> Result<T, PolarizabilityError> {
        let scale = tensor_f_scale::<T>(self.j, f, i)?;
        Ok(self.tensor(omega)? * scale)
    }

    /// Per-channel angular weights of the hyperfine-resolved sum for |F m⟩.
    pub fn state_weights(&self, f: HalfInt, m: HalfInt, i: HalfInt) -> Result<Vec<T>, PolarizabilityError> {
        if !triangle(self.j, i, f) {
            return Err(AngularError::CouplingRange { f, j: self.j, i }.into());
        }
        if m.abs() > f || (f - m).twice() % 2 != 0 {
            return Err(PolarizabilityError::ProjectionRange { f, m });
        }
        let two_f1 = T::lit(f64::from(f.multiplicity()));
        Ok(self
            .channels
            .iter()
            .map(|ch| {
                // level J,F couples to partner J',F'; upper J_u sets the line strength
                HalfInt::couplings(ch.partner_j, i)
                    .map(|fp| {
                        let six: T = wigner_6j(ch.partner_j, fp, i, f, self.j, HalfInt::ONE);
                        let three: T = wigner_3j(fp, HalfInt::ONE, f, -m, HalfInt::ZERO, m);
                        T::lit(f64::from(fp.multiplicity())) * two_f1 * six * six * three * three
                    })
                    .fold(T::zero(), |a, b| a + b)
                    * T::lit(1.5)
            })
            .collect())
    }

    /// α_{Fm} from precomputed [`LevelResponse::state_weights`].
    pub fn with_weights(&self, weights: &[T], omega: T) -> Result<T, PolarizabilityError> {
        self.check(omega)?;
        Ok(self
            .denominators(omega)
            .zip(weights)
            .fold(T::zero(), |acc, ((_, x), &w)| acc + w * x))
    }

    /// α_{Fm} by direct summation over hyperfine components.
    pub fn alpha_fm(&self, f: HalfInt, m: HalfInt, i: HalfInt, omega: T) -> Result<T, PolarizabilityError> {
        let w = self.state_weights(f, m, i)?;
        self.with_weights(&w, omega)
    }

    /// Scattering rate |F 0⟩ → |F 0⟩ in atomic units of rate at intensity `intensity_au`.
    pub fn scattering_rate_00(&self, f: HalfInt, i: HalfInt, intensity_au: T, omega: T) -> Result<T, PolarizabilityError> {
        self.check(omega)?;
        if !triangle(self.j, i, f) {
            return Err(AngularError::CouplingRange { f, j: self.j, i }.into());
        }
        let c = T::lit(C_AU);
        let w2 = omega * omega;
        let mut total = T::zero();
        for ch in &self.channels {
            let is_lower = ch.role > T::zero();
            let (ju, jd) = if is_lower { (ch.upper_j, self.j) } else { (self.j, ch.partner_j) };
            let o2 = ch.omega0 * ch.omega0;
            let spectral = (o2 + w2) / ((o2 - w2) * (o2 - w2));
            let pre = T::lit(3.0) * T::PI() * c * c / (ch.omega0 * o2);
            for fp in HalfInt::couplings(ch.partner_j, i) {
                let (fu, fd) = if is_lower { (fp, f) } else { (f, fp) };
                let six: T = wigner_6j(ju, fu, i, fd, jd, HalfInt::ONE);
                let a_hf = ch.rate * T::lit(f64::from(fd.multiplicity() * ju.multiplicity())) * six * six;
                let three: T = wigner_3j(fu, HalfInt::ONE, fd, HalfInt::ZERO, HalfInt::ZERO, HalfInt::ZERO);
                total = total
                    + spectral * pre * a_hf * three * three * T::lit(f64::from(fu.multiplicity())) * ch.upper_total_rate;
            }
        }
        Ok(intensity_au * total)
    }
}

/// Scalar polarizability α^s_J of `level` in atomic units.
pub fn alpha_scalar_j<T: Real>(catalog: &LineCatalog, level: &str, omega: T) -> Result<T, PolarizabilityError> {
    LevelResponse::new(catalog, level, &PolarizabilityOptions::default())?.scalar(omega)
}

/// Tensor polarizability α^t_{JF} of `level` in atomic units.
pub fn alpha_tensor_jf<T: Real>(
    catalog: &LineCatalog,
    level: &str,
    f: HalfInt,
    i: HalfInt,
    omega: T,
) -> Result<T, PolarizabilityError> {
    LevelResponse::new(catalog, level, &PolarizabilityOptions::default())?.tensor_f(f, i, omega)
}

/// Polarizability α_{Fm} of the hyperfine sublevel |F m⟩ of `level`.
pub fn alpha_fm<T: Real>(
    catalog: &LineCatalog,
    level: &str,
    f: HalfInt,
    m: HalfInt,
    i: HalfInt,
    omega: T,
) -> Result<T, PolarizabilityError> {
    LevelResponse::new(catalog, level, &PolarizabilityOptions::default())?.alpha_fm(f, m, i, omega)
}

/// Off-resonant scattering rate |F 0⟩ → |F 0⟩ in s^-1 at intensity in W/m².
pub fn scattering_rate_00<T: Real>(
    catalog: &LineCatalog,
    level: &str,
    f: HalfInt,
    i: HalfInt,
    intensity_w_m2: T,
    omega: T,
) -> Result<T, PolarizabilityError> {
    let resp = LevelResponse::new(catalog, level, &PolarizabilityOptions::default())?;
    let rate = resp.scattering_rate_00(f, i, units::intensity_to_au(intensity_w_m2), omega)?;
    Ok(rate / T::lit(units::AU_TIME))
}

/// Continuum quadrature result at both grid resolutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumEstimate<T> {
    pub alpha: T,
    pub halved_grid: T,
}

impl<T: Real> ContinuumEstimate<T> {
    pub fn relative_change(&self) -> T {
        if self.alpha == T::zero() {
            return (self.halved_grid - self.alpha).abs();
        }
        ((self.halved_grid - self.alpha) / self.alpha).abs()
    }
}

/// Continuum contribution (c/2π²) ∫ σ(ω') dω' / ((ω' − ω_n)² − ω²) with both estimates.
///
/// The table is refined by `refinement` linear sub-intervals per interval and
/// integrated with the trapezoid rule; the second estimate uses every other node.
pub fn continuum_estimate<T: Real>(
    table: &CrossSectionTable,
    omega_n: T,
    omega: T,
    refinement: usize,
    pole_exclusion: f64,
) -> Result<ContinuumEstimate<T>, PolarizabilityError> {
    if table.is_empty() {
        return Err(PolarizabilityError::EmptyTable);
    }
    let ev = T::lit(1.0 / HARTREE_EV);
    let threshold = T::lit(table.threshold_ev) * ev - omega_n;
    if omega.abs() >= threshold * (T::one() - T::lit(pole_exclusion)) {
        return Err(PolarizabilityError::AboveThreshold {
            omega: omega.to_f64_lossy(),
            threshold: threshold.to_f64_lossy(),
        });
    }
    let r = refinement.max(1) * 2;
    let w2 = omega * omega;
    let mut nodes: Vec<(T, T)> = Vec::with_capacity(table.len() * r);
    for k in 0..table.len() {
        let (e0, s0) = (table.energy_ev[k], table.sigma_mb[k]);
        let steps = if k + 1 < table.len() { r } else { 1 };
        for s in 0..steps {
            let (e, sig) = if s == 0 {
                (e0, s0)
            } else {
                let (e1, s1) = (table.energy_ev[k + 1], table.sigma_mb[k + 1]);
                let t = s as f64 / r as f64;
                (e0 + t * (e1 - e0), s0 + t * (s1 - s0))
            };
            let x = T::lit(e) * ev - omega_n;
            nodes.push((T::lit(e) * ev, T::lit(sig * MEGABARN_AU) / (x * x - w2)));
        }
    }
    let trapz = |stride: usize| {
        let mut acc = T::zero();
        let mut prev = nodes[0];
        let last = nodes.len() - 1;
        let mut k = stride;
        while k <= last {
            let cur = nodes[k];
            acc = acc + (cur.0 - prev.0) * (cur.1 + prev.1) * T::lit(0.5);
            prev = cur;
            k += stride;
        }
        acc
    };
    let scale = T::lit(C_AU) / (T::lit(2.0) * T::PI() * T::PI());
    Ok(ContinuumEstimate {
        alpha: trapz(1) * scale,
        halved_grid: trapz(2) * scale,
    })
}

/// Continuum polarizability in atomic units, warning when the halved grid differs by more than 1%.
pub fn alpha_continuum<T: Real>(table: &CrossSectionTable, omega_n: T, omega: T) -> Result<T, PolarizabilityError> {
    let est = continuum_estimate(table, omega_n, omega, DEFAULT_CONTINUUM_REFINEMENT, DEFAULT_POLE_EXCLUSION)?;
    if est.relative_change() > T::lit(CONTINUUM_CONVERGENCE_WARN) {
        log::warn!(
            "continuum quadrature changes by {:.2}% on the halved grid",
            100.0 * est.relative_change().to_f64_lossy()
        );
    }
    Ok(est.alpha)
}

/// Trap depth in kelvin for polarizability in a.u. and intensity in W/m².
pub fn trap_depth<T: Real>(alpha_au: T, intensity_w_m2: T) -> T {
    alpha_au * T::lit(AtomicUnits::kelvin_per_au_intensity()) * intensity_w_m2
}

/// Polarizability of a level at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizabilitySample<T> {
    pub omega: T,
    pub j: HalfInt,
    pub alpha_s: T,
    /// α^t_J, before hyperfine scaling.
    pub alpha_t: T,
    pub alpha_cont: T,
}

impl<T: Real> PolarizabilitySample<T> {
    pub fn evaluate(
        response: &LevelResponse<T>,
        continuum: Option<&CrossSectionTable>,
        omega: T,
    ) -> Result<Self, PolarizabilityError> {
        let alpha_cont = match continuum {
            Some(t) => alpha_continuum(t, T::zero(), omega)?,
            None => T::zero(),
        };
        Ok(PolarizabilitySample {
            omega,
            j: response.j(),
            alpha_s: response.scalar(omega)?,
            alpha_t: response.tensor(omega)?,
            alpha_cont,
        })
    }

    /// Total polarizability of |F m⟩: α^s + α^s_cont + α^t_{JF}(3m² − F(F+1))/(F(2F−1)).
    pub fn total_for(&self, f: HalfInt, m: HalfInt, i: HalfInt) -> Result<T, PolarizabilityError> {
        let scale = tensor_f_scale::<T>(self.j, f, i)?;
        Ok(self.alpha_s + self.alpha_cont + self.alpha_t * scale * tensor_m_factor::<T>(f, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{parse_levels, LevelSet, MergePolicy, Source, TransitionLine};

    fn h(t: i32) -> HalfInt {
        HalfInt::from_twice(t)
    }

    fn toy(two_ju: u32, nm: f64, rate: f64) -> LineCatalog {
        let e = 1e7 / nm;
        let levels: LevelSet = parse_levels(&format!(
            "id,energy_cm1,two_J,parity,config,source\ng,0.0,7,odd,x,exp\nu,{e},{two_ju},even,x,exp\n"
        ))
        .unwrap();
        let line = TransitionLine {
            upper_id: "u".into(),
            lower_id: "g".into(),
            lambda_nm: nm,
            rate,
            source: Source::Calculated,
            sign: 1,
        };
        LineCatalog::new(levels, vec![line], MergePolicy::CalculationFirst).unwrap()
    }

    #[test]
    fn empty_catalog_is_zero() {
        let levels = parse_levels("id,energy_cm1,two_J,parity,config,source\ng,0,7,odd,x,exp\n").unwrap();
        let cat = LineCatalog::empty(levels);
        assert_eq!(alpha_scalar_j(&cat, "g", 0.0_f64).unwrap(), 0.0);
    }

    #[test]
    fn stretched_hyperfine_tensor_equals_j_tensor() {
        let s: f64 = tensor_f_scale(h(7), h(8), h(1)).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let s: f64 = tensor_f_scale(h(5), h(6), h(1)).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_vanishes_for_small_f() {
        let cat = toy(9, 500.0, 1e7);
        let t = alpha_tensor_jf(&cat, "u", h(1), h(8), 0.0_f64).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn pole_is_refused() {
        let cat = toy(9, 500.0, 1e7);
        let w = units::wavelength_nm_to_omega_au(500.0_f64);
        let err = alpha_scalar_j(&cat, "g", w * (1.0 + 1e-7)).unwrap_err();
        assert!(matches!(err, PolarizabilityError::Resonance { lambda_nm, .. } if lambda_nm == 500.0));
        assert!(alpha_scalar_j(&cat, "g", w * (1.0 + 1e-5)).is_ok());
    }

    #[test]
    fn m_average_is_scalar_and_stretched_is_tensor() {
        let cat = toy(9, 500.0, 1e7);
        let r = LevelResponse::<f64>::new(&cat, "g", &PolarizabilityOptions::default()).unwrap();
        let w = 0.03;
        for f in [h(6), h(8)] {
            let avg: f64 = f
                .projections()
                .map(|m| r.alpha_fm(f, m, h(1), w).unwrap())
                .sum::<f64>()
                / f64::from(f.multiplicity());
            let s = r.scalar(w).unwrap();
            assert!(((avg - s) / s).abs() < 1e-9);
            let t = r.alpha_fm(f, f, h(1), w).unwrap() - s;
            let tf = r.tensor_f(f, h(1), w).unwrap();
            assert!(((t - tf) / tf).abs() < 1e-9, "{t} {tf}");
        }
    }

    #[test]
    fn m_factors_at_zero() {
        assert!((tensor_m_factor::<f64>(h(8), h(0)) + 20.0 / 28.0).abs() < 1e-15);
        assert!((tensor_m_factor::<f64>(h(6), h(0)) + 12.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn trap_depth_scale() {
        assert_eq!(trap_depth(138.0_f64, 0.0), 0.0);
        let u = trap_depth(138.0_f64, units::kw_per_cm2(50.0));
        assert!((u * 1e6 - 15.5).abs() < 0.1, "{u}");
    }

    #[test]
    fn zero_cross_section_is_zero() {
        let t = CrossSectionTable::new(vec![6.0, 7.0, 9.0], vec![0.0; 3], 6.0).unwrap();
        assert_eq!(alpha_continuum(&t, 0.0_f64, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn continuum_above_threshold_refused() {
        let t = CrossSectionTable::new(vec![6.0, 7.0], vec![1.0; 2], 6.0).unwrap();
        let w = 6.0 / HARTREE_EV;
        assert!(matches!(
            alpha_continuum(&t, 0.0_f64, w),
            Err(PolarizabilityError::AboveThreshold { .. })
        ));
        let empty = CrossSectionTable::new(vec![], vec![], 0.0).unwrap();
        assert_eq!(alpha_continuum(&empty, 0.0_f64, 0.0), Err(PolarizabilityError::EmptyTable));
    }
}
