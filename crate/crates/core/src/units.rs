//! Physical constants (CODATA 2018) and atomic-unit conversions.

use crate::scalar::Real;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
pub const HARTREE: f64 = 4.359_744_722_207_1e-18;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const NUCLEAR_MAGNETON: f64 = 5.050_783_746_1e-27;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const FINE_STRUCTURE: f64 = 7.297_352_569_3e-3;

/// Atomic unit of time, s.
pub const AU_TIME: f64 = 2.418_884_326_585_7e-17;
/// Hartree expressed as a wavenumber, cm⁻¹.
pub const HARTREE_CM1: f64 = 219_474.631_363_20;
/// Hartree expressed as a frequency, Hz.
pub const HARTREE_HZ: f64 = 6.579_683_920_502e15;
/// Hartree expressed in eV.
pub const HARTREE_EV: f64 = 27.211_386_245_988;
/// Atomic unit of electric field, V/m.
pub const AU_FIELD: f64 = 5.142_206_747_63e11;
/// Speed of light in atomic units (1/α).
pub const C_AU: f64 = 137.035_999_084;
/// 1 Mb in units of a₀².
pub const MEGABARN_AU: f64 = 1e-22 / (BOHR_RADIUS * BOHR_RADIUS);

/// Mass of ¹⁶⁹Tm in kg.
pub const TM169_MASS: f64 = 168.934_219 * ATOMIC_MASS_UNIT;

/// Polarizability unit conversions.
///
/// One atomic unit of polarizability is 4πε₀a₀³ ≈ 1.65×10⁻⁴¹ J/(V/m)².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AtomicUnits;

impl AtomicUnits {
    /// 4πε₀a₀³ in J/(V/m)².
    pub const POLARIZABILITY_SI: f64 =
        4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY * BOHR_RADIUS * BOHR_RADIUS * BOHR_RADIUS;

    /// Atomic unit of intensity Eₕ/(t_au a₀²), W/m².
    pub const INTENSITY_SI: f64 = HARTREE / (AU_TIME * BOHR_RADIUS * BOHR_RADIUS);

    pub fn polarizability_to_si(alpha_au: f64) -> f64 {
        alpha_au * Self::POLARIZABILITY_SI
    }

    pub fn polarizability_from_si(alpha_si: f64) -> f64 {
        alpha_si / Self::POLARIZABILITY_SI
    }

    /// Trap depth per unit polarizability and intensity, K per (a.u. · W/m²).
    pub fn kelvin_per_au_intensity() -> f64 {
        2.0 * std::f64::consts::PI * BOHR_RADIUS.powi(3) / (SPEED_OF_LIGHT * BOLTZMANN)
    }

    /// Hz per (a.u. · W/m²) for the second-order light shift magnitude.
    pub fn hz_per_au_intensity() -> f64 {
        2.0 * std::f64::consts::PI * BOHR_RADIUS.powi(3) / (SPEED_OF_LIGHT * PLANCK)
    }
}

/// Wavenumber (cm⁻¹) to angular frequency in atomic units.
#[inline]
pub fn wavenumber_to_omega_au<T: Real>(cm1: f64) -> T {
    T::lit(cm1 / HARTREE_CM1)
}

/// Vacuum wavelength (nm) to angular frequency in atomic units.
#[inline]
pub fn wavelength_nm_to_omega_au<T: Real>(nm: T) -> T {
    T::lit(1e7 / HARTREE_CM1) / nm
}

/// Angular frequency in atomic units to vacuum wavelength (nm).
#[inline]
pub fn omega_au_to_wavelength_nm<T: Real>(omega: T) -> T {
    T::lit(1e7 / HARTREE_CM1) / omega
}

/// Angular frequency (rad/s) to atomic units.
#[inline]
pub fn omega_si_to_au<T: Real>(omega: T) -> T {
    omega * T::lit(AU_TIME)
}

/// Rate (s⁻¹) to atomic units.
#[inline]
pub fn rate_si_to_au<T: Real>(rate: f64) -> T {
    T::lit(rate * AU_TIME)
}

/// Intensity (W/m²) to atomic units.
#[inline]
pub fn intensity_to_au<T: Real>(w_per_m2: T) -> T {
    w_per_m2 / T::lit(AtomicUnits::INTENSITY_SI)
}

/// kW/cm² to W/m².
#[inline]
pub fn kw_per_cm2<T: Real>(x: T) -> T {
    x * T::lit(1e7)
}

/// Squared field amplitude |ℰ|² in atomic units for a running-wave intensity,
/// with E = ½ℰe^{-iωt} + c.c. so that I = ½ε₀c|ℰ|².
#[inline]
pub fn field_squared_au<T: Real>(intensity_w_m2: T) -> T {
    let e2_si = T::lit(2.0) * intensity_w_m2 / T::lit(VACUUM_PERMITTIVITY * SPEED_OF_LIGHT);
    e2_si / T::lit(AU_FIELD * AU_FIELD)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarizability_unit_round_trip() {
        let x = 138.0;
        let back = AtomicUnits::polarizability_from_si(AtomicUnits::polarizability_to_si(x));
        assert!(((back - x) / x).abs() < 1e-12);
        assert!((AtomicUnits::POLARIZABILITY_SI / 1.65e-41 - 1.0).abs() < 0.01);
    }

    #[test]
    fn derived_atomic_units_are_consistent() {
        assert!((HBAR / HARTREE / AU_TIME - 1.0).abs() < 1e-9);
        assert!((HARTREE / PLANCK / HARTREE_HZ - 1.0).abs() < 1e-9);
        assert!((HARTREE / (ELEMENTARY_CHARGE * BOHR_RADIUS) / AU_FIELD - 1.0).abs() < 1e-9);
        assert!((1.0 / FINE_STRUCTURE / C_AU - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wavelength_omega_round_trip() {
        let nm = 807.1_f64;
        let w: f64 = wavelength_nm_to_omega_au(nm);
        assert!((omega_au_to_wavelength_nm(w) - nm).abs() < 1e-10);
        let w32: f32 = wavelength_nm_to_omega_au(807.1_f32);
        assert!((w32 as f64 - w).abs() / w < 1e-6);
    }
}
