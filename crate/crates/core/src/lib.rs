//! Light shifts, magic wavelengths, dipolar spin relaxation and the
//! systematic-shift budget of the 1.14 µm magnetic-dipole clock line in
//! thulium.
//!
//! Numeric routines are generic over [`Real`] (`f32` or `f64`) and work in
//! atomic units internally. Angular-momentum coefficients are also available
//! in exact rational form. The `*64` and `*32` aliases below fix the scalar.
//!
//! ```
//! use mdclock::{zeeman_beta, assemble_budget, BudgetConfig, Budget64};
//!
//! let beta: f64 = zeeman_beta();
//! assert!((beta + 257.0).abs() < 1.0);
//! let budget: Budget64 = assemble_budget(&BudgetConfig::reference()).unwrap();
//! assert_eq!(budget.entries.len(), 5);
//! ```

pub mod angular;
pub mod budget;
pub mod catalog;
pub mod fit;
pub mod magic;
pub mod polarizability;
pub mod scalar;
pub mod spin;
pub mod units;

pub use angular::{lande_g_f, wigner_3j, wigner_3j_exact, wigner_6j, wigner_6j_exact, AngularError, ExactRoot, HalfInt};
pub use budget::{
    assemble_budget, bbr_shift_integral, bbr_static_shift, line_pulling_bound, quadratic_zeeman_shift, quadrupole_shift,
    vdw_shift, zeeman_beta, zeeman_splitting_xi, Budget, BudgetConfig, BudgetEntry, BudgetError, ClockConstants,
};
pub use catalog::{
    merge_catalog, parse_levels, parse_lines, CatalogError, CrossSectionTable, Level, LevelSet, LineCatalog, MergePolicy,
    TransitionLine,
};
pub use fit::{
    fit_saturation, invert_polarizability, parametric_frequencies, DecayTrace, FitError, SaturationFit, TrapConfig,
};
pub use magic::{
    find_magic, hyperpolarizability, ClockState, DifferentialModel, HyperpolarizabilitySample, MagicError,
    MagicSearchResult, StatePair,
};
pub use polarizability::{
    alpha_continuum, alpha_fm, alpha_scalar_j, alpha_tensor_jf, LevelResponse, PolarizabilityError,
    PolarizabilityOptions, PolarizabilitySample,
};
pub use scalar::Real;
pub use spin::{SpinError, SpinGeometry, SpinSystem, SpinTrace, Subspace};

pub type PolarizabilitySample64 = PolarizabilitySample<f64>;
pub type PolarizabilitySample32 = PolarizabilitySample<f32>;
pub type LevelResponse64 = LevelResponse<f64>;
pub type LevelResponse32 = LevelResponse<f32>;
pub type DifferentialModel64 = DifferentialModel<f64>;
pub type DifferentialModel32 = DifferentialModel<f32>;
pub type MagicSearchResult64 = MagicSearchResult<f64>;
pub type MagicSearchResult32 = MagicSearchResult<f32>;
pub type HyperpolarizabilitySample64 = HyperpolarizabilitySample<f64>;
pub type BudgetEntry64 = BudgetEntry<f64>;
pub type BudgetEntry32 = BudgetEntry<f32>;
pub type Budget64 = Budget<f64>;
pub type Budget32 = Budget<f32>;
pub type DecayTrace64 = DecayTrace<f64>;
pub type SaturationFit64 = SaturationFit<f64>;
pub type TrapConfig64 = TrapConfig<f64>;
