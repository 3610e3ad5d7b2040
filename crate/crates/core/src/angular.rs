//! Angular-momentum algebra: Wigner 3j and 6j symbols and Landé factors.
//!
//! Symbols are evaluated from the Racah closed forms with factorials held in
//! exact big-integer arithmetic. The result is an [`ExactRoot`], a signed
//! square root of a rational, converted to floating point only at the end.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::scalar::Real;
use crate::units::{BOHR_MAGNETON, NUCLEAR_MAGNETON};

/// Integer or half-integer quantum number stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);
    pub const ONE: HalfInt = HalfInt(2);

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn int(n: i32) -> Self {
        HalfInt(2 * n)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// Degeneracy 2j+1.
    pub const fn multiplicity(self) -> i32 {
        self.0 + 1
    }

    pub fn abs(self) -> Self {
        HalfInt(self.0.abs())
    }

    pub fn value<T: Real>(self) -> T {
        T::lit(self.0 as f64 / 2.0)
    }

    /// j(j+1)
    pub fn casimir<T: Real>(self) -> T {
        let j = self.value::<T>();
        j * (j + T::one())
    }

    /// Projections -j, -j+1, ..., j.
    pub fn projections(self) -> impl Iterator<Item = HalfInt> {
        let j = self.0;
        (-j..=j).step_by(2).map(HalfInt)
    }

    /// Total angular momenta |a-b|, ..., a+b.
    pub fn couplings(a: HalfInt, b: HalfInt) -> impl Iterator<Item = HalfInt> {
        ((a.0 - b.0).abs()..=a.0 + b.0).step_by(2).map(HalfInt)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

/// A number of the form `sign * sqrt(square)` with `square` an exact rational.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactRoot {
    pub negative: bool,
    pub square: BigRational,
}

impl ExactRoot {
    pub fn zero() -> Self {
        ExactRoot {
            negative: false,
            square: BigRational::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.square.is_zero()
    }

    /// Signed square `sign * square`, itself exact.
    pub fn signed_square(&self) -> BigRational {
        if self.negative {
            -self.square.clone()
        } else {
            self.square.clone()
        }
    }

    pub fn to_real<T: Real>(&self) -> T {
        let sq = self.square.to_f64().unwrap_or(f64::NAN);
        let v = T::lit(sq.sqrt());
        if self.negative {
            -v
        } else {
            v
        }
    }
}

fn factorial(n: i32) -> BigInt {
    debug_assert!(n >= 0);
    (2..=n as i64).fold(BigInt::one(), |acc, k| acc * k)
}

#[inline]
fn is_even(n: i32) -> bool {
    n.rem_euclid(2) == 0
}

/// Triangle rule on twice-values, including integer perimeter.
pub fn triangle(a: HalfInt, b: HalfInt, c: HalfInt) -> bool {
    let (a, b, c) = (a.0, b.0, c.0);
    a >= 0 && b >= 0 && c >= 0 && c <= a + b && c >= (a - b).abs() && is_even(a + b + c)
}

/// Δ(abc) = (a+b-c)!(a-b+c)!(-a+b+c)!/(a+b+c+1)! with twice-values.
fn triangle_coefficient(a: i32, b: i32, c: i32) -> BigRational {
    BigRational::new(
        factorial((a + b - c) / 2) * factorial((a - b + c) / 2) * factorial((-a + b + c) / 2),
        factorial((a + b + c) / 2 + 1),
    )
}

fn root_from_parts(prefactor: BigRational, sum: BigRational, negative_phase: bool) -> ExactRoot {
    if sum.is_zero() || prefactor.is_zero() {
        return ExactRoot::zero();
    }
    let negative = sum.is_negative() ^ negative_phase;
    let square = prefactor * &sum * &sum;
    ExactRoot { negative, square }
}

/// Exact Wigner 3j symbol.
pub fn wigner_3j_exact(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> ExactRoot {
    let (j1, j2, j3, m1, m2, m3) = (j1.0, j2.0, j3.0, m1.0, m2.0, m3.0);
    if m1 + m2 + m3 != 0 || !triangle(HalfInt(j1), HalfInt(j2), HalfInt(j3)) {
        return ExactRoot::zero();
    }
    for (j, m) in [(j1, m1), (j2, m2), (j3, m3)] {
        if m.abs() > j || !is_even(j + m) {
            return ExactRoot::zero();
        }
    }

    let mut prefactor = triangle_coefficient(j1, j2, j3);
    let facs = factorial((j1 + m1) / 2)
        * factorial((j1 - m1) / 2)
        * factorial((j2 + m2) / 2)
        * factorial((j2 - m2) / 2)
        * factorial((j3 + m3) / 2)
        * factorial((j3 - m3) / 2);
    prefactor *= BigRational::from_integer(facs);

    // k runs over all integers keeping every factorial argument non-negative
    let a = (j3 - j2 + m1) / 2;
    let b = (j3 - j1 - m2) / 2;
    let c = (j1 + j2 - j3) / 2;
    let d = (j1 - m1) / 2;
    let e = (j2 + m2) / 2;
    let k_min = 0.max(-a).max(-b);
    let k_max = c.min(d).min(e);

    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(a + k)
            * factorial(b + k)
            * factorial(c - k)
            * factorial(d - k)
            * factorial(e - k);
        let term = BigRational::new(BigInt::one(), denom);
        if is_even(k) {
            sum += term;
        } else {
            sum -= term;
        }
    }

    // (-1)^(j1 - j2 - m3)
    let negative_phase = !is_even((j1 - j2 - m3) / 2);
    root_from_parts(prefactor, sum, negative_phase)
}

/// Wigner 3j symbol in floating point. Returns 0 on any selection-rule failure.
pub fn wigner_3j<T: Real>(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> T {
    wigner_3j_exact(j1, j2, j3, m1, m2, m3).to_real()
}

/// Exact Wigner 6j symbol {j1 j2 j3; j4 j5 j6}.
pub fn wigner_6j_exact(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    j4: HalfInt,
    j5: HalfInt,
    j6: HalfInt,
) -> ExactRoot {
    if !(triangle(j1, j2, j3) && triangle(j1, j5, j6) && triangle(j4, j2, j6) && triangle(j4, j5, j3)) {
        return ExactRoot::zero();
    }
    let (j1, j2, j3, j4, j5, j6) = (j1.0, j2.0, j3.0, j4.0, j5.0, j6.0);
    let prefactor = triangle_coefficient(j1, j2, j3)
        * triangle_coefficient(j1, j5, j6)
        * triangle_coefficient(j4, j2, j6)
        * triangle_coefficient(j4, j5, j3);

    let a = [
        (j1 + j2 + j3) / 2,
        (j1 + j5 + j6) / 2,
        (j4 + j2 + j6) / 2,
        (j4 + j5 + j3) / 2,
    ];
    let b = [
        (j1 + j2 + j4 + j5) / 2,
        (j2 + j3 + j5 + j6) / 2,
        (j3 + j1 + j6 + j4) / 2,
    ];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();

    let mut sum = BigRational::zero();
    for t in t_min..=t_max {
        let denom = a.iter().map(|&x| factorial(t - x)).product::<BigInt>()
            * b.iter().map(|&x| factorial(x - t)).product::<BigInt>();
        let term = BigRational::new(factorial(t + 1), denom);
        if is_even(t) {
            sum += term;
        } else {
            sum -= term;
        }
    }
    root_from_parts(prefactor, sum, false)
}

/// Wigner 6j symbol in floating point. Returns 0 on any triad violation.
pub fn wigner_6j<T: Real>(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    j4: HalfInt,
    j5: HalfInt,
    j6: HalfInt,
) -> T {
    wigner_6j_exact(j1, j2, j3, j4, j5, j6).to_real()
}

/// (-1)^x for an integer-valued half-integer combination.
pub fn phase<T: Real>(x: HalfInt) -> T {
    debug_assert!(x.is_integer(), "phase of non-integer {x}");
    if is_even(x.0 / 2) {
        T::one()
    } else {
        -T::one()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AngularError {
    #[error("F = {f} is outside the coupling range of J = {j} and I = {i}")]
    CouplingRange { f: HalfInt, j: HalfInt, i: HalfInt },
}

/// Landé factor of a hyperfine level |J I F⟩.
///
/// Both moments enter with the same sign, following H = -g_I μ_N I·B - g_J μ_B J·B,
/// so g_F μ_B F = g_J μ_B ⟨J⟩ + g_I μ_N ⟨I⟩ projected on F.
pub fn lande_g_f<T: Real>(
    g_j: T,
    g_i: T,
    f: HalfInt,
    j: HalfInt,
    i: HalfInt,
) -> Result<T, AngularError> {
    if !triangle(j, i, f) {
        return Err(AngularError::CouplingRange { f, j, i });
    }
    if f.twice() == 0 {
        return Ok(T::zero());
    }
    let ff = f.casimir::<T>();
    let jj = j.casimir::<T>();
    let ii = i.casimir::<T>();
    let two = T::lit(2.0);
    let electronic = g_j * (ff + jj - ii) / (two * ff);
    let nuclear = g_i * T::lit(NUCLEAR_MAGNETON / BOHR_MAGNETON) * (ff + ii - jj) / (two * ff);
    Ok(electronic + nuclear)
}
