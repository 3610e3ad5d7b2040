//! Saturation-recovery lifetime fit and polarizability from parametric
//! resonance frequencies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::units::{BOHR_RADIUS, SPEED_OF_LIGHT, TM169_MASS};

pub const MIN_SAMPLES: usize = 4;
const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("column lengths differ: {0}")]
    LengthMismatch(String),
    #[error("sample {index}: {message}")]
    BadSample { index: usize, message: String },
    #[error("trace is degenerate: {0}")]
    Degenerate(String),
    #[error("trace spans {span_ms} ms, shorter than the estimated lifetime {tau_ms} ms")]
    InsufficientSpan { span_ms: f64, tau_ms: f64 },
    #[error("fit did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("beam waist is required")]
    MissingWaist,
}

/// Population recovery samples: time in ms, normalized population and an
/// optional per-sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace<T> {
    t_ms: Vec<T>,
    n: Vec<T>,
    sigma: Option<Vec<T>>,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    t_ms: f64,
    n: f64,
    #[serde(default)]
    sigma: Option<f64>,
}

impl<T: Real> DecayTrace<T> {
    pub fn new(t_ms: Vec<T>, n: Vec<T>, sigma: Option<Vec<T>>) -> Result<Self, FitError> {
        if t_ms.len() != n.len() {
            return Err(FitError::LengthMismatch(format!("{} times, {} values", t_ms.len(), n.len())));
        }
        if let Some(s) = &sigma {
            if s.len() != n.len() {
                return Err(FitError::LengthMismatch(format!("{} values, {} sigmas", n.len(), s.len())));
            }
            if let Some(i) = s.iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
                return Err(FitError::BadSample {
                    index: i,
                    message: "sigma must be positive".into(),
                });
            }
        }
        for (i, (t, v)) in t_ms.iter().zip(&n).enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(FitError::BadSample {
                    index: i,
                    message: "non-finite value".into(),
                });
            }
            if *t < T::zero() {
                return Err(FitError::BadSample {
                    index: i,
                    message: "negative time".into(),
                });
            }
            if i > 0 && *t <= t_ms[i - 1] {
                return Err(FitError::BadSample {
                    index: i,
                    message: "times must increase strictly".into(),
                });
            }
        }
        Ok(DecayTrace { t_ms, n, sigma })
    }

    /// Reads `t_ms,n[,sigma]` CSV with a header row; `#` starts a comment.
    pub fn parse_csv(text: &str) -> Result<Self, FitError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let (mut t, mut n, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (k, row) in rdr.deserialize::<TraceRow>().enumerate() {
            let row = row.map_err(|e| FitError::Parse {
                line: e.position().map(|p| p.line() as usize).unwrap_or(k + 2),
                message: e.to_string(),
            })?;
            t.push(T::lit(row.t_ms));
            n.push(T::lit(row.n));
            s.push(row.sigma.map(T::lit));
        }
        let sigma = if !s.is_empty() && s.iter().all(Option::is_some) {
            Some(s.into_iter().map(Option::unwrap).collect())
        } else if s.iter().any(Option::is_some) {
            return Err(FitError::LengthMismatch("sigma given for only some rows".into()));
        } else {
            None
        };
        Self::new(t, n, sigma)
    }

    pub fn len(&self) -> usize {
        self.t_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_ms.is_empty()
    }

    pub fn times_ms(&self) -> &[T] {
        &self.t_ms
    }

    pub fn values(&self) -> &[T] {
        &self.n
    }

    pub fn sigma(&self) -> Option<&[T]> {
        self.sigma.as_deref()
    }

    /// Every value multiplied by `k`, sigmas included.
    pub fn scaled(&self, k: T) -> Self {
        DecayTrace {
            t_ms: self.t_ms.clone(),
            n: self.n.iter().map(|v| *v * k).collect(),
            sigma: self.sigma.as_ref().map(|s| s.iter().map(|v| *v * k.abs()).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit<T> {
    pub n0: T,
    pub tau_ms: T,
    /// Covariance of (N₀, τ).
    pub covariance: [[T; 2]; 2],
    pub chi2: T,
    pub dof: usize,
    pub iterations: usize,
}

impl<T: Real> SaturationFit<T> {
    pub fn sigma_n0(&self) -> T {
        self.covariance[0][0].sqrt()
    }

    pub fn sigma_tau_ms(&self) -> T {
        self.covariance[1][1].sqrt()
    }

    pub fn model(&self, t_ms: T) -> T {
        saturation_model(self.n0, self.tau_ms, t_ms)
    }
}

/// N₀(1 − e^{−t/τ}).
pub fn saturation_model<T: Real>(n0: T, tau_ms: T, t_ms: T) -> T {
    -n0 * (-t_ms / tau_ms).exp_m1()
}

struct Normal<T> {
    jtj: [[T; 2]; 2],
    jtr: [T; 2],
    chi2: T,
}

fn normal_equations<T: Real>(trace: &DecayTrace<T>, n0: T, tau: T) -> Normal<T> {
    let mut jtj = [[T::zero(); 2]; 2];
    let mut jtr = [T::zero(); 2];
    let mut chi2 = T::zero();
    for (k, (&t, &y)) in trace.t_ms.iter().zip(&trace.n).enumerate() {
        let w = trace.sigma.as_ref().map_or(T::one(), |s| (s[k] * s[k]).recip());
        let e = (-t / tau).exp();
        let d_n0 = T::one() - e;
        let d_tau = -n0 * e * t / (tau * tau);
        let r = y - n0 * d_n0;
        let j = [d_n0, d_tau];
        for a in 0..2 {
            jtr[a] = jtr[a] + w * j[a] * r;
            for b in 0..2 {
                jtj[a][b] = jtj[a][b] + w * j[a] * j[b];
            }
        }
        chi2 = chi2 + w * r * r;
    }
    Normal { jtj, jtr, chi2 }
}

fn invert2<T: Real>(m: [[T; 2]; 2]) -> Option<[[T; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// Starting point: plateau from the last samples, τ from the 1 − 1/e crossing.
fn initial_guess<T: Real>(trace: &DecayTrace<T>) -> (T, T) {
    let n = trace.len();
    let tail = (n / 4).max(1);
    let n0 = trace.n[n - tail..].iter().fold(T::zero(), |a, v| a + *v) / T::from_usize(tail).unwrap();
    let level = n0 * T::lit(1.0 - (-1.0f64).exp());
    let rising = n0 > T::zero();
    for k in 1..n {
        let (y0, y1) = (trace.n[k - 1], trace.n[k]);
        let crossed = if rising { y0 < level && y1 >= level } else { y0 > level && y1 <= level };
        if crossed {
            let f = (level - y0) / (y1 - y0);
            let tau = trace.t_ms[k - 1] + f * (trace.t_ms[k] - trace.t_ms[k - 1]);
            if tau > T::zero() {
                return (n0, tau);
            }
        }
    }
    let span = trace.t_ms[n - 1] - trace.t_ms[0];
    (n0, span / T::lit(3.0))
}

/// Levenberg-Marquardt fit of N₀(1 − e^{−t/τ}).
///
/// With per-sample sigmas the covariance is (JᵀWJ)⁻¹; otherwise it is
/// scaled by the residual variance χ²/(n−2).
pub fn fit_saturation<T: Real>(trace: &DecayTrace<T>) -> Result<SaturationFit<T>, FitError> {
    let n = trace.len();
    if n < MIN_SAMPLES {
        return Err(FitError::TooFewSamples(n));
    }
    let first = trace.n[0];
    if trace.n.iter().all(|v| *v == first) {
        return Err(FitError::Degenerate("all values are equal".into()));
    }
    let (mut n0, mut tau) = initial_guess(trace);
    let span = trace.t_ms[n - 1] - trace.t_ms[0];
    if span < tau {
        return Err(FitError::InsufficientSpan {
            span_ms: span.to_f64_lossy(),
            tau_ms: tau.to_f64_lossy(),
        });
    }

    let tol = T::lit(STEP_TOLERANCE).max(T::epsilon() * T::lit(16.0));
    let mut lambda = T::lit(1e-3);
    let mut current = normal_equations(trace, n0, tau);
    for it in 1..=MAX_ITERATIONS {
        let mut accepted = false;
        for _ in 0..60 {
            let mut a = current.jtj;
            for (k, row) in a.iter_mut().enumerate() {
                row[k] = row[k] * (T::one() + lambda);
            }
            let Some(inv) = invert2(a) else {
                lambda = lambda * T::lit(10.0);
                continue;
            };
            let dn0 = inv[0][0] * current.jtr[0] + inv[0][1] * current.jtr[1];
            let dtau = inv[1][0] * current.jtr[0] + inv[1][1] * current.jtr[1];
            let (cn0, ctau) = (n0 + dn0, tau + dtau);
            if !(ctau > T::zero()) {
                lambda = lambda * T::lit(10.0);
                continue;
            }
            let trial = normal_equations(trace, cn0, ctau);
            if trial.chi2 <= current.chi2 {
                let small = dn0.abs() <= tol * (n0.abs() + tol) && dtau.abs() <= tol * tau;
                n0 = cn0;
                tau = ctau;
                current = trial;
                lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                accepted = true;
                if small {
                    return finish(trace, n0, tau, current, it);
                }
                break;
            }
            lambda = lambda * T::lit(10.0);
        }
        if !accepted {
            // No downhill step at any damping: already at the minimum.
            return finish(trace, n0, tau, current, it);
        }
    }
    Err(FitError::NoConvergence(MAX_ITERATIONS))
}

fn finish<T: Real>(
    trace: &DecayTrace<T>,
    n0: T,
    tau: T,
    normal: Normal<T>,
    iterations: usize,
) -> Result<SaturationFit<T>, FitError> {
    let inv = invert2(normal.jtj).ok_or_else(|| FitError::Degenerate("singular normal matrix".into()))?;
    let dof = trace.len() - 2;
    let scale = if trace.sigma.is_some() {
        T::one()
    } else {
        normal.chi2 / T::from_usize(dof).unwrap()
    };
    let covariance = [[inv[0][0] * scale, inv[0][1] * scale], [inv[1][0] * scale, inv[1][1] * scale]];
    Ok(SaturationFit {
        n0,
        tau_ms: tau,
        covariance,
        chi2: normal.chi2,
        dof,
        iterations,
    })
}

/// Optical lattice parameters, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig<T> {
    pub power_w: T,
    pub waist_m: Option<T>,
    pub wavelength_m: T,
    pub mass_kg: T,
}

impl<T: Real> TrapConfig<T> {
    /// 169Tm at 532 nm with P = 4 W.
    pub fn thulium_532(waist_m: Option<T>) -> Self {
        TrapConfig {
            power_w: T::lit(4.0),
            waist_m,
            wavelength_m: T::lit(532e-9),
            mass_kg: T::lit(TM169_MASS),
        }
    }

    fn validate(&self) -> Result<(), FitError> {
        for (name, v) in [("power", self.power_w), ("wavelength", self.wavelength_m), ("mass", self.mass_kg)] {
            if !(v > T::zero()) {
                return Err(FitError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Axial and radial trap frequencies (Hz) for a scalar polarizability in a.u.
pub fn parametric_frequencies<T: Real>(config: &TrapConfig<T>, alpha_au: T) -> Result<(T, T), FitError> {
    config.validate()?;
    let w0 = config.waist_m.ok_or(FitError::MissingWaist)?;
    if !(w0 > T::zero()) {
        return Err(FitError::NonPositive("waist"));
    }
    // a₀³αP/(c m₀) evaluated in f64 scale-safe pieces.
    let a0 = T::lit(BOHR_RADIUS);
    let core = (a0 * a0 * a0 / (T::lit(SPEED_OF_LIGHT) * config.mass_kg)) * alpha_au * config.power_w;
    let four = T::lit(4.0);
    let f_a = four / (w0 * config.wavelength_m) * (T::lit(2.0) * core).sqrt();
    let f_r = four / (T::PI() * w0 * w0) * core.sqrt();
    Ok((f_a, f_r))
}

/// α = f_a⁴λ⁴c m₀/(64 f_r² a₀³π² P), a.u.
pub fn invert_polarizability<T: Real>(f_a_hz: T, f_r_hz: T, power_w: T, wavelength_m: T, mass_kg: T) -> Result<T, FitError> {
    for (name, v) in [
        ("f_a", f_a_hz),
        ("f_r", f_r_hz),
        ("power", power_w),
        ("wavelength", wavelength_m),
        ("mass", mass_kg),
    ] {
        if !(v > T::zero()) {
            return Err(FitError::NonPositive(name));
        }
    }
    // Grouped so that f32 never sees a₀³ on its own.
    let x = f_a_hz * wavelength_m;
    let x2 = x * x;
    let a0 = T::lit(BOHR_RADIUS);
    let num = (x2 / a0) * (x2 / a0) * (T::lit(SPEED_OF_LIGHT) * mass_kg / a0);
    Ok(num / (T::lit(64.0) * f_r_hz * f_r_hz * T::PI() * T::PI() * power_w))
}

/// Central value with a band propagated in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizabilityEstimate<T> {
    pub alpha_au: T,
    /// Relative 1σ uncertainty, 4δf_a/f_a ⊕ 2δf_r/f_r ⊕ δP/P.
    pub relative: T,
    pub lower_au: T,
    pub upper_au: T,
}

pub fn invert_polarizability_band<T: Real>(
    f_a_hz: T,
    df_a_hz: T,
    f_r_hz: T,
    df_r_hz: T,
    power_w: T,
    dpower_w: T,
    wavelength_m: T,
    mass_kg: T,
) -> Result<PolarizabilityEstimate<T>, FitError> {
    let alpha = invert_polarizability(f_a_hz, f_r_hz, power_w, wavelength_m, mass_kg)?;
    let a = T::lit(4.0) * df_a_hz / f_a_hz;
    let r = T::lit(2.0) * df_r_hz / f_r_hz;
    let p = dpower_w / power_w;
    let rel = (a * a + r * r + p * p).sqrt();
    Ok(PolarizabilityEstimate {
        alpha_au: alpha,
        relative: rel,
        lower_au: alpha * (-rel).exp(),
        upper_au: alpha * rel.exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(tau: f64, n0: f64) -> DecayTrace<f64> {
        let t: Vec<f64> = (0..=40).map(|k| k as f64 * 10.0).collect();
        let n = t.iter().map(|&t| saturation_model(n0, tau, t)).collect();
        DecayTrace::new(t, n, None).unwrap()
    }

    #[test]
    fn noiseless_recovery() {
        let fit = fit_saturation(&synthetic(112.0, 1.0)).unwrap();
        assert!((fit.tau_ms - 112.0).abs() < 1e-6 * 112.0, "{fit:?}");
        assert!((fit.n0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaling_changes_only_n0() {
        let tr = synthetic(80.0, 1.0);
        let a = fit_saturation(&tr).unwrap();
        let b = fit_saturation(&tr.scaled(3.5)).unwrap();
        assert!((b.n0 / a.n0 - 3.5).abs() < 1e-9);
        assert!((b.tau_ms - a.tau_ms).abs() < 1e-6);
    }

    #[test]
    fn degenerate_input() {
        let t = vec![0.0, 10.0];
        let tr = DecayTrace::new(t, vec![0.1, 0.2], None).unwrap();
        assert!(matches!(fit_saturation(&tr), Err(FitError::TooFewSamples(2))));
        let flat = DecayTrace::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.5; 4], None).unwrap();
        assert!(matches!(fit_saturation(&flat), Err(FitError::Degenerate(_))));
        assert!(DecayTrace::new(vec![0.0, 0.0], vec![0.0, 1.0], None::<Vec<f64>>).is_err());
    }

    #[test]
    fn csv_trace() {
        let tr: DecayTrace<f64> = DecayTrace::parse_csv("# synthetic\nt_ms,n,sigma\n0,0,0.03\n10,0.1,0.03\n").unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.sigma().unwrap()[1], 0.03);
    }

    #[test]
    fn parametric_round_trip() {
        let cfg = TrapConfig::thulium_532(Some(60e-6_f64));
        assert_eq!(parametric_frequencies(&cfg, 0.0).unwrap(), (0.0, 0.0));
        let (fa, fr) = parametric_frequencies(&cfg, 600.0).unwrap();
        let ratio = fa / fr;
        assert!((ratio - std::f64::consts::PI * 60e-6 * 2f64.sqrt() / 532e-9).abs() < 1e-9 * ratio);
        let back = invert_polarizability(fa, fr, cfg.power_w, cfg.wavelength_m, cfg.mass_kg).unwrap();
        assert!((back / 600.0 - 1.0).abs() < 1e-9);
        assert_eq!(
            parametric_frequencies(&TrapConfig::thulium_532(None::<f64>), 1.0),
            Err(FitError::MissingWaist)
        );
    }

    #[test]
    fn f32_inversion() {
        let a64 = invert_polarizability(230e3, 400.0, 4.0, 532e-9, TM169_MASS).unwrap();
        let a32 = invert_polarizability(230e3_f32, 400.0, 4.0, 532e-9, TM169_MASS as f32).unwrap();
        assert!(((a32 as f64) / a64 - 1.0).abs() < 1e-5, "{a32} {a64}");
    }
}
