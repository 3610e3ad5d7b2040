//! Magnetic dipole-dipole dynamics of a few large spins on a planar lattice.
//!
//! The quantization axis is normal to the plane, so every pair vector is
//! in-plane and each pair term couples only states whose total magnetization
//! differs by 0 or ±2. The Hamiltonian is stored sparse, in units of h·Hz.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::angular::HalfInt;
use crate::units::{BOHR_MAGNETON, PLANCK, VACUUM_PERMEABILITY};

/// Full subspace limit on atom count.
pub const MAX_ATOMS_FULL: usize = 4;
/// Truncated subspace limit on atom count.
pub const MAX_ATOMS_TRUNCATED: usize = 5;
/// Block dimension above which evolution switches from diagonalization to Krylov.
pub const DENSE_BLOCK_LIMIT: usize = 1200;
pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("{atoms} atoms exceed the limit of {limit} for the {subspace:?} subspace")]
    DimensionLimit {
        atoms: usize,
        limit: usize,
        subspace: Subspace,
    },
    #[error("atoms {0} and {1} share a position")]
    CoincidentPositions(usize, usize),
    #[error("central index {0} is out of range")]
    CentralIndex(usize),
    #[error("geometry needs at least one atom")]
    Empty,
    #[error("state norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("state has dimension {got}, system has {expected}")]
    StateDimension { got: usize, expected: usize },
    #[error("Hamiltonian is not Hermitian (deviation {0})")]
    NotHermitian(f64),
    #[error("trace never crosses {threshold} within {window_ms} ms")]
    NoCrossing { threshold: f64, window_ms: f64 },
    #[error("trace grids differ")]
    MismatchedGrids,
    #[error("distance must be positive")]
    NonPositiveDistance,
    #[error("time grid must be non-negative and increasing")]
    BadTimeGrid,
    #[error("Krylov step failed to converge")]
    KrylovStall,
    #[error("projection {0} is not available in the subspace")]
    Projection(HalfInt),
}

/// Atom positions in units of the lattice spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinGeometry {
    pub positions: Vec<(f64, f64)>,
    pub spacing_nm: f64,
    pub central: usize,
}

impl SpinGeometry {
    /// Centre at the origin, neighbours added at +x, −x, +y, −y: a pair, a line, a T, a plus.
    pub fn standard(atoms: usize) -> Self {
        let all = [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
        SpinGeometry {
            positions: all.iter().copied().take(atoms.min(all.len())).collect(),
            spacing_nm: 400.0,
            central: 0,
        }
    }

    pub fn with_spacing(mut self, spacing_nm: f64) -> Self {
        self.spacing_nm = spacing_nm;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn validate(&self) -> Result<(), SpinError> {
        if self.positions.is_empty() {
            return Err(SpinError::Empty);
        }
        if self.central >= self.positions.len() {
            return Err(SpinError::CentralIndex(self.central));
        }
        if !(self.spacing_nm > 0.0) {
            return Err(SpinError::NonPositiveDistance);
        }
        for i in 0..self.positions.len() {
            for j in i + 1..self.positions.len() {
                let (a, b) = (self.positions[i], self.positions[j]);
                if ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() < 1e-12 {
                    return Err(SpinError::CoincidentPositions(i, j));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subspace {
    /// All 2F+1 sublevels.
    Full,
    /// m ∈ {−2, …, 2}.
    Truncated,
}

impl std::str::FromStr for Subspace {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Subspace::Full),
            "trunc" | "truncated" => Ok(Subspace::Truncated),
            other => Err(format!("unknown subspace `{other}`")),
        }
    }
}

/// Dipolar coupling μ0(g_F μ_B)²/(4π r³ h) in Hz for r in metres.
pub fn dipolar_coupling_hz(g_f: f64, r_m: f64) -> f64 {
    VACUUM_PERMEABILITY * (g_f * BOHR_MAGNETON).powi(2) / (4.0 * PI * r_m.powi(3) * PLANCK)
}

/// Interaction shift μ0(m μ_B)²/(4π r³ h) of two polarized atoms, Hz, for r in nm.
pub fn pair_shift(m: f64, r_nm: f64) -> Result<f64, SpinError> {
    if !(r_nm > 0.0) {
        return Err(SpinError::NonPositiveDistance);
    }
    Ok(dipolar_coupling_hz(m, r_nm * 1e-9))
}

/// N spins with a dipolar Hamiltonian on a product basis.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    pub f: HalfInt,
    pub geometry: SpinGeometry,
    pub subspace: Subspace,
    pub g_f: f64,
    local_m: Vec<HalfInt>,
    dim: usize,
    hamiltonian: CsrMatrix<Complex64>,
}

fn local_projections(f: HalfInt, subspace: Subspace) -> Vec<HalfInt> {
    f.projections()
        .filter(|m| match subspace {
            Subspace::Full => true,
            Subspace::Truncated => m.twice().abs() <= 4,
        })
        .collect()
}

/// Builds the dipolar Hamiltonian for spin `f` on `geometry`.
pub fn build_hamiltonian(geometry: &SpinGeometry, f: HalfInt, subspace: Subspace) -> Result<SpinSystem, SpinError> {
    build_hamiltonian_with_g(geometry, f, subspace, 1.0)
}

/// As [`build_hamiltonian`] with an explicit g_F.
pub fn build_hamiltonian_with_g(
    geometry: &SpinGeometry,
    f: HalfInt,
    subspace: Subspace,
    g_f: f64,
) -> Result<SpinSystem, SpinError> {
    geometry.validate()?;
    let n = geometry.len();
    let limit = match subspace {
        Subspace::Full => MAX_ATOMS_FULL,
        Subspace::Truncated => MAX_ATOMS_TRUNCATED,
    };
    if n > limit {
        return Err(SpinError::DimensionLimit {
            atoms: n,
            limit,
            subspace,
        });
    }
    let local_m = local_projections(f, subspace);
    let d = local_m.len();
    let dim = d.pow(n as u32);
    let fv = f64::from(f.twice()) / 2.0;
    let mval: Vec<f64> = local_m.iter().map(|m| f64::from(m.twice()) / 2.0).collect();
    // ⟨m+1|F+|m⟩ for each local index, zero at the subspace edge
    let raise: Vec<f64> = (0..d)
        .map(|k| if k + 1 < d { (fv * (fv + 1.0) - mval[k] * (mval[k] + 1.0)).sqrt() } else { 0.0 })
        .collect();
    let lower: Vec<f64> = (0..d)
        .map(|k| if k > 0 { (fv * (fv + 1.0) - mval[k] * (mval[k] - 1.0)).sqrt() } else { 0.0 })
        .collect();
    let stride: Vec<usize> = (0..n).map(|a| d.pow((n - 1 - a) as u32)).collect();

    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (geometry.positions[i], geometry.positions[j]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let r = (dx * dx + dy * dy).sqrt();
            let coupling = dipolar_coupling_hz(g_f, r * geometry.spacing_nm * 1e-9);
            let phi = dy.atan2(dx);
            pairs.push((i, j, coupling, phi));
        }
    }

    let rows: Vec<Vec<(usize, Complex64)>> = (0..dim)
        .into_par_iter()
        .map(|col| {
            let digits: Vec<usize> = (0..n).map(|a| (col / stride[a]) % d).collect();
            let mut out: Vec<(usize, Complex64)> = Vec::new();
            let mut diag = 0.0;
            for &(i, j, jc, phi) in &pairs {
                let (ki, kj) = (digits[i], digits[j]);
                diag += jc * mval[ki] * mval[kj];
                // −J/4 (F+F− + F−F+)
                if raise[ki] != 0.0 && lower[kj] != 0.0 {
                    let v = -0.25 * jc * raise[ki] * lower[kj];
                    out.push((col + stride[i] - stride[j], Complex64::new(v, 0.0)));
                }
                if lower[ki] != 0.0 && raise[kj] != 0.0 {
                    let v = -0.25 * jc * lower[ki] * raise[kj];
                    out.push((col - stride[i] + stride[j], Complex64::new(v, 0.0)));
                }
                // −3J/4 (e^{−2iφ} F+F+ + e^{2iφ} F−F−)
                if raise[ki] != 0.0 && raise[kj] != 0.0 {
                    let v = Complex64::from_polar(-0.75 * jc * raise[ki] * raise[kj], -2.0 * phi);
                    out.push((col + stride[i] + stride[j], v));
                }
                if lower[ki] != 0.0 && lower[kj] != 0.0 {
                    let v = Complex64::from_polar(-0.75 * jc * lower[ki] * lower[kj], 2.0 * phi);
                    out.push((col - stride[i] - stride[j], v));
                }
            }
            if diag != 0.0 {
                out.push((col, Complex64::new(diag, 0.0)));
            }
            out
        })
        .collect();

    let mut coo = CooMatrix::new(dim, dim);
    for (col, entries) in rows.into_iter().enumerate() {
        for (row, v) in entries {
            coo.push(row, col, v);
        }
    }
    let hamiltonian = CsrMatrix::from(&coo);
    let sys = SpinSystem {
        f,
        geometry: geometry.clone(),
        subspace,
        g_f,
        local_m,
        dim,
        hamiltonian,
    };
    let dev = sys.hermiticity_deviation();
    if dev > 1e-12 * sys.norm_bound().max(1e-300) {
        return Err(SpinError::NotHermitian(dev));
    }
    Ok(sys)
}

impl SpinSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> usize {
        self.geometry.len()
    }

    pub fn local_projections(&self) -> &[HalfInt] {
        &self.local_m
    }

    pub fn hamiltonian(&self) -> &CsrMatrix<Complex64> {
        &self.hamiltonian
    }

    fn local_dim(&self) -> usize {
        self.local_m.len()
    }

    fn digit(&self, index: usize, atom: usize) -> usize {
        let d = self.local_dim();
        (index / d.pow((self.atoms() - 1 - atom) as u32)) % d
    }

    /// Twice the total magnetization of a basis state.
    pub fn total_m_twice(&self, index: usize) -> i32 {
        (0..self.atoms()).map(|a| self.local_m[self.digit(index, a)].twice()).sum()
    }

    /// Parity of the total magnetization (0 or 1) of a basis state.
    pub fn parity(&self, index: usize) -> i32 {
        (self.total_m_twice(index) / 2).rem_euclid(2)
    }

    /// Largest |H_ij − conj(H_ji)|.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.hamiltonian
            .triplet_iter()
            .map(|(i, j, v)| {
                let t = self.hamiltonian.get_entry(j, i).map(|e| e.into_value()).unwrap_or_default();
                (v - t.conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Largest absolute row sum, an upper bound on the spectral radius in Hz.
    pub fn norm_bound(&self) -> f64 {
        self.hamiltonian
            .row_iter()
            .map(|r| r.values().iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entry coupling two different basis states, Hz.
    pub fn max_off_diagonal(&self) -> f64 {
        self.hamiltonian
            .triplet_iter()
            .filter(|(i, j, _)| i != j)
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Product state with atom k in `ms[k]`.
    pub fn product_state(&self, ms: &[HalfInt]) -> Result<DVector<Complex64>, SpinError> {
        let d = self.local_dim();
        let mut idx = 0;
        for m in ms {
            let k = self.local_m.iter().position(|x| x == m).ok_or(SpinError::Projection(*m))?;
            idx = idx * d + k;
        }
        let mut v = DVector::zeros(self.dim);
        v[idx] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    /// All atoms in m = 0 (or the lowest |m| for half-integer F).
    pub fn polarized_zero(&self) -> DVector<Complex64> {
        let m0 = if self.f.is_integer() { HalfInt::ZERO } else { HalfInt::HALF };
        self.product_state(&vec![m0; self.atoms()]).expect("m=0 is always present")
    }

    fn central_populations(&self, psi: &DVector<Complex64>) -> Vec<f64> {
        let mut p = vec![0.0; self.local_dim()];
        let c = self.geometry.central;
        for (i, a) in psi.iter().enumerate() {
            p[self.digit(i, c)] += a.norm_sqr();
        }
        p
    }

    fn energy(&self, psi: &DVector<Complex64>) -> f64 {
        let hpsi = &self.hamiltonian * psi;
        psi.dotc(&hpsi).re
    }

    fn check_state(&self, psi: &DVector<Complex64>) -> Result<(), SpinError> {
        if psi.len() != self.dim {
            return Err(SpinError::StateDimension {
                got: psi.len(),
                expected: self.dim,
            });
        }
        let n = psi.norm();
        if (n - 1.0).abs() > 1e-10 {
            return Err(SpinError::NotNormalized(n));
        }
        Ok(())
    }

    /// Parity sectors touched by `psi`, each with its basis indices.
    fn sectors(&self, psi: &DVector<Complex64>) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for parity in 0..2 {
            let idx: Vec<usize> = (0..self.dim).filter(|&i| self.parity(i) == parity).collect();
            if idx.iter().any(|&i| psi[i].norm_sqr() > 0.0) {
                out.push(idx);
            }
        }
        out
    }

    fn dense_block(&self, idx: &[usize]) -> DMatrix<Complex64> {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut m = DMatrix::zeros(idx.len(), idx.len());
        for (i, j, v) in self.hamiltonian.triplet_iter() {
            if pos[i] != usize::MAX && pos[j] != usize::MAX {
                m[(pos[i], pos[j])] += *v;
            }
        }
        m
    }

    /// Eigendecomposition of each parity sector touched by `psi`.
    pub fn spectral(&self, psi: &DVector<Complex64>) -> Spectral {
        let blocks = self
            .sectors(psi)
            .into_iter()
            .map(|idx| {
                let eig = SymmetricEigen::new(self.dense_block(&idx));
                let local = DVector::from_iterator(idx.len(), idx.iter().map(|&i| psi[i]));
                let coeffs = eig.eigenvectors.adjoint() * &local;
                SpectralBlock {
                    indices: idx,
                    energies: eig.eigenvalues,
                    vectors: eig.eigenvectors,
                    coeffs,
                }
            })
            .collect();
        Spectral { blocks }
    }

    /// Time evolution of `psi` sampled on `times_ms`.
    pub fn evolve(&self, psi: &DVector<Complex64>, times_ms: &[f64]) -> Result<Evolution, SpinError> {
        self.evolve_with(psi, times_ms, Propagator::Auto)
    }

    pub fn evolve_with(
        &self,
        psi: &DVector<Complex64>,
        times_ms: &[f64],
        propagator: Propagator,
    ) -> Result<Evolution, SpinError> {
        self.check_state(psi)?;
        if times_ms.iter().any(|t| !(*t >= 0.0)) || times_ms.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SpinError::BadTimeGrid);
        }
        let largest_block = self.sectors(psi).iter().map(Vec::len).max().unwrap_or(0);
        let use_dense = match propagator {
            Propagator::Auto => largest_block <= DENSE_BLOCK_LIMIT,
            Propagator::Dense => true,
            Propagator::Krylov => false,
        };
        let e0 = self.energy(psi);
        let states: Vec<DVector<Complex64>> = if use_dense {
            let sp = self.spectral(psi);
            times_ms.par_iter().map(|&t| sp.state_at(t * 1e-3, self.dim)).collect()
        } else {
            let mut out = Vec::with_capacity(times_ms.len());
            let mut cur = psi.clone();
            let mut t_prev = 0.0;
            for &t in times_ms {
                cur = krylov_propagate(&self.hamiltonian, &cur, 2.0 * PI * (t - t_prev) * 1e-3, self.norm_bound())?;
                t_prev = t;
                out.push(cur.clone());
            }
            out
        };
        let mut populations = Vec::with_capacity(states.len());
        let mut norm_drift: f64 = 0.0;
        let mut energy_drift: f64 = 0.0;
        for s in &states {
            populations.push(self.central_populations(s));
            norm_drift = norm_drift.max((s.norm() - 1.0).abs());
            energy_drift = energy_drift.max((self.energy(s) - e0).abs());
        }
        Ok(Evolution {
            trace: SpinTrace {
                times_ms: times_ms.to_vec(),
                projections: self.local_m.clone(),
                populations,
            },
            norm_drift,
            energy_drift,
            energy_scale: self.norm_bound(),
            dense: use_dense,
        })
    }

    /// Infinite-time average of the central atom's populations (diagonal ensemble).
    pub fn infinite_time_average(&self, psi: &DVector<Complex64>) -> Result<Vec<f64>, SpinError> {
        self.check_state(psi)?;
        let sp = self.spectral(psi);
        let tol = 1e-9 * self.norm_bound().max(1e-300);
        let mut p = vec![0.0; self.local_dim()];
        for b in &sp.blocks {
            let n = b.energies.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &c| b.energies[a].total_cmp(&b.energies[c]));
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n && b.energies[order[end]] - b.energies[order[end - 1]] <= tol {
                    end += 1;
                }
                // projection of psi onto this eigenspace
                let mut proj = DVector::<Complex64>::zeros(b.indices.len());
                for &k in &order[start..end] {
                    proj += b.vectors.column(k) * b.coeffs[k];
                }
                for (local, &global) in b.indices.iter().enumerate() {
                    p[self.digit(global, self.geometry.central)] += proj[local].norm_sqr();
                }
                start = end;
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagator {
    Auto,
    Dense,
    Krylov,
}

#[derive(Debug, Clone)]
pub struct SpectralBlock {
    pub indices: Vec<usize>,
    pub energies: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
    pub coeffs: DVector<Complex64>,
}

#[derive(Debug, Clone)]
pub struct Spectral {
    pub blocks: Vec<SpectralBlock>,
}

impl Spectral {
    fn state_at(&self, t_s: f64, dim: usize) -> DVector<Complex64> {
        let mut out = DVector::zeros(dim);
        for b in &self.blocks {
            let phased = DVector::from_iterator(
                b.coeffs.len(),
                b.coeffs
                    .iter()
                    .zip(b.energies.iter())
                    .map(|(c, e)| c * Complex64::from_polar(1.0, -2.0 * PI * e * t_s)),
            );
            let local = &b.vectors * phased;
            for (k, &i) in b.indices.iter().enumerate() {
                out[i] = local[k];
            }
        }
        out
    }
}

/// exp(−iτH)v by Lanczos with full reorthogonalization and adaptive substeps.
///
/// `tau` is in units of 1/Hz·rad, i.e. 2πt for H in Hz.
pub fn krylov_propagate(
    h: &CsrMatrix<Complex64>,
    v: &DVector<Complex64>,
    tau: f64,
    norm_bound: f64,
) -> Result<DVector<Complex64>, SpinError> {
    const M_MAX: usize = 40;
    const TOL: f64 = 1e-13;
    let mut cur = v.clone();
    let mut remaining = tau;
    let mut stalls = 0;
    while remaining > 0.0 {
        let beta0 = cur.norm();
        if beta0 == 0.0 {
            return Ok(cur);
        }
        let m_max = M_MAX.min(cur.len());
        let mut basis: Vec<DVector<Complex64>> = vec![cur.unscale(beta0)];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut breakdown = false;
        for j in 0..m_max {
            let mut w = h * &basis[j];
            let a = basis[j].dotc(&w).re;
            alpha.push(a);
            for q in &basis {
                let c = q.dotc(&w);
                w.axpy(-c, q, Complex64::new(1.0, 0.0));
            }
            let b = w.norm();
            if b <= 1e-12 * norm_bound.max(1e-300) {
                breakdown = true;
                break;
            }
            beta.push(b);
            if j + 1 < m_max {
                basis.push(w.unscale(b));
            }
        }
        let m = alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let tail = if breakdown { 0.0 } else { beta.get(m - 1).copied().unwrap_or(0.0) };
        let mut step = remaining;
        let coeffs = loop {
            let y = lanczos_exp(&eig, step);
            let err = tail * y[m - 1].norm();
            if err <= TOL || step < remaining * 1e-6 {
                break y;
            }
            step *= 0.5;
        };
        if step < remaining * 1e-6 {
            stalls += 1;
            if stalls > 1000 {
                return Err(SpinError::KrylovStall);
            }
        }
        let mut next = DVector::<Complex64>::zeros(cur.len());
        for (q, c) in basis.iter().zip(coeffs.iter()) {
            next.axpy(*c * beta0, q, Complex64::new(1.0, 0.0));
        }
        cur = next;
        remaining -= step;
    }
    Ok(cur)
}

fn lanczos_exp(eig: &SymmetricEigen<f64, nalgebra::Dyn>, tau: f64) -> DVector<Complex64> {
    let s = &eig.eigenvectors;
    let m = s.nrows();
    let mut y = DVector::<Complex64>::zeros(m);
    for k in 0..m {
        let w = Complex64::from_polar(s[(0, k)], -tau * eig.eigenvalues[k]);
        for i in 0..m {
            y[i] += w * s[(i, k)];
        }
    }
    y
}

/// Populations of the central atom's sublevels over time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinTrace {
    pub times_ms: Vec<f64>,
    pub projections: Vec<HalfInt>,
    /// `populations[t][k]` is the population of `projections[k]` at `times_ms[t]`.
    pub populations: Vec<Vec<f64>>,
}

impl SpinTrace {
    /// Population of sublevel m over time.
    pub fn of(&self, m: HalfInt) -> Option<Vec<f64>> {
        let k = self.projections.iter().position(|x| *x == m)?;
        Some(self.populations.iter().map(|p| p[k]).collect())
    }

    pub fn initial_level(&self) -> Vec<f64> {
        self.of(HalfInt::ZERO).unwrap_or_default()
    }

    /// Mean population of m over samples with t ≥ `from_ms`.
    pub fn window_mean(&self, m: HalfInt, from_ms: f64) -> Option<f64> {
        let p = self.of(m)?;
        let sel: Vec<f64> = self
            .times_ms
            .iter()
            .zip(p)
            .filter(|(t, _)| **t >= from_ms)
            .map(|(_, v)| v)
            .collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub trace: SpinTrace,
    /// max |‖ψ(t)‖ − 1|
    pub norm_drift: f64,
    /// max |⟨H⟩(t) − ⟨H⟩(0)|, Hz
    pub energy_drift: f64,
    /// Bound on ‖H‖, Hz.
    pub energy_scale: f64,
    pub dense: bool,
}

/// First time (ms) the series drops below `threshold`, by linear interpolation.
pub fn relaxation_time(times_ms: &[f64], values: &[f64], threshold: f64) -> Result<f64, SpinError> {
    if times_ms.len() != values.len() {
        return Err(SpinError::MismatchedGrids);
    }
    for k in 1..values.len() {
        if values[k] < threshold && values[k - 1] >= threshold {
            let (t0, t1) = (times_ms[k - 1], times_ms[k]);
            let (p0, p1) = (values[k - 1], values[k]);
            return Ok(t0 + (threshold - p0) / (p1 - p0) * (t1 - t0));
        }
    }
    Err(SpinError::NoCrossing {
        threshold,
        window_ms: times_ms.last().copied().unwrap_or(0.0),
    })
}

/// Largest |P_full − P_truncated| of the m = 0 population over `window_ms`.
pub fn truncation_error(full: &SpinTrace, truncated: &SpinTrace, window_ms: (f64, f64)) -> Result<f64, SpinError> {
    if full.times_ms.len() != truncated.times_ms.len()
        || full.times_ms.iter().zip(&truncated.times_ms).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(SpinError::MismatchedGrids);
    }
    let (a, b) = (full.initial_level(), truncated.initial_level());
    Ok(full
        .times_ms
        .iter()
        .zip(a.iter().zip(&b))
        .filter(|(t, _)| **t >= window_ms.0 && **t <= window_ms.1)
        .map(|(_, (x, y))| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Uniform time grid from 0 to `t_max_ms` with `steps` intervals.
pub fn time_grid(t_max_ms: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| t_max_ms * k as f64 / steps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_atom_has_no_coupling() {
        let sys = build_hamiltonian(&SpinGeometry::standard(1), HalfInt::int(4), Subspace::Full).unwrap();
        assert_eq!(sys.dim(), 9);
        assert_eq!(sys.hamiltonian().nnz(), 0);
    }

    #[test]
    fn two_spin_half_pauli_oracle() {
        // pair along the y axis so the e^{±2iφ} phases are exercised
        let geo = SpinGeometry {
            positions: vec![(0.0, 0.0), (0.0, 1.0)],
            spacing_nm: 400.0,
            central: 0,
        };
        let sys = build_hamiltonian(&geo, HalfInt::HALF, Subspace::Full).unwrap();
        let j = dipolar_coupling_hz(1.0, 400e-9);
        let sx = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0.5, 0.), c(0.5, 0.), c(0., 0.)]);
        let sy = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -0.5), c(0., 0.5), c(0., 0.)]);
        // basis order is m = −1/2, +1/2
        let sz = DMatrix::from_row_slice(2, 2, &[c(-0.5, 0.), c(0., 0.), c(0., 0.), c(0.5, 0.)]);
        let flip = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        // reorder Pauli-basis (up, down) operators into (down, up)
        let re = |m: &DMatrix<Complex64>| &flip * m * &flip;
        let (sx, sy, sz) = (re(&sx), re(&sy), sz);
        let dot = sx.kronecker(&sx) + sy.kronecker(&sy) + sz.kronecker(&sz);
        let ry = sy.kronecker(&sy);
        let expect = (dot - ry * c(3.0, 0.0)) * c(j, 0.0);
        let mut got = DMatrix::<Complex64>::zeros(4, 4);
        for (i, k, v) in sys.hamiltonian().triplet_iter() {
            got[(i, k)] = *v;
        }
        assert!((got - expect).norm() < 1e-12 * j);
    }

    #[test]
    fn zero_hamiltonian_keeps_state() {
        let sys = build_hamiltonian(&SpinGeometry::standard(1), HalfInt::int(4), Subspace::Full).unwrap();
        let ev = sys.evolve(&sys.polarized_zero(), &time_grid(10.0, 10)).unwrap();
        assert!(ev.trace.initial_level().iter().all(|p| (p - 1.0).abs() < 1e-15));
    }

    #[test]
    fn krylov_matches_dense() {
        let sys = build_hamiltonian(&SpinGeometry::standard(3), HalfInt::int(4), Subspace::Truncated).unwrap();
        let psi = sys.polarized_zero();
        let grid = time_grid(40.0, 20);
        let a = sys.evolve_with(&psi, &grid, Propagator::Dense).unwrap();
        let b = sys.evolve_with(&psi, &grid, Propagator::Krylov).unwrap();
        let d = truncation_error(&a.trace, &b.trace, (0.0, 40.0)).unwrap();
        assert!(d < 1e-10, "{d}");
        assert!(b.norm_drift < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = build_hamiltonian(&SpinGeometry::standard(2), HalfInt::int(4), Subspace::Full).unwrap();
        let bad = sys.polarized_zero() * c(2.0, 0.0);
        assert!(matches!(sys.evolve(&bad, &[0.0]), Err(SpinError::NotNormalized(_))));
        assert!(matches!(
            build_hamiltonian(&SpinGeometry::standard(5), HalfInt::int(4), Subspace::Full),
            Err(SpinError::DimensionLimit { .. })
        ));
        let geo = SpinGeometry {
            positions: vec![(0.0, 0.0), (0.0, 0.0)],
            spacing_nm: 400.0,
            central: 0,
        };
        assert!(matches!(
            build_hamiltonian(&geo, HalfInt::int(4), Subspace::Full),
            Err(SpinError::CoincidentPositions(0, 1))
        ));
    }

    #[test]
    fn pair_shift_values() {
        assert_eq!(pair_shift(0.0, 400.0).unwrap(), 0.0);
        let a = pair_shift(4.0, 400.0).unwrap();
        let b = pair_shift(4.0, 800.0).unwrap();
        assert!((a / b - 8.0).abs() < 1e-12);
        assert!(pair_shift(4.0, 0.0).is_err());
    }

    #[test]
    fn crossing_interpolates() {
        let t = [0.0, 1.0, 2.0];
        let p = [1.0, 0.8, 0.6];
        assert!((relaxation_time(&t, &p, 0.7).unwrap() - 1.5).abs() < 1e-12);
        assert!(matches!(
            relaxation_time(&t, &[1.0; 3], 0.7),
            Err(SpinError::NoCrossing { .. })
        ));
    }
}
