//! Arithmetic in the permutation-symmetric subspace of `N` two-level atoms.
//!
//! A [`DickeVector`] stores complex amplitudes `c_k` over Dicke states
//! `|k,N>` (k atoms in the metastable level) for `k = 0..=k_max`. The
//! collective operators `S` and `S†` act as tridiagonal shifts whose
//! coefficients come from closed forms, so nothing here ever touches
//! factorials or the `2^N` product basis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for exact algebraic identities.
pub const EXACT_TOL: f64 = 1e-12;

/// Excitation cap used when a constructor is not told otherwise.
pub const DEFAULT_K_MAX: usize = 16;

pub fn default_k_max(n_atoms: usize) -> usize {
    n_atoms.min(DEFAULT_K_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LadderDirection {
    Raise,
    Lower,
}

/// Multi-stage amplification schedule.
///
/// `TypeI` repeats `S S†` n times; `TypeII` applies `S†` n times and then
/// `S` n times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Schedule {
    #[serde(alias = "type1", alias = "I", alias = "type-I")]
    TypeI,
    #[serde(alias = "type2", alias = "II", alias = "type-II")]
    TypeII,
}

/// Amplitudes over Dicke states `|0,N>..|k_max,N>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DickeVector {
    n_atoms: usize,
    amplitudes: Vec<Complex64>,
    normalized: bool,
}

impl DickeVector {
    /// Builds an unnormalized vector; `amplitudes.len() - 1` becomes `k_max`.
    pub fn new(n_atoms: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::out_of_range("N", 0, ">= 1"));
        }
        if amplitudes.is_empty() || amplitudes.len() > n_atoms + 1 {
            return Err(Error::out_of_range(
                "k_max + 1",
                amplitudes.len(),
                format!("1..={}", n_atoms + 1),
            ));
        }
        if amplitudes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("non-finite amplitude".into()));
        }
        Ok(Self {
            n_atoms,
            amplitudes,
            normalized: false,
        })
    }

    pub fn zeros(n_atoms: usize, k_max: usize) -> Result<Self> {
        Self::new(n_atoms, vec![Complex64::new(0.0, 0.0); k_max + 1])
    }

    /// The Dicke state `|k,N>` with room for `max(k, min(N, 16))` excitations.
    pub fn basis(n_atoms: usize, k: usize) -> Result<Self> {
        Self::basis_with_k_max(n_atoms, k, k.max(default_k_max(n_atoms)))
    }

    pub fn basis_with_k_max(n_atoms: usize, k: usize, k_max: usize) -> Result<Self> {
        if k > k_max {
            return Err(Error::out_of_range("k", k, format!("0..={k_max}")));
        }
        let mut v = Self::zeros(n_atoms, k_max)?;
        v.amplitudes[k] = Complex64::new(1.0, 0.0);
        v.normalized = true;
        Ok(v)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn k_max(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Amplitude on `|k,N>`; zero beyond `k_max`.
    pub fn amplitude(&self, k: usize) -> Complex64 {
        self.amplitudes.get(k).copied().unwrap_or_default()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &DickeVector) -> Result<Complex64> {
        self.check_same_ensemble(other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Returns the normalized vector together with the norm it had.
    pub fn normalize(&self) -> Result<(DickeVector, f64)> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let amplitudes = self.amplitudes.iter().map(|c| c / norm).collect();
        Ok((
            DickeVector {
                n_atoms: self.n_atoms,
                amplitudes,
                normalized: true,
            },
            norm,
        ))
    }

    pub fn scaled(&self, factor: Complex64) -> DickeVector {
        DickeVector {
            n_atoms: self.n_atoms,
            amplitudes: self.amplitudes.iter().map(|c| c * factor).collect(),
            normalized: self.normalized && (factor.norm() - 1.0).abs() <= EXACT_TOL,
        }
    }

    /// Changes the allocated excitation cap. Shrinking fails if it would drop
    /// a nonzero amplitude.
    pub fn with_k_max(&self, k_max: usize) -> Result<DickeVector> {
        if k_max > self.n_atoms {
            return Err(Error::out_of_range("k_max", k_max, format!("0..={}", self.n_atoms)));
        }
        if self.amplitudes.iter().skip(k_max + 1).any(|c| *c != Complex64::default()) {
            return Err(Error::TruncationOverflow(format!(
                "cannot shrink to k_max = {k_max} without dropping amplitude"
            )));
        }
        let mut amplitudes = self.amplitudes.clone();
        amplitudes.resize(k_max + 1, Complex64::default());
        Ok(DickeVector {
            n_atoms: self.n_atoms,
            amplitudes,
            normalized: self.normalized,
        })
    }

    /// Amplitude ratio `c_1 / c_0`, the quantity the gain acts on.
    pub fn excitation_ratio(&self) -> Option<Complex64> {
        let c0 = self.amplitude(0);
        (c0.norm() > 0.0).then(|| self.amplitude(1) / c0)
    }

    fn check_same_ensemble(&self, other: &DickeVector) -> Result<()> {
        if self.n_atoms != other.n_atoms {
            return Err(Error::DimensionMismatch(format!(
                "N = {} vs N = {}",
                self.n_atoms, other.n_atoms
            )));
        }
        if self.amplitudes.len() != other.amplitudes.len() {
            return Err(Error::DimensionMismatch(format!(
                "k_max = {} vs k_max = {}",
                self.k_max(),
                other.k_max()
            )));
        }
        Ok(())
    }
}

/// `<k±1,N| S(†) |k,N>`.
///
/// Raise: `sqrt((k+1)(1 - k/N))`, exactly zero at `k = N`.
/// Lower: `sqrt(k(1 - (k-1)/N))`, exactly zero at `k = 0`.
pub fn ladder_coeff(dir: LadderDirection, k: usize, n_atoms: usize) -> Result<f64> {
    if n_atoms == 0 {
        return Err(Error::out_of_range("N", 0, ">= 1"));
    }
    if k > n_atoms {
        return Err(Error::out_of_range("k", k, format!("0..={n_atoms}")));
    }
    Ok(ladder_coeff_unchecked(dir, k, n_atoms))
}

pub(crate) fn ladder_coeff_unchecked(dir: LadderDirection, k: usize, n_atoms: usize) -> f64 {
    let n = n_atoms as f64;
    match dir {
        LadderDirection::Raise => {
            if k >= n_atoms {
                0.0
            } else {
                ((k + 1) as f64 * (n_atoms - k) as f64 / n).sqrt()
            }
        }
        LadderDirection::Lower => {
            if k == 0 {
                0.0
            } else {
                (k as f64 * (n_atoms + 1 - k) as f64 / n).sqrt()
            }
        }
    }
}

/// Eigenvalue of `S S†` on `|k,N>`: the single-stage gain `(k+1)(1 - k/N)`.
pub fn ss_dagger_eigenvalue(k: usize, n_atoms: usize) -> f64 {
    if k >= n_atoms {
        return 0.0;
    }
    (k + 1) as f64 * (n_atoms - k) as f64 / n_atoms as f64
}

/// Applies `S†` or `S`. The output is unnormalized.
pub fn apply_ladder(dir: LadderDirection, state: &DickeVector) -> Result<DickeVector> {
    let n = state.n_atoms;
    let k_max = state.k_max();
    let mut out = vec![Complex64::default(); k_max + 1];
    match dir {
        LadderDirection::Raise => {
            for (k, c) in state.amplitudes.iter().enumerate() {
                let coeff = ladder_coeff_unchecked(dir, k, n);
                if coeff == 0.0 || *c == Complex64::default() {
                    continue;
                }
                if k == k_max {
                    return Err(Error::TruncationOverflow(format!(
                        "S† moves amplitude past k_max = {k_max} (N = {n})"
                    )));
                }
                out[k + 1] += c * coeff;
            }
        }
        LadderDirection::Lower => {
            for (k, c) in state.amplitudes.iter().enumerate().skip(1) {
                out[k - 1] += c * ladder_coeff_unchecked(dir, k, n);
            }
        }
    }
    DickeVector::new(n, out)
}

/// Applies the diagonal operator `S S†`.
pub fn apply_ss_dagger(state: &DickeVector) -> DickeVector {
    let n = state.n_atoms;
    DickeVector {
        n_atoms: n,
        amplitudes: state
            .amplitudes
            .iter()
            .enumerate()
            .map(|(k, c)| c * ss_dagger_eigenvalue(k, n))
            .collect(),
        normalized: false,
    }
}

/// Eigenvalue of `(S S†)^n` (TypeI) or `S^n (S†)^n` (TypeII) on `|k,N>`.
pub fn gain_eigenvalue(schedule: Schedule, k: usize, n_atoms: usize, stages: usize) -> Result<f64> {
    if n_atoms == 0 {
        return Err(Error::out_of_range("N", 0, ">= 1"));
    }
    if k > n_atoms {
        return Err(Error::out_of_range("k", k, format!("0..={n_atoms}")));
    }
    match schedule {
        Schedule::TypeI => Ok(ss_dagger_eigenvalue(k, n_atoms).powi(stages as i32)),
        Schedule::TypeII => {
            if k + stages > n_atoms {
                return Err(Error::Domain(format!(
                    "k + n = {} exceeds N = {n_atoms}",
                    k + stages
                )));
            }
            let n = n_atoms as f64;
            Ok((k + 1..=k + stages)
                .map(|h| h as f64 * (n_atoms + 1 - h) as f64 / n)
                .product())
        }
    }
}

/// Gain of the `|S>` amplitude relative to `|G>` after `stages` stages:
/// `2^n (1 - 1/N)^n` for TypeI and `(n+1)(1 - n/N)` for TypeII.
pub fn relative_gain(schedule: Schedule, stages: usize, n_atoms: usize) -> f64 {
    let n = n_atoms as f64;
    match schedule {
        Schedule::TypeI => (2.0 * (1.0 - 1.0 / n)).powi(stages as i32),
        Schedule::TypeII => (stages + 1) as f64 * (1.0 - stages as f64 / n),
    }
}

/// Normalized `|G> + alpha |S>` with the default excitation cap.
pub fn weak_coherent_atomic_state(alpha: Complex64, n_atoms: usize) -> Result<DickeVector> {
    weak_coherent_atomic_state_with_k_max(alpha, n_atoms, default_k_max(n_atoms))
}

pub fn weak_coherent_atomic_state_with_k_max(
    alpha: Complex64,
    n_atoms: usize,
    k_max: usize,
) -> Result<DickeVector> {
    if k_max < 1 {
        return Err(Error::out_of_range("k_max", k_max, ">= 1"));
    }
    let mut v = DickeVector::zeros(n_atoms, k_max)?;
    v.amplitudes[0] = Complex64::new(1.0, 0.0);
    v.amplitudes[1] = alpha;
    Ok(v.normalize()?.0)
}

/// `|<a|b>|^2 / (<a|a><b|b>)`.
pub fn fidelity(a: &DickeVector, b: &DickeVector) -> Result<f64> {
    if a.n_atoms != b.n_atoms {
        return Err(Error::DimensionMismatch(format!(
            "N = {} vs N = {}",
            a.n_atoms, b.n_atoms
        )));
    }
    let k_max = a.k_max().max(b.k_max());
    let a = a.with_k_max(k_max)?;
    let b = b.with_k_max(k_max)?;
    let (na, nb) = (a.norm_sqr(), b.norm_sqr());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(a.inner(&b)?.norm_sqr() / (na * nb))
}
