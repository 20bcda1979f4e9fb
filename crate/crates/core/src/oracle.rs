//! Brute-force reference in the full `2^N` product space.
//!
//! Basis states are bitmasks, little-endian: bit `i` set means atom `i` is in
//! `|s>`. Dicke states are built as explicit permutation sums and the
//! collective operators as literal sums of single-atom flips, so nothing in
//! this module shares code with the closed forms in [`crate::dicke`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dicke::{DickeVector, LadderDirection};
use crate::error::{Error, Result};

/// Hard memory guard: `2^14` amplitudes.
pub const MAX_ORACLE_ATOMS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct FullStateVector {
    n_atoms: usize,
    amplitudes: Vec<Complex64>,
}

impl FullStateVector {
    pub fn zeros(n_atoms: usize) -> Result<Self> {
        check_guard(n_atoms)?;
        Ok(Self {
            n_atoms,
            amplitudes: vec![Complex64::default(); 1 << n_atoms],
        })
    }

    /// Product state with the atoms in `excited` set to `|s>`.
    pub fn product(n_atoms: usize, excited: &[usize]) -> Result<Self> {
        let mut v = Self::zeros(n_atoms)?;
        let mut mask = 0usize;
        for &i in excited {
            if i >= n_atoms {
                return Err(Error::out_of_range("atom index", i, format!("0..{n_atoms}")));
            }
            mask |= 1 << i;
        }
        v.amplitudes[mask] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, mask: usize) -> Complex64 {
        self.amplitudes[mask]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn check_guard(n_atoms: usize) -> Result<()> {
    if n_atoms > MAX_ORACLE_ATOMS {
        return Err(Error::ResourceGuard(format!(
            "oracle limited to N <= {MAX_ORACLE_ATOMS}, got N = {n_atoms}"
        )));
    }
    if n_atoms == 0 {
        return Err(Error::out_of_range("N", 0, ">= 1"));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `|k,N>` as an equal-weight sum over every bitmask with `k` bits set.
pub fn build_dicke_full(k: usize, n_atoms: usize) -> Result<FullStateVector> {
    check_guard(n_atoms)?;
    if k > n_atoms {
        return Err(Error::out_of_range("k", k, format!("0..={n_atoms}")));
    }
    let mut v = FullStateVector::zeros(n_atoms)?;
    let members: Vec<usize> = (0..v.amplitudes.len())
        .filter(|m| m.count_ones() as usize == k)
        .collect();
    let weight = 1.0 / (members.len() as f64).sqrt();
    for m in members {
        v.amplitudes[m] = Complex64::new(weight, 0.0);
    }
    Ok(v)
}

/// `(1/sqrt(N)) sum_i sigma_i^±` applied literally, one atom at a time.
pub fn apply_collective_full(dir: LadderDirection, state: &FullStateVector) -> FullStateVector {
    let n = state.n_atoms;
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = vec![Complex64::default(); state.amplitudes.len()];
    for (mask, c) in state.amplitudes.iter().enumerate() {
        if *c == Complex64::default() {
            continue;
        }
        for atom in 0..n {
            let bit = 1 << atom;
            let excited = mask & bit != 0;
            match (dir, excited) {
                (LadderDirection::Raise, false) => out[mask | bit] += c * scale,
                (LadderDirection::Lower, true) => out[mask & !bit] += c * scale,
                _ => {}
            }
        }
    }
    FullStateVector {
        n_atoms: n,
        amplitudes: out,
    }
}

/// Symmetric-subspace components `c_k = <k,N|state>` and the norm of what is
/// left over.
pub fn project_to_dicke(state: &FullStateVector) -> (DickeVector, f64) {
    let n = state.n_atoms;
    let mut sums = vec![Complex64::default(); n + 1];
    for (mask, c) in state.amplitudes.iter().enumerate() {
        sums[mask.count_ones() as usize] += c;
    }
    let inv_sqrt_binom: Vec<f64> = (0..=n).map(|k| 1.0 / binomial(n, k).sqrt()).collect();
    let coeffs: Vec<Complex64> = sums
        .iter()
        .zip(&inv_sqrt_binom)
        .map(|(s, w)| s * w)
        .collect();
    let residual_sqr: f64 = state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(mask, c)| {
            let k = mask.count_ones() as usize;
            (c - coeffs[k] * inv_sqrt_binom[k]).norm_sqr()
        })
        .sum();
    let dicke = DickeVector::new(n, coeffs).expect("length N + 1 with finite entries");
    (dicke, residual_sqr.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderCheck {
    pub k: usize,
    pub direction: LadderDirection,
    pub closed_form: f64,
    pub brute_force: f64,
    pub deviation: f64,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueCheck {
    pub k: usize,
    pub closed_form: f64,
    pub brute_force: f64,
    pub deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub n_atoms: usize,
    pub tolerance: f64,
    pub ladder: Vec<LadderCheck>,
    pub ss_dagger: Vec<EigenvalueCheck>,
    pub max_deviation: f64,
    pub max_residual: f64,
    pub pass: bool,
}

/// Deviation threshold applied by [`verify_ladder`].
pub const VERIFY_TOL: f64 = 1e-12;

/// Compares the brute-force collective operators with the closed-form ladder
/// coefficients and `S S†` eigenvalues for every `k` at this `N`.
pub fn verify_ladder(n_atoms: usize) -> Result<VerificationReport> {
    check_guard(n_atoms)?;
    if n_atoms < 1 {
        return Err(Error::out_of_range("N", n_atoms, "1..=14"));
    }
    let mut ladder = Vec::new();
    let mut ss_dagger = Vec::new();
    for k in 0..=n_atoms {
        let dicke = build_dicke_full(k, n_atoms)?;
        for dir in [LadderDirection::Raise, LadderDirection::Lower] {
            let (proj, residual) = project_to_dicke(&apply_collective_full(dir, &dicke));
            let target = match dir {
                LadderDirection::Raise if k < n_atoms => Some(k + 1),
                LadderDirection::Lower if k > 0 => Some(k - 1),
                _ => None,
            };
            let brute_force = target.map_or(0.0, |t| proj.amplitude(t).re);
            // Anything outside the target component is also a deviation.
            let stray: f64 = proj
                .amplitudes()
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != target)
                .map(|(_, c)| c.norm())
                .fold(0.0, f64::max);
            let closed_form = crate::dicke::ladder_coeff(dir, k, n_atoms)?;
            let deviation = (brute_force - closed_form).abs().max(stray);
            ladder.push(LadderCheck {
                k,
                direction: dir,
                closed_form,
                brute_force,
                deviation,
                residual,
                pass: deviation < VERIFY_TOL && residual < VERIFY_TOL,
            });
        }
        let raised = apply_collective_full(LadderDirection::Raise, &dicke);
        let (proj, _) = project_to_dicke(&apply_collective_full(LadderDirection::Lower, &raised));
        let brute_force = proj.amplitude(k).re;
        let closed_form = crate::dicke::ss_dagger_eigenvalue(k, n_atoms);
        let deviation = (brute_force - closed_form).abs();
        ss_dagger.push(EigenvalueCheck {
            k,
            closed_form,
            brute_force,
            deviation,
            pass: deviation < VERIFY_TOL,
        });
    }
    let max_deviation = ladder
        .iter()
        .map(|c| c.deviation)
        .chain(ss_dagger.iter().map(|c| c.deviation))
        .fold(0.0, f64::max);
    let max_residual = ladder.iter().map(|c| c.residual).fold(0.0, f64::max);
    let pass = ladder.iter().all(|c| c.pass) && ss_dagger.iter().all(|c| c.pass);
    Ok(VerificationReport {
        n_atoms,
        tolerance: VERIFY_TOL,
        ladder,
        ss_dagger,
        max_deviation,
        max_residual,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dicke_full_examples() {
        let g = build_dicke_full(0, 3).unwrap();
        assert_eq!(g.amplitude(0b000), Complex64::new(1.0, 0.0));
        assert_eq!(g.norm_sqr(), 1.0);

        let s = build_dicke_full(1, 3).unwrap();
        for mask in [0b001, 0b010, 0b100] {
            assert_abs_diff_eq!(s.amplitude(mask).re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        }
        assert_eq!(s.amplitude(0b011), Complex64::default());

        let d = build_dicke_full(2, 4).unwrap();
        let support: Vec<_> = (0..16).filter(|m| d.amplitude(*m).norm() > 0.0).collect();
        assert_eq!(support.len(), 6);
        for m in support {
            assert_abs_diff_eq!(d.amplitude(m).re, 1.0 / 6f64.sqrt(), epsilon = 1e-15);
        }
        for n in 1..=10 {
            for k in 0..=n {
                assert_abs_diff_eq!(build_dicke_full(k, n).unwrap().norm_sqr(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn guard_rejects_large_ensembles() {
        assert!(matches!(build_dicke_full(0, 15), Err(Error::ResourceGuard(_))));
        assert!(matches!(verify_ladder(20), Err(Error::ResourceGuard(_))));
        assert!(FullStateVector::zeros(14).is_ok());
    }

    #[test]
    fn collective_examples() {
        for n in [1, 4, 9] {
            let lowered = apply_collective_full(LadderDirection::Lower, &build_dicke_full(0, n).unwrap());
            assert_eq!(lowered.norm_sqr(), 0.0);
        }
        let raised = apply_collective_full(LadderDirection::Raise, &build_dicke_full(0, 4).unwrap());
        let target = build_dicke_full(1, 4).unwrap();
        for (a, b) in raised.amplitudes().iter().zip(target.amplitudes()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
        let raised = apply_collective_full(LadderDirection::Raise, &build_dicke_full(1, 10).unwrap());
        let (proj, residual) = project_to_dicke(&raised);
        assert_abs_diff_eq!(proj.amplitude(2).re, 1.3416407864998738, epsilon = 1e-12);
        assert!(residual < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let (proj, residual) = project_to_dicke(&build_dicke_full(2, 5).unwrap());
        assert_abs_diff_eq!(proj.amplitude(2).re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.norm_sqr(), 1.0, epsilon = 1e-12);
        assert!(residual < 1e-12);

        let (proj, residual) = project_to_dicke(&FullStateVector::product(4, &[0]).unwrap());
        assert_abs_diff_eq!(proj.amplitude(1).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(residual, 3f64.sqrt() / 2.0, epsilon = 1e-15);

        let (proj, residual) = project_to_dicke(&FullStateVector::zeros(6).unwrap());
        assert_eq!(proj.norm_sqr(), 0.0);
        assert_eq!(residual, 0.0);
    }

    #[test]
    fn verify_small_and_medium_ensembles() {
        for n in [2, 10] {
            let report = verify_ladder(n).unwrap();
            assert!(report.pass);
            assert!(report.max_deviation < 1e-12);
        }
        let report = verify_ladder(3).unwrap();
        let k1 = report.ss_dagger.iter().find(|c| c.k == 1).unwrap();
        assert_abs_diff_eq!(k1.brute_force, 4.0 / 3.0, epsilon = 1e-12);
    }

    /// The two-excitation branches of `S†|S>` collect two paths each, and
    /// each single-excitation branch of the following `S` collects `N - 1`.
    #[test]
    fn path_counting_for_three_atoms() {
        let n = 3;
        let raised = apply_collective_full(LadderDirection::Raise, &build_dicke_full(1, n).unwrap());
        for mask in [0b011, 0b101, 0b110] {
            let paths = raised.amplitude(mask).re * n as f64;
            assert_abs_diff_eq!(paths, 2.0, epsilon = 1e-12);
        }
        let lowered = apply_collective_full(LadderDirection::Lower, &raised);
        for mask in [0b001, 0b010, 0b100] {
            // (1/sqrt N) * (2/N) per incoming path, N - 1 paths.
            let per_path = 2.0 / n as f64 / (n as f64).sqrt();
            assert_abs_diff_eq!(lowered.amplitude(mask).re / per_path, (n - 1) as f64, epsilon = 1e-12);
        }
    }
}
