//! Joint atom–photon states on a truncated Fock space.
//!
//! The tensor is indexed by `(k, n_a, n_b, n_c)`: Dicke excitation number,
//! Stokes photons (mode `a`), anti-Stokes photons (mode `b`) and photons in
//! the lumped undetected mode `c`. Row-major with `n_c` fastest.
//!
//! The write process couples `S†` to `√β_w a† + √(1-β_w) c†`, the read
//! process couples `S` to `√β_r b† + √(1-β_r) c†`. Each is applied either as
//! the first-order operator `1 + X` or as the exact `exp(X)`, where
//! `X = √p (A ⊗ Ã† - A† ⊗ Ã)` is the time-integrated generator.

use std::fmt::Write as _;

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::dicke::{ladder_coeff_unchecked, DickeVector, LadderDirection};
use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION_CAP: usize = 2_000_000;

/// Largest population the exact propagator may push into a top Fock level.
pub const LEAKAGE_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeTruncation {
    pub fock_a_max: usize,
    pub fock_b_max: usize,
    /// 0 disables the loss mode.
    pub fock_c_max: usize,
    pub atomic_k_max: usize,
    pub dimension_cap: usize,
}

impl ModeTruncation {
    /// `a, b, c <= 4`, `k <= min(N, 10)`.
    pub fn default_for(n_atoms: usize) -> Self {
        Self {
            fock_a_max: 4,
            fock_b_max: 4,
            fock_c_max: 4,
            atomic_k_max: n_atoms.min(10),
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn dimension(&self) -> usize {
        (self.atomic_k_max + 1) * (self.fock_a_max + 1) * (self.fock_b_max + 1) * (self.fock_c_max + 1)
    }

    pub fn validate(&self, n_atoms: usize) -> Result<()> {
        if self.fock_a_max < 1 {
            return Err(Error::out_of_range("fock_a_max", self.fock_a_max, ">= 1"));
        }
        if self.fock_b_max < 1 {
            return Err(Error::out_of_range("fock_b_max", self.fock_b_max, ">= 1"));
        }
        if self.atomic_k_max < 1 || self.atomic_k_max > n_atoms {
            return Err(Error::out_of_range(
                "atomic_k_max",
                self.atomic_k_max,
                format!("1..={n_atoms}"),
            ));
        }
        if self.dimension() > self.dimension_cap {
            return Err(Error::ResourceGuard(format!(
                "joint dimension {} exceeds cap {}",
                self.dimension(),
                self.dimension_cap
            )));
        }
        Ok(())
    }

    fn dims(&self) -> Dims {
        Dims {
            k: self.atomic_k_max + 1,
            a: self.fock_a_max + 1,
            b: self.fock_b_max + 1,
            c: self.fock_c_max + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dims {
    k: usize,
    a: usize,
    b: usize,
    c: usize,
}

impl Dims {
    fn len(&self) -> usize {
        self.k * self.a * self.b * self.c
    }

    fn index(&self, k: usize, a: usize, b: usize, c: usize) -> usize {
        ((k * self.a + a) * self.b + b) * self.c + c
    }

    fn unpack(&self, idx: usize) -> (usize, usize, usize, usize) {
        let c = idx % self.c;
        let rest = idx / self.c;
        let b = rest % self.b;
        let rest = rest / self.b;
        (rest / self.a, rest % self.a, b, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvolutionOrder {
    #[serde(alias = "first_order", alias = "first")]
    FirstOrder,
    #[serde(alias = "exact")]
    Exact,
}

/// Photon counts a detector must register in modes `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeraldPattern {
    pub detect_a: usize,
    pub detect_b: usize,
}

impl HeraldPattern {
    pub const fn new(detect_a: usize, detect_b: usize) -> Self {
        Self { detect_a, detect_b }
    }

    pub const PAIR: HeraldPattern = HeraldPattern::new(1, 1);
    pub const STOKES: HeraldPattern = HeraldPattern::new(1, 0);
    pub const ANTI_STOKES: HeraldPattern = HeraldPattern::new(0, 1);
    pub const NONE: HeraldPattern = HeraldPattern::new(0, 0);
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    n_atoms: usize,
    truncation: ModeTruncation,
    amplitudes: Vec<Complex64>,
}

impl JointState {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn truncation(&self) -> &ModeTruncation {
        &self.truncation
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn get(&self, k: usize, a: usize, b: usize, c: usize) -> Complex64 {
        self.amplitudes[self.truncation.dims().index(k, a, b, c)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `atomic ⊗ |n_a, n_b>_ab ⊗ |0>_c`.
    pub fn product(atomic: &DickeVector, trunc: ModeTruncation, pattern: HeraldPattern) -> Result<Self> {
        trunc.validate(atomic.n_atoms())?;
        check_pattern(&trunc, pattern)?;
        if atomic.k_max() > trunc.atomic_k_max {
            // Allowed only when the extra amplitudes vanish.
            atomic.with_k_max(trunc.atomic_k_max)?;
        }
        let dims = trunc.dims();
        let mut amplitudes = vec![Complex64::default(); dims.len()];
        for (k, c) in atomic.amplitudes().iter().enumerate().take(dims.k) {
            amplitudes[dims.index(k, pattern.detect_a, pattern.detect_b, 0)] = *c;
        }
        Ok(Self {
            n_atoms: atomic.n_atoms(),
            truncation: trunc,
            amplitudes,
        })
    }

    /// Unnormalized atomic vectors `<n_a, n_b, n_c| psi>`, one per loss sector `n_c`.
    pub fn project(&self, pattern: HeraldPattern) -> Result<Vec<DickeVector>> {
        check_pattern(&self.truncation, pattern)?;
        let dims = self.truncation.dims();
        (0..dims.c)
            .map(|c| {
                let amps = (0..dims.k)
                    .map(|k| self.amplitudes[dims.index(k, pattern.detect_a, pattern.detect_b, c)])
                    .collect();
                DickeVector::new(self.n_atoms, amps)
            })
            .collect()
    }

    /// Probability of each `(n_a, n_b)` detection pattern with mode `c`
    /// traced out, normalized by the total squared norm.
    pub fn outcome_distribution(&self) -> Vec<(HeraldPattern, f64)> {
        let dims = self.truncation.dims();
        let mut weights = vec![0.0; dims.a * dims.b];
        for (idx, amp) in self.amplitudes.iter().enumerate() {
            let (_, a, b, _) = dims.unpack(idx);
            weights[a * dims.b + b] += amp.norm_sqr();
        }
        let total: f64 = weights.iter().sum();
        weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                let p = if total > 0.0 { w / total } else { 0.0 };
                (HeraldPattern::new(i / dims.b, i % dims.b), p)
            })
            .collect()
    }

    /// Density matrix over `(k, n_a, n_b)` with mode `c` traced out,
    /// unnormalized. Row index is `(k * (a_max+1) + n_a) * (b_max+1) + n_b`.
    pub fn trace_out_loss(&self) -> DensityMatrix {
        let dims = self.truncation.dims();
        let reduced = dims.k * dims.a * dims.b;
        let mut rho = DensityMatrix::zeros(reduced);
        let mut column = vec![Complex64::default(); reduced];
        for c in 0..dims.c {
            for (r, slot) in column.iter_mut().enumerate() {
                *slot = self.amplitudes[r * dims.c + c];
            }
            if column.iter().any(|z| *z != Complex64::default()) {
                rho.add_pure(1.0, &column);
            }
        }
        rho
    }

    /// Plain-text dump, one nonzero amplitude per line:
    /// `k n_a n_b n_c re im`.
    pub fn dump_text(&self) -> String {
        let dims = self.truncation.dims();
        let mut out = String::from("# k n_a n_b n_c re im\n");
        for (idx, amp) in self.amplitudes.iter().enumerate() {
            if *amp == Complex64::default() {
                continue;
            }
            let (k, a, b, c) = dims.unpack(idx);
            let _ = writeln!(out, "{k} {a} {b} {c} {:?} {:?}", amp.re, amp.im);
        }
        out
    }

    fn top_populations(&self) -> [(&'static str, f64); 4] {
        let dims = self.truncation.dims();
        let mut pops = [("atomic", 0.0), ("a", 0.0), ("b", 0.0), ("c", 0.0)];
        for (idx, amp) in self.amplitudes.iter().enumerate() {
            let (k, a, b, c) = dims.unpack(idx);
            let w = amp.norm_sqr();
            if k + 1 == dims.k && self.truncation.atomic_k_max < self.n_atoms {
                pops[0].1 += w;
            }
            if a + 1 == dims.a {
                pops[1].1 += w;
            }
            if b + 1 == dims.b {
                pops[2].1 += w;
            }
            if dims.c > 1 && c + 1 == dims.c {
                pops[3].1 += w;
            }
        }
        pops
    }
}

fn check_pattern(trunc: &ModeTruncation, pattern: HeraldPattern) -> Result<()> {
    if pattern.detect_a > trunc.fock_a_max {
        return Err(Error::out_of_range("detect_a", pattern.detect_a, format!("0..={}", trunc.fock_a_max)));
    }
    if pattern.detect_b > trunc.fock_b_max {
        return Err(Error::out_of_range("detect_b", pattern.detect_b, format!("0..={}", trunc.fock_b_max)));
    }
    Ok(())
}

/// `atomic ⊗ |0>_a |0>_b |0>_c`.
pub fn build_joint(atomic: &DickeVector, trunc: ModeTruncation) -> Result<JointState> {
    JointState::product(atomic, trunc, HeraldPattern::NONE)
}

/// Which Raman process a propagator implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Process {
    /// `S† a†`: Stokes emission.
    Write,
    /// `S b†`: anti-Stokes emission.
    Read,
}

#[derive(Debug, Clone)]
struct Block {
    indices: Vec<usize>,
    /// `exp(X)` restricted to the block; real orthogonal since `X` is real
    /// antisymmetric.
    unitary: DMatrix<f64>,
}

#[derive(Debug, Clone)]
enum Kernel {
    Identity,
    FirstOrder {
        /// `(row, col, value)` entries of the generator.
        entries: Vec<(usize, usize, f64)>,
        /// Basis states whose creation term leaves the truncation.
        overflow: Vec<(usize, &'static str)>,
    },
    Exact {
        blocks: Vec<Block>,
    },
}

/// A write or read evolution operator for one truncation, reusable across
/// many input states.
#[derive(Debug, Clone)]
pub struct Propagator {
    n_atoms: usize,
    truncation: ModeTruncation,
    order: EvolutionOrder,
    kernel: Kernel,
}

impl Propagator {
    pub fn new(
        process: Process,
        n_atoms: usize,
        trunc: ModeTruncation,
        coupling: f64,
        beta: f64,
        order: EvolutionOrder,
    ) -> Result<Self> {
        trunc.validate(n_atoms)?;
        let (p_name, b_name) = match process {
            Process::Write => ("p_w", "beta_w"),
            Process::Read => ("p_r", "beta_r"),
        };
        if !(0.0..=1.0).contains(&coupling) {
            return Err(Error::out_of_range(p_name, coupling, "[0, 1]"));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::out_of_range(b_name, beta, "(0, 1]"));
        }
        if trunc.fock_c_max == 0 && beta != 1.0 {
            return Err(Error::Domain(format!(
                "{b_name} = {beta} < 1 needs a loss mode (fock_c_max >= 1)"
            )));
        }
        let kernel = if coupling == 0.0 {
            Kernel::Identity
        } else {
            let (entries, overflow) = generator(process, n_atoms, &trunc, coupling, beta);
            match order {
                EvolutionOrder::FirstOrder => Kernel::FirstOrder { entries, overflow },
                EvolutionOrder::Exact => Kernel::Exact {
                    blocks: exponentiate(&entries, trunc.dims().len()),
                },
            }
        };
        Ok(Self {
            n_atoms,
            truncation: trunc,
            order,
            kernel,
        })
    }

    pub fn order(&self) -> EvolutionOrder {
        self.order
    }

    pub fn apply(&self, joint: &JointState) -> Result<JointState> {
        let evolved = self.apply_unguarded(joint)?;
        if self.is_exact() {
            check_leakage(&leakage_gain(joint, &evolved), evolved.norm_sqr())?;
        }
        Ok(evolved)
    }

    pub(crate) fn is_exact(&self) -> bool {
        matches!(self.kernel, Kernel::Exact { .. })
    }

    /// [`Propagator::apply`] without the leakage guard, for callers that
    /// check an ensemble as a whole.
    pub(crate) fn apply_unguarded(&self, joint: &JointState) -> Result<JointState> {
        if joint.n_atoms != self.n_atoms || joint.truncation != self.truncation {
            return Err(Error::DimensionMismatch(
                "propagator and state were built for different spaces".into(),
            ));
        }
        let psi = &joint.amplitudes;
        let amplitudes = match &self.kernel {
            Kernel::Identity => psi.clone(),
            Kernel::FirstOrder { entries, overflow } => {
                if let Some((_, mode)) = overflow.iter().find(|(i, _)| psi[*i] != Complex64::default()) {
                    return Err(Error::TruncationOverflow(format!(
                        "first-order creation term leaves the {mode} truncation"
                    )));
                }
                let mut out = psi.clone();
                for &(row, col, v) in entries {
                    out[row] += psi[col] * v;
                }
                out
            }
            Kernel::Exact { blocks } => {
                let mut out = psi.clone();
                for block in blocks {
                    for (r, &row) in block.indices.iter().enumerate() {
                        out[row] = block
                            .indices
                            .iter()
                            .enumerate()
                            .map(|(c, &col)| psi[col] * block.unitary[(r, c)])
                            .sum();
                    }
                }
                out
            }
        };
        Ok(JointState {
            n_atoms: joint.n_atoms,
            truncation: joint.truncation,
            amplitudes,
        })
    }
}

/// Unnormalized population gained in each top truncation level.
pub(crate) fn leakage_gain(before: &JointState, after: &JointState) -> [(&'static str, f64); 4] {
    let mut out = after.top_populations();
    for (slot, (_, pre)) in out.iter_mut().zip(before.top_populations()) {
        slot.1 -= pre;
    }
    out
}

/// Rejects exact evolutions that pushed more than [`LEAKAGE_LIMIT`] of the
/// total weight `norm` into a top truncation level.
pub(crate) fn check_leakage(gain: &[(&'static str, f64); 4], norm: f64) -> Result<()> {
    let norm = norm.max(f64::MIN_POSITIVE);
    for &(mode, g) in gain {
        let gained = g / norm;
        if gained > LEAKAGE_LIMIT {
            return Err(Error::TruncationLeakage {
                mode,
                population: gained,
                limit: LEAKAGE_LIMIT,
            });
        }
    }
    Ok(())
}

type Entries = (Vec<(usize, usize, f64)>, Vec<(usize, &'static str)>);

/// Sparse real antisymmetric generator `√p (A ⊗ Ã† - A† ⊗ Ã)`.
fn generator(process: Process, n_atoms: usize, trunc: &ModeTruncation, coupling: f64, beta: f64) -> Entries {
    let dims = trunc.dims();
    let root_p = coupling.sqrt();
    let detected = beta.sqrt();
    let lost = (1.0 - beta).max(0.0).sqrt();
    let mut entries = Vec::new();
    let mut overflow = Vec::new();
    for from in 0..dims.len() {
        let (k, a, b, c) = dims.unpack(from);
        let (atomic, k_to) = match process {
            Process::Write => (ladder_coeff_unchecked(LadderDirection::Raise, k, n_atoms), k + 1),
            Process::Read => {
                if k == 0 {
                    continue;
                }
                (ladder_coeff_unchecked(LadderDirection::Lower, k, n_atoms), k - 1)
            }
        };
        if atomic == 0.0 {
            continue;
        }
        let (m, m_limit, m_name) = match process {
            Process::Write => (a, dims.a, "a"),
            Process::Read => (b, dims.b, "b"),
        };
        let branches = [
            (detected * ((m + 1) as f64).sqrt(), m + 1 < m_limit, m_name, true),
            (lost * ((c + 1) as f64).sqrt(), c + 1 < dims.c, "c", false),
        ];
        for (photon, in_photon_range, name, into_detected) in branches {
            if photon == 0.0 {
                continue;
            }
            if k_to >= dims.k {
                overflow.push((from, "atomic"));
                continue;
            }
            if !in_photon_range {
                overflow.push((from, name));
                continue;
            }
            let to = match (into_detected, process) {
                (true, Process::Write) => dims.index(k_to, a + 1, b, c),
                (true, Process::Read) => dims.index(k_to, a, b + 1, c),
                (false, _) => dims.index(k_to, a, b, c + 1),
            };
            let v = root_p * atomic * photon;
            entries.push((to, from, v));
            entries.push((from, to, -v));
        }
    }
    (entries, overflow)
}

/// `exp(X)` block by block: connected components of the generator's
/// coupling graph, each exponentiated through the eigendecomposition of the
/// Hermitian matrix `iX`.
fn exponentiate(entries: &[(usize, usize, f64)], dim: usize) -> Vec<Block> {
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(r, c, _) in entries {
        let (ra, rb) = (find(&mut parent, r), find(&mut parent, c));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut blocks: std::collections::BTreeMap<usize, (Vec<usize>, Vec<(usize, usize, f64)>)> =
        Default::default();
    for &(r, c, v) in entries {
        let root = find(&mut parent, r);
        let block = blocks.entry(root).or_default();
        block.0.extend([r, c]);
        block.1.push((r, c, v));
    }
    // Blocks that differ only in a spectator mode share their matrix.
    let mut cache: HashMap<Vec<(usize, usize, u64)>, DMatrix<f64>> = HashMap::new();
    blocks
        .into_values()
        .map(|(mut indices, block_entries)| {
            indices.sort_unstable();
            indices.dedup();
            let pos = |i: usize| indices.binary_search(&i).expect("index belongs to its block");
            let mut local: Vec<(usize, usize, u64)> =
                block_entries.iter().map(|&(r, c, v)| (pos(r), pos(c), v.to_bits())).collect();
            local.sort_unstable();
            let n = indices.len();
            let unitary = cache
                .entry(local)
                .or_insert_with_key(|local| {
                    let mut x = DMatrix::<f64>::zeros(n, n);
                    for &(r, c, v) in local {
                        x[(r, c)] += f64::from_bits(v);
                    }
                    x.exp()
                })
                .clone();
            Block { indices, unitary }
        })
        .collect()
}

pub fn apply_write(joint: &JointState, p_w: f64, beta_w: f64, order: EvolutionOrder) -> Result<JointState> {
    Propagator::new(Process::Write, joint.n_atoms, joint.truncation, p_w, beta_w, order)?.apply(joint)
}

pub fn apply_read(joint: &JointState, p_r: f64, beta_r: f64, order: EvolutionOrder) -> Result<JointState> {
    Propagator::new(Process::Read, joint.n_atoms, joint.truncation, p_r, beta_r, order)?.apply(joint)
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeraldOutcome {
    /// Normalized conditional atomic state and the probability of the pattern.
    Heralded { atomic: DickeVector, probability: f64 },
    ZeroProbability,
}

impl HeraldOutcome {
    pub fn probability(&self) -> f64 {
        match self {
            HeraldOutcome::Heralded { probability, .. } => *probability,
            HeraldOutcome::ZeroProbability => 0.0,
        }
    }
}

/// Projects modes `a`, `b` onto `pattern` and returns the pure conditional
/// atomic state.
///
/// The probability is the pattern's weight (mode `c` summed incoherently)
/// divided by the state's total squared norm, which makes it meaningful for
/// the non-unitary first-order evolution as well. If more than one loss
/// sector survives the projection the conditional state is mixed and
/// [`Error::MixedState`] is returned.
pub fn herald(joint: &JointState, pattern: HeraldPattern) -> Result<HeraldOutcome> {
    let sectors = joint.project(pattern)?;
    let weights: Vec<f64> = sectors.iter().map(DickeVector::norm_sqr).collect();
    let weight: f64 = weights.iter().sum();
    let total = joint.norm_sqr();
    if weight == 0.0 || total == 0.0 {
        return Ok(HeraldOutcome::ZeroProbability);
    }
    let mut live = sectors.iter().zip(&weights).filter(|(_, w)| **w > 0.0);
    let (sector, _) = live.next().expect("weight is positive");
    if live.next().is_some() {
        return Err(Error::MixedState);
    }
    Ok(HeraldOutcome::Heralded {
        atomic: sector.normalize()?.0,
        probability: weight / total,
    })
}

/// Conditional atomic density matrix for `pattern` with mode `c` traced out,
/// normalized to unit trace, together with the pattern probability. A
/// zero-probability pattern yields the zero matrix.
pub fn reduced_conditional_density(joint: &JointState, pattern: HeraldPattern) -> Result<(DensityMatrix, f64)> {
    let sectors = joint.project(pattern)?;
    let mut rho = DensityMatrix::zeros(joint.truncation.atomic_k_max + 1);
    for s in &sectors {
        rho.add_pure(1.0, s.amplitudes());
    }
    let weight = rho.trace();
    let total = joint.norm_sqr();
    if weight == 0.0 || total == 0.0 {
        return Ok((DensityMatrix::zeros(rho.dim()), 0.0));
    }
    Ok((rho.normalized(), weight / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicke::weak_coherent_atomic_state;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn lossless(n: usize) -> ModeTruncation {
        ModeTruncation {
            fock_c_max: 0,
            ..ModeTruncation::default_for(n)
        }
    }

    #[test]
    fn build_joint_examples() {
        let trunc = ModeTruncation::default_for(50);
        let g = DickeVector::basis_with_k_max(50, 0, 8).unwrap();
        let j = build_joint(&g, trunc).unwrap();
        assert_eq!(j.get(0, 0, 0, 0), c(1.0));
        assert_eq!(j.norm_sqr(), 1.0);

        let x = weak_coherent_atomic_state(c(0.3), 50).unwrap();
        let j = build_joint(&x, trunc).unwrap();
        let nonzero: Vec<_> = j.amplitudes().iter().filter(|a| a.norm() > 0.0).collect();
        assert_eq!(nonzero.len(), 2);
        assert!(j.get(1, 0, 0, 0).norm() > 0.0);
        assert_abs_diff_eq!(j.norm_sqr(), x.norm_sqr(), epsilon = 1e-15);

        // k_max 16 with nothing above 10 is accepted; populated k = 11 is not.
        let high = DickeVector::basis(50, 11).unwrap();
        assert!(build_joint(&high, trunc).is_err());
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let trunc = ModeTruncation {
            dimension_cap: 100,
            ..ModeTruncation::default_for(50)
        };
        let g = DickeVector::basis_with_k_max(50, 0, 8).unwrap();
        assert!(matches!(build_joint(&g, trunc), Err(Error::ResourceGuard(_))));
    }

    #[test]
    fn zero_coupling_is_identity() {
        let x = weak_coherent_atomic_state(c(0.2), 30).unwrap();
        let j = build_joint(&x, ModeTruncation::default_for(30)).unwrap();
        for order in [EvolutionOrder::FirstOrder, EvolutionOrder::Exact] {
            assert_eq!(apply_write(&j, 0.0, 1.0, order).unwrap(), j);
            assert_eq!(apply_read(&j, 0.0, 0.5, order).unwrap(), j);
        }
    }

    #[test]
    fn first_order_write_on_ground_state() {
        let p = 0.04;
        let j = build_joint(&DickeVector::basis_with_k_max(20, 0, 8).unwrap(), lossless(20)).unwrap();
        let out = apply_write(&j, p, 1.0, EvolutionOrder::FirstOrder).unwrap();
        assert_eq!(out.get(0, 0, 0, 0), c(1.0));
        assert_abs_diff_eq!(out.get(1, 1, 0, 0).re, p.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(out.norm_sqr(), 1.0 + p, epsilon = 1e-15);
    }

    #[test]
    fn first_order_read_examples() {
        let trunc = lossless(20);
        let g = build_joint(&DickeVector::basis_with_k_max(20, 0, 8).unwrap(), trunc).unwrap();
        assert_eq!(apply_read(&g, 0.3, 1.0, EvolutionOrder::FirstOrder).unwrap(), g);

        let p = 0.09;
        let s = build_joint(&DickeVector::basis_with_k_max(20, 1, 8).unwrap(), trunc).unwrap();
        let out = apply_read(&s, p, 1.0, EvolutionOrder::FirstOrder).unwrap();
        assert_eq!(out.get(1, 0, 0, 0), c(1.0));
        assert_abs_diff_eq!(out.get(0, 0, 1, 0).re, p.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn exact_is_close_to_first_order_for_weak_coupling() {
        let p = 1e-4;
        let x = weak_coherent_atomic_state(c(0.1), 100).unwrap();
        let j = build_joint(&x, ModeTruncation::default_for(100)).unwrap();
        let fo = apply_write(&j, p, 1.0, EvolutionOrder::FirstOrder).unwrap();
        let ex = apply_write(&j, p, 1.0, EvolutionOrder::Exact).unwrap();
        let diff: f64 = fo
            .amplitudes()
            .iter()
            .zip(ex.amplitudes())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 2e-4, "diff = {diff}");
        assert_abs_diff_eq!(ex.norm_sqr(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn exact_evolution_is_unitary_with_loss_mode() {
        let x = weak_coherent_atomic_state(Complex64::new(0.2, -0.1), 40).unwrap();
        let trunc = ModeTruncation {
            fock_a_max: 5,
            fock_b_max: 5,
            fock_c_max: 5,
            atomic_k_max: 10,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        };
        let j = build_joint(&x, trunc).unwrap();
        let w = apply_write(&j, 1e-3, 0.6, EvolutionOrder::Exact).unwrap();
        let r = apply_read(&w, 2e-3, 0.8, EvolutionOrder::Exact).unwrap();
        assert_abs_diff_eq!(r.norm_sqr(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn exact_leakage_guard_trips_for_strong_coupling() {
        let j = build_joint(&DickeVector::basis_with_k_max(100, 0, 8).unwrap(), lossless(100)).unwrap();
        assert!(matches!(
            apply_write(&j, 0.5, 1.0, EvolutionOrder::Exact),
            Err(Error::TruncationLeakage { .. })
        ));
    }

    #[test]
    fn first_order_overflow_is_reported() {
        let trunc = ModeTruncation {
            atomic_k_max: 2,
            ..lossless(10)
        };
        let j = build_joint(&DickeVector::basis_with_k_max(10, 2, 2).unwrap(), trunc).unwrap();
        assert!(matches!(
            apply_write(&j, 0.01, 1.0, EvolutionOrder::FirstOrder),
            Err(Error::TruncationOverflow(_))
        ));
    }

    #[test]
    fn parameter_validation() {
        let j = build_joint(&DickeVector::basis_with_k_max(10, 0, 8).unwrap(), lossless(10)).unwrap();
        assert!(apply_write(&j, 1.5, 1.0, EvolutionOrder::FirstOrder).is_err());
        assert!(apply_write(&j, 0.1, 0.0, EvolutionOrder::FirstOrder).is_err());
        // beta < 1 needs a loss mode
        assert!(matches!(
            apply_read(&j, 0.1, 0.5, EvolutionOrder::FirstOrder),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn herald_reproduces_single_stage_gain() {
        let (alpha, n, p) = (0.1, 1000, 1e-3);
        let x = weak_coherent_atomic_state(c(alpha), n).unwrap();
        let j = build_joint(&x, ModeTruncation::default_for(n)).unwrap();
        let w = apply_write(&j, p, 1.0, EvolutionOrder::FirstOrder).unwrap();
        let r = apply_read(&w, p, 1.0, EvolutionOrder::FirstOrder).unwrap();
        match herald(&r, HeraldPattern::PAIR).unwrap() {
            HeraldOutcome::Heralded { atomic, .. } => {
                let ratio = atomic.excitation_ratio().unwrap();
                assert_abs_diff_eq!(ratio.re, 0.1998, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        match herald(&r, HeraldPattern::NONE).unwrap() {
            HeraldOutcome::Heralded { atomic, .. } => {
                assert!(crate::dicke::fidelity(&atomic, &x).unwrap() > 1.0 - 10.0 * p);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(herald(&j, HeraldPattern::PAIR).unwrap(), HeraldOutcome::ZeroProbability);
    }

    #[test]
    fn herald_rejects_patterns_outside_truncation() {
        let j = build_joint(&DickeVector::basis_with_k_max(10, 0, 8).unwrap(), lossless(10)).unwrap();
        assert!(herald(&j, HeraldPattern::new(5, 0)).is_err());
    }

    #[test]
    fn outcome_distribution_sums_to_one() {
        let x = weak_coherent_atomic_state(c(0.3), 30).unwrap();
        let j = build_joint(&x, ModeTruncation::default_for(30)).unwrap();
        let w = apply_write(&j, 0.01, 0.7, EvolutionOrder::FirstOrder).unwrap();
        let r = apply_read(&w, 0.02, 0.9, EvolutionOrder::FirstOrder).unwrap();
        let total: f64 = r.outcome_distribution().iter().map(|(_, p)| p).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn conditional_density_with_loss() {
        let p = 1e-2;
        let g = DickeVector::basis_with_k_max(100, 0, 8).unwrap();
        let j = build_joint(&g, ModeTruncation::default_for(100)).unwrap();
        let run = |beta: f64| {
            let w = apply_write(&j, p, beta, EvolutionOrder::FirstOrder).unwrap();
            apply_read(&w, p, beta, EvolutionOrder::FirstOrder).unwrap()
        };
        let (rho_full, p_full) = reduced_conditional_density(&run(1.0), HeraldPattern::PAIR).unwrap();
        let (rho_half, p_half) = reduced_conditional_density(&run(0.5), HeraldPattern::PAIR).unwrap();
        assert_eq!(rho_half.rank(1e-12), 1);
        assert_abs_diff_eq!(rho_half.trace(), 1.0, epsilon = 1e-12);
        assert!(rho_half.hermiticity_error() < 1e-12);
        assert!(rho_half.min_eigenvalue() > -1e-12);
        assert_abs_diff_eq!(rho_half.get(0, 0).re, rho_full.get(0, 0).re, epsilon = 1e-12);
        // Numerators scale with beta_w beta_r; the total norm carries the
        // remaining beta dependence at order p^2.
        let num_full = p_full * run(1.0).norm_sqr();
        let num_half = p_half * run(0.5).norm_sqr();
        assert_abs_diff_eq!(num_half / num_full, 0.25, epsilon = 1e-12);

        let (zero, prob) = reduced_conditional_density(&j, HeraldPattern::PAIR).unwrap();
        assert_eq!(prob, 0.0);
        assert_eq!(zero.trace(), 0.0);
    }

    #[test]
    fn exact_loss_gives_mixed_conditional_state() {
        let trunc = ModeTruncation {
            fock_a_max: 4,
            fock_b_max: 4,
            fock_c_max: 4,
            atomic_k_max: 8,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        };
        let x = weak_coherent_atomic_state(c(0.1), 50).unwrap();
        let j = build_joint(&x, trunc).unwrap();
        let w = apply_write(&j, 1e-3, 0.5, EvolutionOrder::Exact).unwrap();
        let r = apply_read(&w, 1e-3, 0.5, EvolutionOrder::Exact).unwrap();
        assert_eq!(herald(&r, HeraldPattern::PAIR), Err(Error::MixedState));
        let (rho, prob) = reduced_conditional_density(&r, HeraldPattern::PAIR).unwrap();
        assert!(prob > 0.0);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dump_lists_nonzero_amplitudes() {
        let j = build_joint(&DickeVector::basis_with_k_max(10, 1, 8).unwrap(), lossless(10)).unwrap();
        let text = j.dump_text();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("1 0 0 0 1.0 0.0"));
    }
}
