//! End-to-end amplification schedules.
//!
//! A stage takes the current atomic state, attaches fresh photonic vacuum,
//! runs the write and/or read process and heralds on the matching photon
//! pattern. Type-I schedules are `n` write-then-read stages heralded on
//! `(1,1)`. Type-II schedules are `n` write-only stages heralded on `(1,0)`
//! followed by `n` read-only stages heralded on `(0,1)`.
//!
//! The atomic state between stages is either a pure [`DickeVector`] or, once
//! the undetected mode leaves its trace, a density matrix. Mixed states are
//! propagated through their eigen-decomposition, one pure branch at a time.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::dicke::{relative_gain, weak_coherent_atomic_state_with_k_max, DickeVector, Schedule};
use crate::error::{Error, Result};
use crate::joint::{
    build_joint, check_leakage, leakage_gain, EvolutionOrder, HeraldPattern, JointState, ModeTruncation, Process,
    Propagator,
};
use crate::metrics::{p_amp, p_mode, p_spon, JointDensity, QualityReport};

/// Relative weight below which a mixed-state branch is discarded.
pub const BRANCH_CUTOFF: f64 = 1e-12;

/// Which `|Psi_amp>_A` the quality metrics compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetGain {
    /// Finite-N gain: `2^n (1 - 1/N)^n` or `(n+1)(1 - n/N)`.
    #[serde(alias = "exact")]
    Exact,
    /// `N -> infinity` gain: `2^n` or `n + 1`.
    #[serde(alias = "large_n", alias = "large-n")]
    LargeN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_atoms: usize,
    pub alpha: Complex64,
    pub p_w: f64,
    pub p_r: f64,
    pub beta_w: f64,
    pub beta_r: f64,
    pub schedule: Schedule,
    pub stages: usize,
    pub order: EvolutionOrder,
    pub truncation: ModeTruncation,
    pub target_gain: TargetGain,
    pub seed: u64,
}

impl ProtocolConfig {
    /// Lossless single-stage type-I first-order run with default truncation.
    pub fn new(n_atoms: usize, alpha: Complex64, p_w: f64, p_r: f64) -> Self {
        Self {
            n_atoms,
            alpha,
            p_w,
            p_r,
            beta_w: 1.0,
            beta_r: 1.0,
            schedule: Schedule::TypeI,
            stages: 1,
            order: EvolutionOrder::FirstOrder,
            truncation: ModeTruncation::default_for(n_atoms),
            target_gain: TargetGain::Exact,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 1 {
            return Err(Error::config("N", "must be >= 1"));
        }
        if !self.alpha.re.is_finite() || !self.alpha.im.is_finite() {
            return Err(Error::config("alpha", "must be finite"));
        }
        for (key, p) in [("p_w", self.p_w), ("p_r", self.p_r)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(key, format!("{p} is outside [0, 1]")));
            }
        }
        for (key, b) in [("beta_w", self.beta_w), ("beta_r", self.beta_r)] {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::config(key, format!("{b} is outside (0, 1]")));
            }
            if b < 1.0 && self.truncation.fock_c_max == 0 {
                return Err(Error::config(key, "values below 1 need truncation.fock_c_max >= 1"));
            }
        }
        if self.stages < 1 {
            return Err(Error::config("n", "must be >= 1"));
        }
        if self.stages + 1 > self.n_atoms {
            return Err(Error::config(
                "n",
                format!("headroom violation: n + 1 = {} exceeds N = {}", self.stages + 1, self.n_atoms),
            ));
        }
        self.truncation.validate(self.n_atoms).map_err(|e| match e {
            Error::ResourceGuard(_) => e,
            Error::OutOfRange { what, .. } => Error::config(format!("truncation.{what}"), e.to_string()),
            other => Error::config("truncation", other.to_string()),
        })?;
        let needed = match self.schedule {
            Schedule::TypeI => 2,
            Schedule::TypeII => self.stages + 1,
        };
        if self.truncation.atomic_k_max < needed.min(self.n_atoms) {
            return Err(Error::config(
                "truncation.atomic_k_max",
                format!("schedule needs at least {needed}, got {}", self.truncation.atomic_k_max),
            ));
        }
        Ok(())
    }

    /// Normalized `|G> + alpha |S>` sized to the truncation.
    pub fn initial_state(&self) -> Result<DickeVector> {
        weak_coherent_atomic_state_with_k_max(self.alpha, self.n_atoms, self.truncation.atomic_k_max)
    }

    /// Closed-form gain for this schedule.
    pub fn analytic_gain(&self) -> f64 {
        relative_gain(self.schedule, self.stages, self.n_atoms)
    }

    /// Gain used to build the target state `|G> + g alpha |S>`.
    pub fn target_gain_value(&self) -> f64 {
        match (self.target_gain, self.schedule) {
            (TargetGain::Exact, _) => self.analytic_gain(),
            (TargetGain::LargeN, Schedule::TypeI) => 2f64.powi(self.stages as i32),
            (TargetGain::LargeN, Schedule::TypeII) => (self.stages + 1) as f64,
        }
    }

    /// Normalized `|Psi_amp>_A`.
    pub fn target_state(&self) -> Result<DickeVector> {
        weak_coherent_atomic_state_with_k_max(
            self.alpha * self.target_gain_value(),
            self.n_atoms,
            self.truncation.atomic_k_max,
        )
    }

    /// Stage kinds in execution order.
    pub fn stage_plan(&self) -> Vec<StageKind> {
        match self.schedule {
            Schedule::TypeI => vec![StageKind::WriteThenRead; self.stages],
            Schedule::TypeII => {
                let mut plan = vec![StageKind::WriteOnly; self.stages];
                plan.extend(std::iter::repeat_n(StageKind::ReadOnly, self.stages));
                plan
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageKind {
    WriteThenRead,
    WriteOnly,
    ReadOnly,
}

impl StageKind {
    /// The photon pattern that marks success.
    pub fn pattern(self) -> HeraldPattern {
        match self {
            StageKind::WriteThenRead => HeraldPattern::PAIR,
            StageKind::WriteOnly => HeraldPattern::STOKES,
            StageKind::ReadOnly => HeraldPattern::ANTI_STOKES,
        }
    }
}

/// Atomic state carried between stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomicState {
    Pure { state: DickeVector },
    Mixed { n_atoms: usize, rho: DensityMatrix },
}

impl AtomicState {
    pub fn n_atoms(&self) -> usize {
        match self {
            AtomicState::Pure { state } => state.n_atoms(),
            AtomicState::Mixed { n_atoms, .. } => *n_atoms,
        }
    }

    pub fn density(&self) -> DensityMatrix {
        match self {
            AtomicState::Pure { state } => DensityMatrix::from_pure(state.amplitudes()),
            AtomicState::Mixed { rho, .. } => rho.clone(),
        }
    }

    /// Pure branches with their weights. Eigenvalues below
    /// [`BRANCH_CUTOFF`] times the trace are round-off and are dropped.
    pub fn components(&self) -> Result<Vec<(f64, DickeVector)>> {
        match self {
            AtomicState::Pure { state } => Ok(vec![(1.0, state.clone())]),
            AtomicState::Mixed { n_atoms, rho } => {
                let (vals, vecs) = rho.eigen();
                let tr = rho.trace();
                vals.into_iter()
                    .zip(vecs)
                    .filter(|(l, _)| *l > BRANCH_CUTOFF * tr)
                    .map(|(l, v)| Ok((l, DickeVector::new(*n_atoms, v)?)))
                    .collect()
            }
        }
    }

    /// `rho_{m+1,m} / rho_{m,m}` for the lowest populated excitation `m`; for
    /// a pure state this is `c_{m+1} / c_m`.
    pub fn excitation_ratio(&self) -> Option<Complex64> {
        let rho = self.density();
        let m = (0..rho.dim()).find(|&k| rho.get(k, k).re > 0.0)?;
        if m + 1 >= rho.dim() {
            return Some(Complex64::default());
        }
        Some(rho.get(m + 1, m) / rho.get(m, m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub index: usize,
    pub kind: StageKind,
    pub pattern: HeraldPattern,
    /// Pattern weight divided by the total outcome weight.
    pub probability: f64,
    pub cumulative_probability: f64,
    /// Squared norm of the heralded slice before renormalization, for a
    /// unit-norm input.
    pub projected_weight: f64,
    pub state: Option<AtomicState>,
    /// `|ratio(state)| / |ratio(input of the schedule)|`.
    pub gain_so_far: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub schedule: Schedule,
    pub stages: usize,
    pub success: bool,
    pub failed_stage: Option<usize>,
    pub stage_reports: Vec<StageReport>,
    pub success_probability: f64,
    /// `|c_1 / (alpha c_0)|` of the final state; absent for `alpha = 0` or failure.
    pub final_gain: Option<f64>,
    pub analytic_gain: f64,
    pub discrepancy: Option<f64>,
    pub quality: Option<QualityReport>,
}

/// Write and read propagators shared by every stage of one run.
pub(crate) struct StageEngine {
    truncation: ModeTruncation,
    write: Propagator,
    read: Propagator,
}

/// Pre-herald joint states of one stage, one per pure input branch.
pub(crate) struct Evolved {
    pub(crate) branches: Vec<(f64, JointState)>,
}

impl StageEngine {
    pub(crate) fn new(config: &ProtocolConfig) -> Result<Self> {
        let t = config.truncation;
        Ok(Self {
            truncation: t,
            write: Propagator::new(Process::Write, config.n_atoms, t, config.p_w, config.beta_w, config.order)?,
            read: Propagator::new(Process::Read, config.n_atoms, t, config.p_r, config.beta_r, config.order)?,
        })
    }

    pub(crate) fn evolve(&self, state: &AtomicState, kind: StageKind) -> Result<Evolved> {
        let mut branches = state
            .components()?
            .into_iter()
            .map(|(w, v)| Ok((w, build_joint(&v, self.truncation)?)))
            .collect::<Result<Vec<_>>>()?;
        if matches!(kind, StageKind::WriteThenRead | StageKind::WriteOnly) {
            branches = propagate(&self.write, branches)?;
        }
        if matches!(kind, StageKind::WriteThenRead | StageKind::ReadOnly) {
            branches = propagate(&self.read, branches)?;
        }
        Ok(Evolved { branches })
    }
}

/// Applies `prop` to every branch; the leakage guard is applied to the
/// weighted ensemble, so a round-off-sized branch cannot trip it alone.
fn propagate(prop: &Propagator, branches: Vec<(f64, JointState)>) -> Result<Vec<(f64, JointState)>> {
    let mut gained = [("atomic", 0.0), ("a", 0.0), ("b", 0.0), ("c", 0.0)];
    let mut norm = 0.0;
    let mut out = Vec::with_capacity(branches.len());
    for (w, joint) in branches {
        let evolved = prop.apply_unguarded(&joint)?;
        if prop.is_exact() {
            for (slot, (_, g)) in gained.iter_mut().zip(leakage_gain(&joint, &evolved)) {
                slot.1 += w * g;
            }
            norm += w * evolved.norm_sqr();
        }
        out.push((w, evolved));
    }
    if prop.is_exact() {
        check_leakage(&gained, norm)?;
    }
    Ok(out)
}

impl Evolved {
    pub(crate) fn total_weight(&self) -> f64 {
        self.branches.iter().map(|(w, j)| w * j.norm_sqr()).sum()
    }

    /// Outcome probabilities over all `(n_a, n_b)` patterns.
    pub(crate) fn outcome_distribution(&self) -> Vec<(HeraldPattern, f64)> {
        let mut acc: Vec<(HeraldPattern, f64)> = Vec::new();
        let total = self.total_weight();
        for (w, joint) in &self.branches {
            let dist = joint.outcome_distribution();
            if acc.is_empty() {
                acc = dist.iter().map(|(p, _)| (*p, 0.0)).collect();
            }
            let norm = joint.norm_sqr();
            for (slot, (_, p)) in acc.iter_mut().zip(dist) {
                slot.1 += w * norm * p / total;
            }
        }
        acc
    }

    /// Conditional state, pattern probability and projected weight.
    pub(crate) fn herald(&self, pattern: HeraldPattern) -> Result<(Option<AtomicState>, f64, f64)> {
        let total = self.total_weight();
        let mut slices = Vec::new();
        for (w, joint) in &self.branches {
            for sector in joint.project(pattern)? {
                let weight = sector.norm_sqr();
                if weight > 0.0 {
                    slices.push((*w, sector));
                }
            }
        }
        let projected: f64 = slices.iter().map(|(w, s)| w * s.norm_sqr()).sum();
        if projected == 0.0 || total == 0.0 {
            return Ok((None, 0.0, 0.0));
        }
        let state = if slices.len() == 1 {
            AtomicState::Pure {
                state: slices[0].1.normalize()?.0,
            }
        } else {
            let n_atoms = slices[0].1.n_atoms();
            let mut rho = DensityMatrix::zeros(slices[0].1.k_max() + 1);
            for (w, s) in &slices {
                rho.add_pure(*w, s.amplitudes());
            }
            AtomicState::Mixed {
                n_atoms,
                rho: rho.normalized(),
            }
        };
        Ok((Some(state), projected / total, projected))
    }
}

fn ratio_gain(state: &AtomicState, reference: Option<Complex64>) -> Option<f64> {
    let reference = reference.filter(|r| r.norm() > 0.0)?;
    Some(state.excitation_ratio()?.norm() / reference.norm())
}

fn stage_report(
    index: usize,
    kind: StageKind,
    herald: (Option<AtomicState>, f64, f64),
    cumulative_before: f64,
    reference: Option<Complex64>,
) -> StageReport {
    let (state, probability, projected_weight) = herald;
    let gain_so_far = state.as_ref().and_then(|s| ratio_gain(s, reference));
    StageReport {
        index,
        kind,
        pattern: kind.pattern(),
        probability,
        cumulative_probability: cumulative_before * probability,
        projected_weight,
        failed: state.is_none(),
        state,
        gain_so_far,
    }
}

/// Runs one stage on a normalized pure input.
///
/// A zero-probability herald is reported as a failed stage, not an error.
pub fn run_stage(state: &DickeVector, config: &ProtocolConfig, kind: StageKind) -> Result<StageReport> {
    let engine = StageEngine::new(config)?;
    let (input, _) = state.normalize()?;
    let input = AtomicState::Pure { state: input };
    let evolved = engine.evolve(&input, kind)?;
    let reference = input.excitation_ratio();
    Ok(stage_report(0, kind, evolved.herald(kind.pattern())?, 1.0, reference))
}

/// Runs the configured schedule on `|G> + alpha |S>`, always following the
/// success branch.
pub fn run_schedule(config: &ProtocolConfig) -> Result<AmplificationReport> {
    config.validate()?;
    run_schedule_from(&config.initial_state()?, config)
}

/// [`run_schedule`] with an arbitrary normalized initial atomic state.
pub fn run_schedule_from(initial: &DickeVector, config: &ProtocolConfig) -> Result<AmplificationReport> {
    config.validate()?;
    let engine = StageEngine::new(config)?;
    let (initial, _) = initial.normalize()?;
    let mut state = AtomicState::Pure { state: initial };
    let reference = Some(config.alpha);
    let mut reports = Vec::new();
    let mut cumulative = 1.0;
    let mut last: Option<(Evolved, StageKind)> = None;
    for (index, kind) in config.stage_plan().into_iter().enumerate() {
        let evolved = engine.evolve(&state, kind)?;
        let report = stage_report(index, kind, evolved.herald(kind.pattern())?, cumulative, reference);
        cumulative = report.cumulative_probability;
        let next = report.state.clone();
        reports.push(report);
        match next {
            Some(s) => state = s,
            None => {
                return Ok(AmplificationReport {
                    schedule: config.schedule,
                    stages: config.stages,
                    success: false,
                    failed_stage: Some(index),
                    stage_reports: reports,
                    success_probability: 0.0,
                    final_gain: None,
                    analytic_gain: config.analytic_gain(),
                    discrepancy: None,
                    quality: None,
                });
            }
        }
        last = Some((evolved, kind));
    }
    let (evolved, kind) = last.expect("at least one stage");
    let final_gain = ratio_gain(&state, reference);
    let analytic_gain = config.analytic_gain();
    // Metrics with a vanishing denominator are left out rather than failing the run.
    let quality = match final_quality(config, &evolved, kind, &state, cumulative, final_gain) {
        Ok(q) => Some(q),
        Err(Error::UndefinedMetric(_) | Error::ZeroNorm) => None,
        Err(e) => return Err(e),
    };
    Ok(AmplificationReport {
        schedule: config.schedule,
        stages: config.stages,
        success: true,
        failed_stage: None,
        stage_reports: reports,
        success_probability: cumulative,
        final_gain,
        analytic_gain,
        discrepancy: final_gain.map(|g| (g - analytic_gain).abs()),
        quality,
    })
}

fn final_quality(
    config: &ProtocolConfig,
    evolved: &Evolved,
    kind: StageKind,
    heralded: &AtomicState,
    p_suc: f64,
    gain: Option<f64>,
) -> Result<QualityReport> {
    let target = config.target_state()?;
    let pattern = kind.pattern();
    let rho_f = JointDensity::from_mixture(evolved.branches.iter().map(|(w, j)| (*w, j)))?;
    let target_joint = JointState::product(&target, config.truncation, pattern)?;
    let p_mode = p_mode(&rho_f, &target_joint)?;
    let p_spon = p_spon(&rho_f, &target, pattern)?;
    let p_amp = p_amp(&heralded.density(), &target)?;
    Ok(QualityReport::new(p_suc, p_mode, p_spon, p_amp, gain))
}

/// Probability of the full success sequence computed without per-stage
/// renormalization: heralded slices are carried unnormalized from stage to
/// stage and the squared norm of what survives is returned. For exact
/// (unitary) evolution this is the joint probability of all heralds.
pub fn sequence_probability(config: &ProtocolConfig) -> Result<f64> {
    config.validate()?;
    let engine = StageEngine::new(config)?;
    let mut branches = vec![config.initial_state()?];
    for kind in config.stage_plan() {
        let mut next = Vec::new();
        for v in &branches {
            let mut joint = build_joint(v, config.truncation)?;
            if matches!(kind, StageKind::WriteThenRead | StageKind::WriteOnly) {
                joint = engine.write.apply(&joint)?;
            }
            if matches!(kind, StageKind::WriteThenRead | StageKind::ReadOnly) {
                joint = engine.read.apply(&joint)?;
            }
            next.extend(joint.project(kind.pattern())?.into_iter().filter(|s| s.norm_sqr() > 0.0));
        }
        branches = next;
    }
    Ok(branches.iter().map(DickeVector::norm_sqr).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dicke::{gain_eigenvalue, DickeVector};
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn pure(report: &StageReport) -> &DickeVector {
        match report.state.as_ref().expect("stage succeeded") {
            AtomicState::Pure { state } => state,
            AtomicState::Mixed { .. } => panic!("expected a pure state"),
        }
    }

    #[test]
    fn config_validation() {
        let ok = ProtocolConfig::new(100, c(0.1), 0.01, 0.01);
        assert!(ok.validate().is_ok());
        let headroom = ProtocolConfig {
            stages: 10,
            ..ProtocolConfig::new(5, c(0.1), 0.01, 0.01)
        };
        assert!(matches!(headroom.validate(), Err(Error::InvalidConfig { key, .. }) if key == "n"));
        let bad_p = ProtocolConfig::new(100, c(0.1), 1.5, 0.01);
        assert!(matches!(bad_p.validate(), Err(Error::InvalidConfig { key, .. }) if key == "p_w"));
        let bad_beta = ProtocolConfig {
            beta_r: 0.0,
            ..ok.clone()
        };
        assert!(matches!(bad_beta.validate(), Err(Error::InvalidConfig { key, .. }) if key == "beta_r"));
        let small_trunc = ProtocolConfig {
            schedule: Schedule::TypeII,
            stages: 11,
            ..ok
        };
        assert!(small_trunc.validate().is_err());
    }

    #[test]
    fn write_then_read_step_on_weak_state() {
        let config = ProtocolConfig::new(1000, c(0.1), 1e-3, 1e-3);
        let report = run_stage(&config.initial_state().unwrap(), &config, StageKind::WriteThenRead).unwrap();
        assert!(!report.failed);
        assert_abs_diff_eq!(report.gain_so_far.unwrap(), 1.998, epsilon = 1e-12);
    }

    #[test]
    fn write_only_on_ground_state() {
        let config = ProtocolConfig {
            beta_w: 0.6,
            ..ProtocolConfig::new(50, c(0.0), 0.02, 0.01)
        };
        let g = DickeVector::basis_with_k_max(50, 0, 8).unwrap();
        let report = run_stage(&g, &config, StageKind::WriteOnly).unwrap();
        let s = pure(&report);
        assert_abs_diff_eq!(s.amplitude(1).norm(), 1.0, epsilon = 1e-12);
        // First order: weights 1, p β (a), p (1-β) (c); herald picks p β.
        assert_abs_diff_eq!(report.projected_weight, 0.02 * 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(report.probability, 0.02 * 0.6 / 1.02, epsilon = 1e-15);
    }

    #[test]
    fn read_only_on_ground_state_fails() {
        let config = ProtocolConfig::new(50, c(0.0), 0.02, 0.01);
        let g = DickeVector::basis_with_k_max(50, 0, 8).unwrap();
        let report = run_stage(&g, &config, StageKind::ReadOnly).unwrap();
        assert!(report.failed);
        assert_eq!(report.probability, 0.0);
    }

    #[test]
    fn schedule_gains_match_closed_forms() {
        for schedule in [Schedule::TypeI, Schedule::TypeII] {
            let config = ProtocolConfig {
                schedule,
                stages: 3,
                ..ProtocolConfig::new(100, c(0.05), 1e-3, 1e-3)
            };
            let report = run_schedule(&config).unwrap();
            assert!(report.success);
            let expected = match schedule {
                Schedule::TypeI => 7.762392,
                Schedule::TypeII => 3.88,
            };
            assert_abs_diff_eq!(report.analytic_gain, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(report.final_gain.unwrap(), expected, epsilon = 1e-10);
            let product: f64 = report.stage_reports.iter().map(|s| s.probability).product();
            assert_abs_diff_eq!(report.success_probability, product, epsilon = 1e-15);
        }
    }

    #[test]
    fn one_stage_schedules_coincide() {
        let base = ProtocolConfig::new(100, c(0.1), 1e-3, 2e-3);
        let one = run_schedule(&base).unwrap();
        let two = run_schedule(&ProtocolConfig {
            schedule: Schedule::TypeII,
            ..base
        })
        .unwrap();
        assert_abs_diff_eq!(one.final_gain.unwrap(), two.final_gain.unwrap(), epsilon = 1e-12);
        assert_eq!(one.analytic_gain, two.analytic_gain);
    }

    #[test]
    fn dicke_input_reproduces_eigenvalues() {
        let (pw, pr) = (1e-3, 2e-3);
        for schedule in [Schedule::TypeI, Schedule::TypeII] {
            for k in 0..=3 {
                let config = ProtocolConfig {
                    schedule,
                    stages: 2,
                    ..ProtocolConfig::new(40, c(0.0), pw, pr)
                };
                let input = DickeVector::basis_with_k_max(40, k, 8).unwrap();
                let report = run_schedule_from(&input, &config).unwrap();
                let amplitude: f64 = report
                    .stage_reports
                    .iter()
                    .map(|s| s.projected_weight.sqrt())
                    .product::<f64>()
                    / (pw * pr); // two stages: (sqrt(pw pr))^2
                let expected = gain_eigenvalue(schedule, k, 40, 2).unwrap();
                assert!((amplitude - expected).abs() <= 1e-10 * expected.max(1.0), "{schedule:?} k={k}");
            }
        }
    }

    #[test]
    fn failure_is_reported_not_raised() {
        let config = ProtocolConfig::new(100, c(0.1), 0.0, 0.01);
        let report = run_schedule(&config).unwrap();
        assert!(!report.success);
        assert_eq!(report.failed_stage, Some(0));
        assert!(report.quality.is_none());
    }

    #[test]
    fn exact_sequence_probability_factorizes() {
        let config = ProtocolConfig {
            order: EvolutionOrder::Exact,
            stages: 2,
            beta_w: 0.8,
            beta_r: 0.7,
            truncation: ModeTruncation {
                fock_a_max: 4,
                fock_b_max: 4,
                fock_c_max: 4,
                atomic_k_max: 8,
                ..ModeTruncation::default_for(60)
            },
            ..ProtocolConfig::new(60, c(0.1), 1e-3, 1e-3)
        };
        let report = run_schedule(&config).unwrap();
        let one_shot = sequence_probability(&config).unwrap();
        assert!((report.success_probability - one_shot).abs() <= 1e-10 * one_shot.max(1e-300) + 1e-16);
    }
}
