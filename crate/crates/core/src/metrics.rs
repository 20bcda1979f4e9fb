//! Figures of merit for a heralded amplification run.
//!
//! `rho_f` in the loss metrics is the final joint state over `(k, n_a, n_b)`
//! before any detection, with the undetected mode `c` traced out and the
//! whole thing normalized to unit trace. The amplification probability
//! `p_amp` is evaluated on the heralded atomic state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::dicke::DickeVector;
use crate::error::{Error, Result};
use crate::joint::{HeraldPattern, JointState, ModeTruncation};
use crate::protocol::{run_stage, ProtocolConfig, StageKind};

/// Computed probabilities must land in `[-PROBABILITY_SLACK, 1 + PROBABILITY_SLACK]`.
pub const PROBABILITY_SLACK: f64 = 1e-10;

/// Joint density over `(k, n_a, n_b)` with the loss mode traced out.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDensity {
    n_atoms: usize,
    truncation: ModeTruncation,
    rho: DensityMatrix,
}

impl JointDensity {
    /// Mixture `sum_i w_i |psi_i><psi_i|` normalized to unit trace.
    pub fn from_mixture<'a>(components: impl IntoIterator<Item = (f64, &'a JointState)>) -> Result<Self> {
        let mut acc: Option<JointDensity> = None;
        for (w, joint) in components {
            let part = joint.trace_out_loss();
            match &mut acc {
                None => {
                    let mut rho = DensityMatrix::zeros(part.dim());
                    rho.add_scaled(&part, w);
                    acc = Some(JointDensity {
                        n_atoms: joint.n_atoms(),
                        truncation: *joint.truncation(),
                        rho,
                    });
                }
                Some(jd) => {
                    if jd.n_atoms != joint.n_atoms() || jd.truncation != *joint.truncation() {
                        return Err(Error::DimensionMismatch("mixture components differ in space".into()));
                    }
                    jd.rho.add_scaled(&part, w);
                }
            }
        }
        let mut jd = acc.ok_or(Error::ZeroNorm)?;
        if jd.rho.trace() <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        jd.rho = jd.rho.normalized();
        Ok(jd)
    }

    pub fn from_joint(joint: &JointState) -> Result<Self> {
        Self::from_mixture([(1.0, joint)])
    }

    pub fn matrix(&self) -> &DensityMatrix {
        &self.rho
    }

    fn photon_dims(&self) -> (usize, usize) {
        (self.truncation.fock_a_max + 1, self.truncation.fock_b_max + 1)
    }

    fn index(&self, k: usize, a: usize, b: usize) -> usize {
        let (da, db) = self.photon_dims();
        (k * da + a) * db + b
    }

    /// Probability of detecting exactly `pattern`.
    pub fn pattern_probability(&self, pattern: HeraldPattern) -> f64 {
        (0..=self.truncation.atomic_k_max)
            .map(|k| self.rho.get(self.index(k, pattern.detect_a, pattern.detect_b), self.index(k, pattern.detect_a, pattern.detect_b)).re)
            .sum()
    }

    /// Atomic reduced density matrix (photons traced out).
    pub fn atomic_marginal(&self) -> DensityMatrix {
        let (da, db) = self.photon_dims();
        let dk = self.truncation.atomic_k_max + 1;
        let mut entries = vec![Complex64::default(); dk * dk];
        for a in 0..da {
            for b in 0..db {
                for k in 0..dk {
                    for kp in 0..dk {
                        entries[k * dk + kp] += self.rho.get(self.index(k, a, b), self.index(kp, a, b));
                    }
                }
            }
        }
        DensityMatrix::from_raw(dk, entries)
    }

    fn target_vector(&self, target: &JointState) -> Result<Vec<Complex64>> {
        if target.n_atoms() != self.n_atoms || *target.truncation() != self.truncation {
            return Err(Error::DimensionMismatch("target and rho_f live in different spaces".into()));
        }
        let t = target.truncation();
        let mut v = Vec::with_capacity(self.rho.dim());
        for k in 0..=t.atomic_k_max {
            for a in 0..=t.fock_a_max {
                for b in 0..=t.fock_b_max {
                    v.push(target.get(k, a, b, 0));
                    if (1..=t.fock_c_max).any(|c| target.get(k, a, b, c) != Complex64::default()) {
                        return Err(Error::DimensionMismatch("target must not populate the loss mode".into()));
                    }
                }
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(v.into_iter().map(|c| c / norm).collect())
    }
}

/// `p_w p_r / (1 + p_w + p_r + p_w p_r)`, dropping the third-order remainder.
pub fn p_success_analytic(p_w: f64, p_r: f64) -> f64 {
    p_w * p_r / (1.0 + p_w + p_r + p_w * p_r)
}

/// Probability of the `(1,1)` herald for one write-then-read stage on the
/// config's input state, normalized by the total outcome weight.
pub fn p_success_numeric(config: &ProtocolConfig) -> Result<f64> {
    config.validate()?;
    let input = config.initial_state()?;
    Ok(run_stage(&input, config, StageKind::WriteThenRead)?.probability)
}

/// `1 - <Psi_amp|rho_f|Psi_amp> / P(photons detected in the target's pattern)`.
pub fn p_mode(rho_f: &JointDensity, target: &JointState) -> Result<f64> {
    let t = rho_f.target_vector(target)?;
    let numerator = rho_f.rho.expectation(&t)?;
    let t_struct = target.truncation();
    let mut denominator = 0.0;
    for a in 0..=t_struct.fock_a_max {
        for b in 0..=t_struct.fock_b_max {
            let populated = (0..=t_struct.atomic_k_max).any(|k| target.get(k, a, b, 0) != Complex64::default());
            if populated {
                denominator += rho_f.pattern_probability(HeraldPattern::new(a, b));
            }
        }
    }
    if denominator <= f64::MIN_POSITIVE {
        return Err(Error::UndefinedMetric("no photons detected in the target pattern".into()));
    }
    Ok(1.0 - numerator / denominator)
}

/// `1 - <Psi_amp|rho_f|Psi_amp> / <Psi_amp|_A rho_f |Psi_amp>_A`, where the
/// full target is `target_atomic ⊗ |pattern>`.
pub fn p_spon(rho_f: &JointDensity, target_atomic: &DickeVector, pattern: HeraldPattern) -> Result<f64> {
    let target = JointState::product(target_atomic, rho_f.truncation, pattern)?;
    let t = rho_f.target_vector(&target)?;
    let numerator = rho_f.rho.expectation(&t)?;
    let denominator = p_amp(&rho_f.atomic_marginal(), target_atomic)?;
    if denominator <= f64::MIN_POSITIVE {
        return Err(Error::UndefinedMetric("target atomic state has zero population".into()));
    }
    Ok(1.0 - numerator / denominator)
}

/// `<target|rho|target>` for a normalized copy of `target_atomic`.
pub fn p_amp(rho: &DensityMatrix, target_atomic: &DickeVector) -> Result<f64> {
    let dim = rho.dim();
    if dim == 0 || dim > target_atomic.n_atoms() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "rho of dimension {dim} for N = {}",
            target_atomic.n_atoms()
        )));
    }
    let target = target_atomic.with_k_max(dim - 1).map_err(|_| {
        Error::DimensionMismatch(format!(
            "target populates excitations beyond rho's k_max = {}",
            dim - 1
        ))
    })?;
    let (target, _) = target.normalize()?;
    rho.expectation(target.amplitudes())
}

/// `p_amp (1 - p_spon)(1 - p_mode)`.
pub fn quality(p_amp: f64, p_spon: f64, p_mode: f64) -> f64 {
    p_amp * (1.0 - p_spon) * (1.0 - p_mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub p_suc: f64,
    pub p_mode: f64,
    pub p_spon: f64,
    pub p_amp: f64,
    pub q_amp: f64,
    pub gain: Option<f64>,
    pub fidelity: f64,
    /// False when any probability falls outside `[-1e-10, 1 + 1e-10]`.
    pub valid: bool,
}

impl QualityReport {
    pub fn new(p_suc: f64, p_mode: f64, p_spon: f64, p_amp: f64, gain: Option<f64>) -> Self {
        let in_range = |p: f64| p.is_finite() && (-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p);
        let fidelity = 1.0 - p_mode;
        let q_amp = quality(p_amp, p_spon, p_mode);
        let valid = [p_suc, p_mode, p_spon, p_amp, q_amp, fidelity].into_iter().all(in_range);
        Self {
            p_suc,
            p_mode,
            p_spon,
            p_amp,
            q_amp,
            gain,
            fidelity,
            valid,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joint::EvolutionOrder;
    use crate::protocol::{run_schedule, TargetGain};
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn quality_examples() {
        assert_eq!(quality(1.0, 0.0, 0.0), 1.0);
        assert_abs_diff_eq!(quality(0.5, 0.3, 0.3), 0.245, epsilon = 1e-15);
        assert_eq!(quality(0.7, 0.2, 1.0), 0.0);
        let q = QualityReport::new(0.1, 0.3, 0.3, 0.5, None);
        assert!(q.valid);
        assert_abs_diff_eq!(q.fidelity, 0.7, epsilon = 1e-15);
        assert!(!QualityReport::new(1.5, 0.0, 0.0, 1.0, None).valid);
    }

    #[test]
    fn analytic_success_probability() {
        assert_eq!(p_success_analytic(0.0, 0.5), 0.0);
        assert_abs_diff_eq!(p_success_analytic(0.01, 0.01), 9.80296049406921e-5, epsilon = 1e-18);
        assert_abs_diff_eq!(p_success_analytic(0.1, 0.05), 0.004329004329004331, epsilon = 1e-17);
    }

    #[test]
    fn numeric_success_probability_tracks_analytic() {
        let mut last = 0.0;
        for p in [1e-4, 1e-3, 1e-2] {
            let config = ProtocolConfig::new(100, c(0.0), p, p);
            let numeric = p_success_numeric(&config).unwrap();
            let analytic = p_success_analytic(p, p);
            assert!((numeric - analytic).abs() / analytic <= 10.0 * p);
            assert!(numeric > last);
            last = numeric;
        }
    }

    #[test]
    fn numeric_success_probability_depends_weakly_on_alpha() {
        let vacuum = p_success_numeric(&ProtocolConfig::new(100, c(0.0), 1e-3, 1e-3)).unwrap();
        let weak = p_success_numeric(&ProtocolConfig::new(100, c(0.1), 1e-3, 1e-3)).unwrap();
        let diff = (weak - vacuum).abs() / vacuum;
        assert!(diff > 0.0 && diff < 10.0 * 0.1 * 0.1 + 1e-3, "{diff}");
    }

    #[test]
    fn heralded_state_fidelity_against_ideal_doubling() {
        let config = ProtocolConfig {
            target_gain: TargetGain::LargeN,
            ..ProtocolConfig::new(1000, c(0.1), 1e-3, 1e-3)
        };
        let report = run_schedule(&config).unwrap();
        let q = report.quality.unwrap();
        assert_abs_diff_eq!(q.p_amp, 0.9999999630149079, epsilon = 1e-12);
    }

    #[test]
    fn lossless_collection_has_no_mode_error() {
        let config = ProtocolConfig::new(100, c(0.1), 1e-3, 1e-3);
        let q = run_schedule(&config).unwrap().quality.unwrap();
        assert!(q.p_mode.abs() < 1e-10, "{q:?}");
        assert!(q.valid);
        assert_abs_diff_eq!(q.q_amp, q.p_amp * (1.0 - q.p_spon) * (1.0 - q.p_mode), epsilon = 1e-12);
    }

    #[test]
    fn lossy_collection_baseline() {
        let config = ProtocolConfig {
            beta_w: 0.7,
            beta_r: 0.7,
            order: EvolutionOrder::Exact,
            ..ProtocolConfig::new(100, c(0.1), 1e-3, 1e-3)
        };
        let q = run_schedule(&config).unwrap().quality.unwrap();
        assert!(q.valid);
        // Frozen after the first verified run.
        assert_abs_diff_eq!(q.p_mode, 0.0010932098141466229, epsilon = 1e-12);
        assert!(q.p_spon > 0.99 && q.p_spon < 1.0);
    }

    #[test]
    fn metric_inputs_are_checked() {
        let config = ProtocolConfig::new(20, c(0.1), 1e-2, 1e-2);
        let atomic = config.initial_state().unwrap();
        let joint = JointState::product(&atomic, config.truncation, HeraldPattern::PAIR).unwrap();
        let rho = JointDensity::from_joint(&joint).unwrap();
        assert_abs_diff_eq!(p_mode(&rho, &joint).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p_spon(&rho, &atomic, HeraldPattern::PAIR).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p_amp(&rho.atomic_marginal(), &atomic).unwrap(), 1.0, epsilon = 1e-14);
        let narrower = ModeTruncation {
            fock_a_max: 2,
            ..config.truncation
        };
        let other = JointState::product(&atomic, narrower, HeraldPattern::PAIR).unwrap();
        assert!(matches!(p_mode(&rho, &other), Err(Error::DimensionMismatch(_))));
        let wrong = DensityMatrix::zeros(40);
        assert!(matches!(p_amp(&wrong, &atomic), Err(Error::DimensionMismatch(_))));
    }
}
