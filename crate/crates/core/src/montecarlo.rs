//! Monte Carlo sampling of herald outcomes.
//!
//! Each trial walks the schedule and draws the detector record of every stage
//! from the Born distribution of that stage; the trial stops at the first
//! stage whose record misses the herald pattern. Along the success branch the
//! conditional states are deterministic, so the per-stage distributions are
//! computed once and shared by all trials.
//!
//! Trials are grouped in fixed blocks, each with its own ChaCha stream derived
//! from the seed, so results do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::joint::HeraldPattern;
use crate::protocol::{AtomicState, ProtocolConfig, StageEngine};

/// Trials per RNG stream.
pub const BLOCK_SIZE: u64 = 1024;

/// Upper bound on the number of trials in one call.
pub const MAX_TRIALS: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCount {
    pub pattern: HeraldPattern,
    pub observed: u64,
    pub expected_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// `p_value >= 0.01`.
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub trials: u64,
    pub seed: u64,
    pub successes: u64,
    pub success_frequency: f64,
    pub standard_error: f64,
    /// Wilson score interval at 95%.
    pub confidence_interval: (f64, f64),
    pub expected_success_probability: f64,
    /// `(frequency - expected) / sqrt(expected (1 - expected) / trials)`.
    pub z_score: f64,
    /// Gain of the heralded state, shared by every successful trial.
    pub mean_gain: Option<f64>,
    /// Trials that stopped at each stage.
    pub failures_by_stage: Vec<u64>,
    /// Detector records observed in the first stage.
    pub first_stage_outcomes: Vec<OutcomeCount>,
    pub chi_square: Option<ChiSquareTest>,
}

struct StageTable {
    cumulative: Vec<f64>,
    success_index: usize,
}

impl StageTable {
    fn new(dist: &[(HeraldPattern, f64)], pattern: HeraldPattern) -> Self {
        let mut acc = 0.0;
        let cumulative = dist
            .iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        let success_index = dist.iter().position(|(p, _)| *p == pattern).expect("pattern inside truncation");
        Self {
            cumulative,
            success_index,
        }
    }

    fn sample(&self, u: f64) -> usize {
        let last = self.cumulative.len() - 1;
        let scaled = u * self.cumulative[last];
        self.cumulative.partition_point(|&c| c <= scaled).min(last)
    }
}

#[derive(Default)]
struct Tally {
    successes: u64,
    failures: Vec<u64>,
    first: Vec<u64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.successes += other.successes;
        for (a, b) in self.failures.iter_mut().zip(other.failures) {
            *a += b;
        }
        for (a, b) in self.first.iter_mut().zip(other.first) {
            *a += b;
        }
        self
    }
}

/// Samples `trials` runs of the configured schedule.
pub fn monte_carlo(config: &ProtocolConfig, trials: u64, seed: u64) -> Result<MCReport> {
    config.validate()?;
    if trials == 0 || trials > MAX_TRIALS {
        return Err(Error::ResourceGuard(format!("trials must be in 1..={MAX_TRIALS}, got {trials}")));
    }
    let engine = StageEngine::new(config)?;
    let plan = config.stage_plan();
    let mut state = AtomicState::Pure {
        state: config.initial_state()?,
    };
    let mut tables = Vec::with_capacity(plan.len());
    let mut first_dist = Vec::new();
    let mut expected = 1.0;
    let mut final_state = None;
    for (i, kind) in plan.iter().enumerate() {
        let evolved = engine.evolve(&state, *kind)?;
        let dist = evolved.outcome_distribution();
        if i == 0 {
            first_dist = dist.clone();
        }
        tables.push(StageTable::new(&dist, kind.pattern()));
        let (next, probability, _) = evolved.herald(kind.pattern())?;
        expected *= probability;
        match next {
            Some(s) => state = s,
            None => break,
        }
        if i + 1 == plan.len() {
            final_state = Some(state.clone());
        }
    }

    let stages = plan.len();
    let first_len = first_dist.len();
    let blocks = trials.div_ceil(BLOCK_SIZE);
    let tally = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block);
            let count = BLOCK_SIZE.min(trials - block * BLOCK_SIZE);
            let mut t = Tally {
                successes: 0,
                failures: vec![0; stages],
                first: vec![0; first_len],
            };
            for _ in 0..count {
                let mut ok = true;
                for (i, table) in tables.iter().enumerate() {
                    let outcome = table.sample(rng.random::<f64>());
                    if i == 0 {
                        t.first[outcome] += 1;
                    }
                    if outcome != table.success_index {
                        t.failures[i] += 1;
                        ok = false;
                        break;
                    }
                }
                if ok {
                    t.successes += 1;
                }
            }
            t
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(Tally::merge)
        .unwrap_or_default();

    let n = trials as f64;
    let freq = tally.successes as f64 / n;
    let sigma = (expected * (1.0 - expected) / n).sqrt();
    let z_score = if sigma > 0.0 {
        (freq - expected) / sigma
    } else if freq == expected {
        0.0
    } else {
        f64::INFINITY
    };
    let mean_gain = match (&final_state, tally.successes) {
        (Some(s), k) if k > 0 => {
            let reference = config.alpha.norm();
            s.excitation_ratio().filter(|_| reference > 0.0).map(|r| r.norm() / reference)
        }
        _ => None,
    };
    let first_stage_outcomes: Vec<OutcomeCount> = first_dist
        .iter()
        .zip(&tally.first)
        .map(|((pattern, p), &observed)| OutcomeCount {
            pattern: *pattern,
            observed,
            expected_probability: *p,
        })
        .collect();
    let chi_square = chi_square_test(&first_stage_outcomes, trials);
    Ok(MCReport {
        trials,
        seed,
        successes: tally.successes,
        success_frequency: freq,
        standard_error: (freq * (1.0 - freq) / n).sqrt(),
        confidence_interval: wilson_interval(tally.successes, trials, 1.959963984540054),
        expected_success_probability: expected,
        z_score,
        mean_gain,
        failures_by_stage: tally.failures,
        first_stage_outcomes,
        chi_square,
    })
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Pearson test of observed counts against expected probabilities.
/// Categories expecting fewer than 5 counts are pooled; `None` when fewer
/// than two categories remain.
pub fn chi_square_test(outcomes: &[OutcomeCount], trials: u64) -> Option<ChiSquareTest> {
    let n = trials as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for o in outcomes {
        let e = o.expected_probability * n;
        if e >= 5.0 {
            cells.push((o.observed as f64, e));
        } else {
            pooled.0 += o.observed as f64;
            pooled.1 += e;
        }
    }
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        if pooled.1 >= 5.0 || cells.is_empty() {
            cells.push(pooled);
        } else if let Some(last) = cells.iter_mut().min_by(|a, b| a.1.total_cmp(&b.1)) {
            last.0 += pooled.0;
            last.1 += pooled.1;
        }
    }
    if cells.len() < 2 {
        return None;
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).ok()?;
    let p_value = 1.0 - dist.cdf(statistic);
    Some(ChiSquareTest {
        statistic,
        degrees_of_freedom: dof,
        p_value,
        passes: p_value >= 0.01,
    })
}
