//! Memory-based probabilistic amplification of weak coherent states stored as
//! collective atomic excitations.
//!
//! The atomic ensemble is described in the symmetric Dicke basis. Write and
//! read processes couple it to Stokes (`a`), anti-Stokes (`b`) and an
//! undetected loss mode (`c`); detections herald the amplified atomic state.

pub mod density;
pub mod dicke;
pub mod error;
pub mod joint;
pub mod metrics;
pub mod montecarlo;
pub mod oracle;
pub mod protocol;

pub use density::DensityMatrix;
pub use dicke::{
    apply_ladder, apply_ss_dagger, fidelity, gain_eigenvalue, ladder_coeff, relative_gain, ss_dagger_eigenvalue,
    weak_coherent_atomic_state, DickeVector, LadderDirection, Schedule,
};
pub use error::{Error, Result};
pub use joint::{
    apply_read, apply_write, build_joint, herald, EvolutionOrder, HeraldOutcome, HeraldPattern, JointState,
    ModeTruncation,
};
pub use metrics::{p_amp, p_mode, p_spon, p_success_analytic, p_success_numeric, quality, QualityReport};
pub use montecarlo::{monte_carlo, MCReport};
pub use oracle::{verify_ladder, VerificationReport};
pub use protocol::{
    run_schedule, run_schedule_from, run_stage, sequence_probability, AmplificationReport, AtomicState,
    ProtocolConfig, StageKind, StageReport, TargetGain,
};
