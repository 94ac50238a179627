//! Photon-level Monte Carlo simulator and security analyzer for the
//! time-coded quantum key distribution protocol: pulse-shape coherence,
//! the full transmission pipeline with realistic detector noise and clock
//! recovery, intercept-resend and entangling eavesdropping models, and the
//! mutual-information security bookkeeping that turns measured QBER and
//! contrast into tolerances and a secure range.

pub mod attacks;
pub mod coherence;
pub mod entangle;
pub mod pulse;
pub mod rng;
pub mod runner;
pub mod security;
pub mod simulate;

pub use attacks::{AttackOutcome, AttackStrategy, ResentState};
pub use coherence::{CoherenceEstimate, InterferometerModel, SequenceContrast};
pub use pulse::{PulseProfile, Slot, SlotGrid};
pub use runner::{BitPattern, RunConfig, TransmissionOutput};
pub use security::{NoiseBudget, RangeEstimate, SecurityCurve};
pub use simulate::{
    Bit, ClockModel, DetectionRecord, DetectorModel, ProtocolParams, QberEstimate,
};
