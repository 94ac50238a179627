//! End-to-end transmission driver: emits, attacks, routes, detects and
//! post-processes a full multi-sequence run on both of Bob's arms.
//! Sequences execute concurrently on independent RNG streams; outputs are
//! ordered by sequence index, so results do not depend on thread count.

use crate::attacks::{apply_intercept_resend, AttackError, AttackStrategy};
use crate::coherence::{
    detect_mz, estimate_gamma, sequence_contrast, CoherenceError, CoherenceEstimate,
    InterferometerModel, MzTables, SequenceContrast,
};
use crate::pulse::{autocorrelation, PulseError, PulseProfile};
use crate::rng;
use crate::simulate::{
    align_clock, alternating_bits, Alignment, apply_channel, assign_slots, detect_routed, emit_sequence,
    estimate_qber, random_bits, route_photons, AlignmentSearch, Bit, ClockModel, DetectionRecord,
    DetectorModel, ProtocolParams, QberEstimate, SentBits, SimError,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Coherence(#[from] CoherenceError),
    #[error("configuration: {0}")]
    Config(String),
}

/// Which bit pattern Alice sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitPattern {
    /// Alternating 0/1, the standard characterization sequence.
    Alternating,
    Random,
}

/// Full configuration of one transmission run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ProtocolParams,
    pub profile: PulseProfile,
    pub detector: DetectorModel,
    pub clock: ClockModel,
    pub interferometer: InterferometerModel,
    pub attack: AttackStrategy,
    pub channel_transmission: f64,
    pub sequences: u32,
    pub bit_pattern: BitPattern,
    pub alignment: AlignmentSearch,
}

impl RunConfig {
    /// The reference setup: standard grid and rates, fitted pulse, no
    /// attack, lossless line.
    pub fn standard() -> Self {
        Self {
            params: ProtocolParams::standard(),
            profile: PulseProfile::standard_fit(),
            detector: DetectorModel::standard(),
            clock: ClockModel::standard(),
            interferometer: InterferometerModel::standard(),
            attack: AttackStrategy::None,
            channel_transmission: 1.0,
            sequences: 290,
            bit_pattern: BitPattern::Alternating,
            alignment: AlignmentSearch::default(),
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        if !(0.0..=1.0).contains(&self.channel_transmission) {
            return Err(RunnerError::Config("channel_transmission must be in [0,1]".into()));
        }
        if self.sequences == 0 {
            return Err(RunnerError::Config("sequences must be > 0".into()));
        }
        if !self.interferometer.matches_grid(&self.params.grid) {
            return Err(RunnerError::Config(
                "interferometer path_delay must equal the slot duration".into(),
            ));
        }
        if matches!(self.attack, AttackStrategy::Entangling { .. }) {
            return Err(RunnerError::Config(
                "the entangling attack is analyzed analytically (entangle module), not event by event".into(),
            ));
        }
        self.attack.validate()?;
        Ok(())
    }
}

/// Everything one sequence produced.
#[derive(Debug, Clone)]
struct SequenceOutcome {
    bits: Vec<Bit>,
    records: Vec<DetectionRecord>,
    contrast: Option<SequenceContrast>,
    mz_photons: u64,
    alignment: Option<Alignment>,
}

/// Aggregated output of a transmission run.
#[derive(Debug, Clone)]
pub struct TransmissionOutput {
    pub qber: Option<QberEstimate>,
    pub qber_diagnostic: Option<String>,
    /// All detection records, slot-assigned where alignment succeeded.
    pub records: Vec<DetectionRecord>,
    pub contrasts: Vec<SequenceContrast>,
    pub coherence: Option<CoherenceEstimate>,
    /// Quadrature autocorrelation of the configured profile at the
    /// interferometer delay.
    pub gamma_theory: f64,
    /// Mean per-sequence alignment residual (s) over aligned sequences.
    pub mean_alignment_residual: f64,
    /// Mean photons per sequence at the interferometer outputs.
    pub mean_mz_photons: f64,
    pub sent: SentBits,
}

/// Run a full transmission of `cfg.sequences` sequences.
pub fn run_transmission(cfg: &RunConfig, master_seed: u64) -> Result<TransmissionOutput, RunnerError> {
    cfg.validate()?;
    let gamma_theory = autocorrelation(&cfg.profile, cfg.interferometer.path_delay)?;
    let tables = MzTables::new(&cfg.profile, &cfg.params.grid, &cfg.interferometer)?;
    let n_pulses = cfg.params.pulses_per_sequence as usize;

    let outcomes: Vec<SequenceOutcome> = (0..cfg.sequences)
        .into_par_iter()
        .map(|seq| -> SequenceOutcome {
            let seed = rng::derive(master_seed, "sequence", u64::from(seq));
            let bits = match cfg.bit_pattern {
                BitPattern::Alternating => alternating_bits(n_pulses),
                BitPattern::Random => random_bits(n_pulses, seed),
            };
            let photons = emit_sequence(&bits, &cfg.params, &cfg.profile, seed)
                .expect("bit count matches by construction");
            let photons = apply_channel(photons, cfg.channel_transmission, seed)
                .expect("transmission validated");
            let photons = apply_intercept_resend(photons, &cfg.attack, &cfg.params.grid, seed)
                .expect("attack validated");
            let (key, mz) = route_photons(photons, seed);
            let records = detect_routed(&key, &cfg.detector, &cfg.clock, &cfg.params, seq, seed);
            let alignment =
                align_clock(&records, &cfg.params, cfg.clock.offset, &cfg.alignment).ok();
            let phase = rng::stream(seed, "phase", u64::from(seq)).gen::<f64>() * std::f64::consts::TAU;
            let counts = detect_mz(
                &mz,
                &cfg.detector,
                &cfg.interferometer,
                &tables,
                &cfg.params,
                phase,
                seq,
                seed,
            );
            let mz_photons = counts.n_plus + counts.n_minus;
            let contrast = sequence_contrast(counts.n_plus, counts.n_minus)
                .ok()
                .map(|mut c| {
                    c.phase_truth = phase;
                    c
                });
            SequenceOutcome {
                bits,
                records,
                contrast,
                mz_photons,
                alignment,
            }
        })
        .collect();

    let sent = SentBits {
        per_sequence: outcomes.iter().map(|o| o.bits.clone()).collect(),
    };
    // propagation delay and clock rate are common to all sequences, so the
    // per-sequence estimates are pooled into one consensus alignment; the
    // median keeps occasional aliased per-sequence fits from poisoning it
    let alignments: Vec<Alignment> = outcomes.iter().filter_map(|o| o.alignment).collect();
    let consensus = (!alignments.is_empty()).then(|| {
        let median = |f: &dyn Fn(&Alignment) -> f64| -> f64 {
            let mut v: Vec<f64> = alignments.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        Alignment {
            period: median(&|a| a.period),
            offset: median(&|a| a.offset),
            residual_spread: median(&|a| a.residual_spread),
            records_used: alignments.iter().map(|a| a.records_used).sum(),
        }
    });
    let mut records: Vec<DetectionRecord> = outcomes
        .iter()
        .flat_map(|o| o.records.iter().copied())
        .collect();
    if let Some(alignment) = &consensus {
        assign_slots(&mut records, alignment, &cfg.params.grid);
    }
    let aligned: Vec<DetectionRecord> = records
        .iter()
        .filter(|r| r.slot.is_some())
        .copied()
        .collect();
    let (qber, qber_diagnostic) = match estimate_qber(&aligned, &sent, &cfg.params.grid) {
        Ok(est) => (Some(est), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let contrasts: Vec<SequenceContrast> = outcomes.iter().filter_map(|o| o.contrast).collect();
    let mean_mz_photons = if outcomes.is_empty() {
        0.0
    } else {
        outcomes.iter().map(|o| o.mz_photons as f64).sum::<f64>() / outcomes.len() as f64
    };
    let coherence = if contrasts.len() >= 2 && mean_mz_photons > 0.0 {
        estimate_gamma(&contrasts, mean_mz_photons)
            .ok()
            .and_then(|est| est.with_theory(gamma_theory.max(est.gamma_0)).ok())
    } else {
        None
    };
    let mean_alignment_residual = consensus.map_or(f64::NAN, |a| a.residual_spread);
    Ok(TransmissionOutput {
        qber,
        qber_diagnostic,
        records,
        contrasts,
        coherence,
        gamma_theory,
        mean_alignment_residual,
        mean_mz_photons,
        sent,
    })
}
