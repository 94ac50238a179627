//! Run configuration: a flat, diff-friendly file with dotted keys and
//! explicit units in the key names (ns, ps, ms, per_s, db_per_km). TOML is
//! the native format; JSON parses into the same schema. Environment
//! variables prefixed `TCQKD_` override single keys, with `__` standing in
//! for the dot (e.g. `TCQKD_DETECTOR__DARK_RATE_PER_S=55`).
//!
//! All quantities convert to SI (seconds, per-second) on the way into the
//! core types; unknown keys are fatal so a mistyped unit suffix cannot
//! silently change meaning.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use tcqkd_core::attacks::{AttackStrategy, Slot4Policy};
use tcqkd_core::coherence::InterferometerModel;
use tcqkd_core::entangle::OptimizerConfig;
use tcqkd_core::pulse::{PulseProfile, SlotGrid};
use tcqkd_core::runner::{BitPattern, RunConfig};
use tcqkd_core::simulate::{AlignmentSearch, ClockModel, DetectorModel, ProtocolParams};

const NS: f64 = 1e-9;
const PS: f64 = 1e-12;
const MS: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub protocol: ProtocolSection,
    pub profile: ProfileSection,
    pub detector: DetectorSection,
    pub clock: ClockSection,
    pub interferometer: InterferometerSection,
    pub channel: ChannelSection,
    pub attack: AttackSection,
    pub bits: BitsSection,
    pub security: SecuritySection,
    pub entangle: EntangleSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            protocol: ProtocolSection::default(),
            profile: ProfileSection::default(),
            detector: DetectorSection::default(),
            clock: ClockSection::default(),
            interferometer: InterferometerSection::default(),
            channel: ChannelSection::default(),
            attack: AttackSection::default(),
            bits: BitsSection::default(),
            security: SecuritySection::default(),
            entangle: EntangleSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub slot_ns: f64,
    pub period_ns: f64,
    pub bit0_delay_ns: f64,
    pub mean_photons_per_pulse: f64,
    pub pulses_per_sequence: u32,
    pub sequences: u32,
    pub inter_sequence_gap_ms: f64,
    pub extinction_ratio: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            slot_ns: 10.0,
            period_ns: 100.0,
            bit0_delay_ns: 0.0,
            mean_photons_per_pulse: 0.1,
            pulses_per_sequence: 32_000,
            sequences: 290,
            inter_sequence_gap_ms: 5.0,
            extinction_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    /// "hyper_gaussian" or "square".
    pub kind: String,
    /// Full width at half maximum; the canonical width parameter.
    pub fwhm_ns: f64,
    /// Raw Gaussian scale; used instead of fwhm_ns when positive.
    pub sigma_ns: f64,
    pub order: u32,
    pub background_ratio: f64,
    pub window_ns: f64,
    /// Square width (square profiles only).
    pub width_ns: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            kind: "hyper_gaussian".into(),
            fwhm_ns: 18.7,
            sigma_ns: 0.0,
            order: 4,
            background_ratio: 1e-3,
            window_ns: 100.0,
            width_ns: 20.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency: f64,
    pub dead_time_ns: f64,
    pub jitter_ps: f64,
    pub dark_rate_per_s: f64,
    pub parasitic_rate_per_s: f64,
    pub filter_transmission: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            efficiency: 0.5,
            dead_time_ns: 50.0,
            jitter_ps: 350.0,
            dark_rate_per_s: 110.0,
            parasitic_rate_per_s: 1000.0,
            filter_transmission: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClockSection {
    pub relative_skew: f64,
    pub offset_ns: f64,
}

impl Default for ClockSection {
    fn default() -> Self {
        Self {
            relative_skew: 5e-5,
            offset_ns: 120.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct InterferometerSection {
    pub path_delay_ns: f64,
    pub intrinsic_visibility: f64,
}

impl Default for InterferometerSection {
    fn default() -> Self {
        Self {
            path_delay_ns: 10.0,
            intrinsic_visibility: 0.54 / 0.576,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub transmission: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { transmission: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// "none", "two_slot" or "max_coherence".
    pub kind: String,
    pub intercept_fraction: f64,
    /// Spread x of the maximum-coherence resend triple.
    pub spread: f64,
    pub slot4_upper_probability: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            kind: "none".into(),
            intercept_fraction: 1.0,
            spread: 2.0 / 3.0,
            slot4_upper_probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BitsSection {
    /// "alternating" or "random".
    pub pattern: String,
}

impl Default for BitsSection {
    fn default() -> Self {
        Self {
            pattern: "alternating".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SecuritySection {
    pub fiber_loss_db_per_km: f64,
    /// Coherence-loss levels analyzed side by side.
    pub deltas: Vec<f64>,
    /// Measured QBER values the advantage tables are evaluated at.
    pub qber_points: Vec<f64>,
    pub curve_q_max: f64,
    pub curve_points: usize,
    pub with_entangling: bool,
    /// Range-mode defaults.
    pub range_q_measured: f64,
    pub range_q_max: f64,
}

impl Default for SecuritySection {
    fn default() -> Self {
        Self {
            fiber_loss_db_per_km: 2.0,
            deltas: vec![0.0, 0.061, 0.086],
            qber_points: vec![0.033, 0.0162],
            curve_q_max: 0.25,
            curve_points: 60,
            with_entangling: true,
            range_q_measured: 0.0162,
            range_q_max: 0.058,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EntangleSection {
    pub starts: usize,
    pub iterations: usize,
    pub polish_iterations: usize,
    /// QBER grid of the optimized curve; empty selects a per-delta default.
    pub q_grid: Vec<f64>,
}

impl Default for EntangleSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            starts: d.starts,
            iterations: d.iterations,
            polish_iterations: d.polish_iterations,
            q_grid: Vec::new(),
        }
    }
}

impl Config {
    /// Parse a TOML or JSON config file, then apply `TCQKD_`-prefixed
    /// environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                if p.extension().and_then(|e| e.to_str()) == Some("json") {
                    serde_json::from_str::<serde_json::Value>(&text)
                        .with_context(|| format!("parsing JSON config {}", p.display()))?
                } else {
                    let t: toml::Value = toml::from_str(&text)
                        .with_context(|| format!("parsing TOML config {}", p.display()))?;
                    serde_json::to_value(t)?
                }
            }
            None => serde_json::json!({}),
        };
        apply_env_overrides(&mut value, std::env::vars())?;
        let cfg: Config = serde_json::from_value(value).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        match self.profile.kind.as_str() {
            "hyper_gaussian" | "square" => {}
            other => bail!("profile.kind: unknown kind {other:?}"),
        }
        match self.attack.kind.as_str() {
            "none" | "two_slot" | "max_coherence" => {}
            other => bail!("attack.kind: unknown kind {other:?}"),
        }
        match self.bits.pattern.as_str() {
            "alternating" | "random" => {}
            other => bail!("bits.pattern: unknown pattern {other:?}"),
        }
        Ok(())
    }

    pub fn slot_grid(&self) -> Result<SlotGrid> {
        let p = &self.protocol;
        SlotGrid::new(
            p.slot_ns * NS,
            2.0 * p.slot_ns * NS,
            p.period_ns * NS,
            p.bit0_delay_ns * NS,
            (p.bit0_delay_ns + p.slot_ns) * NS,
        )
        .context("protocol grid")
    }

    pub fn pulse_profile(&self) -> Result<PulseProfile> {
        let p = &self.profile;
        let profile = match p.kind.as_str() {
            "square" => PulseProfile::square(p.width_ns * NS, p.window_ns * NS)
                .context("profile (square)")?
                .with_center(self.slot_grid()?.pulse_center(false)),
            _ => {
                if p.sigma_ns > 0.0 {
                    PulseProfile::hyper_gaussian(
                        p.sigma_ns * NS,
                        p.order,
                        1.0,
                        p.background_ratio,
                        0.0,
                        p.window_ns * NS,
                    )
                    .context("profile (hyper_gaussian, sigma)")?
                } else {
                    PulseProfile::hyper_gaussian_fwhm(
                        p.fwhm_ns * NS,
                        p.order,
                        p.background_ratio,
                        p.window_ns * NS,
                    )
                    .context("profile (hyper_gaussian, fwhm)")?
                }
            }
        };
        Ok(profile)
    }

    pub fn protocol_params(&self) -> Result<ProtocolParams> {
        let p = &self.protocol;
        ProtocolParams::new(
            self.slot_grid()?,
            p.mean_photons_per_pulse,
            p.pulses_per_sequence,
            p.inter_sequence_gap_ms * MS,
            p.extinction_ratio,
        )
        .context("protocol")
    }

    pub fn detector_model(&self) -> Result<DetectorModel> {
        let d = &self.detector;
        DetectorModel::new(
            d.efficiency,
            d.dead_time_ns * NS,
            d.jitter_ps * PS,
            d.dark_rate_per_s,
            d.parasitic_rate_per_s,
            d.filter_transmission,
        )
        .context("detector")
    }

    pub fn clock_model(&self) -> Result<ClockModel> {
        ClockModel::new(self.clock.relative_skew, self.clock.offset_ns * NS).context("clock")
    }

    pub fn interferometer_model(&self) -> Result<InterferometerModel> {
        InterferometerModel::new(
            self.interferometer.path_delay_ns * NS,
            self.interferometer.intrinsic_visibility,
        )
        .context("interferometer")
    }

    pub fn attack_strategy(&self) -> Result<AttackStrategy> {
        let a = &self.attack;
        let strategy = match a.kind.as_str() {
            "none" => AttackStrategy::None,
            "two_slot" => AttackStrategy::TwoSlot {
                intercept_fraction: a.intercept_fraction,
                slot4_policy: Slot4Policy {
                    p_upper: a.slot4_upper_probability,
                },
            },
            "max_coherence" => AttackStrategy::MaxCoherence {
                intercept_fraction: a.intercept_fraction,
                spread: a.spread,
            },
            other => bail!("attack.kind: unknown kind {other:?}"),
        };
        strategy.validate().context("attack")?;
        Ok(strategy)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            params: self.protocol_params()?,
            profile: self.pulse_profile()?,
            detector: self.detector_model()?,
            clock: self.clock_model()?,
            interferometer: self.interferometer_model()?,
            attack: self.attack_strategy()?,
            channel_transmission: self.channel.transmission,
            sequences: self.protocol.sequences,
            bit_pattern: match self.bits.pattern.as_str() {
                "random" => BitPattern::Random,
                _ => BitPattern::Alternating,
            },
            alignment: AlignmentSearch::default(),
        })
    }

    pub fn optimizer_config(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            starts: self.entangle.starts,
            iterations: self.entangle.iterations,
            polish_iterations: self.entangle.polish_iterations,
            seed,
            ..OptimizerConfig::default()
        }
    }
}

/// Apply `TCQKD_SECTION__KEY=value` overrides onto the raw config tree.
fn apply_env_overrides(
    value: &mut serde_json::Value,
    vars: impl Iterator<Item = (String, String)>,
) -> Result<()> {
    for (key, raw) in vars {
        let Some(path) = key.strip_prefix("TCQKD_") else {
            continue;
        };
        let segments: Vec<String> = path.split("__").map(|s| s.to_lowercase()).collect();
        if segments.iter().any(|s| s.is_empty()) {
            bail!("malformed override variable {key}");
        }
        let parsed: serde_json::Value = if let Ok(b) = raw.parse::<bool>() {
            serde_json::Value::Bool(b)
        } else if let Ok(n) = raw.parse::<i64>() {
            serde_json::json!(n)
        } else if let Ok(f) = raw.parse::<f64>() {
            serde_json::json!(f)
        } else {
            serde_json::Value::String(raw.clone())
        };
        let mut node = &mut *value;
        for seg in &segments[..segments.len() - 1] {
            node = node
                .as_object_mut()
                .with_context(|| format!("override {key}: path is not a table"))?
                .entry(seg.clone())
                .or_insert_with(|| serde_json::json!({}));
        }
        node.as_object_mut()
            .with_context(|| format!("override {key}: path is not a table"))?
            .insert(segments.last().unwrap().clone(), parsed);
    }
    Ok(())
}
