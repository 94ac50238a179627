//! Pulse temporal profiles, the normalized amplitude g(t), its
//! autocorrelation, and the profile-limited QBER.
//!
//! Times are in seconds throughout. The autocorrelation at the
//! interferometer delay is the coherence ceiling of the whole link, so the
//! quadrature here is deliberately plain and checkable: midpoint rule on a
//! uniform grid over the normalization window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default quadrature step: 10 ps resolves the ~20 ns pulse edges by a few
/// hundred samples and divides the standard 10 ns slot exactly.
pub const DEFAULT_QUAD_STEP: f64 = 10e-12;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("invalid profile parameter: {0}")]
    InvalidParameter(String),
    #[error("normalization window contains only {contained:.6} of the pulse energy (need >= 0.999)")]
    WindowTooSmall { contained: f64 },
    #[error("invalid slot grid: {0}")]
    InvalidGrid(String),
}

/// Shape of the in-pulse intensity, without the extinction background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PulseShape {
    /// I(t) = peak * exp(-t'^(2n) / (2 sigma^(2n))), t' relative to center.
    HyperGaussian { sigma: f64, order: u32 },
    /// Perfect rectangular pulse of the given width. Kept as a first-class
    /// variant so the analytic triangle autocorrelation is exact, not a
    /// large-order limit.
    Square { width: f64 },
}

/// Parametric temporal intensity profile of Alice's pulses: a hyper-Gaussian
/// (or perfect square) on top of the modulator extinction background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseProfile {
    pub shape: PulseShape,
    /// In-pulse peak intensity I_A (arbitrary units).
    pub amplitude_peak: f64,
    /// Background intensity I_B from finite modulator extinction.
    pub background: f64,
    /// Pulse center position (s).
    pub center: f64,
    /// Normalization window (s); one pulse period in the standard setup.
    pub normalization_window: f64,
}

impl PulseProfile {
    pub fn hyper_gaussian(
        sigma: f64,
        order: u32,
        amplitude_peak: f64,
        background: f64,
        center: f64,
        window: f64,
    ) -> Result<Self, PulseError> {
        if sigma <= 0.0 {
            return Err(PulseError::InvalidParameter(format!("sigma = {sigma} must be > 0")));
        }
        if order < 1 {
            return Err(PulseError::InvalidParameter("order must be >= 1".into()));
        }
        if amplitude_peak <= 0.0 {
            return Err(PulseError::InvalidParameter("amplitude_peak must be > 0".into()));
        }
        if background < 0.0 {
            return Err(PulseError::InvalidParameter("background must be >= 0".into()));
        }
        if window <= 0.0 {
            return Err(PulseError::InvalidParameter("window must be > 0".into()));
        }
        Ok(Self {
            shape: PulseShape::HyperGaussian { sigma, order },
            amplitude_peak,
            background,
            center,
            normalization_window: window,
        })
    }

    /// Hyper-Gaussian specified by its full width at half maximum. This is
    /// the canonical constructor for measured pulses: the FWHM is what a
    /// scope trace gives directly, and sigma follows from
    /// FWHM = 2 sigma (2 ln 2)^(1/(2n)).
    pub fn hyper_gaussian_fwhm(
        fwhm: f64,
        order: u32,
        background_ratio: f64,
        window: f64,
    ) -> Result<Self, PulseError> {
        if fwhm <= 0.0 {
            return Err(PulseError::InvalidParameter("fwhm must be > 0".into()));
        }
        if order < 1 {
            return Err(PulseError::InvalidParameter("order must be >= 1".into()));
        }
        let sigma = 0.5 * fwhm / (2.0 * std::f64::consts::LN_2).powf(1.0 / (2.0 * order as f64));
        Self::hyper_gaussian(sigma, order, 1.0, background_ratio, 0.0, window)
    }

    /// Perfect square of the given width, zero background.
    pub fn square(width: f64, window: f64) -> Result<Self, PulseError> {
        if width <= 0.0 || window <= 0.0 {
            return Err(PulseError::InvalidParameter("width and window must be > 0".into()));
        }
        Ok(Self {
            shape: PulseShape::Square { width },
            amplitude_peak: 1.0,
            background: 0.0,
            center: 0.0,
            normalization_window: window,
        })
    }

    /// The 18.7 ns FWHM, order-4 fit of the standard source, with the 30 dB
    /// modulator extinction floor, normalized over one 100 ns period.
    pub fn standard_fit() -> Self {
        Self::hyper_gaussian_fwhm(18.7e-9, 4, 1e-3, 100e-9).expect("valid standard fit")
    }

    /// Intensity at time t (same units as amplitude_peak).
    pub fn intensity(&self, t: f64) -> f64 {
        let tp = t - self.center;
        match self.shape {
            PulseShape::HyperGaussian { sigma, order } => {
                let r2 = (tp / sigma) * (tp / sigma);
                self.amplitude_peak * (-0.5 * r2.powi(order as i32)).exp() + self.background
            }
            PulseShape::Square { width } => {
                let half = width / 2.0;
                if tp >= -half && tp < half {
                    self.amplitude_peak + self.background
                } else {
                    self.background
                }
            }
        }
    }

    /// Full width at half maximum of the in-pulse term (analytic).
    pub fn fwhm(&self) -> f64 {
        match self.shape {
            PulseShape::HyperGaussian { sigma, order } => {
                2.0 * sigma * (2.0 * std::f64::consts::LN_2).powf(1.0 / (2.0 * order as f64))
            }
            PulseShape::Square { width } => width,
        }
    }

    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    /// Normalized amplitude g(t) ~ sqrt(I(t)) with the default 10 ps grid.
    pub fn normalized_amplitude(&self) -> Result<SampledAmplitude, PulseError> {
        self.normalized_amplitude_with_step(DEFAULT_QUAD_STEP)
    }

    /// Normalized amplitude on a caller-chosen quadrature step.
    pub fn normalized_amplitude_with_step(&self, step: f64) -> Result<SampledAmplitude, PulseError> {
        if step <= 0.0 {
            return Err(PulseError::InvalidParameter("step must be > 0".into()));
        }
        let contained = self.window_containment(step);
        if contained < 0.999 {
            return Err(PulseError::WindowTooSmall { contained });
        }
        let n = (self.normalization_window / step).round() as usize;
        let start = self.center - self.normalization_window / 2.0;
        let mut values: Vec<f64> = (0..n)
            .map(|i| {
                let t = start + (i as f64 + 0.5) * step;
                self.intensity(t).sqrt()
            })
            .collect();
        let norm = values.iter().map(|g| g * g).sum::<f64>() * step;
        let scale = 1.0 / norm.sqrt();
        for g in &mut values {
            *g *= scale;
        }
        Ok(SampledAmplitude { step, values })
    }

    /// Fraction of the in-pulse energy (background excluded; it is periodic
    /// by construction) that falls inside the normalization window.
    fn window_containment(&self, step: f64) -> f64 {
        match self.shape {
            PulseShape::Square { width } => (self.normalization_window / width).min(1.0),
            PulseShape::HyperGaussian { .. } => {
                let pulse_only = Self {
                    background: 0.0,
                    ..*self
                };
                let half_in = self.normalization_window / 2.0;
                let half_out = 1.5 * self.normalization_window;
                let integrate = |half: f64| {
                    let n = (2.0 * half / step).round() as usize;
                    (0..n)
                        .map(|i| pulse_only.intensity(self.center - half + (i as f64 + 0.5) * step))
                        .sum::<f64>()
                        * step
                };
                let inside = integrate(half_in);
                let total = integrate(half_out);
                if total <= 0.0 {
                    0.0
                } else {
                    inside / total
                }
            }
        }
    }
}

/// g(t) sampled at midpoints of a uniform grid spanning the normalization
/// window, with the unit-norm constraint applied in the same discretization.
#[derive(Debug, Clone)]
pub struct SampledAmplitude {
    step: f64,
    values: Vec<f64>,
}

impl SampledAmplitude {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Discrete check of the normalization integral (should be 1).
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>() * self.step
    }

    /// Overlap of g with its copy delayed by tau. Symmetric in tau and
    /// bounded by gamma(0) = 1.
    pub fn autocorrelation(&self, tau: f64) -> f64 {
        let shift = (tau.abs() / self.step).round() as usize;
        if shift >= self.values.len() {
            return 0.0;
        }
        let n = self.values.len() - shift;
        (0..n)
            .map(|i| self.values[i + shift] * self.values[i])
            .sum::<f64>()
            * self.step
    }
}

/// Autocorrelation gamma(tau) of the normalized amplitude, default grid.
pub fn autocorrelation(profile: &PulseProfile, tau: f64) -> Result<f64, PulseError> {
    Ok(profile.normalized_amplitude()?.autocorrelation(tau))
}

/// The three detection slots. Slots 3 and 5 are unambiguous; slot 4 is
/// shared between the two bit states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Three,
    Four,
    Five,
    Outside,
}

impl Slot {
    pub fn label(&self) -> &'static str {
        match self {
            Slot::Three => "3",
            Slot::Four => "4",
            Slot::Five => "5",
            Slot::Outside => "outside",
        }
    }

    /// Slot for a raw integer index in the frame numbering.
    pub fn from_index(idx: i64) -> Slot {
        match idx {
            3 => Slot::Three,
            4 => Slot::Four,
            5 => Slot::Five,
            _ => Slot::Outside,
        }
    }
}

/// Timing grid of the protocol: slot and pulse durations, the pulse period,
/// and the two encoding delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotGrid {
    /// T/2, the detection slot duration (s).
    pub slot_duration: f64,
    /// T, the nominal pulse duration (s).
    pub pulse_duration: f64,
    /// Launch period between successive pulses (s).
    pub period: f64,
    /// Encoding delay for bit 0 (s).
    pub bit0_delay: f64,
    /// Encoding delay for bit 1 (s).
    pub bit1_delay: f64,
}

impl SlotGrid {
    pub fn new(
        slot_duration: f64,
        pulse_duration: f64,
        period: f64,
        bit0_delay: f64,
        bit1_delay: f64,
    ) -> Result<Self, PulseError> {
        let g = Self {
            slot_duration,
            pulse_duration,
            period,
            bit0_delay,
            bit1_delay,
        };
        g.validate()?;
        Ok(g)
    }

    /// 10 ns slots, 20 ns pulses, 100 ns period, delays 0 / 10 ns.
    pub fn standard() -> Self {
        Self {
            slot_duration: 10e-9,
            pulse_duration: 20e-9,
            period: 100e-9,
            bit0_delay: 0.0,
            bit1_delay: 10e-9,
        }
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-30);
        if self.slot_duration <= 0.0 {
            return Err(PulseError::InvalidGrid("slot_duration must be > 0".into()));
        }
        if rel(self.pulse_duration, 2.0 * self.slot_duration) > 1e-9 {
            return Err(PulseError::InvalidGrid(
                "pulse_duration must equal 2 x slot_duration".into(),
            ));
        }
        if rel(self.bit1_delay - self.bit0_delay, self.slot_duration) > 1e-9 {
            return Err(PulseError::InvalidGrid(
                "bit1_delay - bit0_delay must equal slot_duration".into(),
            ));
        }
        if self.period <= self.pulse_duration + self.bit1_delay {
            return Err(PulseError::InvalidGrid(
                "period must exceed pulse_duration + bit1_delay".into(),
            ));
        }
        Ok(())
    }

    /// Start of slot k (k = 3, 4, 5) in frame time. Slot 3 opens where the
    /// bit-0 pulse opens.
    pub fn slot_start(&self, k: i64) -> f64 {
        self.bit0_delay + (k - 3) as f64 * self.slot_duration
    }

    /// Slot containing a frame time in [0, period).
    pub fn slot_of(&self, frame_time: f64) -> Slot {
        let rel = frame_time - self.bit0_delay;
        if rel < 0.0 {
            return Slot::Outside;
        }
        let idx = (rel / self.slot_duration).floor() as i64 + 3;
        Slot::from_index(idx)
    }

    /// Raw slot index (…, 2, 3, 4, 5, 6, …) of a frame time; slots outside
    /// 3..5 never validate but still matter to eavesdropping models.
    pub fn slot_index_of(&self, frame_time: f64) -> i64 {
        ((frame_time - self.bit0_delay) / self.slot_duration).floor() as i64 + 3
    }

    /// Frame position of the pulse center for a bit value.
    pub fn pulse_center(&self, bit: bool) -> f64 {
        let delay = if bit { self.bit1_delay } else { self.bit0_delay };
        delay + self.pulse_duration / 2.0
    }
}

/// QBER imposed by the pulse shape alone: for a bit-0 pulse the wrong
/// unambiguous slot is 5, and the profile's trailing wing plus the
/// background leak intensity into it (mirror for bit 1). Detector noise is
/// deliberately excluded; it enters through the transmission simulation.
pub fn profile_qber(profile: &PulseProfile, grid: &SlotGrid) -> Result<f64, PulseError> {
    grid.validate()?;
    let step = DEFAULT_QUAD_STEP;
    let mut q_sum = 0.0;
    for bit in [false, true] {
        let center = grid.pulse_center(bit);
        let shifted = profile.with_center(center);
        let integrate = |k: i64| -> f64 {
            let a = grid.slot_start(k);
            let n = (grid.slot_duration / step).round() as usize;
            (0..n)
                .map(|i| shifted.intensity(a + (i as f64 + 0.5) * step))
                .sum::<f64>()
                * step
        };
        let (correct, wrong) = if bit { (5, 3) } else { (3, 5) };
        let p_correct = integrate(correct);
        let p_wrong = integrate(wrong);
        q_sum += p_wrong / (p_correct + p_wrong);
    }
    Ok(q_sum / 2.0)
}
