//! Security analysis: mutual-information curves per attack, the maximum
//! tolerable QBER from I_AB = I_AE, Bob's information advantage, the
//! per-slot noise budget, and the secure-range estimate.

use crate::attacks::{iae_max_coherence, AttackError, TwoSlotCurve};
use crate::entangle::EntanglingCurvePoint;
use crate::simulate::{DetectorModel, ProtocolParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SecurityError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no crossing on (0, 1/2): I_AE stays {0} I_AB")]
    NoCrossing(&'static str),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

/// Binary entropy in bits; 0 at the endpoints by continuity.
pub fn binary_entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Mutual information between Alice and Bob on the sifted key at QBER Q:
/// the binary-symmetric-channel value 1 - h2(Q).
pub fn i_ab(q: f64) -> f64 {
    1.0 - binary_entropy(q)
}

/// An attack's information curve I_AE(Q) at fixed coherence loss.
pub trait InfoCurve {
    /// Eve's information at QBER q; None where no strategy reaches q.
    fn iae(&self, q: f64) -> Option<f64>;
    fn label(&self) -> &str;
}

/// Maximum-coherence attack, closed form with the m <= 1 cap.
pub struct MaxCoherenceCurve {
    pub delta: f64,
}

impl InfoCurve for MaxCoherenceCurve {
    fn iae(&self, q: f64) -> Option<f64> {
        iae_max_coherence(q, self.delta).ok().map(|b| b.bits)
    }
    fn label(&self) -> &str {
        "max_coherence"
    }
}

/// Intercept-resend against the improved protocol (no contrast allowance).
pub struct ImprovedIrCurve;

impl InfoCurve for ImprovedIrCurve {
    fn iae(&self, q: f64) -> Option<f64> {
        (0.0..=0.5).contains(&q).then_some(q)
    }
    fn label(&self) -> &str {
        "improved_intercept_resend"
    }
}

impl InfoCurve for TwoSlotCurve {
    fn iae(&self, q: f64) -> Option<f64> {
        TwoSlotCurve::iae(self, q)
    }
    fn label(&self) -> &str {
        "two_slot"
    }
}

/// Piecewise-linear curve through optimizer output (the entangling attack).
pub struct SampledCurve {
    label: String,
    points: Vec<(f64, f64)>,
}

impl SampledCurve {
    pub fn new(label: impl Into<String>, mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            label: label.into(),
            points,
        }
    }

    pub fn from_entangling(points: &[EntanglingCurvePoint]) -> Self {
        Self::new(
            "entangling",
            points
                .iter()
                .filter(|p| p.feasible)
                .map(|p| (p.q, p.i_ae))
                .collect(),
        )
    }
}

impl InfoCurve for SampledCurve {
    fn iae(&self, q: f64) -> Option<f64> {
        let pts = &self.points;
        if pts.len() < 2 || q < pts[0].0 || q > pts[pts.len() - 1].0 {
            return None;
        }
        let idx = pts.partition_point(|p| p.0 < q).min(pts.len() - 1).max(1);
        let (q0, i0) = pts[idx - 1];
        let (q1, i1) = pts[idx];
        if q1 <= q0 {
            return Some(i1);
        }
        Some(i0 + (i1 - i0) * (q - q0) / (q1 - q0))
    }
    fn label(&self) -> &str {
        &self.label
    }
}

/// Maximum tolerable QBER: the root of I_AB(Q) = I_AE(Q) on (0, 1/2),
/// bisected to 1e-4 after a bracketing scan.
pub fn max_qber(curve: &dyn InfoCurve) -> Result<f64, SecurityError> {
    let diff = |q: f64| curve.iae(q).map(|i| i_ab(q) - i);
    const STEPS: usize = 500;
    let mut prev: Option<(f64, f64)> = None;
    for i in 1..=STEPS {
        let q = 0.5 * i as f64 / (STEPS + 1) as f64;
        if let Some(d) = diff(q) {
            if let Some((q0, d0)) = prev {
                if d0 > 0.0 && d <= 0.0 {
                    // bisect in [q0, q]
                    let (mut lo, mut hi) = (q0, q);
                    while hi - lo > 1e-6 {
                        let mid = (lo + hi) / 2.0;
                        match diff(mid) {
                            Some(dm) if dm > 0.0 => lo = mid,
                            Some(_) => hi = mid,
                            None => break,
                        }
                    }
                    return Ok((lo + hi) / 2.0);
                }
            }
            prev = Some((q, d));
        }
    }
    match prev {
        Some((_, d)) if d > 0.0 => Err(SecurityError::NoCrossing("below")),
        _ => Err(SecurityError::NoCrossing("at or above")),
    }
}

/// Bob's information advantage I_AB(Q) - I_AE(Q) at the measured QBER.
pub fn advantage(q: f64, curve: &dyn InfoCurve) -> Result<f64, SecurityError> {
    let iae = curve
        .iae(q)
        .ok_or_else(|| SecurityError::InvalidParameter(format!("{} has no value at q = {q}", curve.label())))?;
    Ok(i_ab(q) - iae)
}

/// A sampled security curve ready for export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecurityCurve {
    pub attack: String,
    pub delta: f64,
    /// (Q, I_AB, I_AE) triples.
    pub samples: Vec<(f64, f64, f64)>,
    pub q_max: Option<f64>,
}

impl SecurityCurve {
    pub fn sample(curve: &dyn InfoCurve, delta: f64, q_grid: &[f64]) -> Self {
        let samples = q_grid
            .iter()
            .filter_map(|q| curve.iae(*q).map(|i| (*q, i_ab(*q), i)))
            .collect();
        Self {
            attack: curve.label().to_string(),
            delta,
            samples,
            q_max: max_qber(curve).ok(),
        }
    }

    /// CSV with columns Q, I_AB, I_AE.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Q,I_AB,I_AE\n");
        for (q, iab, iae) in &self.samples {
            out.push_str(&format!("{q:.6},{iab:.6},{iae:.6}\n"));
        }
        out
    }
}

/// Per-slot noise probabilities of the standard setup.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub dark: f64,
    pub parasitic: f64,
    pub signal: f64,
    pub extinction_background: f64,
}

/// Translate detector rates and the modulator extinction into per-slot
/// probabilities, given the detected signal probability per useful slot.
pub fn noise_budget(
    detector: &DetectorModel,
    params: &ProtocolParams,
    signal_per_slot: f64,
) -> NoiseBudget {
    let slot = params.grid.slot_duration;
    NoiseBudget {
        dark: detector.dark_rate * slot,
        parasitic: detector.parasitic_rate * slot,
        signal: signal_per_slot,
        extinction_background: signal_per_slot * params.extinction_ratio,
    }
}

/// Secure-range conversion at constant absolute noise: QBER scales
/// inversely with transmission, so the allowed attenuation is q_max over
/// the QBER measured at full transmission.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RangeEstimate {
    pub allowed_attenuation: f64,
    pub allowed_attenuation_db: f64,
    pub range_km: f64,
    pub fiber_loss_db_per_km: f64,
}

pub fn range_estimate(
    q_measured: f64,
    q_max: f64,
    fiber_loss_db_per_km: f64,
) -> Result<RangeEstimate, SecurityError> {
    if !(0.0..0.5).contains(&q_measured) || q_measured <= 0.0 || !(0.0..0.5).contains(&q_max) {
        return Err(SecurityError::InvalidParameter(
            "q_measured and q_max must lie in (0, 0.5)".into(),
        ));
    }
    if fiber_loss_db_per_km <= 0.0 {
        return Err(SecurityError::InvalidParameter("fiber loss must be > 0".into()));
    }
    if q_measured >= q_max {
        return Ok(RangeEstimate {
            allowed_attenuation: 1.0,
            allowed_attenuation_db: 0.0,
            range_km: 0.0,
            fiber_loss_db_per_km,
        });
    }
    let attenuation = q_max / q_measured;
    let db = 10.0 * attenuation.log10();
    Ok(RangeEstimate {
        allowed_attenuation: attenuation,
        allowed_attenuation_db: db,
        range_km: db / fiber_loss_db_per_km,
        fiber_loss_db_per_km,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iab_endpoints_and_value() {
        assert_eq!(i_ab(0.0), 1.0);
        assert_eq!(i_ab(0.5), 0.0);
        assert!((i_ab(0.058) - 0.680).abs() < 0.002);
    }

    #[test]
    fn iab_decreasing_and_symmetric() {
        let mut prev = i_ab(0.001);
        for i in 2..499 {
            let q = 0.001 + 0.499 * (i as f64 - 1.0) / 500.0;
            let v = i_ab(q);
            assert!(v < prev, "q = {q}");
            prev = v;
        }
        for q in [0.1, 0.25, 0.4] {
            assert!((i_ab(q) - i_ab(1.0 - q)).abs() < 1e-12);
        }
    }

    #[test]
    fn max_qber_reference_values() {
        // maximum-coherence attack crossings per contrast-loss level
        for (delta, expect) in [(0.0, 0.058), (0.061, 0.050), (0.086, 0.046)] {
            let q = max_qber(&MaxCoherenceCurve { delta }).unwrap();
            assert!(
                (q - expect).abs() < 0.001,
                "delta {delta}: q_max {q} vs {expect}"
            );
        }
    }

    #[test]
    fn advantage_reference_values() {
        let cases = [
            (0.033, 0.086, 0.22),
            (0.033, 0.061, 0.27),
            (0.033, 0.0, 0.41),
            (0.0162, 0.086, 0.52),
            (0.0162, 0.061, 0.57),
            (0.0162, 0.0, 0.69),
        ];
        for (q, delta, expect) in cases {
            let adv = advantage(q, &MaxCoherenceCurve { delta }).unwrap();
            assert!(
                (adv - expect).abs() < 0.01,
                "q {q} delta {delta}: adv {adv} vs {expect}"
            );
        }
    }

    #[test]
    fn two_slot_ideal_crossing() {
        let curve = TwoSlotCurve::new(0.0).unwrap();
        let q = max_qber(&curve).unwrap();
        assert!((q - 0.1705).abs() < 0.005, "q_max {q}");
    }

    #[test]
    fn secure_iff_below_crossing() {
        let curve = MaxCoherenceCurve { delta: 0.061 };
        let q_max = max_qber(&curve).unwrap();
        for i in 1..50 {
            let q = 0.002 * i as f64;
            let adv = advantage(q, &curve).unwrap();
            if q < q_max - 1e-4 {
                assert!(adv > 0.0, "q {q}");
            } else if q > q_max + 1e-4 {
                assert!(adv < 0.0, "q {q}");
            }
        }
    }

    #[test]
    fn crossing_decreases_with_delta() {
        let mut prev = f64::INFINITY;
        for delta in [0.0, 0.061, 0.086, 0.15] {
            let q = max_qber(&MaxCoherenceCurve { delta }).unwrap();
            assert!(q < prev);
            prev = q;
        }
    }

    #[test]
    fn no_crossing_is_signaled() {
        // a curve pinned at 1 bit is always above I_AB
        struct Pinned;
        impl InfoCurve for Pinned {
            fn iae(&self, _q: f64) -> Option<f64> {
                Some(1.0)
            }
            fn label(&self) -> &str {
                "pinned"
            }
        }
        assert!(matches!(
            max_qber(&Pinned),
            Err(SecurityError::NoCrossing(_))
        ));
    }

    #[test]
    fn noise_budget_reference_values() {
        let det = DetectorModel::standard();
        let params = ProtocolParams::standard();
        let b = noise_budget(&det, &params, 3e-3);
        assert!((b.dark - 1.1e-6).abs() < 1e-12);
        assert!((b.parasitic - 1e-5).abs() < 1e-12);
        assert!((b.signal - 3e-3).abs() < 1e-15);
        assert!((b.extinction_background - 3e-6).abs() < 1e-12);
    }

    #[test]
    fn range_reference_values() {
        let r = range_estimate(0.0162, 0.058, 2.0).unwrap();
        assert!((r.allowed_attenuation - 3.58).abs() < 0.05);
        assert!((r.allowed_attenuation_db - 5.5).abs() < 0.1);
        assert!((r.range_km - 2.77).abs() < 0.05);
        // telecom-grade loss scales the same crossing to tens of km
        let r = range_estimate(0.0162, 0.058, 0.2).unwrap();
        assert!((r.range_km - 27.7).abs() < 0.5);
        // no margin, no range
        let r = range_estimate(0.03, 0.03, 2.0).unwrap();
        assert_eq!(r.range_km, 0.0);
        assert_eq!(r.allowed_attenuation, 1.0);
    }

    #[test]
    fn sampled_curve_interpolates() {
        let c = SampledCurve::new("test", vec![(0.02, 0.1), (0.06, 0.3), (0.1, 0.5)]);
        assert!((c.iae(0.04).unwrap() - 0.2).abs() < 1e-12);
        assert!(c.iae(0.15).is_none());
        assert!(c.iae(0.01).is_none());
    }
}
