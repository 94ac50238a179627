use tcqkd_core::pulse::{PulseProfile, Slot};
use tcqkd_core::runner::{run_transmission, BitPattern, RunConfig};
use tcqkd_core::simulate::*;

fn main() {
    // stage 1: ideal clock, no noise, no jitter -> profile-limited QBER?
    let mut cfg = RunConfig::standard();
    cfg.sequences = 10;
    cfg.clock = ClockModel::ideal();
    cfg.detector = DetectorModel::new(0.5, 50e-9, 0.0, 0.0, 0.0, 0.5).unwrap();
    let out = run_transmission(&cfg, 11).unwrap();
    println!("ideal clock, no noise/jitter: q = {:?}", out.qber.map(|e| e.q));

    // stage 2: + jitter
    cfg.detector = DetectorModel::new(0.5, 50e-9, 0.35e-9, 0.0, 0.0, 0.5).unwrap();
    let out = run_transmission(&cfg, 11).unwrap();
    println!("ideal clock, jitter: q = {:?}", out.qber.map(|e| e.q));

    // stage 3: + noise rates
    cfg.detector = DetectorModel::standard();
    let out = run_transmission(&cfg, 11).unwrap();
    println!("ideal clock, all noise: q = {:?}", out.qber.map(|e| e.q));

    // stage 4: skewed clock with alignment
    cfg.clock = ClockModel::standard();
    let out = run_transmission(&cfg, 11).unwrap();
    println!("skewed clock, all noise: q = {:?} resid = {:.3} ns",
             out.qber.map(|e| e.q), out.mean_alignment_residual * 1e9);

    // alignment detail on one sequence
    let params = ProtocolParams::standard();
    let bits = alternating_bits(32_000);
    let photons = emit_sequence(&bits, &params, &PulseProfile::standard_fit(), 99).unwrap();
    let clock = ClockModel::standard();
    let recs = detect_key_arm(&photons, &DetectorModel::standard(), &clock, &params, 0, 99);
    println!("records: {}", recs.len());
    let a = align_clock(&recs, &params, clock.offset, &AlignmentSearch::default()).unwrap();
    let true_period = 100e-9 * (1.0 + 5e-5);
    println!("period err = {:.3e} rel, offset = {:.4} ns (true 120), resid = {:.3} ns",
             (a.period - true_period) / true_period, a.offset * 1e9, a.residual_spread * 1e9);
    // compare: assign with estimated vs true alignment
    let sent = SentBits { per_sequence: vec![bits] };
    for (label, al) in [("estimated", a), ("true", Alignment { period: true_period, offset: 120e-9 * 1.0, residual_spread: 0.0, records_used: recs.len() })] {
        let mut rr = recs.clone();
        assign_slots(&mut rr, &al, &params.grid);
        let est = estimate_qber(&rr, &sent, &params.grid).unwrap();
        let (s3, s5): (u64, u64) = rr.iter().fold((0, 0), |(a3, a5), r| match r.slot {
            Some(Slot::Three) => (a3 + 1, a5),
            Some(Slot::Five) => (a3, a5 + 1),
            _ => (a3, a5),
        });
        println!("{label}: q = {:.4} (w {} c {} amb {} out {}) slot3 {} slot5 {}",
                 est.q, est.wrong, est.correct, est.ambiguous, est.outside, s3, s5);
    }
    let _ = BitPattern::Alternating;
}
