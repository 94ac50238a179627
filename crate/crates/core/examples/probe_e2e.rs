use tcqkd_core::runner::{run_transmission, RunConfig};
use tcqkd_core::simulate::{ClockModel, DetectorModel, ProtocolParams};
use tcqkd_core::pulse::SlotGrid;
use std::time::Instant;

fn main() {
    // acceptance #6 shape: full standard run (clock skew + realignment)
    let t0 = Instant::now();
    let cfg = RunConfig::standard();
    let out = run_transmission(&cfg, 2026).unwrap();
    println!("standard 290-seq run: q = {:?} resid = {:.3} ns  ({:.1?})",
             out.qber.map(|e| e.q), out.mean_alignment_residual * 1e9, t0.elapsed());
    if let Some(c) = &out.coherence {
        println!("coherence: gamma_0 = {:.4} sigma_t = {:.4} n_p = {:.1} delta_floor = {:?}",
                 c.gamma_0, c.sigma_t, c.n_p, c.delta);
    }
    // noise sources disabled -> profile-limited
    let mut cfg = RunConfig::standard();
    cfg.detector = DetectorModel::new(0.5, 50e-9, 0.0, 0.0, 0.0, 0.5).unwrap();
    cfg.clock = ClockModel::ideal();
    cfg.sequences = 60;
    let out = run_transmission(&cfg, 2027).unwrap();
    println!("noiseless run: q = {:?}", out.qber.map(|e| e.q));
    // transmission sweep monotonicity feel
    for trans in [1.0, 0.5, 0.25] {
        let mut cfg = RunConfig::standard();
        cfg.sequences = 40;
        cfg.channel_transmission = trans;
        let out = run_transmission(&cfg, 11).unwrap();
        println!("transmission {trans}: q = {:?}", out.qber.map(|e| e.q));
    }
    let _ = (ProtocolParams::standard(), SlotGrid::standard());
}
