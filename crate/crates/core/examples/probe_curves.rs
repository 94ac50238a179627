use tcqkd_core::entangle::{optimize_curve, OptimizerConfig};
use tcqkd_core::security::{i_ab, max_qber, SampledCurve};
use std::time::Instant;

fn main() {
    let cfg = OptimizerConfig {
        starts: 16,
        iterations: 1200,
        polish_iterations: 300,
        ..OptimizerConfig::default()
    };
    for delta in [0.0] {
        let t0 = Instant::now();
        let grid: Vec<f64> = if delta == 0.0 {
            vec![0.02, 0.05, 0.08, 0.095, 0.105, 0.115, 0.125, 0.14]
        } else {
            vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08]
        };
        let pts = optimize_curve(&grid, delta, &cfg);
        println!("delta = {delta}:");
        for p in &pts {
            println!(
                "  q={:.4} i_ae={:.4} holevo={:.4} hel={:.4} C={:.6} iso={:.1e} dq={:.1e} feas={}  iab={:.4}",
                p.q, p.i_ae, p.holevo, p.helstrom, p.contrast, p.iso_residual, p.q_residual, p.feasible, i_ab(p.q)
            );
        }
        let curve = SampledCurve::from_entangling(&pts);
        match max_qber(&curve) {
            Ok(q) => println!("  crossing: {:.4}  ({:.1?})", q, t0.elapsed()),
            Err(e) => println!("  crossing error: {e}  ({:.1?})", t0.elapsed()),
        }
    }
}
