//! Dictionary-size recovery on the synthetic bar benchmark.
//!
//! Usage: `synthetic_recovery [p0] [repetitions]` (defaults 20 and 4).

use gscad::synth::{run_experiment, RepetitionOutcome, SynthConfig};

fn main() -> gscad::Result<()> {
    let mut args = std::env::args().skip(1);
    let p0 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let repetitions = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);

    let cfg = SynthConfig { p0, repetitions, ..SynthConfig::default() };
    let row = run_experiment(&cfg)?;
    for outcome in &row.outcomes {
        match outcome {
            RepetitionOutcome::Completed { seed, p_hat, psnr, psnr_noisy, outer_iterations, .. } => println!(
                "seed {seed:>20}: p_hat {p_hat:2}, PSNR {psnr_noisy:.2} -> {psnr:.2} dB after {outer_iterations} iterations"
            ),
            RepetitionOutcome::Failed { seed, reason } => println!("seed {seed:>20}: failed: {reason}"),
        }
    }
    println!(
        "sigma={} p0={}: mean p_hat {:.2} (sd {:.3}), median PSNR {:.2} dB",
        row.sigma, row.p0, row.mean_p_hat, row.sd_p_hat, row.psnr_median
    );
    Ok(())
}
