//! Lasso and OMP on the synthetic bar dictionary.

use gscad::coding::{error_budget, lasso_cd, omp_error, omp_fixed, LassoOptions};
use gscad::synth::{generate_d0, generate_signals, SynthConfig};

fn main() -> gscad::Result<()> {
    let d0 = generate_d0();
    let cfg = SynthConfig { sigma: 0.02, ..SynthConfig::default() };
    let batch = generate_signals(&d0, 3, &cfg, 17)?;

    for (i, truth) in batch.supports.iter().enumerate() {
        let y = batch.noisy.data().column(i).into_owned();
        println!("signal {i}: true support {truth:?}");

        let lasso = lasso_cd(d0.atoms(), &y, 0.05, LassoOptions::default())?;
        let active: Vec<usize> = (0..lasso.code.len()).filter(|&j| lasso.code[j] != 0.0).collect();
        println!(
            "  lasso  active {active:?}, {} sweeps, KKT residual {:.1e}",
            lasso.sweeps, lasso.kkt_residual
        );

        let fixed = omp_fixed(d0.atoms(), &y, 3)?;
        println!("  omp-3  support {:?}, residual {:.4}", fixed.support, fixed.residual_norm_sq);

        let eps = error_budget(cfg.sigma, 0.9, y.len())?;
        let budget = omp_error(d0.atoms(), &y, eps)?;
        println!(
            "  omp-eps (eps={eps:.4}) support {:?}, status {:?}",
            budget.support, budget.status
        );
    }
    Ok(())
}
