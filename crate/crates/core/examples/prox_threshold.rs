//! Thresholding behaviour of the GSCAD proximal operator.
//!
//! Prints the 1-D threshold curve, then solves a few 3-coordinate columns to
//! show whole-column elimination and the unbiased pass-through of large
//! entries.

use gscad::penalty::{convexity_condition, prox_column, threshold_curve, ProxOptions, Scad};

fn main() -> gscad::Result<()> {
    let (lambda, c, rho) = (0.5, 3.0, 1.0);
    println!(
        "lambda={lambda} c={c} rho={rho}; convex for 3 coordinates: {}",
        convexity_condition(rho, lambda, c, 3)
    );

    println!("\n   z   prox(z)");
    for (z, t) in threshold_curve(3.0, 0.25, rho, lambda, c)? {
        if z >= 0.0 {
            println!("{z:5.2}  {t:7.4}");
        }
    }

    let scad = Scad::new(lambda, c)?;
    let columns: [&[f64]; 3] = [
        &[0.2, -0.3, 0.1],
        &[0.9, 0.05, -0.6],
        &[4.0, 0.2, -2.5],
    ];
    println!();
    for z in columns {
        let r = prox_column(z, rho, &scad, ProxOptions::default());
        println!("{z:?} -> {:.4?} ({} sweeps)", r.theta_hat, r.iterations);
    }
    Ok(())
}
