//! Denoises a PGM image, or the built-in synthetic scene when no path is given.
//!
//! Usage: `denoise_image [input.pgm] [sigma]`. Writes `noisy.pgm` and
//! `denoised.pgm` to the working directory.

use std::fs::File;
use std::path::Path;

use gscad::image::{
    add_gaussian_noise, default_learn_config, denoise_and_score, read_pgm_file, synthetic_scene,
    write_pgm, DenoiseConfig,
};

fn main() -> gscad::Result<()> {
    let mut args = std::env::args().skip(1);
    let clean = match args.next() {
        Some(path) => read_pgm_file(Path::new(&path))?,
        None => synthetic_scene(96, 96),
    };
    let sigma = args.next().and_then(|s| s.parse().ok()).unwrap_or(15.0);

    let dcfg = DenoiseConfig { sigma, subsample: Some(20_000), ..DenoiseConfig::default() };
    let noisy = add_gaussian_noise(&clean, sigma, 1)?;
    let (out, metrics) = denoise_and_score("input", &clean, &noisy, &default_learn_config(), &dcfg)?;

    println!(
        "{}x{} at sigma={sigma}: {:.2} dB -> {:.2} dB",
        clean.height(),
        clean.width(),
        metrics.psnr_noisy,
        metrics.psnr_denoised
    );
    println!(
        "{} atoms kept of {}, {:.2} atoms per patch, atom counts {:?}",
        metrics.p_hat, dcfg.dct_atoms, out.mean_atoms, out.report.atom_count_history
    );
    write_pgm(&noisy, File::create("noisy.pgm")?)?;
    write_pgm(&out.image, File::create("denoised.pgm")?)?;
    Ok(())
}
