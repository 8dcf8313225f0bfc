//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Set `GSCAD_LENA_PATH` to a
//! 512x512 PGM to enable the full-scale image run, which takes hours.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gscad::coding::{chi2_cdf, chi2_quantile, lasso_cd, omp_error, omp_fixed, LassoOptions};
use gscad::image::{
    add_gaussian_noise, default_learn_config, denoise_and_score, extract_patches, read_pgm_file,
    reconstruct_unclamped, synthetic_scene, DenoiseConfig, GrayImage,
};
use gscad::penalty::{convexity_condition, prox_column, prox_objective, ProxOptions, Scad};
use gscad::synth::{generate_d0, run_experiment, ExperimentRow, RepetitionOutcome, SynthConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Verdict,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "prox oracle equivalence", budget: Some(Duration::from_secs(120)), run: prox_oracle },
        Criterion { name: "prox convexity properties", budget: Some(Duration::from_secs(60)), run: prox_properties },
        Criterion { name: "synthetic size recovery", budget: Some(Duration::from_secs(900)), run: size_recovery },
        Criterion { name: "synthetic pruning at p0=50", budget: None, run: pruning_p0_50 },
        Criterion { name: "synthetic denoising gain", budget: None, run: synthetic_gain },
        Criterion { name: "image denoising desk-scale", budget: Some(Duration::from_secs(600)), run: image_desk },
        Criterion { name: "image denoising full-scale", budget: None, run: image_full },
        Criterion { name: "patch round-trip", budget: None, run: patch_round_trip },
        Criterion { name: "chi-square quantile", budget: None, run: chi2 },
        Criterion { name: "lasso and omp contracts", budget: None, run: solver_contracts },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let v = (c.run)();
        let secs = start.elapsed();
        let v = match (v, c.budget) {
            (Verdict::Pass(d), Some(b)) if secs > b => {
                Verdict::Fail(format!("{d}; over the {}s budget", b.as_secs()))
            }
            (v, _) => v,
        };
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {}: {detail} [{:.1}s]", c.name, secs.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------------------
// Prox

/// Convex instance with `m` coordinates, inputs reaching past `c * lambda`.
fn random_instance(rng: &mut ChaCha8Rng, m: usize) -> (Vec<f64>, Scad, f64) {
    loop {
        let rho = rng.gen_range(0.5..3.0);
        let c = rng.gen_range(2.1..5.0);
        let lambda: f64 = rng.gen_range(0.02..0.6);
        if !convexity_condition(rho, lambda, c, m) {
            continue;
        }
        let scad = Scad::new(lambda, c).unwrap();
        let span = 1.2 * (c + 1.0) * lambda;
        let z = (0..m).map(|_| rng.gen_range(-span..span)).collect();
        return (z, scad, rho);
    }
}

/// Brute-force minimizer of `rho/2 (z - t)^2 + weight * psi(t)` on the
/// grid `0, h, 2h, ...` up to `|z|`, with `|z|` itself appended.
struct GridCoordinate {
    quad: Vec<f64>,
    psi: Vec<f64>,
    points: Vec<f64>,
}

impl GridCoordinate {
    fn new(z: f64, rho: f64, scad: &Scad, h: f64) -> Self {
        let a = z.abs();
        let n = (a / h).floor() as usize;
        let mut points: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        if points.last() != Some(&a) {
            points.push(a);
        }
        let quad = points.iter().map(|t| 0.5 * rho * (a - t) * (a - t)).collect();
        let psi = points.iter().map(|&t| scad.value(t)).collect();
        GridCoordinate { quad, psi, points }
    }

    fn best(&self, weight: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.points.len() {
            let f = self.quad[i] + weight * self.psi[i];
            if f < best.0 {
                best = (f, self.points[i]);
            }
        }
        best
    }
}

/// Grid oracle for the GSCAD prox.
///
/// Uses `log(1 + x) = min over S >= 0 of log(1 + S) + (x - S) / (1 + S)`,
/// which turns the joint grid search into one independent 1-D grid search
/// per coordinate for every trial value of `S`. `S` is scanned on a grid
/// and refined by golden section around the best cell.
fn grid_oracle(z: &[f64], rho: f64, scad: &Scad, h: f64) -> Vec<f64> {
    let coords: Vec<GridCoordinate> = z.iter().map(|&zk| GridCoordinate::new(zk, rho, scad, h)).collect();
    let profile = |s: f64| {
        let w = 1.0 / (1.0 + s);
        let inner: f64 = coords.iter().map(|g| g.best(w).0).sum();
        (1.0 + s).ln() - s * w + inner
    };
    let s_max = z.len() as f64 * scad.max_value();
    let cells = 64;
    let step = s_max / cells as f64;
    let best_cell = (0..=cells)
        .map(|i| (profile(i as f64 * step), i))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
        .1;
    let (mut lo, mut hi) = (
        (best_cell as f64 - 1.0).max(0.0) * step,
        (best_cell as f64 + 1.0).min(cells as f64) * step,
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if profile(x1) <= profile(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let s = 0.5 * (lo + hi);
    let w = 1.0 / (1.0 + s);
    z.iter()
        .zip(&coords)
        .map(|(&zk, g)| g.best(w).1.copysign(zk))
        .collect()
}

fn prox_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst: f64 = 0.0;
    let mut worst_objective_gap: f64 = 0.0;
    for i in 0..1000 {
        let m = 1 + i % 4;
        let (z, scad, rho) = random_instance(&mut rng, m);
        let got = prox_column(&z, rho, &scad, ProxOptions { tol: 1e-12, max_iter: 10_000 });
        let oracle = grid_oracle(&z, rho, &scad, 1e-4);
        let err = got
            .theta_hat
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        let gap = got.objective_value - prox_objective(&z, &oracle, rho, &scad);
        worst_objective_gap = worst_objective_gap.max(gap);
    }
    verdict(
        worst <= 1e-3,
        format!("max sup-norm error {worst:.2e} (tol 1e-3), oracle objective lower by at most {worst_objective_gap:.1e}"),
    )
}

fn prox_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut violations = Vec::new();
    let mut worst_convexity: f64 = f64::NEG_INFINITY;
    for i in 0..500 {
        let m = 1 + i % 6;
        let (z, scad, rho) = random_instance(&mut rng, m);
        let theta = prox_column(&z, rho, &scad, ProxOptions { tol: 1e-12, max_iter: 10_000 }).theta_hat;
        for (t, zk) in theta.iter().zip(&z) {
            if *t != 0.0 && t.signum() != zk.signum() {
                violations.push(format!("instance {i}: sign flip"));
            }
            if t.abs() > zk.abs() {
                violations.push(format!("instance {i}: |theta| > |z|"));
            }
        }
        for _ in 0..50 {
            let x: Vec<f64> = z.iter().map(|zk| zk * rng.gen::<f64>()).collect();
            let y: Vec<f64> = z.iter().map(|zk| zk * rng.gen::<f64>()).collect();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let excess = prox_objective(&z, &mid, rho, &scad)
                - 0.5 * (prox_objective(&z, &x, rho, &scad) + prox_objective(&z, &y, rho, &scad));
            worst_convexity = worst_convexity.max(excess);
        }
    }
    if worst_convexity > 1e-9 {
        violations.push(format!("midpoint excess {worst_convexity:.2e}"));
    }
    verdict(
        violations.is_empty(),
        if violations.is_empty() {
            format!("500 instances, largest midpoint excess {worst_convexity:.2e} (tol 1e-9)")
        } else {
            violations.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

fn p_hats(row: &ExperimentRow) -> Vec<usize> {
    row.completed().map(|(p, _, _)| p).collect()
}

fn describe(row: &ExperimentRow) -> String {
    format!(
        "p0={} mean {:.2} sd {:.3} p_hat {:?}",
        row.p0,
        row.mean_p_hat,
        row.sd_p_hat,
        p_hats(row)
    )
}

fn size_recovery() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for p0 in [10, 20] {
        let cfg = SynthConfig { sigma: 0.025, p0, repetitions: 20, ..SynthConfig::default() };
        let row = match run_experiment(&cfg) {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(format!("p0={p0}: {e}")),
        };
        ok &= row.failures() == 0
            && (9.5..=11.0).contains(&row.mean_p_hat)
            && row.sd_p_hat <= 0.8;
        parts.push(describe(&row));
    }
    verdict(ok, format!("{} (need mean in [9.5, 11], sd <= 0.8)", parts.join("; ")))
}

fn sigma_05_row() -> &'static Result<ExperimentRow, String> {
    static ROW: std::sync::OnceLock<Result<ExperimentRow, String>> = std::sync::OnceLock::new();
    ROW.get_or_init(|| {
        let cfg = SynthConfig { sigma: 0.05, p0: 50, repetitions: 20, ..SynthConfig::default() };
        run_experiment(&cfg).map_err(|e| e.to_string())
    })
}

fn pruning_p0_50() -> Verdict {
    match sigma_05_row() {
        Ok(row) => {
            let worst = p_hats(row).into_iter().max().unwrap_or(usize::MAX);
            verdict(
                row.failures() == 0 && worst <= 12,
                format!("{}; largest p_hat {worst} (need <= 12)", describe(row)),
            )
        }
        Err(e) => Verdict::Fail(e.clone()),
    }
}

fn synthetic_gain() -> Verdict {
    match sigma_05_row() {
        Ok(row) => {
            let mut gains: Vec<f64> = row
                .outcomes
                .iter()
                .filter_map(|o| match o {
                    RepetitionOutcome::Completed { psnr, psnr_noisy, .. } => Some(psnr - psnr_noisy),
                    RepetitionOutcome::Failed { .. } => None,
                })
                .collect();
            gains.sort_by(f64::total_cmp);
            let median = gscad::synth::quantile(&gains, 0.5);
            verdict(
                gains.len() == 20 && median >= 3.0,
                format!("sigma=0.05 p0=50, median gain {median:.2} dB over {} runs (need >= 3)", gains.len()),
            )
        }
        Err(e) => Verdict::Fail(e.clone()),
    }
}

// ---------------------------------------------------------------------------
// Images

fn lena_path() -> Option<PathBuf> {
    std::env::var_os("GSCAD_LENA_PATH").map(PathBuf::from)
}

fn image_desk() -> Verdict {
    let (name, clean) = match lena_path() {
        Some(p) => match read_pgm_file(&p).and_then(|img| img.crop(192, 192, 128, 128)) {
            Ok(img) => ("lena crop", img),
            Err(e) => return Verdict::Fail(format!("{}: {e}", p.display())),
        },
        None => ("synthetic scene", synthetic_scene(128, 128)),
    };
    let dcfg = DenoiseConfig { sigma: 10.0, subsample: Some(20_000), ..DenoiseConfig::default() };
    let run = add_gaussian_noise(&clean, dcfg.sigma, 1)
        .and_then(|noisy| denoise_and_score(name, &clean, &noisy, &default_learn_config(), &dcfg));
    match run {
        Ok((_, m)) => {
            let gain = m.psnr_denoised - m.psnr_noisy;
            verdict(
                gain >= 4.0,
                format!(
                    "{name} 128x128 sigma=10: {:.2} -> {:.2} dB, gain {gain:.2} (need >= 4), p_hat {}",
                    m.psnr_noisy, m.psnr_denoised, m.p_hat
                ),
            )
        }
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn image_full() -> Verdict {
    let Some(path) = lena_path() else {
        return Verdict::Skip("set GSCAD_LENA_PATH to a 512x512 PGM to run".into());
    };
    let clean = match read_pgm_file(&path) {
        Ok(img) => img,
        Err(e) => return Verdict::Fail(format!("{}: {e}", path.display())),
    };
    let mut psnrs = Vec::new();
    for seed in 0..5 {
        let dcfg = DenoiseConfig { sigma: 10.0, seed, ..DenoiseConfig::default() };
        let learn = gscad::learner::LearnConfig { seed, ..default_learn_config() };
        let run = add_gaussian_noise(&clean, dcfg.sigma, seed)
            .and_then(|noisy| denoise_and_score("lena", &clean, &noisy, &learn, &dcfg));
        match run {
            Ok((_, m)) => psnrs.push(m.psnr_denoised),
            Err(e) => return Verdict::Fail(format!("seed {seed}: {e}")),
        }
    }
    let mean = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
    verdict(
        (mean - 35.58).abs() <= 1.0,
        format!("mean PSNR {mean:.2} dB over 5 seeds (target 35.58 +/- 1.0), runs {psnrs:.2?}"),
    )
}

fn patch_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for &(h, w, patch, stride) in &[(37, 53, 8, 1), (37, 53, 8, 3), (20, 20, 5, 5), (16, 41, 16, 7), (9, 9, 2, 2)] {
        let img = GrayImage::from_fn(h, w, |_, _| rng.gen_range(0.0..255.0)).unwrap();
        let grid = extract_patches(&img, patch, stride).unwrap();
        let recon = reconstruct_unclamped(&grid, &grid.patches).unwrap();
        worst = worst.max((recon - img.pixels()).amax());
    }
    let big = GrayImage::from_fn(512, 512, |_, _| rng.gen_range(0.0..255.0)).unwrap();
    let grid = extract_patches(&big, 8, 1).unwrap();
    let count = grid.len();
    let recon = reconstruct_unclamped(&grid, &grid.patches).unwrap();
    worst = worst.max((recon - big.pixels()).amax());
    verdict(
        worst <= 1e-8 && count == 255_025,
        format!("max error {worst:.2e} (tol 1e-8), 512x512 patch count {count} (need 255025)"),
    )
}

// ---------------------------------------------------------------------------
// Solvers

/// Chi-square CDF by composite Simpson integration of the density.
fn simpson_cdf(dof: u32, x: f64) -> f64 {
    let k = dof as f64 / 2.0;
    let log_norm = -k * 2f64.ln() - statrs::function::gamma::ln_gamma(k);
    let pdf = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (log_norm + (k - 1.0) * t.ln() - 0.5 * t).exp()
        }
    };
    let n = 20_000;
    let h = x / n as f64;
    let mut sum = pdf(0.0) + pdf(x);
    for i in 1..n {
        sum += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn chi2() -> Verdict {
    let q = match chi2_quantile(64, 0.9) {
        Ok(q) => q,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let (mut lo, mut hi) = (0.0, 400.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if simpson_cdf(64, mid) < 0.9 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let rel = (q - oracle).abs() / oracle;
    let mut worst_round_trip: f64 = 0.0;
    for dof in [1, 2, 64] {
        for tau in [0.5, 0.9, 0.99] {
            match chi2_quantile(dof, tau) {
                Ok(x) => worst_round_trip = worst_round_trip.max((chi2_cdf(dof, x) - tau).abs()),
                Err(e) => return Verdict::Fail(e.to_string()),
            }
        }
    }
    verdict(
        rel <= 1e-3 && worst_round_trip <= 1e-6,
        format!(
            "F^-1_64(0.9) = {q:.4} vs Simpson {oracle:.4} (rel {rel:.1e}, tol 1e-3); round-trip error {worst_round_trip:.1e} (tol 1e-6)"
        ),
    )
}

fn solver_contracts() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst_kkt: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..100 {
        let (m, p) = (rng.gen_range(5..30), rng.gen_range(5..60));
        let mut d = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut col in d.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        let y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lambda = rng.gen_range(0.01..1.0);
        let r = match lasso_cd(&d, &y, lambda, LassoOptions::default()) {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(e.to_string()),
        };
        // Residual recomputed from scratch rather than trusting the solver's bookkeeping.
        let grad = d.transpose() * (&y - &d * &r.code);
        for (g, a) in grad.iter().zip(r.code.iter()) {
            let res = if *a == 0.0 { (g.abs() - lambda).max(0.0) } else { (g - lambda * a.signum()).abs() };
            worst_kkt = worst_kkt.max(res);
        }
        let k = rng.gen_range(1..=m.min(p));
        let fixed = omp_fixed(&d, &y, k).unwrap();
        let budget = omp_error(&d, &y, 0.1 * y.norm_squared()).unwrap();
        for hist in [&fixed.residual_history, &budget.residual_history] {
            monotone &= hist.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        }
    }

    let d0 = generate_d0();
    let cfg = SynthConfig { sigma: 0.0, ..SynthConfig::default() };
    let signals = gscad::synth::generate_signals(&d0, 100, &cfg, 8).unwrap();
    let mut exact = 0;
    for (i, truth) in signals.supports.iter().enumerate() {
        let y = signals.clean.data().column(i).into_owned();
        let r = omp_fixed(d0.atoms(), &y, 3).unwrap();
        let mut support = r.support.clone();
        support.sort_unstable();
        if &support == truth {
            exact += 1;
        }
    }
    verdict(
        worst_kkt <= 1e-6 && monotone && exact >= 99,
        format!(
            "max KKT residual {worst_kkt:.1e} (tol 1e-6), omp residuals monotone: {monotone}, exact supports {exact}/100 (need >= 99)"
        ),
    )
}
