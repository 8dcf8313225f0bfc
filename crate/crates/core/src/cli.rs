//! Command-line front end: `synth`, `denoise`, `train` and `prox-demo`.
//!
//! [`run`] parses arguments and returns the process exit code: 0 on success,
//! 1 when a pipeline or I/O step fails, 2 for invalid usage.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::coding::SignalBatch;
use crate::error::{GscadError, Result};
use crate::image::{
    add_gaussian_noise, denoise_and_score, read_pgm, write_metrics_csv, write_pgm,
    DenoiseConfig,
};
use crate::learner::{learn, DataWeight, LearnConfig};
use crate::penalty::{
    convexity_condition, partition_grid, threshold_curve, write_partition_csv,
    write_threshold_csv, PenaltyParams,
};
use crate::synth::{run_grid, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gscad", version, about = "Dictionary learning with the GSCAD penalty")]
pub struct Cli {
    /// Master RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic size-recovery experiment over a (sigma, p0) grid.
    Synth(SynthArgs),
    /// Denoise a PGM image after adding Gaussian noise to it.
    Denoise(DenoiseArgs),
    /// Learn a dictionary from a CSV of signals.
    Train(TrainArgs),
    /// Threshold function and 2-D partition of the GSCAD prox.
    ProxDemo(ProxDemoArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Weight on the coding terms relative to the dictionary penalty, per
    /// training signal (the summed coding terms are scaled by this over n).
    #[arg(long)]
    pub data_weight: Option<f64>,
    /// Cap on outer learning iterations.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl PenaltyArgs {
    fn apply(&self, cfg: &mut LearnConfig) {
        let p = &mut cfg.params;
        p.lambda1 = self.lambda1.unwrap_or(p.lambda1);
        p.lambda2 = self.lambda2.unwrap_or(p.lambda2);
        p.c = self.c.unwrap_or(p.c);
        p.rho = self.rho.unwrap_or(p.rho);
        if let Some(kappa) = self.data_weight {
            cfg.data_weight = DataWeight::PerSignal(kappa);
        }
        cfg.outer_max_iter = self.max_iter.unwrap_or(cfg.outer_max_iter);
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Noise levels, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.025, 0.05, 0.1])]
    pub sigma: Vec<f64>,
    /// Initial dictionary sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 15, 20, 50])]
    pub p0: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value = "synth.csv")]
    pub out: String,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Clean input image (PGM).
    pub input: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.9)]
    pub tau: f64,
    #[arg(long, default_value_t = 8)]
    pub patch: usize,
    /// Atoms in the redundant DCT start.
    #[arg(long, default_value_t = 256)]
    pub p0: usize,
    /// Train on this many random patches instead of all of them.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Coding penalty as a multiple of sigma / 255.
    #[arg(long)]
    pub lambda2_scale: Option<f64>,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// CSV with a header naming the signals and one row per coordinate.
    pub signals: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub p0: usize,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
}

#[derive(Debug, Args)]
pub struct ProxDemoArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 3.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 4.0)]
    pub range: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Runtime(GscadError),
}

impl From<GscadError> for Failure {
    fn from(e: GscadError) -> Self {
        Failure::Runtime(e)
    }
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let threads = match cli.threads {
        Some(0) => return Err(Failure::Usage("--threads must be positive".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Runtime(GscadError::InvalidParameter(e.to_string())))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Denoise(a) => cmd_denoise(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::ProxDemo(a) => cmd_prox_demo(cli, a),
    })
}

/// Writes through a sibling temporary file renamed into place on success,
/// so a failed run never leaves a half-written output.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    let name = path
        .file_name()
        .ok_or_else(|| GscadError::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn open_input(path: &Path) -> Result<std::io::BufReader<fs::File>> {
    fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| GscadError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out_dir)?;
    Ok(&cli.out_dir)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> std::result::Result<(), Failure> {
    if a.sigma.is_empty() || a.p0.is_empty() {
        return Err(Failure::Usage("--sigma and --p0 need at least one value".into()));
    }
    let mut base = SynthConfig {
        repetitions: a.reps,
        seed: cli.seed,
        ..SynthConfig::default()
    };
    a.penalty.apply(&mut base.learn);
    for (&sigma, &p0) in a.sigma.iter().zip(a.p0.iter().cycle()) {
        usage(SynthConfig { sigma, p0, ..base.clone() }.validate())?;
    }
    for &p0 in &a.p0 {
        usage(LearnConfig { p0, ..base.learn.clone() }.validate())?;
    }

    let table = run_grid(&base, &a.sigma, &a.p0)?;
    let path = out_dir(cli)?.join(&a.out);
    write_atomic(&path, |w| table.write_csv(w))?;
    for row in &table.rows {
        let failed = row.failures();
        println!(
            "sigma={} p0={} mean_p_hat={:.2} sd={:.3} psnr_median={:.2}{}",
            row.sigma,
            row.p0,
            row.mean_p_hat,
            row.sd_p_hat,
            row.psnr_median,
            if failed > 0 { format!(" failed={failed}") } else { String::new() }
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_denoise(cli: &Cli, a: &DenoiseArgs) -> std::result::Result<(), Failure> {
    let mut learn_cfg = crate::image::default_learn_config();
    a.penalty.apply(&mut learn_cfg);
    learn_cfg.seed = cli.seed;
    usage(learn_cfg.validate())?;
    // An explicit --lambda2 replaces the sigma-scaled coding penalty.
    let lambda2_scale = match (a.penalty.lambda2, a.lambda2_scale) {
        (Some(l2), _) => l2 * crate::image::PIXEL_MAX / a.sigma.max(1.0),
        (None, Some(scale)) => scale,
        (None, None) => DenoiseConfig::default().lambda2_scale,
    };
    let dcfg = DenoiseConfig {
        sigma: a.sigma,
        tau: a.tau,
        patch_size: a.patch,
        dct_atoms: a.p0,
        subsample: a.subsample,
        lambda2_scale,
        seed: cli.seed,
    };
    usage(dcfg.validate())?;

    let clean = read_pgm(open_input(&a.input)?)?;
    let noisy = add_gaussian_noise(&clean, dcfg.sigma, cli.seed)?;
    let name = a
        .input
        .file_stem()
        .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned());
    let (out, metrics) = denoise_and_score(&name, &clean, &noisy, &learn_cfg, &dcfg)?;

    let dir = out_dir(cli)?;
    write_atomic(&dir.join("noisy.pgm"), |w| write_pgm(&noisy, w))?;
    write_atomic(&dir.join("denoised.pgm"), |w| write_pgm(&out.image, w))?;
    write_atomic(&dir.join("dictionary.csv"), |w| out.report.dictionary.write_csv(w))?;
    write_atomic(&dir.join("metrics.csv"), |w| {
        write_metrics_csv(std::slice::from_ref(&metrics), w)
    })?;
    println!(
        "{}: sigma={} psnr_noisy={:.2} psnr_denoised={:.2} p_hat={} seconds={:.1}",
        metrics.image,
        metrics.sigma,
        metrics.psnr_noisy,
        metrics.psnr_denoised,
        metrics.p_hat,
        metrics.seconds
    );
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> std::result::Result<(), Failure> {
    let mut cfg = LearnConfig {
        p0: a.p0,
        seed: cli.seed,
        ..crate::synth::default_learn_config()
    };
    a.penalty.apply(&mut cfg);
    usage(cfg.validate())?;

    let signals = SignalBatch::read_csv(open_input(&a.signals)?)?;
    let start = Instant::now();
    let report = learn(&signals, &cfg)?;
    let dir = out_dir(cli)?;
    write_atomic(&dir.join("dictionary.csv"), |w| report.dictionary.write_csv(w))?;
    let json = report.to_json()?;
    write_atomic(&dir.join("report.json"), |w| Ok(w.write_all(json.as_bytes())?))?;
    println!(
        "p_hat={} iterations={} converged={} seconds={:.1}",
        report.p_hat,
        report.outer_iterations,
        report.converged,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_prox_demo(cli: &Cli, a: &ProxDemoArgs) -> std::result::Result<(), Failure> {
    usage(PenaltyParams::new(a.lambda, a.c, a.rho, 0.0))?;
    if !(a.range > 0.0 && a.step > 0.0 && a.step <= a.range) {
        return Err(Failure::Usage(format!(
            "need 0 < step <= range, got step {} and range {}",
            a.step, a.range
        )));
    }
    if !convexity_condition(a.rho, a.lambda, a.c, 2) {
        eprintln!(
            "warning: (rho={}, lambda={}, c={}) violates the convexity condition for two \
             coordinates; the prox may have several local minima",
            a.rho, a.lambda, a.c
        );
    }
    let curve = usage(threshold_curve(a.range, a.step, a.rho, a.lambda, a.c))?;
    let grid = usage(partition_grid(a.range, a.step, a.rho, a.lambda, a.c))?;
    let dir = out_dir(cli)?;
    write_atomic(&dir.join("threshold.csv"), |w| write_threshold_csv(w, &curve))?;
    write_atomic(&dir.join("partition.csv"), |w| write_partition_csv(w, &grid))?;
    let zeros = grid.iter().filter(|p| p.nonzeros == 0).count();
    println!(
        "{} threshold samples, {} grid points ({} mapped to zero)",
        curve.len(),
        grid.len(),
        zeros
    );
    Ok(())
}
