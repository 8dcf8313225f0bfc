//! Synthetic size-recovery benchmark: a 10-atom bar dictionary on 10x10
//! patches, 3-sparse signals with uniform coefficients, and repeated
//! learn-then-validate runs summarized per `(sigma, p0)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::coding::{OmpDictionary, SignalBatch};
use crate::dictionary::Dictionary;
use crate::error::{GscadError, Result};
use crate::learner::{learn, DataWeight, LearnConfig};
use crate::penalty::PenaltyParams;

/// Side of the square patch each generating atom lives on.
pub const D0_SIDE: usize = 10;
pub const D0_ATOMS: usize = 10;

/// Ten binary 10x10 atoms: five horizontal and five vertical bars of width 2.
pub fn generate_d0() -> Dictionary {
    let m = D0_SIDE * D0_SIDE;
    let mut atoms = DMatrix::zeros(m, D0_ATOMS);
    for bar in 0..5 {
        for along in 0..D0_SIDE {
            for offset in 0..2 {
                let across = 2 * bar + offset;
                // Column-major vectorization: index = col * side + row.
                atoms[(along * D0_SIDE + across, bar)] = 1.0;
                atoms[(across * D0_SIDE + along, bar + 5)] = 1.0;
            }
        }
    }
    Dictionary::new(atoms).expect("binary atoms are sup-norm bounded")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub sparsity: usize,
    pub coef_low: f64,
    pub coef_high: f64,
    pub sigma: f64,
    pub p0: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Learner settings; `p0` and `seed` are overridden per repetition.
    pub learn: LearnConfig,
}

/// Learner settings used for the synthetic benchmark. The coding terms are
/// down-weighted so the dictionary penalty can remove atoms that only fit
/// noise; see [`LearnConfig::data_weight`].
pub fn default_learn_config() -> LearnConfig {
    LearnConfig {
        params: PenaltyParams {
            lambda1: 0.05,
            c: 3.0,
            rho: 1.0,
            lambda2: 0.4,
        },
        data_weight: DataWeight::PerSignal(37.5),
        outer_max_iter: 100,
        ..LearnConfig::default()
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 1500,
            n_test: 1000,
            sparsity: 3,
            coef_low: 0.0,
            coef_high: 1.0 / 3.0,
            sigma: 0.025,
            p0: 20,
            repetitions: 20,
            seed: 0,
            learn: default_learn_config(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sparsity == 0 || self.sparsity > D0_ATOMS {
            return Err(GscadError::InvalidParameter(format!(
                "sparsity must lie in 1..={D0_ATOMS}, got {}",
                self.sparsity
            )));
        }
        if !(self.coef_low < self.coef_high) {
            return Err(GscadError::InvalidParameter(format!(
                "need coef_low < coef_high, got {} and {}",
                self.coef_low, self.coef_high
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(GscadError::InvalidParameter(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if self.repetitions == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(GscadError::InvalidParameter(
                "repetitions, n_train and n_test must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSignals {
    pub clean: SignalBatch,
    pub noisy: SignalBatch,
    /// Generating atom indices of each signal, sorted.
    pub supports: Vec<Vec<usize>>,
}

/// Draws `n` signals, each a combination of `cfg.sparsity` distinct atoms of
/// `d0` with i.i.d. `Unif(coef_low, coef_high)` weights, plus `N(0, sigma^2)` noise.
pub fn generate_signals(
    d0: &Dictionary,
    n: usize,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SyntheticSignals> {
    cfg.validate()?;
    if cfg.sparsity > d0.p() {
        return Err(GscadError::InvalidParameter(format!(
            "sparsity {} exceeds the {} generating atoms",
            cfg.sparsity,
            d0.p()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| GscadError::InvalidParameter(e.to_string()))?;
    let m = d0.m();
    let mut clean = DMatrix::zeros(m, n);
    let mut noisy = DMatrix::zeros(m, n);
    let mut supports = Vec::with_capacity(n);
    for i in 0..n {
        let mut support = sample(&mut rng, d0.p(), cfg.sparsity).into_vec();
        support.sort_unstable();
        let mut x = DVector::zeros(m);
        for &j in &support {
            let w = rng.gen_range(cfg.coef_low..cfg.coef_high);
            x.axpy(w, &d0.atoms().column(j), 1.0);
        }
        let y = if cfg.sigma > 0.0 {
            x.map(|v| v + noise.sample(&mut rng))
        } else {
            x.clone()
        };
        clean.set_column(i, &x);
        noisy.set_column(i, &y);
        supports.push(support);
    }
    Ok(SyntheticSignals {
        clean: SignalBatch::new(clean)?,
        noisy: SignalBatch::new(noisy)?,
        supports,
    })
}

/// `10 log10(sum ||x_i||^2 / sum ||x_hat_i - x_i||^2)`, aggregated over the
/// batch. Exact reconstruction gives `+inf`.
pub fn psnr_signals(clean: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    if clean.shape() != estimate.shape() {
        return Err(GscadError::DimensionMismatch(format!(
            "clean is {:?} but estimate is {:?}",
            clean.shape(),
            estimate.shape()
        )));
    }
    let signal = clean.norm_squared();
    if signal == 0.0 {
        return Err(GscadError::UndefinedInput(
            "clean batch has zero energy".into(),
        ));
    }
    let error = (estimate - clean).norm_squared();
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / error).log10())
}

/// OMP reconstruction `D alpha` of every column with `k` atoms.
pub fn reconstruct_fixed(dict: &Dictionary, signals: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let omp = OmpDictionary::new(dict.atoms());
    let k = k.min(dict.p());
    let cols: Vec<DVector<f64>> = (0..signals.ncols())
        .into_par_iter()
        .map(|i| {
            let y = signals.column(i).clone_owned();
            omp.fixed(&y, k).map(|r| dict.atoms() * r.code)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&cols))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepetitionOutcome {
    Completed {
        seed: u64,
        p_hat: usize,
        /// PSNR of the OMP reconstruction against the clean test signals.
        psnr: f64,
        /// PSNR of the noisy test signals themselves.
        psnr_noisy: f64,
        outer_iterations: usize,
        converged: bool,
    },
    Failed {
        seed: u64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub sigma: f64,
    pub p0: usize,
    pub mean_p_hat: f64,
    pub sd_p_hat: f64,
    pub psnr_q1: f64,
    pub psnr_median: f64,
    pub psnr_q3: f64,
    pub outcomes: Vec<RepetitionOutcome>,
}

impl ExperimentRow {
    pub fn failures(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, RepetitionOutcome::Failed { .. }))
            .count()
    }

    pub fn completed(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.outcomes.iter().filter_map(|o| match *o {
            RepetitionOutcome::Completed {
                p_hat,
                psnr,
                psnr_noisy,
                ..
            } => Some((p_hat, psnr, psnr_noisy)),
            RepetitionOutcome::Failed { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "sigma,p0,mean_p_hat,sd_p_hat,psnr_q1,psnr_median,psnr_q3")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.sigma, r.p0, r.mean_p_hat, r.sd_p_hat, r.psnr_q1, r.psnr_median, r.psnr_q3
            )?;
        }
        Ok(())
    }
}

/// Repetition seeds derived from the master seed.
pub fn repetition_seeds(master: u64, repetitions: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..repetitions).map(|_| rng.gen()).collect()
}

fn run_repetition(d0: &Dictionary, cfg: &SynthConfig, seed: u64) -> Result<RepetitionOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_seed, learn_seed, test_seed): (u64, u64, u64) = (rng.gen(), rng.gen(), rng.gen());
    let train = generate_signals(d0, cfg.n_train, cfg, train_seed)?;
    let learn_cfg = LearnConfig {
        p0: cfg.p0,
        seed: learn_seed,
        ..cfg.learn.clone()
    };
    let report = learn(&train.noisy, &learn_cfg)?;
    let test = generate_signals(d0, cfg.n_test, cfg, test_seed)?;
    let estimate = reconstruct_fixed(&report.dictionary, test.noisy.data(), cfg.sparsity)?;
    Ok(RepetitionOutcome::Completed {
        seed,
        p_hat: report.p_hat,
        psnr: psnr_signals(test.clean.data(), &estimate)?,
        psnr_noisy: psnr_signals(test.clean.data(), test.noisy.data())?,
        outer_iterations: report.outer_iterations,
        converged: report.converged,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs `cfg.repetitions` independent learn/validate repetitions at one
/// `(sigma, p0)` setting. Failed repetitions are kept in `outcomes`.
pub fn run_experiment(cfg: &SynthConfig) -> Result<ExperimentRow> {
    cfg.validate()?;
    cfg.learn.validate()?;
    let d0 = generate_d0();
    let seeds = repetition_seeds(cfg.seed, cfg.repetitions);
    let outcomes: Vec<RepetitionOutcome> = seeds
        .par_iter()
        .map(|&seed| {
            run_repetition(&d0, cfg, seed).unwrap_or_else(|e| RepetitionOutcome::Failed {
                seed,
                reason: e.to_string(),
            })
        })
        .collect();

    let mut row = ExperimentRow {
        sigma: cfg.sigma,
        p0: cfg.p0,
        mean_p_hat: f64::NAN,
        sd_p_hat: f64::NAN,
        psnr_q1: f64::NAN,
        psnr_median: f64::NAN,
        psnr_q3: f64::NAN,
        outcomes,
    };
    let (sizes, mut psnrs): (Vec<f64>, Vec<f64>) =
        row.completed().map(|(p, psnr, _)| (p as f64, psnr)).unzip();
    if !sizes.is_empty() {
        let n = sizes.len() as f64;
        let mean = sizes.iter().sum::<f64>() / n;
        let var = if sizes.len() > 1 {
            sizes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        psnrs.sort_by(f64::total_cmp);
        row.mean_p_hat = mean;
        row.sd_p_hat = var.sqrt();
        row.psnr_q1 = quantile(&psnrs, 0.25);
        row.psnr_median = quantile(&psnrs, 0.5);
        row.psnr_q3 = quantile(&psnrs, 0.75);
    }
    Ok(row)
}

/// Runs [`run_experiment`] over every `(sigma, p0)` pair, sigma-major.
pub fn run_grid(base: &SynthConfig, sigmas: &[f64], p0s: &[usize]) -> Result<ExperimentTable> {
    let mut table = ExperimentTable::default();
    for &sigma in sigmas {
        for &p0 in p0s {
            let cfg = SynthConfig {
                sigma,
                p0,
                ..base.clone()
            };
            table.rows.push(run_experiment(&cfg)?);
        }
    }
    Ok(table)
}
