//! Alternating dictionary learning with the GSCAD penalty.
//!
//! The outer loop alternates a lasso sparse-coding stage with an ADMM
//! dictionary update. The ADMM split keeps the data term on `D1` (a ridge
//! solve with a closed form) and the penalty on `D2` (a column-wise GSCAD
//! prox); columns of `D2` that the prox sends to exactly zero are dropped,
//! which is how the dictionary size shrinks.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{lasso_batch, CodeMatrix, LassoOptions, SignalBatch};
use crate::dictionary::{
    dedup_correlated, init_uniform, normalize_columns, prune_zero_columns, Dictionary,
};
use crate::error::{GscadError, Result};
use crate::penalty::{prox_column, PenaltyParams, ProxOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub params: PenaltyParams,
    pub p0: usize,
    /// Sup-norm change of both `D` and `A` below which the outer loop stops.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Bound on `||D1 - D2||_F` ending the ADMM loop.
    pub admm_tol: f64,
    pub admm_max_iter: usize,
    pub dedup_threshold: f64,
    /// Weight `w` on the coding terms: the learner minimizes
    /// `w (1/2 ||Y - DA||^2 + lambda2 ||A||_1) + Psi(D)`.
    pub data_weight: DataWeight,
    pub seed: u64,
    pub lasso: LassoOptions,
    pub prox: ProxOptions,
}

/// How the coding terms are weighted against the dictionary penalty.
///
/// With a unit weight the penalty, at most `p log(1 + m psi_max)`, is
/// negligible next to a data term summed over thousands of signals, so atoms
/// are almost never removed. [`DataWeight::PerSignal`] keeps the balance fixed
/// as the number of training signals changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataWeight {
    /// `w` used as given.
    Fixed(f64),
    /// `w = kappa / n` for `n` training signals.
    PerSignal(f64),
}

impl DataWeight {
    /// The constant as configured, before any division by `n`.
    pub fn value(&self) -> f64 {
        match *self {
            DataWeight::Fixed(w) | DataWeight::PerSignal(w) => w,
        }
    }

    pub fn resolve(&self, n: usize) -> f64 {
        match *self {
            DataWeight::Fixed(w) => w,
            DataWeight::PerSignal(kappa) => kappa / n.max(1) as f64,
        }
    }
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            params: PenaltyParams::default(),
            p0: 20,
            outer_tol: 1e-4,
            outer_max_iter: 30,
            admm_tol: 1e-6,
            admm_max_iter: 300,
            dedup_threshold: 0.95,
            data_weight: DataWeight::Fixed(1.0),
            seed: 0,
            lasso: LassoOptions::default(),
            prox: ProxOptions::default(),
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.p0 == 0 {
            return Err(GscadError::InvalidParameter("p0 must be at least 1".into()));
        }
        for (name, v) in [
            ("outer_tol", self.outer_tol),
            ("admm_tol", self.admm_tol),
            ("data_weight", self.data_weight.value()),
            ("lasso tol", self.lasso.tol),
            ("prox tol", self.prox.tol),
        ] {
            if !(v > 0.0) {
                return Err(GscadError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(GscadError::InvalidParameter(format!(
                "dedup threshold must lie in (0, 1], got {}",
                self.dedup_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    /// `||D1 - D2||_F` after every iteration.
    pub primal_residuals: Vec<f64>,
    pub iteration: usize,
}

impl AdmmState {
    fn zeros(m: usize, p: usize) -> Self {
        AdmmState {
            d1: DMatrix::zeros(m, p),
            d2: DMatrix::zeros(m, p),
            xi: DMatrix::zeros(m, p),
            primal_residuals: Vec::new(),
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    /// `D2` with zero columns removed.
    pub dictionary: Dictionary,
    /// Input column index of each surviving atom.
    pub kept: Vec<usize>,
    pub state: AdmmState,
    pub converged: bool,
    /// Prox calls that stopped at the sweep cap.
    pub prox_unconverged: usize,
}

/// One ADMM dictionary update for fixed codes.
///
/// `D2` and the scaled dual start at zero; each iteration does
///
/// 1. `D1 = (w Y A^T + rho (D2 - xi)) (w A A^T + rho I)^{-1}`,
/// 2. columns of `D1` scaled by `1 / max(||d||_inf, 1)`,
/// 3. `d2_j = prox(d1_j + xi_j)` for every column,
/// 4. `xi += D1 - D2`.
///
/// The returned `D2` is rescaled onto the sup-norm ball (the dual shift can
/// push a prox input past 1) and its zero columns are pruned.
pub fn admm_update(
    signals: &SignalBatch,
    codes: &DMatrix<f64>,
    cfg: &LearnConfig,
) -> Result<AdmmOutcome> {
    let y = signals.data();
    let (m, n) = y.shape();
    let p = codes.nrows();
    if codes.ncols() != n {
        return Err(GscadError::DimensionMismatch(format!(
            "codes have {} columns but there are {n} signals",
            codes.ncols()
        )));
    }
    cfg.params.validate()?;
    let rho = cfg.params.rho;
    let scad = cfg.params.dictionary_penalty();

    let w = cfg.data_weight.resolve(n);
    let ya = y * codes.transpose() * w;
    let mut system = codes * codes.transpose() * w;
    for i in 0..p {
        system[(i, i)] += rho;
    }
    let chol = system.cholesky().ok_or_else(|| {
        GscadError::InvalidParameter("A A^T + rho I is not positive definite".into())
    })?;

    let mut st = AdmmState::zeros(m, p);
    let mut converged = false;
    let mut prox_unconverged = 0;
    while st.iteration < cfg.admm_max_iter {
        let rhs = &ya + (&st.d2 - &st.xi) * rho;
        st.d1 = chol.solve(&rhs.transpose()).transpose();
        normalize_columns(&mut st.d1);

        let inputs = &st.d1 + &st.xi;
        let columns: Vec<(Vec<f64>, bool)> = (0..p)
            .into_par_iter()
            .map(|j| {
                let z: Vec<f64> = inputs.column(j).iter().copied().collect();
                let r = prox_column(&z, rho, &scad, cfg.prox);
                (r.theta_hat, r.converged)
            })
            .collect();
        for (j, (theta, ok)) in columns.into_iter().enumerate() {
            st.d2.set_column(j, &nalgebra::DVector::from_vec(theta));
            if !ok {
                prox_unconverged += 1;
            }
        }

        let gap = &st.d1 - &st.d2;
        st.xi += &gap;
        st.iteration += 1;
        let residual = gap.norm();
        st.primal_residuals.push(residual);
        if residual <= cfg.admm_tol {
            converged = true;
            break;
        }
    }

    let mut out = st.d2.clone();
    normalize_columns(&mut out);
    let pruned = prune_zero_columns(&Dictionary::new(out)?);
    Ok(AdmmOutcome {
        dictionary: pruned.dictionary,
        kept: pruned.kept,
        state: st,
        converged,
        prox_unconverged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnReport {
    pub dictionary: Dictionary,
    pub p_hat: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Atom count after each outer iteration.
    pub atom_count_history: Vec<usize>,
    /// Codes for the training signals against the returned dictionary's
    /// atoms, from the last coding stage.
    pub codes: CodeMatrix,
}

/// JSON view of a [`LearnReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub p_hat: usize,
    pub iterations: usize,
    pub converged: bool,
    pub atom_count_history: Vec<usize>,
}

impl LearnReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            p_hat: self.p_hat,
            iterations: self.outer_iterations,
            converged: self.converged,
            atom_count_history: self.atom_count_history.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())?)
    }
}

/// Learns a dictionary from a uniform random start with `cfg.p0` atoms.
pub fn learn(signals: &SignalBatch, cfg: &LearnConfig) -> Result<LearnReport> {
    cfg.validate()?;
    let init = init_uniform(signals.m(), cfg.p0, cfg.seed)?;
    learn_from(signals, init, cfg)
}

/// Learns a dictionary starting from `init`; `cfg.p0` is ignored.
pub fn learn_from(
    signals: &SignalBatch,
    init: Dictionary,
    cfg: &LearnConfig,
) -> Result<LearnReport> {
    cfg.validate()?;
    if signals.n() == 0 {
        return Err(GscadError::InvalidParameter("no training signals".into()));
    }
    if init.m() != signals.m() {
        return Err(GscadError::DimensionMismatch(format!(
            "dictionary has {} rows but signals have dimension {}",
            init.m(),
            signals.m()
        )));
    }
    if init.is_empty() {
        return Err(GscadError::EmptyDictionary);
    }

    let mut dict = init;
    let mut codes = DMatrix::zeros(dict.p(), signals.n());
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.outer_max_iter {
        iterations += 1;
        let coded = lasso_batch(
            dict.atoms(),
            signals,
            cfg.params.lambda2,
            cfg.lasso,
            Some(&codes),
        )?;
        let new_codes = coded.codes.data;

        let admm = admm_update(signals, &new_codes, cfg)?;
        if admm.dictionary.is_empty() {
            return Err(GscadError::EmptyDictionary);
        }
        let dedup = dedup_correlated(&admm.dictionary, cfg.dedup_threshold)?;
        let kept: Vec<usize> = dedup.kept.iter().map(|&k| admm.kept[k]).collect();
        let new_dict = dedup.dictionary;
        let new_codes = new_codes.select_rows(&kept);

        let same_shape = new_dict.p() == dict.p();
        let d_change = if same_shape {
            (new_dict.atoms() - dict.atoms()).amax()
        } else {
            f64::INFINITY
        };
        let a_change = if same_shape {
            (&new_codes - &codes).amax()
        } else {
            f64::INFINITY
        };

        dict = new_dict;
        codes = new_codes;
        history.push(dict.p());
        if d_change <= cfg.outer_tol && a_change <= cfg.outer_tol {
            converged = true;
            break;
        }
    }

    let p_hat = dict.p();
    Ok(LearnReport {
        dictionary: dict,
        p_hat,
        outer_iterations: iterations,
        converged,
        atom_count_history: history,
        codes: CodeMatrix::from_matrix(codes),
    })
}
