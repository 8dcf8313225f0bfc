//! Per-signal sparse coders: lasso by coordinate descent, OMP with a fixed
//! cardinality or an error budget, and the chi-square quantile used to set
//! that budget.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::gamma_lr;

use crate::error::{GscadError, Result};

/// `m x n` batch of signals, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBatch {
    data: DMatrix<f64>,
}

impl SignalBatch {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GscadError::InvalidParameter(
                "signal batch contains non-finite entries".into(),
            ));
        }
        Ok(SignalBatch { data })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Signal dimension.
    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    /// Number of signals.
    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    /// Reads an `m x n` batch: a header naming the `n` signals, then one
    /// row per signal coordinate.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let n = reader
            .headers()
            .map_err(|e| GscadError::MalformedCsv(e.to_string()))?
            .len();
        let values = crate::dictionary::read_numeric_rows(&mut reader, n)?;
        if n == 0 || values.is_empty() {
            return Err(GscadError::MalformedCsv("no signals in input".into()));
        }
        SignalBatch::new(DMatrix::from_row_slice(values.len() / n, n, &values))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.n()).map(|j| format!("signal_{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in self.data.row_iter() {
            let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// `p x n` coefficient matrix, one code per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix {
    pub data: DMatrix<f64>,
    pub nnz_per_column: Vec<usize>,
}

impl CodeMatrix {
    pub fn from_matrix(data: DMatrix<f64>) -> Self {
        let nnz_per_column = data
            .column_iter()
            .map(|c| c.iter().filter(|&&v| v != 0.0).count())
            .collect();
        CodeMatrix {
            data,
            nnz_per_column,
        }
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        CodeMatrix {
            data: DMatrix::zeros(p, n),
            nnz_per_column: vec![0; n],
        }
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Bound on the KKT residual at return.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-7,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoResult {
    pub code: DVector<f64>,
    pub converged: bool,
    pub sweeps: usize,
    pub kkt_residual: f64,
    /// Objective after each sweep, starting with the initial point.
    pub objective_history: Vec<f64>,
}

/// Lasso coordinate descent on the Gram form: `gram = D^T D`, `corr = D^T y`.
///
/// Keeps `grad = D^T (y - D alpha)` up to date so each coordinate update is
/// O(1) plus an O(p) correction when the coordinate moves.
fn lasso_gram(
    gram: &DMatrix<f64>,
    corr: &[f64],
    y_norm_sq: f64,
    lambda: f64,
    warm: Option<&[f64]>,
    opts: LassoOptions,
) -> LassoResult {
    let p = corr.len();
    let mut alpha = match warm {
        Some(w) => w.to_vec(),
        None => vec![0.0; p],
    };
    let mut grad = corr.to_vec();
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (g, gk) in grad.iter_mut().zip(gram.column(j).iter()) {
                *g -= a * gk;
            }
        }
    }

    let objective = |alpha: &[f64], grad: &[f64]| {
        let mut quad = 0.0;
        let mut l1 = 0.0;
        for j in 0..p {
            quad += alpha[j] * (corr[j] + grad[j]);
            l1 += alpha[j].abs();
        }
        0.5 * y_norm_sq - 0.5 * quad + lambda * l1
    };
    let kkt = |alpha: &[f64], grad: &[f64]| {
        let mut worst: f64 = 0.0;
        for j in 0..p {
            if gram[(j, j)] == 0.0 {
                continue;
            }
            let r = if alpha[j] == 0.0 {
                (grad[j].abs() - lambda).max(0.0)
            } else {
                (grad[j] - lambda * alpha[j].signum()).abs()
            };
            worst = worst.max(r);
        }
        worst
    };

    let mut history = vec![objective(&alpha, &grad)];
    let mut residual = kkt(&alpha, &grad);
    let mut sweeps = 0;
    let mut last_pattern: Vec<(usize, bool)> = Vec::new();
    let mut rejected_pattern: Vec<(usize, bool)> = Vec::new();
    while residual > opts.tol && sweeps < opts.max_iter {
        sweeps += 1;
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj == 0.0 {
                alpha[j] = 0.0;
                continue;
            }
            let old = alpha[j];
            let new = soft_threshold(grad[j] + gjj * old, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                alpha[j] = new;
                for (g, gk) in grad.iter_mut().zip(gram.column(j).iter()) {
                    *g -= delta * gk;
                }
            }
        }
        residual = kkt(&alpha, &grad);

        // Once the signed support settles, solve the smooth problem on it exactly.
        let pattern: Vec<(usize, bool)> = alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (j, a > 0.0))
            .collect();
        // A pattern whose polish was rejected is not retried.
        if residual > opts.tol
            && !pattern.is_empty()
            && pattern == last_pattern
            && pattern != rejected_pattern
        {
            let current = objective(&alpha, &grad);
            match polish_on_support(gram, corr, &alpha, &pattern, lambda) {
                Some((a2, g2)) if objective(&a2, &g2) <= current => {
                    alpha = a2;
                    grad = g2;
                    residual = kkt(&alpha, &grad);
                }
                _ => rejected_pattern = pattern.clone(),
            }
        }
        last_pattern = pattern;
        history.push(objective(&alpha, &grad));
    }

    LassoResult {
        code: DVector::from_vec(alpha),
        converged: residual <= opts.tol,
        sweeps,
        kkt_residual: residual,
        objective_history: history,
    }
}

/// Exact step on a fixed signed support `S`.
///
/// With `G_SS` nonsingular this solves `G_SS a_S = corr_S - lambda sign_S`.
/// When `G_SS` is singular the fit is flat along its null space, so the point
/// moves along a null vector in the direction that lowers `lambda ||a||_1`
/// until one coordinate reaches zero. Returns the new point with its
/// gradient, or `None` if no valid step exists.
fn polish_on_support(
    gram: &DMatrix<f64>,
    corr: &[f64],
    alpha: &[f64],
    pattern: &[(usize, bool)],
    lambda: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let idx: Vec<usize> = pattern.iter().map(|&(j, _)| j).collect();
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |r, c| gram[(idx[r], idx[c])]);
    let rhs = DVector::from_fn(k, |r, _| {
        let s = if pattern[r].1 { 1.0 } else { -1.0 };
        corr[idx[r]] - lambda * s
    });
    let mut next = alpha.to_vec();

    // Cholesky succeeds on the usual well-posed support; the eigen route
    // below handles the singular case.
    if let Some(chol) = sub.clone().cholesky() {
        let sol = chol.solve(&rhs);
        let consistent = pattern.iter().zip(sol.iter()).all(|(&(_, positive), &v)| {
            v.is_finite() && v != 0.0 && (v > 0.0) == positive
        });
        let diag_min = (0..k).map(|r| chol.l_dirty()[(r, r)]).fold(f64::INFINITY, f64::min);
        let diag_max = (0..k).map(|r| chol.l_dirty()[(r, r)]).fold(0.0, f64::max);
        if diag_min > 1e-5 * diag_max {
            if !consistent {
                return None;
            }
            for (r, &(j, _)) in pattern.iter().enumerate() {
                next[j] = sol[r];
            }
            return Some(with_gradient(gram, corr, next));
        }
    }

    let eig = sub.clone().symmetric_eigen();
    let (imin, &emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let emax = eig.eigenvalues.amax();

    if emin > 1e-10 * emax {
        let sol = sub.cholesky()?.solve(&rhs);
        for (r, &(j, positive)) in pattern.iter().enumerate() {
            let v = sol[r];
            if !v.is_finite() || v == 0.0 || (v > 0.0) != positive {
                return None;
            }
            next[j] = v;
        }
    } else {
        let mut dir = eig.eigenvectors.column(imin).clone_owned();
        let slope: f64 = pattern
            .iter()
            .zip(dir.iter())
            .map(|(&(_, positive), d)| if positive { *d } else { -*d })
            .sum();
        if slope > 0.0 {
            dir = -dir;
        }
        let mut step = f64::INFINITY;
        let mut hit = None;
        for (r, &j) in idx.iter().enumerate() {
            let (a, d) = (alpha[j], dir[r]);
            if a * d < 0.0 {
                let t = -a / d;
                if t < step {
                    step = t;
                    hit = Some(j);
                }
            }
        }
        let hit = hit?;
        for (r, &j) in idx.iter().enumerate() {
            next[j] = alpha[j] + step * dir[r];
        }
        next[hit] = 0.0;
    }
    Some(with_gradient(gram, corr, next))
}

fn with_gradient(gram: &DMatrix<f64>, corr: &[f64], alpha: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut grad = corr.to_vec();
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (g, gk) in grad.iter_mut().zip(gram.column(j).iter()) {
                *g -= a * gk;
            }
        }
    }
    (alpha, grad)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(GscadError::InvalidParameter(format!(
            "lambda2 must be nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

/// Minimizes `1/2 ||y - D alpha||^2 + lambda2 ||alpha||_1`.
pub fn lasso_cd(
    dict: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda2: f64,
    opts: LassoOptions,
) -> Result<LassoResult> {
    check_lambda(lambda2)?;
    if dict.ncols() == 0 {
        return Err(GscadError::EmptyDictionary);
    }
    if dict.nrows() != y.len() {
        return Err(GscadError::DimensionMismatch(format!(
            "dictionary has {} rows but signal has length {}",
            dict.nrows(),
            y.len()
        )));
    }
    let gram = dict.tr_mul(dict);
    let corr = dict.tr_mul(y);
    Ok(lasso_gram(
        &gram,
        corr.as_slice(),
        y.norm_squared(),
        lambda2,
        None,
        opts,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoBatchResult {
    pub codes: CodeMatrix,
    /// Columns that hit `max_iter` before meeting the KKT tolerance.
    pub unconverged: Vec<usize>,
    pub max_kkt_residual: f64,
}

/// Column-wise [`lasso_cd`] over a batch, optionally warm-started.
pub fn lasso_batch(
    dict: &DMatrix<f64>,
    signals: &SignalBatch,
    lambda2: f64,
    opts: LassoOptions,
    warm: Option<&DMatrix<f64>>,
) -> Result<LassoBatchResult> {
    check_lambda(lambda2)?;
    let (m, p) = dict.shape();
    if p == 0 {
        return Err(GscadError::EmptyDictionary);
    }
    if m != signals.m() {
        return Err(GscadError::DimensionMismatch(format!(
            "dictionary has {m} rows but signals have dimension {}",
            signals.m()
        )));
    }
    if let Some(w) = warm {
        if w.shape() != (p, signals.n()) {
            return Err(GscadError::DimensionMismatch(format!(
                "warm start is {:?}, expected ({p}, {})",
                w.shape(),
                signals.n()
            )));
        }
    }
    let y = signals.data();
    let gram = dict.tr_mul(dict);
    let corr = dict.tr_mul(y);

    let results: Vec<LassoResult> = (0..signals.n())
        .into_par_iter()
        .map(|i| {
            let warm_col = warm.map(|w| w.column(i).iter().copied().collect::<Vec<_>>());
            lasso_gram(
                &gram,
                corr.column(i).as_slice(),
                y.column(i).norm_squared(),
                lambda2,
                warm_col.as_deref(),
                opts,
            )
        })
        .collect();

    let mut data = DMatrix::zeros(p, signals.n());
    let mut unconverged = Vec::new();
    let mut max_kkt: f64 = 0.0;
    for (i, r) in results.iter().enumerate() {
        data.set_column(i, &r.code);
        if !r.converged {
            unconverged.push(i);
        }
        max_kkt = max_kkt.max(r.kkt_residual);
    }
    Ok(LassoBatchResult {
        codes: CodeMatrix::from_matrix(data),
        unconverged,
        max_kkt_residual: max_kkt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmpStatus {
    Complete,
    /// The next selected atom was linearly dependent on the support.
    RankDeficient,
    /// The residual stayed above the error budget at the largest allowed support.
    BudgetUnreachable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub code: DVector<f64>,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    pub residual_norm_sq: f64,
    /// Squared residual norm before the first and after every selection.
    pub residual_history: Vec<f64>,
    pub status: OmpStatus,
}

enum Stop {
    Atoms(usize),
    Budget(f64),
}

/// Precomputed column norms so repeated OMP calls do not redo them.
#[derive(Debug, Clone)]
pub struct OmpDictionary<'a> {
    atoms: &'a DMatrix<f64>,
    norms: Vec<f64>,
}

impl<'a> OmpDictionary<'a> {
    pub fn new(atoms: &'a DMatrix<f64>) -> Self {
        let norms = atoms.column_iter().map(|c| c.norm()).collect();
        OmpDictionary { atoms, norms }
    }

    /// Greedy selection of exactly `k` atoms (fewer if the residual vanishes
    /// or the support turns rank deficient).
    pub fn fixed(&self, y: &DVector<f64>, k: usize) -> Result<OmpResult> {
        if k > self.atoms.ncols() {
            return Err(GscadError::InvalidParameter(format!(
                "k = {k} exceeds the {} available atoms",
                self.atoms.ncols()
            )));
        }
        self.run(y, Stop::Atoms(k))
    }

    /// Smallest greedy support with `||y - D alpha||^2 <= epsilon0`.
    pub fn error_constrained(&self, y: &DVector<f64>, epsilon0: f64) -> Result<OmpResult> {
        if !(epsilon0 > 0.0) {
            return Err(GscadError::InvalidParameter(format!(
                "epsilon0 must be positive, got {epsilon0}"
            )));
        }
        self.run(y, Stop::Budget(epsilon0))
    }

    fn run(&self, y: &DVector<f64>, stop: Stop) -> Result<OmpResult> {
        let (m, p) = self.atoms.shape();
        if y.len() != m {
            return Err(GscadError::DimensionMismatch(format!(
                "dictionary has {m} rows but signal has length {}",
                y.len()
            )));
        }
        let max_atoms = match stop {
            Stop::Atoms(k) => k,
            Stop::Budget(_) => m.min(p),
        };
        let done = |res: f64| match stop {
            Stop::Atoms(_) => res == 0.0,
            Stop::Budget(eps) => res <= eps,
        };

        let mut support: Vec<usize> = Vec::new();
        let mut in_support = vec![false; p];
        let mut residual = y.clone();
        let mut res_sq = residual.norm_squared();
        let mut history = vec![res_sq];
        let mut coeffs = DVector::zeros(0);
        let mut status = OmpStatus::Complete;

        while support.len() < max_atoms && !done(res_sq) {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..p {
                if in_support[j] || self.norms[j] == 0.0 {
                    continue;
                }
                let score = self.atoms.column(j).dot(&residual).abs() / self.norms[j];
                if best.map_or(true, |(_, s)| score > s) {
                    best = Some((j, score));
                }
            }
            let Some((j, score)) = best else { break };
            if score == 0.0 && matches!(stop, Stop::Budget(_)) {
                break;
            }

            let mut trial = support.clone();
            trial.push(j);
            let sub = self.atoms.select_columns(&trial);
            let gram = sub.tr_mul(&sub);
            let chol = match gram.cholesky() {
                Some(c) => c,
                None => {
                    status = OmpStatus::RankDeficient;
                    break;
                }
            };
            let last = trial.len() - 1;
            let pivot = chol.l_dirty()[(last, last)];
            if pivot * pivot <= 1e-10 * self.norms[j] * self.norms[j] {
                status = OmpStatus::RankDeficient;
                break;
            }
            coeffs = chol.solve(&sub.tr_mul(y));
            residual = y - &sub * &coeffs;
            res_sq = residual.norm_squared();
            history.push(res_sq);
            in_support[j] = true;
            support = trial;
        }

        if let Stop::Budget(eps) = stop {
            if res_sq > eps && status == OmpStatus::Complete {
                status = OmpStatus::BudgetUnreachable;
            }
        }

        let mut code = DVector::zeros(p);
        for (&j, &c) in support.iter().zip(coeffs.iter()) {
            code[j] = c;
        }
        Ok(OmpResult {
            code,
            support,
            residual_norm_sq: res_sq,
            residual_history: history,
            status,
        })
    }
}

pub fn omp_fixed(dict: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<OmpResult> {
    OmpDictionary::new(dict).fixed(y, k)
}

pub fn omp_error(dict: &DMatrix<f64>, y: &DVector<f64>, epsilon0: f64) -> Result<OmpResult> {
    OmpDictionary::new(dict).error_constrained(y, epsilon0)
}

/// Chi-square CDF through the regularized lower incomplete gamma function.
pub fn chi2_cdf(dof: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(dof as f64 / 2.0, x / 2.0)
}

/// `F_dof^{-1}(tau)` by bisection on [`chi2_cdf`].
pub fn chi2_quantile(dof: u32, tau: f64) -> Result<f64> {
    if dof == 0 {
        return Err(GscadError::InvalidParameter("dof must be positive".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(GscadError::InvalidParameter(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = dof as f64 + 1.0;
    while chi2_cdf(dof, hi) < tau {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(dof, mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-patch error budget `sigma^2 F_m^{-1}(tau)`, floored at `1e-8 m` so a
/// noiseless input still yields a positive budget.
pub fn error_budget(sigma: f64, tau: f64, m: usize) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(GscadError::InvalidParameter(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    let q = chi2_quantile(m as u32, tau)?;
    Ok((sigma * sigma * q).max(1e-8 * m as f64))
}
