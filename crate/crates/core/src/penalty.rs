//! SCAD and grouped-SCAD (GSCAD) penalties and the GSCAD proximal solver.
//!
//! The scalar SCAD penalty has three segments: linear (lasso-like) on
//! `|d| <= lambda`, a concave quadratic on `lambda < |d| <= c*lambda`, and a
//! constant `(c+1) lambda^2 / 2` beyond. GSCAD applies `log(1 + sum psi(theta_k))`
//! to a whole vector, which is what lets it zero out entire dictionary atoms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{GscadError, Result};

/// Hyperparameters shared by the learner: dictionary penalty `lambda1`,
/// SCAD shape `c`, ADMM weight `rho` and lasso level `lambda2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub lambda1: f64,
    pub c: f64,
    pub rho: f64,
    pub lambda2: f64,
}

impl PenaltyParams {
    pub fn new(lambda1: f64, c: f64, rho: f64, lambda2: f64) -> Result<Self> {
        let params = PenaltyParams {
            lambda1,
            c,
            rho,
            lambda2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        Scad::new(self.lambda1, self.c)?;
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(GscadError::InvalidParameter(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.lambda2 >= 0.0) || !self.lambda2.is_finite() {
            return Err(GscadError::InvalidParameter(format!(
                "lambda2 must be nonnegative, got {}",
                self.lambda2
            )));
        }
        Ok(())
    }

    /// The SCAD penalty acting on dictionary entries.
    pub fn dictionary_penalty(&self) -> Scad {
        Scad {
            lambda: self.lambda1,
            c: self.c,
        }
    }
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            lambda1: 0.05,
            c: 3.0,
            rho: 1.0,
            lambda2: 0.1,
        }
    }
}

/// A validated SCAD penalty `psi_lambda` with knot multiplier `c > 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scad {
    lambda: f64,
    c: f64,
}

impl Scad {
    pub fn new(lambda: f64, c: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(GscadError::InvalidParameter(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        if !(c > 2.0) || !c.is_finite() {
            return Err(GscadError::InvalidParameter(format!(
                "c must exceed 2, got {c}"
            )));
        }
        Ok(Scad { lambda, c })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Saturation level `(c+1) lambda^2 / 2`.
    pub fn max_value(&self) -> f64 {
        0.5 * (self.c + 1.0) * self.lambda * self.lambda
    }

    pub fn value(&self, d: f64) -> f64 {
        let a = d.abs();
        let (l, c) = (self.lambda, self.c);
        if a <= l {
            l * a
        } else if a <= c * l {
            -(a * a - 2.0 * c * l * a + l * l) / (2.0 * (c - 1.0))
        } else {
            self.max_value()
        }
    }

    /// First derivative. At the knots `|d| = lambda` and `|d| = c*lambda`
    /// the left segment is used.
    pub fn derivative(&self, d: f64) -> f64 {
        let a = d.abs();
        let (l, c) = (self.lambda, self.c);
        let magnitude = if a <= l {
            l
        } else if a <= c * l {
            (c * l - a) / (c - 1.0)
        } else {
            0.0
        };
        magnitude * sign(d)
    }

    /// Second derivative away from the knots.
    pub fn second_derivative(&self, d: f64) -> f64 {
        let a = d.abs();
        if a > self.lambda && a <= self.c * self.lambda {
            -1.0 / (self.c - 1.0)
        } else {
            0.0
        }
    }

    /// GSCAD penalty `log(1 + sum_k psi(theta_k))`.
    pub fn group_value(&self, theta: &[f64]) -> f64 {
        self.sum(theta).ln_1p()
    }

    fn sum(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|&t| self.value(t)).sum()
    }

    /// Exact minimizer over `theta` of
    /// `rho/2 (z - theta)^2 + log(1 + psi(theta) + s_other)`.
    ///
    /// Only the closed interval between 0 and `z` is searched; outside it the
    /// objective is never smaller. Candidates are the interval endpoints, the
    /// SCAD knots and the stationary points of each segment (a quadratic on
    /// the linear segment, a cubic on the concave one).
    pub fn solve_1d(&self, z: f64, s_other: f64, rho: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        if self.lambda == 0.0 {
            return z;
        }
        let a = z.abs();
        let l = self.lambda;
        let c = self.c;
        let k = 1.0 + s_other;
        let objective = |t: f64| 0.5 * rho * (a - t) * (a - t) + (k + self.value(t)).ln();

        let mut best_t = 0.0;
        let mut best_f = objective(0.0);
        let mut consider = |t: f64| {
            if t > 0.0 && t <= a {
                let f = objective(t);
                if f < best_f {
                    best_f = f;
                    best_t = t;
                }
            }
        };

        consider(a);
        consider(l.min(a));
        consider((c * l).min(a));

        // Linear segment: rho (t - a)(k + l t) + l = 0.
        let hi1 = l.min(a);
        let (roots, n) = quadratic_roots(rho * l, rho * (k - a * l), l - rho * a * k);
        for &t in &roots[..n] {
            if t > 0.0 && t < hi1 {
                consider(t);
            }
        }

        // Concave segment: rho (t - a)(c-1)(k + psi(t)) + c l - t = 0.
        if a > l {
            let hi2 = (c * l).min(a);
            let b0 = (c - 1.0) * k - 0.5 * l * l;
            let coeffs = [
                -0.5 * rho,
                rho * (c * l + 0.5 * a),
                rho * (b0 - a * c * l) - 1.0,
                c * l - rho * a * b0,
            ];
            let (roots, n) = cubic_roots(coeffs);
            for &t in &roots[..n] {
                if t > l && t < hi2 {
                    consider(t);
                }
            }
        }

        if best_t == 0.0 {
            0.0
        } else {
            best_t.copysign(z)
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Real roots of `a t^2 + b t + c`.
fn quadratic_roots(a: f64, b: f64, c: f64) -> ([f64; 2], usize) {
    if a == 0.0 {
        if b == 0.0 {
            return ([0.0; 2], 0);
        }
        return ([-c / b, 0.0], 1);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return ([0.0; 2], 0);
    }
    // Numerically stable pairing.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return ([0.0, 0.0], 1);
    }
    ([q / a, c / q], 2)
}

/// Real roots of `k3 t^3 + k2 t^2 + k1 t + k0` with `k3 != 0`, polished by Newton.
fn cubic_roots(k: [f64; 4]) -> ([f64; 3], usize) {
    let [k3, k2, k1, k0] = k;
    let (b, c, d) = (k2 / k3, k1 / k3, k0 / k3);
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = 0.25 * q * q + p * p * p / 27.0;

    let mut roots = [0.0; 3];
    let n;
    if disc > 0.0 {
        let s = disc.sqrt();
        roots[0] = (-0.5 * q + s).cbrt() + (-0.5 * q - s).cbrt() - shift;
        n = 1;
    } else if p == 0.0 {
        roots[0] = -shift;
        n = 1;
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (p * r)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        for (i, root) in roots.iter_mut().enumerate() {
            *root = r * (phi - 2.0 * std::f64::consts::PI * i as f64 / 3.0).cos() - shift;
        }
        n = 3;
    }

    for root in roots.iter_mut().take(n) {
        for _ in 0..3 {
            let t = *root;
            let f = ((k3 * t + k2) * t + k1) * t + k0;
            let df = (3.0 * k3 * t + 2.0 * k2) * t + k1;
            if df == 0.0 {
                break;
            }
            let next = t - f / df;
            if !next.is_finite() {
                break;
            }
            *root = next;
        }
    }
    (roots, n)
}

/// `psi_lambda(d)`.
pub fn scad(d: f64, lambda: f64, c: f64) -> Result<f64> {
    Ok(Scad::new(lambda, c)?.value(d))
}

/// `psi_lambda'(d)`, left-segment value at the knots.
pub fn scad_dot(d: f64, lambda: f64, c: f64) -> Result<f64> {
    Ok(Scad::new(lambda, c)?.derivative(d))
}

/// `Psi_lambda(theta) = log(1 + sum_k psi_lambda(theta_k))`.
pub fn gscad(theta: &[f64], lambda: f64, c: f64) -> Result<f64> {
    Ok(Scad::new(lambda, c)?.group_value(theta))
}

/// Sufficient condition for the orthogonal-design GSCAD problem to be convex
/// over the sign-consistent region, where `c0` counts the nonzero inputs.
pub fn convexity_condition(rho: f64, lambda: f64, c: f64, c0: usize) -> bool {
    let c0 = c0 as f64;
    let l2 = lambda * lambda;
    let first = l2 <= rho / c0;
    let second = (c - 1.0) * (rho * (1.0 + l2) * (1.0 + l2) - c0 * l2) >= 1.0 + l2;
    first && second
}

/// `rho/2 ||z - theta||^2 + log(1 + sum psi(theta_k))`.
pub fn prox_objective(z: &[f64], theta: &[f64], rho: f64, scad: &Scad) -> f64 {
    let quad: f64 = z
        .iter()
        .zip(theta)
        .map(|(zi, ti)| (zi - ti) * (zi - ti))
        .sum();
    0.5 * rho * quad + scad.group_value(theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub theta_hat: Vec<f64>,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// GSCAD proximal operator by cyclic coordinate minimization started at `z`.
///
/// Each coordinate is solved exactly with [`Scad::solve_1d`] while the
/// penalty mass of the other coordinates is held fixed. Coordinates whose
/// minimizer is zero come back as literal `0.0`.
pub fn prox_column(z: &[f64], rho: f64, scad: &Scad, opts: ProxOptions) -> ProxResult {
    let mut theta = z.to_vec();
    let mut psi: Vec<f64> = theta.iter().map(|&t| scad.value(t)).collect();
    let mut total: f64 = psi.iter().sum();
    let mut converged = false;
    let mut iterations = 0;

    if z.iter().all(|&v| v == 0.0) {
        converged = true;
    }

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for k in 0..theta.len() {
            if z[k] == 0.0 {
                continue;
            }
            let others = (total - psi[k]).max(0.0);
            let updated = scad.solve_1d(z[k], others, rho);
            max_change = max_change.max((updated - theta[k]).abs());
            theta[k] = updated;
            psi[k] = scad.value(updated);
            total = others + psi[k];
        }
        // Refresh the running sum to avoid drift from incremental updates.
        total = psi.iter().sum();
        if max_change < opts.tol {
            converged = true;
        }
    }

    let objective_value = prox_objective(z, &theta, rho, scad);
    ProxResult {
        theta_hat: theta,
        objective_value,
        converged,
        iterations,
    }
}

/// One cell of a 2-D partition map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionPoint {
    pub z1: f64,
    pub z2: f64,
    pub nonzeros: usize,
}

/// Grid coordinates `-range, -range + step, ..., range`.
pub fn grid_axis(range: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(range >= 0.0) {
        return Err(GscadError::InvalidParameter(format!(
            "grid needs step > 0 and range >= 0, got step {step}, range {range}"
        )));
    }
    let n = (2.0 * range / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| -range + i as f64 * step).collect())
}

/// Number of nonzero prox outputs over the square `[-range, range]^2`.
pub fn partition_grid(
    range: f64,
    step: f64,
    rho: f64,
    lambda: f64,
    c: f64,
) -> Result<Vec<PartitionPoint>> {
    let scad = Scad::new(lambda, c)?;
    let axis = grid_axis(range, step)?;
    let mut points = Vec::with_capacity(axis.len() * axis.len());
    for &z1 in &axis {
        for &z2 in &axis {
            let res = prox_column(&[z1, z2], rho, &scad, ProxOptions::default());
            let nonzeros = res.theta_hat.iter().filter(|&&t| t != 0.0).count();
            points.push(PartitionPoint { z1, z2, nonzeros });
        }
    }
    Ok(points)
}

/// Scalar threshold function `z -> theta_hat(z)` over `[-range, range]`.
pub fn threshold_curve(
    range: f64,
    step: f64,
    rho: f64,
    lambda: f64,
    c: f64,
) -> Result<Vec<(f64, f64)>> {
    let scad = Scad::new(lambda, c)?;
    Ok(grid_axis(range, step)?
        .into_iter()
        .map(|z| (z, scad.solve_1d(z, 0.0, rho)))
        .collect())
}

pub fn write_partition_csv<W: Write>(mut out: W, points: &[PartitionPoint]) -> Result<()> {
    writeln!(out, "z1,z2,nonzeros")?;
    for p in points {
        writeln!(out, "{},{},{}", p.z1, p.z2, p.nonzeros)?;
    }
    Ok(())
}

pub fn write_threshold_csv<W: Write>(mut out: W, curve: &[(f64, f64)]) -> Result<()> {
    writeln!(out, "z,theta_hat")?;
    for (z, t) in curve {
        writeln!(out, "{z},{t}")?;
    }
    Ok(())
}
