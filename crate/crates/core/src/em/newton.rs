//! Newton-Raphson for weighted multinomial-logit likelihoods.
//!
//! Maximizes `Σ_r Σ_c w_rc log p_c(x_r)` where `p(x)` is a softmax over
//! linear predictors `coef_c · x` with one reference category pinned at zero.
//! Weights need not be integers, which is how posterior state probabilities
//! enter the M-step.

use nalgebra::{DMatrix, DVector};

use crate::numeric::softmax;

/// Ridge added to the negative Hessian before solving.
pub const HESSIAN_RIDGE: f64 = 1e-8;
/// Maximum number of step halvings per Newton iteration.
pub const MAX_HALVINGS: usize = 20;

/// Rows of a weighted multinomial-logit problem.
#[derive(Debug, Clone)]
pub(crate) struct WeightedRows {
    /// Design width, intercept included.
    pub dim: usize,
    pub n_cat: usize,
    /// `[row * dim + a]`
    pub x: Vec<f64>,
    /// `[row * n_cat + c]`
    pub w: Vec<f64>,
}

impl WeightedRows {
    pub fn new(dim: usize, n_cat: usize) -> Self {
        Self {
            dim,
            n_cat,
            x: Vec::new(),
            w: Vec::new(),
        }
    }

    /// Adds a row; `x` excludes the intercept.
    pub fn push(&mut self, x: &[f64], w: &[f64]) {
        debug_assert_eq!(x.len() + 1, self.dim);
        debug_assert_eq!(w.len(), self.n_cat);
        self.x.push(1.0);
        self.x.extend_from_slice(x);
        self.w.extend_from_slice(w);
    }

    /// Adds weights to an existing row.
    pub fn add_weights(&mut self, row: usize, w: &[f64]) {
        for (acc, v) in self.w[row * self.n_cat..(row + 1) * self.n_cat].iter_mut().zip(w) {
            *acc += v;
        }
    }

    pub fn len(&self) -> usize {
        self.w.len() / self.n_cat.max(1)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug)]
pub(crate) enum NewtonError {
    NonFinite { iter: usize },
    Stalled { iter: usize, grad_norm: f64 },
    Singular { iter: usize },
}

struct Problem<'a> {
    rows: &'a WeightedRows,
    reference: usize,
    /// non-reference categories in ascending order
    free: Vec<usize>,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        self.free.len() * self.rows.dim
    }

    fn eta(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let d = self.rows.dim;
        out[self.reference] = 0.0;
        for (s, &c) in self.free.iter().enumerate() {
            out[c] = theta[s * d..(s + 1) * d].iter().zip(x).map(|(b, v)| b * v).sum();
        }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let (d, nc) = (self.rows.dim, self.rows.n_cat);
        let mut eta = vec![0.0; nc];
        let mut total = 0.0;
        for r in 0..self.rows.len() {
            let w = &self.rows.w[r * nc..(r + 1) * nc];
            if w.iter().all(|&v| v == 0.0) {
                continue;
            }
            self.eta(theta, &self.rows.x[r * d..(r + 1) * d], &mut eta);
            let lse = crate::numeric::log_sum_exp(&eta);
            for c in 0..nc {
                if w[c] != 0.0 {
                    total += w[c] * (eta[c] - lse);
                }
            }
        }
        total
    }

    /// Gradient and negative Hessian.
    fn derivatives(&self, theta: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let (d, nc) = (self.rows.dim, self.rows.n_cat);
        let m = self.n_params();
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        let mut eta = vec![0.0; nc];
        for r in 0..self.rows.len() {
            let w = &self.rows.w[r * nc..(r + 1) * nc];
            let total_w: f64 = w.iter().sum();
            if total_w == 0.0 {
                continue;
            }
            let x = &self.rows.x[r * d..(r + 1) * d];
            self.eta(theta, x, &mut eta);
            let p = softmax(&eta)?;
            for (s, &c) in self.free.iter().enumerate() {
                let resid = w[c] - total_w * p[c];
                for a in 0..d {
                    grad[s * d + a] += resid * x[a];
                }
                for (s2, &c2) in self.free.iter().enumerate().skip(s) {
                    let coef = total_w * p[c] * (if c == c2 { 1.0 } else { 0.0 } - p[c2]);
                    if coef == 0.0 {
                        continue;
                    }
                    for a in 0..d {
                        for b in 0..d {
                            hess[(s * d + a, s2 * d + b)] += coef * x[a] * x[b];
                        }
                    }
                }
            }
        }
        // fill the lower block triangle
        for i in 0..m {
            for j in 0..i {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        Some((grad, hess))
    }
}

fn solve(mut hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    for i in 0..hess.nrows() {
        hess[(i, i)] += HESSIAN_RIDGE;
    }
    if let Some(chol) = hess.clone().cholesky() {
        return Some(chol.solve(grad));
    }
    hess.lu().solve(grad)
}

/// Runs Newton-Raphson with step halving from the current coefficients.
///
/// `coef[c]` is the block for category `c`; `coef[reference]` is left
/// untouched. The objective never decreases across accepted steps; the final
/// objective is returned.
pub(crate) fn fit_multinomial_logit(
    rows: &WeightedRows,
    reference: usize,
    coef: &mut [Vec<f64>],
    opts: NewtonOptions,
) -> Result<f64, NewtonError> {
    let d = rows.dim;
    let problem = Problem {
        rows,
        reference,
        free: (0..rows.n_cat).filter(|&c| c != reference).collect(),
    };
    let mut theta: Vec<f64> = problem.free.iter().flat_map(|&c| coef[c].iter().copied()).collect();
    let mut f = problem.objective(&theta);
    if !f.is_finite() {
        return Err(NewtonError::NonFinite { iter: 0 });
    }
    let total_weight: f64 = rows.w.iter().sum();

    for iter in 1..=opts.max_iter {
        let (grad, hess) = problem.derivatives(&theta).ok_or(NewtonError::NonFinite { iter })?;
        let grad_norm = grad.amax();
        if grad_norm <= 1e-12 * (1.0 + total_weight) {
            break;
        }
        let step = solve(hess, &grad).ok_or(NewtonError::Singular { iter })?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let fc = problem.objective(&candidate);
            if fc.is_finite() && fc >= f {
                accepted = Some((candidate, fc));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((candidate, fc)) => {
                let gain = fc - f;
                theta = candidate;
                f = fc;
                if gain <= opts.tol * (1.0 + f.abs()) {
                    break;
                }
            }
            None => {
                // no ascent along the Newton direction: either already at the
                // optimum up to rounding, or genuinely stuck
                if grad_norm <= 1e-6 * (1.0 + total_weight) {
                    break;
                }
                return Err(NewtonError::Stalled { iter, grad_norm });
            }
        }
    }

    for (s, &c) in problem.free.iter().enumerate() {
        coef[c].copy_from_slice(&theta[s * d..(s + 1) * d]);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> NewtonOptions {
        NewtonOptions {
            max_iter: 50,
            tol: 1e-14,
        }
    }

    #[test]
    fn intercept_only_matches_closed_form() {
        let mut rows = WeightedRows::new(1, 3);
        rows.push(&[], &[2.0, 5.0, 3.0]);
        let mut coef = vec![vec![0.0]; 3];
        fit_multinomial_logit(&rows, 1, &mut coef, opts()).unwrap();
        assert_eq!(coef[1], vec![0.0]);
        assert!((coef[0][0] - (2.0f64 / 5.0).ln()).abs() < 1e-9);
        assert!((coef[2][0] - (3.0f64 / 5.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn binary_logistic_gradient_vanishes() {
        // two groups at x = -1 and x = +1 with different success rates
        let mut rows = WeightedRows::new(2, 2);
        rows.push(&[-1.0], &[8.0, 2.0]);
        rows.push(&[1.0], &[3.0, 7.0]);
        let mut coef = vec![vec![0.0, 0.0]; 2];
        fit_multinomial_logit(&rows, 0, &mut coef, opts()).unwrap();
        // saturated model: logit at -1 is log(2/8), at +1 is log(7/3)
        let lo = (2.0f64 / 8.0).ln();
        let hi = (7.0f64 / 3.0).ln();
        assert!((coef[1][0] - (lo + hi) / 2.0).abs() < 1e-8);
        assert!((coef[1][1] - (hi - lo) / 2.0).abs() < 1e-8);
    }

    #[test]
    fn objective_never_decreases() {
        let mut rows = WeightedRows::new(2, 3);
        for i in 0..20 {
            let x = i as f64 / 4.0 - 2.5;
            rows.push(&[x], &[0.2 + 0.1 * (i % 3) as f64, 0.5, 0.3 * (i % 2) as f64]);
        }
        let mut coef = vec![vec![0.0, 0.0]; 3];
        let problem = Problem {
            rows: &rows,
            reference: 0,
            free: vec![1, 2],
        };
        let before = problem.objective(&[0.0; 4]);
        let out = fit_multinomial_logit(&rows, 0, &mut coef, opts()).unwrap();
        assert!(out >= before);
    }
}
