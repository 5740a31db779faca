//! Multinomial-logit links for initial and transition probabilities.
//!
//! Coefficient blocks are stored in full: `beta[u]` for every state, with
//! `beta[0]` the all-zero reference row, and `gamma[from][to]` for every
//! ordered pair, with the diagonal (staying) entries all zero. Each block is
//! `[intercept, slope_1, ..., slope_p]`.

use crate::error::{Error, Result};
use crate::numeric::softmax;

/// Probabilities below this are floored before taking log-ratios.
pub const LOGIT_FLOOR: f64 = 1e-10;

#[inline]
pub(crate) fn linear_predictor(coef: &[f64], x: &[f64]) -> f64 {
    coef[0] + coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn check_len(coef: &[f64], x: &[f64], what: &str) -> Result<()> {
    if coef.len() != x.len() + 1 {
        return Err(Error::ModelMismatch(format!(
            "{what} coefficient block has {} entries but the covariate vector has {} (expected {})",
            coef.len(),
            x.len(),
            x.len() + 1
        )));
    }
    Ok(())
}

/// Initial state distribution δ(x), with state 0 as the reference category.
pub fn initial_probs(beta: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    let mut eta = Vec::with_capacity(beta.len());
    for (u, coef) in beta.iter().enumerate() {
        check_len(coef, x, "initial")?;
        eta.push(if u == 0 { 0.0 } else { linear_predictor(coef, x) });
    }
    softmax(&eta).ok_or(Error::NumericOverflow)
}

/// Transition matrix τ(x); row `from` uses the staying state as reference.
pub fn transition_matrix(gamma: &[Vec<Vec<f64>>], x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let k = gamma.len();
    let mut out = Vec::with_capacity(k);
    let mut eta = vec![0.0; k];
    for (from, row) in gamma.iter().enumerate() {
        if row.len() != k {
            return Err(Error::ModelMismatch(format!(
                "transition coefficients row {from} has {} entries, expected {k}",
                row.len()
            )));
        }
        for (to, coef) in row.iter().enumerate() {
            check_len(coef, x, "transition")?;
            eta[to] = if to == from { 0.0 } else { linear_predictor(coef, x) };
        }
        out.push(softmax(&eta).ok_or(Error::NumericOverflow)?);
    }
    Ok(out)
}

/// Log-ratios `log(p_u / p_reference)`, flooring probabilities at
/// [`LOGIT_FLOOR`].
pub fn probs_to_logits(probs: &[f64], reference: usize) -> Vec<f64> {
    let base = probs[reference].max(LOGIT_FLOOR).ln();
    probs
        .iter()
        .enumerate()
        .map(|(u, &p)| {
            if u == reference {
                0.0
            } else {
                p.max(LOGIT_FLOOR).ln() - base
            }
        })
        .collect()
}

/// Intercept-only initial coefficients reproducing `delta`.
pub fn beta_from_probs(delta: &[f64], n_covariates: usize) -> Vec<Vec<f64>> {
    probs_to_logits(delta, 0)
        .into_iter()
        .map(|l| {
            let mut coef = vec![0.0; n_covariates + 1];
            coef[0] = l;
            coef
        })
        .collect()
}

/// Intercept-only transition coefficients reproducing `tau`.
pub fn gamma_from_probs(tau: &[Vec<f64>], n_covariates: usize) -> Vec<Vec<Vec<f64>>> {
    tau.iter()
        .enumerate()
        .map(|(from, row)| {
            probs_to_logits(row, from)
                .into_iter()
                .map(|l| {
                    let mut coef = vec![0.0; n_covariates + 1];
                    coef[0] = l;
                    coef
                })
                .collect()
        })
        .collect()
}
