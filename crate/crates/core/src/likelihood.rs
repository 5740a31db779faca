//! Manifest log-likelihood and posterior state probabilities via log-space
//! forward-backward recursions.
//!
//! Missing item responses contribute an emission factor of one. Subject
//! totals are combined with [`tree_sum`] in stored (ascending id) order, so a
//! panel's log-likelihood does not depend on the thread schedule.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LatentParams, ModelSpec, Parameters, TransitionStructure};
use crate::numeric::{log_sum_exp, tree_sum};
use crate::panel::{LongitudinalPanel, SubjectView};

/// Link covariates of one subject, resolved for a particular spec.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDesign {
    /// Covariates entering the initial-probability link, `x^(1)`.
    pub init_x: Vec<f64>,
    /// `trans_x[t - 1]` holds `x^(t+1)` for 0-based times `t = 1..T`.
    pub trans_x: Vec<Vec<f64>>,
}

impl SubjectDesign {
    pub fn build(spec: &ModelSpec, subject: &SubjectView<'_>) -> Result<Self> {
        let init_x = subject.covariate_vector(&spec.init_covariates, 0)?;
        let trans_x = (1..subject.n_times())
            .map(|t| subject.covariate_vector(&spec.trans_covariates, t))
            .collect::<Result<_>>()?;
        Ok(Self { init_x, trans_x })
    }
}

pub fn panel_design(spec: &ModelSpec, panel: &LongitudinalPanel) -> Result<Vec<SubjectDesign>> {
    spec.validate_for_panel(panel)?;
    panel.subjects().map(|s| SubjectDesign::build(spec, &s)).collect()
}

/// Checks that parameters, spec and panel agree on every dimension.
pub fn check_compatible(params: &Parameters, spec: &ModelSpec, panel: &LongitudinalPanel) -> Result<()> {
    spec.validate()?;
    if params.k() != spec.k {
        return Err(Error::ModelMismatch(format!(
            "parameters have {} states, spec has k={}",
            params.k(),
            spec.k
        )));
    }
    for (u, rows) in params.phi.iter().enumerate() {
        if rows.len() != panel.n_items() {
            return Err(Error::ModelMismatch(format!(
                "phi[{u}] covers {} items, panel has {}",
                rows.len(),
                panel.n_items()
            )));
        }
        for (j, row) in rows.iter().enumerate() {
            if row.len() != panel.n_categories()[j] {
                return Err(Error::ModelMismatch(format!(
                    "phi[{u}][{j}] has {} categories, panel item has {}",
                    row.len(),
                    panel.n_categories()[j]
                )));
            }
        }
    }
    match (&params.latent, spec.transition_structure) {
        (LatentParams::Unrestricted { tau_raw, .. }, TransitionStructure::UnrestrictedTimeHeterogeneous) => {
            if tau_raw.len() != panel.n_times() - 1 {
                return Err(Error::ModelMismatch(format!(
                    "model has {} transition matrices, panel needs {}",
                    tau_raw.len(),
                    panel.n_times() - 1
                )));
            }
        }
        (LatentParams::Logit { beta, gamma }, TransitionStructure::LogitTimeHomogeneous) => {
            let pi = spec.init_covariates.len() + 1;
            let pt = spec.trans_covariates.len() + 1;
            if beta.len() != spec.k
                || beta.iter().any(|b| b.len() != pi)
                || gamma.len() != spec.k
                || gamma
                    .iter()
                    .any(|r| r.len() != spec.k || r.iter().any(|g| g.len() != pt))
            {
                return Err(Error::ModelMismatch(
                    "logit coefficient blocks do not match the model spec's covariates".into(),
                ));
            }
        }
        _ => {
            return Err(Error::ModelMismatch(
                "parameter structure does not match the model spec".into(),
            ))
        }
    }
    Ok(())
}

/// `log φ`, laid out `[state][item][category]`.
#[derive(Debug, Clone)]
pub(crate) struct LogEmission {
    k: usize,
    log_phi: Vec<Vec<Vec<f64>>>,
}

impl LogEmission {
    pub(crate) fn new(params: &Parameters) -> Self {
        Self {
            k: params.k(),
            log_phi: params
                .phi
                .iter()
                .map(|rows| rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect())
                .collect(),
        }
    }

    /// `[t * k + u]` = Σ over observed items of `log φ_{j y | u}`.
    pub(crate) fn subject(&self, subject: &SubjectView<'_>) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; subject.n_times() * k];
        for t in 0..subject.n_times() {
            let resp = subject.responses_at(t);
            for u in 0..k {
                let lp = &self.log_phi[u];
                out[t * k + u] = resp
                    .iter()
                    .enumerate()
                    .filter_map(|(j, r)| r.map(|y| lp[j][y as usize]))
                    .sum();
            }
        }
        out
    }
}

/// Log initial and transition probabilities of one subject's chain.
#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub log_delta: Vec<f64>,
    /// `[(t - 1) * k * k + from * k + to]` for 0-based `t = 1..T`.
    pub log_tau: Vec<f64>,
}

impl Chain {
    pub(crate) fn new(params: &Parameters, design: &SubjectDesign, n_times: usize) -> Result<Self> {
        let k = params.k();
        let log_delta = params.initial(&design.init_x)?.iter().map(|p| p.ln()).collect();
        let mut log_tau = Vec::with_capacity(n_times.saturating_sub(1) * k * k);
        for t in 1..n_times {
            let tau = params.transition(t, &design.trans_x[t - 1])?;
            log_tau.extend(tau.iter().flatten().map(|p| p.ln()));
        }
        Ok(Self { log_delta, log_tau })
    }
}

/// Forward and backward accumulators for one subject.
#[derive(Debug, Clone)]
pub struct SubjectLattice {
    k: usize,
    n_times: usize,
    /// `[t * k + u]`
    pub log_emissions: Vec<f64>,
    /// `[t * k + u]` = log P(y^(1..t), U^(t) = u)
    pub log_alpha: Vec<f64>,
    /// `[t * k + u]` = log P(y^(t+1..T) | U^(t) = u)
    pub log_beta: Vec<f64>,
    pub loglik: f64,
    log_tau: Vec<f64>,
}

impl SubjectLattice {
    pub fn compute(params: &Parameters, spec: &ModelSpec, subject: &SubjectView<'_>) -> Result<Self> {
        let design = SubjectDesign::build(spec, subject)?;
        let chain = Chain::new(params, &design, subject.n_times())?;
        let log_em = LogEmission::new(params).subject(subject);
        Self::from_parts(params.k(), subject.n_times(), log_em, chain, subject.id())
    }

    pub(crate) fn from_parts(
        k: usize,
        n_times: usize,
        log_emissions: Vec<f64>,
        chain: Chain,
        subject_id: &str,
    ) -> Result<Self> {
        let kk = k * k;
        let mut log_alpha = vec![0.0; n_times * k];
        let mut log_beta = vec![0.0; n_times * k];
        let mut buf = vec![0.0; k];

        for u in 0..k {
            log_alpha[u] = chain.log_delta[u] + log_emissions[u];
        }
        for t in 1..n_times {
            let lt = &chain.log_tau[(t - 1) * kk..t * kk];
            for u in 0..k {
                for a in 0..k {
                    buf[a] = log_alpha[(t - 1) * k + a] + lt[a * k + u];
                }
                log_alpha[t * k + u] = log_sum_exp(&buf) + log_emissions[t * k + u];
            }
        }
        for t in (0..n_times.saturating_sub(1)).rev() {
            let lt = &chain.log_tau[t * kk..(t + 1) * kk];
            for a in 0..k {
                for u in 0..k {
                    buf[u] = lt[a * k + u] + log_emissions[(t + 1) * k + u] + log_beta[(t + 1) * k + u];
                }
                log_beta[t * k + a] = log_sum_exp(&buf);
            }
        }
        let loglik = log_sum_exp(&log_alpha[(n_times - 1) * k..]);
        if loglik.is_nan() {
            return Err(Error::NumericOverflow);
        }
        if loglik == f64::NEG_INFINITY {
            return Err(Error::ZeroLikelihood {
                subject: subject_id.to_string(),
            });
        }
        Ok(Self {
            k,
            n_times,
            log_emissions,
            log_alpha,
            log_beta,
            loglik,
            log_tau: chain.log_tau,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    /// Flat `[t * k + u]` posteriors, each time row normalized.
    pub(crate) fn posteriors_flat(&self) -> Vec<f64> {
        let k = self.k;
        let mut out: Vec<f64> = self
            .log_alpha
            .iter()
            .zip(&self.log_beta)
            .map(|(a, b)| (a + b - self.loglik).exp())
            .collect();
        for row in out.chunks_mut(k) {
            crate::numeric::normalize(row);
        }
        out
    }

    /// Flat `[(t - 1) * k * k + from * k + to]` joint posteriors of
    /// consecutive states, each slice normalized.
    pub(crate) fn pairwise_flat(&self) -> Vec<f64> {
        let k = self.k;
        let kk = k * k;
        let mut out = vec![0.0; self.n_times.saturating_sub(1) * kk];
        for t in 1..self.n_times {
            let lt = &self.log_tau[(t - 1) * kk..t * kk];
            let slice = &mut out[(t - 1) * kk..t * kk];
            for a in 0..k {
                let la = self.log_alpha[(t - 1) * k + a];
                for b in 0..k {
                    slice[a * k + b] = (la + lt[a * k + b] + self.log_emissions[t * k + b] + self.log_beta[t * k + b]
                        - self.loglik)
                        .exp();
                }
            }
            crate::numeric::normalize(slice);
        }
        out
    }

    /// `T × k` posterior state probabilities.
    pub fn posteriors(&self) -> Vec<Vec<f64>> {
        self.posteriors_flat().chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    /// For each transition `t = 2..T`, the `k × k` joint posterior of
    /// `(U^(t-1), U^(t))`.
    pub fn pairwise(&self) -> Vec<Vec<Vec<f64>>> {
        let k = self.k;
        self.pairwise_flat()
            .chunks(k * k)
            .map(|m| m.chunks(k).map(<[f64]>::to_vec).collect())
            .collect()
    }
}

fn lattice_for(params: &Parameters, spec: &ModelSpec, subject: &SubjectView<'_>) -> Result<SubjectLattice> {
    if params.k() != spec.k {
        return Err(Error::ModelMismatch(format!(
            "parameters have {} states, spec has k={}",
            params.k(),
            spec.k
        )));
    }
    SubjectLattice::compute(params, spec, subject)
}

/// log P(ỹ_i | x̃_i) for one subject.
pub fn subject_loglik(params: &Parameters, spec: &ModelSpec, subject: &SubjectView<'_>) -> Result<f64> {
    Ok(lattice_for(params, spec, subject)?.loglik)
}

/// `T × k` matrix of P(U^(t) = u | ỹ_i, x̃_i).
pub fn posteriors(params: &Parameters, spec: &ModelSpec, subject: &SubjectView<'_>) -> Result<Vec<Vec<f64>>> {
    Ok(lattice_for(params, spec, subject)?.posteriors())
}

/// Per transition `t = 2..T`, the `k × k` matrix
/// P(U^(t-1) = a, U^(t) = b | ỹ_i, x̃_i).
pub fn pairwise_posteriors(
    params: &Parameters,
    spec: &ModelSpec,
    subject: &SubjectView<'_>,
) -> Result<Vec<Vec<Vec<f64>>>> {
    Ok(lattice_for(params, spec, subject)?.pairwise())
}

/// Per-subject log-likelihoods in stored subject order.
pub fn subject_logliks(params: &Parameters, spec: &ModelSpec, panel: &LongitudinalPanel) -> Result<Vec<f64>> {
    check_compatible(params, spec, panel)?;
    let design = panel_design(spec, panel)?;
    let emission = LogEmission::new(params);
    (0..panel.n_subjects())
        .into_par_iter()
        .map(|i| {
            let s = panel.subject(i);
            let chain = Chain::new(params, &design[i], panel.n_times())?;
            let lat = SubjectLattice::from_parts(params.k(), panel.n_times(), emission.subject(&s), chain, s.id())?;
            Ok(lat.loglik)
        })
        .collect()
}

/// ℓ(θ) = Σ_i log P(ỹ_i | x̃_i).
pub fn total_loglik(params: &Parameters, spec: &ModelSpec, panel: &LongitudinalPanel) -> Result<f64> {
    Ok(tree_sum(&subject_logliks(params, spec, panel)?))
}
