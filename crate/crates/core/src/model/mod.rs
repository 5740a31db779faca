//! Model specification, parameters and the logit link layer.

mod file;
pub mod link;

use serde::{Deserialize, Serialize};

pub use file::ModelFile;
pub use link::{initial_probs, transition_matrix};

use crate::error::{Error, Result};
use crate::numeric::for_each_permutation;
use crate::panel::{ItemSchema, LongitudinalPanel};

/// Tolerance for simplex checks on stored parameters.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionStructure {
    /// Free initial vector and one free transition matrix per time step.
    UnrestrictedTimeHeterogeneous,
    /// Multinomial-logit initial and time-homogeneous transition links.
    LogitTimeHomogeneous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub k: usize,
    pub transition_structure: TransitionStructure,
    #[serde(default)]
    pub init_covariates: Vec<String>,
    #[serde(default)]
    pub trans_covariates: Vec<String>,
    #[serde(default = "default_true")]
    pub emissions_time_homogeneous: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn unrestricted(k: usize) -> Self {
        Self {
            k,
            transition_structure: TransitionStructure::UnrestrictedTimeHeterogeneous,
            init_covariates: Vec::new(),
            trans_covariates: Vec::new(),
            emissions_time_homogeneous: true,
        }
    }

    pub fn logit(k: usize, init_covariates: &[&str], trans_covariates: &[&str]) -> Self {
        Self {
            k,
            transition_structure: TransitionStructure::LogitTimeHomogeneous,
            init_covariates: init_covariates.iter().map(|s| s.to_string()).collect(),
            trans_covariates: trans_covariates.iter().map(|s| s.to_string()).collect(),
            emissions_time_homogeneous: true,
        }
    }

    pub fn is_unrestricted(&self) -> bool {
        self.transition_structure == TransitionStructure::UnrestrictedTimeHeterogeneous
    }

    /// Short human label, e.g. `logit k=4 init[age] trans[]`.
    pub fn label(&self) -> String {
        match self.transition_structure {
            TransitionStructure::UnrestrictedTimeHeterogeneous => format!("unrestricted k={}", self.k),
            TransitionStructure::LogitTimeHomogeneous => format!(
                "logit k={} init[{}] trans[{}]",
                self.k,
                self.init_covariates.join(","),
                self.trans_covariates.join(",")
            ),
        }
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidSpec("k must be at least 1".into()));
        }
        if !self.emissions_time_homogeneous {
            return Err(Error::InvalidSpec(
                "only time-homogeneous emission probabilities are supported".into(),
            ));
        }
        if self.is_unrestricted() && (!self.init_covariates.is_empty() || !self.trans_covariates.is_empty()) {
            return Err(Error::InvalidSpec(
                "the unrestricted structure does not take covariates".into(),
            ));
        }
        for list in [&self.init_covariates, &self.trans_covariates] {
            for (i, name) in list.iter().enumerate() {
                if list[..i].contains(name) {
                    return Err(Error::InvalidSpec(format!("covariate `{name}` listed twice")));
                }
            }
        }
        Ok(())
    }

    pub fn validate_for_schema(&self, schema: &ItemSchema) -> Result<()> {
        self.validate()?;
        for name in self.init_covariates.iter().chain(&self.trans_covariates) {
            if schema.covariate(name).is_none() {
                return Err(Error::InvalidSpec(format!(
                    "covariate `{name}` is not declared in the schema"
                )));
            }
        }
        Ok(())
    }

    pub fn validate_for_panel(&self, panel: &LongitudinalPanel) -> Result<()> {
        self.validate()?;
        for name in self.init_covariates.iter().chain(&self.trans_covariates) {
            if !panel.has_covariate(name) {
                return Err(Error::InvalidSpec(format!(
                    "covariate `{name}` is not present in the panel"
                )));
            }
        }
        Ok(())
    }
}

/// Number of free parameters `g` of a model.
///
/// Emissions contribute `k Σ_j (c_j − 1)`. The unrestricted structure adds
/// `(k − 1) + (T − 1) k (k − 1)`; the logit structure adds
/// `(k − 1)(1 + p_init) + k (k − 1)(1 + p_trans)`.
pub fn count_free_params(spec: &ModelSpec, schema: &ItemSchema, n_times: usize) -> usize {
    let k = spec.k;
    let emissions = k * schema.free_emission_params();
    let latent = match spec.transition_structure {
        TransitionStructure::UnrestrictedTimeHeterogeneous => (k - 1) + n_times.saturating_sub(1) * k * (k - 1),
        TransitionStructure::LogitTimeHomogeneous => {
            (k - 1) * (1 + spec.init_covariates.len()) + k * (k - 1) * (1 + spec.trans_covariates.len())
        }
    };
    emissions + latent
}

/// Latent-chain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatentParams {
    Unrestricted {
        /// Initial distribution.
        delta_raw: Vec<f64>,
        /// `tau_raw[t][from][to]` for transitions into time `t + 2` (1-based).
        tau_raw: Vec<Vec<Vec<f64>>>,
    },
    Logit {
        /// `beta[u]`, `u = 0..k`; `beta[0]` is the zero reference block.
        beta: Vec<Vec<f64>>,
        /// `gamma[from][to]`; diagonal blocks are zero.
        gamma: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// `phi[u][j][y]`: probability of category `y` on item `j` in state `u`.
    pub phi: Vec<Vec<Vec<f64>>>,
    #[serde(flatten)]
    pub latent: LatentParams,
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::ModelMismatch(format!("{what} is not a probability vector")));
    }
    Ok(())
}

impl Parameters {
    pub fn k(&self) -> usize {
        self.phi.len()
    }

    /// Checks dimensions against the model spec and schema, and simplex
    /// constraints. `n_times` is required for the unrestricted structure.
    pub fn validate(&self, spec: &ModelSpec, schema: &ItemSchema, n_times: usize) -> Result<()> {
        spec.validate()?;
        let k = spec.k;
        if self.phi.len() != k {
            return Err(Error::ModelMismatch(format!(
                "phi has {} states, spec has k={k}",
                self.phi.len()
            )));
        }
        let cats = schema.n_categories();
        for (u, rows) in self.phi.iter().enumerate() {
            if rows.len() != cats.len() {
                return Err(Error::ModelMismatch(format!(
                    "phi[{u}] has {} items, schema has {}",
                    rows.len(),
                    cats.len()
                )));
            }
            for (j, row) in rows.iter().enumerate() {
                if row.len() != cats[j] {
                    return Err(Error::ModelMismatch(format!(
                        "phi[{u}][{j}] has {} categories, expected {}",
                        row.len(),
                        cats[j]
                    )));
                }
                check_simplex(row, &format!("phi[{u}][{j}]"))?;
            }
        }
        match (&self.latent, spec.transition_structure) {
            (LatentParams::Unrestricted { delta_raw, tau_raw }, TransitionStructure::UnrestrictedTimeHeterogeneous) => {
                if delta_raw.len() != k {
                    return Err(Error::ModelMismatch("delta_raw length differs from k".into()));
                }
                check_simplex(delta_raw, "delta_raw")?;
                if tau_raw.len() != n_times.saturating_sub(1) {
                    return Err(Error::ModelMismatch(format!(
                        "tau_raw has {} matrices, expected T-1 = {}",
                        tau_raw.len(),
                        n_times.saturating_sub(1)
                    )));
                }
                for (t, m) in tau_raw.iter().enumerate() {
                    if m.len() != k || m.iter().any(|r| r.len() != k) {
                        return Err(Error::ModelMismatch(format!("tau_raw[{t}] is not {k}x{k}")));
                    }
                    for (r, row) in m.iter().enumerate() {
                        check_simplex(row, &format!("tau_raw[{t}][{r}]"))?;
                    }
                }
            }
            (LatentParams::Logit { beta, gamma }, TransitionStructure::LogitTimeHomogeneous) => {
                let pi = spec.init_covariates.len() + 1;
                let pt = spec.trans_covariates.len() + 1;
                if beta.len() != k || beta.iter().any(|b| b.len() != pi) {
                    return Err(Error::ModelMismatch(format!("beta must be {k} blocks of length {pi}")));
                }
                if beta[0].iter().any(|&v| v != 0.0) {
                    return Err(Error::ModelMismatch("beta[0] is the reference and must be zero".into()));
                }
                if gamma.len() != k
                    || gamma
                        .iter()
                        .any(|row| row.len() != k || row.iter().any(|g| g.len() != pt))
                {
                    return Err(Error::ModelMismatch(format!(
                        "gamma must be {k}x{k} blocks of length {pt}"
                    )));
                }
                for (u, row) in gamma.iter().enumerate() {
                    if row[u].iter().any(|&v| v != 0.0) {
                        return Err(Error::ModelMismatch(format!(
                            "gamma[{u}][{u}] is the reference and must be zero"
                        )));
                    }
                }
                let all = beta.iter().flatten().chain(gamma.iter().flatten().flatten());
                if all.clone().any(|v| v.is_nan()) {
                    return Err(Error::ModelMismatch("NaN in logit coefficients".into()));
                }
            }
            _ => {
                return Err(Error::ModelMismatch(
                    "parameter structure does not match the model spec's transition structure".into(),
                ))
            }
        }
        Ok(())
    }

    /// Initial distribution for a subject with time-1 link covariates `x`.
    pub fn initial(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.latent {
            LatentParams::Unrestricted { delta_raw, .. } => Ok(delta_raw.clone()),
            LatentParams::Logit { beta, .. } => initial_probs(beta, x),
        }
    }

    /// Transition matrix into 0-based time `t >= 1`, given link covariates `x`.
    pub fn transition(&self, t: usize, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        match &self.latent {
            LatentParams::Unrestricted { tau_raw, .. } => tau_raw
                .get(t - 1)
                .cloned()
                .ok_or_else(|| Error::ModelMismatch(format!("no transition matrix for time {}", t + 1))),
            LatentParams::Logit { gamma, .. } => transition_matrix(gamma, x),
        }
    }

    /// Relabels states so that new state `s` is old state `perm[s]`.
    pub fn permute_states(&self, perm: &[usize]) -> Parameters {
        let k = self.k();
        assert_eq!(perm.len(), k);
        let phi = perm.iter().map(|&p| self.phi[p].clone()).collect();
        let latent = match &self.latent {
            LatentParams::Unrestricted { delta_raw, tau_raw } => LatentParams::Unrestricted {
                delta_raw: perm.iter().map(|&p| delta_raw[p]).collect(),
                tau_raw: tau_raw
                    .iter()
                    .map(|m| perm.iter().map(|&a| perm.iter().map(|&b| m[a][b]).collect()).collect())
                    .collect(),
            },
            LatentParams::Logit { beta, gamma } => {
                let base = &beta[perm[0]];
                LatentParams::Logit {
                    beta: perm
                        .iter()
                        .map(|&p| beta[p].iter().zip(base).map(|(a, b)| a - b).collect())
                        .collect(),
                    gamma: perm
                        .iter()
                        .map(|&a| perm.iter().map(|&b| gamma[a][b].clone()).collect())
                        .collect(),
                }
            }
        };
        Parameters { phi, latent }
    }

    /// Orders states by decreasing initial prevalence at covariates `x_mean`
    /// (stable in the original index). Returns the relabelled parameters and
    /// the permutation used.
    pub fn canonicalize(&self, x_mean: &[f64]) -> Result<(Parameters, Vec<usize>)> {
        let delta = self.initial(x_mean)?;
        let mut perm: Vec<usize> = (0..self.k()).collect();
        perm.sort_by(|&a, &b| delta[b].partial_cmp(&delta[a]).unwrap_or(std::cmp::Ordering::Equal));
        Ok((self.permute_states(&perm), perm))
    }
}

/// Matches fitted states to reference states by the permutation minimizing
/// the largest absolute emission-probability difference.
///
/// Returns `(perm, error)` where fitted state `perm[s]` plays reference state
/// `s`.
pub fn align_states(fitted: &Parameters, reference: &Parameters) -> (Vec<usize>, f64) {
    let k = fitted.k();
    assert_eq!(k, reference.k(), "state counts differ");
    let mut best = (Vec::new(), f64::INFINITY);
    for_each_permutation(k, |perm| {
        let mut err = 0.0f64;
        for (s, &p) in perm.iter().enumerate() {
            for (a, b) in fitted.phi[p].iter().flatten().zip(reference.phi[s].iter().flatten()) {
                err = err.max((a - b).abs());
            }
        }
        if err < best.1 {
            best = (perm.to_vec(), err);
        }
    });
    best
}
