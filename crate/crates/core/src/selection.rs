//! Information criteria, state-count selection and forward covariate search.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{fit, FitOptions, FitResult};
use crate::error::{Error, Result};
use crate::model::{count_free_params, ModelSpec};
use crate::panel::{ItemSchema, LongitudinalPanel};

/// `(AIC, BIC) = (−2ℓ + 2g, −2ℓ + g log n)`.
pub fn information_criteria(loglik: f64, g: usize, n: usize) -> (f64, f64) {
    let g = g as f64;
    let aic = -2.0 * loglik + 2.0 * g;
    let bic = -2.0 * loglik + (n as f64).ln() * g;
    (aic, bic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub label: String,
    pub k: usize,
    pub g: usize,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    /// `ok` or `failed: <reason>`.
    pub status: String,
    pub spec: ModelSpec,
}

impl SelectionRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub best_by_bic: Option<String>,
    pub best_by_aic: Option<String>,
    /// Labels of accepted forward steps (stepwise search only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accepted: Vec<String>,
    /// Fitted results aligned with `rows`; `None` for failed rows.
    #[serde(skip)]
    pub fits: Vec<Option<FitResult>>,
}

fn tie_break(a: &SelectionRow, b: &SelectionRow) -> Ordering {
    a.g.cmp(&b.g).then(a.k.cmp(&b.k)).then_with(|| a.label.cmp(&b.label))
}

fn best_index(rows: &[SelectionRow], key: impl Fn(&SelectionRow) -> Option<f64>) -> Option<usize> {
    rows.iter()
        .enumerate()
        .filter_map(|(i, r)| key(r).filter(|v| v.is_finite()).map(|v| (i, v)))
        .min_by(|(i, a), (j, b)| a.total_cmp(b).then_with(|| tie_break(&rows[*i], &rows[*j])))
        .map(|(i, _)| i)
}

impl SelectionReport {
    fn from_rows(rows: Vec<SelectionRow>, fits: Vec<Option<FitResult>>) -> Self {
        let best_by_bic = best_index(&rows, |r| r.bic).map(|i| rows[i].label.clone());
        let best_by_aic = best_index(&rows, |r| r.aic).map(|i| rows[i].label.clone());
        Self {
            rows,
            best_by_bic,
            best_by_aic,
            accepted: Vec::new(),
            fits,
        }
    }

    pub fn row(&self, label: &str) -> Option<&SelectionRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn fit_for(&self, label: &str) -> Option<&FitResult> {
        let i = self.rows.iter().position(|r| r.label == label)?;
        self.fits.get(i)?.as_ref()
    }

    /// Row minimizing BIC.
    pub fn best(&self) -> Option<&SelectionRow> {
        self.best_by_bic.as_deref().and_then(|l| self.row(l))
    }

    /// `label,k,g,loglik,aic,bic,status`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["label", "k", "g", "loglik", "aic", "bic", "status"])?;
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.rows {
            wtr.write_record([
                r.label.clone(),
                r.k.to_string(),
                r.g.to_string(),
                fmt(r.loglik),
                fmt(r.aic),
                fmt(r.bic),
                r.status.clone(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn fit_rows(
    candidates: Vec<(String, ModelSpec)>,
    schema: &ItemSchema,
    panel: &LongitudinalPanel,
    options: &FitOptions,
) -> (Vec<SelectionRow>, Vec<Option<FitResult>>) {
    candidates
        .into_par_iter()
        .map(|(label, spec)| {
            let g = count_free_params(&spec, schema, panel.n_times());
            match fit(&spec, schema, panel, options) {
                Ok(res) => (
                    SelectionRow {
                        label,
                        k: spec.k,
                        g,
                        loglik: Some(res.loglik),
                        aic: Some(res.aic),
                        bic: Some(res.bic),
                        status: "ok".into(),
                        spec,
                    },
                    Some(res),
                ),
                Err(e) => (
                    SelectionRow {
                        label,
                        k: spec.k,
                        g,
                        loglik: None,
                        aic: None,
                        bic: None,
                        status: format!("failed: {e}"),
                        spec,
                    },
                    None,
                ),
            }
        })
        .unzip()
}

/// Fits the unrestricted model for every `k` in `k_range` and picks the
/// state count by minimum BIC.
pub fn select_states(
    schema: &ItemSchema,
    panel: &LongitudinalPanel,
    k_range: impl IntoIterator<Item = usize>,
    options: &FitOptions,
) -> Result<SelectionReport> {
    let mut ks: Vec<usize> = k_range.into_iter().collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::InvalidConfig("k range is empty".into()));
    }
    if ks[0] == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let candidates = ks
        .iter()
        .map(|&k| (format!("M1[k={k}]"), ModelSpec::unrestricted(k)))
        .collect();
    let (rows, fits) = fit_rows(candidates, schema, panel, options);
    Ok(SelectionReport::from_rows(rows, fits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateTarget {
    Initial,
    Transition,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateCandidate {
    pub covariate: String,
    pub target: CovariateTarget,
}

impl CovariateCandidate {
    pub fn new(covariate: &str, target: CovariateTarget) -> Self {
        Self {
            covariate: covariate.to_string(),
            target,
        }
    }

    pub fn label(&self) -> String {
        let t = match self.target {
            CovariateTarget::Initial => "initial",
            CovariateTarget::Transition => "transition",
            CovariateTarget::Both => "both",
        };
        format!("{}@{t}", self.covariate)
    }

    /// `spec` with this candidate's covariate added; `None` if it adds nothing.
    fn extend(&self, spec: &ModelSpec) -> Option<ModelSpec> {
        let mut out = spec.clone();
        let mut changed = false;
        if matches!(self.target, CovariateTarget::Initial | CovariateTarget::Both)
            && !out.init_covariates.contains(&self.covariate)
        {
            out.init_covariates.push(self.covariate.clone());
            changed = true;
        }
        if matches!(self.target, CovariateTarget::Transition | CovariateTarget::Both)
            && !out.trans_covariates.contains(&self.covariate)
        {
            out.trans_covariates.push(self.covariate.clone());
            changed = true;
        }
        changed.then_some(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepwiseOptions {
    pub fit: FitOptions,
    /// Cap on accepted forward steps; `None` iterates until no candidate
    /// lowers BIC.
    pub max_steps: Option<usize>,
}

/// Forward covariate selection on the logit model with `k` states.
///
/// Starts from the intercept-only logit model and, in each sweep, fits one
/// model per remaining candidate. The candidate with the largest BIC
/// reduction is accepted; sweeps repeat until none lowers BIC. Every fitted
/// model appears in the report's rows.
pub fn stepwise_covariates(
    schema: &ItemSchema,
    panel: &LongitudinalPanel,
    k: usize,
    candidates: &[CovariateCandidate],
    options: &StepwiseOptions,
) -> Result<SelectionReport> {
    for c in candidates {
        if schema.covariate(&c.covariate).is_none() || !panel.has_covariate(&c.covariate) {
            return Err(Error::InvalidConfig(format!("unknown covariate `{}`", c.covariate)));
        }
    }
    let base_spec = ModelSpec::logit(k, &[], &[]);
    let (mut rows, mut fits) = fit_rows(vec![("M2".to_string(), base_spec.clone())], schema, panel, &options.fit);
    let Some(mut base_bic) = rows[0].bic else {
        return Err(Error::FitFailure(format!("base model: {}", rows[0].status)));
    };
    let mut base = (String::from("M2"), base_spec);
    let mut remaining: Vec<CovariateCandidate> = candidates.to_vec();
    let mut accepted = Vec::new();

    while !remaining.is_empty() && options.max_steps.is_none_or(|m| accepted.len() < m) {
        let sweep: Vec<(usize, String, ModelSpec)> = remaining
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.extend(&base.1).map(|s| (i, format!("{}+{}", base.0, c.label()), s)))
            .collect();
        if sweep.is_empty() {
            break;
        }
        let (sweep_rows, sweep_fits) = fit_rows(
            sweep.iter().map(|(_, l, s)| (l.clone(), s.clone())).collect(),
            schema,
            panel,
            &options.fit,
        );
        let winner = best_index(&sweep_rows, |r| r.bic);
        let next = winner.and_then(|w| {
            let bic = sweep_rows[w].bic?;
            (bic < base_bic).then_some((w, bic))
        });
        rows.extend(sweep_rows.iter().cloned());
        fits.extend(sweep_fits);
        let Some((w, bic)) = next else { break };
        let (cand_idx, label, spec) = sweep[w].clone();
        accepted.push(label.clone());
        base = (label, spec);
        base_bic = bic;
        remaining.remove(cand_idx);
    }

    let mut report = SelectionReport::from_rows(rows, fits);
    report.accepted = accepted;
    Ok(report)
}
