//! Maximum-likelihood estimation by EM with multiple starts.
//!
//! The E-step runs forward-backward per subject; the M-step updates emission
//! tables in closed form, unrestricted initial/transition probabilities from
//! normalized expected counts, and logit coefficients by Newton-Raphson on the
//! posterior-weighted multinomial-logit likelihood. Logit M-steps only ever
//! increase their objective, so the observed-data log-likelihood is
//! non-decreasing across iterations.

mod init;
mod newton;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use init::{initialize, pooled_frequencies, INITIAL_STAY_PROB};
pub use newton::{HESSIAN_RIDGE, MAX_HALVINGS};

use crate::error::{Error, Result};
use crate::likelihood::{check_compatible, panel_design, Chain, LogEmission, SubjectDesign, SubjectLattice};
use crate::model::{count_free_params, LatentParams, ModelFile, ModelSpec, Parameters};
use crate::numeric::tree_sum;
use crate::panel::{ItemSchema, LongitudinalPanel};
use crate::selection::information_criteria;
use newton::{fit_multinomial_logit, NewtonError, NewtonOptions, WeightedRows};

/// Allowed decrease of the log-likelihood between iterations (rounding).
pub const MONOTONE_SLACK: f64 = 1e-8;
/// A state whose posterior mass falls below this fraction of `n T` has its
/// emission rows reset to the pooled frequencies.
pub const EMPTY_STATE_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    /// Stop when `|Δℓ| / (|ℓ| + 1)` drops below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub mstep_max_newton: usize,
    pub mstep_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 10,
            max_iter: 1000,
            rel_tol: 1e-8,
            seed: 0,
            mstep_max_newton: 25,
            mstep_tol: 1e-10,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::InvalidConfig("n_starts must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if self.mstep_max_newton == 0 || !(self.mstep_tol > 0.0) {
            return Err(Error::InvalidConfig("M-step Newton settings must be positive".into()));
        }
        Ok(())
    }

    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            max_iter: self.mstep_max_newton,
            tol: self.mstep_tol,
        }
    }
}

/// Outcome of one EM start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: usize,
    pub loglik: Option<f64>,
    pub n_iter: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    /// Parameters with states in canonical order (decreasing initial
    /// prevalence at the mean covariates).
    pub params: Parameters,
    pub loglik: f64,
    pub g: usize,
    pub n_subjects: usize,
    pub aic: f64,
    pub bic: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub start_index: usize,
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
    pub starts: Vec<StartOutcome>,
    pub options: FitOptions,
}

/// Fit metadata stored alongside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub loglik: f64,
    pub g: usize,
    pub n_subjects: usize,
    pub aic: f64,
    pub bic: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub start_index: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub options: FitOptions,
}

impl FitResult {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            loglik: self.loglik,
            g: self.g,
            n_subjects: self.n_subjects,
            aic: self.aic,
            bic: self.bic,
            n_iter: self.n_iter,
            converged: self.converged,
            start_index: self.start_index,
            warnings: self.warnings.clone(),
            options: self.options.clone(),
        }
    }

    /// Model file for this fit; records the panel's time count and
    /// covariate centering.
    pub fn to_model_file(&self, schema: &ItemSchema, panel: &LongitudinalPanel) -> ModelFile {
        ModelFile {
            spec: self.spec.clone(),
            schema: schema.clone(),
            n_times: panel.n_times(),
            params: self.params.clone(),
            centering: panel.centering().to_vec(),
            fit: Some(self.summary()),
        }
    }

    /// One JSON object per line: `{"start", "iter", "loglik"}` for every
    /// iteration of every start.
    pub fn write_log<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Line {
            start: usize,
            iter: usize,
            loglik: f64,
        }
        for s in &self.starts {
            for (iter, &loglik) in s.trace.iter().enumerate() {
                serde_json::to_writer(
                    &mut out,
                    &Line {
                        start: s.start,
                        iter,
                        loglik,
                    },
                )?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Expected sufficient statistics from one E-step.
struct Expectations {
    loglik: f64,
    /// per subject `[t * k + u]`
    post: Vec<Vec<f64>>,
    /// per subject `[(t - 1) * k * k + a * k + b]`
    pair: Vec<Vec<f64>>,
}

struct Context<'a> {
    spec: &'a ModelSpec,
    panel: &'a LongitudinalPanel,
    design: Vec<SubjectDesign>,
    pooled: Vec<Vec<f64>>,
    options: &'a FitOptions,
}

impl<'a> Context<'a> {
    fn new(
        spec: &'a ModelSpec,
        schema: &ItemSchema,
        panel: &'a LongitudinalPanel,
        options: &'a FitOptions,
    ) -> Result<Self> {
        if schema.n_categories() != panel.n_categories() {
            return Err(Error::SchemaMismatch("schema and panel disagree on items".into()));
        }
        Ok(Self {
            spec,
            panel,
            design: panel_design(spec, panel)?,
            pooled: pooled_frequencies(panel),
            options,
        })
    }

    fn e_step(&self, params: &Parameters) -> Result<Expectations> {
        let emission = LogEmission::new(params);
        let n_times = self.panel.n_times();
        let per_subject: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..self.panel.n_subjects())
            .into_par_iter()
            .map(|i| {
                let s = self.panel.subject(i);
                let chain = Chain::new(params, &self.design[i], n_times)?;
                let lat = SubjectLattice::from_parts(params.k(), n_times, emission.subject(&s), chain, s.id())?;
                Ok((lat.loglik, lat.posteriors_flat(), lat.pairwise_flat()))
            })
            .collect::<Result<_>>()?;
        let logliks: Vec<f64> = per_subject.iter().map(|s| s.0).collect();
        let (post, pair) = per_subject.into_iter().map(|(_, p, q)| (p, q)).unzip();
        Ok(Expectations {
            loglik: tree_sum(&logliks),
            post,
            pair,
        })
    }

    fn m_step(
        &self,
        params: &Parameters,
        ex: &Expectations,
        em_iter: usize,
        warnings: &mut Vec<String>,
    ) -> Result<Parameters> {
        let k = self.spec.k;
        let n_times = self.panel.n_times();
        let cats = self.panel.n_categories();

        // emissions: posterior-weighted category frequencies pooled over time
        let mut num: Vec<Vec<Vec<f64>>> = (0..k).map(|_| cats.iter().map(|&c| vec![0.0; c]).collect()).collect();
        let mut mass = vec![0.0; k];
        for (i, post) in ex.post.iter().enumerate() {
            let s = self.panel.subject(i);
            for t in 0..n_times {
                let resp = s.responses_at(t);
                for u in 0..k {
                    let w = post[t * k + u];
                    mass[u] += w;
                    for (j, r) in resp.iter().enumerate() {
                        if let Some(y) = r {
                            num[u][j][*y as usize] += w;
                        }
                    }
                }
            }
        }
        let threshold = EMPTY_STATE_FRACTION * (self.panel.n_subjects() * n_times) as f64;
        let mut phi = params.phi.clone();
        for u in 0..k {
            if mass[u] < threshold {
                phi[u] = self.pooled.clone();
                warnings.push(format!(
                    "state {} lost its posterior mass; emissions reset to pooled frequencies",
                    u + 1
                ));
                continue;
            }
            for (j, counts) in num[u].iter().enumerate() {
                let den: f64 = counts.iter().sum();
                if den > 0.0 {
                    phi[u][j] = counts.iter().map(|c| c / den).collect();
                }
            }
        }

        let latent = match &params.latent {
            LatentParams::Unrestricted { delta_raw, tau_raw } => {
                let mut delta = vec![0.0; k];
                for post in &ex.post {
                    for u in 0..k {
                        delta[u] += post[u];
                    }
                }
                if crate::numeric::normalize(&mut delta) <= 0.0 {
                    delta = delta_raw.clone();
                }
                let mut taus = tau_raw.clone();
                for (t, tau) in taus.iter_mut().enumerate() {
                    let mut counts = vec![0.0; k * k];
                    for pair in &ex.pair {
                        for (acc, v) in counts.iter_mut().zip(&pair[t * k * k..(t + 1) * k * k]) {
                            *acc += v;
                        }
                    }
                    for (a, row) in tau.iter_mut().enumerate() {
                        let mut r = counts[a * k..(a + 1) * k].to_vec();
                        if crate::numeric::normalize(&mut r) > 0.0 {
                            *row = r;
                        }
                    }
                }
                LatentParams::Unrestricted {
                    delta_raw: delta,
                    tau_raw: taus,
                }
            }
            LatentParams::Logit { beta, gamma } => {
                let newton = self.options.newton();
                let fail = |err: NewtonError, what: &str| {
                    let (newton_iter, message) = match err {
                        NewtonError::NonFinite { iter } => (iter, format!("{what}: non-finite objective")),
                        NewtonError::Singular { iter } => (iter, format!("{what}: singular Hessian")),
                        NewtonError::Stalled { iter, grad_norm } => (
                            iter,
                            format!("{what}: no ascent after {MAX_HALVINGS} halvings (gradient {grad_norm:.3e})"),
                        ),
                    };
                    Error::MStepFailure {
                        em_iter,
                        newton_iter,
                        message,
                    }
                };

                let mut beta = beta.clone();
                if k > 1 {
                    let p = self.spec.init_covariates.len();
                    let mut rows = WeightedRows::new(p + 1, k);
                    if p == 0 {
                        rows.push(&[], &vec![0.0; k]);
                        for post in &ex.post {
                            rows.add_weights(0, &post[..k]);
                        }
                    } else {
                        for (post, d) in ex.post.iter().zip(&self.design) {
                            rows.push(&d.init_x, &post[..k]);
                        }
                    }
                    fit_multinomial_logit(&rows, 0, &mut beta, newton)
                        .map_err(|e| fail(e, "initial-probability logit"))?;
                }

                let mut gamma = gamma.clone();
                if k > 1 && n_times > 1 {
                    let p = self.spec.trans_covariates.len();
                    for (a, block) in gamma.iter_mut().enumerate() {
                        let mut rows = WeightedRows::new(p + 1, k);
                        if p == 0 {
                            rows.push(&[], &vec![0.0; k]);
                        }
                        for (pair, d) in ex.pair.iter().zip(&self.design) {
                            for t in 1..n_times {
                                let off = (t - 1) * k * k + a * k;
                                let w = &pair[off..off + k];
                                if p == 0 {
                                    rows.add_weights(0, w);
                                } else {
                                    rows.push(&d.trans_x[t - 1], w);
                                }
                            }
                        }
                        fit_multinomial_logit(&rows, a, block, newton)
                            .map_err(|e| fail(e, &format!("transition logit from state {}", a + 1)))?;
                    }
                }
                LatentParams::Logit { beta, gamma }
            }
        };
        Ok(Parameters { phi, latent })
    }

    fn mean_init_x(&self) -> Vec<f64> {
        let p = self.spec.init_covariates.len();
        (0..p)
            .map(|c| {
                let vals: Vec<f64> = self.design.iter().map(|d| d.init_x[c]).collect();
                tree_sum(&vals) / vals.len() as f64
            })
            .collect()
    }

    fn run_start(&self, start: usize, schema: &ItemSchema) -> (StartOutcome, Option<Parameters>) {
        let mut outcome = StartOutcome {
            start,
            loglik: None,
            n_iter: 0,
            converged: false,
            trace: Vec::new(),
            warnings: Vec::new(),
            error: None,
        };
        let result = (|| -> Result<Parameters> {
            let mut params = initialize(self.spec, schema, self.panel, start, self.options.seed)?;
            let mut ex = self.e_step(&params)?;
            outcome.trace.push(ex.loglik);
            for iter in 1..=self.options.max_iter {
                let mut warnings = Vec::new();
                let next = self.m_step(&params, &ex, iter, &mut warnings)?;
                let next_ex = self.e_step(&next)?;
                for w in warnings {
                    if !outcome.warnings.contains(&w) {
                        outcome.warnings.push(w);
                    }
                }
                let old = ex.loglik;
                if next_ex.loglik < old - MONOTONE_SLACK {
                    outcome.warnings.push(format!(
                        "iteration {iter}: log-likelihood fell from {old} to {}; stopped at the previous iterate",
                        next_ex.loglik
                    ));
                    break;
                }
                params = next;
                ex = next_ex;
                outcome.trace.push(ex.loglik);
                outcome.n_iter = iter;
                if (ex.loglik - old).abs() / (old.abs() + 1.0) < self.options.rel_tol {
                    outcome.converged = true;
                    break;
                }
            }
            outcome.loglik = Some(ex.loglik);
            Ok(params)
        })();
        match result {
            Ok(p) => (outcome, Some(p)),
            Err(e) => {
                outcome.error = Some(e.to_string());
                (outcome, None)
            }
        }
    }
}

/// One EM iteration: E-step at `params`, M-step, and the log-likelihood of
/// the updated parameters.
pub fn em_step(
    params: &Parameters,
    spec: &ModelSpec,
    schema: &ItemSchema,
    panel: &LongitudinalPanel,
    options: &FitOptions,
) -> Result<(Parameters, f64)> {
    check_compatible(params, spec, panel)?;
    let ctx = Context::new(spec, schema, panel, options)?;
    let ex = ctx.e_step(params)?;
    let mut warnings = Vec::new();
    let next = ctx.m_step(params, &ex, 1, &mut warnings)?;
    let ll = ctx.e_step(&next)?.loglik;
    Ok((next, ll))
}

/// Runs EM from `options.n_starts` starting points and returns the best
/// solution, relabelled into canonical state order.
pub fn fit(
    spec: &ModelSpec,
    schema: &ItemSchema,
    panel: &LongitudinalPanel,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    spec.validate_for_schema(schema)?;
    let ctx = Context::new(spec, schema, panel, options)?;
    let runs: Vec<(StartOutcome, Option<Parameters>)> = (0..options.n_starts)
        .into_par_iter()
        .map(|s| ctx.run_start(s, schema))
        .collect();

    let mut best: Option<usize> = None;
    for (i, (outcome, params)) in runs.iter().enumerate() {
        if params.is_none() {
            continue;
        }
        let ll = outcome.loglik.unwrap_or(f64::NEG_INFINITY);
        match best {
            Some(b) if runs[b].0.loglik.unwrap_or(f64::NEG_INFINITY) >= ll => {}
            _ => best = Some(i),
        }
    }
    let Some(best) = best else {
        let reasons: Vec<String> = runs
            .iter()
            .map(|(o, _)| format!("start {}: {}", o.start, o.error.clone().unwrap_or_default()))
            .collect();
        return Err(Error::FitFailure(format!("all starts failed ({})", reasons.join("; "))));
    };

    let (outcome, params) = &runs[best];
    let params = params.clone().expect("winning start has parameters");
    let (params, _) = params.canonicalize(&ctx.mean_init_x())?;
    let loglik = outcome.loglik.expect("winning start has a log-likelihood");
    let g = count_free_params(spec, schema, panel.n_times());
    let (aic, bic) = information_criteria(loglik, g, panel.n_subjects());
    Ok(FitResult {
        spec: spec.clone(),
        params,
        loglik,
        g,
        n_subjects: panel.n_subjects(),
        aic,
        bic,
        n_iter: outcome.n_iter,
        converged: outcome.converged,
        start_index: outcome.start,
        trace: outcome.trace.clone(),
        warnings: outcome.warnings.clone(),
        starts: runs.into_iter().map(|(o, _)| o).collect(),
        options: options.clone(),
    })
}
