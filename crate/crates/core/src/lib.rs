//! Latent Markov models for multivariate categorical longitudinal panels.
//!
//! Subjects answer `J` categorical items at `T` time points. A discrete latent
//! state follows a first-order Markov chain whose initial and transition
//! probabilities may depend on covariates through multinomial logit links;
//! items are conditionally independent given the state. The crate covers the
//! whole workflow:
//!
//! * [`panel`] — item schemas, grade merging, CSV ingestion, frequencies;
//! * [`model`] — model specifications, parameters, logit links, model files;
//! * [`likelihood`] — forward-backward log-likelihood and posteriors;
//! * [`em`] — multi-start EM estimation;
//! * [`selection`] — AIC/BIC, state-count selection, forward covariate search;
//! * [`profiles`] — per-subject posterior profiles, local decoding, summaries;
//! * [`simulate`] — reproducible synthetic panels;
//! * [`fixtures`] — a documented four-state benchmark model;
//! * [`cli`] — the `lmfit` command-line front end.

pub mod cli;
pub mod em;
pub mod error;
pub mod fixtures;
pub mod likelihood;
pub mod model;
pub mod numeric;
pub mod panel;
pub mod profiles;
pub mod rng;
pub mod selection;
pub mod simulate;

pub use em::{em_step, fit, initialize, FitOptions, FitResult, FitSummary};
pub use error::{Error, Result};
pub use likelihood::{pairwise_posteriors, posteriors, subject_loglik, total_loglik};
pub use model::{
    align_states, count_free_params, initial_probs, transition_matrix, LatentParams, ModelFile, ModelSpec, Parameters,
    TransitionStructure,
};
pub use panel::{
    category_frequencies, load_panel, merge_grade, IngestConfig, ItemClass, ItemSchema, LongitudinalPanel,
};
pub use profiles::{average_initial, build_profiles, local_decode, prevalence_over_time, LatentProfile};
pub use selection::{
    information_criteria, select_states, stepwise_covariates, CovariateCandidate, CovariateTarget, SelectionReport,
    SelectionRow, StepwiseOptions,
};
pub use simulate::{
    read_covariate_table, simulate_panel, simulate_panel_with_covariates, CovariateDistribution, CovariateGenerator,
    CovariateTable, SimConfig,
};
