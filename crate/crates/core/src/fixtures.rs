//! A documented four-state benchmark model for toxicity-style panels.
//!
//! Six items: three "generic" toxicities graded none/mild/moderate/severe
//! (raw grades 0–4, with 3 and 4 merged) and three "drug-specific" ones
//! recorded as no/yes (any grade ≥ 1 is yes). Initial probabilities depend on
//! one fixed covariate, `age_c` (age in years minus 15), through a
//! multinomial logit with state 1 as reference; transitions are
//! time-homogeneous without covariates.
//!
//! The initial-logit coefficients and the transition matrix are published
//! estimates from a chemotherapy-toxicity cohort. No emission table was
//! published numerically, so [`benchmark_emissions`] is a hand-built fixture
//! that follows the qualitative state descriptions:
//!
//! 1. mostly free of toxicity;
//! 2. non-severe nausea, the only state where drug-specific toxicities are
//!    common (ototoxicity "yes" with probability 0.429);
//! 3. moderate or severe nausea/vomiting only;
//! 4. several moderate or severe generic toxicities, nausea almost certain.
//!
//! The states are kept well apart so the model is recoverable by simulation.

use crate::error::Result;
use crate::model::link::gamma_from_probs;
use crate::model::{LatentParams, ModelSpec, Parameters};
use crate::panel::{CovariateKind, ItemClass, ItemDef, ItemSchema};

/// Name of the centered-age covariate used by the benchmark model.
pub const AGE_COVARIATE: &str = "age_c";

/// Intercept and `age_c` slope of the initial-probability logit for states
/// 1..4 (state 1 is the zero reference block).
pub const BENCHMARK_BETA: [[f64; 2]; 4] = [[0.0, 0.0], [-1.2679, 0.1858], [1.0138, 0.0014], [-0.3031, 0.0512]];

/// Transition probabilities from row state to column state, as published
/// (rows sum to 1 within 1e-4).
pub const BENCHMARK_TRANSITION: [[f64; 4]; 4] = [
    [0.9674, 0.0167, 0.0032, 0.0127],
    [0.0525, 0.9214, 0.0245, 0.0016],
    [0.1070, 0.0526, 0.7581, 0.0824],
    [0.1555, 0.0356, 0.0868, 0.7221],
];

fn item(name: &str, class: ItemClass) -> ItemDef {
    let labels: &[&str] = match class {
        ItemClass::Generic => &["none", "mild", "moderate", "severe"],
        ItemClass::DrugSpecific => &["no", "yes"],
    };
    ItemDef {
        name: name.to_string(),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        class: Some(class),
        merge: None,
    }
}

/// Items `naus`, `inf`, `oral` (generic) and `car`, `oto`, `neur`
/// (drug-specific), with grade-merge classes and no covariates.
pub fn toxicity_schema() -> ItemSchema {
    ItemSchema::new(
        vec![
            item("naus", ItemClass::Generic),
            item("inf", ItemClass::Generic),
            item("oral", ItemClass::Generic),
            item("car", ItemClass::DrugSpecific),
            item("oto", ItemClass::DrugSpecific),
            item("neur", ItemClass::DrugSpecific),
        ],
        Vec::new(),
    )
    .expect("static schema is valid")
}

/// [`toxicity_schema`] plus the fixed covariate [`AGE_COVARIATE`].
pub fn toxicity_schema_with_age() -> ItemSchema {
    toxicity_schema()
        .with_covariate(AGE_COVARIATE, CovariateKind::Fixed)
        .expect("static schema is valid")
}

/// Emission fixture `phi[state][item][category]` for the six items.
pub fn benchmark_emissions() -> Vec<Vec<Vec<f64>>> {
    vec![
        // 1: largely toxicity-free
        vec![
            vec![0.70, 0.20, 0.07, 0.03],
            vec![0.85, 0.10, 0.04, 0.01],
            vec![0.85, 0.10, 0.04, 0.01],
            vec![0.97, 0.03],
            vec![0.95, 0.05],
            vec![0.97, 0.03],
        ],
        // 2: non-severe nausea with drug-specific toxicities
        vec![
            vec![0.25, 0.55, 0.15, 0.05],
            vec![0.70, 0.20, 0.08, 0.02],
            vec![0.65, 0.25, 0.08, 0.02],
            vec![0.70, 0.30],
            vec![0.571, 0.429],
            vec![0.75, 0.25],
        ],
        // 3: moderate/severe nausea only
        vec![
            vec![0.05, 0.20, 0.40, 0.35],
            vec![0.80, 0.12, 0.06, 0.02],
            vec![0.75, 0.15, 0.07, 0.03],
            vec![0.97, 0.03],
            vec![0.96, 0.04],
            vec![0.97, 0.03],
        ],
        // 4: multiple moderate/severe generic toxicities
        vec![
            vec![0.01, 0.09, 0.35, 0.55],
            vec![0.30, 0.30, 0.25, 0.15],
            vec![0.25, 0.30, 0.25, 0.20],
            vec![0.93, 0.07],
            vec![0.92, 0.08],
            vec![0.94, 0.06],
        ],
    ]
}

/// Logit spec with [`AGE_COVARIATE`] on the initial probabilities only.
pub fn benchmark_spec() -> ModelSpec {
    ModelSpec::logit(4, &[AGE_COVARIATE], &[])
}

/// Benchmark parameters for [`benchmark_spec`]: published initial-logit
/// coefficients, transition intercepts inverted from the published matrix,
/// and the emission fixture.
pub fn benchmark_parameters() -> Result<Parameters> {
    let tau: Vec<Vec<f64>> = BENCHMARK_TRANSITION.iter().map(|r| r.to_vec()).collect();
    Ok(Parameters {
        phi: benchmark_emissions(),
        latent: LatentParams::Logit {
            beta: BENCHMARK_BETA.iter().map(|r| r.to_vec()).collect(),
            gamma: gamma_from_probs(&tau, 0),
        },
    })
}
