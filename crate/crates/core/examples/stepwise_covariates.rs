//! Forward covariate selection: starting from the intercept-only logit
//! model, add the covariate that lowers BIC most until none does.
//!
//! ```text
//! cargo run --release --example stepwise_covariates
//! ```

use latent_markov::model::link::gamma_from_probs;
use latent_markov::panel::{CovariateKind, ItemSchema};
use latent_markov::{
    simulate_panel, stepwise_covariates, CovariateCandidate, CovariateDistribution, CovariateGenerator,
    CovariateTarget, FitOptions, LatentParams, ModelSpec, Parameters, SimConfig, StepwiseOptions,
};

fn main() -> latent_markov::Result<()> {
    let items: Vec<(String, &[&str])> = (1..=5).map(|j| (format!("y{j}"), &["0", "1", "2"][..])).collect();
    let k = 3;
    let tau: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| if a == b { 0.8 } else { 0.1 }).collect())
        .collect();
    // `dose` shifts the initial state; `noise` has no effect
    let params = Parameters {
        phi: (0..k)
            .map(|u| {
                (0..5)
                    .map(|_| (0..3).map(|c| if c == u { 0.7 } else { 0.15 }).collect())
                    .collect()
            })
            .collect(),
        latent: LatentParams::Logit {
            beta: vec![vec![0.0; 3], vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 0.0]],
            gamma: gamma_from_probs(&tau, 0),
        },
    };
    let config = SimConfig {
        params,
        spec: ModelSpec::logit(k, &["dose", "noise"], &[]),
        schema: ItemSchema::from_labels(&items)?,
        n_subjects: 600,
        n_times: 5,
        covariates: vec![
            CovariateGenerator::new(
                "dose",
                CovariateKind::Fixed,
                CovariateDistribution::Normal { mean: 0.0, sd: 1.0 },
            ),
            CovariateGenerator::new(
                "noise",
                CovariateKind::Fixed,
                CovariateDistribution::Bernoulli { p: 0.5 },
            ),
        ],
        seed: 21,
    };
    let schema = config.output_schema()?;
    let (panel, _) = simulate_panel(&config)?;

    let candidates = [
        CovariateCandidate::new("dose", CovariateTarget::Initial),
        CovariateCandidate::new("noise", CovariateTarget::Initial),
        CovariateCandidate::new("dose", CovariateTarget::Transition),
    ];
    let options = StepwiseOptions {
        fit: FitOptions {
            n_starts: 3,
            ..FitOptions::default()
        },
        max_steps: None,
    };
    let report = stepwise_covariates(&schema, &panel, k, &candidates, &options)?;
    report.write_csv(std::io::stdout())?;
    println!("accepted: {:?}", report.accepted);
    println!("final model: {:?}", report.best_by_bic);
    Ok(())
}
