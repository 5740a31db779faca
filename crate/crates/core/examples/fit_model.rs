//! Fit the four-state logit model with an age effect on the initial
//! probabilities to a simulated panel, then compare with the generator.
//!
//! ```text
//! cargo run --release --example fit_model
//! ```

use latent_markov::fixtures::{benchmark_parameters, benchmark_spec, toxicity_schema, AGE_COVARIATE};
use latent_markov::panel::CovariateKind;
use latent_markov::{
    align_states, fit, simulate_panel, CovariateDistribution, CovariateGenerator, FitOptions, LatentParams, SimConfig,
};

fn main() -> latent_markov::Result<()> {
    let truth = benchmark_parameters()?;
    let config = SimConfig {
        params: truth.clone(),
        spec: benchmark_spec(),
        schema: toxicity_schema(),
        n_subjects: 600,
        n_times: 6,
        covariates: vec![CovariateGenerator::new(
            AGE_COVARIATE,
            CovariateKind::Fixed,
            CovariateDistribution::Normal { mean: 0.0, sd: 3.0 },
        )],
        seed: 11,
    };
    let schema = config.output_schema()?;
    let (panel, _) = simulate_panel(&config)?;

    let options = FitOptions {
        n_starts: 4,
        seed: 1,
        ..FitOptions::default()
    };
    let result = fit(&config.spec, &schema, &panel, &options)?;
    println!(
        "loglik {:.2}, g {}, AIC {:.2}, BIC {:.2}, {} iterations (start {}, converged {})",
        result.loglik, result.g, result.aic, result.bic, result.n_iter, result.start_index, result.converged
    );
    for s in &result.starts {
        println!(
            "  start {}: loglik {:?} after {} iterations",
            s.start, s.loglik, s.n_iter
        );
    }

    let (perm, phi_err) = align_states(&result.params, &truth);
    let aligned = result.params.permute_states(&perm);
    println!("largest emission error after aligning states {perm:?}: {phi_err:.3}");
    if let LatentParams::Logit { beta, .. } = &aligned.latent {
        for (u, b) in beta.iter().enumerate().skip(1) {
            println!("  state {}: intercept {:+.3}, age slope {:+.4}", u + 1, b[0], b[1]);
        }
    }
    let tau = aligned.transition(1, &[])?;
    for row in &tau {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
        println!("  τ [{}]", cells.join(", "));
    }
    let first = result.trace.first().copied().unwrap_or(f64::NAN);
    println!(
        "best start's log-likelihood rose from {first:.2} to {:.2}",
        result.loglik
    );
    Ok(())
}
