//! Choose the number of latent states by BIC over a grid of unrestricted
//! models fitted to a simulated three-state panel.
//!
//! ```text
//! cargo run --release --example select_states
//! ```

use latent_markov::panel::ItemSchema;
use latent_markov::{select_states, simulate_panel, FitOptions, LatentParams, ModelSpec, Parameters, SimConfig};

fn main() -> latent_markov::Result<()> {
    let items: Vec<(String, &[&str])> = (1..=5).map(|j| (format!("y{j}"), &["lo", "mid", "hi"][..])).collect();
    let schema = ItemSchema::from_labels(&items)?;
    let k = 3;
    let phi = (0..k)
        .map(|u| {
            (0..5)
                .map(|_| (0..3).map(|c| if c == u { 0.7 } else { 0.15 }).collect())
                .collect()
        })
        .collect();
    let tau: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| if a == b { 0.8 } else { 0.1 }).collect())
        .collect();
    let config = SimConfig {
        params: Parameters {
            phi,
            latent: LatentParams::Unrestricted {
                delta_raw: vec![0.4, 0.35, 0.25],
                tau_raw: vec![tau; 4],
            },
        },
        spec: ModelSpec::unrestricted(k),
        schema: schema.clone(),
        n_subjects: 500,
        n_times: 5,
        covariates: vec![],
        seed: 5,
    };
    let (panel, _) = simulate_panel(&config)?;

    let options = FitOptions {
        n_starts: 3,
        ..FitOptions::default()
    };
    let report = select_states(&schema, &panel, 1..=5, &options)?;
    report.write_csv(std::io::stdout())?;
    println!(
        "best by BIC: {:?}, best by AIC: {:?}",
        report.best_by_bic, report.best_by_aic
    );
    Ok(())
}
