//! Posterior latent-state profiles, local decoding and cohort summaries
//! for the four-state benchmark model.
//!
//! ```text
//! cargo run --release --example latent_profiles
//! ```

use latent_markov::fixtures::{benchmark_parameters, benchmark_spec, toxicity_schema, AGE_COVARIATE};
use latent_markov::panel::CovariateKind;
use latent_markov::profiles::format_sequence;
use latent_markov::{
    average_initial, build_profiles, prevalence_over_time, simulate_panel, CovariateDistribution, CovariateGenerator,
    SimConfig,
};

fn main() -> latent_markov::Result<()> {
    let config = SimConfig {
        params: benchmark_parameters()?,
        spec: benchmark_spec(),
        schema: toxicity_schema(),
        n_subjects: 300,
        n_times: 6,
        covariates: vec![CovariateGenerator::new(
            AGE_COVARIATE,
            CovariateKind::Fixed,
            CovariateDistribution::Normal { mean: 0.0, sd: 3.0 },
        )],
        seed: 3,
    };
    let (panel, truth) = simulate_panel(&config)?;

    let profiles = build_profiles(&config.params, &config.spec, &panel)?;
    for (p, states) in profiles.iter().zip(&truth).take(5) {
        println!(
            "subject {:>3}: decoded {} true {}",
            p.subject_id,
            format_sequence(&p.decoded),
            format_sequence(states)
        );
        for (t, row) in p.probabilities.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
            println!("    t={} [{}]", t + 1, cells.join(", "));
        }
    }

    let hits: usize = profiles
        .iter()
        .zip(&truth)
        .map(|(p, s)| p.decoded.iter().zip(s).filter(|(a, b)| a == b).count())
        .sum();
    println!(
        "decoded states agree with the truth in {:.1}% of cells",
        100.0 * hits as f64 / (300.0 * 6.0)
    );

    println!("mean posterior prevalence by time:");
    for (u, row) in prevalence_over_time(&profiles)?.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  state {}: {}", u + 1, cells.join(" "));
    }
    let avg = average_initial(&config.params, &config.spec, &panel)?;
    println!("average initial distribution: {avg:.3?}");
    Ok(())
}
