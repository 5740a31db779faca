//! Evaluate the multinomial-logit links: initial probabilities as a
//! function of centered age, and a transition matrix recovered from its
//! intercepts.
//!
//! ```text
//! cargo run --example link_functions
//! ```

use latent_markov::fixtures::{BENCHMARK_BETA, BENCHMARK_TRANSITION};
use latent_markov::model::link::gamma_from_probs;
use latent_markov::{initial_probs, transition_matrix};

fn main() -> latent_markov::Result<()> {
    let beta: Vec<Vec<f64>> = BENCHMARK_BETA.iter().map(|r| r.to_vec()).collect();
    println!("initial probabilities by centered age (state 1 is the reference):");
    for age_c in [-6.0, -3.0, 0.0, 3.0, 6.0] {
        let delta = initial_probs(&beta, &[age_c])?;
        let cells: Vec<String> = delta.iter().map(|p| format!("{p:.3}")).collect();
        println!("  age_c {age_c:+4.1}: [{}]", cells.join(", "));
    }

    // intercept-only inversion: log(τ[a][b] / τ[a][a])
    let tau: Vec<Vec<f64>> = BENCHMARK_TRANSITION.iter().map(|r| r.to_vec()).collect();
    let gamma = gamma_from_probs(&tau, 0);
    let back = transition_matrix(&gamma, &[])?;
    println!("transition matrix from logit intercepts (rows renormalized):");
    for row in &back {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.4}")).collect();
        println!("  [{}]", cells.join(", "));
    }
    Ok(())
}
