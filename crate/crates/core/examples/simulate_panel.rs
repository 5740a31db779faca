//! Simulate a toxicity-style panel from the benchmark model and write the
//! panel CSV, schema, hidden states and model file.
//!
//! ```text
//! cargo run --example simulate_panel -- [OUT_DIR]
//! ```
//!
//! The written `model.json` and `panel.csv` feed straight into the `lmfit`
//! binary, e.g. `lmfit decode --model OUT/model.json --panel OUT/panel.csv`.

use std::fs::{self, File};
use std::path::PathBuf;

use latent_markov::fixtures::{benchmark_parameters, benchmark_spec, toxicity_schema, AGE_COVARIATE};
use latent_markov::panel::{category_frequencies, write_panel, CovariateKind};
use latent_markov::simulate::write_truth_csv;
use latent_markov::{simulate_panel, CovariateDistribution, CovariateGenerator, ModelFile, SimConfig};

fn main() -> latent_markov::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("lmfit-example-sim"));
    fs::create_dir_all(&out)?;

    let config = SimConfig {
        params: benchmark_parameters()?,
        spec: benchmark_spec(),
        schema: toxicity_schema(),
        n_subjects: 500,
        n_times: 6,
        // age ~ N(15, 3), stored centered at 15
        covariates: vec![CovariateGenerator::new(
            AGE_COVARIATE,
            CovariateKind::Fixed,
            CovariateDistribution::Normal { mean: 0.0, sd: 3.0 },
        )],
        seed: 7,
    };
    let schema = config.output_schema()?;
    let (panel, truth) = simulate_panel(&config)?;

    write_panel(&panel, &schema, File::create(out.join("panel.csv"))?)?;
    schema.write(out.join("schema.json"))?;
    write_truth_csv(&panel, &truth, File::create(out.join("truth.csv"))?)?;
    ModelFile {
        spec: config.spec.clone(),
        schema: schema.clone(),
        n_times: config.n_times,
        params: config.params.clone(),
        centering: Vec::new(),
        fit: None,
    }
    .write(out.join("model.json"))?;

    println!(
        "simulated {} subjects x {} times into {}",
        panel.n_subjects(),
        panel.n_times(),
        out.display()
    );
    let naus = &category_frequencies(&panel).items[0];
    for t in 0..panel.n_times() {
        let pct: Vec<String> = (0..4).map(|y| format!("{:5.1}%", naus.percent(t, y))).collect();
        println!("naus t={} {}", t + 1, pct.join(" "));
    }
    let mut initial = [0usize; 4];
    for states in &truth {
        initial[states[0]] += 1;
    }
    println!("true initial state counts: {initial:?}");
    Ok(())
}
