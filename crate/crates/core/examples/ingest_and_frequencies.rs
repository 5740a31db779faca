//! Load a long-format panel CSV with raw toxicity grades, merge grades into
//! categories, center a covariate and print per-time category percentages.
//!
//! ```text
//! cargo run --example ingest_and_frequencies
//! ```

use latent_markov::fixtures::toxicity_schema_with_age;
use latent_markov::panel::read_panel;
use latent_markov::{category_frequencies, merge_grade, IngestConfig, ItemClass};

/// Three subjects, two cycles; raw grades 0–4; `age_c` holds raw ages here
/// and is centered on load.
const PANEL: &str = "\
subject_id,time,naus,inf,oral,car,oto,neur,age_c
1,1,0,0,0,0,0,0,14
1,2,2,1,0,0,1,0,14
2,1,4,2,1,0,0,0,17
2,2,3,0,0,0,2,0,17
3,1,1,0,0,0,0,0,11
3,2,,0,0,0,0,1,11
";

fn main() -> latent_markov::Result<()> {
    println!(
        "grade 4 of a generic item -> category {}",
        merge_grade(4, ItemClass::Generic)?
    );
    println!(
        "grade 2 of a drug-specific item -> category {}",
        merge_grade(2, ItemClass::DrugSpecific)?
    );

    let schema = toxicity_schema_with_age();
    let config = IngestConfig {
        allow_missing: true,
        merge_grades: true,
        center: vec!["age_c".into()],
    };
    let panel = read_panel(PANEL.as_bytes(), &schema, &config)?;
    println!(
        "{} subjects, {} times, {} items, centering {:?}",
        panel.n_subjects(),
        panel.n_times(),
        panel.n_items(),
        panel.centering()
    );

    let table = category_frequencies(&panel).with_labels(&schema);
    for item in &table.items {
        for t in 0..panel.n_times() {
            let cells: Vec<String> = item
                .labels
                .iter()
                .enumerate()
                .map(|(y, l)| format!("{l} {:.1}%", item.percent(t, y)))
                .collect();
            println!(
                "{:5} t={} (n={}): {}",
                item.item,
                t + 1,
                item.observed[t],
                cells.join(", ")
            );
        }
    }
    table.write_csv(std::io::stdout())?;
    Ok(())
}
