//! Simulation against its generator: law-of-large-numbers checks,
//! covariate effects, reproducibility and supplied covariate tables.

use latent_markov::fixtures::{benchmark_parameters, benchmark_spec, toxicity_schema, AGE_COVARIATE};
use latent_markov::panel::{read_panel, write_panel, CovariateKind, ItemSchema};
use latent_markov::{
    read_covariate_table, simulate_panel, simulate_panel_with_covariates, CovariateDistribution, CovariateGenerator,
    IngestConfig, LatentParams, ModelSpec, Parameters, SimConfig,
};

fn two_state_config(n: usize, n_times: usize, seed: u64) -> SimConfig {
    SimConfig {
        params: Parameters {
            phi: vec![
                vec![vec![0.7, 0.2, 0.1], vec![0.9, 0.1]],
                vec![vec![0.1, 0.3, 0.6], vec![0.35, 0.65]],
            ],
            latent: LatentParams::Unrestricted {
                delta_raw: vec![0.6, 0.4],
                tau_raw: vec![vec![vec![0.85, 0.15], vec![0.3, 0.7]]; n_times - 1],
            },
        },
        spec: ModelSpec::unrestricted(2),
        schema: ItemSchema::from_labels(&[("a", &["0", "1", "2"][..]), ("b", &["0", "1"][..])]).unwrap(),
        n_subjects: n,
        n_times,
        covariates: vec![],
        seed,
    }
}

#[test]
fn transition_frequencies_match_generator() {
    let config = two_state_config(50_000, 2, 1);
    let (_, truth) = simulate_panel(&config).unwrap();
    let mut counts = [[0usize; 2]; 2];
    for s in &truth {
        counts[s[0]][s[1]] += 1;
    }
    let tau = [[0.85, 0.15], [0.3, 0.7]];
    for a in 0..2 {
        let row: usize = counts[a].iter().sum();
        for b in 0..2 {
            let freq = counts[a][b] as f64 / row as f64;
            assert!((freq - tau[a][b]).abs() <= 0.01, "τ[{a}][{b}] {freq}");
        }
    }
}

#[test]
fn emission_frequencies_within_three_standard_errors() {
    let config = two_state_config(5_000, 4, 2);
    let (panel, truth) = simulate_panel(&config).unwrap();
    let phi = &config.params.phi;
    let mut counts = vec![vec![vec![0usize; 3], vec![0usize; 2]]; 2];
    for (s, states) in panel.subjects().zip(&truth) {
        for (t, &u) in states.iter().enumerate() {
            for (j, y) in s.responses_at(t).iter().enumerate() {
                counts[u][j][y.unwrap() as usize] += 1;
            }
        }
    }
    for u in 0..2 {
        for j in 0..2 {
            let n: usize = counts[u][j].iter().sum();
            for (y, &c) in counts[u][j].iter().enumerate() {
                let p = phi[u][j][y];
                let se = (p * (1.0 - p) / n as f64).sqrt();
                let freq = c as f64 / n as f64;
                assert!((freq - p).abs() <= 3.0 * se, "φ[{u}][{j}][{y}] {freq} vs {p}");
            }
        }
    }
}

#[test]
fn older_subjects_start_in_state_two_more_often() {
    let config = SimConfig {
        params: benchmark_parameters().unwrap(),
        spec: benchmark_spec(),
        schema: toxicity_schema(),
        n_subjects: 20_000,
        n_times: 1,
        covariates: vec![CovariateGenerator::new(
            AGE_COVARIATE,
            CovariateKind::Fixed,
            CovariateDistribution::Normal { mean: 0.0, sd: 3.0 },
        )],
        seed: 3,
    };
    // simulated responses are category codes: no grade maps to re-apply
    assert!(config
        .output_schema()
        .unwrap()
        .items
        .iter()
        .all(|i| i.class.is_none() && i.merge.is_none()));
    let (panel, truth) = simulate_panel(&config).unwrap();
    let rate = |lo: f64, hi: f64| {
        let (mut n, mut hits) = (0, 0);
        for (s, states) in panel.subjects().zip(&truth) {
            let age = 15.0 + s.covariate(AGE_COVARIATE, 0).unwrap().unwrap();
            if (lo..hi).contains(&age) {
                n += 1;
                hits += usize::from(states[0] == 1);
            }
        }
        hits as f64 / n as f64
    };
    // ages 19–21 vs 9–11
    assert!(rate(19.0, 21.0) > rate(9.0, 11.0));
}

#[test]
fn simulated_panel_round_trips_and_repeats() {
    let config = two_state_config(200, 3, 4);
    let (panel, truth) = simulate_panel(&config).unwrap();
    let mut buf = Vec::new();
    write_panel(&panel, &config.schema, &mut buf).unwrap();
    let back = read_panel(buf.as_slice(), &config.schema, &IngestConfig::default()).unwrap();
    assert_eq!(back, panel);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let again = pool.install(|| simulate_panel(&config).unwrap());
    assert_eq!(again, (panel, truth));
}

#[test]
fn supplied_covariate_table_drives_the_links() {
    let csv = "subject_id,time,dose,site\n\
               b,1,0.5,1\nb,2,1.5,1\n\
               a,1,2.0,0\na,2,2.0,0\n";
    let table = read_covariate_table(csv.as_bytes(), &[]).unwrap();
    assert_eq!(table.ids, ["a", "b"]);
    let kinds: Vec<CovariateKind> = table.covariates.iter().map(|c| c.kind).collect();
    assert_eq!(kinds, [CovariateKind::Varying, CovariateKind::Fixed]);

    let schema = ItemSchema::from_labels(&[("y", &["0", "1"][..])]).unwrap();
    let config = SimConfig {
        params: Parameters {
            phi: vec![vec![vec![0.9, 0.1]], vec![vec![0.2, 0.8]]],
            latent: LatentParams::Logit {
                beta: vec![vec![0.0, 0.0], vec![0.3, -1.0]],
                gamma: vec![
                    vec![vec![0.0, 0.0], vec![-1.0, 0.5]],
                    vec![vec![-1.0, 0.2], vec![0.0, 0.0]],
                ],
            },
        },
        spec: ModelSpec::logit(2, &["site"], &["dose"]),
        schema,
        n_subjects: 2,
        n_times: 2,
        covariates: vec![],
        seed: 5,
    };
    let (panel, truth) = simulate_panel_with_covariates(&config, &table).unwrap();
    assert_eq!(panel.subject_ids(), ["a", "b"]);
    assert_eq!(truth.len(), 2);
    let b = panel.subject(1);
    assert_eq!(b.covariate("dose", 1).unwrap(), Some(1.5));
    assert_eq!(b.covariate("site", 0).unwrap(), Some(1.0));

    let mut short = config.clone();
    short.n_subjects = 3;
    assert!(simulate_panel_with_covariates(&short, &table).is_err());
    assert!(read_covariate_table("subject_id,time,x\n1,1,0\n1,3,0\n".as_bytes(), &[]).is_err());
}
