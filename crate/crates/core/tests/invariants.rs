//! Property-based invariants over random small problems.

mod common;

use common::{random_instance, InstanceShape};
use latent_markov::model::{initial_probs, transition_matrix, LatentParams, ModelSpec, Parameters};
use latent_markov::panel::{
    category_frequencies, read_panel, write_panel, IngestConfig, ItemSchema, LongitudinalPanel, SubjectRecord,
};
use latent_markov::{average_initial, build_profiles, prevalence_over_time, total_loglik};
use proptest::prelude::*;

fn simplex(v: &[f64]) -> bool {
    v.iter().all(|p| (0.0..=1.0).contains(p)) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn link_outputs_are_distributions(
        k in 1usize..6,
        coefs in prop::collection::vec(-30.0f64..30.0, 6 * 6 * 3),
        x in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let beta: Vec<Vec<f64>> = (0..k)
            .map(|u| if u == 0 { vec![0.0; 3] } else { coefs[3 * u..3 * u + 3].to_vec() })
            .collect();
        prop_assert!(simplex(&initial_probs(&beta, &x).unwrap()));
        let gamma: Vec<Vec<Vec<f64>>> = (0..k)
            .map(|a| (0..k).map(|b| {
                let i = 3 * (a * 6 + b);
                if a == b { vec![0.0; 3] } else { coefs[i..i + 3].to_vec() }
            }).collect())
            .collect();
        for row in transition_matrix(&gamma, &x).unwrap() {
            prop_assert!(simplex(&row));
        }
    }

    #[test]
    fn panel_csv_round_trip(seed in 0u64..10_000) {
        let inst = random_instance(seed, &InstanceShape { n_subjects: 5, missing_rate: 0.0, ..Default::default() });
        let mut buf = Vec::new();
        write_panel(&inst.panel, &inst.schema, &mut buf).unwrap();
        let back = read_panel(buf.as_slice(), &inst.schema, &IngestConfig::default()).unwrap();
        prop_assert_eq!(back, inst.panel);
    }

    #[test]
    fn frequencies_account_for_every_response(seed in 0u64..10_000) {
        let inst = random_instance(seed, &InstanceShape { n_subjects: 8, ..Default::default() });
        let table = category_frequencies(&inst.panel);
        for (j, item) in table.items.iter().enumerate() {
            for t in 0..inst.panel.n_times() {
                let missing = inst.panel.subjects().filter(|s| s.responses_at(t)[j].is_none()).count();
                prop_assert_eq!(item.counts[t].iter().sum::<usize>(), item.observed[t]);
                prop_assert_eq!(item.observed[t] + missing, inst.panel.n_subjects());
            }
        }
    }

    #[test]
    fn profiles_are_normalized_and_decoded_at_maxima(seed in 0u64..10_000) {
        let inst = random_instance(seed, &InstanceShape { n_subjects: 6, ..Default::default() });
        let profiles = build_profiles(&inst.params, &inst.spec, &inst.panel).unwrap();
        for p in &profiles {
            for (row, &u) in p.probabilities.iter().zip(&p.decoded) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!(row.iter().all(|&v| v <= row[u]));
            }
        }
        for t in 0..inst.panel.n_times() {
            let col: f64 = prevalence_over_time(&profiles).unwrap().iter().map(|r| r[t]).sum();
            prop_assert!((col - 1.0).abs() < 1e-10);
        }
        let avg = average_initial(&inst.params, &inst.spec, &inst.panel).unwrap();
        prop_assert!((avg.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn relabelling_states_preserves_the_likelihood(seed in 0u64..10_000, rot in 0usize..3) {
        let inst = random_instance(seed, &InstanceShape { n_subjects: 6, ..Default::default() });
        let k = inst.spec.k;
        let perm: Vec<usize> = (0..k).map(|s| (s + rot) % k).collect();
        let a = total_loglik(&inst.params, &inst.spec, &inst.panel).unwrap();
        let b = total_loglik(&inst.params.permute_states(&perm), &inst.spec, &inst.panel).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        let pa = build_profiles(&inst.params, &inst.spec, &inst.panel).unwrap();
        let pb = build_profiles(&inst.params.permute_states(&perm), &inst.spec, &inst.panel).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            for (rx, ry) in x.probabilities.iter().zip(&y.probabilities) {
                for s in 0..k {
                    prop_assert!((ry[s] - rx[perm[s]]).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn long_chain_does_not_underflow() {
    let k = 5;
    let n_times = 200;
    let schema =
        ItemSchema::from_labels(&[("a", &["0", "1", "2", "3"][..]), ("b", &["0", "1", "2", "3"][..])]).unwrap();
    let phi: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|u| {
            (0..2)
                .map(|_| (0..4).map(|c| if c == u % 4 { 0.7 } else { 0.1 }).collect())
                .collect()
        })
        .collect();
    let tau: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| if a == b { 0.8 } else { 0.05 }).collect())
        .collect();
    let params = Parameters {
        phi,
        latent: LatentParams::Unrestricted {
            delta_raw: vec![0.2; k],
            tau_raw: vec![tau; n_times - 1],
        },
    };
    let records = (0..3)
        .map(|i| SubjectRecord {
            id: i.to_string(),
            responses: (0..n_times)
                .map(|t| vec![Some(((t + i) % 4) as u16), Some((t % 3) as u16)])
                .collect(),
            fixed: vec![],
            varying: vec![],
        })
        .collect();
    let panel = LongitudinalPanel::from_records(&schema, n_times, records).unwrap();
    let spec = ModelSpec::unrestricted(k);
    let ll = total_loglik(&params, &spec, &panel).unwrap();
    assert!(ll.is_finite() && ll < -500.0, "loglik {ll}");
    for p in build_profiles(&params, &spec, &panel).unwrap() {
        for row in &p.probabilities {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
