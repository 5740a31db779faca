//! Model selection: information criteria, state grids and forward
//! covariate search.

use latent_markov::model::count_free_params;
use latent_markov::panel::{CovariateKind, ItemSchema, LongitudinalPanel, SubjectRecord};
use latent_markov::selection::{
    information_criteria, select_states, stepwise_covariates, CovariateCandidate, CovariateTarget, StepwiseOptions,
};
use latent_markov::simulate::{simulate_panel, CovariateDistribution, CovariateGenerator, SimConfig};
use latent_markov::{total_loglik, FitOptions, LatentParams, ModelSpec, Parameters};

fn schema() -> ItemSchema {
    ItemSchema::from_labels(&[
        ("a", &["0", "1", "2"][..]),
        ("b", &["0", "1"][..]),
        ("c", &["0", "1"][..]),
    ])
    .unwrap()
}

fn truth() -> Parameters {
    Parameters {
        phi: vec![
            vec![vec![0.8, 0.15, 0.05], vec![0.85, 0.15], vec![0.9, 0.1]],
            vec![vec![0.1, 0.2, 0.7], vec![0.2, 0.8], vec![0.25, 0.75]],
        ],
        latent: LatentParams::Unrestricted {
            delta_raw: vec![0.55, 0.45],
            tau_raw: vec![vec![vec![0.9, 0.1], vec![0.15, 0.85]]; 3],
        },
    }
}

fn panel(n: usize, seed: u64) -> LongitudinalPanel {
    let config = SimConfig {
        params: truth(),
        spec: ModelSpec::unrestricted(2),
        schema: schema(),
        n_subjects: n,
        n_times: 4,
        covariates: vec![],
        seed,
    };
    simulate_panel(&config).unwrap().0
}

fn quick() -> FitOptions {
    FitOptions {
        n_starts: 2,
        ..FitOptions::default()
    }
}

#[test]
fn criteria_match_definitions() {
    let (aic, bic) = information_criteria(-100.0, 5, 50);
    assert_eq!(aic, 210.0);
    assert!((bic - (200.0 + 5.0 * 50f64.ln())).abs() < 1e-12);
}

#[test]
fn single_k_range_gives_one_row() {
    let p = panel(60, 1);
    let report = select_states(&schema(), &p, [1], &quick()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.best_by_bic.as_deref(), Some("M1[k=1]"));
    assert_eq!(report.rows[0].g, 4);
}

#[test]
fn grid_reports_every_k_and_picks_minimum_bic() {
    let p = panel(400, 2);
    let report = select_states(&schema(), &p, 1..=3, &quick()).unwrap();
    assert_eq!(report.rows.len(), 3);
    for (row, k) in report.rows.iter().zip(1..) {
        assert_eq!(row.k, k);
        assert_eq!(row.g, count_free_params(&ModelSpec::unrestricted(k), &schema(), 4));
        assert!(row.is_ok());
    }
    let min = report
        .rows
        .iter()
        .min_by(|a, b| a.bic.unwrap().partial_cmp(&b.bic.unwrap()).unwrap())
        .unwrap();
    assert_eq!(report.best_by_bic.as_deref(), Some(min.label.as_str()));
    assert_eq!(report.best_by_bic.as_deref(), Some("M1[k=2]"));
    assert!(report.fit_for("M1[k=2]").is_some());

    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("label,k,g,loglik,aic,bic,status\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn empty_or_zero_ranges_are_rejected() {
    let p = panel(20, 3);
    assert!(select_states(&schema(), &p, Vec::<usize>::new(), &quick()).is_err());
    assert!(select_states(&schema(), &p, [0, 1], &quick()).is_err());
}

#[test]
fn duplicated_panel_doubles_loglik() {
    let p = panel(50, 4);
    let n = p.n_subjects();
    let mut records = p.to_records();
    records.extend(p.to_records().into_iter().map(|mut r| {
        r.id = (r.id.parse::<usize>().unwrap() + n).to_string();
        r
    }));
    let doubled = LongitudinalPanel::from_records(&schema(), 4, records).unwrap();
    let spec = ModelSpec::unrestricted(2);
    let single = total_loglik(&truth(), &spec, &p).unwrap();
    let double = total_loglik(&truth(), &spec, &doubled).unwrap();
    assert!((double - 2.0 * single).abs() <= 1e-12 * single.abs());
}

#[test]
fn single_time_point_is_a_finite_mixture() {
    let records: Vec<SubjectRecord> = (0..12)
        .map(|i| SubjectRecord {
            id: i.to_string(),
            responses: vec![vec![
                Some((i % 3) as u16),
                Some((i % 2) as u16),
                Some(((i / 2) % 2) as u16),
            ]],
            fixed: vec![],
            varying: vec![],
        })
        .collect();
    let p = LongitudinalPanel::from_records(&schema(), 1, records).unwrap();
    let params = Parameters {
        phi: truth().phi,
        latent: LatentParams::Unrestricted {
            delta_raw: vec![0.3, 0.7],
            tau_raw: vec![],
        },
    };
    let mut expected = 0.0;
    for s in p.subjects() {
        let mix: f64 = (0..2)
            .map(|u| {
                let dens: f64 = s
                    .responses_at(0)
                    .iter()
                    .enumerate()
                    .map(|(j, y)| params.phi[u][j][y.unwrap() as usize])
                    .product();
                [0.3, 0.7][u] * dens
            })
            .sum();
        expected += mix.ln();
    }
    let got = total_loglik(&params, &ModelSpec::unrestricted(2), &p).unwrap();
    assert!((got - expected).abs() <= 1e-12 * expected.abs());
}

fn covariate_panel(n: usize, seed: u64) -> (ItemSchema, LongitudinalPanel) {
    let spec = ModelSpec::logit(2, &["x", "w"], &[]);
    let params = Parameters {
        phi: truth().phi,
        latent: LatentParams::Logit {
            beta: vec![vec![0.0, 0.0, 0.0], vec![0.0, 1.5, 0.0]],
            gamma: vec![vec![vec![0.0], vec![-2.0]], vec![vec![-1.5], vec![0.0]]],
        },
    };
    let config = SimConfig {
        params,
        spec,
        schema: schema(),
        n_subjects: n,
        n_times: 4,
        covariates: vec![
            CovariateGenerator::new(
                "x",
                CovariateKind::Fixed,
                CovariateDistribution::Normal { mean: 0.0, sd: 1.0 },
            ),
            CovariateGenerator::new("w", CovariateKind::Fixed, CovariateDistribution::Bernoulli { p: 0.5 }),
        ],
        seed,
    };
    let out_schema = config.output_schema().unwrap();
    (out_schema, simulate_panel(&config).unwrap().0)
}

#[test]
fn stepwise_first_sweep_has_one_row_per_candidate() {
    let (schema, p) = covariate_panel(300, 5);
    let candidates = [
        CovariateCandidate::new("x", CovariateTarget::Initial),
        CovariateCandidate::new("w", CovariateTarget::Initial),
        CovariateCandidate::new("x", CovariateTarget::Transition),
    ];
    let opts = StepwiseOptions {
        fit: quick(),
        max_steps: Some(1),
    };
    let report = stepwise_covariates(&schema, &p, 2, &candidates, &opts).unwrap();
    let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["M2", "M2+x@initial", "M2+w@initial", "M2+x@transition"]);
    let g: Vec<usize> = report.rows.iter().map(|r| r.g).collect();
    let base = count_free_params(&ModelSpec::logit(2, &[], &[]), &schema, 4);
    assert_eq!(g, [base, base + 1, base + 1, base + 2]);
    assert_eq!(report.accepted, ["M2+x@initial"]);
}

#[test]
fn stepwise_rejects_unknown_covariates() {
    let (schema, p) = covariate_panel(30, 6);
    let bad = [CovariateCandidate::new("nope", CovariateTarget::Both)];
    assert!(stepwise_covariates(&schema, &p, 2, &bad, &StepwiseOptions::default()).is_err());
}
