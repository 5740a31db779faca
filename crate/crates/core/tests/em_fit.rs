//! EM estimation: closed-form cases, monotonicity, recovery, determinism.

mod common;

use common::{random_instance, InstanceShape};
use latent_markov::em::{em_step, fit, initialize, pooled_frequencies, FitOptions};
use latent_markov::model::{align_states, LatentParams, ModelSpec, Parameters};
use latent_markov::panel::{ItemSchema, LongitudinalPanel};
use latent_markov::simulate::{simulate_panel, SimConfig};
use latent_markov::total_loglik;

fn small_schema() -> ItemSchema {
    ItemSchema::from_labels(&[
        ("a", &["0", "1", "2"][..]),
        ("b", &["0", "1", "2"][..]),
        ("c", &["0", "1"][..]),
        ("d", &["0", "1"][..]),
    ])
    .unwrap()
}

fn two_state_truth() -> Parameters {
    Parameters {
        phi: vec![
            vec![
                vec![0.8, 0.15, 0.05],
                vec![0.7, 0.2, 0.1],
                vec![0.9, 0.1],
                vec![0.85, 0.15],
            ],
            vec![
                vec![0.1, 0.3, 0.6],
                vec![0.15, 0.25, 0.6],
                vec![0.2, 0.8],
                vec![0.3, 0.7],
            ],
        ],
        latent: LatentParams::Unrestricted {
            delta_raw: vec![0.6, 0.4],
            tau_raw: vec![vec![vec![0.85, 0.15], vec![0.2, 0.8]]; 5],
        },
    }
}

fn simulate_two_state(n: usize, seed: u64) -> LongitudinalPanel {
    let config = SimConfig {
        params: two_state_truth(),
        spec: ModelSpec::unrestricted(2),
        schema: small_schema(),
        n_subjects: n,
        n_times: 6,
        covariates: vec![],
        seed,
    };
    simulate_panel(&config).unwrap().0
}

fn analytic_single_state_loglik(panel: &LongitudinalPanel) -> f64 {
    let pooled = pooled_frequencies(panel);
    let mut ll = 0.0;
    for s in panel.subjects() {
        for t in 0..panel.n_times() {
            for (j, y) in s.responses_at(t).iter().enumerate() {
                if let Some(y) = y {
                    ll += pooled[j][*y as usize].ln();
                }
            }
        }
    }
    ll
}

#[test]
fn single_state_fit_is_pooled_multinomial() {
    let panel = simulate_two_state(200, 1);
    let schema = small_schema();
    let res = fit(&ModelSpec::unrestricted(1), &schema, &panel, &FitOptions::default()).unwrap();
    assert_eq!(res.params.phi[0], pooled_frequencies(&panel));
    let expected = analytic_single_state_loglik(&panel);
    assert!((res.loglik - expected).abs() <= 1e-10 * expected.abs());
    assert_eq!(res.g, 6);
}

#[test]
fn single_state_step_lands_on_pooled_frequencies() {
    let panel = simulate_two_state(100, 2);
    let schema = small_schema();
    let spec = ModelSpec::unrestricted(1);
    let start = Parameters {
        phi: vec![vec![
            vec![0.2, 0.2, 0.6],
            vec![0.5, 0.25, 0.25],
            vec![0.1, 0.9],
            vec![0.5, 0.5],
        ]],
        latent: LatentParams::Unrestricted {
            delta_raw: vec![1.0],
            tau_raw: vec![vec![vec![1.0]]; 5],
        },
    };
    let (next, ll) = em_step(&start, &spec, &schema, &panel, &FitOptions::default()).unwrap();
    assert_eq!(next.phi[0], pooled_frequencies(&panel));
    let expected = analytic_single_state_loglik(&panel);
    assert!((ll - expected).abs() <= 1e-10 * expected.abs());
}

#[test]
fn em_steps_never_decrease_the_loglik() {
    let opts = FitOptions::default();
    for seed in 0..20 {
        let inst = random_instance(
            seed,
            &InstanceShape {
                n_subjects: 25,
                ..Default::default()
            },
        );
        let mut params = initialize(&inst.spec, &inst.schema, &inst.panel, 1, seed).unwrap();
        let mut ll = total_loglik(&params, &inst.spec, &inst.panel).unwrap();
        for _ in 0..30 {
            let (next, next_ll) = em_step(&params, &inst.spec, &inst.schema, &inst.panel, &opts).unwrap();
            assert!(next_ll >= ll - 1e-8, "seed {seed}: {ll} -> {next_ll}");
            params = next;
            ll = next_ll;
        }
    }
}

#[test]
fn two_hundred_steps_recover_emissions() {
    let panel = simulate_two_state(500, 3);
    let schema = small_schema();
    let spec = ModelSpec::unrestricted(2);
    let opts = FitOptions::default();
    let mut params = initialize(&spec, &schema, &panel, 0, 0).unwrap();
    for _ in 0..200 {
        params = em_step(&params, &spec, &schema, &panel, &opts).unwrap().0;
    }
    let (_, err) = align_states(&params, &two_state_truth());
    assert!(err <= 0.05, "max emission error {err}");
}

#[test]
fn stationary_point_is_a_fixed_point() {
    let panel = simulate_two_state(60, 4);
    let schema = small_schema();
    let spec = ModelSpec::unrestricted(2);
    let opts = FitOptions::default();
    let mut params = initialize(&spec, &schema, &panel, 0, 0).unwrap();
    let mut ll = f64::NEG_INFINITY;
    let mut change = f64::INFINITY;
    for _ in 0..5000 {
        let (next, next_ll) = em_step(&params, &spec, &schema, &panel, &opts).unwrap();
        change = (next_ll - ll).abs();
        params = next;
        ll = next_ll;
        if change < 1e-12 {
            break;
        }
    }
    assert!(change < 1e-10, "loglik still moving by {change}");
    let (_, again) = em_step(&params, &spec, &schema, &panel, &opts).unwrap();
    assert!((again - ll).abs() < 1e-10);
}

#[test]
fn unreachable_state_gets_pooled_emissions() {
    let panel = simulate_two_state(80, 5);
    let schema = small_schema();
    let spec = ModelSpec::unrestricted(3);
    let mut tau = vec![vec![0.7, 0.3, 0.0], vec![0.3, 0.7, 0.0], vec![0.3, 0.3, 0.4]];
    tau[2] = vec![0.3, 0.3, 0.4];
    let mut phi = two_state_truth().phi;
    phi.push(vec![
        vec![1.0 / 3.0; 3],
        vec![1.0 / 3.0; 3],
        vec![0.5, 0.5],
        vec![0.5, 0.5],
    ]);
    let params = Parameters {
        phi,
        latent: LatentParams::Unrestricted {
            delta_raw: vec![0.5, 0.5, 0.0],
            tau_raw: vec![tau; 5],
        },
    };
    let (next, _) = em_step(&params, &spec, &schema, &panel, &FitOptions::default()).unwrap();
    assert_eq!(next.phi[2], pooled_frequencies(&panel));
}

#[test]
fn fit_is_reproducible_across_thread_counts() {
    let panel = simulate_two_state(150, 6);
    let schema = small_schema();
    let spec = ModelSpec::logit(2, &[], &[]);
    let opts = FitOptions {
        n_starts: 3,
        seed: 99,
        ..FitOptions::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit(&spec, &schema, &panel, &opts).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    for s in &a.starts {
        assert!(s.trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
    }
    assert_eq!(a.starts.len(), 3);
}

#[test]
fn canonical_order_is_decreasing_initial_prevalence() {
    let panel = simulate_two_state(300, 7);
    let res = fit(
        &ModelSpec::unrestricted(2),
        &small_schema(),
        &panel,
        &FitOptions {
            n_starts: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let delta = res.params.initial(&[]).unwrap();
    assert!(delta[0] >= delta[1]);
    let (aic, bic) = latent_markov::information_criteria(res.loglik, res.g, 300);
    assert_eq!((aic, bic), (res.aic, res.bic));
}
