//! Shared helpers for integration tests: a brute-force path-enumeration
//! oracle and random small problem generators.
#![allow(dead_code)]

use latent_markov::likelihood::SubjectDesign;
use latent_markov::model::{ModelSpec, Parameters};
use latent_markov::panel::{CovariateKind, ItemSchema, LongitudinalPanel, SubjectRecord, SubjectView};
use latent_markov::simulate::random_parameters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact quantities for one subject obtained by summing over all `k^T`
/// latent paths in linear space.
pub struct BruteForce {
    pub likelihood: f64,
    /// `[t][u]`
    pub posteriors: Vec<Vec<f64>>,
    /// `[t-1][a][b]` for transitions into time `t`
    pub pairwise: Vec<Vec<Vec<f64>>>,
}

pub fn brute_force(params: &Parameters, spec: &ModelSpec, subject: &SubjectView<'_>) -> BruteForce {
    let k = spec.k;
    let n_times = subject.n_times();
    let design = SubjectDesign::build(spec, subject).unwrap();
    let delta = params.initial(&design.init_x).unwrap();
    let taus: Vec<Vec<Vec<f64>>> = (1..n_times)
        .map(|t| params.transition(t, &design.trans_x[t - 1]).unwrap())
        .collect();
    let emission = |t: usize, u: usize| -> f64 {
        subject
            .responses_at(t)
            .iter()
            .enumerate()
            .filter_map(|(j, y)| y.map(|y| params.phi[u][j][y as usize]))
            .product()
    };

    let mut likelihood = 0.0;
    let mut posteriors = vec![vec![0.0; k]; n_times];
    let mut pairwise = vec![vec![vec![0.0; k]; k]; n_times.saturating_sub(1)];
    let total_paths = k.pow(n_times as u32);
    let mut path = vec![0usize; n_times];
    for code in 0..total_paths {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % k;
            c /= k;
        }
        let mut p = delta[path[0]] * emission(0, path[0]);
        for t in 1..n_times {
            p *= taus[t - 1][path[t - 1]][path[t]] * emission(t, path[t]);
        }
        likelihood += p;
        for t in 0..n_times {
            posteriors[t][path[t]] += p;
        }
        for t in 1..n_times {
            pairwise[t - 1][path[t - 1]][path[t]] += p;
        }
    }
    for row in posteriors.iter_mut() {
        for v in row.iter_mut() {
            *v /= likelihood;
        }
    }
    for m in pairwise.iter_mut() {
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v /= likelihood;
            }
        }
    }
    BruteForce {
        likelihood,
        posteriors,
        pairwise,
    }
}

/// A random small problem: schema, spec, parameters and panel.
pub struct Instance {
    pub schema: ItemSchema,
    pub spec: ModelSpec,
    pub params: Parameters,
    pub panel: LongitudinalPanel,
}

pub struct InstanceShape {
    pub max_k: usize,
    pub max_times: usize,
    pub max_items: usize,
    pub n_subjects: usize,
    pub missing_rate: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_k: 3,
            max_times: 4,
            max_items: 3,
            n_subjects: 3,
            missing_rate: 0.1,
        }
    }
}

/// Random instance: k, T, items and categories, transition structure,
/// covariates (one fixed `s`, one varying `z`) and parameters all drawn from
/// `seed`. Responses are uniform random codes with some cells missing.
pub fn random_instance(seed: u64, shape: &InstanceShape) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=shape.max_k);
    let n_times = rng.random_range(1..=shape.max_times);
    let n_items = rng.random_range(1..=shape.max_items);
    let labels: Vec<Vec<String>> = (0..n_items)
        .map(|_| {
            let c = rng.random_range(2..=4);
            (0..c).map(|y| y.to_string()).collect()
        })
        .collect();
    let items: Vec<(String, Vec<&str>)> = labels
        .iter()
        .enumerate()
        .map(|(j, l)| (format!("y{j}"), l.iter().map(String::as_str).collect()))
        .collect();
    let item_refs: Vec<(&str, &[&str])> = items.iter().map(|(n, l)| (n.as_str(), l.as_slice())).collect();
    let schema = ItemSchema::from_labels(&item_refs)
        .unwrap()
        .with_covariate("s", CovariateKind::Fixed)
        .unwrap()
        .with_covariate("z", CovariateKind::Varying)
        .unwrap();

    let spec = if rng.random_bool(0.4) {
        ModelSpec::unrestricted(k)
    } else {
        let init: Vec<&str> = ["s", "z"].into_iter().filter(|_| rng.random_bool(0.5)).collect();
        let trans: Vec<&str> = ["s", "z"].into_iter().filter(|_| rng.random_bool(0.5)).collect();
        ModelSpec::logit(k, &init, &trans)
    };
    let params = random_parameters(&spec, &schema, n_times, seed).unwrap();

    let records = (0..shape.n_subjects)
        .map(|i| {
            let responses = (0..n_times)
                .map(|_| {
                    labels
                        .iter()
                        .map(|l| {
                            if rng.random_bool(shape.missing_rate) {
                                None
                            } else {
                                Some(rng.random_range(0..l.len()) as u16)
                            }
                        })
                        .collect()
                })
                .collect();
            SubjectRecord {
                id: (i + 1).to_string(),
                responses,
                fixed: vec![rng.random_range(-2.0..2.0)],
                varying: (0..n_times).map(|_| vec![Some(rng.random_range(-2.0..2.0))]).collect(),
            }
        })
        .collect();
    let panel = LongitudinalPanel::from_records(&schema, n_times, records).unwrap();
    Instance {
        schema,
        spec,
        params,
        panel,
    }
}

/// Maximum absolute difference between nested vectors of equal shape.
pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
