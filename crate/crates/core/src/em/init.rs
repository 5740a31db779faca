use crate::error::{Error, Result};
use crate::model::link::{beta_from_probs, gamma_from_probs};
use crate::model::{LatentParams, ModelSpec, Parameters};
use crate::panel::{category_frequencies, ItemSchema, LongitudinalPanel};
use crate::rng::{dirichlet, stream, DOMAIN_EM_START};

/// Diagonal of the starting transition matrices.
pub const INITIAL_STAY_PROB: f64 = 0.8;
/// Weight of the random component in seeded starts.
const RANDOM_MIX: f64 = 0.5;

/// Pooled category frequencies per item over all subjects and times.
/// Items with no observed response get a uniform vector.
pub fn pooled_frequencies(panel: &LongitudinalPanel) -> Vec<Vec<f64>> {
    category_frequencies(panel)
        .items
        .iter()
        .map(|item| {
            let c = item.labels.len();
            let mut totals = vec![0usize; c];
            for counts in &item.counts {
                for (acc, n) in totals.iter_mut().zip(counts) {
                    *acc += n;
                }
            }
            let n: usize = totals.iter().sum();
            if n == 0 {
                vec![1.0 / c as f64; c]
            } else {
                totals.iter().map(|&v| v as f64 / n as f64).collect()
            }
        })
        .collect()
}

fn ramped(pooled: &[f64], u: usize, k: usize) -> Vec<f64> {
    let c = pooled.len();
    let half_k = (k as f64 - 1.0) / 2.0;
    let r = if k > 1 { (u as f64 - half_k) / half_k } else { 0.0 };
    if r == 0.0 {
        return pooled.to_vec();
    }
    let half_c = (c as f64 - 1.0) / 2.0;
    let mut out: Vec<f64> = pooled
        .iter()
        .enumerate()
        .map(|(y, &f)| f * (r * (y as f64 - half_c) / half_c).exp())
        .collect();
    crate::numeric::normalize(&mut out);
    out
}

fn base_transition(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    if k == 1 {
                        1.0
                    } else if a == b {
                        INITIAL_STAY_PROB
                    } else {
                        (1.0 - INITIAL_STAY_PROB) / (k - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

fn mix(base: &[f64], random: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = base
        .iter()
        .zip(random)
        .map(|(b, r)| (1.0 - RANDOM_MIX) * b + RANDOM_MIX * r)
        .collect();
    crate::numeric::normalize(&mut v);
    v
}

/// Starting parameters for EM start `start_index`.
///
/// Start 0 is deterministic: emissions are the pooled category frequencies
/// tilted by a per-state ramp (low states toward low categories), the initial
/// distribution is uniform, and transitions stay with probability 0.8. Later
/// starts mix those values 50/50 with symmetric Dirichlet draws from the
/// start's own random stream.
pub fn initialize(
    spec: &ModelSpec,
    schema: &ItemSchema,
    panel: &LongitudinalPanel,
    start_index: usize,
    seed: u64,
) -> Result<Parameters> {
    spec.validate_for_panel(panel)?;
    if schema.n_categories() != panel.n_categories() {
        return Err(Error::SchemaMismatch("schema and panel disagree on items".into()));
    }
    let k = spec.k;
    let pooled = pooled_frequencies(panel);
    let mut delta = vec![1.0 / k as f64; k];
    let mut taus = vec![base_transition(k); panel.n_times() - 1];
    let mut phi: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|u| pooled.iter().map(|f| ramped(f, u, k)).collect())
        .collect();

    if start_index > 0 {
        let mut rng = stream(seed, DOMAIN_EM_START, start_index as u64);
        for rows in phi.iter_mut() {
            for (row, base) in rows.iter_mut().zip(&pooled) {
                *row = mix(base, &dirichlet(&mut rng, base.len(), 1.0));
            }
        }
        delta = mix(&delta, &dirichlet(&mut rng, k, 1.0));
        let base = base_transition(k);
        let shared: Vec<Vec<f64>> = base.iter().map(|r| mix(r, &dirichlet(&mut rng, k, 1.0))).collect();
        if spec.is_unrestricted() {
            for tau in taus.iter_mut() {
                *tau = base.iter().map(|r| mix(r, &dirichlet(&mut rng, k, 1.0))).collect();
            }
        } else {
            taus = vec![shared; taus.len()];
        }
    }

    let latent = if spec.is_unrestricted() {
        LatentParams::Unrestricted {
            delta_raw: delta,
            tau_raw: taus,
        }
    } else {
        let tau = taus.first().cloned().unwrap_or_else(|| base_transition(k));
        LatentParams::Logit {
            beta: beta_from_probs(&delta, spec.init_covariates.len()),
            gamma: gamma_from_probs(&tau, spec.trans_covariates.len()),
        }
    };
    Ok(Parameters { phi, latent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::SubjectRecord;

    fn panel() -> (ItemSchema, LongitudinalPanel) {
        let schema = ItemSchema::from_labels(&[("a", &["0", "1", "2"][..]), ("b", &["0", "1"][..])]).unwrap();
        let records = (0..6)
            .map(|i| SubjectRecord {
                id: i.to_string(),
                responses: (0..3)
                    .map(|t| vec![Some(((i + t) % 3) as u16), Some((i % 2) as u16)])
                    .collect(),
                fixed: vec![],
                varying: vec![],
            })
            .collect();
        let panel = LongitudinalPanel::from_records(&schema, 3, records).unwrap();
        (schema, panel)
    }

    #[test]
    fn start_zero_is_deterministic() {
        let (schema, panel) = panel();
        let spec = ModelSpec::logit(3, &[], &[]);
        let a = initialize(&spec, &schema, &panel, 0, 1).unwrap();
        let b = initialize(&spec, &schema, &panel, 0, 999).unwrap();
        assert_eq!(a, b);
        a.validate(&spec, &schema, 3).unwrap();
    }

    #[test]
    fn single_state_uses_pooled_frequencies() {
        let (schema, panel) = panel();
        let p = initialize(&ModelSpec::unrestricted(1), &schema, &panel, 0, 0).unwrap();
        assert_eq!(p.phi[0], pooled_frequencies(&panel));
        assert_eq!(p.phi[0][1], vec![0.5, 0.5]);
    }

    #[test]
    fn seeded_starts_differ_and_validate() {
        let (schema, panel) = panel();
        let spec = ModelSpec::unrestricted(2);
        let a = initialize(&spec, &schema, &panel, 1, 5).unwrap();
        let b = initialize(&spec, &schema, &panel, 2, 5).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, initialize(&spec, &schema, &panel, 1, 5).unwrap());
        a.validate(&spec, &schema, 3).unwrap();
        b.validate(&spec, &schema, 3).unwrap();
    }
}
