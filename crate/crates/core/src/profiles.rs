//! Longitudinal latent probability profiles, local decoding and cohort
//! summaries.
//!
//! States are 0-based in this API and written 1-based in the CSV exports.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{check_compatible, SubjectDesign, SubjectLattice};
use crate::model::{ModelSpec, Parameters};
use crate::numeric::{argmax, tree_sum};
use crate::panel::LongitudinalPanel;

/// Posterior state probabilities of one subject at every time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentProfile {
    pub subject_id: String,
    /// `probabilities[t][u] = P(U^(t) = u | ỹ_i, x̃_i)`.
    pub probabilities: Vec<Vec<f64>>,
    /// Locally decoded state per time point.
    pub decoded: Vec<usize>,
}

impl LatentProfile {
    pub fn n_times(&self) -> usize {
        self.probabilities.len()
    }

    pub fn k(&self) -> usize {
        self.probabilities.first().map_or(0, Vec::len)
    }
}

/// Profiles of every subject in the panel, in stored subject order.
///
/// Pass the fitted parameters (`FitResult::params` or `ModelFile::params`).
/// Each profile depends only on its own subject's data.
pub fn build_profiles(params: &Parameters, spec: &ModelSpec, panel: &LongitudinalPanel) -> Result<Vec<LatentProfile>> {
    check_compatible(params, spec, panel)?;
    (0..panel.n_subjects())
        .into_par_iter()
        .map(|i| {
            let s = panel.subject(i);
            let probabilities = SubjectLattice::compute(params, spec, &s)?.posteriors();
            let decoded = local_decode(&probabilities)?;
            Ok(LatentProfile {
                subject_id: s.id().to_string(),
                probabilities,
                decoded,
            })
        })
        .collect()
}

/// Per-time argmax of a `T × k` profile matrix; ties go to the lowest state.
pub fn local_decode(matrix: &[Vec<f64>]) -> Result<Vec<usize>> {
    if matrix.is_empty() {
        return Err(Error::Empty("profile matrix has no rows".into()));
    }
    matrix
        .iter()
        .enumerate()
        .map(|(t, row)| {
            if row.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidConfig(format!("profile row {} contains NaN", t + 1)));
            }
            argmax(row).ok_or_else(|| Error::Empty(format!("profile row {} has no states", t + 1)))
        })
        .collect()
}

/// `k × T` matrix whose entry `(u, t)` is the mean over subjects of
/// `P(U^(t) = u | data)`.
pub fn prevalence_over_time(profiles: &[LatentProfile]) -> Result<Vec<Vec<f64>>> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::Empty("no profiles to average".into()))?;
    let (n_times, k) = (first.n_times(), first.k());
    for p in profiles {
        if p.n_times() != n_times || p.probabilities.iter().any(|r| r.len() != k) {
            return Err(Error::ModelMismatch(format!(
                "profile of subject {} does not have {n_times} rows of {k} states",
                p.subject_id
            )));
        }
    }
    let n = profiles.len() as f64;
    Ok((0..k)
        .map(|u| {
            (0..n_times)
                .map(|t| {
                    let vals: Vec<f64> = profiles.iter().map(|p| p.probabilities[t][u]).collect();
                    tree_sum(&vals) / n
                })
                .collect()
        })
        .collect())
}

/// Mean over subjects of the initial distribution evaluated at each
/// subject's time-1 covariates. Models without initial covariates return the
/// shared initial distribution.
pub fn average_initial(params: &Parameters, spec: &ModelSpec, panel: &LongitudinalPanel) -> Result<Vec<f64>> {
    check_compatible(params, spec, panel)?;
    if spec.init_covariates.is_empty() {
        return params.initial(&[]);
    }
    if panel.n_subjects() == 0 {
        return Err(Error::Empty("panel has no subjects".into()));
    }
    let deltas: Vec<Vec<f64>> = panel
        .subjects()
        .map(|s| params.initial(&SubjectDesign::build(spec, &s)?.init_x))
        .collect::<Result<_>>()?;
    let n = deltas.len() as f64;
    Ok((0..spec.k)
        .map(|u| {
            let vals: Vec<f64> = deltas.iter().map(|d| d[u]).collect();
            tree_sum(&vals) / n
        })
        .collect())
}

/// `subject,time,state,probability` (time and state 1-based).
pub fn write_profiles_csv<W: Write>(profiles: &[LatentProfile], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["subject", "time", "state", "probability"])?;
    for p in profiles {
        for (t, row) in p.probabilities.iter().enumerate() {
            for (u, v) in row.iter().enumerate() {
                wtr.write_record([
                    p.subject_id.clone(),
                    (t + 1).to_string(),
                    (u + 1).to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `subject,time,state` (time and state 1-based).
pub fn write_decoded_csv<W: Write>(profiles: &[LatentProfile], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["subject", "time", "state"])?;
    for p in profiles {
        for (t, u) in p.decoded.iter().enumerate() {
            wtr.write_record([p.subject_id.clone(), (t + 1).to_string(), (u + 1).to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `state,time,value` from a `k × T` prevalence matrix, six decimals.
pub fn write_prevalence_csv<W: Write>(prevalence: &[Vec<f64>], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["state", "time", "value"])?;
    for (u, row) in prevalence.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            wtr.write_record([(u + 1).to_string(), (t + 1).to_string(), format!("{v:.6}")])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `state,value` for an average initial distribution, six decimals.
pub fn write_initial_csv<W: Write>(initial: &[f64], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["state", "value"])?;
    for (u, v) in initial.iter().enumerate() {
        wtr.write_record([(u + 1).to_string(), format!("{v:.6}")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Formats a decoded sequence 1-based, e.g. `(3,3,4,4,4,4)`.
pub fn format_sequence(decoded: &[usize]) -> String {
    let parts: Vec<String> = decoded.iter().map(|u| (u + 1).to_string()).collect();
    format!("({})", parts.join(","))
}
