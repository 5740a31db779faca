//! Longitudinal categorical panels: item schema, CSV ingestion and
//! per-time category frequencies.

mod csv_io;
mod freq;
mod schema;

use std::cmp::Ordering;
use std::collections::HashSet;

pub use csv_io::{load_panel, read_panel, write_panel, IngestConfig};
pub use freq::{category_frequencies, FrequencyTable, ItemFrequencies};
pub use schema::{
    merge_grade, CovariateDef, CovariateKind, GradeMergeMap, ItemClass, ItemDef, ItemSchema, MAX_RAW_GRADE,
};

use crate::error::{Error, Result};

/// Response category code; `None` marks a missing response.
pub type Response = Option<u16>;

/// Subjects × times × items responses with fixed and time-varying covariates.
///
/// Subjects are kept in ascending id order (numeric ids compare numerically).
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalPanel {
    subject_ids: Vec<String>,
    n_times: usize,
    item_names: Vec<String>,
    n_categories: Vec<usize>,
    /// `[subject][time][item]`
    responses: Vec<Response>,
    fixed_names: Vec<String>,
    /// `[subject][fixed covariate]`
    fixed: Vec<f64>,
    varying_names: Vec<String>,
    /// `[subject][time][varying covariate]`
    varying: Vec<Option<f64>>,
    centering: Vec<(String, f64)>,
}

/// Raw per-subject record used to assemble a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// `[time][item]`
    pub responses: Vec<Vec<Response>>,
    /// Values in the schema's fixed-covariate order.
    pub fixed: Vec<f64>,
    /// `[time][varying covariate]` in the schema's varying-covariate order.
    pub varying: Vec<Vec<Option<f64>>>,
}

fn id_key(id: &str) -> (u8, i128, &str) {
    match id.parse::<i128>() {
        Ok(v) => (0, v, id),
        Err(_) => (1, 0, id),
    }
}

pub(crate) fn compare_ids(a: &str, b: &str) -> Ordering {
    id_key(a).cmp(&id_key(b))
}

impl LongitudinalPanel {
    /// Builds a panel from per-subject records, validating every invariant.
    pub fn from_records(schema: &ItemSchema, n_times: usize, mut records: Vec<SubjectRecord>) -> Result<Self> {
        schema.validate()?;
        if n_times == 0 {
            return Err(Error::Empty("panel needs at least one time point".into()));
        }
        if records.is_empty() {
            return Err(Error::Empty("panel needs at least one subject".into()));
        }
        records.sort_by(|a, b| compare_ids(&a.id, &b.id));
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate subject id `{}`", r.id)));
            }
        }

        let n_categories = schema.n_categories();
        let n_items = schema.n_items();
        let fixed_names = schema.covariate_names(CovariateKind::Fixed);
        let varying_names = schema.covariate_names(CovariateKind::Varying);
        let n = records.len();

        let mut responses = Vec::with_capacity(n * n_times * n_items);
        let mut fixed = Vec::with_capacity(n * fixed_names.len());
        let mut varying = Vec::with_capacity(n * n_times * varying_names.len());
        for r in &records {
            if r.responses.len() != n_times {
                return Err(Error::SchemaMismatch(format!(
                    "subject {} has {} time points, expected {n_times}",
                    r.id,
                    r.responses.len()
                )));
            }
            for (t, row) in r.responses.iter().enumerate() {
                if row.len() != n_items {
                    return Err(Error::SchemaMismatch(format!(
                        "subject {} time {} has {} items, expected {n_items}",
                        r.id,
                        t + 1,
                        row.len()
                    )));
                }
                for (j, resp) in row.iter().enumerate() {
                    if let Some(code) = *resp {
                        if code as usize >= n_categories[j] {
                            return Err(Error::InvalidCategory {
                                item: schema.items[j].name.clone(),
                                subject: r.id.clone(),
                                time: t + 1,
                                code: code as i64,
                                n_categories: n_categories[j],
                            });
                        }
                    }
                    responses.push(*resp);
                }
            }
            if r.fixed.len() != fixed_names.len() {
                return Err(Error::SchemaMismatch(format!(
                    "subject {} has {} fixed covariates, expected {}",
                    r.id,
                    r.fixed.len(),
                    fixed_names.len()
                )));
            }
            if r.fixed.iter().any(|v| !v.is_finite()) {
                return Err(Error::SchemaMismatch(format!(
                    "subject {} has a non-finite fixed covariate",
                    r.id
                )));
            }
            fixed.extend_from_slice(&r.fixed);
            if varying_names.is_empty() && r.varying.is_empty() {
                continue;
            }
            if r.varying.len() != n_times {
                return Err(Error::SchemaMismatch(format!(
                    "subject {} has varying covariates for {} time points, expected {n_times}",
                    r.id,
                    r.varying.len()
                )));
            }
            for row in &r.varying {
                if row.len() != varying_names.len() {
                    return Err(Error::SchemaMismatch(format!(
                        "subject {} has ragged varying covariates",
                        r.id
                    )));
                }
                if row.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::SchemaMismatch(format!(
                        "subject {} has a non-finite varying covariate",
                        r.id
                    )));
                }
                varying.extend_from_slice(row);
            }
        }

        Ok(Self {
            subject_ids: records.into_iter().map(|r| r.id).collect(),
            n_times,
            item_names: schema.items.iter().map(|i| i.name.clone()).collect(),
            n_categories,
            responses,
            fixed_names,
            fixed,
            varying_names,
            varying,
            centering: Vec::new(),
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn n_categories(&self) -> &[usize] {
        &self.n_categories
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn fixed_names(&self) -> &[String] {
        &self.fixed_names
    }

    pub fn varying_names(&self) -> &[String] {
        &self.varying_names
    }

    /// Covariates centered at ingest, with the subtracted mean.
    pub fn centering(&self) -> &[(String, f64)] {
        &self.centering
    }

    pub fn subject(&self, i: usize) -> SubjectView<'_> {
        assert!(i < self.n_subjects(), "subject index out of range");
        SubjectView { panel: self, index: i }
    }

    pub fn subjects(&self) -> impl ExactSizeIterator<Item = SubjectView<'_>> + '_ {
        (0..self.n_subjects()).map(move |i| SubjectView { panel: self, index: i })
    }

    pub fn has_covariate(&self, name: &str) -> bool {
        self.fixed_names.iter().any(|n| n == name) || self.varying_names.iter().any(|n| n == name)
    }

    pub fn has_missing(&self) -> bool {
        self.responses.iter().any(Option::is_none)
    }

    /// Back to per-subject records (in stored order).
    pub fn to_records(&self) -> Vec<SubjectRecord> {
        self.subjects().map(|s| s.to_record()).collect()
    }

    /// Panel restricted to the given subject indices.
    pub fn select_subjects(&self, schema: &ItemSchema, indices: &[usize]) -> Result<Self> {
        let records = indices.iter().map(|&i| self.subject(i).to_record()).collect();
        let mut panel = Self::from_records(schema, self.n_times, records)?;
        panel.centering = self.centering.clone();
        Ok(panel)
    }

    /// Subtracts the mean of each named covariate. Fixed covariates are
    /// averaged over subjects, varying ones over all present values.
    pub fn center_covariates(&mut self, names: &[String]) -> Result<()> {
        for name in names {
            let vals: Vec<f64> = if let Some(c) = self.fixed_names.iter().position(|n| n == name) {
                let p = self.fixed_names.len();
                (0..self.n_subjects()).map(|i| self.fixed[i * p + c]).collect()
            } else if let Some(c) = self.varying_names.iter().position(|n| n == name) {
                let p = self.varying_names.len();
                self.varying.iter().skip(c).step_by(p).flatten().copied().collect()
            } else {
                return Err(Error::SchemaMismatch(format!("unknown covariate `{name}`")));
            };
            if vals.is_empty() {
                return Err(Error::SchemaMismatch(format!(
                    "covariate `{name}` has no values to center"
                )));
            }
            let mean = crate::numeric::tree_sum(&vals) / vals.len() as f64;
            self.apply_centering(&[(name.clone(), mean)])?;
        }
        Ok(())
    }

    /// Subtracts the given constant from each named covariate, e.g. to
    /// reproduce the centering recorded with a fitted model.
    pub fn apply_centering(&mut self, centers: &[(String, f64)]) -> Result<()> {
        for (name, center) in centers {
            if let Some(c) = self.fixed_names.iter().position(|n| n == name) {
                let p = self.fixed_names.len();
                for i in 0..self.n_subjects() {
                    self.fixed[i * p + c] -= center;
                }
            } else if let Some(c) = self.varying_names.iter().position(|n| n == name) {
                let p = self.varying_names.len();
                for v in self.varying.iter_mut().skip(c).step_by(p).flatten() {
                    *v -= center;
                }
            } else {
                return Err(Error::SchemaMismatch(format!("unknown covariate `{name}`")));
            }
            self.centering.push((name.clone(), *center));
        }
        Ok(())
    }
}

/// Borrowed view of one subject's responses and covariates.
#[derive(Debug, Clone, Copy)]
pub struct SubjectView<'a> {
    panel: &'a LongitudinalPanel,
    index: usize,
}

impl<'a> SubjectView<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn id(&self) -> &'a str {
        &self.panel.subject_ids[self.index]
    }

    pub fn n_times(&self) -> usize {
        self.panel.n_times
    }

    /// Responses at time `t` (0-based), one per item.
    pub fn responses_at(&self, t: usize) -> &'a [Response] {
        let j = self.panel.n_items();
        let start = (self.index * self.panel.n_times + t) * j;
        &self.panel.responses[start..start + j]
    }

    /// Value of a covariate at time `t` (0-based). Fixed covariates ignore
    /// `t`. `Ok(None)` means a varying covariate is absent at that time.
    pub fn covariate(&self, name: &str, t: usize) -> Result<Option<f64>> {
        let p = &self.panel;
        if let Some(c) = p.fixed_names.iter().position(|n| n == name) {
            return Ok(Some(p.fixed[self.index * p.fixed_names.len() + c]));
        }
        if let Some(c) = p.varying_names.iter().position(|n| n == name) {
            let q = p.varying_names.len();
            return Ok(p.varying[(self.index * p.n_times + t) * q + c]);
        }
        Err(Error::InvalidSpec(format!("unknown covariate `{name}`")))
    }

    /// Covariate vector in `names` order at time `t`; absent values are errors.
    pub fn covariate_vector(&self, names: &[String], t: usize) -> Result<Vec<f64>> {
        names
            .iter()
            .map(|name| {
                self.covariate(name, t)?.ok_or_else(|| Error::MissingCovariate {
                    name: name.clone(),
                    subject: self.id().to_string(),
                    time: t + 1,
                })
            })
            .collect()
    }

    pub fn to_record(&self) -> SubjectRecord {
        let p = self.panel;
        let nf = p.fixed_names.len();
        let nv = p.varying_names.len();
        SubjectRecord {
            id: self.id().to_string(),
            responses: (0..p.n_times).map(|t| self.responses_at(t).to_vec()).collect(),
            fixed: p.fixed[self.index * nf..(self.index + 1) * nf].to_vec(),
            varying: if nv == 0 {
                Vec::new()
            } else {
                (0..p.n_times)
                    .map(|t| {
                        let s = (self.index * p.n_times + t) * nv;
                        p.varying[s..s + nv].to_vec()
                    })
                    .collect()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ItemSchema {
        ItemSchema::from_labels(&[("a", &["0", "1", "2"][..]), ("b", &["no", "yes"][..])])
            .unwrap()
            .with_covariate("age", CovariateKind::Fixed)
            .unwrap()
            .with_covariate("dose", CovariateKind::Varying)
            .unwrap()
    }

    fn record(id: &str, age: f64) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            responses: vec![vec![Some(0), Some(1)], vec![Some(2), None]],
            fixed: vec![age],
            varying: vec![vec![Some(1.0)], vec![Some(3.0)]],
        }
    }

    #[test]
    fn subjects_sorted_numerically() {
        let panel = LongitudinalPanel::from_records(
            &schema(),
            2,
            vec![record("10", 1.0), record("9", 2.0), record("b", 3.0)],
        )
        .unwrap();
        assert_eq!(panel.subject_ids(), ["9", "10", "b"]);
        assert_eq!(panel.subject(0).covariate("age", 0).unwrap(), Some(2.0));
        assert_eq!(panel.subject(1).covariate("dose", 1).unwrap(), Some(3.0));
        assert_eq!(panel.subject(2).responses_at(1), &[Some(2), None]);
    }

    #[test]
    fn rejects_out_of_range_code() {
        let mut r = record("1", 0.0);
        r.responses[0][1] = Some(2);
        let err = LongitudinalPanel::from_records(&schema(), 2, vec![r]).unwrap_err();
        assert!(matches!(err, Error::InvalidCategory { code: 2, .. }));
    }

    #[test]
    fn rejects_ragged_covariates() {
        let mut r = record("1", 0.0);
        r.varying[1] = vec![];
        let err = LongitudinalPanel::from_records(&schema(), 2, vec![r]).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn centering_subtracts_mean() {
        let mut panel =
            LongitudinalPanel::from_records(&schema(), 2, vec![record("1", 10.0), record("2", 20.0)]).unwrap();
        panel.center_covariates(&["age".into(), "dose".into()]).unwrap();
        assert_eq!(panel.subject(0).covariate("age", 0).unwrap(), Some(-5.0));
        assert_eq!(panel.subject(1).covariate("dose", 0).unwrap(), Some(-1.0));
        assert_eq!(panel.centering()[0], ("age".to_string(), 15.0));
    }

    #[test]
    fn missing_varying_covariate_is_reported() {
        let mut r = record("1", 0.0);
        r.varying[1][0] = None;
        let panel = LongitudinalPanel::from_records(&schema(), 2, vec![r]).unwrap();
        let err = panel.subject(0).covariate_vector(&["dose".into()], 1).unwrap_err();
        assert!(matches!(err, Error::MissingCovariate { time: 2, .. }));
    }
}
