use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CovariateKind, GradeMergeMap, ItemSchema, LongitudinalPanel, SubjectRecord};
use crate::error::{Error, Result};

/// Options for reading a long-format panel CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Accept empty response cells and absent (subject, time) rows.
    #[serde(default)]
    pub allow_missing: bool,
    /// Treat item cells as raw grades and apply each item's merge map.
    #[serde(default)]
    pub merge_grades: bool,
    /// Covariates to center at their sample mean after loading.
    #[serde(default)]
    pub center: Vec<String>,
}

pub fn load_panel(path: impl AsRef<Path>, schema: &ItemSchema, config: &IngestConfig) -> Result<LongitudinalPanel> {
    let file = File::open(path)?;
    read_panel(file, schema, config)
}

struct Row {
    responses: Vec<Option<u16>>,
    fixed: Vec<f64>,
    varying: Vec<Option<f64>>,
}

enum Column {
    Item(usize),
    Fixed(usize),
    Varying(usize),
}

pub fn read_panel<R: Read>(reader: R, schema: &ItemSchema, config: &IngestConfig) -> Result<LongitudinalPanel> {
    schema.validate()?;
    let merge = if config.merge_grades {
        Some(GradeMergeMap::from_schema(schema)?)
    } else {
        None
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "subject_id" || &headers[1] != "time" {
        return Err(Error::SchemaMismatch("header must start with `subject_id,time`".into()));
    }

    let fixed_names = schema.covariate_names(CovariateKind::Fixed);
    let varying_names = schema.covariate_names(CovariateKind::Varying);
    let mut columns = Vec::with_capacity(headers.len() - 2);
    let mut present = vec![false; schema.n_items() + schema.covariates.len()];
    for name in headers.iter().skip(2) {
        let col = if let Some(j) = schema.item_index(name) {
            present[j] = true;
            Column::Item(j)
        } else if let Some(c) = fixed_names.iter().position(|n| n == name) {
            Column::Fixed(c)
        } else if let Some(c) = varying_names.iter().position(|n| n == name) {
            Column::Varying(c)
        } else {
            return Err(Error::SchemaMismatch(format!("unexpected column `{name}`")));
        };
        if let Column::Fixed(_) | Column::Varying(_) = col {
            let k = schema.covariates.iter().position(|c| c.name == name).unwrap();
            if present[schema.n_items() + k] {
                return Err(Error::SchemaMismatch(format!("duplicate column `{name}`")));
            }
            present[schema.n_items() + k] = true;
        }
        columns.push(col);
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        let name = if missing < schema.n_items() {
            &schema.items[missing].name
        } else {
            &schema.covariates[missing - schema.n_items()].name
        };
        return Err(Error::SchemaMismatch(format!("missing column `{name}`")));
    }

    // subject -> time -> row
    let mut subjects: BTreeMap<String, BTreeMap<usize, Row>> = BTreeMap::new();
    let mut max_time = 0usize;
    for record in rdr.records() {
        let record = record?;
        let subject = record[0].to_string();
        if subject.is_empty() {
            return Err(Error::SchemaMismatch("empty subject_id".into()));
        }
        let time: usize = record[1].parse().ok().filter(|&t| t >= 1).ok_or_else(|| {
            Error::SchemaMismatch(format!(
                "subject {subject}: time `{}` is not a positive integer",
                &record[1]
            ))
        })?;
        max_time = max_time.max(time);

        let mut row = Row {
            responses: vec![None; schema.n_items()],
            fixed: vec![f64::NAN; fixed_names.len()],
            varying: vec![None; varying_names.len()],
        };
        for (cell, col) in record.iter().skip(2).zip(&columns) {
            match *col {
                Column::Item(j) => {
                    if cell.is_empty() {
                        if !config.allow_missing {
                            return Err(Error::MissingObservation { subject, time });
                        }
                        continue;
                    }
                    let item = &schema.items[j];
                    let raw: i64 = cell.parse().map_err(|_| {
                        Error::SchemaMismatch(format!(
                            "subject {subject} time {time}: `{cell}` is not an integer code for `{}`",
                            item.name
                        ))
                    })?;
                    let code = match &merge {
                        Some(m) => m.apply(j, &item.name, raw)?,
                        None => raw,
                    };
                    if code < 0 || code as usize >= item.n_categories() {
                        return Err(Error::InvalidCategory {
                            item: item.name.clone(),
                            subject,
                            time,
                            code,
                            n_categories: item.n_categories(),
                        });
                    }
                    row.responses[j] = Some(code as u16);
                }
                Column::Fixed(c) => {
                    row.fixed[c] = parse_real(cell, &fixed_names[c], &subject, time)?;
                }
                Column::Varying(c) => {
                    if cell.is_empty() {
                        if !config.allow_missing {
                            return Err(Error::SchemaMismatch(format!(
                                "subject {subject} time {time}: empty value for `{}`",
                                varying_names[c]
                            )));
                        }
                        continue;
                    }
                    row.varying[c] = Some(parse_real(cell, &varying_names[c], &subject, time)?);
                }
            }
        }
        let times = subjects.entry(subject.clone()).or_default();
        if times.insert(time, row).is_some() {
            return Err(Error::DuplicateObservation { subject, time });
        }
    }
    if subjects.is_empty() {
        return Err(Error::Empty("panel file has no data rows".into()));
    }

    let n_times = max_time;
    let mut records = Vec::with_capacity(subjects.len());
    for (id, times) in subjects {
        let mut fixed: Option<Vec<f64>> = None;
        let mut responses = Vec::with_capacity(n_times);
        let mut varying = Vec::with_capacity(n_times);
        for t in 1..=n_times {
            match times.get(&t) {
                Some(row) => {
                    match &fixed {
                        None => fixed = Some(row.fixed.clone()),
                        Some(f) => {
                            if f.iter().zip(&row.fixed).any(|(a, b)| a.to_bits() != b.to_bits()) {
                                return Err(Error::SchemaMismatch(format!(
                                    "subject {id}: fixed covariate changes at time {t}"
                                )));
                            }
                        }
                    }
                    responses.push(row.responses.clone());
                    varying.push(row.varying.clone());
                }
                None => {
                    if !config.allow_missing {
                        return Err(Error::MissingObservation { subject: id, time: t });
                    }
                    responses.push(vec![None; schema.n_items()]);
                    varying.push(vec![None; varying_names.len()]);
                }
            }
        }
        records.push(SubjectRecord {
            id,
            responses,
            fixed: fixed.unwrap_or_default(),
            varying: if varying_names.is_empty() { Vec::new() } else { varying },
        });
    }

    let mut panel = LongitudinalPanel::from_records(schema, n_times, records)?;
    if !config.center.is_empty() {
        panel.center_covariates(&config.center)?;
    }
    Ok(panel)
}

fn parse_real(cell: &str, name: &str, subject: &str, time: usize) -> Result<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
        Error::SchemaMismatch(format!(
            "subject {subject} time {time}: `{cell}` is not a real value for `{name}`"
        ))
    })
}

/// Writes the panel in long format. Covariates use shortest round-trip
/// formatting so a write → read cycle is lossless.
pub fn write_panel<W: Write>(panel: &LongitudinalPanel, schema: &ItemSchema, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["subject_id".to_string(), "time".to_string()];
    header.extend(schema.items.iter().map(|i| i.name.clone()));
    header.extend(schema.covariates.iter().map(|c| c.name.clone()));
    wtr.write_record(&header)?;
    for s in panel.subjects() {
        for t in 0..panel.n_times() {
            let mut row = vec![s.id().to_string(), (t + 1).to_string()];
            row.extend(
                s.responses_at(t)
                    .iter()
                    .map(|r| r.map(|c| c.to_string()).unwrap_or_default()),
            );
            for cov in &schema.covariates {
                let v = s.covariate(&cov.name, t)?;
                row.push(v.map(|v| v.to_string()).unwrap_or_default());
            }
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
