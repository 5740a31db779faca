//! Synthetic panels drawn from a fully specified model.
//!
//! Each subject draws from its own random stream keyed by `(seed, subject
//! index)`, so a panel is bit-identical for a given seed however the work is
//! scheduled across threads.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentParams, ModelSpec, Parameters};
use crate::panel::{compare_ids, CovariateDef, CovariateKind, ItemDef, ItemSchema, LongitudinalPanel, SubjectRecord};
use crate::rng::{dirichlet, stream, DOMAIN_PARAMETERS, DOMAIN_SIMULATION};

/// Distribution family for a simulated covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum CovariateDistribution {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl CovariateDistribution {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { value } => value.is_finite(),
            Self::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Self::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            Self::Bernoulli { p } => (0.0..=1.0).contains(&p),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid covariate distribution {self}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Uniform { low, high } => Uniform::new(low, high).expect("validated").sample(rng),
            Self::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            Self::Bernoulli { p } => {
                if Bernoulli::new(p).expect("validated").sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for CovariateDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { value } => write!(f, "constant({value})"),
            Self::Uniform { low, high } => write!(f, "uniform({low},{high})"),
            Self::Normal { mean, sd } => write!(f, "normal({mean},{sd})"),
            Self::Bernoulli { p } => write!(f, "bernoulli({p})"),
        }
    }
}

impl FromStr for CovariateDistribution {
    type Err = Error;

    /// Parses `constant(c)`, `uniform(a,b)`, `normal(mu,sd)`, `bernoulli(p)`
    /// or a bare number (a constant).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(value) = s.parse::<f64>() {
            let d = Self::Constant { value };
            d.validate()?;
            return Ok(d);
        }
        let bad = || Error::InvalidConfig(format!("cannot parse covariate distribution `{s}`"));
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let family = s[..open].trim().to_ascii_lowercase();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let d = match (family.as_str(), args.as_slice()) {
            ("constant", [value]) => Self::Constant { value: *value },
            ("uniform", [low, high]) => Self::Uniform { low: *low, high: *high },
            ("normal", [mean, sd]) => Self::Normal { mean: *mean, sd: *sd },
            ("bernoulli", [p]) => Self::Bernoulli { p: *p },
            _ => return Err(bad()),
        };
        d.validate()?;
        Ok(d)
    }
}

/// Generator for one covariate. Fixed covariates are drawn once per
/// subject; varying ones independently at every time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGenerator {
    pub name: String,
    pub kind: CovariateKind,
    pub distribution: CovariateDistribution,
}

impl CovariateGenerator {
    pub fn new(name: &str, kind: CovariateKind, distribution: CovariateDistribution) -> Self {
        Self {
            name: name.to_string(),
            kind,
            distribution,
        }
    }
}

/// Pre-generated covariate values that replace generators, for designs the
/// built-in distribution families cannot express.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub covariates: Vec<CovariateDef>,
    /// Subject ids, one per simulated subject.
    pub ids: Vec<String>,
    /// `values[subject][time][c]` in `covariates` order; fixed covariates
    /// repeat the same value at every time point.
    pub values: Vec<Vec<Vec<f64>>>,
}

impl CovariateTable {
    pub fn n_subjects(&self) -> usize {
        self.ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let n_times = self.n_times();
        if self.ids.is_empty() || n_times == 0 {
            return Err(Error::Empty("covariate table has no subjects or time points".into()));
        }
        if self.values.len() != self.ids.len() {
            return Err(Error::SchemaMismatch(
                "covariate table ids and rows differ in length".into(),
            ));
        }
        for (id, rows) in self.ids.iter().zip(&self.values) {
            if rows.len() != n_times || rows.iter().any(|r| r.len() != self.covariates.len()) {
                return Err(Error::SchemaMismatch(format!(
                    "covariate table is ragged for subject {id}"
                )));
            }
            for (c, def) in self.covariates.iter().enumerate() {
                if rows.iter().any(|r| !r[c].is_finite()) {
                    return Err(Error::SchemaMismatch(format!(
                        "non-finite `{}` for subject {id}",
                        def.name
                    )));
                }
                if def.kind == CovariateKind::Fixed && rows.iter().any(|r| r[c] != rows[0][c]) {
                    return Err(Error::SchemaMismatch(format!(
                        "fixed covariate `{}` changes over time for subject {id}",
                        def.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads a covariate table from a long-format CSV with columns
/// `subject_id,time,<covariates...>`, one row per subject and time `1..=T`.
///
/// A covariate's kind comes from `declared` when listed there; otherwise it
/// is fixed if constant over time for every subject and varying if not.
/// Subjects are ordered like panel subjects (numeric ids numerically).
pub fn read_covariate_table<R: Read>(reader: R, declared: &[CovariateDef]) -> Result<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("subject_id") || headers.get(1) != Some("time") || headers.len() < 3 {
        return Err(Error::SchemaMismatch(
            "covariate table header must be `subject_id,time,<covariates...>`".into(),
        ));
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut rows: std::collections::BTreeMap<String, Vec<(usize, Vec<f64>)>> = Default::default();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let bad = |what: &str| Error::SchemaMismatch(format!("covariate table row {}: {what}", line + 2));
        let id = record
            .get(0)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| bad("missing subject_id"))?;
        let t: usize = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .filter(|&t| t >= 1)
            .ok_or_else(|| bad("bad time"))?;
        let values = (2..headers.len())
            .map(|c| {
                record
                    .get(c)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| bad("non-numeric value"))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.entry(id.to_string()).or_default().push((t, values));
    }
    let mut ids: Vec<String> = rows.keys().cloned().collect();
    ids.sort_by(|a, b| compare_ids(a, b));
    let mut values = Vec::with_capacity(ids.len());
    for id in &ids {
        let mut r = rows.remove(id).expect("key exists");
        r.sort_by_key(|(t, _)| *t);
        if r.iter().enumerate().any(|(i, (t, _))| *t != i + 1) {
            return Err(Error::SchemaMismatch(format!(
                "covariate table times for subject {id} are not 1..T without gaps or duplicates"
            )));
        }
        values.push(r.into_iter().map(|(_, v)| v).collect::<Vec<_>>());
    }
    let covariates = names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let kind = declared.iter().find(|d| &d.name == name).map_or_else(
                || {
                    let constant = values
                        .iter()
                        .all(|rows: &Vec<Vec<f64>>| rows.iter().all(|r| r[c] == rows[0][c]));
                    if constant {
                        CovariateKind::Fixed
                    } else {
                        CovariateKind::Varying
                    }
                },
                |d| d.kind,
            );
            CovariateDef {
                name: name.clone(),
                kind,
            }
        })
        .collect();
    let table = CovariateTable {
        covariates,
        ids,
        values,
    };
    table.validate()?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: Parameters,
    pub spec: ModelSpec,
    /// Supplies the items; covariates of the simulated panel come from
    /// `covariates`.
    pub schema: ItemSchema,
    pub n_subjects: usize,
    pub n_times: usize,
    pub covariates: Vec<CovariateGenerator>,
    pub seed: u64,
}

impl SimConfig {
    /// Schema of the simulated panel: the configured items (without
    /// grade-merge maps) plus one covariate per generator.
    pub fn output_schema(&self) -> Result<ItemSchema> {
        self.output_schema_with(None)
    }

    /// [`SimConfig::output_schema`] plus the covariates of `table`.
    ///
    /// Simulated responses are already category codes, so the items carry
    /// no grade-merge maps.
    pub fn output_schema_with(&self, table: Option<&CovariateTable>) -> Result<ItemSchema> {
        ItemSchema::new(
            self.schema
                .items
                .iter()
                .map(|item| ItemDef {
                    class: None,
                    merge: None,
                    ..item.clone()
                })
                .collect(),
            self.covariates
                .iter()
                .map(|g| CovariateDef {
                    name: g.name.clone(),
                    kind: g.kind,
                })
                .chain(table.into_iter().flat_map(|t| t.covariates.iter().cloned()))
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(None)
    }

    fn validate_with(&self, table: Option<&CovariateTable>) -> Result<()> {
        self.spec.validate()?;
        if self.n_subjects == 0 {
            return Err(Error::InvalidConfig("n_subjects must be at least 1".into()));
        }
        if self.n_times == 0 {
            return Err(Error::InvalidConfig("n_times must be at least 1".into()));
        }
        let referenced: BTreeSet<&str> = self
            .spec
            .init_covariates
            .iter()
            .chain(&self.spec.trans_covariates)
            .map(String::as_str)
            .collect();
        if let Some(t) = table {
            t.validate()?;
            if t.n_subjects() != self.n_subjects || t.n_times() != self.n_times {
                return Err(Error::InvalidConfig(format!(
                    "covariate table has {} subjects x {} times, simulation asks for {} x {}",
                    t.n_subjects(),
                    t.n_times(),
                    self.n_subjects,
                    self.n_times
                )));
            }
        }
        let supplied = table
            .into_iter()
            .flat_map(|t| t.covariates.iter().map(|c| c.name.as_str()));
        let generated: BTreeSet<&str> = self
            .covariates
            .iter()
            .map(|g| g.name.as_str())
            .chain(supplied)
            .collect();
        if referenced != generated {
            return Err(Error::InvalidConfig(format!(
                "covariate generators {generated:?} must match the covariates the model uses {referenced:?}"
            )));
        }
        let schema = self.output_schema_with(table)?;
        self.spec.validate_for_schema(&schema)?;
        self.params.validate(&self.spec, &schema, self.n_times)?;
        for g in &self.covariates {
            g.distribution.validate()?;
        }
        Ok(())
    }
}

/// Index of the category drawn from `probs` with uniform variate `v`.
fn draw_categorical(probs: &[f64], v: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (c, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = c;
            acc += p;
            if v < acc {
                return c;
            }
        }
    }
    last
}

/// Link covariate values at one time point, in the order of `names`.
fn link_values(
    names: &[String],
    fixed: &[f64],
    varying: &[Option<f64>],
    fixed_names: &[String],
    varying_names: &[String],
) -> Vec<f64> {
    names
        .iter()
        .map(|n| {
            if let Some(p) = fixed_names.iter().position(|f| f == n) {
                fixed[p]
            } else {
                let q = varying_names.iter().position(|f| f == n).expect("validated generator");
                varying[q].expect("simulated values are present")
            }
        })
        .collect()
}

fn simulate_subject(
    config: &SimConfig,
    table: Option<&CovariateTable>,
    i: usize,
    fixed_names: &[String],
    varying_names: &[String],
) -> Result<(SubjectRecord, Vec<usize>)> {
    let mut rng = stream(config.seed, DOMAIN_SIMULATION, i as u64);
    let n_times = config.n_times;
    let mut fixed = vec![0.0; fixed_names.len()];
    let mut varying = vec![vec![None; varying_names.len()]; if varying_names.is_empty() { 0 } else { n_times }];
    if let Some(t) = table {
        for (c, def) in t.covariates.iter().enumerate() {
            if let Some(p) = fixed_names.iter().position(|n| n == &def.name) {
                fixed[p] = t.values[i][0][c];
            } else if let Some(q) = varying_names.iter().position(|n| n == &def.name) {
                for (row, vals) in varying.iter_mut().zip(&t.values[i]) {
                    row[q] = Some(vals[c]);
                }
            }
        }
    }
    for g in &config.covariates {
        match g.kind {
            CovariateKind::Fixed => {
                let p = fixed_names
                    .iter()
                    .position(|n| n == &g.name)
                    .expect("schema built from generators");
                fixed[p] = g.distribution.sample(&mut rng);
            }
            CovariateKind::Varying => {
                let q = varying_names
                    .iter()
                    .position(|n| n == &g.name)
                    .expect("schema built from generators");
                for row in varying.iter_mut() {
                    row[q] = Some(g.distribution.sample(&mut rng));
                }
            }
        }
    }
    let empty = Vec::new();
    let varying_at = |t: usize| varying.get(t).unwrap_or(&empty);

    let mut states = Vec::with_capacity(n_times);
    let x1 = link_values(
        &config.spec.init_covariates,
        &fixed,
        varying_at(0),
        fixed_names,
        varying_names,
    );
    let delta = config.params.initial(&x1)?;
    states.push(draw_categorical(&delta, rng.random()));
    for t in 1..n_times {
        let x = link_values(
            &config.spec.trans_covariates,
            &fixed,
            varying_at(t),
            fixed_names,
            varying_names,
        );
        let tau = config.params.transition(t, &x)?;
        let prev = states[t - 1];
        states.push(draw_categorical(&tau[prev], rng.random()));
    }

    let responses = states
        .iter()
        .map(|&u| {
            config.params.phi[u]
                .iter()
                .map(|row| Some(draw_categorical(row, rng.random()) as u16))
                .collect()
        })
        .collect();
    Ok((
        SubjectRecord {
            id: table.map_or_else(|| (i + 1).to_string(), |t| t.ids[i].clone()),
            responses,
            fixed,
            varying,
        },
        states,
    ))
}

/// Draws a panel and its hidden state sequences.
///
/// Subjects are numbered `1..=n`; `truth[i]` holds the 0-based states of
/// the `i`-th subject in panel order.
pub fn simulate_panel(config: &SimConfig) -> Result<(LongitudinalPanel, Vec<Vec<usize>>)> {
    simulate(config, None)
}

/// [`simulate_panel`] with some or all covariates taken from `table`
/// instead of generators. Subject `i` gets the `i`-th table row and its id;
/// the table must have `n_subjects` rows of `n_times` time points.
pub fn simulate_panel_with_covariates(
    config: &SimConfig,
    table: &CovariateTable,
) -> Result<(LongitudinalPanel, Vec<Vec<usize>>)> {
    simulate(config, Some(table))
}

fn simulate(config: &SimConfig, table: Option<&CovariateTable>) -> Result<(LongitudinalPanel, Vec<Vec<usize>>)> {
    config.validate_with(table)?;
    let schema = config.output_schema_with(table)?;
    let fixed_names = schema.covariate_names(CovariateKind::Fixed);
    let varying_names = schema.covariate_names(CovariateKind::Varying);
    let mut draws: Vec<(SubjectRecord, Vec<usize>)> = (0..config.n_subjects)
        .into_par_iter()
        .map(|i| simulate_subject(config, table, i, &fixed_names, &varying_names))
        .collect::<Result<_>>()?;
    // truth must follow the panel's subject order
    draws.sort_by(|a, b| compare_ids(&a.0.id, &b.0.id));
    let (records, truth): (Vec<_>, Vec<_>) = draws.into_iter().unzip();
    let panel = LongitudinalPanel::from_records(&schema, config.n_times, records)?;
    Ok((panel, truth))
}

/// Random but valid parameters for `spec`: Dirichlet(1) probability rows,
/// and standard-normal logit coefficients.
pub fn random_parameters(spec: &ModelSpec, schema: &ItemSchema, n_times: usize, seed: u64) -> Result<Parameters> {
    spec.validate()?;
    let mut rng = stream(seed, DOMAIN_PARAMETERS, 0);
    let k = spec.k;
    let phi = (0..k)
        .map(|_| {
            schema
                .n_categories()
                .iter()
                .map(|&c| dirichlet(&mut rng, c, 1.0))
                .collect()
        })
        .collect();
    let latent = if spec.is_unrestricted() {
        let delta_raw = dirichlet(&mut rng, k, 1.0);
        let tau_raw = (1..n_times)
            .map(|_| (0..k).map(|_| dirichlet(&mut rng, k, 1.0)).collect())
            .collect();
        LatentParams::Unrestricted { delta_raw, tau_raw }
    } else {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut block = |zero: bool, width: usize| -> Vec<f64> {
            (0..width)
                .map(|_| if zero { 0.0 } else { normal.sample(&mut rng) })
                .collect()
        };
        let p = spec.init_covariates.len() + 1;
        let q = spec.trans_covariates.len() + 1;
        let beta = (0..k).map(|u| block(u == 0, p)).collect();
        let gamma = (0..k).map(|a| (0..k).map(|b| block(a == b, q)).collect()).collect();
        LatentParams::Logit { beta, gamma }
    };
    let params = Parameters { phi, latent };
    Ok(params)
}

/// `subject,time,state` (time and state 1-based).
pub fn write_truth_csv<W: Write>(panel: &LongitudinalPanel, truth: &[Vec<usize>], writer: W) -> Result<()> {
    if truth.len() != panel.n_subjects() {
        return Err(Error::ModelMismatch(format!(
            "{} state sequences for {} subjects",
            truth.len(),
            panel.n_subjects()
        )));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["subject", "time", "state"])?;
    for (id, states) in panel.subject_ids().iter().zip(truth) {
        for (t, u) in states.iter().enumerate() {
            wtr.write_record([id.clone(), (t + 1).to_string(), (u + 1).to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ItemSchema {
        ItemSchema::from_labels(&[("a", &["0", "1", "2"][..]), ("b", &["0", "1"][..])]).unwrap()
    }

    fn config(
        spec: ModelSpec,
        params: Parameters,
        n: usize,
        t: usize,
        covariates: Vec<CovariateGenerator>,
    ) -> SimConfig {
        SimConfig {
            params,
            spec,
            schema: schema(),
            n_subjects: n,
            n_times: t,
            covariates,
            seed: 11,
        }
    }

    #[test]
    fn distribution_parsing() {
        assert_eq!(
            "normal(15, 3)".parse::<CovariateDistribution>().unwrap(),
            CovariateDistribution::Normal { mean: 15.0, sd: 3.0 }
        );
        assert_eq!(
            "2.5".parse::<CovariateDistribution>().unwrap(),
            CovariateDistribution::Constant { value: 2.5 }
        );
        assert!("bernoulli(2)".parse::<CovariateDistribution>().is_err());
        assert!("uniform(3,1)".parse::<CovariateDistribution>().is_err());
        assert!("gamma(1,1)".parse::<CovariateDistribution>().is_err());
        for s in ["uniform(-1,2)", "bernoulli(0.3)", "constant(4)", "normal(0,1)"] {
            let d: CovariateDistribution = s.parse().unwrap();
            assert_eq!(d.to_string().parse::<CovariateDistribution>().unwrap(), d);
        }
    }

    #[test]
    fn degenerate_model_is_deterministic() {
        let spec = ModelSpec::unrestricted(2);
        let params = Parameters {
            phi: vec![
                vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0]],
            ],
            latent: LatentParams::Unrestricted {
                delta_raw: vec![0.0, 1.0],
                tau_raw: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            },
        };
        let (panel, truth) = simulate_panel(&config(spec, params, 20, 3, vec![])).unwrap();
        assert!(truth.iter().all(|s| s == &vec![1, 1, 1]));
        for s in panel.subjects() {
            for t in 0..3 {
                assert_eq!(s.responses_at(t), &[Some(0), Some(1)]);
            }
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let spec = ModelSpec::logit(3, &["x"], &["x"]);
        let params = random_parameters(&spec, &schema(), 4, 3).unwrap();
        let gens = vec![CovariateGenerator::new(
            "x",
            CovariateKind::Varying,
            CovariateDistribution::Normal { mean: 0.0, sd: 1.0 },
        )];
        let cfg = config(spec, params, 30, 4, gens);
        let a = simulate_panel(&cfg).unwrap();
        let b = simulate_panel(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.n_subjects(), 30);
        assert_eq!(a.0.subject_ids()[0], "1");
    }

    #[test]
    fn generators_must_match_spec() {
        let spec = ModelSpec::logit(2, &["x"], &[]);
        let params = random_parameters(&spec, &schema(), 2, 0).unwrap();
        assert!(simulate_panel(&config(spec.clone(), params.clone(), 5, 2, vec![])).is_err());
        let extra = vec![
            CovariateGenerator::new(
                "x",
                CovariateKind::Fixed,
                CovariateDistribution::Constant { value: 1.0 },
            ),
            CovariateGenerator::new(
                "z",
                CovariateKind::Fixed,
                CovariateDistribution::Constant { value: 1.0 },
            ),
        ];
        assert!(simulate_panel(&config(spec, params, 5, 2, extra)).is_err());
    }

    #[test]
    fn categorical_draws() {
        assert_eq!(draw_categorical(&[0.2, 0.8], 0.1), 0);
        assert_eq!(draw_categorical(&[0.2, 0.8], 0.5), 1);
        assert_eq!(draw_categorical(&[0.0, 1.0, 0.0], 0.999_999), 1);
        assert_eq!(draw_categorical(&[0.5, 0.5, 0.0], 1.0), 1);
    }
}
