//! The `lmfit` command-line front end.
//!
//! Subcommands: `fit`, `select`, `decode`, `simulate`, `freq`. Every run
//! writes its artifacts plus `run.json` (resolved configuration, seed,
//! version, input and artifact SHA-256 checksums) into `--out`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 fit failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::em::{fit, FitOptions};
use crate::error::{Error, Result};
use crate::model::{ModelFile, ModelSpec};
use crate::panel::{
    category_frequencies, load_panel, write_panel, CovariateKind, IngestConfig, ItemSchema, LongitudinalPanel,
};
use crate::profiles::{
    average_initial, build_profiles, prevalence_over_time, write_decoded_csv, write_initial_csv, write_prevalence_csv,
    write_profiles_csv,
};
use crate::selection::{
    select_states, stepwise_covariates, CovariateCandidate, CovariateTarget, SelectionReport, StepwiseOptions,
};
use crate::simulate::{
    read_covariate_table, simulate_panel, simulate_panel_with_covariates, write_truth_csv, CovariateDistribution,
    CovariateGenerator, CovariateTable, SimConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_FIT: i32 = 3;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "lmfit",
    version,
    about = "Latent Markov models for categorical longitudinal panels"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Fit one model by multi-start EM; writes model.json and fitlog.jsonl.
    Fit(FitArgs),
    /// Choose k by BIC over --k-min..--k-max, or, with --k and candidate
    /// covariates, run forward covariate selection.
    Select(SelectArgs),
    /// Posterior profiles, decoded states and prevalences for a panel.
    Decode(DecodeArgs),
    /// Simulate a panel from a model file.
    Simulate(SimulateArgs),
    /// Category frequencies per item and time.
    Freq(FreqArgs),
}

#[derive(Debug, Args, Serialize)]
struct PanelArgs {
    /// Long-format panel CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Accept empty response cells and absent time points.
    #[arg(long)]
    allow_missing: bool,
    /// Center a covariate at its sample mean (repeatable).
    #[arg(long = "center-cov", value_name = "NAME")]
    center_cov: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
struct FitControl {
    /// Number of EM starts.
    #[arg(long, default_value_t = 10)]
    starts: usize,
    /// Maximum EM iterations per start.
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Relative log-likelihood tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Seed for the random EM starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitControl {
    fn options(&self) -> FitOptions {
        FitOptions {
            n_starts: self.starts,
            max_iter: self.max_iter,
            rel_tol: self.tol,
            seed: self.seed,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct CovariateArgs {
    /// Covariate on the initial probabilities (repeatable).
    #[arg(long = "init-cov", value_name = "NAME")]
    init_cov: Vec<String>,
    /// Covariate on the transition probabilities (repeatable).
    #[arg(long = "trans-cov", value_name = "NAME")]
    trans_cov: Vec<String>,
    /// Covariate on both initial and transition probabilities (repeatable).
    #[arg(long = "both-cov", value_name = "NAME")]
    both_cov: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Item schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Number of latent states.
    #[arg(long)]
    k: usize,
    /// Free initial and per-time transition probabilities (no covariates).
    #[arg(long)]
    unrestricted: bool,
    #[command(flatten)]
    covariates: CovariateArgs,
    #[command(flatten)]
    control: FitControl,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SelectArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Item schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Fixed k for forward covariate selection; the covariate flags list the
    /// candidates.
    #[arg(long)]
    k: Option<usize>,
    /// Smallest state count in the grid.
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    /// Largest state count in the grid.
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[command(flatten)]
    covariates: CovariateArgs,
    #[command(flatten)]
    control: FitControl,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DecodeArgs {
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Long-format panel CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Item schema JSON (default: the schema stored in the model).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Accept empty response cells and absent time points.
    #[arg(long)]
    allow_missing: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Generating model JSON (e.g. a fitted model.json).
    #[arg(long)]
    model: PathBuf,
    /// Number of subjects (defaults to the subjects in --cov-file).
    #[arg(long)]
    n: Option<usize>,
    /// Number of time points.
    #[arg(long = "T", value_name = "T")]
    n_times: usize,
    /// Simulation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Covariate generator NAME=DIST with DIST one of constant(c),
    /// uniform(a,b), normal(mu,sd), bernoulli(p) (repeatable).
    #[arg(long = "cov-gen", value_name = "NAME=DIST")]
    cov_gen: Vec<String>,
    /// Pre-generated covariates: CSV `subject_id,time,<covariates...>` with
    /// one row per subject and time; simulated subjects take its ids.
    #[arg(long = "cov-file", value_name = "PATH")]
    cov_file: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FreqArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Item schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Outcome of a command: the error plus the exit code class it maps to.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn exit_code(err: &Error) -> i32 {
    match err {
        e if e.is_fit_failure() => EXIT_FIT,
        Error::InvalidSpec(_) | Error::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Collected outputs of one run, written together with `run.json`.
struct Artifacts {
    out: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    inputs: Vec<PathBuf>,
}

impl Artifacts {
    fn new(out: &Path) -> Self {
        Self {
            out: out.to_path_buf(),
            files: Vec::new(),
            inputs: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn finish(self, command: &str, config: &impl Serialize, seed: Option<u64>, args: Vec<String>) -> Result<()> {
        #[derive(Serialize)]
        struct RunRecord<'a, C: Serialize> {
            tool: &'static str,
            version: &'static str,
            command: &'a str,
            /// Command line without the thread count, which never affects results.
            args: Vec<String>,
            seed: Option<u64>,
            config: &'a C,
            inputs: BTreeMap<String, String>,
            artifacts: BTreeMap<String, String>,
        }
        fs::create_dir_all(&self.out)?;
        let mut inputs = BTreeMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), sha256_hex(&fs::read(p)?));
        }
        let mut artifacts = BTreeMap::new();
        for (name, bytes) in &self.files {
            fs::write(self.out.join(name), bytes)?;
            artifacts.insert(name.clone(), sha256_hex(bytes));
        }
        let record = RunRecord {
            tool: "lmfit",
            version: env!("CARGO_PKG_VERSION"),
            command,
            args,
            seed,
            config,
            inputs,
            artifacts,
        };
        let mut bytes = serde_json::to_vec_pretty(&record)?;
        bytes.push(b'\n');
        fs::write(self.out.join("run.json"), bytes)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_schema(path: &Path) -> Result<ItemSchema> {
    ItemSchema::read(path)
}

fn ingest(schema: &ItemSchema, allow_missing: bool, center: &[String]) -> IngestConfig {
    IngestConfig {
        allow_missing,
        merge_grades: schema.items.iter().any(|i| i.class.is_some() || i.merge.is_some()),
        center: center.to_vec(),
    }
}

fn load(args: &PanelArgs, schema: &ItemSchema) -> Result<LongitudinalPanel> {
    load_panel(
        &args.panel,
        schema,
        &ingest(schema, args.allow_missing, &args.center_cov),
    )
}

fn spec_from(k: usize, unrestricted: bool, cov: &CovariateArgs) -> CmdResult<ModelSpec> {
    let has_cov = !(cov.init_cov.is_empty() && cov.trans_cov.is_empty() && cov.both_cov.is_empty());
    if unrestricted {
        if has_cov {
            return Err(usage("--unrestricted does not take covariates"));
        }
        return Ok(ModelSpec::unrestricted(k));
    }
    let mut spec = ModelSpec::logit(k, &[], &[]);
    let push = |list: &mut Vec<String>, name: &String| {
        if !list.contains(name) {
            list.push(name.clone());
        }
    };
    for c in cov.init_cov.iter().chain(&cov.both_cov) {
        push(&mut spec.init_covariates, c);
    }
    for c in cov.trans_cov.iter().chain(&cov.both_cov) {
        push(&mut spec.trans_covariates, c);
    }
    spec.validate()?;
    Ok(spec)
}

fn run_fit(a: &FitArgs, arts: &mut Artifacts) -> CmdResult<()> {
    if a.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let spec = spec_from(a.k, a.unrestricted, &a.covariates)?;
    let schema = read_schema(&a.schema)?;
    spec.validate_for_schema(&schema)?;
    let panel = load(&a.panel, &schema)?;
    arts.input(&a.panel.panel);
    arts.input(&a.schema);
    let result = fit(&spec, &schema, &panel, &a.control.options())?;
    eprintln!(
        "{}: loglik {:.6}, g {}, AIC {:.6}, BIC {:.6}",
        spec.label(),
        result.loglik,
        result.g,
        result.aic,
        result.bic
    );
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    arts.add(
        "model.json",
        result.to_model_file(&schema, &panel).to_json()?.into_bytes(),
    );
    let mut log = Vec::new();
    result.write_log(&mut log)?;
    arts.add("fitlog.jsonl", log);
    Ok(())
}

fn write_report(report: &SelectionReport, arts: &mut Artifacts) -> Result<()> {
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    arts.add("selection.csv", csv);
    arts.add_json("selection.json", report)?;
    Ok(())
}

fn run_select(a: &SelectArgs, arts: &mut Artifacts) -> CmdResult<()> {
    let schema = read_schema(&a.schema)?;
    let options = a.control.options();
    let cov = &a.covariates;
    let has_cov = !(cov.init_cov.is_empty() && cov.trans_cov.is_empty() && cov.both_cov.is_empty());
    let report = match a.k {
        None => {
            if has_cov {
                return Err(usage("covariate candidates require --k"));
            }
            if a.k_min == 0 || a.k_min > a.k_max {
                return Err(usage("need 1 <= --k-min <= --k-max"));
            }
            let panel = load(&a.panel, &schema)?;
            arts.input(&a.panel.panel);
            arts.input(&a.schema);
            let report = select_states(&schema, &panel, a.k_min..=a.k_max, &options)?;
            (report, panel)
        }
        Some(k) => {
            if k == 0 {
                return Err(usage("--k must be at least 1"));
            }
            if !has_cov {
                return Err(usage(
                    "--k selects covariates; list candidates with --init-cov/--trans-cov/--both-cov",
                ));
            }
            let candidates: Vec<CovariateCandidate> = cov
                .init_cov
                .iter()
                .map(|c| CovariateCandidate::new(c, CovariateTarget::Initial))
                .chain(
                    cov.trans_cov
                        .iter()
                        .map(|c| CovariateCandidate::new(c, CovariateTarget::Transition)),
                )
                .chain(
                    cov.both_cov
                        .iter()
                        .map(|c| CovariateCandidate::new(c, CovariateTarget::Both)),
                )
                .collect();
            for c in &candidates {
                if schema.covariate(&c.covariate).is_none() {
                    return Err(usage(format!(
                        "covariate `{}` is not declared in the schema",
                        c.covariate
                    )));
                }
            }
            let panel = load(&a.panel, &schema)?;
            arts.input(&a.panel.panel);
            arts.input(&a.schema);
            let report = stepwise_covariates(
                &schema,
                &panel,
                k,
                &candidates,
                &StepwiseOptions {
                    fit: options,
                    max_steps: None,
                },
            )?;
            (report, panel)
        }
    };
    let (report, panel) = report;
    for row in &report.rows {
        eprintln!(
            "{:<40} g {:>4}  BIC {}  {}",
            row.label,
            row.g,
            row.bic.map_or("-".into(), |b| format!("{b:.6}")),
            row.status
        );
    }
    write_report(&report, arts)?;
    let best = report
        .best_by_bic
        .as_deref()
        .and_then(|l| report.fit_for(l))
        .ok_or_else(|| Error::FitFailure("no candidate model could be fitted".into()))?;
    eprintln!("best by BIC: {}", report.best_by_bic.as_deref().unwrap_or_default());
    arts.add(
        "model.json",
        best.to_model_file(&schema, &panel).to_json()?.into_bytes(),
    );
    Ok(())
}

fn run_decode(a: &DecodeArgs, arts: &mut Artifacts) -> CmdResult<()> {
    let model = ModelFile::read(&a.model)?;
    arts.input(&a.model);
    let schema = match &a.schema {
        Some(p) => {
            arts.input(p);
            read_schema(p)?
        }
        None => model.schema.clone(),
    };
    if schema.n_categories() != model.schema.n_categories() {
        return Err(Error::ModelMismatch("schema items differ from the model's items".into()).into());
    }
    let mut panel = load_panel(&a.panel, &schema, &ingest(&schema, a.allow_missing, &[]))?;
    arts.input(&a.panel);
    panel.apply_centering(&model.centering)?;
    let profiles = build_profiles(&model.params, &model.spec, &panel)?;
    let prevalence = prevalence_over_time(&profiles)?;
    let initial = average_initial(&model.params, &model.spec, &panel)?;
    let mut buf = Vec::new();
    write_profiles_csv(&profiles, &mut buf)?;
    arts.add("profiles.csv", buf);
    let mut buf = Vec::new();
    write_decoded_csv(&profiles, &mut buf)?;
    arts.add("decoded.csv", buf);
    let mut buf = Vec::new();
    write_prevalence_csv(&prevalence, &mut buf)?;
    arts.add("prevalence.csv", buf);
    let mut buf = Vec::new();
    write_initial_csv(&initial, &mut buf)?;
    arts.add("initial.csv", buf);
    Ok(())
}

fn run_simulate(a: &SimulateArgs, arts: &mut Artifacts) -> CmdResult<()> {
    let model = ModelFile::read(&a.model)?;
    arts.input(&a.model);
    let table = match &a.cov_file {
        Some(path) => {
            arts.input(path);
            Some(read_covariate_table(
                File::open(path).map_err(Error::from)?,
                &model.schema.covariates,
            )?)
        }
        None => None,
    };
    let n =
        a.n.or(table.as_ref().map(CovariateTable::n_subjects))
            .ok_or_else(|| usage("--n is required without --cov-file"))?;
    if n == 0 || a.n_times == 0 {
        return Err(usage("--n and --T must be at least 1"));
    }
    let mut covariates = Vec::new();
    for g in &a.cov_gen {
        let (name, dist) = g
            .split_once('=')
            .ok_or_else(|| usage(format!("--cov-gen expects NAME=DIST, got `{g}`")))?;
        let name = name.trim();
        let distribution: CovariateDistribution = dist.parse().map_err(|e: Error| usage(e.to_string()))?;
        let kind = model.schema.covariate(name).map_or(CovariateKind::Fixed, |c| c.kind);
        covariates.push(CovariateGenerator::new(name, kind, distribution));
    }
    let config = SimConfig {
        params: model.params.clone(),
        spec: model.spec.clone(),
        schema: model.schema.clone(),
        n_subjects: n,
        n_times: a.n_times,
        covariates,
        seed: a.seed,
    };
    let out_schema = config.output_schema_with(table.as_ref())?;
    let (panel, truth) = match &table {
        Some(t) => simulate_panel_with_covariates(&config, t)?,
        None => simulate_panel(&config)?,
    };
    let mut buf = Vec::new();
    write_panel(&panel, &out_schema, &mut buf)?;
    arts.add("panel.csv", buf);
    arts.add_json("schema.json", &out_schema)?;
    let mut buf = Vec::new();
    write_truth_csv(&panel, &truth, &mut buf)?;
    arts.add("truth.csv", buf);
    Ok(())
}

fn run_freq(a: &FreqArgs, arts: &mut Artifacts) -> CmdResult<()> {
    let schema = read_schema(&a.schema)?;
    let panel = load(&a.panel, &schema)?;
    arts.input(&a.panel.panel);
    arts.input(&a.schema);
    let table = category_frequencies(&panel).with_labels(&schema);
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    arts.add("frequencies.csv", buf);
    Ok(())
}

/// Drops `--threads N` / `--threads=N` so run records do not depend on it.
fn replay_args(argv: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(1) {
        let a = a.to_string_lossy().into_owned();
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") {
            continue;
        }
        out.push(a);
    }
    out
}

fn dispatch(cli: &Cli, argv: &[OsString]) -> CmdResult<()> {
    let args = replay_args(argv);
    match &cli.command {
        Command::Fit(a) => {
            let mut arts = Artifacts::new(&a.out);
            run_fit(a, &mut arts)?;
            arts.finish("fit", &cli.command, Some(a.control.seed), args)?;
        }
        Command::Select(a) => {
            let mut arts = Artifacts::new(&a.out);
            run_select(a, &mut arts)?;
            arts.finish("select", &cli.command, Some(a.control.seed), args)?;
        }
        Command::Decode(a) => {
            let mut arts = Artifacts::new(&a.out);
            run_decode(a, &mut arts)?;
            arts.finish("decode", &cli.command, None, args)?;
        }
        Command::Simulate(a) => {
            let mut arts = Artifacts::new(&a.out);
            run_simulate(a, &mut arts)?;
            arts.finish("simulate", &cli.command, Some(a.seed), args)?;
        }
        Command::Freq(a) => {
            let mut arts = Artifacts::new(&a.out);
            run_freq(a, &mut arts)?;
            arts.finish("freq", &cli.command, None, args)?;
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli, &argv)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_flag_is_not_recorded() {
        let argv: Vec<OsString> = ["lmfit", "--threads", "8", "fit", "--k", "2", "--threads=3"]
            .iter()
            .map(OsString::from)
            .collect();
        assert_eq!(replay_args(&argv), vec!["fit", "--k", "2"]);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["lmfit"]), EXIT_USAGE);
        assert_eq!(run(["lmfit", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["lmfit", "fit", "--k", "2"]), EXIT_USAGE);
        assert_eq!(run(["lmfit", "--help"]), EXIT_OK);
    }

    #[test]
    fn spec_assembly() {
        let cov = CovariateArgs {
            init_cov: vec!["age".into()],
            trans_cov: vec!["dose".into()],
            both_cov: vec!["age".into()],
        };
        let spec = spec_from(3, false, &cov).unwrap();
        assert_eq!(spec.init_covariates, vec!["age"]);
        assert_eq!(spec.trans_covariates, vec!["dose", "age"]);
        assert!(spec_from(3, true, &cov).is_err());
    }

    #[test]
    fn exit_code_classes() {
        assert_eq!(exit_code(&Error::FitFailure("x".into())), EXIT_FIT);
        assert_eq!(exit_code(&Error::InvalidSpec("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::SchemaMismatch("x".into())), EXIT_DATA);
    }
}
