//! Experiment runner: wires sampling, exact analysis, simulation and
//! predictor training into reproducible experiments that emit CSV tables and
//! a JSON manifest.
//!
//! Every unit of work (one machine, or one machine × predictor family) gets
//! its own seed derived from the master seed, an experiment tag and the unit
//! index, and results are collected in unit order. Output tables are
//! therefore byte-identical for any worker count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::generator::simulate;
use crate::infotheory::{analyze, inverse_binary_entropy, pct_increase, LogMCurve, WordEnumerator, CURVE_CSV_HEADER};
use crate::machine::{entropy_rate, min_error_probability, stationary_distribution};
use crate::predictors::{
    evaluate_error_rate, matched_configs, Family, LstmConfig, NgrcConfig, PredictorSpec, ResultRow, DEFAULT_L2,
    RESULTS_CSV_HEADER,
};
use crate::renewal::{renewal_fano_curve, SurvivalSpec};
use crate::sampler::{sample_epsilon_machine, SamplerConfig};
use crate::seeds::derive_seed;
use crate::stats::Summary;

pub const WORKERS_ENV: &str = "EPSBENCH_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("cannot parse config file: {0}")]
    ConfigParse(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{failed} of {total} units failed (first: {first})")]
    UnitsFailed { failed: usize, total: usize, first: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperimentKind {
    Survey,
    MyopicCurves,
    RenewalCurves,
    PredictorComparison,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::Survey => "survey",
            ExperimentKind::MyopicCurves => "fig3",
            ExperimentKind::RenewalCurves => "fig4",
            ExperimentKind::PredictorComparison => "fig5",
        }
    }
}

/// Fully resolved experiment settings. Every field is echoed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub candidate_sizes: Vec<usize>,
    pub alpha: f64,
    pub machines: usize,
    pub m_max: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub predictor_memory: usize,
    pub l2_lambda: f64,
    pub families: Vec<Family>,
    pub repetitions: usize,
    pub lstm: LstmConfig,
    pub renewal_beta: f64,
    pub renewal_n_max: Vec<usize>,
    pub log_m_h_mu: f64,
    pub log_m_max: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
}

/// Partial settings, as read from a config file or command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub candidate_sizes: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub machines: Option<usize>,
    pub m_max: Option<usize>,
    pub train_len: Option<usize>,
    pub test_len: Option<usize>,
    pub predictor_memory: Option<usize>,
    pub l2_lambda: Option<f64>,
    pub families: Option<Vec<Family>>,
    pub repetitions: Option<usize>,
    pub lstm_hidden_size: Option<usize>,
    pub lstm_bptt_window: Option<usize>,
    pub lstm_learning_rate: Option<f64>,
    pub lstm_max_epochs: Option<usize>,
    pub lstm_batch_streams: Option<usize>,
    pub lstm_patience: Option<usize>,
    pub renewal_beta: Option<f64>,
    pub renewal_n_max: Option<Vec<usize>>,
    pub log_m_h_mu: Option<f64>,
    pub log_m_max: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ConfigOverrides {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::ConfigParse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text =
            fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&w| w > 0)
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let candidate_sizes = match experiment {
            ExperimentKind::MyopicCurves => vec![30, 300, 3000],
            _ => vec![300],
        };
        let machines = match experiment {
            ExperimentKind::PredictorComparison => 10,
            _ => 100,
        };
        let m_max = match experiment {
            ExperimentKind::PredictorComparison => 10,
            _ => 15,
        };
        Self {
            experiment,
            candidate_sizes,
            alpha: 1.0,
            machines,
            m_max,
            train_len: 200_000,
            test_len: 20_000,
            predictor_memory: 10,
            l2_lambda: DEFAULT_L2,
            families: Family::ALL.to_vec(),
            repetitions: 1,
            lstm: LstmConfig::default(),
            renewal_beta: 1.0,
            renewal_n_max: vec![1_000, 10_000],
            log_m_h_mu: 0.5,
            log_m_max: 10_000,
            seed: 0,
            out_dir: PathBuf::from("results").join(experiment.tag()),
            workers: workers_from_env().unwrap_or(1),
        }
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = &o.$field { self.$field = v.clone(); } )* };
        }
        take!(
            candidate_sizes, alpha, machines, m_max, train_len, test_len, predictor_memory, l2_lambda, families,
            repetitions, renewal_beta, renewal_n_max, log_m_h_mu, log_m_max, seed, out_dir, workers
        );
        if let Some(v) = o.lstm_hidden_size {
            self.lstm.hidden_size = v;
        }
        if let Some(v) = o.lstm_bptt_window {
            self.lstm.bptt_window = v;
        }
        if let Some(v) = o.lstm_learning_rate {
            self.lstm.learning_rate = v;
        }
        if let Some(v) = o.lstm_max_epochs {
            self.lstm.max_epochs = v;
        }
        if let Some(v) = o.lstm_batch_streams {
            self.lstm.batch_streams = v;
        }
        if let Some(v) = o.lstm_patience {
            self.lstm.patience = v;
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::InvalidConfig(msg.into()));
        if self.machines == 0 || self.workers == 0 || self.repetitions == 0 {
            return bad("machines, workers and repetitions must be >= 1");
        }
        if self.candidate_sizes.is_empty() || self.candidate_sizes.contains(&0) {
            return bad("candidate_sizes must be a nonempty list of positive sizes");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if self.experiment == ExperimentKind::PredictorComparison {
            if self.train_len == 0 || self.test_len == 0 || self.predictor_memory == 0 {
                return bad("train_len, test_len and predictor_memory must be >= 1");
            }
            if self.families.is_empty() {
                return bad("at least one predictor family is required");
            }
            self.lstm.check().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        }
        if self.experiment == ExperimentKind::RenewalCurves {
            if self.renewal_n_max.is_empty() || self.renewal_n_max.contains(&0) {
                return bad("renewal_n_max must be a nonempty list of positive truncations");
            }
            LogMCurve::new(self.log_m_h_mu).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitFailure {
    pub unit: usize,
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub files: Vec<OutputFile>,
    pub unit_seeds: Vec<(String, u64)>,
    pub failures: Vec<UnitFailure>,
    pub wall_time_seconds: f64,
}

impl ExperimentResult {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }

    pub fn manifest(&self) -> serde_json::Value {
        json!({
            "experiment": self.config.experiment,
            "tag": self.config.experiment.tag(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "unit_seeds": self.unit_seeds.iter().map(|(l, s)| json!({"unit": l, "seed": s})).collect::<Vec<_>>(),
            "files": self.files.iter().map(|f| f.name.as_str()).collect::<Vec<_>>(),
            "failures": self.failures,
            "wall_time_seconds": self.wall_time_seconds,
        })
    }

    /// Writes every table plus `manifest.json` into the configured directory.
    pub fn write(&self) -> Result<Vec<PathBuf>, HarnessError> {
        write_outputs(&self.config.out_dir, &self.files, &self.manifest())
    }
}

pub fn write_outputs(
    dir: &Path,
    files: &[OutputFile],
    manifest: &serde_json::Value,
) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for f in files {
        let path = dir.join(&f.name);
        fs::write(&path, &f.contents).map_err(io(&path))?;
        written.push(path);
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest is plain JSON");
    fs::write(&path, text + "\n").map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn failures_csv(failures: &[UnitFailure]) -> String {
    csv(
        "unit,label,error",
        failures.iter().map(|f| format!("{},{},\"{}\"", f.unit, f.label, f.error.replace('"', "'"))),
    )
}

/// Runs the experiment named in `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    match config.experiment {
        ExperimentKind::Survey => run_survey(config),
        ExperimentKind::MyopicCurves => run_myopic_survey(config),
        ExperimentKind::RenewalCurves => run_renewal_curves(config),
        ExperimentKind::PredictorComparison => run_predictor_comparison(config),
    }
}

struct MachineUnit {
    label: String,
    candidates: usize,
    index: usize,
    seed: u64,
}

fn machine_units(config: &ExperimentConfig) -> Vec<MachineUnit> {
    let tag = config.experiment.tag();
    config
        .candidate_sizes
        .iter()
        .flat_map(|&c| {
            (0..config.machines).map(move |i| MachineUnit {
                label: format!("candidates={c}/machine={i}"),
                candidates: c,
                index: i,
                seed: derive_seed(config.seed, &format!("{tag}/candidates={c}"), i as u64),
            })
        })
        .collect()
}

const MACHINES_CSV_HEADER: &str = "candidates,machine_id,seed,n_recurrent,transient_fraction,h_mu_nats,pe_min";

fn machine_row(u: &MachineUnit, n_recurrent: usize, transient: f64, h_mu: f64, pe_min: f64) -> String {
    format!("{},{},{},{},{},{},{}", u.candidates, u.index, u.seed, n_recurrent, transient, h_mu, pe_min)
}

fn summaries_csv(groups: &[(String, Vec<f64>)]) -> String {
    csv(
        "group,count,mean,std_dev,q05,median,q95",
        groups.iter().map(|(g, xs)| {
            let s = Summary::of(xs);
            format!("{g},{},{},{},{},{},{}", s.count, s.mean, s.std_dev, s.q05, s.median, s.q95)
        }),
    )
}

fn finish(
    config: &ExperimentConfig,
    files: Vec<OutputFile>,
    unit_seeds: Vec<(String, u64)>,
    failures: Vec<UnitFailure>,
    started: Instant,
) -> ExperimentResult {
    let mut files = files;
    if !failures.is_empty() {
        files.push(OutputFile { name: "failures.csv".into(), contents: failures_csv(&failures) });
    }
    ExperimentResult { config: config.clone(), files, unit_seeds, failures, wall_time_seconds: started.elapsed().as_secs_f64() }
}

/// Transient fraction, `h_μ` and `P_e^min` of sampled machines.
pub fn run_survey(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.check()?;
    let started = Instant::now();
    let units = machine_units(config);
    let outcomes: Vec<Result<(usize, f64, f64, f64), String>> = with_pool(config.workers, || {
        units
            .par_iter()
            .map(|u| {
                let r = sample_epsilon_machine(&SamplerConfig::new(u.candidates, config.alpha, u.seed))
                    .map_err(|e| e.to_string())?;
                let pi = stationary_distribution(&r.machine).map_err(|e| e.to_string())?;
                Ok((
                    r.n_recurrent,
                    r.transient_fraction,
                    entropy_rate(&r.machine, &pi),
                    min_error_probability(&r.machine, &pi),
                ))
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for &c in &config.candidate_sizes {
        for q in ["transient_fraction", "h_mu_nats", "pe_min"] {
            groups.push((format!("candidates={c}/{q}"), Vec::new()));
        }
    }
    for (k, (u, out)) in units.iter().zip(outcomes).enumerate() {
        match out {
            Ok((n_rec, tf, h, pe)) => {
                rows.push(machine_row(u, n_rec, tf, h, pe));
                let g = config.candidate_sizes.iter().position(|&c| c == u.candidates).unwrap() * 3;
                groups[g].1.push(tf);
                groups[g + 1].1.push(h);
                groups[g + 2].1.push(pe);
            }
            Err(error) => failures.push(UnitFailure { unit: k, label: u.label.clone(), error }),
        }
    }
    let files = vec![
        OutputFile { name: "machines.csv".into(), contents: csv(MACHINES_CSV_HEADER, rows) },
        OutputFile { name: "summary.csv".into(), contents: summaries_csv(&groups) },
    ];
    let seeds = units.iter().map(|u| (u.label.clone(), u.seed)).collect();
    let result = finish(config, files, seeds, failures, started);
    propagate_failures(result)
}

fn propagate_failures(result: ExperimentResult) -> Result<ExperimentResult, HarnessError> {
    if result.failures.is_empty() {
        return Ok(result);
    }
    // flush what was computed so the failure manifest survives
    result.write()?;
    Err(HarnessError::UnitsFailed {
        failed: result.failures.len(),
        total: result.unit_seeds.len(),
        first: format!("{}: {}", result.failures[0].label, result.failures[0].error),
    })
}

pub const MYOPIC_CURVES_CSV_HEADER: &str =
    "candidates,machine_id,seed,n_states,m,h_of_m_nats,h_mu_nats,pe_lower_bound,pe_min,pct_increase";
pub const BANDS_CSV_HEADER: &str = "candidates,m,quantity,count,q05,median,q95,mean";

/// Myopic entropy-rate curves and Fano percentage-increase curves of sampled
/// machines, with per-`m` 5%/50%/95% bands for each candidate size.
pub fn run_myopic_survey(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.check()?;
    let started = Instant::now();
    let units = machine_units(config);
    let outcomes: Vec<Result<_, String>> = with_pool(config.workers, || {
        units
            .par_iter()
            .map(|u| {
                let r = sample_epsilon_machine(&SamplerConfig::new(u.candidates, config.alpha, u.seed))
                    .map_err(|e| e.to_string())?;
                let a = analyze(&r.machine, config.m_max).map_err(|e| e.to_string())?;
                Ok((r.n_recurrent, r.transient_fraction, a))
            })
            .collect()
    });

    let mut curve_rows = Vec::new();
    let mut machine_rows = Vec::new();
    let mut failures = Vec::new();
    // bands[size][m] = (h(m), h(m) − h_μ, pct)
    let mut bands = vec![vec![(Vec::new(), Vec::new(), Vec::new()); config.m_max + 1]; config.candidate_sizes.len()];
    for (k, (u, out)) in units.iter().zip(outcomes).enumerate() {
        let (n_rec, tf, a) = match out {
            Ok(v) => v,
            Err(error) => {
                failures.push(UnitFailure { unit: k, label: u.label.clone(), error });
                continue;
            }
        };
        machine_rows.push(machine_row(u, n_rec, tf, a.h_mu, a.pe_min));
        let g = config.candidate_sizes.iter().position(|&c| c == u.candidates).unwrap();
        for (m, row) in a.curve_rows().into_iter().enumerate() {
            curve_rows.push(format!("{},{},{},{},{row}", u.candidates, u.index, u.seed, a.n_states));
            let h = a.curve.h_of_m[m];
            bands[g][m].0.push(h);
            bands[g][m].1.push(h - a.h_mu);
            bands[g][m].2.push(a.fano[m].pct_increase_over_pe_min);
        }
    }
    let mut band_rows = Vec::new();
    for (g, &c) in config.candidate_sizes.iter().enumerate() {
        for (m, (h, gap, pct)) in bands[g].iter().enumerate() {
            for (name, xs) in [("h_of_m_nats", h), ("gap_nats", gap), ("pct_increase", pct)] {
                if xs.is_empty() {
                    continue;
                }
                let s = Summary::of(xs);
                band_rows.push(format!("{c},{m},{name},{},{},{},{},{}", s.count, s.q05, s.median, s.q95, s.mean));
            }
        }
    }
    let files = vec![
        OutputFile { name: "machines.csv".into(), contents: csv(MACHINES_CSV_HEADER, machine_rows) },
        OutputFile { name: "curves.csv".into(), contents: csv(MYOPIC_CURVES_CSV_HEADER, curve_rows) },
        OutputFile { name: "bands.csv".into(), contents: csv(BANDS_CSV_HEADER, band_rows) },
    ];
    let seeds = units.iter().map(|u| (u.label.clone(), u.seed)).collect();
    propagate_failures(finish(config, files, seeds, failures, started))
}

/// Power-law renewal curves at each configured truncation, plus the
/// closed-form log-m curve.
pub fn run_renewal_curves(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.check()?;
    let started = Instant::now();
    let outcomes: Vec<Result<_, String>> = with_pool(config.workers, || {
        config
            .renewal_n_max
            .par_iter()
            .map(|&n_max| {
                renewal_fano_curve(&SurvivalSpec::power_law(config.renewal_beta, n_max), config.m_max)
                    .map_err(|e| e.to_string())
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for (k, (n_max, out)) in config.renewal_n_max.iter().zip(outcomes).enumerate() {
        match out {
            Ok(curve) => {
                rows.extend(curve.csv_rows());
                summary.push(format!(
                    "{},{n_max},{},{}",
                    config.renewal_beta, curve.analysis.h_mu, curve.analysis.pe_min
                ));
            }
            Err(error) => failures.push(UnitFailure { unit: k, label: format!("n_max={n_max}"), error }),
        }
    }
    let log_m = LogMCurve::new(config.log_m_h_mu).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let log_rows = (0..=config.log_m_max).map(|m| {
        let f = log_m.fano(m);
        format!("{m},{},{},{},{},{}", f.conditional_entropy, log_m.h_mu, f.pe_lower_bound, f.pe_min, f.pct_increase_over_pe_min)
    });
    let files = vec![
        OutputFile { name: "renewal.csv".into(), contents: csv(&format!("beta,n_max,{CURVE_CSV_HEADER}"), rows) },
        OutputFile { name: "renewal_summary.csv".into(), contents: csv("beta,n_max,h_mu_nats,pe_min", summary) },
        OutputFile { name: "logm.csv".into(), contents: csv(CURVE_CSV_HEADER, log_rows) },
    ];
    let seeds = Vec::new();
    let mut result = finish(config, files, seeds, failures, started);
    // renewal units are deterministic (no randomness); list them for the manifest
    result.unit_seeds = config.renewal_n_max.iter().map(|n| (format!("n_max={n}"), 0)).collect();
    propagate_failures(result)
}

/// Exact quantities of one machine needed to score trained predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MachineTruth {
    pub n_states: usize,
    pub h_mu: f64,
    pub pe_min: f64,
    /// `h(m)` at the predictors' memory.
    pub h_at_memory: f64,
    /// Error of the best predictor restricted to that memory.
    pub pe_at_memory: f64,
}

/// Fano bound for a family: NG-RC sees exactly `memory` symbols; reservoirs
/// and LSTMs have unbounded (fading) memory, so only `Hb⁻¹(h_μ)` applies.
pub fn family_fano_bound(family: Family, truth: &MachineTruth) -> f64 {
    let h = if family == Family::Ngrc { truth.h_at_memory } else { truth.h_mu };
    inverse_binary_entropy(h.min(std::f64::consts::LN_2)).unwrap_or(f64::NAN)
}

/// Trains every configured family on a fresh series from each sampled
/// machine and scores it on held-out data. Failing units are recorded and
/// the run continues.
pub fn run_predictor_comparison(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.check()?;
    let started = Instant::now();
    let machines = machine_units(config);
    let truths: Vec<Result<_, String>> = with_pool(config.workers, || {
        machines
            .par_iter()
            .map(|u| {
                let r = sample_epsilon_machine(&SamplerConfig::new(u.candidates, config.alpha, u.seed))
                    .map_err(|e| e.to_string())?;
                let en = WordEnumerator::new(&r.machine).map_err(|e| e.to_string())?;
                let pi = en.stationary();
                let curve = en.myopic_curve(config.predictor_memory).map_err(|e| e.to_string())?;
                let truth = MachineTruth {
                    n_states: r.machine.n_states(),
                    h_mu: entropy_rate(&r.machine, pi),
                    pe_min: min_error_probability(&r.machine, pi),
                    h_at_memory: curve.h_of_m[config.predictor_memory],
                    pe_at_memory: en.myopic_error_probability(config.predictor_memory).map_err(|e| e.to_string())?,
                };
                Ok((r.machine, truth))
            })
            .collect()
    });

    struct Unit {
        machine: usize,
        spec: PredictorSpec,
        series_seed: u64,
        label: String,
    }
    let mut units = Vec::new();
    let mut unit_seeds = Vec::new();
    for (mi, u) in machines.iter().enumerate() {
        for rep in 0..config.repetitions {
            let rep_index = (mi * config.repetitions + rep) as u64;
            let series_seed = derive_seed(config.seed, "fig5/series", rep_index);
            let model_seed = derive_seed(config.seed, "fig5/models", rep_index);
            unit_seeds.push((format!("{}/rep={rep}/series", u.label), series_seed));
            for mut spec in matched_configs(&NgrcConfig::new(config.predictor_memory), model_seed) {
                if !config.families.contains(&spec.family()) {
                    continue;
                }
                if let PredictorSpec::Lstm(c) = &mut spec {
                    *c = LstmConfig { hidden_size: c.hidden_size, seed: c.seed, ..config.lstm };
                }
                let label = format!("{}/rep={rep}/{}", u.label, spec.family());
                let seed = match spec {
                    PredictorSpec::Reservoir { config, .. } => config.seed,
                    PredictorSpec::Lstm(c) => c.seed,
                    PredictorSpec::Ngrc(_) => 0,
                };
                unit_seeds.push((label.clone(), seed));
                units.push(Unit { machine: mi, spec, series_seed, label });
            }
        }
    }

    let total = config.train_len + config.test_len;
    let outcomes: Vec<Result<ResultRow, String>> = with_pool(config.workers, || {
        units
            .par_iter()
            .map(|unit| {
                let (machine, truth) = truths[unit.machine].as_ref().map_err(|e| format!("machine analysis: {e}"))?;
                let series = simulate(machine, total, unit.series_seed).map_err(|e| e.to_string())?.symbols;
                let trained =
                    unit.spec.train(&series, config.train_len, config.l2_lambda).map_err(|e| e.to_string())?;
                let pe = evaluate_error_rate(&trained, &series, config.train_len..total).map_err(|e| e.to_string())?;
                Ok(ResultRow {
                    machine_id: machines[unit.machine].index,
                    family: unit.spec.family(),
                    feature_count: trained.feature_count,
                    train_len: config.train_len,
                    test_len: config.test_len,
                    pe,
                    pe_min: truth.pe_min,
                    pct_increase: pct_increase(pe, truth.pe_min),
                    fano_bound: family_fano_bound(unit.spec.family(), truth),
                })
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, (unit, out)) in units.iter().zip(outcomes).enumerate() {
        match out {
            Ok(row) => rows.push(row),
            Err(error) => failures.push(UnitFailure { unit: k, label: unit.label.clone(), error }),
        }
    }
    let mut truth_rows = Vec::new();
    for (u, t) in machines.iter().zip(&truths) {
        if let Ok((_, t)) = t {
            truth_rows.push(format!(
                "{},{},{},{},{},{},{},{}",
                u.candidates, u.index, u.seed, t.n_states, t.h_mu, t.pe_min, t.h_at_memory, t.pe_at_memory
            ));
        }
    }
    let groups: Vec<(String, Vec<f64>)> = config
        .families
        .iter()
        .map(|f| {
            (format!("{f}/pct_increase"), rows.iter().filter(|r| r.family == *f).map(|r| r.pct_increase).collect())
        })
        .collect();
    let files = vec![
        OutputFile { name: "results.csv".into(), contents: csv(RESULTS_CSV_HEADER, rows.iter().map(|r| r.to_csv_line())) },
        OutputFile {
            name: "machines.csv".into(),
            contents: csv(
                "candidates,machine_id,seed,n_states,h_mu_nats,pe_min,h_at_memory_nats,pe_at_memory",
                truth_rows,
            ),
        },
        OutputFile { name: "summary.csv".into(), contents: summaries_csv(&groups) },
    ];
    Ok(finish(config, files, unit_seeds, failures, started))
}

/// Parsed rows of a results table.
pub fn parse_results_csv(text: &str) -> Vec<ResultRow> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Some(ResultRow {
                machine_id: f.first()?.parse().ok()?,
                family: Family::parse(f.get(1)?)?,
                feature_count: f.get(2)?.parse().ok()?,
                train_len: f.get(3)?.parse().ok()?,
                test_len: f.get(4)?.parse().ok()?,
                pe: f.get(5)?.parse().ok()?,
                pe_min: f.get(6)?.parse().ok()?,
                pct_increase: f.get(7)?.parse().ok()?,
                fano_bound: f.get(8)?.parse().ok()?,
            })
        })
        .collect()
}

/// Human-readable one-line-per-file summary.
pub fn describe(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment {} ({:.1}s)", result.config.experiment.tag(), result.wall_time_seconds);
    for f in &result.files {
        let _ = writeln!(out, "  {} ({} rows)", f.name, f.contents.lines().count().saturating_sub(1));
    }
    if !result.failures.is_empty() {
        let _ = writeln!(out, "  {} failed units", result.failures.len());
    }
    out
}
