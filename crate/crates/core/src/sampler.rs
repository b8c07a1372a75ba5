//! Random epsilon-machines.
//!
//! Recipe: every candidate state gets one labelled transition per symbol to a
//! uniformly drawn candidate, emission rows are Dirichlet(α, …, α), and the
//! largest recurrent component of the resulting directed graph is kept.
//! States outside it (transients, and smaller recurrent components) are
//! trimmed.
//!
//! Topology and emissions come from separate ChaCha streams of the same
//! seed, so changing α never changes which states survive.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{
    entropy_rate, graph, min_error_probability, stationary_distribution, EpsilonMachine,
    MachineError,
};
use crate::seeds::{derive_seed, stream_rng};
use crate::stats::Summary;

const TOPOLOGY_STREAM: u64 = 0;
const EMISSION_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_candidates: usize,
    pub alpha: f64,
    #[serde(default = "default_alphabet")]
    pub alphabet_size: usize,
    pub seed: u64,
}

fn default_alphabet() -> usize {
    2
}

impl SamplerConfig {
    pub fn new(n_candidates: usize, alpha: f64, seed: u64) -> Self {
        Self { n_candidates, alpha, alphabet_size: 2, seed }
    }

    pub fn check(&self) -> Result<(), SamplerError> {
        if self.n_candidates == 0 {
            return Err(SamplerError::InvalidConfig("n_candidates must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(SamplerError::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.alphabet_size == 0 {
            return Err(SamplerError::InvalidConfig("alphabet_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub machine: EpsilonMachine,
    pub n_candidates: usize,
    pub n_recurrent: usize,
    pub transient_fraction: f64,
    pub n_recurrent_components_found: usize,
    /// Candidate index of each retained state, in the retained order.
    pub retained: Vec<usize>,
}

/// Random labelled topology: `dest[σ][x]` uniform over candidates.
fn sample_topology(config: &SamplerConfig) -> Vec<Vec<usize>> {
    let mut rng = stream_rng(config.seed, TOPOLOGY_STREAM);
    let n = config.n_candidates;
    (0..n)
        .map(|_| (0..config.alphabet_size).map(|_| rng.random_range(0..n)).collect())
        .collect()
}

fn sample_emissions(config: &SamplerConfig) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(config.seed, EMISSION_STREAM);
    let gamma = Gamma::new(config.alpha, 1.0).expect("alpha checked positive");
    let k = config.alphabet_size;
    (0..config.n_candidates)
        .map(|_| {
            let mut row: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 && total.is_finite() {
                row.iter_mut().for_each(|p| *p /= total);
            } else {
                // every Gamma draw underflowed (tiny alpha): degenerate row
                let hot = rng.random_range(0..k);
                row.iter_mut().enumerate().for_each(|(x, p)| *p = if x == hot { 1.0 } else { 0.0 });
            }
            row
        })
        .collect()
}

pub fn sample_epsilon_machine(config: &SamplerConfig) -> Result<SampleReport, SamplerError> {
    config.check()?;
    let n = config.n_candidates;
    let topology = sample_topology(config);
    let emission = sample_emissions(config);
    let next: Vec<Vec<Option<usize>>> = topology
        .iter()
        .zip(&emission)
        .map(|(dests, probs)| {
            dests.iter().zip(probs).map(|(&d, &p)| (p > 0.0).then_some(d)).collect()
        })
        .collect();
    let candidate = EpsilonMachine::new(config.alphabet_size, emission, next)?;

    let sinks = graph::sink_components(&candidate.adjacency());
    // largest first; ties keep the component with the lowest member (sinks
    // arrive sorted by lowest member and max_by_key returns the last max)
    let retained = sinks
        .iter()
        .rev()
        .max_by_key(|c| c.len())
        .cloned()
        .expect("a finite graph has at least one sink component");
    let machine = candidate.restricted(&retained)?;
    let n_recurrent = retained.len();
    Ok(SampleReport {
        machine,
        n_candidates: n,
        n_recurrent,
        transient_fraction: 1.0 - n_recurrent as f64 / n as f64,
        n_recurrent_components_found: sinks.len(),
        retained,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyRow {
    pub machine_id: usize,
    pub seed: u64,
    pub n_candidates: usize,
    pub n_recurrent: usize,
    pub transient_fraction: f64,
    pub h_mu_nats: f64,
    pub pe_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveySummary {
    pub transient_fraction: Summary,
    pub h_mu_nats: Summary,
    pub pe_min: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Survey {
    pub rows: Vec<SurveyRow>,
    pub summary: SurveySummary,
}

pub const SURVEY_CSV_HEADER: &str =
    "machine_id,seed,n_candidates,n_recurrent,transient_fraction,h_mu_nats,pe_min";

impl Survey {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SURVEY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.machine_id,
                r.seed,
                r.n_candidates,
                r.n_recurrent,
                r.transient_fraction,
                r.h_mu_nats,
                r.pe_min
            ));
        }
        out
    }
}

/// Seed of machine `index` in a survey rooted at `master`.
pub fn survey_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, "survey", index as u64)
}

/// Samples and analyses `n_machines` independent machines. Machines are
/// processed on the current rayon pool; rows come back in index order.
pub fn survey(config: &SamplerConfig, n_machines: usize) -> Result<Survey, SamplerError> {
    config.check()?;
    if n_machines == 0 {
        return Err(SamplerError::InvalidConfig("n_machines must be >= 1".into()));
    }
    let rows: Result<Vec<SurveyRow>, SamplerError> = (0..n_machines)
        .into_par_iter()
        .map(|i| {
            let seed = survey_seed(config.seed, i);
            let report = sample_epsilon_machine(&SamplerConfig { seed, ..*config })?;
            let pi = stationary_distribution(&report.machine)?;
            Ok(SurveyRow {
                machine_id: i,
                seed,
                n_candidates: report.n_candidates,
                n_recurrent: report.n_recurrent,
                transient_fraction: report.transient_fraction,
                h_mu_nats: entropy_rate(&report.machine, &pi),
                pe_min: min_error_probability(&report.machine, &pi),
            })
        })
        .collect();
    let rows = rows?;
    let col = |f: fn(&SurveyRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let summary = SurveySummary {
        transient_fraction: Summary::of(&col(|r| r.transient_fraction)),
        h_mu_nats: Summary::of(&col(|r| r.h_mu_nats)),
        pe_min: Summary::of(&col(|r| r.pe_min)),
    };
    Ok(Survey { rows, summary })
}
