//! Discrete-time renewal processes as count-state epsilon-machines.
//!
//! A renewal process emits 1 at events and 0 between them; interevent counts
//! are i.i.d. with pmf `F(n)` and survival `w(n) = Σ_{m≥n} F(m)`. The causal
//! state is the number of 0s since the last event, and state `n` emits an
//! event with the hazard `F(n)/w(n)`.
//!
//! The chain is truncated at `n_max` by a forced reset: the last state emits
//! 1 with probability one. This keeps the presentation finite, unifilar and
//! irreducible. Heavy-tailed quantities depend on `n_max`, so it travels with
//! every result.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::infotheory::{analyze_with, InfoError, ProcessAnalysis, WordEnumerator, CURVE_CSV_HEADER};
use crate::machine::{EpsilonMachine, MachineError};

/// Default truncation for power-law survival functions.
pub const DEFAULT_POWER_LAW_N_MAX: usize = 10_000;

const SURVIVAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenewalError {
    #[error("degenerate survival specification: {0}")]
    DegenerateSpec(String),
    #[error("index {index} out of range (n_max = {n_max})")]
    IndexOutOfRange { index: usize, n_max: usize },
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Info(#[from] InfoError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SurvivalFamily {
    /// `w(0) = 1`, `w(n) = n^{−β}` for `n ≥ 1`.
    PowerLaw { beta: f64 },
    /// Interevent law of the two-state generator with self-loop
    /// probabilities `p` and `q`:
    /// `F(n) = (1−p)(1−q)(pⁿ − qⁿ)/(p − q)`, or `(1−p)² n p^{n−1}` when `p = q`.
    FromPq { p: f64, q: f64 },
    /// Tabulated `w(0..=n_max)`; survival beyond the table is zero.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalSpec {
    pub family: SurvivalFamily,
    pub n_max: usize,
}

impl fmt::Display for SurvivalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            SurvivalFamily::PowerLaw { beta } => write!(f, "power-law(beta={beta}, n_max={})", self.n_max),
            SurvivalFamily::FromPq { p, q } => write!(f, "pq(p={p}, q={q}, n_max={})", self.n_max),
            SurvivalFamily::Explicit(_) => write!(f, "explicit(n_max={})", self.n_max),
        }
    }
}

impl SurvivalSpec {
    pub fn power_law(beta: f64, n_max: usize) -> Self {
        Self { family: SurvivalFamily::PowerLaw { beta }, n_max }
    }

    pub fn from_pq(p: f64, q: f64, n_max: usize) -> Self {
        Self { family: SurvivalFamily::FromPq { p, q }, n_max }
    }

    /// `table[n] = w(n)` for `n = 0..table.len()`; `n_max = table.len() − 1`.
    pub fn explicit(table: Vec<f64>) -> Result<Self, RenewalError> {
        if table.is_empty() {
            return Err(RenewalError::DegenerateSpec("empty survival table".into()));
        }
        let n_max = table.len() - 1;
        Ok(Self { family: SurvivalFamily::Explicit(table), n_max })
    }

    /// Survival table with constant hazard `h`: `w(n) = (1−h)ⁿ`.
    pub fn constant_hazard(hazard: f64, n_max: usize) -> Result<Self, RenewalError> {
        Self::explicit((0..=n_max).map(|n| (1.0 - hazard).powi(n as i32)).collect())
    }

    /// `w(n)` for `0 ≤ n ≤ n_max + 1`.
    pub fn survival(&self, n: usize) -> f64 {
        match &self.family {
            SurvivalFamily::PowerLaw { beta } => {
                if n == 0 {
                    1.0
                } else {
                    (n as f64).powf(-beta)
                }
            }
            SurvivalFamily::FromPq { p, q } => {
                let (p, q, nf) = (*p, *q, n as f64);
                if p == q {
                    if n == 0 {
                        1.0
                    } else {
                        p.powf(nf - 1.0) * (nf * (1.0 - p) + p)
                    }
                } else {
                    ((1.0 - q) * p.powf(nf) - (1.0 - p) * q.powf(nf)) / (p - q)
                }
            }
            SurvivalFamily::Explicit(table) => table.get(n).copied().unwrap_or(0.0),
        }
    }

    pub fn check(&self) -> Result<(), RenewalError> {
        match &self.family {
            SurvivalFamily::PowerLaw { beta } if !(*beta > 0.0 && beta.is_finite()) => {
                return Err(RenewalError::DegenerateSpec(format!("beta must be positive, got {beta}")))
            }
            SurvivalFamily::FromPq { p, q } if !(0.0 < *p && *p < 1.0 && 0.0 < *q && *q < 1.0) => {
                return Err(RenewalError::DegenerateSpec(format!("p, q must lie in (0, 1), got {p}, {q}")))
            }
            SurvivalFamily::Explicit(table) if table.len() != self.n_max + 1 => {
                return Err(RenewalError::DegenerateSpec("table length must be n_max + 1".into()))
            }
            _ => {}
        }
        if (self.survival(0) - 1.0).abs() > SURVIVAL_TOL {
            return Err(RenewalError::DegenerateSpec(format!("w(0) = {} != 1", self.survival(0))));
        }
        let mut prev = self.survival(0);
        for n in 1..=self.n_max {
            let w = self.survival(n);
            if !(w > 0.0) {
                return Err(RenewalError::DegenerateSpec(format!("w({n}) = {w} is not positive")));
            }
            if w > prev * (1.0 + SURVIVAL_TOL) {
                return Err(RenewalError::DegenerateSpec(format!("w increases at n = {n}")));
            }
            prev = w;
        }
        Ok(())
    }

    /// Interevent pmf `F(n)` before truncation. At `n_max` the forced reset
    /// additionally absorbs the tail mass `w(n_max + 1)`.
    pub fn interevent_pmf(&self, n: usize) -> Result<f64, RenewalError> {
        if n > self.n_max {
            return Err(RenewalError::IndexOutOfRange { index: n, n_max: self.n_max });
        }
        let f = match &self.family {
            SurvivalFamily::FromPq { p, q } => {
                let (p, q, nf) = (*p, *q, n as f64);
                if n == 0 {
                    0.0
                } else if p == q {
                    (1.0 - p).powi(2) * nf * p.powf(nf - 1.0)
                } else {
                    (1.0 - p) * (1.0 - q) * (p.powf(nf) - q.powf(nf)) / (p - q)
                }
            }
            _ => self.survival(n) - self.survival(n + 1),
        };
        Ok(f.clamp(0.0, 1.0))
    }

    /// Event probability in count state `n`; 1 at the truncation state.
    pub fn hazard(&self, n: usize) -> Result<f64, RenewalError> {
        if n == self.n_max {
            return Ok(1.0);
        }
        Ok(self.interevent_pmf(n)? / self.survival(n))
    }
}

/// Count-state machine over states `0..=n_max`: state `n` emits 1 with the
/// hazard and resets to 0, or emits 0 and advances to `n + 1`.
pub fn build_renewal_machine(spec: &SurvivalSpec) -> Result<EpsilonMachine, RenewalError> {
    spec.check()?;
    let n_states = spec.n_max + 1;
    let mut records = Vec::with_capacity(2 * n_states);
    for n in 0..n_states {
        let h = spec.hazard(n)?;
        if !(0.0..=1.0).contains(&h) {
            return Err(RenewalError::DegenerateSpec(format!("hazard {h} at n = {n} outside [0, 1]")));
        }
        if h < 1.0 {
            records.push((n, 0, 1.0 - h, n + 1));
        }
        if h > 0.0 {
            records.push((n, 1, h, 0));
        }
    }
    Ok(EpsilonMachine::from_transitions(n_states, 2, &records)?)
}

/// Fano percentage-increase curve of a renewal process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalCurve {
    pub spec: SurvivalSpec,
    pub analysis: ProcessAnalysis,
}

impl RenewalCurve {
    /// `(m, pct increase)` pairs.
    pub fn pct_curve(&self) -> Vec<(usize, f64)> {
        self.analysis.fano.iter().enumerate().map(|(m, f)| (m, f.pct_increase_over_pe_min)).collect()
    }

    pub fn csv_header(&self) -> String {
        format!("{},{}", self.param_header(), CURVE_CSV_HEADER)
    }

    fn param_header(&self) -> &'static str {
        match self.spec.family {
            SurvivalFamily::PowerLaw { .. } => "beta,n_max",
            SurvivalFamily::FromPq { .. } => "p,q,n_max",
            SurvivalFamily::Explicit(_) => "n_max",
        }
    }

    fn param_values(&self) -> String {
        match &self.spec.family {
            SurvivalFamily::PowerLaw { beta } => format!("{beta},{}", self.spec.n_max),
            SurvivalFamily::FromPq { p, q } => format!("{p},{q},{}", self.spec.n_max),
            SurvivalFamily::Explicit(_) => format!("{}", self.spec.n_max),
        }
    }

    /// Data rows (no header).
    pub fn csv_rows(&self) -> Vec<String> {
        let prefix = self.param_values();
        self.analysis.curve_rows().into_iter().map(|r| format!("{prefix},{r}")).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in self.csv_rows() {
            out.push_str(&r);
            out.push('\n');
        }
        out
    }
}

pub fn renewal_fano_curve(spec: &SurvivalSpec, m_max: usize) -> Result<RenewalCurve, RenewalError> {
    let machine = build_renewal_machine(spec)?;
    let enumerator = WordEnumerator::new(&machine)?;
    let analysis = analyze_with(&enumerator, m_max)?;
    Ok(RenewalCurve { spec: spec.clone(), analysis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::binary_entropy;
    use crate::machine::{entropy_rate, stationary_distribution, validate};

    #[test]
    fn pq_pmf_examples() {
        let s = SurvivalSpec::from_pq(0.5, 0.5, 50);
        assert!((s.interevent_pmf(1).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(s.interevent_pmf(0).unwrap(), 0.0);
        assert!(s.interevent_pmf(51).is_err());
    }

    #[test]
    fn pq_survival_matches_tail_sums() {
        for (p, q) in [(0.3, 0.7), (0.5, 0.5), (0.9, 0.2)] {
            let s = SurvivalSpec::from_pq(p, q, 400);
            s.check().unwrap();
            // brute-force tail sum of F over a long horizon
            let big = SurvivalSpec::from_pq(p, q, 3000);
            for n in [0usize, 1, 2, 5, 17] {
                let tail: f64 = (n..3000).map(|k| big.interevent_pmf(k).unwrap()).sum();
                assert!((s.survival(n) - tail).abs() < 1e-12, "p={p} q={q} n={n}");
                let diff = s.survival(n) - s.survival(n + 1);
                assert!((s.interevent_pmf(n).unwrap() - diff).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn power_law_pmf_examples() {
        let s = SurvivalSpec::power_law(2.0, 10);
        assert!((s.interevent_pmf(1).unwrap() - 0.75).abs() < 1e-15);
        for beta in [0.5, 1.0, 3.0] {
            assert_eq!(SurvivalSpec::power_law(beta, 10).interevent_pmf(0).unwrap(), 0.0);
        }
    }

    #[test]
    fn power_law_two_machine() {
        let m = build_renewal_machine(&SurvivalSpec::power_law(2.0, 2)).unwrap();
        assert!(validate(&m).is_valid());
        assert_eq!(m.emission(0, 0), 1.0);
        assert_eq!(m.next_state(0, 1), None);
        assert!((m.emission(1, 1) - 0.75).abs() < 1e-15);
        assert_eq!(m.emission(2, 1), 1.0);
        assert_eq!(m.next_state(2, 0), None);
    }

    #[test]
    fn zero_truncation_is_period_one() {
        let m = build_renewal_machine(&SurvivalSpec::power_law(1.0, 0)).unwrap();
        assert_eq!(m.n_states(), 1);
        assert_eq!(m.emission(0, 1), 1.0);
        assert!(validate(&m).is_valid());
    }

    #[test]
    fn constant_hazard_matches_coin() {
        let spec = SurvivalSpec::constant_hazard(0.3, 120).unwrap();
        let m = build_renewal_machine(&spec).unwrap();
        for n in 0..120 {
            assert!((m.emission(n, 1) - 0.3).abs() < 1e-12, "n={n}");
        }
        let pi = stationary_distribution(&m).unwrap();
        let h = entropy_rate(&m, &pi);
        assert!((h - binary_entropy(0.3).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn hazard_identity() {
        let spec = SurvivalSpec::power_law(1.3, 200);
        let m = build_renewal_machine(&spec).unwrap();
        for n in 0..200 {
            let expect = spec.interevent_pmf(n).unwrap() / spec.survival(n);
            assert_eq!(m.emission(n, 1), expect);
        }
    }

    #[test]
    fn stationary_is_proportional_to_survival() {
        for spec in [SurvivalSpec::power_law(1.0, 300), SurvivalSpec::from_pq(0.4, 0.8, 200)] {
            let m = build_renewal_machine(&spec).unwrap();
            let pi = stationary_distribution(&m).unwrap();
            let total: f64 = (0..=spec.n_max).map(|n| spec.survival(n)).sum();
            for n in 0..=spec.n_max {
                assert!((pi.probabilities()[n] - spec.survival(n) / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_specs() {
        assert!(SurvivalSpec::power_law(0.0, 5).check().is_err());
        assert!(SurvivalSpec::from_pq(1.0, 0.5, 5).check().is_err());
        assert!(SurvivalSpec::explicit(vec![1.0, 0.5, 0.7]).unwrap().check().is_err());
        assert!(SurvivalSpec::explicit(vec![0.9, 0.5]).unwrap().check().is_err());
        assert!(SurvivalSpec::explicit(vec![1.0, 0.0]).unwrap().check().is_err());
        assert!(build_renewal_machine(&SurvivalSpec::explicit(vec![1.0, 0.5, 0.6]).unwrap()).is_err());
    }

    #[test]
    fn constant_hazard_curve_is_flat() {
        let c = renewal_fano_curve(&SurvivalSpec::constant_hazard(0.3, 150).unwrap(), 8).unwrap();
        for (_, pct) in c.pct_curve() {
            assert!(pct < 1e-6, "{pct}");
        }
        assert!(c.to_csv().starts_with("n_max,m,h_of_m_nats"));
    }
}
