//! Finite unifilar hidden Markov chains (epsilon-machine presentations) and
//! their closed-form ground truths.
//!
//! A machine is a set of causal states, each with an emission distribution
//! `p(x|σ)` and a deterministic labelled transition `σ --x--> σ'` for every
//! symbol it can emit. From the stationary state distribution `p(σ)` follow
//! the entropy rate
//!
//! ```text
//! h_μ = -Σ_σ p(σ) Σ_x p(x|σ) ln p(x|σ)
//! ```
//!
//! and the minimal time-averaged next-symbol error probability, attained by
//! the synchronized predictor that always guesses `argmax_x p(x|σ)`:
//!
//! ```text
//! P_e^min = Σ_σ [1 - max_x p(x|σ)] p(σ)
//! ```
//!
//! All entropies are in nats.

pub mod graph;
mod stationary;
mod text;

pub use stationary::{stationary_distribution, StationaryDistribution, DENSE_SOLVE_MAX_STATES};
pub use text::{deserialize, serialize, ParseError};

use thiserror::Error;

/// Tolerance on emission-row normalization.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineError {
    #[error("malformed machine: {0}")]
    Shape(String),
    #[error("machine is not irreducible: {0}")]
    NotIrreducible(String),
    #[error("stationary solver did not converge (residual {residual:e} after {iterations} iterations)")]
    NotConverged { residual: f64, iterations: usize },
}

/// A finite unifilar hidden Markov chain.
///
/// `emission[σ][x] = p(x|σ)` and `next_state[σ][x]` is the unique successor of
/// `σ` on symbol `x`, or `None` where the symbol cannot be emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonMachine {
    alphabet_size: usize,
    emission: Vec<Vec<f64>>,
    next_state: Vec<Vec<Option<usize>>>,
}

impl EpsilonMachine {
    /// Builds a machine after checking array shapes and destination bounds.
    /// Probabilistic invariants are left to [`validate`].
    pub fn new(
        alphabet_size: usize,
        emission: Vec<Vec<f64>>,
        next_state: Vec<Vec<Option<usize>>>,
    ) -> Result<Self, MachineError> {
        if alphabet_size == 0 {
            return Err(MachineError::Shape("alphabet_size must be positive".into()));
        }
        let n = emission.len();
        if n == 0 {
            return Err(MachineError::Shape("machine needs at least one state".into()));
        }
        if next_state.len() != n {
            return Err(MachineError::Shape(format!(
                "{} emission rows but {} transition rows",
                n,
                next_state.len()
            )));
        }
        for (s, (e, t)) in emission.iter().zip(&next_state).enumerate() {
            if e.len() != alphabet_size || t.len() != alphabet_size {
                return Err(MachineError::Shape(format!(
                    "state {s}: rows must have {alphabet_size} entries"
                )));
            }
            if let Some(&d) = t.iter().flatten().find(|&&d| d >= n) {
                return Err(MachineError::Shape(format!(
                    "state {s}: destination {d} out of range (n_states = {n})"
                )));
            }
        }
        Ok(Self { alphabet_size, emission, next_state })
    }

    /// Builds a machine from `(state, symbol, probability, next_state)` records.
    /// Absent records mean `p(x|σ) = 0` with no transition.
    pub fn from_transitions(
        n_states: usize,
        alphabet_size: usize,
        records: &[(usize, usize, f64, usize)],
    ) -> Result<Self, MachineError> {
        let mut emission = vec![vec![0.0; alphabet_size]; n_states];
        let mut next = vec![vec![None; alphabet_size]; n_states];
        for &(s, x, p, d) in records {
            if s >= n_states || x >= alphabet_size {
                return Err(MachineError::Shape(format!("record ({s}, {x}) out of range")));
            }
            if next[s][x].is_some() {
                return Err(MachineError::Shape(format!(
                    "duplicate transition for state {s}, symbol {x}"
                )));
            }
            emission[s][x] = p;
            next[s][x] = Some(d);
        }
        Self::new(alphabet_size, emission, next)
    }

    pub fn n_states(&self) -> usize {
        self.emission.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    #[inline]
    pub fn emission(&self, state: usize, symbol: usize) -> f64 {
        self.emission[state][symbol]
    }

    pub fn emission_row(&self, state: usize) -> &[f64] {
        &self.emission[state]
    }

    #[inline]
    pub fn next_state(&self, state: usize, symbol: usize) -> Option<usize> {
        self.next_state[state][symbol]
    }

    /// Successor lists over transitions that carry positive probability.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.n_states())
            .map(|s| {
                let mut out: Vec<usize> = (0..self.alphabet_size)
                    .filter(|&x| self.emission[s][x] > 0.0)
                    .filter_map(|x| self.next_state[s][x])
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect()
    }

    /// Relabels states: new state `i` is old state `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self, MachineError> {
        let n = self.n_states();
        let mut inverse = vec![usize::MAX; n];
        if order.len() != n {
            return Err(MachineError::Shape("permutation length mismatch".into()));
        }
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(MachineError::Shape("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let emission = order.iter().map(|&old| self.emission[old].clone()).collect();
        let next_state = order
            .iter()
            .map(|&old| self.next_state[old].iter().map(|d| d.map(|d| inverse[d])).collect())
            .collect();
        Self::new(self.alphabet_size, emission, next_state)
    }

    /// Restricts the machine to `keep` (sorted original indices), reindexing
    /// states to `0..keep.len()`. Transitions leaving the kept set are an error.
    pub fn restricted(&self, keep: &[usize]) -> Result<Self, MachineError> {
        let mut map = vec![usize::MAX; self.n_states()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut emission = Vec::with_capacity(keep.len());
        let mut next = Vec::with_capacity(keep.len());
        for &old in keep {
            let row: Result<Vec<Option<usize>>, MachineError> = self.next_state[old]
                .iter()
                .map(|d| match d {
                    None => Ok(None),
                    Some(d) if map[*d] == usize::MAX => Err(MachineError::Shape(format!(
                        "state {old} leaves the retained set via {d}"
                    ))),
                    Some(d) => Ok(Some(map[*d])),
                })
                .collect();
            emission.push(self.emission[old].clone());
            next.push(row?);
        }
        Self::new(self.alphabet_size, emission, next)
    }
}

/// Pass/fail for each structural and probabilistic invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub probabilities_in_range: bool,
    pub normalized: bool,
    pub unifilar: bool,
    pub support_matches_transitions: bool,
    pub irreducible: bool,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.probabilities_in_range
            && self.normalized
            && self.unifilar
            && self.support_matches_transitions
            && self.irreducible
    }
}

/// Checks every machine invariant. Failures are collected, never thrown.
pub fn validate(machine: &EpsilonMachine) -> ValidationReport {
    let mut report = ValidationReport {
        probabilities_in_range: true,
        normalized: true,
        // single-valued by representation: one destination slot per (σ, x)
        unifilar: true,
        support_matches_transitions: true,
        irreducible: true,
        issues: Vec::new(),
    };
    for s in 0..machine.n_states() {
        let row = machine.emission_row(s);
        for (x, &p) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                report.probabilities_in_range = false;
                report.issues.push(format!("p({x}|{s}) = {p} outside [0, 1]"));
            }
            let has_edge = machine.next_state(s, x).is_some();
            if (p > 0.0) != has_edge {
                report.support_matches_transitions = false;
                report.issues.push(format!(
                    "state {s}, symbol {x}: p = {p} but transition {}",
                    if has_edge { "defined" } else { "missing" }
                ));
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            report.normalized = false;
            report.issues.push(format!("state {s}: emission sums to {sum}"));
        }
    }
    let adj = machine.adjacency();
    let (_, n_comp) = graph::strongly_connected_components(&adj);
    if n_comp != 1 {
        report.irreducible = false;
        report
            .issues
            .push(format!("{n_comp} strongly connected components, expected 1"));
    }
    report
}

pub(crate) fn require_irreducible(machine: &EpsilonMachine) -> Result<(), MachineError> {
    let adj = machine.adjacency();
    let (_, n_comp) = graph::strongly_connected_components(&adj);
    if n_comp != 1 {
        return Err(MachineError::NotIrreducible(format!(
            "{n_comp} strongly connected components"
        )));
    }
    Ok(())
}

#[inline]
fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Entropy rate in nats per symbol.
pub fn entropy_rate(machine: &EpsilonMachine, pi: &StationaryDistribution) -> f64 {
    let h: f64 = pi
        .probabilities()
        .iter()
        .enumerate()
        .map(|(s, &ps)| -ps * machine.emission_row(s).iter().map(|&p| xlnx(p)).sum::<f64>())
        .sum();
    h.max(0.0)
}

/// Minimal attainable time-averaged probability of a next-symbol error.
pub fn min_error_probability(machine: &EpsilonMachine, pi: &StationaryDistribution) -> f64 {
    pi.probabilities()
        .iter()
        .enumerate()
        .map(|(s, &ps)| {
            let best = machine.emission_row(s).iter().cloned().fold(0.0, f64::max);
            (1.0 - best) * ps
        })
        .sum::<f64>()
        .max(0.0)
}

/// Small reference machines with known closed-form properties.
pub mod catalog {
    use super::EpsilonMachine;

    /// Single-state i.i.d. binary source emitting 1 with probability `p1`.
    pub fn biased_coin(p1: f64) -> EpsilonMachine {
        let mut records = Vec::new();
        if p1 < 1.0 {
            records.push((0, 0, 1.0 - p1, 0));
        }
        if p1 > 0.0 {
            records.push((0, 1, p1, 0));
        }
        EpsilonMachine::from_transitions(1, 2, &records).expect("coin is well formed")
    }

    pub fn fair_coin() -> EpsilonMachine {
        biased_coin(0.5)
    }

    /// No two consecutive 1s: A -0(1/2)-> A, A -1(1/2)-> B, B -0(1)-> A.
    pub fn golden_mean() -> EpsilonMachine {
        EpsilonMachine::from_transitions(2, 2, &[(0, 0, 0.5, 0), (0, 1, 0.5, 1), (1, 0, 1.0, 0)])
            .expect("golden mean is well formed")
    }

    /// Deterministic alternation: A -1-> B, B -0-> A.
    pub fn period_two() -> EpsilonMachine {
        EpsilonMachine::from_transitions(2, 2, &[(0, 1, 1.0, 1), (1, 0, 1.0, 0)])
            .expect("period-2 is well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn single_state_coin_validates() {
        let r = validate(&fair_coin());
        assert!(r.is_valid(), "{:?}", r.issues);
    }

    #[test]
    fn unnormalized_row_fails() {
        let m = EpsilonMachine::from_transitions(1, 2, &[(0, 0, 0.6, 0), (0, 1, 0.5, 0)]).unwrap();
        let r = validate(&m);
        assert!(!r.normalized);
        assert!(r.irreducible);
        assert!(!r.is_valid());
    }

    #[test]
    fn disjoint_self_loops_fail_irreducibility() {
        let m = EpsilonMachine::from_transitions(2, 2, &[(0, 0, 1.0, 0), (1, 1, 1.0, 1)]).unwrap();
        let r = validate(&m);
        assert!(r.normalized);
        assert!(!r.irreducible);
        assert!(stationary_distribution(&m).is_err());
    }

    #[test]
    fn support_mismatch_detected() {
        let m = EpsilonMachine::new(2, vec![vec![1.0, 0.0]], vec![vec![Some(0), Some(0)]]).unwrap();
        assert!(!validate(&m).support_matches_transitions);
        let m = EpsilonMachine::new(2, vec![vec![0.5, 0.5]], vec![vec![Some(0), None]]).unwrap();
        assert!(!validate(&m).support_matches_transitions);
    }

    #[test]
    fn transient_state_fails_irreducibility() {
        // 0 -> 1, 1 loops: state 0 is transient
        let m = EpsilonMachine::from_transitions(2, 2, &[(0, 0, 1.0, 1), (1, 0, 1.0, 1)]).unwrap();
        assert!(!validate(&m).irreducible);
    }

    #[test]
    fn shape_errors() {
        assert!(EpsilonMachine::new(2, vec![], vec![]).is_err());
        assert!(EpsilonMachine::new(2, vec![vec![1.0]], vec![vec![Some(0)]]).is_err());
        assert!(EpsilonMachine::new(1, vec![vec![1.0]], vec![vec![Some(3)]]).is_err());
        assert!(EpsilonMachine::from_transitions(1, 2, &[(0, 0, 0.5, 0), (0, 0, 0.5, 0)]).is_err());
    }

    #[test]
    fn entropy_rate_examples() {
        let coin = fair_coin();
        let pi = stationary_distribution(&coin).unwrap();
        assert!((entropy_rate(&coin, &pi) - LN2).abs() < 1e-15);

        let biased = biased_coin(0.9);
        let pi = stationary_distribution(&biased).unwrap();
        let expected = -0.9f64 * 0.9f64.ln() - 0.1 * 0.1f64.ln();
        assert!((entropy_rate(&biased, &pi) - expected).abs() < 1e-15);
        assert!((entropy_rate(&biased, &pi) - 0.3251).abs() < 1e-4);

        let gm = golden_mean();
        let pi = stationary_distribution(&gm).unwrap();
        assert!((entropy_rate(&gm, &pi) - 2.0 / 3.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn min_error_examples() {
        let p2 = period_two();
        let pi = stationary_distribution(&p2).unwrap();
        assert_eq!(min_error_probability(&p2, &pi), 0.0);

        let coin = fair_coin();
        let pi = stationary_distribution(&coin).unwrap();
        assert!((min_error_probability(&coin, &pi) - 0.5).abs() < 1e-15);

        let gm = golden_mean();
        let pi = stationary_distribution(&gm).unwrap();
        assert!((min_error_probability(&gm, &pi) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn relabeling_is_invariant() {
        let gm = golden_mean();
        let swapped = gm.permuted(&[1, 0]).unwrap();
        assert!(validate(&swapped).is_valid());
        let (pa, pb) = (
            stationary_distribution(&gm).unwrap(),
            stationary_distribution(&swapped).unwrap(),
        );
        assert!((entropy_rate(&gm, &pa) - entropy_rate(&swapped, &pb)).abs() < 1e-14);
        assert!(
            (min_error_probability(&gm, &pa) - min_error_probability(&swapped, &pb)).abs() < 1e-14
        );
    }

    #[test]
    fn restriction_rejects_escaping_edges() {
        let gm = golden_mean();
        assert!(gm.restricted(&[0]).is_err());
        assert_eq!(gm.restricted(&[0, 1]).unwrap(), gm);
    }
}
