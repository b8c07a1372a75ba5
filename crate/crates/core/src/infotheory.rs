//! Exact word probabilities, block entropies, myopic entropy rates,
//! predictive information and Fano-inequality bounds.
//!
//! Word probabilities come from a depth-first walk over words that carries
//! the joint vector `p(w, σ)` (probability of having emitted `w` and being in
//! state `σ`). Unifilarity makes each step a permutation-with-merging of that
//! vector, so memory is `O(length · n_states)` regardless of how many words
//! are visited.

use std::f64::consts::LN_2;

use serde::Serialize;
use thiserror::Error;

use crate::machine::{
    entropy_rate, min_error_probability, stationary_distribution, EpsilonMachine, MachineError,
    StationaryDistribution,
};

/// Default limit on enumerated word length.
pub const DEFAULT_WORD_CAP: usize = 20;
/// Longest word enumerated for alphabets larger than two.
pub const NON_BINARY_WORD_CAP: usize = 10;
/// Words below this probability are dropped from enumeration.
pub const PRUNE_BELOW: f64 = 1e-300;

const HB_INVERSE_MAX_ITERS: usize = 200;
const LN2_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("word length {length} exceeds enumeration cap {cap}")]
    CapExceeded { length: usize, cap: usize },
    #[error("alphabet of size {alphabet} cannot be enumerated beyond length {max} (asked {length})")]
    UnsupportedAlphabet { alphabet: usize, length: usize, max: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("index {index} out of range (max {max})")]
    IndexOutOfRange { index: usize, max: usize },
    #[error(transparent)]
    Machine(#[from] MachineError),
}

/// `−p ln p − (1−p) ln(1−p)` in nats, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64, InfoError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(InfoError::Domain(format!("binary entropy needs p in [0, 1], got {p}")));
    }
    Ok(hb(p))
}

#[inline]
fn hb(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Inverse of the binary entropy on its increasing branch `[0, 1/2]`, by
/// bisection. Inputs within `1e-12` above `ln 2` clamp to `1/2`.
pub fn inverse_binary_entropy(h: f64) -> Result<f64, InfoError> {
    if !(h >= 0.0) || h > LN_2 + LN2_SLACK {
        return Err(InfoError::Domain(format!("inverse binary entropy needs h in [0, ln 2], got {h}")));
    }
    if h == 0.0 {
        return Ok(0.0);
    }
    if h >= LN_2 {
        return Ok(0.5);
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..HB_INVERSE_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if hb(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever endpoint is closer in entropy
    Ok(if (hb(lo) - h).abs() <= (hb(hi) - h).abs() { lo } else { hi })
}

/// Fano lower bound on next-symbol error for a binary predictor, and its
/// percentage excess over the optimal error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FanoBound {
    pub conditional_entropy: f64,
    pub pe_lower_bound: f64,
    pub pe_min: f64,
    /// `max(0, (bound − pe_min)/pe_min · 100)`. Infinite when `pe_min = 0`
    /// and the bound is positive.
    pub pct_increase_over_pe_min: f64,
}

pub fn fano_report(conditional_entropy: f64, pe_min: f64) -> Result<FanoBound, InfoError> {
    if !(0.0..=1.0).contains(&pe_min) {
        return Err(InfoError::Domain(format!("pe_min must lie in [0, 1], got {pe_min}")));
    }
    let bound = inverse_binary_entropy(conditional_entropy)?;
    Ok(FanoBound {
        conditional_entropy,
        pe_lower_bound: bound,
        pe_min,
        pct_increase_over_pe_min: pct_increase(bound, pe_min),
    })
}

/// Percentage increase of `value` over `reference`, floored at zero.
pub fn pct_increase(value: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        ((value - reference) / reference * 100.0).max(0.0)
    } else if value > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Exact probabilities of all words of one length, indexed base-`k` with the
/// earliest symbol most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct WordDistribution {
    pub length: usize,
    pub alphabet_size: usize,
    pub probs: Vec<f64>,
}

impl WordDistribution {
    pub fn prob(&self, word: &[usize]) -> f64 {
        assert_eq!(word.len(), self.length);
        let idx = word.iter().fold(0usize, |acc, &x| acc * self.alphabet_size + x);
        self.probs[idx]
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p >= PRUNE_BELOW).map(|&p| -p * p.ln()).sum()
    }
}

/// Myopic entropy rates `h(m) = H[X_0 | X_{−m:0}]` for `m = 0..=m_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MyopicCurve {
    pub m_max: usize,
    pub h_of_m: Vec<f64>,
    pub h_mu: f64,
}

impl MyopicCurve {
    pub fn h(&self, m: usize) -> Result<f64, InfoError> {
        self.h_of_m.get(m).copied().ok_or(InfoError::IndexOutOfRange { index: m, max: self.m_max })
    }
}

/// `I_pred(m) = Σ_{l=0}^{m} [h(l) − h_μ]`.
pub fn predictive_information(curve: &MyopicCurve, m: usize) -> Result<f64, InfoError> {
    if m > curve.m_max {
        return Err(InfoError::IndexOutOfRange { index: m, max: curve.m_max });
    }
    Ok(curve.h_of_m[..=m].iter().map(|h| (h - curve.h_mu).max(0.0)).sum())
}

/// Word enumeration over one machine with its stationary distribution.
pub struct WordEnumerator<'a> {
    machine: &'a EpsilonMachine,
    pi: StationaryDistribution,
    cap: usize,
}

impl<'a> WordEnumerator<'a> {
    pub fn new(machine: &'a EpsilonMachine) -> Result<Self, InfoError> {
        let pi = stationary_distribution(machine)?;
        Ok(Self::with_distribution(machine, pi))
    }

    pub fn with_distribution(machine: &'a EpsilonMachine, pi: StationaryDistribution) -> Self {
        Self { machine, pi, cap: DEFAULT_WORD_CAP }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        &self.pi
    }

    fn check_length(&self, length: usize) -> Result<(), InfoError> {
        if length > self.cap {
            return Err(InfoError::CapExceeded { length, cap: self.cap });
        }
        let k = self.machine.alphabet_size();
        if k > 2 && length > NON_BINARY_WORD_CAP {
            return Err(InfoError::UnsupportedAlphabet { alphabet: k, length, max: NON_BINARY_WORD_CAP });
        }
        Ok(())
    }

    /// Visits every word of length `1..=max_len` with nonnegligible
    /// probability, in depth-first lexicographic order.
    fn walk(&self, max_len: usize, visit: &mut impl FnMut(usize, usize, f64)) {
        let n = self.machine.n_states();
        let mut levels = vec![vec![0.0; n]; max_len];
        descend(self.machine, self.pi.probabilities(), &mut levels, 0, 0, visit);
    }

    pub fn word_distribution(&self, length: usize) -> Result<WordDistribution, InfoError> {
        self.check_length(length)?;
        let k = self.machine.alphabet_size();
        let mut probs = vec![0.0; k.pow(length as u32)];
        if length == 0 {
            probs[0] = 1.0;
        } else {
            self.walk(length, &mut |depth, index, p| {
                if depth == length {
                    probs[index] = p;
                }
            });
        }
        Ok(WordDistribution { length, alphabet_size: k, probs })
    }

    /// `H(L)` for `L = 0..=max_len`, with `H(0) = 0`.
    pub fn block_entropies(&self, max_len: usize) -> Result<Vec<f64>, InfoError> {
        self.check_length(max_len)?;
        let mut h = vec![0.0; max_len + 1];
        if max_len > 0 {
            self.walk(max_len, &mut |depth, _, p| {
                h[depth] -= p * p.ln();
            });
        }
        Ok(h)
    }

    /// Error probability of the best predictor that sees only the last `m`
    /// symbols: `Σ_w [p(w) − max_x p(wx)]` over words `w` of length `m`.
    pub fn myopic_error_probability(&self, m: usize) -> Result<f64, InfoError> {
        let words = self.word_distribution(m + 1)?;
        let k = words.alphabet_size;
        Ok(words
            .probs
            .chunks(k)
            .map(|next| next.iter().sum::<f64>() - next.iter().copied().fold(0.0, f64::max))
            .sum())
    }

    pub fn myopic_curve(&self, m_max: usize) -> Result<MyopicCurve, InfoError> {
        let blocks = self.block_entropies(m_max + 1)?;
        let h_of_m = blocks.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        Ok(MyopicCurve { m_max, h_of_m, h_mu: entropy_rate(self.machine, &self.pi) })
    }
}

fn descend(
    machine: &EpsilonMachine,
    current: &[f64],
    levels: &mut [Vec<f64>],
    depth: usize,
    index: usize,
    visit: &mut impl FnMut(usize, usize, f64),
) {
    let Some((child, deeper)) = levels.split_first_mut() else {
        return;
    };
    let k = machine.alphabet_size();
    for x in 0..k {
        child.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for (s, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let p = machine.emission(s, x);
            if p == 0.0 {
                continue;
            }
            if let Some(d) = machine.next_state(s, x) {
                let joint = mass * p;
                child[d] += joint;
                total += joint;
            }
        }
        if total < PRUNE_BELOW {
            continue;
        }
        let word = index * k + x;
        visit(depth + 1, word, total);
        descend(machine, child, deeper, depth + 1, word, visit);
    }
}

pub fn word_distribution(machine: &EpsilonMachine, length: usize) -> Result<WordDistribution, InfoError> {
    WordEnumerator::new(machine)?.word_distribution(length)
}

pub fn block_entropy(machine: &EpsilonMachine, length: usize) -> Result<f64, InfoError> {
    Ok(WordEnumerator::new(machine)?.block_entropies(length)?[length])
}

pub fn myopic_entropy_rate(machine: &EpsilonMachine, m_max: usize) -> Result<MyopicCurve, InfoError> {
    WordEnumerator::new(machine)?.myopic_curve(m_max)
}

/// Exact ground truths for one machine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessAnalysis {
    pub n_states: usize,
    pub h_mu: f64,
    pub pe_min: f64,
    pub curve: MyopicCurve,
    pub predictive_information: Vec<f64>,
    pub fano: Vec<FanoBound>,
}

pub const CURVE_CSV_HEADER: &str = "m,h_of_m_nats,h_mu_nats,pe_lower_bound,pe_min,pct_increase";

impl ProcessAnalysis {
    /// Curve rows without header, one per `m`.
    pub fn curve_rows(&self) -> Vec<String> {
        self.fano
            .iter()
            .enumerate()
            .map(|(m, f)| {
                format!(
                    "{},{},{},{},{},{}",
                    m,
                    self.curve.h_of_m[m],
                    self.h_mu,
                    f.pe_lower_bound,
                    self.pe_min,
                    f.pct_increase_over_pe_min
                )
            })
            .collect()
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from(CURVE_CSV_HEADER);
        out.push('\n');
        for row in self.curve_rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// Stationary law, `h_μ`, `P_e^min`, myopic curve to `m_max`, predictive
/// information and the Fano bound at every `m`.
pub fn analyze(machine: &EpsilonMachine, m_max: usize) -> Result<ProcessAnalysis, InfoError> {
    let enumerator = WordEnumerator::new(machine)?;
    analyze_with(&enumerator, m_max)
}

pub fn analyze_with(enumerator: &WordEnumerator<'_>, m_max: usize) -> Result<ProcessAnalysis, InfoError> {
    let machine = enumerator.machine;
    let pi = enumerator.stationary();
    let h_mu = entropy_rate(machine, pi);
    let pe_min = min_error_probability(machine, pi);
    let curve = enumerator.myopic_curve(m_max)?;
    let predictive_information = (0..=m_max)
        .map(|m| predictive_information(&curve, m))
        .collect::<Result<Vec<_>, _>>()?;
    let fano = curve
        .h_of_m
        .iter()
        .map(|&h| fano_report(h.min(LN_2), pe_min))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProcessAnalysis { n_states: machine.n_states(), h_mu, pe_min, curve, predictive_information, fano })
}

/// Closed-form myopic curve of a process whose predictive information grows
/// like `log m`: `h(m + 1) = h_μ + 1/m` for `m ≥ 1`.
///
/// Memory lengths 0 and 1 are assigned the maximal uncertainty `ln 2`, and
/// every value is capped at `ln 2`. The optimal error is taken as the Fano
/// bound at infinite memory, `Hb⁻¹(h_μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogMCurve {
    pub h_mu: f64,
}

impl Default for LogMCurve {
    fn default() -> Self {
        Self { h_mu: 0.5 }
    }
}

impl LogMCurve {
    pub fn new(h_mu: f64) -> Result<Self, InfoError> {
        if !(h_mu >= 0.0 && h_mu < LN_2) {
            return Err(InfoError::Domain(format!("h_mu must lie in [0, ln 2), got {h_mu}")));
        }
        Ok(Self { h_mu })
    }

    /// Conditional entropy given the last `memory` symbols.
    pub fn h_of_m(&self, memory: usize) -> f64 {
        if memory < 2 {
            return LN_2;
        }
        (self.h_mu + 1.0 / (memory - 1) as f64).min(LN_2)
    }

    pub fn pe_min(&self) -> f64 {
        inverse_binary_entropy(self.h_mu).expect("h_mu checked in range")
    }

    pub fn fano(&self, memory: usize) -> FanoBound {
        fano_report(self.h_of_m(memory), self.pe_min()).expect("values in range by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::catalog::*;

    #[test]
    fn binary_entropy_examples() {
        assert!((binary_entropy(0.5).unwrap() - LN_2).abs() < 1e-16);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.1).unwrap() - 0.3251).abs() < 1e-4);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse_binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(inverse_binary_entropy(LN_2).unwrap(), 0.5);
        assert_eq!(inverse_binary_entropy(LN_2 + 5e-13).unwrap(), 0.5);
        assert!(inverse_binary_entropy(LN_2 + 1e-9).is_err());
        assert!(inverse_binary_entropy(-1e-15).is_err());
        assert!(inverse_binary_entropy(f64::NAN).is_err());
        let h = binary_entropy(0.1).unwrap();
        assert!((inverse_binary_entropy(h).unwrap() - 0.1).abs() < 1e-12);
        // the rounded value from the examples lands near 0.1
        assert!((inverse_binary_entropy(0.3251).unwrap() - 0.1).abs() < 1e-4);
    }

    #[test]
    fn fano_floor_and_equality() {
        let f = fano_report(binary_entropy(0.25).unwrap(), 0.25).unwrap();
        assert!((f.pe_lower_bound - 0.25).abs() < 1e-12);
        assert!(f.pct_increase_over_pe_min < 1e-8);
        let f = fano_report(0.1, 0.3).unwrap();
        assert_eq!(f.pct_increase_over_pe_min, 0.0);
        assert_eq!(fano_report(0.2, 0.0).unwrap().pct_increase_over_pe_min, f64::INFINITY);
        assert_eq!(fano_report(0.0, 0.0).unwrap().pct_increase_over_pe_min, 0.0);
    }

    #[test]
    fn golden_mean_words() {
        let d = word_distribution(&golden_mean(), 2).unwrap();
        for (w, p) in [([0, 0], 1.0 / 3.0), ([0, 1], 1.0 / 3.0), ([1, 0], 1.0 / 3.0), ([1, 1], 0.0)] {
            assert!((d.prob(&w) - p).abs() < 1e-14, "{w:?}");
        }
    }

    #[test]
    fn coin_and_period_two_words() {
        let d = word_distribution(&fair_coin(), 3).unwrap();
        assert!(d.probs.iter().all(|&p| (p - 0.125).abs() < 1e-15));
        let d = word_distribution(&period_two(), 2).unwrap();
        assert_eq!(d.probs, vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn block_entropy_examples() {
        let gm = golden_mean();
        assert_eq!(block_entropy(&gm, 0).unwrap(), 0.0);
        let h1 = binary_entropy(1.0 / 3.0).unwrap();
        assert!((block_entropy(&gm, 1).unwrap() - h1).abs() < 1e-14);
        assert!((block_entropy(&gm, 1).unwrap() - 0.6365).abs() < 1e-4);
        assert!((block_entropy(&gm, 2).unwrap() - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn myopic_examples() {
        let c = myopic_entropy_rate(&golden_mean(), 6).unwrap();
        assert!((c.h_of_m[0] - 0.6365).abs() < 1e-4);
        for m in 1..=6 {
            assert!((c.h_of_m[m] - c.h_mu).abs() < 1e-12, "m={m}");
        }
        let c = myopic_entropy_rate(&fair_coin(), 5).unwrap();
        assert!(c.h_of_m.iter().all(|h| (h - LN_2).abs() < 1e-12));
    }

    #[test]
    fn predictive_information_examples() {
        let coin = myopic_entropy_rate(&fair_coin(), 5).unwrap();
        for m in 0..=5 {
            assert!(predictive_information(&coin, m).unwrap().abs() < 1e-12);
        }
        let gm = myopic_entropy_rate(&golden_mean(), 5).unwrap();
        let expected = binary_entropy(1.0 / 3.0).unwrap() - 2.0 / 3.0 * LN_2;
        assert!((expected - 0.1744).abs() < 1e-4);
        for m in 1..=5 {
            assert!((predictive_information(&gm, m).unwrap() - expected).abs() < 1e-12);
        }
        let p2 = myopic_entropy_rate(&period_two(), 5).unwrap();
        for m in 1..=5 {
            assert!((predictive_information(&p2, m).unwrap() - LN_2).abs() < 1e-12);
        }
        assert!(matches!(predictive_information(&p2, 6), Err(InfoError::IndexOutOfRange { .. })));
    }

    #[test]
    fn caps() {
        let gm = golden_mean();
        let e = WordEnumerator::new(&gm).unwrap();
        assert!(matches!(e.word_distribution(21), Err(InfoError::CapExceeded { .. })));
        assert!(matches!(e.myopic_curve(20), Err(InfoError::CapExceeded { .. })));
        let tri = crate::machine::EpsilonMachine::from_transitions(
            1,
            3,
            &[(0, 0, 0.2, 0), (0, 1, 0.3, 0), (0, 2, 0.5, 0)],
        )
        .unwrap();
        let e = WordEnumerator::new(&tri).unwrap();
        assert!(e.word_distribution(10).is_ok());
        assert!(matches!(e.word_distribution(11), Err(InfoError::UnsupportedAlphabet { .. })));
    }

    #[test]
    fn log_m_curve_decreases() {
        let c = LogMCurve::default();
        let p10 = c.fano(10).pct_increase_over_pe_min;
        let p100 = c.fano(100).pct_increase_over_pe_min;
        let p1000 = c.fano(1000).pct_increase_over_pe_min;
        assert!(p10 > p100 && p100 > p1000 && p1000 > 0.0);
        let mut prev = f64::INFINITY;
        for m in 2..10_000 {
            let pct = c.fano(m).pct_increase_over_pe_min;
            assert!(pct <= prev);
            prev = pct;
        }
    }
}
