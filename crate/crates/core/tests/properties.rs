//! Property tests over randomly generated inputs.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use proptest::prelude::*;

use epsbench::generator::{simulate, simulate_segment};
use epsbench::infotheory::{
    analyze, binary_entropy, fano_report, inverse_binary_entropy, pct_increase, WordEnumerator,
};
use epsbench::machine::{
    deserialize, entropy_rate, min_error_probability, serialize, stationary_distribution, EpsilonMachine,
};
use epsbench::predictors::{
    evaluate_error_rate, train_logistic_readout, NgrcConfig, PredictorSpec, DEFAULT_L2,
};
use epsbench::sampler::{sample_epsilon_machine, SamplerConfig};

fn sampled(n: usize, alpha: f64, seed: u64) -> EpsilonMachine {
    sample_epsilon_machine(&SamplerConfig::new(n, alpha, seed)).unwrap().machine
}

/// Irreducible machine on a ring: symbol 0 steps around the ring, symbol 1
/// jumps to an arbitrary state.
fn ring_machine(n: usize, jumps: &[usize], p1: &[f64]) -> EpsilonMachine {
    let mut t = Vec::new();
    for s in 0..n {
        let p = p1[s % p1.len()];
        t.push((s, 0, 1.0 - p, (s + 1) % n));
        t.push((s, 1, p, jumps[s % jumps.len()] % n));
    }
    EpsilonMachine::from_transitions(n, 2, &t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn binary_entropy_round_trip(h in 0.0..=LN_2) {
        let p = inverse_binary_entropy(h).unwrap();
        prop_assert!((0.0..=0.5).contains(&p));
        prop_assert!((binary_entropy(p).unwrap() - h).abs() < 1e-10);
    }

    #[test]
    fn inverse_binary_entropy_is_monotone(a in 0.0..=LN_2, b in 0.0..=LN_2) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(inverse_binary_entropy(lo).unwrap() <= inverse_binary_entropy(hi).unwrap());
    }

    #[test]
    fn pct_increase_is_floored(value in 0.0..1.0f64, reference in 0.0..1.0f64) {
        let pct = pct_increase(value, reference);
        prop_assert!(pct >= 0.0);
        if reference > 0.0 && value <= reference {
            prop_assert_eq!(pct, 0.0);
        }
    }

    #[test]
    fn stationary_distribution_is_invariant(n in 1usize..80, alpha in 0.2..5.0f64, seed in any::<u64>()) {
        let m = sampled(n, alpha, seed);
        let pi = stationary_distribution(&m).unwrap();
        let total: f64 = pi.probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(pi.probabilities().iter().all(|&p| p >= 0.0));
        prop_assert!(pi.residual(&m) < 1e-10);
    }

    #[test]
    fn myopic_curve_is_monotone_and_bounded(n in 1usize..60, alpha in 0.2..5.0f64, seed in any::<u64>()) {
        let m = sampled(n, alpha, seed);
        let a = analyze(&m, 8).unwrap();
        let h = &a.curve.h_of_m;
        prop_assert!(h[0] <= LN_2 + 1e-12);
        for w in h.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", h);
        }
        for &hm in h {
            prop_assert!(hm >= a.h_mu - 1e-9, "{} < {}", hm, a.h_mu);
        }
        for w in a.predictive_information.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn fano_bound_never_exceeds_optimal_error(n in 1usize..300, alpha in 0.2..5.0f64, seed in any::<u64>()) {
        let m = sampled(n, alpha, seed);
        let pi = stationary_distribution(&m).unwrap();
        let h_mu = entropy_rate(&m, &pi);
        let pe_min = min_error_probability(&m, &pi);
        prop_assert!(inverse_binary_entropy(h_mu.min(LN_2)).unwrap() <= pe_min + 1e-9);
        let f = fano_report(h_mu.min(LN_2), pe_min).unwrap();
        prop_assert_eq!(f.pct_increase_over_pe_min, 0.0);
    }

    #[test]
    fn relabelling_preserves_everything(n in 2usize..50, seed in any::<u64>(), shuffle in any::<u64>()) {
        let m = sampled(n, 1.0, seed);
        let k = m.n_states();
        // deterministic Fisher–Yates from the shuffle seed
        let mut order: Vec<usize> = (0..k).collect();
        let mut state = shuffle | 1;
        for i in (1..k).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            order.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let p = m.permuted(&order).unwrap();
        let a = analyze(&m, 6).unwrap();
        let b = analyze(&p, 6).unwrap();
        prop_assert!((a.h_mu - b.h_mu).abs() < 1e-12);
        prop_assert!((a.pe_min - b.pe_min).abs() < 1e-12);
        for (x, y) in a.curve.h_of_m.iter().zip(&b.curve.h_of_m) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn text_format_round_trip(n in 1usize..120, alpha in 0.1..5.0f64, seed in any::<u64>()) {
        let m = sampled(n, alpha, seed);
        let back = deserialize(&serialize(&m)).unwrap();
        prop_assert_eq!(&back, &m);
    }

    #[test]
    fn simulation_is_reproducible_in_pieces(n in 1usize..40, seed in any::<u64>(), cut in 1usize..500) {
        let m = sampled(n, 1.0, seed);
        let full = simulate(&m, 600, seed).unwrap();
        let states = full.states.as_ref().unwrap();
        let (tail, tail_states) = simulate_segment(&m, states[cut], cut, 600 - cut, seed);
        prop_assert_eq!(&tail[..], &full.symbols[cut..]);
        prop_assert_eq!(&tail_states[..], &states[cut..]);
    }

    #[test]
    fn logistic_objective_never_increases(
        rows in prop::collection::vec((prop::collection::vec(-3.0..3.0f64, 3), any::<bool>()), 5..200)
    ) {
        let x = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i].0[j]);
        let y: Vec<u8> = rows.iter().map(|r| r.1 as u8).collect();
        let r = train_logistic_readout(&x, &y, DEFAULT_L2).unwrap();
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert!(r.weights.iter().all(|w| w.is_finite()));
        for row in &rows {
            let p = r.predict(&row.0);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    /// A held-out NG-RC error cannot beat the best predictor with the same
    /// memory by more than sampling noise, and that in turn is above the
    /// Fano bound at that memory.
    #[test]
    fn ngrc_respects_memory_limits(n in 5usize..60, seed in any::<u64>()) {
        let m = sampled(n, 1.0, seed);
        let memory = 3;
        let en = WordEnumerator::new(&m).unwrap();
        let curve = en.myopic_curve(memory).unwrap();
        let fano = inverse_binary_entropy(curve.h_of_m[memory].min(LN_2)).unwrap();
        let optimal = en.myopic_error_probability(memory).unwrap();
        prop_assert!(fano <= optimal + 1e-12);
        let s = simulate(&m, 40_000, seed ^ 1).unwrap().symbols;
        let p = PredictorSpec::Ngrc(NgrcConfig::new(memory)).train(&s, 30_000, DEFAULT_L2).unwrap();
        let e = evaluate_error_rate(&p, &s, 30_000..40_000).unwrap();
        // binomial standard error at 10^4 samples is at most 0.005
        prop_assert!(e >= optimal - 3.0 * 0.005, "{} vs {}", e, optimal);
        prop_assert_eq!(e, evaluate_error_rate(&p, &s, 30_000..40_000).unwrap());
    }
}

#[test]
fn large_machine_round_trip_is_bit_exact() {
    let jumps: Vec<usize> = (0..240).map(|s| (s * 97 + 13) % 240).collect();
    let p1: Vec<f64> = (0..240).map(|s| ((s * 37 % 101) as f64 + 0.5) / 102.0).collect();
    let m = ring_machine(240, &jumps, &p1);
    let back = deserialize(&serialize(&m)).unwrap();
    assert_eq!(back, m);
    let h = |m: &EpsilonMachine| entropy_rate(m, &stationary_distribution(m).unwrap());
    assert_eq!(h(&back).to_bits(), h(&m).to_bits());
}
