use nalgebra::{DMatrix, DVector};

use super::{graph, require_irreducible, EpsilonMachine, MachineError};

/// Machines up to this many states are solved densely; larger ones by
/// sparse power iteration.
pub const DENSE_SOLVE_MAX_STATES: usize = 512;

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITERS: usize = 1_000_000;
/// Accepted residual for the returned distribution.
const RESIDUAL_TOL: f64 = 1e-10;

/// Stationary distribution over causal states, `p(σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pi: Vec<f64>,
}

impl StationaryDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `‖πT − π‖_∞` against the machine's state-to-state matrix.
    pub fn residual(&self, machine: &EpsilonMachine) -> f64 {
        let next = step(machine, &self.pi);
        next.iter().zip(&self.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// One application of the state-to-state matrix: `(πT)(σ') = Σ π(σ) p(x|σ)`
/// over transitions `σ --x--> σ'`.
fn step(machine: &EpsilonMachine, pi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; pi.len()];
    step_into(machine, pi, &mut out);
    out
}

fn step_into(machine: &EpsilonMachine, pi: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (s, &mass) in pi.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for x in 0..machine.alphabet_size() {
            if let Some(d) = machine.next_state(s, x) {
                out[d] += mass * machine.emission(s, x);
            }
        }
    }
}

/// Solves `πT = π`, `Σπ = 1` for an irreducible machine.
pub fn stationary_distribution(
    machine: &EpsilonMachine,
) -> Result<StationaryDistribution, MachineError> {
    require_irreducible(machine)?;
    let n = machine.n_states();
    let mut pi = if n <= DENSE_SOLVE_MAX_STATES {
        dense_solve(machine)?
    } else {
        power_iteration(machine)?
    };
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    let dist = StationaryDistribution { pi };
    let residual = dist.residual(machine);
    if !(residual < RESIDUAL_TOL) {
        return Err(MachineError::NotConverged { residual, iterations: 0 });
    }
    Ok(dist)
}

fn dense_solve(machine: &EpsilonMachine) -> Result<Vec<f64>, MachineError> {
    let n = machine.n_states();
    // rows: (Tᵀ − I) π = 0, last row replaced by the normalization constraint
    let mut a = DMatrix::<f64>::zeros(n, n);
    for s in 0..n {
        a[(s, s)] -= 1.0;
        for x in 0..machine.alphabet_size() {
            if let Some(d) = machine.next_state(s, x) {
                a[(d, s)] += machine.emission(s, x);
            }
        }
    }
    for s in 0..n {
        a[(n - 1, s)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let solution = a
        .lu()
        .solve(&b)
        .ok_or_else(|| MachineError::NotIrreducible("singular stationary system".into()))?;
    Ok(solution.iter().copied().collect())
}

/// Sparse power iteration. For a chain of period `d > 1` the iterated vector
/// is the average of `d` consecutive iterates, which is invariant in shape
/// under `T` and converges to the stationary distribution.
fn power_iteration(machine: &EpsilonMachine) -> Result<Vec<f64>, MachineError> {
    let n = machine.n_states();
    let period = graph::period(&machine.adjacency()).max(1);
    let mut pi = vec![1.0 / n as f64; n];
    if period > 1 {
        let mut avg = pi.clone();
        let mut cur = pi.clone();
        let mut buf = vec![0.0; n];
        for _ in 1..period {
            step_into(machine, &cur, &mut buf);
            std::mem::swap(&mut cur, &mut buf);
            avg.iter_mut().zip(&cur).for_each(|(a, c)| *a += c);
        }
        avg.iter_mut().for_each(|a| *a /= period as f64);
        pi = avg;
    }
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 0..POWER_MAX_ITERS {
        step_into(machine, &pi, &mut next);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if residual < POWER_TOL {
            return Ok(pi);
        }
        // renormalize occasionally against drift
        if iter % 1024 == 1023 {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
        }
    }
    Err(MachineError::NotConverged { residual, iterations: POWER_MAX_ITERS })
}

#[cfg(test)]
mod tests {
    use super::super::catalog::*;
    use super::*;

    /// Brute force: average of many powers of T from a point mass.
    fn cesaro_oracle(machine: &EpsilonMachine, iters: usize) -> Vec<f64> {
        let n = machine.n_states();
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        let mut acc = vec![0.0; n];
        for _ in 0..iters {
            v = step(machine, &v);
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        }
        acc.iter().map(|a| a / iters as f64).collect()
    }

    #[test]
    fn single_state() {
        let pi = stationary_distribution(&fair_coin()).unwrap();
        assert_eq!(pi.probabilities(), &[1.0]);
    }

    #[test]
    fn golden_mean_two_thirds() {
        let gm = golden_mean();
        let pi = stationary_distribution(&gm).unwrap();
        let oracle = cesaro_oracle(&gm, 100_000);
        assert!((oracle[0] - 2.0 / 3.0).abs() < 1e-4);
        assert!((pi.probabilities()[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi.probabilities()[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!(pi.residual(&gm) < 1e-10);
    }

    #[test]
    fn period_two_half_half() {
        let pi = stationary_distribution(&period_two()).unwrap();
        assert!((pi.probabilities()[0] - 0.5).abs() < 1e-15);
        assert!((pi.probabilities()[1] - 0.5).abs() < 1e-15);
    }

    /// Deterministic ring of `n` states: period `n`, uniform stationary law.
    fn ring(n: usize) -> EpsilonMachine {
        let records: Vec<_> = (0..n).map(|s| (s, s % 2, 1.0, (s + 1) % n)).collect();
        EpsilonMachine::from_transitions(n, 2, &records).unwrap()
    }

    #[test]
    fn large_periodic_machine_uses_window_average() {
        let n = DENSE_SOLVE_MAX_STATES + 100;
        let pi = stationary_distribution(&ring(n)).unwrap();
        for &p in pi.probabilities() {
            assert!((p - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_and_power_agree() {
        // ring with a shortcut: aperiodic, above and below the dense threshold
        let build = |n: usize| {
            let mut records: Vec<_> = (1..n).map(|s| (s, 0, 0.7, (s + 1) % n)).collect();
            records.extend((1..n).map(|s| (s, 1, 0.3, 0)));
            records.push((0, 0, 1.0, 1));
            EpsilonMachine::from_transitions(n, 2, &records).unwrap()
        };
        let m = build(40);
        let dense = dense_solve(&m).unwrap();
        let power = power_iteration(&m).unwrap();
        for (a, b) in dense.iter().zip(&power) {
            assert!((a - b).abs() < 1e-11);
        }
        let big = build(DENSE_SOLVE_MAX_STATES * 2);
        let pi = stationary_distribution(&big).unwrap();
        assert!(pi.residual(&big) < 1e-10);
    }
}
