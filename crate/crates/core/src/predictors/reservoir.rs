//! Classical reservoir with a tanh block and a linear block:
//!
//! ```text
//! s^nl_{t+1} = tanh(W^nl s^nl_t + v^nl x_t)
//! s^l_{t+1}  = W^l s^l_t + v^l x_t
//! ```
//!
//! The full state is `(s^nl, s^l)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PredictorError;
use crate::seeds::stream_rng;

pub const DEFAULT_SPECTRAL_RADIUS: f64 = 0.99;
pub const DEFAULT_NONLINEAR_FRACTION: f64 = 0.5;
pub const DEFAULT_WASHOUT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_nodes: usize,
    pub nonlinear_fraction: f64,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub washout: usize,
    pub seed: u64,
}

impl ReservoirConfig {
    pub fn new(n_nodes: usize, seed: u64) -> Self {
        Self {
            n_nodes,
            nonlinear_fraction: DEFAULT_NONLINEAR_FRACTION,
            spectral_radius: DEFAULT_SPECTRAL_RADIUS,
            input_scale: 1.0,
            washout: DEFAULT_WASHOUT,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), PredictorError> {
        let bad = |msg: String| Err(PredictorError::InvalidConfig(msg));
        if self.n_nodes == 0 {
            return bad("reservoir needs n_nodes >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.nonlinear_fraction) {
            return bad(format!("nonlinear_fraction must be in [0, 1], got {}", self.nonlinear_fraction));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return bad(format!("spectral_radius must be > 0, got {}", self.spectral_radius));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return bad(format!("input_scale must be > 0, got {}", self.input_scale));
        }
        Ok(())
    }

    pub fn n_nonlinear(&self) -> usize {
        ((self.n_nodes as f64) * self.nonlinear_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub w: DMatrix<f64>,
    pub v: DVector<f64>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirParams {
    pub nonlinear: Block,
    pub linear: Block,
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    w.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_block<R: Rng>(rng: &mut R, n: usize, config: &ReservoirConfig) -> Block {
    let scale = 1.0 / (n.max(1) as f64).sqrt();
    let mut w = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
    let v = DVector::from_fn(n, |_, _| rng.random_range(-config.input_scale..=config.input_scale));
    let rho = spectral_radius(&w);
    if rho > 0.0 {
        w *= config.spectral_radius / rho;
    }
    Block { w, v }
}

pub fn init_reservoir(config: &ReservoirConfig) -> Result<ReservoirParams, PredictorError> {
    config.check()?;
    let n_nl = config.n_nonlinear();
    let mut rng = stream_rng(config.seed, 0);
    let nonlinear = random_block(&mut rng, n_nl, config);
    let linear = random_block(&mut rng, config.n_nodes - n_nl, config);
    Ok(ReservoirParams { nonlinear, linear })
}

impl ReservoirParams {
    pub fn n_nodes(&self) -> usize {
        self.nonlinear.len() + self.linear.len()
    }

    /// Drives the reservoir with `series`, calling `visit(τ, state)` for
    /// τ = 0..=len where `state` is the state after consuming `x_{<τ}`.
    pub fn drive(&self, series: &[u8], mut visit: impl FnMut(usize, &[f64])) {
        let n_nl = self.nonlinear.len();
        let n = self.n_nodes();
        let mut state = vec![0.0; n];
        let mut scratch = DVector::<f64>::zeros(n);
        visit(0, &state);
        for (t, &x) in series.iter().enumerate() {
            let x = x as f64;
            let (s_nl, s_l) = state.split_at(n_nl);
            if n_nl > 0 {
                let mut out = scratch.rows_mut(0, n_nl);
                out.gemv(1.0, &self.nonlinear.w, &DVector::from_column_slice(s_nl), 0.0);
                out.axpy(x, &self.nonlinear.v, 1.0);
                out.apply(|z| *z = z.tanh());
            }
            if n > n_nl {
                let mut out = scratch.rows_mut(n_nl, n - n_nl);
                out.gemv(1.0, &self.linear.w, &DVector::from_column_slice(s_l), 0.0);
                out.axpy(x, &self.linear.v, 1.0);
            }
            state.copy_from_slice(scratch.as_slice());
            visit(t + 1, &state);
        }
    }
}

/// Reservoir trajectory: `states[τ]` is the state after consuming `x_{<τ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirStates {
    pub n_nodes: usize,
    pub washout: usize,
    data: Vec<f64>,
}

impl ReservoirStates {
    pub fn len(&self) -> usize {
        self.data.len() / self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, tau: usize) -> &[f64] {
        &self.data[tau * self.n_nodes..(tau + 1) * self.n_nodes]
    }

    /// Whether `states[τ]` falls inside the initial transient.
    pub fn in_washout(&self, tau: usize) -> bool {
        tau < self.washout
    }
}

pub fn run_reservoir(params: &ReservoirParams, series: &[u8], washout: usize) -> ReservoirStates {
    let n = params.n_nodes();
    let mut data = Vec::with_capacity((series.len() + 1) * n);
    params.drive(series, |_, s| data.extend_from_slice(s));
    ReservoirStates { n_nodes: n, washout, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Orthogonal iteration on a 2-dimensional subspace: converges to the
    /// dominant real eigenvalue or complex-conjugate pair alike.
    fn subspace_radius(w: &DMatrix<f64>) -> f64 {
        let n = w.nrows();
        let mut q = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        for _ in 0..20_000 {
            q = (w * q).qr().q();
        }
        let small = q.transpose() * w * &q;
        let (a, b, c, d) = (small[(0, 0)], small[(0, 1)], small[(1, 0)], small[(1, 1)]);
        let tr = a + d;
        let det = a * d - b * c;
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            (tr / 2.0).abs() + disc.sqrt()
        } else {
            det.sqrt()
        }
    }

    #[test]
    fn scalar_reservoir() {
        let mut c = ReservoirConfig::new(1, 5);
        c.nonlinear_fraction = 0.0;
        let p = init_reservoir(&c).unwrap();
        assert!(p.nonlinear.is_empty());
        assert!((p.linear.w[(0, 0)].abs() - 0.99).abs() < 1e-15);
    }

    #[test]
    fn blocks_have_configured_radius() {
        let p = init_reservoir(&ReservoirConfig::new(110, 2)).unwrap();
        assert_eq!(p.nonlinear.len(), 55);
        assert_eq!(p.linear.len(), 55);
        for block in [&p.nonlinear, &p.linear] {
            let independent = subspace_radius(&block.w);
            assert!((independent - 0.99).abs() < 1e-6, "{independent}");
            assert!((spectral_radius(&block.w) - 0.99).abs() < 1e-9);
        }
        let full = init_reservoir(&ReservoirConfig { nonlinear_fraction: 0.0, ..ReservoirConfig::new(110, 2) }).unwrap();
        assert!((subspace_radius(&full.linear.w) - 0.99).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let c = ReservoirConfig::new(20, 11);
        assert_eq!(init_reservoir(&c).unwrap(), init_reservoir(&c).unwrap());
        assert_ne!(init_reservoir(&c).unwrap(), init_reservoir(&ReservoirConfig::new(20, 12)).unwrap());
    }

    #[test]
    fn constant_input_fixed_point() {
        let p = ReservoirParams {
            nonlinear: Block { w: DMatrix::zeros(0, 0), v: DVector::zeros(0) },
            linear: Block { w: DMatrix::from_element(1, 1, 0.0), v: DVector::from_element(1, 1.0) },
        };
        let states = run_reservoir(&p, &[1; 10], 0);
        assert_eq!(states.state(0), &[0.0]);
        for t in 1..=10 {
            assert_eq!(states.state(t), &[1.0]);
        }
    }

    #[test]
    fn linear_block_decays_under_zero_input() {
        let c = ReservoirConfig { nonlinear_fraction: 0.0, ..ReservoirConfig::new(40, 3) };
        let p = init_reservoir(&c).unwrap();
        let mut series = vec![1u8; 5];
        series.extend(std::iter::repeat_n(0, 30_000));
        let st = run_reservoir(&p, &series, 0);
        let norm = |t: usize| st.state(t).iter().map(|v| v * v).sum::<f64>().sqrt();
        // asymptotic per-step contraction, measured over a long stretch
        let rate = (norm(30_005) / norm(20_005)).powf(1.0 / 10_000.0);
        assert!(rate <= 0.99 + 1e-6, "{rate}");
        assert!(rate > 0.9);
    }

    #[test]
    fn states_stay_bounded() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let series: Vec<u8> = (0..100_000).map(|_| rng.random_range(0..2)).collect();
        let p = init_reservoir(&ReservoirConfig::new(30, 4)).unwrap();
        let n_nl = p.nonlinear.len();
        // ‖s^l‖ ≤ Σ_k ‖W^k‖ ‖v‖; the norm of powers of a random matrix with
        // radius 0.99 stays within a modest constant of 0.99^k
        let v_norm = p.linear.v.norm();
        let mut max_lin: f64 = 0.0;
        p.drive(&series, |_, s| {
            assert!(s.iter().all(|v| v.is_finite()));
            assert!(s[..n_nl].iter().all(|v| v.abs() <= 1.0));
            max_lin = max_lin.max(s[n_nl..].iter().map(|v| v * v).sum::<f64>().sqrt());
        });
        assert!(max_lin < 100.0 * v_norm / (1.0 - 0.99), "{max_lin}");
    }

    #[test]
    fn washout_flag() {
        let p = init_reservoir(&ReservoirConfig::new(4, 0)).unwrap();
        let st = run_reservoir(&p, &[1, 0, 1], 2);
        assert_eq!(st.len(), 4);
        assert!(st.in_washout(1));
        assert!(!st.in_washout(2));
    }
}
