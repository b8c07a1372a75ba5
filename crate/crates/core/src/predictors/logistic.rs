//! L2-regularized logistic readout trained by damped Newton iterations.
//!
//! Objective (bias unregularized):
//!
//! ```text
//! J(a, b) = (1/N) Σ_t [softplus(aᵀs_t + b) − y_t (aᵀs_t + b)] + (λ/2) ‖a‖²
//! ```
//!
//! `J` is convex; each Newton step is followed by a backtracking line search,
//! so the objective never increases between iterations.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::PredictorError;

pub const DEFAULT_L2: f64 = 1e-4;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticReadout {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Objective value at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticReadout {
    /// Probability that the next symbol is 1.
    pub fn predict(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len(), self.weights.len());
        let z: f64 = self.weights.iter().zip(features).map(|(a, s)| a * s).sum::<f64>() + self.bias;
        sigmoid(z)
    }

    pub fn feature_count(&self) -> usize {
        self.weights.len()
    }
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    y: DVector<f64>,
    lambda: f64,
}

impl Problem<'_> {
    fn logits(&self, a: &DVector<f64>, b: f64) -> DVector<f64> {
        let mut z = self.x * a;
        z.add_scalar_mut(b);
        z
    }

    fn objective(&self, a: &DVector<f64>, b: f64) -> f64 {
        let z = self.logits(a, b);
        let n = self.y.len() as f64;
        let data: f64 = z.iter().zip(self.y.iter()).map(|(&z, &y)| softplus(z) - y * z).sum();
        data / n + 0.5 * self.lambda * a.norm_squared()
    }
}

/// Fits a readout on the rows of `features` (one row per time step).
pub fn train_logistic_readout(
    features: &DMatrix<f64>,
    targets: &[u8],
    l2_lambda: f64,
) -> Result<LogisticReadout, PredictorError> {
    let (n, d) = features.shape();
    if n == 0 {
        return Err(PredictorError::EmptyRange("no training pairs".into()));
    }
    if targets.len() != n {
        return Err(PredictorError::InvalidConfig(format!(
            "{n} feature rows but {} targets",
            targets.len()
        )));
    }
    if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
        return Err(PredictorError::NonFiniteFeature { row: pos % n, column: pos / n });
    }
    if !(l2_lambda >= 0.0) {
        return Err(PredictorError::InvalidConfig(format!("l2_lambda must be >= 0, got {l2_lambda}")));
    }
    let problem = Problem {
        x: features,
        y: DVector::from_iterator(n, targets.iter().map(|&t| (t != 0) as u8 as f64)),
        lambda: l2_lambda,
    };

    let nf = n as f64;
    let mean_y = problem.y.mean().clamp(1e-6, 1.0 - 1e-6);
    let mut a = DVector::<f64>::zeros(d);
    let mut b = (mean_y / (1.0 - mean_y)).ln();
    let mut objective = problem.objective(&a, b);
    let mut objective_trace = vec![objective];
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        let z = problem.logits(&a, b);
        let p = z.map(sigmoid);
        let resid = &p - &problem.y;
        let mut grad_a = features.tr_mul(&resid) / nf;
        grad_a.axpy(l2_lambda, &a, 1.0);
        let grad_b = resid.sum() / nf;
        gradient_norm = grad_a.amax().max(grad_b.abs());
        if gradient_norm < GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;

        // Hessian of [a; b]: Aᵀ diag(p(1−p)) A / N + λ diag(1, …, 1, 0)
        let weights = p.map(|p| (p * (1.0 - p)).sqrt());
        let mut scaled = DMatrix::<f64>::zeros(n, d + 1);
        for j in 0..d {
            scaled.column_mut(j).copy_from(&features.column(j).component_mul(&weights));
        }
        scaled.column_mut(d).copy_from(&weights);
        let mut hessian = scaled.tr_mul(&scaled) / nf;
        for j in 0..d {
            hessian[(j, j)] += l2_lambda;
        }
        let mut grad = DVector::<f64>::zeros(d + 1);
        grad.rows_mut(0, d).copy_from(&grad_a);
        grad[d] = grad_b;

        let step = solve_spd(hessian, &grad);
        let (step_a, step_b) = (step.rows(0, d).into_owned(), step[d]);
        let slope = -grad.dot(&step);

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_a = &a - &step_a * t;
            let cand_b = b - step_b * t;
            let cand = problem.objective(&cand_a, cand_b);
            if cand <= objective + 1e-4 * t * slope {
                a = cand_a;
                b = cand_b;
                objective = cand;
                objective_trace.push(cand);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // objective flat to machine precision along the Newton direction
            break;
        }
    }

    let weights: Vec<f64> = a.iter().copied().collect();
    if weights.iter().any(|w| !w.is_finite()) || !b.is_finite() {
        return Err(PredictorError::DivergenceDetected("logistic readout produced non-finite weights".into()));
    }
    Ok(LogisticReadout { weights, bias: b, l2_lambda, iterations, converged, gradient_norm, objective_trace })
}

/// Cholesky solve with increasing diagonal jitter if the matrix is only
/// semidefinite (possible when λ = 0 and features are collinear).
fn solve_spd(matrix: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let mut jitter = 0.0;
    loop {
        let mut m = matrix.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = m.cholesky() {
            return chol.solve(rhs);
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
    }
}
