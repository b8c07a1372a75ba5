//! LSTM next-symbol predictor trained by truncated backpropagation through
//! time with Adam.
//!
//! Cell (gate pre-activations share one weight matrix over `z = [h; x; 1]`):
//!
//! ```text
//! i = σ(W_i z)   f = σ(W_f z)   g = tanh(W_g z)   o = σ(W_o z)
//! c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
//! P(x_{t+1} = 1) = σ(aᵀh' + b)
//! ```
//!
//! Training splits the series into `batch_streams` contiguous streams that are
//! advanced in lock-step, one `bptt_window` at a time, carrying (h, c) across
//! windows. The last `validation_fraction` of the series is held out for early
//! stopping; the parameters with the best validation cross-entropy are kept.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::logistic::{sigmoid, softplus};
use super::PredictorError;
use crate::seeds::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub bptt_window: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_streams: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 110,
            bptt_window: 32,
            learning_rate: 1e-3,
            max_epochs: 20,
            batch_streams: 16,
            patience: 5,
            clip_norm: 1.0,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn new(hidden_size: usize, seed: u64) -> Self {
        Self { hidden_size, seed, ..Self::default() }
    }

    pub fn check(&self) -> Result<(), PredictorError> {
        let bad = |msg: &str| Err(PredictorError::InvalidConfig(msg.into()));
        if self.hidden_size == 0 || self.bptt_window == 0 || self.max_epochs == 0 || self.batch_streams == 0 {
            return bad("LSTM sizes, window, epochs and streams must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("LSTM learning_rate must be > 0");
        }
        if !(self.clip_norm > 0.0) {
            return bad("LSTM clip_norm must be > 0");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("LSTM validation_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub hidden_size: usize,
    /// `4H × (H + 2)`: rows are the i, f, g, o blocks; columns are h, x, bias.
    pub w: DMatrix<f64>,
    pub a: DVector<f64>,
    pub b: f64,
}

impl LstmParams {
    /// Uniform(±1/√H) weights, forget-gate bias 1, readout bias 0.
    pub fn init(hidden_size: usize, seed: u64) -> Self {
        let h = hidden_size;
        let k = 1.0 / (h as f64).sqrt();
        let mut rng = stream_rng(seed, 0);
        let mut w = DMatrix::from_fn(4 * h, h + 2, |_, _| rng.random_range(-k..k));
        for r in h..2 * h {
            w[(r, h + 1)] = 1.0;
        }
        let a = DVector::from_fn(h, |_, _| rng.random_range(-k..k));
        Self { hidden_size: h, w, a, b: 0.0 }
    }

    pub fn n_parameters(&self) -> usize {
        self.w.len() + self.a.len() + 1
    }

    fn zeros_like(&self) -> Self {
        Self {
            hidden_size: self.hidden_size,
            w: DMatrix::zeros(self.w.nrows(), self.w.ncols()),
            a: DVector::zeros(self.a.len()),
            b: 0.0,
        }
    }

    fn norm_squared(&self) -> f64 {
        self.w.norm_squared() + self.a.norm_squared() + self.b * self.b
    }

    fn scale(&mut self, s: f64) {
        self.w *= s;
        self.a *= s;
        self.b *= s;
    }

    /// Flat view used by finite-difference checks: w (column-major), a, b.
    pub fn get_flat(&self, k: usize) -> f64 {
        let nw = self.w.len();
        if k < nw {
            self.w.as_slice()[k]
        } else if k < nw + self.a.len() {
            self.a[k - nw]
        } else {
            self.b
        }
    }

    pub fn set_flat(&mut self, k: usize, value: f64) {
        let nw = self.w.len();
        if k < nw {
            self.w.as_mut_slice()[k] = value;
        } else if k < nw + self.a.len() {
            self.a[k - nw] = value;
        } else {
            self.b = value;
        }
    }

    /// `p[τ] = P(x_τ = 1 | x_{<τ})`, starting from the zero state.
    pub fn predict_proba(&self, series: &[u8]) -> Vec<f64> {
        let hs = self.hidden_size;
        let mut h = DVector::<f64>::zeros(hs);
        let mut c = DVector::<f64>::zeros(hs);
        let mut z = DVector::<f64>::zeros(hs + 2);
        let mut gates = DVector::<f64>::zeros(4 * hs);
        z[hs + 1] = 1.0;
        let mut out = Vec::with_capacity(series.len());
        out.push(sigmoid(self.b));
        for &x in &series[..series.len().saturating_sub(1)] {
            z.rows_mut(0, hs).copy_from(&h);
            z[hs] = x as f64;
            gates.gemv(1.0, &self.w, &z, 0.0);
            for k in 0..hs {
                let i = sigmoid(gates[k]);
                let f = sigmoid(gates[hs + k]);
                let g = gates[2 * hs + k].tanh();
                let o = sigmoid(gates[3 * hs + k]);
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            out.push(sigmoid(self.a.dot(&h) + self.b));
        }
        out
    }
}

struct StepCache {
    z: DMatrix<f64>,
    /// post-activation i, f, g, o stacked like the rows of `w`
    gates: DMatrix<f64>,
    c_prev: DMatrix<f64>,
    tanh_c: DMatrix<f64>,
    h: DMatrix<f64>,
    p: Vec<f64>,
}

/// Runs one window for `B` parallel streams and accumulates `scale ×` the
/// gradient of the summed cross-entropy into `grads`. `xs[t][b]` is the
/// symbol consumed at step t of stream b and `ys[t][b]` its successor.
/// Returns the summed loss; `h`, `c` are advanced to the window's end.
#[allow(clippy::too_many_arguments)]
fn window_loss_and_grad(
    params: &LstmParams,
    w_t: &DMatrix<f64>,
    xs: &[Vec<u8>],
    ys: &[Vec<u8>],
    h: &mut DMatrix<f64>,
    c: &mut DMatrix<f64>,
    scale: f64,
    grads: &mut LstmParams,
) -> f64 {
    let hs = params.hidden_size;
    let batch = h.ncols();
    let mut caches = Vec::with_capacity(xs.len());
    let mut loss = 0.0;
    for (x_t, y_t) in xs.iter().zip(ys) {
        let mut z = DMatrix::<f64>::zeros(hs + 2, batch);
        z.rows_mut(0, hs).copy_from(h);
        for b in 0..batch {
            z[(hs, b)] = x_t[b] as f64;
            z[(hs + 1, b)] = 1.0;
        }
        let mut gates = &params.w * &z;
        let c_prev = c.clone();
        let mut tanh_c = DMatrix::<f64>::zeros(hs, batch);
        let mut p = Vec::with_capacity(batch);
        for b in 0..batch {
            let mut col = gates.column_mut(b);
            for k in 0..hs {
                let i = sigmoid(col[k]);
                let f = sigmoid(col[hs + k]);
                let g = col[2 * hs + k].tanh();
                let o = sigmoid(col[3 * hs + k]);
                col[k] = i;
                col[hs + k] = f;
                col[2 * hs + k] = g;
                col[3 * hs + k] = o;
                let cn = f * c_prev[(k, b)] + i * g;
                c[(k, b)] = cn;
                let tc = cn.tanh();
                tanh_c[(k, b)] = tc;
                h[(k, b)] = o * tc;
            }
            let logit = params.a.dot(&h.column(b)) + params.b;
            let y = y_t[b] as f64;
            loss += softplus(logit) - y * logit;
            p.push(sigmoid(logit));
        }
        caches.push(StepCache { z, gates, c_prev, tanh_c, h: h.clone(), p });
    }

    let mut dh_next = DMatrix::<f64>::zeros(hs, batch);
    let mut dc_next = DMatrix::<f64>::zeros(hs, batch);
    let mut dg = DMatrix::<f64>::zeros(4 * hs, batch);
    let mut dz = DMatrix::<f64>::zeros(hs + 2, batch);
    for (cache, y_t) in caches.iter().zip(ys).rev() {
        for b in 0..batch {
            let dlogit = (cache.p[b] - y_t[b] as f64) * scale;
            grads.a.axpy(dlogit, &cache.h.column(b), 1.0);
            grads.b += dlogit;
            let gate = cache.gates.column(b);
            for k in 0..hs {
                let (i, f, g, o) = (gate[k], gate[hs + k], gate[2 * hs + k], gate[3 * hs + k]);
                let tc = cache.tanh_c[(k, b)];
                let dh = dh_next[(k, b)] + params.a[k] * dlogit;
                let dc = dc_next[(k, b)] + dh * o * (1.0 - tc * tc);
                dg[(k, b)] = dc * g * i * (1.0 - i);
                dg[(hs + k, b)] = dc * cache.c_prev[(k, b)] * f * (1.0 - f);
                dg[(2 * hs + k, b)] = dc * i * (1.0 - g * g);
                dg[(3 * hs + k, b)] = dh * tc * o * (1.0 - o);
                dc_next[(k, b)] = dc * f;
            }
        }
        grads.w.gemm(1.0, &dg, &cache.z.transpose(), 1.0);
        w_t.mul_to(&dg, &mut dz);
        dh_next.copy_from(&dz.rows(0, hs));
    }
    loss
}

/// Summed cross-entropy of a single sequence and its exact gradient
/// (full backpropagation through the whole sequence, zero initial state).
pub fn sequence_loss_and_gradient(params: &LstmParams, series: &[u8]) -> (f64, LstmParams) {
    let mut grads = params.zeros_like();
    if series.len() < 2 {
        return (0.0, grads);
    }
    let xs: Vec<Vec<u8>> = series[..series.len() - 1].iter().map(|&x| vec![x]).collect();
    let ys: Vec<Vec<u8>> = series[1..].iter().map(|&y| vec![y]).collect();
    let hs = params.hidden_size;
    let mut h = DMatrix::zeros(hs, 1);
    let mut c = DMatrix::zeros(hs, 1);
    let loss = window_loss_and_grad(params, &params.w.transpose(), &xs, &ys, &mut h, &mut c, 1.0, &mut grads);
    (loss, grads)
}

pub fn sequence_loss(params: &LstmParams, series: &[u8]) -> f64 {
    let p = params.predict_proba(series);
    p.iter()
        .zip(series)
        .skip(1)
        .map(|(&p, &y)| {
            let logit = (p / (1.0 - p)).ln();
            softplus(logit) - y as f64 * logit
        })
        .sum()
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences over every parameter of a freshly initialized network.
pub fn gradient_check(hidden_size: usize, series: &[u8], seed: u64, eps: f64) -> f64 {
    let params = LstmParams::init(hidden_size, seed);
    let (_, grads) = sequence_loss_and_gradient(&params, series);
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for k in 0..params.n_parameters() {
        let orig = params.get_flat(k);
        probe.set_flat(k, orig + eps);
        let plus = sequence_loss_direct(&probe, series);
        probe.set_flat(k, orig - eps);
        let minus = sequence_loss_direct(&probe, series);
        probe.set_flat(k, orig);
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grads.get_flat(k);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

/// Loss computed on logits directly (no round trip through probabilities).
fn sequence_loss_direct(params: &LstmParams, series: &[u8]) -> f64 {
    let mut scratch = params.zeros_like();
    let xs: Vec<Vec<u8>> = series[..series.len() - 1].iter().map(|&x| vec![x]).collect();
    let ys: Vec<Vec<u8>> = series[1..].iter().map(|&y| vec![y]).collect();
    let hs = params.hidden_size;
    let mut h = DMatrix::zeros(hs, 1);
    let mut c = DMatrix::zeros(hs, 1);
    window_loss_and_grad(params, &params.w.transpose(), &xs, &ys, &mut h, &mut c, 0.0, &mut scratch)
}

struct Adam {
    m: LstmParams,
    v: LstmParams,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(like: &LstmParams) -> Self {
        Self { m: like.zeros_like(), v: like.zeros_like(), t: 0 }
    }

    fn step(&mut self, params: &mut LstmParams, grads: &LstmParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        };
        for (((p, g), m), v) in params
            .w
            .iter_mut()
            .zip(grads.w.iter())
            .zip(self.m.w.iter_mut())
            .zip(self.v.w.iter_mut())
        {
            update(p, *g, m, v);
        }
        for (((p, g), m), v) in params
            .a
            .iter_mut()
            .zip(grads.a.iter())
            .zip(self.m.a.iter_mut())
            .zip(self.v.a.iter_mut())
        {
            update(p, *g, m, v);
        }
        update(&mut params.b, grads.b, &mut self.m.b, &mut self.v.b);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLstm {
    pub config: LstmConfig,
    pub params: LstmParams,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

/// Warm-up length used to rebuild the hidden state before the validation
/// segment instead of replaying the whole training series.
const VALIDATION_WARMUP: usize = 2_000;

fn validation_loss(params: &LstmParams, series: &[u8], val_start: usize) -> f64 {
    let from = val_start.saturating_sub(VALIDATION_WARMUP);
    let p = params.predict_proba(&series[from..]);
    let targets = &series[val_start..];
    let probs = &p[val_start - from..];
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-15, 1.0 - 1e-15);
            if y != 0 { -p.ln() } else { -(1.0 - p).ln() }
        })
        .sum();
    total / targets.len() as f64
}

pub fn train_lstm(config: &LstmConfig, series: &[u8]) -> Result<TrainedLstm, PredictorError> {
    config.check()?;
    if series.len() <= config.bptt_window {
        return Err(PredictorError::InvalidConfig(format!(
            "series of length {} is not longer than the BPTT window {}",
            series.len(),
            config.bptt_window
        )));
    }
    let n = series.len();
    let val_len = ((n as f64) * config.validation_fraction).round() as usize;
    let val_len = if config.validation_fraction > 0.0 { val_len.max(1) } else { 0 };
    let train_n = n - val_len;
    let window = config.bptt_window;
    let batch = config.batch_streams.min((train_n - 1) / window).max(1);
    let stream_len = (train_n - 1) / batch;
    let n_windows = stream_len / window;
    if n_windows == 0 {
        return Err(PredictorError::InvalidConfig(format!(
            "{train_n} training symbols cannot fill one BPTT window of {window}"
        )));
    }

    let hs = config.hidden_size;
    let mut params = LstmParams::init(hs, config.seed);
    let mut adam = Adam::new(&params);
    let scale = 1.0 / (batch * window) as f64;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut xs = vec![vec![0u8; batch]; window];
    let mut ys = vec![vec![0u8; batch]; window];

    for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        let mut h = DMatrix::<f64>::zeros(hs, batch);
        let mut c = DMatrix::<f64>::zeros(hs, batch);
        let mut epoch_loss = 0.0;
        for k in 0..n_windows {
            for t in 0..window {
                for b in 0..batch {
                    let pos = b * stream_len + k * window + t;
                    xs[t][b] = series[pos];
                    ys[t][b] = series[pos + 1];
                }
            }
            let mut grads = params.zeros_like();
            let w_t = params.w.transpose();
            let loss = window_loss_and_grad(&params, &w_t, &xs, &ys, &mut h, &mut c, scale, &mut grads);
            let gnorm = grads.norm_squared().sqrt();
            if !loss.is_finite() || !gnorm.is_finite() {
                return Err(PredictorError::DivergenceDetected(format!(
                    "non-finite LSTM training loss in epoch {epoch}, window {k}"
                )));
            }
            epoch_loss += loss;
            if gnorm > config.clip_norm {
                grads.scale(config.clip_norm / gnorm);
            }
            adam.step(&mut params, &grads, config.learning_rate);
        }
        if !epoch_loss.is_finite() {
            return Err(PredictorError::DivergenceDetected(format!("epoch {epoch} loss is not finite")));
        }

        let score = if val_len > 0 {
            validation_loss(&params, series, train_n)
        } else {
            epoch_loss / (n_windows * window * batch) as f64
        };
        if !score.is_finite() {
            return Err(PredictorError::DivergenceDetected(format!("epoch {epoch} validation loss is not finite")));
        }
        if score < best_loss - 1e-6 {
            best_loss = score;
            best = params.clone();
            best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(TrainedLstm {
        config: *config,
        params: best,
        epochs_run,
        best_epoch,
        best_validation_loss: best_loss,
    })
}
