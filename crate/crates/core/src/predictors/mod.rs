//! Trainable next-symbol predictors for binary series: a classical reservoir
//! with linear or quadratic readout, a next-generation reservoir (NG-RC) and
//! an LSTM, all ending in a logistic readout.

pub mod logistic;
pub mod lstm;
pub mod ngrc;
pub mod reservoir;

use std::fmt;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use logistic::{train_logistic_readout, LogisticReadout, DEFAULT_L2};
pub use lstm::{train_lstm, LstmConfig, LstmParams, TrainedLstm};
pub use ngrc::{ngrc_features, quadratic_expand, quadratic_feature_count, NgrcConfig};
pub use reservoir::{init_reservoir, run_reservoir, ReservoirConfig, ReservoirParams, ReservoirStates};

use crate::seeds::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("invalid predictor config: {0}")]
    InvalidConfig(String),
    #[error("index {index} out of range: {detail}")]
    IndexOutOfRange { index: usize, detail: String },
    #[error("non-finite feature at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("empty range: {0}")]
    EmptyRange(String),
    #[error("training diverged: {0}")]
    DivergenceDetected(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "RC_LINEAR")]
    RcLinear,
    #[serde(rename = "RC_QUADRATIC")]
    RcQuadratic,
    #[serde(rename = "NGRC")]
    Ngrc,
    #[serde(rename = "LSTM")]
    Lstm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Ngrc, Family::RcQuadratic, Family::RcLinear, Family::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            Family::RcLinear => "RC_LINEAR",
            Family::RcQuadratic => "RC_QUADRATIC",
            Family::Ngrc => "NGRC",
            Family::Lstm => "LSTM",
        }
    }

    pub fn parse(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Anything that maps a series to per-position next-symbol probabilities.
pub trait NextSymbolPredictor {
    /// `p[τ] = P(x_τ = 1 | x_{<τ})` for every τ < `series.len()`; NaN where
    /// the predictor has too little context.
    fn predict_proba(&self, series: &[u8]) -> Vec<f64>;
}

/// An untrained predictor configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PredictorSpec {
    Reservoir { config: ReservoirConfig, quadratic: bool },
    Ngrc(NgrcConfig),
    Lstm(LstmConfig),
}

impl PredictorSpec {
    pub fn family(&self) -> Family {
        match self {
            PredictorSpec::Reservoir { quadratic: true, .. } => Family::RcQuadratic,
            PredictorSpec::Reservoir { quadratic: false, .. } => Family::RcLinear,
            PredictorSpec::Ngrc(_) => Family::Ngrc,
            PredictorSpec::Lstm(_) => Family::Lstm,
        }
    }

    /// Number of readout inputs.
    pub fn feature_count(&self) -> usize {
        match self {
            PredictorSpec::Reservoir { config, quadratic: true } => quadratic_feature_count(config.n_nodes),
            PredictorSpec::Reservoir { config, quadratic: false } => config.n_nodes,
            PredictorSpec::Ngrc(c) => c.feature_count(),
            PredictorSpec::Lstm(c) => c.hidden_size,
        }
    }

    /// Trains on targets inside `series[..train_len]`.
    pub fn train(&self, series: &[u8], train_len: usize, l2_lambda: f64) -> Result<TrainedPredictor, PredictorError> {
        if train_len > series.len() {
            return Err(PredictorError::IndexOutOfRange {
                index: train_len,
                detail: format!("training length exceeds series length {}", series.len()),
            });
        }
        let train = &series[..train_len];
        let model = match *self {
            PredictorSpec::Reservoir { config, quadratic } => {
                let params = init_reservoir(&config)?;
                let first = config.washout.min(train_len);
                let rows = train_len - first;
                let d = self.feature_count();
                let mut x = DMatrix::<f64>::zeros(rows, d);
                let mut buf = Vec::with_capacity(d);
                params.drive(&train[..train_len.saturating_sub(1)], |tau, s| {
                    if tau >= first {
                        fill_row(&mut x, tau - first, s, quadratic, &mut buf);
                    }
                });
                let readout = train_logistic_readout(&x, &train[first..], l2_lambda)?;
                PredictorModel::Reservoir { config, quadratic, params, readout }
            }
            PredictorSpec::Ngrc(config) => {
                config.check()?;
                let m = config.m;
                if train_len <= m {
                    return Err(PredictorError::EmptyRange(format!(
                        "NG-RC with m = {m} needs more than {m} training symbols"
                    )));
                }
                let mut x = DMatrix::<f64>::zeros(train_len - m, config.feature_count());
                let mut buf = Vec::new();
                for tau in m..train_len {
                    let lags = ngrc::ngrc_lags(train, m, tau - 1)?;
                    fill_row(&mut x, tau - m, &lags, true, &mut buf);
                }
                let readout = train_logistic_readout(&x, &train[m..], l2_lambda)?;
                PredictorModel::Ngrc { config, readout }
            }
            PredictorSpec::Lstm(config) => PredictorModel::Lstm(train_lstm(&config, train)?),
        };
        Ok(TrainedPredictor { family: self.family(), feature_count: self.feature_count(), model })
    }
}

fn fill_row(x: &mut DMatrix<f64>, row: usize, s: &[f64], quadratic: bool, buf: &mut Vec<f64>) {
    let values = if quadratic {
        ngrc::quadratic_expand_into(s, buf);
        buf.as_slice()
    } else {
        s
    };
    for (j, &v) in values.iter().enumerate() {
        x[(row, j)] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorModel {
    Reservoir { config: ReservoirConfig, quadratic: bool, params: ReservoirParams, readout: LogisticReadout },
    Ngrc { config: NgrcConfig, readout: LogisticReadout },
    Lstm(TrainedLstm),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPredictor {
    pub family: Family,
    pub feature_count: usize,
    pub model: PredictorModel,
}

impl NextSymbolPredictor for TrainedPredictor {
    fn predict_proba(&self, series: &[u8]) -> Vec<f64> {
        match &self.model {
            PredictorModel::Reservoir { quadratic, params, readout, .. } => {
                let mut out = Vec::with_capacity(series.len());
                let mut buf = Vec::new();
                params.drive(&series[..series.len().saturating_sub(1)], |_, s| {
                    if *quadratic {
                        ngrc::quadratic_expand_into(s, &mut buf);
                        out.push(readout.predict(&buf));
                    } else {
                        out.push(readout.predict(s));
                    }
                });
                out.truncate(series.len());
                out
            }
            PredictorModel::Ngrc { config, readout } => (0..series.len())
                .map(|tau| {
                    if tau < config.m {
                        f64::NAN
                    } else {
                        let f = ngrc_features(series, config.m, tau - 1).expect("tau >= m");
                        readout.predict(&f)
                    }
                })
                .collect(),
            PredictorModel::Lstm(trained) => trained.params.predict_proba(series),
        }
    }
}

/// Fraction of positions τ in `eval_range` where the thresholded prediction
/// (symbol 1 iff p > 1/2, so ties go to 0) differs from `series[τ]`.
pub fn evaluate_error_rate<P: NextSymbolPredictor + ?Sized>(
    predictor: &P,
    series: &[u8],
    eval_range: Range<usize>,
) -> Result<f64, PredictorError> {
    if eval_range.is_empty() {
        return Err(PredictorError::EmptyRange(format!("{eval_range:?}")));
    }
    if eval_range.end > series.len() {
        return Err(PredictorError::IndexOutOfRange {
            index: eval_range.end,
            detail: format!("evaluation range ends past series length {}", series.len()),
        });
    }
    let p = predictor.predict_proba(&series[..eval_range.end]);
    let mut errors = 0usize;
    for tau in eval_range.clone() {
        let prob = p[tau];
        if prob.is_nan() {
            return Err(PredictorError::IndexOutOfRange {
                index: tau,
                detail: "predictor has no prediction at this position".into(),
            });
        }
        if ((prob > 0.5) as u8) != series[tau] {
            errors += 1;
        }
    }
    Ok(errors as f64 / eval_range.len() as f64)
}

/// Readout-size-matched configurations for memory `m`: NG-RC over `m` lags,
/// a quadratic-readout reservoir with `m` nodes (both `m + m(m+1)/2`
/// features), and a linear-readout reservoir and LSTM with `m(m+1)` units.
/// Reservoir and LSTM seeds are derived from `seed` per family.
pub fn matched_configs(base: &NgrcConfig, seed: u64) -> Vec<PredictorSpec> {
    let m = base.m;
    let wide = m * (m + 1);
    vec![
        PredictorSpec::Ngrc(*base),
        PredictorSpec::Reservoir {
            config: ReservoirConfig::new(m, derive_seed(seed, Family::RcQuadratic.name(), 0)),
            quadratic: true,
        },
        PredictorSpec::Reservoir {
            config: ReservoirConfig::new(wide, derive_seed(seed, Family::RcLinear.name(), 0)),
            quadratic: false,
        },
        PredictorSpec::Lstm(LstmConfig::new(wide, derive_seed(seed, Family::Lstm.name(), 0))),
    ]
}

fn push_values(out: &mut String, key: &str, values: impl IntoIterator<Item = f64>) {
    out.push_str(key);
    out.push_str(" =");
    for v in values {
        out.push_str(&format!(" {v:.16e}"));
    }
    out.push('\n');
}

fn push_readout(out: &mut String, r: &LogisticReadout) {
    out.push_str(&format!("readout.l2_lambda = {:.16e}\n", r.l2_lambda));
    out.push_str(&format!("readout.bias = {:.16e}\n", r.bias));
    push_values(out, "readout.weights", r.weights.iter().copied());
}

impl TrainedPredictor {
    /// `key = value` text with every parameter at 17 significant digits.
    /// Matrices are written column-major after their shape.
    pub fn dump(&self) -> String {
        let mut out = format!("family = {}\nfeature_count = {}\n", self.family, self.feature_count);
        match &self.model {
            PredictorModel::Reservoir { config, params, readout, .. } => {
                out.push_str(&format!(
                    "config.n_nodes = {}\nconfig.nonlinear_fraction = {:.16e}\nconfig.spectral_radius = {:.16e}\n\
                     config.input_scale = {:.16e}\nconfig.washout = {}\nconfig.seed = {}\n",
                    config.n_nodes,
                    config.nonlinear_fraction,
                    config.spectral_radius,
                    config.input_scale,
                    config.washout,
                    config.seed
                ));
                for (name, block) in [("nonlinear", &params.nonlinear), ("linear", &params.linear)] {
                    out.push_str(&format!("reservoir.{name}.size = {}\n", block.len()));
                    push_values(&mut out, &format!("reservoir.{name}.w"), block.w.iter().copied());
                    push_values(&mut out, &format!("reservoir.{name}.v"), block.v.iter().copied());
                }
                push_readout(&mut out, readout);
            }
            PredictorModel::Ngrc { config, readout } => {
                out.push_str(&format!("config.m = {}\n", config.m));
                push_readout(&mut out, readout);
            }
            PredictorModel::Lstm(t) => {
                let c = &t.config;
                out.push_str(&format!(
                    "config.hidden_size = {}\nconfig.bptt_window = {}\nconfig.learning_rate = {:.16e}\n\
                     config.max_epochs = {}\nconfig.batch_streams = {}\nconfig.patience = {}\n\
                     config.clip_norm = {:.16e}\nconfig.validation_fraction = {:.16e}\nconfig.seed = {}\n\
                     training.epochs_run = {}\ntraining.best_epoch = {}\ntraining.best_validation_loss = {:.16e}\n",
                    c.hidden_size,
                    c.bptt_window,
                    c.learning_rate,
                    c.max_epochs,
                    c.batch_streams,
                    c.patience,
                    c.clip_norm,
                    c.validation_fraction,
                    c.seed,
                    t.epochs_run,
                    t.best_epoch,
                    t.best_validation_loss
                ));
                out.push_str(&format!("lstm.w.shape = {} {}\n", t.params.w.nrows(), t.params.w.ncols()));
                push_values(&mut out, "lstm.w", t.params.w.iter().copied());
                push_values(&mut out, "readout.weights", t.params.a.iter().copied());
                out.push_str(&format!("readout.bias = {:.16e}\n", t.params.b));
            }
        }
        out
    }
}

pub const RESULTS_CSV_HEADER: &str =
    "machine_id,family,feature_count,train_len,test_len,pe,pe_min,pct_increase,fano_bound";

/// One held-out evaluation of one predictor family on one machine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub machine_id: usize,
    pub family: Family,
    pub feature_count: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub pe: f64,
    pub pe_min: f64,
    pub pct_increase: f64,
    pub fano_bound: f64,
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.machine_id,
            self.family,
            self.feature_count,
            self.train_len,
            self.test_len,
            self.pe,
            self.pe_min,
            self.pct_increase,
            self.fano_bound
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::simulate;
    use crate::machine::catalog;

    struct Constant(f64);

    impl NextSymbolPredictor for Constant {
        fn predict_proba(&self, series: &[u8]) -> Vec<f64> {
            vec![self.0; series.len()]
        }
    }

    struct Oracle;

    impl NextSymbolPredictor for Oracle {
        fn predict_proba(&self, series: &[u8]) -> Vec<f64> {
            (0..series.len()).map(|t| if t == 0 { 0.5 } else { 1.0 - series[t - 1] as f64 }).collect()
        }
    }

    #[test]
    fn constant_predictor_on_fair_coin() {
        let s = simulate(&catalog::fair_coin(), 100_000, 1).unwrap();
        let e = evaluate_error_rate(&Constant(0.0), &s.symbols, 0..100_000).unwrap();
        assert!((e - 0.5).abs() < 0.005, "{e}");
        // exactly one half is a tie and predicts 0
        let tie = evaluate_error_rate(&Constant(0.5), &s.symbols, 0..100_000).unwrap();
        assert_eq!(tie, e);
    }

    #[test]
    fn perfect_predictor_on_alternation() {
        let s: Vec<u8> = (0..1000).map(|i| (i % 2) as u8).collect();
        assert_eq!(evaluate_error_rate(&Oracle, &s, 1..1000).unwrap(), 0.0);
    }

    #[test]
    fn evaluation_errors() {
        let s = [0u8, 1, 0];
        assert!(matches!(evaluate_error_rate(&Oracle, &s, 2..2), Err(PredictorError::EmptyRange(_))));
        assert!(evaluate_error_rate(&Oracle, &s, 0..4).is_err());
        let nan = Constant(f64::NAN);
        assert!(evaluate_error_rate(&nan, &s, 0..3).is_err());
    }

    #[test]
    fn matched_feature_counts() {
        let specs = matched_configs(&NgrcConfig::new(10), 0);
        let counts: Vec<(Family, usize)> = specs.iter().map(|s| (s.family(), s.feature_count())).collect();
        assert_eq!(
            counts,
            vec![(Family::Ngrc, 65), (Family::RcQuadratic, 65), (Family::RcLinear, 110), (Family::Lstm, 110)]
        );
    }

    #[test]
    fn ngrc_m1_on_golden_mean() {
        let s = simulate(&catalog::golden_mean(), 120_000, 7).unwrap().symbols;
        let spec = PredictorSpec::Ngrc(NgrcConfig::new(1));
        let trained = spec.train(&s, 100_000, DEFAULT_L2).unwrap();
        let e = evaluate_error_rate(&trained, &s, 100_000..120_000).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 0.01, "{e}");
        assert_eq!(trained.feature_count, 2);
    }

    #[test]
    fn ngrc_on_period_two() {
        let s = simulate(&catalog::period_two(), 3000, 1).unwrap().symbols;
        let trained = PredictorSpec::Ngrc(NgrcConfig::new(1)).train(&s, 2000, DEFAULT_L2).unwrap();
        assert_eq!(evaluate_error_rate(&trained, &s, 2000..3000).unwrap(), 0.0);
    }

    #[test]
    fn reservoirs_train_and_evaluate_deterministically() {
        let s = simulate(&catalog::golden_mean(), 6000, 3).unwrap().symbols;
        for quadratic in [false, true] {
            let spec = PredictorSpec::Reservoir { config: ReservoirConfig::new(6, 1), quadratic };
            let a = spec.train(&s, 5000, DEFAULT_L2).unwrap();
            let b = spec.train(&s, 5000, DEFAULT_L2).unwrap();
            assert_eq!(a, b);
            let e = evaluate_error_rate(&a, &s, 5000..6000).unwrap();
            assert_eq!(e, evaluate_error_rate(&b, &s, 5000..6000).unwrap());
            // the last symbol alone gives 1/3; a reservoir should not do much worse
            assert!(e < 0.37, "quadratic={quadratic}: {e}");
        }
    }

    #[test]
    fn predictions_follow_training_features() {
        // the reservoir state at τ depends only on x_{<τ}
        let s = simulate(&catalog::golden_mean(), 800, 5).unwrap().symbols;
        let spec = PredictorSpec::Reservoir { config: ReservoirConfig::new(4, 2), quadratic: true };
        let p = spec.train(&s, 700, DEFAULT_L2).unwrap();
        let full = p.predict_proba(&s);
        let prefix = p.predict_proba(&s[..400]);
        assert_eq!(&full[..400], &prefix[..]);
        assert_eq!(full.len(), s.len());
    }

    #[test]
    fn dump_has_full_precision() {
        let s = simulate(&catalog::golden_mean(), 500, 5).unwrap().symbols;
        let p = PredictorSpec::Ngrc(NgrcConfig::new(2)).train(&s, 400, DEFAULT_L2).unwrap();
        let text = p.dump();
        assert!(text.starts_with("family = NGRC\nfeature_count = 5\n"));
        let PredictorModel::Ngrc { readout, .. } = &p.model else { unreachable!() };
        let line = text.lines().find(|l| l.starts_with("readout.weights")).unwrap();
        let parsed: Vec<f64> = line.split('=').nth(1).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(parsed, readout.weights);
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(Family::parse(f.name()), Some(f));
        }
        assert_eq!(Family::parse("ngrc"), Some(Family::Ngrc));
        assert_eq!(Family::parse("gru"), None);
    }
}
