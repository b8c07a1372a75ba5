//! Next-generation reservoir: a shift register of the last `m` symbols with
//! a quadratic feature map.

use serde::{Deserialize, Serialize};

use super::PredictorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgrcConfig {
    pub m: usize,
}

impl NgrcConfig {
    pub fn new(m: usize) -> Self {
        Self { m }
    }

    pub fn check(&self) -> Result<(), PredictorError> {
        if self.m == 0 {
            return Err(PredictorError::InvalidConfig("NG-RC needs m >= 1".into()));
        }
        Ok(())
    }

    pub fn feature_count(&self) -> usize {
        quadratic_feature_count(self.m)
    }
}

/// `d + d(d+1)/2`: the inputs plus every product `s_i s_j` with `i ≤ j`.
pub fn quadratic_feature_count(d: usize) -> usize {
    d + d * (d + 1) / 2
}

/// Writes `s` followed by its upper-triangular products (row-major, `i ≤ j`).
pub fn quadratic_expand_into(s: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(s);
    for i in 0..s.len() {
        for j in i..s.len() {
            out.push(s[i] * s[j]);
        }
    }
}

pub fn quadratic_expand(s: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(quadratic_feature_count(s.len()));
    quadratic_expand_into(s, &mut out);
    out
}

/// Lag vector `(x_t, x_{t−1}, …, x_{t−m+1})`.
pub fn ngrc_lags(series: &[u8], m: usize, t: usize) -> Result<Vec<f64>, PredictorError> {
    if m == 0 || t + 1 < m || t >= series.len() {
        return Err(PredictorError::IndexOutOfRange {
            index: t,
            detail: format!("lag window of length {m} needs {} <= t < {}", m.saturating_sub(1), series.len()),
        });
    }
    Ok((0..m).map(|k| series[t - k] as f64).collect())
}

/// Features for predicting `x_{t+1}` from the window ending at `t`.
pub fn ngrc_features(series: &[u8], m: usize, t: usize) -> Result<Vec<f64>, PredictorError> {
    Ok(quadratic_expand(&ngrc_lags(series, m, t)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_lags() {
        // x_t = 1, x_{t-1} = 0, x_{t-2} = 1
        let f = ngrc_features(&[1, 0, 1], 3, 2).unwrap();
        assert_eq!(f, vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_lag() {
        assert_eq!(ngrc_features(&[0], 1, 0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(ngrc_features(&[0, 1], 1, 1).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn counts() {
        assert_eq!(NgrcConfig::new(10).feature_count(), 65);
        for d in 0..12 {
            assert_eq!(quadratic_expand(&vec![0.5; d]).len(), quadratic_feature_count(d));
        }
    }

    #[test]
    fn lag_order_is_most_recent_first() {
        let s = [0, 0, 1, 1, 0];
        assert_eq!(ngrc_lags(&s, 3, 4).unwrap(), vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(ngrc_features(&[1, 0, 1], 3, 1), Err(PredictorError::IndexOutOfRange { .. })));
        assert!(ngrc_features(&[1, 0, 1], 3, 3).is_err());
        assert!(NgrcConfig::new(0).check().is_err());
    }
}
