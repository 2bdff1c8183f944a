use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer-periodic Fourier features `[cos(jωt), sin(jωt)]` for `j = 1..=k`
/// with `ω = 2π / L`. The constant term is omitted, so the output has `2k`
/// entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionalEncoder {
    order: usize,
    period: f64,
}

impl PositionalEncoder {
    pub fn new(order: usize, period: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidConfig("positional encoding order must be >= 1".into()));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidConfig(format!("positional encoding period must be positive, got {period}")));
        }
        Ok(Self { order, period })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn dim(&self) -> usize {
        2 * self.order
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    pub fn encode(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(t, &mut out);
        out
    }

    fn encode_into(&self, t: f64, out: &mut [f64]) {
        // Reduce the phase first so t and t + L give the same features.
        let phase = (t / self.period).rem_euclid(1.0) * 2.0 * std::f64::consts::PI;
        for j in 1..=self.order {
            let (s, c) = (j as f64 * phase).sin_cos();
            out[2 * (j - 1)] = c;
            out[2 * (j - 1) + 1] = s;
        }
    }

    /// One encoded row per coordinate.
    pub fn encode_all(&self, coords: &[f64]) -> Array2<f64> {
        let mut out = Array2::zeros((coords.len(), self.dim()));
        for (row, &t) in out.rows_mut().into_iter().zip(coords) {
            self.encode_into(t, row.into_slice().expect("standard layout rows are contiguous"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_alternates() {
        let enc = PositionalEncoder::new(4, 2.0).unwrap();
        assert_eq!(enc.encode(0.0), vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn half_period() {
        let enc = PositionalEncoder::new(1, 2.0).unwrap();
        let v = enc.encode(1.0);
        assert!((v[0] + 1.0).abs() < 1e-15 && v[1].abs() < 1e-15, "{v:?}");
    }

    #[test]
    fn zero_order_rejected() {
        assert!(PositionalEncoder::new(0, 1.0).is_err());
        assert!(PositionalEncoder::new(3, 0.0).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let enc = PositionalEncoder::new(10, 2.0).unwrap();
        let coords = [0.0, 0.01, 0.5, 1.99];
        let m = enc.encode_all(&coords);
        for (i, &t) in coords.iter().enumerate() {
            assert_eq!(m.row(i).to_vec(), enc.encode(t));
        }
    }

    proptest! {
        #[test]
        fn periodic_and_bounded(t in -10.0f64..10.0, k in 1usize..12, period in 0.5f64..5.0) {
            let enc = PositionalEncoder::new(k, period).unwrap();
            let (a, b) = (enc.encode(t), enc.encode(t + period));
            prop_assert_eq!(a.len(), 2 * k);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!(x.abs() <= 1.0);
            }
        }
    }
}
