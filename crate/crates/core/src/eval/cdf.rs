use super::compensation::CompensationRun;
use crate::error::{Error, Result};

/// Empirical distribution of |offset| in µs.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfSummary {
    sorted: Vec<f64>,
}

impl CdfSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("no offsets to summarize"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("offsets contain NaN"));
        }
        let mut sorted: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Smallest observed `v` with `P(|offset| ≤ v) ≥ p`.
    pub fn value_at(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    /// `P(|offset| ≤ v)`.
    pub fn prob_at(&self, v: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= v) as f64 / self.sorted.len() as f64
    }

    /// Step points `(value, cumulative probability)` at each distinct value.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => out.push((v, p)),
            }
        }
        out
    }
}

pub fn cdf_of(run: &CompensationRun) -> Result<CdfSummary> {
    CdfSummary::from_values(&run.offsets.abs_us().collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_step_at_zero() {
        let c = CdfSummary::from_values(&[0.0; 10]).unwrap();
        assert_eq!(c.points(), vec![(0.0, 1.0)]);
        assert_eq!(c.prob_at(0.0), 1.0);
        assert_eq!(c.value_at(0.9), 0.0);
    }

    #[test]
    fn uniform_quantiles() {
        // |offset| on the grid 0.01, 0.02, ..., 10.00
        let v: Vec<f64> = (1..=1000).map(|i| -(i as f64) / 100.0).collect();
        let c = CdfSummary::from_values(&v).unwrap();
        for p in [0.1, 0.5, 0.9, 0.99] {
            assert!((c.value_at(p) - 10.0 * p).abs() <= 0.01 + 1e-12);
        }
        assert!((c.prob_at(2.5) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_rejected() {
        assert!(CdfSummary::from_values(&[]).is_err());
    }

    proptest! {
        #[test]
        fn points_are_monotone_and_end_at_one(v in prop::collection::vec(-50.0f64..50.0, 1..200)) {
            let c = CdfSummary::from_values(&v).unwrap();
            let pts = c.points();
            prop_assert!(pts.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(pts.last().unwrap().1, 1.0);
            for p in [0.05, 0.5, 0.95] {
                prop_assert!(c.prob_at(c.value_at(p)) >= p - 1e-12);
            }
        }
    }
}
