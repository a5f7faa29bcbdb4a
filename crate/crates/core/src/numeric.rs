//! Small numerical helpers shared by the metric kernels.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(compensated_sum(values.iter().copied()) / values.len() as f64)
    }
}

/// Standard deviation convention for a small set of values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaConvention {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1`; zero for a single value.
    Sample,
}

pub fn std_dev(values: &[f64], convention: SigmaConvention) -> f64 {
    let n = values.len();
    let Some(m) = mean(values) else { return 0.0 };
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let ss = compensated_sum(values.iter().map(|v| (v - m) * (v - m)));
    let denom = match convention {
        SigmaConvention::Population => n as f64,
        SigmaConvention::Sample if n > 1 => (n - 1) as f64,
        SigmaConvention::Sample => return 0.0,
    };
    (ss / denom).sqrt()
}

/// Median of a non-empty slice (average of the two middle values when even).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 { (v[mid - 1] + v[mid]) / 2.0 } else { v[mid] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive_on_many_small_terms() {
        let n = 10_000_000;
        let naive: f32 = (0..n).map(|_| 0.1f32).sum();
        let comp = compensated_sum((0..n).map(|_| f64::from(0.1f32)));
        let exact = n as f64 * f64::from(0.1f32);
        assert!((comp - exact).abs() / exact < 1e-12);
        assert!((f64::from(naive) - exact).abs() / exact > 1e-3);
    }

    #[test]
    fn normal_functions() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-12);
        assert!((normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn std_conventions() {
        let v = [9.0, 10.0, 11.0];
        assert!((std_dev(&v, SigmaConvention::Population) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((std_dev(&v, SigmaConvention::Sample) - 1.0).abs() < 1e-15);
        assert_eq!(std_dev(&[4.0], SigmaConvention::Sample), 0.0);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
