//! Two-class Gaussian model of pixel intensities with a shared variance.
//!
//! With equal variances the log posterior ratio is affine in the intensity,
//! so the crack posterior is exactly a sigmoid of a linear feature
//! `w * x + w0`. This module fits that model, exposes the closed form, and
//! uses it as a per-pixel baseline detector.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ops::sigmoid;
use crate::scalar::Scalar;

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct GaussianCrackModel<T> {
    /// Background mean.
    pub mu0: T,
    /// Crack mean.
    pub mu1: T,
    /// Shared within-class variance.
    pub sigma2: T,
    pub prior0: T,
    pub prior1: T,
}

impl<T: Scalar> GaussianCrackModel<T> {
    pub fn new(mu0: T, mu1: T, sigma2: T, prior1: T) -> Result<Self> {
        let m = GaussianCrackModel {
            mu0,
            mu1,
            sigma2,
            prior0: T::one() - prior1,
            prior1,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu0, self.mu1, self.sigma2, self.prior0, self.prior1]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        if self.sigma2 <= T::zero() {
            return Err(Error::Config(format!("variance {} must be positive", self.sigma2)));
        }
        let inside = |p: T| p > T::zero() && p < T::one();
        if !inside(self.prior0) || !inside(self.prior1) {
            return Err(Error::Config("class priors must lie in (0, 1)".into()));
        }
        if ((self.prior0 + self.prior1).acc() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("class priors must sum to 1".into()));
        }
        Ok(())
    }

    /// Maximum-likelihood fit: class means, pooled variance with denominator
    /// N, and class pixel fractions as priors. `mask` marks cracks with 1.
    pub fn fit(intensities: &[T], mask: &[u8]) -> Result<Self> {
        if intensities.len() != mask.len() {
            return Err(Error::Fit(format!(
                "{} intensities for {} mask pixels",
                intensities.len(),
                mask.len()
            )));
        }
        let (mut n, mut sum) = ([0usize; 2], [0.0f64; 2]);
        for (&x, &m) in intensities.iter().zip(mask) {
            let j = usize::from(m != 0);
            n[j] += 1;
            sum[j] += x.acc();
        }
        if n[0] == 0 || n[1] == 0 {
            return Err(Error::Fit(format!(
                "both classes need pixels (background {}, crack {})",
                n[0], n[1]
            )));
        }
        let mean = [sum[0] / n[0] as f64, sum[1] / n[1] as f64];
        let ss: f64 = intensities
            .iter()
            .zip(mask)
            .map(|(&x, &m)| (x.acc() - mean[usize::from(m != 0)]).powi(2))
            .sum();
        let total = (n[0] + n[1]) as f64;
        let sigma2 = ss / total;
        if sigma2 <= 0.0 {
            return Err(Error::DegenerateFit(format!(
                "zero pooled variance (mu0 = {}, mu1 = {}, prior1 = {})",
                mean[0],
                mean[1],
                n[1] as f64 / total
            )));
        }
        Ok(GaussianCrackModel {
            mu0: T::from_acc(mean[0]),
            mu1: T::from_acc(mean[1]),
            sigma2: T::from_acc(sigma2),
            prior0: T::from_acc(n[0] as f64 / total),
            prior1: T::from_acc(n[1] as f64 / total),
        })
    }

    /// Slope and intercept of the crack feature `f(x) = w * x + w0`.
    pub fn linear_weights(&self) -> (T, T) {
        let two = T::one() + T::one();
        let w = (self.mu1 - self.mu0) / self.sigma2;
        let w0 = (self.mu0 * self.mu0 - self.mu1 * self.mu1) / (two * self.sigma2) + (self.prior1 / self.prior0).ln();
        (w, w0)
    }

    /// Log posterior odds of the crack class. Evaluated around the class
    /// midpoint, which is algebraically `w * x + w0` with less cancellation.
    pub fn log_odds(&self, x: T) -> T {
        let two = T::one() + T::one();
        let mid = (self.mu0 + self.mu1) / two;
        (self.mu1 - self.mu0) / self.sigma2 * (x - mid) + (self.prior1 / self.prior0).ln()
    }

    /// Crack posterior `P(C1 | x)`.
    pub fn posterior(&self, x: T) -> T {
        sigmoid(self.log_odds(x))
    }

    /// Class-conditional density `N(x | mu_j, sigma2)`; `crack` selects j = 1.
    pub fn class_density(&self, x: T, crack: bool) -> T {
        let mu = if crack { self.mu1 } else { self.mu0 };
        let two = T::one() + T::one();
        let norm = (two * T::PI() * self.sigma2).sqrt();
        (-(x - mu) * (x - mu) / (two * self.sigma2)).exp() / norm
    }

    /// Per-pixel baseline detector: `posterior(x) > threshold`.
    pub fn detect(&self, intensities: &[T], threshold: T) -> Vec<u8> {
        intensities
            .iter()
            .map(|&x| u8::from(self.posterior(x) > threshold))
            .collect()
    }
}

/// Plain-text record `mu0 mu1 sigma2 prior0 prior1`.
impl<T: Scalar> fmt::Display for GaussianCrackModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {} {}", self.mu0, self.mu1, self.sigma2, self.prior0, self.prior1)
    }
}

impl<T: Scalar + FromStr> FromStr for GaussianCrackModel<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<T> = s
            .split_whitespace()
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("bad model field `{v}`"))))
            .collect::<Result<_>>()?;
        let [mu0, mu1, sigma2, prior0, prior1] = fields[..] else {
            return Err(Error::Config(format!("model record needs 5 fields, got {}", fields.len())));
        };
        let m = GaussianCrackModel {
            mu0,
            mu1,
            sigma2,
            prior0,
            prior1,
        };
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle_log_ratio(m: &GaussianCrackModel<f64>, x: f64) -> f64 {
        let ln_n = |mu: f64| -0.5 * (2.0 * std::f64::consts::PI * m.sigma2).ln() - (x - mu).powi(2) / (2.0 * m.sigma2);
        ln_n(m.mu1) + m.prior1.ln() - ln_n(m.mu0) - m.prior0.ln()
    }

    #[test]
    fn degenerate_fit_reports_zero_variance() {
        let r = GaussianCrackModel::<f64>::fit(&[2.0, 2.0, 0.0, 0.0], &[1, 1, 0, 0]);
        match r {
            Err(Error::DegenerateFit(msg)) => {
                assert!(msg.contains("mu0 = 0") && msg.contains("mu1 = 2") && msg.contains("prior1 = 0.5"), "{msg}")
            }
            other => panic!("expected degenerate fit, got {other:?}"),
        }
    }

    #[test]
    fn pooled_variance_hand_example() {
        let m = GaussianCrackModel::<f64>::fit(&[1.0, 3.0, -1.0, 1.0], &[1, 1, 0, 0]).unwrap();
        assert_eq!((m.mu0, m.mu1, m.sigma2, m.prior0, m.prior1), (0.0, 2.0, 1.0, 0.5, 0.5));
    }

    #[test]
    fn prior_is_crack_fraction() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let m = GaussianCrackModel::fit(&x, &[1, 0, 0, 0, 1, 0, 0, 0]).unwrap();
        assert_eq!(m.prior1, 0.25);
    }

    #[test]
    fn empty_class_is_fit_error() {
        assert!(matches!(GaussianCrackModel::<f64>::fit(&[1.0, 2.0], &[0, 0]), Err(Error::Fit(_))));
    }

    #[test]
    fn reference_model() {
        let m = GaussianCrackModel::new(0.0f64, 2.0, 1.0, 0.5).unwrap();
        assert_eq!(m.linear_weights(), (2.0, -2.0));
        assert_eq!(m.log_odds(1.0), 0.0);
        assert!((m.log_odds(1.7) - oracle_log_ratio(&m, 1.7)).abs() < 1e-12);
        assert!((m.posterior(2.0) - 0.880_797_077_977_882_3).abs() < 1e-12);
        assert_eq!(m.posterior(1.0), 0.5);
    }

    #[test]
    fn equal_means_reduce_to_prior_ratio() {
        let m = GaussianCrackModel::new(5.0f64, 5.0, 3.0, 0.2).unwrap();
        let (w, w0) = m.linear_weights();
        assert_eq!(w, 0.0);
        assert!((w0 - (0.2f64 / 0.8).ln()).abs() < 1e-15);
        for x in [-100.0, 0.0, 5.0, 300.0] {
            assert!((m.log_odds(x) - (0.25f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn doubling_variance_halves_slope() {
        let a = GaussianCrackModel::new(10.0f64, 60.0, 40.0, 0.3).unwrap();
        let b = GaussianCrackModel { sigma2: 80.0, ..a };
        assert_eq!(a.linear_weights().0, 2.0 * b.linear_weights().0);
    }

    #[test]
    fn detector_boundary_at_midpoint() {
        let m = GaussianCrackModel::new(100.0f64, 40.0, 25.0, 0.5).unwrap();
        let mask = m.detect(&[69.0, 70.0, 71.0], 0.5);
        assert_eq!(mask, vec![1, 0, 0]);
    }

    #[test]
    fn record_round_trip() {
        let m = GaussianCrackModel::new(0.1f64, 123.456, 7.0 / 3.0, 0.125).unwrap();
        let back: GaussianCrackModel<f64> = m.to_string().parse().unwrap();
        assert_eq!(back, m);
        assert!("1 2 3".parse::<GaussianCrackModel<f64>>().is_err());
        assert!("1 2 0 0.5 0.5".parse::<GaussianCrackModel<f64>>().is_err());
    }

    proptest! {
        #[test]
        fn posterior_properties(
            mu0 in 0.0f64..255.0, delta in 1.0f64..100.0, sigma2 in 10.0f64..2000.0,
            prior1 in 0.01f64..0.99, x in 0.0f64..255.0, dx in 0.01f64..10.0,
        ) {
            let m = GaussianCrackModel::new(mu0, mu0 + delta, sigma2, prior1).unwrap();
            let p = m.posterior(x);
            let q = GaussianCrackModel { mu0: m.mu1, mu1: m.mu0, prior0: m.prior1, prior1: m.prior0, ..m }.posterior(x);
            prop_assert!((p + q - 1.0).abs() < 1e-12);
            prop_assert!(m.posterior(x + dx) >= p);
            let (w, w0) = m.linear_weights();
            prop_assert!((sigmoid(w * x + w0) - p).abs() < 1e-12);
        }

        #[test]
        fn larger_crack_prior_grows_detection(
            mu0 in 0.0f64..255.0, mu1 in 0.0f64..255.0, sigma2 in 10.0f64..2000.0,
            p1 in 0.05f64..0.5, bump in 0.01f64..0.45, xs in proptest::collection::vec(0.0f64..255.0, 1..64),
        ) {
            let a = GaussianCrackModel::new(mu0, mu1, sigma2, p1).unwrap();
            let b = GaussianCrackModel::new(mu0, mu1, sigma2, p1 + bump).unwrap();
            let (ma, mb) = (a.detect(&xs, 0.5), b.detect(&xs, 0.5));
            prop_assert!(ma.iter().zip(&mb).all(|(x, y)| x <= y));
        }
    }
}
