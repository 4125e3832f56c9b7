//! Mean and Student-t confidence interval over replications.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided confidence level of every interval in the outputs.
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub std_dev: Option<f64>,
    /// Half-width of the 95% interval; absent for a single value.
    pub ci95: Option<f64>,
}

impl Estimate {
    pub fn lower(&self) -> f64 {
        self.mean - self.ci95.unwrap_or(0.0)
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95.unwrap_or(0.0)
    }

    /// True when the two intervals share at least one point.
    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// `None` for an empty sample.
pub fn estimate(values: &[f64]) -> Option<Estimate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Some(Estimate {
            n,
            mean,
            std_dev: None,
            ci95: None,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let ci = t_quantile(n - 1) * sd / (n as f64).sqrt();
    Some(Estimate {
        n,
        mean,
        std_dev: Some(sd),
        ci95: Some(ci),
    })
}

/// Upper `(1 + CONFIDENCE) / 2` quantile of Student's t with `dof` degrees
/// of freedom.
pub fn t_quantile(dof: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    t.inverse_cdf(0.5 + CONFIDENCE / 2.0)
}
