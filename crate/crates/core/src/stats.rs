use serde::{Deserialize, Serialize};

/// Monte Carlo estimate with its CLT standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Estimate {
        Estimate {
            value,
            stderr: 0.0,
            count: 0,
        }
    }

    /// `|value - target| <= k * stderr + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + slack
    }
}

/// Sample mean and unbiased sample variance, summed in index order.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

pub fn estimate(xs: &[f64]) -> Estimate {
    let (mean, var) = mean_var(xs);
    Estimate {
        value: mean,
        stderr: (var / xs.len() as f64).sqrt(),
        count: xs.len(),
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let (m, v) = mean_var(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
        let e = estimate(&[2.0; 10]);
        assert_eq!((e.value, e.stderr), (2.0, 0.0));
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        let p = normal_cdf(1.0);
        assert!((p - 0.841_344_746_068_542_9).abs() < 1e-14, "{p}");
        assert!((normal_cdf(-8.0) - 6.220_960_574_271_78e-16).abs() < 1e-28);
    }
}
