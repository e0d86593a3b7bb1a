//! Small statistics helpers used by goodness-of-fit checks and reports.

/// Result of a one-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample KS test of `sample` against the continuous CDF `cdf`.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(d, n),
        n,
    }
}

/// Survival function of the KS statistic, with Stephens' small-sample correction.
pub fn kolmogorov_sf(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// CDF of the unit exponential distribution.
pub fn exp1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_critical_values() {
        // asymptotic 5% and 1% critical values of sqrt(n) D
        let n = 1_000_000;
        let sn = (n as f64).sqrt();
        assert!((kolmogorov_sf(1.3581 / sn, n) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276 / sn, n) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn uniform_grid_passes() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(r.statistic <= 0.0005 + 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn shifted_sample_fails() {
        let xs: Vec<f64> = (0..1000).map(|i| 0.2 + (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_test(&xs, exp1_cdf).p_value < 1e-6);
    }

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }
}
