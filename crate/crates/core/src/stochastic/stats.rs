//! Small statistics helpers used by simulation checks.

/// Mean and unbiased sample variance.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against the
/// exponential distribution with the given rate. `samples` need not be
/// sorted.
pub fn exponential_ks_statistic(samples: &[f64], rate: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let cdf = 1.0 - (-rate * x).exp();
        let upper = (i as f64 + 1.0) / n - cdf;
        let lower = cdf - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    d
}

/// Asymptotic critical value of the two-sided KS statistic at significance
/// `alpha`: `sqrt(-ln(alpha/2) / 2) / sqrt(n)`. Valid for large `n`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    ((-(alpha / 2.0).ln()) / 2.0).sqrt() / (n as f64).sqrt()
}
