//! Small sample statistics for sweep aggregation.

/// One-sided 95% normal quantile.
pub const Z95: f64 = 1.645;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample standard deviation over `√n`); 0 for fewer than 2 points.
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Paired one-sided test that `a` exceeds `b` on average: the lower 95% bound
/// of `mean(a − b)` is positive. Returns `(mean difference, lower bound)`.
pub fn paired_greater(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mean(&d);
    (md, md - Z95 * stderr(&d))
}
