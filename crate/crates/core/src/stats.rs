//! Small statistical helpers shared by the estimators and studies.

/// Arithmetic mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased empirical variance (two-pass).
pub fn variance_unbiased(xs: &[f64]) -> f64 {
    let m = xs.len();
    if m < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m - 1) as f64
}

/// Empirical central fourth moment.
pub fn central_moment4(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / xs.len() as f64
}

/// Standard error of the unbiased variance estimator,
/// sqrt((m4 - var^2) / M) with empirical moments.
pub fn variance_standard_error(xs: &[f64]) -> f64 {
    let var = variance_unbiased(xs);
    let m4 = central_moment4(xs);
    ((m4 - var * var).max(0.0) / xs.len() as f64).sqrt()
}

/// Least-squares slope of ln(y) against ln(x).
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..lx.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_of_constants_is_zero() {
        assert_eq!(variance_unbiased(&[2.0, 2.0, 2.0]), 0.0);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let xs = [2.0f64, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|&x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((fit_loglog_slope(&xs, &ys) + 1.5).abs() < 1e-12);
    }
}
