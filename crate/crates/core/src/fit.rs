//! Least-squares line fits used by the asymptotic classifiers.

/// Slope, intercept and RMS residual of the least-squares line through
/// `(xs[i], ys[i])`. Degenerate inputs (fewer than two points, zero variance)
/// return slope 0 with the mean as intercept.
pub(crate) fn linfit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    assert_eq!(n, ys.len());
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if sxx <= 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for i in 0..n {
        let r = ys[i] - (slope * xs[i] + intercept);
        ss += r * r;
    }
    (slope, intercept, (ss / nf).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (s, b, r) = linfit(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-14);
        assert!((b + 1.0).abs() < 1e-14);
        assert!(r < 1e-14);
    }
}
