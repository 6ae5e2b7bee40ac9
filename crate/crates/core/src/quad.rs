//! Composite Gauss–Legendre quadrature with panel doubling, plus a composite
//! Simpson rule for integrands that are only known on a uniform sample grid.

use std::sync::OnceLock;

/// Nodes and weights of the 16-point Gauss–Legendre rule on [-1, 1].
///
/// Computed once by Newton iteration on P_16; a degree-31 polynomial is
/// integrated exactly, which the unit tests check.
pub fn gl16() -> &'static ([f64; 16], [f64; 16]) {
    static RULE: OnceLock<([f64; 16], [f64; 16])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 16usize;
        let mut nodes = [0.0; 16];
        let mut weights = [0.0; 16];
        for i in 0..n {
            // Chebyshev-like initial guess, then Newton on P_n(x) = 0.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Panel-doubling controls for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub init_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-10,
            init_panels: 64,
            max_panels: 4096,
        }
    }
}

impl QuadConfig {
    /// Tight configuration used for mollifier moment systems.
    pub fn moments() -> Self {
        QuadConfig {
            rel_tol: 1e-14,
            init_panels: 64,
            max_panels: 2048,
        }
    }
}

/// Composite 16-point Gauss–Legendre over `panels` equal panels of [a, b].
pub fn fixed_panels(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gl16();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for i in 0..16 {
            acc += weights[i] * f(mid + half * nodes[i]);
        }
        total += acc * half;
    }
    total
}

/// Adaptive composite Gauss–Legendre: doubles the panel count until two
/// successive results agree to `rel_tol` (relative, floored at 1e-300 scale)
/// or the panel cap is reached. Orientation (a > b) is handled by sign.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, cfg: &QuadConfig) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut panels = cfg.init_panels.max(1);
    let mut prev = fixed_panels(f, lo, hi, panels);
    while panels < cfg.max_panels {
        panels *= 2;
        let next = fixed_panels(f, lo, hi, panels);
        let scale = next.abs().max(prev.abs()).max(1e-300);
        if (next - prev).abs() <= cfg.rel_tol * scale {
            return sign * next;
        }
        prev = next;
    }
    sign * prev
}

/// Composite Simpson rule for samples on a uniform grid.
///
/// `samples.len()` must be odd (an even number of intervals). Used for
/// integrals of quantities that only exist as per-node trajectory samples.
pub fn simpson(samples: &[f64], h: f64) -> f64 {
    let n = samples.len();
    assert!(n >= 3 && n % 2 == 1, "simpson needs an odd sample count");
    let mut acc = samples[0] + samples[n - 1];
    for (i, s) in samples.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * s } else { 2.0 * s };
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl16_integrates_degree_31_exactly() {
        let (nodes, weights) = gl16();
        for deg in [0usize, 1, 2, 7, 16, 30, 31] {
            let got: f64 = (0..16).map(|i| weights[i] * nodes[i].powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!(
                (got - exact).abs() < 1e-14,
                "degree {deg}: got {got}, want {exact}"
            );
        }
    }

    #[test]
    fn adaptive_matches_closed_forms() {
        let cfg = QuadConfig::default();
        let v = integrate(&mut |x: f64| x.sin(), 0.0, std::f64::consts::PI, &cfg);
        assert!((v - 2.0).abs() < 1e-12);
        let v = integrate(&mut |x: f64| (-x * x).exp(), -6.0, 6.0, &cfg);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        // orientation
        let v = integrate(&mut |x: f64| x, 1.0, 0.0, &cfg);
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn simpson_on_grid() {
        let n = 1025;
        let h = 1.0 / (n - 1) as f64;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&samples, h) - 0.25).abs() < 1e-12);
    }
}
