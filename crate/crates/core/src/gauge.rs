//! Arithmetic, order and asymptotic classification for generalized numbers
//! represented as sampled ε-nets relative to a gauge.
//!
//! A [`Gauge`] fixes a finite ε-grid and a positive net `ρ_ε → 0`; a
//! [`GenNum`] is one real sample per grid point. All asymptotic notions
//! (moderate, negligible, order, standard part) are estimated from the tail
//! half of the grid and carry fit diagnostics — a finite grid cannot witness
//! "for ε small", so every verdict is a tail-fit estimate.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fit::linfit;

/// Negligibility test panel: nets below `ρ^M_PANEL` on the tail count as zero.
pub const M_PANEL: u32 = 8;
/// Slack applied to fitted orders before integer verdicts.
pub const ORDER_SLACK: f64 = 0.5;
/// Per-grid-step drift of the pointwise order beyond which a net is declared
/// super-polynomial ("neither").
const DRIFT_TOL: f64 = 0.25;

/// Strictly decreasing ε values in (0, 1], at least 8 of them.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsGrid {
    eps: Vec<f64>,
}

impl EpsGrid {
    pub fn from_values(eps: Vec<f64>) -> Result<Self> {
        if eps.len() < 8 {
            return Err(Error::BadGrid(format!(
                "need at least 8 levels, got {}",
                eps.len()
            )));
        }
        for (i, &e) in eps.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::BadGrid(format!("ε_{i} = {e} outside (0, 1]")));
            }
            if i > 0 && e >= eps[i - 1] {
                return Err(Error::BadGrid(format!("not strictly decreasing at {i}")));
            }
        }
        Ok(EpsGrid { eps })
    }

    /// ε_k = ε_0 · q^k for k = 0..levels.
    pub fn geometric(eps0: f64, q: f64, levels: usize) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::BadGrid(format!("ratio {q} outside (0, 1)")));
        }
        Self::from_values((0..levels).map(|k| eps0 * q.powi(k as i32)).collect())
    }

    /// The default desk grid ε_k = 2^-k, k = 1..=20.
    pub fn geometric_default() -> Self {
        Self::geometric(0.5, 0.5, 20).expect("default grid is valid")
    }

    /// ε_k = 1/(2k), k = 1..=levels. Shallow enough for the `exp` gauge.
    pub fn harmonic(levels: usize) -> Result<Self> {
        Self::from_values((1..=levels).map(|k| 1.0 / (2.0 * k as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.eps
    }
}

/// How ρ is derived from the grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GaugeKind {
    /// ρ_ε = ε.
    Identity,
    /// ρ_ε = ε^p, p > 0.
    Power(f64),
    /// ρ_ε = e^(-1/ε). Needs a shallow grid: on deep geometric grids the
    /// values underflow to zero and the table is rejected.
    Exp,
    /// Explicit table, same length as the grid.
    Table(Vec<f64>),
}

/// A gauge: the ε-grid together with the infinitesimal net ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauge {
    grid: EpsGrid,
    rho: Vec<f64>,
}

impl Gauge {
    pub fn new(grid: EpsGrid, kind: GaugeKind) -> Result<Arc<Self>> {
        let rho: Vec<f64> = match &kind {
            GaugeKind::Identity => grid.eps.clone(),
            GaugeKind::Power(p) => {
                if *p <= 0.0 {
                    return Err(Error::BadGauge(format!("power {p} must be positive")));
                }
                grid.eps.iter().map(|e| e.powf(*p)).collect()
            }
            GaugeKind::Exp => grid.eps.iter().map(|e| (-1.0 / e).exp()).collect(),
            GaugeKind::Table(t) => t.clone(),
        };
        if rho.len() != grid.len() {
            return Err(Error::BadGauge(format!(
                "ρ table length {} does not match grid length {}",
                rho.len(),
                grid.len()
            )));
        }
        for (i, &r) in rho.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::BadGauge(format!(
                    "ρ_{i} = {r} outside (0, 1); for the exp kind this usually means \
                     the grid is too deep and the table underflowed"
                )));
            }
            if i > 0 && r > rho[i - 1] {
                return Err(Error::BadGauge(format!("ρ increases at index {i}")));
            }
        }
        if rho[rho.len() - 1] >= rho[0] && rho.len() > 1 && rho[0] == rho[rho.len() - 1] {
            return Err(Error::BadGauge("ρ table is constant".into()));
        }
        Ok(Arc::new(Gauge { grid, rho }))
    }

    /// Identity gauge on the default grid.
    pub fn default_identity() -> Arc<Self> {
        Self::new(EpsGrid::geometric_default(), GaugeKind::Identity).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn eps(&self, k: usize) -> f64 {
        self.grid.eps[k]
    }

    pub fn rho(&self, k: usize) -> f64 {
        self.rho[k]
    }

    pub fn grid(&self) -> &EpsGrid {
        &self.grid
    }

    /// First index of the tail half of the grid used for asymptotic fits.
    pub fn tail_start(&self) -> usize {
        self.len() - self.tail_len()
    }

    pub fn tail_len(&self) -> usize {
        (self.len() / 2).max(4)
    }

    pub fn tail_indices(&self) -> std::ops::Range<usize> {
        self.tail_start()..self.len()
    }
}

fn same_gauge(a: &Arc<Gauge>, b: &Arc<Gauge>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Tri-state outcome of the partial-order predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    Holds,
    Fails,
    Undecidable,
}

impl Truth {
    pub fn holds(self) -> bool {
        self == Truth::Holds
    }
}

/// Asymptotic verdict of a net relative to the gauge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Bounded by C·ρ^(-N) on the tail.
    Moderate(u32),
    /// Below ρ^m on the tail for every m in the test panel.
    Negligible,
    /// Pointwise order drifts: super-polynomial in 1/ρ.
    Neither,
}

/// Classification report: fitted order (slope of log|x| against log ρ), the
/// RMS residual of that fit, and the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub estimated_order: f64,
    pub fit_residual: f64,
    pub verdict: Verdict,
}

/// Valuation data: ν(x), |x|_e = e^(-ν) and dρ(x) = [ρ^ν].
#[derive(Debug, Clone)]
pub struct Valuation {
    pub nu: f64,
    pub e_norm: f64,
    pub drho: GenNum,
}

/// A generalized number: one sample per grid point, tied to its gauge.
#[derive(Debug, Clone)]
pub struct GenNum {
    gauge: Arc<Gauge>,
    samples: Vec<f64>,
}

impl GenNum {
    pub fn from_samples(gauge: &Arc<Gauge>, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != gauge.len() {
            return Err(Error::BadGauge(format!(
                "sample length {} does not match grid length {}",
                samples.len(),
                gauge.len()
            )));
        }
        Ok(GenNum {
            gauge: Arc::clone(gauge),
            samples,
        })
    }

    /// Build from a closure of (index, ε_k, ρ_k).
    pub fn from_fn(gauge: &Arc<Gauge>, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let samples = (0..gauge.len())
            .map(|k| f(k, gauge.eps(k), gauge.rho(k)))
            .collect();
        GenNum {
            gauge: Arc::clone(gauge),
            samples,
        }
    }

    pub fn constant(gauge: &Arc<Gauge>, c: f64) -> Self {
        GenNum::from_fn(gauge, |_, _, _| c)
    }

    pub fn zero(gauge: &Arc<Gauge>) -> Self {
        GenNum::constant(gauge, 0.0)
    }

    /// The net [ε_k].
    pub fn eps_net(gauge: &Arc<Gauge>) -> Self {
        GenNum::from_fn(gauge, |_, e, _| e)
    }

    /// The net [ρ_k^p].
    pub fn rho_pow(gauge: &Arc<Gauge>, p: f64) -> Self {
        GenNum::from_fn(gauge, |_, _, r| r.powf(p))
    }

    pub fn gauge(&self) -> &Arc<Gauge> {
        &self.gauge
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample(&self, k: usize) -> f64 {
        self.samples[k]
    }

    /// Rows (k, ε, ρ, value) for CSV-style serialization.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64, f64)> + '_ {
        (0..self.samples.len()).map(move |k| {
            (
                k,
                self.gauge.eps(k),
                self.gauge.rho(k),
                self.samples[k],
            )
        })
    }

    fn check_gauge(&self, other: &GenNum) -> Result<()> {
        if same_gauge(&self.gauge, &other.gauge) {
            Ok(())
        } else {
            Err(Error::GaugeMismatch)
        }
    }

    /// Componentwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GenNum {
        GenNum {
            gauge: Arc::clone(&self.gauge),
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &GenNum, f: impl Fn(f64, f64) -> f64) -> GenNum {
        assert!(
            same_gauge(&self.gauge, &other.gauge),
            "gauge mismatch between operands"
        );
        GenNum {
            gauge: Arc::clone(&self.gauge),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self, other: &GenNum) -> GenNum {
        self.zip(other, f64::min)
    }

    pub fn max(&self, other: &GenNum) -> GenNum {
        self.zip(other, f64::max)
    }

    pub fn abs(&self) -> GenNum {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> GenNum {
        self.map(|v| c * v)
    }

    /// Componentwise square root; requires `0 < self` in the sharp order.
    pub fn sqrt(&self) -> Result<GenNum> {
        let zero = GenNum::zero(&self.gauge);
        if zero.gen_lt(self)? != Truth::Holds {
            return Err(Error::NotStrictlyPositive);
        }
        Ok(self.map(f64::sqrt))
    }

    /// Tail-fit asymptotic classification relative to the gauge.
    ///
    /// Exact zeros are excluded from the log fit; a tail that is mostly zero
    /// is negligible outright. The pointwise order e_k = log|x_k| / log ρ_k
    /// must not drift downward along the tail, otherwise the net is
    /// super-polynomial and "neither".
    pub fn classify(&self) -> AsymptoticReport {
        let g = &self.gauge;
        let tail: Vec<usize> = g.tail_indices().collect();
        let zeros = tail.iter().filter(|&&k| self.samples[k] == 0.0).count();
        if zeros * 2 > tail.len() {
            return AsymptoticReport {
                estimated_order: f64::INFINITY,
                fit_residual: 0.0,
                verdict: Verdict::Negligible,
            };
        }
        let mut ln_rho = Vec::new();
        let mut ln_x = Vec::new();
        let mut e_pt = Vec::new();
        let mut idx = Vec::new();
        for &k in &tail {
            let v = self.samples[k].abs();
            if v == 0.0 {
                continue;
            }
            let lr = g.rho(k).ln();
            ln_rho.push(lr);
            ln_x.push(v.ln());
            e_pt.push(v.ln() / lr);
            idx.push(k as f64);
        }
        let (slope, _icpt, resid) = linfit(&ln_rho, &ln_x);
        let (drift, _, _) = linfit(&idx, &e_pt);
        let min_e = e_pt.iter().cloned().fold(f64::INFINITY, f64::min);

        let verdict = if drift < -DRIFT_TOL {
            Verdict::Neither
        } else if min_e >= M_PANEL as f64 - ORDER_SLACK {
            Verdict::Negligible
        } else {
            let mut n = (-slope).round().max(0.0) as u32;
            while (min_e < -(n as f64) - ORDER_SLACK) && n < 10_000 {
                n += 1;
            }
            if n >= 10_000 {
                Verdict::Neither
            } else {
                Verdict::Moderate(n)
            }
        };
        AsymptoticReport {
            estimated_order: slope,
            fit_residual: resid,
            verdict,
        }
    }

    /// Equality in the ring: the difference is negligible. Differences at
    /// relative machine precision of the operands are treated as exact zeros;
    /// a finite float grid cannot distinguish them from 0.
    pub fn gen_eq(&self, other: &GenNum) -> Result<bool> {
        self.check_gauge(other)?;
        let diff = GenNum::from_fn(&self.gauge, |k, _, _| {
            let d = self.samples[k] - other.samples[k];
            let floor = 1e-13 * (1.0 + self.samples[k].abs() + other.samples[k].abs());
            if d.abs() <= floor {
                0.0
            } else {
                d
            }
        });
        Ok(diff.classify().verdict == Verdict::Negligible)
    }

    /// x ≤ y up to a negligible slack: y_k - x_k ≥ -ρ_k^M_PANEL on the tail.
    pub fn gen_le(&self, other: &GenNum) -> Result<Truth> {
        self.check_gauge(other)?;
        let g = &self.gauge;
        let le = g
            .tail_indices()
            .all(|k| other.samples[k] - self.samples[k] >= -g.rho(k).powi(M_PANEL as i32));
        if le {
            return Ok(Truth::Holds);
        }
        // Definitively false only when the reverse strict order holds.
        if strict_witness(other, self).is_some() {
            return Ok(Truth::Fails);
        }
        Ok(Truth::Undecidable)
    }

    /// Sharp strict order: some m ≤ M_PANEL witnesses y_k - x_k > ρ_k^m on
    /// the whole tail.
    pub fn gen_lt(&self, other: &GenNum) -> Result<Truth> {
        self.check_gauge(other)?;
        if strict_witness(self, other).is_some() {
            return Ok(Truth::Holds);
        }
        if other.gen_le(self)? == Truth::Holds {
            return Ok(Truth::Fails);
        }
        Ok(Truth::Undecidable)
    }

    /// Witness exponent for `self < other`, when one exists.
    pub fn lt_witness(&self, other: &GenNum) -> Result<Option<u32>> {
        self.check_gauge(other)?;
        Ok(strict_witness(self, other))
    }

    /// Extrapolated limit of the samples as ε → 0.
    ///
    /// Stabilization: the last five samples must have non-increasing
    /// successive differences with the final one below 1e-6·(1+|value|);
    /// otherwise a rate estimate drives a Richardson step, and a
    /// non-contracting rate is an error.
    pub fn standard_part(&self) -> Result<f64> {
        let n = self.samples.len();
        let v = &self.samples[n - 5..];
        let scale = 1.0 + v[4].abs();
        let d: Vec<f64> = (0..4).map(|i| (v[i + 1] - v[i]).abs()).collect();
        if d.iter().all(|&x| x <= 1e-13 * scale) {
            return Ok(v[4]);
        }
        let nonincreasing = (0..3).all(|i| d[i + 1] <= d[i] * (1.0 + 1e-9));
        if nonincreasing && d[3] < 1e-6 * scale {
            return Ok(aitken(v[2], v[3], v[4]));
        }
        // Rate estimate from successive difference ratios; every step must
        // contract or the limit is not trusted.
        let mut ratios = Vec::new();
        for i in 0..3 {
            if d[i + 1] > 0.0 {
                ratios.push(d[i] / d[i + 1]);
            }
        }
        if ratios.is_empty() {
            return Ok(v[4]);
        }
        if ratios.iter().any(|&r| !(r >= 1.05) || !r.is_finite()) {
            return Err(Error::NoStandardPart(
                "tail does not stabilize (non-contracting differences)".into(),
            ));
        }
        // Convergence diagnostic: extrapolations from overlapping windows must
        // agree, which rules out oscillation that happens to contract in |·|.
        let l1 = aitken(v[2], v[3], v[4]);
        let l2 = aitken(v[1], v[2], v[3]);
        if (l1 - l2).abs() > 1e-4 * (1.0 + l1.abs()) {
            return Err(Error::NoStandardPart(format!(
                "tail extrapolations disagree ({l1:.6e} vs {l2:.6e})"
            )));
        }
        Ok(l1)
    }

    /// ν(x), |x|_e and dρ(x). The zero net maps to ν = +∞, |x|_e = 0 and the
    /// zero generalized number.
    pub fn valuation(&self) -> Valuation {
        if self.samples.iter().all(|&v| v == 0.0) {
            return Valuation {
                nu: f64::INFINITY,
                e_norm: 0.0,
                drho: GenNum::zero(&self.gauge),
            };
        }
        let nu = self.classify().estimated_order;
        Valuation {
            nu,
            e_norm: (-nu).exp(),
            drho: GenNum::rho_pow(&self.gauge, nu),
        }
    }
}

/// Smallest panel exponent m with lo_k + ρ_k^m < hi_k across the tail.
fn strict_witness(lo: &GenNum, hi: &GenNum) -> Option<u32> {
    let g = lo.gauge();
    (1..=M_PANEL).find(|&m| {
        g.tail_indices()
            .all(|k| hi.samples[k] - lo.samples[k] > g.rho(k).powi(m as i32))
    })
}

/// Aitken Δ² extrapolation of a three-term tail.
fn aitken(v0: f64, v1: f64, v2: f64) -> f64 {
    let d1 = v1 - v0;
    let d2 = v2 - v1;
    let denom = d2 - d1;
    if denom.abs() <= 1e-12 * (d1.abs() + d2.abs()) {
        return v2;
    }
    v2 - d2 * d2 / denom
}

impl fmt::Display for GenNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.samples.len();
        write!(
            f,
            "[.., {:.6e}, {:.6e}] ({} levels)",
            self.samples[n - 2],
            self.samples[n - 1],
            n
        )
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &GenNum {
            type Output = GenNum;
            fn $method(self, rhs: &GenNum) -> GenNum {
                self.zip(rhs, |a, b| a $op b)
            }
        }
        impl $trait for GenNum {
            type Output = GenNum;
            fn $method(self, rhs: GenNum) -> GenNum {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&GenNum> for GenNum {
            type Output = GenNum;
            fn $method(self, rhs: &GenNum) -> GenNum {
                (&self).$method(rhs)
            }
        }
        impl $trait<GenNum> for &GenNum {
            type Output = GenNum;
            fn $method(self, rhs: GenNum) -> GenNum {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for &GenNum {
    type Output = GenNum;
    fn neg(self) -> GenNum {
        self.map(|v| -v)
    }
}

impl Neg for GenNum {
    type Output = GenNum;
    fn neg(self) -> GenNum {
        -&self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> Arc<Gauge> {
        Gauge::default_identity()
    }

    fn exp_gauge() -> Arc<Gauge> {
        Gauge::new(EpsGrid::harmonic(16).unwrap(), GaugeKind::Exp).unwrap()
    }

    #[test]
    fn gauge_kinds() {
        let g = g();
        assert_eq!(g.len(), 20);
        assert!((g.eps(0) - 0.5).abs() < 1e-15);
        assert!((g.rho(19) - 2f64.powi(-20)).abs() < 1e-21);
        // power
        let gp = Gauge::new(EpsGrid::geometric_default(), GaugeKind::Power(2.0)).unwrap();
        assert!((gp.rho(3) - gp.eps(3) * gp.eps(3)).abs() < 1e-18);
        // explicit table equal to identity behaves identically
        let gt = Gauge::new(
            EpsGrid::geometric_default(),
            GaugeKind::Table((1..=20).map(|k| 2f64.powi(-k)).collect()),
        )
        .unwrap();
        assert_eq!(*gt, *g);
        // exp on a shallow grid works, on the default grid it underflows
        let ge = exp_gauge();
        assert!((ge.rho(0) - (-2.0f64).exp()).abs() < 1e-16);
        assert!(Gauge::new(EpsGrid::geometric_default(), GaugeKind::Exp).is_err());
        // rejected tables
        assert!(Gauge::new(
            EpsGrid::harmonic(8).unwrap(),
            GaugeKind::Table(vec![0.5, 0.4, 0.3, 0.2, 0.3, 0.2, 0.1, 0.05])
        )
        .is_err());
        assert!(Gauge::new(
            EpsGrid::harmonic(8).unwrap(),
            GaugeKind::Table(vec![0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.0, -0.1])
        )
        .is_err());
    }

    #[test]
    fn classify_powers_and_exponentials() {
        let g = g();
        let cases: Vec<(GenNum, Verdict)> = vec![
            (
                GenNum::from_fn(&g, |_, e, _| e.powi(-3)),
                Verdict::Moderate(3),
            ),
            (GenNum::from_fn(&g, |_, e, _| (1.0 / e).exp()), Verdict::Neither),
            (GenNum::zero(&g), Verdict::Negligible),
            (
                GenNum::from_fn(&g, |_, e, _| (-1.0 / e).exp()),
                Verdict::Negligible,
            ),
            (GenNum::constant(&g, 3.0), Verdict::Moderate(0)),
            (GenNum::from_fn(&g, |_, e, _| e * e), Verdict::Moderate(0)),
        ];
        for (x, want) in cases {
            assert_eq!(x.classify().verdict, want, "net {x}");
        }
        let order = GenNum::from_fn(&g, |_, e, _| e.powi(-3)).classify().estimated_order;
        assert!((order + 3.0).abs() < 1e-9);
    }

    #[test]
    fn gen_eq_examples() {
        let g = g();
        let x = GenNum::from_fn(&g, |_, e, _| e * e);
        let y = GenNum::from_fn(&g, |_, e, _| e * e + (-1.0 / e).exp());
        assert!(x.gen_eq(&y).unwrap());
        let x = GenNum::eps_net(&g);
        let y = x.scale(2.0);
        assert!(!x.gen_eq(&y).unwrap());
        assert!(x.gen_eq(&x).unwrap());
    }

    #[test]
    fn order_predicates() {
        let g = g();
        let zero = GenNum::zero(&g);
        let eps = GenNum::eps_net(&g);
        assert_eq!(zero.gen_lt(&eps).unwrap(), Truth::Holds);
        assert_eq!(zero.lt_witness(&eps).unwrap(), Some(2));
        assert_eq!(eps.gen_le(&eps).unwrap(), Truth::Holds);
        // (-1)^⌊1/ε⌋·ε on the dyadic grid: ⌊1/ε⌋ = 2^k is always even, so the
        // sign scan shows no alternation and the order decides positive.
        let alt_dyadic = GenNum::from_fn(&g, |_, e, _| {
            let sign = if (1.0 / e).floor() as i64 % 2 == 0 { 1.0 } else { -1.0 };
            sign * e
        });
        assert!(g.tail_indices().all(|k| alt_dyadic.sample(k) > 0.0));
        assert_eq!(zero.gen_lt(&alt_dyadic).unwrap(), Truth::Holds);
        // on a unit-fraction grid the floor parity alternates every step
        let gu = Gauge::new(
            EpsGrid::from_values((2..=17).map(|k| 1.0 / k as f64).collect()).unwrap(),
            GaugeKind::Identity,
        )
        .unwrap();
        let zero_u = GenNum::zero(&gu);
        let alt = GenNum::from_fn(&gu, |_, e, _| {
            let sign = if (1.0 / e).round() as i64 % 2 == 0 { 1.0 } else { -1.0 };
            sign * e
        });
        let signs: Vec<bool> = gu.tail_indices().map(|k| alt.sample(k) > 0.0).collect();
        assert!(signs.iter().any(|&s| s) && signs.iter().any(|&s| !s));
        assert_eq!(alt.gen_le(&zero_u).unwrap(), Truth::Undecidable);
        assert_eq!(zero_u.gen_le(&alt).unwrap(), Truth::Undecidable);
        // positivity is multiplicative
        let x = GenNum::from_fn(&g, |_, e, _| e * e);
        let y = GenNum::constant(&g, 2.0);
        assert_eq!(zero.gen_lt(&(&x * &y)).unwrap(), Truth::Holds);
    }

    #[test]
    fn min_max_abs_sqrt() {
        let g = g();
        let eps = GenNum::eps_net(&g);
        let eps2 = &eps * &eps;
        assert!(eps.min(&eps2).gen_eq(&eps2).unwrap());
        assert!((-&eps).abs().gen_eq(&eps).unwrap());
        assert!(eps.max(&eps).gen_eq(&eps).unwrap());
        let four = GenNum::constant(&g, 4.0);
        assert!(four.sqrt().unwrap().gen_eq(&GenNum::constant(&g, 2.0)).unwrap());
        assert!(eps2.sqrt().unwrap().gen_eq(&eps).unwrap());
        assert!(matches!(
            GenNum::constant(&g, -1.0).sqrt(),
            Err(Error::NotStrictlyPositive)
        ));
    }

    #[test]
    fn standard_parts() {
        let g = g();
        let x = GenNum::from_fn(&g, |_, e, _| 2.0 + e);
        assert!((x.standard_part().unwrap() - 2.0).abs() < 1e-9);
        let x = GenNum::eps_net(&g);
        assert!(x.standard_part().unwrap().abs() < 1e-9);
        // oracle: the oscillating net really oscillates on the tail
        let x = GenNum::from_fn(&g, |_, e, _| (1.0 / e).sin());
        let tail: Vec<f64> = g.tail_indices().map(|k| x.sample(k)).collect();
        let spread = tail.iter().cloned().fold(f64::MIN, f64::max)
            - tail.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 0.5);
        assert!(x.standard_part().is_err());
        // constants come back exactly
        assert_eq!(GenNum::constant(&g, 0.5).standard_part().unwrap(), 0.5);
    }

    #[test]
    fn valuation_examples() {
        let g = g();
        let x = GenNum::from_fn(&g, |_, e, _| e * e);
        let v = x.valuation();
        assert!((v.nu - 2.0).abs() < 1e-6);
        assert!((v.e_norm - (-2.0f64).exp()).abs() < 1e-6);
        assert!(v.drho.gen_eq(&x).unwrap());
        let v = GenNum::zero(&g).valuation();
        assert!(v.nu.is_infinite() && v.e_norm == 0.0);
        let v = GenNum::constant(&g, 3.0).valuation();
        assert!(v.nu.abs() < 1e-9 && (v.e_norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exp_gauge_classification() {
        let g = exp_gauge();
        // ε^-1 is below every power of the exp gauge
        let x = GenNum::from_fn(&g, |_, e, _| 1.0 / e);
        assert_eq!(x.classify().verdict, Verdict::Moderate(0));
        // e^(1/ε) = ρ^-1 exactly
        let x = GenNum::from_fn(&g, |_, e, _| (1.0 / e).exp());
        assert_eq!(x.classify().verdict, Verdict::Moderate(1));
        // e^(-9/ε) = ρ^9 sits below the whole test panel
        let x = GenNum::from_fn(&g, |_, e, _| (-9.0 / e).exp());
        assert_eq!(x.classify().verdict, Verdict::Negligible);
    }

    #[test]
    fn gauge_mismatch_is_an_error() {
        let a = GenNum::eps_net(&g());
        let b = GenNum::eps_net(&exp_gauge());
        assert!(matches!(a.gen_eq(&b), Err(Error::GaugeMismatch)));
        assert!(matches!(a.gen_le(&b), Err(Error::GaugeMismatch)));
    }
}
