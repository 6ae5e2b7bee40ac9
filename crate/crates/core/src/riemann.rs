//! Regularized geodesics for low-regularity Riemannian metrics on ℝ^d:
//! mollify the metric componentwise by a scaled tensor-product kernel, solve
//! the per-ε geodesic equations, compute generalized lengths and standard
//! parts, and assess minimality through the energy functional.
//!
//! The kernel convolutions use a fixed tensor-product Gauss–Legendre rule
//! whose panel count is calibrated once per metric so that the kernel's unit
//! mass is reproduced to 1e-11; every derivative of the regularized metric
//! is a convolution against the corresponding kernel derivative.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauge::{Gauge, GenNum, Truth};
use crate::gsf::IntervalDomain;
use crate::mollifier::{EmbeddingParams, Mollifier};
use crate::ode;
use crate::quad::{gl16, simpson};
use crate::varcalc::{self, Lagrangian, MinimizerReport, Trajectory};

type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type MetricDerivFn = Arc<dyn Fn(&[f64], usize) -> DMatrix<f64> + Send + Sync>;

/// A (possibly C^{1,1}) Riemannian metric given by componentwise callables.
#[derive(Clone)]
pub struct MetricSpec {
    pub dim: usize,
    components: MetricFn,
    first_derivs: Option<MetricDerivFn>,
    pd_probes: Vec<Vec<f64>>,
}

impl MetricSpec {
    pub fn new(
        dim: usize,
        components: MetricFn,
        first_derivs: Option<MetricDerivFn>,
        pd_probes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let spec = MetricSpec {
            dim,
            components,
            first_derivs,
            pd_probes,
        };
        for x in &spec.pd_probes {
            let m = spec.g(x);
            if (&m - m.transpose()).abs().max() > 1e-12 {
                return Err(Error::Precondition(format!(
                    "metric is not symmetric at probe {x:?}"
                )));
            }
            let eig = m.symmetric_eigen().eigenvalues.min();
            if eig <= 0.0 {
                return Err(Error::PositivityFailure(format!(
                    "metric has eigenvalue {eig:.3e} at probe {x:?}"
                )));
            }
        }
        Ok(spec)
    }

    fn default_probes(dim: usize) -> Vec<Vec<f64>> {
        let axis = [-2.0, -0.7, 0.0, 0.7, 2.0];
        let mut probes = Vec::new();
        match dim {
            1 => {
                for &x in &axis {
                    probes.push(vec![x]);
                }
            }
            _ => {
                for &x in &axis {
                    for &y in &axis {
                        let mut p = vec![x, y];
                        p.resize(dim, 0.0);
                        probes.push(p);
                    }
                }
            }
        }
        probes
    }

    /// Euclidean metric on ℝ^d.
    pub fn flat(dim: usize) -> Self {
        MetricSpec::new(
            dim,
            Arc::new(move |_: &[f64]| DMatrix::identity(dim, dim)),
            Some(Arc::new(move |_: &[f64], _| DMatrix::zeros(dim, dim))),
            Self::default_probes(dim),
        )
        .expect("flat metric is valid")
    }

    /// Conformal metric e^{2φ}δ on ℝ² with φ = c·x|x|: C^{1,1} but not C².
    pub fn conformal_c11(c: f64) -> Self {
        let phi = move |x: &[f64]| c * x[0] * x[0].abs();
        let dphi_dx = move |x: &[f64]| 2.0 * c * x[0].abs();
        MetricSpec::new(
            2,
            Arc::new(move |x: &[f64]| {
                DMatrix::identity(2, 2) * (2.0 * phi(x)).exp()
            }),
            Some(Arc::new(move |x: &[f64], dir| {
                if dir == 0 {
                    DMatrix::identity(2, 2) * (2.0 * dphi_dx(x) * (2.0 * phi(x)).exp())
                } else {
                    DMatrix::zeros(2, 2)
                }
            })),
            Self::default_probes(2),
        )
        .expect("conformal metric is valid")
    }

    /// g(x) = 1 + x² on ℝ.
    pub fn curved_1d() -> Self {
        MetricSpec::new(
            1,
            Arc::new(|x: &[f64]| DMatrix::from_element(1, 1, 1.0 + x[0] * x[0])),
            Some(Arc::new(|x: &[f64], _| {
                DMatrix::from_element(1, 1, 2.0 * x[0])
            })),
            Self::default_probes(1),
        )
        .expect("curved 1-D metric is valid")
    }

    pub fn g(&self, x: &[f64]) -> DMatrix<f64> {
        (self.components)(x)
    }

    /// ∂_dir g, analytic or 4th-order finite differences.
    pub fn dg(&self, x: &[f64], dir: usize) -> DMatrix<f64> {
        match &self.first_derivs {
            Some(d) => d(x, dir),
            None => {
                let h = 1e-5 * (1.0 + x[dir].abs());
                let mut p = x.to_vec();
                let mut at = |s: f64| {
                    p[dir] = x[dir] + s * h;
                    let v = self.g(&p);
                    p[dir] = x[dir];
                    v
                };
                (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h)
            }
        }
    }

    /// Exact Christoffel symbols Γ^l_ij where the derivatives exist.
    pub fn christoffel_exact(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let d = self.dim;
        let g = self.g(x);
        let dgs: Vec<DMatrix<f64>> = (0..d).map(|dir| self.dg(x, dir)).collect();
        christoffel_from(&g, &dgs, x)
    }

    pub fn probes(&self) -> &[Vec<f64>] {
        &self.pd_probes
    }
}

/// Γ^l_ij = ½ g^{lm}(∂_i g_jm + ∂_j g_im − ∂_m g_ij); one matrix over (i, j)
/// per upper index l.
fn christoffel_from(g: &DMatrix<f64>, dgs: &[DMatrix<f64>], x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let d = g.nrows();
    let inv = g.clone().try_inverse().ok_or_else(|| {
        Error::SingularMatrix(format!("metric singular at {x:?}"))
    })?;
    let mut out = vec![DMatrix::zeros(d, d); d];
    for i in 0..d {
        for j in 0..d {
            for l in 0..d {
                let mut acc = 0.0;
                for m in 0..d {
                    acc += inv[(l, m)] * (dgs[i][(j, m)] + dgs[j][(i, m)] - dgs[m][(i, j)]);
                }
                out[l][(i, j)] = 0.5 * acc;
            }
        }
    }
    Ok(out)
}

/// Per-axis quadrature table: nodes in [-1, 1] and kernel-weighted weights
/// for ψ, ψ' and ψ''.
struct KernelRule {
    nodes: Vec<f64>,
    w: [Vec<f64>; 3],
}

fn kernel_rule(m: &Mollifier, panels: usize) -> KernelRule {
    let (gn, gw) = gl16();
    let h = 2.0 / panels as f64;
    let mut nodes = Vec::with_capacity(panels * 16);
    let mut w = [
        Vec::with_capacity(panels * 16),
        Vec::with_capacity(panels * 16),
        Vec::with_capacity(panels * 16),
    ];
    for p in 0..panels {
        let mid = -1.0 + (p as f64 + 0.5) * h;
        for q in 0..16 {
            let s = mid + 0.5 * h * gn[q];
            let base = gw[q] * 0.5 * h;
            nodes.push(s);
            w[0].push(base * m.psi(s));
            w[1].push(base * m.psi_d1(s));
            w[2].push(base * m.psi_d2(s));
        }
    }
    KernelRule { nodes, w }
}

/// The mollified metric g^ε = g ∗ ψ_ε^b with derivative and Christoffel
/// access, plus the induced energy Lagrangian.
pub struct RegularizedMetric {
    gauge: Arc<Gauge>,
    spec: MetricSpec,
    rule: Arc<KernelRule>,
    b: Vec<f64>,
}

/// Convolved metric and its first (always) and second (optional) derivative
/// matrices at one point.
struct ConvResult {
    g0: DMatrix<f64>,
    d1: Vec<DMatrix<f64>>,
    d2: Option<Vec<Vec<DMatrix<f64>>>>,
}

impl RegularizedMetric {
    pub fn new(
        gauge: &Arc<Gauge>,
        spec: MetricSpec,
        m: &Mollifier,
        params: &EmbeddingParams,
    ) -> Result<Self> {
        // calibrate the panel count so the kernel mass is 1e-11-exact
        let mut panels = 2usize;
        let rule = loop {
            let rule = kernel_rule(m, panels);
            let mass: f64 = rule.w[0].iter().sum();
            if (mass - 1.0).abs() < 1e-11 || panels >= 16 {
                break rule;
            }
            panels *= 2;
        };
        let b = (0..gauge.len()).map(|k| params.b().sample(k)).collect();
        let rg = RegularizedMetric {
            gauge: Arc::clone(gauge),
            spec,
            rule: Arc::new(rule),
            b,
        };
        // positive-definiteness on probes for every tail member
        for k in rg.gauge.tail_indices() {
            for x in rg.spec.probes().to_vec() {
                let m = rg.metric_at(k, &x);
                let eig = m.symmetric_eigen().eigenvalues.min();
                if eig <= 0.0 {
                    return Err(Error::PositivityFailure(format!(
                        "regularized metric loses positivity at k = {k}, probe {x:?} \
                         (eigenvalue {eig:.3e}); mollification too coarse"
                    )));
                }
            }
        }
        Ok(rg)
    }

    pub fn gauge(&self) -> &Arc<Gauge> {
        &self.gauge
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn spec(&self) -> &MetricSpec {
        &self.spec
    }

    /// One pass over the tensor grid: evaluates g once per node and
    /// accumulates all requested weight combinations.
    fn convolve(&self, k: usize, x: &[f64], want_d2: bool) -> ConvResult {
        let d = self.spec.dim;
        let b = self.b[k];
        let nq = self.rule.nodes.len();
        let mut g0 = DMatrix::zeros(d, d);
        let mut d1 = vec![DMatrix::zeros(d, d); d];
        let mut d2 = if want_d2 {
            Some(vec![vec![DMatrix::zeros(d, d); d]; d])
        } else {
            None
        };
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        loop {
            for c in 0..d {
                point[c] = x[c] - self.rule.nodes[idx[c]] / b;
            }
            let gm = self.spec.g(&point);
            let w0: f64 = idx.iter().map(|&q| self.rule.w[0][q]).product();
            g0 += &gm * w0;
            for a in 0..d {
                let mut wa = 1.0;
                for c in 0..d {
                    wa *= if c == a {
                        self.rule.w[1][idx[c]]
                    } else {
                        self.rule.w[0][idx[c]]
                    };
                }
                d1[a] += &gm * (wa * b);
            }
            if let Some(d2m) = d2.as_mut() {
                for a in 0..d {
                    for a2 in a..d {
                        let mut wab = 1.0;
                        for c in 0..d {
                            let order = usize::from(c == a) + usize::from(c == a2);
                            wab *= self.rule.w[order][idx[c]];
                        }
                        d2m[a][a2] += &gm * (wab * b * b);
                    }
                }
            }
            // odometer over the tensor grid
            let mut c = 0;
            loop {
                if c == d {
                    break;
                }
                idx[c] += 1;
                if idx[c] < nq {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == d {
                break;
            }
        }
        if let Some(d2m) = d2.as_mut() {
            for a in 0..d {
                for a2 in 0..a {
                    d2m[a][a2] = d2m[a2][a].clone();
                }
            }
        }
        ConvResult { g0, d1, d2 }
    }

    pub fn metric_at(&self, k: usize, x: &[f64]) -> DMatrix<f64> {
        self.convolve(k, x, false).g0
    }

    pub fn metric_d1(&self, k: usize, x: &[f64], dir: usize) -> DMatrix<f64> {
        self.convolve(k, x, false).d1.swap_remove(dir)
    }

    pub fn metric_d2(&self, k: usize, x: &[f64], dir1: usize, dir2: usize) -> DMatrix<f64> {
        self.convolve(k, x, true).d2.unwrap()[dir1][dir2].clone()
    }

    /// Γ^ε at x, from the convolved metric and its convolved derivatives.
    pub fn christoffel(&self, k: usize, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let conv = self.convolve(k, x, false);
        christoffel_from(&conv.g0, &conv.d1, x)
    }

    /// Geodesic acceleration −Γ(y)(v, v).
    fn accel(&self, k: usize, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let gamma = self.christoffel(k, y)?;
        let d = self.spec.dim;
        Ok((0..d)
            .map(|l| {
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        acc += gamma[l][(i, j)] * v[i] * v[j];
                    }
                }
                -acc
            })
            .collect())
    }

    /// The energy integrand F(t, l, v) = ½ g^ε_ij(l) vⁱvʲ with analytic
    /// partials drawn from the kernel convolutions.
    pub fn energy_lagrangian(self: &Arc<Self>) -> Lagrangian {
        let d = self.spec.dim;
        let rg = Arc::clone(self);
        let rg_u = Arc::clone(self);
        let rg_v = Arc::clone(self);
        let rg_uu = Arc::clone(self);
        let rg_uv = Arc::clone(self);
        let rg_vv = Arc::clone(self);
        let quad_form = move |m: &DMatrix<f64>, v: &[f64]| -> f64 {
            let vv = DVector::from_column_slice(v);
            0.5 * (m * &vv).dot(&vv)
        };
        let qf = quad_form.clone();
        Lagrangian::new(
            self.gauge(),
            d,
            Arc::new(move |k, _t, u: &[f64], v: &[f64]| qf(&rg.metric_at(k, u), v)),
        )
        .with_f_t(Arc::new(|_, _, _, _| 0.0))
        .with_f_u(Arc::new(move |k, _t, u: &[f64], v: &[f64]| {
            let conv = rg_u.convolve(k, u, false);
            (0..d).map(|i| quad_form(&conv.d1[i], v)).collect()
        }))
        .with_f_v(Arc::new(move |k, _t, u: &[f64], v: &[f64]| {
            let m = rg_v.metric_at(k, u);
            let vv = DVector::from_column_slice(v);
            (m * vv).iter().cloned().collect()
        }))
        .with_f_vt(Arc::new(move |_, _, _, v: &[f64]| vec![0.0; v.len()]))
        .with_f_uu(Arc::new(move |k, _t, u: &[f64], v: &[f64]| {
            let conv = rg_uu.convolve(k, u, true);
            let d2 = conv.d2.unwrap();
            let vv = DVector::from_column_slice(v);
            DMatrix::from_fn(d, d, |i, j| 0.5 * (&d2[i][j] * &vv).dot(&vv))
        }))
        .with_f_uv(Arc::new(move |k, _t, u: &[f64], v: &[f64]| {
            let conv = rg_uv.convolve(k, u, false);
            let vv = DVector::from_column_slice(v);
            DMatrix::from_fn(d, d, |i, j| (&conv.d1[i] * &vv)[j])
        }))
        .with_f_vv(Arc::new(move |k, _t, u: &[f64], _v: &[f64]| {
            rg_vv.metric_at(k, u)
        }))
    }
}

/// Controls for the per-ε geodesic solves.
#[derive(Debug, Clone, Copy)]
pub struct GeodesicOptions {
    pub steps: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// |y|∞ beyond this box counts as blow-up.
    pub box_radius: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            steps: 256,
            newton_tol: 1e-9,
            max_newton: 50,
            box_radius: 50.0,
        }
    }
}

/// Initial value problem ÿ = −Γ^ε(y)(ẏ, ẏ) on [0, t_end] per ε.
pub struct GeodesicIvp {
    pub trajectory: Trajectory,
    pub max_residual: f64,
}

pub fn geodesic_ivp(
    rg: &RegularizedMetric,
    p: &[f64],
    c0: &[f64],
    t_end: f64,
    opts: &GeodesicOptions,
) -> Result<GeodesicIvp> {
    let g = rg.gauge().clone();
    let d = rg.dim();
    let dom = IntervalDomain::constants(&g, 0.0, t_end)?;
    let steps = if opts.steps % 2 == 0 { opts.steps } else { opts.steps + 1 };
    let mut u_all = Vec::with_capacity(g.len());
    let mut du_all = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let path = integrate_geodesic(rg, k, p, c0, 0.0, t_end, steps, opts.box_radius)?;
        let mut uk = Vec::with_capacity((steps + 1) * d);
        let mut dk = Vec::with_capacity((steps + 1) * d);
        for row in &path {
            uk.extend_from_slice(&row[..d]);
            dk.extend_from_slice(&row[d..]);
        }
        u_all.push(uk);
        du_all.push(dk);
    }
    let trajectory = Trajectory::from_samples(&g, &dom, steps + 1, d, u_all, du_all);
    let max_residual = geodesic_residual(rg, &trajectory)?;
    Ok(GeodesicIvp {
        trajectory,
        max_residual,
    })
}

fn integrate_geodesic(
    rg: &RegularizedMetric,
    k: usize,
    p: &[f64],
    c0: &[f64],
    t0: f64,
    t_end: f64,
    steps: usize,
    box_radius: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = rg.dim();
    let mut y0 = p.to_vec();
    y0.extend_from_slice(c0);
    let err: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let path = ode::rk4(
        &mut |_t, y, dy| {
            let (pos, vel) = y.split_at(d);
            dy[..d].copy_from_slice(vel);
            match rg.accel(k, pos, vel) {
                Ok(a) => dy[d..].copy_from_slice(&a),
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    dy[d..].fill(0.0);
                }
            }
        },
        t0,
        &y0,
        t_end,
        steps,
    );
    if let Some(e) = err.borrow_mut().take() {
        return Err(e);
    }
    for row in &path {
        if row[..d].iter().any(|v| v.abs() > box_radius) {
            return Err(Error::DomainViolation(format!(
                "geodesic left the |y| ≤ {box_radius} box at k = {k} (blow-up)"
            )));
        }
    }
    Ok(path)
}

/// |ÿ + Γ(ẏ, ẏ)| sampled on a node subset, by finite differences of the
/// stored velocities.
fn geodesic_residual(rg: &RegularizedMetric, traj: &Trajectory) -> Result<f64> {
    let g = traj.gauge();
    let d = traj.dim();
    let n = traj.n_nodes();
    let mut worst = 0.0f64;
    for k in [0, g.len() / 2, g.len() - 1] {
        let h = traj.step(k);
        for i in (2..n - 2).step_by((n / 16).max(1)) {
            let mut acc = vec![0.0; d];
            for c in 0..d {
                acc[c] = (traj.du_at(k, i - 2)[c] - 8.0 * traj.du_at(k, i - 1)[c]
                    + 8.0 * traj.du_at(k, i + 1)[c]
                    - traj.du_at(k, i + 2)[c])
                    / (12.0 * h);
            }
            let want = rg.accel(k, traj.u_at(k, i), traj.du_at(k, i))?;
            for c in 0..d {
                worst = worst.max((acc[c] - want[c]).abs());
            }
        }
    }
    Ok(worst)
}

/// Boundary value problem y(0) = p, y(1) = q by per-ε shooting, with the
/// generalized length and its standard part.
pub struct GeodesicResult {
    pub trajectory: Trajectory,
    /// Initial velocity per ε.
    pub c0: Vec<Vec<f64>>,
    pub length: GenNum,
    pub standard_length: std::result::Result<f64, String>,
    pub max_residual: f64,
    pub newton_iterations: Vec<usize>,
}

pub fn geodesic_bvp(
    rg: &RegularizedMetric,
    p: &[f64],
    q: &[f64],
    opts: &GeodesicOptions,
) -> Result<GeodesicResult> {
    let g = rg.gauge().clone();
    let d = rg.dim();
    let dom = IntervalDomain::constants(&g, 0.0, 1.0)?;
    let steps = if opts.steps % 2 == 0 { opts.steps } else { opts.steps + 1 };
    let n = steps + 1;
    let mut u_all = Vec::with_capacity(g.len());
    let mut du_all = Vec::with_capacity(g.len());
    let mut c0_all = Vec::with_capacity(g.len());
    let mut iters_all = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let mut c0: Vec<f64> = (0..d).map(|i| q[i] - p[i]).collect();
        let mut path = integrate_geodesic(rg, k, p, &c0, 0.0, 1.0, steps, opts.box_radius)?;
        let residual = |path: &Vec<Vec<f64>>| -> Vec<f64> {
            (0..d).map(|i| path[n - 1][i] - q[i]).collect()
        };
        let mut r = residual(&path);
        let mut iters = 0usize;
        while r.iter().any(|x| x.abs() > opts.newton_tol) {
            if iters >= opts.max_newton {
                return Err(Error::SolverFailure(format!(
                    "geodesic shooting stalled after {iters} iterations at k = {k} \
                     (ε = {:.3e}, |r| = {:.3e})",
                    g.eps(k),
                    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                )));
            }
            let mut jac = DMatrix::zeros(d, d);
            for i in 0..d {
                let h = 1e-6 * (1.0 + c0[i].abs());
                let mut cp = c0.clone();
                cp[i] += h;
                let pathp = integrate_geodesic(rg, k, p, &cp, 0.0, 1.0, steps, opts.box_radius)?;
                for j in 0..d {
                    jac[(j, i)] = (pathp[n - 1][j] - q[j] - r[j]) / h;
                }
            }
            let delta = jac.lu().solve(&DVector::from_vec(r.clone())).ok_or_else(|| {
                Error::SolverFailure(format!("singular geodesic shooting Jacobian at k = {k}"))
            })?;
            for i in 0..d {
                c0[i] -= delta[i];
            }
            path = integrate_geodesic(rg, k, p, &c0, 0.0, 1.0, steps, opts.box_radius)?;
            r = residual(&path);
            iters += 1;
        }
        let mut uk = Vec::with_capacity(n * d);
        let mut dk = Vec::with_capacity(n * d);
        for row in &path {
            uk.extend_from_slice(&row[..d]);
            dk.extend_from_slice(&row[d..]);
        }
        u_all.push(uk);
        du_all.push(dk);
        c0_all.push(c0);
        iters_all.push(iters);
    }
    let trajectory = Trajectory::from_samples(&g, &dom, n, d, u_all, du_all);
    let max_residual = geodesic_residual(rg, &trajectory)?;
    let length = length(rg, &trajectory)?;
    let standard_length = length.standard_part().map_err(|e| e.to_string());
    Ok(GeodesicResult {
        trajectory,
        c0: c0_all,
        length,
        standard_length,
        max_residual,
        newton_iterations: iters_all,
    })
}

/// L_g̃(λ) = ∫ √(g̃(λ̇, λ̇)) dt. The velocity must be bounded away from zero
/// samplewise; otherwise the square root is not defined.
pub fn length(rg: &RegularizedMetric, traj: &Trajectory) -> Result<GenNum> {
    let g = traj.gauge().clone();
    let d = traj.dim();
    let n = traj.n_nodes();
    let mut forms = Vec::with_capacity(g.len());
    let mut min_form = f64::INFINITY;
    for k in 0..g.len() {
        let qk: Vec<f64> = (0..n)
            .map(|i| {
                let m = rg.metric_at(k, traj.u_at(k, i));
                let v = DVector::from_column_slice(traj.du_at(k, i));
                let q = (&m * &v).dot(&v);
                min_form = min_form.min(q);
                q
            })
            .collect();
        forms.push(qk);
        let _ = d;
    }
    if min_form <= 0.0 {
        return Err(Error::DegenerateVelocity);
    }
    let samples = (0..g.len())
        .map(|k| {
            let vals: Vec<f64> = forms[k].iter().map(|q| q.sqrt()).collect();
            simpson(&vals, traj.step(k))
        })
        .collect();
    GenNum::from_samples(&g, samples)
}

/// Max drift of the conserved speed g̃(ẏ, ẏ) along the curve, per ε.
pub fn speed_drift(rg: &RegularizedMetric, traj: &Trajectory) -> GenNum {
    let g = traj.gauge().clone();
    GenNum::from_fn(&g, |k, _, _| {
        let q0 = {
            let m = rg.metric_at(k, traj.u_at(k, 0));
            let v = DVector::from_column_slice(traj.du_at(k, 0));
            (&m * &v).dot(&v)
        };
        (0..traj.n_nodes())
            .map(|i| {
                let m = rg.metric_at(k, traj.u_at(k, i));
                let v = DVector::from_column_slice(traj.du_at(k, i));
                ((&m * &v).dot(&v) - q0).abs()
            })
            .fold(0.0, f64::max)
    })
}

/// Minimality analysis through the energy functional ½ g̃(v, v): same
/// geodesics up to affine parametrization, with F_vv = g̃ positive-definite
/// so the Legendre check is informative.
pub fn minimality_report(rg: &Arc<RegularizedMetric>, res: &GeodesicResult) -> Result<MinimizerReport> {
    let lag = rg.energy_lagrangian();
    let dom = res.trajectory.domain().clone();
    varcalc::minimizer_report(&lag, &res.trajectory, &dom)
}

/// A classical reference solve on the exact metric: Fehlberg 4(5) at the
/// requested resolution with shooting on the initial velocity.
pub struct ClassicalGeodesic {
    pub times: Vec<f64>,
    /// Positions per node.
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub c0: Vec<f64>,
    pub length: f64,
}

pub fn classical_geodesic_bvp(
    spec: &MetricSpec,
    p: &[f64],
    q: &[f64],
    steps: usize,
) -> Result<ClassicalGeodesic> {
    let d = spec.dim;
    let steps = if steps % 2 == 0 { steps } else { steps + 1 };
    let n = steps + 1;
    let shoot = |c0: &[f64]| -> Result<Vec<Vec<f64>>> {
        let mut y0 = p.to_vec();
        y0.extend_from_slice(c0);
        let err: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        let path = ode::rkf45(
            &mut |_t, y, dy| {
                let (pos, vel) = y.split_at(d);
                dy[..d].copy_from_slice(vel);
                match spec.christoffel_exact(pos) {
                    Ok(gamma) => {
                        for l in 0..d {
                            let mut acc = 0.0;
                            for i in 0..d {
                                for j in 0..d {
                                    acc += gamma[l][(i, j)] * vel[i] * vel[j];
                                }
                            }
                            dy[d + l] = -acc;
                        }
                    }
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        dy[d..].fill(0.0);
                    }
                }
            },
            0.0,
            &y0,
            1.0,
            steps,
        );
        if let Some(e) = err.borrow_mut().take() {
            return Err(e);
        }
        Ok(path)
    };
    let mut c0: Vec<f64> = (0..d).map(|i| q[i] - p[i]).collect();
    let mut path = shoot(&c0)?;
    let mut iters = 0;
    loop {
        let r: Vec<f64> = (0..d).map(|i| path[n - 1][i] - q[i]).collect();
        if r.iter().all(|x| x.abs() <= 1e-10) {
            break;
        }
        if iters >= 50 {
            return Err(Error::SolverFailure(
                "classical reference shooting did not converge".into(),
            ));
        }
        let mut jac = DMatrix::zeros(d, d);
        for i in 0..d {
            let h = 1e-6 * (1.0 + c0[i].abs());
            let mut cp = c0.clone();
            cp[i] += h;
            let pathp = shoot(&cp)?;
            for j in 0..d {
                jac[(j, i)] = (pathp[n - 1][j] - q[j] - r[j]) / h;
            }
        }
        let delta = jac
            .lu()
            .solve(&DVector::from_vec(r))
            .ok_or_else(|| Error::SolverFailure("singular reference Jacobian".into()))?;
        for i in 0..d {
            c0[i] -= delta[i];
        }
        path = shoot(&c0)?;
        iters += 1;
    }
    let times: Vec<f64> = (0..n).map(|i| i as f64 / steps as f64).collect();
    let positions: Vec<Vec<f64>> = path.iter().map(|row| row[..d].to_vec()).collect();
    let velocities: Vec<Vec<f64>> = path.iter().map(|row| row[d..].to_vec()).collect();
    let speed: Vec<f64> = path
        .iter()
        .map(|row| {
            let (pos, vel) = row.split_at(d);
            let m = spec.g(pos);
            let v = DVector::from_column_slice(vel);
            (&m * &v).dot(&v).sqrt()
        })
        .collect();
    let length = simpson(&speed, 1.0 / steps as f64);
    Ok(ClassicalGeodesic {
        times,
        positions,
        velocities,
        c0,
        length,
    })
}
