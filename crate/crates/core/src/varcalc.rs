//! The variational stack: functionals I(u) = ∫ F(t, u, u̇) dt over per-ε
//! trajectories, first and second variation, Euler–Lagrange shooting, the
//! Legendre condition, Jacobi fields with conjugate-point detection, the
//! log-bounded linear ODE solver, and Noether charges.
//!
//! Trajectory-based integrals use composite Simpson on the stored time grid;
//! d/dt of sampled quantities uses 4th-order finite differences with
//! one-sided stencils at the endpoints.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::linfit;
use crate::gauge::{Gauge, GenNum, M_PANEL};
use crate::gsf::{Domain, GsfFamily, IntervalDomain};
use crate::ode;
use crate::quad::simpson;

/// Sampled-sequence derivative: 4th-order central with one-sided stencils at
/// the ends. Needs at least 5 samples.
pub(crate) fn fd4_seq(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    assert!(n >= 5);
    let mut d = vec![0.0; n];
    d[0] = (-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]) / (12.0 * h);
    d[1] = (-3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]) / (12.0 * h);
    for i in 2..n - 2 {
        d[i] = (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * h);
    }
    d[n - 2] = (3.0 * y[n - 1] + 10.0 * y[n - 2] - 18.0 * y[n - 3] + 6.0 * y[n - 4] - y[n - 5])
        / (12.0 * h);
    d[n - 1] = (25.0 * y[n - 1] - 48.0 * y[n - 2] + 36.0 * y[n - 3] - 16.0 * y[n - 4]
        + 3.0 * y[n - 5])
        / (12.0 * h);
    d
}

/// Cubic Hermite value on a segment of width h, local coordinate s in [0, 1].
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + d0 * h * (s3 - 2.0 * s2 + s)
        + y1 * (-2.0 * s3 + 3.0 * s2)
        + d1 * h * (s3 - s2)
}

type LagEval = Arc<dyn Fn(usize, f64, &[f64], &[f64]) -> f64 + Send + Sync>;
type LagScalar = Arc<dyn Fn(usize, f64, &[f64], &[f64]) -> f64 + Send + Sync>;
type LagGrad = Arc<dyn Fn(usize, f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type LagHess = Arc<dyn Fn(usize, f64, &[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

/// Integrand family F(t, u, u̇) with partial-derivative access. Analytic
/// partials are used where supplied; 4th-order finite differences otherwise.
/// Matrix conventions: `f_uv[(i, j)] = ∂²F/∂uⁱ∂u̇ʲ`.
#[derive(Clone)]
pub struct Lagrangian {
    gauge: Arc<Gauge>,
    dim: usize,
    f: LagEval,
    f_t: Option<LagScalar>,
    f_u: Option<LagGrad>,
    f_v: Option<LagGrad>,
    f_vt: Option<LagGrad>,
    f_uu: Option<LagHess>,
    f_uv: Option<LagHess>,
    f_vv: Option<LagHess>,
}

impl Lagrangian {
    pub fn new(gauge: &Arc<Gauge>, dim: usize, f: LagEval) -> Self {
        Lagrangian {
            gauge: Arc::clone(gauge),
            dim,
            f,
            f_t: None,
            f_u: None,
            f_v: None,
            f_vt: None,
            f_uu: None,
            f_uv: None,
            f_vv: None,
        }
    }

    pub fn with_f_t(mut self, g: LagScalar) -> Self {
        self.f_t = Some(g);
        self
    }

    pub fn with_f_u(mut self, g: LagGrad) -> Self {
        self.f_u = Some(g);
        self
    }

    pub fn with_f_v(mut self, g: LagGrad) -> Self {
        self.f_v = Some(g);
        self
    }

    pub fn with_f_vt(mut self, g: LagGrad) -> Self {
        self.f_vt = Some(g);
        self
    }

    pub fn with_f_uu(mut self, g: LagHess) -> Self {
        self.f_uu = Some(g);
        self
    }

    pub fn with_f_uv(mut self, g: LagHess) -> Self {
        self.f_uv = Some(g);
        self
    }

    pub fn with_f_vv(mut self, g: LagHess) -> Self {
        self.f_vv = Some(g);
        self
    }

    pub fn gauge(&self) -> &Arc<Gauge> {
        &self.gauge
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, k: usize, t: f64, u: &[f64], v: &[f64]) -> f64 {
        (self.f)(k, t, u, v)
    }

    fn fd_grad(&self, k: usize, t: f64, u: &[f64], v: &[f64], wrt_u: bool) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        let mut uu = u.to_vec();
        let mut vv = v.to_vec();
        for i in 0..d {
            let base = if wrt_u { u[i] } else { v[i] };
            let h = 1e-4 * (1.0 + base.abs());
            let mut probe = |s: f64| {
                if wrt_u {
                    uu[i] = base + s * h;
                    let val = (self.f)(k, t, &uu, v);
                    uu[i] = base;
                    val
                } else {
                    vv[i] = base + s * h;
                    let val = (self.f)(k, t, u, &vv);
                    vv[i] = base;
                    val
                }
            };
            out[i] = (probe(-2.0) - 8.0 * probe(-1.0) + 8.0 * probe(1.0) - probe(2.0))
                / (12.0 * h);
        }
        out
    }

    pub fn grad_u(&self, k: usize, t: f64, u: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.f_u {
            Some(g) => g(k, t, u, v),
            None => self.fd_grad(k, t, u, v, true),
        }
    }

    pub fn grad_v(&self, k: usize, t: f64, u: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.f_v {
            Some(g) => g(k, t, u, v),
            None => self.fd_grad(k, t, u, v, false),
        }
    }

    /// ∂t of the u̇-gradient.
    pub fn grad_vt(&self, k: usize, t: f64, u: &[f64], v: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.f_vt {
            return g(k, t, u, v);
        }
        let h = 1e-4 * (1.0 + t.abs());
        let p = |s: f64| self.grad_v(k, t + s * h, u, v);
        let (m2, m1, p1, p2) = (p(-2.0), p(-1.0), p(1.0), p(2.0));
        (0..self.dim)
            .map(|i| (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * h))
            .collect()
    }

    fn fd_hess(
        &self,
        k: usize,
        t: f64,
        u: &[f64],
        v: &[f64],
        outer_u: bool,
        inner: impl Fn(usize, f64, &[f64], &[f64]) -> Vec<f64>,
        symmetrize: bool,
    ) -> DMatrix<f64> {
        let d = self.dim;
        let mut m = DMatrix::zeros(d, d);
        let mut uu = u.to_vec();
        let mut vv = v.to_vec();
        for i in 0..d {
            let base = if outer_u { u[i] } else { v[i] };
            let h = 1e-4 * (1.0 + base.abs());
            let mut probe = |s: f64| -> Vec<f64> {
                if outer_u {
                    uu[i] = base + s * h;
                    let val = inner(k, t, &uu, v);
                    uu[i] = base;
                    val
                } else {
                    vv[i] = base + s * h;
                    let val = inner(k, t, u, &vv);
                    vv[i] = base;
                    val
                }
            };
            let (m2, m1, p1, p2) = (probe(-2.0), probe(-1.0), probe(1.0), probe(2.0));
            for j in 0..d {
                m[(i, j)] = (m2[j] - 8.0 * m1[j] + 8.0 * p1[j] - p2[j]) / (12.0 * h);
            }
        }
        if symmetrize {
            m = (&m + m.transpose()) * 0.5;
        }
        m
    }

    pub fn hess_uu(&self, k: usize, t: f64, u: &[f64], v: &[f64]) -> DMatrix<f64> {
        match &self.f_uu {
            Some(g) => g(k, t, u, v),
            None => self.fd_hess(k, t, u, v, true, |k, t, u, v| self.grad_u(k, t, u, v), true),
        }
    }

    /// ∂²F/∂uⁱ∂u̇ʲ in entry (i, j).
    pub fn hess_uv(&self, k: usize, t: f64, u: &[f64], v: &[f64]) -> DMatrix<f64> {
        match &self.f_uv {
            Some(g) => g(k, t, u, v),
            None => self.fd_hess(k, t, u, v, true, |k, t, u, v| self.grad_v(k, t, u, v), false),
        }
    }

    pub fn hess_vv(&self, k: usize, t: f64, u: &[f64], v: &[f64]) -> DMatrix<f64> {
        match &self.f_vv {
            Some(g) => g(k, t, u, v),
            None => self.fd_hess(k, t, u, v, false, |k, t, u, v| self.grad_v(k, t, u, v), true),
        }
    }
}

/// A curve per ε on a shared uniform time grid, with derivative samples.
#[derive(Clone)]
pub struct Trajectory {
    gauge: Arc<Gauge>,
    dim: usize,
    n_nodes: usize,
    dom: IntervalDomain,
    /// Position samples, layout `[k][node * dim + component]`.
    u: Vec<Vec<f64>>,
    /// Velocity samples, same layout.
    du: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Build from closures of (grid index, time). The velocity closure is
    /// checked against finite differences of the positions; without it the
    /// velocities are filled in by the same differences.
    pub fn from_fn(
        gauge: &Arc<Gauge>,
        dom: &IntervalDomain,
        n_nodes: usize,
        dim: usize,
        u_fn: impl Fn(usize, f64) -> Vec<f64>,
        du_fn: Option<&dyn Fn(usize, f64) -> Vec<f64>>,
    ) -> Result<Self> {
        assert!(n_nodes >= 5 && n_nodes % 2 == 1, "need an odd node count");
        let mut u = Vec::with_capacity(gauge.len());
        let mut du = Vec::with_capacity(gauge.len());
        for k in 0..gauge.len() {
            let (a, b) = dom.section(k);
            let h = (b - a) / (n_nodes - 1) as f64;
            let mut uk = Vec::with_capacity(n_nodes * dim);
            for i in 0..n_nodes {
                let vals = u_fn(k, a + i as f64 * h);
                assert_eq!(vals.len(), dim);
                uk.extend_from_slice(&vals);
            }
            let fd: Vec<Vec<f64>> = (0..dim)
                .map(|c| {
                    let comp: Vec<f64> = (0..n_nodes).map(|i| uk[i * dim + c]).collect();
                    fd4_seq(&comp, h)
                })
                .collect();
            let mut dk = Vec::with_capacity(n_nodes * dim);
            match du_fn {
                Some(g) => {
                    for i in 0..n_nodes {
                        let vals = g(k, a + i as f64 * h);
                        dk.extend_from_slice(&vals);
                    }
                    let scale = 1.0 + dk.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    for i in 0..n_nodes {
                        for c in 0..dim {
                            let diff = (dk[i * dim + c] - fd[c][i]).abs();
                            if diff > 1e-4 * scale {
                                return Err(Error::Precondition(format!(
                                    "velocity samples inconsistent with positions \
                                     (node {i}, component {c}, k = {k}: off by {diff:.3e})"
                                )));
                            }
                        }
                    }
                }
                None => {
                    for i in 0..n_nodes {
                        for fc in fd.iter() {
                            dk.push(fc[i]);
                        }
                    }
                }
            }
            u.push(uk);
            du.push(dk);
        }
        Ok(Trajectory {
            gauge: Arc::clone(gauge),
            dim,
            n_nodes,
            dom: dom.clone(),
            u,
            du,
        })
    }

    pub(crate) fn from_samples(
        gauge: &Arc<Gauge>,
        dom: &IntervalDomain,
        n_nodes: usize,
        dim: usize,
        u: Vec<Vec<f64>>,
        du: Vec<Vec<f64>>,
    ) -> Self {
        Trajectory {
            gauge: Arc::clone(gauge),
            dim,
            n_nodes,
            dom: dom.clone(),
            u,
            du,
        }
    }

    pub fn gauge(&self) -> &Arc<Gauge> {
        &self.gauge
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn domain(&self) -> &IntervalDomain {
        &self.dom
    }

    pub fn step(&self, k: usize) -> f64 {
        let (a, b) = self.dom.section(k);
        (b - a) / (self.n_nodes - 1) as f64
    }

    pub fn time(&self, k: usize, i: usize) -> f64 {
        let (a, _) = self.dom.section(k);
        a + i as f64 * self.step(k)
    }

    pub fn u_at(&self, k: usize, i: usize) -> &[f64] {
        &self.u[k][i * self.dim..(i + 1) * self.dim]
    }

    pub fn du_at(&self, k: usize, i: usize) -> &[f64] {
        &self.du[k][i * self.dim..(i + 1) * self.dim]
    }

    /// Boundary values u(a) as generalized numbers, one per component.
    pub fn boundary_start(&self) -> Vec<GenNum> {
        (0..self.dim)
            .map(|c| GenNum::from_fn(&self.gauge, |k, _, _| self.u[k][c]))
            .collect()
    }

    pub fn boundary_end(&self) -> Vec<GenNum> {
        (0..self.dim)
            .map(|c| {
                GenNum::from_fn(&self.gauge, |k, _, _| {
                    self.u[k][(self.n_nodes - 1) * self.dim + c]
                })
            })
            .collect()
    }

    /// Cubic-Hermite interpolation of position and velocity at time t.
    pub fn interp(&self, k: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = self.dom.section(k);
        let h = self.step(k);
        let n = self.n_nodes;
        let t = t.clamp(a, b);
        let mut seg = ((t - a) / h).floor() as usize;
        if seg >= n - 1 {
            seg = n - 2;
        }
        let s = ((t - a) - seg as f64 * h) / h;
        let (u0, u1) = (self.u_at(k, seg), self.u_at(k, seg + 1));
        let (d0, d1) = (self.du_at(k, seg), self.du_at(k, seg + 1));
        // velocity slopes from local acceleration estimates
        let acc = |i: usize, c: usize| -> f64 {
            if i == 0 {
                (self.du[k][self.dim + c] - self.du[k][c]) / h
            } else if i == n - 1 {
                (self.du[k][(n - 1) * self.dim + c] - self.du[k][(n - 2) * self.dim + c]) / h
            } else {
                (self.du[k][(i + 1) * self.dim + c] - self.du[k][(i - 1) * self.dim + c])
                    / (2.0 * h)
            }
        };
        let mut pos = vec![0.0; self.dim];
        let mut vel = vec![0.0; self.dim];
        for c in 0..self.dim {
            pos[c] = hermite(u0[c], u1[c], d0[c], d1[c], h, s);
            vel[c] = hermite(d0[c], d1[c], acc(seg, c), acc(seg + 1, c), h, s);
        }
        (pos, vel)
    }

    /// u + s·η with matching velocity perturbation.
    pub fn perturbed(&self, field: &VariationField, s: f64) -> Trajectory {
        let mut u = self.u.clone();
        let mut du = self.du.clone();
        for k in 0..self.gauge.len() {
            for (a, b) in u[k].iter_mut().zip(&field.traj.u[k]) {
                *a += s * b;
            }
            for (a, b) in du[k].iter_mut().zip(&field.traj.du[k]) {
                *a += s * b;
            }
        }
        Trajectory {
            gauge: Arc::clone(&self.gauge),
            dim: self.dim,
            n_nodes: self.n_nodes,
            dom: self.dom.clone(),
            u,
            du,
        }
    }
}

/// A trajectory-shaped field with zero boundary values.
#[derive(Clone)]
pub struct VariationField {
    pub(crate) traj: Trajectory,
}

impl VariationField {
    pub fn from_fn(
        gauge: &Arc<Gauge>,
        dom: &IntervalDomain,
        n_nodes: usize,
        dim: usize,
        eta: impl Fn(usize, f64) -> Vec<f64>,
        deta: Option<&dyn Fn(usize, f64) -> Vec<f64>>,
    ) -> Result<Self> {
        let traj = Trajectory::from_fn(gauge, dom, n_nodes, dim, eta, deta)?;
        let zero = GenNum::zero(gauge);
        for end in [traj.boundary_start(), traj.boundary_end()] {
            for comp in end {
                if !comp.gen_eq(&zero)? {
                    return Err(Error::Precondition(
                        "variation field must vanish at both endpoints".into(),
                    ));
                }
            }
        }
        Ok(VariationField { traj })
    }

    /// Basis mode sin(mπ(t−a)/(b−a)) in one component.
    pub fn sine_mode(
        gauge: &Arc<Gauge>,
        dom: &IntervalDomain,
        n_nodes: usize,
        dim: usize,
        component: usize,
        m: u32,
    ) -> Result<Self> {
        let dom2 = dom.clone();
        let dom3 = dom.clone();
        let omega = move |k: usize, dom: &IntervalDomain| {
            let (a, b) = dom.section(k);
            (m as f64 * std::f64::consts::PI / (b - a), a)
        };
        Self::from_fn(
            gauge,
            dom,
            n_nodes,
            dim,
            move |k, t| {
                let (w, a) = omega(k, &dom2);
                let mut v = vec![0.0; dim];
                v[component] = (w * (t - a)).sin();
                v
            },
            Some(&move |k, t| {
                let (w, a) = omega(k, &dom3);
                let mut v = vec![0.0; dim];
                v[component] = w * (w * (t - a)).cos();
                v
            }),
        )
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }
}

/// One-parameter family of transformations (T_s, L_s) acting on (t, l).
#[derive(Clone)]
pub struct SymmetryFamily {
    pub time_dependent: bool,
    pub t_map: Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>,
    pub l_map: Arc<dyn Fn(f64, f64, &[f64]) -> Vec<f64> + Send + Sync>,
    /// ∂T_s/∂s at s = 0; finite differences when absent.
    pub dt_ds: Option<Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>>,
    /// ∂L_s/∂s at s = 0.
    pub dl_ds: Option<Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>>,
}

impl SymmetryFamily {
    fn dt_ds_at(&self, t: f64, l: &[f64]) -> f64 {
        match &self.dt_ds {
            Some(g) => g(t, l),
            None => {
                let h = 1e-6;
                let f = |s: f64| (self.t_map)(s, t, l);
                (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
            }
        }
    }

    fn dl_ds_at(&self, t: f64, l: &[f64]) -> Vec<f64> {
        match &self.dl_ds {
            Some(g) => g(t, l),
            None => {
                let h = 1e-6;
                let f = |s: f64| (self.l_map)(s, t, l);
                let (m2, m1, p1, p2) = (f(-2.0 * h), f(-h), f(h), f(2.0 * h));
                (0..l.len())
                    .map(|i| (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * h))
                    .collect()
            }
        }
    }
}

/// I(u) = ∫_a^b F(t, u, u̇) dt by per-ε Simpson over the trajectory grid.
pub fn functional_value(f: &Lagrangian, u: &Trajectory) -> GenNum {
    let g = u.gauge();
    GenNum::from_fn(g, |k, _, _| {
        let vals: Vec<f64> = (0..u.n_nodes())
            .map(|i| f.eval(k, u.time(k, i), u.u_at(k, i), u.du_at(k, i)))
            .collect();
        simpson(&vals, u.step(k))
    })
}

/// δI(u; η) in Euler–Lagrange form, cross-checked by a symmetric difference
/// of the functional.
pub struct FirstVariation {
    pub value: GenNum,
    pub cross_check: GenNum,
    pub max_disagreement: f64,
    pub warning: bool,
}

pub fn first_variation(f: &Lagrangian, u: &Trajectory, eta: &VariationField) -> FirstVariation {
    let g = u.gauge();
    let el = el_residual_samples(f, u);
    let value = GenNum::from_fn(g, |k, _, _| {
        let w: Vec<f64> = (0..u.n_nodes())
            .map(|i| {
                let e = eta.traj.u_at(k, i);
                el[k][i].iter().zip(e).map(|(r, e)| r * e).sum::<f64>()
            })
            .collect();
        simpson(&w, u.step(k))
    });
    let s = 1e-5;
    let plus = functional_value(f, &u.perturbed(eta, s));
    let minus = functional_value(f, &u.perturbed(eta, -s));
    let cross_check = (&plus - &minus).scale(1.0 / (2.0 * s));
    let max_disagreement = (0..g.len())
        .map(|k| (value.sample(k) - cross_check.sample(k)).abs() / (1.0 + value.sample(k).abs()))
        .fold(0.0, f64::max);
    FirstVariation {
        value,
        cross_check,
        warning: max_disagreement > 1e-4,
        max_disagreement,
    }
}

/// Raw residual samples R_i = F_u − d/dt F_u̇ at the trajectory nodes.
fn el_residual_samples(f: &Lagrangian, u: &Trajectory) -> Vec<Vec<Vec<f64>>> {
    let g = u.gauge();
    let d = u.dim();
    let n = u.n_nodes();
    (0..g.len())
        .map(|k| {
            let h = u.step(k);
            let fv: Vec<Vec<f64>> = (0..n)
                .map(|i| f.grad_v(k, u.time(k, i), u.u_at(k, i), u.du_at(k, i)))
                .collect();
            let dfv: Vec<Vec<f64>> = (0..d)
                .map(|c| {
                    let comp: Vec<f64> = (0..n).map(|i| fv[i][c]).collect();
                    fd4_seq(&comp, h)
                })
                .collect();
            (0..n)
                .map(|i| {
                    let fu = f.grad_u(k, u.time(k, i), u.u_at(k, i), u.du_at(k, i));
                    (0..d).map(|c| fu[c] - dfv[c][i]).collect()
                })
                .collect()
        })
        .collect()
}

/// Euler–Lagrange residual as a time family plus its sup norm per ε.
pub struct ElResidual {
    pub family: GsfFamily,
    pub sup: GenNum,
}

pub fn el_residual(f: &Lagrangian, u: &Trajectory) -> ElResidual {
    let g = u.gauge().clone();
    let samples = el_residual_samples(f, u);
    let sup = GenNum::from_fn(&g, |k, _, _| {
        samples[k]
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    });
    let n = u.n_nodes();
    let d = u.dim();
    let dom = u.domain().clone();
    let dom_box = Domain::Box(vec![(dom.a().clone(), dom.b().clone())]);
    let samples_arc = Arc::new(samples);
    let dom2 = dom.clone();
    let eval: crate::gsf::EvalFn = Arc::new(move |k, x: &[f64]| {
        let (a, b) = dom2.section(k);
        let h = (b - a) / (n - 1) as f64;
        let t = x[0].clamp(a, b);
        let mut seg = ((t - a) / h).floor() as usize;
        if seg >= n - 1 {
            seg = n - 2;
        }
        let s = ((t - a) - seg as f64 * h) / h;
        (0..d)
            .map(|c| (1.0 - s) * samples_arc[k][seg][c] + s * samples_arc[k][seg + 1][c])
            .collect()
    });
    let family = GsfFamily::unchecked(&g, 1, d, dom_box, eval, None);
    ElResidual { family, sup }
}

/// Shooting-solver controls.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub steps: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            steps: 1000,
            newton_tol: 1e-9,
            max_newton: 50,
        }
    }
}

pub struct SolveReport {
    pub trajectory: Trajectory,
    pub newton_iterations: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Acceleration from the Euler–Lagrange equation:
/// u̇̇ = F_u̇u̇⁻¹ (F_u − F_u̇t − F_uu̇ᵀ u̇).
fn el_accel(f: &Lagrangian, k: usize, t: f64, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let d = f.dim();
    let fvv = f.hess_vv(k, t, u, v);
    let fu = DVector::from_vec(f.grad_u(k, t, u, v));
    let fvt = DVector::from_vec(f.grad_vt(k, t, u, v));
    let fuv = f.hess_uv(k, t, u, v);
    let vv = DVector::from_column_slice(v);
    let rhs = fu - fvt - fuv.transpose() * vv;
    let lu = fvv.lu();
    match lu.solve(&rhs) {
        Some(w) => Ok(w.iter().cloned().collect()),
        None => Err(Error::SingularMatrix(format!(
            "F_u̇u̇ singular at t = {t:.6} (k = {k}, dim {d})"
        ))),
    }
}

/// Shooting solution of the Euler–Lagrange boundary value problem
/// u(a) = p, u(b) = q: RK4 in (u, u̇) with Newton on the initial velocity.
pub fn solve_el_bvp(
    f: &Lagrangian,
    p: &[GenNum],
    q: &[GenNum],
    dom: &IntervalDomain,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let g = f.gauge().clone();
    let d = f.dim();
    assert_eq!(p.len(), d);
    assert_eq!(q.len(), d);
    let steps = if opts.steps % 2 == 0 { opts.steps } else { opts.steps + 1 };
    let n = steps + 1;
    let mut u_all = Vec::with_capacity(g.len());
    let mut du_all = Vec::with_capacity(g.len());
    let mut iters_all = Vec::with_capacity(g.len());
    let mut warnings = Vec::new();
    for k in 0..g.len() {
        let (a, b) = dom.section(k);
        let pk: Vec<f64> = p.iter().map(|c| c.sample(k)).collect();
        let qk: Vec<f64> = q.iter().map(|c| c.sample(k)).collect();
        let accel_err: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        let mut shoot = |c0: &[f64]| -> Vec<Vec<f64>> {
            let mut y0 = pk.clone();
            y0.extend_from_slice(c0);
            ode::rk4(
                &mut |t, y, dy| {
                    let (u, v) = y.split_at(d);
                    dy[..d].copy_from_slice(v);
                    match el_accel(f, k, t, u, v) {
                        Ok(w) => dy[d..].copy_from_slice(&w),
                        Err(e) => {
                            accel_err.borrow_mut().get_or_insert(e);
                            dy[d..].fill(0.0);
                        }
                    }
                },
                a,
                &y0,
                b,
                steps,
            )
        };
        let mut c0: Vec<f64> = (0..d).map(|i| (qk[i] - pk[i]) / (b - a)).collect();
        let mut path = shoot(&c0);
        if let Some(e) = accel_err.borrow_mut().take() {
            return Err(e);
        }
        let residual = |path: &Vec<Vec<f64>>| -> Vec<f64> {
            (0..d).map(|i| path[n - 1][i] - qk[i]).collect()
        };
        let mut r = residual(&path);
        let mut iters = 0usize;
        let jacobian = |c0: &Vec<f64>,
                        r: &Vec<f64>,
                        shoot: &mut dyn FnMut(&[f64]) -> Vec<Vec<f64>>|
         -> DMatrix<f64> {
            let mut jac = DMatrix::zeros(d, d);
            for i in 0..d {
                let h = 1e-6 * (1.0 + c0[i].abs());
                let mut cp = c0.clone();
                cp[i] += h;
                let pathp = shoot(&cp);
                for j in 0..d {
                    jac[(j, i)] = (pathp[n - 1][j] - qk[j] - r[j]) / h;
                }
            }
            jac
        };
        let mut last_jac: Option<DMatrix<f64>> = None;
        while r.iter().any(|x| x.abs() > opts.newton_tol) {
            if iters >= opts.max_newton {
                return Err(Error::SolverFailure(format!(
                    "shooting Newton stalled after {iters} iterations at k = {k} \
                     (ε = {:.3e}, |r| = {:.3e})",
                    g.eps(k),
                    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                )));
            }
            let jac = jacobian(&c0, &r, &mut shoot);
            let delta = jac
                .clone()
                .lu()
                .solve(&DVector::from_vec(r.clone()))
                .ok_or_else(|| {
                    Error::SolverFailure(format!(
                        "singular shooting Jacobian at k = {k} (conjugate endpoint?)"
                    ))
                })?;
            for i in 0..d {
                c0[i] -= delta[i];
            }
            last_jac = Some(jac);
            path = shoot(&c0);
            r = residual(&path);
            iters += 1;
        }
        let jac = match last_jac {
            Some(j) => j,
            None => jacobian(&c0, &r, &mut shoot),
        };
        let svals = jac.svd(false, false).singular_values;
        let smax = svals.max();
        if svals.min() < 1e-8 * (1.0 + smax) {
            warnings.push(format!(
                "shooting map nearly singular at k = {k} (σ_min = {:.3e}); \
                 endpoint may be conjugate",
                svals.min()
            ));
        }
        let mut uk = Vec::with_capacity(n * d);
        let mut dk = Vec::with_capacity(n * d);
        for row in &path {
            uk.extend_from_slice(&row[..d]);
            dk.extend_from_slice(&row[d..]);
        }
        u_all.push(uk);
        du_all.push(dk);
        iters_all.push(iters);
    }
    Ok(SolveReport {
        trajectory: Trajectory::from_samples(&g, dom, n, d, u_all, du_all),
        newton_iterations: iters_all,
        warnings,
    })
}

/// δ²I(u; η) = ∫ F_uu ηη + 2 F_uu̇ ηη̇ + F_u̇u̇ η̇η̇ dt.
pub fn second_variation(f: &Lagrangian, u: &Trajectory, eta: &VariationField) -> GenNum {
    let g = u.gauge();
    let d = u.dim();
    GenNum::from_fn(g, |k, _, _| {
        let vals: Vec<f64> = (0..u.n_nodes())
            .map(|i| {
                let t = u.time(k, i);
                let (uu, vv) = (u.u_at(k, i), u.du_at(k, i));
                let e = DVector::from_column_slice(eta.traj.u_at(k, i));
                let de = DVector::from_column_slice(eta.traj.du_at(k, i));
                let fuu = f.hess_uu(k, t, uu, vv);
                let fuv = f.hess_uv(k, t, uu, vv);
                let fvv = f.hess_vv(k, t, uu, vv);
                let _ = d;
                (fuu * &e).dot(&e) + 2.0 * (fuv * &de).dot(&e) + (fvv * &de).dot(&de)
            })
            .collect();
        simpson(&vals, u.step(k))
    })
}

/// Q(η), the accessory integral: the same quadratic form as the second
/// variation, kept as its own named entry point.
pub fn accessory_integral(f: &Lagrangian, u: &Trajectory, eta: &VariationField) -> GenNum {
    second_variation(f, u, eta)
}

/// Pointwise Legendre check: minimum eigenvalue of F_u̇u̇ along the curve.
pub struct LegendreReport {
    pub min_eigenvalue: GenNum,
    pub pass: bool,
}

pub fn legendre_check(f: &Lagrangian, u: &Trajectory) -> Result<LegendreReport> {
    let g = u.gauge();
    let min_eigenvalue = GenNum::from_fn(g, |k, _, _| {
        (0..u.n_nodes())
            .map(|i| {
                let m = f.hess_vv(k, u.time(k, i), u.u_at(k, i), u.du_at(k, i));
                let sym = (&m + m.transpose()) * 0.5;
                sym.symmetric_eigen().eigenvalues.min()
            })
            .fold(f64::INFINITY, f64::min)
    });
    let tol = GenNum::rho_pow(g, M_PANEL as f64);
    let pass = (-&tol).gen_le(&min_eigenvalue)?.holds();
    Ok(LegendreReport {
        min_eigenvalue,
        pass,
    })
}

/// Fundamental Jacobi matrix J(t) with J(a) = 0, J̇(a) = Id, integrated in
/// the first-order form η̇ = F_u̇u̇⁻¹(ζ − F_uu̇ᵀ η), ζ̇ = F_uu η + F_uu̇ η̇,
/// which avoids time-differentiating the coefficient matrices.
pub struct JacobiSolution {
    gauge: Arc<Gauge>,
    pub dim: usize,
    pub dom: IntervalDomain,
    pub n_nodes: usize,
    /// J(t) per ε per node.
    pub j: Vec<Vec<DMatrix<f64>>>,
    /// det J(t) per ε per node.
    pub det: Vec<Vec<f64>>,
    /// Max residual of the second-order Jacobi equation over interior nodes.
    pub residual: f64,
}

/// Precomputed Hessian trios (F_uu, F_uu̇, F_u̇u̇) along a trajectory at
/// half-step resolution: entry j sits at t = a + j·h/2, so RK4 over the node
/// grid never re-evaluates a coefficient.
pub(crate) struct CoeffTable {
    fuu: Vec<Vec<DMatrix<f64>>>,
    fuv: Vec<Vec<DMatrix<f64>>>,
    fvv: Vec<Vec<DMatrix<f64>>>,
}

impl CoeffTable {
    fn at(&self, k: usize, j: usize) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        (&self.fuu[k][j], &self.fuv[k][j], &self.fvv[k][j])
    }
}

pub(crate) fn build_coeff_table(f: &Lagrangian, u: &Trajectory) -> CoeffTable {
    let g = u.gauge();
    let n = u.n_nodes();
    let mut fuu = Vec::with_capacity(g.len());
    let mut fuv = Vec::with_capacity(g.len());
    let mut fvv = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let h = u.step(k);
        let mut r_uu = Vec::with_capacity(2 * n - 1);
        let mut r_uv = Vec::with_capacity(2 * n - 1);
        let mut r_vv = Vec::with_capacity(2 * n - 1);
        for j in 0..2 * n - 1 {
            let t = u.time(k, 0) + 0.5 * j as f64 * h;
            let (uu, vv) = if j % 2 == 0 {
                (u.u_at(k, j / 2).to_vec(), u.du_at(k, j / 2).to_vec())
            } else {
                u.interp(k, t)
            };
            r_uu.push(f.hess_uu(k, t, &uu, &vv));
            r_uv.push(f.hess_uv(k, t, &uu, &vv));
            r_vv.push(f.hess_vv(k, t, &uu, &vv));
        }
        fuu.push(r_uu);
        fuv.push(r_uv);
        fvv.push(r_vv);
    }
    CoeffTable { fuu, fuv, fvv }
}

pub fn jacobi_solve(f: &Lagrangian, u: &Trajectory) -> Result<JacobiSolution> {
    let table = build_coeff_table(f, u);
    jacobi_solve_with(u, &table)
}

pub(crate) fn jacobi_solve_with(u: &Trajectory, table: &CoeffTable) -> Result<JacobiSolution> {
    let g = u.gauge().clone();
    let d = u.dim();
    let n = u.n_nodes();
    // invertibility of F_u̇u̇ along the curve, witnessed against ρ^m
    for k in 0..g.len() {
        let floor = g.rho(k).powi(M_PANEL as i32);
        for i in 0..n {
            if table.fvv[k][2 * i].determinant().abs() <= floor {
                return Err(Error::SingularMatrix(format!(
                    "det F_u̇u̇ not bounded away from zero at node {i} (k = {k})"
                )));
            }
        }
    }
    let mut j_all = Vec::with_capacity(g.len());
    let mut det_all = Vec::with_capacity(g.len());
    let mut residual = 0.0f64;
    for k in 0..g.len() {
        let h = u.step(k);
        let mut eta = DMatrix::<f64>::zeros(d, d);
        let mut zeta = table.fvv[k][0].clone(); // F_vv(a) · Id
        let mut js = Vec::with_capacity(n);
        let mut zs = Vec::with_capacity(n);
        js.push(eta.clone());
        zs.push(zeta.clone());
        let rhs = |j: usize,
                   e: &DMatrix<f64>,
                   z: &DMatrix<f64>|
         -> Result<(DMatrix<f64>, DMatrix<f64>)> {
            let (fuu, fuv, fvv) = table.at(k, j);
            let ed = fvv
                .clone()
                .lu()
                .solve(&(z - fuv.transpose() * e))
                .ok_or_else(|| Error::SingularMatrix("F_u̇u̇ during Jacobi solve".into()))?;
            let zd = fuu * e + fuv * &ed;
            Ok((ed, zd))
        };
        for i in 0..n - 1 {
            let (k1e, k1z) = rhs(2 * i, &eta, &zeta)?;
            let (k2e, k2z) = rhs(
                2 * i + 1,
                &(&eta + &k1e * (0.5 * h)),
                &(&zeta + &k1z * (0.5 * h)),
            )?;
            let (k3e, k3z) = rhs(
                2 * i + 1,
                &(&eta + &k2e * (0.5 * h)),
                &(&zeta + &k2z * (0.5 * h)),
            )?;
            let (k4e, k4z) = rhs(2 * i + 2, &(&eta + &k3e * h), &(&zeta + &k3z * h))?;
            eta += (k1e + k2e * 2.0 + k3e * 2.0 + k4e) * (h / 6.0);
            zeta += (k1z + k2z * 2.0 + k3z * 2.0 + k4z) * (h / 6.0);
            js.push(eta.clone());
            zs.push(zeta.clone());
        }
        // residual of the second-order form: d/dt ζ − (F_uu J + F_uu̇ J̇)
        let mut zdot_fd: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for c in 0..d * d {
            let comp: Vec<f64> = zs.iter().map(|m| m[c]).collect();
            let dcomp = fd4_seq(&comp, h);
            for (i, v) in dcomp.into_iter().enumerate() {
                if c == 0 {
                    zdot_fd.push(DMatrix::zeros(d, d));
                }
                zdot_fd[i][c] = v;
            }
        }
        for i in 2..n - 2 {
            let (fuu, fuv, fvv) = table.at(k, 2 * i);
            let jdot = fvv
                .clone()
                .lu()
                .solve(&(&zs[i] - fuv.transpose() * &js[i]))
                .ok_or_else(|| Error::SingularMatrix("F_u̇u̇ in residual check".into()))?;
            let res = &zdot_fd[i] - (fuu * &js[i] + fuv * &jdot);
            residual = residual.max(res.abs().max());
        }
        det_all.push(js.iter().map(|m| m.determinant()).collect());
        j_all.push(js);
    }
    Ok(JacobiSolution {
        gauge: g,
        dim: d,
        dom: u.domain().clone(),
        n_nodes: n,
        j: j_all,
        det: det_all,
        residual,
    })
}

/// Conjugate parameters: per-ε root lists of det J, aggregated into
/// generalized numbers when the counts agree along the grid tail.
pub struct ConjugateReport {
    pub per_eps: Vec<Vec<f64>>,
    pub counts_match: bool,
    pub points: Vec<GenNum>,
    pub standard_parts: Vec<Option<f64>>,
}

pub fn conjugate_points(sol: &JacobiSolution) -> ConjugateReport {
    let g = &sol.gauge;
    let n = sol.n_nodes;
    let mut per_eps = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let (a, b) = sol.dom.section(k);
        let h = (b - a) / (n - 1) as f64;
        let det = &sol.det[k];
        let ddet = fd4_seq(det, h);
        let delta = 1e-3 * (b - a);
        let mut roots = Vec::new();
        for i in 0..n - 1 {
            let t_lo = a + i as f64 * h;
            if t_lo < a + delta {
                continue;
            }
            let (d0, d1) = (det[i], det[i + 1]);
            if d0 == 0.0 {
                roots.push(t_lo);
                continue;
            }
            if d0 * d1 < 0.0 {
                // bisection on the cubic Hermite interpolant of det
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let val = |s: f64| hermite(d0, d1, ddet[i], ddet[i + 1], h, s);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if val(lo) * val(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                roots.push(t_lo + 0.5 * (lo + hi) * h);
            }
        }
        per_eps.push(roots);
    }
    let tail_count = per_eps[g.tail_start()].len();
    let counts_match = g.tail_indices().all(|k| per_eps[k].len() == tail_count);
    let mut points = Vec::new();
    let mut standard_parts = Vec::new();
    if counts_match {
        // off-tail members may lack some roots; reuse the nearest tail value
        for r in 0..tail_count {
            let num = GenNum::from_fn(g, |k, _, _| {
                per_eps[k]
                    .get(r)
                    .cloned()
                    .unwrap_or_else(|| per_eps[g.tail_start()][r])
            });
            standard_parts.push(num.standard_part().ok());
            points.push(num);
        }
    }
    ConjugateReport {
        per_eps,
        counts_match,
        points,
        standard_parts,
    }
}

/// Growth check for the linear ODE hypothesis: max_t |∫_ت0^t A| against
/// −C·log ρ.
pub struct LogBoundReport {
    pub fitted_c: f64,
    pub pass: bool,
    pub max_norms: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Cumulative ∫_a^{t_i} A over a uniform grid, one 16-point panel per step.
fn cumulative_matrix_integral(
    a_fam: &GsfFamily,
    k: usize,
    d: usize,
    a: f64,
    b: f64,
    nodes: usize,
) -> Vec<DMatrix<f64>> {
    let (gl_nodes, gl_weights) = crate::quad::gl16();
    let h = (b - a) / (nodes - 1) as f64;
    let mut out = Vec::with_capacity(nodes);
    let mut acc = DMatrix::<f64>::zeros(d, d);
    out.push(acc.clone());
    for i in 0..nodes - 1 {
        let lo = a + i as f64 * h;
        let mid = lo + 0.5 * h;
        let mut seg = DMatrix::<f64>::zeros(d, d);
        for q in 0..16 {
            let t = mid + 0.5 * h * gl_nodes[q];
            let vals = a_fam.eval_at(k, &[t]);
            for c in 0..d * d {
                seg[c] += gl_weights[q] * vals[c];
            }
        }
        acc += seg * (0.5 * h);
        out.push(acc.clone());
    }
    out
}

/// A is a time family with d² outputs (row-major d×d sections).
pub fn log_bound_check(
    a_fam: &GsfFamily,
    dom: &IntervalDomain,
    t0: &GenNum,
) -> Result<LogBoundReport> {
    let g = a_fam.gauge().clone();
    let d2 = a_fam.output_dim();
    let d = (d2 as f64).sqrt().round() as usize;
    assert_eq!(d * d, d2, "family output must be a square matrix");
    let nodes = 513;
    let mut max_norms = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let (a, b) = dom.section(k);
        let t0k = t0.sample(k);
        // split at t0 so the cumulative integral starts there
        let mut best = 0.0f64;
        for (lo, hi) in [(t0k, b), (t0k, a)] {
            if (hi - lo).abs() < 1e-300 {
                continue;
            }
            let cums = cumulative_matrix_integral(a_fam, k, d, lo, hi, nodes);
            for m in &cums {
                best = best.max(m.norm());
            }
        }
        max_norms.push(best);
    }
    let xs: Vec<f64> = (0..g.len()).map(|k| -g.rho(k).ln()).collect();
    let tail: Vec<usize> = g.tail_indices().collect();
    let xs_tail: Vec<f64> = tail.iter().map(|&k| xs[k]).collect();
    let ys_tail: Vec<f64> = tail.iter().map(|&k| max_norms[k]).collect();
    let (fitted_c, _, _) = linfit(&xs_tail, &ys_tail);
    let ratios: Vec<f64> = (0..g.len()).map(|k| max_norms[k] / xs[k]).collect();
    let r_tail: Vec<f64> = tail.iter().map(|&k| ratios[k]).collect();
    let (r_slope, _, _) = linfit(&xs_tail, &r_tail);
    let r_scale = r_tail.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let pass = r_slope <= 0.05 * r_scale;
    Ok(LogBoundReport {
        fitted_c,
        pass,
        max_norms,
        ratios,
    })
}

/// y(t) = exp(∫_t0^t A)·y0 on a dense grid, cross-checked against a direct
/// RK4 solve. Requires the log bound and pairwise-commuting samples of A;
/// the exponential formula is numerically valid only in the commuting case.
pub struct MatrixExpReport {
    pub n_nodes: usize,
    /// States per ε per node.
    pub states: Vec<Vec<Vec<f64>>>,
    pub rk4_max_deviation: f64,
    pub log_bound: LogBoundReport,
}

pub fn matrix_exp_solution(
    a_fam: &GsfFamily,
    t0: &GenNum,
    y0: &[GenNum],
    dom: &IntervalDomain,
) -> Result<MatrixExpReport> {
    let g = a_fam.gauge().clone();
    let d = y0.len();
    assert_eq!(a_fam.output_dim(), d * d);
    let log_bound = log_bound_check(a_fam, dom, t0)?;
    if !log_bound.pass {
        return Err(Error::Precondition(
            "|∫A| is not O(-log dρ) on the grid tail".into(),
        ));
    }
    // commutation probes
    for k in 0..g.len() {
        let (a, b) = dom.section(k);
        let probes: Vec<DMatrix<f64>> = (0..5)
            .map(|i| {
                let t = a + (b - a) * i as f64 / 4.0;
                DMatrix::from_row_slice(d, d, &a_fam.eval_at(k, &[t]))
            })
            .collect();
        for i in 0..probes.len() {
            for j in i + 1..probes.len() {
                let comm = &probes[i] * &probes[j] - &probes[j] * &probes[i];
                let scale = 1.0 + probes[i].norm() * probes[j].norm();
                if comm.norm() > 1e-10 * scale {
                    return Err(Error::NonCommuting(format!(
                        "‖[A(s), A(s′)]‖ = {:.3e} at k = {k}",
                        comm.norm()
                    )));
                }
            }
        }
    }
    let nodes = 257;
    let mut states = Vec::with_capacity(g.len());
    let mut dev = 0.0f64;
    for k in 0..g.len() {
        let (a, b) = dom.section(k);
        let t0k = t0.sample(k);
        if (t0k - a).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(Error::Precondition(
                "matrix_exp_solution expects t0 at the left endpoint".into(),
            ));
        }
        let y0k: Vec<f64> = y0.iter().map(|c| c.sample(k)).collect();
        let cums = cumulative_matrix_integral(a_fam, k, d, a, b, nodes);
        let states_k: Vec<Vec<f64>> = cums
            .iter()
            .map(|m| {
                let e = m.exp();
                let y = e * DVector::from_column_slice(&y0k);
                y.iter().cloned().collect()
            })
            .collect();
        // direct solve cross-check on the same grid
        let rk4_path = ode::rk4(
            &mut |t, y, dy| {
                let av = a_fam.eval_at(k, &[t]);
                for i in 0..d {
                    dy[i] = (0..d).map(|j| av[i * d + j] * y[j]).sum();
                }
            },
            a,
            &y0k,
            b,
            (nodes - 1) * 8,
        );
        for (i, s) in states_k.iter().enumerate() {
            let r = &rk4_path[i * 8];
            for c in 0..d {
                dev = dev.max((s[c] - r[c]).abs());
            }
        }
        states.push(states_k);
    }
    Ok(MatrixExpReport {
        n_nodes: nodes,
        states,
        rk4_max_deviation: dev,
        log_bound,
    })
}

/// Noether charge along a trajectory and its constancy drift.
pub struct NoetherReport {
    /// Charge samples per ε per node.
    pub charges: Vec<Vec<f64>>,
    pub drift: GenNum,
    pub invariance_violation: f64,
    pub warnings: Vec<String>,
}

pub fn noether_charge(
    f: &Lagrangian,
    u: &Trajectory,
    sym: &SymmetryFamily,
) -> Result<NoetherReport> {
    let g = u.gauge().clone();
    let d = u.dim();
    let n = u.n_nodes();
    let mut warnings = Vec::new();
    // EL residual precondition
    let el_sup = el_residual(f, u).sup;
    let el_max = (0..g.len()).map(|k| el_sup.sample(k)).fold(0.0, f64::max);
    if el_max > 1e-5 {
        warnings.push(format!(
            "trajectory only satisfies Euler–Lagrange up to {el_max:.3e}"
        ));
    }
    // identity at s = 0 and invariance on probe s values
    let mut invariance_violation = 0.0f64;
    for k in [0, g.len() / 2, g.len() - 1] {
        let h = u.step(k);
        // interior nodes only: the t-stencils below must stay inside [a, b]
        for i in (2..n - 2).step_by(((n - 4) / 8).max(1)) {
            let t = u.time(k, i);
            let uu = u.u_at(k, i).to_vec();
            let t0 = (sym.t_map)(0.0, t, &uu);
            let l0 = (sym.l_map)(0.0, t, &uu);
            let id_err = (t0 - t).abs().max(
                (0..d)
                    .map(|c| (l0[c] - uu[c]).abs())
                    .fold(0.0f64, f64::max),
            );
            if id_err > 1e-9 * (1.0 + t.abs()) {
                warnings.push(format!(
                    "symmetry does not reduce to the identity at s = 0 (off by {id_err:.3e})"
                ));
                // identity failure makes the invariance probes meaningless
                return Ok(NoetherReport {
                    charges: vec![Vec::new(); g.len()],
                    drift: GenNum::zero(&g),
                    invariance_violation: f64::INFINITY,
                    warnings,
                });
            }
            let fval = f.eval(k, t, u.u_at(k, i), u.du_at(k, i));
            for s in [0.1, -0.1, 0.01, -0.01] {
                // total t-derivatives along the curve by central differences
                let curve_t = |tt: f64| -> (f64, Vec<f64>) {
                    let (pos, _) = u.interp(k, tt);
                    ((sym.t_map)(s, tt, &pos), (sym.l_map)(s, tt, &pos))
                };
                let hh = h;
                let (tm2, lm2) = curve_t(t - 2.0 * hh);
                let (tm1, lm1) = curve_t(t - hh);
                let (tp1, lp1) = curve_t(t + hh);
                let (tp2, lp2) = curve_t(t + 2.0 * hh);
                let dt_dt = (tm2 - 8.0 * tm1 + 8.0 * tp1 - tp2) / (12.0 * hh);
                let dl_dt: Vec<f64> = (0..d)
                    .map(|c| (lm2[c] - 8.0 * lm1[c] + 8.0 * lp1[c] - lp2[c]) / (12.0 * hh))
                    .collect();
                if dt_dt.abs() < 1e-12 {
                    warnings.push("∂t T_s is not invertible on a probe".into());
                    continue;
                }
                let (ts, ls) = curve_t(t);
                let vs: Vec<f64> = dl_dt.iter().map(|x| x / dt_dt).collect();
                let rhs = f.eval(k, ts, &ls, &vs) * dt_dt;
                invariance_violation =
                    invariance_violation.max((fval - rhs).abs() / (1.0 + fval.abs()));
            }
        }
    }
    if invariance_violation > 1e-5 {
        warnings.push(format!(
            "integrand is not invariant under the declared symmetry \
             (relative violation {invariance_violation:.3e})"
        ));
    }
    let mut charges = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let ck: Vec<f64> = (0..n)
            .map(|i| {
                let t = u.time(k, i);
                let (uu, vv) = (u.u_at(k, i), u.du_at(k, i));
                let fv = f.grad_v(k, t, uu, vv);
                let fval = f.eval(k, t, uu, vv);
                let dl = sym.dl_ds_at(t, uu);
                let dt = sym.dt_ds_at(t, uu);
                let fv_dl: f64 = fv.iter().zip(&dl).map(|(a, b)| a * b).sum();
                let fv_v: f64 = fv.iter().zip(vv).map(|(a, b)| a * b).sum();
                fv_dl + (fval - fv_v) * dt
            })
            .collect();
        charges.push(ck);
    }
    let drift = GenNum::from_fn(&g, |k, _, _| {
        charges[k]
            .iter()
            .map(|c| (c - charges[k][0]).abs())
            .fold(0.0, f64::max)
    });
    Ok(NoetherReport {
        charges,
        drift,
        invariance_violation,
        warnings,
    })
}

/// Threshold on the sup of the Euler–Lagrange residual below which a
/// trajectory counts as critical.
pub const EL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizerVerdict {
    PassesNecessary,
    ViolatesNecessary,
    JacobiObstruction,
}

/// Aggregated minimizer evidence: Euler–Lagrange residual, Legendre verdict,
/// conjugate points in the open interval, and the sign of δ²I on the
/// sinusoidal test-field basis. "Passes" is evidence, not proof: the basis
/// spans only low-frequency variations.
pub struct MinimizerReport {
    pub verdict: MinimizerVerdict,
    pub el_sup: GenNum,
    pub legendre: LegendreReport,
    pub conjugate: ConjugateReport,
    pub mode_second_variations: Vec<GenNum>,
    pub negative_mode: Option<usize>,
    /// Accessory integral of the broken variation built from the Jacobi
    /// field vanishing at the first interior conjugate point.
    pub broken_accessory_q: Option<GenNum>,
}

pub fn minimizer_report(
    f: &Lagrangian,
    u: &Trajectory,
    dom: &IntervalDomain,
) -> Result<MinimizerReport> {
    let g = u.gauge().clone();
    let d = u.dim();
    let el_sup = el_residual(f, u).sup;
    let critical = (0..g.len()).all(|k| el_sup.sample(k) <= EL_TOLERANCE);
    let legendre = legendre_check(f, u)?;
    let jac = jacobi_solve(f, u)?;
    let conjugate = conjugate_points(&jac);
    // interior roots only: conjugate points at the right endpoint do not
    // obstruct (Jacobi's theorem needs a′ < b)
    let interior_root = |k: usize| -> Option<f64> {
        let (a, b) = dom.section(k);
        conjugate.per_eps[k]
            .iter()
            .cloned()
            .find(|&r| r > a && r < b - 1e-6 * (b - a))
    };
    let has_interior = g.tail_indices().all(|k| interior_root(k).is_some());
    let n_modes = 8;
    let mut mode_second_variations = Vec::new();
    let mut negative_mode = None;
    for c in 0..d {
        for m in 1..=n_modes {
            let field = VariationField::sine_mode(&g, dom, u.n_nodes(), d, c, m)?;
            let val = second_variation(f, u, &field);
            if g.tail_indices().all(|k| val.sample(k) < -1e-10) && negative_mode.is_none() {
                negative_mode = Some(mode_second_variations.len());
            }
            mode_second_variations.push(val);
        }
    }
    let broken_accessory_q = if has_interior {
        Some(broken_variation_q(f, u, &jac, &interior_root)?)
    } else {
        None
    };
    let verdict = if !critical {
        MinimizerVerdict::ViolatesNecessary
    } else if has_interior {
        MinimizerVerdict::JacobiObstruction
    } else if !legendre.pass || negative_mode.is_some() {
        MinimizerVerdict::ViolatesNecessary
    } else {
        MinimizerVerdict::PassesNecessary
    };
    Ok(MinimizerReport {
        verdict,
        el_sup,
        legendre,
        conjugate,
        mode_second_variations,
        negative_mode,
        broken_accessory_q,
    })
}

/// Q(ν) for the broken variation ν = (Jacobi field on [a, a′], 0 on [a′, b]):
/// a two-segment accessory integral, the second segment contributing zero.
fn broken_variation_q(
    f: &Lagrangian,
    u: &Trajectory,
    jac: &JacobiSolution,
    interior_root: &dyn Fn(usize) -> Option<f64>,
) -> Result<GenNum> {
    let g = u.gauge().clone();
    let d = u.dim();
    let samples = (0..g.len())
        .map(|k| {
            let (a, _) = u.domain().section(k);
            let a_prime = match interior_root(k) {
                Some(r) => r,
                None => return 0.0,
            };
            // direction spanning the kernel of J(a′)
            let h = (jac.dom.section(k).1 - jac.dom.section(k).0) / (jac.n_nodes - 1) as f64;
            let idx = (((a_prime - a) / h).round() as usize).min(jac.n_nodes - 1);
            let jm = &jac.j[k][idx];
            let dir = if d == 1 {
                DVector::from_element(1, 1.0)
            } else {
                let svd = jm.clone().svd(false, true);
                let vt = svd.v_t.expect("requested");
                vt.row(d - 1).transpose()
            };
            // re-integrate the Jacobi column on [a, a′] and form Q by Simpson
            let steps = 512usize;
            let hh = (a_prime - a) / steps as f64;
            let coeffs = |t: f64| {
                let (uu, vv) = u.interp(k, t);
                (
                    f.hess_uu(k, t, &uu, &vv),
                    f.hess_uv(k, t, &uu, &vv),
                    f.hess_vv(k, t, &uu, &vv),
                )
            };
            let mut eta = DVector::<f64>::zeros(d);
            let mut zeta = coeffs(a).2 * &dir;
            let mut q_samples = Vec::with_capacity(steps + 1);
            let mut record = |t: f64, eta: &DVector<f64>, zeta: &DVector<f64>| {
                let (fuu, fuv, fvv) = coeffs(t);
                let etad = fvv
                    .clone()
                    .lu()
                    .solve(&(zeta - fuv.transpose() * eta))
                    .unwrap_or_else(|| DVector::zeros(d));
                let q = (&fuu * eta).dot(eta)
                    + 2.0 * (&fuv * &etad).dot(eta)
                    + (&fvv * &etad).dot(&etad);
                q_samples.push(q);
            };
            record(a, &eta, &zeta);
            for i in 0..steps {
                let t = a + i as f64 * hh;
                let step = |t: f64, e: &DVector<f64>, z: &DVector<f64>| {
                    let (fuu, fuv, fvv) = coeffs(t);
                    let ed = fvv
                        .lu()
                        .solve(&(z - fuv.transpose() * e))
                        .unwrap_or_else(|| DVector::zeros(d));
                    let zd = &fuu * e + fuv * &ed;
                    (ed, zd)
                };
                let (k1e, k1z) = step(t, &eta, &zeta);
                let (k2e, k2z) = step(t + 0.5 * hh, &(&eta + &k1e * (0.5 * hh)), &(&zeta + &k1z * (0.5 * hh)));
                let (k3e, k3z) = step(t + 0.5 * hh, &(&eta + &k2e * (0.5 * hh)), &(&zeta + &k2z * (0.5 * hh)));
                let (k4e, k4z) = step(t + hh, &(&eta + &k3e * hh), &(&zeta + &k3z * hh));
                eta += (k1e + &k2e * 2.0 + &k3e * 2.0 + k4e) * (hh / 6.0);
                zeta += (k1z + &k2z * 2.0 + &k3z * 2.0 + k4z) * (hh / 6.0);
                record(t + hh, &eta, &zeta);
            }
            simpson(&q_samples, hh)
        })
        .collect();
    GenNum::from_samples(&g, samples)
}

/// F = ½|u̇|² in d dimensions, with analytic partials.
pub fn free_particle(gauge: &Arc<Gauge>, dim: usize) -> Lagrangian {
    Lagrangian::new(
        gauge,
        dim,
        Arc::new(|_, _, _, v: &[f64]| 0.5 * v.iter().map(|x| x * x).sum::<f64>()),
    )
    .with_f_t(Arc::new(|_, _, _, _| 0.0))
    .with_f_u(Arc::new(|_, _, u: &[f64], _| vec![0.0; u.len()]))
    .with_f_v(Arc::new(|_, _, _, v: &[f64]| v.to_vec()))
    .with_f_vt(Arc::new(|_, _, _, v: &[f64]| vec![0.0; v.len()]))
    .with_f_uu(Arc::new(|_, _, u: &[f64], _| DMatrix::zeros(u.len(), u.len())))
    .with_f_uv(Arc::new(|_, _, u: &[f64], _| DMatrix::zeros(u.len(), u.len())))
    .with_f_vv(Arc::new(|_, _, u: &[f64], _| DMatrix::identity(u.len(), u.len())))
}

/// F = ½(u̇² − u²), the harmonic-oscillator integrand (d = 1).
pub fn harmonic_oscillator(gauge: &Arc<Gauge>) -> Lagrangian {
    Lagrangian::new(
        gauge,
        1,
        Arc::new(|_, _, u: &[f64], v: &[f64]| 0.5 * (v[0] * v[0] - u[0] * u[0])),
    )
    .with_f_t(Arc::new(|_, _, _, _| 0.0))
    .with_f_u(Arc::new(|_, _, u: &[f64], _| vec![-u[0]]))
    .with_f_v(Arc::new(|_, _, _, v: &[f64]| vec![v[0]]))
    .with_f_vt(Arc::new(|_, _, _, _| vec![0.0]))
    .with_f_uu(Arc::new(|_, _, _, _| DMatrix::from_element(1, 1, -1.0)))
    .with_f_uv(Arc::new(|_, _, _, _| DMatrix::zeros(1, 1)))
    .with_f_vv(Arc::new(|_, _, _, _| DMatrix::from_element(1, 1, 1.0)))
}

/// F = −½u̇², the Legendre counter-fixture (d = 1).
pub fn sign_flipped_particle(gauge: &Arc<Gauge>) -> Lagrangian {
    Lagrangian::new(gauge, 1, Arc::new(|_, _, _, v: &[f64]| -0.5 * v[0] * v[0]))
        .with_f_u(Arc::new(|_, _, _, _| vec![0.0]))
        .with_f_v(Arc::new(|_, _, _, v: &[f64]| vec![-v[0]]))
        .with_f_vt(Arc::new(|_, _, _, _| vec![0.0]))
        .with_f_uu(Arc::new(|_, _, _, _| DMatrix::zeros(1, 1)))
        .with_f_uv(Arc::new(|_, _, _, _| DMatrix::zeros(1, 1)))
        .with_f_vv(Arc::new(|_, _, _, _| DMatrix::from_element(1, 1, -1.0)))
}
