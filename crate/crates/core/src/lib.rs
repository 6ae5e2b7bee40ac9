//! Calculus on sampled ε-nets: non-Archimedean generalized numbers relative to a
//! gauge, generalized smooth functions as ε-indexed families of smooth maps,
//! embedding of distributions by moment-vanishing mollifiers, the variational
//! stack (Euler–Lagrange, Legendre, Jacobi/conjugate points, Noether) and an
//! application to geodesics of mollified low-regularity Riemannian metrics.
//!
//! Everything is computed per grid index `k` of a finite ε-grid; asymptotic
//! verdicts (moderate / negligible / neither, order, standard part) are
//! tail-fit estimates relative to the gauge `ρ` and carry fit diagnostics.

pub mod error;
pub(crate) mod fit;
pub mod gauge;
pub mod gsf;
pub mod mollifier;
pub mod ode;
pub mod quad;
pub mod riemann;
pub mod varcalc;

pub use error::{Error, Result};
pub use gauge::{AsymptoticReport, EpsGrid, Gauge, GaugeKind, GenNum, Truth, Valuation, Verdict};
pub use gsf::{Domain, Extremum, GsfFamily, IntervalDomain, ProbeConfig};
pub use mollifier::{
    build_mollifier, embed, verify_moments, weak_limit_check, DistributionSpec, EmbeddingParams,
    Mollifier, MollifierSpec, MomentReport, TestFunction, WeakLimitReport,
};
