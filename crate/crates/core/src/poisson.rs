//! Poisson's equation `L h = -f_c`, `h'(0) = 0`, and the bias quantities
//! built on its centered solution `h_c`: the UNITE and CITE functionals and
//! the good-state set.
//!
//! For a source `f` with stationary mean `m_f` the solution is assembled from
//!
//! ```text
//! g(x)  = int_0^inf f_c(x + z) e^{-eta z} dz
//! h'(x) = (2 / sigma^2) g(x)
//! h(x)  = (g(x) + int_0^x f_c(y) dy) / r
//! E h(X(inf)) = E[X f_c(X)] / r
//! ```
//!
//! which is the integral solution rewritten with the centering identity
//! `int_0^inf f_c(y) e^{-eta y} dy = 0` so that no `e^{eta x}` factor appears.
//! The four named measures use closed forms instead.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::{self, Interval, StateSet};
use crate::model::{equilibrium_expectation, InitialDistribution, PerformanceMeasure, RbmParams};
use crate::quad::{self, QuadSpec};

/// Endpoint accuracy of good-state boundaries.
pub const BOUNDARY_TOL: f64 = 1e-10;

/// Initial scan bracket is `[0, SCAN_SPAN * EX(inf)]`.
pub(crate) const SCAN_SPAN: f64 = 50.0;
/// Grid spacing of the scan, in units of `EX(inf)`.
pub(crate) const SCAN_STEP: f64 = 1.0 / 50.0;
pub(crate) const MAX_DOUBLINGS: usize = 8;

type Source = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Quadrature solution of Poisson's equation for an arbitrary source.
#[derive(Clone)]
pub struct PoissonSolver {
    params: RbmParams,
    source: Source,
    kinks: Vec<f64>,
    mean: f64,
    centering: f64,
    spec: QuadSpec,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver")
            .field("params", &self.params)
            .field("kinks", &self.kinks)
            .field("mean", &self.mean)
            .field("centering", &self.centering)
            .finish()
    }
}

impl PoissonSolver {
    pub fn new<F>(params: RbmParams, source: F, kinks: Vec<f64>, spec: &QuadSpec) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let source: Source = Arc::new(source);
        let spec = spec.with_tail_width(params.stationary_mean());
        let stationary = InitialDistribution::Stationary;
        let mean = stationary.expect(&params, |x| source(x), &kinks, &spec)?;
        let centering = stationary.expect(&params, |x| x * (source(x) - mean), &kinks, &spec)?
            / params.r();
        Ok(PoissonSolver {
            params,
            source,
            kinks,
            mean,
            centering,
            spec,
        })
    }

    /// Stationary mean of the source.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E h(X(inf))` for the solution normalized by `h(0) = 0`.
    pub fn centering(&self) -> f64 {
        self.centering
    }

    fn g(&self, x: f64) -> Result<f64> {
        let eta = self.params.eta();
        let shifted: Vec<f64> = self.kinks.iter().map(|k| k - x).collect();
        let pts = quad::pieces(0.0, &shifted, f64::INFINITY);
        let v = quad::integrate_pieces(
            |z| (self.source)(x + z) * (-eta * z).exp(),
            &pts,
            &self.spec,
        )?
        .value;
        Ok(v - self.mean / eta)
    }

    pub fn h_prime(&self, x: f64) -> Result<f64> {
        Ok(2.0 / self.params.sigma2() * self.g(x)?)
    }

    pub fn h(&self, x: f64) -> Result<f64> {
        check_state(x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let pts = quad::pieces(0.0, &self.kinks, x);
        let running = quad::integrate_pieces(|y| (self.source)(y) - self.mean, &pts, &self.spec)?;
        Ok((self.g(x)? + running.value) / self.params.r())
    }

    pub fn h_c(&self, x: f64) -> Result<f64> {
        Ok(self.h(x)? - self.centering)
    }
}

fn check_state(x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("state must be a finite value >= 0, got {x}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Backend {
    ClosedForm,
    Quadrature(PoissonSolver),
}

/// Centered Poisson solution `h_c` for one performance measure.
#[derive(Debug, Clone)]
pub struct BiasFunction {
    params: RbmParams,
    measure: PerformanceMeasure,
    mean: f64,
    backend: Backend,
    spec: QuadSpec,
    cite_pi: OnceLock<f64>,
}

impl BiasFunction {
    pub fn new(params: RbmParams, measure: PerformanceMeasure, spec: &QuadSpec) -> Result<Self> {
        measure.check(&params)?;
        let mean = equilibrium_expectation(&params, &measure, spec)?;
        let backend = match &measure {
            PerformanceMeasure::Tabulated(t) => {
                let table = t.clone();
                Backend::Quadrature(PoissonSolver::new(
                    params,
                    move |x| table.eval(x),
                    t.nodes().to_vec(),
                    spec,
                )?)
            }
            _ => Backend::ClosedForm,
        };
        Ok(BiasFunction {
            params,
            measure,
            mean,
            backend,
            spec: *spec,
            cite_pi: OnceLock::new(),
        })
    }

    pub fn params(&self) -> &RbmParams {
        &self.params
    }

    pub fn measure(&self) -> &PerformanceMeasure {
        &self.measure
    }

    pub fn spec(&self) -> &QuadSpec {
        &self.spec
    }

    /// `E f(X(inf))`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E h(X(inf))` for `h` normalized by `h(0) = 0`.
    pub fn centering(&self) -> Result<f64> {
        match &self.backend {
            Backend::ClosedForm => Ok(-self.h_c(0.0)?),
            Backend::Quadrature(s) => Ok(s.centering()),
        }
    }

    /// Solution of Poisson's equation with `h(0) = 0`.
    pub fn h(&self, x: f64) -> Result<f64> {
        match &self.backend {
            Backend::ClosedForm => Ok(self.h_c(x)? - self.h_c(0.0)?),
            Backend::Quadrature(s) => s.h(x),
        }
    }

    /// Centered solution `h_c = h - E h(X(inf))`; `h_c(x) / t` is the bias of
    /// the time average started at `x`.
    pub fn h_c(&self, x: f64) -> Result<f64> {
        check_state(x)?;
        let (r, s2) = (self.params.r(), self.params.sigma2());
        let eta = self.params.eta();
        Ok(match &self.measure {
            PerformanceMeasure::Identity => x * x / (2.0 * r) - s2 * s2 / (4.0 * r.powi(3)),
            PerformanceMeasure::Square => {
                x.powi(3) / (3.0 * r) + s2 * x * x / (2.0 * r * r) - s2.powi(3) / (2.0 * r.powi(4))
            }
            PerformanceMeasure::Exponential { theta } => {
                let theta = *theta;
                if theta == 0.0 {
                    return Ok(0.0);
                }
                let gap = 2.0 * r - theta * s2;
                2.0 * expm1_minus_linear(theta * x) / (theta * gap)
                    - theta * s2 * s2 / (r * gap * gap)
            }
            PerformanceMeasure::IndicatorAbove { b } => {
                let b = *b;
                let tail = (-eta * b).exp();
                if x < b {
                    (s2 * ((eta * (x - b)).exp() - tail) - 2.0 * r * (b + x) * tail) / (2.0 * r * r)
                } else {
                    (2.0 * r * (x - b) + s2 - tail * (2.0 * r * (b + x) + s2)) / (2.0 * r * r)
                }
            }
            PerformanceMeasure::Tabulated(_) => match &self.backend {
                Backend::Quadrature(s) => s.h_c(x)?,
                Backend::ClosedForm => unreachable!("tabulated measures use quadrature"),
            },
        })
    }

    /// Derivative `h_c'(x)`.
    pub fn h_c_prime(&self, x: f64) -> Result<f64> {
        check_state(x)?;
        let (r, s2) = (self.params.r(), self.params.sigma2());
        let eta = self.params.eta();
        Ok(match &self.measure {
            PerformanceMeasure::Identity => x / r,
            PerformanceMeasure::Square => x * x / r + s2 * x / (r * r),
            PerformanceMeasure::Exponential { theta } => {
                2.0 * (theta * x).exp_m1() / (2.0 * r - theta * s2)
            }
            PerformanceMeasure::IndicatorAbove { b } => {
                let tail = (-eta * b).exp();
                if x < *b {
                    ((eta * (x - b)).exp() - tail) / r
                } else {
                    (1.0 - tail) / r
                }
            }
            PerformanceMeasure::Tabulated(_) => match &self.backend {
                Backend::Quadrature(s) => s.h_prime(x)?,
                Backend::ClosedForm => unreachable!("tabulated measures use quadrature"),
            },
        })
    }

    /// Points where `h_c` (or its derivatives) is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        self.measure.kinks()
    }

    /// Zeros of `h_c` on `[0, x_max]`.
    pub fn zeros(&self, x_max: f64) -> Result<Vec<f64>> {
        let grid = levelset::scan_grid(x_max, SCAN_STEP * self.params.stationary_mean(), &self.kinks());
        let h = |x: f64| self.h_c(x);
        levelset::crossing_points(&grid, &[&h], BOUNDARY_TOL)
    }

    /// CITE benchmark `tilde beta_f(pi)`, computed once.
    pub fn cite_pi(&self) -> Result<f64> {
        if let Some(v) = self.cite_pi.get() {
            return Ok(*v);
        }
        let value = match self.measure {
            PerformanceMeasure::Identity => {
                let (r, s2) = (self.params.r(), self.params.sigma2());
                let root2 = std::f64::consts::SQRT_2;
                (1.0 + root2) * (-root2).exp() * s2 * s2 / (2.0 * r.powi(3))
            }
            _ => cite_functional(self, &InitialDistribution::Stationary)?,
        };
        Ok(*self.cite_pi.get_or_init(|| value))
    }
}

// e^u - 1 - u without cancellation for small u
fn expm1_minus_linear(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        u * u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u / 120.0)))
    } else {
        u.exp_m1() - u
    }
}

/// `h_c(x)` from the integral solution exactly as written, with its
/// `e^{-eta (y - x)}` factor and the double-integral centering term:
///
/// ```text
/// h_c(x) = -(1/r) int_0^x f_c(y) (e^{-eta (y - x)} - 1) dy
///          + (2 / sigma^2) int_0^inf int_0^u f_c(y) (e^{-eta y} - e^{-eta u}) dy du
/// ```
///
/// Much slower than [`BiasFunction::h_c`]; used as a cross-check.
pub fn h_c_integral_formula(p: &RbmParams, f: &PerformanceMeasure, x: f64, spec: &QuadSpec) -> Result<f64> {
    check_state(x)?;
    f.check(p)?;
    let (r, s2, eta) = (p.r(), p.sigma2(), p.eta());
    let mean = equilibrium_expectation(p, f, spec)?;
    let fc = |y: f64| f.eval(y) - mean;
    let kinks = f.kinks();
    let first = if x > 0.0 {
        quad::integrate_pieces(
            |y| fc(y) * ((-eta * (y - x)).exp() - 1.0),
            &quad::pieces(0.0, &kinks, x),
            spec,
        )?
        .value
    } else {
        0.0
    };
    let inner_spec = spec.tightened(0.1);
    let inner = |u: f64| {
        if u == 0.0 {
            return 0.0;
        }
        quad::integrate_pieces(
            |y| fc(y) * ((-eta * y).exp() - (-eta * u).exp()),
            &quad::pieces(0.0, &kinks, u),
            &inner_spec,
        )
        .map(|v| v.value)
        .unwrap_or(f64::NAN)
    };
    let second = quad::integrate_pieces(
        inner,
        &quad::pieces(0.0, &kinks, f64::INFINITY),
        &spec.with_tail_width(p.stationary_mean()),
    )?
    .value;
    Ok(-first / r + 2.0 / s2 * second)
}

/// `h(x)` normalized by `h(0) = 0`.
pub fn solve_h(p: &RbmParams, f: &PerformanceMeasure, x: f64, spec: &QuadSpec) -> Result<f64> {
    BiasFunction::new(*p, f.clone(), spec)?.h(x)
}

/// `h_c(x) = h(x) - E h(X(inf))`.
pub fn h_centered(p: &RbmParams, f: &PerformanceMeasure, x: f64, spec: &QuadSpec) -> Result<f64> {
    BiasFunction::new(*p, f.clone(), spec)?.h_c(x)
}

/// UNITE measure `beta_f(mu) = | int h_c dmu |`.
pub fn unite_functional(bias: &BiasFunction, mu: &InitialDistribution) -> Result<f64> {
    let v = mu.expect(bias.params(), |x| bias.h_c(x).unwrap_or(f64::NAN), &bias.kinks(), bias.spec())?;
    if v.is_nan() {
        return Err(Error::NonConvergence {
            estimate: v,
            error: f64::NAN,
        });
    }
    Ok(v.abs())
}

/// CITE measure `tilde beta_f(mu) = int |h_c| dmu`.
pub fn cite_functional(bias: &BiasFunction, mu: &InitialDistribution) -> Result<f64> {
    let x_max = match mu {
        InitialDistribution::PointMass { x } => return Ok(bias.h_c(*x)?.abs()),
        InitialDistribution::Stationary => SCAN_SPAN * bias.params().stationary_mean(),
        InitialDistribution::TabulatedDensity(d) => *d.nodes().last().unwrap_or(&0.0),
    };
    let mut kinks = bias.kinks();
    kinks.extend(bias.zeros(x_max)?);
    let v = mu.expect(bias.params(), |x| bias.h_c(x).map(f64::abs).unwrap_or(f64::NAN), &kinks, bias.spec())?;
    if v.is_nan() {
        return Err(Error::NonConvergence {
            estimate: v,
            error: f64::NAN,
        });
    }
    Ok(v)
}

/// `{x >= 0 : |h_c(x)| <= level}`.
pub fn bias_band(bias: &BiasFunction, level: f64) -> Result<StateSet> {
    if !(level >= 0.0) {
        return Err(Error::Domain(format!("level must be >= 0, got {level}")));
    }
    let p = bias.params();
    if let PerformanceMeasure::Identity = bias.measure() {
        // |x^2/(2r) - sigma^4/(4r^3)| <= level, solved for x
        let (r, s2) = (p.r(), p.sigma2());
        let centre = s2 * s2 / (4.0 * r.powi(3));
        let hi = (2.0 * r * (centre + level)).sqrt();
        let lo = (2.0 * r * (centre - level)).max(0.0).sqrt();
        return Ok(StateSet::from_intervals(vec![Interval { lo, hi }]));
    }

    let mean = p.stationary_mean();
    let upper = |x: f64| Ok(bias.h_c(x)? - level);
    let lower = |x: f64| Ok(bias.h_c(x)? + level);
    levelset::search_set(
        SCAN_SPAN * mean,
        SCAN_STEP * mean,
        &bias.kinks(),
        &[&upper, &lower],
        |x| Ok(bias.h_c(x)?.abs() <= level),
        MAX_DOUBLINGS,
        BOUNDARY_TOL,
    )
}

/// Good states `G(r, sigma^2; c) = {x : beta_f(delta_x) <= c tilde beta_f(pi)}`.
pub fn good_states_functional(bias: &BiasFunction, c: f64) -> Result<StateSet> {
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("threshold c must be >= 0, got {c}")));
    }
    bias_band(bias, c * bias.cite_pi()?)
}

/// One row of the good-state plot: the set for a given `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodStateRow {
    pub c: f64,
    pub set: StateSet,
}

pub fn good_states_figure(bias: &BiasFunction, c_grid: &[f64]) -> Result<Vec<GoodStateRow>> {
    c_grid
        .iter()
        .map(|&c| {
            Ok(GoodStateRow {
                c,
                set: good_states_functional(bias, c)?,
            })
        })
        .collect()
}
