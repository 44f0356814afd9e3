//! Transition law of RBM: the closed-form density and CDF, the eigenfunctions
//! of the generator, and the spectral representation of `p(t, x, y)` and
//! `E_x f(X(t))`.
//!
//! Spectral integrals over `lambda < -gamma` are evaluated in the variable
//! `s = sigma * sqrt(-2 (lambda + gamma))`, which removes the square-root
//! singularity at `lambda = -gamma`. In `s` the integrand is a Gaussian
//! `exp(-s^2 t / (2 sigma^2))` times trigonometric factors, so it is cut where
//! the Gaussian drops below `1e-18` and integrated in half-period panels.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{equilibrium_expectation, PerformanceMeasure, RbmParams};
use crate::quad::{self, QuadSpec};
use crate::special::{norm_cdf, norm_interval, norm_pdf, norm_sf};

/// Smallest horizon accepted by the spectral routines.
pub const SPECTRAL_T_MIN: f64 = 0.05;

/// `-ln` of the Gaussian factor at the spectral truncation point.
const GAUSS_CUT: f64 = 42.0;

fn check_args(t: f64, x: f64, y: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be > 0, got {t}")));
    }
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::Domain(format!("states must be >= 0, got x = {x}, y = {y}")));
    }
    Ok(())
}

/// Transition density `p(t, x, y)`.
pub fn density(p: &RbmParams, t: f64, x: f64, y: f64) -> Result<f64> {
    check_args(t, x, y)?;
    let (r, eta) = (p.r(), p.eta());
    let scale = p.sigma() * t.sqrt();
    let decay = (-eta * y).exp();
    let value = eta * decay * norm_cdf((r * t - x - y) / scale)
        + norm_pdf((-r * t + x - y) / scale) / scale
        + decay * norm_pdf((-r * t + x + y) / scale) / scale;
    Ok(value.max(0.0))
}

/// `P_x(X(t) <= y)`, computed as a sum of nonnegative terms.
pub fn cdf(p: &RbmParams, t: f64, x: f64, y: f64) -> Result<f64> {
    check_args(t, x, y)?;
    if y.is_infinite() {
        return Ok(1.0);
    }
    let (r, eta) = (p.r(), p.eta());
    let scale = p.sigma() * t.sqrt();
    let upper = (y - x + r * t) / scale;
    let lower = (r * t - x - y) / scale;
    // Phi(upper) - e^{-eta y} Phi(lower)
    //   = [Phi(upper) - Phi(lower)] + (1 - e^{-eta y}) Phi(lower)
    let value = norm_interval(lower, upper) - (-eta * y).exp_m1() * norm_cdf(lower);
    Ok(value.clamp(0.0, 1.0))
}

/// `P_x(X(t) > y)`, accurate in the upper tail.
pub fn survival(p: &RbmParams, t: f64, x: f64, y: f64) -> Result<f64> {
    check_args(t, x, y)?;
    if y.is_infinite() {
        return Ok(0.0);
    }
    let (r, eta) = (p.r(), p.eta());
    let scale = p.sigma() * t.sqrt();
    let upper = (y - x + r * t) / scale;
    let lower = (r * t - x - y) / scale;
    let value = norm_sf(upper) + (-eta * y).exp() * norm_cdf(lower);
    Ok(value.clamp(0.0, 1.0))
}

/// A point `lambda < -gamma` of the continuous spectrum together with
/// `s(lambda) = sigma sqrt(-2 (lambda + gamma))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub lambda: f64,
    pub s: f64,
}

impl SpectralPoint {
    pub fn new(p: &RbmParams, lambda: f64) -> Result<Self> {
        let gamma = p.gamma();
        if !(lambda < -gamma) {
            return Err(Error::Spectrum { lambda, gamma });
        }
        let s = p.sigma() * (-2.0 * (lambda + gamma)).sqrt();
        Ok(SpectralPoint { lambda, s })
    }

    /// Inverse of `s(lambda)`.
    pub fn from_s(p: &RbmParams, s: f64) -> Self {
        SpectralPoint {
            lambda: -p.gamma() - s * s / (2.0 * p.sigma2()),
            s,
        }
    }
}

/// Spectral gap `gamma = r^2 / (2 sigma^2)`.
pub fn spectral_gap(p: &RbmParams) -> f64 {
    p.gamma()
}

// s cos(s z / sigma2) - r sin(s z / sigma2)
fn trig_part(p: &RbmParams, s: f64, z: f64) -> f64 {
    let arg = s * z / p.sigma2();
    s * arg.cos() - p.r() * arg.sin()
}

/// Eigenfunction `u_lambda(x)` solving `L u = lambda u`, `u'(0) = 0`.
pub fn eigenfunction(p: &RbmParams, lambda: f64, x: f64) -> Result<f64> {
    let pt = SpectralPoint::new(p, lambda)?;
    Ok((p.r() * x / p.sigma2()).exp() * trig_part(p, pt.s, x))
}

fn spectral_panels(p: &RbmParams, t: f64, frequency: f64) -> Vec<f64> {
    let s_max = (2.0 * p.sigma2() * GAUSS_CUT / t).sqrt();
    let mut width = s_max / 8.0;
    if frequency > 0.0 {
        width = width.min(std::f64::consts::PI / frequency);
    }
    let n = (s_max / width).ceil() as usize;
    (0..=n).map(|k| s_max * k as f64 / n as f64).collect()
}

fn check_spectral_time(t: f64) -> Result<()> {
    if t < SPECTRAL_T_MIN {
        return Err(Error::SpectralTime {
            t,
            t_min: SPECTRAL_T_MIN,
        });
    }
    Ok(())
}

/// Transition density from the spectral decomposition. Agrees with
/// [`density`] for `t >= SPECTRAL_T_MIN`; used for validation and for
/// reading off the convergence rate.
pub fn density_spectral(p: &RbmParams, t: f64, x: f64, y: f64, spec: &QuadSpec) -> Result<f64> {
    check_args(t, x, y)?;
    check_spectral_time(t)?;
    let (r, sigma2, eta) = (p.r(), p.sigma2(), p.eta());
    let stationary = eta * (-eta * y).exp();

    // e^{lambda t} u(x) u(y) eta e^{-eta y} with the exponentials merged
    let prefactor = eta * (r * (x - y) / sigma2 - p.gamma() * t).exp();
    let integrand = |s: f64| {
        let pt = SpectralPoint::from_s(p, s);
        (-s * s * t / (2.0 * sigma2)).exp() * trig_part(p, s, x) * trig_part(p, s, y)
            / (pt.lambda * sigma2)
    };
    let panels = spectral_panels(p, t, (x + y) / sigma2);
    let integral = quad::integrate_pieces(integrand, &panels, spec)?.value;
    Ok(stationary - prefactor * integral / (2.0 * std::f64::consts::PI * r))
}

/// Inner product `<f, u_lambda>` in `L^2(pi)`.
pub fn inner_product(
    p: &RbmParams,
    f: &PerformanceMeasure,
    lambda: f64,
    spec: &QuadSpec,
) -> Result<f64> {
    let pt = SpectralPoint::new(p, lambda)?;
    inner_product_at(p, f, pt.s, spec)
}

// <f, u> = eta Re[(s + i r) F(c)], F the Laplace transform of f at
// c = r/sigma2 - i s/sigma2.
fn inner_product_at(p: &RbmParams, f: &PerformanceMeasure, s: f64, spec: &QuadSpec) -> Result<f64> {
    let (r, sigma2, eta) = (p.r(), p.sigma2(), p.eta());
    let decay = r / sigma2;
    let c = Complex64::new(decay, -s / sigma2);
    let phase = Complex64::new(s, r);
    let laplace = match f {
        PerformanceMeasure::Identity => c.powi(-2),
        PerformanceMeasure::Square => 2.0 * c.powi(-3),
        PerformanceMeasure::Exponential { theta } => {
            if !(*theta < decay) {
                return Err(Error::Divergence(format!(
                    "spectral inner product needs theta < eta/2 = {decay}, got {theta}"
                )));
            }
            (c - theta).inv()
        }
        PerformanceMeasure::IndicatorAbove { b } => (-c * b).exp() / c,
        PerformanceMeasure::Tabulated(tab) => {
            let integrand = |y: f64| tab.eval(y) * (-decay * y).exp() * trig_part(p, s, y);
            let frequency = s / sigma2;
            let last = *tab.nodes().last().unwrap_or(&0.0);
            let y_cut = last.max(0.0) + GAUSS_CUT / decay;
            let mut interior = tab.nodes().to_vec();
            if frequency > 0.0 {
                let width = std::f64::consts::PI / frequency;
                let n = ((y_cut / width).ceil() as usize).min(4096);
                interior.extend((1..n).map(|k| k as f64 * y_cut / n as f64));
            }
            interior.push(y_cut);
            let pts = quad::pieces(0.0, &interior, f64::INFINITY);
            let value = quad::integrate_pieces(integrand, &pts, spec)?.value;
            return Ok(eta * value);
        }
    };
    Ok(eta * (phase * laplace).re)
}

/// `E_x f(X(t)) - E f(X(inf))` from the spectral representation; this
/// difference decays like `e^{-gamma t}`.
pub fn spectral_deviation(
    p: &RbmParams,
    t: f64,
    x: f64,
    f: &PerformanceMeasure,
    spec: &QuadSpec,
) -> Result<f64> {
    check_args(t, x, 0.0)?;
    check_spectral_time(t)?;
    f.check(p)?;
    let (r, sigma2) = (p.r(), p.sigma2());
    // probe once so divergence surfaces as an error rather than NaN
    inner_product_at(p, f, 1.0, spec)?;

    let prefactor = (r * x / sigma2 - p.gamma() * t).exp();
    let integrand = |s: f64| {
        let pt = SpectralPoint::from_s(p, s);
        let ip = inner_product_at(p, f, s, spec).unwrap_or(f64::NAN);
        (-s * s * t / (2.0 * sigma2)).exp() * trig_part(p, s, x) * ip / (pt.lambda * sigma2)
    };
    let mut frequency = x / sigma2;
    for k in f.kinks() {
        frequency = frequency.max((x + k) / sigma2);
    }
    let panels = spectral_panels(p, t, frequency);
    let integral = quad::integrate_pieces(integrand, &panels, spec)?.value;
    Ok(-prefactor * integral / (2.0 * std::f64::consts::PI * r))
}

/// `E_x f(X(t))` from the spectral representation.
pub fn expectation_spectral(
    p: &RbmParams,
    t: f64,
    x: f64,
    f: &PerformanceMeasure,
    spec: &QuadSpec,
) -> Result<f64> {
    let mean = equilibrium_expectation(p, f, spec)?;
    Ok(mean + spectral_deviation(p, t, x, f, spec)?)
}
