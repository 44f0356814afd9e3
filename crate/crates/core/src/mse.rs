//! Variance and mean-square-error constants of the time average
//! `alpha(t) = t^{-1} int_0^t f(X(s)) ds`:
//!
//! ```text
//! E (alpha(t) - alpha)^2 = kappa^2 / t
//!     + (sigma^2 k_c(x) + h_c(x)^2 + E h_c(X(inf))^2) / t^2 + o(t^-2)
//! ```
//!
//! together with the run-length threshold `t*(x)` and the error-tolerance
//! threshold `eps*(x)`.
//!
//! The cross term `-2 sigma E_x h_c(X(t)) int_0^t h_c'(X(s)) dB(s)` of the
//! second moment does not vanish as `t -> inf`: writing the stochastic
//! integral as `h_c(X(t)) - h_c(x) + int_0^t f_c(X(s)) ds` and using
//! reversibility, it tends to `-4 E h_c(X(inf))^2`. [`MseDecomposition`]
//! keeps the four-term `total` and reports that term separately in
//! `corrected_total`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::StateSet;
use crate::model::{InitialDistribution, PerformanceMeasure};
use crate::poisson::{bias_band, BiasFunction, PoissonSolver};

/// Four-term decomposition of the MSE at one `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseDecomposition {
    pub kappa2: f64,
    pub k_c_x: f64,
    pub h_c_sq: f64,
    pub eh_c2: f64,
    pub t: f64,
    /// `kappa^2 / t + (sigma^2 k_c(x) + h_c(x)^2 + E h_c^2) / t^2`.
    pub total: f64,
    /// Limit of the stochastic-integral cross term, `-4 E h_c^2`.
    pub cross_term: f64,
    /// `total + cross_term / t^2`.
    pub corrected_total: f64,
}

impl MseDecomposition {
    /// Coefficient of `t^-2` in `total`.
    pub fn second_order(&self, sigma2: f64) -> f64 {
        sigma2 * self.k_c_x + self.h_c_sq + self.eh_c2
    }
}

#[derive(Debug, Clone)]
enum KBackend {
    Identity,
    Quadrature(PoissonSolver),
}

/// MSE constants for one `(params, measure)` pair; `kappa^2`,
/// `E h_c^2(X(inf))` and the `k_c` solver are built on construction.
#[derive(Debug, Clone)]
pub struct MseModel {
    bias: BiasFunction,
    kappa2: f64,
    eh_c2: f64,
    k: KBackend,
}

impl MseModel {
    pub fn new(bias: BiasFunction) -> Result<Self> {
        let p = *bias.params();
        if let PerformanceMeasure::Exponential { theta } = bias.measure() {
            if !(2.0 * theta < p.eta()) {
                return Err(Error::Divergence(format!(
                    "second moments of h_c need 2 theta < eta = {}, got theta = {theta}",
                    p.eta()
                )));
            }
        }
        let kinks = bias.kinks();
        let pi = InitialDistribution::Stationary;
        let spec = *bias.spec();
        let fail = |v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonConvergence {
                    estimate: v,
                    error: f64::NAN,
                })
            }
        };
        let slope2 = pi.expect(&p, |x| bias.h_c_prime(x).map(|d| d * d).unwrap_or(f64::NAN), &kinks, &spec)?;
        let kappa2 = fail(p.sigma2() * slope2)?;
        let eh_c2 = fail(pi.expect(&p, |x| bias.h_c(x).map(|h| h * h).unwrap_or(f64::NAN), &kinks, &spec)?)?;
        let k = match bias.measure() {
            PerformanceMeasure::Identity => KBackend::Identity,
            _ => KBackend::Quadrature(k_solver(&bias)?),
        };
        Ok(MseModel {
            bias,
            kappa2,
            eh_c2,
            k,
        })
    }

    pub fn bias(&self) -> &BiasFunction {
        &self.bias
    }

    /// Time-average variance constant `kappa^2 = sigma^2 E h_c'(X(inf))^2`.
    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    /// `E h_c(X(inf))^2`.
    pub fn eh_c2(&self) -> f64 {
        self.eh_c2
    }

    /// Centered solution of `L k_c = -(h_c'^2 - E h_c'(X(inf))^2)`.
    pub fn k_c(&self, x: f64) -> Result<f64> {
        match &self.k {
            KBackend::Identity => {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::Domain(format!("state must be a finite value >= 0, got {x}")));
                }
                let p = self.bias.params();
                let (r, s2) = (p.r(), p.sigma2());
                Ok((2.0 * r.powi(3) * x.powi(3) + 3.0 * r * r * s2 * x * x - 3.0 * s2.powi(3))
                    / (6.0 * r.powi(6)))
            }
            KBackend::Quadrature(s) => s.h_c(x),
        }
    }

    pub fn mse_estimate(&self, x: f64, t: f64) -> Result<MseDecomposition> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("horizon must be > 0, got {t}")));
        }
        let h = self.bias.h_c(x)?;
        let k_c_x = self.k_c(x)?;
        let s2 = self.bias.params().sigma2();
        let h_c_sq = h * h;
        let total = self.kappa2 / t + (s2 * k_c_x + h_c_sq + self.eh_c2) / (t * t);
        let cross_term = -4.0 * self.eh_c2;
        Ok(MseDecomposition {
            kappa2: self.kappa2,
            k_c_x,
            h_c_sq,
            eh_c2: self.eh_c2,
            t,
            total,
            cross_term,
            corrected_total: total + cross_term / (t * t),
        })
    }

    /// `t*(x) = beta_f(delta_x)^2 pi / (2 kappa^2)`.
    pub fn threshold_time(&self, x: f64) -> Result<f64> {
        let h = self.bias.h_c(x)?;
        if self.kappa2 <= 0.0 {
            return Err(Error::Domain("threshold time needs kappa^2 > 0".into()));
        }
        Ok(h * h * PI / (2.0 * self.kappa2))
    }

    fn mean_magnitude(&self) -> Result<f64> {
        let m = self.bias.mean().abs();
        if m <= self.bias.spec().abs_tol {
            return Err(Error::UndefinedTolerance);
        }
        Ok(m)
    }

    /// `eps*(x) = 2 kappa^2 / (|beta_f(delta_x)| |E f(X(inf))|) * 2 / pi`,
    /// infinite where the bias vanishes.
    pub fn threshold_tolerance(&self, x: f64) -> Result<f64> {
        let m = self.mean_magnitude()?;
        let b = self.bias.h_c(x)?.abs();
        // zero up to the roundoff of assembling h_c from its terms
        if b <= 16.0 * f64::EPSILON * self.bias.centering()?.abs() {
            return Ok(f64::INFINITY);
        }
        Ok(2.0 * self.kappa2 / (b * m) * 2.0 / PI)
    }

    /// `{x : eps*(x) >= eps}`.
    pub fn tolerance_set(&self, eps: f64) -> Result<StateSet> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("tolerance must be > 0, got {eps}")));
        }
        let m = self.mean_magnitude()?;
        bias_band(&self.bias, 4.0 * self.kappa2 / (PI * eps * m))
    }

    pub fn tolerance_figure(&self, x_grid: &[f64], eps: f64) -> Result<ToleranceFigure> {
        let rows = x_grid
            .iter()
            .map(|&x| {
                let e = self.threshold_tolerance(x)?;
                Ok(ToleranceRow {
                    x,
                    eps_star: e.is_finite().then_some(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let set = self.tolerance_set(eps)?;
        let crossings = set
            .intervals
            .iter()
            .flat_map(|iv| [iv.lo, iv.hi])
            .filter(|&v| v > 0.0 && v.is_finite())
            .collect();
        Ok(ToleranceFigure { eps, rows, crossings })
    }
}

// Poisson solver for the source h_c'^2
fn k_solver(bias: &BiasFunction) -> Result<PoissonSolver> {
    let b = bias.clone();
    PoissonSolver::new(
        *bias.params(),
        move |x| b.h_c_prime(x).map(|d| d * d).unwrap_or(f64::NAN),
        bias.kinks(),
        bias.spec(),
    )
}

/// `eps*(x)` at one grid point; `None` marks the infinite value at a zero of
/// the bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceRow {
    pub x: f64,
    pub eps_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceFigure {
    pub eps: f64,
    pub rows: Vec<ToleranceRow>,
    /// States where `eps*(x) = eps`.
    pub crossings: Vec<f64>,
}

pub fn kappa2(bias: &BiasFunction) -> Result<f64> {
    Ok(MseModel::new(bias.clone())?.kappa2())
}

pub fn mse_estimate(bias: &BiasFunction, x: f64, t: f64) -> Result<MseDecomposition> {
    MseModel::new(bias.clone())?.mse_estimate(x, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RbmParams, Tabulated};
    use crate::quad::QuadSpec;

    fn unit() -> RbmParams {
        RbmParams::new(1.0, 2.0).unwrap()
    }

    fn model(p: RbmParams, f: PerformanceMeasure) -> MseModel {
        MseModel::new(BiasFunction::new(p, f, &QuadSpec::default()).unwrap()).unwrap()
    }

    // E X^n = n! / eta^n
    fn moment(p: &RbmParams, n: i32) -> f64 {
        (1..=n).map(f64::from).product::<f64>() / p.eta().powi(n)
    }

    #[test]
    fn kappa2_values() {
        let m = model(unit(), PerformanceMeasure::Identity);
        assert!((m.kappa2() - 4.0).abs() < 1e-8);
        let m = model(RbmParams::new(2.0, 2.0).unwrap(), PerformanceMeasure::Identity);
        assert!((m.kappa2() - 0.25).abs() < 1e-10);

        // Square: h_c' = x^2/r + s2 x / r^2
        for p in [unit(), RbmParams::new(0.7, 1.3).unwrap()] {
            let (r, s2) = (p.r(), p.sigma2());
            let expect = s2
                * (moment(&p, 4) / (r * r) + 2.0 * s2 * moment(&p, 3) / r.powi(3)
                    + s2 * s2 * moment(&p, 2) / r.powi(4));
            let m = model(p, PerformanceMeasure::Square);
            assert!((m.kappa2() - expect).abs() < 1e-8 * expect, "{} vs {expect}", m.kappa2());
        }
        assert!((kappa2(&BiasFunction::new(unit(), PerformanceMeasure::Identity, &QuadSpec::default()).unwrap()).unwrap() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn kappa2_diverges_for_fast_exponential() {
        let b = BiasFunction::new(unit(), PerformanceMeasure::Exponential { theta: 0.6 }, &QuadSpec::default()).unwrap();
        assert!(matches!(MseModel::new(b), Err(Error::Divergence(_))));
    }

    #[test]
    fn eh_c2_identity() {
        let m = model(unit(), PerformanceMeasure::Identity);
        assert!((m.eh_c2() - 5.0).abs() < 1e-8);
        let p = RbmParams::new(1.5, 0.8).unwrap();
        let m = model(p, PerformanceMeasure::Identity);
        let expect = 5.0 * p.sigma2().powi(4) / (16.0 * p.r().powi(6));
        assert!((m.eh_c2() - expect).abs() < 1e-10 * expect.max(1.0));
    }

    #[test]
    fn k_c_identity_values() {
        let m = model(unit(), PerformanceMeasure::Identity);
        assert_eq!(m.k_c(0.0).unwrap(), -4.0);
        assert!((m.k_c(1.0).unwrap() + 8.0 / 3.0).abs() < 1e-14);
        let e = InitialDistribution::Stationary
            .expect(&unit(), |x| m.k_c(x).unwrap(), &[], &QuadSpec::default())
            .unwrap();
        assert!(e.abs() < 1e-8);
    }

    #[test]
    fn k_c_generic_solver_matches_identity_closed_form() {
        for p in [unit(), RbmParams::new(0.6, 1.7).unwrap()] {
            let b = BiasFunction::new(p, PerformanceMeasure::Identity, &QuadSpec::default()).unwrap();
            let closed = MseModel::new(b.clone()).unwrap();
            let solver = k_solver(&b).unwrap();
            for &x in &[0.0, 0.4, 1.0, 3.0] {
                let (a, q) = (closed.k_c(x).unwrap(), solver.h_c(x).unwrap());
                assert!((a - q).abs() < 1e-8 * a.abs().max(1.0), "x={x}: {a} vs {q}");
            }
        }
    }

    fn generator5(v: &dyn Fn(f64) -> f64, p: &RbmParams, x: f64, h: f64) -> f64 {
        let (m2, m1, z, p1, p2) = (v(x - 2.0 * h), v(x - h), v(x), v(x + h), v(x + 2.0 * h));
        let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
        let d2 = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * h * h);
        -p.r() * d1 + 0.5 * p.sigma2() * d2
    }

    #[test]
    fn k_c_poisson_residuals() {
        let tight = QuadSpec::new(1e-13, 1e-12).unwrap();
        let p = unit();
        for f in [
            PerformanceMeasure::Identity,
            PerformanceMeasure::Square,
            PerformanceMeasure::Exponential { theta: 0.3 },
            PerformanceMeasure::IndicatorAbove { b: 1.0 },
        ] {
            let m = MseModel::new(BiasFunction::new(p, f.clone(), &tight).unwrap()).unwrap();
            let slope2 = m.kappa2() / p.sigma2();
            for &x in &[0.5, 1.7, 2.6] {
                let k = |y: f64| m.k_c(y).unwrap();
                let d = m.bias().h_c_prime(x).unwrap();
                let res = generator5(&k, &p, x, 1e-2) + (d * d - slope2);
                assert!(res.abs() < 1e-5, "{} x={x}: {res}", f.label());
            }
            let e = InitialDistribution::Stationary
                .expect(&p, |x| m.k_c(x).unwrap(), &f.kinks(), &tight)
                .unwrap();
            assert!(e.abs() < 1e-8, "{}: {e}", f.label());
        }
    }

    #[test]
    fn combined_coefficient_identity() {
        for p in [unit(), RbmParams::new(1.3, 0.9).unwrap()] {
            let m = model(p, PerformanceMeasure::Identity);
            let (r, s2) = (p.r(), p.sigma2());
            for &x in &[0.0, 0.5, 1.0, 2.0, 3.5, 7.0] {
                let d = m.mse_estimate(x, 1.0).unwrap();
                let poly = (6.0 * r.powi(4) * x.powi(4) + 8.0 * r.powi(3) * s2 * x.powi(3)
                    + 6.0 * r * r * s2 * s2 * x * x
                    - 3.0 * s2.powi(4))
                    / (24.0 * r.powi(6));
                let got = d.second_order(s2);
                assert!((got - poly).abs() < 1e-8 * poly.abs().max(1.0), "x={x}: {got} vs {poly}");
            }
        }
    }

    #[test]
    fn mse_values() {
        let m = model(unit(), PerformanceMeasure::Identity);
        let d = m.mse_estimate(0.0, 10.0).unwrap();
        assert!((d.total - 0.38).abs() < 1e-9);
        assert_eq!(d.h_c_sq, 1.0);
        assert!((d.second_order(2.0) + 2.0).abs() < 1e-8);
        let d = m.mse_estimate(2.0, 100.0).unwrap();
        assert!((d.total - (0.04 + 272.0 / 240000.0)).abs() < 1e-11);
        assert!(m.mse_estimate(0.0, 0.0).is_err());
    }

    #[test]
    fn corrected_total_values() {
        let m = model(unit(), PerformanceMeasure::Identity);
        let d = m.mse_estimate(0.0, 50.0).unwrap();
        assert!((d.cross_term + 20.0).abs() < 1e-7);
        assert!((d.corrected_total - (0.08 - 22.0 / 2500.0)).abs() < 1e-11);
    }

    // The cross-term limit rests on E[f_c H] = E h_c^2 where L H = -h_c,
    // which is self-adjointness of L in L^2(pi). Check it by quadrature.
    #[test]
    fn cross_term_identity() {
        let spec = QuadSpec::default();
        for (p, f) in [
            (unit(), PerformanceMeasure::Identity),
            (RbmParams::new(0.8, 1.5).unwrap(), PerformanceMeasure::Square),
            (unit(), PerformanceMeasure::IndicatorAbove { b: 0.7 }),
        ] {
            let m = model(p, f.clone());
            let b = m.bias().clone();
            let h2 = b.clone();
            let solver = PoissonSolver::new(p, move |x| h2.h_c(x).unwrap(), f.kinks(), &spec).unwrap();
            let lhs = InitialDistribution::Stationary
                .expect(&p, |x| (f.eval(x) - b.mean()) * solver.h_c(x).unwrap(), &f.kinks(), &spec)
                .unwrap();
            assert!((lhs - m.eh_c2()).abs() < 1e-7 * m.eh_c2().max(1.0), "{}: {lhs} vs {}", f.label(), m.eh_c2());
        }
    }

    #[test]
    fn thresholds() {
        let m = model(unit(), PerformanceMeasure::Identity);
        assert!((m.threshold_time(0.0).unwrap() - PI / 8.0).abs() < 1e-9);
        assert!(m.threshold_time(2f64.sqrt()).unwrap() < 1e-28);
        assert!((m.threshold_time(4.0).unwrap() - 49.0 * PI / 8.0).abs() < 1e-7);
        assert!((m.threshold_tolerance(0.0).unwrap() - 16.0 / PI).abs() < 1e-8);
        assert_eq!(m.threshold_tolerance(2f64.sqrt()).unwrap(), f64::INFINITY);

        let kappa = m.kappa2().sqrt();
        for &x in &[0.0, 0.7, 3.0, 9.0] {
            let lhs = m.threshold_tolerance(x).unwrap() * m.threshold_time(x).unwrap().sqrt();
            let rhs = 2.0 * kappa * (2.0 / PI).sqrt() / m.bias().mean().abs();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn threshold_time_increases_with_bias() {
        let m = model(unit(), PerformanceMeasure::Square);
        let mut pairs: Vec<(f64, f64)> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&x| (m.bias().h_c(x).unwrap().abs(), m.threshold_time(x).unwrap()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn tolerance_set_identity() {
        let m = model(unit(), PerformanceMeasure::Identity);
        let s = m.tolerance_set(0.1).unwrap();
        assert_eq!(s.intervals.len(), 1);
        assert_eq!(s.inf(), Some(0.0));
        assert!((s.sup().unwrap() - 10.19).abs() < 0.01, "{s:?}");
        assert!(m.threshold_tolerance(s.sup().unwrap() - 1e-6).unwrap() > 0.1);
        assert!(m.threshold_tolerance(s.sup().unwrap() + 1e-6).unwrap() < 0.1);
    }

    #[test]
    fn tolerance_figure_rows() {
        let m = model(unit(), PerformanceMeasure::Identity);
        let grid = [0.0, 2f64.sqrt(), 5.0, 12.0];
        let fig = m.tolerance_figure(&grid, 0.1).unwrap();
        assert!((fig.rows[0].eps_star.unwrap() - 16.0 / PI).abs() < 1e-8);
        assert_eq!(fig.rows[1].eps_star, None);
        assert!(fig.rows[3].eps_star.unwrap() < 0.1);
        assert_eq!(fig.crossings.len(), 1);
        assert!((fig.crossings[0] - 10.19).abs() < 0.01);
    }

    #[test]
    fn undefined_tolerance_for_zero_mean() {
        // f(x) = x - 1 has stationary mean zero at eta = 1
        let f = Tabulated::new(vec![(0.0, -1.0), (200.0, 199.0)]).unwrap();
        let m = model(unit(), PerformanceMeasure::Tabulated(f));
        assert_eq!(m.threshold_tolerance(0.0), Err(Error::UndefinedTolerance));
        assert!(m.threshold_time(0.0).unwrap() > 0.0);
    }
}
