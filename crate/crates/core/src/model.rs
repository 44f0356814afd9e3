//! Parameter and function types shared by the analysis modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, QuadSpec};

/// Drift magnitude `r` and variance rate `sigma2` of an RBM with drift `-r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    r: f64,
    sigma2: f64,
}

impl RbmParams {
    pub fn new(r: f64, sigma2: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("drift r must be finite and > 0, got {r}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain(format!(
                "variance rate sigma2 must be finite and > 0, got {sigma2}"
            )));
        }
        Ok(RbmParams { r, sigma2 })
    }

    /// Heavy-traffic approximation of a GI/G/m queue.
    pub fn from_queue(q: &QueueParams) -> Result<Self> {
        let capacity = q.m as f64 * q.mu;
        if capacity <= q.lambda {
            return Err(Error::UnstableQueue {
                capacity,
                lambda: q.lambda,
            });
        }
        let r = capacity - q.lambda;
        let sigma2 = q.lambda.powi(3) * q.var_a + q.m as f64 * q.mu.powi(3) * q.var_s;
        RbmParams::new(r, sigma2)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Rate of the exponential stationary law, `2r / sigma2`.
    pub fn eta(&self) -> f64 {
        2.0 * self.r / self.sigma2
    }

    /// Spectral gap `r^2 / (2 sigma2)`.
    pub fn gamma(&self) -> f64 {
        self.r * self.r / (2.0 * self.sigma2)
    }

    /// `E X(inf) = sigma2 / (2r)`.
    pub fn stationary_mean(&self) -> f64 {
        self.sigma2 / (2.0 * self.r)
    }
}

/// Renewal arrivals to `m` identical servers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    pub lambda: f64,
    pub mu: f64,
    pub m: u32,
    pub var_a: f64,
    pub var_s: f64,
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64, m: u32, var_a: f64, var_s: f64) -> Result<Self> {
        if !(lambda > 0.0 && mu > 0.0) {
            return Err(Error::Domain(format!(
                "arrival and service rates must be > 0 (lambda = {lambda}, mu = {mu})"
            )));
        }
        if m == 0 {
            return Err(Error::Domain("server count must be >= 1".into()));
        }
        if !(var_a >= 0.0 && var_s >= 0.0) {
            return Err(Error::Domain("variances must be >= 0".into()));
        }
        Ok(QueueParams {
            lambda,
            mu,
            m,
            var_a,
            var_s,
        })
    }
}

/// Piecewise-linear function on a strictly increasing grid, held constant
/// outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Tabulated {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("a tabulated function needs at least two points".into()));
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("tabulated values must be finite".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("tabulated grid must be strictly increasing".into()));
        }
        Ok(Tabulated { xs, ys })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + w * (self.ys[i + 1] - self.ys[i])
    }
}

/// The function `f` whose time average is being estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerformanceMeasure {
    Identity,
    Square,
    /// `e^{theta x}`; requires `theta < eta` for whichever parameters it is
    /// used with.
    Exponential { theta: f64 },
    /// `I(x > b)`.
    IndicatorAbove { b: f64 },
    Tabulated(Tabulated),
}

impl PerformanceMeasure {
    pub fn indicator_above(b: f64) -> Result<Self> {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!("indicator level must be >= 0, got {b}")));
        }
        Ok(PerformanceMeasure::IndicatorAbove { b })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PerformanceMeasure::Identity => x,
            PerformanceMeasure::Square => x * x,
            PerformanceMeasure::Exponential { theta } => (theta * x).exp(),
            PerformanceMeasure::IndicatorAbove { b } => {
                if x > *b {
                    1.0
                } else {
                    0.0
                }
            }
            PerformanceMeasure::Tabulated(t) => t.eval(x),
        }
    }

    /// Check that `f` has a finite stationary expectation under `p`.
    pub fn check(&self, p: &RbmParams) -> Result<()> {
        if let PerformanceMeasure::Exponential { theta } = self {
            if !theta.is_finite() || *theta >= p.eta() {
                return Err(Error::Divergence(format!(
                    "exponential measure needs theta < eta = {}, got {theta}",
                    p.eta()
                )));
            }
        }
        Ok(())
    }

    /// Points where `f` is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            PerformanceMeasure::IndicatorAbove { b } => vec![*b],
            PerformanceMeasure::Tabulated(t) => t.nodes().to_vec(),
            _ => Vec::new(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PerformanceMeasure::Identity => "identity".into(),
            PerformanceMeasure::Square => "square".into(),
            PerformanceMeasure::Exponential { theta } => format!("exponential(theta={theta})"),
            PerformanceMeasure::IndicatorAbove { b } => format!("indicator(b={b})"),
            PerformanceMeasure::Tabulated(t) => format!("tabulated({} points)", t.nodes().len()),
        }
    }
}

/// Piecewise-linear density on a grid in `[0, inf)`, zero outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    table: Tabulated,
}

/// Allowed deviation of a tabulated density's total mass from one.
pub const DENSITY_MASS_TOL: f64 = 1e-6;

impl TabulatedDensity {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let table = Tabulated::new(points)?;
        if table.nodes()[0] < 0.0 {
            return Err(Error::Domain("density support must lie in [0, inf)".into()));
        }
        if table.values().iter().any(|&d| d < 0.0) {
            return Err(Error::Domain("density values must be >= 0".into()));
        }
        let density = TabulatedDensity { table };
        let mass = density.mass();
        if (mass - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(Error::Domain(format!(
                "tabulated density integrates to {mass}, not 1"
            )));
        }
        Ok(density)
    }

    /// Total mass; the trapezoid rule is exact for piecewise-linear data.
    pub fn mass(&self) -> f64 {
        let (xs, ys) = (self.table.nodes(), self.table.values());
        xs.windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    pub fn nodes(&self) -> &[f64] {
        self.table.nodes()
    }

    pub fn density(&self, x: f64) -> f64 {
        let xs = self.table.nodes();
        if x < xs[0] || x > xs[xs.len() - 1] {
            0.0
        } else {
            self.table.eval(x)
        }
    }
}

/// Law of `X(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    PointMass { x: f64 },
    Stationary,
    TabulatedDensity(TabulatedDensity),
}

impl InitialDistribution {
    pub fn point_mass(x: f64) -> Result<Self> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::Domain(format!("point mass must sit in [0, inf), got {x}")));
        }
        Ok(InitialDistribution::PointMass { x })
    }

    /// Integrate `g` against this distribution (stationary law taken from `p`).
    pub fn expect<G: Fn(f64) -> f64>(
        &self,
        p: &RbmParams,
        g: G,
        kinks: &[f64],
        spec: &QuadSpec,
    ) -> Result<f64> {
        match self {
            InitialDistribution::PointMass { x } => Ok(g(*x)),
            InitialDistribution::Stationary => {
                let eta = p.eta();
                let pts = quad::pieces(0.0, kinks, f64::INFINITY);
                let spec = spec.with_tail_width(p.stationary_mean());
                Ok(quad::integrate_pieces(|x| g(x) * eta * (-eta * x).exp(), &pts, &spec)?.value)
            }
            InitialDistribution::TabulatedDensity(d) => {
                let nodes = d.nodes();
                let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
                let mut interior = nodes.to_vec();
                interior.extend_from_slice(kinks);
                let pts = quad::pieces(lo, &interior, hi);
                Ok(quad::integrate_pieces(|x| g(x) * d.density(x), &pts, spec)?.value)
            }
        }
    }
}

/// Weight `w` bounding the test functions in the distributional bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFunction {
    /// `y^p`; `Power { p: 0.0 }` is the constant weight.
    Power { p: f64 },
    /// `e^{theta y}`; requires `theta < eta` at use sites.
    Exponential { theta: f64 },
}

impl WeightFunction {
    pub fn power(p: f64) -> Result<Self> {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!("power weight needs p >= 0, got {p}")));
        }
        Ok(WeightFunction::Power { p })
    }

    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            WeightFunction::Power { p } => {
                if p == 0.0 {
                    1.0
                } else {
                    y.powf(p)
                }
            }
            WeightFunction::Exponential { theta } => (theta * y).exp(),
        }
    }

    pub fn check(&self, p: &RbmParams) -> Result<()> {
        match *self {
            WeightFunction::Power { p: pow } if !(pow >= 0.0) => {
                Err(Error::Domain(format!("power weight needs p >= 0, got {pow}")))
            }
            WeightFunction::Exponential { theta } if !(theta < p.eta()) => Err(Error::Divergence(
                format!("exponential weight needs theta < eta = {}, got {theta}", p.eta()),
            )),
            _ => Ok(()),
        }
    }
}

/// Stationary density `eta e^{-eta x}`.
pub fn stationary_density(p: &RbmParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("state must be >= 0, got {x}")));
    }
    let eta = p.eta();
    Ok(eta * (-eta * x).exp())
}

/// `E f(X(inf))` under the exponential stationary law.
pub fn equilibrium_expectation(
    p: &RbmParams,
    f: &PerformanceMeasure,
    spec: &QuadSpec,
) -> Result<f64> {
    f.check(p)?;
    let eta = p.eta();
    Ok(match f {
        PerformanceMeasure::Identity => 1.0 / eta,
        PerformanceMeasure::Square => 2.0 / (eta * eta),
        PerformanceMeasure::Exponential { theta } => eta / (eta - theta),
        PerformanceMeasure::IndicatorAbove { b } => (-eta * b).exp(),
        PerformanceMeasure::Tabulated(t) => InitialDistribution::Stationary.expect(
            p,
            |x| t.eval(x),
            t.nodes(),
            spec,
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> RbmParams {
        RbmParams::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn derived_constants() {
        let p = unit();
        assert_eq!(p.eta(), 1.0);
        assert_eq!(p.gamma(), 0.25);
        assert_eq!(p.stationary_mean(), 1.0);
        let q = RbmParams::new(0.3, 1.7).unwrap();
        assert!((q.eta() * q.stationary_mean() - 1.0).abs() < 1e-15);
        assert_eq!(q.gamma(), 0.3 * 0.3 / (2.0 * 1.7));
    }

    #[test]
    fn rejects_degenerate_params() {
        assert!(RbmParams::new(0.0, 1.0).is_err());
        assert!(RbmParams::new(1.0, 0.0).is_err());
        assert!(RbmParams::new(-1.0, 1.0).is_err());
        assert!(RbmParams::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn queue_mapping() {
        let q = QueueParams::new(1.0, 1.1, 1, 1.0, 1.0 / 1.21).unwrap();
        let p = RbmParams::from_queue(&q).unwrap();
        assert!((p.r() - 0.1).abs() < 1e-12);
        assert!((p.sigma2() - 2.1).abs() < 1e-12);

        let q = QueueParams::new(2.0, 1.0, 3, 0.25, 1.0).unwrap();
        let p = RbmParams::from_queue(&q).unwrap();
        assert_eq!(p.r(), 1.0);
        assert_eq!(p.sigma2(), 5.0);
    }

    #[test]
    fn queue_mapping_errors() {
        let deterministic = QueueParams::new(1.0, 2.0, 1, 0.0, 0.0).unwrap();
        assert!(matches!(
            RbmParams::from_queue(&deterministic),
            Err(Error::Domain(_))
        ));
        let overloaded = QueueParams::new(2.0, 1.0, 2, 1.0, 1.0).unwrap();
        assert!(matches!(
            RbmParams::from_queue(&overloaded),
            Err(Error::UnstableQueue { .. })
        ));
        assert!(QueueParams::new(0.0, 1.0, 1, 1.0, 1.0).is_err());
        assert!(QueueParams::new(1.0, 1.0, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn stationary_density_values() {
        assert_eq!(stationary_density(&unit(), 0.0).unwrap(), 1.0);
        assert!((stationary_density(&unit(), 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let half = RbmParams::new(0.5, 1.0).unwrap();
        assert_eq!(stationary_density(&half, 0.0).unwrap(), 1.0);
        assert!(stationary_density(&unit(), -0.1).is_err());
    }

    #[test]
    fn stationary_density_normalized() {
        for &(r, s2) in &[(1.0, 2.0), (0.2, 3.0), (4.0, 0.5)] {
            let p = RbmParams::new(r, s2).unwrap();
            let spec = QuadSpec::default().with_tail_width(p.stationary_mean());
            let mass = quad::integrate(
                |x| stationary_density(&p, x).unwrap(),
                0.0,
                f64::INFINITY,
                &spec,
            )
            .unwrap();
            assert!((mass.value - 1.0).abs() < 1e-10, "{r} {s2}: {}", mass.value);
        }
    }

    #[test]
    fn equilibrium_expectations() {
        let p = unit();
        let spec = QuadSpec::default();
        let ev = |f: &PerformanceMeasure| equilibrium_expectation(&p, f, &spec).unwrap();
        assert_eq!(ev(&PerformanceMeasure::Identity), 1.0);
        assert_eq!(ev(&PerformanceMeasure::Square), 2.0);
        assert!((ev(&PerformanceMeasure::IndicatorAbove { b: 1.0 }) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(ev(&PerformanceMeasure::Exponential { theta: 0.5 }), 2.0);
        let q = RbmParams::new(0.7, 1.3).unwrap();
        let mean = equilibrium_expectation(&q, &PerformanceMeasure::Identity, &spec).unwrap();
        assert!((mean - q.stationary_mean()).abs() < 1e-15);
    }

    #[test]
    fn exponential_measure_rechecked_per_params() {
        let f = PerformanceMeasure::Exponential { theta: 0.8 };
        let spec = QuadSpec::default();
        assert!(equilibrium_expectation(&unit(), &f, &spec).is_ok());
        let slow = RbmParams::new(0.5, 2.0).unwrap();
        assert!(matches!(
            equilibrium_expectation(&slow, &f, &spec),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn tabulated_identity_matches_closed_form() {
        // identity on [0, 60], constant beyond: the tail above 60 is e^{-60}-small
        let pts: Vec<(f64, f64)> = (0..=600).map(|i| (i as f64 * 0.1, i as f64 * 0.1)).collect();
        let f = PerformanceMeasure::Tabulated(Tabulated::new(pts).unwrap());
        let v = equilibrium_expectation(&unit(), &f, &QuadSpec::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn tabulated_interpolation_rules() {
        let t = Tabulated::new(vec![(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)]).unwrap();
        assert_eq!(t.eval(-1.0), 1.0);
        assert_eq!(t.eval(0.5), 2.0);
        assert_eq!(t.eval(1.5), 2.5);
        assert_eq!(t.eval(9.0), 2.0);
        assert!(Tabulated::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(Tabulated::new(vec![(1.0, 1.0), (0.5, 2.0)]).is_err());
    }

    #[test]
    fn tabulated_density_validation() {
        let tri = TabulatedDensity::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!(tri.mass(), 1.0);
        assert_eq!(tri.density(3.0), 0.0);
        assert!(TabulatedDensity::new(vec![(0.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(TabulatedDensity::new(vec![(-1.0, 0.5), (1.0, 0.5)]).is_err());
    }

    #[test]
    fn weights() {
        assert_eq!(WeightFunction::power(0.0).unwrap().eval(123.0), 1.0);
        assert_eq!(WeightFunction::Power { p: 2.0 }.eval(3.0), 9.0);
        assert!(WeightFunction::power(-1.0).is_err());
        let w = WeightFunction::Exponential { theta: 1.0 };
        assert!(w.check(&unit()).is_err());
        assert!(WeightFunction::Exponential { theta: 0.5 }.check(&unit()).is_ok());
    }
}
