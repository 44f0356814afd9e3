//! Built-in check suite run by `rbm-transient validate`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::distributional::DistributionalBias;
use crate::error::Result;
use crate::model::{stationary_density, InitialDistribution, PerformanceMeasure, RbmParams, WeightFunction};
use crate::montecarlo::{self, Scheme, SimConfig, KS_CRITICAL_1PCT};
use crate::mse::MseModel;
use crate::poisson::{good_states_functional, h_c_integral_formula, BiasFunction};
use crate::quad::{self, QuadSpec};
use crate::transition;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(id: u32, name: &str, passed: bool, detail: String) -> Self {
        Check {
            id,
            name: name.into(),
            passed,
            detail,
        }
    }

    fn from_result(id: u32, name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Check::new(id, name, passed, detail),
            Err(e) => Check::new(id, name, false, format!("error: {e}")),
        }
    }
}

/// One line per check.
pub fn render_text(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        out.push_str(&format!(
            "{} {:>2} {}: {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.detail
        ));
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    out.push_str(&format!("summary: {passed}/{} passed\n", checks.len()));
    out
}

/// Run the analytic checks, plus the Monte Carlo ones when `full` is set.
pub fn run_suite(full: bool) -> Vec<Check> {
    let mut checks = vec![
        Check::from_result(1, "functional good states", functional_endpoint()),
        Check::from_result(2, "distributional good states", distributional_endpoint()),
        Check::from_result(3, "threshold tolerance set", tolerance_interval()),
        Check::from_result(4, "scaling identities", scaling()),
        Check::from_result(5, "representation equivalence", representations()),
    ];
    checks.extend(self_consistency());
    checks.push(Check::from_result(9, "exact sampler law", sampler_ks()));
    if full {
        checks.extend(monte_carlo());
        checks.push(Check::from_result(10, "simulate determinism", determinism()));
    }
    checks.sort_by_key(|c| c.id);
    checks
}

fn unit() -> RbmParams {
    RbmParams::new(1.0, 2.0).expect("valid parameters")
}

fn spec() -> QuadSpec {
    QuadSpec::default()
}

/// Running maximum that keeps a NaN.
fn worse(acc: f64, v: f64) -> f64 {
    if acc.is_nan() || v.is_nan() {
        f64::NAN
    } else {
        acc.max(v)
    }
}

fn near(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

/// Right end of the good-state set for Identity at c = 1.
pub fn functional_endpoint() -> Result<(bool, String)> {
    let start = Instant::now();
    let b = BiasFunction::new(unit(), PerformanceMeasure::Identity, &spec())?;
    let set = good_states_functional(&b, 1.0)?;
    let secs = start.elapsed().as_secs_f64();
    let hi = set.sup().unwrap_or(f64::NAN);
    let ok = set.intervals.len() == 1 && set.intervals[0].lo == 0.0 && near(hi, 2.09, 0.01) && secs < 1.0;
    Ok((ok, format!("set [0, {hi:.6}] (target 2.09 +- 0.01) in {secs:.3} s")))
}

/// Right end of the distributional good-state set for w = 1 at c = 1.
pub fn distributional_endpoint() -> Result<(bool, String)> {
    let start = Instant::now();
    let p = unit();
    let d = DistributionalBias::new(p, WeightFunction::power(0.0)?, &spec())?;
    let set = d.good_states(1.0)?;
    let secs = start.elapsed().as_secs_f64();
    let hi = set.sup().unwrap_or(f64::NAN);
    let target = 1.84 * p.stationary_mean();
    let ok = set.intervals.len() == 1 && near(hi, target, 0.01) && secs < 10.0;
    Ok((ok, format!("right endpoint {hi:.6} (target {target} +- 0.01) in {secs:.3} s")))
}

/// `{x : eps*(x) >= 0.1}` for Identity.
pub fn tolerance_interval() -> Result<(bool, String)> {
    let start = Instant::now();
    let m = MseModel::new(BiasFunction::new(unit(), PerformanceMeasure::Identity, &spec())?)?;
    let set = m.tolerance_set(0.1)?;
    let secs = start.elapsed().as_secs_f64();
    let (lo, hi) = (set.inf().unwrap_or(f64::NAN), set.sup().unwrap_or(f64::NAN));
    let ok = set.intervals.len() == 1 && lo == 0.0 && near(hi, 10.19, 0.01) && secs < 1.0;
    Ok((ok, format!("set [{lo}, {hi:.6}] (target [0, 10.19] +- 0.01) in {secs:.3} s")))
}

fn endpoints(set: &crate::levelset::StateSet) -> Vec<f64> {
    set.intervals.iter().flat_map(|iv| [iv.lo, iv.hi]).collect()
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / y.abs().max(1e-12) })
        .fold(0.0, worse)
}

/// Good-state sets scale with the stationary mean.
pub fn scaling() -> Result<(bool, String)> {
    let base = unit();
    let cs = [0.5, 1.0, 2.0];
    let f_base = BiasFunction::new(base, PerformanceMeasure::Identity, &spec())?;
    let d_base: Vec<DistributionalBias> = [0.0, 1.0]
        .iter()
        .map(|&q| DistributionalBias::new(base, WeightFunction::power(q)?, &spec()))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (r, s2) in [(2.0, 2.0), (1.0, 8.0), (0.5, 1.0)] {
        let p = RbmParams::new(r, s2)?;
        let scale = p.stationary_mean() / base.stationary_mean();
        let b = BiasFunction::new(p, PerformanceMeasure::Identity, &spec())?;
        for &c in &cs {
            let want = endpoints(&good_states_functional(&f_base, c)?.scaled(scale));
            worst = worse(worst, rel_gap(&endpoints(&good_states_functional(&b, c)?), &want));
        }
        for db in &d_base {
            let d = DistributionalBias::new(p, *db.weight(), &spec())?;
            let want = endpoints(&db.good_states(1.0)?.scaled(scale));
            worst = worse(worst, rel_gap(&endpoints(&d.good_states(1.0)?), &want));
        }
    }
    Ok((worst <= 1e-6, format!("max relative endpoint error {worst:.3e} (limit 1e-6)")))
}

/// Closed-form density against the spectral representation.
pub fn representations() -> Result<(bool, String)> {
    let start = Instant::now();
    let p = unit();
    let grid = [0.0, 0.5, 1.0, 2.0, 5.0];
    let mut worst = 0.0f64;
    for t in [0.5, 1.0, 5.0, 20.0] {
        for &x in &grid {
            for &y in &grid {
                let a = transition::density(&p, t, x, y)?;
                let b = transition::density_spectral(&p, t, x, y, &spec())?;
                worst = worse(worst, (a - b).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst <= 1e-6 && secs < 30.0, format!("max |diff| {worst:.3e} (limit 1e-6) in {secs:.3} s")))
}

fn sub(id: &str, r: Result<(bool, String)>) -> (bool, String) {
    match r {
        Ok((ok, d)) => (ok, format!("{id} {d}")),
        Err(e) => (false, format!("{id} error: {e}")),
    }
}

/// Self-consistency checks, reported as one composite line.
pub fn self_consistency() -> Vec<Check> {
    let parts = [
        sub("normalization", normalization()),
        sub("chapman-kolmogorov", chapman_kolmogorov()),
        sub("detailed-balance", detailed_balance()),
        sub("poisson-residuals", poisson_residuals()),
        sub("centering", centering()),
        sub("closed-forms", closed_forms()),
        sub("coefficient-identity", coefficient_identity()),
    ];
    let passed = parts.iter().all(|(ok, _)| *ok);
    let detail = parts
        .iter()
        .map(|(ok, d)| format!("{}{d}", if *ok { "" } else { "FAILED " }))
        .collect::<Vec<_>>()
        .join("; ");
    vec![Check::new(6, "analytic self-consistency", passed, detail)]
}

fn measures() -> Vec<PerformanceMeasure> {
    vec![
        PerformanceMeasure::Identity,
        PerformanceMeasure::Square,
        PerformanceMeasure::Exponential { theta: 0.2 },
        PerformanceMeasure::indicator_above(1.0).expect("valid level"),
    ]
}

fn integrate_density<G: Fn(f64) -> f64>(g: G, x: f64, t: f64) -> Result<f64> {
    let sd = (2.0 * t).sqrt();
    let mut interior: Vec<f64> = [x - 8.0 * sd, x - 2.0 * sd, x, x + 2.0 * sd, x + 8.0 * sd]
        .into_iter()
        .filter(|&v| v > 0.0)
        .collect();
    interior.dedup();
    let spec = QuadSpec::new(1e-13, 1e-12)?;
    Ok(quad::integrate_pieces(g, &quad::pieces(0.0, &interior, f64::INFINITY), &spec)?.value)
}

fn normalization() -> Result<(bool, String)> {
    let p = unit();
    let mut worst = 0.0f64;
    for t in [0.01, 0.5, 1.0, 10.0] {
        for x in [0.0, 0.5, 3.0] {
            let mass = integrate_density(|y| transition::density(&p, t, x, y).unwrap_or(f64::NAN), x, t)?;
            worst = worse(worst, (mass - 1.0).abs());
        }
    }
    Ok((worst <= 1e-8, format!("{worst:.2e}")))
}

fn chapman_kolmogorov() -> Result<(bool, String)> {
    let p = unit();
    let mut worst = 0.0f64;
    for (s, t) in [(0.3, 0.7), (1.0, 2.0), (2.0, 5.0)] {
        for (x, z) in [(0.0, 0.0), (0.5, 2.0), (3.0, 1.0)] {
            let lhs = transition::density(&p, s + t, x, z)?;
            let rhs = integrate_density(
                |y| {
                    transition::density(&p, s, x, y).unwrap_or(f64::NAN)
                        * transition::density(&p, t, y, z).unwrap_or(f64::NAN)
                },
                x,
                s,
            )?;
            worst = worse(worst, (lhs - rhs).abs());
        }
    }
    Ok((worst <= 1e-6, format!("{worst:.2e}")))
}

fn detailed_balance() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (r, s2) in [(1.0, 2.0), (0.5, 1.0)] {
        let p = RbmParams::new(r, s2)?;
        for t in [0.1, 1.0, 10.0] {
            for (x, y) in [(0.0, 1.0), (0.5, 2.0), (3.0, 0.2)] {
                let a = stationary_density(&p, x)? * transition::density(&p, t, x, y)?;
                let b = stationary_density(&p, y)? * transition::density(&p, t, y, x)?;
                worst = worse(worst, (a - b).abs() / a.abs().max(b.abs()));
            }
        }
    }
    Ok((worst <= 1e-9, format!("{worst:.2e}")))
}

// (sigma^2/2) g'' - r g' + source by central differences, Richardson
// extrapolated over steps 1e-2 and 5e-3
fn generator_residual<G: Fn(f64) -> Result<f64>>(p: &RbmParams, g: G, source: f64, x: f64) -> Result<f64> {
    let at = |h: f64| -> Result<f64> {
        let (gm, g0, gp) = (g(x - h)?, g(x)?, g(x + h)?);
        let d2 = (gp - 2.0 * g0 + gm) / (h * h);
        let d1 = (gp - gm) / (2.0 * h);
        Ok(0.5 * p.sigma2() * d2 - p.r() * d1 + source)
    };
    let (coarse, fine) = (at(1e-2)?, at(5e-3)?);
    Ok((4.0 * fine - coarse) / 3.0)
}

fn poisson_residuals() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let xs = [0.3, 0.8, 1.5, 2.5, 4.0];
    for p in [unit(), RbmParams::new(2.0, 1.0)?] {
        for f in measures() {
            let b = BiasFunction::new(p, f.clone(), &spec())?;
            let mean = b.mean();
            for &x in &xs {
                let res = generator_residual(&p, |y| b.h_c(y), f.eval(x) - mean, x)?;
                worst = worse(worst, res.abs());
            }
            worst = worse(worst, b.h_c_prime(0.0)?.abs());
            if matches!(f, PerformanceMeasure::Exponential { .. }) {
                continue;
            }
            let m = MseModel::new(b.clone())?;
            let mean_slope2 = m.kappa2() / p.sigma2();
            for &x in &xs {
                let d = b.h_c_prime(x)?;
                let res = generator_residual(&p, |y| m.k_c(y), d * d - mean_slope2, x)?;
                worst = worse(worst, res.abs());
            }
        }
    }
    Ok((worst <= 1e-5, format!("{worst:.2e}")))
}

fn centering() -> Result<(bool, String)> {
    let p = unit();
    let pi = InitialDistribution::Stationary;
    let tight = QuadSpec::new(1e-12, 1e-11)?;
    let mut worst = 0.0f64;
    for f in measures() {
        let b = BiasFunction::new(p, f, &spec())?;
        let kinks = b.kinks();
        let eh = pi.expect(&p, |x| b.h_c(x).unwrap_or(f64::NAN), &kinks, &tight)?;
        worst = worse(worst, eh.abs());
        let m = MseModel::new(b)?;
        let ek = pi.expect(&p, |x| m.k_c(x).unwrap_or(f64::NAN), &kinks, &tight)?;
        worst = worse(worst, ek.abs());
    }
    Ok((worst <= 1e-8, format!("{worst:.2e}")))
}

fn closed_forms() -> Result<(bool, String)> {
    let p = unit();
    let mut worst = 0.0f64;
    for f in measures() {
        let b = BiasFunction::new(p, f.clone(), &spec())?;
        for x in [0.0, 0.5, 1.5, 3.0] {
            let direct = h_c_integral_formula(&p, &f, x, &spec())?;
            worst = worse(worst, (b.h_c(x)? - direct).abs());
        }
    }
    Ok((worst <= 1e-7, format!("{worst:.2e}")))
}

// t^-2 coefficient sigma^2 k_c + h_c^2 + E h_c^2 for Identity, as a quartic
fn identity_coefficient(r: f64, s2: f64, x: f64) -> f64 {
    (6.0 * r.powi(4) * x.powi(4) + 8.0 * r.powi(3) * s2 * x.powi(3) + 6.0 * r * r * s2 * s2 * x * x - 3.0 * s2.powi(4))
        / (24.0 * r.powi(6))
}

fn coefficient_identity() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (r, s2) in [(1.0, 2.0), (2.0, 0.5)] {
        let p = RbmParams::new(r, s2)?;
        let m = MseModel::new(BiasFunction::new(p, PerformanceMeasure::Identity, &spec())?)?;
        for x in [0.0, 0.5, 1.0, 2.0, 3.5, 6.0] {
            let d = m.mse_estimate(x, 1.0)?;
            let coef = s2 * d.k_c_x + d.h_c_sq + d.eh_c2;
            let want = identity_coefficient(r, s2, x);
            worst = worse(worst, (coef - want).abs() / want.abs().max(1.0));
        }
    }
    Ok((worst <= 1e-12, format!("{worst:.2e}")))
}

/// KS distance of exact transition draws at nine `(t, x)` pairs.
pub fn sampler_ks() -> Result<(bool, String)> {
    let start = Instant::now();
    let p = unit();
    let n = 100_000;
    let mut worst = 0.0f64;
    let mut seed = 11;
    for t in [0.1, 1.0, 10.0] {
        for x in [0.0, 1.0, 3.0] {
            let sample = montecarlo::sample_transitions(&p, t, x, n, seed)?;
            seed += 1;
            let d = montecarlo::ks_statistic(&sample, |y| transition::cdf(&p, t, x, y).unwrap_or(f64::NAN));
            worst = worse(worst, d * (n as f64).sqrt());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < KS_CRITICAL_1PCT && secs < 30.0,
        format!("max sqrt(n) D = {worst:.4} (critical {KS_CRITICAL_1PCT}) in {secs:.1} s"),
    ))
}

/// Configuration of the Monte Carlo bias and MSE run.
pub fn monte_carlo_config() -> SimConfig {
    SimConfig {
        seed: 20_240_101,
        dt: 1e-3,
        horizon: 50.0,
        replications: 60_000,
        antithetic: true,
        scheme: Scheme::Bridge,
    }
}

/// Bias constant and MSE at `t = 50` from `x0 = 0` for Identity.
pub fn monte_carlo() -> Vec<Check> {
    let run = || -> Result<(montecarlo::TimeAverageEstimate, montecarlo::MseEstimate, MseModel)> {
        let p = unit();
        let f = PerformanceMeasure::Identity;
        let cfg = monte_carlo_config();
        let reps = montecarlo::run_replications(&p, &f, 0.0, &cfg)?;
        let model = MseModel::new(BiasFunction::new(p, f, &spec())?)?;
        Ok((reps.time_average(1.0), reps.mse(1.0, 1000, cfg.seed), model))
    };
    match run() {
        Err(e) => vec![
            Check::new(7, "monte carlo bias constant", false, format!("error: {e}")),
            Check::new(8, "monte carlo mse", false, format!("error: {e}")),
        ],
        Ok((est, mse, model)) => {
            let (lo, hi) = est.bias_constant_ci(3.0);
            let half = 3.0 * est.bias_constant_se();
            let bias_ok = lo <= -1.0 && -1.0 <= hi && half < 0.15;
            let (mlo, mhi) = mse.ci(3.0);
            let paper = 4.0 / 50.0 - 2.0 / 2500.0;
            let corrected = model.mse_estimate(0.0, 50.0).map(|d| d.corrected_total).unwrap_or(f64::NAN);
            let mse_ok = mlo <= paper && paper <= mhi;
            let corrected_in = mlo <= corrected && corrected <= mhi;
            vec![
                Check::new(
                    7,
                    "monte carlo bias constant",
                    bias_ok,
                    format!(
                        "t(mean - 1) = {:.4} +- {half:.4} (3 se, {} replications), target -1, half-width limit 0.15",
                        est.bias_constant(),
                        monte_carlo_config().replications
                    ),
                ),
                Check::new(
                    8,
                    "monte carlo mse",
                    mse_ok,
                    format!(
                        "mse = {:.5} in [{mlo:.5}, {mhi:.5}]; four-term value {paper:.5} {}; with cross term {corrected:.5} {}",
                        mse.mse,
                        if mse_ok { "inside" } else { "outside" },
                        if corrected_in { "inside" } else { "outside" }
                    ),
                ),
            ]
        }
    }
}

/// Two identical `simulate` invocations give identical CSV bytes.
pub fn determinism() -> Result<(bool, String)> {
    use clap::Parser;
    let args = [
        "rbm-transient", "simulate", "--t", "10", "--dt", "0.01", "--replications", "400", "--seed", "7", "--antithetic",
    ];
    let once = || -> Result<String> {
        let cli = crate::cli::Cli::try_parse_from(args).map_err(|e| crate::Error::Config(e.to_string()))?;
        crate::cli::run(&cli)
            .map(|r| r.body)
            .map_err(|e| crate::Error::Config(e.message))
    };
    let (a, b) = (once()?, once()?);
    Ok((a == b, format!("{} bytes, identical: {}", a.len(), a == b)))
}
