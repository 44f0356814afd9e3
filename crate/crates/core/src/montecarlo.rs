//! Monte Carlo oracle: exact draws from the transition law, reflected path
//! simulation on a time grid, and replication estimators for the time
//! average `alpha(t) = t^{-1} int_0^t f(X(s)) ds`.
//!
//! Replication `k` draws from the ChaCha8 stream `k` of the configured seed
//! (with antithetic pairs sharing a stream and negating its normals), and
//! results are reduced by pairwise summation in replication order, so output
//! does not depend on the number of worker threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PerformanceMeasure, RbmParams};
use crate::quad::find_root;
use crate::special::norm_inv;
use crate::transition;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "RBM_TRANSIENT_THREADS";

/// Kolmogorov distribution quantile for a 1% two-sided test.
pub const KS_CRITICAL_1PCT: f64 = 1.628;

/// Time stepping of the reflected path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `X_{k+1} = max(X_k + Y_k, 0)` with `Y_k ~ N(-r dt, sigma^2 dt)`.
    /// Time averages carry an `O(sqrt(dt))` bias from missed excursions
    /// below zero between grid points.
    Lindley,
    /// Lindley step with the reflection taken against the exact minimum of
    /// the Brownian bridge between grid points, `X_{k+1} = max(X_k + Y_k,
    /// Y_k - M_k)`. Grid values have exactly the law of the reflected process.
    Bridge,
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub replications: usize,
    pub antithetic: bool,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn validated(self) -> Result<Self> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be finite and >= dt = {}, got {}",
                self.dt, self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.antithetic && !self.replications.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "antithetic sampling needs an even replication count, got {}",
                self.replications
            )));
        }
        Ok(self)
    }

    /// Number of grid steps; the step actually used is `horizon / steps`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    /// Independent units: antithetic pairs count once.
    pub fn units(&self) -> usize {
        if self.antithetic {
            self.replications / 2
        } else {
            self.replications
        }
    }
}

/// Uniform on `(0, 1)` from the top 52 bits, never 0 or 1.
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) / (1u64 << 52) as f64
}

/// Standard normal by inversion.
pub fn normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    norm_inv(open_uniform(rng))
}

/// Random stream for one independent unit.
pub fn unit_rng(seed: u64, unit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit);
    rng
}

/// Exact draw of `X(t)` given `X(0) = x` by inverting the transition CDF.
pub fn sample_transition<R: RngCore + ?Sized>(p: &RbmParams, t: f64, x: f64, rng: &mut R) -> Result<f64> {
    let u = open_uniform(rng);
    invert_transition(p, t, x, u)
}

/// Quantile of the transition law: `y` with `F(t, x, y) = u`.
pub fn invert_transition(p: &RbmParams, t: f64, x: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InversionFailure(u));
    }
    // solve in whichever tail keeps precision
    let g = |y: f64| -> f64 {
        if u <= 0.5 {
            transition::cdf(p, t, x, y).map(|c| c - u).unwrap_or(f64::NAN)
        } else {
            transition::survival(p, t, x, y).map(|s| (1.0 - u) - s).unwrap_or(f64::NAN)
        }
    };
    let g0 = g(0.0);
    if g0.is_nan() {
        transition::cdf(p, t, x, 0.0)?;
        return Err(Error::InversionFailure(u));
    }
    let mut hi = x + p.stationary_mean() + p.sigma() * t.sqrt();
    let mut tries = 0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 200 || !hi.is_finite() {
            return Err(Error::InversionFailure(u));
        }
    }
    let tol = 1e-13 * hi;
    find_root(g, 0.0, hi, tol).map_err(|_| Error::InversionFailure(u))
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Normal increment and bridge uniform for one grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDraw {
    pub z: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy)]
struct Stepper {
    drift: f64,
    scale: f64,
    var: f64,
    scheme: Scheme,
}

impl Stepper {
    fn new(p: &RbmParams, dt: f64, scheme: Scheme) -> Self {
        Stepper {
            drift: -p.r() * dt,
            scale: (p.sigma2() * dt).sqrt(),
            var: p.sigma2() * dt,
            scheme,
        }
    }

    // next state and local-time increment
    #[inline]
    fn step(&self, x: f64, d: StepDraw) -> (f64, f64) {
        let y = self.drift + self.scale * d.z;
        let low = match self.scheme {
            Scheme::Lindley => y,
            Scheme::Bridge => 0.5 * (y - (y * y - 2.0 * self.var * d.u.ln()).sqrt()),
        };
        let push = (-(x + low)).max(0.0);
        (x + y + push, push)
    }
}

/// Simulated path on the time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub local_time: Vec<f64>,
}

/// Path driven by an explicit sequence of step draws.
pub fn simulate_path_with<D: FnMut() -> StepDraw>(
    p: &RbmParams,
    x0: f64,
    cfg: &SimConfig,
    mut draw: D,
) -> Result<PathSample> {
    let cfg = cfg.validated()?;
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(Error::Domain(format!("initial state must be >= 0, got {x0}")));
    }
    let n = cfg.steps();
    let dt = cfg.step();
    let stepper = Stepper::new(p, dt, cfg.scheme);
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut local_time = Vec::with_capacity(n + 1);
    let (mut x, mut l) = (x0, 0.0);
    times.push(0.0);
    states.push(x);
    local_time.push(l);
    for k in 1..=n {
        let (nx, dl) = stepper.step(x, draw());
        x = nx;
        l += dl;
        times.push(k as f64 * dt);
        states.push(x);
        local_time.push(l);
    }
    Ok(PathSample {
        times,
        states,
        local_time,
    })
}

pub fn simulate_path<R: RngCore + ?Sized>(
    p: &RbmParams,
    x0: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PathSample> {
    simulate_path_with(p, x0, cfg, || StepDraw {
        z: normal(rng),
        u: open_uniform(rng),
    })
}

// trapezoidal time average along one path, without storing it
fn time_average<D: FnMut() -> StepDraw>(
    f: &PerformanceMeasure,
    x0: f64,
    n: usize,
    dt: f64,
    stepper: &Stepper,
    mut draw: D,
) -> f64 {
    let mut x = x0;
    let mut fx = f.eval(x);
    let mut acc = 0.5 * fx;
    for _ in 1..n {
        x = stepper.step(x, draw()).0;
        fx = f.eval(x);
        acc += fx;
    }
    x = stepper.step(x, draw()).0;
    acc += 0.5 * f.eval(x);
    let _ = fx;
    acc * dt / (n as f64 * dt)
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1.0))
}

/// Worker pool honoring `RBM_TRANSIENT_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be >= 1")));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Time averages `alpha(t)` of every replication, grouped by independent
/// unit (one value per unit, or an antithetic pair per unit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replications {
    pub config: SimConfig,
    pub x0: f64,
    pub alphas: Vec<f64>,
}

impl Replications {
    fn unit_values<G: Fn(f64) -> f64>(&self, g: G) -> Vec<f64> {
        if self.config.antithetic {
            self.alphas
                .chunks(2)
                .map(|c| 0.5 * (g(c[0]) + g(c[1])))
                .collect()
        } else {
            self.alphas.iter().map(|&a| g(a)).collect()
        }
    }

    /// Replication mean of `alpha(t)` with its bias constant against the
    /// stationary value `target`.
    pub fn time_average(&self, target: f64) -> TimeAverageEstimate {
        let units = self.unit_values(|a| a);
        let (mean, unit_var) = mean_and_var(&units);
        let (_, variance) = mean_and_var(&self.alphas);
        TimeAverageEstimate {
            horizon: self.config.horizon,
            target,
            mean,
            std_error: (unit_var / units.len() as f64).sqrt(),
            variance,
            units: units.len(),
        }
    }

    /// Mean of `(alpha(t) - target)^2` with a bootstrap standard error
    /// over independent units.
    pub fn mse(&self, target: f64, resamples: usize, seed: u64) -> MseEstimate {
        let units = self.unit_values(|a| (a - target) * (a - target));
        let (mse, _) = mean_and_var(&units);
        MseEstimate {
            horizon: self.config.horizon,
            mse,
            bootstrap_se: bootstrap_se(&units, resamples, seed),
            units: units.len(),
        }
    }
}

/// Standard deviation of the resampled mean.
pub fn bootstrap_se(values: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = values.len();
    if n < 2 || resamples < 2 {
        return f64::NAN;
    }
    let mut rng = unit_rng(seed, u64::MAX);
    let means: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<f64> = (0..n).map(|_| values[rng.gen_range(0..n)]).collect();
            pairwise_sum(&draw) / n as f64
        })
        .collect();
    mean_and_var(&means).1.sqrt()
}

/// Summary of the replication mean of `alpha(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAverageEstimate {
    pub horizon: f64,
    pub target: f64,
    pub mean: f64,
    pub std_error: f64,
    /// Sample variance of a single replication's `alpha(t)`.
    pub variance: f64,
    pub units: usize,
}

impl TimeAverageEstimate {
    /// `t (mean - target)`, the estimate of `h_c(x0)`.
    pub fn bias_constant(&self) -> f64 {
        self.horizon * (self.mean - self.target)
    }

    pub fn bias_constant_se(&self) -> f64 {
        self.horizon * self.std_error
    }

    /// `t Var(alpha(t))`, the estimate of `kappa^2` for large `t`.
    pub fn scaled_variance(&self) -> f64 {
        self.horizon * self.variance
    }

    /// Normal-theory interval `bias_constant +- z se`.
    pub fn bias_constant_ci(&self, z: f64) -> (f64, f64) {
        let (c, h) = (self.bias_constant(), z * self.bias_constant_se());
        (c - h, c + h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub horizon: f64,
    pub mse: f64,
    pub bootstrap_se: f64,
    pub units: usize,
}

impl MseEstimate {
    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.mse - z * self.bootstrap_se, self.mse + z * self.bootstrap_se)
    }
}

/// Run every replication of `alpha(t)` from `x0`.
pub fn run_replications(
    p: &RbmParams,
    f: &PerformanceMeasure,
    x0: f64,
    cfg: &SimConfig,
) -> Result<Replications> {
    let cfg = cfg.validated()?;
    f.check(p)?;
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(Error::Domain(format!("initial state must be >= 0, got {x0}")));
    }
    let n = cfg.steps();
    let dt = cfg.step();
    let stepper = Stepper::new(p, dt, cfg.scheme);
    let pool = thread_pool()?;
    let per_unit: Vec<Vec<f64>> = pool.install(|| {
        (0..cfg.units() as u64)
            .into_par_iter()
            .map(|unit| {
                let run = |sign: f64| {
                    let mut rng = unit_rng(cfg.seed, unit);
                    time_average(f, x0, n, dt, &stepper, || StepDraw {
                        z: sign * normal(&mut rng),
                        u: open_uniform(&mut rng),
                    })
                };
                if cfg.antithetic {
                    vec![run(1.0), run(-1.0)]
                } else {
                    vec![run(1.0)]
                }
            })
            .collect()
    });
    Ok(Replications {
        config: cfg,
        x0,
        alphas: per_unit.into_iter().flatten().collect(),
    })
}

pub fn estimate_time_average(
    p: &RbmParams,
    f: &PerformanceMeasure,
    x0: f64,
    cfg: &SimConfig,
    target: f64,
) -> Result<TimeAverageEstimate> {
    Ok(run_replications(p, f, x0, cfg)?.time_average(target))
}

pub fn empirical_mse(
    p: &RbmParams,
    f: &PerformanceMeasure,
    x0: f64,
    cfg: &SimConfig,
    target: f64,
    resamples: usize,
) -> Result<MseEstimate> {
    let cfg = cfg.validated()?;
    Ok(run_replications(p, f, x0, &cfg)?.mse(target, resamples, cfg.seed))
}

/// Independent exact draws of `X(t)` from `x`, one stream per draw block.
pub fn sample_transitions(p: &RbmParams, t: f64, x: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    const BLOCK: usize = 1024;
    let pool = thread_pool()?;
    let blocks: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..n.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let mut rng = unit_rng(seed, b as u64);
                let len = BLOCK.min(n - b * BLOCK);
                (0..len).map(|_| sample_transition(p, t, x, &mut rng)).collect()
            })
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> RbmParams {
        RbmParams::new(1.0, 2.0).unwrap()
    }

    fn cfg(dt: f64, horizon: f64, replications: usize, scheme: Scheme) -> SimConfig {
        SimConfig {
            seed: 7,
            dt,
            horizon,
            replications,
            antithetic: false,
            scheme,
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.0, 1.0, 1, Scheme::Lindley).validated().is_err());
        assert!(cfg(0.1, 0.01, 1, Scheme::Lindley).validated().is_err());
        assert!(cfg(0.1, 1.0, 0, Scheme::Lindley).validated().is_err());
        let mut c = cfg(0.1, 1.0, 3, Scheme::Lindley);
        c.antithetic = true;
        assert!(c.validated().is_err());
        assert_eq!(cfg(0.001, 50.0, 1, Scheme::Bridge).steps(), 50_000);
    }

    #[test]
    fn uniforms_stay_open() {
        struct Fixed(u64);
        impl RngCore for Fixed {
            fn next_u32(&mut self) -> u32 {
                self.0 as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {}
            fn try_fill_bytes(&mut self, _: &mut [u8]) -> std::result::Result<(), rand::Error> {
                Ok(())
            }
        }
        assert!(open_uniform(&mut Fixed(0)) > 0.0);
        assert!(open_uniform(&mut Fixed(u64::MAX)) < 1.0);
        assert!(normal(&mut Fixed(u64::MAX)).is_finite());
    }

    #[test]
    fn inversion_hits_requested_quantile() {
        let p = unit();
        for &(t, x) in &[(0.25, 0.0), (1.0, 1.0), (5.0, 3.0)] {
            for &u in &[1e-9, 0.01, 0.5, 0.93, 1.0 - 1e-9] {
                let y = invert_transition(&p, t, x, u).unwrap();
                let back = if u <= 0.5 {
                    transition::cdf(&p, t, x, y).unwrap() - u
                } else {
                    (1.0 - u) - transition::survival(&p, t, x, y).unwrap()
                };
                assert!(back.abs() < 1e-11, "t={t} x={x} u={u}: {back}");
            }
        }
        assert!(invert_transition(&p, 1.0, 1.0, 0.0).is_err());
        assert!(invert_transition(&p, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn exact_sampler_passes_ks() {
        let p = unit();
        let n = 20_000;
        for &(t, x) in &[(0.25, 0.0), (1.0, 1.0), (5.0, 3.0)] {
            let draws = sample_transitions(&p, t, x, n, 3).unwrap();
            let d = ks_statistic(&draws, |y| transition::cdf(&p, t, x, y).unwrap());
            assert!(d < KS_CRITICAL_1PCT / (n as f64).sqrt(), "t={t} x={x}: {d}");
        }
    }

    #[test]
    fn ks_detects_wrong_law() {
        let p = unit();
        let draws = sample_transitions(&p, 1.0, 1.0, 5000, 3).unwrap();
        let d = ks_statistic(&draws, |y| transition::cdf(&p, 1.0, 0.0, y).unwrap());
        assert!(d > KS_CRITICAL_1PCT / (5000f64).sqrt());
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = unit();
        let a = sample_transitions(&p, 1.0, 1.0, 3000, 42).unwrap();
        let b = sample_transitions(&p, 1.0, 1.0, 3000, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_transitions(&p, 1.0, 1.0, 3000, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stationary_mean_from_exact_draws() {
        let p = unit();
        let n = 200_000;
        let draws = sample_transitions(&p, 20.0, 0.0, n, 9).unwrap();
        let (m, v) = mean_and_var(&draws);
        assert!((m - 1.0).abs() < 3.0 * (v / n as f64).sqrt(), "{m}");
    }

    #[test]
    fn degenerate_noise_follows_drift() {
        let p = unit();
        for scheme in [Scheme::Lindley, Scheme::Bridge] {
            let path = simulate_path_with(&p, 1.0, &cfg(0.01, 2.0, 1, scheme), || StepDraw { z: 0.0, u: 1.0 })
                .unwrap();
            for ((t, x), l) in path.times.iter().zip(&path.states).zip(&path.local_time) {
                assert!((x - (1.0 - t).max(0.0)).abs() < 1e-12, "{scheme:?} t={t}");
                assert!((l - (t - 1.0).max(0.0)).abs() < 1e-9, "{scheme:?} t={t}");
            }
        }
    }

    #[test]
    fn path_invariants() {
        let p = unit();
        for scheme in [Scheme::Lindley, Scheme::Bridge] {
            let c = cfg(1e-3, 20.0, 1, scheme);
            let mut rng = unit_rng(5, 0);
            let path = simulate_path(&p, 0.5, &c, &mut rng).unwrap();
            assert_eq!(path.states.len(), c.steps() + 1);
            assert!(path.states.iter().all(|&x| x >= 0.0));
            for k in 1..path.states.len() {
                let dl = path.local_time[k] - path.local_time[k - 1];
                assert!(dl >= 0.0);
                if scheme == Scheme::Lindley && dl > 0.0 {
                    // reflected exactly when the free step went below zero
                    assert_eq!(path.states[k], 0.0);
                }
                if path.states[k] > 0.0 && scheme == Scheme::Lindley {
                    assert_eq!(dl, 0.0);
                }
            }
            assert!(*path.local_time.last().unwrap() > 0.0);
        }
    }

    #[test]
    fn replay_from_same_stream() {
        let p = unit();
        let c = cfg(1e-2, 5.0, 1, Scheme::Bridge);
        let a = simulate_path(&p, 0.0, &c, &mut unit_rng(1, 4)).unwrap();
        let b = simulate_path(&p, 0.0, &c, &mut unit_rng(1, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replications_are_reproducible_and_thread_independent() {
        let p = unit();
        let mut c = cfg(1e-2, 5.0, 64, Scheme::Bridge);
        c.antithetic = true;
        let a = run_replications(&p, &PerformanceMeasure::Identity, 0.0, &c).unwrap();
        let b = run_replications(&p, &PerformanceMeasure::Identity, 0.0, &c).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq: Vec<f64> = single.install(|| {
            (0..32u64)
                .flat_map(|unit| {
                    [1.0, -1.0].map(|sign| {
                        let mut rng = unit_rng(c.seed, unit);
                        let s = Stepper::new(&p, c.step(), c.scheme);
                        time_average(&PerformanceMeasure::Identity, 0.0, c.steps(), c.step(), &s, || StepDraw {
                            z: sign * normal(&mut rng),
                            u: open_uniform(&mut rng),
                        })
                    })
                })
                .collect()
        });
        assert_eq!(a.alphas, seq);
    }

    #[test]
    fn trapezoid_average_of_deterministic_path() {
        let p = unit();
        let s = Stepper::new(&p, 0.01, Scheme::Lindley);
        // path 1 - t on [0, 1], exact trapezoid for a linear path
        let a = time_average(&PerformanceMeasure::Identity, 1.0, 100, 0.01, &s, || StepDraw { z: 0.0, u: 1.0 });
        assert!((a - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches() {
        let xs: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn bootstrap_se_matches_normal_theory() {
        let mut rng = unit_rng(2, 0);
        let xs: Vec<f64> = (0..2000).map(|_| normal(&mut rng)).collect();
        let se = bootstrap_se(&xs, 500, 1);
        let (_, v) = mean_and_var(&xs);
        let nt = (v / 2000.0).sqrt();
        assert!((se / nt - 1.0).abs() < 0.15, "{se} vs {nt}");
    }

    #[test]
    fn long_path_time_average_is_ergodic() {
        let p = unit();
        let c = cfg(1e-3, 2000.0, 4, Scheme::Bridge);
        let est = estimate_time_average(&p, &PerformanceMeasure::Identity, 1.0, &c, 1.0).unwrap();
        // four paths of length 2000: se of the mean is about sqrt(4 / 8000)
        assert!((est.mean - 1.0).abs() < 4.0 * (4.0 / 8000.0f64).sqrt(), "{}", est.mean);
    }

    // trapezoidal average of a Lindley path whose steps aggregate `factor`
    // fine normals, so every grid sees the same Brownian path
    fn coupled_lindley_average(p: &RbmParams, fine: f64, factor: usize, horizon: f64, stream: u64) -> f64 {
        let mut rng = unit_rng(17, stream);
        let c = cfg(fine * factor as f64, horizon, 1, Scheme::Lindley);
        let norm = (factor as f64).sqrt();
        let path = simulate_path_with(p, 1.0, &c, || StepDraw {
            z: (0..factor).map(|_| normal(&mut rng)).sum::<f64>() / norm,
            u: 0.5,
        })
        .unwrap();
        let xs = &path.states;
        let inner = pairwise_sum(&xs[1..xs.len() - 1]);
        (inner + 0.5 * (xs[0] + xs[xs.len() - 1])) / (xs.len() - 1) as f64
    }

    #[test]
    fn lindley_bias_shrinks_with_dt() {
        let p = unit();
        let fine = 2.5e-4;
        let mut biases = [0.0; 3];
        for stream in 0..4 {
            for (k, factor) in [16, 4, 1].into_iter().enumerate() {
                biases[k] += (coupled_lindley_average(&p, fine, factor, 200.0, stream) - 1.0) / 4.0;
            }
        }
        // missed excursions below zero pull the average down by about
        // 0.58 sigma sqrt(dt)
        assert!(biases.iter().all(|b| *b < 0.0), "{biases:?}");
        assert!(biases[0] < biases[1] && biases[1] < biases[2], "{biases:?}");
    }
}
