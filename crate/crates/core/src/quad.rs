//! Adaptive Gauss–Kronrod quadrature and bracketed root finding.
//!
//! Finite intervals use a 10/21-point Gauss–Kronrod pair with bisection of
//! the sub-interval carrying the largest error estimate. Semi-infinite
//! intervals are summed panel by panel, with panel widths doubling, until the
//! absolute mass of two consecutive panels falls below
//! `abs_tol * tail_cut`. Every integrand in this crate has an exponential
//! tail, so the truncation point is reached after a handful of panels.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerance contract for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Tail truncation: stop once a panel's absolute mass is below
    /// `abs_tol * tail_cut`.
    pub tail_cut: f64,
    /// Width of the first tail panel.
    pub tail_width: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
            tail_cut: 1e-2,
            tail_width: 1.0,
        }
    }
}

impl QuadSpec {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Result<Self> {
        QuadSpec {
            abs_tol,
            rel_tol,
            ..QuadSpec::default()
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Config("quadrature tolerances must be > 0".into()));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::Config("max_subdivisions must be >= 1".into()));
        }
        if !(self.tail_cut > 0.0 && self.tail_width > 0.0) {
            return Err(Error::Config("tail_cut and tail_width must be > 0".into()));
        }
        Ok(self)
    }

    /// Same spec with both tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        QuadSpec {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..*self
        }
    }

    pub fn with_tail_width(&self, width: f64) -> Self {
        QuadSpec {
            tail_width: width,
            ..*self
        }
    }
}

/// Integral estimate and its absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    resabs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    let mut resabs = kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    for j in 0..5 {
        let k = 2 * j + 1;
        let dx = half * XGK[k];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[k] = f1;
        fv2[k] = f2;
        gauss += WG[j] * (f1 + f2);
        kronrod += WGK[k] * (f1 + f2);
        resabs += WGK[k] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let k = 2 * j;
        let dx = half * XGK[k];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[k] = f1;
        fv2[k] = f2;
        kronrod += WGK[k] * (f1 + f2);
        resabs += WGK[k] * (f1.abs() + f2.abs());
    }

    let mean = 0.5 * kronrod;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for k in 0..10 {
        resasc += WGK[k] * ((fv1[k] - mean).abs() + (fv2[k] - mean).abs());
    }

    let width = half.abs();
    let value = kronrod * half;
    let resabs = resabs * width;
    let resasc = resasc * width;
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Panel {
        a,
        b,
        value,
        error,
        resabs,
    }
}

struct Adaptive {
    value: f64,
    error: f64,
    resabs: f64,
    converged: bool,
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, spec: &QuadSpec) -> Adaptive {
    let first = gauss_kronrod(f, a, b);
    let mut heap = BinaryHeap::new();
    let mut value = first.value;
    let mut error = first.error;
    let mut resabs = first.resabs;
    heap.push(first);

    let target = |value: f64, resabs: f64| {
        abs_tol
            .max(spec.rel_tol * value.abs())
            .max(100.0 * f64::EPSILON * resabs)
    };

    let mut subdivisions = 1;
    while error > target(value, resabs) {
        if subdivisions >= spec.max_subdivisions || !value.is_finite() {
            return Adaptive {
                value,
                error,
                resabs,
                converged: false,
            };
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision
            heap.push(worst);
            return Adaptive {
                value,
                error,
                resabs,
                converged: false,
            };
        }
        let left = gauss_kronrod(f, worst.a, mid);
        let right = gauss_kronrod(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        resabs += left.resabs + right.resabs - worst.resabs;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;

        // resum periodically to keep the running totals honest
        if subdivisions % 64 == 0 {
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
            resabs = heap.iter().map(|p| p.resabs).sum();
        }
    }
    value = heap.iter().map(|p| p.value).sum();
    error = heap.iter().map(|p| p.error).sum();
    resabs = heap.iter().map(|p| p.resabs).sum();
    Adaptive {
        value,
        error,
        resabs,
        converged: error <= target(value, resabs),
    }
}

const MAX_TAIL_PANELS: usize = 80;

fn tail<F: Fn(f64) -> f64>(f: &F, a: f64, abs_tol: f64, spec: &QuadSpec) -> Adaptive {
    let mut value = 0.0;
    let mut error = 0.0;
    let mut resabs = 0.0;
    let mut converged = true;
    let mut lo = a;
    let mut width = spec.tail_width;
    let mut quiet = 0;

    for k in 0..MAX_TAIL_PANELS {
        let hi = lo + width;
        let tol_k = abs_tol * 0.5f64.powi(k as i32 + 1);
        let panel = adaptive(f, lo, hi, tol_k, spec);
        value += panel.value;
        error += panel.error;
        resabs += panel.resabs;
        converged &= panel.converged;
        let cut = abs_tol.max(spec.rel_tol * resabs) * spec.tail_cut;
        if panel.resabs < cut {
            quiet += 1;
            if quiet >= 2 {
                return Adaptive {
                    value,
                    error,
                    resabs,
                    converged,
                };
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 2.0;
        if !lo.is_finite() {
            break;
        }
    }
    Adaptive {
        value,
        error,
        resabs,
        converged: false,
    }
}

/// Integrate `f` over `[a, b]`; `b` may be `f64::INFINITY`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<QuadResult> {
    integrate_pieces(f, &[a, b], spec)
}

/// Integrate over consecutive pieces `[p0, p1], [p1, p2], ...`, placing panel
/// boundaries at known kinks or half-periods. The last point may be
/// `f64::INFINITY`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    spec: &QuadSpec,
) -> Result<QuadResult> {
    if points.len() < 2 {
        return Err(Error::Domain("need at least two integration limits".into()));
    }
    if points.windows(2).any(|w| !(w[0] < w[1])) || points[0].is_nan() || !points[0].is_finite() {
        return Err(Error::Domain(format!(
            "integration limits must be strictly increasing with a finite start: {points:?}"
        )));
    }

    let n = points.len() - 1;
    let share = spec.abs_tol / n as f64;
    let mut value = 0.0;
    let mut error = 0.0;
    let mut resabs = 0.0;
    let mut converged = true;
    for w in points.windows(2) {
        let piece = if w[1].is_infinite() {
            tail(&f, w[0], share, spec)
        } else {
            adaptive(&f, w[0], w[1], share, spec)
        };
        value += piece.value;
        error += piece.error;
        resabs += piece.resabs;
        converged &= piece.converged;
    }

    let allowed = spec
        .abs_tol
        .max(spec.rel_tol * value.abs())
        .max(100.0 * f64::EPSILON * resabs);
    if !value.is_finite() || !(converged || error <= allowed) {
        return Err(Error::NonConvergence {
            estimate: value,
            error,
        });
    }
    Ok(QuadResult { value, error })
}

/// Breakpoint list `a < p_1 < ... < b` from unsorted interior points, dropping
/// any outside `(a, b)` and exact duplicates.
pub fn pieces(a: f64, interior: &[f64], b: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = interior
        .iter()
        .copied()
        .filter(|&p| p > a && p < b)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = Vec::with_capacity(pts.len() + 2);
    out.push(a);
    out.extend(pts);
    out.push(b);
    out
}

/// Locate a root of `g` in `[lo, hi]` by Brent's method. The final bracket is
/// no wider than `tol`.
pub fn find_root<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (g(a), g(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::NoSignChange {
            lo,
            hi,
            g_lo: fa,
            g_hi: fb,
        });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..500 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(m) };
        fb = g(b);
    }
    Ok(b)
}

/// Minimize a unimodal `g` on `[lo, hi]` by golden-section search.
pub fn golden_min<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = g(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, g(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadSpec {
        QuadSpec::default()
    }

    #[test]
    fn unit_exponential_mass() {
        let r = integrate(|v| (-v).exp(), 0.0, f64::INFINITY, &spec()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn centered_exponential_integrates_to_zero() {
        let r = integrate(|v| (1.0 - v) * (-v).exp(), 0.0, f64::INFINITY, &spec()).unwrap();
        assert!(r.value.abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn polynomial_on_unit_interval() {
        let r = integrate(|v| 3.0 * v * v, 0.0, 1.0, &spec()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn slow_tail_and_kink() {
        // rate 0.05 tail, kink at 3
        let f = |v: f64| (v - 3.0).abs() * (-0.05 * v).exp();
        let r = integrate_pieces(f, &[0.0, 3.0, f64::INFINITY], &spec()).unwrap();
        // closed form: int_0^inf (v-3) e^{-av} + 2 int_0^3 (3-v) e^{-av}
        let a: f64 = 0.05;
        let full = 1.0 / (a * a) - 3.0 / a;
        let left = 3.0 / a - (1.0 - (-3.0 * a).exp()) / (a * a);
        assert!((r.value - (full + 2.0 * left)).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn sqrt_endpoint_singularity_converges() {
        let r = integrate(|v| 1.0 / v.sqrt(), 0.0, 1.0, &spec()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn non_convergence_reported() {
        let tight = QuadSpec {
            max_subdivisions: 2,
            ..spec()
        };
        let err = integrate(|v: f64| (1.0 / v).sin(), 1e-6, 1.0, &tight).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn bad_limits_rejected() {
        assert!(integrate(|v| v, 1.0, 0.0, &spec()).is_err());
        assert!(QuadSpec::new(0.0, 1e-8).is_err());
    }

    #[test]
    fn roots() {
        let r = find_root(|x| x * x - 2.0, 1.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let r = find_root(|x| (-x).exp() - 0.5, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.ln()).abs() < 1e-12);
        let r = find_root(|x| x, -1.0, 1.0, 1e-12).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn root_without_sign_change() {
        let err = find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
    }

    #[test]
    fn golden_section_parabola() {
        let (x, fx) = golden_min(|x| (x - 0.3) * (x - 0.3) + 1.0, 0.0, 1.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-15);
    }

    // polynomial of degree < 4 times e^{-rate v}
    fn poly_exp(c: [f64; 4], rate: f64) -> impl Fn(f64) -> f64 {
        move |v| (c[0] + v * (c[1] + v * (c[2] + v * c[3]))) * (-rate * v).exp()
    }

    proptest::proptest! {
        #[test]
        fn integration_is_linear(
            c in proptest::array::uniform4(-3.0f64..3.0),
            d in proptest::array::uniform4(-3.0f64..3.0),
            ra in 0.2f64..3.0,
            rb in 0.2f64..3.0,
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let (f, g) = (poly_exp(c, ra), poly_exp(d, rb));
            let s = spec();
            let fi = integrate(&f, 0.0, f64::INFINITY, &s).unwrap().value;
            let gi = integrate(&g, 0.0, f64::INFINITY, &s).unwrap().value;
            let combined = integrate(|v| alpha * f(v) + beta * g(v), 0.0, f64::INFINITY, &s).unwrap().value;
            let scale = alpha.abs() * fi.abs() + beta.abs() * gi.abs();
            let tol = 10.0 * s.abs_tol.max(s.rel_tol * scale);
            proptest::prop_assert!((combined - (alpha * fi + beta * gi)).abs() <= tol);
        }

        #[test]
        fn splitting_adds_up(
            c in proptest::array::uniform4(-3.0f64..3.0),
            rate in 0.2f64..3.0,
            b in 0.1f64..6.0,
            width in 0.1f64..6.0,
        ) {
            let f = poly_exp(c, rate);
            let s = spec();
            let left = integrate(&f, 0.0, b, &s).unwrap();
            let right = integrate(&f, b, b + width, &s).unwrap();
            let whole = integrate(&f, 0.0, b + width, &s).unwrap();
            let bound = left.error + right.error + whole.error + 4.0 * f64::EPSILON * whole.value.abs();
            proptest::prop_assert!((left.value + right.value - whole.value).abs() <= bound.max(1e-14));
        }
    }
}
