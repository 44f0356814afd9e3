//! Standard normal helpers built on the complementary error function.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_9;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF, accurate in the lower tail.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(z)`, accurate for large positive `z`.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// `Phi(hi) - Phi(lo)` for `lo <= hi`, evaluated in whichever tail avoids
/// cancellation.
pub fn norm_interval(lo: f64, hi: f64) -> f64 {
    if hi <= 0.0 {
        norm_cdf(hi) - norm_cdf(lo)
    } else if lo >= 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else {
        1.0 - norm_cdf(lo) - norm_sf(hi)
    }
}

/// Inverse standard normal CDF for `u` in `(0, 1)`: Acklam's rational
/// approximation followed by one Halley step against `erfc`.
pub fn norm_inv(u: f64) -> f64 {
    if !(u > 0.0 && u < 1.0) {
        return if u == 0.0 {
            f64::NEG_INFINITY
        } else if u == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let z = acklam(u);
    let e = if z < 0.0 { norm_cdf(z) - u } else { (1.0 - u) - norm_sf(z) };
    let step = e / norm_pdf(z);
    z - step / (1.0 + 0.5 * z * step)
}

#[allow(clippy::excessive_precision)]
fn acklam(u: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if u < LOW {
        tail((-2.0 * u.ln()).sqrt())
    } else if u > 1.0 - LOW {
        -tail((-2.0 * (1.0 - u).ln()).sqrt())
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_cdf(-1.96) - 0.024_997_895_148_220_43).abs() < 1e-15);
        // deep tail keeps relative accuracy
        let tail = norm_cdf(-10.0);
        assert!((tail / 7.619_853_024_160_526e-24 - 1.0).abs() < 1e-13);
        assert!((norm_pdf(0.0) - INV_SQRT_2PI).abs() < 1e-17);
    }

    #[test]
    fn interval_matches_difference() {
        for &(lo, hi) in &[(-3.0, -1.0), (-1.0, 2.0), (1.0, 4.0), (8.0, 9.0)] {
            let direct = norm_cdf(hi) - norm_cdf(lo);
            let safe = norm_interval(lo, hi);
            assert!((direct - safe).abs() < 1e-15, "{lo} {hi}");
        }
        // far right tail: the naive difference underflows to zero
        assert!(norm_interval(9.0, 10.0) > 1e-19);
    }

    #[test]
    fn inverse_roundtrip() {
        for &u in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let z = norm_inv(u);
            let back = if u < 0.5 { norm_cdf(z) - u } else { norm_sf(z) - (1.0 - u) };
            assert!(back.abs() < 1e-14 * u.min(1.0 - u), "{u}: {back}");
        }
    }
}
