//! Special functions needed by the Kuramoto fixed point, the mollifier and
//! the Sobolev constant.

use std::f64::consts::PI;

/// Switch-over argument between power series and continued fraction for `I1/I0`.
const RATIO_SERIES_LIMIT: f64 = 10.0;

/// Power series for `I0(x)` and `I1(x)`; all terms positive, so no cancellation.
fn i0_i1_series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let mut t0 = 1.0;
    let mut t1 = 0.5 * x;
    let (mut s0, mut s1) = (t0, t1);
    for k in 1..500 {
        let kf = k as f64;
        t0 *= q / (kf * kf);
        t1 *= q / (kf * (kf + 1.0));
        s0 += t0;
        s1 += t1;
        if t0 < 1e-17 * s0 && t1 < 1e-17 * s1 {
            break;
        }
    }
    (s0, s1)
}

/// `I1(x) / I0(x)` for `x >= 0`, accurate to ~1e-14 relative.
pub fn bessel_ratio_i1_i0(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 0.0;
    }
    if x <= RATIO_SERIES_LIMIT {
        let (i0, i1) = i0_i1_series(x);
        return i1 / i0;
    }
    // I1/I0 = 1 / (2/x + 1 / (4/x + 1 / (6/x + ...))), modified Lentz
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..10_000 {
        let b = 2.0 * j as f64 / x;
        d = b + d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + 1.0 / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// `exp(-x) I0(x)` for `x >= 0`.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let x = x.abs();
    if x <= 20.0 {
        return i0_i1_series(x).0 * (-x).exp();
    }
    // asymptotic expansion; terms shrink until k ~ 2x, far beyond what is needed here
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        let kf = k as f64;
        term *= (2.0 * kf - 1.0).powi(2) / (8.0 * kf * x);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Bessel function of the first kind `J_n(x)` by the trapezoidal rule on
/// `J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt`, exponentially convergent.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let points = 64 + 2 * (x.abs().ceil() as usize) + 2 * n as usize;
    let h = PI / points as f64;
    let nf = n as f64;
    let mut s = 0.5 * (1.0 + (nf * PI).cos());
    for j in 1..points {
        let t = j as f64 * h;
        s += (nf * t - x * t.sin()).cos();
    }
    s / points as f64
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_matches_reference_values() {
        // mpmath, 30 digits
        let cases = [
            (0.5, 0.242499612580801945),
            (4.384117110314723, 0.876823422062944620),
            (10.0, 0.948599825954845959),
            (10.5, 0.951118787719111495),
            (50.0, 0.989948967378497753),
        ];
        for (x, want) in cases {
            let got = bessel_ratio_i1_i0(x);
            assert!((got - want).abs() < 1e-13, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn ratio_is_continuous_at_switch() {
        let below = bessel_ratio_i1_i0(RATIO_SERIES_LIMIT);
        let above = bessel_ratio_i1_i0(RATIO_SERIES_LIMIT + 1e-12);
        assert!((below - above).abs() < 1e-13);
    }

    #[test]
    fn scaled_i0_reference_values() {
        // mpmath, 30 digits
        for (x, want) in [(1.0, 0.465759607593640437), (20.0, 0.0897803118848260216), (25.0, 0.0801967735474367084)] {
            let got = bessel_i0_scaled(x);
            assert!(((got - want) / want).abs() < 1e-13, "x={x}: {got}");
        }
    }

    #[test]
    fn bessel_j_reference_values() {
        // mpmath, 30 digits
        for (n, x, want) in [(0, 1.0, 0.765197686557966551), (3, 2.5, 0.216600391039113525), (3, 40.0, -0.126144815505820803)] {
            let got = bessel_j(n, x);
            assert!((got - want).abs() < 1e-14, "J_{n}({x}) = {got}");
        }
    }
}
