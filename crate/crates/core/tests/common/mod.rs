//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn big_phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `P(|X + mu1| ≤ c, |Y + mu2| ≤ c)` for a standard bivariate normal pair
/// with correlation `rho`, by conditioning on `X`.
pub fn box_probability(c: f64, rho: f64, mu1: f64, mu2: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    simpson(
        |x| phi(x) * (big_phi((c - mu2 - rho * x) / s) - big_phi((-c - mu2 - rho * x) / s)),
        -c - mu1,
        c - mu1,
        4000,
    )
}

/// Exact two-scale critical value: solves `P(max(|X|, |Y|) > c) = alpha`.
pub fn two_scale_threshold(alpha: f64, rho: f64) -> f64 {
    let (mut lo, mut hi) = (0.5, 8.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - box_probability(mid, rho, 0.0, 0.0) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Power of the two-scale test at critical value `c` with means `(mu1, mu2)`.
pub fn two_scale_power(c: f64, rho: f64, mu1: f64, mu2: f64) -> f64 {
    1.0 - box_probability(c, rho, mu1, mu2)
}

/// `(1 + r^{2H} − (r−1)^{2H}) / (2 r^H)` evaluated directly.
pub fn corr_direct(h: f64, r: f64) -> f64 {
    (1.0 + r.powf(2.0 * h) - (r - 1.0).powf(2.0 * h)) / (2.0 * r.powf(h))
}

/// fGn autocovariance from the fBm increment identity.
pub fn acf_direct(h: f64, lag: f64) -> f64 {
    0.5 * ((lag + 1.0).powf(2.0 * h) - 2.0 * lag.powf(2.0 * h) + (lag - 1.0).abs().powf(2.0 * h))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean of `xs`.
pub fn std_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
