//! Upper incomplete gamma function `Γ(a, x)` for real `a` and `x > 0`, and
//! the generalized exponential integral `E_n`.
//!
//! Large arguments underflow `Γ(a, x)` long before the quantities built on
//! it do, so every routine has an `e^x`-scaled form.

use statrs::function::gamma::{digamma, gamma};

use crate::error::EstimationError;

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

fn check_x(x: f64) -> Result<(), EstimationError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(EstimationError::NonPositiveArgument(x))
    }
}

/// `e^x E_n(x)` for `x > 0`.
pub fn exponential_integral_scaled(n: u32, x: f64) -> Result<f64, EstimationError> {
    check_x(x)?;
    if n == 0 {
        return Ok(1.0 / x);
    }
    let nf = n as f64;
    if x >= 1.0 {
        // Modified Lentz evaluation of the continued fraction.
        let mut b = x + nf;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            let a = -fi * (nf - 1.0 + fi);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < EPS {
                return Ok(h);
            }
        }
        return Err(EstimationError::NoConvergence { a: 1.0 - nf, x });
    }
    // Power series; the `i = n - 1` term carries the logarithm.
    let nm1 = n - 1;
    let mut ans = if nm1 != 0 { 1.0 / nm1 as f64 } else { -x.ln() + digamma(1.0) };
    let mut fact = 1.0;
    for i in 1..MAX_ITER as u32 {
        fact *= -x / i as f64;
        let del = if i != nm1 {
            -fact / (i as f64 - nm1 as f64)
        } else {
            fact * (-x.ln() + digamma(n as f64))
        };
        ans += del;
        if del.abs() < ans.abs() * EPS {
            return Ok(ans * x.exp());
        }
    }
    Err(EstimationError::NoConvergence { a: 1.0 - nf, x })
}

pub fn exponential_integral(n: u32, x: f64) -> Result<f64, EstimationError> {
    Ok(exponential_integral_scaled(n, x)? * (-x).exp())
}

/// `e^x Γ(a, x) / x^a` by the continued fraction; converges quickly once
/// `x >= max(1, a + 1)`.
fn continued_fraction(a: f64, x: f64) -> Result<f64, EstimationError> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        let an = -fi * (fi - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(EstimationError::NoConvergence { a, x })
}

/// `e^x Γ(a, x)` for `a > 0` via `Γ(a) - γ(a, x)` and the lower series.
fn scaled_by_series(a: f64, x: f64) -> Result<f64, EstimationError> {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            return Ok(x.exp() * gamma(a) - x.powf(a) * sum);
        }
    }
    Err(EstimationError::NoConvergence { a, x })
}

/// `e^x Γ(a, x)` for real `a` and `x > 0`.
pub fn upper_incomplete_gamma_scaled(a: f64, x: f64) -> Result<f64, EstimationError> {
    check_x(x)?;
    if !a.is_finite() {
        return Err(EstimationError::InvalidParameters(format!("shape {a} is not finite")));
    }
    if a <= 0.0 && a.fract() == 0.0 {
        // Γ(-m, x) = x^{-m} E_{m+1}(x).
        let n = (1.0 - a) as u32;
        return Ok(x.powf(a) * exponential_integral_scaled(n, x)?);
    }
    if x >= 1.0 && x >= a + 1.0 {
        return Ok(x.powf(a) * continued_fraction(a, x)?);
    }
    if a > 0.0 {
        return scaled_by_series(a, x);
    }
    // Negative non-integer shape with x < 1: climb to a positive shape, then
    // come back down with Γ(s, x) = (Γ(s + 1, x) - x^s e^{-x}) / s.
    let steps = (-a).ceil() as u32;
    let mut s = a + steps as f64;
    let mut value = scaled_by_series(s, x)?;
    for _ in 0..steps {
        s -= 1.0;
        value = (value - x.powf(s)) / s;
    }
    Ok(value)
}

pub fn upper_incomplete_gamma(a: f64, x: f64) -> Result<f64, EstimationError> {
    Ok(upper_incomplete_gamma_scaled(a, x)? * (-x).exp())
}

/// `ln Γ(a, x)`; finite wherever the scaled value is representable.
pub fn ln_upper_incomplete_gamma(a: f64, x: f64) -> Result<f64, EstimationError> {
    Ok(upper_incomplete_gamma_scaled(a, x)?.ln() - x)
}
