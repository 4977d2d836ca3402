use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Highest supported order.
pub const MAX_BESSEL_ORDER: u32 = 20;

/// Value of `I_n(x)`, possibly carrying the factor `exp(-x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselIValue {
    pub order: u32,
    pub argument: f64,
    pub value: f64,
    /// `value` is `exp(-x) I_n(x)` when set.
    pub scaled: bool,
}

/// Modified Bessel function of the first kind, `I_n(x)` or `exp(-x) I_n(x)`.
pub fn bessel_i(n: u32, x: f64, scaled: bool) -> Result<BesselIValue> {
    let s = bessel_i_scaled(n, x)?;
    let value = if scaled { s } else { unscale(s, x)? };
    Ok(BesselIValue { order: n, argument: x, value, scaled })
}

/// `d/dx I_n(x)`, scaled by `exp(-x)` when requested.
pub fn bessel_i_deriv(n: u32, x: f64, scaled: bool) -> Result<f64> {
    check(n, x)?;
    let s = if n == 0 {
        bessel_i_scaled(1, x)?
    } else if n == MAX_BESSEL_ORDER {
        // I_{n+1} = I_{n-1} - (2n/x) I_n keeps us inside the supported orders
        let lower = bessel_i_scaled(n - 1, x)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let upper = lower - 2.0 * n as f64 / x * bessel_i_scaled(n, x)?;
        0.5 * (lower + upper)
    } else {
        0.5 * (bessel_i_scaled(n - 1, x)? + bessel_i_scaled(n + 1, x)?)
    };
    if scaled {
        Ok(s)
    } else {
        unscale(s, x)
    }
}

fn unscale(s: f64, x: f64) -> Result<f64> {
    let v = s * x.exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow(format!("I_n({x}) exceeds the double range")))
    }
}

fn check(n: u32, x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("bessel_i: argument {x} must be finite and >= 0")));
    }
    if n > MAX_BESSEL_ORDER {
        return Err(Error::Domain(format!("bessel_i: order {n} above {MAX_BESSEL_ORDER}")));
    }
    Ok(())
}

/// `exp(-x) I_n(x)`; never overflows.
///
/// The power series has only positive terms and is used while
/// `x <= 30 + n^2`; beyond that the Hankel expansion converges to full
/// precision before its terms start to grow.
pub fn bessel_i_scaled(n: u32, x: f64) -> Result<f64> {
    check(n, x)?;
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let nf = n as f64;
    if x <= 30.0 + nf * nf {
        Ok(series_scaled(n, x))
    } else {
        Ok(hankel_scaled(n, x))
    }
}

fn series_scaled(n: u32, x: f64) -> f64 {
    let log_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    let mut term = (-x + n as f64 * (0.5 * x).ln() - log_fact).exp();
    let q = 0.25 * x * x;
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + n as f64));
        sum += term;
        if term < 1e-17 * sum || k > 5000.0 {
            break;
        }
        k += 1.0;
    }
    sum
}

fn hankel_scaled(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n as f64) * (n as f64);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (8.0 * kf * x);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_i(0, 0.0, false).unwrap().value, 1.0);
        assert_eq!(bessel_i(1, 0.0, false).unwrap().value, 0.0);
        assert_eq!(bessel_i_deriv(0, 0.0, false).unwrap(), 0.0);
        assert!((bessel_i_deriv(1, 0.0, false).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn power_series_oracle() {
        // sum (x/2)^(2k) / (k!)^2 at x = 1, computed independently
        let mut oracle = 0.0;
        let mut fact = 1.0;
        for k in 0..30 {
            if k > 0 {
                fact *= k as f64;
            }
            oracle += 0.25f64.powi(k) / (fact * fact);
        }
        let got = bessel_i(0, 1.0, false).unwrap().value;
        assert!(rel(got, oracle) < 1e-14);
        assert!(rel(got, 1.266_065_877_752_01) < 1e-13);
        let d = bessel_i_deriv(0, 1.0, false).unwrap();
        assert!(rel(d, 0.565_159_103_992_485) < 1e-13);
    }

    #[test]
    fn scaled_reference_values() {
        // 30-digit references of exp(-x) I_n(x)
        let cases = [
            (0, 20.0, 0.089_780_311_884_826_02),
            (5, 30.0, 0.047_925_203_168_721_22),
            (20, 50.0, 0.001_049_627_287_942_820_7),
            (20, 500.0, 0.011_958_181_720_054_548),
            (3, 0.001, 2.081_251_171_397_724_7e-11),
            (10, 1e4, 0.003_969_574_105_783_224),
            (0, 1e6, 3.989_423_302_692_457_7e-4),
        ];
        for &(n, x, want) in &cases {
            let got = bessel_i_scaled(n, x).unwrap();
            assert!(rel(got, want) < 1e-12, "n={n} x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn branches_agree_at_crossover() {
        for n in 0..=MAX_BESSEL_ORDER {
            let nf = n as f64;
            let x = 30.0 + nf * nf;
            let a = series_scaled(n, x);
            let b = hankel_scaled(n, x);
            assert!(rel(a, b) < 1e-12, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(bessel_i(0, -1.0, false), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(0, f64::NAN, true), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(21, 1.0, true), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(0, 800.0, false), Err(Error::Overflow(_))));
    }
}
