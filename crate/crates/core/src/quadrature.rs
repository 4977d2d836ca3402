//! Gauss-Legendre rules and a small adaptive integrator.

use crate::error::{Error, Result};

/// 8-point Gauss-Legendre abscissae on [-1, 1] (positive half).
const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Nodes and weights of the 8-point rule mapped to `[lo, hi]`.
pub fn gauss_legendre8(lo: f64, hi: f64) -> [(f64, f64); 8] {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut out = [(0.0, 0.0); 8];
    for i in 0..4 {
        out[2 * i] = (mid - half * GL8_X[i], half * GL8_W[i]);
        out[2 * i + 1] = (mid + half * GL8_X[i], half * GL8_W[i]);
    }
    out
}

/// Two-point Gauss rule on `[lo, hi]`.
pub fn gauss_legendre2(lo: f64, hi: f64) -> [(f64, f64); 2] {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let d = half / 3f64.sqrt();
    [(mid - d, half), (mid + d, half)]
}

/// Three-point Gauss rule on `[lo, hi]`.
pub fn gauss_legendre3(lo: f64, hi: f64) -> [(f64, f64); 3] {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let d = half * (0.6f64).sqrt();
    [
        (mid - d, half * 5.0 / 9.0),
        (mid, half * 8.0 / 9.0),
        (mid + d, half * 5.0 / 9.0),
    ]
}

pub fn integrate_gl8<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    gauss_legendre8(lo, hi).iter().map(|&(x, w)| w * f(x)).sum()
}

/// Adaptive bisection on the 8-point rule until the absolute change drops
/// below `tol * max(1, |I|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        lo: f64,
        hi: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Option<f64> {
        let mid = 0.5 * (lo + hi);
        let left = integrate_gl8(f, lo, mid);
        let right = integrate_gl8(f, mid, hi);
        let refined = left + right;
        if (refined - whole).abs() <= tol * refined.abs().max(1.0) {
            return Some(refined);
        }
        if depth == 0 {
            return None;
        }
        Some(
            recurse(f, lo, mid, left, tol, depth - 1)?
                + recurse(f, mid, hi, right, tol, depth - 1)?,
        )
    }
    if lo == hi {
        return Ok(0.0);
    }
    let whole = integrate_gl8(f, lo, hi);
    recurse(f, lo, hi, whole, tol, 40)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Numerical(format!("adaptive quadrature failed on [{lo}, {hi}]")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl8_is_exact_for_degree_15() {
        let f = |x: f64| x.powi(15) + 3.0 * x.powi(14) - x;
        let exact = |x: f64| x.powi(16) / 16.0 + 3.0 * x.powi(15) / 15.0 - x * x / 2.0;
        let got = integrate_gl8(&f, -0.3, 1.7);
        assert!((got - (exact(1.7) - exact(-0.3))).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_sharp_peak() {
        let f = |x: f64| 1.0 / (1e-4 + x * x);
        let got = integrate_adaptive(&f, -1.0, 1.0, 1e-13).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((got - exact).abs() / exact < 1e-12);
    }
}
