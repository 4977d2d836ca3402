//! Local solution spaces of `-u'' + c_h u = F` on one subinterval, with
//! `c_h` the affine interpolant of `c` between the endpoints.
//!
//! Each case provides an increasing solution `u_<` and a decreasing `u_>`,
//! stored as mantissas times `exp(+-e(y))` with `e` increasing and
//! `e(y_l) = 0`, so nothing overflows for subintervals spanning `1e4`
//! decay lengths. The normalized bases are `A1 = u_< / u_<(y_r)` and
//! `A2 = u_> / u_>(y_l)`, both at most 1 in magnitude.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre8;
use crate::specialfn::airy;

/// Which frozen-coefficient solutions span the local space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisCase {
    Polynomial,
    Exponential,
    Airy,
}

/// Relative slope below which `c_h` counts as constant.
const SLOPE_THRESHOLD: f64 = 1e-8;
/// `sqrt(c) h` below which the exponential pair is numerically linear.
const LINEAR_THRESHOLD: f64 = 1e-7;
/// Decay exponent after which Green's-function tails are dropped.
const TAIL_CUTOFF: f64 = 40.0;

/// Homogeneous solutions at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisPoint {
    /// `u_< = lt * exp(e)`, `u_<' = lt_d * exp(e)`
    pub lt: f64,
    pub lt_d: f64,
    /// `u_> = gt * exp(-e)`, `u_>' = gt_d * exp(-e)`
    pub gt: f64,
    pub gt_d: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBasis {
    pub case: BasisCase,
    pub yl: f64,
    pub yr: f64,
    /// `c_h(y) = intercept + slope * y`
    pub slope: f64,
    pub intercept: f64,
    c_left: f64,
    c_mid: f64,
    /// `sqrt(c_mid)` in the exponential case
    k: f64,
    /// signed cube root of the slope (Airy case)
    cbrt_s: f64,
    /// Airy argument at `yl`
    t_left: f64,
    /// normalization mantissas and exponent
    s1: f64,
    s2: f64,
    e_right: f64,
    /// Wronskian `u_<' u_> - u_< u_>'`
    pub wronskian: f64,
}

/// `zeta(t2) - zeta(t1)` for `zeta(t) = (2/3) max(t, 0)^(3/2)`, given
/// `dt = t2 - t1` computed without cancellation.
fn zeta_diff(t1: f64, t2: f64, dt: f64) -> f64 {
    let (a, b) = (t1.max(0.0), t2.max(0.0));
    if t1 >= 0.0 && t2 >= 0.0 {
        let (sa, sb) = (a.sqrt(), b.sqrt());
        if sa + sb == 0.0 {
            return 0.0;
        }
        2.0 / 3.0 * dt * (a + sa * sb + b) / (sa + sb)
    } else {
        2.0 / 3.0 * (b * b.sqrt() - a * a.sqrt())
    }
}

/// Builds the local basis on `[yl, yr]` from the coefficient values at the
/// endpoints (one-sided limits inside the subinterval).
pub fn build_local_basis(yl: f64, yr: f64, c_left: f64, c_right: f64) -> Result<LocalBasis> {
    let h = yr - yl;
    if !(h >= 1e-14) || !h.is_finite() {
        return Err(Error::Domain(format!("degenerate subinterval [{yl}, {yr}]")));
    }
    for c in [c_left, c_right] {
        if !c.is_finite() || c < -1e-12 {
            return Err(Error::Domain(format!("c = {c} violates c >= 0")));
        }
    }
    let (cl, cr) = (c_left.max(0.0), c_right.max(0.0));
    let slope = (cr - cl) / h;
    let c_mid = 0.5 * (cl + cr);
    let mut b = LocalBasis {
        case: BasisCase::Polynomial,
        yl,
        yr,
        slope,
        intercept: cl - slope * yl,
        c_left: cl,
        c_mid,
        k: 0.0,
        cbrt_s: 0.0,
        t_left: 0.0,
        s1: 1.0,
        s2: 1.0,
        e_right: 0.0,
        wronskian: h,
    };
    if slope == 0.0 && c_mid == 0.0 {
        b.slope = 0.0;
        b.intercept = 0.0;
    } else if slope.abs() * h < SLOPE_THRESHOLD * c_mid {
        let k = c_mid.sqrt();
        if k * h >= LINEAR_THRESHOLD {
            b.case = BasisCase::Exponential;
            b.k = k;
            b.wronskian = 2.0 * k;
        }
    } else {
        b.case = BasisCase::Airy;
        b.cbrt_s = slope.cbrt();
        b.t_left = cl / (b.cbrt_s * b.cbrt_s);
        b.wronskian = b.cbrt_s.abs() / PI;
    }
    let left = b.raw(yl)?;
    let right = b.raw(yr)?;
    b.s1 = right.lt;
    b.e_right = right.e;
    b.s2 = left.gt;
    Ok(b)
}

impl LocalBasis {
    pub fn width(&self) -> f64 {
        self.yr - self.yl
    }

    pub fn c_h(&self, y: f64) -> f64 {
        self.c_left + self.slope * (y - self.yl)
    }

    /// Local decay rate `sqrt(c_h)`.
    pub fn rate(&self, y: f64) -> f64 {
        match self.case {
            BasisCase::Polynomial => 0.0,
            BasisCase::Exponential => self.k,
            BasisCase::Airy => self.c_h(y).max(0.0).sqrt(),
        }
    }

    /// Airy argument `c_h(y) |slope|^(-2/3)`.
    pub fn airy_argument(&self, y: f64) -> f64 {
        self.t_left + self.cbrt_s * (y - self.yl)
    }

    /// Unnormalized homogeneous pair at `y`.
    pub fn raw(&self, y: f64) -> Result<BasisPoint> {
        Ok(match self.case {
            BasisCase::Polynomial => BasisPoint {
                lt: y - self.yl,
                lt_d: 1.0,
                gt: self.yr - y,
                gt_d: -1.0,
                e: 0.0,
            },
            BasisCase::Exponential => BasisPoint {
                lt: 1.0,
                lt_d: self.k,
                gt: 1.0,
                gt_d: -self.k,
                e: self.k * (y - self.yl),
            },
            BasisCase::Airy => {
                let dt = self.cbrt_s * (y - self.yl);
                let t = self.t_left + dt;
                let p = airy(t, true)?;
                let z = zeta_diff(self.t_left, t, dt);
                let c = self.cbrt_s;
                if self.slope > 0.0 {
                    BasisPoint { lt: p.bi, lt_d: p.bi_prime * c, gt: p.ai, gt_d: p.ai_prime * c, e: z }
                } else {
                    BasisPoint { lt: p.ai, lt_d: p.ai_prime * c, gt: p.bi, gt_d: p.bi_prime * c, e: -z }
                }
            }
        })
    }

    /// `[(A1, A1'), (A2, A2')]` at `y`.
    pub fn normalized(&self, y: f64) -> Result<[(f64, f64); 2]> {
        let p = self.raw(y)?;
        Ok(self.normalize(&p))
    }

    fn normalize(&self, p: &BasisPoint) -> [(f64, f64); 2] {
        let up = (p.e - self.e_right).exp() / self.s1;
        let down = (-p.e).exp() / self.s2;
        [(p.lt * up, p.lt_d * up), (p.gt * down, p.gt_d * down)]
    }
}

/// Integrates `g` from `anchor` to `far`; `g` carries a kernel decaying
/// away from `anchor`, so far tails are dropped once negligible.
fn integrate_towards(
    basis: &LocalBasis,
    anchor: f64,
    far: f64,
    g: &dyn Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let len = (far - anchor).abs();
    if len == 0.0 {
        return Ok(0.0);
    }
    let dir = (far - anchor).signum();
    let rate_max = basis.rate(anchor).max(basis.rate(far));
    let mut total = 0.0;
    if rate_max * len <= 2.0 {
        for (s, w) in gauss_legendre8(anchor.min(far), anchor.max(far)) {
            total += w * g(s)?;
        }
        return Ok(total);
    }
    let mut cur = anchor;
    let mut decayed = 0.0;
    for _ in 0..100_000 {
        let rate = basis.rate(cur).max(rate_max * 1e-3);
        let step = (2.0 / rate).min((far - cur).abs());
        let next = cur + dir * step;
        let next = if (far - next) * dir <= 0.0 { far } else { next };
        for (s, w) in gauss_legendre8(cur.min(next), cur.max(next)) {
            total += w * g(s)?;
        }
        decayed += step * basis.rate(cur).min(basis.rate(next));
        cur = next;
        if cur == far || decayed > TAIL_CUTOFF {
            return Ok(total);
        }
    }
    Err(Error::Numerical("Green's-function quadrature did not terminate".into()))
}

/// Particular solution of `-v'' + c_h v = F` on the subinterval:
/// `v(y) = int G(y, s) F(s) ds` with `G = u_<(min) u_>(max) / W`.
/// Returns `(v, v')`.
pub fn particular_term(
    basis: &LocalBasis,
    source: &dyn Fn(f64) -> f64,
    y: f64,
) -> Result<(f64, f64)> {
    let here = basis.raw(y)?;
    // int_yl^y u_<(s) F(s) ds, scaled by exp(-e(y))
    let j1 = integrate_towards(basis, y, basis.yl, &|s| {
        let p = basis.raw(s)?;
        Ok(p.lt * source(s) * (p.e - here.e).exp())
    })?;
    // int_y^yr u_>(s) F(s) ds, scaled by exp(+e(y))
    let j2 = integrate_towards(basis, y, basis.yr, &|s| {
        let p = basis.raw(s)?;
        Ok(p.gt * source(s) * (here.e - p.e).exp())
    })?;
    let w = basis.wronskian;
    Ok(((here.gt * j1 + here.lt * j2) / w, (here.gt_d * j1 + here.lt_d * j2) / w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_selection() {
        let b = build_local_basis(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(b.case, BasisCase::Polynomial);
        let b = build_local_basis(0.0, 1.0, 4.0, 4.0).unwrap();
        assert_eq!(b.case, BasisCase::Exponential);
        assert!((b.wronskian - 4.0).abs() < 1e-15);
        let b = build_local_basis(0.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(b.case, BasisCase::Airy);
        for y in [0.0, 0.3, 1.0] {
            assert!((b.airy_argument(y) - (y + 1.0)).abs() < 1e-15);
        }
        // zero intercept with nonzero slope still uses Airy functions
        let b = build_local_basis(0.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(b.case, BasisCase::Airy);
        assert!(build_local_basis(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(build_local_basis(0.0, 1e-15, 1.0, 1.0).is_err());
    }

    #[test]
    fn exponential_normalization() {
        let b = build_local_basis(0.0, 1.0, 4.0, 4.0).unwrap();
        let [(a1, d1), (a2, d2)] = b.normalized(0.0).unwrap();
        assert!((a1 - (-2.0f64).exp()).abs() < 1e-15);
        assert!((d1 - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((a2 - 1.0).abs() < 1e-15 && (d2 + 2.0).abs() < 1e-15);
        let [(a1, _), (a2, _)] = b.normalized(1.0).unwrap();
        assert!((a1 - 1.0).abs() < 1e-15 && (a2 - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn airy_basis_solves_the_ode() {
        for (cl, cr) in [(1.0, 2.0), (2.0, 1.0), (100.0, 400.0), (0.0, 3.0)] {
            let b = build_local_basis(0.0, 1.0, cl, cr).unwrap();
            let hs = 1e-4;
            for y in [0.2, 0.5, 0.8] {
                for idx in 0..2 {
                    let v = |y: f64| b.normalized(y).unwrap()[idx].0;
                    let d2 = (v(y + hs) - 2.0 * v(y) + v(y - hs)) / (hs * hs);
                    let res = -d2 + b.c_h(y) * v(y);
                    assert!(res.abs() < 1e-5 * (1.0 + b.c_h(y)), "cl={cl} cr={cr} y={y}: {res}");
                    let fd = (v(y + hs) - v(y - hs)) / (2.0 * hs);
                    let d = b.normalized(y).unwrap()[idx].1;
                    assert!((fd - d).abs() < 1e-6 * (1.0 + d.abs()));
                }
            }
        }
    }

    #[test]
    fn normalized_bases_bounded_by_one() {
        for (cl, cr, h) in [(1.0, 2.0, 1.0), (1e-4, 2e-4, 1e4), (5000.0, 5000.0, 0.5), (2.0, 0.5, 3.0)] {
            let b = build_local_basis(0.0, h, cl, cr).unwrap();
            let mut max = [0.0f64; 2];
            for i in 0..=200 {
                let y = h * i as f64 / 200.0;
                let v = b.normalized(y).unwrap();
                max[0] = max[0].max(v[0].0.abs());
                max[1] = max[1].max(v[1].0.abs());
            }
            assert!((max[0] - 1.0).abs() < 1e-12 && (max[1] - 1.0).abs() < 1e-12, "{max:?}");
        }
    }

    #[test]
    fn wronskian_matches_mantissas() {
        for (cl, cr) in [(1.0, 2.0), (3.0, 0.5), (4.0, 4.0), (0.0, 0.0)] {
            let b = build_local_basis(0.0, 2.0, cl, cr).unwrap();
            for y in [0.0, 0.7, 2.0] {
                let p = b.raw(y).unwrap();
                let w = p.lt_d * p.gt - p.lt * p.gt_d;
                assert!((w - b.wronskian).abs() < 1e-12 * b.wronskian, "{w} vs {}", b.wronskian);
            }
        }
    }

    #[test]
    fn particular_term_examples() {
        let b = build_local_basis(0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(particular_term(&b, &|_| 0.0, 0.4).unwrap(), (0.0, 0.0));
        // with c = F = 1 the particular solution differs from 1 by a
        // homogeneous function
        let v = |y: f64| particular_term(&b, &|_| 1.0, y).unwrap().0;
        let hs = 1e-3;
        for y in [0.2, 0.5, 0.9] {
            let d2 = (v(y + hs) - 2.0 * v(y) + v(y - hs)) / (hs * hs);
            assert!((-d2 + v(y) - 1.0).abs() < 1e-6);
        }

        let b = build_local_basis(0.0, 1.0, 4.0, 4.0).unwrap();
        let v = |y: f64| particular_term(&b, &|s| s, y).unwrap();
        let (hs, y) = (5e-3, 0.5);
        // fourth-order second difference
        let d2 = (-v(y + 2.0 * hs).0 + 16.0 * v(y + hs).0 - 30.0 * v(y).0 + 16.0 * v(y - hs).0
            - v(y - 2.0 * hs).0)
            / (12.0 * hs * hs);
        assert!((-d2 + 4.0 * v(y).0 - y).abs() < 1e-8);
        let fd = (-v(y + 2.0 * hs).0 + 8.0 * v(y + hs).0 - 8.0 * v(y - hs).0 + v(y - 2.0 * hs).0)
            / (12.0 * hs);
        assert!((fd - v(y).1).abs() < 1e-8);
    }

    #[test]
    fn particular_term_in_the_singular_regime() {
        // c = 1e-8 on a subinterval of length 3e6: v = F / c away from the ends
        let h = 3.125e6;
        let b = build_local_basis(0.0, h, 1e-8, 1e-8).unwrap();
        let (v, dv) = particular_term(&b, &|_| 1e-8, 0.5 * h).unwrap();
        assert!((v - 1.0).abs() < 1e-13, "{v}");
        assert!(dv.abs() < 1e-13);
        let (v0, _) = particular_term(&b, &|_| 1e-8, 0.0).unwrap();
        assert!((v0 - 0.5).abs() < 1e-12, "{v0}");
    }
}
