//! The stretching `y(x) = int_lo^x 1/a`, which turns `-(a u')' + b u = f`
//! into `-u_yy + c u = F` with `c = a b` and `F = a f`, and makes the flux
//! `a u_x` equal to `u_y`.

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;

use super::{Domain, InterfaceProblem, PiecewiseField, ScalarFn, Side};

#[derive(Debug, Clone)]
enum PieceMap {
    Constant(f64),
    /// `a(x) = p + q x`
    Affine { p: f64, q: f64 },
    General(ScalarFn),
}

/// Piecewise monotone map between `x` and `y` in 1D.
#[derive(Debug, Clone)]
pub struct Transform1d {
    x_breaks: Vec<f64>,
    y_breaks: Vec<f64>,
    maps: Vec<PieceMap>,
}

const QUAD_TOL: f64 = 1e-13;

impl Transform1d {
    pub fn new(a: &PiecewiseField, lo: f64, hi: f64) -> Result<Self> {
        let mut x_breaks = vec![lo];
        x_breaks.extend_from_slice(a.breakpoints());
        x_breaks.push(hi);
        if x_breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("breakpoints must lie strictly inside the domain".into()));
        }
        let maps: Vec<PieceMap> = a
            .pieces()
            .iter()
            .map(|f| match f.as_affine_1d() {
                Some((p, q)) if q == 0.0 => PieceMap::Constant(p),
                Some((p, q)) => PieceMap::Affine { p, q },
                None => PieceMap::General(f.clone()),
            })
            .collect();
        let mut t = Self { x_breaks, y_breaks: vec![0.0], maps };
        for k in 0..t.maps.len() {
            let w = t.piece_integral(k, t.x_breaks[k + 1])?;
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("1/a is not integrable on piece {k}")));
            }
            let last = t.y_breaks[k];
            t.y_breaks.push(last + w);
        }
        Ok(t)
    }

    pub fn from_problem(p: &InterfaceProblem) -> Result<Self> {
        match p.domain {
            Domain::Interval { lo, hi } => Self::new(&p.a, lo, hi),
            Domain::Rect { .. } => Err(Error::Config("Transform1d needs a 1D problem".into())),
        }
    }

    /// `int_{x_k}^x 1/a` inside piece `k`.
    fn piece_integral(&self, k: usize, x: f64) -> Result<f64> {
        let x0 = self.x_breaks[k];
        match &self.maps[k] {
            PieceMap::Constant(a) => Ok((x - x0) / a),
            PieceMap::Affine { p, q } => {
                let a0 = p + q * x0;
                Ok((q * (x - x0) / a0).ln_1p() / q)
            }
            PieceMap::General(f) => integrate_adaptive(&|s| 1.0 / f.eval(&[s]), x0, x, QUAD_TOL),
        }
    }

    pub fn x_breaks(&self) -> &[f64] {
        &self.x_breaks
    }

    pub fn y_breaks(&self) -> &[f64] {
        &self.y_breaks
    }

    /// Total transformed length.
    pub fn y_max(&self) -> f64 {
        *self.y_breaks.last().unwrap()
    }

    fn check_x(&self, x: f64) -> Result<()> {
        let (lo, hi) = (self.x_breaks[0], *self.x_breaks.last().unwrap());
        if x >= lo && x <= hi {
            Ok(())
        } else {
            Err(Error::Domain(format!("x = {x} outside [{lo}, {hi}]")))
        }
    }

    fn piece_of_x(&self, x: f64) -> usize {
        let n = self.maps.len();
        (self.x_breaks.partition_point(|&b| b <= x).max(1) - 1).min(n - 1)
    }

    /// `y(x)`; continuous, so interface points need no side.
    pub fn y(&self, x: f64) -> Result<f64> {
        self.check_x(x)?;
        let k = self.piece_of_x(x);
        Ok(self.y_breaks[k] + self.piece_integral(k, x)?)
    }

    /// Inverse map `x(y)`.
    pub fn x(&self, y: f64) -> Result<f64> {
        let ymax = self.y_max();
        let slack = 1e-12 * ymax;
        if !(y >= -slack && y <= ymax + slack) {
            return Err(Error::Domain(format!("y = {y} outside [0, {ymax}]")));
        }
        let y = y.clamp(0.0, ymax);
        let n = self.maps.len();
        let k = (self.y_breaks.partition_point(|&b| b <= y).max(1) - 1).min(n - 1);
        let (x0, x1) = (self.x_breaks[k], self.x_breaks[k + 1]);
        let dy = y - self.y_breaks[k];
        let x = match &self.maps[k] {
            PieceMap::Constant(a) => x0 + a * dy,
            PieceMap::Affine { p, q } => x0 + (p + q * x0) * (q * dy).exp_m1() / q,
            PieceMap::General(_) => {
                let (mut l, mut r) = (x0, x1);
                while r - l > 1e-13 * (x1 - x0).max(1e-300) {
                    let m = 0.5 * (l + r);
                    if self.piece_integral(k, m)? < dy {
                        l = m;
                    } else {
                        r = m;
                    }
                }
                0.5 * (l + r)
            }
        };
        Ok(x.clamp(x0, x1))
    }

    /// Piece index owning `y`; images of interfaces need a side.
    pub fn piece_of_y(&self, y: f64, side: Option<Side>) -> Result<usize> {
        let interior = &self.y_breaks[1..self.y_breaks.len() - 1];
        let below = interior.partition_point(|&b| b < y);
        if below < interior.len() && interior[below] == y {
            return match side {
                Some(Side::Left) => Ok(below),
                Some(Side::Right) => Ok(below + 1),
                None => Err(Error::AmbiguousSide(y)),
            };
        }
        Ok(below)
    }
}

/// `y(x) = int_lo^x 1/a` on the interval `[lo, hi]`.
pub fn transform_y_1d(a: &PiecewiseField, lo: f64, hi: f64, x: f64) -> Result<f64> {
    Transform1d::new(a, lo, hi)?.y(x)
}

/// Per-axis scaling for piecewise-constant `a` in 2D: inside subdomain `i`
/// the map is `y = (x - x_ref_i) / a_i` plus an offset.
#[derive(Debug, Clone)]
pub struct Transform2d {
    domain: Domain,
    x1_breaks: Vec<f64>,
    y1_breaks: Vec<f64>,
    a: Vec<f64>,
}

impl Transform2d {
    pub fn new(p: &InterfaceProblem) -> Result<Self> {
        let x1 = match p.domain {
            Domain::Rect { x1, .. } => x1,
            Domain::Interval { .. } => {
                return Err(Error::Config("Transform2d needs a 2D problem".into()))
            }
        };
        let a = p
            .a
            .pieces()
            .iter()
            .map(|f| {
                f.as_constant().ok_or_else(|| {
                    Error::Config(
                        "the 2D transform requires a piecewise-constant coefficient a".into(),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut x1_breaks = vec![x1.0];
        x1_breaks.extend_from_slice(&p.interfaces);
        x1_breaks.push(x1.1);
        let mut y1_breaks = vec![0.0];
        for k in 0..a.len() {
            let last = y1_breaks[k];
            y1_breaks.push(last + (x1_breaks[k + 1] - x1_breaks[k]) / a[k]);
        }
        Ok(Self { domain: p.domain, x1_breaks, y1_breaks, a })
    }

    /// Constant value of `a` on subdomain `i`.
    pub fn a(&self, i: usize) -> f64 {
        self.a[i]
    }

    fn x2_lo(&self) -> f64 {
        match self.domain {
            Domain::Rect { x2, .. } => x2.0,
            Domain::Interval { .. } => 0.0,
        }
    }

    fn piece(&self, x1: f64, side: Option<Side>) -> Result<usize> {
        let interior = &self.x1_breaks[1..self.x1_breaks.len() - 1];
        let below = interior.partition_point(|&b| b < x1);
        if below < interior.len() && interior[below] == x1 {
            return match side {
                Some(Side::Left) => Ok(below),
                Some(Side::Right) => Ok(below + 1),
                None => Err(Error::AmbiguousSide(x1)),
            };
        }
        Ok(below)
    }

    pub fn y(&self, x: [f64; 2], side: Option<Side>) -> Result<[f64; 2]> {
        if !self.domain.contains(&x) {
            return Err(Error::Domain(format!("point {x:?} outside the domain")));
        }
        let k = self.piece(x[0], side)?;
        Ok([
            self.y1_breaks[k] + (x[0] - self.x1_breaks[k]) / self.a[k],
            (x[1] - self.x2_lo()) / self.a[k],
        ])
    }

    pub fn x(&self, y: [f64; 2], side: Option<Side>) -> Result<[f64; 2]> {
        let interior = &self.y1_breaks[1..self.y1_breaks.len() - 1];
        let ymax = *self.y1_breaks.last().unwrap();
        if !(y[0] >= 0.0 && y[0] <= ymax) {
            return Err(Error::Domain(format!("y1 = {} outside [0, {ymax}]", y[0])));
        }
        let below = interior.partition_point(|&b| b < y[0]);
        let k = if below < interior.len() && interior[below] == y[0] {
            match side {
                Some(Side::Left) => below,
                Some(Side::Right) => below + 1,
                None => return Err(Error::AmbiguousSide(y[0])),
            }
        } else {
            below
        };
        let x = [
            self.x1_breaks[k] + self.a[k] * (y[0] - self.y1_breaks[k]),
            self.x2_lo() + self.a[k] * y[1],
        ];
        if !self.domain.contains(&x) {
            return Err(Error::Domain(format!("y = {y:?} outside the transformed domain")));
        }
        Ok(x)
    }
}

/// `(c, F) = (a b, a f)` at the point whose transformed coordinates are `y`.
pub fn transformed_coefficients(
    p: &InterfaceProblem,
    y: &[f64],
    side: Option<Side>,
) -> Result<(f64, f64)> {
    let (i, x) = match p.domain {
        Domain::Interval { .. } => {
            let t = Transform1d::from_problem(p)?;
            (t.piece_of_y(y[0], side)?, vec![t.x(y[0])?])
        }
        Domain::Rect { .. } => {
            let x = Transform2d::new(p)?.x([y[0], y[1]], side)?;
            (p.subdomain_of(x[0], side)?, x.to_vec())
        }
    };
    let a = p.a.eval_piece(i, &x);
    Ok((a * p.b.eval_piece(i, &x), a * p.f.eval_piece(i, &x)))
}
