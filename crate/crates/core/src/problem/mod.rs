//! Interface problems `-div(a grad u) + b u = f` with piecewise data.
//!
//! Interfaces are points in 1D and vertical lines `x1 = const` in 2D, so
//! every piecewise field is split along the first coordinate only.

mod config;
mod registry;
mod transform;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{load_problem, problem_from_str, ProblemConfig};
pub use registry::{
    example1_contrast, example1_singular, example2, example3, named_expression, registry_problem,
    ExampleId, NAMED_EXPRESSIONS,
};
pub use transform::{transform_y_1d, transformed_coefficients, Transform1d, Transform2d};

/// Which one-sided limit to take at an interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(Error::Config(format!("unknown side '{other}'"))),
        }
    }
}

/// Linear interpolation of samples along the first coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(Error::Config(format!(
                "grid function needs >= 2 matching samples, got {} x and {} values",
                xs.len(),
                values.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid abscissae must increase strictly".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid values must be finite".into()));
        }
        Ok(Self { xs, values })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values beyond the sampled range are held constant.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.values[0];
        }
        if x >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        let i = self.xs.partition_point(|&g| g <= x) - 1;
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }
}

/// A closed form registered under a name, see [`NAMED_EXPRESSIONS`].
#[derive(Clone, Copy)]
pub struct NamedFn {
    pub id: &'static str,
    pub func: fn(&[f64]) -> f64,
}

impl fmt::Debug for NamedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expr:{}", self.id)
    }
}

/// Scalar function of a point with one or two coordinates.
#[derive(Clone)]
pub enum ScalarFn {
    Constant(f64),
    /// `intercept + slope . x`
    Affine { intercept: f64, slope: Vec<f64> },
    Named(NamedFn),
    Grid(GridFn),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Constant(c) => write!(f, "Constant({c})"),
            ScalarFn::Affine { intercept, slope } => write!(f, "Affine({intercept}, {slope:?})"),
            ScalarFn::Named(n) => write!(f, "{n:?}"),
            ScalarFn::Grid(g) => write!(f, "Grid({} samples)", g.xs.len()),
            ScalarFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ScalarFn {
    pub fn custom<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        ScalarFn::Custom(Arc::new(f))
    }

    pub fn affine_1d(intercept: f64, slope: f64) -> Self {
        ScalarFn::Affine { intercept, slope: vec![slope] }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            ScalarFn::Constant(c) => *c,
            ScalarFn::Affine { intercept, slope } => {
                intercept + slope.iter().zip(p).map(|(s, x)| s * x).sum::<f64>()
            }
            ScalarFn::Named(n) => (n.func)(p),
            ScalarFn::Grid(g) => g.eval(p[0]),
            ScalarFn::Custom(f) => f(p),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalarFn::Constant(c) => Some(*c),
            ScalarFn::Affine { intercept, slope } if slope.iter().all(|&s| s == 0.0) => {
                Some(*intercept)
            }
            _ => None,
        }
    }

    /// `(intercept, slope)` when the function is affine in the first coordinate only.
    pub fn as_affine_1d(&self) -> Option<(f64, f64)> {
        match self {
            ScalarFn::Constant(c) => Some((*c, 0.0)),
            ScalarFn::Affine { intercept, slope } if slope.iter().skip(1).all(|&s| s == 0.0) => {
                Some((*intercept, slope.first().copied().unwrap_or(0.0)))
            }
            _ => None,
        }
    }
}

/// A function defined piece by piece on the subdomains cut out by
/// `breakpoints` (coordinates along the first axis).
#[derive(Debug, Clone)]
pub struct PiecewiseField {
    breakpoints: Vec<f64>,
    pieces: Vec<ScalarFn>,
}

impl PiecewiseField {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<ScalarFn>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::Config(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("breakpoints must increase strictly".into()));
        }
        Ok(Self { breakpoints, pieces })
    }

    pub fn uniform(f: ScalarFn) -> Self {
        Self { breakpoints: vec![], pieces: vec![f] }
    }

    pub fn constant(c: f64) -> Self {
        Self::uniform(ScalarFn::Constant(c))
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[ScalarFn] {
        &self.pieces
    }

    pub fn piece(&self, i: usize) -> &ScalarFn {
        &self.pieces[i]
    }

    /// Index of the piece owning `x`; interface points need a side.
    pub fn locate(&self, x: f64, side: Option<Side>) -> Result<usize> {
        let below = self.breakpoints.partition_point(|&b| b < x);
        if below < self.breakpoints.len() && self.breakpoints[below] == x {
            return match side {
                Some(Side::Left) => Ok(below),
                Some(Side::Right) => Ok(below + 1),
                None => Err(Error::AmbiguousSide(x)),
            };
        }
        Ok(below)
    }

    pub fn eval(&self, p: &[f64], side: Option<Side>) -> Result<f64> {
        let i = self.locate(p[0], side)?;
        Ok(self.pieces[i].eval(p))
    }

    /// Re-expresses the field on the given breakpoints; a uniform field is
    /// replicated onto every piece.
    pub fn conform(self, breakpoints: &[f64]) -> Result<Self> {
        if self.breakpoints == breakpoints {
            return Ok(self);
        }
        if self.pieces.len() == 1 {
            let piece = self.pieces.into_iter().next().unwrap();
            return Self::new(breakpoints.to_vec(), vec![piece; breakpoints.len() + 1]);
        }
        Err(Error::Config(format!(
            "field breaks at {:?}, expected {breakpoints:?}",
            self.breakpoints
        )))
    }

    /// Evaluates a given piece without any interface bookkeeping.
    pub fn eval_piece(&self, i: usize, p: &[f64]) -> f64 {
        self.pieces[i].eval(p)
    }
}

/// Bounding box of the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    Rect { x1: (f64, f64), x2: (f64, f64) },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rect { .. } => 2,
        }
    }

    /// Extent along the first axis.
    pub fn first_axis(&self) -> (f64, f64) {
        match *self {
            Domain::Interval { lo, hi } => (lo, hi),
            Domain::Rect { x1, .. } => x1,
        }
    }

    /// Lower and upper corners.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match *self {
            Domain::Interval { lo, hi } => (vec![lo], vec![hi]),
            Domain::Rect { x1, x2 } => (vec![x1.0, x2.0], vec![x1.1, x2.1]),
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match *self {
            Domain::Interval { lo, hi } => p[0] >= lo && p[0] <= hi,
            Domain::Rect { x1, x2 } => p[0] >= x1.0 && p[0] <= x1.1 && p[1] >= x2.0 && p[1] <= x2.1,
        }
    }
}

/// Dirichlet data on the outer boundary.
#[derive(Debug, Clone)]
pub enum BoundaryData {
    Interval { left: f64, right: f64 },
    /// `x1_min`/`x1_max` are functions of the point on the vertical sides,
    /// `x2_min`/`x2_max` piecewise along `x1` on the horizontal sides.
    Rect {
        x1_min: ScalarFn,
        x1_max: ScalarFn,
        x2_min: PiecewiseField,
        x2_max: PiecewiseField,
    },
}

/// A fully specified elliptic interface problem.
#[derive(Debug, Clone)]
pub struct InterfaceProblem {
    pub name: String,
    pub domain: Domain,
    /// Interface coordinates along the first axis, strictly increasing.
    pub interfaces: Vec<f64>,
    pub a: PiecewiseField,
    pub b: PiecewiseField,
    pub f: PiecewiseField,
    /// Solution jump `[u]`, one entry per interface.
    pub g_d: Vec<ScalarFn>,
    /// Flux jump `[a grad u . n]`, one entry per interface.
    pub g_n: Vec<ScalarFn>,
    pub bc: BoundaryData,
}

impl InterfaceProblem {
    /// Checks the structural invariants and returns the problem.
    pub fn validated(self) -> Result<Self> {
        let (lo, hi) = self.domain.first_axis();
        if lo >= hi {
            return Err(Error::Config(format!("empty domain [{lo}, {hi}]")));
        }
        if self.interfaces.windows(2).any(|w| w[1] <= w[0])
            || self.interfaces.iter().any(|&x| x <= lo || x >= hi)
        {
            return Err(Error::Config("interfaces must be increasing and interior".into()));
        }
        for (name, field) in [("a", &self.a), ("b", &self.b), ("f", &self.f)] {
            if field.breakpoints() != self.interfaces.as_slice() {
                return Err(Error::Config(format!(
                    "field '{name}' must break exactly at the interfaces {:?}",
                    self.interfaces
                )));
            }
        }
        if self.g_d.len() != self.interfaces.len() || self.g_n.len() != self.interfaces.len() {
            return Err(Error::Config("one g_d and one g_n entry per interface".into()));
        }
        match (&self.domain, &self.bc) {
            (Domain::Interval { .. }, BoundaryData::Interval { .. }) => {}
            (Domain::Rect { .. }, BoundaryData::Rect { .. }) => {
                if self.interfaces.len() > 1 {
                    return Err(Error::Config("2D problems support at most one interface".into()));
                }
            }
            _ => return Err(Error::Config("boundary data does not match the domain".into())),
        }
        // positivity of a / nonnegativity of b on a probe grid of every piece
        for i in 0..self.subdomain_count() {
            let (l, r) = self.subdomain_bounds(i);
            for k in 0..=16 {
                let x = l + (r - l) * (k as f64 + 0.5) / 17.5;
                let p = match self.domain {
                    Domain::Interval { .. } => vec![x],
                    Domain::Rect { x2, .. } => vec![x, 0.5 * (x2.0 + x2.1)],
                };
                let a = self.a.eval_piece(i, &p);
                let b = self.b.eval_piece(i, &p);
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::Config(format!("a must be > 0, got {a} at x = {x}")));
                }
                if b < -1e-12 || !b.is_finite() {
                    return Err(Error::Config(format!("b must be >= 0, got {b} at x = {x}")));
                }
            }
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn subdomain_count(&self) -> usize {
        self.interfaces.len() + 1
    }

    /// Extent of subdomain `i` along the first axis.
    pub fn subdomain_bounds(&self, i: usize) -> (f64, f64) {
        let (lo, hi) = self.domain.first_axis();
        let l = if i == 0 { lo } else { self.interfaces[i - 1] };
        let r = if i == self.interfaces.len() { hi } else { self.interfaces[i] };
        (l, r)
    }

    /// Subdomain holding the point; interface points need a side.
    pub fn subdomain_of(&self, x: f64, side: Option<Side>) -> Result<usize> {
        let (lo, hi) = self.domain.first_axis();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!("x = {x} outside [{lo}, {hi}]")));
        }
        self.a.locate(x, side)
    }

    pub fn is_interface(&self, x: f64) -> bool {
        self.interfaces.contains(&x)
    }

    /// Returns a copy with a different source `f`.
    pub fn with_source(&self, f: PiecewiseField) -> Result<Self> {
        let mut p = self.clone();
        p.f = f;
        p.validated()
    }
}

/// One-sided value and derivative of a solution at an interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSided {
    pub value: f64,
    pub derivative: f64,
}

/// `([u], [a du/dn])` with the normal pointing from the left to the right
/// subdomain.
pub fn jump_operators(left: OneSided, right: OneSided, a_left: f64, a_right: f64) -> (f64, f64) {
    (
        right.value - left.value,
        a_right * right.derivative - a_left * left.derivative,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(value: f64, derivative: f64) -> OneSided {
        OneSided { value, derivative }
    }

    #[test]
    fn jump_examples() {
        assert_eq!(jump_operators(os(1.0, 2.0), os(2.0, 2.0), 1.0, 1.0), (1.0, 0.0));
        assert_eq!(jump_operators(os(0.3, -1.0), os(0.3, -1.0), 2.0, 2.0), (0.0, 0.0));
        let (ju, jf) = jump_operators(os(0.0, 1.0), os(0.0, 1.0), 1.0, 1e-4);
        assert_eq!(ju, 0.0);
        assert!((jf + 0.9999).abs() < 1e-15);
    }

    #[test]
    fn interface_evaluation_needs_side() {
        let f = PiecewiseField::new(
            vec![0.5],
            vec![ScalarFn::Constant(1.0), ScalarFn::Constant(2.0)],
        )
        .unwrap();
        assert!(matches!(f.eval(&[0.5], None), Err(Error::AmbiguousSide(_))));
        assert_eq!(f.eval(&[0.5], Some(Side::Left)).unwrap(), 1.0);
        assert_eq!(f.eval(&[0.5], Some(Side::Right)).unwrap(), 2.0);
        assert_eq!(f.eval(&[0.25], None).unwrap(), 1.0);
        assert_eq!(f.eval(&[0.75], Some(Side::Left)).unwrap(), 2.0);
    }

    #[test]
    fn grid_interpolates_linearly() {
        let g = GridFn::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(g.eval(0.5), 1.0);
        assert_eq!(g.eval(2.0), 1.0);
        assert_eq!(g.eval(-1.0), 0.0);
        assert!(GridFn::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn validation_rejects_bad_problems() {
        let p = example2(PiecewiseField::constant(0.0)).unwrap();
        let mut bad = p.clone();
        bad.a = PiecewiseField::new(vec![0.5], vec![ScalarFn::Constant(1.0), ScalarFn::Constant(-1.0)])
            .unwrap();
        assert!(bad.validated().is_err());
        let mut bad = p.clone();
        bad.g_d.clear();
        assert!(bad.validated().is_err());
        let mut bad = p;
        bad.interfaces = vec![1.5];
        assert!(bad.validated().is_err());
    }
}
