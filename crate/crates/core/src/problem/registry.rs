//! Built-in problems and named closed-form expressions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{BoundaryData, Domain, InterfaceProblem, NamedFn, PiecewiseField, ScalarFn};

/// Closed forms addressable as `expr:<id>` in configs.
pub const NAMED_EXPRESSIONS: &[NamedFn] = &[
    NamedFn { id: "zero", func: |_| 0.0 },
    NamedFn { id: "one", func: |_| 1.0 },
    NamedFn { id: "x1", func: |p| p[0] },
    NamedFn { id: "x2", func: |p| p.get(1).copied().unwrap_or(0.0) },
    NamedFn { id: "sin_pi_x1", func: |p| (std::f64::consts::PI * p[0]).sin() },
    NamedFn { id: "exp_x1", func: |p| p[0].exp() },
    NamedFn { id: "one_minus_x1_sq", func: |p| 1.0 - p[0] * p[0] },
    NamedFn {
        id: "one_minus_x1_sq_squared",
        func: |p| {
            let t = 1.0 - p[0] * p[0];
            t * t
        },
    },
];

pub fn named_expression(id: &str) -> Result<ScalarFn> {
    NAMED_EXPRESSIONS
        .iter()
        .find(|n| n.id == id)
        .map(|n| ScalarFn::Named(*n))
        .ok_or_else(|| {
            let known: Vec<_> = NAMED_EXPRESSIONS.iter().map(|n| n.id).collect();
            Error::Config(format!("unknown expression '{id}', known: {}", known.join(", ")))
        })
}

/// The registered example problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    Example1Singular,
    Example1Contrast,
    Example2,
    Example3,
}

impl ExampleId {
    pub const ALL: [ExampleId; 4] = [
        ExampleId::Example1Singular,
        ExampleId::Example1Contrast,
        ExampleId::Example2,
        ExampleId::Example3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleId::Example1Singular => "example1_singular",
            ExampleId::Example1Contrast => "example1_contrast",
            ExampleId::Example2 => "example2",
            ExampleId::Example3 => "example3",
        }
    }

    pub fn dim(self) -> usize {
        if self == ExampleId::Example3 {
            2
        } else {
            1
        }
    }

    /// Location of the single interface.
    pub fn interface(self) -> f64 {
        if self == ExampleId::Example3 {
            0.0
        } else {
            0.5
        }
    }

    /// Extent of the first axis.
    pub fn first_axis(self) -> (f64, f64) {
        if self == ExampleId::Example3 {
            (-1.0, 1.0)
        } else {
            (0.0, 1.0)
        }
    }

    /// Whether the solution may jump, so one sub-model per subdomain is needed.
    pub fn has_jump(self) -> bool {
        matches!(self, ExampleId::Example2 | ExampleId::Example3)
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1_singular" | "1s" => Ok(ExampleId::Example1Singular),
            "example1_contrast" | "1c" => Ok(ExampleId::Example1Contrast),
            "example2" | "2" => Ok(ExampleId::Example2),
            "example3" | "3" => Ok(ExampleId::Example3),
            other => Err(Error::Config(format!(
                "unknown example '{other}' (use example1_singular|1s, example1_contrast|1c, example2|2, example3|3)"
            ))),
        }
    }
}

fn split(left: ScalarFn, right: ScalarFn, at: f64) -> PiecewiseField {
    PiecewiseField { breakpoints: vec![at], pieces: vec![left, right] }
}

fn example1(a: PiecewiseField, f: PiecewiseField, name: &str) -> Result<InterfaceProblem> {
    InterfaceProblem {
        name: name.into(),
        domain: Domain::Interval { lo: 0.0, hi: 1.0 },
        interfaces: vec![0.5],
        f: f.conform(&[0.5])?,
        a,
        b: split(ScalarFn::affine_1d(1.0, 2.0), ScalarFn::affine_1d(3.0, -2.0), 0.5),
        g_d: vec![ScalarFn::Constant(0.0)],
        g_n: vec![ScalarFn::Constant(0.0)],
        bc: BoundaryData::Interval { left: 0.0, right: 0.0 },
    }
    .validated()
}

/// `a = 1e-4`, `b = 2x + 1` left / `2(1 - x) + 1` right, no jumps.
pub fn example1_singular(f: PiecewiseField) -> Result<InterfaceProblem> {
    let a = split(ScalarFn::Constant(1e-4), ScalarFn::Constant(1e-4), 0.5);
    example1(a, f, ExampleId::Example1Singular.as_str())
}

/// As the singular variant but `a = 1` left and `1e-4` right.
pub fn example1_contrast(f: PiecewiseField) -> Result<InterfaceProblem> {
    let a = split(ScalarFn::Constant(1.0), ScalarFn::Constant(1e-4), 0.5);
    example1(a, f, ExampleId::Example1Contrast.as_str())
}

/// `a = 1`, `b = 5000` left / `100(4 + 32x)` right, `g_D = g_N = 1`.
pub fn example2(f: PiecewiseField) -> Result<InterfaceProblem> {
    InterfaceProblem {
        name: ExampleId::Example2.as_str().into(),
        domain: Domain::Interval { lo: 0.0, hi: 1.0 },
        interfaces: vec![0.5],
        a: split(ScalarFn::Constant(1.0), ScalarFn::Constant(1.0), 0.5),
        b: split(ScalarFn::Constant(5000.0), ScalarFn::affine_1d(400.0, 3200.0), 0.5),
        f: f.conform(&[0.5])?,
        g_d: vec![ScalarFn::Constant(1.0)],
        g_n: vec![ScalarFn::Constant(1.0)],
        bc: BoundaryData::Interval { left: 0.0, right: 0.0 },
    }
    .validated()
}

/// Square `[-1, 1]^2` split at `x1 = 0`; `a = 0.001`, `b = (1 - x1^2)^2`
/// left / `0.001` right, zero source, `[u] = 1`, zero flux jump, `u = 0` on
/// `x1 = +-1` and `u = boundary(x1)` on `x2 = +-1`.
pub fn example3(boundary: PiecewiseField) -> Result<InterfaceProblem> {
    let boundary = boundary.conform(&[0.0])?;
    InterfaceProblem {
        name: ExampleId::Example3.as_str().into(),
        domain: Domain::Rect { x1: (-1.0, 1.0), x2: (-1.0, 1.0) },
        interfaces: vec![0.0],
        a: split(ScalarFn::Constant(1e-3), ScalarFn::Constant(1e-3), 0.0),
        b: split(named_expression("one_minus_x1_sq_squared")?, ScalarFn::Constant(1e-3), 0.0),
        f: split(ScalarFn::Constant(0.0), ScalarFn::Constant(0.0), 0.0),
        g_d: vec![ScalarFn::Constant(1.0)],
        g_n: vec![ScalarFn::Constant(0.0)],
        bc: BoundaryData::Rect {
            x1_min: ScalarFn::Constant(0.0),
            x1_max: ScalarFn::Constant(0.0),
            x2_min: boundary.clone(),
            x2_max: boundary,
        },
    }
    .validated()
}

/// Instantiates a registered problem with the given input function (the
/// source in 1D, the `x2 = +-1` boundary data in 2D).
pub fn registry_problem(id: ExampleId, input: PiecewiseField) -> Result<InterfaceProblem> {
    match id {
        ExampleId::Example1Singular => example1_singular(input),
        ExampleId::Example1Contrast => example1_contrast(input),
        ExampleId::Example2 => example2(input),
        ExampleId::Example3 => example3(input),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero(at: f64) -> PiecewiseField {
        split(ScalarFn::Constant(0.0), ScalarFn::Constant(0.0), at)
    }

    #[test]
    fn coefficients_match_definitions() {
        let p = example1_contrast(zero(0.5)).unwrap();
        assert_eq!(p.a.eval(&[0.25], None).unwrap(), 1.0);
        assert_eq!(p.a.eval(&[0.5], Some(super::super::Side::Right)).unwrap(), 1e-4);
        assert_eq!(p.b.eval(&[0.25], None).unwrap(), 1.5);
        assert_eq!(p.b.eval(&[0.75], None).unwrap(), 1.5);
        let p = example2(zero(0.5)).unwrap();
        assert_eq!(p.b.eval(&[0.75], None).unwrap(), 100.0 * (4.0 + 32.0 * 0.75));
        let p = example3(zero(0.0)).unwrap();
        assert!((p.b.eval(&[-0.5, 0.3], None).unwrap() - 0.5625).abs() < 1e-15);
        assert_eq!(p.dim(), 2);
    }

    #[test]
    fn ids_round_trip() {
        for id in ExampleId::ALL {
            assert_eq!(id.as_str().parse::<ExampleId>().unwrap(), id);
        }
        assert!("example4".parse::<ExampleId>().is_err());
        assert!(named_expression("nope").is_err());
    }
}
