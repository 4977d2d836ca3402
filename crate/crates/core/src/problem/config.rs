//! TOML/JSON problem definitions.
//!
//! ```toml
//! domain = [0.0, 1.0]               # or [[-1, 1], [-1, 1]] in 2D
//! interfaces = [0.5]
//! a = 1.0                            # one value for every subdomain
//! b = [5000.0, { affine = { intercept = 400.0, slope = 3200.0 } }]
//! f = "expr:sin_pi_x1"
//! g_d = 1.0
//! g_n = 1.0
//! [bc]
//! left = 0.0
//! right = 0.0
//! ```
//!
//! A value is a number, `"expr:<id>"`, or a table `{ constant = c }`,
//! `{ affine = { intercept, slope } }`, `{ expr = "<id>" }`,
//! `{ grid = { x = [..], values = [..] } }`. Field keys accept one value or a
//! list with one value per subdomain. An optional `example = "<id>"` starts
//! from a registered problem and overrides only the keys given.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::registry::{named_expression, registry_problem, ExampleId};
use super::{BoundaryData, Domain, GridFn, InterfaceProblem, PiecewiseField, ScalarFn};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Slope {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PieceTable {
    Constant(f64),
    Affine { intercept: f64, slope: Slope },
    Expr(String),
    Grid { x: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PieceSpec {
    Number(f64),
    Expr(String),
    Table(PieceTable),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Uniform(PieceSpec),
    PerSubdomain(Vec<PieceSpec>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DomainSpec {
    Interval([f64; 2]),
    Rect([[f64; 2]; 2]),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSpec {
    pub left: Option<f64>,
    pub right: Option<f64>,
    pub x1_min: Option<PieceSpec>,
    pub x1_max: Option<PieceSpec>,
    pub x2_min: Option<FieldSpec>,
    pub x2_max: Option<FieldSpec>,
}

/// Deserialized form of a problem file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: Option<String>,
    pub example: Option<ExampleId>,
    pub domain: Option<DomainSpec>,
    pub interfaces: Option<Vec<f64>>,
    pub a: Option<FieldSpec>,
    pub b: Option<FieldSpec>,
    pub f: Option<FieldSpec>,
    pub g_d: Option<FieldSpec>,
    pub g_n: Option<FieldSpec>,
    pub bc: Option<BcSpec>,
}

impl PieceSpec {
    fn build(&self) -> Result<ScalarFn> {
        match self {
            PieceSpec::Number(c) => Ok(ScalarFn::Constant(*c)),
            PieceSpec::Expr(s) => match s.strip_prefix("expr:") {
                Some(id) => named_expression(id),
                None => Err(Error::Config(format!(
                    "string values must look like 'expr:<id>', got '{s}'"
                ))),
            },
            PieceSpec::Table(PieceTable::Constant(c)) => Ok(ScalarFn::Constant(*c)),
            PieceSpec::Table(PieceTable::Affine { intercept, slope }) => Ok(ScalarFn::Affine {
                intercept: *intercept,
                slope: match slope {
                    Slope::Scalar(s) => vec![*s],
                    Slope::Vector(v) => v.clone(),
                },
            }),
            PieceSpec::Table(PieceTable::Expr(id)) => named_expression(id),
            PieceSpec::Table(PieceTable::Grid { x, values }) => {
                Ok(ScalarFn::Grid(GridFn::new(x.clone(), values.clone())?))
            }
        }
    }
}

impl FieldSpec {
    fn pieces(&self, count: usize, key: &str) -> Result<Vec<ScalarFn>> {
        match self {
            FieldSpec::Uniform(p) => Ok(vec![p.build()?; count]),
            FieldSpec::PerSubdomain(list) if list.len() == count => {
                list.iter().map(PieceSpec::build).collect()
            }
            FieldSpec::PerSubdomain(list) => Err(Error::Config(format!(
                "'{key}' lists {} values, expected {count}",
                list.len()
            ))),
        }
    }

    fn field(&self, breakpoints: &[f64], key: &str) -> Result<PiecewiseField> {
        PiecewiseField::new(breakpoints.to_vec(), self.pieces(breakpoints.len() + 1, key)?)
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<InterfaceProblem> {
        let mut p = match self.example {
            Some(id) => {
                let at = id.interface();
                let zero = PiecewiseField::new(
                    vec![at],
                    vec![ScalarFn::Constant(0.0), ScalarFn::Constant(0.0)],
                )?;
                registry_problem(id, zero)?
            }
            None => {
                let domain = match self.domain {
                    Some(DomainSpec::Interval([lo, hi])) => Domain::Interval { lo, hi },
                    Some(DomainSpec::Rect([x1, x2])) => {
                        Domain::Rect { x1: (x1[0], x1[1]), x2: (x2[0], x2[1]) }
                    }
                    None => return Err(Error::Config("missing key 'domain'".into())),
                };
                let interfaces = self.interfaces.clone().unwrap_or_default();
                let n = interfaces.len();
                let zeros = PiecewiseField::new(interfaces.clone(), vec![ScalarFn::Constant(0.0); n + 1])?;
                let bc = match domain {
                    Domain::Interval { .. } => BoundaryData::Interval { left: 0.0, right: 0.0 },
                    Domain::Rect { .. } => BoundaryData::Rect {
                        x1_min: ScalarFn::Constant(0.0),
                        x1_max: ScalarFn::Constant(0.0),
                        x2_min: zeros.clone(),
                        x2_max: zeros.clone(),
                    },
                };
                InterfaceProblem {
                    name: self.name.clone().unwrap_or_else(|| "custom".into()),
                    domain,
                    a: self
                        .a
                        .as_ref()
                        .ok_or_else(|| Error::Config("missing key 'a'".into()))?
                        .field(&interfaces, "a")?,
                    b: self
                        .b
                        .as_ref()
                        .ok_or_else(|| Error::Config("missing key 'b'".into()))?
                        .field(&interfaces, "b")?,
                    f: zeros.clone(),
                    g_d: vec![ScalarFn::Constant(0.0); n],
                    g_n: vec![ScalarFn::Constant(0.0); n],
                    interfaces,
                    bc,
                }
            }
        };
        if self.example.is_some() {
            if self.domain.is_some() || self.interfaces.is_some() {
                return Err(Error::Config(
                    "'domain' and 'interfaces' are fixed when 'example' is given".into(),
                ));
            }
            if let Some(a) = &self.a {
                p.a = a.field(&p.interfaces, "a")?;
            }
            if let Some(b) = &self.b {
                p.b = b.field(&p.interfaces, "b")?;
            }
            if let Some(name) = &self.name {
                p.name = name.clone();
            }
        }
        let n = p.interfaces.len();
        if let Some(f) = &self.f {
            p.f = f.field(&p.interfaces, "f")?;
        }
        if let Some(g) = &self.g_d {
            p.g_d = g.pieces(n, "g_d")?;
        }
        if let Some(g) = &self.g_n {
            p.g_n = g.pieces(n, "g_n")?;
        }
        if let Some(bc) = &self.bc {
            match &mut p.bc {
                BoundaryData::Interval { left, right } => {
                    if bc.x1_min.is_some() || bc.x1_max.is_some() || bc.x2_min.is_some() || bc.x2_max.is_some() {
                        return Err(Error::Config("1D 'bc' accepts only 'left' and 'right'".into()));
                    }
                    *left = bc.left.unwrap_or(*left);
                    *right = bc.right.unwrap_or(*right);
                }
                BoundaryData::Rect { x1_min, x1_max, x2_min, x2_max } => {
                    if bc.left.is_some() || bc.right.is_some() {
                        return Err(Error::Config(
                            "2D 'bc' accepts x1_min, x1_max, x2_min, x2_max".into(),
                        ));
                    }
                    if let Some(s) = &bc.x1_min {
                        *x1_min = s.build()?;
                    }
                    if let Some(s) = &bc.x1_max {
                        *x1_max = s.build()?;
                    }
                    if let Some(s) = &bc.x2_min {
                        *x2_min = s.field(&p.interfaces, "bc.x2_min")?;
                    }
                    if let Some(s) = &bc.x2_max {
                        *x2_max = s.field(&p.interfaces, "bc.x2_max")?;
                    }
                }
            }
        }
        p.validated()
    }
}

/// Parses a problem from TOML, or JSON when `json` is set.
pub fn problem_from_str(text: &str, json: bool) -> Result<InterfaceProblem> {
    let cfg: ProblemConfig = if json {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("problem JSON: {e}")))?
    } else {
        toml::from_str(text).map_err(|e| Error::Config(format!("problem TOML: {e}")))?
    };
    cfg.build()
}

/// Loads a problem file; `.json` files are JSON, everything else TOML.
pub fn load_problem(path: &Path) -> Result<InterfaceProblem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    problem_from_str(&text, json)
}
