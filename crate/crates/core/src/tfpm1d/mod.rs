//! Tailored finite point solver for 1D interface problems.
//!
//! After the stretching `y = int 1/a` the equation reads `-u_yy + c u = F`.
//! On every subinterval `u_h = alpha A1 + beta A2 + v` with exact local
//! solutions `A1, A2` of the frozen-coefficient equation and a
//! Green's-function particular term `v`. Value and `u_y` are matched at
//! every interior node (jumps `g_D`, `g_N` at interface images).

mod basis;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, BandedLu};
use crate::problem::{BoundaryData, InterfaceProblem, PiecewiseField, Side, Transform1d};

pub use basis::{build_local_basis, particular_term, BasisCase, BasisPoint, LocalBasis};

/// Nodes in `y`, with flags on the images of interfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1d {
    nodes: Vec<f64>,
    interface: Vec<bool>,
}

impl Mesh1d {
    pub fn new(nodes: Vec<f64>, interface: Vec<bool>) -> Result<Self> {
        if nodes.len() < 3 || nodes.len() != interface.len() {
            return Err(Error::Config("mesh needs >= 3 nodes and one flag per node".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("mesh nodes must increase strictly".into()));
        }
        if interface[0] || interface[nodes.len() - 1] {
            return Err(Error::Config("end nodes cannot be interfaces".into()));
        }
        let mut run = 0;
        for i in 1..nodes.len() {
            run += 1;
            if interface[i] || i == nodes.len() - 1 {
                if run < 2 {
                    return Err(Error::Config("each subdomain needs >= 2 subintervals".into()));
                }
                run = 0;
            }
        }
        Ok(Self { nodes, interface })
    }

    /// Images of `per_subdomain` equispaced `x` nodes on every subdomain
    /// (endpoints included, shared at interfaces).
    pub fn uniform_x(t: &Transform1d, per_subdomain: usize) -> Result<Self> {
        if per_subdomain < 3 {
            return Err(Error::Config("need >= 3 nodes per subdomain".into()));
        }
        let xb = t.x_breaks();
        let mut xs = vec![xb[0]];
        let mut flags = vec![false];
        for k in 0..xb.len() - 1 {
            let (l, r) = (xb[k], xb[k + 1]);
            let n = per_subdomain - 1;
            for i in 1..=n {
                xs.push(if i == n { r } else { l + (r - l) * i as f64 / n as f64 });
                flags.push(i == n && k + 2 < xb.len());
            }
        }
        Self::from_x(t, &xs, &flags)
    }

    /// Maps `x` nodes (which must contain every interface) to `y`.
    pub fn from_x(t: &Transform1d, xs: &[f64], flags: &[bool]) -> Result<Self> {
        let interior = &t.x_breaks()[1..t.x_breaks().len() - 1];
        for x in interior {
            let i = xs.iter().position(|v| v == x);
            if !i.is_some_and(|i| flags[i]) {
                return Err(Error::Config(format!("interface {x} must be a flagged node")));
            }
        }
        let ys = xs.iter().map(|&x| t.y(x)).collect::<Result<Vec<_>>>()?;
        Self::new(ys, flags.to_vec())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn interface_flags(&self) -> &[bool] {
        &self.interface
    }

    pub fn subintervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Subinterval holding `y`; flagged nodes need a side.
    pub fn locate(&self, y: f64, side: Option<Side>) -> Result<usize> {
        let n = self.nodes.len();
        if !(y >= self.nodes[0] && y <= self.nodes[n - 1]) {
            return Err(Error::Domain(format!("y = {y} outside the mesh")));
        }
        let i = self.nodes.partition_point(|&v| v < y);
        if i < n && self.nodes[i] == y {
            if i == 0 {
                return Ok(0);
            }
            if i == n - 1 {
                return Ok(n - 2);
            }
            return match (self.interface[i], side) {
                (false, Some(Side::Right)) => Ok(i),
                (false, _) => Ok(i - 1),
                (true, Some(Side::Left)) => Ok(i - 1),
                (true, Some(Side::Right)) => Ok(i),
                (true, None) => Err(Error::AmbiguousSide(y)),
            };
        }
        Ok(i - 1)
    }
}

/// Coefficient-dependent part of the solver: bases and the factorized
/// matching system. Reusable for any source and jump data.
#[derive(Debug, Clone)]
pub struct Tfpm1dSolver {
    problem: InterfaceProblem,
    transform: Transform1d,
    mesh: Mesh1d,
    bases: Vec<LocalBasis>,
    pieces: Vec<usize>,
    /// normalized basis values at the left and right end of each subinterval
    ends: Vec<[[(f64, f64); 2]; 2]>,
    lu: BandedLu,
}

impl Tfpm1dSolver {
    pub fn new(problem: &InterfaceProblem, mesh: Mesh1d) -> Result<Self> {
        let transform = Transform1d::from_problem(problem)?;
        let ys = mesh.nodes();
        if ys[0] != 0.0 || (ys[ys.len() - 1] - transform.y_max()).abs() > 1e-9 * transform.y_max() {
            return Err(Error::Config("mesh must span the transformed domain".into()));
        }
        for (k, &yb) in transform.y_breaks()[1..transform.y_breaks().len() - 1].iter().enumerate() {
            let ok = ys.iter().zip(mesh.interface_flags()).any(|(&y, &f)| f && (y - yb).abs() <= 1e-12 * yb.abs().max(1.0));
            if !ok {
                return Err(Error::Config(format!("interface {k} has no mesh node")));
            }
        }
        let m = mesh.subintervals();
        let mut bases = Vec::with_capacity(m);
        let mut pieces = Vec::with_capacity(m);
        let mut ends = Vec::with_capacity(m);
        for j in 0..m {
            let (yl, yr) = (ys[j], ys[j + 1]);
            let piece = transform.piece_of_y(0.5 * (yl + yr), None)?;
            let c = |y: f64| -> Result<f64> {
                let x = transform.x(y)?;
                Ok(problem.a.eval_piece(piece, &[x]) * problem.b.eval_piece(piece, &[x]))
            };
            let basis = build_local_basis(yl, yr, c(yl)?, c(yr)?)?;
            ends.push([basis.normalized(yl)?, basis.normalized(yr)?]);
            bases.push(basis);
            pieces.push(piece);
        }
        let lu = BandedLu::factor(&assemble_matrix(&ends))?;
        Ok(Self { problem: problem.clone(), transform, mesh, bases, pieces, ends, lu })
    }

    pub fn mesh(&self) -> &Mesh1d {
        &self.mesh
    }

    pub fn bases(&self) -> &[LocalBasis] {
        &self.bases
    }

    pub fn transform(&self) -> &Transform1d {
        &self.transform
    }

    pub fn condition_estimate(&self) -> f64 {
        self.lu.condition_estimate()
    }

    /// Solves with the problem's own source and jump data.
    pub fn solve(&self) -> Result<TfpmSolution1d> {
        self.solve_with_source(&self.problem.f)
    }

    /// Solves with a different source `f`.
    pub fn solve_with_source(&self, f: &PiecewiseField) -> Result<TfpmSolution1d> {
        let f = Arc::new(f.clone().conform(&self.problem.interfaces)?);
        let shared = Arc::new(Shared {
            transform: self.transform.clone(),
            mesh: self.mesh.clone(),
            bases: self.bases.clone(),
            pieces: self.pieces.clone(),
            a: self.problem.a.clone(),
        });
        let m = self.mesh.subintervals();
        let ys = self.mesh.nodes();
        let mut part = Vec::with_capacity(m);
        for j in 0..m {
            let src = source_fn(&shared, &f, j);
            part.push([
                particular_term(&self.bases[j], &src, ys[j])?,
                particular_term(&self.bases[j], &src, ys[j + 1])?,
            ]);
        }
        let (left, right) = match self.problem.bc {
            BoundaryData::Interval { left, right } => (left, right),
            BoundaryData::Rect { .. } => unreachable!("1D transform built"),
        };
        let mut rhs = vec![0.0; 2 * m];
        rhs[0] = left - part[0][0].0;
        let mut iface = 0;
        for i in 1..m {
            let (gd, gn) = if self.mesh.interface_flags()[i] {
                let x = self.problem.interfaces[iface];
                iface += 1;
                (self.problem.g_d[iface - 1].eval(&[x]), self.problem.g_n[iface - 1].eval(&[x]))
            } else {
                (0.0, 0.0)
            };
            rhs[2 * i - 1] = gd - (part[i][0].0 - part[i - 1][1].0);
            rhs[2 * i] = gn - (part[i][0].1 - part[i - 1][1].1);
        }
        rhs[2 * m - 1] = right - part[m - 1][1].0;
        let x = self.lu.solve(&rhs)?;
        let coeffs = (0..m).map(|j| [x[2 * j], x[2 * j + 1]]).collect();
        Ok(TfpmSolution1d { shared, f, coeffs, end_particular: part, ends: self.ends.clone() })
    }
}

fn assemble_matrix(ends: &[[[(f64, f64); 2]; 2]]) -> BandMatrix {
    let m = ends.len();
    let mut a = BandMatrix::zeros(2 * m, 2, 2);
    a.set(0, 0, ends[0][0][0].0);
    a.set(0, 1, ends[0][0][1].0);
    for i in 1..m {
        let (l, r) = (&ends[i - 1][1], &ends[i][0]);
        let (rv, rd) = (2 * i - 1, 2 * i);
        a.set(rv, 2 * i - 2, -l[0].0);
        a.set(rv, 2 * i - 1, -l[1].0);
        a.set(rv, 2 * i, r[0].0);
        a.set(rv, 2 * i + 1, r[1].0);
        a.set(rd, 2 * i - 2, -l[0].1);
        a.set(rd, 2 * i - 1, -l[1].1);
        a.set(rd, 2 * i, r[0].1);
        a.set(rd, 2 * i + 1, r[1].1);
    }
    a.set(2 * m - 1, 2 * m - 2, ends[m - 1][1][0].0);
    a.set(2 * m - 1, 2 * m - 1, ends[m - 1][1][1].0);
    a
}

#[derive(Debug)]
struct Shared {
    transform: Transform1d,
    mesh: Mesh1d,
    bases: Vec<LocalBasis>,
    pieces: Vec<usize>,
    a: PiecewiseField,
}

fn source_fn<'a>(shared: &'a Shared, f: &'a PiecewiseField, j: usize) -> impl Fn(f64) -> f64 + 'a {
    let piece = shared.pieces[j];
    move |y: f64| {
        let x = shared.transform.x(y).unwrap_or(f64::NAN);
        shared.a.eval_piece(piece, &[x]) * f.eval_piece(piece, &[x])
    }
}

/// Solved expansion, evaluable anywhere in the domain.
#[derive(Debug, Clone)]
pub struct TfpmSolution1d {
    shared: Arc<Shared>,
    f: Arc<PiecewiseField>,
    coeffs: Vec<[f64; 2]>,
    end_particular: Vec<[(f64, f64); 2]>,
    ends: Vec<[[(f64, f64); 2]; 2]>,
}

impl TfpmSolution1d {
    pub fn coefficients(&self) -> &[[f64; 2]] {
        &self.coeffs
    }

    pub fn bases(&self) -> &[LocalBasis] {
        &self.shared.bases
    }

    pub fn mesh(&self) -> &Mesh1d {
        &self.shared.mesh
    }

    pub fn transform(&self) -> &Transform1d {
        &self.shared.transform
    }

    /// `(u, u_y)` on subinterval `j` at `y`.
    pub fn eval_in(&self, j: usize, y: f64) -> Result<(f64, f64)> {
        let b = &self.shared.bases[j];
        let ys = self.shared.mesh.nodes();
        let ([(a1, d1), (a2, d2)], (v, dv)) = if y == ys[j] || y == ys[j + 1] {
            let e = usize::from(y == ys[j + 1]);
            (self.ends[j][e], self.end_particular[j][e])
        } else {
            let src = source_fn(&self.shared, &self.f, j);
            (b.normalized(y)?, particular_term(b, &src, y)?)
        };
        let [al, be] = self.coeffs[j];
        Ok((al * a1 + be * a2 + v, al * d1 + be * d2 + dv))
    }

    /// `(u, du/dx)`; interface points need a side.
    pub fn evaluate_with_derivative(&self, x: f64, side: Option<Side>) -> Result<(f64, f64)> {
        let t = &self.shared.transform;
        let y = t.y(x)?;
        let piece = self.shared.a.locate(x, side)?;
        let j = self.shared.mesh.locate(y, side)?;
        let (u, uy) = self.eval_in(j, y)?;
        Ok((u, uy / self.shared.a.eval_piece(piece, &[x])))
    }

    pub fn evaluate(&self, x: f64, side: Option<Side>) -> Result<f64> {
        Ok(self.evaluate_with_derivative(x, side)?.0)
    }

    /// Largest violation of the matching rows re-evaluated from the
    /// expansion: `(continuity, interface jumps)` in `y` variables.
    pub fn constraint_residuals(&self, problem: &InterfaceProblem) -> Result<(f64, f64)> {
        let ys = self.shared.mesh.nodes();
        let flags = self.shared.mesh.interface_flags();
        let (mut cont, mut jump) = (0.0f64, 0.0f64);
        let mut iface = 0;
        for i in 1..ys.len() - 1 {
            let (ul, dl) = self.eval_in(i - 1, ys[i])?;
            let (ur, dr) = self.eval_in(i, ys[i])?;
            let scale = 1.0 + ul.abs().max(ur.abs());
            let dscale = 1.0 + dl.abs().max(dr.abs());
            if flags[i] {
                let x = problem.interfaces[iface];
                let gd = problem.g_d[iface].eval(&[x]);
                let gn = problem.g_n[iface].eval(&[x]);
                iface += 1;
                jump = jump.max(((ur - ul) - gd).abs() / scale).max(((dr - dl) - gn).abs() / dscale);
            } else {
                cont = cont.max((ur - ul).abs() / scale).max((dr - dl).abs() / dscale);
            }
        }
        Ok((cont, jump))
    }
}

/// Solves `p` on `mesh` in one go.
pub fn assemble_and_solve(p: &InterfaceProblem, mesh: Mesh1d) -> Result<TfpmSolution1d> {
    Tfpm1dSolver::new(p, mesh)?.solve()
}

/// Ground-truth resolution: 2049 nodes per subdomain.
pub const GROUND_TRUTH_NODES: usize = 2049;
