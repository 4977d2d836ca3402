//! Tailored finite point solvers and operator networks for parameterized
//! elliptic interface problems
//!
//! ```text
//! -div(a grad u) + b u = f   in each subdomain
//! [u] = g_D,  [a grad u . n] = g_N   on the interface
//! u = h   on the outer boundary
//! ```
//!
//! * [`specialfn`]: overflow-safe Airy and modified Bessel functions.
//! * [`problem`]: piecewise coefficient fields, interface problems, the
//!   flux-normalizing coordinate transform, and the built-in examples.
//! * [`tfpm1d`] / [`tfpm2d`]: tailored finite point ground-truth solvers.
//! * [`nn`]: dense networks with hand-written reverse mode and Adam.
//! * [`operatornets`]: DeepONet, IONet and TFPONet models.
//! * [`training`]: input sampling, datasets, the jump-penalized loss.
//! * [`io`]: dataset and checkpoint containers, CSV helpers.
//! * [`experiment`]: end-to-end runs and plot exports.

pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod operatornets;
pub mod problem;
pub mod quadrature;
pub mod specialfn;
pub mod tfpm1d;
pub mod tfpm2d;
pub mod training;

pub use error::{Error, Result};
pub use problem::Side;
