//! DeepONet, TFPONet and per-subdomain composites of either.
//!
//! A TFPONet adds to a DeepONet `K` scalar networks fed with local-basis
//! values `B_i(x)`:
//!
//! ```text
//! N(f)(x) = branch(f) . trunk(x) + bias + sum_i NN_i(B_i(x))
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activations, Mlp};
use crate::problem::{registry_problem, ExampleId, InterfaceProblem, PiecewiseField, Side, Transform1d};
use crate::tfpm1d::{build_local_basis, LocalBasis};
use crate::tfpm2d::{radial_ratio, CellGrid};

/// Feature-mesh subintervals per subdomain in 1D.
pub const FEATURE_SUBINTERVALS: usize = 1;
/// Feature-grid cells per axis in 2D.
pub const FEATURE_CELLS: usize = 10;
/// Number of basis blocks.
pub const BASIS_BLOCKS: usize = 2;

/// Which architecture a [`CompositeModel`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    /// one DeepONet over the whole domain
    DeepOnet,
    /// one DeepONet per subdomain
    IoNet,
    /// one TFPONet per subdomain when the example prescribes interface
    /// jumps, otherwise a single TFPONet with piecewise basis features
    Tfponet,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::DeepOnet => "deeponet",
            ModelFamily::IoNet => "ionet",
            ModelFamily::Tfponet => "tfponet",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deeponet" => Ok(ModelFamily::DeepOnet),
            "ionet" => Ok(ModelFamily::IoNet),
            "tfponet" => Ok(ModelFamily::Tfponet),
            other => Err(Error::Config(format!("unknown model family '{other}' (deeponet|ionet|tfponet)"))),
        }
    }
}

/// Layer sizes of the sub-networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub branch: Vec<usize>,
    pub trunk: Vec<usize>,
    pub basis: Vec<usize>,
}

impl Architecture {
    /// Single hidden layer of width 100, latent size 100, basis width 20.
    pub fn one_d(sensors: usize) -> Self {
        Self { branch: vec![sensors, 100, 100], trunk: vec![1, 100, 100], basis: vec![1, 20, 1] }
    }

    /// Two hidden layers of width 128.
    pub fn two_d(sensors: usize) -> Self {
        Self {
            branch: vec![sensors, 128, 128, 128],
            trunk: vec![2, 128, 128, 128],
            basis: vec![1, 128, 128, 1],
        }
    }

    pub fn for_dim(dim: usize, sensors: usize) -> Self {
        if dim == 1 {
            Self::one_d(sensors)
        } else {
            Self::two_d(sensors)
        }
    }

    pub fn sensors(&self) -> usize {
        self.branch[0]
    }

    pub fn dim(&self) -> usize {
        self.trunk[0]
    }

    fn validate(&self) -> Result<()> {
        let (b, t) = (self.branch.last(), self.trunk.last());
        if b != t {
            return Err(Error::Shape(format!("branch latent {b:?} differs from trunk latent {t:?}")));
        }
        if self.basis.first() != Some(&1) || self.basis.last() != Some(&1) {
            return Err(Error::Shape("basis networks must map scalars to scalars".into()));
        }
        Ok(())
    }
}

/// `branch(f) . trunk(s) + bias` with the trunk fed the rescaled location
/// `s = (x - center) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepOnet {
    pub branch: Mlp,
    pub trunk: Mlp,
    pub bias: f64,
    /// per-axis trunk input centering; empty means identity
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default)]
    pub scale: Vec<f64>,
}

/// DeepONet plus basis blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tfponet {
    pub deeponet: DeepOnet,
    pub basis: Vec<Mlp>,
}

/// One member of a composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SubModel {
    DeepOnet(DeepOnet),
    Tfponet(Tfponet),
}

/// Forward state kept for [`SubModel::backward_grid`].
#[derive(Debug, Clone)]
pub struct SubCache {
    branch: Activations,
    trunk: Activations,
    basis: Vec<Activations>,
}

impl DeepOnet {
    pub fn new(branch: Mlp, trunk: Mlp, bias: f64) -> Result<Self> {
        if branch.output_dim() != trunk.output_dim() {
            return Err(Error::Shape("branch and trunk latent sizes differ".into()));
        }
        Ok(Self { branch, trunk, bias, center: Vec::new(), scale: Vec::new() })
    }

    /// Maps the box `lo..hi` onto `[-1, 1]` per axis before the trunk.
    pub fn with_input_box(mut self, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != self.trunk.input_dim() || hi.len() != lo.len() || lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
            return Err(Error::Shape(format!("invalid trunk input box {lo:?}..{hi:?}")));
        }
        self.center = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
        self.scale = lo.iter().zip(hi).map(|(l, h)| 2.0 / (h - l)).collect();
        Ok(self)
    }

    /// Trunk input for location `x`.
    pub fn trunk_input(&self, x: &[f64]) -> Vec<f64> {
        if self.center.is_empty() {
            return x.to_vec();
        }
        x.iter().zip(&self.center).zip(&self.scale).map(|((x, c), s)| (x - c) * s).collect()
    }

    fn trunk_inputs(&self, locations: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut m = locations.to_owned();
        if !self.center.is_empty() {
            for mut row in m.rows_mut() {
                for ((v, c), s) in row.iter_mut().zip(&self.center).zip(&self.scale) {
                    *v = (*v - c) * s;
                }
            }
        }
        m
    }

    /// `d s_0 / d x_0`.
    fn first_axis_scale(&self) -> f64 {
        self.scale.first().copied().unwrap_or(1.0)
    }

    /// Output for one sensor vector and location.
    pub fn forward(&self, sensors: &[f64], x: &[f64]) -> Result<f64> {
        let b = self.branch.forward(sensors)?;
        let t = self.trunk.forward(&self.trunk_input(x))?;
        Ok(b.iter().zip(&t).map(|(b, t)| b * t).sum::<f64>() + self.bias)
    }
}

impl Tfponet {
    /// Output for one sensor vector, location and (normalized) feature vector.
    pub fn forward(&self, sensors: &[f64], x: &[f64], features: &[f64]) -> Result<f64> {
        if features.len() != self.basis.len() {
            return Err(Error::Shape(format!("{} features for {} basis blocks", features.len(), self.basis.len())));
        }
        let mut extra = 0.0;
        for (net, &b) in self.basis.iter().zip(features) {
            extra += net.forward(&[b])?[0];
        }
        Ok(self.deeponet.forward(sensors, x)? + extra)
    }
}

impl SubModel {
    pub fn deeponet(&self) -> &DeepOnet {
        match self {
            SubModel::DeepOnet(d) => d,
            SubModel::Tfponet(t) => &t.deeponet,
        }
    }

    pub fn basis_blocks(&self) -> usize {
        match self {
            SubModel::DeepOnet(_) => 0,
            SubModel::Tfponet(t) => t.basis.len(),
        }
    }

    fn nets(&self) -> Vec<&Mlp> {
        let d = self.deeponet();
        let mut v = vec![&d.branch, &d.trunk];
        if let SubModel::Tfponet(t) = self {
            v.extend(t.basis.iter());
        }
        v
    }

    fn nets_mut(&mut self) -> (Vec<&mut Mlp>, &mut f64) {
        match self {
            SubModel::DeepOnet(d) => (vec![&mut d.branch, &mut d.trunk], &mut d.bias),
            SubModel::Tfponet(t) => {
                let mut v = vec![&mut t.deeponet.branch, &mut t.deeponet.trunk];
                v.extend(t.basis.iter_mut());
                (v, &mut t.deeponet.bias)
            }
        }
    }

    /// Parameter count; layout is branch, trunk, bias, basis nets.
    pub fn n_params(&self) -> usize {
        self.nets().iter().map(|n| n.n_params()).sum::<usize>() + 1
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        let nets = self.nets();
        out.extend_from_slice(nets[0].params());
        out.extend_from_slice(nets[1].params());
        out.push(self.deeponet().bias);
        for n in &nets[2..] {
            out.extend_from_slice(n.params());
        }
    }

    /// Loads parameters from the front of `src`, returning how many were used.
    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let need = self.n_params();
        if src.len() < need {
            return Err(Error::Shape(format!("{} parameters left, sub-model needs {need}", src.len())));
        }
        let (mut nets, bias) = self.nets_mut();
        let mut off = 0;
        for (i, n) in nets.iter_mut().enumerate() {
            if i == 2 {
                *bias = src[off];
                off += 1;
            }
            let k = n.n_params();
            n.params_mut().copy_from_slice(&src[off..off + k]);
            off += k;
        }
        if nets.len() == 2 {
            *bias = src[off];
            off += 1;
        }
        Ok(off)
    }

    /// Outputs `U[m, j]` for every sensor row `m` and location row `j`.
    /// `features` holds one normalized feature row per location.
    pub fn forward_grid(
        &self,
        sensors: ArrayView2<'_, f64>,
        locations: ArrayView2<'_, f64>,
        features: Option<ArrayView2<'_, f64>>,
    ) -> Result<(Array2<f64>, SubCache)> {
        let d = self.deeponet();
        let branch = d.branch.forward_batch(sensors)?;
        let trunk = d.trunk.forward_batch(d.trunk_inputs(locations).view())?;
        let mut u = branch.output.dot(&trunk.output.t());
        u += d.bias;
        let mut basis = Vec::new();
        if let SubModel::Tfponet(t) = self {
            let feats = features.ok_or_else(|| Error::Shape("TFPONet needs basis features".into()))?;
            if feats.dim() != (locations.nrows(), t.basis.len()) {
                return Err(Error::Shape(format!(
                    "features {:?} do not match {} locations x {} blocks",
                    feats.dim(),
                    locations.nrows(),
                    t.basis.len()
                )));
            }
            let mut extra = ndarray::Array1::<f64>::zeros(locations.nrows());
            for (i, net) in t.basis.iter().enumerate() {
                let col = feats.column(i).to_owned().insert_axis(Axis(1));
                let acts = net.forward_batch(col.view())?;
                extra += &acts.output.column(0);
                basis.push(acts);
            }
            u += &extra;
        }
        Ok((u, SubCache { branch, trunk, basis }))
    }

    /// Adds the gradient of `sum(du * U)` to `grad` (laid out as
    /// [`SubModel::write_params`]).
    pub fn backward_grid(&self, cache: &SubCache, du: ArrayView2<'_, f64>, grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.n_params() {
            return Err(Error::Shape("gradient buffer size mismatch".into()));
        }
        let d = self.deeponet();
        let (nb, nt) = (d.branch.n_params(), d.trunk.n_params());
        let d_branch = du.dot(&cache.trunk.output);
        let d_trunk = du.t().dot(&cache.branch.output);
        d.branch.backward_batch(&cache.branch, d_branch.view(), &mut grad[..nb])?;
        d.trunk.backward_batch(&cache.trunk, d_trunk.view(), &mut grad[nb..nb + nt])?;
        grad[nb + nt] += du.sum();
        if let SubModel::Tfponet(t) = self {
            let col = du.sum_axis(Axis(0)).insert_axis(Axis(1));
            let mut off = nb + nt + 1;
            for (net, acts) in t.basis.iter().zip(&cache.basis) {
                let k = net.n_params();
                net.backward_batch(acts, col.view(), &mut grad[off..off + k])?;
                off += k;
            }
        }
        Ok(())
    }

    /// Value and first-axis derivative at one point by the analytic
    /// input-gradient path; `dfeatures` are derivatives of the normalized
    /// features along the first axis.
    pub fn value_and_derivative(
        &self,
        sensors: &[f64],
        x: &[f64],
        features: &[f64],
        dfeatures: &[f64],
    ) -> Result<(f64, f64)> {
        let d = self.deeponet();
        let b = d.branch.forward(sensors)?;
        let s = d.trunk_input(x);
        let t = d.trunk.forward(&s)?;
        let mut u = b.iter().zip(&t).map(|(b, t)| b * t).sum::<f64>() + d.bias;
        let (_, gx) = d.trunk.backward(&s, &b)?;
        let mut du = gx[0] * d.first_axis_scale();
        if let SubModel::Tfponet(tf) = self {
            for ((net, &f), &df) in tf.basis.iter().zip(features).zip(dfeatures) {
                u += net.forward(&[f])?[0];
                let (_, g) = net.backward(&[f], &[1.0])?;
                du += g[0] * df;
            }
        }
        Ok((u, du))
    }
}

/// Problem-derived local-basis features (before normalization).
#[derive(Debug, Clone)]
pub enum FeatureMap {
    /// `bases[piece * FEATURE_SUBINTERVALS + k]` covers the `k`-th uniform
    /// y-subinterval of subdomain `piece`.
    OneD { transform: Transform1d, bases: Vec<LocalBasis>, a: PiecewiseField },
    TwoD { grid: CellGrid },
}

impl FeatureMap {
    pub fn for_problem(p: &InterfaceProblem) -> Result<Self> {
        if p.dim() == 1 {
            let t = Transform1d::from_problem(p)?;
            let yb = t.y_breaks();
            let n = FEATURE_SUBINTERVALS;
            let mut bases = Vec::with_capacity((yb.len() - 1) * n);
            for piece in 0..yb.len() - 1 {
                let c = |y: f64| -> Result<f64> {
                    let x = t.x(y)?;
                    Ok(p.a.eval_piece(piece, &[x]) * p.b.eval_piece(piece, &[x]))
                };
                let h = (yb[piece + 1] - yb[piece]) / n as f64;
                for k in 0..n {
                    let yl = yb[piece] + h * k as f64;
                    let yr = if k + 1 == n { yb[piece + 1] } else { yl + h };
                    bases.push(build_local_basis(yl, yr, c(yl)?, c(yr)?)?);
                }
            }
            Ok(FeatureMap::OneD { transform: t, bases, a: p.a.clone() })
        } else {
            Ok(FeatureMap::TwoD { grid: CellGrid::new(p, FEATURE_CELLS, FEATURE_CELLS)? })
        }
    }

    /// Raw features and their derivatives along the first axis.
    pub fn raw_with_derivative(&self, x: &[f64], side: Option<Side>) -> Result<([f64; 2], [f64; 2])> {
        match self {
            FeatureMap::OneD { transform, bases, a } => {
                let y = transform.y(x[0])?;
                let piece = transform.piece_of_y(y, side)?;
                let yb = transform.y_breaks();
                let n = FEATURE_SUBINTERVALS;
                let k = ((y - yb[piece]) / (yb[piece + 1] - yb[piece]) * n as f64).floor();
                let j = piece * n + (k.max(0.0) as usize).min(n - 1);
                let [(a1, d1), (a2, d2)] = bases[j].normalized(y)?;
                let ax = a.eval_piece(piece, x);
                Ok(([a1, a2], [d1 / ax, d2 / ax]))
            }
            FeatureMap::TwoD { grid } => {
                let p = [x[0], x[1]];
                let cell = &grid.cells[grid.locate(p, side)?];
                let y = cell.local(p);
                let r = y[0].hypot(y[1]);
                let (g0, d0) = radial_ratio(0, cell.mu, r, cell.radius)?;
                let (g1, d1) = radial_ratio(1, cell.mu, r, cell.radius)?;
                // dr/dx1 = (y1 / r) / a
                let dr = if r > 0.0 { y[0] / r / cell.a } else { 0.0 };
                Ok(([g0, g1], [d0 * dr, d1 * dr]))
            }
        }
    }

    pub fn raw(&self, x: &[f64], side: Option<Side>) -> Result<[f64; 2]> {
        Ok(self.raw_with_derivative(x, side)?.0)
    }
}

/// Min-max map of each feature to `[0, 1]`; a degenerate range maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureNorm {
    pub fn fit<'a, I: IntoIterator<Item = &'a [f64]>>(rows: I, k: usize) -> Self {
        let mut min = vec![f64::INFINITY; k];
        let mut max = vec![f64::NEG_INFINITY; k];
        for row in rows {
            for i in 0..k {
                min[i] = min[i].min(row[i]);
                max[i] = max[i].max(row[i]);
            }
        }
        Self { min, max }
    }

    pub fn scale(&self, i: usize) -> f64 {
        let range = self.max[i] - self.min[i];
        if range > 0.0 && range.is_finite() {
            1.0 / range
        } else {
            0.0
        }
    }

    pub fn apply(&self, i: usize, v: f64) -> f64 {
        let s = self.scale(i);
        if s == 0.0 {
            0.0
        } else {
            (v - self.min[i]) * s
        }
    }
}

/// Per-subdomain model dispatching on location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeModel {
    pub family: ModelFamily,
    pub example: ExampleId,
    pub arch: Architecture,
    pub init_seed: u64,
    pub subs: Vec<SubModel>,
    /// per sub-model feature normalization (TFPONet only)
    pub norms: Vec<FeatureNorm>,
    pub interfaces: Vec<f64>,
    /// `(a_left, a_right)` at each interface
    pub a_sides: Vec<[f64; 2]>,
    /// extent of each subdomain along the first axis
    pub widths: Vec<f64>,
    #[serde(skip)]
    features: Option<Arc<FeatureMap>>,
}

/// The registry problem with a zero input, for geometry and coefficients.
pub fn reference_problem(example: ExampleId) -> Result<InterfaceProblem> {
    registry_problem(example, PiecewiseField::constant(0.0))
}

impl CompositeModel {
    /// Freshly initialized model with He-uniform weights drawn from `seed`.
    pub fn new(family: ModelFamily, example: ExampleId, arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let p = reference_problem(example)?;
        if arch.dim() != p.dim() {
            return Err(Error::Shape(format!("trunk input {} for a {}D problem", arch.dim(), p.dim())));
        }
        let single = match family {
            ModelFamily::DeepOnet => true,
            ModelFamily::IoNet => false,
            ModelFamily::Tfponet => !example.has_jump(),
        };
        let n_subs = if single { 1 } else { p.subdomain_count() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut subs = Vec::with_capacity(n_subs);
        for i in 0..n_subs {
            let (mut lo, mut hi) = p.domain.bounds();
            if n_subs > 1 {
                (lo[0], hi[0]) = p.subdomain_bounds(i);
            }
            let d = DeepOnet::new(Mlp::he_uniform(&arch.branch, &mut rng)?, Mlp::he_uniform(&arch.trunk, &mut rng)?, 0.0)?
                .with_input_box(&lo, &hi)?;
            subs.push(if family == ModelFamily::Tfponet {
                let basis = (0..BASIS_BLOCKS).map(|_| Mlp::he_uniform(&arch.basis, &mut rng)).collect::<Result<_>>()?;
                SubModel::Tfponet(Tfponet { deeponet: d, basis })
            } else {
                SubModel::DeepOnet(d)
            });
        }
        let mut model = Self {
            family,
            example,
            arch,
            init_seed: seed,
            subs,
            norms: Vec::new(),
            interfaces: p.interfaces.clone(),
            a_sides: Vec::new(),
            widths: (0..p.subdomain_count()).map(|i| {
                let (lo, hi) = p.subdomain_bounds(i);
                hi - lo
            }).collect(),
            features: None,
        };
        for (k, &g) in p.interfaces.iter().enumerate() {
            let mut at = vec![g; p.dim()];
            if p.dim() == 2 {
                at[1] = 0.0;
            }
            model.a_sides.push([p.a.eval_piece(k, &at), p.a.eval_piece(k + 1, &at)]);
        }
        if family == ModelFamily::Tfponet {
            model.features = Some(Arc::new(FeatureMap::for_problem(&p)?));
            model.norms = vec![FeatureNorm { min: vec![0.0; BASIS_BLOCKS], max: vec![1.0; BASIS_BLOCKS] }; n_subs];
        }
        Ok(model)
    }

    /// Rebuilds the problem-derived feature map (after deserialization).
    pub fn attach_features(&mut self) -> Result<()> {
        if self.family == ModelFamily::Tfponet && self.features.is_none() {
            self.features = Some(Arc::new(FeatureMap::for_problem(&reference_problem(self.example)?)?));
        }
        Ok(())
    }

    pub fn feature_map(&self) -> Option<&FeatureMap> {
        self.features.as_deref()
    }

    pub fn n_params(&self) -> usize {
        self.subs.iter().map(SubModel::n_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for s in &self.subs {
            s.write_params(&mut v);
        }
        v
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Shape(format!("{} parameters for a model with {}", p.len(), self.n_params())));
        }
        let mut off = 0;
        for s in &mut self.subs {
            off += s.read_params(&p[off..])?;
        }
        Ok(())
    }

    /// Restores each sub-model's trunk input `(center, scale)`.
    pub fn set_trunk_inputs(&mut self, inputs: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        if inputs.len() != self.subs.len() {
            return Err(Error::Shape(format!("{} trunk input maps for {} sub-models", inputs.len(), self.subs.len())));
        }
        let dim = self.arch.dim();
        for (s, (c, k)) in self.subs.iter_mut().zip(inputs) {
            if c.len() != k.len() || !(c.is_empty() || c.len() == dim) {
                return Err(Error::Shape("trunk input map has the wrong dimension".into()));
            }
            let d = match s {
                SubModel::DeepOnet(d) => d,
                SubModel::Tfponet(t) => &mut t.deeponet,
            };
            d.center = c.clone();
            d.scale = k.clone();
        }
        Ok(())
    }

    /// Offsets of each sub-model in the flat parameter vector.
    pub fn param_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.subs
            .iter()
            .map(|s| {
                let o = off;
                off += s.n_params();
                o
            })
            .collect()
    }

    /// Sub-model responsible for `x`; points on an interface need a side
    /// unless the model has a single member.
    pub fn sub_index(&self, x: &[f64], side: Option<Side>) -> Result<usize> {
        if self.subs.len() == 1 {
            return Ok(0);
        }
        let x0 = x[0];
        let mut i = self.interfaces.iter().filter(|&&g| x0 > g).count();
        if let Some(k) = self.interfaces.iter().position(|&g| g == x0) {
            i = match side {
                Some(Side::Left) => k,
                Some(Side::Right) => k + 1,
                None => return Err(Error::AmbiguousSide(x0)),
            };
        }
        Ok(i)
    }

    /// Normalized features of `x` for sub-model `sub`, with first-axis
    /// derivatives.
    pub fn features_with_derivative(&self, sub: usize, x: &[f64], side: Option<Side>) -> Result<(Vec<f64>, Vec<f64>)> {
        let map = self.features.as_ref().ok_or_else(|| Error::Config("model has no feature map".into()))?;
        let (raw, draw) = map.raw_with_derivative(x, side)?;
        let norm = &self.norms[sub];
        Ok((
            (0..BASIS_BLOCKS).map(|i| norm.apply(i, raw[i])).collect(),
            (0..BASIS_BLOCKS).map(|i| draw[i] * norm.scale(i)).collect(),
        ))
    }

    /// Normalized feature matrix for a list of points handled by `sub`.
    pub fn feature_matrix(&self, sub: usize, points: &[(Vec<f64>, Option<Side>)]) -> Result<Option<Array2<f64>>> {
        if self.family != ModelFamily::Tfponet {
            return Ok(None);
        }
        let mut m = Array2::zeros((points.len(), BASIS_BLOCKS));
        for (r, (x, side)) in points.iter().enumerate() {
            let (f, _) = self.features_with_derivative(sub, x, *side)?;
            for (c, v) in f.into_iter().enumerate() {
                m[[r, c]] = v;
            }
        }
        Ok(Some(m))
    }

    /// Fits the per-sub-model min-max constants on training locations.
    pub fn fit_feature_norms(&mut self, locations: &[(Vec<f64>, Option<Side>)]) -> Result<()> {
        let Some(map) = self.features.clone() else {
            return Ok(());
        };
        let mut rows: Vec<Vec<[f64; 2]>> = vec![Vec::new(); self.subs.len()];
        for (x, side) in locations {
            let s = self.sub_index(x, *side)?;
            rows[s].push(map.raw(x, *side)?);
        }
        self.norms = rows
            .iter()
            .map(|r| FeatureNorm::fit(r.iter().map(|v| v.as_slice()), BASIS_BLOCKS))
            .collect();
        Ok(())
    }

    /// Model output at one location.
    pub fn predict(&self, sensors: &[f64], x: &[f64], side: Option<Side>) -> Result<f64> {
        let s = self.sub_index(x, side)?;
        self.predict_with(s, sensors, x, side)
    }

    /// Output of sub-model `s` at `x` regardless of membership.
    pub fn predict_with(&self, s: usize, sensors: &[f64], x: &[f64], side: Option<Side>) -> Result<f64> {
        if sensors.len() != self.arch.sensors() {
            return Err(Error::Shape(format!("{} sensor values, model expects {}", sensors.len(), self.arch.sensors())));
        }
        match &self.subs[s] {
            SubModel::DeepOnet(d) => d.forward(sensors, x),
            SubModel::Tfponet(t) => {
                let (f, _) = self.features_with_derivative(s, x, side)?;
                t.forward(sensors, x, &f)
            }
        }
    }

    /// Finite-difference step around interface `k` along the first axis.
    pub fn jump_step(&self, k: usize) -> f64 {
        1e-5 * self.widths[k].min(self.widths[k + 1])
    }

    /// Evaluation points used by the jump prediction at `point` on interface
    /// `k`: `(sub, x, side, weight_value, weight_flux)` such that
    /// `[u] = sum w_v U` and `[a du/dn] = sum w_f U`.
    pub fn jump_stencil(&self, k: usize, point: &[f64]) -> Vec<(usize, Vec<f64>, Option<Side>, f64, f64)> {
        let d = self.jump_step(k);
        let (l, r) = if self.subs.len() == 1 { (0, 0) } else { (k, k + 1) };
        let [al, ar] = self.a_sides[k];
        let shifted = |dx: f64| {
            let mut p = point.to_vec();
            p[0] += dx;
            p
        };
        let h = 2.0 * d;
        vec![
            (l, point.to_vec(), Some(Side::Left), -1.0, -al / h),
            (l, shifted(-h), None, 0.0, al / h),
            (r, point.to_vec(), Some(Side::Right), 1.0, -ar / h),
            (r, shifted(h), None, 0.0, ar / h),
        ]
    }

    /// Predicted `([u], [a du/dn])` at `point` on interface `k`, by central
    /// differences centered `delta` inside each subdomain.
    pub fn interface_jump_prediction(&self, sensors: &[f64], k: usize, point: &[f64]) -> Result<(f64, f64)> {
        if k >= self.interfaces.len() {
            return Err(Error::Config(format!("interface {k} does not exist")));
        }
        let (mut jv, mut jf) = (0.0, 0.0);
        for (s, x, side, wv, wf) in self.jump_stencil(k, point) {
            let u = self.predict_with(s, sensors, &x, side)?;
            jv += wv * u;
            jf += wf * u;
        }
        Ok((jv, jf))
    }

    /// Value and first-axis derivative of sub-model `s` via input gradients.
    pub fn value_and_derivative(&self, s: usize, sensors: &[f64], x: &[f64], side: Option<Side>) -> Result<(f64, f64)> {
        let (f, df) = if self.family == ModelFamily::Tfponet {
            self.features_with_derivative(s, x, side)?
        } else {
            (Vec::new(), Vec::new())
        };
        self.subs[s].value_and_derivative(sensors, x, &f, &df)
    }
}
