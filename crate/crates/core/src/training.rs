//! Random inputs, TFPM-labelled datasets, the jump-penalized loss and the
//! training loop.
//!
//! The loss is
//!
//! ```text
//! L = 1/(M J)  sum_m sum_j |u_m(x_j) - N(f_m)(x_j)|^2
//!   + gamma/(M J0) sum_m sum_i |[N(f_m)](x_i) - g_D|^2 + |[a dN(f_m)/dn](x_i) - g_N|^2
//! ```

use nalgebra::DMatrix;
use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig};
use crate::operatornets::{reference_problem, CompositeModel, SubCache};
use crate::problem::{
    BoundaryData, ExampleId, GridFn, InterfaceProblem, PiecewiseField, ScalarFn, Side, Transform1d,
};
use crate::tfpm1d::{Mesh1d, Tfpm1dSolver};
use crate::tfpm2d::Tfpm2dSolver;

/// Squared-exponential Gaussian random field on a 1D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub length_scale: f64,
    pub variance: f64,
    pub grid: Vec<f64>,
}

impl GrfSpec {
    pub fn uniform(lo: f64, hi: f64, points: usize, length_scale: f64, variance: f64) -> Self {
        let grid = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
        Self { length_scale, variance, grid }
    }
}

/// Factorized covariance, reusable for any number of samples.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    pub spec: GrfSpec,
    /// lower Cholesky factor of the correlation matrix, scaled by `sigma`
    factor: DMatrix<f64>,
    pub jitter: f64,
}

impl GrfSampler {
    pub fn new(spec: GrfSpec) -> Result<Self> {
        let n = spec.grid.len();
        if n == 0 {
            return Err(Error::Config("GRF grid is empty".into()));
        }
        if !(spec.length_scale > 0.0) || !(spec.variance >= 0.0) {
            return Err(Error::Config("GRF needs length scale > 0 and variance >= 0".into()));
        }
        let l2 = spec.length_scale * spec.length_scale;
        let corr = DMatrix::from_fn(n, n, |i, j| {
            let d = spec.grid[i] - spec.grid[j];
            (-0.5 * d * d / l2).exp()
        });
        let mut jitter = 1e-10;
        loop {
            let mut k = corr.clone();
            for i in 0..n {
                k[(i, i)] += jitter;
            }
            if let Some(ch) = k.cholesky() {
                let factor = ch.l() * spec.variance.sqrt();
                return Ok(Self { spec, factor, jitter });
            }
            jitter *= 10.0;
            if jitter > 1e-4 {
                return Err(Error::Numerical("GRF covariance factorization failed after jitter escalation".into()));
            }
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.spec.grid.len();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let z = nalgebra::DVector::from_vec(z);
        (&self.factor * z).iter().copied().collect()
    }
}

/// Deterministic generator for sample `index` of the stream family `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `count` samples, sample `i` drawn from stream `i` of `seed`.
pub fn sample_grf(spec: &GrfSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let s = GrfSampler::new(spec.clone())?;
    Ok((0..count).map(|i| s.sample(&mut sample_rng(seed, i as u64))).collect())
}

/// Stream offset separating test inputs from training inputs.
pub const TEST_STREAM_OFFSET: u64 = 1 << 40;

/// Random input functions of one example.
#[derive(Debug, Clone)]
pub struct InputSampler {
    pub example: ExampleId,
    /// one field per subdomain, or one shared field
    fields: Vec<GrfSampler>,
    breakpoint: f64,
}

impl InputSampler {
    pub fn new(example: ExampleId) -> Result<Self> {
        let g = example.interface();
        let fields = match example {
            ExampleId::Example1Singular | ExampleId::Example1Contrast => vec![
                GrfSampler::new(GrfSpec::uniform(0.0, 0.5, 257, 0.1, 1.0))?,
                GrfSampler::new(GrfSpec::uniform(0.5, 1.0, 257, 0.1, 1.0))?,
            ],
            ExampleId::Example2 => vec![GrfSampler::new(GrfSpec::uniform(0.0, 1.0, 513, 0.2, 1.0))?],
            ExampleId::Example3 => vec![
                GrfSampler::new(GrfSpec::uniform(-1.0, 0.0, 129, 0.2, 1.0))?,
                GrfSampler::new(GrfSpec::uniform(0.0, 1.0, 129, 0.2, 1.0))?,
            ],
        };
        Ok(Self { example, fields, breakpoint: g })
    }

    pub fn grf_specs(&self) -> Vec<&GrfSpec> {
        self.fields.iter().map(|f| &f.spec).collect()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<PiecewiseField> {
        let pieces: Vec<ScalarFn> = self
            .fields
            .iter()
            .map(|f| Ok(ScalarFn::Grid(GridFn::new(f.spec.grid.clone(), f.sample(rng))?)))
            .collect::<Result<_>>()?;
        let pieces = if pieces.len() == 1 { vec![pieces[0].clone(), pieces[0].clone()] } else { pieces };
        PiecewiseField::new(vec![self.breakpoint], pieces)
    }
}

/// A point with an optional interface side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: Vec<f64>,
    pub side: Option<Side>,
}

impl Location {
    pub fn new(x: Vec<f64>, side: Option<Side>) -> Self {
        Self { x, side }
    }

    fn pair(&self) -> (Vec<f64>, Option<Side>) {
        (self.x.clone(), self.side)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Where the input function is sampled for the branch networks: each side
/// of the interface separately, the interface itself once per side.
pub fn sensor_locations(example: ExampleId) -> Vec<Location> {
    let g = example.interface();
    let (lo, hi) = example.first_axis();
    let per_side = if example.dim() == 1 { 50 } else { 32 };
    let mut out = Vec::with_capacity(2 * per_side);
    for x in linspace(lo, g, per_side) {
        out.push(Location::new(vec![x], (x == g).then_some(Side::Left)));
    }
    for x in linspace(g, hi, per_side) {
        out.push(Location::new(vec![x], (x == g).then_some(Side::Right)));
    }
    out
}

/// Training locations for `resolution` points: equispaced on `[0, 1]` for
/// Example 1, half per subdomain for Example 2, and a `resolution x
/// resolution` grid without the interface line for Example 3.
pub fn training_locations(example: ExampleId, resolution: usize) -> Result<Vec<Location>> {
    let g = example.interface();
    let (lo, hi) = example.first_axis();
    let side_at = |x: f64, s: Side| (x == g).then_some(s);
    match example {
        ExampleId::Example1Singular | ExampleId::Example1Contrast => {
            if resolution < 2 {
                return Err(Error::Config("need at least 2 locations".into()));
            }
            Ok(linspace(lo, hi, resolution).into_iter().map(|x| Location::new(vec![x], side_at(x, Side::Left))).collect())
        }
        ExampleId::Example2 => {
            if resolution < 4 || resolution % 2 != 0 {
                return Err(Error::Config("Example 2 needs an even number of locations >= 4".into()));
            }
            let half = resolution / 2;
            let mut v: Vec<Location> =
                linspace(lo, g, half).into_iter().map(|x| Location::new(vec![x], side_at(x, Side::Left))).collect();
            v.extend(linspace(g, hi, half).into_iter().map(|x| Location::new(vec![x], side_at(x, Side::Right))));
            Ok(v)
        }
        ExampleId::Example3 => {
            if resolution < 3 {
                return Err(Error::Config("need at least 3 points per axis".into()));
            }
            let axis = linspace(-1.0, 1.0, resolution);
            let mut v = Vec::new();
            for &x1 in axis.iter().filter(|&&x| x != g) {
                for &x2 in &axis {
                    v.push(Location::new(vec![x1, x2], None));
                }
            }
            Ok(v)
        }
    }
}

/// Evaluation locations for test sets: a fine equispaced set in 1D with
/// both sides of a jump interface, a grid in 2D.
pub fn test_locations(example: ExampleId, resolution: usize) -> Result<Vec<Location>> {
    match example {
        ExampleId::Example3 => training_locations(example, resolution),
        ExampleId::Example2 => {
            let g = example.interface();
            let mut v = Vec::new();
            for x in linspace(0.0, 1.0, resolution) {
                if x == g {
                    v.push(Location::new(vec![x], Some(Side::Left)));
                    v.push(Location::new(vec![x], Some(Side::Right)));
                } else {
                    v.push(Location::new(vec![x], None));
                }
            }
            Ok(v)
        }
        _ => training_locations(example, resolution),
    }
}

/// Interface collocation points: the interface itself in 1D, 16 equispaced
/// cell-midpoints along `x1 = 0` in 2D.
pub fn interface_points(example: ExampleId) -> Vec<Vec<f64>> {
    let g = example.interface();
    if example.dim() == 1 {
        vec![vec![g]]
    } else {
        (0..16).map(|i| vec![g, -1.0 + (2 * i + 1) as f64 / 16.0]).collect()
    }
}

/// Resolution of the ground-truth solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfpmResolution {
    /// 1D mesh nodes per subdomain including both ends
    pub nodes_per_subdomain: usize,
    /// 2D cells per axis
    pub cells: usize,
    /// 2D truncation order
    pub order: usize,
}

impl Default for TfpmResolution {
    fn default() -> Self {
        Self { nodes_per_subdomain: 1025, cells: crate::tfpm2d::GROUND_TRUTH_CELLS, order: crate::tfpm2d::DEFAULT_ORDER }
    }
}

enum OracleKind {
    OneD(Box<Tfpm1dSolver>),
    TwoD(Box<Tfpm2dSolver>),
}

/// TFPM label generator with the coefficient-dependent work done once.
pub struct Oracle {
    base: InterfaceProblem,
    kind: OracleKind,
}

impl Oracle {
    pub fn new(base: &InterfaceProblem, res: &TfpmResolution) -> Result<Self> {
        let kind = if base.dim() == 1 {
            let t = Transform1d::from_problem(base)?;
            OracleKind::OneD(Box::new(Tfpm1dSolver::new(base, Mesh1d::uniform_x(&t, res.nodes_per_subdomain)?)?))
        } else {
            OracleKind::TwoD(Box::new(Tfpm2dSolver::new(base, res.cells, res.cells, res.order)?))
        };
        Ok(Self { base: base.clone(), kind })
    }

    /// The problem whose input (source in 1D, `x2 = +-1` data in 2D) is `input`.
    pub fn problem_for(&self, input: &PiecewiseField) -> Result<InterfaceProblem> {
        let mut p = self.base.clone();
        if p.dim() == 1 {
            p.f = input.clone().conform(&p.interfaces)?;
        } else if let BoundaryData::Rect { x2_min, x2_max, .. } = &mut p.bc {
            let f = input.clone().conform(&self.base.interfaces)?;
            *x2_min = f.clone();
            *x2_max = f;
        }
        p.validated()
    }

    /// Ground-truth values at `locations`.
    pub fn solve_at(&self, input: &PiecewiseField, locations: &[Location]) -> Result<Vec<f64>> {
        let p = self.problem_for(input)?;
        match &self.kind {
            OracleKind::OneD(s) => {
                let sol = s.solve_with_source(&p.f)?;
                locations.iter().map(|l| sol.evaluate(l.x[0], l.side)).collect()
            }
            OracleKind::TwoD(s) => {
                let sol = s.solve_problem(&p)?;
                locations.iter().map(|l| sol.evaluate([l.x[0], l.x[1]], l.side)).collect()
            }
        }
    }
}

/// Interface collocation point with its jump targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfacePoint {
    /// interface index
    pub interface: usize,
    pub x: Vec<f64>,
    pub g_d: f64,
    pub g_n: f64,
}

/// Provenance of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub example: ExampleId,
    pub seed: u64,
    pub stream_offset: u64,
    pub tfpm: TfpmResolution,
    pub grf: Vec<GrfSpec>,
}

/// Triplets `(f_m, x_j, u_m(x_j))` with interface data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub sensor_locations: Vec<Location>,
    /// `M x S` sensor values
    pub sensors: Array2<f64>,
    pub locations: Vec<Location>,
    /// `M x J` ground truth
    pub targets: Array2<f64>,
    pub interface: Vec<InterfacePoint>,
}

impl Dataset {
    pub fn samples(&self) -> usize {
        self.sensors.nrows()
    }

    pub fn triplets(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, j) = self.targets.dim();
        if self.sensors.nrows() != m || self.locations.len() != j || self.sensors.ncols() != self.sensor_locations.len() {
            return Err(Error::Shape("dataset blocks disagree in size".into()));
        }
        if self.targets.iter().any(|v| !v.is_finite()) || self.sensors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("dataset holds non-finite values".into()));
        }
        Ok(())
    }
}

/// Samples of the input field at the sensors.
pub fn sensor_values(input: &PiecewiseField, sensors: &[Location]) -> Result<Vec<f64>> {
    sensors.iter().map(|s| input.eval(&s.x[..1], s.side)).collect()
}

/// Labels the given inputs with `oracle`, in parallel over samples.
pub fn label_inputs(
    oracle: &Oracle,
    inputs: &[PiecewiseField],
    sensors: &[Location],
    locations: &[Location],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let rows: Vec<(Vec<f64>, Vec<f64>)> = inputs
        .par_iter()
        .enumerate()
        .map(|(m, f)| {
            let tag = |e: Error| match e {
                Error::Numerical(d) => Error::Numerical(format!("sample {m}: {d}")),
                Error::Singular { condition, detail } => Error::Singular { condition, detail: format!("sample {m}: {detail}") },
                other => other,
            };
            Ok((sensor_values(f, sensors).map_err(tag)?, oracle.solve_at(f, locations).map_err(tag)?))
        })
        .collect::<Result<_>>()?;
    let (m, s, j) = (inputs.len(), sensors.len(), locations.len());
    let mut sv = Array2::zeros((m, s));
    let mut tv = Array2::zeros((m, j));
    for (i, (a, b)) in rows.into_iter().enumerate() {
        sv.row_mut(i).assign(&ndarray::ArrayView1::from(&a));
        tv.row_mut(i).assign(&ndarray::ArrayView1::from(&b));
    }
    Ok((sv, tv))
}

/// Interface points of `p` with their targets.
pub fn interface_data(p: &InterfaceProblem, example: ExampleId) -> Vec<InterfacePoint> {
    interface_points(example)
        .into_iter()
        .map(|x| InterfacePoint { interface: 0, g_d: p.g_d[0].eval(&x), g_n: p.g_n[0].eval(&x), x })
        .collect()
}

/// Builds a dataset of `m` random inputs of `example`, sample `i` drawn
/// from stream `stream_offset + i` of `seed`.
pub fn build_dataset(
    example: ExampleId,
    m: usize,
    locations: &[Location],
    seed: u64,
    stream_offset: u64,
    tfpm: &TfpmResolution,
) -> Result<Dataset> {
    let base = reference_problem(example)?;
    let oracle = Oracle::new(&base, tfpm)?;
    let sampler = InputSampler::new(example)?;
    let inputs: Vec<PiecewiseField> = (0..m)
        .map(|i| sampler.sample(&mut sample_rng(seed, stream_offset + i as u64)))
        .collect::<Result<_>>()?;
    let sensors = sensor_locations(example);
    for l in locations {
        if !base.domain.contains(&l.x) {
            return Err(Error::Domain(format!("location {:?} outside the domain", l.x)));
        }
    }
    let (sv, tv) = label_inputs(&oracle, &inputs, &sensors, locations)?;
    let ds = Dataset {
        meta: DatasetMeta {
            example,
            seed,
            stream_offset,
            tfpm: *tfpm,
            grf: sampler.grf_specs().into_iter().cloned().collect(),
        },
        sensor_locations: sensors,
        sensors: sv,
        locations: locations.to_vec(),
        targets: tv,
        interface: interface_data(&base, example),
    };
    ds.validate()?;
    Ok(ds)
}

/// `total = data + gamma * jump`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub data: f64,
    pub jump: f64,
    pub gamma: f64,
}

impl LossReport {
    pub fn new(data: f64, jump: f64, gamma: f64) -> Self {
        Self { total: data + gamma * jump, data, jump, gamma }
    }
}

/// Per-sub-model evaluation points: data locations followed by the jump
/// stencil.
struct SubPlan {
    /// dataset location indices handled by this sub-model
    data_cols: Vec<usize>,
    points: Array2<f64>,
    features: Option<Array2<f64>>,
    /// `(interface point, column, w_value, w_flux)`
    stencil: Vec<(usize, usize, f64, f64)>,
}

struct Plan {
    subs: Vec<SubPlan>,
}

fn points_matrix(points: &[(Vec<f64>, Option<Side>)], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((points.len(), dim));
    for (r, (x, _)) in points.iter().enumerate() {
        for c in 0..dim {
            m[[r, c]] = x[c];
        }
    }
    m
}

fn make_plan(model: &CompositeModel, ds: &Dataset) -> Result<Plan> {
    let n = model.subs.len();
    let dim = model.arch.dim();
    if ds.sensors.ncols() != model.arch.sensors() {
        return Err(Error::Shape(format!(
            "dataset has {} sensors, model expects {}",
            ds.sensors.ncols(),
            model.arch.sensors()
        )));
    }
    let mut pts: Vec<Vec<(Vec<f64>, Option<Side>)>> = vec![Vec::new(); n];
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, l) in ds.locations.iter().enumerate() {
        if l.x.len() != dim {
            return Err(Error::Shape(format!("location of dimension {} for a {dim}D model", l.x.len())));
        }
        let s = model.sub_index(&l.x, l.side)?;
        cols[s].push(j);
        pts[s].push(l.pair());
    }
    let mut stencils: Vec<Vec<(usize, usize, f64, f64)>> = vec![Vec::new(); n];
    if !model.interfaces.is_empty() {
        for (i, ip) in ds.interface.iter().enumerate() {
            for (s, x, side, wv, wf) in model.jump_stencil(ip.interface, &ip.x) {
                stencils[s].push((i, pts[s].len(), wv, wf));
                pts[s].push((x, side));
            }
        }
    }
    let mut subs = Vec::with_capacity(n);
    for (s, ((p, c), st)) in pts.into_iter().zip(cols).zip(stencils).enumerate() {
        subs.push(SubPlan {
            data_cols: c,
            points: points_matrix(&p, dim),
            features: model.feature_matrix(s, &p)?,
            stencil: st,
        });
    }
    Ok(Plan { subs })
}

/// Loss (and optionally its parameter gradient) on the samples `rows` and,
/// for each sub-model, the local data columns `cols[s]` (`None` = all).
fn evaluate_loss(
    model: &CompositeModel,
    ds: &Dataset,
    plan: &Plan,
    rows: &[usize],
    cols: Option<&[Vec<usize>]>,
    gamma: f64,
    want_grad: bool,
) -> Result<(LossReport, Option<Vec<f64>>)> {
    let sensors = ds.sensors.select(Axis(0), rows);
    let b = rows.len();
    let j0 = ds.interface.len();
    let mut outputs: Vec<(Array2<f64>, SubCache, Vec<usize>)> = Vec::with_capacity(plan.subs.len());
    let mut n_data = 0usize;
    for (s, sp) in plan.subs.iter().enumerate() {
        let local: Vec<usize> = match cols {
            Some(c) => c[s].clone(),
            None => (0..sp.data_cols.len()).collect(),
        };
        let stencil_rows = sp.data_cols.len()..sp.points.nrows();
        let sel: Vec<usize> = local.iter().copied().chain(stencil_rows).collect();
        let pts = sp.points.select(Axis(0), &sel);
        let feats = sp.features.as_ref().map(|f| f.select(Axis(0), &sel));
        let (u, cache) = model.subs[s].forward_grid(sensors.view(), pts.view(), feats.as_ref().map(|f| f.view()))?;
        n_data += local.len();
        outputs.push((u, cache, local));
    }
    let count = (b * n_data) as f64;
    let mut data_sum = 0.0;
    let mut grads_u: Vec<Array2<f64>> = Vec::with_capacity(outputs.len());
    for (s, (u, _, local)) in outputs.iter().enumerate() {
        let sp = &plan.subs[s];
        let mut du = Array2::zeros(u.dim());
        for (k, &lc) in local.iter().enumerate() {
            let j = sp.data_cols[lc];
            for (r, &m) in rows.iter().enumerate() {
                let e = u[[r, k]] - ds.targets[[m, j]];
                data_sum += e * e;
                du[[r, k]] = 2.0 * e / count;
            }
        }
        grads_u.push(du);
    }
    let data = if n_data > 0 { data_sum / count } else { 0.0 };
    // jump residuals per (sample, interface point)
    let mut jump = 0.0;
    if !model.interfaces.is_empty() && j0 > 0 {
        let mut jv = Array2::<f64>::zeros((b, j0));
        let mut jf = Array2::<f64>::zeros((b, j0));
        for (s, (u, _, local)) in outputs.iter().enumerate() {
            let n_all = plan.subs[s].data_cols.len();
            for &(i, col, wv, wf) in &plan.subs[s].stencil {
                let c = col - n_all + local.len();
                for r in 0..b {
                    jv[[r, i]] += wv * u[[r, c]];
                    jf[[r, i]] += wf * u[[r, c]];
                }
            }
        }
        let norm = (b * j0) as f64;
        let mut sum = 0.0;
        for r in 0..b {
            for (i, ip) in ds.interface.iter().enumerate() {
                let (ev, ef) = (jv[[r, i]] - ip.g_d, jf[[r, i]] - ip.g_n);
                sum += ev * ev + ef * ef;
                jv[[r, i]] = ev;
                jf[[r, i]] = ef;
            }
        }
        jump = sum / norm;
        if want_grad && gamma != 0.0 {
            for (s, (_, _, local)) in outputs.iter().enumerate() {
                let n_all = plan.subs[s].data_cols.len();
                for &(i, col, wv, wf) in &plan.subs[s].stencil {
                    let c = col - n_all + local.len();
                    for r in 0..b {
                        grads_u[s][[r, c]] += gamma * 2.0 * (jv[[r, i]] * wv + jf[[r, i]] * wf) / norm;
                    }
                }
            }
        }
    }
    let report = LossReport::new(data, jump, gamma);
    if !report.total.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {report:?}")));
    }
    if !want_grad {
        return Ok((report, None));
    }
    let mut grad = vec![0.0; model.n_params()];
    let offsets = model.param_offsets();
    for (s, ((_, cache, _), du)) in outputs.iter().zip(&grads_u).enumerate() {
        let k = model.subs[s].n_params();
        model.subs[s].backward_grid(cache, du.view(), &mut grad[offsets[s]..offsets[s] + k])?;
    }
    Ok((report, Some(grad)))
}

fn all_rows(ds: &Dataset) -> Vec<usize> {
    (0..ds.samples()).collect()
}

/// Full-dataset loss terms.
pub fn loss_report(model: &CompositeModel, ds: &Dataset, gamma: f64) -> Result<LossReport> {
    let plan = make_plan(model, ds)?;
    Ok(evaluate_loss(model, ds, &plan, &all_rows(ds), None, gamma, false)?.0)
}

/// Mean squared error over all triplets.
pub fn loss_data(model: &CompositeModel, ds: &Dataset) -> Result<f64> {
    Ok(loss_report(model, ds, 0.0)?.data)
}

/// Mean squared jump residual over samples and interface points.
pub fn loss_jump(model: &CompositeModel, ds: &Dataset) -> Result<f64> {
    if model.interfaces.is_empty() || ds.interface.is_empty() {
        return Err(Error::Config("jump loss needs an interface and interface points".into()));
    }
    Ok(loss_report(model, ds, 0.0)?.jump)
}

/// Test-set mean squared error.
pub fn evaluate_mse(model: &CompositeModel, test: &Dataset) -> Result<f64> {
    loss_data(model, test)
}

/// Full-dataset loss and its gradient with respect to the flat parameters.
pub fn loss_gradient(model: &CompositeModel, ds: &Dataset, gamma: f64) -> Result<(LossReport, Vec<f64>)> {
    let plan = make_plan(model, ds)?;
    let (r, g) = evaluate_loss(model, ds, &plan, &all_rows(ds), None, gamma, true)?;
    Ok((r, g.expect("gradient requested")))
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub gamma: f64,
    pub adam: AdamConfig,
    /// triplets per minibatch; `None` trains full-batch
    pub batch: Option<usize>,
    /// history is recorded every `log_every` steps and at the end
    pub log_every: usize,
}

impl TrainConfig {
    pub fn desk(dim: usize) -> Self {
        Self {
            steps: if dim == 1 { 20_000 } else { 30_000 },
            gamma: 1.0,
            adam: AdamConfig::default(),
            batch: if dim == 1 { None } else { Some(4096) },
            log_every: 100,
        }
    }
}

/// One history entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub data: f64,
    pub jump: f64,
    pub total: f64,
}

/// Trains `model` in place. The learning rate is halved after 75% of the
/// steps. Feature normalization is fitted on the dataset's locations.
pub fn train(model: &mut CompositeModel, ds: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<Vec<HistoryRow>> {
    if !(cfg.gamma >= 0.0) {
        return Err(Error::Config("gamma must be >= 0".into()));
    }
    ds.validate()?;
    let pairs: Vec<(Vec<f64>, Option<Side>)> = ds.locations.iter().map(Location::pair).collect();
    model.fit_feature_norms(&pairs)?;
    let plan = make_plan(model, ds)?;
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::new();
    let m = ds.samples();
    let j = ds.locations.len();
    let (rows_per, cols_per) = match cfg.batch {
        Some(t) if t < m * j => {
            let cols = j.min(512).min(t);
            ((t / cols).clamp(1, m), cols)
        }
        _ => (m, j),
    };
    let mut sample_order: Vec<usize> = (0..m).collect();
    let mut cursor = m;
    let lr_drop = (cfg.steps as f64 * 0.75).ceil() as usize;
    for step in 0..cfg.steps {
        let rows: Vec<usize> = if rows_per == m {
            (0..m).collect()
        } else {
            if cursor + rows_per > m {
                sample_order.shuffle(&mut rng);
                cursor = 0;
            }
            cursor += rows_per;
            sample_order[cursor - rows_per..cursor].to_vec()
        };
        let cols: Option<Vec<Vec<usize>>> = if cols_per == j {
            None
        } else {
            let mut all: Vec<usize> = (0..j).collect();
            all.shuffle(&mut rng);
            let chosen = &all[..cols_per];
            // map global location indices to per-sub local columns
            let mut per: Vec<Vec<usize>> = vec![Vec::new(); plan.subs.len()];
            let mut lookup = vec![(0usize, 0usize); j];
            for (s, sp) in plan.subs.iter().enumerate() {
                for (k, &g) in sp.data_cols.iter().enumerate() {
                    lookup[g] = (s, k);
                }
            }
            let mut sorted = chosen.to_vec();
            sorted.sort_unstable();
            for g in sorted {
                let (s, k) = lookup[g];
                per[s].push(k);
            }
            Some(per)
        };
        let (report, grad) = evaluate_loss(model, ds, &plan, &rows, cols.as_deref(), cfg.gamma, true)
            .map_err(|e| Error::Training { step, detail: e.to_string() })?;
        if step % cfg.log_every.max(1) == 0 {
            history.push(HistoryRow { step, data: report.data, jump: report.jump, total: report.total });
        }
        let lr = if step >= lr_drop { 0.5 * cfg.adam.lr } else { cfg.adam.lr };
        adam.step(&mut params, &grad.expect("gradient requested"), lr)
            .map_err(|e| Error::Training { step, detail: e.to_string() })?;
        model.set_params(&params)?;
    }
    let r = loss_report(model, ds, cfg.gamma)?;
    history.push(HistoryRow { step: cfg.steps, data: r.data, jump: r.jump, total: r.total });
    Ok(history)
}

/// Mean absolute predicted jump error `|[N] - g_D|` over a dataset's
/// samples and interface points.
pub fn mean_jump_error(model: &CompositeModel, ds: &Dataset) -> Result<f64> {
    let mut sum = 0.0;
    for m in 0..ds.samples() {
        let sensors = ds.sensors.row(m).to_vec();
        for ip in &ds.interface {
            let (jv, _) = model.interface_jump_prediction(&sensors, ip.interface, &ip.x)?;
            sum += (jv - ip.g_d).abs();
        }
    }
    Ok(sum / (ds.samples() * ds.interface.len()).max(1) as f64)
}

/// Predictions `M x J` on a dataset's locations.
pub fn predict_dataset(model: &CompositeModel, ds: &Dataset) -> Result<Array2<f64>> {
    let plan = make_plan(model, ds)?;
    let mut out = Array2::zeros(ds.targets.dim());
    for (s, sp) in plan.subs.iter().enumerate() {
        let n = sp.data_cols.len();
        if n == 0 {
            continue;
        }
        let pts = sp.points.slice(s![..n, ..]);
        let feats = sp.features.as_ref().map(|f| f.slice(s![..n, ..]));
        let (u, _) = model.subs[s].forward_grid(ds.sensors.view(), pts, feats)?;
        for (k, &j) in sp.data_cols.iter().enumerate() {
            out.column_mut(j).assign(&u.column(k));
        }
    }
    Ok(out)
}
