//! End-to-end experiments (data, training, evaluation) and plot-data export.
//!
//! A run directory holds:
//!
//! * `mse.csv`: `resolution,model,test_mse`
//! * `metrics.csv`: the same rows with jump error, strip error and final
//!   training losses
//! * `profile.csv`: ground truth and every model's prediction for the first
//!   held-out input, from the models of the finest resolution
//! * `meta.json`: configuration, declared constants, the files every number
//!   comes from, and the status
//! * `timing.json`: wall-clock seconds per stage (the only file that differs
//!   between identical runs)
//! * `data/*.tfd`, `models/*.tfc`, `models/*_history.csv`

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{self, fmt_f64};
use crate::operatornets::{Architecture, CompositeModel, ModelFamily, BASIS_BLOCKS, FEATURE_CELLS, FEATURE_SUBINTERVALS};
use crate::problem::ExampleId;
use crate::training::{
    build_dataset, loss_report, predict_dataset, test_locations, train, training_locations, Dataset, TfpmResolution,
    TrainConfig, TEST_STREAM_OFFSET,
};

/// Half-width of the strip around `x1 = 0` used for the 2D interface error.
pub const STRIP_HALF_WIDTH: f64 = 0.1;
/// Boundary-layer window flagged in Example 1 profiles.
pub const LAYER_WINDOW: (f64, f64) = (0.0, 0.05);
/// Zoom window around the interface flagged in Example 2 profiles.
pub const INTERFACE_WINDOW: (f64, f64) = (0.45, 0.55);

/// Problem sizes of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Desk,
    PaperScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: ExampleId,
    pub models: Vec<ModelFamily>,
    /// training locations per run, strictly increasing
    pub resolutions: Vec<usize>,
    pub m_train: usize,
    pub m_test: usize,
    /// test locations: points in 1D, points per axis in 2D
    pub test_resolution: usize,
    pub data_seed: u64,
    pub init_seed: u64,
    pub train_seed: u64,
    pub train: TrainConfig,
    pub tfpm: TfpmResolution,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Preset sizes; both scales run the same algorithms.
    pub fn preset(example: ExampleId, scale: Scale, out_dir: PathBuf) -> Self {
        let paper = scale == Scale::PaperScale;
        let (models, resolutions, m_train, m_test, test_resolution) = match example {
            ExampleId::Example1Singular | ExampleId::Example1Contrast => (
                vec![ModelFamily::Tfponet, ModelFamily::DeepOnet],
                if paper { vec![129, 257, 385, 513, 641] } else { vec![129, 257] },
                if paper { 1000 } else { 200 },
                100,
                1001,
            ),
            ExampleId::Example2 => (
                vec![ModelFamily::Tfponet, ModelFamily::IoNet],
                if paper { vec![128, 256, 384, 512, 640] } else { vec![128, 256] },
                if paper { 1000 } else { 200 },
                100,
                1001,
            ),
            ExampleId::Example3 => (
                vec![ModelFamily::Tfponet, ModelFamily::IoNet],
                if paper { vec![65] } else { vec![33] },
                if paper { 500 } else { 100 },
                if paper { 50 } else { 20 },
                65,
            ),
        };
        let mut train = TrainConfig::desk(example.dim());
        if paper {
            train.steps *= 2;
        }
        Self {
            example,
            models,
            resolutions,
            m_train,
            m_test,
            test_resolution,
            data_seed: 1,
            init_seed: 7,
            train_seed: 3,
            train,
            tfpm: TfpmResolution::default(),
            out_dir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        if self.resolutions.is_empty() || self.resolutions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("resolutions must be non-empty and strictly increasing".into()));
        }
        if self.m_train == 0 || self.m_test == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.train.gamma < 0.0 || !self.train.gamma.is_finite() {
            return Err(Error::Config("gamma must be a finite number >= 0".into()));
        }
        let mut seen = Vec::new();
        for m in &self.models {
            if seen.contains(m) {
                return Err(Error::Config(format!("model {m} listed twice")));
            }
            seen.push(*m);
        }
        Ok(())
    }

    /// Training settings for one family: the single-network DeepONet has no
    /// interface to penalize, so its jump term is reported only.
    pub fn train_config_for(&self, family: ModelFamily) -> TrainConfig {
        let mut c = self.train.clone();
        if family == ModelFamily::DeepOnet {
            c.gamma = 0.0;
        }
        c
    }
}

/// One trained model's evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub resolution: usize,
    pub model: ModelFamily,
    pub test_mse: f64,
    /// mean `|[N] - g_D|` over held-out inputs (examples with jumps)
    pub jump_error: Option<f64>,
    /// mean absolute error for `|x1| <= 0.1` (2D)
    pub strip_mae: Option<f64>,
    pub train_data_loss: f64,
    pub train_jump_loss: f64,
    pub dataset: String,
    pub checkpoint: String,
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub timings: BTreeMap<String, f64>,
}

/// Mean absolute error over locations with `|x1| <= STRIP_HALF_WIDTH`.
pub fn strip_mae(test: &Dataset, pred: &Array2<f64>) -> Result<f64> {
    let cols: Vec<usize> = test
        .locations
        .iter()
        .enumerate()
        .filter(|(_, l)| l.x[0].abs() <= STRIP_HALF_WIDTH)
        .map(|(j, _)| j)
        .collect();
    if cols.is_empty() {
        return Err(Error::Config("no test locations inside the interface strip".into()));
    }
    let mut sum = 0.0;
    for m in 0..test.samples() {
        for &j in &cols {
            sum += (pred[[m, j]] - test.targets[[m, j]]).abs();
        }
    }
    Ok(sum / (cols.len() * test.samples()) as f64)
}

fn mse(test: &Dataset, pred: &Array2<f64>) -> f64 {
    let d = pred - &test.targets;
    d.mapv(|v| v * v).mean().unwrap_or(f64::NAN)
}

fn jump_error(model: &CompositeModel, test: &Dataset) -> Result<f64> {
    crate::training::mean_jump_error(model, test)
}

fn declared_constants(cfg: &ExperimentConfig) -> serde_json::Value {
    json!({
        "architecture": Architecture::for_dim(cfg.example.dim(), crate::training::sensor_locations(cfg.example).len()),
        "basis_blocks": BASIS_BLOCKS,
        "feature_subintervals_per_subdomain": FEATURE_SUBINTERVALS,
        "feature_cells_per_axis": FEATURE_CELLS,
        "sensors": crate::training::sensor_locations(cfg.example).len(),
        "initialization": "he-uniform weights, uniform(+-1/sqrt(fan_in)) biases, trunk input mapped to [-1, 1] per sub-model",
        "optimizer": "adam, learning rate halved after 75% of the steps",
        "deeponet_gamma": 0.0,
        "test_stream_offset": TEST_STREAM_OFFSET,
        "strip_half_width": STRIP_HALF_WIDTH,
    })
}

struct Stopwatch(BTreeMap<String, f64>);

impl Stopwatch {
    fn time<T>(&mut self, name: String, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f();
        self.0.insert(name, t.elapsed().as_secs_f64());
        out
    }
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Runs the configured experiment and writes its result directory. A
/// failing stage is recorded in `meta.json` before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out.join("data"))?;
    fs::create_dir_all(out.join("models"))?;
    let mut watch = Stopwatch(BTreeMap::new());
    let mut rows = Vec::new();
    let result = run_stages(cfg, &mut watch, &mut rows);
    let files: Vec<String> = rows
        .iter()
        .flat_map(|r: &ResultRow| {
            let history = r.checkpoint.replace(".tfc", "_history.csv");
            [r.dataset.clone(), r.checkpoint.clone(), history]
        })
        .chain(std::iter::once("data/test.tfd".to_string()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let status = match &result {
        Ok(()) => json!({"ok": true}),
        Err(e) => json!({"ok": false, "error": e.to_string(), "exit_code": e.exit_code()}),
    };
    // paths in meta.json are relative to the run directory
    let recorded = ExperimentConfig { out_dir: PathBuf::from("."), ..cfg.clone() };
    let meta = json!({
        "config": recorded,
        "declared": declared_constants(cfg),
        "results": rows,
        "files": files,
        "outputs": ["mse.csv", "metrics.csv", "profile.csv"],
        "timing": "timing.json",
        "status": status,
    });
    write_json(&out.join("meta.json"), &meta)?;
    write_json(&out.join("timing.json"), &json!(watch.0))?;
    result?;
    Ok(ExperimentReport { rows, timings: watch.0 })
}

fn run_stages(cfg: &ExperimentConfig, watch: &mut Stopwatch, rows: &mut Vec<ResultRow>) -> Result<()> {
    let ex = cfg.example;
    let out = &cfg.out_dir;
    let test_locs = test_locations(ex, cfg.test_resolution)?;
    let test = watch.time("data/test".into(), || {
        build_dataset(ex, cfg.m_test, &test_locs, cfg.data_seed, TEST_STREAM_OFFSET, &cfg.tfpm)
    })?;
    io::save_dataset(&test, &out.join("data/test.tfd"))?;
    let mut profile: Vec<(ModelFamily, Vec<f64>)> = Vec::new();
    for &res in &cfg.resolutions {
        let locs = training_locations(ex, res)?;
        let data = watch.time(format!("data/train_{res}"), || {
            build_dataset(ex, cfg.m_train, &locs, cfg.data_seed, 0, &cfg.tfpm)
        })?;
        let data_file = format!("data/train_{res}.tfd");
        io::save_dataset(&data, &out.join(&data_file))?;
        for &family in &cfg.models {
            let tc = cfg.train_config_for(family);
            let mut model = CompositeModel::new(family, ex, Architecture::for_dim(ex.dim(), data.sensors.ncols()), cfg.init_seed)?;
            let history = watch.time(format!("train/{family}_{res}"), || train(&mut model, &data, &tc, cfg.train_seed))?;
            let stem = format!("models/{family}_{res}");
            io::save_checkpoint(&model, &out.join(format!("{stem}.tfc")))?;
            io::write_history_csv(&out.join(format!("{stem}_history.csv")), &history)?;
            let fit = loss_report(&model, &data, tc.gamma)?;
            let pred = watch.time(format!("eval/{family}_{res}"), || predict_dataset(&model, &test))?;
            let row = ResultRow {
                resolution: res,
                model: family,
                test_mse: mse(&test, &pred),
                jump_error: if ex.has_jump() { Some(jump_error(&model, &test)?) } else { None },
                strip_mae: if ex.dim() == 2 { Some(strip_mae(&test, &pred)?) } else { None },
                train_data_loss: fit.data,
                train_jump_loss: fit.jump,
                dataset: data_file.clone(),
                checkpoint: format!("{stem}.tfc"),
            };
            if !row.test_mse.is_finite() {
                return Err(Error::Numerical(format!("{family} at resolution {res}: non-finite test error")));
            }
            rows.push(row);
            if res == *cfg.resolutions.last().expect("non-empty") {
                profile.push((family, pred.row(0).to_vec()));
            }
        }
    }
    write_tables(out, rows)?;
    write_profile(out, &test, &profile)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_tables(out: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = io::csv_writer(&out.join("mse.csv"))?;
    w.write_record(["resolution", "model", "test_mse"]).map_err(io::csv_err)?;
    for r in rows {
        w.write_record([r.resolution.to_string(), r.model.to_string(), fmt_f64(r.test_mse)]).map_err(io::csv_err)?;
    }
    w.flush()?;
    let mut w = io::csv_writer(&out.join("metrics.csv"))?;
    w.write_record([
        "resolution",
        "model",
        "test_mse",
        "jump_error",
        "strip_mae",
        "train_data_loss",
        "train_jump_loss",
        "dataset",
        "checkpoint",
    ])
    .map_err(io::csv_err)?;
    for r in rows {
        w.write_record([
            r.resolution.to_string(),
            r.model.to_string(),
            fmt_f64(r.test_mse),
            opt(r.jump_error),
            opt(r.strip_mae),
            fmt_f64(r.train_data_loss),
            fmt_f64(r.train_jump_loss),
            r.dataset.clone(),
            r.checkpoint.clone(),
        ])
        .map_err(io::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn coord_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| if dim == 1 { "x".to_string() } else { format!("x{i}") }).collect()
}

fn write_profile(out: &Path, test: &Dataset, profile: &[(ModelFamily, Vec<f64>)]) -> Result<()> {
    let dim = test.locations[0].x.len();
    let mut w = io::csv_writer(&out.join("profile.csv"))?;
    let mut head = coord_header(dim);
    head.push("side".into());
    head.push("truth".into());
    head.extend(profile.iter().map(|(f, _)| format!("pred_{f}")));
    w.write_record(&head).map_err(io::csv_err)?;
    for (j, loc) in test.locations.iter().enumerate() {
        let mut rec: Vec<String> = loc.x.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(loc.side.map_or("", |s| s.as_str()).to_string());
        rec.push(fmt_f64(test.targets[[0, j]]));
        rec.extend(profile.iter().map(|(_, p)| fmt_f64(p[j])));
        w.write_record(&rec).map_err(io::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Pass/fail of the orderings each example is expected to show.
pub fn ordering_checks(example: ExampleId, rows: &[ResultRow]) -> Vec<(String, bool)> {
    let find = |res: usize, m: ModelFamily| rows.iter().find(|r| r.resolution == res && r.model == m);
    let baseline = match example {
        ExampleId::Example1Singular | ExampleId::Example1Contrast => ModelFamily::DeepOnet,
        _ => ModelFamily::IoNet,
    };
    let mut resolutions: Vec<usize> = rows.iter().map(|r| r.resolution).collect();
    resolutions.dedup();
    let mut out = Vec::new();
    for res in resolutions {
        let (Some(t), Some(b)) = (find(res, ModelFamily::Tfponet), find(res, baseline)) else {
            continue;
        };
        out.push((
            format!("{example} r={res}: mse tfponet {:.3e} < {baseline} {:.3e}", t.test_mse, b.test_mse),
            t.test_mse < b.test_mse,
        ));
        if let (Some(tj), Some(bj)) = (t.jump_error, b.jump_error) {
            out.push((format!("{example} r={res}: jump error tfponet {tj:.3e} < {baseline} {bj:.3e}"), tj < bj));
        }
        if let (Some(ts), Some(bs)) = (t.strip_mae, b.strip_mae) {
            out.push((format!("{example} r={res}: strip mae tfponet {ts:.3e} < {baseline} {bs:.3e}"), ts < bs));
        }
    }
    out
}

fn table_to_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header).map_err(io::csv_err)?;
    for r in rows {
        w.write_record(r).map_err(io::csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Format(format!("{what}: '{s}' is not a number")))
}

/// Turns a run directory into plot-ready CSVs in `dest`. Everything is
/// read and checked before the first file is written.
pub fn export_plotdata(results: &Path, dest: &Path) -> Result<Vec<PathBuf>> {
    let need = |name: &str| -> Result<PathBuf> {
        let p = results.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::Config(format!("{} is missing {name}", results.display())))
        }
    };
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(need("meta.json")?)?)
        .map_err(|e| Error::Format(format!("meta.json: {e}")))?;
    let example: ExampleId = serde_json::from_value(meta["config"]["example"].clone())
        .map_err(|e| Error::Format(format!("meta.json example: {e}")))?;
    let (mse_head, mse_rows) = io::read_csv(&need("mse.csv")?)?;
    if mse_head != ["resolution", "model", "test_mse"] {
        return Err(Error::Format("mse.csv has an unexpected header".into()));
    }
    let (prof_head, prof_rows) = io::read_csv(&need("profile.csv")?)?;
    let mut outputs: Vec<(String, Vec<u8>)> = Vec::new();

    // MSE against resolution, one column per model
    let mut models: Vec<String> = Vec::new();
    let mut table: BTreeMap<usize, BTreeMap<String, String>> = BTreeMap::new();
    for r in &mse_rows {
        let res: usize = r[0].parse().map_err(|_| Error::Format(format!("mse.csv: bad resolution '{}'", r[0])))?;
        parse_f64(&r[2], "mse.csv")?;
        if !models.contains(&r[1]) {
            models.push(r[1].clone());
        }
        table.entry(res).or_default().insert(r[1].clone(), r[2].clone());
    }
    if table.is_empty() {
        return Err(Error::Format("mse.csv has no rows".into()));
    }
    let mut head = vec!["resolution".to_string()];
    head.extend(models.iter().cloned());
    let body: Vec<Vec<String>> = table
        .iter()
        .map(|(res, m)| {
            let mut r = vec![res.to_string()];
            r.extend(models.iter().map(|k| m.get(k).cloned().unwrap_or_default()));
            r
        })
        .collect();
    outputs.push(("mse_vs_resolution.csv".into(), table_to_bytes(&head, &body)?));

    // profiles
    let dim = example.dim();
    let truth_col = prof_head
        .iter()
        .position(|h| h == "truth")
        .ok_or_else(|| Error::Format("profile.csv has no truth column".into()))?;
    if truth_col != dim + 1 {
        return Err(Error::Format("profile.csv columns do not match the example's dimension".into()));
    }
    let preds: Vec<(usize, String)> = prof_head
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("pred_").map(|m| (i, m.to_string())))
        .collect();
    if preds.is_empty() || prof_rows.is_empty() {
        return Err(Error::Format("profile.csv holds no predictions".into()));
    }
    let window = match example {
        ExampleId::Example1Singular | ExampleId::Example1Contrast => Some(("boundary_layer", LAYER_WINDOW)),
        ExampleId::Example2 => Some(("interface", INTERFACE_WINDOW)),
        ExampleId::Example3 => None,
    };
    for (col, model) in &preds {
        let mut rows = Vec::with_capacity(prof_rows.len());
        for r in &prof_rows {
            let truth = parse_f64(&r[truth_col], "profile.csv")?;
            let pred = parse_f64(&r[*col], "profile.csv")?;
            let mut row: Vec<String> = r[..dim].to_vec();
            if dim == 1 {
                row.push(r[dim].clone());
            }
            row.extend([fmt_f64(truth), fmt_f64(pred), fmt_f64((pred - truth).abs())]);
            if let Some((_, (lo, hi))) = window {
                let x = parse_f64(&r[0], "profile.csv")?;
                row.push(if x >= lo && x <= hi { "1" } else { "0" }.to_string());
            }
            rows.push(row);
        }
        let mut head = coord_header(dim);
        if dim == 1 {
            head.push("side".into());
        }
        head.extend(["truth", "pred", "abs_err"].map(String::from));
        if let Some((name, _)) = window {
            head.push(format!("in_{name}_window"));
        }
        let name = if dim == 1 { format!("profile_{model}.csv") } else { format!("grid_{model}.csv") };
        outputs.push((name, table_to_bytes(&head, &rows)?));
    }
    if let Some((name, (lo, hi))) = window {
        let side = json!({"example": example, "windows": [{"name": name, "lo": lo, "hi": hi}]});
        let mut s = serde_json::to_string_pretty(&side).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        outputs.push(("profile_windows.json".into(), s.into_bytes()));
    }

    fs::create_dir_all(dest)?;
    let mut written = Vec::with_capacity(outputs.len());
    for (name, bytes) in outputs {
        let p = dest.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::preset(ExampleId::Example2, Scale::Desk, "x".into());
        assert!(c.validate().is_ok());
        c.resolutions = vec![256, 128];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.resolutions = vec![128];
        c.models = vec![ModelFamily::IoNet, ModelFamily::IoNet];
        assert!(c.validate().is_err());
    }

    #[test]
    fn presets_differ_only_in_sizes() {
        let d = ExperimentConfig::preset(ExampleId::Example1Singular, Scale::Desk, "x".into());
        let p = ExperimentConfig::preset(ExampleId::Example1Singular, Scale::PaperScale, "x".into());
        assert_eq!(d.models, p.models);
        assert_eq!(d.train.gamma, p.train.gamma);
        assert_eq!(d.train.adam, p.train.adam);
        assert_eq!(d.tfpm, p.tfpm);
        assert_eq!((d.m_train, p.m_train), (200, 1000));
    }

    #[test]
    fn export_of_empty_dir_fails_cleanly() {
        let src = tempfile::tempdir().unwrap();
        let dest = src.path().join("plots");
        assert!(export_plotdata(src.path(), &dest).is_err());
        assert!(!dest.exists());
    }

    #[test]
    fn ordering_rows() {
        let row = |model, mse| ResultRow {
            resolution: 128,
            model,
            test_mse: mse,
            jump_error: Some(mse),
            strip_mae: None,
            train_data_loss: 0.0,
            train_jump_loss: 0.0,
            dataset: String::new(),
            checkpoint: String::new(),
        };
        let checks = ordering_checks(ExampleId::Example2, &[row(ModelFamily::Tfponet, 1.0), row(ModelFamily::IoNet, 2.0)]);
        assert_eq!(checks.len(), 2);
        assert!(checks.iter().all(|c| c.1));
    }
}
