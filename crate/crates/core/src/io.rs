//! Dataset and checkpoint files, plus the CSV writers shared by the
//! command line tools.
//!
//! Binary files are a magic line, one JSON header line, then the numeric
//! blocks listed in the header as little-endian `f64`, row-major:
//!
//! ```text
//! TFPONET 1\n
//! {"kind": "...", "blocks": [{"name": "...", "rows": R, "cols": C}, ...], ...}\n
//! <R*C f64> ...
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operatornets::{Architecture, CompositeModel, FeatureNorm, ModelFamily, BASIS_BLOCKS, FEATURE_CELLS, FEATURE_SUBINTERVALS};
use crate::problem::{ExampleId, Side};
use crate::training::{Dataset, DatasetMeta, HistoryRow, InterfacePoint, Location};

const MAGIC: &str = "TFPONET 1";

/// Shape of one numeric block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Envelope<H> {
    kind: String,
    blocks: Vec<BlockInfo>,
    #[serde(flatten)]
    header: H,
}

/// Writes a header and blocks to `path`.
pub fn write_container<H: Serialize>(path: &Path, kind: &str, header: &H, blocks: &[(&str, &Array2<f64>)]) -> Result<()> {
    let env = Envelope {
        kind: kind.to_string(),
        blocks: blocks
            .iter()
            .map(|(n, a)| BlockInfo { name: n.to_string(), rows: a.nrows(), cols: a.ncols() })
            .collect(),
        header,
    };
    let json = serde_json::to_string(&env).map_err(|e| Error::Format(e.to_string()))?;
    let total: usize = blocks.iter().map(|(_, a)| a.len()).sum();
    let mut buf = Vec::with_capacity(MAGIC.len() + json.len() + 2 + 8 * total);
    buf.extend_from_slice(MAGIC.as_bytes());
    buf.push(b'\n');
    buf.extend_from_slice(json.as_bytes());
    buf.push(b'\n');
    for (_, a) in blocks {
        for v in a.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads a container written by [`write_container`], checking its kind.
pub fn read_container<H: DeserializeOwned>(path: &Path, kind: &str) -> Result<(H, Vec<(String, Array2<f64>)>)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::Format(format!("{} is not a tfponet file", path.display())));
    }
    line.clear();
    r.read_line(&mut line)?;
    let env: Envelope<H> = serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if env.kind != kind {
        return Err(Error::Format(format!("{} holds a {}, expected a {kind}", path.display(), env.kind)));
    }
    let mut blocks = Vec::with_capacity(env.blocks.len());
    for b in &env.blocks {
        let n = b.rows.checked_mul(b.cols).ok_or_else(|| Error::Format("block size overflow".into()))?;
        let mut bytes = vec![0u8; 8 * n];
        r.read_exact(&mut bytes).map_err(|_| Error::Format(format!("{}: block '{}' truncated", path.display(), b.name)))?;
        let vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let a = Array2::from_shape_vec((b.rows, b.cols), vals).map_err(|e| Error::Format(e.to_string()))?;
        blocks.push((b.name.clone(), a));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{}: {} trailing bytes", path.display(), rest.len())));
    }
    Ok((env.header, blocks))
}

fn take_block(blocks: &mut Vec<(String, Array2<f64>)>, name: &str) -> Result<Array2<f64>> {
    let i = blocks
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Format(format!("missing block '{name}'")))?;
    Ok(blocks.remove(i).1)
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    meta: DatasetMeta,
    sensor_locations: Vec<Location>,
    locations: Vec<Location>,
    interface: Vec<InterfacePoint>,
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let h = DatasetHeader {
        meta: ds.meta.clone(),
        sensor_locations: ds.sensor_locations.clone(),
        locations: ds.locations.clone(),
        interface: ds.interface.clone(),
    };
    write_container(path, "dataset", &h, &[("sensors", &ds.sensors), ("targets", &ds.targets)])
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (h, mut blocks): (DatasetHeader, _) = read_container(path, "dataset")?;
    let ds = Dataset {
        meta: h.meta,
        sensor_locations: h.sensor_locations,
        sensors: take_block(&mut blocks, "sensors")?,
        locations: h.locations,
        targets: take_block(&mut blocks, "targets")?,
        interface: h.interface,
    };
    ds.validate().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(ds)
}

fn side_str(side: Option<Side>) -> &'static str {
    side.map_or("", Side::as_str)
}

/// Long-format triplets: `sample,x1[,x2],side,u`.
pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let dim = ds.locations.first().map_or(1, |l| l.x.len());
    let mut w = csv_writer(path)?;
    let mut head = vec!["sample".to_string()];
    head.extend((1..=dim).map(|i| format!("x{i}")));
    head.extend(["side".to_string(), "u".to_string()]);
    w.write_record(&head).map_err(csv_err)?;
    for m in 0..ds.samples() {
        for (j, loc) in ds.locations.iter().enumerate() {
            let mut rec = vec![m.to_string()];
            rec.extend(loc.x.iter().map(|v| fmt_f64(*v)));
            rec.push(side_str(loc.side).to_string());
            rec.push(fmt_f64(ds.targets[[m, j]]));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to rebuild a trained model except its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub family: ModelFamily,
    pub example: ExampleId,
    pub arch: Architecture,
    pub init_seed: u64,
    pub norms: Vec<FeatureNorm>,
    pub interfaces: Vec<f64>,
    pub a_sides: Vec<[f64; 2]>,
    pub widths: Vec<f64>,
    /// per sub-model trunk input `(center, scale)`
    pub trunk_inputs: Vec<(Vec<f64>, Vec<f64>)>,
    pub basis_blocks: usize,
    pub feature_subintervals: usize,
    pub feature_cells: usize,
    pub n_params: usize,
}

pub fn save_checkpoint(model: &CompositeModel, path: &Path) -> Result<()> {
    let h = CheckpointHeader {
        family: model.family,
        example: model.example,
        arch: model.arch.clone(),
        init_seed: model.init_seed,
        norms: model.norms.clone(),
        interfaces: model.interfaces.clone(),
        a_sides: model.a_sides.clone(),
        widths: model.widths.clone(),
        trunk_inputs: model.subs.iter().map(|s| (s.deeponet().center.clone(), s.deeponet().scale.clone())).collect(),
        basis_blocks: BASIS_BLOCKS,
        feature_subintervals: FEATURE_SUBINTERVALS,
        feature_cells: FEATURE_CELLS,
        n_params: model.n_params(),
    };
    let p = Array2::from_shape_vec((1, h.n_params), model.params()).expect("row");
    write_container(path, "checkpoint", &h, &[("params", &p)])
}

/// Loads a checkpoint and rebuilds the problem-derived feature map.
pub fn load_checkpoint(path: &Path) -> Result<CompositeModel> {
    let (h, mut blocks): (CheckpointHeader, _) = read_container(path, "checkpoint")?;
    if h.basis_blocks != BASIS_BLOCKS || h.feature_subintervals != FEATURE_SUBINTERVALS || h.feature_cells != FEATURE_CELLS {
        return Err(Error::Format(format!("{}: feature layout differs from this build", path.display())));
    }
    let mut model = CompositeModel::new(h.family, h.example, h.arch, h.init_seed)?;
    let p = take_block(&mut blocks, "params")?;
    if p.len() != model.n_params() || h.n_params != p.len() || h.trunk_inputs.len() != model.subs.len() {
        return Err(Error::Format(format!("{}: parameter count does not match the architecture", path.display())));
    }
    model.set_params(p.as_slice().expect("contiguous"))?;
    model.set_trunk_inputs(&h.trunk_inputs)?;
    if model.family == ModelFamily::Tfponet && h.norms.len() != model.subs.len() {
        return Err(Error::Format(format!("{}: one feature normalization per sub-model expected", path.display())));
    }
    model.norms = h.norms;
    model.interfaces = h.interfaces;
    model.a_sides = h.a_sides;
    model.widths = h.widths;
    Ok(model)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(fs::File::create(path)?))
}

pub fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Writes a header row and numeric rows.
pub fn write_numeric_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Shape(format!("row of {} values for {} columns", r.len(), header.len())));
        }
        w.write_record(r.iter().map(|v| fmt_f64(*v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history_csv(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "data", "jump", "total"]).map_err(csv_err)?;
    for h in history {
        w.write_record([h.step.to_string(), fmt_f64(h.data), fmt_f64(h.jump), fmt_f64(h.total)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV with a header into string records.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    })?;
    let head = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok((head, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let a = Array2::from_shape_fn((2, 3), |(i, j)| i as f64 - 0.1 * j as f64);
        write_container(&p, "thing", &serde_json::json!({"k": 1}), &[("a", &a)]).unwrap();
        let (h, b): (serde_json::Value, _) = read_container(&p, "thing").unwrap();
        assert_eq!(h["k"], 1);
        assert_eq!(b[0].1, a);
        assert!(matches!(read_container::<serde_json::Value>(&p, "other"), Err(Error::Format(_))));
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_container::<serde_json::Value>(&p, "thing"), Err(Error::Format(_))));
    }

    #[test]
    fn floats_print_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e22] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
