//! Command line front end: data generation, training, evaluation, the
//! ground-truth solvers, special-function tables, experiments and export.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 acceptance-threshold failure (`run --check`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use tfponet_core::error::{Error, Result};
use tfponet_core::experiment::{export_plotdata, ordering_checks, run_experiment, ExperimentConfig, Scale};
use tfponet_core::io::{self, fmt_f64};
use tfponet_core::operatornets::{Architecture, CompositeModel, ModelFamily};
use tfponet_core::problem::{load_problem, ExampleId, Transform1d};
use tfponet_core::specialfn::{airy, bessel_i, bessel_i_deriv};
use tfponet_core::tfpm1d::{assemble_and_solve, Mesh1d};
use tfponet_core::tfpm2d::assemble_and_solve_2d;
use tfponet_core::training::{
    build_dataset, loss_report, mean_jump_error, predict_dataset, test_locations, train, training_locations,
    TfpmResolution, TrainConfig, TEST_STREAM_OFFSET,
};
use tfponet_core::Side;

#[derive(Parser)]
#[command(name = "tfponet", version, about = "Operator learning for elliptic interface problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample inputs and label them with the ground-truth solver.
    Gen(GenArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Solve a 1D problem with the tailored finite point method.
    Solve1d(Solve1dArgs),
    /// Solve a 2D problem with the tailored finite point method.
    Solve2d(Solve2dArgs),
    /// Tabulate Airy or modified Bessel functions.
    #[command(subcommand)]
    Specialfn(SpecialfnCommand),
    /// Run a full experiment.
    Run(RunArgs),
    /// Turn a run directory into plot-ready CSVs.
    Export(ExportArgs),
}

fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("--{name} is required (flag or config key)")))
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<ExampleId>,
    /// number of input functions
    #[arg(long)]
    samples: Option<usize>,
    /// training locations (points in 1D, points per axis in 2D)
    #[arg(long)]
    resolution: Option<usize>,
    /// use the test locations and the held-out random streams
    #[arg(long)]
    test: bool,
    #[arg(long)]
    seed: u64,
    /// 1D ground-truth mesh nodes per subdomain
    #[arg(long)]
    nodes: Option<usize>,
    /// 2D ground-truth cells per axis
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// also write the triplets as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenFile {
    example: Option<ExampleId>,
    samples: Option<usize>,
    resolution: Option<usize>,
    test: Option<bool>,
    nodes: Option<usize>,
    cells: Option<usize>,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let f: GenFile = read_toml(a.config.as_deref())?;
    let example = required(a.example.or(f.example), "example")?;
    let samples = required(a.samples.or(f.samples), "samples")?;
    let resolution = required(a.resolution.or(f.resolution), "resolution")?;
    let out = required(a.out.or(f.out), "out")?;
    let test = a.test || f.test.unwrap_or(false);
    let mut tfpm = TfpmResolution::default();
    if let Some(n) = a.nodes.or(f.nodes) {
        tfpm.nodes_per_subdomain = n;
    }
    if let Some(c) = a.cells.or(f.cells) {
        tfpm.cells = c;
    }
    let (locs, offset) = if test {
        (test_locations(example, resolution)?, TEST_STREAM_OFFSET)
    } else {
        (training_locations(example, resolution)?, 0)
    };
    let ds = build_dataset(example, samples, &locs, a.seed, offset, &tfpm)?;
    io::save_dataset(&ds, &out)?;
    if let Some(c) = a.csv.or(f.csv) {
        io::write_dataset_csv(&ds, &c)?;
    }
    println!("{} samples x {} locations -> {}", ds.samples(), ds.locations.len(), out.display());
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelFamily>,
    /// seeds both the initialization and the minibatch order
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    /// triplets per minibatch
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    full_batch: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    data: Option<PathBuf>,
    model: Option<ModelFamily>,
    steps: Option<usize>,
    gamma: Option<f64>,
    lr: Option<f64>,
    batch: Option<usize>,
    out: Option<PathBuf>,
    history: Option<PathBuf>,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let f: TrainFile = read_toml(a.config.as_deref())?;
    let data = io::load_dataset(&required(a.data.or(f.data), "data")?)?;
    let family = required(a.model.or(f.model), "model")?;
    let out = required(a.out.or(f.out), "out")?;
    let example = data.meta.example;
    let mut cfg = TrainConfig::desk(example.dim());
    if family == ModelFamily::DeepOnet {
        cfg.gamma = 0.0;
    }
    if let Some(s) = a.steps.or(f.steps) {
        cfg.steps = s;
    }
    if let Some(g) = a.gamma.or(f.gamma) {
        cfg.gamma = g;
    }
    if let Some(lr) = a.lr.or(f.lr) {
        cfg.adam.lr = lr;
    }
    if let Some(b) = a.batch.or(f.batch) {
        cfg.batch = Some(b);
    }
    if a.full_batch {
        cfg.batch = None;
    }
    let mut model = CompositeModel::new(family, example, Architecture::for_dim(example.dim(), data.sensors.ncols()), a.seed)?;
    let history = train(&mut model, &data, &cfg, a.seed)?;
    io::save_checkpoint(&model, &out)?;
    if let Some(h) = a.history.or(f.history) {
        io::write_history_csv(&h, &history)?;
    }
    let last = history.last().expect("final entry");
    println!("{family}: {} steps, data loss {:.4e}, jump loss {:.4e} -> {}", cfg.steps, last.data, last.jump, out.display());
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    /// checkpoint file
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// predictions as long-format CSV
    #[arg(long)]
    out: Option<PathBuf>,
    /// metrics as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = io::load_checkpoint(&a.model)?;
    let data = io::load_dataset(&a.data)?;
    if data.meta.example != model.example {
        return Err(Error::Config(format!("model is for {}, data for {}", model.example, data.meta.example)));
    }
    let pred = predict_dataset(&model, &data)?;
    let report = loss_report(&model, &data, 0.0)?;
    let jump = if model.example.has_jump() { Some(mean_jump_error(&model, &data)?) } else { None };
    let strip = if model.example.dim() == 2 { Some(tfponet_core::experiment::strip_mae(&data, &pred)?) } else { None };
    let metrics = json!({"model": model.family, "example": model.example, "mse": report.data, "jump_loss": report.jump, "jump_error": jump, "strip_mae": strip});
    println!("{metrics}");
    if let Some(p) = a.json {
        fs::write(p, format!("{}\n", serde_json::to_string_pretty(&metrics).expect("json")))?;
    }
    if let Some(p) = a.out {
        let dim = data.locations[0].x.len();
        let mut w = io::csv_writer(&p)?;
        let mut head = vec!["sample".to_string()];
        head.extend((1..=dim).map(|i| format!("x{i}")));
        head.extend(["side", "truth", "pred"].map(String::from));
        w.write_record(&head).map_err(io::csv_err)?;
        for m in 0..data.samples() {
            for (j, l) in data.locations.iter().enumerate() {
                let mut r = vec![m.to_string()];
                r.extend(l.x.iter().map(|v| fmt_f64(*v)));
                r.push(l.side.map_or("", Side::as_str).to_string());
                r.push(fmt_f64(data.targets[[m, j]]));
                r.push(fmt_f64(pred[[m, j]]));
                w.write_record(&r).map_err(io::csv_err)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Args)]
struct Solve1dArgs {
    /// problem file (TOML, or JSON by extension)
    #[arg(long)]
    config: PathBuf,
    /// mesh nodes per subdomain
    #[arg(long, default_value_t = 1025)]
    nodes: usize,
    /// output points
    #[arg(long = "eval-grid", alias = "points", default_value_t = 1001)]
    points: usize,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_solve1d(a: Solve1dArgs) -> Result<()> {
    let p = load_problem(&a.config)?;
    if p.dim() != 1 {
        return Err(Error::Config("solve1d needs a 1D problem".into()));
    }
    if a.points < 2 {
        return Err(Error::Config("--points must be at least 2".into()));
    }
    let t = Transform1d::from_problem(&p)?;
    let sol = assemble_and_solve(&p, Mesh1d::uniform_x(&t, a.nodes)?)?;
    let (lo, hi) = p.domain.first_axis();
    let mut w = io::csv_writer(&a.out)?;
    w.write_record(["x", "u", "side"]).map_err(io::csv_err)?;
    for i in 0..a.points {
        let x = lo + (hi - lo) * i as f64 / (a.points - 1) as f64;
        let sides: &[Option<Side>] = if p.interfaces.contains(&x) { &[Some(Side::Left), Some(Side::Right)] } else { &[None] };
        for &s in sides {
            let u = sol.evaluate(x, s)?;
            w.write_record([fmt_f64(x), fmt_f64(u), s.map_or("", Side::as_str).to_string()]).map_err(io::csv_err)?;
        }
    }
    w.flush()?;
    let (rv, rf) = sol.constraint_residuals(&p)?;
    println!("solved on {} subintervals; interface residuals value {rv:.3e} flux {rf:.3e}", sol.mesh().subintervals());
    Ok(())
}

#[derive(Args)]
struct Solve2dArgs {
    #[arg(long)]
    config: PathBuf,
    /// cells per axis as NX,NY
    #[arg(long, value_parser = parse_cells, default_value = "64,64")]
    cells: (usize, usize),
    /// truncation order K
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// output points per axis
    #[arg(long = "eval-grid", alias = "points", default_value_t = 65)]
    points: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_cells(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected NX,NY")?;
    Ok((a.trim().parse().map_err(|_| "bad NX")?, b.trim().parse().map_err(|_| "bad NY")?))
}

fn cmd_solve2d(a: Solve2dArgs) -> Result<()> {
    let p = load_problem(&a.config)?;
    if p.dim() != 2 {
        return Err(Error::Config("solve2d needs a 2D problem".into()));
    }
    if a.points < 2 {
        return Err(Error::Config("--points must be at least 2".into()));
    }
    let sol = assemble_and_solve_2d(&p, a.cells.0, a.cells.1, a.order)?;
    let (lo, hi) = p.domain.bounds();
    let mut w = io::csv_writer(&a.out)?;
    w.write_record(["x1", "x2", "u", "side"]).map_err(io::csv_err)?;
    let n = a.points;
    for i in 0..n {
        let x1 = lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64;
        let sides: &[Option<Side>] = if p.interfaces.contains(&x1) { &[Some(Side::Left), Some(Side::Right)] } else { &[None] };
        for j in 0..n {
            let x2 = lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64;
            for &s in sides {
                let u = sol.evaluate([x1, x2], s)?;
                w.write_record([fmt_f64(x1), fmt_f64(x2), fmt_f64(u), s.map_or("", Side::as_str).to_string()])
                    .map_err(io::csv_err)?;
            }
        }
    }
    w.flush()?;
    let r = &sol.residual;
    println!(
        "solved on {}x{} cells, order {}; residuals max {:.3e} interface value {:.3e} flux {:.3e}",
        a.cells.0, a.cells.1, a.order, r.max, r.interface_value, r.interface_flux
    );
    Ok(())
}

#[derive(Subcommand)]
enum SpecialfnCommand {
    /// Tabulate one function on a uniform grid as `x,value`.
    Table(TableArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Function {
    Ai,
    AiPrime,
    Bi,
    BiPrime,
    /// modified Bessel `I_n`
    In,
    InPrime,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long = "fn", value_enum)]
    function: Function,
    /// Bessel order
    #[arg(long, default_value_t = 0)]
    order: u32,
    #[arg(long, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, allow_negative_numbers = true)]
    to: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// exponentially scaled values
    #[arg(long)]
    scaled: bool,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_specialfn(c: SpecialfnCommand) -> Result<()> {
    let SpecialfnCommand::Table(a) = c;
    if a.points < 2 || !(a.to > a.from) {
        return Err(Error::Config("need --to > --from and at least 2 points".into()));
    }
    let mut w = io::csv_writer(&a.out)?;
    w.write_record(["x", "value"]).map_err(io::csv_err)?;
    for k in 0..a.points {
        let x = a.from + (a.to - a.from) * k as f64 / (a.points - 1) as f64;
        let v = match a.function {
            Function::Ai => airy(x, a.scaled)?.ai,
            Function::AiPrime => airy(x, a.scaled)?.ai_prime,
            Function::Bi => airy(x, a.scaled)?.bi,
            Function::BiPrime => airy(x, a.scaled)?.bi_prime,
            Function::In => bessel_i(a.order, x, a.scaled)?.value,
            Function::InPrime => bessel_i_deriv(a.order, x, a.scaled)?,
        };
        w.write_record([fmt_f64(x), fmt_f64(v)]).map_err(io::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Args)]
struct RunArgs {
    /// experiment file (TOML); flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<ExampleId>,
    /// comma-separated model families
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelFamily>>,
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    #[arg(long, conflicts_with = "paper_scale")]
    desk: bool,
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    m_train: Option<usize>,
    #[arg(long)]
    m_test: Option<usize>,
    #[arg(long)]
    test_resolution: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// exit with code 4 unless the expected orderings hold
    #[arg(long)]
    check: bool,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    example: Option<ExampleId>,
    scale: Option<Scale>,
    models: Option<Vec<ModelFamily>>,
    resolutions: Option<Vec<usize>>,
    m_train: Option<usize>,
    m_test: Option<usize>,
    test_resolution: Option<usize>,
    steps: Option<usize>,
    gamma: Option<f64>,
    lr: Option<f64>,
    batch: Option<usize>,
    data_seed: Option<u64>,
    init_seed: Option<u64>,
    train_seed: Option<u64>,
    nodes: Option<usize>,
    cells: Option<usize>,
    out: Option<PathBuf>,
}

fn experiment_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let f: RunFile = read_toml(a.config.as_deref())?;
    let example = required(a.example.or(f.example), "example")?;
    let scale = if a.paper_scale {
        Scale::PaperScale
    } else if a.desk {
        Scale::Desk
    } else {
        f.scale.unwrap_or(Scale::Desk)
    };
    let out = required(a.out.clone().or(f.out), "out")?;
    let mut c = ExperimentConfig::preset(example, scale, out);
    if let Some(m) = a.models.clone().or(f.models) {
        c.models = m;
    }
    if let Some(r) = a.resolutions.clone().or(f.resolutions) {
        c.resolutions = r;
    }
    macro_rules! set {
        ($field:expr, $v:expr) => {
            if let Some(v) = $v {
                $field = v;
            }
        };
    }
    set!(c.m_train, a.m_train.or(f.m_train));
    set!(c.m_test, a.m_test.or(f.m_test));
    set!(c.test_resolution, a.test_resolution.or(f.test_resolution));
    set!(c.train.steps, a.steps.or(f.steps));
    set!(c.train.gamma, a.gamma.or(f.gamma));
    set!(c.train.adam.lr, a.lr.or(f.lr));
    set!(c.data_seed, a.data_seed.or(f.data_seed));
    set!(c.init_seed, a.init_seed.or(f.init_seed));
    set!(c.train_seed, a.train_seed.or(f.train_seed));
    set!(c.tfpm.nodes_per_subdomain, f.nodes);
    set!(c.tfpm.cells, f.cells);
    if let Some(b) = f.batch {
        c.train.batch = Some(b);
    }
    c.validate()?;
    Ok(c)
}

fn cmd_run(a: RunArgs) -> Result<bool> {
    let cfg = experiment_config(&a)?;
    let report = run_experiment(&cfg)?;
    for r in &report.rows {
        println!("resolution {:>4}  {:<8}  test mse {:.4e}", r.resolution, r.model.as_str(), r.test_mse);
    }
    let checks = ordering_checks(cfg.example, &report.rows);
    let mut ok = true;
    for (what, pass) in &checks {
        println!("{} {what}", if *pass { "PASS" } else { "FAIL" });
        ok &= pass;
    }
    Ok(!a.check || ok)
}

#[derive(Args)]
struct ExportArgs {
    /// run directory
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    for p in export_plotdata(&a.results, &a.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Solve1d(a) => cmd_solve1d(a).map(|_| true),
        Command::Solve2d(a) => cmd_solve2d(a).map(|_| true),
        Command::Specialfn(a) => cmd_specialfn(a).map(|_| true),
        Command::Run(a) => cmd_run(a),
        Command::Export(a) => cmd_export(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
