//! Acceptance suite. Criteria run one after another (so the runtime budgets
//! are measured on an otherwise idle machine) and each prints one line:
//!
//! ```text
//! [PASS] criterion 3 (tfpm 1d exactness): max error 2.1e-12 (0.0 s)
//! ```
//!
//! The test fails at the end if any criterion failed. Setting
//! `TFPONET_ACCEPTANCE_ONLY=1,2,6` runs a subset (reported as such).

use std::collections::BTreeMap;
use std::io::Write;
use std::f64::consts::FRAC_1_PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tfponet_core::experiment::{ordering_checks, run_experiment, ExperimentConfig, Scale};
use tfponet_core::nn::Mlp;
use tfponet_core::operatornets::{Architecture, CompositeModel, ModelFamily, Tfponet, DeepOnet};
use tfponet_core::problem::{
    example1_contrast, example1_singular, example2, example3, BoundaryData, Domain, ExampleId, InterfaceProblem,
    PiecewiseField, ScalarFn, Transform1d,
};
use tfponet_core::quadrature::gauss_legendre2;
use tfponet_core::specialfn::{airy, bessel_i_scaled};
use tfponet_core::tfpm1d::{assemble_and_solve, Mesh1d};
use tfponet_core::tfpm2d::assemble_and_solve_2d;
use tfponet_core::training::{
    build_dataset, loss_gradient, loss_report, sample_rng, training_locations, InputSampler, TfpmResolution,
};
use tfponet_core::Side;

type Outcome = Result<(bool, String), String>;

struct Suite {
    failed: Vec<usize>,
    only: Option<Vec<usize>>,
}

impl Suite {
    fn run(&mut self, n: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        if self.only.as_ref().is_some_and(|o| !o.contains(&n)) {
            report(&format!("[SKIP] criterion {n} ({name}): not selected"));
            return;
        }
        let t = Instant::now();
        let (mut pass, mut detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        let el = t.elapsed();
        if el > budget {
            pass = false;
            detail.push_str(&format!("; over the {:.0} s budget", budget.as_secs_f64()));
        }
        report(&format!(
            "[{}] criterion {n} ({name}): {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            el.as_secs_f64()
        ));
        if !pass {
            self.failed.push(n);
        }
    }
}

/// Writes to the stdout handle directly, which the test harness does not
/// capture, so the verdicts show up without `--nocapture`.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn special_functions() -> Outcome {
    let mut worst_w = 0.0f64;
    for i in 0..=3000 {
        let x = -10.0 + 0.01 * i as f64;
        // scaled values above x = 5; the factors cancel in the Wronskian
        let p = airy(x, x > 5.0).map_err(err)?;
        worst_w = worst_w.max((p.wronskian() - FRAC_1_PI).abs());
    }
    let mut worst_r = 0.0f64;
    for i in 0..=200 {
        let x = 1e-3 * (5e4f64).powf(i as f64 / 200.0);
        for n in 1..=10u32 {
            let lo = bessel_i_scaled(n - 1, x).map_err(err)?;
            let mid = bessel_i_scaled(n, x).map_err(err)?;
            let hi = bessel_i_scaled(n + 1, x).map_err(err)?;
            worst_r = worst_r.max(((lo - hi) - 2.0 * n as f64 / x * mid).abs() / lo);
        }
    }
    Ok((
        worst_w <= 1e-12 && worst_r < 1e-10,
        format!("max |W - 1/pi| {worst_w:.1e} on [-10, 20], max recurrence residual {worst_r:.1e}"),
    ))
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn net_gradients() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            sizes.push(rng.random_range(2..=12));
        }
        sizes.push(rng.random_range(1..=4));
        let net = Mlp::he_uniform(&sizes, &mut rng).map_err(err)?;
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (gp, gx) = net.backward(&x, &up).map_err(err)?;
        let obj = |n: &Mlp, x: &[f64]| -> f64 { n.forward(x).unwrap().iter().zip(&up).map(|(o, u)| o * u).sum() };
        let mut fd_p = Vec::with_capacity(gp.len());
        let mut pert = net.clone();
        for k in 0..gp.len() {
            let p0 = pert.params()[k];
            pert.params_mut()[k] = p0 + h;
            let plus = obj(&pert, &x);
            pert.params_mut()[k] = p0 - h;
            let minus = obj(&pert, &x);
            pert.params_mut()[k] = p0;
            fd_p.push((plus - minus) / (2.0 * h));
        }
        let fd_x: Vec<f64> = (0..x.len())
            .map(|k| {
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                (obj(&net, &xp) - obj(&net, &xm)) / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel_inf(&gp, &fd_p)).max(rel_inf(&gx, &fd_x));
    }
    Ok(worst)
}

fn total_loss_gradient() -> Result<f64, String> {
    let ex = ExampleId::Example2;
    let res = TfpmResolution { nodes_per_subdomain: 65, cells: 8, order: 3 };
    let ds = build_dataset(ex, 3, &training_locations(ex, 8).map_err(err)?, 5, 0, &res).map_err(err)?;
    let s = ds.sensors.ncols();
    let arch = Architecture { branch: vec![s, 6, 5], trunk: vec![1, 6, 5], basis: vec![1, 3, 1] };
    let mut model = CompositeModel::new(ModelFamily::Tfponet, ex, arch, 11).map_err(err)?;
    let gamma = 0.7;
    let (_, g) = loss_gradient(&model, &ds, gamma).map_err(err)?;
    let p0 = model.params();
    let h = 1e-6;
    let mut fd = Vec::with_capacity(p0.len());
    for k in 0..p0.len() {
        let mut p = p0.clone();
        p[k] = p0[k] + h;
        model.set_params(&p).map_err(err)?;
        let plus = loss_report(&model, &ds, gamma).map_err(err)?.total;
        p[k] = p0[k] - h;
        model.set_params(&p).map_err(err)?;
        let minus = loss_report(&model, &ds, gamma).map_err(err)?.total;
        fd.push((plus - minus) / (2.0 * h));
    }
    Ok(rel_inf(&g, &fd))
}

fn autodiff() -> Outcome {
    let nets = net_gradients()?;
    let total = total_loss_gradient()?;
    Ok((
        nets <= 1e-6 && total <= 1e-5,
        format!("100 random nets: max relative error {nets:.1e}; total loss with jump term: {total:.1e}"),
    ))
}

fn constant_problem(a: f64) -> Result<InterfaceProblem, String> {
    InterfaceProblem {
        name: "constant".into(),
        domain: Domain::Interval { lo: 0.0, hi: 1.0 },
        interfaces: vec![],
        a: PiecewiseField::constant(a),
        b: PiecewiseField::constant(1.0),
        f: PiecewiseField::constant(1.0),
        g_d: vec![],
        g_n: vec![],
        bc: BoundaryData::Interval { left: 0.0, right: 0.0 },
    }
    .validated()
    .map_err(err)
}

fn tfpm1d_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for a in [1.0, 1e-4, 1e-8] {
        let p = constant_problem(a)?;
        let t = Transform1d::from_problem(&p).map_err(err)?;
        let s = assemble_and_solve(&p, Mesh1d::uniform_x(&t, 33).map_err(err)?).map_err(err)?;
        let k = 1.0 / a.sqrt();
        // 1 - cosh(k (x - 1/2)) / cosh(k / 2) without overflow
        let exact = |x: f64| 1.0 - ((-k * x).exp() + (-k * (1.0 - x)).exp()) / (1.0 + (-k).exp());
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            worst = worst.max((s.evaluate(x, None).map_err(err)? - exact(x)).abs());
        }
    }
    Ok((worst < 1e-8, format!("max error {worst:.1e} over a in {{1, 1e-4, 1e-8}}, 33 nodes, 1001 points")))
}

fn jump_enforcement() -> Outcome {
    let sampler = InputSampler::new(ExampleId::Example2).map_err(err)?;
    let mut worst1 = 0.0f64;
    for i in 0..5 {
        let f = sampler.sample(&mut sample_rng(77, i)).map_err(err)?;
        let p = example2(f).map_err(err)?;
        let t = Transform1d::from_problem(&p).map_err(err)?;
        let s = assemble_and_solve(&p, Mesh1d::uniform_x(&t, 1025).map_err(err)?).map_err(err)?;
        let (l, dl) = s.evaluate_with_derivative(0.5, Some(Side::Left)).map_err(err)?;
        let (r, dr) = s.evaluate_with_derivative(0.5, Some(Side::Right)).map_err(err)?;
        let a = |x: f64, side| p.a.eval(&[x], Some(side)).unwrap();
        let g_d = p.g_d[0].eval(&[0.5]);
        let g_n = p.g_n[0].eval(&[0.5]);
        worst1 = worst1.max((r - l - g_d).abs()).max((a(0.5, Side::Right) * dr - a(0.5, Side::Left) * dl - g_n).abs());
    }
    let sampler = InputSampler::new(ExampleId::Example3).map_err(err)?;
    let mut ok2 = true;
    let mut worst2 = (0.0f64, 0.0f64);
    let mut reported = (0.0f64, 0.0f64);
    for i in 0..3 {
        let g = sampler.sample(&mut sample_rng(78, i)).map_err(err)?;
        let p = example3(g).map_err(err)?;
        let (n, order) = (64, 3);
        let s = assemble_and_solve_2d(&p, n, n, order).map_err(err)?;
        let (rv, rf) = (s.residual.interface_value, s.residual.interface_flux);
        let (mut ev, mut ef) = (0.0f64, 0.0f64);
        for j in 0..n {
            let lo = -1.0 + 2.0 * j as f64 / n as f64;
            for (x2, _) in gauss_legendre2(lo, lo + 2.0 / n as f64) {
                let (l, gl) = s.evaluate_with_gradient([0.0, x2], Some(Side::Left)).map_err(err)?;
                let (r, gr) = s.evaluate_with_gradient([0.0, x2], Some(Side::Right)).map_err(err)?;
                let al = p.a.eval(&[0.0, x2], Some(Side::Left)).map_err(err)?;
                let ar = p.a.eval(&[0.0, x2], Some(Side::Right)).map_err(err)?;
                ev = ev.max((r - l - p.g_d[0].eval(&[0.0, x2])).abs());
                ef = ef.max((ar * gr[0] - al * gl[0] - p.g_n[0].eval(&[0.0, x2])).abs());
            }
        }
        ok2 &= ev <= rv * (1.0 + 1e-9) + 1e-12 && ef <= rf * (1.0 + 1e-9) + 1e-12;
        worst2 = (worst2.0.max(ev), worst2.1.max(ef));
        reported = (reported.0.max(rv), reported.1.max(rf));
    }
    Ok((
        worst1 <= 1e-9 && ok2,
        format!(
            "1D max jump error {worst1:.1e}; 2D value/flux jump errors {:.2e}/{:.2e} within reported residuals {:.2e}/{:.2e}",
            worst2.0, worst2.1, reported.0, reported.1
        ),
    ))
}

fn self_convergence() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    type Build = fn(PiecewiseField) -> tfponet_core::Result<InterfaceProblem>;
    for (name, id, build) in [
        ("singular", ExampleId::Example1Singular, example1_singular as Build),
        ("contrast", ExampleId::Example1Contrast, example1_contrast as Build),
    ] {
        let f = InputSampler::new(id).map_err(err)?.sample(&mut sample_rng(5, 0)).map_err(err)?;
        let p = build(f).map_err(err)?;
        let t = Transform1d::from_problem(&p).map_err(err)?;
        let solve = |n: usize| assemble_and_solve(&p, Mesh1d::uniform_x(&t, n).unwrap());
        let fine = solve(2049).map_err(err)?;
        let xs: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).filter(|&x| x != 0.5).collect();
        let mut errs = Vec::new();
        for n in [33, 129, 513] {
            let s = solve(n).map_err(err)?;
            let mut e = 0.0f64;
            for &x in &xs {
                e = e.max((s.evaluate(x, None).map_err(err)? - fine.evaluate(x, None).map_err(err)?).abs());
            }
            errs.push(e);
        }
        ok &= errs.windows(2).all(|w| w[1] < w[0]);
        detail.push(format!("{name} {:.1e} > {:.1e} > {:.1e}", errs[0], errs[1], errs[2]));
    }
    let k: f64 = 2.0;
    let along = PiecewiseField::uniform(ScalarFn::custom(move |p| (k * p[0]).exp()));
    let p = InterfaceProblem {
        name: "manufactured".into(),
        domain: Domain::Rect { x1: (-1.0, 1.0), x2: (-1.0, 1.0) },
        interfaces: vec![],
        a: PiecewiseField::constant(1.0),
        b: PiecewiseField::constant(k * k),
        f: PiecewiseField::constant(0.0),
        g_d: vec![],
        g_n: vec![],
        bc: BoundaryData::Rect {
            x1_min: ScalarFn::Constant((-k).exp()),
            x1_max: ScalarFn::Constant(k.exp()),
            x2_min: along.clone(),
            x2_max: along,
        },
    }
    .validated()
    .map_err(err)?;
    let mut errs = Vec::new();
    for n in [8, 16, 32] {
        let s = assemble_and_solve_2d(&p, n, n, 3).map_err(err)?;
        let mut e = 0.0f64;
        for i in 0..=40 {
            for j in 0..=40 {
                let x = [-1.0 + 0.05 * i as f64, -1.0 + 0.05 * j as f64];
                e = e.max((s.evaluate(x, None).map_err(err)? - (k * x[0]).exp()).abs());
            }
        }
        errs.push(e);
    }
    ok &= errs.windows(2).all(|w| w[1] < w[0]);
    detail.push(format!("2D exp(2 x1) {:.1e} > {:.1e} > {:.1e}", errs[0], errs[1], errs[2]));
    Ok((ok, detail.join("; ")))
}

fn structural_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_ulps = 0.0f64;
    let mut bitwise = true;
    for _ in 0..200 {
        let branch = Mlp::he_uniform(&[7, 9, 5], &mut rng).map_err(err)?;
        let trunk = Mlp::he_uniform(&[1, 9, 5], &mut rng).map_err(err)?;
        let d = DeepOnet::new(branch, trunk, rng.random_range(-1.0..1.0)).map_err(err)?;
        let basis = vec![Mlp::he_uniform(&[1, 4, 1], &mut rng).map_err(err)?, Mlp::he_uniform(&[1, 4, 1], &mut rng).map_err(err)?];
        let mut t = Tfponet { deeponet: d.clone(), basis };
        let s: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = [rng.random_range(0.0..1.0)];
        let feats: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
        let out = t.forward(&s, &x, &feats).map_err(err)?;
        let dout = d.forward(&s, &x).map_err(err)?;
        let mut sum = 0.0;
        for (net, b) in t.basis.iter().zip(&feats) {
            sum += net.forward(&[*b]).map_err(err)?[0];
        }
        bitwise &= out.to_bits() == (dout + sum).to_bits();
        let ulp = f64::EPSILON * out.abs().max(f64::MIN_POSITIVE);
        worst_ulps = worst_ulps.max(((out - dout) - sum).abs() / ulp);
        for net in &mut t.basis {
            net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        }
        bitwise &= t.forward(&s, &x, &feats).map_err(err)?.to_bits() == dout.to_bits();
    }
    Ok((
        bitwise && worst_ulps <= 1.0,
        format!("output == deeponet + sum of basis outputs bitwise, zeroed basis nets reproduce deeponet bitwise; literal difference within {worst_ulps:.2} ulp"),
    ))
}

fn ordering(examples: &[ExampleId], wanted: &[&str]) -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for &ex in examples {
        let dir = tempfile::tempdir().map_err(err)?;
        let cfg = ExperimentConfig::preset(ex, Scale::Desk, dir.path().to_path_buf());
        let report = run_experiment(&cfg).map_err(err)?;
        let by_res: BTreeMap<usize, Vec<_>> = report.rows.iter().fold(BTreeMap::new(), |mut m, r| {
            m.entry(r.resolution).or_insert_with(Vec::new).push(r);
            m
        });
        for (res, rows) in &by_res {
            if let [a, b] = rows[..] {
                let (t, base) = if a.model == ModelFamily::Tfponet { (a, b) } else { (b, a) };
                lines.push(format!("{ex} r={res} mse ratio tfponet/{} = {:.3}", base.model, t.test_mse / base.test_mse));
            }
        }
        for (what, pass) in ordering_checks(ex, &report.rows) {
            if wanted.iter().any(|w| what.contains(w)) {
                ok &= pass;
                lines.push(format!("{} {what}", if pass { "ok" } else { "NOT" }));
            }
        }
    }
    Ok((ok, lines.join("; ")))
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.json" {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn cli_round(dir: &Path) -> Result<(), String> {
    let exe = env!("CARGO_BIN_EXE_tfponet");
    let d = |n: &str| dir.join(n).display().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec!["gen", "--example", "example2", "--samples", "4", "--resolution", "16", "--seed", "9", "--out", &d("train.tfd"), "--csv", &d("train.csv")],
        vec!["gen", "--example", "example2", "--samples", "2", "--resolution", "21", "--test", "--seed", "9", "--out", &d("test.tfd")],
        vec!["train", "--data", &d("train.tfd"), "--model", "tfponet", "--seed", "4", "--steps", "30", "--out", &d("m.tfc"), "--history", &d("h.csv")],
        vec!["eval", "--model", &d("m.tfc"), "--data", &d("test.tfd"), "--out", &d("pred.csv"), "--json", &d("metrics.json")],
        vec![
            "run", "--example", "example2", "--desk", "--resolutions", "8,16", "--m-train", "4", "--m-test", "2",
            "--test-resolution", "21", "--steps", "30", "--out", &d("run"),
        ],
        vec!["export", "--results", &d("run"), "--out", &d("plots")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in runs {
        let o = Command::new(exe).args(&args).output().map_err(err)?;
        if !o.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    cli_round(a.path())?;
    cli_round(b.path())?;
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    Ok((
        fa.len() == fb.len() && differing.is_empty() && fa.len() > 10,
        format!("{} files from gen/train/eval/run/export compared byte for byte (timing.json excluded), differing: {differing:?}", fa.len()),
    ))
}

#[test]
fn acceptance_suite() {
    let only = std::env::var("TFPONET_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut s = Suite { failed: Vec::new(), only };
    report("");
    let secs = Duration::from_secs;
    s.run(1, "special functions", secs(1), special_functions);
    s.run(2, "autodiff", secs(10), autodiff);
    s.run(3, "tfpm 1d exactness", secs(1), tfpm1d_exactness);
    s.run(4, "tfpm jump enforcement", secs(30), jump_enforcement);
    s.run(5, "tfpm self-convergence", secs(120), self_convergence);
    s.run(6, "structural identity", secs(1), structural_identity);
    s.run(7, "example 1 ordering", secs(15 * 60), || {
        ordering(&[ExampleId::Example1Singular, ExampleId::Example1Contrast], &["mse"])
    });
    s.run(8, "example 2 ordering", secs(15 * 60), || ordering(&[ExampleId::Example2], &["mse", "jump"]));
    s.run(9, "example 3 ordering", secs(45 * 60), || ordering(&[ExampleId::Example3], &["mse", "strip"]));
    s.run(10, "determinism", secs(5 * 60), determinism);
    assert!(s.failed.is_empty(), "failed criteria: {:?}", s.failed);
}
