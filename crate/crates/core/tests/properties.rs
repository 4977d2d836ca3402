use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tfponet_core::io::fmt_f64;
use tfponet_core::nn::Mlp;
use tfponet_core::operatornets::{Architecture, CompositeModel, ModelFamily};
use tfponet_core::problem::{example2, ExampleId, PiecewiseField, ScalarFn, Transform1d};
use tfponet_core::specialfn::{airy, bessel_i, bessel_i_deriv};
use tfponet_core::tfpm1d::{assemble_and_solve, Mesh1d};
use tfponet_core::training::{sample_grf, sensor_locations, GrfSpec};
use tfponet_core::Side;

fn small_net(seed: u64, sizes: &[usize]) -> Mlp {
    Mlp::he_uniform(sizes, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn airy_scaled_matches_unscaled(x in 0.1f64..30.0) {
        let u = airy(x, false).unwrap();
        let s = airy(x, true).unwrap();
        let z = 2.0 / 3.0 * x.powf(1.5);
        prop_assert!((s.ai * (-z).exp() - u.ai).abs() <= 1e-12 * u.ai.abs());
        prop_assert!((s.bi * z.exp() - u.bi).abs() <= 1e-12 * u.bi.abs());
    }

    #[test]
    fn airy_derivative_matches_difference_quotient(x in -5.0f64..5.0) {
        let h = 1e-6;
        let d = (airy(x + h, false).unwrap().ai - airy(x - h, false).unwrap().ai) / (2.0 * h);
        let a = airy(x, false).unwrap().ai_prime;
        prop_assert!((d - a).abs() <= 1e-6 * a.abs().max(1e-3));
    }

    #[test]
    fn bessel_derivative_identity(n in 1u32..20, x in 1e-3f64..60.0) {
        let d = bessel_i_deriv(n, x, true).unwrap();
        let want = 0.5 * (bessel_i(n - 1, x, true).unwrap().value + bessel_i(n + 1, x, true).unwrap().value);
        prop_assert!((d - want).abs() <= 1e-10 * want.abs());
    }

    #[test]
    fn bessel_positive(n in 0u32..=20, x in 1e-3f64..1e6) {
        let v = bessel_i(n, x, true).unwrap().value;
        prop_assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn floats_survive_csv_formatting(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn transform_round_trip(x in 0.0f64..1.0) {
        let p = example2(PiecewiseField::constant(0.0)).unwrap();
        let t = Transform1d::from_problem(&p).unwrap();
        let back = t.x(t.y(x).unwrap()).unwrap();
        prop_assert!((back - x).abs() <= 1e-12);
    }

    #[test]
    fn network_gradients_match_differences(seed in 0u64..10_000, w in 2usize..10, xi in -1.0f64..1.0) {
        let net = small_net(seed, &[2, w, w, 3]);
        let x = [xi, 0.3 - xi];
        let up = [0.5, -1.0, 2.0];
        let (gp, gx) = net.backward(&x, &up).unwrap();
        let obj = |n: &Mlp, x: &[f64]| n.forward(x).unwrap().iter().zip(&up).map(|(o, u)| o * u).sum::<f64>();
        let h = 1e-6;
        let scale = gp.iter().chain(&gx).fold(1e-8f64, |m, v| m.max(v.abs()));
        for k in [0, gp.len() / 2, gp.len() - 1] {
            let mut a = net.clone();
            a.params_mut()[k] += h;
            let mut b = net.clone();
            b.params_mut()[k] -= h;
            let fd = (obj(&a, &x) - obj(&b, &x)) / (2.0 * h);
            prop_assert!((fd - gp[k]).abs() <= 1e-6 * scale);
        }
        for k in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let fd = (obj(&net, &xp) - obj(&net, &xm)) / (2.0 * h);
            prop_assert!((fd - gx[k]).abs() <= 1e-6 * scale);
        }
    }

    /// The ground truth is affine in the source: u(f1 + f2) = u(f1) + u(f2) - u(0).
    #[test]
    fn tfpm_is_affine_in_the_source(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, k in 1.0f64..6.0) {
        let solve = |f: PiecewiseField| {
            let p = example2(f).unwrap();
            let t = Transform1d::from_problem(&p).unwrap();
            assemble_and_solve(&p, Mesh1d::uniform_x(&t, 33).unwrap()).unwrap()
        };
        let f1 = move |x: &[f64]| c1 * (k * x[0]).sin();
        let f2 = move |x: &[f64]| c2 * x[0] * x[0];
        let s1 = solve(PiecewiseField::uniform(ScalarFn::custom(f1)));
        let s2 = solve(PiecewiseField::uniform(ScalarFn::custom(f2)));
        let s0 = solve(PiecewiseField::constant(0.0));
        let s12 = solve(PiecewiseField::uniform(ScalarFn::custom(move |x| f1(x) + f2(x))));
        for x in [0.1, 0.3, 0.77, 0.95] {
            let lhs = s12.evaluate(x, None).unwrap();
            let rhs = s1.evaluate(x, None).unwrap() + s2.evaluate(x, None).unwrap() - s0.evaluate(x, None).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}

#[test]
fn grf_sample_covariance_matches_kernel() {
    let spec = GrfSpec::uniform(0.0, 1.0, 11, 0.2, 1.0);
    let n = 20_000;
    let samples = sample_grf(&spec, n, 123).unwrap();
    for (i, j) in [(0, 0), (0, 1), (3, 5), (2, 10), (5, 5)] {
        let d = spec.grid[i] - spec.grid[j];
        let want = (-0.5 * d * d / 0.04f64).exp();
        let got = samples.iter().map(|s| s[i] * s[j]).sum::<f64>() / n as f64;
        // Monte Carlo standard error is about sqrt(2 / n) ~ 0.01
        assert!((got - want).abs() < 0.05, "cov({i},{j}) = {got}, kernel {want}");
    }
    let mean = samples.iter().map(|s| s[4]).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.04, "{mean}");
}

#[test]
fn sensor_permutation_with_branch_columns_is_invisible() {
    let ex = ExampleId::Example2;
    let s = sensor_locations(ex).len();
    let model = CompositeModel::new(ModelFamily::IoNet, ex, Architecture::one_d(s), 5).unwrap();
    let sensors: Vec<f64> = (0..s).map(|i| (i as f64 * 0.37).sin()).collect();
    let perm: Vec<usize> = (0..s).rev().collect();
    let mut permuted = model.clone();
    for sub in &mut permuted.subs {
        let d = match sub {
            tfponet_core::operatornets::SubModel::DeepOnet(d) => d,
            tfponet_core::operatornets::SubModel::Tfponet(t) => &mut t.deeponet,
        };
        let width = d.branch.sizes()[1];
        let p = d.branch.params_mut();
        let orig = p.to_vec();
        for r in 0..width {
            for (c, &pc) in perm.iter().enumerate() {
                p[r * s + c] = orig[r * s + pc];
            }
        }
    }
    let psensors: Vec<f64> = perm.iter().map(|&i| sensors[i]).collect();
    for x in [0.1, 0.45, 0.8] {
        let a = model.predict(&sensors, &[x], None).unwrap();
        let b = permuted.predict(&psensors, &[x], None).unwrap();
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} {b}");
    }
}

#[test]
fn analytic_flux_matches_difference_quotient() {
    for family in [ModelFamily::Tfponet, ModelFamily::IoNet, ModelFamily::DeepOnet] {
        for ex in [ExampleId::Example2, ExampleId::Example1Contrast] {
            let s = sensor_locations(ex).len();
            let model = CompositeModel::new(family, ex, Architecture::one_d(s), 9).unwrap();
            let sensors: Vec<f64> = (0..s).map(|i| (i as f64 * 0.21).cos()).collect();
            for x in [0.13, 0.31, 0.62, 0.9] {
                let side = if x < 0.5 { Side::Left } else { Side::Right };
                let sub = model.sub_index(&[x], Some(side)).unwrap();
                let (_, d) = model.value_and_derivative(sub, &sensors, &[x], Some(side)).unwrap();
                let h = 1e-6;
                let up = model.predict_with(sub, &sensors, &[x + h], Some(side)).unwrap();
                let dn = model.predict_with(sub, &sensors, &[x - h], Some(side)).unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{family} {ex} x={x}: {fd} vs {d}");
            }
        }
    }
}
