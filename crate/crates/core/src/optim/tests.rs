use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mirror::{Icnn, IcnnConfig, MirrorMap};
use crate::problems::{LeastSquares, Objective};
use crate::tensor::Tensor;

fn v(data: &[f64]) -> Tensor<f64> {
    Tensor::vector(data.to_vec())
}

fn identity_pair(d: usize) -> MirrorMap<f64> {
    let net = Icnn::quadratic(IcnnConfig {
        width: 4,
        ..IcnnConfig::new(d)
    })
    .unwrap();
    MirrorMap::Learned {
        forward: net.clone(),
        inverse: net,
    }
}

fn random_pair(seed: u64, d: usize) -> MirrorMap<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = IcnnConfig {
        width: 4,
        ..IcnnConfig::new(d)
    };
    MirrorMap::Learned {
        forward: Icnn::new(cfg.clone(), &mut rng).unwrap(),
        inverse: Icnn::new(cfg, &mut rng).unwrap(),
    }
}

#[test]
fn gd_step_examples() {
    let f = LeastSquares::half_norm_squared(1);
    assert_eq!(gd_step(&f, &v(&[2.0]), 1.0).unwrap().as_slice(), &[0.0]);
    assert_eq!(gd_step(&f, &v(&[2.0]), 0.0).unwrap().as_slice(), &[2.0]);
}

#[test]
fn gd_descends_below_inverse_lipschitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let f = LeastSquares::<f64>::random(8, 5, &mut rng).unwrap();
        let x = Tensor::vector((0..5).map(|_| rng.random_range(-2.0..2.0)).collect());
        let t = 0.99 / f.lipschitz_bound();
        let next = gd_step(&f, &x, t).unwrap();
        assert!(f.value(&next).unwrap() < f.value(&x).unwrap());
    }
}

#[test]
fn nesterov_first_step_is_gd() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = LeastSquares::<f64>::random(6, 4, &mut rng).unwrap();
    let x0 = v(&[1.0, -1.0, 0.5, 2.0]);
    let s = StepSchedule::constant(0.3).unwrap();
    let trace = nesterov_run(&f, &x0, &s, 1, 0.0).unwrap();
    let gd = gd_step(&f, &x0, 0.3).unwrap();
    assert_eq!(trace.len(), 2);
    assert_eq!(trace.records[1].f, f.value(&gd).unwrap());
}

#[test]
fn nesterov_rate_on_strongly_convex_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = LeastSquares::<f64>::conditioned(64, 1e3, &mut rng).unwrap();
    let x0 = Tensor::zeros(vec![64]);
    let s = StepSchedule::constant(1.0 / f.lipschitz_bound()).unwrap();
    let trace = nesterov_run(&f, &x0, &s, 1000, 0.0).unwrap();
    assert_eq!(trace.len(), 1001);
    let slope = loglog_slope(&trace, 10, 1000).unwrap();
    assert!(slope <= -1.5, "slope {slope}");
    assert!(trace.records.iter().all(|r| r.subopt >= -1e-9));
}

#[test]
fn md_with_quadratic_potential_is_gd() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = MirrorMap::Quadratic;
    for _ in 0..1000 {
        let f = LeastSquares::<f64>::random(5, 3, &mut rng).unwrap();
        let x = Tensor::vector((0..3).map(|_| rng.random_range(-3.0..3.0)).collect());
        let t = rng.random_range(0.0..1.0);
        let md = md_step(&f, &q, &x, t).unwrap();
        let gd = gd_step(&f, &x, t).unwrap();
        assert!(md.sub(&gd).unwrap().max_abs() <= 1e-12);
    }
}

#[test]
fn md_with_entropy_is_multiplicative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = LeastSquares::<f64>::random(4, 4, &mut rng).unwrap();
    let e = MirrorMap::neg_entropy();
    let x = v(&[0.2, 0.7, 1.3, 0.05]);
    let t = 0.1;
    let next = md_step(&f, &e, &x, t).unwrap();
    let g = f.gradient(&x).unwrap();
    for i in 0..4 {
        let expected = x.as_slice()[i] * (-t * g.as_slice()[i]).exp();
        assert!((next.as_slice()[i] - expected).abs() <= 1e-14 * expected.max(1.0));
    }
    for m in [MirrorMap::Quadratic, e] {
        let same = md_step(&f, &m, &x, 0.0).unwrap();
        assert!(same.sub(&x).unwrap().max_abs() <= 1e-10);
    }
}

#[test]
fn lmd_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = LeastSquares::<f64>::random(5, 3, &mut rng).unwrap();
    let x = v(&[0.4, -0.2, 1.0]);
    let (step, fb) = lmd_step(&f, &identity_pair(3), &x, 0.2).unwrap();
    assert!(step.sub(&gd_step(&f, &x, 0.2).unwrap()).unwrap().max_abs() < 1e-14);
    assert!(fb < 1e-14);

    let pair = random_pair(7, 3);
    let (same, fb) = lmd_step(&f, &pair, &x, 0.0).unwrap();
    assert!(fb > 0.0);
    assert!((same.sub(&x).unwrap().norm() - fb).abs() < 1e-14);
}

#[test]
fn amd_lambda_values() {
    assert_eq!(amd_lambda(3.0, 1), 0.75);
    assert_eq!(amd_lambda(3.0, 0), 1.0);
    let mut prev = 1.0;
    for k in 1..100 {
        let l = amd_lambda(3.0, k);
        assert!(l < prev && l > 0.0);
        prev = l;
    }
}

#[test]
fn amd_first_average_is_the_dual_start() {
    let f = LeastSquares::<f64>::half_norm_squared(2);
    let q = MirrorMap::Quadratic;
    let mut s = AmdState::new(&q, &v(&[1.0, 2.0]), &AmdParams::default()).unwrap();
    s.z_tilde = v(&[5.0, -1.0]);
    let next = amd_iterate(&f, &q, &s, 0.5).unwrap();
    assert_eq!(next.x.as_slice(), &[5.0, -1.0]);
    assert_eq!(next.k, 1);
}

/// Independent scalar version of the accelerated recursion for
/// `f(x) = ½ a (x − b)²` with the Euclidean potential.
fn hand_unrolled(a: f64, b: f64, x0: f64, t: f64, iters: usize) -> Vec<f64> {
    let r = 3.0;
    let (mut xt, mut z) = (x0, x0);
    let mut out = vec![0.5 * a * (x0 - b).powi(2)];
    for k in 0..iters {
        let lam = r / (r + k as f64);
        let x = lam * z + (1.0 - lam) * xt;
        let g = a * (x - b);
        z -= k as f64 * t / r * g;
        xt = x - t * g;
        out.push(0.5 * a * (x - b).powi(2));
    }
    out
}

#[test]
fn amd_matches_hand_unrolled_recursion() {
    let (a, b, x0, t): (f64, f64, f64, f64) = (2.5, 0.7, -1.3, 0.3);
    let f = LeastSquares::new(
        Tensor::from_vec(vec![1, 1], vec![a.sqrt()]).unwrap(),
        v(&[a.sqrt() * b]),
    )
    .unwrap();
    let s = StepSchedule::constant(t).unwrap();
    let expected = hand_unrolled(a, b, x0, t, 100);
    for (method, map) in [
        (Method::Amd, MirrorMap::Quadratic),
        (Method::Lamd, identity_pair(1)),
    ] {
        let cfg = RunConfig::new(method, &s, 100);
        let trace = run(&f, &map, &v(&[x0]), 0.0, &cfg, 0).unwrap();
        for (r, e) in trace.records.iter().zip(&expected) {
            assert!((r.f - e).abs() <= 1e-12, "{method} k={}: {} vs {e}", r.k, r.f);
        }
    }
}

#[test]
fn dual_init_variant() {
    let e = MirrorMap::neg_entropy();
    let x0 = v(&[0.5, 2.0]);
    let params = AmdParams {
        dual_init: true,
        ..AmdParams::default()
    };
    let s = AmdState::new(&e, &x0, &params).unwrap();
    assert_eq!(s.z_tilde, e.inverse_mirror_map(&x0).unwrap());
    assert!(AmdState::new(&e, &x0, &AmdParams { r: 2.0, ..params }).is_err());
}

#[test]
fn schedule_examples() {
    let inv: Vec<f64> = (1..=10).map(|k| 1.0 / k as f64).collect();
    let s = StepSchedule::new(inv, ExtensionRule::Reciprocal).unwrap();
    assert!((s.reciprocal_constant() - 1.0).abs() < 1e-15);
    for k in 11..40 {
        assert!((s.step(k).unwrap() - 1.0 / k as f64).abs() < 1e-15);
    }

    let s = StepSchedule::<f64>::new(vec![0.4, 0.2], ExtensionRule::Reciprocal).unwrap();
    assert!((s.reciprocal_constant() - 0.4).abs() < 1e-15);
    assert!((s.step(3).unwrap() - 0.4 / 3.0).abs() < 1e-15);
    assert!((s.step(3).unwrap() - 0.13333).abs() < 1e-5);
    assert_eq!(s.step(1).unwrap(), 0.4);
    assert!(s.step(0).is_err());

    let s = StepSchedule::<f64>::new(vec![0.3, 0.1, 0.2], ExtensionRule::Final).unwrap();
    for k in 4..10 {
        assert_eq!(extend_schedule(&s, k).unwrap(), 0.2);
    }
    assert_eq!(s.with_rule(ExtensionRule::Max).step(7).unwrap(), 0.3);
    assert_eq!(s.with_rule(ExtensionRule::Min).step(7).unwrap(), 0.1);
    assert!((s.with_rule(ExtensionRule::Mean).step(7).unwrap() - 0.2).abs() < 1e-15);
    let scaled = s.with_rule(ExtensionRule::Reciprocal).with_c_scale(2.0);
    assert!((scaled.reciprocal_constant() - 2.0 * (0.3 + 0.2 + 0.6) / 3.0).abs() < 1e-15);

    assert!(StepSchedule::new(vec![0.1, 0.0], ExtensionRule::Max).is_err());
    assert!(StepSchedule::<f64>::new(vec![], ExtensionRule::Max).is_err());
    assert!(StepSchedule::new(vec![f64::NAN], ExtensionRule::Max).is_err());
}

#[test]
fn set_steps_recomputes_c() {
    let mut s = StepSchedule::new(vec![1.0], ExtensionRule::Reciprocal).unwrap();
    assert_eq!(s.reciprocal_constant(), 1.0);
    s.set_steps(vec![1.0, 1.0]).unwrap();
    assert_eq!(s.reciprocal_constant(), 1.5);
}

#[test]
fn rule_names_round_trip() {
    for r in ExtensionRule::ALL {
        assert_eq!(r.name().parse::<ExtensionRule>().unwrap(), r);
    }
    assert!("sideways".parse::<ExtensionRule>().is_err());
    assert_eq!("lamd".parse::<Method>().unwrap(), Method::Lamd);
}

#[test]
fn divergent_runs_are_truncated_and_flagged() {
    let f = LeastSquares::<f64>::half_norm_squared(2);
    let s = StepSchedule::constant(5.0).unwrap();
    let cfg = RunConfig::new(Method::Gd, &s, 100);
    let x0 = v(&[1.0, 1.0]);
    let a = run(&f, &MirrorMap::Quadratic, &x0, 0.0, &cfg, 3).unwrap();
    let b = run(&f, &MirrorMap::Quadratic, &x0, 0.0, &cfg, 3).unwrap();
    assert!(a.divergent);
    assert!(a.len() < 101);
    assert_eq!(a, b);
    let csv = a.to_csv();
    assert!(csv.starts_with("method,sample,k,step,f,subopt,fb_error,flag\n"));
    assert!(csv.trim_end().ends_with(",divergent"));
    assert_eq!(csv.lines().filter(|l| l.ends_with(",divergent")).count(), 1);
}

#[test]
fn csv_rows_are_well_formed() {
    let f = LeastSquares::<f64>::half_norm_squared(2);
    let s = StepSchedule::constant(0.5).unwrap();
    let cfg = RunConfig::new(Method::Lmd, &s, 3);
    let t = run(&f, &identity_pair(2), &v(&[1.0, 0.0]), 0.0, &cfg, 7).unwrap();
    let csv = t.to_csv();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[1], "lmd,7,0,0.0,0.5,0.5,0.0,ok");
    assert_eq!(lines[2], "lmd,7,1,0.5,0.125,0.125,0.0,ok");
    for l in &lines[1..] {
        assert_eq!(l.split(',').count(), 8);
    }
    let gd = run(&f, &MirrorMap::Quadratic, &v(&[1.0, 0.0]), 0.0, &RunConfig::new(Method::Gd, &s, 1), 0)
        .unwrap();
    assert_eq!(gd.to_csv().lines().nth(1).unwrap(), "gd,0,0,0.0,0.5,0.5,,ok");
}

#[test]
fn slope_fit() {
    let mut t = IterateTrace::new("x", 0, 0.0);
    for k in 0..=100 {
        let f = if k == 0 { 1.0 } else { 3.0 / (k as f64).powi(2) };
        t.push(0.1, f, None);
    }
    assert!((loglog_slope(&t, 10, 100).unwrap() + 2.0).abs() < 1e-12);
    assert!(loglog_slope(&t, 200, 300).is_none());
}

#[test]
fn zero_iterations_rejected() {
    let f = LeastSquares::<f64>::half_norm_squared(1);
    let s = StepSchedule::constant(0.5).unwrap();
    let cfg = RunConfig::new(Method::Gd, &s, 0);
    assert!(run(&f, &MirrorMap::Quadratic, &v(&[1.0]), 0.0, &cfg, 0).is_err());
}
