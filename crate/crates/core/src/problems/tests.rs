use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{finite_diff_check, Tape};
use crate::tensor::Tensor;

fn random_image(seed: u64, h: usize, w: usize) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(vec![h, w], (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn phantom_is_deterministic_and_clamped() {
    let a = generate_phantom::<f64>(0, 16, 3..=8).unwrap();
    let b = generate_phantom::<f64>(0, 16, 3..=8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, generate_phantom::<f64>(1, 16, 3..=8).unwrap());
    for seed in 0..20 {
        let p = generate_phantom::<f64>(seed, 16, 3..=8).unwrap();
        assert!(p.min() >= 0.0 && p.max() <= 1.0);
        assert!(p.max() > 0.0);
    }
}

#[test]
fn empty_scene_is_black() {
    let p = generate_phantom::<f64>(3, 12, 0..=0).unwrap();
    assert_eq!(p.max_abs(), 0.0);
}

#[test]
#[allow(clippy::reversed_empty_ranges)]
fn phantom_rejects_bad_arguments() {
    assert!(generate_phantom::<f64>(0, 7, 1..=2).is_err());
    assert!(generate_phantom::<f64>(0, 8, 3..=2).is_err());
}

#[test]
fn zero_noise_is_identity() {
    let p = generate_phantom::<f64>(4, 16, 3..=8).unwrap();
    assert_eq!(add_noise(&p, 0.0, 9).unwrap(), p);
    assert!(add_noise(&p, -0.1, 9).is_err());
}

#[test]
fn noise_is_reproducible_and_has_the_requested_level() {
    let p = generate_phantom::<f64>(5, 64, 3..=8).unwrap();
    assert_eq!(p.len(), 4096);
    assert_eq!(add_noise(&p, 0.1, 7).unwrap(), add_noise(&p, 0.1, 7).unwrap());
    let mut total = 0.0;
    for seed in 0..100 {
        let noisy = add_noise(&p, 0.1, seed).unwrap();
        total += noisy.sub(&p).unwrap().norm() / p.norm();
    }
    let ratio = total / 100.0;
    assert!((ratio - 0.1).abs() <= 0.005, "ratio {ratio}");
}

#[test]
fn gaussian_kernel_properties() {
    let k = gaussian_kernel::<f64>(7, 3.0).unwrap();
    assert!((k.sum() - 1.0).abs() < 1e-12);
    let s = k.as_slice();
    let at = |i: usize, j: usize| s[i * 7 + j];
    for i in 0..7 {
        for j in 0..7 {
            assert_eq!(at(i, j), at(j, i));
            assert_eq!(at(i, j), at(6 - i, j));
            assert!(at(i, j) > 0.0);
            assert!(at(i, j) <= at(3, 3));
        }
    }
    assert!(gaussian_kernel::<f64>(6, 3.0).is_err());
}

#[test]
fn tv_of_constant_image_vanishes() {
    let x = Tensor::full(vec![6, 5], 0.37f64);
    assert!(tv_value(&x, 1e-3).unwrap().abs() < 1e-15);
    assert!(tv_gradient(&x, 1e-3).unwrap().max_abs() < 1e-15);
}

#[test]
fn tv_gradient_matches_finite_differences() {
    let x = random_image(1, 8, 8);
    let eps = 1e-3;
    let report = finite_diff_check(|t, x| tv_value_on(t, x, eps), &x, 1e-4).unwrap();
    assert!(report.passes(1e-4), "{report:?}");
    // Eager and tape versions agree.
    let tape = Tape::new();
    let v = tape.leaf(x.clone());
    let val = tv_value_on(&tape, v, eps).unwrap();
    let g = tv_gradient_on(&tape, v, eps).unwrap();
    assert!((tape.value(val).item().unwrap() - tv_value(&x, eps).unwrap()).abs() < 1e-12);
    let eager = tv_gradient(&x, eps).unwrap();
    assert!(tape.value(g).sub(&eager).unwrap().max_abs() < 1e-12);
    let rev = tape.gradient(val, &[v]).unwrap().remove(0);
    assert!(rev.sub(&eager).unwrap().max_abs() < 1e-10);
}

#[test]
fn tv_approaches_unsmoothed_tv() {
    let x = random_image(2, 10, 10);
    let mut d = vec![0.0; 200];
    crate::kernels::diff2d(10, 10, x.as_slice(), &mut d);
    let tv0: f64 = (0..100).map(|p| (d[p] * d[p] + d[100 + p] * d[100 + p]).sqrt()).sum();
    for eps in [1e-1, 1e-2, 1e-3] {
        let gap = (tv_value(&x, eps).unwrap() - tv0).abs();
        assert!(gap <= 100.0 * eps, "eps {eps}: gap {gap}");
    }
}

#[test]
fn tv_rejects_bad_input() {
    assert!(tv_value(&Tensor::vector(vec![1.0, 2.0]), 1e-3).is_err());
    assert!(tv_value(&Tensor::<f64>::zeros(vec![3, 3]), 0.0).is_err());
}

fn objectives(y: &Tensor<f64>, lambda: f64) -> Vec<TvObjective<f64>> {
    vec![
        TvObjective::new(ForwardOperator::Identity, y.clone(), lambda, 1e-3).unwrap(),
        TvObjective::new(
            ForwardOperator::Blur(gaussian_kernel(7, 3.0).unwrap()),
            y.clone(),
            lambda,
            1e-3,
        )
        .unwrap(),
    ]
}

#[test]
fn data_term_minimum() {
    let y = random_image(3, 8, 8);
    let f = &objectives(&y, 0.0)[0];
    assert_eq!(f.value(&y).unwrap(), 0.0);
    assert_eq!(f.gradient(&y).unwrap().max_abs(), 0.0);
}

#[test]
fn adjoints_pass_the_inner_product_test() {
    let mut asym = vec![0.0; 15];
    asym[1] = 1.0;
    asym[7] = 0.5;
    asym[13] = -0.25;
    let ops = [
        ForwardOperator::Identity,
        ForwardOperator::Blur(gaussian_kernel(7, 3.0).unwrap()),
        ForwardOperator::Blur(Tensor::from_vec(vec![3, 5], asym).unwrap()),
    ];
    for (i, op) in ops.iter().enumerate() {
        let x = random_image(10 + i as u64, 9, 11).map(|v| v - 0.5);
        let z = random_image(20 + i as u64, 9, 11).map(|v| v - 0.5);
        let lhs = op.apply(&x).unwrap().dot(&z).unwrap();
        let rhs = x.dot(&op.adjoint(&z).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * x.norm() * z.norm());
        // Tape versions agree with the eager ones.
        let tape = Tape::new();
        let zv = tape.leaf(z.clone());
        let at = op.adjoint_on(&tape, zv).unwrap();
        assert!(tape.value(at).sub(&op.adjoint(&z).unwrap()).unwrap().max_abs() < 1e-14);
    }
}

#[test]
fn objective_gradients_match_finite_differences() {
    let y = random_image(4, 8, 8);
    let x = random_image(5, 8, 8);
    for f in objectives(&y, 0.15) {
        let report = finite_diff_check(|t, v| f.value_on(t, v), &x, 1e-4).unwrap();
        assert!(report.passes(1e-4), "{report:?}");
        let eager = f.gradient(&x).unwrap();
        let tape = Tape::new();
        let v = tape.leaf(x.clone());
        let g = f.gradient_on(&tape, v).unwrap();
        assert!(tape.value(g).sub(&eager).unwrap().max_abs() < 1e-11);
        assert!((f.value(&x).unwrap() - Objective::value(&f, &x).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn objective_rejects_shape_mismatch() {
    let f = &objectives(&random_image(6, 8, 8), 0.15)[0];
    assert!(f.value(&Tensor::zeros(vec![8, 7])).is_err());
    assert!(f.gradient(&Tensor::zeros(vec![64])).is_err());
}

#[test]
fn least_squares_basics() {
    let f = LeastSquares::<f64>::half_norm_squared(3);
    let x = Tensor::vector(vec![1.0, -2.0, 2.0]);
    assert_eq!(f.value(&x).unwrap(), 4.5);
    assert_eq!(f.gradient(&x).unwrap(), x);
    assert!((f.lipschitz_bound() - 1.0).abs() < 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let f = LeastSquares::<f64>::conditioned(16, 1e3, &mut rng).unwrap();
    assert!((f.lipschitz_bound() - 1.0).abs() < 1e-6);
    let a = f.matrix();
    // Rows of Q are orthonormal, so AAᵀ is diagonal with the spectrum.
    let row = |i: usize| Tensor::vector(a.as_slice()[i * 16..(i + 1) * 16].to_vec());
    assert!(row(0).dot(&row(5)).unwrap().abs() < 1e-12);
    assert!((row(15).dot(&row(15)).unwrap() - 1e-3).abs() < 1e-12);

    let g = LeastSquares::<f64>::random(6, 4, &mut rng).unwrap();
    let x = Tensor::vector(vec![0.1, 0.2, -0.3, 0.4]);
    let report = finite_diff_check(|t, v| g.value_on(t, v), &x, 1e-4).unwrap();
    assert!(report.passes(1e-6));
}

#[test]
fn reference_minimum_of_pure_data_term_is_zero() {
    let y = random_image(7, 8, 8);
    let f = &objectives(&y, 0.0)[0];
    let x0 = Tensor::zeros(vec![8, 8]);
    let fs = reference_minimum(f, &x0, 10_000).unwrap();
    assert!(fs.abs() <= 1e-8, "{fs}");
    assert!(reference_minimum(f, &x0, 100).is_err());
}

#[test]
fn reference_minimum_is_monotone_and_self_consistent() {
    let cfg = ProblemConfig::default();
    let s = generate_sample::<f64>(&cfg, 0, 0).unwrap();
    let f1 = reference_minimum(&s.objective, &s.x0, 20_000).unwrap();
    let f2 = reference_minimum(&s.objective, &s.x0, 40_000).unwrap();
    assert!(f2 <= f1);
    assert!((f1 - f2).abs() <= 1e-6 * f2.abs(), "{f1} vs {f2}");
    assert!(s.objective.value(&s.x0).unwrap() >= s.f_star);

    let cfg = ProblemConfig::deconvolution();
    let s = generate_sample::<f64>(&cfg, 0, 0).unwrap();
    let f1 = reference_minimum(&s.objective, &s.x0, 20_000).unwrap();
    let f2 = reference_minimum(&s.objective, &s.x0, 40_000).unwrap();
    assert!(f2 <= f1);
    assert!((f1 - f2).abs() <= 1e-6 * f2.abs(), "{f1} vs {f2}");
}

#[test]
fn dataset_round_trips_through_disk() {
    let cfg = ProblemConfig {
        size: 8,
        reference_budget: 10_000,
        ..ProblemConfig::default()
    };
    let samples = generate_dataset::<f64>(&cfg, 42, 0, 3).unwrap();
    let again = generate_dataset::<f64>(&cfg, 42, 0, 3).unwrap();
    for (a, b) in samples.iter().zip(&again) {
        assert_eq!(a.x0, b.x0);
        assert_eq!(a.f_star, b.f_star);
    }
    let dir = tempfile::tempdir().unwrap();
    let files = save_dataset(dir.path(), &cfg, 42, &samples).unwrap();
    assert_eq!(files.len(), 7);
    let (cfg2, seed, loaded) = load_dataset::<f64>(dir.path()).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(seed, 42);
    for (a, b) in samples.iter().zip(&loaded) {
        assert_eq!(a.x0, b.x0);
        assert_eq!(a.clean, b.clean);
        assert_eq!(a.f_star, b.f_star);
        assert_eq!(a.objective, b.objective);
    }
}

#[test]
fn image_text_format() {
    let img = Tensor::from_vec(vec![2, 3], vec![0.1, 1.0, -2.5, 1e-20, 0.0, 3.0]).unwrap();
    let text = format_image(&img).unwrap();
    assert_eq!(text, "2 3\n0.1 1.0 -2.5\n1e-20 0.0 3.0\n");
    assert_eq!(parse_image::<f64>(&text).unwrap(), img);
    assert!(parse_image::<f64>("2 2\n1 2 3\n").is_err());
}
