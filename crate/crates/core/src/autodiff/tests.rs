use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    t(shape, &(0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>())
}

/// Random magnitudes in [0.2, 2] with random signs; keeps clear of kinks at 0.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let m = rng.random_range(0.2..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    t(shape, &data)
}

#[test]
fn add_is_componentwise() {
    let out = forward_op(&OpKind::Add, &[&t(&[2], &[1.0, 2.0]), &t(&[2], &[3.0, 4.0])]).unwrap();
    assert_eq!(out.as_slice(), &[4.0, 6.0]);
}

#[test]
fn matvec_with_identity() {
    let x = t(&[3], &[5.0, 6.0, 7.0]);
    let out = forward_op(&OpKind::MatVec, &[&Tensor::eye(3), &x]).unwrap();
    assert_eq!(out, x);
}

#[test]
fn conv_of_ones_interior_is_one() {
    let img = Tensor::full(vec![3, 3], 1.0);
    let k = Tensor::full(vec![3, 3], 1.0 / 9.0);
    let out = forward_op(&OpKind::Conv2dSame, &[&img, &k]).unwrap();
    let direct: f64 = k.as_slice().iter().sum();
    assert!((out.as_slice()[4] - direct).abs() < 1e-15);
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let tape = Tape::<f64>::new();
    let a = tape.leaf(Tensor::zeros(vec![2]));
    let b = tape.leaf(Tensor::zeros(vec![3]));
    let err = tape.add(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
}

#[test]
fn wrong_arity_rejected() {
    let x = t(&[1], &[1.0]);
    assert!(forward_op(&OpKind::Add, &[&x]).is_err());
    assert!(forward_op(&OpKind::Square, &[&x, &x]).is_err());
}

#[test]
fn quadratic_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let y = tape.dot(x, x).unwrap();
    let g = tape.gradient(y, &[x]).unwrap();
    assert_eq!(g[0].as_slice(), &[2.0, 4.0]);
}

#[test]
fn softplus_derivative_at_zero() {
    let tape = Tape::new();
    let x = tape.leaf(t(&[1], &[0.0]));
    let y = tape.softplus(x).unwrap();
    let s = tape.sum(y).unwrap();
    let g = tape.gradient(s, &[x]).unwrap();
    assert_eq!(g[0].as_slice(), &[0.5]);
}

#[test]
fn non_scalar_output_rejected() {
    let tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let y = tape.square(x).unwrap();
    assert!(matches!(tape.gradient(y, &[x]), Err(Error::NonScalarOutput(_))));
}

#[test]
fn unrelated_variables_get_zero_gradients() {
    let tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let z = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
    let y = tape.sum(x).unwrap();
    let g = tape.gradient(y, &[x, z]).unwrap();
    assert_eq!(g[1].as_slice(), &[0.0; 3]);
}

#[test]
fn repeated_gradient_calls_agree() {
    let tape = Tape::new();
    let x = tape.leaf(t(&[3], &[0.3, -1.0, 2.0]));
    let s = tape.softplus(x).unwrap();
    let m = tape.mul(s, x).unwrap();
    let y = tape.sum(m).unwrap();
    let g1 = tape.gradient(y, &[x]).unwrap();
    let g2 = tape.gradient(y, &[x]).unwrap();
    assert_eq!(g1[0].as_slice(), g2[0].as_slice());
}

#[test]
fn gradient_with_respect_to_intermediate_node() {
    let tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let s = tape.scale(x, 3.0).unwrap();
    let y = tape.dot(s, s).unwrap();
    let g = tape.gradient(y, &[s, x]).unwrap();
    assert_eq!(g[0].as_slice(), &[6.0, 12.0]);
    assert_eq!(g[1].as_slice(), &[18.0, 36.0]);
}

fn composite(tape: &Tape<f64>, x: Var, w: Var) -> Result<Var> {
    let a = tape.matvec(w, x)?;
    let b = tape.softplus(a)?;
    let c = tape.mul(b, b)?;
    let d = tape.sqrt_smoothed(c, 0.1)?;
    tape.sum(d)
}

#[test]
fn composite_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random(&mut rng, &[4, 5], -1.0, 1.0);
    let x = random(&mut rng, &[5], -1.0, 1.0);
    let report = finite_diff_check(
        |tape, xv| {
            let wv = tape.leaf(w.clone());
            composite(tape, xv, wv)
        },
        &x,
        1e-4,
    )
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn finite_diff_is_exact_for_half_squared_norm() {
    let report = finite_diff_check(
        |tape, x| {
            let s = tape.dot(x, x)?;
            tape.scale(s, 0.5)
        },
        &t(&[1], &[3.0]),
        1e-4,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-8);
}

#[test]
fn finite_diff_reports_nonfinite_coordinates() {
    // log is undefined below zero, so stepping left from a tiny positive
    // coordinate fails; the tape errors out, which the check propagates.
    let res = finite_diff_check(
        |tape, x| {
            let l = tape.log(x)?;
            tape.sum(l)
        },
        &t(&[2], &[1e-6, 1.0]),
        1e-4,
    );
    assert!(res.is_err());
    // 1/x hits 1/0 when stepping left from x = h.
    let report = finite_diff_check(
        |tape, x| {
            let ones = tape.leaf(Tensor::full(vec![2], 1.0));
            let r = tape.div(ones, x)?;
            tape.sum(r)
        },
        &t(&[2], &[1.0, 1e-4]),
        1e-4,
    )
    .unwrap();
    assert_eq!(report.nonfinite, vec![1]);
}

/// One case per op kind: how to build inputs and which input slots to check.
fn op_cases() -> Vec<(OpKind<f64>, Vec<Vec<usize>>)> {
    use OpKind::*;
    vec![
        (Add, vec![vec![5], vec![5]]),
        (Sub, vec![vec![5], vec![5]]),
        (Mul, vec![vec![5], vec![5]]),
        (Div, vec![vec![5], vec![5]]),
        (Scale(-1.7), vec![vec![5]]),
        (Offset(0.3), vec![vec![5]]),
        (ScaleBy, vec![vec![5], vec![]]),
        (MatVec, vec![vec![3, 4], vec![4]]),
        (MatVecT, vec![vec![3, 4], vec![3]]),
        (MatMul, vec![vec![2, 3], vec![3, 2]]),
        (Conv2dSame, vec![vec![4, 5], vec![3, 3]]),
        (Sum, vec![vec![5]]),
        (SumLeading, vec![vec![2, 3, 2]]),
        (Tile(3), vec![vec![4]]),
        (Dot, vec![vec![5], vec![5]]),
        (Norm2, vec![vec![5]]),
        (Square, vec![vec![5]]),
        (SqrtSmoothed(0.05), vec![vec![5]]),
        (Softplus, vec![vec![5]]),
        (Sigmoid, vec![vec![5]]),
        (Relu, vec![vec![5]]),
        (Step, vec![vec![5]]),
        (Exp, vec![vec![5]]),
        (Log, vec![vec![5]]),
        (Reshape(vec![2, 3]), vec![vec![6]]),
        (Concat, vec![vec![2, 3], vec![1, 3]]),
        (Diff2d, vec![vec![3, 4]]),
        (Diff2dAdjoint, vec![vec![2, 3, 4]]),
    ]
}

fn sample_input(kind: &OpKind<f64>, rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    match kind {
        OpKind::Log | OpKind::SqrtSmoothed(_) | OpKind::Div => random(rng, shape, 0.3, 2.0),
        _ => away_from_zero(rng, shape),
    }
}

#[test]
fn every_op_kind_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (kind, shapes) in op_cases() {
        for trial in 0..100 {
            let inputs: Vec<Tensor<f64>> =
                shapes.iter().map(|s| sample_input(&kind, &mut rng, s)).collect();
            let out_shape = forward_op(&kind, &inputs.iter().collect::<Vec<_>>())
                .unwrap()
                .shape()
                .to_vec();
            let weights = random(&mut rng, &out_shape, -1.0, 1.0);
            for slot in 0..inputs.len() {
                let report = finite_diff_check(
                    |tape, xv| {
                        let vars: Vec<Var> = (0..inputs.len())
                            .map(|j| if j == slot { xv } else { tape.leaf(inputs[j].clone()) })
                            .collect();
                        let y = tape.apply(kind.clone(), &vars)?;
                        let w = tape.leaf(weights.clone());
                        let p = tape.mul(y, w)?;
                        tape.sum(p)
                    },
                    &inputs[slot],
                    1e-4,
                )
                .unwrap();
                assert!(
                    report.passes(1e-4),
                    "{} slot {slot} trial {trial}: {report:?}",
                    kind.name()
                );
            }
        }
    }
}

#[test]
fn gradient_is_linear_in_the_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random(&mut rng, &[4, 5], -1.0, 1.0);
    let x0 = random(&mut rng, &[5], -1.0, 1.0);
    let tape = Tape::new();
    let x = tape.leaf(x0);
    let wv = tape.leaf(w);
    let f = composite(&tape, x, wv).unwrap();
    let sq = tape.dot(x, x).unwrap();
    let g = tape.exp(sq).unwrap();
    let (a, b) = (2.0, -0.5);
    let af = tape.scale(f, a).unwrap();
    let bg = tape.scale(g, b).unwrap();
    let h = tape.add(af, bg).unwrap();
    let gf = tape.gradient(f, &[x]).unwrap().remove(0);
    let gg = tape.gradient(g, &[x]).unwrap().remove(0);
    let gh = tape.gradient(h, &[x]).unwrap().remove(0);
    let expected = gf.scale(a).axpy(b, &gg).unwrap();
    // Contributions are summed in a different order, so allow rounding.
    for (u, v) in gh.as_slice().iter().zip(expected.as_slice()) {
        assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()), "{u} vs {v}");
    }
}

#[test]
fn evaluations_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = random(&mut rng, &[4, 5], -1.0, 1.0);
    let x0 = random(&mut rng, &[5], -1.0, 1.0);
    let run = || {
        let tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let wv = tape.leaf(w.clone());
        let f = composite(&tape, x, wv).unwrap();
        let (v, g) = tape.value_and_gradient(f, &[x, wv]).unwrap();
        (v.to_bits(), g)
    };
    let (v1, g1) = run();
    let (v2, g2) = run();
    assert_eq!(v1, v2);
    for (a, b) in g1.iter().zip(&g2) {
        let bits = |t: &Tensor<f64>| t.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn works_in_single_precision() {
    let tape = Tape::<f32>::new();
    let x = tape.leaf(Tensor::vector(vec![1.0f32, -2.0]));
    let y = tape.dot(x, x).unwrap();
    let g = tape.gradient(y, &[x]).unwrap();
    assert_eq!(g[0].as_slice(), &[2.0f32, -4.0]);
}
