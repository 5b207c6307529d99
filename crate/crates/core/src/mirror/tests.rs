use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::finite_diff_check;

fn v(data: &[f64]) -> Tensor<f64> {
    Tensor::vector(data.to_vec())
}

fn small_config(d: usize) -> IcnnConfig {
    IcnnConfig {
        width: 6,
        ..IcnnConfig::new(d)
    }
}

fn random_pair(seed: u64, d: usize) -> MirrorMap<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MirrorMap::Learned {
        forward: Icnn::new(small_config(d), &mut rng).unwrap(),
        inverse: Icnn::new(small_config(d), &mut rng).unwrap(),
    }
}

#[test]
fn quadratic_examples() {
    let m = MirrorMap::<f64>::Quadratic;
    let x = v(&[3.0, 4.0]);
    assert_eq!(m.potential_value(&x).unwrap(), 12.5);
    assert_eq!(m.mirror_map(&x).unwrap().as_slice(), &[3.0, 4.0]);
    assert_eq!(m.inverse_mirror_map(&x).unwrap().as_slice(), &[3.0, 4.0]);
    let b = m
        .bregman_divergence(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]))
        .unwrap();
    assert_eq!(b, 0.5);
    assert_eq!(m.forward_backward_error(&x).unwrap(), 0.0);
}

#[test]
fn neg_entropy_examples() {
    let m = MirrorMap::<f64>::neg_entropy();
    assert_eq!(m.potential_value(&v(&[1.0, 1.0])).unwrap(), 0.0);
    let e = (-1.0f64).exp();
    let g = m.mirror_map(&v(&[e, e])).unwrap();
    assert!(g.max_abs() < 1e-15);
    let back = m.inverse_mirror_map(&v(&[0.0, 0.0])).unwrap();
    for &b in back.as_slice() {
        assert!((b - e).abs() < 1e-15);
    }
    let b = m
        .bregman_divergence(&v(&[0.5, 0.5]), &v(&[0.25, 0.75]))
        .unwrap();
    let kl = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
    assert!((b - kl).abs() < 1e-12, "{b} vs {kl}");
    assert!((b - 0.14384).abs() < 1e-5);
}

#[test]
fn neg_entropy_rejects_nonpositive_with_index() {
    let m = MirrorMap::<f64>::neg_entropy();
    match m.potential_value(&v(&[1.0, 0.5, -0.1])) {
        Err(Error::Domain { index, .. }) => assert_eq!(index, 2),
        other => panic!("expected domain error, got {other:?}"),
    }
    assert!(matches!(
        m.mirror_map(&v(&[0.0])),
        Err(Error::Domain { index: 0, .. })
    ));
}

#[test]
fn neg_entropy_inverse_respects_cap() {
    let m = MirrorMap::NegEntropy { exp_cap: 10.0 };
    assert!(m.inverse_mirror_map(&v(&[10.5])).is_ok());
    match m.inverse_mirror_map(&v(&[0.0, 12.0])) {
        Err(Error::Overflow { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected overflow, got {other:?}"),
    }
    let m = MirrorMap::<f64>::neg_entropy();
    assert!(m.inverse_mirror_map(&v(&[800.0])).is_err());
}

#[test]
fn bregman_of_point_with_itself_is_zero() {
    let x = v(&[0.3, 0.9, 1.7]);
    for m in [
        MirrorMap::Quadratic,
        MirrorMap::neg_entropy(),
        random_pair(1, 3),
    ] {
        assert!(m.bregman_divergence(&x, &x).unwrap().abs() < 1e-12);
    }
}

#[test]
fn icnn_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for act in [Activation::Softplus, Activation::Relu] {
        let cfg = IcnnConfig {
            activation: act,
            hidden_layers: 3,
            ..small_config(5)
        };
        let net = Icnn::<f64>::new(cfg, &mut rng).unwrap();
        let x = v(&[0.3, -0.7, 1.1, 0.2, -0.4]);
        let report = finite_diff_check(
            |t, x| {
                let (b, _) = net.bind(t);
                b.value_on(t, x)
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(report.passes(1e-4), "{act:?}: {report:?}");
        // The explicit expression agrees with the tape gradient of the value.
        let tape = Tape::new();
        let (b, _) = net.bind(&tape);
        let xv = tape.leaf(x.clone());
        let val = b.value_on(&tape, xv).unwrap();
        let g = tape.gradient(val, &[xv]).unwrap().remove(0);
        let explicit = net.gradient(&x).unwrap();
        for (a, e) in g.as_slice().iter().zip(explicit.as_slice()) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn icnn_accepts_images_and_keeps_their_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Icnn::<f64>::new(small_config(6), &mut rng).unwrap();
    let img = Tensor::from_vec(vec![2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
    let g = net.gradient(&img).unwrap();
    assert_eq!(g.shape(), &[2, 3]);
    let flat = net.gradient(&img.reshape(vec![6]).unwrap()).unwrap();
    assert_eq!(g.as_slice(), flat.as_slice());
    assert!(matches!(
        net.gradient(&v(&[1.0; 5])),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn zero_weight_icnn_is_identity() {
    let net = Icnn::<f64>::quadratic(small_config(3)).unwrap();
    let x = v(&[1.5, -2.0, 0.25]);
    let g = net.gradient(&x).unwrap();
    for (a, b) in g.as_slice().iter().zip(x.as_slice()) {
        assert!((a - b).abs() < 1e-15);
    }
    let pair = MirrorMap::Learned {
        forward: net.clone(),
        inverse: net,
    };
    assert!(pair.forward_backward_error(&x).unwrap() < 1e-14);
}

#[test]
fn untrained_pair_has_positive_fb_error() {
    let m = random_pair(7, 4);
    let x = v(&[0.2, 0.4, -0.1, 0.9]);
    assert!(m.forward_backward_error(&x).unwrap() > 0.0);
}

#[test]
fn parameters_round_trip_and_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut net = Icnn::<f64>::new(small_config(4), &mut rng).unwrap();
    let names = net.param_names();
    assert_eq!(
        names,
        [
            "layer0.wx", "layer0.b", "layer1.wz", "layer1.wx", "layer1.b", "out.wz", "out.wx",
            "out.b", "quad"
        ]
    );
    let mask = net.constrained_mask();
    assert_eq!(mask.iter().filter(|&&c| c).count(), 3);
    assert!(net.min_constrained_weight() >= 0.0);

    let negated: Vec<_> = net.params().iter().map(|p| p.scale(-1.0)).collect();
    net.set_params(negated).unwrap();
    assert!(net.min_constrained_weight() < 0.0);
    net.project();
    assert_eq!(net.min_constrained_weight(), 0.0);

    let mut wrong = net.params();
    wrong.pop();
    assert!(net.set_params(wrong).is_err());
    assert_eq!(net.num_params(), 4 * 6 + 6 + 36 + 4 * 6 + 6 + 6 + 4 + 1 + 1);
}

#[test]
fn bound_maps_agree_with_eager_maps() {
    let x = v(&[0.4, 1.3, 0.8]);
    for m in [
        MirrorMap::Quadratic,
        MirrorMap::neg_entropy(),
        random_pair(11, 3),
    ] {
        let tape = Tape::new();
        let (b, leaves) = m.bind(&tape);
        let xv = tape.leaf(x.clone());
        let fwd = b.mirror_map_on(&tape, xv).unwrap();
        let back = b.inverse_mirror_map_on(&tape, fwd).unwrap();
        let pot = b.potential_on(&tape, xv).unwrap();
        assert_eq!(tape.value(fwd), m.mirror_map(&x).unwrap());
        assert_eq!(
            tape.value(back),
            m.inverse_mirror_map(&m.mirror_map(&x).unwrap()).unwrap()
        );
        let pv = tape.value(pot).item().unwrap();
        assert!((pv - m.potential_value(&x).unwrap()).abs() < 1e-14);
        let expected = if m.kind() == PotentialKind::Learned { 18 } else { 0 };
        assert_eq!(leaves.len(), expected);
    }
}

#[test]
fn config_validation() {
    let mut cfg = IcnnConfig::new(4);
    cfg.mu = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = IcnnConfig::new(4);
    cfg.width = 0;
    assert!(cfg.validate().is_err());
    assert!(IcnnConfig::new(4).validate().is_ok());
}
