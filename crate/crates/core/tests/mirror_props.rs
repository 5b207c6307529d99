use lamd_core::mirror::{Icnn, IcnnConfig, MirrorMap};
use lamd_core::tensor::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const D: usize = 4;

fn net(seed: u64) -> Icnn<f64> {
    let cfg = IcnnConfig {
        width: 8,
        init_scale: 2.0,
        ..IcnnConfig::new(D)
    };
    Icnn::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn point() -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-3.0f64..3.0, D).prop_map(Tensor::vector)
}

fn positive_point() -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(1e-3f64..5.0, D).prop_map(Tensor::vector)
}

fn mix(a: &Tensor<f64>, b: &Tensor<f64>, t: f64) -> Tensor<f64> {
    a.scale(t).axpy(1.0 - t, b).unwrap()
}

fn midpoint_gap(f: impl Fn(&Tensor<f64>) -> f64, a: &Tensor<f64>, b: &Tensor<f64>, t: f64) -> f64 {
    f(&mix(a, b, t)) - (t * f(a) + (1.0 - t) * f(b))
}

proptest! {
    #[test]
    fn icnn_is_convex(seed in 0u64..50, a in point(), b in point(), t in 0.0f64..1.0) {
        let n = net(seed);
        let gap = midpoint_gap(|x| n.value(x).unwrap(), &a, &b, t);
        prop_assert!(gap <= 1e-9, "gap {gap}");
    }

    #[test]
    fn icnn_minus_floor_is_convex(seed in 0u64..50, a in point(), b in point(), t in 0.0f64..1.0) {
        let n = net(seed);
        let mu = n.config().mu;
        let f = |x: &Tensor<f64>| n.value(x).unwrap() - 0.5 * mu * x.dot(x).unwrap();
        prop_assert!(midpoint_gap(f, &a, &b, t) <= 1e-9);
    }

    #[test]
    fn closed_forms_are_convex(a in positive_point(), b in positive_point(), t in 0.0f64..1.0) {
        for m in [MirrorMap::Quadratic, MirrorMap::neg_entropy()] {
            let gap = midpoint_gap(|x| m.potential_value(x).unwrap(), &a, &b, t);
            prop_assert!(gap <= 1e-9);
        }
    }

    #[test]
    fn bregman_is_nonnegative(seed in 0u64..50, a in positive_point(), b in positive_point()) {
        let learned = MirrorMap::Learned { forward: net(seed), inverse: net(seed + 1) };
        for m in [MirrorMap::Quadratic, MirrorMap::neg_entropy(), learned] {
            prop_assert!(m.bregman_divergence(&a, &b).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn closed_form_inverses_are_exact(a in positive_point()) {
        let q = MirrorMap::<f64>::Quadratic;
        prop_assert!(q.forward_backward_error(&a).unwrap() <= 1e-10);
        let e = MirrorMap::<f64>::neg_entropy();
        prop_assert!(e.forward_backward_error(&a).unwrap() <= 1e-8);
    }

    #[test]
    fn projection_restores_constraints(seed in 0u64..50, shift in -2.0f64..0.0) {
        let mut n = net(seed);
        let shifted = n.params().iter().map(|p| p.map(|v| v + shift)).collect();
        n.set_params(shifted).unwrap();
        n.project();
        prop_assert!(n.min_constrained_weight() >= 0.0);
    }
}
