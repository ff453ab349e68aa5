mod common;

use proptest::prelude::*;
use treesym::attack::LeafBoxes;
use treesym::data::{
    apply_normalizer, apply_symmetry, compose, fit_normalizer, invert, Dataset, ImageShape,
    SymmetryElement,
};
use treesym::defense::{classify_perfect_knowledge, DefendedClassifier, Policy};
use treesym::gbdt::{deserialize, serialize};

const ALL: [SymmetryElement; 4] = SymmetryElement::VOTE_ORDER;

fn shape_for(d: usize) -> ImageShape {
    match d {
        784 => ImageShape::new(28, 28),
        10 => ImageShape::new(2, 5),
        _ => ImageShape::new(1, d),
    }
}

fn unit_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, d)
}

/// Values `k / 2^20`: inversion is exact on them.
fn dyadic_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..=1 << 20).prop_map(|k| f64::from(k) / f64::from(1u32 << 20)), d)
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= f64::EPSILON)
}

proptest! {
    #[test]
    fn every_element_is_an_involution(
        d in prop::sample::select(vec![1usize, 10, 784]),
        seed in any::<u64>(),
        s in prop::sample::select(ALL.to_vec()),
    ) {
        let mut r = common::rng(seed);
        let x = common::random_point(&mut r, d);
        let shape = Some(shape_for(d));
        let y = apply_symmetry(&apply_symmetry(&x, s, shape).unwrap(), s, shape).unwrap();
        prop_assert!(close(&x, &y));
    }

    #[test]
    fn involution_is_exact_on_dyadic_values(x in dyadic_vec(10), s in prop::sample::select(ALL.to_vec())) {
        let shape = Some(shape_for(10));
        let y = apply_symmetry(&apply_symmetry(&x, s, shape).unwrap(), s, shape).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn action_is_a_homomorphism(
        x in unit_vec(10),
        a in prop::sample::select(ALL.to_vec()),
        b in prop::sample::select(ALL.to_vec()),
    ) {
        let shape = Some(shape_for(10));
        let lhs = apply_symmetry(&x, compose(a, b), shape).unwrap();
        let rhs = apply_symmetry(&apply_symmetry(&x, b, shape).unwrap(), a, shape).unwrap();
        prop_assert!(close(&lhs, &rhs));
    }

    #[test]
    fn normalization_is_idempotent(seed in any::<u64>(), n in 2usize..40) {
        let mut r = common::rng(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v = common::random_point(&mut r, 2);
                // the third feature is constant
                vec![v[0] * 100.0 - 50.0, v[1], 7.0]
            })
            .collect();
        let d = Dataset::from_rows(&rows, vec![0; n], 2, None).unwrap();
        let once = apply_normalizer(&fit_normalizer(&d).unwrap(), &d).unwrap();
        let twice = apply_normalizer(&fit_normalizer(&once).unwrap(), &once).unwrap();
        prop_assert!(once.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(once.features(), twice.features());
    }

    #[test]
    fn serialization_round_trips_bit_exactly(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let e = common::random_softmax(&mut r, 3, 2, 3, 4);
        let bytes = serialize(&e);
        let back = deserialize::<f64>(&bytes).unwrap();
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(serialize(&back), bytes);
        let b = common::random_binary(&mut r, 3, 3, 4);
        prop_assert_eq!(deserialize::<f64>(&serialize(&b)).unwrap(), b);
    }

    /// Any point of a reached leaf region routes to the same leaves, so the
    /// prediction is constant on it.
    #[test]
    fn prediction_is_constant_on_leaf_regions(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let e = common::random_binary(&mut r, 3, 3, 4);
        let boxes = LeafBoxes::new(&e);
        let x = common::random_point(&mut r, 4);
        let tuple = boxes.tuple_of(&e, &x);
        let region = boxes.tuple_box(&tuple);
        prop_assert!(region.contains(&x));
        for _ in 0..20 {
            let y = region.project(&common::random_point(&mut r, 4)).unwrap();
            prop_assert_eq!(boxes.tuple_of(&e, &y), tuple.clone());
            prop_assert_eq!(e.predict_label(&y).unwrap(), e.predict_label(&x).unwrap());
        }
    }

    #[test]
    fn threshold_values_route_right(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let e = common::random_binary(&mut r, 1, 1, 1);
        if let treesym::gbdt::Node::Split { threshold, right, .. } = e.trees()[0].nodes()[0] {
            prop_assert_eq!(e.trees()[0].route(&[threshold]).id, right);
        }
    }

    #[test]
    fn zero_knowledge_pipeline_inverts_then_classifies(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let e = common::random_binary(&mut r, 3, 3, 4);
        let d = DefendedClassifier::new(e.clone(), Policy::ZeroKnowledgeInvert, None).unwrap();
        let x = common::random_point(&mut r, 4);
        prop_assert_eq!(d.predict_label(&x).unwrap(), e.predict_label(&invert(&x)).unwrap());
    }

    /// The four variants of `s(x)` are a permutation of those of `x`.
    #[test]
    fn group_vote_label_multiset_is_invariant(seed in any::<u64>(), s in prop::sample::select(ALL.to_vec())) {
        let mut r = common::rng(seed);
        let shape = ImageShape::new(2, 2);
        let e = common::random_softmax(&mut r, 3, 2, 2, 4);
        let d = DefendedClassifier::new(e, Policy::PerfectKnowledgeGroup, Some(shape)).unwrap();
        let x = dyadic(&mut r, 4);
        let mut a = classify_perfect_knowledge(&d, &x).unwrap();
        let mut b = classify_perfect_knowledge(&d, &apply_symmetry(&x, s, Some(shape)).unwrap()).unwrap();
        prop_assert_eq!(a.agreed, b.agreed);
        a.labels.sort_unstable();
        b.labels.sort_unstable();
        prop_assert_eq!(a.labels, b.labels);
    }
}

fn dyadic(r: &mut rand_chacha::ChaCha8Rng, d: usize) -> Vec<f64> {
    use rand::Rng;
    (0..d).map(|_| f64::from(r.random_range(0..=1024u32)) / 1024.0).collect()
}

#[test]
fn group_axioms_hold_exhaustively() {
    use SymmetryElement::Id;
    for a in ALL {
        assert_eq!(compose(a, Id), a);
        assert_eq!(compose(Id, a), a);
        assert_eq!(compose(a, a.inverse()), Id);
        for b in ALL {
            assert!(ALL.contains(&compose(a, b)));
            for c in ALL {
                assert_eq!(compose(compose(a, b), c), compose(a, compose(b, c)));
            }
        }
    }
}
