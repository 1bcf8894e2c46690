use proptest::prelude::*;
use tda_core::{l2_normalize, normalized_entropy, softmax, FeatureVector, LogitVector, Scalar};

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 2..40)
}

fn norm<S: Scalar>(f: &FeatureVector<S>) -> f64 {
    f.as_slice().iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(l in logits()) {
        let p = softmax(&LogitVector::new(l).unwrap());
        let total: f64 = p.as_slice().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(p.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn softmax_ignores_constant_shift(l in logits(), c in -500.0f64..500.0) {
        let p = softmax(&LogitVector::new(l.clone()).unwrap());
        let q = softmax(&LogitVector::new(l.iter().map(|x| x + c).collect()).unwrap());
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_commutes_with_permutation(l in logits(), rot in 0usize..40) {
        let k = rot % l.len();
        let mut r = l.clone();
        r.rotate_left(k);
        let mut p = softmax(&LogitVector::new(l).unwrap()).as_slice().to_vec();
        p.rotate_left(k);
        let q = softmax(&LogitVector::new(r).unwrap());
        for (a, b) in p.iter().zip(q.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_is_bounded_and_permutation_invariant(l in logits(), rot in 0usize..40) {
        let p = softmax(&LogitVector::new(l.clone()).unwrap());
        let h = normalized_entropy(&p).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        let k = rot % l.len();
        let mut r = l;
        r.rotate_left(k);
        let h2 = normalized_entropy(&softmax(&LogitVector::new(r).unwrap())).unwrap();
        prop_assert!((h - h2).abs() < 1e-12);
    }

    #[test]
    fn sharpening_does_not_raise_entropy(l in logits(), t in 1.0f64..10.0) {
        let h = normalized_entropy(&softmax(&LogitVector::new(l.clone()).unwrap())).unwrap();
        let sharp = normalized_entropy(&softmax(&LogitVector::new(l.iter().map(|x| x * t).collect()).unwrap())).unwrap();
        prop_assert!(sharp <= h + 1e-12);
    }

    #[test]
    fn normalization_is_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..64)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let once = l2_normalize(&v).unwrap();
        prop_assert!((norm(&once) - 1.0).abs() < 1e-12);
        let twice = l2_normalize(once.as_slice()).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn f32_normalization_within_storage_precision(v in prop::collection::vec(-10.0f32..10.0, 1..512)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-2));
        let f = l2_normalize(&v).unwrap();
        prop_assert!((norm(&f) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 8)) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let (fa, fb) = (l2_normalize(&a).unwrap(), l2_normalize(&b).unwrap());
        let s = fa.similarity(&fb);
        prop_assert_eq!(s.to_bits(), fb.similarity(&fa).to_bits());
        prop_assert!(s.abs() <= 1.0 + 1e-12);
    }
}

#[test]
fn argmax_follows_lowest_index_on_ties() {
    let p = softmax(&LogitVector::new(vec![0.0, 2.0, 2.0, 1.0]).unwrap());
    assert_eq!(p.argmax(), 1);
}

#[test]
fn new_normalized_keeps_unit_rows_bit_exact() {
    let v = vec![0.6f32, 0.8000001];
    let f = FeatureVector::new_normalized(v.clone(), 1e-5).unwrap();
    assert_eq!(f.as_slice(), &v[..]);
    let g = FeatureVector::new_normalized(vec![3.0f32, 4.0], 1e-5).unwrap();
    assert!((g.as_slice()[0] - 0.6).abs() < 1e-7);
}
