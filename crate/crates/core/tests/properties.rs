use proptest::prelude::*;

use sketchknn::data::{split_indices, MultiLabelDataset};
use sketchknn::geom::{bound_rhs_1nn, covering_curve, BoundInputs, CoverMetric};
use sketchknn::linalg::{least_squares, orthonormal_basis};
use sketchknn::metrics::{example_f1, hamming_loss};
use sketchknn::sketch::fwht_in_place;
use sketchknn::{DenseMatrix, LabelMatrix, SketchKind, SketchOperator};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |d| DenseMatrix::new(rows, cols, d).unwrap())
}

fn labels(rows: usize, cols: usize) -> impl Strategy<Value = LabelMatrix> {
    prop::collection::vec(0u8..=1, rows * cols).prop_map(move |d| LabelMatrix::new(rows, cols, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fwht_twice_scales_by_length(log_n in 0u32..9, seed in any::<u64>()) {
        let n = 1usize << log_n;
        let v = sketchknn::RngState::new(seed, 0).gaussian(n);
        let mut w = v.clone();
        fwht_in_place(&mut w).unwrap();
        fwht_in_place(&mut w).unwrap();
        for (a, b) in w.iter().zip(&v) {
            prop_assert!((a - n as f64 * b).abs() <= 1e-9 * n as f64);
        }
    }

    #[test]
    fn sketch_apply_matches_explicit_matrix(n in 1usize..70, c in 1usize..5, frac in 0.01f64..1.0, seed in any::<u64>(), kind in 0usize..3) {
        let kind = [SketchKind::Gaussian, SketchKind::Rademacher, SketchKind::WalshHadamard][kind];
        let m = ((n as f64 * frac).ceil() as usize).clamp(1, n);
        let s = SketchOperator::build(kind, m, n, seed).unwrap();
        let a = DenseMatrix::from_fn(n, c, |i, j| ((i * 31 + j * 7) % 11) as f64 - 5.0).unwrap();
        let fast = s.apply(&a).unwrap();
        let slow = s.to_dense().matmul(&a).unwrap();
        prop_assert!(fast.sub(&slow).unwrap().max_abs() <= 1e-9 * (1.0 + slow.max_abs()));
    }

    #[test]
    fn least_squares_residual_is_orthogonal(a in matrix(12, 4), b in matrix(12, 2)) {
        let v = least_squares(&a, &b).unwrap();
        let r = b.sub(&a.matmul(&v).unwrap()).unwrap();
        let at_r = a.transpose().matmul(&r).unwrap();
        let scale = a.frobenius_norm() * b.frobenius_norm();
        prop_assert!(at_r.max_abs() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn basis_is_orthonormal(a in matrix(9, 3)) {
        prop_assume!(a.max_abs() > 0.0);
        let q = orthonormal_basis(&a).unwrap();
        let qtq = q.transpose().matmul(&q).unwrap();
        let eye = DenseMatrix::identity(q.cols());
        prop_assert!(qtq.sub(&eye).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn metrics_stay_in_unit_interval(t in labels(6, 5), p in labels(6, 5)) {
        let h = hamming_loss(&t, &p).unwrap();
        let f = example_f1(&t, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(hamming_loss(&t, &t).unwrap(), 0.0);
        prop_assert_eq!(example_f1(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn covers_are_valid_and_nested(points in matrix(40, 2), base in 0.5f64..5.0) {
        let eps = [base, base / 2.0, base / 4.0];
        let curve = covering_curve(&points, &eps, CoverMetric::Euclidean, None).unwrap();
        for c in &curve {
            prop_assert!(c.verify(&points, None).is_ok());
        }
        prop_assert!(curve.windows(2).all(|w| w[0].size <= w[1].size
            && w[1].center_indices.starts_with(&w[0].center_indices)));
    }

    #[test]
    fn split_partitions_indices(n in 2usize..500, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let n_test = (n as f64 * frac).floor() as usize;
        prop_assume!(n_test > 0 && n_test < n);
        let (train, test) = split_indices(n, frac, seed).unwrap();
        prop_assert_eq!(test.len(), n_test);
        let mut all: Vec<usize> = train.into_iter().chain(test).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn dataset_text_round_trips(x in matrix(7, 4), y in labels(7, 3)) {
        let ds = MultiLabelDataset::from_dense("rt", &x, y).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let back = MultiLabelDataset::parse(std::str::from_utf8(&buf).unwrap(), "rt").unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn bound_shrinks_with_more_data(n in 1usize..100_000, l in 0.01f64..5.0, d in 0.5f64..10.0) {
        let at = |n| bound_rhs_1nn(&BoundInputs {
            q: 3, n, lipschitz: l, weights_frobenius: 2.0, doubling_dim: d, k: 1,
            bayes_errors: vec![0.1, 0.2, 0.05],
        }).unwrap();
        prop_assert!(at(2 * n) < at(n));
        prop_assert!(at(n) > 0.7);
    }
}
