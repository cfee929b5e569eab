mod common;

use concept_debias::data::EmbeddingMatrix;
use concept_debias::decomposition::{truncated_svd, truncated_svd_with, RemovalPlan, SvdMethod, SvdOptions};
use concept_debias::orthonormality_error;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn low_rank(seed: u64, n: usize, d: usize, rank: usize) -> Array2<f64> {
    let mut rng = common::rng(seed);
    let left = common::random_matrix(&mut rng, n, rank);
    let right = common::random_matrix(&mut rng, rank, d);
    left.dot(&right)
}

#[test]
fn randomized_path_matches_oracle_on_low_rank_input() {
    let options = SvdOptions {
        force_method: Some(SvdMethod::Randomized),
        ..SvdOptions::default()
    };
    for seed in 0..5 {
        let a = low_rank(seed, 80, 40, 6);
        let oracle = common::oracle_singular_values(&a);
        let basis = truncated_svd_with(&EmbeddingMatrix::new(a.clone()).unwrap(), 6, seed, &options).unwrap();
        assert_eq!(basis.method(), SvdMethod::Randomized);
        for (s, o) in basis.singular_values().iter().zip(&oracle) {
            assert!((s - o).abs() / o < 1e-8, "{s} vs {o}");
        }
        let residual = &a - &basis.u().dot(&basis.w());
        assert!(residual.iter().all(|x| x.abs() < 1e-9));
    }
}

#[test]
fn randomized_and_dense_agree_on_decaying_spectrum() {
    let mut rng = common::rng(11);
    let a = low_rank(11, 60, 30, 4) + common::random_matrix(&mut rng, 60, 30) * 1e-6;
    let m = EmbeddingMatrix::new(a).unwrap();
    let dense = truncated_svd(&m, 4, 0).unwrap();
    let options = SvdOptions {
        force_method: Some(SvdMethod::Randomized),
        ..SvdOptions::default()
    };
    let rand = truncated_svd_with(&m, 4, 0, &options).unwrap();
    for (x, y) in dense.singular_values().iter().zip(rand.singular_values()) {
        assert!((x - y).abs() / x < 1e-8);
    }
    // Same sign convention, so the factors line up column by column.
    assert!((&dense.u() - &rand.u()).iter().all(|x| x.abs() < 1e-5));
}

#[test]
fn wide_input_is_supported() {
    let mut rng = common::rng(5);
    let a = common::random_matrix(&mut rng, 7, 30);
    let basis = truncated_svd(&EmbeddingMatrix::new(a.clone()).unwrap(), 7, 0).unwrap();
    let residual = &a - &basis.u().dot(&basis.w());
    assert!(residual.iter().all(|x| x.abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn factors_are_orthonormal_and_sorted(seed in any::<u64>(), n in 2usize..30, d in 2usize..20) {
        let mut rng = common::rng(seed);
        let r = rng.random_range(1..=n.min(d));
        let a = common::random_matrix(&mut rng, n, d);
        let basis = truncated_svd(&EmbeddingMatrix::new(a).unwrap(), r, seed).unwrap();
        prop_assert!(orthonormality_error(basis.u()) < 1e-10);
        prop_assert!(orthonormality_error(basis.v()) < 1e-10);
        let s = basis.singular_values();
        prop_assert!(s.windows(2).into_iter().all(|w| w[0] >= w[1]));
        for j in 0..basis.r() {
            let col = basis.v().column(j).to_vec();
            let top = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            prop_assert!(top > 0.0);
        }
    }

    #[test]
    fn removal_is_nested(seed in any::<u64>(), k in 0usize..5) {
        let mut rng = common::rng(seed);
        let a = common::random_matrix(&mut rng, 20, 8);
        let basis = truncated_svd(&EmbeddingMatrix::new(a).unwrap(), 6, 0).unwrap();
        let mut ranking: Vec<usize> = (0..6).collect();
        ranking.reverse();
        ranking.rotate_left((seed % 6) as usize);
        let small = basis.apply_removal(&RemovalPlan::prefix(&ranking, k).unwrap()).unwrap();
        let large = basis.apply_removal(&RemovalPlan::prefix(&ranking, k + 1).unwrap()).unwrap();
        // Removing one more concept from the k-prefix result equals the
        // (k+1)-prefix result.
        let next = ranking[k];
        let pos = (0..6).filter(|i| !ranking[..k].contains(i)).position(|i| i == next).unwrap();
        let step = small.apply_removal(&RemovalPlan::new(vec![pos]).unwrap()).unwrap();
        let (x, y) = (step.reconstruct(), large.reconstruct());
        prop_assert!((x.as_array() - y.as_array()).iter().all(|v| v.abs() < 1e-12));
        // The removed energy is exactly the dropped singular value squared.
        let diff = small.reconstruct().into_array() - large.reconstruct().into_array();
        let energy: f64 = diff.iter().map(|v| v * v).sum();
        let sigma = basis.singular_values()[next];
        prop_assert!((energy - sigma * sigma).abs() < 1e-9 * sigma * sigma.max(1.0));
    }
}
