mod common;

use concept_debias::sobol::{
    sample_design, sobol_points, total_indices_of, DesignParams, MaskGenerator, TotalIndices,
};
use ndarray::ArrayView2;
use rand::Rng;

fn ishigami_like(m: ArrayView2<'_, f64>) -> Vec<f64> {
    m.rows()
        .into_iter()
        .map(|r| r[0] + r[1] * r[1] + 2.0 * r[0] * r[2])
        .collect()
}

fn estimate(n: usize, generator: MaskGenerator, seed: u64) -> TotalIndices {
    let params = DesignParams {
        n,
        generator,
        scramble: true,
        seed,
    };
    total_indices_of(&sample_design(3, &params).unwrap(), ishigami_like).unwrap()
}

#[test]
fn product_fixture_matches_closed_form_and_grid() {
    // For m1*m2 on the unit square: Var = 7/144, E[Var | other] = 1/36.
    let exact = 4.0 / 7.0;
    let grid = common::grid_total_indices(|a, b| a * b, 512);
    assert!((grid[0] - exact).abs() < 1e-5 && (grid[1] - exact).abs() < 1e-5);
    let design = sample_design(2, &DesignParams { n: 2048, ..DesignParams::default() }).unwrap();
    let est = total_indices_of(&design, |m| m.rows().into_iter().map(|r| r[0] * r[1]).collect()).unwrap();
    for s in &est.indices {
        assert!((s - exact).abs() < 0.01, "{s}");
    }
}

#[test]
fn inert_input_gets_zero_index() {
    let design = sample_design(4, &DesignParams { n: 512, ..DesignParams::default() }).unwrap();
    let est = total_indices_of(&design, |m| m.rows().into_iter().map(|r| r[0] - 2.0 * r[2]).collect()).unwrap();
    assert_eq!(est.raw[1], 0.0);
    assert_eq!(est.raw[3], 0.0);
}

#[test]
fn standard_error_halves_when_n_quadruples() {
    for generator in [MaskGenerator::SobolSequence, MaskGenerator::StratifiedUniform] {
        let small = estimate(1024, generator, 1);
        let large = estimate(4096, generator, 1);
        for (a, b) in small.std_err.iter().zip(&large.std_err) {
            let ratio = a / b;
            assert!((1.7..2.3).contains(&ratio), "{generator:?}: ratio {ratio}");
        }
    }
}

#[test]
fn errors_stay_within_a_few_standard_errors() {
    // Closed form for m1 + m2^2 + 2 m1 m3 on the unit cube.
    let var_total = {
        // Var(m1 (1 + 2 m3)) + Var(m2^2)
        let e_g2 = 1.0 / 3.0 * (1.0 + 2.0 + 4.0 / 3.0);
        let e_g = 0.5 * 2.0;
        e_g2 - e_g * e_g + (1.0 / 5.0 - 1.0 / 9.0)
    };
    let st1 = (1.0 / 12.0) * (1.0 + 2.0 + 4.0 / 3.0) / var_total;
    let st2 = (1.0 / 5.0 - 1.0 / 9.0) / var_total;
    let st3 = (1.0 / 3.0) * (1.0 / 12.0) * 4.0 / var_total;
    let est = estimate(4096, MaskGenerator::StratifiedUniform, 7);
    for (i, exact) in [st1, st2, st3].iter().enumerate() {
        assert!((est.raw[i] - exact).abs() < 4.0 * est.std_err[i] + 1e-3, "{i}: {} vs {exact}", est.raw[i]);
    }
}

#[test]
fn sobol_points_beat_random_discrepancy() {
    let qmc = sobol_points(5, 256, false, 0);
    let scrambled = sobol_points(5, 256, true, 3);
    let mut rng = common::rng(9);
    let random = ndarray::Array2::from_shape_simple_fn((256, 5), || rng.random_range(0.0..1.0));
    let (q, s, r) = (
        common::l2_star_discrepancy(&qmc),
        common::l2_star_discrepancy(&scrambled),
        common::l2_star_discrepancy(&random),
    );
    assert!(q < r && s < r, "sobol {q}, scrambled {s}, random {r}");
}

#[test]
fn seeds_change_scrambled_designs_only() {
    let a = sobol_points(3, 64, true, 1);
    let b = sobol_points(3, 64, true, 2);
    assert_ne!(a, b);
    assert_eq!(sobol_points(3, 64, false, 1), sobol_points(3, 64, false, 2));
    assert_eq!(a, sobol_points(3, 64, true, 1));
}
