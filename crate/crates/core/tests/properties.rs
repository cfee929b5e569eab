mod common;

use concept_debias::data::EmbeddingMatrix;
use concept_debias::decomposition::truncated_svd;
use concept_debias::occlusion::{occlusion_importance, word_spans, Granularity, Normalization, OcclusionSet};
use concept_debias::ranking::{angle, rank_concepts};
use concept_debias::sobol::{select_eval_rows, ImportancePair};
use concept_debias::text::{neutralize, neutralize_document, NeutralizeRules};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn pairs_from(values: &[(f64, f64)]) -> Vec<ImportancePair> {
    values
        .iter()
        .enumerate()
        .map(|(i, &(s, t))| ImportancePair {
            concept_index: i,
            s_task: t,
            s_sensitive: s,
            n_eval_samples: 1,
            std_err_task: 0.0,
            std_err_sensitive: 0.0,
        })
        .collect()
}

fn importances() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..12)
}

proptest! {
    #[test]
    fn ranking_is_a_permutation(v in importances()) {
        let mut order = rank_concepts(&pairs_from(&v), 1e-6).unwrap();
        order.sort_unstable();
        prop_assert_eq!(order, (0..v.len()).collect::<Vec<_>>());
    }

    #[test]
    fn ranking_ignores_common_power_of_two_scale(v in importances(), shift in -20i32..20) {
        // Scaling by 2^shift is exact, so every ratio is bit-identical.
        let c = 2f64.powi(shift);
        let scaled: Vec<(f64, f64)> = v.iter().map(|&(s, t)| (s * c, t * c)).collect();
        prop_assert_eq!(
            rank_concepts(&pairs_from(&v), 1e-6).unwrap(),
            rank_concepts(&pairs_from(&scaled), 1e-6 * c).unwrap()
        );
    }

    #[test]
    fn ranking_ignores_input_order(v in importances(), rot in 0usize..12) {
        let pairs = pairs_from(&v);
        let mut shuffled = pairs.clone();
        shuffled.rotate_left(rot % pairs.len());
        prop_assert_eq!(rank_concepts(&pairs, 1e-6).unwrap(), rank_concepts(&shuffled, 1e-6).unwrap());
    }

    #[test]
    fn ratio_order_agrees_with_angle_order(a in (0.01f64..1.0, 0.01f64..1.0), b in (0.01f64..1.0, 0.01f64..1.0)) {
        // With a negligible epsilon, a larger ratio is a larger angle.
        let order = rank_concepts(&pairs_from(&[a, b]), 1e-300).unwrap();
        let (aa, ab) = (angle(a.1, a.0).unwrap(), angle(b.1, b.0).unwrap());
        prop_assume!((aa - ab).abs() > 1e-9);
        prop_assert_eq!(order[0] == 0, aa > ab);
    }

    #[test]
    fn angle_stays_in_range(t in 0.0f64..10.0, s in 0.0f64..10.0) {
        prop_assume!(t > 0.0 || s > 0.0);
        let a = angle(t, s).unwrap();
        prop_assert!((0.0..=90.0).contains(&a));
    }

    #[test]
    fn eval_rows_are_sorted_distinct_and_stratified(
        labels in prop::collection::vec(0usize..3, 1..200),
        count in 1usize..300,
        seed in any::<u64>(),
    ) {
        let rows = select_eval_rows(&labels, count, seed);
        prop_assert_eq!(rows.len(), count.min(labels.len()));
        prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        for class in 0..3 {
            let total = labels.iter().filter(|&&l| l == class).count() as f64;
            let picked = rows.iter().filter(|&&i| labels[i] == class).count() as f64;
            let share = total * rows.len() as f64 / labels.len() as f64;
            prop_assert!((picked - share).abs() <= 1.0 + 1e-9);
        }
    }
}

fn fixture_basis() -> concept_debias::decomposition::ConceptBasis {
    let mut rng = common::rng(21);
    let a = common::random_matrix(&mut rng, 30, 8);
    truncated_svd(&EmbeddingMatrix::new(a).unwrap(), 5, 0).unwrap()
}

fn occlusion_set(base: Array1<f64>, variants: Array2<f64>) -> OcclusionSet {
    let tokens: Vec<String> = (0..variants.nrows()).map(|i| format!("t{i}")).collect();
    OcclusionSet {
        document_id: "doc".into(),
        unit_spans: word_spans(&tokens),
        tokens,
        granularity: Granularity::Word,
        base_embedding: base,
        variant_embeddings: variants,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn occlusion_scores_are_linear_in_the_perturbation(seed in any::<u64>(), alpha in -4.0f64..4.0, concept in 0usize..5) {
        let basis = fixture_basis();
        let mut rng = common::rng(seed);
        let base = common::random_matrix(&mut rng, 1, 8).row(0).to_owned();
        let delta = common::random_matrix(&mut rng, 3, 8);
        let unit = occlusion_set(base.clone(), &delta + &base);
        let scaled = occlusion_set(base.clone(), &delta * alpha + &base);
        let s1 = occlusion_importance(&unit, &basis, concept, Normalization::Raw).unwrap().scores;
        let s2 = occlusion_importance(&scaled, &basis, concept, Normalization::Raw).unwrap().scores;
        for (a, b) in s1.iter().zip(&s2) {
            prop_assert!((alpha * a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
        // Direct oracle: minus the concept coefficient of the perturbation.
        let coef = basis.project_rows(delta.view()).unwrap();
        for (t, s) in s1.iter().enumerate() {
            prop_assert!((s + coef[[t, concept]]).abs() < 1e-9);
        }
    }

    #[test]
    fn occlusion_scores_follow_unit_order(seed in any::<u64>(), rot in 1usize..4) {
        let basis = fixture_basis();
        let mut rng = common::rng(seed);
        let base = common::random_matrix(&mut rng, 1, 8).row(0).to_owned();
        let variants = common::random_matrix(&mut rng, 4, 8);
        let perm: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
        let permuted = variants.select(ndarray::Axis(0), &perm);
        let a = occlusion_importance(&occlusion_set(base.clone(), variants), &basis, 1, Normalization::Raw).unwrap();
        let b = occlusion_importance(&occlusion_set(base, permuted), &basis, 1, Normalization::Raw).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(b.scores[i], a.scores[p]);
        }
    }

    #[test]
    fn max_abs_normalization_bounds_scores(seed in any::<u64>()) {
        let basis = fixture_basis();
        let mut rng = common::rng(seed);
        let base = common::random_matrix(&mut rng, 1, 8).row(0).to_owned();
        let set = occlusion_set(base, common::random_matrix(&mut rng, 5, 8));
        let n = occlusion_importance(&set, &basis, 0, Normalization::MaxAbs).unwrap();
        let top = n.scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        prop_assert!((top - 1.0).abs() < 1e-12 || top == 0.0);
    }
}

const VOCAB: &[&str] = &[
    "he", "She", "HIS", "his", "her", "hers", "him", "himself", "Mr.", "mrs", "Mary", "john's",
    "the", "work", "Dr.", "U.S.", "a@b.com", "http://x.org", "!!", "...", ",", ".", "?", "they",
];

proptest! {
    #[test]
    fn neutralization_is_idempotent(words in prop::collection::vec(prop::sample::select(VOCAB), 0..30), max in 3usize..40) {
        let rules = NeutralizeRules::default();
        let text = words.join(" ");
        let (once, _) = neutralize_document(&text, max, &rules);
        let (twice, report) = neutralize_document(&once, max, &rules);
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(report.substituted_tokens + report.replaced_names, 0);
        prop_assert!(once.split_whitespace().count() <= max);
    }

    #[test]
    fn neutral_text_is_untouched(words in prop::collection::vec("[a-z]{1,8}", 0..20)) {
        let rules = NeutralizeRules::default();
        prop_assume!(words.iter().all(|w| {
            !rules.substitutions.contains_key(w) && !rules.first_names.contains(w)
        }));
        let text = words.join(" ");
        prop_assert_eq!(neutralize(&text, &rules).0, text);
    }
}
