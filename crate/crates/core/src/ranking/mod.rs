//! Concept ranking by sensitive-to-task importance ratio, and the removal
//! sweep that retrains both heads after deleting the top `k` concepts.

mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sobol::ImportancePair;

pub use sweep::{removal_sweep, Regime, SweepConfig, SweepEcho, SweepRecord, SweepReport};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Concept indices sorted by `s_sensitive / (s_task + epsilon)`, descending.
/// Ties go to the larger `s_sensitive`, then to the lower index.
pub fn rank_concepts(pairs: &[ImportancePair], epsilon: f64) -> Result<Vec<usize>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidSpec("ranking epsilon must be positive".into()));
    }
    let r = pairs.len();
    let mut seen = vec![false; r];
    for p in pairs {
        if p.concept_index >= r || seen[p.concept_index] {
            return Err(Error::IncompletePairs { expected: r });
        }
        seen[p.concept_index] = true;
    }
    if r == 0 {
        return Err(Error::IncompletePairs { expected: 0 });
    }
    let mut keyed: Vec<(f64, f64, usize)> = pairs
        .iter()
        .map(|p| (p.s_sensitive / (p.s_task + epsilon), p.s_sensitive, p.concept_index))
        .collect();
    keyed.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.cmp(&b.2))
    });
    Ok(keyed.into_iter().map(|k| k.2).collect())
}

/// Angle in degrees of the point `(s_task, s_sensitive)` measured from the
/// task axis: 90 for a purely sensitive concept, 0 for a purely task one.
/// Reporting only; ranking uses the ratio.
pub fn angle(s_task: f64, s_sensitive: f64) -> Result<f64> {
    if s_task < 0.0 || s_sensitive < 0.0 {
        return Err(Error::Validation("importances must be non-negative".into()));
    }
    if s_task == 0.0 && s_sensitive == 0.0 {
        return Err(Error::BothZero);
    }
    Ok(90.0 - s_task.atan2(s_sensitive).to_degrees())
}

/// Ranked view of an importance table, as written by the `rank` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConcept {
    pub index: usize,
    pub ratio: f64,
    pub angle: Option<f64>,
    pub s_task: f64,
    pub s_sensitive: f64,
}

pub fn ranked_table(pairs: &[ImportancePair], epsilon: f64) -> Result<Vec<RankedConcept>> {
    let order = rank_concepts(pairs, epsilon)?;
    let by_index = |i: usize| pairs.iter().find(|p| p.concept_index == i).unwrap();
    Ok(order
        .into_iter()
        .map(|i| {
            let p = by_index(i);
            RankedConcept {
                index: i,
                ratio: p.s_sensitive / (p.s_task + epsilon),
                angle: angle(p.s_task, p.s_sensitive).ok(),
                s_task: p.s_task,
                s_sensitive: p.s_sensitive,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(i: usize, s_sensitive: f64, s_task: f64) -> ImportancePair {
        ImportancePair {
            concept_index: i,
            s_task,
            s_sensitive,
            n_eval_samples: 1,
            std_err_task: 0.0,
            std_err_sensitive: 0.0,
        }
    }

    #[test]
    fn ratio_order() {
        let pairs = [pair(0, 0.12, 0.33), pair(1, 0.32, 0.05), pair(2, 0.16, 0.12)];
        assert_eq!(rank_concepts(&pairs, DEFAULT_EPSILON).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn identical_pairs_keep_index_order() {
        let pairs: Vec<_> = (0..5).rev().map(|i| pair(i, 0.2, 0.2)).collect();
        assert_eq!(rank_concepts(&pairs, DEFAULT_EPSILON).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn equal_ratio_prefers_larger_sensitive() {
        let pairs = [pair(0, 0.1, 0.1), pair(1, 0.4, 0.4)];
        assert_eq!(rank_concepts(&pairs, 1e-300).unwrap(), vec![1, 0]);
    }

    #[test]
    fn incomplete_pairs() {
        let pairs = [pair(0, 0.1, 0.1), pair(2, 0.1, 0.1)];
        assert!(matches!(
            rank_concepts(&pairs, DEFAULT_EPSILON),
            Err(Error::IncompletePairs { expected: 2 })
        ));
        let dup = [pair(0, 0.1, 0.1), pair(0, 0.1, 0.1)];
        assert!(rank_concepts(&dup, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn angles() {
        assert!((angle(0.3, 0.3).unwrap() - 45.0).abs() < 1e-12);
        assert_eq!(angle(0.0, 0.4).unwrap(), 90.0);
        assert!((angle(0.4, 0.0).unwrap()).abs() < 1e-12);
        assert!((angle(0.05, 0.32).unwrap() - 81.119).abs() < 1e-3);
        assert!(matches!(angle(0.0, 0.0), Err(Error::BothZero)));
    }
}
