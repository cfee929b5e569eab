use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, LabelVector, SplitIndices};
use crate::decomposition::{ConceptBasis, RemovalPlan};
use crate::error::{Error, Result};
use crate::heads::{train_head, TrainConfig, TrainMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub train: TrainConfig,
    /// Accuracy change, in percentage points, that counts as a real move
    /// when labelling regimes.
    pub regime_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            regime_threshold: 0.5,
        }
    }
}

/// Label of one step of the sweep, from the change against the previous `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// The first record.
    Baseline,
    /// Sensitive accuracy fell; task accuracy held.
    FairnessGain,
    /// Task accuracy fell.
    AccuracyCollapse,
    /// Neither moved beyond the threshold.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub k: usize,
    pub removed_indices: Vec<usize>,
    pub task_accuracy: f64,
    pub sensitive_accuracy: f64,
    pub task_head: TrainMeta,
    pub sensitive_head: TrainMeta,
    pub regime: Regime,
}

/// Inputs the report was produced from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEcho {
    pub r: usize,
    pub basis_seed: u64,
    pub ranking: Vec<usize>,
    pub ks: Vec<usize>,
    pub config: SweepConfig,
    /// Free-form provenance added by the caller (split seed, design, ...).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub echo: SweepEcho,
    pub records: Vec<SweepRecord>,
    /// False when the sweep stopped early; `records` then holds the completed
    /// prefix.
    pub valid: bool,
}

impl SweepReport {
    pub fn baseline(&self) -> Option<&SweepRecord> {
        self.records.first().filter(|r| r.k == 0)
    }
}

struct Evaluated {
    task_accuracy: f64,
    sensitive_accuracy: f64,
    task_head: TrainMeta,
    sensitive_head: TrainMeta,
}

fn evaluate_k(
    bundle: &DatasetBundle,
    splits: &SplitIndices,
    basis: &ConceptBasis,
    plan: &RemovalPlan,
    cfg: &SweepConfig,
) -> Result<Evaluated> {
    let reduced = basis.apply_removal(plan)?;
    let x = reduced.reconstruct();
    let x_train = x.as_array().select(ndarray::Axis(0), &splits.train);
    let x_val = x.as_array().select(ndarray::Axis(0), &splits.val);
    let x_test = x.as_array().select(ndarray::Axis(0), &splits.test);

    let fit = |labels: &LabelVector| -> Result<(f64, TrainMeta)> {
        let y = labels.values();
        let pick = |rows: &[usize]| rows.iter().map(|&i| y[i]).collect::<Vec<_>>();
        let head = train_head(
            x_train.view(),
            &pick(&splits.train),
            x_val.view(),
            &pick(&splits.val),
            labels.num_classes(),
            &cfg.train,
        )?;
        let acc = head.accuracy(x_test.view(), &pick(&splits.test))?;
        Ok((acc, head.meta))
    };
    let (task_accuracy, task_head) = fit(&bundle.task)?;
    let (sensitive_accuracy, sensitive_head) = fit(&bundle.sensitive)?;
    Ok(Evaluated {
        task_accuracy,
        sensitive_accuracy,
        task_head,
        sensitive_head,
    })
}

fn label_regimes(records: &mut [SweepRecord], threshold: f64) {
    for i in 0..records.len() {
        records[i].regime = if i == 0 {
            Regime::Baseline
        } else {
            let task_drop = 100.0 * (records[i - 1].task_accuracy - records[i].task_accuracy);
            let sens_drop =
                100.0 * (records[i - 1].sensitive_accuracy - records[i].sensitive_accuracy);
            if task_drop > threshold {
                Regime::AccuracyCollapse
            } else if sens_drop > threshold {
                Regime::FairnessGain
            } else {
                Regime::Flat
            }
        };
    }
}

/// For each `k`, removes the first `k` ranked concepts, reconstructs the
/// embeddings, retrains a task head and a sensitive head on the train rows
/// and scores both on the test rows. The basis must have been fitted on all
/// rows of `bundle`.
///
/// A failure at some `k` yields `SweepAborted` carrying the records for the
/// smaller `k` values, marked invalid.
pub fn removal_sweep(
    bundle: &DatasetBundle,
    splits: &SplitIndices,
    basis: &ConceptBasis,
    ranking: &[usize],
    ks: &[usize],
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    if basis.n() != bundle.n() {
        return Err(Error::DimensionMismatch(format!(
            "basis fitted on {} rows, bundle has {}",
            basis.n(),
            bundle.n()
        )));
    }
    if ranking.len() != basis.r() {
        return Err(Error::DimensionMismatch(format!(
            "ranking lists {} concepts, basis has {}",
            ranking.len(),
            basis.r()
        )));
    }
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpec("ks must be non-empty and strictly increasing".into()));
    }
    if let Some(&k) = ks.last().filter(|&&k| k >= basis.r()) {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: basis.r(),
        });
    }
    cfg.train.validate()?;

    let plans = ks
        .iter()
        .map(|&k| RemovalPlan::prefix(ranking, k))
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<Result<Evaluated>> = plans
        .par_iter()
        .map(|plan| evaluate_k(bundle, splits, basis, plan, cfg))
        .collect();

    let echo = SweepEcho {
        r: basis.r(),
        basis_seed: basis.seed(),
        ranking: ranking.to_vec(),
        ks: ks.to_vec(),
        config: cfg.clone(),
        extra: serde_json::Value::Null,
    };
    let mut records = Vec::with_capacity(ks.len());
    for ((plan, &k), outcome) in plans.into_iter().zip(ks).zip(outcomes) {
        match outcome {
            Ok(e) => records.push(SweepRecord {
                k,
                removed_indices: plan.removed_indices,
                task_accuracy: e.task_accuracy,
                sensitive_accuracy: e.sensitive_accuracy,
                task_head: e.task_head,
                sensitive_head: e.sensitive_head,
                regime: Regime::Flat,
            }),
            Err(source) => {
                label_regimes(&mut records, cfg.regime_threshold);
                return Err(Error::SweepAborted {
                    k,
                    partial: Box::new(SweepReport {
                        echo,
                        records,
                        valid: false,
                    }),
                    source: Box::new(source),
                });
            }
        }
    }
    label_regimes(&mut records, cfg.regime_threshold);
    Ok(SweepReport {
        echo,
        records,
        valid: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(task: f64, sens: f64) -> SweepRecord {
        SweepRecord {
            k: 0,
            removed_indices: vec![],
            task_accuracy: task,
            sensitive_accuracy: sens,
            task_head: TrainMeta::default(),
            sensitive_head: TrainMeta::default(),
            regime: Regime::Flat,
        }
    }

    #[test]
    fn regimes_from_finite_differences() {
        let mut recs = vec![
            record(0.90, 0.95),
            record(0.899, 0.70),
            record(0.85, 0.69),
            record(0.849, 0.688),
        ];
        label_regimes(&mut recs, 0.5);
        let got: Vec<Regime> = recs.iter().map(|r| r.regime).collect();
        assert_eq!(
            got,
            vec![
                Regime::Baseline,
                Regime::FairnessGain,
                Regime::AccuracyCollapse,
                Regime::Flat
            ]
        );
    }
}
