use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetBundle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    None,
    Task,
    Sensitive,
}

/// Train/validation/test fractions and the shuffle seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
    pub stratify_by: Stratify,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
            seed: 0,
            stratify_by: Stratify::None,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidSpec(format!("{name} = {f} is not in (0, 1)")));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train_frac).round() as usize;
        let val = ((n as f64) * self.val_frac).round() as usize;
        let train = train.min(n);
        let val = val.min(n - train);
        (train, val, n - train - val)
    }
}

/// Row indices of each part of a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded Fisher-Yates shuffle followed by contiguous slicing. With
/// stratification each class is shuffled and sliced on its own, then each part
/// is shuffled again so classes are interleaved.
pub fn split_indices(bundle: &DatasetBundle, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n = bundle.n();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let groups: Vec<Vec<usize>> = match spec.stratify_by {
        Stratify::None => vec![(0..n).collect()],
        Stratify::Task | Stratify::Sensitive => {
            let labels = if spec.stratify_by == Stratify::Task {
                &bundle.task
            } else {
                &bundle.sensitive
            };
            let mut groups = vec![Vec::new(); labels.num_classes()];
            for (i, &c) in labels.values().iter().enumerate() {
                groups[c].push(i);
            }
            groups
        }
    };

    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let (tr, va, _) = spec.sizes(group.len());
        out.train.extend_from_slice(&group[..tr]);
        out.val.extend_from_slice(&group[tr..tr + va]);
        out.test.extend_from_slice(&group[tr + va..]);
    }
    if spec.stratify_by != Stratify::None {
        out.train.shuffle(&mut rng);
        out.val.shuffle(&mut rng);
        out.test.shuffle(&mut rng);
    }

    if out.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if out.val.is_empty() {
        return Err(Error::EmptySplit("val"));
    }
    if out.test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    Ok(out)
}

/// Splits a bundle into (train, val, test) bundles.
pub fn split(
    bundle: &DatasetBundle,
    spec: &SplitSpec,
) -> Result<(DatasetBundle, DatasetBundle, DatasetBundle)> {
    let idx = split_indices(bundle, spec)?;
    Ok((
        bundle.select(&idx.train),
        bundle.select(&idx.val),
        bundle.select(&idx.test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EmbeddingMatrix, LabelVector};
    use ndarray::Array2;

    fn bundle(n: usize, classes: usize) -> DatasetBundle {
        let emb = EmbeddingMatrix::new(Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64))
            .unwrap();
        let task = LabelVector::new((0..n).map(|i| i % classes).collect(), classes).unwrap();
        let sens = LabelVector::new((0..n).map(|i| (i / 3) % 2).collect(), 2).unwrap();
        DatasetBundle::new(emb, task, sens, None).unwrap()
    }

    #[test]
    fn default_ratios_on_100_rows() {
        let b = bundle(100, 2);
        let idx = split_indices(&b, &SplitSpec::default()).unwrap();
        assert_eq!(
            (idx.train.len(), idx.val.len(), idx.test.len()),
            (70, 10, 20)
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let b = bundle(57, 3);
        let spec = SplitSpec {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(split_indices(&b, &spec).unwrap(), split_indices(&b, &spec).unwrap());
    }

    #[test]
    fn partition_is_exact() {
        let b = bundle(93, 3);
        for stratify_by in [Stratify::None, Stratify::Task, Stratify::Sensitive] {
            let spec = SplitSpec {
                seed: 4,
                stratify_by,
                ..Default::default()
            };
            let idx = split_indices(&b, &spec).unwrap();
            let mut all: Vec<usize> = idx
                .train
                .iter()
                .chain(&idx.val)
                .chain(&idx.test)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..93).collect::<Vec<_>>());
        }
    }

    #[test]
    fn stratified_class_proportions() {
        let b = bundle(1000, 4);
        let spec = SplitSpec {
            seed: 1,
            stratify_by: Stratify::Task,
            ..Default::default()
        };
        let idx = split_indices(&b, &spec).unwrap();
        for part in [&idx.train, &idx.val, &idx.test] {
            let mut counts = [0usize; 4];
            for &i in part.iter() {
                counts[b.task.values()[i]] += 1;
            }
            // Each class should hold a quarter of the part, up to one sample.
            for c in counts {
                let expected = part.len() as f64 / 4.0;
                assert!((c as f64 - expected).abs() <= 1.0, "{counts:?} vs {expected}");
            }
        }
    }

    #[test]
    fn too_small_gives_empty_split() {
        let b = bundle(3, 2);
        assert!(matches!(
            split_indices(&b, &SplitSpec::default()),
            Err(Error::EmptySplit(_))
        ));
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let spec = SplitSpec {
            train_frac: 0.7,
            val_frac: 0.2,
            test_frac: 0.2,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }
}
