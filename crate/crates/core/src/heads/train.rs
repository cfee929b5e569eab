use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, MlpHead, TrainMeta, DEFAULT_HIDDEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_grid: Vec<f64>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_grid: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            max_epochs: 50,
            batch_size: 256,
            hidden: DEFAULT_HIDDEN,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::InvalidSpec(
                "lr_grid must be a non-empty list of positive rates".into(),
            ));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::InvalidSpec(
                "max_epochs, batch_size and hidden must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidSpec("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Outcome of one learning rate of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrResult {
    pub learning_rate: f64,
    pub val_accuracy: f64,
    pub epochs_run: usize,
    pub diverged: bool,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(head: &MlpHead, cfg: &TrainConfig) -> Self {
        Self {
            m: Gradients::zeros_like(head),
            v: Gradients::zeros_like(head),
            step: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        }
    }

    fn update(&mut self, head: &mut MlpHead, grads: &Gradients, lr: f64) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((p, g), m), v) in head
            .params_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Labelled data seen by one training run.
pub(crate) struct Split<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [usize],
}

pub(crate) struct FitOutcome {
    pub head: MlpHead,
    pub val_accuracy: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

/// Trains one head at a fixed learning rate. `order` yields the row visiting
/// order for each epoch. Returns `None` when the loss or weights stop being
/// finite.
pub(crate) fn fit_at_rate(
    init: MlpHead,
    train: &Split<'_>,
    val: &Split<'_>,
    cfg: &TrainConfig,
    lr: f64,
    order: &mut dyn FnMut(usize) -> Vec<usize>,
) -> Result<Option<FitOutcome>> {
    let mut head = init;
    let mut adam = Adam::new(&head, cfg);
    let mut best = head.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs_run = 0;

    for epoch in 0..cfg.max_epochs {
        let idx = order(epoch);
        for batch in idx.chunks(cfg.batch_size) {
            let xb = train.x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| train.y[i]).collect();
            let (loss, grads) = head.loss_and_gradients(xb.view(), &yb)?;
            if !loss.is_finite() {
                return Ok(None);
            }
            adam.update(&mut head, &grads, lr);
        }
        epochs_run = epoch + 1;
        if !head.is_finite() {
            return Ok(None);
        }
        let acc = head.accuracy(val.x, val.y)?;
        if acc > best_acc {
            best_acc = acc;
            best = head.clone();
            best_epoch = epochs_run;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(Some(FitOutcome {
        head: best,
        val_accuracy: best_acc,
        epochs_run,
        best_epoch,
    }))
}

/// Trains one head per learning rate in the grid and keeps the one with the
/// best validation accuracy (earliest rate on ties). Every rate starts from
/// the same seeded initialization and the same shuffle stream.
pub fn train_head(
    x_train: ArrayView2<'_, f64>,
    y_train: &[usize],
    x_val: ArrayView2<'_, f64>,
    y_val: &[usize],
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<MlpHead> {
    cfg.validate()?;
    if x_train.nrows() != y_train.len() || x_val.nrows() != y_val.len() {
        return Err(Error::DimensionMismatch(format!(
            "train {} rows / {} labels, val {} rows / {} labels",
            x_train.nrows(),
            y_train.len(),
            x_val.nrows(),
            y_val.len()
        )));
    }
    if x_train.ncols() != x_val.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "train has {} features, val has {}",
            x_train.ncols(),
            x_val.ncols()
        )));
    }
    if y_train.is_empty() || y_val.is_empty() {
        return Err(Error::Validation("training and validation sets must be non-empty".into()));
    }
    if num_classes < 2 {
        return Err(Error::Validation("a head needs at least 2 classes".into()));
    }
    if let Some((row, &label)) = y_train
        .iter()
        .chain(y_val)
        .enumerate()
        .find(|(_, &c)| c >= num_classes)
    {
        return Err(Error::LabelOutOfRange {
            row,
            label: label as i64,
            num_classes,
        });
    }

    let train = Split {
        x: x_train,
        y: y_train,
    };
    let val = Split { x: x_val, y: y_val };
    let n = y_train.len();
    let mut winner: Option<FitOutcome> = None;
    let mut winner_lr = 0.0;
    let mut grid = Vec::with_capacity(cfg.lr_grid.len());

    for &lr in &cfg.lr_grid {
        let init = MlpHead::init(x_train.ncols(), cfg.hidden, num_classes, cfg.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut order = |_epoch: usize| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        };
        match fit_at_rate(init, &train, &val, cfg, lr, &mut order)? {
            Some(outcome) => {
                grid.push(LrResult {
                    learning_rate: lr,
                    val_accuracy: outcome.val_accuracy,
                    epochs_run: outcome.epochs_run,
                    diverged: false,
                });
                if winner
                    .as_ref()
                    .is_none_or(|w| outcome.val_accuracy > w.val_accuracy)
                {
                    winner = Some(outcome);
                    winner_lr = lr;
                }
            }
            None => {
                log::warn!("training diverged at learning rate {lr}; skipping it");
                grid.push(LrResult {
                    learning_rate: lr,
                    val_accuracy: f64::NAN,
                    epochs_run: 0,
                    diverged: true,
                });
            }
        }
    }

    let outcome = winner.ok_or(Error::DivergenceDetected)?;
    let mut head = outcome.head;
    head.meta = TrainMeta {
        learning_rate: winner_lr,
        epochs_run: outcome.epochs_run,
        best_epoch: outcome.best_epoch,
        val_accuracy: outcome.val_accuracy,
        grid,
    };
    Ok(head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -3.0 } else { 3.0 };
            x[[i, 0]] = centre + rng.sample::<f64, _>(StandardNormal) * 0.5;
            x[[i, 1]] = centre + rng.sample::<f64, _>(StandardNormal) * 0.5;
            y.push(c);
        }
        (x, y)
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            lr_grid: vec![1e-3, 1e-2],
            max_epochs: 30,
            batch_size: 32,
            hidden: 16,
            ..Default::default()
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(400, 1);
        let (xv, yv) = blobs(100, 2);
        let (xt, yt) = blobs(200, 3);
        let head = train_head(x.view(), &y, xv.view(), &yv, 2, &quick_cfg()).unwrap();
        assert!(head.accuracy(xt.view(), &yt).unwrap() >= 0.99);
        assert_eq!(head.meta.grid.len(), 2);
    }

    #[test]
    fn shuffled_labels_give_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, _) = blobs(1000, 4);
        let (xt, _) = blobs(4000, 5);
        let mut y: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        y.shuffle(&mut rng);
        let mut yt: Vec<usize> = (0..4000).map(|i| i % 2).collect();
        yt.shuffle(&mut rng);
        let head = train_head(
            x.slice(ndarray::s![..800, ..]),
            &y[..800],
            x.slice(ndarray::s![800.., ..]),
            &y[800..],
            2,
            &quick_cfg(),
        )
        .unwrap();
        let acc = head.accuracy(xt.view(), &yt).unwrap();
        assert!((acc - 0.5).abs() <= 0.03, "accuracy {acc}");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (x, y) = blobs(200, 6);
        let (xv, yv) = blobs(50, 7);
        let a = train_head(x.view(), &y, xv.view(), &yv, 2, &quick_cfg()).unwrap();
        let b = train_head(x.view(), &y, xv.view(), &yv, 2, &quick_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permuted_rows_with_matching_order_train_identically() {
        let (x, y) = blobs(120, 8);
        let (xv, yv) = blobs(40, 9);
        let cfg = quick_cfg();
        let val = Split { x: xv.view(), y: &yv };

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut perm: Vec<usize> = (0..120).collect();
        perm.shuffle(&mut rng);
        let mut inverse = vec![0; 120];
        for (j, &i) in perm.iter().enumerate() {
            inverse[i] = j;
        }
        let xp = x.select(Axis(0), &perm);
        let yp: Vec<usize> = perm.iter().map(|&i| y[i]).collect();

        let orders: Vec<Vec<usize>> = (0..cfg.max_epochs)
            .map(|_| {
                let mut idx: Vec<usize> = (0..120).collect();
                idx.shuffle(&mut rng);
                idx
            })
            .collect();
        let init = MlpHead::init(2, cfg.hidden, 2, 3);

        let a = fit_at_rate(
            init.clone(),
            &Split { x: x.view(), y: &y },
            &val,
            &cfg,
            1e-2,
            &mut |e| orders[e].clone(),
        )
        .unwrap()
        .unwrap();
        let b = fit_at_rate(
            init,
            &Split { x: xp.view(), y: &yp },
            &val,
            &cfg,
            1e-2,
            &mut |e| orders[e].iter().map(|&i| inverse[i]).collect(),
        )
        .unwrap()
        .unwrap();
        assert_eq!(a.head, b.head);
    }

    #[test]
    fn all_rates_diverging_is_an_error() {
        let (x, y) = blobs(50, 11);
        let mut x = x;
        x[[0, 0]] = f64::INFINITY;
        let cfg = TrainConfig {
            lr_grid: vec![1.0],
            ..quick_cfg()
        };
        assert!(matches!(
            train_head(x.view(), &y, x.view(), &y, 2, &cfg),
            Err(Error::DivergenceDetected)
        ));
    }

    #[test]
    fn shape_errors() {
        let (x, y) = blobs(20, 12);
        assert!(matches!(
            train_head(x.view(), &y[..10], x.view(), &y, 2, &quick_cfg()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
