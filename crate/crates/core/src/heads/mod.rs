//! Two-layer ReLU probe classifiers: `d_in -> h -> C`.

mod gradcheck;
mod io;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gradcheck::{compare_gradients, grad_check, DEFAULT_GRAD_CHECK_EPSILON};
pub use io::{load_head, save_head};
pub use train::{train_head, LrResult, TrainConfig};

pub const DEFAULT_HIDDEN: usize = 128;

/// What training decided, kept alongside the weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub learning_rate: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub grid: Vec<LrResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub(crate) w1: Array2<f64>,
    pub(crate) b1: Array1<f64>,
    pub(crate) w2: Array2<f64>,
    pub(crate) b2: Array1<f64>,
    pub meta: TrainMeta,
}

/// Parameter-shaped gradient (or update) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Gradients {
    fn zeros_like(head: &MlpHead) -> Self {
        Self {
            w1: Array2::zeros(head.w1.raw_dim()),
            b1: Array1::zeros(head.b1.raw_dim()),
            w2: Array2::zeros(head.w2.raw_dim()),
            b2: Array1::zeros(head.b2.raw_dim()),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }
}

impl MlpHead {
    /// Builds a head from explicit weights.
    pub fn from_weights(
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
    ) -> Result<Self> {
        let h = w1.ncols();
        if b1.len() != h || w2.nrows() != h || b2.len() != w2.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent head shapes: w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                w1.dim(),
                b1.len(),
                w2.dim(),
                b2.len()
            )));
        }
        if w2.ncols() < 2 {
            return Err(Error::Validation("a head needs at least 2 classes".into()));
        }
        let head = Self {
            w1,
            b1,
            w2,
            b2,
            meta: TrainMeta::default(),
        };
        if !head.is_finite() {
            return Err(Error::Validation("head weights must be finite".into()));
        }
        Ok(head)
    }

    /// Kaiming-uniform `w1`, Xavier-uniform `w2`, zero biases.
    pub fn init(d_in: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = (6.0 / d_in as f64).sqrt();
        let x = (6.0 / (hidden + classes) as f64).sqrt();
        let u1 = Uniform::new_inclusive(-k, k).expect("finite bound");
        let u2 = Uniform::new_inclusive(-x, x).expect("finite bound");
        let w1 = Array2::from_shape_simple_fn((d_in, hidden), || u1.sample(&mut rng));
        let w2 = Array2::from_shape_simple_fn((hidden, classes), || u2.sample(&mut rng));
        Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(classes),
            meta: TrainMeta::default(),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.ncols()
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        self.w1.view()
    }

    pub fn b1(&self) -> ArrayView1<'_, f64> {
        self.b1.view()
    }

    pub fn w2(&self) -> ArrayView2<'_, f64> {
        self.w2.view()
    }

    pub fn b2(&self) -> ArrayView1<'_, f64> {
        self.b2.view()
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|x| x.is_finite())
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.d_in() {
            return Err(Error::DimensionMismatch(format!(
                "head expects {} input features, got {}",
                self.d_in(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Hidden pre-activations, hidden activations and logits.
    fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let pre = x.dot(&self.w1) + &self.b1;
        let hidden = pre.mapv(|z| z.max(0.0));
        let logits = hidden.dot(&self.w2) + &self.b2;
        (pre, hidden, logits)
    }

    /// Logits from already-computed hidden pre-activations.
    pub(crate) fn logits_from_pre(&self, mut pre: Array2<f64>) -> Array2<f64> {
        pre.mapv_inplace(|z| z.max(0.0));
        pre.dot(&self.w2) + &self.b2
    }

    /// Pre-softmax outputs, `n x C`.
    pub fn predict_logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x).2)
    }

    /// Predicted class per row: argmax of the logits, lowest index on ties.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(self
            .predict_logits(x)?
            .rows()
            .into_iter()
            .map(|row| argmax(row))
            .collect())
    }

    /// Fraction of rows whose predicted class equals the label.
    pub fn accuracy(&self, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<f64> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::Validation("accuracy of an empty set".into()));
        }
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(y).filter(|(p, t)| p == t).count();
        Ok(hits as f64 / y.len() as f64)
    }

    /// Mean softmax cross-entropy.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<f64> {
        self.check_input(x)?;
        let (_, _, logits) = self.forward(x);
        Ok(mean_cross_entropy(logits.view(), y))
    }

    /// Loss and analytic gradient of the mean cross-entropy.
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        if x.nrows() != y.len() || y.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= self.num_classes()) {
            return Err(Error::LabelOutOfRange {
                row: y.iter().position(|&c| c == bad).unwrap_or(0),
                label: bad as i64,
                num_classes: self.num_classes(),
            });
        }
        let n = x.nrows() as f64;
        let (pre, hidden, logits) = self.forward(x);
        let loss = mean_cross_entropy(logits.view(), y);

        // dL/dlogits = (softmax - onehot) / n
        let mut dlogits = softmax_rows(logits.view());
        for (mut row, &c) in dlogits.rows_mut().into_iter().zip(y) {
            row[c] -= 1.0;
            row.mapv_inplace(|v| v / n);
        }
        let gw2 = hidden.t().dot(&dlogits);
        let gb2 = dlogits.sum_axis(Axis(0));
        let mut dpre = dlogits.dot(&self.w2.t());
        ndarray::Zip::from(&mut dpre)
            .and(&pre)
            .for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
        let gw1 = x.t().dot(&dpre);
        let gb1 = dpre.sum_axis(Axis(0));
        Ok((
            loss,
            Gradients {
                w1: gw1,
                b1: gb1,
                w2: gw2,
                b2: gb2,
            },
        ))
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }
}

pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(row: ArrayView1<'_, f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let lse = log_sum_exp(row.view());
        row.mapv_inplace(|v| (v - lse).exp());
    }
    out
}

pub fn mean_cross_entropy(logits: ArrayView2<'_, f64>, y: &[usize]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &c)| log_sum_exp(row) - row[c])
        .sum();
    total / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use ndarray::array;

    fn random_head(seed: u64, d: usize, h: usize, c: usize) -> MlpHead {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpHead::from_weights(
            gaussian_matrix(&mut rng, d, h),
            gaussian_matrix(&mut rng, 1, h).row(0).to_owned(),
            gaussian_matrix(&mut rng, h, c),
            gaussian_matrix(&mut rng, 1, c).row(0).to_owned(),
        )
        .unwrap()
    }

    /// Straightforward loop implementation of the forward pass.
    fn naive_logits(head: &MlpHead, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = (0..head.hidden())
            .map(|j| {
                let z: f64 = head.b1[j] + (0..head.d_in()).map(|i| x[i] * head.w1[[i, j]]).sum::<f64>();
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            })
            .collect();
        (0..head.num_classes())
            .map(|c| head.b2[c] + (0..head.hidden()).map(|j| h[j] * head.w2[[j, c]]).sum::<f64>())
            .collect()
    }

    #[test]
    fn zero_weights_give_bias() {
        let head = MlpHead::from_weights(
            Array2::zeros((3, 4)),
            Array1::zeros(4),
            Array2::zeros((4, 2)),
            array![0.25, -1.0],
        )
        .unwrap();
        let logits = head.predict_logits(array![[1.0, 2.0, 3.0]].view()).unwrap();
        assert_eq!(logits.row(0).to_vec(), vec![0.25, -1.0]);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let head = random_head(1, 5, 7, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian_matrix(&mut rng, 6, 5);
        let logits = head.predict_logits(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let expected = naive_logits(&head, row.as_slice().unwrap());
            for (a, b) in logits.row(i).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_rows_give_identical_logits() {
        let head = random_head(3, 4, 5, 3);
        let x = Array2::from_shape_fn((5, 4), |(_, j)| j as f64 - 1.5);
        let logits = head.predict_logits(x.view()).unwrap();
        for row in logits.rows() {
            assert_eq!(row, logits.row(0));
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let head = random_head(4, 3, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian_matrix(&mut rng, 10, 3);
        let p = softmax_rows(head.predict_logits(x.view()).unwrap().view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_logits_cost_ln_c() {
        let logits = Array2::zeros((3, 4));
        let ce = mean_cross_entropy(logits.view(), &[0, 3, 2]);
        assert!((ce - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn constant_head_accuracy_on_balanced_labels() {
        let head = MlpHead::from_weights(
            Array2::zeros((2, 3)),
            Array1::zeros(3),
            Array2::zeros((3, 4)),
            Array1::zeros(4),
        )
        .unwrap();
        let x = Array2::zeros((8, 2));
        let acc = head.accuracy(x.view(), &[0, 1, 2, 3, 0, 1, 2, 3]).unwrap();
        assert_eq!(acc, 0.25);
    }

    #[test]
    fn dimension_mismatch() {
        let head = random_head(6, 3, 4, 2);
        assert!(matches!(
            head.predict_logits(Array2::zeros((2, 4)).view()),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            head.accuracy(Array2::zeros((2, 3)).view(), &[0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn init_shapes_and_bounds() {
        let head = MlpHead::init(768, 128, 28, 0);
        assert_eq!((head.d_in(), head.hidden(), head.num_classes()), (768, 128, 28));
        let k = (6.0f64 / 768.0).sqrt();
        assert!(head.w1.iter().all(|x| x.abs() <= k));
        assert!(head.b1.iter().all(|&x| x == 0.0));
    }
}
