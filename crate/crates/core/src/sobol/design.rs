//! Mask designs: two independent `N x r` blocks of points in `[0, 1)`.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sobol::params::JoeKuoD6;
use sobol::Sobol;

use crate::error::{Error, Result};

/// Dimensions covered by the standard direction-number table.
const STANDARD_MAX_DIMS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskGenerator {
    /// Sobol sequence with Joe-Kuo direction numbers; `N` must be a power of two.
    SobolSequence,
    /// One point per stratum `[j/N, (j+1)/N)` in every column, strata
    /// permuted independently per column.
    StratifiedUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignParams {
    pub n: usize,
    pub generator: MaskGenerator,
    /// Random digital shift of the Sobol points. Ignored by the stratified
    /// generator.
    pub scramble: bool,
    pub seed: u64,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            n: 1024,
            generator: MaskGenerator::SobolSequence,
            scramble: true,
            seed: 0,
        }
    }
}

/// Base samples `A` and `B` for the pick-freeze estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDesign {
    pub params: DesignParams,
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl MaskDesign {
    pub fn r(&self) -> usize {
        self.a.ncols()
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `A` with column `i` taken from `B`.
    pub fn hybrid(&self, i: usize) -> Array2<f64> {
        let mut m = self.a.clone();
        m.column_mut(i).assign(&self.b.column(i));
        m
    }

    /// `A`, `B`, then the `r` hybrids, stacked into one `(r + 2) N x r` matrix.
    pub fn stacked(&self) -> Array2<f64> {
        let (n, r) = (self.n(), self.r());
        let mut out = Array2::zeros(((r + 2) * n, r));
        out.slice_mut(ndarray::s![..n, ..]).assign(&self.a);
        out.slice_mut(ndarray::s![n..2 * n, ..]).assign(&self.b);
        for i in 0..r {
            let mut block = out.slice_mut(ndarray::s![(2 + i) * n..(3 + i) * n, ..]);
            block.assign(&self.a);
            block.column_mut(i).assign(&self.b.column(i));
        }
        out
    }
}

pub fn sample_design(r: usize, params: &DesignParams) -> Result<MaskDesign> {
    let n = params.n;
    if r == 0 {
        return Err(Error::InvalidSpec("a mask design needs r >= 1".into()));
    }
    let (a, b) = match params.generator {
        MaskGenerator::SobolSequence => {
            if !n.is_power_of_two() {
                return Err(Error::InvalidN(n));
            }
            let points = sobol_points(2 * r, n, params.scramble, params.seed);
            (
                points.slice(ndarray::s![.., ..r]).to_owned(),
                points.slice(ndarray::s![.., r..]).to_owned(),
            )
        }
        MaskGenerator::StratifiedUniform => {
            if n == 0 {
                return Err(Error::InvalidN(n));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let a = stratified(&mut rng, n, r);
            let b = stratified(&mut rng, n, r);
            (a, b)
        }
    };
    Ok(MaskDesign {
        params: params.clone(),
        a,
        b,
    })
}

/// `n` points of the `dims`-dimensional Sobol sequence. Without scrambling
/// the origin is skipped; with scrambling every coordinate is XORed with a
/// seeded 64-bit shift and the first `n` points (a shifted net) are kept.
pub fn sobol_points(dims: usize, n: usize, scramble: bool, seed: u64) -> Array2<f64> {
    let params = if dims <= STANDARD_MAX_DIMS {
        JoeKuoD6::standard()
    } else {
        JoeKuoD6::extended()
    };
    let shifts: Vec<u64> = if scramble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..dims).map(|_| rng.random()).collect()
    } else {
        vec![0; dims]
    };
    let skip = usize::from(!scramble);
    let seq = Sobol::<u64>::new(dims, &params);
    let mut out = Array2::zeros((n, dims));
    for (row, point) in seq.skip(skip).take(n).enumerate() {
        for (j, (&x, &shift)) in point.iter().zip(&shifts).enumerate() {
            out[[row, j]] = to_unit((x ^ shift) >> 11);
        }
    }
    out
}

fn to_unit(bits53: u64) -> f64 {
    bits53 as f64 / (1u64 << 53) as f64
}

fn stratified(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, r));
    for j in 0..r {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            let jitter: f64 = rng.random();
            out[[i, j]] = (s as f64 + jitter) / n as f64;
        }
    }
    out
}
