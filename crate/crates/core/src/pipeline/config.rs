use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{read_emb1_header, BundlePaths, SplitSpec, SynthSpec};
use crate::decomposition::{SvdOptions, DEFAULT_RANK};
use crate::error::{Error, Result};
use crate::heads::TrainConfig;
use crate::ranking::DEFAULT_EPSILON;
use crate::sobol::{DesignParams, MaskGenerator, DEFAULT_EVAL_ROWS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputConfig {
    /// Generate a planted-bias dataset.
    Synthetic { spec: SynthSpec },
    /// A directory holding `embeddings.emb1`, `task.csv` and `sensitive.csv`.
    Bundle { dir: PathBuf },
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig::Synthetic {
            spec: SynthSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    pub r: usize,
    pub seed: u64,
    pub svd: SvdOptions,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            r: DEFAULT_RANK,
            seed: 0,
            svd: SvdOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub n: usize,
    pub eval_rows: usize,
    pub generator: MaskGenerator,
    pub scramble: bool,
    pub seed: u64,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        let d = DesignParams::default();
        Self {
            n: d.n,
            eval_rows: DEFAULT_EVAL_ROWS,
            generator: d.generator,
            scramble: d.scramble,
            seed: d.seed,
        }
    }
}

impl ImportanceConfig {
    pub fn design(&self) -> DesignParams {
        DesignParams {
            n: self.n,
            generator: self.generator,
            scramble: self.scramble,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingConfig {
    pub epsilon: f64,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepStageConfig {
    /// Removal counts; empty means `0..r`.
    pub ks: Vec<usize>,
    pub regime_threshold: f64,
}

impl Default for SweepStageConfig {
    fn default() -> Self {
        Self {
            ks: Vec::new(),
            regime_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageToggles {
    pub importance: bool,
    pub sweep: bool,
    pub report: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            importance: true,
            sweep: true,
            report: true,
        }
    }
}

/// Everything a pipeline run depends on. Relative paths are taken relative
/// to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub input: InputConfig,
    pub output_dir: PathBuf,
    pub split: SplitSpec,
    pub decompose: DecomposeConfig,
    pub train: TrainConfig,
    pub importance: ImportanceConfig,
    pub ranking: RankingConfig,
    pub sweep: SweepStageConfig,
    pub stages: StageToggles,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            input: InputConfig::default(),
            output_dir: PathBuf::from("run"),
            split: SplitSpec::default(),
            decompose: DecomposeConfig::default(),
            train: TrainConfig::default(),
            importance: ImportanceConfig::default(),
            ranking: RankingConfig::default(),
            sweep: SweepStageConfig::default(),
            stages: StageToggles::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidSpec(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Replaces every seed of the run with `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        if let InputConfig::Synthetic { spec } = &mut self.input {
            spec.seed = seed;
        }
        self.split.seed = seed;
        self.decompose.seed = seed;
        self.train.seed = seed;
        self.importance.seed = seed;
    }

    /// Removal counts with the empty default expanded to `0..r`.
    pub fn ks(&self) -> Vec<usize> {
        if self.sweep.ks.is_empty() {
            (0..self.decompose.r).collect()
        } else {
            self.sweep.ks.clone()
        }
    }

    /// `(n, d)` of the input, without generating or loading it.
    pub fn input_shape(&self) -> Result<(usize, usize)> {
        match &self.input {
            InputConfig::Synthetic { spec } => Ok((spec.n, spec.d)),
            InputConfig::Bundle { dir } => {
                let paths = BundlePaths::in_dir(dir);
                for p in [&paths.embeddings, &paths.task_labels, &paths.sensitive_labels] {
                    if !p.exists() {
                        return Err(Error::Validation(format!("input file {} does not exist", p.display())));
                    }
                }
                read_emb1_header(&paths.embeddings)
            }
        }
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<()> {
        if let InputConfig::Synthetic { spec } = &self.input {
            spec.validate()?;
        }
        let (n, d) = self.input_shape()?;
        let r = self.decompose.r;
        if r == 0 || r > n.min(d) {
            return Err(Error::RankTooLarge {
                requested: r,
                max: n.min(d),
            });
        }
        self.split.validate()?;
        self.train.validate()?;
        if self.importance.eval_rows == 0 {
            return Err(Error::InvalidSpec("importance.eval_rows must be positive".into()));
        }
        if self.importance.generator == MaskGenerator::SobolSequence && !self.importance.n.is_power_of_two() {
            return Err(Error::InvalidN(self.importance.n));
        }
        if self.importance.n == 0 {
            return Err(Error::InvalidN(0));
        }
        if !(self.ranking.epsilon > 0.0) {
            return Err(Error::InvalidSpec("ranking.epsilon must be positive".into()));
        }
        let ks = self.ks();
        if ks.first() != Some(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec(
                "sweep.ks must start at 0 and be strictly increasing".into(),
            ));
        }
        if let Some(&k) = ks.last().filter(|&&k| k >= r) {
            return Err(Error::InvalidSpec(format!("sweep.ks contains {k}, which is not below r = {r}")));
        }
        if self.stages.sweep && !self.stages.importance {
            return Err(Error::InvalidSpec("the sweep stage needs the importance stage".into()));
        }
        if self.stages.report && !self.stages.sweep {
            return Err(Error::InvalidSpec("the report stage needs the sweep stage".into()));
        }
        Ok(())
    }
}
