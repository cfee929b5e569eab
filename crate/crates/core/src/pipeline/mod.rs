//! Config-driven end-to-end runs with a hashed artifact directory.
//!
//! Stages run in order: `data`, `decompose`, `heads`, `importance`, `rank`,
//! `sweep`, `report`. Each stage has a key hashed from its configuration and
//! the keys of the stages before it; `manifest.json` records the key and the
//! SHA-256 of every file the stage wrote. A stage whose key matches and
//! whose files still hash the same is skipped. Outputs are deterministic, so
//! skipping never changes them.

mod config;
mod report;
mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    load_bundle_dir, save_bundle, split_indices, synth_generate, BundlePaths, DatasetBundle,
    SplitIndices,
};
use crate::decomposition::{load_basis, save_basis, truncated_svd_with};
use crate::error::{Error, Result};
use crate::heads::{load_head, save_head, train_head};
use crate::ranking::{rank_concepts, ranked_table, removal_sweep, RankedConcept, SweepConfig, SweepReport};
use crate::sobol::{co_importance, sample_design, select_eval_rows, ImportanceReport};

pub use config::{
    DecomposeConfig, ImportanceConfig, InputConfig, PipelineConfig, RankingConfig, StageToggles,
    SweepStageConfig, SCHEMA_VERSION,
};
pub use report::{
    accuracy_drop_svg, coimportance_svg, sweep_csv, sweep_json, tradeoff_svg, write_report,
    SWEEP_CSV_HEADER,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STAGES: [&str; 7] = ["data", "decompose", "heads", "importance", "rank", "sweep", "report"];

const DATA_DIR: &str = "data";
const SPLITS_FILE: &str = "data/splits.json";
const SYNTH_META_FILE: &str = "data/synth_meta.json";
const BASIS_DIR: &str = "basis";
const TASK_HEAD_DIR: &str = "heads/task";
const SENSITIVE_HEAD_DIR: &str = "heads/sensitive";
const IMPORTANCE_FILE: &str = "importance/importance.json";
const RANKING_FILE: &str = "ranking/ranking.json";
const SWEEP_FILE: &str = "sweep/sweep_report.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub key: String,
    /// Path relative to the artifact directory -> SHA-256 of its content.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    /// False while stages are still missing or after a failure.
    pub complete: bool,
    pub stages: BTreeMap<String, StageEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            complete: false,
            stages: BTreeMap::new(),
        }
    }
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Stages whose recorded files are missing or no longer hash the same.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.stages
            .iter()
            .filter(|(_, e)| !outputs_intact(dir, e))
            .map(|(s, _)| s.clone())
            .collect()
    }
}

fn outputs_intact(dir: &Path, entry: &StageEntry) -> bool {
    entry
        .outputs
        .iter()
        .all(|(rel, hash)| sha256_file(&dir.join(rel)).is_ok_and(|h| &h == hash))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    hex::encode(Sha256::digest(&bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Relative paths of all files below `rel`, sorted.
fn files_under(root: &Path, rel: &str) -> Result<Vec<String>> {
    let dir = root.join(rel);
    let mut out = Vec::new();
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let child = format!("{rel}/{name}");
        if entry.path().is_dir() {
            out.extend(files_under(root, &child)?);
        } else {
            out.push(child);
        }
    }
    out.sort();
    Ok(out)
}

/// Ranking as written by the `rank` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingFile {
    pub epsilon: f64,
    pub order: Vec<usize>,
    pub table: Vec<RankedConcept>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    dir: PathBuf,
    manifest: Manifest,
    previous: Manifest,
    upstream_key: String,
    summary: RunSummary,
}

impl Runner<'_> {
    fn bundle_dir(&self) -> PathBuf {
        match &self.cfg.input {
            InputConfig::Synthetic { .. } => self.dir.join(DATA_DIR),
            InputConfig::Bundle { dir } => dir.clone(),
        }
    }

    fn bundle(&self) -> Result<DatasetBundle> {
        load_bundle_dir(&self.bundle_dir())
    }

    fn splits(&self) -> Result<SplitIndices> {
        read_json(&self.dir.join(SPLITS_FILE))
    }

    /// Runs `body` unless the manifest shows an intact result for the same
    /// key. `body` returns the relative paths it wrote.
    fn stage<T: Serialize>(
        &mut self,
        name: &str,
        settings: &T,
        body: impl FnOnce(&Self) -> Result<Vec<String>>,
    ) -> Result<()> {
        let key = sha256_json(&(name, settings, &self.upstream_key));
        if let Some(prev) = self.previous.stages.get(name) {
            if prev.key == key && outputs_intact(&self.dir, prev) {
                log::info!("stage {name}: up to date");
                self.manifest.stages.insert(name.into(), prev.clone());
                self.summary.skipped.push(name.into());
                self.upstream_key = key;
                return Ok(());
            }
        }
        log::info!("stage {name}: running");
        self.manifest.stages.remove(name);
        let wrap = |e: Error| match e {
            Error::Stage { .. } => e,
            other => Error::Stage {
                stage: name.into(),
                source: Box::new(other),
            },
        };
        let written = body(self).map_err(wrap)?;
        let mut outputs = BTreeMap::new();
        for rel in written {
            let hash = sha256_file(&self.dir.join(&rel)).map_err(wrap)?;
            outputs.insert(rel, hash);
        }
        self.manifest.stages.insert(name.into(), StageEntry { key: key.clone(), outputs });
        self.manifest.save(&self.dir)?;
        self.summary.executed.push(name.into());
        self.upstream_key = key;
        Ok(())
    }
}

/// Runs every enabled stage of `cfg`, reusing intact results of earlier
/// runs in the same output directory.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let previous = Manifest::load(&dir).unwrap_or_default();
    let mut runner = Runner {
        cfg,
        dir: dir.clone(),
        manifest: Manifest::default(),
        previous,
        upstream_key: String::new(),
        summary: RunSummary {
            output_dir: dir.clone(),
            executed: Vec::new(),
            skipped: Vec::new(),
        },
    };
    let result = run_stages(&mut runner);
    runner.manifest.complete = result.is_ok();
    runner.manifest.save(&dir)?;
    result.map(|()| runner.summary)
}

fn run_stages(runner: &mut Runner<'_>) -> Result<()> {
    let cfg = runner.cfg;

    let input_hashes: BTreeMap<String, String> = match &cfg.input {
        InputConfig::Synthetic { .. } => BTreeMap::new(),
        InputConfig::Bundle { dir } => {
            let p = BundlePaths::in_dir(dir);
            let mut m = BTreeMap::new();
            for path in [p.embeddings, p.task_labels, p.sensitive_labels] {
                m.insert(path.display().to_string(), sha256_file(&path)?);
            }
            m
        }
    };
    runner.stage("data", &(&cfg.input, &cfg.split, &input_hashes), |r| {
        let mut written = Vec::new();
        let bundle = match &cfg.input {
            InputConfig::Synthetic { spec } => {
                let out = synth_generate(spec)?;
                let data = r.dir.join(DATA_DIR);
                std::fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))?;
                save_bundle(&out.bundle, &data)?;
                out.meta.save(&r.dir.join(SYNTH_META_FILE))?;
                written.extend(files_under(&r.dir, DATA_DIR)?);
                written.retain(|f| f != SPLITS_FILE);
                out.bundle
            }
            InputConfig::Bundle { .. } => r.bundle()?,
        };
        let splits = split_indices(&bundle, &cfg.split)?;
        write_json(&r.dir.join(SPLITS_FILE), &splits)?;
        written.push(SPLITS_FILE.into());
        written.sort();
        Ok(written)
    })?;

    runner.stage("decompose", &cfg.decompose, |r| {
        let bundle = r.bundle()?;
        let basis = truncated_svd_with(&bundle.embeddings, cfg.decompose.r, cfg.decompose.seed, &cfg.decompose.svd)?;
        if basis.r() < cfg.decompose.r {
            return Err(Error::Validation(format!(
                "the embeddings have numerical rank {}, below r = {}",
                basis.r(),
                cfg.decompose.r
            )));
        }
        save_basis(&basis, &r.dir.join(BASIS_DIR))?;
        files_under(&r.dir, BASIS_DIR)
    })?;

    if !cfg.stages.importance {
        return Ok(());
    }
    runner.stage("heads", &cfg.train, |r| {
        let bundle = r.bundle()?;
        let splits = r.splits()?;
        let x = bundle.embeddings.as_array();
        let rows = |idx: &[usize]| x.select(ndarray::Axis(0), idx);
        let (x_train, x_val) = (rows(&splits.train), rows(&splits.val));
        for (labels, rel) in [(&bundle.task, TASK_HEAD_DIR), (&bundle.sensitive, SENSITIVE_HEAD_DIR)] {
            let pick = |idx: &[usize]| idx.iter().map(|&i| labels.values()[i]).collect::<Vec<_>>();
            let head = train_head(
                x_train.view(),
                &pick(&splits.train),
                x_val.view(),
                &pick(&splits.val),
                labels.num_classes(),
                &cfg.train,
            )?;
            save_head(&head, &r.dir.join(rel))?;
        }
        files_under(&r.dir, "heads")
    })?;

    runner.stage("importance", &cfg.importance, |r| {
        let bundle = r.bundle()?;
        let splits = r.splits()?;
        let basis = load_basis(&r.dir.join(BASIS_DIR))?;
        let task_head = load_head(&r.dir.join(TASK_HEAD_DIR))?;
        let sens_head = load_head(&r.dir.join(SENSITIVE_HEAD_DIR))?;
        let val_task = bundle.task.select(&splits.val);
        let eval_rows: Vec<usize> = select_eval_rows(val_task.values(), cfg.importance.eval_rows, cfg.importance.seed)
            .into_iter()
            .map(|i| splits.val[i])
            .collect();
        let design_params = cfg.importance.design();
        let design = sample_design(basis.r(), &design_params)?;
        let concepts = co_importance(&basis, &task_head, &sens_head, &eval_rows, &design)?;
        let report = ImportanceReport {
            r: basis.r(),
            design: design_params,
            eval_rows,
            concepts,
        };
        let path = r.dir.join(IMPORTANCE_FILE);
        ensure_parent(&path)?;
        report.save(&path)?;
        Ok(vec![IMPORTANCE_FILE.into()])
    })?;

    runner.stage("rank", &cfg.ranking, |r| {
        let imp = ImportanceReport::load(&r.dir.join(IMPORTANCE_FILE))?;
        let order = rank_concepts(&imp.concepts, cfg.ranking.epsilon)?;
        let table = ranked_table(&imp.concepts, cfg.ranking.epsilon)?;
        write_json(
            &r.dir.join(RANKING_FILE),
            &RankingFile {
                epsilon: cfg.ranking.epsilon,
                order,
                table,
            },
        )?;
        Ok(vec![RANKING_FILE.into()])
    })?;

    if !cfg.stages.sweep {
        return Ok(());
    }
    let ks = cfg.ks();
    runner.stage("sweep", &(&cfg.sweep, &ks), |r| {
        let bundle = r.bundle()?;
        let splits = r.splits()?;
        let basis = load_basis(&r.dir.join(BASIS_DIR))?;
        let ranking: RankingFile = read_json(&r.dir.join(RANKING_FILE))?;
        let sweep_cfg = SweepConfig {
            train: cfg.train.clone(),
            regime_threshold: cfg.sweep.regime_threshold,
        };
        let extra = serde_json::json!({
            "split": cfg.split,
            "importance": cfg.importance,
            "ranking_epsilon": cfg.ranking.epsilon,
        });
        let path = r.dir.join(SWEEP_FILE);
        match removal_sweep(&bundle, &splits, &basis, &ranking.order, &ks, &sweep_cfg) {
            Ok(mut report) => {
                report.echo.extra = extra;
                write_json(&path, &report)?;
                Ok(vec![SWEEP_FILE.into()])
            }
            Err(Error::SweepAborted { k, mut partial, source }) => {
                partial.echo.extra = extra;
                write_json(&path, &partial)?;
                Err(Error::SweepAborted { k, partial, source })
            }
            Err(e) => Err(e),
        }
    })?;

    if !cfg.stages.report {
        return Ok(());
    }
    runner.stage("report", &(), |r| {
        let written = emit_report(&r.dir)?;
        Ok(written
            .iter()
            .filter_map(|p| p.strip_prefix(&r.dir).ok())
            .map(|p| p.to_string_lossy().into_owned())
            .collect())
    })?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(parent) => std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e)),
        None => Ok(()),
    }
}

/// Writes the report files of a completed sweep into the artifact
/// directory itself.
pub fn emit_report(artifact_dir: &Path) -> Result<Vec<PathBuf>> {
    let sweep_path = artifact_dir.join(SWEEP_FILE);
    if !sweep_path.exists() {
        return Err(Error::MissingStage("sweep".into()));
    }
    let report: SweepReport = read_json(&sweep_path)?;
    let importance_path = artifact_dir.join(IMPORTANCE_FILE);
    let pairs = if importance_path.exists() {
        Some(ImportanceReport::load(&importance_path)?.concepts)
    } else {
        None
    };
    write_report(artifact_dir, &report, pairs.as_deref())
}
