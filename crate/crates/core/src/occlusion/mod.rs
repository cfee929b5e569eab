//! Token-level explanation of a concept by occlusion: each unit of a
//! document is deleted, the variant is re-embedded upstream, and the drop in
//! the concept coefficient is the unit's score.

mod html;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{read_emb1, write_emb1};
use crate::decomposition::ConceptBasis;
use crate::error::{Error, Result};

pub use html::render_html;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Word,
    Clause,
}

/// Half-open token range `[start, end)`.
pub type Span = (usize, usize);

/// A document, its embedding and one embedding per occluded unit.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionSet {
    pub document_id: String,
    pub tokens: Vec<String>,
    pub granularity: Granularity,
    pub unit_spans: Vec<Span>,
    pub base_embedding: Array1<f64>,
    /// One row per unit, in `unit_spans` order.
    pub variant_embeddings: Array2<f64>,
}

impl OcclusionSet {
    pub fn validate(&self) -> Result<()> {
        if self.variant_embeddings.nrows() != self.unit_spans.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} variant embeddings for {} units",
                self.variant_embeddings.nrows(),
                self.unit_spans.len()
            )));
        }
        if self.variant_embeddings.ncols() != self.base_embedding.len() {
            return Err(Error::DimensionMismatch(format!(
                "variants have dimension {}, base has {}",
                self.variant_embeddings.ncols(),
                self.base_embedding.len()
            )));
        }
        for &(start, end) in &self.unit_spans {
            if start >= end || end > self.tokens.len() {
                return Err(Error::Validation(format!(
                    "unit span [{start}, {end}) is empty or outside {} tokens",
                    self.tokens.len()
                )));
            }
        }
        if let Some(pos) = self
            .base_embedding
            .iter()
            .chain(self.variant_embeddings.iter())
            .position(|x| !x.is_finite())
        {
            let d = self.base_embedding.len().max(1);
            return Err(Error::NonFiniteValue {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(())
    }

    pub fn unit_text(&self, unit: usize) -> String {
        let (start, end) = self.unit_spans[unit];
        self.tokens[start..end].join(" ")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct OcclusionMeta {
    document_id: String,
    tokens: Vec<String>,
    granularity: Granularity,
    unit_spans: Vec<Span>,
    /// EMB1 file next to the JSON; row 0 is the base embedding.
    embeddings: String,
}

fn blob_path(json: &Path) -> PathBuf {
    json.with_extension("emb1")
}

/// Writes `path` (JSON meta) and the stacked embeddings next to it with an
/// `.emb1` extension.
pub fn save_occlusion_set(set: &OcclusionSet, path: &Path) -> Result<()> {
    set.validate()?;
    let blob = blob_path(path);
    let mut stacked = Array2::zeros((set.unit_spans.len() + 1, set.base_embedding.len()));
    stacked.row_mut(0).assign(&set.base_embedding);
    stacked.slice_mut(ndarray::s![1.., ..]).assign(&set.variant_embeddings);
    write_emb1(&blob, stacked.view())?;
    let meta = OcclusionMeta {
        document_id: set.document_id.clone(),
        tokens: set.tokens.clone(),
        granularity: set.granularity,
        unit_spans: set.unit_spans.clone(),
        embeddings: blob
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_occlusion_set(path: &Path) -> Result<OcclusionSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: OcclusionMeta = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let blob = path.parent().unwrap_or(Path::new(".")).join(&meta.embeddings);
    let stacked = read_emb1(&blob)?.into_array();
    if stacked.nrows() != meta.unit_spans.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {} rows, expected base plus {} variants",
            blob.display(),
            stacked.nrows(),
            meta.unit_spans.len()
        )));
    }
    let set = OcclusionSet {
        document_id: meta.document_id,
        tokens: meta.tokens,
        granularity: meta.granularity,
        unit_spans: meta.unit_spans,
        base_embedding: stacked.row(0).to_owned(),
        variant_embeddings: stacked.slice(ndarray::s![1.., ..]).to_owned(),
    };
    set.validate()?;
    Ok(set)
}

/// One unit per token.
pub fn word_spans(tokens: &[String]) -> Vec<Span> {
    (0..tokens.len()).map(|i| (i, i + 1)).collect()
}

/// Where clauses break: after a token ending in one of `punctuation`, and
/// before a token equal (case-insensitively) to one of `conjunctions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClauseRules {
    pub punctuation: Vec<char>,
    pub conjunctions: Vec<String>,
}

impl Default for ClauseRules {
    fn default() -> Self {
        Self {
            punctuation: vec![',', ';', ':', '.', '!', '?'],
            conjunctions: ["and", "but", "or", "nor", "so", "yet"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

pub fn clause_spans(tokens: &[String], rules: &ClauseRules) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        let lower = tok.to_lowercase();
        if i > start && rules.conjunctions.contains(&lower) {
            spans.push((start, i));
            start = i;
        }
        if tok.ends_with(rules.punctuation.as_slice()) {
            spans.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        spans.push((start, tokens.len()));
    }
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    /// Scores divided by the largest magnitude (left as is when all are 0).
    MaxAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenImportance {
    pub concept_index: usize,
    pub normalization: Normalization,
    /// One score per unit; positive when the unit supports the concept.
    pub scores: Vec<f64>,
}

impl TokenImportance {
    /// Unit indices by decreasing score, lower index first on ties.
    pub fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order
    }

    pub fn normalized(&self, normalization: Normalization) -> TokenImportance {
        let mut scores = self.scores.clone();
        if normalization == Normalization::MaxAbs {
            let max = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            if max > 0.0 {
                scores.iter_mut().for_each(|s| *s /= max);
            }
        }
        TokenImportance {
            concept_index: self.concept_index,
            normalization,
            scores,
        }
    }
}

/// Score of unit `t`: coefficient of `concept` for the base embedding minus
/// the coefficient for variant `t`.
pub fn occlusion_importance(
    set: &OcclusionSet,
    basis: &ConceptBasis,
    concept: usize,
    normalization: Normalization,
) -> Result<TokenImportance> {
    set.validate()?;
    if concept >= basis.r() {
        return Err(Error::IndexOutOfRange {
            index: concept,
            len: basis.r(),
        });
    }
    let base = basis.project(set.base_embedding.view())?[concept];
    let variants = basis.project_rows(set.variant_embeddings.view())?;
    let scores = variants
        .index_axis(Axis(1), concept)
        .iter()
        .map(|v| base - v)
        .collect();
    Ok(TokenImportance {
        concept_index: concept,
        normalization: Normalization::Raw,
        scores,
    }
    .normalized(normalization))
}

/// Mean score of each distinct unit text (lowercased) over many documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusUnit {
    pub text: String,
    pub mean_score: f64,
    pub occurrences: usize,
}

/// Averages per-document scores by unit text; sorted by decreasing mean,
/// then text.
pub fn corpus_mean(documents: &[(&OcclusionSet, &TokenImportance)]) -> Vec<CorpusUnit> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (set, imp) in documents {
        for (unit, &score) in imp.scores.iter().enumerate() {
            let e = acc.entry(set.unit_text(unit).to_lowercase()).or_insert((0.0, 0));
            e.0 += score;
            e.1 += 1;
        }
    }
    let mut out: Vec<CorpusUnit> = acc
        .into_iter()
        .map(|(text, (sum, n))| CorpusUnit {
            text,
            mean_score: sum / n as f64,
            occurrences: n,
        })
        .collect();
    out.sort_by(|a, b| b.mean_score.total_cmp(&a.mean_score).then(a.text.cmp(&b.text)));
    out
}

/// Serialized explanation of one document, as written by `explain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedUnit {
    pub rank: usize,
    pub unit: usize,
    pub span: Span,
    pub text: String,
    pub score: f64,
}

pub fn explain_units(set: &OcclusionSet, importance: &TokenImportance) -> Vec<ExplainedUnit> {
    importance
        .ranked()
        .into_iter()
        .enumerate()
        .map(|(rank, unit)| ExplainedUnit {
            rank: rank + 1,
            unit,
            span: set.unit_spans[unit],
            text: set.unit_text(unit),
            score: importance.scores[unit],
        })
        .collect()
}
