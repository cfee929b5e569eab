//! Basis directories: `U.emb1`, `W.emb1`, `V.emb1` and `meta.json`.

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{ConceptBasis, SvdMethod};
use crate::data::{read_emb1, write_emb1};
use crate::error::{Error, Result};

/// Tag recorded in `meta.json` for the sign normalization of `V`.
pub const SIGN_CONVENTION: &str = "max_abs_v_entry_positive";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMeta {
    pub r: usize,
    pub d: usize,
    pub n: usize,
    pub singular_values: Vec<f64>,
    pub seed: u64,
    pub sign_convention: String,
    pub method: SvdMethod,
}

pub fn save_basis(basis: &ConceptBasis, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_emb1(&dir.join("U.emb1"), basis.u())?;
    write_emb1(&dir.join("W.emb1"), basis.w())?;
    write_emb1(&dir.join("V.emb1"), basis.v())?;
    let meta = BasisMeta {
        r: basis.r(),
        d: basis.d(),
        n: basis.n(),
        singular_values: basis.singular_values().to_vec(),
        seed: basis.seed(),
        sign_convention: SIGN_CONVENTION.to_string(),
        method: basis.method(),
    };
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_basis(dir: &Path) -> Result<ConceptBasis> {
    let path = dir.join("meta.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: BasisMeta = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let u = read_emb1(&dir.join("U.emb1"))?.into_array();
    let v = read_emb1(&dir.join("V.emb1"))?.into_array();
    if u.dim() != (meta.n, meta.r) || v.dim() != (meta.d, meta.r) || meta.singular_values.len() != meta.r
    {
        return Err(Error::DimensionMismatch(format!(
            "basis files in {} disagree with meta.json (n={}, d={}, r={})",
            dir.display(),
            meta.n,
            meta.d,
            meta.r
        )));
    }
    let basis = ConceptBasis::from_parts(
        u,
        Array1::from(meta.singular_values),
        v,
        meta.seed,
        meta.method,
    )?;
    let w = read_emb1(&dir.join("W.emb1"))?.into_array();
    if w != basis.w {
        return Err(Error::Validation(format!(
            "W.emb1 in {} is not diag(σ) Vᵀ",
            dir.display()
        )));
    }
    Ok(basis)
}
