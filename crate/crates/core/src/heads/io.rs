//! Head directories: `meta.json` plus EMB1 blobs for each weight tensor.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{MlpHead, TrainMeta};
use crate::data::{read_emb1, write_emb1};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct HeadMeta {
    d_in: usize,
    hidden: usize,
    num_classes: usize,
    train: TrainMeta,
}

pub fn save_head(head: &MlpHead, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_emb1(&dir.join("w1.emb1"), head.w1.view())?;
    write_emb1(&dir.join("b1.emb1"), head.b1.view().insert_axis(ndarray::Axis(0)))?;
    write_emb1(&dir.join("w2.emb1"), head.w2.view())?;
    write_emb1(&dir.join("b2.emb1"), head.b2.view().insert_axis(ndarray::Axis(0)))?;
    let meta = HeadMeta {
        d_in: head.d_in(),
        hidden: head.hidden(),
        num_classes: head.num_classes(),
        train: head.meta.clone(),
    };
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn row(path: &Path) -> Result<Array1<f64>> {
    let m: Array2<f64> = read_emb1(path)?.into_array();
    if m.nrows() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} should hold a single row",
            path.display()
        )));
    }
    Ok(m.row(0).to_owned())
}

pub fn load_head(dir: &Path) -> Result<MlpHead> {
    let path = dir.join("meta.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: HeadMeta = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let mut head = MlpHead::from_weights(
        read_emb1(&dir.join("w1.emb1"))?.into_array(),
        row(&dir.join("b1.emb1"))?,
        read_emb1(&dir.join("w2.emb1"))?.into_array(),
        row(&dir.join("b2.emb1"))?,
    )?;
    if (head.d_in(), head.hidden(), head.num_classes()) != (meta.d_in, meta.hidden, meta.num_classes) {
        return Err(Error::DimensionMismatch(format!(
            "weights in {} disagree with meta.json",
            dir.display()
        )));
    }
    head.meta = meta.train;
    Ok(head)
}
