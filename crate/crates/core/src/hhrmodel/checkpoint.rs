use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{LayerParams, ModelConfig, ModelParams};
use crate::diffcore::DenseMatrix;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

/// JSON checkpoint. Each entry of `layers` lists the layer's `p + 1`
/// projections followed by its `p` tensor slices, every matrix as nested
/// row arrays.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    config: ModelConfig,
    layers: Vec<Vec<Rows>>,
    classifier: Rows,
    format_version: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
}

fn to_rows(m: &DenseMatrix) -> Rows {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Rows, what: &str) -> Result<DenseMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid(format!("checkpoint: {what} is not a non-empty rectangular matrix")));
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, cols), flat).expect("rectangular"))
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let doc = Document {
            config: self.config.clone(),
            layers: self
                .params
                .layers
                .iter()
                .map(|l| l.projections.iter().chain(&l.ntn_slices).map(to_rows).collect())
                .collect(),
            classifier: to_rows(&self.params.classifier),
            format_version: CHECKPOINT_FORMAT_VERSION,
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text).map_err(|source| Error::Json {
            file: "checkpoint".to_owned(),
            source,
        })?;
        if doc.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "checkpoint format_version {} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        doc.config.validate()?;
        let p = doc.config.hops();
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (k, mats) in doc.layers.into_iter().enumerate() {
            if mats.len() != 2 * p + 1 {
                return Err(Error::invalid(format!(
                    "checkpoint: layer {k} has {} matrices, expected {}",
                    mats.len(),
                    2 * p + 1
                )));
            }
            let mut mats = mats
                .into_iter()
                .enumerate()
                .map(|(i, m)| from_rows(m, &format!("layer {k} matrix {i}")))
                .collect::<Result<Vec<_>>>()?;
            let ntn_slices = mats.split_off(p + 1);
            layers.push(LayerParams {
                projections: mats,
                ntn_slices,
            });
        }
        let params = ModelParams {
            layers,
            classifier: from_rows(doc.classifier, "classifier")?,
        };
        let feature_dim = params
            .layers
            .first()
            .and_then(|l| l.projections.first())
            .map_or(0, |w| w.nrows());
        params.validate(&doc.config, feature_dim)?;
        Ok(Checkpoint {
            config: doc.config,
            params,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.params.layers[0].projections[0].nrows()
    }
}
