//! Versioned model checkpoints.
//!
//! Checkpoints are JSON with a version header, the full model (tagged by
//! kind), the loss settings and the data dimensions. Floats are written in
//! shortest round-trip form, so save/load is exact at stored precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{LinearModel, MlpModel, NbowModel};
use crate::data::Document;
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::model::{
    DocumentForward, LossConfig, Mode, Model, ParamBlock, ParamBlockMut, ParcusModel,
};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Any trainable classifier in this crate, tagged for serialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "snake_case")]
pub enum AnyModel {
    Parcus(ParcusModel),
    Linear(LinearModel),
    Mlp(MlpModel),
    Nbow(NbowModel),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Parcus(_) => "parcus",
            AnyModel::Linear(_) => "linear",
            AnyModel::Mlp(_) => "mlp",
            AnyModel::Nbow(_) => "nbow",
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            AnyModel::Parcus(m) => m.embedding_dim(),
            AnyModel::Linear(m) => m.weights.rows(),
            AnyModel::Mlp(m) => m.hidden_weights.rows(),
            AnyModel::Nbow(m) => m.weights.rows(),
        }
    }

    pub fn as_parcus(&self) -> Option<&ParcusModel> {
        match self {
            AnyModel::Parcus(m) => Some(m),
            _ => None,
        }
    }

    fn inner(&self) -> &dyn Model {
        match self {
            AnyModel::Parcus(m) => m,
            AnyModel::Linear(m) => m,
            AnyModel::Mlp(m) => m,
            AnyModel::Nbow(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Model {
        match self {
            AnyModel::Parcus(m) => m,
            AnyModel::Linear(m) => m,
            AnyModel::Mlp(m) => m,
            AnyModel::Nbow(m) => m,
        }
    }
}

impl Model for AnyModel {
    fn num_classes(&self) -> usize {
        self.inner().num_classes()
    }
    fn forward(&self, doc: &Document, mode: Mode) -> Result<DocumentForward> {
        self.inner().forward(doc, mode)
    }
    fn backward(&self, batch: &[Document], cfg: &LossConfig) -> Result<(f64, GradientSet)> {
        self.inner().backward(batch, cfg)
    }
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        self.inner().blocks()
    }
    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        self.inner_mut().blocks_mut()
    }
    fn post_update_guard(&self) -> Result<()> {
        self.inner().post_update_guard()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub embedding_dim: usize,
    pub num_classes: usize,
    pub loss: LossConfig,
    pub model: AnyModel,
}

impl Checkpoint {
    pub fn new(model: AnyModel, loss: LossConfig) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            embedding_dim: model.embedding_dim(),
            num_classes: model.num_classes(),
            loss,
            model,
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut out, ckpt)
        .map_err(|e| Error::Config(format!("serialize checkpoint: {e}")))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let file = File::open(path.as_ref())?;
    let ckpt: Checkpoint =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            line: 0,
            msg: format!("checkpoint: {e}"),
        })?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    Ok(ckpt)
}
