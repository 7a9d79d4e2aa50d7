//! Adam optimizer and the end-to-end training loop.
//!
//! Training is deterministic given (seed, config, data) on a single
//! thread: initialization, per-epoch shuffles and any sampling all draw
//! from named substreams of the run seed.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use indexmap::IndexMap;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::linalg::{normalize, Matrix};
use crate::matching::{BilinearSimilarity, MatchConfig, PrototypeSet, Similarity};
use crate::model::{LinearHead, LossConfig, Model, ParcusModel};
use crate::rng::{standard_normal, substream, substream_indexed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeInit {
    /// I.i.d. standard normal draws, normalized to unit length.
    RandomUnit,
    /// Embeddings of distinct rationale-flagged tokens; falls back to
    /// random units when fewer than N exist.
    AnnotatedToken,
}

/// Training-loop hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub prototype_init: PrototypeInit,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 500,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            prototype_init: PrototypeInit::RandomUnit,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// First/second moment accumulators, one pair per parameter block.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(model: &dyn Model) -> AdamState {
        let shapes: Vec<Matrix> = model
            .blocks()
            .iter()
            .map(|b| Matrix::zeros(b.value.rows(), b.value.cols()))
            .collect();
        AdamState {
            first: shapes.clone(),
            second: shapes,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update over every trainable block.
pub fn adam_step(
    model: &mut dyn Model,
    grads: &GradientSet,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - cfg.beta1.powi(t);
    let correction2 = 1.0 - cfg.beta2.powi(t);

    for (idx, block) in model.blocks_mut().into_iter().enumerate() {
        if !block.trainable {
            continue;
        }
        let g = grads.blocks[idx].grad.as_slice();
        let m = state.first[idx].as_mut_slice();
        let v = state.second[idx].as_mut_slice();
        let p = block.value.as_mut_slice();
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite update in block '{}' at step {}",
                block.name, state.step
            )));
        }
    }
    Ok(())
}

/// Builds a PARCUS model for a corpus: prototypes per the init strategy,
/// head zero-initialized so early predictions are uniform, bilinear matrix
/// drawn N(0, 1/n) when that similarity is selected.
pub fn init_model(
    match_cfg: &MatchConfig,
    boost_base: f64,
    use_bias: bool,
    train_cfg: &TrainConfig,
    corpus: &Corpus,
    dim: usize,
) -> Result<ParcusModel> {
    match_cfg.validate()?;
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be >= 1".into()));
    }
    let mut rng = substream(train_cfg.seed, "init");
    let n_proto = match_cfg.num_prototypes;

    let rows = match train_cfg.prototype_init {
        PrototypeInit::RandomUnit => random_unit_rows(n_proto, dim, &mut rng),
        PrototypeInit::AnnotatedToken => {
            let mut flagged: IndexMap<&str, &[f64]> = IndexMap::new();
            for doc in &corpus.documents {
                for (j, &flag) in doc.rationale.iter().enumerate() {
                    if flag == 1 {
                        flagged
                            .entry(doc.tokens[j].as_str())
                            .or_insert(doc.vectors[j].as_slice());
                    }
                }
            }
            if flagged.len() < n_proto {
                eprintln!(
                    "warning: {} distinct annotated tokens, need {n_proto}; \
                     falling back to random unit prototypes",
                    flagged.len()
                );
                random_unit_rows(n_proto, dim, &mut rng)
            } else {
                let mut indices: Vec<usize> = (0..flagged.len()).collect();
                indices.shuffle(&mut rng);
                indices[..n_proto]
                    .iter()
                    .map(|&i| flagged[i].to_vec())
                    .collect()
            }
        }
    };

    let bilinear = match match_cfg.similarity {
        Similarity::Bilinear => {
            let mut m = Matrix::zeros(dim, dim);
            for v in m.as_mut_slice() {
                *v = standard_normal(&mut rng) / dim as f64;
            }
            Some(BilinearSimilarity { matrix: m })
        }
        Similarity::Cosine => None,
    };

    let model = ParcusModel {
        match_cfg: match_cfg.clone(),
        prototypes: PrototypeSet {
            vectors: Matrix::from_rows(&rows),
        },
        head: LinearHead::zeros(match_cfg.feature_count(), corpus.num_classes, use_bias),
        bilinear,
        boost_base,
        num_classes: corpus.num_classes,
        freeze_prototypes: false,
    };
    model.validate()?;
    Ok(model)
}

fn random_unit_rows(count: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut row: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
            normalize(&mut row);
            row
        })
        .collect()
}

/// Trains in place; returns the per-epoch mean batch loss.
pub fn train<M: Model>(
    model: &mut M,
    docs: &[crate::data::Document],
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<Vec<f64>> {
    train_with_progress(model, docs, train_cfg, loss_cfg, |_, _| {})
}

/// [`train`] with a per-epoch callback `(epoch, mean loss)`.
pub fn train_with_progress<M: Model>(
    model: &mut M,
    docs: &[crate::data::Document],
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    train_cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }

    let mut state = AdamState::zeros_like(model);
    let mut trace = Vec::with_capacity(train_cfg.epochs);

    for epoch in 0..train_cfg.epochs {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        if train_cfg.shuffle {
            let mut rng = substream_indexed(train_cfg.seed, "shuffle", epoch as u64);
            order.shuffle(&mut rng);
        }

        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(train_cfg.batch_size) {
            let batch: Vec<crate::data::Document> =
                chunk.iter().map(|&i| docs[i].clone()).collect();
            let (batch_loss, grads) = model.backward(&batch, loss_cfg)?;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch} (loss {batch_loss}); trace so far: {trace:?}"
                )));
            }
            adam_step(model, &grads, &mut state, train_cfg)?;
            model.post_update_guard()?;
            epoch_loss += batch_loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        trace.push(mean);
        progress(epoch, mean);
    }
    Ok(trace)
}
