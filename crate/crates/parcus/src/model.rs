//! The classifier core: per-token predictions, boosted document
//! aggregation, softmax and the elastic-net regularized loss.
//!
//! Every trainable classifier in this crate implements [`Model`], so the
//! optimizer, the finite-difference checker and the evaluation harness are
//! shared across PARCUS, its ablations and the baselines.

use serde::{Deserialize, Serialize};

use crate::data::Document;
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::linalg::Matrix;
use crate::matching::{BilinearSimilarity, MatchConfig, PrototypeSet, Similarity, TokenMatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Document logits are the rationale-boosted sum of token logits.
    Train,
    /// Boost factors are identically 1.
    Infer,
}

/// Elastic-net penalties, applied to the linear head weights only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub l1: f64,
    pub l2: f64,
    /// Class index reported as positive in F1 summaries.
    pub positive_class: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            l1: 1e-3,
            l2: 1e-4,
            positive_class: 1,
        }
    }
}

/// Per-document forward results.
#[derive(Clone, Debug)]
pub struct DocumentForward {
    /// T x C token predictions y^j.
    pub token_logits: Matrix,
    /// Boost factor per token (all ones at inference).
    pub boost: Vec<f64>,
    /// Aggregated class logits.
    pub doc_logits: Vec<f64>,
    /// Softmax of the document logits.
    pub probs: Vec<f64>,
}

/// View of one parameter block.
pub struct ParamBlock<'a> {
    pub name: &'static str,
    pub value: &'a Matrix,
    /// Subject to the l1/l2 penalties.
    pub penalized: bool,
    /// Updated by the optimizer and checked by the gradient oracle.
    pub trainable: bool,
}

pub struct ParamBlockMut<'a> {
    pub name: &'static str,
    pub value: &'a mut Matrix,
    pub penalized: bool,
    pub trainable: bool,
}

/// A classifier over token-set documents, trained with hand-derived
/// gradients.
pub trait Model {
    fn num_classes(&self) -> usize;

    fn forward(&self, doc: &Document, mode: Mode) -> Result<DocumentForward>;

    /// Batch loss and exact gradients, one block per entry of [`Model::blocks`]
    /// (in the same order).
    fn backward(&self, batch: &[Document], cfg: &LossConfig) -> Result<(f64, GradientSet)>;

    /// Parameter blocks in a stable order.
    fn blocks(&self) -> Vec<ParamBlock<'_>>;

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>>;

    /// Invariants re-checked after each optimizer step.
    fn post_update_guard(&self) -> Result<()> {
        Ok(())
    }

    /// Inference-mode argmax; ties break toward the lower class index.
    fn predict(&self, doc: &Document) -> Result<usize> {
        let fwd = self.forward(doc, Mode::Infer)?;
        Ok(argmax_tie_low(&fwd.probs))
    }

    fn total_parameters(&self) -> usize {
        self.blocks().iter().map(|b| b.value.len()).sum()
    }
}

/// First index attaining the maximum.
pub fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// `log(sum(exp(logits)))` with max subtraction.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Cross-entropy of the true label straight from logits, avoiding
/// probability underflow.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

/// `softmax(logits) - onehot(label)`, the fused softmax/cross-entropy error.
pub fn softmax_error(logits: &[f64], label: usize) -> Vec<f64> {
    let mut err = softmax(logits);
    err[label] -= 1.0;
    err
}

/// Elastic-net penalty over a model's penalized blocks.
pub fn penalty(model: &dyn Model, cfg: &LossConfig) -> f64 {
    let mut total = 0.0;
    for block in model.blocks() {
        if block.penalized {
            for &w in block.value.iter() {
                total += cfg.l1 * w.abs() + cfg.l2 * w * w;
            }
        }
    }
    total
}

/// Mean train-mode cross-entropy over the batch plus the elastic-net
/// penalty (added once per batch).
pub fn loss(model: &dyn Model, batch: &[Document], cfg: &LossConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("loss over an empty batch".into()));
    }
    let mut total = 0.0;
    for doc in batch {
        let fwd = model.forward(doc, Mode::Train)?;
        total += cross_entropy(&fwd.doc_logits, doc.label);
    }
    Ok(total / batch.len() as f64 + penalty(model, cfg))
}

/// Linear output layer mapping feature vectors to class logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    /// F x C weight matrix.
    pub weights: Matrix,
    /// 1 x C bias row; stays zero when `use_bias` is off.
    pub bias: Matrix,
    pub use_bias: bool,
}

impl LinearHead {
    pub fn zeros(features: usize, classes: usize, use_bias: bool) -> Self {
        LinearHead {
            weights: Matrix::zeros(features, classes),
            bias: Matrix::zeros(1, classes),
            use_bias,
        }
    }

    /// `features * W + b`
    pub fn apply(&self, features: &[f64], out: &mut [f64]) {
        let c = self.weights.cols();
        debug_assert_eq!(out.len(), c);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.bias.get(0, j);
        }
        for (f, &phi) in features.iter().enumerate() {
            let row = self.weights.row(f);
            for j in 0..c {
                out[j] += phi * row[j];
            }
        }
    }
}

/// The full prototype-matching classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParcusModel {
    pub match_cfg: MatchConfig,
    pub prototypes: PrototypeSet,
    pub head: LinearHead,
    pub bilinear: Option<BilinearSimilarity>,
    /// Base of the boost `f(r) = base^r`; 1 disables boosting.
    pub boost_base: f64,
    pub num_classes: usize,
    /// Set for the k-means ablation: centroids are pre-computed and receive
    /// no gradient.
    pub freeze_prototypes: bool,
}

impl ParcusModel {
    pub fn embedding_dim(&self) -> usize {
        self.prototypes.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.match_cfg.validate()?;
        if self.boost_base < 1.0 {
            return Err(Error::Config(format!(
                "boost base must be >= 1, got {}",
                self.boost_base
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("model needs at least 2 classes".into()));
        }
        if self.prototypes.num_prototypes() != self.match_cfg.num_prototypes {
            return Err(Error::Dimension(format!(
                "{} prototypes stored, config declares {}",
                self.prototypes.num_prototypes(),
                self.match_cfg.num_prototypes
            )));
        }
        let f = self.match_cfg.feature_count();
        if self.head.weights.rows() != f || self.head.weights.cols() != self.num_classes {
            return Err(Error::Dimension(format!(
                "head is {}x{}, expected {}x{}",
                self.head.weights.rows(),
                self.head.weights.cols(),
                f,
                self.num_classes
            )));
        }
        match (self.match_cfg.similarity, &self.bilinear) {
            (Similarity::Bilinear, None) => {
                return Err(Error::Config(
                    "bilinear similarity selected without a matrix".into(),
                ))
            }
            (Similarity::Bilinear, Some(b)) => {
                let n = self.embedding_dim();
                if b.matrix.rows() != n || b.matrix.cols() != n {
                    return Err(Error::Dimension(format!(
                        "bilinear matrix is {}x{}, expected {n}x{n}",
                        b.matrix.rows(),
                        b.matrix.cols()
                    )));
                }
            }
            (Similarity::Cosine, _) => {}
        }
        Ok(())
    }

    /// Boost factor `base^r` for a binary rationale flag; exactly 1 for
    /// unflagged tokens regardless of base.
    pub fn boost_factor(&self, flag: u8) -> f64 {
        if flag == 0 {
            1.0
        } else {
            self.boost_base
        }
    }

    pub(crate) fn token_match(&self, x: &[f64]) -> Result<TokenMatch> {
        TokenMatch::compute(x, &self.prototypes, &self.match_cfg, self.bilinear.as_ref())
    }
}

impl Model for ParcusModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn forward(&self, doc: &Document, mode: Mode) -> Result<DocumentForward> {
        let c = self.num_classes;
        let t = doc.len();
        let mut token_logits = Matrix::zeros(t, c);
        let mut boost = Vec::with_capacity(t);
        let mut doc_logits = vec![0.0; c];

        for (j, x) in doc.vectors.iter().enumerate() {
            let features = self.token_match(x)?.features;
            if features.len() != self.head.weights.rows() {
                return Err(Error::Dimension(format!(
                    "feature vector has {} entries, head expects {}",
                    features.len(),
                    self.head.weights.rows()
                )));
            }
            self.head.apply(&features, token_logits.row_mut(j));
            let b = match mode {
                Mode::Train => self.boost_factor(doc.rationale[j]),
                Mode::Infer => 1.0,
            };
            boost.push(b);
            for (acc, &y) in doc_logits.iter_mut().zip(token_logits.row(j)) {
                *acc += b * y;
            }
        }

        let probs = softmax(&doc_logits);
        Ok(DocumentForward {
            token_logits,
            boost,
            doc_logits,
            probs,
        })
    }

    fn backward(&self, batch: &[Document], cfg: &LossConfig) -> Result<(f64, GradientSet)> {
        crate::grad::parcus_backward(self, batch, cfg)
    }

    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut blocks = vec![
            ParamBlock {
                name: "prototypes",
                value: &self.prototypes.vectors,
                penalized: false,
                trainable: !self.freeze_prototypes,
            },
            ParamBlock {
                name: "head_weights",
                value: &self.head.weights,
                penalized: true,
                trainable: true,
            },
            ParamBlock {
                name: "head_bias",
                value: &self.head.bias,
                penalized: false,
                trainable: self.head.use_bias,
            },
        ];
        if let Some(b) = &self.bilinear {
            blocks.push(ParamBlock {
                name: "bilinear",
                value: &b.matrix,
                penalized: false,
                trainable: true,
            });
        }
        blocks
    }

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let freeze = self.freeze_prototypes;
        let use_bias = self.head.use_bias;
        let mut blocks = vec![
            ParamBlockMut {
                name: "prototypes",
                value: &mut self.prototypes.vectors,
                penalized: false,
                trainable: !freeze,
            },
            ParamBlockMut {
                name: "head_weights",
                value: &mut self.head.weights,
                penalized: true,
                trainable: true,
            },
            ParamBlockMut {
                name: "head_bias",
                value: &mut self.head.bias,
                penalized: false,
                trainable: use_bias,
            },
        ];
        if let Some(b) = &mut self.bilinear {
            blocks.push(ParamBlockMut {
                name: "bilinear",
                value: &mut b.matrix,
                penalized: false,
                trainable: true,
            });
        }
        blocks
    }

    fn post_update_guard(&self) -> Result<()> {
        self.prototypes.guard()
    }
}
