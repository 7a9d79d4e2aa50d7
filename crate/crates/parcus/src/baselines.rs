//! Comparison models and ablation variants sharing the PARCUS trainer.
//!
//! Linear and NBOW map raw embeddings through one weight matrix; the MLP
//! adds a tanh hidden layer and optionally the error-boosting trick. The
//! PARCUS variants reconfigure the main model: no boosting (`wo_h`),
//! reduced feature sets, bilinear similarity, averaged inputs, or frozen
//! k-means prototypes.

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Document};
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::linalg::Matrix;
use crate::matching::{MatchConfig, Similarity};
use crate::model::{
    cross_entropy, softmax, softmax_error, DocumentForward, LossConfig, Mode, Model, ParamBlock,
    ParamBlockMut,
};
use crate::rng::{standard_normal, substream};

/// Per-token linear map summed over tokens, mirroring the PARCUS head with
/// raw embeddings in place of matching features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Matrix,
    pub bias: Matrix,
    pub num_classes: usize,
}

impl LinearModel {
    pub fn init(dim: usize, num_classes: usize) -> Self {
        LinearModel {
            weights: Matrix::zeros(dim, num_classes),
            bias: Matrix::zeros(1, num_classes),
            num_classes,
        }
    }
}

impl Model for LinearModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn forward(&self, doc: &Document, _mode: Mode) -> Result<DocumentForward> {
        let c = self.num_classes;
        let t = doc.len();
        let mut token_logits = Matrix::zeros(t, c);
        let mut doc_logits = vec![0.0; c];
        for (j, x) in doc.vectors.iter().enumerate() {
            if x.len() != self.weights.rows() {
                return Err(Error::Dimension(format!(
                    "token vector has {} components, weights expect {}",
                    x.len(),
                    self.weights.rows()
                )));
            }
            let row = token_logits.row_mut(j);
            for (cl, r) in row.iter_mut().enumerate() {
                *r = self.bias.get(0, cl);
            }
            for (i, &xi) in x.iter().enumerate() {
                let w_row = self.weights.row(i);
                for (cl, r) in row.iter_mut().enumerate() {
                    *r += xi * w_row[cl];
                }
            }
            for (acc, &y) in doc_logits.iter_mut().zip(row.iter()) {
                *acc += y;
            }
        }
        let probs = softmax(&doc_logits);
        Ok(DocumentForward {
            token_logits,
            boost: vec![1.0; t],
            doc_logits,
            probs,
        })
    }

    fn backward(&self, batch: &[Document], cfg: &LossConfig) -> Result<(f64, GradientSet)> {
        if batch.is_empty() {
            return Err(Error::Config("backward over an empty batch".into()));
        }
        let mut grads = GradientSet::zeros_like(self);
        let scale = 1.0 / batch.len() as f64;
        let mut total_ce = 0.0;
        for doc in batch {
            let fwd = self.forward(doc, Mode::Train)?;
            total_ce += cross_entropy(&fwd.doc_logits, doc.label);
            let err = softmax_error(&fwd.doc_logits, doc.label);
            let mut vec_sum = vec![0.0; self.weights.rows()];
            for x in &doc.vectors {
                for (s, &xi) in vec_sum.iter_mut().zip(x) {
                    *s += xi;
                }
            }
            let d_w = grads.get_mut_by_name("weights");
            for (i, &si) in vec_sum.iter().enumerate() {
                for (cl, &e) in err.iter().enumerate() {
                    d_w.add_at(i, cl, scale * si * e);
                }
            }
            let d_b = grads.get_mut_by_name("bias");
            for (cl, &e) in err.iter().enumerate() {
                d_b.add_at(0, cl, scale * doc.len() as f64 * e);
            }
        }
        add_elastic_net(&mut grads, self, cfg);
        grads.check_finite()?;
        Ok((
            total_ce / batch.len() as f64 + crate::model::penalty(self, cfg),
            grads,
        ))
    }

    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        vec![
            ParamBlock {
                name: "weights",
                value: &self.weights,
                penalized: true,
                trainable: true,
            },
            ParamBlock {
                name: "bias",
                value: &self.bias,
                penalized: false,
                trainable: true,
            },
        ]
    }

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        vec![
            ParamBlockMut {
                name: "weights",
                value: &mut self.weights,
                penalized: true,
                trainable: true,
            },
            ParamBlockMut {
                name: "bias",
                value: &mut self.bias,
                penalized: false,
                trainable: true,
            },
        ]
    }
}

/// Logistic regression on the mean token embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbowModel {
    pub weights: Matrix,
    pub bias: Matrix,
    pub num_classes: usize,
}

impl NbowModel {
    pub fn init(dim: usize, num_classes: usize) -> Self {
        NbowModel {
            weights: Matrix::zeros(dim, num_classes),
            bias: Matrix::zeros(1, num_classes),
            num_classes,
        }
    }
}

impl Model for NbowModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn forward(&self, doc: &Document, _mode: Mode) -> Result<DocumentForward> {
        let c = self.num_classes;
        let t = doc.len();
        // token_logits[j] = (x_j W + b) / T so rows still sum to the
        // document logits.
        let mut token_logits = Matrix::zeros(t, c);
        let mut doc_logits = vec![0.0; c];
        if t > 0 {
            let inv_t = 1.0 / t as f64;
            for (j, x) in doc.vectors.iter().enumerate() {
                if x.len() != self.weights.rows() {
                    return Err(Error::Dimension(format!(
                        "token vector has {} components, weights expect {}",
                        x.len(),
                        self.weights.rows()
                    )));
                }
                let row = token_logits.row_mut(j);
                for (cl, r) in row.iter_mut().enumerate() {
                    *r = self.bias.get(0, cl) * inv_t;
                }
                for (i, &xi) in x.iter().enumerate() {
                    let w_row = self.weights.row(i);
                    for (cl, r) in row.iter_mut().enumerate() {
                        *r += xi * inv_t * w_row[cl];
                    }
                }
                for (acc, &y) in doc_logits.iter_mut().zip(row.iter()) {
                    *acc += y;
                }
            }
        }
        let probs = softmax(&doc_logits);
        Ok(DocumentForward {
            token_logits,
            boost: vec![1.0; t],
            doc_logits,
            probs,
        })
    }

    fn backward(&self, batch: &[Document], cfg: &LossConfig) -> Result<(f64, GradientSet)> {
        if batch.is_empty() {
            return Err(Error::Config("backward over an empty batch".into()));
        }
        let mut grads = GradientSet::zeros_like(self);
        let scale = 1.0 / batch.len() as f64;
        let mut total_ce = 0.0;
        for doc in batch {
            let fwd = self.forward(doc, Mode::Train)?;
            total_ce += cross_entropy(&fwd.doc_logits, doc.label);
            if doc.is_empty() {
                continue; // logits are constant zero
            }
            let err = softmax_error(&fwd.doc_logits, doc.label);
            let inv_t = 1.0 / doc.len() as f64;
            let mut mean = vec![0.0; self.weights.rows()];
            for x in &doc.vectors {
                for (m, &xi) in mean.iter_mut().zip(x) {
                    *m += xi * inv_t;
                }
            }
            let d_w = grads.get_mut_by_name("weights");
            for (i, &mi) in mean.iter().enumerate() {
                for (cl, &e) in err.iter().enumerate() {
                    d_w.add_at(i, cl, scale * mi * e);
                }
            }
            let d_b = grads.get_mut_by_name("bias");
            for (cl, &e) in err.iter().enumerate() {
                d_b.add_at(0, cl, scale * e);
            }
        }
        add_elastic_net(&mut grads, self, cfg);
        grads.check_finite()?;
        Ok((
            total_ce / batch.len() as f64 + crate::model::penalty(self, cfg),
            grads,
        ))
    }

    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        vec![
            ParamBlock {
                name: "weights",
                value: &self.weights,
                penalized: true,
                trainable: true,
            },
            ParamBlock {
                name: "bias",
                value: &self.bias,
                penalized: false,
                trainable: true,
            },
        ]
    }

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        vec![
            ParamBlockMut {
                name: "weights",
                value: &mut self.weights,
                penalized: true,
                trainable: true,
            },
            ParamBlockMut {
                name: "bias",
                value: &mut self.bias,
                penalized: false,
                trainable: true,
            },
        ]
    }
}

/// Per-token single-hidden-layer network, optionally error-boosted: the
/// minimal free-feature counterpart of the prototype features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub hidden_weights: Matrix,
    pub hidden_bias: Matrix,
    pub out_weights: Matrix,
    pub out_bias: Matrix,
    pub boosted: bool,
    pub boost_base: f64,
    pub num_classes: usize,
}

impl MlpModel {
    /// Hidden layer drawn N(0, 1/sqrt(n)) to break symmetry; output layer
    /// zero so initial predictions are uniform.
    pub fn init(
        dim: usize,
        hidden_units: usize,
        num_classes: usize,
        boosted: bool,
        boost_base: f64,
        seed: u64,
    ) -> Self {
        let mut rng = substream(seed, "init");
        let mut hidden_weights = Matrix::zeros(dim, hidden_units);
        let scale = 1.0 / (dim as f64).sqrt();
        for v in hidden_weights.as_mut_slice() {
            *v = standard_normal(&mut rng) * scale;
        }
        MlpModel {
            hidden_weights,
            hidden_bias: Matrix::zeros(1, hidden_units),
            out_weights: Matrix::zeros(hidden_units, num_classes),
            out_bias: Matrix::zeros(1, num_classes),
            boosted,
            boost_base,
            num_classes,
        }
    }

    fn boost_factor(&self, flag: u8, mode: Mode) -> f64 {
        if self.boosted && mode == Mode::Train && flag != 0 {
            self.boost_base
        } else {
            1.0
        }
    }

    fn hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.hidden_weights.rows() {
            return Err(Error::Dimension(format!(
                "token vector has {} components, hidden layer expects {}",
                x.len(),
                self.hidden_weights.rows()
            )));
        }
        let h_units = self.hidden_weights.cols();
        let mut h = vec![0.0; h_units];
        for (u, hv) in h.iter_mut().enumerate() {
            *hv = self.hidden_bias.get(0, u);
        }
        for (i, &xi) in x.iter().enumerate() {
            let row = self.hidden_weights.row(i);
            for (u, hv) in h.iter_mut().enumerate() {
                *hv += xi * row[u];
            }
        }
        for hv in h.iter_mut() {
            *hv = hv.tanh();
        }
        Ok(h)
    }
}

impl Model for MlpModel {
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
            let h = self.hidden(x)?;
            let row = token_logits.row_mut(j);
            for (cl, r) in row.iter_mut().enumerate() {
                *r = self.out_bias.get(0, cl);
            }
            for (u, &hu) in h.iter().enumerate() {
                let w_row = self.out_weights.row(u);
                for (cl, r) in row.iter_mut().enumerate() {
                    *r += hu * w_row[cl];
                }
            }
            let b = self.boost_factor(doc.rationale[j], mode);
            boost.push(b);
            for (acc, &y) in doc_logits.iter_mut().zip(row.iter()) {
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
        if batch.is_empty() {
            return Err(Error::Config("backward over an empty batch".into()));
        }
        let mut grads = GradientSet::zeros_like(self);
        let scale = 1.0 / batch.len() as f64;
        let mut total_ce = 0.0;
        for doc in batch {
            let fwd = self.forward(doc, Mode::Train)?;
            total_ce += cross_entropy(&fwd.doc_logits, doc.label);
            let err = softmax_error(&fwd.doc_logits, doc.label);
            for (j, x) in doc.vectors.iter().enumerate() {
                let h = self.hidden(x)?;
                let b = fwd.boost[j];
                {
                    let d_u = grads.get_mut_by_name("out_weights");
                    for (u, &hu) in h.iter().enumerate() {
                        for (cl, &e) in err.iter().enumerate() {
                            d_u.add_at(u, cl, scale * b * hu * e);
                        }
                    }
                    let d_ob = grads.get_mut_by_name("out_bias");
                    for (cl, &e) in err.iter().enumerate() {
                        d_ob.add_at(0, cl, scale * b * e);
                    }
                }
                // d h = boost * U err, through tanh: (1 - h^2)
                let h_units = h.len();
                let mut d_pre = vec![0.0; h_units];
                for (u, dp) in d_pre.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (cl, &e) in err.iter().enumerate() {
                        acc += self.out_weights.get(u, cl) * e;
                    }
                    *dp = scale * b * acc * (1.0 - h[u] * h[u]);
                }
                let d_v = grads.get_mut_by_name("hidden_weights");
                for (i, &xi) in x.iter().enumerate() {
                    for (u, &dp) in d_pre.iter().enumerate() {
                        d_v.add_at(i, u, xi * dp);
                    }
                }
                let d_hb = grads.get_mut_by_name("hidden_bias");
                for (u, &dp) in d_pre.iter().enumerate() {
                    d_hb.add_at(0, u, dp);
                }
            }
        }
        add_elastic_net(&mut grads, self, cfg);
        grads.check_finite()?;
        Ok((
            total_ce / batch.len() as f64 + crate::model::penalty(self, cfg),
            grads,
        ))
    }

    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        vec![
            ParamBlock {
                name: "hidden_weights",
                value: &self.hidden_weights,
                penalized: true,
                trainable: true,
            },
            ParamBlock {
                name: "hidden_bias",
                value: &self.hidden_bias,
                penalized: false,
                trainable: true,
            },
            ParamBlock {
                name: "out_weights",
                value: &self.out_weights,
                penalized: true,
                trainable: true,
            },
            ParamBlock {
                name: "out_bias",
                value: &self.out_bias,
                penalized: false,
                trainable: true,
            },
        ]
    }

    fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        vec![
            ParamBlockMut {
                name: "hidden_weights",
                value: &mut self.hidden_weights,
                penalized: true,
                trainable: true,
            },
            ParamBlockMut {
                name: "hidden_bias",
                value: &mut self.hidden_bias,
                penalized: false,
                trainable: true,
            },
            ParamBlockMut {
                name: "out_weights",
                value: &mut self.out_weights,
                penalized: true,
                trainable: true,
            },
            ParamBlockMut {
                name: "out_bias",
                value: &mut self.out_bias,
                penalized: false,
                trainable: true,
            },
        ]
    }
}

/// l1/l2 gradient terms over penalized blocks, added once per batch.
fn add_elastic_net(grads: &mut GradientSet, model: &dyn Model, cfg: &LossConfig) {
    for (idx, block) in model.blocks().iter().enumerate() {
        if !block.penalized {
            continue;
        }
        let g = grads.blocks[idx].grad.as_mut_slice();
        for (slot, &w) in g.iter_mut().zip(block.value.as_slice()) {
            if w != 0.0 {
                *slot += cfg.l1 * w.signum();
            }
            *slot += 2.0 * cfg.l2 * w;
        }
    }
}

impl GradientSet {
    fn get_mut_by_name(&mut self, name: &str) -> &mut Matrix {
        &mut self
            .blocks
            .iter_mut()
            .find(|b| b.name == name)
            .expect("block exists")
            .grad
    }
}

/// PARCUS ablations from the experimental protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParcusVariant {
    /// No highlights: boost base forced to 1.
    WoH,
    /// Matching probabilities only (no logic, no negation).
    PhiKOnly,
    /// Logic features off; negation untouched.
    NoLogic,
    /// Each document collapsed to its mean token vector.
    Avg,
    /// Prototypes pre-computed by k-means and frozen.
    KMeans,
    /// Bilinear similarity instead of cosine.
    Bilinear,
}

impl ParcusVariant {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "wo_h" => ParcusVariant::WoH,
            "phi_k_only" => ParcusVariant::PhiKOnly,
            "no_logic" => ParcusVariant::NoLogic,
            "avg" => ParcusVariant::Avg,
            "kmeans" => ParcusVariant::KMeans,
            "bilinear" => ParcusVariant::Bilinear,
            other => return Err(Error::Config(format!("unknown parcus variant '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ParcusVariant::WoH => "wo_h",
            ParcusVariant::PhiKOnly => "phi_k_only",
            ParcusVariant::NoLogic => "no_logic",
            ParcusVariant::Avg => "avg",
            ParcusVariant::KMeans => "kmeans",
            ParcusVariant::Bilinear => "bilinear",
        }
    }
}

/// Configuration adjustments implied by a variant.
#[derive(Clone, Debug)]
pub struct VariantSetup {
    pub match_cfg: MatchConfig,
    pub boost_base: f64,
    /// Replace every document by one averaged token before training and
    /// evaluation.
    pub average_inputs: bool,
    /// Initialize prototypes from k-means centroids and freeze them.
    pub kmeans_prototypes: bool,
}

pub fn variant_setup(
    base: &MatchConfig,
    boost_base: f64,
    variant: Option<ParcusVariant>,
) -> VariantSetup {
    let mut setup = VariantSetup {
        match_cfg: base.clone(),
        boost_base,
        average_inputs: false,
        kmeans_prototypes: false,
    };
    match variant {
        None => {}
        Some(ParcusVariant::WoH) => setup.boost_base = 1.0,
        Some(ParcusVariant::PhiKOnly) => {
            setup.match_cfg.use_logic = false;
            setup.match_cfg.use_negation = false;
        }
        Some(ParcusVariant::NoLogic) => setup.match_cfg.use_logic = false,
        Some(ParcusVariant::Avg) => setup.average_inputs = true,
        Some(ParcusVariant::KMeans) => setup.kmeans_prototypes = true,
        Some(ParcusVariant::Bilinear) => setup.match_cfg.similarity = Similarity::Bilinear,
    }
    setup
}

/// Collapses a document to a single averaged token; the rationale flag is
/// the max over the original flags so annotated documents stay boosted.
pub fn average_document(doc: &Document) -> Document {
    if doc.is_empty() {
        return doc.clone();
    }
    let dim = doc.vectors[0].len();
    let inv_t = 1.0 / doc.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in &doc.vectors {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x * inv_t;
        }
    }
    Document {
        tokens: vec!["<avg>".to_string()],
        vectors: vec![mean],
        rationale: vec![doc.rationale.iter().copied().max().unwrap_or(0)],
        label: doc.label,
    }
}

pub fn average_corpus(corpus: &Corpus) -> Corpus {
    Corpus {
        documents: corpus.documents.iter().map(average_document).collect(),
        num_classes: corpus.num_classes,
        positive_class: corpus.positive_class,
        provenance: format!("{} (averaged)", corpus.provenance),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding; assignment fixpoint or 300
/// iterations, empty clusters re-seeded to the farthest point.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    if k > distinct.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {} distinct points",
            distinct.len()
        )));
    }

    let mut rng = substream(seed, "kmeans");
    use rand::Rng;

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut draw = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if draw < w {
                    chosen = i;
                    break;
                }
                draw -= w;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[next].clone());
    }

    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..300 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed to the point farthest from its centroid.
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(i, p), (j, q)| {
                        let di = sq_dist(p, &centroids[assignment[*i]]);
                        let dj = sq_dist(q, &centroids[assignment[*j]]);
                        di.partial_cmp(&dj).unwrap()
                    })
                    .map(|(i, _)| i)
                    .expect("nonempty points");
                centroids[c] = points[far].clone();
            } else {
                for (slot, &s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *slot = s / counts[c] as f64;
                }
            }
        }
    }
    Ok(centroids)
}

/// All token vectors of a document set, in corpus order.
pub fn all_token_vectors(docs: &[Document]) -> Vec<Vec<f64>> {
    docs.iter()
        .flat_map(|d| d.vectors.iter().cloned())
        .collect()
}

/// Everything needed to instantiate a trainable model for a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Parcus {
        match_cfg: MatchConfig,
        boost_base: f64,
        use_bias: bool,
        variant: Option<ParcusVariant>,
    },
    Linear,
    Mlp {
        hidden_units: usize,
        boosted: bool,
        boost_base: f64,
    },
    Nbow,
}

impl ModelSpec {
    pub fn kind_name(&self) -> String {
        match self {
            ModelSpec::Parcus { variant: None, .. } => "parcus".into(),
            ModelSpec::Parcus {
                variant: Some(v), ..
            } => format!("parcus_{}", v.name()),
            ModelSpec::Linear => "linear".into(),
            ModelSpec::Mlp { boosted: false, .. } => "mlp".into(),
            ModelSpec::Mlp { boosted: true, .. } => "mlp_boosted".into(),
            ModelSpec::Nbow => "nbow".into(),
        }
    }

    /// True when documents must be collapsed to their mean token before
    /// training and evaluation.
    pub fn averages_inputs(&self) -> bool {
        matches!(
            self,
            ModelSpec::Parcus {
                variant: Some(ParcusVariant::Avg),
                ..
            }
        )
    }

    /// Instantiates the model. `train_docs` are the (already averaged,
    /// when applicable) training documents: the annotated-token init and
    /// the k-means centroids look only at them.
    pub fn build(
        &self,
        train_docs: &[Document],
        num_classes: usize,
        dim: usize,
        train_cfg: &crate::optim::TrainConfig,
    ) -> Result<crate::checkpoint::AnyModel> {
        use crate::checkpoint::AnyModel;
        Ok(match self {
            ModelSpec::Parcus {
                match_cfg,
                boost_base,
                use_bias,
                variant,
            } => {
                let setup = variant_setup(match_cfg, *boost_base, *variant);
                let corpus = Corpus {
                    documents: train_docs.to_vec(),
                    num_classes,
                    positive_class: None,
                    provenance: String::new(),
                };
                let mut model = crate::optim::init_model(
                    &setup.match_cfg,
                    setup.boost_base,
                    *use_bias,
                    train_cfg,
                    &corpus,
                    dim,
                )?;
                if setup.kmeans_prototypes {
                    let points = all_token_vectors(train_docs);
                    let centroids =
                        kmeans(&points, setup.match_cfg.num_prototypes, train_cfg.seed)?;
                    model.prototypes.vectors = Matrix::from_rows(&centroids);
                    model.freeze_prototypes = true;
                    model.prototypes.guard()?;
                }
                AnyModel::Parcus(model)
            }
            ModelSpec::Linear => AnyModel::Linear(LinearModel::init(dim, num_classes)),
            ModelSpec::Nbow => AnyModel::Nbow(NbowModel::init(dim, num_classes)),
            ModelSpec::Mlp {
                hidden_units,
                boosted,
                boost_base,
            } => AnyModel::Mlp(MlpModel::init(
                dim,
                *hidden_units,
                num_classes,
                *boosted,
                *boost_base,
                train_cfg.seed,
            )),
        })
    }
}
