//! Post-training inspection: per-token relevance ranking, head-weight
//! saliency and prototype-vocabulary neighborhoods.
//!
//! Everything here is a pure function of (model, corpus, table); scores
//! are inference-mode token logits, so rankings are reproducible from a
//! checkpoint alone.

use crate::data::{Corpus, EmbeddingTable};
use crate::error::{Error, Result};
use crate::matching::cosine;
use crate::model::{Mode, Model, ParcusModel};

/// Score of one token occurrence: the chosen class's component of the
/// token logit y^j.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenScore {
    pub token: String,
    pub score: f64,
    pub document: usize,
    pub position: usize,
}

/// A distinct token string with its occurrence-averaged score.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedToken {
    pub token: String,
    pub mean_score: f64,
    pub count: usize,
}

/// Inference-mode logit component of `class` for every token occurrence.
pub fn token_scores(model: &dyn Model, corpus: &Corpus, class: usize) -> Result<Vec<TokenScore>> {
    if class >= model.num_classes() {
        return Err(Error::Config(format!(
            "class {class} out of range for {} classes",
            model.num_classes()
        )));
    }
    let mut scores = Vec::new();
    for (doc_id, doc) in corpus.documents.iter().enumerate() {
        let fwd = model.forward(doc, Mode::Infer)?;
        for (pos, token) in doc.tokens.iter().enumerate() {
            scores.push(TokenScore {
                token: token.clone(),
                score: fwd.token_logits.get(pos, class),
                document: doc_id,
                position: pos,
            });
        }
    }
    Ok(scores)
}

/// Averages token scores per distinct token string and returns the top
/// `top_k` (clamped to the vocabulary seen); ties order lexicographically.
pub fn rank_tokens(
    model: &dyn Model,
    corpus: &Corpus,
    class: usize,
    top_k: usize,
) -> Result<Vec<RankedToken>> {
    let mut sums: indexmap::IndexMap<String, (f64, usize)> = indexmap::IndexMap::new();
    for score in token_scores(model, corpus, class)? {
        let entry = sums.entry(score.token).or_insert((0.0, 0));
        entry.0 += score.score;
        entry.1 += 1;
    }
    let mut ranked: Vec<RankedToken> = sums
        .into_iter()
        .map(|(token, (sum, count))| RankedToken {
            token,
            mean_score: sum / count as f64,
            count,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.mean_score
            .partial_cmp(&a.mean_score)
            .unwrap()
            .then_with(|| a.token.cmp(&b.token))
    });
    ranked.truncate(top_k);
    Ok(ranked)
}

/// One head row: the weights of a feature across classes, the class it
/// favors and by how much.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyRow {
    pub feature: String,
    pub weights: Vec<f64>,
    pub argmax_class: usize,
    /// Largest entry minus the second largest.
    pub margin: f64,
}

/// Per-feature saliency of the linear head.
pub fn head_saliency(model: &ParcusModel) -> Vec<SaliencyRow> {
    let names = model.match_cfg.feature_names();
    names
        .into_iter()
        .enumerate()
        .map(|(f, feature)| {
            let weights: Vec<f64> = model.head.weights.row(f).to_vec();
            let argmax_class = crate::model::argmax_tie_low(&weights);
            let mut sorted = weights.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let margin = if sorted.len() > 1 {
                sorted[0] - sorted[1]
            } else {
                0.0
            };
            SaliencyRow {
                feature,
                weights,
                argmax_class,
                margin,
            }
        })
        .collect()
}

/// Prototype whose plain matching feature carries the largest head weight
/// for `class`.
pub fn dominant_prototype(model: &ParcusModel, class: usize) -> usize {
    let mut best = 0;
    for k in 1..model.match_cfg.num_prototypes {
        if model.head.weights.get(k, class) > model.head.weights.get(best, class) {
            best = k;
        }
    }
    best
}

/// Vocabulary tokens ranked by cosine similarity to prototype `k`;
/// ties order lexicographically.
pub fn prototype_neighbors(
    model: &ParcusModel,
    table: &EmbeddingTable,
    prototype: usize,
    top_k: usize,
) -> Result<Vec<(String, f64)>> {
    if prototype >= model.match_cfg.num_prototypes {
        return Err(Error::Config(format!(
            "prototype index {prototype} out of range for {} prototypes",
            model.match_cfg.num_prototypes
        )));
    }
    let p = model.prototypes.vectors.row(prototype);
    let mut scored: Vec<(String, f64)> = table
        .iter()
        .map(|(token, v)| Ok((token.to_string(), cosine(v, p)?)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_k);
    Ok(scored)
}
