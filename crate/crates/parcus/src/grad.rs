//! Hand-derived backpropagation and its finite-difference oracle.
//!
//! The chain runs: softmax/cross-entropy fusion -> boosted token sum ->
//! linear head -> logic combinators -> gate -> similarity -> prototypes
//! (and the bilinear matrix when enabled). Input embeddings are fixed
//! features and receive no gradient. The boost factor `f(r^j)` multiplies
//! every token's contribution to every parameter gradient.

use crate::data::Document;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::matching::{or_term_derivative, LogicMode, Similarity, TokenMatch};
use crate::model::{cross_entropy, loss, softmax_error, LossConfig, Mode, Model, ParcusModel};

/// One gradient block; shapes mirror the owning parameter block.
#[derive(Clone, Debug)]
pub struct GradBlock {
    pub name: &'static str,
    pub grad: Matrix,
}

/// Parameter-shaped gradient accumulators, ordered like [`Model::blocks`].
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub blocks: Vec<GradBlock>,
}

impl GradientSet {
    pub fn zeros_like(model: &dyn Model) -> GradientSet {
        GradientSet {
            blocks: model
                .blocks()
                .iter()
                .map(|b| GradBlock {
                    name: b.name,
                    grad: Matrix::zeros(b.value.rows(), b.value.cols()),
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.blocks.iter().find(|b| b.name == name).map(|b| &b.grad)
    }

    fn get_mut(&mut self, name: &str) -> &mut Matrix {
        &mut self
            .blocks
            .iter_mut()
            .find(|b| b.name == name)
            .expect("block exists")
            .grad
    }

    pub fn check_finite(&self) -> Result<()> {
        for block in &self.blocks {
            if !block.grad.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in block '{}'",
                    block.name
                )));
            }
        }
        Ok(())
    }
}

/// Matching intermediates and boosted aggregates for one document.
struct DocCache {
    matches: Vec<TokenMatch>,
    boosts: Vec<f64>,
    doc_logits: Vec<f64>,
    /// S_f = sum_j f(r^j) * Delta_f(x^j); the head weight gradient is its
    /// outer product with the document error.
    boosted_features: Vec<f64>,
    boost_sum: f64,
}

fn forward_cache(model: &ParcusModel, doc: &Document, mode: Mode) -> Result<DocCache> {
    let classes = model.num_classes();
    let f_count = model.match_cfg.feature_count();
    let mut cache = DocCache {
        matches: Vec::with_capacity(doc.len()),
        boosts: Vec::with_capacity(doc.len()),
        doc_logits: vec![0.0; classes],
        boosted_features: vec![0.0; f_count],
        boost_sum: 0.0,
    };
    for (j, x) in doc.vectors.iter().enumerate() {
        let tm = model.token_match(x)?;
        let b = match mode {
            Mode::Train => model.boost_factor(doc.rationale[j]),
            Mode::Infer => 1.0,
        };
        let mut token_logits = vec![0.0; classes];
        model.head.apply(&tm.features, &mut token_logits);
        for (acc, &y) in cache.doc_logits.iter_mut().zip(&token_logits) {
            *acc += b * y;
        }
        for (acc, &phi) in cache.boosted_features.iter_mut().zip(&tm.features) {
            *acc += b * phi;
        }
        cache.boost_sum += b;
        cache.matches.push(tm);
        cache.boosts.push(b);
    }
    Ok(cache)
}

/// Distributes a document-level error vector (d loss / d doc_logits) onto
/// every trainable block.
fn backprop_doc(
    model: &ParcusModel,
    doc: &Document,
    cache: &DocCache,
    err: &[f64],
    scale: f64,
    grads: &mut GradientSet,
) {
    let n = model.embedding_dim();
    let num_p = model.match_cfg.num_prototypes;
    let f_count = model.match_cfg.feature_count();
    let ln_a = model.match_cfg.gate_base.ln();

    {
        let d_w = grads.get_mut("head_weights");
        for (f, &sf) in cache.boosted_features.iter().enumerate() {
            for (c, &e) in err.iter().enumerate() {
                d_w.add_at(f, c, scale * sf * e);
            }
        }
    }
    if model.head.use_bias {
        let d_b = grads.get_mut("head_bias");
        for (c, &e) in err.iter().enumerate() {
            d_b.add_at(0, c, scale * cache.boost_sum * e);
        }
    }

    // Feature-space error, shared by every token up to its boost:
    // werr_f = sum_c W[f][c] * err_c.
    let mut werr = vec![0.0; f_count];
    for (f, w) in werr.iter_mut().enumerate() {
        *w = dot(model.head.weights.row(f), err);
    }

    for (j, (tm, &b)) in cache.matches.iter().zip(&cache.boosts).enumerate() {
        let token_scale = scale * b;
        let x = &doc.vectors[j];

        // Gradient w.r.t. each phi_k, folding in the logic features.
        let mut d_phi: Vec<f64> = (0..num_p).map(|k| token_scale * werr[k]).collect();
        let d_neg: Vec<f64> = if model.match_cfg.use_negation {
            (0..num_p).map(|k| token_scale * werr[num_p + k]).collect()
        } else {
            Vec::new()
        };

        if model.match_cfg.use_logic {
            let base = num_p
                + if model.match_cfg.use_negation {
                    num_p
                } else {
                    0
                };
            // XOR = OR - AND folds into the AND/OR cotangents.
            let g_and = token_scale * (werr[base] - werr[base + 2]);
            let g_or = token_scale * (werr[base + 1] + werr[base + 2]);
            match model.match_cfg.logic_mode {
                LogicMode::Pseudo => {
                    d_phi[tm.min_idx] += g_and;
                    d_phi[tm.max_idx] += g_or;
                }
                LogicMode::Differentiable => {
                    // AND = prod(phis)
                    for (k, d) in d_phi.iter_mut().enumerate() {
                        let mut partial = 1.0;
                        for (l, &phi) in tm.phis.iter().enumerate() {
                            if l != k {
                                partial *= phi;
                            }
                        }
                        *d += g_and * partial;
                    }
                    // OR = left fold of the pairwise form; reverse pass over
                    // the stored accumulators.
                    let s = model.match_cfg.logic_sharpness;
                    let mut g = g_or;
                    for m in (1..num_p).rev() {
                        d_phi[m] += g * (or_term_derivative(tm.phis[m], s) - tm.fold_acc[m - 1]);
                        g *= or_term_derivative(tm.fold_acc[m - 1], s) - tm.phis[m];
                    }
                    d_phi[0] += g;
                }
            }
        }

        // Chain through the gate: phi = a^(d-1), opposite phi = a^(-d-1).
        let mut d_sim = vec![0.0; num_p];
        for k in 0..num_p {
            d_sim[k] = d_phi[k] * ln_a * tm.phis[k];
            if model.match_cfg.use_negation {
                d_sim[k] -= d_neg[k] * ln_a * tm.neg_phis[k];
            }
        }

        // Chain through the similarity into the trainable blocks.
        match model.match_cfg.similarity {
            Similarity::Cosine => {
                if !model.freeze_prototypes {
                    let nx = norm(x);
                    let d_p = grads.get_mut("prototypes");
                    for (k, &ds) in d_sim.iter().enumerate() {
                        if ds == 0.0 {
                            continue;
                        }
                        let p = model.prototypes.vectors.row(k);
                        let np = norm(p);
                        let inv = 1.0 / (nx * np);
                        let d_k = tm.sims[k];
                        for i in 0..n {
                            d_p.add_at(k, i, ds * (x[i] * inv - d_k * p[i] / (np * np)));
                        }
                    }
                }
            }
            Similarity::Bilinear => {
                let w_b = &model
                    .bilinear
                    .as_ref()
                    .expect("validated bilinear matrix")
                    .matrix;
                // d = tanh(u), u = x^T W_b p
                for (k, &ds) in d_sim.iter().enumerate() {
                    let du = ds * (1.0 - tm.sims[k] * tm.sims[k]);
                    if du == 0.0 {
                        continue;
                    }
                    if !model.freeze_prototypes {
                        let d_p = grads.get_mut("prototypes");
                        for j2 in 0..n {
                            let mut wtx = 0.0;
                            for (i, &xi) in x.iter().enumerate() {
                                wtx += xi * w_b.get(i, j2);
                            }
                            d_p.add_at(k, j2, du * wtx);
                        }
                    }
                    let p = model.prototypes.vectors.row(k).to_vec();
                    let d_wb = grads.get_mut("bilinear");
                    for (i, &xi) in x.iter().enumerate() {
                        for (j2, &pj) in p.iter().enumerate() {
                            d_wb.add_at(i, j2, du * xi * pj);
                        }
                    }
                }
            }
        }
    }
}

/// Exact gradient of [`loss`] for a PARCUS model.
pub fn parcus_backward(
    model: &ParcusModel,
    batch: &[Document],
    cfg: &LossConfig,
) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(Error::Config("backward over an empty batch".into()));
    }
    let mut grads = GradientSet::zeros_like(model);
    let scale = 1.0 / batch.len() as f64;
    let mut total_ce = 0.0;

    for doc in batch {
        let cache = forward_cache(model, doc, Mode::Train)?;
        total_ce += cross_entropy(&cache.doc_logits, doc.label);
        let err = softmax_error(&cache.doc_logits, doc.label);
        backprop_doc(model, doc, &cache, &err, scale, &mut grads);
    }

    // Elastic-net terms enter once per batch; sign(0) = 0 for the l1 part.
    {
        let d_w = grads.get_mut("head_weights");
        for (slot, &w) in d_w
            .as_mut_slice()
            .iter_mut()
            .zip(model.head.weights.as_slice())
        {
            if w != 0.0 {
                *slot += cfg.l1 * w.signum();
            }
            *slot += 2.0 * cfg.l2 * w;
        }
    }

    grads.check_finite()?;
    let total = total_ce / batch.len() as f64 + crate::model::penalty(model, cfg);
    Ok((total, grads))
}

/// Gradient of `cotangent . doc_logits` for a single document. This is the
/// inner factor of the loss gradient and makes the boost identity directly
/// observable: with one token, the train-mode gradient is exactly `f(r)`
/// times the unboosted one.
pub fn doc_logit_gradient(
    model: &ParcusModel,
    doc: &Document,
    cotangent: &[f64],
    mode: Mode,
) -> Result<GradientSet> {
    if cotangent.len() != model.num_classes() {
        return Err(Error::Dimension(format!(
            "cotangent has {} entries, model has {} classes",
            cotangent.len(),
            model.num_classes()
        )));
    }
    let mut grads = GradientSet::zeros_like(model);
    let cache = forward_cache(model, doc, mode)?;
    backprop_doc(model, doc, &cache, cotangent, 1.0, &mut grads);
    grads.check_finite()?;
    Ok(grads)
}

/// Per-block result of a finite-difference comparison.
#[derive(Clone, Debug)]
pub struct BlockCheck {
    pub name: &'static str,
    /// `|num - ana| / max(|num| + |ana|, 1e-3)` maximized over entries; the
    /// floor folds the near-zero absolute tolerance (1e-8 at the 1e-5
    /// relative gate) into a single score.
    pub max_error: f64,
    pub entries: usize,
}

/// Report of [`finite_diff_check`].
#[derive(Clone, Debug)]
pub struct FiniteDiffReport {
    pub step: f64,
    pub blocks: Vec<BlockCheck>,
}

impl FiniteDiffReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_error() <= tol
    }
}

const REL_DENOM_FLOOR: f64 = 1e-3;

/// One cell of the gradient-oracle configuration matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellConfig {
    pub pseudo_logic: bool,
    pub negation: bool,
    pub logic: bool,
    pub cosine: bool,
    pub boosted: bool,
}

impl CellConfig {
    pub fn label(&self) -> String {
        format!(
            "{}_{}_{}_{}_{}",
            if self.pseudo_logic { "pseudo" } else { "diff" },
            if self.negation { "neg" } else { "noneg" },
            if self.logic { "logic" } else { "nologic" },
            if self.cosine { "cos" } else { "bilin" },
            if self.boosted { "boost" } else { "noboost" },
        )
    }
}

/// All 2^5 configuration cells of the gradient oracle.
pub fn all_cells() -> Vec<CellConfig> {
    let mut cells = Vec::with_capacity(32);
    for pseudo_logic in [true, false] {
        for negation in [true, false] {
            for logic in [true, false] {
                for cosine in [true, false] {
                    for boosted in [true, false] {
                        cells.push(CellConfig {
                            pseudo_logic,
                            negation,
                            logic,
                            cosine,
                            boosted,
                        });
                    }
                }
            }
        }
    }
    cells
}

/// Random small model and batch exercising one configuration cell.
/// Head magnitudes stay off zero so the l1 kink is not straddled, and
/// matching probabilities are resampled away from pseudo min/max ties
/// (finite differences are undefined across those kinks).
pub fn cell_fixture(cell: CellConfig, seed: u64) -> (ParcusModel, Vec<Document>) {
    use crate::linalg::normalize;
    use crate::matching::{BilinearSimilarity, MatchConfig, PrototypeSet};
    use crate::model::LinearHead;
    use crate::rng::{standard_normal, substream};
    use rand::Rng;

    let n = 4;
    let num_p = 2;
    let classes = 2;
    'resample: for attempt in 0..100 {
        let mut rng = substream(seed.wrapping_add(attempt * 7919), "gradcheck");
        let match_cfg = MatchConfig {
            gate_base: if rng.gen_bool(0.5) { 10.0 } else { 100.0 },
            num_prototypes: num_p,
            use_negation: cell.negation,
            use_logic: cell.logic,
            logic_mode: if cell.pseudo_logic {
                LogicMode::Pseudo
            } else {
                LogicMode::Differentiable
            },
            logic_sharpness: 2.0,
            similarity: if cell.cosine {
                Similarity::Cosine
            } else {
                Similarity::Bilinear
            },
        };
        let mut proto_rows = Vec::new();
        for _ in 0..num_p {
            let mut row: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            normalize(&mut row);
            proto_rows.push(row);
        }
        let f = match_cfg.feature_count();
        let mut head = LinearHead::zeros(f, classes, true);
        for v in head.weights.as_mut_slice() {
            let mag = rng.gen_range(0.05..0.5);
            *v = if rng.gen_bool(0.5) { mag } else { -mag };
        }
        for v in head.bias.as_mut_slice() {
            *v = rng.gen_range(-0.2..0.2);
        }
        let bilinear = (!cell.cosine).then(|| {
            let mut m = Matrix::zeros(n, n);
            for v in m.as_mut_slice() {
                *v = standard_normal(&mut rng) / n as f64;
            }
            BilinearSimilarity { matrix: m }
        });
        let model = ParcusModel {
            match_cfg,
            prototypes: PrototypeSet {
                vectors: Matrix::from_rows(&proto_rows),
            },
            head,
            bilinear,
            boost_base: if cell.boosted {
                std::f64::consts::E
            } else {
                1.0
            },
            num_classes: classes,
            freeze_prototypes: false,
        };

        let mut batch = Vec::new();
        for d in 0..2 {
            let t = 3;
            let vectors: Vec<Vec<f64>> = (0..t)
                .map(|_| {
                    let mut v: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
                    normalize(&mut v);
                    v
                })
                .collect();
            let rationale: Vec<u8> = (0..t)
                .map(|_| u8::from(cell.boosted && rng.gen_bool(0.5)))
                .collect();
            batch.push(Document {
                tokens: vec![String::new(); t],
                vectors,
                rationale,
                label: d % classes,
            });
        }

        if cell.pseudo_logic && cell.logic {
            for doc in &batch {
                for x in &doc.vectors {
                    let tm = model.token_match(x).expect("fixture vectors are valid");
                    for i in 0..tm.phis.len() {
                        for j in (i + 1)..tm.phis.len() {
                            if (tm.phis[i] - tm.phis[j]).abs() < 1e-3 {
                                continue 'resample;
                            }
                        }
                    }
                }
            }
        }
        return (model, batch);
    }
    unreachable!("tie-free configuration not found in 100 attempts");
}

/// Worst finite-difference score per configuration cell, maximized over
/// `seeds_per_cell` random fixtures (the acceptance gradient oracle).
pub fn check_all_cells(seeds_per_cell: u64, h: f64) -> Result<Vec<(CellConfig, f64)>> {
    let cfg = LossConfig {
        l1: 1e-2,
        l2: 1e-3,
        positive_class: 1,
    };
    let mut results = Vec::new();
    for (idx, cell) in all_cells().into_iter().enumerate() {
        let mut worst = 0.0f64;
        for seed in 0..seeds_per_cell {
            let (model, batch) = cell_fixture(cell, seed * 31 + idx as u64 + 1);
            let report = finite_diff_check(&model, &batch, &cfg, h)?;
            worst = worst.max(report.max_error());
        }
        results.push((cell, worst));
    }
    Ok(results)
}

/// Central-difference check of a model's analytic gradients against its
/// own loss; deterministic, perturbs only trainable blocks.
pub fn finite_diff_check<M: Model + Clone>(
    model: &M,
    batch: &[Document],
    cfg: &LossConfig,
    h: f64,
) -> Result<FiniteDiffReport> {
    let (_, grads) = model.backward(batch, cfg)?;
    check_gradients(model, &grads, h, |m| loss(m, batch, cfg))
}

/// The checker core, usable against any differentiable objective; the
/// gradient-oracle tests also run it on analytic functions.
pub fn check_gradients<M, F>(
    model: &M,
    analytic: &GradientSet,
    h: f64,
    loss_fn: F,
) -> Result<FiniteDiffReport>
where
    M: Model + Clone,
    F: Fn(&M) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::Config(
            "finite-difference step must be positive".into(),
        ));
    }
    let mut report = FiniteDiffReport {
        step: h,
        blocks: Vec::new(),
    };
    let trainable: Vec<(usize, &'static str, usize)> = model
        .blocks()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.trainable)
        .map(|(i, b)| (i, b.name, b.value.len()))
        .collect();

    for (block_idx, name, len) in trainable {
        let ana = &analytic.blocks[block_idx].grad;
        let mut max_error = 0.0f64;
        for e in 0..len {
            let mut plus = model.clone();
            plus.blocks_mut()[block_idx].value.as_mut_slice()[e] += h;
            let mut minus = model.clone();
            minus.blocks_mut()[block_idx].value.as_mut_slice()[e] -= h;
            let num = (loss_fn(&plus)? - loss_fn(&minus)?) / (2.0 * h);
            let a = ana.as_slice()[e];
            let score = (num - a).abs() / (num.abs() + a.abs()).max(REL_DENOM_FLOOR);
            if score > max_error {
                max_error = score;
            }
        }
        report.blocks.push(BlockCheck {
            name,
            max_error,
            entries: len,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParamBlock, ParamBlockMut};

    fn random_cell_model(
        pseudo: bool,
        negation: bool,
        logic: bool,
        cosine_sim: bool,
        boosted: bool,
        seed: u64,
    ) -> (ParcusModel, Vec<Document>) {
        cell_fixture(
            CellConfig {
                pseudo_logic: pseudo,
                negation,
                logic,
                cosine: cosine_sim,
                boosted,
            },
            seed,
        )
    }

    fn cell_cfg() -> LossConfig {
        LossConfig {
            l1: 1e-2,
            l2: 1e-3,
            positive_class: 1,
        }
    }

    #[test]
    fn single_token_gradient_scales_by_boost_factor() {
        let (model, _) = random_cell_model(true, true, true, true, true, 3);
        let make = |flag: u8| Document {
            tokens: vec![String::new()],
            vectors: vec![vec![0.6, -0.2, 0.5, 0.1]],
            rationale: vec![flag],
            label: 1,
        };
        let cot = vec![0.3, -0.7];
        let boosted = doc_logit_gradient(&model, &make(1), &cot, Mode::Train).unwrap();
        let plain = doc_logit_gradient(&model, &make(0), &cot, Mode::Train).unwrap();
        for (gb, gp) in boosted.blocks.iter().zip(&plain.blocks) {
            for (&b, &p) in gb.grad.as_slice().iter().zip(gp.grad.as_slice()) {
                let want = std::f64::consts::E * p;
                assert!(
                    (b - want).abs() <= 1e-13 * want.abs().max(1.0),
                    "block {}: {b} vs e*{p}",
                    gb.name
                );
            }
        }
    }

    #[test]
    fn infer_mode_logit_gradient_ignores_rationale() {
        let (model, batch) = random_cell_model(true, false, true, true, true, 9);
        let doc = &batch[0];
        let mut unflagged = doc.clone();
        unflagged.rationale = vec![0; doc.len()];
        let cot = vec![1.0, 0.0];
        let a = doc_logit_gradient(&model, doc, &cot, Mode::Infer).unwrap();
        let b = doc_logit_gradient(&model, &unflagged, &cot, Mode::Infer).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert_eq!(x.grad, y.grad);
        }
    }

    #[test]
    fn l1_subgradient_is_zero_at_zero_weights() {
        let (mut model, batch) = random_cell_model(true, false, false, true, false, 5);
        for v in model.head.weights.as_mut_slice() {
            *v = 0.0;
        }
        for v in model.head.bias.as_mut_slice() {
            *v = 0.0;
        }
        // With W = 0 the data gradient of W is nonzero, but the l1 part
        // contributes nothing: compare against the l1-free gradient.
        let cfg = LossConfig {
            l1: 1.0,
            l2: 0.0,
            positive_class: 1,
        };
        let cfg0 = LossConfig {
            l1: 0.0,
            l2: 0.0,
            positive_class: 1,
        };
        let (_, grads) = model.backward(&batch, &cfg).unwrap();
        let (_, grads0) = model.backward(&batch, &cfg0).unwrap();
        assert_eq!(
            grads.get("head_weights").unwrap(),
            grads0.get("head_weights").unwrap()
        );
    }

    #[test]
    fn gradients_match_finite_differences_on_random_cells() {
        for (cell, worst) in check_all_cells(3, 1e-5).unwrap() {
            assert!(worst <= 1e-5, "cell {}: {worst}", cell.label());
        }
    }

    #[test]
    fn scaling_token_vectors_leaves_cosine_prototype_gradient_unchanged() {
        let (model, mut batch) = random_cell_model(true, true, true, true, true, 11);
        let (_, grads) = model.backward(&batch, &cell_cfg()).unwrap();
        for doc in &mut batch {
            for v in &mut doc.vectors {
                for x in v.iter_mut() {
                    *x *= 3.7;
                }
            }
        }
        let (_, grads_scaled) = model.backward(&batch, &cell_cfg()).unwrap();
        let a = grads.get("prototypes").unwrap();
        let b = grads_scaled.get("prototypes").unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_rationale_batch_matches_boost_disabled_model() {
        let (model, mut batch) = random_cell_model(true, false, true, true, true, 17);
        for doc in &mut batch {
            doc.rationale = vec![0; doc.len()];
        }
        let mut unboosted = model.clone();
        unboosted.boost_base = 1.0;
        let (la, ga) = model.backward(&batch, &cell_cfg()).unwrap();
        let (lb, gb) = unboosted.backward(&batch, &cell_cfg()).unwrap();
        assert_eq!(la, lb);
        for (a, b) in ga.blocks.iter().zip(&gb.blocks) {
            assert_eq!(a.grad, b.grad);
        }
    }

    #[test]
    fn frozen_prototypes_receive_no_gradient_and_skip_the_check() {
        let (mut model, batch) = random_cell_model(true, false, true, true, false, 23);
        model.freeze_prototypes = true;
        let (_, grads) = model.backward(&batch, &cell_cfg()).unwrap();
        assert!(grads.get("prototypes").unwrap().iter().all(|&g| g == 0.0));
        let report = finite_diff_check(&model, &batch, &cell_cfg(), 1e-5).unwrap();
        assert!(report.blocks.iter().all(|b| b.name != "prototypes"));
        assert!(report.passes(1e-5));
    }

    #[test]
    fn backward_loss_equals_loss_fn() {
        let (model, batch) = random_cell_model(false, true, true, false, true, 29);
        let (l_bwd, _) = model.backward(&batch, &cell_cfg()).unwrap();
        let l_fwd = loss(&model, &batch, &cell_cfg()).unwrap();
        assert_eq!(l_bwd, l_fwd);
    }

    /// Analytic fixture for the checker itself: f(w) = sum(c_i * w_i^2).
    #[derive(Clone)]
    struct Quadratic {
        coeffs: Vec<f64>,
        weights: Matrix,
    }

    impl Quadratic {
        fn value(&self) -> f64 {
            self.coeffs
                .iter()
                .zip(self.weights.as_slice())
                .map(|(c, w)| c * w * w)
                .sum()
        }
    }

    impl Model for Quadratic {
        fn num_classes(&self) -> usize {
            2
        }
        fn forward(
            &self,
            _: &Document,
            _: Mode,
        ) -> crate::error::Result<crate::model::DocumentForward> {
            Err(Error::Config("not a classifier".into()))
        }
        fn backward(
            &self,
            _: &[Document],
            _: &LossConfig,
        ) -> crate::error::Result<(f64, GradientSet)> {
            let mut grad = Matrix::zeros(1, self.coeffs.len());
            for (i, (&c, &w)) in self.coeffs.iter().zip(self.weights.as_slice()).enumerate() {
                grad.set(0, i, 2.0 * c * w);
            }
            Ok((
                self.value(),
                GradientSet {
                    blocks: vec![GradBlock {
                        name: "weights",
                        grad,
                    }],
                },
            ))
        }
        fn blocks(&self) -> Vec<ParamBlock<'_>> {
            vec![ParamBlock {
                name: "weights",
                value: &self.weights,
                penalized: false,
                trainable: true,
            }]
        }
        fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
            vec![ParamBlockMut {
                name: "weights",
                value: &mut self.weights,
                penalized: false,
                trainable: true,
            }]
        }
    }

    #[test]
    fn checker_self_test_on_quadratic() {
        let q = Quadratic {
            coeffs: vec![0.5, -1.25, 2.0, 3.5],
            weights: Matrix::from_rows(&[vec![0.3, -0.7, 1.1, 0.05]]),
        };
        let (_, grads) = q.backward(&[], &LossConfig::default()).unwrap();
        let report = check_gradients(&q, &grads, 1e-5, |m| Ok(m.value())).unwrap();
        assert!(
            report.max_error() <= 1e-9,
            "quadratic self-test error {}",
            report.max_error()
        );
    }

    #[test]
    fn checker_rejects_nonpositive_step() {
        let (model, batch) = random_cell_model(true, false, false, true, false, 1);
        assert!(finite_diff_check(&model, &batch, &cell_cfg(), 0.0).is_err());
    }
}
