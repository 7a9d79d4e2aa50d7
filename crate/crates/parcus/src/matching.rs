//! Concept matching: gated similarities and logic feature combination.
//!
//! A token embedding is compared against every prototype; the similarity is
//! squashed through `g(d) = a^(d-1)`, which approaches a hard-match
//! indicator as `a` grows. Matching probabilities are optionally augmented
//! with opposite-matching features `g(-d)` and AND/OR/XOR combinations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

/// Norm guard for cosine denominators.
pub const EPS_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicMode {
    /// min/max combinators with first-index subgradient routing.
    Pseudo,
    /// Smooth product/saturating-sum surrogates.
    Differentiable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Cosine,
    Bilinear,
}

/// Configuration of the matching layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Gate base `a`; must exceed 1.
    pub gate_base: f64,
    pub num_prototypes: usize,
    /// Adds opposite-matching features `g(-d)`.
    pub use_negation: bool,
    /// Adds AND/OR/XOR features over the plain matching probabilities.
    pub use_logic: bool,
    pub logic_mode: LogicMode,
    /// Sharpness `s` of the differentiable OR; ignored in pseudo mode.
    pub logic_sharpness: f64,
    pub similarity: Similarity,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            gate_base: 100.0,
            num_prototypes: 5,
            use_negation: false,
            use_logic: true,
            logic_mode: LogicMode::Pseudo,
            logic_sharpness: 2.0,
            similarity: Similarity::Cosine,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gate_base <= 1.0 {
            return Err(Error::Config(format!(
                "gate base must exceed 1, got {}",
                self.gate_base
            )));
        }
        if self.num_prototypes == 0 {
            return Err(Error::Config("at least one prototype is required".into()));
        }
        if self.use_logic && self.logic_mode == LogicMode::Differentiable && self.num_prototypes < 2
        {
            return Err(Error::Config(
                "differentiable logic requires at least two prototypes".into(),
            ));
        }
        if self.logic_sharpness < 1.0 {
            return Err(Error::Config(format!(
                "logic sharpness must be >= 1, got {}",
                self.logic_sharpness
            )));
        }
        Ok(())
    }

    /// Width of the feature vector: N plain features, N opposite-matching
    /// features when enabled, three logic features when enabled.
    pub fn feature_count(&self) -> usize {
        let n = self.num_prototypes;
        n + if self.use_negation { n } else { 0 } + if self.use_logic { 3 } else { 0 }
    }

    /// Feature labels in vector order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.num_prototypes)
            .map(|k| format!("phi_{k}"))
            .collect();
        if self.use_negation {
            names.extend((1..=self.num_prototypes).map(|k| format!("phi_not_{k}")));
        }
        if self.use_logic {
            names.extend(["and", "or", "xor"].map(String::from));
        }
        names
    }
}

/// Trainable prototype vectors, one per matched concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub vectors: Matrix,
}

impl PrototypeSet {
    pub fn num_prototypes(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// Checked after every optimizer update: entries finite, no prototype
    /// collapsed to zero.
    pub fn guard(&self) -> Result<()> {
        if !self.vectors.all_finite() {
            return Err(Error::Numeric("prototype entries are non-finite".into()));
        }
        for k in 0..self.num_prototypes() {
            if norm(self.vectors.row(k)) < EPS_NORM {
                return Err(Error::Numeric(format!("prototype {k} collapsed to zero")));
            }
        }
        Ok(())
    }
}

/// Trainable matrix of the bilinear similarity `tanh(x^T W_b p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearSimilarity {
    pub matrix: Matrix,
}

/// Cosine similarity in `[-1, 1]`; errors on mismatched dimensions or a
/// degenerate norm.
pub fn cosine(x: &[f64], p: &[f64]) -> Result<f64> {
    if x.len() != p.len() {
        return Err(Error::Dimension(format!(
            "cosine over {} vs {} components",
            x.len(),
            p.len()
        )));
    }
    let nx = norm(x);
    let np = norm(p);
    if nx < EPS_NORM || np < EPS_NORM {
        return Err(Error::Numeric("cosine of a near-zero vector".into()));
    }
    // Clamp rounding spill so downstream gates stay within (0, 1].
    Ok((dot(x, p) / (nx * np)).clamp(-1.0, 1.0))
}

/// Bilinear similarity `tanh(x^T W_b p)` in `(-1, 1)`.
pub fn bilinear(x: &[f64], p: &[f64], w_b: &Matrix) -> Result<f64> {
    if w_b.rows() != x.len() || w_b.cols() != p.len() {
        return Err(Error::Dimension(format!(
            "bilinear form {}x{} against vectors of {} and {} components",
            w_b.rows(),
            w_b.cols(),
            x.len(),
            p.len()
        )));
    }
    let mut form = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        form += xi * dot(w_b.row(i), p);
    }
    Ok(form.tanh())
}

/// Matching probability `a^(d-1)`; equals 1 iff `d == 1`.
pub fn gate(d: f64, a: f64) -> Result<f64> {
    if a <= 1.0 {
        return Err(Error::Config(format!("gate base must exceed 1, got {a}")));
    }
    Ok(a.powf(d - 1.0))
}

/// min/max/difference combinators over matching probabilities.
pub fn logic_pseudo(phis: &[f64]) -> Result<(f64, f64, f64)> {
    let (and, or, _, _) = logic_pseudo_indexed(phis)?;
    Ok((and, or, or - and))
}

/// Same as [`logic_pseudo`] but also reports the first attaining indices,
/// which receive the subgradient.
pub(crate) fn logic_pseudo_indexed(phis: &[f64]) -> Result<(f64, f64, usize, usize)> {
    if phis.is_empty() {
        return Err(Error::Config(
            "logic combinators need at least one input".into(),
        ));
    }
    let mut min = phis[0];
    let mut max = phis[0];
    let mut min_idx = 0;
    let mut max_idx = 0;
    for (k, &phi) in phis.iter().enumerate().skip(1) {
        if phi < min {
            min = phi;
            min_idx = k;
        }
        if phi > max {
            max = phi;
            max_idx = k;
        }
    }
    Ok((min, max, min_idx, max_idx))
}

/// Saturating-sum term of the differentiable OR.
///
/// The printed `(t-2)^(-2s)` has a negative base; for even integer
/// exponents it equals `(2-t)^(-2s)`, which is the continuous extension
/// used here so that non-integer sharpness values stay defined.
fn or_term(t: f64, s: f64) -> f64 {
    (2.0 - t).powf(-2.0 * s) - 2.0f64.powf(-2.0 * s) * (1.0 - t)
}

pub(crate) fn or_term_derivative(t: f64, s: f64) -> f64 {
    2.0 * s * (2.0 - t).powf(-2.0 * s - 1.0) + 2.0f64.powf(-2.0 * s)
}

/// Two-argument differentiable OR.
pub(crate) fn or_pair(u: f64, v: f64, s: f64) -> f64 {
    or_term(u, s) + or_term(v, s) - u * v
}

/// Smooth AND/OR/XOR: AND is the product of all inputs, OR a left fold of
/// the two-argument saturating form, XOR their difference. Exact on
/// Boolean corners.
pub fn logic_differentiable(phis: &[f64], s: f64) -> Result<(f64, f64, f64)> {
    if phis.len() < 2 {
        return Err(Error::Config(
            "differentiable logic needs at least two inputs".into(),
        ));
    }
    let and: f64 = phis.iter().product();
    let mut or = phis[0];
    for &phi in &phis[1..] {
        or = or_pair(or, phi, s);
    }
    Ok((and, or, or - and))
}

/// Closed-form area between the gate and the hard-match indicator over
/// cosine's `[-1, 1]` co-domain.
pub fn delta_area(a: f64) -> Result<f64> {
    if a <= 1.0 {
        return Err(Error::Config(format!("gate base must exceed 1, got {a}")));
    }
    Ok((a * a - 1.0) / (a * a * a.ln()))
}

/// Forward intermediates for one token, retained for backpropagation.
#[derive(Clone, Debug)]
pub(crate) struct TokenMatch {
    /// Raw similarities d_k.
    pub sims: Vec<f64>,
    /// Gated matching probabilities g(d_k).
    pub phis: Vec<f64>,
    /// Opposite-matching probabilities g(-d_k); empty when negation is off.
    pub neg_phis: Vec<f64>,
    /// Accumulators of the differentiable OR fold (fold_acc[k] is the OR of
    /// the first k+1 phis); empty in pseudo mode or when logic is off.
    pub fold_acc: Vec<f64>,
    /// First attaining indices for pseudo min/max.
    pub min_idx: usize,
    pub max_idx: usize,
    /// Assembled feature vector.
    pub features: Vec<f64>,
}

impl TokenMatch {
    pub fn compute(
        x: &[f64],
        prototypes: &PrototypeSet,
        cfg: &MatchConfig,
        bilin: Option<&BilinearSimilarity>,
    ) -> Result<TokenMatch> {
        let n = cfg.num_prototypes;
        if prototypes.num_prototypes() != n {
            return Err(Error::Dimension(format!(
                "config declares {n} prototypes, set holds {}",
                prototypes.num_prototypes()
            )));
        }
        let mut sims = Vec::with_capacity(n);
        for k in 0..n {
            let p = prototypes.vectors.row(k);
            let d = match cfg.similarity {
                Similarity::Cosine => cosine(x, p)?,
                Similarity::Bilinear => {
                    let w_b = bilin.ok_or_else(|| {
                        Error::Config("bilinear similarity selected without a matrix".into())
                    })?;
                    bilinear(x, p, &w_b.matrix)?
                }
            };
            sims.push(d);
        }

        let a = cfg.gate_base;
        let phis: Vec<f64> = sims.iter().map(|&d| gate(d, a)).collect::<Result<_>>()?;
        let neg_phis: Vec<f64> = if cfg.use_negation {
            sims.iter().map(|&d| gate(-d, a)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        let mut fold_acc = Vec::new();
        let mut min_idx = 0;
        let mut max_idx = 0;
        let mut logic = None;
        if cfg.use_logic {
            match cfg.logic_mode {
                LogicMode::Pseudo => {
                    let (and, or, lo, hi) = logic_pseudo_indexed(&phis)?;
                    min_idx = lo;
                    max_idx = hi;
                    logic = Some((and, or, or - and));
                }
                LogicMode::Differentiable => {
                    if phis.len() < 2 {
                        return Err(Error::Config(
                            "differentiable logic needs at least two prototypes".into(),
                        ));
                    }
                    let and: f64 = phis.iter().product();
                    fold_acc.push(phis[0]);
                    for &phi in &phis[1..] {
                        let prev = *fold_acc.last().unwrap();
                        fold_acc.push(or_pair(prev, phi, cfg.logic_sharpness));
                    }
                    let or = *fold_acc.last().unwrap();
                    logic = Some((and, or, or - and));
                }
            }
        }

        let mut features = Vec::with_capacity(cfg.feature_count());
        features.extend_from_slice(&phis);
        features.extend_from_slice(&neg_phis);
        if let Some((and, or, xor)) = logic {
            features.extend_from_slice(&[and, or, xor]);
        }

        Ok(TokenMatch {
            sims,
            phis,
            neg_phis,
            fold_acc,
            min_idx,
            max_idx,
            features,
        })
    }
}

/// Per-token feature vector `[phi_1..phi_N, (phi_not_1..phi_not_N), (and, or, xor)]`.
pub fn features(
    x: &[f64],
    prototypes: &PrototypeSet,
    cfg: &MatchConfig,
    bilin: Option<&BilinearSimilarity>,
) -> Result<Vec<f64>> {
    Ok(TokenMatch::compute(x, prototypes, cfg, bilin)?.features)
}
