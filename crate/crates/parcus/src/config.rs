//! Flat key=value run configuration.
//!
//! A run is fully described by one config file plus command-line
//! overrides (overrides win). Every command writes its resolved
//! configuration next to its outputs, so runs are reproducible from the
//! artifacts alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::baselines::{ModelSpec, ParcusVariant};
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::eval::{ProtocolConfig, SelectionMetric};
use crate::matching::{LogicMode, MatchConfig, Similarity};
use crate::model::LossConfig;
use crate::optim::{PrototypeInit, TrainConfig};

/// Union of the model, loss, trainer and protocol settings plus paths.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // model family
    pub model: String,
    pub variant: Option<ParcusVariant>,
    pub hidden_units: usize,
    // matching
    pub prototypes: usize,
    pub gate_base: f64,
    pub negation: bool,
    pub logic: bool,
    pub logic_mode: LogicMode,
    pub logic_sharpness: f64,
    pub similarity: Similarity,
    // head and boosting
    pub boost_base: f64,
    pub bias: bool,
    pub num_classes: usize,
    // loss
    pub l1: f64,
    pub l2: f64,
    pub positive_class: usize,
    // trainer
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub prototype_init: PrototypeInit,
    pub shuffle: bool,
    // protocol
    pub train_sizes: Vec<usize>,
    pub n_splits: usize,
    pub n_retrain: usize,
    pub balanced: bool,
    pub selection_metric: SelectionMetric,
    // harnesses
    pub noise_rates: Vec<f64>,
    pub a_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub top_k: usize,
    pub inspect_class: Option<usize>,
    pub inspect_prototype: Option<usize>,
    // synthetic generation
    pub synth: SyntheticSpec,
    // paths and execution
    pub embeddings: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "parcus".into(),
            variant: None,
            hidden_units: 16,
            prototypes: 5,
            gate_base: 100.0,
            negation: false,
            logic: true,
            logic_mode: LogicMode::Pseudo,
            logic_sharpness: 2.0,
            similarity: Similarity::Cosine,
            boost_base: std::f64::consts::E,
            bias: true,
            num_classes: 2,
            l1: 1e-3,
            l2: 1e-4,
            positive_class: 1,
            learning_rate: 1e-2,
            epochs: 500,
            batch_size: 32,
            seed: 0,
            prototype_init: PrototypeInit::RandomUnit,
            shuffle: true,
            train_sizes: vec![10],
            n_splits: 10,
            n_retrain: 3,
            balanced: true,
            selection_metric: SelectionMetric::Accuracy,
            noise_rates: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            a_values: vec![10.0, 100.0],
            n_values: vec![1, 5, 10],
            top_k: 10,
            inspect_class: None,
            inspect_prototype: None,
            synth: SyntheticSpec::default(),
            embeddings: None,
            corpus: None,
            test_corpus: None,
            checkpoint: None,
            out: PathBuf::from("parcus_out"),
            workers: 1,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true/false, got '{v}'"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

/// "e" or a decimal base.
pub fn parse_boost_base(v: &str) -> Result<f64> {
    if v == "e" {
        Ok(std::f64::consts::E)
    } else {
        parse_num("boost_base", v)
    }
}

impl RunConfig {
    /// Applies one `key = value` pair.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = v.into(),
            "variant" => {
                self.variant = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(ParcusVariant::parse(v)?)
                }
            }
            "hidden_units" => self.hidden_units = parse_num(key, v)?,
            "prototypes" => self.prototypes = parse_num(key, v)?,
            "gate_base" => self.gate_base = parse_num(key, v)?,
            "negation" => self.negation = parse_bool(key, v)?,
            "logic" => self.logic = parse_bool(key, v)?,
            "logic_mode" => {
                self.logic_mode = match v {
                    "pseudo" => LogicMode::Pseudo,
                    "differentiable" => LogicMode::Differentiable,
                    _ => {
                        return Err(Error::Config(format!(
                            "logic_mode: expected pseudo|differentiable, got '{v}'"
                        )))
                    }
                }
            }
            "logic_sharpness" => self.logic_sharpness = parse_num(key, v)?,
            "similarity" => {
                self.similarity = match v {
                    "cosine" => Similarity::Cosine,
                    "bilinear" => Similarity::Bilinear,
                    _ => {
                        return Err(Error::Config(format!(
                            "similarity: expected cosine|bilinear, got '{v}'"
                        )))
                    }
                }
            }
            "boost_base" => self.boost_base = parse_boost_base(v)?,
            "bias" => self.bias = parse_bool(key, v)?,
            "num_classes" => self.num_classes = parse_num(key, v)?,
            "l1" => self.l1 = parse_num(key, v)?,
            "l2" => self.l2 = parse_num(key, v)?,
            "positive_class" => self.positive_class = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "prototype_init" => {
                self.prototype_init = match v {
                    "random_unit" => PrototypeInit::RandomUnit,
                    "annotated_token" => PrototypeInit::AnnotatedToken,
                    _ => {
                        return Err(Error::Config(format!(
                            "prototype_init: expected random_unit|annotated_token, got '{v}'"
                        )))
                    }
                }
            }
            "shuffle" => self.shuffle = parse_bool(key, v)?,
            "train_sizes" => self.train_sizes = parse_list(key, v)?,
            "n_splits" => self.n_splits = parse_num(key, v)?,
            "n_retrain" => self.n_retrain = parse_num(key, v)?,
            "balanced" => self.balanced = parse_bool(key, v)?,
            "selection_metric" => {
                self.selection_metric = match v {
                    "accuracy" => SelectionMetric::Accuracy,
                    "f1" => SelectionMetric::F1,
                    _ => {
                        return Err(Error::Config(format!(
                            "selection_metric: expected accuracy|f1, got '{v}'"
                        )))
                    }
                }
            }
            "noise_rates" => self.noise_rates = parse_list(key, v)?,
            "a_values" => self.a_values = parse_list(key, v)?,
            "n_values" => self.n_values = parse_list(key, v)?,
            "top_k" => self.top_k = parse_num(key, v)?,
            "inspect_class" => self.inspect_class = Some(parse_num(key, v)?),
            "inspect_prototype" => self.inspect_prototype = Some(parse_num(key, v)?),
            "synth_dim" => self.synth.dim = parse_num(key, v)?,
            "synth_classes" => self.synth.num_classes = parse_num(key, v)?,
            "synth_concepts_per_class" => self.synth.concepts_per_class = parse_num(key, v)?,
            "synth_noise_tokens" => self.synth.noise_tokens = parse_num(key, v)?,
            "synth_docs_per_class" => self.synth.docs_per_class = parse_num(key, v)?,
            "synth_tokens_per_doc" => self.synth.tokens_per_doc = parse_num(key, v)?,
            "synth_planted_rate" => self.synth.planted_rate = parse_num(key, v)?,
            "synth_rationale_rate" => self.synth.rationale_rate = parse_num(key, v)?,
            "embeddings" => self.embeddings = Some(PathBuf::from(v)),
            "corpus" => self.corpus = Some(PathBuf::from(v)),
            "test_corpus" => self.test_corpus = Some(PathBuf::from(v)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "workers" => self.workers = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; '#' starts a comment, blanks skipped.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let text = std::fs::read_to_string(path.as_ref())?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected 'key = value', got '{raw}'"),
            })?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(())
    }

    /// The fully resolved configuration, parseable by [`Self::apply_file`].
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model", self.model.clone());
        kv(
            "variant",
            self.variant.map_or("none".into(), |v| v.name().into()),
        );
        kv("hidden_units", self.hidden_units.to_string());
        kv("prototypes", self.prototypes.to_string());
        kv("gate_base", self.gate_base.to_string());
        kv("negation", self.negation.to_string());
        kv("logic", self.logic.to_string());
        kv(
            "logic_mode",
            match self.logic_mode {
                LogicMode::Pseudo => "pseudo".into(),
                LogicMode::Differentiable => "differentiable".into(),
            },
        );
        kv("logic_sharpness", self.logic_sharpness.to_string());
        kv(
            "similarity",
            match self.similarity {
                Similarity::Cosine => "cosine".into(),
                Similarity::Bilinear => "bilinear".into(),
            },
        );
        kv("boost_base", crate::eval::boost_label(self.boost_base));
        kv("bias", self.bias.to_string());
        kv("num_classes", self.num_classes.to_string());
        kv("l1", self.l1.to_string());
        kv("l2", self.l2.to_string());
        kv("positive_class", self.positive_class.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("seed", self.seed.to_string());
        kv(
            "prototype_init",
            match self.prototype_init {
                PrototypeInit::RandomUnit => "random_unit".into(),
                PrototypeInit::AnnotatedToken => "annotated_token".into(),
            },
        );
        kv("shuffle", self.shuffle.to_string());
        kv("train_sizes", join(&self.train_sizes));
        kv("n_splits", self.n_splits.to_string());
        kv("n_retrain", self.n_retrain.to_string());
        kv("balanced", self.balanced.to_string());
        kv("selection_metric", self.selection_metric.name().into());
        kv("noise_rates", join(&self.noise_rates));
        kv("a_values", join(&self.a_values));
        kv("n_values", join(&self.n_values));
        kv("top_k", self.top_k.to_string());
        if let Some(c) = self.inspect_class {
            kv("inspect_class", c.to_string());
        }
        if let Some(p) = self.inspect_prototype {
            kv("inspect_prototype", p.to_string());
        }
        kv("synth_dim", self.synth.dim.to_string());
        kv("synth_classes", self.synth.num_classes.to_string());
        kv(
            "synth_concepts_per_class",
            self.synth.concepts_per_class.to_string(),
        );
        kv("synth_noise_tokens", self.synth.noise_tokens.to_string());
        kv(
            "synth_docs_per_class",
            self.synth.docs_per_class.to_string(),
        );
        kv(
            "synth_tokens_per_doc",
            self.synth.tokens_per_doc.to_string(),
        );
        kv("synth_planted_rate", self.synth.planted_rate.to_string());
        kv(
            "synth_rationale_rate",
            self.synth.rationale_rate.to_string(),
        );
        if let Some(p) = &self.embeddings {
            kv("embeddings", p.display().to_string());
        }
        if let Some(p) = &self.corpus {
            kv("corpus", p.display().to_string());
        }
        if let Some(p) = &self.test_corpus {
            kv("test_corpus", p.display().to_string());
        }
        if let Some(p) = &self.checkpoint {
            kv("checkpoint", p.display().to_string());
        }
        kv("out", self.out.display().to_string());
        kv("workers", self.workers.to_string());
        s
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            gate_base: self.gate_base,
            num_prototypes: self.prototypes,
            use_negation: self.negation,
            use_logic: self.logic,
            logic_mode: self.logic_mode,
            logic_sharpness: self.logic_sharpness,
            similarity: self.similarity,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: self.seed,
            prototype_init: self.prototype_init,
            shuffle: self.shuffle,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            l1: self.l1,
            l2: self.l2,
            positive_class: self.positive_class,
        }
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            train_sizes: self.train_sizes.clone(),
            n_splits: self.n_splits,
            n_retrain: self.n_retrain,
            balanced_train: self.balanced,
            selection_metric: self.selection_metric,
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        Ok(match self.model.as_str() {
            "parcus" => ModelSpec::Parcus {
                match_cfg: self.match_config(),
                boost_base: self.boost_base,
                use_bias: self.bias,
                variant: self.variant,
            },
            "linear" => ModelSpec::Linear,
            "nbow" => ModelSpec::Nbow,
            "mlp" => ModelSpec::Mlp {
                hidden_units: self.hidden_units,
                boosted: false,
                boost_base: self.boost_base,
            },
            "mlp_boosted" => ModelSpec::Mlp {
                hidden_units: self.hidden_units,
                boosted: true,
                boost_base: self.boost_base,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}' (expected parcus|linear|mlp|mlp_boosted|nbow)"
                )))
            }
        })
    }
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_parses_typed_keys() {
        let mut cfg = RunConfig::default();
        cfg.apply("prototypes", "10").unwrap();
        cfg.apply("gate_base", "10").unwrap();
        cfg.apply("boost_base", "e").unwrap();
        cfg.apply("train_sizes", "10, 30, 60").unwrap();
        cfg.apply("variant", "kmeans").unwrap();
        cfg.apply("negation", "true").unwrap();
        assert_eq!(cfg.prototypes, 10);
        assert_eq!(cfg.gate_base, 10.0);
        assert_eq!(cfg.boost_base, std::f64::consts::E);
        assert_eq!(cfg.train_sizes, vec![10, 30, 60]);
        assert_eq!(cfg.variant, Some(ParcusVariant::KMeans));
        assert!(cfg.negation);
    }

    #[test]
    fn apply_rejects_unknown_keys_and_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply("no_such_key", "1").is_err());
        assert!(cfg.apply("epochs", "many").is_err());
        assert!(cfg.apply("similarity", "euclidean").is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply("prototypes", "7").unwrap();
        cfg.apply("embeddings", "emb.txt").unwrap();
        cfg.apply("variant", "wo_h").unwrap();
        let text = cfg.resolved_text();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, &text).unwrap();
        let mut reloaded = RunConfig::default();
        reloaded.apply_file(&path).unwrap();
        assert_eq!(cfg, reloaded);
    }

    #[test]
    fn config_file_supports_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, "# comment\nprototypes = 3 # trailing\n\nseed = 9\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.prototypes, 3);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_config_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, "prototypes = 3\nnot a pair\n").unwrap();
        let mut cfg = RunConfig::default();
        let err = cfg.apply_file(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn model_spec_selection() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.model_spec().unwrap(),
            ModelSpec::Parcus { .. }
        ));
        cfg.apply("model", "mlp_boosted").unwrap();
        assert!(matches!(
            cfg.model_spec().unwrap(),
            ModelSpec::Mlp { boosted: true, .. }
        ));
        cfg.apply("model", "transformer").unwrap();
        assert!(cfg.model_spec().is_err());
    }
}
