//! Metrics, data splits, hold-out model selection and the analysis
//! harnesses (rationale-noise robustness, gate-base vs prototype-count
//! sweep).
//!
//! The experimental protocol follows the low-resource recipe: balanced
//! train splits of a given size, a validation split as big as the train
//! one, the rest as test; every experiment repeated over independent split
//! seeds, the selected configuration retrained several times and test
//! scores averaged. All models share split and retrain seed streams so
//! comparisons are paired.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{average_corpus, ModelSpec};
use crate::checkpoint::AnyModel;
use crate::data::{Corpus, Document};
use crate::error::{Error, Result};
use crate::model::{LossConfig, Model};
use crate::optim::{train, TrainConfig};
use crate::rng::derive_seed;

/// Classification quality summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub accuracy: f64,
    /// Binary F1 of the designated positive class.
    pub f1: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub n_eval: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Accuracy,
    F1,
}

impl SelectionMetric {
    pub fn of(&self, report: &MetricReport) -> f64 {
        match self {
            SelectionMetric::Accuracy => report.accuracy,
            SelectionMetric::F1 => report.f1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectionMetric::Accuracy => "accuracy",
            SelectionMetric::F1 => "f1",
        }
    }
}

/// Accuracy, binary F1 and the confusion table.
pub fn metrics(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
    positive_class: usize,
) -> Result<MetricReport> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= num_classes || l >= num_classes {
            return Err(Error::Config(format!(
                "class index out of range: pred {p}, label {l}"
            )));
        }
        confusion[l][p] += 1;
    }
    let n_eval = predictions.len();
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let accuracy = if n_eval == 0 {
        0.0
    } else {
        correct as f64 / n_eval as f64
    };

    let tp = confusion[positive_class][positive_class];
    let fp: usize = (0..num_classes)
        .filter(|&c| c != positive_class)
        .map(|c| confusion[c][positive_class])
        .sum();
    let fn_: usize = (0..num_classes)
        .filter(|&c| c != positive_class)
        .map(|c| confusion[positive_class][c])
        .sum();
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };

    Ok(MetricReport {
        accuracy,
        f1,
        confusion,
        n_eval,
    })
}

/// Disjoint train/validation/test index sets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws a split with `size` training documents and a validation set of
/// the same size; the rest is test. Balanced mode takes `size / C`
/// documents per class for both train and validation.
pub fn make_splits(
    corpus: &Corpus,
    size: usize,
    seed: u64,
    balanced: bool,
) -> Result<SplitIndices> {
    if size == 0 {
        return Err(Error::Config("train size must be >= 1".into()));
    }
    let mut rng = crate::rng::substream(seed, "splits");
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();

    if balanced {
        let per_class = size / corpus.num_classes;
        if per_class == 0 {
            return Err(Error::Config(format!(
                "train size {size} is below one document per class"
            )));
        }
        for class in 0..corpus.num_classes {
            let mut indices: Vec<usize> = corpus
                .documents
                .iter()
                .enumerate()
                .filter(|(_, d)| d.label == class)
                .map(|(i, _)| i)
                .collect();
            if indices.len() < 2 * per_class {
                return Err(Error::Config(format!(
                    "class {class} has {} documents, need {} for train+validation",
                    indices.len(),
                    2 * per_class
                )));
            }
            indices.shuffle(&mut rng);
            train.extend_from_slice(&indices[..per_class]);
            validation.extend_from_slice(&indices[per_class..2 * per_class]);
            test.extend_from_slice(&indices[2 * per_class..]);
        }
    } else {
        let mut indices: Vec<usize> = (0..corpus.len()).collect();
        if indices.len() < 2 * size {
            return Err(Error::Config(format!(
                "corpus has {} documents, need {} for train+validation",
                indices.len(),
                2 * size
            )));
        }
        indices.shuffle(&mut rng);
        train.extend_from_slice(&indices[..size]);
        validation.extend_from_slice(&indices[size..2 * size]);
        test.extend_from_slice(&indices[2 * size..]);
    }

    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices {
        train,
        validation,
        test,
    })
}

/// Multi-split experiment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub train_sizes: Vec<usize>,
    pub n_splits: usize,
    pub n_retrain: usize,
    pub balanced_train: bool,
    pub selection_metric: SelectionMetric,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            train_sizes: vec![10],
            n_splits: 10,
            n_retrain: 3,
            balanced_train: true,
            selection_metric: SelectionMetric::Accuracy,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_splits == 0 || self.n_retrain == 0 || self.train_sizes.is_empty() {
            return Err(Error::Config(
                "protocol needs at least one split, retrain and train size".into(),
            ));
        }
        Ok(())
    }
}

/// One fully specified trainable configuration (a grid cell).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub loss: LossConfig,
}

/// Boost-base label as used in grid ids ("e", "5", "10").
pub fn boost_label(base: f64) -> String {
    if (base - std::f64::consts::E).abs() < 1e-12 {
        "e".into()
    } else if (base - base.round()).abs() < 1e-12 {
        format!("{}", base.round() as i64)
    } else {
        format!("{base}")
    }
}

/// The default PARCUS selection grid: N in {5, 10}, a in {10, 100},
/// f(r) in {e^r, 5^r, 10^r}, l1 in {1e-2, 1e-3}, l2 in {1e-3, 1e-4},
/// learning rate 1e-2, 500 epochs -- 48 cells.
pub fn parcus_default_grid(
    base_match: &crate::matching::MatchConfig,
    base_train: &TrainConfig,
    positive_class: usize,
) -> Vec<Candidate> {
    let mut grid = Vec::new();
    for &n in &[5usize, 10] {
        for &a in &[10.0, 100.0] {
            for &boost in &[std::f64::consts::E, 5.0, 10.0] {
                for &l1 in &[1e-2, 1e-3] {
                    for &l2 in &[1e-3, 1e-4] {
                        let mut match_cfg = base_match.clone();
                        match_cfg.num_prototypes = n;
                        match_cfg.gate_base = a;
                        let train = TrainConfig {
                            learning_rate: 1e-2,
                            epochs: 500,
                            ..base_train.clone()
                        };
                        grid.push(Candidate {
                            id: format!(
                                "N{n}_a{}_f{}_l1={l1:e}_l2={l2:e}",
                                a as u32,
                                boost_label(boost)
                            ),
                            spec: ModelSpec::Parcus {
                                match_cfg,
                                boost_base: boost,
                                use_bias: true,
                                variant: None,
                            },
                            train,
                            loss: LossConfig {
                                l1,
                                l2,
                                positive_class,
                            },
                        });
                    }
                }
            }
        }
    }
    grid
}

/// Linear baseline grid: lr in {1e-2, 1e-3, 1e-4}, l2 in {1e-1, 1e-2,
/// 1e-4}, epochs in {50, 100, 150}.
pub fn linear_default_grid(base_train: &TrainConfig, positive_class: usize) -> Vec<Candidate> {
    let mut grid = Vec::new();
    for &lr in &[1e-2, 1e-3, 1e-4] {
        for &l2 in &[1e-1, 1e-2, 1e-4] {
            for &epochs in &[50usize, 100, 150] {
                grid.push(Candidate {
                    id: format!("linear_lr={lr:e}_l2={l2:e}_ep={epochs}"),
                    spec: ModelSpec::Linear,
                    train: TrainConfig {
                        learning_rate: lr,
                        epochs,
                        ..base_train.clone()
                    },
                    loss: LossConfig {
                        l1: 0.0,
                        l2,
                        positive_class,
                    },
                });
            }
        }
    }
    grid
}

/// NBOW grid: lr in {1e-3, 1e-4}, l2 in {1e-2, 1e-4}, epochs in {100, 500}.
pub fn nbow_default_grid(base_train: &TrainConfig, positive_class: usize) -> Vec<Candidate> {
    let mut grid = Vec::new();
    for &lr in &[1e-3, 1e-4] {
        for &l2 in &[1e-2, 1e-4] {
            for &epochs in &[100usize, 500] {
                grid.push(Candidate {
                    id: format!("nbow_lr={lr:e}_l2={l2:e}_ep={epochs}"),
                    spec: ModelSpec::Nbow,
                    train: TrainConfig {
                        learning_rate: lr,
                        epochs,
                        ..base_train.clone()
                    },
                    loss: LossConfig {
                        l1: 0.0,
                        l2,
                        positive_class,
                    },
                });
            }
        }
    }
    grid
}

/// MLP grid: the NBOW grid crossed with hidden units in {8, 16, 32}.
pub fn mlp_default_grid(
    base_train: &TrainConfig,
    positive_class: usize,
    boosted: bool,
    boost_base: f64,
) -> Vec<Candidate> {
    let name = if boosted { "mlp_boosted" } else { "mlp" };
    let mut grid = Vec::new();
    for &lr in &[1e-3, 1e-4] {
        for &l2 in &[1e-2, 1e-4] {
            for &epochs in &[100usize, 500] {
                for &hidden in &[8usize, 16, 32] {
                    grid.push(Candidate {
                        id: format!("{name}_lr={lr:e}_l2={l2:e}_ep={epochs}_h={hidden}"),
                        spec: ModelSpec::Mlp {
                            hidden_units: hidden,
                            boosted,
                            boost_base,
                        },
                        train: TrainConfig {
                            learning_rate: lr,
                            epochs,
                            ..base_train.clone()
                        },
                        loss: LossConfig {
                            l1: 0.0,
                            l2,
                            positive_class,
                        },
                    });
                }
            }
        }
    }
    grid
}

/// Trains one candidate on `train_idx` and evaluates on `eval_idx`.
pub fn train_and_evaluate(
    candidate: &Candidate,
    corpus: &Corpus,
    train_idx: &[usize],
    eval_idx: &[usize],
    seed: u64,
) -> Result<(AnyModel, MetricReport)> {
    let working;
    let corpus = if candidate.spec.averages_inputs() {
        working = average_corpus(corpus);
        &working
    } else {
        corpus
    };
    let train_docs: Vec<Document> = train_idx
        .iter()
        .map(|&i| corpus.documents[i].clone())
        .collect();
    let mut train_cfg = candidate.train.clone();
    train_cfg.seed = seed;
    let dim = corpus
        .documents
        .iter()
        .find_map(|d| d.vectors.first().map(Vec::len))
        .ok_or_else(|| Error::Config("corpus has no token vectors".into()))?;
    let mut model = candidate
        .spec
        .build(&train_docs, corpus.num_classes, dim, &train_cfg)?;
    train(&mut model, &train_docs, &train_cfg, &candidate.loss)?;

    let mut predictions = Vec::with_capacity(eval_idx.len());
    let mut labels = Vec::with_capacity(eval_idx.len());
    for &i in eval_idx {
        predictions.push(model.predict(&corpus.documents[i])?);
        labels.push(corpus.documents[i].label);
    }
    let positive = corpus
        .positive_class
        .unwrap_or(candidate.loss.positive_class);
    let report = metrics(&predictions, &labels, corpus.num_classes, positive)?;
    Ok((model, report))
}

/// Validation score of one grid cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRow {
    pub config_id: String,
    pub value: f64,
    /// Populated when the cell failed to train instead of aborting the
    /// whole selection.
    pub error: Option<String>,
}

/// Outcome of hold-out selection on one split.
#[derive(Clone, Debug, Serialize)]
pub struct SelectionOutcome {
    pub winner: Candidate,
    pub grid: Vec<GridRow>,
    /// Test metric of each retraining of the winner.
    pub test_values: Vec<f64>,
}

/// Hold-out selection: score every cell on validation, pick the best
/// (ties resolve to the earliest cell), retrain the winner `n_retrain`
/// times with fresh seeds and evaluate on test. `cache_dir` persists
/// per-cell validation scores so interrupted selections resume.
pub fn model_select(
    corpus: &Corpus,
    split: &SplitIndices,
    grid: &[Candidate],
    protocol: &ProtocolConfig,
    base_seed: u64,
    cache_dir: Option<&Path>,
) -> Result<SelectionOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("selection over an empty grid".into()));
    }
    if let Some(dir) = cache_dir {
        fs::create_dir_all(dir)?;
    }

    // One shared training seed across cells keeps comparisons paired and
    // lets identical cells tie exactly.
    let cell_seed = derive_seed(base_seed, "cell", &[]);
    let mut rows = Vec::with_capacity(grid.len());
    for candidate in grid.iter() {
        let cache_path = cache_dir.map(|d| d.join(format!("cell_{}.json", candidate.id)));
        if let Some(path) = &cache_path {
            if path.exists() {
                let cached: GridRow = serde_json::from_str(&fs::read_to_string(path)?)
                    .map_err(|e| Error::Config(format!("corrupt cell cache {path:?}: {e}")))?;
                rows.push(cached);
                continue;
            }
        }
        let seed = cell_seed;
        let row = match train_and_evaluate(candidate, corpus, &split.train, &split.validation, seed)
        {
            Ok((_, report)) => GridRow {
                config_id: candidate.id.clone(),
                value: protocol.selection_metric.of(&report),
                error: None,
            },
            // A diverging cell is recorded and skipped, not fatal.
            Err(Error::Numeric(msg)) => GridRow {
                config_id: candidate.id.clone(),
                value: f64::NEG_INFINITY,
                error: Some(msg),
            },
            Err(other) => return Err(other),
        };
        if let Some(path) = &cache_path {
            fs::write(path, serde_json::to_string_pretty(&row).unwrap())?;
        }
        rows.push(row);
    }

    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        if row.value > rows[best].value {
            best = i;
        }
    }
    let winner = grid[best].clone();

    let mut test_values = Vec::with_capacity(protocol.n_retrain);
    for retrain in 0..protocol.n_retrain {
        let seed = derive_seed(base_seed, "retrain", &[retrain as u64]);
        let (_, report) = train_and_evaluate(&winner, corpus, &split.train, &split.test, seed)?;
        test_values.push(protocol.selection_metric.of(&report));
    }

    Ok(SelectionOutcome {
        winner,
        grid: rows,
        test_values,
    })
}

/// One emitted measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_id: String,
    pub split_seed: u64,
    pub retrain_seed: u64,
    pub train_size: usize,
    pub metric: String,
    pub value: f64,
}

/// Mean and population standard deviation over split-level means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub config_id: String,
    pub train_size: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_splits: usize,
}

/// Split-level means first (over retrains), then mean and population std
/// over those means. Rows are grouped by (config id, train size, metric);
/// arithmetic is reproducible from the emitted rows.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    summarize(rows, |row| row.config_id.clone())
}

/// Like [`aggregate`] but grouped by train size only, for selection runs
/// where the winning configuration differs across splits.
pub fn aggregate_by_size(rows: &[ResultRow]) -> Vec<AggregateRow> {
    summarize(rows, |_| "selected".to_string())
}

fn summarize(rows: &[ResultRow], key: impl Fn(&ResultRow) -> String) -> Vec<AggregateRow> {
    let mut groups: indexmap::IndexMap<(String, usize, String), indexmap::IndexMap<u64, Vec<f64>>> =
        indexmap::IndexMap::new();
    for row in rows {
        groups
            .entry((key(row), row.train_size, row.metric.clone()))
            .or_default()
            .entry(row.split_seed)
            .or_default()
            .push(row.value);
    }
    groups
        .into_iter()
        .map(|((config_id, train_size, metric), splits)| {
            let split_means: Vec<f64> = splits
                .values()
                .map(|vs| vs.iter().sum::<f64>() / vs.len() as f64)
                .collect();
            let n = split_means.len();
            let mean = split_means.iter().sum::<f64>() / n as f64;
            let var = split_means
                .iter()
                .map(|m| (m - mean) * (m - mean))
                .sum::<f64>()
                / n as f64;
            AggregateRow {
                config_id,
                train_size,
                metric,
                mean,
                std: var.sqrt(),
                n_splits: n,
            }
        })
        .collect()
}

/// Full multi-split protocol over a selection grid.
#[derive(Clone, Debug, Serialize)]
pub struct ProtocolOutcome {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    /// (train size, split seed, winner id) per selection.
    pub winners: Vec<(usize, u64, String)>,
}

/// Runs selection + retrain-evaluation over every (train size, split).
/// Split seeds derive only from the base seed, the size and the split
/// index, so different model families evaluated with the same base seed
/// see identical splits.
pub fn run_protocol(
    corpus: &Corpus,
    grid: &[Candidate],
    protocol: &ProtocolConfig,
    base_seed: u64,
    workers: usize,
    cache_dir: Option<&Path>,
) -> Result<ProtocolOutcome> {
    protocol.validate()?;
    let mut jobs = Vec::new();
    for &size in &protocol.train_sizes {
        for split_idx in 0..protocol.n_splits {
            jobs.push((size, split_idx));
        }
    }

    let outcomes = run_indexed(jobs.len(), workers, |j| {
        let (size, split_idx) = jobs[j];
        let split_seed = derive_seed(base_seed, "split", &[size as u64, split_idx as u64]);
        let split = make_splits(corpus, size, split_seed, protocol.balanced_train)?;
        let job_cache = cache_dir.map(|d| d.join(format!("size{size}_split{split_idx}")));
        let sel_seed = derive_seed(base_seed, "selection", &[size as u64, split_idx as u64]);
        let outcome = model_select(
            corpus,
            &split,
            grid,
            protocol,
            sel_seed,
            job_cache.as_deref(),
        )?;
        Ok((size, split_seed, sel_seed, outcome))
    })?;

    let mut rows = Vec::new();
    let mut winners = Vec::new();
    for (size, split_seed, sel_seed, outcome) in outcomes {
        for (retrain, &value) in outcome.test_values.iter().enumerate() {
            rows.push(ResultRow {
                config_id: outcome.winner.id.clone(),
                split_seed,
                retrain_seed: derive_seed(sel_seed, "retrain", &[retrain as u64]),
                train_size: size,
                metric: protocol.selection_metric.name().into(),
                value,
            });
        }
        winners.push((size, split_seed, outcome.winner.id.clone()));
    }
    let aggregates = aggregate_by_size(&rows);
    Ok(ProtocolOutcome {
        rows,
        aggregates,
        winners,
    })
}

/// Sets unflagged rationale bits to 1 independently with probability
/// `rate`; existing annotations are never cleared.
pub fn inject_noise(docs: &mut [Document], rate: f64, rng: &mut impl Rng) {
    for doc in docs {
        for flag in doc.rationale.iter_mut() {
            if *flag == 0 && rng.gen::<f64>() < rate {
                *flag = 1;
            }
        }
    }
}

/// Metric per (noise rate, train size, split) for one fixed candidate;
/// noise touches only the training documents.
pub fn noise_harness(
    corpus: &Corpus,
    noise_rates: &[f64],
    candidate: &Candidate,
    protocol: &ProtocolConfig,
    base_seed: u64,
    workers: usize,
) -> Result<Vec<ResultRow>> {
    protocol.validate()?;
    for &rate in noise_rates {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("noise rate {rate} outside [0, 1]")));
        }
    }
    let mut jobs = Vec::new();
    for (rate_idx, &rate) in noise_rates.iter().enumerate() {
        for &size in &protocol.train_sizes {
            for split_idx in 0..protocol.n_splits {
                jobs.push((rate_idx, rate, size, split_idx));
            }
        }
    }

    run_indexed(jobs.len(), workers, |j| {
        let (rate_idx, rate, size, split_idx) = jobs[j];
        let split_seed = derive_seed(base_seed, "split", &[size as u64, split_idx as u64]);
        let split = make_splits(corpus, size, split_seed, protocol.balanced_train)?;

        // Noisy copy of the training documents only.
        let mut noisy = corpus.clone();
        let mut rng = crate::rng::substream_indexed(
            derive_seed(base_seed, "noise", &[rate_idx as u64, size as u64]),
            "inject",
            split_idx as u64,
        );
        for &i in &split.train {
            inject_noise(
                std::slice::from_mut(&mut noisy.documents[i]),
                rate,
                &mut rng,
            );
        }

        let seed = derive_seed(
            base_seed,
            "noise-train",
            &[rate_idx as u64, size as u64, split_idx as u64],
        );
        let (_, report) = train_and_evaluate(candidate, &noisy, &split.train, &split.test, seed)?;
        Ok(ResultRow {
            config_id: format!("{}_noise={rate}", candidate.id),
            split_seed,
            retrain_seed: seed,
            train_size: size,
            metric: protocol.selection_metric.name().into(),
            value: protocol.selection_metric.of(&report),
        })
    })
}

/// Mean metric per (gate base, prototype count) cell.
#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub a_values: Vec<f64>,
    pub n_values: Vec<usize>,
    /// `matrix[i][j]` is the mean metric at `(a_values[i], n_values[j])`.
    pub matrix: Vec<Vec<f64>>,
    pub rows: Vec<ResultRow>,
}

/// Selection-free trade-off sweep: one training per (a, N) cell per split.
pub fn sweep_a_vs_n(
    corpus: &Corpus,
    a_values: &[f64],
    n_values: &[usize],
    template: &Candidate,
    protocol: &ProtocolConfig,
    base_seed: u64,
    workers: usize,
) -> Result<SweepOutcome> {
    protocol.validate()?;
    for &a in a_values {
        if a <= 1.0 {
            return Err(Error::Config(format!("gate base {a} must exceed 1")));
        }
    }
    for &n in n_values {
        if n == 0 {
            return Err(Error::Config("prototype counts must be >= 1".into()));
        }
    }
    let size = protocol.train_sizes[0];

    let mut jobs = Vec::new();
    for (ai, &a) in a_values.iter().enumerate() {
        for (ni, &n) in n_values.iter().enumerate() {
            for split_idx in 0..protocol.n_splits {
                jobs.push((ai, a, ni, n, split_idx));
            }
        }
    }

    let rows = run_indexed(jobs.len(), workers, |j| {
        let (ai, a, ni, n, split_idx) = jobs[j];
        let mut candidate = template.clone();
        candidate.id = format!("a{}_N{}", a, n);
        if let ModelSpec::Parcus { match_cfg, .. } = &mut candidate.spec {
            match_cfg.gate_base = a;
            match_cfg.num_prototypes = n;
        } else {
            return Err(Error::Config("sweep template must be a parcus spec".into()));
        }
        let split_seed = derive_seed(base_seed, "split", &[size as u64, split_idx as u64]);
        let split = make_splits(corpus, size, split_seed, protocol.balanced_train)?;
        let seed = derive_seed(
            base_seed,
            "sweep",
            &[ai as u64, ni as u64, split_idx as u64],
        );
        let (_, report) = train_and_evaluate(&candidate, corpus, &split.train, &split.test, seed)?;
        Ok(ResultRow {
            config_id: candidate.id,
            split_seed,
            retrain_seed: seed,
            train_size: size,
            metric: protocol.selection_metric.name().into(),
            value: protocol.selection_metric.of(&report),
        })
    })?;

    let mut matrix = vec![vec![0.0; n_values.len()]; a_values.len()];
    for (ai, &a) in a_values.iter().enumerate() {
        for (ni, &n) in n_values.iter().enumerate() {
            let id = format!("a{}_N{}", a, n);
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.config_id == id)
                .map(|r| r.value)
                .collect();
            matrix[ai][ni] = vals.iter().sum::<f64>() / vals.len() as f64;
        }
    }

    Ok(SweepOutcome {
        a_values: a_values.to_vec(),
        n_values: n_values.to_vec(),
        matrix,
        rows,
    })
}

/// Runs `count` fallible jobs over a bounded worker pool; results keep job
/// order. `workers <= 1` runs inline (the reproducibility guarantee).
pub fn run_indexed<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if workers <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..count).map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(count) {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let result = f(i);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("job completed"))
        .collect()
}

/// Tab-separated result table with a header line.
pub fn rows_to_tsv(rows: &[ResultRow]) -> String {
    let mut out = String::from("config_id\tsplit_seed\tretrain_seed\ttrain_size\tmetric\tvalue\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.config_id, r.split_seed, r.retrain_seed, r.train_size, r.metric, r.value
        ));
    }
    out
}

pub fn aggregates_to_tsv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("config_id\ttrain_size\tmetric\tmean\tstd\tn_splits\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.config_id, r.train_size, r.metric, r.mean, r.std, r.n_splits
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::matching::MatchConfig;

    fn small_corpus() -> Corpus {
        generate_synthetic(
            &SyntheticSpec {
                docs_per_class: 30,
                ..SyntheticSpec::default()
            },
            13,
        )
        .unwrap()
        .1
    }

    #[test]
    fn metrics_perfect_classifier() {
        let r = metrics(&[0, 1, 1, 0], &[0, 1, 1, 0], 2, 1).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.n_eval, 4);
    }

    #[test]
    fn metrics_degenerate_all_negative() {
        let r = metrics(&[0, 0, 0], &[0, 1, 1], 2, 1).unwrap();
        assert_eq!(r.f1, 0.0);
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_hand_enumerated_confusion() {
        // preds [1,1,0,0] vs labels [1,0,0,1]: TP=1, FP=1, TN=1, FN=1.
        let r = metrics(&[1, 1, 0, 0], &[1, 0, 0, 1], 2, 1).unwrap();
        assert_eq!(r.confusion, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.f1, 0.5);
    }

    #[test]
    fn metrics_rejects_length_mismatch() {
        assert!(metrics(&[0], &[0, 1], 2, 1).is_err());
    }

    #[test]
    fn metrics_confusion_sums_to_n_eval() {
        let r = metrics(&[0, 1, 0, 1, 1], &[1, 1, 0, 0, 1], 2, 1).unwrap();
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(total, r.n_eval);
    }

    #[test]
    fn splits_are_balanced_disjoint_deterministic() {
        let corpus = small_corpus();
        let s1 = make_splits(&corpus, 10, 42, true).unwrap();
        let s2 = make_splits(&corpus, 10, 42, true).unwrap();
        assert_eq!(s1, s2);
        let s3 = make_splits(&corpus, 10, 43, true).unwrap();
        assert_ne!(s1, s3);

        assert_eq!(s1.train.len(), 10);
        assert_eq!(s1.validation.len(), 10);
        assert_eq!(s1.test.len(), corpus.len() - 20);
        let per_class: Vec<usize> = (0..2)
            .map(|c| {
                s1.train
                    .iter()
                    .filter(|&&i| corpus.documents[i].label == c)
                    .count()
            })
            .collect();
        assert_eq!(per_class, vec![5, 5]);

        let mut all: Vec<usize> = s1
            .train
            .iter()
            .chain(&s1.validation)
            .chain(&s1.test)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), corpus.len(), "splits overlap");
    }

    #[test]
    fn splits_error_names_the_starved_class() {
        let corpus = small_corpus(); // 30 per class
        let err = make_splits(&corpus, 80, 1, true).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn default_grid_has_48_cells() {
        let grid = parcus_default_grid(&MatchConfig::default(), &TrainConfig::default(), 1);
        assert_eq!(grid.len(), 48);
        let mut ids: Vec<&str> = grid.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 48, "grid ids must be unique");
    }

    fn quick_candidate(id: &str, epochs: usize) -> Candidate {
        Candidate {
            id: id.into(),
            spec: ModelSpec::Parcus {
                match_cfg: MatchConfig::default(),
                boost_base: std::f64::consts::E,
                use_bias: true,
                variant: None,
            },
            train: TrainConfig {
                epochs,
                ..TrainConfig::default()
            },
            loss: LossConfig::default(),
        }
    }

    #[test]
    fn selection_single_cell_wins_and_ties_resolve_first() {
        let corpus = small_corpus();
        let split = make_splits(&corpus, 10, 7, true).unwrap();
        let protocol = ProtocolConfig {
            n_splits: 1,
            n_retrain: 2,
            ..ProtocolConfig::default()
        };
        let single = vec![quick_candidate("only", 30)];
        let outcome = model_select(&corpus, &split, &single, &protocol, 5, None).unwrap();
        assert_eq!(outcome.winner.id, "only");
        assert_eq!(outcome.test_values.len(), 2);

        // Two identical cells: the first wins the tie.
        let twins = vec![quick_candidate("first", 30), quick_candidate("second", 30)];
        let outcome = model_select(&corpus, &split, &twins, &protocol, 5, None).unwrap();
        assert_eq!(outcome.grid[0].value, outcome.grid[1].value);
        assert_eq!(outcome.winner.id, "first");
    }

    #[test]
    fn selection_cache_resumes() {
        let corpus = small_corpus();
        let split = make_splits(&corpus, 10, 7, true).unwrap();
        let protocol = ProtocolConfig {
            n_splits: 1,
            n_retrain: 1,
            ..ProtocolConfig::default()
        };
        let grid = vec![quick_candidate("a", 20), quick_candidate("b", 20)];
        let dir = tempfile::tempdir().unwrap();
        let o1 = model_select(&corpus, &split, &grid, &protocol, 5, Some(dir.path())).unwrap();
        assert!(dir.path().join("cell_a.json").exists());
        // Second run must read the cached scores (poison one cache entry to
        // prove it is honored).
        let poisoned = GridRow {
            config_id: "a".into(),
            value: 999.0,
            error: None,
        };
        fs::write(
            dir.path().join("cell_a.json"),
            serde_json::to_string(&poisoned).unwrap(),
        )
        .unwrap();
        let o2 = model_select(&corpus, &split, &grid, &protocol, 5, Some(dir.path())).unwrap();
        assert_eq!(o2.grid[0].value, 999.0);
        assert_eq!(o2.winner.id, "a");
        drop(o1);
    }

    #[test]
    fn protocol_emits_expected_row_counts() {
        let corpus = small_corpus();
        let protocol = ProtocolConfig {
            train_sizes: vec![10, 20],
            n_splits: 3,
            n_retrain: 2,
            ..ProtocolConfig::default()
        };
        let grid = vec![quick_candidate("c", 15)];
        let outcome = run_protocol(&corpus, &grid, &protocol, 11, 1, None).unwrap();
        assert_eq!(outcome.rows.len(), 2 * 3 * 2);
        assert_eq!(outcome.aggregates.len(), 2);
        for agg in &outcome.aggregates {
            assert_eq!(agg.n_splits, 3);
        }
        assert_eq!(outcome.winners.len(), 6);
    }

    #[test]
    fn aggregation_recomputes_from_rows() {
        let rows = vec![
            ResultRow {
                config_id: "c".into(),
                split_seed: 1,
                retrain_seed: 10,
                train_size: 10,
                metric: "accuracy".into(),
                value: 0.8,
            },
            ResultRow {
                config_id: "c".into(),
                split_seed: 1,
                retrain_seed: 11,
                train_size: 10,
                metric: "accuracy".into(),
                value: 0.9,
            },
            ResultRow {
                config_id: "c".into(),
                split_seed: 2,
                retrain_seed: 12,
                train_size: 10,
                metric: "accuracy".into(),
                value: 0.6,
            },
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        // Split means: (0.85, 0.6); mean 0.725; population std 0.125.
        assert!((agg[0].mean - 0.725).abs() < 1e-12);
        assert!((agg[0].std - 0.125).abs() < 1e-12);
    }

    #[test]
    fn noise_injection_rate_zero_is_identity_rate_one_saturates() {
        let corpus = small_corpus();
        let mut docs = corpus.documents.clone();
        let mut rng = crate::rng::substream(3, "test");
        inject_noise(&mut docs, 0.0, &mut rng);
        assert_eq!(docs, corpus.documents);
        inject_noise(&mut docs, 1.0, &mut rng);
        for doc in &docs {
            assert!(doc.rationale.iter().all(|&r| r == 1));
        }
    }

    #[test]
    fn noise_injection_never_clears_existing_flags() {
        let corpus = small_corpus();
        let mut docs = corpus.documents.clone();
        let mut rng = crate::rng::substream(3, "test");
        inject_noise(&mut docs, 0.5, &mut rng);
        for (noisy, orig) in docs.iter().zip(&corpus.documents) {
            for (&n, &o) in noisy.rationale.iter().zip(&orig.rationale) {
                assert!(n >= o);
            }
        }
    }

    #[test]
    fn sweep_shapes_match_inputs() {
        let corpus = small_corpus();
        let protocol = ProtocolConfig {
            train_sizes: vec![10],
            n_splits: 2,
            n_retrain: 1,
            ..ProtocolConfig::default()
        };
        let outcome = sweep_a_vs_n(
            &corpus,
            &[10.0, 100.0],
            &[1, 2, 5],
            &quick_candidate("tmpl", 12),
            &protocol,
            17,
            1,
        )
        .unwrap();
        assert_eq!(outcome.matrix.len(), 2);
        assert_eq!(outcome.matrix[0].len(), 3);
        assert_eq!(outcome.rows.len(), 2 * 3 * 2);

        let single = sweep_a_vs_n(
            &corpus,
            &[10.0],
            &[2],
            &quick_candidate("tmpl", 12),
            &protocol,
            17,
            1,
        )
        .unwrap();
        assert_eq!(single.matrix, vec![vec![single.matrix[0][0]]]);
    }

    #[test]
    fn worker_pool_preserves_job_order() {
        let results = run_indexed(20, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(results, (0..20).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn tsv_tables_have_header_and_rows() {
        let rows = vec![ResultRow {
            config_id: "c".into(),
            split_seed: 1,
            retrain_seed: 2,
            train_size: 10,
            metric: "f1".into(),
            value: 0.5,
        }];
        let tsv = rows_to_tsv(&rows);
        assert!(tsv.starts_with("config_id\t"));
        assert!(tsv.contains("c\t1\t2\t10\tf1\t0.5"));
        let agg = aggregates_to_tsv(&aggregate(&rows));
        assert!(agg.contains("c\t10\tf1\t0.5\t0\t1"));
    }
}
