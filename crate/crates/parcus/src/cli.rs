//! Command-line interface: train, eval, select, sweep, noise, inspect,
//! synth, check.
//!
//! Configuration resolves in three layers: built-in defaults, then the
//! `--config` file, then `--set key=value` pairs and dedicated flags
//! (flags win). Every command writes its fully resolved configuration
//! into the output directory, and reruns with identical configuration
//! and seed produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::baselines::average_corpus;
use crate::checkpoint::{load_checkpoint, save_checkpoint, AnyModel, Checkpoint};
use crate::config::RunConfig;
use crate::data::{
    generate_synthetic, load_corpus, load_embedding_table, write_corpus, write_embedding_table,
    Corpus, EmbeddingTable,
};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, aggregates_to_tsv, metrics, rows_to_tsv, run_protocol, sweep_a_vs_n, Candidate,
};
use crate::introspect::{head_saliency, prototype_neighbors, rank_tokens};
use crate::model::Model;
use crate::optim::train_with_progress;

#[derive(Parser, Debug)]
#[command(
    name = "parcus",
    version,
    about = "Prototype-based concept matching for low-resource classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model and write a checkpoint, loss trace and metrics.
    Train(CommonArgs),
    /// Evaluate a checkpoint on a corpus.
    Eval(CommonArgs),
    /// Hold-out model selection over the hyperparameter grid.
    Select(CommonArgs),
    /// Gate-base vs prototype-count trade-off sweep.
    Sweep(CommonArgs),
    /// Rationale-noise robustness harness.
    Noise(CommonArgs),
    /// Rank tokens, head weights and prototype neighbors of a checkpoint.
    Inspect(CommonArgs),
    /// Generate a synthetic planted-concept dataset.
    Synth(CommonArgs),
    /// Run the finite-difference gradient check matrix.
    Check(CommonArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Embedding table ("V n" header then token + floats per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Corpus file (one JSON record per line).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Model checkpoint to load (eval/inspect) or write (train).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seed; all randomness derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for grid/split fan-out (1 = fully reproducible).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Extra overrides as key=value (repeatable); applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Defaults, then config file, then --set pairs, then dedicated flags.
pub fn resolve_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for pair in &args.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{pair}'")))?;
        cfg.apply(k.trim(), v.trim())?;
    }
    if let Some(p) = &args.embeddings {
        cfg.embeddings = Some(p.clone());
    }
    if let Some(p) = &args.corpus {
        cfg.corpus = Some(p.clone());
    }
    if let Some(p) = &args.checkpoint {
        cfg.checkpoint = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.out = p.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&resolve_config(&args)?),
        Command::Eval(args) => cmd_eval(&resolve_config(&args)?),
        Command::Select(args) => cmd_select(&resolve_config(&args)?),
        Command::Sweep(args) => cmd_sweep(&resolve_config(&args)?),
        Command::Noise(args) => cmd_noise(&resolve_config(&args)?),
        Command::Inspect(args) => cmd_inspect(&resolve_config(&args)?),
        Command::Synth(args) => cmd_synth(&resolve_config(&args)?),
        Command::Check(args) => cmd_check(&resolve_config(&args)?),
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.resolved"), cfg.resolved_text())?;
    Ok(())
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    path.as_ref()
        .ok_or_else(|| Error::Config(format!("missing required path: --{what}")))
}

fn load_inputs(cfg: &RunConfig) -> Result<(EmbeddingTable, Corpus, crate::data::IngestReport)> {
    let table = load_embedding_table(required(&cfg.embeddings, "embeddings")?)?;
    let (corpus, report) = load_corpus(required(&cfg.corpus, "corpus")?, &table, cfg.num_classes)?;
    let mut corpus = corpus;
    corpus.positive_class = Some(cfg.positive_class);
    Ok((table, corpus, report))
}

fn write_json<T: serde::Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let (_table, corpus, report) = load_inputs(cfg)?;
    prepare_out(cfg)?;
    write_json(cfg.out.join("ingest_report.json"), &report)?;

    let spec = cfg.model_spec()?;
    let working = if spec.averages_inputs() {
        average_corpus(&corpus)
    } else {
        corpus.clone()
    };
    let dim = working
        .documents
        .iter()
        .find_map(|d| d.vectors.first().map(Vec::len))
        .ok_or_else(|| Error::Config("corpus has no token vectors".into()))?;
    let train_cfg = cfg.train_config();
    let loss_cfg = cfg.loss_config();
    let mut model = spec.build(&working.documents, working.num_classes, dim, &train_cfg)?;
    let trace = train_with_progress(
        &mut model,
        &working.documents,
        &train_cfg,
        &loss_cfg,
        |epoch, loss| {
            if (epoch + 1) % 100 == 0 {
                eprintln!("epoch {:>5}  loss {loss:.6}", epoch + 1);
            }
        },
    )?;

    let mut trace_text = String::from("epoch\tloss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        let _ = writeln!(trace_text, "{}\t{}", epoch + 1, loss);
    }
    fs::write(cfg.out.join("loss_trace.txt"), trace_text)?;

    let ckpt_path = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("checkpoint.json"));
    save_checkpoint(&Checkpoint::new(model.clone(), loss_cfg), &ckpt_path)?;

    if let Some(test_path) = &cfg.test_corpus {
        let table = load_embedding_table(required(&cfg.embeddings, "embeddings")?)?;
        let (test, _) = load_corpus(test_path, &table, cfg.num_classes)?;
        let test = if spec.averages_inputs() {
            average_corpus(&test)
        } else {
            test
        };
        let report = evaluate_model(&model, &test, cfg.positive_class)?;
        write_json(cfg.out.join("metrics.json"), &report)?;
        println!(
            "test accuracy {:.4}  f1 {:.4}  (n={})",
            report.accuracy, report.f1, report.n_eval
        );
    }
    println!("final training loss {}", trace.last().unwrap());
    Ok(())
}

fn evaluate_model(
    model: &AnyModel,
    corpus: &Corpus,
    positive_class: usize,
) -> Result<crate::eval::MetricReport> {
    let mut predictions = Vec::with_capacity(corpus.len());
    let mut labels = Vec::with_capacity(corpus.len());
    for doc in &corpus.documents {
        predictions.push(model.predict(doc)?);
        labels.push(doc.label);
    }
    metrics(
        &predictions,
        &labels,
        corpus.num_classes,
        corpus.positive_class.unwrap_or(positive_class),
    )
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(required(&cfg.checkpoint, "checkpoint")?)?;
    let (_, corpus, _) = load_inputs(cfg)?;
    prepare_out(cfg)?;
    // A checkpoint trained on averaged inputs must see averaged inputs.
    let working = if cfg.variant == Some(crate::baselines::ParcusVariant::Avg) {
        average_corpus(&corpus)
    } else {
        corpus
    };
    let report = evaluate_model(&ckpt.model, &working, cfg.positive_class)?;
    write_json(cfg.out.join("metrics.json"), &report)?;
    println!(
        "accuracy {:.4}  f1 {:.4}  (n={})",
        report.accuracy, report.f1, report.n_eval
    );
    Ok(())
}

/// Selection grids from the experimental protocol, per model family.
pub fn default_grid(cfg: &RunConfig) -> Result<Vec<Candidate>> {
    let base_train = cfg.train_config();
    let positive = cfg.positive_class;
    let grid = match cfg.model.as_str() {
        "parcus" => crate::eval::parcus_default_grid(&cfg.match_config(), &base_train, positive),
        "linear" => crate::eval::linear_default_grid(&base_train, positive),
        "nbow" => crate::eval::nbow_default_grid(&base_train, positive),
        "mlp" => crate::eval::mlp_default_grid(&base_train, positive, false, cfg.boost_base),
        "mlp_boosted" => crate::eval::mlp_default_grid(&base_train, positive, true, cfg.boost_base),
        other => {
            return Err(Error::Config(format!(
                "no selection grid for model '{other}'"
            )))
        }
    };
    Ok(grid)
}

pub fn cmd_select(cfg: &RunConfig) -> Result<()> {
    let (_, corpus, _) = load_inputs(cfg)?;
    prepare_out(cfg)?;
    let grid = default_grid(cfg)?;
    let protocol = cfg.protocol_config();
    let cache_dir = cfg.out.join("cells");
    let outcome = run_protocol(
        &corpus,
        &grid,
        &protocol,
        cfg.seed,
        cfg.workers,
        Some(&cache_dir),
    )?;
    fs::write(cfg.out.join("rows.tsv"), rows_to_tsv(&outcome.rows))?;
    write_json(cfg.out.join("rows.json"), &outcome.rows)?;
    fs::write(
        cfg.out.join("aggregates.tsv"),
        aggregates_to_tsv(&outcome.aggregates),
    )?;
    write_json(cfg.out.join("winners.json"), &outcome.winners)?;
    for agg in &outcome.aggregates {
        println!(
            "size {:>4}  {} {:.4} ({:.4})  [{}]",
            agg.train_size, agg.metric, agg.mean, agg.std, agg.config_id
        );
    }
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let (_, corpus, _) = load_inputs(cfg)?;
    prepare_out(cfg)?;
    let template = Candidate {
        id: "sweep".into(),
        spec: cfg.model_spec()?,
        train: cfg.train_config(),
        loss: cfg.loss_config(),
    };
    let protocol = cfg.protocol_config();
    let outcome = sweep_a_vs_n(
        &corpus,
        &cfg.a_values,
        &cfg.n_values,
        &template,
        &protocol,
        cfg.seed,
        cfg.workers,
    )?;
    let mut matrix = String::from("a\\N");
    for n in &outcome.n_values {
        let _ = write!(matrix, "\t{n}");
    }
    matrix.push('\n');
    for (ai, a) in outcome.a_values.iter().enumerate() {
        let _ = write!(matrix, "{a}");
        for v in &outcome.matrix[ai] {
            let _ = write!(matrix, "\t{v}");
        }
        matrix.push('\n');
    }
    fs::write(cfg.out.join("matrix.tsv"), &matrix)?;
    fs::write(cfg.out.join("rows.tsv"), rows_to_tsv(&outcome.rows))?;
    write_json(cfg.out.join("rows.json"), &outcome.rows)?;
    print!("{matrix}");
    Ok(())
}

pub fn cmd_noise(cfg: &RunConfig) -> Result<()> {
    let (_, corpus, _) = load_inputs(cfg)?;
    prepare_out(cfg)?;
    let candidate = Candidate {
        id: cfg.model.clone(),
        spec: cfg.model_spec()?,
        train: cfg.train_config(),
        loss: cfg.loss_config(),
    };
    let protocol = cfg.protocol_config();
    let rows = crate::eval::noise_harness(
        &corpus,
        &cfg.noise_rates,
        &candidate,
        &protocol,
        cfg.seed,
        cfg.workers,
    )?;
    fs::write(cfg.out.join("rows.tsv"), rows_to_tsv(&rows))?;
    write_json(cfg.out.join("rows.json"), &rows)?;
    let aggs = aggregate(&rows);
    fs::write(cfg.out.join("aggregates.tsv"), aggregates_to_tsv(&aggs))?;
    for agg in &aggs {
        println!(
            "size {:>4}  {} {:.4} ({:.4})  [{}]",
            agg.train_size, agg.metric, agg.mean, agg.std, agg.config_id
        );
    }
    Ok(())
}

pub fn cmd_inspect(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(required(&cfg.checkpoint, "checkpoint")?)?;
    let table = load_embedding_table(required(&cfg.embeddings, "embeddings")?)?;
    let (corpus, _) = load_corpus(required(&cfg.corpus, "corpus")?, &table, cfg.num_classes)?;
    prepare_out(cfg)?;
    let class = cfg.inspect_class.unwrap_or(cfg.positive_class);

    let ranked = rank_tokens(&ckpt.model, &corpus, class, cfg.top_k)?;
    let mut tokens_tsv = String::from("rank\ttoken\tscore\tcount\n");
    for (rank, r) in ranked.iter().enumerate() {
        let _ = writeln!(
            tokens_tsv,
            "{}\t{}\t{}\t{}",
            rank + 1,
            r.token,
            r.mean_score,
            r.count
        );
    }
    fs::write(cfg.out.join("tokens.tsv"), &tokens_tsv)?;
    print!("{tokens_tsv}");

    if let AnyModel::Parcus(model) = &ckpt.model {
        let mut saliency_tsv = String::from("feature\targmax_class\tmargin\tweights\n");
        for row in head_saliency(model) {
            let weights = row
                .weights
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(
                saliency_tsv,
                "{}\t{}\t{}\t{}",
                row.feature, row.argmax_class, row.margin, weights
            );
        }
        fs::write(cfg.out.join("saliency.tsv"), saliency_tsv)?;

        let prototypes: Vec<usize> = match cfg.inspect_prototype {
            Some(k) => vec![k],
            None => (0..model.match_cfg.num_prototypes).collect(),
        };
        let mut neighbors_tsv = String::from("prototype\trank\ttoken\tcosine\n");
        for k in prototypes {
            for (rank, (token, score)) in prototype_neighbors(model, &table, k, cfg.top_k)?
                .into_iter()
                .enumerate()
            {
                let _ = writeln!(neighbors_tsv, "{k}\t{}\t{token}\t{score}", rank + 1);
            }
        }
        fs::write(cfg.out.join("neighbors.tsv"), neighbors_tsv)?;
    }
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    prepare_out(cfg)?;
    let (table, corpus) = generate_synthetic(&cfg.synth, cfg.seed)?;
    write_embedding_table(&table, cfg.out.join("embeddings.txt"))?;
    write_corpus(&corpus, cfg.out.join("corpus.jsonl"))?;
    println!(
        "wrote {} tokens and {} documents to {}",
        table.len(),
        corpus.len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn cmd_check(cfg: &RunConfig) -> Result<()> {
    let tol = 1e-5;
    let results = crate::grad::check_all_cells(20, 1e-5)?;
    let mut failures = 0;
    for (cell, worst) in &results {
        let ok = *worst <= tol;
        println!(
            "{} {}  max_error {worst:.3e}",
            if ok { "PASS" } else { "FAIL" },
            cell.label()
        );
        if !ok {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::Numeric(format!(
            "{failures}/{} gradient cells exceeded {tol}",
            results.len()
        )));
    }
    let _ = cfg;
    println!("all {} cells within {tol}", results.len());
    Ok(())
}
