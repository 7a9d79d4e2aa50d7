//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! The heavyweight criteria share one synthetic benchmark (2 classes,
//! 16-dim embeddings, 2 planted concepts per class) and one protocol:
//! balanced splits of 10 training documents, 10 split seeds, 3 retrains,
//! 200 test documents per split.

use std::sync::OnceLock;
use std::time::Instant;

use parcus::baselines::{ModelSpec, ParcusVariant};
use parcus::checkpoint::AnyModel;
use parcus::data::{generate_synthetic, Corpus, Document, EmbeddingTable, SyntheticSpec};
use parcus::eval::{
    aggregate_by_size, make_splits, parcus_default_grid, run_protocol, sweep_a_vs_n, Candidate,
    ProtocolConfig, ResultRow, SelectionMetric,
};
use parcus::grad::{all_cells, cell_fixture, check_all_cells, doc_logit_gradient};
use parcus::matching::{delta_area, gate, MatchConfig};
use parcus::model::{argmax_tie_low, LossConfig, Mode, Model};
use parcus::optim::{train, PrototypeInit, TrainConfig};
use parcus::rng::derive_seed;

const BASE_SEED: u64 = 90210;
const BENCH_SEED: u64 = 77;

fn bench_spec() -> SyntheticSpec {
    SyntheticSpec {
        dim: 16,
        num_classes: 2,
        concepts_per_class: 2,
        noise_tokens: 40,
        docs_per_class: 110,
        tokens_per_doc: 10,
        planted_rate: 0.25,
        rationale_rate: 1.0,
    }
}

static BENCH: OnceLock<(EmbeddingTable, Corpus)> = OnceLock::new();

fn bench() -> &'static (EmbeddingTable, Corpus) {
    BENCH.get_or_init(|| generate_synthetic(&bench_spec(), BENCH_SEED).expect("bench corpus"))
}

fn protocol() -> ProtocolConfig {
    ProtocolConfig {
        train_sizes: vec![10],
        n_splits: 10,
        n_retrain: 3,
        balanced_train: true,
        selection_metric: SelectionMetric::Accuracy,
    }
}

fn train_cfg(epochs: usize, init: PrototypeInit) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        epochs,
        batch_size: 32,
        prototype_init: init,
        ..TrainConfig::default()
    }
}

fn bench_match_cfg() -> MatchConfig {
    // Four prototypes: one per planted concept, so the annotated-token
    // init can cover them all.
    MatchConfig {
        num_prototypes: 4,
        ..MatchConfig::default()
    }
}

fn parcus_candidate(id: &str, variant: Option<ParcusVariant>, init: PrototypeInit) -> Candidate {
    Candidate {
        id: id.into(),
        spec: ModelSpec::Parcus {
            match_cfg: bench_match_cfg(),
            boost_base: std::f64::consts::E,
            use_bias: true,
            variant,
        },
        train: train_cfg(500, init),
        loss: LossConfig::default(),
    }
}

fn run_one(candidate: Candidate) -> Vec<ResultRow> {
    run_protocol(&bench().1, &[candidate], &protocol(), BASE_SEED, 1, None)
        .expect("protocol run")
        .rows
}

fn mean_metric(rows: &[ResultRow]) -> f64 {
    let aggs = aggregate_by_size(rows);
    assert_eq!(aggs.len(), 1);
    aggs[0].mean
}

static PARCUS_ROWS: OnceLock<Vec<ResultRow>> = OnceLock::new();

fn parcus_rows() -> &'static [ResultRow] {
    PARCUS_ROWS.get_or_init(|| {
        run_one(parcus_candidate(
            "parcus",
            None,
            PrototypeInit::AnnotatedToken,
        ))
    })
}

#[test]
fn criterion_01_gradient_oracle() {
    let started = Instant::now();
    let results = check_all_cells(20, 1e-5).expect("gradient matrix");
    assert_eq!(results.len(), 32);
    for (cell, worst) in &results {
        assert!(
            *worst <= 1e-5,
            "criterion 1 FAIL: cell {} max error {worst}",
            cell.label()
        );
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "criterion 1 FAIL: oracle took {elapsed:?}, budget is 60s"
    );
    println!(
        "ACCEPTANCE 01 gradient-oracle: PASS (32 cells x 20 seeds, worst error {:.2e}, {:?})",
        results.iter().map(|(_, e)| *e).fold(0.0, f64::max),
        elapsed
    );
}

/// Composite Simpson integration of the gate over [-1, 1]; independent of
/// the closed form it checks.
fn simpson_gate_area(a: f64, intervals: usize) -> f64 {
    assert!(intervals.is_multiple_of(2));
    let h = 2.0 / intervals as f64;
    let f = |v: f64| a.powf(v - 1.0);
    let mut acc = f(-1.0) + f(1.0);
    for i in 1..intervals {
        let v = -1.0 + h * i as f64;
        acc += if i % 2 == 1 { 4.0 * f(v) } else { 2.0 * f(v) };
    }
    acc * h / 3.0
}

#[test]
fn criterion_02_gate_convergence_and_error_area() {
    for a in [10.0, 100.0] {
        let closed = delta_area(a).unwrap();
        let numeric = simpson_gate_area(a, 8192);
        assert!(
            (closed - numeric).abs() < 1e-6,
            "criterion 2 FAIL: area at a={a}: closed {closed} vs quadrature {numeric}"
        );
    }
    for d in [-1.0, -0.5, 0.0, 0.5, 0.9] {
        let mut last = f64::INFINITY;
        for a in [10.0, 100.0, 1e3, 1e4, 1e6, 1e9] {
            let g = gate(d, a).unwrap();
            assert!(
                g < last,
                "criterion 2 FAIL: gate({d}, {a}) = {g} did not decrease"
            );
            last = g;
        }
        assert!(
            gate(d, 1e80).unwrap() < 1e-6,
            "criterion 2 FAIL: gate({d}, 1e80) not below 1e-6"
        );
    }
    println!("ACCEPTANCE 02 gate-convergence-and-error-area: PASS (1e-6 quadrature agreement, monotone decay)");
}

#[test]
fn criterion_03_boosting_algebra() {
    // One representative configuration with everything enabled.
    let (mut model, batch) = cell_fixture(all_cells()[0], 4242);
    model.boost_base = std::f64::consts::E;

    // (a) all-zero rationales: Eq. 8 output equals Eq. 7 output exactly.
    let mut unflagged = batch[0].clone();
    unflagged.rationale = vec![0; unflagged.len()];
    let train_fwd = model.forward(&unflagged, Mode::Train).unwrap();
    let infer_fwd = model.forward(&unflagged, Mode::Infer).unwrap();
    assert_eq!(
        train_fwd.doc_logits, infer_fwd.doc_logits,
        "criterion 3a FAIL: boosted and plain sums differ on unannotated input"
    );
    assert_eq!(train_fwd.probs, infer_fwd.probs);

    // (b) single-token document: parameter gradients scale by exactly f(r)
    // (up to final-bit rounding of the multiplication order).
    let single = |flag: u8| Document {
        tokens: vec![String::new()],
        vectors: vec![batch[0].vectors[0].clone()],
        rationale: vec![flag],
        label: 1,
    };
    let cot = vec![0.4, -0.6];
    let boosted = doc_logit_gradient(&model, &single(1), &cot, Mode::Train).unwrap();
    let plain = doc_logit_gradient(&model, &single(0), &cot, Mode::Train).unwrap();
    for (gb, gp) in boosted.blocks.iter().zip(&plain.blocks) {
        for (&b, &p) in gb.grad.as_slice().iter().zip(gp.grad.as_slice()) {
            let want = std::f64::consts::E * p;
            assert!(
                (b - want).abs() <= 1e-13 * want.abs().max(1.0),
                "criterion 3b FAIL: block {} gradient {b} vs e * {p}",
                gb.name
            );
        }
    }

    // (c) all-one rationales: train logits = base * infer logits, same argmax.
    let mut flagged = batch[1].clone();
    flagged.rationale = vec![1; flagged.len()];
    let train_fwd = model.forward(&flagged, Mode::Train).unwrap();
    let infer_fwd = model.forward(&flagged, Mode::Infer).unwrap();
    for c in 0..2 {
        let want = std::f64::consts::E * infer_fwd.doc_logits[c];
        assert!(
            (train_fwd.doc_logits[c] - want).abs() <= 1e-12 * want.abs().max(1.0),
            "criterion 3c FAIL: class {c} logit {} vs base * {}",
            train_fwd.doc_logits[c],
            infer_fwd.doc_logits[c]
        );
    }
    assert_eq!(
        argmax_tie_low(&train_fwd.doc_logits),
        argmax_tie_low(&infer_fwd.doc_logits),
        "criterion 3c FAIL: argmax changed under uniform boosting"
    );
    println!("ACCEPTANCE 03 boosting-algebra: PASS (neutrality exact, f(r) scaling at 1e-13, uniform boost argmax stable)");
}

#[test]
fn criterion_04_low_resource_benchmark() {
    let started = Instant::now();
    // Every split leaves exactly 200 test documents: 220 total - 10 train
    // - 10 validation.
    let split = make_splits(
        &bench().1,
        10,
        derive_seed(BASE_SEED, "split", &[10, 0]),
        true,
    )
    .expect("bench split");
    assert_eq!(split.test.len(), 200);

    // Baselines get their own hold-out selection over their full grids;
    // split seeds are shared, so the comparison is paired.
    let parcus_mean = mean_metric(parcus_rows());
    let base_train = TrainConfig::default();
    let linear_grid = parcus::eval::linear_default_grid(&base_train, 1);
    let linear_rows = run_protocol(&bench().1, &linear_grid, &protocol(), BASE_SEED, 1, None)
        .unwrap()
        .rows;
    let linear_mean = mean_metric(&linear_rows);
    let nbow_grid = parcus::eval::nbow_default_grid(&base_train, 1);
    let nbow_rows = run_protocol(&bench().1, &nbow_grid, &protocol(), BASE_SEED, 1, None)
        .unwrap()
        .rows;
    let nbow_mean = mean_metric(&nbow_rows);

    assert!(
        parcus_mean >= 0.90,
        "criterion 4 FAIL: parcus mean accuracy {parcus_mean} below 0.90"
    );
    assert!(
        parcus_mean > linear_mean,
        "criterion 4 FAIL: parcus {parcus_mean} does not exceed linear {linear_mean}"
    );
    assert!(
        parcus_mean > nbow_mean,
        "criterion 4 FAIL: parcus {parcus_mean} does not exceed nbow {nbow_mean}"
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 300,
        "criterion 4 FAIL: benchmark took {elapsed:?}, budget is 5 minutes"
    );
    println!(
        "ACCEPTANCE 04 low-resource-benchmark: PASS (parcus {parcus_mean:.3} vs linear {linear_mean:.3}, nbow {nbow_mean:.3}; {elapsed:?})"
    );
}

#[test]
fn criterion_05_ablation_ordering() {
    let parcus_mean = mean_metric(parcus_rows());
    // The wo-h arm uses random-unit init so no rationale channel is left.
    let wo_h_mean = mean_metric(&run_one(parcus_candidate(
        "parcus_wo_h",
        Some(ParcusVariant::WoH),
        PrototypeInit::RandomUnit,
    )));
    let kmeans_mean = mean_metric(&run_one(parcus_candidate(
        "parcus_kmeans",
        Some(ParcusVariant::KMeans),
        PrototypeInit::AnnotatedToken,
    )));

    assert!(
        parcus_mean - wo_h_mean >= 0.0,
        "criterion 5 FAIL: parcus {parcus_mean} below wo-h {wo_h_mean}"
    );
    assert!(
        parcus_mean - kmeans_mean >= 0.0,
        "criterion 5 FAIL: parcus {parcus_mean} below kmeans {kmeans_mean}"
    );
    println!(
        "ACCEPTANCE 05 ablation-ordering: PASS (parcus {parcus_mean:.3} >= wo-h {wo_h_mean:.3}, >= kmeans {kmeans_mean:.3})"
    );
}

#[test]
fn criterion_06_noise_robustness_trend() {
    // Bigger pool so a 150-document balanced train split (plus an equal
    // validation split) fits.
    let (_, corpus) = generate_synthetic(
        &SyntheticSpec {
            docs_per_class: 200,
            ..bench_spec()
        },
        BENCH_SEED + 1,
    )
    .unwrap();

    let noise_protocol = ProtocolConfig {
        train_sizes: vec![10, 150],
        n_splits: 10,
        n_retrain: 1,
        balanced_train: true,
        selection_metric: SelectionMetric::Accuracy,
    };
    // Fixed hyperparameters, f(r) = e^r; epochs reduced to keep the
    // harness fast at size 150.
    let candidate = Candidate {
        train: train_cfg(150, PrototypeInit::AnnotatedToken),
        ..parcus_candidate("parcus", None, PrototypeInit::AnnotatedToken)
    };
    let rates = [0.0, 0.25, 0.5, 0.75, 1.0];
    let rows =
        parcus::eval::noise_harness(&corpus, &rates, &candidate, &noise_protocol, BASE_SEED, 1)
            .unwrap();

    let mean_at = |rate: f64, size: usize| {
        let id = format!("parcus_noise={rate}");
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.config_id == id && r.train_size == size)
            .map(|r| r.value)
            .collect();
        assert_eq!(vals.len(), 10);
        vals.iter().sum::<f64>() / vals.len() as f64
    };

    // The no-rationale reference: wo-h on a flag-less corpus, same splits.
    let mut blank = corpus.clone();
    for doc in &mut blank.documents {
        doc.rationale = vec![0; doc.len()];
    }
    let wo_h = Candidate {
        train: train_cfg(150, PrototypeInit::RandomUnit),
        ..parcus_candidate("wo_h", Some(ParcusVariant::WoH), PrototypeInit::RandomUnit)
    };
    let wo_h_rows = run_protocol(&blank, &[wo_h], &noise_protocol, BASE_SEED, 1, None)
        .unwrap()
        .rows;
    let wo_h_stats = |size: usize| {
        let vals: Vec<f64> = wo_h_rows
            .iter()
            .filter(|r| r.train_size == size)
            .map(|r| r.value)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        (mean, var.sqrt())
    };

    for size in [10usize, 150] {
        let (wo_h_mean, wo_h_std) = wo_h_stats(size);
        let saturated = mean_at(1.0, size);
        assert!(
            (saturated - wo_h_mean).abs() <= 2.0 * wo_h_std,
            "criterion 6 FAIL: size {size}: full-noise mean {saturated} vs wo-h {wo_h_mean} (std {wo_h_std})"
        );
    }
    let degradation_small = mean_at(0.0, 10) - mean_at(1.0, 10);
    let degradation_large = mean_at(0.0, 150) - mean_at(1.0, 150);
    assert!(
        degradation_small > degradation_large,
        "criterion 6 FAIL: degradation at size 10 ({degradation_small}) not above size 150 ({degradation_large})"
    );
    println!(
        "ACCEPTANCE 06 noise-robustness-trend: PASS (degradation {degradation_small:.3} @10 vs {degradation_large:.3} @150)"
    );
}

#[test]
fn criterion_07_sweep_shape() {
    // The sweep runs the full annotated model, varying only (a, N).
    let template = parcus_candidate("sweep", None, PrototypeInit::AnnotatedToken);
    let outcome = sweep_a_vs_n(
        &bench().1,
        &[10.0, 100.0],
        &[1, 4, 5],
        &template,
        &protocol(),
        BASE_SEED,
        1,
    )
    .unwrap();
    let narrow = outcome.matrix[1][0]; // a=100, N=1
    let wide = outcome.matrix[1][2]; // a=100, N=5
    assert!(
        narrow <= wide,
        "criterion 7 FAIL: one prototype at a=100 scored {narrow}, five scored {wide}"
    );
    println!(
        "ACCEPTANCE 07 sweep-shape: PASS (a=100: N=1 {narrow:.3} <= N=5 {wide:.3}; N=4 column {:.3})",
        outcome.matrix[1][1]
    );
}

#[test]
fn criterion_08_introspection_fidelity() {
    let (table, corpus) = bench();
    let mut joint_hits = 0;
    for split_idx in 0..10u64 {
        let split_seed = derive_seed(BASE_SEED, "split", &[10, split_idx]);
        let split = make_splits(corpus, 10, split_seed, true).unwrap();
        let train_docs: Vec<Document> = split
            .train
            .iter()
            .map(|&i| corpus.documents[i].clone())
            .collect();
        let tc = TrainConfig {
            seed: derive_seed(BASE_SEED, "introspect", &[split_idx]),
            ..train_cfg(500, PrototypeInit::AnnotatedToken)
        };
        let spec = ModelSpec::Parcus {
            match_cfg: bench_match_cfg(),
            boost_base: std::f64::consts::E,
            use_bias: true,
            variant: None,
        };
        let mut model = spec.build(&train_docs, 2, 16, &tc).unwrap();
        train(&mut model, &train_docs, &tc, &LossConfig::default()).unwrap();

        let parcus_model = match &model {
            AnyModel::Parcus(m) => m,
            _ => unreachable!(),
        };
        let unseen = Corpus {
            documents: split
                .test
                .iter()
                .map(|&i| corpus.documents[i].clone())
                .collect(),
            num_classes: 2,
            positive_class: Some(1),
            provenance: "unseen".into(),
        };

        let dominant = parcus::introspect::dominant_prototype(parcus_model, 1);
        let neighbors =
            parcus::introspect::prototype_neighbors(parcus_model, table, dominant, 3).unwrap();
        let neighbor_hit = neighbors.iter().any(|(t, _)| t.starts_with("concept_c1_"));

        let ranked = parcus::introspect::rank_tokens(&model, &unseen, 1, 3).unwrap();
        let rank_hit = ranked.iter().any(|r| r.token.starts_with("concept_c1_"));

        if neighbor_hit && rank_hit {
            joint_hits += 1;
        }
    }
    assert!(
        joint_hits >= 8,
        "criterion 8 FAIL: planted positive token in top-3 neighbors and rankings on only {joint_hits}/10 seeds"
    );
    println!("ACCEPTANCE 08 introspection-fidelity: PASS ({joint_hits}/10 seeds)");
}

#[test]
fn criterion_09_protocol_plumbing() {
    // The selection grid enumerates exactly 2*2*3*2*2 = 48 cells.
    let grid = parcus_default_grid(&MatchConfig::default(), &TrainConfig::default(), 1);
    assert_eq!(grid.len(), 48, "criterion 9 FAIL: grid size");
    let mut ids: Vec<&str> = grid.iter().map(|c| c.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), 48, "criterion 9 FAIL: duplicate grid ids");

    // Splits: balanced, disjoint, deterministic across several seeds.
    let corpus = &bench().1;
    for seed in [1u64, 2, 3, 99] {
        let a = make_splits(corpus, 10, seed, true).unwrap();
        let b = make_splits(corpus, 10, seed, true).unwrap();
        assert_eq!(a, b, "criterion 9 FAIL: splits not deterministic");
        for class in 0..2 {
            let count = a
                .train
                .iter()
                .filter(|&&i| corpus.documents[i].label == class)
                .count();
            assert_eq!(count, 5, "criterion 9 FAIL: unbalanced train split");
        }
        let mut all: Vec<usize> = a
            .train
            .iter()
            .chain(&a.validation)
            .chain(&a.test)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), corpus.len(), "criterion 9 FAIL: splits overlap");
    }

    // Reported means/stds recompute exactly from the emitted rows.
    let rows = parcus_rows();
    let aggs = aggregate_by_size(rows);
    assert_eq!(aggs.len(), 1);
    let mut split_order: Vec<u64> = Vec::new();
    for row in rows {
        if !split_order.contains(&row.split_seed) {
            split_order.push(row.split_seed);
        }
    }
    assert_eq!(split_order.len(), 10);
    let split_means: Vec<f64> = split_order
        .iter()
        .map(|&s| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.split_seed == s)
                .map(|r| r.value)
                .collect();
            assert_eq!(vals.len(), 3, "criterion 9 FAIL: retrain count");
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    let mean = split_means.iter().sum::<f64>() / split_means.len() as f64;
    let var = split_means
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .sum::<f64>()
        / split_means.len() as f64;
    assert_eq!(
        aggs[0].mean, mean,
        "criterion 9 FAIL: mean does not recompute"
    );
    assert_eq!(
        aggs[0].std,
        var.sqrt(),
        "criterion 9 FAIL: std does not recompute"
    );
    println!("ACCEPTANCE 09 protocol-plumbing: PASS (48 cells, balanced disjoint deterministic splits, exact aggregation)");
}

#[test]
fn criterion_10_byte_identical_reruns() {
    use std::process::Command;

    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_parcus");

    // Rerunning a command with the identical config and seed into the
    // same output directory must reproduce every file byte for byte.
    let synth_out = dir.path().join("synth");
    let synth = || {
        let status = Command::new(bin)
            .args([
                "synth",
                "--seed",
                "7",
                "--out",
                &synth_out.display().to_string(),
                "--set",
                "synth_docs_per_class=20",
            ])
            .status()
            .expect("run synth");
        assert!(status.success(), "criterion 10 FAIL: synth exited nonzero");
    };
    let snapshot = |out: &std::path::Path, files: &[&str]| -> Vec<Vec<u8>> {
        files
            .iter()
            .map(|f| std::fs::read(out.join(f)).expect("output file present"))
            .collect()
    };
    let synth_files = ["embeddings.txt", "corpus.jsonl", "config.resolved"];
    synth();
    let first = snapshot(&synth_out, &synth_files);
    synth();
    let second = snapshot(&synth_out, &synth_files);
    for ((a, b), name) in first.iter().zip(&second).zip(synth_files) {
        assert_eq!(
            a, b,
            "criterion 10 FAIL: synth {name} differs across reruns"
        );
    }

    let train_out = dir.path().join("train");
    let train = || {
        let status = Command::new(bin)
            .args([
                "train",
                "--embeddings",
                &synth_out.join("embeddings.txt").display().to_string(),
                "--corpus",
                &synth_out.join("corpus.jsonl").display().to_string(),
                "--out",
                &train_out.display().to_string(),
                "--seed",
                "3",
                "--set",
                "epochs=60",
            ])
            .status()
            .expect("run train");
        assert!(status.success(), "criterion 10 FAIL: train exited nonzero");
    };
    let train_files = ["checkpoint.json", "loss_trace.txt", "config.resolved"];
    train();
    let first = snapshot(&train_out, &train_files);
    train();
    let second = snapshot(&train_out, &train_files);
    for ((a, b), name) in first.iter().zip(&second).zip(train_files) {
        assert_eq!(
            a, b,
            "criterion 10 FAIL: train {name} differs across reruns"
        );
    }
    println!("ACCEPTANCE 10 byte-identical-reruns: PASS (synth and train outputs identical)");
}
