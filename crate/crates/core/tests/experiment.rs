mod common;

use fedxgb::dataset::{write_csv, CsvSchema, Scheme};
use fedxgb::experiment::{
    prepare, run_grid, split_prepared, write_grid, ExperimentConfig, Mode, Preprocess, Recipe,
};
use fedxgb::federation::TransportKind;
use fedxgb::{DatasetMatrix, Hyperparameters, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn recipe(name: &str) -> Recipe {
    Recipe {
        name: name.into(),
        title: format!("Synthetic {name}"),
        source_url: "https://example.org/synthetic".into(),
        raw_file: format!("{name}.csv"),
        sha256: None,
        schema: CsvSchema::with_label("label"),
        holdout_fraction: 0.2,
        preprocess: Preprocess::default(),
        expected_rows: None,
        expected_train_rows: None,
        expected_classes: None,
        infeasible_schemes: Vec::new(),
        notes: String::new(),
    }
}

fn small_params(rounds: usize) -> Hyperparameters {
    Hyperparameters {
        rounds,
        max_depth: 3,
        max_bins: 32,
        ..Hyperparameters::default()
    }
}

/// Binary data where roughly 80% of rows are positive.
fn skewed(n: usize, seed: u64) -> DatasetMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let y = u32::from(rng.gen_bool(0.8));
        rows.push(vec![
            rng.gen_range(-1.0..1.0) + y as f64,
            rng.gen_range(0.0..5.0),
        ]);
        labels.push(y);
    }
    DatasetMatrix::from_rows(&rows, labels, Task::Binary).unwrap()
}

#[test]
fn zero_round_grid_scores_match_majority_class_oracle() {
    let r = recipe("skewed");
    let data = skewed(2000, 3);
    let prepared = split_prepared(&r, &data, 11, "none".into()).unwrap();
    let mut config = ExperimentConfig::new("skewed");
    config.seed = 11;
    config.hyperparameters = small_params(0);
    let report = run_grid(&config, &r, &prepared).unwrap();

    // Every model predicts the positive class for every row, so the
    // positive-class F1 is 2P / (2P + N) over the holdout counts.
    let counts = &prepared.manifest.test_label_counts;
    let (neg, pos) = (counts[0] as f64, counts[1] as f64);
    let oracle = 2.0 * pos / (2.0 * pos + neg);

    assert_eq!(report.cells.len(), 1 + 25 + 5);
    for cell in &report.cells {
        let f1 = cell.f1.unwrap_or_else(|| panic!("{cell:?}"));
        assert!(
            (f1 - oracle).abs() < 1e-12,
            "{:?} {:?}: {f1} vs {oracle}",
            cell.mode,
            cell.scheme
        );
    }
    assert_eq!(report.summary.local_party_models, 25);
    assert_eq!(report.summary.federated_spread(), Some(0.0));
}

#[test]
fn grid_is_deterministic_and_hashes_differ_per_cell() {
    let r = recipe("multi");
    let data = common::synthetic(1500, 5, Task::Multiclass(3), 0.05, 8);
    let prepared = split_prepared(&r, &data, 5, "none".into()).unwrap();
    let mut config = ExperimentConfig::new("multi");
    config.seed = 5;
    config.hyperparameters = small_params(3);
    let a = run_grid(&config, &r, &prepared).unwrap();
    let b = run_grid(&config, &r, &prepared).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.failed().count(), 0);

    let mut hashes: Vec<&str> = a.cells.iter().map(|c| c.config_hash.as_str()).collect();
    hashes.sort_unstable();
    hashes.dedup();
    assert_eq!(hashes.len(), a.cells.len());

    for cell in &a.cells {
        let f1 = cell.f1.unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
}

#[test]
fn seed_mismatch_is_a_config_error() {
    let r = recipe("seeded");
    let data = common::synthetic(300, 2, Task::Binary, 0.0, 1);
    let prepared = split_prepared(&r, &data, 3, "none".into()).unwrap();
    let config = ExperimentConfig::new("seeded");
    assert!(matches!(
        run_grid(&config, &r, &prepared),
        Err(fedxgb::Error::Config(_))
    ));
}

#[test]
fn recipe_infeasible_schemes_are_skipped() {
    let mut r = recipe("fw");
    r.infeasible_schemes = vec![Scheme::D];
    let data = common::synthetic(900, 4, Task::Binary, 0.0, 2);
    let prepared = split_prepared(&r, &data, 1, "none".into()).unwrap();
    let mut config = ExperimentConfig::new("fw");
    config.seed = 1;
    config.hyperparameters = small_params(2);
    config.modes = vec![Mode::Local, Mode::Federated];
    let report = run_grid(&config, &r, &prepared).unwrap();
    assert_eq!(report.summary.infeasible, vec![Scheme::D]);
    assert_eq!(report.summary.local_party_models, 20);
    assert_eq!(report.summary.federated.len(), 4);
    assert!(report.summary.centralized.is_none());
    assert!(report.cells.iter().all(|c| c.scheme != Some(Scheme::D)));
}

#[test]
fn tcp_grid_matches_in_process_grid() {
    let r = recipe("tcp");
    let data = common::synthetic(800, 4, Task::Binary, 0.1, 4);
    let prepared = split_prepared(&r, &data, 2, "none".into()).unwrap();
    let mut config = ExperimentConfig::new("tcp");
    config.seed = 2;
    config.hyperparameters = small_params(3);
    config.modes = vec![Mode::Federated];
    config.schemes = vec![Scheme::Even, Scheme::C];
    let local = run_grid(&config, &r, &prepared).unwrap();
    config.transport = TransportKind::Tcp;
    let tcp = run_grid(&config, &r, &prepared).unwrap();
    let digests = |g: &fedxgb::experiment::GridReport| {
        g.cells
            .iter()
            .map(|c| c.model_digest.clone().unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(digests(&local), digests(&tcp));
}

#[test]
fn prepare_and_write_grid_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    let data = common::synthetic(700, 3, Task::Binary, 0.0, 6);
    write_csv(raw.join("disk.csv"), &data).unwrap();

    let mut r = recipe("disk");
    r.expected_rows = Some(700);
    r.expected_train_rows = Some(560);
    let prepared = prepare(&r, &raw, 42).unwrap();
    assert_eq!(prepared.manifest.train_rows, 560);

    let mut config = ExperimentConfig::new("disk");
    config.seed = 42;
    config.hyperparameters = small_params(2);
    config.schemes = vec![Scheme::Even];
    let report = run_grid(&config, &r, &prepared).unwrap();
    let out = dir.path().join("out");
    write_grid(&report, &out).unwrap();

    for rel in [
        "disk/full/centralized/model.json",
        "disk/full/centralized/metrics.json",
        "disk/even/federated/model.json",
        "disk/even/local/party3/metrics.json",
        "disk/summary.json",
        "disk/summary.md",
    ] {
        assert!(out.join(rel).is_file(), "{rel}");
    }
    let table = std::fs::read_to_string(out.join("summary.md")).unwrap();
    assert!(table.contains("| Synthetic disk |"), "{table}");

    let model = fedxgb::TreeModel::from_json(
        &std::fs::read_to_string(out.join("disk/even/federated/model.json")).unwrap(),
    )
    .unwrap();
    let fed = report
        .cells
        .iter()
        .find(|c| c.mode == Mode::Federated)
        .unwrap();
    assert_eq!(Some(model.digest()), fed.model_digest);
}
