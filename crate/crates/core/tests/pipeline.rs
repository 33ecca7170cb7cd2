use hybridfem::data::{generate_dataset, Dataset, Family};
use hybridfem::exec::Exec;
use hybridfem::hybrid::{
    error_budget, evaluate, loss, stability_check, train, write_loss_csv, CoarseInput, Model, TrainConfig,
};
use hybridfem::mesh::MeshHierarchy;

fn config(coarse_input: CoarseInput) -> TrainConfig {
    TrainConfig {
        hidden: vec![24, 24],
        epochs: 150,
        lr: 1e-2,
        lr_decay_every: 50,
        standardize: true,
        coarse_input,
        ..TrainConfig::default()
    }
}

#[test]
fn generate_train_save_load_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let m = MeshHierarchy::new(2, 1).unwrap();
    let train_set = generate_dataset(&m, 24, 1, Family::Verbatim, Exec::Parallel).unwrap();
    let test_set = generate_dataset(&m, 8, 2, Family::Verbatim, Exec::Parallel).unwrap();

    let data_path = dir.path().join("data/train.json");
    train_set.save(&data_path).unwrap();
    assert_eq!(Dataset::load(&data_path).unwrap(), train_set);

    let out = train(&train_set, Some(&test_set), &config(CoarseInput::Patch)).unwrap();
    assert_eq!(out.history.len(), 151);
    assert!(out.history.iter().all(|r| r.test_loss.is_some()));
    let last = out.history.last().unwrap();
    assert!(last.train_loss < 0.1 * out.history[0].train_loss);

    // The recorded history is the loss of the returned model.
    let layout = out.model.layout().unwrap();
    let recomputed = loss(&out.model, &layout, &train_set, Exec::Sequential).unwrap();
    assert!((recomputed - last.train_loss).abs() <= 1e-12 * last.train_loss);

    let model_path = dir.path().join("model.json");
    out.model.save(&model_path).unwrap();
    let loaded = Model::load(&model_path).unwrap();
    assert_eq!(loaded.to_json().unwrap(), out.model.to_json().unwrap());

    let csv = dir.path().join("loss.csv");
    write_loss_csv(&csv, &out.history).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 152);

    let rows = evaluate(&loaded, &train_set, &test_set, Exec::Parallel).unwrap();
    for r in &rows {
        assert!(r.err_fine < r.err_coarse);
        assert!(r.err_hybrid < r.err_coarse, "{r:?}");
    }

    let report = stability_check(&loaded, 100, 5, Family::Verbatim).unwrap();
    assert!(report.pass);
    let b = error_budget(&loaded, &train_set, test_set.samples[0].params, Exec::Parallel).unwrap();
    assert!(b.holds);
}

#[test]
fn global_coarse_input_trains() {
    let m = MeshHierarchy::new(2, 1).unwrap();
    let train_set = generate_dataset(&m, 12, 3, Family::Xy, Exec::Parallel).unwrap();
    let out = train(&train_set, None, &config(CoarseInput::Global)).unwrap();
    assert_eq!(out.model.net.input_dim(), 9 + 9);
    assert!(out.history.last().unwrap().train_loss < out.history[0].train_loss);
}

#[test]
fn parallel_and_sequential_runs_agree_bitwise() {
    let m = MeshHierarchy::new(2, 2).unwrap();
    let a = generate_dataset(&m, 10, 9, Family::Verbatim, Exec::Parallel).unwrap();
    let b = generate_dataset(&m, 10, 9, Family::Verbatim, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    let cfg = |exec| TrainConfig {
        hidden: vec![8],
        epochs: 10,
        batch_size: Some(3),
        exec,
        ..TrainConfig::default()
    };
    let ra = train(&a, None, &cfg(Exec::Parallel)).unwrap();
    let rb = train(&b, None, &cfg(Exec::Sequential)).unwrap();
    assert_eq!(ra.history, rb.history);
    assert_eq!(ra.model.to_json().unwrap(), rb.model.to_json().unwrap());
}
