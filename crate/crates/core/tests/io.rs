use lsdd_core::data::{gen_gaussian_shift, load_csv, save_csv};
use lsdd_core::experiment::{run_experiment, ExperimentConfig, ExperimentKind, ResultTable};
use lsdd_core::rng::seeded;
use lsdd_core::Error;

#[test]
fn file_round_trip_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pts.csv");
    let (x, _) = gen_gaussian_shift(3, 25, 1, 0.4, &mut seeded(1)).unwrap();
    let header: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    save_csv(&path, &x, Some(&header)).unwrap();
    let back = load_csv(&path, true).unwrap();
    assert_eq!(back, x);
    // reading the header as data points at the offending cell
    match load_csv(&path, false) {
        Err(Error::Csv { row, column, .. }) => assert_eq!((row, column), (1, 1)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn ragged_and_missing_files_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    assert!(matches!(load_csv(&ragged, false), Err(Error::Csv { row: 2, .. })));
    assert!(matches!(load_csv(dir.path().join("none.csv"), false), Err(Error::Data { .. })));
}

#[test]
fn experiment_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::L2Curve);
    cfg.replicates = 3;
    cfg.mus = vec![0.0, 0.5];
    let table = run_experiment(&cfg).unwrap();
    let (csv_path, json_path) = table.write_outputs(&cfg, &dir.path().join("run")).unwrap();

    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + table.rows.len());

    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let cfg_back: ExperimentConfig = serde_json::from_value(doc["config"].clone()).unwrap();
    assert_eq!(cfg_back, cfg);

    // summaries are a pure function of the rows
    let rebuilt = ResultTable::from_rows(table.rows.clone());
    assert_eq!(rebuilt.summaries, table.summaries);
    for s in &table.summaries {
        let vals: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.condition == s.condition && r.estimator == s.estimator)
            .map(|r| r.value)
            .collect();
        assert_eq!(s.count, vals.len());
        assert_eq!(s.mean, vals.iter().sum::<f64>() / vals.len() as f64);
    }
}
