use bolab::experiment::{run_experiment, Experiment, ExperimentConfig};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        n_points: 1024,
        domain_length: 256.0,
        t_end: Some(2.0),
        ..ExperimentConfig::default()
    }
}

#[test]
fn sweep_summary_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_experiment(Experiment::TheoremSweep, &small(), a.path()).unwrap();
    let second = run_experiment(Experiment::TheoremSweep, &small(), b.path()).unwrap();
    assert_eq!(first.to_json().unwrap(), second.to_json().unwrap());
    for artifact in &first.artifacts {
        let read = |root: &std::path::Path| std::fs::read(root.join("theorem-sweep").join(artifact)).unwrap();
        assert_eq!(read(a.path()), read(b.path()), "{artifact}");
    }
    let text = std::fs::read_to_string(a.path().join("theorem-sweep/summary.json")).unwrap();
    assert_eq!(bolab::experiment::RunSummary::from_json(&text).unwrap(), first);
}

#[test]
fn seed_changes_the_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let base = run_experiment(Experiment::TheoremSweep, &small(), &dir.path().join("a")).unwrap();
    let other = ExperimentConfig { seed: 7, ..small() };
    let moved = run_experiment(Experiment::TheoremSweep, &other, &dir.path().join("b")).unwrap();
    assert_ne!(base.data, moved.data);
}
