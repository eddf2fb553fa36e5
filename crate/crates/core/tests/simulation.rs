use copula_tree::copula::Family;
use copula_tree::simulation::{run_study, Model, PipelineConfig, Source, StudyConfig, TauSurface};
use copula_tree::tree::StoppingConfig;

fn tiny() -> StudyConfig {
    StudyConfig {
        families: vec![Family::Clayton, Family::Frank],
        surfaces: vec![TauSurface::Step],
        n: 400,
        reps: 3,
        seed: 7,
        pipeline: PipelineConfig { repeats: 2, stopping: StoppingConfig { min_leaf: 40, ..Default::default() }, ..Default::default() },
    }
}

#[test]
fn study_is_deterministic_and_nested() {
    let a = run_study(&tiny()).unwrap();
    let b = run_study(&tiny()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.records.len(), 2 * 3 * 3 * 2);
    for r in a.records.iter().filter(|r| r.model == Model::Conditional) {
        let bench = a
            .records
            .iter()
            .find(|b| b.model == Model::Benchmark && (b.family, b.source, b.rep) == (r.family, r.source, r.rep))
            .unwrap();
        assert!(r.loglik >= bench.loglik, "{r:?}");
        assert_eq!(bench.n_splits, 0);
    }
    let summary = a.summary();
    let metrics: std::collections::BTreeSet<&str> = summary.cells.iter().map(|c| c.metric.as_str()).collect();
    assert_eq!(metrics.len(), 4);
    let mut tsv = Vec::new();
    a.write_tsv(&mut tsv).unwrap();
    let text = String::from_utf8(tsv).unwrap();
    assert!(text.starts_with("# format_version: 1\n"));
    assert_eq!(text.lines().count(), 2 + a.records.len() * 4);
}

#[test]
fn sources_share_the_simulated_sample() {
    let a = run_study(&tiny()).unwrap();
    let u = a.select(TauSurface::Step, Family::Clayton, Source::U, Model::Benchmark);
    let v = a.select(TauSurface::Step, Family::Clayton, Source::V, Model::Benchmark);
    assert_eq!(u.len(), 3);
    assert!(u.iter().zip(&v).all(|(x, y)| x.rep == y.rep && x.loglik != y.loglik));
}
