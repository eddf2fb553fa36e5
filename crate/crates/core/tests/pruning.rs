mod common;

use std::collections::BTreeSet;

use copula_tree::copula::{CopulaSpec, Family};
use copula_tree::pruning::{cross_validate, prune_path, select_penalized, CvConfig, SelectionRule};
use copula_tree::tree::{build_maximal_tree, StoppingConfig};
use proptest::prelude::*;

fn path_for(seed: u64) -> (copula_tree::pruning::PrunePath, usize) {
    let spec = CopulaSpec::new(Family::Clayton);
    let (data, pseudo) = common::two_regime(&spec, 500, (0.2, 0.6), seed);
    let tree = build_maximal_tree(&spec, &pseudo, &data, &StoppingConfig { min_leaf: 20, ..Default::default() }).unwrap();
    (prune_path(&tree), data.n())
}

#[test]
fn path_subtrees_are_nested() {
    for seed in 0..5 {
        let (path, _) = path_for(seed);
        let ids: Vec<BTreeSet<usize>> = path.entries().iter().map(|e| e.tree.tree().ids()).collect();
        for w in ids.windows(2) {
            assert!(w[1].is_subset(&w[0]) && w[1].len() < w[0].len());
        }
        assert_eq!(path.entries().last().unwrap().leaves, 1);
        let ll: Vec<f64> = path.entries().iter().map(|e| e.train_loglik).collect();
        assert!(ll.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn lambda_intervals_select_their_entry() {
    for seed in 0..5 {
        let (path, n) = path_for(seed);
        for i in 0..path.entries().len() {
            if let Some((lo, hi)) = path.lambda_interval(i, n) {
                let lambda = if hi.is_finite() { (lo + hi) / 2.0 } else { lo + 1.0 };
                assert_eq!(select_penalized(&path, lambda, n).leaves, path.entries()[i].leaves);
            }
        }
    }
}

#[test]
fn cross_validation_is_deterministic_per_seed() {
    let spec = CopulaSpec::new(Family::Frank);
    let (data, pseudo) = common::two_regime(&spec, 400, (0.1, 0.5), 3);
    let stopping = StoppingConfig { min_leaf: 30, ..Default::default() };
    let cv = CvConfig { folds: 3, repeats: 4, seed: 11, rule: SelectionRule::OneSe };
    let a = cross_validate(&spec, &pseudo, &data, &stopping, &cv).unwrap();
    let b = cross_validate(&spec, &pseudo, &data, &stopping, &cv).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.selected.to_json().unwrap(), b.selected.to_json().unwrap());
    let back = copula_tree::pruning::CvReport::from_json(&a.report.to_json().unwrap()).unwrap();
    assert_eq!(back, a.report);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn penalized_choice_shrinks_with_lambda(seed in 0u64..500) {
        let (path, n) = path_for(seed);
        let ks: Vec<usize> = (0..60).map(|i| select_penalized(&path, i as f64 * 0.002, n).leaves).collect();
        prop_assert!(ks.windows(2).all(|w| w[0] >= w[1]), "{:?}", ks);
    }
}
