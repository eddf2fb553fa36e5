mod common;

use copula_tree::copula::{CopulaSpec, Family};
use copula_tree::dataset::{Covariate, CovariateValue, Dataset, PseudoMethod, PseudoObservations};
use copula_tree::tree::{build_maximal_tree, find_optimal_split, CopulaTree, SplitRule, StoppingConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fitted(seed: u64, family: Family) -> (CopulaTree, Dataset, PseudoObservations) {
    let spec = CopulaSpec::new(family);
    let (data, pseudo) = common::two_regime(&spec, 600, (0.2, 0.6), seed);
    let tree = build_maximal_tree(&spec, &pseudo, &data, &StoppingConfig { min_leaf: 30, ..Default::default() }).unwrap();
    (tree, data, pseudo)
}

#[test]
fn every_split_increases_training_loglik() {
    for (seed, f) in [(1, Family::Clayton), (2, Family::Frank), (3, Family::Gumbel)] {
        let (tree, _, _) = fitted(seed, f);
        assert!(tree.leaf_count() > 1);
        for node in tree.tree().nodes() {
            if let Some(s) = &node.split {
                let children = tree.tree().node(s.left).unwrap().fit.loglik + tree.tree().node(s.right).unwrap().fit.loglik;
                assert!(children > node.fit.loglik);
            }
        }
    }
}

#[test]
fn each_covariate_vector_reaches_exactly_one_leaf() {
    let (tree, _, _) = fitted(4, Family::Clayton);
    let leaves: Vec<usize> = tree.tree().leaves().map(|n| n.id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let x = [CovariateValue::Numeric(rng.gen_range(-0.5..1.5)), CovariateValue::Numeric(rng.gen_range(-0.5..1.5))];
        let accepting = leaves
            .iter()
            .filter(|&&leaf| {
                // A leaf accepts x when every rule on its root path agrees.
                let mut id = tree.tree().root().id;
                loop {
                    if id == leaf {
                        return true;
                    }
                    let Some(s) = &tree.tree().node(id).unwrap().split else { return false };
                    let left = s.rule.goes_left_value(&x[s.rule.feature()], tree.schema()).unwrap();
                    id = if left { s.left } else { s.right };
                }
            })
            .count();
        assert_eq!(accepting, 1);
        assert!(leaves.contains(&tree.predict(&x).unwrap().leaf));
    }
}

#[test]
fn row_order_does_not_change_the_tree() {
    let spec = CopulaSpec::new(Family::Frank);
    let (data, pseudo) = common::two_regime(&spec, 500, (0.1, 0.5), 9);
    let stopping = StoppingConfig { min_leaf: 25, ..Default::default() };
    let a = build_maximal_tree(&spec, &pseudo, &data, &stopping).unwrap();
    let mut perm: Vec<usize> = (0..data.n()).collect();
    perm.reverse();
    perm.rotate_left(137);
    let b = build_maximal_tree(&spec, &pseudo.permuted(&perm), &data.select_rows(&perm), &stopping).unwrap();
    assert_eq!(a.leaf_count(), b.leaf_count());
    for (x, y) in a.tree().nodes().iter().zip(b.tree().nodes()) {
        assert_eq!(x.split.as_ref().map(|s| &s.rule), y.split.as_ref().map(|s| &s.rule));
        assert_eq!(x.n_obs, y.n_obs);
        assert!((x.fit.loglik - y.fit.loglik).abs() < 1e-9 * x.fit.loglik.abs().max(1.0));
    }
}

/// Categorical data whose dependence differs by level.
fn categorical_case(seed: u64) -> (CopulaSpec, Dataset, PseudoObservations) {
    let spec = CopulaSpec::new(Family::Clayton);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = ["a", "b", "c", "d", "e"];
    let taus: Vec<f64> = levels.iter().map(|_| rng.gen_range(0.05..0.8)).collect();
    let n = 300;
    let codes: Vec<usize> = (0..n).map(|_| rng.gen_range(0..levels.len())).collect();
    let pairs: Vec<_> = codes.iter().map(|&c| spec.sample_pair(spec.tau_to_theta(taus[c]).unwrap(), &mut rng)).collect();
    let labels: Vec<&str> = codes.iter().map(|&c| levels[c]).collect();
    let data = Dataset::new(
        vec![pairs.iter().map(|p| p.u()).collect(), pairs.iter().map(|p| p.v()).collect()],
        vec![Covariate::categorical("g", &labels)],
    )
    .unwrap();
    (spec, data, PseudoObservations::from_pairs(&pairs, PseudoMethod::Known))
}

#[test]
fn ordered_level_search_beats_one_versus_rest() {
    use copula_tree::copula::fit_mle;
    for seed in 0..10 {
        let (spec, data, pseudo) = categorical_case(seed);
        let stopping = StoppingConfig { min_leaf: 20, ..Default::default() };
        let best = find_optimal_split(&spec, &pseudo, &data, &stopping).unwrap().map_or(0.0, |c| c.gain);
        let pairs = pseudo.pairs();
        let root = fit_mle(&spec, &pairs).unwrap().loglik;
        let cov = data.covariate(0);
        for level in 0..5 {
            let (l, r): (Vec<_>, Vec<_>) = (0..data.n()).partition(|&i| {
                matches!(cov.value(i), CovariateValue::Categorical(ref s) if s == ["a", "b", "c", "d", "e"][level])
            });
            if l.len() < 20 || r.len() < 20 {
                continue;
            }
            let pick = |idx: &[usize]| idx.iter().map(|&i| pairs[i]).collect::<Vec<_>>();
            let gain = fit_mle(&spec, &pick(&l)).unwrap().loglik + fit_mle(&spec, &pick(&r)).unwrap().loglik - root;
            assert!(best >= gain - 1e-9, "seed {seed} level {level}: {best} < {gain}");
        }
    }
}

/// Ordering levels by their own θ̂ is a heuristic for the likelihood; the
/// agreement with the best of all 2^(M-1) - 1 bipartitions is printed, not
/// required.
#[test]
fn ordered_level_search_against_all_bipartitions() {
    use copula_tree::copula::fit_mle;
    let levels = ["a", "b", "c", "d", "e"];
    let mut agree = 0;
    for seed in 0..10 {
        let (spec, data, pseudo) = categorical_case(100 + seed);
        let stopping = StoppingConfig { min_leaf: 20, ..Default::default() };
        let best = find_optimal_split(&spec, &pseudo, &data, &stopping).unwrap().map_or(0.0, |c| c.gain);
        let pairs = pseudo.pairs();
        let root = fit_mle(&spec, &pairs).unwrap().loglik;
        let cov = data.covariate(0);
        let code = |i: usize| match cov.value(i) {
            CovariateValue::Categorical(s) => levels.iter().position(|l| *l == s).unwrap(),
            CovariateValue::Numeric(_) => unreachable!(),
        };
        let mut exhaustive: f64 = 0.0;
        for mask in 1u32..(1 << (levels.len() - 1)) {
            let (l, r): (Vec<_>, Vec<_>) = (0..data.n()).map(|i| pairs[i]).zip(0..data.n()).partition(|&(_, i)| mask >> code(i) & 1 == 1);
            if l.len() < 20 || r.len() < 20 {
                continue;
            }
            let fit = |side: &[(copula_tree::copula::UnitPair, usize)]| {
                fit_mle(&spec, &side.iter().map(|p| p.0).collect::<Vec<_>>()).unwrap().loglik
            };
            exhaustive = exhaustive.max(fit(&l) + fit(&r) - root);
        }
        assert!(best <= exhaustive + 1e-9, "seed {seed}: ordered {best} > exhaustive {exhaustive}");
        if exhaustive - best < 1e-9 {
            agree += 1;
        }
    }
    println!("ordered level search matched the best bipartition in {agree}/10 cases");
}

#[test]
fn json_round_trip_preserves_predictions() {
    let (tree, data, _) = fitted(5, Family::Gumbel);
    let back = CopulaTree::from_json(&tree.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), tree.to_json().unwrap());
    for i in 0..data.n() {
        assert_eq!(back.predict(&data.covariate_row(i)).unwrap(), tree.predict(&data.covariate_row(i)).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn leaves_partition_training_rows(seed in 0u64..1000, min_leaf in 10usize..60) {
        let spec = CopulaSpec::new(Family::Clayton);
        let (data, pseudo) = common::two_regime(&spec, 300, (0.2, 0.7), seed);
        let tree = build_maximal_tree(&spec, &pseudo, &data, &StoppingConfig { min_leaf, ..Default::default() }).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for i in 0..data.n() {
            *counts.entry(tree.leaf_of_row(&data, i)).or_insert(0usize) += 1;
        }
        prop_assert_eq!(counts.len(), tree.leaf_count());
        for leaf in tree.tree().leaves() {
            prop_assert_eq!(counts[&leaf.id], leaf.n_obs);
            prop_assert!(leaf.n_obs >= min_leaf);
        }
        for node in tree.tree().nodes() {
            if let Some(s) = &node.split {
                prop_assert!(matches!(s.rule, SplitRule::Numeric { .. }), "numeric rule expected");
            }
        }
    }
}
