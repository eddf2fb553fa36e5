//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use copula_tree::copula::{fit_mle, CopulaSpec, FitResult, UnitPair};
use copula_tree::dataset::{Covariate, CovariateValues, Dataset, PseudoMethod, PseudoObservations};
use copula_tree::tree::CopulaTree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// three-term Legendre recurrence.
pub fn legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// ∫∫ f over the unit square with an n×n Gauss-Legendre product rule.
pub fn unit_square_integral(n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let nodes = legendre_nodes(n);
    let mut total = 0.0;
    for &(xi, wi) in &nodes {
        for &(xj, wj) in &nodes {
            total += 0.25 * wi * wj * f(0.5 * (xi + 1.0), 0.5 * (xj + 1.0));
        }
    }
    total
}

/// Composite tensor Gauss-Legendre rule on cells graded geometrically towards
/// 0 and 1 (breakpoints 2^-k and 1 - 2^-k for k up to `depth`), so tail
/// singularities at the corners are resolved.
pub fn graded_unit_square_integral(depth: i32, n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut edges = vec![0.0];
    edges.extend((2..=depth).rev().map(|k| 2f64.powi(-k)));
    edges.push(0.5);
    edges.extend((2..=depth).map(|k| 1.0 - 2f64.powi(-k)));
    edges.push(1.0);
    let nodes = legendre_nodes(n);
    let points: Vec<(f64, f64)> = edges
        .windows(2)
        .flat_map(|e| {
            let h = e[1] - e[0];
            nodes.iter().map(move |&(x, w)| (e[0] + 0.5 * h * (x + 1.0), 0.5 * h * w))
        })
        .collect();
    points.iter().map(|&(u, wu)| points.iter().map(|&(v, wv)| wu * wv * f(u, v)).sum::<f64>()).sum()
}

/// Best numeric split found by refitting every admissible midpoint threshold.
/// Ties keep the first candidate in (feature, threshold) order.
pub fn exhaustive_split(
    spec: &CopulaSpec,
    pairs: &[UnitPair],
    data: &Dataset,
    min_leaf: usize,
) -> Option<(usize, f64, f64)> {
    let parent = fit_mle(spec, pairs).ok()?;
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..data.d() {
        let CovariateValues::Numeric(x) = &data.covariate(j).values else { continue };
        let mut distinct = x.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for w in distinct.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<UnitPair>, Vec<UnitPair>) = {
                let mut l = Vec::new();
                let mut r = Vec::new();
                for (i, &p) in pairs.iter().enumerate() {
                    if x[i] <= t { l.push(p) } else { r.push(p) }
                }
                (l, r)
            };
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let gain = fit_mle(spec, &l).ok()?.loglik + fit_mle(spec, &r).ok()?.loglik - parent.loglik;
            if gain > 0.0 && best.map_or(true, |b| gain > b.2) {
                best = Some((j, t, gain));
            }
        }
    }
    best
}

/// Every pruned subtree of `tree` as (leaf count, summed leaf log-likelihood).
pub fn all_subtrees(tree: &CopulaTree) -> Vec<(usize, f64)> {
    fn rec(tree: &CopulaTree, id: usize) -> Vec<(usize, f64)> {
        let node = tree.tree().node(id).expect("node");
        let mut out = vec![(1, node.fit.loglik)];
        if let Some(s) = &node.split {
            let (l, r) = (rec(tree, s.left), rec(tree, s.right));
            for &(kl, vl) in &l {
                for &(kr, vr) in &r {
                    out.push((kl + kr, vl + vr));
                }
            }
        }
        out
    }
    rec(tree, tree.tree().root().id)
}

pub fn fit_of_leaves(tree: &CopulaTree) -> Vec<FitResult> {
    tree.tree().leaves().map(|n| n.fit).collect()
}

/// Two uniform covariates and a copula sample whose τ jumps at x1 = 0.5.
pub fn two_regime(spec: &CopulaSpec, n: usize, tau: (f64, f64), seed: u64) -> (Dataset, PseudoObservations) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let (a, b) = (spec.tau_to_theta(tau.0).unwrap(), spec.tau_to_theta(tau.1).unwrap());
    let pairs: Vec<UnitPair> = x1.iter().map(|&x| spec.sample_pair(if x <= 0.5 { a } else { b }, &mut rng)).collect();
    let pseudo = PseudoObservations::from_pairs(&pairs, PseudoMethod::Known);
    let data = Dataset::new(
        vec![pairs.iter().map(|p| p.u()).collect(), pairs.iter().map(|p| p.v()).collect()],
        vec![Covariate::numeric("x1", x1), Covariate::numeric("x2", x2)],
    )
    .unwrap();
    (data, pseudo)
}
