//! Weakest-link pruning, penalized subtree selection and cross-validation.
//!
//! The penalized criterion `loglik/n − λ·K` is maximized over nested subtrees.
//! Weakest-link collapse produces the nested sequence: at every step the
//! internal node with the smallest log-likelihood gain per extra leaf is
//! turned into a leaf. Each tree on the path is the best subtree of its size.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{CopulaSpec, FitOptions, FitResult};
use crate::dataset::{Dataset, PseudoObservations};
use crate::error::{Error, Result};
use crate::tree::{build_on_rows, CopulaTree, Likelihood, StoppingConfig, Tree, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry {
    pub tree: CopulaTree,
    pub leaves: usize,
    pub train_loglik: f64,
    /// Gain per leaf of the collapse that produced this entry (0 for the maximal tree).
    pub alpha: f64,
}

/// Nested subtrees with strictly decreasing leaf counts, ending at the root.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunePath {
    entries: Vec<PathEntry>,
}

impl PrunePath {
    pub fn entries(&self) -> &[PathEntry] {
        &self.entries
    }

    pub fn leaf_counts(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.leaves).collect()
    }

    /// Entry with the largest leaf count not above `k` (the root if none).
    pub fn at_most(&self, k: usize) -> &PathEntry {
        self.entries.iter().find(|e| e.leaves <= k).unwrap_or_else(|| self.entries.last().expect("path is never empty"))
    }

    /// Penalty values `[lo, hi)` for which [`select_penalized`] returns entry `i`;
    /// `None` when the entry is never selected. `hi` is infinite for the root.
    pub fn lambda_interval(&self, i: usize, n: usize) -> Option<(f64, f64)> {
        let e = &self.entries[i];
        let n = n as f64;
        let mut lo: f64 = 0.0;
        let mut hi = f64::INFINITY;
        for other in &self.entries {
            let slope = (other.train_loglik - e.train_loglik) / (n * (other.leaves as f64 - e.leaves as f64));
            if other.leaves > e.leaves {
                lo = lo.max(slope);
            } else if other.leaves < e.leaves {
                hi = hi.min(slope);
            }
        }
        (lo < hi).then_some((lo, hi))
    }

    /// One row per entry: `leaves, train_loglik, alpha, lambda_lo, lambda_hi`,
    /// the λ columns empty when the entry is never selected.
    pub fn write_tsv<W: Write>(&self, n: usize, mut w: W) -> Result<()> {
        writeln!(w, "# format_version: {FORMAT_VERSION}")?;
        writeln!(w, "leaves\ttrain_loglik\talpha\tlambda_lo\tlambda_hi")?;
        for (i, e) in self.entries.iter().enumerate() {
            let (lo, hi) = match self.lambda_interval(i, n) {
                Some((lo, hi)) => (lo.to_string(), hi.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(w, "{}\t{}\t{}\t{lo}\t{hi}", e.leaves, e.train_loglik, e.alpha)?;
        }
        Ok(())
    }
}

/// Weakest-link collapse sequence of any tree scored by a per-node `value`
/// (larger is better). Returns each successive subtree with the per-leaf gain
/// of the collapse that produced it; the input tree comes first with gain 0.
pub(crate) fn weakest_link<F: Clone, V: Fn(&F) -> f64>(tree: &Tree<F>, value: V) -> Vec<(Tree<F>, f64)> {
    let mut current = tree.clone();
    let mut out = vec![(current.clone(), 0.0)];
    while current.leaf_count() > 1 {
        let mut weakest: Option<(f64, usize, usize)> = None;
        for id in current.internal_ids() {
            let node = current.node(id).expect("internal node exists");
            let leaves = current.subtree_leaves(id);
            let below: f64 = leaves.iter().map(|&l| value(&current.node(l).expect("leaf exists").fit)).sum();
            let g = (below - value(&node.fit)) / (leaves.len() - 1) as f64;
            let better = match weakest {
                None => true,
                Some((bg, bd, bid)) => g < bg || (g == bg && (node.depth > bd || (node.depth == bd && id < bid))),
            };
            if better {
                weakest = Some((g, node.depth, id));
            }
        }
        let (g, _, id) = weakest.expect("non-leaf tree has an internal node");
        current = current.collapse(id);
        out.push((current.clone(), g));
    }
    out
}

/// Weakest-link path from the maximal tree down to the root. Ties in the
/// per-leaf gain collapse the deepest node first, then the lowest id.
pub fn prune_path(tree: &CopulaTree) -> PrunePath {
    let entries = weakest_link(tree.tree(), |f: &FitResult| f.loglik)
        .into_iter()
        .map(|(t, alpha)| PathEntry {
            leaves: t.leaf_count(),
            train_loglik: t.leaf_sum(|f| f.loglik),
            tree: tree.with_tree(t),
            alpha,
        })
        .collect();
    PrunePath { entries }
}

/// Path entry maximizing `train_loglik / n − λ·K`; ties go to the smaller tree.
pub fn select_penalized(path: &PrunePath, lambda: f64, n: usize) -> &PathEntry {
    let score = |e: &PathEntry| e.train_loglik / n as f64 - lambda * e.leaves as f64;
    let mut best = path.entries.last().expect("path is never empty");
    for e in path.entries.iter().rev().skip(1) {
        if score(e) > score(best) {
            best = e;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Leaf count with the highest mean validation log-likelihood.
    MaxMean,
    /// Smallest leaf count within one standard error of the best mean.
    OneSe,
}

impl std::str::FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "max_mean" | "maxmean" => Ok(Self::MaxMean),
            "one_se" | "onese" | "1se" => Ok(Self::OneSe),
            _ => Err(Error::Config(format!("unknown selection rule `{s}` (expected max-mean or one-se)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub rule: SelectionRule,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 3, repeats: 50, seed: 0, rule: SelectionRule::OneSe }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub leaves: usize,
    pub mean_val_loglik: f64,
    pub se: f64,
    /// Number of fold paths containing this leaf count exactly.
    pub n_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub format_version: u32,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub rule: SelectionRule,
    pub rows: Vec<CvRow>,
    pub chosen_leaves: usize,
    /// Penalty interval selecting the chosen tree on the full-data path.
    /// An unbounded upper end is stored as `null`.
    #[serde(with = "open_interval")]
    pub lambda_interval: Option<(f64, f64)>,
}

mod open_interval {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<(f64, f64)>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|(lo, hi)| (lo, hi.is_finite().then_some(hi))).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<(f64, f64)>, D::Error> {
        Ok(Option::<(f64, Option<f64>)>::deserialize(d)?.map(|(lo, hi)| (lo, hi.unwrap_or(f64::INFINITY))))
    }
}

impl CvReport {
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# format_version: {}", self.format_version)?;
        writeln!(w, "K\tmean_val_loglik\tse\tn_folds")?;
        for r in &self.rows {
            writeln!(w, "{}\t{}\t{}\t{}", r.leaves, r.mean_val_loglik, r.se, r.n_folds)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported format_version {}", report.format_version)));
        }
        Ok(report)
    }
}

/// Outcome of growing, pruning and cross-validating on one dataset.
#[derive(Debug, Clone)]
pub struct PrunedFit {
    pub maximal: CopulaTree,
    pub path: PrunePath,
    pub report: CvReport,
    pub selected: CopulaTree,
}

pub(crate) fn fold_assignments(n: usize, cv: &CvConfig) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cv.seed);
    let mut folds = Vec::with_capacity(cv.folds * cv.repeats);
    for _ in 0..cv.repeats {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for f in 0..cv.folds {
            let mut held: Vec<usize> = order.iter().skip(f).step_by(cv.folds).copied().collect();
            held.sort_unstable();
            folds.push(held);
        }
    }
    folds
}

/// (leaf count, held-out log-likelihood) for every entry of one fold's path.
fn fold_curve(obj: &Likelihood, data: &Dataset, held: &[usize], stopping: &StoppingConfig) -> Result<Vec<(usize, f64)>> {
    let mut in_fold = vec![false; data.n()];
    for &i in held {
        in_fold[i] = true;
    }
    let train: Vec<usize> = (0..data.n()).filter(|&i| !in_fold[i]).collect();
    let tree = build_on_rows(obj, data, train, stopping)?;
    let path = prune_path(&tree);
    Ok(path
        .entries()
        .iter()
        .map(|e| {
            let ll = held
                .iter()
                .map(|&i| obj.log_density(e.tree.tree().node(e.tree.leaf_of_row(data, i)).expect("leaf").fit.theta_hat, i))
                .sum();
            (e.leaves, ll)
        })
        .collect())
}

/// Repeated k-fold cross-validation of the pruning path, followed by the
/// selection on the full-data path.
pub fn cross_validate(
    spec: &CopulaSpec,
    pseudo: &PseudoObservations,
    data: &Dataset,
    stopping: &StoppingConfig,
    cv: &CvConfig,
) -> Result<PrunedFit> {
    if cv.folds < 2 || cv.repeats == 0 {
        return Err(Error::Config(format!("cross-validation needs folds >= 2 and repeats >= 1, got {} and {}", cv.folds, cv.repeats)));
    }
    if pseudo.k() != 2 || pseudo.n() != data.n() {
        return Err(Error::Input("pseudo-observations do not match the dataset".into()));
    }
    let opts = FitOptions::default();
    stopping.validate(opts.min_fit_n)?;
    let required = cv.folds * 2 * stopping.min_leaf;
    if data.n() < required {
        return Err(Error::InsufficientData { required, got: data.n() });
    }
    let obj = Likelihood::new(*spec, pseudo, opts);
    let maximal = build_on_rows(&obj, data, (0..data.n()).collect(), stopping)?;
    let path = prune_path(&maximal);

    let curves: Vec<Vec<(usize, f64)>> = fold_assignments(data.n(), cv)
        .par_iter()
        .map(|held| fold_curve(&obj, data, held, stopping))
        .collect::<Result<_>>()?;

    let rows = aggregate(&curves);
    let chosen_leaves = choose(&rows, cv.rule);
    let idx = path.entries().iter().position(|e| e.leaves <= chosen_leaves).unwrap_or(path.entries().len() - 1);
    let selected = path.entries()[idx].tree.clone();
    let report = CvReport {
        format_version: FORMAT_VERSION,
        folds: cv.folds,
        repeats: cv.repeats,
        seed: cv.seed,
        rule: cv.rule,
        rows,
        chosen_leaves: path.entries()[idx].leaves,
        lambda_interval: path.lambda_interval(idx, data.n()),
    };
    Ok(PrunedFit { maximal, path, report, selected })
}

/// Per-leaf-count mean and standard error over fold curves of (K, score),
/// each listed by decreasing K. A fold lacking K contributes its nearest
/// smaller K.
pub(crate) fn aggregate(curves: &[Vec<(usize, f64)>]) -> Vec<CvRow> {
    let k_max = curves.iter().map(|c| c[0].0).max().unwrap_or(1);
    let m = curves.len() as f64;
    (1..=k_max)
        .map(|k| {
            let vals: Vec<f64> = curves
                .iter()
                .map(|c| c.iter().find(|(kk, _)| *kk <= k).map_or(c[c.len() - 1].1, |e| e.1))
                .collect();
            let mean = vals.iter().sum::<f64>() / m;
            let se = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt() / m.sqrt()
            } else {
                0.0
            };
            let n_folds = curves.iter().filter(|c| c.iter().any(|(kk, _)| *kk == k)).count();
            CvRow { leaves: k, mean_val_loglik: mean, se, n_folds }
        })
        .collect()
}

pub(crate) fn choose(rows: &[CvRow], rule: SelectionRule) -> usize {
    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.mean_val_loglik > best.mean_val_loglik {
            best = r;
        }
    }
    match rule {
        SelectionRule::MaxMean => best.leaves,
        SelectionRule::OneSe => {
            let floor = best.mean_val_loglik - best.se;
            rows.iter().find(|r| r.mean_val_loglik >= floor).map_or(best.leaves, |r| r.leaves)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::Family;
    use crate::tree::{Node, Split, SplitRule};

    fn fit(ll: f64) -> FitResult {
        FitResult { theta_hat: 1.0, tau_hat: 1.0 / 3.0, loglik: ll, n_obs: 10, converged: true }
    }

    /// Root (ll 0) → {1: ll 5 → {3: 4, 4: 4}, 2: ll 5}. Gains: node 1 → 3, root → 13/2.
    fn handmade() -> CopulaTree {
        let split = |l, r| Some(Split { rule: SplitRule::Numeric { feature: 0, threshold: 0.5 }, left: l, right: r });
        let nodes = vec![
            Node { id: 0, depth: 0, n_obs: 40, fit: fit(0.0), split: split(1, 2) },
            Node { id: 1, depth: 1, n_obs: 20, fit: fit(5.0), split: split(3, 4) },
            Node { id: 2, depth: 1, n_obs: 20, fit: fit(5.0), split: None },
            Node { id: 3, depth: 2, n_obs: 10, fit: fit(4.0), split: None },
            Node { id: 4, depth: 2, n_obs: 10, fit: fit(4.0), split: None },
        ];
        let schema = vec![crate::dataset::CovariateInfo { name: "x".into(), kind: crate::dataset::CovariateKind::Numeric, levels: None }];
        CopulaTree::from_parts(CopulaSpec::new(Family::Clayton), Tree::from_nodes(nodes).unwrap(), schema, StoppingConfig::default())
    }

    #[test]
    fn weakest_link_order() {
        let path = prune_path(&handmade());
        assert_eq!(path.leaf_counts(), vec![3, 2, 1]);
        assert_eq!(path.entries()[1].train_loglik, 10.0);
        assert_eq!(path.entries()[1].alpha, 3.0);
        assert_eq!(path.entries()[2].train_loglik, 0.0);
        for w in path.entries().windows(2) {
            assert!(w[1].tree.tree().ids().is_subset(&w[0].tree.tree().ids()));
        }
    }

    #[test]
    fn penalized_selection_and_intervals() {
        let path = prune_path(&handmade());
        let n = 1;
        assert_eq!(select_penalized(&path, 0.0, n).leaves, 3);
        assert_eq!(select_penalized(&path, 100.0, n).leaves, 1);
        // 3 → 2 costs 3 nats, 2 → 1 costs 10 nats.
        assert_eq!(path.lambda_interval(0, n), Some((0.0, 3.0)));
        assert_eq!(path.lambda_interval(1, n), Some((3.0, 10.0)));
        assert_eq!(path.lambda_interval(2, n), Some((10.0, f64::INFINITY)));
        assert_eq!(select_penalized(&path, 3.0, n).leaves, 2);
        assert_eq!(select_penalized(&path, 6.5, n).leaves, 2);
        assert_eq!(select_penalized(&path, 10.0, n).leaves, 1);
    }

    #[test]
    fn one_se_prefers_smaller() {
        let rows = vec![
            CvRow { leaves: 1, mean_val_loglik: 9.5, se: 0.2, n_folds: 3 },
            CvRow { leaves: 2, mean_val_loglik: 10.0, se: 0.6, n_folds: 3 },
            CvRow { leaves: 3, mean_val_loglik: 9.9, se: 0.1, n_folds: 3 },
        ];
        assert_eq!(choose(&rows, SelectionRule::MaxMean), 2);
        assert_eq!(choose(&rows, SelectionRule::OneSe), 1);
    }

    #[test]
    fn folds_partition_rows() {
        let cv = CvConfig { folds: 3, repeats: 2, seed: 7, rule: SelectionRule::OneSe };
        let f = fold_assignments(10, &cv);
        assert_eq!(f.len(), 6);
        for r in 0..2 {
            let mut all: Vec<usize> = f[3 * r..3 * r + 3].concat();
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(f, fold_assignments(10, &cv));
    }
}
