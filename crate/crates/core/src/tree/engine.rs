//! Greedy breadth-first tree growth, generic over the node criterion.
//!
//! An [`Objective`] supplies the per-node fit, its score (larger is better,
//! additive over children) and a way to pick the best cut of a sorted row
//! list. The copula log-likelihood and the least-squares margin trees both
//! run through [`grow`].

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::structure::{Node, Split, SplitRule, Tree};
use crate::dataset::{CovariateValues, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub min_leaf: usize,
    pub min_gain: f64,
    pub max_leaves: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self { min_leaf: 50, min_gain: 0.0, max_leaves: 32 }
    }
}

impl StoppingConfig {
    pub fn validate(&self, min_fit_n: usize) -> Result<()> {
        if self.min_leaf < min_fit_n.max(1) {
            return Err(Error::Config(format!("min_leaf {} is below the minimum fit size {min_fit_n}", self.min_leaf)));
        }
        if !(self.min_gain >= 0.0) {
            return Err(Error::Config(format!("min_gain must be >= 0, got {}", self.min_gain)));
        }
        if self.max_leaves == 0 {
            return Err(Error::Config("max_leaves must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) trait Objective {
    type Fit: Clone;

    fn fit(&self, rows: &[usize]) -> Result<Self::Fit>;

    /// Node score; a split's gain is `value(left) + value(right) - value(parent)`.
    fn value(&self, fit: &Self::Fit) -> f64;

    /// Key used to order categorical levels before the contiguous-cut scan.
    fn order_key(&self, fit: &Self::Fit) -> f64;

    /// Cheap location summary used to merge levels too small to fit.
    fn level_proxy(&self, rows: &[usize]) -> f64;

    fn min_level_rows(&self) -> usize;

    /// Best split of `sorted` among the cut positions `cuts` (left = `sorted[..c]`).
    /// Returns the index into `cuts` and the summed child score; the first
    /// cut wins ties.
    fn best_cut(&self, sorted: &[usize], cuts: &[usize]) -> Option<(usize, f64)>;
}

/// Split chosen at a node, with the children's fits.
#[derive(Debug, Clone)]
pub(crate) struct Chosen<F> {
    pub rule: SplitRule,
    pub gain: f64,
    pub left_rows: Vec<usize>,
    pub right_rows: Vec<usize>,
    pub left: F,
    pub right: F,
}

pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

/// Rows ordered by the feature value, row index breaking ties.
pub(crate) fn sort_by_value(x: &[f64], rows: &[usize]) -> Vec<usize> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    sorted
}

/// Cut positions between distinct consecutive values leaving `min_leaf` rows per side.
pub(crate) fn numeric_cuts(x: &[f64], sorted: &[usize], min_leaf: usize) -> Vec<usize> {
    let n = sorted.len();
    let lo = min_leaf.max(1);
    if n < 2 * lo {
        return Vec::new();
    }
    (lo..=n - lo).filter(|&c| x[sorted[c - 1]] < x[sorted[c]]).collect()
}

/// Groups of level codes in scan order. Each group is led by a level with
/// enough rows to fit, followed by the sparse levels merged into it.
pub(crate) fn level_groups<O: Objective>(obj: &O, codes: &[u32], rows: &[usize]) -> Vec<Vec<u32>> {
    let mut by_level: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &r in rows {
        by_level.entry(codes[r]).or_default().push(r);
    }
    if by_level.len() < 2 {
        return vec![by_level.keys().copied().collect()];
    }
    let mut dense: Vec<(u32, f64, f64)> = Vec::new();
    let mut sparse: Vec<u32> = Vec::new();
    for (&level, lrows) in &by_level {
        let fitted = if lrows.len() >= obj.min_level_rows() { obj.fit(lrows).ok() } else { None };
        match fitted {
            Some(f) if obj.order_key(&f).is_finite() => {
                dense.push((level, obj.order_key(&f), obj.level_proxy(lrows)))
            }
            _ => sparse.push(level),
        }
    }
    if dense.is_empty() {
        return vec![by_level.keys().copied().collect()];
    }
    let mut groups: BTreeMap<u32, Vec<u32>> = dense.iter().map(|d| (d.0, vec![d.0])).collect();
    for level in sparse {
        let p = obj.level_proxy(&by_level[&level]);
        let target = dense
            .iter()
            .min_by(|a, b| (a.2 - p).abs().total_cmp(&(b.2 - p).abs()).then(a.0.cmp(&b.0)))
            .expect("dense levels exist")
            .0;
        groups.get_mut(&target).expect("group exists").push(level);
    }
    dense.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    dense.into_iter().map(|d| groups.remove(&d.0).expect("group exists")).collect()
}

struct Scored {
    rule: SplitRule,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
    score: f64,
}

fn best_for_feature<O: Objective>(obj: &O, data: &Dataset, rows: &[usize], feature: usize, min_leaf: usize) -> Option<Scored> {
    match &data.covariate(feature).values {
        CovariateValues::Numeric(x) => {
            let sorted = sort_by_value(x, rows);
            let cuts = numeric_cuts(x, &sorted, min_leaf);
            let (ci, score) = obj.best_cut(&sorted, &cuts)?;
            let c = cuts[ci];
            Some(Scored {
                rule: SplitRule::Numeric { feature, threshold: midpoint(x[sorted[c - 1]], x[sorted[c]]) },
                left_rows: sorted[..c].to_vec(),
                right_rows: sorted[c..].to_vec(),
                score,
            })
        }
        CovariateValues::Categorical { codes, .. } => {
            let groups = level_groups(obj, codes, rows);
            if groups.len() < 2 {
                return None;
            }
            let mut rank = BTreeMap::new();
            for (g, levels) in groups.iter().enumerate() {
                for &l in levels {
                    rank.insert(l, g);
                }
            }
            let mut sorted = rows.to_vec();
            sorted.sort_by_key(|&r| (rank[&codes[r]], r));
            let mut cuts = Vec::new();
            let mut boundary_groups = Vec::new();
            for c in 1..sorted.len() {
                let g = rank[&codes[sorted[c]]];
                if g != rank[&codes[sorted[c - 1]]] && c >= min_leaf && sorted.len() - c >= min_leaf {
                    cuts.push(c);
                    boundary_groups.push(g);
                }
            }
            let (ci, score) = obj.best_cut(&sorted, &cuts)?;
            let c = cuts[ci];
            let mut left_levels: Vec<u32> = groups[..boundary_groups[ci]].iter().flatten().copied().collect();
            left_levels.sort_unstable();
            Some(Scored {
                rule: SplitRule::Categorical { feature, left_levels },
                left_rows: sorted[..c].to_vec(),
                right_rows: sorted[c..].to_vec(),
                score,
            })
        }
    }
}

/// Best admissible split of `rows` whose gain exceeds `min_gain`. Features are
/// scanned in index order and a later candidate replaces the incumbent only
/// on a strictly larger gain.
pub(crate) fn find_split<O: Objective>(
    obj: &O,
    data: &Dataset,
    rows: &[usize],
    parent: &O::Fit,
    min_leaf: usize,
    min_gain: f64,
) -> Option<Chosen<O::Fit>> {
    if rows.len() < 2 * min_leaf.max(1) {
        return None;
    }
    let parent_value = obj.value(parent);
    let mut best: Option<Scored> = None;
    for feature in 0..data.d() {
        if let Some(s) = best_for_feature(obj, data, rows, feature, min_leaf) {
            if best.as_ref().is_none_or(|b| s.score > b.score) {
                best = Some(s);
            }
        }
    }
    let best = best?;
    let left = obj.fit(&best.left_rows).ok()?;
    let right = obj.fit(&best.right_rows).ok()?;
    let gain = obj.value(&left) + obj.value(&right) - parent_value;
    if !(gain > min_gain) {
        return None;
    }
    Some(Chosen { rule: best.rule, gain, left_rows: best.left_rows, right_rows: best.right_rows, left, right })
}

/// Grows the maximal tree over `rows` with a first-in first-out work list.
pub(crate) fn grow<O: Objective>(
    obj: &O,
    data: &Dataset,
    rows: Vec<usize>,
    stopping: &StoppingConfig,
) -> Result<Tree<O::Fit>> {
    let root = obj.fit(&rows)?;
    let mut tree = Tree::single_leaf(root, rows.len());
    let mut queue = VecDeque::from([(0usize, rows)]);
    let mut leaves = 1;
    let mut next_id = 1;
    while let Some((id, node_rows)) = queue.pop_front() {
        if leaves >= stopping.max_leaves {
            break;
        }
        let node = tree.node(id).expect("queued node exists");
        let depth = node.depth;
        let Some(chosen) = find_split(obj, data, &node_rows, &node.fit, stopping.min_leaf, stopping.min_gain) else {
            continue;
        };
        let (l, r) = (next_id, next_id + 1);
        next_id += 2;
        tree.node_mut(id).expect("queued node exists").split = Some(Split { rule: chosen.rule, left: l, right: r });
        tree.push(Node { id: l, depth: depth + 1, n_obs: chosen.left_rows.len(), fit: chosen.left, split: None });
        tree.push(Node { id: r, depth: depth + 1, n_obs: chosen.right_rows.len(), fit: chosen.right, split: None });
        queue.push_back((l, chosen.left_rows));
        queue.push_back((r, chosen.right_rows));
        leaves += 1;
    }
    Ok(tree)
}
