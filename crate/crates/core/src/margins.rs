//! Pseudo-observations: estimated probability-integral transforms of the
//! responses, computed once before any copula is fitted.
//!
//! Every estimator returns values strictly inside (0, 1). Rank-based
//! estimators use average ranks divided by (n + 1); smoothed estimators are
//! clamped to `[1/(2n), 1 − 1/(2n)]` unless told otherwise.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CovariateInfo, CovariateValue, CovariateValues, Dataset, PseudoMethod, PseudoObservations};
use crate::error::{Error, Result};
use crate::pruning::{aggregate, choose, fold_assignments, weakest_link, CvConfig, SelectionRule};
use crate::stats::{average_ranks, normal_cdf};
use crate::tree::{grow, Objective, StoppingConfig, Tree};

fn default_eps(n: usize) -> f64 {
    1.0 / (2.0 * n as f64)
}

fn clamp_column(col: &mut [f64], eps: f64) {
    for x in col {
        *x = x.clamp(eps, 1.0 - eps);
    }
}

/// Average rank / (n + 1) within each group of rows.
fn grouped_ranks(y: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for rows in groups {
        let vals: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let denom = rows.len() as f64 + 1.0;
        for (&i, r) in rows.iter().zip(average_ranks(&vals)) {
            out[i] = r / denom;
        }
    }
    out
}

/// Global empirical distribution: average rank / (n + 1) per column.
pub fn pseudo_empirical(data: &Dataset) -> Result<PseudoObservations> {
    let all = vec![(0..data.n()).collect::<Vec<_>>()];
    let cols = data.responses().iter().map(|y| grouped_ranks(y, &all)).collect();
    PseudoObservations::new(cols, PseudoMethod::Empirical)
}

/// Covariate-weighted empirical distribution with a product Gaussian kernel
/// of bandwidth `h`. `clamp_eps` defaults to 1/(2n).
pub fn pseudo_kernel(data: &Dataset, h: f64, clamp_eps: Option<f64>) -> Result<PseudoObservations> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("kernel bandwidth must be positive, got {h}")));
    }
    let xs: Vec<&[f64]> = data
        .covariates()
        .iter()
        .map(|c| match &c.values {
            CovariateValues::Numeric(v) => Ok(v.as_slice()),
            CovariateValues::Categorical { .. } => {
                Err(Error::Config(format!("kernel estimator needs numeric covariates; `{}` is categorical", c.name)))
            }
        })
        .collect::<Result<_>>()?;
    let n = data.n();
    let eps = clamp_eps.unwrap_or_else(|| default_eps(n));
    let inv_h2 = 1.0 / (h * h);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut num = vec![0.0; data.k()];
            let mut den = 0.0;
            for l in 0..n {
                let d2: f64 = xs.iter().map(|x| (x[l] - x[i]).powi(2)).sum();
                // normalizing constants cancel in the ratio
                let w = (-0.5 * d2 * inv_h2).exp();
                den += w;
                for (j, y) in data.responses().iter().enumerate() {
                    if y[l] <= y[i] {
                        num[j] += w;
                    }
                }
            }
            num.into_iter().map(|s| (s / den).clamp(eps, 1.0 - eps)).collect()
        })
        .collect();
    let cols = (0..data.k()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    PseudoObservations::new(cols, PseudoMethod::Kernel { h })
}

/// Normal-linear margins with unit variance: OLS of each response on an
/// intercept and the `design` covariates, then Φ of the residual.
pub fn pseudo_parametric_normal(data: &Dataset, design: &[usize]) -> Result<PseudoObservations> {
    let n = data.n();
    let p = design.len() + 1;
    if n <= p {
        return Err(Error::Regression(format!("need more than {p} rows for {p} regression coefficients, got {n}")));
    }
    let mut x = DMatrix::<f64>::from_element(n, p, 1.0);
    for (c, &j) in design.iter().enumerate() {
        let cov = data.covariates().get(j).ok_or_else(|| Error::Config(format!("design covariate {j} does not exist")))?;
        let CovariateValues::Numeric(v) = &cov.values else {
            return Err(Error::Config(format!("design covariate `{}` is not numeric", cov.name)));
        };
        for i in 0..n {
            x[(i, c + 1)] = v[i];
        }
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-10 {
        return Err(Error::Regression("design matrix is rank deficient".into()));
    }
    let eps = default_eps(n);
    let mut cols = Vec::with_capacity(data.k());
    for y in data.responses() {
        let yv = DVector::from_column_slice(y);
        let beta = svd.solve(&yv, smax * 1e-12).map_err(|e| Error::Regression(e.to_string()))?;
        let fitted = &x * beta;
        let mut col: Vec<f64> = y.iter().zip(fitted.iter()).map(|(yi, mi)| normal_cdf(yi - mi)).collect();
        clamp_column(&mut col, eps);
        cols.push(col);
    }
    PseudoObservations::new(cols, PseudoMethod::ParametricNormal)
}

/// Label of a row's full modality: its categorical levels joined by `|`.
pub fn modality_label(data: &Dataset, row: usize) -> Result<String> {
    let parts: Vec<String> = data
        .covariates()
        .iter()
        .map(|c| match c.value(row) {
            CovariateValue::Categorical(s) => Ok(s),
            CovariateValue::Numeric(_) => {
                Err(Error::Config(format!("discrete estimator needs categorical covariates; `{}` is numeric", c.name)))
            }
        })
        .collect::<Result<_>>()?;
    Ok(parts.join("|"))
}

/// Within-class empirical distributions. `grouping` maps each full modality
/// label (see [`modality_label`]) to a class name.
pub fn pseudo_discrete(data: &Dataset, grouping: &BTreeMap<String, String>) -> Result<PseudoObservations> {
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..data.n() {
        let label = modality_label(data, i)?;
        let class = grouping
            .get(&label)
            .ok_or_else(|| Error::Config(format!("modality `{label}` is not assigned to any class")))?;
        classes.entry(class.as_str()).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = classes.into_values().collect();
    let cols = data.responses().iter().map(|y| grouped_ranks(y, &groups)).collect();
    PseudoObservations::new(cols, PseudoMethod::DiscreteModality)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub mean: f64,
    pub sse: f64,
    pub n: usize,
}

struct LeastSquares<'a> {
    y: &'a [f64],
}

impl Objective for LeastSquares<'_> {
    type Fit = LeafStats;

    fn fit(&self, rows: &[usize]) -> Result<LeafStats> {
        if rows.is_empty() {
            return Err(Error::InsufficientData { required: 1, got: 0 });
        }
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        let sse = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        Ok(LeafStats { mean, sse, n: rows.len() })
    }

    fn value(&self, fit: &LeafStats) -> f64 {
        -fit.sse
    }

    fn order_key(&self, fit: &LeafStats) -> f64 {
        fit.mean
    }

    fn level_proxy(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64
    }

    fn min_level_rows(&self) -> usize {
        1
    }

    fn best_cut(&self, sorted: &[usize], cuts: &[usize]) -> Option<(usize, f64)> {
        let n = sorted.len() as f64;
        let center = sorted.iter().map(|&i| self.y[i]).sum::<f64>() / n;
        let (mut s1, mut s2) = (0.0, 0.0);
        for &i in sorted {
            let d = self.y[i] - center;
            s1 += d;
            s2 += d * d;
        }
        let (mut l1, mut l2, mut pos) = (0.0, 0.0, 0);
        let mut best: Option<(usize, f64)> = None;
        for (ci, &c) in cuts.iter().enumerate() {
            while pos < c {
                let d = self.y[sorted[pos]] - center;
                l1 += d;
                l2 += d * d;
                pos += 1;
            }
            let (nl, nr) = (c as f64, n - c as f64);
            let sse = (l2 - l1 * l1 / nl) + ((s2 - l2) - (s1 - l1) * (s1 - l1) / nr);
            let score = -sse;
            if best.is_none_or(|b| score > b.1) {
                best = Some((ci, score));
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginTreeConfig {
    pub stopping: StoppingConfig,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub rule: SelectionRule,
}

impl Default for MarginTreeConfig {
    fn default() -> Self {
        Self {
            stopping: StoppingConfig { min_leaf: 20, min_gain: 0.0, max_leaves: 32 },
            folds: 3,
            repeats: 5,
            seed: 0,
            rule: SelectionRule::OneSe,
        }
    }
}

/// Pruned least-squares tree for one response column, with the sorted
/// training responses of every leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginTree {
    tree: Tree<LeafStats>,
    schema: Vec<CovariateInfo>,
    leaf_values: BTreeMap<usize, Vec<f64>>,
}

impl MarginTree {
    pub fn tree(&self) -> &Tree<LeafStats> {
        &self.tree
    }

    pub fn leaf_count(&self) -> usize {
        self.tree.leaf_count()
    }

    pub fn leaf_of(&self, x: &[CovariateValue]) -> Result<usize> {
        self.tree.leaf_of_values(x, &self.schema)
    }

    /// Within-leaf empirical CDF at `y`, as #{values ≤ y} / (n_leaf + 1).
    pub fn cdf(&self, x: &[CovariateValue], y: f64) -> Result<f64> {
        let vals = &self.leaf_values[&self.leaf_of(x)?];
        let below = vals.partition_point(|&v| v <= y);
        Ok(below as f64 / (vals.len() as f64 + 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct MarginTreeFit {
    pub pseudo: PseudoObservations,
    /// One tree per response column; empty when the fit fell back.
    pub trees: Vec<MarginTree>,
    /// Set when there were too few rows and the global ECDF was used instead.
    pub fallback: bool,
}

fn margin_fold_curve(
    obj: &LeastSquares,
    data: &Dataset,
    held: &[usize],
    stopping: &StoppingConfig,
) -> Result<Vec<(usize, f64)>> {
    let mut in_fold = vec![false; data.n()];
    for &i in held {
        in_fold[i] = true;
    }
    let train: Vec<usize> = (0..data.n()).filter(|&i| !in_fold[i]).collect();
    let tree = grow(obj, data, train, stopping)?;
    Ok(weakest_link(&tree, |f: &LeafStats| -f.sse)
        .into_iter()
        .map(|(t, _)| {
            let sse: f64 = held
                .iter()
                .map(|&i| (obj.y[i] - t.node(t.leaf_of_row(data, i)).expect("leaf").fit.mean).powi(2))
                .sum();
            (t.leaf_count(), -sse)
        })
        .collect())
}

/// Least-squares regression trees per response, pruned by repeated k-fold
/// cross-validated squared error; pseudo-observations are within-leaf ranks.
pub fn pseudo_margin_tree(data: &Dataset, cfg: &MarginTreeConfig) -> Result<MarginTreeFit> {
    let min_leaf = cfg.stopping.min_leaf.max(1);
    if data.n() < cfg.folds.max(2) * 2 * min_leaf {
        log::warn!("{} rows are too few for margin trees; using the global empirical distribution", data.n());
        return Ok(MarginTreeFit { pseudo: pseudo_empirical(data)?, trees: Vec::new(), fallback: true });
    }
    let cv = CvConfig { folds: cfg.folds, repeats: cfg.repeats, seed: cfg.seed, rule: cfg.rule };
    let folds = fold_assignments(data.n(), &cv);
    let mut cols = Vec::with_capacity(data.k());
    let mut trees = Vec::with_capacity(data.k());
    for y in data.responses() {
        let obj = LeastSquares { y };
        let full = grow(&obj, data, (0..data.n()).collect(), &cfg.stopping)?;
        let curves: Vec<Vec<(usize, f64)>> =
            folds.par_iter().map(|held| margin_fold_curve(&obj, data, held, &cfg.stopping)).collect::<Result<_>>()?;
        let k = choose(&aggregate(&curves), cfg.rule);
        let path = weakest_link(&full, |f: &LeafStats| -f.sse);
        let tree = path.into_iter().map(|(t, _)| t).find(|t| t.leaf_count() <= k).expect("path ends at the root");

        let mut by_leaf: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..data.n() {
            by_leaf.entry(tree.leaf_of_row(data, i)).or_default().push(i);
        }
        let leaf_values = by_leaf
            .iter()
            .map(|(&leaf, rows)| {
                let mut v: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                v.sort_by(f64::total_cmp);
                (leaf, v)
            })
            .collect();
        cols.push(grouped_ranks(y, &by_leaf.into_values().collect::<Vec<_>>()));
        trees.push(MarginTree { tree, schema: data.schema(), leaf_values });
    }
    Ok(MarginTreeFit { pseudo: PseudoObservations::new(cols, PseudoMethod::MarginTree)?, trees, fallback: false })
}
