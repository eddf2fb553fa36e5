//! Conditional copula trees: the covariate space is partitioned by binary
//! splits and each leaf carries its own copula parameter.
//!
//! Growth is greedy and breadth-first. A split is accepted when the summed
//! leaf log-likelihood of the two children exceeds the parent's by more than
//! `min_gain`. Categorical covariates are scanned through the contiguous cuts
//! of their levels ordered by the per-level estimate of θ.

mod engine;
mod likelihood;
mod structure;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use engine::StoppingConfig;
pub use structure::{Node, Split, SplitRule, Tree};

pub(crate) use engine::{find_split, grow, level_groups, Objective};
pub(crate) use likelihood::Likelihood;

use crate::copula::{CopulaSpec, Family, FitOptions, FitResult};
use crate::dataset::{CovariateInfo, CovariateKind, CovariateValue, CovariateValues, Dataset, PseudoObservations};
use crate::error::{Error, Result};
use crate::stats::quantile;

pub const FORMAT_VERSION: u32 = 1;

/// Split returned by [`find_optimal_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub rule: SplitRule,
    pub gain: f64,
    pub left: FitResult,
    pub right: FitResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub theta: f64,
    pub tau: f64,
    pub leaf: usize,
}

/// A fitted tree together with its family and covariate schema.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaTree {
    spec: CopulaSpec,
    tree: Tree<FitResult>,
    schema: Vec<CovariateInfo>,
    stopping: StoppingConfig,
}

fn check_inputs(pseudo: &PseudoObservations, data: &Dataset) -> Result<()> {
    if pseudo.k() != 2 {
        return Err(Error::Input(format!("copula trees need 2 pseudo-observation columns, got {}", pseudo.k())));
    }
    if pseudo.n() != data.n() {
        return Err(Error::Input(format!("{} pseudo-observations for {} data rows", pseudo.n(), data.n())));
    }
    Ok(())
}

/// Maximum-likelihood fit on all rows of `pseudo`.
pub fn node_fit(spec: &CopulaSpec, pseudo: &PseudoObservations) -> Result<FitResult> {
    crate::copula::fit_mle(spec, &pseudo.pairs())
}

/// Observed levels of a categorical feature in scan order: ascending per-level
/// θ̂, ties by level code. Levels with fewer than `min_fit_n` rows follow the
/// level they were merged into.
pub fn order_modalities(
    spec: &CopulaSpec,
    pseudo: &PseudoObservations,
    data: &Dataset,
    feature: usize,
) -> Result<Vec<u32>> {
    check_inputs(pseudo, data)?;
    let CovariateValues::Categorical { codes, .. } = &data.covariate(feature).values else {
        return Err(Error::Input(format!("covariate {feature} is not categorical")));
    };
    let obj = Likelihood::new(*spec, pseudo, FitOptions::default());
    let rows: Vec<usize> = (0..data.n()).collect();
    Ok(level_groups(&obj, codes, &rows).into_iter().flatten().collect())
}

/// Best admissible split over all rows, or `None` if no candidate gains more than `min_gain`.
pub fn find_optimal_split(
    spec: &CopulaSpec,
    pseudo: &PseudoObservations,
    data: &Dataset,
    stopping: &StoppingConfig,
) -> Result<Option<SplitCandidate>> {
    check_inputs(pseudo, data)?;
    let obj = Likelihood::new(*spec, pseudo, FitOptions::default());
    let rows: Vec<usize> = (0..data.n()).collect();
    let parent = obj.fit(&rows)?;
    Ok(find_split(&obj, data, &rows, &parent, stopping.min_leaf, stopping.min_gain)
        .map(|c| SplitCandidate { rule: c.rule, gain: c.gain, left: c.left, right: c.right }))
}

pub fn build_maximal_tree(
    spec: &CopulaSpec,
    pseudo: &PseudoObservations,
    data: &Dataset,
    stopping: &StoppingConfig,
) -> Result<CopulaTree> {
    check_inputs(pseudo, data)?;
    let opts = FitOptions::default();
    stopping.validate(opts.min_fit_n)?;
    let obj = Likelihood::new(*spec, pseudo, opts);
    build_on_rows(&obj, data, (0..data.n()).collect(), stopping)
}

pub(crate) fn build_on_rows(
    obj: &Likelihood,
    data: &Dataset,
    rows: Vec<usize>,
    stopping: &StoppingConfig,
) -> Result<CopulaTree> {
    let tree = grow(obj, data, rows, stopping)?;
    Ok(CopulaTree { spec: *obj.spec(), tree, schema: data.schema(), stopping: *stopping })
}

/// Σᵢ log c_{θ̂(xᵢ)}(Ûᵢ) over all rows. Rows are routed by level name when the
/// dataset's level tables differ from the tree's.
pub fn tree_loglik(tree: &CopulaTree, pseudo: &PseudoObservations, data: &Dataset) -> Result<f64> {
    check_inputs(pseudo, data)?;
    let same_schema = data.schema() == tree.schema;
    let mut total = 0.0;
    for i in 0..data.n() {
        let leaf = if same_schema {
            tree.tree.leaf_of_row(data, i)
        } else {
            tree.tree.leaf_of_values(&data.covariate_row(i), &tree.schema)?
        };
        let theta = tree.tree.node(leaf).expect("leaf exists").fit.theta_hat;
        total += tree.spec.log_density(theta, pseudo.pair(i))?;
    }
    Ok(total)
}

/// Settings for the permutation-null threshold on split gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    pub permutations: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for NullCalibration {
    fn default() -> Self {
        Self { permutations: 40, alpha: 0.05, seed: 0 }
    }
}

/// Root-split gains with the pseudo-observations shuffled against the
/// covariates, one per permutation.
pub fn null_gains(
    spec: &CopulaSpec,
    pseudo: &PseudoObservations,
    data: &Dataset,
    min_leaf: usize,
    cal: &NullCalibration,
) -> Result<Vec<f64>> {
    check_inputs(pseudo, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cal.seed);
    let rows: Vec<usize> = (0..data.n()).collect();
    let mut gains = Vec::with_capacity(cal.permutations);
    for _ in 0..cal.permutations {
        let mut perm = rows.clone();
        perm.shuffle(&mut rng);
        let obj = Likelihood::new(*spec, &pseudo.permuted(&perm), FitOptions::default());
        let parent = obj.fit(&rows)?;
        let gain = find_split(&obj, data, &rows, &parent, min_leaf, f64::NEG_INFINITY).map_or(0.0, |c| c.gain);
        gains.push(gain.max(0.0));
    }
    Ok(gains)
}

/// The (1 − α) quantile of [`null_gains`], for use as `min_gain`.
pub fn calibrate_min_gain(
    spec: &CopulaSpec,
    pseudo: &PseudoObservations,
    data: &Dataset,
    min_leaf: usize,
    cal: &NullCalibration,
) -> Result<f64> {
    if cal.permutations == 0 || !(cal.alpha > 0.0 && cal.alpha < 1.0) {
        return Err(Error::Config("null calibration needs permutations > 0 and alpha in (0, 1)".into()));
    }
    let gains = null_gains(spec, pseudo, data, min_leaf, cal)?;
    Ok(quantile(&gains, 1.0 - cal.alpha))
}

impl CopulaTree {
    pub fn from_parts(spec: CopulaSpec, tree: Tree<FitResult>, schema: Vec<CovariateInfo>, stopping: StoppingConfig) -> Self {
        Self { spec, tree, schema, stopping }
    }

    pub fn spec(&self) -> &CopulaSpec {
        &self.spec
    }

    pub fn tree(&self) -> &Tree<FitResult> {
        &self.tree
    }

    pub fn schema(&self) -> &[CovariateInfo] {
        &self.schema
    }

    pub fn stopping(&self) -> &StoppingConfig {
        &self.stopping
    }

    pub fn root_fit(&self) -> &FitResult {
        &self.tree.root().fit
    }

    pub fn leaf_count(&self) -> usize {
        self.tree.leaf_count()
    }

    /// Sum of the stored leaf log-likelihoods.
    pub fn train_loglik(&self) -> f64 {
        self.tree.leaf_sum(|f| f.loglik)
    }

    /// Same family and schema with a different (pruned) node set.
    pub fn with_tree(&self, tree: Tree<FitResult>) -> Self {
        Self { spec: self.spec, tree, schema: self.schema.clone(), stopping: self.stopping }
    }

    pub fn predict(&self, x: &[CovariateValue]) -> Result<Prediction> {
        let leaf = self.tree.leaf_of_values(x, &self.schema)?;
        let fit = &self.tree.node(leaf).expect("leaf exists").fit;
        Ok(Prediction { theta: fit.theta_hat, tau: fit.tau_hat, leaf })
    }

    /// Leaf of a row of a dataset sharing this tree's schema.
    pub fn leaf_of_row(&self, data: &Dataset, row: usize) -> usize {
        self.tree.leaf_of_row(data, row)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TreeDoc::from_tree(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<TreeDoc>(text)?.into_tree()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RuleDoc {
    Numeric { feature: usize, threshold: f64 },
    Categorical { feature: usize, left_levels: Vec<String> },
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    depth: usize,
    n: usize,
    theta: f64,
    tau: f64,
    loglik: f64,
    converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rule: Option<RuleDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeDoc {
    format_version: u32,
    family: Family,
    stopping: StoppingConfig,
    covariates: Vec<CovariateInfo>,
    nodes: Vec<NodeDoc>,
}

impl TreeDoc {
    fn from_tree(t: &CopulaTree) -> Self {
        let nodes = t
            .tree
            .nodes()
            .iter()
            .map(|n| {
                let rule = n.split.as_ref().map(|s| match &s.rule {
                    SplitRule::Numeric { feature, threshold } => RuleDoc::Numeric { feature: *feature, threshold: *threshold },
                    SplitRule::Categorical { feature, left_levels } => {
                        let names = t.schema[*feature].levels.as_ref().expect("categorical schema has levels");
                        RuleDoc::Categorical {
                            feature: *feature,
                            left_levels: left_levels.iter().map(|&c| names[c as usize].clone()).collect(),
                        }
                    }
                });
                NodeDoc {
                    id: n.id,
                    depth: n.depth,
                    n: n.n_obs,
                    theta: n.fit.theta_hat,
                    tau: n.fit.tau_hat,
                    loglik: n.fit.loglik,
                    converged: n.fit.converged,
                    rule,
                    left: n.split.as_ref().map(|s| s.left),
                    right: n.split.as_ref().map(|s| s.right),
                }
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            family: t.spec.family(),
            stopping: t.stopping,
            covariates: t.schema.clone(),
            nodes,
        }
    }

    fn into_tree(self) -> Result<CopulaTree> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported tree format_version {}", self.format_version)));
        }
        let schema = self.covariates;
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for d in self.nodes {
            let split = match (d.rule, d.left, d.right) {
                (None, None, None) => None,
                (Some(rule), Some(left), Some(right)) => {
                    let rule = match rule {
                        RuleDoc::Numeric { feature, threshold } => {
                            expect_kind(&schema, feature, CovariateKind::Numeric)?;
                            SplitRule::Numeric { feature, threshold }
                        }
                        RuleDoc::Categorical { feature, left_levels } => {
                            expect_kind(&schema, feature, CovariateKind::Categorical)?;
                            let table = schema[feature].levels.as_deref().unwrap_or_default();
                            let mut codes = left_levels
                                .iter()
                                .map(|name| {
                                    table.iter().position(|l| l == name).map(|c| c as u32).ok_or_else(|| {
                                        Error::Schema(format!("level `{name}` missing from covariate {feature}"))
                                    })
                                })
                                .collect::<Result<Vec<u32>>>()?;
                            codes.sort_unstable();
                            SplitRule::Categorical { feature, left_levels: codes }
                        }
                    };
                    Some(Split { rule, left, right })
                }
                _ => return Err(Error::Schema(format!("node {} has a partial split", d.id))),
            };
            nodes.push(Node {
                id: d.id,
                depth: d.depth,
                n_obs: d.n,
                fit: FitResult { theta_hat: d.theta, tau_hat: d.tau, loglik: d.loglik, n_obs: d.n, converged: d.converged },
                split,
            });
        }
        let tree = Tree::from_nodes(nodes).map_err(|e| Error::Schema(e.to_string()))?;
        Ok(CopulaTree { spec: CopulaSpec::new(self.family), tree, schema, stopping: self.stopping })
    }
}

fn expect_kind(schema: &[CovariateInfo], feature: usize, kind: CovariateKind) -> Result<()> {
    match schema.get(feature) {
        Some(c) if c.kind == kind => Ok(()),
        _ => Err(Error::Schema(format!("split feature {feature} does not match a {kind:?} covariate"))),
    }
}
