//! End-to-end application: weekly counts to a pruned conditional copula tree
//! over season and grouping covariates.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{aggregate_counts, ilr_forward, AggregationConfig, UnitSeason, WeeklyRecord};
use crate::copula::{CopulaSpec, Family};
use crate::dataset::{Covariate, Dataset};
use crate::error::{Error, Result};
use crate::margins::{pseudo_margin_tree, MarginTreeConfig};
use crate::pruning::{cross_validate, CvConfig, CvReport, SelectionRule};
use crate::tree::{CopulaTree, StoppingConfig, FORMAT_VERSION};

pub const SEASON_COVARIATE: &str = "season";
pub const GROUP_COVARIATE: &str = "itz";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluConfig {
    pub aggregation: AggregationConfig,
    pub family: Family,
    pub stopping: StoppingConfig,
    pub folds: usize,
    pub repeats: usize,
    pub rule: SelectionRule,
    pub margins: MarginTreeConfig,
    /// Seeds both the margin-tree and the copula-tree cross-validation.
    pub seed: u64,
}

impl Default for FluConfig {
    fn default() -> Self {
        Self {
            aggregation: AggregationConfig::default(),
            family: Family::Frank,
            stopping: StoppingConfig { min_leaf: 15, min_gain: 0.0, max_leaves: 32 },
            folds: 3,
            repeats: 50,
            rule: SelectionRule::OneSe,
            margins: MarginTreeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafReport {
    pub leaf: usize,
    pub n: usize,
    pub tau: f64,
    pub theta: f64,
    /// Conditions from the root down to the leaf.
    pub rules: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FluReport {
    pub rows: Vec<UnitSeason>,
    pub margin_leaves: Vec<usize>,
    pub selected: CopulaTree,
    pub cv: CvReport,
    pub leaves: Vec<LeafReport>,
    pub conditional_loglik: f64,
    pub single_loglik: f64,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    format_version: u32,
    family: Family,
    n: usize,
    margin_leaves: &'a [usize],
    leaves: &'a [LeafReport],
    conditional_loglik: f64,
    single_loglik: f64,
}

impl FluReport {
    /// Whether any split of the selected tree uses the named covariate.
    pub fn splits_on(&self, name: &str) -> bool {
        let schema = self.selected.schema();
        self.selected
            .tree()
            .nodes()
            .iter()
            .filter_map(|n| n.split.as_ref())
            .any(|s| schema.get(s.rule.feature()).is_some_and(|c| c.name == name))
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SummaryDoc {
            format_version: FORMAT_VERSION,
            family: self.selected.spec().family(),
            n: self.rows.len(),
            margin_leaves: &self.margin_leaves,
            leaves: &self.leaves,
            conditional_loglik: self.conditional_loglik,
            single_loglik: self.single_loglik,
        })?)
    }

    /// `leaf, n, tau, theta, rules` with rules joined by ` & `.
    pub fn write_leaf_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# format_version: {FORMAT_VERSION}")?;
        writeln!(w, "leaf\tn\ttau\ttheta\trules")?;
        for l in &self.leaves {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", l.leaf, l.n, l.tau, l.theta, l.rules.join(" & "))?;
        }
        Ok(())
    }
}

fn leaf_reports(tree: &CopulaTree) -> Vec<LeafReport> {
    let t = tree.tree();
    let mut conditions: BTreeMap<usize, Vec<String>> = BTreeMap::from([(t.root().id, Vec::new())]);
    for node in t.nodes() {
        if let Some(split) = &node.split {
            let base = conditions[&node.id].clone();
            for (child, left) in [(split.left, true), (split.right, false)] {
                let mut c = base.clone();
                c.push(split.rule.describe(tree.schema(), left));
                conditions.insert(child, c);
            }
        }
    }
    t.leaves()
        .map(|n| LeafReport {
            leaf: n.id,
            n: n.n_obs,
            tau: n.fit.tau_hat,
            theta: n.fit.theta_hat,
            rules: conditions.remove(&n.id).unwrap_or_default(),
        })
        .collect()
}

/// Aggregates, transforms, fits margin trees and a cross-validated copula tree
/// on the log-ratio coordinates with season (and group, when present) as
/// categorical covariates.
pub fn run_flu(records: &[WeeklyRecord], cfg: &FluConfig) -> Result<FluReport> {
    let rows = aggregate_counts(records, &cfg.aggregation)?;
    if rows.is_empty() {
        return Err(Error::NoData(format!("no unit-season reaches {} classified cases", cfg.aggregation.min_total)));
    }
    let points: Vec<_> = rows.iter().map(|r| ilr_forward(&r.composition)).collect::<Result<_>>()?;
    let seasons: Vec<&str> = rows.iter().map(|r| r.season.as_str()).collect();
    let mut covariates = vec![Covariate::categorical(SEASON_COVARIATE, &seasons)];
    if rows.iter().all(|r| r.group.is_some()) {
        let groups: Vec<&str> = rows.iter().map(|r| r.group.as_deref().unwrap_or_default()).collect();
        covariates.push(Covariate::categorical(GROUP_COVARIATE, &groups));
    }
    let data = Dataset::with_names(
        vec![points.iter().map(|p| p.y1).collect(), points.iter().map(|p| p.y2).collect()],
        vec!["y1".into(), "y2".into()],
        covariates,
    )?;
    let margins = pseudo_margin_tree(&data, &MarginTreeConfig { seed: cfg.seed, ..cfg.margins })?;
    let spec = CopulaSpec::new(cfg.family);
    let cv = CvConfig { folds: cfg.folds, repeats: cfg.repeats, seed: cfg.seed, rule: cfg.rule };
    let fit = cross_validate(&spec, &margins.pseudo, &data, &cfg.stopping, &cv)?;
    let leaves = leaf_reports(&fit.selected);
    Ok(FluReport {
        margin_leaves: margins.trees.iter().map(|t| t.leaf_count()).collect(),
        conditional_loglik: fit.selected.train_loglik(),
        single_loglik: fit.maximal.root_fit().loglik,
        selected: fit.selected,
        cv: fit.report,
        leaves,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositional::{synthetic_fixture, FixtureConfig};

    #[test]
    fn empty_after_filter_is_no_data() {
        let rec = WeeklyRecord { unit: "a".into(), week: "2015-W40".parse().unwrap(), counts: [1, 2, 3], group: None };
        assert!(matches!(run_flu(&[rec], &FluConfig::default()), Err(Error::NoData(_))));
    }

    #[test]
    fn fixture_report_is_consistent() {
        let recs = synthetic_fixture(&FixtureConfig::default(), 1).unwrap();
        let cfg = FluConfig { repeats: 5, ..FluConfig::default() };
        let report = run_flu(&recs, &cfg).unwrap();
        assert_eq!(report.leaves.iter().map(|l| l.n).sum::<usize>(), report.rows.len());
        assert!(report.conditional_loglik >= report.single_loglik);
        let single = report.leaves.len() == 1;
        assert!(report.leaves.iter().all(|l| l.rules.is_empty() == single));
    }
}
