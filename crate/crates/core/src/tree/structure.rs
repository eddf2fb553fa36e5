//! Binary tree storage shared by the copula tree and the margin trees.
//!
//! Nodes live in a vector sorted by id. Ids are assigned breadth-first at
//! growth time and never change, so a pruned copy keeps the ids of the nodes
//! it retains and nesting can be checked by id-set inclusion.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{CovariateInfo, CovariateValue, CovariateValues, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitRule {
    /// Left branch holds `x ≤ threshold`.
    Numeric { feature: usize, threshold: f64 },
    /// Left branch holds the listed level codes; every other level goes right.
    Categorical { feature: usize, left_levels: Vec<u32> },
}

impl SplitRule {
    pub fn feature(&self) -> usize {
        match self {
            SplitRule::Numeric { feature, .. } | SplitRule::Categorical { feature, .. } => *feature,
        }
    }

    pub fn goes_left_row(&self, data: &Dataset, row: usize) -> bool {
        match (self, &data.covariate(self.feature()).values) {
            (SplitRule::Numeric { threshold, .. }, CovariateValues::Numeric(x)) => x[row] <= *threshold,
            (SplitRule::Categorical { left_levels, .. }, CovariateValues::Categorical { codes, .. }) => {
                left_levels.binary_search(&codes[row]).is_ok()
            }
            _ => panic!("split rule does not match covariate kind"),
        }
    }

    /// Routes an external covariate value. Levels absent from the schema go right.
    pub fn goes_left_value(&self, value: &CovariateValue, schema: &[CovariateInfo]) -> Result<bool> {
        match (self, value) {
            (SplitRule::Numeric { threshold, .. }, CovariateValue::Numeric(x)) => Ok(*x <= *threshold),
            (SplitRule::Categorical { feature, left_levels }, CovariateValue::Categorical(name)) => {
                let levels = schema
                    .get(*feature)
                    .and_then(|c| c.levels.as_ref())
                    .ok_or_else(|| Error::Input(format!("covariate {feature} has no level table")))?;
                Ok(levels
                    .iter()
                    .position(|l| l == name)
                    .is_some_and(|code| left_levels.binary_search(&(code as u32)).is_ok()))
            }
            _ => Err(Error::Input(format!("covariate {} has the wrong kind", self.feature()))),
        }
    }

    /// Human-readable form, e.g. `x1 <= 0.4` or `itz in {EUR, NAF}`.
    pub fn describe(&self, schema: &[CovariateInfo], left: bool) -> String {
        let name = schema.get(self.feature()).map(|c| c.name.as_str()).unwrap_or("?");
        match self {
            SplitRule::Numeric { threshold, .. } => {
                format!("{name} {} {threshold}", if left { "<=" } else { ">" })
            }
            SplitRule::Categorical { feature, left_levels } => {
                let levels = schema.get(*feature).and_then(|c| c.levels.as_ref());
                let names: Vec<String> = left_levels
                    .iter()
                    .map(|&c| levels.and_then(|l| l.get(c as usize)).cloned().unwrap_or_else(|| c.to_string()))
                    .collect();
                format!("{name} {} {{{}}}", if left { "in" } else { "not in" }, names.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub rule: SplitRule,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<F> {
    pub id: usize,
    pub depth: usize,
    pub n_obs: usize,
    pub fit: F,
    pub split: Option<Split>,
}

impl<F> Node<F> {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Clone> Tree<F> {
    /// Nodes must be sorted by id with the root first; children must exist.
    pub fn from_nodes(mut nodes: Vec<Node<F>>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        if nodes.first().map(|n| n.id) != Some(0) {
            return Err(Error::Input("tree has no root node with id 0".into()));
        }
        if nodes.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::Input("duplicate node id".into()));
        }
        let tree = Self { nodes };
        let mut seen = BTreeSet::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return Err(Error::Input(format!("node {id} reachable twice")));
            }
            let node = tree.node(id).ok_or_else(|| Error::Input(format!("missing node {id}")))?;
            if let Some(s) = &node.split {
                stack.push(s.left);
                stack.push(s.right);
            }
        }
        if seen.len() != tree.nodes.len() {
            return Err(Error::Input("tree contains unreachable nodes".into()));
        }
        Ok(tree)
    }

    pub fn single_leaf(fit: F, n_obs: usize) -> Self {
        Self { nodes: vec![Node { id: 0, depth: 0, n_obs, fit, split: None }] }
    }

    pub fn root(&self) -> &Node<F> {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[Node<F>] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Option<&Node<F>> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok().map(|i| &self.nodes[i])
    }

    pub(crate) fn node_mut(&mut self, id: usize) -> Option<&mut Node<F>> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok().map(move |i| &mut self.nodes[i])
    }

    pub(crate) fn push(&mut self, node: Node<F>) {
        debug_assert!(self.nodes.last().is_none_or(|n| n.id < node.id));
        self.nodes.push(node);
    }

    pub fn ids(&self) -> BTreeSet<usize> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node<F>> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn internal_ids(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.id).collect()
    }

    /// Leaf ids of the subtree rooted at `id`, ascending.
    pub fn subtree_leaves(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(i) = stack.pop() {
            match self.node(i).and_then(|n| n.split.as_ref()) {
                Some(s) => {
                    stack.push(s.left);
                    stack.push(s.right);
                }
                None => out.push(i),
            }
        }
        out.sort_unstable();
        out
    }

    /// Descends from the root using `goes_left` at each internal node.
    pub fn route_by<P: FnMut(&SplitRule) -> bool>(&self, mut goes_left: P) -> usize {
        let mut node = self.root();
        while let Some(s) = &node.split {
            let next = if goes_left(&s.rule) { s.left } else { s.right };
            node = self.node(next).expect("child exists");
        }
        node.id
    }

    pub fn leaf_of_row(&self, data: &Dataset, row: usize) -> usize {
        self.route_by(|r| r.goes_left_row(data, row))
    }

    pub fn leaf_of_values(&self, x: &[CovariateValue], schema: &[CovariateInfo]) -> Result<usize> {
        if x.len() != schema.len() {
            return Err(Error::Input(format!("expected {} covariates, got {}", schema.len(), x.len())));
        }
        let mut err = None;
        let leaf = self.route_by(|r| match r.goes_left_value(&x[r.feature()], schema) {
            Ok(b) => b,
            Err(e) => {
                err.get_or_insert(e);
                false
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(leaf),
        }
    }

    /// Copy with the subtree below `id` removed, making `id` a leaf.
    pub fn collapse(&self, id: usize) -> Self {
        let mut removed = BTreeSet::new();
        let mut stack = match self.node(id).and_then(|n| n.split.as_ref()) {
            Some(s) => vec![s.left, s.right],
            None => return self.clone(),
        };
        while let Some(i) = stack.pop() {
            removed.insert(i);
            if let Some(s) = self.node(i).and_then(|n| n.split.as_ref()) {
                stack.push(s.left);
                stack.push(s.right);
            }
        }
        let mut nodes: Vec<Node<F>> = self.nodes.iter().filter(|n| !removed.contains(&n.id)).cloned().collect();
        if let Ok(i) = nodes.binary_search_by_key(&id, |n| n.id) {
            nodes[i].split = None;
        }
        Self { nodes }
    }

    /// Sum of `value` over the leaves, in id order.
    pub fn leaf_sum<V: Fn(&F) -> f64>(&self, value: V) -> f64 {
        self.leaves().map(|n| value(&n.fit)).sum()
    }

    pub fn map_fits<G: Clone, M: FnMut(&F) -> G>(&self, mut f: M) -> Tree<G> {
        Tree {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node { id: n.id, depth: n.depth, n_obs: n.n_obs, fit: f(&n.fit), split: n.split.clone() })
                .collect(),
        }
    }
}
