//! Depth-limited classification trees with 0/1 leaves.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::candidates::{Bitset, CandidateSet};
use super::{Rule, RuleDescription};
use crate::data::Points;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { value: u8 },
    /// Points with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    pub fn eval(&self, x: &[f64]) -> u8 {
        match self {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split { feature, left, right, .. } => {
                Some([Some(*feature), left.max_feature(), right.max_feature()].into_iter().flatten().max().unwrap())
            }
        }
    }
}

/// Split candidates per coordinate plus the points, column-major.
#[derive(Debug, Clone)]
pub(crate) struct TreeSearch {
    depth: usize,
    columns: Vec<Vec<f64>>,
    splits: Vec<Vec<f64>>,
}

impl TreeSearch {
    pub(crate) fn new(xs: &Points, depth: usize, quantiles: usize) -> Self {
        let columns: Vec<Vec<f64>> = (0..xs.dim()).map(|j| xs.column(j)).collect();
        let splits = columns.iter().map(|c| split_candidates(c, quantiles)).collect();
        Self { depth, columns, splits }
    }

    fn goes_left(&self, i: usize, j: usize, t: f64) -> bool {
        self.columns[j][i] <= t
    }

    /// Leaves first (0 before 1), then splits in `(feature, threshold)` order;
    /// only strict improvements replace the incumbent.
    fn best(&self, idx: &[usize], depth: usize, w: &[f64]) -> (f64, TreeNode) {
        let total: f64 = idx.iter().map(|&i| w[i]).sum();
        let mut best = if total > 0.0 { (total, TreeNode::Leaf { value: 1 }) } else { (0.0, TreeNode::Leaf { value: 0 }) };
        if depth == 0 || idx.len() < 2 {
            return best;
        }
        let mut left = Vec::with_capacity(idx.len());
        let mut right = Vec::with_capacity(idx.len());
        for (j, cands) in self.splits.iter().enumerate() {
            for &t in cands {
                left.clear();
                right.clear();
                for &i in idx {
                    if self.goes_left(i, j, t) {
                        left.push(i);
                    } else {
                        right.push(i);
                    }
                }
                if left.is_empty() || right.is_empty() {
                    continue;
                }
                if depth == 1 {
                    // children are leaves: positive parts suffice
                    let ls: f64 = left.iter().map(|&i| w[i]).sum();
                    let rs: f64 = right.iter().map(|&i| w[i]).sum();
                    let v = ls.max(0.0) + rs.max(0.0);
                    if v > best.0 {
                        let leaf = |s: f64| Box::new(TreeNode::Leaf { value: u8::from(s > 0.0) });
                        best = (v, TreeNode::Split { feature: j, threshold: t, left: leaf(ls), right: leaf(rs) });
                    }
                    continue;
                }
                let (lv, ln) = self.best(&left, depth - 1, w);
                let (rv, rn) = self.best(&right, depth - 1, w);
                if lv + rv > best.0 {
                    best = (lv + rv, TreeNode::Split { feature: j, threshold: t, left: Box::new(ln), right: Box::new(rn) });
                }
            }
        }
        best
    }

    fn all(&self) -> Vec<usize> {
        (0..self.columns.first().map_or(0, Vec::len)).collect()
    }

    pub(crate) fn maximize(&self, w: &[f64]) -> RuleDescription {
        let (sum, root) = self.best(&self.all(), self.depth, w);
        RuleDescription { rule: Rule::Tree { root }, value: sum / w.len() as f64 }
    }

    pub(crate) fn max_value(&self, w: &[f64]) -> f64 {
        self.maximize(w).value
    }

    fn labelings(&self, idx: &[usize], depth: usize, n: usize) -> Result<HashSet<Bitset>> {
        let mut out = HashSet::new();
        out.insert(Bitset::new(n));
        let mut full = Bitset::new(n);
        idx.iter().for_each(|&i| full.set(i));
        out.insert(full);
        if depth == 0 || idx.len() < 2 {
            return Ok(out);
        }
        for (j, cands) in self.splits.iter().enumerate() {
            for &t in cands {
                let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.goes_left(i, j, t));
                if left.is_empty() || right.is_empty() {
                    continue;
                }
                let ls = self.labelings(&left, depth - 1, n)?;
                let rs = self.labelings(&right, depth - 1, n)?;
                for a in &ls {
                    for b in &rs {
                        out.insert(a.union(b));
                        if out.len() > super::MAX_CANDIDATES {
                            return Err(crate::error::Error::InvalidArgument(format!(
                                "tree class induces more than {} labelings",
                                super::MAX_CANDIDATES
                            )));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn candidates(&self) -> Result<CandidateSet> {
        let all = self.all();
        let n = all.len();
        let mut members: Vec<Bitset> = self.labelings(&all, self.depth, n)?.into_iter().collect();
        // deterministic order independent of hashing
        members.sort_by(|a, b| a.ones().cmp(b.ones()).then(a.count().cmp(&b.count())));
        let mut set = CandidateSet::new();
        for m in members {
            set.push(m)?;
        }
        Ok(set)
    }
}

/// Empirical quantiles at levels `k / (q + 1)`, or every distinct value but
/// the largest when there are no more than `q` of them.
fn split_candidates(col: &[f64], q: usize) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= q + 1 {
        distinct.pop();
        return distinct;
    }
    let n = sorted.len();
    let mut out: Vec<f64> = (1..=q)
        .map(|k| {
            let pos = ((k as f64 / (q + 1) as f64) * n as f64).ceil() as usize;
            sorted[pos.clamp(1, n) - 1]
        })
        .collect();
    out.dedup();
    let max = sorted[n - 1];
    out.retain(|&t| t < max);
    out
}

#[cfg(test)]
pub(crate) fn random_tree(xs: &Points, depth: usize, rng: &mut impl rand::Rng) -> TreeNode {
    if depth == 0 || rng.random_bool(0.2) {
        return TreeNode::Leaf { value: u8::from(rng.random_bool(0.5)) };
    }
    let feature = rng.random_range(0..xs.dim());
    let threshold = xs.row(rng.random_range(0..xs.len()))[feature];
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(random_tree(xs, depth - 1, rng)),
        right: Box::new(random_tree(xs, depth - 1, rng)),
    }
}
