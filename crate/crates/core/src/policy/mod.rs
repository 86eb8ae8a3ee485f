//! Policy classes `F` of maps `x_s -> [0, 1]` and exact optimizers for the
//! weighted linear functional `f ↦ (1/n) Σ w_i f(x_{s,i})` over each class.
//!
//! | class | search | cost per call |
//! |---|---|---|
//! | constant threshold | scan of observed cutoffs, both orientations | `O(n)` after a one-off sort |
//! | linear threshold | hyperplanes through `|s|` data points | `O(n^{|s|+1})` |
//! | bounded variation | LP over bin coefficients | `O(p^2)` (envelope) |
//! | tree | splits at empirical quantiles | `O(q^{K-1} n)` |
//!
//! A class is first [`prepare`](PolicyClass::prepare)d against the points it
//! will be optimized over; the prepared form is reused across bootstrap draws.

mod bv;
mod candidates;
mod linear;
pub mod simplex;
mod threshold;
mod tree;

use serde::{Deserialize, Serialize};

pub use bv::{bv_envelope, bv_simplex, BvOptimum};
pub use candidates::{Bitset, CandidateSet, MAX_CANDIDATES};
pub use tree::TreeNode;

use crate::data::Points;
use crate::error::{Error, Result};

/// Default number of equal-width bins for the bounded-variation grid.
pub const DEFAULT_BV_BINS: usize = 100;
/// Default total-variation budget.
pub const DEFAULT_LAMBDA: f64 = 2.0;
/// Default tree depth.
pub const DEFAULT_TREE_DEPTH: usize = 2;
/// Default number of quantile split candidates per coordinate.
pub const DEFAULT_TREE_QUANTILES: usize = 20;

/// Bin layout of the bounded-variation class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BvGrid {
    /// `bins` equal-width bins spanning the observed range of `x_s`.
    EqualWidth { bins: usize },
    /// `bins` equal-width bins spanning `[lo, hi]`.
    Range { bins: usize, lo: f64, hi: f64 },
    /// Explicit interior cut points; bin `k` is `(cut_{k-1}, cut_k]`.
    Cuts { cuts: Vec<f64> },
}

impl Default for BvGrid {
    fn default() -> Self {
        BvGrid::EqualWidth { bins: DEFAULT_BV_BINS }
    }
}

/// Solver used for the bounded-variation LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BvSolver {
    /// Exact dual route: concave envelope of best 0/1 step functions by jump count.
    #[default]
    Envelope,
    /// Dense primal simplex on the split-variable standard form.
    Simplex,
}

/// The function class over which the sup/inf statistics are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyClass {
    /// `1(x_s >= t)` and `1(x_s <= t)`, scalar `x_s`.
    ConstantThreshold,
    /// `1(ρ0 + ρ1ᵀ x_s >= 0)`.
    LinearThreshold,
    /// Bin-wise constant `f` with `Σ |b_{k+1} - b_k| <= λ` and `0 <= b <= 1`.
    BoundedVariation {
        lambda: f64,
        #[serde(default)]
        grid: BvGrid,
        #[serde(default)]
        solver: BvSolver,
    },
    /// Depth-`depth` trees with 0/1 leaves and `x_j <= t` splits at
    /// empirical quantiles.
    Tree { depth: usize, quantiles: usize },
}

impl PolicyClass {
    pub fn bounded_variation(lambda: f64) -> Self {
        PolicyClass::BoundedVariation { lambda, grid: BvGrid::default(), solver: BvSolver::default() }
    }

    pub fn tree(depth: usize) -> Self {
        PolicyClass::Tree { depth, quantiles: DEFAULT_TREE_QUANTILES }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyClass::ConstantThreshold => "constant_threshold",
            PolicyClass::LinearThreshold => "linear_threshold",
            PolicyClass::BoundedVariation { .. } => "bounded_variation",
            PolicyClass::Tree { .. } => "tree",
        }
    }

    /// Checks the class invariants against a modifier dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            PolicyClass::ConstantThreshold if dim != 1 => Err(Error::InvalidArgument(format!(
                "constant threshold class needs a scalar modifier, got dimension {dim}"
            ))),
            PolicyClass::BoundedVariation { lambda, grid, .. } => {
                if dim != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "bounded variation class needs a scalar modifier, got dimension {dim}"
                    )));
                }
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
                }
                match grid {
                    BvGrid::EqualWidth { bins } | BvGrid::Range { bins, .. } if *bins < 2 => {
                        Err(Error::InvalidArgument("empty grid: need at least 2 bins".into()))
                    }
                    BvGrid::Range { lo, hi, .. } if !(lo < hi) => {
                        Err(Error::InvalidArgument(format!("grid range [{lo}, {hi}] is empty")))
                    }
                    BvGrid::Cuts { cuts } if cuts.is_empty() => {
                        Err(Error::InvalidArgument("empty grid".into()))
                    }
                    BvGrid::Cuts { cuts } if cuts.windows(2).any(|w| !(w[0] < w[1])) => {
                        Err(Error::InvalidArgument("grid cut points must be strictly increasing".into()))
                    }
                    _ => Ok(()),
                }
            }
            PolicyClass::Tree { quantiles, .. } if *quantiles == 0 => {
                Err(Error::InvalidArgument("tree needs at least one split candidate per coordinate".into()))
            }
            _ => Ok(()),
        }
    }

    /// Precomputes the data-dependent search structures for `xs`.
    pub fn prepare(&self, xs: &Points) -> Result<PreparedClass> {
        self.validate(xs.dim())?;
        if xs.is_empty() {
            return Err(Error::InvalidArgument("cannot prepare a class on zero points".into()));
        }
        let inner = match self {
            PolicyClass::ConstantThreshold => Prepared::Threshold(threshold::ThresholdScan::new(&xs.column(0))),
            PolicyClass::LinearThreshold => Prepared::Linear(linear::LinearSearch::new(xs)),
            PolicyClass::BoundedVariation { lambda, grid, solver } => {
                Prepared::Bv(bv::BvSearch::new(&xs.column(0), *lambda, grid, *solver)?)
            }
            PolicyClass::Tree { depth, quantiles } => Prepared::Tree(tree::TreeSearch::new(xs, *depth, *quantiles)),
        };
        Ok(PreparedClass { class: self.clone(), n: xs.len(), dim: xs.dim(), inner })
    }
}

/// Orientation of a scalar threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `1(x >= t)`
    Ge,
    /// `1(x <= t)`
    Le,
}

/// A concrete member of a policy class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    /// `cutoff = None` is the sentinel beyond the data range (the zero function).
    Threshold { direction: Direction, cutoff: Option<f64> },
    /// `1(intercept + coefficients · x >= 0)`.
    Hyperplane { intercept: f64, coefficients: Vec<f64> },
    /// `f(x) = coefficients[k]` on bin `k`, bins split at `cuts` (right-closed).
    BinCoefficients { cuts: Vec<f64>, coefficients: Vec<f64> },
    Tree { root: TreeNode },
}

impl Rule {
    /// Input dimension the rule expects, when it is fixed by the rule itself.
    fn dim(&self) -> Option<usize> {
        match self {
            Rule::Threshold { .. } | Rule::BinCoefficients { .. } => Some(1),
            Rule::Hyperplane { coefficients, .. } => Some(coefficients.len()),
            Rule::Tree { .. } => None,
        }
    }

    pub fn eval_point(&self, x: &[f64]) -> f64 {
        match self {
            Rule::Threshold { direction, cutoff } => match (direction, cutoff) {
                (_, None) => 0.0,
                (Direction::Ge, Some(t)) => f64::from(u8::from(x[0] >= *t)),
                (Direction::Le, Some(t)) => f64::from(u8::from(x[0] <= *t)),
            },
            Rule::Hyperplane { intercept, coefficients } => {
                let v: f64 = intercept + coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
                f64::from(u8::from(v >= 0.0))
            }
            Rule::BinCoefficients { cuts, coefficients } => coefficients[bv::bin_of(cuts, x[0])],
            Rule::Tree { root } => f64::from(root.eval(x)),
        }
    }
}

/// A rule together with the objective value it achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDescription {
    pub rule: Rule,
    /// `(1/n) Σ w_i f(x_i)` on the weights it was optimized for.
    pub value: f64,
}

/// Evaluates `rule` at every point of `xs`.
pub fn evaluate(rule: &Rule, xs: &Points) -> Result<Vec<f64>> {
    if let Some(d) = rule.dim() {
        if d != xs.dim() {
            return Err(Error::InvalidArgument(format!(
                "rule expects dimension {d}, points have dimension {}",
                xs.dim()
            )));
        }
    }
    if let Rule::Tree { root } = rule {
        if root.max_feature().is_some_and(|j| j >= xs.dim()) {
            return Err(Error::InvalidArgument("tree splits on a coordinate beyond the point dimension".into()));
        }
    }
    Ok(xs.rows().map(|r| rule.eval_point(r)).collect())
}

/// `(1/n) Σ w_i f_i`.
pub fn objective(weights: &[f64], f: &[f64]) -> f64 {
    weights.iter().zip(f).map(|(w, v)| w * v).sum::<f64>() / weights.len() as f64
}

#[derive(Debug, Clone)]
enum Prepared {
    Threshold(threshold::ThresholdScan),
    Linear(linear::LinearSearch),
    Bv(bv::BvSearch),
    Tree(tree::TreeSearch),
}

/// A class bound to a fixed set of points.
#[derive(Debug, Clone)]
pub struct PreparedClass {
    class: PolicyClass,
    n: usize,
    dim: usize,
    inner: Prepared,
}

impl PreparedClass {
    pub fn class(&self) -> &PolicyClass {
        &self.class
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} prepared points",
                weights.len(),
                self.n
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        Ok(())
    }

    /// Exact maximizer of `(1/n) Σ w_i f(x_i)` over the class.
    pub fn maximize(&self, weights: &[f64]) -> Result<RuleDescription> {
        self.check(weights)?;
        match &self.inner {
            Prepared::Threshold(s) => Ok(s.maximize(weights)),
            Prepared::Linear(s) => s.maximize(weights),
            Prepared::Bv(s) => s.maximize(weights),
            Prepared::Tree(s) => Ok(s.maximize(weights)),
        }
    }

    /// Maximum value only; avoids building the rule where possible.
    pub fn max_value(&self, weights: &[f64]) -> Result<f64> {
        self.check(weights)?;
        match &self.inner {
            Prepared::Threshold(s) => Ok(s.max_value(weights)),
            Prepared::Bv(s) => s.max_value(weights),
            Prepared::Tree(s) => Ok(s.max_value(weights)),
            Prepared::Linear(s) => Ok(s.maximize(weights)?.value),
        }
    }

    /// Minimizer, defined as the negated maximizer of `-w`.
    pub fn minimize(&self, weights: &[f64]) -> Result<RuleDescription> {
        let neg: Vec<f64> = weights.iter().map(|w| -w).collect();
        let mut best = self.maximize(&neg)?;
        best.value = -best.value;
        Ok(best)
    }

    pub fn min_value(&self, weights: &[f64]) -> Result<f64> {
        let neg: Vec<f64> = weights.iter().map(|w| -w).collect();
        Ok(-self.max_value(&neg)?)
    }

    /// Every distinct indicator labeling the class induces on the prepared
    /// points (for the bounded-variation class: its 0/1 vertices).
    pub fn candidates(&self) -> Result<CandidateSet> {
        let set = match &self.inner {
            Prepared::Threshold(s) => s.candidates(),
            Prepared::Linear(s) => s.candidates()?,
            Prepared::Bv(s) => s.candidates()?,
            Prepared::Tree(s) => s.candidates()?,
        };
        Ok(set)
    }

    /// A class member inducing exactly `labeling` on the prepared points.
    pub fn rule_for_labeling(&self, labeling: &Bitset) -> Result<RuleDescription> {
        let k = labeling.count() as f64;
        let weights: Vec<f64> = (0..self.n).map(|i| if labeling.get(i) { 1.0 } else { -(k + 1.0) }).collect();
        let best = self.maximize(&weights)?;
        if (best.value * self.n as f64 - k).abs() > 1e-6 {
            return Err(Error::Internal("labeling is not realizable by the class".into()));
        }
        Ok(best)
    }
}

/// Maximizes over `class` for `weights` at `xs`.
pub fn maximize(class: &PolicyClass, weights: &[f64], xs: &Points) -> Result<RuleDescription> {
    class.prepare(xs)?.maximize(weights)
}

pub fn minimize(class: &PolicyClass, weights: &[f64], xs: &Points) -> Result<RuleDescription> {
    class.prepare(xs)?.minimize(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn scalar(v: &[f64]) -> Points {
        Points::scalar(v.to_vec())
    }

    #[test]
    fn evaluate_examples() {
        let r = Rule::Threshold { direction: Direction::Ge, cutoff: Some(0.0) };
        assert_eq!(evaluate(&r, &scalar(&[-1.0, 0.0, 2.0])).unwrap(), vec![0.0, 1.0, 1.0]);

        let r = Rule::BinCoefficients { cuts: vec![-0.5, 0.0, 0.5], coefficients: vec![0.5; 4] };
        assert_eq!(evaluate(&r, &scalar(&[-3.0, -0.2, 0.1, 9.0])).unwrap(), vec![0.5; 4]);

        let r = Rule::Tree {
            root: TreeNode::Split {
                feature: 0,
                threshold: 0.0,
                left: Box::new(TreeNode::Leaf { value: 1 }),
                right: Box::new(TreeNode::Leaf { value: 0 }),
            },
        };
        assert_eq!(evaluate(&r, &scalar(&[-1.0, 1.0])).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn evaluate_dimension_mismatch() {
        let r = Rule::Hyperplane { intercept: 0.0, coefficients: vec![1.0, 1.0] };
        assert!(evaluate(&r, &scalar(&[1.0])).is_err());
        let r = Rule::Threshold { direction: Direction::Le, cutoff: Some(0.0) };
        assert!(evaluate(&r, &Points::from_rows(&[vec![0.0, 1.0]]).unwrap()).is_err());
    }

    #[test]
    fn threshold_two_point_example() {
        let xs = scalar(&[0.0, 1.0]);
        let w = [-1.0, 2.0];
        let best = maximize(&PolicyClass::ConstantThreshold, &w, &xs).unwrap();
        assert_eq!(best.value, 1.0);
        assert_eq!(best.rule, Rule::Threshold { direction: Direction::Ge, cutoff: Some(1.0) });
        let worst = minimize(&PolicyClass::ConstantThreshold, &w, &xs).unwrap();
        assert_eq!(worst.value, -0.5);
        assert_eq!(worst.rule, Rule::Threshold { direction: Direction::Le, cutoff: Some(0.0) });
    }

    #[test]
    fn all_negative_weights_give_zero_function() {
        let xs = scalar(&[0.1, 0.4, 0.9]);
        let w = [-1.0, -0.5, -2.0];
        for class in [
            PolicyClass::ConstantThreshold,
            PolicyClass::LinearThreshold,
            PolicyClass::bounded_variation(2.0),
            PolicyClass::tree(2),
        ] {
            let best = maximize(&class, &w, &xs).unwrap();
            assert_eq!(best.value, 0.0, "{class:?}");
            let f = evaluate(&best.rule, &xs).unwrap();
            assert!(f.iter().all(|&v| v == 0.0), "{class:?} {f:?}");
        }
        let best = maximize(&PolicyClass::ConstantThreshold, &w, &xs).unwrap();
        assert!(matches!(best.rule, Rule::Threshold { cutoff: None, .. }));
    }

    #[test]
    fn all_positive_weights_minimum_is_zero() {
        let xs = scalar(&[0.1, 0.4, 0.9]);
        let w = [1.0, 0.5, 2.0];
        for class in [PolicyClass::ConstantThreshold, PolicyClass::bounded_variation(1.0), PolicyClass::tree(1)] {
            assert_eq!(minimize(&class, &w, &xs).unwrap().value, 0.0);
        }
    }

    #[test]
    fn bv_dense_grid_matches_indicator_optimum() {
        let xs = scalar(&[0.0, 1.0]);
        let class = PolicyClass::BoundedVariation {
            lambda: 2.0,
            grid: BvGrid::EqualWidth { bins: 50 },
            solver: BvSolver::Envelope,
        };
        let best = maximize(&class, &[-1.0, 2.0], &xs).unwrap();
        assert!((best.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let two_d = Points::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(PolicyClass::ConstantThreshold.prepare(&two_d).is_err());
        assert!(PolicyClass::bounded_variation(2.0).prepare(&two_d).is_err());
        assert!(PolicyClass::bounded_variation(0.0).prepare(&scalar(&[0.0, 1.0])).is_err());
        let empty = PolicyClass::BoundedVariation { lambda: 1.0, grid: BvGrid::Cuts { cuts: vec![] }, solver: BvSolver::Envelope };
        assert!(empty.prepare(&scalar(&[0.0, 1.0])).is_err());
        let unsorted = PolicyClass::BoundedVariation { lambda: 1.0, grid: BvGrid::Cuts { cuts: vec![0.5, 0.5] }, solver: BvSolver::Envelope };
        assert!(unsorted.prepare(&scalar(&[0.0, 1.0])).is_err());
        let prepared = PolicyClass::ConstantThreshold.prepare(&scalar(&[0.0, 1.0])).unwrap();
        assert!(prepared.maximize(&[1.0]).is_err());
        assert!(prepared.maximize(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let classes = vec![
            PolicyClass::ConstantThreshold,
            PolicyClass::LinearThreshold,
            PolicyClass::bounded_variation(2.0),
            PolicyClass::tree(2),
        ];
        let json = serde_json::to_string(&classes).unwrap();
        let back: Vec<PolicyClass> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, classes);
        let rule = RuleDescription { rule: Rule::Threshold { direction: Direction::Ge, cutoff: None }, value: 0.0 };
        let v: serde_json::Value = serde_json::to_value(&rule).unwrap();
        assert_eq!(v["rule"]["kind"], "threshold");
        assert!(v["rule"]["cutoff"].is_null());
    }

    fn random_points(rng: &mut impl Rng, n: usize, dim: usize) -> Points {
        Points::new(dim, (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Random members of each class for the dominance property.
    fn random_member(class: &PolicyClass, xs: &Points, rng: &mut impl Rng) -> Rule {
        match class {
            PolicyClass::ConstantThreshold => Rule::Threshold {
                direction: if rng.random_bool(0.5) { Direction::Ge } else { Direction::Le },
                cutoff: Some(rng.random_range(-1.2..1.2)),
            },
            PolicyClass::LinearThreshold => Rule::Hyperplane {
                intercept: rng.random_range(-1.0..1.0),
                coefficients: (0..xs.dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            },
            PolicyClass::BoundedVariation { lambda, .. } => {
                let bins = DEFAULT_BV_BINS;
                let col = xs.column(0);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let cuts: Vec<f64> = (1..bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
                // random walk in [0,1] rescaled to the TV budget
                let mut b: Vec<f64> = Vec::with_capacity(bins);
                let mut v: f64 = rng.random_range(0.0..1.0);
                for _ in 0..bins {
                    v = (v + rng.random_range(-0.3..0.3)).clamp(0.0, 1.0);
                    b.push(v);
                }
                let tv: f64 = b.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
                if tv > *lambda {
                    let s = lambda / tv;
                    let m = b.iter().sum::<f64>() / bins as f64;
                    b.iter_mut().for_each(|x| *x = m + (*x - m) * s);
                }
                Rule::BinCoefficients { cuts, coefficients: b }
            }
            PolicyClass::Tree { depth, .. } => Rule::Tree { root: tree::random_tree(xs, *depth, rng) },
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn maximum_dominates_random_members(seed in any::<u64>(), n in 3usize..40) {
            let mut rng = substream(seed, &[]);
            for (class, dim) in [
                (PolicyClass::ConstantThreshold, 1),
                (PolicyClass::LinearThreshold, 2),
                (PolicyClass::bounded_variation(2.0), 1),
                (PolicyClass::tree(2), 2),
            ] {
                let xs = random_points(&mut rng, n, dim);
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let prepared = class.prepare(&xs).unwrap();
                let best = prepared.maximize(&w).unwrap();
                let achieved = objective(&w, &evaluate(&best.rule, &xs).unwrap());
                prop_assert!((achieved - best.value).abs() < 1e-9, "{class:?}: rule gives {achieved}, reported {}", best.value);
                prop_assert!((prepared.max_value(&w).unwrap() - best.value).abs() < 1e-12);
                for _ in 0..1000 {
                    let member = random_member(&class, &xs, &mut rng);
                    let v = objective(&w, &evaluate(&member, &xs).unwrap());
                    prop_assert!(v <= best.value + 1e-9, "{class:?}: member {v} beats {}", best.value);
                }
            }
        }

        #[test]
        fn minimize_is_negated_maximize(seed in any::<u64>(), n in 2usize..30) {
            let mut rng = substream(seed, &[1]);
            for (class, dim) in [
                (PolicyClass::ConstantThreshold, 1),
                (PolicyClass::LinearThreshold, 2),
                (PolicyClass::bounded_variation(1.5), 1),
                (PolicyClass::tree(2), 2),
            ] {
                let xs = random_points(&mut rng, n, dim);
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let neg: Vec<f64> = w.iter().map(|v| -v).collect();
                let p = class.prepare(&xs).unwrap();
                prop_assert_eq!(p.minimize(&w).unwrap().value, -p.maximize(&neg).unwrap().value);
            }
        }

        #[test]
        fn bv_monotone_in_lambda(seed in any::<u64>(), n in 2usize..60) {
            let mut rng = substream(seed, &[2]);
            let xs = random_points(&mut rng, n, 1);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut last = f64::NEG_INFINITY;
            for lambda in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
                let v = maximize(&PolicyClass::bounded_variation(lambda), &w, &xs).unwrap().value;
                prop_assert!(v >= last - 1e-12);
                last = v;
            }
        }

        #[test]
        fn bv_nests_thresholds(seed in any::<u64>(), n in 2usize..40) {
            let mut rng = substream(seed, &[3]);
            let xs = random_points(&mut rng, n, 1);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut sorted = xs.column(0);
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let cuts: Vec<f64> = sorted.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
            prop_assume!(!cuts.is_empty());
            let bv = PolicyClass::BoundedVariation { lambda: 1.0, grid: BvGrid::Cuts { cuts }, solver: BvSolver::Envelope };
            let t = maximize(&PolicyClass::ConstantThreshold, &w, &xs).unwrap().value;
            let b = maximize(&bv, &w, &xs).unwrap().value;
            prop_assert!(b >= t - 1e-12);
        }
    }
}
