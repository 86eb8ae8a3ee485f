//! Bounded-variation class on a fixed grid of bins.
//!
//! The LP `max cᵀb s.t. 0 <= b <= 1, Σ|b_{k+1} - b_k| <= λ` is solved exactly
//! through its 0/1 structure: every feasible `b` is an average of the level-set
//! indicators `1(b >= t)`, whose jump counts average to `TV(b)`. The optimum is
//! therefore the upper concave envelope, at `λ`, of `C_J`, the best 0/1 step
//! sequence with at most `J` jumps. `C_J` for all `J` comes from one DP.

use super::candidates::{Bitset, CandidateSet, MAX_CANDIDATES};
use super::{simplex, BvGrid, BvSolver, Rule, RuleDescription};
use crate::error::{Error, Result};

/// Index of the right-closed bin containing `x`.
pub(crate) fn bin_of(cuts: &[f64], x: f64) -> usize {
    cuts.partition_point(|&c| c < x)
}

/// Optimal bin coefficients and their objective `cᵀb`.
#[derive(Debug, Clone, PartialEq)]
pub struct BvOptimum {
    pub value: f64,
    pub coefficients: Vec<f64>,
}

struct Dp {
    p: usize,
    /// `best[j]`: best sum with exactly `j` jumps, and the final level.
    best: Vec<(f64, u8)>,
    /// `jumped[(k * p + j) * 2 + v]`: whether state `(k, j, v)` came from a jump.
    jumped: Vec<bool>,
}

impl Dp {
    fn run(c: &[f64]) -> Self {
        let p = c.len();
        let neg = f64::NEG_INFINITY;
        let mut cur = vec![[neg, neg]; p];
        let mut jumped = vec![false; p * p * 2];
        cur[0] = [0.0, c[0]];
        for k in 1..p {
            let mut next = vec![[neg, neg]; p];
            for j in 0..=k.min(p - 1) {
                for v in 0..2 {
                    let stay = cur[j][v];
                    let jump = if j > 0 { cur[j - 1][1 - v] } else { neg };
                    let (prev, from_jump) = if jump > stay { (jump, true) } else { (stay, false) };
                    if prev > neg {
                        next[j][v] = prev + if v == 1 { c[k] } else { 0.0 };
                        jumped[(k * p + j) * 2 + v] = from_jump;
                    }
                }
            }
            cur = next;
        }
        let best = cur
            .iter()
            .map(|s| if s[1] > s[0] { (s[1], 1) } else { (s[0], 0) })
            .collect();
        Self { p, best, jumped }
    }

    /// `C_J` with the exact jump count achieving it.
    fn at_most(&self, jmax: usize) -> (f64, usize) {
        let mut out = (self.best[0].0, 0);
        for j in 1..=jmax.min(self.p - 1) {
            if self.best[j].0 > out.0 {
                out = (self.best[j].0, j);
            }
        }
        out
    }

    fn trace(&self, j: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.p];
        let mut v = self.best[j].1 as usize;
        let mut j = j;
        for k in (0..self.p).rev() {
            b[k] = v as f64;
            if k > 0 && self.jumped[(k * self.p + j) * 2 + v] {
                v = 1 - v;
                j -= 1;
            }
        }
        b
    }
}

/// Exact LP optimum through the jump-count envelope.
pub fn bv_envelope(c: &[f64], lambda: f64) -> BvOptimum {
    let p = c.len();
    assert!(p > 0, "at least one bin");
    let dp = Dp::run(c);
    let floor = if lambda >= (p - 1) as f64 { p - 1 } else { lambda.floor() as usize };
    let curve: Vec<(f64, usize)> = (0..p).map(|j| dp.at_most(j)).collect();
    let (mut value, j0) = curve[floor];
    let mut mix: Option<(usize, usize, f64)> = None;
    for j2 in floor + 1..p {
        let jf2 = j2 as f64;
        if jf2 <= lambda {
            continue;
        }
        for j1 in 0..=floor {
            let theta = (jf2 - lambda) / (jf2 - j1 as f64);
            let v = theta * curve[j1].0 + (1.0 - theta) * curve[j2].0;
            if v > value {
                value = v;
                mix = Some((curve[j1].1, curve[j2].1, theta));
            }
        }
    }
    let coefficients = match mix {
        None => dp.trace(j0),
        Some((a, b, theta)) => {
            let (ba, bb) = (dp.trace(a), dp.trace(b));
            ba.iter().zip(&bb).map(|(x, y)| theta * x + (1.0 - theta) * y).collect()
        }
    };
    BvOptimum { value, coefficients }
}

/// The same LP in standard form, solved by the dense simplex.
pub fn bv_simplex(c: &[f64], lambda: f64) -> Result<BvOptimum> {
    let p = c.len();
    if p == 0 {
        return Err(Error::InvalidArgument("at least one bin".into()));
    }
    let nv = 2 * p - 1;
    let rows = p + 2 * (p - 1) + 1;
    let mut a = vec![0.0; rows * nv];
    let mut rhs = vec![0.0; rows];
    let mut r = 0;
    for k in 0..p {
        a[r * nv + k] = 1.0;
        rhs[r] = 1.0;
        r += 1;
    }
    for k in 0..p - 1 {
        for sign in [1.0, -1.0] {
            a[r * nv + k + 1] = sign;
            a[r * nv + k] = -sign;
            a[r * nv + p + k] = -1.0;
            r += 1;
        }
    }
    for k in 0..p - 1 {
        a[r * nv + p + k] = 1.0;
    }
    rhs[r] = lambda;
    let mut obj = c.to_vec();
    obj.resize(nv, 0.0);
    let sol = simplex::maximize(&obj, &a, &rhs)?;
    let coefficients: Vec<f64> = sol.x[..p].iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(BvOptimum { value: sol.value, coefficients })
}

#[derive(Debug, Clone)]
pub(crate) struct BvSearch {
    cuts: Vec<f64>,
    point_bin: Vec<usize>,
    lambda: f64,
    solver: BvSolver,
}

impl BvSearch {
    pub(crate) fn new(x: &[f64], lambda: f64, grid: &BvGrid, solver: BvSolver) -> Result<Self> {
        let equal_width = |bins: usize, lo: f64, hi: f64| -> Vec<f64> {
            let span = if hi > lo { hi - lo } else { 1.0 };
            (1..bins).map(|k| lo + span * k as f64 / bins as f64).collect()
        };
        let cuts = match grid {
            BvGrid::EqualWidth { bins } => {
                let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                equal_width(*bins, lo, hi)
            }
            BvGrid::Range { bins, lo, hi } => equal_width(*bins, *lo, *hi),
            BvGrid::Cuts { cuts } => cuts.clone(),
        };
        if cuts.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("grid cut points must be strictly increasing".into()));
        }
        let point_bin = x.iter().map(|&v| bin_of(&cuts, v)).collect();
        Ok(Self { cuts, point_bin, lambda, solver })
    }

    fn bins(&self) -> usize {
        self.cuts.len() + 1
    }

    fn solve(&self, w: &[f64]) -> Result<BvOptimum> {
        let mut c = vec![0.0; self.bins()];
        for (&k, &wi) in self.point_bin.iter().zip(w) {
            c[k] += wi;
        }
        match self.solver {
            BvSolver::Envelope => Ok(bv_envelope(&c, self.lambda)),
            BvSolver::Simplex => bv_simplex(&c, self.lambda),
        }
    }

    pub(crate) fn max_value(&self, w: &[f64]) -> Result<f64> {
        Ok(self.solve(w)?.value / w.len() as f64)
    }

    pub(crate) fn maximize(&self, w: &[f64]) -> Result<RuleDescription> {
        let opt = self.solve(w)?;
        Ok(RuleDescription {
            rule: Rule::BinCoefficients { cuts: self.cuts.clone(), coefficients: opt.coefficients },
            value: opt.value / w.len() as f64,
        })
    }

    /// 0/1 bin sequences with at most `floor(λ)` jumps, as point labelings.
    pub(crate) fn candidates(&self) -> Result<CandidateSet> {
        let p = self.bins();
        let jmax = if self.lambda >= (p - 1) as f64 { p - 1 } else { self.lambda.floor() as usize };
        let mut count = 0.0;
        let mut binom = 1.0;
        for j in 0..=jmax {
            if j > 0 {
                binom *= (p - j) as f64 / j as f64;
            }
            count += 2.0 * binom;
        }
        if count > MAX_CANDIDATES as f64 {
            return Err(Error::InvalidArgument(format!(
                "{count:.0} integral vertices exceed the limit of {MAX_CANDIDATES}"
            )));
        }
        let mut set = CandidateSet::new();
        let mut seq = vec![0u8; p];
        for start in 0..2u8 {
            self.enumerate(0, start, jmax, &mut seq, &mut set)?;
        }
        Ok(set)
    }

    fn enumerate(&self, k: usize, v: u8, left: usize, seq: &mut [u8], set: &mut CandidateSet) -> Result<()> {
        seq[k] = v;
        if k + 1 == seq.len() {
            let n = self.point_bin.len();
            return set.push(Bitset::from_fn(n, |i| seq[self.point_bin[i]] == 1));
        }
        self.enumerate(k + 1, v, left, seq, set)?;
        if left > 0 {
            self.enumerate(k + 1, 1 - v, left - 1, seq, set)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Vertices of the feasible region take at most one fractional level, so
    /// enumerating `{0, 1, t}^p` with `t` set by the active budget is exhaustive.
    fn oracle(c: &[f64], lambda: f64) -> f64 {
        let p = c.len();
        let mut best = f64::NEG_INFINITY;
        let total = 3usize.pow(p as u32);
        for code in 0..total {
            let mut pat = vec![0u8; p];
            let mut r = code;
            for slot in pat.iter_mut() {
                *slot = (r % 3) as u8;
                r /= 3;
            }
            let eval = |t: f64| -> (f64, f64) {
                let b: Vec<f64> = pat.iter().map(|&s| match s { 0 => 0.0, 1 => 1.0, _ => t }).collect();
                let tv = b.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
                (b.iter().zip(c).map(|(b, c)| b * c).sum(), tv)
            };
            if !pat.contains(&2) {
                let (v, tv) = eval(0.0);
                if tv <= lambda + 1e-12 {
                    best = best.max(v);
                }
                continue;
            }
            // TV(t) = alpha + beta t on (0, 1)
            let (_, alpha) = eval(0.0);
            let (_, at_half) = eval(0.5);
            let beta = 2.0 * (at_half - alpha);
            if beta.abs() < 1e-15 {
                continue;
            }
            let t = (lambda - alpha) / beta;
            if t > 0.0 && t < 1.0 {
                best = best.max(eval(t).0);
            }
        }
        best
    }

    #[test]
    fn envelope_matches_simplex_example() {
        let c = [1.0, -2.0, 1.5, -0.5, 2.0];
        for lambda in [0.5, 1.0, 1.7, 2.0, 3.2, 10.0] {
            let e = bv_envelope(&c, lambda);
            let s = bv_simplex(&c, lambda).unwrap();
            assert!((e.value - s.value).abs() < 1e-9, "lambda {lambda}: {} vs {}", e.value, s.value);
            let tv: f64 = e.coefficients.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            assert!(tv <= lambda + 1e-9);
        }
    }

    #[test]
    fn fractional_optimum() {
        // the only profitable 0/1 sequence needs two jumps; λ = 1 affords half of it
        let c = [-3.0, 2.0, -3.0];
        let e = bv_envelope(&c, 1.0);
        assert!((e.value - 1.0).abs() < 1e-12);
        assert_eq!(e.coefficients, vec![0.0, 0.5, 0.0]);
    }

    #[test]
    fn bins_are_right_closed() {
        assert_eq!(bin_of(&[0.0, 1.0], 0.0), 0);
        assert_eq!(bin_of(&[0.0, 1.0], 0.5), 1);
        assert_eq!(bin_of(&[0.0, 1.0], 1.0), 1);
        assert_eq!(bin_of(&[0.0, 1.0], 1.5), 2);
    }

    #[test]
    fn candidate_count() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = BvSearch::new(&x, 2.0, &BvGrid::EqualWidth { bins: 10 }, BvSolver::Envelope).unwrap();
        // 2 * (1 + 9 + 36) sequences, all distinct on one point per bin
        assert_eq!(s.candidates().unwrap().len(), 92);
    }

    proptest! {
        #[test]
        fn envelope_and_simplex_match_vertex_oracle(
            c in prop::collection::vec(-5.0f64..5.0, 1..8),
            lambda in 0.05f64..8.0,
        ) {
            let truth = oracle(&c, lambda);
            let e = bv_envelope(&c, lambda);
            let s = bv_simplex(&c, lambda).unwrap();
            prop_assert!((e.value - truth).abs() < 1e-9, "envelope {} oracle {truth}", e.value);
            prop_assert!((s.value - truth).abs() < 1e-9, "simplex {} oracle {truth}", s.value);
            let achieved: f64 = e.coefficients.iter().zip(&c).map(|(b, c)| b * c).sum();
            prop_assert!((achieved - e.value).abs() < 1e-9);
            let tv: f64 = e.coefficients.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            prop_assert!(tv <= lambda + 1e-9);
            prop_assert!(e.coefficients.iter().all(|&b| (0.0..=1.0).contains(&b)));
        }

        #[test]
        fn envelope_matches_simplex_on_wider_grids(
            c in prop::collection::vec(-5.0f64..5.0, 8..40),
            lambda in 0.05f64..6.0,
        ) {
            let e = bv_envelope(&c, lambda);
            let s = bv_simplex(&c, lambda).unwrap();
            prop_assert!((e.value - s.value).abs() < 1e-8);
        }
    }
}
