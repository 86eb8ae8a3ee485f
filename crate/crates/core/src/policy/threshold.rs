//! Scan over scalar threshold rules `1(x >= t)` and `1(x <= t)`.

use super::candidates::{Bitset, CandidateSet};
use super::{Direction, Rule, RuleDescription};

/// Points sorted once; ties grouped so each observed cutoff is one candidate.
#[derive(Debug, Clone)]
pub(crate) struct ThresholdScan {
    order: Vec<usize>,
    /// `(value, start, end)` over positions in `order`.
    groups: Vec<(f64, usize, usize)>,
}

#[derive(Clone, Copy)]
enum Pick {
    Ge(usize),
    Zero,
    Le(usize),
}

impl ThresholdScan {
    pub(crate) fn new(x: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut start = 0;
        for pos in 1..=order.len() {
            if pos == order.len() || x[order[pos]] != x[order[start]] {
                groups.push((x[order[start]], start, pos));
                start = pos;
            }
        }
        Self { order, groups }
    }

    fn group_sums(&self, w: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|&(_, s, e)| self.order[s..e].iter().map(|&i| w[i]).sum())
            .collect()
    }

    /// Candidates in order: `Ge` ascending, zero sentinel, `Le` ascending.
    /// Only strictly better candidates replace the incumbent.
    fn scan(&self, w: &[f64]) -> (f64, Pick) {
        let gs = self.group_sums(w);
        let g = gs.len();
        let mut suffix = vec![0.0; g + 1];
        for k in (0..g).rev() {
            suffix[k] = suffix[k + 1] + gs[k];
        }
        let mut best = (suffix[0], Pick::Ge(0));
        for (k, &s) in suffix.iter().enumerate().take(g).skip(1) {
            if s > best.0 {
                best = (s, Pick::Ge(k));
            }
        }
        if 0.0 > best.0 {
            best = (0.0, Pick::Zero);
        }
        let mut prefix = 0.0;
        for (k, &s) in gs.iter().enumerate() {
            prefix += s;
            if prefix > best.0 {
                best = (prefix, Pick::Le(k));
            }
        }
        (best.0 / w.len() as f64, best.1)
    }

    pub(crate) fn max_value(&self, w: &[f64]) -> f64 {
        self.scan(w).0
    }

    pub(crate) fn maximize(&self, w: &[f64]) -> RuleDescription {
        let (value, pick) = self.scan(w);
        let rule = match pick {
            Pick::Ge(k) => Rule::Threshold { direction: Direction::Ge, cutoff: Some(self.groups[k].0) },
            Pick::Zero => Rule::Threshold { direction: Direction::Ge, cutoff: None },
            Pick::Le(k) => Rule::Threshold { direction: Direction::Le, cutoff: Some(self.groups[k].0) },
        };
        RuleDescription { rule, value }
    }

    pub(crate) fn candidates(&self) -> CandidateSet {
        let n = self.order.len();
        let mut set = CandidateSet::new();
        for &(_, start, _) in &self.groups {
            let mut b = Bitset::new(n);
            for &i in &self.order[start..] {
                b.set(i);
            }
            set.push(b).expect("threshold candidates are O(n)");
        }
        for &(_, _, end) in &self.groups {
            let mut b = Bitset::new(n);
            for &i in &self.order[..end] {
                b.set(i);
            }
            set.push(b).expect("threshold candidates are O(n)");
        }
        set
    }
}
