//! Variance-weighted statistics: each candidate's value is divided by the
//! square root of its own estimated influence-function variance.
//!
//! Candidates are the indicator labelings the class induces on the data (for
//! the bounded-variation class, its 0/1 vertices). All per-candidate
//! quantities come from additive sums over the candidate's support.

use rayon::prelude::*;

use super::{rademacher, BootstrapDraws, WeightingSummary};
use crate::error::{Error, Result};
use crate::policy::{Bitset, PreparedClass, RuleDescription};
use crate::pseudo::{EifMode, PseudoOutcomes};

/// Weighted extremes over the candidate set (not yet scaled by `√n`).
///
/// `δ`-mode: `upper = max θ⁺/√V⁺`, `lower = min θ⁻/√V⁻`. `τ`-mode: `upper`
/// and `lower` are the max and min of `(θ⁺ - θ⁻)/√V`.
#[derive(Debug, Clone)]
pub struct WeightedStats {
    pub mode: EifMode,
    pub upper: f64,
    pub lower: f64,
    pub upper_index: usize,
    pub lower_index: usize,
    pub floor: f64,
    members: Vec<Bitset>,
    /// per candidate: value and variance on each side (the τ contrast uses `plus`)
    plus: Vec<(f64, f64)>,
    minus: Vec<(f64, f64)>,
    valid_plus: Vec<bool>,
    valid_minus: Vec<bool>,
}

fn base(pseudo: &PseudoOutcomes, mode: EifMode) -> Vec<f64> {
    match mode {
        EifMode::Delta(delta) => pseudo.shifted(delta),
        EifMode::Tau => pseudo.centered(),
    }
}

/// First index attaining the max (or min) of `value / √variance` among valid entries.
fn extreme(vals: &[(f64, f64)], valid: &[bool], maximize: bool) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &(val, var)) in vals.iter().enumerate() {
        if !valid[k] {
            continue;
        }
        let r = val / var.sqrt();
        let better = match best {
            None => true,
            Some((_, b)) => {
                if maximize {
                    r > b
                } else {
                    r < b
                }
            }
        };
        if better {
            best = Some((k, r));
        }
    }
    best
}

pub fn variance_weighted_stats(
    pseudo: &PseudoOutcomes,
    prepared: &PreparedClass,
    mode: EifMode,
    floor: f64,
) -> Result<WeightedStats> {
    super::check_dims(pseudo, prepared)?;
    let members = prepared.candidates()?.into_members();
    let v = base(pseudo, mode);
    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    let n = v.len() as f64;
    let total: f64 = v.iter().sum();
    let total2: f64 = v2.iter().sum();
    let vbar = total / n;
    let (mut plus, mut minus) = (Vec::with_capacity(members.len()), Vec::with_capacity(members.len()));
    for s in &members {
        let (sv, sv2) = (s.sum(&v), s.sum(&v2));
        match mode {
            EifMode::Delta(_) => {
                let tp = sv / n;
                let tm = (total - sv) / n;
                plus.push((tp, sv2 / n - tp * tp));
                minus.push((tm, (total2 - sv2) / n - tm * tm));
            }
            EifMode::Tau => {
                let fbar = s.count() as f64 / n;
                let d = 2.0 * (sv / n - vbar * fbar);
                let spread = ((1.0 - fbar).powi(2) * sv2 + fbar * fbar * (total2 - sv2)) / n;
                plus.push((d, 4.0 * spread - d * d));
                minus.push((d, 4.0 * spread - d * d));
            }
        }
    }
    let valid_plus: Vec<bool> = plus.iter().map(|&(_, var)| var >= floor).collect();
    let valid_minus: Vec<bool> = minus.iter().map(|&(_, var)| var >= floor).collect();
    let up = extreme(&plus, &valid_plus, true);
    let lo = match mode {
        EifMode::Delta(_) => extreme(&minus, &valid_minus, false),
        EifMode::Tau => extreme(&plus, &valid_plus, false),
    };
    let (Some((upper_index, upper)), Some((lower_index, lower))) = (up, lo) else {
        return Err(Error::Degenerate("degenerate variance weighting: every candidate has variance below the floor".into()));
    };
    Ok(WeightedStats { mode, upper, lower, upper_index, lower_index, floor, members, plus, minus, valid_plus, valid_minus })
}

impl WeightedStats {
    pub fn candidates(&self) -> usize {
        self.members.len()
    }

    pub fn excluded(&self) -> (usize, usize) {
        let count = |v: &[bool]| v.iter().filter(|&&b| !b).count();
        (count(&self.valid_plus), count(&self.valid_minus))
    }

    pub(super) fn summary(&self, two_sided: bool) -> WeightingSummary {
        let (ep, em) = self.excluded();
        WeightingSummary { candidates: self.candidates(), excluded: ep, excluded_minus: two_sided.then_some(em), floor: self.floor }
    }

    fn rule_at(&self, prepared: &PreparedClass, k: usize, value: f64) -> Result<RuleDescription> {
        let mut r = prepared.rule_for_labeling(&self.members[k])?;
        r.value = value;
        Ok(r)
    }

    /// `max |θ⁺ - θ⁻|/√V` and its rule (`τ`-mode).
    pub(super) fn abs_sup(&self, prepared: &PreparedClass) -> Result<(f64, RuleDescription)> {
        if -self.lower > self.upper {
            Ok((-self.lower, self.rule_at(prepared, self.lower_index, self.plus[self.lower_index].0)?))
        } else {
            Ok((self.upper, self.rule_at(prepared, self.upper_index, self.plus[self.upper_index].0)?))
        }
    }

    /// Extremal rules of both sides (`δ`-mode), carrying their unweighted values.
    pub(super) fn rules(&self, prepared: &PreparedClass) -> Result<(RuleDescription, RuleDescription)> {
        Ok((
            self.rule_at(prepared, self.upper_index, self.plus[self.upper_index].0)?,
            self.rule_at(prepared, self.lower_index, self.minus[self.lower_index].0)?,
        ))
    }

    /// Multiplier bootstrap of the weighted statistic on the same Rademacher
    /// substreams as the unweighted draws.
    pub fn bootstrap(&self, pseudo: &PseudoOutcomes, draws: usize, seed: u64) -> Result<BootstrapDraws> {
        if draws == 0 {
            return Err(Error::InvalidArgument("need at least one bootstrap draw".into()));
        }
        let v = base(pseudo, self.mode);
        let n = v.len();
        let root_n = (n as f64).sqrt();
        let pairs: Vec<(f64, f64)> = (0..draws)
            .into_par_iter()
            .map(|m| {
                let xi = rademacher(seed, m, n);
                let xv: Vec<f64> = xi.iter().zip(&v).map(|(a, b)| a * b).collect();
                let sx: f64 = xi.iter().sum();
                let sxv: f64 = xv.iter().sum();
                let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
                for (k, s) in self.members.iter().enumerate() {
                    let part = s.sum(&xv);
                    match self.mode {
                        EifMode::Delta(_) => {
                            if self.valid_plus[k] {
                                let (theta, var) = self.plus[k];
                                hi = hi.max((part - theta * sx) / root_n / var.sqrt());
                            }
                            if self.valid_minus[k] {
                                let (theta, var) = self.minus[k];
                                lo = lo.min((sxv - part - theta * sx) / root_n / var.sqrt());
                            }
                        }
                        EifMode::Tau => {
                            if self.valid_plus[k] {
                                let (d, var) = self.plus[k];
                                let fbar = s.count() as f64 / n as f64;
                                let val = (2.0 * part - 2.0 * fbar * sxv - d * sx) / root_n;
                                hi = hi.max(val.abs() / var.sqrt());
                            }
                        }
                    }
                }
                (hi, lo)
            })
            .collect();
        Ok(match self.mode {
            EifMode::Delta(_) => {
                let (plus, minus) = pairs.into_iter().unzip();
                BootstrapDraws::Delta { plus, minus }
            }
            EifMode::Tau => BootstrapDraws::Tau { draws: pairs.into_iter().map(|p| p.0).collect() },
        })
    }
}
