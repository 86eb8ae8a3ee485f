//! Baseline tests on a discretized modifier: per-bin AIPW effects compared
//! with the ATE (quantitative) or across signs (qualitative).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{empirical_quantile, upper_p_value};
use crate::pseudo::PseudoOutcomes;
use crate::rng::substream;

/// Default bin count.
pub const DEFAULT_BINS: usize = 100;
/// Standard errors of zero-variance bins are raised to this value.
pub const SE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEstimate {
    /// Position among the `K` equal-width bins, empty ones included.
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean pseudo-outcome in the bin.
    pub effect: f64,
    pub se: f64,
    /// The within-bin variance was zero and `se` was floored.
    pub degenerate: bool,
}

/// Bins of the modifier range holding at least two rows, with their effect
/// estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEstimates {
    pub bins: Vec<BinEstimate>,
    pub dropped_empty: usize,
    /// Bins holding a single row, which admit no variance estimate.
    pub dropped_singleton: usize,
    pub ate: f64,
    pub ate_se: f64,
    pub n: usize,
}

fn sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// `K` equal-width bins over the observed range of the scalar modifier
/// `xs`; the last bin is closed on the right.
pub fn subgroup_aipw(pseudo: &PseudoOutcomes, xs: &[f64], bins: usize) -> Result<SubgroupEstimates> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    let psi = pseudo.values();
    if xs.len() != psi.len() {
        return Err(Error::InvalidArgument(format!("{} modifier values for {} pseudo-outcomes", xs.len(), psi.len())));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for (&x, &p) in xs.iter().zip(psi) {
        let k = if width > 0.0 { (((x - lo) / width).floor() as usize).min(bins - 1) } else { 0 };
        members[k].push(p);
    }
    let mut out = Vec::new();
    let (mut dropped, mut singletons) = (0, 0);
    for (k, m) in members.iter().enumerate() {
        if m.len() < 2 {
            if m.is_empty() {
                dropped += 1;
            } else {
                singletons += 1;
            }
            continue;
        }
        let effect = m.iter().sum::<f64>() / m.len() as f64;
        let raw = sd(m, effect) / (m.len() as f64).sqrt();
        let degenerate = !(raw >= SE_FLOOR);
        out.push(BinEstimate {
            index: k,
            lo: lo + width * k as f64,
            hi: if k + 1 == bins { hi } else { lo + width * (k + 1) as f64 },
            count: m.len(),
            effect,
            se: if degenerate { SE_FLOOR } else { raw },
            degenerate,
        });
    }
    if dropped + singletons > 0 {
        log::warn!("dropped {dropped} empty and {singletons} single-row bins of {bins}");
    }
    if out.len() < 2 {
        return Err(Error::Degenerate(format!("only {} bin(s) with two or more rows; need at least 2", out.len())));
    }
    let ate = pseudo.mean();
    let ate_se = sd(psi, ate) / (psi.len() as f64).sqrt();
    Ok(SubgroupEstimates { bins: out, dropped_empty: dropped, dropped_singleton: singletons, ate, ate_se, n: psi.len() })
}

impl SubgroupEstimates {
    /// Builds estimates directly from per-bin effects, standard errors and counts.
    pub fn from_parts(effects: &[f64], ses: &[f64], counts: &[usize]) -> Result<Self> {
        if effects.len() != ses.len() || effects.len() != counts.len() {
            return Err(Error::InvalidArgument("effects, standard errors and counts differ in length".into()));
        }
        if effects.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 bins".into()));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("bin counts must be positive".into()));
        }
        let n: usize = counts.iter().sum();
        let ate = effects.iter().zip(counts).map(|(d, &c)| d * c as f64).sum::<f64>() / n as f64;
        let bins = effects
            .iter()
            .zip(ses)
            .zip(counts)
            .enumerate()
            .map(|(k, ((&effect, &se), &count))| {
                let degenerate = !(se >= SE_FLOOR);
                BinEstimate {
                    index: k,
                    lo: k as f64,
                    hi: (k + 1) as f64,
                    count,
                    effect,
                    se: if degenerate { SE_FLOOR } else { se },
                    degenerate,
                }
            })
            .collect();
        Ok(Self { bins, dropped_empty: 0, dropped_singleton: 0, ate, ate_se: f64::NAN, n })
    }

    pub fn standardized(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.effect / b.se).collect()
    }

    pub fn degenerate_bins(&self) -> usize {
        self.bins.iter().filter(|b| b.degenerate).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Unstructured,
    GailSimon,
    Range,
}

impl Comparator {
    pub fn name(self) -> &'static str {
        match self {
            Comparator::Unstructured => "unstructured",
            Comparator::GailSimon => "gail_simon",
            Comparator::Range => "range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorReport {
    pub comparator: Comparator,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    pub bins_used: usize,
    pub dropped_empty_bins: usize,
    pub dropped_singleton_bins: usize,
    pub degenerate_bins: usize,
}

fn check(alpha: f64, draws: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo draw".into()));
    }
    Ok(())
}

fn null_draws(draws: usize, seed: u64, k: usize, stat: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
    (0..draws)
        .into_par_iter()
        .map(|m| {
            let mut rng = substream(seed, &[m as u64]);
            let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            stat(&z)
        })
        .collect()
}

/// Least favorable point of the sign-homogeneity null for both qualitative
/// statistics: one standardized effect at `+∞`, the other `K - 1` at zero.
fn least_favorable(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    out[0] = f64::INFINITY;
    out
}

fn report(
    comparator: Comparator,
    est: &SubgroupEstimates,
    statistic: f64,
    null: &[f64],
    alpha: f64,
    seed: u64,
) -> ComparatorReport {
    let critical_value = empirical_quantile(null, 1.0 - alpha);
    ComparatorReport {
        comparator,
        statistic,
        critical_value,
        p_value: upper_p_value(null, statistic),
        reject: statistic > critical_value,
        alpha,
        draws: null.len(),
        seed,
        bins_used: est.bins.len(),
        dropped_empty_bins: est.dropped_empty,
        dropped_singleton_bins: est.dropped_singleton,
        degenerate_bins: est.degenerate_bins(),
    }
}

/// `Σ_k |d_k - ATE|`, against `d - ATE` simulated from independent bin
/// effects `N(0, s_k²)` coupled through the count-weighted mean.
pub fn unstructured_quant_test(est: &SubgroupEstimates, alpha: f64, draws: usize, seed: u64) -> Result<ComparatorReport> {
    check(alpha, draws)?;
    let ate = est.ate;
    let statistic: f64 = est.bins.iter().map(|b| (b.effect - ate).abs()).sum();
    let n = est.bins.iter().map(|b| b.count).sum::<usize>() as f64;
    let weights: Vec<f64> = est.bins.iter().map(|b| b.count as f64 / n).collect();
    let ses: Vec<f64> = est.bins.iter().map(|b| b.se).collect();
    let null = null_draws(draws, seed, est.bins.len(), |z| {
        let d: Vec<f64> = z.iter().zip(&ses).map(|(z, s)| z * s).collect();
        let centre: f64 = d.iter().zip(&weights).map(|(d, w)| d * w).sum();
        d.iter().map(|v| (v - centre).abs()).sum()
    });
    Ok(report(Comparator::Unstructured, est, statistic, &null, alpha, seed))
}

fn gail_simon_statistic(z: &[f64]) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for &v in z {
        if v > 0.0 {
            pos += v * v;
        } else if v < 0.0 {
            neg += v * v;
        }
    }
    f64::min(pos, neg)
}

fn range_statistic(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = z.iter().copied().fold(f64::INFINITY, f64::min);
    f64::min(max, -min)
}

/// `min(Q⁺, Q⁻)` over standardized bin effects. The null draw is `Q⁻` of
/// `K - 1` iid `N(0, 1)` effects, whose tail is the binomial chi-square
/// mixture of Gail and Simon.
pub fn gail_simon_test(est: &SubgroupEstimates, alpha: f64, draws: usize, seed: u64) -> Result<ComparatorReport> {
    check(alpha, draws)?;
    let statistic = gail_simon_statistic(&est.standardized());
    let null = null_draws(draws, seed, est.bins.len(), |z| gail_simon_statistic(&least_favorable(z)));
    Ok(report(Comparator::GailSimon, est, statistic, &null, alpha, seed))
}

/// Rejects when `max z > c` and `min z < -c`, i.e. `min(max z, -min z) > c`,
/// with `c` calibrated at the least favorable null.
pub fn range_test(est: &SubgroupEstimates, alpha: f64, draws: usize, seed: u64) -> Result<ComparatorReport> {
    check(alpha, draws)?;
    let statistic = range_statistic(&est.standardized());
    let null = null_draws(draws, seed, est.bins.len(), |z| range_statistic(&least_favorable(z)));
    Ok(report(Comparator::Range, est, statistic, &null, alpha, seed))
}
