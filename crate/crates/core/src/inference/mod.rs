//! Sup/inf statistics over a policy class, the multiplier bootstrap, and the
//! quantitative and qualitative heterogeneity tests built from them.
//!
//! Every bootstrap draw is linear in `f`, so the inner sup/inf is computed by
//! the same exact optimizer as the statistic, with per-draw weights:
//!
//! * `δ`-mode, `u = ψ - δ`: `T⁺ = √n max_f mean(g f)` and
//!   `T⁻ = √n (mean(g) - max_f mean(g f))` with `g_j = u_j (ξ_j - ξ̄)`.
//! * `τ`-mode, `c = ψ - ψ̄`: `T = √n max(max_f mean(g f), -min_f mean(g f))` with
//!   `g_j = 2 ξ_j c_j - (2/n) Σ ξ c - (2/n)(c_j - c̄) Σ ξ`.

mod weighted;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use weighted::{variance_weighted_stats, WeightedStats};

use crate::data::{Delta, Points, Sample};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceFit;
use crate::policy::{evaluate, PolicyClass, PreparedClass, RuleDescription};
use crate::pseudo::{pseudo_outcomes, EifMode, PseudoOutcomes, VARIANCE_FLOOR};
use crate::rng::{fill_rademacher, substream};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const RULE_LABEL: &str = "test-optimal rule";

/// Shared settings of both tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    /// Number of multiplier bootstrap draws `M`.
    pub bootstrap: usize,
    pub seed: u64,
    /// Standardize each candidate by its estimated influence-function variance.
    #[serde(default)]
    pub variance_weighted: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, bootstrap: DEFAULT_BOOTSTRAP, seed: 0, variance_weighted: false }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.bootstrap == 0 {
            return Err(Error::InvalidArgument("need at least one bootstrap draw".into()));
        }
        Ok(())
    }
}

/// Extremes of the one-step functionals over the class (not yet scaled by `√n`).
///
/// `δ`-mode: `upper = sup θ⁺_δ`, `lower = inf θ⁻_δ`, both attained by the same
/// rule. `τ`-mode: `upper = sup (θ⁺ - θ⁻)`, `lower = inf (θ⁺ - θ⁻)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaStats {
    pub mode: EifMode,
    pub upper: f64,
    pub upper_rule: RuleDescription,
    pub lower: f64,
    pub lower_rule: RuleDescription,
    pub degenerate: bool,
}

impl ThetaStats {
    /// `sup |θ⁺ - θ⁻|` in `τ`-mode, with the rule attaining it.
    pub fn abs_sup(&self) -> (f64, &RuleDescription) {
        if -self.lower > self.upper {
            (-self.lower, &self.lower_rule)
        } else {
            (self.upper, &self.upper_rule)
        }
    }
}

fn check_dims(pseudo: &PseudoOutcomes, prepared: &PreparedClass) -> Result<()> {
    if pseudo.len() != prepared.n() {
        return Err(Error::InvalidArgument(format!(
            "{} pseudo-outcomes but the class was prepared on {} points",
            pseudo.len(),
            prepared.n()
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn theta_stats(pseudo: &PseudoOutcomes, prepared: &PreparedClass, mode: EifMode) -> Result<ThetaStats> {
    check_dims(pseudo, prepared)?;
    let degenerate = pseudo.is_constant();
    match mode {
        EifMode::Delta(delta) => {
            let u = pseudo.shifted(delta);
            let best = prepared.maximize(&u)?;
            let lower = mean(&u) - best.value;
            let lower_rule = RuleDescription { rule: best.rule.clone(), value: lower };
            Ok(ThetaStats { mode, upper: best.value, upper_rule: best, lower, lower_rule, degenerate })
        }
        EifMode::Tau => {
            let w: Vec<f64> = pseudo.centered().iter().map(|c| 2.0 * c).collect();
            let upper_rule = prepared.maximize(&w)?;
            let lower_rule = prepared.minimize(&w)?;
            Ok(ThetaStats { mode, upper: upper_rule.value, lower: lower_rule.value, upper_rule, lower_rule, degenerate })
        }
    }
}

/// Bootstrap draws in the layout of the mode that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BootstrapDraws {
    Tau { draws: Vec<f64> },
    Delta { plus: Vec<f64>, minus: Vec<f64> },
}

fn rademacher(seed: u64, m: usize, n: usize) -> Vec<f64> {
    let mut xi = vec![0.0; n];
    fill_rademacher(&mut substream(seed, &[m as u64]), &mut xi);
    xi
}

/// Per-draw linear weights `g` such that the draw is `√n · opt_f mean(g f)`.
fn draw_weights(mode: EifMode, base: &[f64], xi: &[f64]) -> Vec<f64> {
    let n = base.len() as f64;
    match mode {
        EifMode::Delta(_) => {
            let xbar = mean(xi);
            base.iter().zip(xi).map(|(u, x)| u * (x - xbar)).collect()
        }
        EifMode::Tau => {
            let sxc: f64 = base.iter().zip(xi).map(|(c, x)| c * x).sum();
            let sx: f64 = xi.iter().sum();
            let cbar = mean(base);
            base.iter()
                .zip(xi)
                .map(|(c, x)| 2.0 * x * c - 2.0 * sxc / n - 2.0 * (c - cbar) * sx / n)
                .collect()
        }
    }
}

fn base_values(pseudo: &PseudoOutcomes, mode: EifMode) -> Vec<f64> {
    match mode {
        EifMode::Delta(delta) => pseudo.shifted(delta),
        EifMode::Tau => pseudo.centered(),
    }
}

/// `M` multiplier bootstrap draws; draw `m` uses Rademacher substream `(seed, m)`.
pub fn multiplier_draws(
    pseudo: &PseudoOutcomes,
    prepared: &PreparedClass,
    mode: EifMode,
    draws: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    check_dims(pseudo, prepared)?;
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one bootstrap draw".into()));
    }
    let base = base_values(pseudo, mode);
    let n = base.len();
    let root_n = (n as f64).sqrt();
    let per_draw = |m: usize| -> Result<(f64, f64)> {
        let g = draw_weights(mode, &base, &rademacher(seed, m, n));
        match mode {
            EifMode::Delta(_) => {
                let best = prepared.max_value(&g)?;
                Ok((root_n * best, root_n * (mean(&g) - best)))
            }
            EifMode::Tau => {
                let hi = prepared.max_value(&g)?;
                let lo = prepared.min_value(&g)?;
                Ok((root_n * hi.max(-lo), 0.0))
            }
        }
    };
    let pairs: Vec<(f64, f64)> = (0..draws).into_par_iter().map(per_draw).collect::<Result<_>>()?;
    Ok(match mode {
        EifMode::Delta(_) => {
            let (plus, minus) = pairs.into_iter().unzip();
            BootstrapDraws::Delta { plus, minus }
        }
        EifMode::Tau => BootstrapDraws::Tau { draws: pairs.into_iter().map(|p| p.0).collect() },
    })
}

/// The bootstrap process at one fixed `f`, without the sup/inf: in `τ`-mode the
/// signed contrast summand, in `δ`-mode the `θ⁺` and `θ⁻` summands.
pub fn fixed_f_draws(
    pseudo: &PseudoOutcomes,
    f_values: &[f64],
    mode: EifMode,
    draws: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    let n = pseudo.len();
    if f_values.len() != n {
        return Err(Error::InvalidArgument(format!("{} f values for {n} rows", f_values.len())));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one bootstrap draw".into()));
    }
    let base = base_values(pseudo, mode);
    let root_n = (n as f64).sqrt();
    let pairs: Vec<(f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|m| {
            let g = draw_weights(mode, &base, &rademacher(seed, m, n));
            let plus = g.iter().zip(f_values).map(|(g, f)| g * f).sum::<f64>() / root_n;
            let minus = g.iter().zip(f_values).map(|(g, f)| g * (1.0 - f)).sum::<f64>() / root_n;
            (plus, minus)
        })
        .collect();
    Ok(match mode {
        EifMode::Delta(_) => {
            let (plus, minus) = pairs.into_iter().unzip();
            BootstrapDraws::Delta { plus, minus }
        }
        EifMode::Tau => BootstrapDraws::Tau { draws: pairs.into_iter().map(|p| p.0).collect() },
    })
}

/// Empirical `q` quantile: the `ceil(q M)`-th smallest draw.
pub fn empirical_quantile(draws: &[f64], q: f64) -> f64 {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let k = ((q * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    sorted[k - 1]
}

/// `(1 + #{T_m >= stat}) / (M + 1)`.
pub fn upper_p_value(draws: &[f64], stat: f64) -> f64 {
    let exceed = draws.iter().filter(|&&t| t >= stat).count();
    (1 + exceed) as f64 / (draws.len() + 1) as f64
}

/// `(1 + #{T_m <= stat}) / (M + 1)`.
pub fn lower_p_value(draws: &[f64], stat: f64) -> f64 {
    let below = draws.iter().filter(|&&t| t <= stat).count();
    (1 + below) as f64 / (draws.len() + 1) as f64
}

/// Descriptive value summary of a rule; no inference attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDiagnostics {
    pub theta_plus: f64,
    pub theta_minus: f64,
    /// `min(θ⁺_0(f), -θ⁻_0(f))`: estimated gain of the rule over the best static rule.
    pub min_gain: f64,
    pub label: String,
}

pub fn value_diagnostics(pseudo: &PseudoOutcomes, rule: &RuleDescription, xs: &Points) -> Result<ValueDiagnostics> {
    let f = evaluate(&rule.rule, xs)?;
    if f.len() != pseudo.len() {
        return Err(Error::InvalidArgument("rule evaluated on a different number of points".into()));
    }
    let psi = pseudo.values();
    let n = psi.len() as f64;
    let theta_plus = psi.iter().zip(&f).map(|(p, f)| p * f).sum::<f64>() / n;
    let theta_minus = psi.iter().zip(&f).map(|(p, f)| p * (1.0 - f)).sum::<f64>() / n;
    Ok(ValueDiagnostics { theta_plus, theta_minus, min_gain: theta_plus.min(-theta_minus), label: "descriptive".into() })
}

/// Summary of the candidate scan behind a variance-weighted statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingSummary {
    pub candidates: usize,
    /// Candidates dropped for variance below the floor (upper/contrast side).
    pub excluded: usize,
    /// Same for the lower side of the qualitative test.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excluded_minus: Option<usize>,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantTestReport {
    pub test: String,
    pub n: usize,
    pub class: PolicyClass,
    pub ate: f64,
    /// `√n sup_f |θ⁺ - θ⁻|` (variance-weighted when `weighting` is present).
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub bootstrap: usize,
    pub seed: u64,
    /// Always `RULE_LABEL`: the argmax carries no inferential guarantee.
    pub rule_label: String,
    pub rule: RuleDescription,
    pub diagnostics: ValueDiagnostics,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighting: Option<WeightingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nuisance: Option<NuisanceSummary>,
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualTestReport {
    pub test: String,
    pub n: usize,
    pub class: PolicyClass,
    pub ate: f64,
    pub delta: f64,
    /// `√n sup_f θ⁺_δ(f)`.
    pub statistic_plus: f64,
    /// `√n inf_f θ⁻_δ(f)`.
    pub statistic_minus: f64,
    pub critical_plus: f64,
    pub critical_minus: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    /// `max(p⁺, p⁻)`.
    pub p_value: f64,
    pub reject_plus: bool,
    pub reject_minus: bool,
    pub reject: bool,
    pub alpha: f64,
    pub bootstrap: usize,
    pub seed: u64,
    pub rule_label: String,
    pub rule_plus: RuleDescription,
    pub rule_minus: RuleDescription,
    pub diagnostics: ValueDiagnostics,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighting: Option<WeightingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nuisance: Option<NuisanceSummary>,
    pub draws_plus: Vec<f64>,
    pub draws_minus: Vec<f64>,
}

/// Nuisance estimators behind a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSummary {
    pub outcome: String,
    pub propensity: String,
    pub epsilon: f64,
    pub cross_fitted: bool,
}

impl NuisanceSummary {
    pub fn of(fit: &NuisanceFit) -> Self {
        Self {
            outcome: fit.outcome_method().to_string(),
            propensity: fit.propensity_method().to_string(),
            epsilon: fit.epsilon(),
            cross_fitted: fit.cross_fitted(),
        }
    }
}

/// Quantitative test on a sample with fitted nuisances.
pub fn quant_test(sample: &Sample, fit: &NuisanceFit, class: &PolicyClass, config: &TestConfig) -> Result<QuantTestReport> {
    let pseudo = pseudo_outcomes(sample, fit)?;
    let prepared = class.prepare(&sample.modifier_points())?;
    let mut report = quant_test_prepared(&pseudo, &prepared, &sample.modifier_points(), config)?;
    report.nuisance = Some(NuisanceSummary::of(fit));
    Ok(report)
}

/// Quantitative test from pseudo-outcomes and a class prepared on `xs`.
pub fn quant_test_prepared(
    pseudo: &PseudoOutcomes,
    prepared: &PreparedClass,
    xs: &Points,
    config: &TestConfig,
) -> Result<QuantTestReport> {
    config.validate()?;
    check_dims(pseudo, prepared)?;
    let root_n = (pseudo.len() as f64).sqrt();
    let (statistic, rule, draws, weighting, degenerate) = if config.variance_weighted {
        let w = variance_weighted_stats(pseudo, prepared, EifMode::Tau, VARIANCE_FLOOR)?;
        let draws = w.bootstrap(pseudo, config.bootstrap, config.seed)?;
        let (stat, rule) = w.abs_sup(prepared)?;
        let summary = w.summary(false);
        let BootstrapDraws::Tau { draws } = draws else { unreachable!("tau-mode draws") };
        (root_n * stat, rule, draws, Some(summary), pseudo.is_constant())
    } else {
        let stats = theta_stats(pseudo, prepared, EifMode::Tau)?;
        let (sup, rule) = stats.abs_sup();
        let BootstrapDraws::Tau { draws } = multiplier_draws(pseudo, prepared, EifMode::Tau, config.bootstrap, config.seed)? else {
            unreachable!("tau-mode draws")
        };
        (root_n * sup, rule.clone(), draws, None, stats.degenerate)
    };
    let critical_value = empirical_quantile(&draws, 1.0 - config.alpha);
    let (p_value, reject) = if statistic == 0.0 {
        (1.0, false)
    } else {
        (upper_p_value(&draws, statistic), statistic > critical_value)
    };
    let diagnostics = value_diagnostics(pseudo, &rule, xs)?;
    Ok(QuantTestReport {
        test: "quantitative".into(),
        n: pseudo.len(),
        class: prepared.class().clone(),
        ate: pseudo.mean(),
        statistic,
        critical_value,
        p_value,
        reject,
        alpha: config.alpha,
        bootstrap: config.bootstrap,
        seed: config.seed,
        rule_label: RULE_LABEL.into(),
        rule,
        diagnostics,
        degenerate,
        weighting,
        nuisance: None,
        draws,
    })
}

pub fn qual_test(
    sample: &Sample,
    fit: &NuisanceFit,
    class: &PolicyClass,
    delta: Delta,
    config: &TestConfig,
) -> Result<QualTestReport> {
    let pseudo = pseudo_outcomes(sample, fit)?;
    let xs = sample.modifier_points();
    let prepared = class.prepare(&xs)?;
    let mut report = qual_test_prepared(&pseudo, &prepared, &xs, delta, config)?;
    report.nuisance = Some(NuisanceSummary::of(fit));
    Ok(report)
}

pub fn qual_test_prepared(
    pseudo: &PseudoOutcomes,
    prepared: &PreparedClass,
    xs: &Points,
    delta: Delta,
    config: &TestConfig,
) -> Result<QualTestReport> {
    config.validate()?;
    check_dims(pseudo, prepared)?;
    let mode = EifMode::Delta(delta);
    let root_n = (pseudo.len() as f64).sqrt();
    let (upper, lower, rule_plus, rule_minus, draws, weighting) = if config.variance_weighted {
        let w = variance_weighted_stats(pseudo, prepared, mode, VARIANCE_FLOOR)?;
        let draws = w.bootstrap(pseudo, config.bootstrap, config.seed)?;
        let (rp, rm) = w.rules(prepared)?;
        (w.upper, w.lower, rp, rm, draws, Some(w.summary(true)))
    } else {
        let stats = theta_stats(pseudo, prepared, mode)?;
        let draws = multiplier_draws(pseudo, prepared, mode, config.bootstrap, config.seed)?;
        (stats.upper, stats.lower, stats.upper_rule, stats.lower_rule, draws, None)
    };
    let BootstrapDraws::Delta { plus, minus } = draws else { unreachable!("delta-mode draws") };
    let statistic_plus = root_n * upper;
    let statistic_minus = root_n * lower;
    let critical_plus = empirical_quantile(&plus, 1.0 - config.alpha);
    let critical_minus = empirical_quantile(&minus, config.alpha);
    let p_plus = upper_p_value(&plus, statistic_plus);
    let p_minus = lower_p_value(&minus, statistic_minus);
    let reject_plus = statistic_plus > critical_plus;
    let reject_minus = statistic_minus < critical_minus;
    let diagnostics = value_diagnostics(pseudo, &rule_plus, xs)?;
    Ok(QualTestReport {
        test: "qualitative".into(),
        n: pseudo.len(),
        class: prepared.class().clone(),
        ate: pseudo.mean(),
        delta: delta.value(),
        statistic_plus,
        statistic_minus,
        critical_plus,
        critical_minus,
        p_plus,
        p_minus,
        p_value: p_plus.max(p_minus),
        reject_plus,
        reject_minus,
        reject: reject_plus && reject_minus,
        alpha: config.alpha,
        bootstrap: config.bootstrap,
        seed: config.seed,
        rule_label: RULE_LABEL.into(),
        rule_plus,
        rule_minus,
        diagnostics,
        degenerate: pseudo.is_constant(),
        weighting,
        nuisance: None,
        draws_plus: plus,
        draws_minus: minus,
    })
}
