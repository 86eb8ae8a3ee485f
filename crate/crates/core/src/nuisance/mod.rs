//! Outcome regression `μ(a, x)` and propensity `π(a | x)` estimation.
//!
//! Outcome models are additive least-squares fits (linear, polynomial or
//! natural cubic spline), either one per treatment arm or jointly with
//! treatment terms. Propensity models are logistic regressions on the same
//! bases, or a known constant for randomized designs. Every propensity value
//! handed out is clipped to `[ε, 1 - ε]`.

mod basis;

pub use basis::{least_squares, BasisSpec, FeatureMap, LsFit, FALLBACK_RIDGE};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{fold_partition, Points, Sample};
use crate::error::{Error, Result};

/// Default positivity truncation level.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// How treatment enters the outcome regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStrategy {
    /// Separate regression in each arm.
    #[default]
    PerArm,
    /// One regression on `basis(x)` plus a treatment main effect and
    /// treatment-by-covariate linear interactions.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub basis: BasisSpec,
    #[serde(default)]
    pub strategy: OutcomeStrategy,
}

impl OutcomeSpec {
    pub fn per_arm(basis: BasisSpec) -> Self {
        Self { basis, strategy: OutcomeStrategy::PerArm }
    }

    pub fn tag(&self) -> String {
        let s = match self.strategy {
            OutcomeStrategy::PerArm => "per_arm",
            OutcomeStrategy::Joint => "joint",
        };
        format!("least_squares:{}:{s}", self.basis.tag())
    }
}

impl Default for OutcomeSpec {
    fn default() -> Self {
        Self::per_arm(BasisSpec::Spline { knots: 5 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropensitySpec {
    LogisticLinear,
    LogisticPolynomial { degree: usize },
    /// Known randomization probability `P(A = 1 | X) = value`.
    Known { value: f64 },
}

impl PropensitySpec {
    pub fn tag(&self) -> String {
        match self {
            PropensitySpec::LogisticLinear => "logistic:linear".into(),
            PropensitySpec::LogisticPolynomial { degree } => format!("logistic:polynomial({degree})"),
            PropensitySpec::Known { value } => format!("known({value})"),
        }
    }
}

impl Default for PropensitySpec {
    fn default() -> Self {
        PropensitySpec::LogisticPolynomial { degree: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossfitSpec {
    pub folds: usize,
    pub seed: u64,
}

/// Full nuisance configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NuisanceSpec {
    pub outcome: OutcomeSpec,
    pub propensity: PropensitySpec,
    pub epsilon: f64,
    /// Off by default.
    pub crossfit: Option<CrossfitSpec>,
}

impl Default for NuisanceSpec {
    fn default() -> Self {
        Self {
            outcome: OutcomeSpec::default(),
            propensity: PropensitySpec::default(),
            epsilon: DEFAULT_EPSILON,
            crossfit: None,
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("truncation level must lie in (0, 0.5), got {epsilon}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum OutcomeKind {
    PerArm { map0: FeatureMap, beta0: DVector<f64>, map1: FeatureMap, beta1: DVector<f64> },
    Joint { map: FeatureMap, beta: DVector<f64> },
}

/// Fitted outcome regression `μ(a, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    kind: OutcomeKind,
    method: String,
    ridged: bool,
}

impl OutcomeModel {
    pub fn predict(&self, a: u8, x: &[f64]) -> f64 {
        match &self.kind {
            OutcomeKind::PerArm { map0, beta0, map1, beta1 } => {
                let (map, beta) = if a == 1 { (map1, beta1) } else { (map0, beta0) };
                dot(&map.transform(x), beta.as_slice())
            }
            OutcomeKind::Joint { map, beta } => dot(&joint_row(map, a, x), beta.as_slice()),
        }
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    /// Whether any component needed the ridge fallback.
    pub fn ridged(&self) -> bool {
        self.ridged
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn joint_row(map: &FeatureMap, a: u8, x: &[f64]) -> Vec<f64> {
    let mut row = map.transform(x);
    let af = f64::from(a);
    row.push(af);
    row.extend(x.iter().map(|v| af * v));
    row
}

/// Fits `μ(a, x)` on all covariates of `sample`.
pub fn fit_outcome(sample: &Sample, spec: &OutcomeSpec) -> Result<OutcomeModel> {
    let rows: Vec<usize> = (0..sample.n()).collect();
    fit_outcome_rows(sample, &rows, spec)
}

fn fit_outcome_rows(sample: &Sample, rows: &[usize], spec: &OutcomeSpec) -> Result<OutcomeModel> {
    let x = sample.x();
    let a = sample.treatment();
    let y = sample.outcome();
    match spec.strategy {
        OutcomeStrategy::PerArm => {
            let arm_fit = |arm: u8| -> Result<(FeatureMap, LsFit)> {
                let idx: Vec<usize> = rows.iter().copied().filter(|&i| a[i] == arm).collect();
                if idx.is_empty() {
                    return Err(Error::Validation(format!("no rows in arm {arm} to fit the outcome model")));
                }
                let map = FeatureMap::fit(&x.select(&idx), spec.basis)?;
                let design = map.design(x, &idx);
                let resp = DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]));
                Ok((map, least_squares(&design, &resp)?))
            };
            let (map0, fit0) = arm_fit(0)?;
            let (map1, fit1) = arm_fit(1)?;
            Ok(OutcomeModel {
                ridged: fit0.ridged || fit1.ridged,
                kind: OutcomeKind::PerArm { map0, beta0: fit0.beta, map1, beta1: fit1.beta },
                method: spec.tag(),
            })
        }
        OutcomeStrategy::Joint => {
            let map = FeatureMap::fit(&x.select(rows), spec.basis)?;
            let width = map.width() + 1 + x.dim();
            let mut design = DMatrix::zeros(rows.len(), width);
            for (r, &i) in rows.iter().enumerate() {
                for (c, v) in joint_row(&map, a[i], x.row(i)).into_iter().enumerate() {
                    design[(r, c)] = v;
                }
            }
            let resp = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
            let fit = least_squares(&design, &resp)?;
            Ok(OutcomeModel {
                ridged: fit.ridged,
                kind: OutcomeKind::Joint { map, beta: fit.beta },
                method: spec.tag(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum PropensityKind {
    Known(f64),
    Logistic { map: FeatureMap, beta: DVector<f64> },
}

/// Fitted propensity `π(a | x)` with clipping to `[ε, 1 - ε]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    kind: PropensityKind,
    epsilon: f64,
    method: String,
    separated: bool,
}

pub(crate) fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn clip_propensity(p1: f64, epsilon: f64) -> f64 {
    p1.clamp(epsilon, 1.0 - epsilon)
}

impl PropensityModel {
    /// Unclipped `P(A = 1 | x)`.
    pub fn raw_treated(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PropensityKind::Known(v) => *v,
            PropensityKind::Logistic { map, beta } => expit(dot(&map.transform(x), beta.as_slice())),
        }
    }

    /// `π(a | x)` after truncation; `π(1|x) + π(0|x) = 1`.
    pub fn predict(&self, a: u8, x: &[f64]) -> f64 {
        let p1 = clip_propensity(self.raw_treated(x), self.epsilon);
        if a == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    /// True when the logistic fit showed signs of (quasi-)separation.
    pub fn separated(&self) -> bool {
        self.separated
    }

    /// Logistic coefficients on the standardized basis (intercept first).
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.kind {
            PropensityKind::Logistic { beta, .. } => Some(beta.as_slice()),
            PropensityKind::Known(_) => None,
        }
    }
}

/// Fits `π(a | x)` on all covariates of `sample`.
pub fn fit_propensity(sample: &Sample, spec: &PropensitySpec, epsilon: f64) -> Result<PropensityModel> {
    let rows: Vec<usize> = (0..sample.n()).collect();
    fit_propensity_rows(sample, &rows, spec, epsilon)
}

fn fit_propensity_rows(
    sample: &Sample,
    rows: &[usize],
    spec: &PropensitySpec,
    epsilon: f64,
) -> Result<PropensityModel> {
    check_epsilon(epsilon)?;
    let basis = match *spec {
        PropensitySpec::Known { value } => {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidArgument(format!("known propensity must lie in (0,1), got {value}")));
            }
            return Ok(PropensityModel {
                kind: PropensityKind::Known(value),
                epsilon,
                method: spec.tag(),
                separated: false,
            });
        }
        PropensitySpec::LogisticLinear => BasisSpec::Linear,
        PropensitySpec::LogisticPolynomial { degree } => BasisSpec::Polynomial { degree },
    };
    let x = sample.x();
    let map = FeatureMap::fit(&x.select(rows), basis)?;
    let design = map.design(x, rows);
    let target: Vec<f64> = rows.iter().map(|&i| f64::from(sample.treatment()[i])).collect();
    let (beta, separated) = logistic_irls(&design, &target)?;
    if separated {
        log::warn!("propensity fit shows signs of separation; clipping at {epsilon} keeps weights finite");
    }
    Ok(PropensityModel { kind: PropensityKind::Logistic { map, beta }, epsilon, method: spec.tag(), separated })
}

/// Newton–Raphson logistic regression with a tiny stabilizing ridge.
/// Returns the coefficients and a separation flag.
fn logistic_irls(design: &DMatrix<f64>, target: &[f64]) -> Result<(DVector<f64>, bool)> {
    const RIDGE: f64 = 1e-8;
    const MAX_ITER: usize = 100;
    let (n, q) = design.shape();
    let mean = target.iter().sum::<f64>() / n as f64;
    let mut beta = DVector::zeros(q);
    beta[0] = (mean / (1.0 - mean)).ln();
    let loglik = |b: &DVector<f64>| -> f64 {
        let eta = design * b;
        let ll: f64 = eta
            .iter()
            .zip(target)
            .map(|(&e, &t)| {
                // log(1 + exp(e)) computed stably
                let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                t * e - softplus
            })
            .sum();
        ll - 0.5 * RIDGE * b.norm_squared()
    };
    let mut current = loglik(&beta);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let eta = design * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let mut grad = -RIDGE * &beta;
        let mut hess = DMatrix::from_diagonal_element(q, q, RIDGE);
        for i in 0..n {
            let row = design.row(i);
            let w = p[i] * (1.0 - p[i]);
            let r = target[i] - p[i];
            for c in 0..q {
                grad[c] += row[c] * r;
                let wc = w * row[c];
                for d in c..q {
                    hess[(c, d)] += wc * row[d];
                }
            }
        }
        for c in 0..q {
            for d in 0..c {
                hess[(c, d)] = hess[(d, c)];
            }
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => break,
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + t * &step;
            let ll = loglik(&cand);
            if ll >= current - 1e-12 * current.abs().max(1.0) {
                beta = cand;
                current = ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || (t * step.amax()) < 1e-10 {
            converged = accepted;
            break;
        }
    }
    let eta = design * &beta;
    let extreme = eta.iter().any(|e| e.abs() > 30.0);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Internal("logistic regression diverged".into()));
    }
    Ok((beta, extreme || !converged))
}

/// Nuisance predictions at every row of the sample they were fitted for.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit {
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    pi1: Vec<f64>,
    epsilon: f64,
    outcome_method: String,
    propensity_method: String,
    cross_fitted: bool,
    models: Option<(OutcomeModel, PropensityModel)>,
}

impl NuisanceFit {
    /// Wraps externally computed per-row predictions; propensities are clipped.
    pub fn from_values(mu0: Vec<f64>, mu1: Vec<f64>, pi1: Vec<f64>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if mu0.len() != mu1.len() || mu0.len() != pi1.len() {
            return Err(Error::InvalidArgument("nuisance vectors differ in length".into()));
        }
        if mu0.iter().chain(&mu1).chain(&pi1).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite nuisance value".into()));
        }
        Ok(Self {
            mu0,
            mu1,
            pi1: pi1.into_iter().map(|p| clip_propensity(p, epsilon)).collect(),
            epsilon,
            outcome_method: "external".into(),
            propensity_method: "external".into(),
            cross_fitted: false,
            models: None,
        })
    }

    /// In-sample predictions from models fitted on the whole sample.
    pub fn from_models(sample: &Sample, outcome: OutcomeModel, propensity: PropensityModel) -> Self {
        let x = sample.x();
        let mu0 = x.rows().map(|r| outcome.predict(0, r)).collect();
        let mu1 = x.rows().map(|r| outcome.predict(1, r)).collect();
        let pi1 = x.rows().map(|r| propensity.predict(1, r)).collect();
        Self {
            mu0,
            mu1,
            pi1,
            epsilon: propensity.epsilon(),
            outcome_method: outcome.method().to_owned(),
            propensity_method: propensity.method().to_owned(),
            cross_fitted: false,
            models: Some((outcome, propensity)),
        }
    }

    pub fn len(&self) -> usize {
        self.mu0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu0.is_empty()
    }

    /// `μ(a, x_i)`.
    pub fn mu(&self, a: u8, i: usize) -> f64 {
        if a == 1 {
            self.mu1[i]
        } else {
            self.mu0[i]
        }
    }

    /// `π(a | x_i)`, already in `[ε, 1 - ε]`.
    pub fn pi(&self, a: u8, i: usize) -> f64 {
        if a == 1 {
            self.pi1[i]
        } else {
            1.0 - self.pi1[i]
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn outcome_method(&self) -> &str {
        &self.outcome_method
    }

    pub fn propensity_method(&self) -> &str {
        &self.propensity_method
    }

    pub fn cross_fitted(&self) -> bool {
        self.cross_fitted
    }

    /// Full-sample models, available when the fit was not cross-fitted.
    pub fn models(&self) -> Option<(&OutcomeModel, &PropensityModel)> {
        self.models.as_ref().map(|(o, p)| (o, p))
    }
}

/// Fits both nuisances according to `spec`, cross-fitting if requested.
pub fn fit_nuisance(sample: &Sample, spec: &NuisanceSpec) -> Result<NuisanceFit> {
    if let Some(cf) = spec.crossfit {
        return crossfit(sample, spec, cf.folds, cf.seed);
    }
    let outcome = fit_outcome(sample, &spec.outcome)?;
    let propensity = fit_propensity(sample, &spec.propensity, spec.epsilon)?;
    Ok(NuisanceFit::from_models(sample, outcome, propensity))
}

/// Out-of-fold nuisance predictions: row `i` is predicted by models fitted
/// without the fold containing `i`.
pub fn crossfit(sample: &Sample, spec: &NuisanceSpec, k: usize, seed: u64) -> Result<NuisanceFit> {
    check_epsilon(spec.epsilon)?;
    let folds = fold_partition(sample.n(), k, seed)?;
    let a = sample.treatment();
    for (f, fold) in folds.iter().enumerate() {
        let treated = fold.eval.iter().filter(|&&i| a[i] == 1).count();
        if treated == 0 || treated == fold.eval.len() {
            return Err(Error::Validation(format!(
                "fold {f} contains a single treatment arm; use fewer, larger folds"
            )));
        }
    }
    let n = sample.n();
    let (mut mu0, mut mu1, mut pi1) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let x: &Points = sample.x();
    for fold in &folds {
        let outcome = fit_outcome_rows(sample, &fold.train, &spec.outcome)?;
        let propensity = fit_propensity_rows(sample, &fold.train, &spec.propensity, spec.epsilon)?;
        for &i in &fold.eval {
            mu0[i] = outcome.predict(0, x.row(i));
            mu1[i] = outcome.predict(1, x.row(i));
            pi1[i] = propensity.predict(1, x.row(i));
        }
    }
    Ok(NuisanceFit {
        mu0,
        mu1,
        pi1,
        epsilon: spec.epsilon,
        outcome_method: format!("{} crossfit({k})", spec.outcome.tag()),
        propensity_method: format!("{} crossfit({k})", spec.propensity.tag()),
        cross_fitted: true,
        models: None,
    })
}
