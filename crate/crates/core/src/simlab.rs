//! Simulation designs with covariates `X ~ Unif[-1, 1]³`, a mildly confounded
//! assignment and five treatment-effect shapes in `x₃`, plus a Monte Carlo
//! driver that estimates rejection rates of every test on them.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::{gail_simon_test, range_test, subgroup_aipw, unstructured_quant_test, DEFAULT_BINS};
use crate::data::{Delta, Points, Sample};
use crate::error::{Error, Result};
use crate::inference::{qual_test_prepared, quant_test_prepared, TestConfig, DEFAULT_ALPHA};
use crate::nuisance::{crossfit, fit_nuisance, NuisanceSpec};
use crate::policy::{BvGrid, BvSolver, PolicyClass, DEFAULT_LAMBDA};
use crate::pseudo::{pseudo_outcomes, PseudoOutcomes};
use crate::rng::{derive_seed, substream};

pub const NOISE_SD: f64 = 3.0;
pub const DEFAULT_REPS: usize = 500;
pub const DEFAULT_STUDY_BOOTSTRAP: usize = 500;

pub fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `P(A = 1 | x)`.
pub fn propensity(x: &[f64]) -> f64 {
    expit(x[0] / 8.0 + (std::f64::consts::PI * x[1]).sin() / 4.0)
}

/// Baseline outcome mean `h(x)`.
pub fn baseline(x: &[f64]) -> f64 {
    x[0] + expit((x[1] + x[2]) / 2.0)
}

/// Conditional effect `γ(x₃)` of each setting.
pub fn gamma(setting: u8, x3: f64) -> f64 {
    match setting {
        1 => 0.75,
        2 => {
            if x3 > 0.5 {
                15.0 * (x3 - 0.5)
            } else {
                0.0
            }
        }
        3 => 3.0 * (1.0 - x3 * x3),
        4 => 3.0 * sign(x3) * x3 * x3,
        5 => 3.0 * (1.5 * std::f64::consts::PI * x3).cos(),
        _ => panic!("setting {setting} does not exist"),
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub setting: u8,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
}

fn default_noise() -> f64 {
    NOISE_SD
}

impl DgpConfig {
    pub fn new(setting: u8, n: usize, seed: u64) -> Self {
        Self { setting, n, seed, noise_sd: NOISE_SD }
    }

    pub fn validate(&self) -> Result<()> {
        check_setting(self.setting)?;
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sd must be positive, got {}", self.noise_sd)));
        }
        Ok(())
    }
}

fn check_setting(setting: u8) -> Result<()> {
    if (1..=5).contains(&setting) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("setting must be in 1..=5, got {setting}")))
    }
}

/// Draws `n` iid rows with columns `x1, x2, x3`; `x3` is the effect modifier.
pub fn simulate(config: &DgpConfig) -> Result<Sample> {
    config.validate()?;
    let mut rng = substream(config.seed, &[]);
    let noise = Normal::new(0.0, config.noise_sd).expect("positive sd");
    let n = config.n;
    let mut coords = Vec::with_capacity(3 * n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let treated = u8::from(rng.random_bool(propensity(&x)));
        let eps = noise.sample(&mut rng);
        y.push(baseline(&x) + f64::from(treated) * gamma(config.setting, x[2]) + eps);
        a.push(treated);
        coords.extend_from_slice(&x);
    }
    let names = vec!["x1".to_string(), "x2".to_string(), "x3".to_string()];
    let sample = Sample::new(names, Points::new(3, coords)?, a, y, vec![2]);
    match sample {
        // a draw with a single arm is astronomically unlikely except for tiny n
        Err(Error::Validation(m)) => Err(Error::Degenerate(format!("simulated sample rejected: {m}"))),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QuantMonotone,
    QuantNonMonotone,
    QuantUnstructured,
    QualMonotone,
    QualNonMonotone,
    QualGailSimon,
    QualRange,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::QuantMonotone,
        Method::QuantNonMonotone,
        Method::QuantUnstructured,
        Method::QualMonotone,
        Method::QualNonMonotone,
        Method::QualGailSimon,
        Method::QualRange,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::QuantMonotone => "Quant (Monotone)",
            Method::QuantNonMonotone => "Quant (Non-monotone)",
            Method::QuantUnstructured => "Quant (Unstructured)",
            Method::QualMonotone => "Qual (Monotone)",
            Method::QualNonMonotone => "Qual (Non-monotone)",
            Method::QualGailSimon => "Qual (Gail-Simon)",
            Method::QualRange => "Qual (Range)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Method::QuantMonotone => "quant_monotone",
            Method::QuantNonMonotone => "quant_non_monotone",
            Method::QuantUnstructured => "quant_unstructured",
            Method::QualMonotone => "qual_monotone",
            Method::QualNonMonotone => "qual_non_monotone",
            Method::QualGailSimon => "qual_gail_simon",
            Method::QualRange => "qual_range",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == s || m.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub settings: Vec<u8>,
    pub n_values: Vec<usize>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Multiplier bootstrap and comparator Monte Carlo draws.
    pub bootstrap: usize,
    /// Bin count of the bounded-variation grid over `[-1, 1]` and of the
    /// comparators' discretization.
    pub bins: usize,
    pub lambda: f64,
    pub delta: Delta,
    pub nuisance: NuisanceSpec,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            settings: vec![1, 2, 3, 4, 5],
            n_values: vec![250, 500, 1000, 2000],
            methods: Method::ALL.to_vec(),
            reps: DEFAULT_REPS,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            bootstrap: DEFAULT_STUDY_BOOTSTRAP,
            bins: DEFAULT_BINS,
            lambda: DEFAULT_LAMBDA,
            delta: Delta::default(),
            nuisance: NuisanceSpec::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("need at least one replication".into()));
        }
        if self.settings.is_empty() || self.n_values.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument("study grid is empty".into()));
        }
        for &s in &self.settings {
            check_setting(s)?;
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {n}")));
        }
        if self.bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {}", self.bins)));
        }
        self.test_config(0).validate()?;
        self.non_monotone_class().validate(1)
    }

    fn test_config(&self, seed: u64) -> TestConfig {
        TestConfig { alpha: self.alpha, bootstrap: self.bootstrap, seed, variance_weighted: false }
    }

    pub fn non_monotone_class(&self) -> PolicyClass {
        PolicyClass::BoundedVariation {
            lambda: self.lambda,
            grid: BvGrid::Range { bins: self.bins, lo: -1.0, hi: 1.0 },
            solver: BvSolver::Envelope,
        }
    }
}

/// Seed of replication `rep` in the cell `(setting, n)`.
pub fn replication_seed(master: u64, setting: u8, n: usize, rep: usize) -> u64 {
    derive_seed(master, &[u64::from(setting), n as u64, rep as u64])
}

fn method_seed(rep_seed: u64, method: Method) -> u64 {
    derive_seed(rep_seed, &[1 + method as u64])
}

/// Decision of one method on one dataset.
pub fn run_method(method: Method, sample: &Sample, pseudo: &PseudoOutcomes, config: &StudyConfig, seed: u64) -> Result<bool> {
    let xs = sample.modifier_points();
    let test = config.test_config(seed);
    match method {
        Method::QuantMonotone | Method::QuantNonMonotone => {
            let class = if method == Method::QuantMonotone { PolicyClass::ConstantThreshold } else { config.non_monotone_class() };
            let prepared = class.prepare(&xs)?;
            Ok(quant_test_prepared(pseudo, &prepared, &xs, &test)?.reject)
        }
        Method::QualMonotone | Method::QualNonMonotone => {
            let class = if method == Method::QualMonotone { PolicyClass::ConstantThreshold } else { config.non_monotone_class() };
            let prepared = class.prepare(&xs)?;
            Ok(qual_test_prepared(pseudo, &prepared, &xs, config.delta, &test)?.reject)
        }
        Method::QuantUnstructured | Method::QualGailSimon | Method::QualRange => {
            let est = subgroup_aipw(pseudo, &xs.column(0), config.bins)?;
            let report = match method {
                Method::QuantUnstructured => unstructured_quant_test(&est, config.alpha, config.bootstrap, seed)?,
                Method::QualGailSimon => gail_simon_test(&est, config.alpha, config.bootstrap, seed)?,
                _ => range_test(&est, config.alpha, config.bootstrap, seed)?,
            };
            Ok(report.reject)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub method: Method,
    pub label: String,
    pub setting: u8,
    pub n: usize,
    /// Replications that produced a decision.
    pub reps: usize,
    pub rejections: usize,
    pub failures: usize,
    pub proportion: f64,
    pub mcse: f64,
    /// `R = 1` or a proportion of 0 or 1 gives a zero standard error.
    pub mcse_degenerate: bool,
    /// Time spent in this method, summed over replications.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
}

impl StudyReport {
    pub fn row(&self, method: Method, setting: u8, n: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.method == method && r.setting == setting && r.n == n)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "setting", "n", "R", "proportion", "mcse", "seconds"])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.setting.to_string(),
                r.n.to_string(),
                r.reps.to_string(),
                r.proportion.to_string(),
                r.mcse.to_string(),
                format!("{:.3}", r.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct RepOutcome {
    decisions: Vec<Option<bool>>,
    seconds: Vec<f64>,
}

fn replicate(config: &StudyConfig, setting: u8, n: usize, rep: usize) -> RepOutcome {
    let k = config.methods.len();
    let seed = replication_seed(config.seed, setting, n, rep);
    let prepared = (|| -> Result<(Sample, PseudoOutcomes)> {
        let sample = simulate(&DgpConfig::new(setting, n, seed))?;
        let fit = match config.nuisance.crossfit {
            Some(cf) => crossfit(&sample, &config.nuisance, cf.folds, derive_seed(seed, &[0, cf.seed]))?,
            None => fit_nuisance(&sample, &config.nuisance)?,
        };
        let pseudo = pseudo_outcomes(&sample, &fit)?;
        Ok((sample, pseudo))
    })();
    let (sample, pseudo) = match prepared {
        Ok(v) => v,
        Err(e) => {
            log::debug!("setting {setting}, n {n}, rep {rep}: {e}");
            return RepOutcome { decisions: vec![None; k], seconds: vec![0.0; k] };
        }
    };
    let mut decisions = Vec::with_capacity(k);
    let mut seconds = Vec::with_capacity(k);
    for &m in &config.methods {
        let start = Instant::now();
        let d = run_method(m, &sample, &pseudo, config, method_seed(seed, m));
        seconds.push(start.elapsed().as_secs_f64());
        decisions.push(match d {
            Ok(v) => Some(v),
            Err(e) => {
                log::debug!("{} on setting {setting}, n {n}, rep {rep}: {e}", m.key());
                None
            }
        });
    }
    RepOutcome { decisions, seconds }
}

/// Runs every `(setting, n)` cell of the grid. `progress` is called after
/// each cell with the rows just produced.
pub fn run_study_with(config: &StudyConfig, mut progress: impl FnMut(&[StudyRow])) -> Result<StudyReport> {
    config.validate()?;
    let mut rows = Vec::new();
    for &setting in &config.settings {
        for &n in &config.n_values {
            let outcomes: Vec<RepOutcome> =
                (0..config.reps).into_par_iter().map(|rep| replicate(config, setting, n, rep)).collect();
            let start = rows.len();
            for (j, &method) in config.methods.iter().enumerate() {
                let mut rejections = 0;
                let mut reps = 0;
                let mut seconds = 0.0;
                for o in &outcomes {
                    seconds += o.seconds[j];
                    if let Some(d) = o.decisions[j] {
                        reps += 1;
                        rejections += usize::from(d);
                    }
                }
                let failures = config.reps - reps;
                let proportion = if reps > 0 { rejections as f64 / reps as f64 } else { f64::NAN };
                let mcse = if reps > 0 { (proportion * (1.0 - proportion) / reps as f64).sqrt() } else { f64::NAN };
                if failures > 0 {
                    log::warn!("{}: {failures} of {} replications failed (setting {setting}, n {n})", method.key(), config.reps);
                }
                rows.push(StudyRow {
                    method,
                    label: method.label().to_string(),
                    setting,
                    n,
                    reps,
                    rejections,
                    failures,
                    proportion,
                    mcse,
                    mcse_degenerate: !(mcse > 0.0),
                    seconds,
                });
            }
            progress(&rows[start..]);
        }
    }
    Ok(StudyReport { config: config.clone(), rows })
}

pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    run_study_with(config, |_| {})
}
