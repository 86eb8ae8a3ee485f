//! AIPW pseudo-outcomes and the efficient influence function values built on them.
//!
//! For each row,
//! `ψ_i = μ(1, x_i) − μ(0, x_i) + (2a_i − 1)(y_i − μ(a_i, x_i)) / π(a_i | x_i)`.
//! The mean of `ψ` is the one-step ATE estimate. Every statistic in the crate
//! is a function of this vector, so it is computed once per analysis.

use serde::{Deserialize, Serialize};

use crate::data::{Delta, Sample};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceFit;

/// Variances below this value are treated as degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOutcomes {
    psi: Vec<f64>,
    mean: f64,
}

impl PseudoOutcomes {
    /// Wraps precomputed pseudo-outcomes.
    pub fn from_values(psi: Vec<f64>) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::InvalidArgument("empty pseudo-outcome vector".into()));
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite pseudo-outcome".into()));
        }
        let mean = psi.iter().sum::<f64>() / psi.len() as f64;
        Ok(Self { psi, mean })
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// One-step ATE estimate `τ_n`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// All values identical: every centered statistic vanishes.
    pub fn is_constant(&self) -> bool {
        self.psi.iter().all(|&v| v == self.psi[0])
    }

    /// `ψ_i − ψ̄`, exactly zero when the vector is constant.
    pub fn centered(&self) -> Vec<f64> {
        if self.is_constant() {
            return vec![0.0; self.psi.len()];
        }
        self.psi.iter().map(|v| v - self.mean).collect()
    }

    /// `ψ_i − δ`.
    pub fn shifted(&self, delta: Delta) -> Vec<f64> {
        self.psi.iter().map(|v| v - delta.value()).collect()
    }
}

/// Pseudo-outcome transformation of every row.
pub fn pseudo_outcomes(sample: &Sample, fit: &NuisanceFit) -> Result<PseudoOutcomes> {
    if fit.len() != sample.n() {
        return Err(Error::InvalidArgument(format!(
            "nuisance fit covers {} rows, sample has {}",
            fit.len(),
            sample.n()
        )));
    }
    let psi = (0..sample.n())
        .map(|i| {
            let a = sample.treatment()[i];
            let y = sample.outcome()[i];
            let sign = if a == 1 { 1.0 } else { -1.0 };
            fit.mu(1, i) - fit.mu(0, i) + sign * (y - fit.mu(a, i)) / fit.pi(a, i)
        })
        .collect();
    PseudoOutcomes::from_values(psi)
}

/// Which estimand family the influence functions refer to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "delta", rename_all = "snake_case")]
pub enum EifMode {
    /// Fixed threshold δ.
    Delta(Delta),
    /// Threshold equal to the ATE, estimated by the sample mean of ψ.
    Tau,
}

/// Per-row influence function values at one `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct EifValues {
    pub mode: EifMode,
    /// `φ⁺_i` (centered).
    pub plus: Vec<f64>,
    /// `φ⁻_i` (centered).
    pub minus: Vec<f64>,
    /// `θ⁺_n(f)`.
    pub theta_plus: f64,
    /// `θ⁻_n(f)`.
    pub theta_minus: f64,
}

fn check_f(f_values: &[f64], n: usize) -> Result<()> {
    if f_values.len() != n {
        return Err(Error::InvalidArgument(format!("{} f values for {n} rows", f_values.len())));
    }
    if let Some(v) = f_values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("f value {v} outside [0, 1]")));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Influence function values of `θ⁺(f)` and `θ⁻(f)` with population means
/// replaced by sample means.
pub fn eif_values(pseudo: &PseudoOutcomes, f_values: &[f64], mode: EifMode) -> Result<EifValues> {
    let n = pseudo.len();
    check_f(f_values, n)?;
    let (raw_plus, raw_minus): (Vec<f64>, Vec<f64>) = match mode {
        EifMode::Delta(delta) => pseudo
            .shifted(delta)
            .iter()
            .zip(f_values)
            .map(|(w, f)| (w * f, w * (1.0 - f)))
            .unzip(),
        EifMode::Tau => {
            let c = pseudo.centered();
            let fbar = mean(f_values);
            let gbar = mean(&f_values.iter().map(|f| 1.0 - f).collect::<Vec<_>>());
            c.iter()
                .zip(f_values)
                .map(|(ci, f)| (ci * (f - fbar), ci * ((1.0 - f) - gbar)))
                .unzip()
        }
    };
    let theta_plus = mean(&raw_plus);
    let theta_minus = mean(&raw_minus);
    Ok(EifValues {
        mode,
        plus: raw_plus.iter().map(|v| v - theta_plus).collect(),
        minus: raw_minus.iter().map(|v| v - theta_minus).collect(),
        theta_plus,
        theta_minus,
    })
}

/// Second moments of the centered influence function values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EifVariance {
    pub plus: f64,
    pub minus: f64,
    /// Variance of `φ⁺ − φ⁻` (the quantitative contrast).
    pub combined: f64,
    pub plus_degenerate: bool,
    pub minus_degenerate: bool,
    pub combined_degenerate: bool,
}

/// Mean of squared centered EIF values (denominator `n`).
pub fn eif_variance(eif: &EifValues) -> Result<EifVariance> {
    let n = eif.plus.len();
    if n < 2 {
        return Err(Error::InvalidArgument("variance needs at least 2 rows".into()));
    }
    let sq = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>() / n as f64;
    let plus = sq(&mut eif.plus.iter().copied());
    let minus = sq(&mut eif.minus.iter().copied());
    let combined = sq(&mut eif.plus.iter().zip(&eif.minus).map(|(p, m)| p - m));
    Ok(EifVariance {
        plus,
        minus,
        combined,
        plus_degenerate: plus < VARIANCE_FLOOR,
        minus_degenerate: minus < VARIANCE_FLOOR,
        combined_degenerate: combined < VARIANCE_FLOOR,
    })
}
