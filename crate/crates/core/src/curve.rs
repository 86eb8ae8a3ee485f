//! Smoothed CATE curve: natural cubic spline regression of the pseudo-outcome
//! on a single modifier, with pointwise normal bands from the HC0 sandwich.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Points, Sample};
use crate::error::{Error, Result};
use crate::nuisance::{least_squares, BasisSpec, FeatureMap, FALLBACK_RIDGE};
use crate::pseudo::PseudoOutcomes;

pub const DEFAULT_GRID: usize = 200;
pub const DEFAULT_KNOTS: usize = 5;
/// Standard errors below this are raised to it.
pub const SE_FLOOR: f64 = 1e-8;
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub fit: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub modifier: String,
    pub knots: usize,
    pub ridged: bool,
    pub points: Vec<CurvePoint>,
}

/// Fits the curve over the sample's single effect modifier.
pub fn cate_curve(sample: &Sample, pseudo: &PseudoOutcomes, knots: usize, grid: usize) -> Result<CurveFit> {
    if sample.modifiers().len() != 1 {
        return Err(Error::InvalidArgument("curve requires scalar modifier".into()));
    }
    let name = sample.modifier_names().remove(0);
    let xs = sample.modifier_points().column(0);
    let mut fit = fit_curve(&xs, pseudo.values(), knots, grid)?;
    fit.modifier = name;
    Ok(fit)
}

/// Spline fit of `y` on scalar `xs`, evaluated on `grid` equally spaced
/// points spanning the observed range.
pub fn fit_curve(xs: &[f64], y: &[f64], knots: usize, grid: usize) -> Result<CurveFit> {
    if xs.len() != y.len() {
        return Err(Error::InvalidArgument(format!("{} modifier values for {} responses", xs.len(), y.len())));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument(format!("grid needs at least 2 points, got {grid}")));
    }
    let spec = BasisSpec::Spline { knots };
    spec.validate()?;
    let points = Points::scalar(xs.to_vec());
    let map = FeatureMap::fit(&points, spec)?;
    let rows: Vec<usize> = (0..xs.len()).collect();
    let design = map.design(&points, &rows);
    let response = DVector::from_column_slice(y);
    let ls = least_squares(&design, &response)?;
    let resid = &response - &design * &ls.beta;

    let p = design.ncols();
    let mut gram = design.transpose() * &design;
    let bread = match gram.clone().try_inverse() {
        Some(inv) if !ls.ridged => inv,
        _ => {
            for i in 0..p {
                gram[(i, i)] += FALLBACK_RIDGE;
            }
            gram.try_inverse().ok_or_else(|| Error::Internal("spline Gram matrix not invertible".into()))?
        }
    };
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for i in 0..design.nrows() {
        let row = design.row(i);
        meat += row.transpose() * row * resid[i].powi(2);
    }
    let cov = &bread * meat * &bread;

    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let points = (0..grid)
        .map(|g| {
            let x = lo + (hi - lo) * g as f64 / (grid - 1) as f64;
            let b = DVector::from_vec(map.transform(&[x]));
            let fit = b.dot(&ls.beta);
            let se = (b.transpose() * &cov * &b)[(0, 0)].max(0.0).sqrt().max(SE_FLOOR);
            CurvePoint { x, fit, se, lower: fit - Z_975 * se, upper: fit + Z_975 * se }
        })
        .collect();
    Ok(CurveFit { modifier: String::new(), knots, ridged: ls.ridged, points })
}

/// Plot-ready CSV: `x,fit,se,lower,upper`.
pub fn write_curve_csv<W: std::io::Write>(curve: &CurveFit, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([curve.modifier.as_str(), "fit", "se", "lower", "upper"])?;
    for p in &curve.points {
        w.write_record([p.x, p.fit, p.se, p.lower, p.upper].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
