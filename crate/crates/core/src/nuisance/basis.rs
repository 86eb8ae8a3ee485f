//! Additive regression bases and least-squares solvers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{Error, Result};

/// Ridge penalty applied when a design matrix is numerically rank-deficient.
pub const FALLBACK_RIDGE: f64 = 1e-8;

/// Additive basis used for every covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    Linear,
    /// Powers `1..=degree` of each covariate (no cross terms).
    Polynomial { degree: usize },
    /// Natural cubic spline per covariate with `knots` knots placed at
    /// empirical quantiles, the outer two at the training range.
    Spline { knots: usize },
}

impl BasisSpec {
    pub fn tag(&self) -> String {
        match self {
            BasisSpec::Linear => "linear".into(),
            BasisSpec::Polynomial { degree } => format!("polynomial({degree})"),
            BasisSpec::Spline { knots } => format!("spline({knots})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BasisSpec::Polynomial { degree } if degree == 0 => {
                Err(Error::InvalidArgument("polynomial degree must be >= 1".into()))
            }
            BasisSpec::Spline { knots } if knots < 2 => {
                Err(Error::InvalidArgument("spline needs at least 2 knots".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CoordBasis {
    Linear,
    Polynomial { degree: usize, lo: f64, hi: f64 },
    Spline { knots: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
struct CoordMap {
    center: f64,
    scale: f64,
    basis: CoordBasis,
}

impl CoordMap {
    fn width(&self) -> usize {
        match &self.basis {
            CoordBasis::Linear => 1,
            CoordBasis::Polynomial { degree, .. } => *degree,
            CoordBasis::Spline { knots } => knots.len().saturating_sub(2) + 1,
        }
    }

    fn push(&self, x: f64, out: &mut Vec<f64>) {
        let u = (x - self.center) / self.scale;
        match &self.basis {
            CoordBasis::Linear => out.push(u),
            CoordBasis::Polynomial { degree, lo, hi } => {
                // Powers are continued linearly beyond the training range.
                let (anchor, offset) = if u < *lo {
                    (*lo, u - lo)
                } else if u > *hi {
                    (*hi, u - hi)
                } else {
                    (u, 0.0)
                };
                for k in 1..=*degree {
                    let kf = k as f64;
                    let value = anchor.powi(k as i32);
                    let slope = kf * anchor.powi(k as i32 - 1);
                    out.push(value + slope * offset);
                }
            }
            CoordBasis::Spline { knots } => {
                out.push(u);
                let kk = knots.len();
                if kk < 3 {
                    return;
                }
                let last = knots[kk - 1];
                let d = |k: usize| {
                    let cube = |t: f64| if t > 0.0 { t * t * t } else { 0.0 };
                    (cube(u - knots[k]) - cube(u - last)) / (last - knots[k])
                };
                let d_last = d(kk - 2);
                for k in 0..kk - 2 {
                    out.push(d(k) - d_last);
                }
            }
        }
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Feature map `x -> (1, b_1(x_1), ..., b_p(x_p))` fitted on training points.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    coords: Vec<CoordMap>,
}

impl FeatureMap {
    pub fn fit(x: &Points, spec: BasisSpec) -> Result<Self> {
        spec.validate()?;
        if x.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a basis on zero rows".into()));
        }
        let coords = (0..x.dim())
            .map(|j| {
                let mut col = x.column(j);
                let n = col.len() as f64;
                let center = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - center).powi(2)).sum::<f64>() / n;
                let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                col.iter_mut().for_each(|v| *v = (*v - center) / scale);
                col.sort_by(f64::total_cmp);
                let basis = match spec {
                    BasisSpec::Linear => CoordBasis::Linear,
                    BasisSpec::Polynomial { degree } => {
                        CoordBasis::Polynomial { degree, lo: col[0], hi: col[col.len() - 1] }
                    }
                    BasisSpec::Spline { knots } => {
                        let mut k: Vec<f64> = (0..knots)
                            .map(|i| quantile_sorted(&col, i as f64 / (knots - 1) as f64))
                            .collect();
                        k.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
                        CoordBasis::Spline { knots: k }
                    }
                };
                CoordMap { center, scale, basis }
            })
            .collect();
        Ok(Self { coords })
    }

    /// Number of columns including the intercept.
    pub fn width(&self) -> usize {
        1 + self.coords.iter().map(CoordMap::width).sum::<usize>()
    }

    pub fn input_dim(&self) -> usize {
        self.coords.len()
    }

    pub fn transform_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        for (c, &v) in self.coords.iter().zip(x) {
            c.push(v, out);
        }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        self.transform_into(x, &mut out);
        out
    }

    pub fn design(&self, x: &Points, rows: &[usize]) -> DMatrix<f64> {
        let w = self.width();
        let mut buf = Vec::with_capacity(w);
        let mut m = DMatrix::zeros(rows.len(), w);
        for (r, &i) in rows.iter().enumerate() {
            self.transform_into(x.row(i), &mut buf);
            for (c, v) in buf.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    }
}

/// Least-squares coefficients plus whether the ridge fallback was used.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    pub beta: DVector<f64>,
    pub ridged: bool,
}

/// Ordinary least squares; falls back to ridge `FALLBACK_RIDGE` when the
/// design is numerically rank-deficient.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<LsFit> {
    if design.nrows() != y.len() {
        return Err(Error::Internal("design/response length mismatch".into()));
    }
    let cols = design.ncols();
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let min_sv = if design.nrows() >= cols { svd.singular_values.min() } else { 0.0 };
    if max_sv > 0.0 && min_sv > 1e-10 * max_sv {
        let beta = svd
            .solve(y, 0.0)
            .map_err(|e| Error::Internal(format!("least squares solve failed: {e}")))?;
        return Ok(LsFit { beta, ridged: false });
    }
    log::warn!("rank-deficient design ({} x {cols}); using ridge penalty {FALLBACK_RIDGE}", design.nrows());
    let mut gram = design.transpose() * design;
    for i in 0..cols {
        gram[(i, i)] += FALLBACK_RIDGE;
    }
    let rhs = design.transpose() * y;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Internal("ridge system not positive definite".into()))?;
    Ok(LsFit { beta: chol.solve(&rhs), ridged: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        let x = Points::from_rows(&[vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, 5.0], vec![3.0, 7.0], vec![4.0, 9.0]]).unwrap();
        assert_eq!(FeatureMap::fit(&x, BasisSpec::Linear).unwrap().width(), 3);
        assert_eq!(FeatureMap::fit(&x, BasisSpec::Polynomial { degree: 3 }).unwrap().width(), 7);
        assert_eq!(FeatureMap::fit(&x, BasisSpec::Spline { knots: 5 }).unwrap().width(), 9);
    }

    #[test]
    fn spline_is_linear_beyond_boundary_knots() {
        let x = Points::scalar((0..50).map(|i| i as f64 / 49.0).collect());
        let map = FeatureMap::fit(&x, BasisSpec::Spline { knots: 5 }).unwrap();
        let f = |v: f64| map.transform(&[v]);
        // second differences vanish outside [0, 1]
        for base in [1.5, 3.0, -1.0, -4.0] {
            let (a, b, c) = (f(base), f(base + 0.5), f(base + 1.0));
            for k in 0..a.len() {
                assert!((a[k] - 2.0 * b[k] + c[k]).abs() < 1e-9, "column {k} at {base}");
            }
        }
    }

    #[test]
    fn polynomial_continues_linearly() {
        let x = Points::scalar(vec![-1.0, 0.0, 1.0]);
        let map = FeatureMap::fit(&x, BasisSpec::Polynomial { degree: 3 }).unwrap();
        let (a, b, c) = (map.transform(&[2.0]), map.transform(&[3.0]), map.transform(&[4.0]));
        for k in 0..a.len() {
            assert!((a[k] - 2.0 * b[k] + c[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_uses_ridge() {
        let design = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let fit = least_squares(&design, &y).unwrap();
        assert!(fit.ridged);
        let pred = &design * &fit.beta;
        assert!(pred.iter().all(|p| (p - 1.0).abs() < 1e-6));
    }
}
