//! Exact search over closed halfspaces `1(ρ0 + ρ1ᵀx >= 0)`.
//!
//! Every halfspace labeling that is neither empty nor full agrees, off some
//! hyperplane through `d` affinely independent data points, with that
//! hyperplane's sign; on the hyperplane it is again a halfspace labeling one
//! dimension down. Enumerating those hyperplanes in both orientations and
//! recursing on the points lying on each gives the optimum in `O(n^{d+1})`.

use std::collections::HashSet;

use super::candidates::{Bitset, CandidateSet};
use super::threshold::ThresholdScan;
use super::{Rule, RuleDescription};
use crate::data::Points;
use crate::error::Result;

/// `normal · x + offset >= 0`.
#[derive(Debug, Clone, PartialEq)]
struct Halfspace {
    normal: Vec<f64>,
    offset: f64,
}

impl Halfspace {
    fn constant(dim: usize, on: bool) -> Self {
        Self { normal: vec![0.0; dim], offset: if on { 1.0 } else { -1.0 } }
    }

    fn at(&self, x: &[f64]) -> f64 {
        self.offset + self.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
struct Solution {
    sum: f64,
    labels: Vec<bool>,
    halfspace: Halfspace,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of the affine hull directions of `pts` around `pts[0]`.
fn affine_basis(pts: &[f64], d: usize, tol: f64) -> Vec<Vec<f64>> {
    let m = pts.len() / d;
    let origin = &pts[..d];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 1..m {
        if basis.len() == d {
            break;
        }
        let mut v: Vec<f64> = pts[i * d..(i + 1) * d].iter().zip(origin).map(|(a, b)| a - b).collect();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > tol {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Unit normal of the hyperplane through `d` points, if they are affinely independent.
fn hyperplane_normal(pts: &[f64], d: usize, idx: &[usize], tol: f64) -> Option<Vec<f64>> {
    let p0 = &pts[idx[0] * d..(idx[0] + 1) * d];
    let mut rows: Vec<Vec<f64>> = idx[1..]
        .iter()
        .map(|&i| pts[i * d..(i + 1) * d].iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    // row echelon form with partial pivoting
    let mut pivots = Vec::with_capacity(d - 1);
    let mut r = 0;
    for col in 0..d {
        if r == rows.len() {
            break;
        }
        let (best, mag) = (r..rows.len())
            .map(|i| (i, rows[i][col].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= tol {
            continue;
        }
        rows.swap(r, best);
        for i in 0..rows.len() {
            if i != r {
                let f = rows[i][col] / rows[r][col];
                if f != 0.0 {
                    let pivot_row = rows[r].clone();
                    rows[i].iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= f * y);
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    if pivots.len() < d - 1 {
        return None;
    }
    let free = (0..d).find(|c| !pivots.contains(c)).expect("one free column");
    let mut n = vec![0.0; d];
    n[free] = 1.0;
    for (row, &col) in rows.iter().zip(&pivots) {
        n[col] = -row[free] / row[col];
    }
    let norm = dot(&n, &n).sqrt();
    n.iter_mut().for_each(|x| *x /= norm);
    Some(n)
}

fn next_combination(c: &mut [usize], m: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < m - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn tolerance(pts: &[f64], d: usize) -> f64 {
    let mut scale: f64 = 0.0;
    for j in 0..d {
        let (lo, hi) = pts.iter().skip(j).step_by(d).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        scale = scale.max(hi - lo);
    }
    1e-9 * scale.max(1e-300)
}

/// Projects onto an affine basis: coordinates `B (x - origin)`.
fn project(pts: &[f64], d: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let origin = &pts[..d];
    let mut out = Vec::with_capacity(pts.len() / d * basis.len());
    for p in pts.chunks(d) {
        let diff: Vec<f64> = p.iter().zip(origin).map(|(a, b)| a - b).collect();
        for b in basis {
            out.push(dot(&diff, b));
        }
    }
    out
}

/// Lifts a halfspace on projected coordinates back to the original space.
fn lift(h: &Halfspace, origin: &[f64], basis: &[Vec<f64>]) -> Halfspace {
    let d = origin.len();
    let mut normal = vec![0.0; d];
    for (coef, b) in h.normal.iter().zip(basis) {
        normal.iter_mut().zip(b).for_each(|(x, y)| *x += coef * y);
    }
    let offset = h.offset - dot(&normal, origin);
    Halfspace { normal, offset }
}

fn sum_labels(w: &[f64], labels: &[bool]) -> f64 {
    w.iter().zip(labels).filter(|(_, &l)| l).map(|(w, _)| w).sum()
}

/// Best halfspace labeling of the `w.len()` points in `pts` (flat, dimension `d`).
fn best(pts: &[f64], d: usize, w: &[f64], tol: f64) -> Solution {
    let m = w.len();
    let total: f64 = w.iter().sum();
    let constant = |on: bool| Solution {
        sum: if on { total } else { 0.0 },
        labels: vec![on; m],
        halfspace: Halfspace::constant(d, on),
    };
    if m == 0 {
        return constant(false);
    }
    let basis = affine_basis(pts, d, tol);
    let r = basis.len();
    if r == 0 {
        return if total > 0.0 { constant(true) } else { constant(false) };
    }
    if r < d {
        let sub = best(&project(pts, d, &basis), r, w, tol);
        return Solution { sum: sub.sum, halfspace: lift(&sub.halfspace, &pts[..d], &basis), labels: sub.labels };
    }
    if d == 1 {
        let scan = ThresholdScan::new(pts).maximize(w);
        let halfspace = match scan.rule {
            Rule::Threshold { cutoff: None, .. } => Halfspace::constant(1, false),
            Rule::Threshold { direction: super::Direction::Ge, cutoff: Some(t) } => Halfspace { normal: vec![1.0], offset: -t },
            Rule::Threshold { direction: super::Direction::Le, cutoff: Some(t) } => Halfspace { normal: vec![-1.0], offset: t },
            _ => unreachable!("threshold scan returns threshold rules"),
        };
        let labels: Vec<bool> = pts.iter().map(|&x| halfspace.at(&[x]) >= 0.0).collect();
        return Solution { sum: sum_labels(w, &labels), labels, halfspace };
    }

    let mut incumbent = constant(false);
    if total > incumbent.sum {
        incumbent = constant(true);
    }
    let mut winner: Option<(Vec<f64>, f64, f64, Solution, Vec<usize>)> = None;
    let mut comb: Vec<usize> = (0..d).collect();
    let mut h = vec![0.0; m];
    let mut on_pts = Vec::new();
    let mut on_w = Vec::new();
    let mut on_idx = Vec::new();
    loop {
        if let Some(normal) = hyperplane_normal(pts, d, &comb, tol) {
            let c = -dot(&normal, &pts[comb[0] * d..(comb[0] + 1) * d]);
            let (mut pos, mut neg) = (0.0, 0.0);
            on_pts.clear();
            on_w.clear();
            on_idx.clear();
            for k in 0..m {
                h[k] = c + dot(&normal, &pts[k * d..(k + 1) * d]);
                if h[k] > tol {
                    pos += w[k];
                } else if h[k] < -tol {
                    neg += w[k];
                } else {
                    on_pts.extend_from_slice(&pts[k * d..(k + 1) * d]);
                    on_w.push(w[k]);
                    on_idx.push(k);
                }
            }
            let sub = best(&on_pts, d, &on_w, tol);
            for (sign, off) in [(1.0, pos), (-1.0, neg)] {
                let s = off + sub.sum;
                if s > incumbent.sum {
                    incumbent.sum = s;
                    winner = Some((normal.clone(), c, sign, sub.clone(), on_idx.clone()));
                }
            }
        }
        if !next_combination(&mut comb, m) {
            break;
        }
    }
    let Some((normal, c, sign, sub, on_idx)) = winner else {
        return incumbent;
    };
    // h + ε g keeps every off-plane sign and lets g decide on the plane.
    let hs = Halfspace { normal: normal.iter().map(|v| sign * v).collect(), offset: sign * c };
    let mut on_mask = vec![false; m];
    on_idx.iter().for_each(|&k| on_mask[k] = true);
    let (mut min_h, mut max_g) = (f64::INFINITY, 0.0f64);
    for k in 0..m {
        if !on_mask[k] {
            let x = &pts[k * d..(k + 1) * d];
            min_h = min_h.min(hs.at(x).abs());
            max_g = max_g.max(sub.halfspace.at(x).abs());
        }
    }
    let eps = if max_g > 0.0 && min_h.is_finite() { 0.5 * min_h / max_g } else { 1.0 };
    let halfspace = Halfspace {
        normal: hs.normal.iter().zip(&sub.halfspace.normal).map(|(a, b)| a + eps * b).collect(),
        offset: hs.offset + eps * sub.halfspace.offset,
    };
    let mut labels = vec![false; m];
    let mut sub_pos = 0;
    for k in 0..m {
        labels[k] = if on_mask[k] {
            sub_pos += 1;
            sub.labels[sub_pos - 1]
        } else {
            hs.at(&pts[k * d..(k + 1) * d]) > 0.0
        };
    }
    let mut halfspace = halfspace;
    recentre(&mut halfspace, pts, d, &labels);
    Solution { sum: incumbent.sum, labels, halfspace }
}

/// Shifts the offset to the midpoint of the gap between the two classes.
fn recentre(h: &mut Halfspace, pts: &[f64], d: usize, labels: &[bool]) {
    let (mut t1, mut t0) = (f64::INFINITY, f64::NEG_INFINITY);
    for (k, x) in pts.chunks(d).enumerate() {
        let v = h.at(x);
        if labels[k] {
            t1 = t1.min(v);
        } else {
            t0 = t0.max(v);
        }
    }
    if !(t1.is_finite() && t0.is_finite()) {
        return;
    }
    if t1 > t0 {
        h.offset -= 0.5 * (t1 + t0);
    } else {
        log::warn!("halfspace margin lost to rounding ({t1} <= {t0})");
    }
}

/// Every halfspace labeling of `pts`, possibly with repeats.
fn labelings(pts: &[f64], d: usize, tol: f64, sink: &mut dyn FnMut(Vec<bool>) -> Result<()>) -> Result<()> {
    let m = pts.len() / d;
    sink(vec![false; m])?;
    sink(vec![true; m])?;
    if m == 0 {
        return Ok(());
    }
    let basis = affine_basis(pts, d, tol);
    let r = basis.len();
    if r == 0 {
        return Ok(());
    }
    if r < d {
        return labelings(&project(pts, d, &basis), r, tol, sink);
    }
    if d == 1 {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| pts[a].total_cmp(&pts[b]));
        for k in 0..m {
            let t = pts[order[k]];
            sink(pts.iter().map(|&x| x >= t).collect())?;
            sink(pts.iter().map(|&x| x <= t).collect())?;
        }
        return Ok(());
    }
    let mut comb: Vec<usize> = (0..d).collect();
    loop {
        if let Some(normal) = hyperplane_normal(pts, d, &comb, tol) {
            let c = -dot(&normal, &pts[comb[0] * d..(comb[0] + 1) * d]);
            let h: Vec<f64> = (0..m).map(|k| c + dot(&normal, &pts[k * d..(k + 1) * d])).collect();
            let on: Vec<usize> = (0..m).filter(|&k| h[k].abs() <= tol).collect();
            let on_pts: Vec<f64> = on.iter().flat_map(|&k| pts[k * d..(k + 1) * d].iter().copied()).collect();
            let mut subs: HashSet<Vec<bool>> = HashSet::new();
            labelings(&on_pts, d, tol, &mut |l| {
                subs.insert(l);
                Ok(())
            })?;
            for sign in [1.0, -1.0] {
                for s in &subs {
                    let mut label: Vec<bool> = h.iter().map(|&v| sign * v > tol).collect();
                    for (pos, &k) in on.iter().enumerate() {
                        label[k] = s[pos];
                    }
                    sink(label)?;
                }
            }
        }
        if !next_combination(&mut comb, m) {
            break;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub(crate) struct LinearSearch {
    coords: Vec<f64>,
    dim: usize,
    tol: f64,
}

impl LinearSearch {
    pub(crate) fn new(xs: &Points) -> Self {
        let coords: Vec<f64> = xs.rows().flat_map(|r| r.iter().copied()).collect();
        let tol = tolerance(&coords, xs.dim());
        Self { coords, dim: xs.dim(), tol }
    }

    pub(crate) fn maximize(&self, w: &[f64]) -> Result<RuleDescription> {
        let mut sol = best(&self.coords, self.dim, w, self.tol);
        let n = w.len();
        let any = sol.labels.iter().any(|&l| l);
        let all = sol.labels.iter().all(|&l| l);
        if !any || all {
            sol.halfspace = Halfspace::constant(self.dim, all && any);
        } else {
            recentre(&mut sol.halfspace, &self.coords, self.dim, &sol.labels);
        }
        Ok(RuleDescription {
            rule: Rule::Hyperplane { intercept: sol.halfspace.offset, coefficients: sol.halfspace.normal },
            value: sol.sum / n as f64,
        })
    }

    pub(crate) fn candidates(&self) -> Result<CandidateSet> {
        let mut set = CandidateSet::new();
        let n = self.coords.len() / self.dim;
        labelings(&self.coords, self.dim, self.tol, &mut |l| set.push(Bitset::from_fn(n, |i| l[i])))?;
        Ok(set)
    }
}
