//! Bounding hyper-rectangles and splitting hyperplanes.
//!
//! A hyperplane through the midpoint `m` of a block's bounding box has the form
//! `S(x) = sum_i alpha_i (x_i - m_i) = 0`. Over the box, the hyperplane can
//! reach `|x_k - m_k| <= sum_{i != k} |alpha_i| h_i / |alpha_k|` on axis `k`;
//! the tilt constraint `tau |alpha_k| h_k >= sum_{i != k} |alpha_i| h_i` keeps that
//! reach within a `tau` fraction of the half-width.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Axis-parallel box `[m_i - h_i, m_i + h_i]` with a mask of retained axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingHR {
    pub mid: Vec<f64>,
    pub half: Vec<f64>,
    #[serde(with = "axis_set")]
    pub active: Vec<bool>,
}

impl BoundingHR {
    /// Box from per-axis bounds, with every axis active.
    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_len(lo.len(), hi.len())?;
        Ok(Self {
            mid: lo.iter().zip(hi).map(|(a, b)| (a + b) / 2.0).collect(),
            half: lo
                .iter()
                .zip(hi)
                .map(|(a, b)| ((b - a) / 2.0).max(0.0))
                .collect(),
            active: vec![true; lo.len()],
        })
    }

    pub fn dims(&self) -> usize {
        self.mid.len()
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.mid[i] - self.half[i]
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.mid[i] + self.half[i]
    }

    /// Replaces the interval of axis `i`.
    pub fn set_interval(&mut self, i: usize, lo: f64, hi: f64) {
        self.mid[i] = (lo + hi) / 2.0;
        self.half[i] = ((hi - lo) / 2.0).max(0.0);
    }

    /// Intersects axis `i` with `[lo, hi]`, never widening it.
    pub fn clip(&mut self, i: usize, lo: f64, hi: f64) {
        let (a, b) = (self.lo(i).max(lo), self.hi(i).min(hi));
        if a <= self.lo(i) && b >= self.hi(i) {
            return;
        }
        let half = self.half[i];
        if a <= b {
            self.set_interval(i, a, b);
        } else {
            let p = a.min(self.hi(i));
            self.set_interval(i, p, p);
        }
        // recomputing from the endpoints can round the width up by an ulp
        self.half[i] = self.half[i].min(half);
    }

    /// Containment on active axes with an absolute slack.
    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        (0..self.dims())
            .all(|i| !self.active[i] || (x[i] >= self.lo(i) - slack && x[i] <= self.hi(i) + slack))
    }

    pub fn translated(&self, offset: &[f64]) -> Self {
        Self {
            mid: self.mid.iter().zip(offset).map(|(m, o)| m + o).collect(),
            ..self.clone()
        }
    }
}

/// Serializes the active mask as a sorted list of axis indices.
mod axis_set {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct AxisSet {
        dims: usize,
        axes: Vec<usize>,
    }

    pub fn serialize<S: Serializer>(mask: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let axes = mask
            .iter()
            .enumerate()
            .filter_map(|(i, on)| on.then_some(i))
            .collect();
        AxisSet {
            dims: mask.len(),
            axes,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let set = AxisSet::deserialize(d)?;
        let mut mask = vec![false; set.dims];
        for i in set.axes {
            if i >= set.dims {
                return Err(serde::de::Error::custom(format!("axis {i} out of range")));
            }
            mask[i] = true;
        }
        Ok(mask)
    }
}

/// Oriented hyperplane `S(x) = sum_i alpha_i (x_i - anchor_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub alpha: Vec<f64>,
    pub anchor: Vec<f64>,
    pub grid: (usize, usize),
}

impl Hyperplane {
    pub fn new(alpha: Vec<f64>, anchor: Vec<f64>, grid: (usize, usize)) -> Result<Self> {
        check_len(alpha.len(), anchor.len())?;
        check_len(grid.0 * grid.1, alpha.len())?;
        Ok(Self {
            alpha,
            anchor,
            grid,
        })
    }

    /// Cut perpendicular to axis `k` at `anchor_k`.
    pub fn axis_parallel(k: usize, anchor: Vec<f64>, grid: (usize, usize)) -> Self {
        let mut alpha = vec![0.0; anchor.len()];
        alpha[k] = 1.0;
        Self {
            alpha,
            anchor,
            grid,
        }
    }

    pub fn dims(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(&self.anchor)
            .zip(x)
            .map(|((a, m), v)| a * (v - m))
            .sum()
    }

    pub fn nonzero(&self) -> usize {
        self.alpha.iter().filter(|a| **a != 0.0).count()
    }

    /// `sum_i |alpha_i| h_i` over active axes: the largest `|S|` on the box.
    pub fn reach(&self, hr: &BoundingHR) -> f64 {
        importance(&self.alpha, hr).iter().sum()
    }

    pub fn translated(&self, offset: &[f64]) -> Self {
        Self {
            anchor: self.anchor.iter().zip(offset).map(|(m, o)| m + o).collect(),
            ..self.clone()
        }
    }
}

/// `|alpha_i| h_i` on active axes, zero elsewhere. The change bound
/// `beta_i = |2 alpha_i h_i|` is twice this.
pub fn importance(alpha: &[f64], hr: &BoundingHR) -> Vec<f64> {
    alpha
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if hr.active[i] {
                a.abs() * hr.half[i]
            } else {
                0.0
            }
        })
        .collect()
}

/// `beta_i = |2 alpha_i h_i|`.
pub fn change_bound(alpha: &[f64], hr: &BoundingHR) -> Vec<f64> {
    importance(alpha, hr).into_iter().map(|v| 2.0 * v).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v <= b => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// Extremes of `alpha_k (x_k - m_k)` over points of the hyperplane whose other
/// coordinates range over the box: `(-R, R)` with `R = sum_{i != k} |alpha_i| h_i`.
pub fn corner_extremes(hp: &Hyperplane, hr: &BoundingHR, k: usize) -> (f64, f64) {
    let r: f64 = importance(&hp.alpha, hr)
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, v)| v)
        .sum();
    (-r, r)
}

/// Odd-sized stencil applied to hyperplane coefficients laid out on the pixel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "kernel shape {rows}x{cols} must be odd in both directions"
            )));
        }
        check_len(rows * cols, weights.len())?;
        Ok(Self {
            rows,
            cols,
            weights,
        })
    }

    pub fn identity() -> Self {
        Self {
            rows: 1,
            cols: 1,
            weights: vec![1.0],
        }
    }

    /// 3x3 stencil keeping half of a coefficient and handing 1/16 to each neighbor.
    pub fn spread() -> Self {
        let mut weights = vec![1.0 / 16.0; 9];
        weights[4] = 0.5;
        Self {
            rows: 3,
            cols: 3,
            weights,
        }
    }

    pub fn uniform3() -> Self {
        Self {
            rows: 3,
            cols: 3,
            weights: vec![1.0 / 9.0; 9],
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Self::spread()
    }
}

/// 2-D convolution of the coefficient grid with zero padding. The anchor is
/// untouched, so the hyperplane still passes through it.
pub fn convolve_hp(hp: &Hyperplane, kernel: &Kernel) -> Result<Hyperplane> {
    let (rows, cols) = hp.grid;
    check_len(rows * cols, hp.dims())?;
    let (kr, kc) = (kernel.rows as isize / 2, kernel.cols as isize / 2);
    let mut out = vec![0.0; hp.dims()];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let mut acc = 0.0;
            for i in 0..kernel.rows as isize {
                for j in 0..kernel.cols as isize {
                    let (sr, sc) = (r - (i - kr), c - (j - kc));
                    if (0..rows as isize).contains(&sr) && (0..cols as isize).contains(&sc) {
                        acc += kernel.at(i as usize, j as usize)
                            * hp.alpha[sr as usize * cols + sc as usize];
                    }
                }
            }
            out[r as usize * cols + c as usize] = acc;
        }
    }
    Ok(Hyperplane {
        alpha: out,
        anchor: hp.anchor.clone(),
        grid: hp.grid,
    })
}

/// Drops coefficients whose importance is below `threshold` (removing the axis
/// for the children) and then, if `n_max` is set, zeroes the least important
/// survivors until `n_max` remain. The most important coefficient always stays.
///
/// Returns the reduced hyperplane and the active mask for the child blocks.
pub fn prune_variables(
    hp: &Hyperplane,
    hr: &BoundingHR,
    threshold: f64,
    n_max: Option<usize>,
) -> (Hyperplane, Vec<bool>) {
    let imp = importance(&hp.alpha, hr);
    let top = argmax(&imp);
    let mut alpha = hp.alpha.clone();
    let mut active = hr.active.clone();
    for i in 0..alpha.len() {
        if !hr.active[i] {
            alpha[i] = 0.0;
        } else if Some(i) != top && imp[i] < threshold {
            alpha[i] = 0.0;
            active[i] = false;
        }
    }
    if let Some(cap) = n_max {
        let cap = cap.max(1);
        let mut survivors: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] != 0.0).collect();
        if survivors.len() > cap {
            // most important first, lower index first among equals
            survivors.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
            for &i in &survivors[cap..] {
                if Some(i) != top {
                    alpha[i] = 0.0;
                }
            }
        }
    }
    (
        Hyperplane {
            alpha,
            anchor: hp.anchor.clone(),
            grid: hp.grid,
        },
        active,
    )
}

/// Picks the split axis `k` (largest importance) and scales every other
/// coefficient by a common factor so that `tau |alpha_k| h_k >= sum_{i != k} |alpha_i| h_i`.
pub fn enforce_tilt(hp: &Hyperplane, hr: &BoundingHR, tau: f64) -> Result<(Hyperplane, usize)> {
    check_len(hp.dims(), hr.dims())?;
    let imp = importance(&hp.alpha, hr);
    let k = argmax(&imp).ok_or(Error::NoActiveAxis)?;
    if imp[k] <= 0.0 || hp.alpha[k] == 0.0 {
        return Err(Error::NoActiveAxis);
    }
    let lhs = tau * imp[k];
    let rhs: f64 = imp
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, v)| v)
        .sum();
    if lhs >= rhs {
        return Ok((hp.clone(), k));
    }
    let lambda = lhs / rhs;
    let alpha = hp
        .alpha
        .iter()
        .enumerate()
        .map(|(i, a)| if i == k { *a } else { a * lambda })
        .collect();
    Ok((
        Hyperplane {
            alpha,
            anchor: hp.anchor.clone(),
            grid: hp.grid,
        },
        k,
    ))
}

/// Does the hyperplane satisfy the tilt constraint on axis `k`, up to `slack`?
pub fn tilt_holds(hp: &Hyperplane, hr: &BoundingHR, k: usize, tau: f64, slack: f64) -> bool {
    let imp = importance(&hp.alpha, hr);
    let rhs: f64 = imp
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, v)| v)
        .sum();
    tau * imp[k] >= rhs - slack
}
