//! Per-axis least-squares fits from running sums.
//!
//! Each slope is the simple-regression slope of `y` on one pixel,
//! `alpha_i = (S_xy/N - c_i Y) / (S_xx/N - c_i^2)`, computed independently per
//! axis. Sums are additive, so the sums of one child block follow from the
//! parent's by subtraction.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::space::Sample;

/// Relative floor under which an axis variance counts as zero.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Sufficient statistics of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSums {
    pub n: usize,
    pub sum_x: Vec<f64>,
    pub sum_y: f64,
    pub sum_x2: Vec<f64>,
    pub sum_xy: Vec<f64>,
}

impl BlockSums {
    pub fn empty(dims: usize) -> Self {
        Self {
            n: 0,
            sum_x: vec![0.0; dims],
            sum_y: 0.0,
            sum_x2: vec![0.0; dims],
            sum_xy: vec![0.0; dims],
        }
    }

    pub fn from_samples<'a>(
        dims: usize,
        samples: impl IntoIterator<Item = &'a Sample>,
    ) -> Result<Self> {
        let mut sums = Self::empty(dims);
        for s in samples {
            sums.accumulate(s)?;
        }
        Ok(sums)
    }

    pub fn dims(&self) -> usize {
        self.sum_x.len()
    }

    /// Adds one sample, reading cached squares and products when the sample has them.
    pub fn accumulate(&mut self, sample: &Sample) -> Result<()> {
        check_len(self.dims(), sample.dims())?;
        self.n += 1;
        self.sum_y += sample.y;
        for i in 0..self.dims() {
            self.sum_x[i] += sample.x[i];
            self.sum_x2[i] += sample.x_sq(i);
            self.sum_xy[i] += sample.x_y(i);
        }
        Ok(())
    }

    /// Inverse of [`accumulate`](Self::accumulate). Exact only when the
    /// intermediate sums are exactly representable.
    pub fn remove(&mut self, sample: &Sample) -> Result<()> {
        check_len(self.dims(), sample.dims())?;
        if self.n == 0 {
            return Err(Error::NegativeCount {
                parent: 0,
                child: 1,
            });
        }
        self.n -= 1;
        self.sum_y -= sample.y;
        for i in 0..self.dims() {
            self.sum_x[i] -= sample.x[i];
            self.sum_x2[i] -= sample.x_sq(i);
            self.sum_xy[i] -= sample.x_y(i);
        }
        if self.n == 0 {
            *self = Self::empty(self.dims());
        }
        Ok(())
    }

    /// Sums of the sibling block: `parent - child`, field by field.
    pub fn subtract(&self, child: &BlockSums) -> Result<BlockSums> {
        check_len(self.dims(), child.dims())?;
        if child.n > self.n {
            return Err(Error::NegativeCount {
                parent: self.n,
                child: child.n,
            });
        }
        if child.n == self.n {
            return Ok(Self::empty(self.dims()));
        }
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, c)| p - c).collect();
        Ok(BlockSums {
            n: self.n - child.n,
            sum_x: diff(&self.sum_x, &child.sum_x),
            sum_y: self.sum_y - child.sum_y,
            sum_x2: diff(&self.sum_x2, &child.sum_x2),
            sum_xy: diff(&self.sum_xy, &child.sum_xy),
        })
    }

    /// Field-wise sum of two disjoint blocks.
    pub fn merge(&self, other: &BlockSums) -> Result<BlockSums> {
        check_len(self.dims(), other.dims())?;
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, c)| p + c).collect();
        Ok(BlockSums {
            n: self.n + other.n,
            sum_x: add(&self.sum_x, &other.sum_x),
            sum_y: self.sum_y + other.sum_y,
            sum_x2: add(&self.sum_x2, &other.sum_x2),
            sum_xy: add(&self.sum_xy, &other.sum_xy),
        })
    }

    /// `S_xx/N - c_i^2`, the population variance of axis `i`.
    pub fn axis_variance(&self, i: usize) -> f64 {
        let n = self.n as f64;
        let c = self.sum_x[i] / n;
        self.sum_x2[i] / n - c * c
    }

    /// Fits the per-axis model. Axes whose variance falls below
    /// `DEGENERACY_TOLERANCE * w_i^2` get a zero slope.
    pub fn fit(&self, axis_max: &[f64]) -> Result<LeafModel> {
        check_len(self.dims(), axis_max.len())?;
        if self.n < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                have: self.n,
            });
        }
        let n = self.n as f64;
        let mean_y = self.sum_y / n;
        let centroid: Vec<f64> = self.sum_x.iter().map(|s| s / n).collect();
        let alpha = (0..self.dims())
            .map(|i| {
                let c = centroid[i];
                let denom = self.sum_x2[i] / n - c * c;
                if denom < DEGENERACY_TOLERANCE * axis_max[i] * axis_max[i] {
                    0.0
                } else {
                    (self.sum_xy[i] / n - c * mean_y) / denom
                }
            })
            .collect();
        Ok(LeafModel {
            alpha,
            centroid,
            mean_y,
            rms: 0.0,
        })
    }
}

/// Linear model `F(x) = sum_i alpha_i (x_i - c_i) + Y` on a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafModel {
    pub alpha: Vec<f64>,
    pub centroid: Vec<f64>,
    pub mean_y: f64,
    pub rms: f64,
}

impl LeafModel {
    pub fn constant(dims: usize, value: f64) -> Self {
        Self {
            alpha: vec![0.0; dims],
            centroid: vec![0.0; dims],
            mean_y: value,
            rms: 0.0,
        }
    }

    pub fn dims(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(&self.centroid)
            .zip(x)
            .map(|((a, c), v)| a * (v - c))
            .sum::<f64>()
            + self.mean_y
    }

    /// Zeroes the slope of every axis not flagged in `active`.
    pub fn restrict_to(&mut self, active: &[bool]) {
        for (a, keep) in self.alpha.iter_mut().zip(active) {
            if !keep {
                *a = 0.0;
            }
        }
    }

    /// Shifts the model so that `F'(x + offset) = F(x)`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        Self {
            centroid: self
                .centroid
                .iter()
                .zip(offset)
                .map(|(c, o)| c + o)
                .collect(),
            ..self.clone()
        }
    }
}

/// Root mean square residual of `model` over a nonempty set of samples.
pub fn rms_error<'a>(
    model: &LeafModel,
    samples: impl IntoIterator<Item = &'a Sample>,
) -> Result<f64> {
    let mut n = 0usize;
    let mut sq = 0.0;
    for s in samples {
        check_len(model.dims(), s.dims())?;
        let r = model.predict(&s.x) - s.y;
        sq += r * r;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyBlock);
    }
    Ok((sq / n as f64).sqrt())
}

/// Two-pass form of the same slopes: `sum (x_i - c_i) y / sum (x_i - c_i)^2`.
/// Degenerate axes get zero, matching [`BlockSums::fit`].
pub fn centered_slopes(samples: &[&Sample], axis_max: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            have: samples.len(),
        });
    }
    let d = axis_max.len();
    let n = samples.len() as f64;
    let mut centroid = vec![0.0; d];
    for s in samples {
        check_len(d, s.dims())?;
        for (c, v) in centroid.iter_mut().zip(&s.x) {
            *c += v;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    Ok((0..d)
        .map(|i| {
            let (num, den) = samples.iter().fold((0.0, 0.0), |(num, den), s| {
                let dx = s.x[i] - centroid[i];
                (num + dx * s.y, den + dx * dx)
            });
            if den / n < DEGENERACY_TOLERANCE * axis_max[i] * axis_max[i] {
                0.0
            } else {
                num / den
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::extend_sample;
    use proptest::prelude::*;

    fn grid_samples() -> Vec<Sample> {
        let mut out = Vec::new();
        for x1 in [0.0, 1.0] {
            for x2 in [0.0, 1.0] {
                out.push(extend_sample(vec![x1, x2], 2.0 * x1 + 3.0 * x2 + 1.0));
            }
        }
        out
    }

    /// Solves the full normal equations by Gaussian elimination with partial
    /// pivoting; used only to compare against the per-axis slopes.
    #[allow(clippy::needless_range_loop)]
    fn normal_equations(samples: &[Sample]) -> Vec<f64> {
        let d = samples[0].dims() + 1;
        let mut a = vec![vec![0.0; d + 1]; d];
        for s in samples {
            let row: Vec<f64> = s.x.iter().copied().chain([1.0]).collect();
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += row[i] * row[j];
                }
                a[i][d] += row[i] * s.y;
            }
        }
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..d {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=d {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..d).map(|i| a[i][d] / a[i][i]).collect()
    }

    #[test]
    fn accumulate_example() {
        let mut sums = BlockSums::empty(2);
        sums.accumulate(&Sample::new(vec![1.0, 2.0], 3.0)).unwrap();
        assert_eq!(sums.n, 1);
        assert_eq!(sums.sum_x, vec![1.0, 2.0]);
        assert_eq!(sums.sum_y, 3.0);
        assert_eq!(sums.sum_x2, vec![1.0, 4.0]);
        assert_eq!(sums.sum_xy, vec![3.0, 6.0]);
    }

    #[test]
    fn accumulate_zero_sample_only_counts() {
        let mut sums = BlockSums::empty(3);
        sums.accumulate(&extend_sample(vec![0.0; 3], 0.0)).unwrap();
        assert_eq!(sums.n, 1);
        assert_eq!(
            sums,
            BlockSums {
                n: 1,
                ..BlockSums::empty(3)
            }
        );
    }

    #[test]
    fn accumulate_rejects_wrong_dimension() {
        let mut sums = BlockSums::empty(2);
        assert!(sums.accumulate(&Sample::new(vec![1.0], 0.0)).is_err());
    }

    #[test]
    fn accumulation_order_does_not_matter_on_integers() {
        let s1 = extend_sample(vec![1.0, 5.0], 2.0);
        let s2 = extend_sample(vec![3.0, -2.0], 7.0);
        let a = BlockSums::from_samples(2, [&s1, &s2]).unwrap();
        let b = BlockSums::from_samples(2, [&s2, &s1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subtract_examples() {
        let s: Vec<Sample> = (0..3)
            .map(|i| extend_sample(vec![i as f64, (2 * i) as f64 - 1.0], (i * i) as f64))
            .collect();
        let parent = BlockSums::from_samples(2, &s).unwrap();
        assert_eq!(parent.subtract(&parent).unwrap(), BlockSums::empty(2));
        assert_eq!(parent.subtract(&BlockSums::empty(2)).unwrap(), parent);
        let child = BlockSums::from_samples(2, &s[..1]).unwrap();
        let sibling = BlockSums::from_samples(2, &s[1..]).unwrap();
        assert_eq!(parent.subtract(&child).unwrap(), sibling);
        assert!(matches!(
            child.subtract(&parent),
            Err(Error::NegativeCount { .. })
        ));
    }

    #[test]
    fn add_then_remove_restores() {
        let s = extend_sample(vec![2.0, 4.0], -1.0);
        let base = BlockSums::from_samples(2, [&extend_sample(vec![1.0, 1.0], 1.0)]).unwrap();
        let mut sums = base.clone();
        sums.accumulate(&s).unwrap();
        sums.remove(&s).unwrap();
        assert_eq!(sums, base);
    }

    #[test]
    fn fit_on_orthogonal_grid() {
        let s = grid_samples();
        let model = BlockSums::from_samples(2, &s)
            .unwrap()
            .fit(&[1.0, 1.0])
            .unwrap();
        assert_eq!(model.alpha, vec![2.0, 3.0]);
        assert_eq!(model.mean_y, 3.5);
        assert_eq!(model.centroid, vec![0.5, 0.5]);
        // the uncorrelated grid is exactly where per-axis and joint fits coincide
        let joint = normal_equations(&s);
        assert!((joint[0] - 2.0).abs() < 1e-12 && (joint[1] - 3.0).abs() < 1e-12);
        assert!((joint[2] - 1.0).abs() < 1e-12);
        assert!(rms_error(&model, &s).unwrap() < 1e-12);
    }

    #[test]
    fn per_axis_slopes_differ_from_joint_fit_on_correlated_inputs() {
        // x2 tracks x1 closely, y depends on x1 only
        let s: Vec<Sample> = [(0.0, 0.0), (1.0, 1.0), (2.0, 1.5), (3.0, 3.5)]
            .iter()
            .map(|&(a, b)| extend_sample(vec![a, b], a))
            .collect();
        let model = BlockSums::from_samples(2, &s)
            .unwrap()
            .fit(&[4.0, 4.0])
            .unwrap();
        let joint = normal_equations(&s);
        assert!((joint[0] - 1.0).abs() < 1e-9 && joint[1].abs() < 1e-9);
        assert!(
            model.alpha[1] > 0.5,
            "per-axis slope picks up the correlated axis"
        );
    }

    #[test]
    fn fit_constant_output() {
        let s: Vec<Sample> = (0..5)
            .map(|i| extend_sample(vec![i as f64], 4.25))
            .collect();
        let model = BlockSums::from_samples(1, &s).unwrap().fit(&[5.0]).unwrap();
        assert_eq!(model.alpha, vec![0.0]);
        assert_eq!(model.mean_y, 4.25);
    }

    #[test]
    fn fit_zero_variance_axis() {
        let s: Vec<Sample> = (0..5)
            .map(|i| extend_sample(vec![5.0, i as f64], (i * 3) as f64))
            .collect();
        let model = BlockSums::from_samples(2, &s)
            .unwrap()
            .fit(&[10.0, 10.0])
            .unwrap();
        assert_eq!(model.alpha[0], 0.0);
        assert!((model.alpha[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_needs_two_samples() {
        let sums = BlockSums::from_samples(1, [&extend_sample(vec![1.0], 1.0)]).unwrap();
        assert!(matches!(
            sums.fit(&[1.0]),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn rms_examples() {
        let model = LeafModel::constant(1, 1.0);
        let s = vec![Sample::new(vec![0.0], 0.0), Sample::new(vec![1.0], 2.0)];
        assert_eq!(rms_error(&model, &s).unwrap(), 1.0);
        let rev: Vec<Sample> = s.iter().rev().cloned().collect();
        assert_eq!(rms_error(&model, &rev).unwrap(), 1.0);
        assert!(matches!(rms_error(&model, &[]), Err(Error::EmptyBlock)));
    }

    #[test]
    fn model_is_exact_at_centroid() {
        let model = LeafModel {
            alpha: vec![0.3, -7.1],
            centroid: vec![0.123, 4.56],
            mean_y: 2.5,
            rms: 0.0,
        };
        assert_eq!(model.predict(&model.centroid.clone()), 2.5);
    }

    fn block() -> impl Strategy<Value = Vec<Sample>> {
        prop::collection::vec(
            (prop::collection::vec(0.0f64..10.0, 3), -5.0f64..5.0),
            3..40,
        )
        .prop_map(|rows| rows.into_iter().map(|(x, y)| extend_sample(x, y)).collect())
    }

    proptest! {
        #[test]
        fn running_and_centered_slopes_agree(s in block()) {
            let w = [10.0; 3];
            let model = BlockSums::from_samples(3, &s).unwrap().fit(&w).unwrap();
            let refs: Vec<&Sample> = s.iter().collect();
            let centered = centered_slopes(&refs, &w).unwrap();
            for (a, b) in model.alpha.iter().zip(&centered) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-3));
            }
        }

        #[test]
        fn denominator_is_scaled_sample_variance(s in block()) {
            let sums = BlockSums::from_samples(3, &s).unwrap();
            let n = s.len() as f64;
            for i in 0..3 {
                let mean = s.iter().map(|p| p.x[i]).sum::<f64>() / n;
                let var = s.iter().map(|p| (p.x[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let scaled = sums.axis_variance(i) * n / (n - 1.0);
                prop_assert!((scaled - var).abs() <= 1e-9 * var.max(1.0));
            }
        }

        #[test]
        fn fit_is_translation_consistent(s in block(), shift in prop::collection::vec(-3.0f64..3.0, 3)) {
            let w = [10.0; 3];
            let model = BlockSums::from_samples(3, &s).unwrap().fit(&w).unwrap();
            let moved = crate::space::recenter(&s, &shift).unwrap();
            let moved_model = BlockSums::from_samples(3, &moved).unwrap().fit(&w).unwrap();
            for (a, b) in model.alpha.iter().zip(&moved_model.alpha) {
                prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0));
            }
            for (orig, m) in s.iter().zip(&moved) {
                let (p, q) = (model.predict(&orig.x), moved_model.predict(&m.x));
                prop_assert!((p - q).abs() <= 1e-7 * p.abs().max(1.0));
            }
        }

        #[test]
        fn sibling_sums_add_up(s in block(), cut in 0usize..40) {
            let cut = cut.min(s.len());
            let parent = BlockSums::from_samples(3, &s).unwrap();
            let left = BlockSums::from_samples(3, &s[..cut]).unwrap();
            let right = BlockSums::from_samples(3, &s[cut..]).unwrap();
            let merged = left.merge(&right).unwrap();
            prop_assert_eq!(merged.n, parent.n);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
            prop_assert!(close(merged.sum_y, parent.sum_y));
            for i in 0..3 {
                prop_assert!(close(merged.sum_x[i], parent.sum_x[i]));
                prop_assert!(close(merged.sum_x2[i], parent.sum_x2[i]));
                prop_assert!(close(merged.sum_xy[i], parent.sum_xy[i]));
            }
        }
    }
}
