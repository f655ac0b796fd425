//! Smoothly blended forests of model trees.
//!
//! Along the path of an input through a tree, every hyperplane contributes a
//! weight `W(|S(x)|)` that vanishes on the hyperplane itself; the weights are
//! combined by minimum or product and attached to the reached leaf's value.
//! A forest returns the weighted mean of its trees. A constant helper term,
//! active only where the trees' total weight drops below `mu`, keeps the
//! denominator away from zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fitting::{rms_error, BlockSums};
use crate::geometry::Hyperplane;
use crate::space::{ImageSpace, Sample};
use crate::tree::{build, BuildParams, ModelTree, SplitRecord, TreeNode, FORMAT_VERSION};

/// `3 s^2 - 2 s^3` on `[0, 1)`, saturating at 1.
#[inline]
pub fn weight_cubic(s: f64) -> f64 {
    if s < 1.0 {
        s * s * (3.0 - 2.0 * s)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// The normalized `|S|` itself.
    Abs,
    /// Smoothstep of the normalized `|S|`.
    Cubic,
    /// Smoothstep of `|S(x)| / |S(m)|` with `m` the midpoint of the reached
    /// leaf's box, so the weight is 1 at that midpoint.
    BlockScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Min,
    Product,
}

/// Normalizer applied to `|S|` before the weight function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// Divide by `sum_i |alpha_i| h_i` of the split block.
    Reach,
    /// Use `|S|` as is.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub combiner: Combiner,
    pub scale: Normalizer,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            kind: WeightKind::Cubic,
            combiner: Combiner::Product,
            scale: Normalizer::Reach,
        }
    }
}

impl WeightSpec {
    fn node_weight(&self, s: f64, scale: f64) -> f64 {
        let a = s.abs();
        let norm = match self.scale {
            Normalizer::Reach if scale > 0.0 => a / scale,
            _ => a,
        };
        match self.kind {
            WeightKind::Abs => norm,
            WeightKind::Cubic | WeightKind::BlockScaled => weight_cubic(norm),
        }
    }

    fn combine(&self, acc: f64, w: f64) -> f64 {
        match self.combiner {
            Combiner::Min => acc.min(w),
            Combiner::Product => acc * w,
        }
    }
}

/// A tree's value at a point together with its accumulated weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedValue {
    pub value: f64,
    pub weight: f64,
}

/// Routes `x` through `tree`, accumulating hyperplane weights along the path.
pub fn evaluate_tree_weighted(tree: &ModelTree, x: &[f64], spec: &WeightSpec) -> WeightedValue {
    if spec.kind == WeightKind::BlockScaled {
        let mut path: Vec<(f64, f64, &Hyperplane)> = Vec::new();
        let (model, hr) = tree.route(x, |s, scale, hp| path.push((s, scale, hp)));
        let weight = path.iter().fold(1.0, |acc, &(s, scale, hp)| {
            let at_mid = hp.eval(&hr.mid).abs();
            let w = if at_mid > 0.0 {
                weight_cubic(s.abs() / at_mid)
            } else {
                spec.node_weight(s, scale)
            };
            spec.combine(acc, w)
        });
        return WeightedValue {
            value: model.predict(x),
            weight,
        };
    }
    let mut weight = 1.0;
    let (model, _) = tree.route(x, |s, scale, _| {
        weight = spec.combine(weight, spec.node_weight(s, scale))
    });
    WeightedValue {
        value: model.predict(x),
        weight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// Trees trained independently on bootstrap resamples.
    Retrained,
    /// Translated copies of the first tree with refitted leaves.
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub t_count: usize,
    pub mode: ForestMode,
    /// Per-step translation applied on every axis in shifted mode.
    pub delta: f64,
    pub mu: f64,
    pub weight_spec: WeightSpec,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            t_count: 4,
            mode: ForestMode::Shifted,
            delta: 0.0,
            mu: 1e-6,
            weight_spec: WeightSpec::default(),
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_count < 1 {
            return Err(Error::InvalidParameter(
                "a forest needs at least one tree".into(),
            ));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("delta must be finite".into()));
        }
        Ok(())
    }
}

/// Output of a forest at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestOutput {
    pub value: f64,
    /// Sum of the trees' weights.
    pub tree_weight: f64,
    /// Weight given to the helper constant.
    pub helper_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub version: u32,
    pub grid: (usize, usize),
    pub mode: ForestMode,
    pub delta: f64,
    pub mu: f64,
    /// Mean of the training outputs.
    pub helper_constant: f64,
    pub weight_spec: WeightSpec,
    pub trees: Vec<ModelTree>,
}

impl Forest {
    pub fn dims(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_detail(x).value
    }

    pub fn evaluate_detail(&self, x: &[f64]) -> ForestOutput {
        let (mut total, mut acc) = (0.0, 0.0);
        for tree in &self.trees {
            let wv = evaluate_tree_weighted(tree, x, &self.weight_spec);
            total += wv.weight;
            acc += wv.weight * wv.value;
        }
        if total <= 0.0 {
            return ForestOutput {
                value: self.helper_constant,
                tree_weight: 0.0,
                helper_weight: self.mu,
            };
        }
        let helper = (self.mu - total).max(0.0);
        ForestOutput {
            value: (acc + helper * self.helper_constant) / (total + helper),
            tree_weight: total,
            helper_weight: helper,
        }
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.root.node_count()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a forest; deep trees are allowed.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let forest = Forest::deserialize(&mut de)?;
        de.end()?;
        forest.check()?;
        Ok(forest)
    }

    fn check(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Data("forest has no trees".into()));
        }
        if self.mu.is_nan() || self.mu <= 0.0 {
            return Err(Error::Data(format!("mu must be positive, got {}", self.mu)));
        }
        for t in &self.trees {
            check_len(self.dims(), t.dims())?;
        }
        Ok(())
    }
}

/// A built forest with the split records of each independently built tree.
#[derive(Debug, Clone)]
pub struct ForestBuild {
    pub forest: Forest,
    pub splits: Vec<Vec<SplitRecord>>,
}

/// Builds `t_count` trees and wraps them into a forest.
pub fn build_forest(
    samples: &[Sample],
    space: &ImageSpace,
    params: &BuildParams,
    fp: &ForestParams,
) -> Result<ForestBuild> {
    fp.validate()?;
    params.validate()?;
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, have: 0 });
    }
    let helper_constant = samples.iter().map(|s| s.y).sum::<f64>() / samples.len() as f64;
    let (trees, splits) = match fp.mode {
        ForestMode::Retrained => {
            let built: Vec<_> = (0..fp.t_count)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(fp.seed.wrapping_add(t as u64));
                    let boot: Vec<Sample> = (0..samples.len())
                        .map(|_| samples[rng.gen_range(0..samples.len())].clone())
                        .collect();
                    build(&boot, space, params)
                })
                .collect::<Result<_>>()?;
            built.into_iter().map(|b| (b.tree, b.splits)).unzip()
        }
        ForestMode::Shifted => {
            let first = build(samples, space, params)?;
            let mut trees = vec![first.tree.clone()];
            for t in 1..fp.t_count {
                let offset = vec![t as f64 * fp.delta; space.dims()];
                trees.push(shifted_copy(
                    &first.tree,
                    &offset,
                    samples,
                    space.axis_max(),
                )?);
            }
            (trees, vec![first.splits])
        }
    };
    Ok(ForestBuild {
        forest: Forest {
            version: FORMAT_VERSION,
            grid: space.grid(),
            mode: fp.mode,
            delta: fp.delta,
            mu: fp.mu,
            helper_constant,
            weight_spec: fp.weight_spec,
            trees,
        },
        splits,
    })
}

/// Translates `tree` by `offset` and refits every leaf on the samples that now reach it.
/// Leaves reached by fewer than two samples keep the translated model. A zero
/// offset returns the tree unchanged.
pub fn shifted_copy(
    tree: &ModelTree,
    offset: &[f64],
    samples: &[Sample],
    axis_max: &[f64],
) -> Result<ModelTree> {
    let mut copy = tree.clone();
    if offset.iter().all(|o| *o == 0.0) {
        return Ok(copy);
    }
    copy.translate(offset);
    let idx: Vec<usize> = (0..samples.len()).collect();
    refit(&mut copy.root, idx, samples, axis_max)?;
    Ok(copy)
}

fn refit(node: &mut TreeNode, idx: Vec<usize>, samples: &[Sample], axis_max: &[f64]) -> Result<()> {
    match node {
        TreeNode::Internal { hp, neg, pos, .. } => {
            let (n, p): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| hp.eval(&samples[i].x) < 0.0);
            refit(neg, n, samples, axis_max)?;
            refit(pos, p, samples, axis_max)
        }
        TreeNode::Leaf { model, hr } => {
            if idx.len() < 2 {
                return Ok(());
            }
            let members = idx.iter().map(|&i| &samples[i]);
            let mut fitted =
                BlockSums::from_samples(axis_max.len(), members.clone())?.fit(axis_max)?;
            fitted.restrict_to(&hr.active);
            fitted.rms = rms_error(&fitted, members)?;
            *model = fitted;
            Ok(())
        }
    }
}
