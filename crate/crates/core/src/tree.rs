//! Oblique model trees.
//!
//! Every block is fitted with per-axis least squares. A block whose residual
//! RMS is within `epsilon` becomes a leaf; otherwise the fitted slopes define a
//! hyperplane through the midpoint of the block's bounding box, which is
//! convolved on the pixel grid, pruned, tilted toward its most important axis
//! and used to cut the block in two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{rms_error, BlockSums, LeafModel, DEGENERACY_TOLERANCE};
use crate::geometry::{
    argmax, convolve_hp, enforce_tilt, importance, prune_variables, BoundingHR, Hyperplane, Kernel,
};
use crate::space::{recenter, ImageSpace, Sample};

/// Serialization format version for trees and forests.
pub const FORMAT_VERSION: u32 = 1;

/// Blocks at least this large build their two children in parallel.
const PARALLEL_BLOCK: usize = 4096;

/// Parameters of a single tree build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildParams {
    /// Target RMS error of a leaf.
    pub epsilon: f64,
    /// Tilt parameter in `(0, 1)`.
    pub tau: f64,
    /// Axes with importance below `importance_drop_fraction * epsilon` are removed.
    pub importance_drop_fraction: f64,
    /// Maximum number of nonzero hyperplane coefficients.
    pub n_max: Option<usize>,
    pub kernel: Kernel,
    pub min_samples: usize,
    pub max_depth: usize,
    /// Shrink child boxes to the bounding box of their samples.
    pub tighten: bool,
    /// Fit in coordinates centered on the image-space midpoint.
    pub recenter: bool,
    /// Halve the block along an axis whose residual folds around the box
    /// midpoint more strongly than any fitted slope changes the output.
    pub fold_split: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            tau: 0.5,
            importance_drop_fraction: 0.0,
            n_max: None,
            kernel: Kernel::default(),
            min_samples: 8,
            max_depth: 40,
            tighten: true,
            recenter: true,
            fold_split: true,
        }
    }
}

impl BuildParams {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.importance_drop_fraction >= 0.0 && self.importance_drop_fraction.is_finite()) {
            return bad("importance_drop_fraction must be a nonnegative number".into());
        }
        if self.min_samples < 2 {
            return bad(format!(
                "min_samples must be at least 2, got {}",
                self.min_samples
            ));
        }
        if self.n_max == Some(0) {
            return bad("n_max must be at least 1".into());
        }
        if self.max_depth > 64 {
            return bad(format!(
                "max_depth {} exceeds the supported 64",
                self.max_depth
            ));
        }
        Kernel::new(
            self.kernel.rows,
            self.kernel.cols,
            self.kernel.weights.clone(),
        )?;
        Ok(())
    }
}

/// A node of a model tree. Internal nodes send `x` to `pos` when `S(x) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        hp: Hyperplane,
        /// Axis the tilt constraint was enforced on.
        axis: usize,
        /// `sum_i |alpha_i| h_i` over the split block, used to normalize `|S|`.
        scale: f64,
        neg: Box<TreeNode>,
        pos: Box<TreeNode>,
    },
    Leaf {
        model: LeafModel,
        hr: BoundingHR,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            Self::Leaf { .. } => 0,
            Self::Internal { neg, pos, .. } => 1 + neg.depth().max(pos.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Internal { neg, pos, .. } => neg.leaf_count() + pos.leaf_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Internal { neg, pos, .. } => 1 + neg.node_count() + pos.node_count(),
        }
    }

    /// Leaf models and boxes in depth-first order, negative side first.
    pub fn leaves(&self) -> Vec<(&LeafModel, &BoundingHR)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                Self::Leaf { model, hr } => out.push((model, hr)),
                Self::Internal { neg, pos, .. } => {
                    stack.push(pos);
                    stack.push(neg);
                }
            }
        }
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<(&mut LeafModel, &mut BoundingHR)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                Self::Leaf { model, hr } => out.push((model, hr)),
                Self::Internal { neg, pos, .. } => {
                    stack.push(pos);
                    stack.push(neg);
                }
            }
        }
        out
    }

    /// Applies `f` to every hyperplane.
    pub fn for_each_hyperplane_mut(&mut self, f: &mut impl FnMut(&mut Hyperplane)) {
        if let Self::Internal { hp, neg, pos, .. } = self {
            f(hp);
            neg.for_each_hyperplane_mut(f);
            pos.for_each_hyperplane_mut(f);
        }
    }
}

/// A model tree over a `rows x cols` pixel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTree {
    pub version: u32,
    pub grid: (usize, usize),
    pub root: TreeNode,
}

impl ModelTree {
    pub fn dims(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    /// Leaf reached by routing on the sign of each hyperplane.
    pub fn find_leaf(&self, x: &[f64]) -> (&LeafModel, &BoundingHR) {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { model, hr } => return (model, hr),
                TreeNode::Internal { hp, neg, pos, .. } => {
                    node = if hp.eval(x) >= 0.0 { pos } else { neg };
                }
            }
        }
    }

    /// Value of the reached leaf's linear model at `x`.
    pub fn evaluate_hard(&self, x: &[f64]) -> f64 {
        self.find_leaf(x).0.predict(x)
    }

    /// Routes `x`, reporting `(S(x), scale, hyperplane)` for every internal node on the path.
    pub fn route<'a>(
        &'a self,
        x: &[f64],
        mut visit: impl FnMut(f64, f64, &'a Hyperplane),
    ) -> (&'a LeafModel, &'a BoundingHR) {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { model, hr } => return (model, hr),
                TreeNode::Internal {
                    hp,
                    scale,
                    neg,
                    pos,
                    ..
                } => {
                    let s = hp.eval(x);
                    visit(s, *scale, hp);
                    node = if s >= 0.0 { pos } else { neg };
                }
            }
        }
    }

    /// Shifts the whole tree so that `T'(x + offset) = T(x)`.
    pub fn translate(&mut self, offset: &[f64]) {
        self.root
            .for_each_hyperplane_mut(&mut |hp| *hp = hp.translated(offset));
        for (model, hr) in self.root.leaves_mut() {
            *model = model.translated(offset);
            *hr = hr.translated(offset);
        }
    }
}

/// How a block was cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Tilted fitted hyperplane.
    Oblique,
    /// Halving cut through the box midpoint, used when the oblique cut left a side empty
    /// or the residual folds about the midpoint along some axis.
    AxisParallel,
    /// Cut at the sample median, the last resort when a midpoint cut leaves a side empty.
    Median,
}

/// Geometry of one split, kept for auditing the shrink invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub depth: usize,
    pub axis: usize,
    pub kind: SplitKind,
    pub parent: BoundingHR,
    pub neg: BoundingHR,
    pub pos: BoundingHR,
}

/// A built tree together with the record of its splits.
#[derive(Debug, Clone)]
pub struct TreeBuild {
    pub tree: ModelTree,
    pub splits: Vec<SplitRecord>,
}

struct Builder<'a> {
    samples: &'a [Sample],
    axis_max: &'a [f64],
    grid: (usize, usize),
    params: &'a BuildParams,
}

struct Cut {
    hp: Hyperplane,
    axis: usize,
    kind: SplitKind,
    neg: Vec<usize>,
    pos: Vec<usize>,
    neg_hr: BoundingHR,
    pos_hr: BoundingHR,
}

/// Fits a model tree to `samples`.
pub fn build(samples: &[Sample], space: &ImageSpace, params: &BuildParams) -> Result<TreeBuild> {
    params.validate()?;
    let d = space.dims();
    if samples.len() < params.min_samples {
        return Err(Error::InsufficientSamples {
            needed: params.min_samples,
            have: samples.len(),
        });
    }
    if let Some(s) = samples.iter().find(|s| s.dims() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: s.dims(),
        });
    }
    let origin = if params.recenter {
        space.midpoint()
    } else {
        vec![0.0; d]
    };
    let working;
    let data: &[Sample] = if params.recenter {
        working = recenter(samples, &origin)?;
        &working
    } else {
        samples
    };
    let lo: Vec<f64> = origin.iter().map(|o| -o).collect();
    let hi: Vec<f64> = space
        .axis_max()
        .iter()
        .zip(&origin)
        .map(|(w, o)| w - o)
        .collect();
    let root_hr = BoundingHR::from_bounds(&lo, &hi)?;
    let builder = Builder {
        samples: data,
        axis_max: space.axis_max(),
        grid: space.grid(),
        params,
    };
    let all: Vec<usize> = (0..data.len()).collect();
    let sums = BlockSums::from_samples(d, data)?;
    let (root, mut splits) = builder.node(all, sums, root_hr, 0)?;
    let mut tree = ModelTree {
        version: FORMAT_VERSION,
        grid: space.grid(),
        root,
    };
    if params.recenter {
        tree.translate(&origin);
        for rec in &mut splits {
            rec.parent = rec.parent.translated(&origin);
            rec.neg = rec.neg.translated(&origin);
            rec.pos = rec.pos.translated(&origin);
        }
    }
    Ok(TreeBuild { tree, splits })
}

impl Builder<'_> {
    fn fit(&self, idx: &[usize], sums: &BlockSums, hr: &BoundingHR) -> Result<LeafModel> {
        let mut model = if sums.n >= 2 {
            sums.fit(self.axis_max)?
        } else if let Some(&i) = idx.first() {
            let s = &self.samples[i];
            let mut m = LeafModel::constant(s.dims(), s.y);
            m.centroid = s.x.clone();
            m
        } else {
            return Err(Error::EmptyBlock);
        };
        model.restrict_to(&hr.active);
        model.rms = rms_error(&model, idx.iter().map(|&i| &self.samples[i]))?;
        Ok(model)
    }

    fn node(
        &self,
        idx: Vec<usize>,
        sums: BlockSums,
        hr: BoundingHR,
        depth: usize,
    ) -> Result<(TreeNode, Vec<SplitRecord>)> {
        let p = self.params;
        let model = self.fit(&idx, &sums, &hr)?;
        if model.rms <= p.epsilon || idx.len() < 2 * p.min_samples || depth >= p.max_depth {
            return Ok((TreeNode::Leaf { model, hr }, Vec::new()));
        }
        let Some(cut) = self.choose_cut(&idx, &model, &hr)? else {
            return Ok((TreeNode::Leaf { model, hr }, Vec::new()));
        };
        let Cut {
            hp,
            axis,
            kind,
            neg,
            pos,
            neg_hr,
            pos_hr,
        } = cut;
        let scale = hp.reach(&hr);
        let record = SplitRecord {
            depth,
            axis,
            kind,
            parent: hr,
            neg: neg_hr.clone(),
            pos: pos_hr.clone(),
        };
        // accumulate the smaller side, subtract for the other
        let d = sums.dims();
        let (neg_sums, pos_sums) = if neg.len() <= pos.len() {
            let s = BlockSums::from_samples(d, neg.iter().map(|&i| &self.samples[i]))?;
            let other = sums.subtract(&s)?;
            (s, other)
        } else {
            let s = BlockSums::from_samples(d, pos.iter().map(|&i| &self.samples[i]))?;
            let other = sums.subtract(&s)?;
            (other, s)
        };
        let big = idx.len() >= PARALLEL_BLOCK;
        drop(idx);
        let (left, right) = if big {
            rayon::join(
                || self.node(neg, neg_sums, neg_hr, depth + 1),
                || self.node(pos, pos_sums, pos_hr, depth + 1),
            )
        } else {
            (
                self.node(neg, neg_sums, neg_hr, depth + 1),
                self.node(pos, pos_sums, pos_hr, depth + 1),
            )
        };
        let (neg_node, mut neg_rec) = left?;
        let (pos_node, pos_rec) = right?;
        let mut splits = Vec::with_capacity(1 + neg_rec.len() + pos_rec.len());
        splits.push(record);
        splits.append(&mut neg_rec);
        splits.extend(pos_rec);
        Ok((
            TreeNode::Internal {
                hp,
                axis,
                scale,
                neg: Box::new(neg_node),
                pos: Box::new(pos_node),
            },
            splits,
        ))
    }

    /// Per axis, the change in residual between the box midpoint and its faces
    /// when the residual is regressed on `|x_i - m_i|`. A linear model cannot see
    /// output that is symmetric about the midpoint; this can.
    fn fold_scores(&self, idx: &[usize], model: &LeafModel, hr: &BoundingHR) -> Vec<f64> {
        let d = hr.dims();
        let n = idx.len() as f64;
        let (mut su, mut suu, mut sru) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut sr = 0.0;
        for &j in idx {
            let s = &self.samples[j];
            let r = s.y - model.predict(&s.x);
            sr += r;
            for i in 0..d {
                let u = (s.x[i] - hr.mid[i]).abs();
                su[i] += u;
                suu[i] += u * u;
                sru[i] += r * u;
            }
        }
        (0..d)
            .map(|i| {
                let var = suu[i] / n - (su[i] / n).powi(2);
                if !hr.active[i] || var <= DEGENERACY_TOLERANCE * hr.half[i] * hr.half[i] {
                    return 0.0;
                }
                let gamma = (sru[i] / n - sr / n * su[i] / n) / var;
                gamma.abs() * hr.half[i]
            })
            .collect()
    }

    fn choose_cut(&self, idx: &[usize], model: &LeafModel, hr: &BoundingHR) -> Result<Option<Cut>> {
        let p = self.params;
        if p.fold_split {
            let fold = self.fold_scores(idx, model, hr);
            let linear = importance(&model.alpha, hr).into_iter().fold(0.0, f64::max);
            if let Some(w) = argmax(&fold).filter(|&w| fold[w] > linear) {
                if let Some(cut) = self.fallback_cut(idx, hr, w, &hr.active) {
                    return Ok(Some(cut));
                }
            }
        }
        let fitted = Hyperplane {
            alpha: model.alpha.clone(),
            anchor: hr.mid.clone(),
            grid: self.grid,
        };
        let mut conv = convolve_hp(&fitted, &p.kernel)?;
        conv.alpha
            .iter_mut()
            .zip(&hr.active)
            .filter(|(_, on)| !**on)
            .for_each(|(a, _)| *a = 0.0);
        let (pruned, child_active) =
            prune_variables(&conv, hr, p.importance_drop_fraction * p.epsilon, p.n_max);
        match enforce_tilt(&pruned, hr, p.tau) {
            Ok((tilted, k)) => {
                if let Some(cut) = self.oblique_cut(idx, hr, tilted, k, &child_active) {
                    return Ok(Some(cut));
                }
                Ok(self.fallback_cut(idx, hr, k, &child_active))
            }
            Err(Error::NoActiveAxis) => {
                let widest = (0..hr.dims())
                    .filter(|&i| hr.active[i] && hr.half[i] > 0.0)
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if hr.half[i] <= hr.half[b] => best,
                        _ => Some(i),
                    });
                Ok(widest.and_then(|k| self.fallback_cut(idx, hr, k, &hr.active)))
            }
            Err(e) => Err(e),
        }
    }

    fn partition(&self, idx: &[usize], hp: &Hyperplane) -> (Vec<usize>, Vec<usize>) {
        idx.iter()
            .partition(|&&i| hp.eval(&self.samples[i].x) < 0.0)
    }

    fn oblique_cut(
        &self,
        idx: &[usize],
        hr: &BoundingHR,
        hp: Hyperplane,
        k: usize,
        child_active: &[bool],
    ) -> Option<Cut> {
        let (neg, pos) = self.partition(idx, &hp);
        if neg.is_empty() || pos.is_empty() {
            return None;
        }
        let a_k = hp.alpha[k];
        let others: f64 = importance(&hp.alpha, hr)
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, v)| v)
            .sum();
        let reach = (others / a_k.abs()).min(hr.half[k]);
        let (m, h) = (hr.mid[k], hr.half[k]);
        // the side with S >= 0 lies beyond m_k - reach when alpha_k > 0
        let (pos_iv, neg_iv) = if a_k > 0.0 {
            ((m - reach, m + h), (m - h, m + reach))
        } else {
            ((m - h, m + reach), (m - reach, m + h))
        };
        let neg_hr = self.child_hr(hr, k, neg_iv, child_active, &neg);
        let pos_hr = self.child_hr(hr, k, pos_iv, child_active, &pos);
        Some(Cut {
            hp,
            axis: k,
            kind: SplitKind::Oblique,
            neg,
            pos,
            neg_hr,
            pos_hr,
        })
    }

    fn fallback_cut(
        &self,
        idx: &[usize],
        hr: &BoundingHR,
        k: usize,
        child_active: &[bool],
    ) -> Option<Cut> {
        let (m, h) = (hr.mid[k], hr.half[k]);
        let hp = Hyperplane::axis_parallel(k, hr.mid.clone(), self.grid);
        let (neg, pos) = self.partition(idx, &hp);
        if !neg.is_empty() && !pos.is_empty() {
            let neg_hr = self.child_hr(hr, k, (m - h, m), child_active, &neg);
            let pos_hr = self.child_hr(hr, k, (m, m + h), child_active, &pos);
            return Some(Cut {
                hp,
                axis: k,
                kind: SplitKind::AxisParallel,
                neg,
                pos,
                neg_hr,
                pos_hr,
            });
        }
        let mut values: Vec<f64> = idx.iter().map(|&i| self.samples[i].x[k]).collect();
        values.sort_by(f64::total_cmp);
        let t = values[values.len() / 2];
        if values[0] == t {
            // no sample lies strictly below the median; try the first larger value
            let t = *values.iter().find(|v| **v > t)?;
            return self.median_cut(idx, hr, k, t, child_active);
        }
        self.median_cut(idx, hr, k, t, child_active)
    }

    fn median_cut(
        &self,
        idx: &[usize],
        hr: &BoundingHR,
        k: usize,
        t: f64,
        child_active: &[bool],
    ) -> Option<Cut> {
        let mut anchor = hr.mid.clone();
        anchor[k] = t;
        let hp = Hyperplane::axis_parallel(k, anchor, self.grid);
        let (neg, pos) = self.partition(idx, &hp);
        if neg.is_empty() || pos.is_empty() {
            return None;
        }
        let neg_hr = self.child_hr(hr, k, (hr.lo(k), t), child_active, &neg);
        let pos_hr = self.child_hr(hr, k, (t, hr.hi(k)), child_active, &pos);
        Some(Cut {
            hp,
            axis: k,
            kind: SplitKind::Median,
            neg,
            pos,
            neg_hr,
            pos_hr,
        })
    }

    fn child_hr(
        &self,
        parent: &BoundingHR,
        k: usize,
        interval: (f64, f64),
        active: &[bool],
        members: &[usize],
    ) -> BoundingHR {
        let mut hr = parent.clone();
        hr.active = active.to_vec();
        hr.clip(k, interval.0, interval.1);
        if self.params.tighten {
            for i in 0..hr.dims() {
                let (lo, hi) =
                    members
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &j| {
                            let v = self.samples[j].x[i];
                            (lo.min(v), hi.max(v))
                        });
                hr.clip(i, lo, hi);
            }
        }
        hr
    }
}
