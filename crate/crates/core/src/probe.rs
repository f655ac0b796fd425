//! Line probes for continuity and smoothness of forest outputs.
//!
//! Random segments are walked through the region covered by the trees. Wherever a
//! single tree changes leaf, the crossing is located by bisection and the output
//! is examined on both sides: the jump is the gap between the two sides'
//! linear extrapolations to the crossing, and the derivatives are one-sided
//! difference quotients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::LeafModel;
use crate::forest::{evaluate_tree_weighted, Forest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// The forest's weighted output.
    Blended,
    /// Every tree evaluated hard, weights forced to 1.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeParams {
    pub mode: ProbeMode,
    /// Stop after this many accepted crossings.
    pub crossings: usize,
    pub max_segments: usize,
    /// Coarse steps per segment used to detect leaf changes.
    pub steps: usize,
    pub jump_step: f64,
    pub derivative_step: f64,
    pub derivative_tolerance: f64,
    /// Crossings are skipped unless every other tree weighs at least this much.
    pub min_other_weight: f64,
    pub seed: u64,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self {
            mode: ProbeMode::Blended,
            crossings: 100,
            max_segments: 2000,
            steps: 64,
            jump_step: 1e-7,
            derivative_step: 1e-5,
            derivative_tolerance: 0.01,
            min_other_weight: 1e-3,
            seed: 0,
        }
    }
}

impl ProbeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("jump_step", self.jump_step),
            ("derivative_step", self.derivative_step),
            ("derivative_tolerance", self.derivative_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.steps < 1 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !(self.min_other_weight.is_finite() && self.min_other_weight >= 0.0) {
            return Err(Error::InvalidParameter(
                "min_other_weight must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// What was seen at one crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub tree: usize,
    pub point: Vec<f64>,
    pub jump: f64,
    pub left_derivative: f64,
    pub right_derivative: f64,
    /// `|left - right| / max(|left|, |right|, 1)`.
    pub derivative_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub mode: ProbeMode,
    pub segments: usize,
    pub crossings: Vec<Crossing>,
    /// Crossings rejected because another tree was near one of its own planes.
    pub skipped: usize,
    pub derivative_tolerance: f64,
}

impl ProbeReport {
    pub fn max_jump(&self) -> f64 {
        self.crossings.iter().map(|c| c.jump).fold(0.0, f64::max)
    }

    pub fn max_derivative_mismatch(&self) -> f64 {
        self.crossings
            .iter()
            .map(|c| c.derivative_mismatch)
            .fold(0.0, f64::max)
    }

    pub fn derivative_failures(&self) -> usize {
        self.crossings
            .iter()
            .filter(|c| c.derivative_mismatch > self.derivative_tolerance)
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.crossings.is_empty()
    }

    /// `key=value` lines.
    pub fn summary(&self) -> String {
        if self.is_empty() {
            return format!(
                "mode={}\nsegments={}\ncrossings=0\nskipped={}\nstatus=no crossings sampled\n",
                mode_name(self.mode),
                self.segments,
                self.skipped
            );
        }
        format!(
            "mode={}\nsegments={}\ncrossings={}\nskipped={}\nmax_jump={:e}\nmax_derivative_mismatch={:e}\nderivative_failures={}\n",
            mode_name(self.mode),
            self.segments,
            self.crossings.len(),
            self.skipped,
            self.max_jump(),
            self.max_derivative_mismatch(),
            self.derivative_failures()
        )
    }
}

fn mode_name(m: ProbeMode) -> &'static str {
    match m {
        ProbeMode::Blended => "blended",
        ProbeMode::Hard => "hard",
    }
}

/// Smallest box holding every leaf box of every tree.
pub fn covered_region(forest: &Forest) -> (Vec<f64>, Vec<f64>) {
    let d = forest.dims();
    let (mut lo, mut hi) = (vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]);
    for t in &forest.trees {
        for (_, hr) in t.root.leaves() {
            for i in 0..d {
                lo[i] = lo[i].min(hr.lo(i));
                hi[i] = hi[i].max(hr.hi(i));
            }
        }
    }
    (lo, hi)
}

struct Line {
    a: Vec<f64>,
    u: Vec<f64>,
    len: f64,
}

impl Line {
    fn at(&self, t: f64) -> Vec<f64> {
        self.a.iter().zip(&self.u).map(|(a, u)| a + t * u).collect()
    }
}

fn leaf_ids(forest: &Forest, x: &[f64]) -> Vec<*const LeafModel> {
    forest
        .trees
        .iter()
        .map(|t| t.find_leaf(x).0 as *const LeafModel)
        .collect()
}

fn output(forest: &Forest, mode: ProbeMode, x: &[f64]) -> f64 {
    match mode {
        ProbeMode::Blended => forest.evaluate(x),
        ProbeMode::Hard => {
            forest.trees.iter().map(|t| t.evaluate_hard(x)).sum::<f64>() / forest.trees.len() as f64
        }
    }
}

pub fn probe(forest: &Forest, params: &ProbeParams) -> Result<ProbeReport> {
    params.validate()?;
    let (lo, hi) = covered_region(forest);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut report = ProbeReport {
        mode: params.mode,
        segments: 0,
        crossings: Vec::new(),
        skipped: 0,
        derivative_tolerance: params.derivative_tolerance,
    };
    let reach = 2.0 * params.jump_step.max(params.derivative_step);
    while report.segments < params.max_segments && report.crossings.len() < params.crossings {
        report.segments += 1;
        let mut point = || -> Vec<f64> {
            lo.iter()
                .zip(&hi)
                .map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l })
                .collect()
        };
        let (a, b) = (point(), point());
        let len = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (q - p).powi(2))
            .sum::<f64>()
            .sqrt();
        if len <= 4.0 * reach {
            continue;
        }
        let u = a.iter().zip(&b).map(|(p, q)| (q - p) / len).collect();
        let line = Line { a, u, len };
        let dt = line.len / params.steps as f64;
        let mut prev = leaf_ids(forest, &line.at(0.0));
        for s in 1..=params.steps {
            if report.crossings.len() >= params.crossings {
                break;
            }
            let t1 = s as f64 * dt;
            let next = leaf_ids(forest, &line.at(t1));
            let changed: Vec<usize> = (0..prev.len()).filter(|&i| prev[i] != next[i]).collect();
            if changed.len() == 1 {
                match examine(forest, params, &line, changed[0], t1 - dt, t1, reach) {
                    Some(c) => report.crossings.push(c),
                    None => report.skipped += 1,
                }
            } else if changed.len() > 1 {
                report.skipped += 1;
            }
            prev = next;
        }
    }
    Ok(report)
}

fn examine(
    forest: &Forest,
    params: &ProbeParams,
    line: &Line,
    tree: usize,
    mut t0: f64,
    mut t1: f64,
    reach: f64,
) -> Option<Crossing> {
    let leaf = |t: f64| forest.trees[tree].find_leaf(&line.at(t)).0 as *const LeafModel;
    let start = leaf(t0);
    while t1 - t0 > 1e-12 * line.len.max(1.0) {
        let mid = 0.5 * (t0 + t1);
        if mid <= t0 || mid >= t1 {
            break;
        }
        if leaf(mid) == start {
            t0 = mid;
        } else {
            t1 = mid;
        }
    }
    let c = 0.5 * (t0 + t1);
    if c - reach < 0.0 || c + reach > line.len {
        return None;
    }
    // the probed tree must cross exactly once and nobody else may cross nearby
    let (before, after) = (
        leaf_ids(forest, &line.at(c - reach)),
        leaf_ids(forest, &line.at(c + reach)),
    );
    if (0..before.len()).any(|i| (before[i] != after[i]) != (i == tree)) {
        return None;
    }
    if before[tree] != leaf(t0) || after[tree] != leaf(t1) {
        return None;
    }
    let x = line.at(c);
    if params.mode == ProbeMode::Blended {
        let others_ok = forest
            .trees
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != tree)
            .all(|(_, t)| {
                evaluate_tree_weighted(t, &x, &forest.weight_spec).weight >= params.min_other_weight
            });
        if !others_ok {
            return None;
        }
    }
    let f = |t: f64| output(forest, params.mode, &line.at(t));

    let h = params.jump_step;
    let (l1, l2, r1, r2) = (f(c - h), f(c - 2.0 * h), f(c + h), f(c + 2.0 * h));
    let jump = ((2.0 * r1 - r2) - (2.0 * l1 - l2)).abs();

    let h = params.derivative_step;
    let fc = f(c);
    let left = (fc - f(c - h)) / h;
    let right = (f(c + h) - fc) / h;
    let mismatch = (left - right).abs() / left.abs().max(right.abs()).max(1.0);
    Some(Crossing {
        tree,
        point: x,
        jump,
        left_derivative: left,
        right_derivative: right,
        derivative_mismatch: mismatch,
    })
}
