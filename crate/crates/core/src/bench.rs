//! Evaluation cost of convolved hyperplanes.
//!
//! Convolution only rewrites stored coefficients, so a forest and its convolved
//! twin share topology and per-node work. The timing here checks that claim.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::geometry::{convolve_hp, BoundingHR, Kernel};
use crate::tree::TreeNode;

/// Same forest with every hyperplane convolved by `kernel`. Each node's weight
/// scale is multiplied by the ratio of convolved to original reach over the
/// union of the leaf boxes below it, so weights saturate about as often as in
/// the original.
pub fn convolved_twin(forest: &Forest, kernel: &Kernel) -> Result<Forest> {
    let mut twin = forest.clone();
    for tree in &mut twin.trees {
        convolve_node(&mut tree.root, kernel)?;
    }
    Ok(twin)
}

/// Convolves the subtree and returns the box covering its leaves.
fn convolve_node(node: &mut TreeNode, kernel: &Kernel) -> Result<BoundingHR> {
    match node {
        TreeNode::Leaf { hr, .. } => Ok(hr.clone()),
        TreeNode::Internal {
            hp,
            scale,
            neg,
            pos,
            ..
        } => {
            let a = convolve_node(neg, kernel)?;
            let b = convolve_node(pos, kernel)?;
            let lo: Vec<f64> = (0..a.dims()).map(|i| a.lo(i).min(b.lo(i))).collect();
            let hi: Vec<f64> = (0..a.dims()).map(|i| a.hi(i).max(b.hi(i))).collect();
            let cover = BoundingHR::from_bounds(&lo, &hi)?;
            let conv = convolve_hp(hp, kernel)?;
            let (before, after) = (hp.reach(&cover), conv.reach(&cover));
            if before > 0.0 && after > 0.0 {
                *scale *= after / before;
            }
            // overwrite in place: fresh allocations would change memory layout and
            // with it the timing
            hp.alpha.copy_from_slice(&conv.alpha);
            Ok(cover)
        }
    }
}

/// `n` points drawn uniformly from the box `[lo, hi]`.
pub fn random_inputs(lo: &[f64], hi: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            lo.iter()
                .zip(hi)
                .map(|(l, h)| if h > l { rng.gen_range(*l..*h) } else { *l })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub evaluations: usize,
    pub repeats: usize,
    pub nodes: usize,
    /// Median over repeats.
    pub base_ns_per_eval: f64,
    pub convolved_ns_per_eval: f64,
    pub base_ns_per_node: f64,
    pub convolved_ns_per_node: f64,
    /// Convolved over base latency; absent when nothing was evaluated.
    pub ratio: Option<f64>,
}

impl BenchReport {
    pub fn summary(&self) -> String {
        let ratio = self.ratio.map_or("n/a".to_string(), |r| format!("{r:.4}"));
        format!(
            "evaluations={}\nrepeats={}\nnodes={}\nbase_ns_per_eval={:.2}\nconvolved_ns_per_eval={:.2}\nbase_ns_per_node={:.3}\nconvolved_ns_per_node={:.3}\nratio={ratio}\n",
            self.evaluations,
            self.repeats,
            self.nodes,
            self.base_ns_per_eval,
            self.convolved_ns_per_eval,
            self.base_ns_per_node,
            self.convolved_ns_per_node
        )
    }
}

fn pass(forest: &Forest, inputs: &[Vec<f64>]) -> f64 {
    let start = Instant::now();
    let mut acc = 0.0;
    for x in inputs {
        acc += forest.evaluate(black_box(x));
    }
    black_box(acc);
    start.elapsed().as_nanos() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Times `base` against `convolved` on the same inputs, alternating the order
/// on each repeat so drift hits both alike.
pub fn compare(
    base: &Forest,
    convolved: &Forest,
    inputs: &[Vec<f64>],
    repeats: usize,
) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    if base.trees.len() != convolved.trees.len() || base.node_count() != convolved.node_count() {
        return Err(Error::InvalidParameter(
            "forests do not share a topology".into(),
        ));
    }
    if let Some(x) = inputs.iter().find(|x| x.len() != base.dims()) {
        return Err(Error::DimensionMismatch {
            expected: base.dims(),
            actual: x.len(),
        });
    }
    let nodes = base.node_count();
    if inputs.is_empty() {
        return Ok(BenchReport {
            evaluations: 0,
            repeats,
            nodes,
            base_ns_per_eval: 0.0,
            convolved_ns_per_eval: 0.0,
            base_ns_per_node: 0.0,
            convolved_ns_per_node: 0.0,
            ratio: None,
        });
    }
    // warm caches and branch predictors
    pass(base, inputs);
    pass(convolved, inputs);
    let (mut a, mut b) = (Vec::with_capacity(repeats), Vec::with_capacity(repeats));
    for r in 0..repeats {
        if r % 2 == 0 {
            a.push(pass(base, inputs));
            b.push(pass(convolved, inputs));
        } else {
            b.push(pass(convolved, inputs));
            a.push(pass(base, inputs));
        }
    }
    let n = inputs.len() as f64;
    let (ta, tb) = (median(a) / n, median(b) / n);
    Ok(BenchReport {
        evaluations: inputs.len(),
        repeats,
        nodes,
        base_ns_per_eval: ta,
        convolved_ns_per_eval: tb,
        base_ns_per_node: ta / nodes as f64,
        convolved_ns_per_node: tb / nodes as f64,
        ratio: Some(tb / ta),
    })
}
