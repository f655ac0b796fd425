//! Pixel permutations and their action on trained forests.
//!
//! A transform that moves pixels around without resampling is a permutation of
//! the input axes. Permuting every coefficient vector of a forest the same way
//! yields a forest that answers on distorted images exactly as the original
//! answered on undistorted ones.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::fitting::LeafModel;
use crate::forest::Forest;
use crate::geometry::{BoundingHR, Hyperplane};
use crate::tree::{ModelTree, TreeNode};

/// A grid transform realized as a pixel permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    /// Cyclic shift of the image content by `(rows, cols)`.
    Translate(i64, i64),
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Rot90 => write!(f, "rot90"),
            Self::Rot180 => write!(f, "rot180"),
            Self::Rot270 => write!(f, "rot270"),
            Self::Translate(r, c) => write!(f, "translate:{r},{c}"),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "identity" => return Ok(Self::Identity),
            "rot90" => return Ok(Self::Rot90),
            "rot180" => return Ok(Self::Rot180),
            "rot270" => return Ok(Self::Rot270),
            _ => {}
        }
        let bad = || Error::UnsupportedTransform(s.to_string());
        let args = s.strip_prefix("translate:").ok_or_else(bad)?;
        let (r, c) = args.split_once(',').ok_or_else(bad)?;
        let r = r.trim().parse().map_err(|_| bad())?;
        let c = c.trim().parse().map_err(|_| bad())?;
        Ok(Self::Translate(r, c))
    }
}

/// Bijection on pixel indices: target pixel `j` reads source pixel `map[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    pub map: Vec<usize>,
    pub descriptor: String,
}

impl Permutation {
    pub fn identity(d: usize) -> Self {
        Self {
            map: (0..d).collect(),
            descriptor: "identity".into(),
        }
    }

    /// Checks that `map` is a bijection.
    pub fn new(map: Vec<usize>, descriptor: impl Into<String>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidParameter(format!(
                    "not a permutation: {map:?}"
                )));
            }
        }
        Ok(Self {
            map,
            descriptor: descriptor.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Applying `self` and then `next`.
    pub fn then(&self, next: &Permutation) -> Result<Permutation> {
        check_len(self.len(), next.len())?;
        Ok(Permutation {
            map: next.map.iter().map(|&j| self.map[j]).collect(),
            descriptor: format!("{}+{}", self.descriptor, next.descriptor),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut map = vec![0; self.len()];
        for (j, &m) in self.map.iter().enumerate() {
            map[m] = j;
        }
        Permutation {
            map,
            descriptor: format!("inverse({})", self.descriptor),
        }
    }

    /// Reorders any per-axis vector the way images are reordered.
    pub fn apply<T: Clone>(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.len(), v.len())?;
        Ok(self.map.iter().map(|&m| v[m].clone()).collect())
    }
}

/// Permutation for a single transform on a `rows x cols` grid.
pub fn transform_map(grid: (usize, usize), t: Transform) -> Result<Permutation> {
    let (rows, cols) = grid;
    let square = || {
        if rows == cols {
            Ok(())
        } else {
            Err(Error::UnsupportedTransform(format!(
                "{t} needs a square grid, got {rows}x{cols}"
            )))
        }
    };
    let source: Box<dyn Fn(usize, usize) -> usize> = match t {
        Transform::Identity => Box::new(|r, c| r * cols + c),
        Transform::Rot90 => {
            square()?;
            Box::new(|r, c| (rows - 1 - c) * cols + r)
        }
        Transform::Rot180 => Box::new(|r, c| (rows - 1 - r) * cols + (cols - 1 - c)),
        Transform::Rot270 => {
            square()?;
            Box::new(|r, c| c * cols + (cols - 1 - r))
        }
        Transform::Translate(dr, dc) => Box::new(move |r, c| {
            let sr = (r as i64 - dr).rem_euclid(rows as i64) as usize;
            let sc = (c as i64 - dc).rem_euclid(cols as i64) as usize;
            sr * cols + sc
        }),
    };
    let map = (0..rows * cols)
        .map(|j| source(j / cols, j % cols))
        .collect();
    Permutation::new(map, t.to_string())
}

/// Permutation for a tag such as `rot90` or `rot90+translate:1,0`, applied left to right.
pub fn permutation_from_transform(grid: (usize, usize), tag: &str) -> Result<Permutation> {
    if grid.0 == 0 || grid.1 == 0 {
        return Err(Error::InvalidParameter(format!("empty grid {grid:?}")));
    }
    let mut p = Permutation::identity(grid.0 * grid.1);
    let mut first = true;
    for part in tag.split('+') {
        let next = transform_map(grid, part.parse()?)?;
        p = if first { next } else { p.then(&next)? };
        first = false;
    }
    p.descriptor = tag.trim().to_string();
    Ok(p)
}

pub fn permute_image(x: &[f64], p: &Permutation) -> Result<Vec<f64>> {
    p.apply(x)
}

fn permute_vec(v: &mut Vec<f64>, p: &Permutation) {
    *v = p.map.iter().map(|&m| v[m]).collect();
}

fn permute_hp(hp: &mut Hyperplane, p: &Permutation) {
    permute_vec(&mut hp.alpha, p);
    permute_vec(&mut hp.anchor, p);
}

fn permute_leaf(model: &mut LeafModel, hr: &mut BoundingHR, p: &Permutation) {
    permute_vec(&mut model.alpha, p);
    permute_vec(&mut model.centroid, p);
    permute_vec(&mut hr.mid, p);
    permute_vec(&mut hr.half, p);
    hr.active = p.map.iter().map(|&m| hr.active[m]).collect();
}

fn permute_node(node: &mut TreeNode, p: &Permutation, target_of: &[usize]) {
    match node {
        TreeNode::Leaf { model, hr } => permute_leaf(model, hr, p),
        TreeNode::Internal {
            hp, axis, neg, pos, ..
        } => {
            permute_hp(hp, p);
            *axis = target_of[*axis];
            permute_node(neg, p, target_of);
            permute_node(pos, p, target_of);
        }
    }
}

pub fn permute_tree(tree: &ModelTree, p: &Permutation) -> Result<ModelTree> {
    check_len(tree.dims(), p.len())?;
    let target_of = p.inverse().map;
    let mut out = tree.clone();
    permute_node(&mut out.root, p, &target_of);
    Ok(out)
}

/// Forest whose output on `permute_image(x, p)` equals the original's on `x`.
pub fn permute_forest(forest: &Forest, p: &Permutation) -> Result<Forest> {
    check_len(forest.dims(), p.len())?;
    let trees = forest
        .trees
        .iter()
        .map(|t| permute_tree(t, p))
        .collect::<Result<_>>()?;
    Ok(Forest {
        trees,
        ..forest.clone()
    })
}
