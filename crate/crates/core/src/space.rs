//! Image space, training samples and synthetic data.
//!
//! An image with `d` pixels is a point of the hyper-rectangle
//! `[0, w_0] x ... x [0, w_{d-1}]`. Pixels are laid out on a `rows x cols`
//! grid and flattened row-major, so grid cell `(r, c)` is axis `r * cols + c`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// The domain of the regression: one closed interval `[0, w_i]` per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSpace {
    grid: (usize, usize),
    axis_max: Vec<f64>,
}

impl ImageSpace {
    pub fn new(grid: (usize, usize), axis_max: Vec<f64>) -> Result<Self> {
        let (rows, cols) = grid;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid shape {rows}x{cols} must be positive"
            )));
        }
        check_len(rows * cols, axis_max.len())?;
        if let Some(w) = axis_max.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "axis upper bound {w} must be finite and positive"
            )));
        }
        Ok(Self { grid, axis_max })
    }

    /// Every pixel shares the same upper bound `w`.
    pub fn uniform(rows: usize, cols: usize, w: f64) -> Result<Self> {
        Self::new((rows, cols), vec![w; rows * cols])
    }

    pub fn dims(&self) -> usize {
        self.axis_max.len()
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn axis_max(&self) -> &[f64] {
        &self.axis_max
    }

    /// Center of the image space, `w_i / 2` on every axis.
    pub fn midpoint(&self) -> Vec<f64> {
        self.axis_max.iter().map(|w| w / 2.0).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims()
            && x.iter()
                .zip(&self.axis_max)
                .all(|(v, w)| (0.0..=*w).contains(v))
    }
}

/// One training point. `ext` optionally caches `x_i^2` followed by `x_i * y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub ext: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y, ext: None }
    }

    pub fn dims(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn x_sq(&self, i: usize) -> f64 {
        match &self.ext {
            Some(ext) => ext[i],
            None => self.x[i] * self.x[i],
        }
    }

    #[inline]
    pub fn x_y(&self, i: usize) -> f64 {
        match &self.ext {
            Some(ext) => ext[self.x.len() + i],
            None => self.x[i] * self.y,
        }
    }
}

/// Builds a sample with its squares and output products precomputed.
pub fn extend_sample(x: Vec<f64>, y: f64) -> Sample {
    let mut ext = Vec::with_capacity(2 * x.len());
    ext.extend(x.iter().map(|v| v * v));
    ext.extend(x.iter().map(|v| v * y));
    Sample {
        x,
        y,
        ext: Some(ext),
    }
}

/// Moves the origin to `origin`; extensions are recomputed for the new coordinates.
pub fn recenter(samples: &[Sample], origin: &[f64]) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| {
            check_len(origin.len(), s.dims())?;
            let x = s.x.iter().zip(origin).map(|(v, o)| v - o).collect();
            Ok(extend_sample(x, s.y))
        })
        .collect()
}

/// Averages non-overlapping `block x block` squares of a row-major image.
pub fn downsample(image: &[Vec<f64>], block: usize) -> Result<Vec<f64>> {
    let rows = image.len();
    let cols = image.first().map_or(0, Vec::len);
    if block == 0 {
        return Err(Error::InvalidParameter(
            "block size must be positive".into(),
        ));
    }
    if let Some(row) = image.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            expected: cols,
            actual: row.len(),
        });
    }
    if !rows.is_multiple_of(block) || !cols.is_multiple_of(block) {
        return Err(Error::DimensionMismatch {
            expected: block * (rows / block).max(1),
            actual: if !rows.is_multiple_of(block) {
                rows
            } else {
                cols
            },
        });
    }
    let (out_rows, out_cols) = (rows / block, cols / block);
    let area = (block * block) as f64;
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for br in 0..out_rows {
        for bc in 0..out_cols {
            let sum: f64 = image[br * block..(br + 1) * block]
                .iter()
                .flat_map(|row| &row[bc * block..(bc + 1) * block])
                .sum();
            out.push(sum / area);
        }
    }
    Ok(out)
}

/// Named smooth test functions on the image space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    /// `f = value` everywhere.
    Constant(f64),
    /// `f = 1 + sum_i ((i + 1) / d) * x_i / w_i`.
    Linear,
    /// `f = |x_0 - w_0 / 2|`, a single kink across the middle of axis 0.
    AbsRidge,
    /// `f = sin(pi x_0 / w_0) * cos(pi x_1 / w_1)`; the cosine factor is dropped when `d = 1`.
    SinProduct,
    /// `f = sum_i ((x_i - w_i / 2) / w_i)^2`.
    QuadraticBowl,
}

impl FunctionKind {
    pub const REGISTRY: [&'static str; 5] = [
        "constant",
        "linear",
        "abs-ridge",
        "sin-product",
        "quadratic-bowl",
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "constant" => Ok(Self::Constant(1.0)),
            "linear" => Ok(Self::Linear),
            "abs-ridge" => Ok(Self::AbsRidge),
            "sin-product" => Ok(Self::SinProduct),
            "quadratic-bowl" => Ok(Self::QuadraticBowl),
            other => Err(Error::InvalidParameter(format!(
                "unknown function '{other}'"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant(_) => "constant",
            Self::Linear => "linear",
            Self::AbsRidge => "abs-ridge",
            Self::SinProduct => "sin-product",
            Self::QuadraticBowl => "quadratic-bowl",
        }
    }

    pub fn eval(&self, x: &[f64], space: &ImageSpace) -> f64 {
        let w = space.axis_max();
        match *self {
            Self::Constant(v) => v,
            Self::Linear => {
                let d = x.len() as f64;
                1.0 + x
                    .iter()
                    .zip(w)
                    .enumerate()
                    .map(|(i, (v, wi))| (i + 1) as f64 / d * v / wi)
                    .sum::<f64>()
            }
            Self::AbsRidge => (x[0] - w[0] / 2.0).abs(),
            Self::SinProduct => {
                let s = (PI * x[0] / w[0]).sin();
                if x.len() > 1 {
                    s * (PI * x[1] / w[1]).cos()
                } else {
                    s
                }
            }
            Self::QuadraticBowl => x
                .iter()
                .zip(w)
                .map(|(v, wi)| {
                    let u = (v - wi / 2.0) / wi;
                    u * u
                })
                .sum(),
        }
    }

    /// `max f - min f` over the image space.
    pub fn output_range(&self, space: &ImageSpace) -> f64 {
        let d = space.dims() as f64;
        match self {
            Self::Constant(_) => 0.0,
            Self::Linear => (d + 1.0) / 2.0,
            Self::AbsRidge => space.axis_max()[0] / 2.0,
            Self::SinProduct => {
                if space.dims() > 1 {
                    2.0
                } else {
                    1.0
                }
            }
            Self::QuadraticBowl => d / 4.0,
        }
    }
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FunctionBody {
    Named(FunctionKind),
    Custom(Evaluator),
}

/// A function to be learned, with an optional additive uniform noise amplitude.
#[derive(Clone)]
pub struct TargetFunction {
    body: FunctionBody,
    noise: f64,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.body {
            FunctionBody::Named(kind) => kind.name(),
            FunctionBody::Custom(_) => "custom",
        };
        f.debug_struct("TargetFunction")
            .field("function", &name)
            .field("noise", &self.noise)
            .finish()
    }
}

impl TargetFunction {
    pub fn named(kind: FunctionKind) -> Self {
        Self {
            body: FunctionBody::Named(kind),
            noise: 0.0,
        }
    }

    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            body: FunctionBody::Custom(Arc::new(f)),
            noise: 0.0,
        }
    }

    /// Noise is drawn uniformly from `[-amplitude, amplitude]`.
    pub fn with_noise(mut self, amplitude: f64) -> Self {
        self.noise = amplitude.abs();
        self
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Noise-free value at `x`.
    pub fn eval(&self, x: &[f64], space: &ImageSpace) -> f64 {
        match &self.body {
            FunctionBody::Named(kind) => kind.eval(x, space),
            FunctionBody::Custom(f) => f(x),
        }
    }
}

/// Draws `n` samples uniformly over the image space.
pub fn sample_function(f: &TargetFunction, n: usize, space: &ImageSpace, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = space
                .axis_max()
                .iter()
                .map(|w| rng.gen::<f64>() * w)
                .collect();
            let mut y = f.eval(&x, space);
            if f.noise > 0.0 {
                y += rng.gen_range(-f.noise..=f.noise);
            }
            extend_sample(x, y)
        })
        .collect()
}
