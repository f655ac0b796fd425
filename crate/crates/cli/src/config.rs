use std::path::{Path, PathBuf};

use oblique_forest::data::{load_csv, SyntheticSpec};
use oblique_forest::probe::ProbeParams;
use oblique_forest::{BuildParams, ForestParams, ImageSpace, Kernel, Sample};
use serde::Deserialize;

use crate::error::CliError;

/// Everything a command may need. Unused sections are ignored by commands
/// that do not need them, but every section present is validated.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataSource>,
    pub build: BuildParams,
    pub forest: ForestParams,
    /// Forest file read by eval, distort, bench and probe.
    pub model: Option<PathBuf>,
    /// Primary output file: the trained or distorted forest.
    pub out: Option<PathBuf>,
    /// Optional JSON copy of the printed report.
    pub report: Option<PathBuf>,
    pub transform: Option<String>,
    pub probe: ProbeParams,
    pub bench: BenchConfig,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv(CsvSource),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    /// Defaults to one row of `d` pixels.
    pub grid: Option<(usize, usize)>,
    /// Pixel range upper bound; defaults to the per-axis maximum of the data.
    pub w: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub inputs: usize,
    pub repeats: usize,
    pub kernel: Kernel,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            inputs: 2000,
            repeats: 21,
            kernel: Kernel::spread(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.build.validate()?;
        self.forest.validate()?;
        self.probe.validate()?;
        if let Some(DataSource::Synthetic(spec)) = &self.data {
            spec.validate()?;
        }
        if let Some(DataSource::Csv(src)) = &self.data {
            if let Some(w) = src.w {
                if !(w.is_finite() && w > 0.0) {
                    return Err(CliError::Invalid(format!(
                        "csv w must be positive, got {w}"
                    )));
                }
            }
        }
        if self.bench.repeats == 0 {
            return Err(CliError::Invalid("bench.repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn require_data(&self) -> Result<&DataSource, CliError> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Invalid("config needs a data section".into()))
    }

    pub fn require_model(&self) -> Result<&Path, CliError> {
        self.model
            .as_deref()
            .ok_or_else(|| CliError::Invalid("config needs a model path".into()))
    }

    pub fn require_out(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| {
            CliError::Invalid("an output path is required (--out or \"out\")".into())
        })
    }
}

impl DataSource {
    pub fn load(&self) -> Result<(ImageSpace, Vec<Sample>), CliError> {
        match self {
            Self::Synthetic(spec) => Ok(spec.generate()?),
            Self::Csv(src) => {
                let samples = load_csv(&src.path).map_err(|e| match e {
                    oblique_forest::Error::Io(io) => {
                        CliError::Io(format!("cannot read {}: {io}", src.path.display()))
                    }
                    other => CliError::from(other),
                })?;
                let d = samples.first().map(Sample::dims).ok_or_else(|| {
                    CliError::Invalid(format!("{} has no samples", src.path.display()))
                })?;
                let grid = src.grid.unwrap_or((1, d));
                let w = match src.w {
                    Some(w) => vec![w; d],
                    None => (0..d)
                        .map(|i| {
                            let m = samples.iter().map(|s| s.x[i]).fold(0.0, f64::max);
                            if m > 0.0 {
                                m
                            } else {
                                1.0
                            }
                        })
                        .collect(),
                };
                let space = ImageSpace::new(grid, w)?;
                if let Some(s) = samples.iter().find(|s| !space.contains(&s.x)) {
                    return Err(CliError::Invalid(format!(
                        "sample {:?} lies outside the image space",
                        s.x
                    )));
                }
                Ok((space, samples))
            }
        }
    }
}
