//! Sample files and synthetic data specifications.
//!
//! CSV files hold one sample per row: `d` pixel columns then the output, under
//! the header `x0,...,x{d-1},y`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{sample_function, FunctionKind, ImageSpace, Sample, TargetFunction};

pub fn csv_header(d: usize) -> Vec<String> {
    (0..d)
        .map(|i| format!("x{i}"))
        .chain(["y".to_string()])
        .collect()
}

pub fn read_csv(reader: impl Read) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header != csv_header(header.len() - 1) {
        return Err(Error::Data(format!(
            "expected header x0,...,x{{d-1}},y, got {}",
            header.join(",")
        )));
    }
    let d = header.len() - 1;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Data(format!("row {}: {e}", row + 1)))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {}: non-finite value", row + 1)));
        }
        let y = values[d];
        let mut x = values;
        x.truncate(d);
        out.push(Sample::new(x, y));
    }
    Ok(out)
}

pub fn write_csv(writer: impl Write, samples: &[Sample]) -> Result<()> {
    let d = samples.first().map_or(0, Sample::dims);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(d))?;
    for s in samples {
        if s.dims() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: s.dims(),
            });
        }
        w.write_record(s.x.iter().chain([&s.y]).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    read_csv(std::fs::File::open(path)?)
}

pub fn save_csv(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, samples)
}

/// Upper bound of the pixel range, shared or per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisMax {
    Uniform(f64),
    PerAxis(Vec<f64>),
}

impl Default for AxisMax {
    fn default() -> Self {
        Self::Uniform(1.0)
    }
}

/// Recipe for a synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub function: String,
    pub d: usize,
    /// Defaults to a single row of `d` pixels.
    #[serde(default)]
    pub grid: Option<(usize, usize)>,
    #[serde(default)]
    pub w: AxisMax,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_n() -> usize {
    2000
}

impl SyntheticSpec {
    pub fn space(&self) -> Result<ImageSpace> {
        let grid = self.grid.unwrap_or((1, self.d));
        if grid.0 * grid.1 != self.d {
            return Err(Error::InvalidParameter(format!(
                "grid {}x{} does not have d = {} pixels",
                grid.0, grid.1, self.d
            )));
        }
        let w = match &self.w {
            AxisMax::Uniform(w) => vec![*w; self.d],
            AxisMax::PerAxis(w) => w.clone(),
        };
        ImageSpace::new(grid, w)
    }

    pub fn kind(&self) -> Result<FunctionKind> {
        FunctionKind::from_name(&self.function)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be at least 1".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        self.kind()?;
        self.space().map(|_| ())
    }

    pub fn generate(&self) -> Result<(ImageSpace, Vec<Sample>)> {
        self.validate()?;
        let space = self.space()?;
        let f = TargetFunction::named(self.kind()?).with_noise(self.noise);
        let samples = sample_function(&f, self.n, &space, self.seed);
        Ok((space, samples))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let samples = vec![
            Sample::new(vec![0.25, 1.0], -3.5),
            Sample::new(vec![0.1, 0.0], 1e-17),
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,y\n"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&samples) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn csv_rejects_malformed_input() {
        for text in [
            "a,b,y\n1,2,3\n",
            "x0,y\n1,zz\n",
            "x0,y\n1,2,3\n",
            "x0,y\n1,NaN\n",
            "y\n1\n",
        ] {
            assert!(read_csv(text.as_bytes()).is_err(), "{text:?}");
        }
    }

    #[test]
    fn synthetic_spec_from_json() {
        let spec: SyntheticSpec = serde_json::from_str(
            r#"{"function":"abs-ridge","d":4,"grid":[2,2],"w":2.0,"seed":3,"n":50}"#,
        )
        .unwrap();
        let (space, samples) = spec.generate().unwrap();
        assert_eq!(space.grid(), (2, 2));
        assert_eq!(space.axis_max(), &[2.0; 4]);
        assert_eq!(samples.len(), 50);
        assert!(samples.iter().all(|s| space.contains(&s.x)));
        assert_eq!(spec.generate().unwrap().1[7].y, samples[7].y);
    }

    #[test]
    fn synthetic_spec_validation() {
        let base = SyntheticSpec {
            function: "linear".into(),
            d: 3,
            grid: None,
            w: AxisMax::PerAxis(vec![1.0, 2.0, 3.0]),
            noise: 0.0,
            seed: 0,
            n: 10,
        };
        assert!(base.validate().is_ok());
        assert!(SyntheticSpec {
            grid: Some((2, 2)),
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SyntheticSpec {
            function: "spiral".into(),
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SyntheticSpec {
            noise: -1.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SyntheticSpec {
            w: AxisMax::PerAxis(vec![1.0]),
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SyntheticSpec { d: 0, ..base }.validate().is_err());
    }
}
