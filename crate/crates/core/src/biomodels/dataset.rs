use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelKind, ModelParams};
use crate::{CrnasError, Result};

/// Observation grid: times, doses and replicate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub times: Vec<f64>,
    pub doses: Vec<f64>,
    pub replicates: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("times", &self.times), ("doses", &self.doses)] {
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(CrnasError::Config(format!("{name} must be finite and nonnegative")));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CrnasError::Config(format!("{name} must be strictly increasing")));
            }
        }
        if self.times.is_empty() {
            return Err(CrnasError::Config("time grid is empty".into()));
        }
        if self.replicates == 0 {
            return Err(CrnasError::Config("replicate count must be positive".into()));
        }
        Ok(())
    }

    /// Number of dose slots; a dose-free grid still has one.
    pub fn dose_slots(&self) -> usize {
        self.doses.len().max(1)
    }
}

/// Cell counts `x[t][d][r]` on a grid, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub model: ModelKind,
    pub s: usize,
    /// Initial total count (`X0`, or `F0` for the logistic model).
    pub x0: f64,
    pub grids: GridSpec,
    observations: Vec<f64>,
    pub true_params: Option<ModelParams>,
}

impl Dataset {
    pub fn new(
        model: ModelKind,
        s: usize,
        x0: f64,
        grids: GridSpec,
        observations: Vec<f64>,
        true_params: Option<ModelParams>,
    ) -> Result<Self> {
        grids.validate()?;
        if s == 0 {
            return Err(CrnasError::Config("S must be at least 1".into()));
        }
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(CrnasError::Config(format!("initial count must be positive, got {x0}")));
        }
        if model == ModelKind::Logistic && !grids.doses.is_empty() {
            return Err(CrnasError::Config("logistic datasets carry no dose grid".into()));
        }
        if model != ModelKind::Logistic && grids.doses.is_empty() {
            return Err(CrnasError::Config("dose grid is empty".into()));
        }
        let expected = grids.times.len() * grids.dose_slots() * grids.replicates;
        if observations.len() != expected {
            return Err(CrnasError::DimensionMismatch {
                expected,
                got: observations.len(),
            });
        }
        if observations.iter().any(|x| !x.is_finite()) {
            return Err(CrnasError::Config("observations must be finite".into()));
        }
        if let Some(p) = &true_params {
            if p.kind() != model || p.s() != s {
                return Err(CrnasError::Config(
                    "true parameters do not match the dataset model".into(),
                ));
            }
        }
        Ok(Self {
            model,
            s,
            x0,
            grids,
            observations,
            true_params,
        })
    }

    pub fn replicates(&self) -> usize {
        self.grids.replicates
    }

    /// Replicates at time index `ti`, dose index `di`.
    pub fn cell(&self, ti: usize, di: usize) -> &[f64] {
        let r = self.grids.replicates;
        let start = (ti * self.grids.dose_slots() + di) * r;
        &self.observations[start..start + r]
    }

    pub fn cell_mut(&mut self, ti: usize, di: usize) -> &mut [f64] {
        let r = self.grids.replicates;
        let start = (ti * self.grids.dose_slots() + di) * r;
        &mut self.observations[start..start + r]
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DatasetFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Flat `t,d,r,x` rows; `d` is empty for dose-free data.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "d", "r", "x"])?;
        for (ti, t) in self.grids.times.iter().enumerate() {
            for di in 0..self.grids.dose_slots() {
                let d = self.grids.doses.get(di).map(|d| d.to_string()).unwrap_or_default();
                for (r, x) in self.cell(ti, di).iter().enumerate() {
                    w.write_record([t.to_string(), d.clone(), r.to_string(), x.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `t,d,r,x` rows; the grid is rebuilt from the distinct values.
    pub fn read_csv<R: Read>(reader: R, model: ModelKind, s: usize, x0: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t: f64,
            d: Option<f64>,
            r: usize,
            x: f64,
        }
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(reader).deserialize() {
            let row: Row = rec?;
            rows.push(row);
        }
        let distinct = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let times = distinct(rows.iter().map(|r| r.t).collect());
        let doses = distinct(rows.iter().filter_map(|r| r.d).collect());
        let replicates = rows.iter().map(|r| r.r + 1).max().unwrap_or(0);
        let grids = GridSpec {
            times,
            doses,
            replicates,
        };
        let slots = grids.dose_slots();
        let mut obs = vec![f64::NAN; grids.times.len() * slots * replicates];
        for row in &rows {
            let ti = grids.times.iter().position(|&t| t == row.t).unwrap_or(0);
            let di = match row.d {
                Some(d) => grids.doses.iter().position(|&x| x == d).unwrap_or(0),
                None => 0,
            };
            obs[(ti * slots + di) * replicates + row.r] = row.x;
        }
        if obs.iter().any(|x| x.is_nan()) {
            return Err(CrnasError::Io("csv does not cover the full t×d×r grid".into()));
        }
        Self::new(model, s, x0, grids, obs, None)
    }
}

/// On-disk layout; dose-free data nests `[t][r]`, otherwise `[t][d][r]`.
#[derive(Serialize, Deserialize)]
struct DatasetFile {
    model: ModelKind,
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "X0")]
    x0: f64,
    grids: GridSpec,
    true_params: Option<ModelParams>,
    observations: Nested,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Nested {
    ByDose(Vec<Vec<Vec<f64>>>),
    Plain(Vec<Vec<f64>>),
}

impl From<&Dataset> for DatasetFile {
    fn from(d: &Dataset) -> Self {
        let times = 0..d.grids.times.len();
        let observations = if d.grids.doses.is_empty() {
            Nested::Plain(times.map(|ti| d.cell(ti, 0).to_vec()).collect())
        } else {
            Nested::ByDose(
                times
                    .map(|ti| (0..d.grids.doses.len()).map(|di| d.cell(ti, di).to_vec()).collect())
                    .collect(),
            )
        };
        DatasetFile {
            model: d.model,
            s: d.s,
            x0: d.x0,
            grids: d.grids.clone(),
            true_params: d.true_params.clone(),
            observations,
        }
    }
}

impl TryFrom<DatasetFile> for Dataset {
    type Error = CrnasError;

    fn try_from(f: DatasetFile) -> Result<Self> {
        let flat: Vec<f64> = match f.observations {
            Nested::ByDose(v) => v.into_iter().flatten().flatten().collect(),
            Nested::Plain(v) => v.into_iter().flatten().collect(),
        };
        Dataset::new(f.model, f.s, f.x0, f.grids, flat, f.true_params)
    }
}
