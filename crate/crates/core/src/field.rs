use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Samples of the total conformal factor `v > 0` (metric `v^{4/(n-2)} delta`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl ConformalField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        check_positive(grid.nodes(), &values)?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.sample(f);
        Self::new(grid, values)
    }

    pub fn constant(grid: Arc<RadialGrid>, c: f64) -> Result<Self> {
        let values = vec![c; grid.len()];
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The metric factor `w = v^{4/(n-2)}` (flat reference metric).
    pub fn metric_factor(&self) -> Vec<f64> {
        let e = self.grid.constants().metric_exponent();
        self.values.iter().map(|v| v.powf(e)).collect()
    }

    /// Inverse of [`metric_factor`](Self::metric_factor).
    pub fn from_metric_factor(grid: Arc<RadialGrid>, w: &[f64]) -> Result<Self> {
        let e = 1.0 / grid.constants().metric_exponent();
        if let Some(i) = w.iter().position(|x| !(*x > 0.0)) {
            return Err(Error::Positivity {
                index: i,
                r: grid.nodes()[i],
                value: w[i],
            });
        }
        Self::new(grid, w.iter().map(|x| x.powf(e)).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["r", "value"])?;
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            w.write_record([fmt_f64(*r), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `(r, value)` rows; the radii must match the supplied grid.
    pub fn read_csv<R: Read>(grid: Arc<RadialGrid>, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut values = Vec::with_capacity(grid.len());
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let parse = |k: usize| -> Result<f64> {
                row.get(k)
                    .ok_or_else(|| Error::Domain(format!("row {i}: missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Domain(format!("row {i}: {e}")))
            };
            let r = parse(0)?;
            let v = parse(1)?;
            match grid.nodes().get(i) {
                Some(&rg) if (rg - r).abs() <= 1e-12 * rg.abs().max(1.0) => {}
                _ => return Err(Error::Domain(format!("row {i}: radius {r} does not match the grid"))),
            }
            values.push(v);
        }
        Self::new(grid, values)
    }

    pub fn to_record(&self, time: Option<f64>) -> FieldRecord {
        FieldRecord {
            grid: (*self.grid).clone(),
            values: self.values.clone(),
            time,
        }
    }

    pub fn from_record(rec: FieldRecord) -> Result<(Self, Option<f64>)> {
        let field = Self::new(Arc::new(rec.grid), rec.values)?;
        Ok((field, rec.time))
    }
}

/// JSON form `{grid, values, time}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub time: Option<f64>,
}

pub(crate) fn check_positive(r: &[f64], values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index: i, r: r[i] });
        }
        if v <= 0.0 {
            return Err(Error::Positivity {
                index: i,
                r: r[i],
                value: v,
            });
        }
    }
    Ok(())
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
