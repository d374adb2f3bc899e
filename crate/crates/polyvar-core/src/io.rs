//! CSV import and export of kernels and paths.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cov_models::{CovKernel, KernelMeta, Tail};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct KernelRow {
    lag: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct PathRow {
    index: usize,
    value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_value: Option<f64>,
}

/// Write `r(0..=max_lag)` as `lag,value` rows.
pub fn write_kernel_csv<W: Write>(kernel: &CovKernel<f64>, max_lag: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for lag in 0..=max_lag {
        w.serialize(KernelRow { lag, value: kernel.eval(lag as i64) })?;
    }
    w.flush()?;
    Ok(())
}

/// Read a `lag,value` table. Lags must be `0, 1, 2, ...` in order.
pub fn read_kernel_csv<R: Read>(input: R, tail: Option<Tail<f64>>) -> Result<CovKernel<f64>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut values = Vec::new();
    for (i, row) in rd.deserialize::<KernelRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        if row.lag != i {
            return Err(Error::Parse(format!("expected lag {i}, found {}", row.lag)));
        }
        values.push(row.value);
    }
    CovKernel::tabulated(values, tail, KernelMeta::new("tabulated", &[]))
}

/// Write a path, with the companion column when present.
pub fn write_path_csv<W: Write>(values: &[f64], companion: Option<&[f64]>, out: W) -> Result<()> {
    if let Some(c) = companion {
        if c.len() != values.len() {
            return Err(Error::Argument("companion length differs from the path".into()));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    for (index, &value) in values.iter().enumerate() {
        w.serialize(PathRow { index, value, sigma_value: companion.map(|c| c[index]) })?;
    }
    w.flush()?;
    Ok(())
}

/// Read `index,value[,sigma_value]`. Returns the path and the companion if
/// every row carries one.
pub fn read_path_csv<R: Read>(input: R) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut rd = csv::Reader::from_reader(input);
    let mut values = Vec::new();
    let mut sigma = Vec::new();
    for (i, row) in rd.deserialize::<PathRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        if row.index != i {
            return Err(Error::Parse(format!("expected index {i}, found {}", row.index)));
        }
        if !row.value.is_finite() {
            return Err(Error::Parse(format!("non-finite value at index {i}")));
        }
        values.push(row.value);
        if let Some(s) = row.sigma_value {
            sigma.push(s);
        }
    }
    if values.is_empty() {
        return Err(Error::Parse("empty path".into()));
    }
    let companion = match sigma.len() {
        0 => None,
        l if l == values.len() => Some(sigma),
        _ => return Err(Error::Parse("sigma_value column is incomplete".into())),
    };
    Ok((values, companion))
}
