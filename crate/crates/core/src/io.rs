//! JSON matrix files:
//! `{"n": 2, "blocks": [1, 1], "matrix": {"re": [[1, 5], [0, 2]], "im": [[0, 0], [0, 0]]}}`.
//!
//! Rows are listed top to bottom; `im` may be omitted for real matrices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algebra::BlockStructure;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixData {
    /// Omits `im` when every imaginary part is zero.
    pub fn from_matrix(x: &CMatrix) -> Self {
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..x.nrows()).map(|i| (0..x.ncols()).map(|j| f(&x[(i, j)])).collect()).collect()
        };
        let re = rows(|z| z.re);
        let im = if x.iter().all(|z| z.im == 0.0) { None } else { Some(rows(|z| z.im)) };
        MatrixData { re, im }
    }

    pub fn to_matrix(&self, n: usize) -> Result<CMatrix> {
        check_rows("matrix.re", &self.re, n)?;
        if let Some(im) = &self.im {
            check_rows("matrix.im", im, n)?;
        }
        Ok(CMatrix::from_fn(n, n, |i, j| C64::new(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))))
    }
}

fn check_rows(field: &'static str, rows: &[Vec<f64>], n: usize) -> Result<()> {
    if rows.len() != n {
        return Err(Error::Parse { field: field.into(), message: format!("expected {n} rows, found {}", rows.len()) });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Parse {
                field: field.into(),
                message: format!("row {i} has {} entries, expected {n}", row.len()),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse { field: field.into(), message: format!("entry ({i}, {j}) is not finite") });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    pub blocks: Vec<usize>,
    pub matrix: MatrixData,
}

impl MatrixFile {
    pub fn new(x: &CMatrix, bs: &BlockStructure) -> Self {
        MatrixFile { n: x.nrows(), blocks: bs.block_sizes().to_vec(), matrix: MatrixData::from_matrix(x) }
    }

    /// Validates the header and converts to a matrix with its block structure.
    pub fn decode(&self) -> Result<(CMatrix, BlockStructure)> {
        if self.n == 0 {
            return Err(Error::Parse { field: "n".into(), message: "must be positive".into() });
        }
        let total: usize = self.blocks.iter().sum();
        if total != self.n {
            return Err(Error::Parse {
                field: "blocks".into(),
                message: format!("sizes sum to {total}, expected n = {}", self.n),
            });
        }
        let bs = BlockStructure::new(self.blocks.clone())
            .map_err(|e| Error::Parse { field: "blocks".into(), message: e.to_string() })?;
        Ok((self.matrix.to_matrix(self.n)?, bs))
    }
}

pub fn parse_matrix(text: &str) -> Result<(CMatrix, BlockStructure)> {
    let file: MatrixFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse { field: json_field(&e.to_string()).into(), message: e.to_string() })?;
    file.decode()
}

// serde_json names missing fields in its message; surface that as the field
fn json_field(message: &str) -> &'static str {
    for field in ["blocks", "matrix", "re", "im", "n"] {
        if message.contains(&format!("`{field}`")) {
            return field;
        }
    }
    "json"
}

pub fn to_json(x: &CMatrix, bs: &BlockStructure) -> String {
    serde_json::to_string_pretty(&MatrixFile::new(x, bs)).expect("matrix files always serialize")
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<(CMatrix, BlockStructure)> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn write_matrix(path: impl AsRef<Path>, x: &CMatrix, bs: &BlockStructure) -> Result<()> {
    bs.check_dim(x)?;
    fs::write(path, to_json(x, bs) + "\n")?;
    Ok(())
}
