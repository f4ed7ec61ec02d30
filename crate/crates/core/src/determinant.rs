//! Fuglede-Kadison determinant `Delta(x) = exp tau(log |x|)`.
//!
//! On `M_n(C)` with the normalized trace this is the geometric mean of the
//! singular values, i.e. `|det x|^{1/n}`. The log is accumulated as a sum of
//! logarithms so ill-conditioned inputs neither overflow nor underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetMethod {
    ExactLogtrace,
    DetRoot,
    Regularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetResult {
    pub value: f64,
    /// `-inf` exactly when `value == 0`.
    pub log_value: f64,
    pub method: DetMethod,
}

impl DetResult {
    fn from_log(log_value: f64, method: DetMethod) -> Self {
        let value = if log_value == f64::NEG_INFINITY { 0.0 } else { log_value.exp() };
        DetResult { value, log_value, method }
    }

    pub fn is_zero(&self) -> bool {
        self.log_value == f64::NEG_INFINITY
    }
}

/// `exp((1/n) sum log s_i)` over the singular values; zero when the modulus
/// has a numerically zero eigenvalue.
pub fn fk_det(x: &CMatrix) -> Result<DetResult> {
    let n = linalg::ensure_square(x)?;
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let s = linalg::singular_values(x);
    if linalg::numerical_rank(&s, n) < n {
        return Ok(DetResult::from_log(f64::NEG_INFINITY, DetMethod::ExactLogtrace));
    }
    let log = s.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
    Ok(DetResult::from_log(log, DetMethod::ExactLogtrace))
}

/// `|det x|^{1/n}` from the LU factors; the independent route used to
/// cross-check [`fk_det`].
pub fn det_root(x: &CMatrix) -> Result<DetResult> {
    let n = linalg::ensure_square(x)?;
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let lu = x.clone().lu();
    let u = lu.u();
    let mut log = 0.0;
    for i in 0..n {
        let d = u[(i, i)].norm();
        if d == 0.0 {
            return Ok(DetResult::from_log(f64::NEG_INFINITY, DetMethod::DetRoot));
        }
        log += d.ln();
    }
    Ok(DetResult::from_log(log / n as f64, DetMethod::DetRoot))
}

/// `Delta(|x| + eps 1)`, decreasing to [`fk_det`] as `eps` decreases to 0.
pub fn fk_det_regularized(x: &CMatrix, eps: f64) -> Result<DetResult> {
    let n = linalg::ensure_square(x)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("regularization must be positive, got {eps}")));
    }
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let s = linalg::singular_values(x);
    let log = s.iter().map(|v| (v + eps).ln()).sum::<f64>() / n as f64;
    Ok(DetResult::from_log(log, DetMethod::Regularized))
}
