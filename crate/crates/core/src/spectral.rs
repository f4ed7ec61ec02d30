//! Modulus, polar decomposition, Borel functional calculus on positive
//! matrices, support projections and spectral distribution measures.
//!
//! Singular values, moduli and polar parts come from the SVD; the functional
//! calculus and spectral measures use the Hermitian eigensolver.

use serde::{Deserialize, Serialize};

use crate::algebra::tau;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::tol;

/// An orthogonal projection, Hermitian and idempotent within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection(CMatrix);

impl Projection {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let n = linalg::ensure_square(&matrix)?;
        let slack = tol::scaled(1.0, n);
        let herm = linalg::op_norm(&(&matrix - matrix.adjoint()));
        let idem = linalg::op_norm(&(&matrix * &matrix - &matrix));
        if herm > slack || idem > slack {
            return Err(Error::Domain(format!("not a projection (|e - e*| = {herm:e}, |e^2 - e| = {idem:e})")));
        }
        Ok(Projection(linalg::hermitian_part(&matrix)))
    }

    pub fn identity(n: usize) -> Self {
        Projection(linalg::identity(n))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Rank, read off the trace.
    pub fn rank(&self) -> usize {
        self.0.trace().re.round().max(0.0) as usize
    }

    pub fn is_zero(&self) -> bool {
        self.rank() == 0
    }

    pub fn complement(&self) -> Projection {
        Projection(linalg::identity(self.0.nrows()) - &self.0)
    }
}

#[derive(Debug, Clone)]
pub struct PolarDecomposition {
    /// Partial isometry with initial projection the support of `modulus`;
    /// unitary when the input is invertible.
    pub w: CMatrix,
    pub modulus: CMatrix,
}

/// `|x| = (x* x)^{1/2}`.
pub fn abs(x: &CMatrix) -> Result<CMatrix> {
    linalg::ensure_square(x)?;
    let d = linalg::svd(x);
    Ok(linalg::hermitian_part(&linalg::reassemble(&d.v, &d.s)))
}

pub fn polar(x: &CMatrix) -> Result<PolarDecomposition> {
    let n = linalg::ensure_square(x)?;
    let d = linalg::svd(x);
    let rank = linalg::numerical_rank(&d.s, n);
    let modulus = linalg::hermitian_part(&linalg::reassemble(&d.v, &d.s));
    let w = d.u.columns(0, rank) * d.v.columns(0, rank).adjoint();
    Ok(PolarDecomposition { w, modulus })
}

/// Unitary `w` with `x = w |x|`; on the kernel of `|x|` the choice is the
/// one made by the SVD.
pub fn polar_unitary(x: &CMatrix) -> Result<CMatrix> {
    linalg::ensure_square(x)?;
    let d = linalg::svd(x);
    Ok(&d.u * d.v.adjoint())
}

/// Eigendecomposition of a positive semidefinite matrix; tiny negative
/// eigenvalues produced by rounding are clamped to zero.
fn psd_eigen(x: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = linalg::ensure_square(x)?;
    let (mut vals, vecs) = linalg::hermitian_eigen(x)?;
    let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let slack = tol::scaled(top, n);
    let herm_defect = linalg::op_norm(&(x - x.adjoint()));
    if herm_defect > slack {
        return Err(Error::Domain(format!("matrix is not Hermitian (defect {herm_defect:e})")));
    }
    if let Some(&lowest) = vals.first() {
        if lowest < -slack {
            return Err(Error::Domain(format!("matrix is not positive semidefinite (eigenvalue {lowest:e})")));
        }
    }
    let cut = tol::rank_cutoff(top, n);
    for v in &mut vals {
        if *v <= cut {
            *v = 0.0;
        }
    }
    Ok((vals, vecs))
}

/// `U f(Lambda) U*` for `x = U Lambda U*` positive semidefinite.
///
/// Eigenvalues under the rank cut-off are evaluated as exactly zero. A
/// non-finite value of `f` at an eigenvalue is a domain error.
pub fn func_calc<F: Fn(f64) -> f64>(f: F, x: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = psd_eigen(x)?;
    let mapped: Vec<f64> = vals
        .iter()
        .map(|&t| {
            let v = f(t);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Domain(format!("function is undefined at eigenvalue {t:e}")))
            }
        })
        .collect::<Result<_>>()?;
    Ok(linalg::hermitian_part(&linalg::reassemble(&vecs, &mapped)))
}

/// Spectral projection of a positive semidefinite `x` for the eigenvalues
/// accepted by `keep`.
pub fn spectral_projection<F: Fn(f64) -> bool>(x: &CMatrix, keep: F) -> Result<Projection> {
    let (vals, vecs) = psd_eigen(x)?;
    let ind: Vec<f64> = vals.iter().map(|&t| if keep(t) { 1.0 } else { 0.0 }).collect();
    Ok(Projection(linalg::hermitian_part(&linalg::reassemble(&vecs, &ind))))
}

/// Projection onto the eigenvalues above the rank cut-off.
pub fn support(x: &CMatrix) -> Result<Projection> {
    spectral_projection(x, |t| t > 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// Atomic probability measure on `[0, inf)`: the distribution of a positive
/// matrix under the normalized trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub atoms: Vec<Atom>,
}

/// Relative distance below which neighbouring eigenvalues share an atom.
pub const ATOM_MERGE_RELATIVE: f64 = 1e-8;

impl SpectralMeasure {
    /// `sum_i w_i f(lambda_i)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(a.value)).sum()
    }

    /// Mass of the set accepted by `inside`.
    pub fn mass<F: Fn(f64) -> bool>(&self, inside: F) -> f64 {
        self.atoms.iter().filter(|a| inside(a.value)).map(|a| a.weight).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }
}

pub fn spectral_measure(x: &CMatrix) -> Result<SpectralMeasure> {
    let (vals, _) = psd_eigen(x)?;
    let n = vals.len();
    let unit = 1.0 / n as f64;
    let mut atoms: Vec<Atom> = Vec::new();
    let mut members = 0usize;
    for &v in &vals {
        if let Some(last) = atoms.last_mut() {
            let reference = v.abs().max(last.value.abs());
            if (v - last.value).abs() <= ATOM_MERGE_RELATIVE * reference {
                last.value = (last.value * members as f64 + v) / (members as f64 + 1.0);
                members += 1;
                last.weight = members as f64 * unit;
                continue;
            }
        }
        atoms.push(Atom { value: v, weight: unit });
        members = 1;
    }
    Ok(SpectralMeasure { atoms })
}

/// `tau(f(x))` computed through the functional calculus.
pub fn trace_of<F: Fn(f64) -> f64>(f: F, x: &CMatrix) -> Result<f64> {
    Ok(tau(&func_calc(f, x)?)?.re)
}

/// The truncation family `b_n(t) = 1/t` for `t > 1/n` and `n` otherwise,
/// with `c_n(t) = t b_n(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BnFamily {
    n: u32,
}

impl BnFamily {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("b_n requires n >= 1".into()));
        }
        Ok(BnFamily { n })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    fn threshold(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn b(&self, t: f64) -> f64 {
        if t > self.threshold() {
            1.0 / t
        } else {
            self.n as f64
        }
    }

    /// `1 / b_n(t)`.
    pub fn b_inv(&self, t: f64) -> f64 {
        if t > self.threshold() {
            t
        } else {
            self.threshold()
        }
    }

    pub fn c(&self, t: f64) -> f64 {
        if t > self.threshold() {
            1.0
        } else {
            t * self.n as f64
        }
    }
}

/// The pair `(b_n, c_n)` as closures.
pub fn bn_family(n: u32) -> Result<(impl Fn(f64) -> f64, impl Fn(f64) -> f64)> {
    let fam = BnFamily::new(n)?;
    Ok((move |t| fam.b(t), move |t| fam.c(t)))
}
