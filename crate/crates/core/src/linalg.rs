//! Dense complex matrix helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::tol;

pub type C64 = Complex<f64>;

/// Dense square complex matrix; the single representation for elements of
/// `M`, `A`, `D` and every `L^p` space (they coincide as sets here).
pub type CMatrix = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    CMatrix::from_fn(n, rows.first().map_or(0, |r| r.len()), |i, j| c(rows[i][j], 0.0))
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { C64::default() })
}

pub fn ensure_square(x: &CMatrix) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: x.ncols() });
    }
    Ok(x.nrows())
}

pub fn all_finite(x: &CMatrix) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Singular values sorted in descending order.
pub fn singular_values(x: &CMatrix) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    svd(x).s
}

/// Operator norm (largest singular value).
pub fn op_norm(x: &CMatrix) -> f64 {
    singular_values(x).first().copied().unwrap_or(0.0)
}

/// SVD `x = U diag(s) V*` with singular values in descending order. For an
/// `m x k` input `U` is `m x min(m, k)` and `V` is `k x min(m, k)`, both with
/// orthonormal columns.
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn recompose(&self) -> CMatrix {
        let mut us = self.u.clone();
        for (j, &v) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(v);
        }
        us * self.v.adjoint()
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Unitary `[[c, s], [-s e^{-i phi}, c e^{-i phi}]]` that zeroes the
/// coupling `g e^{i phi}` between two coordinates with weights `a`, `b`.
fn jacobi_rotation(a: f64, b: f64, coupling: C64) -> (f64, f64, C64) {
    let g = coupling.norm();
    let phase = (coupling / g).conj();
    let zeta = (b - a) / (2.0 * g);
    let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
    let c = 1.0 / t.hypot(1.0);
    (c, c * t, phase)
}

/// Applies the rotation to columns `p`, `q` of `m`.
fn rotate_columns(m: &mut CMatrix, p: usize, q: usize, (c, s, phase): (f64, f64, C64)) {
    for i in 0..m.nrows() {
        let (xp, xq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = xp * c - xq * phase * s;
        m[(i, q)] = xp * s + xq * phase * c;
    }
}

/// Extends orthonormal columns `0..filled` of `u` to an orthonormal set,
/// each time taking the coordinate vector with the largest component
/// outside the current span (at least `1/sqrt(m)` in norm).
fn complete_orthonormal(u: &mut CMatrix, filled: usize) {
    let m = u.nrows();
    for next in filled..u.ncols() {
        let mut best: Option<DVector<C64>> = None;
        for e in 0..m {
            let mut v = DVector::<C64>::zeros(m);
            v[e] = c(1.0, 0.0);
            for _ in 0..2 {
                for j in 0..next {
                    let col = u.column(j).into_owned();
                    let proj = col.dotc(&v);
                    v -= col * proj;
                }
            }
            if best.as_ref().map_or(true, |b| v.norm() > b.norm()) {
                best = Some(v);
            }
        }
        let v = best.expect("m > 0 when columns remain");
        let norm = v.norm();
        u.set_column(next, &(v / c(norm, 0.0)));
    }
}

/// One-sided (Hestenes) Jacobi SVD. Columns are rotated pairwise until
/// mutually orthogonal to working precision; singular values come out with
/// high relative accuracy and repeated or zero values need no special care.
pub fn svd(x: &CMatrix) -> Svd {
    let (m, k) = x.shape();
    if m < k {
        let t = svd(&x.adjoint());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let mut w = x.clone();
    let mut v = CMatrix::identity(k, k);
    let threshold = f64::EPSILON * m as f64;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let a = w.column(p).norm_squared();
                let b = w.column(q).norm_squared();
                let g = w.column(p).dotc(&w.column(q));
                if g.norm() <= threshold * (a * b).sqrt() || g.norm() == 0.0 {
                    continue;
                }
                rotated = true;
                let rot = jacobi_rotation(a, b, g);
                rotate_columns(&mut w, p, q, rot);
                rotate_columns(&mut v, p, q, rot);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..k).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let top = s.first().copied().unwrap_or(0.0);
    let mut u = CMatrix::zeros(m, k);
    let mut filled = 0;
    for (col, &j) in order.iter().enumerate() {
        if !(s[col] > top * f64::EPSILON * m as f64 && s[col] > 0.0) {
            break;
        }
        // columns near the noise floor are only orthogonal up to roundoff
        // relative to their own size, so reorthogonalize
        let mut q = w.column(j) / c(s[col], 0.0);
        for _ in 0..2 {
            for i in 0..col {
                let prev = u.column(i).into_owned();
                let proj = prev.dotc(&q);
                q -= prev * proj;
            }
        }
        let norm = q.norm();
        if norm < 0.5 {
            break;
        }
        u.set_column(col, &(q / c(norm, 0.0)));
        filled += 1;
    }
    complete_orthonormal(&mut u, filled);
    let v = CMatrix::from_fn(k, k, |r, col| v[(r, order[col])]);
    Svd { u, s, v }
}

/// Number of singular values above the rank cut-off.
pub fn numerical_rank(s: &[f64], n: usize) -> usize {
    let largest = s.first().copied().unwrap_or(0.0);
    if largest == 0.0 {
        return 0;
    }
    let cut = tol::rank_cutoff(largest, n);
    s.iter().filter(|&&v| v > cut).count()
}

pub fn is_invertible(x: &CMatrix) -> bool {
    let n = x.nrows();
    n > 0 && numerical_rank(&singular_values(x), n) == n
}

pub fn inverse(x: &CMatrix) -> Result<CMatrix> {
    if !is_invertible(x) {
        return Err(Error::Domain("matrix is numerically singular".into()));
    }
    x.clone().try_inverse().ok_or_else(|| Error::Domain("matrix is numerically singular".into()))
}

pub fn hermitian_part(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()).scale(0.5)
}

/// Eigendecomposition of the Hermitian part of `x` by cyclic Jacobi
/// rotations, eigenvalues ascending.
pub fn hermitian_eigen(x: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = ensure_square(x)?;
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    if !all_finite(x) {
        return Err(Error::EigenFailure);
    }
    let mut h = hermitian_part(x);
    let mut v = CMatrix::identity(n, n);
    let scale = h.norm();
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| h[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let g = h[(p, q)];
                if g.norm() == 0.0 {
                    continue;
                }
                let rot = jacobi_rotation(h[(p, p)].re, h[(q, q)].re, g);
                // h <- J* h J
                rotate_columns(&mut h, p, q, rot);
                let (c, s, phase) = rot;
                for j in 0..n {
                    let (xp, xq) = (h[(p, j)], h[(q, j)]);
                    h[(p, j)] = xp * c - xq * (phase * s).conj();
                    h[(q, j)] = xp * s + xq * (phase * c).conj();
                }
                h[(p, q)] = C64::default();
                h[(q, p)] = C64::default();
                rotate_columns(&mut v, p, q, rot);
            }
        }
    }
    if !converged {
        return Err(Error::EigenFailure);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| h[(a, a)].re.total_cmp(&h[(b, b)].re));
    let values = order.iter().map(|&i| h[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| v[(r, order[col])]);
    Ok((values, vectors))
}

/// `U diag(values) U*`.
pub fn reassemble(vectors: &CMatrix, values: &[f64]) -> CMatrix {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * vectors.adjoint()
}

pub fn commutator(x: &CMatrix, y: &CMatrix) -> CMatrix {
    x * y - y * x
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    op_norm(&(u.adjoint() * u - identity(n)))
}

/// Real-linear trace inner product `Re tr(x* y)`.
pub fn real_inner(x: &CMatrix, y: &CMatrix) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

pub fn vectorize(x: &CMatrix) -> DVector<C64> {
    DVector::from_column_slice(x.as_slice())
}

pub fn unvectorize(v: &DVector<C64>, n: usize) -> CMatrix {
    CMatrix::from_column_slice(n, n, v.as_slice())
}

/// A subspace of `C^m` spanned by a list of generators, stored through the
/// thin SVD of the generator matrix with numerically dependent directions
/// dropped.
pub struct Span {
    /// Orthonormal basis, one column per retained direction.
    basis: DMatrix<C64>,
    /// Right singular vectors scaled by `1/s`, so that coefficients of the
    /// best approximation are `coeff_map * basis^* v`.
    coeff_map: DMatrix<C64>,
    dim: usize,
    ambient: usize,
}

impl Span {
    pub fn new(generators: &[DVector<C64>], ambient: usize) -> Self {
        let k = generators.len();
        if k == 0 {
            return Span { basis: DMatrix::zeros(ambient, 0), coeff_map: DMatrix::zeros(0, 0), dim: 0, ambient };
        }
        let g = DMatrix::from_fn(ambient, k, |r, col| generators[col][r]);
        let dec = svd(&g);
        let largest = dec.s.first().copied().unwrap_or(0.0);
        let cut = tol::rank_cutoff(largest, ambient.max(k));
        let r = if largest == 0.0 { 0 } else { dec.s.iter().filter(|&&v| v > cut).count() };
        let basis = dec.u.columns(0, r).into_owned();
        let mut coeff_map = dec.v.columns(0, r).into_owned();
        for j in 0..r {
            coeff_map.column_mut(j).scale_mut(1.0 / dec.s[j]);
        }
        Span { basis, coeff_map, dim: r, ambient }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    /// Orthogonal projection of `v` onto the span.
    pub fn project(&self, v: &DVector<C64>) -> DVector<C64> {
        if self.dim == 0 {
            return DVector::zeros(self.ambient);
        }
        &self.basis * (self.basis.adjoint() * v)
    }

    /// `v` minus its projection.
    pub fn residual(&self, v: &DVector<C64>) -> DVector<C64> {
        v - self.project(v)
    }

    /// Coefficients `c` over the original generators with `sum c_i g_i`
    /// equal to the projection of `v` (minimum-norm choice).
    pub fn coefficients(&self, v: &DVector<C64>) -> DVector<C64> {
        if self.dim == 0 {
            return DVector::zeros(self.coeff_map.nrows());
        }
        &self.coeff_map * (self.basis.adjoint() * v)
    }
}
