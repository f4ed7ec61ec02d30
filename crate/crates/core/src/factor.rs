//! Factorization constructions: inner-outer `f = u h`, the positive
//! Riesz-Szego factor `f = |h|`, reverse Cholesky, the uniform-outer sequence
//! `a_n` built from `k_n = b_n(|h|)`, and strongly outer approximants of
//! diagonally commuting outers.
//!
//! Every outer factor is normalized so that `phi(h) >= 0`; this makes the
//! factorizations unique.

use crate::algebra::{membership, phi, BlockStructure, Subalgebra};
use crate::determinant::fk_det;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, C64};
use crate::metrics::{delta_min, p_norm, PNorm};
use crate::spectral::{self, BnFamily, Projection};
use crate::tol;

#[derive(Debug, Clone)]
pub struct FactorizationResult {
    pub u: CMatrix,
    pub h: CMatrix,
    /// `|u h - f|_inf` for inner-outer, `||h| - f|_inf` for Riesz-Szego.
    pub residual: f64,
    pub u_unitarity_defect: f64,
    pub h_outer: bool,
}

/// `h` in `A` and invertible: the finite-dimensional form of outerness.
pub(crate) fn invertible_in_a(h: &CMatrix, bs: &BlockStructure) -> Result<bool> {
    Ok(membership(h, bs, Subalgebra::A)? && linalg::is_invertible(h))
}

/// QR with a nonnegative real diagonal in `R`.
fn qr_positive(f: &CMatrix) -> (CMatrix, CMatrix) {
    let n = f.nrows();
    let qr = f.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= phase;
            }
            for k in 0..n {
                r[(j, k)] *= phase.conj();
            }
        }
    }
    (q, r)
}

/// Block-diagonal unitary `V` with `V* phi(h) >= 0`.
fn block_phase(h: &CMatrix, bs: &BlockStructure) -> Result<CMatrix> {
    bs.map_diagonal_blocks(h, spectral::polar_unitary)
}

/// Rewrites `f = u h` as `(u V)(V* h)` so that `phi(V* h) >= 0`.
fn normalize_pair(u: CMatrix, h: CMatrix, bs: &BlockStructure) -> Result<(CMatrix, CMatrix)> {
    let v = block_phase(&h, bs)?;
    let h = v.adjoint() * h;
    let u = u * v;
    Ok((u, h))
}

/// `f = u h` with `u` unitary and `h` outer in `A`, `phi(h) >= 0`.
///
/// Fails with [`Error::NotFactorizable`] when `d -> f d mod span(f A0)` is
/// not injective; the error carries the diagonal witness.
pub fn inner_outer(f: &CMatrix, bs: &BlockStructure) -> Result<FactorizationResult> {
    bs.check_dim(f)?;
    let gauge = delta_min(f, bs, PNorm::TWO)?;
    if !gauge.injective() {
        return Err(Error::NotFactorizable { sigma_min: gauge.sigma_min, witness: gauge.witness });
    }
    let (q, r) = qr_positive(f);
    let (u, h) = normalize_pair(q, r, bs)?;
    let residual = linalg::op_norm(&(&u * &h - f));
    let u_unitarity_defect = linalg::unitarity_defect(&u);
    let h_outer = invertible_in_a(&h, bs)?;
    if !h_outer {
        return Err(Error::NotFactorizable { sigma_min: gauge.sigma_min, witness: gauge.witness });
    }
    Ok(FactorizationResult { u, h, residual, u_unitarity_defect, h_outer })
}

/// Outer `h` with `|h| = f` for positive invertible `f`: the triangular
/// factor of `f = Q R`, so `h* h = f^2`.
pub fn riesz_szego_positive(f: &CMatrix, bs: &BlockStructure) -> Result<FactorizationResult> {
    bs.check_dim(f)?;
    // positivity check through the functional calculus domain validation
    spectral::support(f)?;
    if !linalg::is_invertible(f) {
        let gauge = delta_min(f, bs, PNorm::TWO)?;
        return Err(Error::NotFactorizable { sigma_min: gauge.sigma_min, witness: gauge.witness });
    }
    let (q, r) = qr_positive(f);
    let (u, h) = normalize_pair(q, r, bs)?;
    let residual = linalg::op_norm(&(spectral::abs(&h)? - f));
    let u_unitarity_defect = linalg::unitarity_defect(&u);
    let h_outer = invertible_in_a(&h, bs)?;
    Ok(FactorizationResult { u, h, residual, u_unitarity_defect, h_outer })
}

/// Upper-triangular `a` with `a a* = g` for positive definite `g`: the
/// Cholesky factor of the order-reversed matrix, reversed back.
pub fn reverse_cholesky(g: &CMatrix) -> Result<CMatrix> {
    let n = linalg::ensure_square(g)?;
    let slack = tol::scaled(linalg::op_norm(g), n);
    if linalg::op_norm(&(g - g.adjoint())) > slack {
        return Err(Error::NotPositiveDefinite);
    }
    let flipped = CMatrix::from_fn(n, n, |i, j| g[(n - 1 - i, n - 1 - j)]);
    let chol = linalg::hermitian_part(&flipped).cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    // the complex factorization takes square roots of negative pivots instead of failing
    if (0..n).any(|i| !(l[(i, i)].re > 0.0) || l[(i, i)].im.abs() > slack.sqrt() * l[(i, i)].re) {
        return Err(Error::NotPositiveDefinite);
    }
    let a = CMatrix::from_fn(n, n, |i, j| l[(n - 1 - i, n - 1 - j)]);
    if !linalg::is_invertible(&a) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(a)
}

#[derive(Debug, Clone)]
pub struct UniformOuterStep {
    pub n: u32,
    /// `k_n = b_n(|h|)`.
    pub k_n: CMatrix,
    /// Element of `A` with `a_n a_n* = k_n^2` and `phi(h a_n) >= 0`.
    pub a_n: CMatrix,
    /// `a_n^{-1} k_n`, unitary.
    pub u_n: CMatrix,
    pub op_norm_ha: f64,
    /// `|h a_n - 1|_p`.
    pub p_dist_to_one: f64,
    /// `Delta(h a_n)`.
    pub det_ha: f64,
    /// `|a_n^{-1} - h|_p`.
    pub inverse_gap: f64,
    /// `Re tau(h a_n)`.
    pub re_trace_ha: f64,
    /// `|h a_n - 1|_2`.
    pub l2_dist_to_one: f64,
}

/// `{1, 2, 4, ...}` up to the first power of two at least `4 / sigma_min(h)`.
pub fn default_n_values(h: &CMatrix) -> Vec<u32> {
    let s = linalg::singular_values(h);
    let smin = s.last().copied().unwrap_or(0.0);
    let limit = if smin > 0.0 { (4.0 / smin).min(f64::from(u32::MAX / 2)) } else { 1.0 };
    let mut out = vec![1u32];
    while f64::from(*out.last().unwrap()) < limit {
        let next = out.last().unwrap() * 2;
        out.push(next);
    }
    out
}

/// The sequence `a_n` with `|h a_n|_inf <= 1` and `h a_n -> 1`, built from
/// `k_n = b_n(|h|)` by reverse Cholesky of `k_n^2`.
pub fn uniform_outer_sequence(
    h: &CMatrix,
    bs: &BlockStructure,
    n_values: &[u32],
    p: PNorm,
) -> Result<Vec<UniformOuterStep>> {
    bs.check_dim(h)?;
    if !invertible_in_a(h, bs)? {
        return Err(Error::Domain("uniform outer sequence needs an outer (invertible, in A) element".into()));
    }
    let dim = bs.n();
    let one = linalg::identity(dim);
    let modulus = spectral::abs(h)?;
    n_values
        .iter()
        .map(|&n| {
            let fam = BnFamily::new(n)?;
            let k_n = spectral::func_calc(|t| fam.b(t), &modulus)?;
            let k_sq = spectral::func_calc(|t| fam.b(t).powi(2), &modulus)?;
            let a_raw = reverse_cholesky(&k_sq)?;
            let ha_raw = h * &a_raw;
            // V = blockdiag(W_k*) for the block polar parts W_k of phi(h a)
            let v = block_phase(&ha_raw, bs)?.adjoint();
            let a_n = a_raw * v;
            let ha = h * &a_n;
            let a_inv = linalg::inverse(&a_n)?;
            let u_n = &a_inv * &k_n;
            let re_trace_ha = ha.trace().re / dim as f64;
            Ok(UniformOuterStep {
                n,
                op_norm_ha: linalg::op_norm(&ha),
                p_dist_to_one: p_norm(&(&ha - &one), p),
                l2_dist_to_one: p_norm(&(&ha - &one), PNorm::TWO),
                det_ha: fk_det(&ha)?.value,
                inverse_gap: p_norm(&(&a_inv - h), p),
                re_trace_ha,
                k_n,
                a_n,
                u_n,
            })
        })
        .collect()
}

/// Tolerance for the commutator test `[|phi(h)|, u* h] = 0`.
fn commutator_slack(h: &CMatrix) -> f64 {
    let norm = linalg::op_norm(h);
    tol::scaled(norm, h.nrows()) * norm.max(1.0)
}

/// Diagonal commutation: a unitary `u` in `D` with `|phi(h)|` commuting
/// with `u* h`. Candidates are `1` and the polar unitary of `phi(h)`.
pub fn diag_commuting_check(h: &CMatrix, bs: &BlockStructure) -> Result<Option<CMatrix>> {
    bs.check_dim(h)?;
    let ph = phi(h, bs)?;
    let modulus = spectral::abs(&ph)?;
    let slack = commutator_slack(h);
    let candidates = [linalg::identity(bs.n()), block_phase(&ph, bs)?];
    Ok(candidates.into_iter().find(|u| linalg::op_norm(&linalg::commutator(&modulus, &(u.adjoint() * h))) <= slack))
}

#[derive(Debug, Clone)]
pub struct Approximant {
    pub n: u32,
    /// Spectral projection of `|phi(h)|` for `(1/n, inf)`.
    pub e_n: Projection,
    /// `h e_n + (1/n) u (1 - e_n)`.
    pub h_n: CMatrix,
    /// `|h_n - h|_p`.
    pub distance: f64,
    pub det: f64,
}

/// Strongly outer approximants `h_n = h e_n + (1/n) u (1 - e_n)` of a
/// diagonally commuting outer `h` with witness `u`.
pub fn strongly_outer_approximants(
    h: &CMatrix,
    bs: &BlockStructure,
    u: &CMatrix,
    n_values: &[u32],
    p: PNorm,
) -> Result<Vec<Approximant>> {
    bs.check_dim(h)?;
    bs.check_dim(u)?;
    if !invertible_in_a(h, bs)? {
        return Err(Error::Domain("approximants need an outer element".into()));
    }
    if !membership(u, bs, Subalgebra::D)? || linalg::unitarity_defect(u) > tol::scaled(1.0, bs.n()) {
        return Err(Error::Domain("witness must be a unitary in D".into()));
    }
    let modulus = spectral::abs(&phi(h, bs)?)?;
    if linalg::op_norm(&linalg::commutator(&modulus, &(u.adjoint() * h))) > commutator_slack(h) {
        return Err(Error::Domain("element is not diagonally commuting for the given unitary".into()));
    }
    let one = linalg::identity(bs.n());
    n_values
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::Domain("n must be positive".into()));
            }
            let cut = 1.0 / n as f64;
            let e_n = spectral::spectral_projection(&modulus, |t| t > cut)?;
            let rest = &one - e_n.matrix();
            let h_n = h * e_n.matrix() + (u * rest) * c(cut, 0.0);
            Ok(Approximant { n, distance: p_norm(&(&h_n - h), p), det: fk_det(&h_n)?.value, e_n, h_n })
        })
        .collect()
}

/// `||phi(h_n)|^2 - (|phi(h)|^2 e_n + n^-2 (1 - e_n))|_inf`.
pub fn approximant_identity_defect(h: &CMatrix, bs: &BlockStructure, approx: &Approximant) -> Result<f64> {
    let ph = phi(h, bs)?;
    let phn = phi(&approx.h_n, bs)?;
    let lhs = phn.adjoint() * &phn;
    let e = approx.e_n.matrix();
    let inv_sq = 1.0 / (approx.n as f64).powi(2);
    let rhs = ph.adjoint() * &ph * e + (linalg::identity(bs.n()) - e) * C64::new(inv_sq, 0.0);
    Ok(linalg::op_norm(&(lhs - rhs)))
}
