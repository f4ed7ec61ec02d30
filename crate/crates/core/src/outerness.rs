//! Outerness predicates and the criteria that characterize them.
//!
//! In finite dimension an element `h` of `A` is outer exactly when it is
//! invertible (its inverse is then automatically in `A`). [`is_outer`] takes
//! that as the master verdict and evaluates every alternative criterion
//! independently, so a disagreement exposes a numerical or theoretical
//! inconsistency instead of being short-circuited.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::algebra::{basis, membership, phi, BlockStructure, Subalgebra};
use crate::determinant::fk_det;
use crate::error::{Error, Result};
use crate::factor::{self, default_n_values, inner_outer, FactorizationResult, UniformOuterStep};
use crate::linalg::{self, CMatrix, Span};
use crate::metrics::{delta_min, dist_to_right_ideal, p_norm, OptimOptions, PNorm};
use crate::spectral::Projection;
use crate::tol;

/// Relative slack for criteria built on subspace residuals or optimization.
pub const CRITERION_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Criterion {
    pub holds: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterVerdict {
    pub outer: bool,
    pub strongly_outer: bool,
    pub p: PNorm,
    pub criteria: BTreeMap<String, Criterion>,
}

impl OuterVerdict {
    /// Names of criteria that disagree with the master verdict.
    pub fn disagreements(&self) -> Vec<&str> {
        self.criteria.iter().filter(|(_, c)| c.holds != self.outer).map(|(k, _)| k.as_str()).collect()
    }
}

fn require_in_a(h: &CMatrix, bs: &BlockStructure) -> Result<()> {
    if !membership(h, bs, Subalgebra::A)? {
        return Err(Error::NotInSubalgebra("A"));
    }
    Ok(())
}

fn span_of(elems: impl Iterator<Item = CMatrix>, n: usize) -> Span {
    let gens: Vec<_> = elems.map(|x| linalg::vectorize(&x)).collect();
    Span::new(&gens, n * n)
}

/// [`is_outer_with`] at `p = 2` with default optimizer settings.
pub fn is_outer(h: &CMatrix, bs: &BlockStructure) -> Result<OuterVerdict> {
    is_outer_with(h, bs, PNorm::TWO, &OptimOptions::default())
}

/// Master verdict plus the criteria
///
/// * `phi_outer`: `phi(h)` invertible in `D`;
/// * `houterp`: `phi(h)` invertible and `|phi(h)|_p = delta^1(h)`;
/// * `innam`: `phi(h)` invertible and `phi(h) - h` in `span(h A0)`;
/// * `ideal`: `phi(h)` invertible and `span(h A0) = A0`;
/// * `louter`: `d -> h d mod span(h A0)` injective on `D`;
/// * `left_outer`: `1` in `span(A h)`.
pub fn is_outer_with(h: &CMatrix, bs: &BlockStructure, p: PNorm, opts: &OptimOptions) -> Result<OuterVerdict> {
    require_in_a(h, bs)?;
    let n = bs.n();
    let outer = linalg::is_invertible(h);
    let h_norm = p_norm(h, p);
    let h_op = linalg::op_norm(h);
    let rel = CRITERION_TOL * h_op.max(f64::MIN_POSITIVE);
    let mut criteria = BTreeMap::new();

    let ph = phi(h, bs)?;
    let phi_s = linalg::singular_values(&ph);
    let phi_outer = linalg::numerical_rank(&phi_s, n) == n;
    criteria.insert("phi_outer".into(), Criterion { holds: phi_outer, residual: *phi_s.last().unwrap() });

    let delta1 = dist_to_right_ideal(h, bs, &Projection::identity(n), p, opts)?.value;
    let gap = (delta1 - p_norm(&ph, p)).abs();
    criteria.insert("houterp".into(), Criterion { holds: phi_outer && gap <= CRITERION_TOL * h_norm, residual: gap });

    let a0 = basis(bs, Subalgebra::A0);
    let h_a0 = span_of(a0.iter().map(|b| h * b), n);
    let innam_res = h_a0.residual(&linalg::vectorize(&(&ph - h))).norm();
    criteria.insert("innam".into(), Criterion { holds: phi_outer && innam_res <= rel, residual: innam_res });

    let ideal_res = a0.iter().map(|b| h_a0.residual(&linalg::vectorize(b)).norm()).fold(0.0, f64::max);
    let ideal = h_a0.dim() == a0.len() && ideal_res <= CRITERION_TOL;
    criteria.insert("ideal".into(), Criterion { holds: phi_outer && ideal, residual: ideal_res });

    let gauge = delta_min(h, bs, PNorm::TWO)?;
    criteria.insert("louter".into(), Criterion { holds: gauge.injective(), residual: gauge.sigma_min });

    let a_h = span_of(basis(bs, Subalgebra::A).iter().map(|b| b * h), n);
    let left_res = a_h.residual(&linalg::vectorize(&linalg::identity(n))).norm();
    criteria.insert(
        "left_outer".into(),
        Criterion { holds: left_res <= CRITERION_TOL * (n as f64).sqrt(), residual: left_res },
    );

    let strongly_outer = outer && fk_det(h)?.value > 0.0;
    Ok(OuterVerdict { outer, strongly_outer, p, criteria })
}

/// Outer with `Delta(h) > 0`; coincides with outerness in finite dimension.
pub fn is_strongly_outer(h: &CMatrix, bs: &BlockStructure) -> Result<bool> {
    require_in_a(h, bs)?;
    Ok(linalg::is_invertible(h) && fk_det(h)?.value > 0.0)
}

/// Runs the uniform-outer construction for outer `h`; the witness holds when
/// the last step has `|h a_n - 1|_p <= 1e-6` and `|h a_n|_inf <= 1 + tol`.
pub fn uniform_outer_witness(h: &CMatrix, bs: &BlockStructure, p: PNorm) -> Result<(bool, Vec<UniformOuterStep>)> {
    require_in_a(h, bs)?;
    if !linalg::is_invertible(h) {
        return Ok((false, Vec::new()));
    }
    let steps = factor::uniform_outer_sequence(h, bs, &default_n_values(h), p)?;
    let slack = tol::scaled(1.0, bs.n());
    let ok = steps.last().is_some_and(|s| s.p_dist_to_one <= 1e-6 && s.op_norm_ha <= 1.0 + slack);
    Ok((ok, steps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MstkOutcome {
    pub norm_equal: bool,
    pub rigidity_holds: bool,
    /// `|a h|_p - |h|_p`.
    pub norm_gap: f64,
    /// `|h - a* a h|_inf`.
    pub rigidity_residual: f64,
}

impl MstkOutcome {
    /// Equal norms force `h = a* a h`.
    pub fn consistent(&self) -> bool {
        !self.norm_equal || self.rigidity_holds
    }
}

/// Norm-equality rigidity for a contraction `a`: `|a h|_p = |h|_p` implies
/// `h = a* a h` for finite `p`.
pub fn mstk_check(a: &CMatrix, h: &CMatrix, p: PNorm) -> Result<MstkOutcome> {
    let n = linalg::ensure_square(a)?;
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.nrows() });
    }
    if p.is_inf() {
        return Err(Error::Unsupported("norm rigidity needs a finite exponent".into()));
    }
    let slack = tol::scaled(1.0, n);
    if linalg::op_norm(a) > 1.0 + slack {
        return Err(Error::Domain("a must be a contraction".into()));
    }
    let h_norm = p_norm(h, p);
    let norm_gap = p_norm(&(a * h), p) - h_norm;
    let rigidity_residual = linalg::op_norm(&(h - a.adjoint() * a * h));
    let h_op = linalg::op_norm(h);
    Ok(MstkOutcome {
        norm_equal: norm_gap.abs() <= slack * h_norm.max(f64::MIN_POSITIVE),
        rigidity_holds: rigidity_residual <= slack * h_op,
        norm_gap,
        rigidity_residual,
    })
}

#[derive(Debug, Clone)]
pub struct PhiOuterFactor {
    pub factorization: FactorizationResult,
    /// `|u - phi(u)|_inf`; zero up to rounding because `u` must lie in `D`.
    pub diagonal_defect: f64,
    pub u_in_diagonal: bool,
}

/// `h = u g` with `u` inner and `g` outer, for `h` in `A` with `phi(h)`
/// invertible. In finite dimension `u` necessarily lies in `D`, which is
/// checked and reported.
pub fn phi_outer_factor(h: &CMatrix, bs: &BlockStructure) -> Result<PhiOuterFactor> {
    require_in_a(h, bs)?;
    let ph = phi(h, bs)?;
    if !linalg::is_invertible(&ph) {
        return Err(Error::Domain("phi(h) is singular".into()));
    }
    let factorization = inner_outer(h, bs)?;
    let diagonal_defect = linalg::op_norm(&(&factorization.u - phi(&factorization.u, bs)?));
    let u_in_diagonal = diagonal_defect <= tol::scaled(1.0, bs.n());
    Ok(PhiOuterFactor { factorization, diagonal_defect, u_in_diagonal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{random_element_seeded, ElementKind};
    use crate::linalg::{diag_real, from_real_rows, identity};

    #[test]
    fn outer_examples() {
        let bs = BlockStructure::triangular(2);
        let h = from_real_rows(&[&[1.0, 5.0], &[0.0, 2.0]]);
        let v = is_outer(&h, &bs).unwrap();
        assert!(v.outer && v.strongly_outer);
        assert!(v.disagreements().is_empty(), "{v:?}");

        let g = from_real_rows(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let v = is_outer(&g, &bs).unwrap();
        assert!(!v.outer && !v.criteria["phi_outer"].holds);
        assert!(v.disagreements().is_empty(), "{v:?}");
        // delta^1 = 1 against |phi(g)|_2 = sqrt(1/2)
        assert!((v.criteria["houterp"].residual - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);

        let v = is_outer(&identity(3), &BlockStructure::triangular(3)).unwrap();
        assert!(v.outer && v.criteria.values().all(|c| c.holds));
        assert!(v.criteria["houterp"].residual < 1e-15 && v.criteria["innam"].residual < 1e-15);
    }

    #[test]
    fn outer_requires_membership() {
        let bs = BlockStructure::triangular(2);
        let x = from_real_rows(&[&[1.0, 0.0], &[1.0, 1.0]]);
        assert!(matches!(is_outer(&x, &bs), Err(Error::NotInSubalgebra("A"))));
    }

    #[test]
    fn strongly_outer_examples() {
        let bs = BlockStructure::triangular(2);
        assert!(is_strongly_outer(&from_real_rows(&[&[1.0, 5.0], &[0.0, 2.0]]), &bs).unwrap());
        assert!(!is_strongly_outer(&from_real_rows(&[&[1.0, 5.0], &[0.0, 0.0]]), &bs).unwrap());
    }

    #[test]
    fn uniform_witness_examples() {
        let bs = BlockStructure::triangular(2);
        let (ok, steps) = uniform_outer_witness(&diag_real(&[0.5, 1.0]), &bs, PNorm::TWO).unwrap();
        assert!(ok);
        assert!(steps.iter().any(|s| s.n >= 3 && s.p_dist_to_one < 1e-14));
        let (ok, steps) = uniform_outer_witness(&diag_real(&[1.0, 0.0]), &bs, PNorm::TWO).unwrap();
        assert!(!ok && steps.is_empty());
        let (ok, steps) = uniform_outer_witness(&diag_real(&[-1.0, 1.0]), &bs, PNorm::TWO).unwrap();
        assert!(ok && steps[0].n == 1 && steps[0].p_dist_to_one < 1e-14);
    }

    #[test]
    fn mstk_examples() {
        let u = random_element_seeded(&BlockStructure::full(3), ElementKind::Unitary, 4);
        let h = random_element_seeded(&BlockStructure::full(3), ElementKind::M, 5);
        let r = mstk_check(&u, &h, PNorm::TWO).unwrap();
        assert!(r.norm_equal && r.rigidity_holds);

        let r = mstk_check(&diag_real(&[1.0, 0.0]), &diag_real(&[3.0, 0.0]), PNorm::ONE).unwrap();
        assert!(r.norm_equal && r.rigidity_holds);

        let r = mstk_check(&diag_real(&[1.0, 0.5]), &identity(2), PNorm::TWO).unwrap();
        assert!(!r.norm_equal && r.consistent());
        assert!((r.norm_gap - (0.625f64.sqrt() - 1.0)).abs() < 1e-14);

        assert!(mstk_check(&identity(2).scale(2.0), &identity(2), PNorm::TWO).is_err());
        assert!(mstk_check(&identity(2), &identity(2), PNorm::INF).is_err());
    }

    #[test]
    fn phi_outer_factor_examples() {
        let bs = BlockStructure::triangular(2);
        let h = from_real_rows(&[&[1.0, 5.0], &[0.0, 2.0]]);
        let r = phi_outer_factor(&h, &bs).unwrap();
        assert!(r.u_in_diagonal);
        assert!((&r.factorization.u - identity(2)).norm() < 1e-13);
        assert!((&r.factorization.h - &h).norm() < 1e-13);

        let r = phi_outer_factor(&diag_real(&[-1.0, 2.0]), &bs).unwrap();
        assert!((&r.factorization.u - diag_real(&[-1.0, 1.0])).norm() < 1e-14);
        assert!((&r.factorization.h - diag_real(&[1.0, 2.0])).norm() < 1e-14);

        assert!(phi_outer_factor(&from_real_rows(&[&[0.0, 1.0], &[0.0, 1.0]]), &bs).is_err());
    }

    #[test]
    fn verdicts_agree_across_exponents() {
        let mut opts = OptimOptions::default();
        opts.restarts = 2;
        for seed in 0..6u64 {
            let bs = BlockStructure::new(vec![1, 2]).unwrap();
            let mut h = random_element_seeded(&bs, ElementKind::A, seed);
            if seed % 2 == 1 {
                h[(0, 0)] = Default::default();
            }
            for p in [PNorm::ONE, PNorm::TWO, PNorm::INF] {
                let v = is_outer_with(&h, &bs, p, &opts).unwrap();
                assert_eq!(v.outer, seed % 2 == 0);
                assert!(v.disagreements().is_empty(), "seed {seed} p {p}: {v:?}");
            }
        }
    }
}
