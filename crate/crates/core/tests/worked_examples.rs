//! End-to-end checks of small hand-solvable cases through the public API.

use outerh::determinant::{fk_det, fk_det_regularized};
use outerh::factor::{
    diag_commuting_check, inner_outer, reverse_cholesky, riesz_szego_positive, strongly_outer_approximants,
    uniform_outer_sequence,
};
use outerh::io::{parse_matrix, to_json};
use outerh::linalg::{diag_real, from_real_rows, identity, op_norm};
use outerh::metrics::{delta_min, dist_to_right_ideal, localized_p_norm, szego_infimum, OptimOptions};
use outerh::outerness::is_outer;
use outerh::spectral::{abs, func_calc, spectral_measure};
use outerh::{BlockStructure, CMatrix, Error, PNorm, Projection};

fn close(a: &CMatrix, b: &CMatrix, eps: f64) -> bool {
    op_norm(&(a - b)) <= eps
}

fn tri2() -> BlockStructure {
    BlockStructure::triangular(2)
}

#[test]
fn upper_triangular_two_by_two() {
    let h = from_real_rows(&[&[1.0, 5.0], &[0.0, 2.0]]);
    let bs = tri2();
    assert!((fk_det(&h).unwrap().value - 2f64.sqrt()).abs() < 1e-12);

    // h* h = [[1, 5], [5, 29]] has trace 30 and determinant 4
    let mu = spectral_measure(&abs(&h).unwrap()).unwrap();
    let disc = 221f64.sqrt();
    assert_eq!(mu.atoms.len(), 2);
    assert!((mu.atoms[0].value - (15.0 - disc).sqrt()).abs() < 1e-12);
    assert!((mu.atoms[1].value - (15.0 + disc).sqrt()).abs() < 1e-12);

    // second column has Euclidean norm sqrt(29); tau(e) = 1/2 normalizes it away
    let e = Projection::new(diag_real(&[0.0, 1.0])).unwrap();
    assert!((localized_p_norm(&h, &e, PNorm::TWO).unwrap() - 29f64.sqrt()).abs() < 1e-12);

    // |h (1 + t E12)|_2^2 = (1 + (5 + t)^2 + 4) / 2, minimized at t = -5
    let r = dist_to_right_ideal(&h, &bs, &Projection::identity(2), PNorm::TWO, &OptimOptions::default()).unwrap();
    assert!((r.value - 2.5f64.sqrt()).abs() < 1e-10);
    assert!((r.a[(0, 1)].re + 5.0).abs() < 1e-8);

    let s = szego_infimum(&h, &bs, PNorm::TWO, &OptimOptions::default()).unwrap();
    assert!((s.value - 2f64.sqrt()).abs() < 1e-8);

    let v = is_outer(&h, &bs).unwrap();
    assert!(v.outer && v.disagreements().is_empty());
}

#[test]
fn regularized_determinant() {
    let x = diag_real(&[1.0, 0.0]);
    assert_eq!(fk_det(&x).unwrap().value, 0.0);
    assert!((fk_det_regularized(&x, 1.0).unwrap().value - 2f64.sqrt()).abs() < 1e-12);
    assert!((fk_det_regularized(&CMatrix::zeros(2, 2), 0.5).unwrap().value - 0.5).abs() < 1e-12);
}

#[test]
fn column_with_zero_diagonal() {
    let f = from_real_rows(&[&[0.0, 1.0], &[0.0, 1.0]]);
    let bs = tri2();
    // f (1 + a0) = f for every a0, so the distance is |f|_2 = 1
    let r = dist_to_right_ideal(&f, &bs, &Projection::identity(2), PNorm::TWO, &OptimOptions::default()).unwrap();
    assert!((r.value - 1.0).abs() < 1e-12);
    let dm = delta_min(&f, &bs, PNorm::TWO).unwrap();
    assert!(!dm.injective());
    assert!(close(&(&f * &dm.witness), &CMatrix::zeros(2, 2), 1e-12));
    assert!(!is_outer(&f, &bs).unwrap().outer);
}

#[test]
fn symmetric_two_by_two_factorizations() {
    let f = from_real_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
    let bs = tri2();
    // Gram-Schmidt of the columns (2, 1) and (1, 2)
    let r5 = 5f64.sqrt();
    let expected = from_real_rows(&[&[r5, 4.0 / r5], &[0.0, 3.0 / r5]]);

    let io = inner_outer(&f, &bs).unwrap();
    assert!(close(&io.h, &expected, 1e-12));
    assert!(close(&(&io.u * &io.h), &f, 1e-12));

    let rs = riesz_szego_positive(&f, &bs).unwrap();
    assert!(close(&rs.h, &expected, 1e-12));
    assert!(close(&(rs.h.adjoint() * &rs.h), &(&f * &f), 1e-10));

    let g = from_real_rows(&[&[5.0, 4.0], &[4.0, 5.0]]);
    let a = reverse_cholesky(&g).unwrap();
    assert_eq!(a[(1, 0)].norm(), 0.0);
    assert!(close(&(&a * a.adjoint()), &g, 1e-12));

    assert!(matches!(inner_outer(&diag_real(&[1.0, 0.0]), &bs), Err(Error::NotFactorizable { .. })));
    assert!(matches!(riesz_szego_positive(&diag_real(&[1.0, 0.0]), &bs), Err(Error::NotFactorizable { .. })));
}

#[test]
fn truncated_inverse_sequence() {
    let h = diag_real(&[0.5, 1.0]);
    let steps = uniform_outer_sequence(&h, &tri2(), &[1, 3], PNorm::TWO).unwrap();
    // b_1 = 1 on [0, 1]: h a_1 = h, |h - 1|_2 = sqrt(0.25 / 2)
    assert!((steps[0].p_dist_to_one - 0.125f64.sqrt()).abs() < 1e-12);
    // b_3(0.5) = 2, b_3(1) = 1
    assert!(close(&steps[1].k_n, &diag_real(&[2.0, 1.0]), 1e-12));
    assert!(close(&(&h * &steps[1].a_n), &identity(2), 1e-12));

    let b2 = func_calc(|t| if t > 0.5 { 1.0 / t } else { 2.0 }, &diag_real(&[0.4, 2.0])).unwrap();
    assert!(close(&b2, &diag_real(&[2.0, 0.5]), 1e-12));
}

#[test]
fn approximants_in_the_full_algebra() {
    let bs = BlockStructure::full(2);
    let h = diag_real(&[1.0, 0.3]);
    let u = diag_commuting_check(&h, &bs).unwrap().expect("diagonal h commutes");
    let approx = strongly_outer_approximants(&h, &bs, &u, &[2, 4], PNorm::TWO).unwrap();
    assert!(close(&approx[0].h_n, &diag_real(&[1.0, 0.5]), 1e-12));
    assert!(close(&approx[1].h_n, &h, 1e-12));

    let not_dc = from_real_rows(&[&[1.0, 1.0], &[0.0, 2.0]]);
    assert!(diag_commuting_check(&not_dc, &tri2()).unwrap().is_none());
}

#[test]
fn files_round_trip() {
    let bs = BlockStructure::new(vec![1, 2]).unwrap();
    let x = from_real_rows(&[&[1.0, 2.0, 3.0], &[0.0, 4.0, 5.0], &[0.0, 6.0, 7.0]]);
    let (y, bs2) = parse_matrix(&to_json(&x, &bs)).unwrap();
    assert_eq!(x, y);
    assert_eq!(bs, bs2);
}
