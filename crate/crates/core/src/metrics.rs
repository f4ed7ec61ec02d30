//! Normalized Schatten norms, localized seminorms, distances to right
//! ideals, the injectivity gauge of `d -> f d mod span(f A0)`, and the Szego
//! infimum
//!
//! ```text
//! inf { |h (a + d)|_p : a in A0, d in D, Delta(d) >= 1 }.
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{basis, membership, phi, BlockStructure, Subalgebra};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, Span, C64};
use crate::optim::{self, BfgsConfig, NelderMeadConfig};
use crate::spectral::Projection;
use crate::tol;

/// Exponent `p` in `[1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PNorm(f64);

impl PNorm {
    pub const ONE: PNorm = PNorm(1.0);
    pub const TWO: PNorm = PNorm(2.0);
    pub const INF: PNorm = PNorm(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::Domain(format!("p must lie in [1, inf], got {p}")));
        }
        Ok(PNorm(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_inf(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_two(self) -> bool {
        self.0 == 2.0
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for PNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(PNorm::INF),
            other => {
                let p: f64 = other.parse().map_err(|_| Error::Parse {
                    field: "p".into(),
                    message: format!("expected a number >= 1 or `inf`, got `{s}`"),
                })?;
                if p.is_infinite() {
                    return Err(Error::Parse { field: "p".into(), message: "use the token `inf`".into() });
                }
                PNorm::new(p)
            }
        }
    }
}

impl Serialize for PNorm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_inf() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => PNorm::new(p).map_err(serde::de::Error::custom),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `((1/count) sum s_i^p)^{1/p}`, or `max s_i` for `p = inf`.
fn schatten(s: &[f64], count: f64, p: PNorm) -> f64 {
    if p.is_inf() {
        return s.iter().copied().fold(0.0, f64::max);
    }
    let q = p.value();
    let top = s.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    // scaled to avoid overflow of s^p
    let sum: f64 = s.iter().map(|v| (v / top).powf(q)).sum();
    top * (sum / count).powf(1.0 / q)
}

/// `tau(|x|^p)^{1/p}`; the operator norm for `p = inf`.
pub fn p_norm(x: &CMatrix, p: PNorm) -> f64 {
    let n = x.nrows().max(1);
    schatten(&linalg::singular_values(x), n as f64, p)
}

/// `((1/tau(e)) tau((e x* x e)^{p/2}))^{1/p}`.
pub fn localized_p_norm(x: &CMatrix, e: &Projection, p: PNorm) -> Result<f64> {
    let n = linalg::ensure_square(x)?;
    if e.matrix().nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: e.matrix().nrows() });
    }
    let rank = e.rank();
    if rank == 0 {
        return Err(Error::Domain("localized seminorm needs a nonzero projection".into()));
    }
    Ok(schatten(&linalg::singular_values(&(x * e.matrix())), rank as f64, p))
}

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Start iterative solves from the `p = 2` closed form.
    pub warm_start: bool,
    pub nelder_mead: NelderMeadConfig,
    pub bfgs: BfgsConfig,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            restarts: 16,
            seed: 0x5eed,
            warm_start: true,
            nelder_mead: NelderMeadConfig::default(),
            bfgs: BfgsConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InfimumResult {
    pub value: f64,
    /// Optimal element of `A0`.
    pub a: CMatrix,
    /// Optimal diagonal factor, for problems that range over `D` as well.
    pub d: Option<CMatrix>,
    pub converged: bool,
    pub iterations: usize,
    pub restarts_used: usize,
}

fn combine(coeffs: &DVector<C64>, elems: &[CMatrix], n: usize) -> CMatrix {
    elems.iter().zip(coeffs.iter()).fold(CMatrix::zeros(n, n), |acc, (b, &w)| acc + b * w)
}

fn coeffs_to_reals(coeffs: &DVector<C64>) -> Vec<f64> {
    coeffs.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn reals_to_matrix(x: &[f64], elems: &[CMatrix], n: usize) -> CMatrix {
    elems.iter().enumerate().fold(CMatrix::zeros(n, n), |acc, (i, b)| acc + b * c(x[2 * i], x[2 * i + 1]))
}

fn perturbed(center: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    center.iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn require_in_d(e: &Projection, bs: &BlockStructure) -> Result<()> {
    if !membership(e.matrix(), bs, Subalgebra::D)? {
        return Err(Error::NotInSubalgebra("D"));
    }
    if e.is_zero() {
        return Err(Error::Domain("projection must be nonzero".into()));
    }
    Ok(())
}

/// `delta^e(f) = inf { |f (1 + a0)|^e_p : a0 in A0 }`.
///
/// At `p = 2` this is an orthogonal projection onto `span { f b e }` over the
/// matrix units `b` of `A0`. Other exponents run multi-start Nelder-Mead over
/// the real coordinates of `a0`, seeded from the `p = 2` minimizer.
pub fn dist_to_right_ideal(
    f: &CMatrix,
    bs: &BlockStructure,
    e: &Projection,
    p: PNorm,
    opts: &OptimOptions,
) -> Result<InfimumResult> {
    bs.check_dim(f)?;
    require_in_d(e, bs)?;
    let n = bs.n();
    let units = basis(bs, Subalgebra::A0);
    let em = e.matrix();
    let gens: Vec<_> = units.iter().map(|b| linalg::vectorize(&(f * b * em))).collect();
    let span = Span::new(&gens, n * n);
    let coeffs = -span.coefficients(&linalg::vectorize(&(f * em)));
    let a_ls = combine(&coeffs, &units, n);
    let one = linalg::identity(n);

    if p.is_two() {
        let value = localized_p_norm(&(f * (&one + &a_ls)), e, p)?;
        return Ok(InfimumResult { value, a: a_ls, d: None, converged: true, iterations: 1, restarts_used: 0 });
    }

    // for f in A, phi(f (1 + a0) e) = phi(f) e and phi contracts every p-norm,
    // so reaching |phi(f) e| certifies the least-squares point as optimal
    if membership(f, bs, Subalgebra::A)? {
        let lower = localized_p_norm(&phi(f, bs)?, e, p)?;
        let at_ls = localized_p_norm(&(f * (&one + &a_ls)), e, p)?;
        if at_ls <= lower * (1.0 + 1e-12) {
            return Ok(InfimumResult {
                value: at_ls,
                a: a_ls,
                d: None,
                converged: true,
                iterations: 1,
                restarts_used: 0,
            });
        }
    }

    let objective = |x: &[f64]| {
        let a = reals_to_matrix(x, &units, n);
        localized_p_norm(&(f * (&one + a)), e, p).unwrap_or(f64::INFINITY)
    };
    let start = if opts.warm_start { coeffs_to_reals(&coeffs) } else { vec![0.0; 2 * units.len()] };
    let scale = start.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<optim::Outcome> = None;
    let mut iterations = 0;
    let runs = opts.restarts.max(1);
    for r in 0..runs {
        let x0 = if r == 0 { start.clone() } else { perturbed(&start, 0.5 * scale, &mut rng) };
        let out = optim::nelder_mead(objective, &x0, &opts.nelder_mead);
        iterations += out.iterations;
        if best.as_ref().is_none_or(|b| out.value < b.value) {
            best = Some(out);
        }
    }
    let best = best.expect("at least one run");
    Ok(InfimumResult {
        value: best.value,
        a: reals_to_matrix(&best.x, &units, n),
        d: None,
        converged: best.converged,
        iterations,
        restarts_used: runs - 1,
    })
}

/// Smallest singular value of `L: D -> C^{n x n} / span(f A0)`,
/// `d -> f d mod span(f A0)`, with a unit (Frobenius) minimizing `d`.
#[derive(Debug, Clone)]
pub struct DeltaMin {
    pub sigma_min: f64,
    pub witness: CMatrix,
    pub rank_tol: f64,
}

impl DeltaMin {
    /// Injectivity of `L`, equivalently `f e` outside `span(f A0)` for every
    /// nonzero projection `e` of `D`.
    pub fn injective(&self) -> bool {
        self.sigma_min > self.rank_tol
    }
}

/// Residual of `x` against `span(f A0)`, as a matrix.
pub fn residual_mod_f_a0(f: &CMatrix, bs: &BlockStructure, x: &CMatrix) -> Result<CMatrix> {
    bs.check_dim(f)?;
    let n = bs.n();
    let gens: Vec<_> = basis(bs, Subalgebra::A0).iter().map(|b| linalg::vectorize(&(f * b))).collect();
    let span = Span::new(&gens, n * n);
    Ok(linalg::unvectorize(&span.residual(&linalg::vectorize(x)), n))
}

pub fn delta_min(f: &CMatrix, bs: &BlockStructure, p: PNorm) -> Result<DeltaMin> {
    if !p.is_two() {
        return Err(Error::Unsupported(format!("delta_min is implemented for p = 2 only (got p = {p})")));
    }
    bs.check_dim(f)?;
    let n = bs.n();
    let gens: Vec<_> = basis(bs, Subalgebra::A0).iter().map(|b| linalg::vectorize(&(f * b))).collect();
    let span = Span::new(&gens, n * n);
    let d_units = basis(bs, Subalgebra::D);
    let cols: Vec<_> = d_units.iter().map(|d| span.residual(&linalg::vectorize(&(f * d)))).collect();
    let l = CMatrix::from_fn(n * n, cols.len(), |r, j| cols[j][r]);
    let dec = linalg::svd(&l);
    let last = dec.s.len() - 1;
    let sigma_min = dec.s[last];
    let mut v = dec.v.column(last).into_owned();
    if let Some(big) = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) {
        if big.norm() > 0.0 {
            let phase = big.conj() / big.norm();
            v *= phase;
        }
    }
    let witness = combine(&v, &d_units, n);
    let rank_tol = tol::rank_cutoff(linalg::op_norm(f), n);
    Ok(DeltaMin { sigma_min, witness, rank_tol })
}

/// Real coordinates of Hermitian elements of `D`: one per diagonal entry and
/// two (real, imaginary) per strictly upper entry inside a block.
struct HermitianCoords {
    n: usize,
    diag: Vec<usize>,
    off: Vec<(usize, usize)>,
}

impl HermitianCoords {
    fn new(bs: &BlockStructure) -> Self {
        let n = bs.n();
        let diag = (0..n).collect();
        let off = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| bs.block_of(i) == bs.block_of(j))
            .collect();
        HermitianCoords { n, diag, off }
    }

    fn len(&self) -> usize {
        self.diag.len() + 2 * self.off.len()
    }

    fn to_matrix(&self, x: &[f64]) -> CMatrix {
        let mut s = CMatrix::zeros(self.n, self.n);
        for (k, &i) in self.diag.iter().enumerate() {
            s[(i, i)] = c(x[k], 0.0);
        }
        let base = self.diag.len();
        for (k, &(i, j)) in self.off.iter().enumerate() {
            let z = c(x[base + 2 * k], x[base + 2 * k + 1]);
            s[(i, j)] = z;
            s[(j, i)] = z.conj();
        }
        s
    }

    fn from_matrix(&self, s: &CMatrix) -> Vec<f64> {
        let mut x: Vec<f64> = self.diag.iter().map(|&i| s[(i, i)].re).collect();
        for &(i, j) in &self.off {
            x.push(s[(i, j)].re);
            x.push(s[(i, j)].im);
        }
        x
    }

    /// Coordinate gradient from a Hermitian gradient matrix in the
    /// `Re tr(x* y)` geometry.
    fn gradient(&self, g: &CMatrix) -> Vec<f64> {
        let mut out: Vec<f64> = self.diag.iter().map(|&i| g[(i, i)].re).collect();
        for &(i, j) in &self.off {
            out.push(2.0 * g[(i, j)].re);
            out.push(2.0 * g[(i, j)].im);
        }
        out
    }
}

/// `exp(s - tau(s))` together with the eigendecomposition of the shifted
/// exponent.
fn unit_det_exp(s: &CMatrix) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    let n = s.nrows();
    let shift = s.trace().re / n as f64;
    let centered = s - linalg::identity(n).scale(shift);
    let (vals, vecs) = linalg::hermitian_eigen(&centered)?;
    let ev: Vec<f64> = vals.iter().map(|v| v.exp()).collect();
    Ok((linalg::hermitian_part(&linalg::reassemble(&vecs, &ev)), vals, vecs))
}

/// Adjoint of the Frechet derivative of `exp` at `U diag(vals) U*` applied
/// to `g` (Daleckii-Krein divided differences).
fn exp_derivative_adjoint(vals: &[f64], vecs: &CMatrix, g: &CMatrix) -> CMatrix {
    let m = vecs.adjoint() * g * vecs;
    let k = vals.len();
    let weighted = CMatrix::from_fn(k, k, |i, j| {
        let (a, b) = (vals[i], vals[j]);
        let diff = a - b;
        let l = if diff.abs() < 1e-12 { (0.5 * (a + b)).exp() } else { b.exp() * diff.exp_m1() / diff };
        m[(i, j)] * l
    });
    vecs * weighted * vecs.adjoint()
}

/// Numerical minimization of `|h (a + d)|_p` over `a in A0` and positive
/// `d = exp(s)` in `D` with `tau(s) = 0`, so `Delta(d) = 1`.
///
/// At `p = 2` the `a`-subproblem is an exact least-squares solve and the
/// reduced objective in `s` is minimized by BFGS with the analytic gradient.
/// Other exponents use multi-start Nelder-Mead over `(a, s)` seeded from the
/// `p = 2` solution.
pub fn szego_infimum(h: &CMatrix, bs: &BlockStructure, p: PNorm, opts: &OptimOptions) -> Result<InfimumResult> {
    bs.check_dim(h)?;
    if !linalg::all_finite(h) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let n = bs.n();
    let nf = n as f64;
    let units = basis(bs, Subalgebra::A0);
    let gens: Vec<_> = units.iter().map(|b| linalg::vectorize(&(h * b))).collect();
    let span = Span::new(&gens, n * n);
    let coords = HermitianCoords::new(bs);
    let hadj = h.adjoint();

    // F(s) = |h (a*(s) + exp(s'))|_2^2 with the optimal a*(s).
    let solve = |x: &[f64]| -> Option<(f64, Vec<f64>, CMatrix, CMatrix)> {
        let s = coords.to_matrix(x);
        let (d, vals, vecs) = unit_det_exp(&s).ok()?;
        if !linalg::all_finite(&d) {
            return None;
        }
        let target = linalg::vectorize(&(h * &d));
        let r = span.residual(&target);
        let resid = linalg::unvectorize(&r, n);
        let value = resid.norm_squared() / nf;
        let g_d = phi(&linalg::hermitian_part(&(&hadj * &resid)), bs).ok()?.scale(2.0 / nf);
        let g_s = phi(&linalg::hermitian_part(&exp_derivative_adjoint(&vals, &vecs, &g_d)), bs).ok()?;
        let tr = g_s.trace().re / nf;
        let g_s = g_s - linalg::identity(n).scale(tr);
        let a = -combine(&span.coefficients(&target), &units, n);
        Some((value, coords.gradient(&g_s), a, d))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let runs = opts.restarts.max(1);
    let mut best: Option<(optim::Outcome, bool)> = None;
    let mut iterations = 0;
    for r in 0..runs {
        let x0: Vec<f64> =
            if r == 0 { vec![0.0; coords.len()] } else { perturbed(&vec![0.0; coords.len()], 1.0, &mut rng) };
        let out = optim::bfgs(
            |x| match solve(x) {
                Some((v, g, _, _)) => (v, g),
                None => (f64::INFINITY, vec![0.0; x.len()]),
            },
            &x0,
            &opts.bfgs,
        );
        iterations += out.iterations;
        let conv = out.converged;
        if best.as_ref().is_none_or(|(b, _)| out.value < b.value) {
            best = Some((out, conv));
        }
    }
    let (best, converged) = best.expect("at least one run");
    let (value_sq, _, a2, d2) = solve(&best.x).ok_or(Error::Domain("Szego objective is not finite".into()))?;

    if p.is_two() {
        return Ok(InfimumResult {
            value: value_sq.max(0.0).sqrt(),
            a: a2,
            d: Some(d2),
            converged,
            iterations,
            restarts_used: runs - 1,
        });
    }

    // general p: joint search over (a, s)
    let na = 2 * units.len();
    let objective = |x: &[f64]| {
        let a = reals_to_matrix(&x[..na], &units, n);
        match unit_det_exp(&coords.to_matrix(&x[na..])) {
            Ok((d, _, _)) if linalg::all_finite(&d) => p_norm(&(h * (a + d)), p),
            _ => f64::INFINITY,
        }
    };
    let s_best = logm_hermitian(&d2)?;
    let mut start = if opts.warm_start {
        let a_coeffs: Vec<f64> = units
            .iter()
            .flat_map(|b| {
                let (i, j) = unit_position(b);
                [a2[(i, j)].re, a2[(i, j)].im]
            })
            .collect();
        a_coeffs
    } else {
        vec![0.0; na]
    };
    start.extend(if opts.warm_start { coords.from_matrix(&s_best) } else { vec![0.0; coords.len()] });
    let scale = start.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut best_nm: Option<optim::Outcome> = None;
    for r in 0..runs {
        let x0 = if r == 0 { start.clone() } else { perturbed(&start, 0.25 * scale, &mut rng) };
        let out = optim::nelder_mead(objective, &x0, &opts.nelder_mead);
        iterations += out.iterations;
        if best_nm.as_ref().is_none_or(|b| out.value < b.value) {
            best_nm = Some(out);
        }
    }
    let best_nm = best_nm.expect("at least one run");
    let a = reals_to_matrix(&best_nm.x[..na], &units, n);
    let (d, _, _) = unit_det_exp(&coords.to_matrix(&best_nm.x[na..]))?;
    Ok(InfimumResult {
        value: best_nm.value,
        a,
        d: Some(d),
        converged: best_nm.converged,
        iterations,
        restarts_used: runs - 1,
    })
}

fn unit_position(b: &CMatrix) -> (usize, usize) {
    let n = b.nrows();
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).find(|&(i, j)| b[(i, j)] != C64::default()).expect("matrix unit")
}

fn logm_hermitian(d: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = linalg::hermitian_eigen(d)?;
    if vals.first().is_some_and(|&v| v <= 0.0) {
        return Err(Error::Domain("logarithm of a non-positive matrix".into()));
    }
    let logs: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    Ok(linalg::hermitian_part(&linalg::reassemble(&vecs, &logs)))
}
