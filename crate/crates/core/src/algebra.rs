//! The model algebra: `M_n(C)` with normalized trace, a consecutive block
//! partition, and the subalgebras it determines.
//!
//! * `D`: block-diagonal matrices;
//! * `A`: block upper-triangular matrices;
//! * `A0`: elements of `A` whose diagonal blocks vanish.
//!
//! The conditional expectation [`phi`] onto `D` is compression to the
//! diagonal blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, C64};
use crate::tol;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    block_sizes: Vec<usize>,
    /// `offsets[k]` is the first coordinate of block `k`; the last entry is `n`.
    offsets: Vec<usize>,
    block_of: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subalgebra {
    A,
    A0,
    D,
}

impl BlockStructure {
    pub fn new(block_sizes: Vec<usize>) -> Result<Self> {
        if block_sizes.is_empty() {
            return Err(Error::InvalidBlocks("at least one block is required".into()));
        }
        if let Some(k) = block_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidBlocks(format!("block {k} has size 0")));
        }
        let mut offsets = Vec::with_capacity(block_sizes.len() + 1);
        let mut block_of = Vec::new();
        let mut acc = 0;
        for (k, &s) in block_sizes.iter().enumerate() {
            offsets.push(acc);
            block_of.extend(std::iter::repeat_n(k, s));
            acc += s;
        }
        offsets.push(acc);
        Ok(BlockStructure { block_sizes, offsets, block_of })
    }

    /// Scalar upper-triangular structure: `n` blocks of size one.
    pub fn triangular(n: usize) -> Self {
        Self::new(vec![1; n]).expect("n >= 1")
    }

    /// One block: `A = D = M`.
    pub fn full(n: usize) -> Self {
        Self::new(vec![n]).expect("n >= 1")
    }

    pub fn n(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn num_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i]
    }

    /// Coordinate range of block `k`.
    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Whether the `(i, j)` entry may be nonzero in the given subalgebra.
    pub fn allows(&self, which: Subalgebra, i: usize, j: usize) -> bool {
        let (bi, bj) = (self.block_of[i], self.block_of[j]);
        match which {
            Subalgebra::A => bi <= bj,
            Subalgebra::A0 => bi < bj,
            Subalgebra::D => bi == bj,
        }
    }

    pub fn dim(&self, which: Subalgebra) -> usize {
        let sizes = &self.block_sizes;
        let diag: usize = sizes.iter().map(|s| s * s).sum();
        let upper: usize = (0..sizes.len())
            .flat_map(|i| (i + 1..sizes.len()).map(move |j| (i, j)))
            .map(|(i, j)| sizes[i] * sizes[j])
            .sum();
        match which {
            Subalgebra::A => diag + upper,
            Subalgebra::A0 => upper,
            Subalgebra::D => diag,
        }
    }

    pub fn check_dim(&self, x: &CMatrix) -> Result<()> {
        let n = linalg::ensure_square(x)?;
        if n != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: n });
        }
        Ok(())
    }

    /// Zeroes every entry outside the pattern of `which`.
    pub fn compress(&self, x: &CMatrix, which: Subalgebra) -> CMatrix {
        CMatrix::from_fn(x.nrows(), x.ncols(), |i, j| if self.allows(which, i, j) { x[(i, j)] } else { C64::default() })
    }

    /// Block-diagonal matrix with `f` applied to each diagonal block of `x`.
    pub fn map_diagonal_blocks<F>(&self, x: &CMatrix, mut f: F) -> Result<CMatrix>
    where
        F: FnMut(&CMatrix) -> Result<CMatrix>,
    {
        let n = self.n();
        let mut out = CMatrix::zeros(n, n);
        for k in 0..self.num_blocks() {
            let r = self.block_range(k);
            let block = x.view((r.start, r.start), (r.len(), r.len())).into_owned();
            let mapped = f(&block)?;
            out.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&mapped);
        }
        Ok(out)
    }
}

/// Normalized trace `tr(x)/n`.
pub fn tau(x: &CMatrix) -> Result<C64> {
    let n = linalg::ensure_square(x)?;
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    Ok(x.trace() / n as f64)
}

/// Conditional expectation onto `D`: compression to the diagonal blocks.
pub fn phi(x: &CMatrix, bs: &BlockStructure) -> Result<CMatrix> {
    bs.check_dim(x)?;
    Ok(bs.compress(x, Subalgebra::D))
}

/// Tolerance-based membership in `A`, `A0` or `D`.
pub fn membership(x: &CMatrix, bs: &BlockStructure, which: Subalgebra) -> Result<bool> {
    bs.check_dim(x)?;
    let n = bs.n();
    let slack = tol::scaled(linalg::op_norm(x), n);
    let outside = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !bs.allows(which, i, j))
        .map(|(i, j)| x[(i, j)].norm())
        .fold(0.0, f64::max);
    if outside > slack {
        return Ok(false);
    }
    if which == Subalgebra::A0 {
        let diag = phi(x, bs)?;
        return Ok(linalg::op_norm(&diag) <= slack);
    }
    Ok(true)
}

/// Matrix units spanning the requested subalgebra, in row-major order of
/// their nonzero position.
pub fn basis(bs: &BlockStructure, which: Subalgebra) -> Vec<CMatrix> {
    let n = bs.n();
    let mut out = Vec::with_capacity(bs.dim(which));
    for i in 0..n {
        for j in 0..n {
            if bs.allows(which, i, j) {
                let mut e = CMatrix::zeros(n, n);
                e[(i, j)] = c(1.0, 0.0);
                out.push(e);
            }
        }
    }
    out
}

/// Distribution selector for [`random_element`].
///
/// Entries are independent complex Gaussians with `E|z|^2 = 1` on the
/// allowed pattern. `Unitary` is Haar-distributed (phase-corrected QR of a
/// Gaussian matrix), `Positive` is `g g*` for Gaussian `g`, and
/// `PositiveDefinite` additionally lifts every eigenvalue to at least
/// `floor * lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    A,
    A0,
    D,
    M,
    Unitary,
    Positive,
    PositiveDefinite { floor: f64 },
}

pub const DEFAULT_PD_FLOOR: f64 = 1e-3;

impl ElementKind {
    pub fn positive_definite() -> Self {
        ElementKind::PositiveDefinite { floor: DEFAULT_PD_FLOOR }
    }
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn gaussian_pattern<R: Rng + ?Sized>(bs: &BlockStructure, which: Option<Subalgebra>, rng: &mut R) -> CMatrix {
    let n = bs.n();
    let mut x = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if which.is_none_or(|w| bs.allows(w, i, j)) {
                x[(i, j)] = gaussian(rng);
            }
        }
    }
    x
}

/// Haar unitary of size `n`.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_element<R: Rng + ?Sized>(bs: &BlockStructure, kind: ElementKind, rng: &mut R) -> CMatrix {
    let n = bs.n();
    match kind {
        ElementKind::A => gaussian_pattern(bs, Some(Subalgebra::A), rng),
        ElementKind::A0 => gaussian_pattern(bs, Some(Subalgebra::A0), rng),
        ElementKind::D => gaussian_pattern(bs, Some(Subalgebra::D), rng),
        ElementKind::M => gaussian_pattern(bs, None, rng),
        ElementKind::Unitary => random_unitary(n, rng),
        ElementKind::Positive => {
            let g = gaussian_pattern(bs, None, rng);
            linalg::hermitian_part(&(&g * g.adjoint()))
        }
        ElementKind::PositiveDefinite { floor } => {
            let g = gaussian_pattern(bs, None, rng);
            let p = &g * g.adjoint();
            let (mut vals, vecs) = linalg::hermitian_eigen(&p).expect("Hermitian input");
            let top = vals.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
            for v in &mut vals {
                *v = v.max(floor * top);
            }
            linalg::hermitian_part(&linalg::reassemble(&vecs, &vals))
        }
    }
}

pub fn random_element_seeded(bs: &BlockStructure, kind: ElementKind, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_element(bs, kind, &mut rng)
}
