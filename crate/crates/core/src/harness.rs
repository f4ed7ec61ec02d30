//! Seeded randomized property checks over dimensions, block structures and
//! exponents, aggregated into a [`VerificationReport`].
//!
//! Every trial draws its instances from a ChaCha stream derived from
//! `(master_seed, property, dimension, trial)`, so a report does not depend
//! on thread scheduling and any failure can be replayed in isolation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{basis, membership, phi, random_element, tau, BlockStructure, ElementKind, Subalgebra};
use crate::determinant::{det_root, fk_det};
use crate::error::{Error, Result};
use crate::factor::{
    approximant_identity_defect, default_n_values, diag_commuting_check, inner_outer, riesz_szego_positive,
    strongly_outer_approximants, uniform_outer_sequence,
};
use crate::io::MatrixData;
use crate::linalg::{self, c, CMatrix, Span, C64};
use crate::metrics::{delta_min, dist_to_right_ideal, p_norm, residual_mod_f_a0, szego_infimum, OptimOptions, PNorm};
use crate::outerness::{is_outer_with, is_strongly_outer, mstk_check, uniform_outer_witness};
use crate::spectral::{self, BnFamily, Projection};
use crate::tol;

/// Largest condition number of generated invertible instances.
pub const CONDITION_CAP: f64 = 1e4;
/// Condition number targeted by the near-singular stratum.
pub const NEAR_SINGULAR_CONDITION: f64 = 1e6;
/// Failing inputs kept per property.
pub const MAX_RECORDED_FAILURES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub dims: RangeInclusive<usize>,
    /// Trials per property and dimension.
    pub trials: usize,
    pub master_seed: u64,
    pub p_values: Vec<PNorm>,
    /// Optimizer restarts for the Szegő and distance problems.
    pub restarts: usize,
    /// Restrict the run to properties whose name contains one of these.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub only: Vec<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            dims: 2..=5,
            trials: 20,
            master_seed: 42,
            p_values: vec![PNorm::ONE, PNorm::TWO, PNorm::INF],
            restarts: 4,
            only: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub dim: usize,
    pub trial: usize,
    pub seed: u64,
    pub blocks: Vec<usize>,
    pub residual: f64,
    pub message: String,
    pub inputs: BTreeMap<String, MatrixData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub name: String,
    pub description: String,
    pub trials: usize,
    pub failures: usize,
    pub worst_residual: f64,
    /// Acceptance bound the residual is compared with, as text.
    pub config: String,
    pub failing_inputs: Vec<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub version: String,
    pub master_seed: u64,
    pub timestamp: String,
    pub config: SuiteConfig,
    pub properties: Vec<PropertyRecord>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn total_failures(&self) -> usize {
        self.properties.iter().map(|p| p.failures).sum()
    }

    pub fn property(&self, name: &str) -> Option<&PropertyRecord> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Fixed-width table, one row per property.
    pub fn table(&self) -> String {
        let width = self.properties.iter().map(|p| p.name.len()).max().unwrap_or(8).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>7}  {:>8}  {:>14}  bound", "property", "trials", "failures", "worst");
        for p in &self.properties {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>8}  {:>14.6e}  {}",
                p.name, p.trials, p.failures, p.worst_residual, p.config
            );
        }
        let _ = writeln!(
            out,
            "{} properties, {} failures: {}",
            self.properties.len(),
            self.total_failures(),
            if self.passed { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Outcome of one trial of one property.
#[derive(Debug, Clone)]
pub struct Check {
    pub residual: f64,
    pub passed: bool,
    pub skipped: bool,
    pub message: String,
    pub blocks: Vec<usize>,
    pub inputs: Vec<(String, CMatrix)>,
}

impl Check {
    fn new(bs: &BlockStructure) -> Self {
        Check {
            residual: 0.0,
            passed: true,
            skipped: false,
            message: String::new(),
            blocks: bs.block_sizes().to_vec(),
            inputs: Vec::new(),
        }
    }

    fn skip(bs: &BlockStructure) -> Self {
        Check { skipped: true, ..Check::new(bs) }
    }

    fn input(mut self, name: &str, x: &CMatrix) -> Self {
        self.inputs.push((name.to_string(), x.clone()));
        self
    }

    /// Records `residual <= bound` under `label`.
    fn bound(&mut self, label: &str, residual: f64, bound: f64) {
        let ok = residual <= bound;
        self.note(label, ok);
        if residual.is_nan() {
            self.residual = f64::NAN;
        } else if !self.residual.is_nan() {
            self.residual = self.residual.max(residual);
        }
    }

    /// Records a boolean condition under `label`.
    fn require(&mut self, label: &str, ok: bool) {
        self.note(label, ok);
    }

    fn note(&mut self, label: &str, ok: bool) {
        if !ok {
            self.passed = false;
            if !self.message.is_empty() {
                self.message.push_str("; ");
            }
            self.message.push_str(label);
        }
    }
}

/// Per-trial context: a dimension, a block structure drawn from the trial's
/// strategy, and an owned RNG stream.
pub struct Trial {
    pub n: usize,
    pub bs: BlockStructure,
    pub rng: ChaCha8Rng,
    pub p_values: Vec<PNorm>,
    pub opts: OptimOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStrategy {
    /// `n` blocks of size one: upper-triangular matrices.
    AllOnes,
    /// One block: `A = M = D`.
    Single,
    /// Random composition of `n`.
    Mixed,
}

impl BlockStrategy {
    pub fn for_trial(index: usize) -> Self {
        [BlockStrategy::AllOnes, BlockStrategy::Mixed, BlockStrategy::Single][index % 3]
    }

    pub fn sample<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> BlockStructure {
        match self {
            BlockStrategy::AllOnes => BlockStructure::triangular(n),
            BlockStrategy::Single => BlockStructure::full(n),
            BlockStrategy::Mixed => {
                let mut sizes = Vec::new();
                let mut left = n;
                while left > 0 {
                    let s = rng.random_range(1..=left.min(3));
                    sizes.push(s);
                    left -= s;
                }
                BlockStructure::new(sizes).expect("positive sizes summing to n")
            }
        }
    }
}

fn condition(x: &CMatrix) -> f64 {
    let s = linalg::singular_values(x);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

impl Trial {
    pub fn element(&mut self, kind: ElementKind) -> CMatrix {
        random_element(&self.bs, kind, &mut self.rng)
    }

    /// Element of `A` with condition number at most [`CONDITION_CAP`].
    pub fn invertible_a(&mut self) -> CMatrix {
        let bs = self.bs.clone();
        invertible_in(&bs, ElementKind::A, &mut self.rng)
    }

    /// Element of `A` with one rank-deficient diagonal block.
    pub fn singular_a(&mut self) -> CMatrix {
        let h = self.element(ElementKind::A);
        let k = self.rng.random_range(0..self.bs.num_blocks());
        kill_direction_in_block(&h, &self.bs, k, &mut self.rng)
    }

    pub fn unitary(&mut self) -> CMatrix {
        let n = self.n;
        crate::algebra::random_unitary(n, &mut self.rng)
    }

    /// Options for outerness verdicts. Extra restarts cannot change a
    /// verdict: the distance only decides a criterion when `phi(h)` is
    /// invertible, and then the least-squares start is certified optimal.
    pub fn verdict_opts(&self) -> OptimOptions {
        OptimOptions { restarts: 1, ..self.opts }
    }

    pub fn complex_scalar(&mut self) -> C64 {
        let r: f64 = self.rng.random_range(0.2..5.0);
        let t: f64 = self.rng.random_range(0.0..std::f64::consts::TAU);
        C64::from_polar(r, t)
    }
}

fn invertible_in<R: Rng + ?Sized>(bs: &BlockStructure, kind: ElementKind, rng: &mut R) -> CMatrix {
    for _ in 0..1000 {
        let x = random_element(bs, kind, rng);
        if condition(&x) <= CONDITION_CAP {
            return x;
        }
    }
    // every draw was badly conditioned: shift towards the identity instead
    random_element(bs, kind, rng) + linalg::identity(bs.n()).scale(4.0)
}

/// Multiplies diagonal block `k` of `h` on the right by `1 - v v*` for a
/// random unit vector `v` supported in that block.
fn kill_direction_in_block<R: Rng + ?Sized>(h: &CMatrix, bs: &BlockStructure, k: usize, rng: &mut R) -> CMatrix {
    let n = bs.n();
    let range = bs.block_range(k);
    let mut v = nalgebra::DVector::<C64>::zeros(n);
    for i in range {
        v[i] = crate::algebra::gaussian(rng);
    }
    let v = v.normalize();
    let proj = linalg::identity(n) - &v * v.adjoint();
    h * proj
}

type PropertyFn = fn(&mut Trial) -> Result<Check>;

pub struct Property {
    pub name: &'static str,
    pub description: &'static str,
    pub bound: &'static str,
    run: PropertyFn,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

/// Seed of the RNG stream for one trial.
pub fn trial_seed(master_seed: u64, property: &str, dim: usize, trial: usize) -> u64 {
    mix(mix(mix(master_seed ^ name_hash(property)) ^ dim as u64) ^ trial as u64)
}

fn make_trial(cfg: &SuiteConfig, n: usize, trial: usize, seed: u64) -> Trial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bs = BlockStrategy::for_trial(trial).sample(n, &mut rng);
    let mut opts = OptimOptions::default();
    opts.restarts = cfg.restarts;
    opts.seed = seed;
    Trial { n, bs, rng, p_values: cfg.p_values.clone(), opts }
}

/// Runs one trial of a named property; used for replaying failures.
pub fn run_trial(cfg: &SuiteConfig, property: &str, dim: usize, trial: usize) -> Result<Check> {
    let prop = properties()
        .into_iter()
        .find(|p| p.name == property)
        .ok_or_else(|| Error::Domain(format!("unknown property {property}")))?;
    let seed = trial_seed(cfg.master_seed, property, dim, trial);
    (prop.run)(&mut make_trial(cfg, dim, trial, seed))
}

fn validate(cfg: &SuiteConfig) -> Result<()> {
    if *cfg.dims.start() < 2 || cfg.dims.is_empty() {
        return Err(Error::Domain(format!("dimensions must start at 2 or above, got {:?}", cfg.dims)));
    }
    if cfg.trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    if cfg.p_values.is_empty() {
        return Err(Error::Domain("at least one exponent is required".into()));
    }
    Ok(())
}

/// Runs every property for every dimension in `cfg.dims`, `cfg.trials`
/// times each, in parallel. Property failures and library errors inside a
/// trial are recorded in the report; only an invalid configuration is an
/// error.
pub fn run_suite(cfg: &SuiteConfig) -> Result<VerificationReport> {
    validate(cfg)?;
    let props: Vec<Property> = properties()
        .into_iter()
        .filter(|p| cfg.only.is_empty() || cfg.only.iter().any(|o| p.name.contains(o.as_str())))
        .collect();
    let jobs: Vec<(usize, usize, usize)> = (0..props.len())
        .flat_map(|pi| cfg.dims.clone().flat_map(move |n| (0..cfg.trials).map(move |t| (pi, n, t))))
        .collect();

    let outcomes: Vec<(usize, usize, usize, u64, Check)> = jobs
        .par_iter()
        .map(|&(pi, n, t)| {
            let prop = &props[pi];
            let seed = trial_seed(cfg.master_seed, prop.name, n, t);
            let mut trial = make_trial(cfg, n, t, seed);
            let blocks = trial.bs.block_sizes().to_vec();
            let check = (prop.run)(&mut trial).unwrap_or_else(|e| Check {
                residual: f64::INFINITY,
                passed: false,
                skipped: false,
                message: format!("error: {e}"),
                blocks,
                inputs: Vec::new(),
            });
            (pi, n, t, seed, check)
        })
        .collect();

    let mut records: Vec<PropertyRecord> = props
        .iter()
        .map(|p| PropertyRecord {
            name: p.name.to_string(),
            description: p.description.to_string(),
            trials: 0,
            failures: 0,
            worst_residual: 0.0,
            config: p.bound.to_string(),
            failing_inputs: Vec::new(),
        })
        .collect();
    for (pi, n, t, seed, check) in outcomes {
        if check.skipped {
            continue;
        }
        let rec = &mut records[pi];
        rec.trials += 1;
        if check.residual.is_nan() || check.residual > rec.worst_residual {
            rec.worst_residual = check.residual;
        }
        if !check.passed {
            rec.failures += 1;
            if rec.failing_inputs.len() < MAX_RECORDED_FAILURES {
                rec.failing_inputs.push(FailureRecord {
                    dim: n,
                    trial: t,
                    seed,
                    blocks: check.blocks,
                    residual: check.residual,
                    message: check.message,
                    inputs: check.inputs.iter().map(|(k, x)| (k.clone(), MatrixData::from_matrix(x))).collect(),
                });
            }
        }
    }
    let passed = records.iter().all(|r| r.failures == 0);
    Ok(VerificationReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.master_seed,
        timestamp: chrono::Utc::now().to_rfc3339(),
        config: cfg.clone(),
        properties: records,
        passed,
    })
}

fn opn(x: &CMatrix) -> f64 {
    linalg::op_norm(x)
}

fn tol_for(norm: f64, n: usize) -> f64 {
    tol::scaled(norm, n)
}

/// The registered properties, in report order.
pub fn properties() -> Vec<Property> {
    vec![
        Property {
            name: "phi_idempotent",
            description: "phi(phi(x)) = phi(x) and phi(a) is the block diagonal of a with a - phi(a) in A0",
            bound: "tol",
            run: |t| {
                let x = t.element(ElementKind::M);
                let a = t.element(ElementKind::A);
                let px = phi(&x, &t.bs)?;
                let pa = phi(&a, &t.bs)?;
                let mut ch = Check::new(&t.bs).input("x", &x).input("a", &a);
                ch.bound("idempotent", opn(&(phi(&px, &t.bs)? - &px)), tol_for(opn(&x), t.n));
                ch.require("phi(a) in D", membership(&pa, &t.bs, Subalgebra::D)?);
                ch.require("a - phi(a) in A0", membership(&(&a - &pa), &t.bs, Subalgebra::A0)?);
                Ok(ch)
            },
        },
        Property {
            name: "phi_trace_preserving",
            description: "tau(phi(x)) = tau(x)",
            bound: "1e-12",
            run: |t| {
                let x = t.element(ElementKind::M);
                let mut ch = Check::new(&t.bs).input("x", &x);
                ch.bound("trace", (tau(&phi(&x, &t.bs)?)? - tau(&x)?).norm(), 1e-12);
                Ok(ch)
            },
        },
        Property {
            name: "phi_bimodule",
            description: "phi(d1 x d2) = d1 phi(x) d2 for d1, d2 in D",
            bound: "tol * |d1| |x| |d2|",
            run: |t| {
                let x = t.element(ElementKind::M);
                let d1 = t.element(ElementKind::D);
                let d2 = t.element(ElementKind::D);
                let lhs = phi(&(&d1 * &x * &d2), &t.bs)?;
                let rhs = &d1 * phi(&x, &t.bs)? * &d2;
                let scale = opn(&d1) * opn(&x) * opn(&d2);
                let mut ch = Check::new(&t.bs).input("x", &x).input("d1", &d1).input("d2", &d2);
                ch.bound("bimodule", opn(&(lhs - rhs)), tol_for(scale, t.n));
                Ok(ch)
            },
        },
        Property {
            name: "phi_multiplicative_on_a",
            description: "phi(ab) = phi(a) phi(b) for a, b in A",
            bound: "tol * |a| |b|",
            run: |t| {
                let a = t.element(ElementKind::A);
                let b = t.element(ElementKind::A);
                let lhs = phi(&(&a * &b), &t.bs)?;
                let rhs = phi(&a, &t.bs)? * phi(&b, &t.bs)?;
                let mut ch = Check::new(&t.bs).input("a", &a).input("b", &b);
                ch.bound("multiplicative", opn(&(lhs - rhs)), tol_for(opn(&a) * opn(&b), t.n));
                Ok(ch)
            },
        },
        Property {
            name: "phi_contractive",
            description: "|phi(x)|_p <= |x|_p for every configured p",
            bound: "tol * |x|_p",
            run: |t| {
                let x = t.element(ElementKind::M);
                let px = phi(&x, &t.bs)?;
                let mut ch = Check::new(&t.bs).input("x", &x);
                for &p in &t.p_values {
                    let (lhs, rhs) = (p_norm(&px, p), p_norm(&x, p));
                    ch.bound(&format!("p = {p}"), (lhs - rhs).max(0.0), tol_for(rhs, t.n));
                }
                Ok(ch)
            },
        },
        Property {
            name: "a_plus_adjoint_spans",
            description: "basis(A) together with its adjoints spans M",
            bound: "dimension n^2",
            run: |t| {
                let mut gens: Vec<_> = basis(&t.bs, Subalgebra::A).iter().map(linalg::vectorize).collect();
                gens.extend(basis(&t.bs, Subalgebra::A).iter().map(|b| linalg::vectorize(&b.adjoint())));
                let dim = Span::new(&gens, t.n * t.n).dim();
                let mut ch = Check::new(&t.bs);
                ch.bound("span deficit", (t.n * t.n - dim) as f64, 0.0);
                Ok(ch)
            },
        },
        Property {
            name: "eigen_reconstruction",
            description: "U diag(lambda) U* = x for Hermitian x, and x = w |x| for the polar decomposition",
            bound: "tol",
            run: |t| {
                let g = t.element(ElementKind::M);
                let x = linalg::hermitian_part(&g);
                let (vals, vecs) = linalg::hermitian_eigen(&x)?;
                let mut ch = Check::new(&t.bs).input("g", &g);
                ch.bound("eigen", opn(&(linalg::reassemble(&vecs, &vals) - &x)), tol_for(opn(&x), t.n));
                let pd = spectral::polar(&g)?;
                ch.bound("polar", opn(&(&pd.w * &pd.modulus - &g)), tol_for(opn(&g), t.n));
                Ok(ch)
            },
        },
        Property {
            name: "spectral_measure_identity",
            description: "sum w_i f(lambda_i) = tau(f(|h|)) for f in {t, t^2, log(1+t), c_n}",
            bound: "1e-10",
            run: |t| {
                let h = t.element(ElementKind::M);
                let modulus = spectral::abs(&h)?;
                let m = spectral::spectral_measure(&modulus)?;
                let n_fam = t.rng.random_range(1..=16u32);
                let fam = BnFamily::new(n_fam)?;
                let mut ch = Check::new(&t.bs).input("h", &h);
                let fs: [(&str, Box<dyn Fn(f64) -> f64>); 4] = [
                    ("t", Box::new(|x| x)),
                    ("t^2", Box::new(|x| x * x)),
                    ("log(1+t)", Box::new(|x: f64| x.ln_1p())),
                    ("c_n", Box::new(move |x| fam.c(x))),
                ];
                for (label, f) in fs.iter() {
                    let lhs = m.integrate(f);
                    let rhs = spectral::trace_of(f, &modulus)?;
                    ch.bound(label, (lhs - rhs).abs(), 1e-10);
                }
                Ok(ch)
            },
        },
        Property {
            name: "cn_contraction_and_support",
            description: "|c_n(|h|)| <= 1, and (1/b_n)(|h|) b_n(|h|) = support(|h|) for invertible h",
            bound: "tol",
            run: |t| {
                let h = t.invertible_a();
                let modulus = spectral::abs(&h)?;
                let fam = BnFamily::new(t.rng.random_range(1..=64u32))?;
                let cn = spectral::func_calc(|x| fam.c(x), &modulus)?;
                let prod = spectral::func_calc(|x| fam.b_inv(x), &modulus)? * spectral::func_calc(|x| fam.b(x), &modulus)?;
                let supp = spectral::support(&modulus)?;
                let mut ch = Check::new(&t.bs).input("h", &h);
                ch.bound("contraction", (opn(&cn) - 1.0).max(0.0), tol_for(1.0, t.n));
                ch.bound("support", opn(&(prod - supp.matrix())), tol_for(f64::from(fam.n()), t.n));
                Ok(ch)
            },
        },
        Property {
            name: "det_closed_form",
            description: "Delta(x) = |det x|^(1/n)",
            bound: "1e-10 relative",
            run: |t| {
                let x = t.element(ElementKind::M);
                let d = fk_det(&x)?.value;
                let r = det_root(&x)?.value;
                let mut ch = Check::new(&t.bs).input("x", &x);
                if d == 0.0 {
                    ch.require("singular draw", false);
                } else {
                    ch.bound("closed form", (d - r).abs() / d, 1e-10);
                }
                Ok(ch)
            },
        },
        Property {
            name: "det_multiplicative",
            description: "Delta(xy) = Delta(x) Delta(y)",
            bound: "1e-8 relative",
            run: |t| {
                let x = t.invertible_a();
                let bs = t.bs.clone();
                let y = invertible_in(&bs, ElementKind::M, &mut t.rng);
                let (dx, dy) = (fk_det(&x)?.value, fk_det(&y)?.value);
                let dxy = fk_det(&(&x * &y))?.value;
                let mut ch = Check::new(&t.bs).input("x", &x).input("y", &y);
                ch.bound("multiplicative", (dxy - dx * dy).abs() / (dx * dy), 1e-8);
                Ok(ch)
            },
        },
        Property {
            name: "det_le_trace",
            description: "Delta(x) <= tau(x) for x >= 0",
            bound: "1e-12",
            run: |t| {
                let x = t.element(ElementKind::Positive);
                let mut ch = Check::new(&t.bs).input("x", &x);
                ch.bound("amgm", (fk_det(&x)?.value - tau(&x)?.re).max(0.0), 1e-12);
                Ok(ch)
            },
        },
        Property {
            name: "det_triangular_phi",
            description: "Delta(h) = Delta(phi(h)) for h in A",
            bound: "1e-10 relative",
            run: |t| {
                let h = t.invertible_a();
                let dh = fk_det(&h)?.value;
                let dp = fk_det(&phi(&h, &t.bs)?)?.value;
                let mut ch = Check::new(&t.bs).input("h", &h);
                ch.bound("triangular", (dh - dp).abs() / dh, 1e-10);
                Ok(ch)
            },
        },
        Property {
            name: "det_unitary_invariance",
            description: "Delta(u x) = Delta(x) for unitary u",
            bound: "1e-10 relative",
            run: |t| {
                let x = t.invertible_a();
                let u = t.unitary();
                let dx = fk_det(&x)?.value;
                let mut ch = Check::new(&t.bs).input("x", &x).input("u", &u);
                ch.bound("unitary", (fk_det(&(&u * &x))?.value - dx).abs() / dx, 1e-10);
                Ok(ch)
            },
        },
        Property {
            name: "det_inverse_identity",
            description: "Delta(k) Delta(k^-1) = 1",
            bound: "1e-8 relative",
            run: |t| {
                let k = t.invertible_a();
                let kinv = linalg::inverse(&k)?;
                let mut ch = Check::new(&t.bs).input("k", &k);
                ch.bound("inverse", (fk_det(&k)?.value * fk_det(&kinv)?.value - 1.0).abs(), 1e-8);
                Ok(ch)
            },
        },
        Property {
            name: "near_singular_stratum",
            description: "closed-form determinant, invertibility and inner-outer reconstruction at condition ~1e6",
            bound: "1e-8 relative",
            run: |t| {
                let mut h = t.invertible_a();
                let k = t.rng.random_range(0..t.bs.num_blocks());
                let scale = opn(&h) / NEAR_SINGULAR_CONDITION;
                for i in t.bs.block_range(k) {
                    for j in 0..t.n {
                        h[(i, j)] *= scale;
                    }
                }
                let mut ch = Check::new(&t.bs).input("h", &h);
                let d = fk_det(&h)?.value;
                ch.require("invertible", linalg::is_invertible(&h));
                ch.bound("closed form", (d - det_root(&h)?.value).abs() / d, 1e-8);
                ch.require("delta_min injective", delta_min(&h, &t.bs, PNorm::TWO)?.injective());
                let r = inner_outer(&h, &t.bs)?;
                ch.bound("reconstruction", r.residual / opn(&h), 1e-8);
                Ok(ch)
            },
        },
        Property {
            name: "szego_matches_det",
            description: "inf |h(a + d)|_2 over a in A0, d in D with Delta(d) = 1 equals Delta(h); n <= 4",
            bound: "1e-3 relative",
            run: |t| {
                if t.n > 4 {
                    return Ok(Check::skip(&t.bs));
                }
                let h = t.invertible_a();
                let r = szego_infimum(&h, &t.bs, PNorm::TWO, &t.opts)?;
                let dh = fk_det(&h)?.value;
                let mut ch = Check::new(&t.bs).input("h", &h);
                ch.bound("szego", (r.value - dh).abs() / dh, 1e-3);
                Ok(ch)
            },
        },
        Property {
            name: "szego_scaling",
            description: "Delta(h) <= szego(h) <= |h|_2 and szego(c h) = |c| szego(h); n <= 4",
            bound: "1e-3 relative",
            run: |t| {
                if t.n > 4 {
                    return Ok(Check::skip(&t.bs));
                }
                let h = t.invertible_a();
                let z = t.complex_scalar();
                let v = szego_infimum(&h, &t.bs, PNorm::TWO, &t.opts)?.value;
                let vz = szego_infimum(&(&h * z), &t.bs, PNorm::TWO, &t.opts)?.value;
                let dh = fk_det(&h)?.value;
                let mut ch = Check::new(&t.bs).input("h", &h);
                ch.bound("lower bound", (dh - v).max(0.0) / dh, 1e-10);
                ch.bound("upper bound", (v - p_norm(&h, PNorm::TWO)).max(0.0) / dh, 1e-10);
                ch.bound("scaling", (vz - z.norm() * v).abs() / (z.norm() * v), 1e-3);
                Ok(ch)
            },
        },
        Property {
            name: "delta1_bounds_and_invariance",
            description: "delta^1(h) >= |phi(h)|_p, delta^e(c h) = |c| delta^e(h), delta^1(v h) = delta^1(h) for unitary v in D",
            bound: "1e-12 lower bound, 1e-8 relative identities",
            run: |t| {
                let h = if t.rng.random_bool(0.5) { t.element(ElementKind::A) } else { t.singular_a() };
                let z = t.complex_scalar();
                let bs = t.bs.clone();
                let v = bs.map_diagonal_blocks(&linalg::identity(t.n), |b| {
                    Ok(crate::algebra::random_unitary(b.nrows(), &mut t.rng))
                })?;
                let one = Projection::identity(t.n);
                let mut ch = Check::new(&t.bs).input("h", &h).input("v", &v);
                let mut mask: Vec<f64> = (0..t.n).map(|_| f64::from(u8::from(t.rng.random_bool(0.5)))).collect();
                mask[t.rng.random_range(0..t.n)] = 1.0;
                let e = Projection::new(linalg::diag_real(&mask))?;
                let mut opts = t.opts;
                opts.restarts = opts.restarts.min(1);
                for &p in &t.p_values {
                    let d1 = dist_to_right_ideal(&h, &bs, &one, p, &opts)?.value;
                    let lower = p_norm(&phi(&h, &bs)?, p);
                    ch.bound(&format!("lower bound p = {p}"), (lower - d1).max(0.0), 1e-12 + 1e-9 * lower);
                    if p.is_two() {
                        let dz = dist_to_right_ideal(&(&h * z), &bs, &e, p, &opts)?.value;
                        let de = dist_to_right_ideal(&h, &bs, &e, p, &opts)?.value;
                        ch.bound("scaling", (dz - z.norm() * de).abs() / (z.norm() * de).max(1e-300), 1e-8);
                        let dv = dist_to_right_ideal(&(&v * &h), &bs, &one, p, &opts)?.value;
                        ch.bound("diagonal unitary", (dv - d1).abs() / d1.max(1e-300), 1e-8);
                    }
                }
                Ok(ch)
            },
        },
        Property {
            name: "uniform_seq_bounds",
            description: "a_n in A, |h a_n|_inf <= 1, |a_n*| = k_n, Delta(h a_n) <= 1 at every step",
            bound: "1 + 1e-10",
            run: |t| {
                let h = t.invertible_a();
                let steps = uniform_outer_sequence(&h, &t.bs, &default_n_values(&h), PNorm::TWO)?;
                let mut ch = Check::new(&t.bs).input("h", &h);
                for s in &steps {
                    ch.require(&format!("a_{} in A", s.n), membership(&s.a_n, &t.bs, Subalgebra::A)?);
                    ch.bound(&format!("|h a_{}|", s.n), (s.op_norm_ha - 1.0).max(0.0), 1e-10);
                    ch.bound(&format!("Delta(h a_{})", s.n), (s.det_ha - 1.0).max(0.0), 1e-10);
                    let modulus = spectral::abs(&s.a_n.adjoint())?;
                    let k = opn(&s.k_n);
                    ch.bound(&format!("|a_{}*| = k_n", s.n), opn(&(modulus - &s.k_n)) / k, 1e-9);
                }
                Ok(ch)
            },
        },
        Property {
            name: "uniform_seq_det_monotone",
            description: "Delta(h a_n) nondecreasing in n and within 1e-8 of 1 at the end",
            bound: "1e-8",
            run: |t| {
                let h = t.invertible_a();
                let steps = uniform_outer_sequence(&h, &t.bs, &default_n_values(&h), PNorm::TWO)?;
                let mut ch = Check::new(&t.bs).input("h", &h);
                for w in steps.windows(2) {
                    ch.bound(&format!("monotone at n = {}", w[1].n), (w[0].det_ha - w[1].det_ha).max(0.0), 1e-8);
                }
                let last = steps.last().expect("nonempty schedule");
                ch.bound("limit", (1.0 - last.det_ha).abs(), 1e-8);
                Ok(ch)
            },
        },
        Property {
            name: "uniform_seq_l2_bound",
            description: "|1 - h a_n|_2^2 <= 2 (1 - Re tau(h a_n))",
            bound: "1e-10",
            run: |t| {
                let h = t.invertible_a();
                let steps = uniform_outer_sequence(&h, &t.bs, &default_n_values(&h), PNorm::TWO)?;
                let mut ch = Check::new(&t.bs).input("h", &h);
                for s in &steps {
                    let excess = s.l2_dist_to_one.powi(2) - 2.0 * (1.0 - s.re_trace_ha);
                    ch.bound(&format!("n = {}", s.n), excess.max(0.0), 1e-10);
                }
                Ok(ch)
            },
        },
        Property {
            name: "uniform_seq_inverse_limit",
            description: "|a_n^-1 - h|_p and |h a_n - 1|_p vanish once n >= 2 / sigma_min(h); uniform witness holds",
            bound: "1e-6",
            run: |t| {
                let h = t.invertible_a();
                let smin = *linalg::singular_values(&h).last().expect("nonempty");
                let n_big = (2.0 / smin).ceil().max(1.0) as u32;
                let mut ch = Check::new(&t.bs).input("h", &h);
                for &p in &t.p_values {
                    let steps = uniform_outer_sequence(&h, &t.bs, &[n_big], p)?;
                    ch.bound(&format!("inverse p = {p}"), steps[0].inverse_gap / opn(&h), 1e-6);
                    ch.bound(&format!("to one p = {p}"), steps[0].p_dist_to_one, 1e-6);
                    let (ok, _) = uniform_outer_witness(&h, &t.bs, p)?;
                    ch.require(&format!("witness p = {p}"), ok);
                }
                Ok(ch)
            },
        },
        Property {
            name: "louter_equivalence_invertible",
            description: "invertible f: delta_min > rank tol, inner_outer succeeds with |uh - f| <= 1e-10 n |f|, u unitary, h outer",
            bound: "1e-10 n |f|",
            run: |t| {
                let bs = t.bs.clone();
                let f = invertible_in(&bs, ElementKind::M, &mut t.rng);
                louter_check(&f, &bs, t, true)
            },
        },
        Property {
            name: "louter_equivalence_singular",
            description: "rank-deficient f: delta_min <= rank tol, inner_outer fails, witness d has |residual(f d)| <= 1e-8",
            bound: "1e-8",
            run: |t| {
                let bs = t.bs.clone();
                let g = t.element(ElementKind::M);
                let k = t.rng.random_range(0..bs.num_blocks());
                let f = if t.rng.random_bool(0.5) {
                    kill_direction_in_block(&g, &bs, k, &mut t.rng)
                } else {
                    // rank deficiency in a direction spread over all blocks
                    let mut v = nalgebra::DVector::<C64>::from_fn(t.n, |_, _| crate::algebra::gaussian(&mut t.rng));
                    v.normalize_mut();
                    &g * (linalg::identity(t.n) - &v * v.adjoint())
                };
                louter_check(&f, &bs, t, false)
            },
        },
        Property {
            name: "houterp_outer",
            description: "outer h: phi(h) invertible and delta^1(h) = |phi(h)|_p",
            bound: "1e-7 |h|_p",
            run: |t| {
                let h = t.invertible_a();
                let mut ch = Check::new(&t.bs).input("h", &h);
                for &p in &t.p_values {
                    let v = is_outer_with(&h, &t.bs, p, &t.verdict_opts())?;
                    let c = v.criteria["houterp"];
                    ch.require(&format!("outer p = {p}"), v.outer);
                    ch.require(&format!("criteria agree p = {p}"), v.disagreements().is_empty());
                    ch.bound(&format!("gap p = {p}"), c.residual / p_norm(&h, p), 1e-7);
                }
                Ok(ch)
            },
        },
        Property {
            name: "houterp_non_outer",
            description: "singular phi(h): not outer, criterion fails, no criterion claims outerness",
            bound: "verdicts",
            run: |t| {
                let h = t.singular_a();
                let mut ch = Check::new(&t.bs).input("h", &h);
                for &p in &t.p_values {
                    let v = is_outer_with(&h, &t.bs, p, &t.verdict_opts())?;
                    ch.require(&format!("not outer p = {p}"), !v.outer);
                    ch.require(&format!("phi singular p = {p}"), !v.criteria["phi_outer"].holds);
                    ch.require(&format!("houterp fails p = {p}"), !v.criteria["houterp"].holds);
                    ch.require(&format!("criteria agree p = {p}"), v.disagreements().is_empty());
                }
                Ok(ch)
            },
        },
        Property {
            name: "finite_dim_collapse",
            description: "outer <=> strongly outer <=> uniform witness <=> delta_min > 0 <=> phi(h) invertible, for every p",
            bound: "verdicts",
            run: |t| {
                let h = if t.rng.random_bool(0.5) { t.invertible_a() } else { t.singular_a() };
                let mut ch = Check::new(&t.bs).input("h", &h);
                let outer = linalg::is_invertible(&h);
                ch.require("strongly outer", is_strongly_outer(&h, &t.bs)? == outer);
                ch.require("delta_min", delta_min(&h, &t.bs, PNorm::TWO)?.injective() == outer);
                ch.require("phi invertible", linalg::is_invertible(&phi(&h, &t.bs)?) == outer);
                for &p in &t.p_values {
                    let v = is_outer_with(&h, &t.bs, p, &t.verdict_opts())?;
                    ch.require(&format!("verdict p = {p}"), v.outer == outer && v.strongly_outer == outer);
                    ch.require(&format!("criteria agree p = {p}"), v.disagreements().is_empty());
                    ch.require(&format!("uniform witness p = {p}"), uniform_outer_witness(&h, &t.bs, p)?.0 == outer);
                }
                Ok(ch)
            },
        },
        Property {
            name: "mstk_rigidity",
            description: "|a h|_p = |h|_p for a contraction forces h = a* a h; strict contractions lose norm",
            bound: "1e-10 |h|, gap > 1e-12",
            run: |t| {
                let h = t.element(ElementKind::M);
                let n = t.n;
                let mut ch = Check::new(&t.bs).input("h", &h);
                let finite: Vec<PNorm> = t.p_values.iter().copied().filter(|p| !p.is_inf()).collect();
                // forced equality: a unitary, or a projection containing the range of h
                let u = t.unitary();
                let k = t.rng.random_range(1..n);
                let w = t.unitary();
                let proj = w.columns(0, k) * w.columns(0, k).adjoint();
                let hp = &proj * &h;
                for &p in &finite {
                    for (label, a, x) in [("unitary", &u, &h), ("projection", &proj, &hp)] {
                        let r = mstk_check(a, x, p)?;
                        ch.require(&format!("{label} norm equal p = {p}"), r.norm_equal);
                        ch.bound(&format!("{label} rigidity p = {p}"), r.rigidity_residual / opn(x), 1e-10);
                    }
                }
                // strict contraction: singular values in [0, 0.9]
                let v = t.unitary();
                let sig: Vec<f64> = (0..n).map(|_| t.rng.random_range(0.0..0.9)).collect();
                let a = &w * linalg::diag_real(&sig) * v.adjoint();
                let g = invertible_in(&BlockStructure::full(n), ElementKind::M, &mut t.rng);
                for &p in &finite {
                    let r = mstk_check(&a, &g, p)?;
                    ch.require(&format!("strict gap p = {p}"), r.norm_gap < -1e-12 && !r.norm_equal);
                    ch.require(&format!("consistent p = {p}"), r.consistent());
                }
                Ok(ch.input("a", &a).input("g", &g))
            },
        },
        Property {
            name: "onetwo_product_outer",
            description: "outer h1, h2 give an outer product h1 h2",
            bound: "verdicts",
            run: |t| {
                let h1 = t.invertible_a();
                let h2 = t.invertible_a();
                let v = is_outer_with(&(&h1 * &h2), &t.bs, PNorm::TWO, &t.opts)?;
                let mut ch = Check::new(&t.bs).input("h1", &h1).input("h2", &h2);
                ch.require("product outer", v.outer && v.disagreements().is_empty());
                Ok(ch)
            },
        },
        Property {
            name: "onetwo_factor_outer",
            description: "outer h = h1 h2 with h2 outer gives an outer h1",
            bound: "verdicts",
            run: |t| {
                let h = t.invertible_a();
                let h2 = t.invertible_a();
                let h1 = &h * linalg::inverse(&h2)?;
                let mut ch = Check::new(&t.bs).input("h", &h).input("h2", &h2);
                ch.require("h1 in A", membership(&h1, &t.bs, Subalgebra::A)?);
                let v = is_outer_with(&h1, &t.bs, PNorm::TWO, &t.opts)?;
                ch.require("factor outer", v.outer && v.disagreements().is_empty());
                Ok(ch)
            },
        },
        Property {
            name: "strongly_outer_approximants",
            description: "diagonally commuting outer h: h_n strongly outer, h_n -> h, |phi(h_n)|^2 = |phi(h)|^2 e_n + n^-2 (1 - e_n)",
            bound: "1e-10",
            run: |t| {
                let (h, bs) = if t.rng.random_bool(0.5) {
                    let bs = BlockStructure::full(t.n);
                    (invertible_in(&bs, ElementKind::M, &mut t.rng), bs)
                } else {
                    let bs = t.bs.clone();
                    let diag: Vec<C64> = (0..t.n).map(|_| t.complex_scalar() * 0.1).collect();
                    (CMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)), bs)
                };
                let mut ch = Check::new(&bs).input("h", &h);
                let Some(u) = diag_commuting_check(&h, &bs)? else {
                    ch.require("diagonally commuting", false);
                    return Ok(ch);
                };
                let approx = strongly_outer_approximants(&h, &bs, &u, &default_n_values(&h), PNorm::TWO)?;
                for a in &approx {
                    ch.require(&format!("strongly outer n = {}", a.n), is_strongly_outer(&a.h_n, &bs)?);
                    let defect = approximant_identity_defect(&h, &bs, a)?;
                    ch.bound(&format!("identity n = {}", a.n), defect / opn(&h).powi(2).max(1.0), 1e-10);
                }
                for w in approx.windows(2) {
                    ch.bound("distance nonincreasing", (w[1].distance - w[0].distance).max(0.0), 1e-12);
                }
                let last = approx.last().expect("nonempty schedule");
                ch.bound("limit", last.distance / opn(&h), 1e-12);
                Ok(ch)
            },
        },
        Property {
            name: "inner_outer_uniqueness",
            description: "f = u0 h0 with phi(h0) >= 0 is recovered exactly by inner_outer; Delta(f) = Delta(h) = Delta(phi(h))",
            bound: "1e-8 relative",
            run: |t| {
                let raw = t.invertible_a();
                let bs = t.bs.clone();
                let v = bs.map_diagonal_blocks(&raw, spectral::polar_unitary)?;
                let h0 = v.adjoint() * raw;
                let u0 = t.unitary();
                let f = &u0 * &h0;
                let r = inner_outer(&f, &bs)?;
                let mut ch = Check::new(&bs).input("h0", &h0).input("u0", &u0);
                ch.bound("h", opn(&(&r.h - &h0)) / opn(&h0), 1e-8);
                ch.bound("u", opn(&(&r.u - &u0)), 1e-8);
                let (df, dh, dp) = (fk_det(&f)?.value, fk_det(&r.h)?.value, fk_det(&phi(&r.h, &bs)?)?.value);
                ch.bound("Delta(f) = Delta(h)", (df - dh).abs() / df, 1e-8);
                ch.bound("Delta(h) = Delta(phi(h))", (dh - dp).abs() / dh, 1e-8);
                Ok(ch)
            },
        },
        Property {
            name: "riesz_szego_positive",
            description: "positive definite f: |h| = f with h outer",
            bound: "1e-9 n |f|",
            run: |t| {
                let f = t.element(ElementKind::positive_definite());
                let r = riesz_szego_positive(&f, &t.bs)?;
                let mut ch = Check::new(&t.bs).input("f", &f);
                let modulus = spectral::abs(&r.h)?;
                ch.bound("modulus", opn(&(modulus - &f)) / (t.n as f64 * opn(&f)), 1e-9);
                let v = is_outer_with(&r.h, &t.bs, PNorm::TWO, &t.opts)?;
                ch.require("h outer", v.outer && v.disagreements().is_empty());
                Ok(ch)
            },
        },
    ]
}

fn louter_check(f: &CMatrix, bs: &BlockStructure, t: &mut Trial, expect_injective: bool) -> Result<Check> {
    let n = t.n;
    let dm = delta_min(f, bs, PNorm::TWO)?;
    let mut ch = Check::new(bs).input("f", f);
    ch.require("expected branch", dm.injective() == expect_injective);
    match inner_outer(f, bs) {
        Ok(r) => {
            ch.require("inner_outer succeeds only when injective", dm.injective());
            ch.bound("reconstruction", r.residual / (n as f64 * opn(f)), 1e-10);
            ch.bound("unitarity", r.u_unitarity_defect, 1e-10);
            let v = is_outer_with(&r.h, bs, PNorm::TWO, &t.opts)?;
            ch.require("h outer", v.outer && v.disagreements().is_empty());
        }
        Err(Error::NotFactorizable { witness, .. }) => {
            ch.require("inner_outer fails only when not injective", !dm.injective());
            let res = residual_mod_f_a0(f, bs, &(f * &witness))?;
            ch.bound("witness residual", res.norm(), 1e-8);
            ch.require("witness in D", membership(&witness, bs, Subalgebra::D)?);
            ch.bound("witness normalized", (witness.norm() - 1.0).abs(), 1e-10);
        }
        Err(e) => return Err(e),
    }
    Ok(ch)
}

/// Brute-force Szegő infimum for `n = 2`, blocks `[1, 1]`: grid search over
/// `d = diag(t, 1/t)`, `a = [[0, s], [0, 0]]` with complex `s`, refined by
/// repeatedly shrinking the box around the best cell. Singular values of
/// the 2x2 triangular products are taken in closed form.
pub fn grid_oracle_szego(h: &CMatrix, bs: &BlockStructure, p: PNorm, density: usize) -> Result<f64> {
    if bs.block_sizes() != [1, 1] {
        return Err(Error::Unsupported("grid oracle handles n = 2 with blocks [1, 1] only".into()));
    }
    if !membership(h, bs, Subalgebra::A)? {
        return Err(Error::NotInSubalgebra("A"));
    }
    let (h11, h12, h22) = (h[(0, 0)], h[(0, 1)], h[(1, 1)]);
    if h11.norm() == 0.0 || h22.norm() == 0.0 {
        return Err(Error::Domain("grid oracle needs an invertible h".into()));
    }
    if density < 3 {
        return Err(Error::Domain("grid density must be at least 3".into()));
    }
    // h (d + a) = [[h11 t, h11 s + h12 / t], [0, h22 / t]]; with w = s t the
    // off-diagonal entry is (h11 w + h12) / t
    let value = |log_t: f64, wr: f64, wi: f64| -> f64 {
        let t = log_t.exp();
        let x = h11.norm() * t;
        let y = (h11 * c(wr, wi) + h12).norm() / t;
        let z = h22.norm() / t;
        let sum_sq = x * x + y * y + z * z;
        let prod = x * z;
        let disc = (sum_sq * sum_sq - 4.0 * prod * prod).max(0.0).sqrt();
        let s1 = ((sum_sq + disc) / 2.0).sqrt();
        let s2 = if s1 > 0.0 { prod / s1 } else { 0.0 };
        if p.is_inf() {
            s1
        } else {
            let q = p.value();
            ((s1.powf(q) + s2.powf(q)) / 2.0).powf(1.0 / q)
        }
    };
    let ratio = (h22.norm() / h11.norm()).ln().abs();
    let mut center = [0.0, 0.0, 0.0];
    let mut half = [ratio / 2.0 + 3.0, 2.0 * (h12.norm() / h11.norm() + 1.0), 2.0 * (h12.norm() / h11.norm() + 1.0)];
    let mut best = f64::INFINITY;
    let steps = density - 1;
    for _ in 0..60 {
        let mut best_pt = center;
        for i in 0..=steps {
            let a = center[0] - half[0] + 2.0 * half[0] * i as f64 / steps as f64;
            for j in 0..=steps {
                let b = center[1] - half[1] + 2.0 * half[1] * j as f64 / steps as f64;
                for k in 0..=steps {
                    let cc = center[2] - half[2] + 2.0 * half[2] * k as f64 / steps as f64;
                    let v = value(a, b, cc);
                    if v < best {
                        best = v;
                        best_pt = [a, b, cc];
                    }
                }
            }
        }
        center = best_pt;
        // keep two cells on either side of the incumbent
        for hw in &mut half {
            *hw *= (4.0 / steps as f64).min(0.7);
        }
    }
    Ok(best)
}
