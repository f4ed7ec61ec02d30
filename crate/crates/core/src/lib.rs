//! Outer elements of Hardy spaces over block upper-triangular matrix algebras.
//!
//! The ambient algebra is `M_n(C)` with the normalized trace `tau(x) = tr(x)/n`.
//! A [`BlockStructure`] partitions the coordinates into consecutive blocks; the
//! block-diagonal matrices form the diagonal algebra `D`, the block
//! upper-triangular matrices form `A`, and `A0` is the kernel of the
//! conditional expectation [`phi`] inside `A`.
//!
//! On top of that model the crate provides
//! * spectral tools: modulus, polar decomposition, functional calculus and
//!   spectral distribution measures ([`spectral`]);
//! * the Fuglede-Kadison determinant ([`determinant`]);
//! * normalized Schatten norms, localized seminorms, distances to right
//!   ideals and the Szego infimum ([`metrics`]);
//! * inner-outer, positive Riesz-Szego and uniform-outer constructions
//!   ([`factor`]);
//! * outerness predicates and theorem criteria ([`outerness`]);
//! * a seeded randomized verification harness ([`harness`]).

pub mod algebra;
pub mod determinant;
pub mod error;
pub mod factor;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod outerness;
pub mod spectral;
pub mod tol;

pub use algebra::{basis, membership, phi, random_element, tau, BlockStructure, ElementKind, Subalgebra};
pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use metrics::PNorm;
pub use spectral::Projection;
