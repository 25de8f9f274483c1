//! Matrix-free spectral element Poisson solver with an algorithm-level
//! I/O and flop ledger, plus the analytic cost model it is audited against.
//!
//! Numerical types are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod error;
pub mod field;
pub mod gather;
pub mod iomodel;
pub mod ledger;
pub mod mesh;
pub mod operator;
pub mod scalar;
pub mod solver;

pub use basis::{build_basis, SpectralBasis};
pub use error::{Result, SemError};
pub use field::Field;
pub use gather::{build_gsmap, dot3, gather_scatter, mask_dirichlet, GsMap};
pub use ledger::{Kernel, Ledger, Traffic, WordCount};
pub use mesh::{box_mesh, build_dofmap, AffineMap, BoxBounds, DofMap, HexMesh};
pub use operator::{
    apply_local_remat, apply_local_stored, geometric_factors, GeomFactors, Variant,
};
pub use scalar::Real;
pub use solver::{cg_solve, cg_solve_observed, CgOptions, SemSystem, SolveStats};

pub type Field32 = Field<f32>;
pub type Field64 = Field<f64>;
pub type Basis32 = SpectralBasis<f32>;
pub type Basis64 = SpectralBasis<f64>;
pub type GeomFactors32 = GeomFactors<f32>;
pub type GeomFactors64 = GeomFactors<f64>;
pub type System32 = SemSystem<f32>;
pub type System64 = SemSystem<f64>;
