//! Indefinite Sturm-Liouville problems with one eigenparameter-dependent
//! boundary condition.
//!
//! The problem is `-(p f')' + q f = λ r f` on `[-1, 1]` with `x r(x) > 0`,
//! subject to `L b(f) = 0` and `M b(f) = λ N b(f)`, where
//! `b(f) = (f(-1), f(1), (pf')(-1), (pf')(1))`.
//!
//! Modules:
//! - [`bc_algebra`]: validation and classification of the boundary rows.
//! - [`coefficients`]: order models for `p`, `q`, `r` and smooth connections.
//! - [`grid`]: composite grids split at the turning point, grid functions.
//! - [`kernel_ops`]: cutoffs, transfer operators and the positive operators `W`.
//! - [`spectral`]: shooting, characteristic determinant, eigenvalue search, root vectors.
//! - [`fem`]: an independent finite element discretization of the same pencil.
//! - [`riesz_diag`]: Krein/Hilbert inner products and finite-section Gram diagnostics.

pub mod bc_algebra;
pub mod coefficients;
pub mod fem;
pub mod grid;
pub mod kernel_ops;
pub mod linalg;
pub mod riesz_diag;
pub mod spectral;

pub use nalgebra::Complex;

/// Complex double, the scalar type used throughout.
pub type C64 = Complex<f64>;

pub use bc_algebra::{
    BcError, BoundaryTriple, ClassificationReport, EchelonSplit, FormDomainCase,
    RequiredCondition, Row, Theorem,
};
pub use coefficients::{
    Coefficient, CoefficientError, CoefficientModel, ConditionReport, Piece, Point, Side,
    SmoothConnection,
};
pub use fem::FemError;
pub use grid::{Grid, GridFunction, KreinVector, Rule};
pub use kernel_ops::{KernelError, OperatorRep, VerificationReport};
pub use riesz_diag::{DiagError, GramAnalysis, OrthogonalityReport};
pub use spectral::{FundamentalData, SpectralDatum, SpectralError};
