//! Spectral differential operators on the periodic grid: Fourier multiplier
//! symbols, composable operator handles with dense/iterative resolvent
//! solving, the canonical smoothing family, Hodge–Dirac operators, H∞
//! functional calculus (explicit and contour), ellipticity normalization
//! with Neumann-series resolvents, square roots of −div A∇, and principal
//! parts with off-diagonal decay profiles.

mod calculus;
mod elliptic;
mod handle;
mod hodge;
mod poisson;
mod principal;
mod sqrt;
mod symbol;

pub use calculus::{contour_calculus, functional_calculus_pi, ContourReport, ContourSpec};
pub use elliptic::{ellipticity_normalize, neumann_resolvent, EllipticNormalization};
pub use handle::{
    apply, assemble_dense, BlockOp, MatrixField, OperatorHandle, ResolventStyle, SolverOpts,
};
pub use hodge::{hodge_dirac, resolvents, HodgeDiracConfig, HodgeDiracOperators, ResolventSet};
pub use poisson::{poisson_family, PoissonFamily};
pub use principal::{off_diagonal_profile, principal_part, quadratic_estimate, OffDiagonalRow};
pub use sqrt::{dense_sqrt_matrix, l_operator, sqrt_l, QuadratureOpts, SqrtMethod};
pub use symbol::{bin_frequency, wavenumber_sq, FirstOrderOperator, MultiplierSymbol};
