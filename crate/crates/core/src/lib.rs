//! Finite-dimensional operator systems as executable decision procedures.

pub mod error;
pub mod exact;
pub mod linalg;
pub mod lp;
pub mod scalar;
pub mod sdp;
pub mod opsys;
pub mod cpmaps;
pub mod cones;
pub mod riesz;

pub use error::{Error, Result};

/// Hermitian matrices in double precision, the working type of every solver.
pub type Herm = linalg::HermMatrix<f64>;
pub type Herm32 = linalg::HermMatrix<f32>;
/// Exact scalar of the commutative path.
pub type Rational = num_rational::BigRational;
pub type RationalDiag = linalg::RationalVector<Rational>;
