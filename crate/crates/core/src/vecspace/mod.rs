//! Parameter-space linear algebra.
//!
//! All reductions sum strictly left to right unless a caller opts into
//! [`Summation::Pairwise`]. Results are therefore reproducible bit for bit
//! across runs and thread counts.

mod eigen;
mod format;
mod paramvec;
mod rng;

pub use eigen::{dense_eigh, max_asymmetry, tridiag_eigh, Eigh, TridiagonalMatrix};
pub use format::{read_param_vector, write_param_vector, ParamFile, FORMAT_VERSION};
pub use paramvec::{
    dot, dot_slices, gram_schmidt_residual, gram_schmidt_residual_counted, max_abs_inner,
    orthonormalize, ParamVector, Summation,
};
pub use rng::{derive_seed, Rng};
