//! Sparse and small dense linear algebra used by the discretization.

mod banded;
mod cg;
mod csr;
mod dense;
mod eigen;
mod saddle;

pub use banded::{BandedCholesky, BandedMatrix};
pub use cg::{cg_solve, cg_solve_operator, CgOptions, CgOutcome, LinearOperator};
pub(crate) use cg::dot;
pub use csr::SparseMatrix;
pub use dense::{spd_solve_in_place, PivotedCholesky};
pub use eigen::{lambda_max, EigenEstimate, EigenOptions, UNCONVERGED_INFLATION};
pub use saddle::{saddle_solve, SaddleMethod, SaddleSolution, SaddleSystem, SADDLE_TOL};
pub(crate) use saddle::{schur_direct, verify as verify_saddle};
